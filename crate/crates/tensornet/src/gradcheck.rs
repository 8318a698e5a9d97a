use rand::Rng;

use crate::{Loss, Mode, Result, Sequential, Tensor};

/// Finite-difference step.
pub const STEP: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero gradients
/// from blowing up the ratio.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn loss_of(net: &mut Sequential<f64>, input: &Tensor<f64>, targets: &[f64], loss: Loss, mode: Mode) -> Result<f64> {
    let y = net.forward(input, mode)?;
    Ok(loss.eval(y.data(), targets).0)
}

/// Largest relative error between backpropagated parameter gradients and
/// central finite differences, over `samples` randomly drawn parameter
/// entries (every entry when the network has fewer).
pub fn grad_check<R: Rng + ?Sized>(
    net: &mut Sequential<f64>,
    input: &Tensor<f64>,
    targets: &[f64],
    loss: Loss,
    mode: Mode,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    net.zero_grad();
    let y = net.forward(input, mode)?;
    let (_, g) = loss.eval(y.data(), targets);
    net.backward(&Tensor::new(y.shape().to_vec(), g)?)?;

    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let locate = |mut flat: usize| {
        for (k, &s) in sizes.iter().enumerate() {
            if flat < s {
                return (k, flat);
            }
            flat -= s;
        }
        unreachable!()
    };
    let picks: Vec<usize> =
        if total <= samples { (0..total).collect() } else { (0..samples).map(|_| rng.gen_range(0..total)).collect() };
    let analytic: Vec<f64> = picks
        .iter()
        .map(|&f| {
            let (k, i) = locate(f);
            net.params()[k].grad[i]
        })
        .collect();

    let mut worst = 0.0f64;
    for (&f, &a) in picks.iter().zip(&analytic) {
        let (k, i) = locate(f);
        let original = net.params()[k].value[i];
        net.params_mut()[k].value[i] = original + STEP;
        let up = loss_of(net, input, targets, loss, mode)?;
        net.params_mut()[k].value[i] = original - STEP;
        let down = loss_of(net, input, targets, loss, mode)?;
        net.params_mut()[k].value[i] = original;
        worst = worst.max(relative_error(a, (up - down) / (2.0 * STEP)));
    }
    Ok(worst)
}

/// Largest relative error of the input gradient against central finite
/// differences on every input entry.
pub fn input_grad_check(
    net: &mut Sequential<f64>,
    input: &Tensor<f64>,
    targets: &[f64],
    loss: Loss,
    mode: Mode,
) -> Result<f64> {
    let y = net.forward(input, mode)?;
    let (_, g) = loss.eval(y.data(), targets);
    let dx = net.backward(&Tensor::new(y.shape().to_vec(), g)?)?;
    let mut worst = 0.0f64;
    for i in 0..input.len() {
        let mut x = input.clone();
        x.data_mut()[i] += STEP;
        let up = loss_of(net, &x, targets, loss, mode)?;
        x.data_mut()[i] -= 2.0 * STEP;
        let down = loss_of(net, &x, targets, loss, mode)?;
        worst = worst.max(relative_error(dx.data()[i], (up - down) / (2.0 * STEP)));
    }
    Ok(worst)
}
