//! Binary checkpoints.
//!
//! Layout, all integers u32 little-endian:
//!
//! ```text
//! "TNND" version kind L filters n_networks has_site_variables
//! per network: n_layers, then per layer a tag and its geometry
//! f32 payload: every parameter in declaration order
//! f32 batch-norm running statistics (mean then variance, per layer)
//! site variables: count + f32 values (if present)
//! config text: byte length + UTF-8
//! ```

use std::fs;
use std::path::Path;

use tensornet::{BatchNorm, Conv, Dense, Layer, LeakyRelu, Param, Sequential, Sigmoid};

use crate::model::DecoderModel;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNND";
pub const VERSION: u32 = 1;

const KIND_BP_NETWORK: u32 = 0;
const KIND_DECODER: u32 = 1;

const TAG_CONV: u32 = 1;
const TAG_BATCHNORM: u32 = 2;
const TAG_DENSE: u32 = 3;
const TAG_LEAKY: u32 = 4;
const TAG_SIGMOID: u32 = 5;

#[derive(Debug, Clone)]
pub enum Checkpoint {
    /// A single pretrained belief-propagation network.
    BpNetwork { size: usize, filters: usize, network: Sequential<f32>, config: String },
    Decoder { model: DecoderModel, config: String },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f32s(&mut self, out: &mut [f32]) -> Result<()> {
        let bytes = self.take(4 * out.len())?;
        for (o, c) in out.iter_mut().zip(bytes.chunks_exact(4)) {
            *o = f32::from_le_bytes(c.try_into().unwrap());
        }
        Ok(())
    }
}

fn write_descriptors(w: &mut Writer, net: &Sequential<f32>) {
    w.u32(net.layers.len());
    for layer in &net.layers {
        match layer {
            Layer::Conv(c) => {
                w.u32(TAG_CONV as usize);
                for v in [c.kernel, c.stride, c.in_channels, c.out_channels] {
                    w.u32(v);
                }
            }
            Layer::BatchNorm(b) => {
                w.u32(TAG_BATCHNORM as usize);
                w.u32(b.channels);
            }
            Layer::Dense(d) => {
                w.u32(TAG_DENSE as usize);
                w.u32(d.inputs);
                w.u32(d.outputs);
            }
            Layer::LeakyRelu(l) => {
                w.u32(TAG_LEAKY as usize);
                w.f32s(&[l.slope as f32]);
            }
            Layer::Sigmoid(_) => w.u32(TAG_SIGMOID as usize),
        }
    }
}

fn read_descriptors(r: &mut Reader) -> Result<Sequential<f32>> {
    let n = r.u32()?;
    let mut layers = Vec::with_capacity(n);
    // placeholder weights from a fixed stream; the payload overwrites them
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    for _ in 0..n {
        let layer = match r.u32()? as u32 {
            TAG_CONV => {
                let (k, s, cin, cout) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
                if !(1..=3).contains(&k) || !(1..=2).contains(&s) {
                    return Err(Error::Checkpoint(format!("invalid conv geometry {k}x{k}/{s}")));
                }
                Layer::Conv(Conv::new(k, s, cin, cout, &mut rng))
            }
            TAG_BATCHNORM => Layer::BatchNorm(BatchNorm::new(r.u32()?)),
            TAG_DENSE => {
                let (i, o) = (r.u32()?, r.u32()?);
                Layer::Dense(Dense::new(i, o, &mut rng))
            }
            TAG_LEAKY => {
                let mut s = [0.0f32];
                r.f32s(&mut s)?;
                Layer::LeakyRelu(LeakyRelu::new(s[0] as f64))
            }
            TAG_SIGMOID => Layer::Sigmoid(Sigmoid::new()),
            t => return Err(Error::Checkpoint(format!("unknown layer tag {t}"))),
        };
        layers.push(layer);
    }
    Ok(Sequential::new(layers))
}

fn batchnorms(net: &Sequential<f32>) -> impl Iterator<Item = &BatchNorm<f32>> {
    net.layers.iter().filter_map(|l| if let Layer::BatchNorm(b) = l { Some(b) } else { None })
}

fn batchnorms_mut(net: &mut Sequential<f32>) -> impl Iterator<Item = &mut BatchNorm<f32>> {
    net.layers.iter_mut().filter_map(|l| if let Layer::BatchNorm(b) = l { Some(b) } else { None })
}

fn encode(kind: u32, size: usize, filters: usize, nets: &[&Sequential<f32>], site: Option<&Param<f32>>, config: &str) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    w.u32(kind as usize);
    w.u32(size);
    w.u32(filters);
    w.u32(nets.len());
    w.u32(site.is_some() as usize);
    for net in nets {
        write_descriptors(&mut w, net);
    }
    for net in nets {
        for p in net.params() {
            w.f32s(&p.value);
        }
    }
    for net in nets {
        for bn in batchnorms(net) {
            w.f32s(&bn.running_mean);
            w.f32s(&bn.running_var);
        }
    }
    if let Some(p) = site {
        w.u32(p.len());
        w.f32s(&p.value);
    }
    w.u32(config.len());
    w.0.extend_from_slice(config.as_bytes());
    w.0
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Checkpoint::BpNetwork { size, filters, network, config } => {
                encode(KIND_BP_NETWORK, *size, *filters, &[network], None, config)
            }
            Checkpoint::Decoder { model, config } => {
                let mut nets: Vec<&Sequential<f32>> = model.blocks.iter().collect();
                nets.push(&model.head);
                encode(KIND_DECODER, model.size, model.filters, &nets, model.site_log_odds.as_ref(), config)
            }
        }
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = r.u32()? as u32;
        let size = r.u32()?;
        let filters = r.u32()?;
        let n_nets = r.u32()?;
        let has_site = r.u32()? == 1;
        let mut nets = Vec::with_capacity(n_nets);
        for _ in 0..n_nets {
            nets.push(read_descriptors(&mut r)?);
        }
        for net in &mut nets {
            for p in net.params_mut() {
                r.f32s(&mut p.value)?;
            }
        }
        for net in &mut nets {
            for bn in batchnorms_mut(net) {
                r.f32s(&mut bn.running_mean)?;
                r.f32s(&mut bn.running_var)?;
            }
        }
        let site = if has_site {
            let mut v = vec![0.0f32; r.u32()?];
            r.f32s(&mut v)?;
            Some(Param::new(v))
        } else {
            None
        };
        let len = r.u32()?;
        let config = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        match kind {
            KIND_BP_NETWORK if n_nets == 1 => {
                Ok(Checkpoint::BpNetwork { size, filters, network: nets.pop().unwrap(), config })
            }
            KIND_DECODER if n_nets >= 2 => {
                let head = nets.pop().unwrap();
                if nets.len() != DecoderModel::block_count(size)? {
                    return Err(Error::Checkpoint("block count does not match L".into()));
                }
                let model = DecoderModel { size, filters, blocks: nets, head, site_log_odds: site };
                Ok(Checkpoint::Decoder { model, config })
            }
            _ => Err(Error::Checkpoint(format!("unknown kind {kind} with {n_nets} networks"))),
        }
    }

    pub fn config_text(&self) -> &str {
        match self {
            Checkpoint::BpNetwork { config, .. } | Checkpoint::Decoder { config, .. } => config,
        }
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
