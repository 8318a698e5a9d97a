use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use neural_decoder::data::{gen_stage0_dataset, gen_supervised_dataset, half_noisy_rates, load_stage0, save_stage0, supervised_to_bytes};
use neural_decoder::train::model_from_pretrained;
use neural_decoder::{
    calibrate_site_rates, load_checkpoint, save_checkpoint, train_dense, train_global, train_stage0, Checkpoint, TrainConfig,
    TrainLog,
};
use tensornet::Sequential;
use toric_bench::csv::to_csv;
use toric_bench::spec::{DecoderId, ExperimentSpec, Noise};
use toric_bench::{crossing, Error, Result};
use toric_core::{ErrorRates, Lattice};

#[derive(Parser)]
#[command(version, about = "Toric-code decoders: training, evaluation and comparison")]
struct Cli {
    /// `key = value` file with training and experiment settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (CSV, checkpoint or dataset).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input checkpoint.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Write 0 in the seconds column so CSV output is reproducible byte for byte.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleKind {
    Stage0,
    Supervised,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    #[value(name = "0")]
    Zero,
    Dense,
    Global,
    Calibrate,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file.
    Sample {
        #[arg(value_enum, default_value = "stage0")]
        kind: SampleKind,
        /// Samples (defaults to stage0_samples).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run one training stage.
    Train {
        #[arg(value_enum)]
        stage: Stage,
        /// Pretrained BP network, needed by calibration.
        #[arg(long)]
        pretrained: Option<PathBuf>,
        /// Stage-0 dataset to reuse instead of generating one.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Training log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Accuracy of each configured decoder.
    Eval,
    /// Paired comparison of several decoders.
    Compare,
    /// Accuracy against p for several sizes, with crossing estimates.
    Threshold,
    /// Exact maximum-likelihood accuracy (L <= 4).
    Oracle,
}

fn load_config(cli: &Cli) -> Result<(TrainConfig, ExperimentSpec)> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let (mut cfg, rest) = TrainConfig::parse_lenient(&text)?;
    let mut spec = ExperimentSpec::from_pairs(&rest, true)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
        spec.seed = s;
    }
    if let Some(c) = &cli.checkpoint {
        spec.checkpoints = vec![c.clone()];
    }
    Ok((cfg, spec))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn bp_network(path: &Path) -> Result<Sequential<f32>> {
    match load_checkpoint(path)? {
        Checkpoint::BpNetwork { network, .. } => Ok(network),
        Checkpoint::Decoder { .. } => Err(Error::Config(format!("{} holds a decoder, expected a BP network", path.display()))),
    }
}

fn decoder(path: &Path) -> Result<neural_decoder::DecoderModel> {
    match load_checkpoint(path)? {
        Checkpoint::Decoder { model, .. } => Ok(model),
        Checkpoint::BpNetwork { .. } => Err(Error::Config(format!("{} holds a BP network, expected a decoder", path.display()))),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn train(cli: &Cli, stage: Stage, pretrained: &Option<PathBuf>, dataset: &Option<PathBuf>, log_path: &Option<PathBuf>) -> Result<()> {
    let (cfg, spec) = load_config(cli)?;
    let out = required(&cli.out, "out")?;
    let mut log = TrainLog::new();
    let config = cfg.to_text();
    let ckpt = match stage {
        Stage::Zero => {
            let data = match dataset {
                Some(p) => load_stage0(p)?,
                None => gen_stage0_dataset(cfg.stage0_size, cfg.stage0_samples, cfg.stage0_k_min, cfg.stage0_k_max, cfg.bp_rounds, cfg.seed)?,
            };
            let r = train_stage0(&cfg, &data, &mut log)?;
            println!(
                "validation loss {:.6} -> {:.6} ({:.1}x), sign agreement {:.4}",
                r.initial_val_loss,
                r.final_val_loss,
                r.initial_val_loss / r.final_val_loss,
                r.sign_agreement
            );
            Checkpoint::BpNetwork { size: data.size, filters: cfg.filters, network: r.network, config }
        }
        Stage::Dense => {
            let net = bp_network(required(&cli.checkpoint, "checkpoint")?)?;
            let mut model = model_from_pretrained(&cfg, &net)?;
            train_dense(&mut model, &cfg, &mut log)?;
            Checkpoint::Decoder { model, config }
        }
        Stage::Global => {
            let mut model = decoder(required(&cli.checkpoint, "checkpoint")?)?;
            train_global(&mut model, &cfg, &mut log)?;
            Checkpoint::Decoder { model, config }
        }
        Stage::Calibrate => {
            let mut model = decoder(required(&cli.checkpoint, "checkpoint")?)?;
            let net = bp_network(required(pretrained, "pretrained")?)?;
            let mask_seed = match spec.noise {
                Noise::HalfNoisy { mask_seed, .. } => mask_seed,
                Noise::Uniform => 1,
            };
            let rates = half_noisy_rates(Lattice::new(model.size)?, cfg.calib_rate, mask_seed)?;
            calibrate_site_rates(&mut model, &net, &rates, &cfg, &mut log)?;
            Checkpoint::Decoder { model, config }
        }
    };
    save_checkpoint(&ckpt, out)?;
    if let Some(p) = log_path {
        log.save(p)?;
    }
    info!("wrote {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Sample { kind, n } => {
            let (cfg, _) = load_config(cli)?;
            let out = required(&cli.out, "out")?;
            let n = n.unwrap_or(cfg.stage0_samples);
            match kind {
                SampleKind::Stage0 => {
                    let d = gen_stage0_dataset(cfg.stage0_size, n, cfg.stage0_k_min, cfg.stage0_k_max, cfg.bp_rounds, cfg.seed)?;
                    save_stage0(&d, out)?;
                }
                SampleKind::Supervised => {
                    let rates = ErrorRates::uniform(Lattice::new(cfg.size)?, cfg.train_p)?;
                    std::fs::write(out, supervised_to_bytes(cfg.size, &gen_supervised_dataset(&rates, n, cfg.seed)))?;
                }
            }
            Ok(())
        }
        Command::Train { stage, pretrained, dataset, log } => train(cli, *stage, pretrained, dataset, log),
        Command::Eval | Command::Compare => {
            let (_, spec) = load_config(cli)?;
            if matches!(cli.command, Command::Compare) && spec.decoders.len() < 2 {
                return Err(Error::Config("compare needs at least two decoders".into()));
            }
            let records = spec.run(&spec.load_models()?)?;
            emit(cli, &to_csv(&records, !cli.no_timing))
        }
        Command::Threshold => {
            let (_, mut spec) = load_config(cli)?;
            if spec.sizes.len() < 2 || spec.ps.len() < 2 {
                return Err(Error::Config("threshold needs at least two sizes and two p values".into()));
            }
            spec.sizes.sort_unstable();
            spec.ps.sort_by(f64::total_cmp);
            let records = spec.run(&spec.load_models()?)?;
            let mut names: Vec<&str> = Vec::new();
            for r in &records {
                if !names.contains(&r.decoder.as_str()) {
                    names.push(&r.decoder);
                }
            }
            for name in names {
                let curve = |l: usize| -> Vec<(f64, f64)> {
                    records.iter().filter(|r| r.size == l && r.decoder == name).map(|r| (r.p, r.acc_mean)).collect()
                };
                for w in spec.sizes.windows(2) {
                    match crossing(&curve(w[0]), &curve(w[1])) {
                        Some(p) => eprintln!("{name}: L={} and L={} cross at p ~ {p:.4} (effective threshold)", w[0], w[1]),
                        None => eprintln!("{name}: L={} and L={} do not cross on this grid", w[0], w[1]),
                    }
                }
            }
            emit(cli, &to_csv(&records, !cli.no_timing))
        }
        Command::Oracle => {
            let (_, mut spec) = load_config(cli)?;
            spec.decoders = vec![DecoderId::ExactMl];
            if spec.sizes.iter().any(|&l| l > toric_core::oracle::MAX_EXACT_SIZE) {
                return Err(Error::Config(format!("oracle supports L <= {}", toric_core::oracle::MAX_EXACT_SIZE)));
            }
            let records = spec.run(&[])?;
            emit(cli, &to_csv(&records, !cli.no_timing))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
