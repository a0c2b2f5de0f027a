use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use holonic::data::PartitionScheme;
use holonic::learner::{Activation, ModelKind, TrainingConfig};
use holonic::protocol::{ProtocolConfig, SuperiorMode};
use holonic::sim::{self, DataSource, ExecutionMode, ExperimentConfig, Topology};
use holonic::{HolarchySpec, PresetName, SyntheticSpec};

#[derive(Parser)]
#[command(name = "holonic", version, about = "Simulate multi-level model averaging over a holarchy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-round metrics as CSV.
    Run(Box<RunArgs>),
    /// Print the config file of a preset.
    ExportPreset {
        /// fedavg-N, p2p-ring-N, p2p-complete-N, hfl-MxK, hoal1p..hoal4l
        name: PresetName,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a holarchy config file and list every violation.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Linear,
    Logistic,
    Mlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Iid,
    Eqniid,
    Ueqniid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Det,
    Conc,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("topology").required(true).args(["preset", "config"]))]
struct RunArgs {
    #[arg(long)]
    preset: Option<PresetName>,
    /// Holarchy config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "logistic")]
    model: ModelArg,
    /// Hidden layer widths of the MLP.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    hidden: Vec<usize>,
    #[arg(long, value_enum, default_value = "relu")]
    activation: ActivationArg,
    #[arg(long, value_enum, default_value = "iid")]
    partition: PartitionArg,
    #[arg(long, default_value_t = 2)]
    labels_per_holon: usize,
    #[arg(long, default_value_t = 500)]
    samples_per_holon: usize,
    /// Shard sizes for ueqniid; defaults to a linear profile.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Terminal round budget.
    #[arg(long, default_value_t = 200)]
    rounds: u64,
    /// Aggregations of a non-terminal between reports to its superior.
    #[arg(long, default_value_t = 2)]
    local_budget: u64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "det")]
    mode: ModeArg,
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
    /// Weight superior models by data size instead of adopting them.
    #[arg(long)]
    weighted_superior: bool,
    /// Do not relay superior models to neighbors.
    #[arg(long)]
    no_sync: bool,
    /// IDX image file; synthetic data is used when absent.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Noise (regression) or spread (blobs) of synthetic data.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long)]
    max_samples: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
}

impl RunArgs {
    fn into_config(self) -> ExperimentConfig {
        let topology = match (self.preset, self.config) {
            (Some(p), _) => Topology::Preset(p),
            (None, Some(path)) => Topology::Config(path),
            (None, None) => unreachable!("clap requires one of them"),
        };
        let model = match self.model {
            ModelArg::Linear => ModelKind::LinearRegression,
            ModelArg::Logistic => ModelKind::LogisticRegression,
            ModelArg::Mlp => ModelKind::Mlp {
                hidden: self.hidden,
                activation: match self.activation {
                    ActivationArg::Relu => Activation::Relu,
                    ActivationArg::Tanh => Activation::Tanh,
                    ActivationArg::Sigmoid => Activation::Sigmoid,
                },
            },
        };
        let data = match (self.images, self.labels) {
            (Some(images), Some(labels)) => DataSource::Idx { images, labels },
            _ if matches!(model, ModelKind::LinearRegression) => {
                DataSource::Synthetic(SyntheticSpec::regression(self.samples, self.dim, self.noise))
            }
            _ => DataSource::Synthetic(SyntheticSpec::blobs(self.samples, self.dim, self.classes, self.noise, 3.0)),
        };
        let mut cfg = ExperimentConfig::new(topology, model, data);
        cfg.partition = match self.partition {
            PartitionArg::Iid => PartitionScheme::Iid,
            PartitionArg::Eqniid => PartitionScheme::EqNiid {
                labels_per_holon: self.labels_per_holon,
                samples_per_holon: self.samples_per_holon,
            },
            PartitionArg::Ueqniid => PartitionScheme::UeqNiid { sizes: self.sizes },
        };
        cfg.training =
            TrainingConfig { batch_size: self.batch, learning_rate: self.lr, epochs_per_round: self.epochs, seed: self.seed };
        cfg.protocol = ProtocolConfig {
            sync_mode: !self.no_sync,
            superior_mode: if self.weighted_superior { SuperiorMode::Weighted } else { SuperiorMode::Replace },
            terminal_budget: self.rounds,
            local_budget: self.local_budget,
            ..ProtocolConfig::default()
        };
        cfg.seed = self.seed;
        cfg.mode = match self.mode {
            ModeArg::Det => ExecutionMode::Deterministic,
            ModeArg::Conc => ExecutionMode::Concurrent,
        };
        cfg.max_samples = self.max_samples;
        cfg.test_fraction = self.test_fraction;
        cfg.output = Some(self.out);
        cfg
    }
}

fn execute(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::Run(args) => {
            let cfg = (*args).into_config();
            let report = sim::run::<f64>(&cfg)?;
            let summary = sim::summarize(&report.records)?;
            if let Some(last) = summary.last() {
                print!("round {}: mean train loss {:.6}", last.round, last.mean_train_loss);
                if let Some(acc) = last.mean_test_accuracy {
                    print!(", mean test accuracy {acc:.4}");
                }
                println!();
            }
            println!(
                "{} messages delivered; metrics written to {}",
                report.stats.delivered,
                cfg.output.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
            );
        }
        Command::ExportPreset { name, out } => {
            let text = name.build()?.to_config_text();
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
        Command::Validate { config } => {
            let spec = HolarchySpec::parse(&std::fs::read_to_string(&config)?)?;
            let violations = spec.validate();
            if !violations.is_empty() {
                for v in &violations {
                    eprintln!("{v}");
                }
                return Err(format!("{} violation(s)", violations.len()).into());
            }
            println!("ok: {} holons, depth {}", spec.records.len(), spec.depth());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
