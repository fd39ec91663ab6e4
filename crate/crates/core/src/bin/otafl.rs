//! Command-line front end. Flags override the corresponding config keys;
//! keys absent from both take their documented defaults.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otafl::experiment::{cmd_lemma1, cmd_sweep, cmd_theorem1, cmd_train, ExperimentConfig, ModelKind, PartitionName};

#[derive(Parser)]
#[command(name = "otafl", version = otafl::experiment::VERSION, about = "Over-the-air federated learning under heavy-tailed noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured method on matched seeds and write per-round CSVs.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Tabulate the clip probability of MAC against the threshold.
    Lemma1 {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        c_grid: Option<Vec<f64>>,
        #[arg(long)]
        g: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Check the MAC convergence bound on a quadratic testbed.
    Theorem1 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        k_grid: Option<Vec<usize>>,
        /// Noiseless channel without clipping, checked against the classical bound.
        #[arg(long)]
        ideal: bool,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Threshold search for MAC and GNC.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_seeds: Option<usize>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    local_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    mac_threshold: Option<f64>,
    #[arg(long)]
    gnc_threshold: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn base_config(c: Common) -> otafl::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::named("otafl"),
    };
    set(&mut cfg.name, c.name);
    set(&mut cfg.output_dir, c.output_dir);
    set(&mut cfg.seed, c.seed);
    set(&mut cfg.n_seeds, c.n_seeds);
    Ok(cfg)
}

fn apply_train(cfg: &mut ExperimentConfig, f: TrainFlags) -> otafl::Result<()> {
    set(&mut cfg.methods, f.methods);
    if let Some(m) = f.model {
        cfg.model.kind = match m.as_str() {
            "quadratic" => ModelKind::Quadratic,
            "logistic" => ModelKind::Logistic,
            "mlp" => ModelKind::Mlp,
            other => return Err(otafl::Error::Config(format!("unknown model `{other}`"))),
        };
    }
    if let Some(p) = f.partition {
        cfg.data.partition = match p.as_str() {
            "iid" => PartitionName::Iid,
            "dirichlet" => PartitionName::Dirichlet,
            other => return Err(otafl::Error::Config(format!("unknown partition `{other}`"))),
        };
    }
    set(&mut cfg.training.n_clients, f.clients);
    set(&mut cfg.training.rounds, f.rounds);
    set(&mut cfg.training.learning_rate, f.lr);
    set(&mut cfg.training.local_epochs, f.local_epochs);
    set(&mut cfg.training.batch_size, f.batch_size);
    set(&mut cfg.channel.alpha, f.alpha);
    set(&mut cfg.channel.tau, f.tau);
    set(&mut cfg.clipping.mac_threshold, f.mac_threshold);
    set(&mut cfg.clipping.gnc_threshold, f.gnc_threshold);
    Ok(())
}

fn run(cli: Cli) -> otafl::Result<Vec<PathBuf>> {
    match cli.command {
        Command::Train { common, train } => {
            let mut cfg = base_config(common)?;
            apply_train(&mut cfg, train)?;
            cmd_train(&cfg)
        }
        Command::Lemma1 {
            common,
            alphas,
            tau,
            c_grid,
            g,
            samples,
        } => {
            let mut cfg = base_config(common)?;
            set(&mut cfg.lemma1.alphas, alphas);
            set(&mut cfg.lemma1.tau, tau);
            set(&mut cfg.lemma1.c_grid, c_grid);
            set(&mut cfg.lemma1.g, g);
            set(&mut cfg.lemma1.samples, samples);
            Ok(vec![cmd_lemma1(&cfg)?])
        }
        Command::Theorem1 {
            common,
            eta,
            c,
            k_grid,
            ideal,
            alpha,
            tau,
        } => {
            let mut cfg = base_config(common)?;
            if eta.is_some() {
                cfg.theorem1.eta = eta;
            }
            if c.is_some() {
                cfg.theorem1.c = c;
            }
            set(&mut cfg.theorem1.k_grid, k_grid);
            cfg.theorem1.ideal |= ideal;
            set(&mut cfg.channel.alpha, alpha);
            set(&mut cfg.channel.tau, tau);
            cmd_theorem1(&cfg)
        }
        Command::Sweep { common, train, grid } => {
            let mut cfg = base_config(common)?;
            apply_train(&mut cfg, train)?;
            set(&mut cfg.clipping.sweep_grid, grid);
            Ok(vec![cmd_sweep(&cfg)?])
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("otafl: {e}");
            ExitCode::from(if e.is_infrastructure() { 3 } else { 2 })
        }
    }
}
