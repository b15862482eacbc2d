use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use beampred::harness::{
    cmd_evaluate, cmd_export_q15, cmd_generate, cmd_replay, cmd_report, cmd_train, ExperimentConfig,
    REPORT_CSV,
};

const DATASET_FILE: &str = "dataset.bin";
const RAW_FILE: &str = "raw.q15";

#[derive(Parser)]
#[command(name = "beampred", version, about = "Downlink beam prediction from uplink SRS channel estimates")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config JSON, or the built-in preset name `los` / `nlos`.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> beampred::Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scene and write OUT/dataset.bin.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model per horizon; writes OUT/model_h{ms}.bin and logs.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Horizon in milliseconds; repeatable (default: the config's list).
        #[arg(long = "horizon")]
        horizons: Vec<u64>,
    },
    /// Evaluate trained checkpoints on the test lap; writes OUT/report.csv,
    /// OUT/report.json and OUT/plot_h{ms}.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long = "horizon")]
        horizons: Vec<u64>,
        /// Directory holding the checkpoints (default: OUT).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Ingest an SRSQ15 raw file and write OUT/dataset.bin.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        raw: PathBuf,
    },
    /// Write the simulated raw reports as OUT/raw.q15.
    ExportQ15 {
        #[command(flatten)]
        common: Common,
    },
    /// Print the report in OUT as a table.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn horizons_or_default(cli: Vec<u64>, cfg: &ExperimentConfig) -> Vec<u64> {
    if cli.is_empty() {
        cfg.horizons.clone()
    } else {
        cli
    }
}

fn run(cli: Cli) -> beampred::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| beampred::Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Generate { common } => {
            let (cfg, out) = common.load()?;
            println!("{}", cmd_generate(&cfg, &out.join(DATASET_FILE))?);
        }
        Command::Train { common, dataset, horizons } => {
            let (cfg, out) = common.load()?;
            let horizons = horizons_or_default(horizons, &cfg);
            for path in cmd_train(&cfg, &dataset, &horizons, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Evaluate { common, dataset, horizons, checkpoints } => {
            let (cfg, out) = common.load()?;
            let horizons = horizons_or_default(horizons, &cfg);
            let ckpt_dir = checkpoints.unwrap_or_else(|| out.clone());
            let reports = cmd_evaluate(&cfg, &dataset, &ckpt_dir, &horizons, &out)?;
            if !reports.is_empty() {
                println!("wrote {}", out.join(REPORT_CSV).display());
                print!("{}", cmd_report(&out)?);
            }
        }
        Command::Replay { common, raw } => {
            let (cfg, out) = common.load()?;
            println!("{}", cmd_replay(&cfg, &raw, &out.join(DATASET_FILE))?);
        }
        Command::ExportQ15 { common } => {
            let (cfg, out) = common.load()?;
            let path = out.join(RAW_FILE);
            let scale = cmd_export_q15(&cfg, &path)?;
            println!("wrote {} (scale {scale:e})", path.display());
        }
        Command::Report { out } => print!("{}", cmd_report(&out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
