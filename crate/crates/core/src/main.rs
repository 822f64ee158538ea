use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dmimo::config::ExperimentConfig;
use dmimo::equalization::DetectorKind;
use dmimo::harness::{
    run_ber_sweep, run_block_protocol, run_design_training, run_interference_sweep, run_mse_sweep,
    run_threshold_search, Table,
};

#[derive(Parser)]
#[command(name = "dmimo", version, about = "Diffusive MIMO molecular communication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ML and LS estimation error against the CRB
    MseSweep(Common),
    /// BER of the DFE detectors along a sweep axis
    BerSweep(Common),
    /// Block-type communication with pilot prefix and mobility
    BlockProtocol(Common),
    /// BER-minimising ZF/MMSE threshold
    ThresholdSearch(Common),
    /// Mean interference metric per offset mode
    InterferenceSweep(Common),
    /// CRB-minimising training sequences
    DesignTraining {
        #[command(flatten)]
        common: Common,
        /// Also write the sequences as a training file
        #[arg(long)]
        training_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination, stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Restrict to one detector
    #[arg(long, value_parser = ["zf", "mmse", "ls"])]
    detector: Option<String>,
    /// Worker threads, 0 for all cores
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> dmimo::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
            cfg.max_trials = cfg.max_trials.max(t);
        }
        if let Some(d) = &self.detector {
            cfg.detectors = vec![d.parse::<DetectorKind>()?];
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn emit(&self, table: &Table) -> dmimo::Result<()> {
        let csv = table.to_csv();
        match &self.out {
            Some(p) => std::fs::write(p, csv)?,
            None => print!("{csv}"),
        }
        Ok(())
    }
}

fn run(cli: Cli) -> dmimo::Result<()> {
    match cli.command {
        Command::MseSweep(c) => {
            let run = run_mse_sweep(&c.load()?)?;
            eprintln!("mse-sweep: {:.2?}", run.elapsed);
            c.emit(&run.table())
        }
        Command::BerSweep(c) => {
            let run = run_ber_sweep(&c.load()?)?;
            eprintln!("ber-sweep: {:.2?}", run.elapsed);
            c.emit(&run.table())
        }
        Command::BlockProtocol(c) => {
            let run = run_block_protocol(&c.load()?)?;
            eprintln!("block-protocol: {:.2?}", run.elapsed);
            c.emit(&run.table())
        }
        Command::ThresholdSearch(c) => {
            let cfg = c.load()?;
            let res = run_threshold_search(&cfg, &cfg.threshold_grid)?;
            eprintln!("best {} threshold: {}", res.kind, res.best);
            c.emit(&res.table())
        }
        Command::InterferenceSweep(c) => c.emit(&run_interference_sweep(&c.load()?)?.table()),
        Command::DesignTraining { common, training_out } => {
            let run = run_design_training(&common.load()?)?;
            if let Some(p) = training_out {
                std::fs::write(p, run.training_text())?;
            }
            common.emit(&run.table())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
