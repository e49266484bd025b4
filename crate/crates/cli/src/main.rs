use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use nhevec::harness::{emit_report, run_experiment, ExperimentConfig, ExperimentKind};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Sample,
    Spectrum,
    VerifyA1,
    VerifyA2,
    VerifyA3,
    Rigidity,
    Eth,
    LevelRepulsion,
    JacobianCheck,
    KqRatio,
    EvecStats,
    Mgf,
    Independence,
    DseTable,
}

impl From<Command> for ExperimentKind {
    fn from(c: Command) -> Self {
        match c {
            Command::Sample => Self::Sample,
            Command::Spectrum => Self::Spectrum,
            Command::VerifyA1 => Self::VerifyA1,
            Command::VerifyA2 => Self::VerifyA2,
            Command::VerifyA3 => Self::VerifyA3,
            Command::Rigidity => Self::Rigidity,
            Command::Eth => Self::Eth,
            Command::LevelRepulsion => Self::LevelRepulsion,
            Command::JacobianCheck => Self::JacobianCheck,
            Command::KqRatio => Self::KqRatio,
            Command::EvecStats => Self::EvecStats,
            Command::Mgf => Self::Mgf,
            Command::Independence => Self::Independence,
            Command::DseTable => Self::DseTable,
        }
    }
}

/// Monte Carlo experiments on eigenvectors of non-Hermitian random matrices.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    /// Experiment to run.
    command: Command,
    /// JSON experiment configuration; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated matrix sizes (overrides the config).
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Number of samples (overrides the config).
    #[arg(long)]
    samples: Option<usize>,
    /// Print the default configuration for the command and exit.
    #[arg(long)]
    print_defaults: bool,
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    let kind = ExperimentKind::from(cli.command);
    if cli.print_defaults {
        println!("{}", serde_json::to_string_pretty(&ExperimentConfig::for_kind(kind))?);
        return Ok(true);
    }
    let mut cfg = match &cli.config {
        Some(p) => serde_json::from_str::<ExperimentConfig>(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::for_kind(kind),
    };
    cfg.kind = kind;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    if let Some(n) = cli.n {
        cfg.n_list = n;
    }
    if let Some(s) = cli.samples {
        cfg.n_samples = s;
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global()?;
    }
    let record = run_experiment(&cfg)?;
    let files = emit_report(&record, &cfg.out_dir)?;
    let agg = &record.aggregate;
    eprintln!(
        "{}: {} used, {} discarded, {:.1}s",
        agg.kind, agg.used, agg.discarded, record.wall_clock_s
    );
    for w in &agg.warnings {
        eprintln!("warning: {w}");
    }
    for t in &agg.tests {
        println!("{} {}: {:.6} (threshold {})", if t.pass { "PASS" } else { "FAIL" }, t.name, t.statistic, t.threshold);
    }
    for s in &agg.scaling {
        println!("{} {}: slope {:.4}, C {:.4}", if s.pass { "PASS" } else { "FAIL" }, s.quantity, s.slope, s.cap_c);
    }
    eprintln!("wrote {} files to {}", files.len(), cfg.out_dir.display());
    Ok(agg.pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
