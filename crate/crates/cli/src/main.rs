use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatblow_cli::{run, CliError, Mode, Outcome, RunConfig};

#[derive(Parser)]
#[command(
    name = "heatblow",
    version,
    about = "Blow-up simulations, diagnostics and verification suites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Similarity-variable run, or a physical run when the config says simulate-physical.
    Simulate(Common),
    /// Numeric identity checks over the configured (p, n) pairs.
    Verify(Common),
    /// Similarity runs across (p, n) with an aggregated table.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel checks and sweep members.
    #[arg(long)]
    workers: Option<usize>,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, mode) = match &cli.command {
        Command::Simulate(c) => (c, None),
        Command::Verify(c) => (c, Some(Mode::Verify)),
        Command::Sweep(c) => (c, Some(Mode::Sweep)),
    };
    let mut cfg = match load(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    cfg.mode = match mode {
        Some(m) => m,
        None if cfg.mode == Mode::SimulatePhysical => Mode::SimulatePhysical,
        None => Mode::SimulateSimilarity,
    };
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = common.workers {
        pool = pool.num_threads(w.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    let (outcome, code) = pool.install(|| run(&cfg, &out));
    match outcome {
        Some(Outcome::Verify(v)) => {
            println!("{} checks, {} failed", v.reports.len(), v.failed.len());
            for f in &v.failed {
                println!("FAILED {f}");
            }
        }
        Some(Outcome::Sweep(s)) => print!("{}", s.table()),
        Some(Outcome::Similarity(s)) => {
            let c = &s.fits.containment;
            println!(
                "{} records to s = {}; inside V_A throughout: {}; min margin {:.4}",
                s.fits.records, s.fits.s_end, c.inside_all, c.min_margin
            );
        }
        Some(Outcome::Physical(p)) => {
            println!(
                "T estimate {:e}; rate slope {:?}",
                p.fits.t_estimate.unwrap_or(f64::NAN),
                p.fits.rate_slope
            );
            for pr in &p.fits.probes {
                println!(
                    "|ln x| = {}: ratio {:?}, log ratio {:?}",
                    pr.ln_x, pr.ratio, pr.log_ratio
                );
            }
        }
        None => {}
    }
    println!("artifacts in {}", out.display());
    ExitCode::from(code.clamp(0, 255) as u8)
}
