use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use greedy_ou_cli::run::{cmd_eig, cmd_rates, cmd_regularity, cmd_solve, cmd_sweep, Outcome, RunOptions};
use greedy_ou_cli::{ExperimentConfig, RunError};

#[derive(Parser)]
#[command(name = "greedy-ou", version, about = "Greedy rank-one solvers for Maxwellian-weighted Ornstein-Uhlenbeck problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Worker threads (sweep entries, ALS restarts, factor assembly).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides `als.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also record the dense dual norm of each residual (tiny grids only).
    #[arg(long, global = true)]
    exact_dual: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured greedy algorithm.
    Solve,
    /// Factor eigenvalues and Weyl growth summary.
    Eig {
        /// Eigenpairs per factor (default `eig.k`).
        #[arg(long)]
        k: Option<usize>,
    },
    /// PGA and OGA traces against their rate envelopes.
    Rates,
    /// Eigen-coefficient regularity diagnostics of the target.
    Regularity {
        /// Index box per factor, e.g. `20,20`.
        #[arg(long = "box", value_delimiter = ',')]
        box_sizes: Option<Vec<usize>>,
    },
    /// One solve per `[[sweep]]` entry.
    Sweep,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GREEDY_OU_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(1)
        }
    }
}

fn execute(cli: &Cli) -> Result<Outcome, RunError> {
    let path = cli.config.as_ref().ok_or_else(|| {
        RunError::Config(greedy_ou_cli::ConfigError::Invalid { field: "--config".into(), message: "required".into() })
    })?;
    let cfg = ExperimentConfig::load(path)?.with_seed(cli.seed);
    if let Some(j) = cli.jobs {
        // Only the first initialization wins; later calls are harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let opts = RunOptions { out: cli.out.clone(), exact_dual: cli.exact_dual, jobs: cli.jobs };
    match &cli.command {
        Command::Solve => {
            let rec = cmd_solve(&cfg, &opts)?;
            println!(
                "{}: {} terms, termination {:?}, final error {}",
                rec.algorithm,
                rec.final_norms.rank,
                rec.termination,
                rec.final_norms.err_energy.map(|e| format!("{e:e}")).unwrap_or_else(|| "n/a".into())
            );
            Ok(rec.outcome())
        }
        Command::Eig { k } => {
            let report = cmd_eig(&cfg, *k, &opts)?;
            for w in &report.weyl {
                match w.ratio {
                    Some(r) => println!("factor {}: c1 = {:e}, c2 = {:e}, c2/c1 = {r:.4}", w.factor, w.c1.unwrap(), w.c2.unwrap()),
                    None => println!("factor {}: {}", w.factor, w.note.as_deref().unwrap_or("no fit")),
                }
            }
            Ok(Outcome::Success)
        }
        Command::Rates => {
            let report = cmd_rates(&cfg, &opts)?;
            println!("M = {:e}, {} envelope violations", report.expansion_bound, report.violations);
            Ok(Outcome::Success)
        }
        Command::Regularity { box_sizes } => {
            let out = cmd_regularity(&cfg, box_sizes.clone(), &opts)?;
            let r = &out.report;
            println!("b1 = {:e} (tail {:e}); mix {:e}; unif {:e}", r.b1.value, r.b1.tail_fraction, r.mix.norm, r.unif.norm);
            Ok(Outcome::Success)
        }
        Command::Sweep => {
            let (rows, outcome) = cmd_sweep(&cfg, &opts)?;
            println!("{} sweep entries", rows.len());
            Ok(outcome)
        }
    }
}
