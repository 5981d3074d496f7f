use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nashpl::{registry_get, Variant, PROBLEM_NAMES};
use nashpl_cli::output::write_json;
use nashpl_cli::{cmd_gradcheck, cmd_run, cmd_verify, ExperimentConfig, HarnessError, EXIT_VIOLATION, SCOPES};

#[derive(Parser)]
#[command(name = "nashpl", version, about = "Block-coordinate Nash equilibrium experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (variant, seed) pair of a config, writing CSV traces and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Early-exit residual, overriding `solver.tol`.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run the sampled inequality battery.
    Verify {
        #[arg(long, default_value = "all", help = SCOPES)]
        scope: String,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// Registry name or `all`.
        #[arg(long, default_value = "all")]
        problem: String,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List registered problems and solver variants.
    List,
}

fn execute(cmd: Command) -> Result<bool, HarnessError> {
    match cmd {
        Command::Run { config, out, seed, tol } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            if let Some(tol) = tol {
                cfg.solver.tol = tol;
            }
            let rep = cmd_run(&cfg)?;
            for r in &rep.runs {
                let kind = r.rate_fit.as_ref().map_or("n/a".to_string(), |f| format!("{:?}", f.kind).to_lowercase());
                println!(
                    "{} {} seed {}: {:?} after {} steps, gap {:.3e}, residual {:.3e}, {kind}",
                    rep.problem, r.variant, r.seed, r.status, r.steps, r.final_gap, r.final_residual
                );
            }
            println!("wrote {}", cfg.output_dir.join("summary.json").display());
            Ok(true)
        }
        Command::Verify { scope, samples, seed, out } => {
            let rep = cmd_verify(&scope, samples, seed)?;
            match out {
                Some(path) => write_json(&path, &rep)?,
                None => println!("{}", serde_json::to_string_pretty(&rep)?),
            }
            for c in rep.failures() {
                eprintln!("violation: {} on {} ({}): {} of {}", c.lemma, c.problem, c.name, c.violations, c.checked);
            }
            Ok(rep.passed)
        }
        Command::Gradcheck { problem, samples, seed, out } => {
            let reps = cmd_gradcheck(&problem, samples, seed)?;
            for r in &reps {
                print!("{}", r.table());
            }
            if let Some(path) = out {
                write_json(&path, &reps)?;
            }
            Ok(reps.iter().all(|r| r.passed))
        }
        Command::List => {
            println!("problems:");
            for name in PROBLEM_NAMES {
                let p = registry_get(name)?;
                let c = p.game.constants();
                println!(
                    "  {name:<18} players {}  dim {:>2}  L {:<10.4} mu {:<8.4} ({:?})  exact BR {}",
                    p.game.num_players(),
                    p.game.layout().total_dim(),
                    c.l,
                    c.mu,
                    c.provenance,
                    p.game.has_best_response()
                );
            }
            println!("variants:");
            for v in Variant::ALL {
                println!("  {v}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
