use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cola::experiment::{run_gradcheck, run_sample, run_spiral_gen, run_train, Overrides};
use cola::verify::{run_verify, Faults};

#[derive(Parser)]
#[command(name = "cola", version, about = "Constrained Langevin training and sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Output directory (train, spiral-gen) or file (sample, verify, gradcheck).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment config.
    Train(Common),
    /// Run a sampler and report time averages.
    Sample(Common),
    /// Run the built-in invariant suite.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Skip the cotangent projection (negative control).
        #[arg(long, hide = true)]
        inject_skip_projection: bool,
    },
    /// Compare backprop with finite differences.
    Gradcheck(Common),
    /// Write the spiral train/test sets as CSV.
    SpiralGen(Common),
}

fn require_config(c: &Common) -> Result<PathBuf, String> {
    c.config.clone().ok_or_else(|| "--config is required".to_string())
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        seed: c.seed_override,
        out: c.out.clone(),
    }
}

fn write_or_print(out: Option<&PathBuf>, json: String) -> Result<(), String> {
    match out {
        Some(p) => cola::experiment::write_atomic(p, json.as_bytes()).map_err(|e| e.to_string()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    let err = |e: cola::Error| e.to_string();
    match cli.command {
        Command::Train(c) => {
            let outcome = run_train(require_config(&c)?, &overrides(&c)).map_err(err)?;
            let mut ok = true;
            for r in &outcome.runs {
                match &r.failure {
                    None => {
                        let last = r.records.last();
                        eprintln!(
                            "seed {}: {} epochs, final test_acc {}",
                            r.seed,
                            r.records.len(),
                            last.map_or(f64::NAN, |x| x.test_acc)
                        );
                    }
                    Some(msg) => {
                        ok = false;
                        eprintln!("seed {} failed: {msg}", r.seed);
                    }
                }
            }
            eprintln!("wrote {}", outcome.output_dir.display());
            Ok(ok)
        }
        Command::Sample(c) => {
            let report = run_sample(require_config(&c)?, &overrides(&c)).map_err(err)?;
            for o in &report.observables {
                eprintln!("{}: mean {} (standard error {})", o.name, o.mean, o.standard_error);
            }
            Ok(true)
        }
        Command::Verify {
            common,
            inject_skip_projection,
        } => {
            let checks = run_verify(Faults {
                skip_cotangent_projection: inject_skip_projection,
            })
            .map_err(err)?;
            let all = checks.iter().all(|c| c.pass);
            let json = serde_json::to_string_pretty(&checks).map_err(|e| e.to_string())? + "\n";
            write_or_print(common.out.as_ref(), json)?;
            for c in &checks {
                eprintln!("{} {} (measured {:e}, tolerance {:e})", if c.pass { "PASS" } else { "FAIL" }, c.check_id, c.measured, c.tolerance);
            }
            Ok(all)
        }
        Command::Gradcheck(c) => {
            let report = run_gradcheck(require_config(&c)?, &Overrides { out: None, ..overrides(&c) }).map_err(err)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())? + "\n";
            write_or_print(c.out.as_ref(), json)?;
            Ok(report.pass)
        }
        Command::SpiralGen(c) => {
            let (a, b) = run_spiral_gen(c.config.as_deref(), &overrides(&c)).map_err(err)?;
            eprintln!("wrote {} and {}", a.display(), b.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
