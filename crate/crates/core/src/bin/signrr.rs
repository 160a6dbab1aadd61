use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use signrr::harness::{parse_override, preset, run_experiment, ExperimentConfig, PRESETS};
use signrr::metrics::parse_csv;
use signrr::theory::{check_anchor_cancellation, check_descent, check_freeze, check_momentum_replay, check_vr_bound};
use signrr::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_LEMMA: u8 = 3;

#[derive(Parser)]
#[command(name = "signrr", version, about = "Sign-based finite-sum optimizers: sweeps and trace checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep from a preset and/or a JSON config.
    Run {
        /// JSON file with flat config keys (applied after the preset).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Multiplies n, n0 and epochs of the preset.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override any config key, e.g. `--set epochs=10 --set algorithms=signrr,signrvr`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Check the invariants on a trace CSV written with diagnostics.
    Check {
        #[arg(long)]
        trace: PathBuf,
        /// Coordinate smoothness constants; enables the vr_bound and descent checks.
        #[arg(long, value_delimiter = ',')]
        lhat: Option<Vec<f64>>,
        /// Momentum constant; enables the replay check.
        #[arg(long)]
        beta: Option<f64>,
        /// The momentum buffer was carried across epochs.
        #[arg(long)]
        carry: bool,
    },
    /// List presets, or print one as JSON.
    Presets {
        #[arg(long)]
        show: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

fn build_config(
    config: Option<PathBuf>,
    preset_name: Option<String>,
    scale: f64,
    out: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    sets: Vec<String>,
) -> signrr::Result<ExperimentConfig> {
    let mut c = match &preset_name {
        Some(name) => preset(name, scale)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = config {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Config {
            key: "<file>".into(),
            message: e.to_string(),
        })?;
        let Value::Object(map) = value else {
            return Err(Error::Config {
                key: "<file>".into(),
                message: "top level must be an object".into(),
            });
        };
        c = c.with_overrides(map)?;
    }
    if let Some(out) = out {
        c.out_dir = out;
    }
    if let Some(seeds) = seeds {
        c.seeds = seeds;
    }
    for s in sets {
        let (k, v) = parse_override(&s)?;
        c = c.set(&k, v)?;
    }
    c.validate()?;
    Ok(c)
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config { .. } => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_FAILURE),
    }
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            preset,
            scale,
            out,
            seeds,
            sets,
        } => {
            let config = match build_config(config, preset, scale, out, seeds, sets) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let summary = match run_experiment(&config) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            println!("{:<14} {:>6} {:>4} {:>8} {:>5} {:>8} {:>12}", "method", "U", "M", "lr", "beta", "D", "metric");
            for b in &summary.best {
                println!(
                    "{:<14} {:>6} {:>4} {:>8.0e} {:>5} {:>8} {:>12.4}",
                    b.method.name(),
                    fmt_opt(b.u_max),
                    fmt_opt(b.workers),
                    b.gamma0,
                    fmt_opt(b.beta),
                    fmt_opt(b.d0.map(|d| format!("{d:.0e}"))),
                    b.mean_metric
                );
            }
            for l in &summary.lemmas {
                println!("{l}");
            }
            println!("wrote {} cells to {}", summary.cells.len(), summary.out_dir.display());
            if summary.lemma_violations() > 0 {
                return ExitCode::from(EXIT_LEMMA);
            }
            ExitCode::SUCCESS
        }
        Command::Check {
            trace,
            lhat,
            beta,
            carry,
        } => {
            let trace = match parse_csv(&trace) {
                Ok(t) => t,
                Err(e) => return fail(&e),
            };
            if trace.records.iter().all(|r| r.diag.is_none()) {
                eprintln!("error: trace has no diagnostic columns");
                return ExitCode::from(EXIT_CONFIG);
            }
            let mut reports = vec![check_freeze(&trace), check_anchor_cancellation(&trace)];
            if let Some(lhat) = &lhat {
                for r in [check_vr_bound(&trace, lhat), check_descent(&trace, lhat)] {
                    match r {
                        Ok(r) => reports.push(r),
                        Err(e) => return fail(&e),
                    }
                }
            }
            if let Some(beta) = beta {
                reports.push(check_momentum_replay(&trace, beta, carry, 1e-12));
            }
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().any(|r| !r.passed()) {
                return ExitCode::from(EXIT_LEMMA);
            }
            ExitCode::SUCCESS
        }
        Command::Presets { show, scale } => match show {
            None => {
                for (name, about) in PRESETS {
                    println!("{name:<20} {about}");
                }
                ExitCode::SUCCESS
            }
            Some(name) => match preset(&name, scale) {
                Ok(c) => {
                    println!("{}", serde_json::to_string_pretty(&c).expect("config serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            },
        },
    }
}
