//! `hypertopo` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or format error, 3 invariant or
//! gradient-check failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hypertopo::gradcheck::{run_gradcheck, CheckedOp, GradcheckConfig};
use hypertopo::harness::codec::read_prediction;
use hypertopo::harness::{
    evaluate_dirs, read_checkpoint_log, read_mask, select_checkpoint, synth_mask, write_mask,
    HarnessConfig, HarnessError, SynthSpec,
};
use hypertopo::persistence::h0_superlevel_diagram;
use hypertopo::soft_euler::soft_euler_char;
use hypertopo::topology::{betti_numbers, euler_characteristic};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "hypertopo",
    version,
    about = "Topology-aware segmentation metrics and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate every prediction/ground-truth pair and write a metrics CSV.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config file threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write one JSON object per sample.
        #[arg(long)]
        jsonl: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Print beta0, beta1 and the Euler characteristic of a PGM mask.
    Topo { mask: PathBuf },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum grid side per instance, cycled over instances.
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Negate one operation's gradient (negative control).
        #[arg(long, hide = true)]
        inject_sign_flip: Option<String>,
    },
    /// Pick a checkpoint with the min-PD-within-top-K-Dice rule.
    Select {
        log: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic PGM mask with known Betti numbers.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 1)]
        blobs: usize,
        #[arg(long, default_value_t = 0)]
        holes: usize,
        #[arg(long, default_value_t = 2)]
        min_gap: usize,
    },
    /// Print the soft Euler characteristic of a PMAP1 (or PGM) file.
    Probchi { map: PathBuf },
    /// Print the H0 superlevel persistence diagram of a map as JSON.
    Diagram { map: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match &e {
            HarnessError::Core(hypertopo::Error::InvalidParameter { .. }) => EXIT_USAGE,
            _ => EXIT_IO,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn load_config(path: Option<&Path>) -> Result<HarnessConfig, Failure> {
    match path {
        Some(p) => HarnessConfig::load(p).map_err(|e| match e {
            HarnessError::Config { .. } => fail(EXIT_USAGE, e.to_string()),
            other => other.into(),
        }),
        None => Ok(HarnessConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Eval {
            pred,
            gt,
            out,
            config,
            threshold,
            jsonl,
            workers,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(t) = threshold {
                cfg.eval.threshold = t;
            }
            cfg.eval
                .validate()
                .map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
            let report = evaluate_dirs(&pred, &gt, &cfg, workers.max(1))?;
            report.write_csv(create(&out)?)?;
            let mut meta_path = out.clone().into_os_string();
            meta_path.push(".meta.json");
            std::fs::write(&meta_path, report.metadata_json())
                .map_err(|e| fail(EXIT_IO, format!("{}: {e}", Path::new(&meta_path).display())))?;
            if let Some(path) = jsonl {
                let mut w = create(&path)?;
                report
                    .write_jsonl(&mut w)
                    .and_then(|_| w.flush())
                    .map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))?;
            }
            if !report.is_complete() {
                for f in &report.failures {
                    eprintln!("{}: {}", f.sample_id, f.reason);
                }
                return Err(fail(
                    EXIT_IO,
                    format!("{} sample(s) could not be evaluated", report.failures.len()),
                ));
            }
            Ok(())
        }
        Command::Topo { mask } => {
            let m = read_mask(&mask)?;
            let b = betti_numbers(&m);
            let chi = euler_characteristic(&m);
            println!("beta0={} beta1={} chi={}", b.beta0, b.beta1, chi);
            Ok(())
        }
        Command::Gradcheck {
            seed,
            sizes,
            instances,
            inject_sign_flip,
        } => {
            if sizes.is_empty() || sizes.contains(&0) || instances == 0 {
                return Err(fail(EXIT_USAGE, "sizes and instances must be positive"));
            }
            let inject = match inject_sign_flip {
                Some(name) => Some(
                    CheckedOp::from_name(&name)
                        .ok_or_else(|| fail(EXIT_USAGE, format!("unknown operation `{name}`")))?,
                ),
                None => None,
            };
            let report = run_gradcheck(&GradcheckConfig {
                seed,
                sizes,
                instances,
                inject_sign_flip: inject,
                ..GradcheckConfig::default()
            });
            for r in &report.results {
                let status = if r.max_rel_error < report.tolerance {
                    "ok"
                } else {
                    "FAIL"
                };
                println!(
                    "{:<18} instances={:<4} max_rel_error={:.3e} {}",
                    r.op.name(),
                    r.instances,
                    r.max_rel_error,
                    status
                );
            }
            let failures = report.failures();
            if failures.is_empty() {
                println!("checked {} operations", report.results.len());
                Ok(())
            } else {
                let names: Vec<_> = failures.iter().map(|r| r.op.name()).collect();
                Err(fail(
                    EXIT_INVARIANT,
                    format!("gradient check failed for: {}", names.join(", ")),
                ))
            }
        }
        Command::Select { log, k, config } => {
            let cfg = load_config(config.as_deref())?;
            let entries = read_checkpoint_log(&log)?;
            let k = k.unwrap_or(cfg.top_k);
            let chosen =
                select_checkpoint(&entries, k).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
            println!("{}", chosen.checkpoint_id);
            Ok(())
        }
        Command::Synth {
            out,
            seed,
            height,
            width,
            blobs,
            holes,
            min_gap,
        } => {
            let spec = SynthSpec {
                seed,
                height,
                width,
                n_blobs: blobs,
                n_holes: holes,
                min_gap,
            };
            let mask = synth_mask(&spec).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
            write_mask(&mask, &out)?;
            Ok(())
        }
        Command::Probchi { map } => {
            println!("{}", soft_euler_char(&read_prediction(&map)?));
            Ok(())
        }
        Command::Diagram { map } => {
            println!(
                "{}",
                h0_superlevel_diagram(&read_prediction(&map)?).to_json()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = writeln!(io::stderr(), "error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
