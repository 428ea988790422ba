use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sepeval::harness::report::{sweep_grid_csv, sweep_summary, toy_table};
use sepeval::harness::{
    emit_report, evaluate_matched, parse_ground_truth, parse_predictions, sweep_thresholds,
    Dataset, EvalConfig, MatchedDataset, ReportFormat,
};
use sepeval::meloss::gradcheck;
use sepeval::toylab::{median, run_experiment, ToyConfig};
use sepeval::{Error, MatchConfig, Result, ThresholdConfig};

/// OOD-aware evaluation of 2D object detectors.
#[derive(Parser)]
#[command(name = "sepeval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Inputs {
    /// Ground-truth records (JSON lines).
    #[arg(long)]
    gt: PathBuf,
    /// Prediction records (JSON lines with an n_classes header).
    #[arg(long)]
    pred: PathBuf,
    /// Overlap needed for a match.
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Match OOD objects by intersection-over-prediction.
    #[arg(long)]
    iop_for_ood: bool,
    /// Worker threads for per-image matching (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate at a fixed operating point.
    Eval {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long = "t-bg")]
        t_bg: f64,
        #[arg(long = "t-fg")]
        t_fg: f64,
        /// Weight of OBS relative to OFS.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the confidence histogram CSV here.
        #[arg(long)]
        hist: Option<PathBuf>,
        /// Name printed in the Method column.
        #[arg(long, default_value = "model")]
        label: String,
    },
    /// Grid-search the two thresholds for the best Separability.
    Sweep {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Write every grid point as CSV here.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Write the 40-bin confidence histogram CSV.
    Hist {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate the synthetic ME experiment.
    Toy {
        #[arg(long)]
        config: PathBuf,
        /// Train without the ME term.
        #[arg(long)]
        no_me: bool,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Also run the other arm and print the S ratio.
        #[arg(long)]
        compare: bool,
    },
    /// Check ME-loss gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

fn load(inputs: &Inputs) -> Result<MatchedDataset> {
    let gts = parse_ground_truth(open(&inputs.gt)?).map_err(|e| in_file(&inputs.gt, e))?;
    let (n_classes, preds) =
        parse_predictions(open(&inputs.pred)?).map_err(|e| in_file(&inputs.pred, e))?;
    let dataset = Dataset::new(n_classes, preds, gts)?;
    let cfg = MatchConfig {
        overlap_threshold: inputs.iou,
        iop_for_ood: inputs.iop_for_ood,
    };
    MatchedDataset::build(&dataset, &cfg, inputs.workers)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Eval {
            inputs,
            t_bg,
            t_fg,
            beta,
            report,
            hist,
            label,
        } => {
            let matched = load(&inputs)?;
            let cfg = EvalConfig {
                matching: MatchConfig {
                    overlap_threshold: inputs.iou,
                    iop_for_ood: inputs.iop_for_ood,
                },
                thresholds: ThresholdConfig::new(t_bg, t_fg)?,
                beta,
                ..Default::default()
            };
            let mut r = evaluate_matched(&matched, &cfg, inputs.workers)?;
            r.label = label;
            if let Some(path) = &hist {
                write(path, &matched.histogram().to_csv())?;
                r.histogram = Some(path.display().to_string());
            }
            if let Some(path) = &report {
                write(path, &emit_report(&r, ReportFormat::Json))?;
            }
            print!("{}", emit_report(&r, ReportFormat::Table));
        }
        Command::Sweep {
            inputs,
            step,
            beta,
            grid,
        } => {
            let matched = load(&inputs)?;
            let sweep = sweep_thresholds(&matched, beta, step)?;
            if let Some(path) = &grid {
                write(path, &sweep_grid_csv(&sweep))?;
            }
            print!("{}", sweep_summary(&sweep));
        }
        Command::Hist { inputs, out } => {
            let matched = load(&inputs)?;
            write(&out, &matched.histogram().to_csv())?;
        }
        Command::Toy {
            config,
            no_me,
            seeds,
            compare,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Io(format!("{}: {e}", config.display())))?;
            let cfg = ToyConfig::from_toml(&text)?;
            cfg.validate()?;
            let use_me = cfg.use_me && !no_me;
            let runs = run_experiment(&cfg, seeds.max(1), use_me)?;
            print!("{}", toy_table(&runs));
            if compare {
                let other = run_experiment(&cfg, seeds.max(1), !use_me)?;
                print!("{}", toy_table(&other));
                let med = |rs: &[sepeval::toylab::ToyRun]| {
                    median(&rs.iter().map(|r| r.evaluation.scores.s).collect::<Vec<_>>())
                };
                let (me, base) = if use_me {
                    (med(&runs), med(&other))
                } else {
                    (med(&other), med(&runs))
                };
                println!("median S ratio ME / baseline = {:.3}", me / base);
            }
        }
        Command::Gradcheck { trials, seed } => {
            let s = gradcheck(trials, seed, 1e-5, 1e-6);
            println!(
                "trials {}, checked {}, hinge active {}, skipped near kink {}, max relative error {:.3e}",
                s.trials, s.checked, s.active, s.skipped_near_kink, s.max_rel_error
            );
            if s.max_rel_error >= 1e-5 {
                return Err(Error::Invariant(format!(
                    "gradient check failed: max relative error {:.3e}",
                    s.max_rel_error
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage mistakes are input errors
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
