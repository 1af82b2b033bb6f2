//! The `agentcost` command line.
//!
//! Exit status: 0 on success, 64 for usage errors, 65 for bad input data,
//! 78 for bad configuration. `lint` exits 0, 1 or 2 for PASS, WARN or FAIL,
//! and `order-check` exits 1 when the reversed order changes a verdict.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use agentcost::harness::{
    build_leaderboard, lint_manifest, order_sensitivity_for_config, run_eval_with, run_optimize,
    BenchmarkManifest, EvalConfig, HarnessError, Leaderboard, EXIT_DATA, EXIT_USAGE,
};
use agentcost::ledger::LedgerWriter;
use agentcost::pricing::reprice;
use agentcost::{EvalLedger, Money, PriceSheet};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "agentcost",
    version,
    about = "Cost-controlled evaluation of AI agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run every strategy of a config and write the ledger
    Run {
        config: PathBuf,
        /// Ledger file to create
        #[arg(short, long, default_value = "ledger.jsonl")]
        out: PathBuf,
        /// Override the config's task parallelism
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Total the ledger's spend per strategy under a price sheet
    Reprice {
        ledger: PathBuf,
        sheet: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print the convex accuracy-cost frontier as JSON
    Frontier {
        ledger: PathBuf,
        sheet: PathBuf,
        /// Also write plot data for every strategy as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Jointly optimize the simulated pipeline described in the config's optimizer block
    Optimize {
        config: PathBuf,
        /// Write the optimization ledger here
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Check a benchmark manifest's holdout against its declared generality
    Lint { manifest: PathBuf },
    /// Write the leaderboard JSON consumed by the web page
    Export {
        ledger: PathBuf,
        sheet: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run one strategy in the given and reversed task order and compare verdicts
    OrderCheck {
        config: PathBuf,
        /// Strategy id, e.g. zero_shot:gpt-4
        #[arg(long)]
        strategy: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn data(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: message.to_string(),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    data(format!("{}: {e}", path.display()))
}

fn load_ledger(path: &Path) -> Result<EvalLedger, Failure> {
    EvalLedger::load(path).map_err(data)
}

fn load_sheet(path: &Path) -> Result<PriceSheet, Failure> {
    PriceSheet::load(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    writeln!(out, "{text}").map_err(data)
}

/// Parses `args` (program name first) and executes the command.
pub fn run(
    args: impl IntoIterator<Item = OsString>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

#[derive(Serialize)]
struct RepriceRow {
    id: String,
    runs: usize,
    total_exact: String,
    total: String,
    mean_per_run: String,
}

#[derive(Serialize)]
struct RepriceTable {
    currency: String,
    as_of: String,
    strategies: Vec<RepriceRow>,
}

fn reprice_table(ledger: &EvalLedger, sheet: &PriceSheet) -> Result<RepriceTable, Failure> {
    let totals = reprice(ledger, sheet).map_err(data)?;
    let strategies = totals
        .iter()
        .map(|(id, total): (&String, &Money)| {
            let runs = ledger.runs_of(id).count();
            Ok(RepriceRow {
                id: id.clone(),
                runs,
                total_exact: total.amount().normalize().to_string(),
                total: total.to_fixed(),
                mean_per_run: total.div_count(runs as u64).map_err(data)?.to_fixed(),
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    Ok(RepriceTable {
        currency: sheet.currency().as_str().to_owned(),
        as_of: sheet.as_of().to_string(),
        strategies,
    })
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Run {
            config,
            out: path,
            parallelism,
        } => {
            let mut config = EvalConfig::load(&config)?;
            if let Some(p) = parallelism {
                config.parallelism = p;
            }
            config.validate()?;
            let provider = config.provider.build(&config.manifest)?;
            let mut writer =
                LedgerWriter::create(&path, &config.manifest.benchmark_id).map_err(data)?;
            let ledger = run_eval_with(&config, provider.as_ref(), &mut |run| {
                let _ = writeln!(
                    err,
                    "{}#{}: {}/{} tasks passed",
                    run.strategy_id,
                    run.run_index,
                    run.results.iter().filter(|r| r.success).count(),
                    run.results.len()
                );
                writer.append(run).map_err(HarnessError::from)
            })?;
            writeln!(
                out,
                "wrote {} runs ({} calls) to {}",
                ledger.runs().len(),
                ledger.total_calls(),
                path.display()
            )
            .map_err(data)?;
            Ok(0)
        }
        Command::Reprice {
            ledger,
            sheet,
            format,
        } => {
            let table = reprice_table(&load_ledger(&ledger)?, &load_sheet(&sheet)?)?;
            match format {
                Format::Json => write_json(out, &table)?,
                Format::Text => {
                    let width = table
                        .strategies
                        .iter()
                        .map(|r| r.id.len())
                        .max()
                        .unwrap_or(8)
                        .max(8);
                    let mut text = format!(
                        "{:<width$}  {:>4}  {:>14}  {:>14}\n",
                        "strategy",
                        "runs",
                        format!("total {}", table.currency),
                        "mean per run"
                    );
                    for r in &table.strategies {
                        text += &format!(
                            "{:<width$}  {:>4}  {:>14}  {:>14}\n",
                            r.id, r.runs, r.total, r.mean_per_run
                        );
                    }
                    write!(out, "{text}").map_err(data)?;
                }
            }
            Ok(0)
        }
        Command::Frontier { ledger, sheet, csv } => {
            let board = build_leaderboard(&load_ledger(&ledger)?, &load_sheet(&sheet)?)?;
            write_json(out, &board.frontier)?;
            if let Some(path) = csv {
                write_plot_csv(&board, &path)?;
            }
            Ok(0)
        }
        Command::Optimize { config, ledger } => {
            let config = EvalConfig::load(&config)?;
            let outcome = run_optimize(&config)?;
            let totals = reprice(&outcome.ledger, &config.price_sheet).map_err(data)?;
            let fixed = Money::sum(config.price_sheet.currency(), totals.values()).map_err(data)?;
            if let Some(path) = ledger {
                outcome.ledger.save(&path).map_err(data)?;
            }
            #[derive(Serialize)]
            struct Out<'o> {
                #[serde(flatten)]
                report: agentcost::optimizer::OptimizationReport<'o>,
                fixed_cost: String,
                deployment_config: &'o agentcost::optimizer::AgentConfig,
            }
            write_json(
                out,
                &Out {
                    report: outcome.report(),
                    fixed_cost: fixed.to_fixed(),
                    deployment_config: &outcome.selection.trial.config,
                },
            )?;
            Ok(0)
        }
        Command::Lint { manifest } => {
            let text = std::fs::read_to_string(&manifest).map_err(|e| io_err(&manifest, e))?;
            let m = BenchmarkManifest::from_json(&text)?;
            let report = lint_manifest(&m);
            writeln!(out, "{}: {}", report.verdict, report.message).map_err(data)?;
            Ok(report.verdict.exit_code())
        }
        Command::Export {
            ledger,
            sheet,
            out: path,
        } => {
            let board = build_leaderboard(&load_ledger(&ledger)?, &load_sheet(&sheet)?)?;
            let text = board.to_json();
            match path {
                Some(p) => std::fs::write(&p, text + "\n").map_err(|e| io_err(&p, e))?,
                None => writeln!(out, "{text}").map_err(data)?,
            }
            Ok(0)
        }
        Command::OrderCheck { config, strategy } => {
            let config = EvalConfig::load(&config)?;
            let report = order_sensitivity_for_config(&config, &strategy)?;
            write_json(out, &report)?;
            Ok(if report.pass { 0 } else { 1 })
        }
    }
}

fn write_plot_csv(board: &Leaderboard, path: &Path) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(data)?;
    w.write_record([
        "label",
        "cost",
        "accuracy",
        "accuracy_ci_low",
        "accuracy_ci_high",
        "on_frontier",
    ])
    .map_err(data)?;
    let bound = |ci: Option<(f64, f64)>, hi: bool| {
        ci.map(|(l, h)| if hi { h } else { l }.to_string())
            .unwrap_or_default()
    };
    for s in &board.strategies {
        let on = board.frontier.iter().any(|v| v.label == s.id);
        w.write_record([
            s.id.clone(),
            s.cost.mean.clone(),
            s.accuracy.mean.to_string(),
            bound(s.accuracy.ci, false),
            bound(s.accuracy.ci, true),
            on.to_string(),
        ])
        .map_err(data)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
