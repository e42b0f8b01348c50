//! `policy-lab`: run experiment sweeps, theory drivers and plots from the shell.
//!
//! Exit codes: 0 on success, 1 on a configuration, argument or I/O error,
//! 2 when a theory driver measures a bound violation.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use policy_lab::experiment::{
    aggregate, emit_plot, read_records, run_sweep_with_threads, write_curves_csv, write_records_csv,
    write_summary_csv, ExperimentConfig,
};
use policy_lab::theory::{
    check_gravity_condition, run_domino_with, run_unlearning, write_theory_csv, FlipCriterion, StepSchedule,
    TheoryRow, DOMINO_BUDGET,
};
use policy_lab::parametrization::DEFAULT_ESCORT_P;
use policy_lab::RuleKind;

#[derive(Parser, Debug)]
#[command(name = "policy-lab", version, about = "Tabular policy-update laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a seeded sweep from a JSON config and write CSV, summary and SVG outputs.
    Run(RunArgs),
    /// Unlearning: n updates towards a1, then count updates back to the start.
    Unlearn(UnlearnArgs),
    /// Domino chain: steps until the first state of a chain flips.
    Domino(DominoArgs),
    /// Gravity-well condition on random single-state instances.
    Gravity(GravityArgs),
    /// Render a results CSV as a steps-vs-learning-rate SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `n_seeds` from the config.
    #[arg(long)]
    seeds: Option<usize>,
    /// Overrides `base_seed` from the config.
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScheduleArg {
    Constant,
    Decaying,
}

#[derive(Args, Debug)]
struct TheoryCommon {
    /// Comma-separated rule labels.
    #[arg(long, value_delimiter = ',')]
    rule: Vec<String>,
    /// Comma-separated learning rates.
    #[arg(long, value_delimiter = ',')]
    eta: Vec<f64>,
    /// Exponent of the escort parametrization.
    #[arg(long, default_value_t = DEFAULT_ESCORT_P)]
    escort_p: f64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct UnlearnArgs {
    #[command(flatten)]
    common: TheoryCommon,
    /// Comma-separated forward update counts.
    #[arg(long, value_delimiter = ',', default_values_t = [10u64, 100, 1_000, 10_000])]
    n: Vec<u64>,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Constant)]
    schedule: ScheduleArg,
}

#[derive(Args, Debug)]
struct DominoArgs {
    #[command(flatten)]
    common: TheoryCommon,
    /// Comma-separated chain lengths.
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 4, 5, 6, 7, 8, 9, 10, 11, 12])]
    states: Vec<usize>,
    /// Step budget per chain.
    #[arg(long, default_value_t = DOMINO_BUDGET)]
    budget: u64,
    /// Count a flip only once the second action is strictly above its start probability.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct GravityArgs {
    #[command(flatten)]
    common: TheoryCommon,
    /// Random instances per (rule, eta).
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    /// Largest number of actions; instances draw |A| from 2..=states.
    #[arg(long, default_value_t = 6)]
    states: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Results CSV written by `run`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "plot.svg")]
    out: PathBuf,
}

enum Outcome {
    Done,
    Violation,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => {
            eprintln!("bound violation detected");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Run(args) => run(args),
        Command::Unlearn(args) => unlearn(args),
        Command::Domino(args) => domino(args),
        Command::Gravity(args) => gravity(args),
        Command::Plot(args) => plot(args),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn run(args: RunArgs) -> Result<Outcome> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(n) = args.seeds {
        config.n_seeds = n;
    }
    if let Some(seed) = args.base_seed {
        config.base_seed = seed;
    }
    config.validate()?;
    if args.threads == 0 {
        bail!("--threads must be at least 1");
    }
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let records = run_sweep_with_threads(&config, args.threads)?;
    let summary = aggregate(&records);
    write_records_csv(&records, create(&args.out.join("results.csv"))?)?;
    write_curves_csv(&records, create(&args.out.join("curves.csv"))?)?;
    write_summary_csv(&summary, create(&args.out.join("summary.csv"))?)?;
    emit_plot(&summary, &args.out.join("plot.svg"))?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "rule\teta\tmedian\tiqr\tcensored")?;
    for row in &summary {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.2}",
            row.rule, row.eta, row.median, row.iqr, row.censored_fraction
        )?;
    }
    Ok(Outcome::Done)
}

fn rules(common: &TheoryCommon, default: &[&str]) -> Result<Vec<RuleKind>> {
    let labels: Vec<String> = if common.rule.is_empty() {
        default.iter().map(|s| s.to_string()).collect()
    } else {
        common.rule.clone()
    };
    labels
        .iter()
        .map(|label| Ok(RuleKind::from_label(label, common.escort_p)?))
        .collect()
}

fn etas(common: &TheoryCommon, default: &[f64]) -> Result<Vec<f64>> {
    let etas = if common.eta.is_empty() {
        default.to_vec()
    } else {
        common.eta.clone()
    };
    if let Some(bad) = etas.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        bail!("learning rates must be positive and finite, got {bad}");
    }
    Ok(etas)
}

fn emit(rows: &[TheoryRow], out: &Option<PathBuf>) -> Result<Outcome> {
    match out {
        Some(path) => write_theory_csv(rows, create(path)?)?,
        None => write_theory_csv(rows, io::stdout().lock())?,
    }
    Ok(if rows.iter().any(|r| r.violated) {
        Outcome::Violation
    } else {
        Outcome::Done
    })
}

const ALL_RULES: [&str; 5] = ["pg-sm", "pg-es", "di", "ce", "mce"];

fn unlearn(args: UnlearnArgs) -> Result<Outcome> {
    let rules = rules(&args.common, &ALL_RULES)?;
    let etas = etas(&args.common, &[0.1, 0.5, 1.0, 2.0])?;
    let mut rows = Vec::new();
    for &rule in &rules {
        for &eta in &etas {
            for &n in &args.n {
                let schedule = match args.schedule {
                    ScheduleArg::Constant => StepSchedule::Constant { eta },
                    ScheduleArg::Decaying => StepSchedule::Decaying { eta1: eta },
                };
                rows.push(TheoryRow::from(&run_unlearning(rule, schedule, n)?));
            }
        }
    }
    emit(&rows, &args.common.out)
}

fn domino(args: DominoArgs) -> Result<Outcome> {
    let rules = rules(&args.common, &["pg-sm", "di", "ce", "mce"])?;
    let etas = etas(&args.common, &[1.0])?;
    let criterion = if args.strict {
        FlipCriterion::Strict
    } else {
        FlipCriterion::Recovered
    };
    let mut rows = Vec::new();
    for &rule in &rules {
        for &eta in &etas {
            for &len in &args.states {
                rows.push(TheoryRow::from(&run_domino_with(rule, eta, len, criterion, args.budget)?));
            }
        }
    }
    emit(&rows, &args.common.out)
}

fn gravity(args: GravityArgs) -> Result<Outcome> {
    let rules = rules(&args.common, &ALL_RULES)?;
    let etas = etas(&args.common, &[0.1, 1.0, 10.0])?;
    if args.states < 2 {
        bail!("--states must be at least 2");
    }
    let mut rows = Vec::new();
    for &rule in &rules {
        for &eta in &etas {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let mut failures = 0u64;
            for _ in 0..args.n {
                let n_a = rng.gen_range(2..=args.states);
                let theta: Vec<f64> = match rule {
                    RuleKind::Di => {
                        let raw: Vec<f64> = (0..n_a).map(|_| rng.gen::<f64>() + 1e-12).collect();
                        let z: f64 = raw.iter().sum();
                        raw.into_iter().map(|x| x / z).collect()
                    }
                    RuleKind::PgEs { .. } => (0..n_a).map(|_| rng.gen_range(0.1..5.0)).collect(),
                    _ => (0..n_a).map(|_| rng.gen_range(-5.0..5.0)).collect(),
                };
                let q: Vec<f64> = (0..n_a).map(|_| rng.gen()).collect();
                if !check_gravity_condition(rule, &theta, &q, eta)? {
                    failures += 1;
                }
            }
            // Only the direct and modified cross-entropy updates are guaranteed
            // to favour the best action.
            let guaranteed = matches!(rule, RuleKind::Di | RuleKind::Mce);
            rows.push(TheoryRow {
                setting: "gravity".to_string(),
                rule: rule.label().to_string(),
                eta,
                n_or_s: args.n,
                measured: Some(failures),
                bound: guaranteed.then_some(0.0),
                violated: guaranteed && failures > 0,
            });
        }
    }
    emit(&rows, &args.common.out)
}

fn plot(args: PlotArgs) -> Result<Outcome> {
    let file = File::open(&args.input).with_context(|| format!("cannot open {}", args.input.display()))?;
    let records = read_records(file, None::<File>)?;
    emit_plot(&aggregate(&records), &args.out)?;
    Ok(Outcome::Done)
}
