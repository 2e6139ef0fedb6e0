//! The `drobust` command-line front end.
//!
//! Exit codes: 0 on success, 2 for configuration, parse, I/O and domain
//! errors, 3 for numerical failures. Results go to stdout and files under
//! `--out`; diagnostics go to stderr.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::adversary::{solve_weights, GroupStats, GroupWeights, KlOptions};
use crate::config::{fold_standardizer, ExperimentConfig};
use crate::data::{self, stratified_split, Dataset, Format, GroupingSpec, Standardizer};
use crate::divergences::{DivergenceKind, FDivergenceSpec};
use crate::error::{Error, Result};
use crate::linear_model::ModelParams;
use crate::losses::LossKind;
use crate::metrics;
use crate::trainer::{cross_validate, train, Objective, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "drobust", version, about = "Distributionally robust linear classification")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for cross validation and repeats.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one objective on the configured data; writes model.txt and train_report.json.
    Train,
    /// Score a model on test data; writes report.json.
    Evaluate(EvaluateArgs),
    /// Repeated splits x objectives with cross-validated lambda; writes table.txt and table.csv.
    Experiment,
    /// Solve the inner reweighting problem for given losses; writes weights.json.
    Weights(WeightsArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Test data; defaults to the synthetic test draw of the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// csv or libsvm (default: from the extension).
    #[arg(long)]
    pub format: Option<String>,
    /// class, singleton, subcategory or column:NAME.
    #[arg(long)]
    pub grouping: Option<String>,
    #[arg(long)]
    pub divergence: Option<String>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Surrogate loss for the structural surrogate risk.
    #[arg(long)]
    pub loss: Option<String>,
    /// Skip the surrogate structural risk.
    #[arg(long)]
    pub no_surrogate: bool,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct WeightsInput {
    /// One loss per line (or comma/whitespace separated); each is its own group.
    #[arg(long)]
    losses: Option<PathBuf>,
    /// CSV with header `count,mean_loss`, one row per group.
    #[arg(long)]
    groups: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[command(flatten)]
    input: WeightsInput,
    #[arg(long, default_value = "kl")]
    pub divergence: String,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    init_logging();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("DROBUST_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        3
    } else {
        2
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match &cli.command {
        Command::Train => cmd_train(cli),
        Command::Evaluate(args) => cmd_evaluate(cli, args),
        Command::Experiment => cmd_experiment(cli),
        Command::Weights(args) => cmd_weights(cli, args),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("this command needs --config"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Trains on `train_set`, standardizing first when asked. The returned
/// model applies to raw features.
fn fit(config: &TrainConfig, train_set: &Dataset, standardize: bool) -> Result<crate::trainer::TrainReport> {
    if !standardize {
        return train(config, train_set);
    }
    let st = Standardizer::fit(train_set);
    let mut z = train_set.clone();
    st.apply(&mut z)?;
    let mut report = train(config, &z)?;
    report.params = fold_standardizer(&report.params, &st);
    Ok(report)
}

fn cmd_train(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let tc = cfg.train_config()?;
    let ds = cfg.load_dataset(cfg.experiment.seed)?;
    let report = fit(&tc, &ds, cfg.standardize())?;
    write_file(&cli.out, "model.txt", &report.params.to_text())?;
    write_file(&cli.out, "train_report.json", &to_json(&report))?;
    println!(
        "objective = {}\nepochs = {}\nconverged = {}\nfinal_objective = {:.10}",
        report.objective,
        report.epochs_run,
        report.converged,
        report.objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn format_for(path: &Path, explicit: Option<&str>) -> Result<Format> {
    if let Some(f) = explicit {
        return f.parse();
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(Format::Csv),
        _ => Ok(Format::Libsvm),
    }
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
    let params = ModelParams::load(&args.model)?;

    let mut sparse = false;
    let mut test = match (&args.data, cfg.as_ref().and_then(|c| c.synthetic.as_ref())) {
        (Some(path), _) => {
            let cfg_format = cfg.as_ref().and_then(|c| c.data.as_ref()).map(|d| d.format.as_str());
            let format = format_for(path, args.format.as_deref().or(cfg_format))?;
            sparse = format == Format::Libsvm;
            let raw = data::load(path, format)?;
            let subcat = cfg.as_ref().and_then(|c| c.data.as_ref()).is_some_and(|d| d.subcategory_task);
            let raw = if subcat { data::make_subcategory_task(&raw)? } else { raw };
            let grouping = args
                .grouping
                .clone()
                .or_else(|| cfg.as_ref().and_then(|c| c.data.as_ref()).map(|d| d.grouping.clone()));
            match grouping {
                Some(g) => data::apply_grouping(&raw, &g.parse::<GroupingSpec>()?)?,
                None if raw.groups().is_some() => raw,
                None => data::apply_grouping(&raw, &GroupingSpec::ByClass)?,
            }
        }
        (None, Some(s)) => s.draw(cfg.as_ref().map_or(0, |c| c.experiment.seed))?.1,
        (None, None) => return Err(Error::config("evaluate needs --data or a [synthetic] config")),
    };
    // trailing all-zero features are absent from sparse files
    if sparse && test.dim() < params.dim {
        test.pad_to_dim(params.dim)?;
    }

    let kind: DivergenceKind = match (&args.divergence, &cfg) {
        (Some(d), _) => d.parse()?,
        (None, Some(c)) => c.model.divergence.parse()?,
        (None, None) => DivergenceKind::Kl,
    };
    let delta = args.delta.or(cfg.as_ref().map(|c| c.model.delta)).unwrap_or(0.5);
    let spec = FDivergenceSpec::new(kind, delta)?;
    let loss = if args.no_surrogate {
        LossKind::ZeroOne
    } else {
        match (&args.loss, &cfg) {
            (Some(l), _) => l.parse()?,
            (None, Some(c)) if c.model.loss.parse::<LossKind>()?.is_margin() == params.is_margin() => {
                c.model.loss.parse()?
            }
            _ if params.is_margin() => LossKind::Logistic,
            _ => LossKind::SoftmaxCrossEntropy,
        }
    };

    let report = metrics::evaluate(&params, &test, &spec, loss)?;
    write_file(&cli.out, "report.json", &to_json(&report))?;
    print!("{}", report.to_key_value());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct RepeatResult {
    objective: Objective,
    lambda: f64,
    ordinary_risk: f64,
    structural_adv_risk_01: f64,
}

fn run_repeat(cfg: &ExperimentConfig, base: Option<&Dataset>, index: usize) -> Result<Vec<RepeatResult>> {
    let seed = cfg.experiment.seed.wrapping_add(index as u64);
    let (train_set, test_set) = match (base, &cfg.synthetic) {
        (Some(ds), _) => {
            let (tr, te) = stratified_split(ds, cfg.experiment.split, seed)?;
            (ds.subset(&tr), ds.subset(&te))
        }
        (None, Some(s)) => s.draw(seed)?,
        (None, None) => return Err(Error::config("config has no data source")),
    };
    let (train_set, test_set) = if cfg.standardize() {
        let st = Standardizer::fit(&train_set);
        let (mut a, mut b) = (train_set, test_set);
        st.apply(&mut a)?;
        st.apply(&mut b)?;
        (a, b)
    } else {
        (train_set, test_set)
    };
    let spec = cfg.divergence()?;
    cfg.objectives()?
        .into_iter()
        .map(|objective| {
            let template = TrainConfig {
                objective,
                seed,
                ..cfg.train_config()?
            };
            let cv = cross_validate(&template, &train_set, &cfg.experiment.lambda_grid, cfg.experiment.folds, seed)?;
            let chosen = TrainConfig {
                lambda: cv.chosen_lambda,
                ..template
            };
            let report = train(&chosen, &train_set)?;
            log::info!("repeat {index} {objective}: lambda {}", cv.chosen_lambda);
            Ok(RepeatResult {
                objective,
                lambda: cv.chosen_lambda,
                ordinary_risk: metrics::ordinary_risk(&report.params, &test_set)?,
                structural_adv_risk_01: metrics::structural_risk_01(&report.params, &test_set, &spec)?,
            })
        })
        .collect()
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Summary row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub objective: Objective,
    pub ordinary_mean: f64,
    pub ordinary_std: f64,
    pub structural_mean: f64,
    pub structural_std: f64,
}

/// Runs the configured repeats and returns one row per objective along with
/// the per-repeat CSV.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Vec<TableRow>, String)> {
    let base = match &cfg.data {
        Some(_) => Some(cfg.load_dataset(cfg.experiment.seed)?),
        None => None,
    };
    let results: Vec<Result<Vec<RepeatResult>>> = (0..cfg.experiment.repeats)
        .into_par_iter()
        .map(|r| run_repeat(cfg, base.as_ref(), r))
        .collect();
    let mut per_repeat = Vec::with_capacity(results.len());
    for (index, r) in results.into_iter().enumerate() {
        per_repeat.push(r.map_err(|e| Error::Repeat {
            index,
            source: Box::new(e),
        })?);
    }

    let mut detail = String::from("repeat,objective,lambda,ordinary_risk,structural_adv_risk_01\n");
    for (r, rows) in per_repeat.iter().enumerate() {
        for row in rows {
            let _ = writeln!(
                detail,
                "{r},{},{},{},{}",
                row.objective, row.lambda, row.ordinary_risk, row.structural_adv_risk_01
            );
        }
    }
    let rows = cfg
        .objectives()?
        .into_iter()
        .enumerate()
        .map(|(j, objective)| {
            let ord: Vec<f64> = per_repeat.iter().map(|r| r[j].ordinary_risk).collect();
            let st: Vec<f64> = per_repeat.iter().map(|r| r[j].structural_adv_risk_01).collect();
            let (ordinary_mean, ordinary_std) = mean_std(&ord);
            let (structural_mean, structural_std) = mean_std(&st);
            TableRow {
                objective,
                ordinary_mean,
                ordinary_std,
                structural_mean,
                structural_std,
            }
        })
        .collect();
    Ok((rows, detail))
}

pub fn table_text(rows: &[TableRow], spec: &FDivergenceSpec, repeats: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} delta={} repeats={}", spec.kind, spec.delta, repeats);
    let _ = writeln!(s, "{:<16} {:>20} {:>24}", "objective", "ordinary_risk", "structural_adv_risk_01");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<16} {:>20} {:>24}",
            r.objective.as_str(),
            format!("{:.4} ± {:.4}", r.ordinary_mean, r.ordinary_std),
            format!("{:.4} ± {:.4}", r.structural_mean, r.structural_std)
        );
    }
    s
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut s = String::from("objective,ordinary_mean,ordinary_std,structural_mean,structural_std\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.objective, r.ordinary_mean, r.ordinary_std, r.structural_mean, r.structural_std
        );
    }
    s
}

fn cmd_experiment(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let (rows, detail) = run_experiment(&cfg)?;
    let text = table_text(&rows, &cfg.divergence()?, cfg.experiment.repeats);
    write_file(&cli.out, "table.txt", &text)?;
    write_file(&cli.out, "table.csv", &table_csv(&rows))?;
    write_file(&cli.out, "repeats.csv", &detail)?;
    print!("{text}");
    Ok(())
}

fn parse_losses(text: &str, path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("not a number: {tok:?}"),
            })?;
            out.push(v);
        }
    }
    Ok(out)
}

fn parse_group_stats(text: &str, path: &Path) -> Result<GroupStats> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column {name:?}")))
    };
    let (ci, mi) = (col("count")?, col("mean_loss")?);
    let mut counts = Vec::new();
    let mut means = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        counts.push(rec[ci].parse().map_err(|_| parse_err(line, format!("bad count {:?}", &rec[ci])))?);
        means.push(rec[mi].parse().map_err(|_| parse_err(line, format!("bad mean_loss {:?}", &rec[mi])))?);
    }
    GroupStats::new(counts, means)
}

#[derive(Serialize)]
struct WeightsOutput<'a> {
    divergence: FDivergenceSpec,
    #[serde(flatten)]
    solution: &'a GroupWeights,
    max_violation: f64,
}

fn cmd_weights(cli: &Cli, args: &WeightsArgs) -> Result<()> {
    let spec = FDivergenceSpec::new(args.divergence.parse()?, args.delta)?;
    let stats = match (&args.input.losses, &args.input.groups) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            GroupStats::singletons(&parse_losses(&text, p)?)?
        }
        (None, Some(p)) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            parse_group_stats(&text, p)?
        }
        (None, None) => return Err(Error::config("weights needs --losses or --groups")),
    };
    let sol = solve_weights(&stats, &spec, &KlOptions::default())?;
    let out = WeightsOutput {
        divergence: spec,
        solution: &sol,
        max_violation: sol.max_violation(&stats, &spec),
    };
    write_file(&cli.out, "weights.json", &to_json(&out))?;
    let w: Vec<String> = sol.weights.iter().map(|w| format!("{w:.10}")).collect();
    println!("weights = {}", w.join(" "));
    println!("objective = {:.10}", sol.objective);
    println!("achieved_divergence = {:.10}", sol.achieved_divergence);
    if let Some(g) = sol.gamma {
        println!("gamma = {g:.10}");
    }
    println!("max_violation = {:.3e}", out.max_violation);
    Ok(())
}
