use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use repid::dgp::sample_dgp;
use repid::experiments::{dgp_catalog, rank_eval, run_experiment, split_summary};
use repid::indices::{greenwell_report, h_statistic_report, shap_global_index, IndexConfig, ShapMode};
use repid::plot::{curves_svg, CurveStyle};
use repid::predict::{ExternalPredictor, ExternalSpec, LinearModel, TruthFn};
use repid::repid::{explain, reps_csv, tree_json};
use repid::rng::DEFAULT_SEED;
use repid::{load_dataset, make_grid, Dataset, Error, ErrorKind, GridStrategy, Method, Predictor, StopParams};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_PROTOCOL: u8 = 4;

#[derive(Parser)]
#[command(name = "repid", version, about = "Regional effect plots with implicit interaction detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a REPID tree for one feature and write tree.json, reps.csv, report.csv, ice.csv
    Explain(ExplainArgs),
    /// Rival interaction index of one feature with every other feature
    Indices(IndicesArgs),
    /// Run a catalog setting and write table.csv, summary.csv, splits.csv
    Experiment(ExperimentArgs),
    /// Render ice.csv or reps.csv as SVG
    Plot(PlotArgs),
    /// Draw a dataset from a catalog setting
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Feature CSV with a header row
    #[arg(long)]
    data: PathBuf,
    /// truth:<name>, linear:<model.json>, exec:<command> or file:<points>:<preds>
    #[arg(long)]
    predictor: String,
    /// Feature of interest (column name)
    #[arg(long)]
    feature: String,
    /// Seconds allowed per external predictor call
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// equidistant, quantile or sample
    #[arg(long, default_value = "equidistant")]
    grid: String,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(2..))]
    grid_size: u64,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    #[arg(long, default_value_t = 10)]
    min_node: usize,
    #[arg(long, default_value_t = 0.15)]
    gamma: f64,
    #[arg(long, default_value_t = 0.01)]
    min_improvement: f64,
}

#[derive(Args)]
struct IndicesArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// h_statistic, greenwell or shap
    #[arg(long, default_value = "h_statistic")]
    method: String,
    /// Evaluation points for the H-statistic
    #[arg(long, default_value_t = 20)]
    h_sample: usize,
    /// Grid size for the Greenwell index
    #[arg(long, default_value_t = 20)]
    grid_size: usize,
    /// Observations averaged by the SHAP index
    #[arg(long, default_value_t = 100)]
    shap_obs: usize,
    /// Permutations per observation; 0 enumerates all coalitions
    #[arg(long, default_value_t = 20)]
    shap_perms: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    setting: String,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    reps: Option<u64>,
    /// Comma-separated subset of repid, h_statistic, greenwell, shap
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Deepest level reported in splits.csv
    #[arg(long, default_value_t = 3)]
    split_depth: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// ice.csv or reps.csv
    input: PathBuf,
    /// Which regional curve to draw: raw or centered
    #[arg(long, default_value = "raw")]
    style: String,
    /// Accepted for uniformity; plotting is deterministic
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    setting: String,
    /// Rows to draw; defaults to the setting's size
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the noisy targets, one column `y`
    #[arg(long)]
    targets: Option<PathBuf>,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn load(model: &ModelArgs) -> Result<(Dataset, Predictor, usize), Error> {
    let ds = load_dataset(&read(&model.data)?)?;
    let s = ds
        .feature_index(&model.feature)
        .ok_or_else(|| Error::Invalid(format!("feature '{}' is not a column of {}", model.feature, model.data.display())))?;
    let pred = if let Some(name) = model.predictor.strip_prefix("truth:") {
        let f = TruthFn::parse(name)?;
        f.check_arity(ds.p())?;
        Predictor::Truth(f)
    } else if let Some(path) = model.predictor.strip_prefix("linear:") {
        let m: LinearModel = serde_json::from_str(&read(Path::new(path))?)?;
        m.validate()?;
        Predictor::Linear(m)
    } else {
        let spec = ExternalSpec::parse(&model.predictor, model.timeout)?;
        Predictor::External(ExternalPredictor::new(spec, ds.metas().to_vec())?)
    };
    Ok((ds, pred, s))
}

fn cmd_explain(a: &ExplainArgs) -> Result<(), Error> {
    let (ds, pred, s) = load(&a.model)?;
    let stop = StopParams {
        max_depth: a.max_depth,
        min_node: a.min_node,
        gamma: a.gamma,
        min_abs_improvement: a.min_improvement,
        max_candidates: None,
    };
    stop.validate()?;
    let strategy: GridStrategy = a.grid.parse()?;
    let grid = make_grid(&ds, s, strategy, a.grid_size as usize)?;
    let ex = explain(&pred, &ds, s, &grid, &stop)?;
    let json = serde_json::to_string_pretty(&tree_json(&ex.tree, &ex.reps))?;
    write(&a.model.out, "tree.json", &(json + "\n"))?;
    write(&a.model.out, "reps.csv", &reps_csv(&ex.reps))?;
    write(&a.model.out, "report.csv", &ex.report.to_csv())?;
    write(&a.model.out, "ice.csv", &ex.ice.to_csv())
}

fn cmd_indices(a: &IndicesArgs) -> Result<(), Error> {
    let (ds, pred, s) = load(&a.model)?;
    let cfg = IndexConfig {
        h_sample: a.h_sample,
        shap_mode: if a.shap_perms == 0 { ShapMode::Exact } else { ShapMode::Sampled(a.shap_perms) },
        shap_obs: a.shap_obs,
        grid_m: a.grid_size,
        seed: a.model.seed,
    };
    cfg.validate()?;
    let report = match a.method.parse::<Method>()? {
        Method::HStatistic => h_statistic_report(&pred, &ds, s, &cfg)?,
        Method::Greenwell => greenwell_report(&pred, &ds, s, &cfg)?,
        Method::Shap => shap_global_index(&pred, &ds, s, &cfg)?,
        Method::Repid => return Err(Error::Invalid("use the explain command for repid".into())),
    };
    write(&a.model.out, "report.csv", &report.to_csv())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<(), Error> {
    let mut setting = dgp_catalog(&a.setting)?;
    if let Some(r) = a.reps {
        setting = setting.with_reps(r as usize);
    }
    if let Some(names) = &a.methods {
        let methods = names.iter().map(|m| m.trim().parse()).collect::<Result<Vec<Method>, _>>()?;
        setting = setting.with_methods(methods);
    }
    let table = run_experiment(&setting, a.seed)?;
    let summary = rank_eval(&table, &setting.truth_ranks);
    let trees: Vec<_> = table.trees.iter().map(|(_, t)| t.clone()).collect();
    let splits = split_summary(&trees, a.split_depth);
    write(&a.out, "table.csv", &table.to_csv())?;
    write(&a.out, "summary.csv", &summary.to_csv())?;
    write(&a.out, "splits.csv", &splits.to_csv())?;
    for f in &table.failures {
        let method = f.method.map_or("data".to_string(), |m| m.to_string());
        eprintln!("warning: rep {} {method}: {}", f.rep, f.message);
    }
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> Result<(), Error> {
    let style: CurveStyle = a.style.parse()?;
    let svg = curves_svg(&read(&a.input)?, style)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&a.out, svg)?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Error> {
    let setting = dgp_catalog(&a.setting)?;
    let n = a.n.map_or(setting.n, |n| n as usize);
    let (ds, y) = sample_dgp(&setting.dgp, n, a.seed)?;
    fs::write(&a.out, ds.to_csv()?)?;
    if let Some(path) = &a.targets {
        let mut s = String::from("y\n");
        for v in y {
            s.push_str(&repid::data::format_number(v));
            s.push('\n');
        }
        fs::write(path, s)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Explain(a) => cmd_explain(a),
        Command::Indices(a) => cmd_indices(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            match e {
                Error::UnknownSetting { .. } => ExitCode::from(EXIT_USAGE),
                _ => match e.kind() {
                    ErrorKind::Data => ExitCode::from(EXIT_DATA),
                    ErrorKind::Protocol => ExitCode::from(EXIT_PROTOCOL),
                },
            }
        }
    }
}
