//! Catalog of simulation settings with known ground truth and a seeded,
//! repeatable runner that scores every interaction method on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::dgp::{sample_dgp, DgpSpec, Marginal, NoiseRule};
use crate::error::{Error, Result};
use crate::grid::{make_grid, GridStrategy};
use crate::indices::{greenwell_report, h_statistic_report, shap_global_index, IndexConfig, ShapMode};
use crate::predict::{fit_ols, Predictor, Term, Transform, TruthFn};
use crate::repid::{explain, RepidTree, SplitRule, StopParams};
use crate::report::{dense_ranks, Method};
use crate::rng::derive_seed;
use crate::stats::{median, quantile_sorted, sample_sd};

pub const SETTING_NAMES: [&str; 7] = [
    "sim3_running",
    "weak_initial",
    "weak_small_main",
    "weak_tiny_mains",
    "weak_corr",
    "nonlinear10",
    "linear7",
];

/// Threshold under which a relative score (REPID, SHAP) counts as zero.
pub const RELATIVE_ZERO: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorRule {
    /// OLS on the given terms, fitted to the noisy targets.
    OlsCorrect(Vec<Term>),
    /// The noiseless truth function itself.
    TruthNoiseless,
}

/// Expected interaction rank of a feature with the feature of interest.
/// Equal ranks carry no ordering constraint between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthRank {
    Rank(usize),
    Zero,
}

impl fmt::Display for TruthRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruthRank::Rank(k) => write!(f, "{k}"),
            TruthRank::Zero => f.write_str("zero"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub name: String,
    pub dgp: DgpSpec,
    pub n: usize,
    pub predictor_rule: PredictorRule,
    pub feature_s: usize,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub cfg: IndexConfig,
    pub stop: StopParams,
    pub truth_ranks: BTreeMap<usize, TruthRank>,
}

impl Setting {
    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn with_methods(mut self, methods: Vec<Method>) -> Self {
        self.methods = methods;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Invalid("reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Invalid("at least one method is required".into()));
        }
        if self.feature_s >= self.dgp.p() {
            return Err(Error::Invalid("feature of interest out of range".into()));
        }
        self.stop.validate()?;
        self.cfg.validate()
    }
}

fn uniform(p: usize) -> Vec<Marginal> {
    vec![Marginal::Uniform { low: -1.0, high: 1.0 }; p]
}

fn ranks(pairs: &[(usize, TruthRank)]) -> BTreeMap<usize, TruthRank> {
    pairs.iter().copied().collect()
}

fn weak(name: &str, mains: [f64; 4], b12: f64, rho12: f64) -> Setting {
    let mut dgp = DgpSpec::independent(
        uniform(4),
        TruthFn::weak_family(mains, b12),
        NoiseRule::RelativeToSignal { factor: 0.1 },
    );
    if rho12 != 0.0 {
        dgp = dgp.with_correlation(0, 1, rho12);
    }
    let terms = vec![
        Term::intercept(),
        Term::main(0),
        Term::main(1),
        Term::main(2),
        Term::main(3),
        Term::product(&[0, 1]),
        Term::product(&[1, 2]),
        Term::product(&[0, 2]),
        Term::product(&[0, 1, 2]),
    ];
    let truth = if b12 > 1.0 {
        ranks(&[(0, TruthRank::Rank(1)), (2, TruthRank::Rank(2)), (3, TruthRank::Zero)])
    } else {
        ranks(&[(0, TruthRank::Rank(1)), (2, TruthRank::Rank(1)), (3, TruthRank::Zero)])
    };
    Setting {
        name: name.into(),
        dgp,
        n: 1000,
        predictor_rule: PredictorRule::OlsCorrect(terms),
        feature_s: 1,
        methods: Method::ALL.to_vec(),
        reps: 30,
        cfg: IndexConfig {
            shap_mode: ShapMode::Exact,
            ..IndexConfig::default()
        },
        stop: StopParams::default(),
        truth_ranks: truth,
    }
}

/// Looks up a named setting.
pub fn dgp_catalog(name: &str) -> Result<Setting> {
    let setting = match name {
        "sim3_running" => {
            let marginals = vec![
                Marginal::Uniform { low: -1.0, high: 1.0 },
                Marginal::Uniform { low: -1.0, high: 1.0 },
                Marginal::Bernoulli { p: 0.5 },
                Marginal::Bernoulli { p: 0.7 },
                Marginal::Bernoulli { p: 0.5 },
                Marginal::Normal {
                    mean: 1.0,
                    sd: 5f64.sqrt(),
                },
            ];
            let terms = vec![
                Term::intercept(),
                Term::main(0),
                Term::main(1),
                Term::main(1).times(0, Transform::IndicatorGt(0.0)),
                Term::main(1).times(2, Transform::IndicatorEq(0.0)),
            ];
            Setting {
                name: name.into(),
                dgp: DgpSpec::independent(marginals, TruthFn::Sim3Running, NoiseRule::Absolute { sd: 1.0 }),
                n: 500,
                predictor_rule: PredictorRule::OlsCorrect(terms),
                feature_s: 1,
                methods: vec![Method::Repid],
                reps: 10,
                cfg: IndexConfig::default(),
                // The running example is read as a two-level tree without
                // the improvement-factor gate.
                stop: StopParams {
                    max_depth: 2,
                    gamma: 0.0,
                    ..StopParams::default()
                },
                truth_ranks: ranks(&[
                    (0, TruthRank::Rank(2)),
                    (2, TruthRank::Rank(1)),
                    (3, TruthRank::Zero),
                    (4, TruthRank::Zero),
                    (5, TruthRank::Zero),
                ]),
            }
        }
        "weak_initial" => weak(name, [1.0; 4], 1.0, 0.0),
        "weak_small_main" => weak(name, [0.1, 1.0, 1.0, 1.0], 1.0, 0.0),
        "weak_tiny_mains" => weak(name, [0.1; 4], 2.0, 0.0),
        "weak_corr" => weak(name, [1.0; 4], 1.0, 0.9),
        "nonlinear10" => Setting {
            name: name.into(),
            dgp: DgpSpec::independent(uniform(10), TruthFn::Nonlinear10, NoiseRule::Absolute { sd: 0.5 }),
            n: 2000,
            predictor_rule: PredictorRule::TruthNoiseless,
            feature_s: 1,
            methods: vec![Method::Repid, Method::HStatistic],
            reps: 30,
            cfg: IndexConfig::default(),
            stop: StopParams {
                max_depth: 7,
                ..StopParams::default()
            },
            truth_ranks: (0..10)
                .filter(|&j| j != 1)
                .map(|j| {
                    let r = if [0, 2, 3, 5, 7].contains(&j) {
                        TruthRank::Rank(1)
                    } else {
                        TruthRank::Zero
                    };
                    (j, r)
                })
                .collect(),
        },
        "linear7" => {
            let mut marginals = uniform(5);
            marginals.push(Marginal::Normal { mean: 0.0, sd: 2.0 });
            marginals.push(Marginal::Normal { mean: 2.0, sd: 3.0 });
            Setting {
                name: name.into(),
                dgp: DgpSpec::independent(marginals, TruthFn::Linear7, NoiseRule::RelativeToSignal { factor: 0.1 }),
                n: 2000,
                predictor_rule: PredictorRule::TruthNoiseless,
                feature_s: 1,
                methods: vec![Method::Repid, Method::HStatistic],
                reps: 30,
                cfg: IndexConfig::default(),
                stop: StopParams::default(),
                truth_ranks: ranks(&[
                    (0, TruthRank::Zero),
                    (2, TruthRank::Rank(3)),
                    (3, TruthRank::Rank(2)),
                    (4, TruthRank::Rank(1)),
                    (5, TruthRank::Zero),
                    (6, TruthRank::Zero),
                ]),
            }
        }
        other => {
            return Err(Error::UnknownSetting {
                name: other.into(),
                available: SETTING_NAMES.join(", "),
            })
        }
    };
    Ok(setting)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub rep: usize,
    pub method: Method,
    pub feature: usize,
    pub score: f64,
    /// Dense rank within (rep, method); 1 = strongest.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub method: Option<Method>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub setting: String,
    pub feature_names: Vec<String>,
    pub feature_s: usize,
    pub reps: usize,
    pub rows: Vec<TableRow>,
    /// REPID trees by rep (only for reps where REPID ran).
    pub trees: Vec<(usize, RepidTree)>,
    pub failures: Vec<RepFailure>,
}

impl ExperimentTable {
    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    }

    /// Scores of one (method, feature) across reps, in rep order.
    pub fn scores(&self, method: Method, feature: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.feature == feature)
            .map(|r| r.score)
            .collect()
    }

    pub fn median_score(&self, method: Method, feature: usize) -> f64 {
        median(&self.scores(method, feature))
    }

    /// Scores of one (rep, method) keyed by feature.
    pub fn rep_scores(&self, rep: usize, method: Method) -> BTreeMap<usize, f64> {
        self.rows
            .iter()
            .filter(|r| r.rep == rep && r.method == method)
            .map(|r| (r.feature, r.score))
            .collect()
    }

    /// Long format: `rep,method,feature,score,rank`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rep,method,feature,score,rank\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.rep, r.method, self.feature_names[r.feature], r.score, r.rank
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "setting": self.setting,
            "feature_s": self.feature_names[self.feature_s],
            "reps": self.reps,
            "rows": self.rows.iter().map(|r| serde_json::json!({
                "rep": r.rep,
                "method": r.method,
                "feature": self.feature_names[r.feature],
                "score": r.score,
                "rank": r.rank,
            })).collect::<Vec<_>>(),
            "failures": self.failures,
        })
    }
}

fn build_predictor(setting: &Setting, ds: &crate::data::Dataset, targets: &[f64]) -> Result<Predictor> {
    Ok(match &setting.predictor_rule {
        PredictorRule::OlsCorrect(terms) => Predictor::Linear(fit_ols(ds, targets, terms)?),
        PredictorRule::TruthNoiseless => Predictor::Truth(setting.dgp.truth.clone()),
    })
}

struct RepOutcome {
    rows: Vec<TableRow>,
    tree: Option<RepidTree>,
    failures: Vec<RepFailure>,
}

fn run_rep(setting: &Setting, rep: usize, base_seed: u64) -> RepOutcome {
    let seed = derive_seed(base_seed, &[rep as u64]);
    let mut out = RepOutcome {
        rows: Vec::new(),
        tree: None,
        failures: Vec::new(),
    };
    let fail = |method: Option<Method>, e: Error| RepFailure {
        rep,
        method,
        message: e.to_string(),
    };
    let prepared = sample_dgp(&setting.dgp, setting.n, seed)
        .and_then(|(ds, y)| build_predictor(setting, &ds, &y).map(|pred| (ds, pred)));
    let (ds, pred) = match prepared {
        Ok(v) => v,
        Err(e) => {
            out.failures.push(fail(None, e));
            return out;
        }
    };
    let s = setting.feature_s;
    let cfg = IndexConfig {
        seed: derive_seed(seed, &[u64::MAX]),
        ..setting.cfg
    };
    for &method in &setting.methods {
        let result = match method {
            Method::Repid => make_grid(&ds, s, GridStrategy::Equidistant, cfg.grid_m)
                .and_then(|grid| explain(&pred, &ds, s, &grid, &setting.stop))
                .map(|ex| {
                    let report = ex.report;
                    out.tree = Some(ex.tree);
                    report
                }),
            Method::HStatistic => h_statistic_report(&pred, &ds, s, &cfg),
            Method::Greenwell => greenwell_report(&pred, &ds, s, &cfg),
            Method::Shap => shap_global_index(&pred, &ds, s, &cfg),
        };
        match result {
            Ok(report) => {
                // Features never split on (REPID) score zero.
                let scores: BTreeMap<usize, f64> = (0..ds.p())
                    .filter(|&j| j != s)
                    .map(|j| (j, report.score(j)))
                    .collect();
                let rank = dense_ranks(&scores);
                out.rows.extend(scores.iter().map(|(&feature, &score)| TableRow {
                    rep,
                    method,
                    feature,
                    score,
                    rank: rank[&feature],
                }));
            }
            Err(e) => out.failures.push(fail(Some(method), e)),
        }
    }
    out
}

/// Runs every rep of a setting. Rep `r` draws its data from
/// `derive_seed(base_seed, [r])` only, so results do not depend on the
/// number of reps or on scheduling.
pub fn run_experiment(setting: &Setting, base_seed: u64) -> Result<ExperimentTable> {
    setting.validate()?;
    let outcomes: Vec<RepOutcome> = (0..setting.reps)
        .into_par_iter()
        .map(|rep| run_rep(setting, rep, base_seed))
        .collect();
    let mut table = ExperimentTable {
        setting: setting.name.clone(),
        feature_names: setting.dgp.names.clone(),
        feature_s: setting.feature_s,
        reps: setting.reps,
        rows: Vec::new(),
        trees: Vec::new(),
        failures: Vec::new(),
    };
    for (rep, o) in outcomes.into_iter().enumerate() {
        table.rows.extend(o.rows);
        table.failures.extend(o.failures);
        if let Some(t) = o.tree {
            table.trees.push((rep, t));
        }
    }
    table
        .rows
        .sort_by(|a, b| (a.rep, a.method, a.feature).cmp(&(b.rep, b.method, b.feature)));
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAgreement {
    pub method: Method,
    /// Reps with a complete set of scores for this method.
    pub reps: usize,
    /// Share of those reps whose scores match the truth ordering.
    pub agreement: f64,
    /// Score below which a zero-truth feature counts as zero.
    pub zero_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub methods: Vec<MethodAgreement>,
}

impl RankSummary {
    pub fn agreement(&self, method: Method) -> Option<f64> {
        self.methods.iter().find(|m| m.method == method).map(|m| m.agreement)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,reps,agreement,zero_threshold\n");
        for m in &self.methods {
            out.push_str(&format!("{},{},{},{}\n", m.method, m.reps, m.agreement, m.zero_threshold));
        }
        out
    }
}

/// Whether one rep's scores respect the truth: every pair of features with
/// different truth ranks is ordered accordingly (strictly), and every
/// zero-truth feature scores below `zero_threshold`.
pub fn scores_agree(scores: &BTreeMap<usize, f64>, truth: &BTreeMap<usize, TruthRank>, zero_threshold: f64) -> bool {
    let get = |j: &usize| scores.get(j).copied().unwrap_or(0.0);
    for (a, ra) in truth {
        match ra {
            TruthRank::Zero => {
                if get(a) >= zero_threshold {
                    return false;
                }
            }
            TruthRank::Rank(ka) => {
                for (b, rb) in truth {
                    if let TruthRank::Rank(kb) = rb {
                        if ka < kb && get(a) <= get(b) {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}

/// Per-method share of reps that reproduce the truth ranking. Zero
/// thresholds are fixed for relative scores and, for unbounded scores, the
/// 10% quantile of the method's nonzero-truth scores pooled over reps.
pub fn rank_eval(table: &ExperimentTable, truth: &BTreeMap<usize, TruthRank>) -> RankSummary {
    let methods = table
        .methods()
        .into_iter()
        .map(|method| {
            let threshold = if method.is_relative() {
                RELATIVE_ZERO
            } else {
                let mut pooled: Vec<f64> = table
                    .rows
                    .iter()
                    .filter(|r| r.method == method && matches!(truth.get(&r.feature), Some(TruthRank::Rank(_))))
                    .map(|r| r.score)
                    .collect();
                pooled.sort_by(f64::total_cmp);
                if pooled.is_empty() {
                    RELATIVE_ZERO
                } else {
                    quantile_sorted(&pooled, 0.1)
                }
            };
            let mut reps: Vec<usize> = table.rows.iter().filter(|r| r.method == method).map(|r| r.rep).collect();
            reps.dedup();
            let ok = reps
                .iter()
                .filter(|&&rep| scores_agree(&table.rep_scores(rep, method), truth, threshold))
                .count();
            MethodAgreement {
                method,
                reps: reps.len(),
                agreement: if reps.is_empty() { 0.0 } else { ok as f64 / reps.len() as f64 },
                zero_threshold: threshold,
            }
        })
        .collect();
    RankSummary { methods }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummaryRow {
    /// Split level, 1 = root split.
    pub depth: usize,
    /// Node position within the level, 1 = leftmost.
    pub slot: usize,
    pub feature: String,
    /// Share of trees that split this slot on this feature.
    pub share: f64,
    pub count: usize,
    /// Mean and sample sd of numeric thresholds (NaN when undefined).
    pub value_mean: f64,
    pub value_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub trees: usize,
    pub rows: Vec<SplitSummaryRow>,
}

impl SplitSummary {
    pub fn get(&self, depth: usize, slot: usize, feature: &str) -> Option<&SplitSummaryRow> {
        self.rows
            .iter()
            .find(|r| r.depth == depth && r.slot == slot && r.feature == feature)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth,slot,feature,share,count,value_mean,value_sd\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.depth, r.slot, r.feature, r.share, r.count, r.value_mean, r.value_sd
            ));
        }
        out
    }
}

/// Feature shares and threshold statistics of the splits in the first
/// `depth_limit` levels, pooled over trees.
pub fn split_summary(trees: &[RepidTree], depth_limit: usize) -> SplitSummary {
    let mut cells: BTreeMap<(usize, usize, usize), Vec<f64>> = BTreeMap::new();
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    for tree in trees {
        for node in tree.parents().filter(|n| n.depth < depth_limit) {
            let split = node.split.as_ref().expect("parent has a split");
            names.insert(split.feature, tree.metas[split.feature].name.clone());
            let value = match split.rule {
                SplitRule::NumericLe(t) => t,
                SplitRule::CategorySubset(_) => f64::NAN,
            };
            cells
                .entry((node.depth + 1, tree.slot(node.id), split.feature))
                .or_default()
                .push(value);
        }
    }
    let rows = cells
        .into_iter()
        .map(|((depth, slot, feature), values)| {
            let numeric: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
            SplitSummaryRow {
                depth,
                slot,
                feature: names[&feature].clone(),
                share: values.len() as f64 / trees.len() as f64,
                count: values.len(),
                value_mean: if numeric.is_empty() {
                    f64::NAN
                } else {
                    numeric.iter().sum::<f64>() / numeric.len() as f64
                },
                value_sd: sample_sd(&numeric),
            }
        })
        .collect();
    SplitSummary {
        trees: trees.len(),
        rows,
    }
}
