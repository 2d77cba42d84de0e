//! Recursive binary partitioning of observations so that mean-centered ICE
//! curves become homogeneous within each region, and the interaction
//! importance derived from the achieved risk reductions.
//!
//! The risk of a node is the grid-wise sum of squared deviations of its
//! centered ICE curves from their regional mean curve (no `1/m` or
//! `1/|node|` normalization). A split's importance is its risk reduction
//! divided by the root risk; a feature's importance sums over the nodes that
//! split on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::data::{Dataset, FeatureKind, FeatureMeta};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ice::{center_ice, ice_matrix, pd_curve, IceMatrix, PdCurve};
use crate::predict::Predict;
use crate::report::{InteractionReport, Method};
use crate::stats::pairwise_sum;

/// Largest number of categorical levels searched exhaustively.
pub const MAX_CATEGORICAL_LEVELS: usize = 12;

/// Root risks below `n * m * (ZERO_RISK_REL * scale)^2` are treated as zero,
/// where `scale` is the largest absolute raw prediction.
const ZERO_RISK_REL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopParams {
    pub max_depth: usize,
    pub min_node: usize,
    /// A non-root node splits only if its importance is at least
    /// `gamma` times the importance of its parent's split.
    pub gamma: f64,
    /// Minimum importance of the root split.
    pub min_abs_improvement: f64,
    /// Optional cap on numeric split candidates per feature and node.
    #[serde(default)]
    pub max_candidates: Option<usize>,
}

impl Default for StopParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_node: 10,
            gamma: 0.15,
            min_abs_improvement: 0.01,
            max_candidates: None,
        }
    }
}

impl StopParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 || self.min_node < 1 {
            return Err(Error::Invalid("max_depth and min_node must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Invalid("gamma must lie in [0, 1]".into()));
        }
        if !(self.min_abs_improvement >= 0.0) {
            return Err(Error::Invalid("min_abs_improvement must be non-negative".into()));
        }
        if self.max_candidates == Some(0) {
            return Err(Error::Invalid("max_candidates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum SplitRule {
    /// Left child: `x <= threshold`.
    NumericLe(f64),
    /// Left child: level index in the set.
    CategorySubset(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub rule: SplitRule,
}

impl Split {
    pub fn goes_left(&self, x: f64) -> bool {
        match &self.rule {
            SplitRule::NumericLe(t) => x <= *t,
            SplitRule::CategorySubset(levels) => levels.contains(&(x as usize)),
        }
    }

    /// Human-readable condition for one side, e.g. `x1 ≤ 0.01` or `x5 ∈ {a,b}`.
    pub fn describe(&self, metas: &[FeatureMeta], left: bool) -> String {
        let meta = &metas[self.feature];
        match &self.rule {
            SplitRule::NumericLe(t) => {
                format!("{} {} {}", meta.name, if left { "≤" } else { ">" }, fmt_sig4(*t))
            }
            SplitRule::CategorySubset(set) => {
                let levels = meta.levels().unwrap_or(&[]);
                let chosen: Vec<&str> = (0..levels.len())
                    .filter(|k| set.contains(k) == left)
                    .map(|k| levels[k].as_str())
                    .collect();
                format!("{} ∈ {{{}}}", meta.name, chosen.join(","))
            }
        }
    }
}

/// Four significant digits without trailing zeros.
pub fn fmt_sig4(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (3 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    pub obs: Vec<usize>,
    pub risk: f64,
    pub split: Option<Split>,
    pub children: Option<(usize, usize)>,
    /// Relative risk reduction of this node's split (parents only).
    pub int_imp: Option<f64>,
}

impl TreeNode {
    pub fn is_terminal(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepidTree {
    pub nodes: Vec<TreeNode>,
    pub root_risk: f64,
    pub feature_s: usize,
    pub stop: StopParams,
    pub metas: Vec<FeatureMeta>,
    /// True when the root risk is numerically zero (no interactions at all).
    pub zero_risk: bool,
}

impl RepidTree {
    pub fn terminals(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_terminal())
    }

    pub fn parents(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| !n.is_terminal())
    }

    /// Conditions from the root down to node `id`, joined by ` & `.
    pub fn path(&self, id: usize) -> String {
        let mut parts = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            let parent = &self.nodes[p];
            let split = parent.split.as_ref().expect("parent has a split");
            let left = parent.children.expect("parent has children").0 == cur;
            parts.push(split.describe(&self.metas, left));
            cur = p;
        }
        parts.reverse();
        if parts.is_empty() {
            "all".into()
        } else {
            parts.join(" & ")
        }
    }

    /// Node position within its depth, counted from 1 left to right, as used
    /// for split summaries. Positions follow a complete binary layout.
    pub fn slot(&self, id: usize) -> usize {
        let mut pos = 0usize;
        let mut cur = id;
        let mut bit = 0;
        while let Some(p) = self.nodes[cur].parent {
            let right = self.nodes[p].children.expect("parent has children").1 == cur;
            pos |= usize::from(right) << bit;
            bit += 1;
            cur = p;
        }
        pos + 1
    }
}

fn check_obs(cice: &IceMatrix, obs: &[usize]) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(&bad) = obs.iter().find(|&&i| i >= cice.n()) {
        return Err(Error::Invalid(format!("observation {bad} out of range")));
    }
    Ok(())
}

/// Sum over grid points of the within-node sum of squared deviations of the
/// centered ICE curves from their node mean.
pub fn node_risk(cice: &IceMatrix, obs: &[usize]) -> Result<f64> {
    check_obs(cice, obs)?;
    let mut col = vec![0.0; obs.len()];
    let per_point: Vec<f64> = (0..cice.m())
        .map(|k| {
            for (c, &i) in col.iter_mut().zip(obs) {
                *c = cice.get(i, k);
            }
            let mean = pairwise_sum(&col) / obs.len() as f64;
            col.iter_mut().for_each(|c| *c = (*c - mean) * (*c - mean));
            pairwise_sum(&col)
        })
        .collect();
    Ok(pairwise_sum(&per_point))
}

/// Best admissible split of a node.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitChoice {
    pub split: Split,
    /// Sum of the two child risks, recomputed directly for the winner.
    pub objective: f64,
    pub risk_left: f64,
    pub risk_right: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// Candidate ranking key: objective, then feature index, then threshold (or
/// subset mask for categorical splits).
#[derive(Debug, Clone, Copy)]
struct Key {
    objective: f64,
    feature: usize,
    tie: f64,
}

impl Key {
    fn cmp(&self, other: &Key) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then(self.feature.cmp(&other.feature))
            .then(self.tie.total_cmp(&other.tie))
    }
}

/// Centered ICE values of the node, shifted by the node's per-grid-point
/// mean so that running sums do not suffer from cancellation.
fn node_block(cice: &IceMatrix, obs: &[usize]) -> Vec<f64> {
    let m = cice.m();
    let mut col = vec![0.0; obs.len()];
    let means: Vec<f64> = (0..m)
        .map(|k| {
            for (c, &i) in col.iter_mut().zip(obs) {
                *c = cice.get(i, k);
            }
            pairwise_sum(&col) / obs.len() as f64
        })
        .collect();
    let mut block = Vec::with_capacity(obs.len() * m);
    for &i in obs {
        block.extend(cice.row(i).iter().zip(&means).map(|(v, mu)| v - mu));
    }
    block
}

/// Within-group sum of squares from accumulated sums.
fn ss(sum: &[f64], sum_sq: &[f64], count: usize) -> f64 {
    let c = count as f64;
    sum.iter()
        .zip(sum_sq)
        .map(|(s, q)| (q - s * s / c).max(0.0))
        .sum()
}

fn best_numeric(
    block: &[f64],
    m: usize,
    xs: &[f64],
    feature: usize,
    stop: &StopParams,
) -> Option<(Key, f64)> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));

    // Admissible cut positions: left = order[..=pos].
    let min = stop.min_node;
    let mut cuts: Vec<usize> = (min.saturating_sub(1)..n.saturating_sub(min))
        .filter(|&pos| pos + 1 >= min && n - pos - 1 >= min && xs[order[pos]] < xs[order[pos + 1]])
        .collect();
    if cuts.is_empty() {
        return None;
    }
    if let Some(cap) = stop.max_candidates {
        if cuts.len() > cap {
            let total = cuts.len();
            cuts = (0..cap)
                .map(|k| cuts[if cap == 1 { total / 2 } else { k * (total - 1) / (cap - 1) }])
                .collect();
            cuts.dedup();
        }
    }

    let mut total_s = vec![0.0; m];
    let mut total_q = vec![0.0; m];
    for r in 0..n {
        let row = &block[r * m..(r + 1) * m];
        for k in 0..m {
            total_s[k] += row[k];
            total_q[k] += row[k] * row[k];
        }
    }

    let mut left_s = vec![0.0; m];
    let mut left_q = vec![0.0; m];
    let mut right_s = vec![0.0; m];
    let mut right_q = vec![0.0; m];
    let mut best: Option<(Key, f64)> = None;
    let mut next = 0;
    for (pos, &r) in order.iter().enumerate() {
        if next == cuts.len() {
            break;
        }
        let row = &block[r * m..(r + 1) * m];
        for k in 0..m {
            left_s[k] += row[k];
            left_q[k] += row[k] * row[k];
        }
        if pos != cuts[next] {
            continue;
        }
        next += 1;
        for k in 0..m {
            right_s[k] = total_s[k] - left_s[k];
            right_q[k] = total_q[k] - left_q[k];
        }
        let objective = ss(&left_s, &left_q, pos + 1) + ss(&right_s, &right_q, n - pos - 1);
        let (lo, hi) = (xs[order[pos]], xs[order[pos + 1]]);
        let mut t = 0.5 * (lo + hi);
        if !(t < hi) {
            t = lo;
        }
        let key = Key {
            objective,
            feature,
            tie: t,
        };
        if best.as_ref().is_none_or(|(b, _)| key.cmp(b) == Ordering::Less) {
            best = Some((key, t));
        }
    }
    best
}

fn best_categorical(
    block: &[f64],
    m: usize,
    xs: &[f64],
    feature: usize,
    n_levels: usize,
    stop: &StopParams,
) -> Option<(Key, Vec<usize>)> {
    let n = xs.len();
    let mut count = vec![0usize; n_levels];
    let mut s = vec![vec![0.0; m]; n_levels];
    let mut q = vec![vec![0.0; m]; n_levels];
    for r in 0..n {
        let lvl = xs[r] as usize;
        count[lvl] += 1;
        for k in 0..m {
            let v = block[r * m + k];
            s[lvl][k] += v;
            q[lvl][k] += v * v;
        }
    }
    let present: Vec<usize> = (0..n_levels).filter(|&l| count[l] > 0).collect();
    let qn = present.len();
    if qn < 2 {
        return None;
    }
    let mut best: Option<(Key, Vec<usize>)> = None;
    let mut ls = vec![0.0; m];
    let mut lq = vec![0.0; m];
    let mut rs = vec![0.0; m];
    let mut rq = vec![0.0; m];
    // The last present level always goes right: 2^(q-1) - 1 distinct partitions.
    for mask in 1u32..(1u32 << (qn - 1)) {
        ls.iter_mut().chain(lq.iter_mut()).chain(rs.iter_mut()).chain(rq.iter_mut()).for_each(|v| *v = 0.0);
        let mut nl = 0;
        let mut left_levels = Vec::new();
        for (b, &lvl) in present.iter().enumerate() {
            let left = b < qn - 1 && mask & (1 << b) != 0;
            let (ts, tq) = if left {
                nl += count[lvl];
                left_levels.push(lvl);
                (&mut ls, &mut lq)
            } else {
                (&mut rs, &mut rq)
            };
            for k in 0..m {
                ts[k] += s[lvl][k];
                tq[k] += q[lvl][k];
            }
        }
        let nr = n - nl;
        if nl < stop.min_node || nr < stop.min_node {
            continue;
        }
        let objective = ss(&ls, &lq, nl) + ss(&rs, &rq, nr);
        let key = Key {
            objective,
            feature,
            tie: f64::from(mask),
        };
        if best.as_ref().is_none_or(|(b, _)| key.cmp(b) == Ordering::Less) {
            best = Some((key, left_levels));
        }
    }
    best
}

/// Exhaustive search over every feature other than the feature of interest
/// and every admissible split point. Returns `None` when no split leaves
/// both children with at least `min_node` observations.
pub fn best_split(cice: &IceMatrix, ds: &Dataset, obs: &[usize], stop: &StopParams) -> Result<Option<SplitChoice>> {
    check_obs(cice, obs)?;
    if cice.n() != ds.n() {
        return Err(Error::Invalid("ICE matrix and dataset disagree on n".into()));
    }
    for meta in ds.metas() {
        if let FeatureKind::Categorical { levels } = &meta.kind {
            if levels.len() > MAX_CATEGORICAL_LEVELS {
                return Err(Error::Invalid(format!(
                    "categorical feature '{}' has {} levels; exhaustive split search supports at most {MAX_CATEGORICAL_LEVELS}",
                    meta.name,
                    levels.len()
                )));
            }
        }
    }
    if obs.len() < 2 * stop.min_node.max(1) {
        return Ok(None);
    }
    let m = cice.m();
    let block = node_block(cice, obs);
    let candidates: Vec<(Key, Split)> = (0..ds.p())
        .into_par_iter()
        .filter(|&j| j != cice.feature_s)
        .filter_map(|j| {
            let xs: Vec<f64> = obs.iter().map(|&i| ds.value(i, j)).collect();
            match &ds.meta(j).kind {
                FeatureKind::Numeric => best_numeric(&block, m, &xs, j, stop).map(|(key, t)| {
                    (
                        key,
                        Split {
                            feature: j,
                            rule: SplitRule::NumericLe(t),
                        },
                    )
                }),
                FeatureKind::Categorical { levels } => {
                    best_categorical(&block, m, &xs, j, levels.len(), stop).map(|(key, set)| {
                        (
                            key,
                            Split {
                                feature: j,
                                rule: SplitRule::CategorySubset(set),
                            },
                        )
                    })
                }
            }
        })
        .collect();
    // Running sums only rank the candidates; the winner's risks are
    // recomputed from scratch.
    let Some((_, split)) = candidates.into_iter().min_by(|a, b| a.0.cmp(&b.0)) else {
        return Ok(None);
    };
    let (left, right): (Vec<usize>, Vec<usize>) =
        obs.iter().partition(|&&i| split.goes_left(ds.value(i, split.feature)));
    let risk_left = node_risk(cice, &left)?;
    let risk_right = node_risk(cice, &right)?;
    Ok(Some(SplitChoice {
        split,
        objective: risk_left + risk_right,
        risk_left,
        risk_right,
        left,
        right,
    }))
}

/// Grows the tree breadth-first. A node is split when it is shallower than
/// `max_depth`, both children keep `min_node` observations, the split
/// reduces risk, and its importance passes the gate (root:
/// `min_abs_improvement`; others: `gamma` times the parent's importance).
pub fn fit_repid(cice: &IceMatrix, ds: &Dataset, stop: &StopParams) -> Result<RepidTree> {
    stop.validate()?;
    if !cice.centered {
        return Err(Error::Invalid("fit_repid needs mean-centered ICE curves".into()));
    }
    if ds.p() < 2 {
        return Err(Error::Invalid(
            "complement set is empty: at least one feature besides the feature of interest is required".into(),
        ));
    }
    if cice.n() != ds.n() {
        return Err(Error::Invalid("ICE matrix and dataset disagree on n".into()));
    }
    let all: Vec<usize> = (0..ds.n()).collect();
    let root_risk = node_risk(cice, &all)?;
    let zero_tol = (cice.n() * cice.m()) as f64 * (ZERO_RISK_REL * cice.scale).powi(2);
    let zero_risk = root_risk <= zero_tol;
    let mut nodes = vec![TreeNode {
        id: 0,
        depth: 0,
        parent: None,
        obs: all,
        risk: root_risk,
        split: None,
        children: None,
        int_imp: None,
    }];

    let mut next = 0;
    while next < nodes.len() && !zero_risk {
        let id = next;
        next += 1;
        let node = &nodes[id];
        if node.depth >= stop.max_depth || node.obs.len() < 2 * stop.min_node {
            continue;
        }
        let Some(choice) = best_split(cice, ds, &node.obs, stop)? else {
            continue;
        };
        let (risk_l, risk_r) = (choice.risk_left, choice.risk_right);
        let reduction = node.risk - risk_l - risk_r;
        if !(reduction > 0.0) {
            continue;
        }
        let imp = reduction / root_risk;
        let passes = match node.parent {
            None => imp >= stop.min_abs_improvement,
            Some(p) => imp >= stop.gamma * nodes[p].int_imp.unwrap_or(0.0),
        };
        if !passes {
            continue;
        }
        let depth = node.depth + 1;
        let (l, r) = (nodes.len(), nodes.len() + 1);
        let node = &mut nodes[id];
        node.split = Some(choice.split);
        node.children = Some((l, r));
        node.int_imp = Some(imp);
        for (child, obs, risk) in [(l, choice.left, risk_l), (r, choice.right, risk_r)] {
            nodes.push(TreeNode {
                id: child,
                depth,
                parent: Some(id),
                obs,
                risk,
                split: None,
                children: None,
                int_imp: None,
            });
        }
    }

    Ok(RepidTree {
        nodes,
        root_risk,
        feature_s: cice.feature_s,
        stop: *stop,
        metas: ds.metas().to_vec(),
        zero_risk,
    })
}

/// Both sides of the R² identity: the sum of split importances, and one
/// minus the terminal risk share.
pub fn r2_both_ways(tree: &RepidTree) -> (f64, f64) {
    if tree.zero_risk || tree.root_risk <= 0.0 {
        return (0.0, 0.0);
    }
    let by_parents: f64 = tree
        .parents()
        .map(|p| {
            let (l, r) = p.children.unwrap();
            (p.risk - tree.nodes[l].risk - tree.nodes[r].risk) / tree.root_risk
        })
        .sum();
    let terminal: f64 = tree.terminals().map(|t| t.risk).sum();
    (by_parents, 1.0 - terminal / tree.root_risk)
}

pub fn interaction_report(tree: &RepidTree) -> Result<InteractionReport> {
    let names: Vec<String> = tree.metas.iter().map(|m| m.name.clone()).collect();
    let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
    if !tree.zero_risk {
        for p in tree.parents() {
            let split = p.split.as_ref().expect("parent has a split");
            *scores.entry(split.feature).or_default() += p.int_imp.expect("parent has importance");
        }
    }
    let (by_parents, by_terminals) = r2_both_ways(tree);
    if (by_parents - by_terminals).abs() > 1e-10 {
        return Err(Error::Invalid(format!(
            "R² identity violated: {by_parents} vs {by_terminals}"
        )));
    }
    let mut report = InteractionReport::new(Method::Repid, tree.feature_s, names, scores);
    report.r2_int = Some(by_parents);
    report.no_interaction = tree.zero_risk || report.scores.is_empty();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalPd {
    pub node: usize,
    pub path: String,
    pub centered: PdCurve,
    pub raw: PdCurve,
}

/// Regional PD curves (raw and centered) for every terminal node.
pub fn regional_peps(tree: &RepidTree, ice_raw: &IceMatrix, ice_centered: &IceMatrix) -> Result<Vec<RegionalPd>> {
    tree.terminals()
        .map(|t| {
            Ok(RegionalPd {
                node: t.id,
                path: tree.path(t.id),
                centered: pd_curve(ice_centered, &t.obs, false)?,
                raw: pd_curve(ice_raw, &t.obs, false)?,
            })
        })
        .collect()
}

/// JSON document describing the tree and its regional curves.
pub fn tree_json(tree: &RepidTree, reps: &[RegionalPd]) -> serde_json::Value {
    use serde_json::json;
    let nodes: Vec<_> = tree
        .nodes
        .iter()
        .map(|n| {
            let split = n.split.as_ref().map(|s| {
                let (rule, value) = match &s.rule {
                    SplitRule::NumericLe(t) => ("numeric_le", json!(t)),
                    SplitRule::CategorySubset(set) => {
                        let levels = tree.metas[s.feature].levels().unwrap_or(&[]);
                        ("category_subset", json!(set.iter().map(|&k| levels[k].clone()).collect::<Vec<_>>()))
                    }
                };
                json!({
                    "feature": tree.metas[s.feature].name,
                    "feature_index": s.feature,
                    "rule": rule,
                    "value": value,
                })
            });
            json!({
                "id": n.id,
                "depth": n.depth,
                "parent": n.parent,
                "children": n.children.map(|(l, r)| [l, r]),
                "split": split,
                "n": n.obs.len(),
                "risk": n.risk,
                "intImp": n.int_imp,
            })
        })
        .collect();
    let reps: Vec<_> = reps
        .iter()
        .map(|r| {
            json!({
                "node": r.node,
                "path": r.path,
                "n": r.raw.support.len(),
                "grid": r.raw.grid.values,
                "centered": r.centered.values,
                "raw": r.raw.values,
            })
        })
        .collect();
    json!({
        "feature_s": tree.metas[tree.feature_s].name,
        "root_risk": tree.root_risk,
        "stop": tree.stop,
        "nodes": nodes,
        "reps": reps,
    })
}

/// Long-format CSV of the regional curves: one line per (region, grid point).
pub fn reps_csv(reps: &[RegionalPd]) -> String {
    let mut out = String::from("node,path,n,grid,centered,raw\n");
    for r in reps {
        let path = if r.path.contains(',') || r.path.contains('"') {
            format!("\"{}\"", r.path.replace('"', "\"\""))
        } else {
            r.path.clone()
        };
        for (k, g) in r.raw.grid.values.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.node,
                path,
                r.raw.support.len(),
                g,
                r.centered.values[k],
                r.raw.values[k]
            ));
        }
    }
    out
}

/// Everything produced by one end-to-end REPID run on a single feature.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub ice: IceMatrix,
    pub centered: IceMatrix,
    pub tree: RepidTree,
    pub report: InteractionReport,
    pub reps: Vec<RegionalPd>,
}

/// ICE, centering, tree fit, importance report and regional curves.
pub fn explain<P: Predict + ?Sized>(pred: &P, ds: &Dataset, s: usize, grid: &Grid, stop: &StopParams) -> Result<Explanation> {
    if ds.p() < 2 {
        return Err(Error::Invalid(
            "complement set is empty: at least one feature besides the feature of interest is required".into(),
        ));
    }
    let ice = ice_matrix(pred, ds, s, grid)?;
    let centered = center_ice(&ice);
    let tree = fit_repid(&centered, ds, stop)?;
    let report = interaction_report(&tree)?;
    let reps = regional_peps(&tree, &ice, &centered)?;
    Ok(Explanation {
        ice,
        centered,
        tree,
        report,
        reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> IceMatrix {
        let m = rows[0].len();
        let grid = Grid::custom(0, (0..m).map(|k| k as f64).collect()).unwrap();
        IceMatrix::from_values(0, "s", grid, rows.concat(), true).unwrap()
    }

    #[test]
    fn risk_of_identical_curves_is_zero() {
        let c = matrix(&[vec![1.0, -1.0, 0.0], vec![1.0, -1.0, 0.0]]);
        assert_eq!(node_risk(&c, &[0, 1]).unwrap(), 0.0);
        assert_eq!(node_risk(&c, &[1]).unwrap(), 0.0);
    }

    #[test]
    fn risk_by_hand() {
        let c = matrix(&[vec![0.0; 5], vec![1.0; 5], vec![-1.0; 5]]);
        assert_eq!(node_risk(&c, &[0, 1, 2]).unwrap(), 10.0);
        assert!(matches!(node_risk(&c, &[]), Err(Error::EmptySupport)));
    }

    #[test]
    fn sig4_formatting() {
        assert_eq!(fmt_sig4(0.5), "0.5");
        assert_eq!(fmt_sig4(0.012_345), "0.01235");
        assert_eq!(fmt_sig4(123.456), "123.5");
        assert_eq!(fmt_sig4(-0.000_01), "-0.00001");
        assert_eq!(fmt_sig4(0.0), "0");
        assert_eq!(fmt_sig4(12_345.6), "12346");
    }

    #[test]
    fn categorical_split_uses_subsets() {
        // Curves depend on the level of a 3-level feature: {a, c} vs {b}.
        let levels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let lv: Vec<f64> = (0..12).map(|i| (i % 3) as f64).collect();
        let ds = Dataset::new(
            vec![FeatureMeta::numeric("s"), FeatureMeta::categorical("g", levels)],
            vec![vec![0.0; 12], lv.clone()],
        )
        .unwrap();
        let rows: Vec<Vec<f64>> = lv
            .iter()
            .map(|&l| if l == 1.0 { vec![-1.0, 1.0] } else { vec![1.0, -1.0] })
            .collect();
        let c = matrix(&rows);
        let stop = StopParams {
            min_node: 2,
            ..StopParams::default()
        };
        let all: Vec<usize> = (0..12).collect();
        let choice = best_split(&c, &ds, &all, &stop).unwrap().unwrap();
        assert_eq!(choice.split.feature, 1);
        assert_eq!(choice.split.rule, SplitRule::CategorySubset(vec![1]));
        assert!(choice.objective.abs() < 1e-12);
        let tree = fit_repid(&c, &ds, &stop).unwrap();
        assert_eq!(tree.path(1), "g ∈ {b}");
        assert_eq!(tree.path(2), "g ∈ {a,c}");
    }

    #[test]
    fn too_many_levels_is_an_error() {
        let levels: Vec<String> = (0..13).map(|k| format!("l{k}")).collect();
        let lv: Vec<f64> = (0..26).map(|i| (i % 13) as f64).collect();
        let ds = Dataset::new(
            vec![FeatureMeta::numeric("s"), FeatureMeta::categorical("g", levels)],
            vec![vec![0.0; 26], lv],
        )
        .unwrap();
        let c = matrix(&vec![vec![0.0, 1.0]; 26]);
        assert!(best_split(&c, &ds, &(0..26).collect::<Vec<_>>(), &StopParams::default()).is_err());
    }

    #[test]
    fn uncentered_input_is_rejected() {
        let grid = Grid::custom(0, vec![0.0, 1.0]).unwrap();
        let ice = IceMatrix::from_values(0, "s", grid, vec![0.0, 1.0, 1.0, 0.0], false).unwrap();
        let ds = Dataset::from_numeric_columns(&["s", "c"], vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(fit_repid(&ice, &ds, &StopParams::default()).is_err());
    }

    #[test]
    fn slots_follow_complete_binary_layout() {
        let xs: Vec<f64> = (0..40).map(f64::from).collect();
        let ds = Dataset::from_numeric_columns(&["s", "c"], vec![vec![0.0; 40], xs.clone()]).unwrap();
        // Four clusters of curve shapes along c.
        let rows: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| {
                let a = (x / 10.0).floor();
                vec![a, -a]
            })
            .collect();
        let c = matrix(&rows);
        let stop = StopParams {
            min_node: 5,
            gamma: 0.0,
            ..StopParams::default()
        };
        let tree = fit_repid(&c, &ds, &stop).unwrap();
        let depth2: Vec<usize> = tree.nodes.iter().filter(|n| n.depth == 2).map(|n| tree.slot(n.id)).collect();
        assert_eq!(depth2, vec![1, 2, 3, 4]);
        assert!(tree.path(3).starts_with("c ≤ 19.5 & c ≤"));
    }
}
