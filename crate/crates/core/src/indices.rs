//! Rival interaction measures: Friedman's H-statistic, Greenwell's
//! PD-variability index and SHAP interaction values with their global
//! aggregate.

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::data::{Dataset, RowMatrix};
use crate::error::{Error, Result};
use crate::grid::{make_grid, GridStrategy, DEFAULT_GRID_SIZE};
use crate::ice::{pd2_surface, pd_at_points};
use crate::predict::Predict;
use crate::report::{InteractionReport, Method};
use crate::rng::{derive_seed, stream};
use crate::stats::{pairwise_sum, sample_sd};

/// Largest number of "other" features for exact SHAP enumeration.
pub const MAX_EXACT_OTHERS: usize = 15;
/// Feature count up to which the full dataset is the SHAP background.
pub const FULL_BACKGROUND_MAX_P: usize = 8;
pub const SHAP_BACKGROUND_ROWS: usize = 200;

// Stream labels so that the different subsamples never share draws.
const TAG_H: u64 = 1;
const TAG_SHAP_ROWS: u64 = 2;
const TAG_SHAP_BG: u64 = 3;
const TAG_SHAP_PERM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "n_perm", rename_all = "snake_case")]
pub enum ShapMode {
    Exact,
    Sampled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub h_sample: usize,
    pub shap_mode: ShapMode,
    pub shap_obs: usize,
    pub grid_m: usize,
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            h_sample: 20,
            shap_mode: ShapMode::Sampled(20),
            shap_obs: 100,
            grid_m: DEFAULT_GRID_SIZE,
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h_sample == 0 || self.shap_obs == 0 || self.grid_m == 0 || self.shap_mode == ShapMode::Sampled(0) {
            return Err(Error::Invalid("index config counts must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_pair(ds: &Dataset, j: usize, l: usize) -> Result<()> {
    if j == l {
        return Err(Error::Invalid("interaction needs two distinct features".into()));
    }
    if j >= ds.p() || l >= ds.p() {
        return Err(Error::Invalid(format!("feature pair ({j}, {l}) out of range")));
    }
    Ok(())
}

fn centered(mut v: Vec<f64>) -> Vec<f64> {
    let mean = pairwise_sum(&v) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

/// Squared H-statistic of the pair `(j, l)`. Evaluation points are a
/// seeded subsample of `h_sample` observations; the PD background is the
/// whole dataset.
pub fn h_statistic<P: Predict + ?Sized>(pred: &P, ds: &Dataset, j: usize, l: usize, cfg: &IndexConfig) -> Result<f64> {
    cfg.validate()?;
    check_pair(ds, j, l)?;
    let (a, b) = (j.min(l), j.max(l));
    let mut rng = stream(derive_seed(cfg.seed, &[TAG_H, a as u64, b as u64]), 0);
    let k = cfg.h_sample.min(ds.n());
    let mut idx = index::sample(&mut rng, ds.n(), k).into_vec();
    idx.sort_unstable();

    let pts_j: Vec<Vec<f64>> = idx.iter().map(|&i| vec![ds.value(i, j)]).collect();
    let pts_l: Vec<Vec<f64>> = idx.iter().map(|&i| vec![ds.value(i, l)]).collect();
    let pts_jl: Vec<Vec<f64>> = idx.iter().map(|&i| vec![ds.value(i, j), ds.value(i, l)]).collect();
    let pd_j = centered(pd_at_points(pred, ds, &[j], &pts_j)?);
    let pd_l = centered(pd_at_points(pred, ds, &[l], &pts_l)?);
    let pd_jl = centered(pd_at_points(pred, ds, &[j, l], &pts_jl)?);

    let num: Vec<f64> = (0..k).map(|i| (pd_jl[i] - pd_j[i] - pd_l[i]).powi(2)).collect();
    let den: Vec<f64> = pd_jl.iter().map(|v| v * v).collect();
    let den = pairwise_sum(&den);
    if den == 0.0 {
        return Err(Error::UndefinedIndex(format!(
            "joint partial dependence of ({}, {}) is constant",
            ds.meta(j).name,
            ds.meta(l).name
        )));
    }
    Ok(pairwise_sum(&num) / den)
}

/// Greenwell's index: the standard deviation over conditioning values of the
/// conditional PD importance, averaged over both conditioning directions.
pub fn greenwell_index<P: Predict + ?Sized>(pred: &P, ds: &Dataset, j: usize, l: usize, cfg: &IndexConfig) -> Result<f64> {
    cfg.validate()?;
    check_pair(ds, j, l)?;
    let gj = make_grid(ds, j, GridStrategy::Equidistant, cfg.grid_m)?;
    let gl = make_grid(ds, l, GridStrategy::Equidistant, cfg.grid_m)?;
    let surface = pd2_surface(pred, ds, j, l, &gj, &gl, false)?;
    let v = &surface.values;
    // i(x_j | x_l = t) for every t on grid_l.
    let imp_j: Vec<f64> = (0..gl.len())
        .map(|b| sample_sd(&v.iter().map(|row| row[b]).collect::<Vec<_>>()))
        .collect();
    let imp_l: Vec<f64> = v.iter().map(|row| sample_sd(row)).collect();
    Ok(0.5 * sample_sd(&imp_j) + 0.5 * sample_sd(&imp_l))
}

fn shap_background(ds: &Dataset, cfg: &IndexConfig) -> Result<Dataset> {
    if ds.p() <= FULL_BACKGROUND_MAX_P || ds.n() <= SHAP_BACKGROUND_ROWS {
        return Ok(ds.clone());
    }
    let mut rng = stream(derive_seed(cfg.seed, &[TAG_SHAP_BG]), 0);
    let mut idx = index::sample(&mut rng, ds.n(), SHAP_BACKGROUND_ROWS).into_vec();
    idx.sort_unstable();
    ds.select_rows(&idx)
}

/// Coalition values `v(S) = mean over background of f(x_S, z_{-S})` for the
/// requested masks, computed in one batched predictor call.
fn coalition_values<P: Predict + ?Sized>(
    pred: &P,
    bg: &RowMatrix,
    x: &[f64],
    masks: &BTreeSet<u64>,
) -> Result<BTreeMap<u64, f64>> {
    let (nb, p) = (bg.nrows(), bg.ncols());
    let mut rows = RowMatrix::with_capacity(p, nb * masks.len());
    let mut buf = vec![0.0; p];
    for &mask in masks {
        for z in bg.iter_rows() {
            for f in 0..p {
                buf[f] = if mask >> f & 1 == 1 { x[f] } else { z[f] };
            }
            rows.push_row(&buf);
        }
    }
    let preds = pred.predict(&rows)?;
    Ok(masks
        .iter()
        .zip(preds.chunks_exact(nb))
        .map(|(&m, c)| (m, pairwise_sum(c) / nb as f64))
        .collect())
}

fn nabla(v: &BTreeMap<u64, f64>, s: u64, j: usize, l: usize) -> f64 {
    let (bj, bl) = (1u64 << j, 1u64 << l);
    // Written symmetrically in j and l so that swapping them is exact.
    (v[&(s | bj | bl)] + v[&s]) - (v[&(s | bj)] + v[&(s | bl)])
}

fn shapley_pair_weight(p: usize, s: usize) -> f64 {
    // |S|! (p - |S| - 2)! / (2 (p - 1)!) = 1 / (2 (p - 1) C(p - 2, |S|))
    let mut binom = 1.0;
    for i in 0..s {
        binom = binom * (p - 2 - i) as f64 / (i + 1) as f64;
    }
    1.0 / (2.0 * (p - 1) as f64 * binom)
}

/// SHAP interaction values `Φ_{j,l}(x)` for one row and several partners `l`,
/// sharing the coalition evaluations. `perm_seed` drives sampled mode only.
fn shap_row<P: Predict + ?Sized>(
    pred: &P,
    bg: &RowMatrix,
    x: &[f64],
    j: usize,
    partners: &[usize],
    mode: ShapMode,
    perm_seed: u64,
) -> Result<Vec<f64>> {
    let p = bg.ncols();
    match mode {
        ShapMode::Exact => {
            if p - 2 > MAX_EXACT_OTHERS {
                return Err(Error::Invalid(format!(
                    "exact SHAP enumeration refused for {p} features (at most {} allowed)",
                    MAX_EXACT_OTHERS + 2
                )));
            }
            let masks: BTreeSet<u64> = (0..1u64 << p).collect();
            let v = coalition_values(pred, bg, x, &masks)?;
            Ok(partners
                .iter()
                .map(|&l| {
                    let pair = (1u64 << j) | (1u64 << l);
                    let terms: Vec<f64> = (0..1u64 << p)
                        .filter(|s| s & pair == 0)
                        .map(|s| shapley_pair_weight(p, s.count_ones() as usize) * nabla(&v, s, j, l))
                        .collect();
                    pairwise_sum(&terms)
                })
                .collect())
        }
        ShapMode::Sampled(n_perm) => {
            let mut rng = stream(perm_seed, 0);
            let mut order: Vec<usize> = (0..p).collect();
            // For each permutation and partner l: S = features other than l
            // that precede j.
            let mut draws: Vec<Vec<u64>> = Vec::with_capacity(n_perm);
            let mut masks = BTreeSet::new();
            for _ in 0..n_perm {
                order.shuffle(&mut rng);
                let before: u64 = order
                    .iter()
                    .take_while(|&&f| f != j)
                    .fold(0, |acc, &f| acc | 1 << f);
                let per_l: Vec<u64> = partners.iter().map(|&l| before & !(1u64 << l)).collect();
                for (&s, &l) in per_l.iter().zip(partners) {
                    masks.extend([s, s | 1 << j, s | 1 << l, s | 1 << j | 1 << l]);
                }
                draws.push(per_l);
            }
            let v = coalition_values(pred, bg, x, &masks)?;
            Ok(partners
                .iter()
                .enumerate()
                .map(|(k, &l)| {
                    let terms: Vec<f64> = draws.iter().map(|d| nabla(&v, d[k], j, l)).collect();
                    0.5 * pairwise_sum(&terms) / n_perm as f64
                })
                .collect())
        }
    }
}

/// SHAP interaction value `Φ_{j,l}` at the point `x_row`.
pub fn shap_interaction_value<P: Predict + ?Sized>(
    pred: &P,
    ds: &Dataset,
    x_row: &[f64],
    j: usize,
    l: usize,
    cfg: &IndexConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_pair(ds, j, l)?;
    if x_row.len() != ds.p() {
        return Err(Error::Invalid(format!("row has {} values, dataset has {} features", x_row.len(), ds.p())));
    }
    let bg = shap_background(ds, cfg)?.rows();
    let (a, b) = (j.min(l), j.max(l));
    let seed = derive_seed(cfg.seed, &[TAG_SHAP_PERM, a as u64, b as u64]);
    Ok(shap_row(pred, &bg, x_row, j, &[l], cfg.shap_mode, seed)?[0])
}

fn others(ds: &Dataset, j: usize) -> Vec<usize> {
    (0..ds.p()).filter(|&l| l != j).collect()
}

fn names(ds: &Dataset) -> Vec<String> {
    ds.metas().iter().map(|m| m.name.clone()).collect()
}

/// Global SHAP interaction index of `j` with every other feature: absolute
/// interaction values summed over `shap_obs` sampled rows, normalized to
/// shares.
pub fn shap_global_index<P: Predict + ?Sized>(pred: &P, ds: &Dataset, j: usize, cfg: &IndexConfig) -> Result<InteractionReport> {
    cfg.validate()?;
    if ds.p() < 3 {
        return Err(Error::Invalid("the global SHAP interaction index needs at least 3 features".into()));
    }
    if j >= ds.p() {
        return Err(Error::Invalid(format!("feature index {j} out of range")));
    }
    let partners = others(ds, j);
    let bg = shap_background(ds, cfg)?.rows();
    let mut rng = stream(derive_seed(cfg.seed, &[TAG_SHAP_ROWS]), 0);
    let mut obs = index::sample(&mut rng, ds.n(), cfg.shap_obs.min(ds.n())).into_vec();
    obs.sort_unstable();

    let per_row: Vec<Vec<f64>> = obs
        .par_iter()
        .map(|&i| {
            let seed = derive_seed(cfg.seed, &[TAG_SHAP_PERM, j as u64, i as u64]);
            shap_row(pred, &bg, &ds.row(i), j, &partners, cfg.shap_mode, seed)
        })
        .collect::<Result<_>>()?;

    let totals: Vec<f64> = (0..partners.len())
        .map(|k| pairwise_sum(&per_row.iter().map(|r| r[k].abs()).collect::<Vec<_>>()))
        .collect();
    let denom = pairwise_sum(&totals);
    // Interaction values of an additive model are rounding noise; treat a
    // total below that level as zero.
    let noise_floor = (obs.len() * partners.len()) as f64 * 1e-9 * pred_scale(pred, &bg)?;
    let zero = denom <= noise_floor;
    let scores: BTreeMap<usize, f64> = partners
        .iter()
        .zip(&totals)
        .map(|(&l, &t)| (l, if zero { 0.0 } else { t / denom }))
        .collect();
    let mut report = InteractionReport::new(Method::Shap, j, names(ds), scores);
    report.no_interaction = zero;
    Ok(report)
}

/// Largest absolute prediction on the background rows (at least 1).
fn pred_scale<P: Predict + ?Sized>(pred: &P, bg: &RowMatrix) -> Result<f64> {
    Ok(pred.predict(bg)?.iter().fold(1.0_f64, |a, v| a.max(v.abs())))
}

/// H-statistic of `j` with every other feature.
pub fn h_statistic_report<P: Predict + ?Sized>(pred: &P, ds: &Dataset, j: usize, cfg: &IndexConfig) -> Result<InteractionReport> {
    pairwise_report(Method::HStatistic, ds, j, |l| h_statistic(pred, ds, j, l, cfg))
}

/// Greenwell's index of `j` with every other feature.
pub fn greenwell_report<P: Predict + ?Sized>(pred: &P, ds: &Dataset, j: usize, cfg: &IndexConfig) -> Result<InteractionReport> {
    pairwise_report(Method::Greenwell, ds, j, |l| greenwell_index(pred, ds, j, l, cfg))
}

fn pairwise_report(
    method: Method,
    ds: &Dataset,
    j: usize,
    f: impl Fn(usize) -> Result<f64> + Sync,
) -> Result<InteractionReport> {
    if j >= ds.p() {
        return Err(Error::Invalid(format!("feature index {j} out of range")));
    }
    let partners = others(ds, j);
    let values: Vec<f64> = partners.par_iter().map(|&l| f(l)).collect::<Result<_>>()?;
    let scores: BTreeMap<usize, f64> = partners.into_iter().zip(values).collect();
    let mut report = InteractionReport::new(method, j, names(ds), scores);
    report.no_interaction = report.scores.values().all(|&v| v == 0.0);
    Ok(report)
}
