//! Evaluation grids for a feature of interest.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridStrategy {
    #[default]
    Equidistant,
    Quantile,
    Sample,
}

impl std::str::FromStr for GridStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equidistant" => Ok(Self::Equidistant),
            "quantile" => Ok(Self::Quantile),
            "sample" => Ok(Self::Sample),
            other => Err(Error::Invalid(format!("unknown grid strategy '{other}'"))),
        }
    }
}

pub const DEFAULT_GRID_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub feature: usize,
    pub strategy: GridStrategy,
    /// Strictly increasing. Categorical grids hold the level indices `0..k`.
    pub values: Vec<f64>,
}

impl Grid {
    /// A grid with caller-chosen points (at least one, strictly increasing).
    pub fn custom(feature: usize, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("grid needs at least one point".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(
                "grid values must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self {
            feature,
            strategy: GridStrategy::Sample,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn make_grid(ds: &Dataset, feature: usize, strategy: GridStrategy, m: usize) -> Result<Grid> {
    if feature >= ds.p() {
        return Err(Error::Invalid(format!("feature index {feature} out of range")));
    }
    let meta = ds.meta(feature);
    if let FeatureKind::Categorical { levels } = &meta.kind {
        return Ok(Grid {
            feature,
            strategy,
            values: (0..levels.len()).map(|k| k as f64).collect(),
        });
    }
    let degenerate = |reason: String| Error::DegenerateGrid {
        feature: meta.name.clone(),
        reason,
    };
    if m < 2 {
        return Err(degenerate(format!("grid size {m} < 2")));
    }
    let mut sorted = ds.column(feature).to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return Err(degenerate("feature is constant".into()));
    }

    let values = match strategy {
        GridStrategy::Equidistant => {
            let step = (hi - lo) / (m - 1) as f64;
            let mut v: Vec<f64> = (0..m).map(|k| lo + step * k as f64).collect();
            v[m - 1] = hi;
            v
        }
        GridStrategy::Quantile => {
            let mut v: Vec<f64> = (0..m)
                .map(|k| quantile_sorted(&sorted, k as f64 / (m - 1) as f64))
                .collect();
            v.dedup();
            if v.len() < 2 {
                return Err(degenerate("fewer than two distinct quantiles".into()));
            }
            v
        }
        GridStrategy::Sample => {
            sorted.dedup();
            let u = sorted.len();
            if m > u {
                return Err(degenerate(format!("{m} grid points but only {u} unique values")));
            }
            // Evenly stratified order statistics; first and last always included.
            (0..m)
                .map(|k| sorted[(k * (u - 1) + (m - 1) / 2) / (m - 1)])
                .collect()
        }
    };
    Ok(Grid {
        feature,
        strategy,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_col(v: Vec<f64>) -> Dataset {
        Dataset::from_numeric_columns(&["x"], vec![v]).unwrap()
    }

    fn check_invariants(g: &Grid, ds: &Dataset) {
        let col = ds.column(g.feature);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(g.values.windows(2).all(|w| w[0] < w[1]));
        assert!(g.values.iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn equidistant_three_points() {
        let ds = one_col(vec![-1.0, 0.3, 1.0]);
        let g = make_grid(&ds, 0, GridStrategy::Equidistant, 3).unwrap();
        assert_eq!(g.values, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn extreme_quantiles() {
        let ds = one_col(vec![3.0, 1.0, 4.0, 2.0]);
        let g = make_grid(&ds, 0, GridStrategy::Quantile, 2).unwrap();
        assert_eq!(g.values, vec![1.0, 4.0]);
    }

    #[test]
    fn equidistant_spacing_is_uniform() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37 % 200) as f64 / 100.0) - 1.0).collect();
        let ds = one_col(x);
        let g = make_grid(&ds, 0, GridStrategy::Equidistant, 20).unwrap();
        let spacing = (g.values[19] - g.values[0]) / 19.0;
        for w in g.values.windows(2) {
            assert!((w[1] - w[0] - spacing).abs() < 1e-12);
        }
        check_invariants(&g, &ds);
    }

    #[test]
    fn sample_grid_uses_observed_values() {
        let ds = one_col((0..10).map(f64::from).collect());
        let g = make_grid(&ds, 0, GridStrategy::Sample, 6).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.values[0], 0.0);
        assert_eq!(g.values[5], 9.0);
        check_invariants(&g, &ds);
        assert!(make_grid(&ds, 0, GridStrategy::Sample, 11).is_err());
    }

    #[test]
    fn constant_feature_is_degenerate() {
        let ds = one_col(vec![2.0; 5]);
        assert!(matches!(
            make_grid(&ds, 0, GridStrategy::Equidistant, 5),
            Err(Error::DegenerateGrid { .. })
        ));
    }

    #[test]
    fn quantile_grid_deduplicates_ties() {
        let ds = one_col(vec![0.0, 0.0, 0.0, 1.0]);
        let g = make_grid(&ds, 0, GridStrategy::Quantile, 5).unwrap();
        check_invariants(&g, &ds);
    }
}
