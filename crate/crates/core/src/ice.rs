//! ICE curves, partial dependence (1-D and 2-D) and derivative ICE curves.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RowMatrix};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::predict::Predict;
use crate::stats::{pairwise_sum, sample_sd};

/// Upper bound on rows handed to a predictor in one call by the PD helpers.
const MAX_BATCH_ROWS: usize = 1 << 21;

/// `n x m` matrix of ICE evaluations: row `i` is the curve of observation `i`
/// over the grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceMatrix {
    pub feature_s: usize,
    pub feature_name: String,
    pub categorical: bool,
    pub grid: Grid,
    n: usize,
    values: Vec<f64>,
    pub centered: bool,
    /// Largest absolute raw prediction; the yardstick for "numerically zero".
    pub scale: f64,
}

impl IceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.m() + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m())
    }

    /// Builds a matrix directly from values (row-major, `n * grid.len()`).
    pub fn from_values(feature_s: usize, feature_name: impl Into<String>, grid: Grid, values: Vec<f64>, centered: bool) -> Result<Self> {
        let m = grid.len();
        if m == 0 || values.len() % m != 0 || values.is_empty() {
            return Err(Error::Invalid("ICE values do not fit the grid".into()));
        }
        let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        Ok(Self {
            feature_s,
            feature_name: feature_name.into(),
            categorical: false,
            n: values.len() / m,
            grid,
            values,
            centered,
            scale,
        })
    }

    /// CSV with a `grid` column and one `obs_<i>` column per curve.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid");
        for i in 0..self.n {
            out.push_str(&format!(",obs_{i}"));
        }
        out.push('\n');
        for (k, g) in self.grid.values.iter().enumerate() {
            out.push_str(&format!("{g}"));
            for i in 0..self.n {
                out.push_str(&format!(",{}", self.get(i, k)));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "feature": self.feature_name,
            "grid": self.grid.values,
            "values": self.rows().collect::<Vec<_>>(),
            "centered": self.centered,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdCurve {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub centered: bool,
    pub support: Vec<usize>,
}

impl PdCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid,pd\n");
        for (g, v) in self.grid.values.iter().zip(&self.values) {
            out.push_str(&format!("{g},{v}\n"));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "grid": self.grid.values,
            "values": self.values,
            "centered": self.centered,
            "n": self.support.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pd2Surface {
    pub grid_j: Grid,
    pub grid_l: Grid,
    /// `values[a][b]` at `(grid_j[a], grid_l[b])`.
    pub values: Vec<Vec<f64>>,
    pub centered: bool,
}

fn map_ice_error(e: Error, m: usize) -> Error {
    match e {
        Error::Prediction { row, .. } => Error::IcePrediction {
            obs: row / m,
            grid_point: row % m,
            source: Box::new(e),
        },
        other => other,
    }
}

/// Evaluates the ICE curves of feature `s` for every observation, in a single
/// batched predictor call laid out row-major by observation.
pub fn ice_matrix<P: Predict + ?Sized>(pred: &P, ds: &Dataset, s: usize, grid: &Grid) -> Result<IceMatrix> {
    if grid.feature != s {
        return Err(Error::Invalid(format!(
            "grid belongs to feature {}, not {s}",
            grid.feature
        )));
    }
    if s >= ds.p() {
        return Err(Error::Invalid(format!("feature index {s} out of range")));
    }
    let (n, m, p) = (ds.n(), grid.len(), ds.p());
    let mut rows = RowMatrix::with_capacity(p, n * m);
    let mut buf = vec![0.0; p];
    for i in 0..n {
        ds.row_into(i, &mut buf);
        for &g in &grid.values {
            buf[s] = g;
            rows.push_row(&buf);
        }
    }
    let values = pred.predict(&rows).map_err(|e| map_ice_error(e, m))?;
    if values.len() != n * m {
        return Err(Error::CountMismatch {
            expected: n * m,
            got: values.len(),
        });
    }
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok(IceMatrix {
        feature_s: s,
        feature_name: ds.meta(s).name.clone(),
        categorical: ds.meta(s).is_categorical(),
        grid: grid.clone(),
        n,
        values,
        centered: false,
        scale,
    })
}

/// Subtracts from each curve its own mean over the grid points. Centering an
/// already centered matrix returns it unchanged.
pub fn center_ice(ice: &IceMatrix) -> IceMatrix {
    if ice.centered {
        return ice.clone();
    }
    let m = ice.m();
    let mut values = Vec::with_capacity(ice.values.len());
    for row in ice.rows() {
        let mean = pairwise_sum(row) / m as f64;
        values.extend(row.iter().map(|v| v - mean));
    }
    IceMatrix {
        values,
        centered: true,
        ..ice.clone()
    }
}

/// Average of the ICE curves over `support`; optionally mean-centered over
/// the grid.
pub fn pd_curve(ice: &IceMatrix, support: &[usize], want_centered: bool) -> Result<PdCurve> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(&bad) = support.iter().find(|&&i| i >= ice.n) {
        return Err(Error::Invalid(format!("observation {bad} out of range")));
    }
    let m = ice.m();
    let mut column = vec![0.0; support.len()];
    let mut values: Vec<f64> = (0..m)
        .map(|k| {
            for (c, &i) in column.iter_mut().zip(support) {
                *c = ice.get(i, k);
            }
            pairwise_sum(&column) / support.len() as f64
        })
        .collect();
    if want_centered {
        let mean = pairwise_sum(&values) / m as f64;
        values.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(PdCurve {
        grid: ice.grid.clone(),
        values,
        centered: want_centered || ice.centered,
        support: support.to_vec(),
    })
}

/// Monte-Carlo partial dependence at arbitrary points: for each point, the
/// average prediction over all rows of `background` with `features`
/// overwritten by the point's coordinates.
pub fn pd_at_points<P: Predict + ?Sized>(
    pred: &P,
    background: &Dataset,
    features: &[usize],
    points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let (n, p) = (background.n(), background.p());
    let bg = background.rows();
    let per_batch = (MAX_BATCH_ROWS / n).max(1);
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(per_batch) {
        let mut rows = RowMatrix::with_capacity(p, n * chunk.len());
        let mut buf = vec![0.0; p];
        for point in chunk {
            for r in bg.iter_rows() {
                buf.copy_from_slice(r);
                for (&f, &v) in features.iter().zip(point) {
                    buf[f] = v;
                }
                rows.push_row(&buf);
            }
        }
        let preds = pred.predict(&rows)?;
        out.extend(preds.chunks_exact(n).map(|c| pairwise_sum(c) / n as f64));
    }
    Ok(out)
}

/// 2-D partial dependence of features `j` and `l` over the product grid.
/// Centering subtracts the grand mean over all grid cells.
pub fn pd2_surface<P: Predict + ?Sized>(
    pred: &P,
    ds: &Dataset,
    j: usize,
    l: usize,
    grid_j: &Grid,
    grid_l: &Grid,
    want_centered: bool,
) -> Result<Pd2Surface> {
    if j == l {
        return Err(Error::Invalid("2-D partial dependence needs two distinct features".into()));
    }
    let points: Vec<Vec<f64>> = grid_j
        .values
        .iter()
        .flat_map(|&a| grid_l.values.iter().map(move |&b| vec![a, b]))
        .collect();
    let flat = pd_at_points(pred, ds, &[j, l], &points)?;
    let ml = grid_l.len();
    let mut values: Vec<Vec<f64>> = flat.chunks_exact(ml).map(<[f64]>::to_vec).collect();
    if want_centered {
        let grand = pairwise_sum(&flat) / flat.len() as f64;
        values.iter_mut().flatten().for_each(|v| *v -= grand);
    }
    Ok(Pd2Surface {
        grid_j: grid_j.clone(),
        grid_l: grid_l.clone(),
        values,
        centered: want_centered,
    })
}

/// Derivative ICE curves by finite differences, plus the per-grid-point
/// standard deviation across observations.
pub fn dice_curves(ice: &IceMatrix) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if ice.categorical {
        return Err(Error::Invalid("d-ICE is undefined for a categorical feature".into()));
    }
    let m = ice.m();
    if m < 3 {
        return Err(Error::Invalid(format!("d-ICE needs at least 3 grid points, got {m}")));
    }
    let g = &ice.grid.values;
    let derivs: Vec<Vec<f64>> = ice
        .rows()
        .map(|row| {
            (0..m)
                .map(|k| {
                    let (a, b) = match k {
                        0 => (0, 1),
                        k if k == m - 1 => (m - 2, m - 1),
                        k => (k - 1, k + 1),
                    };
                    (row[b] - row[a]) / (g[b] - g[a])
                })
                .collect()
        })
        .collect();
    let mut col = vec![0.0; ice.n];
    let sd = (0..m)
        .map(|k| {
            for (c, d) in col.iter_mut().zip(&derivs) {
                *c = d[k];
            }
            sample_sd(&col)
        })
        .collect();
    Ok((derivs, sd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridStrategy};
    use crate::predict::{FnPredictor, Predictor, TruthFn};

    fn uniform_ds(n: usize, p: usize) -> Dataset {
        let cols = (0..p)
            .map(|j| {
                (0..n)
                    .map(|i| (((i * (2 * j + 3) + 7 * j) % n) as f64 / (n - 1) as f64) * 2.0 - 1.0)
                    .collect()
            })
            .collect();
        let names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        Dataset::from_numeric_columns(&names, cols).unwrap()
    }

    #[test]
    fn additive_rows_differ_by_constants() {
        let ds = uniform_ds(30, 3);
        let f = FnPredictor(|x: &[f64]| x[0].powi(3) + (2.0 * x[1]).sin() + x[2]);
        let grid = make_grid(&ds, 0, GridStrategy::Equidistant, 7).unwrap();
        let ice = ice_matrix(&f, &ds, 0, &grid).unwrap();
        let c = center_ice(&ice);
        for i in 1..ds.n() {
            for k in 0..7 {
                assert!((c.get(i, k) - c.get(0, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_observation_is_its_own_pd() {
        let ds = uniform_ds(2, 2).select_rows(&[1]).unwrap();
        let f = FnPredictor(|x: &[f64]| x[0] * x[1] + 1.0);
        let grid = Grid::custom(0, vec![-1.0, 0.0, 1.0]).unwrap();
        let ice = ice_matrix(&f, &ds, 0, &grid).unwrap();
        let pd = pd_curve(&ice, &[0], false).unwrap();
        assert_eq!(pd.values, ice.row(0));
    }

    #[test]
    fn running_example_slopes() {
        let f = Predictor::Truth(TruthFn::Sim3Running);
        let ds = Dataset::from_numeric_columns(
            &["x1", "x2", "x3", "x4", "x5", "x6"],
            vec![
                vec![0.5, -0.5],
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![2.0, -1.0],
            ],
        )
        .unwrap();
        let grid = Grid::custom(1, vec![-1.0, 0.0, 1.0]).unwrap();
        let ice = ice_matrix(&f, &ds, 1, &grid).unwrap();
        let slope = |i: usize| (ice.get(i, 2) - ice.get(i, 0)) / 2.0;
        assert!(slope(0).abs() < 1e-12);
        assert!((slope(1) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn centering_kills_constants_and_is_idempotent() {
        let grid = Grid::custom(0, vec![0.0, 1.0, 2.0]).unwrap();
        let ice = IceMatrix::from_values(0, "x", grid, vec![3.0; 6], false).unwrap();
        let c = center_ice(&ice);
        assert!(c.values().iter().all(|v| *v == 0.0));
        assert_eq!(center_ice(&c), c);
    }

    #[test]
    fn column_means_of_centered_equal_centered_pd() {
        let ds = uniform_ds(40, 2);
        let f = FnPredictor(|x: &[f64]| x[0] * x[1] + x[0].exp());
        let grid = make_grid(&ds, 0, GridStrategy::Equidistant, 9).unwrap();
        let ice = ice_matrix(&f, &ds, 0, &grid).unwrap();
        let all: Vec<usize> = (0..ds.n()).collect();
        let a = pd_curve(&center_ice(&ice), &all, false).unwrap();
        let b = pd_curve(&ice, &all, true).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(pairwise_sum(&b.values).abs() < 1e-10);
    }

    #[test]
    fn empty_support_is_an_error() {
        let grid = Grid::custom(0, vec![0.0, 1.0]).unwrap();
        let ice = IceMatrix::from_values(0, "x", grid, vec![1.0, 2.0], false).unwrap();
        assert!(matches!(pd_curve(&ice, &[], false), Err(Error::EmptySupport)));
    }

    #[test]
    fn additive_surface_is_sum_of_pds() {
        let ds = uniform_ds(25, 3);
        let f = FnPredictor(|x: &[f64]| x[0].powi(2) + 3.0 * x[1] + x[2].cos());
        let gj = make_grid(&ds, 0, GridStrategy::Equidistant, 5).unwrap();
        let gl = make_grid(&ds, 1, GridStrategy::Equidistant, 4).unwrap();
        let surf = pd2_surface(&f, &ds, 0, 1, &gj, &gl, true).unwrap();
        let all: Vec<usize> = (0..ds.n()).collect();
        let pj = pd_curve(&ice_matrix(&f, &ds, 0, &gj).unwrap(), &all, true).unwrap();
        let pl = pd_curve(&ice_matrix(&f, &ds, 1, &gl).unwrap(), &all, true).unwrap();
        for a in 0..5 {
            for b in 0..4 {
                assert!((surf.values[a][b] - pj.values[a] - pl.values[b]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pure_product_surface_is_outer_product() {
        // Background symmetric around zero, so the centered surface is exactly g_j * g_l.
        let x: Vec<f64> = (0..21).map(|i| i as f64 / 10.0 - 1.0).collect();
        let y: Vec<f64> = x.iter().rev().copied().collect();
        let ds = Dataset::from_numeric_columns(&["a", "b"], vec![x, y]).unwrap();
        let f = FnPredictor(|x: &[f64]| x[0] * x[1]);
        let g = Grid::custom(0, vec![-1.0, 0.0, 0.5, 1.0]).unwrap();
        let h = Grid::custom(1, vec![-1.0, 0.25, 1.0]).unwrap();
        let surf = pd2_surface(&f, &ds, 0, 1, &g, &h, true).unwrap();
        let grand: f64 = g.values.iter().sum::<f64>() * h.values.iter().sum::<f64>() / 12.0;
        for (a, &ga) in g.values.iter().enumerate() {
            for (b, &hb) in h.values.iter().enumerate() {
                assert!((surf.values[a][b] - (ga * hb - grand)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_point_grid_gives_conditional_pd() {
        let ds = uniform_ds(15, 3);
        let f = FnPredictor(|x: &[f64]| x[0] * x[1] + x[2]);
        let gj = Grid::custom(0, vec![0.5]).unwrap();
        let gl = make_grid(&ds, 1, GridStrategy::Equidistant, 4).unwrap();
        let surf = pd2_surface(&f, &ds, 0, 1, &gj, &gl, false).unwrap();
        let pts: Vec<Vec<f64>> = gl.values.iter().map(|&b| vec![0.5, b]).collect();
        let direct = pd_at_points(&f, &ds, &[0, 1], &pts).unwrap();
        assert_eq!(surf.values[0], direct);
    }

    #[test]
    fn dice_of_additive_has_zero_sd() {
        let ds = uniform_ds(20, 2);
        let f = FnPredictor(|x: &[f64]| x[0].powi(3) + 5.0 * x[1]);
        let grid = make_grid(&ds, 0, GridStrategy::Equidistant, 6).unwrap();
        let (_, sd) = dice_curves(&ice_matrix(&f, &ds, 0, &grid).unwrap()).unwrap();
        assert!(sd.iter().all(|s| *s <= 1e-10));
    }

    #[test]
    fn dice_of_product_with_sign_feature() {
        let xc: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let ds = Dataset::from_numeric_columns(&["s", "c"], vec![xs, xc.clone()]).unwrap();
        let f = FnPredictor(|x: &[f64]| x[0] * x[1]);
        let grid = make_grid(&ds, 0, GridStrategy::Equidistant, 5).unwrap();
        let (d, sd) = dice_curves(&ice_matrix(&f, &ds, 0, &grid).unwrap()).unwrap();
        for (row, c) in d.iter().zip(&xc) {
            assert!(row.iter().all(|v| (v - c).abs() < 1e-12));
        }
        // sample sd of five -1 and five +1
        let expected = (10.0_f64 / 9.0).sqrt();
        assert!(sd.iter().all(|s| (s - expected).abs() < 1e-12));
    }

    #[test]
    fn dice_needs_three_points() {
        let grid = Grid::custom(0, vec![0.0, 1.0]).unwrap();
        let ice = IceMatrix::from_values(0, "x", grid, vec![1.0, 2.0], false).unwrap();
        assert!(dice_curves(&ice).is_err());
    }
}
