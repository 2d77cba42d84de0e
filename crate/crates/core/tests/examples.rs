use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repid::dgp::{sample_dgp, DgpSpec, Marginal, NoiseRule};
use repid::experiments::{dgp_catalog, rank_eval, ExperimentTable, TableRow, TruthRank};
use repid::ice::{dice_curves, pd2_surface};
use repid::indices::{h_statistic, shap_interaction_value, IndexConfig, ShapMode};
use repid::predict::{fit_ols, fit_ols_detailed, CountingPredictor, FnPredictor, LinearModel, Term, TruthFn};
use repid::repid::{explain, SplitRule};
use repid::{
    center_ice, ice_matrix, load_dataset, make_grid, pd_curve, Dataset, GridStrategy, Method, Predict, Predictor, StopParams,
};

fn uniform(n: usize, p: usize, seed: u64) -> Dataset {
    let spec = DgpSpec::independent(
        vec![Marginal::Uniform { low: -1.0, high: 1.0 }; p],
        TruthFn::Zero,
        NoiseRule::Absolute { sd: 0.0 },
    );
    sample_dgp(&spec, n, seed).unwrap().0
}

fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn copula_with_identity_correlation_matches_independent_draws() {
    let n = 10_000;
    let spec = DgpSpec::independent(
        vec![
            Marginal::Uniform { low: -1.0, high: 1.0 },
            Marginal::Normal { mean: 2.0, sd: 3.0 },
        ],
        TruthFn::Zero,
        NoiseRule::Absolute { sd: 0.0 },
    );
    let (ds, _) = sample_dgp(&spec, n, 99).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12345);
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let normal = rand_distr::Normal::new(2.0, 3.0).unwrap();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(normal)).collect();
    assert!(ks(ds.column(0), &u) < 0.05, "uniform column KS {}", ks(ds.column(0), &u));
    assert!(ks(ds.column(1), &z) < 0.05, "normal column KS {}", ks(ds.column(1), &z));
}

#[test]
fn correlated_copula_reaches_the_target_latent_correlation() {
    let spec = DgpSpec::independent(
        vec![Marginal::Normal { mean: 0.0, sd: 1.0 }; 2],
        TruthFn::Zero,
        NoiseRule::Absolute { sd: 0.0 },
    )
    .with_correlation(0, 1, 0.9);
    let (ds, _) = sample_dgp(&spec, 20_000, 4).unwrap();
    let (a, b) = (ds.column(0), ds.column(1));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
    assert!((cov / (va * vb).sqrt() - 0.9).abs() < 0.01);
}

#[test]
fn dataset_survives_a_csv_round_trip() {
    let setting = dgp_catalog("sim3_running").unwrap();
    let (ds, _) = sample_dgp(&setting.dgp, 1000, 8).unwrap();
    let text = ds.to_csv().unwrap();
    let back = load_dataset(&text).unwrap();
    assert_eq!(back.n(), 1000);
    assert_eq!(back.names(), ds.names());
    for j in 0..ds.p() {
        let same = ds.column(j).iter().zip(back.column(j)).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "column {j} changed");
    }
    assert_eq!(back.to_csv().unwrap(), text);
}

#[test]
fn categorical_columns_load_with_sorted_levels() {
    let ds = load_dataset("g,x\nb,1\na,2\nc,3\na,4\n").unwrap();
    assert_eq!(ds.meta(0).levels().unwrap(), ["a", "b", "c"]);
    assert_eq!(ds.column(0), [1.0, 0.0, 2.0, 0.0]);
    assert!(load_dataset("x,y\n1,\n").is_err());
}

#[test]
fn ols_recovers_noiseless_coefficients_and_leaves_orthogonal_residuals() {
    let ds = uniform(300, 3, 21);
    let terms = vec![
        Term::intercept(),
        Term::main(0),
        Term::main(1),
        Term::product(&[0, 2]),
        Term::product(&[0, 1, 2]),
    ];
    let beta = [0.5, -2.0, 3.0, 1.5, -4.0];
    let truth = LinearModel::new(terms.clone(), beta.to_vec()).unwrap();
    let y: Vec<f64> = (0..ds.n()).map(|i| truth.eval(&ds.row(i))).collect();
    let fit = fit_ols(&ds, &y, &terms).unwrap();
    for (b, t) in fit.coefficients.iter().zip(beta) {
        assert!((b - t).abs() <= 1e-8 * t.abs(), "{b} vs {t}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noisy: Vec<f64> = y.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    let fit = fit_ols_detailed(&ds, &noisy, &terms).unwrap();
    let resid: Vec<f64> = (0..ds.n()).map(|i| noisy[i] - fit.model.eval(&ds.row(i))).collect();
    for t in &terms {
        let dot: f64 = (0..ds.n()).map(|i| t.eval(&ds.row(i)) * resid[i]).sum();
        assert!(dot.abs() <= 1e-6 * ds.n() as f64, "residuals not orthogonal: {dot}");
    }
}

#[test]
fn predictions_are_referentially_transparent() {
    let ds = uniform(50, 4, 2);
    let pred = Predictor::Truth(TruthFn::weak_family([1.0; 4], 1.0));
    let rows = ds.rows();
    assert_eq!(pred.predict(&rows).unwrap(), pred.predict(&rows).unwrap());
}

#[test]
fn additive_ice_rows_differ_by_a_shift_and_cost_one_batch() {
    let ds = uniform(40, 3, 5);
    let f = |x: &[f64]| x[0].powi(3) - 2.0 * x[1] + (x[2] * 3.0).cos();
    let counter = CountingPredictor::new(FnPredictor(f));
    let grid = make_grid(&ds, 0, GridStrategy::Equidistant, 15).unwrap();
    let ice = ice_matrix(&counter, &ds, 0, &grid).unwrap();
    assert_eq!(counter.rows_evaluated(), 40 * 15);
    assert_eq!(counter.calls(), 1);
    let first = ice.row(0).to_vec();
    for row in ice.rows() {
        let shift = row[0] - first[0];
        assert!(row.iter().zip(&first).all(|(a, b)| (a - b - shift).abs() <= 1e-12));
    }
    let (_, sd) = dice_curves(&ice).unwrap();
    assert!(sd.iter().all(|v| v.abs() <= 1e-10));
}

#[test]
fn singleton_support_and_single_row_reduce_to_the_curve() {
    let ds = uniform(1, 2, 6);
    let grid = make_grid(&uniform(30, 2, 6), 0, GridStrategy::Equidistant, 5).unwrap();
    let pred = FnPredictor(|x: &[f64]| x[0] * x[1]);
    let ice = ice_matrix(&pred, &ds, 0, &grid).unwrap();
    let pd = pd_curve(&ice, &[0], false).unwrap();
    assert_eq!(pd.values, ice.row(0));
    assert!(pd_curve(&ice, &[], false).is_err());
}

#[test]
fn product_with_a_sign_feature_has_unit_derivative_spread() {
    let n = 200;
    let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let xc: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
    let ds = Dataset::from_numeric_columns(&["s", "c"], vec![xs, xc]).unwrap();
    let grid = make_grid(&ds, 0, GridStrategy::Equidistant, 10).unwrap();
    let ice = ice_matrix(&FnPredictor(|x: &[f64]| x[0] * x[1]), &ds, 0, &grid).unwrap();
    let (derivs, sd) = dice_curves(&ice).unwrap();
    for (i, d) in derivs.iter().enumerate() {
        let want = if i % 2 == 0 { -1.0 } else { 1.0 };
        assert!(d.iter().all(|v| (v - want).abs() < 1e-9));
    }
    // Sample sd of n/2 values at -1 and n/2 at +1.
    let expect = (n as f64 / (n - 1) as f64).sqrt();
    assert!(sd.iter().all(|v| (v - expect).abs() < 1e-9));
}

#[test]
fn additive_pair_surface_splits_into_one_dimensional_pds() {
    let ds = uniform(60, 3, 7);
    let pred = FnPredictor(|x: &[f64]| x[0].sin() + x[1] * x[1] + x[2] * x[0]);
    let gj = make_grid(&ds, 1, GridStrategy::Equidistant, 6).unwrap();
    let gl = make_grid(&ds, 2, GridStrategy::Equidistant, 5).unwrap();
    // x[2]·x[0] couples feature 2 with feature 0, not with feature 1.
    let surface = pd2_surface(&pred, &ds, 1, 2, &gj, &gl, true).unwrap();
    let pj = pd_curve(&ice_matrix(&pred, &ds, 1, &gj).unwrap(), &(0..60).collect::<Vec<_>>(), true).unwrap();
    let pl = pd_curve(&ice_matrix(&pred, &ds, 2, &gl).unwrap(), &(0..60).collect::<Vec<_>>(), true).unwrap();
    for (a, row) in surface.values.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            assert!((v - pj.values[a] - pl.values[b]).abs() <= 1e-10);
        }
    }
}

#[test]
fn running_example_curve_slopes_follow_the_formula() {
    let setting = dgp_catalog("sim3_running").unwrap();
    let (ds, _) = sample_dgp(&setting.dgp, 500, 31).unwrap();
    let pred = Predictor::Truth(TruthFn::Sim3Running);
    let grid = make_grid(&ds, 1, GridStrategy::Equidistant, 20).unwrap();
    let ice = ice_matrix(&pred, &ds, 1, &grid).unwrap();
    let g = &grid.values;
    let slope = |row: &[f64]| (row[row.len() - 1] - row[0]) / (g[g.len() - 1] - g[0]);
    for i in 0..ds.n() {
        let (x1, x3) = (ds.value(i, 0), ds.value(i, 2));
        let want = -8.0 + if x1 > 0.0 { 8.0 } else { 0.0 } + if x3 == 0.0 { 16.0 } else { 0.0 };
        assert!((slope(ice.row(i)) - want).abs() < 1e-9);
    }

    let all: Vec<usize> = (0..ds.n()).collect();
    let pd = pd_curve(&center_ice(&ice), &all, false).unwrap();
    assert!(pd.values.iter().sum::<f64>().abs() < 1e-9);
    assert!(pd.values.windows(2).all(|w| w[1] > w[0]));
}

fn running_explanation(seed: u64, gamma: f64) -> (Dataset, repid::repid::Explanation) {
    let setting = dgp_catalog("sim3_running").unwrap();
    let (ds, _) = sample_dgp(&setting.dgp, 500, seed).unwrap();
    let grid = make_grid(&ds, 1, GridStrategy::Equidistant, 20).unwrap();
    let stop = StopParams {
        max_depth: 2,
        gamma,
        ..StopParams::default()
    };
    let ex = explain(&Predictor::Truth(TruthFn::Sim3Running), &ds, 1, &grid, &stop).unwrap();
    (ds, ex)
}

#[test]
fn regional_curves_carry_the_cell_slopes() {
    let (ds, ex) = running_explanation(17, 0.0);
    assert_eq!(ex.reps.len(), 4);
    let g = &ex.ice.grid.values;
    for rep in &ex.reps {
        let obs = &ex.tree.nodes[rep.node].obs;
        let (x1, x3) = (ds.value(obs[0], 0), ds.value(obs[0], 2));
        let want = -8.0 + if x1 > 0.0 { 8.0 } else { 0.0 } + if x3 == 0.0 { 16.0 } else { 0.0 };
        let v = &rep.raw.values;
        let got = (v[v.len() - 1] - v[0]) / (g[g.len() - 1] - g[0]);
        assert!((got - want).abs() < 1e-9, "{} slope {got} vs {want}", rep.path);
    }
}

#[test]
fn gamma_one_keeps_only_the_binary_split() {
    let (_, ex) = running_explanation(17, 1.0);
    let splits: Vec<_> = ex.tree.parents().map(|p| p.split.clone().unwrap()).collect();
    assert_eq!(splits.len(), 1);
    assert_eq!(splits[0].feature, 2);
    assert!(matches!(splits[0].rule, SplitRule::NumericLe(_)));
    let (_, free) = running_explanation(17, 0.0);
    let root = free.tree.nodes[0].int_imp.unwrap();
    assert!(free.tree.parents().skip(1).all(|p| p.int_imp.unwrap() < root));
}

#[test]
fn smaller_main_effect_inflates_the_h_statistic() {
    let full = Predictor::Truth(TruthFn::weak_family([1.0; 4], 1.0));
    let small = Predictor::Truth(TruthFn::weak_family([0.1, 1.0, 1.0, 1.0], 1.0));
    let mut increase: Vec<f64> = (0..30)
        .map(|seed| {
            let ds = uniform(300, 4, 100 + seed);
            let cfg = IndexConfig {
                seed,
                ..IndexConfig::default()
            };
            h_statistic(&small, &ds, 0, 1, &cfg).unwrap() - h_statistic(&full, &ds, 0, 1, &cfg).unwrap()
        })
        .collect();
    increase.sort_by(f64::total_cmp);
    let median = 0.5 * (increase[14] + increase[15]);
    assert!(median > 0.0, "median change {median}");
}

#[test]
fn sampled_shap_tracks_exact_enumeration() {
    let ds = uniform(60, 5, 13);
    let pred = FnPredictor(|x: &[f64]| {
        x[0] + 2.0 * x[0] * x[1] - x[1] * x[3] + 1.5 * x[0] * x[1] * x[2] + 0.5 * x[0] * x[3] * x[4]
    });
    let exact = IndexConfig {
        shap_mode: ShapMode::Exact,
        ..IndexConfig::default()
    };
    let sampled = IndexConfig {
        shap_mode: ShapMode::Sampled(200),
        ..IndexConfig::default()
    };
    for (j, l) in [(0, 1), (0, 3), (1, 2)] {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| ds.row(i)).collect();
        let ex: Vec<f64> = rows.iter().map(|x| shap_interaction_value(&pred, &ds, x, j, l, &exact).unwrap()).collect();
        let sa: Vec<f64> = rows.iter().map(|x| shap_interaction_value(&pred, &ds, x, j, l, &sampled).unwrap()).collect();
        let scale = ex.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in ex.iter().zip(&sa) {
            assert!((a - b).abs() <= 0.05 * scale, "pair ({j},{l}): exact {a} sampled {b}");
        }
    }
}

#[test]
fn shuffled_scores_agree_at_chance_level() {
    let truth: BTreeMap<usize, TruthRank> = [(1, TruthRank::Rank(1)), (2, TruthRank::Rank(2)), (3, TruthRank::Rank(3))].into();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let reps = 3000;
    let mut rows = Vec::new();
    for rep in 0..reps {
        for feature in 1..4 {
            rows.push(TableRow {
                rep,
                method: Method::Repid,
                feature,
                score: rng.random::<f64>(),
                rank: 0,
            });
        }
    }
    let table = ExperimentTable {
        setting: "null".into(),
        feature_names: vec!["x0".into(), "x1".into(), "x2".into(), "x3".into()],
        feature_s: 0,
        reps,
        rows,
        trees: Vec::new(),
        failures: Vec::new(),
    };
    let agreement = rank_eval(&table, &truth).agreement(Method::Repid).unwrap();
    // One of the 3! orderings is correct.
    assert!((agreement - 1.0 / 6.0).abs() < 0.03, "{agreement}");
}
