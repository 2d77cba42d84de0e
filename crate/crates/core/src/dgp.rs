//! Simulation of feature data through a Gaussian copula, with targets from a
//! closed-form truth function plus Gaussian noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};
use crate::predict::truth::TruthFn;
use crate::rng::{stream, BERNOULLI_STREAM_BASE, NOISE_STREAM};
use crate::stats::{normal_cdf, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum NoiseRule {
    /// Fixed noise standard deviation.
    Absolute { sd: f64 },
    /// Noise standard deviation = `factor` times the realized standard
    /// deviation of the noiseless targets of the drawn sample.
    RelativeToSignal { factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub names: Vec<String>,
    pub marginals: Vec<Marginal>,
    /// Latent Gaussian-copula correlation (identity for independent features).
    pub correlation: Vec<Vec<f64>>,
    pub truth: TruthFn,
    pub noise: NoiseRule,
}

impl DgpSpec {
    /// Independent features named `x1..xp`.
    pub fn independent(marginals: Vec<Marginal>, truth: TruthFn, noise: NoiseRule) -> Self {
        let p = marginals.len();
        Self {
            names: (1..=p).map(|j| format!("x{j}")).collect(),
            marginals,
            correlation: SquareMatrix::identity(p).to_rows(),
            truth,
            noise,
        }
    }

    pub fn with_correlation(mut self, a: usize, b: usize, rho: f64) -> Self {
        self.correlation[a][b] = rho;
        self.correlation[b][a] = rho;
        self
    }

    pub fn p(&self) -> usize {
        self.marginals.len()
    }

    fn validate(&self) -> Result<SquareMatrix> {
        let p = self.p();
        if p == 0 || self.names.len() != p {
            return Err(Error::Invalid("names and marginals must have equal, non-zero length".into()));
        }
        for m in &self.marginals {
            let ok = match *m {
                Marginal::Uniform { low, high } => low < high && low.is_finite() && high.is_finite(),
                Marginal::Normal { mean, sd } => sd > 0.0 && mean.is_finite() && sd.is_finite(),
                Marginal::Bernoulli { p } => (0.0..=1.0).contains(&p),
            };
            if !ok {
                return Err(Error::Invalid(format!("invalid marginal {m:?}")));
            }
        }
        let corr = SquareMatrix::from_rows(&self.correlation)
            .filter(|c| c.dim() == p)
            .ok_or_else(|| Error::Invalid(format!("correlation must be {p}x{p}")))?;
        for i in 0..p {
            if corr[(i, i)] != 1.0 {
                return Err(Error::Invalid("correlation diagonal must be 1".into()));
            }
            for j in 0..i {
                if corr[(i, j)] != corr[(j, i)] {
                    return Err(Error::Invalid("correlation must be symmetric".into()));
                }
                let discrete = matches!(self.marginals[i], Marginal::Bernoulli { .. })
                    || matches!(self.marginals[j], Marginal::Bernoulli { .. });
                if discrete && corr[(i, j)] != 0.0 {
                    return Err(Error::Invalid(
                        "bernoulli features cannot be correlated through the copula".into(),
                    ));
                }
            }
        }
        Ok(corr)
    }
}

/// Draws `n` rows and their noisy targets. A pure function of its inputs.
pub fn sample_dgp(spec: &DgpSpec, n: usize, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    let corr = spec.validate()?;
    if n == 0 {
        return Err(Error::Invalid("sample size must be positive".into()));
    }
    let chol = Cholesky::factor(&corr, 1e-12).map_err(|pivot| Error::NotPositiveDefinite { pivot })?;
    let p = spec.p();

    // Independent latent normals, one stream per column.
    let latent: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut rng = stream(seed, j as u64);
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect();

    let mut columns = vec![Vec::with_capacity(n); p];
    let mut e = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            e[j] = latent[j][i];
        }
        let z = chol.lower_mul(&e);
        for j in 0..p {
            let v = match spec.marginals[j] {
                Marginal::Uniform { low, high } => low + (high - low) * normal_cdf(z[j]),
                // Inverse normal CDF of Φ(z) is z itself; skip the round trip.
                Marginal::Normal { mean, sd } => mean + sd * z[j],
                Marginal::Bernoulli { .. } => 0.0,
            };
            columns[j].push(v);
        }
    }
    for (j, m) in spec.marginals.iter().enumerate() {
        if let Marginal::Bernoulli { p: prob } = *m {
            let mut rng = stream(seed, BERNOULLI_STREAM_BASE + j as u64);
            for v in columns[j].iter_mut() {
                *v = if rng.random::<f64>() < prob { 1.0 } else { 0.0 };
            }
        }
    }

    let names: Vec<&str> = spec.names.iter().map(String::as_str).collect();
    let ds = Dataset::from_numeric_columns(&names, columns)?;
    let signal = spec.truth.eval_dataset(&ds)?;
    let noise_sd = match spec.noise {
        NoiseRule::Absolute { sd } => sd,
        NoiseRule::RelativeToSignal { factor } => factor * sample_sd(&signal),
    };
    let mut rng = stream(seed, NOISE_STREAM);
    let targets = signal
        .iter()
        .map(|s| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            s + noise_sd * eps
        })
        .collect();
    Ok((ds, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::truth::TruthFn;

    fn uniform4() -> DgpSpec {
        DgpSpec::independent(
            vec![Marginal::Uniform { low: -1.0, high: 1.0 }; 4],
            TruthFn::weak_family([1.0; 4], 1.0),
            NoiseRule::RelativeToSignal { factor: 0.1 },
        )
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn ranks(a: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..a.len()).collect();
        idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
        let mut r = vec![0.0; a.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }

    #[test]
    fn independent_columns_are_uncorrelated() {
        let (ds, _) = sample_dgp(&uniform4(), 10_000, 3).unwrap();
        for a in 0..4 {
            for b in 0..a {
                assert!(pearson(ds.column(a), ds.column(b)).abs() < 0.05);
            }
        }
        assert!(ds.column(0).iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn latent_correlation_gives_expected_spearman() {
        let spec = uniform4().with_correlation(0, 1, 0.9);
        let (ds, _) = sample_dgp(&spec, 10_000, 11).unwrap();
        let rho_s = pearson(&ranks(ds.column(0)), &ranks(ds.column(1)));
        assert!((0.85..=0.93).contains(&rho_s), "spearman {rho_s}");
    }

    #[test]
    fn bernoulli_support_and_mean() {
        let spec = DgpSpec::independent(
            vec![Marginal::Bernoulli { p: 0.5 }, Marginal::Uniform { low: 0.0, high: 1.0 }],
            TruthFn::Zero,
            NoiseRule::Absolute { sd: 0.0 },
        );
        let (ds, _) = sample_dgp(&spec, 10_000, 5).unwrap();
        let col = ds.column(0);
        assert!(col.iter().all(|&v| v == 0.0 || v == 1.0));
        let m = col.iter().sum::<f64>() / col.len() as f64;
        assert!((m - 0.5).abs() < 0.05);
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = uniform4().with_correlation(0, 1, 0.5);
        let a = sample_dgp(&spec, 500, 42).unwrap();
        let b = sample_dgp(&spec, 500, 42).unwrap();
        assert_eq!(a.0.to_csv().unwrap(), b.0.to_csv().unwrap());
        assert_eq!(
            a.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn adding_a_feature_keeps_earlier_columns() {
        let three = DgpSpec::independent(
            vec![Marginal::Uniform { low: -1.0, high: 1.0 }; 3],
            TruthFn::Zero,
            NoiseRule::Absolute { sd: 0.0 },
        );
        let (a, _) = sample_dgp(&three, 100, 9).unwrap();
        let (b, _) = sample_dgp(&uniform4(), 100, 9).unwrap();
        for j in 0..3 {
            assert_eq!(a.column(j), b.column(j));
        }
    }

    #[test]
    fn rejects_invalid_correlation() {
        let mut spec = uniform4();
        spec.correlation[0][1] = 0.99;
        spec.correlation[1][0] = 0.99;
        spec.correlation[0][2] = 0.99;
        spec.correlation[2][0] = 0.99;
        spec.correlation[1][2] = -0.99;
        spec.correlation[2][1] = -0.99;
        assert!(matches!(
            sample_dgp(&spec, 10, 1),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let asym = {
            let mut s = uniform4();
            s.correlation[0][1] = 0.3;
            s
        };
        assert!(sample_dgp(&asym, 10, 1).is_err());
    }

    #[test]
    fn bernoulli_cannot_be_correlated() {
        let spec = DgpSpec::independent(
            vec![Marginal::Bernoulli { p: 0.5 }, Marginal::Uniform { low: 0.0, high: 1.0 }],
            TruthFn::Zero,
            NoiseRule::Absolute { sd: 0.0 },
        )
        .with_correlation(0, 1, 0.5);
        assert!(sample_dgp(&spec, 10, 1).is_err());
    }
}
