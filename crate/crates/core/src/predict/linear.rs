//! Linear models over explicit product and indicator terms, fitted by OLS.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `1(x > threshold)`
    IndicatorGt(f64),
    /// `1(x == level)`; `level` is the numeric value or categorical level index.
    IndicatorEq(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub feature: usize,
    pub transform: Transform,
}

impl Factor {
    fn apply(&self, row: &[f64]) -> f64 {
        let x = row[self.feature];
        match self.transform {
            Transform::Identity => x,
            Transform::IndicatorGt(t) => f64::from(u8::from(x > t)),
            Transform::IndicatorEq(l) => f64::from(u8::from(x == l)),
        }
    }
}

/// Product of factors. An empty factor list is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Term {
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn intercept() -> Self {
        Self::default()
    }

    pub fn main(feature: usize) -> Self {
        Self::product(&[feature])
    }

    pub fn product(features: &[usize]) -> Self {
        Self {
            factors: features
                .iter()
                .map(|&feature| Factor {
                    feature,
                    transform: Transform::Identity,
                })
                .collect(),
        }
    }

    /// Multiplies this term by one more factor.
    pub fn times(mut self, feature: usize, transform: Transform) -> Self {
        self.factors.push(Factor { feature, transform });
        self
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        self.factors.iter().map(|f| f.apply(row)).product()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.factors.iter().map(|f| f.feature).max()
    }

    fn key(&self) -> String {
        let mut parts: Vec<String> = self.factors.iter().map(|f| format!("{f:?}")).collect();
        parts.sort();
        parts.join("*")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn new(terms: Vec<Term>, coefficients: Vec<f64>) -> Result<Self> {
        let model = Self {
            terms,
            coefficients,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.len() != self.coefficients.len() {
            return Err(Error::Invalid(format!(
                "{} terms but {} coefficients",
                self.terms.len(),
                self.coefficients.len()
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("non-finite coefficient".into()));
        }
        check_terms(&self.terms)
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(&self.coefficients)
            .map(|(t, c)| c * t.eval(row))
            .sum()
    }

    pub fn min_arity(&self) -> usize {
        self.terms
            .iter()
            .filter_map(Term::max_feature)
            .max()
            .map_or(0, |m| m + 1)
    }
}

fn check_terms(terms: &[Term]) -> Result<()> {
    let mut seen = HashSet::new();
    let mut intercepts = 0;
    for t in terms {
        intercepts += usize::from(t.is_intercept());
        if !seen.insert(t.key()) {
            return Err(Error::Invalid(format!("duplicate term {t:?}")));
        }
    }
    if intercepts > 1 {
        return Err(Error::Invalid("more than one intercept term".into()));
    }
    Ok(())
}

/// OLS fit with coefficient standard errors.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub model: LinearModel,
    pub std_errors: Vec<f64>,
    pub residual_sd: f64,
}

pub fn fit_ols(ds: &Dataset, targets: &[f64], terms: &[Term]) -> Result<LinearModel> {
    fit_ols_detailed(ds, targets, terms).map(|f| f.model)
}

/// Solves the normal equations `XᵀX b = Xᵀy` by Cholesky.
pub fn fit_ols_detailed(ds: &Dataset, targets: &[f64], terms: &[Term]) -> Result<OlsFit> {
    let n = ds.n();
    let q = terms.len();
    if targets.len() != n {
        return Err(Error::Invalid(format!("{} targets for {n} rows", targets.len())));
    }
    if q == 0 || n < q {
        return Err(Error::Invalid(format!("need 1 <= #terms <= n, got {q} terms for {n} rows")));
    }
    check_terms(terms)?;
    if let Some(t) = terms.iter().find(|t| t.max_feature().is_some_and(|m| m >= ds.p())) {
        return Err(Error::Invalid(format!("term {t:?} references a missing feature")));
    }

    let mut xtx = SquareMatrix::zeros(q);
    let mut xty = vec![0.0; q];
    let mut row = vec![0.0; ds.p()];
    let mut x = vec![0.0; q];
    for i in 0..n {
        ds.row_into(i, &mut row);
        for (xk, t) in x.iter_mut().zip(terms) {
            *xk = t.eval(&row);
        }
        for a in 0..q {
            xty[a] += x[a] * targets[i];
            for b in 0..=a {
                xtx[(a, b)] += x[a] * x[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    let chol = Cholesky::factor(&xtx, 1e-10).map_err(|term| Error::SingularDesign { term })?;
    let coefficients = chol.solve(&xty);
    let model = LinearModel {
        terms: terms.to_vec(),
        coefficients,
    };

    let rss: f64 = (0..n)
        .map(|i| {
            ds.row_into(i, &mut row);
            (targets[i] - model.eval(&row)).powi(2)
        })
        .sum();
    let dof = (n - q).max(1) as f64;
    let sigma2 = rss / dof;
    let std_errors = chol
        .inverse_diagonal()
        .into_iter()
        .map(|d| (sigma2 * d).sqrt())
        .collect();
    Ok(OlsFit {
        model,
        std_errors,
        residual_sd: sigma2.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 7.0 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
        let ds = Dataset::from_numeric_columns(&["x1"], vec![x]).unwrap();
        let m = fit_ols(&ds, &y, &[Term::intercept(), Term::main(0)]).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((m.coefficients[1] - 3.0).abs() < 1e-10);
        assert_eq!(m.eval(&[1.0]), 5.0);
    }

    #[test]
    fn duplicate_column_is_singular() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let ds = Dataset::from_numeric_columns(&["a", "b"], vec![x.clone(), x.clone()]).unwrap();
        let err = fit_ols(&ds, &x, &[Term::intercept(), Term::main(0), Term::main(1)]);
        assert!(matches!(err, Err(Error::SingularDesign { term: 2 })));
    }

    #[test]
    fn duplicate_terms_are_rejected() {
        assert!(LinearModel::new(vec![Term::product(&[0, 1]), Term::product(&[1, 0])], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn indicator_terms_evaluate() {
        let t = Term::main(1).times(0, Transform::IndicatorGt(0.0));
        assert_eq!(t.eval(&[0.5, 2.0]), 2.0);
        assert_eq!(t.eval(&[-0.5, 2.0]), 0.0);
        let e = Term::main(1).times(2, Transform::IndicatorEq(0.0));
        assert_eq!(e.eval(&[0.0, 3.0, 0.0]), 3.0);
        assert_eq!(e.eval(&[0.0, 3.0, 1.0]), 0.0);
    }
}
