//! Deterministic prediction functions.

pub mod external;
pub mod linear;
pub mod truth;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::data::{FeatureMeta, RowMatrix};
use crate::error::{Error, Result};

pub use external::{predict_external, ExternalMode, ExternalSpec};
pub use linear::{fit_ols, fit_ols_detailed, Factor, LinearModel, OlsFit, Term, Transform};
pub use truth::TruthFn;

/// Anything that maps a batch of feature rows to one prediction per row.
pub trait Predict: Sync {
    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>>;
}

impl<P: Predict + ?Sized> Predict for &P {
    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>> {
        (**self).predict(rows)
    }
}

/// External model plus the feature metadata used for its wire header.
/// Calls are serialized: one outstanding request at a time.
#[derive(Debug, Clone)]
pub struct ExternalPredictor {
    pub spec: ExternalSpec,
    pub metas: Vec<FeatureMeta>,
    lock: Arc<Mutex<()>>,
}

impl ExternalPredictor {
    pub fn new(spec: ExternalSpec, metas: Vec<FeatureMeta>) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            metas,
            lock: Arc::new(Mutex::new(())),
        })
    }
}

#[derive(Debug, Clone)]
pub enum Predictor {
    Linear(LinearModel),
    Truth(TruthFn),
    External(ExternalPredictor),
}

impl Predictor {
    fn raw(&self, rows: &RowMatrix) -> Result<Vec<f64>> {
        match self {
            Predictor::Linear(model) => {
                let need = model.min_arity();
                if rows.ncols() < need {
                    return Err(Error::Invalid(format!(
                        "linear model uses {need} features, rows have {}",
                        rows.ncols()
                    )));
                }
                Ok(rows.iter_rows().map(|r| model.eval(r)).collect())
            }
            Predictor::Truth(f) => {
                f.check_arity(rows.ncols())?;
                Ok(rows.iter_rows().map(|r| f.eval(r)).collect())
            }
            Predictor::External(ext) => {
                let _guard = ext.lock.lock().unwrap_or_else(|p| p.into_inner());
                predict_external(&ext.spec, rows, &ext.metas)
            }
        }
    }
}

impl Predict for Predictor {
    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>> {
        if rows.nrows() == 0 {
            return Ok(Vec::new());
        }
        if let Some(i) = rows.iter_rows().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Prediction {
                row: i,
                message: "non-finite input".into(),
            });
        }
        let out = self.raw(rows)?;
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Prediction {
                row: i,
                message: format!("non-finite prediction {}", out[i]),
            });
        }
        Ok(out)
    }
}

/// Wraps a row function, e.g. a hand-written test model.
pub struct FnPredictor<F>(pub F);

impl<F> Predict for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>> {
        Ok(rows.iter_rows().map(|r| (self.0)(r)).collect())
    }
}

/// Counts rows evaluated and batches issued by an inner predictor.
pub struct CountingPredictor<P> {
    pub inner: P,
    rows: AtomicUsize,
    calls: AtomicUsize,
}

impl<P> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            rows: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn rows_evaluated(&self) -> usize {
        self.rows.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<P: Predict> Predict for CountingPredictor<P> {
    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>> {
        self.rows.fetch_add(rows.nrows(), Ordering::SeqCst);
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.predict(rows)
    }
}
