//! Closed-form data-generating functions used as exact "black boxes".

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::data::Dataset;
use crate::error::{Error, Result};

fn ind(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TruthFn {
    /// Constant zero; handy for pure feature simulation.
    Zero,
    /// Six features: `0.2 x1 - 8 x2 + 8 x2 1(x1 > 0) + 16 x2 1(x3 = 0)`.
    Sim3Running,
    /// Four features:
    /// `b1 x1 + b2 x2 + b3 x3 + b4 x4 + b12 x1 x2 + b23 x2 x3 + b13 x1 x3 + b123 x1 x2 x3`.
    /// `coefs` = `[b1, b2, b3, b4, b12, b23, b13, b123]`.
    Weak { coefs: Vec<f64> },
    /// Ten features, a nonlinear function in which `x2` interacts with
    /// `x1, x3, x4, x6, x8`.
    Nonlinear10,
    /// Seven features: `x1 + 4 x2 + 3 x2 x3 + 5 x2 x4 + 7 x2 x5`.
    Linear7,
}

impl TruthFn {
    /// Weak-interaction family with the given main effects and `x1 x2` coefficient;
    /// the remaining interaction coefficients are one.
    pub fn weak_family(mains: [f64; 4], b12: f64) -> Self {
        let mut coefs = mains.to_vec();
        coefs.extend([b12, 1.0, 1.0, 1.0]);
        TruthFn::Weak { coefs }
    }

    pub fn id(&self) -> &'static str {
        match self {
            TruthFn::Zero => "zero",
            TruthFn::Sim3Running => "sim3_running",
            TruthFn::Weak { .. } => "weak",
            TruthFn::Nonlinear10 => "nonlinear10",
            TruthFn::Linear7 => "linear7",
        }
    }

    /// Required row arity; `None` accepts any.
    pub fn arity(&self) -> Option<usize> {
        match self {
            TruthFn::Zero => None,
            TruthFn::Sim3Running => Some(6),
            TruthFn::Weak { .. } => Some(4),
            TruthFn::Nonlinear10 => Some(10),
            TruthFn::Linear7 => Some(7),
        }
    }

    pub fn check_arity(&self, p: usize) -> Result<()> {
        match self.arity() {
            Some(a) if a != p => Err(Error::Invalid(format!(
                "truth function '{}' needs {a} features, got {p}",
                self.id()
            ))),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TruthFn::Zero => 0.0,
            TruthFn::Sim3Running => {
                0.2 * x[0] - 8.0 * x[1] + 8.0 * x[1] * ind(x[0] > 0.0)
                    + 16.0 * x[1] * ind(x[2] == 0.0)
            }
            TruthFn::Weak { coefs: b } => {
                let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
                b[0] * x1
                    + b[1] * x2
                    + b[2] * x3
                    + b[3] * x4
                    + b[4] * x1 * x2
                    + b[5] * x2 * x3
                    + b[6] * x1 * x3
                    + b[7] * x1 * x2 * x3
            }
            TruthFn::Nonlinear10 => {
                let x6_log = if x[5] == 0.0 { 0.0 } else { x[5] * x[5].abs().ln() };
                let pos2 = x[1] * ind(x[1] > 0.0);
                6.0 * x[0] + x[1] * x[1] - PI.powf(x[2]) + (-2.0 * x[3] * x[3]).exp()
                    + 1.0 / (2.0 + x[4].abs())
                    + x6_log
                    + 2.0 * x[2] * ind(x[0] > 0.0) * ind(x[1] > 0.0)
                    + 2.0 * x[1] * ind(x[3] > 0.0)
                    + 4.0 * pos2.powf(x[5].abs())
                    + (x[1] + x[7]).abs()
            }
            TruthFn::Linear7 => {
                x[0] + 4.0 * x[1] + 3.0 * x[1] * x[2] + 5.0 * x[1] * x[3] + 7.0 * x[1] * x[4]
            }
        }
    }

    pub fn eval_dataset(&self, ds: &Dataset) -> Result<Vec<f64>> {
        self.check_arity(ds.p())?;
        let mut row = vec![0.0; ds.p()];
        Ok((0..ds.n())
            .map(|i| {
                ds.row_into(i, &mut row);
                self.eval(&row)
            })
            .collect())
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(TruthFn::Zero),
            "sim3_running" => Ok(TruthFn::Sim3Running),
            "weak" | "weak_initial" => Ok(TruthFn::weak_family([1.0; 4], 1.0)),
            "weak_small_main" => Ok(TruthFn::weak_family([0.1, 1.0, 1.0, 1.0], 1.0)),
            "weak_tiny_mains" => Ok(TruthFn::weak_family([0.1; 4], 2.0)),
            "nonlinear10" => Ok(TruthFn::Nonlinear10),
            "linear7" => Ok(TruthFn::Linear7),
            other => Err(Error::Invalid(format!("unknown truth function '{other}'"))),
        }
    }
}
