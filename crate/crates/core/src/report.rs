//! Per-feature interaction scores produced by any of the four methods.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Repid,
    HStatistic,
    Greenwell,
    Shap,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Repid, Method::HStatistic, Method::Greenwell, Method::Shap];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Repid => "repid",
            Method::HStatistic => "h_statistic",
            Method::Greenwell => "greenwell",
            Method::Shap => "shap",
        }
    }

    /// Whether scores are shares of a whole (REPID, SHAP) rather than
    /// unbounded magnitudes (H-statistic, Greenwell).
    pub fn is_relative(self) -> bool {
        matches!(self, Method::Repid | Method::Shap)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "repid" => Ok(Method::Repid),
            "h" | "h_statistic" | "hstat" => Ok(Method::HStatistic),
            "greenwell" => Ok(Method::Greenwell),
            "shap" => Ok(Method::Shap),
            other => Err(Error::Invalid(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub method: Method,
    pub feature_s: usize,
    /// Names of all dataset features, indexed like the dataset.
    pub names: Vec<String>,
    pub scores: BTreeMap<usize, f64>,
    pub ranks: BTreeMap<usize, usize>,
    /// Share of centered-ICE heterogeneity explained (REPID only).
    pub r2_int: Option<f64>,
    /// Set when the method found no interaction at all.
    pub no_interaction: bool,
}

impl InteractionReport {
    pub fn new(method: Method, feature_s: usize, names: Vec<String>, scores: BTreeMap<usize, f64>) -> Self {
        let ranks = dense_ranks(&scores);
        Self {
            method,
            feature_s,
            names,
            scores,
            ranks,
            r2_int: None,
            no_interaction: false,
        }
    }

    pub fn score(&self, feature: usize) -> f64 {
        self.scores.get(&feature).copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,feature,score,rank\n");
        for (&j, &s) in &self.scores {
            out.push_str(&format!("{},{},{},{}\n", self.method, self.names[j], s, self.ranks[&j]));
        }
        out
    }
}

/// Dense ranks, 1 = largest score; equal scores share a rank.
pub fn dense_ranks(scores: &BTreeMap<usize, f64>) -> BTreeMap<usize, usize> {
    let mut distinct: Vec<f64> = scores.values().copied().collect();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    scores
        .iter()
        .map(|(&j, s)| (j, distinct.iter().position(|d| d == s).unwrap() + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_share_dense_rank() {
        let scores: BTreeMap<usize, f64> = [(0, 0.5), (2, 0.5), (3, 0.1), (5, 0.9)].into();
        let r = dense_ranks(&scores);
        assert_eq!(r[&5], 1);
        assert_eq!(r[&0], 2);
        assert_eq!(r[&2], 2);
        assert_eq!(r[&3], 3);
    }
}
