use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

// Shadowed by std's inherent methods whenever std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Distance between two equal-length fingerprint sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DistanceMetric {
    L1,
    L2,
    Cosine,
    Wasserstein,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 4] = [
        DistanceMetric::L1,
        DistanceMetric::L2,
        DistanceMetric::Cosine,
        DistanceMetric::Wasserstein,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::L1 => "l1",
            DistanceMetric::L2 => "l2",
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::Wasserstein => "wasserstein",
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistanceMetric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("metric", "expected l1, l2, cosine or wasserstein"))
    }
}

pub fn distance(metric: DistanceMetric, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(Error::EmptyData);
    }
    let d = match metric {
        DistanceMetric::L1 => u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum(),
        DistanceMetric::L2 => u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        DistanceMetric::Cosine => {
            let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nu == 0.0 || nv == 0.0 {
                return Err(Error::CosineUndefined);
            }
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            // Rounding can push the ratio a hair outside [-1, 1].
            (1.0 - dot / (nu * nv)).max(0.0)
        }
        DistanceMetric::Wasserstein => wasserstein_1d(u, v),
    };
    Ok(d)
}

/// W1 between two equal-size empirical distributions: the optimal coupling in
/// one dimension pairs order statistics.
fn wasserstein_1d(u: &[f64], v: &[f64]) -> f64 {
    let mut a: Vec<f64> = u.to_vec();
    let mut b: Vec<f64> = v.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}
