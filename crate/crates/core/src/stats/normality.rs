use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

// Shadowed by std's inherent methods whenever std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use super::normal_cdf;
use crate::{Error, Result};

/// Significance levels with tabulated critical values for the adjusted
/// Anderson-Darling statistic when mean and variance are both estimated
/// (Stephens, 1974).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AdLevel {
    #[cfg_attr(feature = "serde", serde(rename = "15%"))]
    Pct15,
    #[cfg_attr(feature = "serde", serde(rename = "10%"))]
    Pct10,
    #[cfg_attr(feature = "serde", serde(rename = "5%"))]
    Pct5,
    #[cfg_attr(feature = "serde", serde(rename = "2.5%"))]
    Pct2_5,
    #[cfg_attr(feature = "serde", serde(rename = "1%"))]
    Pct1,
}

impl AdLevel {
    pub const ALL: [AdLevel; 5] = [
        AdLevel::Pct15,
        AdLevel::Pct10,
        AdLevel::Pct5,
        AdLevel::Pct2_5,
        AdLevel::Pct1,
    ];

    pub fn critical_value(self) -> f64 {
        match self {
            AdLevel::Pct15 => 0.576,
            AdLevel::Pct10 => 0.656,
            AdLevel::Pct5 => 0.787,
            AdLevel::Pct2_5 => 0.918,
            AdLevel::Pct1 => 1.092,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AdLevel::Pct15 => "15%",
            AdLevel::Pct10 => "10%",
            AdLevel::Pct5 => "5%",
            AdLevel::Pct2_5 => "2.5%",
            AdLevel::Pct1 => "1%",
        }
    }
}

impl fmt::Display for AdLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        AdLevel::ALL
            .into_iter()
            .find(|l| l.name() == s || l.name().trim_end_matches('%') == s)
            .ok_or_else(|| Error::invalid("ad_level", "expected one of 15%, 10%, 5%, 2.5%, 1%"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AndersonDarling {
    /// `A²` of the standardized sample.
    pub statistic: f64,
    /// Small-sample adjusted `A*² = A²(1 + 0.75/n + 2.25/n²)`.
    pub adjusted: f64,
    pub n: usize,
}

impl AndersonDarling {
    pub fn passes(&self, level: AdLevel) -> bool {
        self.adjusted < level.critical_value()
    }
}

/// Anderson-Darling normality statistic with mean and standard deviation
/// estimated from the sample.
pub fn anderson_darling_normal(samples: &[f64]) -> Result<AndersonDarling> {
    let n = samples.len();
    if n < 5 {
        return Err(Error::TooFewSamples { needed: 5, got: n });
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mut y: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    y.sort_unstable_by(f64::total_cmp);

    // ln(1 − Φ(y)) is evaluated as ln Φ(−y) to keep the upper tail accurate.
    let s: f64 = (0..n)
        .map(|i| {
            let w = (2 * i + 1) as f64;
            w * (normal_cdf(y[i]).ln() + normal_cdf(-y[n - 1 - i]).ln())
        })
        .sum();
    let statistic = -nf - s / nf;
    let adjusted = statistic * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    Ok(AndersonDarling {
        statistic,
        adjusted,
        n,
    })
}
