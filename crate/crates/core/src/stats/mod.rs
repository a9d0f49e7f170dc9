//! Distances between fingerprints, the normality pre-check and the outlier
//! tests, with the special functions they need.

mod distance;
mod normality;
mod outlier;
mod special;

pub use distance::{distance, DistanceMetric};
pub use normality::{anderson_darling_normal, AdLevel, AndersonDarling};
pub use outlier::{grubbs_decide, grubbs_threshold, three_sigma_decide, GrubbsSample, TestOutcome};
pub use special::{
    normal_cdf, regularized_incomplete_beta, student_t_cdf, student_t_sf, t_upper_critical,
};
