//! Bayesian predictive regression with a Horseshoe-shrunk core block and a
//! ridge-shrunk survey block:
//!
//! ```text
//! y = X beta + Z gamma + e,  e ~ N(0, sigma2 I)
//! beta_j ~ N(0, lambda_j^2 tau^2)         (Horseshoe, half-Cauchy scales)
//! gamma | sigma2, delta ~ N(0, sigma2 delta I_K)
//! 1/delta ~ Gamma(c0, c1),  sigma2 ~ IG(a, b)
//! ```

mod design;
mod gibbs;
mod predict;

pub use design::{
    build_design, build_design_with, DesignOptions, FactorProjection, RegressionDesign, SurveyLags, XColumn,
    TARGET_LAGS,
};
pub use gibbs::{gibbs_run, sample_delta_inverse, write_draws_csv, PosteriorDraws};
pub use predict::{predict, GaussianMixture, PredictiveDistribution};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    /// Shape of the Gamma hyperprior on `1/delta`.
    pub c0: f64,
    /// Rate of the Gamma hyperprior on `1/delta`.
    pub c1: f64,
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
    /// Scale `A` of the half-Cauchy prior on the Horseshoe global scale.
    pub global_scale: f64,
    /// Prior variance for unpenalized core columns (the intercept).
    pub unpenalized_variance: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            c0: 3.0,
            c1: 0.03,
            sigma2_shape: 0.01,
            sigma2_rate: 0.01,
            global_scale: 1.0,
            unpenalized_variance: 100.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c0", self.c0),
            ("c1", self.c1),
            ("sigma2_shape", self.sigma2_shape),
            ("sigma2_rate", self.sigma2_rate),
            ("global_scale", self.global_scale),
            ("unpenalized_variance", self.unpenalized_variance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "prior {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McmcConfig {
    pub burn: usize,
    pub retain: usize,
    pub thin: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            burn: 2000,
            retain: 2000,
            thin: 1,
        }
    }
}
