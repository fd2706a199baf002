use nalgebra::DVector;

use super::PosteriorDraws;
use crate::data_io::ColumnStats;
use crate::error::{Error, Result};
use crate::period::Period;

/// Equally weighted mixture of normals.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        if means.len() != vars.len() || means.is_empty() {
            return Err(Error::Dimension(format!(
                "mixture with {} means and {} variances",
                means.len(),
                vars.len()
            )));
        }
        if vars.iter().any(|v| !(*v > 0.0 && v.is_finite())) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("mixture component".into()));
        }
        Ok(GaussianMixture { means, vars })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.len() as f64
    }

    /// Law of total variance over the components.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let n = self.len() as f64;
        self.means
            .iter()
            .zip(&self.vars)
            .map(|(m, v)| v + (m - mu).powi(2))
            .sum::<f64>()
            / n
    }
}

/// Forecast of one target at one origin and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub origin: Period,
    pub horizon: usize,
    pub target: String,
    pub mixture: GaussianMixture,
    pub realized: Option<f64>,
}

impl PredictiveDistribution {
    pub fn target_period(&self) -> Period {
        self.origin.offset(self.horizon as i32)
    }
}

/// Mixture of `N(x'beta_i + z'gamma_i, sigma2_i)` over retained draws, mapped
/// back to the target's original scale with `y_stats`.
pub fn predict(
    draws: &PosteriorDraws,
    x_new: &DVector<f64>,
    z_new: &DVector<f64>,
    y_stats: &ColumnStats,
) -> Result<GaussianMixture> {
    if x_new.len() != draws.beta.ncols() || z_new.len() != draws.gamma.ncols() {
        return Err(Error::Dimension(format!(
            "forecast row has M = {}, K = {}; draws have M = {}, K = {}",
            x_new.len(),
            z_new.len(),
            draws.beta.ncols(),
            draws.gamma.ncols()
        )));
    }
    let mut mu = &draws.beta * x_new;
    if !z_new.is_empty() {
        mu += &draws.gamma * z_new;
    }
    let scale2 = y_stats.std * y_stats.std;
    let means = mu.iter().map(|m| y_stats.invert(*m)).collect();
    let vars = draws.sigma2.iter().map(|s| s * scale2).collect();
    GaussianMixture::new(means, vars)
}
