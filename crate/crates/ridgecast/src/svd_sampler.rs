//! Conditional posterior of the ridge-shrunk survey block
//!
//! ```text
//! gamma | . ~ N(gamma_bar, sigma2 * Sigma),   Sigma = (Z'Z + I/delta)^-1
//! gamma_bar = Sigma Z' r,                      r = y - X beta
//! ```
//!
//! evaluated through one thin SVD `Z' = S diag(omega) D'` that is computed
//! once per design and reused by every Gibbs sweep. With `c = omega^2 /
//! (1/delta + omega^2)` the Woodbury identity gives
//! `Sigma = delta (I - S diag(c) S')` and
//! `gamma_bar = S diag(omega / (1/delta + omega^2)) D' r`, so nothing of size
//! `K x K` is ever formed and each draw costs `O(K T)`.
//!
//! Draws use the auxiliary-variable construction: with `a ~ N(0, delta I_K)`
//! and an independent `b ~ N(0, I_r)` in the singular basis,
//!
//! ```text
//! theta = a - S diag(omega / (1/delta + omega^2)) (omega * S'a + b)
//! ```
//!
//! has covariance exactly `Sigma`, and `gamma = gamma_bar + sigma * theta`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Thin SVD of `Z'` (`K x T`) with rank `r = min(K, T)`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `K x r`, orthonormal columns.
    pub s: DMatrix<f64>,
    /// Singular values, descending, length `r`.
    pub omega: DVector<f64>,
    /// `T x r`, orthonormal columns.
    pub d: DMatrix<f64>,
}

impl SvdFactors {
    pub fn k(&self) -> usize {
        self.s.nrows()
    }

    pub fn t(&self) -> usize {
        self.d.nrows()
    }

    pub fn rank(&self) -> usize {
        self.omega.len()
    }

    /// `S diag(omega) D'`, i.e. `Z'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut s = self.s.clone();
        for (j, w) in self.omega.iter().enumerate() {
            s.column_mut(j).scale_mut(*w);
        }
        s * self.d.transpose()
    }

    fn squared(&self) -> impl Iterator<Item = f64> + '_ {
        self.omega.iter().map(|w| (w * w).max(0.0))
    }
}

/// Thin SVD of the transposed survey matrix `z` (`T x K`).
pub fn thin_svd(z: &DMatrix<f64>) -> Result<SvdFactors> {
    let (t, k) = z.shape();
    if t == 0 || k == 0 {
        return Err(Error::Dimension(format!("survey matrix is {t} x {k}")));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("survey matrix entry ({}, {})", i % t, i / t)));
    }
    let svd = z.transpose().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let r = order.len();
    let s = DMatrix::from_fn(k, r, |i, j| u[(i, order[j])]);
    let d = DMatrix::from_fn(t, r, |i, j| v_t[(order[j], i)]);
    let omega = DVector::from_iterator(r, order.iter().map(|&j| sv[j].max(0.0)));
    Ok(SvdFactors { s, omega, d })
}

/// Inputs of the survey-block conditional besides the factors.
#[derive(Debug, Clone)]
pub struct GammaPosteriorSpec {
    /// `y - X beta` on the standardized scale, length `T`.
    pub residual: DVector<f64>,
    pub sigma2: f64,
    /// Prior variance scale of the survey coefficients.
    pub delta: f64,
}

impl GammaPosteriorSpec {
    fn check(&self, f: &SvdFactors) -> Result<()> {
        if self.residual.len() != f.t() {
            return Err(Error::Dimension(format!(
                "residual has length {}, design has T = {}",
                self.residual.len(),
                f.t()
            )));
        }
        check_positive("sigma2", self.sigma2)?;
        check_positive("delta", self.delta)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// `omega / (1/delta + omega^2)`, the per-direction gain of the posterior mean.
fn mean_gain(f: &SvdFactors, delta: f64) -> impl Iterator<Item = f64> + '_ {
    let inv = 1.0 / delta;
    f.omega.iter().zip(f.squared()).map(move |(w, w2)| w / (inv + w2))
}

pub fn posterior_mean(f: &SvdFactors, spec: &GammaPosteriorSpec) -> Result<DVector<f64>> {
    spec.check(f)?;
    let mut u = f.d.tr_mul(&spec.residual);
    for (ui, g) in u.iter_mut().zip(mean_gain(f, spec.delta)) {
        *ui *= g;
    }
    Ok(&f.s * u)
}

/// `Sigma v` without forming `Sigma`.
pub fn posterior_covariance_apply(f: &SvdFactors, delta: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_positive("delta", delta)?;
    if v.len() != f.k() {
        return Err(Error::Dimension(format!(
            "vector has length {}, K = {}",
            v.len(),
            f.k()
        )));
    }
    let inv = 1.0 / delta;
    let mut u = f.s.tr_mul(v);
    for (ui, w2) in u.iter_mut().zip(f.squared()) {
        *ui *= w2 / (inv + w2);
    }
    let mut out = v - &f.s * u;
    out *= delta;
    Ok(out)
}

/// One draw from `N(gamma_bar, sigma2 * Sigma)`.
pub fn sample_gamma<R: Rng + ?Sized>(f: &SvdFactors, spec: &GammaPosteriorSpec, rng: &mut R) -> Result<DVector<f64>> {
    spec.check(f)?;
    let sigma = spec.sigma2.sqrt();
    let sd_a = spec.delta.sqrt();
    let a = DVector::from_fn(f.k(), |_, _| sd_a * rng.sample::<f64, _>(StandardNormal));
    let b = DVector::from_fn(f.rank(), |_, _| rng.sample::<f64, _>(StandardNormal));

    // u = gain * (D'r - sigma * (omega * S'a + b)); gamma = sigma * a + S u.
    let sa = f.s.tr_mul(&a);
    let dr = f.d.tr_mul(&spec.residual);
    let u = DVector::from_iterator(
        f.rank(),
        mean_gain(f, spec.delta)
            .enumerate()
            .map(|(j, g)| g * (dr[j] - sigma * (f.omega[j] * sa[j] + b[j]))),
    );
    let mut gamma = &f.s * u;
    gamma.axpy(sigma, &a, 1.0);
    Ok(gamma)
}

/// Dense reference sampler: forms the `K x K` precision `Z'Z + I/delta`,
/// factors it and solves. Costs `O(K^3)` per draw; kept for benchmarking
/// against the SVD path.
#[derive(Debug, Clone)]
pub struct DenseSampler {
    ztz: DMatrix<f64>,
    zt: DMatrix<f64>,
}

impl DenseSampler {
    pub fn new(z: &DMatrix<f64>) -> Self {
        DenseSampler {
            ztz: z.tr_mul(z),
            zt: z.transpose(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, spec: &GammaPosteriorSpec, rng: &mut R) -> Result<DVector<f64>> {
        check_positive("sigma2", spec.sigma2)?;
        check_positive("delta", spec.delta)?;
        let k = self.ztz.nrows();
        let mut q = self.ztz.clone();
        for i in 0..k {
            q[(i, i)] += 1.0 / spec.delta;
        }
        let chol = q
            .cholesky()
            .ok_or_else(|| Error::NonFinite("precision matrix not positive definite".into()))?;
        let mean = chol.solve(&(&self.zt * &spec.residual));
        let xi = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        // L' x = xi gives Cov(x) = (L L')^-1.
        let x = chol
            .l_dirty()
            .tr_solve_lower_triangular(&xi)
            .ok_or_else(|| Error::NonFinite("singular Cholesky factor".into()))?;
        Ok(mean + x * spec.sigma2.sqrt())
    }
}
