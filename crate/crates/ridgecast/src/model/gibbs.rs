use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{McmcConfig, PriorConfig, RegressionDesign};
use crate::error::{Error, Result};
use crate::svd_sampler::{sample_gamma, thin_svd, GammaPosteriorSpec};

// Horseshoe scales are kept inside this band so the core-block precision
// stays factorizable.
const SCALE_FLOOR: f64 = 1e-10;
const SCALE_CEIL: f64 = 1e10;

/// Retained draws, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub beta: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub sigma2: Vec<f64>,
    pub delta: Vec<f64>,
    /// Local scales. Unpenalized columns report their fixed prior standard
    /// deviation.
    pub lambda: DMatrix<f64>,
    pub tau: Vec<f64>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    pub fn beta_mean(&self) -> DVector<f64> {
        self.beta.row_mean().transpose()
    }

    pub fn gamma_mean(&self) -> DVector<f64> {
        self.gamma.row_mean().transpose()
    }
}

/// `1/x` with `x ~ Gamma(shape, rate)`.
fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    1.0 / gamma_draw(rng, shape, rate)
}

fn gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    match Gamma::new(shape, 1.0 / rate) {
        Ok(g) => g.sample(rng),
        Err(_) => f64::NAN,
    }
}

/// Draw of `1/delta` from its conditional
/// `Gamma(c0 + K/2, c1 + gamma'gamma / (2 sigma2))` (shape, rate).
pub fn sample_delta_inverse<R: Rng + ?Sized>(
    rng: &mut R,
    prior: &PriorConfig,
    gamma: &DVector<f64>,
    sigma2: f64,
) -> f64 {
    let k = gamma.len() as f64;
    gamma_draw(
        rng,
        prior.c0 + 0.5 * k,
        prior.c1 + gamma.norm_squared() / (2.0 * sigma2),
    )
}

struct Horseshoe {
    lambda2: Vec<f64>,
    nu: Vec<f64>,
    tau2: f64,
    xi: f64,
}

impl Horseshoe {
    fn new(m: usize) -> Self {
        Horseshoe {
            lambda2: vec![1.0; m],
            nu: vec![1.0; m],
            tau2: 1.0,
            xi: 1.0,
        }
    }

    /// Auxiliary-variable updates: every conditional is inverse-Gamma.
    fn update<R: Rng + ?Sized>(&mut self, rng: &mut R, beta: &DVector<f64>, penalized: &[bool], a2: f64) {
        let clamp = |v: f64| v.clamp(SCALE_FLOOR, SCALE_CEIL);
        let mut p = 0usize;
        let mut ss = 0.0;
        for j in (0..beta.len()).filter(|&j| penalized[j]) {
            let b2 = beta[j] * beta[j];
            self.lambda2[j] = clamp(inv_gamma(rng, 1.0, 1.0 / self.nu[j] + b2 / (2.0 * self.tau2)));
            self.nu[j] = inv_gamma(rng, 1.0, 1.0 + 1.0 / self.lambda2[j]);
            ss += b2 / self.lambda2[j];
            p += 1;
        }
        if p == 0 {
            return;
        }
        self.tau2 = clamp(inv_gamma(rng, 0.5 * (p as f64 + 1.0), 1.0 / self.xi + 0.5 * ss));
        self.xi = inv_gamma(rng, 1.0, 1.0 / a2 + 1.0 / self.tau2);
    }

    fn prior_variance(&self, j: usize, penalized: bool, prior: &PriorConfig) -> f64 {
        if penalized {
            self.lambda2[j] * self.tau2
        } else {
            prior.unpenalized_variance
        }
    }
}

/// Run the Gibbs sampler. Each sweep updates, in order: the core block
/// `beta`, the Horseshoe scales, the survey block `gamma` (SVD sampler),
/// `sigma2`, and `1/delta`. With `K = 0` the survey steps are skipped and
/// `delta` is reported as `c1 / c0`.
pub fn gibbs_run<R: Rng + ?Sized>(
    design: &RegressionDesign,
    prior: &PriorConfig,
    mcmc: &McmcConfig,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    if mcmc.retain == 0 || mcmc.thin == 0 {
        return Err(Error::InvalidParameter("retain and thin must be at least 1".into()));
    }
    let (t, m, k) = (design.t(), design.m(), design.k());
    if m == 0 || design.penalized.len() != m {
        return Err(Error::Dimension(format!(
            "core block has {m} columns and {} penalty flags",
            design.penalized.len()
        )));
    }
    let x = &design.x;
    let y = &design.y;
    let z = &design.z;
    let xtx = x.tr_mul(x);
    let factors = if k > 0 { Some(thin_svd(z)?) } else { None };

    let mut gamma = DVector::zeros(k);
    let mut z_gamma = DVector::zeros(t);
    let mut sigma2 = 1.0;
    let mut delta = prior.c1 / prior.c0;
    let mut hs = Horseshoe::new(m);
    let a2 = prior.global_scale * prior.global_scale;

    let total = mcmc.burn + mcmc.retain * mcmc.thin;
    let mut out = PosteriorDraws {
        beta: DMatrix::zeros(mcmc.retain, m),
        gamma: DMatrix::zeros(mcmc.retain, k),
        sigma2: Vec::with_capacity(mcmc.retain),
        delta: Vec::with_capacity(mcmc.retain),
        lambda: DMatrix::zeros(mcmc.retain, m),
        tau: Vec::with_capacity(mcmc.retain),
    };
    let fail = |iteration: usize, block: &'static str| Error::Sampler { iteration, block };

    for iter in 0..total {
        // 1. beta | gamma, sigma2, scales
        let resid_z = y - &z_gamma;
        let mut q = &xtx / sigma2;
        for j in 0..m {
            q[(j, j)] += 1.0 / hs.prior_variance(j, design.penalized[j], prior);
        }
        let chol = q.cholesky().ok_or_else(|| fail(iter, "beta"))?;
        let mean = chol.solve(&(x.tr_mul(&resid_z) / sigma2));
        let xi = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let dev = chol
            .l_dirty()
            .tr_solve_lower_triangular(&xi)
            .ok_or_else(|| fail(iter, "beta"))?;
        let beta = mean + dev;
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(fail(iter, "beta"));
        }

        // 2. Horseshoe local and global scales
        hs.update(rng, &beta, &design.penalized, a2);
        if !hs.tau2.is_finite() || hs.lambda2.iter().any(|v| !v.is_finite()) {
            return Err(fail(iter, "horseshoe"));
        }

        // 3. gamma | beta, sigma2, delta
        let resid_x = y - x * &beta;
        if let Some(f) = &factors {
            let spec = GammaPosteriorSpec {
                residual: resid_x.clone(),
                sigma2,
                delta,
            };
            gamma = sample_gamma(f, &spec, rng).map_err(|_| fail(iter, "gamma"))?;
            if gamma.iter().any(|v| !v.is_finite()) {
                return Err(fail(iter, "gamma"));
            }
            z_gamma = z * &gamma;
        }

        // 4. sigma2 | beta, gamma, delta
        let resid = resid_x - &z_gamma;
        let g2 = gamma.norm_squared();
        let mut shape = prior.sigma2_shape + 0.5 * t as f64;
        let mut rate = prior.sigma2_rate + 0.5 * resid.norm_squared();
        if k > 0 {
            shape += 0.5 * k as f64;
            rate += g2 / (2.0 * delta);
        }
        sigma2 = inv_gamma(rng, shape, rate);
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(fail(iter, "sigma2"));
        }

        // 5. 1/delta | gamma, sigma2
        if k > 0 {
            delta = 1.0 / sample_delta_inverse(rng, prior, &gamma, sigma2);
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(fail(iter, "delta"));
            }
        }

        if iter >= mcmc.burn && (iter - mcmc.burn).is_multiple_of(mcmc.thin) {
            let row = out.sigma2.len();
            out.beta.row_mut(row).tr_copy_from(&beta);
            out.gamma.row_mut(row).tr_copy_from(&gamma);
            for j in 0..m {
                out.lambda[(row, j)] = if design.penalized[j] {
                    hs.lambda2[j].sqrt()
                } else {
                    prior.unpenalized_variance.sqrt()
                };
            }
            out.sigma2.push(sigma2);
            out.delta.push(delta);
            out.tau.push(hs.tau2.sqrt());
        }
    }
    Ok(out)
}

/// One row per draw; column names are prefixed by parameter block
/// (`beta_`, `gamma_`, `lambda_`) so external tools can split them.
pub fn write_draws_csv<W: Write>(draws: &PosteriorDraws, mut w: W) -> std::io::Result<()> {
    let (m, k) = (draws.beta.ncols(), draws.gamma.ncols());
    let mut header = vec!["draw".to_string(), "sigma2".into(), "delta".into(), "tau".into()];
    header.extend((0..m).map(|j| format!("beta_{j}")));
    header.extend((0..m).map(|j| format!("lambda_{j}")));
    header.extend((0..k).map(|j| format!("gamma_{j}")));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..draws.len() {
        write!(w, "{i},{},{},{}", draws.sigma2[i], draws.delta[i], draws.tau[i])?;
        for v in draws
            .beta
            .row(i)
            .iter()
            .chain(draws.lambda.row(i).iter())
            .chain(draws.gamma.row(i).iter())
        {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
