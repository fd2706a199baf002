//! Factor-augmented comparator. Principal components of the standardized
//! survey block enter `X` as extra Horseshoe-shrunk columns and `Z` is
//! dropped, so estimation runs on the benchmark path.
//!
//! Loadings come from the estimation window only. At forecast time the
//! survey row is standardized with the window statistics and projected onto
//! the fixed loadings.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{RegressionDesign, XColumn};

pub const DEFAULT_FACTORS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    /// `K x F`, orthonormal columns.
    pub loadings: DMatrix<f64>,
    /// `T x F`, equal to `Z * loadings`.
    pub factors: DMatrix<f64>,
    /// Variance of each factor over the rows, non-increasing.
    pub explained_variance: DVector<f64>,
}

impl FactorSet {
    pub fn count(&self) -> usize {
        self.loadings.ncols()
    }
}

/// First `f` principal components of a column-standardized `z`.
///
/// Each factor's sign is fixed so that its largest-magnitude loading is
/// positive, which makes the result independent of column order.
pub fn extract_pcs(z: &DMatrix<f64>, f: usize) -> Result<FactorSet> {
    let (t, k) = z.shape();
    if f == 0 || f > t.min(k) {
        return Err(Error::InvalidParameter(format!(
            "factor count {f} outside 1..={} for a {t} x {k} survey block",
            t.min(k)
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("survey block passed to PCA".into()));
    }
    let svd = z.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let denom = (t.max(2) - 1) as f64;
    let mut loadings = DMatrix::zeros(k, f);
    let mut factors = DMatrix::zeros(t, f);
    let mut explained_variance = DVector::zeros(f);
    for (out, &src) in order.iter().take(f).enumerate() {
        let s = svd.singular_values[src];
        let mut load = v_t.row(src).transpose();
        let mut fac = u.column(src) * s;
        let pivot = load.iamax();
        if load[pivot] < 0.0 {
            load.neg_mut();
            fac.neg_mut();
        }
        loadings.set_column(out, &load);
        factors.set_column(out, &fac);
        explained_variance[out] = s * s / denom;
    }
    Ok(FactorSet {
        loadings,
        factors,
        explained_variance,
    })
}

/// Replace the survey block of `design` by its first `f` principal
/// components. `f = 0` gives the benchmark design.
pub fn pca_design(design: &RegressionDesign, f: usize) -> Result<RegressionDesign> {
    if f == 0 {
        return Ok(design.benchmark());
    }
    if design.k() == 0 {
        return Err(Error::InvalidParameter("PCA needs a non-empty survey block".into()));
    }
    let set = extract_pcs(&design.z, f)?;
    let (t, m) = (design.t(), design.m());
    let mut x = DMatrix::zeros(t, m + f);
    x.columns_mut(0, m).copy_from(&design.x);
    x.columns_mut(m, f).copy_from(&set.factors);

    let mut out = design.benchmark();
    out.x = x;
    out.x_columns.extend((0..f).map(XColumn::Factor));
    out.x_stats.extend(std::iter::repeat_n(None, f));
    out.penalized.extend(std::iter::repeat_n(true, f));
    out.projection = Some(crate::model::FactorProjection {
        loadings: set.loadings,
        z_columns: design.z_columns.clone(),
        z_stats: design.z_stats.clone(),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn standardized(z: DMatrix<f64>) -> DMatrix<f64> {
        let t = z.nrows() as f64;
        let mut z = z;
        for mut col in z.column_iter_mut() {
            let mean = col.sum() / t;
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / (t - 1.0)).sqrt();
            col /= sd;
        }
        z
    }

    fn noise(t: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, k, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn dominant_factor_share() {
        let (t, k) = (120, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let common: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
        let loads: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
        let e = noise(t, k, 4);
        let z = standardized(DMatrix::from_fn(t, k, |i, j| 10.0 * loads[j] * common[i] + e[(i, j)]));
        let set = extract_pcs(&z, 3).unwrap();
        let total = z.norm_squared() / (t - 1) as f64;
        assert!(set.explained_variance[0] / total > 0.9);
        assert!(set.explained_variance[0] >= set.explained_variance[1]);
        assert!(set.explained_variance[1] >= set.explained_variance[2]);
    }

    #[test]
    fn full_rank_reconstruction_and_orthogonality() {
        let z = standardized(noise(12, 7, 1));
        let set = extract_pcs(&z, 7).unwrap();
        let recon = &set.factors * set.loadings.transpose();
        assert!((recon - &z).amax() < 1e-8);
        let gram = set.factors.tr_mul(&set.factors);
        for i in 0..7 {
            for j in 0..7 {
                if i != j {
                    assert!(gram[(i, j)].abs() < 1e-8);
                }
            }
            assert!(set.factors.column(i).sum().abs() < 1e-8);
        }
    }

    #[test]
    fn permutation_invariance() {
        let z = standardized(noise(30, 10, 2));
        let perm: Vec<usize> = vec![3, 7, 0, 9, 1, 5, 2, 8, 4, 6];
        let zp = DMatrix::from_fn(30, 10, |i, j| z[(i, perm[j])]);
        let a = extract_pcs(&z, 4).unwrap();
        let b = extract_pcs(&zp, 4).unwrap();
        assert!((a.factors - b.factors).amax() < 1e-8);
        assert!((a.explained_variance - b.explained_variance).amax() < 1e-10);
    }

    #[test]
    fn factor_count_range() {
        let z = noise(5, 8, 0);
        assert!(extract_pcs(&z, 0).is_err());
        assert!(extract_pcs(&z, 6).is_err());
        assert!(extract_pcs(&z, 5).is_ok());
    }

    fn survey_design() -> (crate::data_io::PanelDataset, RegressionDesign) {
        use crate::data_io::{generate_synthetic, CountryGroup, DgpSpec, SurveyCategory, SurveyLayout};
        use crate::model::build_design;
        use crate::period::{Period, PeriodRange};
        let spec = DgpSpec {
            periods: 80,
            layout: SurveyLayout::Custom(vec![(SurveyCategory::Retail, CountryGroup::EA, 50)]),
            signals: 0,
            ..DgpSpec::default()
        };
        let panel = generate_synthetic(&spec, 11).unwrap().panel;
        let ids = panel.ids_with_role(crate::data_io::Role::Survey);
        let window = PeriodRange::new(panel.start(), Period::new(2007, 12).unwrap());
        let design = build_design(&panel, "pi", &ids, 1, window).unwrap();
        (panel, design)
    }

    #[test]
    fn design_bookkeeping() {
        let (panel, design) = survey_design();
        assert_eq!(design.k(), 100);
        let p = pca_design(&design, 3).unwrap();
        assert_eq!(p.m(), design.m() + 3);
        assert_eq!(p.k(), 0);
        assert_eq!(p.penalized.len(), p.m());
        let again = pca_design(&design, 3).unwrap();
        assert_eq!(p.x, again.x);

        let bench = pca_design(&design, 0).unwrap();
        assert_eq!(bench.x, design.x);
        assert_eq!(bench.k(), 0);

        // Projecting an in-sample row onto the loadings reproduces the factor values.
        let last = p.t() - 1;
        let (x, z) = p.forecast_row(&panel, p.rows[last]).unwrap();
        assert!(z.is_empty());
        assert!((x.transpose() - p.x.row(last)).amax() < 1e-10);
    }
}
