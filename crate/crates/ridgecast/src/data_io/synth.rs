//! Synthetic panels with a known data-generating process.
//!
//! The target follows the direct-forecast regression the estimator assumes:
//!
//! ```text
//! pi[t+h] = b0 + b1 pi[t-1] + b2 pi[t-2] + b3 u[t] + b4 ip[t] + b5 m2[t]
//!         + sum_j g_j z_j[t - lag_j] + noise_sd * e[t+h]
//! ```
//!
//! with a sparse set of survey coefficients `g`. Survey series are unit
//! variance AR(1) processes, optionally loaded on one common factor.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::{table1, CountryGroup, PanelDataset, SurveyCategory, VariableMeta};
use crate::config::{split_list, KvConfig};
use crate::error::{Error, Result};
use crate::period::Period;

pub const TARGET_ID: &str = "pi";
pub const CORE_IDS: [&str; 3] = ["unemp", "ip", "m2"];
const BURN_IN: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub enum SurveyLayout {
    /// Counts chosen so that subsetting reproduces the coverage table.
    Table1,
    /// `(category, smallest group, number of series)`.
    Custom(Vec<(SurveyCategory, CountryGroup, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub start: Period,
    pub periods: usize,
    pub horizon: usize,
    pub layout: SurveyLayout,
    /// Intercept, target lags 1 and 2, unemployment, production, M2.
    pub beta: [f64; 6],
    pub signals: usize,
    pub signal_magnitude: f64,
    pub noise_sd: f64,
    pub factor_strength: f64,
    pub survey_persistence: f64,
    pub core_persistence: f64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec {
            start: Period::new(2002, 1).unwrap(),
            periods: 228,
            horizon: 1,
            layout: SurveyLayout::Table1,
            beta: [0.0, 0.3, 0.1, -0.3, 0.2, 0.1],
            signals: 5,
            signal_magnitude: 1.0,
            noise_sd: 0.1,
            factor_strength: 0.0,
            survey_persistence: 0.5,
            core_persistence: 0.8,
        }
    }
}

impl DgpSpec {
    /// Reads `[synth]` scalars and optional `[counts]` entries of the form
    /// `industry.Big9 = 12`. Without `[counts]` the table layout is used.
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = DgpSpec::default();
        let start = match cfg.get("synth", "start") {
            Some(s) => s.parse().map_err(|e| Error::Config(format!("[synth] start: {e}")))?,
            None => d.start,
        };
        let beta = match cfg.get("synth", "beta") {
            None => d.beta,
            Some(v) => {
                let vals: Vec<f64> = split_list(v)
                    .map(|t| {
                        t.parse()
                            .map_err(|_| Error::Config(format!("[synth] beta: bad number {t:?}")))
                    })
                    .collect::<Result<_>>()?;
                vals.try_into()
                    .map_err(|v: Vec<f64>| Error::Config(format!("[synth] beta needs 6 values, got {}", v.len())))?
            }
        };
        let mut counts = Vec::new();
        for e in cfg.section("counts") {
            let (c, g) = e
                .key
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("[counts] {}: expected <category>.<group>", e.key)))?;
            let n = e
                .value
                .parse()
                .map_err(|_| Error::Config(format!("[counts] {}: not a count", e.key)))?;
            counts.push((c.parse()?, g.parse()?, n));
        }
        let layout = match cfg.get("synth", "layout") {
            Some("table1") if counts.is_empty() => SurveyLayout::Table1,
            Some("table1") => return Err(Error::Config("layout = table1 conflicts with [counts]".into())),
            Some("custom") | None if !counts.is_empty() => SurveyLayout::Custom(counts),
            None => SurveyLayout::Table1,
            Some(other) => return Err(Error::Config(format!("[synth] layout: unknown {other:?}"))),
        };
        let spec = DgpSpec {
            start,
            periods: cfg.parse_or("synth", "periods", d.periods)?,
            horizon: cfg.parse_or("synth", "horizon", d.horizon)?,
            layout,
            beta,
            signals: cfg.parse_or("synth", "signals", d.signals)?,
            signal_magnitude: cfg.parse_or("synth", "signal_magnitude", d.signal_magnitude)?,
            noise_sd: cfg.parse_or("synth", "noise_sd", d.noise_sd)?,
            factor_strength: cfg.parse_or("synth", "factor_strength", d.factor_strength)?,
            survey_persistence: cfg.parse_or("synth", "survey_persistence", d.survey_persistence)?,
            core_persistence: cfg.parse_or("synth", "core_persistence", d.core_persistence)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_config(&KvConfig::load(path)?)
    }

    fn survey_blocks(&self) -> Vec<(SurveyCategory, CountryGroup, usize)> {
        match &self.layout {
            SurveyLayout::Custom(v) => v.clone(),
            SurveyLayout::Table1 => SurveyCategory::ALL
                .into_iter()
                .flat_map(|c| {
                    CountryGroup::ALL
                        .into_iter()
                        .map(move |g| (c, g, table1::new_series_count(c, g)))
                })
                .collect(),
        }
    }

    pub fn survey_series(&self) -> usize {
        self.survey_blocks().iter().map(|b| b.2).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.periods < self.horizon + 4 {
            return bad(format!(
                "periods = {} too short for horizon {} with two lags",
                self.periods, self.horizon
            ));
        }
        let columns = table1::LAGS * self.survey_series();
        if self.signals > columns {
            return bad(format!("{} signals but only {columns} survey columns", self.signals));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be finite and non-negative".into());
        }
        for (name, rho) in [
            ("survey_persistence", self.survey_persistence),
            ("core_persistence", self.core_persistence),
        ] {
            if rho.is_nan() || rho.abs() >= 1.0 {
                return bad(format!("{name} must lie in (-1, 1)"));
            }
        }
        if self.beta[1].abs() + self.beta[2].abs() >= 1.0 {
            return bad("target lag coefficients must sum (in absolute value) below 1".into());
        }
        if !self.factor_strength.is_finite() || !self.signal_magnitude.is_finite() {
            return bad("factor_strength and signal_magnitude must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueSignal {
    pub variable: String,
    pub lag: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub panel: PanelDataset,
    pub beta: [f64; 6],
    pub signals: Vec<TrueSignal>,
}

impl SyntheticPanel {
    pub fn target_id(&self) -> &'static str {
        TARGET_ID
    }
}

fn ar1(rng: &mut ChaCha20Rng, n: usize, rho: f64) -> Vec<f64> {
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = rng.sample::<f64, _>(StandardNormal);
    (0..n)
        .map(|_| {
            x = rho * x + innov * rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

/// Draw a panel from `spec`. Identical `(spec, seed)` pairs give identical
/// panels.
pub fn generate_synthetic(spec: &DgpSpec, seed: u64) -> Result<SyntheticPanel> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = spec.periods + BURN_IN;

    let mut survey_ids = Vec::new();
    let mut meta = BTreeMap::new();
    for (cat, group, count) in spec.survey_blocks() {
        for k in 0..count {
            let id = format!("{}_{}_{:03}", cat, group.as_str().to_ascii_lowercase(), k + 1);
            let name = format!("{cat} question {} ({group})", k + 1);
            if meta
                .insert(id.clone(), VariableMeta::survey(name, cat, group))
                .is_some()
            {
                return Err(Error::Config(format!("layout lists {cat}.{group} twice")));
            }
            survey_ids.push(id);
        }
    }
    survey_ids.sort();

    // Column layout mirrors the design matrix: per series, lag 0 then lag 1.
    let n_cols = table1::LAGS * survey_ids.len();
    let mut picked = index::sample(&mut rng, n_cols, spec.signals).into_vec();
    picked.sort_unstable();
    let signals: Vec<TrueSignal> = picked
        .into_iter()
        .map(|col| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            TrueSignal {
                variable: survey_ids[col / table1::LAGS].clone(),
                lag: col % table1::LAGS,
                coefficient: sign * spec.signal_magnitude,
            }
        })
        .collect();

    let factor = ar1(&mut rng, n, 0.7);
    let core: Vec<Vec<f64>> = CORE_IDS
        .iter()
        .map(|_| ar1(&mut rng, n, spec.core_persistence))
        .collect();
    let mut survey: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for id in &survey_ids {
        let loading: f64 = rng.sample(StandardNormal);
        let mut x = ar1(&mut rng, n, spec.survey_persistence);
        if spec.factor_strength != 0.0 {
            for (v, f) in x.iter_mut().zip(&factor) {
                *v += spec.factor_strength * loading * f;
            }
        }
        survey.insert(id.clone(), x);
    }

    let h = spec.horizon;
    let b = spec.beta;
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut target = vec![0.0; n];
    for s in 0..n {
        let base = b[0] + spec.noise_sd * noise[s];
        if s < h + 2 {
            target[s] = base;
            continue;
        }
        let t = s - h;
        let mut v = base + b[1] * target[t - 1] + b[2] * target[t - 2];
        for (j, c) in core.iter().enumerate() {
            v += b[3 + j] * c[t];
        }
        for sig in &signals {
            v += sig.coefficient * survey[&sig.variable][t - sig.lag];
        }
        target[s] = v;
    }

    let mut series = BTreeMap::new();
    series.insert(TARGET_ID.to_string(), target[BURN_IN..].to_vec());
    meta.insert(TARGET_ID.to_string(), VariableMeta::target("Synthetic inflation"));
    for (id, c) in CORE_IDS.iter().zip(core) {
        series.insert(id.to_string(), c[BURN_IN..].to_vec());
        meta.insert(id.to_string(), VariableMeta::core(*id));
    }
    for (id, x) in survey {
        series.insert(id, x[BURN_IN..].to_vec());
    }
    let panel = PanelDataset::new(spec.start, spec.periods, series, meta)?;
    Ok(SyntheticPanel {
        panel,
        beta: spec.beta,
        signals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{subset_survey, CategorySelector};
    use nalgebra::{DMatrix, DVector};

    fn small_spec() -> DgpSpec {
        DgpSpec {
            periods: 60,
            layout: SurveyLayout::Custom(vec![
                (SurveyCategory::Industry, CountryGroup::EA, 3),
                (SurveyCategory::Retail, CountryGroup::Big6, 2),
            ]),
            signals: 2,
            ..DgpSpec::default()
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = small_spec();
        let a = generate_synthetic(&spec, 1).unwrap();
        let b = generate_synthetic(&spec, 1).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&spec, 2).unwrap();
        assert_ne!(a.panel, c.panel);
    }

    #[test]
    fn table_layout_counts() {
        let spec = DgpSpec {
            periods: 12,
            signals: 0,
            ..DgpSpec::default()
        };
        let d = generate_synthetic(&spec, 3).unwrap().panel;
        let ids = subset_survey(&d, CategorySelector::Only(SurveyCategory::Industry), CountryGroup::Big9);
        assert_eq!(table1::CORE_PREDICTORS + 2 * ids.len(), 153);
    }

    #[test]
    fn inconsistent_specs_rejected() {
        let mut s = small_spec();
        s.signals = 11;
        assert!(generate_synthetic(&s, 0).is_err());
        let mut s = small_spec();
        s.periods = 4;
        assert!(s.validate().is_err());
        let cfg = KvConfig::parse("[synth]\nbeta = 1 2 3\n").unwrap();
        assert!(DgpSpec::from_config(&cfg).is_err());
        let cfg = KvConfig::parse("[synth]\nlayout = table1\n[counts]\nmain.EA = 1\n").unwrap();
        assert!(DgpSpec::from_config(&cfg).is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = KvConfig::parse(
            "[synth]\nstart = 2002-01\nperiods = 40\nhorizon = 3\nsignals = 1\nnoise_sd = 0.5\n[counts]\nindustry.Big9 = 4\n",
        )
        .unwrap();
        let spec = DgpSpec::from_config(&cfg).unwrap();
        assert_eq!(spec.horizon, 3);
        assert_eq!(
            spec.layout,
            SurveyLayout::Custom(vec![(SurveyCategory::Industry, CountryGroup::Big9, 4)])
        );
    }

    /// Without survey signals the target is a linear regression on the core
    /// block; least squares on the generated data recovers the coefficients.
    #[test]
    fn ols_recovers_core_coefficients() {
        let spec = DgpSpec {
            periods: 3000,
            horizon: 1,
            signals: 0,
            noise_sd: 0.5,
            layout: SurveyLayout::Custom(vec![(SurveyCategory::Main, CountryGroup::EA, 1)]),
            ..DgpSpec::default()
        };
        let syn = generate_synthetic(&spec, 11).unwrap();
        let d = &syn.panel;
        let pi = d.series(TARGET_ID).unwrap();
        let core: Vec<&[f64]> = CORE_IDS.iter().map(|id| d.series(id).unwrap()).collect();
        let h = spec.horizon;
        let rows: Vec<usize> = (2..d.len() - h).collect();
        let x = DMatrix::from_fn(rows.len(), 6, |r, c| {
            let t = rows[r];
            match c {
                0 => 1.0,
                1 => pi[t - 1],
                2 => pi[t - 2],
                _ => core[c - 3][t],
            }
        });
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&t| pi[t + h]));
        let coef = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * y));
        for (est, truth) in coef.iter().zip(spec.beta) {
            assert!((est - truth).abs() < 0.06, "{est} vs {truth}");
        }
    }
}
