//! Recursive out-of-sample experiments.
//!
//! At every origin the panel is cut at the origin, the design is rebuilt on
//! the expanding window and the model is re-estimated. Work units are
//! `(target, horizon, spec, origin)` tuples, each with its own random stream
//! derived from the plan seed, so results do not depend on how many threads
//! run them or in which order.

mod plan;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use plan::{grid_cells, ExperimentPlan, ModelSpec};

use crate::data_io::{subset_survey, PanelDataset, Role};
use crate::error::{Error, Result};
use crate::model::{build_design_with, gibbs_run, predict, PredictiveDistribution, RegressionDesign, TARGET_LAGS};
use crate::pca_baseline::pca_design;
use crate::period::{Period, PeriodRange};
use crate::scoring::{mixture_quantile, QuantileGrid, ScorePanel, ScoreRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Keep every mixture component for the components file.
    pub keep_components: bool,
}

/// Identifies one work unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UnitKey {
    pub target: String,
    pub spec: ModelSpec,
    pub horizon: usize,
    pub origin: Period,
}

impl UnitKey {
    /// Seed of this unit's random stream.
    pub fn seed(&self, plan_seed: u64) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(plan_seed.to_le_bytes());
        for part in [self.target.as_str(), &self.spec.to_string()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        h.update((self.horizon as u64).to_le_bytes());
        h.update(self.origin.to_string().as_bytes());
        h.finalize().into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOutcome {
    pub key: UnitKey,
    /// Dimensions of the design actually estimated.
    pub t: usize,
    pub m: usize,
    pub k: usize,
    /// The survey block was empty at this origin, so the benchmark was run.
    pub fallback: bool,
    pub mean: f64,
    pub variance: f64,
    /// Predictive quantiles at the grid levels.
    pub quantiles: Vec<f64>,
    pub realized: Option<f64>,
    pub score: Option<ScoreRecord>,
    pub distribution: Option<PredictiveDistribution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitFailure {
    pub key: UnitKey,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub grid: QuantileGrid,
    /// Ordered by target, horizon, spec (plan order) and origin.
    pub outcomes: Vec<ForecastOutcome>,
    pub failures: Vec<UnitFailure>,
}

/// Dimensions of one design, as reported by [`validate_plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignDims {
    pub target: String,
    pub spec: ModelSpec,
    pub horizon: usize,
    pub origin: Period,
    pub t: usize,
    pub m: usize,
    pub k: usize,
    pub fallback: bool,
}

fn units(plan: &ExperimentPlan) -> Vec<UnitKey> {
    let origins = plan.origins();
    let mut out = Vec::new();
    for target in &plan.targets {
        for &horizon in &plan.horizons {
            for &spec in &plan.specs {
                for &origin in &origins {
                    out.push(UnitKey {
                        target: target.clone(),
                        spec,
                        horizon,
                        origin,
                    });
                }
            }
        }
    }
    out
}

/// Months of data the window needs before the first usable origin.
fn months_needed(horizon: usize, plan: &ExperimentPlan) -> usize {
    let max_lag = TARGET_LAGS
        .iter()
        .chain(&plan.design.survey_lags.lags())
        .copied()
        .max()
        .unwrap_or(0);
    max_lag + horizon + 3
}

/// Design for `key` on data that ends at the origin. Specs whose survey
/// block is empty fall back to the benchmark design.
fn design_for(plan: &ExperimentPlan, data: &PanelDataset, key: &UnitKey) -> Result<(RegressionDesign, bool)> {
    let window = PeriodRange::new(plan.initial_window.start, key.origin);
    let ids = match key.spec.cell() {
        None => Vec::new(),
        Some((cat, group)) => subset_survey(data, cat, group),
    };
    let design = build_design_with(data, &key.target, &ids, key.horizon, window, plan.design)?;
    if key.spec == ModelSpec::Benchmark {
        return Ok((design, false));
    }
    if design.k() == 0 {
        log::warn!(
            "{} {} h{} at {}: no usable survey columns, running the benchmark instead",
            key.target,
            key.spec,
            key.horizon,
            key.origin
        );
        return Ok((design.benchmark(), true));
    }
    match key.spec {
        ModelSpec::Pca { factors, .. } => {
            let cap = factors.min(design.t()).min(design.k());
            if cap < factors {
                log::warn!(
                    "{} {} at {}: only {cap} factors available",
                    key.target,
                    key.spec,
                    key.origin
                );
            }
            Ok((pca_design(&design, cap)?, false))
        }
        _ => Ok((design, false)),
    }
}

fn run_unit(
    plan: &ExperimentPlan,
    data: &PanelDataset,
    key: &UnitKey,
    grid: &QuantileGrid,
    opts: RunOptions,
) -> Result<ForecastOutcome> {
    // Nothing dated after the origin is visible while estimating.
    let visible = data.truncated(key.origin);
    let (design, fallback) = design_for(plan, &visible, key)?;
    let mut rng = ChaCha20Rng::from_seed(key.seed(plan.seed));
    let draws = gibbs_run(&design, &plan.prior, &plan.mcmc, &mut rng)?;
    let (x, z) = design.forecast_row(&visible, key.origin)?;
    let mixture = predict(&draws, &x, &z, &design.y_stats)?;

    let realized = data
        .index_of(key.origin.offset(key.horizon as i32))
        .and_then(|i| data.series(&key.target).map(|s| s[i]))
        .filter(|v| !v.is_nan());
    let dist = PredictiveDistribution {
        origin: key.origin,
        horizon: key.horizon,
        target: key.target.clone(),
        mixture,
        realized,
    };
    let quantiles = grid
        .alphas()
        .into_iter()
        .map(|a| mixture_quantile(&dist.mixture, a))
        .collect::<Result<Vec<_>>>()?;
    let score = match realized {
        Some(_) => Some(ScoreRecord::from_quantiles(
            &key.spec.to_string(),
            &dist,
            grid,
            &quantiles,
        )?),
        None => None,
    };
    Ok(ForecastOutcome {
        key: key.clone(),
        t: design.t(),
        m: design.m(),
        k: design.k(),
        fallback,
        mean: dist.mixture.mean(),
        variance: dist.mixture.variance(),
        quantiles,
        realized,
        score,
        distribution: opts.keep_components.then_some(dist),
    })
}

fn check_targets(plan: &ExperimentPlan, data: &PanelDataset) -> Result<()> {
    for t in &plan.targets {
        match data.meta(t) {
            None => return Err(Error::UnknownVariable(t.clone())),
            Some(m) if m.role != Role::Target => {
                return Err(Error::Config(format!("{t} has role {}, not target", m.role)))
            }
            Some(_) => {}
        }
    }
    if data.index_of(plan.initial_window.start).is_none() || data.index_of(plan.holdout_end).is_none() {
        return Err(Error::InsufficientWindow(format!(
            "plan spans {}..{} but data covers {}",
            plan.initial_window.start,
            plan.holdout_end,
            data.range()
        )));
    }
    Ok(())
}

/// Run every `(target, horizon, spec, origin)` unit on at most `threads`
/// worker threads. Units that fail are logged and reported in
/// [`ExperimentResults::failures`]; only plan-level problems abort.
pub fn run_experiment(
    plan: &ExperimentPlan,
    data: &PanelDataset,
    threads: usize,
    opts: RunOptions,
) -> Result<ExperimentResults> {
    plan.validate()?;
    check_targets(plan, data)?;
    let grid = QuantileGrid::default();
    let work = units(plan);
    log::info!(
        "running {} units ({} origins) on {} thread(s)",
        work.len(),
        plan.origins().len(),
        threads.max(1)
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let results: Vec<Result<ForecastOutcome>> = pool.install(|| {
        work.par_iter()
            .map(|key| run_unit(plan, data, key, &grid, opts))
            .collect()
    });

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (key, res) in work.into_iter().zip(results) {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("{} {} h{} at {}: {e}", key.target, key.spec, key.horizon, key.origin);
                failures.push(UnitFailure {
                    key,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(ExperimentResults {
        grid,
        outcomes,
        failures,
    })
}

/// Dry run: build every design at the first and last origin and report its
/// dimensions. A window too short for some horizon is reported together
/// with the earliest origin that would work.
pub fn validate_plan(plan: &ExperimentPlan, data: &PanelDataset) -> Result<Vec<DesignDims>> {
    plan.validate()?;
    check_targets(plan, data)?;
    let origins = plan.origins();
    let ends = [origins[0], *origins.last().unwrap()];
    let mut out = Vec::new();
    for target in &plan.targets {
        for &horizon in &plan.horizons {
            for &spec in &plan.specs {
                for origin in ends {
                    let key = UnitKey {
                        target: target.clone(),
                        spec,
                        horizon,
                        origin,
                    };
                    let visible = data.truncated(origin);
                    let (design, fallback) = design_for(plan, &visible, &key).map_err(|e| match e {
                        Error::InsufficientWindow(msg) => {
                            let earliest = plan
                                .initial_window
                                .start
                                .offset(months_needed(horizon, plan) as i32 - 1);
                            Error::InsufficientWindow(format!("{msg}; earliest feasible origin is {earliest}"))
                        }
                        other => other,
                    })?;
                    out.push(DesignDims {
                        target: target.clone(),
                        spec,
                        horizon,
                        origin,
                        t: design.t(),
                        m: design.m(),
                        k: design.k(),
                        fallback,
                    });
                    if ends[0] == ends[1] {
                        break;
                    }
                }
            }
        }
    }
    Ok(out)
}

impl ExperimentResults {
    pub fn scores(&self) -> ScorePanel {
        let mut panel = ScorePanel::new(self.grid);
        for rec in self.outcomes.iter().filter_map(|o| o.score.clone()) {
            panel.insert(rec);
        }
        panel
    }

    pub fn get(&self, target: &str, spec: ModelSpec, horizon: usize, origin: Period) -> Option<&ForecastOutcome> {
        self.outcomes.iter().find(|o| {
            o.key.target == target && o.key.spec == spec && o.key.horizon == horizon && o.key.origin == origin
        })
    }

    /// Predictive summaries, one row per unit.
    pub fn write_forecasts_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header: Vec<String> = [
            "target", "spec", "horizon", "origin", "t", "m", "k", "fallback", "mean", "variance", "realized",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        header.extend(self.grid.alphas().iter().map(|a| format!("q_{a:.2}")));
        writeln!(w, "{}", header.join(","))?;
        for o in &self.outcomes {
            let realized = o.realized.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
            write!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                o.key.target,
                o.key.spec,
                o.key.horizon,
                o.key.origin,
                o.t,
                o.m,
                o.k,
                o.fallback as u8,
                o.mean,
                o.variance,
                realized
            )?;
            for q in &o.quantiles {
                write!(w, ",{q}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Every mixture component of every retained forecast. Large.
    pub fn write_components_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "target,spec,horizon,origin,draw,mean,variance")?;
        for o in &self.outcomes {
            if let Some(d) = &o.distribution {
                for (i, (m, v)) in d.mixture.means.iter().zip(&d.mixture.vars).enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{i},{m},{v}",
                        o.key.target, o.key.spec, o.key.horizon, o.key.origin
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn write_failures_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "target,spec,horizon,origin,message")?;
        for f in &self.failures {
            let msg = f.message.replace('"', "'");
            writeln!(
                w,
                "{},{},{},{},\"{msg}\"",
                f.key.target, f.key.spec, f.key.horizon, f.key.origin
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::KvConfig;
    use crate::data_io::{generate_synthetic, CountryGroup, DgpSpec, SurveyCategory, SurveyLayout};

    fn small_panel() -> PanelDataset {
        let spec = DgpSpec {
            periods: 48,
            layout: SurveyLayout::Custom(vec![
                (SurveyCategory::Industry, CountryGroup::EA, 4),
                (SurveyCategory::Retail, CountryGroup::Big6, 3),
            ]),
            signals: 2,
            ..DgpSpec::default()
        };
        generate_synthetic(&spec, 1).unwrap().panel
    }

    fn small_plan(extra: &str) -> ExperimentPlan {
        let text = format!(
            "[plan]\ntargets = pi\ninitial_start = 2002-01\ninitial_end = 2004-06\nholdout_end = 2005-12\nseed = 3\n{extra}\n[mcmc]\nburn = 20\nretain = 30\n"
        );
        ExperimentPlan::from_config(&KvConfig::parse(&text).unwrap()).unwrap()
    }

    #[test]
    fn seeds_differ_by_unit() {
        let key = UnitKey {
            target: "pi".into(),
            spec: ModelSpec::Benchmark,
            horizon: 1,
            origin: Period::new(2010, 1).unwrap(),
        };
        let other = UnitKey {
            horizon: 3,
            ..key.clone()
        };
        assert_eq!(key.seed(1), key.seed(1));
        assert_ne!(key.seed(1), key.seed(2));
        assert_ne!(key.seed(1), other.seed(1));
    }

    #[test]
    fn benchmark_only_has_no_survey_block() {
        let plan = small_plan("horizons = 1");
        let res = run_experiment(&plan, &small_panel(), 1, RunOptions::default()).unwrap();
        assert!(res.failures.is_empty());
        assert_eq!(res.outcomes.len(), plan.origins().len());
        assert!(res.outcomes.iter().all(|o| o.k == 0 && !o.fallback));
        for o in &res.outcomes {
            assert_eq!(o.realized.is_some(), o.score.is_some());
            assert!(o.variance > 0.0);
        }
    }

    #[test]
    fn empty_subset_falls_back() {
        let plan = small_plan("horizons = 1\nspec = svd services EA");
        let res = run_experiment(&plan, &small_panel(), 1, RunOptions::default()).unwrap();
        let svd: Vec<_> = res
            .outcomes
            .iter()
            .filter(|o| o.key.spec != ModelSpec::Benchmark)
            .collect();
        assert!(!svd.is_empty());
        assert!(svd.iter().all(|o| o.fallback && o.k == 0));
    }

    #[test]
    fn same_x_block_for_benchmark_and_survey_specs() {
        let plan = small_plan("horizons = 1\nspec = svd all All");
        let data = small_panel();
        let origin = plan.origins()[0];
        let key = |spec| UnitKey {
            target: "pi".into(),
            spec,
            horizon: 1,
            origin,
        };
        let (b, _) = design_for(&plan, &data.truncated(origin), &key(ModelSpec::Benchmark)).unwrap();
        let (s, _) = design_for(&plan, &data.truncated(origin), &key(plan.specs[1])).unwrap();
        assert_eq!(b.x, s.x);
        assert_eq!(s.k(), 14);
    }

    #[test]
    fn validation_reports_earliest_origin() {
        let text = "[plan]\ntargets = pi\nhorizons = 3\ninitial_start = 2002-01\ninitial_end = 2002-06\nholdout_end = 2003-12\n";
        let plan = ExperimentPlan::from_config(&KvConfig::parse(text).unwrap()).unwrap();
        let err = validate_plan(&plan, &small_panel()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("earliest feasible origin is 2002-08"), "{msg}");
        assert!(err.is_input_error());

        let ok = small_plan("horizons = 1, 3\nspec = svd industry EA");
        let dims = validate_plan(&ok, &small_panel()).unwrap();
        assert_eq!(dims.len(), 2 * 2 * 2);
        assert!(dims.iter().any(|d| d.k == 8));
    }

    #[test]
    fn unknown_target_is_named() {
        let mut plan = small_plan("");
        plan.targets = vec!["cpi".into()];
        let err = validate_plan(&plan, &small_panel()).unwrap_err();
        assert!(err.to_string().contains("cpi"));
    }
}
