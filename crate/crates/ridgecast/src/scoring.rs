//! Forecast evaluation: squared error, log predictive likelihood, quantile
//! scores and quantile-weighted CRPS, plus aggregation into relative gains.
//!
//! Predictive quantiles of the Gaussian mixture are found by bisection on
//! its CDF, so every score is deterministic.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::{GaussianMixture, PredictiveDistribution};
use crate::period::Period;

/// Probability tolerance of the mixture quantile search.
pub const QUANTILE_TOLERANCE: f64 = 1e-10;

/// Quantile levels `j / J` for `j = 1..J-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantileGrid {
    j: usize,
}

impl Default for QuantileGrid {
    fn default() -> Self {
        QuantileGrid { j: 20 }
    }
}

impl QuantileGrid {
    pub fn new(j: usize) -> Result<Self> {
        if j < 2 {
            return Err(Error::InvalidParameter(format!("quantile grid needs J >= 2, got {j}")));
        }
        Ok(QuantileGrid { j })
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn len(&self) -> usize {
        self.j - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn alpha(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.j as f64
    }

    pub fn alphas(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.alpha(i)).collect()
    }

    /// Index of `alpha` on the grid, if it is a grid point.
    pub fn position(&self, alpha: f64) -> Option<usize> {
        (0..self.len()).find(|&i| (self.alpha(i) - alpha).abs() < 1e-12)
    }
}

/// Weighting of quantile scores in the CRPS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CrpsWeight {
    Left,
    Right,
    Tails,
}

impl CrpsWeight {
    pub const ALL: [CrpsWeight; 3] = [CrpsWeight::Left, CrpsWeight::Right, CrpsWeight::Tails];

    pub fn weight(self, alpha: f64) -> f64 {
        match self {
            CrpsWeight::Left => (1.0 - alpha).powi(2),
            CrpsWeight::Right => alpha.powi(2),
            CrpsWeight::Tails => (2.0 * alpha - 1.0).powi(2),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CrpsWeight::Left => "left",
            CrpsWeight::Right => "right",
            CrpsWeight::Tails => "tails",
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn realized(dist: &PredictiveDistribution) -> Result<f64> {
    dist.realized
        .ok_or_else(|| Error::MissingRealized(format!("{} h{} issued at {}", dist.target, dist.horizon, dist.origin)))
}

pub fn mixture_cdf(mix: &GaussianMixture, x: f64) -> f64 {
    let n = mix.len() as f64;
    mix.means
        .iter()
        .zip(&mix.vars)
        .map(|(m, v)| std_normal_cdf((x - m) / v.sqrt()))
        .sum::<f64>()
        / n
}

/// Quantile of the mixture at level `alpha` by bisection on the CDF.
pub fn mixture_quantile(mix: &GaussianMixture, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile level {alpha} outside (0, 1)"
        )));
    }
    let sd_max = mix.vars.iter().fold(0.0f64, |a, v| a.max(v.sqrt()));
    let lo_mean = mix.means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_mean = mix.means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Beyond 40 standard deviations every component CDF is 0 or 1 in f64.
    let (mut lo, mut hi) = (lo_mean - 40.0 * sd_max, hi_mean + 40.0 * sd_max);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..2000 {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let c = mixture_cdf(mix, mid);
        if (c - alpha).abs() < QUANTILE_TOLERANCE {
            break;
        }
        if c < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// `2 (1{y <= q} - alpha) (q - y)` for a quantile `q` and outcome `y`.
pub fn quantile_loss(q: f64, y: f64, alpha: f64) -> f64 {
    let hit = if y <= q { 1.0 } else { 0.0 };
    2.0 * (hit - alpha) * (q - y)
}

/// Squared error of the mixture mean.
pub fn point_error(dist: &PredictiveDistribution) -> Result<f64> {
    let y = realized(dist)?;
    Ok((dist.mixture.mean() - y).powi(2))
}

/// Log of the equally weighted mixture density at `y`, via log-sum-exp.
pub fn mixture_log_density(mix: &GaussianMixture, y: f64) -> f64 {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let logs: Vec<f64> = mix
        .means
        .iter()
        .zip(&mix.vars)
        .map(|(m, v)| -0.5 * (ln_2pi + v.ln()) - (y - m).powi(2) / (2.0 * v))
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    let sum: f64 = logs.iter().map(|l| (l - top).exp()).sum();
    top + sum.ln() - (logs.len() as f64).ln()
}

pub fn log_pred_likelihood(dist: &PredictiveDistribution) -> Result<f64> {
    let y = realized(dist)?;
    Ok(mixture_log_density(&dist.mixture, y))
}

pub fn quantile_score(dist: &PredictiveDistribution, alpha: f64) -> Result<f64> {
    let q = mixture_quantile(&dist.mixture, alpha)?;
    let y = realized(dist)?;
    Ok(quantile_loss(q, y, alpha))
}

/// Quantile scores at every grid level.
pub fn quantile_scores(dist: &PredictiveDistribution, grid: &QuantileGrid) -> Result<Vec<f64>> {
    let y = realized(dist)?;
    grid.alphas()
        .into_iter()
        .map(|a| Ok(quantile_loss(mixture_quantile(&dist.mixture, a)?, y, a)))
        .collect()
}

/// `(1 / (J - 1)) * sum_j w(alpha_j) * qs_j` for precomputed grid scores.
pub fn crps_from_scores(qs: &[f64], weight: CrpsWeight, grid: &QuantileGrid) -> Result<f64> {
    if qs.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} quantile scores for a grid of {}",
            qs.len(),
            grid.len()
        )));
    }
    let total: f64 = qs
        .iter()
        .enumerate()
        .map(|(i, s)| s * weight.weight(grid.alpha(i)))
        .sum();
    Ok(total / grid.len() as f64)
}

pub fn weighted_crps(dist: &PredictiveDistribution, weight: CrpsWeight, grid: &QuantileGrid) -> Result<f64> {
    crps_from_scores(&quantile_scores(dist, grid)?, weight, grid)
}

/// `-(model / bench - 1)` in percent; positive means the model has the
/// smaller loss.
pub fn relative_gain(model: f64, bench: f64) -> Result<f64> {
    if bench == 0.0 || !bench.is_finite() || !model.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "relative gain needs a finite non-zero benchmark loss (model {model}, benchmark {bench})"
        )));
    }
    Ok(-(model / bench - 1.0) * 100.0)
}

/// Summed LPL difference `model - bench` and its exponential, the ratio of
/// the joint predictive likelihoods.
pub fn lpl_relative(model_sum: f64, bench_sum: f64) -> (f64, f64) {
    let diff = model_sum - bench_sum;
    (diff, diff.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Mse,
    Lpl,
    Crps(CrpsWeight),
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Mse,
        Metric::Lpl,
        Metric::Crps(CrpsWeight::Left),
        Metric::Crps(CrpsWeight::Right),
        Metric::Crps(CrpsWeight::Tails),
    ];

    /// Losses are better when small; LPL is better when large.
    pub fn is_loss(self) -> bool {
        self != Metric::Lpl
    }

    fn value(self, r: &ScoreRecord) -> f64 {
        match self {
            Metric::Mse => r.se,
            Metric::Lpl => r.lpl,
            Metric::Crps(CrpsWeight::Left) => r.crps_left,
            Metric::Crps(CrpsWeight::Right) => r.crps_right,
            Metric::Crps(CrpsWeight::Tails) => r.crps_tails,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Mse => f.write_str("mse"),
            Metric::Lpl => f.write_str("lpl"),
            Metric::Crps(w) => write!(f, "crps_{}", w.as_str()),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub target: String,
    pub spec: String,
    pub origin: Period,
    pub horizon: usize,
    pub se: f64,
    pub lpl: f64,
    pub qs: Vec<f64>,
    pub crps_left: f64,
    pub crps_right: f64,
    pub crps_tails: f64,
}

impl ScoreRecord {
    pub fn from_distribution(spec: &str, dist: &PredictiveDistribution, grid: &QuantileGrid) -> Result<Self> {
        let quantiles = grid
            .alphas()
            .into_iter()
            .map(|a| mixture_quantile(&dist.mixture, a))
            .collect::<Result<Vec<_>>>()?;
        Self::from_quantiles(spec, dist, grid, &quantiles)
    }

    /// Same as [`ScoreRecord::from_distribution`] with the grid quantiles
    /// already computed.
    pub fn from_quantiles(
        spec: &str,
        dist: &PredictiveDistribution,
        grid: &QuantileGrid,
        quantiles: &[f64],
    ) -> Result<Self> {
        if quantiles.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} quantiles for a grid of {}",
                quantiles.len(),
                grid.len()
            )));
        }
        let y = realized(dist)?;
        let qs: Vec<f64> = quantiles
            .iter()
            .enumerate()
            .map(|(i, q)| quantile_loss(*q, y, grid.alpha(i)))
            .collect();
        Ok(ScoreRecord {
            target: dist.target.clone(),
            spec: spec.to_string(),
            origin: dist.origin,
            horizon: dist.horizon,
            se: point_error(dist)?,
            lpl: log_pred_likelihood(dist)?,
            crps_left: crps_from_scores(&qs, CrpsWeight::Left, grid)?,
            crps_right: crps_from_scores(&qs, CrpsWeight::Right, grid)?,
            crps_tails: crps_from_scores(&qs, CrpsWeight::Tails, grid)?,
            qs,
        })
    }
}

/// Scores keyed by `(target, spec, horizon, origin)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScorePanel {
    pub grid: QuantileGrid,
    records: BTreeMap<(String, String, usize, Period), ScoreRecord>,
}

impl ScorePanel {
    pub fn new(grid: QuantileGrid) -> Self {
        ScorePanel {
            grid,
            records: BTreeMap::new(),
        }
    }

    /// Score a realized forecast and store it, replacing any earlier record
    /// with the same key.
    pub fn add(&mut self, spec: &str, dist: &PredictiveDistribution) -> Result<()> {
        let rec = ScoreRecord::from_distribution(spec, dist, &self.grid)?;
        self.insert(rec);
        Ok(())
    }

    pub fn insert(&mut self, rec: ScoreRecord) {
        let key = (rec.target.clone(), rec.spec.clone(), rec.horizon, rec.origin);
        self.records.insert(key, rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ScoreRecord> {
        self.records.values()
    }

    /// Records of one series in chronological order.
    pub fn series(&self, target: &str, spec: &str, horizon: usize) -> Vec<&ScoreRecord> {
        self.records
            .values()
            .filter(|r| r.target == target && r.spec == spec && r.horizon == horizon)
            .collect()
    }

    /// Records of `spec` and `bench` at the origins both of them scored.
    pub fn paired(&self, target: &str, spec: &str, bench: &str, horizon: usize) -> Vec<(&ScoreRecord, &ScoreRecord)> {
        self.series(target, spec, horizon)
            .into_iter()
            .filter_map(|r| {
                let key = (target.to_string(), bench.to_string(), horizon, r.origin);
                self.records.get(&key).map(|b| (r, b))
            })
            .collect()
    }

    /// Aggregate over the origins both series share: the mean for losses,
    /// the sum for LPL. Returns `(model, bench)`.
    pub fn aggregate_pair(
        &self,
        target: &str,
        spec: &str,
        bench: &str,
        horizon: usize,
        metric: Metric,
    ) -> Result<(f64, f64)> {
        let pairs = self.paired(target, spec, bench, horizon);
        if pairs.is_empty() {
            return Err(Error::MissingRecords(format!(
                "no common origins for {target} {spec} vs {bench} at h{horizon}"
            )));
        }
        let model: f64 = pairs.iter().map(|(m, _)| metric.value(m)).sum();
        let base: f64 = pairs.iter().map(|(_, b)| metric.value(b)).sum();
        if metric.is_loss() {
            let n = pairs.len() as f64;
            Ok((model / n, base / n))
        } else {
            Ok((model, base))
        }
    }

    /// Relative gain in percent for losses, summed LPL difference for LPL.
    pub fn gain(&self, target: &str, spec: &str, bench: &str, horizon: usize, metric: Metric) -> Result<f64> {
        let (m, b) = self.aggregate_pair(target, spec, bench, horizon, metric)?;
        if metric.is_loss() {
            relative_gain(m, b)
        } else {
            Ok(lpl_relative(m, b).0)
        }
    }

    /// Tidy CSV: one row per key, one column per metric.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec![
            "target",
            "spec",
            "horizon",
            "origin",
            "se",
            "lpl",
            "crps_left",
            "crps_right",
            "crps_tails",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        header.extend(self.grid.alphas().iter().map(|a| format!("qs_{a:.2}")));
        writeln!(w, "{}", header.join(","))?;
        for r in self.records.values() {
            write!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.target, r.spec, r.horizon, r.origin, r.se, r.lpl, r.crps_left, r.crps_right, r.crps_tails
            )?;
            for q in &r.qs {
                write!(w, ",{q}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulativePoint {
    pub origin: Period,
    pub cumulative: f64,
    /// Running sum minus the benchmark's running sum.
    pub relative: f64,
}

/// Running sum of LPL over the origins shared with `bench`, in
/// chronological order.
pub fn cumulative_lpl(
    scores: &ScorePanel,
    target: &str,
    spec: &str,
    bench: &str,
    horizon: usize,
) -> Result<Vec<CumulativePoint>> {
    let pairs = scores.paired(target, spec, bench, horizon);
    if pairs.is_empty() {
        return Err(Error::MissingRecords(format!(
            "no LPL records for {target} {spec} at h{horizon}"
        )));
    }
    let (mut cum, mut cum_b) = (0.0, 0.0);
    Ok(pairs
        .into_iter()
        .map(|(m, b)| {
            cum += m.lpl;
            cum_b += b.lpl;
            CumulativePoint {
                origin: m.origin,
                cumulative: cum,
                relative: cum - cum_b,
            }
        })
        .collect())
}
