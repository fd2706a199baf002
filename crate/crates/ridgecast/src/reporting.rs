//! Presentation tables built from a [`ScorePanel`]: relative-gain matrices
//! over survey category and country group, cumulative LPL series and
//! cumulative quantile-score differences. Everything is written as CSV or
//! plain text; plotting is left to other tools.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data_io::{CategorySelector, CountryGroup};
use crate::error::{Error, Result};
use crate::harness::{ExperimentPlan, ModelSpec};
use crate::period::Period;
use crate::scoring::{cumulative_lpl, lpl_relative, Metric, QuantileGrid, ScorePanel};

pub const BENCHMARK: &str = "benchmark";

#[derive(Debug, Clone, PartialEq)]
pub struct GainCell {
    pub spec: ModelSpec,
    /// Percent gain for losses; summed LPL difference for LPL.
    pub gain: f64,
    /// `exp` of the summed LPL difference, LPL only.
    pub lpl_ratio: Option<f64>,
    pub row_best: bool,
    pub overall_best: bool,
    /// Another cell in the row has exactly the row-best gain.
    pub row_tie: bool,
    /// Another cell in the matrix has exactly the overall-best gain.
    pub overall_tie: bool,
}

/// Gains of one model family over the category x group grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    pub target: String,
    pub horizon: usize,
    pub metric: Metric,
    pub family: String,
    pub rows: Vec<CategorySelector>,
    pub cols: Vec<CountryGroup>,
    pub cells: Vec<Vec<Option<GainCell>>>,
}

impl GainMatrix {
    pub fn cell(&self, category: CategorySelector, group: CountryGroup) -> Option<&GainCell> {
        let r = self.rows.iter().position(|c| *c == category)?;
        let c = self.cols.iter().position(|g| *g == group)?;
        self.cells[r][c].as_ref()
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} h{} ({}), gain vs benchmark{}",
            self.target,
            self.metric,
            self.horizon,
            self.family,
            if self.metric == Metric::Lpl {
                " as summed LPL difference"
            } else {
                " in percent"
            }
        );
        let _ = writeln!(s, "markers: * row best, ** overall best, = tied");
        let _ = write!(s, "{:<10}", "");
        for g in &self.cols {
            let _ = write!(s, "{:>14}", g.as_str());
        }
        s.push('\n');
        for (r, cat) in self.rows.iter().enumerate() {
            let _ = write!(s, "{:<10}", cat.to_string());
            for cell in &self.cells[r] {
                let text = match cell {
                    None => "-".to_string(),
                    Some(c) => {
                        let mark = if c.overall_best {
                            "**"
                        } else if c.row_best {
                            "*"
                        } else {
                            ""
                        };
                        let tie = if (c.row_best && c.row_tie) || (c.overall_best && c.overall_tie) {
                            "="
                        } else {
                            ""
                        };
                        format!("{:.2}{mark}{tie}", c.gain)
                    }
                };
                let _ = write!(s, "{text:>14}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (r, cat) in self.rows.iter().enumerate() {
            for (c, group) in self.cols.iter().enumerate() {
                if let Some(cell) = &self.cells[r][c] {
                    writeln!(
                        w,
                        "{},{cat},{},{},{},{},{},{},{},{}",
                        self.family,
                        group.as_str(),
                        cell.spec,
                        cell.gain,
                        cell.lpl_ratio.map(|v| v.to_string()).unwrap_or_else(|| "NA".into()),
                        cell.row_best as u8,
                        cell.overall_best as u8,
                        cell.row_tie as u8,
                        cell.overall_tie as u8
                    )?;
                }
            }
        }
        Ok(())
    }
}

pub const GAIN_CSV_HEADER: &str = "family,category,group,spec,gain,lpl_ratio,row_best,overall_best,row_tie,overall_tie";

/// Gains for every spec of `family` in `specs` (plan order). Among equal
/// gains the spec listed first in `specs` carries the marker and the tie is
/// flagged.
pub fn gain_matrix(
    scores: &ScorePanel,
    metric: Metric,
    target: &str,
    horizon: usize,
    family: &str,
    specs: &[ModelSpec],
) -> Result<GainMatrix> {
    if scores.series(target, BENCHMARK, horizon).is_empty() {
        return Err(Error::MissingRecords(format!(
            "no benchmark scores for {target} h{horizon}"
        )));
    }
    let rows: Vec<CategorySelector> = CategorySelector::table_order().collect();
    let cols = CountryGroup::ALL.to_vec();
    let mut cells: Vec<Vec<Option<GainCell>>> = vec![vec![None; cols.len()]; rows.len()];
    // (config rank, row, col) of each filled cell
    let mut filled = Vec::new();
    for (rank, spec) in specs.iter().enumerate() {
        let Some((cat, group)) = spec.cell() else { continue };
        if spec.family() != family {
            continue;
        }
        let label = spec.to_string();
        let pairs = scores.paired(target, &label, BENCHMARK, horizon);
        if pairs.is_empty() {
            log::warn!("no scored origins for {target} {label} h{horizon}");
            continue;
        }
        let gain = scores.gain(target, &label, BENCHMARK, horizon, metric)?;
        let lpl_ratio = (metric == Metric::Lpl).then(|| {
            let (m, b) = scores
                .aggregate_pair(target, &label, BENCHMARK, horizon, metric)
                .expect("pairs checked above");
            lpl_relative(m, b).1
        });
        let r = rows.iter().position(|c| *c == cat).unwrap();
        let c = cols.iter().position(|g| *g == group).unwrap();
        if cells[r][c].is_none() {
            cells[r][c] = Some(GainCell {
                spec: *spec,
                gain,
                lpl_ratio,
                row_best: false,
                overall_best: false,
                row_tie: false,
                overall_tie: false,
            });
            filled.push((rank, r, c));
        }
    }
    filled.sort();

    let pick = |members: &[(usize, usize, usize)], cells: &[Vec<Option<GainCell>>]| -> Option<((usize, usize), bool)> {
        let gain = |&(_, r, c): &(usize, usize, usize)| cells[r][c].as_ref().unwrap().gain;
        let best = members.iter().map(gain).fold(f64::NEG_INFINITY, f64::max);
        let mut at_best = members.iter().filter(|m| gain(m) == best);
        let first = at_best.next()?;
        Some(((first.1, first.2), at_best.next().is_some()))
    };
    for r in 0..rows.len() {
        let members: Vec<_> = filled.iter().copied().filter(|m| m.1 == r).collect();
        if let Some(((br, bc), tie)) = pick(&members, &cells) {
            let cell = cells[br][bc].as_mut().unwrap();
            cell.row_best = true;
            cell.row_tie = tie;
        }
    }
    if let Some(((br, bc), tie)) = pick(&filled, &cells) {
        let cell = cells[br][bc].as_mut().unwrap();
        cell.overall_best = true;
        cell.overall_tie = tie;
    }
    Ok(GainMatrix {
        target: target.to_string(),
        horizon,
        metric,
        family: family.to_string(),
        rows,
        cols,
        cells,
    })
}

/// Cumulative QS of `spec` minus that of the benchmark, one row per grid
/// level and one column per origin.
#[derive(Debug, Clone, PartialEq)]
pub struct QsHeat {
    pub alphas: Vec<f64>,
    pub origins: Vec<Period>,
    pub values: Vec<Vec<f64>>,
}

impl QsHeat {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "alpha")?;
        for o in &self.origins {
            write!(w, ",{o}")?;
        }
        writeln!(w)?;
        for (a, row) in self.alphas.iter().zip(&self.values) {
            write!(w, "{a:.2}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn qs_over_time(
    scores: &ScorePanel,
    target: &str,
    spec: &str,
    horizon: usize,
    grid: &QuantileGrid,
) -> Result<QsHeat> {
    let pairs = scores.paired(target, spec, BENCHMARK, horizon);
    if pairs.is_empty() {
        return Err(Error::MissingRecords(format!(
            "no paired QS records for {target} {spec} h{horizon}"
        )));
    }
    let alphas = grid.alphas();
    let mut values = vec![Vec::with_capacity(pairs.len()); alphas.len()];
    let mut running = vec![0.0; alphas.len()];
    for (m, b) in &pairs {
        for (j, row) in values.iter_mut().enumerate() {
            running[j] += m.qs[j] - b.qs[j];
            row.push(running[j]);
        }
    }
    Ok(QsHeat {
        alphas,
        origins: pairs.iter().map(|(m, _)| m.origin).collect(),
        values,
    })
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    let path = dir.join(name);
    body(&mut buf).map_err(|e| Error::io(&path, e))?;
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    Ok(name.to_string())
}

/// Write gain matrices, cumulative LPL and QS heat files for every target
/// and horizon of `plan`. Returns the file names, relative to `dir`.
pub fn write_reports(scores: &ScorePanel, plan: &ExperimentPlan, dir: &Path) -> Result<Vec<String>> {
    let mut families: Vec<String> = Vec::new();
    for s in &plan.specs {
        if s.cell().is_some() && !families.contains(&s.family()) {
            families.push(s.family());
        }
    }
    let mut written = Vec::new();
    for target in &plan.targets {
        for &h in &plan.horizons {
            if scores.series(target, BENCHMARK, h).is_empty() {
                log::warn!("no benchmark scores for {target} h{h}; skipping reports");
                continue;
            }
            for metric in Metric::ALL {
                let mats = families
                    .iter()
                    .map(|f| gain_matrix(scores, metric, target, h, f, &plan.specs))
                    .collect::<Result<Vec<_>>>()?;
                let stem = format!("gains_{target}_{metric}_h{h}");
                written.push(write_file(dir, &format!("{stem}.csv"), |w| {
                    writeln!(w, "{GAIN_CSV_HEADER}")?;
                    mats.iter().try_for_each(|m| m.write_csv(&mut *w))
                })?);
                written.push(write_file(dir, &format!("{stem}.txt"), |w| {
                    if mats.is_empty() {
                        writeln!(w, "{target} {metric} h{h}: benchmark only")?;
                    }
                    mats.iter().try_for_each(|m| writeln!(w, "{}", m.render_text()))
                })?);
            }
            written.push(write_file(dir, &format!("cumlpl_{target}_h{h}.csv"), |w| {
                writeln!(w, "spec,origin,cumulative,relative")?;
                for spec in &plan.specs {
                    let label = spec.to_string();
                    if let Ok(series) = cumulative_lpl(scores, target, &label, BENCHMARK, h) {
                        for p in series {
                            writeln!(w, "{label},{},{},{}", p.origin, p.cumulative, p.relative)?;
                        }
                    }
                }
                Ok(())
            })?);
            for spec in plan.specs.iter().filter(|s| s.cell().is_some()) {
                let label = spec.to_string();
                match qs_over_time(scores, target, &label, h, &scores.grid) {
                    Ok(heat) => written.push(write_file(dir, &format!("qsheat_{target}_{label}_h{h}.csv"), |w| {
                        heat.write_csv(w)
                    })?),
                    Err(e) => log::warn!("{e}"),
                }
            }
        }
    }
    Ok(written)
}

/// Provenance of a run: inputs by hash and every output with its hash.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub version: String,
    pub plan_hash: String,
    pub data_hash: String,
    pub seed: u64,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    /// Writes `manifest.txt` in the same `key = value` format as plans.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "plan_sha256 = {}", self.plan_hash);
        let _ = writeln!(s, "data_sha256 = {}", self.data_hash);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "\n[outputs]");
        for name in &self.outputs {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let _ = writeln!(s, "{name} = {}", sha256_hex(&bytes));
        }
        let path = dir.join("manifest.txt");
        fs::write(&path, s).map_err(|e| Error::io(&path, e))
    }
}
