use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use super::{PanelDataset, Role, VariableMeta};
use crate::config::{split_list, KvConfig};
use crate::error::{Error, Result};
use crate::period::Period;

/// Cell contents treated as a missing observation.
pub const MISSING_TOKENS: &[&str] = &["", "NA", "NaN", "nan", "."];

/// Variable metadata read from a sidecar file next to the CSV.
///
/// ```text
/// [variables]
/// pi     = target | Headline inflation
/// unemp  = core
/// ind_01 = survey industry Big9 | Production expectations, AT
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelSchema {
    pub variables: BTreeMap<String, VariableMeta>,
}

impl PanelSchema {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg = KvConfig::parse(text)?;
        let mut variables = BTreeMap::new();
        for e in cfg.section("variables") {
            let (spec, name) = match e.value.split_once('|') {
                Some((s, n)) => (s, n.trim().to_string()),
                None => (e.value.as_str(), e.key.clone()),
            };
            let tokens: Vec<&str> = split_list(spec).collect();
            let bad = |msg: &str| Error::ConfigSyntax {
                line: e.line,
                message: format!("{}: {msg}", e.key),
            };
            let role: Role = tokens.first().ok_or_else(|| bad("missing role"))?.parse()?;
            let meta = match role {
                Role::Survey => {
                    if tokens.len() != 3 {
                        return Err(bad("survey variables need `survey <category> <group>`"));
                    }
                    VariableMeta::survey(name, tokens[1].parse()?, tokens[2].parse()?)
                }
                Role::Target | Role::CorePredictor => {
                    if tokens.len() != 1 {
                        return Err(bad("only survey variables take a category and group"));
                    }
                    if role == Role::Target {
                        VariableMeta::target(name)
                    } else {
                        VariableMeta::core(name)
                    }
                }
            };
            if variables.insert(e.key.clone(), meta).is_some() {
                return Err(bad("listed twice"));
            }
        }
        Ok(PanelSchema { variables })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("[variables]\n");
        for (id, m) in &self.variables {
            let _ = match (m.survey_category, m.smallest_group) {
                (Some(c), Some(g)) => writeln!(out, "{id} = survey {c} {g} | {}", m.name),
                _ => writeln!(out, "{id} = {} | {}", m.role, m.name),
            };
        }
        out
    }
}

/// Read a panel CSV whose first column is the `date` (YYYY-MM) and whose
/// remaining columns are variables described in `schema`.
pub fn load_panel(path: &Path, schema: &PanelSchema) -> Result<PanelDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, schema)
}

pub(crate) fn read_panel<R: std::io::Read>(reader: R, schema: &PanelSchema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();

    let mut seen = HashSet::new();
    for (j, id) in ids.iter().enumerate() {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateVariable {
                column: j + 2,
                variable: id.clone(),
            });
        }
        if !schema.variables.contains_key(id) {
            return Err(Error::Metadata(format!("column {} ({id}) missing from sidecar", j + 2)));
        }
    }
    if let Some(extra) = schema.variables.keys().find(|k| !seen.contains(k.as_str())) {
        return Err(Error::Metadata(format!("sidecar variable {extra} not in data file")));
    }

    let mut start: Option<Period> = None;
    let mut previous: Option<Period> = None;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for (r, record) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = r + 2;
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let raw_date = record.get(0).unwrap_or("");
        let period: Period = raw_date.parse().map_err(|_| Error::MalformedPeriod {
            row,
            column: 1,
            value: raw_date.to_string(),
        })?;
        if let Some(prev) = previous {
            if period <= prev {
                return Err(Error::NonMonotoneDates {
                    row,
                    previous: prev,
                    found: period,
                });
            }
            if period != prev.succ() {
                return Err(Error::GapInMonths {
                    row,
                    previous: prev,
                    found: period,
                });
            }
        }
        start.get_or_insert(period);
        previous = Some(period);
        if record.len() != ids.len() + 1 {
            return Err(Error::Csv(format!(
                "row {row}: expected {} fields, found {}",
                ids.len() + 1,
                record.len()
            )));
        }
        for (j, cell) in record.iter().skip(1).enumerate() {
            let value = if MISSING_TOKENS.contains(&cell) {
                f64::NAN
            } else {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::NonNumeric {
                        row,
                        column: j + 2,
                        variable: ids[j].clone(),
                        value: cell.to_string(),
                    })?
            };
            columns[j].push(value);
        }
    }

    let start = start.ok_or_else(|| Error::Csv("no data rows".into()))?;
    let len = columns.first().map_or(0, Vec::len);
    for (j, values) in columns.iter().enumerate() {
        if let Some(r) = first_interior_gap(values) {
            return Err(Error::InteriorMissing {
                row: r + 2,
                column: j + 2,
                variable: ids[j].clone(),
            });
        }
    }
    let series: BTreeMap<String, Vec<f64>> = ids.iter().cloned().zip(columns).collect();
    PanelDataset::new(start, len, series, schema.variables.clone())
}

fn first_interior_gap(values: &[f64]) -> Option<usize> {
    let first = values.iter().position(|v| !v.is_nan())?;
    let last = values.iter().rposition(|v| !v.is_nan())?;
    (first..=last).find(|&i| values[i].is_nan())
}

/// Write the panel as CSV plus its sidecar at `<csv path>.meta`.
pub fn write_panel(data: &PanelDataset, csv_path: &Path) -> Result<()> {
    let mut text = String::from("date");
    let ids: Vec<&str> = data.variables().map(|(id, _)| id).collect();
    for id in &ids {
        text.push(',');
        text.push_str(id);
    }
    text.push('\n');
    let cols: Vec<&[f64]> = ids.iter().map(|id| data.series(id).unwrap()).collect();
    for (i, period) in data.time_index().enumerate() {
        let _ = write!(text, "{period}");
        for col in &cols {
            let v = col[i];
            if v.is_nan() {
                text.push_str(",NA");
            } else {
                let _ = write!(text, ",{v}");
            }
        }
        text.push('\n');
    }
    std::fs::write(csv_path, text).map_err(|e| Error::io(csv_path, e))?;

    let schema = PanelSchema {
        variables: data.variables().map(|(k, m)| (k.to_string(), m.clone())).collect(),
    };
    let meta_path = sidecar_path(csv_path);
    std::fs::write(&meta_path, schema.render()).map_err(|e| Error::io(meta_path, e))
}

/// Default location of the metadata sidecar for a data file.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let mut s = csv_path.as_os_str().to_os_string();
    s.push(".meta");
    s.into()
}
