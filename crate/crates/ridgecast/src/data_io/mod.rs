//! Monthly panel data: ingestion, metadata, subsetting and standardization.

mod load;
mod synth;
pub mod table1;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::period::{Period, PeriodRange};

pub use load::{load_panel, sidecar_path, write_panel, PanelSchema, MISSING_TOKENS};
pub use synth::{generate_synthetic, DgpSpec, SurveyLayout, SyntheticPanel, TrueSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Target,
    CorePredictor,
    Survey,
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "target" => Ok(Role::Target),
            "core" | "core_predictor" => Ok(Role::CorePredictor),
            "survey" => Ok(Role::Survey),
            _ => Err(Error::Config(format!("unknown role {s:?}"))),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Target => "target",
            Role::CorePredictor => "core",
            Role::Survey => "survey",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SurveyCategory {
    Main,
    Building,
    Consumer,
    Industry,
    Retail,
    Services,
}

impl SurveyCategory {
    pub const ALL: [SurveyCategory; 6] = [
        SurveyCategory::Main,
        SurveyCategory::Building,
        SurveyCategory::Consumer,
        SurveyCategory::Industry,
        SurveyCategory::Retail,
        SurveyCategory::Services,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SurveyCategory::Main => "main",
            SurveyCategory::Building => "building",
            SurveyCategory::Consumer => "consumer",
            SurveyCategory::Industry => "industry",
            SurveyCategory::Retail => "retail",
            SurveyCategory::Services => "services",
        }
    }
}

impl fmt::Display for SurveyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SurveyCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SurveyCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown survey category {s:?}")))
    }
}

/// A single survey category or every category at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CategorySelector {
    Only(SurveyCategory),
    All,
}

impl CategorySelector {
    /// The six categories followed by `All`, in table order.
    pub fn table_order() -> impl Iterator<Item = CategorySelector> {
        SurveyCategory::ALL
            .into_iter()
            .map(CategorySelector::Only)
            .chain(std::iter::once(CategorySelector::All))
    }

    pub fn matches(self, category: Option<SurveyCategory>) -> bool {
        match self {
            CategorySelector::All => category.is_some(),
            CategorySelector::Only(c) => category == Some(c),
        }
    }
}

impl fmt::Display for CategorySelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CategorySelector::Only(c) => c.fmt(f),
            CategorySelector::All => f.write_str("all"),
        }
    }
}

impl FromStr for CategorySelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            Ok(CategorySelector::All)
        } else {
            s.parse().map(CategorySelector::Only)
        }
    }
}

/// Country coverage of a survey series. Groups are nested, so the ordering
/// doubles as the inclusion order: `EA ⊆ Big6 ⊆ Big9 ⊆ Big12 ⊆ All`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CountryGroup {
    EA,
    Big6,
    Big9,
    Big12,
    All,
}

impl CountryGroup {
    pub const ALL: [CountryGroup; 5] = [
        CountryGroup::EA,
        CountryGroup::Big6,
        CountryGroup::Big9,
        CountryGroup::Big12,
        CountryGroup::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CountryGroup::EA => "EA",
            CountryGroup::Big6 => "Big6",
            CountryGroup::Big9 => "Big9",
            CountryGroup::Big12 => "Big12",
            CountryGroup::All => "All",
        }
    }
}

impl fmt::Display for CountryGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountryGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
        CountryGroup::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| Error::Config(format!("unknown country group {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableMeta {
    pub role: Role,
    pub survey_category: Option<SurveyCategory>,
    /// Smallest country group covering the series; the full tag set is every
    /// group from this one upwards.
    pub smallest_group: Option<CountryGroup>,
    pub name: String,
}

impl VariableMeta {
    pub fn target(name: impl Into<String>) -> Self {
        VariableMeta {
            role: Role::Target,
            survey_category: None,
            smallest_group: None,
            name: name.into(),
        }
    }

    pub fn core(name: impl Into<String>) -> Self {
        VariableMeta {
            role: Role::CorePredictor,
            survey_category: None,
            smallest_group: None,
            name: name.into(),
        }
    }

    pub fn survey(name: impl Into<String>, category: SurveyCategory, group: CountryGroup) -> Self {
        VariableMeta {
            role: Role::Survey,
            survey_category: Some(category),
            smallest_group: Some(group),
            name: name.into(),
        }
    }

    pub fn country_group_tags(&self) -> BTreeSet<CountryGroup> {
        match self.smallest_group {
            Some(g) => CountryGroup::ALL.into_iter().filter(|h| *h >= g).collect(),
            None => BTreeSet::new(),
        }
    }

    pub fn in_group(&self, group: CountryGroup) -> bool {
        self.smallest_group.is_some_and(|g| g <= group)
    }

    fn validate(&self, id: &str) -> Result<()> {
        let is_survey = self.role == Role::Survey;
        if is_survey != self.survey_category.is_some() {
            return Err(Error::Metadata(format!(
                "{id}: survey category must be present exactly for survey variables"
            )));
        }
        if is_survey && self.smallest_group.is_none() {
            return Err(Error::Metadata(format!("{id}: survey variable without country group")));
        }
        Ok(())
    }
}

/// Aligned monthly series with metadata. Missing values are stored as NaN and
/// may only occur at the leading or trailing edge of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    start: Period,
    len: usize,
    series: BTreeMap<String, Vec<f64>>,
    meta: BTreeMap<String, VariableMeta>,
}

impl PanelDataset {
    pub fn new(
        start: Period,
        len: usize,
        series: BTreeMap<String, Vec<f64>>,
        meta: BTreeMap<String, VariableMeta>,
    ) -> Result<Self> {
        for (id, values) in &series {
            if values.len() != len {
                return Err(Error::Dimension(format!(
                    "series {id} has {} values, calendar has {len}",
                    values.len()
                )));
            }
            if let Some(row) = interior_missing(values) {
                return Err(Error::InteriorMissing {
                    row: row + 1,
                    column: 0,
                    variable: id.clone(),
                });
            }
            if values.iter().any(|v| v.is_infinite()) {
                return Err(Error::NonFinite(format!("series {id}")));
            }
            if !meta.contains_key(id) {
                return Err(Error::Metadata(format!("series {id} has no metadata")));
            }
        }
        for (id, m) in &meta {
            if !series.contains_key(id) {
                return Err(Error::Metadata(format!("metadata for {id} has no series")));
            }
            m.validate(id)?;
        }
        Ok(PanelDataset {
            start,
            len,
            series,
            meta,
        })
    }

    pub fn start(&self) -> Period {
        self.start
    }

    pub fn end(&self) -> Period {
        self.start.offset(self.len as i32 - 1)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn range(&self) -> PeriodRange {
        PeriodRange::new(self.start, self.end())
    }

    pub fn time_index(&self) -> impl Iterator<Item = Period> + '_ {
        self.range().iter()
    }

    /// Row index of `p`, if it lies in the calendar.
    pub fn index_of(&self, p: Period) -> Option<usize> {
        let k = p.months_since(self.start);
        (k >= 0 && (k as usize) < self.len).then_some(k as usize)
    }

    pub fn period_at(&self, idx: usize) -> Period {
        self.start.offset(idx as i32)
    }

    pub fn series(&self, id: &str) -> Option<&[f64]> {
        self.series.get(id).map(Vec::as_slice)
    }

    pub fn meta(&self, id: &str) -> Option<&VariableMeta> {
        self.meta.get(id)
    }

    pub fn variables(&self) -> impl Iterator<Item = (&str, &VariableMeta)> {
        self.meta.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn ids_with_role(&self, role: Role) -> Vec<String> {
        self.meta
            .iter()
            .filter(|(_, m)| m.role == role)
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// Row indices of the first and last observed value of `id`.
    pub fn observed_span(&self, id: &str) -> Option<(usize, usize)> {
        let values = self.series.get(id)?;
        let first = values.iter().position(|v| !v.is_nan())?;
        let last = values.iter().rposition(|v| !v.is_nan())?;
        Some((first, last))
    }

    /// Copy truncated to rows up to and including `last`. Used to guarantee
    /// that estimation at an origin cannot see later data.
    pub fn truncated(&self, last: Period) -> PanelDataset {
        let keep = match self.index_of(last) {
            Some(i) => i + 1,
            None if last < self.start => 0,
            None => self.len,
        };
        PanelDataset {
            start: self.start,
            len: keep,
            series: self
                .series
                .iter()
                .map(|(k, v)| (k.clone(), v[..keep].to_vec()))
                .collect(),
            meta: self.meta.clone(),
        }
    }

    /// Replace one variable's values. The result is re-validated.
    pub fn with_series(&self, id: &str, values: Vec<f64>) -> Result<PanelDataset> {
        if !self.series.contains_key(id) {
            return Err(Error::UnknownVariable(id.to_string()));
        }
        let mut series = self.series.clone();
        series.insert(id.to_string(), values);
        PanelDataset::new(self.start, self.len, series, self.meta.clone())
    }
}

fn interior_missing(values: &[f64]) -> Option<usize> {
    let first = values.iter().position(|v| !v.is_nan())?;
    let last = values.iter().rposition(|v| !v.is_nan())?;
    (first..=last).find(|&i| values[i].is_nan())
}

/// Ids of survey variables in `category` (or any, for `All`) that are
/// available for the country `group`, sorted by id.
pub fn subset_survey(data: &PanelDataset, category: CategorySelector, group: CountryGroup) -> Vec<String> {
    // BTreeMap iteration is already sorted by id.
    data.meta
        .iter()
        .filter(|(_, m)| m.role == Role::Survey)
        .filter(|(_, m)| category.matches(m.survey_category) && m.in_group(group))
        .map(|(id, _)| id.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

impl ColumnStats {
    /// Sample mean and standard deviation (n − 1 denominator) of the
    /// non-missing values. `None` if fewer than two values or zero spread.
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<Self> {
        let obs: Vec<f64> = values.into_iter().copied().filter(|v| !v.is_nan()).collect();
        if obs.len() < 2 {
            return None;
        }
        let n = obs.len() as f64;
        let mean = obs.iter().sum::<f64>() / n;
        let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        (std.is_finite() && std > f64::EPSILON * mean.abs().max(1.0)).then_some(ColumnStats { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StandardizationStats {
    pub columns: BTreeMap<String, ColumnStats>,
    /// Variables removed because they had no spread over the window.
    pub dropped: Vec<String>,
}

impl StandardizationStats {
    pub fn get(&self, id: &str) -> Option<ColumnStats> {
        self.columns.get(id).copied()
    }
}

/// Standardize every variable with mean and standard deviation computed over
/// `window` only. Variables that are constant (or unobserved) over the window
/// are dropped with a warning.
pub fn standardize(data: &PanelDataset, window: PeriodRange) -> Result<(PanelDataset, StandardizationStats)> {
    let (lo, hi) = window_rows(data, window)?;
    let mut stats = StandardizationStats::default();
    let mut series = BTreeMap::new();
    let mut meta = BTreeMap::new();
    for (id, values) in &data.series {
        match ColumnStats::from_values(&values[lo..=hi]) {
            Some(s) => {
                series.insert(id.clone(), values.iter().map(|&v| s.apply(v)).collect());
                meta.insert(id.clone(), data.meta[id].clone());
                stats.columns.insert(id.clone(), s);
            }
            None => {
                log::warn!("dropping {id}: zero variance over {window}");
                stats.dropped.push(id.clone());
            }
        }
    }
    let out = PanelDataset::new(data.start, data.len, series, meta)?;
    Ok((out, stats))
}

/// Inverse of [`standardize`] on the variables it kept.
pub fn destandardize(data: &PanelDataset, stats: &StandardizationStats) -> Result<PanelDataset> {
    let mut series = BTreeMap::new();
    for (id, values) in &data.series {
        let s = stats.get(id).ok_or_else(|| Error::UnknownVariable(id.clone()))?;
        series.insert(id.clone(), values.iter().map(|&v| s.invert(v)).collect());
    }
    PanelDataset::new(data.start, data.len, series, data.meta.clone())
}

pub(crate) fn window_rows(data: &PanelDataset, window: PeriodRange) -> Result<(usize, usize)> {
    if window.is_empty() {
        return Err(Error::InsufficientWindow(format!("empty window {window}")));
    }
    match (data.index_of(window.start), data.index_of(window.end)) {
        (Some(lo), Some(hi)) => Ok((lo, hi)),
        _ => Err(Error::InsufficientWindow(format!(
            "window {window} outside data range {}",
            data.range()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Period {
        s.parse().unwrap()
    }

    fn small_panel() -> PanelDataset {
        let mut series = BTreeMap::new();
        let mut meta = BTreeMap::new();
        series.insert("pi".to_string(), vec![1.0, 2.0, 3.0]);
        meta.insert("pi".to_string(), VariableMeta::target("inflation"));
        series.insert("flat".to_string(), vec![5.0, 5.0, 5.0]);
        meta.insert("flat".to_string(), VariableMeta::core("flat"));
        for (id, cat, grp) in [
            ("s_b", SurveyCategory::Industry, CountryGroup::Big6),
            ("s_a", SurveyCategory::Industry, CountryGroup::EA),
            ("s_c", SurveyCategory::Retail, CountryGroup::All),
        ] {
            series.insert(id.to_string(), vec![0.0, 1.0, 0.5]);
            meta.insert(id.to_string(), VariableMeta::survey(id, cat, grp));
        }
        PanelDataset::new(p("2005-01"), 3, series, meta).unwrap()
    }

    #[test]
    fn group_tags_are_nested() {
        let m = VariableMeta::survey("x", SurveyCategory::Main, CountryGroup::Big9);
        let tags: Vec<_> = m.country_group_tags().into_iter().collect();
        assert_eq!(tags, [CountryGroup::Big9, CountryGroup::Big12, CountryGroup::All]);
        assert!(!m.in_group(CountryGroup::Big6));
    }

    #[test]
    fn subset_by_category_and_group() {
        let d = small_panel();
        let ind = CategorySelector::Only(SurveyCategory::Industry);
        assert_eq!(subset_survey(&d, ind, CountryGroup::EA), ["s_a"]);
        assert_eq!(subset_survey(&d, ind, CountryGroup::Big6), ["s_a", "s_b"]);
        assert_eq!(
            subset_survey(&d, CategorySelector::All, CountryGroup::All),
            ["s_a", "s_b", "s_c"]
        );
        let services = CategorySelector::Only(SurveyCategory::Services);
        assert!(subset_survey(&d, services, CountryGroup::EA).is_empty());
    }

    #[test]
    fn standardize_analytic_and_drop() {
        let d = small_panel();
        let (z, stats) = standardize(&d, d.range()).unwrap();
        assert_eq!(z.series("pi").unwrap(), &[-1.0, 0.0, 1.0]);
        let s = stats.get("pi").unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(stats.dropped, ["flat"]);
        assert!(z.series("flat").is_none());

        let back = destandardize(&z, &stats).unwrap();
        for (id, _) in back.variables() {
            for (a, b) in back.series(id).unwrap().iter().zip(d.series(id).unwrap()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interior_missing_rejected_edges_allowed() {
        let mut series = BTreeMap::new();
        let mut meta = BTreeMap::new();
        series.insert("a".to_string(), vec![f64::NAN, 1.0, 2.0, f64::NAN]);
        meta.insert("a".to_string(), VariableMeta::core("a"));
        let d = PanelDataset::new(p("2000-01"), 4, series.clone(), meta.clone()).unwrap();
        assert_eq!(d.observed_span("a"), Some((1, 2)));

        series.insert("a".to_string(), vec![0.0, f64::NAN, 2.0, 3.0]);
        assert!(matches!(
            PanelDataset::new(p("2000-01"), 4, series, meta),
            Err(Error::InteriorMissing { row: 2, .. })
        ));
    }

    #[test]
    fn metadata_must_match() {
        let mut meta = BTreeMap::new();
        meta.insert("a".to_string(), VariableMeta::core("a"));
        let series = BTreeMap::new();
        assert!(PanelDataset::new(p("2000-01"), 1, series, meta.clone()).is_err());
        let mut bad = VariableMeta::core("a");
        bad.survey_category = Some(SurveyCategory::Main);
        meta.insert("a".to_string(), bad);
        let mut series = BTreeMap::new();
        series.insert("a".to_string(), vec![1.0]);
        assert!(PanelDataset::new(p("2000-01"), 1, series, meta).is_err());
    }
}
