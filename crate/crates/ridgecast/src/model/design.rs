use nalgebra::{DMatrix, DVector};

use crate::data_io::{window_rows, ColumnStats, PanelDataset, Role};
use crate::error::{Error, Result};
use crate::period::{Period, PeriodRange};

/// Which lags of each survey series enter `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SurveyLags {
    /// Contemporaneous value and first lag.
    #[default]
    ZeroOne,
    /// First and second lag.
    OneTwo,
}

impl SurveyLags {
    pub fn lags(self) -> [usize; 2] {
        match self {
            SurveyLags::ZeroOne => [0, 1],
            SurveyLags::OneTwo => [1, 2],
        }
    }
}

/// Target lags in `X`.
pub const TARGET_LAGS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DesignOptions {
    pub survey_lags: SurveyLags,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XColumn {
    Intercept,
    TargetLag(usize),
    Core(String),
    /// Principal component extracted from the survey block.
    Factor(usize),
}

/// Loadings used to turn a standardized survey row into factor values.
#[derive(Debug, Clone)]
pub struct FactorProjection {
    pub loadings: DMatrix<f64>,
    pub z_columns: Vec<(String, usize)>,
    pub z_stats: Vec<ColumnStats>,
}

/// The `(y, X, Z)` triple of a direct `h`-step regression. Row `i` holds
/// information dated `rows[i]`; `y[i]` is the target `horizon` months later.
/// All non-intercept columns are standardized over the estimation rows.
#[derive(Debug, Clone)]
pub struct RegressionDesign {
    pub target: String,
    pub horizon: usize,
    pub rows: Vec<Period>,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub x_columns: Vec<XColumn>,
    /// `None` for columns that are not standardized (intercept, factors).
    pub x_stats: Vec<Option<ColumnStats>>,
    /// Whether the column carries a Horseshoe local scale.
    pub penalized: Vec<bool>,
    pub z_columns: Vec<(String, usize)>,
    pub z_stats: Vec<ColumnStats>,
    pub y_stats: ColumnStats,
    /// Variables or columns removed for missing data or zero variance.
    pub dropped: Vec<String>,
    pub projection: Option<FactorProjection>,
}

impl RegressionDesign {
    pub fn t(&self) -> usize {
        self.y.len()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    /// Same design with the survey block removed.
    pub fn benchmark(&self) -> RegressionDesign {
        RegressionDesign {
            z: DMatrix::zeros(self.t(), 0),
            z_columns: Vec::new(),
            z_stats: Vec::new(),
            projection: None,
            ..self.clone()
        }
    }

    /// Standardized `(x, z)` at `origin`, the row used to forecast
    /// `origin + horizon`. Uses the estimation-window statistics.
    pub fn forecast_row(&self, data: &PanelDataset, origin: Period) -> Result<(DVector<f64>, DVector<f64>)> {
        let t = data
            .index_of(origin)
            .ok_or_else(|| Error::InsufficientWindow(format!("origin {origin} outside data")))?;
        let mut x = DVector::zeros(self.m());
        for (j, col) in self.x_columns.iter().enumerate() {
            x[j] = match col {
                XColumn::Intercept => 1.0,
                XColumn::TargetLag(l) => lagged(data, &self.target, t, *l)?,
                XColumn::Core(id) => lagged(data, id, t, 0)?,
                XColumn::Factor(_) => continue,
            };
            if let Some(s) = self.x_stats[j] {
                x[j] = s.apply(x[j]);
            }
        }
        let z = standardized_row(data, t, &self.z_columns, &self.z_stats)?;
        if let Some(p) = &self.projection {
            let zp = standardized_row(data, t, &p.z_columns, &p.z_stats)?;
            let f = p.loadings.tr_mul(&zp);
            for (j, col) in self.x_columns.iter().enumerate() {
                if let XColumn::Factor(i) = col {
                    x[j] = f[*i];
                }
            }
        }
        Ok((x, z))
    }
}

fn lagged(data: &PanelDataset, id: &str, t: usize, lag: usize) -> Result<f64> {
    let series = data.series(id).ok_or_else(|| Error::UnknownVariable(id.to_string()))?;
    let v = t.checked_sub(lag).map(|i| series[i]).unwrap_or(f64::NAN);
    if v.is_nan() {
        Err(Error::InsufficientWindow(format!(
            "{id} lag {lag} unavailable at {}",
            data.period_at(t)
        )))
    } else {
        Ok(v)
    }
}

fn standardized_row(
    data: &PanelDataset,
    t: usize,
    columns: &[(String, usize)],
    stats: &[ColumnStats],
) -> Result<DVector<f64>> {
    let mut z = DVector::zeros(columns.len());
    for (j, ((id, lag), s)) in columns.iter().zip(stats).enumerate() {
        z[j] = s.apply(lagged(data, id, t, *lag)?);
    }
    Ok(z)
}

/// [`build_design_with`] using lags 0 and 1 of the survey series.
pub fn build_design(
    data: &PanelDataset,
    target: &str,
    survey_ids: &[String],
    horizon: usize,
    window: PeriodRange,
) -> Result<RegressionDesign> {
    build_design_with(data, target, survey_ids, horizon, window, DesignOptions::default())
}

/// Build the direct `horizon`-step design from data inside `window`.
///
/// `X` holds an intercept, target lags 1 and 2 and every core predictor at
/// lag 0; `Z` holds two lags of each survey series, so `K = 2 * |survey_ids|`
/// unless series are dropped. Lags and leads never reach outside `window`,
/// hence `T = len(window) - horizon - 2`.
pub fn build_design_with(
    data: &PanelDataset,
    target: &str,
    survey_ids: &[String],
    horizon: usize,
    window: PeriodRange,
    opts: DesignOptions,
) -> Result<RegressionDesign> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    match data.meta(target) {
        None => return Err(Error::UnknownVariable(target.to_string())),
        Some(m) if m.role != Role::Target => {
            return Err(Error::Config(format!(
                "{target} is a {} variable, not a target",
                m.role
            )))
        }
        Some(_) => {}
    }
    for id in survey_ids {
        match data.meta(id) {
            None => return Err(Error::UnknownVariable(id.clone())),
            Some(m) if m.role != Role::Survey => return Err(Error::Config(format!("{id} is not a survey variable"))),
            Some(_) => {}
        }
    }

    let (lo, hi) = window_rows(data, window)?;
    let survey_lags = opts.survey_lags.lags();
    let max_lag = TARGET_LAGS.iter().chain(&survey_lags).copied().max().unwrap();
    let first = lo + max_lag;
    let needed = max_lag + horizon + 3;
    if hi < first + horizon + 2 {
        return Err(Error::InsufficientWindow(format!(
            "window {window} has {} months; horizon {horizon} with {max_lag} lags needs at least {needed}",
            window.len()
        )));
    }
    let last = hi - horizon;
    let rows_idx: Vec<usize> = (first..=last).collect();
    let t_len = rows_idx.len();

    let target_series = data.series(target).unwrap();
    let y_raw: Vec<f64> = rows_idx.iter().map(|&t| target_series[t + horizon]).collect();
    if y_raw.iter().any(|v| v.is_nan()) {
        return Err(Error::InsufficientWindow(format!(
            "{target} has missing values inside {window}"
        )));
    }
    let y_stats = ColumnStats::from_values(&y_raw)
        .ok_or_else(|| Error::InsufficientWindow(format!("{target} is constant over {window}")))?;

    let mut dropped = Vec::new();

    let mut x_columns = vec![XColumn::Intercept];
    x_columns.extend(TARGET_LAGS.iter().map(|&l| XColumn::TargetLag(l)));
    x_columns.extend(data.ids_with_role(Role::CorePredictor).into_iter().map(XColumn::Core));
    let mut x_cols: Vec<Vec<f64>> = Vec::new();
    let mut x_stats = Vec::new();
    let mut kept_x = Vec::new();
    for col in x_columns {
        let (id, lag) = match &col {
            XColumn::Intercept => {
                x_cols.push(vec![1.0; t_len]);
                x_stats.push(None);
                kept_x.push(col);
                continue;
            }
            XColumn::TargetLag(l) => (target.to_string(), *l),
            XColumn::Core(id) => (id.clone(), 0),
            XColumn::Factor(_) => unreachable!(),
        };
        let raw: Vec<f64> = rows_idx.iter().map(|&t| data.series(&id).unwrap()[t - lag]).collect();
        if raw.iter().any(|v| v.is_nan()) {
            return Err(Error::InsufficientWindow(format!(
                "{id} has missing values inside {window}"
            )));
        }
        match ColumnStats::from_values(&raw) {
            Some(s) => {
                x_cols.push(raw.iter().map(|&v| s.apply(v)).collect());
                x_stats.push(Some(s));
                kept_x.push(col);
            }
            None => {
                log::warn!("dropping core column {id} (lag {lag}): zero variance over {window}");
                dropped.push(format!("{id}@{lag}"));
            }
        }
    }

    let mut z_cols = Vec::new();
    let mut z_columns = Vec::new();
    let mut z_stats = Vec::new();
    let series_rows = |id: &str, lag: usize| -> Vec<f64> {
        let s = data.series(id).unwrap();
        rows_idx.iter().map(|&t| s[t - lag]).collect()
    };
    for id in survey_ids {
        let raw: Vec<Vec<f64>> = survey_lags.iter().map(|&l| series_rows(id, l)).collect();
        if raw.iter().flatten().any(|v| v.is_nan()) {
            log::warn!("dropping survey series {id}: missing values inside {window}");
            dropped.push(id.clone());
            continue;
        }
        for (lag, col) in survey_lags.iter().zip(raw) {
            match ColumnStats::from_values(&col) {
                Some(s) => {
                    z_cols.push(col.iter().map(|&v| s.apply(v)).collect::<Vec<_>>());
                    z_columns.push((id.clone(), *lag));
                    z_stats.push(s);
                }
                None => {
                    log::warn!("dropping survey column {id} (lag {lag}): zero variance over {window}");
                    dropped.push(format!("{id}@{lag}"));
                }
            }
        }
    }

    let rows = rows_idx.iter().map(|&t| data.period_at(t)).collect();
    let penalized = kept_x.iter().map(|c| *c != XColumn::Intercept).collect();
    Ok(RegressionDesign {
        target: target.to_string(),
        horizon,
        rows,
        y: DVector::from_iterator(t_len, y_raw.iter().map(|&v| y_stats.apply(v))),
        x: columns_to_matrix(t_len, &x_cols),
        z: columns_to_matrix(t_len, &z_cols),
        x_columns: kept_x,
        x_stats,
        penalized,
        z_columns,
        z_stats,
        y_stats,
        dropped,
        projection: None,
    })
}

fn columns_to_matrix(rows: usize, cols: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{
        generate_synthetic, subset_survey, table1, CategorySelector, CountryGroup, DgpSpec, SurveyCategory,
        SurveyLayout,
    };

    fn panel(periods: usize, layout: SurveyLayout) -> PanelDataset {
        let spec = DgpSpec {
            periods,
            layout,
            signals: 0,
            ..DgpSpec::default()
        };
        generate_synthetic(&spec, 7).unwrap().panel
    }

    fn few_series() -> SurveyLayout {
        SurveyLayout::Custom(vec![(SurveyCategory::Industry, CountryGroup::EA, 3)])
    }

    #[test]
    fn row_arithmetic() {
        let d = panel(30, few_series());
        let ids = subset_survey(&d, CategorySelector::All, CountryGroup::All);
        let des = build_design(&d, "pi", &ids, 3, d.range()).unwrap();
        assert_eq!(des.t(), 30 - 3 - 2);
        assert_eq!(des.k(), 6);
        assert_eq!(des.m(), 6);
        assert_eq!(des.rows[0], d.period_at(2));
        // y is the target three months after the row date
        let pi = d.series("pi").unwrap();
        let first = des.y_stats.invert(des.y[0]);
        assert!((first - pi[5]).abs() < 1e-12);
    }

    #[test]
    fn table_mirror_industry_big9() {
        let d = panel(40, SurveyLayout::Table1);
        let ids = subset_survey(&d, CategorySelector::Only(SurveyCategory::Industry), CountryGroup::Big9);
        let des = build_design(&d, "pi", &ids, 3, d.range()).unwrap();
        assert_eq!(des.k(), 148);
        assert_eq!(table1::CORE_PREDICTORS + des.k(), 153);
    }

    #[test]
    fn empty_survey_is_benchmark() {
        let d = panel(30, few_series());
        let des = build_design(&d, "pi", &[], 1, d.range()).unwrap();
        assert_eq!(des.k(), 0);
        assert_eq!(des.z.shape(), (des.t(), 0));
    }

    #[test]
    fn columns_standardized_over_window() {
        let d = panel(50, few_series());
        let ids = subset_survey(&d, CategorySelector::All, CountryGroup::All);
        let des = build_design(&d, "pi", &ids, 1, d.range()).unwrap();
        let n = des.t() as f64;
        for j in 1..des.m() {
            let c = des.x.column(j);
            let mean = c.sum() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 1e-10 && (var - 1.0).abs() < 1e-10);
        }
        for c in des.z.column_iter() {
            assert!((c.sum() / n).abs() < 1e-10);
        }
    }

    #[test]
    fn errors() {
        let d = panel(30, few_series());
        assert!(matches!(
            build_design(&d, "nope", &[], 1, d.range()),
            Err(Error::UnknownVariable(_))
        ));
        assert!(matches!(
            build_design(&d, "pi", &["zzz".to_string()], 1, d.range()),
            Err(Error::UnknownVariable(_))
        ));
        let short = PeriodRange::new(d.start(), d.start().offset(5));
        assert!(matches!(
            build_design(&d, "pi", &[], 3, short),
            Err(Error::InsufficientWindow(_))
        ));
        assert!(build_design(&d, "unemp", &[], 1, d.range()).is_err());
    }

    #[test]
    fn forecast_row_matches_design_row() {
        let d = panel(40, few_series());
        let ids = subset_survey(&d, CategorySelector::All, CountryGroup::All);
        let des = build_design(&d, "pi", &ids, 2, d.range()).unwrap();
        let i = 7;
        let (x, z) = des.forecast_row(&d, des.rows[i]).unwrap();
        assert!((x - des.x.row(i).transpose()).amax() < 1e-12);
        assert!((z - des.z.row(i).transpose()).amax() < 1e-12);
    }

    #[test]
    fn alternative_lags() {
        let d = panel(30, few_series());
        let ids = subset_survey(&d, CategorySelector::All, CountryGroup::All);
        let opts = DesignOptions {
            survey_lags: SurveyLags::OneTwo,
        };
        let des = build_design_with(&d, "pi", &ids, 1, d.range(), opts).unwrap();
        assert_eq!(des.t(), 30 - 1 - 2);
        assert_eq!(des.z_columns[0].1, 1);
    }

    #[test]
    fn edge_missing_survey_dropped() {
        let d = panel(30, few_series());
        let ids = subset_survey(&d, CategorySelector::All, CountryGroup::All);
        let mut vals = d.series(&ids[0]).unwrap().to_vec();
        vals[0] = f64::NAN;
        vals[1] = f64::NAN;
        let d = d.with_series(&ids[0], vals).unwrap();
        let des = build_design(&d, "pi", &ids, 1, d.range()).unwrap();
        assert_eq!(des.k(), 4);
        assert_eq!(des.dropped, [ids[0].clone()]);
    }
}
