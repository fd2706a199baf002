//! The survey-coverage layout used for the synthetic mirror panel: number of
//! explanatory variables (core predictors plus lagged survey columns) per
//! country group and survey category.
//!
//! A cell counts `CORE_PREDICTORS + LAGS * n` where `n` is the number of
//! survey series in the subset. The published layout is not fully consistent
//! with that rule: the `All` column is smaller than the sum of the category
//! columns, and the `All × Building` cell has the wrong parity. The mirror is
//! built from the category columns (rounding `Building × All` down), so those
//! cells cannot be reproduced by any tagging of individual series.

use super::{subset_survey, CategorySelector, CountryGroup, PanelDataset, SurveyCategory};

/// Lag columns per survey series.
pub const LAGS: usize = 2;

/// Non-survey explanatory variables: two target lags, unemployment,
/// industrial production and M2 (the intercept is not counted).
pub const CORE_PREDICTORS: usize = 5;

/// Rows: EA, Big6, Big9, Big12, All. Columns: main, building, consumer,
/// industry, retail, services, all.
pub const TABLE: [[usize; 7]; 5] = [
    [23, 31, 35, 25, 23, 21, 99],
    [93, 133, 165, 105, 89, 85, 541],
    [135, 189, 241, 153, 125, 121, 793],
    [177, 247, 319, 201, 163, 159, 1053],
    [219, 298, 423, 265, 211, 171, 1332],
];

fn column(category: CategorySelector) -> usize {
    match category {
        CategorySelector::Only(c) => SurveyCategory::ALL.iter().position(|x| *x == c).unwrap(),
        CategorySelector::All => 6,
    }
}

/// Published cell value.
pub fn published(category: CategorySelector, group: CountryGroup) -> usize {
    let row = CountryGroup::ALL.iter().position(|g| *g == group).unwrap();
    TABLE[row][column(category)]
}

/// Number of survey series available for `(category, group)` in the mirror.
pub fn series_count(category: SurveyCategory, group: CountryGroup) -> usize {
    published(CategorySelector::Only(category), group).saturating_sub(CORE_PREDICTORS) / LAGS
}

/// Series whose smallest covering group is exactly `group`.
pub fn new_series_count(category: SurveyCategory, group: CountryGroup) -> usize {
    let here = series_count(category, group);
    match CountryGroup::ALL.iter().position(|g| *g == group).unwrap() {
        0 => here,
        i => here - series_count(category, CountryGroup::ALL[i - 1]),
    }
}

/// Cell value implied by a panel: core predictors plus lagged survey columns.
pub fn cell_from_panel(data: &PanelDataset, category: CategorySelector, group: CountryGroup) -> usize {
    CORE_PREDICTORS + LAGS * subset_survey(data, category, group).len()
}
