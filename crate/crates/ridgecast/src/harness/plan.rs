use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::config::{split_list, KvConfig};
use crate::data_io::{CategorySelector, CountryGroup};
use crate::error::{Error, Result};
use crate::model::{DesignOptions, McmcConfig, PriorConfig, SurveyLags};
use crate::pca_baseline::DEFAULT_FACTORS;
use crate::period::{Period, PeriodRange};

/// One model in the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelSpec {
    /// Core predictors only.
    Benchmark,
    /// Core predictors plus the ridge-shrunk survey block.
    Svd {
        category: CategorySelector,
        group: CountryGroup,
    },
    /// Core predictors plus principal components of the survey block.
    Pca {
        category: CategorySelector,
        group: CountryGroup,
        factors: usize,
    },
}

impl ModelSpec {
    /// Survey subset the spec draws on, if any.
    pub fn cell(&self) -> Option<(CategorySelector, CountryGroup)> {
        match *self {
            ModelSpec::Benchmark => None,
            ModelSpec::Svd { category, group } | ModelSpec::Pca { category, group, .. } => Some((category, group)),
        }
    }

    /// Model family without the subset: `benchmark`, `svd` or `pca-f<F>`.
    pub fn family(&self) -> String {
        match self {
            ModelSpec::Benchmark => "benchmark".into(),
            ModelSpec::Svd { .. } => "svd".into(),
            ModelSpec::Pca { factors, .. } => format!("pca-f{factors}"),
        }
    }
}

/// File-name safe label, e.g. `svd-industry-big9` or `pca-all-all-f5`.
impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Benchmark => f.write_str("benchmark"),
            ModelSpec::Svd { category, group } => {
                write!(f, "svd-{category}-{}", group.as_str().to_ascii_lowercase())
            }
            ModelSpec::Pca {
                category,
                group,
                factors,
            } => write!(f, "pca-{category}-{}-f{factors}", group.as_str().to_ascii_lowercase()),
        }
    }
}

/// Accepts both `svd industry Big9` and the label form `svd-industry-big9`.
impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s
            .split(|c: char| c.is_whitespace() || c == '-')
            .filter(|p| !p.is_empty())
            .collect();
        let bad = || Error::Config(format!("cannot parse model spec {s:?}"));
        match parts.as_slice() {
            [b] if b.eq_ignore_ascii_case("benchmark") => Ok(ModelSpec::Benchmark),
            [kind, cat, group] if kind.eq_ignore_ascii_case("svd") => Ok(ModelSpec::Svd {
                category: cat.parse()?,
                group: group.parse()?,
            }),
            [kind, cat, group, rest @ ..] if kind.eq_ignore_ascii_case("pca") && rest.len() <= 1 => {
                let factors = match rest.first() {
                    None => DEFAULT_FACTORS,
                    Some(f) => f.trim_start_matches(['f', 'F']).parse().map_err(|_| bad())?,
                };
                if factors == 0 {
                    return Err(Error::Config(format!("{s:?}: factor count must be at least 1")));
                }
                Ok(ModelSpec::Pca {
                    category: cat.parse()?,
                    group: group.parse()?,
                    factors,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Every (category, group) cell in table order: categories outer, groups
/// inner.
pub fn grid_cells() -> impl Iterator<Item = (CategorySelector, CountryGroup)> {
    CategorySelector::table_order().flat_map(|c| CountryGroup::ALL.into_iter().map(move |g| (c, g)))
}

/// A recursive out-of-sample experiment.
///
/// ```text
/// [plan]
/// targets = pi
/// horizons = 1, 3
/// initial_start = 2002-01
/// initial_end = 2010-12
/// holdout_end = 2020-12
/// seed = 42
/// survey_lags = 0, 1
/// spec = benchmark
/// spec = svd industry Big9
/// grid = pca 5              # every category x group cell
///
/// [mcmc]
/// burn = 2000
/// retain = 2000
///
/// [prior]
/// c0 = 3
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub targets: Vec<String>,
    pub horizons: Vec<usize>,
    /// The benchmark always comes first.
    pub specs: Vec<ModelSpec>,
    pub initial_window: PeriodRange,
    pub holdout_end: Period,
    pub mcmc: McmcConfig,
    pub prior: PriorConfig,
    pub design: DesignOptions,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_config(&KvConfig::load(path)?)
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let period = |key: &str| -> Result<Period> {
            let v = cfg.require("plan", key)?;
            v.parse().map_err(|e| Error::Config(format!("[plan] {key}: {e}")))
        };
        let targets: Vec<String> = cfg
            .parse_list("plan", "targets")?
            .ok_or_else(|| Error::Config("missing `targets` in [plan]".into()))?;
        let horizons = cfg.parse_list("plan", "horizons")?.unwrap_or_else(|| vec![1, 3]);
        let survey_lags = match cfg.parse_list::<usize>("plan", "survey_lags")?.as_deref() {
            None | Some([0, 1]) => SurveyLags::ZeroOne,
            Some([1, 2]) => SurveyLags::OneTwo,
            Some(other) => {
                return Err(Error::Config(format!(
                    "[plan] survey_lags must be `0, 1` or `1, 2`, got {other:?}"
                )))
            }
        };

        let mut specs = Vec::new();
        for e in cfg.section("plan") {
            match e.key.as_str() {
                "spec" => specs.push(e.value.parse::<ModelSpec>().map_err(|err| at_line(e.line, err))?),
                "grid" => {
                    let words: Vec<&str> = split_list(&e.value).collect();
                    match words.as_slice() {
                        ["svd"] => {
                            specs.extend(grid_cells().map(|(category, group)| ModelSpec::Svd { category, group }))
                        }
                        ["pca", rest @ ..] if rest.len() <= 1 => {
                            let factors = match rest.first() {
                                None => DEFAULT_FACTORS,
                                Some(f) => f
                                    .parse()
                                    .map_err(|_| Error::Config(format!("line {}: bad factor count {f:?}", e.line)))?,
                            };
                            specs.extend(grid_cells().map(|(category, group)| ModelSpec::Pca {
                                category,
                                group,
                                factors,
                            }));
                        }
                        _ => {
                            return Err(Error::Config(format!(
                                "line {}: grid must be `svd` or `pca [F]`, got {:?}",
                                e.line, e.value
                            )))
                        }
                    }
                }
                _ => {}
            }
        }
        let mut unique = vec![ModelSpec::Benchmark];
        for s in specs {
            if !unique.contains(&s) {
                unique.push(s);
            }
        }

        let d = McmcConfig::default();
        let mcmc = McmcConfig {
            burn: cfg.parse_or("mcmc", "burn", d.burn)?,
            retain: cfg.parse_or("mcmc", "retain", d.retain)?,
            thin: cfg.parse_or("mcmc", "thin", d.thin)?,
        };
        let p = PriorConfig::default();
        let prior = PriorConfig {
            c0: cfg.parse_or("prior", "c0", p.c0)?,
            c1: cfg.parse_or("prior", "c1", p.c1)?,
            sigma2_shape: cfg.parse_or("prior", "sigma2_shape", p.sigma2_shape)?,
            sigma2_rate: cfg.parse_or("prior", "sigma2_rate", p.sigma2_rate)?,
            global_scale: cfg.parse_or("prior", "global_scale", p.global_scale)?,
            unpenalized_variance: cfg.parse_or("prior", "unpenalized_variance", p.unpenalized_variance)?,
        };

        let plan = ExperimentPlan {
            targets,
            horizons,
            specs: unique,
            initial_window: PeriodRange::new(period("initial_start")?, period("initial_end")?),
            holdout_end: period("holdout_end")?,
            mcmc,
            prior,
            design: DesignOptions { survey_lags },
            seed: cfg.parse_or("plan", "seed", 0)?,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("plan names no targets".into()));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be a non-empty list of values >= 1".into()));
        }
        if self.initial_window.is_empty() {
            return Err(Error::Config(format!(
                "initial window {} is empty",
                self.initial_window
            )));
        }
        if self.initial_window.end >= self.holdout_end {
            return Err(Error::Config(format!(
                "initial window ends at {}, not before holdout end {}",
                self.initial_window.end, self.holdout_end
            )));
        }
        if self.origins().is_empty() {
            return Err(Error::Config(format!(
                "no forecast origins: holdout end {} minus horizon {} precedes {}",
                self.holdout_end,
                self.max_horizon(),
                self.initial_window.end
            )));
        }
        if self.mcmc.retain == 0 || self.mcmc.thin == 0 {
            return Err(Error::Config("[mcmc] retain and thin must be at least 1".into()));
        }
        self.prior.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(1)
    }

    /// Forecast origins from the end of the initial window through
    /// `holdout_end - max(horizons)`, so every horizon has a realized value.
    pub fn origins(&self) -> Vec<Period> {
        let last = self.holdout_end.offset(-(self.max_horizon() as i32));
        PeriodRange::new(self.initial_window.end, last).iter().collect()
    }
}

fn at_line(line: usize, e: Error) -> Error {
    Error::Config(format!("line {line}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::SurveyCategory;

    const PLAN: &str = "
[plan]
targets = pi
initial_start = 2002-01
initial_end = 2010-12
holdout_end = 2020-12
seed = 9
spec = svd industry Big9
spec = pca all All 3
[mcmc]
burn = 10
retain = 20
";

    #[test]
    fn parses_plan() {
        let plan = ExperimentPlan::from_config(&KvConfig::parse(PLAN).unwrap()).unwrap();
        assert_eq!(plan.horizons, [1, 3]);
        assert_eq!(plan.seed, 9);
        assert_eq!(plan.mcmc.burn, 10);
        assert_eq!(plan.specs.len(), 3);
        assert_eq!(plan.specs[0], ModelSpec::Benchmark);
        assert_eq!(
            plan.specs[1],
            ModelSpec::Svd {
                category: CategorySelector::Only(SurveyCategory::Industry),
                group: CountryGroup::Big9
            }
        );
        assert_eq!(plan.specs[2].to_string(), "pca-all-all-f3");
        assert_eq!(plan.origins().len(), 118);
        assert_eq!(plan.origins()[0].to_string(), "2010-12");
        assert_eq!(plan.origins().last().unwrap().to_string(), "2020-09");
    }

    #[test]
    fn grid_expands_every_cell() {
        let text = PLAN.replace(
            "spec = svd industry Big9\nspec = pca all All 3\n",
            "grid = svd\ngrid = pca\n",
        );
        let plan = ExperimentPlan::from_config(&KvConfig::parse(&text).unwrap()).unwrap();
        assert_eq!(plan.specs.len(), 1 + 35 + 35);
        assert!(plan.specs.contains(&"pca all All 5".parse().unwrap()));
    }

    #[test]
    fn labels_round_trip() {
        for cell in grid_cells() {
            for spec in [
                ModelSpec::Svd {
                    category: cell.0,
                    group: cell.1,
                },
                ModelSpec::Pca {
                    category: cell.0,
                    group: cell.1,
                    factors: 10,
                },
            ] {
                assert_eq!(spec.to_string().parse::<ModelSpec>().unwrap(), spec);
            }
        }
        assert!("svd industry".parse::<ModelSpec>().is_err());
        assert!("pca all All 0".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn rejects_bad_windows() {
        let swapped = PLAN.replace("holdout_end = 2020-12", "holdout_end = 2010-06");
        assert!(ExperimentPlan::from_config(&KvConfig::parse(&swapped).unwrap()).is_err());
        let zero_h = PLAN.replace("seed = 9", "seed = 9\nhorizons = 0");
        assert!(ExperimentPlan::from_config(&KvConfig::parse(&zero_h).unwrap()).is_err());
        let lags = PLAN.replace("seed = 9", "seed = 9\nsurvey_lags = 2, 3");
        assert!(ExperimentPlan::from_config(&KvConfig::parse(&lags).unwrap()).is_err());
    }
}
