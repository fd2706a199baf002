use std::collections::BTreeSet;

use ridgecast::data_io::{
    generate_synthetic, CategorySelector, CountryGroup, DgpSpec, PanelDataset, SurveyCategory, SurveyLayout,
};
use ridgecast::harness::{run_experiment, ExperimentPlan, ModelSpec, RunOptions, UnitKey};
use ridgecast::model::McmcConfig;
use ridgecast::{Period, PeriodRange};

fn p(y: i32, m: u32) -> Period {
    Period::new(y, m).unwrap()
}

fn small_panel(seed: u64) -> PanelDataset {
    let spec = DgpSpec {
        periods: 60,
        signals: 2,
        layout: SurveyLayout::Custom(vec![
            (SurveyCategory::Industry, CountryGroup::EA, 3),
            (SurveyCategory::Consumer, CountryGroup::Big9, 3),
        ]),
        ..DgpSpec::default()
    };
    generate_synthetic(&spec, seed).unwrap().panel
}

fn plan(specs: &[&str], initial_end: Period, holdout_end: Period) -> ExperimentPlan {
    let mut specs: Vec<ModelSpec> = specs.iter().map(|s| s.parse().unwrap()).collect();
    specs.insert(0, ModelSpec::Benchmark);
    specs.dedup();
    ExperimentPlan {
        targets: vec!["pi".into()],
        horizons: vec![1, 3],
        specs,
        initial_window: PeriodRange::new(p(2002, 1), initial_end),
        holdout_end,
        mcmc: McmcConfig {
            burn: 40,
            retain: 40,
            thin: 1,
        },
        prior: Default::default(),
        design: Default::default(),
        seed: 17,
    }
}

#[test]
fn recursive_window_has_118_origins() {
    let plan = plan(&[], p(2010, 12), p(2020, 12));
    let origins = plan.origins();
    assert_eq!(origins.len(), 118);
    assert_eq!(origins[0], p(2010, 12));
    assert_eq!(*origins.last().unwrap(), p(2020, 9));
    // The last origin still has a realized three-step value.
    assert_eq!(origins.last().unwrap().offset(3), p(2020, 12));
}

#[test]
fn benchmark_only_plan_has_no_survey_block() {
    let data = small_panel(1);
    let plan = plan(&["benchmark"], p(2004, 12), p(2005, 12));
    let res = run_experiment(&plan, &data, 2, RunOptions::default()).unwrap();
    assert!(res.failures.is_empty());
    assert_eq!(res.outcomes.len(), 2 * plan.origins().len());
    assert!(res.outcomes.iter().all(|o| o.k == 0 && !o.fallback));
}

#[test]
fn outcomes_are_complete_ordered_and_dated() {
    let data = small_panel(2);
    let plan = plan(
        &["svd all All", "svd industry EA", "pca all All 2"],
        p(2004, 12),
        p(2005, 9),
    );
    let res = run_experiment(&plan, &data, 3, RunOptions::default()).unwrap();
    assert!(res.failures.is_empty(), "{:?}", res.failures);
    let n_origins = plan.origins().len();
    assert_eq!(res.outcomes.len(), 2 * 4 * n_origins);

    let keys: Vec<(usize, usize, Period)> = res
        .outcomes
        .iter()
        .map(|o| {
            let spec_idx = plan.specs.iter().position(|s| *s == o.key.spec).unwrap();
            (o.key.horizon, spec_idx, o.key.origin)
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted, "results follow horizon, spec, origin order");

    for o in &res.outcomes {
        let realized_at = o.key.origin.offset(o.key.horizon as i32);
        let truth = data.series("pi").unwrap()[data.index_of(realized_at).unwrap()];
        assert_eq!(o.realized, Some(truth));
        assert!(o.variance > 0.0 && o.mean.is_finite());
        assert!(o.quantiles.windows(2).all(|w| w[0] <= w[1]));
    }

    // Survey models share the benchmark's core block and differ only in K.
    for h in [1, 3] {
        for origin in plan.origins() {
            let bench = res.get("pi", ModelSpec::Benchmark, h, origin).unwrap();
            for spec in &plan.specs[1..] {
                let o = res.get("pi", *spec, h, origin).unwrap();
                assert_eq!(o.t, bench.t);
                match spec {
                    ModelSpec::Pca { factors, .. } => assert_eq!((o.m, o.k), (bench.m + factors, 0)),
                    _ => assert_eq!(o.m, bench.m),
                }
            }
            let all = res
                .get(
                    "pi",
                    ModelSpec::Svd {
                        category: CategorySelector::All,
                        group: CountryGroup::All,
                    },
                    h,
                    origin,
                )
                .unwrap();
            assert_eq!(all.k, 12);
        }
    }
}

#[test]
fn expanding_window_grows_one_row_per_origin() {
    let data = small_panel(3);
    let plan = plan(&["svd all All"], p(2004, 12), p(2005, 9));
    let res = run_experiment(&plan, &data, 1, RunOptions::default()).unwrap();
    for h in [1usize, 3] {
        let ts: Vec<usize> = res
            .outcomes
            .iter()
            .filter(|o| o.key.horizon == h && o.key.spec == ModelSpec::Benchmark)
            .map(|o| o.t)
            .collect();
        // 36 rows through 2004-12, less the lead and two lags.
        assert_eq!(ts[0], 36 - h - 2);
        assert!(ts.windows(2).all(|w| w[1] == w[0] + 1));
    }
}

#[test]
fn identical_plans_give_identical_results() {
    let data = small_panel(4);
    let plan = plan(&["svd consumer Big9", "pca all All 2"], p(2004, 12), p(2005, 6));
    let a = run_experiment(&plan, &data, 1, RunOptions { keep_components: true }).unwrap();
    let b = run_experiment(&plan, &data, 4, RunOptions { keep_components: true }).unwrap();
    assert_eq!(a, b);

    let mut other = plan.clone();
    other.seed += 1;
    let c = run_experiment(&other, &data, 1, RunOptions::default()).unwrap();
    assert_ne!(a.outcomes[5].mean, c.outcomes[5].mean);
}

#[test]
fn unit_seeds_are_distinct() {
    let plan = plan(&["svd all All", "svd all EA"], p(2010, 12), p(2020, 12));
    let mut seen = BTreeSet::new();
    for &h in &plan.horizons {
        for &spec in &plan.specs {
            for origin in plan.origins() {
                let key = UnitKey {
                    target: "pi".into(),
                    spec,
                    horizon: h,
                    origin,
                };
                assert!(seen.insert(key.seed(plan.seed)));
            }
        }
    }
}

#[test]
fn post_origin_edits_do_not_move_forecasts() {
    let data = small_panel(5);
    let plan = plan(&["svd all All"], p(2004, 12), p(2005, 6));
    let base = run_experiment(&plan, &data, 2, RunOptions::default()).unwrap();
    let origin = p(2005, 1);
    let cut = data.index_of(origin).unwrap();
    let mut edited = data.clone();
    let ids: Vec<String> = data.variables().map(|(id, _)| id.to_string()).collect();
    for id in ids {
        let mut v = edited.series(&id).unwrap().to_vec();
        for x in &mut v[cut + 1..] {
            *x = -*x * 3.0 + 1.0;
        }
        edited = edited.with_series(&id, v).unwrap();
    }
    let moved = run_experiment(&plan, &edited, 2, RunOptions::default()).unwrap();
    for (a, b) in base.outcomes.iter().zip(&moved.outcomes) {
        if a.key.origin <= origin {
            assert_eq!((a.mean, a.variance, &a.quantiles), (b.mean, b.variance, &b.quantiles));
        }
    }
}
