use mlamc::montecarlo::{run_monte_carlo, subsample, Dataset, SplitStrategy};
use mlamc::surrogate::{
    grid_search_cv, predicted_pf, svc_grid, train, HyperParams, ModelKind, RfParams, SvcParams,
};
use mlamc::{FieldStatistics, McConfig, SlopeGeometry};

fn campaign(mu: f64, cov: f64, xi: f64, n: usize, seed: u64) -> Dataset {
    run_monte_carlo(&McConfig::new(FieldStatistics::new(mu, cov, xi, 1.0).unwrap(), SlopeGeometry::default(), n, seed)).unwrap()
}

#[test]
fn low_heterogeneity_classifiers_reach_085() {
    let ds = campaign(18.6, 0.1, 1.0, 1000, 31);
    let (tr, rest) = subsample(&ds.view(), 500, SplitStrategy::Stratified, 1).unwrap();
    let rf = train(&tr, &ModelKind::Rf.default_params(), 2).unwrap();
    let acc = rf.evaluate(&rest).unwrap().acc;
    assert!(acc >= 0.85, "rf {acc}");

    let grid = svc_grid(&[1.0], &[1e-4, 1e-3, 1e-2], SvcParams::default());
    let cv = grid_search_cv(ModelKind::Svc, &grid, 5, &tr, 3).unwrap();
    let svc = train(&tr, &cv.best_params(), 4).unwrap();
    let acc = svc.evaluate(&rest).unwrap().acc;
    assert!(acc >= 0.85, "svc {acc} with {:?}", cv.best_params());
}

#[test]
fn svc_grid_over_wide_ranges_spreads_by_twenty_points() {
    let ds = campaign(20.5, 0.3, 6.0, 400, 32);
    let pf = ds.pf().unwrap().pf;
    assert!((30.0..=70.0).contains(&pf), "{pf}");
    let (tr, _) = subsample(&ds.view(), 200, SplitStrategy::Stratified, 5).unwrap();
    let grid = svc_grid(&[1e-2, 1.0, 1e2, 1e5], &[1e-4, 1e-2, 1.0, 1e3], SvcParams::default());
    let cv = grid_search_cv(ModelKind::Svc, &grid, 5, &tr, 6).unwrap();
    assert!(cv.spread() >= 0.2, "spread {}", cv.spread());
}

#[test]
fn forest_trained_on_everything_reproduces_the_campaign_pf() {
    let ds = campaign(22.3, 0.3, 6.0, 400, 33);
    let view = ds.view();
    let rf = train(&view, &HyperParams::Rf(RfParams { n_estimators: 200, bootstrap: false, ..RfParams::default() }), 7).unwrap();
    let pf = predicted_pf(&rf, &view).unwrap();
    let full = ds.pf().unwrap().pf;
    assert!((pf - full).abs() <= 1.0, "{pf} vs {full}");
}
