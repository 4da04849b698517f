use filtra_bench::{dataset, prepared, quick_pipeline};

#[test]
fn fixtures_are_deterministic() {
    let a = dataset(40, 3);
    let b = dataset(40, 3);
    assert_eq!(a.response, b.response);
    assert_eq!(a.curves.n_predictors(), 10);
    assert_eq!(prepared(40, 3).curves.n_samples(), 40);
    assert_eq!(quick_pipeline(4).mccv.n_splits, 4);
}
