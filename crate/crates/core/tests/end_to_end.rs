use ssc_core::lasso::LassoOptions;
use ssc_core::pipeline::{cluster, LambdaRule, Variant};
use ssc_core::random_model::{generate, RandomModelParams};

fn params(seed: u64, missing: usize) -> RandomModelParams {
    RandomModelParams { n: 3, d: 5, ambient_dim: 100, rho: 10.0, seed, missing, epsilon: 0.0 }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn complete_data_clusters_almost_perfectly() {
    let opts = LassoOptions::default();
    let errors: Vec<f64> = (0..20)
        .map(|seed| {
            let (_, ds) = generate(&params(seed, 0)).unwrap();
            let (_, res) = cluster(&ds, Variant::Complete, LambdaRule::Adaptive(2.0), seed, &opts).unwrap();
            assert!(res.connectivity.iter().all(|&c| c >= 0.0));
            res.clustering_error
        })
        .collect();
    assert!(median(errors.clone()) <= 0.05, "errors {errors:?}");
}

#[test]
fn moderate_missingness_still_clusters_with_projection() {
    let opts = LassoOptions::default();
    let errors: Vec<f64> = (0..5)
        .map(|seed| {
            let (_, ds) = generate(&params(100 + seed, 30)).unwrap();
            let (expr, res) = cluster(&ds, Variant::ProjectedZeroFilled, LambdaRule::Adaptive(2.0), seed, &opts).unwrap();
            assert!(expr.failures.iter().all(Option::is_none));
            res.clustering_error
        })
        .collect();
    assert!(median(errors.clone()) <= 0.05, "errors {errors:?}");
}

#[test]
fn clustering_is_deterministic() {
    let opts = LassoOptions::default();
    let (_, ds) = generate(&params(3, 20)).unwrap();
    let a = cluster(&ds, Variant::ZeroFilled, LambdaRule::Adaptive(2.0), 9, &opts).unwrap();
    let b = cluster(&ds, Variant::ZeroFilled, LambdaRule::Adaptive(2.0), 9, &opts).unwrap();
    assert_eq!(a.1.assignments, b.1.assignments);
    assert_eq!(a.0.coeff_matrix, b.0.coeff_matrix);
}
