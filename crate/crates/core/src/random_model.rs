//! Fully random union-of-subspaces model and Monte-Carlo checks of the
//! concentration bounds it relies on.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{apply_patterns, orthonormal_range, DataError, MaskedDataset, ObservationPattern, SubspaceArrangement};
use crate::geometry::{inradius, InradiusMethod};
use crate::rng;

/// Densities below this are outside the regime the inradius bound speaks to.
pub const RHO_REGIME: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("rho * d = {0} is not an integer")]
    InvalidDensity(f64),
    #[error("m = {missing} must be below D - d = {limit}")]
    TooManyMissing { missing: usize, limit: usize },
    #[error("need 0 < d < D and n > 0, got n = {n}, d = {d}, D = {ambient}")]
    InvalidShape { n: usize, d: usize, ambient: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomModelParams {
    /// Number of subspaces.
    pub n: usize,
    /// Common subspace dimension.
    pub d: usize,
    pub ambient_dim: usize,
    /// Point density; each subspace gets `ρd + 1` points.
    pub rho: f64,
    pub seed: u64,
    /// Hidden entries per point.
    pub missing: usize,
    pub epsilon: f64,
}

impl RandomModelParams {
    pub fn points_per_subspace(&self) -> Result<usize, ModelError> {
        let rd = self.rho * self.d as f64;
        let rounded = rd.round();
        if !(rd > 0.0) || (rd - rounded).abs() > 1e-9 * rd.max(1.0) {
            return Err(ModelError::InvalidDensity(rd));
        }
        Ok(rounded as usize + 1)
    }

    /// Total number of points `n(ρd + 1)`.
    pub fn total_points(&self) -> Result<usize, ModelError> {
        Ok(self.n * self.points_per_subspace()?)
    }

    pub fn alpha(&self) -> f64 {
        alpha(self.d, self.rho)
    }

    pub fn beta(&self) -> Result<f64, ModelError> {
        Ok(beta(self.total_points()?, self.ambient_dim))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (n, d, ambient) = (self.n, self.d, self.ambient_dim);
        if n == 0 || d == 0 || d >= ambient {
            return Err(ModelError::InvalidShape { n, d, ambient });
        }
        if self.missing >= ambient - d {
            return Err(ModelError::TooManyMissing { missing: self.missing, limit: ambient - d });
        }
        self.points_per_subspace().map(|_| ())
    }
}

/// `sqrt(ln ρ / (16 d))`.
pub fn alpha(d: usize, rho: f64) -> f64 {
    (rho.ln() / (16.0 * d as f64)).sqrt()
}

/// `sqrt(6 ln N / D)`.
pub fn beta(total_points: usize, ambient_dim: usize) -> f64 {
    (6.0 * (total_points as f64).ln() / ambient_dim as f64).sqrt()
}

fn gaussian(r: &mut rng::Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

/// Uniform point on the unit sphere of `R^dim`.
pub fn sphere_point(r: &mut rng::Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// Draws an arrangement and a masked dataset. Points are grouped by subspace;
/// the whole draw is a function of `params` alone.
pub fn generate(params: &RandomModelParams) -> Result<(SubspaceArrangement, MaskedDataset), ModelError> {
    params.validate()?;
    let per = params.points_per_subspace()?;
    let (n, d, dim) = (params.n, params.d, params.ambient_dim);
    let mut r = rng::stream(params.seed, 0);
    let bases: Vec<DMatrix<f64>> = (0..n).map(|_| orthonormal_range(&gaussian(&mut r, dim, d))).collect();
    let mut points = DMatrix::zeros(dim, n * per);
    let mut labels = Vec::with_capacity(n * per);
    for (i, b) in bases.iter().enumerate() {
        for k in 0..per {
            let p = b * sphere_point(&mut r, d);
            // renormalize against rounding in the basis product
            points.set_column(i * per + k, &(&p / p.norm()));
            labels.push(i);
        }
    }
    let patterns = (0..n * per)
        .map(|_| ObservationPattern::with_missing(dim, &sample(&mut r, dim, params.missing).into_vec()))
        .collect();
    let arrangement = SubspaceArrangement::new(dim, bases)?;
    let dataset = apply_patterns(points, labels, patterns)?;
    Ok((arrangement, dataset))
}

/// One Monte-Carlo check of an exponential tail bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub lemma: &'static str,
    pub params: String,
    pub trials: usize,
    pub exceedances: usize,
    pub rate: f64,
    pub bound: f64,
    /// Sample mean of the monitored statistic, where one is reported.
    pub mean: Option<f64>,
    /// False when the configuration is outside the bound's hypotheses.
    pub regime_met: bool,
    /// `rate ≤ p + 3·sqrt(p(1 − p)/trials)` with `p = min(bound, 1)`.
    pub passed: bool,
}

impl ValidationRow {
    pub const CSV_HEADER: &'static str = "lemma,params,trials,exceedances,rate,bound,mean,regime_met,verdict";

    fn new(
        lemma: &'static str,
        params: String,
        trials: usize,
        exceedances: usize,
        bound: f64,
        mean: Option<f64>,
        regime_met: bool,
    ) -> Self {
        let rate = if trials == 0 { 0.0 } else { exceedances as f64 / trials as f64 };
        let p = bound.min(1.0);
        let allowance = if trials == 0 { 0.0 } else { 3.0 * (p * (1.0 - p) / trials as f64).sqrt() };
        Self { lemma, params, trials, exceedances, rate, bound, mean, regime_met, passed: rate <= p + allowance }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{},{},{}",
            self.lemma,
            self.params,
            self.trials,
            self.exceedances,
            self.rate,
            self.bound,
            self.mean.map_or("NaN".to_string(), |m| format!("{m:e}")),
            self.regime_met,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

fn count_trials(trials: usize, f: impl Fn(u64) -> bool + Sync) -> usize {
    (0..trials as u64).into_par_iter().filter(|&t| f(t)).count()
}

/// Fraction of trials in which `ρd` uniform points on the unit sphere of
/// `R^d` have inradius at most `α`, against `exp(−√ρ d)`.
pub fn validate_inradius_bound(trials: usize, d: usize, rho: f64, seed: u64) -> ValidationRow {
    let points = (rho * d as f64).round() as usize;
    let a = alpha(d, rho);
    let method = if d <= 2 { InradiusMethod::Exact2D } else { InradiusMethod::Polytope };
    let failures = count_trials(trials, |t| {
        let mut r = rng::stream(seed, t);
        let y = DMatrix::from_columns(&(0..points).map(|_| sphere_point(&mut r, d)).collect::<Vec<_>>());
        let value = match inradius(&y, method) {
            Ok(v) => v.value,
            // too many vertices; a sampled value bounds r from above, so a
            // failure it reports is genuine but some may go unseen
            Err(_) => inradius(&y, InradiusMethod::Sampled { seed: t }).map_or(0.0, |v| v.value),
        };
        value <= a
    });
    let bound = (-(rho.sqrt()) * d as f64).exp();
    if rho < RHO_REGIME {
        log::warn!("rho = {rho} is below {RHO_REGIME}: inradius bound hypothesis regime not met");
    }
    ValidationRow::new("inradius", format!("d={d};rho={rho}"), trials, failures, bound, None, rho >= RHO_REGIME)
}

/// Fraction of independent uniform pairs `x, v` on the unit sphere of `R^D`
/// with `|xᵀv| ≥ ε`, against `2exp(−Dε²/2)`.
pub fn validate_inner_product_tail(trials: usize, ambient_dim: usize, eps: f64, seed: u64) -> ValidationRow {
    let hits = count_trials(trials, |t| {
        let mut r = rng::stream(seed, t);
        let x = sphere_point(&mut r, ambient_dim);
        let v = sphere_point(&mut r, ambient_dim);
        x.dot(&v).abs() >= eps
    });
    let bound = 2.0 * (-(ambient_dim as f64) * eps * eps / 2.0).exp();
    ValidationRow::new("inner_product", format!("D={ambient_dim};eps={eps}"), trials, hits, bound, None, true)
}

/// Fraction of uniform `x` on the unit sphere of `R^D` whose projection onto
/// a fixed `d`-dimensional coordinate subspace has norm outside
/// `√(d/D) ± ε`, against `2exp(−Dε²/2)`. Also reports the mean norm.
pub fn validate_projection_norm(trials: usize, ambient_dim: usize, d: usize, eps: f64, seed: u64) -> ValidationRow {
    let center = (d as f64 / ambient_dim as f64).sqrt();
    let norms: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, t);
            let x = sphere_point(&mut r, ambient_dim);
            x.rows(0, d).norm()
        })
        .collect();
    let outside = norms.iter().filter(|&&v| (v - center).abs() > eps).count();
    let mean = if trials == 0 { f64::NAN } else { norms.iter().sum::<f64>() / trials as f64 };
    let bound = 2.0 * (-(ambient_dim as f64) * eps * eps / 2.0).exp();
    ValidationRow::new(
        "projection_norm",
        format!("D={ambient_dim};d={d};eps={eps}"),
        trials,
        outside,
        bound,
        Some(mean),
        d <= ambient_dim,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(missing: usize) -> RandomModelParams {
        RandomModelParams { n: 3, d: 5, ambient_dim: 100, rho: 10.0, seed: 7, missing, epsilon: 0.001 }
    }

    #[test]
    fn construction_counts() {
        let (arr, ds) = generate(&params(10)).unwrap();
        assert_eq!(ds.len(), 153);
        assert_eq!(arr.dims(), vec![5, 5, 5]);
        for label in 0..3 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == label).count(), 51);
        }
        assert_eq!(ds.missing_per_point(), 10);
        for j in 0..ds.len() {
            let x = ds.points().column(j);
            assert!((x.norm() - 1.0).abs() <= 1e-12);
            let b = arr.basis(ds.labels()[j]);
            assert!((b * (b.transpose() * x) - x).norm() <= 1e-12);
        }
    }

    #[test]
    fn alpha_and_beta_values() {
        let p = params(0);
        assert!((p.alpha() - 0.1696535106103778).abs() <= 1e-15);
        assert!((p.beta().unwrap() - 0.5493871815792084).abs() <= 1e-15);
        assert!((alpha(2, 50.0) - 0.34964370281706714).abs() <= 1e-15);
    }

    #[test]
    fn generation_is_deterministic() {
        let (a1, d1) = generate(&params(20)).unwrap();
        let (a2, d2) = generate(&params(20)).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(a1.bases(), a2.bases());
        let (_, d3) = generate(&RandomModelParams { seed: 8, ..params(20) }).unwrap();
        assert_ne!(d1.points(), d3.points());
    }

    #[test]
    fn parameter_errors() {
        let bad_density = RandomModelParams { rho: 2.5, d: 3, ..params(0) };
        assert!(matches!(generate(&bad_density), Err(ModelError::InvalidDensity(_))));
        assert!(matches!(generate(&params(95)), Err(ModelError::TooManyMissing { missing: 95, limit: 95 })));
        assert!(matches!(
            generate(&RandomModelParams { d: 100, ..params(0) }),
            Err(ModelError::InvalidShape { .. })
        ));
    }

    #[test]
    fn coordinates_are_centered() {
        let trials: u64 = 10;
        let n_points: u64 = 153;
        let mut sum = DVector::zeros(100);
        for s in 0..trials {
            let (_, ds) = generate(&RandomModelParams { seed: 100 + s, ..params(0) }).unwrap();
            sum += ds.points().column_sum();
        }
        let mean = sum / (trials * n_points) as f64;
        assert!(mean.amax() <= 4.0 / ((trials * n_points) as f64).sqrt());
    }

    #[test]
    fn inradius_validator_paths() {
        let row = validate_inradius_bound(200, 2, 50.0, 1);
        assert_eq!(row.exceedances, 0);
        assert!(row.passed && row.regime_met);
        assert!((row.bound - 7.213541526967138e-07).abs() <= 1e-20);
        let line = validate_inradius_bound(20, 1, 10.0, 2);
        assert_eq!(line.exceedances, 0);
        let low = validate_inradius_bound(20, 2, 2.0, 3);
        assert!(!low.regime_met);
    }

    #[test]
    fn inner_product_validator_paths() {
        let row = validate_inner_product_tail(10_000, 100, 0.5, 4);
        assert_eq!(row.exceedances, 0);
        assert!((row.bound - 7.453306344157342e-06).abs() <= 1e-18);
        let zero = validate_inner_product_tail(100, 10, 0.0, 5);
        assert_eq!(zero.rate, 1.0);
        assert_eq!(zero.bound, 2.0);
        assert!(zero.passed);
        let plane = validate_inner_product_tail(1000, 2, 1.0, 6);
        assert_eq!(plane.exceedances, 0);
    }

    #[test]
    fn projection_validator_paths() {
        let full = validate_projection_norm(100, 10, 10, 1e-9, 7);
        assert_eq!(full.exceedances, 0);
        let row = validate_projection_norm(10_000, 100, 25, 0.2, 8);
        assert!((row.bound - 0.2706705664732254).abs() <= 1e-15);
        assert!(row.passed);
        assert!((row.mean.unwrap() - 0.5).abs() <= 0.02);
        assert_eq!(row.csv_row().split(',').count(), ValidationRow::CSV_HEADER.split(',').count());
    }
}
