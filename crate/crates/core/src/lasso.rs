//! Lasso self-expression solver with duality-gap certification.
//!
//! Primal: `min_c ‖c‖₁ + (λ/2)‖y − Y c‖²`.
//! Dual:   `max_v ⟨y, v⟩ − ‖v‖²/(2λ)  s.t. ‖Yᵀv‖_∞ ≤ 1`.
//!
//! The dual is strongly concave, so its maximizer is unique and equals `λ e*`
//! for the optimal residual `e* = y − Y c*`. The solver runs proximal
//! coordinate descent with an active-set inner loop, polishes the iterate by
//! solving the stationarity system on the current sign pattern, and stops on
//! the duality gap measured against the rescaled dual point `λ e`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LassoError {
    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("dictionary has no columns")]
    EmptyDictionary,
    #[error("target has length {target}, dictionary has {rows} rows")]
    DimensionMismatch { target: usize, rows: usize },
    #[error("no convergence after {} iterations (gap {:e})", best.iterations, best.gap)]
    NonConvergence { best: Box<LassoSolution> },
    #[error("dual point violates feasibility: ‖Yᵀv‖_∞ = {feasibility}")]
    InfeasibleDual { feasibility: f64 },
    #[error("bound requires lambda > 1/zeta = {threshold}, got {lambda}")]
    NotApplicable { lambda: f64, threshold: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    /// Gap tolerance, relative to `max(1, primal objective)`.
    pub tol: f64,
    /// Cap on coordinate-descent sweeps (full and active-set combined).
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coeffs: DVector<f64>,
    /// `e = y − Y c`, recomputed from `coeffs`.
    pub residual: DVector<f64>,
    /// `‖c‖₁ + (λ/2)‖e‖²`.
    pub objective: f64,
    pub lambda: f64,
    /// Primal objective minus the dual objective of the rescaled point `λe`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LassoSolution {
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub v: DVector<f64>,
    /// `‖Yᵀv‖_∞`.
    pub feasibility: f64,
    pub dual_objective: f64,
    /// Primal objective minus `dual_objective`.
    pub gap: f64,
}

/// Soft-thresholding; ties at `|x| = t` go to zero.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn primal_objective(coeffs: &DVector<f64>, residual: &DVector<f64>, lambda: f64) -> f64 {
    coeffs.lp_norm(1) + 0.5 * lambda * residual.norm_squared()
}

pub fn dual_objective(target: &DVector<f64>, v: &DVector<f64>, lambda: f64) -> f64 {
    target.dot(v) - v.norm_squared() / (2.0 * lambda)
}

/// Duality gap at `coeffs`, using `λe` scaled back into the dual feasible set.
fn gap_at(dict: &DMatrix<f64>, target: &DVector<f64>, coeffs: &DVector<f64>, lambda: f64) -> (f64, DVector<f64>, f64) {
    let residual = target - dict * coeffs;
    let primal = primal_objective(coeffs, &residual, lambda);
    let mut v = &residual * lambda;
    let feas = (dict.transpose() * &v).amax();
    if feas > 1.0 {
        v /= feas;
    }
    (primal - dual_objective(target, &v, lambda), residual, primal)
}

fn check_inputs(dict: &DMatrix<f64>, target: &DVector<f64>, lambda: f64) -> Result<(), LassoError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LassoError::InvalidLambda(lambda));
    }
    if dict.ncols() == 0 {
        return Err(LassoError::EmptyDictionary);
    }
    if dict.nrows() != target.len() {
        return Err(LassoError::DimensionMismatch { target: target.len(), rows: dict.nrows() });
    }
    Ok(())
}

struct Solver<'a> {
    dict: &'a DMatrix<f64>,
    target: &'a DVector<f64>,
    lambda: f64,
    col_sq: Vec<f64>,
    coeffs: DVector<f64>,
    residual: DVector<f64>,
    sweeps: usize,
}

impl<'a> Solver<'a> {
    fn new(dict: &'a DMatrix<f64>, target: &'a DVector<f64>, lambda: f64) -> Self {
        let col_sq = dict.column_iter().map(|c| c.norm_squared()).collect();
        Self {
            dict,
            target,
            lambda,
            col_sq,
            coeffs: DVector::zeros(dict.ncols()),
            residual: target.clone(),
            sweeps: 0,
        }
    }

    fn reset(&mut self) {
        self.coeffs.fill(0.0);
        self.residual.copy_from(self.target);
    }

    /// One pass over `indices`; returns the largest scaled coefficient change.
    fn sweep(&mut self, indices: impl Iterator<Item = usize>) -> f64 {
        let thresh = 1.0 / self.lambda;
        let mut max_delta: f64 = 0.0;
        for k in indices {
            let a = self.col_sq[k];
            if a == 0.0 {
                continue;
            }
            let col = self.dict.column(k);
            let old = self.coeffs[k];
            let z = col.dot(&self.residual) + a * old;
            let new = soft_threshold(z, thresh) / a;
            let delta = new - old;
            if delta != 0.0 {
                self.residual.axpy(-delta, &col, 1.0);
                self.coeffs[k] = new;
                max_delta = max_delta.max(delta.abs() * a.sqrt());
            }
        }
        self.sweeps += 1;
        max_delta
    }

    fn active(&self) -> Vec<usize> {
        (0..self.coeffs.len()).filter(|&k| self.coeffs[k] != 0.0).collect()
    }

    /// Solves `Y_Sᵀ Y_S c_S = Y_Sᵀ y − s/λ` on the current support and sign
    /// pattern. Returns the candidate only if it reproduces those signs.
    fn polish(&self) -> Option<DVector<f64>> {
        let support = self.active();
        if support.is_empty() {
            return None;
        }
        let sub = self.dict.select_columns(support.iter());
        let gram = sub.transpose() * &sub;
        let rhs = sub.transpose() * self.target
            - DVector::from_iterator(support.len(), support.iter().map(|&k| self.coeffs[k].signum() / self.lambda));
        let sol = gram.cholesky()?.solve(&rhs);
        let mut full = DVector::zeros(self.coeffs.len());
        for (i, &k) in support.iter().enumerate() {
            if sol[i] == 0.0 || sol[i].signum() != self.coeffs[k].signum() || !sol[i].is_finite() {
                return None;
            }
            full[k] = sol[i];
        }
        Some(full)
    }

    fn finish(&self, coeffs: DVector<f64>, converged: bool) -> LassoSolution {
        let (gap, residual, objective) = gap_at(self.dict, self.target, &coeffs, self.lambda);
        LassoSolution { coeffs, residual, objective, lambda: self.lambda, gap, iterations: self.sweeps, converged }
    }
}

/// Solves the Lasso self-expression problem for `target` over the columns of
/// `dict`. On hitting the iteration cap, returns the best iterate inside
/// [`LassoError::NonConvergence`].
pub fn solve_lasso(
    dict: &DMatrix<f64>,
    target: &DVector<f64>,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<LassoSolution, LassoError> {
    check_inputs(dict, target, lambda)?;
    let mut s = Solver::new(dict, target, lambda);

    // KKT at zero: c = 0 is optimal iff λ‖Yᵀy‖_∞ ≤ 1.
    let zeta = (dict.transpose() * target).amax();
    if lambda * zeta <= 1.0 {
        return Ok(s.finish(DVector::zeros(dict.ncols()), true));
    }

    const GAP_CHECK: usize = 10;
    const STALL_SWEEPS: usize = 5_000;
    let n = dict.ncols();
    let mut best = s.coeffs.clone();
    let mut best_gap = f64::INFINITY;
    let mut last_improvement = 0usize;
    let mut restarted = false;

    while s.sweeps < opts.max_iter {
        s.sweep(0..n);
        // inner active-set passes until the support stops moving
        let active = s.active();
        for _ in 0..GAP_CHECK {
            if s.sweep(active.iter().copied()) <= 1e-15 {
                break;
            }
        }

        let (mut gap, _, primal) = gap_at(dict, target, &s.coeffs, lambda);
        if gap < 1e-3 * primal.max(1.0) {
            if let Some(candidate) = s.polish() {
                let (cand_gap, cand_res, _) = gap_at(dict, target, &candidate, lambda);
                if cand_gap <= gap {
                    s.coeffs = candidate;
                    s.residual = cand_res;
                    gap = cand_gap;
                }
            }
        }
        if gap < best_gap {
            if gap < best_gap * (1.0 - 1e-6) {
                last_improvement = s.sweeps;
            }
            best_gap = gap;
            best.copy_from(&s.coeffs);
        }
        if gap <= opts.tol * primal.max(1.0) {
            return Ok(s.finish(s.coeffs.clone(), true));
        }
        if s.sweeps - last_improvement > STALL_SWEEPS {
            if restarted {
                break;
            }
            log::debug!("lasso stalled at gap {gap:e}; restarting from zero");
            restarted = true;
            s.reset();
            last_improvement = s.sweeps;
        }
    }
    let sol = s.finish(best, false);
    Err(LassoError::NonConvergence { best: Box::new(sol) })
}

/// Recovers the unique dual solution `v* = λ e*` from a primal solution.
pub fn recover_dual(
    dict: &DMatrix<f64>,
    target: &DVector<f64>,
    primal: &LassoSolution,
) -> Result<DualSolution, LassoError> {
    let v = &primal.residual * primal.lambda;
    let feasibility = if dict.ncols() == 0 { 0.0 } else { (dict.transpose() * &v).amax() };
    if feasibility > 1.0 + 1e-6 {
        return Err(LassoError::InfeasibleDual { feasibility });
    }
    let dual_objective = dual_objective(target, &v, primal.lambda);
    Ok(DualSolution { gap: primal.objective - dual_objective, v, feasibility, dual_objective })
}

/// Two-sided bound on `‖v*‖₂` in terms of `ζ = ‖Yᵀy‖_∞` and `η = ‖y‖₂`:
/// `η/ζ ≤ ‖v*‖₂ ≤ η(2λ − 1/ζ)`, valid for `λ > 1/ζ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualNormBounds {
    pub lower: f64,
    pub upper: f64,
    pub norm: f64,
    /// `norm − lower`.
    pub lower_slack: f64,
    /// `upper − norm`.
    pub upper_slack: f64,
    /// Both slacks ≥ −1e-8.
    pub holds: bool,
}

pub fn check_dual_norm_bounds(
    dual: &DualSolution,
    zeta: f64,
    eta: f64,
    lambda: f64,
) -> Result<DualNormBounds, LassoError> {
    let threshold = 1.0 / zeta;
    if !(lambda > threshold) {
        return Err(LassoError::NotApplicable { lambda, threshold });
    }
    let lower = eta / zeta;
    let upper = eta * (2.0 * lambda - threshold);
    let norm = dual.v.norm();
    let lower_slack = norm - lower;
    let upper_slack = upper - norm;
    Ok(DualNormBounds {
        lower,
        upper,
        norm,
        lower_slack,
        upper_slack,
        holds: lower_slack >= -1e-8 && upper_slack >= -1e-8,
    })
}
