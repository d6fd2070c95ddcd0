//! End-to-end clustering: per-point self-expression, affinity, spectral
//! clustering and quality metrics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{DataError, MaskedDataset, ViewTag};
use crate::lasso::{solve_lasso, LassoError, LassoOptions};
use crate::rng;

/// Coefficients below `SP_RELATIVE · ‖c‖_∞` are treated as zeros.
pub const SP_RELATIVE: f64 = 1e-6;
/// k-means restarts in the spectral step.
pub const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("lambda rule parameter must be positive and finite (adaptive needs a > 1), got {0}")]
    InvalidRule(f64),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Lasso(#[from] LassoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Complete,
    ZeroFilled,
    ProjectedZeroFilled,
}

impl Variant {
    pub fn view_tag(self) -> ViewTag {
        match self {
            Self::Complete => ViewTag::Complete,
            Self::ZeroFilled => ViewTag::ZeroFilled,
            Self::ProjectedZeroFilled => ViewTag::ProjectedZeroFilled,
        }
    }

    pub fn as_str(self) -> &'static str {
        self.view_tag().as_str()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "complete" => Ok(Self::Complete),
            "zf" => Ok(Self::ZeroFilled),
            "pzf" => Ok(Self::ProjectedZeroFilled),
            other => Err(format!("unknown variant `{other}` (expected complete, zf or pzf)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Fixed(f64),
    /// `λ_j = a / ‖Dᵀy‖_∞` for the column's dictionary `D` and target `y`.
    Adaptive(f64),
}

impl LambdaRule {
    fn validate(self) -> Result<(), PipelineError> {
        match self {
            Self::Fixed(l) if l > 0.0 && l.is_finite() => Ok(()),
            Self::Adaptive(a) if a > 1.0 && a.is_finite() => Ok(()),
            Self::Fixed(x) | Self::Adaptive(x) => Err(PipelineError::InvalidRule(x)),
        }
    }
}

/// Solution of one column: full-length coefficients with a zero at the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSolve {
    pub coeffs: DVector<f64>,
    pub lambda: f64,
    pub sp_flag: bool,
    /// Set when the solver failed; `coeffs` then holds its best iterate.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfExpression {
    /// `N × N`, zero diagonal; column j expresses point j.
    pub coeff_matrix: DMatrix<f64>,
    pub variant: Variant,
    pub lambdas: Vec<f64>,
    pub sp_flags: Vec<bool>,
    pub failures: Vec<Option<String>>,
}

/// True iff the column is nonzero and every coefficient above the relative
/// threshold sits on a point with the anchor's label.
pub fn sp_flag(coeffs: &DVector<f64>, labels: &[usize], anchor: usize) -> bool {
    let top = coeffs.amax();
    if top == 0.0 {
        return false;
    }
    let thresh = SP_RELATIVE * top;
    coeffs.iter().enumerate().all(|(k, &c)| c.abs() <= thresh || labels[k] == labels[anchor])
}

/// Solves column `anchor` against all other columns of its view.
pub fn solve_column(
    dataset: &MaskedDataset,
    variant: Variant,
    anchor: usize,
    rule: LambdaRule,
    opts: &LassoOptions,
) -> Result<ColumnSolve, PipelineError> {
    let n = dataset.len();
    if n < 2 {
        return Err(PipelineError::TooFewPoints(n));
    }
    rule.validate()?;
    let view = dataset.view(variant.view_tag(), anchor)?;
    let others: Vec<usize> = (0..n).filter(|&k| k != anchor).collect();
    let dict = view.matrix.select_columns(others.iter());
    let target = view.column(anchor);
    let lambda = match rule {
        LambdaRule::Fixed(l) => l,
        LambdaRule::Adaptive(a) => a / (dict.transpose() * &target).amax(),
    };
    let mut coeffs = DVector::zeros(n);
    if !lambda.is_finite() {
        return Ok(ColumnSolve {
            coeffs,
            lambda,
            sp_flag: false,
            failure: Some("anchor is uncorrelated with every other point".into()),
        });
    }
    let (sol, failure) = match solve_lasso(&dict, &target, lambda, opts) {
        Ok(sol) => (sol, None),
        Err(LassoError::NonConvergence { best }) => {
            let msg = format!("no convergence (gap {:e})", best.gap);
            (*best, Some(msg))
        }
        Err(e) => return Err(e.into()),
    };
    for (i, &k) in others.iter().enumerate() {
        coeffs[k] = sol.coeffs[i];
    }
    let flag = failure.is_none() && sp_flag(&coeffs, dataset.labels(), anchor);
    Ok(ColumnSolve { coeffs, lambda, sp_flag: flag, failure })
}

/// Solves every column in parallel. Solver failures are recorded per column.
pub fn self_express(
    dataset: &MaskedDataset,
    variant: Variant,
    rule: LambdaRule,
    opts: &LassoOptions,
) -> Result<SelfExpression, PipelineError> {
    let n = dataset.len();
    if n < 2 {
        return Err(PipelineError::TooFewPoints(n));
    }
    rule.validate()?;
    let columns: Vec<ColumnSolve> =
        (0..n).into_par_iter().map(|j| solve_column(dataset, variant, j, rule, opts)).collect::<Result<_, _>>()?;
    let mut coeff_matrix = DMatrix::zeros(n, n);
    for (j, c) in columns.iter().enumerate() {
        coeff_matrix.set_column(j, &c.coeffs);
        if let Some(msg) = &c.failure {
            log::debug!("column {j}: {msg}");
        }
    }
    Ok(SelfExpression {
        coeff_matrix,
        variant,
        lambdas: columns.iter().map(|c| c.lambda).collect(),
        sp_flags: columns.iter().map(|c| c.sp_flag).collect(),
        failures: columns.into_iter().map(|c| c.failure).collect(),
    })
}

pub fn sp_rate(expr: &SelfExpression) -> f64 {
    if expr.sp_flags.is_empty() {
        return 0.0;
    }
    expr.sp_flags.iter().filter(|&&f| f).count() as f64 / expr.sp_flags.len() as f64
}

/// `W = |C| + |C|ᵀ` with a zero diagonal.
pub fn build_affinity(coeffs: &DMatrix<f64>) -> DMatrix<f64> {
    let a = coeffs.abs();
    let mut w = &a + a.transpose();
    w.fill_diagonal(0.0);
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectral {
    pub assignments: Vec<usize>,
    /// Points with zero degree, assigned by the nearest-neighbour fallback.
    pub isolated: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from a k-means++ seeding; returns (labels, inertia).
fn kmeans_once(rows: &[Vec<f64>], k: usize, r: &mut rng::Rng) -> (Vec<usize>, f64) {
    let n = rows.len();
    let mut centers: Vec<Vec<f64>> = vec![rows[r.random_range(0..n)].clone()];
    let mut dist: Vec<f64> = rows.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = r.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            r.random_range(0..n)
        };
        centers.push(rows[next].clone());
        for (i, x) in rows.iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(x, &centers[centers.len() - 1]));
        }
    }
    let dim = rows[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, x) in rows.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(x, &centers[a]).total_cmp(&sq_dist(x, &centers[b])))
                .unwrap_or(0);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = rows.iter().zip(&labels).map(|(x, &l)| sq_dist(x, &centers[l])).sum();
    (labels, inertia)
}

/// Normalized spectral clustering of the affinity `w` into `n_clusters`
/// groups. Zero-degree points are assigned the label of the most correlated
/// connected column of `points` when given, and label 0 otherwise.
pub fn spectral_cluster(w: &DMatrix<f64>, n_clusters: usize, seed: u64, points: Option<&DMatrix<f64>>) -> Spectral {
    let n = w.nrows();
    let degree: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    let connected: Vec<usize> = (0..n).filter(|&i| degree[i] > 0.0).collect();
    let isolated: Vec<usize> = (0..n).filter(|&i| degree[i] <= 0.0).collect();
    let mut assignments = vec![0usize; n];
    let k = n_clusters.max(1);

    if !connected.is_empty() {
        let m = connected.len();
        // D^{-1/2} W D^{-1/2}: its top eigenvectors are the Laplacian's bottom ones
        let inv_sqrt: Vec<f64> = connected.iter().map(|&i| 1.0 / degree[i].sqrt()).collect();
        let a = DMatrix::from_fn(m, m, |i, j| w[(connected[i], connected[j])] * inv_sqrt[i] * inv_sqrt[j]);
        let eig = SymmetricEigen::new(a);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        let kk = k.min(m);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let row: Vec<f64> = order[..kk].iter().map(|&c| eig.eigenvectors[(i, c)]).collect();
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter().map(|v| v / norm).collect()
                } else {
                    row
                }
            })
            .collect();
        let mut best: Option<(Vec<usize>, f64)> = None;
        for restart in 0..KMEANS_RESTARTS as u64 {
            let mut r = rng::stream(seed, restart);
            let (labels, inertia) = kmeans_once(&rows, kk, &mut r);
            if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
                best = Some((labels, inertia));
            }
        }
        let (labels, _) = best.expect("at least one restart");
        for (i, &c) in connected.iter().enumerate() {
            assignments[c] = labels[i];
        }
        if let Some(x) = points {
            for &i in &isolated {
                let xi = x.column(i);
                let nearest = connected
                    .iter()
                    .copied()
                    .max_by(|&a, &b| xi.dot(&x.column(a)).abs().total_cmp(&xi.dot(&x.column(b)).abs()).then(b.cmp(&a)))
                    .expect("connected is nonempty");
                assignments[i] = assignments[nearest];
            }
        }
    }
    if !isolated.is_empty() {
        log::debug!("{} zero-degree points assigned by fallback", isolated.len());
    }
    Spectral { assignments, isolated }
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method).
/// Returns `assign[row] = column`.
pub fn max_weight_matching(weights: &DMatrix<f64>) -> Vec<usize> {
    let n = weights.nrows();
    assert_eq!(n, weights.ncols(), "matching needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    let top = weights.max();
    // minimize cost = top − weight; 1-based potentials as in the classic form
    let cost = |i: usize, j: usize| top - weights[(i - 1, j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Misclassification rate under the best matching of predicted to true labels.
pub fn clustering_error(truth: &[usize], predicted: &[usize]) -> f64 {
    assert_eq!(truth.len(), predicted.len());
    if truth.is_empty() {
        return 0.0;
    }
    let k = truth.iter().chain(predicted).max().map_or(0, |m| m + 1);
    let mut confusion = DMatrix::zeros(k, k);
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[(t, p)] += 1.0;
    }
    let assign = max_weight_matching(&confusion);
    let matched: f64 = assign.iter().enumerate().map(|(t, &p)| confusion[(t, p)]).sum();
    1.0 - matched / truth.len() as f64
}

/// Second-smallest eigenvalue of the Laplacian of each true cluster's induced
/// subgraph; zero for clusters with fewer than two points.
pub fn connectivity(w: &DMatrix<f64>, labels: &[usize], n_clusters: usize) -> Vec<f64> {
    (0..n_clusters)
        .map(|c| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if idx.len() < 2 {
                return 0.0;
            }
            let m = idx.len();
            let sub = DMatrix::from_fn(m, m, |i, j| w[(idx[i], idx[j])]);
            let mut lap = -&sub;
            for i in 0..m {
                lap[(i, i)] = sub.row(i).sum() - sub[(i, i)];
            }
            let mut ev: Vec<f64> = SymmetricEigen::new(lap).eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            ev[1].max(0.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub sp_rate: f64,
    pub clustering_error: f64,
    pub connectivity: Vec<f64>,
    pub isolated: Vec<usize>,
}

/// Self-expression, affinity and spectral clustering in one call.
pub fn cluster(
    dataset: &MaskedDataset,
    variant: Variant,
    rule: LambdaRule,
    seed: u64,
    opts: &LassoOptions,
) -> Result<(SelfExpression, ClusteringResult), PipelineError> {
    let expr = self_express(dataset, variant, rule, opts)?;
    let w = build_affinity(&expr.coeff_matrix);
    let fallback = dataset.view(ViewTag::ZeroFilled, 0)?.matrix;
    let spectral = spectral_cluster(&w, dataset.n_clusters(), seed, Some(&fallback));
    let result = ClusteringResult {
        clustering_error: clustering_error(dataset.labels(), &spectral.assignments),
        sp_rate: sp_rate(&expr),
        connectivity: connectivity(&w, dataset.labels(), dataset.n_clusters()),
        assignments: spectral.assignments,
        isolated: spectral.isolated,
    };
    Ok((expr, result))
}
