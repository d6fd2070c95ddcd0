//! Geometric quantities of an anchored dataset: intra-subspace coherence ζ,
//! anchor norm η, inter-subspace coherence μ_λ with its dual direction,
//! leakage coherence γ, and the relative inradius r.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::data::{orthonormal_range, DataError, DataView, MaskedDataset, SubspaceArrangement, ViewTag};
use crate::lasso::{recover_dual, solve_lasso, DualSolution, LassoError, LassoOptions, LassoSolution};
use crate::rng;

/// Feasibility slack used when testing candidate polar vertices.
const VERTEX_FEAS_TOL: f64 = 1e-9;
/// Default cap on candidate vertices examined by [`InradiusMethod::Polytope`].
pub const VERTEX_CAP: usize = 2_000_000;
/// Directions per intrinsic dimension for [`InradiusMethod::Sampled`].
pub const SAMPLES_PER_DIM: usize = 10_000;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("exact planar inradius needs intrinsic dimension 2, got {dim}")]
    DimensionTooHigh { dim: usize },
    #[error("polar vertex enumeration needs {candidates} candidates, cap is {cap}")]
    VertexBlowup { candidates: u128, cap: usize },
    #[error("point set is empty")]
    EmptyPoints,
    #[error("anchor {anchor} has no observed mass (η = 0)")]
    DegeneratePoint { anchor: usize },
    #[error("anchor {anchor} has no same-cluster companions")]
    LonelyAnchor { anchor: usize },
    #[error("no subspace basis for label {label}")]
    MissingBasis { label: usize },
    #[error("view {0} has no geometry report")]
    UnsupportedView(ViewTag),
    #[error(transparent)]
    Lasso(#[from] LassoError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InradiusMethod {
    /// Exact minimum over the circle, for intrinsic dimension ≤ 2.
    Exact2D,
    /// Reciprocal of the largest vertex norm of the polar polytope.
    Polytope,
    /// Minimum over random directions; an upper bound only.
    Sampled { seed: u64 },
}

impl InradiusMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exact2D => "exact2d",
            Self::Polytope => "polytope",
            Self::Sampled { .. } => "sampled",
        }
    }
}

impl fmt::Display for InradiusMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InradiusMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exact2d" => Ok(Self::Exact2D),
            "polytope" => Ok(Self::Polytope),
            "sampled" => Ok(Self::Sampled { seed: 0 }),
            other => Err(format!("unknown inradius method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inradius {
    pub value: f64,
    pub method: InradiusMethod,
    /// False for sampled estimates, which only bound `r` from above.
    pub certified: bool,
    pub intrinsic_dim: usize,
}

/// Coordinates of the columns of `points` in an orthonormal basis of their span.
fn intrinsic_coords(points: &DMatrix<f64>) -> DMatrix<f64> {
    let basis = orthonormal_range(points);
    basis.transpose() * points
}

/// `‖Zᵀu‖_∞`.
fn support_max(z: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    z.column_iter().map(|c| c.dot(u).abs()).fold(0.0, f64::max)
}

/// Relative inradius of the symmetrized convex hull of the columns of
/// `points`, i.e. `min_{v ∈ span, ‖v‖=1} ‖Yᵀv‖_∞`.
pub fn inradius(points: &DMatrix<f64>, method: InradiusMethod) -> Result<Inradius, GeometryError> {
    inradius_with_cap(points, method, VERTEX_CAP)
}

pub fn inradius_with_cap(
    points: &DMatrix<f64>,
    method: InradiusMethod,
    cap: usize,
) -> Result<Inradius, GeometryError> {
    if points.ncols() == 0 {
        return Err(GeometryError::EmptyPoints);
    }
    let z = intrinsic_coords(points);
    let k = z.nrows();
    let done = |value: f64, certified: bool| Inradius { value, method, certified, intrinsic_dim: k };
    if k == 0 {
        return Ok(done(0.0, true));
    }
    if k == 1 {
        let value = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        return Ok(done(value, !matches!(method, InradiusMethod::Sampled { .. })));
    }
    match method {
        InradiusMethod::Exact2D if k == 2 => Ok(done(exact_planar(&z), true)),
        InradiusMethod::Exact2D => Err(GeometryError::DimensionTooHigh { dim: k }),
        InradiusMethod::Polytope => Ok(done(polar_vertices(&z, cap)?, true)),
        InradiusMethod::Sampled { seed } => Ok(done(sampled(&z, seed), false)),
    }
}

/// Planar case. The envelope `f(θ) = max_j |z_j·u(θ)|` on a rank-2 set attains
/// its minimum where two distinct pieces cross, i.e. at a direction orthogonal
/// to `z_a − z_b` or `z_a + z_b`; a single piece is only locally minimal at
/// its zero, which cannot be a global minimum of the envelope.
fn exact_planar(z: &DMatrix<f64>) -> f64 {
    let pts: Vec<[f64; 2]> = z.column_iter().map(|c| [c[0], c[1]]).collect();
    let mut best = f64::INFINITY;
    let mut eval = |dx: f64, dy: f64| {
        let n = dx.hypot(dy);
        if n == 0.0 {
            return;
        }
        // direction orthogonal to (dx, dy)
        let (ux, uy) = (-dy / n, dx / n);
        let f = pts.iter().fold(0.0f64, |m, p| m.max((p[0] * ux + p[1] * uy).abs()));
        best = best.min(f);
    };
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let (pa, pb) = (pts[a], pts[b]);
            eval(pa[0] - pb[0], pa[1] - pb[1]);
            eval(pa[0] + pb[0], pa[1] + pb[1]);
        }
    }
    best
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Enumerates vertices of `{u : |z_jᵀu| ≤ 1 ∀j}` as solutions of `k` tight
/// constraints and returns `1 / max ‖u‖`.
fn polar_vertices(z: &DMatrix<f64>, cap: usize) -> Result<f64, GeometryError> {
    let (k, l) = z.shape();
    let candidates = binomial(l, k).saturating_mul(1u128 << (k - 1));
    if candidates > cap as u128 {
        return Err(GeometryError::VertexBlowup { candidates, cap });
    }
    let mut max_norm: f64 = 0.0;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let a = DMatrix::from_fn(k, k, |i, c| z[(c, subset[i])]);
        let lu = a.lu();
        if lu.is_invertible() {
            // first sign fixed to +1: u and −u are both vertices
            for pattern in 0..(1usize << (k - 1)) {
                let rhs = DVector::from_fn(k, |i, _| if i > 0 && pattern >> (i - 1) & 1 == 1 { -1.0 } else { 1.0 });
                if let Some(u) = lu.solve(&rhs) {
                    if support_max(z, &u) <= 1.0 + VERTEX_FEAS_TOL {
                        max_norm = max_norm.max(u.norm());
                    }
                }
            }
        }
        // next k-subset in lexicographic order
        let mut i = k;
        while i > 0 && subset[i - 1] == l - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        subset[i - 1] += 1;
        for j in i..k {
            subset[j] = subset[j - 1] + 1;
        }
    }
    Ok(if max_norm > 0.0 { 1.0 / max_norm } else { 0.0 })
}

fn sampled(z: &DMatrix<f64>, seed: u64) -> f64 {
    let k = z.nrows();
    let mut r = rng::stream(seed, 0);
    let mut best = f64::INFINITY;
    for _ in 0..SAMPLES_PER_DIM * k {
        let u = DVector::from_fn(k, |_, _| r.sample::<f64, _>(StandardNormal));
        let n = u.norm();
        if n > 0.0 {
            best = best.min(support_max(z, &(u / n)));
        }
    }
    best
}

/// `max_{j ∈ companions} |⟨w_anchor, w_j⟩|` over the view's columns.
pub fn zeta_of(view: &DMatrix<f64>, anchor: usize, companions: &[usize]) -> f64 {
    let a = view.column(anchor);
    companions.iter().map(|&j| view.column(j).dot(&a).abs()).fold(0.0, f64::max)
}

/// Normalized projection of `v` onto the span of the orthonormal `basis`, or
/// the zero vector when that projection vanishes.
pub fn dual_direction(v: &DVector<f64>, basis: &DMatrix<f64>) -> DVector<f64> {
    let p = basis * (basis.transpose() * v);
    let n = p.norm();
    if n <= 1e-12 * v.norm().max(f64::MIN_POSITIVE) || n == 0.0 {
        DVector::zeros(v.len())
    } else {
        p / n
    }
}

/// `max_{k ∈ others} |⟨w_k, direction⟩|`.
pub fn coherence_of(view: &DMatrix<f64>, others: &[usize], direction: &DVector<f64>) -> f64 {
    others.iter().map(|&k| view.column(k).dot(direction).abs()).fold(0.0, f64::max)
}

/// `max_{k ∈ others, j ∈ same} |⟨w_k, P_{B⊥} u_j⟩|`, with `w` the observed
/// view and `u` the unobserved one. The flag is set when `others` is empty.
pub fn leakage_of(
    view: &DMatrix<f64>,
    unobserved: &DMatrix<f64>,
    others: &[usize],
    same: &[usize],
    basis: &DMatrix<f64>,
) -> (f64, bool) {
    if others.is_empty() {
        return (0.0, true);
    }
    let leaks: Vec<DVector<f64>> = same
        .iter()
        .map(|&j| {
            let u = unobserved.column(j);
            u - basis * (basis.transpose() * u)
        })
        .collect();
    let mut best: f64 = 0.0;
    for &k in others {
        let w = view.column(k);
        for leak in &leaks {
            best = best.max(w.dot(leak).abs());
        }
    }
    (best, false)
}

/// Reduced problem: the anchor's view column expressed over its companions.
pub fn reduced_solve(
    view: &DMatrix<f64>,
    anchor: usize,
    companions: &[usize],
    lambda: f64,
    opts: &LassoOptions,
) -> Result<(LassoSolution, DualSolution), GeometryError> {
    let dict = view.select_columns(companions.iter());
    let target = view.column(anchor).into_owned();
    let sol = solve_lasso(&dict, &target, lambda, opts)?;
    let dual = recover_dual(&dict, &target, &sol)?;
    Ok((sol, dual))
}

/// All quantities of one anchor under one view, evaluated at one λ.
#[derive(Debug, Clone)]
pub struct GeometryReport {
    pub view_tag: ViewTag,
    pub anchor: usize,
    pub zeta: f64,
    pub eta: f64,
    pub mu_lambda: f64,
    pub gamma: f64,
    /// γ was a maximum over an empty set (single cluster).
    pub gamma_empty: bool,
    pub inradius: Option<Inradius>,
    pub dual_direction: DVector<f64>,
    pub dual: DualSolution,
    pub lambda: f64,
}

impl GeometryReport {
    pub const CSV_HEADER: &'static str = "view_tag,zeta,eta,mu_lambda,gamma,r,r_method,lambda";

    pub fn csv_row(&self) -> String {
        let (r, method) = match &self.inradius {
            Some(i) => (format!("{:e}", i.value), i.method.as_str()),
            None => ("NaN".to_string(), "none"),
        };
        format!(
            "{},{:e},{:e},{:e},{:e},{},{},{:e}",
            self.view_tag, self.zeta, self.eta, self.mu_lambda, self.gamma, r, method, self.lambda
        )
    }
}

fn family_basis(
    arrangement: &SubspaceArrangement,
    dataset: &MaskedDataset,
    anchor: usize,
    tag: ViewTag,
) -> Result<DMatrix<f64>, GeometryError> {
    let label = dataset.labels()[anchor];
    if label >= arrangement.len() {
        return Err(GeometryError::MissingBasis { label });
    }
    Ok(match tag {
        ViewTag::ProjectedZeroFilled => arrangement.projected_basis(label, dataset.pattern(anchor))?,
        _ => arrangement.basis(label).clone(),
    })
}

/// ζ of the anchor under `view`.
pub fn compute_zeta(view: &DataView, dataset: &MaskedDataset) -> Result<f64, GeometryError> {
    let companions = dataset.companions(view.anchor);
    if companions.is_empty() {
        return Err(GeometryError::LonelyAnchor { anchor: view.anchor });
    }
    Ok(zeta_of(&view.matrix, view.anchor, &companions))
}

/// η, the norm of the anchor's column in `view`.
pub fn compute_eta(view: &DataView) -> f64 {
    view.matrix.column(view.anchor).norm()
}

/// μ_λ and the dual direction of the reduced problem at `lambda`.
pub fn compute_mu(
    view: &DataView,
    dataset: &MaskedDataset,
    arrangement: &SubspaceArrangement,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<(f64, DVector<f64>, DualSolution), GeometryError> {
    let anchor = view.anchor;
    let companions = dataset.companions(anchor);
    if companions.is_empty() {
        return Err(GeometryError::LonelyAnchor { anchor });
    }
    let (_, dual) = reduced_solve(&view.matrix, anchor, &companions, lambda, opts)?;
    let basis = family_basis(arrangement, dataset, anchor, view.tag)?;
    let direction = dual_direction(&dual.v, &basis);
    let mu = coherence_of(&view.matrix, &dataset.others(anchor), &direction);
    Ok((mu, direction, dual))
}

/// Leakage coherence γ of the anchor for the ZF or PZF family; zero for
/// complete data. The flag reports a maximum over an empty set.
pub fn compute_gamma(
    dataset: &MaskedDataset,
    arrangement: &SubspaceArrangement,
    anchor: usize,
    tag: ViewTag,
) -> Result<(f64, bool), GeometryError> {
    let (observed, unobserved) = match tag {
        ViewTag::Complete => return Ok((0.0, dataset.others(anchor).is_empty())),
        ViewTag::ZeroFilled => (ViewTag::ZeroFilled, ViewTag::Unobserved),
        ViewTag::ProjectedZeroFilled => (ViewTag::ProjectedZeroFilled, ViewTag::ProjectedUnobserved),
        other => return Err(GeometryError::UnsupportedView(other)),
    };
    let basis = family_basis(arrangement, dataset, anchor, tag)?;
    let w = dataset.view(observed, anchor)?;
    let u = dataset.view(unobserved, anchor)?;
    let mut same = vec![anchor];
    same.extend(dataset.companions(anchor));
    Ok(leakage_of(&w.matrix, &u.matrix, &dataset.others(anchor), &same, &basis))
}

/// Full report for `anchor` under `tag` ∈ {complete, zf, pzf}. The inradius is
/// computed on the anchor's complete companions when a method is given.
pub fn geometry_report(
    dataset: &MaskedDataset,
    arrangement: &SubspaceArrangement,
    anchor: usize,
    tag: ViewTag,
    lambda: f64,
    inradius_method: Option<InradiusMethod>,
    opts: &LassoOptions,
) -> Result<GeometryReport, GeometryError> {
    if !matches!(tag, ViewTag::Complete | ViewTag::ZeroFilled | ViewTag::ProjectedZeroFilled) {
        return Err(GeometryError::UnsupportedView(tag));
    }
    let view = dataset.view(tag, anchor)?;
    let eta = compute_eta(&view);
    if eta == 0.0 {
        return Err(GeometryError::DegeneratePoint { anchor });
    }
    let zeta = compute_zeta(&view, dataset)?;
    let (mu_lambda, dual_direction, dual) = compute_mu(&view, dataset, arrangement, lambda, opts)?;
    let (gamma, gamma_empty) = compute_gamma(dataset, arrangement, anchor, tag)?;
    let inradius = match inradius_method {
        Some(method) => {
            let companions = dataset.companions(anchor);
            Some(inradius(&dataset.points().select_columns(companions.iter()), method)?)
        }
        None => None,
    };
    Ok(GeometryReport {
        view_tag: tag,
        anchor,
        zeta,
        eta,
        mu_lambda,
        gamma,
        gamma_empty,
        inradius,
        dual_direction,
        dual,
        lambda,
    })
}
