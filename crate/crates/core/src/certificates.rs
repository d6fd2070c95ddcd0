//! Sufficient conditions for nonzero, subspace-preserving Lasso solutions:
//! deterministic certificates for complete, zero-filled, projected-zero-filled
//! and noisy data, the probabilistic margin functions, and rate constants.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::geometry::{
    coherence_of, dual_direction, inradius, leakage_of, reduced_solve, zeta_of, GeometryError, GeometryReport,
    InradiusMethod,
};
use crate::lasso::LassoOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theorem {
    T1,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
}

impl Theorem {
    pub const ALL: [Theorem; 7] = [Self::T1, Self::T3, Self::T4, Self::T5, Self::T6, Self::T7, Self::T8];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::T1 => "t1",
            Self::T3 => "t3",
            Self::T4 => "t4",
            Self::T5 => "t5",
            Self::T6 => "t6",
            Self::T7 => "t7",
            Self::T8 => "t8",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Theorem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown theorem `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    NotCertified,
    /// The condition needs a certified inradius and only an upper bound was given.
    UncertifiableR,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Certified => "CERTIFIED",
            Self::NotCertified => "NOT_CERTIFIED",
            Self::UncertifiableR => "UNCERTIFIABLE_R",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interval {
    /// Open interval; `upper` may be `+∞`.
    Open { lower: f64, upper: f64 },
    Empty,
    /// The statement only asserts existence of an interval.
    Unspecified,
}

impl Interval {
    pub fn contains(&self, x: f64) -> Option<bool> {
        match *self {
            Self::Open { lower, upper } => Some(lower < x && x < upper),
            Self::Empty => Some(false),
            Self::Unspecified => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Self::Empty)
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Self::Open { lower, upper } => (lower, upper),
            _ => (f64::NAN, f64::NAN),
        }
    }
}

/// Upper end of a λ-interval, flagged when the γ = 0 limit was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaMax {
    pub value: f64,
    pub degenerate_gamma: bool,
}

/// Thresholds on the noise norm δ for the noisy-data certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBounds {
    /// Smallest positive root of the quadratic condition.
    pub exact: f64,
    /// `(r − μ')/6`.
    pub simplified: f64,
    /// `r(r − μ')/(2 + 7r)`, the earlier bound.
    pub prior: f64,
    /// `exact / prior`.
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub theorem: Theorem,
    pub inputs: Vec<(&'static str, f64)>,
    /// The theorem's strict inequality, evaluated without slack.
    pub gap_condition: bool,
    /// LHS − RHS of that inequality, positive when it holds.
    pub margin: f64,
    pub lambda_interval: Interval,
    pub lambda_member: Option<bool>,
    pub verdict: Verdict,
    pub degenerate_gamma: bool,
    pub noise: Option<NoiseBounds>,
}

impl CertificateReport {
    pub const CSV_HEADER: &'static str =
        "theorem,inputs,gap_condition,margin,lambda_lower,lambda_upper,lambda_member,verdict,degenerate_gamma";

    pub fn input(&self, name: &str) -> Option<f64> {
        self.inputs.iter().find(|(k, _)| *k == name).map(|&(_, v)| v)
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    pub fn csv_row(&self) -> String {
        let inputs: Vec<String> = self.inputs.iter().map(|(k, v)| format!("{k}={v:e}")).collect();
        let (lo, hi) = match self.lambda_interval {
            Interval::Open { lower, upper } => (format!("{lower:e}"), format!("{upper:e}")),
            Interval::Empty => ("EMPTY".into(), "EMPTY".into()),
            Interval::Unspecified => ("NA".into(), "NA".into()),
        };
        let member = match self.lambda_member {
            Some(b) => b.to_string(),
            None => "NA".into(),
        };
        format!(
            "{},{},{},{:e},{},{},{},{},{}",
            self.theorem,
            inputs.join(";"),
            self.gap_condition,
            self.margin,
            lo,
            hi,
            member,
            self.verdict,
            self.degenerate_gamma
        )
    }
}

fn verdict(gap: bool, member: bool) -> Verdict {
    if gap && member {
        Verdict::Certified
    } else {
        Verdict::NotCertified
    }
}

/// Positive root of `λ² + bλ − c` for `c > 0`, without cancellation.
fn positive_root(b: f64, c: f64) -> f64 {
    let s = (b * b + 4.0 * c).sqrt();
    if b >= 0.0 {
        2.0 * c / (b + s)
    } else {
        (s - b) / 2.0
    }
}

/// `½(1/ζ + 1/(ημ))`, the γ → 0 limit shared by both incomplete-data bounds;
/// `+∞` when μ = 0.
fn gamma_limit(zeta: f64, eta: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        f64::INFINITY
    } else {
        0.5 * (1.0 / zeta + 1.0 / (eta * mu))
    }
}

/// Upper end of the λ-interval for projected-zero-filled data. Requires
/// ζ, η > 0.
pub fn lambda_max_pzf(zeta: f64, eta: f64, mu: f64, gamma: f64) -> LambdaMax {
    if gamma == 0.0 {
        return LambdaMax { value: gamma_limit(zeta, eta, mu), degenerate_gamma: true };
    }
    let b = mu / (eta * gamma) - 1.0 / (2.0 * zeta);
    let c = 1.0 / (2.0 * eta * eta * gamma) + 1.0 / (2.0 * zeta * zeta) + mu / (2.0 * eta * gamma * zeta);
    LambdaMax { value: positive_root(b, c), degenerate_gamma: false }
}

/// Upper end of the λ-interval for zero-filled data. Requires ζ, η > 0.
pub fn lambda_max_zf(zeta: f64, eta: f64, mu: f64, gamma: f64) -> LambdaMax {
    if gamma == 0.0 {
        return LambdaMax { value: gamma_limit(zeta, eta, mu), degenerate_gamma: true };
    }
    let b = mu / (eta * gamma) + 1.0 / (2.0 * eta * eta) - 1.0 / (2.0 * zeta);
    let c = 1.0 / (2.0 * eta * eta * gamma) + 1.0 / (2.0 * zeta * zeta) + mu / (2.0 * eta * gamma * zeta);
    LambdaMax { value: positive_root(b, c), degenerate_gamma: false }
}

/// Complete data via inradius: `μ_λ < r` and `λ > 1/ζ`.
pub fn certify_t1(mu: f64, r: f64, r_certified: bool, zeta: f64, lambda: f64) -> CertificateReport {
    let margin = r - mu;
    let gap = margin > 0.0;
    let interval = if gap { Interval::Open { lower: 1.0 / zeta, upper: f64::INFINITY } } else { Interval::Empty };
    let member = interval.contains(lambda).unwrap_or(false);
    CertificateReport {
        theorem: Theorem::T1,
        inputs: vec![("mu_lambda", mu), ("r", r), ("zeta", zeta), ("lambda", lambda)],
        gap_condition: gap,
        margin,
        lambda_interval: interval,
        lambda_member: Some(member),
        verdict: if r_certified { verdict(gap, member) } else { Verdict::UncertifiableR },
        degenerate_gamma: false,
        noise: None,
    }
}

/// Complete data via ζ: `μ_λ < ζ` and `λ ∈ (1/ζ, ½(1/ζ + 1/μ_λ))`.
pub fn certify_t8(mu: f64, zeta: f64, lambda: f64) -> CertificateReport {
    let margin = zeta - mu;
    let gap = margin > 0.0;
    let interval = if gap {
        Interval::Open { lower: 1.0 / zeta, upper: gamma_limit(zeta, 1.0, mu) }
    } else {
        Interval::Empty
    };
    let member = interval.contains(lambda).unwrap_or(false);
    CertificateReport {
        theorem: Theorem::T8,
        inputs: vec![("mu_lambda", mu), ("zeta", zeta), ("lambda", lambda)],
        gap_condition: gap,
        margin,
        lambda_interval: interval,
        lambda_member: Some(member),
        verdict: verdict(gap, member),
        degenerate_gamma: false,
        noise: None,
    }
}

fn incomplete(
    theorem: Theorem,
    margin: f64,
    upper: LambdaMax,
    zeta: f64,
    eta: f64,
    mu: f64,
    gamma: f64,
    lambda: f64,
) -> CertificateReport {
    let gap = margin > 0.0;
    let interval = if gap { Interval::Open { lower: 1.0 / zeta, upper: upper.value } } else { Interval::Empty };
    let member = interval.contains(lambda).unwrap_or(false);
    CertificateReport {
        theorem,
        inputs: vec![("zeta", zeta), ("eta", eta), ("mu_lambda", mu), ("gamma", gamma), ("lambda", lambda)],
        gap_condition: gap,
        margin,
        lambda_interval: interval,
        lambda_member: Some(member),
        verdict: verdict(gap, member),
        degenerate_gamma: upper.degenerate_gamma,
        noise: None,
    }
}

/// Projected-zero-filled data: `μη < ζ` and `λ ∈ (1/ζ, λ_max)`.
pub fn certify_t3(zeta: f64, eta: f64, mu: f64, gamma: f64, lambda: f64) -> CertificateReport {
    let margin = zeta - mu * eta;
    incomplete(Theorem::T3, margin, lambda_max_pzf(zeta, eta, mu, gamma), zeta, eta, mu, gamma, lambda)
}

/// Zero-filled data: `μη + γ < ζ` and `λ ∈ (1/ζ, λ_max)`.
pub fn certify_t5(zeta: f64, eta: f64, mu: f64, gamma: f64, lambda: f64) -> CertificateReport {
    let margin = zeta - mu * eta - gamma;
    incomplete(Theorem::T5, margin, lambda_max_zf(zeta, eta, mu, gamma), zeta, eta, mu, gamma, lambda)
}

pub fn certify_t3_pzf(report: &GeometryReport) -> CertificateReport {
    certify_t3(report.zeta, report.eta, report.mu_lambda, report.gamma, report.lambda)
}

pub fn certify_t5_zf(report: &GeometryReport) -> CertificateReport {
    certify_t5(report.zeta, report.eta, report.mu_lambda, report.gamma, report.lambda)
}

/// `√(ε + β/3)`.
fn slack(beta: f64, eps: f64) -> f64 {
    (eps + beta / 3.0).sqrt()
}

/// Margin of the probabilistic condition for projected-zero-filled data.
pub fn f_pzf(omega: f64, alpha: f64, beta: f64, eps: f64) -> f64 {
    alpha - (2.0 * omega).sqrt() - beta * (1.0 - omega).sqrt() - (1.0 + beta) * slack(beta, eps)
}

/// Margin of the probabilistic condition for zero-filled data.
pub fn f_zf(omega: f64, alpha: f64, beta: f64, eps: f64) -> f64 {
    let s = slack(beta, eps);
    -s * (omega.sqrt() + (1.0 - omega).sqrt() + s) - (omega * (1.0 - omega)).sqrt() + f_pzf(omega, alpha, beta, eps)
}

fn probabilistic(theorem: Theorem, margin: f64, omega: f64, alpha: f64, beta: f64, eps: f64) -> CertificateReport {
    let gap = margin > 0.0;
    CertificateReport {
        theorem,
        inputs: vec![("omega", omega), ("alpha", alpha), ("beta", beta), ("epsilon", eps)],
        gap_condition: gap,
        margin,
        lambda_interval: Interval::Unspecified,
        lambda_member: None,
        verdict: if gap { Verdict::Certified } else { Verdict::NotCertified },
        degenerate_gamma: false,
        noise: None,
    }
}

pub fn certify_t4(omega: f64, alpha: f64, beta: f64, eps: f64) -> CertificateReport {
    probabilistic(Theorem::T4, f_pzf(omega, alpha, beta, eps), omega, alpha, beta, eps)
}

pub fn certify_t6(omega: f64, alpha: f64, beta: f64, eps: f64) -> CertificateReport {
    probabilistic(Theorem::T6, f_zf(omega, alpha, beta, eps), omega, alpha, beta, eps)
}

/// Largest tolerable missing ratios `(pzf, zf)` in the high-dimensional limit.
pub fn rate_bounds(rho: f64, d: usize) -> (f64, f64) {
    let base = rho.ln() / (16.0 * d as f64);
    let s = 1.0 + std::f64::consts::SQRT_2;
    (0.5 * base, base / (s * s))
}

/// Noise thresholds for inradius `r` and noisy coherence `μ'`.
pub fn noise_bounds(r: f64, mu_prime: f64) -> NoiseBounds {
    if r <= mu_prime {
        return NoiseBounds { exact: 0.0, simplified: 0.0, prior: 0.0, improvement: f64::NAN };
    }
    let a = r + mu_prime / 3.0;
    let q = (r * r - mu_prime * mu_prime) / 3.0;
    // a − √(a² − q), rewritten to avoid cancellation
    let exact = q / (a + (a * a - q).sqrt());
    let prior = r * (r - mu_prime) / (2.0 + 7.0 * r);
    NoiseBounds { exact, simplified: (r - mu_prime) / 6.0, prior, improvement: exact / prior }
}

/// Noisy data: `r > μ'` and `δ` below the exact threshold. The λ-interval is
/// unspecified here; see [`certify_t7_at`].
pub fn certify_t7_noise(r: f64, mu_prime: f64, delta: f64) -> CertificateReport {
    let bounds = noise_bounds(r, mu_prime);
    let gap = r > mu_prime && delta < bounds.exact;
    CertificateReport {
        theorem: Theorem::T7,
        inputs: vec![("r", r), ("mu_prime", mu_prime), ("delta", delta)],
        gap_condition: gap,
        margin: if r > mu_prime { bounds.exact - delta } else { r - mu_prime },
        lambda_interval: Interval::Unspecified,
        lambda_member: None,
        verdict: if gap { Verdict::Certified } else { Verdict::NotCertified },
        degenerate_gamma: false,
        noise: Some(bounds),
    }
}

/// Quantities of one anchor in a noisy dataset `X + Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyQuantities {
    pub r: f64,
    pub r_certified: bool,
    pub mu_prime: f64,
    pub delta: f64,
    /// Zero-filled-style quantities with observed part `x + δ` and hidden part `−δ`.
    pub zeta: f64,
    pub eta: f64,
    pub mu: f64,
    pub gamma: f64,
    pub lambda: f64,
}

/// Evaluates [`NoisyQuantities`] for `anchor`. `basis` spans the anchor's
/// clean subspace; `delta` is the largest noise norm over all points.
#[allow(clippy::too_many_arguments)]
pub fn noisy_quantities(
    clean: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    labels: &[usize],
    basis: &DMatrix<f64>,
    anchor: usize,
    lambda: f64,
    method: InradiusMethod,
    opts: &LassoOptions,
) -> Result<NoisyQuantities, GeometryError> {
    let label = labels[anchor];
    let companions: Vec<usize> = (0..labels.len()).filter(|&j| j != anchor && labels[j] == label).collect();
    let others: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != label).collect();
    if companions.is_empty() {
        return Err(GeometryError::LonelyAnchor { anchor });
    }
    let noisy = clean + noise;
    let r = inradius(&clean.select_columns(companions.iter()), method)?;
    let (_, dual) = reduced_solve(&noisy, anchor, &companions, lambda, opts)?;
    let direction: DVector<f64> = dual_direction(&dual.v, basis);
    let mut same = vec![anchor];
    same.extend(&companions);
    let (gamma, _) = leakage_of(&noisy, &(-noise), &others, &same, basis);
    Ok(NoisyQuantities {
        r: r.value,
        r_certified: r.certified,
        mu_prime: coherence_of(clean, &others, &direction),
        delta: noise.column_iter().map(|c| c.norm()).fold(0.0, f64::max),
        zeta: zeta_of(&noisy, anchor, &companions),
        eta: noisy.column(anchor).norm(),
        mu: coherence_of(&noisy, &others, &direction),
        gamma,
        lambda,
    })
}

/// Noisy-data certificate at a concrete λ: the δ condition plus membership in
/// the zero-filled interval evaluated on the noisy quantities.
pub fn certify_t7_at(q: &NoisyQuantities) -> CertificateReport {
    let mut report = certify_t7_noise(q.r, q.mu_prime, q.delta);
    let zf = certify_t5(q.zeta, q.eta, q.mu, q.gamma, q.lambda);
    if report.gap_condition && zf.gap_condition {
        report.lambda_interval = zf.lambda_interval;
        report.degenerate_gamma = zf.degenerate_gamma;
    } else {
        report.lambda_interval = Interval::Empty;
    }
    let member = report.lambda_interval.contains(q.lambda).unwrap_or(false);
    report.lambda_member = Some(member);
    report.inputs.extend([("zeta", q.zeta), ("eta", q.eta), ("mu_lambda", q.mu), ("gamma", q.gamma), ("lambda", q.lambda)]);
    report.verdict = if !q.r_certified {
        Verdict::UncertifiableR
    } else {
        verdict(report.gap_condition, member)
    };
    report
}

/// `steps` log-spaced values in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..steps).map(|i| (a + (b - a) * i as f64 / (steps - 1) as f64).exp()).collect()
        }
    }
}

/// Default per-anchor λ grid: 40 log-spaced points in `[0.5/ζ, 20/ζ]`.
pub fn default_lambda_grid(zeta: f64) -> Vec<f64> {
    log_grid(0.5 / zeta, 20.0 / zeta, 40)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    // The two upper ends transcribed term by term from their closed forms.
    fn lambda_max_pzf_literal(z: f64, e: f64, m: f64, g: f64) -> f64 {
        0.5 * (1.0 / (2.0 * z) - m / (g * e)
            + (9.0 / (4.0 * z * z) + m / (g * e * z) + 2.0 / (g * e * e) + m * m / (g * g * e * e)).sqrt())
    }

    fn lambda_max_zf_literal(z: f64, e: f64, m: f64, g: f64) -> f64 {
        0.5 * (1.0 / (2.0 * z) - m / (g * e) - 1.0 / (2.0 * e * e)
            + (9.0 / (4.0 * z * z)
                + m / (g * e * z)
                + 2.0 / (g * e * e)
                + m * m / (g * g * e * e)
                + 1.0 / (4.0 * e.powi(4))
                + (1.0 / (e * e)) * (m / (g * e) - 1.0 / (2.0 * z)))
                .sqrt())
    }

    fn quad_pzf(l: f64, z: f64, e: f64, m: f64, g: f64) -> f64 {
        l * l + (m / (e * g) - 1.0 / (2.0 * z)) * l - (1.0 / (2.0 * e * e * g) + 1.0 / (2.0 * z * z) + m / (2.0 * e * g * z))
    }

    fn quad_zf(l: f64, z: f64, e: f64, m: f64, g: f64) -> f64 {
        l * l + (m / (e * g) + 1.0 / (2.0 * e * e) - 1.0 / (2.0 * z)) * l
            - (1.0 / (2.0 * e * e * g) + 1.0 / (2.0 * z * z) + m / (2.0 * e * g * z))
    }

    #[test]
    fn t1_examples() {
        assert!(certify_t1(0.1, 0.3, true, 0.4, 5.0).is_certified());
        let b = certify_t1(0.3, 0.3, true, 0.4, 5.0);
        assert_eq!(b.verdict, Verdict::NotCertified);
        assert!(b.lambda_interval.is_empty());
        assert_eq!(certify_t1(0.1, 0.3, true, 0.4, 2.0).verdict, Verdict::NotCertified);
        assert_eq!(certify_t1(0.1, 0.3, false, 0.4, 5.0).verdict, Verdict::UncertifiableR);
    }

    #[test]
    fn pzf_upper_end_matches_literal_form_and_root() {
        let (z, e, m, g) = (0.5, 0.8, 0.1, 0.05);
        let v = lambda_max_pzf(z, e, m, g);
        assert!(!v.degenerate_gamma);
        let lit = lambda_max_pzf_literal(z, e, m, g);
        assert!((v.value - lit).abs() <= 1e-12 * lit);
        assert!(quad_pzf(v.value, z, e, m, g).abs() <= 1e-9);
        assert!(v.value > 1.0 / z);
    }

    #[test]
    fn zf_upper_end_matches_literal_form_and_root() {
        let (z, e, m, g) = (0.5, 0.8, 0.1, 0.05);
        let v = lambda_max_zf(z, e, m, g);
        let lit = lambda_max_zf_literal(z, e, m, g);
        assert!((v.value - lit).abs() <= 1e-12 * lit);
        assert!(quad_zf(v.value, z, e, m, g).abs() <= 1e-9);
    }

    #[test]
    fn gamma_limit_is_continuous() {
        let (z, e, m) = (0.5, 0.8, 0.1);
        let lim = lambda_max_pzf(z, e, m, 0.0);
        assert!(lim.degenerate_gamma);
        assert!((lim.value - 0.5 * (1.0 / z + 1.0 / (e * m))).abs() <= 1e-15);
        for f in [lambda_max_pzf, lambda_max_zf] {
            let near = f(z, e, m, 1e-9).value;
            assert!((near - lim.value).abs() <= 1e-6 * lim.value, "{near} vs {}", lim.value);
        }
        // at η = 1 the limit is the complete-data upper end
        assert_eq!(lambda_max_pzf(z, 1.0, m, 0.0).value, 0.5 * (1.0 / z + 1.0 / m));
        assert_eq!(lambda_max_zf(z, 1.0, 0.0, 0.0).value, f64::INFINITY);
    }

    #[test]
    fn t3_and_t5_examples() {
        let t3 = certify_t3(0.5, 0.9, 0.1, 0.2, 2.5);
        assert!((t3.margin - 0.41).abs() <= 1e-15);
        assert!(!t3.lambda_interval.is_empty());
        let (lo, hi) = t3.lambda_interval.bounds();
        assert!(lo < hi);
        // μη = 0.2, γ = 0.35, ζ = 0.5
        let t5 = certify_t5(0.5, 1.0, 0.2, 0.35, 3.0);
        assert!((t5.margin + 0.05).abs() <= 1e-15);
        assert_eq!(t5.verdict, Verdict::NotCertified);
        assert!(t5.lambda_interval.is_empty());
    }

    #[test]
    fn zero_missing_reduces_to_complete_interval() {
        let (z, m) = (0.6, 0.2);
        let t8 = certify_t8(m, z, 2.0);
        for r in [certify_t3(z, 1.0, m, 0.0, 2.0), certify_t5(z, 1.0, m, 0.0, 2.0)] {
            assert_eq!(r.lambda_interval, t8.lambda_interval);
            assert_eq!(r.verdict, t8.verdict);
            assert!(r.degenerate_gamma);
        }
    }

    #[test]
    fn t8_examples() {
        let r = certify_t8(0.0, 0.5, 100.0);
        assert_eq!(r.lambda_interval, Interval::Open { lower: 2.0, upper: f64::INFINITY });
        assert!(r.is_certified());
        assert!(!certify_t8(0.5, 0.5, 3.0).gap_condition);
        assert_eq!(certify_t8(0.1, 0.5, 1.0).lambda_member, Some(false));
    }

    #[test]
    fn fig1_margins() {
        let f0 = f_pzf(0.0, 0.9, 0.01, 0.001);
        assert!((f0 - 0.8235136605509573).abs() <= 1e-15);
        for i in 1..1000 {
            let w = i as f64 / 1000.0;
            assert!(f_pzf(w, 0.9, 0.01, 0.001) > f_zf(w, 0.9, 0.01, 0.001));
        }
        assert!(certify_t4(0.1, 0.9, 0.01, 0.001).is_certified());
        assert_eq!(certify_t6(0.5, 0.9, 0.01, 0.001).verdict, Verdict::NotCertified);
    }

    #[test]
    fn collapsed_margin_functions() {
        for i in 0..=10 {
            let w = i as f64 / 10.0;
            assert!((f_pzf(w, 0.0, 0.0, 0.0) + (2.0 * w).sqrt()).abs() <= 1e-15);
        }
        let eps = 0.001;
        assert!((f_pzf(1.0, 0.9, 0.0, eps) - (0.9 - 2f64.sqrt() - eps.sqrt())).abs() <= 1e-15);
    }

    #[test]
    fn rate_constants() {
        let (p, z) = rate_bounds(10.0, 5);
        assert!((p - 0.014391156831212787).abs() <= 1e-15);
        let ratio = (1.0 + 2f64.sqrt()).powi(2) / 2.0;
        assert!((p / z - ratio).abs() <= 1e-12);
        assert!((ratio - 2.914213562373095).abs() <= 1e-15);
        let (p1, z1) = rate_bounds(1.0 + 1e-12, 3);
        assert!(p1 < 1e-13 && z1 < 1e-13);
    }

    #[test]
    fn noise_bound_examples() {
        let b = noise_bounds(0.9, 0.0);
        assert!((b.simplified - 0.15).abs() <= 1e-15);
        assert!((b.exact - 0.16515307716504657).abs() <= 1e-15);
        let tight = certify_t7_noise(0.4, 0.4, 0.0);
        assert!(!tight.gap_condition);
        assert_eq!(tight.noise.unwrap().exact, 0.0);
        assert!(certify_t7_noise(0.9, 0.0, 0.16).is_certified());
        assert!(!certify_t7_noise(0.9, 0.0, 0.17).is_certified());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = default_lambda_grid(0.5);
        assert_eq!(g.len(), 40);
        assert!((g[0] - 1.0).abs() <= 1e-12 && (g[39] - 40.0).abs() <= 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn csv_and_parsing() {
        let row = certify_t3(0.5, 0.9, 0.1, 0.2, 2.5).csv_row();
        assert_eq!(row.split(',').count(), CertificateReport::CSV_HEADER.split(',').count());
        assert_eq!("T5".parse::<Theorem>().unwrap(), Theorem::T5);
        assert!("t2".parse::<Theorem>().is_err());
    }

    #[test]
    fn margin_decomposition_at_random_points() {
        let mut r = rng::stream(50, 0);
        for _ in 0..100 {
            let (w, a, b, e): (f64, f64, f64, f64) = (r.random(), r.random(), r.random(), r.random());
            let s = (e + b / 3.0).sqrt();
            let expect = f_pzf(w, a, b, e) - (w * (1.0 - w)).sqrt() - s * (w.sqrt() + (1.0 - w).sqrt() + s);
            assert!((f_zf(w, a, b, e) - expect).abs() <= 1e-14);
            // the zero-filled condition written out in full
            let rhs = (2f64.sqrt() + s) * w.sqrt()
                + (b + s) * (1.0 - w).sqrt()
                + (w * (1.0 - w)).sqrt()
                + (1.0 + b + s) * s;
            assert!((f_zf(w, a, b, e) - (a - rhs)).abs() <= 1e-13);
        }
    }

    proptest! {
        #[test]
        fn interval_nonempty_iff_margin_positive(
            z in 0.01f64..1.0, e in 0.01f64..1.0, m in 0.0f64..1.0, g in 0.0f64..1.0, l in 0.1f64..100.0,
        ) {
            for rep in [certify_t3(z, e, m, g, l), certify_t5(z, e, m, g, l), certify_t8(m, z, l)] {
                prop_assert_eq!(!rep.lambda_interval.is_empty(), rep.margin > 0.0);
                prop_assert_eq!(rep.is_certified(), rep.gap_condition && rep.lambda_member == Some(true));
                if let Interval::Open { lower, upper } = rep.lambda_interval {
                    prop_assert!(lower < upper, "{:?}", rep);
                }
            }
        }

        #[test]
        fn upper_ends_solve_their_quadratics(
            z in 0.05f64..1.0, e in 0.05f64..1.0, m in 0.0f64..1.0, g in 0.01f64..1.0,
        ) {
            let p = lambda_max_pzf(z, e, m, g).value;
            let zf = lambda_max_zf(z, e, m, g).value;
            prop_assert!(p > 0.0 && zf > 0.0);
            prop_assert!(quad_pzf(p, z, e, m, g).abs() <= 1e-9 * p * p);
            prop_assert!(quad_zf(zf, z, e, m, g).abs() <= 1e-9 * zf * zf);
            // 1/ζ lies below each upper end exactly when the gap condition holds
            let (gp, gz) = (z - m * e, z - m * e - g);
            if gp.abs() > 1e-9 {
                prop_assert_eq!(p > 1.0 / z, gp > 0.0);
            }
            if gz.abs() > 1e-9 {
                prop_assert_eq!(zf > 1.0 / z, gz > 0.0);
            }
        }

        #[test]
        fn pzf_margin_dominates(w in 0.0f64..=1.0, a in 0.0f64..2.0, b in 0.0f64..2.0, e in 0.0f64..1.0) {
            prop_assert!(f_pzf(w, a, b, e) >= f_zf(w, a, b, e));
        }

        #[test]
        fn noise_bounds_are_ordered(r in 1e-3f64..=1.0, frac in 0.0f64..1.0) {
            let mu = frac * r;
            let b = noise_bounds(r, mu);
            prop_assert!(b.exact >= b.simplified && b.simplified >= b.prior);
        }
    }
}
