//! Experiment harness: missing-ratio sweeps, margin curves, certificate vs.
//! solver comparisons, and the config and run-manifest files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certificates::{
    certify_t1, certify_t3_pzf, certify_t5_zf, certify_t8, default_lambda_grid, f_pzf, f_zf, CertificateReport,
    Theorem, Verdict,
};
use crate::data::{MaskedDataset, SubspaceArrangement, ViewTag};
use crate::geometry::{compute_zeta, geometry_report, inradius, InradiusMethod};
use crate::lasso::LassoOptions;
use crate::pipeline::{cluster, solve_column, LambdaRule, SelfExpression, Variant};
use crate::random_model::{alpha, beta, generate, RandomModelParams};
use crate::rng;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("existing output {path} does not match this sweep: {reason}")]
    ResumeMismatch { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: usize,
    pub d: usize,
    pub ambient_dim: usize,
    pub rho: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub omega: Vec<f64>,
    pub variants: Vec<String>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSection {
    /// `adaptive` or `fixed`.
    pub rule: String,
    pub value: f64,
}

/// A sweep profile, stored as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub version: u32,
    pub seed: u64,
    pub model: ModelSection,
    pub sweep: SweepSection,
    pub lambda: LambdaSection,
}

impl Default for SweepConfig {
    /// The desk-scale profile: three 5-dimensional subspaces in `R^100`.
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 2024,
            model: ModelSection { n: 3, d: 5, ambient_dim: 100, rho: 10.0, epsilon: 0.001 },
            sweep: SweepSection {
                omega: (0..=6).map(|i| i as f64 / 10.0).collect(),
                variants: vec!["zf".into(), "pzf".into()],
                trials: 20,
            },
            lambda: LambdaSection { rule: "adaptive".into(), value: 2.0 },
        }
    }
}

/// One grid point of a sweep: a missing ratio and its integer count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub omega: f64,
    pub missing: usize,
}

impl SweepConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(s).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn variants(&self) -> Result<Vec<Variant>, BenchError> {
        self.sweep
            .variants
            .iter()
            .map(|v| match v.parse::<Variant>() {
                Ok(Variant::Complete) => Err(BenchError::Config("sweeps compare zf and pzf only".into())),
                Ok(v) => Ok(v),
                Err(e) => Err(BenchError::Config(e)),
            })
            .collect()
    }

    pub fn lambda_rule(&self) -> Result<LambdaRule, BenchError> {
        let v = self.lambda.value;
        match self.lambda.rule.to_ascii_lowercase().as_str() {
            "adaptive" if v > 1.0 => Ok(LambdaRule::Adaptive(v)),
            "fixed" if v > 0.0 => Ok(LambdaRule::Fixed(v)),
            "adaptive" | "fixed" => Err(BenchError::Config(format!("invalid lambda value {v}"))),
            other => Err(BenchError::Config(format!("unknown lambda rule `{other}`"))),
        }
    }

    /// Grid points with `m = round(ωD)`, each checked against `m < D − d`.
    pub fn grid(&self) -> Result<Vec<GridPoint>, BenchError> {
        let (dim, d) = (self.model.ambient_dim, self.model.d);
        self.sweep
            .omega
            .iter()
            .map(|&omega| {
                if !(0.0..=1.0).contains(&omega) {
                    return Err(BenchError::Config(format!("omega {omega} outside [0, 1]")));
                }
                let missing = (omega * dim as f64).round() as usize;
                if missing + d >= dim {
                    return Err(BenchError::Config(format!(
                        "omega {omega} gives m = {missing}, which must be below D - d = {}",
                        dim - d
                    )));
                }
                Ok(GridPoint { omega, missing })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.version != CONFIG_VERSION {
            return Err(BenchError::Config(format!("unsupported config version {}", self.version)));
        }
        let m = &self.model;
        if m.n == 0 || m.d == 0 || m.d >= m.ambient_dim {
            return Err(BenchError::Config(format!("need n > 0 and 0 < d < D, got {m:?}")));
        }
        self.variants()?;
        self.lambda_rule()?;
        self.grid()?;
        Ok(())
    }

    fn params(&self, missing: usize, seed: u64) -> RandomModelParams {
        let m = &self.model;
        RandomModelParams { n: m.n, d: m.d, ambient_dim: m.ambient_dim, rho: m.rho, seed, missing, epsilon: m.epsilon }
    }
}

/// Reproducibility record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub solver: String,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, seed: u64, opts: &LassoOptions) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash,
            seed,
            solver: "proximal coordinate descent, duality-gap stopping".into(),
            solver_tol: opts.tol,
            solver_max_iter: opts.max_iter,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, BenchError> {
        fs::create_dir_all(dir)?;
        let path = dir.join("run-manifest.toml");
        fs::write(&path, toml::to_string(self).expect("manifest serializes"))?;
        Ok(path)
    }
}

/// Hash of an arbitrary set of CLI parameters, for commands without a config file.
pub fn params_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub omega: f64,
    pub missing: usize,
    pub variant: Variant,
    pub trial: usize,
    pub seed: u64,
    pub sp_rate: f64,
    pub clustering_error: f64,
    /// Fraction of anchors certified by the projected-zero-filled theorem (pzf rows).
    pub t3_pass: f64,
    /// Fraction of anchors certified by the zero-filled theorem (zf rows).
    pub t5_pass: f64,
    /// Anchors certified yet not subspace-preserving.
    pub cert_violations: usize,
    pub f_pzf: f64,
    pub f_zf: f64,
    pub error: Option<String>,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "omega,m,variant,trial,seed,sp_rate,clustering_error,t3_pass,t5_pass,cert_violations,f_pzf,f_zf,error";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.omega,
            self.missing,
            self.variant,
            self.trial,
            self.seed,
            self.sp_rate,
            self.clustering_error,
            self.t3_pass,
            self.t5_pass,
            self.cert_violations,
            self.f_pzf,
            self.f_zf,
            self.error.as_deref().unwrap_or("")
        )
    }

    /// Parses a row written by [`SweepRow::csv_row`].
    pub fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return None;
        }
        Some(Self {
            omega: f[0].parse().ok()?,
            missing: f[1].parse().ok()?,
            variant: f[2].parse().ok()?,
            trial: f[3].parse().ok()?,
            seed: f[4].parse().ok()?,
            sp_rate: f[5].parse().ok()?,
            clustering_error: f[6].parse().ok()?,
            t3_pass: f[7].parse().ok()?,
            t5_pass: f[8].parse().ok()?,
            cert_violations: f[9].parse().ok()?,
            f_pzf: f[10].parse().ok()?,
            f_zf: f[11].parse().ok()?,
            error: (!f[12].is_empty()).then(|| f[12].to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Mean sp_rate over trials for each (ω, variant), skipping failed cells.
    pub fn mean_sp_rate(&self, omega: f64, variant: Variant) -> f64 {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.omega == omega && r.variant == variant && r.error.is_none())
            .map(|r| r.sp_rate)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    /// Rows as they appear in the CSV, header first.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", SweepRow::CSV_HEADER);
        for r in &self.rows {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(|r| r.cert_violations).sum()
    }
}

/// Dataset seed for a cell; depends on the missing count and trial only, so
/// editing one grid point leaves the others untouched.
pub fn cell_seed(master: u64, missing: usize, trial: usize) -> u64 {
    rng::stream(master, rng::cell_stream(missing as u32, trial as u32)).next_u64()
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

/// Certificate pass fraction and violation count of the variant's theorem,
/// evaluated per anchor at the λ that anchor actually used.
fn certificate_fractions(
    dataset: &MaskedDataset,
    arrangement: &SubspaceArrangement,
    expr: &SelfExpression,
    opts: &LassoOptions,
) -> (f64, usize) {
    let tag = expr.variant.view_tag();
    let mut certified = 0usize;
    let mut violations = 0usize;
    for anchor in 0..dataset.len() {
        let lambda = expr.lambdas[anchor];
        if !lambda.is_finite() {
            continue;
        }
        let Ok(rep) = geometry_report(dataset, arrangement, anchor, tag, lambda, None, opts) else {
            continue;
        };
        let cert = match expr.variant {
            Variant::ProjectedZeroFilled => certify_t3_pzf(&rep),
            Variant::ZeroFilled => certify_t5_zf(&rep),
            Variant::Complete => certify_t8(rep.mu_lambda, rep.zeta, lambda),
        };
        if cert.is_certified() {
            certified += 1;
            if !expr.sp_flags[anchor] {
                violations += 1;
            }
        }
    }
    (certified as f64 / dataset.len() as f64, violations)
}

type Drawn = Result<(SubspaceArrangement, MaskedDataset), String>;

fn run_cell(
    cfg: &SweepConfig,
    point: GridPoint,
    shared: &Drawn,
    variant: Variant,
    trial: usize,
    seed: u64,
    opts: &LassoOptions,
) -> SweepRow {
    let (a, b) = {
        let p = cfg.params(point.missing, seed);
        let n_total = p.total_points().unwrap_or(0);
        (alpha(p.d, p.rho), beta(n_total, p.ambient_dim))
    };
    let eps = cfg.model.epsilon;
    let mut row = SweepRow {
        omega: point.omega,
        missing: point.missing,
        variant,
        trial,
        seed,
        sp_rate: f64::NAN,
        clustering_error: f64::NAN,
        t3_pass: f64::NAN,
        t5_pass: f64::NAN,
        cert_violations: 0,
        f_pzf: f_pzf(point.omega, a, b, eps),
        f_zf: f_zf(point.omega, a, b, eps),
        error: None,
    };
    let (arrangement, dataset) = match shared {
        Ok(pair) => pair,
        Err(e) => {
            row.error = Some(sanitize(e));
            return row;
        }
    };
    let rule = cfg.lambda_rule().expect("validated");
    match cluster(dataset, variant, rule, seed, opts) {
        Ok((expr, res)) => {
            row.sp_rate = res.sp_rate;
            row.clustering_error = res.clustering_error;
            let (pass, viol) = certificate_fractions(dataset, arrangement, &expr, opts);
            match variant {
                Variant::ProjectedZeroFilled => row.t3_pass = pass,
                _ => row.t5_pass = pass,
            }
            row.cert_violations = viol;
            let failed = expr.failures.iter().filter(|f| f.is_some()).count();
            if failed > 0 {
                row.error = Some(format!("{failed} column solves failed"));
            }
        }
        Err(e) => row.error = Some(sanitize(&e.to_string())),
    }
    row
}

/// Rows of one grid point in canonical (variant, trial) order.
fn run_grid_point(cfg: &SweepConfig, point: GridPoint, variants: &[Variant], opts: &LassoOptions) -> Vec<SweepRow> {
    let trials = cfg.sweep.trials;
    // both variants see the same dataset for a given trial
    let data: Vec<(u64, Drawn)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = cell_seed(cfg.seed, point.missing, t);
            (seed, generate(&cfg.params(point.missing, seed)).map_err(|e| e.to_string()))
        })
        .collect();
    let cells: Vec<(Variant, usize)> = variants.iter().flat_map(|&v| (0..trials).map(move |t| (v, t))).collect();
    cells.into_par_iter().map(|(v, t)| run_cell(cfg, point, &data[t].1, v, t, data[t].0, opts)).collect()
}

/// Runs the sweep, appending rows to `csv_path` one grid point at a time.
/// Complete grid points already present in the file are kept and skipped; a
/// partially written trailing grid point is discarded and recomputed.
pub fn run_sweep(cfg: &SweepConfig, csv_path: &Path, opts: &LassoOptions) -> Result<SweepResult, BenchError> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let variants = cfg.variants()?;
    let block = variants.len() * cfg.sweep.trials;

    let mut done: Vec<SweepRow> = Vec::new();
    if csv_path.exists() {
        let reader = BufReader::new(File::open(csv_path)?);
        let mut lines = reader.lines();
        let mismatch = |reason: String| BenchError::ResumeMismatch { path: csv_path.to_path_buf(), reason };
        if let Some(header) = lines.next().transpose()? {
            if header != SweepRow::CSV_HEADER {
                return Err(mismatch("header differs".into()));
            }
        }
        for line in lines {
            let line = line?;
            match SweepRow::parse(&line) {
                Some(row) => done.push(row),
                None => break,
            }
        }
        done.truncate(done.len() / block * block);
        for (i, row) in done.iter().enumerate() {
            let (g, rest) = (i / block, i % block);
            let (v, t) = (variants[rest / cfg.sweep.trials], rest % cfg.sweep.trials);
            let want = grid.get(g).ok_or_else(|| mismatch("more grid points than configured".into()))?;
            if row.missing != want.missing
                || row.omega != want.omega
                || row.variant != v
                || row.trial != t
                || row.seed != cell_seed(cfg.seed, want.missing, t)
            {
                return Err(mismatch(format!("row {} is not ({}, {v}, {t})", i + 2, want.omega)));
            }
        }
    }
    if let Some(parent) = csv_path.parent() {
        fs::create_dir_all(parent)?;
    }
    // rewrite the kept prefix so a torn trailing block disappears
    let mut out = BufWriter::new(File::create(csv_path)?);
    writeln!(out, "{}", SweepRow::CSV_HEADER)?;
    for row in &done {
        writeln!(out, "{}", row.csv_row())?;
    }
    out.flush()?;

    let mut rows = done;
    for point in &grid[rows.len() / block.max(1)..] {
        log::info!("sweep: omega = {} (m = {})", point.omega, point.missing);
        let block_rows = run_grid_point(cfg, *point, &variants, opts);
        for row in &block_rows {
            writeln!(out, "{}", row.csv_row())?;
        }
        out.flush()?;
        rows.extend(block_rows);
    }
    Ok(SweepResult { rows })
}

/// `(ω, f_pzf, f_zf)` on `points` evenly spaced values of `[0, 1]`.
pub fn fig1_curve(alpha: f64, beta: f64, eps: f64, points: usize) -> Vec<(f64, f64, f64)> {
    (0..points)
        .map(|i| {
            let w = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
            (w, f_pzf(w, alpha, beta, eps), f_zf(w, alpha, beta, eps))
        })
        .collect()
}

/// Minimal SVG line plot of both margin curves and the zero line.
pub fn fig1_svg(curve: &[(f64, f64, f64)]) -> String {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let lo = curve.iter().flat_map(|p| [p.1, p.2]).fold(0.0f64, f64::min);
    let hi = curve.iter().flat_map(|p| [p.1, p.2]).fold(0.0f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (y0, y1) = (lo - 0.05 * span, hi + 0.05 * span);
    let sx = |x: f64| pad + x * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let line = |pick: fn(&(f64, f64, f64)) -> f64| -> String {
        curve.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(pick(p)))).collect::<Vec<_>>().join(" ")
    };
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * pad,
        h - 2.0 * pad
    ));
    s.push_str(&format!(
        "<line x1=\"{}\" y1=\"{:.2}\" x2=\"{}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n",
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(0.0)
    ));
    s.push_str(&format!("<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>\n", line(|p| p.1)));
    s.push_str(&format!("<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"{}\"/>\n", line(|p| p.2)));
    for i in 0..=4 {
        let x = i as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x}</text>\n",
            sx(x),
            h - pad + 18.0
        ));
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{y:.2}</text>\n",
            pad - 6.0,
            sy(y) + 4.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">missing ratio ω</text>\n",
        w / 2.0,
        h - 10.0
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" fill=\"#1f77b4\">f_PZF(ω)</text>\n",
        w - pad - 90.0,
        pad + 20.0
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" fill=\"#d62728\">f_ZF(ω)</text>\n",
        w - pad - 90.0,
        pad + 38.0
    ));
    s.push_str("</svg>\n");
    s
}

/// Writes `fig1.csv` and the SVG plot; returns the curve.
pub fn emit_fig1(
    alpha: f64,
    beta: f64,
    eps: f64,
    grid_points: usize,
    out_csv: &Path,
    out_svg: &Path,
) -> Result<Vec<(f64, f64, f64)>, BenchError> {
    if grid_points < 2 {
        return Err(BenchError::Config("need at least two grid points".into()));
    }
    let curve = fig1_curve(alpha, beta, eps, grid_points);
    let mut csv = String::from("omega,f_pzf,f_zf\n");
    for (w, p, z) in &curve {
        csv.push_str(&format!("{w},{p},{z}\n"));
    }
    for path in [out_csv, out_svg] {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(out_csv, csv)?;
    fs::write(out_svg, fig1_svg(&curve))?;
    Ok(curve)
}

/// 2×2 tally of certificate verdicts against solver outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub certified_preserved: usize,
    pub certified_violated: usize,
    pub uncertified_preserved: usize,
    pub uncertified_violated: usize,
}

impl Confusion {
    pub fn record(&mut self, certified: bool, preserved: bool) {
        match (certified, preserved) {
            (true, true) => self.certified_preserved += 1,
            (true, false) => self.certified_violated += 1,
            (false, true) => self.uncertified_preserved += 1,
            (false, false) => self.uncertified_violated += 1,
        }
    }

    pub fn certified(&self) -> usize {
        self.certified_preserved + self.certified_violated
    }

    pub fn total(&self) -> usize {
        self.certified() + self.uncertified_preserved + self.uncertified_violated
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.certified_preserved += other.certified_preserved;
        self.certified_violated += other.certified_violated;
        self.uncertified_preserved += other.uncertified_preserved;
        self.uncertified_violated += other.uncertified_violated;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    /// Per anchor, the default 40-point grid built from that anchor's ζ.
    PerAnchor,
    Fixed(Vec<f64>),
}

/// One (anchor, λ, theorem) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonEntry {
    pub anchor: usize,
    pub lambda: f64,
    pub report: CertificateReport,
    pub preserved: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonReport {
    pub entries: Vec<ComparisonEntry>,
    pub t1: Confusion,
    pub t3: Confusion,
    pub t5: Confusion,
    pub t8: Confusion,
}

impl ComparisonReport {
    pub fn confusion(&self, theorem: Theorem) -> Option<&Confusion> {
        match theorem {
            Theorem::T1 => Some(&self.t1),
            Theorem::T3 => Some(&self.t3),
            Theorem::T5 => Some(&self.t5),
            Theorem::T8 => Some(&self.t8),
            _ => None,
        }
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "theorem,certified_preserved,certified_violated,uncertified_preserved,uncertified_violated\n",
        );
        for t in [Theorem::T1, Theorem::T3, Theorem::T5, Theorem::T8] {
            let c = self.confusion(t).expect("tabulated theorem");
            s.push_str(&format!(
                "{t},{},{},{},{}\n",
                c.certified_preserved, c.certified_violated, c.uncertified_preserved, c.uncertified_violated
            ));
        }
        s
    }
}

/// Evaluates the complete-data (T1, T8), zero-filled (T5) and
/// projected-zero-filled (T3) certificates for `anchors` over a λ grid, next
/// to the subspace-preserving flag of an actual solve at each λ. T1 only
/// counts when the inradius can be certified (dimension ≤ 2 or a feasible
/// vertex enumeration); otherwise it is tallied as uncertified.
pub fn compare_certificates(
    dataset: &MaskedDataset,
    arrangement: &SubspaceArrangement,
    anchors: &[usize],
    grid: &LambdaGrid,
    opts: &LassoOptions,
) -> ComparisonReport {
    let per_anchor: Vec<Vec<(ComparisonEntry, Theorem)>> = anchors
        .par_iter()
        .map(|&anchor| {
            let mut out = Vec::new();
            let Ok(complete) = dataset.view(ViewTag::Complete, anchor) else {
                return out;
            };
            let Ok(zeta) = compute_zeta(&complete, dataset) else {
                return out;
            };
            let lambdas = match grid {
                LambdaGrid::PerAnchor => default_lambda_grid(zeta),
                LambdaGrid::Fixed(v) => v.clone(),
            };
            let companions = dataset.companions(anchor);
            let r = inradius(&dataset.points().select_columns(companions.iter()), InradiusMethod::Polytope)
                .or_else(|_| {
                    inradius(&dataset.points().select_columns(companions.iter()), InradiusMethod::Sampled { seed: 0 })
                })
                .ok();
            for lambda in lambdas {
                for (variant, tag) in [
                    (Variant::Complete, ViewTag::Complete),
                    (Variant::ZeroFilled, ViewTag::ZeroFilled),
                    (Variant::ProjectedZeroFilled, ViewTag::ProjectedZeroFilled),
                ] {
                    let Ok(rep) = geometry_report(dataset, arrangement, anchor, tag, lambda, None, opts) else {
                        continue;
                    };
                    let Ok(col) = solve_column(dataset, variant, anchor, LambdaRule::Fixed(lambda), opts) else {
                        continue;
                    };
                    let mut reports = Vec::new();
                    match variant {
                        Variant::Complete => {
                            reports.push((certify_t8(rep.mu_lambda, rep.zeta, lambda), Theorem::T8));
                            if let Some(r) = r {
                                reports.push((
                                    certify_t1(rep.mu_lambda, r.value, r.certified, rep.zeta, lambda),
                                    Theorem::T1,
                                ));
                            }
                        }
                        Variant::ZeroFilled => reports.push((certify_t5_zf(&rep), Theorem::T5)),
                        Variant::ProjectedZeroFilled => reports.push((certify_t3_pzf(&rep), Theorem::T3)),
                    }
                    for (report, theorem) in reports {
                        out.push((ComparisonEntry { anchor, lambda, report, preserved: col.sp_flag }, theorem));
                    }
                }
            }
            out
        })
        .collect();
    let mut result = ComparisonReport::default();
    for (entry, theorem) in per_anchor.into_iter().flatten() {
        let certified = entry.report.verdict == Verdict::Certified;
        let slot = match theorem {
            Theorem::T1 => &mut result.t1,
            Theorem::T3 => &mut result.t3,
            Theorem::T5 => &mut result.t5,
            _ => &mut result.t8,
        };
        slot.record(certified, entry.preserved);
        result.entries.push(entry);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SweepConfig {
        SweepConfig {
            seed: 5,
            model: ModelSection { n: 2, d: 2, ambient_dim: 12, rho: 3.0, epsilon: 0.001 },
            sweep: SweepSection { omega: vec![0.0, 0.25], variants: vec!["zf".into(), "pzf".into()], trials: 2 },
            ..SweepConfig::default()
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = SweepConfig::default();
        let text = cfg.to_toml_string();
        assert!(text.contains("[model]") && text.contains("[sweep]") && text.contains("[lambda]"));
        let back = SweepConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
        let other = SweepConfig { seed: 1, ..cfg.clone() };
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = SweepConfig::default();
        cfg.sweep.omega = vec![0.96];
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::default();
        cfg.lambda.rule = "auto".into();
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::default();
        cfg.version = 2;
        assert!(cfg.validate().is_err());
        assert!(SweepConfig::from_toml_str("version = 1\nbogus = 3\n").is_err());
    }

    #[test]
    fn grid_rounds_missing_counts() {
        let cfg = SweepConfig::default();
        let g = cfg.grid().unwrap();
        assert_eq!(g.iter().map(|p| p.missing).collect::<Vec<_>>(), vec![0, 10, 20, 30, 40, 50, 60]);
    }

    #[test]
    fn sweep_rows_and_resume_are_byte_identical() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let opts = LassoOptions::default();
        let full = run_sweep(&cfg, &path, &opts).unwrap();
        assert_eq!(full.rows.len(), 2 * 2 * 2);
        for r in &full.rows {
            assert!((0.0..=1.0).contains(&r.sp_rate), "{r:?}");
            assert!(r.error.is_none());
            assert_eq!(r.cert_violations, 0);
        }
        // zero missing entries: both variants solve identical problems
        for t in 0..2 {
            let zf = &full.rows[t];
            let pzf = &full.rows[2 + t];
            assert_eq!(zf.variant, Variant::ZeroFilled);
            assert!((zf.sp_rate - pzf.sp_rate).abs() < 1e-3);
        }
        let reference = fs::read(&path).unwrap();

        // cut the file inside the second grid point and resume
        let text = String::from_utf8(reference.clone()).unwrap();
        let keep: Vec<&str> = text.lines().take(1 + 4 + 2).collect();
        fs::write(&path, keep.join("\n") + "\n").unwrap();
        let resumed = run_sweep(&cfg, &path, &opts).unwrap();
        assert_eq!(fs::read(&path).unwrap(), reference);
        assert_eq!(resumed.to_csv(), full.to_csv());
        assert_eq!(full.to_csv().as_bytes(), &reference[..]);

        // a different seed cannot resume this file
        let other = SweepConfig { seed: 6, ..cfg };
        assert!(matches!(run_sweep(&other, &path, &opts), Err(BenchError::ResumeMismatch { .. })));
    }

    #[test]
    fn seeds_are_isolated_per_grid_point() {
        let a = small_config();
        let mut b = small_config();
        b.sweep.omega = vec![0.25];
        let dir = tempfile::tempdir().unwrap();
        let opts = LassoOptions::default();
        let ra = run_sweep(&a, &dir.path().join("a.csv"), &opts).unwrap();
        let rb = run_sweep(&b, &dir.path().join("b.csv"), &opts).unwrap();
        let tail = SweepResult { rows: ra.rows.iter().filter(|r| r.omega == 0.25).cloned().collect() };
        assert_eq!(tail.to_csv(), rb.to_csv());
    }

    #[test]
    fn failing_cells_become_nan_rows() {
        let cfg = SweepConfig {
            model: ModelSection { n: 2, d: 2, ambient_dim: 12, rho: 2.25, epsilon: 0.001 },
            ..small_config()
        };
        let row = run_grid_point(&cfg, GridPoint { omega: 0.0, missing: 0 }, &[Variant::ZeroFilled], &Default::default());
        assert!(row.iter().all(|r| r.sp_rate.is_nan() && r.error.as_deref().unwrap().contains("not an integer")));
    }

    #[test]
    fn fig1_files_and_shape() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, svg) = (dir.path().join("fig1.csv"), dir.path().join("fig1.svg"));
        let curve = emit_fig1(0.9, 0.01, 0.001, 101, &csv, &svg).unwrap();
        assert!(curve.iter().all(|p| p.1 > p.2));
        let text = fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 102);
        let plot = fs::read_to_string(&svg).unwrap();
        assert_eq!(plot.matches("<polyline").count(), 2);
        assert!(emit_fig1(0.9, 0.01, 0.001, 1, &csv, &svg).is_err());
        let flat = fig1_curve(0.0, 0.0, 0.0, 11);
        assert!(flat.iter().all(|p| p.1 <= 0.0));
        assert_eq!(flat[0].1, 0.0);
    }

    #[test]
    fn comparison_below_threshold_certifies_nothing() {
        let p = RandomModelParams { n: 2, d: 2, ambient_dim: 12, rho: 3.0, seed: 3, missing: 0, epsilon: 0.0 };
        let (arr, ds) = generate(&p).unwrap();
        let rep = compare_certificates(&ds, &arr, &[0, 1], &LambdaGrid::Fixed(vec![1e-3]), &Default::default());
        for t in [Theorem::T1, Theorem::T3, Theorem::T5, Theorem::T8] {
            let c = rep.confusion(t).unwrap();
            assert_eq!(c.certified(), 0);
            assert_eq!(c.uncertified_preserved, 0);
        }
        assert!(rep.summary_csv().lines().count() == 5);
    }

    #[test]
    fn sweep_row_parses_its_own_output() {
        let row = SweepRow {
            omega: 0.1,
            missing: 10,
            variant: Variant::ProjectedZeroFilled,
            trial: 3,
            seed: 42,
            sp_rate: 0.5,
            clustering_error: f64::NAN,
            t3_pass: 0.25,
            t5_pass: f64::NAN,
            cert_violations: 0,
            f_pzf: -0.1,
            f_zf: -0.2,
            error: Some("boom".into()),
        };
        let back = SweepRow::parse(&row.csv_row()).unwrap();
        assert_eq!(back.csv_row(), row.csv_row());
    }
}
