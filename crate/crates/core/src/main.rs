use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use ssc_core::bench::{emit_fig1, params_hash, run_sweep, RunManifest, SweepConfig};
use ssc_core::certificates::{
    certify_t1, certify_t3_pzf, certify_t4, certify_t5_zf, certify_t6, certify_t7_at, certify_t8, default_lambda_grid,
    log_grid, noisy_quantities, CertificateReport, Theorem,
};
use ssc_core::data::{MaskedDataset, SubspaceArrangement, ViewTag};
use ssc_core::geometry::{compute_zeta, geometry_report, inradius, InradiusMethod};
use ssc_core::lasso::LassoOptions;
use ssc_core::pipeline::{cluster, LambdaRule, Variant};
use ssc_core::random_model::{
    alpha, beta, generate, sphere_point, validate_inner_product_tail, validate_inradius_bound,
    validate_projection_norm, RandomModelParams, ValidationRow, RHO_REGIME,
};
use ssc_core::rng;

/// Sparse subspace clustering with missing entries.
///
/// Logarithms in α(d, ρ) = sqrt(log ρ / 2d) and β(N, D) = sqrt(6 log N / D)
/// are natural logarithms.
#[derive(Debug, Parser)]
#[command(name = "ssc", version)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Log solver diagnostics.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a dataset from the random union-of-subspaces model.
    Generate(GenerateArgs),
    /// Self-express, build the affinity and cluster a dataset.
    Cluster(ClusterArgs),
    /// Evaluate a certificate per anchor over a λ grid.
    Certify(CertifyArgs),
    /// Run a missing-ratio sweep from a config file.
    Sweep(SweepArgs),
    /// Write the margin curves f_PZF and f_ZF as CSV and SVG.
    Fig1(Fig1Args),
    /// Monte-Carlo checks of the concentration bounds.
    ValidateLemmas(ValidateArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long = "D", alias = "ambient-dim")]
    ambient_dim: usize,
    #[arg(long)]
    rho: f64,
    /// Missing entries per point.
    #[arg(long, default_value_t = 0)]
    m: usize,
    /// Dataset file, relative to --out-dir.
    #[arg(long, default_value = "dataset.txt")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Dataset file written by `generate`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "pzf")]
    variant: Variant,
    /// Fixed λ for every column.
    #[arg(long, conflicts_with = "adaptive")]
    lambda: Option<f64>,
    /// Adaptive rule λ_j = a / ‖D_jᵀ y_j‖_∞ (a > 1).
    #[arg(long)]
    adaptive: Option<f64>,
    #[arg(long, default_value = "cluster.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// View whose quantities feed the certificate; defaults to the theorem's own.
    #[arg(long)]
    view: Option<ViewTag>,
    #[arg(long)]
    theorem: Theorem,
    /// `lo:hi:steps`, log spaced; defaults to 40 points in [0.5/ζ, 20/ζ] per anchor.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Single anchor; all points when omitted.
    #[arg(long)]
    anchor: Option<usize>,
    /// ε in the rate-level margins (t4, t6).
    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,
    /// Noise norm for t7; each point gets a random perturbation of this norm.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value = "certify.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// TOML profile; the built-in desk-scale profile when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the built-in profile to this path and exit.
    #[arg(long)]
    dump_config: Option<PathBuf>,
    /// Overrides the trial count of the profile.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Fig1Args {
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    #[arg(long, default_value = "fig1.csv")]
    csv: PathBuf,
    #[arg(long, default_value = "fig1.svg")]
    svg: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 10.0)]
    rho: f64,
    #[arg(long = "D", default_value_t = 100)]
    ambient_dim: usize,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value = "lemmas.csv")]
    out: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose {
        "debug"
    } else {
        "warn"
    }))
    .init();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let opts = LassoOptions::default();
    let (name, hash) = match &cli.command {
        Command::Generate(a) => ("generate", generate_cmd(&cli, a)?),
        Command::Cluster(a) => ("cluster", cluster_cmd(&cli, a, &opts)?),
        Command::Certify(a) => ("certify", certify_cmd(&cli, a, &opts)?),
        Command::Sweep(a) => ("sweep", sweep_cmd(&cli, a, &opts)?),
        Command::Fig1(a) => ("fig1", fig1_cmd(&cli, a)?),
        Command::ValidateLemmas(a) => ("validate-lemmas", validate_cmd(&cli, a)?),
    };
    RunManifest::new(name, hash, cli.seed, &opts).write(&cli.out_dir)?;
    Ok(())
}

fn out_path(cli: &Cli, p: &Path) -> PathBuf {
    cli.out_dir.join(p)
}

fn load_dataset(path: &Path) -> Result<MaskedDataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    MaskedDataset::read_from(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn generate_cmd(cli: &Cli, a: &GenerateArgs) -> Result<String> {
    let params = RandomModelParams {
        n: a.n,
        d: a.d,
        ambient_dim: a.ambient_dim,
        rho: a.rho,
        seed: cli.seed,
        missing: a.m,
        epsilon: 0.0,
    };
    if a.rho < RHO_REGIME {
        log::warn!("rho = {} is below {RHO_REGIME}; the concentration bounds may not apply", a.rho);
    }
    let (_, ds) = generate(&params)?;
    let path = out_path(cli, &a.out);
    ds.write_to(BufWriter::new(File::create(&path)?))?;
    println!("wrote {} points to {}", ds.len(), path.display());
    Ok(params_hash(&format!("generate {:?} seed={}", a, cli.seed)))
}

fn cluster_cmd(cli: &Cli, a: &ClusterArgs, opts: &LassoOptions) -> Result<String> {
    let ds = load_dataset(&a.data)?;
    let rule = match (a.lambda, a.adaptive) {
        (Some(l), None) => LambdaRule::Fixed(l),
        (None, Some(x)) => LambdaRule::Adaptive(x),
        (None, None) => LambdaRule::Adaptive(2.0),
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    let (expr, res) = cluster(&ds, a.variant, rule, cli.seed, opts)?;
    let path = out_path(cli, &a.out);
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "point,label,assignment,sp_flag,lambda")?;
    for j in 0..ds.len() {
        writeln!(w, "{j},{},{},{},{}", ds.labels()[j], res.assignments[j], expr.sp_flags[j], expr.lambdas[j])?;
    }
    writeln!(w, "summary,sp_rate={},clustering_error={},,", res.sp_rate, res.clustering_error)?;
    w.flush()?;
    let failed = expr.failures.iter().filter(|f| f.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} column solves did not converge");
    }
    println!("sp_rate = {:.4}, clustering_error = {:.4}", res.sp_rate, res.clustering_error);
    Ok(params_hash(&format!("cluster {:?} seed={}", a, cli.seed)))
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, steps] = parts.as_slice() else {
        bail!("lambda grid must be lo:hi:steps, got `{spec}`");
    };
    let (lo, hi, steps): (f64, f64, usize) = (lo.parse()?, hi.parse()?, steps.parse()?);
    if !(lo > 0.0 && hi >= lo && steps > 0) {
        bail!("lambda grid needs 0 < lo <= hi and steps > 0");
    }
    Ok(log_grid(lo, hi, steps))
}

fn default_view(t: Theorem) -> ViewTag {
    match t {
        Theorem::T1 | Theorem::T8 => ViewTag::Complete,
        Theorem::T3 | Theorem::T4 => ViewTag::ProjectedZeroFilled,
        Theorem::T5 | Theorem::T6 | Theorem::T7 => ViewTag::ZeroFilled,
    }
}

fn certify_cmd(cli: &Cli, a: &CertifyArgs, opts: &LassoOptions) -> Result<String> {
    let ds = load_dataset(&a.data)?;
    let arr = SubspaceArrangement::from_labeled_points(ds.points(), ds.labels(), ds.n_clusters())?;
    let view = a.view.unwrap_or_else(|| default_view(a.theorem));
    let fixed = a.lambda_grid.as_deref().map(parse_grid).transpose()?;
    let anchors: Vec<usize> = match a.anchor {
        Some(k) if k < ds.len() => vec![k],
        Some(k) => bail!("anchor {k} out of range (dataset has {} points)", ds.len()),
        None => (0..ds.len()).collect(),
    };
    let noise = (a.theorem == Theorem::T7).then(|| {
        let mut r = rng::stream(cli.seed, 1);
        let cols: Vec<_> = (0..ds.len()).map(|_| sphere_point(&mut r, ds.points().nrows()) * a.delta).collect();
        DMatrix::from_columns(&cols)
    });
    let path = out_path(cli, &a.out);
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "anchor,view,lambda,{}", CertificateReport::CSV_HEADER)?;
    let mut certified = 0usize;
    let mut rows = 0usize;
    for &anchor in &anchors {
        let zeta = compute_zeta(&ds.view(view, anchor)?, &ds)?;
        let lambdas = fixed.clone().unwrap_or_else(|| default_lambda_grid(zeta));
        for lambda in lambdas {
            let report = certify_one(&ds, &arr, anchor, view, a, lambda, noise.as_ref(), opts)?;
            certified += report.is_certified() as usize;
            rows += 1;
            writeln!(w, "{anchor},{view},{lambda},{}", report.csv_row())?;
        }
    }
    w.flush()?;
    println!("{}: {certified} of {rows} (anchor, lambda) pairs certified", a.theorem);
    Ok(params_hash(&format!("certify {:?} seed={}", a, cli.seed)))
}

#[allow(clippy::too_many_arguments)]
fn certify_one(
    ds: &MaskedDataset,
    arr: &SubspaceArrangement,
    anchor: usize,
    view: ViewTag,
    a: &CertifyArgs,
    lambda: f64,
    noise: Option<&DMatrix<f64>>,
    opts: &LassoOptions,
) -> Result<CertificateReport> {
    let label = ds.labels()[anchor];
    Ok(match a.theorem {
        Theorem::T4 | Theorem::T6 => {
            let dim = ds.points().nrows();
            let d = arr.dims()[label];
            let per = ds.labels().iter().filter(|&&l| l == label).count();
            let omega = ds.pattern(anchor).missing_count() as f64 / dim as f64;
            let (al, be) = (alpha(d, per as f64 / d as f64), beta(ds.len(), dim));
            if a.theorem == Theorem::T4 {
                certify_t4(omega, al, be, a.epsilon)
            } else {
                certify_t6(omega, al, be, a.epsilon)
            }
        }
        Theorem::T7 => {
            let q = noisy_quantities(
                ds.points(),
                noise.expect("noise drawn for t7"),
                ds.labels(),
                arr.basis(label),
                anchor,
                lambda,
                InradiusMethod::Polytope,
                opts,
            )
            .or_else(|_| {
                noisy_quantities(
                    ds.points(),
                    noise.expect("noise drawn for t7"),
                    ds.labels(),
                    arr.basis(label),
                    anchor,
                    lambda,
                    InradiusMethod::Sampled { seed: anchor as u64 },
                    opts,
                )
            })?;
            certify_t7_at(&q)
        }
        t => {
            let rep = geometry_report(ds, arr, anchor, view, lambda, None, opts)?;
            match t {
                Theorem::T1 => {
                    let companions = ds.points().select_columns(ds.companions(anchor).iter());
                    let r = inradius(&companions, InradiusMethod::Polytope)
                        .or_else(|_| inradius(&companions, InradiusMethod::Sampled { seed: anchor as u64 }))?;
                    certify_t1(rep.mu_lambda, r.value, r.certified, rep.zeta, lambda)
                }
                Theorem::T3 => certify_t3_pzf(&rep),
                Theorem::T5 => certify_t5_zf(&rep),
                _ => certify_t8(rep.mu_lambda, rep.zeta, lambda),
            }
        }
    })
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs, opts: &LassoOptions) -> Result<String> {
    let mut cfg = match &a.config {
        Some(p) => SweepConfig::load(p)?,
        None => SweepConfig { seed: cli.seed, ..SweepConfig::default() },
    };
    if let Some(p) = &a.dump_config {
        fs::write(p, cfg.to_toml_string())?;
        println!("wrote {}", p.display());
        return Ok(cfg.hash());
    }
    if let Some(t) = a.trials {
        cfg.sweep.trials = t;
    }
    cfg.validate()?;
    let path = out_path(cli, &a.out);
    let result = run_sweep(&cfg, &path, opts)?;
    println!("omega,variant,mean_sp_rate");
    for point in cfg.grid()? {
        for v in cfg.variants()? {
            println!("{},{v},{:.4}", point.omega, result.mean_sp_rate(point.omega, v));
        }
    }
    if result.total_violations() > 0 {
        log::error!("{} certified anchors were not subspace preserving", result.total_violations());
    }
    Ok(cfg.hash())
}

fn fig1_cmd(cli: &Cli, a: &Fig1Args) -> Result<String> {
    let curve = emit_fig1(a.alpha, a.beta, a.epsilon, a.points, &out_path(cli, &a.csv), &out_path(cli, &a.svg))?;
    let above = curve.iter().filter(|p| p.1 > p.2).count();
    println!("f_pzf > f_zf at {above} of {} points", curve.len());
    Ok(params_hash(&format!("fig1 {a:?}")))
}

fn validate_cmd(cli: &Cli, a: &ValidateArgs) -> Result<String> {
    let rows: Vec<ValidationRow> = vec![
        validate_inradius_bound(a.trials, a.d, a.rho, cli.seed),
        validate_inner_product_tail(a.trials, a.ambient_dim, a.epsilon, cli.seed),
        validate_projection_norm(a.trials, a.ambient_dim, a.d, a.epsilon, cli.seed),
    ];
    let path = out_path(cli, &a.out);
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "{}", ValidationRow::CSV_HEADER)?;
    for r in &rows {
        writeln!(w, "{}", r.csv_row())?;
        println!("{}", r.csv_row());
    }
    w.flush()?;
    Ok(params_hash(&format!("validate-lemmas {:?} seed={}", a, cli.seed)))
}
