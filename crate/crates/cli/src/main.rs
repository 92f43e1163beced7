use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use kl_legendre::assembly::{duffy_block, plain_tensor_block, reference_block, BlockCache, DuffyConfig};
use kl_legendre::klfield::{grid_points, DiagnosticQuad};
use kl_legendre::kronop::AssemblyOptions;
use kl_legendre::orthopoly::{composite_rule, gauss_rule, Interval};
use kl_legendre::sefit::{FitStatus, NewtonConfig, QuadConfig};
use kl_legendre::{decompose, fit_mixture, DecomposeOptions, Domain64, FitConfig, KLExpansion, KernelId, KernelSpec, SqExpMixture};

mod output;

use output::Output;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "kl-legendre", version, about = "Karhunen-Loève expansions of isotropic Gaussian random fields")]
struct Cli {
    /// Worker threads; 1 fixes the floating-point summation order.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Fit a squared-exponential mixture to a kernel.
    Fit(FitArgs),
    /// Build and store a KL expansion from a mixture.
    Decompose(DecomposeArgs),
    /// Draw field samples from an expansion.
    Sample(SampleArgs),
    /// Write the spectrum of an expansion.
    Eigs(EigsArgs),
    /// Residual norms of the leading eigenpairs (1-D only).
    Residual(ResidualArgs),
    /// Covariance reconstruction error in L² (1-D only).
    CovError(CovErrorArgs),
    /// Accuracy of the Duffy and plain tensor rules against a reference block.
    DuffyBench(DuffyBenchArgs),
    /// Gauss-Legendre nodes and weights.
    Quadrature(QuadratureArgs),
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long, default_value_t = 1.0)]
    length_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Fit range [0, L].
    #[arg(long = "L", default_value_t = 2.0)]
    domain_length: f64,
    #[arg(long, default_value_t = 20)]
    k_max: usize,
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long, default_value_t = 0.2)]
    ratio: f64,
    #[arg(long, default_value_t = 100)]
    points_per_panel: usize,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Mixture JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Per-rank CSV report; stdout if omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DecomposeArgs {
    #[arg(long)]
    mixture: PathBuf,
    /// Box as `lo,hi` per axis joined by `x`, e.g. `0,1x0,2`.
    #[arg(long, default_value = "0,1")]
    domain: String,
    #[arg(long)]
    degree: usize,
    #[arg(long)]
    pairs: usize,
    #[arg(long, default_value_t = 1e-10)]
    eig_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Duffy stretching exponent for every term (default: chosen per exponent).
    #[arg(long, requires = "duffy_q")]
    duffy_g: Option<u32>,
    #[arg(long, requires = "duffy_g")]
    duffy_q: Option<usize>,
    /// Directory for cached 1-D blocks.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Output base name; writes `<out>.kl.json` and `<out>.kl.bin`.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SampleArgs {
    #[arg(long)]
    expansion: PathBuf,
    /// Number of KL terms (default: all stored).
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid as `lo,hi,count` per axis joined by `x`; default 11 points per domain axis.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    /// Index of the first sample.
    #[arg(long, default_value_t = 0)]
    first: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EigsArgs {
    #[arg(long)]
    expansion: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ResidualArgs {
    #[arg(long)]
    expansion: PathBuf,
    /// Leading pairs to check (default: up to 10).
    #[arg(long)]
    pairs: Option<usize>,
    /// Gauss points on each side of the split at y = x.
    #[arg(long, default_value_t = 80)]
    inner_points: usize,
    #[arg(long, default_value_t = 4)]
    outer_panels: usize,
    #[arg(long, default_value_t = 50)]
    outer_points: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CovErrorArgs {
    #[arg(long)]
    expansion: PathBuf,
    /// Comma-separated truncations (default: 0, powers of two, all pairs).
    #[arg(long, value_delimiter = ',')]
    truncations: Option<Vec<usize>>,
    /// Gauss points per direction on the unit square of the triangle map.
    #[arg(long, default_value_t = 200)]
    quad_points: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DuffyBenchArgs {
    #[arg(long, default_value_t = 20)]
    degree: usize,
    #[arg(long, value_delimiter = ',', default_value = "10,1e4,1e7,1e10")]
    b: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    g: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    q: Vec<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct QuadratureArgs {
    #[arg(long)]
    points: usize,
    /// Plain rule on `lo,hi`.
    #[arg(long, default_value = "-1,1", conflicts_with = "length")]
    interval: String,
    /// Composite geometric rule on [0, length] instead.
    #[arg(long)]
    length: Option<f64>,
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long, default_value_t = 0.2)]
    ratio: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok,
    ToleranceNotMet,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }))
        .format_timestamp(None)
        .init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ToleranceNotMet) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Name and serialized flags of the invocation, written into every output.
struct Ctx {
    name: &'static str,
    flags: String,
}

impl Ctx {
    fn output(&self, path: Option<&Path>) -> Result<Output> {
        Output::create(path, VERSION, self.name, &self.flags)
    }

    fn generator(&self) -> String {
        format!("kl-legendre {VERSION} {} {}", self.name, self.flags)
    }
}

fn run(cmd: &Command) -> Result<Outcome> {
    let name = match cmd {
        Command::Fit(_) => "fit",
        Command::Decompose(_) => "decompose",
        Command::Sample(_) => "sample",
        Command::Eigs(_) => "eigs",
        Command::Residual(_) => "residual",
        Command::CovError(_) => "cov-error",
        Command::DuffyBench(_) => "duffy-bench",
        Command::Quadrature(_) => "quadrature",
    };
    let ctx = Ctx { name, flags: serde_json::to_string(cmd)? };
    match cmd {
        Command::Fit(a) => cmd_fit(a, &ctx),
        Command::Decompose(a) => cmd_decompose(a, &ctx),
        Command::Sample(a) => cmd_sample(a, &ctx),
        Command::Eigs(a) => cmd_eigs(a, &ctx),
        Command::Residual(a) => cmd_residual(a, &ctx),
        Command::CovError(a) => cmd_cov_error(a, &ctx),
        Command::DuffyBench(a) => cmd_duffy_bench(a, &ctx),
        Command::Quadrature(a) => cmd_quadrature(a, &ctx),
    }
}

fn cmd_fit(a: &FitArgs, ctx: &Ctx) -> Result<Outcome> {
    let id: KernelId = a.kernel.parse()?;
    let spec = KernelSpec::new(id, a.length_scale, a.variance)?;
    let cfg = FitConfig {
        tol: a.tol,
        k_max: a.k_max,
        newton: NewtonConfig { max_iters: a.max_iters, ..NewtonConfig::default() },
        domain_length: a.domain_length,
        quad: QuadConfig { levels: a.levels, ratio: a.ratio, n_per_panel: a.points_per_panel },
    };
    let (mut mixture, history, status) = fit_mixture(&spec, &cfg)?;
    mixture.generator = Some(ctx.generator());
    mixture.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let mut report = ctx.output(a.report.as_deref())?;
    report.line("k,J,theta")?;
    for (i, r) in history.ranks.iter().enumerate() {
        let theta: Vec<String> = r.theta.iter().map(|t| format!("{t:e}")).collect();
        report.line(&format!("{},{:e},{}", i + 1, r.error, theta.join(";")))?;
    }
    report.finish()?;
    eprintln!("{}: rank {} J = {:.3e} (tol {:.0e})", id, mixture.rank(), mixture.achieved_error, a.tol);
    Ok(match status {
        FitStatus::Converged => Outcome::Ok,
        FitStatus::RankLimit => {
            warn!("tolerance {:e} not met within k_max = {}", a.tol, a.k_max);
            Outcome::ToleranceNotMet
        }
    })
}

fn cmd_decompose(a: &DecomposeArgs, ctx: &Ctx) -> Result<Outcome> {
    let mixture = SqExpMixture::load(&a.mixture).with_context(|| format!("reading {}", a.mixture.display()))?;
    let domain: Domain64 = a.domain.parse()?;
    if domain.diameter() > mixture.fit_domain_length * (1.0 + 1e-12) {
        warn!(
            "domain diameter {} exceeds the fit range L = {}; the mixture is extrapolated",
            domain.diameter(),
            mixture.fit_domain_length
        );
    }
    let duffy = match (a.duffy_g, a.duffy_q) {
        (Some(g), Some(q)) => Some(DuffyConfig::new(g, q)?),
        _ => None,
    };
    let cache = a.cache_dir.as_ref().map(BlockCache::new).transpose()?;
    let opts = DecomposeOptions { eig_tol: a.eig_tol, seed: a.seed, assembly: AssemblyOptions { duffy, cache } };
    let exp = decompose(&mixture, &domain, a.degree, a.pairs, &opts)?;
    let dims: Vec<String> = exp.meta.block_dims.iter().map(|d| d.to_string()).collect();
    info!("parity blocks: dims {}, {} pairs per block", dims.join("/"), exp.meta.pairs_per_block);
    println!("block dims: {}", dims.join("/"));
    println!("eigenpairs: {} (lambda_1 = {:e})", exp.num_pairs(), exp.eigenvalues[0]);
    let (json, bin) = exp.save(&a.out, &ctx.generator())?;
    info!("wrote {} and {}", json.display(), bin.display());
    if exp.converged() {
        Ok(Outcome::Ok)
    } else {
        warn!("not every eigenpair met the tolerance {:e}", a.eig_tol);
        Ok(Outcome::ToleranceNotMet)
    }
}

fn load_expansion(path: &PathBuf) -> Result<KLExpansion> {
    KLExpansion::load(path).with_context(|| format!("reading expansion {}", path.display()))
}

fn parse_grid(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split('x')
        .map(|axis| {
            let parts: Vec<&str> = axis.split(',').map(str::trim).collect();
            let [lo, hi, count] = parts[..] else { bail!("grid axis `{axis}` is not `lo,hi,count`") };
            let (lo, hi): (f64, f64) = (lo.parse()?, hi.parse()?);
            let count: usize = count.parse()?;
            Ok(match count {
                0 => bail!("grid axis `{axis}` has no points"),
                1 => vec![(lo + hi) / 2.0],
                _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
            })
        })
        .collect()
}

fn cmd_sample(a: &SampleArgs, ctx: &Ctx) -> Result<Outcome> {
    let exp = load_expansion(&a.expansion)?;
    let grid = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => exp
            .domain
            .intervals()
            .iter()
            .map(|iv| (0..11).map(|i| iv.lo + iv.len() * i as f64 / 10.0).collect())
            .collect(),
    };
    let n_trunc = a.truncation.unwrap_or(exp.num_pairs());
    let sampler = exp.grid_sampler(n_trunc, &grid)?;
    let points = grid_points(&grid);
    let coords: Vec<String> = (1..=exp.dim()).map(|l| format!("x{l}")).collect();
    let mut out = ctx.output(a.out.as_deref())?;
    out.line(&format!("sample,{},value", coords.join(",")))?;
    for (s, values) in sampler.sample_many(a.seed, a.first, a.samples).iter().enumerate() {
        for (p, v) in points.iter().zip(values) {
            let xs: Vec<String> = p.iter().map(|x| format!("{x:e}")).collect();
            out.line(&format!("{},{},{v:e}", a.first + s as u64, xs.join(",")))?;
        }
    }
    out.finish()?;
    Ok(Outcome::Ok)
}

fn cmd_eigs(a: &EigsArgs, ctx: &Ctx) -> Result<Outcome> {
    let exp = load_expansion(&a.expansion)?;
    let mut out = ctx.output(a.out.as_deref())?;
    out.line("rank_index,eigenvalue,parity_vector")?;
    for (j, (l, p)) in exp.eigenvalues.iter().zip(&exp.parity_labels).enumerate() {
        out.line(&format!("{},{l:e},{}", j + 1, p.label()))?;
    }
    out.finish()?;
    Ok(if exp.converged() { Outcome::Ok } else { Outcome::ToleranceNotMet })
}

fn cmd_residual(a: &ResidualArgs, ctx: &Ctx) -> Result<Outcome> {
    let exp = load_expansion(&a.expansion)?;
    let quad = DiagnosticQuad {
        inner_per_panel: a.inner_points,
        outer_panels: a.outer_panels,
        outer_per_panel: a.outer_points,
    };
    let count = a.pairs.unwrap_or(exp.num_pairs().min(10));
    if count > exp.num_pairs() {
        bail!("expansion holds {} pairs, asked for {count}", exp.num_pairs());
    }
    let mut out = ctx.output(a.out.as_deref())?;
    out.line("j,lambda,residual")?;
    for j in 0..count {
        let r = exp.residual(j, &quad)?;
        out.line(&format!("{},{:e},{r:e}", j + 1, exp.eigenvalues[j]))?;
    }
    out.finish()?;
    Ok(Outcome::Ok)
}

fn cmd_cov_error(a: &CovErrorArgs, ctx: &Ctx) -> Result<Outcome> {
    let exp = load_expansion(&a.expansion)?;
    let m = exp.num_pairs();
    let cuts = a.truncations.clone().unwrap_or_else(|| {
        let mut v = vec![0];
        v.extend(std::iter::successors(Some(1usize), |k| Some(k * 2)).take_while(|&k| k < m));
        v.push(m);
        v
    });
    let mut out = ctx.output(a.out.as_deref())?;
    out.line("N,error")?;
    for n in cuts {
        out.line(&format!("{n},{:e}", exp.cov_l2_error(n, a.quad_points)?))?;
    }
    out.finish()?;
    Ok(Outcome::Ok)
}

fn cmd_duffy_bench(a: &DuffyBenchArgs, ctx: &Ctx) -> Result<Outcome> {
    let mut out = ctx.output(a.out.as_deref())?;
    out.line("method,b,g,q,rel_frobenius_error")?;
    for &b in &a.b {
        let reference = reference_block::<f64>(a.degree, b)?;
        for &q in &a.q {
            let plain = plain_tensor_block::<f64>(a.degree, b, q)?;
            out.line(&format!("plain,{b:e},0,{q},{:e}", plain.rel_frobenius_error(&reference)))?;
            for &g in &a.g {
                let duffy = duffy_block::<f64>(a.degree, b, DuffyConfig::new(g, q)?)?;
                out.line(&format!("duffy,{b:e},{g},{q},{:e}", duffy.rel_frobenius_error(&reference)))?;
            }
        }
    }
    out.finish()?;
    Ok(Outcome::Ok)
}

fn cmd_quadrature(a: &QuadratureArgs, ctx: &Ctx) -> Result<Outcome> {
    let rule = match a.length {
        Some(len) => composite_rule(len, a.levels, a.ratio, a.points)?,
        None => {
            let parts: Vec<&str> = a.interval.split(',').collect();
            let [lo, hi] = parts[..] else { bail!("interval `{}` is not `lo,hi`", a.interval) };
            gauss_rule(a.points, Interval::new(lo.trim().parse()?, hi.trim().parse()?)?)?
        }
    };
    let mut out = ctx.output(a.out.as_deref())?;
    out.line("index,node,weight")?;
    for (i, (x, w)) in rule.iter().enumerate() {
        out.line(&format!("{i},{x:e},{w:e}"))?;
    }
    out.finish()?;
    Ok(Outcome::Ok)
}
