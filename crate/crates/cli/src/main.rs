use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use ulf_core::laws::{
    finite_freedman_bound, gl_density, phi_from_pi, pi_from_phi, sphere_mass, to_f64, tv_formula, Rational,
};
use ulf_core::sampling::{
    draw_batch, sample_gamma, sample_gamma_n, sample_gl_haar, sample_k_gaussian, sample_rotatable,
    sample_sigma, BATCH_CHUNK,
};
use ulf_core::{Backend, FieldConfig, RadialProfile, ScaleLaw, Suite, SuiteParams, SuiteReport, Valuation};

#[derive(Parser)]
#[command(name = "ulf", version, about = "Sampling and verification on Q_p and F_p((t))")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded draws as JSON lines.
    Sample(SampleArgs),
    /// Run a verification suite and write its report.
    Verify(VerifyArgs),
    /// Print exact values of closed forms.
    Laws(LawsArgs),
}

#[derive(Args)]
struct FieldArgs {
    /// Residue characteristic (prime).
    #[arg(long)]
    p: Option<u32>,
    /// qp (p-adic numbers) or laurent (F_p((t))).
    #[arg(long, default_value = "qp")]
    backend: Backend,
    /// Digits carried per element.
    #[arg(long, default_value_t = 32)]
    precision: usize,
}

impl FieldArgs {
    fn config(&self, fallback_p: u32) -> ulf_core::Result<FieldConfig> {
        FieldConfig::new(self.p.unwrap_or(fallback_p), self.backend, self.precision)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Dist {
    Gamma,
    GammaN,
    SigmaN,
    GlHaar,
    KGaussian,
    Rotatable,
}

impl Dist {
    fn name(self) -> &'static str {
        match self {
            Dist::Gamma => "gamma",
            Dist::GammaN => "gamma_n",
            Dist::SigmaN => "sigma_n",
            Dist::GlHaar => "gl_haar",
            Dist::KGaussian => "k_gaussian",
            Dist::Rotatable => "rotatable",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Jsonl,
    Csv,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum)]
    dist: Dist,
    #[command(flatten)]
    field: FieldArgs,
    /// Dimension for vector and matrix laws.
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, env = "ULF_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Module exponent for k_gaussian: Haar on rho^m D, or `inf` for the zero module.
    #[arg(long, default_value = "0")]
    m: Valuation,
    /// Scale law JSON file for rotatable.
    #[arg(long)]
    pi: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// jsonl (one draw per line) or csv (index and norm exponent only).
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    /// tv, gl-haar, invariance, freedman, gaussian-cf or schoenberg.
    suite: Suite,
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Ball level for histogram tests.
    #[arg(long, default_value_t = 2)]
    level: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, env = "ULF_SEED", default_value_t = 0)]
    seed: u64,
    /// Family-wise level, split by Bonferroni inside the suite.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long)]
    pi: Option<PathBuf>,
    #[arg(long)]
    phi: Option<PathBuf>,
    #[arg(long, default_value_t = ulf_core::harness::DEFAULT_MAX_N)]
    max_n: usize,
    #[arg(long, default_value_t = ulf_core::harness::DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// json (full report) or csv (one row per check).
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Law {
    TvFormula,
    GlDensity,
    SphereMass,
    FreedmanBound,
    PhiFromPi,
    PiFromPhi,
}

#[derive(Args)]
struct LawsArgs {
    #[arg(value_enum)]
    name: Law,
    #[arg(long)]
    q: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    pi: Option<PathBuf>,
    #[arg(long)]
    phi: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    m_lo: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    m_hi: Option<i64>,
}

enum Failure {
    Usage(String),
    Check,
}

impl From<ulf_core::Error> for Failure {
    fn from(e: ulf_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let file = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(io::BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[derive(Serialize)]
struct SampleLine<T> {
    dist: &'static str,
    seed: u64,
    stream: u64,
    chunk: usize,
    index: usize,
    draw: T,
}

fn sample(args: SampleArgs) -> Result<(), Failure> {
    let c = args.field.config(2)?;
    let n = args.n;
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if args.format == Format::Json {
        return Err(usage("sample writes jsonl or csv"));
    }
    let pi: Option<ScaleLaw> = args.pi.as_deref().map(read_json).transpose()?;
    if args.dist == Dist::Rotatable && pi.is_none() {
        return Err(usage("--dist rotatable needs --pi"));
    }
    let (seed, stream, count, m) = (args.seed, args.stream, args.count, args.m);
    // Each draw as (JSON value, norm exponent or determinant exponent).
    let draws: Vec<(serde_json::Value, Valuation)> = match args.dist {
        Dist::Gamma => draw_batch(seed, stream, count, |r| {
            let x = sample_gamma(r, c);
            (json!(x), x.valuation())
        }),
        Dist::GammaN => draw_batch(seed, stream, count, |r| {
            let x = sample_gamma_n(r, c, n);
            (json!(x), x.norm_exp())
        }),
        Dist::SigmaN => draw_batch(seed, stream, count, |r| {
            let x = sample_sigma(r, c, n);
            (json!(x), x.norm_exp())
        }),
        Dist::GlHaar => draw_batch(seed, stream, count, |r| {
            let u = sample_gl_haar(r, c, n);
            let det = u.det_exp().unwrap_or(Valuation::Finite(0));
            (json!(u), det)
        }),
        Dist::KGaussian => draw_batch(seed, stream, count, |r| {
            let x = sample_k_gaussian(r, c, m);
            (json!(x), x.valuation())
        }),
        Dist::Rotatable => {
            let pi = pi.expect("checked above");
            draw_batch(seed, stream, count, |r| {
                let x = sample_rotatable(r, c, &pi, n);
                (json!(x), x.norm_exp())
            })
        }
    };
    let mut out = writer(args.out.as_deref())?;
    match args.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let column = if args.dist == Dist::GlHaar { "det_exp" } else { "norm_exp" };
            w.write_record(["index", column])?;
            for (i, (_, v)) in draws.iter().enumerate() {
                w.write_record([i.to_string(), v.to_string()])?;
            }
            w.flush()?;
        }
        _ => {
            for (index, (draw, _)) in draws.into_iter().enumerate() {
                let line = SampleLine {
                    dist: args.dist.name(),
                    seed,
                    stream,
                    chunk: index / BATCH_CHUNK,
                    index,
                    draw,
                };
                serde_json::to_writer(&mut out, &line)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckRow<'a> {
    suite: &'a str,
    name: &'a str,
    statistic: f64,
    p_value: Option<f64>,
    threshold: f64,
    pass: bool,
}

fn write_report(report: &SuiteReport, format: Format, out: Option<&Path>) -> Result<(), Failure> {
    let mut w = writer(out)?;
    match format {
        Format::Csv => {
            let mut c = csv::Writer::from_writer(w);
            for t in &report.tests {
                c.serialize(CheckRow {
                    suite: &report.suite,
                    name: &t.name,
                    statistic: t.statistic,
                    p_value: t.p_value,
                    threshold: t.threshold,
                    pass: t.pass,
                })?;
            }
            c.flush()?;
        }
        _ => {
            serde_json::to_writer_pretty(&mut w, report)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let phi: Option<RadialProfile> = args.phi.as_deref().map(read_json).transpose()?;
    let pi: Option<ScaleLaw> = args.pi.as_deref().map(read_json).transpose()?;
    let c = args.field.config(phi.as_ref().map_or(2, RadialProfile::q))?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage("--alpha must lie in (0, 1)"));
    }
    let params = SuiteParams {
        field: c,
        n: args.n,
        k: args.k,
        level: args.level,
        trials: args.trials,
        seed: args.seed,
        alpha: args.alpha,
        pi,
        phi,
        max_n: args.max_n,
        budget: args.budget,
    };
    let report = ulf_core::suites::run(args.suite, &params)?;
    write_report(&report, args.format, args.out.as_deref())?;
    if args.out.is_some() {
        for t in &report.tests {
            println!("{} {}: {}", if t.pass { "PASS" } else { "FAIL" }, t.name, t.detail);
        }
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn exact_line(r: &Rational) -> String {
    format!("{r} ≈ {:.6}", to_f64(r))
}

fn laws(args: LawsArgs) -> Result<(), Failure> {
    let need = |v: Option<u32>, flag: &str| v.ok_or_else(|| usage(format!("this law needs --{flag}")));
    let line = match args.name {
        Law::TvFormula => exact_line(&tv_formula(need(args.q, "q")?, need(args.n, "n")?, need(args.k, "k")?)?),
        Law::GlDensity => exact_line(&gl_density(need(args.q, "q")?, need(args.n, "n")?)?),
        Law::SphereMass => exact_line(&sphere_mass(need(args.q, "q")?, need(args.n, "n")?)?),
        Law::FreedmanBound => exact_line(&finite_freedman_bound(need(args.q, "q")?, need(args.n, "n")?)?),
        Law::PhiFromPi => {
            let path = args.pi.ok_or_else(|| usage("phi-from-pi needs --pi"))?;
            let pi: ScaleLaw = read_json(&path)?;
            let lo = args.m_lo.ok_or_else(|| usage("phi-from-pi needs --m-lo"))?;
            let hi = args.m_hi.ok_or_else(|| usage("phi-from-pi needs --m-hi"))?;
            serde_json::to_string(&phi_from_pi(&pi, need(args.q, "q")?, lo, hi)?)?
        }
        Law::PiFromPhi => {
            let path = args.phi.ok_or_else(|| usage("pi-from-phi needs --phi"))?;
            let phi: RadialProfile = read_json(&path)?;
            for w in phi.warnings() {
                eprintln!("warning: {w}");
            }
            match pi_from_phi(&phi) {
                Ok(pi) => serde_json::to_string(&pi)?,
                Err(e) => {
                    eprintln!("{e}");
                    return Err(Failure::Check);
                }
            }
        }
    };
    println!("{line}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Sample(a) => sample(a),
        Command::Verify(a) => verify(a),
        Command::Laws(a) => laws(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
