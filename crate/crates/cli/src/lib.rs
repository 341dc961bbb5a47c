//! Command-line front end: argument parsing, the resolved run
//! configuration, and the five commands.
//!
//! Exit codes: 0 success, 1 domain failure (invalid order, degenerate
//! input, failed checks), 2 usage or parse failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use maxentos::copula::copula_entropy_closed;
use maxentos::joint::detect_degenerate;
use maxentos::marginals::{check_stochastic_order, in_f0, j_functional, sigma_measure};
use maxentos::{Budget, CopulaKernel, Degeneracy, MarginalVector, MaxEntModel, Multidiagonal, OrderReport};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_N: usize = 10_000;
pub const DEFAULT_GRID: usize = 256;
/// Largest number of density grid points written by one run.
pub const MAX_GRID_POINTS: usize = 50_000_000;
/// Tail probability cut from infinite ends of the default density box.
const DEFAULT_BOX_TAIL: f64 = 1e-3;

#[derive(Parser, Debug)]
#[command(name = "maxentos", version, about = "Maximum-entropy order statistics and symmetric copulas")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Marginal file (JSON).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Sample count (sample), or Monte-Carlo size (verify).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Points per axis (density), or quadrature nodes per axis (verify).
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Read the input as a multidiagonal on [0, 1] and work with `c_δ`.
    #[arg(long, global = true)]
    pub multidiagonal: bool,
    /// Sample or evaluate `f_F` when `J(F) = ∞` but `F ∈ F_d^0`.
    #[arg(long, global = true)]
    pub allow_infinite_entropy: bool,
    /// Lower corner of the density box, one value for every axis.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lo: Option<f64>,
    /// Upper corner of the density box, one value for every axis.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub hi: Option<f64>,
    /// Tolerance override for a verification check, as NAME=VALUE.
    #[arg(long = "tolerance", global = true, value_parser = parse_tolerance)]
    pub tolerances: Vec<(String, f64)>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Stochastic order, F_d^0 membership and J(F).
    Validate,
    /// Closed-form entropies and their consistency residuals.
    Entropy,
    /// Draw sorted samples from f_F (or samples from c_δ).
    Sample,
    /// Density on a regular grid over a box.
    Density,
    /// Full numerical verification report.
    Verify,
}

fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    let v: f64 = value.parse().map_err(|e| format!("bad tolerance {value:?}: {e}"))?;
    if !(v >= 0.0) {
        return Err(format!("tolerance must be non-negative, got {v}"));
    }
    Ok((name.to_string(), v))
}

/// Every setting of a run after defaults are applied; echoed to standard
/// error and embedded in file outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub n: usize,
    pub grid: usize,
    pub multidiagonal: bool,
    pub allow_infinite_entropy: bool,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub tolerances: Vec<(String, f64)>,
    pub threads: Option<usize>,
    /// Verification budget (verify only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<Budget>,
    pub version: &'static str,
}

enum Failure {
    Usage(String),
    Domain(String),
}

type Outcome = Result<i32, Failure>;

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn domain(e: impl ToString) -> Failure {
    Failure::Domain(e.to_string())
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    let config = match resolve(cli) {
        Ok(c) => c,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let _ = writeln!(err, "config: {}", serde_json::to_string(&config).expect("config serializes"));
    if let Some(t) = config.threads {
        // A pool built earlier in the same process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let outcome = match config.command {
        Command::Validate => cmd_validate(&config, out),
        Command::Entropy => cmd_entropy(&config, out),
        Command::Sample => cmd_sample(&config, out, err),
        Command::Density => cmd_density(&config, out),
        Command::Verify => cmd_verify(&config, out),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Domain(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_DOMAIN
        }
    }
}

fn resolve(cli: Cli) -> Result<RunConfig, String> {
    let input = cli.input.ok_or("--input is required")?;
    let threads = match std::env::var("MAXENTOS_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().ok().filter(|&t| t > 0).ok_or_else(|| format!("MAXENTOS_THREADS must be a positive integer, got {v:?}"))?),
        Err(_) => None,
    };
    if let (Some(lo), Some(hi)) = (cli.lo, cli.hi) {
        if !(lo < hi) {
            return Err(format!("--lo {lo} must be below --hi {hi}"));
        }
    }
    let (n, grid, budget) = match cli.command {
        Command::Verify => {
            let mut b = Budget {
                mc_seed: cli.seed,
                ks_seeds: vec![cli.seed, cli.seed.wrapping_add(1), cli.seed.wrapping_add(2)],
                ..Budget::default()
            };
            if let Some(n) = cli.n {
                b.mc_n = n;
            }
            if let Some(g) = cli.grid {
                b.quad_resolution = g;
                b.quad_resolution_3d = g;
            }
            (b.mc_n, b.quad_resolution, Some(b))
        }
        _ => (cli.n.unwrap_or(DEFAULT_N), cli.grid.unwrap_or(DEFAULT_GRID), None),
    };
    Ok(RunConfig {
        command: cli.command,
        input,
        output: cli.output,
        seed: cli.seed,
        n,
        grid,
        multidiagonal: cli.multidiagonal,
        allow_infinite_entropy: cli.allow_infinite_entropy,
        lo: cli.lo,
        hi: cli.hi,
        tolerances: cli.tolerances,
        threads,
        budget,
        version: env!("CARGO_PKG_VERSION"),
    })
}

fn read_input(config: &RunConfig) -> Result<String, Failure> {
    std::fs::read_to_string(&config.input).map_err(|e| usage(format!("cannot read {}: {e}", config.input.display())))
}

fn load_vector(config: &RunConfig) -> Result<MarginalVector, Failure> {
    MarginalVector::from_json(&read_input(config)?).map_err(usage)
}

fn load_multidiagonal(config: &RunConfig) -> Result<Multidiagonal, Failure> {
    Multidiagonal::from_json(&read_input(config)?).map_err(usage)
}

/// Writes `text` to the output file, or to `out` when none is set.
fn emit(config: &RunConfig, out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    match &config.output {
        Some(p) => std::fs::write(p, text).map_err(|e| usage(format!("cannot write {}: {e}", p.display()))),
        None => out.write_all(text.as_bytes()).map_err(usage),
    }
}

/// Human-readable report on `out`; JSON with the configuration to the
/// output file when one is set.
fn report(config: &RunConfig, out: &mut dyn Write, text: &str, body: serde_json::Value) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(usage)?;
    if let Some(p) = &config.output {
        let doc = json!({ "config": config, "result": body });
        std::fs::write(p, serde_json::to_string_pretty(&doc).expect("report serializes")).map_err(|e| usage(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "+inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.10}")
    }
}

/// JSON number, or the strings `"inf"`/`"-inf"`/`"nan"`.
fn jnum(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// Prints the order witness and returns `EXIT_DOMAIN` when the stochastic
/// order fails.
fn order_gate(f: &MarginalVector, text: &mut String) -> Option<(OrderReport, i32)> {
    let order = check_stochastic_order(f);
    match order {
        OrderReport::Ok => {
            let _ = writeln!(text, "stochastic order: ok");
            None
        }
        OrderReport::Violation { index, witness, deficit } => {
            let _ = writeln!(text, "stochastic order: violated: F_{}(t) < F_{index}(t) at t = {witness} (by {deficit:.3e})", index - 1);
            Some((order, EXIT_DOMAIN))
        }
    }
}

fn cmd_validate(config: &RunConfig, out: &mut dyn Write) -> Outcome {
    let mut text = String::new();
    if config.multidiagonal {
        let delta = load_multidiagonal(config)?;
        let r = delta.validate();
        let j = delta.j_functional();
        let _ = writeln!(text, "multidiagonal (D_d): {}", if r.is_d { "yes" } else { "no" });
        let _ = writeln!(text, "absolutely continuous (D_d^0): {}", if r.is_d0 { "yes" } else { "no" });
        let _ = writeln!(text, "sum residual: {:.3e}", r.sum_residual);
        let _ = writeln!(text, "largest slope: {:.6} (bound {})", r.max_slope, delta.d());
        if let Some(v) = &r.violation {
            let _ = writeln!(text, "violation: {}", serde_json::to_string(v).expect("violation serializes"));
        }
        let _ = writeln!(text, "J(delta) = {}", fmt_value(j));
        let ok = r.is_d0 && j.is_finite();
        let _ = writeln!(text, "verdict: {}", if ok { "ok" } else if r.is_d0 { "j_infinite" } else { "invalid" });
        report(config, out, &text, json!({ "multidiagonal": r, "j": jnum(j), "ok": ok }))?;
        return Ok(if ok { EXIT_OK } else { EXIT_DOMAIN });
    }
    let f = load_vector(config)?;
    if let Some((order, code)) = order_gate(&f, &mut text) {
        report(config, out, &text, json!({ "stochastic_order": order }))?;
        return Ok(code);
    }
    let sigma = sigma_measure(&f);
    let member = in_f0(&f);
    let j = j_functional(&f);
    let verdict = detect_degenerate(&f);
    let _ = writeln!(text, "F_d^0 membership: {} (|Sigma^F| = {sigma:.3e})", if member { "yes" } else { "no" });
    if j.is_finite() {
        let _ = writeln!(text, "J(F) = {}", fmt_value(j));
    } else {
        let _ = writeln!(text, "J(F) = +inf (flag: j_infinite)");
    }
    let _ = writeln!(text, "verdict: {verdict}");
    report(config, out, &text, json!({ "stochastic_order": OrderReport::Ok, "sigma_measure": sigma, "in_f0": member, "j": jnum(j), "verdict": verdict }))?;
    Ok(if verdict.is_ok() { EXIT_OK } else { EXIT_DOMAIN })
}

fn cmd_entropy(config: &RunConfig, out: &mut dyn Write) -> Outcome {
    let mut text = String::new();
    if config.multidiagonal {
        let delta = load_multidiagonal(config)?;
        let r = delta.validate();
        let j = delta.j_functional();
        let h_sum: f64 = (1..=delta.d()).map(|i| delta.component_entropy(i)).sum();
        if !r.is_d0 {
            let _ = writeln!(text, "H(C_delta) = -inf (not absolutely continuous)");
            report(config, out, &text, json!({ "h_c_delta": "-inf", "is_d0": false }))?;
            return Ok(EXIT_DOMAIN);
        }
        let h = copula_entropy_closed(&delta);
        let _ = writeln!(text, "H(C_delta) = {}", fmt_value(h));
        let _ = writeln!(text, "sum H(delta_i) = {}", fmt_value(h_sum));
        let _ = writeln!(text, "J(delta) = {}", fmt_value(j));
        report(config, out, &text, json!({ "h_c_delta": jnum(h), "sum_h_delta": jnum(h_sum), "j_delta": jnum(j) }))?;
        return Ok(if h.is_finite() { EXIT_OK } else { EXIT_DOMAIN });
    }
    let f = load_vector(config)?;
    if let Some((order, code)) = order_gate(&f, &mut text) {
        report(config, out, &text, json!({ "stochastic_order": order }))?;
        return Ok(code);
    }
    let model = MaxEntModel::new(&f).map_err(domain)?;
    let verdict = model.verdict();
    let h_sum: f64 = model.marginal_entropies().iter().sum();
    let j = model.j_functional();
    if !verdict.is_ok() {
        let _ = writeln!(text, "verdict: {verdict}");
        let _ = writeln!(text, "H(F_F) = -inf");
        let _ = writeln!(text, "sum H(F_i) = {}", fmt_value(h_sum));
        let _ = writeln!(text, "J(F) = {}", fmt_value(j));
        report(config, out, &text, json!({ "verdict": verdict, "h_joint": "-inf", "sum_h_marginals": jnum(h_sum), "j": jnum(j) }))?;
        return Ok(EXIT_DOMAIN);
    }
    let kernel = CopulaKernel::for_marginals(&f);
    let h = model.entropy_closed();
    let h_copula = kernel.c_f_entropy_closed().map_err(domain)?;
    let j_delta = kernel.delta().j_functional();
    let decomposition = (h - h_sum - h_copula).abs();
    let transport = (j - j_delta).abs();
    let _ = writeln!(text, "H(F_F) = {}", fmt_value(h));
    let _ = writeln!(text, "H(C_F) = {}", fmt_value(h_copula));
    let _ = writeln!(text, "sum H(F_i) = {}", fmt_value(h_sum));
    let _ = writeln!(text, "J(F) = {}", fmt_value(j));
    let _ = writeln!(text, "J(delta^F) = {}", fmt_value(j_delta));
    let _ = writeln!(text, "residual |H(F_F) - sum H(F_i) - H(C_F)| = {decomposition:.3e}");
    let _ = writeln!(text, "residual |J(F) - J(delta^F)| = {transport:.3e}");
    report(
        config,
        out,
        &text,
        json!({
            "verdict": verdict,
            "h_joint": jnum(h),
            "h_copula": jnum(h_copula),
            "sum_h_marginals": jnum(h_sum),
            "j": jnum(j),
            "j_delta": jnum(j_delta),
            "residual_decomposition": decomposition,
            "residual_j_transport": transport,
        }),
    )?;
    Ok(EXIT_OK)
}

fn csv_row(text: &mut String, values: &[f64]) {
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            text.push(',');
        }
        let _ = write!(text, "{v:.16e}");
    }
    text.push('\n');
}

fn header(text: &mut String, prefix: &str, d: usize, extra: Option<&str>) {
    let mut cols: Vec<String> = (1..=d).map(|i| format!("{prefix}{i}")).collect();
    cols.extend(extra.map(str::to_string));
    text.push_str(&cols.join(","));
    text.push('\n');
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn cmd_sample(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    if config.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let raw = read_input(config)?;
    let (rows, d, prefix) = if config.multidiagonal {
        let delta = Multidiagonal::from_json(&raw).map_err(usage)?;
        let kernel = CopulaKernel::new(&delta);
        if !kernel.is_d0() {
            return Err(domain("multidiagonal is not absolutely continuous; c_delta has no density to sample"));
        }
        (kernel.sample(config.n, config.seed).map_err(domain)?, delta.d(), "u")
    } else {
        let f = MarginalVector::from_json(&raw).map_err(usage)?;
        let model = MaxEntModel::new(&f).map_err(domain)?.allow_infinite_entropy(config.allow_infinite_entropy);
        match model.verdict() {
            Degeneracy::Ok => {}
            Degeneracy::JInfinite { in_f0: true } if config.allow_infinite_entropy => {
                let _ = writeln!(err, "warning: J(F) = +inf; sampling f_F of entropy -inf");
            }
            v => return Err(domain(format!("degenerate input ({v}); f_F is not available for sampling"))),
        }
        (model.sample(config.n, config.seed).map_err(domain)?, f.d(), "x")
    };
    let mut text = String::new();
    header(&mut text, prefix, d, None);
    for r in &rows {
        csv_row(&mut text, r);
    }
    emit(config, out, &text)?;
    if let Some(p) = &config.output {
        let meta = json!({
            "seed": config.seed,
            "n": config.n,
            "d": d,
            "input": config.input,
            "input_sha256": hex::encode(Sha256::digest(raw.as_bytes())),
            "config": config,
        });
        std::fs::write(sidecar_path(p), serde_json::to_string_pretty(&meta).expect("metadata serializes")).map_err(usage)?;
    }
    Ok(EXIT_OK)
}

/// Default box: the support of `F`, with infinite ends cut at the
/// `DEFAULT_BOX_TAIL` quantiles of the outer marginals.
fn default_box(f: &MarginalVector) -> (f64, f64) {
    let (lo, hi) = f.domain();
    let lo = if lo.is_finite() { lo } else { f.margin(1).quantile(DEFAULT_BOX_TAIL) };
    let hi = if hi.is_finite() { hi } else { f.margin(f.d()).quantile(1.0 - DEFAULT_BOX_TAIL) };
    (lo, hi)
}

type Evaluator = Box<dyn Fn(&[f64]) -> f64>;

fn cmd_density(config: &RunConfig, out: &mut dyn Write) -> Outcome {
    let raw = read_input(config)?;
    let (d, evaluate, prefix, column): (usize, Evaluator, &str, &str);
    let (mut lo, mut hi);
    if config.multidiagonal {
        let delta = Multidiagonal::from_json(&raw).map_err(usage)?;
        let kernel = CopulaKernel::new(&delta);
        if !kernel.is_d0() {
            return Err(domain("multidiagonal is not absolutely continuous; c_delta has no density"));
        }
        d = delta.d();
        (lo, hi) = (0.0, 1.0);
        evaluate = Box::new(move |u: &[f64]| kernel.c_delta_density(u).unwrap_or(f64::NAN));
        (prefix, column) = ("u", "c_delta");
    } else {
        let f = MarginalVector::from_json(&raw).map_err(usage)?;
        let model = MaxEntModel::new(&f).map_err(domain)?.allow_infinite_entropy(config.allow_infinite_entropy);
        if !(model.verdict().is_ok() || (config.allow_infinite_entropy && model.verdict().has_density())) {
            return Err(domain(format!("degenerate input ({}); f_F is not a density", model.verdict())));
        }
        d = f.d();
        (lo, hi) = default_box(&f);
        evaluate = Box::new(move |x: &[f64]| model.density(x).unwrap_or(f64::NAN));
        (prefix, column) = ("x", "density");
    }
    lo = config.lo.unwrap_or(lo);
    hi = config.hi.unwrap_or(hi);
    if !(lo < hi) {
        return Err(usage(format!("empty box [{lo}, {hi}]")));
    }
    let g = config.grid;
    if g < 2 {
        return Err(usage("--grid must be at least 2"));
    }
    let total = (g as f64).powi(d as i32);
    if total > MAX_GRID_POINTS as f64 {
        return Err(usage(format!("{g}^{d} grid points exceed the limit of {MAX_GRID_POINTS}; lower --grid")));
    }
    let axis: Vec<f64> = (0..g).map(|k| if k + 1 == g { hi } else { lo + (hi - lo) * k as f64 / (g - 1) as f64 }).collect();
    let mut text = String::new();
    header(&mut text, prefix, d, Some(column));
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d + 1];
    'grid: loop {
        for (j, &k) in idx.iter().enumerate() {
            point[j] = axis[k];
        }
        point[d] = evaluate(&point[..d]);
        csv_row(&mut text, &point);
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < g {
                continue 'grid;
            }
            idx[j] = 0;
        }
        break;
    }
    emit(config, out, &text)?;
    Ok(EXIT_OK)
}

fn cmd_verify(config: &RunConfig, out: &mut dyn Write) -> Outcome {
    let f = if config.multidiagonal {
        // A multidiagonal is its own induced multidiagonal: Σ δ_(i)(s) = d s
        // makes the average CDF the identity on [0, 1].
        load_multidiagonal(config)?.components().clone()
    } else {
        load_vector(config)?
    };
    let budget = config.budget.clone().expect("verify resolves a budget");
    let mut r = maxentos::verify::run_full_verification(&f, &budget);
    for (name, tol) in &config.tolerances {
        if !r.set_tolerance(name, *tol) {
            return Err(usage(format!("no evaluated check named {name:?} accepts a tolerance")));
        }
    }
    let text = r.to_text();
    out.write_all(text.as_bytes()).map_err(usage)?;
    if let Some(p) = &config.output {
        let doc = json!({ "config": config, "report": r });
        std::fs::write(p, serde_json::to_string_pretty(&doc).expect("report serializes")).map_err(|e| usage(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(if r.passed() { EXIT_OK } else { EXIT_DOMAIN })
}
