//! Independent numerical cross-checks: tensor quadrature, Monte-Carlo
//! estimators, Kolmogorov–Smirnov distances and the full verification
//! report.
//!
//! Quadrature uses graded Gauss–Legendre rules per axis. Ordered regions
//! `lo < x_1 < … < x_d < hi` are integrated as nested one-dimensional rules,
//! each graded toward both ends of its own range, which resolves the
//! singularities of order-statistics densities along the diagonals.
//! Infinite ends are mapped to `(0, 1)` by logarithmic substitutions.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::copula::{CopulaKernel, Unsymmetrized};
use crate::joint::{Degeneracy, MaxEntModel};
use crate::marginals::{check_stochastic_order, j_functional, psi_intervals, sigma_measure, xlogx, MarginalCdf, MarginalVector, OrderReport, EQ_TOL, SIGMA_TOL};
use crate::multidiag::{Multidiagonal, SUM_GRID, SUM_TOL};
use crate::quadrature::GradedRule;
use crate::special::ln_factorial;
use crate::{Error, Result};

/// Largest dimension handled by tensor quadrature.
pub const MAX_QUAD_DIM: usize = 3;
/// `c_α` of the one-sample KS test at `α = 0.01`.
pub const KS_C_ALPHA: f64 = 1.63;

#[derive(Clone, Debug)]
pub enum Region {
    Box(Vec<(f64, f64)>),
    /// `lo < x_1 < … < x_d < hi`.
    Ordered { d: usize, lo: f64, hi: f64 },
    /// `[lo, hi]^d` for a symmetric integrand, integrated as `d!` times the
    /// ordered region.
    Symmetric { d: usize, lo: f64, hi: f64 },
}

/// Integration region with breakpoints shared by all axes and the length
/// scale used to map infinite ends.
#[derive(Clone, Debug)]
pub struct Domain {
    pub region: Region,
    pub breaks: Vec<f64>,
    pub scale: f64,
}

impl Domain {
    pub fn boxed(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            region: Region::Box(bounds),
            breaks: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn ordered(d: usize, lo: f64, hi: f64) -> Self {
        Self {
            region: Region::Ordered { d, lo, hi },
            breaks: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn symmetric(d: usize, lo: f64, hi: f64) -> Self {
        Self {
            region: Region::Symmetric { d, lo, hi },
            breaks: Vec::new(),
            scale: 1.0,
        }
    }

    /// Ordered region over the domain of `f`, with its breakpoints and scale.
    pub fn ordered_for(f: &MarginalVector) -> Self {
        let (lo, hi) = f.domain();
        Self::ordered(f.d(), lo, hi).with_breaks(f.breakpoints()).with_scale(f.length_scale())
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn d(&self) -> usize {
        match &self.region {
            Region::Box(b) => b.len(),
            Region::Ordered { d, .. } | Region::Symmetric { d, .. } => *d,
        }
    }
}

/// Rule with about `resolution` nodes per piece, graded deeply toward both
/// ends: ordered-cone integrands vary on the scale of the distance to the
/// previous coordinate.
pub fn quad_rule(resolution: usize) -> GradedRule {
    let order = 8;
    let panels = (resolution / order).max(3);
    let grading_levels = (panels / 2).clamp(1, 12);
    GradedRule {
        order,
        grading_levels,
        interior_panels: panels.saturating_sub(2 * grading_levels).max(1),
        ratio: 0.2,
    }
}

/// Nodes and weights of the graded rule on `(a, b)`, mapping infinite ends.
fn axis(rule: &GradedRule, a: f64, b: f64, breaks: &[f64], scale: f64) -> Vec<(f64, f64)> {
    if !(a < b) {
        return Vec::new();
    }
    let inside = breaks.iter().copied().filter(|&x| x > a && x < b);
    match (a.is_finite(), b.is_finite()) {
        (true, true) => rule.nodes(a, b, &inside.collect::<Vec<_>>()),
        (true, false) => {
            let ys: Vec<f64> = inside.map(|x| -(-(x - a) / scale).exp_m1()).collect();
            rule.nodes(0.0, 1.0, &ys)
                .into_iter()
                .map(|(y, w)| (a - scale * (-y).ln_1p(), w * scale / (1.0 - y)))
                .collect()
        }
        (false, true) => {
            let ys: Vec<f64> = inside.map(|x| ((x - b) / scale).exp()).collect();
            rule.nodes(0.0, 1.0, &ys).into_iter().map(|(y, w)| (b + scale * y.ln(), w * scale / y)).collect()
        }
        (false, false) => {
            let ys: Vec<f64> = inside.map(|x| 1.0 / (1.0 + (-x / scale).exp())).collect();
            rule.nodes(0.0, 1.0, &ys)
                .into_iter()
                .map(|(y, w)| (scale * (y / (1.0 - y)).ln(), w * scale / (y * (1.0 - y))))
                .collect()
        }
    }
}

type Integrand<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

fn ordered_inner(g: &Integrand<'_>, rule: &GradedRule, domain: &Domain, hi: f64, d: usize, x: &mut Vec<f64>) -> f64 {
    if x.len() == d {
        let v = g(x);
        return if v.is_finite() { v } else { 0.0 };
    }
    let lo = *x.last().expect("outer coordinate present");
    let mut total = 0.0;
    for (t, w) in axis(rule, lo, hi, &domain.breaks, domain.scale) {
        x.push(t);
        total += w * ordered_inner(g, rule, domain, hi, d, x);
        x.pop();
    }
    total
}

fn box_inner(g: &Integrand<'_>, axes: &[Vec<(f64, f64)>], x: &mut Vec<f64>) -> f64 {
    if x.len() == axes.len() {
        let v = g(x);
        return if v.is_finite() { v } else { 0.0 };
    }
    let mut total = 0.0;
    for &(t, w) in &axes[x.len()] {
        x.push(t);
        total += w * box_inner(g, axes, x);
        x.pop();
    }
    total
}

/// `∫ g` over the domain. The outer axis is split across threads and the
/// partial sums are added in a fixed order.
fn tensor_sum(g: &Integrand<'_>, domain: &Domain, resolution: usize) -> Result<f64> {
    let d = domain.d();
    if d > MAX_QUAD_DIM {
        return Err(Error::DimensionTooLarge(d));
    }
    if d == 0 {
        return Err(Error::EmptyVector);
    }
    let rule = quad_rule(resolution);
    let parts: Vec<f64> = match &domain.region {
        Region::Box(bounds) => {
            let axes: Vec<Vec<(f64, f64)>> = bounds.iter().map(|&(a, b)| axis(&rule, a, b, &domain.breaks, domain.scale)).collect();
            axes[0]
                .par_iter()
                .map(|&(t, w)| {
                    let mut x = vec![t];
                    w * box_inner(g, &axes, &mut x)
                })
                .collect()
        }
        Region::Ordered { lo, hi, .. } | Region::Symmetric { lo, hi, .. } => {
            let factor = if matches!(domain.region, Region::Symmetric { .. }) { ln_factorial(d as u64).exp() } else { 1.0 };
            axis(&rule, *lo, *hi, &domain.breaks, domain.scale)
                .par_iter()
                .map(|&(t, w)| {
                    let mut x = vec![t];
                    factor * w * ordered_inner(g, &rule, domain, *hi, d, &mut x)
                })
                .collect()
        }
    };
    Ok(parts.iter().sum())
}

/// `∫ f` by tensor quadrature.
pub fn quad_integrate(f: &Integrand<'_>, domain: &Domain, resolution: usize) -> Result<f64> {
    tensor_sum(f, domain, resolution)
}

/// `-∫ f log f` by tensor quadrature, with `0 log 0 = 0`.
pub fn quad_entropy(f: &Integrand<'_>, domain: &Domain, resolution: usize) -> Result<f64> {
    Ok(-tensor_sum(&|x: &[f64]| xlogx(f(x)), domain, resolution)?)
}

/// `-∫ f(x) log f(x) w(x) dx`: the entropy of a density `f` on another
/// scale, pulled back to `x` with Jacobian `w`.
pub fn quad_entropy_weighted(f: &Integrand<'_>, w: &Integrand<'_>, domain: &Domain, resolution: usize) -> Result<f64> {
    Ok(-tensor_sum(
        &|x: &[f64]| {
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                w(x) * xlogx(v)
            }
        },
        domain,
        resolution,
    )?)
}

/// A Monte-Carlo mean with its jackknife standard error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct McEstimate {
    #[serde(serialize_with = "extended")]
    pub estimate: f64,
    #[serde(serialize_with = "extended")]
    pub stderr: f64,
    pub n: usize,
}

/// Mean of `values` with the leave-one-out jackknife standard error.
pub fn jackknife_mean(values: &[f64]) -> Result<McEstimate> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let sum: f64 = values.iter().sum();
    let mean = sum / n as f64;
    if n == 1 {
        return Ok(McEstimate {
            estimate: mean,
            stderr: f64::INFINITY,
            n,
        });
    }
    let loo_mean = mean;
    let ss: f64 = values
        .iter()
        .map(|&v| {
            let loo = (sum - v) / (n - 1) as f64;
            (loo - loo_mean).powi(2)
        })
        .sum();
    Ok(McEstimate {
        estimate: mean,
        stderr: ((n - 1) as f64 / n as f64 * ss).sqrt(),
        n,
    })
}

/// `-(1/n) Σ log f_F(X_k)` over `n` draws of the model.
pub fn mc_entropy(model: &MaxEntModel, n: usize, seed: u64) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let rows = model.sample(n, seed)?;
    let logs: Vec<f64> = rows.par_iter().map(|x| -model.ln_density(x).unwrap_or(f64::NEG_INFINITY)).collect();
    jackknife_mean(&logs)
}

/// `sup_t |F_n(t) - F(t)|` for the empirical CDF `F_n` of `samples`.
pub fn ks_distance(samples: &[f64], f: &MarginalCdf) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    Ok(s.iter()
        .enumerate()
        .map(|(k, &x)| {
            let p = f.cdf(x);
            (p - k as f64 / n).max((k + 1) as f64 / n - p)
        })
        .fold(0.0, f64::max))
}

/// Importance estimate of `∫ f_F` with the model's own sampler as proposal.
///
/// The proposal density `q` is not taken from `f_F`: it is `f_1(x_1)` times
/// central finite differences of the conditional survival functions
/// `exp(-Λ_i(x_{i-1}, ·))` that the sampler inverts. The mean of `f_F / q`
/// is 1 exactly when the sampler's law has density `f_F`.
pub fn importance_normalization(model: &MaxEntModel, n: usize, seed: u64) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let rows = model.sample(n, seed)?;
    let chain = model.chain();
    let scale = model.vector().length_scale();
    let ratios: Vec<f64> = rows
        .par_iter()
        .map(|x| {
            let mut q = model.vector().margin(1).pdf(x[0]);
            for i in 2..=x.len() {
                let (s, t) = (x[i - 2], x[i - 1]);
                let Some(j) = chain.psi(i).find(s) else {
                    return f64::NAN;
                };
                let end = chain.psi(i).intervals()[j].1;
                let room = (t - s).min(end - t).min(scale);
                let h = 1e-5 * room;
                let surv = |r: f64| (-chain.lambda(i, s, r).unwrap_or(f64::NAN)).exp();
                q *= (surv(t - h) - surv(t + h)) / (2.0 * h);
            }
            model.density(x).unwrap_or(f64::NAN) / q
        })
        .collect();
    jackknife_mean(&ratios)
}

/// Sample sizes, seeds and quadrature resolutions of a verification run.
#[derive(Clone, Debug, Serialize)]
pub struct Budget {
    pub mc_n: usize,
    pub mc_seed: u64,
    pub ks_n: usize,
    pub ks_seeds: Vec<u64>,
    /// Nodes per axis piece for `d ≤ 2`.
    pub quad_resolution: usize,
    /// Nodes per axis piece for `d = 3`.
    pub quad_resolution_3d: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            mc_n: 200_000,
            mc_seed: 0,
            ks_n: 10_000,
            ks_seeds: vec![0, 1, 2],
            quad_resolution: 512,
            quad_resolution_3d: 136,
        }
    }
}

impl Budget {
    pub fn resolution(&self, d: usize) -> usize {
        if d >= 3 {
            self.quad_resolution_3d
        } else {
            self.quad_resolution
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    Failed,
    Skipped,
}

/// How `observed` is judged against `expected`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|observed - expected| ≤ tolerance`; two equal infinities pass.
    AbsDiff,
    /// `observed ≤ expected + tolerance`.
    AtMost,
    /// A pass/fail predicate recorded with its witness value; not
    /// re-judged under a new tolerance.
    Flag,
}

impl Comparison {
    fn passes(self, expected: f64, observed: f64, tolerance: f64) -> bool {
        match self {
            Comparison::AbsDiff if !expected.is_finite() && !observed.is_finite() => expected == observed,
            Comparison::AbsDiff => (observed - expected).abs() <= tolerance,
            Comparison::AtMost => observed <= expected + tolerance,
            Comparison::Flag => false,
        }
    }
}

/// One named identity with the values compared and the tolerance used.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub comparison: Comparison,
    #[serde(serialize_with = "extended")]
    pub expected: f64,
    #[serde(serialize_with = "extended")]
    pub observed: f64,
    #[serde(serialize_with = "extended")]
    pub tolerance: f64,
    pub passed: bool,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn compare(name: &str, expected: f64, observed: f64, tolerance: f64) -> Self {
        let passed = Comparison::AbsDiff.passes(expected, observed, tolerance);
        let mut c = Self::with(name, expected, observed, tolerance, passed);
        c.comparison = Comparison::AbsDiff;
        c
    }

    /// Passes when `observed ≤ bound`.
    fn at_most(name: &str, bound: f64, observed: f64) -> Self {
        let mut c = Self::with(name, bound, observed, 0.0, observed <= bound);
        c.comparison = Comparison::AtMost;
        c
    }

    /// Pass/fail flag whose rule is not a tolerance comparison.
    fn with(name: &str, expected: f64, observed: f64, tolerance: f64, passed: bool) -> Self {
        Self {
            name: name.to_string(),
            comparison: Comparison::Flag,
            expected,
            observed,
            tolerance,
            passed,
            status: if passed { Status::Passed } else { Status::Failed },
            note: None,
        }
    }

    fn skipped(name: &str, why: &str) -> Self {
        Self {
            name: name.to_string(),
            comparison: Comparison::AbsDiff,
            expected: f64::NAN,
            observed: f64::NAN,
            tolerance: f64::NAN,
            passed: true,
            status: Status::Skipped,
            note: Some(why.to_string()),
        }
    }

    fn failed_with(name: &str, why: String) -> Self {
        Self {
            name: name.to_string(),
            comparison: Comparison::AbsDiff,
            expected: f64::NAN,
            observed: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
            status: Status::Failed,
            note: Some(why),
        }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McSettings {
    pub n: usize,
    pub seed: u64,
    pub ks_n: usize,
    pub ks_seeds: Vec<u64>,
    pub stderr: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub d: usize,
    pub verdict: Option<Degeneracy>,
    pub checks: Vec<Check>,
    pub mc_settings: McSettings,
    pub quad_resolution: usize,
}

impl VerificationReport {
    /// True when no check failed; skipped checks do not count.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Re-judges the named check under a new tolerance. Returns false when
    /// no evaluated check has that name.
    pub fn set_tolerance(&mut self, name: &str, tolerance: f64) -> bool {
        let Some(c) = self.checks.iter_mut().find(|c| c.name == name && c.comparison != Comparison::Flag && c.status != Status::Skipped && !c.observed.is_nan()) else {
            return false;
        };
        c.tolerance = tolerance;
        c.passed = c.comparison.passes(c.expected, c.observed, tolerance);
        c.status = if c.passed { Status::Passed } else { Status::Failed };
        true
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let verdict = self.verdict.map_or_else(|| "invalid input".to_string(), |v| v.to_string());
        let _ = writeln!(s, "verification report: d = {}, verdict = {verdict}", self.d);
        for c in &self.checks {
            let tag = match c.status {
                Status::Passed => "PASS",
                Status::Failed => "FAIL",
                Status::Skipped => "SKIP",
            };
            let _ = write!(s, "[{tag}] {:<36} expected {:>14} observed {:>14} tol {:>10}", c.name, fmt_num(c.expected), fmt_num(c.observed), fmt_num(c.tolerance));
            if let Some(n) = &c.note {
                let _ = write!(s, "  ({n})");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "monte carlo: n = {}, seed = {}, ks n = {}, ks seeds = {:?}", self.mc_settings.n, self.mc_settings.seed, self.mc_settings.ks_n, self.mc_settings.ks_seeds);
        for (k, v) in &self.mc_settings.stderr {
            let _ = writeln!(s, "  stderr[{k}] = {}", fmt_num(*v));
        }
        let _ = writeln!(s, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6e}")
    }
}

/// Serializes non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`.
fn extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

const INVERSE_GRID: usize = 257;
const SYMMETRY_POINTS: usize = 200;
const BE_GRID: usize = 64;
const CONSISTENCY_POINTS: usize = 200;
const PRODUCT_FORM_POINTS: usize = 200;
const RECOVERY_LEVELS: [f64; 3] = [0.25, 0.5, 0.75];

/// Runs every cross-module identity on `f` and collects the outcomes.
///
/// Validity checks always run. Checks that need the density `f_F` or the
/// copula densities are skipped when the degeneracy verdict rules them out.
pub fn run_full_verification(f: &MarginalVector, budget: &Budget) -> VerificationReport {
    let d = f.d();
    let resolution = budget.resolution(d);
    let mut checks = Vec::new();
    let mut stderr = BTreeMap::new();
    let settings = |stderr| McSettings {
        n: budget.mc_n,
        seed: budget.mc_seed,
        ks_n: budget.ks_n,
        ks_seeds: budget.ks_seeds.clone(),
        stderr,
    };

    let order = check_stochastic_order(f);
    checks.push(match order {
        OrderReport::Ok => Check::with("stochastic_order", 0.0, 0.0, EQ_TOL, true),
        OrderReport::Violation { index, witness, deficit } => Check::with("stochastic_order", 0.0, deficit, EQ_TOL, false).note(format!("F_{} < F_{index} at t = {witness}", index - 1)),
    });
    if !order.is_ok() {
        return VerificationReport {
            d,
            verdict: None,
            checks,
            mc_settings: settings(stderr),
            quad_resolution: resolution,
        };
    }

    checks.push(inverse_identities(f));
    checks.push(psi_sign_check(f));
    let sigma = sigma_measure(f);
    checks.push(Check::compare("sigma_measure", 0.0, sigma, SIGMA_TOL));
    let j = j_functional(f);
    checks.push(Check::with("j_nonnegative", 0.0, j, 0.0, j >= 0.0));

    let delta = Multidiagonal::from_marginals(f);
    let report = delta.validate();
    checks.push(Check::compare("multidiagonal_sum_identity", 0.0, report.sum_residual, SUM_TOL).note(format!("{SUM_GRID}-point grid")));
    checks.push(Check::at_most("multidiagonal_lipschitz", d as f64 + 1e-6, report.max_slope));
    checks.push(inverse_routes(&delta));
    if d >= 2 {
        let bound = d as f64 * (d as f64).ln();
        let worst = (1..=d).map(|i| delta.component_entropy(i).abs()).fold(0.0, f64::max);
        checks.push(Check::at_most("multidiagonal_entropy_bound", bound, worst));
    } else {
        checks.push(Check::skipped("multidiagonal_entropy_bound", "bound stated for d >= 2"));
    }
    let j_delta = delta.j_functional();
    checks.push(Check::compare("j_transport", j, j_delta, 1e-6));

    let model = match MaxEntModel::new(f) {
        Ok(m) => m,
        Err(e) => {
            checks.push(Check::failed_with("model_construction", e.to_string()));
            return VerificationReport {
                d,
                verdict: None,
                checks,
                mc_settings: settings(stderr),
                quad_resolution: resolution,
            };
        }
    };
    let verdict = model.verdict();
    checks.push(Check::with("degeneracy_verdict", 0.0, 0.0, 0.0, verdict.is_ok()).note(verdict.to_string()));

    const DENSITY_CHECKS: [&str; 19] = [
        "entropy_decomposition",
        "entropy_shift_closed",
        "c_delta_symmetry",
        "c_delta_support",
        "c_delta_normalization_quadrature",
        "c_delta_normalization_mc",
        "c_delta_multidiagonal_recovery",
        "b_e_identity",
        "normalization_quadrature",
        "normalization_importance",
        "marginal_ks",
        "entropy_closed_vs_quadrature",
        "entropy_closed_vs_mc",
        "entropy_quadrature_vs_mc",
        "product_form",
        "density_copula_consistency",
        "symmetrization_round_trip",
        "entropy_shift_quadrature",
        "c_f_margins",
    ];
    if !verdict.is_ok() {
        for name in DENSITY_CHECKS {
            checks.push(Check::skipped(name, "degenerate verdict"));
        }
        return VerificationReport {
            d,
            verdict: Some(verdict),
            checks,
            mc_settings: settings(stderr),
            quad_resolution: resolution,
        };
    }

    let kernel = CopulaKernel::new(&delta);
    let h_sum_f: f64 = model.marginal_entropies().iter().sum();
    let h_sum_delta: f64 = (1..=d).map(|i| delta.component_entropy(i)).sum();
    let h_cf = kernel.c_f_entropy_closed().unwrap_or(f64::NAN);
    let h_closed = model.entropy_closed();
    checks.push(Check::compare("entropy_decomposition", h_closed, h_sum_f + h_cf, 1e-6));
    let ln_dfact = ln_factorial(d as u64);
    checks.push(Check::compare("entropy_shift_closed", kernel.entropy_closed(), ln_dfact + h_cf + h_sum_delta, 1e-6));

    let mut rng = ChaCha20Rng::seed_from_u64(budget.mc_seed);
    rng.set_stream(u64::MAX);
    checks.push(symmetry_check(&kernel, &mut rng));
    checks.push(support_check(&kernel, &mut rng));

    let quad_ok = d <= MAX_QUAD_DIM;
    let domain = Domain::ordered_for(f);
    let g = &*delta.source().expect("derived multidiagonal").average;
    if quad_ok {
        // ∫ c_δ = d! ∫_{x ordered} c_δ(G(x)) Π g(x_i) dx.
        let integrand = |x: &[f64]| {
            let u: Vec<f64> = x.iter().map(|&t| g.cdf(t)).collect();
            let jac: f64 = x.iter().map(|&t| g.pdf(t)).product();
            if jac == 0.0 {
                return 0.0;
            }
            kernel.c_delta_density(&u).unwrap_or(f64::NAN) * jac
        };
        let total = quad_integrate(&integrand, &domain, resolution).map(|v| v * ln_dfact.exp());
        checks.push(match total {
            Ok(v) => Check::compare("c_delta_normalization_quadrature", 1.0, v, 1e-6),
            Err(e) => Check::failed_with("c_delta_normalization_quadrature", e.to_string()),
        });
    } else {
        checks.push(Check::skipped("c_delta_normalization_quadrature", "tensor quadrature limited to d <= 3"));
    }
    match c_delta_importance(&model, &kernel, g, budget) {
        Ok(est) => {
            stderr.insert("c_delta_normalization_mc".into(), est.stderr);
            checks.push(Check::compare("c_delta_normalization_mc", 1.0, est.estimate, 2e-3).note("importance proposal: symmetrized G(X), X ~ f_F"));
        }
        Err(e) => checks.push(Check::failed_with("c_delta_normalization_mc", e.to_string())),
    }
    checks.push(recovery_check(&kernel, budget));
    checks.push(b_e_check(&kernel));

    if quad_ok {
        let total = quad_integrate(&|x: &[f64]| model.density(x).unwrap_or(f64::NAN), &domain, resolution);
        checks.push(match total {
            Ok(v) => Check::compare("normalization_quadrature", 1.0, v, 1e-4),
            Err(e) => Check::failed_with("normalization_quadrature", e.to_string()),
        });
    } else {
        checks.push(Check::skipped("normalization_quadrature", "tensor quadrature limited to d <= 3"));
    }
    match importance_normalization(&model, budget.mc_n, budget.mc_seed) {
        Ok(est) => {
            stderr.insert("normalization_importance".into(), est.stderr);
            checks.push(Check::compare("normalization_importance", 1.0, est.estimate, 1e-4));
        }
        Err(e) => checks.push(Check::failed_with("normalization_importance", e.to_string())),
    }

    checks.push(ks_check(&model, budget));

    let h_quad = if quad_ok { quad_entropy(&|x: &[f64]| model.density(x).unwrap_or(f64::NAN), &domain, resolution).ok() } else { None };
    let h_mc = mc_entropy(&model, budget.mc_n, budget.mc_seed).ok();
    if let Some(est) = h_mc {
        stderr.insert("entropy_mc".into(), est.stderr);
    }
    match h_quad {
        Some(hq) => checks.push(Check::compare("entropy_closed_vs_quadrature", h_closed, hq, 1e-3)),
        None => checks.push(Check::skipped("entropy_closed_vs_quadrature", "tensor quadrature limited to d <= 3")),
    }
    match h_mc {
        Some(est) => checks.push(Check::compare("entropy_closed_vs_mc", h_closed, est.estimate, (3.0 * est.stderr).max(1e-3))),
        None => checks.push(Check::failed_with("entropy_closed_vs_mc", "sampling failed".into())),
    }
    match (h_quad, h_mc) {
        (Some(hq), Some(est)) => checks.push(Check::compare("entropy_quadrature_vs_mc", hq, est.estimate, (3.0 * est.stderr).max(1e-3))),
        _ => checks.push(Check::skipped("entropy_quadrature_vs_mc", "needs both estimates")),
    }

    checks.push(product_form_check(&model, &mut rng, budget.mc_seed));
    checks.push(consistency_check(&model, &kernel, budget.mc_seed));
    checks.push(round_trip_check(&model, &kernel, budget.mc_seed));

    if quad_ok {
        // Tolerance 1e-3 leaves room for a coarser rule on this costlier integrand.
        checks.push(entropy_shift_quadrature(f, &kernel, &domain, resolution * 3 / 4, ln_dfact + h_sum_delta));
    } else {
        checks.push(Check::skipped("entropy_shift_quadrature", "tensor quadrature limited to d <= 3"));
    }
    checks.push(c_f_margins_check(&model, budget));

    VerificationReport {
        d,
        verdict: Some(verdict),
        checks,
        mc_settings: settings(stderr),
        quad_resolution: resolution,
    }
}

/// `F(F^{-1}(p)) = p` and `F^{-1}(F(t)) ≤ t` on grids, for every marginal.
fn inverse_identities(f: &MarginalVector) -> Check {
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for m in f.margins() {
        for k in 1..INVERSE_GRID {
            let p = k as f64 / INVERSE_GRID as f64;
            let t = m.quantile(p);
            worst = worst.max((m.cdf(t) - p).abs());
            let back = m.quantile(m.cdf(t));
            monotone &= back <= t + 1e-12 * t.abs().max(1.0);
        }
    }
    Check::with("generalized_inverse_identities", 0.0, worst, 1e-10, worst <= 1e-10 && monotone)
}

/// `F_{i-1} - F_i > 0` at interval midpoints of `Ψ_i`, and `≤ EQ_TOL` just
/// outside finite interior endpoints.
fn psi_sign_check(f: &MarginalVector) -> Check {
    let mut bad = 0usize;
    let (lo, hi) = f.domain();
    for i in 2..=f.d() {
        let Ok(psi) = psi_intervals(f, i) else {
            bad += 1;
            continue;
        };
        for m in psi.midpoints() {
            if f.gap(i, m) <= 0.0 {
                bad += 1;
            }
        }
        for &(g, h) in psi.intervals() {
            for (edge, dir) in [(g, -1.0), (h, 1.0)] {
                if edge.is_finite() && edge > lo && edge < hi {
                    let probe = edge + dir * 1e-9 * edge.abs().max(1.0);
                    if !psi.contains(probe) && f.gap(i, probe) > EQ_TOL {
                        bad += 1;
                    }
                }
            }
        }
    }
    Check::with("psi_sign", 0.0, bad as f64, 0.0, bad == 0)
}

/// `δ_(i)^{-1}` as a bisection on `δ_(i)` against `G ∘ F_i^{-1}`.
fn inverse_routes(delta: &Multidiagonal) -> Check {
    let mut worst: f64 = 0.0;
    for i in 1..=delta.d() {
        for k in 1..INVERSE_GRID {
            let p = k as f64 / INVERSE_GRID as f64;
            worst = worst.max((delta.inverse(i, p) - delta.inverse_by_search(i, p)).abs());
        }
    }
    Check::compare("multidiagonal_inverse_routes", 0.0, worst, 1e-9)
}

fn symmetry_check(kernel: &CopulaKernel, rng: &mut ChaCha20Rng) -> Check {
    let d = kernel.d();
    let mut worst: f64 = 0.0;
    for _ in 0..SYMMETRY_POINTS {
        let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let mut p = u.clone();
        p.shuffle(rng);
        let (a, b) = (kernel.c_delta_density(&u).unwrap_or(f64::NAN), kernel.c_delta_density(&p).unwrap_or(f64::NAN));
        worst = worst.max(if a == b { 0.0 } else { (a - b).abs() });
    }
    Check::compare("c_delta_symmetry", 0.0, worst, 0.0)
}

/// `c_δ = 0` at points with a gap `(u_(i-1), u_(i))` crossing `(Ψ_i)^c`.
fn support_check(kernel: &CopulaKernel, rng: &mut ChaCha20Rng) -> Check {
    let d = kernel.d();
    let delta = kernel.delta();
    let mut tested = 0usize;
    let mut worst: f64 = 0.0;
    for i in 2..=d {
        for (a, b) in delta.psi(i).complement(0.0, 1.0) {
            let mid = 0.5 * (a.max(0.0) + b.min(1.0));
            for _ in 0..20 {
                // u_(i-1) below the excluded stretch, u_(i) above it.
                let below = rng.random::<f64>() * a.max(0.0);
                let above = b.min(1.0) + rng.random::<f64>() * (1.0 - b.min(1.0));
                if !(below < mid && above > mid) {
                    continue;
                }
                let mut u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                u.sort_by(f64::total_cmp);
                for (k, v) in u.iter_mut().enumerate() {
                    if k < i - 1 {
                        *v = below * (k + 1) as f64 / (i - 1) as f64;
                    } else {
                        *v = above + (1.0 - above) * (k + 1 - (i - 1)) as f64 / (d + 2 - i) as f64 * 0.999;
                    }
                }
                tested += 1;
                worst = worst.max(kernel.c_delta_density(&u).unwrap_or(f64::NAN));
            }
        }
    }
    let c = Check::compare("c_delta_support", 0.0, worst, 0.0);
    if tested == 0 {
        c.note("every Psi_i is a single full interval; nothing to test")
    } else {
        c.note(format!("{tested} points off L_delta"))
    }
}

/// Importance estimate of `∫ c_δ` with proposal the symmetrized law of
/// `G(X)`, `X ~ f_F`, whose density at sorted `u = G(x)` is
/// `f_F(x) / (d! Π g(x_i))`.
fn c_delta_importance(model: &MaxEntModel, kernel: &CopulaKernel, g: &MarginalCdf, budget: &Budget) -> Result<McEstimate> {
    let dfact = ln_factorial(model.d() as u64).exp();
    let rows = model.sample(budget.mc_n, budget.mc_seed ^ 0xde17a)?;
    let ratios: Vec<f64> = rows
        .par_iter()
        .map(|x| {
            let u: Vec<f64> = x.iter().map(|&t| g.cdf(t)).collect();
            let jac: f64 = x.iter().map(|&t| g.pdf(t)).product();
            kernel.c_delta_density(&u).unwrap_or(f64::NAN) * dfact * jac / model.density(x).unwrap_or(f64::NAN)
        })
        .collect();
    jackknife_mean(&ratios)
}

/// MC frequency of `U_(i) ≤ r` from `c_δ` samples against `δ_(i)(r)`.
fn recovery_check(kernel: &CopulaKernel, budget: &Budget) -> Check {
    let n = budget.ks_n;
    let rows = match kernel.sample(n, budget.mc_seed ^ 0x5eed) {
        Ok(r) => r,
        Err(e) => return Check::failed_with("c_delta_multidiagonal_recovery", e.to_string()),
    };
    let sorted: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|mut r| {
            r.sort_by(f64::total_cmp);
            r
        })
        .collect();
    let mut worst_z: f64 = 0.0;
    for i in 1..=kernel.d() {
        for &r in &RECOVERY_LEVELS {
            let p = kernel.delta().eval(i, r);
            let hits = sorted.iter().filter(|row| row[i - 1] <= r).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-12);
            worst_z = worst_z.max((hits - p).abs() / se);
        }
    }
    Check::at_most("c_delta_multidiagonal_recovery", 3.0, worst_z).note("largest |z| over components and levels")
}

/// `B_i(t) E_{i-1}(t) = δ_(i-1)(t) - δ_(i)(t)` on a grid inside `Ψ_i`.
fn b_e_check(kernel: &CopulaKernel) -> Check {
    let d = kernel.d();
    let delta = kernel.delta();
    let mut worst: f64 = 0.0;
    for i in 1..=d {
        for &(g, h) in delta.psi(i).intervals() {
            for k in 1..BE_GRID {
                let t = g + (h - g) * k as f64 / BE_GRID as f64;
                let upper = if i == 1 { 1.0 } else { delta.eval(i - 1, t) };
                let gap = upper - delta.eval(i, t);
                let (Ok(b), Ok(e)) = (kernel.b(i, t), kernel.e(i - 1, t)) else {
                    worst = f64::INFINITY;
                    continue;
                };
                worst = worst.max((b * e - gap).abs() / gap.max(1e-300));
            }
        }
    }
    Check::compare("b_e_identity", 0.0, worst, 1e-6).note("relative error")
}

/// Per-coordinate KS distance below `c_α/√n` in a majority of seeds.
fn ks_check(model: &MaxEntModel, budget: &Budget) -> Check {
    let d = model.d();
    let n = budget.ks_n;
    let bound = KS_C_ALPHA / (n as f64).sqrt();
    let mut per_coord: Vec<Vec<f64>> = vec![Vec::new(); d];
    for &seed in &budget.ks_seeds {
        let rows = match model.sample(n, seed) {
            Ok(r) => r,
            Err(e) => return Check::failed_with("marginal_ks", e.to_string()),
        };
        for (i, dist) in per_coord.iter_mut().enumerate() {
            let column: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            dist.push(ks_distance(&column, model.vector().margin(i + 1)).unwrap_or(f64::INFINITY));
        }
    }
    let need = budget.ks_seeds.len() / 2 + 1;
    let mut worst_majority: f64 = 0.0;
    for dist in &mut per_coord {
        dist.sort_by(f64::total_cmp);
        worst_majority = worst_majority.max(dist[need - 1]);
    }
    Check::at_most("marginal_ks", bound, worst_majority).note(format!("{need} of {} seeds must pass per coordinate", budget.ks_seeds.len()))
}

/// Changing `x_1` shifts `ln f_F` by an amount free of `x_d` when `d ≥ 3`,
/// since the density factors over adjacent pairs.
fn product_form_check(model: &MaxEntModel, rng: &mut ChaCha20Rng, seed: u64) -> Check {
    let d = model.d();
    if d < 3 {
        return Check::skipped("product_form", "needs d >= 3");
    }
    let rows = match model.sample(PRODUCT_FORM_POINTS, seed ^ 0xf00d) {
        Ok(r) => r,
        Err(e) => return Check::failed_with("product_form", e.to_string()),
    };
    let lo = model.vector().domain().0;
    let mut worst: f64 = 0.0;
    for x in &rows {
        let Some(j) = model.chain().psi(d).find(x[d - 1]) else { continue };
        let top = model.chain().psi(d).intervals()[j].1;
        let last = if top.is_finite() { x[d - 1] + 0.5 * (top - x[d - 1]) } else { x[d - 1] + model.vector().length_scale() };
        let floor = if lo.is_finite() { lo } else { x[1] - model.vector().length_scale() };
        let first = floor + rng.random::<f64>() * (x[1] - floor);
        let shift = |tail: f64| {
            let mut a = x.clone();
            a[d - 1] = tail;
            let mut b = a.clone();
            b[0] = first;
            model.ln_density(&a).unwrap_or(f64::NAN) - model.ln_density(&b).unwrap_or(f64::NAN)
        };
        let (r1, r2) = (shift(x[d - 1]), shift(last));
        if r1.is_finite() && r2.is_finite() {
            worst = worst.max((r1 - r2).abs() / (1.0 + r1.abs()));
        }
    }
    Check::compare("product_form", 0.0, worst, 1e-9)
}

/// `f_F(x) = c_F(F(x)) Π f_i(x_i)` at sampled points.
fn consistency_check(model: &MaxEntModel, kernel: &CopulaKernel, seed: u64) -> Check {
    let f = model.vector();
    let rows = match model.sample(CONSISTENCY_POINTS, seed ^ 0xc0b1) {
        Ok(r) => r,
        Err(e) => return Check::failed_with("density_copula_consistency", e.to_string()),
    };
    let mut worst: f64 = 0.0;
    for x in &rows {
        let u: Vec<f64> = x.iter().enumerate().map(|(j, &t)| f.margin(j + 1).cdf(t)).collect();
        let jac: f64 = x.iter().enumerate().map(|(j, &t)| f.margin(j + 1).pdf(t)).product();
        let a = model.density(x).unwrap_or(f64::NAN);
        let b = kernel.c_f_density(&u).unwrap_or(f64::NAN) * jac;
        worst = worst.max((a - b).abs() / a.abs().max(1e-300));
    }
    Check::compare("density_copula_consistency", 0.0, worst, 1e-8).note("relative error")
}

/// `S_F^{-1}(S_F(c_F)) = c_F` at sampled points of `T^F`.
///
/// Points where the Jacobian underflows are counted, not judged.
fn round_trip_check(model: &MaxEntModel, kernel: &CopulaKernel, seed: u64) -> Check {
    let f = model.vector();
    let rows = match model.sample(CONSISTENCY_POINTS, seed ^ 0x5e77) {
        Ok(r) => r,
        Err(e) => return Check::failed_with("symmetrization_round_trip", e.to_string()),
    };
    let cf = |v: &[f64]| kernel.c_f_density(v).unwrap_or(f64::NAN);
    let sym = |v: &[f64]| kernel.symmetrize_density(&cf, v).unwrap_or(f64::NAN);
    let mut worst: f64 = 0.0;
    let mut unstable = 0usize;
    for x in &rows {
        let u: Vec<f64> = x.iter().enumerate().map(|(j, &t)| f.margin(j + 1).cdf(t)).collect();
        match kernel.unsymmetrize_density(&sym, &u) {
            Ok(Unsymmetrized::Value(v)) => {
                let direct = cf(&u);
                worst = worst.max((v - direct).abs() / direct.abs().max(1e-300));
            }
            Ok(Unsymmetrized::UnstableSupport) => unstable += 1,
            Err(e) => return Check::failed_with("symmetrization_round_trip", e.to_string()),
        }
    }
    Check::compare("symmetrization_round_trip", 0.0, worst, 1e-8)
        .note(format!("relative error; unstable-support points: {unstable}/{}", rows.len()))
}

/// `H(S_F(C_F)) - H(C_F)` by quadrature against `log d! + Σ H(δ_(i))`.
///
/// Both entropies are pulled back to ordered `x`: `u_i = F_i(x_i)` for
/// `C_F` and `u_i = G(x_i)` on the ordered cone for the symmetrization.
fn entropy_shift_quadrature(f: &MarginalVector, kernel: &CopulaKernel, domain: &Domain, resolution: usize, expected: f64) -> Check {
    let d = f.d();
    let g = &*kernel.delta().source().expect("derived multidiagonal").average;
    let cf = |u: &[f64]| kernel.c_f_density(u).unwrap_or(f64::NAN);
    let h_c = quad_entropy_weighted(
        &|x: &[f64]| {
            let u: Vec<f64> = x.iter().enumerate().map(|(j, &t)| f.margin(j + 1).cdf(t)).collect();
            cf(&u)
        },
        &|x: &[f64]| x.iter().enumerate().map(|(j, &t)| f.margin(j + 1).pdf(t)).product(),
        domain,
        resolution,
    );
    let dfact = ln_factorial(d as u64).exp();
    let h_s = quad_entropy_weighted(
        &|x: &[f64]| {
            let u: Vec<f64> = x.iter().map(|&t| g.cdf(t)).collect();
            kernel.symmetrize_density(&cf, &u).unwrap_or(f64::NAN)
        },
        &|x: &[f64]| dfact * x.iter().map(|&t| g.pdf(t)).product::<f64>(),
        domain,
        resolution,
    );
    match (h_c, h_s) {
        (Ok(hc), Ok(hs)) => Check::compare("entropy_shift_quadrature", expected, hs - hc, 1e-3),
        (Err(e), _) | (_, Err(e)) => Check::failed_with("entropy_shift_quadrature", e.to_string()),
    }
}

/// One-dimensional margins of `C_F` are uniform: `F_i(X_i)` from `f_F`
/// samples has KS distance to `U(0, 1)` below `c_α/√n`.
fn c_f_margins_check(model: &MaxEntModel, budget: &Budget) -> Check {
    let n = budget.ks_n;
    let rows = match model.sample(n, budget.mc_seed ^ 0xabcd) {
        Ok(r) => r,
        Err(e) => return Check::failed_with("c_f_margins", e.to_string()),
    };
    let unit = MarginalCdf::uniform(0.0, 1.0);
    let f = model.vector();
    let worst = (1..=model.d())
        .map(|i| {
            let col: Vec<f64> = rows.iter().map(|r| f.margin(i).cdf(r[i - 1])).collect();
            ks_distance(&col, &unit).unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max);
    Check::at_most("c_f_margins", KS_C_ALPHA / (n as f64).sqrt(), worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn beta_vector(d: u32) -> MarginalVector {
        MarginalVector::new((0..d).map(|j| MarginalCdf::beta_1_k(d - j)).collect()).unwrap()
    }

    #[test]
    fn unit_density_has_zero_entropy() {
        let dom = Domain::boxed(vec![(0.0, 1.0), (0.0, 1.0)]);
        assert!(quad_entropy(&|_: &[f64]| 1.0, &dom, 64).unwrap().abs() < 1e-14);
        assert_relative_eq!(quad_integrate(&|_: &[f64]| 1.0, &dom, 64).unwrap(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn ordered_and_mapped_regions() {
        // Volume of the ordered simplex in the unit cube is 1/d!.
        for d in 1..=3 {
            let v = quad_integrate(&|_: &[f64]| 1.0, &Domain::ordered(d, 0.0, 1.0), 64).unwrap();
            assert_relative_eq!(v, 1.0 / ln_factorial(d as u64).exp(), epsilon = 1e-12);
        }
        // ∫_0^∞ e^{-x} and ∫ over R of the logistic density.
        let v = quad_integrate(&|x: &[f64]| (-x[0]).exp(), &Domain::boxed(vec![(0.0, f64::INFINITY)]), 128).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-9);
        let v = quad_integrate(&|x: &[f64]| (-x[0].abs()).exp() * 0.5, &Domain::boxed(vec![(f64::NEG_INFINITY, f64::INFINITY)]).with_breaks(vec![0.0]), 128).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-9);
        let v = quad_integrate(&|x: &[f64]| x[0].exp(), &Domain::boxed(vec![(f64::NEG_INFINITY, 0.0)]), 128).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-9);
        // Symmetric region: d! times the ordered integral.
        let v = quad_integrate(&|_: &[f64]| 1.0, &Domain::symmetric(3, 0.0, 1.0), 64).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dimension_limit() {
        let dom = Domain::ordered(4, 0.0, 1.0);
        assert!(matches!(quad_integrate(&|_: &[f64]| 1.0, &dom, 16), Err(Error::DimensionTooLarge(4))));
    }

    #[test]
    fn beta_quadrature_entropy() {
        let f = beta_vector(2);
        let m = MaxEntModel::new(&f).unwrap();
        let h = quad_entropy(&|x: &[f64]| m.density(x).unwrap(), &Domain::ordered_for(&f), 512).unwrap();
        assert!((h - (-(2f64.ln()) - 0.5)).abs() < 1e-3, "h = {h}");
    }

    #[test]
    fn independence_copula_entropy_by_quadrature() {
        let k = CopulaKernel::new(&Multidiagonal::iid_uniform(2).unwrap());
        let h = quad_entropy(&|u: &[f64]| k.c_delta_density(u).unwrap(), &Domain::symmetric(2, 0.0, 1.0), 128).unwrap();
        assert!(h.abs() < 1e-6);
    }

    #[test]
    fn jackknife_matches_textbook_standard_error() {
        let v: Vec<f64> = (0..100).map(|k| (k as f64 * 0.37).sin()).collect();
        let est = jackknife_mean(&v).unwrap();
        let mean = v.iter().sum::<f64>() / 100.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0;
        assert_relative_eq!(est.estimate, mean, epsilon = 1e-15);
        assert_relative_eq!(est.stderr, (var / 100.0).sqrt(), max_relative = 1e-10);
        assert!(matches!(jackknife_mean(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn mc_entropy_examples() {
        let m = MaxEntModel::new(&beta_vector(2)).unwrap();
        let est = mc_entropy(&m, 200_000, 4).unwrap();
        let closed = -(2f64.ln()) - 0.5;
        assert!((est.estimate - closed).abs() <= 3.0 * est.stderr, "{est:?}");
        let five = MaxEntModel::new(&beta_vector(5)).unwrap();
        let est = mc_entropy(&five, 200_000, 5).unwrap();
        let closed = -(120f64.ln()) + 10.0 - 6.0 * (137.0 / 60.0);
        assert!((est.estimate - closed).abs() <= 3.0 * est.stderr, "{est:?} vs {closed}");
        assert!(matches!(mc_entropy(&m, 0, 1), Err(Error::EmptySample)));
    }

    #[test]
    fn ks_examples() {
        let u = MarginalCdf::uniform(0.0, 1.0);
        assert!(ks_distance(&[0.3; 50], &u).unwrap() >= 0.5);
        let n = 1000;
        let grid: Vec<f64> = (0..n).map(|k| u.quantile((k as f64 + 0.5) / n as f64)).collect();
        assert!(ks_distance(&grid, &u).unwrap() <= 1.0 / n as f64);
        let e = MarginalCdf::exponential(2.0);
        let mut passes = 0;
        for seed in 0..3u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let s: Vec<f64> = (0..10_000).map(|_| e.quantile(rng.random::<f64>())).collect();
            passes += (ks_distance(&s, &e).unwrap() < KS_C_ALPHA / 100.0) as usize;
        }
        assert!(passes >= 2);
        assert!(matches!(ks_distance(&[], &u), Err(Error::EmptySample)));
    }

    #[test]
    fn importance_check_is_near_one() {
        let f = MarginalVector::new(vec![MarginalCdf::exponential(3.0), MarginalCdf::exponential(2.0), MarginalCdf::exponential(1.0)]).unwrap();
        let m = MaxEntModel::new(&f).unwrap();
        let est = importance_normalization(&m, 5000, 1).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-4, "{est:?}");
    }

    #[test]
    fn degenerate_input_short_circuits() {
        let uu = MarginalVector::new(vec![MarginalCdf::uniform(0.0, 1.0), MarginalCdf::uniform(0.0, 1.0)]).unwrap();
        let budget = Budget {
            mc_n: 1000,
            ks_n: 500,
            quad_resolution: 32,
            quad_resolution_3d: 16,
            ..Budget::default()
        };
        let r = run_full_verification(&uu, &budget);
        assert!(!r.passed());
        assert_eq!(r.verdict, Some(Degeneracy::JInfinite { in_f0: false }));
        assert_eq!(r.check("multidiagonal_sum_identity").unwrap().status, Status::Passed);
        assert_eq!(r.check("normalization_quadrature").unwrap().status, Status::Skipped);
        assert_eq!(r.check("sigma_measure").unwrap().status, Status::Failed);
        let json = r.to_json();
        assert!(json.contains("\"inf\""));
    }

    #[test]
    fn report_is_deterministic_and_names_are_unique() {
        let f = MarginalVector::new(vec![MarginalCdf::exponential(2.0), MarginalCdf::exponential(1.0)]).unwrap();
        let budget = Budget {
            mc_n: 4000,
            ks_n: 2000,
            quad_resolution: 128,
            quad_resolution_3d: 32,
            ..Budget::default()
        };
        let a = run_full_verification(&f, &budget);
        let b = run_full_verification(&f, &budget);
        assert_eq!(a.to_json(), b.to_json());
        let mut names: Vec<&str> = a.checks.iter().map(|c| c.name.as_str()).collect();
        let total = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), total);
        assert!(a.to_text().contains("overall"));
        let mut c = a.clone();
        assert!(c.set_tolerance("j_transport", 1e-3));
        assert!(!c.set_tolerance("j_nonnegative", 1.0));
        assert!(c.set_tolerance("marginal_ks", -1.0));
        assert!(!c.check("marginal_ks").unwrap().passed);
        assert!(!c.passed());
        assert!(!c.set_tolerance("no_such_check", 1.0));
    }
}
