//! One-dimensional CDFs, vectors of stochastically ordered marginals, the
//! open sets `Ψ_i` on which consecutive marginals differ, and the `J`
//! functional.
//!
//! Indices into a [`MarginalVector`] are 1-based to match the mathematical
//! notation; `F_0 ≡ 1` and `F_{d+1} ≡ 0` are implicit.

use std::borrow::Cow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::quadrature::{integrate_singular, SingularOptions};
use crate::special::{digamma_int, ln_binomial, ln_factorial};
use crate::{Error, Result};

/// Absolute tolerance on CDF values below which two CDFs are equal.
pub const EQ_TOL: f64 = 1e-12;
/// Measure below which `Σ^F` counts as null.
pub const SIGMA_TOL: f64 = 1e-9;
/// F_i-mass of `(Ψ_i)^c` above which `J` is declared infinite.
pub const J_MASS_TOL: f64 = 1e-12;
/// Quantile levels per marginal in the stochastic-order validation grid.
pub const VALIDATION_GRID: usize = 4096;

/// Monotone change of variable under which a family reads
/// `F(t) = 1 - exp(-λ φ(t))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Transform {
    /// `φ(t) = t` on `(0, ∞)`.
    Positive,
    /// `φ(t) = -ln(1 - (t - a)/(b - a))` on `(a, b)`.
    NegLog { a: f64, b: f64 },
}

impl Transform {
    pub(crate) fn domain(&self) -> (f64, f64) {
        match *self {
            Transform::Positive => (0.0, f64::INFINITY),
            Transform::NegLog { a, b } => (a, b),
        }
    }

    pub(crate) fn phi(&self, t: f64) -> f64 {
        match *self {
            Transform::Positive => t.max(0.0),
            Transform::NegLog { a, b } => {
                if t <= a {
                    0.0
                } else if t >= b {
                    f64::INFINITY
                } else {
                    let x = (t - a) / (b - a);
                    if x < 0.5 {
                        -(-x).ln_1p()
                    } else {
                        (b - a).ln() - (b - t).ln()
                    }
                }
            }
        }
    }

    /// Derivative of `φ`.
    pub(crate) fn dphi(&self, t: f64) -> f64 {
        match *self {
            Transform::Positive => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Transform::NegLog { a, b } => {
                if t >= a && t < b {
                    1.0 / (b - t)
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn phi_inv(&self, y: f64) -> f64 {
        match *self {
            Transform::Positive => y,
            Transform::NegLog { a, b } => {
                if y.is_infinite() {
                    b
                } else {
                    (a + (b - a) * -(-y).exp_m1()).min(b)
                }
            }
        }
    }
}

/// A continuous one-dimensional CDF.
///
/// The first five variants form the marginal-file schema. `Mixture`
/// and `Transported` are derived objects (the average CDF and the
/// multidiagonal components `F_i ∘ G^{-1}`) and never appear in files.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MarginalCdf {
    Uniform {
        a: f64,
        b: f64,
    },
    Exponential {
        rate: f64,
    },
    #[serde(rename = "beta_1_k")]
    Beta1K {
        k: u32,
    },
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
        #[serde(default = "default_true", skip_serializing_if = "is_true")]
        absolutely_continuous: bool,
    },
    /// CDF of the `k`-th order statistic of `n` iid uniforms on `[0, 1]`.
    UniformOrderStatistic {
        n: u32,
        k: u32,
    },
    #[serde(skip)]
    Mixture(Vec<MarginalCdf>),
    /// `outer ∘ scale^{-1}` on `[0, 1]`.
    #[serde(skip)]
    Transported {
        outer: Box<MarginalCdf>,
        scale: Arc<MarginalCdf>,
    },
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn lerp_knots(knots: &[(f64, f64)], x: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let j = knots.partition_point(|k| k.0 <= x);
    let (x0, p0) = knots[j - 1];
    let (x1, p1) = knots[j];
    if x == x0 {
        return p0;
    }
    p0 + (p1 - p0) * ((x - x0) / (x1 - x0))
}

/// Solves for `inf{x : F(x) ≥ t}` inside a bracket with `F(lo) < t ≤ F(hi)`.
///
/// `cdf` and `sf` must be complementary; the survival side is used for
/// `t > 1/2` to keep relative precision in the upper tail.
fn invert_bracketed(cdf: &dyn Fn(f64) -> f64, sf: &dyn Fn(f64) -> f64, pdf: &dyn Fn(f64) -> f64, t: f64, mut lo: f64, mut hi: f64, start: f64) -> f64 {
    let excess = |x: f64| if t > 0.5 { (1.0 - t) - sf(x) } else { cdf(x) - t };
    let mut x = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    for _ in 0..400 {
        let h = excess(x);
        if h >= 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) || hi - lo < f64::MIN_POSITIVE {
            return hi;
        }
        let p = pdf(x);
        let step = if p > 0.0 { h / p } else { f64::NAN };
        let next = x - step;
        if step.is_finite() && next > lo && next < hi {
            if step.abs() <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
                return next;
            }
            x = next;
        } else {
            x = 0.5 * (lo + hi);
        }
    }
    hi
}

impl MarginalCdf {
    pub fn uniform(a: f64, b: f64) -> Self {
        MarginalCdf::Uniform { a, b }
    }

    pub fn exponential(rate: f64) -> Self {
        MarginalCdf::Exponential { rate }
    }

    pub fn beta_1_k(k: u32) -> Self {
        MarginalCdf::Beta1K { k }
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Self {
        MarginalCdf::PiecewiseLinear {
            knots,
            absolutely_continuous: true,
        }
    }

    pub fn uniform_order_statistic(n: u32, k: u32) -> Self {
        MarginalCdf::UniformOrderStatistic { n, k }
    }

    /// Checks parameter ranges and knot monotonicity.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMarginal(m));
        match self {
            MarginalCdf::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return bad(format!("uniform requires finite a < b, got ({a}, {b})"));
                }
            }
            MarginalCdf::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
            }
            MarginalCdf::Beta1K { k } => {
                if *k < 1 {
                    return bad("beta_1_k requires k >= 1".into());
                }
            }
            MarginalCdf::PiecewiseLinear { knots, .. } => {
                if knots.len() < 2 {
                    return bad("piecewise_linear needs at least two knots".into());
                }
                for w in knots.windows(2) {
                    if !(w[0].0 < w[1].0) {
                        return bad("piecewise_linear abscissae must be strictly increasing".into());
                    }
                    if w[1].1 < w[0].1 {
                        return bad("piecewise_linear CDF values must be non-decreasing".into());
                    }
                }
                if knots.iter().any(|k| !k.0.is_finite() || !(0.0..=1.0).contains(&k.1)) {
                    return bad("piecewise_linear knots must be finite with values in [0, 1]".into());
                }
                if knots[0].1 != 0.0 || knots[knots.len() - 1].1 != 1.0 {
                    return bad("piecewise_linear CDF values must start at 0 and end at 1".into());
                }
            }
            MarginalCdf::UniformOrderStatistic { n, k } => {
                if *k < 1 || k > n {
                    return bad(format!("order statistic needs 1 <= k <= n, got k = {k}, n = {n}"));
                }
            }
            MarginalCdf::Mixture(parts) => {
                if parts.is_empty() {
                    return bad("empty mixture".into());
                }
                for p in parts {
                    p.validate()?;
                }
            }
            MarginalCdf::Transported { outer, scale } => {
                outer.validate()?;
                scale.validate()?;
            }
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            MarginalCdf::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            MarginalCdf::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            MarginalCdf::Beta1K { k } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    -(*k as f64 * (-x).ln_1p()).exp_m1()
                }
            }
            MarginalCdf::PiecewiseLinear { knots, .. } => lerp_knots(knots, x),
            MarginalCdf::UniformOrderStatistic { n, k } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    binomial_tail(*n, *k, *n, x)
                }
            }
            MarginalCdf::Mixture(parts) => parts.iter().map(|p| p.cdf(x)).sum::<f64>() / parts.len() as f64,
            MarginalCdf::Transported { outer, scale } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    outer.cdf(scale.quantile(x))
                }
            }
        }
    }

    /// Survival function `1 - F(x)`, evaluated without cancellation where
    /// the family allows it.
    pub fn sf(&self, x: f64) -> f64 {
        match self {
            MarginalCdf::Uniform { a, b } => ((b - x) / (b - a)).clamp(0.0, 1.0),
            MarginalCdf::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            MarginalCdf::Beta1K { k } => {
                if x <= 0.0 {
                    1.0
                } else if x >= 1.0 {
                    0.0
                } else {
                    (*k as f64 * (-x).ln_1p()).exp()
                }
            }
            MarginalCdf::PiecewiseLinear { knots, .. } => {
                // Interpolate the complement directly so that values near 1
                // keep their precision.
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if x <= first.0 {
                    return 1.0;
                }
                if x >= last.0 {
                    return 0.0;
                }
                let j = knots.partition_point(|k| k.0 <= x);
                let (x0, p0) = knots[j - 1];
                let (x1, p1) = knots[j];
                let (s0, s1) = (1.0 - p0, 1.0 - p1);
                s0 + (s1 - s0) * ((x - x0) / (x1 - x0))
            }
            MarginalCdf::UniformOrderStatistic { n, k } => {
                if x <= 0.0 {
                    1.0
                } else if x >= 1.0 {
                    0.0
                } else {
                    binomial_tail(*n, 0, *k - 1, x)
                }
            }
            MarginalCdf::Mixture(parts) => parts.iter().map(|p| p.sf(x)).sum::<f64>() / parts.len() as f64,
            MarginalCdf::Transported { outer, scale } => {
                if x <= 0.0 {
                    1.0
                } else if x >= 1.0 {
                    0.0
                } else {
                    outer.sf(scale.quantile(x))
                }
            }
        }
    }

    /// `ln(1 - F(x))`.
    pub fn ln_sf(&self, x: f64) -> f64 {
        match self {
            MarginalCdf::Exponential { rate } => -rate * x.max(0.0),
            MarginalCdf::Beta1K { k } => {
                if x >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    *k as f64 * (-x.max(0.0)).ln_1p()
                }
            }
            _ => self.sf(x).ln(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            MarginalCdf::Uniform { a, b } => {
                if x >= *a && x < *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            MarginalCdf::Exponential { rate } => {
                if x >= 0.0 {
                    rate * (-rate * x).exp()
                } else {
                    0.0
                }
            }
            MarginalCdf::Beta1K { k } => {
                if (0.0..1.0).contains(&x) {
                    let k = *k as f64;
                    k * ((k - 1.0) * (-x).ln_1p()).exp()
                } else {
                    0.0
                }
            }
            MarginalCdf::PiecewiseLinear { knots, .. } => {
                if x < knots[0].0 || x >= knots[knots.len() - 1].0 {
                    return 0.0;
                }
                let j = knots.partition_point(|k| k.0 <= x);
                let (x0, p0) = knots[j - 1];
                let (x1, p1) = knots[j];
                (p1 - p0) / (x1 - x0)
            }
            MarginalCdf::UniformOrderStatistic { n, k } => {
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                let (n, k) = (*n as u64, *k as u64);
                let log_c = (n as f64).ln() + ln_binomial(n - 1, k - 1);
                let mut v = log_c.exp();
                if k > 1 {
                    v *= x.powi((k - 1) as i32);
                }
                if n > k {
                    v *= (1.0 - x).powi((n - k) as i32);
                }
                v
            }
            MarginalCdf::Mixture(parts) => parts.iter().map(|p| p.pdf(x)).sum::<f64>() / parts.len() as f64,
            MarginalCdf::Transported { outer, scale } => {
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                let y = scale.quantile(x);
                let g = scale.pdf(y);
                if g > 0.0 {
                    outer.pdf(y) / g
                } else {
                    0.0
                }
            }
        }
    }

    /// Generalized inverse `inf{s : F(s) ≥ p}`, with `-∞` for `p ≤ 0` and
    /// `+∞` for `p > 1`.
    pub fn quantile(&self, p: f64) -> f64 {
        if p.is_nan() {
            return f64::NAN;
        }
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p > 1.0 {
            return f64::INFINITY;
        }
        if p == 1.0 {
            return self.one_edge();
        }
        match self {
            MarginalCdf::Uniform { a, b } => a + p * (b - a),
            MarginalCdf::Exponential { rate } => -(-p).ln_1p() / rate,
            MarginalCdf::Beta1K { k } => -((-p).ln_1p() / *k as f64).exp_m1(),
            MarginalCdf::PiecewiseLinear { knots, .. } => {
                let j = knots.partition_point(|k| k.1 < p);
                let (x0, p0) = knots[j - 1];
                let (x1, p1) = knots[j];
                (x0 + (p - p0) / (p1 - p0) * (x1 - x0)).min(x1)
            }
            MarginalCdf::UniformOrderStatistic { .. } => self.invert(p, 0.0, 1.0, 0.5),
            MarginalCdf::Mixture(parts) => {
                let (mut lo, mut hi, mut mean) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
                for q in parts.iter().map(|m| m.quantile(p)) {
                    lo = lo.min(q);
                    hi = hi.max(q);
                    mean += q / parts.len() as f64;
                }
                if lo == hi {
                    return lo;
                }
                if self.cdf(lo) >= p {
                    return lo;
                }
                self.invert(p, lo, hi, mean)
            }
            MarginalCdf::Transported { outer, scale } => scale.cdf(outer.quantile(p)),
        }
    }

    fn invert(&self, p: f64, lo: f64, hi: f64, start: f64) -> f64 {
        invert_bracketed(&|x| self.cdf(x), &|x| self.sf(x), &|x| self.pdf(x), p, lo, hi, start)
    }

    /// `sup{x : F(x) = 0}`.
    pub fn zero_edge(&self) -> f64 {
        match self {
            MarginalCdf::Uniform { a, .. } => *a,
            MarginalCdf::Exponential { .. } | MarginalCdf::Beta1K { .. } | MarginalCdf::UniformOrderStatistic { .. } => 0.0,
            MarginalCdf::PiecewiseLinear { knots, .. } => knots[knots.partition_point(|k| k.1 <= 0.0) - 1].0,
            MarginalCdf::Mixture(parts) => parts.iter().map(|p| p.zero_edge()).fold(f64::INFINITY, f64::min),
            MarginalCdf::Transported { outer, scale } => scale.cdf(outer.zero_edge()),
        }
    }

    /// `inf{x : F(x) = 1}`.
    pub fn one_edge(&self) -> f64 {
        match self {
            MarginalCdf::Uniform { b, .. } => *b,
            MarginalCdf::Exponential { .. } => f64::INFINITY,
            MarginalCdf::Beta1K { .. } | MarginalCdf::UniformOrderStatistic { .. } => 1.0,
            MarginalCdf::PiecewiseLinear { knots, .. } => knots[knots.partition_point(|k| k.1 < 1.0)].0,
            MarginalCdf::Mixture(parts) => parts.iter().map(|p| p.one_edge()).fold(f64::NEG_INFINITY, f64::max),
            MarginalCdf::Transported { outer, scale } => scale.cdf(outer.one_edge()),
        }
    }

    /// Closure of the region carrying mass, `[zero_edge, one_edge]`.
    pub fn support(&self) -> (f64, f64) {
        (self.zero_edge(), self.one_edge())
    }

    /// Finite points where the density may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = match self {
            MarginalCdf::Uniform { a, b } => vec![*a, *b],
            MarginalCdf::Exponential { .. } => vec![0.0],
            MarginalCdf::Beta1K { .. } | MarginalCdf::UniformOrderStatistic { .. } => vec![0.0, 1.0],
            MarginalCdf::PiecewiseLinear { knots, .. } => knots.iter().map(|k| k.0).collect(),
            MarginalCdf::Mixture(parts) => parts.iter().flat_map(|p| p.breakpoints()).collect(),
            MarginalCdf::Transported { outer, scale } => {
                let mut v: Vec<f64> = outer.breakpoints().into_iter().chain(scale.breakpoints()).map(|x| scale.cdf(x)).collect();
                v.extend([0.0, 1.0]);
                v
            }
        };
        v.retain(|x| x.is_finite());
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Typical length scale of the distribution, used to size quadrature
    /// shells on unbounded ranges.
    pub fn length_scale(&self) -> f64 {
        match self {
            MarginalCdf::Exponential { rate } => 1.0 / rate,
            MarginalCdf::Mixture(parts) => parts.iter().map(|p| p.length_scale()).fold(0.0, f64::max),
            _ => {
                let (lo, hi) = self.support();
                if lo.is_finite() && hi.is_finite() && hi > lo {
                    hi - lo
                } else {
                    1.0
                }
            }
        }
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        match self {
            MarginalCdf::PiecewiseLinear {
                absolutely_continuous, ..
            } => *absolutely_continuous,
            MarginalCdf::Mixture(parts) => parts.iter().all(|p| p.is_absolutely_continuous()),
            MarginalCdf::Transported { outer, scale } => outer.is_absolutely_continuous() && scale.is_absolutely_continuous(),
            _ => true,
        }
    }

    /// Differential entropy `-∫ f log f`; `-∞` for laws without a density.
    pub fn entropy(&self) -> f64 {
        if !self.is_absolutely_continuous() {
            return f64::NEG_INFINITY;
        }
        match self {
            MarginalCdf::Uniform { a, b } => (b - a).ln(),
            MarginalCdf::Exponential { rate } => 1.0 - rate.ln(),
            MarginalCdf::Beta1K { k } => {
                let k = *k as f64;
                -k.ln() + (k - 1.0) / k
            }
            MarginalCdf::PiecewiseLinear { knots, .. } => {
                let mut h = 0.0;
                for w in knots.windows(2) {
                    let dp = w[1].1 - w[0].1;
                    if dp > 0.0 {
                        h -= dp * (dp / (w[1].0 - w[0].0)).ln();
                    }
                }
                h
            }
            MarginalCdf::UniformOrderStatistic { n, k } => {
                let (alpha, beta) = (*k as u64, (*n - *k + 1) as u64);
                let ln_beta = ln_factorial(alpha - 1) + ln_factorial(beta - 1) - ln_factorial(alpha + beta - 1);
                ln_beta - (alpha as f64 - 1.0) * digamma_int(alpha) - (beta as f64 - 1.0) * digamma_int(beta)
                    + (alpha + beta - 2) as f64 * digamma_int(alpha + beta)
            }
            MarginalCdf::Mixture(_) => {
                let f = |x: f64| xlogx(self.pdf(x));
                let (lo, hi) = self.support();
                let opts = SingularOptions {
                    scale: self.length_scale(),
                    ..SingularOptions::default()
                };
                let r = integrate_singular(&f, lo, hi, &self.breakpoints(), &opts);
                if r.diverged {
                    f64::NEG_INFINITY
                } else {
                    -r.value
                }
            }
            MarginalCdf::Transported { outer, scale } => {
                // Substituting u = G(x): -∫ f(x) log(f(x)/g(x)) dx.
                let f = |x: f64| {
                    let fx = outer.pdf(x);
                    let gx = scale.pdf(x);
                    if fx > 0.0 && gx > 0.0 {
                        fx * (fx / gx).ln()
                    } else {
                        0.0
                    }
                };
                let (lo, hi) = outer.support();
                let mut breaks = outer.breakpoints();
                breaks.extend(scale.breakpoints());
                let opts = SingularOptions {
                    scale: outer.length_scale(),
                    ..SingularOptions::default()
                };
                let r = integrate_singular(&f, lo, hi, &breaks, &opts);
                if r.diverged {
                    f64::NEG_INFINITY
                } else {
                    -r.value
                }
            }
        }
    }

    /// `Some((φ, λ))` when `F = 1 - exp(-λ φ)`.
    pub(crate) fn exp_scale(&self) -> Option<(Transform, f64)> {
        match *self {
            MarginalCdf::Exponential { rate } => Some((Transform::Positive, rate)),
            MarginalCdf::Beta1K { k } => Some((Transform::NegLog { a: 0.0, b: 1.0 }, k as f64)),
            MarginalCdf::Uniform { a, b } => Some((Transform::NegLog { a, b }, 1.0)),
            _ => None,
        }
    }

    /// Knots of families that are piecewise linear.
    pub(crate) fn linear_knots(&self) -> Option<Cow<'_, [(f64, f64)]>> {
        match self {
            MarginalCdf::Uniform { a, b } => Some(Cow::Owned(vec![(*a, 0.0), (*b, 1.0)])),
            MarginalCdf::PiecewiseLinear { knots, .. } => Some(Cow::Borrowed(knots)),
            _ => None,
        }
    }
}

/// `Σ_{j=lo}^{hi} C(n, j) x^j (1 - x)^{n-j}`.
fn binomial_tail(n: u32, lo: u32, hi: u32, x: f64) -> f64 {
    let (ln_x, ln_1mx) = (x.ln(), (-x).ln_1p());
    (lo..=hi.min(n))
        .map(|j| (ln_binomial(n as u64, j as u64) + j as f64 * ln_x + (n - j) as f64 * ln_1mx).exp())
        .map(|v| if v.is_nan() { 0.0 } else { v })
        .sum::<f64>()
        .min(1.0)
}

/// `x log x` with the continuous extension `0 log 0 = 0`.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 1e-300 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Generalized inverse `inf{s ∈ ℝ : J(s) ≥ t}` of a non-decreasing,
/// right-continuous function.
///
/// `hint` seeds the search bracket. Returns `-∞` when `J ≥ t` everywhere and
/// `+∞` when `J < t` everywhere.
pub fn generalized_inverse<J: Fn(f64) -> f64>(j: J, t: f64, hint: (f64, f64)) -> f64 {
    let (mut lo, mut hi) = hint;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        lo = -1.0;
        hi = 1.0;
    }
    let mut width = (hi - lo).max(1.0);
    while j(lo) >= t {
        hi = lo;
        lo -= width;
        width *= 2.0;
        if lo < -1e300 {
            return f64::NEG_INFINITY;
        }
    }
    width = (hi - lo).max(1.0);
    while j(hi) < t {
        lo = hi;
        hi += width;
        width *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    // Invariant: J(lo) < t ≤ J(hi).
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if j(mid) >= t {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// Finite ordered list of disjoint open intervals.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    /// Builds a set from arbitrary intervals, dropping empty ones and merging
    /// overlaps. Touching intervals stay separate because the shared endpoint
    /// is excluded.
    pub fn new(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(g, d)| g < d);
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (g, d) in raw {
            match intervals.last_mut() {
                Some(last) if g < last.1 => last.1 = last.1.max(d),
                _ => intervals.push((g, d)),
            }
        }
        Self { intervals }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Index of the interval strictly containing `t`.
    pub fn find(&self, t: f64) -> Option<usize> {
        let j = self.intervals.partition_point(|iv| iv.1 <= t);
        match self.intervals.get(j) {
            Some(&(g, _)) if g < t => Some(j),
            _ => None,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.find(t).is_some()
    }

    /// Whether the open gap `(a, b)` lies in one interval, allowing the
    /// endpoints to overshoot by `tol`. Empty gaps are always contained.
    pub fn contains_gap(&self, a: f64, b: f64, tol: f64) -> bool {
        if !(a < b) {
            return true;
        }
        self.intervals.iter().any(|&(g, d)| g - tol <= a && b <= d + tol)
    }

    /// Index of the interval `(g, d)` with `g ≤ a < b ≤ d`, or with `g < a < d`
    /// when `a == b`.
    pub fn find_gap(&self, a: f64, b: f64) -> Option<usize> {
        if a < b {
            self.intervals.iter().position(|&(g, d)| g <= a && b <= d)
        } else {
            self.find(a)
        }
    }

    /// Arithmetic midpoints `m^{(j)}`; infinite ends fall back to a point at
    /// unit distance from the finite end.
    pub fn midpoints(&self) -> Vec<f64> {
        self.intervals.iter().map(|&(g, d)| interior_point(g, d)).collect()
    }

    /// Total length.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(g, d)| d - g).sum()
    }

    /// Closed pieces of `[lo, hi] \ self` with positive length.
    pub fn complement(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut cursor = lo;
        for &(g, d) in &self.intervals {
            if g > cursor {
                out.push((cursor, g.min(hi)));
            }
            cursor = cursor.max(d);
        }
        if hi > cursor {
            out.push((cursor, hi));
        }
        out.retain(|(a, b)| a < b);
        out
    }

    /// Image under a non-decreasing map, with empty images dropped.
    pub fn map<M: Fn(f64) -> f64>(&self, m: M) -> Self {
        Self::new(self.intervals.iter().map(|&(g, d)| (m(g), m(d))).collect())
    }
}

/// Midpoint of `(g, d)`, or a point at unit distance from the finite end.
pub fn interior_point(g: f64, d: f64) -> f64 {
    match (g.is_finite(), d.is_finite()) {
        (true, true) => 0.5 * (g + d),
        (true, false) => g + 1.0,
        (false, true) => d - 1.0,
        (false, false) => 0.0,
    }
}

/// Outcome of [`check_stochastic_order`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OrderReport {
    Ok,
    /// Smallest `index` with `F_{index-1}(witness) < F_index(witness)`.
    Violation { index: usize, witness: f64, deficit: f64 },
}

impl OrderReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, OrderReport::Ok)
    }
}

/// An ordered d-tuple of marginal CDFs.
#[derive(Clone, Debug)]
pub struct MarginalVector {
    margins: Vec<MarginalCdf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarginalFile {
    margins: Vec<MarginalCdf>,
}

impl MarginalVector {
    /// Validates every marginal. Stochastic order is checked separately by
    /// [`check_stochastic_order`] so that violations can be reported.
    pub fn new(margins: Vec<MarginalCdf>) -> Result<Self> {
        if margins.is_empty() {
            return Err(Error::EmptyVector);
        }
        for m in &margins {
            m.validate()?;
        }
        Ok(Self { margins })
    }

    /// Parses the `{"margins": [...]}` schema.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: MarginalFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(file.margins)
    }

    pub fn to_json(&self) -> String {
        let file = MarginalFile {
            margins: self.margins.clone(),
        };
        serde_json::to_string_pretty(&file).expect("file-schema marginals always serialize")
    }

    pub fn d(&self) -> usize {
        self.margins.len()
    }

    pub fn margins(&self) -> &[MarginalCdf] {
        &self.margins
    }

    /// `F_i`, 1-based.
    pub fn margin(&self, i: usize) -> &MarginalCdf {
        &self.margins[i - 1]
    }

    /// `F_{i-1}(x) - F_i(x)` for `1 ≤ i ≤ d+1`, using survival functions when
    /// both CDFs are close to 1.
    pub fn gap(&self, i: usize, x: f64) -> f64 {
        let d = self.d();
        let g = if i == 1 {
            self.margins[0].sf(x)
        } else if i == d + 1 {
            self.margins[d - 1].cdf(x)
        } else {
            let upper = &self.margins[i - 2];
            let lower = &self.margins[i - 1];
            let cu = upper.cdf(x);
            if cu > 0.5 {
                lower.sf(x) - upper.sf(x)
            } else {
                cu - lower.cdf(x)
            }
        };
        debug_assert!(g <= 1.0 + 1e-12, "CDF gap above 1 indicates corrupted input");
        g
    }

    /// Smallest and largest edges of the supports.
    pub fn domain(&self) -> (f64, f64) {
        let lo = self.margins.iter().map(|m| m.zero_edge()).fold(f64::INFINITY, f64::min);
        let hi = self.margins.iter().map(|m| m.one_edge()).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Union of breakpoints of all marginals.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.margins.iter().flat_map(|m| m.breakpoints()).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn length_scale(&self) -> f64 {
        self.margins.iter().map(|m| m.length_scale()).fold(0.0, f64::max)
    }

    pub fn all_absolutely_continuous(&self) -> bool {
        self.margins.iter().all(|m| m.is_absolutely_continuous())
    }

    /// `Ψ_i` for every `1 ≤ i ≤ d+1`, in order.
    pub fn psi_sets(&self) -> Vec<IntervalSet> {
        (1..=self.d() + 1).map(|i| psi_of(self, i)).collect()
    }
}

fn psi_of(f: &MarginalVector, i: usize) -> IntervalSet {
    let d = f.d();
    let upper = (i >= 2).then(|| f.margin(i - 1));
    let lower = (i <= d).then(|| f.margin(i));
    psi_pair(upper, lower, f.domain())
}

/// Stochastic order of one pair; returns a witness and the deficit
/// `F_lower - F_upper` there.
fn order_violation(upper: &MarginalCdf, lower: &MarginalCdf) -> Option<(f64, f64)> {
    if let (Some((tu, lu)), Some((tl, ll))) = (upper.exp_scale(), lower.exp_scale()) {
        if tu == tl {
            if lu >= ll {
                return None;
            }
            let w = tu.phi_inv(1.0 / ll);
            return Some((w, lower.cdf(w) - upper.cdf(w)));
        }
    }
    if let (MarginalCdf::UniformOrderStatistic { n: nu, k: ku }, MarginalCdf::UniformOrderStatistic { n: nl, k: kl }) = (upper, lower) {
        if nu == nl {
            if ku <= kl {
                return None;
            }
            return Some((0.5, lower.cdf(0.5) - upper.cdf(0.5)));
        }
    }
    let grid = validation_grid(upper, lower);
    let mut worst: Option<(f64, f64)> = None;
    for &x in &grid {
        let deficit = lower.cdf(x) - upper.cdf(x);
        if deficit > EQ_TOL && worst.is_none_or(|(_, w)| deficit > w) {
            worst = Some((x, deficit));
        }
    }
    worst
}

/// Checks `F_{i-1} ≥ F_i` for all `i`, analytically for same-family pairs
/// and on a quantile grid otherwise.
pub fn check_stochastic_order(f: &MarginalVector) -> OrderReport {
    for i in 2..=f.d() {
        if let Some((witness, deficit)) = order_violation(f.margin(i - 1), f.margin(i)) {
            return OrderReport::Violation { index: i, witness, deficit };
        }
    }
    OrderReport::Ok
}

/// Quantiles of both CDFs at `VALIDATION_GRID` levels, their breakpoints,
/// and the finite support edges.
fn validation_grid(a: &MarginalCdf, b: &MarginalCdf) -> Vec<f64> {
    let mut pts = Vec::with_capacity(2 * VALIDATION_GRID + 16);
    for m in [a, b] {
        for j in 0..VALIDATION_GRID {
            pts.push(m.quantile((j as f64 + 0.5) / VALIDATION_GRID as f64));
        }
        pts.extend(m.breakpoints());
        pts.push(m.zero_edge());
        pts.push(m.one_edge());
    }
    pts.retain(|x| x.is_finite());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Average CDF `G = (1/d) Σ F_i`.
pub fn average_cdf(f: &MarginalVector) -> MarginalCdf {
    MarginalCdf::Mixture(f.margins().to_vec())
}

/// The open set `{F_{i-1} > F_i}` for `2 ≤ i ≤ d`, or the boundary sets
/// `Ψ_1 = (lo, sup{F_1 < 1})` and `Ψ_{d+1} = (inf{F_d > 0}, hi)` where
/// `(lo, hi)` is the ambient domain.
pub fn psi_intervals(f: &MarginalVector, i: usize) -> Result<IntervalSet> {
    if i == 0 || i > f.d() + 1 {
        return Err(Error::InvalidMarginal(format!("Psi index {i} outside 1..={}", f.d() + 1)));
    }
    if (2..=f.d()).contains(&i) {
        if let Some((witness, _)) = order_violation(f.margin(i - 1), f.margin(i)) {
            return Err(Error::StochasticOrder { index: i, witness });
        }
    }
    Ok(psi_of(f, i))
}

pub(crate) fn psi_pair(upper: Option<&MarginalCdf>, lower: Option<&MarginalCdf>, domain: (f64, f64)) -> IntervalSet {
    match (upper, lower) {
        (None, None) => IntervalSet::new(vec![domain]),
        (None, Some(l)) => IntervalSet::new(vec![(domain.0, l.one_edge())]),
        (Some(u), None) => IntervalSet::new(vec![(u.zero_edge(), domain.1)]),
        (Some(u), Some(l)) => psi_between(u, l),
    }
}

fn psi_between(u: &MarginalCdf, l: &MarginalCdf) -> IntervalSet {
    if let (Some((tu, lu)), Some((tl, ll))) = (u.exp_scale(), l.exp_scale()) {
        if tu == tl {
            return if lu > ll { IntervalSet::new(vec![tu.domain()]) } else { IntervalSet::empty() };
        }
    }
    if let (MarginalCdf::UniformOrderStatistic { n: nu, k: ku }, MarginalCdf::UniformOrderStatistic { n: nl, k: kl }) = (u, l) {
        if nu == nl {
            return if ku < kl { IntervalSet::new(vec![(0.0, 1.0)]) } else { IntervalSet::empty() };
        }
    }
    if let (MarginalCdf::Transported { outer: ou, scale: su }, MarginalCdf::Transported { outer: ol, scale: sl }) = (u, l) {
        if Arc::ptr_eq(su, sl) {
            return psi_between(ou, ol).map(|x| su.cdf(x));
        }
    }
    if let (Some(ku), Some(kl)) = (u.linear_knots(), l.linear_knots()) {
        return psi_piecewise(&ku, &kl);
    }
    psi_numeric(u, l)
}

/// Exact `Ψ` for two piecewise-linear CDFs: the gap is linear between
/// consecutive knots of the union, and non-negative.
fn psi_piecewise(ku: &[(f64, f64)], kl: &[(f64, f64)]) -> IntervalSet {
    let mut xs: Vec<f64> = ku.iter().chain(kl.iter()).map(|k| k.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let value = |knots: &[(f64, f64)], x: f64| match knots.binary_search_by(|k| k.0.total_cmp(&x)) {
        Ok(j) => knots[j].1,
        Err(_) => lerp_knots(knots, x),
    };
    let gaps: Vec<f64> = xs.iter().map(|&x| value(ku, x) - value(kl, x)).collect();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for j in 0..xs.len().saturating_sub(1) {
        if gaps[j] > EQ_TOL || gaps[j + 1] > EQ_TOL {
            match out.last_mut() {
                Some(last) if last.1 == xs[j] && gaps[j] > EQ_TOL => last.1 = xs[j + 1],
                _ => out.push((xs[j], xs[j + 1])),
            }
        }
    }
    IntervalSet::new(out)
}

/// `Ψ` located by sign changes on the validation grid, refined by
/// bisection. Sound only up to the grid resolution.
fn psi_numeric(u: &MarginalCdf, l: &MarginalCdf) -> IntervalSet {
    let gap = |x: f64| {
        let cu = u.cdf(x);
        if cu > 0.5 {
            l.sf(x) - u.sf(x)
        } else {
            cu - l.cdf(x)
        }
    };
    let grid = validation_grid(u, l);
    let lo_edge = u.zero_edge().min(l.zero_edge());
    let hi_edge = u.one_edge().max(l.one_edge());
    let positive: Vec<bool> = grid.iter().map(|&x| gap(x) > EQ_TOL).collect();
    let bisect = |zero: &mut f64, pos: &mut f64, pred: &dyn Fn(f64) -> bool| {
        for _ in 0..200 {
            let mid = 0.5 * (*zero + *pos);
            if mid == *zero || mid == *pos || (*pos - *zero).abs() <= 1e-15 * zero.abs().max(1.0) {
                break;
            }
            if pred(mid) {
                *pos = mid;
            } else {
                *zero = mid;
            }
        }
    };
    // Boundary between neighbouring grid points of different class, reported
    // on the zero side. When the zero side is an exact zero of the gap, the
    // boundary is pushed on to the first point where the gap is positive.
    let refine = |a: f64, b: f64, a_pos: bool| -> f64 {
        let (origin, mut pos) = if a_pos { (b, a) } else { (a, b) };
        let mut zero = origin;
        bisect(&mut zero, &mut pos, &|x| gap(x) > EQ_TOL);
        if gap(origin) == 0.0 {
            let mut z = origin;
            let mut p = pos;
            bisect(&mut z, &mut p, &|x| gap(x) > 0.0);
            zero = z;
        }
        zero
    };
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for (j, (&x, &p)) in grid.iter().zip(&positive).enumerate() {
        if p && start.is_none() {
            start = Some(if j == 0 { if lo_edge.is_finite() && lo_edge < x { refine(lo_edge, x, false) } else { f64::NEG_INFINITY } } else { refine(grid[j - 1], x, false) });
        }
        if !p {
            if let Some(s) = start.take() {
                out.push((s, refine(grid[j - 1], x, true)));
            }
        }
    }
    if let Some(s) = start {
        let last = *grid.last().expect("grid is non-empty");
        let end = if hi_edge.is_finite() && hi_edge > last { refine(last, hi_edge, true) } else { f64::INFINITY };
        out.push((s, end));
    }
    IntervalSet::new(out)
}

/// Lebesgue measure of `Σ^F = ∪_{i=2}^d F_i((Ψ_i)^c)`.
pub fn sigma_measure(f: &MarginalVector) -> f64 {
    let mut images: Vec<(f64, f64)> = Vec::new();
    for i in 2..=f.d() {
        let psi = psi_of(f, i);
        let fi = f.margin(i);
        for (a, b) in psi.complement(f64::NEG_INFINITY, f64::INFINITY) {
            images.push((fi.cdf(a), fi.cdf(b)));
        }
    }
    // `+ 0.0` normalizes a signed zero.
    IntervalSet::new(images).measure() + 0.0
}

/// Membership in `F_d^0`: every marginal has a density and `|Σ^F| = 0`.
pub fn in_f0(f: &MarginalVector) -> bool {
    f.all_absolutely_continuous() && sigma_measure(f) <= SIGMA_TOL
}

/// Whether `x` is sorted and each open gap `(x_{i-1}, x_i)` lies in `Ψ_i`.
pub fn in_support_lf(f: &MarginalVector, x: &[f64]) -> bool {
    if x.len() != f.d() {
        return false;
    }
    if x.windows(2).any(|w| w[0] > w[1]) {
        return false;
    }
    (2..=f.d()).all(|i| psi_of(f, i).contains_gap(x[i - 2], x[i - 1], 0.0))
}

/// `J(F) = Σ_{i=2}^d ∫ f_i |log(F_{i-1} - F_i)|`, `+∞` when divergent.
pub fn j_functional(f: &MarginalVector) -> f64 {
    let mut total = 0.0;
    for i in 2..=f.d() {
        let term = j_term(f, i, &psi_of(f, i));
        if !term.is_finite() {
            return f64::INFINITY;
        }
        total += term;
    }
    total
}

pub(crate) fn j_term(f: &MarginalVector, i: usize, psi: &IntervalSet) -> f64 {
    let fi = f.margin(i);
    let inside: f64 = psi.intervals().iter().map(|&(g, d)| fi.cdf(d) - fi.cdf(g)).sum();
    if 1.0 - inside > J_MASS_TOL {
        return f64::INFINITY;
    }
    let opts = SingularOptions {
        scale: f.length_scale(),
        ..SingularOptions::default()
    };
    let breaks = f.breakpoints();
    let mut total = 0.0;
    for &(g, d) in psi.intervals() {
        let integrand = |t: f64| {
            let p = fi.pdf(t);
            if p == 0.0 {
                return 0.0;
            }
            p * -f.gap(i, t).ln()
        };
        let r = integrate_singular(&integrand, g, d, &breaks, &opts);
        if r.diverged {
            return f64::INFINITY;
        }
        total += r.value;
    }
    total.max(0.0)
}
