//! One-dimensional quadrature.
//!
//! Three layers are provided:
//!
//! * [`adaptive`]: globally adaptive Gauss–Kronrod (10/21 points) on a finite
//!   interval, bisecting the sub-interval with the largest error estimate.
//! * [`integrate_singular`]: integration over an open interval whose
//!   endpoints may be infinite or carry an integrable singularity. The
//!   interval is cut at an interior centre and consumed in dyadic shells
//!   toward each endpoint; the sum of shells is monitored for divergence.
//! * [`GradedRule`]: a fixed composite Gauss–Legendre rule with panels graded
//!   geometrically toward both endpoints, used by the tensor integrators.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

// Kronrod abscissae (positive half, descending) and weights.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];
// Gauss weights for the abscissae XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Absolute and relative error targets.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-14, 1e-11)
    }
}

/// Outcome of a one-dimensional integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// Integrand values that are not finite are treated as zero. Every caller in
/// this crate integrates densities or log-weighted densities that vanish or
/// are integrable where the raw formula produces `0 * inf`.
#[inline]
fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Single 21-point Kronrod panel. Returns `(estimate, error)`.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = sanitize(f(centre));
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let x = half * XGK[j];
        let f1 = sanitize(f(centre - x));
        let f2 = sanitize(f(centre + x));
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let err = (res_k - res_g) * half;
    let abs_half = half.abs();
    (
        res_k * half,
        rescale_error(err, res_abs * abs_half, res_asc * abs_half),
    )
}

#[derive(PartialEq)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over the finite
/// interval `[a, b]`.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: Tolerance, max_panels: usize) -> Integral {
    if a == b {
        return Integral {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    let (value, error) = gk21(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut panels = 1;
    loop {
        if total_err <= tol.abs.max(tol.rel * total.abs()) {
            return Integral {
                value: total,
                error: total_err,
                converged: true,
            };
        }
        if panels >= max_panels {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // Panel collapsed to adjacent floats; nothing left to refine.
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk21(f, worst.a, mid);
        let (v2, e2) = gk21(f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        panels += 1;
    }
    // Recompute from the panels to shed accumulated rounding in the running sums.
    let value = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Integral {
        value,
        error,
        converged: error <= tol.abs.max(tol.rel * f64::abs(value)),
    }
}

/// Adaptive integration over `[a, b]`, split at every breakpoint strictly
/// inside the interval.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: Tolerance) -> Integral {
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Integral {
        value: 0.0,
        error: 0.0,
        converged: true,
    };
    for w in cuts.windows(2) {
        let r = adaptive(f, w[0], w[1], tol, 400);
        out.value += r.value;
        out.error += r.error;
        out.converged &= r.converged;
    }
    out
}

/// Settings for [`integrate_singular`].
#[derive(Clone, Copy, Debug)]
pub struct SingularOptions {
    /// Length scale used to step toward infinite endpoints.
    pub scale: f64,
    /// Partial sums beyond this magnitude are reported as divergent.
    pub divergence_bound: f64,
    /// Per-shell tolerance.
    pub tol: Tolerance,
    /// Upper bound on the number of shells per side.
    pub max_shells: usize,
}

impl Default for SingularOptions {
    fn default() -> Self {
        Self {
            scale: 1.0,
            divergence_bound: 1e6,
            tol: Tolerance::new(1e-15, 1e-12),
            max_shells: 1100,
        }
    }
}

/// Result of [`integrate_singular`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularIntegral {
    pub value: f64,
    pub error: f64,
    /// Set when the shell sums grew past the divergence bound or did not
    /// settle before the shells ran out.
    pub diverged: bool,
}

fn shell_points(centre: f64, end: f64, scale: f64, k: usize) -> f64 {
    if end.is_finite() {
        end - (end - centre) * 0.5f64.powi(k as i32)
    } else {
        let dir = end.signum();
        centre + dir * scale * (2f64.powi(k as i32) - 1.0)
    }
}

fn integrate_side<F: Fn(f64) -> f64>(f: &F, centre: f64, end: f64, breaks: &[f64], opts: &SingularOptions) -> SingularIntegral {
    let mut total = 0.0;
    let mut error = 0.0;
    let mut quiet = 0;
    let mut last_contrib = f64::INFINITY;
    let mut prev = centre;
    for k in 1..=opts.max_shells {
        let next = shell_points(centre, end, opts.scale, k);
        if next == prev || !next.is_finite() {
            break;
        }
        let (a, b) = if prev < next { (prev, next) } else { (next, prev) };
        let r = integrate_pieces(f, a, b, breaks, opts.tol);
        let contrib = r.value;
        total += contrib;
        error += r.error;
        if total.abs() > opts.divergence_bound {
            return SingularIntegral {
                value: total,
                error,
                diverged: true,
            };
        }
        last_contrib = contrib.abs();
        if last_contrib <= 1e-16 * total.abs() + 1e-300 {
            quiet += 1;
            if quiet >= 3 && k >= 6 {
                return SingularIntegral {
                    value: total,
                    error,
                    diverged: false,
                };
            }
        } else {
            quiet = 0;
        }
        prev = next;
    }
    // Shells exhausted (reached float resolution near a finite endpoint or
    // the shell budget near an infinite one). Accept only if the tail has
    // visibly died out.
    let settled = last_contrib <= 1e-9 * total.abs().max(1.0);
    SingularIntegral {
        value: total,
        error,
        diverged: !settled,
    }
}

/// Integrates `f` over the open interval `(lo, hi)`, where either endpoint
/// may be infinite or singular. `breaks` lists interior points where `f` is
/// not smooth.
pub fn integrate_singular<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, breaks: &[f64], opts: &SingularOptions) -> SingularIntegral {
    if !(lo < hi) {
        return SingularIntegral {
            value: 0.0,
            error: 0.0,
            diverged: false,
        };
    }
    let centre = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo + opts.scale,
        (false, true) => hi - opts.scale,
        (false, false) => 0.0,
    };
    let right = integrate_side(f, centre, hi, breaks, opts);
    let left = integrate_side(f, centre, lo, breaks, opts);
    SingularIntegral {
        value: right.value + left.value,
        error: right.error + left.error,
        diverged: right.diverged || left.diverged,
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
type Rule = (Vec<f64>, Vec<f64>);

/// Composite Gauss–Legendre rule with panels graded geometrically toward
/// both endpoints of every piece.
#[derive(Clone, Debug)]
pub struct GradedRule {
    pub order: usize,
    pub grading_levels: usize,
    pub interior_panels: usize,
    pub ratio: f64,
}

impl GradedRule {
    /// Builds a rule with roughly `resolution` nodes per piece.
    pub fn from_resolution(resolution: usize) -> Self {
        let order = 8;
        let panels = (resolution / order).max(3);
        let grading_levels = (panels / 4).clamp(1, 20);
        let interior_panels = panels.saturating_sub(2 * grading_levels).max(1);
        Self {
            order,
            grading_levels,
            interior_panels,
            ratio: 0.2,
        }
    }

    pub fn nodes_per_piece(&self) -> usize {
        (2 * self.grading_levels + self.interior_panels) * self.order
    }

    fn reference(&self) -> &'static (Vec<f64>, Vec<f64>) {
        static CACHE: OnceLock<std::sync::Mutex<Vec<(usize, &'static Rule)>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().expect("gauss-legendre cache poisoned");
        if let Some((_, r)) = guard.iter().find(|(n, _)| *n == self.order) {
            return r;
        }
        let leaked: &'static (Vec<f64>, Vec<f64>) = Box::leak(Box::new(gauss_legendre(self.order)));
        guard.push((self.order, leaked));
        leaked
    }

    /// Panel boundaries on `[0, 1]`.
    fn unit_panels(&self) -> Vec<f64> {
        let r = self.ratio;
        let mut cuts = vec![0.0];
        for k in (1..=self.grading_levels).rev() {
            cuts.push(r.powi(k as i32));
        }
        let lo = r;
        let hi = 1.0 - r;
        for j in 1..self.interior_panels {
            cuts.push(lo + (hi - lo) * j as f64 / self.interior_panels as f64);
        }
        for k in 1..=self.grading_levels {
            cuts.push(1.0 - r.powi(k as i32));
        }
        cuts.push(1.0);
        cuts
    }

    /// Nodes and weights for `[a, b]`, splitting at interior breakpoints.
    pub fn nodes(&self, a: f64, b: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.nodes_per_piece());
        if !(a < b) {
            return out;
        }
        let mut cuts = vec![a];
        cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
        cuts.push(b);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let unit = self.unit_panels();
        let (gx, gw) = self.reference();
        for piece in cuts.windows(2) {
            let (pa, pb) = (piece[0], piece[1]);
            let len = pb - pa;
            for panel in unit.windows(2) {
                let (u0, u1) = (panel[0], panel[1]);
                let centre = pa + len * 0.5 * (u0 + u1);
                let half = len * 0.5 * (u1 - u0);
                for (x, w) in gx.iter().zip(gw.iter()) {
                    out.push((centre + half * x, half * w));
                }
            }
        }
        out
    }
}
