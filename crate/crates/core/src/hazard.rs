//! Integrated hazards between consecutive marginals.
//!
//! For a vector `F_1 ≥ ... ≥ F_d` with `F_0 ≡ 1`, link `i` carries the hazard
//! `ℓ_i = f_i / (F_{i-1} - F_i)` on the open set `Ψ_i` and its integral
//! `Λ_i(s, t) = ∫_s^t ℓ_i` between points of the same interval of `Ψ_i`.
//! Applied to a multidiagonal, `Λ_i(m, t)` is the potential `K_i(t)`.
//!
//! Closed forms cover exponential-type pairs (`F = 1 - exp(-λ φ)` with a
//! shared `φ`) and consecutive uniform order statistics. Other pairs are
//! tabulated per interval of `Ψ_i`: a cumulative primitive is stored at
//! nodes graded toward both ends and completed by adaptive quadrature.

use crate::marginals::{psi_pair, IntervalSet, MarginalCdf, MarginalVector, Transform};
use crate::quadrature::{adaptive, Tolerance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use crate::special::{ln_expm1, softplus};
use crate::{Error, Result};

const TABLE_TOL: Tolerance = Tolerance::new(1e-15, 1e-13);
const GEOMETRIC_LEVELS: i32 = 50;
const UNIFORM_NODES: usize = 256;
const MAX_ROOT_ITERATIONS: usize = 200;

#[derive(Clone, Debug)]
enum Link {
    /// `i = 1`: `Λ(s, t) = ln S_1(s) - ln S_1(t)`.
    Survival,
    /// `Λ(s, t) = (λ/Δ) [ln(e^{Δφ(t)} - 1) - ln(e^{Δφ(s)} - 1)]` where `λ`
    /// is the rate of `F_i` and `Δ` the rate gap to `F_{i-1}`.
    ExpPair { transform: Transform, lambda: f64, delta: f64 },
    /// `Λ(s, t) = c (φ(t) - φ(s))`.
    Linear { transform: Transform, c: f64 },
    Tabulated(Vec<Table>),
    Empty,
}

/// Cumulative primitive `Φ` of `ℓ_i` on one interval `(g, h)` of `Ψ_i`,
/// stored at nodes graded geometrically toward both ends.
#[derive(Clone, Debug)]
struct Table {
    g: f64,
    h: f64,
    nodes: Vec<f64>,
    cum: Vec<f64>,
}

/// Hazards and integrated hazards of every link of a marginal vector.
#[derive(Clone, Debug)]
pub struct HazardChain {
    vector: MarginalVector,
    psi: Vec<IntervalSet>,
    links: Vec<Link>,
    /// Per link and interval, the primitive evaluated at the interval anchor.
    anchors: Vec<Vec<f64>>,
}

impl HazardChain {
    pub fn new(vector: &MarginalVector) -> Self {
        let d = vector.d();
        let domain = vector.domain();
        let psi: Vec<IntervalSet> = (1..=d + 1)
            .map(|i| {
                let upper = (i >= 2).then(|| vector.margin(i - 1));
                let lower = (i <= d).then(|| vector.margin(i));
                psi_pair(upper, lower, domain)
            })
            .collect();
        let mut chain = Self {
            vector: vector.clone(),
            psi,
            links: Vec::with_capacity(d),
            anchors: Vec::with_capacity(d),
        };
        for i in 1..=d {
            let link = chain.classify(i);
            chain.links.push(link);
            let anchors = chain.psi[i - 1].midpoints().into_iter().map(|m| chain.primitive(i, m)).collect();
            chain.anchors.push(anchors);
        }
        chain
    }

    fn classify(&self, i: usize) -> Link {
        if i == 1 {
            return Link::Survival;
        }
        let psi = &self.psi[i - 1];
        if psi.is_empty() {
            return Link::Empty;
        }
        let (upper, lower) = (self.vector.margin(i - 1), self.vector.margin(i));
        if let (Some((tu, lu)), Some((tl, ll))) = (upper.exp_scale(), lower.exp_scale()) {
            if tu == tl && lu > ll {
                return Link::ExpPair {
                    transform: tl,
                    lambda: ll,
                    delta: lu - ll,
                };
            }
        }
        if let (MarginalCdf::UniformOrderStatistic { n: nu, k: ku }, MarginalCdf::UniformOrderStatistic { n: nl, k: kl }) = (upper, lower) {
            if nu == nl && ku + 1 == *kl {
                return Link::Linear {
                    transform: Transform::NegLog { a: 0.0, b: 1.0 },
                    c: (nl - kl + 1) as f64,
                };
            }
        }
        Link::Tabulated(psi.intervals().iter().map(|&(g, h)| self.build_table(i, g, h)).collect())
    }

    pub fn vector(&self) -> &MarginalVector {
        &self.vector
    }

    pub fn d(&self) -> usize {
        self.vector.d()
    }

    /// `Ψ_i` for `1 ≤ i ≤ d+1`.
    pub fn psi(&self, i: usize) -> &IntervalSet {
        &self.psi[i - 1]
    }

    /// Whether link `i` has an exact closed form.
    pub fn is_closed_form(&self, i: usize) -> bool {
        !matches!(self.links[i - 1], Link::Tabulated(_))
    }

    /// `ℓ_i(t)` from the density and the CDF gap, without closed forms.
    fn raw_hazard(&self, i: usize, t: f64) -> f64 {
        let f = self.vector.margin(i).pdf(t);
        if f == 0.0 {
            return 0.0;
        }
        let gap = self.vector.gap(i, t);
        if gap > 0.0 {
            f / gap
        } else {
            f64::INFINITY
        }
    }

    fn build_table(&self, i: usize, g: f64, h: f64) -> Table {
        let scale = self.vector.length_scale();
        // Map y ∈ (0, 1) onto (g, h), keeping the distance to a finite end
        // exact and sending y → 1 (or 0) to an infinite end.
        let place = |y: f64, from_right: bool| -> f64 {
            match (g.is_finite(), h.is_finite()) {
                (true, true) => {
                    if from_right {
                        h - (h - g) * y
                    } else {
                        g + (h - g) * y
                    }
                }
                (true, false) => {
                    let y = if from_right { 1.0 - y } else { y };
                    g + scale * y / (1.0 - y)
                }
                (false, true) => {
                    let y = if from_right { y } else { 1.0 - y };
                    h - scale * y / (1.0 - y)
                }
                (false, false) => {
                    let y = if from_right { 1.0 - y } else { y };
                    scale * (2.0 * y - 1.0) / (y * (1.0 - y))
                }
            }
        };
        let mut nodes: Vec<f64> = Vec::with_capacity(2 * GEOMETRIC_LEVELS as usize + UNIFORM_NODES + 8);
        for k in 1..=GEOMETRIC_LEVELS {
            let y = 0.5f64.powi(k);
            nodes.push(place(y, false));
            nodes.push(place(y, true));
        }
        for j in 1..UNIFORM_NODES {
            nodes.push(place(j as f64 / UNIFORM_NODES as f64, false));
        }
        nodes.extend(self.vector.breakpoints());
        nodes.retain(|&t| t > g && t < h && t.is_finite());
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let mut cum = vec![0.0; nodes.len()];
        if nodes.is_empty() {
            return Table { g, h, nodes, cum };
        }
        let q = |t: f64| self.raw_hazard(i, t);
        let centre = nodes.partition_point(|&t| t < place(0.5, false)).min(nodes.len() - 1);
        for k in centre + 1..nodes.len() {
            cum[k] = cum[k - 1] + adaptive(&q, nodes[k - 1], nodes[k], TABLE_TOL, 200).value;
        }
        for k in (0..centre).rev() {
            cum[k] = cum[k + 1] - adaptive(&q, nodes[k], nodes[k + 1], TABLE_TOL, 200).value;
        }
        Table { g, h, nodes, cum }
    }

    /// Tabulated primitive `Φ(t)` of link `i`.
    fn table_phi(&self, i: usize, table: &Table, t: f64) -> f64 {
        if t <= table.g {
            return f64::NEG_INFINITY;
        }
        if t >= table.h {
            return f64::INFINITY;
        }
        if table.nodes.is_empty() {
            return 0.0;
        }
        let q = |x: f64| self.raw_hazard(i, x);
        let k = table.nodes.partition_point(|&n| n <= t);
        if k == 0 {
            table.cum[0] - adaptive(&q, t, table.nodes[0], TABLE_TOL, 200).value
        } else {
            table.cum[k - 1] + adaptive(&q, table.nodes[k - 1], t, TABLE_TOL, 200).value
        }
    }

    fn interval_of(&self, i: usize, t: f64) -> Result<usize> {
        self.psi[i - 1].find(t).ok_or(Error::OutOfPsi { index: i, t })
    }

    /// Antiderivative of `ℓ_i` inside the interval of `Ψ_i` holding `t`, up to
    /// an interval-dependent constant.
    fn primitive(&self, i: usize, t: f64) -> f64 {
        match &self.links[i - 1] {
            Link::Survival => -self.vector.margin(1).ln_sf(t),
            Link::ExpPair { transform, lambda, delta } => lambda / delta * ln_expm1(delta * transform.phi(t)),
            Link::Linear { transform, c } => c * transform.phi(t),
            Link::Tabulated(tables) => match self.psi[i - 1].find(t) {
                Some(j) => self.table_phi(i, &tables[j], t),
                None => f64::NAN,
            },
            Link::Empty => f64::NAN,
        }
    }

    /// `ℓ_i(t) = f_i(t) / (F_{i-1}(t) - F_i(t))`; `+∞` where the gap
    /// vanishes but the density does not.
    pub fn hazard(&self, i: usize, t: f64) -> f64 {
        let inside = self.psi[i - 1].contains(t);
        match (&self.links[i - 1], inside) {
            (Link::ExpPair { transform, lambda, delta }, true) => {
                let y = delta * transform.phi(t);
                lambda * transform.dphi(t) / -(-y).exp_m1()
            }
            (Link::Linear { transform, c }, true) => c * transform.dphi(t),
            _ => self.raw_hazard(i, t),
        }
    }

    /// `Λ_i(m, t)` with `m` the anchor (midpoint) of the interval of `Ψ_i`
    /// holding `t`; for `i = 1` the anchor is the lower end, so the value is
    /// `-ln(1 - F_1(t))`.
    pub fn potential(&self, i: usize, t: f64) -> Result<f64> {
        let j = self.interval_of(i, t)?;
        if i == 1 {
            return Ok(self.primitive(1, t));
        }
        Ok(self.primitive(i, t) - self.anchors[i - 1][j])
    }

    /// `Λ_i(s, t)` for `s` inside an interval of `Ψ_i` and `t` in its
    /// closure; `+∞` when `t` reaches the right end.
    pub fn lambda(&self, i: usize, s: f64, t: f64) -> Result<f64> {
        let j = self.interval_of(i, s)?;
        let (g, h) = self.psi[i - 1].intervals()[j];
        if t >= h {
            return Ok(f64::INFINITY);
        }
        if t <= g {
            return Ok(f64::NEG_INFINITY);
        }
        if t == s {
            return Ok(0.0);
        }
        Ok(self.primitive(i, t) - self.primitive(i, s))
    }

    /// Smallest `t ≥ s` with `Λ_i(s, t) = e`; the root exists because the
    /// integrated hazard diverges at the right end of the interval.
    pub fn invert(&self, i: usize, s: f64, e: f64) -> Result<f64> {
        let j = self.interval_of(i, s)?;
        let (_, h) = self.psi[i - 1].intervals()[j];
        if e <= 0.0 {
            return Ok(s);
        }
        let t = match &self.links[i - 1] {
            Link::Survival => {
                let m = self.vector.margin(1);
                let target = m.ln_sf(s) - e;
                m.quantile(-target.exp_m1())
            }
            Link::ExpPair { transform, lambda, delta } => {
                let y = ln_expm1(delta * transform.phi(s)) + e * delta / lambda;
                transform.phi_inv(softplus(y) / delta)
            }
            Link::Linear { transform, c } => transform.phi_inv(transform.phi(s) + e / c),
            Link::Tabulated(tables) => self.invert_table(i, &tables[j], s, e)?,
            Link::Empty => return Err(Error::OutOfPsi { index: i, t: s }),
        };
        Ok(t.max(s).min(h))
    }

    fn invert_table(&self, i: usize, table: &Table, s: f64, e: f64) -> Result<f64> {
        let fail = Error::RootBracketFailure { index: i, start: s };
        let target = self.table_phi(i, table, s) + e;
        if !target.is_finite() {
            return Err(fail);
        }
        // Bracket [a, b] with Φ(a) ≤ target < Φ(b).
        let k = table.cum.partition_point(|&c| c <= target);
        let mut a = if k == 0 { s } else { table.nodes[k - 1].max(s) };
        let base = (a, self.table_phi(i, table, a));
        let q = |x: f64| self.raw_hazard(i, x);
        let phi = |t: f64| base.1 + adaptive(&q, base.0, t, TABLE_TOL, 200).value;
        let mut b = if k < table.nodes.len() {
            table.nodes[k]
        } else if table.h.is_finite() {
            table.h
        } else {
            // Expand geometrically toward +∞.
            let mut step = self.vector.length_scale().max(a.abs());
            let mut b = a + step;
            let mut tries = 0;
            while phi(b) <= target {
                a = b;
                step *= 2.0;
                b = a + step;
                tries += 1;
                if tries > MAX_ROOT_ITERATIONS || !b.is_finite() {
                    return Err(fail);
                }
            }
            b
        };
        let mut t = 0.5 * (a + b);
        for _ in 0..MAX_ROOT_ITERATIONS {
            let r = phi(t) - target;
            if r.abs() <= 1e-13 * target.abs().max(1.0) {
                return Ok(t);
            }
            if r > 0.0 {
                b = t;
            } else {
                a = t;
            }
            if b - a <= 1e-12 * t.abs().max(1e-3) {
                return Ok(0.5 * (a + b));
            }
            let next = t - r / q(t);
            t = if next > a && next < b { next } else { 0.5 * (a + b) };
        }
        Err(fail)
    }
}

/// Rows per independent random stream in [`sample_rows`].
pub const CHUNK_ROWS: usize = 1024;

impl HazardChain {
    /// One path of the chain: `x_1 = F_1^{-1}(V)`, then `x_i` solves
    /// `Λ_i(x_{i-1}, x_i) = -log(1 - V_i)` for `i ≥ 2`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let d = self.d();
        let mut x = Vec::with_capacity(d);
        x.push(self.vector.margin(1).quantile(open_unit(rng)));
        for i in 2..=d {
            let e = -open_unit(rng).ln();
            x.push(self.invert(i, x[i - 2], e)?);
        }
        Ok(x)
    }
}

/// A uniform draw in the open interval `(0, 1)`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `n` rows from `row`, split into chunks of [`CHUNK_ROWS`]; chunk `c` uses
/// stream `c` of a ChaCha20 generator seeded with `seed`, so the output
/// depends only on `(n, seed)` and not on the thread count.
pub fn sample_rows<F>(n: usize, seed: u64, row: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut ChaCha20Rng) -> Result<Vec<f64>> + Sync,
{
    let chunks = n.div_ceil(CHUNK_ROWS);
    let parts: Vec<Result<Vec<Vec<f64>>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let rows = CHUNK_ROWS.min(n - c * CHUNK_ROWS);
            (0..rows).map(|_| row(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn chain(margins: Vec<MarginalCdf>) -> HazardChain {
        HazardChain::new(&MarginalVector::new(margins).unwrap())
    }

    /// Forces the tabulated route by wrapping each marginal in a one-part
    /// mixture, which disables every closed form.
    fn tabulated(margins: Vec<MarginalCdf>) -> HazardChain {
        chain(margins.into_iter().map(|m| MarginalCdf::Mixture(vec![m])).collect())
    }

    #[test]
    fn beta_example_hazard() {
        let c = chain(vec![MarginalCdf::beta_1_k(2), MarginalCdf::beta_1_k(1)]);
        assert!(c.is_closed_form(2));
        for t in [0.01, 0.3, 0.5, 0.97] {
            assert_relative_eq!(c.hazard(2, t), 1.0 / (t * (1.0 - t)), max_relative = 1e-12);
        }
        // Λ(s, t) = ln(t/(1-t)) - ln(s/(1-s)).
        let logit = |t: f64| (t / (1.0 - t)).ln();
        assert_relative_eq!(c.lambda(2, 0.2, 0.7).unwrap(), logit(0.7) - logit(0.2), max_relative = 1e-12);
    }

    #[test]
    fn exponential_hazard_simplifies() {
        let c = chain(vec![MarginalCdf::exponential(2.0), MarginalCdf::exponential(1.0)]);
        for j in 1..=10 {
            let t = 0.37 * j as f64;
            let direct = (-t).exp() / ((-t).exp() - (-2.0 * t).exp());
            assert_relative_eq!(c.hazard(2, t), direct, max_relative = 1e-12);
            assert_relative_eq!(c.hazard(2, t), 1.0 / (1.0 - (-t).exp()), max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_gap_gives_infinite_hazard() {
        let c = chain(vec![MarginalCdf::uniform(0.0, 1.0), MarginalCdf::uniform(0.0, 1.0)]);
        assert_eq!(c.hazard(2, 0.5), f64::INFINITY);
        assert_eq!(c.hazard(2, 1.5), 0.0);
    }

    #[test]
    fn order_statistic_potentials() {
        let c = chain(vec![MarginalCdf::uniform_order_statistic(2, 1), MarginalCdf::uniform_order_statistic(2, 2)]);
        for t in [0.1, 0.5, 0.8] {
            assert_relative_eq!(c.potential(1, t).unwrap(), -2.0 * (1.0 - t).ln(), max_relative = 1e-12);
            assert_relative_eq!(c.potential(2, t).unwrap(), -(2.0 * (1.0 - t)).ln(), epsilon = 1e-14);
        }
        assert!(matches!(c.potential(2, 1.5), Err(Error::OutOfPsi { index: 2, .. })));
    }

    #[test]
    fn tabulated_matches_closed_forms() {
        let margins = vec![MarginalCdf::exponential(3.0), MarginalCdf::exponential(2.0), MarginalCdf::exponential(1.0)];
        let exact = chain(margins.clone());
        let table = tabulated(margins);
        assert!(!table.is_closed_form(2));
        for i in 2..=3 {
            for (s, t) in [(0.01, 0.2), (0.3, 1.4), (1.0, 6.0), (0.5, 0.5001)] {
                let a = exact.lambda(i, s, t).unwrap();
                let b = table.lambda(i, s, t).unwrap();
                assert_relative_eq!(a, b, epsilon = 1e-9, max_relative = 1e-9);
            }
        }
        let margins = vec![MarginalCdf::beta_1_k(3), MarginalCdf::beta_1_k(2), MarginalCdf::beta_1_k(1)];
        let exact = chain(margins.clone());
        let table = tabulated(margins);
        for i in 2..=3 {
            for (s, t) in [(1e-6, 0.2), (0.3, 0.9), (0.5, 0.999999)] {
                assert_relative_eq!(exact.lambda(i, s, t).unwrap(), table.lambda(i, s, t).unwrap(), epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn integrated_hazard_diverges_at_right_end() {
        let c = tabulated(vec![MarginalCdf::beta_1_k(2), MarginalCdf::beta_1_k(1)]);
        let mut last = f64::NEG_INFINITY;
        for k in 2..=8 {
            let p = c.potential(2, 1.0 - 10f64.powi(-k)).unwrap();
            assert!(p > last);
            last = p;
        }
        assert!(last > 15.0);
        assert_eq!(c.lambda(2, 0.5, 1.0).unwrap(), f64::INFINITY);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn invert_solves_lambda(s in 0.01f64..3.0, e in 0.0f64..12.0, tab in proptest::bool::ANY) {
            let margins = vec![MarginalCdf::exponential(2.5), MarginalCdf::exponential(1.0)];
            let c = if tab { tabulated(margins) } else { chain(margins) };
            let t = c.invert(2, s, e).unwrap();
            prop_assert!(t >= s);
            let back = c.lambda(2, s, t).unwrap();
            prop_assert!((back - e).abs() < 1e-9 * e.max(1.0), "Λ({s}, {t}) = {back}, wanted {e}");
        }

        #[test]
        fn lambda_is_monotone(s in 0.001f64..0.9, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let c = chain(vec![MarginalCdf::beta_1_k(4), MarginalCdf::beta_1_k(2)]);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let t1 = s + (1.0 - s) * lo;
            let t2 = s + (1.0 - s) * hi;
            prop_assert!(c.lambda(2, s, t1).unwrap() <= c.lambda(2, s, t2).unwrap());
            prop_assert!(c.hazard(2, t1) >= 0.0);
        }
    }
}
