//! The maximum-entropy symmetric copula `C_δ` with multidiagonal `δ`, the
//! copula `C_F` of the maximum-entropy order statistics, and the maps
//! between order-statistics copulas and symmetric copulas.
//!
//! `K_i` is evaluated on one of two routes. A multidiagonal given directly
//! uses the hazard chain of its own components. A multidiagonal induced by
//! marginals `F` uses the chain of `F` through the substitution `u = G(x)`,
//! under which `K_i(u) = Λ_i^F(G^{-1}(m), G^{-1}(u))` and
//! `K_i'(u) = ℓ_i^F(x) / g(x)`; closed forms of `F` then carry over.

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::hazard::{sample_rows, HazardChain};
use crate::marginals::{in_f0, MarginalCdf, MarginalVector};
use crate::multidiag::Multidiagonal;
use crate::special::ln_factorial;
use crate::{Error, Result};

/// Endpoint tolerance of `L_δ` membership on the `[0, 1]` scale.
pub const L_DELTA_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
enum Route {
    Direct(HazardChain),
    Transported {
        chain: HazardChain,
        average: Arc<MarginalCdf>,
        /// Per link `i ≥ 2` and interval, `Λ_i` primitive at `G^{-1}(m)`.
        offsets: Vec<Vec<f64>>,
    },
}

/// Evaluator of `K_i`, `a_i`, `B_i`, `E_i` and `c_δ` for one multidiagonal.
#[derive(Clone, Debug)]
pub struct CopulaKernel {
    delta: Multidiagonal,
    route: Route,
    is_d0: bool,
    /// `Some(in F_d^0)` when the multidiagonal is induced by marginals.
    marginals_in_f0: Option<bool>,
}

/// Value of the inverse symmetrization map at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Unsymmetrized {
    Value(f64),
    /// `Π δ_(i)' ∘ δ_(i)^{-1}(u_i)` is positive but below machine epsilon,
    /// so the quotient carries no reliable digits.
    UnstableSupport,
}

impl CopulaKernel {
    pub fn new(delta: &Multidiagonal) -> Self {
        let is_d0 = delta.validate().is_d0;
        let (route, marginals_in_f0) = match delta.source() {
            Some(src) => {
                let chain = HazardChain::new(&src.marginals);
                let g = &src.average;
                let offsets = (1..=delta.d())
                    .map(|i| {
                        if i == 1 {
                            return Vec::new();
                        }
                        chain
                            .psi(i)
                            .intervals()
                            .iter()
                            .map(|&(a, b)| {
                                let m = 0.5 * (g.cdf(a) + g.cdf(b));
                                let x = g.quantile(m);
                                chain.potential(i, x).unwrap_or(0.0)
                            })
                            .collect()
                    })
                    .collect();
                let route = Route::Transported {
                    chain,
                    average: Arc::clone(g),
                    offsets,
                };
                (route, Some(in_f0(&src.marginals)))
            }
            None => (Route::Direct(HazardChain::new(delta.components())), None),
        };
        Self {
            delta: delta.clone(),
            route,
            is_d0,
            marginals_in_f0,
        }
    }

    /// Kernel of `δ^F` for marginals `F`.
    pub fn for_marginals(f: &MarginalVector) -> Self {
        Self::new(&Multidiagonal::from_marginals(f))
    }

    pub fn d(&self) -> usize {
        self.delta.d()
    }

    pub fn delta(&self) -> &Multidiagonal {
        &self.delta
    }

    pub fn is_d0(&self) -> bool {
        self.is_d0
    }

    /// Coordinate of the chain for `u ∈ [0, 1]`.
    fn coord(&self, u: f64) -> f64 {
        match &self.route {
            Route::Direct(_) => u,
            Route::Transported { average, .. } => average.quantile(u),
        }
    }

    /// `K_i` at chain coordinate `x`.
    fn k_at(&self, i: usize, x: f64) -> Result<f64> {
        if i == self.d() + 1 {
            return Ok(0.0);
        }
        match &self.route {
            Route::Direct(chain) => chain.potential(i, x),
            Route::Transported { chain, offsets, .. } => {
                if i == 1 {
                    return chain.potential(1, x);
                }
                let j = chain.psi(i).find(x).ok_or(Error::OutOfPsi { index: i, t: x })?;
                Ok(chain.potential(i, x)? - offsets[i - 1][j])
            }
        }
    }

    /// `ln K_i'` at chain coordinate `x`.
    fn ln_k_prime_at(&self, i: usize, x: f64) -> f64 {
        match &self.route {
            Route::Direct(chain) => chain.hazard(i, x).ln(),
            Route::Transported { chain, average, .. } => chain.hazard(i, x).ln() - average.pdf(x).ln(),
        }
    }

    /// `K_i(t)` for `1 ≤ i ≤ d+1`; `K_{d+1} ≡ 0`.
    pub fn k(&self, i: usize, t: f64) -> Result<f64> {
        if i == self.d() + 1 {
            return Ok(0.0);
        }
        if !self.delta.psi(i).contains(t) {
            return Err(Error::OutOfPsi { index: i, t });
        }
        self.k_at(i, self.coord(t))
    }

    /// `K_i'(t) = δ_(i)'(t) / (δ_(i-1)(t) - δ_(i)(t))`.
    pub fn k_prime(&self, i: usize, t: f64) -> f64 {
        self.ln_k_prime_at(i, self.coord(t)).exp()
    }

    /// `ln a_i(t)`, `-∞` outside `Ψ_i ∩ Ψ_{i+1}`.
    pub fn ln_a(&self, i: usize, t: f64) -> f64 {
        if !(self.delta.psi(i).contains(t) && self.delta.psi(i + 1).contains(t)) {
            return f64::NEG_INFINITY;
        }
        let x = self.coord(t);
        match (self.k_at(i, x), self.k_at(i + 1, x)) {
            (Ok(ki), Ok(knext)) => self.ln_k_prime_at(i, x) + (knext - ki),
            _ => f64::NEG_INFINITY,
        }
    }

    /// `a_i(t) = K_i'(t) exp(K_{i+1}(t) - K_i(t))` on `Ψ_i ∩ Ψ_{i+1}`, else 0.
    pub fn a(&self, i: usize, t: f64) -> f64 {
        self.ln_a(i, t).exp()
    }

    /// `B_i(t) = exp(-K_i(t))` for `1 ≤ i ≤ d+1`.
    pub fn b(&self, i: usize, t: f64) -> Result<f64> {
        Ok((-self.k(i, t)?).exp())
    }

    /// `E_i(t) = (δ_(i)(t) - δ_(i+1)(t)) exp(K_{i+1}(t))` for `0 ≤ i ≤ d`,
    /// with `δ_(0) ≡ 1` and `δ_(d+1) ≡ 0`.
    pub fn e(&self, i: usize, t: f64) -> Result<f64> {
        let d = self.d();
        let k = self.k(i + 1, t)?;
        let upper = if i == 0 { 1.0 } else { self.delta.eval(i, t) };
        let lower = if i == d { 0.0 } else { self.delta.eval(i + 1, t) };
        Ok((upper - lower) * k.exp())
    }

    /// Whether the sorted point `v` has every gap `(v_(i-1), v_(i))`,
    /// `2 ≤ i ≤ d`, inside `Ψ_i^δ` up to the endpoint tolerance.
    fn in_l_delta(&self, v: &[f64]) -> bool {
        (2..=self.d()).all(|i| self.delta.psi(i).contains_gap(v[i - 2], v[i - 1], L_DELTA_TOL))
    }

    /// `ln c_δ(u)`.
    pub fn ln_c_delta(&self, u: &[f64]) -> Result<f64> {
        let d = self.d();
        if u.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: u.len() });
        }
        if !self.is_d0 {
            return Err(Error::NotAbsolutelyContinuous);
        }
        if u.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Ok(f64::NEG_INFINITY);
        }
        let mut v = u.to_vec();
        v.sort_by(f64::total_cmp);
        if !self.in_l_delta(&v) {
            return Ok(f64::NEG_INFINITY);
        }
        let mut total = -ln_factorial(d as u64);
        for (j, &t) in v.iter().enumerate() {
            total += self.ln_a(j + 1, t);
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        Ok(total)
    }

    /// `c_δ(u) = (1/d!) 1_{L_δ}(u) Π a_i(u_(i))`.
    pub fn c_delta_density(&self, u: &[f64]) -> Result<f64> {
        Ok(self.ln_c_delta(u)?.exp())
    }

    /// `H(C_δ) = -J(δ) + log d! + (d - 1) + Σ H(δ_(i))`.
    pub fn entropy_closed(&self) -> f64 {
        copula_entropy_closed(&self.delta)
    }

    fn require_f0(&self) -> Result<&MarginalVector> {
        match (self.marginals_in_f0, self.delta.source()) {
            (Some(true), Some(src)) => Ok(&src.marginals),
            _ => Err(Error::NotInF0),
        }
    }

    /// `ln c_F(u)` for the marginals that induced the multidiagonal.
    ///
    /// With `x_i = F_i^{-1}(u_i)` one has `δ_(i)^{-1}(u_i) = G(x_i)` and
    /// `δ_(i-1) ∘ δ_(i)^{-1}(u_i) - u_i = F_{i-1}(x_i) - F_i(x_i)`, so the
    /// factors are evaluated at `x` without a round trip through `G^{-1}`.
    pub fn ln_c_f(&self, u: &[f64]) -> Result<f64> {
        let f = self.require_f0()?;
        let d = self.d();
        if u.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: u.len() });
        }
        let Route::Transported { chain, average, .. } = &self.route else {
            return Err(Error::NotInF0);
        };
        if u.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Ok(f64::NEG_INFINITY);
        }
        let x: Vec<f64> = u.iter().enumerate().map(|(j, &p)| f.margin(j + 1).quantile(p)).collect();
        if x.windows(2).any(|w| w[0] > w[1]) {
            return Ok(f64::NEG_INFINITY);
        }
        let w: Vec<f64> = x.iter().map(|&t| average.cdf(t)).collect();
        if !self.in_l_delta(&w) {
            return Ok(f64::NEG_INFINITY);
        }
        if x.iter().enumerate().any(|(j, &t)| f.margin(j + 1).pdf(t) <= 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let mut total = 0.0;
        for i in 2..=d {
            let lambda = match chain.lambda(i, x[i - 2], x[i - 1]) {
                Ok(l) => l,
                Err(_) => return Ok(f64::NEG_INFINITY),
            };
            total += -lambda - f.gap(i, x[i - 1]).ln();
        }
        Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
    }

    /// Density `c_F` of the copula of the maximum-entropy order statistics.
    pub fn c_f_density(&self, u: &[f64]) -> Result<f64> {
        Ok(self.ln_c_f(u)?.exp())
    }

    /// `H(C_F) = d - 1 - J(δ^F)`.
    pub fn c_f_entropy_closed(&self) -> Result<f64> {
        self.require_f0()?;
        let j = self.delta.j_functional();
        Ok(if j.is_finite() { self.d() as f64 - 1.0 - j } else { f64::NEG_INFINITY })
    }

    /// Density of the symmetrization `S_F(C)` of an order-statistics copula
    /// with density `c`:
    /// `(1/d!) c(δ_(1)(u_(1)), …, δ_(d)(u_(d))) Π δ_(i)'(u_(i))`.
    pub fn symmetrize_density(&self, c: &dyn Fn(&[f64]) -> f64, u: &[f64]) -> Result<f64> {
        self.require_f0()?;
        let d = self.d();
        if u.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: u.len() });
        }
        let mut v = u.to_vec();
        v.sort_by(f64::total_cmp);
        let mut jac = 1.0;
        let mut mapped = Vec::with_capacity(d);
        for (j, &t) in v.iter().enumerate() {
            jac *= self.delta.derivative(j + 1, t);
            mapped.push(self.delta.eval(j + 1, t));
        }
        if jac == 0.0 {
            return Ok(0.0);
        }
        Ok(c(&mapped) * jac / (ln_factorial(d as u64)).exp())
    }

    /// Density of `S_F^{-1}(C)` for a symmetric copula with density `c`:
    /// `d! c(δ_(1)^{-1}(u_1), …) / Π δ_(i)' ∘ δ_(i)^{-1}(u_i)` on `T^F`.
    pub fn unsymmetrize_density(&self, c: &dyn Fn(&[f64]) -> f64, u: &[f64]) -> Result<Unsymmetrized> {
        let f = self.require_f0()?;
        let d = self.d();
        if u.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: u.len() });
        }
        let x: Vec<f64> = u.iter().enumerate().map(|(j, &p)| f.margin(j + 1).quantile(p)).collect();
        if x.windows(2).any(|w| w[0] > w[1]) {
            return Ok(Unsymmetrized::Value(0.0));
        }
        let w: Vec<f64> = (1..=d).map(|i| self.delta.inverse(i, u[i - 1])).collect();
        let jac: f64 = w.iter().enumerate().map(|(j, &t)| self.delta.derivative(j + 1, t)).product();
        if jac <= 0.0 {
            return Ok(Unsymmetrized::Value(0.0));
        }
        if jac < f64::EPSILON {
            return Ok(Unsymmetrized::UnstableSupport);
        }
        Ok(Unsymmetrized::Value(ln_factorial(d as u64).exp() * c(&w) / jac))
    }

    /// `n` exchangeable points with density `c_δ`: order statistics are drawn
    /// from the hazard chain and then randomly permuted.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if !self.is_d0 {
            return Err(Error::NotAbsolutelyContinuous);
        }
        sample_rows(n, seed, |rng| {
            let mut row = match &self.route {
                Route::Direct(chain) => chain.draw(rng)?,
                Route::Transported { chain, average, .. } => chain.draw(rng)?.into_iter().map(|x| average.cdf(x)).collect(),
            };
            row.shuffle(rng);
            Ok(row)
        })
    }
}

/// `H(C_δ) = -J(δ) + log d! + (d - 1) + Σ H(δ_(i))`, `-∞` when `J(δ) = +∞`.
pub fn copula_entropy_closed(delta: &Multidiagonal) -> f64 {
    let d = delta.d();
    let j = delta.j_functional();
    if !j.is_finite() {
        return f64::NEG_INFINITY;
    }
    let h: f64 = (1..=d).map(|i| delta.component_entropy(i)).sum();
    if h == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    -j + ln_factorial(d as u64) + (d as f64 - 1.0) + h
}
