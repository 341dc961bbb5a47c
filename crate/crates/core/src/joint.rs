//! The maximum-entropy density `f_F` of order statistics with marginals `F`.
//!
//! On `L^F` the density factorizes along the chain
//! `f_F(x) = f_1(x_1) Π_{i≥2} ℓ_i(x_i) exp(-Λ_i(x_{i-1}, x_i))`, so
//! `X_1 ~ F_1` and, given `X_{i-1} = s`, `X_i` has survival function
//! `exp(-Λ_i(s, ·))`. Sampling inverts these survival functions.

use std::fmt;

use serde::Serialize;

use crate::hazard::{sample_rows, HazardChain};
use crate::marginals::{check_stochastic_order, j_functional, sigma_measure, MarginalVector, OrderReport, SIGMA_TOL};
use crate::{Error, Result};

/// Why `F` admits no maximum-entropy density of finite entropy, if it does.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Degeneracy {
    Ok,
    /// `H(F_index) = -∞`.
    MarginalEntropyMinusInf { index: usize },
    /// `J(F) = +∞`; `f_F` is still a density when `in_f0` holds.
    JInfinite { in_f0: bool },
    NotF0,
}

impl Degeneracy {
    pub fn is_ok(&self) -> bool {
        matches!(self, Degeneracy::Ok)
    }

    /// Whether `f_F` is a probability density, possibly of entropy `-∞`.
    pub fn has_density(&self) -> bool {
        matches!(self, Degeneracy::Ok | Degeneracy::JInfinite { in_f0: true })
    }
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degeneracy::Ok => write!(f, "ok"),
            Degeneracy::MarginalEntropyMinusInf { index } => write!(f, "marginal_entropy_minus_inf (H(F_{index}) = -inf)"),
            Degeneracy::JInfinite { in_f0: true } => write!(f, "j_infinite (F in F_d^0, maximal entropy is -inf)"),
            Degeneracy::JInfinite { in_f0: false } => write!(f, "j_infinite (F not in F_d^0)"),
            Degeneracy::NotF0 => write!(f, "not_F0"),
        }
    }
}

/// Classifies `F` without building hazard tables.
///
/// Checks run in the order: singular marginal, marginal entropy, `J`,
/// measure of `Σ^F`. The first failure is reported.
pub fn detect_degenerate(f: &MarginalVector) -> Degeneracy {
    classify(f, &entropies(f), j_functional(f))
}

fn entropies(f: &MarginalVector) -> Vec<f64> {
    f.margins().iter().map(|m| m.entropy()).collect()
}

fn classify(f: &MarginalVector, h: &[f64], j: f64) -> Degeneracy {
    if !f.all_absolutely_continuous() {
        return Degeneracy::NotF0;
    }
    if let Some(k) = h.iter().position(|&v| v == f64::NEG_INFINITY) {
        return Degeneracy::MarginalEntropyMinusInf { index: k + 1 };
    }
    let sigma_ok = sigma_measure(f) <= SIGMA_TOL;
    if !j.is_finite() {
        return Degeneracy::JInfinite { in_f0: sigma_ok };
    }
    if !sigma_ok {
        return Degeneracy::NotF0;
    }
    Degeneracy::Ok
}

/// Hazard chain and diagnostics of one marginal vector.
#[derive(Clone, Debug)]
pub struct MaxEntModel {
    chain: HazardChain,
    verdict: Degeneracy,
    j: f64,
    marginal_entropies: Vec<f64>,
    allow_infinite_entropy: bool,
}

impl MaxEntModel {
    /// Fails only on a stochastic-order violation; degeneracy is recorded
    /// in [`MaxEntModel::verdict`].
    pub fn new(f: &MarginalVector) -> Result<Self> {
        if let OrderReport::Violation { index, witness, .. } = check_stochastic_order(f) {
            return Err(Error::StochasticOrder { index, witness });
        }
        let marginal_entropies = entropies(f);
        let j = j_functional(f);
        Ok(Self {
            chain: HazardChain::new(f),
            verdict: classify(f, &marginal_entropies, j),
            j,
            marginal_entropies,
            allow_infinite_entropy: false,
        })
    }

    /// Permits evaluation and sampling when `J(F) = +∞` but `F ∈ F_d^0`.
    pub fn allow_infinite_entropy(mut self, allow: bool) -> Self {
        self.allow_infinite_entropy = allow;
        self
    }

    pub fn vector(&self) -> &MarginalVector {
        self.chain.vector()
    }

    pub fn chain(&self) -> &HazardChain {
        &self.chain
    }

    pub fn d(&self) -> usize {
        self.chain.d()
    }

    pub fn verdict(&self) -> Degeneracy {
        self.verdict
    }

    /// `J(F)`, `+∞` when divergent.
    pub fn j_functional(&self) -> f64 {
        self.j
    }

    /// `H(F_i)` for each marginal.
    pub fn marginal_entropies(&self) -> &[f64] {
        &self.marginal_entropies
    }

    fn require_usable(&self) -> Result<()> {
        match self.verdict {
            Degeneracy::Ok => Ok(()),
            Degeneracy::JInfinite { in_f0: true } if self.allow_infinite_entropy => Ok(()),
            v => Err(Error::Degenerate(v)),
        }
    }

    /// `ℓ_i(t) = f_i(t) / (F_{i-1}(t) - F_i(t))`, `+∞` where the gap closes
    /// under positive density.
    pub fn hazard(&self, i: usize, t: f64) -> f64 {
        self.chain.hazard(i, t)
    }

    /// `ln f_F(x)`; `-∞` off `L^F`, including when some `x_{i-1}` lies on
    /// the boundary of `Ψ_i`.
    pub fn ln_density(&self, x: &[f64]) -> Result<f64> {
        self.require_usable()?;
        let d = self.d();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if x.windows(2).any(|w| w[0] > w[1]) {
            return Ok(f64::NEG_INFINITY);
        }
        let mut total = self.vector().margin(1).pdf(x[0]).ln();
        for i in 2..=d {
            if total == f64::NEG_INFINITY {
                break;
            }
            let (s, t) = (x[i - 2], x[i - 1]);
            let Ok(lambda) = self.chain.lambda(i, s, t) else {
                return Ok(f64::NEG_INFINITY);
            };
            total += self.chain.hazard(i, t).ln() - lambda;
        }
        Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
    }

    /// `f_F(x)`.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.ln_density(x)?.exp())
    }

    /// `H(F_F) = d - 1 + Σ H(F_i) - J(F)`, `-∞` when a marginal entropy is
    /// `-∞` or `J(F) = +∞`.
    pub fn entropy_closed(&self) -> f64 {
        let h: f64 = self.marginal_entropies.iter().sum();
        if h == f64::NEG_INFINITY || !self.j.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.d() as f64 - 1.0 + h - self.j
    }

    /// `n` rows with density `f_F`, each sorted ascending; deterministic
    /// in `(n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.require_usable()?;
        sample_rows(n, seed, |rng| self.chain.draw(rng))
    }
}

/// `H(F_F)` by the closed form.
pub fn joint_entropy_closed(f: &MarginalVector) -> Result<f64> {
    Ok(MaxEntModel::new(f)?.entropy_closed())
}
