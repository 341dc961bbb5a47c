//! Multidiagonals: d-tuples of CDFs on `[0, 1]` that arise as the marginal
//! laws of the order statistics of a copula.
//!
//! A multidiagonal is stored as a [`MarginalVector`] whose supports lie in
//! `[0, 1]`. When it is induced by a marginal vector `F`, component `i` is
//! the lazy composition `F_i ∘ G^{-1}` with `G` the average CDF, and the
//! source vector is kept so that hazards can be evaluated on the original
//! scale.

use std::sync::Arc;

use serde::Serialize;

use crate::marginals::{average_cdf, check_stochastic_order, generalized_inverse, j_functional, psi_pair, sigma_measure, IntervalSet, MarginalCdf, MarginalVector, OrderReport, EQ_TOL, SIGMA_TOL};
use crate::{Error, Result};

/// Tolerance of the sum identity `Σ δ_(i)(s) = d s`.
pub const SUM_TOL: f64 = 1e-9;
/// Grid size of the sum identity check.
pub const SUM_GRID: usize = 1024;
const LIPSCHITZ_GRID: usize = 4096;
const LIPSCHITZ_SLACK: f64 = 1e-6;
const EXPORT_KNOTS: usize = 4096;

/// The marginal vector a multidiagonal was derived from, with its average CDF.
#[derive(Clone, Debug)]
pub struct Source {
    pub marginals: MarginalVector,
    pub average: Arc<MarginalCdf>,
}

#[derive(Clone, Debug)]
pub struct Multidiagonal {
    components: MarginalVector,
    psi: Vec<IntervalSet>,
    source: Option<Source>,
}

/// The first failed condition of [`Multidiagonal::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum MultidiagonalViolation {
    /// Component `index` is not a CDF on `[0, 1]`.
    NotCdf { index: usize, witness: f64 },
    /// `δ_(index-1) < δ_(index)` at the witness.
    Order { index: usize, witness: f64 },
    /// `|Σ δ_(i)(s) - d s|` exceeds the tolerance at the witness.
    Sum { witness: f64, residual: f64 },
    /// Component `index` is not d-Lipschitz near the witness.
    Lipschitz { index: usize, witness: f64, slope: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct MultidiagonalReport {
    pub is_d: bool,
    pub is_d0: bool,
    /// Largest `|Σ δ_(i)(s) - d s|` on the check grid.
    pub sum_residual: f64,
    /// Largest difference quotient over all components.
    pub max_slope: f64,
    /// Lebesgue measure of `Σ^δ`.
    pub sigma_measure: f64,
    pub violation: Option<MultidiagonalViolation>,
}

impl Multidiagonal {
    /// `δ^F = F ∘ G^{-1}` with `G` the average of the marginals.
    pub fn from_marginals(f: &MarginalVector) -> Self {
        let average = Arc::new(average_cdf(f));
        let components = f
            .margins()
            .iter()
            .map(|m| MarginalCdf::Transported {
                outer: Box::new(m.clone()),
                scale: Arc::clone(&average),
            })
            .collect();
        let components = MarginalVector::new(components).expect("components of a valid vector are valid");
        Self {
            psi: unit_psi(&components),
            components,
            source: Some(Source {
                marginals: f.clone(),
                average,
            }),
        }
    }

    /// Multidiagonal of the independence copula: the CDFs of the order
    /// statistics of `d` iid uniforms.
    pub fn iid_uniform(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::EmptyVector);
        }
        let n = d as u32;
        Self::from_components((1..=n).map(|k| MarginalCdf::uniform_order_statistic(n, k)).collect())
    }

    /// A multidiagonal given directly by its components. Only the supports
    /// are checked here; the defining conditions are reported by
    /// [`Multidiagonal::validate`].
    pub fn from_components(components: Vec<MarginalCdf>) -> Result<Self> {
        let components = MarginalVector::new(components)?;
        for (j, m) in components.margins().iter().enumerate() {
            let (lo, hi) = (m.zero_edge(), m.one_edge());
            if lo < -EQ_TOL || hi > 1.0 + EQ_TOL {
                return Err(Error::InvalidMarginal(format!("component {} has support ({lo}, {hi}) outside [0, 1]", j + 1)));
            }
        }
        Ok(Self {
            psi: unit_psi(&components),
            components,
            source: None,
        })
    }

    /// Parses the marginal file schema, read as components on `[0, 1]`.
    pub fn from_json(text: &str) -> Result<Self> {
        let v = MarginalVector::from_json(text)?;
        Self::from_components(v.margins().to_vec())
    }

    /// Serializes to the marginal file schema. Derived components are
    /// exported as piecewise-linear tables with `EXPORT_KNOTS` segments.
    pub fn to_json(&self) -> String {
        let margins = self
            .components
            .margins()
            .iter()
            .map(|m| match m {
                MarginalCdf::Transported { .. } | MarginalCdf::Mixture(_) => {
                    let knots = (0..=EXPORT_KNOTS)
                        .map(|j| {
                            let u = j as f64 / EXPORT_KNOTS as f64;
                            (u, m.cdf(u))
                        })
                        .collect();
                    MarginalCdf::piecewise_linear(knots)
                }
                other => other.clone(),
            })
            .collect();
        MarginalVector::new(margins).expect("exported components are valid").to_json()
    }

    pub fn d(&self) -> usize {
        self.components.d()
    }

    pub fn components(&self) -> &MarginalVector {
        &self.components
    }

    /// `δ_(i)`, 1-based.
    pub fn component(&self, i: usize) -> &MarginalCdf {
        self.components.margin(i)
    }

    /// `Ψ_i^δ` for `1 ≤ i ≤ d+1`, with `Ψ_1 = (0, d_1)` and `Ψ_{d+1} = (g_{d+1}, 1)`.
    pub fn psi(&self, i: usize) -> &IntervalSet {
        &self.psi[i - 1]
    }

    pub fn source(&self) -> Option<&Source> {
        self.source.as_ref()
    }

    /// `δ_(i)(u)`.
    pub fn eval(&self, i: usize, u: f64) -> f64 {
        self.component(i).cdf(u)
    }

    /// `δ_(i)'(u)`.
    pub fn derivative(&self, i: usize, u: f64) -> f64 {
        self.component(i).pdf(u)
    }

    /// `δ_(i)^{-1}(p)`; for a derived multidiagonal this is `G ∘ F_i^{-1}`.
    pub fn inverse(&self, i: usize, p: f64) -> f64 {
        self.component(i).quantile(p)
    }

    /// `δ_(i)^{-1}(p)` by bisection on `δ_(i)` alone.
    pub fn inverse_by_search(&self, i: usize, p: f64) -> f64 {
        let c = self.component(i);
        generalized_inverse(|u| c.cdf(u), p, (0.0, 1.0))
    }

    /// `H(δ_(i))`.
    pub fn component_entropy(&self, i: usize) -> f64 {
        self.component(i).entropy()
    }

    /// `J(δ) = Σ_{i=2}^d ∫ δ_(i)' |log(δ_(i-1) - δ_(i))|`, `+∞` when divergent.
    pub fn j_functional(&self) -> f64 {
        j_functional(&self.components)
    }

    /// Checks the defining conditions of a multidiagonal and membership in
    /// the absolutely continuous class.
    pub fn validate(&self) -> MultidiagonalReport {
        let d = self.d();
        let mut violation = None;

        for i in 1..=d {
            let c = self.component(i);
            let (at0, at1) = (c.cdf(0.0), c.cdf(1.0));
            if at0.abs() > EQ_TOL {
                violation.get_or_insert(MultidiagonalViolation::NotCdf { index: i, witness: 0.0 });
            } else if (at1 - 1.0).abs() > EQ_TOL {
                violation.get_or_insert(MultidiagonalViolation::NotCdf { index: i, witness: 1.0 });
            }
        }

        if let OrderReport::Violation { index, witness, .. } = check_stochastic_order(&self.components) {
            violation.get_or_insert(MultidiagonalViolation::Order { index, witness });
        }

        let mut sum_residual: f64 = 0.0;
        let mut sum_witness = 0.0;
        for j in 0..SUM_GRID {
            let s = j as f64 / (SUM_GRID - 1) as f64;
            let total: f64 = (1..=d).map(|i| self.eval(i, s)).sum();
            let r = (total - d as f64 * s).abs();
            if r > sum_residual {
                sum_residual = r;
                sum_witness = s;
            }
        }
        if sum_residual > SUM_TOL {
            violation.get_or_insert(MultidiagonalViolation::Sum {
                witness: sum_witness,
                residual: sum_residual,
            });
        }

        let mut max_slope: f64 = 0.0;
        let h = 1.0 / LIPSCHITZ_GRID as f64;
        for i in 1..=d {
            let mut prev = self.eval(i, 0.0);
            for j in 1..=LIPSCHITZ_GRID {
                let s = j as f64 * h;
                let next = self.eval(i, s);
                let slope = (next - prev).abs() / h;
                if slope > max_slope {
                    max_slope = slope;
                }
                if slope > d as f64 + LIPSCHITZ_SLACK {
                    violation.get_or_insert(MultidiagonalViolation::Lipschitz { index: i, witness: s, slope });
                }
                prev = next;
            }
        }

        let is_d = violation.is_none();
        let sigma = sigma_measure(&self.components);
        MultidiagonalReport {
            is_d,
            is_d0: is_d && self.components.all_absolutely_continuous() && sigma <= SIGMA_TOL,
            sum_residual,
            max_slope,
            sigma_measure: sigma,
            violation,
        }
    }
}

fn unit_psi(components: &MarginalVector) -> Vec<IntervalSet> {
    let d = components.d();
    (1..=d + 1)
        .map(|i| {
            let upper = (i >= 2).then(|| components.margin(i - 1));
            let lower = (i <= d).then(|| components.margin(i));
            psi_pair(upper, lower, (0.0, 1.0))
        })
        .collect()
}
