//! Affine disturbance feedback policies and the robust counterparts of
//! constraints over the learned uncertainty sets.

mod assemble;
mod dual;

pub use assemble::{
    adf_to_gadf_point, assemble_adf_program, assemble_gadf_program, PolicyKind, PolicyVars, RobustProblem,
    RobustProgram, RobustRow,
};
pub use dual::{
    lemma1_dual_block, theorem3_dual_block, BlockKind, DualCertificate, RobustConstraintBlock,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::solver::LinExpr;

/// A scalar that is affine in the lifted uncertainty `(ξ⁺, ξ⁻, η)` with
/// coefficients affine in the decision variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UncertainExpr {
    pub nominal: LinExpr,
    pub xi_plus: Vec<LinExpr>,
    pub xi_minus: Vec<LinExpr>,
    pub eta: Vec<LinExpr>,
}

impl UncertainExpr {
    pub fn zeros(n: usize) -> Self {
        Self {
            nominal: LinExpr::zero(),
            xi_plus: vec![LinExpr::zero(); n],
            xi_minus: vec![LinExpr::zero(); n],
            eta: vec![LinExpr::zero(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    /// The disturbance `w_j = c_j ξ⁺_j − d_j ξ⁻_j − η_j`.
    pub fn disturbance(n: usize, j: usize, c_j: f64, d_j: f64) -> Self {
        let mut e = Self::zeros(n);
        e.xi_plus[j] = LinExpr::constant(c_j);
        e.xi_minus[j] = LinExpr::constant(-d_j);
        e.eta[j] = LinExpr::constant(-1.0);
        e
    }

    pub fn add_scaled(&mut self, other: &UncertainExpr, s: f64) {
        if s == 0.0 {
            return;
        }
        self.nominal.add_scaled(&other.nominal, s);
        for (a, b) in [
            (&mut self.xi_plus, &other.xi_plus),
            (&mut self.xi_minus, &other.xi_minus),
            (&mut self.eta, &other.eta),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                x.add_scaled(y, s);
            }
        }
    }

    pub fn compact(self) -> Self {
        let c = |v: Vec<LinExpr>| v.into_iter().map(LinExpr::compact).collect();
        Self {
            nominal: self.nominal.compact(),
            xi_plus: c(self.xi_plus),
            xi_minus: c(self.xi_minus),
            eta: c(self.eta),
        }
    }

    pub fn negated(&self) -> Self {
        let mut e = Self::zeros(self.dim());
        e.add_scaled(self, -1.0);
        e
    }

    /// Value at decision vector `x` and uncertainty realization.
    pub fn eval(&self, x: &[f64], xi_plus: &[f64], xi_minus: &[f64], eta: &[f64]) -> f64 {
        let dot = |c: &[LinExpr], u: &[f64]| c.iter().zip(u).map(|(e, v)| e.eval(x) * v).sum::<f64>();
        self.nominal.eval(x) + dot(&self.xi_plus, xi_plus) + dot(&self.xi_minus, xi_minus) + dot(&self.eta, eta)
    }

    /// Coefficients of `z = (ξ⁺, ξ⁻, η, 1)` in order.
    pub fn lifted_coefficients(&self) -> Vec<LinExpr> {
        let mut v = self.xi_plus.clone();
        v.extend(self.xi_minus.iter().cloned());
        v.extend(self.eta.iter().cloned());
        v.push(self.nominal.clone());
        v
    }
}

pub(crate) fn is_structurally_zero(c: &[LinExpr]) -> bool {
    c.iter().all(|e| e.constant == 0.0 && e.terms.iter().all(|(_, v)| *v == 0.0))
}

/// `u = M w + h` with strictly lower-triangular `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfPolicy {
    /// `h × n`; entry `(t, j)` is zero for `j ≥ t`.
    pub m_gain: DMatrix<f64>,
    pub h_offsets: DVector<f64>,
}

impl AdfPolicy {
    pub fn inputs(&self, w: &[f64]) -> Vec<f64> {
        let h = self.h_offsets.len();
        (0..h)
            .map(|t| self.h_offsets[t] + (0..t.min(w.len())).map(|j| self.m_gain[(t, j)] * w[j]).sum::<f64>())
            .collect()
    }

    /// The equal-valued generalized policy `M⁺ = M C`, `M⁻ = −M D`, `L = −M`.
    pub fn to_gadf(&self, c_diag: &[f64], d_diag: &[f64]) -> GadfPolicy {
        let (h, n) = self.m_gain.shape();
        GadfPolicy {
            m_plus: DMatrix::from_fn(h, n, |t, j| self.m_gain[(t, j)] * c_diag[j]),
            m_minus: DMatrix::from_fn(h, n, |t, j| -self.m_gain[(t, j)] * d_diag[j]),
            l_gain: -self.m_gain.clone(),
            h_offsets: self.h_offsets.clone(),
        }
    }
}

/// `u_t = h_t + Σ_{j<t} (M⁺_{tj} ξ⁺_j + M⁻_{tj} ξ⁻_j + L_{tj} η_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadfPolicy {
    pub m_plus: DMatrix<f64>,
    pub m_minus: DMatrix<f64>,
    pub l_gain: DMatrix<f64>,
    pub h_offsets: DVector<f64>,
}

impl GadfPolicy {
    pub fn horizon(&self) -> usize {
        self.h_offsets.len()
    }

    pub fn inputs(&self, xi_plus: &[f64], xi_minus: &[f64], eta: &[f64]) -> Vec<f64> {
        (0..self.horizon())
            .map(|t| {
                self.h_offsets[t]
                    + (0..t)
                        .map(|j| {
                            self.m_plus[(t, j)] * xi_plus[j]
                                + self.m_minus[(t, j)] * xi_minus[j]
                                + self.l_gain[(t, j)] * eta[j]
                        })
                        .sum::<f64>()
            })
            .collect()
    }

    /// True when every gain on a current or future disturbance is exactly zero.
    pub fn is_causal(&self) -> bool {
        let (h, n) = self.m_plus.shape();
        (0..h).all(|t| {
            (t..n).all(|j| self.m_plus[(t, j)] == 0.0 && self.m_minus[(t, j)] == 0.0 && self.l_gain[(t, j)] == 0.0)
        })
    }
}
