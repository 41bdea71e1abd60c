use serde::{Deserialize, Serialize};

use crate::solver::{LinExpr, ProgramBuilder, VarId};
use crate::svc::SvcModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// `max aᵀη` over an SVC set.
    Lemma1,
    /// `max aᵀξ⁺ + bᵀξ⁻` over the lifted conditional set.
    Theorem3,
}

/// Dual variables and the value expression bounding one worst case.
///
/// Each support vector carries `d_i = μ_i − λ_i` with `|d_i| ≤ k α_i`, which
/// recovers `λ_i = (k α_i − d_i)/2` and `μ_i = (k α_i + d_i)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustConstraintBlock {
    pub kind: BlockKind,
    pub d: Vec<Vec<VarId>>,
    pub k: VarId,
    pub r: Vec<VarId>,
    pub s: Vec<VarId>,
    pub alphas: Vec<f64>,
    /// Upper bound on the worst case; tight at the minimum over the duals.
    pub value: LinExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub lambda: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub k: f64,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
}

impl DualCertificate {
    /// Largest `|λ_i + μ_i − k α_i|` over all entries.
    pub fn balance_residual(&self, alphas: &[f64]) -> f64 {
        self.lambda
            .iter()
            .zip(&self.mu)
            .zip(alphas)
            .flat_map(|((l, m), a)| l.iter().zip(m).map(move |(x, y)| (x + y - self.k * a).abs()))
            .fold(0.0, f64::max)
    }
}

impl RobustConstraintBlock {
    pub fn certificate(&self, x: &[f64]) -> DualCertificate {
        let k = x[self.k].max(0.0);
        let mut lambda = Vec::with_capacity(self.d.len());
        let mut mu = Vec::with_capacity(self.d.len());
        for (di, &a) in self.d.iter().zip(&self.alphas) {
            let cap = k * a;
            let (l, m): (Vec<f64>, Vec<f64>) = di
                .iter()
                .map(|&v| {
                    let d = x[v].clamp(-cap, cap);
                    ((cap - d) / 2.0, (cap + d) / 2.0)
                })
                .unzip();
            lambda.push(l);
            mu.push(m);
        }
        DualCertificate {
            lambda,
            mu,
            k,
            r: self.r.iter().map(|&v| x[v].max(0.0)).collect(),
            s: self.s.iter().map(|&v| x[v].max(0.0)).collect(),
        }
    }
}

/// Adds `d_i`, `k` with `|d_i| ≤ k α_i` and returns `(d, k, g)` where
/// `g = Σ_i Qᵀ d_i` as expressions and the value part `Σ_i d_iᵀ Q w_i + k θ`.
fn svc_dual_core(b: &mut ProgramBuilder, prefix: &str, model: &SvcModel) -> (Vec<Vec<VarId>>, VarId, Vec<LinExpr>, LinExpr) {
    let h = model.dim();
    let k = b.add_var(format!("{prefix}_k"), 0.0, f64::INFINITY);
    let mut g = vec![LinExpr::zero(); h];
    let mut value = LinExpr::term(k, model.theta);
    let mut d = Vec::with_capacity(model.num_sv());
    for (i, (a, wp)) in model.alphas.iter().zip(model.weighted_points()).enumerate() {
        let di = b.add_vars(&format!("{prefix}_d_{i}"), h, f64::NEG_INFINITY, f64::INFINITY);
        for (m, &v) in di.iter().enumerate() {
            b.add_le(format!("{prefix}_dhi_{i}_{m}"), LinExpr::sum([(v, 1.0), (k, -a)]), 0.0);
            b.add_le(format!("{prefix}_dlo_{i}_{m}"), LinExpr::sum([(v, -1.0), (k, -a)]), 0.0);
            value.add_term(v, wp[m]);
            for (t, gt) in g.iter_mut().enumerate() {
                gt.add_term(v, model.q_matrix[(m, t)]);
            }
        }
        d.push(di);
    }
    (d, k, g, value)
}

/// Dual of `max {aᵀη : Σ_i α_i ‖Q(η − η_i)‖₁ ≤ θ}`. The block's `value`
/// expression, minimized over the added variables, equals the worst case.
pub fn lemma1_dual_block(
    b: &mut ProgramBuilder,
    prefix: &str,
    a: &[LinExpr],
    model: &SvcModel,
) -> RobustConstraintBlock {
    assert_eq!(a.len(), model.dim(), "coefficient dimension");
    let (d, k, g, value) = svc_dual_core(b, prefix, model);
    for (t, (gt, at)) in g.into_iter().zip(a).enumerate() {
        b.add_eq(format!("{prefix}_stat_{t}"), gt - at.clone(), 0.0);
    }
    RobustConstraintBlock {
        kind: BlockKind::Lemma1,
        d,
        k,
        r: Vec::new(),
        s: Vec::new(),
        alphas: model.alphas.clone(),
        value,
    }
}

/// Dual of `max {aᵀξ⁺ + bᵀξ⁻ : ξ⁺ − ξ⁻ ∈ D_ξ̄, 0 ≤ ξ⁺, ξ⁻ ≤ 1}`.
pub fn theorem3_dual_block(
    b: &mut ProgramBuilder,
    prefix: &str,
    a: &[LinExpr],
    bcoef: &[LinExpr],
    model: &SvcModel,
) -> RobustConstraintBlock {
    let h = model.dim();
    assert_eq!(a.len(), h, "coefficient dimension");
    assert_eq!(bcoef.len(), h, "coefficient dimension");
    let (d, k, g, mut value) = svc_dual_core(b, prefix, model);
    let r = b.add_vars(&format!("{prefix}_r"), h, 0.0, f64::INFINITY);
    let s = b.add_vars(&format!("{prefix}_s"), h, 0.0, f64::INFINITY);
    for t in 0..h {
        // g + r ≥ a  and  −g + s ≥ b
        b.add_ge(
            format!("{prefix}_plus_{t}"),
            g[t].clone() + LinExpr::var(r[t]) - a[t].clone(),
            0.0,
        );
        b.add_ge(
            format!("{prefix}_minus_{t}"),
            -g[t].clone() + LinExpr::var(s[t]) - bcoef[t].clone(),
            0.0,
        );
        value.add_term(r[t], 1.0);
        value.add_term(s[t], 1.0);
    }
    RobustConstraintBlock {
        kind: BlockKind::Theorem3,
        d,
        k,
        r,
        s,
        alphas: model.alphas.clone(),
        value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve;
    use nalgebra::{DMatrix, DVector};

    fn worst(model: &SvcModel, a: &[f64], b: Option<&[f64]>) -> (f64, DualCertificate) {
        let mut pb = ProgramBuilder::new();
        let ac: Vec<LinExpr> = a.iter().map(|v| LinExpr::constant(*v)).collect();
        let block = match b {
            None => lemma1_dual_block(&mut pb, "l1", &ac, model),
            Some(b) => {
                let bc: Vec<LinExpr> = b.iter().map(|v| LinExpr::constant(*v)).collect();
                theorem3_dual_block(&mut pb, "t3", &ac, &bc, model)
            }
        };
        pb.add_linear_objective(&block.value);
        let sol = solve(&pb.build()).unwrap();
        assert!(sol.is_optimal(), "{:?}", sol.status);
        (sol.objective, block.certificate(&sol.x))
    }

    fn interval() -> SvcModel {
        SvcModel::from_parts(vec![DVector::zeros(1)], vec![1.0], DMatrix::identity(1, 1), 1.0).unwrap()
    }

    #[test]
    fn lemma1_interval() {
        let (v, cert) = worst(&interval(), &[2.0], None);
        assert!((v - 2.0).abs() < 1e-7);
        assert!(cert.balance_residual(&[1.0]) < 1e-12);
        let (v, cert) = worst(&interval(), &[0.0], None);
        assert!(v.abs() < 1e-8);
        assert!(cert.k < 1e-6);
    }

    #[test]
    fn theorem3_box_dominant() {
        let m = SvcModel::from_parts(vec![DVector::zeros(2)], vec![1.0], DMatrix::identity(2, 2), 10.0).unwrap();
        let (a, b) = ([1.5, -2.0], [-0.5, 3.0]);
        let (v, _) = worst(&m, &a, Some(&b));
        let expect: f64 = a.iter().chain(&b).map(|x| x.max(0.0)).sum();
        assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
        let (v, _) = worst(&m, &[0.0, 0.0], Some(&[0.0, 0.0]));
        assert!(v.abs() < 1e-8);
    }
}
