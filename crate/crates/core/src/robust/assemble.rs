use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::dual::{lemma1_dual_block, theorem3_dual_block, RobustConstraintBlock};
use super::{is_structurally_zero, AdfPolicy, GadfPolicy, UncertainExpr};
use crate::control::{CostKind, CostSpec};
use crate::dynamics::{ConstraintSet, StackedDynamics};
use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::solver::{LinExpr, ProgramBuilder, ProgramDescription, VarId};
use crate::uncertainty::{ConditionalSet, SvcSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Adf,
    #[default]
    Gadf,
}

/// Inputs of one robust finite-horizon problem.
///
/// The uncertainty sets may have a larger dimension than the dynamics
/// horizon; coordinates beyond it simply never enter a constraint.
#[derive(Debug, Clone)]
pub struct RobustProblem<'a> {
    pub dynamics: &'a StackedDynamics,
    pub constraints: &'a ConstraintSet,
    pub eta_set: &'a SvcSet,
    pub xi_set: &'a ConditionalSet,
    pub x0: f64,
    /// Net forecast flow `p̂ − ê` per period.
    pub v_forecast: &'a [f64],
    pub cost: CostSpec,
    /// Second moment of `(ξ⁺, ξ⁻, η, 1)`, required for the expected cost.
    pub lifted_moments: Option<&'a DMatrix<f64>>,
    /// Relax the state floor with penalized slack.
    pub soft: bool,
}

/// Variable ids of the policy parameters. Gain entries exist only below the
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyVars {
    Adf {
        h: Vec<VarId>,
        m: Vec<Vec<Option<VarId>>>,
    },
    Gadf {
        h: Vec<VarId>,
        m_plus: Vec<Vec<Option<VarId>>>,
        m_minus: Vec<Vec<Option<VarId>>>,
        l: Vec<Vec<Option<VarId>>>,
    },
}

impl PolicyVars {
    pub fn offsets(&self) -> &[VarId] {
        match self {
            PolicyVars::Adf { h, .. } | PolicyVars::Gadf { h, .. } => h,
        }
    }
}

/// One scalar robust inequality `expr ≤ rhs` together with its dual blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustRow {
    pub name: String,
    pub expr: UncertainExpr,
    pub rhs: f64,
    pub slack: Option<VarId>,
    pub eta_block: Option<RobustConstraintBlock>,
    pub xi_block: Option<RobustConstraintBlock>,
}

#[derive(Debug, Clone)]
pub struct RobustProgram {
    pub program: ProgramDescription,
    pub kind: PolicyKind,
    pub policy: PolicyVars,
    /// `u_0 .. u_{h-1}`
    pub inputs: Vec<UncertainExpr>,
    /// `x_1 .. x_h`
    pub states: Vec<UncertainExpr>,
    pub rows: Vec<RobustRow>,
    pub slacks: Vec<VarId>,
    pub c_diag: Vec<f64>,
    pub d_diag: Vec<f64>,
}

fn gain_value(x: &[f64], g: &[Vec<Option<VarId>>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(g.len(), n, |t, j| g[t][j].map_or(0.0, |v| x[v]))
}

impl RobustProgram {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn uncertainty_dim(&self) -> usize {
        self.c_diag.len()
    }

    pub fn first_input(&self, x: &[f64]) -> f64 {
        x[self.policy.offsets()[0]]
    }

    /// The solved policy in generalized form (ADF solutions are mapped).
    pub fn gadf_policy(&self, x: &[f64]) -> GadfPolicy {
        let n = self.uncertainty_dim();
        match &self.policy {
            PolicyVars::Gadf { h, m_plus, m_minus, l } => GadfPolicy {
                m_plus: gain_value(x, m_plus, n),
                m_minus: gain_value(x, m_minus, n),
                l_gain: gain_value(x, l, n),
                h_offsets: DVector::from_iterator(h.len(), h.iter().map(|&v| x[v])),
            },
            PolicyVars::Adf { .. } => self
                .adf_policy(x)
                .expect("adf layout")
                .to_gadf(&self.c_diag, &self.d_diag),
        }
    }

    pub fn adf_policy(&self, x: &[f64]) -> Option<AdfPolicy> {
        match &self.policy {
            PolicyVars::Adf { h, m } => Some(AdfPolicy {
                m_gain: gain_value(x, m, self.uncertainty_dim()),
                h_offsets: DVector::from_iterator(h.len(), h.iter().map(|&v| x[v])),
            }),
            PolicyVars::Gadf { .. } => None,
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &RobustConstraintBlock> {
        self.rows.iter().flat_map(|r| r.eta_block.iter().chain(r.xi_block.iter()))
    }
}

fn gain_grid(b: &mut ProgramBuilder, prefix: &str, h: usize, n: usize) -> Vec<Vec<Option<VarId>>> {
    (0..h)
        .map(|t| {
            (0..n)
                .map(|j| (j < t).then(|| b.add_var(format!("{prefix}_{t}_{j}"), f64::NEG_INFINITY, f64::INFINITY)))
                .collect()
        })
        .collect()
}

fn check(problem: &RobustProblem) -> Result<(usize, usize)> {
    let h = problem.dynamics.horizon();
    ensure_len("constraint horizon", h, problem.constraints.horizon())?;
    ensure_len("net forecast", h, problem.v_forecast.len())?;
    ensure_finite("x0", problem.x0)?;
    for &v in problem.v_forecast {
        ensure_finite("net forecast", v)?;
    }
    let n = problem.xi_set.horizon();
    ensure_len("evapotranspiration set dimension", n, problem.eta_set.dim())?;
    if n < h {
        return Err(Error::Dimension {
            context: "uncertainty dimension below horizon",
            expected: h,
            got: n,
        });
    }
    problem.cost.validate()?;
    if problem.cost.kind == CostKind::Expected {
        match problem.lifted_moments {
            Some(m) if m.nrows() == 3 * n + 1 && m.ncols() == 3 * n + 1 => {}
            Some(m) => {
                return Err(Error::Dimension {
                    context: "lifted moment matrix",
                    expected: 3 * n + 1,
                    got: m.nrows(),
                })
            }
            None => return Err(Error::Validation("expected cost needs lifted moments".into())),
        }
    }
    Ok((h, n))
}

/// Adds `expr ≤ rhs` for every uncertainty realization.
fn add_robust_le(
    b: &mut ProgramBuilder,
    name: String,
    expr: UncertainExpr,
    rhs: f64,
    slack: Option<VarId>,
    eta_set: &SvcSet,
    xi_set: &ConditionalSet,
) -> RobustRow {
    let expr = expr.compact();
    let mut lhs = expr.nominal.clone();
    let eta_block = (!is_structurally_zero(&expr.eta)).then(|| {
        let blk = lemma1_dual_block(b, &format!("{name}_eta"), &expr.eta, &eta_set.model);
        lhs += &blk.value;
        blk
    });
    let xi_block = (!(is_structurally_zero(&expr.xi_plus) && is_structurally_zero(&expr.xi_minus))).then(|| {
        let blk = theorem3_dual_block(b, &format!("{name}_xi"), &expr.xi_plus, &expr.xi_minus, &xi_set.inner.model);
        lhs += &blk.value;
        blk
    });
    if let Some(s) = slack {
        lhs.add_term(s, -1.0);
    }
    b.add_le(name.clone(), lhs, rhs);
    RobustRow {
        name,
        expr,
        rhs,
        slack,
        eta_block,
        xi_block,
    }
}

fn assemble(problem: &RobustProblem, kind: PolicyKind) -> Result<RobustProgram> {
    let (h, n) = check(problem)?;
    let (c_diag, d_diag) = problem.xi_set.scaling();
    let mut b = ProgramBuilder::new();
    let offsets = b.add_vars("h", h, f64::NEG_INFINITY, f64::INFINITY);

    let disturbances: Vec<UncertainExpr> = (0..n)
        .map(|j| UncertainExpr::disturbance(n, j, c_diag[j], d_diag[j]))
        .collect();

    let mut inputs: Vec<UncertainExpr> = Vec::with_capacity(h);
    let policy = match kind {
        PolicyKind::Gadf => {
            let m_plus = gain_grid(&mut b, "mp", h, n);
            let m_minus = gain_grid(&mut b, "mm", h, n);
            let l = gain_grid(&mut b, "l", h, n);
            for t in 0..h {
                let mut u = UncertainExpr::zeros(n);
                u.nominal = LinExpr::var(offsets[t]);
                for j in 0..t {
                    u.xi_plus[j] = LinExpr::var(m_plus[t][j].expect("below diagonal"));
                    u.xi_minus[j] = LinExpr::var(m_minus[t][j].expect("below diagonal"));
                    u.eta[j] = LinExpr::var(l[t][j].expect("below diagonal"));
                }
                inputs.push(u);
            }
            PolicyVars::Gadf {
                h: offsets,
                m_plus,
                m_minus,
                l,
            }
        }
        PolicyKind::Adf => {
            let m = gain_grid(&mut b, "m", h, n);
            for t in 0..h {
                let mut u = UncertainExpr::zeros(n);
                u.nominal = LinExpr::var(offsets[t]);
                for j in 0..t {
                    let v = m[t][j].expect("below diagonal");
                    u.xi_plus[j] = LinExpr::term(v, c_diag[j]);
                    u.xi_minus[j] = LinExpr::term(v, -d_diag[j]);
                    u.eta[j] = LinExpr::term(v, -1.0);
                }
                inputs.push(u);
            }
            PolicyVars::Adf { h: offsets, m }
        }
    };

    let dynm = problem.dynamics;
    let states: Vec<UncertainExpr> = (1..=h)
        .map(|t| {
            let mut x = UncertainExpr::zeros(n);
            x.nominal = LinExpr::constant(dynm.a_stack[(t, 0)] * problem.x0);
            for s in 0..t {
                let g = dynm.gain(t, s);
                x.nominal.add_scaled(&LinExpr::constant(problem.v_forecast[s]), g);
                x.add_scaled(&inputs[s], g);
                x.add_scaled(&disturbances[s], g);
            }
            x.compact()
        })
        .collect();

    let cons = problem.constraints;
    let mut rows = Vec::new();
    let mut slacks = Vec::new();
    for (t, x) in states.iter().enumerate() {
        let slack = problem.soft.then(|| {
            let s = b.add_var(format!("slack_{}", t + 1), 0.0, f64::INFINITY);
            slacks.push(s);
            s
        });
        rows.push(add_robust_le(
            &mut b,
            format!("x{}_min", t + 1),
            x.negated(),
            -cons.x_min,
            slack,
            problem.eta_set,
            problem.xi_set,
        ));
    }
    for (t, u) in inputs.iter().enumerate() {
        rows.push(add_robust_le(
            &mut b,
            format!("u{t}_max"),
            u.clone(),
            cons.u_max,
            None,
            problem.eta_set,
            problem.xi_set,
        ));
        rows.push(add_robust_le(
            &mut b,
            format!("u{t}_min"),
            u.negated(),
            0.0,
            None,
            problem.eta_set,
            problem.xi_set,
        ));
    }

    let cost = &problem.cost;
    match cost.kind {
        CostKind::Nominal => {
            for u in &inputs {
                b.add_squared(&u.nominal, cost.stage_weight);
            }
            if cost.terminal_weight > 0.0 {
                b.add_squared(&states[h - 1].nominal, cost.terminal_weight);
            }
        }
        CostKind::Expected => {
            let s = problem.lifted_moments.expect("checked");
            for u in &inputs {
                b.add_quadratic_form(&u.lifted_coefficients(), &(s * cost.stage_weight));
            }
            if cost.terminal_weight > 0.0 {
                b.add_quadratic_form(&states[h - 1].lifted_coefficients(), &(s * cost.terminal_weight));
            }
        }
    }
    for &s in &slacks {
        b.add_linear_objective(&LinExpr::term(s, cost.slack_penalty));
    }

    Ok(RobustProgram {
        program: b.build(),
        kind,
        policy,
        inputs,
        states,
        rows,
        slacks,
        c_diag,
        d_diag,
    })
}

/// Robust program under the generalized decision rule on `(ξ⁺, ξ⁻, η)`.
pub fn assemble_gadf_program(problem: &RobustProblem) -> Result<RobustProgram> {
    assemble(problem, PolicyKind::Gadf)
}

/// Robust program under disturbance feedback on `w = Cξ⁺ − Dξ⁻ − η`.
pub fn assemble_adf_program(problem: &RobustProblem) -> Result<RobustProgram> {
    assemble(problem, PolicyKind::Adf)
}

/// Maps a point of an ADF program to the GADF program of the same problem:
/// `M⁺ = M C`, `M⁻ = −M D`, `L = −M`, with every other variable copied by name.
pub fn adf_to_gadf_point(adf: &RobustProgram, x_adf: &[f64], gadf: &RobustProgram) -> Result<Vec<f64>> {
    let (PolicyVars::Adf { m, .. }, PolicyVars::Gadf { m_plus, m_minus, l, .. }) = (&adf.policy, &gadf.policy) else {
        return Err(Error::Validation("expected an ADF and a GADF program".into()));
    };
    ensure_len("ADF point", adf.program.num_vars(), x_adf.len())?;
    let by_name: HashMap<&str, f64> = adf
        .program
        .names
        .iter()
        .map(String::as_str)
        .zip(x_adf.iter().copied())
        .collect();
    let mut x = vec![f64::NAN; gadf.program.num_vars()];
    for (i, name) in gadf.program.names.iter().enumerate() {
        if let Some(v) = by_name.get(name.as_str()) {
            x[i] = *v;
        }
    }
    for (t, row) in m.iter().enumerate() {
        for (j, id) in row.iter().enumerate() {
            if let Some(id) = id {
                let g = x_adf[*id];
                x[m_plus[t][j].expect("same pattern")] = g * adf.c_diag[j];
                x[m_minus[t][j].expect("same pattern")] = -g * adf.d_diag[j];
                x[l[t][j].expect("same pattern")] = -g;
            }
        }
    }
    if let Some(i) = x.iter().position(|v| v.is_nan()) {
        return Err(Error::Validation(format!(
            "no ADF counterpart for variable {}",
            gadf.program.names[i]
        )));
    }
    Ok(x)
}
