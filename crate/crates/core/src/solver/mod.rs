//! Backend-agnostic description of linear / convex quadratic programs and the
//! reference interior-point backend.
//!
//! Programs have the form
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x + c
//! subject to  A_eq x = b_eq
//!             A_in x <= b_in
//!             lower <= x <= upper
//! ```
//!
//! with `P` symmetric positive semidefinite, stored as its upper triangle.

mod builder;
pub mod lp_format;

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use builder::{LinExpr, ProgramBuilder, VarId};

use crate::error::{Error, Result};

/// A sparse linear row `Σ coef_i x_i (op) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub name: String,
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|(i, c)| c * x[*i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramDescription {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equalities: Vec<LinearRow>,
    /// Rows of the form `a x <= rhs`.
    pub inequalities: Vec<LinearRow>,
    /// Upper-triangular entries `(i, j, P_ij)` with `i <= j`, no duplicates.
    pub quadratic: Vec<(usize, usize, f64)>,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl ProgramDescription {
    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.equalities.len() + self.inequalities.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for (i, q) in self.linear.iter().enumerate() {
            v += q * x[i];
        }
        for &(i, j, p) in &self.quadratic {
            if i == j {
                v += 0.5 * p * x[i] * x[i];
            } else {
                v += p * x[i] * x[j];
            }
        }
        v
    }

    /// Largest constraint or bound violation at `x`, each scaled by `1 + |rhs|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.equalities {
            worst = worst.max((r.eval(x) - r.rhs).abs() / (1.0 + r.rhs.abs()));
        }
        for r in &self.inequalities {
            worst = worst.max((r.eval(x) - r.rhs).max(0.0) / (1.0 + r.rhs.abs()));
        }
        for i in 0..self.num_vars() {
            if self.lower[i].is_finite() {
                worst = worst.max((self.lower[i] - x[i]).max(0.0) / (1.0 + self.lower[i].abs()));
            }
            if self.upper[i].is_finite() {
                worst = worst.max((x[i] - self.upper[i]).max(0.0) / (1.0 + self.upper[i].abs()));
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.linear.len() != n {
            return Err(Error::Validation("program vectors disagree on variable count".into()));
        }
        for i in 0..n {
            if self.lower[i] > self.upper[i] || self.lower[i].is_nan() || self.upper[i].is_nan() {
                return Err(Error::Validation(format!(
                    "variable {} has bounds [{}, {}]",
                    self.names[i], self.lower[i], self.upper[i]
                )));
            }
        }
        for r in self.equalities.iter().chain(&self.inequalities) {
            if !r.rhs.is_finite() || r.coefs.iter().any(|(i, c)| *i >= n || !c.is_finite()) {
                return Err(Error::Validation(format!("row {} is malformed", r.name)));
            }
        }
        if self.quadratic.iter().any(|&(i, j, p)| i > j || j >= n || !p.is_finite()) {
            return Err(Error::Validation("quadratic term must be upper-triangular and finite".into()));
        }
        self.check_psd()
    }

    /// Eigenvalue floor of `P` restricted to the variables it touches.
    fn check_psd(&self) -> Result<()> {
        if self.quadratic.is_empty() {
            return Ok(());
        }
        let mut support: Vec<usize> = self.quadratic.iter().flat_map(|&(i, j, _)| [i, j]).collect();
        support.sort_unstable();
        support.dedup();
        let pos = |v: usize| support.binary_search(&v).expect("in support");
        let m = support.len();
        let mut dense = DMatrix::<f64>::zeros(m, m);
        for &(i, j, p) in &self.quadratic {
            let (a, b) = (pos(i), pos(j));
            dense[(a, b)] += p;
            if a != b {
                dense[(b, a)] += p;
            }
        }
        let scale = dense.amax().max(1.0);
        let eig = SymmetricEigen::new(dense);
        let min = eig.eigenvalues.min();
        if min < -1e-9 * scale {
            return Err(Error::Validation(format!(
                "quadratic term is not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub solve_time: f64,
    pub iterations: u32,
    /// Relative primal residual, see [`ProgramDescription::max_violation`].
    pub primal_residual: f64,
    pub detail: String,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Feasibility and optimality tolerance handed to the backend.
    pub tolerance: f64,
    /// Largest relative primal residual accepted for an `Optimal` status.
    pub residual_limit: f64,
    pub max_iter: u32,
    pub time_limit: f64,
    /// Re-solve with the detected active set held as equalities and keep the
    /// result when it is feasible and no worse.
    pub polish: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            residual_limit: 1e-7,
            max_iter: 200,
            time_limit: f64::INFINITY,
            polish: true,
        }
    }
}

impl SolverSettings {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

/// Anything that can solve a [`ProgramDescription`].
pub trait Backend {
    fn solve(&self, program: &ProgramDescription) -> Result<Solution>;
}

/// Sparse interior-point backend (Clarabel).
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint {
    pub settings: SolverSettings,
}

impl Backend for InteriorPoint {
    fn solve(&self, program: &ProgramDescription) -> Result<Solution> {
        solve_with(program, &self.settings)
    }
}

pub fn solve(program: &ProgramDescription) -> Result<Solution> {
    solve_with(program, &SolverSettings::default())
}

/// Solve with the reference backend. Malformed programs are rejected with an
/// error; every backend outcome (including failures) is reported via the
/// returned status.
pub fn solve_with(program: &ProgramDescription, settings: &SolverSettings) -> Result<Solution> {
    program.validate()?;
    let started = Instant::now();
    let n = program.num_vars();

    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut push_row = |coefs: &mut dyn Iterator<Item = (usize, f64)>, rhs: f64, b: &mut Vec<f64>| {
        let r = b.len();
        for (j, c) in coefs {
            if c != 0.0 {
                rows.push(r);
                cols.push(j);
                vals.push(c);
            }
        }
        b.push(rhs);
    };
    for r in &program.equalities {
        push_row(&mut r.coefs.iter().copied(), r.rhs, &mut b);
    }
    let n_eq = b.len();
    for r in &program.inequalities {
        push_row(&mut r.coefs.iter().copied(), r.rhs, &mut b);
    }
    for i in 0..n {
        if program.upper[i].is_finite() {
            push_row(&mut std::iter::once((i, 1.0)), program.upper[i], &mut b);
        }
        if program.lower[i].is_finite() {
            push_row(&mut std::iter::once((i, -1.0)), -program.lower[i], &mut b);
        }
    }
    let m = b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows.clone(), cols.clone(), vals.clone());
    let mut pi = Vec::with_capacity(program.quadratic.len());
    let mut pj = Vec::with_capacity(program.quadratic.len());
    let mut pv = Vec::with_capacity(program.quadratic.len());
    for &(i, j, v) in &program.quadratic {
        pi.push(i);
        pj.push(j);
        pv.push(v);
    }
    let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
    let cones = cone_layout(n_eq, m);

    let main_settings = backend_settings(settings)?;
    let mut solver = match DefaultSolver::new(&p, &program.linear, &a, &b, &cones, main_settings) {
        Ok(s) => s,
        Err(e) => {
            return Ok(Solution {
                status: SolveStatus::NumericalFailure,
                x: vec![0.0; n],
                objective: f64::NAN,
                solve_time: started.elapsed().as_secs_f64(),
                iterations: 0,
                primal_residual: f64::INFINITY,
                detail: format!("backend setup failed: {e}"),
            })
        }
    };
    solver.solve();
    let sol = &solver.solution;
    let mut x = sol.x.clone();
    let mut residual = if x.iter().all(|v| v.is_finite()) {
        program.max_violation(&x)
    } else {
        f64::INFINITY
    };
    let raw = sol.status;
    let status = match raw {
        SolverStatus::Solved | SolverStatus::AlmostSolved
            if residual <= settings.residual_limit =>
        {
            SolveStatus::Optimal
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };
    let mut iterations = sol.iterations;
    let mut polished = false;
    if status == SolveStatus::Optimal && settings.polish {
        // inequality rows that look active: slack below its multiplier
        let keep: Vec<bool> = (0..m)
            .map(|r| r < n_eq || sol.s[r] < sol.z[r] || sol.s[r] <= 1e-10 * (1.0 + b[r].abs()))
            .collect();
        let mut remap = vec![usize::MAX; m];
        let mut k = 0;
        for r in 0..m {
            if keep[r] {
                remap[r] = k;
                k += 1;
            }
        }
        let mut tr = Vec::new();
        let mut tc = Vec::new();
        let mut tv = Vec::new();
        for ((&r, &c), &v) in rows.iter().zip(&cols).zip(&vals) {
            if keep[r] {
                tr.push(remap[r]);
                tc.push(c);
                tv.push(v);
            }
        }
        let bp: Vec<f64> = (0..m).filter(|&r| keep[r]).map(|r| b[r]).collect();
        let ap = CscMatrix::new_from_triplets(k, n, tr, tc, tv);
        let cones_p = if k > 0 { vec![ZeroConeT(k)] } else { Vec::new() };
        if let Ok(mut ps) = DefaultSolver::new(&p, &program.linear, &ap, &bp, &cones_p, backend_settings(settings)?) {
            ps.solve();
            let cand = &ps.solution;
            iterations += cand.iterations;
            if matches!(cand.status, SolverStatus::Solved | SolverStatus::AlmostSolved)
                && cand.x.iter().all(|v| v.is_finite())
            {
                let r_new = program.max_violation(&cand.x);
                let (f_old, f_new) = (program.objective(&x), program.objective(&cand.x));
                if r_new <= settings.residual_limit.min(residual.max(1e-9))
                    && f_new <= f_old + 1e-9 * (1.0 + f_old.abs())
                {
                    x = cand.x.clone();
                    residual = r_new;
                    polished = true;
                }
            }
        }
    }
    let objective = if status == SolveStatus::Optimal {
        program.objective(&x)
    } else {
        f64::NAN
    };
    Ok(Solution {
        status,
        x,
        objective,
        solve_time: started.elapsed().as_secs_f64(),
        iterations,
        primal_residual: residual,
        detail: format!(
            "backend status {raw:?}, residual {residual:.2e}{}",
            if polished { ", polished" } else { "" }
        ),
    })
}

fn cone_layout(n_eq: usize, m: usize) -> Vec<SupportedConeT<f64>> {
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if n_eq > 0 {
        cones.push(ZeroConeT(n_eq));
    }
    if m > n_eq {
        cones.push(NonnegativeConeT(m - n_eq));
    }
    cones
}

fn backend_settings(settings: &SolverSettings) -> Result<DefaultSettings<f64>> {
    let tol = settings.tolerance;
    DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .tol_infeas_abs(tol)
        .tol_infeas_rel(tol)
        .tol_ktratio(1e-6_f64.min(tol * 100.0))
        .max_iter(settings.max_iter)
        .time_limit(settings.time_limit)
        .presolve_enable(false)
        .build()
        .map_err(|e| Error::Solver {
            status: "setup".into(),
            detail: format!("{e:?}"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_variable_kkt() {
        let mut b = ProgramBuilder::new();
        let x = b.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        b.add_ge("lo", LinExpr::var(x), 3.0);
        b.add_squared(&LinExpr::var(x), 1.0);
        let s = solve(&b.build()).unwrap();
        assert!(s.is_optimal(), "{}", s.detail);
        assert!((s.x[x] - 3.0).abs() < 1e-6);
        assert!((s.objective - 9.0).abs() < 1e-5);
    }

    #[test]
    fn infeasible_pair() {
        let mut b = ProgramBuilder::new();
        let x = b.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        b.add_ge("a", LinExpr::var(x), 1.0);
        b.add_le("b", LinExpr::var(x), 0.0);
        let s = solve(&b.build()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_lp() {
        let mut b = ProgramBuilder::new();
        let x = b.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        b.add_linear_objective(&LinExpr::var(x));
        b.add_le("b", LinExpr::var(x), 0.0);
        let s = solve(&b.build()).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn non_psd_rejected() {
        let mut b = ProgramBuilder::new();
        let x = b.add_var("x", 0.0, 1.0);
        b.add_squared(&LinExpr::var(x), -1.0);
        assert!(solve(&b.build()).is_err());
    }

    #[test]
    fn bounds_only() {
        let mut b = ProgramBuilder::new();
        let x = b.add_var("x", -2.0, 5.0);
        let y = b.add_var("y", 1.0, f64::INFINITY);
        b.add_linear_objective(&(LinExpr::var(x) + LinExpr::var(y)));
        let s = solve(&b.build()).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[x] + 2.0).abs() < 1e-6 && (s.x[y] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let mut b = ProgramBuilder::new();
        let v = b.add_vars("v", 3, -1.0, 1.0);
        let sum = LinExpr::sum(v.iter().map(|&i| (i, 1.0)));
        b.add_eq("s", sum, 0.5);
        for (k, &i) in v.iter().enumerate() {
            b.add_squared(&(LinExpr::var(i) - LinExpr::constant(k as f64 * 0.3)), 1.0);
        }
        let p = b.build();
        let a = solve(&p).unwrap();
        let c = solve(&p).unwrap();
        assert_eq!(a.x, c.x);
    }
}
