use std::collections::HashMap;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;

use super::{LinearRow, ProgramDescription};

pub type VarId = usize;

/// Affine expression `Σ c_i x_i + constant` over program variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn var(v: VarId) -> Self {
        Self {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(v: VarId, c: f64) -> Self {
        Self {
            terms: vec![(v, c)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn sum(terms: impl IntoIterator<Item = (VarId, f64)>) -> Self {
        Self {
            terms: terms.into_iter().collect(),
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, v: VarId, c: f64) {
        if c != 0.0 {
            self.terms.push((v, c));
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, s: f64) {
        if s == 0.0 {
            return;
        }
        self.terms.extend(other.terms.iter().map(|(v, c)| (*v, c * s)));
        self.constant += other.constant * s;
    }

    pub fn scaled(&self, s: f64) -> LinExpr {
        let mut e = LinExpr::zero();
        e.add_scaled(self, s);
        e
    }

    /// Sort terms by variable, merge duplicates and drop exact zeros.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match out.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|(_, c)| *c != 0.0);
        self.terms = out;
        self
    }

    /// True if no variable appears (after merging).
    pub fn is_constant(&self) -> bool {
        self.clone().compact().terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * x[*v]).sum::<f64>()
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, s: f64) -> LinExpr {
        self.scaled(s)
    }
}

impl AddAssign<&LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, 1.0);
    }
}

/// Incrementally assembles a [`ProgramDescription`].
#[derive(Debug, Clone, Default)]
pub struct ProgramBuilder {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    equalities: Vec<LinearRow>,
    inequalities: Vec<LinearRow>,
    quadratic: HashMap<(usize, usize), f64>,
    linear: Vec<f64>,
    constant: f64,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.linear.push(0.0);
        self.names.len() - 1
    }

    pub fn add_vars(&mut self, prefix: &str, n: usize, lower: f64, upper: f64) -> Vec<VarId> {
        (0..n)
            .map(|k| self.add_var(format!("{prefix}_{k}"), lower, upper))
            .collect()
    }

    fn row(name: String, expr: LinExpr, rhs: f64) -> LinearRow {
        let e = expr.compact();
        LinearRow {
            name,
            coefs: e.terms,
            rhs: rhs - e.constant,
        }
    }

    pub fn add_eq(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.equalities.push(Self::row(name.into(), expr, rhs));
    }

    /// `expr <= rhs`
    pub fn add_le(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.inequalities.push(Self::row(name.into(), expr, rhs));
    }

    /// `expr >= rhs`
    pub fn add_ge(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.inequalities.push(Self::row(name.into(), -expr, -rhs));
    }

    pub fn add_linear_objective(&mut self, expr: &LinExpr) {
        for (v, c) in &expr.terms {
            self.linear[*v] += c;
        }
        self.constant += expr.constant;
    }

    /// Adds `weight · expr²` to the objective.
    pub fn add_squared(&mut self, expr: &LinExpr, weight: f64) {
        let s = DMatrix::from_element(1, 1, weight);
        self.add_quadratic_form(std::slice::from_ref(expr), &s);
    }

    /// Adds `Σ_ab S_ab e_a e_b` for a symmetric matrix `S`.
    pub fn add_quadratic_form(&mut self, exprs: &[LinExpr], s: &DMatrix<f64>) {
        assert_eq!(s.nrows(), exprs.len());
        assert_eq!(s.ncols(), exprs.len());
        let exprs: Vec<LinExpr> = exprs.iter().map(|e| e.clone().compact()).collect();
        for a in 0..exprs.len() {
            for b in 0..exprs.len() {
                let sab = s[(a, b)];
                if sab == 0.0 {
                    continue;
                }
                let (ea, eb) = (&exprs[a], &exprs[b]);
                for &(i, ci) in &ea.terms {
                    for &(j, cj) in &eb.terms {
                        let v = sab * ci * cj;
                        let key = (i.min(j), i.max(j));
                        *self.quadratic.entry(key).or_insert(0.0) += if i == j { 2.0 * v } else { v };
                    }
                }
                // cross terms with constants: S_ab (k_a e_b + k_b e_a); summing over
                // both orders of (a, b) covers each once per side.
                for &(j, cj) in &eb.terms {
                    self.linear[j] += sab * ea.constant * cj;
                }
                for &(i, ci) in &ea.terms {
                    self.linear[i] += sab * eb.constant * ci;
                }
                self.constant += sab * ea.constant * eb.constant;
            }
        }
    }

    pub fn build(self) -> ProgramDescription {
        let mut quadratic: Vec<(usize, usize, f64)> = self
            .quadratic
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        quadratic.sort_by_key(|&(i, j, _)| (i, j));
        ProgramDescription {
            names: self.names,
            lower: self.lower,
            upper: self.upper,
            equalities: self.equalities,
            inequalities: self.inequalities,
            quadratic,
            linear: self.linear,
            constant: self.constant,
        }
    }
}
