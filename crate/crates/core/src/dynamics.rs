//! Root-zone water balance: the scalar first-order model, its horizon-stacked
//! form and the polytopic state/input constraints.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};

/// Parameters of the soil water balance `x+ = (1-c) x + u - e + p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterBalanceParams {
    /// Fraction of stored water lost to runoff and percolation per period.
    pub c: f64,
    pub horizon_steps: usize,
    pub period_hours: f64,
}

impl Default for WaterBalanceParams {
    fn default() -> Self {
        Self {
            c: 0.025,
            horizon_steps: 8,
            period_hours: 6.0,
        }
    }
}

impl WaterBalanceParams {
    pub fn new(c: f64, horizon_steps: usize, period_hours: f64) -> Result<Self> {
        let p = Self {
            c,
            horizon_steps,
            period_hours,
        };
        p.validate()?;
        Ok(p)
    }

    /// `c = 0` is accepted (decay-free model) even though physical soils have `c > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c < 1.0) {
            return Err(Error::Validation(format!(
                "decay factor c must lie in [0, 1), got {}",
                self.c
            )));
        }
        if self.horizon_steps == 0 {
            return Err(Error::Validation("horizon_steps must be >= 1".into()));
        }
        if !(self.period_hours > 0.0 && self.period_hours.is_finite()) {
            return Err(Error::Validation(format!(
                "period_hours must be positive, got {}",
                self.period_hours
            )));
        }
        Ok(())
    }

    /// The scalar state transition `1 - c`.
    pub fn retention(&self) -> f64 {
        1.0 - self.c
    }

    pub fn with_horizon(mut self, h: usize) -> Self {
        self.horizon_steps = h;
        self
    }
}

/// One period of the water balance. The result is not clamped.
pub fn step(x: f64, u: f64, e: f64, p: f64, params: &WaterBalanceParams) -> Result<f64> {
    for (name, v) in [("x", x), ("u", u), ("e", e), ("p", p), ("c", params.c)] {
        ensure_finite(name, v)?;
    }
    for (name, v) in [("u", u), ("e", e), ("p", p)] {
        if v < 0.0 {
            return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
        }
    }
    Ok(params.retention() * x + u - e + p)
}

/// Horizon-stacked dynamics `x = A x0 + Bu u + Bv v + Bw w`.
///
/// Trajectories have `H + 1` entries (`x_0 .. x_H`); input, forecast and
/// disturbance sequences have `H` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDynamics {
    pub params: WaterBalanceParams,
    pub a_stack: DMatrix<f64>,
    pub bu_stack: DMatrix<f64>,
    pub bv_stack: DMatrix<f64>,
    pub bw_stack: DMatrix<f64>,
}

pub fn build_stacked(params: &WaterBalanceParams) -> Result<StackedDynamics> {
    params.validate()?;
    let h = params.horizon_steps;
    let a = params.retention();
    let a_stack = DMatrix::from_fn(h + 1, 1, |t, _| a.powi(t as i32));
    let b = DMatrix::from_fn(h + 1, h, |t, j| {
        if j < t {
            a.powi((t - 1 - j) as i32)
        } else {
            0.0
        }
    });
    Ok(StackedDynamics {
        params: *params,
        a_stack,
        bu_stack: b.clone(),
        bv_stack: b.clone(),
        bw_stack: b,
    })
}

impl StackedDynamics {
    pub fn horizon(&self) -> usize {
        self.params.horizon_steps
    }

    /// Entry `(t, j)` of the (shared) input-to-state map: `(1-c)^(t-1-j)` for `j < t`.
    pub fn gain(&self, t: usize, j: usize) -> f64 {
        self.bu_stack[(t, j)]
    }

    pub fn predict(
        &self,
        x0: f64,
        u: &[f64],
        v: &[f64],
        w: &[f64],
    ) -> Result<DVector<f64>> {
        predict_trajectory(self, x0, u, v, w)
    }
}

pub fn predict_trajectory(
    dyn_: &StackedDynamics,
    x0: f64,
    u_seq: &[f64],
    v_seq: &[f64],
    w_seq: &[f64],
) -> Result<DVector<f64>> {
    let h = dyn_.horizon();
    ensure_len("input sequence", h, u_seq.len())?;
    ensure_len("forecast sequence", h, v_seq.len())?;
    ensure_len("disturbance sequence", h, w_seq.len())?;
    ensure_finite("x0", x0)?;
    let u = DVector::from_column_slice(u_seq);
    let v = DVector::from_column_slice(v_seq);
    let w = DVector::from_column_slice(w_seq);
    let x = dyn_.a_stack.column(0) * x0 + &dyn_.bu_stack * u + &dyn_.bv_stack * v + &dyn_.bw_stack * w;
    Ok(x)
}

/// Soil-moisture floor and irrigation capacity, with their stacked polytopic form
/// `Fx x <= fx` (rows for `x_1 .. x_H`) and `Fu u <= fu` (two rows per input).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub x_min: f64,
    pub u_max: f64,
    pub fx: DMatrix<f64>,
    pub fx_rhs: DVector<f64>,
    pub fu: DMatrix<f64>,
    pub fu_rhs: DVector<f64>,
}

impl ConstraintSet {
    pub fn new(x_min: f64, u_max: f64, horizon: usize) -> Result<Self> {
        if !(x_min >= 0.0 && x_min.is_finite()) {
            return Err(Error::Validation(format!("x_min must be >= 0, got {x_min}")));
        }
        if !(u_max > 0.0 && u_max.is_finite()) {
            return Err(Error::Validation(format!("u_max must be > 0, got {u_max}")));
        }
        let fx = DMatrix::from_fn(horizon, horizon + 1, |r, c| if c == r + 1 { -1.0 } else { 0.0 });
        let fx_rhs = DVector::from_element(horizon, -x_min);
        let fu = DMatrix::from_fn(2 * horizon, horizon, |r, c| {
            if r / 2 == c {
                if r % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            }
        });
        let fu_rhs = DVector::from_fn(2 * horizon, |r, _| if r % 2 == 0 { u_max } else { 0.0 });
        Ok(Self {
            x_min,
            u_max,
            fx,
            fx_rhs,
            fu,
            fu_rhs,
        })
    }

    pub fn horizon(&self) -> usize {
        self.fx.nrows()
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self::new(self.x_min, self.u_max, horizon).expect("validated bounds")
    }

    pub fn state_ok(&self, x: &DVector<f64>, tol: f64) -> bool {
        (&self.fx * x - &self.fx_rhs).iter().all(|r| *r <= tol)
    }

    pub fn input_ok(&self, u: &DVector<f64>, tol: f64) -> bool {
        (&self.fu * u - &self.fu_rhs).iter().all(|r| *r <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(c: f64, h: usize) -> WaterBalanceParams {
        WaterBalanceParams::new(c, h, 6.0).unwrap()
    }

    #[test]
    fn step_hand_values() {
        let p = params(0.025, 8);
        assert!((step(40.0, 5.0, 2.0, 0.0, &p).unwrap() - 42.0).abs() < 1e-12);
        assert!((step(30.0, 10.0, 3.0, 7.0, &p).unwrap() - 43.25).abs() < 1e-12);
        let p0 = params(0.0, 1);
        assert_eq!(step(17.5, 0.0, 0.0, 0.0, &p0).unwrap(), 17.5);
    }

    #[test]
    fn step_rejects_non_finite_and_negative_flows() {
        let p = params(0.025, 8);
        assert!(step(f64::NAN, 0.0, 0.0, 0.0, &p).is_err());
        assert!(step(1.0, f64::INFINITY, 0.0, 0.0, &p).is_err());
        assert!(step(1.0, -1.0, 0.0, 0.0, &p).is_err());
    }

    #[test]
    fn invalid_params() {
        assert!(WaterBalanceParams::new(1.0, 8, 6.0).is_err());
        assert!(WaterBalanceParams::new(0.1, 0, 6.0).is_err());
        assert!(WaterBalanceParams::new(0.1, 1, 0.0).is_err());
    }

    #[test]
    fn single_step_stack() {
        let d = build_stacked(&params(0.025, 1)).unwrap();
        assert_eq!(d.bu_stack.as_slice(), &[0.0, 1.0]);
        assert_eq!(d.a_stack[(0, 0)], 1.0);
        assert!((d.a_stack[(1, 0)] - 0.975).abs() < 1e-15);
    }

    #[test]
    fn decay_free_stack_is_shift_pattern() {
        let d = build_stacked(&params(0.0, 4)).unwrap();
        for t in 0..=4 {
            for j in 0..4 {
                let expect = if j < t { 1.0 } else { 0.0 };
                assert_eq!(d.bu_stack[(t, j)], expect);
            }
        }
    }

    #[test]
    fn free_decay_and_zero_trajectory() {
        let d = build_stacked(&params(0.025, 6)).unwrap();
        let z = vec![0.0; 6];
        let x = d.predict(30.0, &z, &z, &z).unwrap();
        for t in 0..=6 {
            assert!((x[t] - 30.0 * 0.975f64.powi(t as i32)).abs() < 1e-12);
        }
        let x = d.predict(0.0, &z, &z, &z).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn length_mismatch_rejected() {
        let d = build_stacked(&params(0.025, 3)).unwrap();
        assert!(d.predict(1.0, &[0.0; 2], &[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn constraint_rows() {
        let cs = ConstraintSet::new(30.0, 10.0, 2).unwrap();
        assert_eq!(cs.fx.shape(), (2, 3));
        assert_eq!(cs.fx[(0, 1)], -1.0);
        assert_eq!(cs.fx_rhs[0], -30.0);
        assert_eq!(cs.fu.shape(), (4, 2));
        assert_eq!(cs.fu_rhs.as_slice(), &[10.0, 0.0, 10.0, 0.0]);
        assert!(cs.input_ok(&DVector::from_vec(vec![0.0, 10.0]), 0.0));
        assert!(!cs.input_ok(&DVector::from_vec(vec![-0.1, 1.0]), 0.0));
        assert!(cs.state_ok(&DVector::from_vec(vec![0.0, 30.0, 31.0]), 0.0));
        assert!(ConstraintSet::new(-1.0, 10.0, 2).is_err());
        assert!(ConstraintSet::new(1.0, 0.0, 2).is_err());
    }
}
