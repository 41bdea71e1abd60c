//! Learned uncertainty sets: the evapotranspiration-error set, the conditional
//! precipitation-error set, their Minkowski combination and the
//! training/calibration procedure.

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::solver::{solve, LinExpr, ProgramBuilder, SolveStatus};
use crate::svc::{svc_distance, train_svc, SvcModel, SvcTrainConfig};
use crate::weather::ErrorDataset;

/// An SVC-induced set `{w : svc_distance(w) ≤ θ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SvcSet {
    pub model: SvcModel,
}

impl SvcSet {
    pub fn new(model: SvcModel) -> Self {
        Self { model }
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn theta(&self) -> f64 {
        self.model.theta
    }

    pub fn distance(&self, w: &[f64]) -> f64 {
        svc_distance(&self.model, w)
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        self.distance(w) <= self.model.theta + tol
    }

    /// The single-point set `{center}`.
    pub fn point(center: &[f64]) -> Self {
        let h = center.len();
        let model = SvcModel::from_parts(
            vec![DVector::from_column_slice(center)],
            vec![1.0],
            DMatrix::identity(h, h),
            0.0,
        )
        .expect("valid single-point model");
        Self { model }
    }
}

fn check_phat(phat: &[f64], p_max: f64) -> Result<()> {
    if !(p_max > 0.0 && p_max.is_finite()) {
        return Err(Error::Validation(format!("p_max must be positive, got {p_max}")));
    }
    let bad: Vec<String> = phat
        .iter()
        .enumerate()
        .filter(|(_, p)| !(**p >= 0.0 && **p <= p_max))
        .map(|(t, p)| format!("p̂[{t}] = {p}"))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "precipitation forecasts must lie in [0, {p_max}]: {}",
            bad.join(", ")
        )))
    }
}

/// Diagonals of `C(p̂) = diag(p_max − p̂)` and `D(p̂) = diag(p̂)`.
pub fn scaling_diagonals(phat: &[f64], p_max: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_phat(phat, p_max)?;
    Ok((phat.iter().map(|p| p_max - p).collect(), phat.to_vec()))
}

pub fn scaling_matrices(phat: &[f64], p_max: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (c, d) = scaling_diagonals(phat, p_max)?;
    Ok((
        DMatrix::from_diagonal(&DVector::from_vec(c)),
        DMatrix::from_diagonal(&DVector::from_vec(d)),
    ))
}

/// `ξ = C max(ξ̄, 0) − D max(−ξ̄, 0)`.
pub fn realize_xi(xibar: &[f64], phat: &[f64], p_max: f64) -> Result<Vec<f64>> {
    ensure_len("normalized precipitation error", phat.len(), xibar.len())?;
    let (c, d) = scaling_diagonals(phat, p_max)?;
    let bad: Vec<String> = xibar
        .iter()
        .enumerate()
        .filter(|(_, v)| !(**v >= -1.0 && **v <= 1.0))
        .map(|(t, v)| format!("ξ̄[{t}] = {v}"))
        .collect();
    if !bad.is_empty() {
        return Err(Error::Validation(format!(
            "normalized errors must lie in [-1, 1]: {}",
            bad.join(", ")
        )));
    }
    Ok(xibar
        .iter()
        .enumerate()
        .map(|(t, &v)| c[t] * v.max(0.0) - d[t] * (-v).max(0.0))
        .collect())
}

/// Inverse of [`realize_xi`].
pub fn normalize_xi(xi: &[f64], phat: &[f64], p_max: f64) -> Result<Vec<f64>> {
    ensure_len("precipitation error", phat.len(), xi.len())?;
    let (c, d) = scaling_diagonals(phat, p_max)?;
    let mut bad = Vec::new();
    let mut out = Vec::with_capacity(xi.len());
    for (t, &v) in xi.iter().enumerate() {
        if !(v >= -d[t] && v <= c[t]) {
            bad.push(format!("ξ[{t}] = {v} outside [{}, {}]", -d[t], c[t]));
            continue;
        }
        out.push(if v > 0.0 {
            v / c[t]
        } else if v < 0.0 {
            v / d[t]
        } else {
            0.0
        });
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(Error::Validation(format!(
            "precipitation errors out of bounds: {}",
            bad.join("; ")
        )))
    }
}

/// Precipitation-error set `D_ξ(p̂)` conditioned on a forecast sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSet {
    pub p_max: f64,
    pub phat: Vec<f64>,
    pub inner: SvcSet,
}

impl ConditionalSet {
    pub fn new(inner: SvcSet, phat: Vec<f64>, p_max: f64) -> Result<Self> {
        ensure_len("forecast sequence", inner.dim(), phat.len())?;
        check_phat(&phat, p_max)?;
        Ok(Self { p_max, phat, inner })
    }

    pub fn horizon(&self) -> usize {
        self.phat.len()
    }

    pub fn scaling(&self) -> (Vec<f64>, Vec<f64>) {
        scaling_diagonals(&self.phat, self.p_max).expect("validated at construction")
    }

    /// Membership of a realized precipitation-error vector.
    pub fn contains(&self, xi: &[f64], tol: f64) -> Result<bool> {
        ensure_len("precipitation error", self.horizon(), xi.len())?;
        let (c, d) = self.scaling();
        if xi.iter().enumerate().any(|(t, v)| *v < -d[t] - tol || *v > c[t] + tol) {
            return Ok(false);
        }
        let mut b = ProgramBuilder::new();
        let h = self.horizon();
        let xp = b.add_vars("xi_plus", h, 0.0, 1.0);
        let xm = b.add_vars("xi_minus", h, 0.0, 1.0);
        for t in 0..h {
            b.add_eq(
                format!("realize_{t}"),
                LinExpr::sum([(xp[t], c[t]), (xm[t], -d[t])]),
                xi[t],
            );
        }
        let z: Vec<LinExpr> = (0..h).map(|t| LinExpr::sum([(xp[t], 1.0), (xm[t], -1.0)])).collect();
        let slack = b.add_var("slack", 0.0, f64::INFINITY);
        add_svc_membership(&mut b, &self.inner.model, &z, Some(slack), "xibar");
        b.add_linear_objective(&LinExpr::var(slack));
        let sol = solve(&b.build())?;
        match sol.status {
            SolveStatus::Optimal => Ok(sol.x[slack] <= tol.max(1e-7 * self.inner.theta().max(1.0))),
            // equality rows cannot be met when ξ_t ≠ 0 but C_tt = D_tt = 0
            SolveStatus::Infeasible => Ok(false),
            s => Err(Error::Solver {
                status: s.to_string(),
                detail: sol.detail,
            }),
        }
    }
}

/// Adds `Σ_i α_i ‖Q(z − w_i)‖₁ ≤ θ (+ slack)` through auxiliary variables
/// `ρ_ik ≥ |(Q(z − w_i))_k|`.
pub(crate) fn add_svc_membership(
    b: &mut ProgramBuilder,
    model: &SvcModel,
    z: &[LinExpr],
    slack: Option<usize>,
    prefix: &str,
) {
    let h = model.dim();
    assert_eq!(z.len(), h);
    let qz: Vec<LinExpr> = (0..h)
        .map(|k| {
            let mut e = LinExpr::zero();
            for (t, zt) in z.iter().enumerate() {
                e.add_scaled(zt, model.q_matrix[(k, t)]);
            }
            e.compact()
        })
        .collect();
    let mut total = LinExpr::zero();
    for (i, (a, wp)) in model.alphas.iter().zip(model.weighted_points()).enumerate() {
        for k in 0..h {
            let rho = b.add_var(format!("{prefix}_rho_{i}_{k}"), 0.0, f64::INFINITY);
            let dev = qz[k].clone() - LinExpr::constant(wp[k]);
            b.add_le(format!("{prefix}_abs_hi_{i}_{k}"), dev.clone() - LinExpr::var(rho), 0.0);
            b.add_le(format!("{prefix}_abs_lo_{i}_{k}"), -dev - LinExpr::var(rho), 0.0);
            total.add_term(rho, *a);
        }
    }
    if let Some(s) = slack {
        total.add_term(s, -1.0);
    }
    b.add_le(format!("{prefix}_radius"), total, model.theta);
}

/// Decides `w ∈ D_ξ(p̂) + (−D_η)` by a feasibility program over `(ξ⁺, ξ⁻)`
/// with `η = Cξ⁺ − Dξ⁻ − w`.
pub fn membership_w(eta_set: &SvcSet, xi_set: &ConditionalSet, w: &[f64]) -> Result<bool> {
    Ok(membership_w_margin(eta_set, xi_set, w)? <= 1e-7 * (1.0 + eta_set.theta() + xi_set.inner.theta()))
}

/// Smallest radius inflation making `w` a member. Zero for members.
pub fn membership_w_margin(eta_set: &SvcSet, xi_set: &ConditionalSet, w: &[f64]) -> Result<f64> {
    let h = xi_set.horizon();
    if eta_set.dim() != h {
        return Err(Error::Dimension {
            context: "evapotranspiration set dimension",
            expected: h,
            got: eta_set.dim(),
        });
    }
    ensure_len("disturbance vector", h, w.len())?;
    for &v in w {
        ensure_finite("disturbance", v)?;
    }
    let (c, d) = xi_set.scaling();
    let mut b = ProgramBuilder::new();
    let xp = b.add_vars("xi_plus", h, 0.0, 1.0);
    let xm = b.add_vars("xi_minus", h, 0.0, 1.0);
    let slack = b.add_var("slack", 0.0, f64::INFINITY);
    let xibar: Vec<LinExpr> = (0..h).map(|t| LinExpr::sum([(xp[t], 1.0), (xm[t], -1.0)])).collect();
    let eta: Vec<LinExpr> = (0..h)
        .map(|t| LinExpr::sum([(xp[t], c[t]), (xm[t], -d[t])]) - LinExpr::constant(w[t]))
        .collect();
    add_svc_membership(&mut b, &xi_set.inner.model, &xibar, Some(slack), "xibar");
    add_svc_membership(&mut b, &eta_set.model, &eta, Some(slack), "eta");
    b.add_linear_objective(&LinExpr::var(slack));
    let sol = solve(&b.build())?;
    if !sol.is_optimal() {
        return Err(Error::Solver {
            status: sol.status.to_string(),
            detail: format!("membership program: {}", sol.detail),
        });
    }
    Ok(sol.x[slack].max(0.0))
}

/// Split of the total coverage and confidence gaps across the two sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeBudget {
    pub epsilon: f64,
    pub beta: f64,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl GuaranteeBudget {
    pub fn even(epsilon: f64, beta: f64) -> Result<Self> {
        let b = Self {
            epsilon,
            beta,
            epsilon1: epsilon / 2.0,
            epsilon2: epsilon / 2.0,
            beta1: beta / 2.0,
            beta2: beta / 2.0,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("epsilon", self.epsilon),
            ("beta", self.beta),
            ("epsilon1", self.epsilon1),
            ("epsilon2", self.epsilon2),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Validation(format!("{n} must lie in (0, 1), got {v}")));
            }
        }
        let tol = 1e-12;
        if (self.epsilon1 + self.epsilon2 - self.epsilon).abs() > tol
            || (self.beta1 + self.beta2 - self.beta).abs() > tol
        {
            return Err(Error::Validation("budget splits must sum to the totals".into()));
        }
        Ok(())
    }
}

impl Default for GuaranteeBudget {
    fn default() -> Self {
        Self::even(0.05, 1e-4).expect("valid default")
    }
}

/// `⌈ln β / ln(1 − ε)⌉`.
pub fn min_calib_size(epsilon: f64, beta: f64) -> usize {
    assert!(epsilon > 0.0 && epsilon < 1.0 && beta > 0.0 && beta < 1.0);
    let r = beta.ln() / (1.0 - epsilon).ln();
    // guard exact integers against rounding upward
    let n = r.ceil();
    if (r - (n - 1.0)).abs() < 1e-9 {
        (n - 1.0).max(1.0) as usize
    } else {
        n.max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub theta_before: f64,
    pub theta_calibrated: f64,
    pub n_calib_used: usize,
    pub n_calib_required: usize,
    pub guarantee_met: bool,
}

/// Resets the radius to the largest calibration distance.
pub fn calibrate(set: &SvcSet, calib_samples: &[Vec<f64>], epsilon: f64, beta: f64) -> Result<CalibrationResult> {
    if calib_samples.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let mut theta: f64 = 0.0;
    for s in calib_samples {
        ensure_len("calibration sample", set.dim(), s.len())?;
        theta = theta.max(set.distance(s));
    }
    let required = min_calib_size(epsilon, beta);
    let used = calib_samples.len();
    if used < required {
        warn!("calibration uses {used} samples, the guarantee needs {required}");
    }
    Ok(CalibrationResult {
        theta_before: set.theta(),
        theta_calibrated: theta,
        n_calib_used: used,
        n_calib_required: required,
        guarantee_met: used >= required,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitRule {
    /// Latest windows calibrate; training windows overlapping them are dropped.
    #[default]
    Chronological,
    Random { seed: u64 },
}

/// Positions of training and calibration windows.
pub fn split_windows(
    starts: &[usize],
    horizon: usize,
    n_calib: usize,
    rule: SplitRule,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = starts.len();
    if n_calib == 0 || n_calib >= n {
        return Err(Error::Validation(format!(
            "cannot take {n_calib} calibration windows out of {n}"
        )));
    }
    match rule {
        SplitRule::Chronological => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| starts[i]);
            let calib: Vec<usize> = order[n - n_calib..].to_vec();
            let first = calib.iter().map(|&i| starts[i]).min().expect("non-empty");
            let train: Vec<usize> = order[..n - n_calib]
                .iter()
                .copied()
                .filter(|&i| starts[i] + horizon <= first)
                .collect();
            if train.len() < 2 {
                return Err(Error::Validation(format!(
                    "only {} training windows remain after the calibration split",
                    train.len()
                )));
            }
            Ok((train, calib))
        }
        SplitRule::Random { seed } => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut calib = order[..n_calib].to_vec();
            let mut train = order[n_calib..].to_vec();
            calib.sort_unstable();
            train.sort_unstable();
            warn!("random split: overlapping windows are shared between training and calibration");
            Ok((train, calib))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintyConfig {
    pub svc: SvcTrainConfig,
    pub budget: GuaranteeBudget,
    pub p_max: f64,
    pub split: SplitRule,
    /// Calibration window count. `None` takes the larger required size.
    pub n_calib: Option<usize>,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            svc: SvcTrainConfig::default(),
            budget: GuaranteeBudget::default(),
            p_max: 50.0,
            split: SplitRule::Chronological,
            n_calib: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub eta: CalibrationResult,
    pub xibar: CalibrationResult,
    pub budget: GuaranteeBudget,
    pub n_windows: usize,
    pub n_train: usize,
    pub n_calib: usize,
    pub eta_support_vectors: usize,
    pub xibar_support_vectors: usize,
    pub guarantee_met: bool,
}

/// The learned and calibrated sets plus the empirical moments of the
/// lifted uncertainty `z = (ξ⁺, ξ⁻, η, 1)` over the training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub eta: SvcSet,
    pub xibar: SvcSet,
    pub p_max: f64,
    pub budget: GuaranteeBudget,
    /// Row-major `(3H+1) × (3H+1)` second-moment matrix of `z`.
    pub lifted_second_moment: Vec<Vec<f64>>,
}

impl UncertaintyModel {
    pub fn horizon(&self) -> usize {
        self.eta.dim()
    }

    pub fn lifted_moment_matrix(&self) -> DMatrix<f64> {
        let n = self.lifted_second_moment.len();
        DMatrix::from_fn(n, n, |r, c| self.lifted_second_moment[r][c])
    }

    pub fn conditional_set(&self, phat: &[f64]) -> Result<ConditionalSet> {
        let clipped: Vec<f64> = phat.iter().map(|p| p.clamp(0.0, self.p_max)).collect();
        ConditionalSet::new(self.xibar.clone(), clipped, self.p_max)
    }

    /// Both sets reduced to the origin; the lifted moments are those of `z = (0, 0, 0, 1)`.
    pub fn degenerate(horizon: usize, p_max: f64) -> Self {
        let n = 3 * horizon + 1;
        let mut m = vec![vec![0.0; n]; n];
        m[n - 1][n - 1] = 1.0;
        Self {
            eta: SvcSet::point(&vec![0.0; horizon]),
            xibar: SvcSet::point(&vec![0.0; horizon]),
            p_max,
            budget: GuaranteeBudget::default(),
            lifted_second_moment: m,
        }
    }
}

fn lifted_vector(xibar: &[f64], eta: &[f64]) -> Vec<f64> {
    let mut z: Vec<f64> = xibar.iter().map(|v| v.max(0.0)).collect();
    z.extend(xibar.iter().map(|v| (-v).max(0.0)));
    z.extend_from_slice(eta);
    z.push(1.0);
    z
}

/// Empirical `E[z zᵀ]` for `z = (ξ⁺, ξ⁻, η, 1)`.
pub fn lifted_second_moment(xibar: &[Vec<f64>], eta: &[Vec<f64>]) -> DMatrix<f64> {
    let n = lifted_vector(&xibar[0], &eta[0]).len();
    let mut m = DMatrix::zeros(n, n);
    for (xb, e) in xibar.iter().zip(eta) {
        let z = DVector::from_vec(lifted_vector(xb, e));
        m += &z * z.transpose();
    }
    m / xibar.len() as f64
}

/// Trains both sets on the training windows, recalibrates their radii on the
/// held-out windows and records the lifted moments.
pub fn learn_uncertainty(
    dataset: &ErrorDataset,
    config: &UncertaintyConfig,
) -> Result<(UncertaintyModel, CalibrationReport)> {
    config.budget.validate()?;
    let b = &config.budget;
    let required = min_calib_size(b.epsilon1, b.beta1).max(min_calib_size(b.epsilon2, b.beta2));
    let n_calib = config.n_calib.unwrap_or(required);
    let (train, calib) = split_windows(&dataset.starts, dataset.horizon, n_calib, config.split)?;
    info!(
        "{} windows: {} for training, {} for calibration",
        dataset.len(),
        train.len(),
        calib.len()
    );
    let xibar_all: Vec<Vec<f64>> = dataset
        .xi_windows
        .iter()
        .zip(&dataset.phat_windows)
        .map(|(xi, ph)| {
            let ph: Vec<f64> = ph.iter().map(|p| p.min(config.p_max)).collect();
            normalize_xi(xi, &ph, config.p_max)
        })
        .collect::<Result<_>>()?;
    let pick = |idx: &[usize], src: &[Vec<f64>]| -> Vec<Vec<f64>> { idx.iter().map(|&i| src[i].clone()).collect() };
    let eta_train = pick(&train, &dataset.eta_windows);
    let xib_train = pick(&train, &xibar_all);

    let eta_model = train_svc(&eta_train, &config.svc)?;
    let xib_model = train_svc(&xib_train, &config.svc)?;
    let eta_set = SvcSet::new(eta_model);
    let xib_set = SvcSet::new(xib_model);
    let eta_cal = calibrate(&eta_set, &pick(&calib, &dataset.eta_windows), b.epsilon1, b.beta1)?;
    let xib_cal = calibrate(&xib_set, &pick(&calib, &xibar_all), b.epsilon2, b.beta2)?;

    let moments = lifted_second_moment(&xib_train, &eta_train);
    let n = moments.nrows();
    let model = UncertaintyModel {
        eta: SvcSet::new(eta_set.model.with_theta(eta_cal.theta_calibrated)),
        xibar: SvcSet::new(xib_set.model.with_theta(xib_cal.theta_calibrated)),
        p_max: config.p_max,
        budget: *b,
        lifted_second_moment: (0..n).map(|r| moments.row(r).iter().copied().collect()).collect(),
    };
    let report = CalibrationReport {
        eta: eta_cal,
        xibar: xib_cal,
        budget: *b,
        n_windows: dataset.len(),
        n_train: train.len(),
        n_calib: calib.len(),
        eta_support_vectors: model.eta.model.num_sv(),
        xibar_support_vectors: model.xibar.model.num_sv(),
        guarantee_met: eta_cal.guarantee_met && xib_cal.guarantee_met,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn scaling_examples() {
        let (c, d) = scaling_matrices(&[10.0, 0.0], 50.0).unwrap();
        assert_eq!(c, DMatrix::from_diagonal(&DVector::from_vec(vec![40.0, 50.0])));
        assert_eq!(d, DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 0.0])));
        let (c, _) = scaling_diagonals(&[50.0, 50.0], 50.0).unwrap();
        assert_eq!(c, vec![0.0, 0.0]);
        assert!(scaling_diagonals(&[51.0], 50.0).is_err());
    }

    #[test]
    fn realize_and_normalize_examples() {
        assert_eq!(realize_xi(&[1.0], &[10.0], 50.0).unwrap(), vec![40.0]);
        assert_eq!(realize_xi(&[-1.0], &[10.0], 50.0).unwrap(), vec![-10.0]);
        assert_eq!(realize_xi(&[0.0, 0.0], &[3.0, 0.0], 50.0).unwrap(), vec![0.0, 0.0]);
        assert!(realize_xi(&[1.5], &[10.0], 50.0).is_err());
        assert_eq!(normalize_xi(&[40.0], &[10.0], 50.0).unwrap(), vec![1.0]);
        assert_eq!(normalize_xi(&[-5.0], &[10.0], 50.0).unwrap(), vec![-0.5]);
        assert_eq!(normalize_xi(&[7.0], &[0.0], 50.0).unwrap(), vec![7.0 / 50.0]);
        assert_eq!(normalize_xi(&[-3.0], &[50.0], 50.0).unwrap(), vec![-3.0 / 50.0]);
        let err = normalize_xi(&[-1.0, 0.0, 45.0], &[0.0, 0.0, 10.0], 50.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ξ[0]") && msg.contains("ξ[2]") && !msg.contains("ξ[1]"), "{msg}");
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let h = rng.random_range(1..10);
            let phat: Vec<f64> = (0..h).map(|_| rng.random_range(0.0..50.0)).collect();
            let xi: Vec<f64> = phat.iter().map(|p| rng.random_range(-p..(50.0 - p))).collect();
            let back = realize_xi(&normalize_xi(&xi, &phat, 50.0).unwrap(), &phat, 50.0).unwrap();
            for (a, b) in xi.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn calib_sizes() {
        assert_eq!(min_calib_size(0.05, 1e-4), 180);
        assert_eq!(min_calib_size(0.025, 5e-5), 392);
        assert_eq!(min_calib_size(0.5, 0.5), 1);
        assert_eq!(min_calib_size(0.2, 0.1), 11);
    }

    #[test]
    fn calibrate_takes_maximum() {
        let set = SvcSet::point(&[0.0]);
        let r = calibrate(&set, &[vec![1.0], vec![-3.0], vec![2.0]], 0.5, 0.5).unwrap();
        assert_eq!(r.theta_calibrated, 3.0);
        assert!(r.guarantee_met);
        let r = calibrate(&set, &[vec![1.0]], 0.05, 1e-4).unwrap();
        assert!(!r.guarantee_met && r.n_calib_required == 180);
        assert!(matches!(calibrate(&set, &[], 0.1, 0.1), Err(Error::EmptyCalibration)));
    }

    #[test]
    fn chronological_split_drops_overlap() {
        let starts: Vec<usize> = (0..729).collect();
        let (train, calib) = split_windows(&starts, 8, 392, SplitRule::Chronological).unwrap();
        assert_eq!(calib.len(), 392);
        assert_eq!(train.len(), 330);
        assert!(train.iter().all(|&i| starts[i] + 8 <= starts[calib[0]]));
        let (t2, c2) = split_windows(&starts, 8, 392, SplitRule::Random { seed: 1 }).unwrap();
        assert_eq!(t2.len() + c2.len(), 729);
    }

    #[test]
    fn conditional_membership() {
        let inner = SvcSet::new(
            SvcModel::from_parts(vec![DVector::zeros(2)], vec![1.0], DMatrix::identity(2, 2), 0.5).unwrap(),
        );
        let set = ConditionalSet::new(inner, vec![10.0, 0.0], 50.0).unwrap();
        // ξ̄ = (0.25, 0.2) → ξ = (10, 10), |ξ̄|₁ = 0.45
        assert!(set.contains(&[10.0, 10.0], 1e-9).unwrap());
        // ξ⁺ and ξ⁻ may both be active: ξ₀ = 40 − 10 at ξ̄₀ = 0
        assert!(set.contains(&[30.0, 10.0], 1e-9).unwrap());
        // ξ₀ = −10 forces ξ̄₀ = −1
        assert!(!set.contains(&[-10.0, 0.0], 1e-9).unwrap());
        assert!(set.contains(&[-4.0, 0.0], 1e-9).unwrap());
        assert!(!set.contains(&[-11.0, 0.0], 1e-9).unwrap());
    }

    #[test]
    fn minkowski_membership() {
        let eta = SvcSet::new(
            SvcModel::from_parts(vec![DVector::zeros(2)], vec![1.0], DMatrix::identity(2, 2), 1.0).unwrap(),
        );
        let xib = SvcSet::new(
            SvcModel::from_parts(vec![DVector::zeros(2)], vec![1.0], DMatrix::identity(2, 2), 0.2).unwrap(),
        );
        let xs = ConditionalSet::new(xib, vec![5.0, 5.0], 50.0).unwrap();
        assert!(membership_w(&eta, &xs, &[0.0, 0.0]).unwrap());
        // ξ = realize(0.1, -0.1) = (4.5, -0.5); η = (0.5, -0.5)
        let w = [4.5 - 0.5, -0.5 + 0.5];
        assert!(membership_w(&eta, &xs, &w).unwrap());
        assert!(!membership_w(&eta, &xs, &[100.0, 0.0]).unwrap());
    }
}
