//! Support vector clustering with the weighted generalized intersection kernel
//! `K(w, v) = δ − ‖Q (w − v)‖₁`.
//!
//! The induced set `{w : Σ_{i∈SV} α_i ‖Q(w − w_i)‖₁ ≤ θ}` is a polytope.

use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvcTrainConfig {
    pub nu: f64,
    /// Kernel offset. `None` uses 10 × the largest pairwise weighted distance.
    pub delta: Option<f64>,
    /// Diagonal added to the sample covariance. `None` uses `1e-8 · tr(Σ) / H`.
    pub covariance_ridge: Option<f64>,
    /// Stopping tolerance on the maximal KKT violation, relative to the
    /// largest pairwise distance.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvcTrainConfig {
    fn default() -> Self {
        Self {
            nu: 0.1,
            delta: None,
            covariance_ridge: None,
            tolerance: 1e-12,
            max_iter: 10_000_000,
        }
    }
}

impl SvcTrainConfig {
    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::Validation(format!("nu must lie in (0, 1), got {}", self.nu)));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Validation(format!("delta must be positive, got {d}")));
            }
        }
        if let Some(r) = self.covariance_ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::Validation(format!("covariance_ridge must be >= 0, got {r}")));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Validation("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// A trained SVC set description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SvcModelFile", into = "SvcModelFile")]
pub struct SvcModel {
    pub sv_points: Vec<DVector<f64>>,
    pub alphas: Vec<f64>,
    pub q_matrix: DMatrix<f64>,
    pub theta: f64,
    pub delta: f64,
    /// Upper multiplier bound `1 / (N ν)`.
    pub alpha_bound: f64,
    /// Indices of the support vectors in the training sample list.
    pub sv_index: Vec<usize>,
    pub bsv_index: Vec<usize>,
    pub n_train: usize,
    pub config: SvcTrainConfig,
    // Q w_i for every support vector
    weighted: Vec<DVector<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SvcModelFile {
    dimension: usize,
    sv_points: Vec<Vec<f64>>,
    alphas: Vec<f64>,
    q_matrix: Vec<Vec<f64>>,
    theta: f64,
    delta: f64,
    alpha_bound: f64,
    sv_index: Vec<usize>,
    bsv_index: Vec<usize>,
    n_train: usize,
    config: SvcTrainConfig,
}

impl From<SvcModel> for SvcModelFile {
    fn from(m: SvcModel) -> Self {
        let h = m.dim();
        Self {
            dimension: h,
            sv_points: m.sv_points.iter().map(|p| p.as_slice().to_vec()).collect(),
            alphas: m.alphas,
            q_matrix: (0..h).map(|r| m.q_matrix.row(r).iter().copied().collect()).collect(),
            theta: m.theta,
            delta: m.delta,
            alpha_bound: m.alpha_bound,
            sv_index: m.sv_index,
            bsv_index: m.bsv_index,
            n_train: m.n_train,
            config: m.config,
        }
    }
}

impl TryFrom<SvcModelFile> for SvcModel {
    type Error = Error;

    fn try_from(f: SvcModelFile) -> Result<Self> {
        let h = f.dimension;
        ensure_len("q_matrix rows", h, f.q_matrix.len())?;
        for row in &f.q_matrix {
            ensure_len("q_matrix columns", h, row.len())?;
        }
        let q = DMatrix::from_fn(h, h, |r, c| f.q_matrix[r][c]);
        let points = f
            .sv_points
            .into_iter()
            .map(DVector::from_vec)
            .collect::<Vec<_>>();
        let model = SvcModel::from_parts(points, f.alphas, q, f.theta)?;
        Ok(SvcModel {
            delta: f.delta,
            alpha_bound: f.alpha_bound,
            sv_index: f.sv_index,
            bsv_index: f.bsv_index,
            n_train: f.n_train,
            config: f.config,
            ..model
        })
    }
}

impl SvcModel {
    /// Builds a model directly from its set description. Bookkeeping fields
    /// (indices, δ, bound) get neutral values.
    pub fn from_parts(
        sv_points: Vec<DVector<f64>>,
        alphas: Vec<f64>,
        q_matrix: DMatrix<f64>,
        theta: f64,
    ) -> Result<Self> {
        if sv_points.is_empty() {
            return Err(Error::EmptySupport);
        }
        ensure_len("alphas", sv_points.len(), alphas.len())?;
        let h = q_matrix.nrows();
        if q_matrix.ncols() != h {
            return Err(Error::Dimension {
                context: "q_matrix columns",
                expected: h,
                got: q_matrix.ncols(),
            });
        }
        for p in &sv_points {
            ensure_len("support vector", h, p.len())?;
        }
        for &a in &alphas {
            ensure_finite("alpha", a)?;
            if a <= 0.0 {
                return Err(Error::Validation(format!("support vector multipliers must be > 0, got {a}")));
            }
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::Validation(format!("theta must be >= 0, got {theta}")));
        }
        let weighted = sv_points.iter().map(|p| &q_matrix * p).collect();
        let n = sv_points.len();
        Ok(Self {
            sv_index: (0..n).collect(),
            bsv_index: Vec::new(),
            n_train: n,
            alpha_bound: 1.0,
            delta: 1.0,
            config: SvcTrainConfig::default(),
            sv_points,
            alphas,
            q_matrix,
            theta,
            weighted,
        })
    }

    pub fn dim(&self) -> usize {
        self.q_matrix.nrows()
    }

    pub fn num_sv(&self) -> usize {
        self.sv_points.len()
    }

    /// `Q w_i` for each support vector.
    pub fn weighted_points(&self) -> &[DVector<f64>] {
        &self.weighted
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        Self {
            theta,
            ..self.clone()
        }
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        svc_distance(self, w) <= self.theta + tol
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn wgik(w: &[f64], v: &[f64], q_matrix: &DMatrix<f64>, delta: f64) -> Result<f64> {
    ensure_len("wgik argument", q_matrix.ncols(), w.len())?;
    ensure_len("wgik argument", q_matrix.ncols(), v.len())?;
    let d = DVector::from_iterator(w.len(), w.iter().zip(v).map(|(a, b)| a - b));
    Ok(delta - (q_matrix * d).lp_norm(1))
}

/// `Σ_{i∈SV} α_i ‖Q (w − w_i)‖₁`. Panics on a dimension mismatch.
pub fn svc_distance(model: &SvcModel, w: &[f64]) -> f64 {
    assert_eq!(w.len(), model.dim(), "svc_distance: dimension mismatch");
    let qw = &model.q_matrix * DVector::from_column_slice(w);
    weighted_distance(model, &qw)
}

/// Same as [`svc_distance`] with `Q w` precomputed.
pub fn weighted_distance(model: &SvcModel, qw: &DVector<f64>) -> f64 {
    model
        .alphas
        .iter()
        .zip(&model.weighted)
        .map(|(a, p)| a * qw.iter().zip(p.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum()
}

/// Sample covariance with `N − 1` normalisation.
pub fn sample_covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let n = samples.len();
    let h = samples[0].len();
    let mean = samples.iter().fold(DVector::zeros(h), |acc, s| acc + s) / n as f64;
    let mut cov = DMatrix::zeros(h, h);
    for s in samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    cov / ((n.max(2) - 1) as f64)
}

/// `Q = (Σ + ridge I)^(−1/2)` through the symmetric eigendecomposition.
pub fn weighting_matrix(samples: &[DVector<f64>], ridge: Option<f64>) -> Result<DMatrix<f64>> {
    let h = samples[0].len();
    let cov = sample_covariance(samples);
    let trace = cov.trace();
    if trace <= 0.0 {
        // every sample identical: any weighting gives the same single-point set
        return Ok(DMatrix::identity(h, h));
    }
    let ridge = ridge.unwrap_or(1e-8 * trace / h as f64);
    let reg = cov + DMatrix::identity(h, h) * ridge;
    let eig = SymmetricEigen::new(reg);
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if min_eig <= 1e-14 * max_eig {
        return Err(Error::DegenerateCovariance { min_eig });
    }
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let q = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    // symmetrize away rounding
    Ok((&q + q.transpose()) * 0.5)
}

fn pairwise_distances(weighted: &[DVector<f64>]) -> DMatrix<f64> {
    let n = weighted.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (&weighted[i] - &weighted[j]).lp_norm(1);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Solves `min_α −αᵀDα` over `{0 ≤ α ≤ C, Σα = 1}`, which is the SVC dual
/// with the constant `δ` cancelled. Returns the multipliers and the
/// iteration count.
fn smo(d: &DMatrix<f64>, c: f64, tol: f64, max_iter: usize) -> (Vec<f64>, usize) {
    let n = d.nrows();
    let mut alpha = vec![0.0; n];
    let mut rest: f64 = 1.0;
    for a in alpha.iter_mut() {
        if rest <= 0.0 {
            break;
        }
        let v = rest.min(c);
        *a = v;
        rest -= v;
    }
    // gradient of −αᵀDα
    let mut grad: Vec<f64> = (0..n)
        .map(|i| -2.0 * (0..n).map(|j| d[(i, j)] * alpha[j]).sum::<f64>())
        .collect();
    let mut iter = 0;
    while iter < max_iter {
        // i: steepest ascent candidate in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if alpha[t] < c && -grad[t] > gmax {
                gmax = -grad[t];
                i_sel = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if alpha[t] <= 0.0 {
                continue;
            }
            gmin = gmin.min(-grad[t]);
            if i_sel == usize::MAX {
                continue;
            }
            let b = gmax + grad[t];
            if b > 0.0 {
                let a = (4.0 * d[(i_sel, t)]).max(1e-12);
                let score = -b * b / a;
                if score < best {
                    best = score;
                    j_sel = t;
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax - gmin <= tol {
            break;
        }
        let (i, j) = (i_sel, j_sel);
        let a = (4.0 * d[(i, j)]).max(1e-12);
        let mut s = (grad[j] - grad[i]) / a;
        let cap_i = c - alpha[i];
        let cap_j = alpha[j];
        let mut hit_i = false;
        let mut hit_j = false;
        if s >= cap_i {
            s = cap_i;
            hit_i = true;
        }
        if s >= cap_j {
            s = cap_j;
            hit_j = true;
            hit_i = cap_i == cap_j;
        }
        alpha[i] = if hit_i { c } else { alpha[i] + s };
        alpha[j] = if hit_j { 0.0 } else { alpha[j] - s };
        for t in 0..n {
            grad[t] += 2.0 * s * (d[(t, j)] - d[(t, i)]);
        }
        iter += 1;
    }
    if iter >= max_iter {
        warn!("SVC dual solver stopped at the iteration limit ({max_iter})");
    }
    (alpha, iter)
}

pub fn train_svc(samples: &[Vec<f64>], config: &SvcTrainConfig) -> Result<SvcModel> {
    config.validate()?;
    if samples.len() < 2 {
        return Err(Error::Validation(format!(
            "SVC training needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let h = samples[0].len();
    if h == 0 {
        return Err(Error::Validation("samples must have positive dimension".into()));
    }
    for s in samples {
        ensure_len("training sample", h, s.len())?;
        for &v in s {
            ensure_finite("training sample", v)?;
        }
    }
    let points: Vec<DVector<f64>> = samples.iter().map(|s| DVector::from_column_slice(s)).collect();
    let q = weighting_matrix(&points, config.covariance_ridge)?;
    let weighted: Vec<DVector<f64>> = points.iter().map(|p| &q * p).collect();
    let dist = pairwise_distances(&weighted);
    let dmax = dist.max();
    let n = points.len();
    let c = 1.0 / (n as f64 * config.nu);
    let delta = config.delta.unwrap_or(if dmax > 0.0 { 10.0 * dmax } else { 1.0 });
    if delta <= dmax {
        warn!("kernel offset delta = {delta} does not exceed the largest weighted distance {dmax}");
    }

    let (alpha, _) = smo(&dist, c, config.tolerance * dmax.max(f64::MIN_POSITIVE), config.max_iter);

    let sv_index: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0).collect();
    let bsv_index: Vec<usize> = sv_index.iter().copied().filter(|&i| alpha[i] < c).collect();
    let sv_points: Vec<DVector<f64>> = sv_index.iter().map(|&i| points[i].clone()).collect();
    let alphas: Vec<f64> = sv_index.iter().map(|&i| alpha[i]).collect();
    let dist_of = |i: usize| -> f64 { sv_index.iter().map(|&j| alpha[j] * dist[(i, j)]).sum() };

    let theta = if dmax == 0.0 {
        0.0
    } else if bsv_index.is_empty() {
        warn!("SVC solution has no boundary support vector; using the largest training distance as radius");
        (0..n).map(dist_of).fold(0.0, f64::max)
    } else {
        let vals: Vec<f64> = bsv_index.iter().map(|&i| dist_of(i)).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-6 * hi.max(1.0) {
            warn!("boundary support vectors disagree on the radius (spread {:.3e})", hi - lo);
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    };

    let model = SvcModel::from_parts(sv_points, alphas, q, theta)?;
    Ok(SvcModel {
        sv_index,
        bsv_index,
        n_train: n,
        alpha_bound: c,
        delta,
        config: *config,
        ..model
    })
}

/// Spread of the BSV distances, the quantity asserted small after training.
pub fn bsv_spread(model: &SvcModel, samples: &[Vec<f64>]) -> f64 {
    let vals: Vec<f64> = model.bsv_index.iter().map(|&i| svc_distance(model, &samples[i])).collect();
    if vals.is_empty() {
        return 0.0;
    }
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}
