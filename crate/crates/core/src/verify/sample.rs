//! Random points inside learned sets and simple bounding boxes.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::enumerate::{level, sublevel_interval};
use crate::svc::SvcModel;
use crate::uncertainty::{ConditionalSet, SvcSet};

/// A point of the set to start a chain from: the support vector with the
/// smallest level, or `None` if every support vector lies outside.
pub fn interior_start(model: &SvcModel) -> Option<DVector<f64>> {
    model
        .sv_points
        .iter()
        .map(|p| (level(model, p), p))
        .filter(|(l, _)| *l <= model.theta)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p.clone())
}

fn chord(model: &SvcModel, x: &DVector<f64>, d: &DVector<f64>, unit_box: bool) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = sublevel_interval(model, x, d, model.theta, 0.0)?;
    if unit_box {
        for t in 0..x.len() {
            if d[t].abs() > 1e-15 {
                let a = (-1.0 - x[t]) / d[t];
                let b = (1.0 - x[t]) / d[t];
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
        }
    }
    (lo <= hi && lo.is_finite() && hi.is_finite()).then_some((lo, hi))
}

/// Hit-and-run over `{level ≤ θ}` (and `[-1, 1]^H` when `unit_box`). Every
/// step yields the new chain point and both chord endpoints, so the output
/// mixes interior and boundary points.
pub fn hit_and_run<R: Rng>(model: &SvcModel, count: usize, unit_box: bool, rng: &mut R) -> Vec<DVector<f64>> {
    let h = model.dim();
    let Some(mut x) = interior_start(model) else {
        return Vec::new();
    };
    if unit_box {
        x.apply(|v| *v = v.clamp(-1.0, 1.0));
        if level(model, &x) > model.theta {
            return Vec::new();
        }
    }
    let mut out = Vec::with_capacity(count);
    let mut stalls = 0;
    while out.len() < count && stalls < 1000 {
        let d = DVector::from_fn(h, |_, _| StandardNormal.sample(rng)).normalize();
        let Some((lo, hi)) = chord(model, &x, &d, unit_box) else {
            stalls += 1;
            continue;
        };
        let snap = |mut w: DVector<f64>| {
            if unit_box {
                w.apply(|v| *v = v.clamp(-1.0, 1.0));
            }
            w
        };
        for s in [lo, hi] {
            if out.len() < count {
                out.push(snap(&x + &d * s));
            }
        }
        let s = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        x = snap(&x + &d * s);
        if out.len() < count {
            out.push(x.clone());
        }
    }
    out
}

/// A decomposition `ξ⁺ − ξ⁻ = ξ̄` with both parts in `[0, 1]`, drawn at random
/// between its extremes.
pub fn random_split<R: Rng>(xibar: &[f64], rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut plus = Vec::with_capacity(xibar.len());
    let mut minus = Vec::with_capacity(xibar.len());
    for &x in xibar {
        let lo = x.max(0.0);
        let hi = (1.0 + x).min(1.0);
        let p = match rng.random_range(0..3) {
            0 => lo,
            1 => hi,
            _ => rng.random_range(lo..=hi.max(lo)),
        };
        plus.push(p);
        minus.push(p - x);
    }
    (plus, minus)
}

/// Coordinate bounds implied by each single term of the level function:
/// `α_i ‖Q(w − w_i)‖₁ ≤ θ` confines `w − w_i` to `Q⁻¹` times an ℓ1 ball.
pub fn bounding_box(model: &SvcModel) -> (Vec<f64>, Vec<f64>) {
    let h = model.dim();
    let qinv = model
        .q_matrix
        .clone()
        .try_inverse()
        .expect("weighting matrix is invertible");
    let mut lo = vec![f64::NEG_INFINITY; h];
    let mut hi = vec![f64::INFINITY; h];
    for (p, &a) in model.sv_points.iter().zip(&model.alphas) {
        if a <= 0.0 {
            continue;
        }
        let r = model.theta / a;
        for t in 0..h {
            let reach = r * qinv.row(t).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            lo[t] = lo[t].max(p[t] - reach);
            hi[t] = hi[t].min(p[t] + reach);
        }
    }
    (lo, hi)
}

/// Box containing `D_ξ(p̂) − D_η`.
pub fn minkowski_box(eta: &SvcSet, xi: &ConditionalSet) -> (Vec<f64>, Vec<f64>) {
    let (elo, ehi) = bounding_box(&eta.model);
    let lo = xi.phat.iter().zip(&ehi).map(|(p, e)| -p - e).collect();
    let hi = xi.phat.iter().zip(&elo).map(|(p, e)| xi.p_max - p - e).collect();
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_stay_inside() {
        let pts = vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.5]),
            DVector::from_vec(vec![-0.5, 1.0]),
        ];
        let m = SvcModel::from_parts(pts, vec![0.5, 0.25, 0.25], DMatrix::identity(2, 2), 1.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = hit_and_run(&m, 3000, false, &mut rng);
        assert_eq!(s.len(), 3000);
        let (lo, hi) = bounding_box(&m);
        for w in &s {
            assert!(level(&m, w) <= m.theta + 1e-9);
            for t in 0..2 {
                assert!(w[t] >= lo[t] - 1e-9 && w[t] <= hi[t] + 1e-9);
            }
        }
        let boxed = hit_and_run(&m, 500, true, &mut rng);
        assert!(boxed.iter().all(|w| w.iter().all(|v| v.abs() <= 1.0 + 1e-12)));
    }

    #[test]
    fn split_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let (p, m) = random_split(&x, &mut rng);
            for t in 0..4 {
                assert!((p[t] - m[t] - x[t]).abs() < 1e-15);
                assert!((0.0..=1.0).contains(&p[t]) && (-1e-15..=1.0 + 1e-15).contains(&m[t]));
            }
        }
    }
}
