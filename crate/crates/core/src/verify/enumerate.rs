//! Brute-force worst cases over SVC level sets by walking the lines cut out
//! by `H − 1` kink or box hyperplanes.

use nalgebra::{DMatrix, DVector};

use crate::svc::SvcModel;

/// Hyperplane `n·w = c`.
#[derive(Debug, Clone)]
struct Plane {
    n: DVector<f64>,
    c: f64,
}

fn kink_planes(model: &SvcModel) -> Vec<Plane> {
    let h = model.dim();
    let mut out = Vec::new();
    for m in 0..h {
        let n: DVector<f64> = model.q_matrix.row(m).transpose();
        let mut offsets: Vec<f64> = model.sv_points.iter().map(|p| n.dot(p)).collect();
        offsets.sort_by(f64::total_cmp);
        offsets.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
        out.extend(offsets.into_iter().map(|c| Plane { n: n.clone(), c }));
    }
    out
}

fn axis_planes(h: usize, values: &[f64]) -> Vec<Plane> {
    let mut out = Vec::new();
    for t in 0..h {
        for &v in values {
            let mut n = DVector::zeros(h);
            n[t] = 1.0;
            out.push(Plane { n, c: v });
        }
    }
    out
}

/// `Σ_i α_i ‖Q(w − w_i)‖₁` written out term by term.
pub fn level(model: &SvcModel, w: &DVector<f64>) -> f64 {
    model
        .sv_points
        .iter()
        .zip(&model.alphas)
        .map(|(p, a)| a * (&model.q_matrix * (w - p)).abs().sum())
        .sum()
}

/// Interval `{s : level(p + s d) ≤ θ}` or `None` when empty.
pub(crate) fn sublevel_interval(
    model: &SvcModel,
    p: &DVector<f64>,
    d: &DVector<f64>,
    theta: f64,
    tol: f64,
) -> Option<(f64, f64)> {
    let qd = &model.q_matrix * d;
    let scale = model.q_matrix.abs().max() * d.abs().max();
    let bases: Vec<DVector<f64>> = model.sv_points.iter().map(|w| &model.q_matrix * (p - w)).collect();
    let f_at = |s: f64| -> f64 {
        bases
            .iter()
            .zip(&model.alphas)
            .map(|(v, a)| a * v.iter().zip(qd.iter()).map(|(x, y)| (x + s * y).abs()).sum::<f64>())
            .sum()
    };
    // breakpoint position and the slope increase it causes
    let mut breaks: Vec<(f64, f64)> = Vec::new();
    for (v, a) in bases.iter().zip(&model.alphas) {
        for m in 0..v.len() {
            if qd[m].abs() > 1e-12 * scale {
                breaks.push((-v[m] / qd[m], 2.0 * a * qd[m].abs()));
            }
        }
    }
    let total: f64 = breaks.iter().map(|b| b.1).sum::<f64>() / 2.0;
    if breaks.is_empty() || total <= 0.0 {
        return (f_at(0.0) <= theta + tol).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = breaks.len();
    let pos: Vec<f64> = breaks.iter().map(|b| b.0).collect();
    // slope[k]: slope just right of breakpoint k
    let mut slope = Vec::with_capacity(n);
    let mut acc = -total;
    for b in &breaks {
        acc += b.1;
        slope.push(acc);
    }
    // walk outwards from the breakpoint nearest the base point to limit cancellation
    let anchor = (0..n).min_by(|&i, &j| pos[i].abs().total_cmp(&pos[j].abs())).expect("nonempty");
    let mut val = vec![0.0; n];
    val[anchor] = f_at(pos[anchor]);
    for k in anchor + 1..n {
        val[k] = val[k - 1] + slope[k - 1] * (pos[k] - pos[k - 1]);
    }
    for k in (0..anchor).rev() {
        val[k] = val[k + 1] - slope[k] * (pos[k + 1] - pos[k]);
    }
    let (k_min, _) = val
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let f_min = f_at(pos[k_min]);
    if f_min > theta + tol {
        return None;
    }
    let cross = |s0: f64, s1: f64| -> f64 {
        let (f0, f1) = (f_at(s0), f_at(s1));
        if (f1 - f0).abs() < 1e-300 {
            s1
        } else {
            s0 + (theta - f0) * (s1 - s0) / (f1 - f0)
        }
    };
    let mut lo = pos[0] - (theta - f_at(pos[0])).max(0.0) / total;
    for k in (0..k_min).rev() {
        if val[k] > theta {
            lo = cross(pos[k + 1], pos[k]);
            break;
        }
    }
    let last = n - 1;
    let mut hi = pos[last] + (theta - f_at(pos[last])).max(0.0) / total;
    for k in k_min + 1..=last {
        if val[k] > theta {
            hi = cross(pos[k - 1], pos[k]);
            break;
        }
    }
    Some((lo.min(pos[k_min]), hi.max(pos[k_min])))
}

/// Point and direction of the line `{w : N w = c}` for `H − 1` planes, if
/// they are independent.
fn line_of(planes: &[&Plane], h: usize) -> Option<(DVector<f64>, DVector<f64>)> {
    if planes.is_empty() {
        return None;
    }
    let n = DMatrix::from_fn(planes.len(), h, |r, c| planes[r].n[c]);
    let c = DVector::from_iterator(planes.len(), planes.iter().map(|p| p.c));
    let svd = n.transpose().svd(true, false);
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().any(|&s| s <= 1e-10 * smax.max(1.0)) {
        return None;
    }
    // orthonormal basis of the row space; the direction is its complement
    let basis = svd.u?;
    let d = (0..h).find_map(|e| {
        let mut v = DVector::zeros(h);
        v[e] = 1.0;
        let r = &v - &basis * (basis.transpose() * &v);
        (r.norm() > 1e-6).then(|| r.normalize())
    })?;
    let p = n.clone().pseudo_inverse(1e-12).ok()? * c;
    Some((p, d))
}

fn combinations(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        if idx[i] == i + n - k {
            return;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Candidate extreme points of `{w : level(w) ≤ θ}` intersected with the
/// optional box `[-1, 1]^H`, refined by the hyperplanes `w_t = 0` when
/// `orthants` is set. The maximum of a function that is linear on every
/// orthant is attained at one of them.
pub fn extreme_candidates(model: &SvcModel, unit_box: bool, orthants: bool) -> Vec<DVector<f64>> {
    let h = model.dim();
    let theta = model.theta;
    let tol = 1e-9 * (1.0 + theta);
    let mut planes = kink_planes(model);
    let mut axis_values = Vec::new();
    if unit_box {
        axis_values.extend([-1.0, 1.0]);
    }
    if orthants {
        axis_values.push(0.0);
    }
    planes.extend(axis_planes(h, &axis_values));
    let inside_box = |w: &DVector<f64>| !unit_box || w.iter().all(|v| v.abs() <= 1.0 + 1e-9);
    let mut out = Vec::new();
    if h == 1 {
        let p = DVector::zeros(1);
        let d = DVector::from_element(1, 1.0);
        if let Some((lo, hi)) = sublevel_interval(model, &p, &d, theta, tol) {
            for s in [lo, hi] {
                if s.is_finite() {
                    out.push(DVector::from_element(1, s));
                }
            }
        }
    } else {
        combinations(planes.len(), h - 1, |idx| {
            let chosen: Vec<&Plane> = idx.iter().map(|&i| &planes[i]).collect();
            if let Some((p, d)) = line_of(&chosen, h) {
                if let Some((lo, hi)) = sublevel_interval(model, &p, &d, theta, tol) {
                    for s in [lo, hi] {
                        if s.is_finite() {
                            let w = &p + &d * s;
                            if inside_box(&w) {
                                out.push(w);
                            }
                        }
                    }
                }
            }
        });
    }
    if !axis_values.is_empty() {
        let n = axis_values.len();
        let total = n.pow(h as u32);
        for code in 0..total {
            let mut c = code;
            let w = DVector::from_fn(h, |_, _| {
                let v = axis_values[c % n];
                c /= n;
                v
            });
            if level(model, &w) <= theta + tol {
                out.push(w);
            }
        }
    }
    if unit_box {
        for w in &mut out {
            w.apply(|v| *v = v.clamp(-1.0, 1.0));
        }
    }
    out
}

/// `max aᵀη` over the SVC set by enumeration.
pub fn lemma1_worst_case(model: &SvcModel, a: &[f64]) -> f64 {
    let a = DVector::from_column_slice(a);
    extreme_candidates(model, false, false)
        .iter()
        .map(|w| a.dot(w))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Best value of `a_t ξ⁺_t + b_t ξ⁻_t` with `ξ⁺_t − ξ⁻_t = x` and both in `[0, 1]`.
pub fn split_value(a: f64, b: f64, x: f64) -> f64 {
    let lo = x.max(0.0);
    let hi = (1.0 + x).min(1.0);
    let plus = if a + b >= 0.0 { hi } else { lo };
    a * plus + b * (plus - x)
}

/// `max aᵀξ⁺ + bᵀξ⁻` over `ξ⁺ − ξ⁻` in the SVC set and `0 ≤ ξ± ≤ 1` by
/// enumeration.
pub fn theorem3_worst_case(model: &SvcModel, a: &[f64], b: &[f64]) -> f64 {
    extreme_candidates(model, true, true)
        .iter()
        .map(|x| x.iter().enumerate().map(|(t, &v)| split_value(a[t], b[t], v)).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `max aᵀw` over `‖w‖₁ ≤ Ω` by checking the `2H` vertices `±Ω e_j`.
pub fn cross_polytope_worst_case(a: &[f64], omega: f64) -> f64 {
    let h = a.len();
    let mut best = if h == 0 { 0.0 } else { f64::NEG_INFINITY };
    for j in 0..h {
        for sign in [1.0, -1.0] {
            let vertex: Vec<f64> = (0..h).map(|t| if t == j { sign * omega } else { 0.0 }).collect();
            best = best.max(a.iter().zip(&vertex).map(|(x, y)| x * y).sum());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval() -> SvcModel {
        SvcModel::from_parts(vec![DVector::zeros(1)], vec![1.0], DMatrix::identity(1, 1), 1.0).unwrap()
    }

    #[test]
    fn interval_worst_case() {
        assert!((lemma1_worst_case(&interval(), &[2.0]) - 2.0).abs() < 1e-12);
        assert!((lemma1_worst_case(&interval(), &[-3.0]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn diamond_vertices() {
        // ‖w‖₁ ≤ 2 in the plane
        let m = SvcModel::from_parts(vec![DVector::zeros(2)], vec![1.0], DMatrix::identity(2, 2), 2.0).unwrap();
        assert!((lemma1_worst_case(&m, &[1.0, 0.5]) - 2.0).abs() < 1e-12);
        assert!((lemma1_worst_case(&m, &[1.0, 1.0]) - 2.0).abs() < 1e-12);
        assert!((lemma1_worst_case(&m, &[-0.2, 3.0]) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn box_dominant_lifted() {
        let m = SvcModel::from_parts(vec![DVector::zeros(2)], vec![1.0], DMatrix::identity(2, 2), 10.0).unwrap();
        let v = theorem3_worst_case(&m, &[1.5, -2.0], &[-0.5, 3.0]);
        assert!((v - 4.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn split_value_cases() {
        assert_eq!(split_value(1.0, 1.0, 0.0), 2.0);
        assert_eq!(split_value(-1.0, -1.0, 0.0), 0.0);
        assert_eq!(split_value(1.0, -1.0, -0.5), -0.5);
        assert_eq!(split_value(0.0, 2.0, -1.0), 2.0);
    }

    #[test]
    fn cross_polytope() {
        assert_eq!(cross_polytope_worst_case(&[1.0, -3.0, 2.0], 0.5), 1.5);
        assert_eq!(cross_polytope_worst_case(&[0.0, 0.0], 2.0), 0.0);
    }

    #[test]
    fn interval_endpoints_lie_on_the_level_surface() {
        let pts = vec![
            DVector::from_vec(vec![0.3, -0.2]),
            DVector::from_vec(vec![-0.5, 0.7]),
            DVector::from_vec(vec![0.9, 0.1]),
        ];
        let q = DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8]);
        let m = SvcModel::from_parts(pts, vec![0.5, 0.3, 0.2], q, 1.0).unwrap();
        let mut hits = 0;
        for k in 0..20 {
            let ang = k as f64 * 0.37;
            let d = DVector::from_vec(vec![ang.cos(), ang.sin()]);
            let p = DVector::from_vec(vec![0.1 * k as f64 - 1.0, 0.2]);
            if let Some((lo, hi)) = sublevel_interval(&m, &p, &d, m.theta, 0.0) {
                hits += 1;
                assert!(lo <= hi);
                for s in [lo, hi] {
                    assert!((level(&m, &(&p + &d * s)) - 1.0).abs() < 1e-12);
                }
                assert!(level(&m, &(&p + &d * (0.5 * (lo + hi)))) <= 1.0);
            }
        }
        assert!(hits > 10);
    }

    #[test]
    fn combinations_count() {
        let mut n = 0;
        combinations(6, 2, |_| n += 1);
        assert_eq!(n, 15);
        let mut n = 0;
        combinations(4, 4, |_| n += 1);
        assert_eq!(n, 1);
    }
}

