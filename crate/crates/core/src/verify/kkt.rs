//! Dense active-set enumeration of the SVC dual for small sample counts.

use nalgebra::{DMatrix, DVector};

/// Kernel matrix `K_ij = δ − ‖Q(w_i − w_j)‖₁`.
pub fn kernel_matrix(samples: &[Vec<f64>], q: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let n = samples.len();
    DMatrix::from_fn(n, n, |i, j| {
        let diff = DVector::from_iterator(samples[i].len(), samples[i].iter().zip(&samples[j]).map(|(a, b)| a - b));
        delta - (q * diff).abs().sum()
    })
}

/// Dual objective `Σ α_i K_ii − Σ α_i α_j K_ij`.
pub fn dual_objective(k: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    let a = DVector::from_column_slice(alpha);
    k.diagonal().dot(&a) - a.dot(&(k * &a))
}

/// Maximizer of the dual over `0 ≤ α ≤ 1/(Nν)`, `Σα = 1`, found by trying
/// every assignment of each multiplier to its lower bound, upper bound or the
/// free set and keeping the best KKT point. Exponential in `N`; meant for
/// `N ≤ 8`.
pub fn svc_dual_brute_force(samples: &[Vec<f64>], q: &DMatrix<f64>, delta: f64, nu: f64) -> Vec<f64> {
    let n = samples.len();
    assert!(n <= 10, "brute force is exponential in the sample count");
    let k = kernel_matrix(samples, q, delta);
    let cap = 1.0 / (n as f64 * nu);
    let tol = 1e-10;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        // 0: at zero, 1: at the cap, 2: free
        let mut c = code;
        let state: Vec<u8> = (0..n)
            .map(|_| {
                let s = (c % 3) as u8;
                c /= 3;
                s
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { cap } else { 0.0 }).collect();
        let fixed_sum: f64 = alpha.iter().sum();
        // stationarity for free i: 2 (Kα)_i − K_ii + ν = 0, with Σα = 1
        if free.is_empty() {
            if (fixed_sum - 1.0).abs() > tol {
                continue;
            }
            let g: Vec<f64> = (0..n).map(|i| 2.0 * (0..n).map(|j| k[(i, j)] * alpha[j]).sum::<f64>() - k[(i, i)]).collect();
            // multiplier interval from the bound conditions
            let lo = (0..n).filter(|&i| state[i] == 0).map(|i| -g[i]).fold(f64::NEG_INFINITY, f64::max);
            let hi = (0..n).filter(|&i| state[i] == 1).map(|i| -g[i]).fold(f64::INFINITY, f64::min);
            if lo > hi + 1e-9 {
                continue;
            }
        } else {
            let f = free.len();
            let mut m = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (r, &i) in free.iter().enumerate() {
                for (cc, &j) in free.iter().enumerate() {
                    m[(r, cc)] = 2.0 * k[(i, j)];
                }
                m[(r, f)] = 1.0;
                m[(f, r)] = 1.0;
                let fixed: f64 = (0..n).filter(|&j| state[j] == 1).map(|j| k[(i, j)] * cap).sum();
                rhs[r] = k[(i, i)] - 2.0 * fixed;
            }
            rhs[f] = 1.0 - fixed_sum;
            let Some(sol) = m.lu().solve(&rhs) else { continue };
            if free.iter().enumerate().any(|(r, _)| sol[r] < -tol || sol[r] > cap + tol) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r].clamp(0.0, cap);
            }
            let nu_mult = sol[f];
            let g: Vec<f64> = (0..n).map(|i| 2.0 * (0..n).map(|j| k[(i, j)] * alpha[j]).sum::<f64>() - k[(i, i)]).collect();
            // at zero: g_i + ν ≥ 0; at the cap: g_i + ν ≤ 0
            let ok = (0..n).all(|i| match state[i] {
                0 => g[i] + nu_mult >= -1e-8,
                1 => g[i] + nu_mult <= 1e-8,
                _ => true,
            });
            if !ok {
                continue;
            }
        }
        let obj = dual_objective(&k, &alpha);
        if best.as_ref().is_none_or(|(b, _)| obj > *b + 1e-12) {
            best = Some((obj, alpha));
        }
    }
    best.expect("the dual is always feasible for ν ≤ 1").1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_points_on_a_line() {
        let s: Vec<Vec<f64>> = (-2..=2).map(|v| vec![v as f64]).collect();
        let a = svc_dual_brute_force(&s, &DMatrix::identity(1, 1), 40.0, 0.5);
        let expect = [0.4, 0.1, 0.0, 0.1, 0.4];
        for (x, y) in a.iter().zip(expect) {
            assert!((x - y).abs() < 1e-9, "{a:?}");
        }
    }
}
