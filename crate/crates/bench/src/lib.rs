//! Fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ddrmpc_core::dynamics::{build_stacked, ConstraintSet, StackedDynamics, WaterBalanceParams};
use ddrmpc_core::svc::{train_svc, SvcTrainConfig};
use ddrmpc_core::uncertainty::{lifted_second_moment, ConditionalSet, SvcSet};
use nalgebra::DMatrix;

/// `n` correlated Gaussian windows of length `h`, clipped to `[-1, 1]` when `unit` is set.
pub fn windows(seed: u64, n: usize, h: usize, unit: bool) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("valid");
    (0..n)
        .map(|_| {
            let mut prev: f64 = 0.0;
            (0..h)
                .map(|_| {
                    prev = 0.7 * prev + 0.3 * noise.sample(&mut rng);
                    if unit {
                        prev.clamp(-1.0, 1.0)
                    } else {
                        prev
                    }
                })
                .collect()
        })
        .collect()
}

/// A complete robust problem at horizon `h` with sets trained on 330 windows.
pub struct Fixture {
    pub dynamics: StackedDynamics,
    pub constraints: ConstraintSet,
    pub eta: SvcSet,
    pub xi: ConditionalSet,
    pub moments: DMatrix<f64>,
    pub v: Vec<f64>,
    pub x0: f64,
}

impl Fixture {
    pub fn new(h: usize) -> Self {
        let eta_w = windows(1, 330, h, false);
        let xib_w = windows(2, 330, h, true);
        let cfg = SvcTrainConfig::default();
        let eta = SvcSet::new(train_svc(&eta_w, &cfg).expect("training"));
        let xib = SvcSet::new(train_svc(&xib_w, &cfg).expect("training"));
        let phat: Vec<f64> = (0..h).map(|t| if t % 3 == 1 { 4.0 } else { 0.0 }).collect();
        let v = phat.iter().map(|p| p - 1.5).collect();
        Self {
            dynamics: build_stacked(&WaterBalanceParams::new(0.025, h, 6.0).expect("valid")).expect("valid"),
            constraints: ConstraintSet::new(30.0, 10.0, h).expect("valid"),
            eta,
            xi: ConditionalSet::new(xib, phat, 50.0).expect("valid"),
            moments: lifted_second_moment(&xib_w, &eta_w),
            v,
            x0: 36.0,
        }
    }
}
