use std::sync::Arc;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ddrmpc_core::control::{Controller, ControllerConfig, CostSpec, Forecast};
use ddrmpc_core::dynamics::{build_stacked, predict_trajectory, ConstraintSet, WaterBalanceParams};
use ddrmpc_core::robust::{assemble_gadf_program, lemma1_dual_block, theorem3_dual_block, PolicyKind, RobustProblem};
use ddrmpc_core::sim::{compute_metrics, run_closed_loop, DataSource, NamedController, SimulationPlan};
use ddrmpc_core::solver::{solve, solve_with, LinExpr, ProgramBuilder, SolverSettings};
use ddrmpc_core::svc::{svc_distance, train_svc, SvcTrainConfig};
use ddrmpc_core::uncertainty::{
    lifted_second_moment, membership_w, realize_xi, ConditionalSet, GuaranteeBudget, SvcSet, UncertaintyModel,
};
use ddrmpc_core::verify::enumerate::{extreme_candidates, level};
use ddrmpc_core::verify::random_svc_model;
use ddrmpc_core::verify::sample::hit_and_run;

fn seq(h: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, h)
}

fn samples(n: usize, h: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, h), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbations_only_affect_later_states(
        c in 0.001..0.5f64,
        x0 in 0.0..80.0f64,
        (u, v, w, j) in (1usize..10).prop_flat_map(|h| (seq(h, 0.0, 10.0), seq(h, -5.0, 20.0), seq(h, -5.0, 5.0), 0..h)),
        bump in -3.0..3.0f64,
        which in 0usize..3,
    ) {
        let h = u.len();
        let d = build_stacked(&WaterBalanceParams::new(c, h, 6.0).unwrap()).unwrap();
        let base = predict_trajectory(&d, x0, &u, &v, &w).unwrap();
        let (mut u2, mut v2, mut w2) = (u.clone(), v.clone(), w.clone());
        [&mut u2, &mut v2, &mut w2][which][j] += bump;
        let moved = predict_trajectory(&d, x0, &u2, &v2, &w2).unwrap();
        for t in 0..=j {
            prop_assert_eq!(base[t], moved[t]);
        }
        for t in j + 1..=h {
            let expect = bump * (1.0 - c).powi((t - 1 - j) as i32);
            prop_assert!((moved[t] - base[t] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectories_superpose(
        c in 0.001..0.5f64,
        (a, b) in (1usize..10).prop_flat_map(|h| {
            let one = move || (-50.0..50.0f64, seq(h, -10.0, 10.0), seq(h, -10.0, 10.0), seq(h, -10.0, 10.0));
            (one(), one())
        }),
    ) {
        let h = a.1.len();
        let d = build_stacked(&WaterBalanceParams::new(c, h, 6.0).unwrap()).unwrap();
        let add = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p + q).collect() };
        let xa = predict_trajectory(&d, a.0, &a.1, &a.2, &a.3).unwrap();
        let xb = predict_trajectory(&d, b.0, &b.1, &b.2, &b.3).unwrap();
        let zero = vec![0.0; h];
        let x0 = predict_trajectory(&d, 0.0, &zero, &zero, &zero).unwrap();
        let xab = predict_trajectory(&d, a.0 + b.0, &add(&a.1, &b.1), &add(&a.2, &b.2), &add(&a.3, &b.3)).unwrap();
        for t in 0..=h {
            let scale = 1.0 + xa[t].abs() + xb[t].abs();
            prop_assert!((xab[t] - xa[t] - xb[t] + x0[t]).abs() <= 1e-12 * scale * (h as f64 + 1.0));
        }
    }

    #[test]
    fn stacked_gains_follow_the_decay_pattern(c in 0.0..0.99f64, h in 1usize..15) {
        let d = build_stacked(&WaterBalanceParams::new(c.max(1e-6), h, 6.0).unwrap()).unwrap();
        for t in 0..=h {
            for j in 0..h {
                let expect = if j < t { (1.0 - c.max(1e-6)).powi((t - 1 - j) as i32) } else { 0.0 };
                prop_assert_eq!(d.bu_stack[(t, j)], expect);
                prop_assert_eq!(d.bv_stack[(t, j)], expect);
                prop_assert_eq!(d.bw_stack[(t, j)], expect);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn level_function_is_convex(seed in any::<u64>(), h in 1usize..4, t in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_svc_model(&mut rng, h, 4);
        let a = DVector::from_fn(h, |i, _| (seed.rotate_left(i as u32 * 7) % 1000) as f64 / 250.0 - 2.0);
        let b = DVector::from_fn(h, |i, _| (seed.rotate_right(i as u32 * 5 + 3) % 1000) as f64 / 250.0 - 2.0);
        let mid = &a * t + &b * (1.0 - t);
        prop_assert!(level(&m, &mid) <= t * level(&m, &a) + (1.0 - t) * level(&m, &b) + 1e-12);
    }

    #[test]
    fn training_outliers_bounded_by_nu(data in samples(40, 2), nu in 0.05..0.5f64) {
        let model = train_svc(&data, &SvcTrainConfig::default().with_nu(nu)).unwrap();
        let outside = data.iter().filter(|w| svc_distance(&model, w) > model.theta * (1.0 + 1e-9) + 1e-12).count();
        prop_assert!(outside as f64 / data.len() as f64 <= nu + 1e-9);
        let total: f64 = model.alphas.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(model.alphas.iter().all(|&a| a > 0.0 && a <= model.alpha_bound + 1e-12));
    }

    #[test]
    fn certificates_balance_exactly(seed in any::<u64>(), h in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_svc_model(&mut rng, h, 3);
        let a: Vec<LinExpr> = (0..h).map(|t| LinExpr::constant(t as f64 - 0.7)).collect();
        let bcoef: Vec<LinExpr> = (0..h).map(|t| LinExpr::constant(0.4 - t as f64)).collect();
        let mut b = ProgramBuilder::new();
        let l1 = lemma1_dual_block(&mut b, "eta", &a, &m);
        let t3 = theorem3_dual_block(&mut b, "xi", &a, &bcoef, &m);
        let mut obj = l1.value.clone();
        obj.add_scaled(&t3.value, 1.0);
        b.add_linear_objective(&obj);
        let sol = solve(&b.build()).unwrap();
        prop_assert!(sol.is_optimal());
        for block in [&l1, &t3] {
            let cert = block.certificate(&sol.x);
            prop_assert!(cert.balance_residual(&block.alphas) <= 4.0 * f64::EPSILON * (1.0 + cert.k));
            prop_assert!(cert.lambda.iter().chain(&cert.mu).flatten().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn conditional_members_respect_rain_bounds(seed in any::<u64>(), phat in seq(3, 0.0, 50.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_svc_model(&mut rng, 3, 4);
        let set = ConditionalSet::new(SvcSet::new(m.clone()), phat.clone(), 50.0).unwrap();
        for v in extreme_candidates(&m, true, true).iter().chain(&hit_and_run(&m, 60, true, &mut rng)) {
            let xi = realize_xi(v.as_slice(), &phat, 50.0).unwrap();
            for t in 0..3 {
                prop_assert!(xi[t] >= -phat[t] - 1e-9 && xi[t] <= 50.0 - phat[t] + 1e-9);
            }
            prop_assert!(set.contains(&xi, 1e-6).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn minkowski_membership_follows_from_components(seed in any::<u64>(), phat in seq(2, 0.0, 10.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta_m = random_svc_model(&mut rng, 2, 3);
        let xib_m = random_svc_model(&mut rng, 2, 3);
        let eta_set = SvcSet::new(eta_m.clone());
        let xi_set = ConditionalSet::new(SvcSet::new(xib_m.clone()), phat.clone(), 50.0).unwrap();
        let etas = hit_and_run(&eta_m, 10, false, &mut rng);
        let xibs = hit_and_run(&xib_m, 10, true, &mut rng);
        for (e, xb) in etas.iter().zip(&xibs) {
            let xi = realize_xi(xb.as_slice(), &phat, 50.0).unwrap();
            let w: Vec<f64> = xi.iter().zip(e.iter()).map(|(x, y)| x - y).collect();
            prop_assert!(membership_w(&eta_set, &xi_set, &w).unwrap());
        }
    }

    #[test]
    fn solved_policies_are_causal(seed in any::<u64>(), x0 in 31.0..40.0f64) {
        let h = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta = SvcSet::new(random_svc_model(&mut rng, h, 3));
        let xib = random_svc_model(&mut rng, h, 3);
        let xi = ConditionalSet::new(SvcSet::new(xib), vec![0.0, 3.0, 0.0], 50.0).unwrap();
        let d = build_stacked(&WaterBalanceParams::new(0.025, h, 6.0).unwrap()).unwrap();
        let cons = ConstraintSet::new(30.0, 10.0, h).unwrap();
        let v = vec![-1.0, 2.0, -1.0];
        let problem = RobustProblem {
            dynamics: &d,
            constraints: &cons,
            eta_set: &eta,
            xi_set: &xi,
            x0,
            v_forecast: &v,
            cost: CostSpec::nominal(),
            lifted_moments: None,
            soft: true,
        };
        let prog = assemble_gadf_program(&problem).unwrap();
        let sol = solve(&prog.program).unwrap();
        prop_assert!(sol.is_optimal());
        prop_assert!(prog.gadf_policy(&sol.x).is_causal());
    }

    #[test]
    fn controllers_stay_within_input_bounds(
        x0 in 0.0..80.0f64,
        et in seq(8, 0.0, 4.0),
        p in seq(8, 0.0, 20.0),
        kind in 0usize..5,
    ) {
        let params = WaterBalanceParams::new(0.025, 8, 6.0).unwrap();
        let cfg = match kind {
            0 => ControllerConfig::OpenLoop { a: 0.07, b: 6.4, period: 28 },
            1 => ControllerConfig::RuleBased { threshold: 33.0, dose: 3.0 },
            2 => ControllerConfig::Cempc { cost: CostSpec::nominal() },
            3 => ControllerConfig::NormRmpc { omega: 5.0 },
            _ => ControllerConfig::SpTracking { setpoint: 35.0 },
        };
        let mut ctrl = Controller::new(cfg, params, 30.0, 10.0).unwrap();
        let d = ctrl.decide(x0, &Forecast { et, p }, 0).unwrap();
        prop_assert!((0.0..=10.0).contains(&d.u));
    }
}

#[test]
fn ddrmpc_decision_ignores_training_order() {
    let h = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draw = |rng: &mut ChaCha8Rng, s: f64| -> Vec<Vec<f64>> {
        (0..50)
            .map(|_| (0..h).map(|_| s * rand::Rng::random_range(rng, -1.0..1.0)).collect())
            .collect()
    };
    let eta = draw(&mut rng, 0.8);
    let xib = draw(&mut rng, 0.3);
    let decide = |eta: &[Vec<f64>], xib: &[Vec<f64>]| -> f64 {
        let cfg = SvcTrainConfig::default().with_nu(0.2);
        let model = UncertaintyModel {
            eta: SvcSet::new(train_svc(eta, &cfg).unwrap()),
            xibar: SvcSet::new(train_svc(xib, &cfg).unwrap()),
            p_max: 50.0,
            budget: GuaranteeBudget::default(),
            lifted_second_moment: {
                let m = lifted_second_moment(xib, eta);
                (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
            },
        };
        let config = ControllerConfig::Ddrmpc {
            budget: GuaranteeBudget::default(),
            policy: PolicyKind::Gadf,
            cost: CostSpec::default(),
        };
        let mut ctrl = Controller::new(config, WaterBalanceParams::new(0.025, h, 6.0).unwrap(), 30.0, 10.0)
            .unwrap()
            .with_uncertainty(Arc::new(model))
            .with_settings(SolverSettings::with_tolerance(1e-10));
        let f = Forecast {
            et: vec![1.5, 2.0, 1.0],
            p: vec![0.0, 4.0, 0.0],
        };
        ctrl.decide(31.0, &f, 0).unwrap().u
    };
    let base = decide(&eta, &xib);
    let rev_eta: Vec<_> = eta.iter().rev().cloned().collect();
    let rev_xib: Vec<_> = xib.iter().rev().cloned().collect();
    let swapped = decide(&rev_eta, &rev_xib);
    assert!((base - swapped).abs() < 1e-6, "{base} vs {swapped}");
}

#[test]
fn tighter_tolerance_never_worsens_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let mut b = ProgramBuilder::new();
        let x = b.add_vars("x", 6, -10.0, 10.0);
        for r in 0..4 {
            let e = LinExpr::sum(x.iter().map(|&v| (v, rand::Rng::random_range(&mut rng, -1.0..1.0))));
            b.add_le(format!("r{r}"), e, rand::Rng::random_range(&mut rng, 0.0..2.0));
        }
        for &v in &x {
            b.add_squared(&(LinExpr::var(v) - LinExpr::constant(rand::Rng::random_range(&mut rng, -5.0..5.0))), 1.0);
        }
        let p = b.build();
        let loose = solve_with(&p, &SolverSettings::with_tolerance(1e-5)).unwrap();
        let tight = solve_with(&p, &SolverSettings::with_tolerance(1e-10)).unwrap();
        assert!(loose.is_optimal() && tight.is_optimal());
        assert!(tight.primal_residual <= loose.primal_residual + 1e-12);
    }
}

fn short_plan(seed: u64) -> SimulationPlan {
    let mut plan = SimulationPlan::synthetic_default(seed, seed + 1);
    if let DataSource::Synthetic { months, .. } = &mut plan.test {
        *months = 1;
    }
    plan.controllers.retain(|c| !matches!(c.config, ControllerConfig::Ddrmpc { .. }));
    plan.controllers.push(NamedController {
        name: "norm-rmpc".into(),
        config: ControllerConfig::NormRmpc { omega: 4.0 },
    });
    plan
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn closed_loop_runs_are_deterministic_and_conserve_water(seed in 0u64..1000) {
        let plan = short_plan(seed);
        let a = run_closed_loop(&plan).unwrap();
        let b = run_closed_loop(&plan).unwrap();
        let ra = serde_json::to_string(&compute_metrics(a.traces.values()).without_timing()).unwrap();
        let rb = serde_json::to_string(&compute_metrics(b.traces.values()).without_timing()).unwrap();
        prop_assert_eq!(ra, rb);
        for trace in a.traces.values() {
            prop_assert!(trace.error.is_none());
            prop_assert!(trace.conservation_residual() <= 1e-8);
            prop_assert!(trace.replay_error() <= 1e-10);
            prop_assert!(trace.rows.iter().all(|r| r.u >= 0.0 && r.u <= plan.u_max));
        }
        let report = compute_metrics(a.traces.values());
        for c in &report.controllers {
            let monthly: f64 = c.months.iter().map(|m| m.irrigation).sum();
            prop_assert!((monthly - c.total_irrigation).abs() <= 1e-9);
            prop_assert!((0.0..=100.0).contains(&c.violation_pct));
        }
    }
}
