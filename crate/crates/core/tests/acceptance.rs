//! One PASS/FAIL line per acceptance criterion, followed by the closed-loop
//! properties checked on the same case-study run. Exits non-zero on failure.

use std::process::ExitCode;

use ddrmpc_core::verify::{
    check_calibration, check_case_study, check_degenerate, check_dominance, check_lemma1, check_micro,
    check_robust_feasibility, check_solve_time, check_theorem3, CaseStudy, CriterionOutcome, SuiteOptions,
};

fn line(ok: bool, name: &str, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() -> ExitCode {
    let s = SuiteOptions::default().seed;
    let mut outcomes: Vec<CriterionOutcome> = Vec::new();
    let mut show = |o: CriterionOutcome| {
        println!("{o}");
        outcomes.push(o);
    };
    show(check_lemma1(s));
    show(check_theorem3(s + 1));
    show(check_dominance(s + 2));
    show(check_calibration(s + 3));
    show(check_robust_feasibility(s + 4));
    show(check_degenerate(s + 5));
    let case = CaseStudy::run(s);
    let mut extra_ok = true;
    match &case {
        Ok(case) => {
            show(check_case_study(case));
            show(check_solve_time(case));
        }
        Err(e) => {
            println!("FAIL criterion 7: synthetic case study: error: {e}");
            println!("FAIL criterion 8: DDRMPC solve time: error: {e}");
            extra_ok = false;
        }
    }
    show(check_micro(s + 7));

    if let Ok(case) = &case {
        let r = &case.report;
        let total = |n: &str| r.get(n).map_or(f64::NAN, |c| c.total_irrigation);
        let (ol, rb, dd) = (total("open-loop"), total("rule-based"), total("ddrmpc"));
        extra_ok &= line(
            ol > rb && rb > dd,
            "irrigation ordering",
            format!("open-loop {ol:.2} > rule-based {rb:.2} > DDRMPC {dd:.2} mm"),
        );
        let worst_conservation = case
            .outcome
            .traces
            .values()
            .map(|t| t.conservation_residual())
            .fold(0.0, f64::max);
        extra_ok &= line(
            worst_conservation <= 1e-8,
            "conservation audit",
            format!("largest residual {worst_conservation:.2e} mm"),
        );
        let worst_replay = case.outcome.traces.values().map(|t| t.replay_error()).fold(0.0, f64::max);
        extra_ok &= line(
            worst_replay <= 1e-10,
            "trace replay",
            format!("largest one-step mismatch {worst_replay:.2e} mm"),
        );
        println!("{}", r.render_markdown());
        println!("{}", r.render_timing_markdown());
    }

    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    if passed == outcomes.len() && extra_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
