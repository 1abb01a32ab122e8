//! Acceptance suite: every numbered criterion below runs at its stated
//! tolerance and prints one PASS line (failures panic with the measured
//! values). Run with `cargo test --test acceptance -- --nocapture` to see
//! the lines.

// several regression checks assert literal inequalities between published
// constants; that they hold is the point
#![allow(clippy::assertions_on_constants)]

use petc_core::builtin::{example1, example2_output, example2_state};
use petc_core::lmi::{
    build_gain_synthesis, build_linear_output_certificate, build_linear_state_certificate,
    build_output_certificate, build_output_coupling, build_state_certificate, refine_scalars,
    solve_feasibility, Assignment, SolveOptions, VerifyStatus,
};
use petc_core::sim::{
    monitor_lyapunov, monte_carlo_output, monte_carlo_state, run_output_feedback,
    run_state_feedback, SimConfig, StateLoop,
};
use petc_core::symmat::Mat;
use petc_core::systems::StateFeedbackGains;
use petc_core::timing::{
    integrate_phi, inter_sample_time, max_sampling_period, trigger_coefficient, TimingBase,
    TimingDesign,
};

fn check(name: &str, value: f64, target: f64, tol: f64) {
    assert!(
        (value - target).abs() <= tol,
        "{name}: {value} vs {target} (tol {tol})"
    );
}

#[test]
fn acceptance_01_timing_closed_forms() {
    let b1 = TimingBase::new(0.4941, 4.4302).unwrap();
    let b2 = TimingBase::new(5.0, 20.0).unwrap();
    let t = max_sampling_period(b1);
    let tt1 = inter_sample_time(b1, 0.6).unwrap();
    let tt2 = inter_sample_time(b2, 0.31).unwrap();
    check("T", t, 0.3314, 1e-3);
    check("window(0.6)", tt1, 0.100, 1e-3);
    check("window(0.31)", tt2, 0.040, 1e-3);
    println!("ACCEPTANCE 1 timing closed forms: PASS (T = {t:.4}, windows = {tt1:.4}, {tt2:.4})");
}

#[test]
fn acceptance_02_trigger_coefficients() {
    let c1 = trigger_coefficient(0.6, 0.1).unwrap();
    let c2 = trigger_coefficient(0.31, 0.04).unwrap();
    let c3 = trigger_coefficient(0.627, 0.02).unwrap();
    let c4 = trigger_coefficient(0.575, 0.02).unwrap();
    check("coef(0.6, 0.1)", c1, 1.0067, 1e-4);
    check("coef(0.31, 0.04)", c2, 2.90, 5e-3);
    check("coef(0.627, 0.02)", c3, 0.9554, 1e-4);
    check("coef(0.575, 0.02)", c4, 1.1526, 1e-4);
    println!("ACCEPTANCE 2 trigger coefficients: PASS ({c1:.4}, {c2:.4}, {c3:.4}, {c4:.4})");
}

#[test]
fn acceptance_03_parameter_constraint_regression() {
    // tuple (s=0.1, alpha0=1.1, h=0.1, lambda=0.6) on rates (0.4941, 4.4302)
    let lower1 = (1.0f64 + 0.1).ln() / 1.1;
    check("log(1.1)/1.1", lower1, 0.0866, 1e-4);
    assert!(lower1 < 0.1 && 0.1 < 0.3314 + 1e-3);
    assert!((1.0 + 0.1) * 0.6 * 0.6 < 1.0);
    let b1 = TimingBase::new(0.4941, 4.4302).unwrap();
    TimingDesign::new(b1, 0.6, 0.1, 0.1, 1.2, 1.1, 0.1)
        .unwrap()
        .validate()
        .unwrap();

    // tuple (s=0.04, alpha0=1, h=0.04, lambda=0.31) on rates (5, 20)
    let lower2 = (1.0f64 + 0.04).ln();
    assert!(lower2 < 0.04 && 0.04 < max_sampling_period(TimingBase::new(5.0, 20.0).unwrap()));
    assert!((1.0 + 0.04) * 0.31 * 0.31 < 1.0);
    let b2 = TimingBase::new(5.0, 20.0).unwrap();
    TimingDesign::new(b2, 0.31, 0.04, 0.04, 1.2, 1.0, 0.6)
        .unwrap()
        .validate()
        .unwrap();

    // dual-channel tuple (s=0.02, alpha0=1, h=0.02, lambdas 0.627/0.575)
    let ex = example2_output();
    ex.timing.validate().unwrap();
    let lower3 = (1.0f64 + 0.02).ln();
    assert!(lower3 < 0.02);
    assert!((1.0 + 0.02) * 0.627 * 0.627 < 1.0);
    assert!((1.0 + 0.02) * 0.575 * 0.575 < 1.0);
    println!("ACCEPTANCE 3 parameter-constraint regression: PASS (all three tuples admissible)");
}

#[test]
fn acceptance_04_lmi_verification_at_published_values() {
    let ex = example2_state();
    let inst = build_state_certificate(&ex.plant, &ex.gains, ex.alpha).unwrap();
    let mut a = Assignment::new();
    a.set_sym("P", ex.p.clone())
        .set_scalar("mu", 5.0)
        .set_scalar("gamma", 20.0)
        .set_scalar("d", 0.6)
        .set_scalar("sigma1", 0.0)
        .set_scalar("sigma2", 0.0);
    let (refined, _) = refine_scalars(&inst, &a, &["sigma1", "sigma2"], 0.0, 50.0, 0.1).unwrap();
    let report = inst.verify_with(&refined, 1e-6).unwrap();
    assert_eq!(report.status, VerifyStatus::Pass, "report: {report:?}");
    assert!(
        report.margin_rel <= 1e-6,
        "relative margin {} above 1e-6",
        report.margin_rel
    );
    println!(
        "ACCEPTANCE 4 LMI verification at published values: PASS (relative margin {:.2e}, \
         sigma = ({:.3}, {:.3}))",
        report.margin_rel,
        refined.scalar("sigma1").unwrap(),
        refined.scalar("sigma2").unwrap()
    );
}

#[test]
fn acceptance_05_lmi_solving_all_families() {
    let start = std::time::Instant::now();
    let ex = example2_state();

    let synth = build_gain_synthesis(&ex.plant, ex.alpha).unwrap();
    let r1 = solve_feasibility(&synth, SolveOptions::default()).unwrap();
    assert!(r1.is_feasible(), "gain synthesis: margin {}", r1.margin);
    assert_eq!(
        synth.verify_with(&r1.assignment, 0.0).unwrap().status,
        VerifyStatus::Pass
    );

    let state_cert = build_state_certificate(&ex.plant, &ex.gains, ex.alpha).unwrap();
    let r2 = solve_feasibility(&state_cert, SolveOptions::default()).unwrap();
    assert!(r2.is_feasible(), "state certificate: margin {}", r2.margin);
    assert_eq!(
        state_cert.verify_with(&r2.assignment, 0.0).unwrap().status,
        VerifyStatus::Pass
    );

    let exo = example2_output();
    let output_cert = build_output_certificate(&exo.plant, &exo.observer, exo.alpha).unwrap();
    let opts = SolveOptions {
        max_iter: 20_000,
        ..Default::default()
    };
    let r3 = solve_feasibility(&output_cert, opts).unwrap();
    assert!(r3.is_feasible(), "output certificate: margin {}", r3.margin);
    assert_eq!(
        output_cert.verify_with(&r3.assignment, 0.0).unwrap().status,
        VerifyStatus::Pass
    );
    let (a1, a2) = (
        r3.assignment.scalar("a1").unwrap(),
        r3.assignment.scalar("a2").unwrap(),
    );
    let (b1, b2) = (
        r3.assignment.scalar("b1").unwrap(),
        r3.assignment.scalar("b2").unwrap(),
    );
    let coupling = build_output_coupling(
        r3.assignment.sym("P").unwrap(),
        exo.plant.c.as_ref().unwrap(),
        (a1 / b1).sqrt(),
        (a2 / b2).sqrt(),
    )
    .unwrap();
    let r4 = solve_feasibility(&coupling, SolveOptions::default()).unwrap();
    assert!(r4.is_feasible(), "coupling: margin {}", r4.margin);
    assert_eq!(
        coupling.verify_with(&r4.assignment, 0.0).unwrap().status,
        VerifyStatus::Pass
    );

    // linear special cases on a double integrator
    let di = petc_core::systems::IqcPlant::new(
        Mat::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]),
        Mat::from_rows(&[&[0.0], &[1.0]]),
        Mat::zeros(2, 1),
        Mat::from_rows(&[&[0.0], &[1.0]]),
        Mat::from_rows(&[&[1.0, 0.0]]),
        Some(Mat::from_rows(&[&[1.0, 0.0]])),
        petc_core::iqc::Nonlinearity::sine(),
        petc_core::iqc::lipschitz_multiplier(1.0, 1, 1).unwrap(),
    )
    .unwrap();
    let k = Mat::from_rows(&[&[-1.0, -2.0]]);
    let lin_state = build_linear_state_certificate(&di, &k, 0.5).unwrap();
    let r5 = solve_feasibility(&lin_state, SolveOptions::default()).unwrap();
    assert!(r5.is_feasible(), "linear state: margin {}", r5.margin);
    assert_eq!(
        lin_state.verify_with(&r5.assignment, 0.0).unwrap().status,
        VerifyStatus::Pass
    );
    let l = Mat::from_rows(&[&[-2.0], &[-2.0]]);
    let lin_output = build_linear_output_certificate(&di, &k, &l, 0.4).unwrap();
    let r6 = solve_feasibility(
        &lin_output,
        SolveOptions {
            max_iter: 20_000,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(r6.is_feasible(), "linear output: margin {}", r6.margin);
    assert_eq!(
        lin_output.verify_with(&r6.assignment, 0.0).unwrap().status,
        VerifyStatus::Pass
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 60.0,
        "solver batch took {elapsed:.1}s, budget 60s"
    );
    println!(
        "ACCEPTANCE 5 LMI solving: PASS (six instances feasible and re-verified in {elapsed:.1}s)"
    );
}

#[test]
fn acceptance_06_state_frequency_table() {
    let ex = example1();
    let rows = monte_carlo_state(
        &StateLoop::General(&ex.plant),
        &ex.v1(),
        &ex.design,
        &ex.scenario,
        &ex.h_list,
        100,
        12345,
    )
    .unwrap();
    let targets = [0.666, 0.831, 0.891, 0.929];
    for (row, &target) in rows.iter().zip(&targets) {
        assert!(
            (row.f_avg - target).abs() <= 0.06,
            "h = {}: f_avg = {:.3} vs published {target} (tolerance 6pp)",
            row.h,
            row.f_avg
        );
    }
    for w in rows.windows(2) {
        assert!(
            w[1].f_avg > w[0].f_avg,
            "frequency must increase strictly with the period: {} -> {}",
            w[0].f_avg,
            w[1].f_avg
        );
    }
    let shown: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.1}%", 100.0 * r.f_avg))
        .collect();
    println!(
        "ACCEPTANCE 6 state-feedback frequency table: PASS ({} vs 66.6/83.1/89.1/92.9, ±6pp, \
         strictly increasing)",
        shown.join("/")
    );
}

#[test]
fn acceptance_07_output_frequency_table() {
    let start = std::time::Instant::now();
    let ex = example2_output();
    let rows = monte_carlo_output(
        &ex.plant,
        &ex.observer,
        &ex.quad_y(),
        &ex.quad_u(),
        &ex.timing,
        &ex.scenario,
        &ex.h_list,
        100,
        777,
    )
    .unwrap();
    let targets_y = [0.223, 0.400, 0.512, 0.599, 0.668];
    let targets_u = [0.161, 0.261, 0.321, 0.380, 0.417];
    let elapsed = start.elapsed().as_secs_f64();
    let shown: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.1}/{:.1}%", 100.0 * r.f_avg_y, 100.0 * r.f_avg_u))
        .collect();

    let mut failures = Vec::new();
    for ((row, &ty), &tu) in rows.iter().zip(&targets_y).zip(&targets_u) {
        if (row.f_avg_y - ty).abs() > 0.08 {
            failures.push(format!(
                "h = {}: f_avg_y = {:.3} vs published {ty} (tolerance 8pp)",
                row.h, row.f_avg_y
            ));
        }
        if (row.f_avg_u - tu).abs() > 0.08 {
            failures.push(format!(
                "h = {}: f_avg_u = {:.3} vs published {tu} (tolerance 8pp)",
                row.h, row.f_avg_u
            ));
        }
    }
    for w in rows.windows(2) {
        if w[1].f_avg_y <= w[0].f_avg_y {
            failures.push("measurement-channel trend broken".into());
        }
        if w[1].f_avg_u <= w[0].f_avg_u {
            failures.push("input-channel trend broken".into());
        }
    }
    if elapsed >= 120.0 {
        failures.push(format!("table took {elapsed:.1}s, budget 120s"));
    }
    if failures.is_empty() {
        println!(
            "ACCEPTANCE 7 output-feedback frequency table: PASS ({} in {elapsed:.1}s, ±8pp, \
             both strictly increasing)",
            shown.join(", ")
        );
    } else {
        println!(
            "ACCEPTANCE 7 output-feedback frequency table: FAIL ({} vs published \
             22.3/16.1, 40.0/26.1, 51.2/32.1, 59.9/38.0, 66.8/41.7; {elapsed:.1}s)",
            shown.join(", ")
        );
        // The measurement channel and both monotone trends reproduce; the
        // input-channel percentages at the three largest periods exceed the
        // published column far beyond the stated tolerance in every faithful
        // reconstruction of the protocol that was attempted (three
        // independent implementations, nine protocol variants). The
        // published equations pin the triggering functions and the loop, so
        // the remaining freedom cannot close a 25-40pp gap.
        panic!(
            "unreproducible published input-channel frequencies:\n{}",
            failures.join("\n")
        );
    }
}

#[test]
fn acceptance_08_storage_inequality_suite() {
    let ex1 = example1();
    let t1 = run_state_feedback(
        &StateLoop::General(&ex1.plant),
        &ex1.triggering(),
        &ex1.design,
        &ex1.sim,
    )
    .unwrap();
    let r1 = monitor_lyapunov(
        &t1,
        ex1.design.s,
        ex1.design.alpha,
        ex1.design.alpha0,
        ex1.design.d,
    );
    assert!(r1.clean(), "scalar plant: {r1:?}");

    let ex2 = example2_state();
    let t2 = run_state_feedback(
        &StateLoop::Iqc {
            plant: &ex2.plant,
            gains: &ex2.gains,
        },
        &ex2.triggering(),
        &ex2.design,
        &ex2.sim,
    )
    .unwrap();
    let r2 = monitor_lyapunov(
        &t2,
        ex2.design.s,
        ex2.design.alpha,
        ex2.design.alpha0,
        ex2.design.d,
    );
    assert!(r2.clean(), "robot arm: {r2:?}");
    println!(
        "ACCEPTANCE 8 storage inequalities: PASS (jumps checked {}+{}, flow points {}+{}, zero \
         violations)",
        r1.checked_jumps, r2.checked_jumps, r1.checked_flow_points, r2.checked_flow_points
    );
}

#[test]
fn acceptance_09_empirical_iss() {
    // disturbance-free decay to 1e-3 within 10 s
    let ex = example2_state();
    let loop_ = StateLoop::Iqc {
        plant: &ex.plant,
        gains: &ex.gains,
    };
    let quiet = SimConfig {
        w_bound: vec![0.0],
        t_end: 10.0,
        ..ex.sim.clone()
    };
    let trace = run_state_feedback(&loop_, &ex.triggering(), &ex.design, &quiet).unwrap();
    let xn = trace.final_state_norm();
    assert!(xn <= 1e-3, "state norm at 10s = {xn}");

    let exo = example2_output();
    let quiet_o = SimConfig {
        w_bound: vec![0.0],
        t_end: 10.0,
        ..exo.sim.clone()
    };
    let trace_o = run_output_feedback(
        &exo.plant,
        &exo.observer,
        &exo.triggering_y(),
        &exo.triggering_u(),
        &exo.timing,
        &quiet_o,
        None,
    )
    .unwrap();
    let xno = trace_o.final_state_norm();
    let een = trace_o.final_estimation_error_norm().unwrap();
    assert!(xno <= 1e-3, "output-feedback state norm at 10s = {xno}");
    assert!(een <= 1e-3, "estimation error at 10s = {een}");

    // halving the disturbance amplitude must not enlarge the ultimate bound
    let tail_after = ex.sim.t_end - 2.0;
    let full = run_state_feedback(&loop_, &ex.triggering(), &ex.design, &ex.sim).unwrap();
    let halved_cfg = SimConfig {
        w_bound: vec![0.05],
        ..ex.sim.clone()
    };
    let halved = run_state_feedback(&loop_, &ex.triggering(), &ex.design, &halved_cfg).unwrap();
    let (bound_full, bound_halved) = (
        full.sup_state_norm_after(tail_after),
        halved.sup_state_norm_after(tail_after),
    );
    assert!(
        bound_halved <= bound_full + 1e-12,
        "ultimate bound grew when the disturbance shrank: {bound_halved} vs {bound_full}"
    );

    let full_o = run_output_feedback(
        &exo.plant,
        &exo.observer,
        &exo.triggering_y(),
        &exo.triggering_u(),
        &exo.timing,
        &exo.sim,
        None,
    )
    .unwrap();
    let halved_cfg_o = SimConfig {
        w_bound: vec![0.025],
        ..exo.sim.clone()
    };
    let halved_o = run_output_feedback(
        &exo.plant,
        &exo.observer,
        &exo.triggering_y(),
        &exo.triggering_u(),
        &exo.timing,
        &halved_cfg_o,
        None,
    )
    .unwrap();
    let (bo_full, bo_halved) = (
        full_o.sup_state_norm_after(exo.sim.t_end - 2.0),
        halved_o.sup_state_norm_after(exo.sim.t_end - 2.0),
    );
    assert!(bo_halved <= bo_full + 1e-12);

    println!(
        "ACCEPTANCE 9 empirical ISS: PASS (|x(10)| = {xn:.2e} / {xno:.2e}, |e(10)| = {een:.2e}, \
         ultimate bounds monotone: {bound_halved:.3} <= {bound_full:.3}, {bo_halved:.3} <= \
         {bo_full:.3})"
    );
}

#[test]
fn acceptance_10_structural_properties() {
    // closed-form/ODE consistency over 1000 seeded tuples
    let mut seed = 0xACCE5507u64;
    let mut rnd = || {
        seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (seed >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let base = TimingBase::new(0.1 + 49.9 * rnd(), 0.1 + 49.9 * rnd()).unwrap();
        let lam = 0.05 + 0.9 * rnd();
        let t = inter_sample_time(base, lam).unwrap();
        let phi = integrate_phi(base, lam, t).unwrap();
        worst = worst.max((phi - lam).abs());
    }
    assert!(worst <= 1e-6, "worst closed-form/ODE mismatch {worst}");

    // window strictly decreasing in the contraction factor
    let base = TimingBase::new(0.7, 2.3).unwrap();
    let mut prev = f64::INFINITY;
    for k in 1..20 {
        let t = inter_sample_time(base, k as f64 / 20.0).unwrap();
        assert!(t < prev);
        prev = t;
    }

    // branch continuity across equal rates: the formulas are first-order
    // continuous, so the deviation at a relative offset eps stays below eps
    for mu in [0.5, 1.0, 4.0] {
        let t_eq = max_sampling_period(TimingBase::new(mu, mu).unwrap());
        for eps in [1e-6, 1e-8] {
            for sign in [-1.0, 1.0] {
                let t = max_sampling_period(TimingBase::new(mu, mu * (1.0 + sign * eps)).unwrap());
                assert!(((t - t_eq) / t_eq).abs() <= eps, "mu {mu}, eps {eps}");
            }
        }
        let t8 = max_sampling_period(TimingBase::new(mu, mu * (1.0 + 1e-8)).unwrap());
        assert!(((t8 - t_eq) / t_eq).abs() <= 1e-8);
    }

    // minimum inter-event spacing on simulated traces
    let ex = example1();
    let trace = run_state_feedback(
        &StateLoop::General(&ex.plant),
        &ex.triggering(),
        &ex.design,
        &ex.sim,
    )
    .unwrap();
    if let Some(gap) = trace.min_inter_fire_gap(0) {
        assert!(gap >= trace.h - 1e-12, "spacing {gap} below h {}", trace.h);
    }
    let exo = example2_output();
    let trace_o = run_output_feedback(
        &exo.plant,
        &exo.observer,
        &exo.triggering_y(),
        &exo.triggering_u(),
        &exo.timing,
        &exo.sim,
        None,
    )
    .unwrap();
    for ch in 0..2 {
        if let Some(gap) = trace_o.min_inter_fire_gap(ch) {
            assert!(gap >= trace_o.h - 1e-12);
        }
    }

    // seeded determinism, bit for bit
    let t1 = run_state_feedback(
        &StateLoop::General(&ex.plant),
        &ex.triggering(),
        &ex.design,
        &ex.sim,
    )
    .unwrap();
    assert_eq!(t1.states, trace.states);
    assert_eq!(t1.v_values, trace.v_values);

    println!(
        "ACCEPTANCE 10 structural properties: PASS (ODE consistency worst {worst:.2e}, \
         monotonicity, branch continuity, event spacing, determinism)"
    );
}

// keep the linear-gains helper used above referenced
#[allow(dead_code)]
fn _unused(_: StateFeedbackGains) {}
