//! `petc design-output`: two-stage output-feedback pipeline. Stage one
//! solves the dual-channel certificate; stage two derives the channel rates
//! and weights and solves the coupling condition for the triggering-function
//! matrices.

use std::path::PathBuf;

use clap::Args;
use petc_core::lmi::{
    build_linear_output_certificate, build_output_certificate, build_output_coupling,
    solve_feasibility, SolveOptions,
};
use petc_core::timing::{max_sampling_period, solve_lambda, trigger_coefficient, TimingBase};
use serde_json::{json, Value};

use crate::config::get_f64;
use crate::{artifact, config, logging, CliError};

#[derive(Args, Debug)]
pub struct DesignOutputArgs {
    /// Bundled system name (example2-output).
    #[arg(long, conflicts_with = "config")]
    builtin: Option<String>,
    /// JSON job configuration with system and observer blocks.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Certified continuous decay rate.
    #[arg(long)]
    alpha: Option<f64>,
    /// Sampling-period hint.
    #[arg(long)]
    h: Option<f64>,
    /// Jump-slack hint.
    #[arg(long)]
    s: Option<f64>,
    /// Working-decay-rate hint.
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

pub fn run(args: DesignOutputArgs) -> Result<(), CliError> {
    let cfg: Option<Value> = args.config.as_deref().map(config::load).transpose()?;
    let system = match (&args.builtin, &cfg) {
        (Some(name), _) => config::resolve_builtin(name)?,
        (None, Some(cfg)) => config::resolve_system(cfg)?,
        (None, None) => return Err(CliError::Usage("need --builtin or --config".into())),
    };
    let observer = system
        .observer
        .clone()
        .ok_or_else(|| CliError::Usage("output-feedback design needs an observer block".into()))?;
    if system.plant.c.is_none() {
        return Err(CliError::Usage(
            "output-feedback design needs an output matrix C".into(),
        ));
    }
    let alpha = args
        .alpha
        .or_else(|| cfg.as_ref().and_then(|c| get_f64(c, &["design", "alpha"])))
        .unwrap_or(1.0);
    let opts = SolveOptions {
        seed: args.seed,
        max_iter: 20_000,
        ..Default::default()
    };

    // stage 1: the certificate over the joint (state, estimation-error) pair
    let linear = system.plant.is_linear();
    let inst = if linear {
        logging::info("plant is linear; using the reduced certificate");
        build_linear_output_certificate(&system.plant, &observer.gains.k1, &observer.l2, alpha)
            .map_err(|e| CliError::Usage(e.to_string()))?
    } else {
        build_output_certificate(&system.plant, &observer, alpha)
            .map_err(|e| CliError::Usage(e.to_string()))?
    };
    let res = solve_feasibility(&inst, opts).map_err(|e| CliError::Failed(e.to_string()))?;
    if !res.is_feasible() {
        return Err(CliError::Failed(format!(
            "certificate infeasible within budget (best margin {:.3e}); try a smaller alpha",
            res.margin
        )));
    }
    let report = inst
        .verify(&res.assignment)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let g = |name: &str| res.assignment.scalar(name).unwrap();
    let (a1, a2, b1, b2) = (g("a1"), g("a2"), g("b1"), g("b2"));
    let (mu1, mu2, d) = (g("mu1"), g("mu2"), g("d"));
    let gamma1 = (a1 * b1).sqrt();
    let gamma2 = (a2 * b2).sqrt();
    let c1 = (a1 / b1).sqrt();
    let c2 = (a2 / b2).sqrt();

    // stage 2: coupling condition for the triggering-function matrices
    let c_mat = system.plant.c.as_ref().unwrap();
    let coupling = build_output_coupling(res.assignment.sym("P").unwrap(), c_mat, c1, c2)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let res2 = solve_feasibility(
        &coupling,
        SolveOptions {
            seed: args.seed,
            ..Default::default()
        },
    )
    .map_err(|e| CliError::Failed(e.to_string()))?;
    if !res2.is_feasible() {
        return Err(CliError::Failed(format!(
            "coupling condition infeasible within budget (best margin {:.3e})",
            res2.margin
        )));
    }
    let coupling_report = coupling
        .verify(&res2.assignment)
        .map_err(|e| CliError::Failed(e.to_string()))?;

    // stage 3: shared sampling period and per-channel factors
    let base1 = TimingBase::new(mu1, gamma1).map_err(|e| CliError::Failed(e.to_string()))?;
    let base2 = TimingBase::new(mu2, gamma2).map_err(|e| CliError::Failed(e.to_string()))?;
    let t1 = max_sampling_period(base1);
    let t2 = max_sampling_period(base2);
    let t_min = t1.min(t2);
    let h = args
        .h
        .or_else(|| cfg.as_ref().and_then(|c| get_f64(c, &["design", "h"])))
        .unwrap_or(0.5 * t_min);
    if !(h > 0.0 && h < t_min) {
        return Err(CliError::Failed(format!(
            "h = {h} is not admissible: the solved rates allow h < {t_min:.6}"
        )));
    }
    let lambda1 = solve_lambda(base1, h).map_err(|e| CliError::Failed(e.to_string()))?;
    let lambda2 = solve_lambda(base2, h).map_err(|e| CliError::Failed(e.to_string()))?;
    let alpha0 = args
        .alpha0
        .or_else(|| cfg.as_ref().and_then(|c| get_f64(c, &["design", "alpha0"])))
        .unwrap_or(0.9 * alpha);
    let s_bound = (alpha0 * h).exp() - 1.0;
    let s_bound_l = (1.0 / (lambda1 * lambda1) - 1.0).min(1.0 / (lambda2 * lambda2) - 1.0);
    let s = args
        .s
        .or_else(|| cfg.as_ref().and_then(|c| get_f64(c, &["design", "s"])))
        .unwrap_or(0.9 * s_bound.min(s_bound_l));
    let coef_y = trigger_coefficient(lambda1, s).map_err(|e| CliError::Failed(e.to_string()))?;
    let coef_u = trigger_coefficient(lambda2, s).map_err(|e| CliError::Failed(e.to_string()))?;
    if (1.0 + s).ln() / alpha0 >= h {
        return Err(CliError::Failed(format!(
            "slack s = {s} violates log(1+s)/alpha0 < h; pick a smaller s or larger h"
        )));
    }

    let value = json!({
        "kind": "design-output",
        "system": super::design_state::system_block(&system, &cfg),
        "linear": linear,
        "alpha": alpha,
        "gains": {
            "k1": artifact::mat_to_value(&observer.gains.k1),
            "k2": artifact::mat_to_value(&observer.gains.k2),
            "l1": artifact::mat_to_value(&observer.l1),
            "l2": artifact::mat_to_value(&observer.l2),
        },
        "p": artifact::sym_to_value(res.assignment.sym("P").unwrap()),
        "a1": a1, "a2": a2, "b1": b1, "b2": b2,
        "mu1": mu1, "mu2": mu2, "d": d,
        "gamma1": gamma1, "gamma2": gamma2,
        "c1": c1, "c2": c2,
        "sigma1": if linear { Value::Null } else { json!(g("sigma1")) },
        "sigma2": if linear { Value::Null } else { json!(g("sigma2")) },
        "sigma3": if linear { Value::Null } else { json!(g("sigma3")) },
        "p1": artifact::sym_to_value(res2.assignment.sym("P1").unwrap()),
        "p2": artifact::sym_to_value(res2.assignment.sym("P2").unwrap()),
        "margin": report.margin,
        "margin_rel": report.margin_rel,
        "coupling_margin": coupling_report.margin,
        "iterations": res.iterations,
        "seed": args.seed,
        "t1": t1, "t2": t2,
        "h": h,
        "lambda1": lambda1, "lambda2": lambda2,
        "s": s, "alpha0": alpha0,
        "coef_y": coef_y, "coef_u": coef_u,
    });
    let path = args.out.join("design-output.json");
    artifact::write_json(&path, &value)
        .map_err(|e| CliError::Failed(format!("writing {path:?}: {e}")))?;

    println!(
        "certificate feasible: margin {:.3e}; coupling margin {:.3e}",
        report.margin, coupling_report.margin
    );
    println!("channel rates  (mu1, gamma1) = ({mu1:.4}, {gamma1:.4}), window {t1:.4}");
    println!("               (mu2, gamma2) = ({mu2:.4}, {gamma2:.4}), window {t2:.4}");
    println!(
        "design h = {h:.4}, lambdas = ({lambda1:.4}, {lambda2:.4}), s = {s:.4}, \
         coefficients = ({coef_y:.4}, {coef_u:.4})"
    );
    println!("wrote {}", path.display());
    Ok(())
}
