//! `petc design-state`: gain synthesis (when needed), state-feedback
//! certificate solve, timing selection, and design-artifact emission.

use std::path::PathBuf;

use clap::Args;
use petc_core::lmi::{
    build_gain_synthesis, build_linear_state_certificate, build_state_certificate,
    solve_feasibility, Assignment, LmiInstance, SolveOptions,
};
use petc_core::symmat::Mat;
use petc_core::systems::{recover_state_gain, StateFeedbackGains};
use petc_core::timing::{select_parameters, TimingBase, TimingHints};
use serde_json::{json, Value};

use crate::config::{get_f64, ResolvedSystem};
use crate::{artifact, config, logging, CliError};

#[derive(Args, Debug)]
pub struct DesignStateArgs {
    /// Bundled system name (example2).
    #[arg(long, conflicts_with = "config")]
    builtin: Option<String>,
    /// JSON job configuration with a system block.
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
    /// Solver seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthesize feedback gains even when the system block carries some.
    #[arg(long)]
    synthesize_gains: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

pub fn run(args: DesignStateArgs) -> Result<(), CliError> {
    let cfg: Option<Value> = args.config.as_deref().map(config::load).transpose()?;
    let system = match (&args.builtin, &cfg) {
        (Some(name), _) => config::resolve_builtin(name)?,
        (None, Some(cfg)) => config::resolve_system(cfg)?,
        (None, None) => {
            return Err(CliError::Usage("need --builtin or --config".into()));
        }
    };
    let alpha = args
        .alpha
        .or_else(|| cfg.as_ref().and_then(|c| get_f64(c, &["design", "alpha"])))
        .unwrap_or(1.0);
    let h_hint = args
        .h
        .or_else(|| cfg.as_ref().and_then(|c| get_f64(c, &["design", "h"])));
    let s_hint = args
        .s
        .or_else(|| cfg.as_ref().and_then(|c| get_f64(c, &["design", "s"])));
    let alpha0_hint = args
        .alpha0
        .or_else(|| cfg.as_ref().and_then(|c| get_f64(c, &["design", "alpha0"])));
    let opts = SolveOptions {
        seed: args.seed,
        ..Default::default()
    };

    // stage 0: gains, synthesized when absent or requested
    let (gains, synthesis): (StateFeedbackGains, Option<Value>) =
        if system.gains.is_none() || args.synthesize_gains {
            let (g, report) = synthesize(&system, alpha, opts)?;
            (g, Some(report))
        } else {
            (system.gains.clone().unwrap(), None)
        };

    // stage 1: the triggering certificate; linear plants take the reduced form
    let linear = system.plant.is_linear();
    let inst: LmiInstance = if linear {
        logging::info("plant is linear; using the reduced certificate");
        build_linear_state_certificate(&system.plant, &gains.k1, alpha)
            .map_err(|e| CliError::Usage(e.to_string()))?
    } else {
        build_state_certificate(&system.plant, &gains, alpha)
            .map_err(|e| CliError::Usage(e.to_string()))?
    };
    let res = solve_feasibility(&inst, opts).map_err(|e| CliError::Failed(e.to_string()))?;
    if !res.is_feasible() {
        return Err(CliError::Failed(format!(
            "certificate infeasible within budget (best margin {:.3e} after {} iterations); \
             try a smaller alpha",
            res.margin, res.iterations
        )));
    }
    let report = inst
        .verify(&res.assignment)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let mu = res.assignment.scalar("mu").unwrap();
    let gamma = res.assignment.scalar("gamma").unwrap();
    let d = res.assignment.scalar("d").unwrap();

    // stage 2: sampling period, contraction factor, slack, coefficient
    let base = TimingBase::new(mu, gamma).map_err(|e| CliError::Failed(e.to_string()))?;
    let design = select_parameters(
        base,
        alpha,
        TimingHints {
            h: h_hint,
            s: s_hint,
            alpha0: alpha0_hint,
            d: Some(d),
        },
    )
    .map_err(|e| CliError::Failed(e.to_string()))?;
    let coef = design.trigger_coefficient();

    let mut value = json!({
        "kind": "design-state",
        "system": system_block(&system, &cfg),
        "linear": linear,
        "alpha": alpha,
        "gains": {
            "k1": artifact::mat_to_value(&gains.k1),
            "k2": artifact::mat_to_value(&gains.k2),
        },
        "p": artifact::sym_to_value(res.assignment.sym("P").unwrap()),
        "mu": mu,
        "gamma": gamma,
        "d": d,
        "margin": report.margin,
        "margin_rel": report.margin_rel,
        "iterations": res.iterations,
        "seed": args.seed,
        "h": design.h,
        "lambda": design.lambda,
        "s": design.s,
        "alpha0": design.alpha0,
        "coef": coef,
    });
    if !linear {
        value["sigma1"] = json!(res.assignment.scalar("sigma1").unwrap());
        value["sigma2"] = json!(res.assignment.scalar("sigma2").unwrap());
    }
    if let Some(report) = synthesis {
        value["synthesis"] = report;
    }
    let path = args.out.join("design.json");
    artifact::write_json(&path, &value)
        .map_err(|e| CliError::Failed(format!("writing {path:?}: {e}")))?;

    println!(
        "certificate feasible: margin {:.3e} (relative {:.3e})",
        report.margin, report.margin_rel
    );
    println!("rates mu = {mu:.4}, gamma = {gamma:.4}, d = {d:.4}");
    println!(
        "design h = {:.4}, lambda = {:.4}, s = {:.4}, coefficient = {:.4}",
        design.h, design.lambda, design.s, coef
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn synthesize(
    system: &ResolvedSystem,
    alpha: f64,
    opts: SolveOptions,
) -> Result<(StateFeedbackGains, Value), CliError> {
    logging::info("synthesizing feedback gains");
    let inst =
        build_gain_synthesis(&system.plant, alpha).map_err(|e| CliError::Usage(e.to_string()))?;
    let res = solve_feasibility(&inst, opts).map_err(|e| CliError::Failed(e.to_string()))?;
    if !res.is_feasible() {
        return Err(CliError::Failed(format!(
            "gain synthesis infeasible within budget (best margin {:.3e})",
            res.margin
        )));
    }
    let p1 = res.assignment.sym("P1").unwrap();
    let p2 = res.assignment.mat("P2").unwrap();
    let k1 = recover_state_gain(p1, p2).map_err(|e| CliError::Failed(e.to_string()))?;
    let k2 = res.assignment.mat("K2").unwrap().clone();
    let report = json!({
        "p1": artifact::sym_to_value(p1),
        "p2": artifact::mat_to_value(p2),
        "margin": res.margin,
        "iterations": res.iterations,
    });
    Ok((StateFeedbackGains::new(k1, k2), report))
}

pub fn system_block(system: &ResolvedSystem, cfg: &Option<Value>) -> Value {
    if let Some(name) = &system.builtin {
        return json!({ "builtin": name });
    }
    // embed the matrices so artifacts stay self-contained
    match cfg.as_ref().and_then(|c| c.get("system")).cloned() {
        Some(block) => block,
        None => json!({
            "a": artifact::mat_to_value(&system.plant.a),
            "b": artifact::mat_to_value(&system.plant.b),
            "e": artifact::mat_to_value(&system.plant.e),
            "e_w": artifact::mat_to_value(&system.plant.e_w),
            "c_q": artifact::mat_to_value(&system.plant.c_q),
        }),
    }
}

/// Rebuild the state certificate from a design artifact; shared with the
/// verification command.
pub fn rebuild_state_instance(value: &Value) -> Result<(LmiInstance, Assignment), CliError> {
    let system = resolve_artifact_system(value)?;
    let alpha = get_f64(value, &["alpha"])
        .ok_or_else(|| CliError::Usage("artifact missing alpha".into()))?;
    let k1 = artifact::value_to_mat(
        crate::config::walk(value, &["gains", "k1"])
            .ok_or_else(|| CliError::Usage("artifact missing gains.k1".into()))?,
    )
    .ok_or_else(|| CliError::Usage("gains.k1 malformed".into()))?;
    let k2 = crate::config::walk(value, &["gains", "k2"])
        .and_then(artifact::value_to_mat)
        .unwrap_or_else(|| Mat::zeros(k1.rows(), system.plant.n_p()));
    let linear = value
        .get("linear")
        .and_then(|v| v.as_bool())
        .unwrap_or(false);
    let inst = if linear {
        build_linear_state_certificate(&system.plant, &k1, alpha)
            .map_err(|e| CliError::Usage(e.to_string()))?
    } else {
        build_state_certificate(&system.plant, &StateFeedbackGains::new(k1, k2), alpha)
            .map_err(|e| CliError::Usage(e.to_string()))?
    };
    let mut a = Assignment::new();
    let p = artifact::value_to_sym(
        value
            .get("p")
            .ok_or_else(|| CliError::Usage("artifact missing p".into()))?,
    )
    .ok_or_else(|| CliError::Usage("p malformed".into()))?;
    a.set_sym("P", p);
    for name in ["mu", "gamma", "d"] {
        a.set_scalar(
            name,
            get_f64(value, &[name])
                .ok_or_else(|| CliError::Usage(format!("artifact missing {name}")))?,
        );
    }
    if !linear {
        a.set_scalar("sigma1", get_f64(value, &["sigma1"]).unwrap_or(0.0));
        a.set_scalar("sigma2", get_f64(value, &["sigma2"]).unwrap_or(0.0));
    }
    Ok((inst, a))
}

pub fn resolve_artifact_system(value: &Value) -> Result<ResolvedSystem, CliError> {
    let block = value
        .get("system")
        .ok_or_else(|| CliError::Usage("artifact missing system block".into()))?;
    config::resolve_system(&json!({ "system": block }))
}
