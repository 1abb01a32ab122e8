//! `petc timing`: closed-form sampling window and triggering coefficient.

use std::path::PathBuf;

use clap::Args;
use petc_core::timing::{
    max_sampling_period, select_parameters, TimingBase, TimingError, TimingHints,
};
use serde_json::json;

use crate::{artifact, logging, CliError};

#[derive(Args, Debug)]
pub struct TimingArgs {
    /// Clock decay rate (> 0).
    #[arg(long)]
    mu: f64,
    /// Clock coupling rate (> 0).
    #[arg(long)]
    gamma: f64,
    /// Certified continuous decay rate (> 0).
    #[arg(long)]
    alpha: f64,
    /// Sampling period; defaults to half the admissible maximum.
    #[arg(long)]
    h: Option<f64>,
    /// Jump slack; defaults to 0.9x the tighter of its two bounds.
    #[arg(long)]
    s: Option<f64>,
    /// Working decay rate; defaults to 0.9 alpha.
    #[arg(long)]
    alpha0: Option<f64>,
    /// Disturbance gain carried into the design (> 0).
    #[arg(long)]
    d: Option<f64>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn run(args: TimingArgs) -> Result<(), CliError> {
    let base = TimingBase::new(args.mu, args.gamma).map_err(|e| CliError::Usage(e.to_string()))?;
    if !(args.alpha > 0.0) {
        return Err(CliError::Usage(format!(
            "alpha must be > 0, got {}",
            args.alpha
        )));
    }
    let t_max = max_sampling_period(base);
    let hints = TimingHints {
        h: args.h,
        s: args.s,
        alpha0: args.alpha0,
        d: args.d,
    };
    let design = select_parameters(base, args.alpha, hints).map_err(|e| match e {
        TimingError::Domain(_) => CliError::Usage(e.to_string()),
        _ => CliError::Failed(e.to_string()),
    })?;
    let lower = (1.0 + design.s).ln() / design.alpha0;
    let coef = design.trigger_coefficient();

    println!("max sampling period   T(mu,gamma) = {t_max:.6}");
    println!("admissible interval   {lower:.6} < h < {t_max:.6}");
    println!("sampling period       h = {:.6}", design.h);
    println!("contraction factor    lambda = {:.6}", design.lambda);
    println!("jump slack            s = {:.6}", design.s);
    println!("working decay rate    alpha0 = {:.6}", design.alpha0);
    println!("trigger coefficient   {coef:.6}");

    if let Some(path) = &args.json {
        let value = json!({
            "kind": "timing-report",
            "mu": base.mu,
            "gamma": base.gamma,
            "alpha": design.alpha,
            "alpha0": design.alpha0,
            "t_max": t_max,
            "h_lower": lower,
            "h": design.h,
            "lambda": design.lambda,
            "s": design.s,
            "d": design.d,
            "coef": coef,
        });
        artifact::write_json(path, &value)
            .map_err(|e| CliError::Failed(format!("writing {path:?}: {e}")))?;
        logging::info(&format!("wrote {}", path.display()));
    }
    Ok(())
}
