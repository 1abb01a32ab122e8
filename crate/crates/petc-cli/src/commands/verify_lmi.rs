//! `petc verify-lmi`: independent margin check of a design artifact or a
//! bundled certificate. Exit 0 only when the check passes.

use std::path::PathBuf;

use clap::Args;
use petc_core::builtin::example2_state;
use petc_core::lmi::{build_state_certificate, refine_scalars, Assignment, VerifyStatus};
use serde_json::json;

use crate::{artifact, CliError};

#[derive(Args, Debug)]
pub struct VerifyLmiArgs {
    /// Design artifact to re-verify.
    #[arg(long, conflicts_with = "builtin")]
    artifact: Option<PathBuf>,
    /// Verify the bundled state-feedback certificate (example2) at its
    /// published values, recovering the multiplier scalings by grid search.
    #[arg(long)]
    builtin: Option<String>,
    /// Relative margin tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn run(args: VerifyLmiArgs) -> Result<(), CliError> {
    let (name, report) = match (&args.artifact, &args.builtin) {
        (Some(path), _) => {
            let value = artifact::read_json(path)
                .map_err(|e| CliError::Usage(format!("cannot read artifact: {e}")))?;
            let kind = value.get("kind").and_then(|v| v.as_str()).unwrap_or("");
            if kind != "design-state" {
                return Err(CliError::Usage(format!(
                    "verify-lmi currently re-checks design-state artifacts, got kind {kind:?}"
                )));
            }
            let (inst, assignment) = super::design_state::rebuild_state_instance(&value)?;
            let report = inst
                .verify_with(&assignment, args.tol)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            (format!("artifact {}", path.display()), report)
        }
        (None, Some(name)) if name == "example2" => {
            let ex = example2_state();
            let inst = build_state_certificate(&ex.plant, &ex.gains, ex.alpha)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            let mut a = Assignment::new();
            a.set_sym("P", ex.p.clone())
                .set_scalar("mu", 5.0)
                .set_scalar("gamma", 20.0)
                .set_scalar("d", 0.6)
                .set_scalar("sigma1", 0.0)
                .set_scalar("sigma2", 0.0);
            let (refined, _) = refine_scalars(&inst, &a, &["sigma1", "sigma2"], 0.0, 50.0, 0.1)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            let report = inst
                .verify_with(&refined, args.tol)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            ("builtin example2 certificate".to_string(), report)
        }
        (None, Some(other)) => {
            return Err(CliError::Usage(format!(
                "unknown builtin {other:?}; available: example2"
            )))
        }
        (None, None) => return Err(CliError::Usage("need --artifact or --builtin".into())),
    };

    println!(
        "{name}: margin {:.6e} (relative {:.6e}), tolerance {:.1e}",
        report.margin, report.margin_rel, args.tol
    );
    for v in &report.domain_violations {
        println!("domain violation: {v}");
    }
    if let Some(path) = &args.json {
        let value = json!({
            "kind": "verify-report",
            "margin": report.margin,
            "margin_rel": report.margin_rel,
            "status": match report.status {
                VerifyStatus::Pass => "pass",
                VerifyStatus::Fail => "fail",
                VerifyStatus::Invalid => "invalid",
            },
            "domain_violations": report.domain_violations,
        });
        artifact::write_json(path, &value)
            .map_err(|e| CliError::Failed(format!("writing {path:?}: {e}")))?;
    }
    match report.status {
        VerifyStatus::Pass => {
            println!("status: pass");
            Ok(())
        }
        VerifyStatus::Fail => Err(CliError::Failed("margin check failed".into())),
        VerifyStatus::Invalid => Err(CliError::Failed(format!(
            "assignment violates variable domains: {}",
            report.domain_violations.join("; ")
        ))),
    }
}
