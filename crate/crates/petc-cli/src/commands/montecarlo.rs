//! `petc montecarlo`: seeded frequency sweeps over sampling periods.

use std::path::PathBuf;

use clap::Args;
use petc_core::builtin::{example1, example2_output, example2_state};
use petc_core::sim::{monte_carlo_output, monte_carlo_state, Scenario, StateLoop};
use serde_json::{json, Value};

use crate::{artifact, CliError};

#[derive(Args, Debug)]
pub struct MontecarloArgs {
    /// Bundled scenario (example1, example2, example2-output).
    #[arg(long)]
    builtin: String,
    /// Sampling periods to sweep, comma separated; defaults to the bundled
    /// protocol list.
    #[arg(long, value_delimiter = ',')]
    h_list: Option<Vec<f64>>,
    /// Batch size per period.
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 12345)]
    seed: u64,
    /// Horizon per run.
    #[arg(long)]
    t_end: Option<f64>,
    /// Integrator substeps per sampling interval.
    #[arg(long)]
    substeps: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl MontecarloArgs {
    pub fn for_example(
        builtin: String,
        h_list: Option<Vec<f64>>,
        runs: usize,
        seed: u64,
        out: PathBuf,
    ) -> Self {
        MontecarloArgs {
            builtin,
            h_list,
            runs,
            seed,
            t_end: None,
            substeps: None,
            out,
        }
    }
}

pub fn run(args: MontecarloArgs) -> Result<(), CliError> {
    let rows: Vec<Value> = match args.builtin.as_str() {
        "example1" => {
            let ex = example1();
            let scenario = scenario_with(&ex.scenario, &args);
            let h_list = args.h_list.clone().unwrap_or(ex.h_list.clone());
            let rows = monte_carlo_state(
                &StateLoop::General(&ex.plant),
                &ex.v1(),
                &ex.design,
                &scenario,
                &h_list,
                args.runs,
                args.seed,
            )
            .map_err(|e| CliError::Failed(e.to_string()))?;
            println!("{:<10} {:<10} {:<10} {:<8}", "h", "lambda", "coef", "f_avg");
            for r in &rows {
                println!(
                    "{:<10} {:<10.4} {:<10.4} {:<8.1}%",
                    r.h,
                    r.lambda,
                    r.coef,
                    100.0 * r.f_avg
                );
            }
            rows.iter()
                .map(|r| {
                    json!({
                        "h": r.h, "f_avg": r.f_avg, "lambda": r.lambda, "coef": r.coef,
                        "n_runs": r.n_runs, "seed": r.seed,
                    })
                })
                .collect()
        }
        "example2" => {
            let ex = example2_state();
            let scenario = scenario_with(
                &Scenario {
                    x0_lo: vec![-0.5, -0.5],
                    x0_hi: vec![0.5, 0.5],
                    w_bound: ex.sim.w_bound.clone(),
                    t_end: 10.0,
                    substeps: 64,
                },
                &args,
            );
            let h_list = args
                .h_list
                .clone()
                .unwrap_or_else(|| vec![0.01, 0.02, 0.03, 0.04]);
            let rows = monte_carlo_state(
                &StateLoop::Iqc {
                    plant: &ex.plant,
                    gains: &ex.gains,
                },
                &ex.quad(),
                &ex.design,
                &scenario,
                &h_list,
                args.runs,
                args.seed,
            )
            .map_err(|e| CliError::Failed(e.to_string()))?;
            println!("{:<10} {:<10} {:<10} {:<8}", "h", "lambda", "coef", "f_avg");
            for r in &rows {
                println!(
                    "{:<10} {:<10.4} {:<10.4} {:<8.1}%",
                    r.h,
                    r.lambda,
                    r.coef,
                    100.0 * r.f_avg
                );
            }
            rows.iter()
                .map(|r| {
                    json!({
                        "h": r.h, "f_avg": r.f_avg, "lambda": r.lambda, "coef": r.coef,
                        "n_runs": r.n_runs, "seed": r.seed,
                    })
                })
                .collect()
        }
        "example2-output" => {
            let ex = example2_output();
            let scenario = scenario_with(&ex.scenario, &args);
            let h_list = args.h_list.clone().unwrap_or(ex.h_list.clone());
            let rows = monte_carlo_output(
                &ex.plant,
                &ex.observer,
                &ex.quad_y(),
                &ex.quad_u(),
                &ex.timing,
                &scenario,
                &h_list,
                args.runs,
                args.seed,
            )
            .map_err(|e| CliError::Failed(e.to_string()))?;
            println!(
                "{:<10} {:<10} {:<10} {:<10} {:<10}",
                "h", "f_avg_y", "f_avg_u", "coef_y", "coef_u"
            );
            for r in &rows {
                println!(
                    "{:<10} {:<10.1} {:<10.1} {:<10.4} {:<10.4}",
                    r.h,
                    100.0 * r.f_avg_y,
                    100.0 * r.f_avg_u,
                    r.coef_y,
                    r.coef_u
                );
            }
            rows.iter()
                .map(|r| {
                    json!({
                        "h": r.h, "f_avg_y": r.f_avg_y, "f_avg_u": r.f_avg_u,
                        "n_runs": r.n_runs, "seed": r.seed,
                    })
                })
                .collect()
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown builtin {other:?}; available: example1, example2, example2-output"
            )))
        }
    };
    let path = args.out.join("stats.json");
    artifact::write_json(&path, &json!({ "kind": "trigger-stats", "rows": rows }))
        .map_err(|e| CliError::Failed(format!("writing {path:?}: {e}")))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn scenario_with(base: &Scenario, args: &MontecarloArgs) -> Scenario {
    let mut s = base.clone();
    if let Some(t) = args.t_end {
        s.t_end = t;
    }
    if let Some(n) = args.substeps {
        s.substeps = n;
    }
    s
}
