//! `petc simulate`: one closed-loop run with trace/event/monitor artifacts.
//! Exit status is 0 only when the storage monitors report zero violations.

use std::path::PathBuf;

use clap::Args;
use petc_core::builtin::{example1, example2_output, example2_state};
use petc_core::sim::{
    monitor_lyapunov, run_output_feedback, run_state_feedback, LyapunovReport, QuadForm, SimConfig,
    SimTrace, StateLoop, TriggeringFunction,
};
use petc_core::timing::{ChannelTiming, OutputTimingDesign, TimingBase, TimingDesign};
use serde_json::{json, Value};

use crate::config::get_f64;
use crate::{artifact, logging, svg, CliError};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Bundled scenario (example1, example2, example2-output).
    #[arg(long, conflicts_with = "design")]
    builtin: Option<String>,
    /// Design artifact produced by design-state or design-output.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Sampling period override.
    #[arg(long)]
    h: Option<f64>,
    /// Horizon override.
    #[arg(long)]
    t_end: Option<f64>,
    /// Integrator substeps per sampling interval.
    #[arg(long)]
    substeps: Option<usize>,
    /// Disturbance seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Per-channel disturbance amplitudes, comma separated.
    #[arg(long, value_delimiter = ',')]
    w_bound: Option<Vec<f64>>,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Initial estimate, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    xhat0: Option<Vec<f64>>,
    /// Also render an SVG preview of the trajectory.
    #[arg(long)]
    plot: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl SimulateArgs {
    pub fn for_example(builtin: String, plot: bool, out: PathBuf) -> Self {
        SimulateArgs {
            builtin: Some(builtin),
            design: None,
            h: None,
            t_end: None,
            substeps: None,
            seed: None,
            w_bound: None,
            x0: None,
            xhat0: None,
            plot,
            out,
        }
    }
}

struct MonitorParams {
    s: f64,
    alpha: f64,
    alpha0: f64,
    d: f64,
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let (trace, monitor) = match (&args.builtin, &args.design) {
        (Some(name), _) => run_builtin(name, &args)?,
        (None, Some(path)) => run_from_artifact(path, &args)?,
        (None, None) => return Err(CliError::Usage("need --builtin or --design".into())),
    };
    logging::debug(&format!(
        "trace: {} grid points, {} instants, h = {}",
        trace.times.len(),
        trace.events.len(),
        trace.h
    ));
    match monitor {
        Some(monitor) => {
            let report =
                monitor_lyapunov(&trace, monitor.s, monitor.alpha, monitor.alpha0, monitor.d);
            write_outputs(&args, &trace, Some(&report))?;
            if report.clean() {
                println!(
                    "monitors clean: {} jumps, {} flow points checked",
                    report.checked_jumps, report.checked_flow_points
                );
                Ok(())
            } else {
                Err(CliError::Failed(format!(
                    "storage-inequality violations: {} jump, {} flow (worst excesses {:.3e},                      {:.3e})",
                    report.jump_violations,
                    report.flow_violations,
                    report.worst_jump_excess,
                    report.worst_flow_excess
                )))
            }
        }
        None => {
            // no joint storage matrix for this scenario: the decay/jump
            // inequalities have nothing certified to check against
            write_outputs(&args, &trace, None)?;
            println!("monitors skipped: scenario carries no joint storage certificate");
            Ok(())
        }
    }
}

fn override_cfg(mut cfg: SimConfig, args: &SimulateArgs) -> SimConfig {
    if let Some(h) = args.h {
        cfg.h = h;
    }
    if let Some(t) = args.t_end {
        cfg.t_end = t;
    }
    if let Some(s) = args.substeps {
        cfg.substeps = s;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = &args.w_bound {
        cfg.w_bound = w.clone();
    }
    if let Some(x0) = &args.x0 {
        cfg.x0 = x0.clone();
    }
    if let Some(xh) = &args.xhat0 {
        cfg.xhat0 = Some(xh.clone());
    }
    cfg
}

fn map_sim_err(e: petc_core::sim::SimError) -> CliError {
    match e {
        petc_core::sim::SimError::Config(m) => CliError::Usage(m),
        other => CliError::Failed(other.to_string()),
    }
}

fn run_builtin(
    name: &str,
    args: &SimulateArgs,
) -> Result<(SimTrace, Option<MonitorParams>), CliError> {
    match name {
        "example1" => {
            let ex = example1();
            let mut design = ex.design;
            if let Some(h) = args.h {
                // re-pair the contraction factor with the requested period
                design.lambda = petc_core::timing::solve_lambda(design.base, h)
                    .map_err(|e| CliError::Failed(e.to_string()))?;
                design.h = h;
            }
            let tf = TriggeringFunction::new(design.trigger_coefficient(), design.s, ex.v1())
                .map_err(map_sim_err)?;
            let cfg = override_cfg(ex.sim.clone(), args);
            let trace = run_state_feedback(&StateLoop::General(&ex.plant), &tf, &design, &cfg)
                .map_err(map_sim_err)?;
            Ok((trace, Some(monitor_of(&design))))
        }
        "example2" => {
            let ex = example2_state();
            let mut design = ex.design;
            if let Some(h) = args.h {
                design.lambda = petc_core::timing::solve_lambda(design.base, h)
                    .map_err(|e| CliError::Failed(e.to_string()))?;
                design.h = h;
            }
            let tf = TriggeringFunction::new(design.trigger_coefficient(), design.s, ex.quad())
                .map_err(map_sim_err)?;
            let cfg = override_cfg(ex.sim.clone(), args);
            let trace = run_state_feedback(
                &StateLoop::Iqc {
                    plant: &ex.plant,
                    gains: &ex.gains,
                },
                &tf,
                &design,
                &cfg,
            )
            .map_err(map_sim_err)?;
            Ok((trace, Some(monitor_of(&design))))
        }
        "example2-output" => {
            let ex = example2_output();
            let mut timing = ex.timing;
            if let Some(h) = args.h {
                timing.channel_y.lambda = petc_core::timing::solve_lambda(timing.channel_y.base, h)
                    .map_err(|e| CliError::Failed(e.to_string()))?;
                timing.channel_u.lambda = petc_core::timing::solve_lambda(timing.channel_u.base, h)
                    .map_err(|e| CliError::Failed(e.to_string()))?;
                timing.h = h;
            }
            let tf_y =
                TriggeringFunction::new(timing.trigger_coefficient_y(), timing.s, ex.quad_y())
                    .map_err(map_sim_err)?;
            let tf_u =
                TriggeringFunction::new(timing.trigger_coefficient_u(), timing.s, ex.quad_u())
                    .map_err(map_sim_err)?;
            let cfg = override_cfg(ex.sim.clone(), args);
            let trace =
                run_output_feedback(&ex.plant, &ex.observer, &tf_y, &tf_u, &timing, &cfg, None)
                    .map_err(map_sim_err)?;
            // the bundled output scenario has no joint storage matrix, so
            // the storage monitors have no certified inequality to check
            Ok((trace, None))
        }
        other => Err(CliError::Usage(format!(
            "unknown builtin {other:?}; available: example1, example2, example2-output"
        ))),
    }
}

fn monitor_of(design: &TimingDesign) -> MonitorParams {
    MonitorParams {
        s: design.s,
        alpha: design.alpha,
        alpha0: design.alpha0,
        d: design.d,
    }
}

fn run_from_artifact(
    path: &std::path::Path,
    args: &SimulateArgs,
) -> Result<(SimTrace, Option<MonitorParams>), CliError> {
    let value = artifact::read_json(path)
        .map_err(|e| CliError::Usage(format!("cannot read design artifact: {e}")))?;
    let kind = value.get("kind").and_then(Value::as_str).unwrap_or("");
    match kind {
        "design-state" => {
            let system = super::design_state::resolve_artifact_system(&value)?;
            let (inst_gains, p) = {
                let (_, assignment) = super::design_state::rebuild_state_instance(&value)?;
                let p = assignment.sym("P").unwrap().clone();
                let k1 =
                    artifact::value_to_mat(crate::config::walk(&value, &["gains", "k1"]).unwrap())
                        .unwrap();
                let k2 = crate::config::walk(&value, &["gains", "k2"])
                    .and_then(artifact::value_to_mat)
                    .unwrap_or_else(|| {
                        petc_core::symmat::Mat::zeros(k1.rows(), system.plant.n_p())
                    });
                (petc_core::systems::StateFeedbackGains::new(k1, k2), p)
            };
            let need = |f: &str| {
                get_f64(&value, &[f])
                    .ok_or_else(|| CliError::Usage(format!("artifact missing {f}")))
            };
            let base = TimingBase::new(need("mu")?, need("gamma")?)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let design = TimingDesign {
                base,
                lambda: need("lambda")?,
                h: need("h")?,
                s: need("s")?,
                alpha: need("alpha")?,
                alpha0: need("alpha0")?,
                d: need("d")?,
            };
            let coef = need("coef")?;
            let tf = TriggeringFunction::new(coef, design.s, QuadForm::Matrix(p))
                .map_err(map_sim_err)?;
            let n_x = system.plant.n_x();
            let cfg = override_cfg(
                SimConfig {
                    h: design.h,
                    t_end: 10.0,
                    substeps: 64,
                    seed: 0,
                    w_bound: vec![0.0; system.plant.n_w()],
                    x0: vec![0.1; n_x],
                    xhat0: None,
                },
                args,
            );
            let trace = run_state_feedback(
                &StateLoop::Iqc {
                    plant: &system.plant,
                    gains: &inst_gains,
                },
                &tf,
                &design,
                &cfg,
            )
            .map_err(map_sim_err)?;
            Ok((trace, Some(monitor_of(&design))))
        }
        "design-output" => {
            let system = super::design_state::resolve_artifact_system(&value)?;
            let need = |f: &str| {
                get_f64(&value, &[f])
                    .ok_or_else(|| CliError::Usage(format!("artifact missing {f}")))
            };
            let l1 = artifact::value_to_mat(
                crate::config::walk(&value, &["gains", "l1"])
                    .ok_or_else(|| CliError::Usage("artifact missing gains.l1".into()))?,
            )
            .ok_or_else(|| CliError::Usage("gains.l1 malformed".into()))?;
            let l2 = artifact::value_to_mat(
                crate::config::walk(&value, &["gains", "l2"])
                    .ok_or_else(|| CliError::Usage("artifact missing gains.l2".into()))?,
            )
            .ok_or_else(|| CliError::Usage("gains.l2 malformed".into()))?;
            let k1 = artifact::value_to_mat(
                crate::config::walk(&value, &["gains", "k1"])
                    .ok_or_else(|| CliError::Usage("artifact missing gains.k1".into()))?,
            )
            .ok_or_else(|| CliError::Usage("gains.k1 malformed".into()))?;
            let k2 = crate::config::walk(&value, &["gains", "k2"])
                .and_then(artifact::value_to_mat)
                .unwrap_or_else(|| petc_core::symmat::Mat::zeros(k1.rows(), system.plant.n_p()));
            let observer = petc_core::systems::ObserverDesign {
                l1,
                l2,
                gains: petc_core::systems::StateFeedbackGains::new(k1, k2),
            };
            let timing = OutputTimingDesign {
                channel_y: ChannelTiming {
                    base: TimingBase::new(need("mu1")?, need("gamma1")?)
                        .map_err(|e| CliError::Usage(e.to_string()))?,
                    lambda: need("lambda1")?,
                },
                channel_u: ChannelTiming {
                    base: TimingBase::new(need("mu2")?, need("gamma2")?)
                        .map_err(|e| CliError::Usage(e.to_string()))?,
                    lambda: need("lambda2")?,
                },
                h: need("h")?,
                s: need("s")?,
                alpha: need("alpha")?,
                alpha0: need("alpha0")?,
                d: need("d")?,
                c1: need("c1")?,
                c2: need("c2")?,
            };
            let p1 = artifact::value_to_sym(
                value
                    .get("p1")
                    .ok_or_else(|| CliError::Usage("artifact missing p1".into()))?,
            )
            .ok_or_else(|| CliError::Usage("p1 malformed".into()))?;
            let p2 = artifact::value_to_sym(
                value
                    .get("p2")
                    .ok_or_else(|| CliError::Usage("artifact missing p2".into()))?,
            )
            .ok_or_else(|| CliError::Usage("p2 malformed".into()))?;
            let p = artifact::value_to_sym(
                value
                    .get("p")
                    .ok_or_else(|| CliError::Usage("artifact missing p".into()))?,
            )
            .ok_or_else(|| CliError::Usage("p malformed".into()))?;
            let tf_y = TriggeringFunction::new(need("coef_y")?, timing.s, QuadForm::Matrix(p1))
                .map_err(map_sim_err)?;
            let tf_u = TriggeringFunction::new(need("coef_u")?, timing.s, QuadForm::Matrix(p2))
                .map_err(map_sim_err)?;
            let n_x = system.plant.n_x();
            let cfg = override_cfg(
                SimConfig {
                    h: timing.h,
                    t_end: 10.0,
                    substeps: 64,
                    seed: 0,
                    w_bound: vec![0.0; system.plant.n_w()],
                    x0: vec![0.1; n_x],
                    xhat0: Some(vec![0.0; n_x]),
                },
                args,
            );
            let trace = run_output_feedback(
                &system.plant,
                &observer,
                &tf_y,
                &tf_u,
                &timing,
                &cfg,
                Some(&p),
            )
            .map_err(map_sim_err)?;
            Ok((
                trace,
                Some(MonitorParams {
                    s: timing.s,
                    alpha: timing.alpha,
                    alpha0: timing.alpha0,
                    d: timing.d,
                }),
            ))
        }
        other => Err(CliError::Usage(format!(
            "artifact kind {other:?} is not simulatable; expected design-state or design-output"
        ))),
    }
}

fn write_outputs(
    args: &SimulateArgs,
    trace: &SimTrace,
    report: Option<&LyapunovReport>,
) -> Result<(), CliError> {
    let trace_path = args.out.join("trace.csv");
    artifact::write_trace_csv(&trace_path, trace)
        .map_err(|e| CliError::Failed(format!("writing {trace_path:?}: {e}")))?;
    let events_path = args.out.join("events.csv");
    artifact::write_events_csv(&events_path, trace)
        .map_err(|e| CliError::Failed(format!("writing {events_path:?}: {e}")))?;
    let fires: Vec<usize> = (0..trace.events.first().map_or(1, |e| e.fired.len()))
        .map(|ch| trace.fire_times(ch).len())
        .collect();
    let monitor_path = args.out.join("lyapunov.json");
    let value = match report {
        Some(report) => json!({
            "kind": "lyapunov-report",
            "monitored": true,
            "jump_violations": report.jump_violations,
            "worst_jump_excess": report.worst_jump_excess,
            "checked_jumps": report.checked_jumps,
            "flow_violations": report.flow_violations,
            "worst_flow_excess": report.worst_flow_excess,
            "checked_flow_points": report.checked_flow_points,
            "fires_per_channel": fires,
            "instants": trace.events.len(),
            "h": trace.h,
        }),
        None => json!({
            "kind": "lyapunov-report",
            "monitored": false,
            "fires_per_channel": fires,
            "instants": trace.events.len(),
            "h": trace.h,
        }),
    };
    artifact::write_json(&monitor_path, &value)
        .map_err(|e| CliError::Failed(format!("writing {monitor_path:?}: {e}")))?;
    logging::info(&format!(
        "wrote {}, {}, {}",
        trace_path.display(),
        events_path.display(),
        monitor_path.display()
    ));
    if args.plot {
        let plot_path = args.out.join("trace.svg");
        let n_x = trace.states.first().map_or(0, |x| x.len());
        let mut series = Vec::new();
        for i in 0..n_x {
            series.push(svg::Series {
                label: ["x1", "x2", "x3", "x4"][i.min(3)],
                xs: &trace.times,
                ys: trace.states.iter().map(|x| x[i]).collect(),
            });
        }
        if !trace.inputs.is_empty() && !trace.inputs[0].is_empty() {
            series.push(svg::Series {
                label: "u",
                xs: &trace.times,
                ys: trace.inputs.iter().map(|u| u[0]).collect(),
            });
        }
        svg::write_line_plot(&plot_path, "closed-loop trajectory", &series)
            .map_err(|e| CliError::Failed(format!("writing {plot_path:?}: {e}")))?;
        logging::info(&format!("wrote {}", plot_path.display()));
    }
    Ok(())
}
