//! Job configuration: JSON files plus flag overrides. A system block either
//! names a bundled demo ("example1", "example2", "example2-output") or
//! carries explicit matrices with a named nonlinearity.

use std::path::Path;

use petc_core::builtin;
use petc_core::iqc::{lipschitz_multiplier, Nonlinearity};
use petc_core::symmat::Mat;
use petc_core::systems::{IqcPlant, ObserverDesign, StateFeedbackGains};
use serde_json::Value;

use crate::artifact::{read_json, value_to_mat};
use crate::CliError;

pub fn load(path: &Path) -> Result<Value, CliError> {
    read_json(path).map_err(|e| CliError::Usage(format!("cannot read config {path:?}: {e}")))
}

pub fn get_f64(v: &Value, path: &[&str]) -> Option<f64> {
    walk(v, path)?.as_f64()
}

pub fn get_str<'a>(v: &'a Value, path: &[&str]) -> Option<&'a str> {
    walk(v, path)?.as_str()
}

pub fn walk<'a>(v: &'a Value, path: &[&str]) -> Option<&'a Value> {
    let mut cur = v;
    for key in path {
        cur = cur.get(key)?;
    }
    Some(cur)
}

fn require_mat(v: &Value, path: &[&str]) -> Result<Mat, CliError> {
    let node = walk(v, path)
        .ok_or_else(|| CliError::Usage(format!("config missing field {}", path.join("."))))?;
    value_to_mat(node)
        .ok_or_else(|| CliError::Usage(format!("field {} is not a numeric matrix", path.join("."))))
}

/// A plant resolved from a config system block, with whatever gains the
/// block carried.
pub struct ResolvedSystem {
    pub plant: IqcPlant,
    pub gains: Option<StateFeedbackGains>,
    pub observer: Option<ObserverDesign>,
    /// Bundled-demo name when the block referenced one.
    pub builtin: Option<String>,
}

/// Build a structured plant from an explicit system block.
pub fn resolve_system(cfg: &Value) -> Result<ResolvedSystem, CliError> {
    if let Some(name) = get_str(cfg, &["system", "builtin"]) {
        return resolve_builtin(name);
    }
    let a = require_mat(cfg, &["system", "a"])?;
    let n_x = a.rows();
    let b = require_mat(cfg, &["system", "b"])?;
    let e_w = require_mat(cfg, &["system", "e_w"])?;
    let c_q = require_mat(cfg, &["system", "c_q"])?;
    let nonlin = get_str(cfg, &["system", "nonlinearity"]).unwrap_or("none");
    let (e, p, m) = match nonlin {
        "sin" => {
            let e = require_mat(cfg, &["system", "e"])?;
            let l = get_f64(cfg, &["system", "lipschitz"]).unwrap_or(1.0);
            let m =
                lipschitz_multiplier(l, 1, 1).map_err(|err| CliError::Usage(err.to_string()))?;
            (e, Nonlinearity::sine(), m)
        }
        "none" => {
            let e = Mat::zeros(n_x, 1);
            let m =
                lipschitz_multiplier(1.0, 1, 1).map_err(|err| CliError::Usage(err.to_string()))?;
            (e, Nonlinearity::sine(), m)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown nonlinearity {other:?}; supported: sin, none"
            )))
        }
    };
    let c = walk(cfg, &["system", "c"])
        .map(|node| {
            value_to_mat(node).ok_or_else(|| CliError::Usage("field system.c malformed".into()))
        })
        .transpose()?;
    let plant = IqcPlant::new(a, b, e, e_w, c_q, c, p, m)
        .map_err(|err| CliError::Usage(err.to_string()))?;
    let gains = match walk(cfg, &["system", "gains"]) {
        Some(_) => Some(StateFeedbackGains::new(
            require_mat(cfg, &["system", "gains", "k1"])?,
            walk(cfg, &["system", "gains", "k2"])
                .and_then(value_to_mat)
                .unwrap_or_else(|| Mat::zeros(plant.n_u(), plant.n_p())),
        )),
        None => None,
    };
    let observer = match walk(cfg, &["system", "observer"]) {
        Some(_) => {
            let l1 = require_mat(cfg, &["system", "observer", "l1"])?;
            let l2 = require_mat(cfg, &["system", "observer", "l2"])?;
            let gains = gains
                .clone()
                .ok_or_else(|| CliError::Usage("observer block requires a gains block".into()))?;
            Some(ObserverDesign { l1, l2, gains })
        }
        None => None,
    };
    Ok(ResolvedSystem {
        plant,
        gains,
        observer,
        builtin: None,
    })
}

pub fn resolve_builtin(name: &str) -> Result<ResolvedSystem, CliError> {
    match name {
        "example2" => {
            let ex = builtin::example2_state();
            Ok(ResolvedSystem {
                plant: ex.plant,
                gains: Some(ex.gains),
                observer: None,
                builtin: Some("example2".into()),
            })
        }
        "example2-output" => {
            let ex = builtin::example2_output();
            Ok(ResolvedSystem {
                plant: ex.plant,
                gains: Some(ex.observer.gains.clone()),
                observer: Some(ex.observer),
                builtin: Some("example2-output".into()),
            })
        }
        "example1" => Err(CliError::Usage(
            "example1 is a general nonlinear plant; it supports simulate/montecarlo/example, \
             not the structured design pipelines"
                .into(),
        )),
        other => Err(CliError::Usage(format!(
            "unknown builtin {other:?}; available: example1, example2, example2-output"
        ))),
    }
}
