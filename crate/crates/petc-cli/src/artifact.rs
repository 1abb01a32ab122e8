//! Artifact emission: JSON files (UTF-8, two-space indent, keys sorted by
//! the default serde_json map) and RFC-4180 CSV (CRLF line endings).

use std::fs;
use std::io::Write;
use std::path::Path;

use petc_core::sim::SimTrace;
use petc_core::symmat::{Mat, SymMatrix};
use serde_json::{json, Value};

pub fn write_json(path: &Path, value: &Value) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn read_json(path: &Path) -> std::io::Result<Value> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}

pub fn mat_to_value(m: &Mat) -> Value {
    let rows: Vec<Value> = (0..m.rows())
        .map(|i| Value::Array((0..m.cols()).map(|j| json!(m[(i, j)])).collect()))
        .collect();
    Value::Array(rows)
}

pub fn sym_to_value(m: &SymMatrix) -> Value {
    let rows: Vec<Value> = (0..m.n())
        .map(|i| Value::Array((0..m.n()).map(|j| json!(m.get(i, j))).collect()))
        .collect();
    Value::Array(rows)
}

pub fn value_to_mat(v: &Value) -> Option<Mat> {
    let rows = v.as_array()?;
    let r = rows.len();
    let c = rows.first()?.as_array()?.len();
    let mut data = Vec::with_capacity(r * c);
    for row in rows {
        let row = row.as_array()?;
        if row.len() != c {
            return None;
        }
        for x in row {
            data.push(x.as_f64()?);
        }
    }
    Some(Mat::from_vec(r, c, data))
}

pub fn value_to_sym(v: &Value) -> Option<SymMatrix> {
    let m = value_to_mat(v)?;
    if m.rows() != m.cols() {
        return None;
    }
    Some(SymMatrix::from_mat_symmetrized(&m))
}

struct Csv {
    out: Vec<u8>,
}

impl Csv {
    fn new() -> Self {
        Csv { out: Vec::new() }
    }

    fn row(&mut self, fields: &[String]) {
        self.out.extend_from_slice(fields.join(",").as_bytes());
        self.out.extend_from_slice(b"\r\n");
    }

    fn save(self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&self.out)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// Dense trajectory CSV: time, state, estimate (when present), input,
/// disturbance, held signals, storage value, clock value(s).
pub fn write_trace_csv(path: &Path, trace: &SimTrace) -> std::io::Result<()> {
    let mut csv = Csv::new();
    let n_x = trace.states.first().map_or(0, |x| x.len());
    let n_xh = trace.estimates.first().map_or(0, |x| x.len());
    let n_u = trace.inputs.first().map_or(0, |x| x.len());
    let n_w = trace.disturbances.first().map_or(0, |x| x.len());
    let n_held = trace.held.first().map_or(0, |x| x.len());
    let n_phi = trace.phi_values.first().map_or(0, |x| x.len());
    let mut header = vec!["time".to_string()];
    header.extend((1..=n_x).map(|i| format!("x{i}")));
    header.extend((1..=n_xh).map(|i| format!("xhat{i}")));
    header.extend((1..=n_u).map(|i| format!("u{i}")));
    header.extend((1..=n_w).map(|i| format!("w{i}")));
    header.extend((1..=n_held).map(|i| format!("held{i}")));
    header.push("V".to_string());
    if n_phi == 1 {
        header.push("phi".to_string());
    } else {
        header.extend((1..=n_phi).map(|i| format!("phi{i}")));
    }
    csv.row(&header);
    for g in 0..trace.times.len() {
        let mut row = vec![fmt(trace.times[g])];
        row.extend(trace.states[g].iter().map(|&v| fmt(v)));
        if n_xh > 0 {
            row.extend(trace.estimates[g].iter().map(|&v| fmt(v)));
        }
        row.extend(trace.inputs[g].iter().map(|&v| fmt(v)));
        row.extend(trace.disturbances[g].iter().map(|&v| fmt(v)));
        row.extend(trace.held[g].iter().map(|&v| fmt(v)));
        row.push(fmt(trace.v_values[g]));
        row.extend(trace.phi_values[g].iter().map(|&v| fmt(v)));
        csv.row(&row);
    }
    csv.save(path)
}

/// Event log CSV: one row per sampling instant with triggering values and
/// fire flags per channel.
pub fn write_events_csv(path: &Path, trace: &SimTrace) -> std::io::Result<()> {
    let mut csv = Csv::new();
    let channels = trace.events.first().map_or(1, |e| e.gammas.len());
    let header = if channels == 1 {
        vec![
            "t_k".to_string(),
            "Gamma_x".to_string(),
            "fired".to_string(),
        ]
    } else {
        vec![
            "t_k".to_string(),
            "Gamma_y".to_string(),
            "Gamma_u".to_string(),
            "fired_y".to_string(),
            "fired_u".to_string(),
        ]
    };
    csv.row(&header);
    for e in &trace.events {
        let mut row = vec![fmt(e.t)];
        row.extend(e.gammas.iter().map(|&g| fmt(g)));
        row.extend(
            e.fired
                .iter()
                .map(|&f| if f { "1".into() } else { "0".into() }),
        );
        csv.row(&row);
    }
    csv.save(path)
}
