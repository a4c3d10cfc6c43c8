//! JSON and CSV rendering of results.

use autoqec::dynamics::SweepRecord;
use autoqec::{CMatrix, CVector, C64};
use serde_json::{json, Value};

pub fn complex(z: C64) -> Value {
    json!([z.re, z.im])
}

/// Row-major nested arrays of `[re, im]` pairs.
pub fn matrix(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| complex(m[(i, j)])).collect()))
            .collect(),
    )
}

pub fn vector(v: &CVector) -> Value {
    Value::Array(v.iter().map(|z| complex(*z)).collect())
}

/// Finite numbers as JSON numbers, anything else as a string.
pub fn number(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

pub fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON renders") + "\n"
}

fn sci(x: f64) -> String {
    format!("{x:.12e}")
}

/// One row per (R, probe, t). The fit columns repeat the grid-wide log-log slope and its
/// standard error, empty when no fit exists.
pub fn sweep_csv(record: &SweepRecord, manifest: Option<&str>) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    if let Some(name) = manifest {
        buf.extend_from_slice(format!("# manifest: {name}\n").as_bytes());
    }
    let (slope, stderr) = match &record.fit {
        Ok(f) => (sci(-f.exponent), f.stderr.map(sci).unwrap_or_default()),
        Err(_) => (String::new(), String::new()),
    };
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["R", "probe", "t", "deviation", "kappa_eff", "fit_slope", "fit_stderr"])?;
        for cell in &record.cells {
            for (t, d) in cell.times.iter().zip(&cell.deviations) {
                w.write_record([
                    sci(cell.r),
                    record.probe_names[cell.probe].clone(),
                    sci(*t),
                    sci(*d),
                    sci(cell.kappa_eff),
                    slope.clone(),
                    stderr.clone(),
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(buf)
}
