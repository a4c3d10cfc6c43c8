//! JSON model files: ingestion with field diagnostics, canonical serialization and hashing.

use std::fmt;
use std::path::Path;

use autoqec::factory::models::{builtin_model, CodeModel, BUILTIN_NAMES};
use autoqec::{CMatrix, CVector, Operator, C64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Orthonormality tolerance applied at ingest.
pub const INGEST_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelError(pub String);

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ModelError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ModelError> {
    Err(ModelError(msg.into()))
}

/// A complex number written as `[re, im]` or as a bare real.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Num {
    Pair([f64; 2]),
    Real(f64),
}

impl Num {
    fn value(self) -> C64 {
        match self {
            Num::Pair([re, im]) => C64::new(re, im),
            Num::Real(re) => C64::new(re, 0.0),
        }
    }

    fn of(z: C64) -> Self {
        Num::Pair([z.re, z.im])
    }
}

type RawVector = Vec<Num>;
type RawMatrix = Vec<Vec<Num>>;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawJumps {
    Builtin(String),
    Matrices(Vec<RawMatrix>),
}

/// Defaults a model file may carry for sweep-type subcommands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmax: Option<usize>,
}

impl SweepDefaults {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    code_basis: Option<Vec<RawVector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    natural_jumps: Option<RawJumps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order: Option<usize>,
    #[serde(default, rename = "H0_logical", alias = "h0_logical", skip_serializing_if = "Option::is_none")]
    h0_logical: Option<RawMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    return_states: Option<Vec<RawVector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra_errors: Option<Vec<RawMatrix>>,
    #[serde(default, skip_serializing_if = "SweepDefaults::is_empty")]
    sweep: SweepDefaults,
}

/// A validated model plus optional sweep defaults.
#[derive(Clone, Debug)]
pub struct ModelFile {
    pub model: CodeModel,
    pub sweep: SweepDefaults,
}

fn vector(field: &str, raw: &[Num], dim: usize) -> Result<CVector, ModelError> {
    if raw.len() != dim {
        return err(format!("{field}: expected {dim} entries, found {}", raw.len()));
    }
    Ok(CVector::from_iterator(dim, raw.iter().map(|z| z.value())))
}

fn matrix(field: &str, raw: &RawMatrix, rows: usize, cols: usize) -> Result<CMatrix, ModelError> {
    if raw.len() != rows {
        return err(format!("{field}: expected {rows}x{cols} matrix, found {} rows", raw.len()));
    }
    for (i, row) in raw.iter().enumerate() {
        if row.len() != cols {
            return err(format!("{field}[{i}]: expected {cols} columns, found {}", row.len()));
        }
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| raw[i][j].value()))
}

fn operator(field: &str, raw: &RawMatrix, dim: usize) -> Result<Operator, ModelError> {
    Operator::new(matrix(field, raw, dim, dim)?).map_err(|e| ModelError(format!("{field}: {e}")))
}

fn builtin(name: &str) -> Result<CodeModel, ModelError> {
    builtin_model(name).map_err(|_| {
        ModelError(format!(
            "unknown builtin model {name:?} (known: {})",
            BUILTIN_NAMES.join(", ")
        ))
    })
}

fn build(raw: RawModel) -> Result<ModelFile, ModelError> {
    let mut model = match &raw.builtin {
        Some(name) => {
            for (field, set) in [
                ("dim", raw.dim.is_some()),
                ("code_basis", raw.code_basis.is_some()),
                ("natural_jumps", raw.natural_jumps.is_some()),
            ] {
                if set {
                    return err(format!("{field}: cannot be combined with \"builtin\""));
                }
            }
            builtin(name)?
        }
        None => {
            let Some(dim) = raw.dim else {
                return err("dim: missing field");
            };
            if dim == 0 {
                return err("dim: must be positive");
            }
            let Some(basis) = &raw.code_basis else {
                return err("code_basis: missing field");
            };
            let code_basis = basis
                .iter()
                .enumerate()
                .map(|(i, v)| vector(&format!("code_basis[{i}]"), v, dim))
                .collect::<Result<Vec<_>, _>>()?;
            let jumps = match &raw.natural_jumps {
                None => return err("natural_jumps: missing field"),
                Some(RawJumps::Builtin(name)) => {
                    let b = builtin(name)?;
                    if b.dim != dim {
                        return err(format!(
                            "natural_jumps: builtin {name:?} has dimension {}, model has {dim}",
                            b.dim
                        ));
                    }
                    b.natural_jumps
                }
                Some(RawJumps::Matrices(ms)) => ms
                    .iter()
                    .enumerate()
                    .map(|(k, m)| operator(&format!("natural_jumps[{k}]"), m, dim))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            let name = raw.name.clone().unwrap_or_else(|| "model".into());
            CodeModel {
                name,
                dim,
                code_basis,
                natural_jumps: jumps,
                order: 1,
                h0_logical: None,
                return_states: None,
                extra_errors: Vec::new(),
            }
        }
    };
    if let Some(name) = raw.name {
        model.name = name;
    }
    if let Some(order) = raw.order {
        model.order = order;
    }
    let dim = model.dim;
    let dc = model.code_basis.len();
    if let Some(h) = &raw.h0_logical {
        let m = matrix("H0_logical", h, dc, dc)?;
        if (&m - m.adjoint()).norm() > 1e-10 * m.norm().max(1.0) {
            return err("H0_logical: not Hermitian");
        }
        model.h0_logical = Some(m);
    }
    if let Some(rs) = &raw.return_states {
        model.return_states = Some(
            rs.iter()
                .enumerate()
                .map(|(i, v)| vector(&format!("return_states[{i}]"), v, dim))
                .collect::<Result<_, _>>()?,
        );
    }
    if let Some(es) = &raw.extra_errors {
        model.extra_errors = es
            .iter()
            .enumerate()
            .map(|(k, m)| operator(&format!("extra_errors[{k}]"), m, dim))
            .collect::<Result<_, _>>()?;
    }
    model
        .validate(INGEST_TOLERANCE)
        .map_err(|e| ModelError(format!("model rejected: {e}")))?;
    Ok(ModelFile {
        model,
        sweep: raw.sweep,
    })
}

/// Parses model JSON; `origin` names the source in diagnostics.
pub fn parse_model_str(text: &str, origin: &str) -> Result<ModelFile, ModelError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawModel = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ModelError(format!(
            "{origin}:{}:{}: field {path}: {inner}",
            inner.line(),
            inner.column()
        ))
    })?;
    build(raw).map_err(|e| ModelError(format!("{origin}: {e}")))
}

pub fn parse_model(path: &Path) -> Result<ModelFile, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError(format!("{}: {e}", path.display())))?;
    parse_model_str(&text, &path.display().to_string())
}

/// A path to a model file, or a builtin name when no such file exists.
pub fn resolve_model(spec: &str) -> Result<ModelFile, ModelError> {
    let path = Path::new(spec);
    if path.exists() {
        return parse_model(path);
    }
    if BUILTIN_NAMES.contains(&spec) {
        return Ok(ModelFile {
            model: builtin(spec)?,
            sweep: SweepDefaults::default(),
        });
    }
    err(format!(
        "{spec}: no such file and not a builtin model (known: {})",
        BUILTIN_NAMES.join(", ")
    ))
}

fn raw_vector(v: &CVector) -> RawVector {
    v.iter().map(|z| Num::of(*z)).collect()
}

fn raw_matrix(m: &CMatrix) -> RawMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| Num::of(m[(i, j)])).collect())
        .collect()
}

fn to_raw(file: &ModelFile) -> RawModel {
    let m = &file.model;
    RawModel {
        builtin: None,
        name: Some(m.name.clone()),
        dim: Some(m.dim),
        code_basis: Some(m.code_basis.iter().map(raw_vector).collect()),
        natural_jumps: Some(RawJumps::Matrices(
            m.natural_jumps.iter().map(|f| raw_matrix(f.matrix())).collect(),
        )),
        order: Some(m.order),
        h0_logical: m.h0_logical.as_ref().map(raw_matrix),
        return_states: m
            .return_states
            .as_ref()
            .map(|rs| rs.iter().map(raw_vector).collect()),
        extra_errors: (!m.extra_errors.is_empty())
            .then(|| m.extra_errors.iter().map(|f| raw_matrix(f.matrix())).collect()),
        sweep: file.sweep.clone(),
    }
}

/// Fully expanded JSON (no builtin references).
pub fn serialize_model(file: &ModelFile) -> String {
    serde_json::to_string_pretty(&to_raw(file)).expect("model serializes")
}

/// SHA-256 of the compact expanded JSON.
pub fn model_hash(file: &ModelFile) -> String {
    let compact = serde_json::to_string(&to_raw(file)).expect("model serializes");
    hex::encode(Sha256::digest(compact.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_expands() {
        let f = parse_model_str(r#"{"builtin": "toy6"}"#, "t").unwrap();
        assert_eq!(f.model.dim, 6);
        assert_eq!(f.model.natural_jumps.len(), 2);
    }

    #[test]
    fn round_trip_preserves_hash() {
        let f = parse_model_str(r#"{"builtin": "toy6", "order": 1, "sweep": {"r": "10:100:3log"}}"#, "t").unwrap();
        let g = parse_model_str(&serialize_model(&f), "t").unwrap();
        assert_eq!(model_hash(&f), model_hash(&g));
        assert_eq!(g.sweep.r.as_deref(), Some("10:100:3log"));
    }

    #[test]
    fn jump_dimension_mismatch_names_index() {
        let text = r#"{"dim": 2, "code_basis": [[1, 0]],
            "natural_jumps": [[[0, 1], [0, 0]], [[0, 1, 0], [0, 0, 0], [0, 0, 0]]]}"#;
        let e = parse_model_str(text, "m.json").unwrap_err();
        assert!(e.0.contains("natural_jumps[1]"), "{e}");
    }

    #[test]
    fn non_orthonormal_basis_rejected() {
        let text = r#"{"dim": 2, "code_basis": [[1, 0], [1, 1]], "natural_jumps": []}"#;
        let e = parse_model_str(text, "m.json").unwrap_err();
        assert!(e.0.contains("rejected"), "{e}");
    }

    #[test]
    fn schema_error_has_location() {
        let text = "{\"dim\": 2,\n \"code_basis\": [[1, \"x\"]]}";
        let e = parse_model_str(text, "m.json").unwrap_err();
        assert!(e.0.starts_with("m.json:2:"), "{e}");
        assert!(e.0.contains("code_basis"), "{e}");
    }

    #[test]
    fn complex_entries_accepted() {
        let s = 0.5f64.sqrt();
        let text = format!(
            r#"{{"dim": 2, "code_basis": [[[{s}, 0], [0, {s}]]], "natural_jumps": [], "order": 0}}"#
        );
        let f = parse_model_str(&text, "m.json").unwrap();
        assert_eq!(f.model.code_basis[0][1], C64::new(0.0, s));
    }
}
