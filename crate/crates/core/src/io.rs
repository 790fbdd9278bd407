//! File formats shared by the command-line tools.
//!
//! * tensor JSON `{"shape": [d1, ..., dm], "data": [...]}` in canonical order
//! * factorization JSON `{"core": tensor, "factors": [{"rows", "cols", "data"}, ...]}`
//! * observation CSV with header `i1,...,im,y` and 1-based indices
//! * linear-form CSV with header `i1,...,im,w` and 1-based indices
//!
//! Anything wrong with the content of a file is reported as [`Error::Parse`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::LinearForm;
use crate::matrix::Matrix;
use crate::sampling::ObservationSet;
use crate::tensor::{DenseTensor, Shape};
use crate::tucker::{TuckerDiagnostics, TuckerFactorization};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorFile {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnosticsFile {
    incoherence: Vec<f64>,
    mu: f64,
    lambda_min: f64,
    lambda_max: f64,
    kappa: f64,
    dof: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorizationFile {
    core: TensorFile,
    factors: Vec<MatrixFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnostics: Option<DiagnosticsFile>,
}

fn parse_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{what}: {e}"))
}

fn tensor_from_file(f: TensorFile) -> Result<DenseTensor> {
    let shape = Shape::new(f.shape).map_err(|e| parse_err("tensor file", e))?;
    DenseTensor::new(shape, f.data).map_err(|e| parse_err("tensor file", e))
}

fn tensor_to_file(t: &DenseTensor) -> TensorFile {
    TensorFile { shape: t.shape().dims().to_vec(), data: t.data().to_vec() }
}

pub fn tensor_from_json(text: &str) -> Result<DenseTensor> {
    tensor_from_file(serde_json::from_str(text).map_err(|e| parse_err("tensor file", e))?)
}

pub fn tensor_to_json(t: &DenseTensor) -> String {
    serde_json::to_string(&tensor_to_file(t)).expect("tensor serializes")
}

pub fn factorization_from_json(text: &str) -> Result<TuckerFactorization> {
    let f: FactorizationFile = serde_json::from_str(text).map_err(|e| parse_err("factorization file", e))?;
    let core = tensor_from_file(f.core)?;
    let factors = f
        .factors
        .into_iter()
        .map(|m| Matrix::new(m.rows, m.cols, m.data))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| parse_err("factorization file", e))?;
    TuckerFactorization::new(core, factors).map_err(|e| parse_err("factorization file", e))
}

/// Serializes the factors and core; diagnostics are included when they are finite.
pub fn factorization_to_json(f: &TuckerFactorization) -> String {
    let finite = |d: &TuckerDiagnostics| {
        d.incoherence.iter().chain([&d.lambda_min, &d.lambda_max, &d.kappa]).all(|v| v.is_finite())
    };
    let diagnostics = f.diagnostics().ok().filter(finite).map(|d| DiagnosticsFile {
        mu: d.mu(),
        incoherence: d.incoherence,
        lambda_min: d.lambda_min,
        lambda_max: d.lambda_max,
        kappa: d.kappa,
        dof: d.dof,
    });
    let file = FactorizationFile {
        core: tensor_to_file(f.core()),
        factors: f
            .factors()
            .iter()
            .map(|u| MatrixFile { rows: u.rows(), cols: u.cols(), data: u.data().to_vec() })
            .collect(),
        diagnostics,
    };
    serde_json::to_string_pretty(&file).expect("factorization serializes")
}

/// Rows of an index CSV whose last column is named `value`.
fn read_index_csv(text: &str, value: &str, what: &str) -> Result<Vec<(Vec<usize>, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(what, e))?.clone();
    let m = header.len().saturating_sub(1);
    if m < 2 {
        return Err(Error::Parse(format!("{what}: header needs at least i1,i2,{value}")));
    }
    for (k, name) in header.iter().enumerate() {
        let expected = if k == m { value.to_string() } else { format!("i{}", k + 1) };
        if name != expected {
            return Err(Error::Parse(format!("{what}: header column {} is {name:?}, expected {expected:?}", k + 1)));
        }
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(what, e))?;
        let row = line + 2;
        if rec.len() != m + 1 {
            return Err(Error::Parse(format!("{what}: row {row} has {} fields, expected {}", rec.len(), m + 1)));
        }
        let mut idx = Vec::with_capacity(m);
        for field in rec.iter().take(m) {
            let i: usize =
                field.parse().map_err(|_| Error::Parse(format!("{what}: row {row}: bad index {field:?}")))?;
            if i == 0 {
                return Err(Error::Parse(format!("{what}: row {row}: indices are 1-based")));
            }
            idx.push(i - 1);
        }
        let v: f64 = rec[m].parse().map_err(|_| Error::Parse(format!("{what}: row {row}: bad value {:?}", &rec[m])))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("{what}: row {row}: non-finite value")));
        }
        rows.push((idx, v));
    }
    Ok(rows)
}

fn resolve_shape(rows: &[(Vec<usize>, f64)], shape: Option<&Shape>, what: &str) -> Result<Shape> {
    let m = rows.first().map(|r| r.0.len());
    match shape {
        Some(s) => {
            if let Some(m) = m.filter(|m| *m != s.order()) {
                return Err(Error::Parse(format!("{what}: {m} index columns for an order-{} shape", s.order())));
            }
            Ok(s.clone())
        }
        None => {
            let m = m.ok_or_else(|| Error::Parse(format!("{what}: no rows to infer the shape from")))?;
            let dims = (0..m).map(|j| rows.iter().map(|r| r.0[j] + 1).max().unwrap_or(1)).collect();
            Shape::new(dims).map_err(|e| parse_err(what, e))
        }
    }
}

/// Reads observations; without `shape` the dimensions are the largest indices seen.
pub fn observations_from_csv(text: &str, shape: Option<&Shape>) -> Result<ObservationSet> {
    let what = "observation file";
    let rows = read_index_csv(text, "y", what)?;
    let shape = resolve_shape(&rows, shape, what)?;
    ObservationSet::new(shape, rows).map_err(|e| parse_err(what, e))
}

pub fn observations_to_csv(obs: &ObservationSet) -> String {
    let m = obs.shape().order();
    let mut out = header(m, "y");
    for (k, o) in obs.samples().iter().enumerate() {
        push_row(&mut out, &obs.index(k), o.y);
    }
    out
}

pub fn form_from_csv(text: &str, shape: &Shape) -> Result<LinearForm> {
    let what = "linear-form file";
    let rows = read_index_csv(text, "w", what)?;
    let shape = resolve_shape(&rows, Some(shape), what)?;
    LinearForm::new(shape, rows).map_err(|e| parse_err(what, e))
}

pub fn form_to_csv(form: &LinearForm) -> String {
    let mut out = header(form.shape().order(), "w");
    for (off, w) in form.entries() {
        push_row(&mut out, &form.shape().unravel(*off), *w);
    }
    out
}

fn header(m: usize, value: &str) -> String {
    let mut h: Vec<String> = (1..=m).map(|j| format!("i{j}")).collect();
    h.push(value.into());
    h.join(",") + "\n"
}

fn push_row(out: &mut String, idx: &[usize], v: f64) {
    for i in idx {
        out.push_str(&(i + 1).to_string());
        out.push(',');
    }
    out.push_str(&v.to_string());
    out.push('\n');
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
