//! File formats.
//!
//! Binary formats start with a one-line ASCII header naming the format, the
//! shape and the element type, followed by little-endian `f64` data:
//!
//! ```text
//! PMAT1 <N> <C> f64      prediction matrix, N*C values, row-major
//! FMAT1 <N> <d> f64      feature matrix, N*d values, row-major
//! DMAT1 <n> f64          distance matrix, strict upper triangle, row-major
//! CLF1 <C> <d> f64       imprinted classifier, C*d weights then C u64 counts
//! ```
//!
//! Labels are text: a `LBL1 <N> <C>` header and one integer per line.
//! Small prediction matrices may also be given as CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{DistanceMatrix, Embedding};
use crate::error::{Error, Result};
use crate::imprint::{FeatureMatrix, ImprintedClassifier};
use crate::model::{check_row, LabelVector, PredictionMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Pmat,
    Fmat,
    Dmat,
    Clf,
    Lbl,
    Csv,
}

impl Format {
    fn magic(self) -> &'static str {
        match self {
            Format::Pmat => "PMAT1",
            Format::Fmat => "FMAT1",
            Format::Dmat => "DMAT1",
            Format::Clf => "CLF1",
            Format::Lbl => "LBL1",
            Format::Csv => "",
        }
    }

    fn header_dims(self) -> usize {
        match self {
            Format::Dmat => 1,
            _ => 2,
        }
    }
}

/// Guesses the format from the first header token, falling back to CSV.
pub fn detect_format(bytes: &[u8]) -> Format {
    let first = bytes
        .split(|&b| b == b' ' || b == b'\n')
        .next()
        .unwrap_or_default();
    [Format::Pmat, Format::Fmat, Format::Dmat, Format::Clf, Format::Lbl]
        .into_iter()
        .find(|f| f.magic().as_bytes() == first)
        .unwrap_or(Format::Csv)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

/// Splits off the header line and checks magic, dimension count and dtype.
fn parse_header(bytes: &[u8], format: Format) -> Result<(Vec<usize>, &[u8])> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format(format!("missing {} header line", format.magic())))?;
    let line = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
    if tokens.first() != Some(&format.magic()) {
        return Err(Error::Format(format!(
            "expected magic {}, found {:?}",
            format.magic(),
            tokens.first().copied().unwrap_or("")
        )));
    }
    let k = format.header_dims();
    let with_dtype = format != Format::Lbl;
    let expected = 1 + k + usize::from(with_dtype);
    if tokens.len() != expected {
        return Err(Error::Format(format!(
            "malformed header {line:?}: expected {expected} fields"
        )));
    }
    if with_dtype && tokens[expected - 1] != "f64" {
        return Err(Error::Format(format!(
            "unsupported element type {:?}",
            tokens[expected - 1]
        )));
    }
    let dims = tokens[1..=k]
        .iter()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Format(format!("malformed header {line:?}: bad dimension {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dims, &bytes[end + 1..]))
}

fn header(format: Format, dims: &[usize]) -> Vec<u8> {
    let mut h = format.magic().to_string();
    for d in dims {
        h.push_str(&format!(" {d}"));
    }
    if format != Format::Lbl {
        h.push_str(" f64");
    }
    h.push('\n');
    h.into_bytes()
}

fn expect_len(data: &[u8], count: usize, elem: usize) -> Result<()> {
    let expected = count
        .checked_mul(elem)
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    if data.len() != expected {
        let what = if data.len() < expected { "truncated" } else { "oversized" };
        return Err(Error::Format(format!(
            "{what} data: expected {expected} bytes, found {}",
            data.len()
        )));
    }
    Ok(())
}

fn decode_f64(data: &[u8]) -> Vec<f64> {
    data.chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

fn encode_f64(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_pmat(p: &PredictionMatrix) -> Vec<u8> {
    let mut out = header(Format::Pmat, &[p.n_samples(), p.n_classes()]);
    encode_f64(&mut out, p.as_slice());
    out
}

/// Decodes and validates a PMAT. Rows are checked but not renormalized.
pub fn decode_pmat(bytes: &[u8]) -> Result<PredictionMatrix> {
    let (dims, data) = parse_header(bytes, Format::Pmat)?;
    expect_len(data, dims[0] * dims[1], 8)?;
    PredictionMatrix::new(dims[0], dims[1], decode_f64(data))
}

pub fn write_pmat_file(path: impl AsRef<Path>, p: &PredictionMatrix) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pmat(p))
}

pub fn read_pmat_file(path: impl AsRef<Path>) -> Result<PredictionMatrix> {
    let path = path.as_ref();
    decode_pmat(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

/// Parses comma-separated rows. Blank lines and lines starting with `#` are
/// skipped; a first line that is not numeric is taken as a column header.
pub fn decode_pmat_csv(text: &str) -> Result<PredictionMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut c = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let row = match parsed {
            Ok(r) => r,
            Err(_) if rows.is_empty() && c.is_none() => {
                c = Some(line.split(',').count());
                continue;
            }
            Err(_) => {
                return Err(Error::Format(format!("line {}: non-numeric entry", lineno + 1)))
            }
        };
        let width = *c.get_or_insert(row.len());
        if row.len() != width {
            return Err(Error::Format(format!(
                "line {}: {} columns, expected {width}",
                lineno + 1,
                row.len()
            )));
        }
        check_row(&row, rows.len())?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("CSV contains no rows".into()));
    }
    PredictionMatrix::from_rows(&rows)
}

pub fn encode_pmat_csv(p: &PredictionMatrix) -> String {
    let mut s = String::new();
    for row in p.rows() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Reads a model from a PMAT or CSV file, chosen by content.
pub fn read_model(path: impl AsRef<Path>) -> Result<PredictionMatrix> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let result = match detect_format(&bytes) {
        Format::Pmat => decode_pmat(&bytes),
        Format::Csv => std::str::from_utf8(&bytes)
            .map_err(|_| Error::Format("CSV is not UTF-8".into()))
            .and_then(decode_pmat_csv),
        other => Err(Error::Format(format!("expected a prediction matrix, found {other:?}"))),
    };
    result.map_err(|e| with_path(e, path))
}

pub fn encode_labels(labels: &LabelVector) -> Vec<u8> {
    let mut out = header(Format::Lbl, &[labels.len(), labels.n_classes()]);
    for l in labels.as_slice() {
        out.extend_from_slice(format!("{l}\n").as_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelVector> {
    let (dims, data) = parse_header(bytes, Format::Lbl)?;
    let text = std::str::from_utf8(data).map_err(|_| Error::Format("labels are not UTF-8".into()))?;
    let (n, c) = (dims[0], dims[1]);
    let mut labels = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let l: usize = line
            .parse()
            .map_err(|_| Error::Format(format!("line {}: {line:?} is not a label", i + 2)))?;
        if l >= c {
            return Err(Error::Validation(format!(
                "line {}: label {l} out of range for {c} classes",
                i + 2
            )));
        }
        labels.push(l);
    }
    if labels.len() != n {
        return Err(Error::Format(format!(
            "header announces {n} labels, found {}",
            labels.len()
        )));
    }
    LabelVector::new(labels, c)
}

pub fn write_labels_file(path: impl AsRef<Path>, labels: &LabelVector) -> Result<()> {
    write_bytes(path.as_ref(), &encode_labels(labels))
}

pub fn read_labels_file(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    decode_labels(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

pub fn encode_fmat(f: &FeatureMatrix) -> Vec<u8> {
    let mut out = header(Format::Fmat, &[f.n_samples(), f.dim()]);
    encode_f64(&mut out, f.as_slice());
    out
}

pub fn decode_fmat(bytes: &[u8]) -> Result<FeatureMatrix> {
    let (dims, data) = parse_header(bytes, Format::Fmat)?;
    expect_len(data, dims[0] * dims[1], 8)?;
    FeatureMatrix::new(dims[0], dims[1], decode_f64(data))
}

pub fn write_fmat_file(path: impl AsRef<Path>, f: &FeatureMatrix) -> Result<()> {
    write_bytes(path.as_ref(), &encode_fmat(f))
}

pub fn read_fmat_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    decode_fmat(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

pub fn encode_dmat(d: &DistanceMatrix) -> Vec<u8> {
    let mut out = header(Format::Dmat, &[d.n()]);
    encode_f64(&mut out, &d.upper_triangle());
    out
}

pub fn decode_dmat(bytes: &[u8]) -> Result<DistanceMatrix> {
    let (dims, data) = parse_header(bytes, Format::Dmat)?;
    let n = dims[0];
    expect_len(data, n * n.saturating_sub(1) / 2, 8)?;
    DistanceMatrix::from_upper(n, &decode_f64(data))
}

pub fn write_dmat_file(path: impl AsRef<Path>, d: &DistanceMatrix) -> Result<()> {
    write_bytes(path.as_ref(), &encode_dmat(d))
}

pub fn read_dmat_file(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
    let path = path.as_ref();
    decode_dmat(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

pub fn encode_clf(clf: &ImprintedClassifier) -> Vec<u8> {
    let mut out = header(Format::Clf, &[clf.n_classes(), clf.dim()]);
    encode_f64(&mut out, clf.weights());
    for &c in clf.class_counts() {
        out.extend_from_slice(&(c as u64).to_le_bytes());
    }
    out
}

pub fn decode_clf(bytes: &[u8]) -> Result<ImprintedClassifier> {
    let (dims, data) = parse_header(bytes, Format::Clf)?;
    let (c, d) = (dims[0], dims[1]);
    expect_len(data, c * d + c, 8)?;
    let (w, counts) = data.split_at(c * d * 8);
    let counts = counts
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()) as usize)
        .collect();
    ImprintedClassifier::from_parts(c, d, decode_f64(w), counts)
}

pub fn write_clf_file(path: impl AsRef<Path>, clf: &ImprintedClassifier) -> Result<()> {
    write_bytes(path.as_ref(), &encode_clf(clf))
}

pub fn read_clf_file(path: impl AsRef<Path>) -> Result<ImprintedClassifier> {
    let path = path.as_ref();
    decode_clf(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

/// Sidecar metadata written next to an embedding CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub n: usize,
    pub k: usize,
    pub eigenvalues: Vec<f64>,
    pub signature: Vec<i8>,
    pub stress: Vec<f64>,
}

/// `index,coord_1,...,coord_k`, one row per model. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn encode_embedding_csv(e: &Embedding) -> String {
    let mut s = String::from("index");
    for i in 1..=e.k() {
        s.push_str(&format!(",coord_{i}"));
    }
    s.push('\n');
    for u in 0..e.n() {
        s.push_str(&u.to_string());
        for x in e.coords(u) {
            s.push_str(&format!(",{x:?}"));
        }
        s.push('\n');
    }
    s
}

pub fn embedding_meta(e: &Embedding) -> EmbeddingMeta {
    EmbeddingMeta {
        n: e.n(),
        k: e.k(),
        eigenvalues: e.eigenvalues().to_vec(),
        signature: e.signature().to_vec(),
        stress: e.stress_curve().to_vec(),
    }
}

pub fn decode_embedding(csv: &str, meta: &EmbeddingMeta) -> Result<Embedding> {
    let mut lines = csv.lines();
    let head = lines.next().ok_or_else(|| Error::Format("empty embedding CSV".into()))?;
    if head.split(',').count() != meta.k + 1 {
        return Err(Error::Format(format!(
            "embedding header has {} columns, expected {}",
            head.split(',').count(),
            meta.k + 1
        )));
    }
    let mut coords = Vec::with_capacity(meta.n * meta.k);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let mut cells = line.split(',');
        let index: usize = cells
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Format(format!("line {}: missing index", i + 2)))?;
        if index != rows {
            return Err(Error::Format(format!("line {}: index {index}, expected {rows}", i + 2)));
        }
        for t in cells {
            coords.push(
                t.parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: bad coordinate {t:?}", i + 2)))?,
            );
        }
        rows += 1;
    }
    if rows != meta.n {
        return Err(Error::Format(format!("embedding has {rows} rows, expected {}", meta.n)));
    }
    Embedding::from_parts(
        meta.n,
        meta.k,
        coords,
        meta.signature.clone(),
        meta.eigenvalues.clone(),
        meta.stress.clone(),
    )
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn write_embedding(stem: impl AsRef<Path>, e: &Embedding) -> Result<()> {
    let stem = stem.as_ref();
    write_bytes(&stem.with_extension("csv"), encode_embedding_csv(e).as_bytes())?;
    write_json(stem.with_extension("json"), &embedding_meta(e))
}

pub fn read_embedding(stem: impl AsRef<Path>) -> Result<Embedding> {
    let stem = stem.as_ref();
    let csv_path = stem.with_extension("csv");
    let csv = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let meta: EmbeddingMeta = read_json(stem.with_extension("json"))?;
    decode_embedding(&csv, &meta)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path.as_ref(), s.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Summary of a file that passed validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub path: String,
    pub format: Format,
    pub shape: Vec<usize>,
}

/// Decodes a file of any supported format and runs its invariant checks.
pub fn validate(path: impl AsRef<Path>) -> Result<ValidationReport> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let format = detect_format(&bytes);
    let shape = match format {
        Format::Pmat => {
            let p = decode_pmat(&bytes);
            p.map(|p| vec![p.n_samples(), p.n_classes()])
        }
        Format::Csv => std::str::from_utf8(&bytes)
            .map_err(|_| Error::Format("file is neither a known binary format nor UTF-8 CSV".into()))
            .and_then(decode_pmat_csv)
            .map(|p| vec![p.n_samples(), p.n_classes()]),
        Format::Fmat => decode_fmat(&bytes).map(|f| vec![f.n_samples(), f.dim()]),
        Format::Dmat => decode_dmat(&bytes).map(|d| vec![d.n()]),
        Format::Clf => decode_clf(&bytes).map(|c| vec![c.n_classes(), c.dim()]),
        Format::Lbl => decode_labels(&bytes).map(|l| vec![l.len(), l.n_classes()]),
    }
    .map_err(|e| with_path(e, path))?;
    Ok(ValidationReport {
        path: path.display().to_string(),
        format,
        shape,
    })
}
