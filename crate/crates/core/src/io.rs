//! Dataset, configuration and assignment files.
//!
//! CSV datasets have a header row, the sample id in the first column,
//! features in the middle and an optional trailing `label` column. Binary
//! datasets are `GCLS`, a version byte, little-endian `u32` n and d, n·d
//! `f32` values and optionally n `i32` labels.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Algorithm, Dataset, RunConfig};

pub const MAGIC: &[u8; 4] = b"GCLS";
pub const BINARY_VERSION: u8 = 1;
const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "bin" | "binary" => Ok(Format::Binary),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset> {
    let context = path.display().to_string();
    let with_path = |e: Error| match e {
        Error::Parse { message, .. } => Error::parse(context.clone(), message),
        other => other,
    };
    match format {
        Format::Csv => read_csv(File::open(path)?).map_err(with_path),
        Format::Binary => read_binary(&std::fs::read(path)?).map_err(with_path),
    }
}

pub fn save_dataset(path: &Path, data: &Dataset, format: Format) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_csv(&mut out, data)?,
        Format::Binary => write_binary(&mut out, data)?,
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse("csv header", e.to_string()))?
        .clone();
    let has_label = header.len() >= 2 && header.get(header.len() - 1) == Some("label");
    let dim = header.len().saturating_sub(1 + usize::from(has_label));
    if dim == 0 {
        return Err(Error::parse("line 1", "header needs an id column and at least one feature"));
    }

    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let at = || format!("line {line}");
        if record.len() != header.len() {
            return Err(Error::parse(
                at(),
                format!("{} fields, header has {}", record.len(), header.len()),
            ));
        }
        ids.push(record[0].to_string());
        for (col, cell) in record.iter().skip(1).take(dim).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(at(), format!("column {}: `{cell}` is not a number", col + 2)))?;
            if !v.is_finite() {
                return Err(Error::parse(at(), format!("column {}: non-finite value `{cell}`", col + 2)));
            }
            values.push(v);
        }
        if has_label {
            let cell = &record[header.len() - 1];
            let label = cell
                .parse::<i64>()
                .map_err(|_| Error::parse(at(), format!("label `{cell}` is not an integer")))?;
            labels.push(label);
        }
    }
    Dataset::new(ids, values, dim, has_label.then_some(labels))
}

/// Writes values with their shortest round-trip representation.
pub fn write_csv<W: Write>(out: &mut W, data: &Dataset) -> Result<()> {
    let mut header = vec!["id".to_string()];
    header.extend((0..data.dim()).map(|j| format!("f{j}")));
    if data.ground_truth().is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.len() {
        let mut line = data.ids()[i].clone();
        for v in data.row(i) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        if let Some(truth) = data.ground_truth() {
            line.push(',');
            line.push_str(&truth[i].to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_binary(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(
            "binary header",
            format!("expected {HEADER_LEN} bytes, found {}", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::parse("offset 0", "missing GCLS magic"));
    }
    if bytes[4] != BINARY_VERSION {
        return Err(Error::parse("offset 4", format!("unsupported version {}", bytes[4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let n = u32_at(5);
    let d = u32_at(9);
    if d == 0 {
        return Err(Error::parse("offset 9", "dimension must be at least 1"));
    }
    let payload = &bytes[HEADER_LEN..];
    let value_bytes = n * d * 4;
    let label_bytes = n * 4;
    if payload.len() < value_bytes {
        return Err(Error::parse(
            format!("offset {HEADER_LEN}"),
            format!("truncated values: expected {value_bytes} bytes, found {}", payload.len()),
        ));
    }
    let rest = payload.len() - value_bytes;
    if rest != 0 && rest != label_bytes {
        return Err(Error::parse(
            format!("offset {}", HEADER_LEN + value_bytes),
            format!("expected 0 or {label_bytes} label bytes, found {rest}"),
        ));
    }
    let mut values = Vec::with_capacity(n * d);
    for (i, chunk) in payload[..value_bytes].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(Error::parse(
                format!("offset {}", HEADER_LEN + 4 * i),
                format!("non-finite value at row {}, column {}", i / d, i % d),
            ));
        }
        values.push(f64::from(v));
    }
    let labels = (rest > 0).then(|| {
        payload[value_bytes..]
            .chunks_exact(4)
            .map(|c| i64::from(i32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect()
    });
    let ids = (0..n).map(|i| i.to_string()).collect();
    Dataset::new(ids, values, d, labels)
}

/// Values are narrowed to `f32`; labels must fit in `i32`. Sample ids are
/// not stored, rows are renumbered on load.
pub fn write_binary<W: Write>(out: &mut W, data: &Dataset) -> Result<()> {
    let narrow = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::InvalidDataset(format!("{what} {v} exceeds u32")))
    };
    out.write_all(MAGIC)?;
    out.write_all(&[BINARY_VERSION])?;
    out.write_all(&narrow(data.len(), "row count")?.to_le_bytes())?;
    out.write_all(&narrow(data.dim(), "dimension")?.to_le_bytes())?;
    for &v in data.embeddings() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    if let Some(truth) = data.ground_truth() {
        for &l in truth {
            let l = i32::try_from(l).map_err(|_| Error::InvalidDataset(format!("label {l} exceeds i32")))?;
            out.write_all(&l.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Parses a flat `key = value` document into a config. `#` starts a
/// comment; unknown and repeated keys are errors. Missing keys keep their
/// defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let at = || format!("config line {}", idx + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(at(), format!("expected `key = value`, found `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(Error::parse(at(), format!("duplicate key `{key}`")));
        }
        fn num<T: FromStr>(value: &str, key: &str, at: String) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::parse(at, format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "similarity_threshold" => cfg.similarity_threshold = num(value, key, at())?,
            "confidence" => cfg.confidence = num(value, key, at())?,
            "k" => cfg.k = num(value, key, at())?,
            "tau" => cfg.tau = num(value, key, at())?,
            "learning_rate" => cfg.learning_rate = num(value, key, at())?,
            "batch_size" => cfg.batch_size = num(value, key, at())?,
            "epochs_per_iteration" => cfg.epochs_per_iteration = num(value, key, at())?,
            "max_iterations" => cfg.max_iterations = num(value, key, at())?,
            "seed" => cfg.seed = num(value, key, at())?,
            "distance_sample_cap" => cfg.distance_sample_cap = num(value, key, at())?,
            "merge_floor" => cfg.merge_floor = num(value, key, at())?,
            "detector" => {
                cfg.detector = value
                    .parse::<Algorithm>()
                    .map_err(|e| Error::parse(at(), e.to_string()))?
            }
            "parallel" => cfg.parallel = num(value, key, at())?,
            other => return Err(Error::parse(at(), format!("unknown key `{other}`"))),
        }
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Inverse of [`parse_config`].
pub fn format_config(cfg: &RunConfig) -> String {
    format!(
        "similarity_threshold = {}\nconfidence = {}\nk = {}\ntau = {}\nlearning_rate = {}\n\
         batch_size = {}\nepochs_per_iteration = {}\nmax_iterations = {}\nseed = {}\n\
         distance_sample_cap = {}\nmerge_floor = {}\ndetector = {}\nparallel = {}\n",
        cfg.similarity_threshold,
        cfg.confidence,
        cfg.k,
        cfg.tau,
        cfg.learning_rate,
        cfg.batch_size,
        cfg.epochs_per_iteration,
        cfg.max_iterations,
        cfg.seed,
        cfg.distance_sample_cap,
        cfg.merge_floor,
        cfg.detector,
        cfg.parallel,
    )
}

/// Writes `id,cluster` rows.
pub fn write_assignments<W: Write>(out: &mut W, ids: &[String], labels: &[usize]) -> Result<()> {
    if ids.len() != labels.len() {
        return Err(Error::LengthMismatch {
            pred: labels.len(),
            truth: ids.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "cluster"]).map_err(csv_error)?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &l.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `(id, label)` pairs from a CSV whose first column is the id and
/// whose last column is an integer label (`cluster` or `label`).
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<(String, i64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse("csv header", e.to_string()))?
        .clone();
    let last = header.len().saturating_sub(1);
    if header.len() < 2 || !matches!(header.get(last), Some("cluster" | "label")) {
        return Err(Error::parse("line 1", "last column must be `cluster` or `label`"));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = &record[last];
        let label = cell
            .parse()
            .map_err(|_| Error::parse(format!("line {line}"), format!("label `{cell}` is not an integer")))?;
        out.push((record[0].to_string(), label));
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    Error::parse("csv", e.to_string())
}
