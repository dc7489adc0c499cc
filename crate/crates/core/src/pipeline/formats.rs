//! Delimiter-separated tabular files and map files.
//!
//! Tabular files are comma-separated with one mandatory header line. Lines
//! starting with `#` are comments. Floats are written in the shortest form
//! that parses back to the same value.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::d4::Map2D;
use crate::grid::{CosmologyGrid, PosteriorResult, RawRecord, TruthRecord};
use crate::posterior::InferenceBatch;
use crate::Vec2;

pub const GRID_HEADER: [&str; 3] = ["index", "omega_m", "s8"];
pub const PREDICTION_HEADER: [&str; 6] = ["member_id", "map_id", "omega_m_true", "s8_true", "pred_omega_m", "pred_s8"];
pub const TRUTH_HEADER: [&str; 3] = ["map_id", "omega_m", "s8"];
pub const RESULT_HEADER: [&str; 8] =
    ["map_id", "omega_m", "s8", "sigma_omega_m", "sigma_s8", "top_index", "entropy", "flag"];
pub const ENSEMBLE_HEADER: [&str; 3] = ["member_id", "nll", "weight"];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: expected header {expected:?}, found {found:?}")]
    Header { path: PathBuf, expected: Vec<String>, found: Vec<String> },
    #[error("{path}: file is empty")]
    Empty { path: PathBuf },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

/// Write `bytes` to a temporary file next to `path`, then rename it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| FormatError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

/// Read a TOML or JSON (by `.json` extension) structured file.
pub fn read_structured<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| FormatError::Invalid { path: path.to_path_buf(), message })
}

struct Table {
    path: PathBuf,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(path: &Path, header: &[&str]) -> Result<Table, FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let found = reader
        .headers()
        .map_err(|e| FormatError::Parse { path: path.to_path_buf(), line: 1, message: e.to_string() })?
        .clone();
    if found.is_empty() {
        return Err(FormatError::Empty { path: path.to_path_buf() });
    }
    if found.iter().ne(header.iter().copied()) {
        return Err(FormatError::Header {
            path: path.to_path_buf(),
            expected: header.iter().map(|s| s.to_string()).collect(),
            found: found.iter().map(str::to_string).collect(),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| FormatError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(Table { path: path.to_path_buf(), rows })
}

impl Table {
    fn err(&self, line: u64, message: impl Into<String>) -> FormatError {
        FormatError::Parse { path: self.path.clone(), line, message: message.into() }
    }

    fn float(&self, line: u64, field: &str) -> Result<f64, FormatError> {
        field.parse::<f64>().map_err(|_| self.err(line, format!("'{field}' is not a number")))
    }

    fn opt_float(&self, line: u64, field: &str) -> Result<Option<f64>, FormatError> {
        if field.is_empty() { Ok(None) } else { self.float(line, field).map(Some) }
    }
}

fn finish_csv(comments: &[String], header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut out = Vec::new();
    for c in comments {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

pub fn read_grid(path: &Path) -> Result<CosmologyGrid, FormatError> {
    let t = read_table(path, &GRID_HEADER)?;
    if t.rows.is_empty() {
        return Err(FormatError::Empty { path: path.to_path_buf() });
    }
    let pts = t
        .rows
        .iter()
        .map(|(line, r)| Ok(Vec2::new(t.float(*line, &r[1])?, t.float(*line, &r[2])?)))
        .collect::<Result<Vec<_>, FormatError>>()?;
    CosmologyGrid::new(pts).map_err(|e| FormatError::Invalid { path: path.to_path_buf(), message: e.to_string() })
}

pub fn grid_bytes(grid: &CosmologyGrid, comments: &[String]) -> Vec<u8> {
    let rows = grid.points().iter().enumerate().map(|(i, p)| vec![i.to_string(), f(p.x), f(p.y)]).collect();
    finish_csv(comments, &GRID_HEADER, rows)
}

pub fn read_predictions(path: &Path) -> Result<Vec<RawRecord>, FormatError> {
    let t = read_table(path, &PREDICTION_HEADER)?;
    t.rows
        .iter()
        .map(|(line, r)| {
            let member_id = r[0].parse::<u32>().map_err(|_| t.err(*line, format!("bad member_id '{}'", &r[0])))?;
            if r[1].is_empty() {
                return Err(t.err(*line, "empty map_id"));
            }
            let truth = match (t.opt_float(*line, &r[2])?, t.opt_float(*line, &r[3])?) {
                (Some(a), Some(b)) => Some(Vec2::new(a, b)),
                (None, None) => None,
                _ => return Err(t.err(*line, "true label must have both or neither component")),
            };
            Ok(RawRecord {
                member_id,
                map_id: r[1].to_string(),
                truth,
                pred: Vec2::new(t.float(*line, &r[4])?, t.float(*line, &r[5])?),
            })
        })
        .collect()
}

pub fn prediction_bytes(records: &[RawRecord], comments: &[String]) -> Vec<u8> {
    let rows = records
        .iter()
        .map(|r| {
            let (a, b) = r.truth.map_or((String::new(), String::new()), |t| (f(t.x), f(t.y)));
            vec![r.member_id.to_string(), r.map_id.clone(), a, b, f(r.pred.x), f(r.pred.y)]
        })
        .collect();
    finish_csv(comments, &PREDICTION_HEADER, rows)
}

pub fn read_truths(path: &Path) -> Result<Vec<TruthRecord>, FormatError> {
    let t = read_table(path, &TRUTH_HEADER)?;
    t.rows
        .iter()
        .map(|(line, r)| {
            Ok(TruthRecord { map_id: r[0].to_string(), theta: Vec2::new(t.float(*line, &r[1])?, t.float(*line, &r[2])?) })
        })
        .collect()
}

pub fn truth_bytes(truths: &[TruthRecord], comments: &[String]) -> Vec<u8> {
    let rows = truths.iter().map(|t| vec![t.map_id.clone(), f(t.theta.x), f(t.theta.y)]).collect();
    finish_csv(comments, &TRUTH_HEADER, rows)
}

pub fn result_bytes(results: &[PosteriorResult], comments: &[String]) -> Vec<u8> {
    let rows = results
        .iter()
        .map(|r| {
            vec![
                r.map_id.clone(),
                f(r.mean.x),
                f(r.mean.y),
                f(r.sigma.x),
                f(r.sigma.y),
                r.top_index().to_string(),
                f(r.entropy()),
                if r.underflow { "underflow" } else { "ok" }.to_string(),
            ]
        })
        .collect();
    finish_csv(comments, &RESULT_HEADER, rows)
}

/// Results as read back from a results file: grid weights are not stored.
pub fn read_results(path: &Path) -> Result<Vec<PosteriorResult>, FormatError> {
    let t = read_table(path, &RESULT_HEADER)?;
    t.rows
        .iter()
        .map(|(line, r)| {
            Ok(PosteriorResult {
                map_id: r[0].to_string(),
                weights: Vec::new(),
                mean: Vec2::new(t.float(*line, &r[1])?, t.float(*line, &r[2])?),
                sigma: Vec2::new(t.float(*line, &r[3])?, t.float(*line, &r[4])?),
                ensemble_weights: None,
                underflow: &r[7] == "underflow",
            })
        })
        .collect()
}

pub fn ensemble_bytes(batch: &InferenceBatch, comments: &[String]) -> Vec<u8> {
    let rows = batch
        .members
        .iter()
        .zip(&batch.nlls)
        .zip(&batch.ensemble_weights)
        .map(|((m, nll), w)| vec![m.to_string(), f(*nll), f(*w)])
        .collect();
    finish_csv(comments, &ENSEMBLE_HEADER, rows)
}

/// Map files hold one comma-separated row of pixel values per line. `nan`
/// marks a masked pixel; `#` lines are comments.
pub fn read_map(path: &Path) -> Result<Map2D, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| FormatError::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    message: format!("'{}' is not a number", v.trim()),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(FormatError::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    message: format!("row has {} values, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(FormatError::Empty { path: path.to_path_buf() });
    }
    let (h, w) = (rows.len(), rows[0].len());
    let data = Array2::from_shape_fn((h, w), |(i, j)| rows[i][j]);
    let has_mask = data.iter().any(|v| v.is_nan());
    let mask = has_mask.then(|| data.mapv(|v| !v.is_nan()));
    let data = data.mapv(|v| if v.is_nan() { 0.0 } else { v });
    Map2D::new(data, mask).map_err(|e| FormatError::Invalid { path: path.to_path_buf(), message: e.to_string() })
}

pub fn map_bytes(map: &Map2D, comments: &[String]) -> Vec<u8> {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    for (i, row) in map.data.rows().into_iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, v)| if map.is_valid(i, j) { f(*v) } else { "nan".to_string() })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}
