//! JSON serialization of [`CalibratedLikelihood`], tagged with
//! [`SCHEMA`](super::SCHEMA). Floats round-trip exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::formats::{write_atomic, FormatError};
use super::SCHEMA;
use crate::grid::{CalibratedLikelihood, CalibrationConfig, CosmologyGrid, MomentEntry};
use crate::{Mat2, Vec2};

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    schema: String,
    temperature: f64,
    config: CalibrationConfig,
    grid: Vec<[f64; 2]>,
    moments: Vec<MomentDoc>,
    provenance: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MomentDoc {
    index: usize,
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
    n_samples: usize,
    hartlap: f64,
}

pub fn model_to_string(model: &CalibratedLikelihood) -> String {
    let doc = ModelDoc {
        schema: SCHEMA.to_string(),
        temperature: model.temperature,
        config: model.config,
        grid: model.grid.points().iter().map(|p| [p.x, p.y]).collect(),
        moments: model
            .moments
            .iter()
            .zip(&model.hartlap)
            .map(|(m, &hartlap)| MomentDoc {
                index: m.grid_index,
                mean: [m.mean.x, m.mean.y],
                cov: [[m.cov[(0, 0)], m.cov[(0, 1)]], [m.cov[(1, 0)], m.cov[(1, 1)]]],
                n_samples: m.n_samples,
                hartlap,
            })
            .collect(),
        provenance: model.provenance.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("model serializes");
    text.push('\n');
    text
}

pub fn model_from_str(text: &str) -> Result<CalibratedLikelihood, String> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if doc.schema != SCHEMA {
        return Err(format!("unsupported schema '{}', expected '{SCHEMA}'", doc.schema));
    }
    let points: Vec<Vec2> = doc.grid.iter().map(|p| Vec2::new(p[0], p[1])).collect();
    let grid = CosmologyGrid::new(points.clone()).map_err(|e| e.to_string())?;
    if grid.points() != points.as_slice() {
        return Err("grid points are not in index order".into());
    }
    if doc.moments.len() != grid.len() {
        return Err(format!("{} moments for {} grid points", doc.moments.len(), grid.len()));
    }
    doc.config.validate().map_err(|e| e.to_string())?;
    if !(doc.temperature > 0.0) {
        return Err(format!("temperature must be positive, got {}", doc.temperature));
    }
    let mut moments = Vec::with_capacity(doc.moments.len());
    let mut hartlap = Vec::with_capacity(doc.moments.len());
    for (i, m) in doc.moments.into_iter().enumerate() {
        if m.index != i {
            return Err(format!("moment {i} has index {}", m.index));
        }
        moments.push(MomentEntry {
            grid_index: i,
            mean: Vec2::new(m.mean[0], m.mean[1]),
            cov: Mat2::new(m.cov[0][0], m.cov[0][1], m.cov[1][0], m.cov[1][1]),
            n_samples: m.n_samples,
        });
        hartlap.push(m.hartlap);
    }
    Ok(CalibratedLikelihood {
        grid,
        moments,
        temperature: doc.temperature,
        hartlap,
        config: doc.config,
        provenance: doc.provenance,
    })
}

pub fn save_model(path: &Path, model: &CalibratedLikelihood) -> Result<(), FormatError> {
    write_atomic(path, model_to_string(model).as_bytes())
}

pub fn load_model(path: &Path) -> Result<CalibratedLikelihood, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })?;
    model_from_str(&text).map_err(|message| FormatError::Invalid { path: path.to_path_buf(), message })
}
