//! Top-k retrieval over the motion and background databases, and the
//! per-frame body orientation labels used by the training sampler.
//!
//! Both databases are small enough for an exact linear scan; motion
//! distances dominate and are evaluated across candidates in parallel,
//! with a sequential final sort so results are deterministic regardless
//! of thread count.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtw::{self, DtwError};
use crate::imu::MotionSignature;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("database is empty")]
    EmptyDatabase,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("duplicate id `{0}` in database")]
    DuplicateId(String),
    #[error("ground normal of `{context}` is not unit length (|n| = {norm})")]
    NotUnit { context: String, norm: f64 },
    #[error("yaw {0} outside [0, 360)")]
    YawOutOfRange(f64),
    #[error(transparent)]
    Dtw(#[from] DtwError),
    #[error("failed to read {path}: {message}")]
    Io { path: String, message: String },
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
}

/// A motion candidate: its retrieval signature plus the pose sequence file
/// the selected motion hands to the grounding stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionEntry {
    pub id: String,
    #[serde(flatten)]
    pub signature: MotionSignature,
    pub pose_path: String,
}

/// A background candidate: an image plus its precomputed ground plane
/// normal (unit length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundEntry {
    pub id: String,
    pub image_path: String,
    pub normal: [f64; 3],
}

/// One retrieval hit. Result lists are sorted ascending by score, ties
/// broken by id, so identical inputs always produce identical rankings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub id: String,
    pub score: f64,
}

/// Per-frame body orientation, classified from yaw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Front,
    Back,
    Other,
}

fn rank_and_truncate(mut scored: Vec<RankedResult>, k: usize) -> Vec<RankedResult> {
    scored.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.id.cmp(&b.id)));
    scored.truncate(k);
    scored
}

/// Returns the `min(k, |db|)` candidates with the smallest combined motion
/// distance to the query, sorted ascending.
pub fn retrieve_motions(
    db: &[MotionEntry],
    query: &MotionSignature,
    k: usize,
    alpha: f64,
) -> Result<Vec<RankedResult>, RetrievalError> {
    if db.is_empty() {
        return Err(RetrievalError::EmptyDatabase);
    }
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let scored: Vec<RankedResult> = db
        .par_iter()
        .map(|entry| {
            dtw::combined_motion_distance(query, &entry.signature, alpha).map(|score| {
                RankedResult {
                    id: entry.id.clone(),
                    score,
                }
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(rank_and_truncate(scored, k))
}

/// Angle between two unit normals, in degrees within [0, 180].
pub fn normal_angle(n1: &[f64; 3], n2: &[f64; 3]) -> Result<f64, RetrievalError> {
    for (label, n) in [("first normal", n1), ("second normal", n2)] {
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(RetrievalError::NotUnit {
                context: label.to_string(),
                norm,
            });
        }
    }
    let dot = (n1[0] * n2[0] + n1[1] * n2[1] + n1[2] * n2[2]).clamp(-1.0, 1.0);
    Ok(dot.acos().to_degrees())
}

/// Returns the `min(k, |db|)` backgrounds whose ground plane normals are
/// closest in angle to the reference normal.
pub fn retrieve_backgrounds(
    db: &[BackgroundEntry],
    reference_normal: &[f64; 3],
    k: usize,
) -> Result<Vec<RankedResult>, RetrievalError> {
    if db.is_empty() {
        return Err(RetrievalError::EmptyDatabase);
    }
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let mut scored = Vec::with_capacity(db.len());
    for entry in db {
        let score = normal_angle(reference_normal, &entry.normal).map_err(|e| match e {
            RetrievalError::NotUnit { norm, .. } => RetrievalError::NotUnit {
                context: format!("background `{}`", entry.id),
                norm,
            },
            other => other,
        })?;
        scored.push(RankedResult {
            id: entry.id.clone(),
            score,
        });
    }
    Ok(rank_and_truncate(scored, k))
}

/// Classifies body yaw into front (330 to 30 degrees, inclusive), back
/// (150 to 210, inclusive) or other.
pub fn classify_orientation(yaw: f64) -> Result<Orientation, RetrievalError> {
    if !(yaw.is_finite() && (0.0..360.0).contains(&yaw)) {
        return Err(RetrievalError::YawOutOfRange(yaw));
    }
    Ok(if yaw >= 330.0 || yaw <= 30.0 {
        Orientation::Front
    } else if (150.0..=210.0).contains(&yaw) {
        Orientation::Back
    } else {
        Orientation::Other
    })
}

fn check_unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), RetrievalError> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(RetrievalError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, RetrievalError> {
    let text = std::fs::read_to_string(path).map_err(|e| RetrievalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| RetrievalError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Loads a motion database: a JSON array of
/// `{id, yaw, translation, sample_rate?, pose_path}` entries.
pub fn load_motion_db(path: &Path) -> Result<Vec<MotionEntry>, RetrievalError> {
    let entries: Vec<MotionEntry> = read_json(path)?;
    check_unique_ids(entries.iter().map(|e| e.id.as_str()))?;
    Ok(entries)
}

/// Loads a background database: a JSON array of
/// `{id, image_path, normal}` entries with unit normals.
pub fn load_background_db(path: &Path) -> Result<Vec<BackgroundEntry>, RetrievalError> {
    let entries: Vec<BackgroundEntry> = read_json(path)?;
    check_unique_ids(entries.iter().map(|e| e.id.as_str()))?;
    for entry in &entries {
        let n = entry.normal;
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(RetrievalError::NotUnit {
                context: format!("background `{}`", entry.id),
                norm,
            });
        }
    }
    Ok(entries)
}
