use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::motion::MotionSequence;
use crate::body::{Pose, ShapeParams, SHAPE_DIM};
use crate::error::{Error, Result};

pub const MOTION_FORMAT_VERSION: u32 = 1;

/// Where a generated artifact came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub toolkit_version: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            config_hash: config_hash.into(),
            seed,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub orient: [f64; 3],
    pub rots: Vec<f64>,
    pub trans: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub a: PoseRecord,
    pub b: PoseRecord,
}

/// On-disk layout of a two-person motion file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionDocument {
    pub version: u32,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub shape_a: Vec<f64>,
    pub shape_b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub frames: Vec<FrameRecord>,
}

fn record(p: &Pose) -> PoseRecord {
    PoseRecord {
        orient: (*p.global_orient()).into(),
        rots: p.joint_rotations().iter().flat_map(|r| r.iter().copied()).collect(),
        trans: (*p.translation()).into(),
    }
}

impl MotionDocument {
    pub fn from_sequence(seq: &MotionSequence, anchor_index: Option<usize>, provenance: Option<Provenance>) -> Self {
        Self {
            version: MOTION_FORMAT_VERSION,
            fps: seq.fps,
            text: seq.text.clone(),
            shape_a: seq.shape_a.beta().to_vec(),
            shape_b: seq.shape_b.beta().to_vec(),
            anchor_index,
            provenance,
            frames: seq
                .poses_a
                .iter()
                .zip(&seq.poses_b)
                .map(|(a, b)| FrameRecord { a: record(a), b: record(b) })
                .collect(),
        }
    }

    /// Checks every field and returns the first problem as `(field, message)`.
    fn check(&self) -> std::result::Result<(), (String, String)> {
        let err = |f: &str, m: String| Err((f.to_string(), m));
        if self.version != MOTION_FORMAT_VERSION {
            return err("version", format!("unsupported version {}", self.version));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return err("fps", format!("must be positive, got {}", self.fps));
        }
        for (name, shape) in [("shape_a", &self.shape_a), ("shape_b", &self.shape_b)] {
            if shape.len() != SHAPE_DIM {
                return err(name, format!("expected {SHAPE_DIM} values, got {}", shape.len()));
            }
            if shape.iter().any(|x| !x.is_finite()) {
                return err(name, "contains non-finite values".into());
            }
        }
        if self.frames.is_empty() {
            return err("frames", "no frames".into());
        }
        let rots = self.frames[0].a.rots.len();
        if rots == 0 || rots % 3 != 0 {
            return err("frames[0].a.rots", format!("length {rots} is not a positive multiple of 3"));
        }
        for (i, frame) in self.frames.iter().enumerate() {
            for (who, p) in [("a", &frame.a), ("b", &frame.b)] {
                if p.rots.len() != rots {
                    return err(
                        &format!("frames[{i}].{who}.rots"),
                        format!("expected {rots} values, got {}", p.rots.len()),
                    );
                }
                for (field, values) in [("orient", &p.orient[..]), ("rots", &p.rots[..]), ("trans", &p.trans[..])] {
                    if values.iter().any(|x| !x.is_finite()) {
                        return err(&format!("frames[{i}].{who}.{field}"), "contains non-finite values".into());
                    }
                }
            }
        }
        if let Some(anchor) = self.anchor_index {
            if anchor >= self.frames.len() {
                return err(
                    "anchor_index",
                    format!("{anchor} is outside {} frames", self.frames.len()),
                );
            }
        }
        Ok(())
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        self.check().map_err(|(field, message)| Error::MalformedFile {
            path: path.to_path_buf(),
            field,
            message,
        })
    }

    pub fn to_sequence(&self) -> Result<MotionSequence> {
        self.validate(Path::new("<memory>"))?;
        let pose = |p: &PoseRecord| {
            let rots = p.rots.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
            Pose::new(p.orient.into(), rots, p.trans.into())
        };
        let poses_a = self.frames.iter().map(|f| pose(&f.a)).collect::<Result<Vec<_>>>()?;
        let poses_b = self.frames.iter().map(|f| pose(&f.b)).collect::<Result<Vec<_>>>()?;
        MotionSequence::new(
            poses_a,
            poses_b,
            ShapeParams::from_slice(&self.shape_a)?,
            ShapeParams::from_slice(&self.shape_b)?,
            self.fps,
            self.text.clone(),
        )
    }
}

pub fn write_motion_document(path: &Path, doc: &MotionDocument) -> Result<()> {
    let json = serde_json::to_string_pretty(doc).map_err(|e| Error::invalid(e.to_string()))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Parses and validates a motion file.
pub fn read_motion_document(path: &Path) -> Result<MotionDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let doc: MotionDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::MalformedFile {
            path: path.to_path_buf(),
            field: if field == "." { "document".into() } else { field },
            message: e.into_inner().to_string(),
        }
    })?;
    doc.validate(path)?;
    Ok(doc)
}

pub fn write_motion(
    path: &Path,
    seq: &MotionSequence,
    anchor_index: Option<usize>,
    provenance: Option<Provenance>,
) -> Result<()> {
    write_motion_document(path, &MotionDocument::from_sequence(seq, anchor_index, provenance))
}

/// Reads a motion file, returning the sequence and its optional anchor index.
pub fn read_motion(path: &Path) -> Result<(MotionSequence, Option<usize>)> {
    let doc = read_motion_document(path)?;
    let seq = doc.to_sequence().map_err(|e| Error::MalformedFile {
        path: path.to_path_buf(),
        field: "frames".into(),
        message: e.to_string(),
    })?;
    Ok((seq, doc.anchor_index))
}

/// Reads every `*.json` file in `dir`, sorted by file name.
pub fn read_motion_dir(dir: &Path) -> Result<Vec<(PathBuf, MotionSequence, Option<usize>)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let (seq, anchor) = read_motion(&p)?;
            Ok((p, seq, anchor))
        })
        .collect()
}
