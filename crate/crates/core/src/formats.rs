//! On-disk formats: JSON / JSON-Lines records, the OBJ mesh subset, binary
//! rasters with JSON sidecars, and the dataset manifest.
//!
//! Readers are strict. Unknown keys are rejected and every error names the
//! file, plus the line for line-oriented formats.

use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use nalgebra::Point3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calib::CalibSample;
use crate::eval::KeyFrame;
use crate::geom::Pose;
use crate::kinematics::ArmModel;
use crate::raster::{CountMap, DepthMap, Raster};
use crate::raycast::{Intrinsics, TriMesh};
use crate::sync::{FrameLog, FrameRecord, JointLog, JointSample};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{}: {msg}", path.display())]
    Invalid { path: PathBuf, msg: String },
    #[error("{}: sha256 mismatch (manifest {expected}, file {actual})", path.display())]
    HashMismatch { path: PathBuf, expected: String, actual: String },
    #[error("manifest has no file with role `{0}`")]
    MissingRole(String),
}

impl FormatError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }

    pub fn invalid(path: &Path, msg: impl ToString) -> Self {
        FormatError::Invalid { path: path.to_path_buf(), msg: msg.to_string() }
    }

    fn parse(path: &Path, line: usize, msg: impl ToString) -> Self {
        FormatError::Parse { path: path.to_path_buf(), line, msg: msg.to_string() }
    }
}

type Result<T> = std::result::Result<T, FormatError>;

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FormatError::io(path, e))
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, io::Result<String>)>> {
    let file = fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    Ok(BufReader::new(file).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

// ---------------------------------------------------------------- JSON

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FormatError::invalid(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FormatError::parse(path, e.line(), e))
}

/// One compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| FormatError::invalid(path, e))?;
        out.push(b'\n');
    }
    write_bytes(path, &out)
}

/// Blank lines are skipped; anything else must parse as one record.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut items = Vec::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| FormatError::parse(path, line_no, e))?);
    }
    Ok(items)
}

pub fn read_joint_log(path: &Path) -> Result<JointLog> {
    JointLog::new(read_jsonl::<JointSample>(path)?).map_err(|e| FormatError::invalid(path, e))
}

pub fn write_joint_log(path: &Path, log: &JointLog) -> Result<()> {
    write_jsonl(path, log.samples())
}

pub fn read_frame_log(path: &Path) -> Result<FrameLog> {
    FrameLog::new(read_jsonl::<FrameRecord>(path)?).map_err(|e| FormatError::invalid(path, e))
}

pub fn write_frame_log(path: &Path, log: &FrameLog) -> Result<()> {
    write_jsonl(path, log.frames())
}

pub fn read_calib_samples(path: &Path) -> Result<Vec<CalibSample>> {
    read_jsonl(path)
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    read_json(path)
}

pub fn read_arm_model(path: &Path) -> Result<ArmModel> {
    read_json(path)
}

// ---------------------------------------------------------------- OBJ

/// `v x y z` and `f i j k` (1-based) only; `#` comments and blank lines are
/// allowed, any other directive is rejected.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let tag = tokens.next().unwrap_or_default();
        let rest: Vec<&str> = tokens.collect();
        match tag {
            "v" => {
                if rest.len() != 3 {
                    return Err(FormatError::parse(path, line_no, format!("vertex needs 3 coordinates, got {}", rest.len())));
                }
                let mut c = [0.0; 3];
                for (slot, tok) in c.iter_mut().zip(&rest) {
                    *slot = tok
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| FormatError::parse(path, line_no, format!("bad coordinate `{tok}`")))?;
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            "f" => {
                if rest.len() != 3 {
                    return Err(FormatError::parse(
                        path,
                        line_no,
                        format!("only triangular faces are supported, got {} vertices", rest.len()),
                    ));
                }
                let mut idx = [0usize; 3];
                for (slot, tok) in idx.iter_mut().zip(&rest) {
                    let i = tok
                        .parse::<usize>()
                        .ok()
                        .filter(|&i| i >= 1)
                        .ok_or_else(|| FormatError::parse(path, line_no, format!("bad vertex index `{tok}`")))?;
                    *slot = i - 1;
                }
                faces.push(idx);
            }
            other => {
                return Err(FormatError::parse(path, line_no, format!("unsupported OBJ directive `{other}`")));
            }
        }
    }
    TriMesh::new(vertices, faces).map_err(|e| FormatError::invalid(path, e))
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut out = String::new();
    for v in mesh.vertices() {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in mesh.triangles() {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    write_bytes(path, out.as_bytes())
}

// ---------------------------------------------------------------- rasters

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterDtype {
    #[default]
    F32,
    F64,
    U32,
}

impl RasterDtype {
    fn size(self) -> usize {
        match self {
            RasterDtype::F32 | RasterDtype::U32 => 4,
            RasterDtype::F64 => 8,
        }
    }
}

/// JSON sidecar describing a `.bin` raster. `dtype` defaults to f32.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterMeta {
    pub width: usize,
    pub height: usize,
    pub units: String,
    #[serde(default)]
    pub dtype: RasterDtype,
}

/// `foo.bin` → `foo.json`.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

fn write_raster_bytes(bin: &Path, width: usize, height: usize, units: &str, dtype: RasterDtype, bytes: Vec<u8>) -> Result<()> {
    write_bytes(bin, &bytes)?;
    write_json(&sidecar_path(bin), &RasterMeta { width, height, units: units.to_string(), dtype })
}

/// Row-major little-endian floats of the given precision.
pub fn write_depth_raster(bin: &Path, map: &DepthMap, units: &str, dtype: RasterDtype) -> Result<()> {
    let mut bytes = Vec::with_capacity(map.len() * dtype.size());
    for &v in map.data() {
        match dtype {
            RasterDtype::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
            RasterDtype::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
            RasterDtype::U32 => return Err(FormatError::invalid(bin, "depth rasters must be f32 or f64")),
        }
    }
    write_raster_bytes(bin, map.width(), map.height(), units, dtype, bytes)
}

pub fn write_count_raster(bin: &Path, map: &CountMap) -> Result<()> {
    let bytes = map.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_raster_bytes(bin, map.width(), map.height(), "count", RasterDtype::U32, bytes)
}

fn read_raster_bytes(bin: &Path) -> Result<(RasterMeta, Vec<u8>)> {
    let meta: RasterMeta = read_json(&sidecar_path(bin))?;
    let bytes = read_bytes(bin)?;
    let expected = meta.width * meta.height * meta.dtype.size();
    if bytes.len() != expected {
        return Err(FormatError::invalid(
            bin,
            format!("expected {expected} bytes for {}×{} {:?}, found {}", meta.width, meta.height, meta.dtype, bytes.len()),
        ));
    }
    Ok((meta, bytes))
}

/// Reads an f32 or f64 raster; NaN marks invalid cells.
pub fn read_depth_raster(bin: &Path) -> Result<(DepthMap, RasterMeta)> {
    let (meta, bytes) = read_raster_bytes(bin)?;
    let data: Vec<f64> = match meta.dtype {
        RasterDtype::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        RasterDtype::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        RasterDtype::U32 => return Err(FormatError::invalid(bin, "expected a float raster, found u32")),
    };
    let map = Raster::from_vec(meta.width, meta.height, data).map_err(|e| FormatError::invalid(bin, e))?;
    Ok((map, meta))
}

pub fn read_count_raster(bin: &Path) -> Result<CountMap> {
    let (meta, bytes) = read_raster_bytes(bin)?;
    if meta.dtype != RasterDtype::U32 {
        return Err(FormatError::invalid(bin, format!("expected a u32 raster, found {:?}", meta.dtype)));
    }
    let data = bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    Raster::from_vec(meta.width, meta.height, data).map_err(|e| FormatError::invalid(bin, e))
}

// ---------------------------------------------------------------- keyframes

/// One line of the keyframe index. Raster paths are relative to the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeRecord {
    pub kf_id: u64,
    pub revision: u32,
    pub t_ns: i64,
    pub pose_est: Pose,
    pub idepth: String,
    pub ivar: String,
}

fn raster_names(kf: &KeyFrame) -> (String, String) {
    let stem = format!("keyframes/kf{:04}_r{}", kf.kf_id, kf.revision);
    (format!("{stem}.idepth.bin"), format!("{stem}.ivar.bin"))
}

/// Writes the index plus per-keyframe f64 rasters beside it; returns the
/// written paths relative to the index directory, index first.
pub fn write_keyframes(index: &Path, keyframes: &[KeyFrame]) -> Result<Vec<String>> {
    let dir = index.parent().unwrap_or(Path::new(""));
    let mut records = Vec::with_capacity(keyframes.len());
    let mut written = vec![file_name(index)];
    for kf in keyframes {
        let (idepth, ivar) = raster_names(kf);
        write_depth_raster(&dir.join(&idepth), &kf.idepth, "1/slam", RasterDtype::F64)?;
        write_depth_raster(&dir.join(&ivar), &kf.ivar, "1/slam^2", RasterDtype::F64)?;
        for p in [&idepth, &ivar] {
            written.push(p.clone());
            written.push(path_string(&sidecar_path(Path::new(p))));
        }
        records.push(KeyframeRecord {
            kf_id: kf.kf_id,
            revision: kf.revision,
            t_ns: kf.t_ns,
            pose_est: kf.pose_est.clone(),
            idepth,
            ivar,
        });
    }
    write_jsonl(index, &records)?;
    Ok(written)
}

pub fn read_keyframes(index: &Path, intrinsics: &Intrinsics) -> Result<Vec<KeyFrame>> {
    let dir = index.parent().unwrap_or(Path::new(""));
    let records: Vec<KeyframeRecord> = read_jsonl(index)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        if !seen.insert((r.kf_id, r.revision)) {
            return Err(FormatError::invalid(
                index,
                format!("record {}: duplicate keyframe {} revision {}", i + 1, r.kf_id, r.revision),
            ));
        }
        let (idepth, _) = read_depth_raster(&dir.join(&r.idepth))?;
        let (ivar, _) = read_depth_raster(&dir.join(&r.ivar))?;
        let kf = KeyFrame::new(r.kf_id, r.revision, r.t_ns, r.pose_est, idepth, ivar, *intrinsics)
            .map_err(|e| FormatError::invalid(index, e))?;
        out.push(kf);
    }
    Ok(out)
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
    pub seed: u64,
    pub config_echo: serde_json::Value,
}

pub mod roles {
    pub const ARM: &str = "arm";
    pub const INTRINSICS: &str = "intrinsics";
    pub const JOINT_LOG: &str = "jointlog";
    pub const FRAME_LOG: &str = "framelog";
    pub const CALIB_SAMPLES: &str = "calib_samples";
    pub const MESH: &str = "mesh";
    pub const KEYFRAMES: &str = "keyframes";
    pub const KEYFRAME_RASTER: &str = "keyframe_raster";
    pub const TRUTH: &str = "truth";
}

impl Manifest {
    /// Hashes every `(relative path, role)` under `dir`.
    pub fn build(dir: &Path, files: &[(String, &str)], seed: u64, config_echo: serde_json::Value) -> Result<Self> {
        let files = files
            .iter()
            .map(|(path, role)| {
                Ok(ManifestEntry { path: path.clone(), sha256: sha256_file(&dir.join(path))?, role: role.to_string() })
            })
            .collect::<Result<_>>()?;
        Ok(Manifest { files, seed, config_echo })
    }

    /// Loads a manifest and checks that every listed file exists and hashes
    /// as recorded.
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for f in &m.files {
            let p = dir.join(&f.path);
            let actual = sha256_file(&p)?;
            if actual != f.sha256 {
                return Err(FormatError::HashMismatch { path: p, expected: f.sha256.clone(), actual });
            }
        }
        Ok(m)
    }

    /// First file carrying `role`.
    pub fn path_for(&self, role: &str) -> Result<&str> {
        self.files
            .iter()
            .find(|f| f.role == role)
            .map(|f| f.path.as_str())
            .ok_or_else(|| FormatError::MissingRole(role.to_string()))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(read_bytes(path)?)))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Forward-slash form of a relative path, for manifests.
pub fn path_string(path: &Path) -> String {
    path.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

// ---------------------------------------------------------------- CSV

/// Writes a CSV with a fixed header; rows are pre-formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| FormatError::invalid(path, e);
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::invalid(path, e))?;
    write_bytes(path, &bytes)
}

/// Header plus rows of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => FormatError::io(path, io),
        other => FormatError::invalid(path, format!("{other:?}")),
    })?;
    let header = r.headers().map_err(|e| FormatError::invalid(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| FormatError::parse(path, i + 2, e))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((header, rows))
}
