// On-disk dataset layout. One directory per dataset:
//
//   manifest.tsv    "video_id\tsplit" header, then one row per video
//   <id>.hrnf       "HRNF" | u32 id_len | id bytes | u32 T | u32 d | T·d f32
//   <id>.hrnl       "HRNL" | u32 m | m f64 in [0, 1]
//
// All integers and floats little-endian; features row-major.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{FrameFeatureSequence, LabeledVideo, Split};
use crate::codec::{to_u32, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::numerics::Matrix;

pub const FEATURES_MAGIC: &[u8; 4] = b"HRNF";
pub const LABELS_MAGIC: &[u8; 4] = b"HRNL";
pub const MANIFEST_FILE: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "video_id\tsplit";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub grid: GridSpec,
    /// Fixed-shape mode when set; variable length otherwise.
    pub max_frames: Option<usize>,
}

impl LoadOptions {
    pub fn variable(subshot_len: usize) -> Self {
        LoadOptions {
            grid: GridSpec::new(subshot_len),
            max_frames: None,
        }
    }
}

fn features_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.hrnf"))
}

fn labels_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.hrnl"))
}

fn check_video_id(id: &str) -> Result<()> {
    let bad = id.is_empty()
        || id.starts_with('.')
        || id
            .chars()
            .any(|c| matches!(c, '/' | '\\' | '\t' | '\n' | '\r'));
    if bad {
        return Err(Error::Config(format!(
            "video id {id:?} is not a valid file stem"
        )));
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_features(seq: &FrameFeatureSequence) -> Result<Vec<u8>> {
    let mut w = ByteWriter::default();
    w.bytes(FEATURES_MAGIC);
    w.u32(to_u32(seq.video_id.len(), "video id length")?);
    w.bytes(seq.video_id.as_bytes());
    w.u32(to_u32(seq.frames(), "frame count")?);
    w.u32(to_u32(seq.dim(), "feature dim")?);
    for v in seq.features().as_slice() {
        w.f32(*v as f32);
    }
    Ok(w.buf)
}

pub fn write_features(path: &Path, seq: &FrameFeatureSequence) -> Result<()> {
    write_atomic(path, &encode_features(seq)?)
}

pub fn read_features(path: &Path) -> Result<FrameFeatureSequence> {
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(path, &bytes);
    r.expect_magic(FEATURES_MAGIC)?;
    let id_len = r.u32("video id length")? as usize;
    let id_at = r.offset();
    let id = std::str::from_utf8(r.take(id_len, "video id")?)
        .map_err(|_| r.error_at(id_at, "video id is not UTF-8"))?
        .to_string();
    let t_at = r.offset();
    let frames = r.u32("frame count")? as usize;
    if frames == 0 {
        return Err(r.error_at(t_at, "frame count must be at least 1"));
    }
    let d_at = r.offset();
    let dim = r.u32("feature dim")? as usize;
    if dim == 0 {
        return Err(r.error_at(d_at, "feature dim must be at least 1"));
    }
    let need = frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| r.error_at(t_at, "T·d overflows"))?;
    if r.remaining() != need {
        return Err(r.error(format!(
            "expected {need} bytes of f32 features for {frames}x{dim}, found {}",
            r.remaining()
        )));
    }
    let mut data = Vec::with_capacity(frames * dim);
    for _ in 0..frames * dim {
        let at = r.offset();
        let v = r.f32("feature")?;
        if !v.is_finite() {
            return Err(r.error_at(at, format!("non-finite feature value {v}")));
        }
        data.push(v as f64);
    }
    r.finish()?;
    FrameFeatureSequence::new(id, Matrix::from_vec(frames, dim, data)?)
}

pub fn encode_labels(scores: &[f64]) -> Result<Vec<u8>> {
    let mut w = ByteWriter::default();
    w.bytes(LABELS_MAGIC);
    w.u32(to_u32(scores.len(), "label count")?);
    for s in scores {
        if !(0.0..=1.0).contains(s) {
            return Err(Error::LabelRange(*s));
        }
        w.f64(*s);
    }
    Ok(w.buf)
}

pub fn write_labels(path: &Path, scores: &[f64]) -> Result<()> {
    write_atomic(path, &encode_labels(scores)?)
}

pub fn read_labels(path: &Path) -> Result<Vec<f64>> {
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(path, &bytes);
    r.expect_magic(LABELS_MAGIC)?;
    let count = r.u32("label count")? as usize;
    if r.remaining() != count * 8 {
        return Err(r.error(format!(
            "expected {} bytes for {count} labels, found {}",
            count * 8,
            r.remaining()
        )));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.offset();
        let v = r.f64("label")?;
        if !(0.0..=1.0).contains(&v) {
            return Err(r.error_at(at, format!("label score {v} outside [0, 1]")));
        }
        out.push(v);
    }
    r.finish()?;
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<(String, Split)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |offset: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };
    let mut entries = Vec::new();
    let mut offset = 0;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let body = line.trim_end_matches(['\n', '\r']);
        if n == 0 {
            if body != MANIFEST_HEADER {
                return Err(err(offset, format!("expected header {MANIFEST_HEADER:?}")));
            }
        } else if !body.is_empty() {
            let fields: Vec<&str> = body.split('\t').collect();
            if fields.len() != 2 {
                return Err(err(
                    offset,
                    format!("expected 2 tab-separated fields, got {}", fields.len()),
                ));
            }
            check_video_id(fields[0]).map_err(|e| err(offset, e.to_string()))?;
            let split = fields[1].parse::<Split>().map_err(|e| err(offset, e))?;
            entries.push((fields[0].to_string(), split));
        }
        offset += line.len();
    }
    if text.is_empty() {
        return Err(err(0, "empty manifest; expected header".into()));
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[(String, Split)]) -> Result<()> {
    let mut text = format!("{MANIFEST_HEADER}\n");
    for (id, split) in entries {
        check_video_id(id)?;
        text.push_str(&format!("{id}\t{split}\n"));
    }
    write_atomic(path, text.as_bytes())
}

/// Write `videos` (features, subshot scores and manifest) into `dir`.
pub fn write_dataset(dir: &Path, videos: &[LabeledVideo]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(videos.len());
    for v in videos {
        let id = &v.sequence.video_id;
        check_video_id(id)?;
        write_features(&features_path(dir, id), &v.sequence)?;
        write_labels(&labels_path(dir, id), &v.raw_scores())?;
        entries.push((id.clone(), v.split));
    }
    write_manifest(&dir.join(MANIFEST_FILE), &entries)
}

/// Load every video listed in `dir/manifest.tsv` (or every `*.hrnf` file
/// when there is no manifest), sorted by video id.
pub fn load_dataset(dir: &Path, opts: &LoadOptions) -> Result<Vec<LabeledVideo>> {
    opts.grid.validate()?;
    let manifest = dir.join(MANIFEST_FILE);
    let entries = if manifest.exists() {
        read_manifest(&manifest)?
    } else {
        let listing = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut ids = Vec::new();
        for entry in listing {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("hrnf") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push((stem.to_string(), Split::Train));
                }
            }
        }
        ids
    };

    let mut by_id = BTreeMap::new();
    for (id, split) in entries {
        if by_id.insert(id.clone(), split).is_some() {
            return Err(Error::Format {
                path: manifest.clone(),
                offset: 0,
                reason: format!("duplicate video id `{id}`"),
            });
        }
    }

    let mut videos = Vec::with_capacity(by_id.len());
    let mut first_dim: Option<(String, usize)> = None;
    for (id, split) in by_id {
        let fpath = features_path(dir, &id);
        let seq = read_features(&fpath)?;
        if seq.video_id != id {
            return Err(Error::Format {
                path: fpath,
                offset: 8,
                reason: format!("embedded video id `{}` does not match `{id}`", seq.video_id),
            });
        }
        match &first_dim {
            None => first_dim = Some((id.clone(), seq.dim())),
            Some((other, d)) if *d != seq.dim() => {
                return Err(Error::DatasetDims(format!(
                    "`{other}` has d_feat {d} but `{id}` has {}",
                    seq.dim()
                )));
            }
            _ => {}
        }
        let lpath = labels_path(dir, &id);
        let scores = read_labels(&lpath)?;
        let video = LabeledVideo::from_scores(seq, &scores, opts.grid, split).map_err(|e| match e {
            Error::LabelCount { expected, actual, .. } => Error::Format {
                path: lpath.clone(),
                offset: 4,
                reason: format!(
                    "label count {actual} matches neither the {expected} subshots nor the frame count"
                ),
            },
            other => other,
        })?;
        let video = match opts.max_frames {
            Some(max) => video.normalized(max)?,
            None => video,
        };
        videos.push(video);
    }
    Ok(videos)
}
