use super::{FrameFeatureSequence, LabeledVideo, Split, SubshotLabel};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, SubshotGrid};
use crate::numerics::{Matrix, SeededRng};

/// Planted-signal video generator. Key subshots draw frames around
/// `+signal`, the rest around `-signal`, with unit-variance noise on every
/// feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub videos: usize,
    pub frames: usize,
    pub subshot_len: usize,
    pub feature_dim: usize,
    pub key_fraction: f64,
    pub signal: f64,
    pub seed: u64,
    /// The last `test_videos` videos are tagged [`Split::Test`].
    pub test_videos: usize,
}

/// `⌈fraction·m⌉`, ignoring float noise just above an integer.
pub(crate) fn ceil_fraction(fraction: f64, m: usize) -> usize {
    let x = fraction * m as f64;
    ((x - 1e-9).ceil().max(0.0) as usize).min(m)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<LabeledVideo>> {
    if !(spec.key_fraction > 0.0 && spec.key_fraction < 1.0) {
        return Err(Error::Config(format!(
            "key fraction must lie in (0, 1), got {}",
            spec.key_fraction
        )));
    }
    if spec.test_videos > spec.videos {
        return Err(Error::Config("more test videos than videos".into()));
    }
    let grid_spec = GridSpec::new(spec.subshot_len);
    let mut rng = SeededRng::new(spec.seed);
    let width = spec.videos.to_string().len().max(4);
    let mut out = Vec::with_capacity(spec.videos);
    for n in 0..spec.videos {
        let grid = SubshotGrid::new(spec.frames, grid_spec)?;
        let m = grid.subshot_count;
        let keys = rng.sample_indices(m, ceil_fraction(spec.key_fraction, m));
        let mut is_key = vec![false; m];
        for k in keys {
            is_key[k] = true;
        }
        let mut data = Vec::with_capacity(spec.frames * spec.feature_dim);
        for t in 0..spec.frames {
            let mean = if is_key[grid.owner_of(t)] {
                spec.signal
            } else {
                -spec.signal
            };
            for _ in 0..spec.feature_dim {
                // Stored features are f32; keep the in-memory copy identical.
                data.push((mean + rng.standard_normal()) as f32 as f64);
            }
        }
        let seq = FrameFeatureSequence::new(
            format!("synth_{n:0width$}"),
            Matrix::from_vec(spec.frames, spec.feature_dim, data)?,
        )?;
        let labels = is_key.into_iter().map(SubshotLabel::from_flag).collect();
        let split = if n >= spec.videos - spec.test_videos {
            Split::Test
        } else {
            Split::Train
        };
        out.push(LabeledVideo::new(seq, labels, grid, split)?);
    }
    Ok(out)
}

/// Uniform `[-1, 1)` features and uniform soft labels; the small random
/// instances gradient checks run on.
pub fn random_labeled_video(
    video_id: &str,
    frames: usize,
    feature_dim: usize,
    grid_spec: GridSpec,
    seed: u64,
) -> Result<LabeledVideo> {
    let mut rng = SeededRng::new(seed);
    let data = (0..frames * feature_dim)
        .map(|_| rng.uniform(-1.0, 1.0))
        .collect();
    let seq = FrameFeatureSequence::new(video_id, Matrix::from_vec(frames, feature_dim, data)?)?;
    let grid = SubshotGrid::new(frames, grid_spec)?;
    let labels = (0..grid.subshot_count)
        .map(|_| super::encode_label(rng.uniform(0.0, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    LabeledVideo::new(seq, labels, grid, Split::Train)
}
