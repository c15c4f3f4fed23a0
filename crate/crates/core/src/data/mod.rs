//! Frame-feature videos, subshot labels, length normalization and dataset
//! I/O.

mod format;
pub(crate) mod synth;

pub use format::{
    encode_features, encode_labels, load_dataset, read_features, read_labels, read_manifest,
    write_dataset, write_features, write_labels, write_manifest, LoadOptions, FEATURES_MAGIC,
    LABELS_MAGIC, MANIFEST_FILE,
};
pub use synth::{generate_synthetic, random_labeled_video, SyntheticSpec};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, SubshotGrid};
use crate::numerics::{Matrix, Vector};

/// One video as a `T × d` matrix of per-frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureSequence {
    pub video_id: String,
    features: Matrix,
}

impl FrameFeatureSequence {
    pub fn new(video_id: impl Into<String>, features: Matrix) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::EmptyVideo);
        }
        if features.cols() == 0 {
            return Err(Error::shape("FrameFeatureSequence", "d_feat >= 1", 0));
        }
        if let Some(bad) = features.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite feature value {bad}")));
        }
        Ok(FrameFeatureSequence {
            video_id: video_id.into(),
            features,
        })
    }

    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.features.row(t)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn frame_vectors(&self) -> Vec<Vector> {
        (0..self.frames())
            .map(|t| Vector::from_slice(self.frame(t)))
            .collect()
    }
}

/// Ground truth for one subshot: a confidence score and its two-class
/// target `(non-key, key)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubshotLabel {
    pub raw_score: f64,
    pub target: [f64; 2],
}

impl SubshotLabel {
    pub fn from_flag(key: bool) -> Self {
        let raw = if key { 1.0 } else { 0.0 };
        SubshotLabel {
            raw_score: raw,
            target: [1.0 - raw, raw],
        }
    }

    /// Binarized reference used by evaluation.
    pub fn is_key(&self) -> bool {
        self.raw_score >= 0.5
    }
}

pub fn encode_label(raw: f64) -> Result<SubshotLabel> {
    if !(0.0..=1.0).contains(&raw) {
        return Err(Error::LabelRange(raw));
    }
    Ok(SubshotLabel {
        raw_score: raw,
        target: [1.0 - raw, raw],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVideo {
    pub sequence: FrameFeatureSequence,
    pub labels: Vec<SubshotLabel>,
    pub grid: SubshotGrid,
    pub split: Split,
}

impl LabeledVideo {
    pub fn new(
        sequence: FrameFeatureSequence,
        labels: Vec<SubshotLabel>,
        grid: SubshotGrid,
        split: Split,
    ) -> Result<Self> {
        if grid.total_frames != sequence.frames() {
            return Err(Error::shape(
                "LabeledVideo",
                format!("grid over {} frames", sequence.frames()),
                grid.total_frames,
            ));
        }
        if labels.len() != grid.subshot_count {
            return Err(Error::LabelCount {
                video_id: sequence.video_id.clone(),
                expected: grid.subshot_count,
                actual: labels.len(),
            });
        }
        Ok(LabeledVideo {
            sequence,
            labels,
            grid,
            split,
        })
    }

    /// Pair `scores` with the grid `spec` cuts from `sequence`.
    ///
    /// `scores` may be given per subshot or per frame; frame scores are
    /// averaged over the real frames of each subshot.
    pub fn from_scores(
        sequence: FrameFeatureSequence,
        scores: &[f64],
        spec: GridSpec,
        split: Split,
    ) -> Result<Self> {
        let grid = SubshotGrid::new(sequence.frames(), spec)?;
        let per_subshot = if scores.len() == grid.subshot_count {
            scores.to_vec()
        } else if scores.len() == grid.total_frames {
            average_frame_scores(&grid, scores)
        } else {
            return Err(Error::LabelCount {
                video_id: sequence.video_id.clone(),
                expected: grid.subshot_count,
                actual: scores.len(),
            });
        };
        let labels = per_subshot
            .into_iter()
            .map(encode_label)
            .collect::<Result<Vec<_>>>()?;
        LabeledVideo::new(sequence, labels, grid, split)
    }

    pub fn raw_scores(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.raw_score).collect()
    }

    pub fn key_subshots(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_key())
            .map(|(i, _)| i)
            .collect()
    }

    /// Resample to `max_frames` frames and carry the labels along: each
    /// frame inherits the score of its subshot, the frames follow the
    /// resampling map (padding frames score 0) and scores are averaged on
    /// the new grid.
    pub fn normalized(&self, max_frames: usize) -> Result<Self> {
        let spec = self.grid.spec();
        if max_frames == 0 || !max_frames.is_multiple_of(spec.subshot_len) {
            return Err(Error::Config(format!(
                "max_frames {max_frames} must be a positive multiple of the subshot length {}",
                spec.subshot_len
            )));
        }
        let plan = normalization_plan(self.sequence.frames(), max_frames);
        let sequence = apply_plan(&self.sequence, &plan)?;
        let frame_scores: Vec<f64> = plan
            .iter()
            .map(|src| match src {
                Some(t) => self.labels[self.grid.owner_of(*t)].raw_score,
                None => 0.0,
            })
            .collect();
        let grid = SubshotGrid::new(max_frames, spec)?;
        let labels = average_frame_scores(&grid, &frame_scores)
            .into_iter()
            .map(|s| encode_label(s.clamp(0.0, 1.0)))
            .collect::<Result<Vec<_>>>()?;
        LabeledVideo::new(sequence, labels, grid, self.split)
    }
}

fn average_frame_scores(grid: &SubshotGrid, scores: &[f64]) -> Vec<f64> {
    (0..grid.subshot_count)
        .map(|i| {
            let r = grid.frame_range(i);
            let n = r.len() as f64;
            scores[r].iter().sum::<f64>() / n
        })
        .collect()
}

/// `round(k·(T−1)/(L−1))` for `k = 0..L`, in exact integer arithmetic
/// (halves round up).
pub fn uniform_indices(total: usize, len: usize) -> Vec<usize> {
    match len {
        0 => Vec::new(),
        1 => vec![0],
        _ => {
            let (t, l) = (total as u128 - 1, len as u128 - 1);
            (0..len as u128)
                .map(|k| ((2 * k * t + l) / (2 * l)) as usize)
                .collect()
        }
    }
}

/// Source frame for every output row of a fixed-length normalization;
/// `None` rows are zero padding.
pub fn normalization_plan(total: usize, max_frames: usize) -> Vec<Option<usize>> {
    if total > max_frames {
        uniform_indices(total, max_frames)
            .into_iter()
            .map(Some)
            .collect()
    } else {
        (0..max_frames).map(|t| (t < total).then_some(t)).collect()
    }
}

fn apply_plan(seq: &FrameFeatureSequence, plan: &[Option<usize>]) -> Result<FrameFeatureSequence> {
    let d = seq.dim();
    let mut data = Vec::with_capacity(plan.len() * d);
    for src in plan {
        match src {
            Some(t) => data.extend_from_slice(seq.frame(*t)),
            None => data.extend(std::iter::repeat_n(0.0, d)),
        }
    }
    FrameFeatureSequence::new(seq.video_id.clone(), Matrix::from_vec(plan.len(), d, data)?)
}

/// Bring a video to exactly `max_frames` frames: uniform sampling when it is
/// longer, zero rows at the tail when it is shorter.
pub fn normalize_length(
    seq: &FrameFeatureSequence,
    max_frames: usize,
    subshot_len: usize,
) -> Result<FrameFeatureSequence> {
    if subshot_len == 0 || max_frames == 0 || !max_frames.is_multiple_of(subshot_len) {
        return Err(Error::Config(format!(
            "max_frames {max_frames} must be a positive multiple of the subshot length {subshot_len}"
        )));
    }
    if seq.frames() == max_frames {
        return Ok(seq.clone());
    }
    apply_plan(seq, &normalization_plan(seq.frames(), max_frames))
}

/// `len` consecutive, non-empty frame blocks `[⌊kT/L⌋, ⌊(k+1)T/L⌋)`; needs
/// `len <= total`.
pub fn pool_blocks(total: usize, len: usize) -> Vec<Range<usize>> {
    (0..len)
        .map(|k| (k * total / len)..((k + 1) * total / len))
        .collect()
}

/// Mean of each block of [`pool_blocks`].
pub fn mean_pool(seq: &FrameFeatureSequence, len: usize) -> Vec<Vector> {
    let len = len.min(seq.frames());
    pool_blocks(seq.frames(), len)
        .into_iter()
        .map(|block| {
            let n = block.len() as f64;
            let mut acc = Vector::zeros(seq.dim());
            for t in block {
                for (a, v) in acc.iter_mut().zip(seq.frame(t)) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize, d: usize) -> FrameFeatureSequence {
        let data = (0..t * d).map(|v| (v / d) as f64).collect();
        FrameFeatureSequence::new("ramp", Matrix::from_vec(t, d, data).unwrap()).unwrap()
    }

    #[test]
    fn label_encoding() {
        assert_eq!(encode_label(1.0).unwrap().target, [0.0, 1.0]);
        assert_eq!(encode_label(0.3).unwrap().target, [0.7, 0.3]);
        assert!(matches!(encode_label(1.2), Err(Error::LabelRange(_))));
        assert!(encode_label(-0.1).is_err());
        assert!(encode_label(f64::NAN).is_err());
        for flag in [false, true] {
            assert_eq!(SubshotLabel::from_flag(flag).is_key(), flag);
            assert_eq!(
                encode_label(SubshotLabel::from_flag(flag).raw_score)
                    .unwrap()
                    .is_key(),
                flag
            );
        }
    }

    #[test]
    fn normalize_identity_at_cap() {
        let s = ramp(1600, 2);
        assert_eq!(normalize_length(&s, 1600, 40).unwrap(), s);
    }

    #[test]
    fn normalize_pads_short_videos() {
        let s = ramp(100, 3);
        let n = normalize_length(&s, 1600, 40).unwrap();
        assert_eq!(n.frames(), 1600);
        for t in 0..100 {
            assert_eq!(n.frame(t), s.frame(t));
        }
        for t in 100..1600 {
            assert!(n.frame(t).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn normalize_samples_long_videos() {
        let s = ramp(3200, 1);
        let n = normalize_length(&s, 1600, 40).unwrap();
        assert_eq!(n.frames(), 1600);
        // Oracle: the rounding formula in floating point.
        for k in 0..1600 {
            let expected = (k as f64 * 3199.0 / 1599.0).round();
            assert_eq!(n.frame(k)[0], expected);
        }
        assert_eq!(n.frame(0)[0], 0.0);
        assert_eq!(n.frame(1599)[0], 3199.0);
        let gaps: Vec<usize> = uniform_indices(3200, 1600)
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect();
        assert_eq!(gaps.iter().filter(|&&g| g == 2).count(), 1598);
        assert_eq!(gaps.iter().filter(|&&g| g == 3).count(), 1);
    }

    #[test]
    fn normalize_rejects_indivisible_cap() {
        assert!(normalize_length(&ramp(10, 1), 1601, 40).is_err());
    }

    #[test]
    fn uniform_indices_small_cases() {
        assert_eq!(uniform_indices(5, 1), vec![0]);
        assert_eq!(uniform_indices(5, 5), vec![0, 1, 2, 3, 4]);
        assert_eq!(uniform_indices(9, 3), vec![0, 4, 8]);
        assert_eq!(uniform_indices(10, 4), vec![0, 3, 6, 9]);
    }

    #[test]
    fn frame_scores_average_within_subshots() {
        let s = ramp(6, 1);
        let v = LabeledVideo::from_scores(
            s,
            &[1.0, 1.0, 0.0, 0.0, 1.0, 0.5],
            GridSpec::new(4),
            Split::Train,
        )
        .unwrap();
        assert_eq!(v.raw_scores(), vec![0.5, 0.75]);
    }

    #[test]
    fn wrong_label_count_is_rejected() {
        let err = LabeledVideo::from_scores(ramp(10, 1), &[0.0; 4], GridSpec::new(4), Split::Train)
            .unwrap_err();
        assert!(matches!(
            err,
            Error::LabelCount {
                expected: 3,
                actual: 4,
                ..
            }
        ));
    }

    #[test]
    fn normalized_labels_follow_frames() {
        let s = ramp(8, 1);
        let v = LabeledVideo::from_scores(s, &[1.0, 0.0], GridSpec::new(4), Split::Test).unwrap();
        let n = v.normalized(16).unwrap();
        assert_eq!(n.sequence.frames(), 16);
        assert_eq!(n.raw_scores(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(n.split, Split::Test);
    }

    #[test]
    fn mean_pool_of_constant_equals_sampling() {
        let data = vec![0.25; 30 * 2];
        let s = FrameFeatureSequence::new("c", Matrix::from_vec(30, 2, data).unwrap()).unwrap();
        let pooled = mean_pool(&s, 8);
        let sampled: Vec<Vector> = uniform_indices(30, 8)
            .into_iter()
            .map(|t| Vector::from_slice(s.frame(t)))
            .collect();
        assert_eq!(pooled, sampled);
    }

    #[test]
    fn pool_blocks_partition_frames() {
        for total in 1..200 {
            for len in 1..=total.min(90) {
                let blocks = pool_blocks(total, len);
                assert_eq!(blocks[0].start, 0);
                assert_eq!(blocks[len - 1].end, total);
                assert!(blocks.iter().all(|b| !b.is_empty()));
                assert!(blocks.windows(2).all(|w| w[0].end == w[1].start));
            }
        }
    }

    #[test]
    fn empty_video_rejected() {
        assert!(matches!(
            FrameFeatureSequence::new("x", Matrix::zeros(0, 3)),
            Err(Error::EmptyVideo)
        ));
    }
}
