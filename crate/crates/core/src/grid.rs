//! Cutting a frame sequence into fixed-length subshots.

use std::ops::Range;

use crate::data::FrameFeatureSequence;
use crate::error::{Error, Result};
use crate::numerics::Vector;

/// How a video is cut: subshot length `s` and the offset between subshot
/// starts. `stride == subshot_len` cuts the video evenly without overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub subshot_len: usize,
    pub stride: usize,
}

impl GridSpec {
    pub fn new(subshot_len: usize) -> Self {
        GridSpec {
            subshot_len,
            stride: subshot_len,
        }
    }

    pub fn with_stride(subshot_len: usize, stride: usize) -> Result<Self> {
        let spec = GridSpec {
            subshot_len,
            stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subshot_len == 0 {
            return Err(Error::Config("subshot length must be at least 1".into()));
        }
        if self.stride == 0 || self.stride > self.subshot_len {
            return Err(Error::Config(format!(
                "stride must lie in 1..={}, got {}",
                self.subshot_len, self.stride
            )));
        }
        Ok(())
    }

    pub fn is_even_cut(&self) -> bool {
        self.stride == self.subshot_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubshotGrid {
    pub total_frames: usize,
    pub subshot_length: usize,
    pub stride: usize,
    pub subshot_count: usize,
    /// Zero frames appended after the last real frame.
    pub pad_frames: usize,
}

impl SubshotGrid {
    pub fn new(total_frames: usize, spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        if total_frames == 0 {
            return Err(Error::EmptyVideo);
        }
        let s = spec.subshot_len;
        let stride = spec.stride;
        let subshot_count = if total_frames <= s {
            1
        } else {
            (total_frames - s).div_ceil(stride) + 1
        };
        let covered = (subshot_count - 1) * stride + s;
        Ok(SubshotGrid {
            total_frames,
            subshot_length: s,
            stride,
            subshot_count,
            pad_frames: covered - total_frames,
        })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            subshot_len: self.subshot_length,
            stride: self.stride,
        }
    }

    pub fn start(&self, i: usize) -> usize {
        i * self.stride
    }

    /// Real (unpadded) frames of subshot `i`.
    pub fn frame_range(&self, i: usize) -> Range<usize> {
        let start = self.start(i);
        start..(start + self.subshot_length).min(self.total_frames)
    }

    pub fn real_len(&self, i: usize) -> usize {
        self.frame_range(i).len()
    }

    /// Subshot that owns frame `t` when subshots are read as consecutive
    /// blocks of `stride` frames.
    pub fn owner_of(&self, t: usize) -> usize {
        (t / self.stride).min(self.subshot_count - 1)
    }
}

/// Cut `seq` into subshots of exactly `s` frames, zero-padding the tail.
pub fn segment_into_subshots(
    seq: &FrameFeatureSequence,
    spec: GridSpec,
) -> Result<(SubshotGrid, Vec<Vec<Vector>>)> {
    let grid = SubshotGrid::new(seq.frames(), spec)?;
    let d = seq.dim();
    let subshots = (0..grid.subshot_count)
        .map(|i| {
            let range = grid.frame_range(i);
            let mut frames: Vec<Vector> = range.map(|t| Vector::from_slice(seq.frame(t))).collect();
            frames.resize(grid.subshot_length, Vector::zeros(d));
            frames
        })
        .collect();
    Ok((grid, subshots))
}

/// Inverse of an even cut: drop padding and concatenate.
pub fn reassemble(grid: &SubshotGrid, subshots: &[Vec<Vector>]) -> Result<Vec<Vector>> {
    if !grid.spec().is_even_cut() {
        return Err(Error::Config(
            "reassembly needs non-overlapping subshots".into(),
        ));
    }
    if subshots.len() != grid.subshot_count {
        return Err(Error::shape(
            "reassemble",
            grid.subshot_count,
            subshots.len(),
        ));
    }
    let mut frames = Vec::with_capacity(grid.total_frames);
    for (i, sub) in subshots.iter().enumerate() {
        frames.extend(sub.iter().take(grid.real_len(i)).cloned());
    }
    Ok(frames)
}
