//! Interchangeable keyness models behind one trait, looked up by name.
//!
//! Every variant maps a frame sequence to one [`KeynessPrediction`] per
//! subshot and can report its loss gradient, so training, gradient checking,
//! evaluation and serialization all run through the same code path.

use std::fmt;

use crate::data::{FrameFeatureSequence, SubshotLabel};
use crate::error::{Error, Result};
use crate::eval::baseline::{FlatLstmModel, Reduction};
use crate::grid::GridSpec;
use crate::hrnn::{HrnnDims, HrnnModel, KeynessPrediction};
use crate::training::{self, Gradients};

pub trait KeynessModel: Send + Sync + fmt::Debug {
    /// Registry name of this variant.
    fn variant(&self) -> &'static str;

    fn grid_spec(&self) -> GridSpec;

    fn feature_dim(&self) -> usize;

    /// Dimensions written to the model file header; enough to rebuild the
    /// parameter shapes.
    fn header_dims(&self) -> Vec<usize>;

    /// Named parameter arrays in a fixed order.
    fn parameters(&self) -> Vec<(String, &[f64])>;

    /// Same arrays, same order, mutable.
    fn parameters_mut(&mut self) -> Vec<&mut [f64]>;

    fn predict(&self, seq: &FrameFeatureSequence) -> Result<Vec<KeynessPrediction>>;

    /// Summed cross-entropy over the video and its exact gradient.
    fn loss_and_gradient(
        &self,
        seq: &FrameFeatureSequence,
        labels: &[SubshotLabel],
    ) -> Result<(f64, Gradients)>;

    /// Apply runtime options that are not part of the stored weights.
    fn configure(&mut self, _config: &ModelConfig) -> Result<()> {
        Ok(())
    }

    fn box_clone(&self) -> Box<dyn KeynessModel>;
}

impl Clone for Box<dyn KeynessModel> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Shape and runtime options used to build any registered variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub subshot_len: usize,
    /// Subshot stride for the hierarchical variants; `None` cuts evenly.
    pub stride: Option<usize>,
    pub masked: bool,
    /// Sequence length the flat baselines reduce a video to.
    pub flat_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: 1024,
            hidden1: 128,
            hidden2: 128,
            subshot_len: 40,
            stride: None,
            masked: false,
            flat_steps: 80,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("hidden1", self.hidden1),
            ("hidden2", self.hidden2),
            ("subshot_len", self.subshot_len),
            ("flat_steps", self.flat_steps),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        GridSpec::with_stride(self.subshot_len, self.stride.unwrap_or(self.subshot_len))?;
        Ok(())
    }

    fn hrnn_dims(&self) -> HrnnDims {
        HrnnDims {
            feature_dim: self.feature_dim,
            hidden1: self.hidden1,
            hidden2: self.hidden2,
            subshot_len: self.subshot_len,
        }
    }
}

type BuildFn = fn(&ModelConfig) -> Result<Box<dyn KeynessModel>>;
type FromHeaderFn = fn(&[usize]) -> Result<Box<dyn KeynessModel>>;

pub struct VariantEntry {
    pub name: &'static str,
    pub summary: &'static str,
    /// Number of header dims [`VariantEntry::from_header`] expects.
    pub header_len: usize,
    /// Zero-initialized model of this variant.
    pub build: BuildFn,
    /// Zero-initialized model with shapes recovered from a file header.
    pub from_header: FromHeaderFn,
}

impl fmt::Debug for VariantEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VariantEntry")
            .field("name", &self.name)
            .field("summary", &self.summary)
            .finish()
    }
}

#[derive(Debug)]
pub struct ModelRegistry {
    entries: Vec<VariantEntry>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

fn header_to_hrnn(dims: &[usize]) -> Result<HrnnDims> {
    match dims {
        [feature_dim, hidden1, hidden2, subshot_len] => Ok(HrnnDims {
            feature_dim: *feature_dim,
            hidden1: *hidden1,
            hidden2: *hidden2,
            subshot_len: *subshot_len,
        }),
        _ => Err(Error::shape("hrnn header", 4, dims.len())),
    }
}

macro_rules! flat_variant {
    ($name:literal, $summary:literal, $reduction:expr, $bi:expr) => {
        VariantEntry {
            name: $name,
            summary: $summary,
            header_len: 4,
            build: |c| {
                c.validate()?;
                Ok(Box::new(FlatLstmModel::zeros(
                    c.feature_dim,
                    c.hidden1,
                    c.subshot_len,
                    c.flat_steps,
                    $reduction,
                    $bi,
                )))
            },
            from_header: |d| {
                let [feature_dim, hidden, subshot_len, steps] = d else {
                    return Err(Error::shape("flat header", 4, d.len()));
                };
                Ok(Box::new(FlatLstmModel::zeros(
                    *feature_dim,
                    *hidden,
                    *subshot_len,
                    *steps,
                    $reduction,
                    $bi,
                )))
            },
        }
    };
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry {
            entries: Vec::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = ModelRegistry::empty();
        let builtin = [
            VariantEntry {
                name: "hrnn",
                summary: "hierarchical: subshot LSTM, then bidirectional LSTM over subshots",
                header_len: 4,
                build: |c| {
                    c.validate()?;
                    let mut m = HrnnModel::zeros(c.hrnn_dims(), true);
                    m.configure(c)?;
                    Ok(Box::new(m))
                },
                from_header: |d| Ok(Box::new(HrnnModel::zeros(header_to_hrnn(d)?, true))),
            },
            VariantEntry {
                name: "hrnn-single",
                summary: "hierarchical with a forward-only second layer",
                header_len: 4,
                build: |c| {
                    c.validate()?;
                    let mut m = HrnnModel::zeros(c.hrnn_dims(), false);
                    m.configure(c)?;
                    Ok(Box::new(m))
                },
                from_header: |d| Ok(Box::new(HrnnModel::zeros(header_to_hrnn(d)?, false))),
            },
            flat_variant!(
                "flat-single-mean",
                "single LSTM over mean-pooled frame blocks",
                Reduction::MeanPool,
                false
            ),
            flat_variant!(
                "flat-single-sample",
                "single LSTM over uniformly sampled frames",
                Reduction::UniformSample,
                false
            ),
            flat_variant!(
                "flat-bi-mean",
                "bidirectional LSTM over mean-pooled frame blocks",
                Reduction::MeanPool,
                true
            ),
            flat_variant!(
                "flat-bi-sample",
                "bidirectional LSTM over uniformly sampled frames",
                Reduction::UniformSample,
                true
            ),
        ];
        for entry in builtin {
            reg.register(entry).expect("builtin names are unique");
        }
        reg
    }

    pub fn register(&mut self, entry: VariantEntry) -> Result<()> {
        if self.entries.iter().any(|e| e.name == entry.name) {
            return Err(Error::Config(format!(
                "variant `{}` is already registered",
                entry.name
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&VariantEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::UnknownVariant(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn entries(&self) -> &[VariantEntry] {
        &self.entries
    }

    /// Build `name` and draw its weights from `seed`.
    pub fn create(
        &self,
        name: &str,
        config: &ModelConfig,
        init_scale: f64,
        seed: u64,
    ) -> Result<Box<dyn KeynessModel>> {
        let mut model = (self.get(name)?.build)(config)?;
        training::init_parameters(model.as_mut(), init_scale, seed);
        Ok(model)
    }
}
