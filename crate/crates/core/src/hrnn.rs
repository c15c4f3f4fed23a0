//! The two-layer hierarchical summarizer.
//!
//! Layer 1 runs one LSTM over the frames of every subshot and keeps its
//! final hidden state `τ_i`. Layer 2 runs a forward and a backward LSTM over
//! `(τ_1, …, τ_m)`. The head maps `[h_f, h_b, τ]` to a key/non-key
//! distribution through `softmax(tanh(W_p z + b_p))`.

use crate::data::{FrameFeatureSequence, SubshotLabel};
use crate::error::{Error, Result};
use crate::grid::{segment_into_subshots, GridSpec, SubshotGrid};
use crate::numerics::{stable_softmax, Matrix, Vector};
use crate::recurrent::{run_lstm, LstmParameters, LstmRun};
use crate::registry::{KeynessModel, ModelConfig};
use crate::training::{self, Gradients};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeynessPrediction {
    /// `(P(non-key), P(key))`.
    pub p: [f64; 2],
    pub subshot_index: usize,
}

impl KeynessPrediction {
    pub fn key_probability(&self) -> f64 {
        self.p[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubshotEncoding {
    pub tau: Vector,
    pub subshot_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionHead {
    /// `2 × input_dim`.
    pub weight: Matrix,
    pub bias: Vector,
}

impl PredictionHead {
    pub fn zeros(input_dim: usize) -> Self {
        PredictionHead {
            weight: Matrix::zeros(2, input_dim),
            bias: Vector::zeros(2),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    /// `tanh(W_p z + b_p)`, the pre-softmax activation.
    pub fn activate(&self, z: &[f64]) -> Result<Vector> {
        if z.len() != self.weight.cols() {
            return Err(Error::shape("prediction head", self.weight.cols(), z.len()));
        }
        let mut a = self.bias.to_vec();
        self.weight.matvec_acc(z, &mut a);
        Ok(Vector::from_vec(a).map_tanh())
    }

    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        vec![
            ("W_p".to_string(), self.weight.as_slice()),
            ("b_p".to_string(), &self.bias[..]),
        ]
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias[..]]
    }
}

pub(crate) fn to_prediction(activation: &[f64], subshot_index: usize) -> KeynessPrediction {
    let p = stable_softmax(activation);
    KeynessPrediction {
        p: [p[0], p[1]],
        subshot_index,
    }
}

/// Head output for one subshot from `[h_f, h_b, τ]`, concatenated in that
/// order.
pub fn predict_keyness(
    head: &PredictionHead,
    h_f: &[f64],
    h_b: &[f64],
    tau: &[f64],
    subshot_index: usize,
) -> Result<KeynessPrediction> {
    let z = Vector::concat(&[h_f, h_b, tau]);
    Ok(to_prediction(&head.activate(&z)?, subshot_index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HrnnDims {
    pub feature_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub subshot_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrnnModel {
    pub layer1: LstmParameters,
    pub layer2_fwd: LstmParameters,
    /// `None` for the forward-only second layer.
    pub layer2_bwd: Option<LstmParameters>,
    pub head: PredictionHead,
    pub grid: GridSpec,
    /// Encode the last subshot up to its last real frame instead of running
    /// the zero padding through layer 1.
    pub masked: bool,
}

impl HrnnModel {
    pub fn zeros(dims: HrnnDims, bidirectional: bool) -> Self {
        let head_in = if bidirectional {
            2 * dims.hidden2 + dims.hidden1
        } else {
            dims.hidden2 + dims.hidden1
        };
        HrnnModel {
            layer1: LstmParameters::zeros(dims.feature_dim, dims.hidden1),
            layer2_fwd: LstmParameters::zeros(dims.hidden1, dims.hidden2),
            layer2_bwd: bidirectional.then(|| LstmParameters::zeros(dims.hidden1, dims.hidden2)),
            head: PredictionHead::zeros(head_in),
            grid: GridSpec::new(dims.subshot_len),
            masked: false,
        }
    }

    pub fn dims(&self) -> HrnnDims {
        HrnnDims {
            feature_dim: self.layer1.input_dim(),
            hidden1: self.layer1.hidden_dim(),
            hidden2: self.layer2_fwd.hidden_dim(),
            subshot_len: self.grid.subshot_len,
        }
    }

    pub fn is_bidirectional(&self) -> bool {
        self.layer2_bwd.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        self.layer1.validate()?;
        self.layer2_fwd.validate()?;
        let d1 = self.layer1.hidden_dim();
        let d2 = self.layer2_fwd.hidden_dim();
        if self.layer2_fwd.input_dim() != d1 {
            return Err(Error::shape(
                "layer2 input",
                d1,
                self.layer2_fwd.input_dim(),
            ));
        }
        let mut head_in = d2 + d1;
        if let Some(bwd) = &self.layer2_bwd {
            bwd.validate()?;
            if bwd.input_dim() != d1 || bwd.hidden_dim() != d2 {
                return Err(Error::shape(
                    "layer2 backward",
                    format!("{d1} -> {d2}"),
                    format!("{} -> {}", bwd.input_dim(), bwd.hidden_dim()),
                ));
            }
            head_in += d2;
        }
        if self.head.weight.shape() != (2, head_in) || self.head.bias.len() != 2 {
            return Err(Error::shape(
                "prediction head",
                format!("2x{head_in}"),
                format!("{:?}", self.head.weight.shape()),
            ));
        }
        self.grid.validate()
    }

    /// Arrays in serialization order: layer 1, layer-2 forward, layer-2
    /// backward (if present), then `W_p`, `b_p`.
    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        prefixed(&mut out, "layer1", self.layer1.arrays());
        prefixed(&mut out, "layer2_fwd", self.layer2_fwd.arrays());
        if let Some(bwd) = &self.layer2_bwd {
            prefixed(&mut out, "layer2_bwd", bwd.arrays());
        }
        prefixed(&mut out, "head", self.head.arrays());
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.layer1.arrays_mut();
        out.extend(self.layer2_fwd.arrays_mut());
        if let Some(bwd) = &mut self.layer2_bwd {
            out.extend(bwd.arrays_mut());
        }
        out.extend(self.head.arrays_mut());
        out
    }

    /// Same shape, every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = HrnnModel::zeros(self.dims(), self.is_bidirectional());
        z.grid = self.grid;
        z.masked = self.masked;
        z
    }

    /// FNV-1a over every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        fingerprint_arrays(self.arrays().iter().map(|(_, a)| *a))
    }
}

pub(crate) fn prefixed<'a>(
    out: &mut Vec<(String, &'a [f64])>,
    prefix: &str,
    arrays: Vec<(String, &'a [f64])>,
) {
    out.extend(
        arrays
            .into_iter()
            .map(|(n, a)| (format!("{prefix}.{n}"), a)),
    );
}

pub(crate) fn fingerprint_arrays<'a>(arrays: impl Iterator<Item = &'a [f64]>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for a in arrays {
        for v in a {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    hash
}

/// `τ`: final hidden state of layer 1 over one subshot, from a zero state.
pub fn encode_subshot(
    layer1: &LstmParameters,
    subshot: &[Vector],
    subshot_len: usize,
    subshot_index: usize,
) -> Result<SubshotEncoding> {
    if subshot.len() != subshot_len {
        return Err(Error::shape("encode_subshot", subshot_len, subshot.len()));
    }
    let run = run_lstm(layer1, subshot, None)?;
    Ok(SubshotEncoding {
        tau: run.final_state.h,
        subshot_index,
    })
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct HrnnTrace {
    pub(crate) model_fingerprint: u64,
    pub(crate) video_id: String,
    pub grid: SubshotGrid,
    pub layer1: Vec<LstmRun>,
    pub layer2_fwd: LstmRun,
    /// Over the reversed `τ` sequence.
    pub layer2_bwd: Option<LstmRun>,
    pub head_inputs: Vec<Vector>,
    pub activations: Vec<Vector>,
}

#[derive(Debug, Clone)]
pub struct HrnnForward {
    pub encodings: Vec<SubshotEncoding>,
    pub predictions: Vec<KeynessPrediction>,
    pub trace: HrnnTrace,
}

impl HrnnForward {
    pub fn h_f(&self, t: usize) -> &Vector {
        &self.trace.layer2_fwd.hiddens[t]
    }

    pub fn h_b(&self, t: usize) -> Option<&Vector> {
        let m = self.encodings.len();
        self.trace
            .layer2_bwd
            .as_ref()
            .map(|r| &r.hiddens[m - 1 - t])
    }
}

pub fn forward(model: &HrnnModel, seq: &FrameFeatureSequence) -> Result<HrnnForward> {
    if seq.dim() != model.layer1.input_dim() {
        return Err(Error::shape(
            "hrnn forward",
            format!("d_feat {}", model.layer1.input_dim()),
            seq.dim(),
        ));
    }
    let (grid, subshots) = segment_into_subshots(seq, model.grid)?;
    let m = grid.subshot_count;

    let mut layer1 = Vec::with_capacity(m);
    let mut encodings = Vec::with_capacity(m);
    for (i, sub) in subshots.iter().enumerate() {
        let frames = if model.masked {
            &sub[..grid.real_len(i)]
        } else {
            &sub[..]
        };
        let run = run_lstm(&model.layer1, frames, None)?;
        encodings.push(SubshotEncoding {
            tau: run.final_state.h.clone(),
            subshot_index: i,
        });
        layer1.push(run);
    }

    let taus: Vec<Vector> = encodings.iter().map(|e| e.tau.clone()).collect();
    let layer2_fwd = run_lstm(&model.layer2_fwd, &taus, None)?;
    let layer2_bwd = match &model.layer2_bwd {
        Some(bwd) => {
            let reversed: Vec<Vector> = taus.iter().rev().cloned().collect();
            Some(run_lstm(bwd, &reversed, None)?)
        }
        None => None,
    };

    let mut head_inputs = Vec::with_capacity(m);
    let mut activations = Vec::with_capacity(m);
    let mut predictions = Vec::with_capacity(m);
    for t in 0..m {
        let h_f = &layer2_fwd.hiddens[t];
        let z = match &layer2_bwd {
            Some(run) => Vector::concat(&[h_f, &run.hiddens[m - 1 - t], &taus[t]]),
            None => Vector::concat(&[h_f, &taus[t]]),
        };
        let q = model.head.activate(&z)?;
        predictions.push(to_prediction(&q, t));
        head_inputs.push(z);
        activations.push(q);
    }

    Ok(HrnnForward {
        encodings,
        predictions,
        trace: HrnnTrace {
            model_fingerprint: model.fingerprint(),
            video_id: seq.video_id.clone(),
            grid,
            layer1,
            layer2_fwd,
            layer2_bwd,
            head_inputs,
            activations,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepCost {
    pub hierarchical: usize,
    pub flat: usize,
}

impl StepCost {
    /// `1 - hierarchical / flat`.
    pub fn reduction(&self) -> f64 {
        1.0 - self.hierarchical as f64 / self.flat as f64
    }
}

/// Sequential recurrent steps: `T` for one flat LSTM, `s + 2⌈T/s⌉` for the
/// hierarchy (layer-1 length plus both layer-2 directions).
pub fn step_cost(total_frames: usize, subshot_len: usize) -> Result<StepCost> {
    if total_frames == 0 || subshot_len == 0 {
        return Err(Error::Config("step cost needs T >= 1 and s >= 1".into()));
    }
    Ok(StepCost {
        hierarchical: subshot_len + 2 * total_frames.div_ceil(subshot_len),
        flat: total_frames,
    })
}

impl KeynessModel for HrnnModel {
    fn variant(&self) -> &'static str {
        if self.is_bidirectional() {
            "hrnn"
        } else {
            "hrnn-single"
        }
    }

    fn grid_spec(&self) -> GridSpec {
        self.grid
    }

    fn feature_dim(&self) -> usize {
        self.layer1.input_dim()
    }

    fn header_dims(&self) -> Vec<usize> {
        let d = self.dims();
        vec![d.feature_dim, d.hidden1, d.hidden2, d.subshot_len]
    }

    fn parameters(&self) -> Vec<(String, &[f64])> {
        self.arrays()
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.arrays_mut()
    }

    fn predict(&self, seq: &FrameFeatureSequence) -> Result<Vec<KeynessPrediction>> {
        Ok(forward(self, seq)?.predictions)
    }

    fn loss_and_gradient(
        &self,
        seq: &FrameFeatureSequence,
        labels: &[SubshotLabel],
    ) -> Result<(f64, Gradients)> {
        let fwd = forward(self, seq)?;
        let loss = training::prediction_loss(&seq.video_id, &fwd.predictions, labels)?;
        let grads = training::backward(self, seq, labels, &fwd)?;
        Ok((loss, grads))
    }

    fn configure(&mut self, config: &ModelConfig) -> Result<()> {
        self.grid = GridSpec::with_stride(
            self.grid.subshot_len,
            config.stride.unwrap_or(self.grid.subshot_len),
        )?;
        self.masked = config.masked;
        Ok(())
    }

    fn box_clone(&self) -> Box<dyn KeynessModel> {
        Box::new(self.clone())
    }
}
