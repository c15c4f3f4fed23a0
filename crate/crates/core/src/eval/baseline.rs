//! Flat LSTM baselines.
//!
//! The video is reduced to a fixed number of steps, either by mean-pooling
//! consecutive frame blocks or by uniform frame sampling, and one (or two,
//! bidirectionally) LSTM runs over the result. Every step gets a head
//! activation `tanh(W_p [h_f, h_b] + b_p)`; a subshot averages the
//! activations of the steps whose representative frame it owns and applies
//! the softmax. A subshot that owns no step borrows the nearest one.

use crate::data::{mean_pool, pool_blocks, uniform_indices, FrameFeatureSequence, SubshotLabel};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, SubshotGrid};
use crate::hrnn::{fingerprint_arrays, prefixed, to_prediction, KeynessPrediction, PredictionHead};
use crate::numerics::Vector;
use crate::recurrent::{backprop_lstm, run_lstm, LstmParameters, LstmRun};
use crate::registry::KeynessModel;
use crate::training::{head_activation_grad, prediction_loss, Gradients};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    MeanPool,
    UniformSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatLstmModel {
    pub fwd: LstmParameters,
    pub bwd: Option<LstmParameters>,
    pub head: PredictionHead,
    pub reduction: Reduction,
    pub subshot_len: usize,
    /// Reduced sequence length; shorter videos keep every frame.
    pub steps: usize,
}

impl FlatLstmModel {
    pub fn zeros(
        feature_dim: usize,
        hidden: usize,
        subshot_len: usize,
        steps: usize,
        reduction: Reduction,
        bidirectional: bool,
    ) -> Self {
        let head_in = if bidirectional { 2 * hidden } else { hidden };
        FlatLstmModel {
            fwd: LstmParameters::zeros(feature_dim, hidden),
            bwd: bidirectional.then(|| LstmParameters::zeros(feature_dim, hidden)),
            head: PredictionHead::zeros(head_in),
            reduction,
            subshot_len,
            steps,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.fwd.hidden_dim()
    }

    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        prefixed(&mut out, "fwd", self.fwd.arrays());
        if let Some(b) = &self.bwd {
            prefixed(&mut out, "bwd", b.arrays());
        }
        prefixed(&mut out, "head", self.head.arrays());
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.fwd.arrays_mut();
        if let Some(b) = &mut self.bwd {
            out.extend(b.arrays_mut());
        }
        out.extend(self.head.arrays_mut());
        out
    }

    fn zeros_like(&self) -> Self {
        FlatLstmModel::zeros(
            self.fwd.input_dim(),
            self.hidden_dim(),
            self.subshot_len,
            self.steps,
            self.reduction,
            self.bwd.is_some(),
        )
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint_arrays(self.arrays().iter().map(|(_, a)| *a))
    }
}

/// Reduced inputs and the frame each step stands for.
fn reduce(
    seq: &FrameFeatureSequence,
    steps: usize,
    reduction: Reduction,
) -> (Vec<Vector>, Vec<usize>) {
    let t = seq.frames();
    let len = steps.min(t);
    match reduction {
        Reduction::MeanPool => {
            let centres = pool_blocks(t, len)
                .into_iter()
                .map(|b| (b.start + b.end - 1) / 2)
                .collect();
            (mean_pool(seq, len), centres)
        }
        Reduction::UniformSample => {
            let idx = uniform_indices(t, len);
            let inputs = idx
                .iter()
                .map(|&i| Vector::from_slice(seq.frame(i)))
                .collect();
            (inputs, idx)
        }
    }
}

/// Steps assigned to each subshot of `grid`.
pub fn step_groups(grid: &SubshotGrid, representatives: &[usize]) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); grid.subshot_count];
    for (k, &frame) in representatives.iter().enumerate() {
        groups[grid.owner_of(frame)].push(k);
    }
    for (i, group) in groups.iter_mut().enumerate() {
        if group.is_empty() {
            let r = grid.frame_range(i);
            let distance = |f: usize| {
                if f < r.start {
                    r.start - f
                } else {
                    f.saturating_sub(r.end - 1)
                }
            };
            let nearest = (0..representatives.len())
                .min_by_key(|&k| (distance(representatives[k]), k))
                .expect("at least one step");
            group.push(nearest);
        }
    }
    groups
}

struct FlatForward {
    predictions: Vec<KeynessPrediction>,
    groups: Vec<Vec<usize>>,
    fwd: LstmRun,
    bwd: Option<LstmRun>,
    head_inputs: Vec<Vector>,
    activations: Vec<Vector>,
}

fn run(model: &FlatLstmModel, seq: &FrameFeatureSequence) -> Result<FlatForward> {
    if seq.dim() != model.fwd.input_dim() {
        return Err(Error::shape(
            "flat baseline forward",
            format!("d_feat {}", model.fwd.input_dim()),
            seq.dim(),
        ));
    }
    let grid = SubshotGrid::new(seq.frames(), GridSpec::new(model.subshot_len))?;
    let (inputs, reps) = reduce(seq, model.steps, model.reduction);
    let n = inputs.len();
    let groups = step_groups(&grid, &reps);

    let fwd = run_lstm(&model.fwd, &inputs, None)?;
    let bwd = match &model.bwd {
        Some(p) => {
            let reversed: Vec<Vector> = inputs.iter().rev().cloned().collect();
            Some(run_lstm(p, &reversed, None)?)
        }
        None => None,
    };
    let mut head_inputs = Vec::with_capacity(n);
    let mut activations = Vec::with_capacity(n);
    for k in 0..n {
        let z = match &bwd {
            Some(b) => Vector::concat(&[&fwd.hiddens[k], &b.hiddens[n - 1 - k]]),
            None => fwd.hiddens[k].clone(),
        };
        activations.push(model.head.activate(&z)?);
        head_inputs.push(z);
    }
    let mut predictions = Vec::with_capacity(groups.len());
    for (i, group) in groups.iter().enumerate() {
        let mut q = Vector::zeros(2);
        for &k in group {
            q[0] += activations[k][0];
            q[1] += activations[k][1];
        }
        let w = group.len() as f64;
        q[0] /= w;
        q[1] /= w;
        predictions.push(to_prediction(&q, i));
    }
    Ok(FlatForward {
        predictions,
        groups,
        fwd,
        bwd,
        head_inputs,
        activations,
    })
}

/// Per-subshot predictions of a flat baseline.
pub fn flat_baseline_forward(
    model: &FlatLstmModel,
    seq: &FrameFeatureSequence,
) -> Result<Vec<KeynessPrediction>> {
    Ok(run(model, seq)?.predictions)
}

fn backward(
    model: &FlatLstmModel,
    out: &FlatForward,
    labels: &[SubshotLabel],
) -> Result<Gradients> {
    let n = out.head_inputs.len();
    let h = model.hidden_dim();
    let mut dq = vec![[0.0; 2]; n];
    for ((group, pred), label) in out.groups.iter().zip(&out.predictions).zip(labels) {
        let d = head_activation_grad(&pred.p, &label.target);
        let w = group.len() as f64;
        for &k in group {
            dq[k][0] += d[0] / w;
            dq[k][1] += d[1] / w;
        }
    }

    let mut g = model.zeros_like();
    let mut d_hf = vec![Vector::zeros(h); n];
    let mut d_hb = vec![Vector::zeros(h); n];
    for k in 0..n {
        let q = &out.activations[k];
        let da = [
            dq[k][0] * (1.0 - q[0] * q[0]),
            dq[k][1] * (1.0 - q[1] * q[1]),
        ];
        g.head.weight.add_outer(&da, &out.head_inputs[k]);
        g.head.bias[0] += da[0];
        g.head.bias[1] += da[1];
        let mut dz = vec![0.0; model.head.input_dim()];
        model.head.weight.tmatvec_acc(&da, &mut dz);
        d_hf[k].copy_from_slice(&dz[..h]);
        if model.bwd.is_some() {
            d_hb[n - 1 - k].copy_from_slice(&dz[h..]);
        }
    }
    backprop_lstm(&model.fwd, &out.fwd.traces, &d_hf, &mut g.fwd)?;
    if let (Some(p), Some(r), Some(gb)) = (&model.bwd, &out.bwd, g.bwd.as_mut()) {
        backprop_lstm(p, &r.traces, &d_hb, gb)?;
    }
    Ok(Gradients::from_arrays(g.arrays()))
}

impl KeynessModel for FlatLstmModel {
    fn variant(&self) -> &'static str {
        match (self.bwd.is_some(), self.reduction) {
            (false, Reduction::MeanPool) => "flat-single-mean",
            (false, Reduction::UniformSample) => "flat-single-sample",
            (true, Reduction::MeanPool) => "flat-bi-mean",
            (true, Reduction::UniformSample) => "flat-bi-sample",
        }
    }

    fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.subshot_len)
    }

    fn feature_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    fn header_dims(&self) -> Vec<usize> {
        vec![
            self.fwd.input_dim(),
            self.hidden_dim(),
            self.subshot_len,
            self.steps,
        ]
    }

    fn parameters(&self) -> Vec<(String, &[f64])> {
        self.arrays()
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.arrays_mut()
    }

    fn predict(&self, seq: &FrameFeatureSequence) -> Result<Vec<KeynessPrediction>> {
        flat_baseline_forward(self, seq)
    }

    fn loss_and_gradient(
        &self,
        seq: &FrameFeatureSequence,
        labels: &[SubshotLabel],
    ) -> Result<(f64, Gradients)> {
        let out = run(self, seq)?;
        let loss = prediction_loss(&seq.video_id, &out.predictions, labels)?;
        Ok((loss, backward(self, &out, labels)?))
    }

    fn box_clone(&self) -> Box<dyn KeynessModel> {
        Box::new(self.clone())
    }
}
