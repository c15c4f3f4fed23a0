//! Cross-entropy objective, BPTT gradients, a finite-difference oracle and
//! per-video SGD.

use rayon::prelude::*;

use crate::data::{FrameFeatureSequence, LabeledVideo, SubshotLabel};
use crate::error::{Error, Result};
use crate::hrnn::{HrnnDims, HrnnForward, HrnnModel, KeynessPrediction};
use crate::numerics::{SeededRng, Vector};
use crate::recurrent::backprop_lstm;
use crate::registry::KeynessModel;

/// Guard inside the log of the cross-entropy.
pub const LOG_EPSILON: f64 = 1e-12;

/// Denominator floor of [`relative_error`]; entries whose true gradient is
/// below this are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

/// One array per model parameter array, same names, same lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    arrays: Vec<(String, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_for(model: &dyn KeynessModel) -> Self {
        Gradients {
            arrays: model
                .parameters()
                .into_iter()
                .map(|(n, a)| (n, vec![0.0; a.len()]))
                .collect(),
        }
    }

    pub(crate) fn from_arrays(arrays: Vec<(String, &[f64])>) -> Self {
        Gradients {
            arrays: arrays.into_iter().map(|(n, a)| (n, a.to_vec())).collect(),
        }
    }

    pub fn arrays(&self) -> &[(String, Vec<f64>)] {
        &self.arrays
    }

    pub fn arrays_mut(&mut self) -> &mut [(String, Vec<f64>)] {
        &mut self.arrays
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a.as_slice())
    }

    pub fn global_norm(&self) -> f64 {
        self.arrays
            .iter()
            .flat_map(|(_, a)| a.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, a) in &mut self.arrays {
            a.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.arrays
            .iter()
            .all(|(_, a)| a.iter().all(|v| v.is_finite()))
    }

    pub fn check_congruent(&self, model: &dyn KeynessModel) -> Result<()> {
        let params = model.parameters();
        if params.len() != self.arrays.len() {
            return Err(Error::shape("gradients", params.len(), self.arrays.len()));
        }
        for ((pn, pa), (gn, ga)) in params.iter().zip(&self.arrays) {
            if pn != gn || pa.len() != ga.len() {
                return Err(Error::shape(
                    "gradients",
                    format!("{pn}[{}]", pa.len()),
                    format!("{gn}[{}]", ga.len()),
                ));
            }
        }
        Ok(())
    }
}

/// `ln(p + ε)`; above one half `p − 1` is exact, so `ln_1p` keeps full
/// precision near the vertex.
fn guarded_ln(p: f64) -> f64 {
    if p > 0.5 {
        (p - 1.0 + LOG_EPSILON).ln_1p()
    } else {
        (p + LOG_EPSILON).ln()
    }
}

pub fn cross_entropy(p: &KeynessPrediction, g: &SubshotLabel) -> f64 {
    -(g.target[0] * guarded_ln(p.p[0]) + g.target[1] * guarded_ln(p.p[1]))
}

pub(crate) fn prediction_loss(
    video_id: &str,
    predictions: &[KeynessPrediction],
    labels: &[SubshotLabel],
) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LabelCount {
            video_id: video_id.to_string(),
            expected: predictions.len(),
            actual: labels.len(),
        });
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(p, g)| cross_entropy(p, g))
        .sum())
}

/// Summed cross-entropy over the subshots of one video.
pub fn video_loss(
    model: &dyn KeynessModel,
    seq: &FrameFeatureSequence,
    labels: &[SubshotLabel],
) -> Result<f64> {
    prediction_loss(&seq.video_id, &model.predict(seq)?, labels)
}

/// Mean of [`video_loss`] over the videos. Losses are computed in parallel
/// and summed in dataset order.
pub fn batch_objective(model: &dyn KeynessModel, videos: &[LabeledVideo]) -> Result<f64> {
    if videos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let losses = videos
        .par_iter()
        .map(|v| video_loss(model, &v.sequence, &v.labels))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / videos.len() as f64)
}

/// Gradient of the cross-entropy with respect to the pre-softmax
/// activation `q`, keeping the `ε` in the log exact.
pub(crate) fn head_activation_grad(p: &[f64; 2], target: &[f64; 2]) -> [f64; 2] {
    let dp = [
        -target[0] / (p[0] + LOG_EPSILON),
        -target[1] / (p[1] + LOG_EPSILON),
    ];
    let dot = p[0] * dp[0] + p[1] * dp[1];
    [p[0] * (dp[0] - dot), p[1] * (dp[1] - dot)]
}

/// Exact gradient of the video loss for an H-RNN, from the trace of a
/// forward pass over the same model and video.
pub fn backward(
    model: &HrnnModel,
    seq: &FrameFeatureSequence,
    labels: &[SubshotLabel],
    fwd: &HrnnForward,
) -> Result<Gradients> {
    let trace = &fwd.trace;
    if trace.model_fingerprint != model.fingerprint() {
        return Err(Error::StaleTrace(
            "parameters changed after the forward pass".into(),
        ));
    }
    if trace.video_id != seq.video_id || trace.grid.total_frames != seq.frames() {
        return Err(Error::StaleTrace(format!(
            "trace is for video {} ({} frames), not {} ({} frames)",
            trace.video_id,
            trace.grid.total_frames,
            seq.video_id,
            seq.frames()
        )));
    }
    let m = trace.grid.subshot_count;
    if fwd.predictions.len() != m || trace.layer1.len() != m {
        return Err(Error::StaleTrace("trace is incomplete".into()));
    }
    if labels.len() != m {
        return Err(Error::LabelCount {
            video_id: seq.video_id.clone(),
            expected: m,
            actual: labels.len(),
        });
    }

    let HrnnDims {
        hidden1: d1,
        hidden2: d2,
        ..
    } = model.dims();
    let bi = model.layer2_bwd.is_some();
    let mut g = model.zeros_like();
    let mut d_tau = vec![Vector::zeros(d1); m];
    let mut d_hf = vec![Vector::zeros(d2); m];
    // In the backward direction's own step order.
    let mut d_hb = vec![Vector::zeros(d2); m];

    for t in 0..m {
        let dq = head_activation_grad(&fwd.predictions[t].p, &labels[t].target);
        let q = &trace.activations[t];
        let da = [dq[0] * (1.0 - q[0] * q[0]), dq[1] * (1.0 - q[1] * q[1])];
        g.head.weight.add_outer(&da, &trace.head_inputs[t]);
        g.head.bias[0] += da[0];
        g.head.bias[1] += da[1];
        let mut dz = vec![0.0; model.head.input_dim()];
        model.head.weight.tmatvec_acc(&da, &mut dz);
        d_hf[t].copy_from_slice(&dz[..d2]);
        if bi {
            d_hb[m - 1 - t].copy_from_slice(&dz[d2..2 * d2]);
            d_tau[t].copy_from_slice(&dz[2 * d2..]);
        } else {
            d_tau[t].copy_from_slice(&dz[d2..]);
        }
    }

    let dx = backprop_lstm(
        &model.layer2_fwd,
        &trace.layer2_fwd.traces,
        &d_hf,
        &mut g.layer2_fwd,
    )?;
    for (acc, d) in d_tau.iter_mut().zip(&dx) {
        acc.iter_mut().zip(d.iter()).for_each(|(a, v)| *a += v);
    }
    if let (Some(params), Some(run), Some(grads)) =
        (&model.layer2_bwd, &trace.layer2_bwd, g.layer2_bwd.as_mut())
    {
        let dx = backprop_lstm(params, &run.traces, &d_hb, grads)?;
        for (r, d) in dx.iter().enumerate() {
            d_tau[m - 1 - r]
                .iter_mut()
                .zip(d.iter())
                .for_each(|(a, v)| *a += v);
        }
    }

    for (run, dt) in trace.layer1.iter().zip(d_tau) {
        let n = run.traces.len();
        let mut d_h = vec![Vector::zeros(d1); n];
        d_h[n - 1] = dt;
        backprop_lstm(&model.layer1, &run.traces, &d_h, &mut g.layer1)?;
    }

    Ok(Gradients::from_arrays(g.arrays()))
}

/// Central differences of [`video_loss`] for every scalar parameter.
pub fn finite_difference_gradient(
    model: &dyn KeynessModel,
    seq: &FrameFeatureSequence,
    labels: &[SubshotLabel],
    step: f64,
) -> Result<Gradients> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut grads = Gradients::zeros_for(model);
    let mut probe = model.box_clone();
    for k in 0..grads.arrays.len() {
        for j in 0..grads.arrays[k].1.len() {
            let orig = probe.parameters_mut()[k][j];
            probe.parameters_mut()[k][j] = orig + step;
            let up = video_loss(probe.as_ref(), seq, labels)?;
            probe.parameters_mut()[k][j] = orig - step;
            let down = video_loss(probe.as_ref(), seq, labels)?;
            probe.parameters_mut()[k][j] = orig;
            grads.arrays[k].1[j] = (up - down) / (2.0 * step);
        }
    }
    Ok(grads)
}

/// `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error per parameter array, in model order.
    pub arrays: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.arrays.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.arrays.iter().all(|(_, e)| *e < tolerance)
    }
}

pub fn compare_gradients(analytic: &Gradients, numeric: &Gradients) -> Result<GradCheckReport> {
    if analytic.arrays.len() != numeric.arrays.len() {
        return Err(Error::shape(
            "compare_gradients",
            analytic.arrays.len(),
            numeric.arrays.len(),
        ));
    }
    let mut arrays = Vec::with_capacity(analytic.arrays.len());
    for ((name, a), (_, n)) in analytic.arrays.iter().zip(&numeric.arrays) {
        if a.len() != n.len() {
            return Err(Error::shape("compare_gradients", a.len(), n.len()));
        }
        let worst = a
            .iter()
            .zip(n)
            .map(|(x, y)| relative_error(*x, *y))
            .fold(0.0, f64::max);
        arrays.push((name.clone(), worst));
    }
    Ok(GradCheckReport { arrays })
}

/// Analytic gradient against central differences on one video.
pub fn gradient_check(
    model: &dyn KeynessModel,
    seq: &FrameFeatureSequence,
    labels: &[SubshotLabel],
    step: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = model.loss_and_gradient(seq, labels)?;
    let numeric = finite_difference_gradient(model, seq, labels, step)?;
    compare_gradients(&analytic, &numeric)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
    /// Global-norm cap on each per-video gradient.
    pub grad_clip: Option<f64>,
    pub shuffle: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.05,
            epochs: 50,
            seed: 0,
            init_scale: 0.08,
            grad_clip: None,
            shuffle: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be a non-negative number, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "init scale must be a non-negative number, got {}",
                self.init_scale
            )));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!(
                    "gradient clip must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Separate stream for the visiting order so it does not shift when the
/// initialization draws change.
fn shuffle_rng(seed: u64) -> SeededRng {
    SeededRng::new(seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Per-video SGD. Returns the batch objective after each epoch.
pub fn sgd_train(
    model: &mut dyn KeynessModel,
    videos: &[LabeledVideo],
    config: &TrainingConfig,
) -> Result<Vec<f64>> {
    sgd_train_with(model, videos, config, |_, _| {})
}

/// [`sgd_train`] with a callback receiving `(epoch, objective)` after every
/// epoch, epochs counted from 1.
pub fn sgd_train_with(
    model: &mut dyn KeynessModel,
    videos: &[LabeledVideo],
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    config.validate()?;
    if videos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = shuffle_rng(config.seed);
    let mut order: Vec<usize> = (0..videos.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        if config.shuffle {
            rng.shuffle(&mut order);
        }
        for &i in &order {
            let v = &videos[i];
            let (loss, mut grads) = model.loss_and_gradient(&v.sequence, &v.labels)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    video_id: v.sequence.video_id.clone(),
                    value: loss,
                });
            }
            if let Some(cap) = config.grad_clip {
                let norm = grads.global_norm();
                if norm > cap {
                    grads.scale(cap / norm);
                }
            }
            apply_step(model, &grads, config.learning_rate);
        }
        let objective = batch_objective(model, videos)?;
        if !objective.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                video_id: "<batch objective>".into(),
                value: objective,
            });
        }
        history.push(objective);
        on_epoch(epoch, objective);
    }
    Ok(history)
}

/// `Θ ← Θ − lr·∇`.
pub fn apply_step(model: &mut dyn KeynessModel, grads: &Gradients, learning_rate: f64) {
    for (param, (_, g)) in model.parameters_mut().into_iter().zip(&grads.arrays) {
        for (p, d) in param.iter_mut().zip(g) {
            *p -= learning_rate * d;
        }
    }
}

fn is_bias(name: &str) -> bool {
    name.rsplit('.').next().is_some_and(|n| n.starts_with("b_"))
}

/// Weights uniform in `[−init_scale, init_scale]` from `seed`, biases zero.
pub fn init_parameters(model: &mut dyn KeynessModel, init_scale: f64, seed: u64) {
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
    let mut rng = SeededRng::new(seed);
    for (name, array) in names.iter().zip(model.parameters_mut()) {
        for v in array.iter_mut() {
            *v = if is_bias(name) || init_scale == 0.0 {
                0.0
            } else {
                rng.uniform(-init_scale, init_scale)
            };
        }
    }
}

/// Bidirectional H-RNN with seeded uniform weights.
pub fn init_model(dims: HrnnDims, init_scale: f64, seed: u64) -> HrnnModel {
    let mut model = HrnnModel::zeros(dims, true);
    init_parameters(&mut model, init_scale, seed);
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::grid::{GridSpec, SubshotGrid};
    use crate::hrnn;
    use crate::numerics::Matrix;

    fn tiny_dims() -> HrnnDims {
        HrnnDims {
            feature_dim: 3,
            hidden1: 4,
            hidden2: 3,
            subshot_len: 4,
        }
    }

    fn random_video(seed: u64, frames: usize, dim: usize, s: usize) -> LabeledVideo {
        let mut rng = SeededRng::new(seed.wrapping_mul(31).wrapping_add(5));
        let data: Vec<f64> = (0..frames * dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let seq = FrameFeatureSequence::new(
            format!("v{seed}"),
            Matrix::from_vec(frames, dim, data).unwrap(),
        )
        .unwrap();
        let grid = SubshotGrid::new(frames, GridSpec::new(s)).unwrap();
        let labels = (0..grid.subshot_count)
            .map(|_| crate::data::encode_label(rng.uniform(0.0, 1.0)).unwrap())
            .collect();
        LabeledVideo::new(seq, labels, grid, Split::Train).unwrap()
    }

    fn label(key: f64) -> SubshotLabel {
        crate::data::encode_label(key).unwrap()
    }

    #[test]
    fn cross_entropy_cases() {
        let p = |a: f64, b: f64| KeynessPrediction {
            p: [a, b],
            subshot_index: 0,
        };
        let ce = cross_entropy(&p(0.5, 0.5), &label(1.0));
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-11);
        let ce = cross_entropy(&p(0.0, 1.0), &label(1.0));
        assert!(ce.abs() <= 1e-12);
        let ce = cross_entropy(&p(0.7, 0.3), &label(0.6));
        assert!((ce - 0.865_053_660_171_054_6).abs() < 1e-10, "{ce}");
    }

    #[test]
    fn zero_model_losses() {
        let model = HrnnModel::zeros(tiny_dims(), true);
        let v = random_video(1, 20, 3, 4);
        let keys = vec![label(1.0); 5];
        let loss = video_loss(&model, &v.sequence, &keys).unwrap();
        assert!((loss - 5.0 * std::f64::consts::LN_2).abs() < 1e-10);
        assert!(matches!(
            video_loss(&model, &v.sequence, &keys[..4]),
            Err(Error::LabelCount { .. })
        ));
    }

    #[test]
    fn batch_objective_is_mean_over_videos() {
        let model = init_model(tiny_dims(), 0.5, 3);
        let a = random_video(1, 10, 3, 4);
        let b = random_video(2, 13, 3, 4);
        let la = video_loss(&model, &a.sequence, &a.labels).unwrap();
        let lb = video_loss(&model, &b.sequence, &b.labels).unwrap();
        let both = batch_objective(&model, &[a.clone(), b.clone()]).unwrap();
        assert!((both - (la + lb) / 2.0).abs() < 1e-14);
        let swapped = batch_objective(&model, &[b, a.clone()]).unwrap();
        assert!((both - swapped).abs() < 1e-14);
        let dup = batch_objective(&model, &[a.clone(), a.clone()]).unwrap();
        assert!((dup - la).abs() < 1e-14);
        assert!(matches!(
            batch_objective(&model, &[]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..5 {
            let model = init_model(tiny_dims(), 0.5, seed);
            let v = random_video(seed, 10, 3, 4);
            let report = gradient_check(&model, &v.sequence, &v.labels, 1e-6).unwrap();
            assert!(report.passes(1e-5), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn single_direction_backward_matches_finite_differences() {
        let mut model = HrnnModel::zeros(tiny_dims(), false);
        init_parameters(&mut model, 0.5, 11);
        let v = random_video(4, 12, 3, 4);
        let report = gradient_check(&model, &v.sequence, &v.labels, 1e-6).unwrap();
        assert!(report.passes(1e-5), "{report:?}");
    }

    #[test]
    fn masked_and_strided_backward_match_finite_differences() {
        let mut model = init_model(tiny_dims(), 0.5, 2);
        model.masked = true;
        let v = random_video(7, 10, 3, 4);
        let report = gradient_check(&model, &v.sequence, &v.labels, 1e-6).unwrap();
        assert!(report.passes(1e-5), "{report:?}");

        let mut model = init_model(tiny_dims(), 0.5, 2);
        model.grid = GridSpec::with_stride(4, 2).unwrap();
        let grid = SubshotGrid::new(10, model.grid).unwrap();
        let labels: Vec<_> = (0..grid.subshot_count)
            .map(|i| label((i % 2) as f64))
            .collect();
        let report = gradient_check(&model, &v.sequence, &labels, 1e-6).unwrap();
        assert!(report.passes(1e-5), "{report:?}");
    }

    #[test]
    fn stale_trace_rejected() {
        let mut model = init_model(tiny_dims(), 0.5, 0);
        let v = random_video(0, 10, 3, 4);
        let fwd = hrnn::forward(&model, &v.sequence).unwrap();
        let other = random_video(1, 10, 3, 4);
        assert!(matches!(
            backward(&model, &other.sequence, &v.labels, &fwd),
            Err(Error::StaleTrace(_))
        ));
        model.head.bias[0] += 0.1;
        assert!(matches!(
            backward(&model, &v.sequence, &v.labels, &fwd),
            Err(Error::StaleTrace(_))
        ));
    }

    #[test]
    fn head_bias_gradient_vanishes_at_the_fixed_point() {
        let model = init_model(tiny_dims(), 0.5, 9);
        let v = random_video(3, 10, 3, 4);
        let fwd = hrnn::forward(&model, &v.sequence).unwrap();
        let labels: Vec<SubshotLabel> = fwd
            .predictions
            .iter()
            .map(|p| SubshotLabel {
                raw_score: p.p[1],
                target: p.p,
            })
            .collect();
        let g = backward(&model, &v.sequence, &labels, &fwd).unwrap();
        for b in g.get("head.b_p").unwrap() {
            assert!(b.abs() < 1e-10, "{b}");
        }
    }

    #[test]
    fn tau_columns_of_head_get_gradient() {
        let model = init_model(tiny_dims(), 0.5, 1);
        let v = random_video(2, 12, 3, 4);
        let (_, g) = model.loss_and_gradient(&v.sequence, &v.labels).unwrap();
        let num = finite_difference_gradient(&model, &v.sequence, &v.labels, 1e-6).unwrap();
        let w = g.get("head.W_p").unwrap();
        let wn = num.get("head.W_p").unwrap();
        let cols = model.head.input_dim();
        for r in 0..2 {
            for c in 6..cols {
                let (a, n) = (w[r * cols + c], wn[r * cols + c]);
                assert!(a.abs() > 1e-6, "column {c} gradient vanished");
                assert!(relative_error(a, n) < 1e-5);
            }
        }
    }

    #[test]
    fn fd_error_shrinks_quadratically() {
        let model = init_model(tiny_dims(), 0.5, 4);
        let v = random_video(5, 8, 3, 4);
        let (_, exact) = model.loss_and_gradient(&v.sequence, &v.labels).unwrap();
        let residual = |step: f64| {
            let num = finite_difference_gradient(&model, &v.sequence, &v.labels, step).unwrap();
            exact
                .arrays()
                .iter()
                .zip(num.arrays())
                .flat_map(|((_, a), (_, n))| a.iter().zip(n).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max)
        };
        let r1 = residual(2e-2);
        let r2 = residual(1e-2);
        let ratio = r1 / r2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio} ({r1} / {r2})");
    }

    #[test]
    fn fd_is_exact_on_the_head_bias() {
        // The logit is linear in b_p, so only the tanh/softmax curvature
        // enters; with a zero model that curvature is tiny at small steps.
        let model = HrnnModel::zeros(tiny_dims(), true);
        let v = random_video(0, 8, 3, 4);
        let keys = vec![label(1.0); 2];
        let (_, g) = model.loss_and_gradient(&v.sequence, &keys).unwrap();
        let num = finite_difference_gradient(&model, &v.sequence, &keys, 1e-4).unwrap();
        let (a, n) = (g.get("head.b_p").unwrap(), num.get("head.b_p").unwrap());
        for (x, y) in a.iter().zip(n) {
            assert!((x - y).abs() < 1e-8);
        }
        assert!((a[1] + 1.0).abs() < 1e-10 && (a[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut model = init_model(tiny_dims(), 0.3, 0);
        let before = model.clone();
        let vids: Vec<_> = (0..3).map(|i| random_video(i, 9, 3, 4)).collect();
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            epochs: 2,
            ..TrainingConfig::default()
        };
        let hist = sgd_train(&mut model, &vids, &cfg).unwrap();
        assert_eq!(hist.len(), 2);
        assert_eq!(hist[0].to_bits(), hist[1].to_bits());
        assert_eq!(model.fingerprint(), before.fingerprint());
        assert_eq!(model, before);
    }

    #[test]
    fn one_step_descends_with_line_search() {
        let model = init_model(tiny_dims(), 0.3, 6);
        let v = random_video(8, 12, 3, 4);
        let (loss, g) = model.loss_and_gradient(&v.sequence, &v.labels).unwrap();
        let mut lr = 1e-3;
        let mut decreased = false;
        for _ in 0..20 {
            let mut m = model.clone();
            apply_step(&mut m, &g, lr);
            if video_loss(&m, &v.sequence, &v.labels).unwrap() < loss {
                decreased = true;
                break;
            }
            lr /= 2.0;
        }
        assert!(decreased);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let vids: Vec<_> = (0..4).map(|i| random_video(i, 12, 3, 4)).collect();
        let cfg = TrainingConfig {
            learning_rate: 0.1,
            epochs: 15,
            seed: 3,
            ..TrainingConfig::default()
        };
        let run = || {
            let mut m = init_model(tiny_dims(), 0.3, cfg.seed);
            let h = sgd_train(&mut m, &vids, &cfg).unwrap();
            (m, h)
        };
        let (m1, h1) = run();
        let (m2, h2) = run();
        assert_eq!(m1, m2);
        assert_eq!(
            h1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            h2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let untrained = batch_objective(&init_model(tiny_dims(), 0.3, 3), &vids).unwrap();
        assert!(h1.last().unwrap() < &untrained);
    }

    #[test]
    fn clipping_bounds_the_step() {
        let mut model = init_model(tiny_dims(), 0.3, 1);
        let before = model.clone();
        let v = random_video(1, 12, 3, 4);
        let cfg = TrainingConfig {
            learning_rate: 1.0,
            epochs: 1,
            shuffle: false,
            grad_clip: Some(1e-3),
            ..TrainingConfig::default()
        };
        sgd_train(&mut model, std::slice::from_ref(&v), &cfg).unwrap();
        let moved: f64 = model
            .arrays()
            .iter()
            .zip(before.arrays())
            .flat_map(|((_, a), (_, b))| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
            .sum::<f64>()
            .sqrt();
        assert!(moved <= 1e-3 + 1e-15, "{moved}");
    }

    #[test]
    fn bad_configs_rejected() {
        let mut model = init_model(tiny_dims(), 0.3, 1);
        let vids = vec![random_video(1, 8, 3, 4)];
        for cfg in [
            TrainingConfig {
                epochs: 0,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                learning_rate: f64::NAN,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                grad_clip: Some(0.0),
                ..TrainingConfig::default()
            },
        ] {
            assert!(matches!(
                sgd_train(&mut model, &vids, &cfg),
                Err(Error::Config(_))
            ));
        }
        assert!(matches!(
            sgd_train(&mut model, &[], &TrainingConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn divergence_reports_non_finite_loss() {
        let mut model = init_model(tiny_dims(), 0.3, 1);
        let mut v = random_video(1, 8, 3, 4);
        v.labels[0].target = [f64::NAN, 1.0];
        let cfg = TrainingConfig {
            epochs: 1,
            ..TrainingConfig::default()
        };
        match sgd_train(&mut model, &[v], &cfg) {
            Err(Error::NonFinite {
                epoch: 1, video_id, ..
            }) => assert_eq!(video_id, "v1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_model(tiny_dims(), 0.2, 5);
        assert_eq!(a, init_model(tiny_dims(), 0.2, 5));
        assert_ne!(a, init_model(tiny_dims(), 0.2, 6));
        for (name, arr) in a.arrays() {
            for v in arr {
                if is_bias(&name) {
                    assert_eq!(*v, 0.0, "{name}");
                } else {
                    assert!(v.abs() <= 0.2, "{name}: {v}");
                }
            }
        }
        let z = init_model(tiny_dims(), 0.0, 5);
        assert_eq!(z, HrnnModel::zeros(tiny_dims(), true));
    }
}
