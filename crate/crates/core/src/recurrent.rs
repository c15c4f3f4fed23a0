//! Vanilla RNN and LSTM cells, sequence runners and the matching
//! backpropagation-through-time routine.
//!
//! The LSTM is the plain four-gate cell without peepholes:
//!
//! ```text
//! i = σ(W_ix x + U_ih h + b_i)    f = σ(W_fx x + U_fh h + b_f)
//! o = σ(W_ox x + U_oh h + b_o)    g = tanh(W_gx x + U_gh h + b_g)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```

use crate::error::{Error, Result};
use crate::numerics::{affine, sigmoid_scalar, Matrix, Vector};

/// Gate slots inside [`LstmParameters`]. The slot order is also the
/// serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Cell = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];

    fn letter(self) -> char {
        match self {
            Gate::Input => 'i',
            Gate::Forget => 'f',
            Gate::Output => 'o',
            Gate::Cell => 'g',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnParameters {
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_h: Vector,
    pub u_y: Matrix,
    pub b_y: Vector,
}

impl RnnParameters {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        RnnParameters {
            w_h: Matrix::zeros(hidden, input),
            u_h: Matrix::zeros(hidden, hidden),
            b_h: Vector::zeros(hidden),
            u_y: Matrix::zeros(output, hidden),
            b_y: Vector::zeros(output),
        }
    }
}

/// One vanilla RNN step: returns `(h, y)` with
/// `h = tanh(W_h x + U_h h_prev + b_h)` and `y = tanh(U_y h + b_y)`.
pub fn rnn_step(params: &RnnParameters, x: &[f64], h_prev: &[f64]) -> Result<(Vector, Vector)> {
    let h = affine(&params.w_h, x, &params.u_h, h_prev, &params.b_h)?.map_tanh();
    if params.u_y.cols() != h.len() || params.b_y.len() != params.u_y.rows() {
        return Err(Error::shape(
            "rnn_step",
            format!("output head with {} columns", h.len()),
            format!("{}x{}", params.u_y.rows(), params.u_y.cols()),
        ));
    }
    let mut y = params.b_y.to_vec();
    params.u_y.matvec_acc(&h, &mut y);
    Ok((h, Vector::from_vec(y).map_tanh()))
}

/// Weights of one LSTM layer, indexed by [`Gate`].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParameters {
    /// `W_·x`, each `hidden × input`.
    pub input: [Matrix; 4],
    /// `U_·h`, each `hidden × hidden`.
    pub recurrent: [Matrix; 4],
    pub bias: [Vector; 4],
}

impl LstmParameters {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParameters {
            input: std::array::from_fn(|_| Matrix::zeros(hidden_dim, input_dim)),
            recurrent: std::array::from_fn(|_| Matrix::zeros(hidden_dim, hidden_dim)),
            bias: std::array::from_fn(|_| Vector::zeros(hidden_dim)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input[0].cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.bias[0].len()
    }

    pub fn w(&self, gate: Gate) -> &Matrix {
        &self.input[gate as usize]
    }

    pub fn u(&self, gate: Gate) -> &Matrix {
        &self.recurrent[gate as usize]
    }

    pub fn b(&self, gate: Gate) -> &Vector {
        &self.bias[gate as usize]
    }

    pub fn validate(&self) -> Result<()> {
        let (hidden, input) = (self.hidden_dim(), self.input_dim());
        for k in 0..4 {
            if self.input[k].shape() != (hidden, input)
                || self.recurrent[k].shape() != (hidden, hidden)
                || self.bias[k].len() != hidden
            {
                return Err(Error::shape(
                    "LstmParameters",
                    format!("all gates {hidden}x{input} / {hidden}x{hidden} / {hidden}"),
                    format!(
                        "gate {}: {:?} / {:?} / {}",
                        Gate::ALL[k].letter(),
                        self.input[k].shape(),
                        self.recurrent[k].shape(),
                        self.bias[k].len()
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Parameter arrays in serialization order:
    /// `W_ix W_fx W_ox W_gx U_ih U_fh U_oh U_gh b_i b_f b_o b_g`.
    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(12);
        for g in Gate::ALL {
            out.push((
                format!("W_{}x", g.letter()),
                self.input[g as usize].as_slice(),
            ));
        }
        for g in Gate::ALL {
            out.push((
                format!("U_{}h", g.letter()),
                self.recurrent[g as usize].as_slice(),
            ));
        }
        for g in Gate::ALL {
            out.push((format!("b_{}", g.letter()), &self.bias[g as usize][..]));
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(12);
        out.extend(self.input.iter_mut().map(|m| m.as_mut_slice()));
        out.extend(self.recurrent.iter_mut().map(|m| m.as_mut_slice()));
        out.extend(self.bias.iter_mut().map(|b| &mut b[..]));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Vector::zeros(hidden),
            c: Vector::zeros(hidden),
        }
    }
}

/// Everything one step computed, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStepTrace {
    pub x: Vector,
    pub prev: LstmState,
    pub input_gate: Vector,
    pub forget_gate: Vector,
    pub output_gate: Vector,
    pub candidate: Vector,
    pub next: LstmState,
}

pub fn lstm_step(
    params: &LstmParameters,
    x: &[f64],
    state: &LstmState,
) -> Result<(LstmState, LstmStepTrace)> {
    if state.c.len() != params.hidden_dim() {
        return Err(Error::shape(
            "lstm_step",
            params.hidden_dim(),
            state.c.len(),
        ));
    }
    let pre = |g: Gate| affine(params.w(g), x, params.u(g), &state.h, params.b(g));
    let mut i = pre(Gate::Input)?;
    let mut f = pre(Gate::Forget)?;
    let mut o = pre(Gate::Output)?;
    let mut g = pre(Gate::Cell)?;
    for v in i.iter_mut().chain(f.iter_mut()).chain(o.iter_mut()) {
        *v = sigmoid_scalar(*v);
    }
    for v in g.iter_mut() {
        *v = v.tanh();
    }
    let hidden = params.hidden_dim();
    let mut c = Vector::zeros(hidden);
    let mut h = Vector::zeros(hidden);
    for j in 0..hidden {
        c[j] = f[j] * state.c[j] + i[j] * g[j];
        h[j] = o[j] * c[j].tanh();
    }
    let next = LstmState { h, c };
    let trace = LstmStepTrace {
        x: Vector::from_slice(x),
        prev: state.clone(),
        input_gate: i,
        forget_gate: f,
        output_gate: o,
        candidate: g,
        next: next.clone(),
    };
    Ok((next, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmRun {
    pub hiddens: Vec<Vector>,
    pub final_state: LstmState,
    pub traces: Vec<LstmStepTrace>,
}

/// Left-to-right fold of [`lstm_step`]; starts from zeros unless `init` is given.
pub fn run_lstm(
    params: &LstmParameters,
    inputs: &[Vector],
    init: Option<&LstmState>,
) -> Result<LstmRun> {
    if inputs.is_empty() {
        return Err(Error::EmptySequence("run_lstm"));
    }
    let mut state = match init {
        Some(s) => s.clone(),
        None => LstmState::zeros(params.hidden_dim()),
    };
    let mut hiddens = Vec::with_capacity(inputs.len());
    let mut traces = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (next, trace) = lstm_step(params, x, &state)?;
        hiddens.push(next.h.clone());
        traces.push(trace);
        state = next;
    }
    Ok(LstmRun {
        hiddens,
        final_state: state,
        traces,
    })
}

/// Forward pass plus a backward pass over the reversed inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BidirectionalRun {
    pub forward: LstmRun,
    /// Run over the reversed sequence, in its own (reversed) step order.
    pub backward: LstmRun,
}

impl BidirectionalRun {
    pub fn len(&self) -> usize {
        self.forward.hiddens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_f(&self, t: usize) -> &Vector {
        &self.forward.hiddens[t]
    }

    /// Backward hidden aligned to original index `t`.
    pub fn h_b(&self, t: usize) -> &Vector {
        &self.backward.hiddens[self.len() - 1 - t]
    }

    pub fn pairs(&self) -> Vec<(Vector, Vector)> {
        (0..self.len())
            .map(|t| (self.h_f(t).clone(), self.h_b(t).clone()))
            .collect()
    }
}

pub fn run_bidirectional(
    fwd: &LstmParameters,
    bwd: &LstmParameters,
    inputs: &[Vector],
) -> Result<BidirectionalRun> {
    if inputs.is_empty() {
        return Err(Error::EmptySequence("run_bidirectional"));
    }
    let forward = run_lstm(fwd, inputs, None)?;
    let reversed: Vec<Vector> = inputs.iter().rev().cloned().collect();
    let backward = run_lstm(bwd, &reversed, None)?;
    Ok(BidirectionalRun { forward, backward })
}

/// Backpropagation through time over one recorded run.
///
/// `d_hidden[t]` is the external gradient arriving at the hidden output of
/// step `t`. Parameter gradients are accumulated into `grads`; the return
/// value holds the gradient with respect to each step's input.
pub fn backprop_lstm(
    params: &LstmParameters,
    traces: &[LstmStepTrace],
    d_hidden: &[Vector],
    grads: &mut LstmParameters,
) -> Result<Vec<Vector>> {
    if traces.len() != d_hidden.len() {
        return Err(Error::shape("backprop_lstm", traces.len(), d_hidden.len()));
    }
    let hidden = params.hidden_dim();
    let input = params.input_dim();
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut d_inputs = vec![Vector::zeros(input); traces.len()];
    let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hidden]);

    for t in (0..traces.len()).rev() {
        let tr = &traces[t];
        if tr.x.len() != input || tr.next.c.len() != hidden || d_hidden[t].len() != hidden {
            return Err(Error::shape(
                "backprop_lstm",
                format!("trace with input {input}, hidden {hidden}"),
                format!("input {}, hidden {}", tr.x.len(), tr.next.c.len()),
            ));
        }
        for j in 0..hidden {
            let dh = d_hidden[t][j] + dh_next[j];
            let tc = tr.next.c[j].tanh();
            let (i, f, o, g) = (
                tr.input_gate[j],
                tr.forget_gate[j],
                tr.output_gate[j],
                tr.candidate[j],
            );
            let d_o = dh * tc;
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            da[Gate::Input as usize][j] = dc * g * i * (1.0 - i);
            da[Gate::Forget as usize][j] = dc * tr.prev.c[j] * f * (1.0 - f);
            da[Gate::Output as usize][j] = d_o * o * (1.0 - o);
            da[Gate::Cell as usize][j] = dc * i * (1.0 - g * g);
            dc_next[j] = dc * f;
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..4 {
            grads.input[k].add_outer(&da[k], &tr.x);
            grads.recurrent[k].add_outer(&da[k], &tr.prev.h);
            for (b, d) in grads.bias[k].iter_mut().zip(&da[k]) {
                *b += d;
            }
            params.input[k].tmatvec_acc(&da[k], &mut d_inputs[t]);
            params.recurrent[k].tmatvec_acc(&da[k], &mut dh_next);
        }
    }
    Ok(d_inputs)
}
