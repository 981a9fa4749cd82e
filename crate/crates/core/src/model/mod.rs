//! Mask estimation network: input projection, stacked (B)LSTM layers and one
//! ReLU output layer per stream, with hand-written reverse-mode gradients.

mod layout;
mod lstm;
mod train;

use alloc::vec;
use alloc::vec::Vec;

pub use layout::{ParamLayout, Seg};
pub use train::{
    item_gradient, maybe_decay, validation_loss, Adam, ItemGradient, StepReport, TrainItem, TrainSchedule, Trainer,
};

use crate::dsp::MaskSet;
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NetworkConfig {
    /// Frequency bins per frame; also the width of every output mask.
    pub input_dim: usize,
    /// Width of the fully connected input projection.
    pub proj_dim: usize,
    /// LSTM cell units per direction.
    pub cell_dim: usize,
    pub num_recurrent_layers: usize,
    pub bidirectional: bool,
    pub num_outputs: usize,
    pub dropout_rate: f64,
    /// Constant gain applied to input magnitudes before the projection.
    pub input_scale: f64,
    /// Parameters are drawn uniformly from `[-init_range, init_range]`.
    pub init_range: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_dim: 129,
            proj_dim: 64,
            cell_dim: 64,
            num_recurrent_layers: 2,
            bidirectional: true,
            num_outputs: 2,
            dropout_rate: 0.0,
            input_scale: 0.5,
            init_range: 0.05,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.proj_dim == 0 || self.cell_dim == 0 {
            return Err(invalid!("network dimensions must be positive"));
        }
        if self.num_recurrent_layers == 0 || self.num_outputs == 0 {
            return Err(invalid!("need at least one recurrent layer and one output"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(invalid!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if !self.input_scale.is_finite() || !(self.init_range >= 0.0) {
            return Err(invalid!("input_scale and init_range must be finite and non-negative"));
        }
        Ok(())
    }

    /// Width of each recurrent layer's output (both directions concatenated).
    pub fn layer_output_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.cell_dim
        } else {
            self.cell_dim
        }
    }
}

/// Forward-direction `(h, c)` of one recurrent layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Per-layer forward-direction state carried between chunks.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub layers: Vec<LstmState>,
}

impl RecurrentState {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let layer = LstmState { h: vec![0.0; cfg.cell_dim], c: vec![0.0; cfg.cell_dim] };
        Self { layers: vec![layer; cfg.num_recurrent_layers] }
    }

    fn check(&self, cfg: &NetworkConfig) -> Result<()> {
        let ok = self.layers.len() == cfg.num_recurrent_layers
            && self.layers.iter().all(|l| l.h.len() == cfg.cell_dim && l.c.len() == cfg.cell_dim);
        if ok {
            Ok(())
        } else {
            Err(invalid!("recurrent state does not match the network shape"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Infer,
    /// Dropout masks are drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
}

struct LayerTape {
    input: Matrix,
    fwd: lstm::DirTrace,
    bwd: Option<lstm::DirTrace>,
    dropout: Option<Matrix>,
}

struct Tape {
    input: Matrix,
    layers: Vec<LayerTape>,
    top: Matrix,
    head_pre: Vec<Matrix>,
}

/// Result of [`Network::forward`].
pub struct ForwardPass {
    pub masks: MaskSet,
    /// Forward-direction state after the first `carry_at` frames.
    pub final_state: RecurrentState,
    /// Forward-direction hidden outputs per layer, `T x cell_dim`.
    pub forward_hidden: Vec<Matrix>,
    tape: Option<Tape>,
}

impl ForwardPass {
    pub fn frames(&self) -> usize {
        self.masks.frames()
    }

    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layout: ParamLayout,
    params: Vec<f64>,
}

fn affine_rows(input: &Matrix, w: &[f64], b: &[f64], out_dim: usize) -> Matrix {
    let in_dim = input.cols();
    let mut out = Matrix::zeros(input.rows(), out_dim);
    for t in 0..input.rows() {
        let x = input.row(t);
        let o = out.row_mut(t);
        for (r, v) in o.iter_mut().enumerate() {
            *v = b[r] + w[r * in_dim..(r + 1) * in_dim].iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
        }
    }
    out
}

/// `dW += dy^T x`, `db += sum_t dy`, `dx += dy W` for an affine map.
fn affine_backward(dy: &Matrix, x: &Matrix, w: &[f64], dw: &mut [f64], db: &mut [f64], dx: Option<&mut Matrix>) {
    let in_dim = x.cols();
    for t in 0..dy.rows() {
        let xr = x.row(t);
        for (r, &d) in dy.row(t).iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            db[r] += d;
            for (g, xv) in dw[r * in_dim..(r + 1) * in_dim].iter_mut().zip(xr) {
                *g += d * xv;
            }
        }
    }
    if let Some(dx) = dx {
        for t in 0..dy.rows() {
            let dxr = dx.row_mut(t);
            for (r, &d) in dy.row(t).iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (g, wv) in dxr.iter_mut().zip(&w[r * in_dim..(r + 1) * in_dim]) {
                    *g += d * wv;
                }
            }
        }
    }
}

impl Network {
    /// Seeded uniform initialization.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut rng = SeededRng::new(config.seed);
        let r = config.init_range;
        let params = (0..layout.total()).map(|_| rng.uniform_in(-r, r)).collect();
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: NetworkConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total() {
            return Err(invalid!("expected {} parameters, got {}", layout.total(), params.len()));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn zero_state(&self) -> RecurrentState {
        RecurrentState::zeros(&self.config)
    }

    /// Runs the network over `features` (`T x input_dim` magnitudes).
    ///
    /// The forward direction of each layer starts from `initial` (zero when
    /// `None`); `final_state` is its state after frame `carry_at - 1`. The
    /// backward direction starts from zero at frame `T - 1`.
    pub fn forward(
        &self,
        features: &Matrix,
        initial: Option<&RecurrentState>,
        mode: Mode,
        carry_at: usize,
    ) -> Result<ForwardPass> {
        let cfg = &self.config;
        let frames = features.rows();
        if frames == 0 || features.cols() != cfg.input_dim {
            return Err(invalid!("features must be T x {} with T >= 1, got {:?}", cfg.input_dim, features.shape()));
        }
        if !features.is_finite() {
            return Err(Error::Numerical("non-finite input features".into()));
        }
        if carry_at > frames {
            return Err(invalid!("carry point {carry_at} beyond {frames} frames"));
        }
        let zero = self.zero_state();
        let initial = initial.unwrap_or(&zero);
        initial.check(cfg)?;

        let p = &self.params;
        let lay = &self.layout;
        let x = features.scale(cfg.input_scale);
        let mut layer_in = affine_rows(&x, lay.proj_w.slice(p), lay.proj_b.slice(p), cfg.proj_dim);

        let mut dropout_rng = match mode {
            Mode::Train { dropout_seed } if cfg.dropout_rate > 0.0 => Some(SeededRng::new(dropout_seed)),
            _ => None,
        };
        let c = cfg.cell_dim;
        let zeros = vec![0.0; c];
        let mut final_layers = Vec::with_capacity(cfg.num_recurrent_layers);
        let mut forward_hidden = Vec::with_capacity(cfg.num_recurrent_layers);
        let mut tapes = Vec::new();
        for (l, ll) in lay.layers.iter().enumerate() {
            let init = &initial.layers[l];
            let fwd = lstm::forward(p, &ll.fwd, &layer_in, &init.h, &init.c, false);
            let bwd = ll.bwd.as_ref().map(|b| lstm::forward(p, b, &layer_in, &zeros, &zeros, true));
            final_layers.push(if carry_at == 0 {
                init.clone()
            } else {
                LstmState { h: fwd.hidden.row(carry_at - 1).to_vec(), c: fwd.cells.row(carry_at - 1).to_vec() }
            });
            let width = cfg.layer_output_dim();
            let mut out = Matrix::zeros(frames, width);
            for t in 0..frames {
                let row = out.row_mut(t);
                row[..c].copy_from_slice(fwd.hidden.row(t));
                if let Some(b) = &bwd {
                    row[c..].copy_from_slice(b.hidden.row(t));
                }
            }
            let dropout = dropout_rng.as_mut().map(|rng| {
                let keep = 1.0 - cfg.dropout_rate;
                Matrix::from_fn(frames, width, |_, _| if rng.uniform() < cfg.dropout_rate { 0.0 } else { 1.0 / keep })
            });
            if let Some(mask) = &dropout {
                out = out.hadamard(mask)?;
            }
            forward_hidden.push(fwd.hidden.clone());
            let next = out;
            if matches!(mode, Mode::Train { .. }) {
                tapes.push(LayerTape { input: layer_in, fwd, bwd, dropout });
            }
            layer_in = next;
        }

        let mut head_pre = Vec::with_capacity(cfg.num_outputs);
        let mut masks = Vec::with_capacity(cfg.num_outputs);
        for (w, b) in &lay.heads {
            let z = affine_rows(&layer_in, w.slice(p), b.slice(p), cfg.input_dim);
            if !z.is_finite() {
                return Err(Error::Numerical("non-finite network output".into()));
            }
            masks.push(z.map(|v| v.max(0.0)));
            head_pre.push(z);
        }
        let tape = match mode {
            Mode::Train { .. } => Some(Tape { input: x, layers: tapes, top: layer_in, head_pre }),
            Mode::Infer => None,
        };
        Ok(ForwardPass {
            masks: MaskSet::new(masks)?,
            final_state: RecurrentState { layers: final_layers },
            forward_hidden,
            tape,
        })
    }

    /// Parameter gradients given the loss gradient w.r.t. each mask.
    pub fn backward(&self, pass: &ForwardPass, dmasks: &[Matrix]) -> Result<Vec<f64>> {
        let tape = pass
            .tape
            .as_ref()
            .ok_or_else(|| Error::InvalidState("backward needs a forward pass run in train mode".into()))?;
        let cfg = &self.config;
        let frames = pass.frames();
        if dmasks.len() != cfg.num_outputs || dmasks.iter().any(|d| d.shape() != (frames, cfg.input_dim)) {
            return Err(invalid!("mask gradients must be {} matrices of {frames} x {}", cfg.num_outputs, cfg.input_dim));
        }
        let p = &self.params;
        let lay = &self.layout;
        let mut grads = vec![0.0; lay.total()];

        let mut dtop = Matrix::zeros(frames, tape.top.cols());
        for ((dm, z), (w, b)) in dmasks.iter().zip(&tape.head_pre).zip(&lay.heads) {
            let mut dz = dm.clone();
            for (g, zv) in dz.as_mut_slice().iter_mut().zip(z.as_slice()) {
                if *zv <= 0.0 {
                    *g = 0.0;
                }
            }
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; b.len()];
            affine_backward(&dz, &tape.top, w.slice(p), &mut dw, &mut db, Some(&mut dtop));
            add_into(w.slice_mut(&mut grads), &dw);
            add_into(b.slice_mut(&mut grads), &db);
        }

        let c = cfg.cell_dim;
        let mut dout = dtop;
        for (ll, lt) in lay.layers.iter().zip(&tape.layers).rev() {
            if let Some(mask) = &lt.dropout {
                dout = dout.hadamard(mask)?;
            }
            let dh_f = Matrix::from_fn(frames, c, |t, k| dout.get(t, k));
            let mut dinput = Matrix::zeros(frames, lt.input.cols());
            lstm::backward(p, &ll.fwd, &lt.input, &lt.fwd, &dh_f, &mut grads, &mut dinput);
            if let (Some(bl), Some(bt)) = (&ll.bwd, &lt.bwd) {
                let dh_b = Matrix::from_fn(frames, c, |t, k| dout.get(t, c + k));
                lstm::backward(p, bl, &lt.input, bt, &dh_b, &mut grads, &mut dinput);
            }
            dout = dinput;
        }
        let mut dw = vec![0.0; lay.proj_w.len()];
        let mut db = vec![0.0; lay.proj_b.len()];
        affine_backward(&dout, &tape.input, lay.proj_w.slice(p), &mut dw, &mut db, None);
        add_into(lay.proj_w.slice_mut(&mut grads), &dw);
        add_into(lay.proj_b.slice_mut(&mut grads), &db);
        Ok(grads)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
