//! Named tensor layout over the flat parameter vector.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::NetworkConfig;

/// A `rows x cols` row-major tensor stored at `offset` in the flat vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seg {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Seg {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.offset..self.offset + self.len()]
    }

    pub fn slice_mut<'a>(&self, v: &'a mut [f64]) -> &'a mut [f64] {
        &mut v[self.offset..self.offset + self.len()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LstmLayout {
    pub w: Seg,
    pub u: Seg,
    pub b: Seg,
}

impl LstmLayout {
    pub fn cell_dim(&self) -> usize {
        self.u.cols
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerLayout {
    pub fwd: LstmLayout,
    pub bwd: Option<LstmLayout>,
}

/// Where every parameter tensor lives, with stable names for checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub(crate) proj_w: Seg,
    pub(crate) proj_b: Seg,
    pub(crate) layers: Vec<LayerLayout>,
    pub(crate) heads: Vec<(Seg, Seg)>,
    tensors: Vec<(String, Seg)>,
    total: usize,
}

struct Builder {
    offset: usize,
    tensors: Vec<(String, Seg)>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize) -> Seg {
        let seg = Seg { offset: self.offset, rows, cols };
        self.offset += seg.len();
        self.tensors.push((name, seg));
        seg
    }

    fn lstm(&mut self, prefix: &str, input: usize, cell: usize) -> LstmLayout {
        LstmLayout {
            w: self.add(format!("{prefix}.w_input"), 4 * cell, input),
            u: self.add(format!("{prefix}.w_recurrent"), 4 * cell, cell),
            b: self.add(format!("{prefix}.bias"), 4 * cell, 1),
        }
    }
}

impl ParamLayout {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let mut b = Builder { offset: 0, tensors: Vec::new() };
        let proj_w = b.add("proj.weight".into(), cfg.proj_dim, cfg.input_dim);
        let proj_b = b.add("proj.bias".into(), cfg.proj_dim, 1);
        let mut layers = Vec::new();
        let mut input = cfg.proj_dim;
        for l in 0..cfg.num_recurrent_layers {
            let fwd = b.lstm(&format!("rnn{l}.fwd"), input, cfg.cell_dim);
            let bwd = cfg.bidirectional.then(|| b.lstm(&format!("rnn{l}.bwd"), input, cfg.cell_dim));
            layers.push(LayerLayout { fwd, bwd });
            input = cfg.layer_output_dim();
        }
        let heads = (0..cfg.num_outputs)
            .map(|s| {
                let w = b.add(format!("head{s}.weight"), cfg.input_dim, input);
                let bias = b.add(format!("head{s}.bias"), cfg.input_dim, 1);
                (w, bias)
            })
            .collect();
        ParamLayout { proj_w, proj_b, layers, heads, total: b.offset, tensors: b.tensors }
    }

    /// Total number of scalar parameters.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Named tensors in storage order.
    pub fn tensors(&self) -> &[(String, Seg)] {
        &self.tensors
    }
}
