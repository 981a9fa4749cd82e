//! One LSTM direction over a frame sequence, forward and reverse mode.
//!
//! Gate layout in the stacked pre-activation is `[input, forget, cell, output]`.

use alloc::vec;
use alloc::vec::Vec;


use super::layout::{LstmLayout, Seg};
use crate::matrix::Matrix;
// Float math comes from libm here; test builds link std, which shadows it.
#[allow(unused_imports)]
use num_traits::Float;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(k: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += k * xi;
    }
}

/// Activations of one direction, indexed by frame (not processing order).
#[derive(Clone, Debug)]
pub(crate) struct DirTrace {
    /// Post-nonlinearity gates, `T x 4C`.
    pub gates: Matrix,
    pub cells: Matrix,
    pub hidden: Matrix,
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
    pub reverse: bool,
}

fn order(frames: usize, reverse: bool) -> impl DoubleEndedIterator<Item = usize> {
    (0..frames).map(move |k| if reverse { frames - 1 - k } else { k })
}

pub(crate) fn forward(
    params: &[f64],
    lay: &LstmLayout,
    input: &Matrix,
    h0: &[f64],
    c0: &[f64],
    reverse: bool,
) -> DirTrace {
    let frames = input.rows();
    let c = lay.cell_dim();
    let w = lay.w.slice(params);
    let u = lay.u.slice(params);
    let b = lay.b.slice(params);
    let in_dim = lay.w.cols;

    let mut gates = Matrix::zeros(frames, 4 * c);
    let mut cells = Matrix::zeros(frames, c);
    let mut hidden = Matrix::zeros(frames, c);
    let mut h_prev = h0.to_vec();
    let mut c_prev = c0.to_vec();
    let mut z = vec![0.0; 4 * c];
    for t in order(frames, reverse) {
        let x = input.row(t);
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = b[r] + dot(&w[r * in_dim..(r + 1) * in_dim], x) + dot(&u[r * c..(r + 1) * c], &h_prev);
        }
        let g = gates.row_mut(t);
        for k in 0..c {
            g[k] = sigmoid(z[k]);
            g[c + k] = sigmoid(z[c + k]);
            g[2 * c + k] = z[2 * c + k].tanh();
            g[3 * c + k] = sigmoid(z[3 * c + k]);
        }
        let cell = cells.row_mut(t);
        for k in 0..c {
            cell[k] = g[c + k] * c_prev[k] + g[k] * g[2 * c + k];
        }
        let h = hidden.row_mut(t);
        for k in 0..c {
            h[k] = g[3 * c + k] * cell[k].tanh();
        }
        h_prev.copy_from_slice(h);
        c_prev.copy_from_slice(cell);
    }
    DirTrace { gates, cells, hidden, h0: h0.to_vec(), c0: c0.to_vec(), reverse }
}

fn accumulate<'a>(seg: &Seg, grads: &'a mut [f64]) -> &'a mut [f64] {
    seg.slice_mut(grads)
}

/// Backpropagation through time. `dhidden` is the loss gradient w.r.t. this
/// direction's outputs; parameter gradients are added into `grads` and input
/// gradients into `dinput`. The initial state is treated as a constant.
pub(crate) fn backward(
    params: &[f64],
    lay: &LstmLayout,
    input: &Matrix,
    trace: &DirTrace,
    dhidden: &Matrix,
    grads: &mut [f64],
    dinput: &mut Matrix,
) {
    let frames = input.rows();
    let c = lay.cell_dim();
    let in_dim = lay.w.cols;
    let w = lay.w.slice(params);
    let u = lay.u.slice(params);

    let mut dh_next = vec![0.0; c];
    let mut dc_next = vec![0.0; c];
    let mut dz = vec![0.0; 4 * c];
    let mut dw = vec![0.0; lay.w.len()];
    let mut du = vec![0.0; lay.u.len()];
    let mut db = vec![0.0; lay.b.len()];
    let steps: Vec<usize> = order(frames, trace.reverse).collect();
    for (k, &t) in steps.iter().enumerate().rev() {
        let (h_prev, c_prev) = match k {
            0 => (&trace.h0[..], &trace.c0[..]),
            _ => (trace.hidden.row(steps[k - 1]), trace.cells.row(steps[k - 1])),
        };
        let g = trace.gates.row(t);
        let cell = trace.cells.row(t);
        let dh_out = dhidden.row(t);
        for j in 0..c {
            let (gi, gf, gg, go) = (g[j], g[c + j], g[2 * c + j], g[3 * c + j]);
            let dh = dh_out[j] + dh_next[j];
            let tc = cell[j].tanh();
            let dc = dh * go * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * gg * gi * (1.0 - gi);
            dz[c + j] = dc * c_prev[j] * gf * (1.0 - gf);
            dz[2 * c + j] = dc * gi * (1.0 - gg * gg);
            dz[3 * c + j] = dh * tc * go * (1.0 - go);
            dc_next[j] = dc * gf;
        }
        let x = input.row(t);
        let dx = dinput.row_mut(t);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            db[r] += d;
            axpy(d, x, &mut dw[r * in_dim..(r + 1) * in_dim]);
            axpy(d, h_prev, &mut du[r * c..(r + 1) * c]);
            axpy(d, &w[r * in_dim..(r + 1) * in_dim], dx);
            axpy(d, &u[r * c..(r + 1) * c], &mut dh_next);
        }
    }
    for (a, b) in accumulate(&lay.w, grads).iter_mut().zip(&dw) {
        *a += b;
    }
    for (a, b) in accumulate(&lay.u, grads).iter_mut().zip(&du) {
        *a += b;
    }
    for (a, b) in accumulate(&lay.b, grads).iter_mut().zip(&db) {
        *a += b;
    }
}
