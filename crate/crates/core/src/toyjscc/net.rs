//! Encoder and decoder as flat parameter vectors, with a hand-written
//! backward pass.
//!
//! Layout (row-major, out × in): encoder W1 (H×D), b1, W2 (K×H), b2, then
//! decoder V1 (H×K), c1, V2 (D×H), c2.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Shape {
    pub d: usize,
    pub k: usize,
    pub h: usize,
}

impl Shape {
    fn sizes(&self) -> [usize; 8] {
        let Shape { d, k, h } = *self;
        [h * d, h, k * h, k, h * k, h, d * h, d]
    }

    pub fn len(&self) -> usize {
        self.sizes().iter().sum()
    }

    /// Fan-in of the layer each parameter block belongs to.
    pub fn fan_ins(&self) -> [usize; 8] {
        let Shape { d, k, h } = *self;
        [d, d, h, h, k, k, h, h]
    }

    pub fn block_sizes(&self) -> [usize; 8] {
        self.sizes()
    }
}

struct Parts<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
    v1: &'a [f64],
    c1: &'a [f64],
    v2: &'a [f64],
    c2: &'a [f64],
}

fn split(theta: &[f64], shape: Shape) -> Parts<'_> {
    let [s0, s1, s2, s3, s4, s5, s6, _] = shape.sizes();
    let (w1, r) = theta.split_at(s0);
    let (b1, r) = r.split_at(s1);
    let (w2, r) = r.split_at(s2);
    let (b2, r) = r.split_at(s3);
    let (v1, r) = r.split_at(s4);
    let (c1, r) = r.split_at(s5);
    let (v2, c2) = r.split_at(s6);
    Parts { w1, b1, w2, b2, v1, c1, v2, c2 }
}

fn split_mut(theta: &mut [f64], shape: Shape) -> [&mut [f64]; 8] {
    let [s0, s1, s2, s3, s4, s5, s6, _] = shape.sizes();
    let (w1, r) = theta.split_at_mut(s0);
    let (b1, r) = r.split_at_mut(s1);
    let (w2, r) = r.split_at_mut(s2);
    let (b2, r) = r.split_at_mut(s3);
    let (v1, r) = r.split_at_mut(s4);
    let (c1, r) = r.split_at_mut(s5);
    let (v2, c2) = r.split_at_mut(s6);
    [w1, b1, w2, b2, v1, c1, v2, c2]
}

fn affine(x: &[f64], rows: usize, n_in: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_out = b.len();
    let mut out = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        let xr = &x[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            let wr = &w[o * n_in..(o + 1) * n_in];
            out.push(b[o] + wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>());
        }
    }
    out
}

/// Accumulate dW, db for `out = x Wᵀ + b` and return dx if asked.
fn affine_back(
    x: &[f64],
    rows: usize,
    n_in: usize,
    w: &[f64],
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    want_dx: bool,
) -> Vec<f64> {
    let n_out = db.len();
    let mut dx = if want_dx { vec![0.0; rows * n_in] } else { Vec::new() };
    for r in 0..rows {
        let xr = &x[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            let g = dout[r * n_out + o];
            db[o] += g;
            let dwr = &mut dw[o * n_in..(o + 1) * n_in];
            for (a, c) in dwr.iter_mut().zip(xr) {
                *a += g * c;
            }
            if want_dx {
                let wr = &w[o * n_in..(o + 1) * n_in];
                for (a, c) in dx[r * n_in..(r + 1) * n_in].iter_mut().zip(wr) {
                    *a += g * c;
                }
            }
        }
    }
    dx
}

/// Encoder output after power normalization, plus what the backward pass
/// needs.
pub(crate) struct Encoded {
    pub h1: Vec<f64>,
    pub y: Vec<f64>,
    pub power: f64,
}

pub(crate) fn encode(theta: &[f64], shape: Shape, x: &[f64], rows: usize) -> Result<Encoded> {
    if x.len() != rows * shape.d {
        return Err(Error::DimensionMismatch { expected: rows * shape.d, got: x.len() });
    }
    let p = split(theta, shape);
    let mut h1 = affine(x, rows, shape.d, p.w1, p.b1);
    h1.iter_mut().for_each(|v| *v = v.tanh());
    let z = affine(&h1, rows, shape.h, p.w2, p.b2);
    let power = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    if !(power > 0.0) {
        return Err(if power == 0.0 { Error::AllZeroBatch } else { Error::NonFiniteInput });
    }
    let s = power.sqrt();
    let y = z.iter().map(|v| v / s).collect();
    Ok(Encoded { h1, y, power })
}

pub(crate) struct Decoded {
    pub h2: Vec<f64>,
    pub x_hat: Vec<f64>,
}

pub(crate) fn decode(theta: &[f64], shape: Shape, y_hat: &[f64], rows: usize) -> Decoded {
    let p = split(theta, shape);
    let mut h2 = affine(y_hat, rows, shape.k, p.v1, p.c1);
    h2.iter_mut().for_each(|v| *v = v.tanh());
    let x_hat = affine(&h2, rows, shape.h, p.v2, p.c2);
    Decoded { h2, x_hat }
}

/// Mean over the batch of per-sample squared error sums.
pub(crate) fn mse(x: &[f64], x_hat: &[f64], rows: usize) -> f64 {
    x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / rows as f64
}

/// Gradient of `mse + extra(y)` with respect to theta. `dy_extra` is the
/// gradient of the extra term with respect to the normalized symbols; the
/// channel passes gradients straight through.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    theta: &[f64],
    shape: Shape,
    x: &[f64],
    rows: usize,
    enc: &Encoded,
    y_hat: &[f64],
    dec: &Decoded,
    dy_extra: Option<&[f64]>,
) -> Vec<f64> {
    let Shape { d, k, h } = shape;
    let p = split(theta, shape);
    let mut grad = vec![0.0; theta.len()];
    let [gw1, gb1, gw2, gb2, gv1, gc1, gv2, gc2] = split_mut(&mut grad, shape);

    let scale = 2.0 / rows as f64;
    let dxh: Vec<f64> = dec.x_hat.iter().zip(x).map(|(a, b)| scale * (a - b)).collect();
    let mut dh2 = affine_back(&dec.h2, rows, h, p.v2, &dxh, gv2, gc2, true);
    for (g, t) in dh2.iter_mut().zip(&dec.h2) {
        *g *= 1.0 - t * t;
    }
    let mut dy = affine_back(y_hat, rows, k, p.v1, &dh2, gv1, gc1, true);
    if let Some(extra) = dy_extra {
        dy.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
    }

    // y = z/√P with P = mean(z²): dz = (dy - y·mean(dy∘y)) / √P
    let n = enc.y.len() as f64;
    let proj = dy.iter().zip(&enc.y).map(|(a, b)| a * b).sum::<f64>() / n;
    let s = enc.power.sqrt();
    let dz: Vec<f64> = dy.iter().zip(&enc.y).map(|(g, yv)| (g - yv * proj) / s).collect();

    let mut dh1 = affine_back(&enc.h1, rows, h, p.w2, &dz, gw2, gb2, true);
    for (g, t) in dh1.iter_mut().zip(&enc.h1) {
        *g *= 1.0 - t * t;
    }
    affine_back(x, rows, d, p.w1, &dh1, gw1, gb1, false);
    grad
}
