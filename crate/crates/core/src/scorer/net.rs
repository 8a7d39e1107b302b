//! Hand-written forward and backward passes.
//!
//! Two parameter layouts exist: a dense linear map from pixels to outputs, and
//! a small convolutional trunk (two 3x3 stride-2 convolutions with 8 and 16
//! channels, a 64-unit hidden layer, ReLU activations) followed by an output
//! layer that is optionally L2-normalized.

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub(crate) const CONV1: usize = 8;
pub(crate) const CONV2: usize = 16;
pub(crate) const HIDDEN: usize = 64;

/// Output size of a 3x3 stride-2 convolution with one pixel of zero padding.
pub(crate) fn down2(n: usize) -> usize {
    (n - 1) / 2 + 1
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinearNet {
    pub in_w: usize,
    pub in_h: usize,
    pub out_dim: usize,
    /// `out_dim x (in_h * in_w)`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearNet {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = self.in_w * self.in_h;
        (0..self.out_dim)
            .map(|o| {
                let row = &self.weight[o * n..(o + 1) * n];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[o]
            })
            .collect()
    }

    pub fn backward_input(&self, dy: &[f64]) -> Vec<f64> {
        let n = self.in_w * self.in_h;
        let mut dx = vec![0.0; n];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, w) in dx.iter_mut().zip(&self.weight[o * n..(o + 1) * n]) {
                *d += g * w;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvNet {
    pub in_w: usize,
    pub in_h: usize,
    pub out_dim: usize,
    pub normalize: bool,
    pub params: ConvParams,
}

/// Parameter tensors in a fixed order shared with gradients and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvParams {
    pub tensors: [Vec<f64>; 8],
}

pub(crate) const CONV_TENSOR_NAMES: [&str; 8] =
    ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"];

impl ConvParams {
    pub fn zeros_like(other: &ConvParams) -> ConvParams {
        ConvParams { tensors: std::array::from_fn(|i| vec![0.0; other.tensors[i].len()]) }
    }

    pub fn add_assign(&mut self, other: &ConvParams) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors.iter_mut().flatten().for_each(|v| *v *= k);
    }
}

pub(crate) struct ConvCache {
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    hidden: Vec<f64>,
    raw: Vec<f64>,
    pub out: Vec<f64>,
}

impl ConvNet {
    pub fn shapes(in_w: usize, in_h: usize, out_dim: usize) -> [Vec<usize>; 8] {
        let flat = CONV2 * down2(down2(in_h)) * down2(down2(in_w));
        [
            vec![CONV1, 1, 3, 3],
            vec![CONV1],
            vec![CONV2, CONV1, 3, 3],
            vec![CONV2],
            vec![HIDDEN, flat],
            vec![HIDDEN],
            vec![out_dim, HIDDEN],
            vec![out_dim],
        ]
    }

    pub fn init(in_w: usize, in_h: usize, out_dim: usize, normalize: bool, rng: &mut impl Rng) -> ConvNet {
        let shapes = Self::shapes(in_w, in_h, out_dim);
        let tensors = std::array::from_fn(|i| {
            let shape = &shapes[i];
            let len: usize = shape.iter().product();
            if shape.len() == 1 {
                vec![0.0; len]
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                (0..len).map(|_| normal.sample(rng)).collect()
            }
        });
        ConvNet { in_w, in_h, out_dim, normalize, params: ConvParams { tensors } }
    }

    fn dims(&self) -> ((usize, usize), (usize, usize)) {
        let (h1, w1) = (down2(self.in_h), down2(self.in_w));
        ((h1, w1), (down2(h1), down2(w1)))
    }

    pub fn forward(&self, x: &[f64]) -> ConvCache {
        let [c1w, c1b, c2w, c2b, f1w, f1b, f2w, f2b] = &self.params.tensors;
        let ((h1, w1), (h2, w2)) = self.dims();
        let mut a1 = conv_forward(x, 1, self.in_h, self.in_w, c1w, c1b, CONV1, h1, w1);
        relu(&mut a1);
        let mut a2 = conv_forward(&a1, CONV1, h1, w1, c2w, c2b, CONV2, h2, w2);
        relu(&mut a2);
        let mut hidden = dense_forward(&a2, f1w, f1b, HIDDEN);
        relu(&mut hidden);
        let raw = dense_forward(&hidden, f2w, f2b, self.out_dim);
        let out = if self.normalize {
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            raw.iter().map(|v| v / norm).collect()
        } else {
            raw.clone()
        };
        ConvCache { x: x.to_vec(), a1, a2, hidden, raw, out }
    }

    /// Backpropagates `dy` (gradient w.r.t. the output). Returns the input
    /// gradient when `want_input` is set and accumulates parameter gradients
    /// into `grads` when given.
    pub fn backward(
        &self,
        cache: &ConvCache,
        dy: &[f64],
        want_input: bool,
        mut grads: Option<&mut ConvParams>,
    ) -> Option<Vec<f64>> {
        let [c1w, _, c2w, _, f1w, _, f2w, _] = &self.params.tensors;
        let ((h1, w1), (h2, w2)) = self.dims();
        let d_raw: Vec<f64> = if self.normalize {
            let norm = cache.raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let proj: f64 = cache.out.iter().zip(dy).map(|(y, g)| y * g).sum();
            cache.out.iter().zip(dy).map(|(y, g)| (g - y * proj) / norm).collect()
        } else {
            dy.to_vec()
        };
        let mut d_hidden = dense_backward(&cache.hidden, f2w, &d_raw, HIDDEN, grads.as_deref_mut().map(|g| (6, g)));
        relu_backward(&mut d_hidden, &cache.hidden);
        let mut d_a2 = dense_backward(&cache.a2, f1w, &d_hidden, cache.a2.len(), grads.as_deref_mut().map(|g| (4, g)));
        relu_backward(&mut d_a2, &cache.a2);
        let mut d_a1 =
            conv_backward(&cache.a1, CONV1, h1, w1, c2w, &d_a2, CONV2, h2, w2, true, grads.as_deref_mut().map(|g| (2, g)))
                .expect("input gradient requested");
        relu_backward(&mut d_a1, &cache.a1);
        conv_backward(&cache.x, 1, self.in_h, self.in_w, c1w, &d_a1, CONV1, h1, w1, want_input, grads.map(|g| (0, g)))
    }
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn relu_backward(d: &mut [f64], activated: &[f64]) {
    for (g, &a) in d.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn dense_forward(x: &[f64], w: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    let n = x.len();
    (0..out).map(|o| w[o * n..(o + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[o]).collect()
}

/// Returns the input gradient; accumulates weight/bias gradients into
/// `grads.tensors[slot]` and `grads.tensors[slot + 1]`.
fn dense_backward(x: &[f64], w: &[f64], dy: &[f64], n: usize, grads: Option<(usize, &mut ConvParams)>) -> Vec<f64> {
    let mut dx = vec![0.0; n];
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (d, wv) in dx.iter_mut().zip(&w[o * n..(o + 1) * n]) {
            *d += g * wv;
        }
    }
    if let Some((slot, grads)) = grads {
        let (gw, rest) = grads.tensors.split_at_mut(slot + 1);
        let gw = &mut gw[slot];
        let gb = &mut rest[0];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            gb[o] += g;
            for (d, xv) in gw[o * n..(o + 1) * n].iter_mut().zip(x) {
                *d += g * xv;
            }
        }
    }
    dx
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    cout: usize,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; cout * oh * ow];
    for oc in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[oc];
                for ic in 0..cin {
                    let wbase = (oc * cin + ic) * 9;
                    let xbase = ic * h * w;
                    for ky in 0..3 {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += weight[wbase + ky * 3 + kx] * x[xbase + iy as usize * w + ix as usize];
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    dout: &[f64],
    cout: usize,
    oh: usize,
    ow: usize,
    want_input: bool,
    grads: Option<(usize, &mut ConvParams)>,
) -> Option<Vec<f64>> {
    let mut dx = if want_input { Some(vec![0.0; cin * h * w]) } else { None };
    let mut grads = grads.map(|(slot, g)| {
        let (gw, rest) = g.tensors.split_at_mut(slot + 1);
        (&mut gw[slot], &mut rest[0])
    });
    for oc in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = dout[(oc * oh + oy) * ow + ox];
                if g == 0.0 {
                    continue;
                }
                if let Some((_, gb)) = grads.as_mut() {
                    gb[oc] += g;
                }
                for ic in 0..cin {
                    let wbase = (oc * cin + ic) * 9;
                    let xbase = ic * h * w;
                    for ky in 0..3 {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xi = xbase + iy as usize * w + ix as usize;
                            if let Some(dx) = dx.as_mut() {
                                dx[xi] += g * weight[wbase + ky * 3 + kx];
                            }
                            if let Some((gw, _)) = grads.as_mut() {
                                gw[wbase + ky * 3 + kx] += g * x[xi];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}
