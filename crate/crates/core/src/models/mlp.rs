use rand::Rng;
use rand_distr::StandardNormal;

use super::softmax::{argmax, softmax_in_place};
use crate::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::Tanh => a.tanh(),
        }
    }

    /// Derivative given the pre-activation `a` and the output `h`.
    #[inline]
    fn derivative(self, a: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
        }
    }
}

/// One hidden layer with softmax cross-entropy output.
///
/// Parameter layout: `W1 (hidden x input)`, `b1`, `W2 (classes x hidden)`, `b2`,
/// each a separate clipping block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub activation: Activation,
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

impl MlpModel {
    pub fn dim(&self) -> usize {
        self.block_lengths().iter().sum()
    }

    pub fn block_lengths(&self) -> Vec<usize> {
        vec![
            self.hidden * self.input_dim,
            self.hidden,
            self.n_classes * self.hidden,
            self.n_classes,
        ]
    }

    fn offsets(&self) -> Offsets {
        let b1 = self.hidden * self.input_dim;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_classes * self.hidden;
        Offsets { b1, w2, b2 }
    }

    /// He-scaled Gaussian weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let o = self.offsets();
        let mut w = vec![0.0; self.dim()];
        let s1 = (2.0 / self.input_dim as f64).sqrt();
        let s2 = (1.0 / self.hidden as f64).sqrt();
        for v in &mut w[..o.b1] {
            *v = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        for v in &mut w[o.w2..o.b2] {
            *v = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        w
    }

    fn hidden_layer(&self, w: &[f64], x: &[f64], pre: &mut [f64], out: &mut [f64]) {
        let o = self.offsets();
        let p = self.input_dim;
        for j in 0..self.hidden {
            let row = &w[j * p..(j + 1) * p];
            let a = w[o.b1 + j] + row.iter().zip(x).map(|(u, v)| u * v).sum::<f64>();
            pre[j] = a;
            out[j] = self.activation.apply(a);
        }
    }

    fn output_layer(&self, w: &[f64], h: &[f64], z: &mut [f64]) {
        let o = self.offsets();
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &w[o.w2 + k * self.hidden..o.w2 + (k + 1) * self.hidden];
            *zk = w[o.b2 + k] + row.iter().zip(h).map(|(u, v)| u * v).sum::<f64>();
        }
    }

    pub(crate) fn eval(&self, w: &[f64], data: &Dataset, batch: &[usize], mut grad: Option<&mut [f64]>) -> f64 {
        let o = self.offsets();
        let (p, hd, c) = (self.input_dim, self.hidden, self.n_classes);
        let mut pre = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        let mut z = vec![0.0; c];
        let mut dh = vec![0.0; hd];
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut loss = 0.0;
        for &i in batch {
            let x = data.x(i);
            let y = data.y(i);
            self.hidden_layer(w, x, &mut pre, &mut h);
            self.output_layer(w, &h, &mut z);
            let zy = z[y];
            loss += softmax_in_place(&mut z) - zy;
            let Some(g) = grad.as_deref_mut() else {
                continue;
            };
            z[y] -= 1.0;
            dh.fill(0.0);
            for k in 0..c {
                let r = z[k];
                let w2row = &w[o.w2 + k * hd..o.w2 + (k + 1) * hd];
                let g2row = &mut g[o.w2 + k * hd..o.w2 + (k + 1) * hd];
                for j in 0..hd {
                    g2row[j] += r * h[j];
                    dh[j] += r * w2row[j];
                }
                g[o.b2 + k] += r;
            }
            for j in 0..hd {
                let da = dh[j] * self.activation.derivative(pre[j], h[j]);
                if da == 0.0 {
                    continue;
                }
                let g1row = &mut g[j * p..(j + 1) * p];
                for (gv, xv) in g1row.iter_mut().zip(x) {
                    *gv += da * xv;
                }
                g[o.b1 + j] += da;
            }
        }
        let m = batch.len() as f64;
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v /= m);
        }
        loss / m
    }

    pub(crate) fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let mut pre = vec![0.0; self.hidden];
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.n_classes];
        self.hidden_layer(w, x, &mut pre, &mut h);
        self.output_layer(w, &h, &mut z);
        argmax(&z)
    }

    /// Signs of every hidden pre-activation over `data`, row by row. Two
    /// parameter vectors with equal patterns lie in the same smooth piece of
    /// a ReLU network's loss.
    pub fn activation_pattern(&self, w: &[f64], data: &Dataset) -> Vec<bool> {
        let mut pre = vec![0.0; self.hidden];
        let mut h = vec![0.0; self.hidden];
        let mut out = Vec::with_capacity(data.len() * self.hidden);
        for i in 0..data.len() {
            self.hidden_layer(w, data.x(i), &mut pre, &mut h);
            out.extend(pre.iter().map(|&a| a > 0.0));
        }
        out
    }
}
