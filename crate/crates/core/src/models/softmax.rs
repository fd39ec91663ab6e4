use crate::data::Dataset;

/// Multinomial logistic regression. Parameters are the `classes x features`
/// weight matrix (row-major) followed by the bias vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogisticModel {
    pub feature_dim: usize,
    pub n_classes: usize,
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.n_classes * (self.feature_dim + 1)
    }

    pub fn block_lengths(&self) -> Vec<usize> {
        vec![self.n_classes * self.feature_dim, self.n_classes]
    }

    fn logits(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let p = self.feature_dim;
        let bias = &w[self.n_classes * p..];
        for (k, z) in out.iter_mut().enumerate() {
            let row = &w[k * p..(k + 1) * p];
            *z = bias[k] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Mean cross-entropy over `batch`; mean gradient written to `grad`.
    pub(crate) fn eval(&self, w: &[f64], data: &Dataset, batch: &[usize], mut grad: Option<&mut [f64]>) -> f64 {
        let p = self.feature_dim;
        let c = self.n_classes;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut z = vec![0.0; c];
        let mut loss = 0.0;
        for &i in batch {
            let x = data.x(i);
            let y = data.y(i);
            self.logits(w, x, &mut z);
            let zy = z[y];
            loss += softmax_in_place(&mut z) - zy;
            if let Some(g) = grad.as_deref_mut() {
                for k in 0..c {
                    let r = z[k] - if k == y { 1.0 } else { 0.0 };
                    let row = &mut g[k * p..(k + 1) * p];
                    for (gj, xj) in row.iter_mut().zip(x) {
                        *gj += r * xj;
                    }
                    g[c * p + k] += r;
                }
            }
        }
        let m = batch.len() as f64;
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v /= m);
        }
        loss / m
    }

    pub(crate) fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let mut z = vec![0.0; self.n_classes];
        self.logits(w, x, &mut z);
        argmax(&z)
    }
}

/// Replaces logits by probabilities and returns their log-sum-exp.
pub(crate) fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = k;
        }
    }
    best
}
