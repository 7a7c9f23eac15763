use crate::error::{Error, Result};
use crate::nn::{ParamTensor, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel batch normalization over `(N, T, V)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<F> {
    pub gamma: ParamTensor<F>,
    pub beta: ParamTensor<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
    pub momentum: F,
    pub epsilon: F,
}

/// Values saved by the forward pass for backward and running-stat updates.
#[derive(Clone, Debug)]
pub struct BnCache<F> {
    pub mode: Mode,
    pub xhat: Tensor<F>,
    pub inv_std: Vec<F>,
    pub batch_mean: Vec<F>,
    pub batch_var: Vec<F>,
    pub count: usize,
}

pub struct BnGrads<F> {
    pub input: Tensor<F>,
    pub gamma: Vec<F>,
    pub beta: Vec<F>,
}

impl<F: Scalar> BatchNormState<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: ParamTensor::filled(&[channels], F::one()),
            beta: ParamTensor::filled(&[channels], F::zero()),
            running_mean: vec![F::zero(); channels],
            running_var: vec![F::one(); channels],
            momentum: F::from_f64(0.1),
            epsilon: F::from_f64(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, BnCache<F>)> {
        let [n, c, t, v] = x.shape();
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batch norm over {} channels got input {:?}",
                self.channels(),
                x.shape()
            )));
        }
        let plane = t * v;
        let count = n * plane;
        if count == 0 {
            return Err(Error::Shape("batch norm over an empty batch".into()));
        }
        let (mean, var) = match mode {
            Mode::Train => channel_stats(x),
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<F> = var.iter().map(|&s| (s + self.epsilon).sqrt().recip()).collect();
        let mut xhat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        for i in 0..n {
            for ch in 0..c {
                let base = x.index(i, ch, 0, 0);
                let (m, s) = (mean[ch], inv_std[ch]);
                let (g, b) = (self.gamma.values[ch], self.beta.values[ch]);
                for p in base..base + plane {
                    let h = (x.data()[p] - m) * s;
                    xhat.data_mut()[p] = h;
                    out.data_mut()[p] = g * h + b;
                }
            }
        }
        Ok((
            out,
            BnCache {
                mode,
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                count,
            },
        ))
    }

    /// Eval-mode normalization fused with a residual add and ReLU, in place.
    ///
    /// Rows of `v` values are normalized, then `residual(i, ch, t, row)` adds
    /// the residual for that row and the result is clamped at zero. The
    /// arithmetic matches [`forward`](Self::forward) in eval mode followed by
    /// an add and [`relu`](crate::nn::ops::relu), so both paths agree bit for bit.
    pub fn eval_add_relu(&self, h: &mut Tensor<F>, mut residual: impl FnMut(usize, usize, usize, &mut [F])) {
        let [n, c, t, v] = h.shape();
        let inv_std: Vec<F> = self
            .running_var
            .iter()
            .map(|&s| (s + self.epsilon).sqrt().recip())
            .collect();
        for (r, row) in h.data_mut().chunks_exact_mut(v).enumerate() {
            let (tt, ch, i) = (r % t, (r / t) % c, r / (t * c));
            debug_assert!(i < n);
            let (m, s) = (self.running_mean[ch], inv_std[ch]);
            let (g, b) = (self.gamma.values[ch], self.beta.values[ch]);
            for y in row.iter_mut() {
                *y = g * ((*y - m) * s) + b;
            }
            residual(i, ch, tt, row);
            for y in row.iter_mut() {
                *y = y.max(F::zero());
            }
        }
    }

    /// Exponential moving average update from a training-mode cache.
    pub fn update_running(&mut self, cache: &BnCache<F>) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = self.momentum;
        let unbias = if cache.count > 1 {
            F::from_f64(cache.count as f64 / (cache.count - 1) as f64)
        } else {
            F::one()
        };
        for ch in 0..self.channels() {
            self.running_mean[ch] = (F::one() - m) * self.running_mean[ch] + m * cache.batch_mean[ch];
            self.running_var[ch] =
                (F::one() - m) * self.running_var[ch] + m * cache.batch_var[ch] * unbias;
        }
    }

    pub fn backward(&self, cache: &BnCache<F>, grad_out: &Tensor<F>) -> BnGrads<F> {
        let [n, c, t, v] = grad_out.shape();
        let plane = t * v;
        let mut sum_g = vec![F::zero(); c];
        let mut sum_gx = vec![F::zero(); c];
        for i in 0..n {
            for ch in 0..c {
                let base = grad_out.index(i, ch, 0, 0);
                let g = &grad_out.data()[base..base + plane];
                let h = &cache.xhat.data()[base..base + plane];
                let (mut a, mut b) = (F::zero(), F::zero());
                for (&gv, &hv) in g.iter().zip(h) {
                    a += gv;
                    b += gv * hv;
                }
                sum_g[ch] += a;
                sum_gx[ch] += b;
            }
        }
        let mut gx = Tensor::zeros(grad_out.shape());
        let count = F::from_f64(cache.count as f64);
        for i in 0..n {
            for ch in 0..c {
                let base = grad_out.index(i, ch, 0, 0);
                let scale = self.gamma.values[ch] * cache.inv_std[ch];
                for p in base..base + plane {
                    let g = grad_out.data()[p];
                    gx.data_mut()[p] = match cache.mode {
                        Mode::Eval => scale * g,
                        Mode::Train => {
                            scale
                                * (g - sum_g[ch] / count
                                    - cache.xhat.data()[p] * sum_gx[ch] / count)
                        }
                    };
                }
            }
        }
        BnGrads {
            input: gx,
            gamma: sum_gx,
            beta: sum_g,
        }
    }
}

/// Per-channel mean and biased variance over `(N, T, V)`.
pub fn channel_stats<F: Scalar>(x: &Tensor<F>) -> (Vec<F>, Vec<F>) {
    let [n, c, t, v] = x.shape();
    let plane = t * v;
    let count = F::from_f64((n * plane) as f64);
    let mut mean = vec![F::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            let base = x.index(i, ch, 0, 0);
            mean[ch] += x.data()[base..base + plane].iter().copied().sum::<F>();
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / count);
    let mut var = vec![F::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            let base = x.index(i, ch, 0, 0);
            var[ch] += x.data()[base..base + plane]
                .iter()
                .map(|&a| (a - mean[ch]) * (a - mean[ch]))
                .sum::<F>();
        }
    }
    var.iter_mut().for_each(|s| *s = *s / count);
    (mean, var)
}
