use crate::error::{Error, Result};
use crate::nn::{ParamTensor, Scalar, Tensor};

/// Dense layer on pooled features: `x (N, C, 1, 1)` → logits `(N, classes, 1, 1)`.
pub fn linear<F: Scalar>(
    x: &Tensor<F>,
    weight: &ParamTensor<F>,
    bias: &ParamTensor<F>,
) -> Result<Tensor<F>> {
    let [_, _, t, v] = x.shape();
    if (t, v) != (1, 1) {
        return Err(Error::Shape(format!(
            "linear head expects pooled (N, C, 1, 1) input, got {:?}",
            x.shape()
        )));
    }
    crate::nn::ops::conv1x1(x, weight, Some(bias))
}

pub struct SoftmaxCe<F> {
    pub loss: F,
    pub probs: Vec<Vec<F>>,
    /// d loss / d logits, same layout as the logits.
    pub grad: Tensor<F>,
}

/// Mean cross-entropy of `softmax(logits)` against integer labels.
pub fn softmax_cross_entropy<F: Scalar>(logits: &Tensor<F>, labels: &[usize]) -> Result<SoftmaxCe<F>> {
    let [n, k, _, _] = logits.shape();
    if logits.len() != n * k {
        return Err(Error::Shape(format!("logits must be (N, classes, 1, 1), got {:?}", logits.shape())));
    }
    if labels.len() != n {
        return Err(Error::Data(format!("{} labels for batch of {n}", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Data(format!("label {bad} out of range for {k} classes")));
    }
    let inv_n = F::one() / F::from_f64(n as f64);
    let mut loss = F::zero();
    let mut probs = Vec::with_capacity(n);
    let mut grad = Tensor::zeros(logits.shape());
    for (i, row) in logits.data().chunks_exact(k).enumerate() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = row.iter().map(|&z| (z - max).exp()).collect();
        let total: F = exps.iter().copied().sum();
        let p: Vec<F> = exps.iter().map(|&e| e / total).collect();
        loss += (total.ln() + max - row[labels[i]]) * inv_n;
        for (j, &pj) in p.iter().enumerate() {
            let target = if j == labels[i] { F::one() } else { F::zero() };
            grad.data_mut()[i * k + j] = (pj - target) * inv_n;
        }
        probs.push(p);
    }
    Ok(SoftmaxCe { loss, probs, grad })
}

pub struct LinearSoftmaxCe<F> {
    pub loss: F,
    pub probs: Vec<Vec<F>>,
    pub grad_input: Tensor<F>,
    pub grad_weight: Vec<F>,
    pub grad_bias: Vec<F>,
}

/// Classifier head and loss in one step, with gradients.
pub fn linear_softmax_ce<F: Scalar>(
    x: &Tensor<F>,
    weight: &ParamTensor<F>,
    bias: &ParamTensor<F>,
    labels: &[usize],
) -> Result<LinearSoftmaxCe<F>> {
    let logits = linear(x, weight, bias)?;
    let ce = softmax_cross_entropy(&logits, labels)?;
    let g = crate::nn::ops::conv1x1_backward(x, weight, true, &ce.grad);
    Ok(LinearSoftmaxCe {
        loss: ce.loss,
        probs: ce.probs,
        grad_input: g.input,
        grad_weight: g.weight,
        grad_bias: g.bias.expect("bias gradient requested"),
    })
}
