use crate::nn::Scalar;

/// A learnable array with its gradient accumulator and momentum buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<F> {
    pub shape: Vec<usize>,
    pub values: Vec<F>,
    pub grad: Vec<F>,
    pub velocity: Vec<F>,
}

impl<F: Scalar> ParamTensor<F> {
    pub fn new(shape: &[usize], values: Vec<F>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, values.len(), "parameter shape {shape:?} vs {} values", values.len());
        Self {
            shape: shape.to_vec(),
            grad: vec![F::zero(); n],
            velocity: vec![F::zero(); n],
            values,
        }
    }

    pub fn filled(shape: &[usize], value: F) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = F::zero());
    }

    pub fn accumulate(&mut self, g: &[F]) {
        assert_eq!(g.len(), self.grad.len());
        for (a, &b) in self.grad.iter_mut().zip(g) {
            *a += b;
        }
    }

    /// Same values in another precision, with fresh buffers.
    pub fn cast<G: Scalar>(&self) -> ParamTensor<G> {
        ParamTensor::new(
            &self.shape,
            self.values.iter().map(|v| G::from_f64(v.as_f64())).collect(),
        )
    }
}
