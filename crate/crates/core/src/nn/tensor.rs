use std::fmt;

use crate::error::{Error, Result};
use crate::nn::Scalar;

/// Dense rank-4 tensor laid out as `(N, C, T, V)`, row-major.
#[derive(Clone, PartialEq)]
pub struct Tensor<F> {
    shape: [usize; 4],
    data: Vec<F>,
}

pub type FeatureTensor = Tensor<f32>;

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: [usize; 4], value: F) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<F>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> F) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for n in 0..shape[0] {
            for c in 0..shape[1] {
                for t in 0..shape[2] {
                    for v in 0..shape[3] {
                        data.push(f([n, c, t, v]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, t: usize, v: usize) -> usize {
        let [_, cs, ts, vs] = self.shape;
        ((n * cs + c) * ts + t) * vs + v
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, t: usize, v: usize) -> F {
        self.data[self.index(n, c, t, v)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, t: usize, v: usize, value: F) {
        let i = self.index(n, c, t, v);
        self.data[i] = value;
    }

    /// Values of sample `n`, a `C × (T·V)` block.
    pub fn sample(&self, n: usize) -> &[F] {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[n * per..(n + 1) * per]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [F] {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        &mut self.data[n * per..(n + 1) * per]
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, alpha: F) -> Self {
        self.map(|x| x * alpha)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        assert_eq!(self.shape, other.shape, "max_abs_diff on different shapes");
        self.data
            .iter()
            .zip(&other.data)
            .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|x| G::from_f64(x.as_f64())).collect(),
        }
    }

    /// Concatenates samples along the batch axis.
    pub fn stack(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Batch("cannot stack an empty list".into()))?;
        let [_, c, t, v] = first.shape;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape[1..] != [c, t, v] {
                return Err(Error::Batch(format!(
                    "cannot stack {:?} with {:?}",
                    p.shape, first.shape
                )));
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            shape: [n, c, t, v],
            data,
        })
    }

    /// Extracts samples `indices` along the batch axis.
    pub fn select_batch(&self, indices: &[usize]) -> Self {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        let mut data = Vec::with_capacity(per * indices.len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Self {
            shape: [indices.len(), self.shape[1], self.shape[2], self.shape[3]],
            data,
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

impl<F: fmt::Debug> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}
