use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use rand::Rng;

use super::param::{expect_cols, InitPolicy, Param, Real};
use crate::error::{Error, Result};

/// Fully connected layer `y = act(x·W + b)` with `W` stored as `[fan_in, fan_out]`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weights: Param<T>,
    pub bias: Param<T>,
    pub relu: bool,
    cache: Option<(Array2<T>, Array2<T>)>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng + ?Sized>(
        fan_in: usize,
        fan_out: usize,
        relu: bool,
        init: InitPolicy,
        rng: &mut R,
    ) -> Self {
        let bound = init.bound(fan_in);
        Self {
            weights: Param::uniform(fan_in, fan_out, bound, rng),
            bias: Param::uniform(1, fan_out, bound, rng),
            relu,
            cache: None,
        }
    }

    pub fn from_params(weights: Param<T>, bias: Param<T>, relu: bool) -> Result<Self> {
        if bias.shape() != (1, weights.shape().1) {
            return Err(Error::Shape(format!(
                "dense bias {:?} does not match weights {:?}",
                bias.shape(),
                weights.shape()
            )));
        }
        Ok(Self {
            weights,
            bias,
            relu,
            cache: None,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weights.shape().0
    }

    pub fn fan_out(&self) -> usize {
        self.weights.shape().1
    }

    pub fn forward(&self, input: &Array2<T>) -> Result<Array2<T>> {
        expect_cols(input, self.fan_in(), "dense")?;
        let mut out = input.dot(&self.weights.value);
        out += &self.bias.value;
        if self.relu {
            out.mapv_inplace(|v| v.max(T::zero()));
        }
        Ok(out)
    }

    /// Forward pass that keeps the activations needed by [`Dense::backward`].
    pub fn forward_train(&mut self, input: Array2<T>) -> Result<Array2<T>> {
        let out = self.forward(&input)?;
        self.cache = Some((input, out.clone()));
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, mut grad_out: Array2<T>) -> Result<Array2<T>> {
        let (input, output) = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("dense backward without a stored forward".into()))?;
        if grad_out.dim() != output.dim() {
            return Err(Error::Shape(format!(
                "dense backward: grad {:?} vs output {:?}",
                grad_out.dim(),
                output.dim()
            )));
        }
        if self.relu {
            grad_out.zip_mut_with(&output, |g, &y| {
                if y <= T::zero() {
                    *g = T::zero();
                }
            });
        }
        general_mat_mul(T::one(), &input.t(), &grad_out, T::one(), &mut self.weights.grad);
        self.bias.grad += &grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok(grad_out.dot(&self.weights.value.t()))
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weights, &mut self.bias]
    }
}
