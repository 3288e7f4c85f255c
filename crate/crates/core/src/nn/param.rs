use ndarray::Array2;
use ndarray::NdFloat;
use num_traits::FromPrimitive;
use rand::Rng;

use crate::error::{Error, Result};

/// Floating-point element type for network arithmetic.
pub trait Real: NdFloat + FromPrimitive + Default + std::iter::Sum {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A row-major batch: one sample per row.
pub type Batch<T> = Array2<T>;

/// A trainable tensor together with its gradient accumulator and Adam moments.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: Array2<T>,
    pub grad: Array2<T>,
    pub adam_m: Array2<T>,
    pub adam_v: Array2<T>,
    pub step_count: u64,
}

impl<T: Real> Param<T> {
    pub fn new(value: Array2<T>) -> Self {
        let dim = value.raw_dim();
        Self {
            grad: Array2::zeros(dim),
            adam_m: Array2::zeros(dim),
            adam_v: Array2::zeros(dim),
            value,
            step_count: 0,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let value = Array2::from_shape_fn((rows, cols), |_| {
            T::lit(rng.random_range(-bound..=bound))
        });
        Self::new(value)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Weight initialization policy. The default scales a symmetric uniform
/// draw by the inverse square root of the fan-in for every layer kind.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitPolicy {
    FanInUniform,
    /// Uniform in `[-scale, scale]` regardless of fan-in.
    SmallUniform { scale: f64 },
}

impl Default for InitPolicy {
    fn default() -> Self {
        InitPolicy::FanInUniform
    }
}

impl InitPolicy {
    pub fn bound(&self, fan_in: usize) -> f64 {
        match *self {
            InitPolicy::FanInUniform => 1.0 / (fan_in.max(1) as f64).sqrt(),
            InitPolicy::SmallUniform { scale } => scale,
        }
    }
}

pub(crate) fn check_finite<T: Real>(a: &Array2<T>, what: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub(crate) fn expect_cols<T>(a: &Array2<T>, cols: usize, layer: &str) -> Result<()> {
    if a.ncols() != cols {
        return Err(Error::Shape(format!(
            "{layer}: expected {cols} input columns, got {}",
            a.ncols()
        )));
    }
    Ok(())
}
