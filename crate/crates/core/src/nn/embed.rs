use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use rand::Rng;

use super::param::{InitPolicy, Param, Real};
use crate::error::{Error, Result};

/// Quantile-level embedding `ReLU(sum_i cos(pi * i * tau) * w_i + b)`, `i = 0..n`.
#[derive(Debug, Clone)]
pub struct CosineEmbedding<T> {
    pub weights: Param<T>,
    pub bias: Param<T>,
    cache: Option<(Array2<T>, Array2<T>)>,
}

impl<T: Real> CosineEmbedding<T> {
    pub fn new<R: Rng + ?Sized>(n: usize, dim: usize, init: InitPolicy, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("cosine embedding needs n >= 1".into()));
        }
        let bound = init.bound(n);
        Ok(Self {
            weights: Param::uniform(n, dim, bound, rng),
            bias: Param::uniform(1, dim, bound, rng),
            cache: None,
        })
    }

    pub fn from_params(weights: Param<T>, bias: Param<T>) -> Result<Self> {
        if weights.shape().0 == 0 || bias.shape() != (1, weights.shape().1) {
            return Err(Error::Shape(format!(
                "cosine embedding parameters {:?}/{:?}",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weights,
            bias,
            cache: None,
        })
    }

    pub fn basis_len(&self) -> usize {
        self.weights.shape().0
    }

    pub fn dim(&self) -> usize {
        self.weights.shape().1
    }

    /// Row `r` holds `cos(pi * i * tau_r)` for `i = 0..n`, evaluated in
    /// `f64` with the Chebyshev recurrence `c_{i+1} = 2 c_1 c_i - c_{i-1}`.
    pub fn basis(&self, taus: &[T]) -> Array2<T> {
        let n = self.basis_len();
        let mut out = Array2::zeros((taus.len(), n));
        for (r, tau) in taus.iter().enumerate() {
            let c1 = (std::f64::consts::PI * tau.to_f64_lossy()).cos();
            let (mut prev, mut cur) = (1.0, c1);
            out[[r, 0]] = T::one();
            if n > 1 {
                out[[r, 1]] = T::lit(c1);
            }
            for i in 2..n {
                let next = 2.0 * c1 * cur - prev;
                prev = cur;
                cur = next;
                out[[r, i]] = T::lit(next);
            }
        }
        out
    }

    fn apply(&self, basis: &Array2<T>) -> Array2<T> {
        let mut out = basis.dot(&self.weights.value);
        out += &self.bias.value;
        out.mapv_inplace(|v| v.max(T::zero()));
        out
    }

    pub fn forward(&self, taus: &[T]) -> Result<Array2<T>> {
        check_taus(taus)?;
        Ok(self.apply(&self.basis(taus)))
    }

    pub fn forward_train(&mut self, taus: &[T]) -> Result<Array2<T>> {
        check_taus(taus)?;
        let basis = self.basis(taus);
        let out = self.apply(&basis);
        self.cache = Some((basis, out.clone()));
        Ok(out)
    }

    /// Accumulates parameter gradients. Quantile levels are not learned, so no
    /// input gradient is produced.
    pub fn backward(&mut self, mut grad_out: Array2<T>) -> Result<()> {
        let (basis, out) = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("embedding backward without a stored forward".into()))?;
        if grad_out.dim() != out.dim() {
            return Err(Error::Shape("embedding backward gradient shape".into()));
        }
        grad_out.zip_mut_with(&out, |g, &y| {
            if y <= T::zero() {
                *g = T::zero();
            }
        });
        general_mat_mul(T::one(), &basis.t(), &grad_out, T::one(), &mut self.weights.grad);
        self.bias.grad += &grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok(())
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weights, &mut self.bias]
    }
}

fn check_taus<T: Real>(taus: &[T]) -> Result<()> {
    match taus.iter().find(|t| !(**t >= T::zero() && **t <= T::one())) {
        Some(t) => Err(Error::Argument(format!("quantile level {t} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Elementwise product of two equally shaped arrays.
pub fn hadamard<T: Real>(a: &Array2<T>, b: &Array2<T>) -> Result<Array2<T>> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("hadamard {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(a * b)
}

/// Merge point between state features and quantile embeddings. Each feature
/// row is paired with `repeats` consecutive embedding rows.
#[derive(Debug, Clone, Default)]
pub struct HadamardMerge<T> {
    cache: Option<(Array2<T>, Array2<T>, usize)>,
}

impl<T: Real> HadamardMerge<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(features: &Array2<T>, embedding: &Array2<T>) -> Result<(Array2<T>, usize)> {
        let rows = features.nrows();
        if rows == 0 || features.ncols() != embedding.ncols() || embedding.nrows() % rows != 0 {
            return Err(Error::Shape(format!(
                "merge: features {:?} cannot pair with embedding {:?}",
                features.dim(),
                embedding.dim()
            )));
        }
        let repeats = embedding.nrows() / rows;
        let mut out = embedding.clone();
        for (r, f) in features.outer_iter().enumerate() {
            for k in 0..repeats {
                let mut row = out.row_mut(r * repeats + k);
                row *= &f;
            }
        }
        Ok((out, repeats))
    }

    pub fn forward_train(&mut self, features: Array2<T>, embedding: Array2<T>) -> Result<Array2<T>> {
        let (out, repeats) = Self::forward(&features, &embedding)?;
        self.cache = Some((features, embedding, repeats));
        Ok(out)
    }

    /// Returns `(grad_features, grad_embedding)`.
    pub fn backward(&mut self, grad_out: &Array2<T>) -> Result<(Array2<T>, Array2<T>)> {
        let (features, embedding, repeats) = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("merge backward without a stored forward".into()))?;
        if grad_out.dim() != embedding.dim() {
            return Err(Error::Shape("merge backward gradient shape".into()));
        }
        let mut grad_features = Array2::zeros(features.raw_dim());
        let mut grad_embedding = grad_out.clone();
        for (r, f) in features.outer_iter().enumerate() {
            let mut gf = grad_features.row_mut(r);
            for k in 0..repeats {
                let row = r * repeats + k;
                gf.zip_mut_with(&(&grad_out.row(row) * &embedding.row(row)), |a, &b| *a += b);
                let mut ge = grad_embedding.row_mut(row);
                ge *= &f;
            }
        }
        Ok((grad_features, grad_embedding))
    }
}
