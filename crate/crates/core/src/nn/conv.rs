use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use rand::Rng;

use super::param::{expect_cols, InitPolicy, Param, Real};
use crate::error::{Error, Result};

/// Geometry of a valid (unpadded) 2-D cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn output_hw(&self) -> Result<(usize, usize)> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config("conv kernel and stride must be positive".into()));
        }
        if self.kernel > self.in_height || self.kernel > self.in_width {
            return Err(Error::Config(format!(
                "conv kernel {} exceeds input {}x{}: output dimension would be <= 0",
                self.kernel, self.in_height, self.in_width
            )));
        }
        Ok((
            (self.in_height - self.kernel) / self.stride + 1,
            (self.in_width - self.kernel) / self.stride + 1,
        ))
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_height * self.in_width
    }

    pub fn out_len(&self) -> Result<usize> {
        let (oh, ow) = self.output_hw()?;
        Ok(self.out_channels * oh * ow)
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

/// Convolution over `(channels, height, width)` rows, implemented as im2col + GEMM.
/// Kernels are stored as `[out_channels, in_channels * k * k]`.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub geometry: ConvGeometry,
    pub kernels: Param<T>,
    pub bias: Param<T>,
    pub relu: bool,
    out_hw: (usize, usize),
    cache: Option<(Array2<T>, Array2<T>)>,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        geometry: ConvGeometry,
        relu: bool,
        init: InitPolicy,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = init.bound(geometry.patch_len());
        let kernels = Param::uniform(geometry.out_channels, geometry.patch_len(), bound, rng);
        let bias = Param::uniform(1, geometry.out_channels, bound, rng);
        Self::from_params(geometry, kernels, bias, relu)
    }

    pub fn from_params(
        geometry: ConvGeometry,
        kernels: Param<T>,
        bias: Param<T>,
        relu: bool,
    ) -> Result<Self> {
        let out_hw = geometry.output_hw()?;
        if kernels.shape() != (geometry.out_channels, geometry.patch_len())
            || bias.shape() != (1, geometry.out_channels)
        {
            return Err(Error::Shape(format!(
                "conv parameters {:?}/{:?} do not match geometry {geometry:?}",
                kernels.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            geometry,
            kernels,
            bias,
            relu,
            out_hw,
            cache: None,
        })
    }

    pub fn out_len(&self) -> usize {
        self.geometry.out_channels * self.out_hw.0 * self.out_hw.1
    }

    fn im2col(&self, input: &Array2<T>) -> Array2<T> {
        let g = &self.geometry;
        let (oh, ow) = self.out_hw;
        let k = g.kernel;
        let plane = g.in_height * g.in_width;
        let mut cols = Array2::zeros((input.nrows() * oh * ow, g.patch_len()));
        for (b, x) in input.outer_iter().enumerate() {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut row = cols.row_mut(b * oh * ow + oy * ow + ox);
                    let mut col = 0;
                    for c in 0..g.in_channels {
                        for ky in 0..k {
                            let base = c * plane + (oy * g.stride + ky) * g.in_width + ox * g.stride;
                            for kx in 0..k {
                                row[col] = x[base + kx];
                                col += 1;
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn conv_cols(&self, cols: &Array2<T>, batch: usize) -> Array2<T> {
        let (oh, ow) = self.out_hw;
        let spatial = oh * ow;
        let mut mat = cols.dot(&self.kernels.value.t());
        mat += &self.bias.value;
        let oc = self.geometry.out_channels;
        let mut out = Array2::zeros((batch, oc * spatial));
        for b in 0..batch {
            for p in 0..spatial {
                let src = mat.row(b * spatial + p);
                for o in 0..oc {
                    let v = src[o];
                    out[[b, o * spatial + p]] = if self.relu { v.max(T::zero()) } else { v };
                }
            }
        }
        out
    }

    pub fn forward(&self, input: &Array2<T>) -> Result<Array2<T>> {
        expect_cols(input, self.geometry.in_len(), "conv2d")?;
        let cols = self.im2col(input);
        Ok(self.conv_cols(&cols, input.nrows()))
    }

    pub fn forward_train(&mut self, input: Array2<T>) -> Result<Array2<T>> {
        expect_cols(&input, self.geometry.in_len(), "conv2d")?;
        let cols = self.im2col(&input);
        let out = self.conv_cols(&cols, input.nrows());
        self.cache = Some((cols, out.clone()));
        Ok(out)
    }

    pub fn backward(&mut self, mut grad_out: Array2<T>) -> Result<Array2<T>> {
        let (cols, output) = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("conv2d backward without a stored forward".into()))?;
        if grad_out.dim() != output.dim() {
            return Err(Error::Shape("conv2d backward gradient shape".into()));
        }
        if self.relu {
            grad_out.zip_mut_with(&output, |g, &y| {
                if y <= T::zero() {
                    *g = T::zero();
                }
            });
        }
        let g = self.geometry;
        let (oh, ow) = self.out_hw;
        let spatial = oh * ow;
        let batch = grad_out.nrows();
        let mut gmat = Array2::zeros((batch * spatial, g.out_channels));
        for b in 0..batch {
            for o in 0..g.out_channels {
                for p in 0..spatial {
                    gmat[[b * spatial + p, o]] = grad_out[[b, o * spatial + p]];
                }
            }
        }
        general_mat_mul(T::one(), &gmat.t(), &cols, T::one(), &mut self.kernels.grad);
        self.bias.grad += &gmat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dcols = gmat.dot(&self.kernels.value);

        let k = g.kernel;
        let plane = g.in_height * g.in_width;
        let mut dx = Array2::zeros((batch, g.in_len()));
        for b in 0..batch {
            let mut dxb = dx.row_mut(b);
            for oy in 0..oh {
                for ox in 0..ow {
                    let src = dcols.row(b * spatial + oy * ow + ox);
                    let mut col = 0;
                    for c in 0..g.in_channels {
                        for ky in 0..k {
                            let base = c * plane + (oy * g.stride + ky) * g.in_width + ox * g.stride;
                            for kx in 0..k {
                                dxb[base + kx] += src[col];
                                col += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.kernels, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.kernels, &mut self.bias]
    }
}
