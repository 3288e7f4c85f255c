//! Quantile regression arithmetic.
//!
//! Two sign conventions meet here. [`td_error_matrix`] stores the sampled TD
//! error `delta = prediction - target`. The regression loss and the
//! hysteretic weights are written in terms of the residual
//! `u = target - prediction = -delta`: a negative residual lowers the estimate.

use crate::error::{Error, Result};

pub fn huber(x: f64, kappa: f64) -> f64 {
    let a = x.abs();
    if a <= kappa {
        0.5 * x * x
    } else {
        kappa * (a - 0.5 * kappa)
    }
}

/// `|tau - 1{u <= 0}| * H_kappa(u) / kappa` for residual `u`; `kappa > 0`.
pub fn quantile_huber(residual: f64, tau: f64, kappa: f64) -> f64 {
    let indicator = if residual <= 0.0 { 1.0 } else { 0.0 };
    (tau - indicator).abs() * huber(residual, kappa) / kappa
}

/// Derivative of [`quantile_huber`] with respect to the residual.
pub fn quantile_huber_grad(residual: f64, tau: f64, kappa: f64) -> f64 {
    let indicator = if residual <= 0.0 { 1.0 } else { 0.0 };
    let dh = residual.clamp(-kappa, kappa);
    (tau - indicator).abs() * dh / kappa
}

/// Row-major `N x N'` matrix of sampled TD errors.
#[derive(Debug, Clone, PartialEq)]
pub struct TdErrorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TdErrorMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `delta[i][j] = dist[i] - (reward + gamma * target[j])`; a terminal step
/// drops the bootstrap term.
pub fn td_error_matrix(
    dist: &[f64],
    target: &[f64],
    reward: f64,
    gamma: f64,
    terminal: bool,
) -> Result<TdErrorMatrix> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Argument(format!("discount {gamma} outside [0, 1]")));
    }
    if dist.is_empty() || target.is_empty() {
        return Err(Error::Argument("empty quantile sample set".into()));
    }
    let mut data = Vec::with_capacity(dist.len() * target.len());
    for &d in dist {
        for &t in target {
            let bootstrap = if terminal { 0.0 } else { gamma * t };
            data.push(d - (reward + bootstrap));
        }
    }
    Ok(TdErrorMatrix {
        rows: dist.len(),
        cols: target.len(),
        data,
    })
}

/// `(1/N') * sum_i sum_j w_ij * rho_{tau_i}(-delta_ij)` with optional
/// per-cell weights in row-major order.
pub fn iqn_loss(matrix: &TdErrorMatrix, taus: &[f64], kappa: f64, weights: Option<&[f64]>) -> Result<f64> {
    if taus.len() != matrix.rows {
        return Err(Error::Argument(format!(
            "{} quantile levels for a matrix with {} rows",
            taus.len(),
            matrix.rows
        )));
    }
    if let Some(w) = weights {
        if w.len() != matrix.data.len() {
            return Err(Error::Argument("weight count does not match the TD matrix".into()));
        }
    }
    if kappa <= 0.0 {
        return Err(Error::Argument(format!("huber threshold {kappa} must be positive")));
    }
    let mut total = 0.0;
    for (i, &tau) in taus.iter().enumerate() {
        for j in 0..matrix.cols {
            let idx = i * matrix.cols + j;
            let w = weights.map_or(1.0, |w| w[idx]);
            total += w * quantile_huber(-matrix.data[idx], tau, kappa);
        }
    }
    Ok(total / matrix.cols as f64)
}
