use serde::{Deserialize, Serialize};

use super::normal::{std_normal_cdf, std_normal_quantile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    #[default]
    Identity,
    Cvar,
    Cvnar,
    Wang,
}

/// How CVnaR maps a level. `Shifted` sends U([0,1]) onto U([eta,1]) and is
/// risk-neutral at `eta = 0`; `Literal` is `1 - eta * tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CvnarForm {
    #[default]
    Shifted,
    Literal,
}

/// Risk distortion of quantile levels with bias parameter `eta` in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionOperator {
    pub kind: DistortionKind,
    pub eta: f64,
    #[serde(default)]
    pub cvnar_form: CvnarForm,
}

const WANG_CLAMP: f64 = 1e-12;

impl DistortionOperator {
    pub fn identity() -> Self {
        Self::new(DistortionKind::Identity, 0.0)
    }

    pub fn new(kind: DistortionKind, eta: f64) -> Self {
        Self {
            kind,
            eta,
            cvnar_form: CvnarForm::Shifted,
        }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }

    pub fn distort(&self, tau: f64) -> Result<f64> {
        distort(self, tau)
    }
}

pub fn distort(op: &DistortionOperator, tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Argument(format!("quantile level {tau} outside [0, 1]")));
    }
    if op.kind != DistortionKind::Identity && !(0.0..=1.0).contains(&op.eta) {
        return Err(Error::Argument(format!("distortion eta {} outside [0, 1]", op.eta)));
    }
    let eta = op.eta;
    let out = match op.kind {
        DistortionKind::Identity => tau,
        DistortionKind::Cvar => eta * tau,
        DistortionKind::Cvnar => match op.cvnar_form {
            CvnarForm::Shifted => eta + (1.0 - eta) * tau,
            CvnarForm::Literal => 1.0 - eta * tau,
        },
        DistortionKind::Wang => {
            if tau == 0.0 || tau == 1.0 {
                tau
            } else {
                let z = std_normal_quantile(tau.clamp(WANG_CLAMP, 1.0 - WANG_CLAMP))?;
                std_normal_cdf(z + eta)
            }
        }
    };
    Ok(out.clamp(0.0, 1.0))
}
