//! Piecewise-linear CDF over quantile samples and the time difference
//! likelihood (TDL) of target samples under it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantilePair {
    pub tau: f64,
    pub value: f64,
}

/// Paired quantile levels and return values, e.g. one network evaluation at
/// sampled levels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSampleSet {
    pairs: Vec<QuantilePair>,
    sorted: bool,
}

impl QuantileSampleSet {
    pub fn new(pairs: Vec<QuantilePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Argument("empty quantile sample set".into()));
        }
        for p in &pairs {
            if !(0.0..=1.0).contains(&p.tau) {
                return Err(Error::Argument(format!("quantile level {} outside [0, 1]", p.tau)));
            }
            if !p.value.is_finite() {
                return Err(Error::Argument(format!("non-finite sample value at tau {}", p.tau)));
            }
        }
        Ok(Self { pairs, sorted: false })
    }

    pub fn from_parts(taus: &[f64], values: &[f64]) -> Result<Self> {
        if taus.len() != values.len() {
            return Err(Error::Argument("levels and values differ in length".into()));
        }
        Self::new(
            taus.iter()
                .zip(values)
                .map(|(&tau, &value)| QuantilePair { tau, value })
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[QuantilePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    /// Monotone rearrangement: levels and values are sorted independently and
    /// re-paired, so crossing quantile estimates become a valid quantile function.
    pub fn rearranged(&self) -> Self {
        let mut taus: Vec<f64> = self.pairs.iter().map(|p| p.tau).collect();
        let mut values = self.values();
        taus.sort_by(f64::total_cmp);
        values.sort_by(f64::total_cmp);
        Self {
            pairs: taus
                .into_iter()
                .zip(values)
                .map(|(tau, value)| QuantilePair { tau, value })
                .collect(),
            sorted: true,
        }
    }

    pub fn mean(&self) -> f64 {
        self.pairs.iter().map(|p| p.value).sum::<f64>() / self.pairs.len() as f64
    }
}

/// Arithmetic mean of quantile values: the (distorted) Q estimate.
pub fn mean_q(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("mean of an empty sample set".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Relative tie-breaking step applied to equal sorted values.
pub const TIE_EPSILON: f64 = 1e-9;

/// Makes an ascending sequence strictly increasing by nudging each value
/// that does not exceed its predecessor to `prev + 1e-9 * (1 + |prev|)`.
pub fn break_ties(sorted: &mut [f64]) {
    for i in 1..sorted.len() {
        let prev = sorted[i - 1];
        if sorted[i] <= prev {
            sorted[i] = prev + TIE_EPSILON * (1.0 + prev.abs());
        }
    }
}

/// Continuous CDF obtained by joining `(value_i, tau_i)` knots linearly.
/// Mass lives only on `(d_1, d_M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCdf {
    knots: Vec<QuantilePair>,
    slopes: Vec<f64>,
}

pub fn build_cdf(samples: &QuantileSampleSet) -> Result<PiecewiseCdf> {
    if samples.len() < 2 {
        return Err(Error::Argument(format!(
            "a piecewise CDF needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let arranged = samples.rearranged();
    let mut values = arranged.values();
    break_ties(&mut values);
    let knots: Vec<QuantilePair> = arranged
        .pairs
        .iter()
        .zip(values)
        .map(|(p, value)| QuantilePair { tau: p.tau, value })
        .collect();
    let slopes = knots
        .windows(2)
        .map(|w| (w[1].tau - w[0].tau) / (w[1].value - w[0].value))
        .collect();
    Ok(PiecewiseCdf { knots, slopes })
}

impl PiecewiseCdf {
    pub fn knots(&self) -> &[QuantilePair] {
        &self.knots
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// `tau_M - tau_1`.
    pub fn total_mass(&self) -> f64 {
        self.knots[self.knots.len() - 1].tau - self.knots[0].tau
    }

    pub fn support(&self) -> (f64, f64) {
        (self.knots[0].value, self.knots[self.knots.len() - 1].value)
    }
}

/// Mass of `(a, b]`: the sum over segments of the overlap length times the
/// segment slope. Infinite bounds are allowed.
pub fn interval_mass(cdf: &PiecewiseCdf, a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() || a > b {
        return Err(Error::Argument(format!("interval ({a}, {b}] is not ordered")));
    }
    let mut mass = 0.0;
    for (w, slope) in cdf.knots.windows(2).zip(&cdf.slopes) {
        let lo = a.max(w[0].value);
        let hi = b.min(w[1].value);
        if hi > lo {
            mass += (hi - lo) * slope;
        }
    }
    Ok(mass)
}

/// How the outermost proximity intervals of the target samples are closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TdlBoundary {
    /// Extend outward by half the gap to the inner neighbour.
    #[default]
    HalfGap,
    /// Extend to minus/plus infinity. Intervals then cover the real line and
    /// the likelihood always equals the total mass.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TdlOptions {
    #[serde(default)]
    pub boundary: TdlBoundary,
    /// Divide by `tau_M - tau_1`.
    #[serde(default)]
    pub renormalize: bool,
}

/// Proximity-interval edges for sorted, tie-broken target values.
pub fn proximity_edges(targets: &[f64], boundary: TdlBoundary) -> Vec<f64> {
    let m = targets.len();
    let mut edges = Vec::with_capacity(m + 1);
    if m == 1 {
        edges.push(f64::NEG_INFINITY);
        edges.push(f64::INFINITY);
        return edges;
    }
    edges.push(match boundary {
        TdlBoundary::HalfGap => targets[0] - 0.5 * (targets[1] - targets[0]),
        TdlBoundary::Unbounded => f64::NEG_INFINITY,
    });
    for w in targets.windows(2) {
        edges.push(0.5 * (w[0] + w[1]));
    }
    edges.push(match boundary {
        TdlBoundary::HalfGap => targets[m - 1] + 0.5 * (targets[m - 1] - targets[m - 2]),
        TdlBoundary::Unbounded => f64::INFINITY,
    });
    edges
}

/// Likelihood of `targets` under the piecewise-linear distribution built
/// from `dist`: the summed mass of each target's proximity interval.
pub fn tdl(dist: &QuantileSampleSet, targets: &[f64], opts: TdlOptions) -> Result<f64> {
    let cdf = build_cdf(dist)?;
    tdl_with_cdf(&cdf, targets, opts)
}

pub fn tdl_with_cdf(cdf: &PiecewiseCdf, targets: &[f64], opts: TdlOptions) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Argument("TDL needs at least one target sample".into()));
    }
    if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
        return Err(Error::Argument(format!("non-finite target sample {t}")));
    }
    let mut sorted = targets.to_vec();
    sorted.sort_by(f64::total_cmp);
    break_ties(&mut sorted);
    let edges = proximity_edges(&sorted, opts.boundary);
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += interval_mass(cdf, w[0], w[1])?;
    }
    let total = total.clamp(0.0, cdf.total_mass());
    if opts.renormalize {
        let mass = cdf.total_mass();
        Ok(if mass > 0.0 { total / mass } else { 0.0 })
    } else {
        Ok(total)
    }
}
