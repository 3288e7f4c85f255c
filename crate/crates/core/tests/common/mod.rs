//! Shared oracles for integration and acceptance tests.
#![allow(dead_code)]

use lhiqn::distribution::{PiecewiseCdf, QuantileSampleSet, TdlOptions, TdlBoundary, TIE_EPSILON};
use lhiqn::nn::{
    Conv2d, ConvGeometry, CosineEmbedding, Dense, HadamardMerge, InitPolicy, Lstm, Network, NetworkSpec, Param,
};
use ndarray::{concatenate, s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

/// A differentiable block under test, seen through the scalar loss
/// `sum(output * projection)`.
pub trait Probe {
    fn output(&self, x: &Array2<f64>) -> Array2<f64>;
    /// Training pass plus backward with `grad`; returns the input gradient
    /// when the input is differentiable. Parameter gradients accumulate.
    fn backprop(&mut self, x: &Array2<f64>, grad: &Array2<f64>) -> Option<Array2<f64>>;
    fn params(&mut self) -> Vec<&mut Param<f64>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    pub kinks: usize,
}

impl GradCheck {
    pub fn merge(&mut self, other: GradCheck) {
        self.max_rel = self.max_rel.max(other.max_rel);
        self.checked += other.checked;
        self.kinks += other.kinks;
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

fn loss<P: Probe>(p: &P, x: &Array2<f64>, proj: &Array2<f64>) -> f64 {
    (p.output(x) * proj).sum()
}

/// Central differences with step `h`, cross-checked at `h / 2` so that
/// coordinates straddling a ReLU kink are detected and skipped.
fn numeric<F: FnMut(f64) -> f64>(mut f: F, h: f64) -> Option<f64> {
    let d1 = (f(h) - f(-h)) / (2.0 * h);
    let d2 = (f(h / 2.0) - f(-h / 2.0)) / h;
    if (d1 - d2).abs() > 1e-6 * d1.abs().max(1.0) {
        None
    } else {
        Some(d2)
    }
}

/// Compares analytic and numeric gradients on up to `max_coords` randomly
/// chosen input and parameter coordinates.
pub fn check_probe<P: Probe, R: Rng>(probe: &mut P, x: &Array2<f64>, max_coords: usize, rng: &mut R) -> GradCheck {
    let h = 1e-5;
    let out = probe.output(x);
    let proj = random_matrix(out.nrows(), out.ncols(), 1.0, rng);
    for p in probe.params() {
        p.zero_grad();
    }
    let gx = probe.backprop(x, &proj).map(|g| g.as_standard_layout().to_owned());
    let param_grads: Vec<Array2<f64>> = probe.params().iter().map(|p| p.grad.as_standard_layout().to_owned()).collect();
    let mut coords: Vec<(Option<usize>, usize)> = Vec::new();
    if gx.is_some() {
        coords.extend((0..x.len()).map(|i| (None, i)));
    }
    for (k, g) in param_grads.iter().enumerate() {
        coords.extend((0..g.len()).map(|i| (Some(k), i)));
    }
    while coords.len() > max_coords {
        let i = rng.random_range(0..coords.len());
        coords.swap_remove(i);
    }
    let mut report = GradCheck::default();
    for (which, i) in coords {
        let analytic;
        let num = match which {
            None => {
                analytic = gx.as_ref().unwrap().as_slice().unwrap()[i];
                let mut xp = x.clone();
                let base = x.as_slice().unwrap()[i];
                numeric(
                    |d| {
                        xp.as_slice_mut().unwrap()[i] = base + d;
                        loss(probe, &xp, &proj)
                    },
                    h,
                )
            }
            Some(k) => {
                analytic = param_grads[k].as_slice().unwrap()[i];
                let base = probe.params()[k].value.as_slice().unwrap()[i];
                let r = numeric(
                    |d| {
                        probe.params()[k].value.as_slice_mut().unwrap()[i] = base + d;
                        loss(probe, x, &proj)
                    },
                    h,
                );
                probe.params()[k].value.as_slice_mut().unwrap()[i] = base;
                r
            }
        };
        match num {
            Some(n) => {
                report.max_rel = report.max_rel.max(rel_err(analytic, n));
                report.checked += 1;
            }
            None => report.kinks += 1,
        }
    }
    report
}

impl Probe for Dense<f64> {
    fn output(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).unwrap()
    }
    fn backprop(&mut self, x: &Array2<f64>, grad: &Array2<f64>) -> Option<Array2<f64>> {
        self.forward_train(x.clone()).unwrap();
        Some(self.backward(grad.clone()).unwrap())
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.params_mut().into_iter().collect()
    }
}

impl Probe for Conv2d<f64> {
    fn output(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).unwrap()
    }
    fn backprop(&mut self, x: &Array2<f64>, grad: &Array2<f64>) -> Option<Array2<f64>> {
        self.forward_train(x.clone()).unwrap();
        Some(self.backward(grad.clone()).unwrap())
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.params_mut().into_iter().collect()
    }
}

pub struct LstmProbe {
    pub lstm: Lstm<f64>,
    pub steps: usize,
}

impl Probe for LstmProbe {
    fn output(&self, x: &Array2<f64>) -> Array2<f64> {
        self.lstm.forward_sequence(x, self.steps).unwrap()
    }
    fn backprop(&mut self, x: &Array2<f64>, grad: &Array2<f64>) -> Option<Array2<f64>> {
        self.lstm.forward_sequence_train(x, self.steps).unwrap();
        Some(self.lstm.backward_sequence(grad).unwrap())
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.lstm.params_mut().into_iter().collect()
    }
}

/// Input is a single column of quantile levels; only parameters are differentiable.
pub struct EmbeddingProbe(pub CosineEmbedding<f64>);

impl Probe for EmbeddingProbe {
    fn output(&self, x: &Array2<f64>) -> Array2<f64> {
        self.0.forward(x.as_slice().unwrap()).unwrap()
    }
    fn backprop(&mut self, x: &Array2<f64>, grad: &Array2<f64>) -> Option<Array2<f64>> {
        self.0.forward_train(x.as_slice().unwrap()).unwrap();
        self.0.backward(grad.clone()).unwrap();
        None
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.0.params_mut().into_iter().collect()
    }
}

/// Input stacks the feature rows on top of the embedding rows.
pub struct MergeProbe {
    pub merge: HadamardMerge<f64>,
    pub feature_rows: usize,
}

impl MergeProbe {
    fn split(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        (
            x.slice(s![..self.feature_rows, ..]).to_owned(),
            x.slice(s![self.feature_rows.., ..]).to_owned(),
        )
    }
}

impl Probe for MergeProbe {
    fn output(&self, x: &Array2<f64>) -> Array2<f64> {
        let (f, e) = self.split(x);
        HadamardMerge::forward(&f, &e).unwrap().0
    }
    fn backprop(&mut self, x: &Array2<f64>, grad: &Array2<f64>) -> Option<Array2<f64>> {
        let (f, e) = self.split(x);
        self.merge.forward_train(f, e).unwrap();
        let (gf, ge) = self.merge.backward(grad).unwrap();
        Some(concatenate(Axis(0), &[gf.view(), ge.view()]).unwrap())
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        Vec::new()
    }
}

pub struct NetworkProbe {
    pub net: Network<f64>,
    pub steps: usize,
    pub taus: Option<Array2<f64>>,
}

impl Probe for NetworkProbe {
    fn output(&self, x: &Array2<f64>) -> Array2<f64> {
        self.net.forward(x, self.steps, self.taus.as_ref()).unwrap()
    }
    fn backprop(&mut self, x: &Array2<f64>, grad: &Array2<f64>) -> Option<Array2<f64>> {
        self.net.forward_train(x, self.steps, self.taus.as_ref()).unwrap();
        Some(self.net.backward(grad.clone()).unwrap())
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.net.params_mut()
    }
}

/// Runs `cases` randomized finite-difference checks of one layer kind.
pub fn layer_cases(kind: &str, cases: usize, seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let init = InitPolicy::SmallUniform { scale: 0.8 };
    let mut total = GradCheck::default();
    for _ in 0..cases {
        let report = match kind {
            "dense" => {
                let (i, o, b) = (r.random_range(1..6), r.random_range(1..6), r.random_range(1..4));
                let relu = r.random_bool(0.5);
                let mut d = Dense::<f64>::new(i, o, relu, init, &mut r);
                let x = random_matrix(b, i, 1.0, &mut r);
                check_probe(&mut d, &x, 60, &mut r)
            }
            "conv" => {
                let kernel = r.random_range(1..4);
                let geom = ConvGeometry {
                    in_channels: r.random_range(1..3),
                    in_height: r.random_range(kernel..kernel + 4),
                    in_width: r.random_range(kernel..kernel + 4),
                    out_channels: r.random_range(1..4),
                    kernel,
                    stride: r.random_range(1..3),
                };
                let mut c = Conv2d::<f64>::new(geom, r.random_bool(0.5), init, &mut r).unwrap();
                let x = random_matrix(r.random_range(1..3), geom.in_len(), 1.0, &mut r);
                check_probe(&mut c, &x, 60, &mut r)
            }
            "lstm" => {
                let (i, h, b, steps) = (
                    r.random_range(1..5),
                    r.random_range(1..5),
                    r.random_range(1..3),
                    r.random_range(1..4),
                );
                let mut p = LstmProbe {
                    lstm: Lstm::new(i, h, init, &mut r),
                    steps,
                };
                let x = random_matrix(b * steps, i, 1.0, &mut r);
                check_probe(&mut p, &x, 60, &mut r)
            }
            "embedding" => {
                let (n, dim, rows) = (r.random_range(1..9), r.random_range(1..6), r.random_range(1..5));
                let mut p = EmbeddingProbe(CosineEmbedding::new(n, dim, init, &mut r).unwrap());
                let x = Array2::from_shape_simple_fn((rows, 1), || r.random::<f64>());
                check_probe(&mut p, &x, 60, &mut r)
            }
            "merge" => {
                let (rows, k, dim) = (r.random_range(1..4), r.random_range(1..4), r.random_range(1..5));
                let mut p = MergeProbe {
                    merge: HadamardMerge::new(),
                    feature_rows: rows,
                };
                let x = random_matrix(rows + rows * k, dim, 1.0, &mut r);
                check_probe(&mut p, &x, 60, &mut r)
            }
            "network" => {
                let recurrent = r.random_bool(0.5);
                let quantile = r.random_bool(0.5);
                let obs_len = r.random_range(2..6);
                let (batch, steps) = (r.random_range(1..3), r.random_range(1..3));
                let mut spec = NetworkSpec::vector(obs_len, 3, recurrent, quantile, 4);
                spec.init = init;
                let net = Network::<f64>::new(spec, &mut r).unwrap();
                let rows = batch * steps;
                let taus = quantile.then(|| Array2::from_shape_simple_fn((rows, 2), || r.random::<f64>()));
                let mut p = NetworkProbe { net, steps, taus };
                let x = random_matrix(rows, obs_len, 1.0, &mut r);
                check_probe(&mut p, &x, 40, &mut r)
            }
            other => panic!("unknown layer kind {other}"),
        };
        total.merge(report);
    }
    total
}

/// Fine-grid numeric integration of the piecewise-linear CDF density over
/// the proximity intervals of `targets`. Independent of the library's
/// interval arithmetic: the density is recomputed from raw knots.
pub fn tdl_grid_oracle(dist: &QuantileSampleSet, targets: &[f64], opts: TdlOptions) -> f64 {
    let mut taus: Vec<f64> = dist.pairs().iter().map(|p| p.tau).collect();
    let mut vals: Vec<f64> = dist.pairs().iter().map(|p| p.value).collect();
    taus.sort_by(f64::total_cmp);
    vals.sort_by(f64::total_cmp);
    nudge(&mut vals);
    let mut t = targets.to_vec();
    t.sort_by(f64::total_cmp);
    nudge(&mut t);
    let m = t.len();
    let (lo, hi) = if m == 1 || opts.boundary == TdlBoundary::Unbounded {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        (t[0] - (t[1] - t[0]) / 2.0, t[m - 1] + (t[m - 1] - t[m - 2]) / 2.0)
    };
    let (v0, vn) = (vals[0], vals[vals.len() - 1]);
    // Grid with every knot and interval edge as a breakpoint, each gap split
    // into fine cells; the density is looked up independently per midpoint.
    let mut pts: Vec<f64> = vals.clone();
    pts.extend(t.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    pts.extend([lo, hi]);
    let mut pts: Vec<f64> = pts.into_iter().filter(|p| p.is_finite()).map(|p| p.clamp(v0, vn)).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let density = |x: f64| -> f64 {
        let seg = vals.partition_point(|v| *v < x);
        if seg == 0 || seg >= vals.len() {
            0.0
        } else {
            (taus[seg] - taus[seg - 1]) / (vals[seg] - vals[seg - 1])
        }
    };
    let mut mass = 0.0;
    for w in pts.windows(2) {
        let cells = 16;
        let width = (w[1] - w[0]) / cells as f64;
        for c in 0..cells {
            let mid = w[0] + (c as f64 + 0.5) * width;
            if mid > lo && mid <= hi {
                mass += density(mid) * width;
            }
        }
    }
    let total = taus[taus.len() - 1] - taus[0];
    let mass = mass.clamp(0.0, total);
    if opts.renormalize {
        if total > 0.0 {
            mass / total
        } else {
            0.0
        }
    } else {
        mass
    }
}

fn nudge(sorted: &mut [f64]) {
    for i in 1..sorted.len() {
        if sorted[i] <= sorted[i - 1] {
            sorted[i] = sorted[i - 1] + TIE_EPSILON * (1.0 + sorted[i - 1].abs());
        }
    }
}

/// CDF value of the linear interpolation through the knots, for spot checks.
pub fn cdf_at(cdf: &PiecewiseCdf, x: f64) -> f64 {
    let k = cdf.knots();
    if x <= k[0].value {
        return k[0].tau;
    }
    for w in k.windows(2) {
        if x <= w[1].value {
            return w[0].tau + (x - w[0].value) * (w[1].tau - w[0].tau) / (w[1].value - w[0].value);
        }
    }
    k[k.len() - 1].tau
}

/// Standard normal CDF by its Taylor series around 0 (|x| <= 6).
pub fn phi_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term.abs() > 1e-18 * sum.abs().max(1e-300) {
        n += 1.0;
        term *= -x * x / (2.0 * n);
        sum += term / (2.0 * n + 1.0);
        if n > 400.0 {
            break;
        }
    }
    0.5 + sum / (2.0 * std::f64::consts::PI).sqrt()
}
