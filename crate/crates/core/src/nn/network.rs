use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Conv2d, ConvGeometry};
use super::dense::Dense;
use super::embed::{CosineEmbedding, HadamardMerge};
use super::lstm::{Lstm, LstmState};
use super::param::{check_finite, InitPolicy, Param, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputShape {
    Flat { len: usize },
    Image { channels: usize, height: usize, width: usize },
}

impl InputShape {
    pub fn len(&self) -> usize {
        match *self {
            InputShape::Flat { len } => len,
            InputShape::Image { channels, height, width } => channels * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Hidden layers in order. Dense and conv layers use ReLU; the action-value
/// output layer is appended automatically and is linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    Dense { units: usize },
    Conv { channels: usize, kernel: usize, stride: usize },
    Lstm { cells: usize },
    /// Cosine embedding of `n` basis functions merged by Hadamard product.
    QuantileMerge { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
    pub actions: usize,
    #[serde(default)]
    pub init: InitPolicy,
}

impl NetworkSpec {
    /// Vector-observation network: dense 32, dense 64, optional LSTM 64,
    /// optional quantile merge, dense 32.
    pub fn vector(obs_len: usize, actions: usize, recurrent: bool, quantile: bool, embed_n: usize) -> Self {
        let mut layers = vec![LayerSpec::Dense { units: 32 }, LayerSpec::Dense { units: 64 }];
        if recurrent {
            layers.push(LayerSpec::Lstm { cells: 64 });
        }
        if quantile {
            layers.push(LayerSpec::QuantileMerge { n: embed_n });
        }
        layers.push(LayerSpec::Dense { units: 32 });
        Self {
            input: InputShape::Flat { len: obs_len },
            layers,
            actions,
            init: InitPolicy::default(),
        }
    }

    /// Image-observation network: conv 32 and conv 64 kernels, dense `width`
    /// merged with the quantile embedding, dense `width`.
    pub fn image(
        side: usize,
        actions: usize,
        recurrent: bool,
        quantile: bool,
        embed_n: usize,
        width: usize,
    ) -> Self {
        let mut layers = vec![
            LayerSpec::Conv { channels: 32, kernel: 4, stride: 2 },
            LayerSpec::Conv { channels: 64, kernel: 3, stride: 1 },
            LayerSpec::Dense { units: width },
        ];
        if recurrent {
            layers.push(LayerSpec::Lstm { cells: width.min(256) });
        }
        if quantile {
            layers.push(LayerSpec::QuantileMerge { n: embed_n });
        }
        layers.push(LayerSpec::Dense { units: width });
        Self {
            input: InputShape::Image { channels: 1, height: side, width: side },
            layers,
            actions,
            init: InitPolicy::default(),
        }
    }

    pub fn is_quantile(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::QuantileMerge { .. }))
    }

    pub fn is_recurrent(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::Lstm { .. }))
    }

    /// Checks that consecutive layers compose.
    pub fn validate(&self) -> Result<()> {
        if self.actions == 0 {
            return Err(Error::Config("network needs at least one action".into()));
        }
        let mut image = match self.input {
            InputShape::Image { channels, height, width } => Some((channels, height, width)),
            InputShape::Flat { .. } => None,
        };
        if self.input.is_empty() {
            return Err(Error::Config("empty network input".into()));
        }
        let (mut lstms, mut merges) = (0, 0);
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv { channels, kernel, stride } => {
                    let (c, h, w) = image.ok_or_else(|| {
                        Error::Config(format!("layer {i}: conv requires image-shaped input"))
                    })?;
                    if channels == 0 {
                        return Err(Error::Config(format!("layer {i}: conv with zero channels")));
                    }
                    let geom = ConvGeometry {
                        in_channels: c,
                        in_height: h,
                        in_width: w,
                        out_channels: channels,
                        kernel,
                        stride,
                    };
                    let (oh, ow) = geom.output_hw()?;
                    image = Some((channels, oh, ow));
                }
                LayerSpec::Dense { units } => {
                    if units == 0 {
                        return Err(Error::Config(format!("layer {i}: dense with zero units")));
                    }
                    image = None;
                }
                LayerSpec::Lstm { cells } => {
                    lstms += 1;
                    if merges > 0 {
                        return Err(Error::Config("the LSTM must precede the quantile merge".into()));
                    }
                    if cells == 0 {
                        return Err(Error::Config(format!("layer {i}: LSTM with zero cells")));
                    }
                    image = None;
                }
                LayerSpec::QuantileMerge { n } => {
                    merges += 1;
                    if n == 0 {
                        return Err(Error::Config("cosine embedding needs n >= 1".into()));
                    }
                    image = None;
                }
            }
        }
        if lstms > 1 {
            return Err(Error::Config("at most one LSTM layer is supported".into()));
        }
        if merges > 1 {
            return Err(Error::Config("exactly one quantile merge point is allowed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Layer<T> {
    Dense(Dense<T>),
    Conv(Conv2d<T>),
    Lstm(Lstm<T>),
    Merge {
        embedding: CosineEmbedding<T>,
        merge: HadamardMerge<T>,
    },
}

/// Action-value network, optionally recurrent and optionally implicit-quantile.
///
/// Inputs are time-major: row `t * batch + b` is step `t` of sequence `b`.
/// With a quantile merge, every input row is evaluated at its own row of
/// quantile levels and output rows are ordered `(input row, level)`.
#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
    output: Dense<T>,
    steps: usize,
}

impl<T: Real> Network<T> {
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let init = spec.init;
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut image = match spec.input {
            InputShape::Image { channels, height, width } => Some((channels, height, width)),
            InputShape::Flat { .. } => None,
        };
        let mut width = spec.input.len();
        for layer in &spec.layers {
            match *layer {
                LayerSpec::Conv { channels, kernel, stride } => {
                    let (c, h, w) = image.expect("validated");
                    let geom = ConvGeometry {
                        in_channels: c,
                        in_height: h,
                        in_width: w,
                        out_channels: channels,
                        kernel,
                        stride,
                    };
                    let conv = Conv2d::new(geom, true, init, rng)?;
                    let (oh, ow) = geom.output_hw()?;
                    image = Some((channels, oh, ow));
                    width = conv.out_len();
                    layers.push(Layer::Conv(conv));
                }
                LayerSpec::Dense { units } => {
                    layers.push(Layer::Dense(Dense::new(width, units, true, init, rng)));
                    width = units;
                    image = None;
                }
                LayerSpec::Lstm { cells } => {
                    layers.push(Layer::Lstm(Lstm::new(width, cells, init, rng)));
                    width = cells;
                    image = None;
                }
                LayerSpec::QuantileMerge { n } => {
                    layers.push(Layer::Merge {
                        embedding: CosineEmbedding::new(n, width, init, rng)?,
                        merge: HadamardMerge::new(),
                    });
                    image = None;
                }
            }
        }
        let output = Dense::new(width, spec.actions, false, init, rng);
        Ok(Self {
            spec,
            layers,
            output,
            steps: 0,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn actions(&self) -> usize {
        self.spec.actions
    }

    pub fn is_quantile(&self) -> bool {
        self.spec.is_quantile()
    }

    pub fn is_recurrent(&self) -> bool {
        self.spec.is_recurrent()
    }

    pub fn lstm_cells(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Lstm(lstm) => Some(lstm.cells()),
            _ => None,
        })
    }

    fn check_inputs(&self, obs: &Array2<T>, steps: usize, taus: Option<&Array2<T>>) -> Result<()> {
        if obs.ncols() != self.spec.input.len() {
            return Err(Error::Shape(format!(
                "network input has {} columns, expected {}",
                obs.ncols(),
                self.spec.input.len()
            )));
        }
        if steps == 0 || obs.nrows() % steps != 0 {
            return Err(Error::Shape(format!("{} rows do not split into {steps} steps", obs.nrows())));
        }
        match (self.is_quantile(), taus) {
            (true, Some(t)) if t.nrows() == obs.nrows() && t.ncols() > 0 => Ok(()),
            (true, _) => Err(Error::Shape("quantile network needs one row of levels per input row".into())),
            (false, None) => Ok(()),
            (false, Some(_)) => Err(Error::Shape("non-quantile network takes no quantile levels".into())),
        }
    }

    /// Inference pass. A recurrent network starts from `state` (zero when
    /// `None`) and returns its final state.
    pub fn infer(
        &self,
        obs: &Array2<T>,
        steps: usize,
        state: Option<&LstmState<T>>,
        taus: Option<&Array2<T>>,
    ) -> Result<(Array2<T>, Option<LstmState<T>>)> {
        self.check_inputs(obs, steps, taus)?;
        let batch = obs.nrows() / steps;
        let mut x = obs.clone();
        let mut final_state = None;
        for layer in &self.layers {
            x = match layer {
                Layer::Dense(d) => d.forward(&x)?,
                Layer::Conv(c) => c.forward(&x)?,
                Layer::Lstm(lstm) => {
                    let mut st = match state {
                        Some(s) => s.clone(),
                        None => LstmState::zeros(batch, lstm.cells()),
                    };
                    let mut out = Array2::zeros((x.nrows(), lstm.cells()));
                    for t in 0..steps {
                        let xt = x.slice(s![t * batch..(t + 1) * batch, ..]).to_owned();
                        st = lstm.step(&xt, &st, t)?;
                        out.slice_mut(s![t * batch..(t + 1) * batch, ..]).assign(&st.hidden);
                    }
                    final_state = Some(st);
                    out
                }
                Layer::Merge { embedding, .. } => {
                    let levels: Vec<T> = taus.expect("checked").iter().copied().collect();
                    let emb = embedding.forward(&levels)?;
                    HadamardMerge::forward(&x, &emb)?.0
                }
            };
        }
        Ok((self.output.forward(&x)?, final_state))
    }

    /// Convenience wrapper over [`Network::infer`] for zero-state sequences.
    pub fn forward(&self, obs: &Array2<T>, steps: usize, taus: Option<&Array2<T>>) -> Result<Array2<T>> {
        Ok(self.infer(obs, steps, None, taus)?.0)
    }

    /// Training pass from zero recurrent state, caching activations.
    pub fn forward_train(&mut self, obs: &Array2<T>, steps: usize, taus: Option<&Array2<T>>) -> Result<Array2<T>> {
        self.check_inputs(obs, steps, taus)?;
        self.steps = steps;
        let mut x = obs.clone();
        for layer in &mut self.layers {
            x = match layer {
                Layer::Dense(d) => d.forward_train(x)?,
                Layer::Conv(c) => c.forward_train(x)?,
                Layer::Lstm(lstm) => lstm.forward_sequence_train(&x, steps)?,
                Layer::Merge { embedding, merge } => {
                    let levels: Vec<T> = taus.expect("checked").iter().copied().collect();
                    let emb = embedding.forward_train(&levels)?;
                    merge.forward_train(x, emb)?
                }
            };
        }
        let out = self.output.forward_train(x)?;
        check_finite(&out, "network output")?;
        Ok(out)
    }

    /// Backpropagates `grad_out` (shaped like the last training output) and
    /// accumulates parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, grad_out: Array2<T>) -> Result<Array2<T>> {
        let mut g = self.output.backward(grad_out)?;
        for layer in self.layers.iter_mut().rev() {
            g = match layer {
                Layer::Dense(d) => d.backward(g)?,
                Layer::Conv(c) => c.backward(g)?,
                Layer::Lstm(lstm) => lstm.backward_sequence(&g)?,
                Layer::Merge { embedding, merge } => {
                    let (gf, ge) = merge.backward(&g)?;
                    embedding.backward(ge)?;
                    gf
                }
            };
        }
        Ok(g)
    }

    pub fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let (kind, ps): (&str, [&Param<T>; 2]) = match layer {
                Layer::Dense(d) => ("dense", d.params()),
                Layer::Conv(c) => ("conv", c.params()),
                Layer::Lstm(l) => ("lstm", l.params()),
                Layer::Merge { embedding, .. } => ("embed", embedding.params()),
            };
            out.push((format!("{i}.{kind}.weights"), ps[0]));
            out.push((format!("{i}.{kind}.bias"), ps[1]));
        }
        let ps = self.output.params();
        out.push(("out.dense.weights".into(), ps[0]));
        out.push(("out.dense.bias".into(), ps[1]));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            let ps = match layer {
                Layer::Dense(d) => d.params_mut(),
                Layer::Conv(c) => c.params_mut(),
                Layer::Lstm(l) => l.params_mut(),
                Layer::Merge { embedding, .. } => embedding.params_mut(),
            };
            out.extend(ps);
        }
        out.extend(self.output.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Overwrites parameter values (not optimizer state) from `other`.
    pub fn copy_values_from(&mut self, other: &Network<T>) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Config("cannot copy parameters between different network specs".into()));
        }
        let src: Vec<Array2<T>> = other.named_params().into_iter().map(|(_, p)| p.value.clone()).collect();
        for (dst, v) in self.params_mut().into_iter().zip(src) {
            dst.value.assign(&v);
        }
        Ok(())
    }

    /// Replaces parameter values by name-ordered arrays (checkpoint load).
    pub fn load_values(&mut self, values: Vec<Array2<T>>) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter arrays, got {}",
                params.len(),
                values.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.value.dim() != v.dim() {
                return Err(Error::Shape(format!("parameter {:?} vs loaded {:?}", p.value.dim(), v.dim())));
            }
            p.value = v;
        }
        Ok(())
    }
}

/// Copies main-network values into the target network. Target optimizer state
/// is left as is.
pub fn sync_target<T: Real>(main: &Network<T>, target: &mut Network<T>) -> Result<()> {
    target.copy_values_from(main)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn validate_rejects_bad_compositions() {
        let mut spec = NetworkSpec::vector(10, 5, true, true, 8);
        spec.layers.push(LayerSpec::QuantileMerge { n: 4 });
        assert!(spec.validate().is_err());
        let bad = NetworkSpec {
            input: InputShape::Flat { len: 4 },
            layers: vec![LayerSpec::Conv { channels: 2, kernel: 2, stride: 1 }],
            actions: 2,
            init: InitPolicy::default(),
        };
        assert!(bad.validate().is_err());
        let late_lstm = NetworkSpec {
            input: InputShape::Flat { len: 4 },
            layers: vec![LayerSpec::QuantileMerge { n: 4 }, LayerSpec::Lstm { cells: 3 }],
            actions: 2,
            init: InitPolicy::default(),
        };
        assert!(late_lstm.validate().is_err());
        assert!(NetworkSpec::image(16, 5, false, true, 8, 64).validate().is_ok());
        assert!(NetworkSpec::image(3, 5, false, true, 8, 64).validate().is_err());
    }

    #[test]
    fn output_shapes() {
        let net = Network::<f64>::new(NetworkSpec::vector(6, 5, true, true, 8), &mut rng()).unwrap();
        let obs = Array2::zeros((3 * 2, 6));
        let taus = Array2::from_elem((6, 4), 0.5);
        let out = net.forward(&obs, 3, Some(&taus)).unwrap();
        assert_eq!(out.dim(), (24, 5));
        assert!(net.forward(&obs, 3, None).is_err());
        let base = Network::<f64>::new(NetworkSpec::vector(6, 5, false, false, 8), &mut rng()).unwrap();
        assert_eq!(base.forward(&obs, 1, None).unwrap().dim(), (6, 5));
    }

    #[test]
    fn forward_is_deterministic_and_train_matches_infer() {
        let mut net = Network::<f64>::new(NetworkSpec::vector(6, 5, true, true, 8), &mut rng()).unwrap();
        let obs = Array2::from_shape_fn((8, 6), |(r, c)| ((r * 7 + c) as f64).sin());
        let taus = Array2::from_shape_fn((8, 3), |(r, c)| ((r + c) % 10) as f64 / 10.0);
        let a = net.forward(&obs, 4, Some(&taus)).unwrap();
        let b = net.forward(&obs, 4, Some(&taus)).unwrap();
        assert_eq!(a, b);
        let c = net.forward_train(&obs, 4, Some(&taus)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn sync_makes_networks_identical() {
        let spec = NetworkSpec::vector(6, 5, true, true, 8);
        let mut r = rng();
        let mut main = Network::<f64>::new(spec.clone(), &mut r).unwrap();
        let mut target = Network::<f64>::new(spec, &mut r).unwrap();
        let obs = Array2::from_shape_fn((2, 6), |(r, c)| (r + c) as f64 * 0.1);
        let taus = Array2::from_elem((2, 2), 0.3);
        assert_ne!(
            main.forward(&obs, 1, Some(&taus)).unwrap(),
            target.forward(&obs, 1, Some(&taus)).unwrap()
        );
        target.params_mut()[0].adam_m.fill(0.25);
        sync_target(&main, &mut target).unwrap();
        assert_eq!(
            main.forward(&obs, 1, Some(&taus)).unwrap(),
            target.forward(&obs, 1, Some(&taus)).unwrap()
        );
        assert!(target.params_mut()[0].adam_m.iter().all(|&m| m == 0.25));

        let out = main.forward_train(&obs, 1, Some(&taus)).unwrap();
        main.backward(Array2::ones(out.raw_dim())).unwrap();
        let mut params = main.params_mut();
        crate::nn::Adam::new(0.01).step(&mut params).unwrap();
        assert_ne!(
            main.forward(&obs, 1, Some(&taus)).unwrap(),
            target.forward(&obs, 1, Some(&taus)).unwrap()
        );
    }

    #[test]
    fn sync_rejects_mismatched_specs() {
        let main = Network::<f64>::new(NetworkSpec::vector(6, 5, true, true, 8), &mut rng()).unwrap();
        let mut other = Network::<f64>::new(NetworkSpec::vector(6, 5, false, true, 8), &mut rng()).unwrap();
        assert!(matches!(sync_target(&main, &mut other), Err(Error::Config(_))));
    }
}
