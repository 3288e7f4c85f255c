use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::param::{expect_cols, InitPolicy, Param, Real};
use crate::error::{Error, Result};

/// Hidden and cell state of an LSTM for a batch of independent sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub hidden: Array2<T>,
    pub cell: Array2<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(batch: usize, cells: usize) -> Self {
        Self {
            hidden: Array2::zeros((batch, cells)),
            cell: Array2::zeros((batch, cells)),
        }
    }
}

#[derive(Debug, Clone)]
struct StepCache<T> {
    xh: Array2<T>,
    input_gate: Array2<T>,
    forget_gate: Array2<T>,
    candidate: Array2<T>,
    output_gate: Array2<T>,
    cell_prev: Array2<T>,
    cell_tanh: Array2<T>,
}

/// Single-layer LSTM. Gate pre-activations are `[x, h]·W + b` with columns
/// ordered input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct Lstm<T> {
    pub weights: Param<T>,
    pub bias: Param<T>,
    input_len: usize,
    cells: usize,
    cache: Vec<StepCache<T>>,
    batch: usize,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Lstm<T> {
    pub fn new<R: Rng + ?Sized>(input_len: usize, cells: usize, init: InitPolicy, rng: &mut R) -> Self {
        let bound = match init {
            InitPolicy::FanInUniform => 1.0 / (cells as f64).sqrt(),
            other => other.bound(cells),
        };
        Self {
            weights: Param::uniform(input_len + cells, 4 * cells, bound, rng),
            bias: Param::uniform(1, 4 * cells, bound, rng),
            input_len,
            cells,
            cache: Vec::new(),
            batch: 0,
        }
    }

    pub fn from_params(input_len: usize, cells: usize, weights: Param<T>, bias: Param<T>) -> Result<Self> {
        if weights.shape() != (input_len + cells, 4 * cells) || bias.shape() != (1, 4 * cells) {
            return Err(Error::Shape(format!(
                "lstm parameters {:?}/{:?} do not match input {input_len}, cells {cells}",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weights,
            bias,
            input_len,
            cells,
            cache: Vec::new(),
            batch: 0,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    fn gates(&self, xh: &Array2<T>) -> (Array2<T>, Array2<T>, Array2<T>, Array2<T>) {
        let mut z = xh.dot(&self.weights.value);
        z += &self.bias.value;
        let h = self.cells;
        let i = z.slice(s![.., 0..h]).mapv(sigmoid);
        let f = z.slice(s![.., h..2 * h]).mapv(sigmoid);
        let g = z.slice(s![.., 2 * h..3 * h]).mapv(|v| v.tanh());
        let o = z.slice(s![.., 3 * h..4 * h]).mapv(sigmoid);
        (i, f, g, o)
    }

    fn concat_input(&self, input: ArrayView2<T>, hidden: &Array2<T>) -> Result<Array2<T>> {
        if hidden.dim() != (input.nrows(), self.cells) {
            return Err(Error::Shape(format!(
                "lstm state {:?} does not match batch {} x {} cells",
                hidden.dim(),
                input.nrows(),
                self.cells
            )));
        }
        Ok(concatenate(Axis(1), &[input, hidden.view()]).expect("rows agree"))
    }

    /// One recurrent step without caching; `step_index` labels errors.
    pub fn step(&self, input: &Array2<T>, state: &LstmState<T>, step_index: usize) -> Result<LstmState<T>> {
        expect_cols(input, self.input_len, "lstm")?;
        let xh = self.concat_input(input.view(), &state.hidden)?;
        let (i, f, g, o) = self.gates(&xh);
        let cell = &f * &state.cell + &i * &g;
        let hidden = &o * &cell.mapv(|v| v.tanh());
        if !hidden.iter().chain(cell.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("lstm state at step {step_index}")));
        }
        Ok(LstmState { hidden, cell })
    }

    /// Unrolls over a time-major input of `steps * batch` rows starting from
    /// zero state, caching everything needed for backpropagation through time.
    pub fn forward_sequence_train(&mut self, input: &Array2<T>, steps: usize) -> Result<Array2<T>> {
        let batch = self.check_sequence(input, steps)?;
        self.cache.clear();
        self.batch = batch;
        let mut state = LstmState::zeros(batch, self.cells);
        let mut out = Array2::zeros((steps * batch, self.cells));
        for t in 0..steps {
            let x = input.slice(s![t * batch..(t + 1) * batch, ..]);
            let xh = self.concat_input(x, &state.hidden)?;
            let (i, f, g, o) = self.gates(&xh);
            let cell = &f * &state.cell + &i * &g;
            let cell_tanh = cell.mapv(|v| v.tanh());
            let hidden = &o * &cell_tanh;
            if !hidden.iter().chain(cell.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("lstm state at step {t}")));
            }
            out.slice_mut(s![t * batch..(t + 1) * batch, ..]).assign(&hidden);
            let cell_prev = std::mem::replace(&mut state.cell, cell);
            state.hidden = hidden;
            self.cache.push(StepCache {
                xh,
                input_gate: i,
                forget_gate: f,
                candidate: g,
                output_gate: o,
                cell_prev,
                cell_tanh,
            });
        }
        Ok(out)
    }

    /// Inference-only unroll from zero state.
    pub fn forward_sequence(&self, input: &Array2<T>, steps: usize) -> Result<Array2<T>> {
        let batch = self.check_sequence(input, steps)?;
        let mut state = LstmState::zeros(batch, self.cells);
        let mut out = Array2::zeros((steps * batch, self.cells));
        for t in 0..steps {
            let x = input.slice(s![t * batch..(t + 1) * batch, ..]).to_owned();
            state = self.step(&x, &state, t)?;
            out.slice_mut(s![t * batch..(t + 1) * batch, ..]).assign(&state.hidden);
        }
        Ok(out)
    }

    fn check_sequence(&self, input: &Array2<T>, steps: usize) -> Result<usize> {
        expect_cols(input, self.input_len, "lstm")?;
        if steps == 0 || input.nrows() % steps != 0 {
            return Err(Error::Shape(format!(
                "lstm: {} rows cannot be split into {steps} steps",
                input.nrows()
            )));
        }
        Ok(input.nrows() / steps)
    }

    /// Backpropagation through the whole cached unroll. `grad_out` is
    /// time-major like the forward output.
    pub fn backward_sequence(&mut self, grad_out: &Array2<T>) -> Result<Array2<T>> {
        if self.cache.is_empty() {
            return Err(Error::Usage("lstm backward without a stored forward".into()));
        }
        let batch = self.batch;
        let steps = self.cache.len();
        if grad_out.dim() != (steps * batch, self.cells) {
            return Err(Error::Shape("lstm backward gradient shape".into()));
        }
        let h = self.cells;
        let one = T::one();
        let mut dx = Array2::zeros((steps * batch, self.input_len));
        let mut dh_next = Array2::<T>::zeros((batch, h));
        let mut dc_next = Array2::<T>::zeros((batch, h));
        let cache = std::mem::take(&mut self.cache);
        for (t, sc) in cache.iter().enumerate().rev() {
            let dh = &grad_out.slice(s![t * batch..(t + 1) * batch, ..]) + &dh_next;
            let d_o = &dh * &sc.cell_tanh;
            let mut dc = &dh * &sc.output_gate;
            dc.zip_mut_with(&sc.cell_tanh, |d, &th| *d = *d * (one - th * th));
            dc += &dc_next;
            let mut dz = Array2::zeros((batch, 4 * h));
            {
                let mut zi = dz.slice_mut(s![.., 0..h]);
                ndarray::Zip::from(&mut zi)
                    .and(&dc)
                    .and(&sc.candidate)
                    .and(&sc.input_gate)
                    .for_each(|z, &d, &g, &i| *z = d * g * i * (one - i));
            }
            {
                let mut zf = dz.slice_mut(s![.., h..2 * h]);
                ndarray::Zip::from(&mut zf)
                    .and(&dc)
                    .and(&sc.cell_prev)
                    .and(&sc.forget_gate)
                    .for_each(|z, &d, &cp, &f| *z = d * cp * f * (one - f));
            }
            {
                let mut zg = dz.slice_mut(s![.., 2 * h..3 * h]);
                ndarray::Zip::from(&mut zg)
                    .and(&dc)
                    .and(&sc.input_gate)
                    .and(&sc.candidate)
                    .for_each(|z, &d, &i, &g| *z = d * i * (one - g * g));
            }
            {
                let mut zo = dz.slice_mut(s![.., 3 * h..4 * h]);
                ndarray::Zip::from(&mut zo)
                    .and(&d_o)
                    .and(&sc.output_gate)
                    .for_each(|z, &d, &o| *z = d * o * (one - o));
            }
            dc_next = &dc * &sc.forget_gate;
            general_mat_mul(one, &sc.xh.t(), &dz, one, &mut self.weights.grad);
            self.bias.grad += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            let dxh = dz.dot(&self.weights.value.t());
            dx.slice_mut(s![t * batch..(t + 1) * batch, ..])
                .assign(&dxh.slice(s![.., 0..self.input_len]));
            dh_next = dxh.slice(s![.., self.input_len..]).to_owned();
        }
        Ok(dx)
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weights, &mut self.bias]
    }
}
