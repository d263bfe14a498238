//! Single-layer LSTM regression network used as the learned nudging map.
//!
//! Each sample is a sequence of length one that starts from zero hidden and
//! cell state, so the cell reduces to
//!
//! ```text
//! i = σ(W_i x + b_i)   o = σ(W_o x + b_o)   g = tanh(W_c x + b_c)
//! c = i ⊙ g            h = o ⊙ tanh(c)      y = W_y h + b_y
//! ```
//!
//! The forget gate and the recurrent weight columns are kept in the parameter
//! set (and in checkpoints) but receive zero gradient because `c₀ = h₀ = 0`.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::seq::SliceRandom;

use crate::binio;
use crate::error::{check_finite, check_len, Error, Result};
use crate::pod::ModalState;
use crate::rng;

const LSTM_MAGIC: &[u8] = b"RNLSTM1";

/// Per-component z-score standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits mean and population standard deviation; constant components get
    /// unit scale.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() {
            return Err(Error::InvalidArgument("cannot fit a scaler on no rows".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            check_len("scaler row", dim, row.len())?;
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * (1.0 + sd) && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn inverse(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}

/// All trainable parameters, or a gradient with the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_f: Vec<f64>,
    pub w_i: Vec<f64>,
    pub w_o: Vec<f64>,
    pub w_c: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_c: Vec<f64>,
    pub w_y: Vec<f64>,
    pub b_y: Vec<f64>,
}

impl LstmParams {
    fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        let gate = hidden * (input + hidden);
        Self {
            w_f: vec![0.0; gate],
            w_i: vec![0.0; gate],
            w_o: vec![0.0; gate],
            w_c: vec![0.0; gate],
            b_f: vec![0.0; hidden],
            b_i: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
            b_c: vec![0.0; hidden],
            w_y: vec![0.0; output * hidden],
            b_y: vec![0.0; output],
        }
    }

    /// Blocks in checkpoint order.
    pub fn blocks(&self) -> [&Vec<f64>; 10] {
        [
            &self.w_f, &self.w_i, &self.w_o, &self.w_c, &self.b_f, &self.b_i, &self.b_o,
            &self.b_c, &self.w_y, &self.b_y,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_o,
            &mut self.w_c,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_o,
            &mut self.b_c,
            &mut self.w_y,
            &mut self.b_y,
        ]
    }

    fn fill(&mut self, v: f64) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|x| *x = v);
        }
    }

    fn add_scaled(&mut self, other: &LstmParams, w: f64) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += w * y;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

/// Bookkeeping carried in checkpoints next to the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMeta {
    /// Opaque tag identifying what the measurement features represent.
    pub observable_tag: u64,
    pub epochs_trained: u64,
    pub best_val_mse: f64,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        Self {
            observable_tag: 0,
            epochs_trained: 0,
            best_val_mse: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmNetwork {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    pub params: LstmParams,
    pub feature_scaler: Scaler,
    pub target_scaler: Scaler,
    pub meta: TrainingMeta,
}

/// Activations retained by [`lstm_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    dims: (usize, usize, usize),
    x: Vec<f64>,
    i: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl LstmNetwork {
    /// Network with every parameter zero and identity scalers.
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            params: LstmParams::zeros(input_dim, hidden_dim, output_dim),
            feature_scaler: Scaler::identity(input_dim),
            target_scaler: Scaler::identity(output_dim),
            meta: TrainingMeta::default(),
        }
    }

    /// Uniform(-k, k) weights with `k = 1/sqrt(fan_in)`; forget-gate bias 1.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(input_dim, hidden_dim, output_dim);
        let k_gate = 1.0 / ((input_dim + hidden_dim) as f64).sqrt();
        let k_out = 1.0 / (hidden_dim as f64).sqrt();
        let p = &mut net.params;
        for w in [&mut p.w_f, &mut p.w_i, &mut p.w_o, &mut p.w_c] {
            w.iter_mut().for_each(|x| *x = rng.random_range(-k_gate..k_gate));
        }
        p.w_y
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-k_out..k_out));
        p.b_f.iter_mut().for_each(|x| *x = 1.0);
        net
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn check_consistent(&self) -> Result<()> {
        let expect = LstmParams::zeros(self.input_dim, self.hidden_dim, self.output_dim);
        for (a, b) in self.params.blocks().iter().zip(expect.blocks()) {
            check_len("lstm parameter block", b.len(), a.len())?;
        }
        check_len("feature scaler", self.input_dim, self.feature_scaler.dim())?;
        check_len("target scaler", self.output_dim, self.target_scaler.dim())?;
        if !self.params.all_finite() {
            return Err(Error::NonFinite("lstm weights"));
        }
        if self
            .feature_scaler
            .std
            .iter()
            .chain(&self.target_scaler.std)
            .any(|s| !(*s > 0.0))
        {
            return Err(Error::InvalidArgument(
                "scaler standard deviations must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Prediction in original units: scale features, forward, unscale.
    pub fn predict(&self, raw_input: &[f64]) -> Result<Vec<f64>> {
        check_len("lstm input", self.input_dim, raw_input.len())?;
        let x = self.feature_scaler.transform(raw_input);
        let (y, _) = lstm_forward(self, &x)?;
        Ok(self.target_scaler.inverse(&y))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_magic(w, LSTM_MAGIC)?;
        binio::write_u64(w, self.input_dim as u64)?;
        binio::write_u64(w, self.hidden_dim as u64)?;
        binio::write_u64(w, self.output_dim as u64)?;
        binio::write_f64s(w, &self.feature_scaler.mean)?;
        binio::write_f64s(w, &self.feature_scaler.std)?;
        binio::write_f64s(w, &self.target_scaler.mean)?;
        binio::write_f64s(w, &self.target_scaler.std)?;
        for block in self.params.blocks() {
            binio::write_f64s(w, block)?;
        }
        binio::write_u64(w, self.meta.observable_tag)?;
        binio::write_u64(w, self.meta.epochs_trained)?;
        binio::write_f64(w, self.meta.best_val_mse)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        const KIND: &str = "checkpoint";
        binio::read_magic(r, LSTM_MAGIC, KIND)?;
        let input = binio::read_usize(r, KIND)?;
        let hidden = binio::read_usize(r, KIND)?;
        let output = binio::read_usize(r, KIND)?;
        let mut net = Self::zeros(input, hidden, output);
        net.feature_scaler.mean = binio::read_f64s(r, input, KIND)?;
        net.feature_scaler.std = binio::read_f64s(r, input, KIND)?;
        net.target_scaler.mean = binio::read_f64s(r, output, KIND)?;
        net.target_scaler.std = binio::read_f64s(r, output, KIND)?;
        for block in net.params.blocks_mut() {
            *block = binio::read_f64s(r, block.len(), KIND)?;
        }
        net.meta = TrainingMeta {
            observable_tag: binio::read_u64(r, KIND)?,
            epochs_trained: binio::read_u64(r, KIND)?,
            best_val_mse: binio::read_f64(r, KIND)?,
        };
        binio::expect_eof(r, KIND)?;
        net.check_consistent().map_err(|e| Error::Format {
            kind: KIND,
            reason: e.to_string(),
        })?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Forward pass on an already scaled input.
pub fn lstm_forward(net: &LstmNetwork, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    check_len("lstm input", net.input_dim, x.len())?;
    let (ni, nh, no) = (net.input_dim, net.hidden_dim, net.output_dim);
    let stride = ni + nh;
    let p = &net.params;
    // h_prev = 0, so only the input columns contribute to the gate sums
    let gate = |w: &[f64], b: &[f64], j: usize| -> f64 {
        let row = &w[j * stride..j * stride + ni];
        b[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut i = vec![0.0; nh];
    let mut o = vec![0.0; nh];
    let mut g = vec![0.0; nh];
    let mut tanh_c = vec![0.0; nh];
    let mut h = vec![0.0; nh];
    for j in 0..nh {
        i[j] = sigmoid(gate(&p.w_i, &p.b_i, j));
        o[j] = sigmoid(gate(&p.w_o, &p.b_o, j));
        g[j] = gate(&p.w_c, &p.b_c, j).tanh();
        // c = f ⊙ c_prev + i ⊙ g with c_prev = 0
        tanh_c[j] = (i[j] * g[j]).tanh();
        h[j] = o[j] * tanh_c[j];
    }
    let y: Vec<f64> = (0..no)
        .map(|k| {
            p.b_y[k]
                + p.w_y[k * nh..(k + 1) * nh]
                    .iter()
                    .zip(&h)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        })
        .collect();
    check_finite("lstm output", &y)?;
    Ok((
        y,
        ForwardCache {
            dims: (ni, nh, no),
            x: x.to_vec(),
            i,
            o,
            g,
            tanh_c,
            h,
        },
    ))
}

/// Gradient of `dyᵀ y` with respect to every parameter, i.e. backprop of an
/// upstream gradient `dy` through the cell.
pub fn lstm_backward(net: &LstmNetwork, cache: &ForwardCache, dy: &[f64]) -> Result<LstmParams> {
    let dims = (net.input_dim, net.hidden_dim, net.output_dim);
    if cache.dims != dims || cache.x.len() != dims.0 {
        return Err(Error::InvalidArgument(
            "forward cache does not belong to this network".into(),
        ));
    }
    let mut grad = LstmParams::zeros(dims.0, dims.1, dims.2);
    accumulate_backward(net, cache, dy, &mut grad)?;
    Ok(grad)
}

fn accumulate_backward(
    net: &LstmNetwork,
    cache: &ForwardCache,
    dy: &[f64],
    grad: &mut LstmParams,
) -> Result<()> {
    let (ni, nh, no) = (net.input_dim, net.hidden_dim, net.output_dim);
    check_len("lstm upstream gradient", no, dy.len())?;
    let stride = ni + nh;
    let mut dh = vec![0.0; nh];
    for k in 0..no {
        let dyk = dy[k];
        grad.b_y[k] += dyk;
        let row = k * nh;
        for j in 0..nh {
            grad.w_y[row + j] += dyk * cache.h[j];
            dh[j] += dyk * net.params.w_y[row + j];
        }
    }
    for j in 0..nh {
        let (i, o, g, tc) = (cache.i[j], cache.o[j], cache.g[j], cache.tanh_c[j]);
        let d_o = dh[j] * tc * o * (1.0 - o);
        let dc = dh[j] * o * (1.0 - tc * tc);
        let d_i = dc * g * i * (1.0 - i);
        let d_g = dc * i * (1.0 - g * g);
        grad.b_o[j] += d_o;
        grad.b_i[j] += d_i;
        grad.b_c[j] += d_g;
        let row = j * stride;
        for (q, &xq) in cache.x.iter().enumerate() {
            grad.w_o[row + q] += d_o * xq;
            grad.w_i[row + q] += d_i * xq;
            grad.w_c[row + q] += d_g * xq;
        }
    }
    Ok(())
}

/// Network correction for background coefficients `a_b` and raw measurements `z`.
pub fn predict_correction(net: &LstmNetwork, a_b: &ModalState, z: &[f64]) -> Result<Vec<f64>> {
    let mut input = Vec::with_capacity(a_b.a.len() + z.len());
    input.extend_from_slice(&a_b.a);
    input.extend_from_slice(z);
    net.predict(&input)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self, input_dim: usize, output_dim: usize) -> Result<()> {
        check_len("training targets", self.inputs.len(), self.targets.len())?;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            check_len("training input", input_dim, x.len())?;
            check_len("training target", output_dim, y.len())?;
            check_finite("training input", x)?;
            check_finite("training target", y)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub val_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            val_fraction: 0.2,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub epochs: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl LossHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_mse, e.val_mse));
        }
        s
    }
}

struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: LstmParams,
    v: LstmParams,
}

impl Adam {
    fn new(like: &LstmParams) -> Self {
        let mut m = like.clone();
        m.fill(0.0);
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    fn update(&mut self, params: &mut LstmParams, grad: &LstmParams, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let blocks = params
            .blocks_mut()
            .into_iter()
            .zip(grad.blocks())
            .zip(self.m.blocks_mut().into_iter().zip(self.v.blocks_mut()));
        for ((p, g), (m, v)) in blocks {
            for q in 0..p.len() {
                m[q] = b1 * m[q] + (1.0 - b1) * g[q];
                v[q] = b2 * v[q] + (1.0 - b2) * g[q] * g[q];
                let mhat = m[q] / c1;
                let vhat = v[q] / c2;
                p[q] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

fn mse(net: &LstmNetwork, xs: &[Vec<f64>], ys: &[Vec<f64>], idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &s in idx {
        let (y, _) = lstm_forward(net, &xs[s])?;
        total += y
            .iter()
            .zip(&ys[s])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / (idx.len() * net.output_dim) as f64)
}

/// Fits the network with Adam on mean squared error (in standardized target
/// units), early-stopping on the validation split. Returns the weights of the
/// best validation epoch together with the loss history.
pub fn train(
    mut net: LstmNetwork,
    data: &TrainingSet,
    hyper: &TrainConfig,
) -> Result<(LstmNetwork, LossHistory)> {
    if data.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 samples, got {}",
            data.len()
        )));
    }
    if !(hyper.lr > 0.0
        && hyper.batch_size > 0
        && hyper.max_epochs > 0
        && hyper.val_fraction > 0.0
        && hyper.val_fraction < 1.0
        && hyper.patience > 0)
    {
        return Err(Error::InvalidArgument(format!(
            "invalid training hyperparameters: {hyper:?}"
        )));
    }
    data.validate(net.input_dim, net.output_dim)?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng::stream(hyper.seed, "train-split", 0));
    let n_val = ((data.len() as f64 * hyper.val_fraction).round() as usize).clamp(1, data.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let train_x: Vec<&[f64]> = train_idx.iter().map(|&s| data.inputs[s].as_slice()).collect();
    let train_y: Vec<&[f64]> = train_idx.iter().map(|&s| data.targets[s].as_slice()).collect();
    net.feature_scaler = Scaler::fit(&train_x)?;
    net.target_scaler = Scaler::fit(&train_y)?;
    let xs: Vec<Vec<f64>> = data
        .inputs
        .iter()
        .map(|x| net.feature_scaler.transform(x))
        .collect();
    let ys: Vec<Vec<f64>> = data
        .targets
        .iter()
        .map(|y| net.target_scaler.transform(y))
        .collect();

    let mut history = LossHistory::default();
    let initial = EpochLoss {
        epoch: 0,
        train_mse: mse(&net, &xs, &ys, &train_idx)?,
        val_mse: mse(&net, &xs, &ys, &val_idx)?,
    };
    history.epochs.push(initial);
    let mut best = (initial.val_mse, net.params.clone(), 0usize);

    let mut adam = Adam::new(&net.params);
    let mut shuffle_rng = rng::stream(hyper.seed, "train-shuffle", 0);
    let mut grad = net.params.clone();
    let mut stale = 0usize;
    let no = net.output_dim as f64;

    for epoch in 1..=hyper.max_epochs {
        train_idx.shuffle(&mut shuffle_rng);
        for batch in train_idx.chunks(hyper.batch_size) {
            grad.fill(0.0);
            let scale = 2.0 / (batch.len() as f64 * no);
            for &s in batch {
                let (y, cache) = lstm_forward(&net, &xs[s])?;
                let dy: Vec<f64> = y.iter().zip(&ys[s]).map(|(a, b)| scale * (a - b)).collect();
                accumulate_backward(&net, &cache, &dy, &mut grad)?;
            }
            adam.update(&mut net.params, &grad, hyper.lr);
        }
        let train_mse = mse(&net, &xs, &ys, &train_idx)
            .map_err(|_| Error::Divergence { epoch })?;
        let val_mse = mse(&net, &xs, &ys, &val_idx).map_err(|_| Error::Divergence { epoch })?;
        if !(train_mse.is_finite() && val_mse.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        history.epochs.push(EpochLoss {
            epoch,
            train_mse,
            val_mse,
        });
        if val_mse < best.0 {
            best = (val_mse, net.params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }

    net.params = best.1;
    history.best_epoch = best.2;
    net.meta.epochs_trained = (history.epochs.len() - 1) as u64;
    net.meta.best_val_mse = best.0;
    log::info!(
        "lstm training: {} epochs, best epoch {} with val mse {:.3e}",
        net.meta.epochs_trained,
        history.best_epoch,
        best.0
    );
    Ok((net, history))
}

impl LstmParams {
    /// Flat view used by gradient checks.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mutable access to the parameter with flat index `idx`.
    pub fn get_mut(&mut self, mut idx: usize) -> Option<&mut f64> {
        for b in self.blocks_mut() {
            if idx < b.len() {
                return b.get_mut(idx);
            }
            idx -= b.len();
        }
        None
    }

    pub fn axpy(&mut self, other: &LstmParams, w: f64) {
        self.add_scaled(other, w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net() -> LstmNetwork {
        LstmNetwork::init(4, 5, 2, &mut rng::stream(3, "test", 0))
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = LstmNetwork::zeros(3, 4, 2);
        let (y, cache) = lstm_forward(&net, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
        assert!(cache.h.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn scalar_cell_by_hand() {
        let mut net = LstmNetwork::zeros(1, 1, 1);
        let p = &mut net.params;
        // gate rows are [w_x, w_h]
        p.w_i = vec![0.3, 9.0];
        p.w_o = vec![-0.7, 9.0];
        p.w_c = vec![1.1, 9.0];
        p.w_f = vec![5.0, 5.0];
        p.b_i = vec![0.1];
        p.b_o = vec![0.2];
        p.b_c = vec![-0.3];
        p.w_y = vec![1.5];
        p.b_y = vec![0.25];
        let x = 0.8f64;
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.3 * x + 0.1);
        let o = s(-0.7 * x + 0.2);
        let g = (1.1 * x - 0.3).tanh();
        let h = o * (i * g).tanh();
        let expected = 1.5 * h + 0.25;
        let (y, _) = lstm_forward(&net, &[x]).unwrap();
        assert!((y[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = tiny_net();
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(lstm_forward(&net, &x).unwrap().0, lstm_forward(&net, &x).unwrap().0);
    }

    #[test]
    fn zero_upstream_gradient() {
        let net = tiny_net();
        let (_, cache) = lstm_forward(&net, &[0.5, -0.5, 1.0, 0.0]).unwrap();
        let g = lstm_backward(&net, &cache, &[0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_bias_gradient_is_dy() {
        let net = tiny_net();
        let (_, cache) = lstm_forward(&net, &[0.5, -0.5, 1.0, 0.0]).unwrap();
        let g = lstm_backward(&net, &cache, &[0.3, -1.2]).unwrap();
        assert_eq!(g.b_y, vec![0.3, -1.2]);
    }

    #[test]
    fn mismatched_cache_rejected() {
        let net = tiny_net();
        let other = LstmNetwork::zeros(3, 5, 2);
        let (_, cache) = lstm_forward(&other, &[0.0; 3]).unwrap();
        assert!(lstm_backward(&net, &cache, &[1.0, 1.0]).is_err());
        assert!(lstm_forward(&net, &[0.0; 3]).is_err());
    }

    #[test]
    fn constant_head_predicts_target_mean() {
        let mut net = tiny_net();
        net.params.w_y.iter_mut().for_each(|w| *w = 0.0);
        net.target_scaler = Scaler {
            mean: vec![2.0, -3.0],
            std: vec![0.5, 4.0],
        };
        let c = predict_correction(
            &net,
            &ModalState { t: 0.0, a: vec![1.0, 2.0] },
            &[3.0, 4.0],
        )
        .unwrap();
        assert_eq!(c, vec![2.0, -3.0]);
        assert!(predict_correction(&net, &ModalState { t: 0.0, a: vec![1.0] }, &[3.0, 4.0]).is_err());
    }

    #[test]
    fn scaler_ignores_constant_columns() {
        let rows = [[1.0, 5.0], [3.0, 5.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Scaler::fit(&refs).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
    }

    #[test]
    fn checkpoint_layout() {
        let mut net = tiny_net();
        net.meta.observable_tag = 1;
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..7], b"RNLSTM1");
        let n_params = net.params.len();
        let expected = 7 + 24 + 8 * (2 * 4 + 2 * 2) + 8 * n_params + 24;
        assert_eq!(buf.len(), expected);
        let back = LstmNetwork::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.params, net.params);
        assert_eq!(back.meta.observable_tag, 1);
        assert!(LstmNetwork::read_from(&mut &buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn training_rejects_bad_inputs() {
        let data = TrainingSet {
            inputs: vec![vec![0.0; 4]; 5],
            targets: vec![vec![0.0; 2]; 5],
        };
        assert!(train(tiny_net(), &data, &TrainConfig::default()).is_err());
        let data = TrainingSet {
            inputs: vec![vec![0.0; 4]; 20],
            targets: vec![vec![0.0; 2]; 20],
        };
        let bad = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(tiny_net(), &data, &bad).is_err());
    }

    #[test]
    fn divergence_reported() {
        let data = TrainingSet {
            inputs: (0..40).map(|i| vec![i as f64; 4]).collect(),
            targets: (0..40).map(|i| vec![(i * i) as f64; 2]).collect(),
        };
        let hyper = TrainConfig {
            lr: f64::INFINITY,
            max_epochs: 3,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(tiny_net(), &data, &hyper),
            Err(Error::Divergence { .. })
        ));
    }
}
