//! Minimal fully-connected network with mean-squared-error backprop and
//! mini-batch gradient descent: the substrate for both the amodal rider-box
//! regressor and the trapezium box regressor.
//!
//! Hidden layers use the configured activation; the output layer is always
//! linear. Everything is seeded and single-threaded, so training is fully
//! deterministic: same seed, same data, same checkpoint bytes.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("network needs at least two layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("layer sizes must be positive")]
    ZeroLayerSize,
    #[error("input length {got} does not match network input size {want}")]
    InputSize { got: usize, want: usize },
    #[error("target length {got} does not match network output size {want}")]
    TargetSize { got: usize, want: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("sample {index} has inconsistent dimensions")]
    BadSample { index: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Activation applied to hidden layers only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative as a function of the pre-activation value.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, NetError> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            other => Err(NetError::Format(format!("unknown activation tag {other}"))),
        }
    }
}

/// Training hyperparameters. The learning rate is divided by
/// `lr_decay_factor` every `decay_every` epochs (`decay_every = 0` disables
/// decay). Shuffling is seeded; there is no early stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr_decay_factor: f64,
    pub decay_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            lr_decay_factor: 10.0,
            decay_every: 100,
        }
    }
}

/// Per-parameter gradients, same shapes as the network they came from.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Fully-connected network. Weight matrices are `(fan_in, fan_out)`;
/// `layer_sizes` chains input, hidden layers, output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"DNET";
const CHECKPOINT_VERSION: u32 = 1;

impl DenseNet {
    /// Weights drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` in
    /// row-major order from a seeded generator; biases start at zero.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self, NetError> {
        if layer_sizes.len() < 2 {
            return Err(NetError::TooFewLayers(layer_sizes.len()));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(NetError::ZeroLayerSize);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            weights.push(Array2::from_shape_vec((fan_in, fan_out), data).expect("shape matches"));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Affine + activation per hidden layer, linear output.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        if x.len() != self.input_size() {
            return Err(NetError::InputSize {
                got: x.len(),
                want: self.input_size(),
            });
        }
        let batch = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("shape matches");
        Ok(self.forward_batch(&batch).row(0).to_vec())
    }

    /// Forward pass over a `(batch, input_size)` matrix.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        let layers = self.weights.len();
        let mut a = x.clone();
        for l in 0..layers {
            let mut z = a.dot(&self.weights[l]) + &self.biases[l];
            if l + 1 < layers {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            a = z;
        }
        a
    }

    /// Mean squared error of the prediction for one sample (mean over
    /// output dimensions).
    pub fn loss(&self, x: &[f64], target: &[f64]) -> Result<f64, NetError> {
        let out = self.forward(x)?;
        if target.len() != out.len() {
            return Err(NetError::TargetSize {
                got: target.len(),
                want: out.len(),
            });
        }
        let sum: f64 = out
            .iter()
            .zip(target)
            .map(|(o, t)| (o - t) * (o - t))
            .sum();
        Ok(sum / out.len() as f64)
    }

    /// Exact backpropagation gradients of the MSE loss for one sample.
    pub fn grad(&self, x: &[f64], target: &[f64]) -> Result<(Gradients, f64), NetError> {
        if x.len() != self.input_size() {
            return Err(NetError::InputSize {
                got: x.len(),
                want: self.input_size(),
            });
        }
        if target.len() != self.output_size() {
            return Err(NetError::TargetSize {
                got: target.len(),
                want: self.output_size(),
            });
        }
        let bx = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("shape matches");
        let bt = Array2::from_shape_vec((1, target.len()), target.to_vec()).expect("shape matches");
        Ok(self.grad_batch(&bx, &bt))
    }

    /// Backprop over a batch; the loss is the mean over batch and output
    /// dimensions, so gradients scale accordingly.
    fn grad_batch(&self, x: &Array2<f64>, target: &Array2<f64>) -> (Gradients, f64) {
        let layers = self.weights.len();
        // Forward, keeping pre-activations and activations.
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(layers);
        let mut act: Vec<Array2<f64>> = Vec::with_capacity(layers + 1);
        act.push(x.clone());
        for l in 0..layers {
            let z = act[l].dot(&self.weights[l]) + &self.biases[l];
            let a = if l + 1 < layers {
                z.mapv(|v| self.activation.apply(v))
            } else {
                z.clone()
            };
            pre.push(z);
            act.push(a);
        }
        let output = &act[layers];
        let batch = x.nrows() as f64;
        let dims = self.output_size() as f64;
        let diff = output - target;
        let loss = diff.mapv(|v| v * v).sum() / (batch * dims);

        let mut grads_w: Vec<Array2<f64>> = self
            .weights
            .iter()
            .map(|w| Array2::zeros(w.raw_dim()))
            .collect();
        let mut grads_b: Vec<Array1<f64>> = self
            .biases
            .iter()
            .map(|b| Array1::zeros(b.raw_dim()))
            .collect();

        let mut delta = diff.mapv(|v| 2.0 * v / (batch * dims));
        for l in (0..layers).rev() {
            grads_w[l] = act[l].t().dot(&delta);
            grads_b[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let back = delta.dot(&self.weights[l].t());
                delta = back * pre[l - 1].mapv(|v| self.activation.derivative(v));
            }
        }
        (
            Gradients {
                weights: grads_w,
                biases: grads_b,
            },
            loss,
        )
    }

    /// Mini-batch gradient descent with seeded shuffling. Returns the
    /// per-epoch loss trace (mean of the pre-update batch losses).
    pub fn train(
        &mut self,
        data: &[(Vec<f64>, Vec<f64>)],
        cfg: &TrainConfig,
    ) -> Result<Vec<f64>, NetError> {
        if data.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        let d_in = self.input_size();
        let d_out = self.output_size();
        for (i, (x, t)) in data.iter().enumerate() {
            if x.len() != d_in || t.len() != d_out {
                return Err(NetError::BadSample { index: i });
            }
        }
        let n = data.len();
        let batch_size = cfg.batch_size.max(1).min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut lr = cfg.learning_rate;
        let mut history = Vec::with_capacity(cfg.epochs);

        let mut bx = Array2::zeros((batch_size, d_in));
        let mut bt = Array2::zeros((batch_size, d_out));
        for epoch in 0..cfg.epochs {
            if epoch > 0 && cfg.decay_every > 0 && epoch % cfg.decay_every == 0 {
                lr /= cfg.lr_decay_factor;
            }
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(batch_size) {
                let (gx, gt, loss) = if chunk.len() == batch_size {
                    for (row, &idx) in chunk.iter().enumerate() {
                        bx.row_mut(row).assign(&Array1::from_vec(data[idx].0.clone()));
                        bt.row_mut(row).assign(&Array1::from_vec(data[idx].1.clone()));
                    }
                    let (g, loss) = self.grad_batch(&bx, &bt);
                    (g.weights, g.biases, loss)
                } else {
                    let mut px = Array2::zeros((chunk.len(), d_in));
                    let mut pt = Array2::zeros((chunk.len(), d_out));
                    for (row, &idx) in chunk.iter().enumerate() {
                        px.row_mut(row).assign(&Array1::from_vec(data[idx].0.clone()));
                        pt.row_mut(row).assign(&Array1::from_vec(data[idx].1.clone()));
                    }
                    let (g, loss) = self.grad_batch(&px, &pt);
                    (g.weights, g.biases, loss)
                };
                for l in 0..self.weights.len() {
                    self.weights[l].scaled_add(-lr, &gx[l]);
                    self.biases[l].scaled_add(-lr, &gt[l]);
                }
                loss_sum += loss;
                batches += 1;
            }
            history.push(loss_sum / batches as f64);
        }
        Ok(history)
    }

    /// Mean MSE over a dataset, without touching parameters.
    pub fn dataset_loss(&self, data: &[(Vec<f64>, Vec<f64>)]) -> Result<f64, NetError> {
        if data.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        let mut sum = 0.0;
        for (x, t) in data {
            sum += self.loss(x, t)?;
        }
        Ok(sum / data.len() as f64)
    }

    /// Checkpoint bytes: magic, version, activation tag, layer sizes, then
    /// row-major parameters per layer. Byte-stable given the same parameters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.push(self.activation.tag());
        buf.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.layer_sizes {
            buf.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for l in 0..self.weights.len() {
            for w in self.weights[l].iter() {
                buf.extend_from_slice(&w.to_le_bytes());
            }
            for b in self.biases[l].iter() {
                buf.extend_from_slice(&b.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let mut cursor = 0usize;
        let take = |cursor: &mut usize, n: usize| -> Result<&[u8], NetError> {
            if *cursor + n > bytes.len() {
                return Err(NetError::Format("unexpected end of checkpoint".into()));
            }
            let slice = &bytes[*cursor..*cursor + n];
            *cursor += n;
            Ok(slice)
        };
        if take(&mut cursor, 4)? != CHECKPOINT_MAGIC {
            return Err(NetError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(NetError::Format(format!("unsupported version {version}")));
        }
        let activation = Activation::from_tag(take(&mut cursor, 1)?[0])?;
        let n_sizes = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        if n_sizes < 2 {
            return Err(NetError::Format("fewer than two layer sizes".into()));
        }
        let mut layer_sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            let s = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
            if s == 0 {
                return Err(NetError::Format("zero layer size".into()));
            }
            layer_sizes.push(s);
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut wdata = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_in * fan_out {
                wdata.push(f64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()));
            }
            let mut bdata = Vec::with_capacity(fan_out);
            for _ in 0..fan_out {
                bdata.push(f64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()));
            }
            weights.push(Array2::from_shape_vec((fan_in, fan_out), wdata).expect("shape matches"));
            biases.push(Array1::from_vec(bdata));
        }
        if cursor != bytes.len() {
            return Err(NetError::Format("trailing bytes in checkpoint".into()));
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            activation,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
