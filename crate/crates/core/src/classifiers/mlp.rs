//! A small fully connected classifier head trained with Adam.
//!
//! Hidden layers use ReLU, the output layer is linear (logits). Training
//! minimizes mean cross-entropy over mini-batches. Weight decay is the
//! coupled L2 form: `wd * param` is added to each gradient before the Adam
//! moments are updated. The learning rate is multiplied by `lr_gamma` every
//! `lr_step` epochs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("input has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label index {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("input row {row} contains a non-finite value")]
    NonFiniteInput { row: usize },
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    dims: Vec<usize>,
    /// Row-major `dims[l+1] x dims[l]` matrices, one per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Gradient buffers shaped like an [`MlpHead`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpHead {
    pub fn new(dims: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self, TrainError> {
        let head = MlpHead { dims, weights, biases };
        head.validate()?;
        Ok(head)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidNetwork(m));
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return bad(format!(
                "layer sizes {:?} need at least two positive entries",
                self.dims
            ));
        }
        let layers = self.dims.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return bad(format!("expected {layers} weight and bias blocks"));
        }
        for l in 0..layers {
            if self.weights[l].len() != self.dims[l] * self.dims[l + 1] {
                return bad(format!("weight block {l} has wrong size"));
            }
            if self.biases[l].len() != self.dims[l + 1] {
                return bad(format!("bias block {l} has wrong size"));
            }
        }
        if self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn init(dims: &[usize], rng: &mut impl Rng) -> Result<Self, TrainError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(TrainError::InvalidNetwork(format!("bad layer sizes {dims:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let bound = 1.0 / (pair[0] as f64).sqrt();
            weights.push(
                (0..pair[0] * pair[1])
                    .map(|_| rng.random_range(-bound..bound))
                    .collect(),
            );
            biases.push((0..pair[1]).map(|_| rng.random_range(-bound..bound)).collect());
        }
        Ok(MlpHead {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("validated")
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn check_input(&self, x: &[f64]) -> Result<(), TrainError> {
        if x.len() != self.input_dim() {
            return Err(TrainError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Activations per layer: input, hidden outputs (post-ReLU), logits.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let input = &acts[l];
            let w = &self.weights[l];
            let mut z: Vec<f64> = (0..n_out)
                .map(|i| {
                    let row = &w[i * n_in..(i + 1) * n_in];
                    self.biases[l][i] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if l + 1 < self.layers() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, TrainError> {
        self.check_input(x)?;
        Ok(self.activations(x).pop().expect("at least one layer"))
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[usize]) -> Result<(f64, Gradients), TrainError> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(TrainError::EmptyDataset);
        }
        let classes = self.output_dim();
        let mut grads = Gradients {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        let scale = 1.0 / xs.len() as f64;
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            self.check_input(x)?;
            if y >= classes {
                return Err(TrainError::LabelOutOfRange { label: y, classes });
            }
            let acts = self.activations(x);
            let (sample_loss, mut delta) = cross_entropy(acts.last().expect("logits"), y);
            loss += sample_loss * scale;
            delta.iter_mut().for_each(|d| *d *= scale);
            for l in (0..self.layers()).rev() {
                let n_in = self.dims[l];
                let input = &acts[l];
                for (i, &d) in delta.iter().enumerate() {
                    grads.biases[l][i] += d;
                    let row = &mut grads.weights[l][i * n_in..(i + 1) * n_in];
                    row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                }
                if l > 0 {
                    let w = &self.weights[l];
                    delta = (0..n_in)
                        .map(|j| {
                            if input[j] <= 0.0 {
                                return 0.0;
                            }
                            delta.iter().enumerate().map(|(i, d)| d * w[i * n_in + j]).sum()
                        })
                        .collect();
                }
            }
        }
        Ok((loss, grads))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, TrainError> {
        let logits = self.forward(x)?;
        Ok(argmax_index(&logits))
    }
}

/// First index of the maximum.
fn argmax_index(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Loss and `softmax - onehot` for one sample.
fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() + max - logits[target];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[target] -= 1.0;
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub seed: u64,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Keep the weights with the best validation accuracy instead of the
    /// final ones. Needs a validation set.
    pub select_best_validation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 512,
            learning_rate: 1e-4,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            weight_decay: 1e-3,
            lr_step: 10,
            lr_gamma: 0.5,
            seed: 0,
            hidden: vec![256],
            select_best_validation: false,
        }
    }
}

impl TrainConfig {
    /// Learning rate in effect during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_gamma.powi((epoch / self.lr_step) as i32)
    }

    fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.lr_step == 0 {
            return bad("epochs, batch_size and lr_step must be positive");
        }
        if !(self.learning_rate > 0.0 && self.lr_gamma > 0.0 && self.adam_eps > 0.0) {
            return bad("learning_rate, lr_gamma and adam_eps must be positive");
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 || self.hidden.contains(&0) {
            return bad("weight_decay must be non-negative and hidden widths positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean loss over the epoch's mini-batches, measured before each update.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    /// Mean training loss of the freshly initialized network.
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose weights were returned.
    pub selected_epoch: usize,
}

/// Dense inputs with class indices.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub inputs: &'a [Vec<f64>],
    pub labels: &'a [usize],
}

impl Dataset<'_> {
    fn len(&self) -> usize {
        self.inputs.len()
    }
}

/// Mean cross-entropy and accuracy of `head` on `data`.
pub fn evaluate_head(head: &MlpHead, data: Dataset<'_>) -> Result<(f64, f64), TrainError> {
    if data.len() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, &y) in data.inputs.iter().zip(data.labels) {
        let logits = head.forward(x)?;
        if y >= logits.len() {
            return Err(TrainError::LabelOutOfRange {
                label: y,
                classes: logits.len(),
            });
        }
        loss += cross_entropy(&logits, y).0;
        correct += usize::from(argmax_index(&logits) == y);
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(head: &MlpHead) -> Self {
        let zeros = Gradients {
            weights: head.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: head.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, head: &mut MlpHead, grads: &Gradients, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = cfg.adam_betas;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                let g = g[i] + cfg.weight_decay * p[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        };
        for l in 0..head.weights.len() {
            update(
                &mut head.weights[l],
                &grads.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
            );
            update(
                &mut head.biases[l],
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
            );
        }
    }
}

/// Train a fresh head of shape `[input, hidden..., classes]`.
pub fn train_mlp(
    train: Dataset<'_>,
    validation: Option<Dataset<'_>>,
    classes: usize,
    cfg: &TrainConfig,
) -> Result<(MlpHead, TrainingCurve), TrainError> {
    cfg.validate()?;
    if train.len() == 0 || train.len() != train.labels.len() {
        return Err(TrainError::EmptyDataset);
    }
    let input = train.inputs[0].len();
    for x in train
        .inputs
        .iter()
        .chain(validation.iter().flat_map(|v| v.inputs.iter()))
    {
        if x.len() != input {
            return Err(TrainError::DimensionMismatch {
                expected: input,
                got: x.len(),
            });
        }
    }
    let all_rows = train
        .inputs
        .iter()
        .chain(validation.iter().flat_map(|v| v.inputs.iter()));
    if let Some(row) = all_rows.clone().position(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(TrainError::NonFiniteInput { row });
    }
    if let Some(&label) = train.labels.iter().find(|&&y| y >= classes) {
        return Err(TrainError::LabelOutOfRange { label, classes });
    }
    let validation = validation.filter(|v| v.len() > 0);
    if cfg.select_best_validation && validation.is_none() {
        return Err(TrainError::InvalidConfig(
            "best-validation selection needs a validation set".into(),
        ));
    }

    let mut dims = vec![input];
    dims.extend(&cfg.hidden);
    dims.push(classes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut head = MlpHead::init(&dims, &mut rng)?;
    let mut adam = Adam::new(&head);
    let (initial_train_loss, _) = evaluate_head(&head, train)?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, MlpHead)> = None;
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train.inputs[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            for (x, &y) in xs.iter().zip(&ys) {
                correct += usize::from(argmax_index(&head.activations(x).pop().expect("logits")) == y);
            }
            let (loss, grads) = head.loss_and_grad(&xs, &ys)?;
            let grads_finite = grads
                .weights
                .iter()
                .chain(&grads.biases)
                .flatten()
                .all(|g| g.is_finite());
            if !loss.is_finite() || !grads_finite {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: batch_no,
                    loss,
                });
            }
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut head, &grads, lr, cfg);
        }
        let (val_loss, val_accuracy) = match validation {
            Some(v) => {
                let (l, a) = evaluate_head(&head, v)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        if cfg.select_best_validation {
            let acc = val_accuracy.expect("validation present");
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, head.clone()));
            }
        }
        epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss,
            val_accuracy,
        });
    }
    let (head, selected_epoch) = match best {
        Some((_, epoch, head)) => (head, epoch),
        None => (head, cfg.epochs - 1),
    };
    head.validate()?;
    Ok((
        head,
        TrainingCurve {
            initial_train_loss,
            epochs,
            selected_epoch,
        },
    ))
}
