//! Training loop: decoupled-weight-decay Adam over per-day batches,
//! validation-driven early stopping, and plateau-triggered learning-rate
//! halving. Batches run in chronological order with no shuffling, so a
//! config and seed fully determine every float the loop produces.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::HeteroGraph;
use crate::metrics::daily_ic;
use crate::rng::Rng;
use crate::model::{
    evaluate_sample, init_params, step_sample, ModelConfig, ModelError, ModelParams,
    PreparedSample,
};

/// Consecutive non-improving epochs before the learning rate halves.
pub const PLATEAU_PATIENCE: usize = 5;
/// The learning rate never drops below this.
pub const LR_FLOOR: f64 = 1e-6;
/// Plateau multiplier.
pub const LR_FACTOR: f64 = 0.5;

#[derive(Debug)]
pub enum TrainError {
    Model(ModelError),
    /// A loss went non-finite; training state is unusable past this point.
    Diverged { epoch: usize, loss: f64 },
    EmptySplit,
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Model(e) => write!(f, "{e}"),
            TrainError::Diverged { epoch, loss } => {
                write!(f, "training diverged at epoch {epoch} (loss {loss})")
            }
            TrainError::EmptySplit => write!(f, "training and validation both need samples"),
        }
    }
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

/// Adam with decoupled weight decay. Moment buffers mirror the parameter
/// traversal order of `ModelParams::slices_mut`, which is fixed.
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    b1t: f64,
    b2t: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64, params: &mut ModelParams) -> Self {
        let sizes: Vec<usize> = params.slices_mut().iter().map(|s| s.len()).collect();
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            b1t: 1.0,
            b2t: 1.0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update from accumulated gradients. Weight decay pulls directly on
    /// the parameter, outside the adaptive rescaling.
    pub fn step(&mut self, params: &mut ModelParams, grads: &mut ModelParams) {
        self.t += 1;
        self.b1t *= self.beta1;
        self.b2t *= self.beta2;
        let c1 = 1.0 - self.b1t;
        let c2 = 1.0 - self.b2t;
        for ((p, g), (m, v)) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices_mut())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), m.len(), "optimizer state must match parameters");
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                p[k] -= self.lr * (mhat / (libm::sqrt(vhat) + self.eps) + self.weight_decay * p[k]);
            }
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total objective over training days, at the weights seen by each
    /// batch (loss before that batch's update).
    pub train_loss: f64,
    /// Mean regression loss over validation days after the epoch's updates.
    pub valid_loss: f64,
    /// Learning rate used for this epoch's updates.
    pub lr: f64,
    /// Mean per-day rank-free correlation on validation days (when defined).
    pub valid_ic: Option<f64>,
}

pub struct TrainOutcome {
    /// Parameters from the best validation epoch, not the last one.
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid: f64,
    pub stopped_early: bool,
}

/// Mean regression loss and mean per-day score correlation on a sample set.
pub fn validation_pass(
    samples: &[PreparedSample],
    graph: &HeteroGraph,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(f64, Option<f64>), TrainError> {
    let mut loss_sum = 0.0;
    let mut ics: Vec<f64> = Vec::new();
    for sample in samples {
        let (fwd, losses) = evaluate_sample(sample, graph, params, config)?;
        loss_sum += losses.pred;
        let mut pred = Vec::new();
        let mut actual = Vec::new();
        for i in 0..fwd.yhat.len() {
            if sample.label_available[i] {
                pred.push(fwd.yhat[i]);
                actual.push(sample.labels[i]);
            }
        }
        if let Some(ic) = daily_ic(&pred, &actual) {
            ics.push(ic);
        }
    }
    let loss = loss_sum / samples.len() as f64;
    let ic = (!ics.is_empty()).then(|| ics.iter().sum::<f64>() / ics.len() as f64);
    Ok((loss, ic))
}

/// Trains from freshly initialized parameters (seeded by the config).
pub fn train(
    train_samples: &[PreparedSample],
    valid_samples: &[PreparedSample],
    graph: &HeteroGraph,
    config: &ModelConfig,
) -> Result<TrainOutcome, TrainError> {
    let params = init_params(config, graph.n_industries())?;
    train_from(params, train_samples, valid_samples, graph, config)
}

/// The full loop from given starting parameters.
///
/// Per epoch: one optimizer step per training day in date order, then a
/// validation pass. Validation improvement means a strictly lower regression
/// loss; the best epoch's parameters are kept. `PLATEAU_PATIENCE` consecutive
/// non-improving epochs halve the learning rate (down to `LR_FLOOR`);
/// `config.patience` of them end training early. Any non-finite loss aborts
/// with `Diverged`.
pub fn train_from(
    mut params: ModelParams,
    train_samples: &[PreparedSample],
    valid_samples: &[PreparedSample],
    graph: &HeteroGraph,
    config: &ModelConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_samples.is_empty() || valid_samples.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let mut opt = AdamW::new(config.learning_rate, config.weight_decay, &mut params);
    let mut best_params = params.clone();
    let mut best_valid = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;
    let mut plateau = 0usize;
    let mut stopped_early = false;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut order_rng = Rng::stream(config.seed, 17);

    for epoch in 1..=config.max_epochs {
        // Fresh seeded pass order per epoch; chronological order would feed
        // correlated adjacent days back to back.
        for i in (1..order.len()).rev() {
            let j = order_rng.below(i as u64 + 1) as usize;
            order.swap(i, j);
        }
        let mut sum = 0.0;
        for &idx in &order {
            let sample = &train_samples[idx];
            let mut grads = params.zeros_like();
            let losses = step_sample(sample, graph, &params, config, &mut grads)?;
            if !losses.total.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    loss: losses.total,
                });
            }
            opt.step(&mut params, &mut grads);
            sum += losses.total;
        }
        let train_loss = sum / train_samples.len() as f64;
        let (valid_loss, valid_ic) = validation_pass(valid_samples, graph, &params, config)?;
        if !valid_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: valid_loss,
            });
        }
        log.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            lr: opt.lr,
            valid_ic,
        });
        if valid_loss < best_valid {
            best_valid = valid_loss;
            best_epoch = epoch;
            best_params = params.clone();
            since_best = 0;
            plateau = 0;
        } else {
            since_best += 1;
            plateau += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
            if plateau >= PLATEAU_PATIENCE {
                let next = opt.lr * LR_FACTOR;
                opt.lr = if next > LR_FLOOR { next } else { LR_FLOOR };
                plateau = 0;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        log,
        best_epoch,
        best_valid,
        stopped_early,
    })
}

/// Renders the log as `epoch,train_loss,valid_loss,lr` CSV text.
pub fn log_to_csv(log: &[EpochRecord]) -> alloc::string::String {
    let mut out = alloc::string::String::from("epoch,train_loss,valid_loss,lr\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.epoch, r.train_loss, r.valid_loss, r.lr
        ));
    }
    out
}
