//! Mini-batch training with Adam or RMSProp, cyclical or plateau learning
//! rates, stochastic weight averaging and validation-weighted checkpoint
//! averaging.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{backward_refs, bce_loss, forward, NetworkConfig, NetworkParams};
use super::TcnError;
use crate::featurize::SampleRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheduler {
    Constant,
    /// Triangular cycle with one half-cycle per epoch.
    Cyclical { base_lr: f64, max_lr: f64 },
    /// Scales the rate by `factor` after `patience` epochs without a new
    /// best validation loss, never going below `min_lr`.
    Plateau { min_lr: f64, factor: f64, patience: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub scheduler: Scheduler,
    pub swa_lr: f64,
    /// First epoch (0-based) whose weights enter the SWA average.
    pub swa_start_epoch: Option<usize>,
    pub n_checkpoints_to_average: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            scheduler: Scheduler::Cyclical { base_lr: 1e-6, max_lr: 1e-3 },
            swa_lr: 1e-3,
            swa_start_epoch: Some(22),
            n_checkpoints_to_average: 3,
            epochs: 30,
            batch_size: 64,
            seed: 42,
        }
    }
}

impl TrainConfig {
    // negated comparisons so NaN fails too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), TcnError> {
        let fail = |m: &str| Err(TcnError::Config(m.to_string()));
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.swa_lr > 0.0) {
            return fail("learning rates must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight_decay must be non-negative");
        }
        match self.scheduler {
            Scheduler::Cyclical { base_lr, max_lr } if !(base_lr > 0.0 && base_lr <= max_lr) => {
                fail("cyclical schedule needs 0 < base_lr <= max_lr")
            }
            Scheduler::Plateau { min_lr, factor, .. } if !(min_lr > 0.0 && factor > 0.0 && factor < 1.0) => {
                fail("plateau schedule needs min_lr > 0 and 0 < factor < 1")
            }
            _ => Ok(()),
        }
    }
}

/// Triangular cyclical rate at `iteration` with half-cycle `step_size`.
pub fn cyclical_lr(iteration: usize, step_size: usize, base_lr: f64, max_lr: f64) -> f64 {
    let step = step_size.max(1) as f64;
    let it = iteration as f64;
    let cycle = (1.0 + it / (2.0 * step)).floor();
    let x = (it / step - 2.0 * cycle + 1.0).abs();
    base_lr + (max_lr - base_lr) * (1.0 - x).max(0.0)
}

#[derive(Debug, Clone)]
pub struct PlateauState {
    lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauState {
    pub fn new(lr: f64) -> Self {
        Self { lr, best: f64::INFINITY, bad_epochs: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records an epoch's validation loss and returns the next rate.
    pub fn step(&mut self, loss: f64, min_lr: f64, factor: f64, patience: usize) -> f64 {
        if loss < self.best * (1.0 - 1e-4) {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs > patience {
                self.lr = (self.lr * factor).max(min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

struct Optimizer {
    kind: OptimizerKind,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const ALPHA: f64 = 0.99;
    const EPS: f64 = 1e-8;

    fn new(kind: OptimizerKind, weight_decay: f64, n: usize) -> Self {
        Self { kind, weight_decay, m: vec![0.0; n], v: vec![0.0; n], steps: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.steps += 1;
        match self.kind {
            OptimizerKind::Adam => {
                let c1 = 1.0 - Self::BETA1.powi(self.steps);
                let c2 = 1.0 - Self::BETA2.powi(self.steps);
                for i in 0..params.len() {
                    let g = grad[i] + self.weight_decay * params[i];
                    self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
                    self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
                    params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
                }
            }
            OptimizerKind::Rmsprop => {
                for i in 0..params.len() {
                    let g = grad[i] + self.weight_decay * params[i];
                    self.v[i] = Self::ALPHA * self.v[i] + (1.0 - Self::ALPHA) * g * g;
                    params[i] -= lr * g / (self.v[i].sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// Equal average of collected weight vectors.
#[derive(Debug, Clone, Default)]
pub struct SwaAverage {
    sum: Vec<f64>,
    count: usize,
}

impl SwaAverage {
    pub fn collect(&mut self, weights: &[f64]) {
        if self.sum.is_empty() {
            self.sum = vec![0.0; weights.len()];
        }
        for (s, w) in self.sum.iter_mut().zip(weights) {
            *s += w;
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn average(&self) -> Option<Vec<f64>> {
        (self.count > 0).then(|| self.sum.iter().map(|s| s / self.count as f64).collect())
    }
}

/// Convex combination of checkpoints with weights proportional to
/// `1 / validation_loss`. Written as offsets from the first checkpoint so
/// identical checkpoints average to themselves exactly.
pub fn average_checkpoints(checkpoints: &[(f64, &[f64])]) -> Option<Vec<f64>> {
    let (_, first) = *checkpoints.first()?;
    let mut weights: Vec<f64> = if checkpoints.iter().any(|(l, _)| *l <= 0.0) {
        checkpoints.iter().map(|(l, _)| if *l <= 0.0 { 1.0 } else { 0.0 }).collect()
    } else {
        checkpoints.iter().map(|(l, _)| 1.0 / l).collect()
    };
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let mut out = first.to_vec();
    for ((_, values), w) in checkpoints.iter().zip(&weights).skip(1) {
        for ((o, v), f) in out.iter_mut().zip(values.iter()).zip(first) {
            *o += w * (v - f);
        }
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub swa: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// Which weights were returned: `best_checkpoint`, `checkpoint_average`
    /// or `swa`.
    pub selected: String,
    pub final_validation_loss: f64,
}

fn mean_loss(rows: &[SampleRow], params: &NetworkParams) -> Result<f64, TcnError> {
    let p = forward(rows, params)?;
    let y: Vec<u8> = rows.iter().map(|r| r.label).collect();
    bce_loss(&p, &y)
}

pub fn train(
    train_rows: &[SampleRow],
    validation_rows: &[SampleRow],
    network: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainingLog), TcnError> {
    cfg.validate()?;
    if train_rows.is_empty() || validation_rows.is_empty() {
        return Err(TcnError::EmptySplit);
    }
    let mut params = NetworkParams::init(network.clone(), cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut opt = Optimizer::new(cfg.optimizer, cfg.weight_decay, params.values.len());
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let n_batches = train_rows.len().div_ceil(cfg.batch_size);
    let mut plateau = PlateauState::new(cfg.learning_rate);
    let mut swa = SwaAverage::default();
    let keep = cfg.n_checkpoints_to_average.max(1);
    let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0usize;
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let swa_on = cfg.swa_start_epoch.is_some_and(|s| epoch >= s);
        let mut lr = cfg.learning_rate;
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            lr = if swa_on {
                cfg.swa_lr
            } else {
                match cfg.scheduler {
                    Scheduler::Constant => cfg.learning_rate,
                    Scheduler::Cyclical { base_lr, max_lr } => cyclical_lr(iteration, n_batches, base_lr, max_lr),
                    Scheduler::Plateau { .. } => plateau.lr(),
                }
            };
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &train_rows[i]));
            let snapshot = params.clone();
            let (loss, grad) = backward_refs(&batch, &params)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TcnError::Diverged { epoch, last_finite: Box::new(snapshot) });
            }
            opt.step(&mut params.values, &grad, lr);
            if !params.is_finite() {
                return Err(TcnError::Diverged { epoch, last_finite: Box::new(snapshot) });
            }
            loss_sum += loss * chunk.len() as f64;
            iteration += 1;
        }
        let validation_loss = mean_loss(validation_rows, &params)?;
        if !validation_loss.is_finite() {
            return Err(TcnError::Diverged { epoch, last_finite: Box::new(params) });
        }
        if swa_on {
            swa.collect(&params.values);
        } else if let Scheduler::Plateau { min_lr, factor, patience } = cfg.scheduler {
            plateau.step(validation_loss, min_lr, factor, patience);
        }
        best.push((validation_loss, params.values.clone()));
        best.sort_by(|a, b| a.0.total_cmp(&b.0));
        best.truncate(keep);
        epochs.push(EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / train_rows.len() as f64,
            validation_loss,
            swa: swa_on,
        });
    }

    let mut candidates: Vec<(&str, Vec<f64>)> = vec![("best_checkpoint", best[0].1.clone())];
    if best.len() > 1 {
        let refs: Vec<(f64, &[f64])> = best.iter().map(|(l, v)| (*l, v.as_slice())).collect();
        if let Some(avg) = average_checkpoints(&refs) {
            candidates.push(("checkpoint_average", avg));
        }
    }
    if let Some(avg) = swa.average() {
        candidates.push(("swa", avg));
    }
    let mut chosen: Option<(String, f64, Vec<f64>)> = None;
    for (name, values) in candidates {
        let p = NetworkParams { config: network.clone(), values };
        let loss = mean_loss(validation_rows, &p)?;
        if loss.is_finite() && chosen.as_ref().is_none_or(|(_, l, _)| loss < *l) {
            chosen = Some((name.to_string(), loss, p.values));
        }
    }
    let (selected, final_validation_loss, values) = chosen.expect("best checkpoint has a finite loss");
    params.values = values;
    Ok((params, TrainingLog { epochs, selected, final_validation_loss }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_checkpoints_average_exactly() {
        let w = vec![0.1, -0.3, 7.25, 1e-9];
        let avg = average_checkpoints(&[(0.2, &w), (0.7, &w), (0.05, &w)]).unwrap();
        assert_eq!(avg, w);
    }

    #[test]
    fn lower_loss_weighs_more() {
        let a = vec![0.0];
        let b = vec![1.0];
        let avg = average_checkpoints(&[(0.1, &a), (0.3, &b)]).unwrap();
        // weights 10/(10+10/3)=0.75 and 0.25
        assert!((avg[0] - 0.25).abs() < 1e-15);
        assert!(average_checkpoints(&[]).is_none());
    }

    #[test]
    fn swa_is_arithmetic_mean() {
        let vs = [vec![1.0, 2.0], vec![3.0, -2.0], vec![0.5, 0.25]];
        let mut swa = SwaAverage::default();
        assert!(swa.average().is_none());
        for v in &vs {
            swa.collect(v);
        }
        let expect: Vec<f64> = (0..2).map(|i| (vs[0][i] + vs[1][i] + vs[2][i]) / 3.0).collect();
        assert_eq!(swa.average().unwrap(), expect);
    }

    #[test]
    fn cyclical_rate_shape() {
        let (base, max) = (1e-6, 1e-3);
        assert_eq!(cyclical_lr(0, 10, base, max), base);
        assert!((cyclical_lr(10, 10, base, max) - max).abs() < 1e-18);
        assert!((cyclical_lr(20, 10, base, max) - base).abs() < 1e-18);
        assert!((cyclical_lr(5, 10, base, max) - (base + max) / 2.0).abs() < 1e-15);
        for it in 0..100 {
            let lr = cyclical_lr(it, 7, base, max);
            assert!(lr >= base && lr <= max);
        }
    }

    #[test]
    fn plateau_halves_after_patience() {
        let mut p = PlateauState::new(1e-3);
        p.step(1.0, 1e-6, 0.5, 3);
        for _ in 0..3 {
            assert_eq!(p.step(1.0, 1e-6, 0.5, 3), 1e-3);
        }
        assert_eq!(p.step(1.0, 1e-6, 0.5, 3), 5e-4);
        let mut p = PlateauState::new(2e-6);
        p.step(1.0, 1e-6, 0.5, 0);
        p.step(1.0, 1e-6, 0.5, 0);
        assert_eq!(p.step(1.0, 1e-6, 0.5, 0), 1e-6);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.scheduler = Scheduler::Cyclical { base_lr: 1e-2, max_lr: 1e-3 };
        assert!(c.validate().is_err());
        c = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
    }
}
