//! Per-consumer probability cut-offs that maximize F1.
//!
//! With `b` actual purchases, `k` predicted positives and `V` true
//! positives at a cut-off, F1 is `2V / (k + b)`. It only changes where the
//! cut-off crosses an observed probability, so the distinct probabilities
//! are the complete candidate set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::{histogram, Bin};

#[derive(Debug, Error, PartialEq)]
pub enum ThresholdError {
    #[error("{actuals} actuals for {probabilities} probabilities")]
    Length { actuals: usize, probabilities: usize },
    #[error("no predictions for consumer")]
    Empty,
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerPredictions {
    pub consumer_id: String,
    pub actuals: Vec<u8>,
    pub probabilities: Vec<f64>,
}

impl ConsumerPredictions {
    pub fn purchases(&self) -> usize {
        self.actuals.iter().filter(|&&a| a == 1).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub consumer_id: String,
    pub cutoff: f64,
    pub f1: f64,
    /// Predicted positives at the cut-off.
    pub k: usize,
    /// Actual purchases.
    pub b: usize,
    /// True positives at the cut-off.
    pub v: usize,
    /// No actual purchases: F1 is 0 for every cut-off and `cutoff` is a
    /// fallback.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Stats {
    pub k: usize,
    pub b: usize,
    pub v: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl F1Stats {
    pub fn from_counts(k: usize, b: usize, v: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Self { k, b, v, precision: ratio(v, k), recall: ratio(v, b), f1: ratio(2 * v, k + b) }
    }
}

/// Binary decisions `p >= cutoff` and their count.
pub fn decide(probabilities: &[f64], cutoff: f64) -> (Vec<u8>, usize) {
    let d: Vec<u8> = probabilities.iter().map(|&p| u8::from(p >= cutoff)).collect();
    let k = d.iter().map(|&x| x as usize).sum();
    (d, k)
}

pub fn f1_at(actuals: &[u8], probabilities: &[f64], cutoff: f64) -> Result<F1Stats, ThresholdError> {
    check(actuals, probabilities)?;
    let (d, k) = decide(probabilities, cutoff);
    let v = d.iter().zip(actuals).filter(|(&x, &a)| x == 1 && a == 1).count();
    let b = actuals.iter().filter(|&&a| a == 1).count();
    Ok(F1Stats::from_counts(k, b, v))
}

fn check(actuals: &[u8], probabilities: &[f64]) -> Result<(), ThresholdError> {
    if actuals.len() != probabilities.len() {
        return Err(ThresholdError::Length { actuals: actuals.len(), probabilities: probabilities.len() });
    }
    if let Some(&p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(ThresholdError::Probability(p));
    }
    Ok(())
}

/// Largest representable cut-off below 1.
const MAX_CUTOFF: f64 = 1.0 - f64::EPSILON / 2.0;

/// Cut-off in (0, 1) with the highest F1, preferring the largest cut-off on
/// ties. Consumers without purchases come back flagged `degenerate`.
pub fn maximize_threshold(actuals: &[u8], probabilities: &[f64]) -> Result<ThresholdResult, ThresholdError> {
    check(actuals, probabilities)?;
    if actuals.is_empty() {
        return Err(ThresholdError::Empty);
    }
    let b = actuals.iter().filter(|&&a| a == 1).count();
    let mut order: Vec<usize> = (0..probabilities.len()).collect();
    order.sort_by(|&i, &j| probabilities[j].total_cmp(&probabilities[i]));

    let mut best: Option<(f64, usize, usize, f64)> = None;
    let (mut k, mut v) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let p = probabilities[order[i]];
        while i < order.len() && probabilities[order[i]] == p {
            k += 1;
            v += actuals[order[i]] as usize;
            i += 1;
        }
        if p <= 0.0 {
            break;
        }
        let f1 = F1Stats::from_counts(k, b, v).f1;
        if best.is_none_or(|(_, _, _, f)| f1 > f) {
            best = Some((p.min(MAX_CUTOFF), k, v, f1));
        }
    }
    let (cutoff, k, v, f1) = match best {
        Some(x) => x,
        None => {
            let s = f1_at(actuals, probabilities, 0.5)?;
            (0.5, s.k, s.v, s.f1)
        }
    };
    Ok(ThresholdResult { consumer_id: String::new(), cutoff, f1, k, b, v, degenerate: b == 0 })
}

pub fn maximize_for(consumer: &ConsumerPredictions) -> Result<ThresholdResult, ThresholdError> {
    let mut r = maximize_threshold(&consumer.actuals, &consumer.probabilities)?;
    r.consumer_id = consumer.consumer_id.clone();
    Ok(r)
}

/// Gives degenerate consumers the median cut-off of the non-degenerate ones
/// in the group, or 0.5 when there are none, and returns that value.
/// `probabilities` holds each consumer's predictions, aligned with `results`.
pub fn assign_fallback(results: &mut [ThresholdResult], probabilities: &[&[f64]]) -> f64 {
    let mut cutoffs: Vec<f64> = results.iter().filter(|r| !r.degenerate).map(|r| r.cutoff).collect();
    cutoffs.sort_by(f64::total_cmp);
    let fallback = match cutoffs.len() {
        0 => 0.5,
        n if n % 2 == 1 => cutoffs[n / 2],
        n => (cutoffs[n / 2 - 1] + cutoffs[n / 2]) / 2.0,
    };
    for (r, p) in results.iter_mut().zip(probabilities) {
        if r.degenerate {
            r.cutoff = fallback;
            r.k = decide(p, fallback).1;
            r.v = 0;
            r.f1 = 0.0;
        }
    }
    fallback
}

/// Distribution of cut-offs over 20 equal bins of [0, 1].
pub fn cutoff_histogram(results: &[ThresholdResult]) -> Vec<Bin> {
    let values: Vec<f64> = results.iter().map(|r| r.cutoff).collect();
    histogram(&values, 20, 0.0, 1.0)
}
