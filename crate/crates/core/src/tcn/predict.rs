use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::network::{forward, NetworkParams};
use super::TcnError;
use crate::featurize::{sample_at, FeatureSpec};
use crate::ingest::BiweeklySeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub consumer_id: String,
    pub item_id: String,
    pub category: String,
    pub period_index: usize,
    pub probability: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    pub rows: Vec<Prediction>,
}

impl PredictionSet {
    /// Rows grouped by consumer, in row order within each group.
    pub fn by_consumer(&self) -> BTreeMap<&str, Vec<&Prediction>> {
        let mut out: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.consumer_id.as_str()).or_default().push(r);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Probabilities for every series at every target period it can be scored
/// at (`n_lags <= period < len`). Levels unseen when `spec` was fitted use
/// the reserved unknown index.
pub fn predict(
    series: &[BiweeklySeries],
    spec: &FeatureSpec,
    params: &NetworkParams,
    periods: &[usize],
) -> Result<PredictionSet, TcnError> {
    let mut samples = Vec::new();
    for s in series {
        for &p in periods {
            if p >= spec.n_lags && p < s.len() {
                samples.push(sample_at(s, spec, p)?);
            }
        }
    }
    let probs = forward(&samples, params)?;
    let rows = samples
        .into_iter()
        .zip(probs)
        .map(|(s, probability)| Prediction {
            consumer_id: s.key.consumer_id,
            item_id: s.key.item_id,
            category: s.key.category,
            period_index: s.period_index,
            probability,
            label: s.label,
        })
        .collect();
    Ok(PredictionSet { rows })
}
