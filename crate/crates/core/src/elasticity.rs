//! Sigmoid offer-response curves and the offer-elasticity of purchase
//! probability derived from them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{BiweeklySeries, ConsumerItemKey};

/// Periods making up the 4-week lookback.
pub const LOOKBACK_PERIODS: usize = 2;
const Y_CLAMP: f64 = 1e-6;
const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum ElasticityError {
    #[error("sigmoid fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("sigmoid fit is singular: all offers equal {0}")]
    Singular(f64),
    #[error("non-finite fit input")]
    NonFinite,
    #[error("no offer history for {consumer_id}/{item_id}")]
    NoReferenceOffer { consumer_id: String, item_id: String },
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFit {
    pub category: String,
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub iterations: usize,
}

impl SigmoidFit {
    pub fn predict(&self, offer: f64) -> f64 {
        sigmoid(self.a * offer + self.b)
    }

    pub fn elasticity_at(&self, offer: f64) -> f64 {
        elasticity(self.a, offer, self.predict(offer))
    }
}

fn ssr(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
    points.iter().map(|&(k, y)| (sigmoid(a * k + b) - y).powi(2)).sum()
}

/// Least-squares sigmoid fit on the probability scale by damped
/// Gauss-Newton, started from a straight-line fit of `logit(y)` on `k`.
/// Targets are clamped to `[1e-6, 1 - 1e-6]`. `category` is left empty.
pub fn fit_sigmoid(points: &[(f64, f64)]) -> Result<SigmoidFit, ElasticityError> {
    if points.len() < 3 {
        return Err(ElasticityError::TooFewPoints(points.len()));
    }
    if points.iter().any(|(k, y)| !k.is_finite() || !y.is_finite()) {
        return Err(ElasticityError::NonFinite);
    }
    let pts: Vec<(f64, f64)> = points.iter().map(|&(k, y)| (k, y.clamp(Y_CLAMP, 1.0 - Y_CLAMP))).collect();
    let n = pts.len() as f64;

    let k_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - k_mean).powi(2)).sum();
    if sxx <= f64::EPSILON * k_mean.abs().max(1.0) * n {
        return Err(ElasticityError::Singular(pts[0].0));
    }
    let logit = |y: f64| (y / (1.0 - y)).ln();
    let z_mean = pts.iter().map(|p| logit(p.1)).sum::<f64>() / n;
    let sxz: f64 = pts.iter().map(|p| (p.0 - k_mean) * (logit(p.1) - z_mean)).sum();
    let mut a = sxz / sxx;
    let mut b = z_mean - a * k_mean;

    let mut cost = ssr(&pts, a, b);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (mut h00, mut h01, mut h11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(k, y) in &pts {
            let f = sigmoid(a * k + b);
            let d = f * (1.0 - f);
            let (j0, j1) = (d * k, d);
            let r = f - y;
            h00 += j0 * j0;
            h01 += j0 * j1;
            h11 += j1 * j1;
            g0 += j0 * r;
            g1 += j1 * r;
        }
        let mut accepted = false;
        let mut small = false;
        while lambda < 1e16 {
            let (m00, m11) = (h00 * (1.0 + lambda), h11 * (1.0 + lambda));
            let det = m00 * m11 - h01 * h01;
            if det.abs() > 0.0 && det.is_finite() {
                let da = -(m11 * g0 - h01 * g1) / det;
                let db = -(m00 * g1 - h01 * g0) / det;
                let trial = ssr(&pts, a + da, b + db);
                small = da.hypot(db) < STEP_TOLERANCE * (a.hypot(b) + STEP_TOLERANCE);
                if trial < cost {
                    a += da;
                    b += db;
                    cost = trial;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    break;
                }
                if small {
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted || small {
            break;
        }
    }

    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - y_mean).powi(2)).sum();
    let flat = pts.iter().all(|p| p.1 == pts[0].1);
    let r_squared = if !flat && ss_tot > 0.0 { 1.0 - cost / ss_tot } else { 0.0 };
    Ok(SigmoidFit { category: String::new(), a, b, r_squared, n_points: pts.len(), iterations })
}

/// Offer-elasticity of purchase probability on the sigmoid at offer `k`.
pub fn elasticity(a: f64, k: f64, f_k: f64) -> f64 {
    a * k * (1.0 - f_k)
}

/// Fractional response `(df / f) / (dk / k)` by a forward difference.
pub fn numeric_elasticity(a: f64, b: f64, k: f64) -> f64 {
    let h = 1e-6 * k;
    let f = sigmoid(a * k + b);
    ((sigmoid(a * (k + h) + b) - f) / f) / (h / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfferSource {
    Last4,
    Historical,
    Cohort,
    CategoryFallback,
}

impl OfferSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Last4 => "last4",
            Self::Historical => "historical",
            Self::Cohort => "cohort",
            Self::CategoryFallback => "category_fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOffer {
    pub key: ConsumerItemKey,
    pub k: f64,
    pub source: OfferSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Mean {
    sum: f64,
    count: u64,
}

impl Mean {
    fn add(&mut self, (sum, count): (f64, u32)) {
        self.sum += sum;
        self.count += u64::from(count);
    }

    fn value(self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Periods since the first purchase before `as_of`.
pub fn pair_age(series: &BiweeklySeries, as_of: usize) -> Option<usize> {
    let end = as_of.min(series.len());
    series.labels[..end].iter().position(|&l| l == 1).map(|first| as_of - first)
}

fn lookback(as_of: usize) -> std::ops::Range<usize> {
    as_of.saturating_sub(LOOKBACK_PERIODS)..as_of
}

/// Non-zero offer statistics of one category as of a period, for the
/// cohort and category-wide steps of the reference-offer cascade.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryCohort {
    pub as_of: usize,
    by_age: BTreeMap<usize, Mean>,
    all: Mean,
}

impl CategoryCohort {
    pub fn build<'a>(series: impl IntoIterator<Item = &'a BiweeklySeries>, as_of: usize) -> Self {
        let mut c = Self { as_of, ..Self::default() };
        for s in series {
            c.all.add(s.promo_totals(0..as_of));
            if let Some(age) = pair_age(s, as_of) {
                c.by_age.entry(age).or_default().add(s.promo_totals(lookback(as_of)));
            }
        }
        c
    }

    pub fn cohort_mean(&self, age: usize) -> Option<f64> {
        self.by_age.get(&age).and_then(|m| m.value())
    }

    pub fn category_mean(&self) -> Option<f64> {
        self.all.value()
    }
}

/// First available of: the pair's non-zero offers over the last 4 weeks,
/// its non-zero offers over all history, the last-4-week non-zero offers of
/// same-age pairs in the category, and the category's historical non-zero
/// offers. Means are over transactions.
pub fn reference_offer(series: &BiweeklySeries, cohort: &CategoryCohort) -> Result<ReferenceOffer, ElasticityError> {
    let as_of = cohort.as_of;
    let mut recent = Mean::default();
    recent.add(series.promo_totals(lookback(as_of)));
    let mut history = Mean::default();
    history.add(series.promo_totals(0..as_of));
    let found = recent
        .value()
        .map(|k| (k, OfferSource::Last4))
        .or_else(|| history.value().map(|k| (k, OfferSource::Historical)))
        .or_else(|| {
            pair_age(series, as_of).and_then(|age| cohort.cohort_mean(age)).map(|k| (k, OfferSource::Cohort))
        })
        .or_else(|| cohort.category_mean().map(|k| (k, OfferSource::CategoryFallback)));
    match found {
        Some((k, source)) => Ok(ReferenceOffer { key: series.key.clone(), k, source }),
        None => Err(ElasticityError::NoReferenceOffer {
            consumer_id: series.key.consumer_id.clone(),
            item_id: series.key.item_id.clone(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityRecord {
    pub key: ConsumerItemKey,
    pub k: f64,
    pub source: OfferSource,
    pub f_k: f64,
    pub epsilon: f64,
}

impl ElasticityRecord {
    pub fn new(reference: ReferenceOffer, fit: &SigmoidFit, f_k: f64) -> Self {
        Self {
            epsilon: elasticity(fit.a, reference.k, f_k),
            key: reference.key,
            k: reference.k,
            source: reference.source,
            f_k,
        }
    }
}
