//! Seeded synthetic transaction logs with a known offer response.
//!
//! Every consumer is exposed to every item in every period. The exposure
//! carries an offer percent in `[0, 50]`, and the consumer buys with
//! probability `1 / (1 + exp(-(a * offer + b)))` using the `(a, b)` of the
//! item's category. Only purchases appear in the transaction log; exposures
//! are returned alongside so tests can check the generating curve.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{TransactionRecord, PERIOD_DAYS};

pub const MAX_SYNTHETIC_OFFER: f64 = 50.0;

const CATEGORY_NAMES: &[&str] = &[
    "Grocery",
    "Pharmaceutical",
    "Bakery",
    "Meat",
    "Seafood",
    "Natural Products",
    "Packaged Meat",
    "Prepared Food",
];
const AGE_BANDS: &[&str] = &["18-25", "26-35", "36-45", "46-55", "56-70", "70+"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{0} must be at least 1")]
    Count(&'static str),
    #[error("expected {expected} category responses, got {got}")]
    Responses { expected: usize, got: usize },
    #[error("offer model parameter out of range: {0}")]
    Offer(String),
}

/// Ground-truth sigmoid response of one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub a: f64,
    pub b: f64,
}

impl Response {
    pub fn probability(&self, offer: f64) -> f64 {
        1.0 / (1.0 + (-(self.a * offer + self.b)).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTruth {
    pub category: String,
    pub a: f64,
    pub b: f64,
}

/// How exposure offers are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OfferModel {
    /// Every exposure gets the same offer.
    Constant { offer: f64 },
    /// Independent uniform draws over `[0, 50]`.
    Uniform,
    /// Each pair gets a uniform anchor in `[0, 50]`; periods add Gaussian
    /// jitter clamped back into range.
    PairAnchored { jitter: f64 },
}

impl Default for OfferModel {
    fn default() -> Self {
        OfferModel::PairAnchored { jitter: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_consumers: usize,
    pub n_items: usize,
    pub n_categories: usize,
    pub periods: usize,
    /// One response per category.
    pub responses: Vec<Response>,
    pub offers: OfferModel,
    pub origin: NaiveDate,
}

impl SyntheticConfig {
    pub fn new(seed: u64, n_consumers: usize, n_items: usize, responses: Vec<Response>, periods: usize) -> Self {
        Self {
            seed,
            n_consumers,
            n_items,
            n_categories: responses.len(),
            periods,
            responses,
            offers: OfferModel::default(),
            origin: NaiveDate::from_ymd_opt(2019, 1, 7).expect("valid date"),
        }
    }
}

/// One consumer-item-period draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exposure {
    pub consumer: usize,
    pub item: usize,
    pub period: usize,
    pub offer: f64,
    pub purchased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub records: Vec<TransactionRecord>,
    pub truth: Vec<CategoryTruth>,
    pub exposures: Vec<Exposure>,
}

pub fn category_name(index: usize) -> String {
    CATEGORY_NAMES
        .get(index)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("Category {index}"))
}

pub fn consumer_name(index: usize) -> String {
    format!("c{index:05}")
}

pub fn item_name(index: usize) -> String {
    format!("i{index:05}")
}

const DEFAULT_RESPONSES: &[(f64, f64)] = &[
    (0.05, -2.0),
    (0.03, -1.5),
    (0.07, -2.5),
    (0.04, -1.0),
    (0.06, -3.0),
    (0.02, -0.5),
    (0.08, -2.0),
    (0.05, -1.0),
];

/// A fixed set of category responses, cycling after eight categories.
pub fn default_responses(n_categories: usize) -> Vec<Response> {
    (0..n_categories)
        .map(|i| {
            let (a, b) = DEFAULT_RESPONSES[i % DEFAULT_RESPONSES.len()];
            Response { a, b }
        })
        .collect()
}

/// Category index of an item.
pub fn item_category(item: usize, n_categories: usize) -> usize {
    item % n_categories
}

struct Consumer {
    age_band: Option<String>,
    marital_status: String,
    family_size: String,
    location: String,
}

pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData, SynthError> {
    for (value, name) in [
        (cfg.n_consumers, "n_consumers"),
        (cfg.n_items, "n_items"),
        (cfg.n_categories, "n_categories"),
        (cfg.periods, "periods"),
    ] {
        if value == 0 {
            return Err(SynthError::Count(name));
        }
    }
    if cfg.responses.len() != cfg.n_categories {
        return Err(SynthError::Responses { expected: cfg.n_categories, got: cfg.responses.len() });
    }
    let jitter = match cfg.offers {
        OfferModel::Constant { offer } if !(0.0..=100.0).contains(&offer) => {
            return Err(SynthError::Offer(format!("constant offer {offer}")));
        }
        OfferModel::PairAnchored { jitter } if !(jitter >= 0.0 && jitter.is_finite()) => {
            return Err(SynthError::Offer(format!("jitter {jitter}")));
        }
        OfferModel::PairAnchored { jitter } => Some(Normal::new(0.0, jitter).expect("finite sd")),
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let consumers: Vec<Consumer> = (0..cfg.n_consumers)
        .map(|_| Consumer {
            age_band: if rng.gen_bool(0.1) {
                None
            } else {
                Some(AGE_BANDS[rng.gen_range(0..AGE_BANDS.len())].to_string())
            },
            marital_status: if rng.gen_bool(0.5) { "Married" } else { "Single" }.to_string(),
            family_size: rng.gen_range(1..=5).to_string(),
            location: format!("loc{}", rng.gen_range(0..4)),
        })
        .collect();
    let prices: Vec<f64> = (0..cfg.n_items)
        .map(|_| (rng.gen_range(20.0..200.0_f64) * 100.0).round() / 100.0)
        .collect();
    let anchors: Vec<f64> = (0..cfg.n_consumers * cfg.n_items)
        .map(|_| rng.gen_range(0.0..=MAX_SYNTHETIC_OFFER))
        .collect();

    let mut records = Vec::new();
    let mut exposures = Vec::with_capacity(cfg.n_consumers * cfg.n_items * cfg.periods);
    for period in 0..cfg.periods {
        for (c, consumer) in consumers.iter().enumerate() {
            for item in 0..cfg.n_items {
                let cat = item_category(item, cfg.n_categories);
                let offer = match cfg.offers {
                    OfferModel::Constant { offer } => offer,
                    OfferModel::Uniform => rng.gen_range(0.0..=MAX_SYNTHETIC_OFFER),
                    OfferModel::PairAnchored { .. } => {
                        let noise = jitter.as_ref().map(|n| n.sample(&mut rng)).unwrap_or(0.0);
                        (anchors[c * cfg.n_items + item] + noise).clamp(0.0, MAX_SYNTHETIC_OFFER)
                    }
                };
                let purchased = rng.gen_bool(cfg.responses[cat].probability(offer));
                // drawn unconditionally so the stream does not depend on outcomes
                let day = rng.gen_range(0..PERIOD_DAYS);
                let quantity = rng.gen_range(1..=3);
                if purchased {
                    records.push(TransactionRecord {
                        date: cfg.origin + chrono::Duration::days(PERIOD_DAYS * period as i64 + day),
                        consumer_id: consumer_name(c),
                        item_id: item_name(item),
                        quantity,
                        selling_price: prices[item],
                        offer_percent: offer,
                        category: category_name(cat),
                        brand: format!("brand{}", item % 5),
                        age_band: consumer.age_band.clone(),
                        marital_status: Some(consumer.marital_status.clone()),
                        family_size: Some(consumer.family_size.clone()),
                        location: Some(consumer.location.clone()),
                    });
                }
                exposures.push(Exposure { consumer: c, item, period, offer, purchased });
            }
        }
    }
    records.sort_by(|x, y| {
        (x.date, &x.consumer_id, &x.item_id).cmp(&(y.date, &y.consumer_id, &y.item_id))
    });

    let truth = cfg
        .responses
        .iter()
        .enumerate()
        .map(|(i, r)| CategoryTruth { category: category_name(i), a: r.a, b: r.b })
        .collect();
    Ok(SyntheticData { records, truth, exposures })
}
