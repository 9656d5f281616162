//! Model inputs for one consumer-item-period.
//!
//! Each [`SampleRow`] carries four groups: static categorical indices, a
//! per-lag sequence of datetime indices, static continuous values and a
//! per-lag matrix of transactional values. Everything is computed from
//! periods strictly before the target period, plus static attributes.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{split_periods, BiweeklySeries, ConsumerItemKey, IngestError, SplitSpec, PERIOD_DAYS};

/// Scale applied to period counts in the profile group.
const PERIODS_PER_YEAR: f64 = 26.0;

/// Additive smoothing weight of target encodings.
pub const TARGET_ENCODING_WEIGHT: f64 = 20.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("series of {len} periods is too short for {n_lags} lags")]
    TooShort { len: usize, n_lags: usize },
    #[error("field `{field}` produced index {index} but its vocabulary has {size} entries")]
    Vocabulary { field: String, index: usize, size: usize },
    #[error("invalid feature spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Split(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RollingStats {
    pub mean: f64,
    pub median: f64,
    pub variance: f64,
    pub kurtosis: f64,
    pub skewness: f64,
}

impl RollingStats {
    fn as_array(&self) -> [f64; 5] {
        [self.mean, self.median, self.variance, self.kurtosis, self.skewness]
    }
}

/// Population moments of the last `lags` entries of `history`.
///
/// `history` must end right before the target period. Excess kurtosis and
/// skewness are 0 for windows without spread, and an empty window gives all
/// zeros.
pub fn rolling_offsets(history: &[f64], lags: usize) -> RollingStats {
    let window = &history[history.len().saturating_sub(lags)..];
    if window.is_empty() {
        return RollingStats::default();
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;

    let mut sorted = window.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) { (sorted[mid - 1] + sorted[mid]) / 2.0 } else { sorted[mid] };

    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in window {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    let flat = window.iter().all(|&x| x == window[0]);
    let (skewness, kurtosis) = if flat || m2 == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    RollingStats { mean, median, variance: m2, kurtosis, skewness }
}

/// Calendar indices of a period: 14-day slot of the year, month and quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatetimeFeatures {
    pub period_of_year: usize,
    pub month: usize,
    pub quarter: usize,
}

pub const DATETIME_FIELDS: [(&str, usize); 3] = [("period_of_year", 27), ("month", 13), ("quarter", 5)];

pub fn period_start(origin: NaiveDate, period_index: usize) -> NaiveDate {
    origin + chrono::Duration::days(PERIOD_DAYS * period_index as i64)
}

pub fn datetime_features(period_index: usize, origin: NaiveDate) -> DatetimeFeatures {
    let date = period_start(origin, period_index);
    let month = date.month() as usize;
    DatetimeFeatures {
        period_of_year: date.ordinal0() as usize / PERIOD_DAYS as usize,
        month,
        quarter: (month - 1) / 3 + 1,
    }
}

/// Purchase history summary of a pair as of `period_index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileFeatures {
    pub time_since_first: f64,
    pub time_since_last: f64,
    pub mean_gap: f64,
    pub reorder_rate: f64,
    pub streak: f64,
    pub total_orders: f64,
}

impl ProfileFeatures {
    fn as_array(&self) -> [f64; 6] {
        [
            self.time_since_first,
            self.time_since_last,
            self.mean_gap,
            self.reorder_rate,
            self.streak,
            self.total_orders,
        ]
    }
}

pub fn profile_features(series: &BiweeklySeries, period_index: usize) -> ProfileFeatures {
    profile_from_labels(&series.labels, period_index)
}

/// Uses only `labels[..period_index]`; `period_index` may equal the length
/// to describe the period after the series. Without an earlier purchase the
/// time-since values are `period_index + 1`.
pub fn profile_from_labels(labels: &[u8], period_index: usize) -> ProfileFeatures {
    let history = &labels[..period_index.min(labels.len())];
    let bought: Vec<usize> = history.iter().enumerate().filter(|(_, &l)| l == 1).map(|(i, _)| i).collect();
    let sentinel = (period_index + 1) as f64;
    let t = period_index as f64;
    let mean_gap = if bought.len() < 2 {
        0.0
    } else {
        (bought[bought.len() - 1] - bought[0]) as f64 / (bought.len() - 1) as f64
    };
    ProfileFeatures {
        time_since_first: bought.first().map(|&i| t - i as f64).unwrap_or(sentinel),
        time_since_last: bought.last().map(|&i| t - i as f64).unwrap_or(sentinel),
        mean_gap,
        reorder_rate: if period_index == 0 { 0.0 } else { bought.len() as f64 / t },
        streak: history.iter().rev().take_while(|&&l| l == 1).count() as f64,
        total_orders: bought.len() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Datetime,
    Profile,
    PricePromo,
    LaggedOffsets,
}

pub const ALL_GROUPS: [FeatureGroup; 4] =
    [FeatureGroup::Datetime, FeatureGroup::Profile, FeatureGroup::PricePromo, FeatureGroup::LaggedOffsets];

/// A categorical input. Index 0 is reserved for unseen levels, so the
/// vocabulary size is `levels.len() + 1` unless declared otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalField {
    pub name: String,
    pub size: usize,
    /// Sorted known levels; empty for calendar fields.
    pub levels: Vec<String>,
}

impl CategoricalField {
    pub fn from_levels(name: &str, levels: impl IntoIterator<Item = String>) -> Self {
        let mut levels: Vec<String> = levels.into_iter().collect();
        levels.sort();
        levels.dedup();
        Self { name: name.to_string(), size: levels.len() + 1, levels }
    }

    pub fn index_of(&self, level: &str) -> usize {
        self.levels.binary_search_by(|l| l.as_str().cmp(level)).map(|i| i + 1).unwrap_or(0)
    }

    fn check(&self, index: usize) -> Result<usize, FeatureError> {
        if index < self.size {
            Ok(index)
        } else {
            Err(FeatureError::Vocabulary { field: self.name.clone(), index, size: self.size })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetEncoding {
    pub global: f64,
    pub consumer: BTreeMap<String, f64>,
    pub item: BTreeMap<String, f64>,
}

impl TargetEncoding {
    /// Smoothed purchase rates over the training periods.
    pub fn fit(series: &[BiweeklySeries], train_end: impl Fn(&BiweeklySeries) -> usize) -> Self {
        let mut consumer: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        let mut item: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        let (mut total, mut count) = (0.0, 0.0);
        for s in series {
            let labels = &s.labels[..train_end(s).min(s.len())];
            let bought = labels.iter().map(|&l| f64::from(l)).sum::<f64>();
            let n = labels.len() as f64;
            total += bought;
            count += n;
            for acc in [
                consumer.entry(&s.key.consumer_id).or_default(),
                item.entry(&s.key.item_id).or_default(),
            ] {
                acc.0 += bought;
                acc.1 += n;
            }
        }
        let global = if count > 0.0 { total / count } else { 0.0 };
        let smooth = |(sum, n): (f64, f64)| (sum + TARGET_ENCODING_WEIGHT * global) / (n + TARGET_ENCODING_WEIGHT);
        Self {
            global,
            consumer: consumer.into_iter().map(|(k, v)| (k.to_string(), smooth(v))).collect(),
            item: item.into_iter().map(|(k, v)| (k.to_string(), smooth(v))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub n_lags: usize,
    pub groups: Vec<FeatureGroup>,
    pub static_fields: Vec<CategoricalField>,
    pub temporal_fields: Vec<CategoricalField>,
    pub target_encoding: TargetEncoding,
}

/// Names and vocabulary sizes of every model input, in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub n_lags: usize,
    pub static_categorical: Vec<(String, usize)>,
    pub temporal_categorical: Vec<(String, usize)>,
    pub static_continuous: Vec<String>,
    pub temporal_continuous: Vec<String>,
}

pub const STATIC_FIELD_NAMES: [&str; 6] = ["item_id", "brand", "age_band", "marital_status", "family_size", "location"];

impl FeatureSpec {
    /// Vocabularies from `series` and target encodings from their training
    /// periods.
    pub fn fit(
        series: &[BiweeklySeries],
        split: &SplitSpec,
        n_lags: usize,
        groups: &[FeatureGroup],
    ) -> Result<Self, FeatureError> {
        if n_lags == 0 {
            return Err(FeatureError::Spec("n_lags must be at least 1".into()));
        }
        for s in series {
            split_periods(s.len(), split)?;
        }
        let mut groups = groups.to_vec();
        groups.sort();
        groups.dedup();

        let static_fields = STATIC_FIELD_NAMES
            .iter()
            .map(|&name| CategoricalField::from_levels(name, series.iter().map(|s| static_level(s, name).to_string())))
            .collect();
        let temporal_fields = if groups.contains(&FeatureGroup::Datetime) {
            DATETIME_FIELDS
                .iter()
                .map(|&(name, size)| CategoricalField { name: name.into(), size, levels: Vec::new() })
                .collect()
        } else {
            Vec::new()
        };
        let target_encoding = TargetEncoding::fit(series, |s| {
            split_periods(s.len(), split).map(|sp| sp.train.end).unwrap_or(0)
        });
        Ok(Self { n_lags, groups, static_fields, temporal_fields, target_encoding })
    }

    pub fn has(&self, group: FeatureGroup) -> bool {
        self.groups.contains(&group)
    }

    pub fn manifest(&self) -> FeatureManifest {
        let mut static_continuous = Vec::new();
        if self.has(FeatureGroup::Profile) {
            for n in ["time_since_first", "time_since_last", "mean_gap", "reorder_rate", "streak", "total_orders"] {
                static_continuous.push(n.to_string());
            }
            static_continuous.push("consumer_target_encoding".into());
            static_continuous.push("item_target_encoding".into());
        }
        if self.has(FeatureGroup::PricePromo) {
            static_continuous.push("historical_offer_mean".into());
        }
        let mut temporal_continuous = vec!["label".to_string()];
        if self.has(FeatureGroup::PricePromo) {
            for n in ["offer_fraction", "relative_price", "log_quantity"] {
                temporal_continuous.push(n.into());
            }
        }
        if self.has(FeatureGroup::LaggedOffsets) {
            for series in ["label", "offer"] {
                for stat in ["mean", "median", "variance", "kurtosis", "skewness"] {
                    temporal_continuous.push(format!("{series}_rolling_{stat}"));
                }
            }
        }
        FeatureManifest {
            n_lags: self.n_lags,
            static_categorical: self.static_fields.iter().map(|f| (f.name.clone(), f.size)).collect(),
            temporal_categorical: self.temporal_fields.iter().map(|f| (f.name.clone(), f.size)).collect(),
            static_continuous,
            temporal_continuous,
        }
    }
}

fn static_level<'a>(s: &'a BiweeklySeries, field: &str) -> &'a str {
    match field {
        "item_id" => &s.key.item_id,
        "brand" => &s.attributes.brand,
        "age_band" => &s.attributes.age_band,
        "marital_status" => &s.attributes.marital_status,
        "family_size" => &s.attributes.family_size,
        "location" => &s.attributes.location,
        _ => "",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub key: ConsumerItemKey,
    pub period_index: usize,
    pub label: u8,
    pub static_categorical: Vec<usize>,
    /// `n_lags` rows of calendar indices.
    pub temporal_categorical: Vec<Vec<usize>>,
    pub static_continuous: Vec<f64>,
    /// `n_lags` rows, oldest first.
    pub temporal_continuous: Vec<Vec<f64>>,
}

/// Features for the target period `period`, which must satisfy
/// `n_lags <= period < series.len()`.
pub fn sample_at(series: &BiweeklySeries, spec: &FeatureSpec, period: usize) -> Result<SampleRow, FeatureError> {
    let n_lags = spec.n_lags;
    if period < n_lags || period >= series.len() {
        return Err(FeatureError::TooShort { len: series.len(), n_lags });
    }

    let static_categorical = spec
        .static_fields
        .iter()
        .map(|f| f.check(f.index_of(static_level(series, &f.name))))
        .collect::<Result<Vec<_>, _>>()?;

    // Row j describes period `period - n_lags + j`; its calendar indices are
    // those of the following period so the last row sees the target's date.
    let first = period - n_lags;
    let mut temporal_categorical = Vec::with_capacity(n_lags);
    for j in 0..n_lags {
        let mut row = Vec::with_capacity(spec.temporal_fields.len());
        if !spec.temporal_fields.is_empty() {
            let dt = datetime_features(first + j + 1, series.origin_date);
            for (f, v) in spec.temporal_fields.iter().zip([dt.period_of_year, dt.month, dt.quarter]) {
                row.push(f.check(v)?);
            }
        }
        temporal_categorical.push(row);
    }

    let mut static_continuous = Vec::new();
    if spec.has(FeatureGroup::Profile) {
        let profile = profile_features(series, period);
        static_continuous.extend(profile.as_array().iter().map(|v| v / PERIODS_PER_YEAR));
        let te = &spec.target_encoding;
        static_continuous.push(te.consumer.get(&series.key.consumer_id).copied().unwrap_or(te.global));
        static_continuous.push(te.item.get(&series.key.item_id).copied().unwrap_or(te.global));
    }

    let labels: Vec<f64> = series.labels[..period].iter().map(|&l| f64::from(l)).collect();
    let offers: Vec<f64> = series.offer_percent[..period].iter().map(|o| o / 100.0).collect();
    let priced: Vec<f64> = series.price[..period].iter().copied().filter(|&p| p > 0.0).collect();
    let reference_price = if priced.is_empty() { 0.0 } else { priced.iter().sum::<f64>() / priced.len() as f64 };

    if spec.has(FeatureGroup::PricePromo) {
        let promoted: Vec<f64> = offers.iter().copied().filter(|&o| o > 0.0).collect();
        static_continuous.push(if promoted.is_empty() { 0.0 } else { promoted.iter().sum::<f64>() / promoted.len() as f64 });
    }

    let mut temporal_continuous = Vec::with_capacity(n_lags);
    for p in first..period {
        let mut row = vec![labels[p]];
        if spec.has(FeatureGroup::PricePromo) {
            row.push(offers[p]);
            row.push(if reference_price > 0.0 { series.price[p] / reference_price } else { 0.0 });
            row.push(series.quantity[p].ln_1p());
        }
        if spec.has(FeatureGroup::LaggedOffsets) {
            row.extend(rolling_offsets(&labels[..=p], n_lags).as_array());
            row.extend(rolling_offsets(&offers[..=p], n_lags).as_array());
        }
        temporal_continuous.push(row);
    }

    Ok(SampleRow {
        key: series.key.clone(),
        period_index: period,
        label: series.labels[period],
        static_categorical,
        temporal_categorical,
        static_continuous,
        temporal_continuous,
    })
}

/// One row per period from `n_lags` to the end of the series.
pub fn make_samples(series: &BiweeklySeries, spec: &FeatureSpec) -> Result<Vec<SampleRow>, FeatureError> {
    if series.len() <= spec.n_lags {
        return Err(FeatureError::TooShort { len: series.len(), n_lags: spec.n_lags });
    }
    (spec.n_lags..series.len()).map(|t| sample_at(series, spec, t)).collect()
}
