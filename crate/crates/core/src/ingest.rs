//! Transaction log loading and bi-weekly series construction.
//!
//! A transaction log is a comma separated file with a header row. Column
//! names are mapped through [`ColumnMapping`] so that logs exported from
//! different systems can be read without rewriting them. Every consumer-item
//! pair that transacted during the training portion of a [`SeriesWindow`]
//! becomes one [`BiweeklySeries`] of binary purchase labels with aligned
//! per-period transactional attributes.

use std::collections::BTreeMap;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of one series step in days.
pub const PERIOD_DAYS: i64 = 14;

/// Level used for absent categorical attributes.
pub const UNKNOWN_LEVEL: &str = "unknown";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("transaction file has no column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("window of {days} days is not a positive multiple of {PERIOD_DAYS} days")]
    Window { days: i64 },
    #[error("series has {len} periods but the split needs {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("invalid split: {0}")]
    Split(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One purchase line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub date: NaiveDate,
    pub consumer_id: String,
    pub item_id: String,
    pub quantity: u32,
    /// Unit selling price.
    pub selling_price: f64,
    pub offer_percent: f64,
    pub category: String,
    pub brand: String,
    pub age_band: Option<String>,
    pub marital_status: Option<String>,
    pub family_size: Option<String>,
    pub location: Option<String>,
}

/// Maps record fields onto column names of the input file. Demographic
/// columns are optional; a missing mapping yields `None` on every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub date: String,
    pub consumer_id: String,
    pub item_id: String,
    pub quantity: String,
    pub selling_price: String,
    pub offer_percent: String,
    pub category: String,
    pub brand: String,
    pub age_band: Option<String>,
    pub marital_status: Option<String>,
    pub family_size: Option<String>,
    pub location: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            date: "date".into(),
            consumer_id: "consumer_id".into(),
            item_id: "item_id".into(),
            quantity: "quantity".into(),
            selling_price: "selling_price".into(),
            offer_percent: "offer_percent".into(),
            category: "category".into(),
            brand: "brand".into(),
            age_band: Some("age_band".into()),
            marital_status: Some("marital_status".into()),
            family_size: Some("family_size".into()),
            location: Some("location".into()),
        }
    }
}

struct ColumnIndex {
    date: usize,
    consumer_id: usize,
    item_id: usize,
    quantity: usize,
    selling_price: usize,
    offer_percent: usize,
    category: usize,
    brand: usize,
    age_band: Option<usize>,
    marital_status: Option<usize>,
    family_size: Option<usize>,
    location: Option<usize>,
}

impl ColumnIndex {
    fn resolve(mapping: &ColumnMapping, headers: &csv::StringRecord) -> Result<Self, IngestError> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
        };
        let find_opt = |name: &Option<String>| name.as_deref().map(find).transpose();
        Ok(Self {
            date: find(&mapping.date)?,
            consumer_id: find(&mapping.consumer_id)?,
            item_id: find(&mapping.item_id)?,
            quantity: find(&mapping.quantity)?,
            selling_price: find(&mapping.selling_price)?,
            offer_percent: find(&mapping.offer_percent)?,
            category: find(&mapping.category)?,
            brand: find(&mapping.brand)?,
            age_band: find_opt(&mapping.age_band)?,
            marital_status: find_opt(&mapping.marital_status)?,
            family_size: find_opt(&mapping.family_size)?,
            location: find_opt(&mapping.location)?,
        })
    }
}

pub fn parse_transactions(
    path: impl AsRef<Path>,
    mapping: &ColumnMapping,
) -> Result<Vec<TransactionRecord>, IngestError> {
    let file = std::fs::File::open(path)?;
    read_transactions(file, mapping)
}

/// Reads records from any reader. Fails on the first malformed row.
pub fn read_transactions<R: Read>(
    reader: R,
    mapping: &ColumnMapping,
) -> Result<Vec<TransactionRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = ColumnIndex::resolve(mapping, &headers)?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        out.push(parse_row(&row, &cols).map_err(|message| IngestError::Row { line, message })?);
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord, cols: &ColumnIndex) -> Result<TransactionRecord, String> {
    let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
    let text = |i: usize, what: &str| {
        let v = field(i);
        if v.is_empty() {
            Err(format!("empty {what}"))
        } else {
            Ok(v.to_string())
        }
    };
    let optional = |i: Option<usize>| {
        i.map(|i| {
            let v = field(i);
            if v.is_empty() {
                UNKNOWN_LEVEL.to_string()
            } else {
                v.to_string()
            }
        })
    };

    let date = NaiveDate::parse_from_str(field(cols.date), "%Y-%m-%d")
        .map_err(|e| format!("bad date `{}`: {e}", field(cols.date)))?;
    let quantity: u32 = field(cols.quantity)
        .parse()
        .map_err(|_| format!("bad quantity `{}`", field(cols.quantity)))?;
    if quantity < 1 {
        return Err("quantity must be at least 1".into());
    }
    let selling_price: f64 = field(cols.selling_price)
        .parse()
        .map_err(|_| format!("bad selling price `{}`", field(cols.selling_price)))?;
    if !selling_price.is_finite() || selling_price < 0.0 {
        return Err(format!("selling price {selling_price} is negative or not finite"));
    }
    let offer_percent: f64 = field(cols.offer_percent)
        .parse()
        .map_err(|_| format!("bad offer percent `{}`", field(cols.offer_percent)))?;
    if !(0.0..=100.0).contains(&offer_percent) {
        return Err(format!("offer percent {offer_percent} outside [0, 100]"));
    }

    Ok(TransactionRecord {
        date,
        consumer_id: text(cols.consumer_id, "consumer id")?,
        item_id: text(cols.item_id, "item id")?,
        quantity,
        selling_price,
        offer_percent,
        category: text(cols.category, "category")?,
        brand: optional(Some(cols.brand)).unwrap_or_default(),
        age_band: optional(cols.age_band),
        marital_status: optional(cols.marital_status),
        family_size: optional(cols.family_size),
        location: optional(cols.location),
    })
}

/// Writes records with the default column names.
pub fn write_transactions(
    path: impl AsRef<Path>,
    records: &[TransactionRecord],
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    let m = ColumnMapping::default();
    w.write_record([
        &m.date,
        &m.consumer_id,
        &m.item_id,
        &m.quantity,
        &m.selling_price,
        &m.offer_percent,
        &m.category,
        &m.brand,
        "age_band",
        "marital_status",
        "family_size",
        "location",
    ])?;
    let opt = |v: &Option<String>| v.clone().unwrap_or_default();
    for r in records {
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.consumer_id.clone(),
            r.item_id.clone(),
            r.quantity.to_string(),
            r.selling_price.to_string(),
            r.offer_percent.to_string(),
            r.category.clone(),
            r.brand.clone(),
            opt(&r.age_band),
            opt(&r.marital_status),
            opt(&r.family_size),
            opt(&r.location),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConsumerItemKey {
    pub consumer_id: String,
    pub item_id: String,
    pub category: String,
}

/// Item and consumer attributes that do not vary over the series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticAttributes {
    pub brand: String,
    pub age_band: String,
    pub marital_status: String,
    pub family_size: String,
    pub location: String,
}

/// Binary purchase labels of one consumer-item pair, one entry per 14-day
/// period starting at `origin_date`, with attributes aligned to the labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiweeklySeries {
    pub key: ConsumerItemKey,
    pub origin_date: NaiveDate,
    pub labels: Vec<u8>,
    /// Mean offer percent over the period's transactions, 0 without any.
    pub offer_percent: Vec<f64>,
    /// Mean unit price over the period's transactions, 0 without any.
    pub price: Vec<f64>,
    /// Units bought in the period.
    pub quantity: Vec<f64>,
    /// Sum and count of the non-zero offers seen in the period.
    pub promo_offer_sum: Vec<f64>,
    pub promo_count: Vec<u32>,
    pub attributes: StaticAttributes,
}

impl BiweeklySeries {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Index of the first period with a purchase.
    pub fn first_purchase(&self) -> Option<usize> {
        self.labels.iter().position(|&l| l == 1)
    }

    /// Sum and count of non-zero offers over `periods`.
    pub fn promo_totals(&self, periods: Range<usize>) -> (f64, u32) {
        let periods = periods.start.min(self.len())..periods.end.min(self.len());
        let sum = self.promo_offer_sum[periods.clone()].iter().sum();
        let count = self.promo_count[periods].iter().sum();
        (sum, count)
    }

    /// Most recent non-zero unit price at or before `period`.
    pub fn last_price(&self, period: usize) -> Option<f64> {
        let end = (period + 1).min(self.len());
        self.price[..end].iter().rev().copied().find(|&p| p > 0.0)
    }
}

/// A run of whole 14-day periods. Pairs are relevant when they transact in
/// the first `train_periods` periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesWindow {
    pub start: NaiveDate,
    pub n_periods: usize,
    pub train_periods: usize,
}

impl SeriesWindow {
    /// Window over `[start, end)`; the length must be a whole number of periods.
    pub fn new(start: NaiveDate, end: NaiveDate, train_periods: usize) -> Result<Self, IngestError> {
        let days = (end - start).num_days();
        if days <= 0 || days % PERIOD_DAYS != 0 {
            return Err(IngestError::Window { days });
        }
        let n_periods = (days / PERIOD_DAYS) as usize;
        if train_periods == 0 || train_periods > n_periods {
            return Err(IngestError::Split(format!(
                "{train_periods} training periods in a {n_periods}-period window"
            )));
        }
        Ok(Self { start, n_periods, train_periods })
    }

    /// Window anchored at the earliest record, dropping a partial trailing
    /// period. The relevancy portion excludes the validation and test periods.
    pub fn anchored(records: &[TransactionRecord], split: &SplitSpec) -> Result<Option<Self>, IngestError> {
        split.validate()?;
        let (Some(first), Some(last)) = (
            records.iter().map(|r| r.date).min(),
            records.iter().map(|r| r.date).max(),
        ) else {
            return Ok(None);
        };
        let days = (last - first).num_days() + 1;
        let n_periods = (days / PERIOD_DAYS) as usize;
        if n_periods < split.total() {
            return Err(IngestError::TooShort { len: n_periods, needed: split.total() });
        }
        let train_periods = n_periods - split.validation_periods - split.test_periods;
        Ok(Some(Self { start: first, n_periods, train_periods }))
    }

    pub fn end(&self) -> NaiveDate {
        self.start + chrono::Duration::days(PERIOD_DAYS * self.n_periods as i64)
    }

    /// Period holding `date`, or `None` outside the window.
    pub fn period_of(&self, date: NaiveDate) -> Option<usize> {
        let days = (date - self.start).num_days();
        if days < 0 {
            return None;
        }
        let p = (days / PERIOD_DAYS) as usize;
        (p < self.n_periods).then_some(p)
    }
}

#[derive(Default)]
struct PeriodAcc {
    n: u32,
    offer: f64,
    price: f64,
    quantity: f64,
    promo_sum: f64,
    promo_count: u32,
}

/// Builds one series per relevant consumer-item pair, ordered by key.
pub fn build_series(records: &[TransactionRecord], window: &SeriesWindow) -> Vec<BiweeklySeries> {
    let mut pairs: BTreeMap<(&str, &str), Vec<(usize, &TransactionRecord)>> = BTreeMap::new();
    let mut consumers: BTreeMap<&str, &TransactionRecord> = BTreeMap::new();
    for r in records {
        consumers.entry(&r.consumer_id).or_insert(r);
        if let Some(p) = window.period_of(r.date) {
            pairs.entry((&r.consumer_id, &r.item_id)).or_default().push((p, r));
        }
    }

    let mut out = Vec::new();
    for ((consumer, item), txns) in pairs {
        if !txns.iter().any(|(p, _)| *p < window.train_periods) {
            continue;
        }
        let n = window.n_periods;
        let mut acc: Vec<PeriodAcc> = (0..n).map(|_| PeriodAcc::default()).collect();
        for (p, r) in &txns {
            let a = &mut acc[*p];
            a.n += 1;
            a.offer += r.offer_percent;
            a.price += r.selling_price;
            a.quantity += f64::from(r.quantity);
            if r.offer_percent > 0.0 {
                a.promo_sum += r.offer_percent;
                a.promo_count += 1;
            }
        }
        let mean = |total: f64, n: u32| if n == 0 { 0.0 } else { total / f64::from(n) };
        let item_rec = txns[0].1;
        let person = consumers[consumer];
        let level = |v: &Option<String>| v.clone().unwrap_or_else(|| UNKNOWN_LEVEL.to_string());
        out.push(BiweeklySeries {
            key: ConsumerItemKey {
                consumer_id: consumer.to_string(),
                item_id: item.to_string(),
                category: item_rec.category.clone(),
            },
            origin_date: window.start,
            labels: acc.iter().map(|a| u8::from(a.n > 0)).collect(),
            offer_percent: acc.iter().map(|a| mean(a.offer, a.n)).collect(),
            price: acc.iter().map(|a| mean(a.price, a.n)).collect(),
            quantity: acc.iter().map(|a| a.quantity).collect(),
            promo_offer_sum: acc.iter().map(|a| a.promo_sum).collect(),
            promo_count: acc.iter().map(|a| a.promo_count).collect(),
            attributes: StaticAttributes {
                brand: item_rec.brand.clone(),
                age_band: level(&person.age_band),
                marital_status: level(&person.marital_status),
                family_size: level(&person.family_size),
                location: level(&person.location),
            },
        });
    }
    out
}

/// Sizes of the chronological splits, in periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_periods: usize,
    pub validation_periods: usize,
    pub test_periods: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_periods: 24, validation_periods: 1, test_periods: 1 }
    }
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.train_periods + self.validation_periods + self.test_periods
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.train_periods == 0 || self.validation_periods == 0 || self.test_periods == 0 {
            return Err(IngestError::Split(format!(
                "all split sizes must be at least 1, got {}/{}/{}",
                self.train_periods, self.validation_periods, self.test_periods
            )));
        }
        Ok(())
    }
}

/// Period ranges of a split. Test holds the final periods, validation the
/// ones right before it, and train every period before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

pub fn split_periods(len: usize, spec: &SplitSpec) -> Result<Splits, IngestError> {
    spec.validate()?;
    if len < spec.total() {
        return Err(IngestError::TooShort { len, needed: spec.total() });
    }
    let test_start = len - spec.test_periods;
    let val_start = test_start - spec.validation_periods;
    Ok(Splits { train: 0..val_start, validation: val_start..test_start, test: test_start..len })
}

/// Label views of the three splits of one series.
#[derive(Debug, Clone, Copy)]
pub struct SeriesSplit<'a> {
    pub train: &'a [u8],
    pub validation: &'a [u8],
    pub test: &'a [u8],
}

pub fn split_series<'a>(series: &'a BiweeklySeries, spec: &SplitSpec) -> Result<SeriesSplit<'a>, IngestError> {
    let s = split_periods(series.len(), spec)?;
    Ok(SeriesSplit {
        train: &series.labels[s.train],
        validation: &series.labels[s.validation],
        test: &series.labels[s.test],
    })
}
