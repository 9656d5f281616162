use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::SplitName;
use super::stages::{
    load_series, Context, DecisionRow, ElasticityRow, FitRow, PredictionRow, SummaryRow, ThresholdRow,
};
use super::workspace::read_csv;
use super::{PipelineError, Stage};
use crate::histogram::{histogram, Bin};
use crate::tcn::bce_loss;
use crate::threshold::F1Stats;

pub const TABLE_COLUMNS: [&str; 8] = [
    "Category",
    "Sample size",
    "BCELoss",
    "Precision",
    "Recall",
    "F1-Score",
    "Avg Elasticity",
    "Weighted Offer Percent",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    #[serde(rename = "Category")]
    pub category: String,
    /// Consumer-item pairs modelled.
    #[serde(rename = "Sample size")]
    pub sample_size: usize,
    #[serde(rename = "BCELoss")]
    pub bce_loss: f64,
    #[serde(rename = "Precision")]
    pub precision: f64,
    #[serde(rename = "Recall")]
    pub recall: f64,
    #[serde(rename = "F1-Score")]
    pub f1: f64,
    #[serde(rename = "Avg Elasticity")]
    pub avg_elasticity: Option<f64>,
    #[serde(rename = "Weighted Offer Percent")]
    pub weighted_offer: f64,
}

#[derive(Debug, Serialize)]
struct Table {
    columns: [&'static str; 8],
    metrics_split: SplitName,
    rows: Vec<CategoryReport>,
}

#[derive(Debug, Serialize)]
struct LabelHistograms {
    split: SplitName,
    label_0: Vec<Bin>,
    label_1: Vec<Bin>,
    by_category: BTreeMap<String, [Vec<Bin>; 2]>,
}

#[derive(Debug, Serialize)]
struct BinsByCategory {
    all: Vec<Bin>,
    by_category: BTreeMap<String, Vec<Bin>>,
}

#[derive(Debug, Serialize)]
struct Fits {
    fits: Vec<FitRow>,
    mean_r_squared: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn label_bins(rows: &[&PredictionRow], label: u8) -> Vec<Bin> {
    let v: Vec<f64> = rows.iter().filter(|p| p.label == label).map(|p| p.probability).collect();
    histogram(&v, 20, 0.0, 1.0)
}

pub(crate) fn report(ctx: &Context) -> Result<(), PipelineError> {
    let (_, series) = load_series(ctx.workspace)?;
    let predictions: Vec<PredictionRow> = read_csv(&ctx.path(Stage::Predict, "predictions.csv"))?;
    let thresholds: Vec<ThresholdRow> = read_csv(&ctx.path(Stage::Thresholds, "thresholds.csv"))?;
    let elasticity: Vec<ElasticityRow> = read_csv(&ctx.path(Stage::Elasticity, "elasticity.csv"))?;
    let fits: Vec<FitRow> = read_csv(&ctx.path(Stage::Elasticity, "fits.csv"))?;
    let decisions: Vec<DecisionRow> = read_csv(&ctx.path(Stage::Optimize, "decisions.csv"))?;
    let summary: Vec<SummaryRow> = read_csv(&ctx.path(Stage::Optimize, "summary.csv"))?;
    let rc = &ctx.config.report;

    let cutoff: BTreeMap<(&str, &str), f64> =
        thresholds.iter().map(|t| ((t.category.as_str(), t.consumer_id.as_str()), t.cutoff)).collect();
    let mut pairs: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &series {
        *pairs.entry(&s.key.category).or_default() += 1;
    }
    let mut rows = Vec::new();
    for (&category, &sample_size) in &pairs {
        let preds: Vec<&PredictionRow> =
            predictions.iter().filter(|p| p.category == category && p.split == rc.metrics_split).collect();
        let p: Vec<f64> = preds.iter().map(|r| r.probability).collect();
        let y: Vec<u8> = preds.iter().map(|r| r.label).collect();
        let bce = if p.is_empty() { f64::NAN } else { bce_loss(&p, &y).map_err(PipelineError::from)? };
        let (mut k, mut b, mut v) = (0, 0, 0);
        for r in &preds {
            let c = cutoff.get(&(category, r.consumer_id.as_str())).copied().unwrap_or(0.5);
            let d = r.probability >= c;
            k += usize::from(d);
            b += usize::from(r.label == 1);
            v += usize::from(d && r.label == 1);
        }
        let stats = F1Stats::from_counts(k, b, v);
        let eps: Vec<f64> = elasticity.iter().filter(|e| e.category == category).map(|e| e.epsilon).collect();
        let weighted_offer = summary.iter().find(|s| s.category == category).map(|s| s.weighted_offer).unwrap_or(0.0);
        rows.push(CategoryReport {
            category: category.to_string(),
            sample_size,
            bce_loss: bce,
            precision: stats.precision,
            recall: stats.recall,
            f1: stats.f1,
            avg_elasticity: mean(&eps),
            weighted_offer,
        });
    }

    let hist_rows: Vec<&PredictionRow> = predictions.iter().filter(|p| p.split == rc.histogram_split).collect();
    let labels = LabelHistograms {
        split: rc.histogram_split,
        label_0: label_bins(&hist_rows, 0),
        label_1: label_bins(&hist_rows, 1),
        by_category: pairs
            .keys()
            .map(|&c| {
                let r: Vec<&PredictionRow> = hist_rows.iter().copied().filter(|p| p.category == c).collect();
                (c.to_string(), [label_bins(&r, 0), label_bins(&r, 1)])
            })
            .collect(),
    };
    let cut_bins = |rows: &mut dyn Iterator<Item = &ThresholdRow>| {
        histogram(&rows.map(|t| t.cutoff).collect::<Vec<_>>(), 20, 0.0, 1.0)
    };
    let cutoffs = BinsByCategory {
        all: cut_bins(&mut thresholds.iter()),
        by_category: pairs
            .keys()
            .map(|&c| (c.to_string(), cut_bins(&mut thresholds.iter().filter(|t| t.category == c))))
            .collect(),
    };
    let offer_bins = |rows: &mut dyn Iterator<Item = &DecisionRow>| {
        histogram(&rows.map(|d| d.new_offer).collect::<Vec<_>>(), 20, 0.0, 100.0)
    };
    let offers = BinsByCategory {
        all: offer_bins(&mut decisions.iter()),
        by_category: pairs
            .keys()
            .map(|&c| (c.to_string(), offer_bins(&mut decisions.iter().filter(|d| d.category == c))))
            .collect(),
    };
    let r2: Vec<f64> = fits.iter().map(|f| f.r_squared).collect();
    let fits = Fits { mean_r_squared: mean(&r2), fits };

    let mut w = ctx.writer(Stage::Report)?;
    w.write_csv("table1.csv", &rows)?;
    w.write_json("table1.json", &Table { columns: TABLE_COLUMNS, metrics_split: rc.metrics_split, rows })?;
    w.write_json("probability_histograms.json", &labels)?;
    w.write_json("cutoff_histogram.json", &cutoffs)?;
    w.write_json("offer_histograms.json", &offers)?;
    w.write_json("sigmoid_fits.json", &fits)?;
    w.finish()?;
    Ok(())
}
