use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, SplitName};
use super::workspace::{category_dir, read_csv, read_json, stage_dir, StageWriter};
use super::{PipelineError, Stage};
use crate::elasticity::{fit_sigmoid, reference_offer, CategoryCohort, ElasticityRecord, OfferSource, SigmoidFit};
use crate::featurize::{make_samples, FeatureManifest, FeatureSpec, SampleRow};
use crate::ingest::{build_series, parse_transactions, split_periods, BiweeklySeries, SeriesWindow, Splits};
use crate::optimizer::{
    evaluate_choice, offer_range, solve_category, CategorySolution, OfferItem, OptimizationProblem, OptimizeError,
};
use crate::tcn::{predict as tcn_predict, read_params, train as tcn_train, write_params, NetworkConfig, TrainingLog};
use crate::threshold::{assign_fallback, maximize_for, ConsumerPredictions};

pub(crate) struct Context<'a> {
    pub workspace: &'a Path,
    pub config: &'a PipelineConfig,
    pub hash: &'a str,
}

impl Context<'_> {
    pub fn writer(&self, stage: Stage) -> Result<StageWriter, PipelineError> {
        StageWriter::new(self.workspace, stage, self.hash)
    }

    pub fn path(&self, stage: Stage, name: &str) -> std::path::PathBuf {
        stage_dir(self.workspace, stage).join(name)
    }
}

const SERIES_FILE: &str = "series.jsonl";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SeriesHeader {
    kind: String,
    config_hash: String,
    window: SeriesWindow,
    n_series: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CategoryCount {
    category: String,
    pairs: usize,
    purchases: usize,
}

pub(crate) fn ingest(ctx: &Context) -> Result<(), PipelineError> {
    let input = ctx.config.input_path(ctx.workspace);
    let records = parse_transactions(&input, &ctx.config.columns)?;
    let window = SeriesWindow::anchored(&records, &ctx.config.split)?
        .ok_or_else(|| PipelineError::Schema(format!("{} holds no transactions", input.display())))?;
    let series = build_series(&records, &window);
    if series.is_empty() {
        return Err(PipelineError::Schema("no consumer-item pair transacts in the training window".into()));
    }
    let mut w = ctx.writer(Stage::Ingest)?;
    let header = SeriesHeader {
        kind: "header".into(),
        config_hash: w.hash().to_string(),
        window,
        n_series: series.len(),
    };
    let mut bytes = serde_json::to_vec(&header).map_err(|e| PipelineError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    for s in &series {
        serde_json::to_writer(&mut bytes, s).map_err(|e| PipelineError::Internal(e.to_string()))?;
        bytes.push(b'\n');
    }
    w.write(SERIES_FILE, &bytes)?;

    let mut counts: BTreeMap<&str, CategoryCount> = BTreeMap::new();
    for s in &series {
        let c = counts.entry(&s.key.category).or_insert_with(|| CategoryCount {
            category: s.key.category.clone(),
            pairs: 0,
            purchases: 0,
        });
        c.pairs += 1;
        c.purchases += s.labels.iter().map(|&l| l as usize).sum::<usize>();
    }
    let dirs: BTreeSet<String> = counts.keys().map(|c| category_dir(c)).collect();
    if dirs.len() != counts.len() {
        return Err(PipelineError::Schema("two category names map to the same directory name".into()));
    }
    w.write_csv("categories.csv", &counts.into_values().collect::<Vec<_>>())?;
    log::info!("ingest: {} records, {} pairs, {} periods", records.len(), series.len(), window.n_periods);
    w.finish()?;
    Ok(())
}

/// Window and series written by the ingest stage.
pub fn load_series(workspace: &Path) -> Result<(SeriesWindow, Vec<BiweeklySeries>), PipelineError> {
    let path = stage_dir(workspace, Stage::Ingest).join(SERIES_FILE);
    let f = std::fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
    let mut lines = BufReader::new(f).lines();
    let bad = |m: String| PipelineError::Schema(format!("{}: {m}", path.display()));
    let first = lines.next().ok_or_else(|| bad("empty file".into()))?.map_err(|e| PipelineError::io(&path, e))?;
    let header: SeriesHeader = serde_json::from_str(&first).map_err(|e| bad(e.to_string()))?;
    if header.kind != "header" {
        return Err(bad("first line is not a header".into()));
    }
    let mut series = Vec::with_capacity(header.n_series);
    for line in lines {
        let line = line.map_err(|e| PipelineError::io(&path, e))?;
        series.push(serde_json::from_str::<BiweeklySeries>(&line).map_err(|e| bad(e.to_string()))?);
    }
    if series.len() != header.n_series {
        return Err(bad(format!("header announces {} series, found {}", header.n_series, series.len())));
    }
    Ok((header.window, series))
}

fn by_category(series: Vec<BiweeklySeries>) -> BTreeMap<String, Vec<BiweeklySeries>> {
    let mut out: BTreeMap<String, Vec<BiweeklySeries>> = BTreeMap::new();
    for s in series {
        out.entry(s.key.category.clone()).or_default().push(s);
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureFile {
    category: String,
    spec: FeatureSpec,
    manifest: FeatureManifest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureSummary {
    category: String,
    pairs: usize,
    train_rows: usize,
    validation_rows: usize,
    test_rows: usize,
    static_inputs: usize,
    temporal_inputs: usize,
}

struct SplitRows {
    train: Vec<SampleRow>,
    validation: Vec<SampleRow>,
    test: Vec<SampleRow>,
}

fn split_rows(series: &[BiweeklySeries], spec: &FeatureSpec, splits: &Splits) -> Result<SplitRows, PipelineError> {
    let mut out = SplitRows { train: Vec::new(), validation: Vec::new(), test: Vec::new() };
    for s in series {
        for row in make_samples(s, spec)? {
            let p = row.period_index;
            if splits.train.contains(&p) {
                out.train.push(row);
            } else if splits.validation.contains(&p) {
                out.validation.push(row);
            } else {
                out.test.push(row);
            }
        }
    }
    Ok(out)
}

pub(crate) fn featurize(ctx: &Context) -> Result<(), PipelineError> {
    let (window, series) = load_series(ctx.workspace)?;
    let splits = split_periods(window.n_periods, &ctx.config.split)?;
    let mut w = ctx.writer(Stage::Featurize)?;
    let mut summary = Vec::new();
    for (category, members) in by_category(series) {
        let spec = FeatureSpec::fit(&members, &ctx.config.split, ctx.config.features.n_lags, &ctx.config.features.groups)?;
        let rows = split_rows(&members, &spec, &splits)?;
        let manifest = spec.manifest();
        summary.push(FeatureSummary {
            category: category.clone(),
            pairs: members.len(),
            train_rows: rows.train.len(),
            validation_rows: rows.validation.len(),
            test_rows: rows.test.len(),
            static_inputs: manifest.static_categorical.len() + manifest.static_continuous.len(),
            temporal_inputs: manifest.temporal_categorical.len() + manifest.temporal_continuous.len(),
        });
        let file = FeatureFile { category: category.clone(), spec, manifest };
        w.write_json(&format!("{}/features.json", category_dir(&category)), &file)?;
    }
    w.write_csv("summary.csv", &summary)?;
    w.finish()?;
    Ok(())
}

fn load_features(ctx: &Context, category: &str) -> Result<FeatureFile, PipelineError> {
    read_json(&ctx.path(Stage::Featurize, &format!("{}/features.json", category_dir(category))))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainRecord {
    category: String,
    n_parameters: usize,
    train_rows: usize,
    validation_rows: usize,
    log: TrainingLog,
}

pub(crate) fn train(ctx: &Context) -> Result<(), PipelineError> {
    let (window, series) = load_series(ctx.workspace)?;
    let splits = split_periods(window.n_periods, &ctx.config.split)?;
    let groups: Vec<(String, Vec<BiweeklySeries>)> = by_category(series).into_iter().collect();
    let trained: Vec<_> = groups
        .par_iter()
        .map(|(category, members)| -> Result<_, PipelineError> {
            let features = load_features(ctx, category)?;
            let rows = split_rows(members, &features.spec, &splits)?;
            let network = NetworkConfig::from_manifest(&features.manifest, &ctx.config.network);
            let (params, log) = tcn_train(&rows.train, &rows.validation, &network, &ctx.config.train)
                .map_err(|e| match PipelineError::from(e) {
                    PipelineError::Training(m) => PipelineError::Training(format!("{category}: {m}")),
                    other => other,
                })?;
            log::info!("train {category}: validation loss {:.5} ({})", log.final_validation_loss, log.selected);
            let record = TrainRecord {
                category: category.clone(),
                n_parameters: params.values.len(),
                train_rows: rows.train.len(),
                validation_rows: rows.validation.len(),
                log,
            };
            Ok((params, record))
        })
        .collect::<Result<_, _>>()?;

    let mut w = ctx.writer(Stage::Train)?;
    for (params, record) in &trained {
        let dir = category_dir(&record.category);
        let name = format!("{dir}/params.bin");
        std::fs::create_dir_all(w.path(&dir)).map_err(|e| PipelineError::io(&w.path(&dir), e))?;
        write_params(w.path(&name), params).map_err(PipelineError::from)?;
        w.record(&name)?;
        w.write_json(&format!("{dir}/train_log.json"), record)?;
    }
    w.finish()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub category: String,
    pub consumer_id: String,
    pub item_id: String,
    pub period_index: usize,
    pub split: SplitName,
    pub probability: f64,
    pub label: u8,
}

pub(crate) fn predict(ctx: &Context) -> Result<(), PipelineError> {
    let (window, series) = load_series(ctx.workspace)?;
    let splits = split_periods(window.n_periods, &ctx.config.split)?;
    let periods: Vec<usize> = splits.validation.clone().chain(splits.test.clone()).collect();
    let groups: Vec<(String, Vec<BiweeklySeries>)> = by_category(series).into_iter().collect();
    let per_category: Vec<Vec<PredictionRow>> = groups
        .par_iter()
        .map(|(category, members)| -> Result<_, PipelineError> {
            let features = load_features(ctx, category)?;
            let params = read_params(ctx.path(Stage::Train, &format!("{}/params.bin", category_dir(category))))?;
            let set = tcn_predict(members, &features.spec, &params, &periods)?;
            Ok(set
                .rows
                .into_iter()
                .map(|p| PredictionRow {
                    split: if splits.test.contains(&p.period_index) { SplitName::Test } else { SplitName::Validation },
                    category: p.category,
                    consumer_id: p.consumer_id,
                    item_id: p.item_id,
                    period_index: p.period_index,
                    probability: p.probability,
                    label: p.label,
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<PredictionRow> = per_category.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (&a.category, &a.consumer_id, &a.item_id, a.period_index).cmp(&(
            &b.category,
            &b.consumer_id,
            &b.item_id,
            b.period_index,
        ))
    });
    let mut w = ctx.writer(Stage::Predict)?;
    w.write_csv("predictions.csv", &rows)?;
    w.finish()?;
    Ok(())
}

fn load_predictions(ctx: &Context) -> Result<Vec<PredictionRow>, PipelineError> {
    read_csv(&ctx.path(Stage::Predict, "predictions.csv"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub category: String,
    pub consumer_id: String,
    pub cutoff: f64,
    pub f1: f64,
    pub k: usize,
    pub b: usize,
    pub v: usize,
    pub degenerate: bool,
}

pub(crate) fn thresholds(ctx: &Context) -> Result<(), PipelineError> {
    let predictions = load_predictions(ctx)?;
    let mut groups: BTreeMap<(&str, &str), ConsumerPredictions> = BTreeMap::new();
    for p in predictions.iter().filter(|p| p.split == SplitName::Validation) {
        let g = groups.entry((&p.category, &p.consumer_id)).or_insert_with(|| ConsumerPredictions {
            consumer_id: p.consumer_id.clone(),
            actuals: Vec::new(),
            probabilities: Vec::new(),
        });
        g.actuals.push(p.label);
        g.probabilities.push(p.probability);
    }
    let mut by_cat: BTreeMap<&str, Vec<&ConsumerPredictions>> = BTreeMap::new();
    for ((category, _), g) in &groups {
        by_cat.entry(category).or_default().push(g);
    }
    let mut rows = Vec::new();
    for (category, consumers) in by_cat {
        let mut results = consumers
            .iter()
            .map(|c| maximize_for(c).map_err(|e| PipelineError::Schema(format!("{category}/{}: {e}", c.consumer_id))))
            .collect::<Result<Vec<_>, _>>()?;
        let probs: Vec<&[f64]> = consumers.iter().map(|c| c.probabilities.as_slice()).collect();
        assign_fallback(&mut results, &probs);
        rows.extend(results.into_iter().map(|r| ThresholdRow {
            category: category.to_string(),
            consumer_id: r.consumer_id,
            cutoff: r.cutoff,
            f1: r.f1,
            k: r.k,
            b: r.b,
            v: r.v,
            degenerate: r.degenerate,
        }));
    }
    let mut w = ctx.writer(Stage::Thresholds)?;
    w.write_csv("thresholds.csv", &rows)?;
    w.finish()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub category: String,
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub iterations: usize,
}

impl From<&SigmoidFit> for FitRow {
    fn from(f: &SigmoidFit) -> Self {
        Self {
            category: f.category.clone(),
            a: f.a,
            b: f.b,
            r_squared: f.r_squared,
            n_points: f.n_points,
            iterations: f.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityRow {
    pub category: String,
    pub consumer_id: String,
    pub item_id: String,
    pub k: f64,
    pub source: OfferSource,
    pub f_k: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub category: String,
    pub consumer_id: String,
    pub item_id: String,
    pub reason: String,
}

pub(crate) fn elasticity(ctx: &Context) -> Result<(), PipelineError> {
    let (window, series) = load_series(ctx.workspace)?;
    let predictions = load_predictions(ctx)?;
    let last = window.n_periods - 1;
    let index: BTreeMap<(&str, &str), &BiweeklySeries> =
        series.iter().map(|s| ((s.key.consumer_id.as_str(), s.key.item_id.as_str()), s)).collect();

    let mut points: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    let mut latest: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for p in &predictions {
        let Some(s) = index.get(&(p.consumer_id.as_str(), p.item_id.as_str())) else {
            return Err(PipelineError::Schema(format!("prediction for unknown pair {}/{}", p.consumer_id, p.item_id)));
        };
        let offer = s.offer_percent[p.period_index];
        if offer > 0.0 || ctx.config.elasticity.include_zero_offers {
            points.entry(&p.category).or_default().push((offer, p.probability));
        }
        if p.period_index == last {
            latest.insert((&p.consumer_id, &p.item_id), p.probability);
        }
    }

    let mut fits = Vec::new();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let skip = |s: &BiweeklySeries, reason: String| SkippedRow {
        category: s.key.category.clone(),
        consumer_id: s.key.consumer_id.clone(),
        item_id: s.key.item_id.clone(),
        reason,
    };
    for (category, members) in by_category(series.clone()) {
        let pts = points.get(category.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let fit = match fit_sigmoid(pts) {
            Ok(mut f) => {
                f.category = category.clone();
                f
            }
            Err(e) => {
                log::warn!("elasticity {category}: {e}");
                skipped.extend(members.iter().map(|s| skip(s, format!("no sigmoid fit: {e}"))));
                continue;
            }
        };
        let cohort = CategoryCohort::build(&members, window.n_periods);
        for s in &members {
            let Some(&f_k) = latest.get(&(s.key.consumer_id.as_str(), s.key.item_id.as_str())) else {
                skipped.push(skip(s, "no prediction for the latest period".into()));
                continue;
            };
            match reference_offer(s, &cohort) {
                Ok(r) => {
                    let rec = ElasticityRecord::new(r, &fit, f_k);
                    records.push(ElasticityRow {
                        category: rec.key.category,
                        consumer_id: rec.key.consumer_id,
                        item_id: rec.key.item_id,
                        k: rec.k,
                        source: rec.source,
                        f_k: rec.f_k,
                        epsilon: rec.epsilon,
                    });
                }
                Err(e) => skipped.push(skip(s, e.to_string())),
            }
        }
        fits.push(FitRow::from(&fit));
    }
    let mut w = ctx.writer(Stage::Elasticity)?;
    w.write_csv("fits.csv", &fits)?;
    w.write_csv("elasticity.csv", &records)?;
    w.write_csv("skipped.csv", &skipped)?;
    w.finish()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub category: String,
    pub consumer_id: String,
    pub item_id: String,
    pub price: f64,
    pub k: f64,
    pub f_k: f64,
    pub epsilon: f64,
    pub cutoff: f64,
    pub eta: f64,
    pub new_offer: f64,
    pub adjusted_prob: f64,
    pub indicator: bool,
    pub in_range: bool,
    pub retained: bool,
    pub revenue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub category: String,
    pub status: String,
    pub n_items: usize,
    pub n_excluded: usize,
    pub offer_low: f64,
    pub offer_high: f64,
    pub range_source: String,
    pub retention_floor: f64,
    pub retention: f64,
    pub total_revenue: f64,
    pub baseline_revenue: f64,
    pub weighted_offer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub category: String,
    pub consumer_id: String,
    pub item_id: String,
    pub reason: String,
}

/// Per-pair mean of the non-zero offers in `periods`.
fn pair_offers(members: &[&BiweeklySeries], periods: std::ops::Range<usize>) -> Vec<f64> {
    members
        .iter()
        .filter_map(|s| {
            let (sum, count) = s.promo_totals(periods.clone());
            (count > 0).then(|| sum / f64::from(count))
        })
        .collect()
}

pub(crate) fn optimize(ctx: &Context) -> Result<(), PipelineError> {
    let (window, series) = load_series(ctx.workspace)?;
    let records: Vec<ElasticityRow> = read_csv(&ctx.path(Stage::Elasticity, "elasticity.csv"))?;
    let fits: Vec<FitRow> = read_csv(&ctx.path(Stage::Elasticity, "fits.csv"))?;
    let thresholds: Vec<ThresholdRow> = read_csv(&ctx.path(Stage::Thresholds, "thresholds.csv"))?;
    let cutoffs: BTreeMap<(&str, &str), f64> =
        thresholds.iter().map(|t| ((t.category.as_str(), t.consumer_id.as_str()), t.cutoff)).collect();
    let index: BTreeMap<(&str, &str), &BiweeklySeries> =
        series.iter().map(|s| ((s.key.consumer_id.as_str(), s.key.item_id.as_str()), s)).collect();
    let fitted: BTreeSet<&str> = fits.iter().map(|f| f.category.as_str()).collect();
    let n = window.n_periods;
    let cfg = &ctx.config.optimize;

    let mut members: BTreeMap<&str, Vec<&BiweeklySeries>> = BTreeMap::new();
    for s in &series {
        members.entry(&s.key.category).or_default().push(s);
    }
    let mut by_cat: BTreeMap<&str, Vec<&ElasticityRow>> = BTreeMap::new();
    for r in &records {
        by_cat.entry(&r.category).or_default().push(r);
    }

    let mut decisions = Vec::new();
    let mut summary = Vec::new();
    let mut excluded = Vec::new();
    let mut infeasible = Vec::new();
    for (&category, pairs) in &members {
        let floor = cfg.floor_for(category);
        let rows = by_cat.get(category).cloned().unwrap_or_default();
        let with_record: BTreeSet<(&str, &str)> =
            rows.iter().map(|r| (r.consumer_id.as_str(), r.item_id.as_str())).collect();
        for s in pairs {
            if !with_record.contains(&(s.key.consumer_id.as_str(), s.key.item_id.as_str())) {
                excluded.push(ExcludedRow {
                    category: category.to_string(),
                    consumer_id: s.key.consumer_id.clone(),
                    item_id: s.key.item_id.clone(),
                    reason: "no elasticity record".into(),
                });
            }
        }
        let n_missing = excluded.iter().filter(|e| e.category == category).count();
        if !fitted.contains(category) {
            summary.push(SummaryRow {
                category: category.to_string(),
                status: "no_fit".into(),
                n_items: 0,
                n_excluded: n_missing,
                offer_low: 0.0,
                offer_high: 0.0,
                range_source: String::new(),
                retention_floor: floor,
                retention: 0.0,
                total_revenue: 0.0,
                baseline_revenue: 0.0,
                weighted_offer: 0.0,
            });
            continue;
        }

        let (range, range_source) = match offer_range(&pair_offers(pairs, n - 1..n), cfg.range_quantiles) {
            Some(r) => (r, "latest"),
            None => match offer_range(&pair_offers(pairs, 0..n), cfg.range_quantiles) {
                Some(r) => (r, "historical"),
                None => ((0.0, 100.0), "default"),
            },
        };
        let mut items = Vec::new();
        let mut excluded_here = n_missing;
        for r in &rows {
            let reason = match (
                index.get(&(r.consumer_id.as_str(), r.item_id.as_str())).and_then(|s| s.last_price(n - 1)),
                cutoffs.get(&(category, r.consumer_id.as_str())),
            ) {
                (Some(price), Some(&cutoff)) => {
                    let key = index[&(r.consumer_id.as_str(), r.item_id.as_str())].key.clone();
                    items.push(OfferItem { key, price, k: r.k, f_k: r.f_k, epsilon: r.epsilon, cutoff });
                    continue;
                }
                (None, _) => "no observed price",
                (_, None) => "no consumer cut-off",
            };
            excluded_here += 1;
            excluded.push(ExcludedRow {
                category: category.to_string(),
                consumer_id: r.consumer_id.clone(),
                item_id: r.item_id.clone(),
                reason: reason.into(),
            });
        }
        let problem =
            OptimizationProblem { category: category.to_string(), items, retention_floor: floor, offer_range: range };
        let (solution, status): (CategorySolution, &str) = match solve_category(&problem) {
            Ok(s) => (s, "ok"),
            Err(OptimizeError::Infeasible { solution, achieved, required, .. }) => {
                log::warn!("optimize {category}: retention {achieved:.4} below floor {required:.4}");
                infeasible.push(category.to_string());
                (*solution, "infeasible")
            }
            Err(e) => return Err(PipelineError::Schema(format!("{category}: {e}"))),
        };
        let baseline: f64 = problem.items.iter().map(|i| evaluate_choice(i, 0.0, range).revenue).sum();
        for (item, d) in problem.items.iter().zip(&solution.decisions) {
            decisions.push(DecisionRow {
                category: category.to_string(),
                consumer_id: item.key.consumer_id.clone(),
                item_id: item.key.item_id.clone(),
                price: item.price,
                k: item.k,
                f_k: item.f_k,
                epsilon: item.epsilon,
                cutoff: item.cutoff,
                eta: d.eta,
                new_offer: d.new_offer,
                adjusted_prob: d.adjusted_prob,
                indicator: d.indicator,
                in_range: d.in_range,
                retained: d.retained(),
                revenue: d.revenue,
            });
        }
        summary.push(SummaryRow {
            category: category.to_string(),
            status: status.into(),
            n_items: solution.decisions.len(),
            n_excluded: excluded_here,
            offer_low: range.0,
            offer_high: range.1,
            range_source: range_source.into(),
            retention_floor: floor,
            retention: solution.retention,
            total_revenue: solution.total_revenue,
            baseline_revenue: baseline,
            weighted_offer: solution.weighted_offer,
        });
    }
    let mut w = ctx.writer(Stage::Optimize)?;
    w.write_csv("decisions.csv", &decisions)?;
    w.write_csv("summary.csv", &summary)?;
    w.write_csv("excluded.csv", &excluded)?;
    w.finish()?;
    if infeasible.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Infeasible { categories: infeasible })
    }
}
