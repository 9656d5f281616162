//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use offeropt::elasticity::{elasticity, fit_sigmoid, numeric_elasticity, sigmoid};
use offeropt::featurize::{make_samples, FeatureSpec, SampleRow, ALL_GROUPS};
use offeropt::ingest::{split_periods, BiweeklySeries, ConsumerItemKey, SplitSpec, StaticAttributes};
use offeropt::optimizer::{eta_candidates, solve_category, OfferItem, OptimizationProblem, OptimizeError};
use offeropt::pipeline::{
    init_workspace, read_csv, run_all, DecisionRow, PipelineConfig, SummaryRow, TABLE_COLUMNS,
};
use offeropt::synth::{gen_synthetic, OfferModel, Response, SyntheticConfig};
use offeropt::tcn::{
    backward, bce_loss, causal_dilated_conv, forward, train, Architecture, ConvLayerConfig, NetworkConfig,
    NetworkParams, Scheduler, TrainConfig,
};
use offeropt::threshold::maximize_threshold;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn key(i: usize) -> ConsumerItemKey {
    ConsumerItemKey { consumer_id: format!("c{i}"), item_id: format!("i{i}"), category: "x".into() }
}

// 1

fn tiny_network() -> NetworkConfig {
    NetworkConfig {
        static_vocab: vec![3, 5],
        static_embedding: vec![2, 2],
        temporal_vocab: vec![4],
        temporal_embedding: vec![2],
        static_continuous: 2,
        temporal_continuous: 3,
        n_lags: 8,
        conv: [1, 2, 4].into_iter().map(|dilation| ConvLayerConfig { kernel_size: 2, dilation, channels: 4 }).collect(),
        fc: vec![8, 8, 8],
    }
}

fn random_sample(cfg: &NetworkConfig, rng: &mut ChaCha8Rng, label: u8) -> SampleRow {
    SampleRow {
        key: key(0),
        period_index: cfg.n_lags,
        label,
        static_categorical: cfg.static_vocab.iter().map(|&v| rng.gen_range(0..v)).collect(),
        temporal_categorical: (0..cfg.n_lags)
            .map(|_| cfg.temporal_vocab.iter().map(|&v| rng.gen_range(0..v)).collect())
            .collect(),
        static_continuous: (0..cfg.static_continuous).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        temporal_continuous: (0..cfg.n_lags)
            .map(|_| (0..cfg.temporal_continuous).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
    }
}

fn gradient_check() -> Outcome {
    let cfg = tiny_network();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch: Vec<SampleRow> = [1, 0, 1, 0].into_iter().map(|y| random_sample(&cfg, &mut rng, y)).collect();
    let mut params = NetworkParams::init(cfg, 5).expect("valid network");
    // Random rather than zero biases so every ReLU is well away from its kink.
    for v in &mut params.values {
        if *v == 0.0 {
            *v = rng.gen_range(-0.3..0.3);
        }
    }
    let (_, grad) = backward(&batch, &params).expect("shapes match");
    let labels: Vec<u8> = batch.iter().map(|r| r.label).collect();
    let loss = |p: &NetworkParams| bce_loss(&forward(&batch, p).unwrap(), &labels).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut worst_at = 0;
    for (i, &g) in grad.iter().enumerate() {
        let x = params.values[i];
        params.values[i] = x + h;
        let up = loss(&params);
        params.values[i] = x - h;
        let down = loss(&params);
        params.values[i] = x;
        let fd = (up - down) / (2.0 * h);
        let scale = g.abs().max(fd.abs());
        // Both at round-off level: nothing to compare.
        let rel = if scale < 1e-9 { 0.0 } else { (g - fd).abs() / scale };
        if rel > worst {
            worst = rel;
            worst_at = i;
        }
    }
    Outcome::new(
        worst < 1e-4,
        format!("{} parameters, max relative error {worst:.2e} at index {worst_at} (tolerance 1e-4)", grad.len()),
    )
}

// 2

fn brute_conv(x: &[f64], f: &[f64], d: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for (s, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, &fi) in f.iter().enumerate() {
            let j = s as i64 - (d * i) as i64;
            if j >= 0 {
                acc += fi * x[j as usize];
            }
        }
        *out = acc;
    }
    y
}

fn convolution_check() -> Outcome {
    let hand = causal_dilated_conv(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0], 2) == vec![1.0, 2.0, 4.0, 6.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..40);
        let k = rng.gen_range(1..6);
        let d = rng.gen_range(1..9);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let f: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        if causal_dilated_conv(&x, &f, d) != brute_conv(&x, &f, d) {
            mismatches += 1;
        }
    }
    Outcome::new(hand && mismatches == 0, format!("hand case {hand}, {mismatches}/1000 random instances differ"))
}

// 3

/// Labels follow a per-pair cycle of length 1 to 4 with a random phase, so
/// the last four labels determine the next one.
fn separable_series(n_pairs: usize, periods: usize, seed: u64) -> Vec<BiweeklySeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_pairs)
        .map(|i| {
            let cycle = rng.gen_range(1..=4);
            let phase = rng.gen_range(0..cycle);
            let labels: Vec<u8> = (0..periods).map(|t| u8::from((t + phase) % cycle == 0)).collect();
            let offer: Vec<f64> = labels.iter().map(|&l| if l == 1 { 10.0 } else { 0.0 }).collect();
            BiweeklySeries {
                key: ConsumerItemKey {
                    consumer_id: format!("c{}", i / 4),
                    item_id: format!("i{}", i % 4),
                    category: "Grocery".into(),
                },
                origin_date: NaiveDate::from_ymd_opt(2019, 1, 7).unwrap(),
                promo_offer_sum: offer.clone(),
                promo_count: labels.iter().map(|&l| u32::from(l)).collect(),
                price: labels.iter().map(|&l| if l == 1 { 50.0 } else { 0.0 }).collect(),
                quantity: labels.iter().map(|&l| f64::from(l)).collect(),
                offer_percent: offer,
                labels,
                attributes: StaticAttributes::default(),
            }
        })
        .collect()
}

fn training_smoke() -> Outcome {
    let start = Instant::now();
    let split = SplitSpec { train_periods: 20, validation_periods: 3, test_periods: 3 };
    let series = separable_series(200, 26, 3);
    let spec = FeatureSpec::fit(&series, &split, 4, &ALL_GROUPS).unwrap();
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for s in &series {
        let sp = split_periods(s.len(), &split).unwrap();
        for row in make_samples(s, &spec).unwrap() {
            if sp.train.contains(&row.period_index) {
                tr.push(row);
            } else if sp.validation.contains(&row.period_index) {
                va.push(row);
            }
        }
    }
    let network = NetworkConfig::from_manifest(&spec.manifest(), &Architecture::default());
    let cfg = TrainConfig { epochs: 50, seed: 9, ..TrainConfig::default() };
    let (_, first) = train(&tr, &va, &network, &cfg).unwrap();
    let (_, second) = train(&tr, &va, &network, &cfg).unwrap();
    let loss = first.final_validation_loss;
    let same = loss.to_bits() == second.final_validation_loss.to_bits();
    let elapsed = start.elapsed();
    Outcome::new(
        loss < 0.25 && same && elapsed < Duration::from_secs(300),
        format!(
            "validation BCE {loss:.4} (< 0.25), reruns bit-identical {same}, {} train rows, {:.1}s for two runs (< 300s)",
            tr.len(),
            elapsed.as_secs_f64()
        ),
    )
}

// 4

fn grid_f1(a: &[u8], p: &[f64]) -> f64 {
    let b = a.iter().filter(|&&x| x == 1).count();
    (0..=1000)
        .map(|i| {
            let c = i as f64 / 1000.0;
            let k = p.iter().filter(|&&x| x >= c).count();
            let v = p.iter().zip(a).filter(|(&x, &y)| x >= c && y == 1).count();
            if k + b == 0 {
                0.0
            } else {
                (2 * v) as f64 / (k + b) as f64
            }
        })
        .fold(0.0, f64::max)
}

fn f1_oracle() -> Outcome {
    let hand = maximize_threshold(&[1, 0, 1], &[0.9, 0.8, 0.3]).unwrap();
    let hand_ok = hand.cutoff == 0.3 && (hand.f1 - 0.8).abs() < 1e-15;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=20);
        // Probabilities on the grid itself so the grid contains every
        // candidate cut-off.
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(1..1000) as f64 / 1000.0).collect();
        let a: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
        if maximize_threshold(&a, &p).unwrap().f1 != grid_f1(&a, &p) {
            mismatches += 1;
        }
    }
    Outcome::new(
        hand_ok && mismatches == 0,
        format!("hand case F1 {} at {}, {mismatches}/1000 random instances differ from the grid", hand.f1, hand.cutoff),
    )
}

// 5

const A_GRID: [f64; 4] = [0.02, 0.05, 0.1, 0.2];
const B_GRID: [f64; 4] = [-4.0, -2.0, -1.0, 0.0];

fn offers_30() -> Vec<f64> {
    (0..30).map(|i| 1.0 + 49.0 * i as f64 / 29.0).collect()
}

fn sigmoid_recovery() -> Outcome {
    let ks = offers_30();
    let mut worst_param = 0.0f64;
    let mut worst_r2 = 1.0f64;
    for a in A_GRID {
        for b in B_GRID {
            let pts: Vec<(f64, f64)> = ks.iter().map(|&k| (k, sigmoid(a * k + b))).collect();
            let fit = fit_sigmoid(&pts).unwrap();
            // b = 0 has no relative scale; its error is taken as absolute.
            let eb = if b == 0.0 { fit.b.abs() } else { ((fit.b - b) / b).abs() };
            worst_param = worst_param.max(((fit.a - a) / a).abs()).max(eb);
            worst_r2 = worst_r2.min(fit.r_squared);
        }
    }
    let noise = Normal::new(0.0, 0.02).unwrap();
    let mut passing = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> =
            ks.iter().map(|&k| (k, sigmoid(0.08 * k - 1.5) + noise.sample(&mut rng))).collect();
        if fit_sigmoid(&pts).unwrap().r_squared >= 0.95 {
            passing += 1;
        }
    }
    Outcome::new(
        worst_param < 1e-4 && worst_r2 >= 1.0 - 1e-8 && passing >= 95,
        format!(
            "noiseless: max relative parameter error {worst_param:.2e} (< 1e-4), min R2 1-{:.1e} (>= 1-1e-8); noisy: {passing}/100 with R2 >= 0.95 (>= 95)",
            1.0 - worst_r2
        ),
    )
}

// 6

fn elasticity_consistency() -> Outcome {
    let mut worst = 0.0f64;
    for a in A_GRID {
        for b in B_GRID {
            for k in 1..=50 {
                let k = k as f64;
                let analytic = elasticity(a, k, sigmoid(a * k + b));
                let numeric = numeric_elasticity(a, b, k);
                worst = worst.max(((analytic - numeric) / analytic).abs());
            }
        }
    }
    Outcome::new(worst < 1e-3, format!("max relative difference {worst:.2e} over 800 points (< 1e-3)"))
}

// 7

fn random_problem(rng: &mut ChaCha8Rng) -> OptimizationProblem {
    let n = rng.gen_range(0..=3);
    let o1 = rng.gen_range(0.0..40.0);
    let o2 = rng.gen_range(o1 + 1.0..=100.0);
    OptimizationProblem {
        category: "x".into(),
        items: (0..n)
            .map(|i| OfferItem {
                key: key(i),
                price: rng.gen_range(1.0..200.0),
                k: rng.gen_range(1.0..60.0),
                f_k: rng.gen_range(0.01..0.99),
                epsilon: rng.gen_range(0.0..2.0),
                cutoff: rng.gen_range(0.05..0.95),
            })
            .collect(),
        retention_floor: rng.gen_range(0.0..=1.0),
        offer_range: (o1, o2),
    }
}

/// Revenue and retention of one joint assignment, from the objective
/// written out directly.
fn joint_value(p: &OptimizationProblem, etas: &[f64]) -> (f64, usize) {
    let (mut revenue, mut kept) = (0.0, 0);
    for (item, &eta) in p.items.iter().zip(etas) {
        let offer = item.k * (1.0 + eta);
        let prob = (item.f_k * (1.0 + eta * item.epsilon)).clamp(0.0, 1.0);
        if prob >= item.cutoff && offer >= p.offer_range.0 && offer <= p.offer_range.1 {
            revenue += item.price * (1.0 - offer / 100.0);
            kept += 1;
        }
    }
    (revenue, kept)
}

/// Best feasible total revenue over all 39^n assignments, `None` when no
/// assignment meets the floor.
fn exhaustive(p: &OptimizationProblem) -> Option<f64> {
    let etas = eta_candidates();
    let n = p.items.len();
    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; n];
    loop {
        let choice: Vec<f64> = idx.iter().map(|&i| etas[i]).collect();
        let (revenue, kept) = joint_value(p, &choice);
        let retention = if n == 0 { 1.0 } else { kept as f64 / n as f64 };
        if retention >= p.retention_floor && best.is_none_or(|b| revenue > b) {
            best = Some(revenue);
        }
        let mut pos = 0;
        while pos < n {
            idx[pos] += 1;
            if idx[pos] < etas.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == n {
            return best;
        }
    }
}

fn optimizer_exactness() -> Outcome {
    let worked = OptimizationProblem {
        category: "x".into(),
        items: vec![OfferItem { key: key(0), price: 100.0, k: 20.0, f_k: 0.4, epsilon: 0.6, cutoff: 0.5 }],
        retention_floor: 0.0,
        offer_range: (0.0, 100.0),
    };
    let s = solve_category(&worked).unwrap();
    let d = &s.decisions[0];
    let worked_ok = (d.eta - 0.45).abs() < 1e-12 && (d.revenue - 71.0).abs() < 1e-9;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut mismatches, mut infeasible) = (0, 0);
    for _ in 0..500 {
        let p = random_problem(&mut rng);
        let truth = exhaustive(&p);
        let ours = match solve_category(&p) {
            Ok(s) => Some(s.total_revenue),
            Err(OptimizeError::Infeasible { .. }) => None,
            Err(e) => panic!("{e}"),
        };
        infeasible += usize::from(truth.is_none());
        let agree = match (truth, ours) {
            (Some(t), Some(o)) => (t - o).abs() <= 1e-9 * t.abs().max(1.0),
            (None, None) => true,
            _ => false,
        };
        mismatches += usize::from(!agree);
    }
    Outcome::new(
        worked_ok && mismatches == 0,
        format!(
            "worked example eta {:.2} revenue {:.4}; {mismatches}/500 random problems disagree ({infeasible} infeasible)",
            d.eta, d.revenue
        ),
    )
}

// 8

/// Generator settings for the end-to-end run.
fn uplift_data() -> SyntheticConfig {
    let responses = vec![Response { a: 0.1, b: -3.0 }, Response { a: 0.08, b: -3.5 }, Response { a: 0.12, b: -4.0 }];
    let mut cfg = SyntheticConfig::new(2, 400, 12, responses, 26);
    cfg.offers = OfferModel::PairAnchored { jitter: 1.0 };
    cfg
}

fn proportions_normalized(v: &serde_json::Value, worst: &mut f64, count: &mut usize) {
    match v {
        serde_json::Value::Array(items) if items.iter().all(|b| b.get("proportion").is_some()) && !items.is_empty() => {
            let n: f64 = items.iter().map(|b| b["count"].as_f64().unwrap()).sum();
            if n > 0.0 {
                let s: f64 = items.iter().map(|b| b["proportion"].as_f64().unwrap()).sum();
                *worst = worst.max((s - 1.0).abs());
                *count += 1;
            }
        }
        serde_json::Value::Array(items) => items.iter().for_each(|x| proportions_normalized(x, worst, count)),
        serde_json::Value::Object(m) => m.values().for_each(|x| proportions_normalized(x, worst, count)),
        _ => {}
    }
}

fn end_to_end(ws: &Path) -> Outcome {
    let start = Instant::now();
    let synth = uplift_data();
    let data = gen_synthetic(&synth).unwrap();
    offeropt::ingest::write_transactions(ws.join("transactions.csv"), &data.records).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.train.epochs = 60;
    cfg.train.scheduler = Scheduler::Cyclical { base_lr: 1e-6, max_lr: 1e-2 };
    init_workspace(ws, &cfg, true).unwrap();
    if let Err(e) = run_all(ws) {
        return Outcome::new(false, format!("pipeline failed: {e}"));
    }

    let truth: BTreeMap<String, Response> =
        data.truth.iter().map(|t| (t.category.clone(), Response { a: t.a, b: t.b })).collect();
    let decisions: Vec<DecisionRow> = read_csv(&ws.join("optimize/decisions.csv")).unwrap();
    let summary: Vec<SummaryRow> = read_csv(&ws.join("optimize/summary.csv")).unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for s in &summary {
        let r = truth[&s.category];
        let in_range = |o: f64| o >= s.offer_low && o <= s.offer_high;
        let (mut opt, mut base, mut opt_exp, mut base_exp) = (0.0, 0.0, 0.0, 0.0);
        for d in decisions.iter().filter(|d| d.category == s.category) {
            let (p_new, p_ref) = (r.probability(d.new_offer), r.probability(d.k));
            let (m_new, m_ref) = (d.price * (1.0 - d.new_offer / 100.0), d.price * (1.0 - d.k / 100.0));
            if p_new >= d.cutoff && in_range(d.new_offer) {
                opt += m_new;
            }
            if p_ref >= d.cutoff && in_range(d.k) {
                base += m_ref;
            }
            opt_exp += m_new * p_new;
            base_exp += m_ref * p_ref;
        }
        let ok = s.status == "ok" && opt >= base && s.retention >= s.retention_floor;
        pass &= ok;
        lines.push(format!(
            "{}: revenue under true response {opt:.1} vs eta=0 {base:.1}, retention {:.3} (floor {:.2}), true purchase-weighted revenue {opt_exp:.1} vs {base_exp:.1} (informational)",
            s.category, s.retention, s.retention_floor
        ));
    }
    pass &= summary.len() == synth.n_categories;

    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.join("report/table1.json")).unwrap()).unwrap();
    let rows = table["rows"].as_array().unwrap();
    let columns_ok = rows.len() == synth.n_categories
        && rows.iter().all(|row| TABLE_COLUMNS.iter().all(|c| row.get(*c).is_some_and(|v| !v.is_null())));
    let (mut worst, mut count) = (0.0f64, 0);
    for f in ["probability_histograms.json", "cutoff_histogram.json", "offer_histograms.json"] {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(ws.join("report").join(f)).unwrap()).unwrap();
        proportions_normalized(&v, &mut worst, &mut count);
    }
    let elapsed = start.elapsed();
    pass &= columns_ok && worst <= 1e-9 && count > 0 && elapsed < Duration::from_secs(900);
    lines.push(format!(
        "table columns present {columns_ok}; {count} histograms, max |sum - 1| {worst:.1e}; {:.0}s (< 900s)",
        elapsed.as_secs_f64()
    ));
    Outcome::new(pass, lines.join("\n    "))
}

fn main() {
    let ws = tempfile::tempdir().unwrap();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("gradient correctness", Box::new(gradient_check)),
        ("dilated causal convolution", Box::new(convolution_check)),
        ("training smoke test", Box::new(training_smoke)),
        ("F1-maximization oracle", Box::new(f1_oracle)),
        ("sigmoid recovery", Box::new(sigmoid_recovery)),
        ("elasticity consistency", Box::new(elasticity_consistency)),
        ("optimizer exactness", Box::new(optimizer_exactness)),
        ("end-to-end uplift", Box::new(move || end_to_end(ws.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Outcome::new(false, "panicked"));
        failed += usize::from(!outcome.pass);
        println!(
            "criterion {} {name}: {} ({:.1}s)\n    {}",
            i + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
