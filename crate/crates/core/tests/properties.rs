use chrono::NaiveDate;
use offeropt::elasticity::{fit_sigmoid, sigmoid};
use offeropt::featurize::{make_samples, rolling_offsets, sample_at, FeatureSpec, ALL_GROUPS};
use offeropt::ingest::{
    build_series, read_transactions, write_transactions, BiweeklySeries, ColumnMapping, ConsumerItemKey, SeriesWindow,
    SplitSpec, StaticAttributes, TransactionRecord,
};
use offeropt::optimizer::{eta_candidates, evaluate_choice, solve_category, OfferItem, OptimizationProblem, OptimizeError};
use offeropt::threshold::{f1_at, maximize_threshold};
use proptest::prelude::*;

fn origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 1, 7).unwrap()
}

fn series_from(labels: Vec<u8>, offers: Vec<f64>, consumer: &str) -> BiweeklySeries {
    let offer_percent: Vec<f64> = labels.iter().zip(&offers).map(|(&l, &o)| if l == 1 { o } else { 0.0 }).collect();
    BiweeklySeries {
        key: ConsumerItemKey { consumer_id: consumer.into(), item_id: "i1".into(), category: "Bakery".into() },
        origin_date: origin(),
        promo_offer_sum: offer_percent.clone(),
        promo_count: offer_percent.iter().map(|&o| u32::from(o > 0.0)).collect(),
        price: labels.iter().map(|&l| if l == 1 { 12.5 } else { 0.0 }).collect(),
        quantity: labels.iter().map(|&l| f64::from(l) * 2.0).collect(),
        offer_percent,
        labels,
        attributes: StaticAttributes::default(),
    }
}

fn arb_series() -> impl Strategy<Value = BiweeklySeries> {
    (8usize..30).prop_flat_map(|n| {
        (prop::collection::vec(0u8..=1, n), prop::collection::vec(0.0f64..100.0, n))
            .prop_map(|(l, o)| series_from(l, o, "c1"))
    })
}

fn split() -> SplitSpec {
    SplitSpec { train_periods: 4, validation_periods: 2, test_periods: 2 }
}

/// Population moments computed term by term with the same operations.
fn brute_moments(window: &[f64]) -> [f64; 5] {
    let n = window.len() as f64;
    let mut sum = 0.0;
    for &x in window {
        sum += x;
    }
    let mean = sum / n;
    let mut s = window.to_vec();
    s.sort_by(f64::total_cmp);
    let median = if s.len() % 2 == 1 { s[s.len() / 2] } else { (s[s.len() / 2 - 1] + s[s.len() / 2]) / 2.0 };
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in window {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if window.iter().all(|&x| x == window[0]) {
        [mean, median, m2, 0.0, 0.0]
    } else {
        [mean, median, m2, m4 / (m2 * m2) - 3.0, m3 / m2.powf(1.5)]
    }
}

proptest! {
    #[test]
    fn rolling_matches_brute_force(history in prop::collection::vec(-50.0f64..50.0, 1..20), lags in 1usize..8) {
        let r = rolling_offsets(&history, lags);
        let window = &history[history.len().saturating_sub(lags)..];
        let want = brute_moments(window);
        prop_assert_eq!([r.mean, r.median, r.variance, r.kurtosis, r.skewness], want);
    }

    #[test]
    fn samples_are_causal(s in arb_series(), cut in 0usize..30) {
        let spec = FeatureSpec::fit(std::slice::from_ref(&s), &split(), 4, &ALL_GROUPS).unwrap();
        let t = 4 + cut % (s.len() - 4);
        let full = sample_at(&s, &spec, t).unwrap();
        let mut truncated = s.clone();
        let keep = t + 1;
        truncated.labels.truncate(keep);
        truncated.offer_percent.truncate(keep);
        truncated.price.truncate(keep);
        truncated.quantity.truncate(keep);
        truncated.promo_offer_sum.truncate(keep);
        truncated.promo_count.truncate(keep);
        prop_assert_eq!(sample_at(&truncated, &spec, t).unwrap(), full);
    }

    #[test]
    fn sample_values_finite_and_in_vocabulary(s in arb_series()) {
        let spec = FeatureSpec::fit(std::slice::from_ref(&s), &split(), 4, &ALL_GROUPS).unwrap();
        let m = spec.manifest();
        let rows = make_samples(&s, &spec).unwrap();
        prop_assert_eq!(rows.len(), s.len() - 4);
        for r in rows {
            prop_assert_eq!(r.label, s.labels[r.period_index]);
            prop_assert_eq!(r.temporal_continuous.len(), 4);
            prop_assert!(r.static_continuous.iter().chain(r.temporal_continuous.iter().flatten()).all(|v| v.is_finite()));
            for (idx, (_, size)) in r.static_categorical.iter().zip(&m.static_categorical) {
                prop_assert!(idx < size);
            }
            for row in &r.temporal_categorical {
                for (idx, (_, size)) in row.iter().zip(&m.temporal_categorical) {
                    prop_assert!(idx < size);
                }
            }
        }
    }

    #[test]
    fn series_labels_match_transactions(days in prop::collection::vec((0i64..112, 0usize..3, 0usize..3, 0.0f64..60.0), 1..60)) {
        let records: Vec<TransactionRecord> = days.iter().map(|&(d, c, i, o)| TransactionRecord {
            date: origin() + chrono::Duration::days(d),
            consumer_id: format!("c{c}"),
            item_id: format!("i{i}"),
            quantity: 1,
            selling_price: 10.0,
            offer_percent: o,
            category: "Grocery".into(),
            brand: "b".into(),
            age_band: None,
            marital_status: Some("Single".into()),
            family_size: None,
            location: None,
        }).collect();
        let window = SeriesWindow::new(origin(), origin() + chrono::Duration::days(112), 6).unwrap();
        for s in build_series(&records, &window) {
            prop_assert_eq!(s.len(), 8);
            for (p, &l) in s.labels.iter().enumerate() {
                let any = records.iter().any(|r| {
                    r.consumer_id == s.key.consumer_id && r.item_id == s.key.item_id && (r.date - origin()).num_days() / 14 == p as i64
                });
                prop_assert_eq!(l == 1, any);
            }
            prop_assert!(s.labels[..6].contains(&1));
        }
    }

    #[test]
    fn transaction_csv_round_trip(offers in prop::collection::vec(0.0f64..=100.0, 1..20)) {
        let records: Vec<TransactionRecord> = offers.iter().enumerate().map(|(i, &o)| TransactionRecord {
            date: origin() + chrono::Duration::days(i as i64),
            consumer_id: format!("c{i}"),
            item_id: "i, with comma".into(),
            quantity: 2,
            selling_price: 3.25,
            offer_percent: o,
            category: "Meat".into(),
            brand: "b".into(),
            age_band: Some("26-35".into()),
            marital_status: Some("Married".into()),
            family_size: Some("2".into()),
            location: Some("loc1".into()),
        }).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_transactions(&path, &records).unwrap();
        let back = read_transactions(std::fs::File::open(&path).unwrap(), &ColumnMapping::default()).unwrap();
        prop_assert_eq!(back, records);
    }

    #[test]
    fn maximized_f1_dominates(pairs in prop::collection::vec((0u8..=1, 0.0f64..=1.0), 1..25), c in 0.001f64..0.999) {
        let (a, p): (Vec<u8>, Vec<f64>) = pairs.into_iter().unzip();
        let r = maximize_threshold(&a, &p).unwrap();
        prop_assert!(r.cutoff > 0.0 && r.cutoff < 1.0);
        prop_assert!(r.f1 >= f1_at(&a, &p, c).unwrap().f1);
        prop_assert_eq!(r.f1, f1_at(&a, &p, r.cutoff).unwrap().f1);
    }

    #[test]
    fn fitted_curve_increases(a in 0.01f64..0.2, b in -4.0f64..0.0) {
        let pts: Vec<(f64, f64)> = (1..=20).map(|i| {
            let k = i as f64 * 2.5;
            (k, sigmoid(a * k + b) + if i % 2 == 0 { 0.01 } else { -0.01 })
        }).collect();
        let fit = fit_sigmoid(&pts).unwrap();
        prop_assert!(fit.r_squared <= 1.0);
        prop_assert!(fit.a > 0.0);
        let f: Vec<f64> = (0..50).map(|k| fit.predict(k as f64)).collect();
        prop_assert!(f.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn item_choice_never_worse_than_unchanged(
        price in 1.0f64..300.0, k in 1.0f64..80.0, f_k in 0.0f64..=1.0, epsilon in 0.0f64..3.0,
        cutoff in 0.01f64..0.99, o1 in 0.0f64..50.0, width in 1.0f64..50.0,
    ) {
        let item = OfferItem {
            key: ConsumerItemKey { consumer_id: "c".into(), item_id: "i".into(), category: "x".into() },
            price, k, f_k, epsilon, cutoff,
        };
        let problem = OptimizationProblem {
            category: "x".into(), items: vec![item.clone()], retention_floor: 0.0, offer_range: (o1, o1 + width),
        };
        let d = solve_category(&problem).unwrap().decisions.remove(0);
        let unchanged = evaluate_choice(&item, 0.0, problem.offer_range);
        prop_assert!(d.revenue >= unchanged.revenue);
        prop_assert!(eta_candidates().contains(&d.eta));
        prop_assert!((d.new_offer - k * (1.0 + d.eta)).abs() < 1e-12);
        prop_assert!(d.adjusted_prob >= 0.0 && d.adjusted_prob <= 1.0);
        if !d.retained() {
            prop_assert_eq!(d.eta, 0.0);
            prop_assert!(eta_candidates().iter().all(|&e| !evaluate_choice(&item, e, problem.offer_range).retained()));
        }
    }

    #[test]
    fn raising_the_floor_only_adds_infeasibility(
        fs in prop::collection::vec(0.05f64..0.95, 1..8), c in 0.1f64..0.9, lo in 0.0f64..1.0, hi in 0.0f64..1.0,
    ) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let items: Vec<OfferItem> = fs.iter().enumerate().map(|(i, &f)| OfferItem {
            key: ConsumerItemKey { consumer_id: format!("c{i}"), item_id: "i".into(), category: "x".into() },
            price: 10.0, k: 20.0, f_k: f, epsilon: 0.5, cutoff: c,
        }).collect();
        let solve = |floor: f64| solve_category(&OptimizationProblem {
            category: "x".into(), items: items.clone(), retention_floor: floor, offer_range: (0.0, 100.0),
        });
        let low = solve(lo);
        let high = solve(hi);
        if high.is_ok() {
            prop_assert!(low.is_ok());
        }
        let retention = |r: &Result<offeropt::optimizer::CategorySolution, OptimizeError>| match r {
            Ok(s) => s.retention,
            Err(OptimizeError::Infeasible { achieved, .. }) => *achieved,
            Err(e) => panic!("{e}"),
        };
        prop_assert_eq!(retention(&low), retention(&high));
    }
}
