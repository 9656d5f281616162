use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub proportion: f64,
}

/// Equal-width bins over `[lo, hi]`; the last bin is closed on the right and
/// values outside the range are clamped into the edge bins. Proportions are
/// all 0 for an empty input.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<Bin> {
    assert!(bins > 0 && hi > lo, "histogram needs bins > 0 and hi > lo");
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let i = ((v - lo) / width).floor();
        let i = if i < 0.0 { 0 } else { (i as usize).min(bins - 1) };
        counts[i] += 1;
    }
    let total: usize = counts.iter().sum();
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| Bin {
            lower: lo + width * i as f64,
            upper: if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 },
            count,
            proportion: if total == 0 { 0.0 } else { count as f64 / total as f64 },
        })
        .collect()
}
