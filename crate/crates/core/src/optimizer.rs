//! Per-category offer assignment: every consumer-item pair gets the offer
//! multiplier that maximizes its net revenue, then the category's retention
//! rate is checked against its floor.
//!
//! An item is retained when its adjusted purchase probability clears the
//! consumer's cut-off and its new offer lies inside the category's offer
//! range. Revenue contributions are non-negative and independent across
//! items, so solving items one at a time is exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::{histogram, Bin};
use crate::ingest::ConsumerItemKey;

pub const ETA_STEP: f64 = 0.05;
pub const ETA_STEPS: i32 = 19;
pub const DEFAULT_RANGE_QUANTILES: (f64, f64) = (0.01, 0.99);

/// The 39 multiplier changes `0.05 * j` for `j` in `-19..=19`, ascending.
pub fn eta_candidates() -> Vec<f64> {
    (-ETA_STEPS..=ETA_STEPS).map(|j| f64::from(j) / (1.0 / ETA_STEP)).collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum OptimizeError {
    #[error("offer range ({0}, {1}) must satisfy 0 <= o1 < o2 <= 100")]
    Range(f64, f64),
    #[error("retention floor {0} outside [0, 1]")]
    Floor(f64),
    #[error("item {index}: {message}")]
    Item { index: usize, message: String },
    #[error("category {category}: retention {achieved:.4} below floor {required:.4}")]
    Infeasible {
        category: String,
        achieved: f64,
        required: f64,
        /// Items that no candidate offer could retain.
        binding: Vec<ConsumerItemKey>,
        solution: Box<CategorySolution>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferItem {
    pub key: ConsumerItemKey,
    pub price: f64,
    /// Reference offer percent.
    pub k: f64,
    /// Purchase probability at the reference offer.
    pub f_k: f64,
    pub epsilon: f64,
    /// The consumer's probability cut-off.
    pub cutoff: f64,
}

impl OfferItem {
    fn validate(&self, index: usize) -> Result<(), OptimizeError> {
        let bad = |message: &str| Err(OptimizeError::Item { index, message: message.to_string() });
        if !(self.price.is_finite() && self.price >= 0.0) {
            return bad("price must be finite and non-negative");
        }
        if !(self.k.is_finite() && self.k > 0.0 && self.k <= 100.0) {
            return bad("reference offer must be in (0, 100]");
        }
        if !(0.0..=1.0).contains(&self.f_k) {
            return bad("probability must be in [0, 1]");
        }
        if !self.epsilon.is_finite() {
            return bad("elasticity must be finite");
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return bad("cut-off must be in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub category: String,
    pub items: Vec<OfferItem>,
    pub retention_floor: f64,
    pub offer_range: (f64, f64),
}

impl OptimizationProblem {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let (o1, o2) = self.offer_range;
        if !(0.0 <= o1 && o1 < o2 && o2 <= 100.0) {
            return Err(OptimizeError::Range(o1, o2));
        }
        if !(0.0..=1.0).contains(&self.retention_floor) {
            return Err(OptimizeError::Floor(self.retention_floor));
        }
        self.items.iter().enumerate().try_for_each(|(i, item)| item.validate(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferDecision {
    pub key: ConsumerItemKey,
    pub eta: f64,
    pub new_offer: f64,
    pub adjusted_prob: f64,
    /// Adjusted probability clears the cut-off.
    pub indicator: bool,
    /// New offer inside the offer range.
    pub in_range: bool,
    pub revenue: f64,
}

impl OfferDecision {
    pub fn retained(&self) -> bool {
        self.indicator && self.in_range
    }
}

pub fn evaluate_choice(item: &OfferItem, eta: f64, offer_range: (f64, f64)) -> OfferDecision {
    let new_offer = item.k * (1.0 + eta);
    let adjusted_prob = (item.f_k * (1.0 + eta * item.epsilon)).clamp(0.0, 1.0);
    let indicator = adjusted_prob >= item.cutoff;
    let in_range = new_offer >= offer_range.0 && new_offer <= offer_range.1;
    let revenue = if indicator && in_range { item.price * (1.0 - new_offer / 100.0) } else { 0.0 };
    OfferDecision { key: item.key.clone(), eta, new_offer, adjusted_prob, indicator, in_range, revenue }
}

/// Highest-revenue retained candidate, the smallest offer on ties; the
/// unchanged offer when no candidate retains the item.
pub fn solve_item(item: &OfferItem, candidates: &[f64], offer_range: (f64, f64)) -> OfferDecision {
    let mut best: Option<OfferDecision> = None;
    for &eta in candidates {
        let d = evaluate_choice(item, eta, offer_range);
        if !d.retained() {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => d.revenue > b.revenue || (d.revenue == b.revenue && d.new_offer < b.new_offer),
        };
        if better {
            best = Some(d);
        }
    }
    best.unwrap_or_else(|| evaluate_choice(item, 0.0, offer_range))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySolution {
    pub category: String,
    pub decisions: Vec<OfferDecision>,
    pub total_revenue: f64,
    pub retention: f64,
    pub weighted_offer: f64,
}

impl CategorySolution {
    pub fn from_decisions(category: &str, decisions: Vec<OfferDecision>) -> Self {
        let total_revenue = decisions.iter().map(|d| d.revenue).sum();
        let retention = if decisions.is_empty() {
            1.0
        } else {
            decisions.iter().filter(|d| d.retained()).count() as f64 / decisions.len() as f64
        };
        let weighted_offer = weighted_offer(&decisions);
        Self { category: category.to_string(), decisions, total_revenue, retention, weighted_offer }
    }
}

/// Revenue-share weighted mean of the new offers of retained items, the
/// plain mean when they all earn nothing, 0 when none are retained.
pub fn weighted_offer(decisions: &[OfferDecision]) -> f64 {
    let kept: Vec<&OfferDecision> = decisions.iter().filter(|d| d.retained()).collect();
    if kept.is_empty() {
        return 0.0;
    }
    let total: f64 = kept.iter().map(|d| d.revenue).sum();
    if total > 0.0 {
        kept.iter().map(|d| d.revenue * d.new_offer).sum::<f64>() / total
    } else {
        kept.iter().map(|d| d.new_offer).sum::<f64>() / kept.len() as f64
    }
}

pub fn solve_category(problem: &OptimizationProblem) -> Result<CategorySolution, OptimizeError> {
    problem.validate()?;
    let candidates = eta_candidates();
    let decisions: Vec<OfferDecision> =
        problem.items.iter().map(|item| solve_item(item, &candidates, problem.offer_range)).collect();
    let solution = CategorySolution::from_decisions(&problem.category, decisions);
    if solution.retention < problem.retention_floor {
        let binding = solution.decisions.iter().filter(|d| !d.retained()).map(|d| d.key.clone()).collect();
        return Err(OptimizeError::Infeasible {
            category: problem.category.clone(),
            achieved: solution.retention,
            required: problem.retention_floor,
            binding,
            solution: Box::new(solution),
        });
    }
    Ok(solution)
}

/// Linear-interpolation percentile of sorted values, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile interval `quantiles` of the non-zero offers, `None` when it is
/// empty.
pub fn offer_range(offers: &[f64], quantiles: (f64, f64)) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = offers.iter().copied().filter(|&o| o > 0.0 && o.is_finite()).collect();
    if v.len() < 2 {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let r = (percentile(&v, quantiles.0).clamp(0.0, 100.0), percentile(&v, quantiles.1).clamp(0.0, 100.0));
    (r.0 < r.1).then_some(r)
}

/// Distribution of new offers in 5-percent bins over [0, 100].
pub fn offer_histogram(decisions: &[OfferDecision]) -> Vec<Bin> {
    let v: Vec<f64> = decisions.iter().map(|d| d.new_offer).collect();
    histogram(&v, 20, 0.0, 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: usize) -> ConsumerItemKey {
        ConsumerItemKey { consumer_id: format!("c{i}"), item_id: format!("i{i}"), category: "Grocery".into() }
    }

    fn worked() -> OfferItem {
        OfferItem { key: key(0), price: 100.0, k: 20.0, f_k: 0.4, epsilon: 0.6, cutoff: 0.5 }
    }

    #[test]
    fn candidates() {
        let c = eta_candidates();
        assert_eq!(c.len(), 39);
        assert_eq!(c[0], -0.95);
        assert_eq!(c[19], 0.0);
        assert_eq!(c[38], 0.95);
        assert_eq!(c[28], 0.45);
    }

    #[test]
    fn worked_choice() {
        let item = worked();
        let d = evaluate_choice(&item, 0.0, (0.0, 50.0));
        assert_eq!((d.new_offer, d.adjusted_prob), (20.0, 0.4));
        let d = evaluate_choice(&item, 0.45, (0.0, 50.0));
        assert!((d.adjusted_prob - 0.508).abs() < 1e-12);
        assert!(d.indicator);
        assert!((d.new_offer - 29.0).abs() < 1e-12);
        assert!((d.revenue - 71.0).abs() < 1e-12);
        let d = evaluate_choice(&item, 0.40, (0.0, 50.0));
        assert!((d.adjusted_prob - 0.496).abs() < 1e-12);
        assert!(!d.indicator);
        assert_eq!(d.revenue, 0.0);
    }

    #[test]
    fn worked_item_solution() {
        let d = solve_item(&worked(), &eta_candidates(), (0.0, 50.0));
        assert!((d.eta - 0.45).abs() < 1e-12);
        assert!((d.revenue - 71.0).abs() < 1e-9);
    }

    #[test]
    fn already_retained_item_takes_lowest_offer() {
        let item = OfferItem { f_k: 0.95, ..worked() };
        let d = solve_item(&item, &eta_candidates(), (5.0, 50.0));
        // 20 * (1 - 0.75) = 5 is the lowest in-range offer
        assert!((d.eta + 0.75).abs() < 1e-12);
        assert!((d.new_offer - 5.0).abs() < 1e-9);
    }

    #[test]
    fn unreachable_cutoff() {
        let item = OfferItem { cutoff: 0.99, epsilon: 0.1, ..worked() };
        let d = solve_item(&item, &eta_candidates(), (0.0, 50.0));
        assert_eq!((d.eta, d.indicator, d.revenue), (0.0, false, 0.0));
    }

    #[test]
    fn category_feasibility() {
        let a = worked();
        let b = OfferItem { key: key(1), f_k: 0.45, ..worked() };
        let p = OptimizationProblem {
            category: "Grocery".into(),
            items: vec![a.clone(), b.clone()],
            retention_floor: 1.0,
            offer_range: (0.0, 50.0),
        };
        let s = solve_category(&p).unwrap();
        let ra = solve_item(&a, &eta_candidates(), (0.0, 50.0)).revenue;
        let rb = solve_item(&b, &eta_candidates(), (0.0, 50.0)).revenue;
        assert_eq!(s.retention, 1.0);
        assert_eq!(s.total_revenue, ra + rb);

        let dead = OfferItem { key: key(2), cutoff: 0.99, epsilon: 0.1, ..worked() };
        let p = OptimizationProblem { items: vec![a, dead], retention_floor: 0.6, ..p };
        match solve_category(&p) {
            Err(OptimizeError::Infeasible { achieved, binding, .. }) => {
                assert_eq!(achieved, 0.5);
                assert_eq!(binding, vec![key(2)]);
            }
            other => panic!("{other:?}"),
        }
        let p = OptimizationProblem { retention_floor: 0.0, ..p };
        assert!(solve_category(&p).is_ok());
        let empty = OptimizationProblem { items: vec![], ..p };
        let s = solve_category(&empty).unwrap();
        assert_eq!((s.total_revenue, s.decisions.len()), (0.0, 0));
    }

    #[test]
    fn weighted_offer_definition() {
        let d = |offer: f64, revenue: f64, keep: bool| OfferDecision {
            key: key(0),
            eta: 0.0,
            new_offer: offer,
            adjusted_prob: 0.5,
            indicator: keep,
            in_range: true,
            revenue,
        };
        assert_eq!(weighted_offer(&[d(29.0, 71.0, true)]), 29.0);
        assert_eq!(weighted_offer(&[d(20.0, 75.0, true), d(40.0, 25.0, true)]), 25.0);
        assert_eq!(weighted_offer(&[d(20.0, 0.0, false)]), 0.0);
        assert_eq!(weighted_offer(&[]), 0.0);
    }

    #[test]
    fn ranges_and_validation() {
        let offers: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(offer_range(&offers, DEFAULT_RANGE_QUANTILES), Some((1.99, 99.01)));
        assert_eq!(offer_range(&[0.0, 10.0], DEFAULT_RANGE_QUANTILES), None);
        assert_eq!(offer_range(&[10.0, 10.0], DEFAULT_RANGE_QUANTILES), None);
        let p = OptimizationProblem {
            category: "x".into(),
            items: vec![OfferItem { cutoff: 1.0, ..worked() }],
            retention_floor: 0.5,
            offer_range: (0.0, 50.0),
        };
        assert!(matches!(solve_category(&p), Err(OptimizeError::Item { index: 0, .. })));
        let p = OptimizationProblem { offer_range: (50.0, 50.0), ..p };
        assert!(matches!(solve_category(&p), Err(OptimizeError::Range(..))));
    }
}
