//! Offer optimization over consumer-item purchase histories.
//!
//! The pipeline turns a transaction log into bi-weekly purchase series
//! ([`ingest`]), builds model inputs ([`featurize`]), learns purchase
//! probabilities with a temporal convolutional network ([`tcn`]), picks an
//! F1-maximizing probability cut-off per consumer ([`threshold`]), fits a
//! sigmoid offer response per category ([`elasticity`]) and assigns an offer
//! to every consumer-item pair ([`optimizer`]). [`pipeline`] runs the stages
//! against an on-disk workspace and writes the reports.

pub mod elasticity;
pub mod featurize;
pub mod histogram;
pub mod ingest;
pub mod optimizer;
pub mod pipeline;
pub mod synth;
pub mod tcn;
pub mod threshold;
