//! Routing metrics: top-k accuracy, average selected BLEU, path-length
//! distribution and CDF curves.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lang::LanguageRegistry;
use crate::path::{rank_scored, Path};
use crate::routers::{Method, PathLabels, RoutingResult};

/// Best labeled path under the shared tie order.
pub fn true_best(labels: &PathLabels, registry: &LanguageRegistry) -> Result<Path> {
    let mut scored: Vec<(Path, f64)> = labels.iter().map(|(p, &s)| (p.clone(), s)).collect();
    if scored.is_empty() {
        return Err(Error::EmptyInput);
    }
    rank_scored(&mut scored, registry);
    Ok(scored.swap_remove(0).0)
}

/// A method's ranked candidate list for one fully labeled pair.
#[derive(Debug, Clone)]
pub struct RankedPair<'a> {
    pub ranked: Vec<Path>,
    pub labels: &'a PathLabels,
}

/// Fraction of pairs whose true best path is among the first `k` ranked.
pub fn topk_accuracy(
    pairs: &[RankedPair<'_>],
    registry: &LanguageRegistry,
    k: usize,
) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidK);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut hits = 0usize;
    for pair in pairs {
        let best = true_best(pair.labels, registry)?;
        if pair.ranked.iter().take(k).any(|p| *p == best) {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

pub fn avg_selected_bleu(results: &[RoutingResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for r in results {
        total += r.actual.ok_or(Error::MissingLabel(alloc::format!(
            "{} result for pair {}->{}",
            r.method,
            r.source,
            r.target
        )))?;
    }
    Ok(total / results.len() as f64)
}

/// Fractions of results whose chosen path has 1, 2 and 3 hops.
pub fn path_length_distribution(results: &[RoutingResult]) -> Result<[f64; 3]> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut counts = [0usize; 3];
    for r in results {
        counts[r.chosen.hops() - 1] += 1;
    }
    let n = results.len() as f64;
    Ok(counts.map(|c| c as f64 / n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    /// `(bleu, cumulative fraction)` over ascending scores.
    pub points: Vec<(f64, f64)>,
}

/// Empirical CDF: the `i`-th smallest score (1-based) maps to `i / n`.
pub fn cdf(scores: &[f64]) -> Result<CdfCurve> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let points = sorted
        .into_iter()
        .enumerate()
        .map(|(i, b)| (b, (i + 1) as f64 / n))
        .collect();
    Ok(CdfCurve { points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: Method,
    pub avg_bleu: f64,
    pub top1: f64,
    pub top5: f64,
    pub rows: Vec<RoutingResult>,
}
