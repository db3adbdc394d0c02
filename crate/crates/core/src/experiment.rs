//! Glue between datasets, the predictor and the routers: training-set
//! construction and per-method evaluation over labeled pairs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::EncodedPath;
use crate::lang::{LangId, LanguageRegistry, QualityMatrix};
use crate::metrics::{avg_selected_bleu, topk_accuracy, true_best, MethodReport, RankedPair};
use crate::nn::{DevPair, LtrModel};
use crate::path::{candidate_paths, tie_order, Path};
use crate::routers::{
    filter_rare_pivots, rank_ground_truth, rank_hop_average, rank_ltr, route_direct,
    route_prior_pivot, route_random, Method, PathLabels, PivotMap, RoutingResult,
};
use crate::synth::{derive_seed, LabeledPair};

/// Training examples with labels normalized to `[0, 1]`.
pub fn training_examples(
    pairs: &[LabeledPair],
    matrix: &QualityMatrix,
) -> Result<Vec<(EncodedPath, f64)>> {
    let mut out = Vec::new();
    for pair in pairs {
        for (path, &bleu) in &pair.labels {
            out.push((EncodedPath::new(path, matrix)?, bleu / 100.0));
        }
    }
    Ok(out)
}

/// Dev pairs for model selection, restricted to the candidates LTR would
/// consider. `best` is `usize::MAX` when the true best path was filtered out.
pub fn dev_pairs(
    pairs: &[LabeledPair],
    registry: &LanguageRegistry,
    matrix: &QualityMatrix,
    pivot_min_count: usize,
    counts: &BTreeMap<LangId, usize>,
) -> Result<Vec<DevPair>> {
    pairs
        .iter()
        .map(|pair| {
            let all = candidate_paths(registry, pair.source, pair.target)?;
            let mut kept = filter_rare_pivots(&all, pivot_min_count, counts).paths;
            kept.sort_by(|a, b| tie_order(a, b, registry));
            let best_path = true_best(&pair.labels, registry)?;
            let best = kept
                .iter()
                .position(|p| *p == best_path)
                .unwrap_or(usize::MAX);
            let candidates = kept
                .iter()
                .map(|p| EncodedPath::new(p, matrix))
                .collect::<Result<Vec<_>>>()?;
            Ok(DevPair { candidates, best })
        })
        .collect()
}

/// Everything the routers need for one evaluation run.
#[derive(Debug, Clone)]
pub struct RoutingContext<'a> {
    pub registry: &'a LanguageRegistry,
    pub matrix: &'a QualityMatrix,
    pub model: Option<&'a LtrModel>,
    pub pivot_map: PivotMap,
    pub pivot_counts: &'a BTreeMap<LangId, usize>,
    pub pivot_min_count: usize,
    /// Base seed of the random router; each pair gets its own sub-stream.
    pub random_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRouting {
    pub result: RoutingResult,
    /// The method's candidate ranking, best first. Single-choice methods rank
    /// only their choice.
    pub ranked: Vec<Path>,
}

pub fn route_pair(
    ctx: &RoutingContext<'_>,
    x: LangId,
    y: LangId,
    labels: Option<&PathLabels>,
    method: Method,
    pair_index: usize,
) -> Result<PairRouting> {
    let candidates = candidate_paths(ctx.registry, x, y)?;
    let (ranked, predicted): (Vec<Path>, Option<f64>) = match method {
        Method::Dt => (alloc::vec![route_direct(x, y)?], None),
        Method::Rr => {
            let seed = derive_seed(
                ctx.random_seed,
                &[x.0 as u64, y.0 as u64, pair_index as u64],
            );
            (alloc::vec![route_random(&candidates, seed)?], None)
        }
        Method::Pp => (
            alloc::vec![route_prior_pivot(ctx.registry, x, y, &ctx.pivot_map)?],
            None,
        ),
        Method::Ha => split(rank_hop_average(&candidates, ctx.matrix, ctx.registry)?),
        Method::Ltr => {
            let model = ctx
                .model
                .ok_or_else(|| Error::InvalidConfig("LTR routing needs a trained model".into()))?;
            split(rank_ltr(
                &candidates,
                ctx.matrix,
                ctx.registry,
                model,
                ctx.pivot_min_count,
                ctx.pivot_counts,
            )?)
        }
        Method::Gt => {
            let labels = labels.ok_or_else(|| {
                Error::MissingLabel(alloc::format!(
                    "ground truth for {}->{}",
                    ctx.registry.code(x),
                    ctx.registry.code(y)
                ))
            })?;
            split(rank_ground_truth(&candidates, labels, ctx.registry)?)
        }
    };
    let chosen = ranked[0].clone();
    let actual = labels.and_then(|l| l.get(&chosen).copied());
    Ok(PairRouting {
        result: RoutingResult {
            source: x,
            target: y,
            method,
            chosen,
            predicted,
            actual,
        },
        ranked,
    })
}

fn split(ranked: Vec<(Path, f64)>) -> (Vec<Path>, Option<f64>) {
    let top = ranked.first().map(|(_, s)| *s);
    (ranked.into_iter().map(|(p, _)| p).collect(), top)
}

/// Routes every pair with every method, in the given order.
pub fn evaluate(
    ctx: &RoutingContext<'_>,
    pairs: &[LabeledPair],
    methods: &[Method],
) -> Result<Vec<MethodReport>> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut reports = Vec::with_capacity(methods.len());
    for &method in methods {
        let routed = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| route_pair(ctx, p.source, p.target, Some(&p.labels), method, i))
            .collect::<Result<Vec<_>>>()?;
        let ranked: Vec<RankedPair<'_>> = routed
            .iter()
            .zip(pairs)
            .map(|(r, p)| RankedPair {
                ranked: r.ranked.clone(),
                labels: &p.labels,
            })
            .collect();
        let rows: Vec<RoutingResult> = routed.into_iter().map(|r| r.result).collect();
        reports.push(MethodReport {
            method,
            avg_bleu: avg_selected_bleu(&rows)?,
            top1: topk_accuracy(&ranked, ctx.registry, 1)?,
            top5: topk_accuracy(&ranked, ctx.registry, 5)?,
            rows,
        });
    }
    Ok(reports)
}
