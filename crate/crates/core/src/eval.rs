//! Metrics, the NMF baseline and the holdout / cross-validation protocol.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attn::{forward_edge, ModelState};
use crate::data::{build_matrix, split, RatingDataset, SparseRatings, SplitSpec};
use crate::error::{GarecError, Result};
use crate::graph::CoRatingGraph;
use crate::linalg::pairwise_sum;
use crate::nmf::{factorize, FactorPair, NmfConfig};
use crate::train::{fit, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub rmse: f64,
    pub mae: f64,
    pub n_evaluated: usize,
    pub n_cold_fallback: usize,
}

fn clamp_rating(x: f64) -> f64 {
    x.clamp(1.0, 5.0)
}

/// RMSE of `(prediction, truth)` pairs with predictions clamped to `[1, 5]`.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(GarecError::Empty);
    }
    let sq: Vec<f64> = pairs
        .iter()
        .map(|&(p, t)| (clamp_rating(p) - t).powi(2))
        .collect();
    Ok((pairwise_sum(&sq) / pairs.len() as f64).sqrt())
}

pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(GarecError::Empty);
    }
    let abs: Vec<f64> = pairs.iter().map(|&(p, t)| (clamp_rating(p) - t).abs()).collect();
    Ok(pairwise_sum(&abs) / pairs.len() as f64)
}

fn summarize(pairs: &[(f64, f64)], n_cold_fallback: usize) -> Result<EvalResult> {
    if pairs.is_empty() {
        return Ok(EvalResult {
            rmse: 0.0,
            mae: 0.0,
            n_evaluated: 0,
            n_cold_fallback,
        });
    }
    Ok(EvalResult {
        rmse: rmse(pairs)?,
        mae: mae(pairs)?,
        n_evaluated: pairs.len(),
        n_cold_fallback,
    })
}

/// Scores every test record with clamped predictions. Neighborhoods are read
/// from `train_ratings` only.
pub fn evaluate(
    state: &ModelState,
    test: &RatingDataset,
    graph: &CoRatingGraph,
    train_ratings: &SparseRatings,
) -> Result<EvalResult> {
    evaluate_with(state, test, graph, train_ratings, false)
}

/// Like [`evaluate`]; `parallel` spreads edges over the rayon pool. The
/// reduction order is fixed, so both modes return the same numbers.
pub fn evaluate_with(
    state: &ModelState,
    test: &RatingDataset,
    graph: &CoRatingGraph,
    train_ratings: &SparseRatings,
    parallel: bool,
) -> Result<EvalResult> {
    let proj = state.project();
    let score = |r: &crate::data::RatingRecord| {
        let t = forward_edge(state, &proj, graph, train_ratings, r.user, r.item);
        ((state.clamp(t.raw()), f64::from(r.rating)), t.used_fallback())
    };
    let scored: Vec<((f64, f64), bool)> = if parallel {
        test.records.par_iter().map(score).collect()
    } else {
        test.records.iter().map(score).collect()
    };
    let cold = scored.iter().filter(|s| s.1).count();
    let pairs: Vec<(f64, f64)> = scored.into_iter().map(|s| s.0).collect();
    summarize(&pairs, cold)
}

/// Clamped `f_u . f_i` predictions.
pub fn evaluate_nmf_baseline(fp: &FactorPair, test: &RatingDataset) -> Result<EvalResult> {
    let pairs: Vec<(f64, f64)> = test
        .records
        .iter()
        .map(|r| (fp.predict(r.user, r.item), f64::from(r.rating)))
        .collect();
    summarize(&pairs, 0)
}

/// GARec and NMF-baseline results on one train/test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub split: String,
    pub garec: EvalResult,
    pub nmf: EvalResult,
    pub report: TrainReport,
}

/// Trains on `train` and scores `test`. The evaluation graph is built from
/// the whole training split; the baseline uses `baseline_cfg` on the same data.
pub fn train_and_evaluate(
    train: &RatingDataset,
    test: &RatingDataset,
    cfg: &TrainConfig,
    baseline_cfg: &NmfConfig,
) -> Result<(ModelState, EvalResult, EvalResult, TrainReport)> {
    let (state, mut report) = fit(train, cfg)?;
    let train_ratings = build_matrix(train)?;
    let graph = CoRatingGraph::build(&train_ratings, cfg.cap);
    let garec = evaluate_with(&state, test, &graph, &train_ratings, cfg.threads > 1)?;
    report.test_rmse = Some(garec.rmse);
    let factors = factorize(&train_ratings, baseline_cfg)?;
    let nmf = evaluate_nmf_baseline(&factors, test)?;
    Ok((state, garec, nmf, report))
}

pub fn run_split(
    dataset: &RatingDataset,
    spec: &SplitSpec,
    cfg: &TrainConfig,
    baseline_cfg: &NmfConfig,
) -> Result<SplitOutcome> {
    let (train, test) = split(dataset, spec)?;
    let (_, garec, nmf, report) = train_and_evaluate(&train, &test, cfg, baseline_cfg)?;
    Ok(SplitOutcome {
        split: spec.describe(),
        garec,
        nmf,
        report,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<SplitOutcome>,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub nmf_mean_rmse: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn crossval(
    dataset: &RatingDataset,
    n_folds: usize,
    seed: u64,
    cfg: &TrainConfig,
    baseline_cfg: &NmfConfig,
) -> Result<CrossValReport> {
    if n_folds < 2 {
        return Err(GarecError::InvalidSplit(format!("need at least 2 folds, got {n_folds}")));
    }
    let folds = (0..n_folds)
        .map(|k| run_split(dataset, &SplitSpec::fold(k, n_folds, seed), cfg, baseline_cfg))
        .collect::<Result<Vec<_>>>()?;
    let fold_rmse: Vec<f64> = folds.iter().map(|f| f.garec.rmse).collect();
    let (mean_rmse, std_rmse) = mean_std(&fold_rmse);
    let nmf: Vec<f64> = folds.iter().map(|f| f.nmf.rmse).collect();
    Ok(CrossValReport {
        nmf_mean_rmse: mean_std(&nmf).0,
        folds,
        fold_rmse,
        mean_rmse,
        std_rmse,
    })
}
