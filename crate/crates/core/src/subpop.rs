//! Outcome-free construction of composition- and exposure-diverse
//! subpopulations, plus the aggregate summaries consumed by the estimator.
//!
//! Batches are built from priors and treatments only — outcomes never enter,
//! which is what keeps the construction free of selection bias. Batches may
//! overlap freely; estimation relies only on aggregate moments.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Panel;
use crate::rng::{tags, RngContext};

/// A constructed unit subset with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Subpopulation {
    /// Ascending unit ids.
    pub indices: Vec<usize>,
    pub stratum_id: usize,
    pub anchor_rank: usize,
}

impl Subpopulation {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Aggregate summary of one batch: composition, per-round treatment rates,
/// per-round outcome means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubpopSummary {
    /// Mean prior over the batch.
    pub q_k: f64,
    /// `pi_path[t-1]` is the within-batch treatment rate at round `t`.
    pub pi_path: Vec<f64>,
    /// `y_path[t]` is the within-batch outcome mean at round `t` (length T+1).
    pub y_path: Vec<f64>,
    pub size: usize,
}

impl SubpopSummary {
    pub fn rate_at(&self, t: usize) -> f64 {
        self.pi_path[t - 1]
    }
}

/// Construction parameters with the defaults used by the benchmark harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubpopConfig {
    pub n_strata: usize,
    pub n_anchors: usize,
    /// Contiguous block size per anchor; 0 means `pool / (2 * n_anchors)`.
    pub block_size: usize,
    /// Random complement size per anchor; 0 means `pool / (2 * n_anchors)`.
    pub random_size: usize,
    pub min_size: usize,
    /// Max-norm threshold below which same-stratum treatment trajectories
    /// count as duplicates.
    pub min_traj_dist: f64,
}

impl Default for SubpopConfig {
    fn default() -> Self {
        SubpopConfig {
            n_strata: 3,
            n_anchors: 3,
            block_size: 0,
            random_size: 0,
            min_size: 20,
            min_traj_dist: 0.02,
        }
    }
}

/// Quantile bins of the priors, near-equal in size, ties broken by unit id.
/// Pools come back in ascending composition order.
pub fn stratify_by_prior(q: &[f64], n_strata: usize) -> Result<Vec<Vec<usize>>> {
    let n = q.len();
    if n_strata == 0 {
        return Err(Error::Config("n_strata must be >= 1".into()));
    }
    if n_strata > n {
        return Err(Error::Config(format!(
            "n_strata = {n_strata} exceeds population size {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| q[a].partial_cmp(&q[b]).unwrap().then(a.cmp(&b)));
    let mut pools = Vec::with_capacity(n_strata);
    for s in 0..n_strata {
        let lo = s * n / n_strata;
        let hi = (s + 1) * n / n_strata;
        let mut pool: Vec<usize> = order[lo..hi].to_vec();
        pool.sort_unstable();
        pools.push(pool);
    }
    Ok(pools)
}

/// Treatment duration per unit over the main rounds only (warmup durations
/// are identically zero and carry no signal).
fn treatment_durations(
    pool: &[usize],
    w: &ndarray::Array2<u8>,
    t_warmup: usize,
) -> Vec<(usize, usize)> {
    pool.iter()
        .map(|&i| {
            let d: usize = (t_warmup..w.ncols()).map(|t| w[[i, t]] as usize).sum();
            (d, i)
        })
        .collect()
}

/// Exposure-diverse batches within one stratum pool: sort by treatment
/// duration, take a contiguous block around each evenly spaced anchor, and
/// merge it with a uniform random block from the pool (deduplicated).
pub fn build_batches(
    pool: &[usize],
    w: &ndarray::Array2<u8>,
    t_warmup: usize,
    stratum_id: usize,
    n_anchors: usize,
    block_size: usize,
    random_size: usize,
    rng: &RngContext,
) -> Result<Vec<Subpopulation>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if block_size + random_size == 0 {
        return Err(Error::Config("block_size + random_size must be >= 1".into()));
    }
    let len = pool.len();
    let mut by_duration = treatment_durations(pool, w, t_warmup);
    by_duration.sort_unstable();
    let sorted: Vec<usize> = by_duration.into_iter().map(|(_, i)| i).collect();

    let block = block_size.min(len);
    let mut batches = Vec::with_capacity(n_anchors);
    for rank in 0..n_anchors {
        let anchor = if n_anchors <= 1 {
            (len - 1) / 2
        } else {
            (rank * (len - 1) + (n_anchors - 1) / 2) / (n_anchors - 1)
        };
        let start = anchor.saturating_sub(block / 2).min(len - block);
        let mut members: Vec<usize> = sorted[start..start + block].to_vec();

        if random_size > 0 {
            // Partial Fisher-Yates draw of `random_size` distinct pool members.
            let take = random_size.min(len);
            let mut candidates: Vec<usize> = pool.to_vec();
            let mut s = rng.stream(&[tags::BATCH_RANDOM, stratum_id as u64, rank as u64]);
            for i in 0..take {
                let j = i + s.next_below(candidates.len() - i);
                candidates.swap(i, j);
            }
            members.extend_from_slice(&candidates[..take]);
        }
        members.sort_unstable();
        members.dedup();
        batches.push(Subpopulation {
            indices: members,
            stratum_id,
            anchor_rank: rank,
        });
    }
    Ok(batches)
}

/// Within-batch treatment rate path (length T).
fn batch_pi_path(batch: &Subpopulation, w: &ndarray::Array2<u8>) -> Vec<f64> {
    (0..w.ncols())
        .map(|t| {
            batch.indices.iter().map(|&i| w[[i, t]] as f64).sum::<f64>() / batch.len() as f64
        })
        .collect()
}

/// Drop undersized batches, then drop batches whose treatment trajectory is
/// within `min_traj_dist` (max-norm) of an earlier-kept batch in the same
/// stratum. Deterministic: input order decides survivors.
pub fn prune_batches(
    batches: Vec<Subpopulation>,
    w: &ndarray::Array2<u8>,
    min_size: usize,
    min_traj_dist: f64,
) -> Result<Vec<Subpopulation>> {
    let mut kept: Vec<Subpopulation> = Vec::new();
    let mut kept_paths: Vec<Vec<f64>> = Vec::new();
    for batch in batches {
        if batch.len() < min_size {
            continue;
        }
        let path = batch_pi_path(&batch, w);
        let duplicate = kept.iter().zip(&kept_paths).any(|(other, other_path)| {
            other.stratum_id == batch.stratum_id
                && path
                    .iter()
                    .zip(other_path)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max)
                    < min_traj_dist
        });
        if !duplicate {
            kept.push(batch);
            kept_paths.push(path);
        }
    }
    if kept.is_empty() {
        return Err(Error::AllBatchesPruned);
    }
    Ok(kept)
}

/// Full pipeline: stratify, build anchored batches per stratum, prune.
pub fn construct_batches(
    q: &[f64],
    w: &ndarray::Array2<u8>,
    t_warmup: usize,
    cfg: &SubpopConfig,
    rng: &RngContext,
) -> Result<Vec<Subpopulation>> {
    let pools = stratify_by_prior(q, cfg.n_strata)?;
    let mut all = Vec::new();
    for (stratum_id, pool) in pools.iter().enumerate() {
        let auto = (pool.len() / (2 * cfg.n_anchors)).max(1);
        let block = if cfg.block_size == 0 { auto } else { cfg.block_size };
        let random = if cfg.random_size == 0 { auto } else { cfg.random_size };
        all.extend(build_batches(
            pool,
            w,
            t_warmup,
            stratum_id,
            cfg.n_anchors,
            block,
            random,
            rng,
        )?);
    }
    prune_batches(all, w, cfg.min_size, cfg.min_traj_dist)
}

/// Per-batch summaries plus the whole-population summary.
pub fn summarize(panel: &Panel, batches: &[Subpopulation]) -> (Vec<SubpopSummary>, SubpopSummary) {
    let per_batch = batches
        .iter()
        .map(|b| SubpopSummary {
            q_k: b.indices.iter().map(|&i| panel.q[i]).sum::<f64>() / b.len() as f64,
            pi_path: batch_pi_path(b, &panel.w),
            y_path: panel.outcome_means(Some(&b.indices)),
            size: b.len(),
        })
        .collect();
    let population = SubpopSummary {
        q_k: panel.q.iter().sum::<f64>() / panel.n_units() as f64,
        pi_path: panel.treatment_means(None),
        y_path: panel.outcome_means(None),
        size: panel.n_units(),
    };
    (per_batch, population)
}

/// Batch manifest export: JSON list of `{stratum, anchor, indices, q_k,
/// pi_path}`.
pub fn write_batch_manifest<W: Write>(
    batches: &[Subpopulation],
    summaries: &[SubpopSummary],
    mut out: W,
) -> Result<()> {
    let entries: Vec<serde_json::Value> = batches
        .iter()
        .zip(summaries)
        .map(|(b, s)| {
            serde_json::json!({
                "stratum": b.stratum_id,
                "anchor": b.anchor_rank,
                "indices": b.indices,
                "q_k": s.q_k,
                "pi_path": s.pi_path,
            })
        })
        .collect();
    out.write_all(serde_json::to_string_pretty(&entries)?.as_bytes())?;
    Ok(())
}
