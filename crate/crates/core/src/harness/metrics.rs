use serde::{Deserialize, Serialize};

use crate::error::{CceError, Result};

/// Quartiles of the target's 1-based rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// 1-based rank of `target` in every ranking.
pub fn target_ranks<R: AsRef<[String]>>(rankings: &[R], target: &str) -> Result<Vec<usize>> {
    if rankings.is_empty() {
        return Err(CceError::invalid("no rankings given"));
    }
    rankings
        .iter()
        .map(|r| {
            r.as_ref()
                .iter()
                .position(|n| n == target)
                .map(|p| p + 1)
                .ok_or_else(|| CceError::InvalidTarget(format!("{target} is not in the ranked vocabulary")))
        })
        .collect()
}

/// Fraction of rankings whose top `k` contains `target`.
pub fn precision_at_k<R: AsRef<[String]>>(rankings: &[R], target: &str, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(CceError::invalid("K must be at least 1"));
    }
    Ok(precision_from_ranks(&target_ranks(rankings, target)?, k))
}

pub fn rank_stats<R: AsRef<[String]>>(rankings: &[R], target: &str) -> Result<RankStats> {
    Ok(stats_from_ranks(&target_ranks(rankings, target)?))
}

pub(crate) fn precision_from_ranks(ranks: &[usize], k: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

pub(crate) fn stats_from_ranks(ranks: &[usize]) -> RankStats {
    let mut sorted: Vec<f64> = ranks.iter().map(|&r| r as f64).collect();
    sorted.sort_by(f64::total_cmp);
    RankStats {
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
    }
}

/// Linear-interpolation quantile of sorted, non-empty data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
