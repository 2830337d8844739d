//! Success rate, SPL and success-vs-steps curves over episode records.

use super::HarnessError;
use crate::policy::EpisodeRecord;

pub fn success_rate(records: &[EpisodeRecord]) -> Result<f64, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    Ok(records.iter().filter(|r| r.success).count() as f64 / records.len() as f64)
}

/// Mean of `S·ℓ / max(p, ℓ)` with `ℓ` the oracle and `p` the actual traveled distance.
pub fn spl(records: &[EpisodeRecord]) -> Result<f64, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    Ok(records.iter().map(EpisodeRecord::spl).sum::<f64>() / records.len() as f64)
}

pub fn spl_steps(records: &[EpisodeRecord]) -> Result<f64, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    Ok(records.iter().map(EpisodeRecord::spl_steps).sum::<f64>() / records.len() as f64)
}

/// `curve[k]` = fraction of episodes that succeeded within `k` steps.
pub fn sr_curve(records: &[EpisodeRecord], n_max: usize) -> Result<Vec<f64>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    let mut counts = vec![0usize; n_max + 1];
    for r in records.iter().filter(|r| r.success && r.steps <= n_max) {
        counts[r.steps] += 1;
    }
    let n = records.len() as f64;
    let mut acc = 0;
    Ok(counts
        .into_iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect())
}
