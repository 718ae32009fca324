//! Queue throughput measurement: completion time of the last of n
//! identical jobs on a single worker, and a least-squares line through it.

use std::sync::Arc;
use std::time::{Duration, Instant};

use famrisk_core::{KnowledgeBase, Pedigree, RunSettings};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::service::{Service, ServiceConfig};
use crate::store::MemoryStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LinearFit {
        intercept,
        slope,
        r_squared,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueBenchReport {
    pub workers: usize,
    pub queue_lengths: Vec<usize>,
    pub trials: usize,
    /// Median over trials of the seconds from the first enqueue to the last
    /// completion, per length.
    pub last_completion_seconds: Vec<f64>,
    /// Every trial's measurement, per length.
    pub samples_seconds: Vec<Vec<f64>>,
    /// Estimate reported for the last job at enqueue time (first trial), per length.
    pub last_job_estimate_seconds: Vec<f64>,
    pub fit: LinearFit,
}

/// For each n in `lengths`, starts a fresh single-worker service, enqueues
/// n copies of the same run and times the last completion. Trials run in
/// rounds over all lengths so slow drift in machine load hits every length
/// alike; the fit uses the per-length median.
pub fn queue_linearity(
    kb: Arc<KnowledgeBase>,
    pedigree: &Pedigree,
    settings: &RunSettings,
    lengths: &[usize],
    trials: usize,
) -> ServiceResult<QueueBenchReport> {
    let trials = trials.max(1);
    let mut samples = vec![Vec::with_capacity(trials); lengths.len()];
    let mut estimates = vec![0.0; lengths.len()];
    for t in 0..trials {
        for (i, &n) in lengths.iter().enumerate() {
            let (secs, estimate) = time_batch(&kb, pedigree, settings, n)?;
            samples[i].push(secs);
            if t == 0 {
                estimates[i] = estimate;
            }
        }
    }
    let times: Vec<f64> = samples.iter().map(|s| median(s)).collect();
    let xs: Vec<f64> = lengths.iter().map(|&n| n as f64).collect();
    let fit = linear_fit(&xs, &times);
    Ok(QueueBenchReport {
        workers: 1,
        queue_lengths: lengths.to_vec(),
        trials,
        last_completion_seconds: times,
        samples_seconds: samples,
        last_job_estimate_seconds: estimates,
        fit,
    })
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Seconds until n identical queued runs finish on one worker, and the
/// estimate given to the last of them.
fn time_batch(kb: &Arc<KnowledgeBase>, pedigree: &Pedigree, settings: &RunSettings, n: usize) -> ServiceResult<(f64, f64)> {
    let config = ServiceConfig {
        workers: 1,
        max_active_jobs_per_user: n.max(1),
        ..ServiceConfig::default()
    };
    let svc = Service::start(Arc::new(MemoryStore::new()), Arc::clone(kb), config)?;
    svc.register("bench", "bench-password")?;
    let caller = svc.authenticate(&svc.login("bench", "bench-password")?.token)?;
    svc.import_pedigree(&caller, pedigree.clone())?;
    // Warm-up run calibrates the duration model before the timed batch.
    svc.enqueue_run(&caller, &pedigree.pedigree_id, settings)?;
    if !svc.wait_idle(Duration::from_secs(600)) {
        return Err(ServiceError::Internal("warm-up run did not finish".into()));
    }
    svc.delete_pedigree(&caller, &caller.account.user_id, &pedigree.pedigree_id)?;
    svc.import_pedigree(&caller, pedigree.clone())?;

    let start = Instant::now();
    let mut last = None;
    for _ in 0..n {
        last = Some(svc.enqueue_run(&caller, &pedigree.pedigree_id, settings)?);
    }
    if !svc.wait_idle(Duration::from_secs(600)) {
        return Err(ServiceError::Internal(format!("queue of {n} did not drain")));
    }
    Ok((start.elapsed().as_secs_f64(), last.map_or(0.0, |j| j.estimate_seconds)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_unit_r_squared() {
        let f = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_data_matches_hand_computation() {
        // y = 0, 1, 1, 3 on x = 0..3: slope 0.9, intercept -0.1.
        let f = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 1.0, 3.0]);
        assert!((f.slope - 0.9).abs() < 1e-12);
        assert!((f.intercept + 0.1).abs() < 1e-12);
        // ss_tot = 4.75, ss_res = 0.7
        assert!((f.r_squared - (1.0 - 0.7 / 4.75)).abs() < 1e-12);
    }

    #[test]
    fn median_of_odd_and_even_samples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
    }
}
