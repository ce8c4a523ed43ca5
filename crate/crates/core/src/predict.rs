//! Posterior-predictive simulation and band summaries.
//!
//! For each retained parameter sample the observation moments are integrated
//! out to the requested future times and one count is drawn from the matched
//! generic discrete distribution, giving a matrix of predictive draws. Rows
//! are independent, so they are generated in parallel, each from its own
//! seeded random substream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::gdd;
use crate::inference::{Chain, InitialCondition, VARIANCE_FLOOR};
use crate::moments::{self, MomentState};
use crate::reaction::{ObservationSeries, SirParameters};
use crate::rng::substream_seed;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("chain is empty")]
    EmptyChain,
    #[error("future times must be strictly increasing and after the last observation")]
    BadFutureTimes,
    #[error("probability levels must be sorted and inside (0, 1)")]
    BadProbabilities,
    #[error("all predictive rows failed moment integration")]
    AllRowsFailed,
}

/// Predictive counts: one row per retained parameter sample, one column per
/// future time.
#[derive(Clone, Debug)]
pub struct PredictiveDraws {
    pub future_times: Vec<f64>,
    pub draws: Vec<Vec<u64>>,
    /// Rows dropped because their moment integration failed.
    pub dropped: usize,
}

/// Draw posterior-predictive counts at `future_times` for every retained
/// sample of `chain`.
pub fn predictive_samples(
    chain: &Chain,
    data: &ObservationSeries,
    future_times: &[f64],
    init: InitialCondition,
    seed: u64,
) -> Result<PredictiveDraws, PredictError> {
    if chain.is_empty() {
        return Err(PredictError::EmptyChain);
    }
    if future_times.is_empty()
        || future_times.windows(2).any(|w| w[0] >= w[1])
        || future_times[0] <= data.last_time()
    {
        return Err(PredictError::BadFutureTimes);
    }
    let x2_first = match init {
        InitialCondition::FromFirstObservation => data.counts[0] as f64,
        InitialCondition::InfectiveCount(c) => c,
    };
    let t1 = data.times[0];
    let shifted: Vec<f64> = future_times.iter().map(|&t| t - t1).collect();

    let rows: Vec<Option<Vec<u64>>> = chain
        .samples
        .par_iter()
        .enumerate()
        .map(|(row, &(point, _))| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, row as u64));
            let y2 = x2_first / point.omega;
            if !(0.0..=1.0).contains(&y2) {
                return None;
            }
            let sir = SirParameters { b0: point.b0, b1: point.b1, omega: point.omega };
            let state = MomentState::deterministic([1.0 - y2, y2, 0.0], 0.0);
            let series = moments::integrate_moments(
                &sir,
                &state,
                &shifted,
                moments::DEFAULT_RTOL,
                moments::DEFAULT_ATOL,
            )
            .ok()?;
            let mut draws = Vec::with_capacity(shifted.len());
            for i in 0..shifted.len() {
                let m = series.observation.m[i];
                let v = series.observation.v[i].max(VARIANCE_FLOOR);
                if m <= 1e-12 {
                    draws.push(0);
                } else {
                    draws.push(gdd::gd_from_moments(m, v).ok()?.sample(&mut rng));
                }
            }
            Some(draws)
        })
        .collect();

    let dropped = rows.iter().filter(|r| r.is_none()).count();
    if dropped > 0 {
        log::warn!("dropped {dropped} predictive rows with failed moment integration");
    }
    let draws: Vec<Vec<u64>> = rows.into_iter().flatten().collect();
    if draws.is_empty() {
        return Err(PredictError::AllRowsFailed);
    }
    Ok(PredictiveDraws { future_times: future_times.to_vec(), draws, dropped })
}

/// Empirical quantiles (nearest-rank) of the draws, per time column and
/// probability level; `quantiles[level][time]`.
#[derive(Clone, Debug, Serialize)]
pub struct QuantileBand {
    pub times: Vec<f64>,
    pub probs: Vec<f64>,
    pub quantiles: Vec<Vec<f64>>,
}

pub fn quantile_bands(draws: &PredictiveDraws, probs: &[f64]) -> Result<QuantileBand, PredictError> {
    if probs.is_empty()
        || probs.windows(2).any(|w| w[0] > w[1])
        || probs.iter().any(|&p| !(0.0 < p && p < 1.0))
    {
        return Err(PredictError::BadProbabilities);
    }
    let n_times = draws.future_times.len();
    let mut quantiles = vec![Vec::with_capacity(n_times); probs.len()];
    for col in 0..n_times {
        let mut column: Vec<u64> = draws.draws.iter().map(|row| row[col]).collect();
        column.sort_unstable();
        for (level, &p) in probs.iter().enumerate() {
            quantiles[level].push(nearest_rank(&column, p) as f64);
        }
    }
    Ok(QuantileBand { times: draws.future_times.clone(), probs: probs.to_vec(), quantiles })
}

fn nearest_rank(sorted: &[u64], p: f64) -> u64 {
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Box-plot statistics of one predictive column (1.5 IQR whisker rule).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoxStats {
    pub time: f64,
    pub min: u64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: u64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

pub fn box_stats(draws: &PredictiveDraws) -> Vec<BoxStats> {
    draws
        .future_times
        .iter()
        .enumerate()
        .map(|(col, &time)| {
            let mut column: Vec<u64> = draws.draws.iter().map(|row| row[col]).collect();
            column.sort_unstable();
            let q1 = nearest_rank(&column, 0.25) as f64;
            let median = nearest_rank(&column, 0.5) as f64;
            let q3 = nearest_rank(&column, 0.75) as f64;
            let iqr = q3 - q1;
            let lo_fence = q1 - 1.5 * iqr;
            let hi_fence = q3 + 1.5 * iqr;
            let whisker_low = column
                .iter()
                .map(|&x| x as f64)
                .find(|&x| x >= lo_fence)
                .unwrap_or(q1);
            let whisker_high = column
                .iter()
                .rev()
                .map(|&x| x as f64)
                .find(|&x| x <= hi_fence)
                .unwrap_or(q3);
            BoxStats {
                time,
                min: column[0],
                q1,
                median,
                q3,
                max: column[column.len() - 1],
                whisker_low,
                whisker_high,
            }
        })
        .collect()
}
