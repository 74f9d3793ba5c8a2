//! Independent ground truth: closed forms for the two-station Markovian network and a
//! plain forward (burn-in) simulator with finite-difference gradients.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NetworkModel;
use crate::stats::{mean_sd, replication_rng};

fn check_traffic(lambda: f64, mu: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda < mu && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("closed forms need 0 <= lambda < mu, got ({lambda}, {mu})")));
    }
    Ok(())
}

/// Mean sojourn time of the two-station fork-join network with Poisson(lambda)
/// arrivals and exponential(mu) services at both stations.
pub fn mm_forkjoin_mean_sojourn(lambda: f64, mu: f64) -> Result<f64> {
    check_traffic(lambda, mu)?;
    Ok((12.0 * mu - lambda) / (8.0 * mu * (mu - lambda)))
}

/// Mean total number of finished tasks waiting for their sibling, same network.
pub fn mm_forkjoin_mean_unsync(lambda: f64, mu: f64) -> Result<f64> {
    check_traffic(lambda, mu)?;
    Ok(lambda * (4.0 * mu - lambda) / (4.0 * mu * (mu - lambda)))
}

/// Derivative of [`mm_forkjoin_mean_sojourn`] with respect to the common rate `mu`.
pub fn mm_forkjoin_sojourn_derivative(lambda: f64, mu: f64) -> Result<f64> {
    check_traffic(lambda, mu)?;
    let d = mu - lambda;
    Ok((2.0 * lambda * mu - lambda * lambda - 12.0 * mu * mu) / (8.0 * mu * mu * d * d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurnInSettings {
    pub warmup: usize,
    pub horizon: usize,
    /// Batches used for the batch-means standard errors.
    pub batches: usize,
}

impl BurnInSettings {
    pub fn new(warmup: usize, horizon: usize) -> Self {
        BurnInSettings { warmup, horizon, batches: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnInEstimate {
    pub mean_sojourn: f64,
    pub se_sojourn: f64,
    pub mean_wait: Vec<f64>,
    pub mean_q: Vec<f64>,
    pub se_q: Vec<f64>,
    pub mean_d: Vec<f64>,
    pub se_d: Vec<f64>,
    pub mean_total_unsync: f64,
    pub se_total_unsync: f64,
    pub warmup: usize,
    pub horizon: usize,
}

/// Adds the overlap of `[from, to)` with each window `[edges[b], edges[b + 1])` to `acc[b]`.
fn spread(from: f64, to: f64, edges: &[f64], acc: &mut [f64]) {
    let last = edges.len() - 1;
    if to <= edges[0] || from >= edges[last] || to <= from {
        return;
    }
    let mut b = edges.partition_point(|&t| t <= from).saturating_sub(1);
    while b < last && edges[b] < to {
        let overlap = to.min(edges[b + 1]) - from.max(edges[b]);
        if overlap > 0.0 {
            acc[b] += overlap;
        }
        b += 1;
    }
}

fn batch_se(values: &[f64]) -> f64 {
    mean_sd(values).map_or(0.0, |(_, sd)| sd / (values.len() as f64).sqrt())
}

/// Forward Lindley simulation from an empty system. Sojourn times are averaged over jobs
/// `warmup + 1 ..= horizon`; task counts are time-averaged between those jobs' arrivals.
pub fn burn_in_estimate<R: Rng + ?Sized>(model: &NetworkModel, settings: BurnInSettings, rng: &mut R) -> Result<BurnInEstimate> {
    model.validate()?;
    let BurnInSettings { warmup, horizon, batches } = settings;
    if warmup >= horizon || batches < 2 || horizon - warmup < batches {
        return Err(Error::InvalidParameter(format!(
            "burn-in needs warmup < horizon and at least {batches} jobs per window, got ({warmup}, {horizon})"
        )));
    }
    let k = model.k();
    let rates = model.rates();
    let arrival_law = model.arrival.law();
    let service_laws: Vec<_> = model.stations.iter().map(|s| s.service.law()).collect();

    let mut arrival = Vec::with_capacity(horizon + 1);
    arrival.push(0.0);
    let mut interarrival = Vec::with_capacity(horizon + 1);
    interarrival.push(0.0);
    for n in 1..=horizon {
        let i = arrival_law.sample(rng);
        interarrival.push(i);
        arrival.push(arrival[n - 1] + i);
    }
    let span = horizon - warmup;
    let edge_job = |b: usize| warmup + b * span / batches;
    let edges: Vec<f64> = (0..=batches).map(|b| arrival[edge_job(b)]).collect();

    let mut wait = vec![0.0; k];
    let mut service = vec![0.0; k];
    let mut sum_wait = vec![0.0; k];
    let mut q_acc = vec![vec![0.0; batches]; k];
    let mut d_acc = vec![vec![0.0; batches]; k];
    let mut s_sum = vec![0.0; batches];
    let mut s_count = vec![0usize; batches];
    let mut depart = vec![0.0; k];

    for n in 0..=horizon {
        for c in 0..k {
            if n > 0 {
                wait[c] = (wait[c] + service[c] - interarrival[n]).max(0.0);
            }
            service[c] = service_laws[c].sample(rng) / rates[c];
            depart[c] = arrival[n] + wait[c] + service[c];
        }
        let synced = depart.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for c in 0..k {
            spread(arrival[n], depart[c], &edges, &mut q_acc[c]);
            spread(depart[c], synced, &edges, &mut d_acc[c]);
        }
        if n > warmup {
            let b = ((n - warmup - 1) * batches / span).min(batches - 1);
            s_sum[b] += synced - arrival[n];
            s_count[b] += 1;
            for c in 0..k {
                sum_wait[c] += wait[c];
            }
        }
    }

    let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    let total_time = edges[batches] - edges[0];
    let time_average = |acc: &[f64]| -> (f64, f64) {
        let per_batch: Vec<f64> = acc.iter().zip(&widths).map(|(a, w)| a / w).collect();
        (acc.iter().sum::<f64>() / total_time, batch_se(&per_batch))
    };
    let (mut mean_q, mut se_q, mut mean_d, mut se_d) = (vec![], vec![], vec![], vec![]);
    for c in 0..k {
        let (m, s) = time_average(&q_acc[c]);
        mean_q.push(m);
        se_q.push(s);
        let (m, s) = time_average(&d_acc[c]);
        mean_d.push(m);
        se_d.push(s);
    }
    let total_d: Vec<f64> = (0..batches).map(|b| (0..k).map(|c| d_acc[c][b]).sum()).collect();
    let (mean_total_unsync, se_total_unsync) = time_average(&total_d);
    let s_batches: Vec<f64> = s_sum.iter().zip(&s_count).map(|(s, c)| s / *c as f64).collect();

    Ok(BurnInEstimate {
        mean_sojourn: s_sum.iter().sum::<f64>() / span as f64,
        se_sojourn: batch_se(&s_batches),
        mean_wait: sum_wait.iter().map(|w| w / span as f64).collect(),
        mean_q,
        se_q,
        mean_d,
        se_d,
        mean_total_unsync,
        se_total_unsync,
        warmup,
        horizon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteDifference {
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
}

/// Central difference of the burn-in mean sojourn time in `mu_k`, step `h`, with common
/// random numbers: both sides of replication `r` replay stream `r` of `seed`.
pub fn finite_difference_gradient(
    model: &NetworkModel,
    k: usize,
    h: f64,
    settings: BurnInSettings,
    reps: usize,
    seed: u64,
) -> Result<FiniteDifference> {
    if reps < 2 {
        return Err(Error::InsufficientSamples { n: reps });
    }
    let mu = model.stations[k].rate;
    if !(h > 0.0 && h < mu) {
        return Err(Error::InvalidParameter(format!("step must lie in (0, mu_k), got {h}")));
    }
    let up = model.with_rate(k, mu + h);
    let down = model.with_rate(k, mu - h);
    up.validate()?;
    down.validate()?;
    let diffs = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let hi = burn_in_estimate(&up, settings, &mut replication_rng(seed, r))?;
            let lo = burn_in_estimate(&down, settings, &mut replication_rng(seed, r))?;
            Ok((hi.mean_sojourn - lo.mean_sojourn) / (2.0 * h))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, sd) = mean_sd(&diffs)?;
    Ok(FiniteDifference { mean, std_error: sd / (reps as f64).sqrt(), reps })
}
