//! Replication engine: independent stationary draws, 95% confidence intervals and
//! coverage experiments.
//!
//! Replication `i` of a run with seed `s` always draws from stream `i` of a ChaCha8
//! generator keyed by `s`, so results do not depend on thread count or scheduling.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backward::BackwardSampler;
use crate::error::{Error, Result};
use crate::observables::{draw_stationary_sample, StationarySample};

/// Normal quantile used for every reported interval.
pub const Z_95: f64 = 1.96;

pub fn replication_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sample mean and standard deviation (n - 1 divisor).
pub fn mean_sd(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, (ss / (n - 1) as f64).sqrt()))
}

/// `(mean, 1.96 s / sqrt(n))`.
pub fn ci(samples: &[f64]) -> Result<(f64, f64)> {
    let (mean, sd) = mean_sd(samples)?;
    Ok((mean, Z_95 * sd / (samples.len() as f64).sqrt()))
}

/// A scalar extracted from each [`StationarySample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Sojourn,
    TotalUnsync,
    InStation(usize),
    Unsync(usize),
    Gradient(usize),
    /// `sum_k H_k`: derivative along a common change of all rates.
    GradientSum,
}

impl Quantity {
    pub fn of(&self, s: &StationarySample) -> f64 {
        match *self {
            Quantity::Sojourn => s.s0,
            Quantity::TotalUnsync => f64::from(s.total_unsync),
            Quantity::InStation(k) => f64::from(s.q[k]),
            Quantity::Unsync(k) => f64::from(s.d[k]),
            Quantity::Gradient(k) => s.h[k],
            Quantity::GradientSum => s.h.iter().sum(),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Quantity::Sojourn => "S".into(),
            Quantity::TotalUnsync => "D_total".into(),
            Quantity::InStation(k) => format!("Q_{}", k + 1),
            Quantity::Unsync(k) => format!("D_{}", k + 1),
            Quantity::Gradient(k) => format!("H_{}", k + 1),
            Quantity::GradientSum => "H_sum".into(),
        }
    }

    /// Every quantity reported for a `k`-station network.
    pub fn all(k: usize) -> Vec<Quantity> {
        let mut v = vec![Quantity::Sojourn, Quantity::TotalUnsync];
        v.extend((0..k).map(Quantity::InStation));
        v.extend((0..k).map(Quantity::Unsync));
        v.extend((0..k).map(Quantity::Gradient));
        v.push(Quantity::GradientSum);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityEstimate {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub half_width: f64,
}

impl QuantityEstimate {
    pub fn from_samples(name: String, samples: &[f64]) -> Result<Self> {
        let (mean, sd) = mean_sd(samples)?;
        let n = samples.len();
        Ok(QuantityEstimate { name, mean, sd, n, half_width: Z_95 * sd / (n as f64).sqrt() })
    }

    pub fn std_error(&self) -> f64 {
        self.sd / (self.n as f64).sqrt()
    }

    pub fn covers(&self, truth: f64) -> bool {
        (self.mean - truth).abs() <= self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub seed: u64,
    pub n_reps: usize,
    pub quantities: Vec<QuantityEstimate>,
    /// Draws whose sojourn maximum was attained at two stations at once.
    pub ties: usize,
    /// Draws whose busy period reached past the stopping index.
    pub tau_extensions: usize,
    pub mean_horizon: f64,
    pub mean_steps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

impl EstimateReport {
    pub fn get(&self, q: Quantity) -> &QuantityEstimate {
        let name = q.name();
        self.quantities.iter().find(|e| e.name == name).expect("quantity present in report")
    }

    /// The report without its timing field, for byte-stable output.
    pub fn without_timing(&self) -> Self {
        EstimateReport { wall_seconds: None, ..self.clone() }
    }
}

/// Draws replications `first..first + n` of `seed`, in index order.
pub fn draw_replications(sampler: &BackwardSampler, seed: u64, first: u64, n: usize) -> Result<Vec<StationarySample>> {
    let drawn: Vec<Result<StationarySample>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let index = first + i;
            draw_stationary_sample(sampler, &mut replication_rng(seed, index))
                .map_err(|e| Error::Replication { index, source: Box::new(e) })
        })
        .collect();
    drawn.into_iter().collect()
}

/// Summarizes samples in their given order.
pub fn summarize(samples: &[StationarySample], seed: u64) -> Result<EstimateReport> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { n });
    }
    let k = samples[0].q.len();
    let quantities = Quantity::all(k)
        .into_iter()
        .map(|q| {
            let xs: Vec<f64> = samples.iter().map(|s| q.of(s)).collect();
            QuantityEstimate::from_samples(q.name(), &xs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimateReport {
        seed,
        n_reps: n,
        quantities,
        ties: samples.iter().filter(|s| s.tie).count(),
        tau_extensions: samples.iter().filter(|s| s.tau_horizon_extended).count(),
        mean_horizon: samples.iter().map(|s| s.horizon as f64).sum::<f64>() / n as f64,
        mean_steps: samples.iter().map(|s| s.steps as f64).sum::<f64>() / n as f64,
        wall_seconds: None,
    })
}

/// `n_reps` independent exact draws summarized into means and 95% intervals.
pub fn run_experiment(sampler: &BackwardSampler, n_reps: usize, seed: u64) -> Result<EstimateReport> {
    if n_reps < 2 {
        return Err(Error::InsufficientSamples { n: n_reps });
    }
    let start = Instant::now();
    let samples = draw_replications(sampler, seed, 0, n_reps)?;
    let mut report = summarize(&samples, seed)?;
    report.wall_seconds = Some(start.elapsed().as_secs_f64());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub covered: usize,
    pub n_cis: usize,
    pub reps_per_ci: usize,
    pub truth: f64,
}

impl CoverageResult {
    pub fn fraction(&self) -> f64 {
        self.covered as f64 / self.n_cis as f64
    }
}

/// Builds `n_cis` independent 95% intervals for `quantity`, `reps_per_ci` draws each,
/// and counts those containing `truth`. Interval `c` uses replications
/// `c * reps_per_ci .. (c + 1) * reps_per_ci` of `seed`.
pub fn coverage_experiment(
    sampler: &BackwardSampler,
    quantity: Quantity,
    n_cis: usize,
    reps_per_ci: usize,
    truth: f64,
    seed: u64,
) -> Result<CoverageResult> {
    if reps_per_ci < 2 {
        return Err(Error::InsufficientSamples { n: reps_per_ci });
    }
    let mut covered = 0;
    for c in 0..n_cis {
        let samples = draw_replications(sampler, seed, (c * reps_per_ci) as u64, reps_per_ci)?;
        let xs: Vec<f64> = samples.iter().map(|s| quantity.of(s)).collect();
        let (mean, hw) = ci(&xs)?;
        if (mean - truth).abs() <= hw {
            covered += 1;
        }
    }
    Ok(CoverageResult { covered, n_cis, reps_per_ci, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ci_examples() {
        let (m, hw) = ci(&[3.0; 10]).unwrap();
        assert_eq!((m, hw), (3.0, 0.0));

        let (m, hw) = ci(&[0.0, 2.0]).unwrap();
        assert_eq!(m, 1.0);
        assert!((hw - 1.96).abs() < 1e-12);

        assert_eq!(ci(&[1.0]), Err(Error::InsufficientSamples { n: 1 }));
    }

    #[test]
    fn ci_of_standard_normals() {
        let mut rng = replication_rng(11, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (_, hw) = ci(&xs).unwrap();
        assert!((hw / 0.0196 - 1.0).abs() < 0.05, "{hw}");
    }

    #[test]
    fn streams_are_distinct_and_stable() {
        let a: u64 = replication_rng(5, 0).random();
        let b: u64 = replication_rng(5, 1).random();
        let a2: u64 = replication_rng(5, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
