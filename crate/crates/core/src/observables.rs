//! Turns a stationary backward path into the sampled outputs: the tagged job's
//! sojourn time, the task counts at the snapshot instant and the gradient vector.
//!
//! `S*(0)` is stationary as seen by an arriving job. `Q(0)` and `D(0)` are read off
//! the equilibrium-started clock and are stationary at an arbitrary time instant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backward::{BackwardPath, BackwardSampler};
use crate::error::Result;
use crate::ipa;

/// Which stationary law each output follows.
pub const STATIONARITY: &[(&str, &str)] = &[
    ("sojourn", "job-stationary (seen by an arriving job)"),
    ("gradient", "job-stationary (seen by an arriving job)"),
    ("counts", "time-stationary (seen at an arbitrary instant)"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySample {
    pub s0: f64,
    pub j0: Vec<f64>,
    pub w0: Vec<f64>,
    /// Tasks at each station, in service included.
    pub q: Vec<u32>,
    /// Finished tasks waiting for siblings, per station.
    pub d: Vec<u32>,
    pub total_unsync: u32,
    pub h: Vec<f64>,
    pub tau: Vec<Option<i64>>,
    pub k0: usize,
    pub tie: bool,
    pub horizon: usize,
    pub tau_horizon_extended: bool,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub q: Vec<u32>,
    pub d: Vec<u32>,
    pub total_unsync: u32,
}

/// `S*(0) = max_k (W*_k(0) + j0_k / mu_k)` followed by `S*(-n)` for `1 <= n <= N`.
pub fn sojourn_times(path: &BackwardPath, j0: &[f64]) -> Vec<f64> {
    let rates = path.rates();
    let w0 = path.waiting(0);
    let s0 = (0..path.k()).map(|k| w0[k] + j0[k] / rates[k]).fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::with_capacity(path.horizon() + 1);
    out.push(s0);
    for n in 1..=path.horizon() {
        let w = path.waiting(n);
        out.push((0..path.k()).map(|k| w[k] + path.service_time(n, k)).fold(f64::NEG_INFINITY, f64::max));
    }
    out
}

/// Counts at time 0 over jobs `1..=N`; `sojourns` as returned by [`sojourn_times`].
pub fn queue_snapshot(path: &BackwardPath, sojourns: &[f64]) -> Snapshot {
    let k = path.k();
    let mut q = vec![0u32; k];
    let mut d = vec![0u32; k];
    for n in 1..=path.horizon() {
        let synced = path.arrival(n) + sojourns[n];
        for c in 0..k {
            let left = path.departure(n, c);
            if left > 0.0 {
                q[c] += 1;
            } else if left < 0.0 && synced > 0.0 {
                d[c] += 1;
            }
        }
    }
    let total_unsync = d.iter().sum();
    Snapshot { q, d, total_unsync }
}

/// One exact joint draw: fresh `J(0)`, a backward path, counts and gradient.
pub fn draw_stationary_sample<R: Rng + ?Sized>(sampler: &BackwardSampler, rng: &mut R) -> Result<StationarySample> {
    let j0 = sampler.sample_requirement(rng);
    let mut path = sampler.simulate(rng)?;
    let sojourns = sojourn_times(&path, &j0);
    let snap = queue_snapshot(&path, &sojourns);
    let w0 = path.waiting(0).to_vec();
    let grad = ipa::gradient_estimator(sampler, &mut path, &j0, &w0, rng)?;
    Ok(StationarySample {
        s0: sojourns[0],
        j0,
        w0,
        q: snap.q,
        d: snap.d,
        total_unsync: snap.total_unsync,
        h: grad.h,
        tau: grad.tau,
        k0: grad.k0,
        tie: grad.tie,
        horizon: path.horizon(),
        tau_horizon_extended: path.tau_horizon_extended(),
        steps: path.steps(),
    })
}
