//! Exact simulation of the stationary backward waiting-time path.
//!
//! With `X(n) = J(n)/mu - I(n)` and `R(n) = X(1) + ... + X(n)`, the stationary
//! waiting vector of the job `n` places in the past is `W*(-n) = M(n) - R(n)`, where
//! `M(n) = sup_{m >= n} R(m)` componentwise. The walk is grown lazily in rounds.
//! Between rounds the sampler holds a barrier `b` and the invariant that the
//! unrevealed future is the nominal walk conditioned on never exceeding `b`.
//!
//! A round proposes a nominal continuation and accepts it once a lower barrier is
//! certified, rejecting (and restarting from the round's origin) whenever the
//! revealed path exceeds `b`:
//!
//! 1. step the nominal walk until every coordinate sits at least `gap_k + drop_k`
//!    below `b_k` (a milestone);
//! 2. sample the exact indicator that some coordinate ever rises more than `gap_k`
//!    above the milestone. The proposal picks a rising coordinate `kappa` uniformly
//!    and runs the walk under the `kappa`-tilted law until the first coordinate
//!    exceeds its gap; the crossing is accepted with probability
//!    `1 / mean_k exp(theta_k * rise_k)`, which is at most `exp(-c) <= 1` because
//!    `gap_k = (c + ln K) / theta_k`;
//! 3. no crossing: the milestone plus `gap` is the new barrier. A crossing: the
//!    realized segment is appended and the round continues from its end.
//!
//! `M(n)` is final for every index whose revealed running maximum already reaches
//! the current barrier.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{CramerRoots, Law, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Milestone constant `c`: drops are `c / theta_k`.
    pub milestone_c: f64,
    /// Ceiling on the number of increment vectors drawn for one path.
    pub step_budget: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { milestone_c: 2.0, step_budget: 100_000_000 }
    }
}

/// Milestone drop levels `L_k = c / theta_k` (zero for stations that never rise).
pub fn milestone_level(roots: &CramerRoots, c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("milestone constant must be positive, got {c}")));
    }
    Ok(roots.theta.iter().map(|t| if t.is_finite() { c / t } else { 0.0 }).collect())
}

/// One realized stationary backward path.
///
/// Index `n` counts jobs into the past: `n = 0` is the tagged job, `n >= 1` the
/// `n`-th most recent earlier arrival. Waiting times and future maxima are exact for
/// `0 <= n <= len()`.
#[derive(Debug, Clone)]
pub struct BackwardPath {
    k: usize,
    rates: Vec<f64>,
    interarrival: Vec<f64>,
    requirement: Vec<f64>,
    walk: Vec<f64>,
    future_max: Vec<f64>,
    waiting: Vec<f64>,
    arrival: Vec<f64>,
    equilibrium_interarrival: f64,
    barrier: Vec<f64>,
    horizon: Option<usize>,
    steps: u64,
    tau_horizon_extended: bool,
}

impl BackwardPath {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Deepest index with a finalized future maximum.
    pub fn len(&self) -> usize {
        self.future_max.len() / self.k - 1
    }

    /// Stopping index `N`: the first `n >= 1` whose tasks all left their stations before time 0.
    pub fn horizon(&self) -> usize {
        self.horizon.expect("path returned before its horizon was found")
    }

    /// Increment vectors drawn so far, rejected proposals included.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn tau_horizon_extended(&self) -> bool {
        self.tau_horizon_extended
    }

    pub(crate) fn mark_tau_extended(&mut self) {
        self.tau_horizon_extended = true;
    }

    /// Builds a path from recorded waiting times, for replaying or hand-constructed cases.
    /// `interarrival` and `requirement` cover jobs `1..=n`, `waiting` covers `0..=n`.
    /// The result cannot be extended.
    pub fn assemble(
        rates: &[f64],
        equilibrium_interarrival: f64,
        interarrival: &[f64],
        requirement: &[Vec<f64>],
        waiting: &[Vec<f64>],
    ) -> Result<BackwardPath> {
        let k = rates.len();
        let n = interarrival.len();
        if requirement.len() != n || waiting.len() != n + 1 {
            return Err(Error::InvalidParameter("path sequences have inconsistent lengths".into()));
        }
        if requirement.iter().chain(waiting).any(|row| row.len() != k) {
            return Err(Error::InvalidParameter("path rows must have one entry per station".into()));
        }
        let mut walk = vec![0.0; k];
        for m in 0..n {
            for c in 0..k {
                let next = walk[m * k + c] + requirement[m][c] / rates[c] - interarrival[m];
                walk.push(next);
            }
        }
        let waiting: Vec<f64> = waiting.iter().flatten().copied().collect();
        let future_max = walk.iter().zip(&waiting).map(|(r, w)| r + w).collect();
        let mut path = BackwardPath {
            k,
            rates: rates.to_vec(),
            interarrival: interarrival.to_vec(),
            requirement: requirement.iter().flatten().copied().collect(),
            walk,
            future_max,
            waiting,
            arrival: Vec::with_capacity(n + 1),
            equilibrium_interarrival,
            barrier: vec![f64::NEG_INFINITY; k],
            horizon: None,
            steps: 0,
            tau_horizon_extended: false,
        };
        for m in 0..=n {
            let a = match m {
                0 => 0.0,
                1 => -equilibrium_interarrival,
                _ => path.arrival[m - 1] - interarrival[m - 1],
            };
            path.arrival.push(a);
            if path.horizon.is_none() && m >= 1 && (0..k).all(|c| path.departure(m, c) < 0.0) {
                path.horizon = Some(m);
            }
        }
        path.horizon.get_or_insert(n);
        Ok(path)
    }

    fn committed(&self) -> usize {
        self.interarrival.len()
    }

    fn row(v: &[f64], k: usize, n: usize) -> &[f64] {
        &v[n * k..(n + 1) * k]
    }

    /// `R(n)`.
    pub fn walk(&self, n: usize) -> &[f64] {
        assert!(n <= self.len());
        Self::row(&self.walk, self.k, n)
    }

    /// `M(n)`.
    pub fn future_max(&self, n: usize) -> &[f64] {
        Self::row(&self.future_max, self.k, n)
    }

    /// `W*(-n)`.
    pub fn waiting(&self, n: usize) -> &[f64] {
        Self::row(&self.waiting, self.k, n)
    }

    /// `I(n)` for `n >= 1`: time between arrivals of jobs `n` and `n - 1` (nominal law).
    pub fn interarrival(&self, n: usize) -> f64 {
        assert!(n >= 1 && n <= self.len());
        self.interarrival[n - 1]
    }

    /// Service requirement vector `J(n)` for `n >= 1`.
    pub fn requirement(&self, n: usize) -> &[f64] {
        assert!(n >= 1 && n <= self.len());
        Self::row(&self.requirement, self.k, n - 1)
    }

    /// `J_k(n) / mu_k`.
    pub fn service_time(&self, n: usize, k: usize) -> f64 {
        self.requirement(n)[k] / self.rates[k]
    }

    /// Equilibrium draw `I*(1)` used by the snapshot clock.
    pub fn equilibrium_interarrival(&self) -> f64 {
        self.equilibrium_interarrival
    }

    /// Snapshot clock `A(-n) = -(I*(1) + I(2) + ... + I(n))`, `A(0) = 0`.
    pub fn arrival(&self, n: usize) -> f64 {
        self.arrival[n]
    }

    /// Time job `n >= 1` leaves station `k` on the snapshot clock.
    pub fn departure(&self, n: usize, k: usize) -> f64 {
        self.arrival(n) + self.waiting(n)[k] + self.service_time(n, k)
    }

    /// Smallest `n` in `0..=len()` with `W*_k(-n) = 0`.
    pub fn first_zero_wait(&self, k: usize) -> Option<usize> {
        (0..=self.len()).find(|&n| self.waiting(n)[k] == 0.0)
    }

    /// Current certified barrier on the unrevealed future.
    pub fn barrier(&self) -> &[f64] {
        &self.barrier
    }
}

/// Prepared backward sampler for one network.
#[derive(Debug, Clone)]
pub struct BackwardSampler {
    k: usize,
    rates: Vec<f64>,
    theta: Vec<f64>,
    arrival: Law,
    arrival_equilibrium: Law,
    service: Vec<Law>,
    /// Per rising station: (tilted interarrival law, tilted requirement law).
    tilted: Vec<Option<(Law, Law)>>,
    rising: Vec<usize>,
    gap: Vec<f64>,
    drop: Vec<f64>,
    config: SamplerConfig,
}

impl BackwardSampler {
    pub fn new(model: &NetworkModel, roots: &CramerRoots, config: SamplerConfig) -> Result<Self> {
        model.validate()?;
        if roots.theta.len() != model.k() {
            return Err(Error::InvalidParameter("Cramer roots do not match the station count".into()));
        }
        let drop = milestone_level(roots, config.milestone_c)?;
        let rising: Vec<usize> = (0..model.k()).filter(|&k| roots.finite(k)).collect();
        let log_k = (rising.len().max(1) as f64).ln();
        let gap = roots
            .theta
            .iter()
            .map(|t| if t.is_finite() { (config.milestone_c + log_k) / t } else { 0.0 })
            .collect();
        let mut tilted = Vec::with_capacity(model.k());
        for (k, st) in model.stations.iter().enumerate() {
            let t = roots.theta[k];
            tilted.push(if t.is_finite() {
                Some((model.arrival.tilted(-t)?, st.service.tilted(t / st.rate)?))
            } else {
                None
            });
        }
        Ok(BackwardSampler {
            k: model.k(),
            rates: model.rates(),
            theta: roots.theta.clone(),
            arrival: model.arrival.law(),
            arrival_equilibrium: model.arrival.equilibrium(),
            service: model.stations.iter().map(|s| s.service.law()).collect(),
            tilted,
            rising,
            gap,
            drop,
            config,
        })
    }

    pub fn from_model(model: &NetworkModel, config: SamplerConfig) -> Result<Self> {
        model.validate()?;
        let roots = CramerRoots::solve(model)?;
        Self::new(model, &roots, config)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn config(&self) -> SamplerConfig {
        self.config
    }

    /// Draws a fresh requirement vector from the nominal laws.
    pub fn sample_requirement<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.service.iter().map(|l| l.sample(rng)).collect()
    }

    /// Samples a stationary backward path up to its stopping index.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BackwardPath> {
        self.simulate_with_min_len(rng, 0)
    }

    /// As [`simulate`](Self::simulate), but keeps growing until indices `0..=min_len` are final.
    pub fn simulate_with_min_len<R: Rng + ?Sized>(&self, rng: &mut R, min_len: usize) -> Result<BackwardPath> {
        let k = self.k;
        let mut path = BackwardPath {
            k,
            rates: self.rates.clone(),
            interarrival: Vec::new(),
            requirement: Vec::new(),
            walk: vec![0.0; k],
            future_max: Vec::new(),
            waiting: Vec::new(),
            arrival: Vec::new(),
            equilibrium_interarrival: self.arrival_equilibrium.sample(rng),
            barrier: vec![f64::INFINITY; k],
            horizon: None,
            steps: 0,
            tau_horizon_extended: false,
        };
        loop {
            self.round(&mut path, rng)?;
            self.finalize(&mut path);
            if path.horizon.is_some() && path.future_max.len() / k > min_len {
                return Ok(path);
            }
        }
    }

    /// Grows `path` until `done` holds.
    pub fn extend_until<R, F>(&self, path: &mut BackwardPath, rng: &mut R, done: F) -> Result<()>
    where
        R: Rng + ?Sized,
        F: Fn(&BackwardPath) -> bool,
    {
        while !done(path) {
            self.round(path, rng)?;
            self.finalize(path);
        }
        Ok(())
    }

    fn charge(&self, steps: &mut u64) -> Result<()> {
        *steps += 1;
        if *steps > self.config.step_budget {
            return Err(Error::BudgetExceeded { steps: *steps - 1 });
        }
        Ok(())
    }

    fn nominal_step<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        steps: &mut u64,
        buf_i: &mut Vec<f64>,
        buf_j: &mut Vec<f64>,
        cur: &mut [f64],
    ) -> Result<()> {
        self.charge(steps)?;
        let i = self.arrival.sample(rng);
        buf_i.push(i);
        for (k, law) in self.service.iter().enumerate() {
            let j = law.sample(rng);
            buf_j.push(j);
            cur[k] += j / self.rates[k] - i;
        }
        Ok(())
    }

    fn at_milestone(&self, cur: &[f64], barrier: &[f64]) -> bool {
        (0..self.k).all(|k| cur[k] <= barrier[k] - self.gap[k] - self.drop[k])
    }

    fn exceeds(cur: &[f64], barrier: &[f64]) -> bool {
        cur.iter().zip(barrier).any(|(c, b)| c > b)
    }

    /// Exact indicator that some coordinate ever rises more than its gap above the
    /// current point. On `true`, `seg_i`/`seg_j` hold the nominal-law segment up to the
    /// first such rise.
    fn upward_crossing<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        steps: &mut u64,
        seg_i: &mut Vec<f64>,
        seg_j: &mut Vec<f64>,
    ) -> Result<bool> {
        seg_i.clear();
        seg_j.clear();
        if self.rising.is_empty() {
            return Ok(false);
        }
        let kappa = self.rising[rng.random_range(0..self.rising.len())];
        let (arrival, service) = self.tilted[kappa].as_ref().expect("rising station has a tilt");
        let mut rise = vec![0.0; self.k];
        loop {
            self.charge(steps)?;
            let i = arrival.sample(rng);
            seg_i.push(i);
            for k in 0..self.k {
                let j = if k == kappa { service.sample(rng) } else { self.service[k].sample(rng) };
                seg_j.push(j);
                rise[k] += j / self.rates[k] - i;
            }
            if self.rising.iter().any(|&k| rise[k] > self.gap[k]) {
                break;
            }
        }
        let mixture: f64 = self.rising.iter().map(|&k| (self.theta[k] * rise[k]).exp()).sum::<f64>()
            / self.rising.len() as f64;
        Ok(rng.random::<f64>() * mixture < 1.0)
    }

    /// One accepted round: reveals path up to the next certified barrier.
    fn round<R: Rng + ?Sized>(&self, path: &mut BackwardPath, rng: &mut R) -> Result<()> {
        let k = self.k;
        let start = path.committed();
        let origin = BackwardPath::row(&path.walk, k, start).to_vec();
        let barrier = path.barrier.clone();
        let mut cur = origin.clone();
        let (mut buf_i, mut buf_j) = (Vec::new(), Vec::new());
        let (mut seg_i, mut seg_j) = (Vec::new(), Vec::new());

        'proposal: loop {
            buf_i.clear();
            buf_j.clear();
            cur.copy_from_slice(&origin);
            loop {
                // at least one step per round, so walks that can never rise still advance
                loop {
                    self.nominal_step(rng, &mut path.steps, &mut buf_i, &mut buf_j, &mut cur)?;
                    if Self::exceeds(&cur, &barrier) {
                        continue 'proposal;
                    }
                    if self.at_milestone(&cur, &barrier) {
                        break;
                    }
                }
                if !self.upward_crossing(rng, &mut path.steps, &mut seg_i, &mut seg_j)? {
                    break 'proposal;
                }
                for (n, &i) in seg_i.iter().enumerate() {
                    let j = &seg_j[n * k..(n + 1) * k];
                    buf_i.push(i);
                    buf_j.extend_from_slice(j);
                    for c in 0..k {
                        cur[c] += j[c] / self.rates[c] - i;
                    }
                    if Self::exceeds(&cur, &barrier) {
                        continue 'proposal;
                    }
                }
            }
        }

        let mut prev = origin;
        for (n, &i) in buf_i.iter().enumerate() {
            let j = &buf_j[n * k..(n + 1) * k];
            for c in 0..k {
                prev[c] += j[c] / self.rates[c] - i;
            }
            path.interarrival.push(i);
            path.requirement.extend_from_slice(j);
            path.walk.extend_from_slice(&prev);
        }
        for c in 0..k {
            path.barrier[c] = prev[c] + self.gap[c];
        }
        Ok(())
    }

    /// Finalizes every index whose revealed running maximum reaches the barrier,
    /// then fills waiting times, the snapshot clock and the stopping index.
    fn finalize(&self, path: &mut BackwardPath) {
        let k = self.k;
        let total = path.committed();
        let first_open = path.future_max.len() / k;
        if first_open > total {
            return;
        }
        let mut running = BackwardPath::row(&path.walk, k, total).to_vec();
        let mut anchor = None;
        let mut n = total;
        loop {
            let r = BackwardPath::row(&path.walk, k, n);
            for c in 0..k {
                running[c] = running[c].max(r[c]);
            }
            if running.iter().zip(&path.barrier).all(|(m, b)| m >= b) {
                anchor = Some(n);
                break;
            }
            if n == first_open {
                break;
            }
            n -= 1;
        }
        let Some(last) = anchor else { return };

        let count = last + 1 - first_open;
        let mut maxima = vec![0.0; count * k];
        maxima[(count - 1) * k..].copy_from_slice(&running);
        for idx in (0..count - 1).rev() {
            let r = BackwardPath::row(&path.walk, k, first_open + idx);
            for c in 0..k {
                maxima[idx * k + c] = r[c].max(maxima[(idx + 1) * k + c]);
            }
        }
        path.future_max.extend_from_slice(&maxima);
        for m in first_open..=last {
            for c in 0..k {
                let w = path.future_max[m * k + c] - path.walk[m * k + c];
                path.waiting.push(w);
            }
            let a = match m {
                0 => 0.0,
                1 => -path.equilibrium_interarrival,
                _ => path.arrival[m - 1] - path.interarrival[m - 1],
            };
            path.arrival.push(a);
            if path.horizon.is_none() && m >= 1 && (0..k).all(|c| path.departure(m, c) < 0.0) {
                path.horizon = Some(m);
            }
        }
    }
}
