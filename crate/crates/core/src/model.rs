//! Network specification, stability checks and the variate generators used by
//! the samplers: nominal, exponentially tilted and equilibrium (stationary
//! excess) laws for the five supported families.
//!
//! Service at station `k` takes `J_k / mu_k` time units, where `J_k` is the
//! task's service requirement and `mu_k` the station's service rate.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of an interarrival time or of a service requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum DistributionSpec {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
    Deterministic { value: f64 },
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Self {
        DistributionSpec::Exponential { rate }
    }

    pub fn deterministic(value: f64) -> Self {
        DistributionSpec::Deterministic { value }
    }

    /// Structural parameter check.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            DistributionSpec::Exponential { rate } => {
                if !positive(*rate) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
            }
            DistributionSpec::Erlang { shape, rate } => {
                if *shape == 0 || !positive(*rate) {
                    return bad(format!("erlang needs shape >= 1 and rate > 0, got ({shape}, {rate})"));
                }
            }
            DistributionSpec::Hyperexponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return bad("hyperexponential weights and rates must be non-empty and of equal length".into());
                }
                if weights.iter().any(|w| !positive(*w)) || rates.iter().any(|r| !positive(*r)) {
                    return bad("hyperexponential weights and rates must be positive".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("hyperexponential weights must sum to 1, got {total}"));
                }
            }
            DistributionSpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && hi > lo) {
                    return bad(format!("uniform needs 0 <= lo < hi, got ({lo}, {hi})"));
                }
            }
            DistributionSpec::Deterministic { value } => {
                if !positive(*value) {
                    return bad(format!("deterministic value must be positive, got {value}"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            DistributionSpec::Exponential { rate } => 1.0 / rate,
            DistributionSpec::Erlang { shape, rate } => f64::from(*shape) / rate,
            DistributionSpec::Hyperexponential { weights, rates } => {
                weights.iter().zip(rates).map(|(p, r)| p / r).sum()
            }
            DistributionSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistributionSpec::Deterministic { value } => *value,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            DistributionSpec::Exponential { rate } => 2.0 / (rate * rate),
            DistributionSpec::Erlang { shape, rate } => {
                let n = f64::from(*shape);
                n * (n + 1.0) / (rate * rate)
            }
            DistributionSpec::Hyperexponential { weights, rates } => {
                weights.iter().zip(rates).map(|(p, r)| 2.0 * p / (r * r)).sum()
            }
            DistributionSpec::Uniform { lo, hi } => (hi * hi + hi * lo + lo * lo) / 3.0,
            DistributionSpec::Deterministic { value } => value * value,
        }
    }

    /// Supremum of the arguments `s` for which `E[exp(s X)]` is finite.
    pub fn mgf_abscissa(&self) -> f64 {
        match self {
            DistributionSpec::Exponential { rate } | DistributionSpec::Erlang { rate, .. } => *rate,
            DistributionSpec::Hyperexponential { rates, .. } => {
                rates.iter().copied().fold(f64::INFINITY, f64::min)
            }
            DistributionSpec::Uniform { .. } | DistributionSpec::Deterministic { .. } => f64::INFINITY,
        }
    }

    /// `E[exp(s X)]`, or `None` outside the domain.
    pub fn mgf(&self, s: f64) -> Option<f64> {
        if s >= self.mgf_abscissa() {
            return None;
        }
        Some(match self {
            DistributionSpec::Exponential { rate } => rate / (rate - s),
            DistributionSpec::Erlang { shape, rate } => (rate / (rate - s)).powi(*shape as i32),
            DistributionSpec::Hyperexponential { weights, rates } => {
                weights.iter().zip(rates).map(|(p, r)| p * r / (r - s)).sum()
            }
            DistributionSpec::Uniform { lo, hi } => {
                let w = hi - lo;
                if (s * w).abs() < 1e-12 {
                    (s * 0.5 * (lo + hi)).exp()
                } else {
                    (s * lo).exp() * (s * w).exp_m1() / (s * w)
                }
            }
            DistributionSpec::Deterministic { value } => (s * value).exp(),
        })
    }

    /// `log E[exp(s X)]`, `+inf` outside the domain.
    pub fn log_mgf(&self, s: f64) -> f64 {
        match self {
            DistributionSpec::Exponential { rate } if s < *rate => -(-s / rate).ln_1p(),
            DistributionSpec::Erlang { shape, rate } if s < *rate => {
                -f64::from(*shape) * (-s / rate).ln_1p()
            }
            DistributionSpec::Deterministic { value } => s * value,
            DistributionSpec::Uniform { lo, hi } => {
                let w = hi - lo;
                let x = s * w;
                if x.abs() < 1e-12 {
                    s * 0.5 * (lo + hi)
                } else if x > 0.0 {
                    // log((e^x - 1)/x) = x + log((1 - e^-x)/x), stable for large x.
                    s * lo + x + (-(-x).exp_m1() / x).ln()
                } else {
                    s * lo + (x.exp_m1() / x).ln()
                }
            }
            _ => self.mgf(s).map_or(f64::INFINITY, f64::ln),
        }
    }

    pub fn support_inf(&self) -> f64 {
        match self {
            DistributionSpec::Uniform { lo, .. } => *lo,
            DistributionSpec::Deterministic { value } => *value,
            _ => 0.0,
        }
    }

    pub fn support_sup(&self) -> f64 {
        match self {
            DistributionSpec::Uniform { hi, .. } => *hi,
            DistributionSpec::Deterministic { value } => *value,
            _ => f64::INFINITY,
        }
    }

    /// Prepared sampler for the nominal law.
    pub fn law(&self) -> Law {
        match self {
            DistributionSpec::Exponential { rate } => Law::Exponential { rate: *rate },
            DistributionSpec::Erlang { shape, rate } => Law::Erlang { shape: *shape, rate: *rate },
            DistributionSpec::Hyperexponential { weights, rates } => Law::hyper(weights, rates.clone()),
            DistributionSpec::Uniform { lo, hi } => Law::Uniform { lo: *lo, width: hi - lo },
            DistributionSpec::Deterministic { value } => Law::Point(*value),
        }
    }

    /// Prepared sampler for the law with density multiplied by `exp(s x) / E[exp(s X)]`.
    pub fn tilted(&self, s: f64) -> Result<Law> {
        if s >= self.mgf_abscissa() || !s.is_finite() {
            return Err(Error::TiltOutsideDomain { tilt: s });
        }
        Ok(match self {
            DistributionSpec::Exponential { rate } => Law::Exponential { rate: rate - s },
            DistributionSpec::Erlang { shape, rate } => Law::Erlang { shape: *shape, rate: rate - s },
            DistributionSpec::Hyperexponential { weights, rates } => {
                let tilted: Vec<f64> = weights.iter().zip(rates).map(|(p, r)| p * r / (r - s)).collect();
                let total: f64 = tilted.iter().sum();
                let tilted: Vec<f64> = tilted.iter().map(|w| w / total).collect();
                Law::hyper(&tilted, rates.iter().map(|r| r - s).collect())
            }
            DistributionSpec::Uniform { lo, hi } => {
                if (s * (hi - lo)).abs() < 1e-12 {
                    Law::Uniform { lo: *lo, width: hi - lo }
                } else {
                    Law::TruncatedExponential { lo: *lo, width: hi - lo, slope: s }
                }
            }
            DistributionSpec::Deterministic { value } => Law::Point(*value),
        })
    }

    /// Prepared sampler for the equilibrium law `F_e(x) = (1/m) int_0^x (1 - F(u)) du`.
    pub fn equilibrium(&self) -> Law {
        match self {
            DistributionSpec::Exponential { rate } => Law::Exponential { rate: *rate },
            // Survival of Erlang(n, r) is a uniform mixture of Erlang(i, r), i = 1..n, densities.
            DistributionSpec::Erlang { shape, rate } => Law::ErlangMixture { max_shape: *shape, rate: *rate },
            DistributionSpec::Hyperexponential { weights, rates } => {
                let m = self.mean();
                let w: Vec<f64> = weights.iter().zip(rates).map(|(p, r)| p / r / m).collect();
                Law::hyper(&w, rates.clone())
            }
            DistributionSpec::Uniform { lo, hi } => Law::UniformExcess { lo: *lo, hi: *hi },
            DistributionSpec::Deterministic { value } => Law::Uniform { lo: 0.0, width: *value },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.law().sample(rng)
    }

    pub fn sample_equilibrium<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.equilibrium().sample(rng)
    }
}

/// A ready-to-draw law. Built from a [`DistributionSpec`] once and sampled many times.
#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    ErlangMixture { max_shape: u32, rate: f64 },
    Hyperexponential { cumulative: Vec<f64>, rates: Vec<f64> },
    Uniform { lo: f64, width: f64 },
    /// Density proportional to `exp(slope x)` on `[lo, lo + width]`.
    TruncatedExponential { lo: f64, width: f64, slope: f64 },
    /// Equilibrium law of `Uniform(lo, hi)`.
    UniformExcess { lo: f64, hi: f64 },
    Point(f64),
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (0, 1]
    1.0 - rng.random::<f64>()
}

fn erlang<R: Rng + ?Sized>(shape: u32, rate: f64, rng: &mut R) -> f64 {
    let total: f64 = (0..shape).map(|_| -> f64 { Exp1.sample(rng) }).sum();
    total / rate
}

impl Law {
    fn hyper(weights: &[f64], rates: Vec<f64>) -> Law {
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = f64::INFINITY;
        }
        Law::Hyperexponential { cumulative, rates }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            Law::Erlang { shape, rate } => erlang(*shape, *rate, rng),
            Law::ErlangMixture { max_shape, rate } => {
                let shape = rng.random_range(1..=*max_shape);
                erlang(shape, *rate, rng)
            }
            Law::Hyperexponential { cumulative, rates } => {
                let u: f64 = rng.random();
                let branch = cumulative.iter().position(|c| u < *c).unwrap_or(rates.len() - 1);
                let e: f64 = Exp1.sample(rng);
                e / rates[branch]
            }
            Law::Uniform { lo, width } => lo + width * rng.random::<f64>(),
            Law::TruncatedExponential { lo, width, slope } => {
                let u = open_unit(rng);
                let x = if *slope > 0.0 {
                    width + (u + (1.0 - u) * (-slope * width).exp()).ln() / slope
                } else {
                    (u * (slope * width).exp_m1()).ln_1p() / slope
                };
                lo + x.clamp(0.0, *width)
            }
            Law::UniformExcess { lo, hi } => {
                let m = 0.5 * (lo + hi);
                let w = hi - lo;
                let u: f64 = rng.random();
                let flat = lo / m;
                if u <= flat {
                    u * m
                } else {
                    let r = (w * w - 2.0 * w * m * (u - flat)).max(0.0);
                    hi - r.sqrt()
                }
            }
            Law::Point(v) => *v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub service: DistributionSpec,
    pub rate: f64,
}

/// K parallel stations fed by one renewal arrival stream; every job forks one task per station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub arrival: DistributionSpec,
    pub stations: Vec<Station>,
}

impl NetworkModel {
    /// Identical stations: requirement law `service`, service rate `rate`.
    pub fn symmetric(arrival: DistributionSpec, service: DistributionSpec, rate: f64, k: usize) -> Self {
        NetworkModel {
            arrival,
            stations: (0..k).map(|_| Station { service: service.clone(), rate }).collect(),
        }
    }

    /// Poisson(lambda) arrivals, unit-mean exponential requirements, station rates `rates`.
    pub fn markovian(lambda: f64, rates: &[f64]) -> Self {
        NetworkModel {
            arrival: DistributionSpec::exponential(lambda),
            stations: rates
                .iter()
                .map(|&rate| Station { service: DistributionSpec::exponential(1.0), rate })
                .collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.stations.len()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.stations.iter().map(|s| s.rate).collect()
    }

    /// Per-station load `E[J_k] / (mu_k E[I])`.
    pub fn loads(&self) -> Vec<f64> {
        let ei = self.arrival.mean();
        self.stations.iter().map(|s| s.service.mean() / (s.rate * ei)).collect()
    }

    pub fn with_rate(&self, station: usize, rate: f64) -> Self {
        let mut m = self.clone();
        m.stations[station].rate = rate;
        m
    }

    /// Checks structure, stability of every station and finiteness of service MGFs near zero.
    pub fn validate(&self) -> Result<()> {
        if self.stations.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one station".into()));
        }
        self.arrival.check()?;
        for (k, st) in self.stations.iter().enumerate() {
            st.service.check()?;
            if !positive(st.rate) {
                return Err(Error::InvalidParameter(format!(
                    "station {} service rate must be positive, got {}",
                    k + 1,
                    st.rate
                )));
            }
            if !(st.service.mgf_abscissa() > 0.0) {
                return Err(Error::HeavyTail { station: k });
            }
        }
        for (k, load) in self.loads().into_iter().enumerate() {
            if !(load < 1.0) {
                return Err(Error::UnstableStation { station: k, load });
            }
        }
        Ok(())
    }

    /// `log E[exp(theta (J_k / mu_k - I))]`.
    pub fn increment_log_mgf(&self, k: usize, theta: f64) -> f64 {
        let st = &self.stations[k];
        st.service.log_mgf(theta / st.rate) + self.arrival.log_mgf(-theta)
    }

    /// Draws `(I, J)` with `(I, J_k)` reweighted by `exp(theta (J_k / mu_k - I))`;
    /// the other requirement components keep their nominal laws.
    pub fn sample_tilted_pair<R: Rng + ?Sized>(&self, k: usize, theta: f64, rng: &mut R) -> Result<(f64, Vec<f64>)> {
        let arrival = self.arrival.tilted(-theta)?;
        let tilted = self.stations[k].service.tilted(theta / self.stations[k].rate)?;
        let i = arrival.sample(rng);
        let j = self
            .stations
            .iter()
            .enumerate()
            .map(|(l, st)| if l == k { tilted.sample(rng) } else { st.service.sample(rng) })
            .collect();
        Ok((i, j))
    }
}

/// Per-station positive roots of `log E[exp(theta (J_k/mu_k - I))] = 0`.
///
/// A station whose increment `J_k/mu_k - I` is almost surely non-positive never rises,
/// and carries `theta = +inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramerRoots {
    pub theta: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl CramerRoots {
    pub fn solve(model: &NetworkModel) -> Result<Self> {
        let mut theta = Vec::with_capacity(model.k());
        let mut residuals = Vec::with_capacity(model.k());
        for k in 0..model.k() {
            let t = cramer_root(model, k)?;
            residuals.push(if t.is_finite() { model.increment_log_mgf(k, t).exp_m1().abs() } else { 0.0 });
            theta.push(t);
        }
        Ok(CramerRoots { theta, residuals })
    }

    pub fn finite(&self, k: usize) -> bool {
        self.theta[k].is_finite()
    }
}

const ROOT_TOLERANCE: f64 = 1e-12;

/// Positive Cramer root for station `k`, by doubling from `1e-6` to bracket and then bisection.
pub fn cramer_root(model: &NetworkModel, k: usize) -> Result<f64> {
    let st = &model.stations[k];
    if st.service.support_sup() / st.rate - model.arrival.support_inf() <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let psi = |t: f64| model.increment_log_mgf(k, t);
    let boundary = st.rate * st.service.mgf_abscissa();
    let cap = if boundary.is_finite() { 0.999 * boundary } else { 1e12 };

    let mut lo = 0.0;
    let mut hi = 1e-6_f64.min(cap);
    while psi(hi) <= 0.0 {
        if hi >= cap {
            return Err(Error::RootNotBracketed { station: k });
        }
        lo = hi;
        hi = (2.0 * hi).min(cap);
    }
    for _ in 0..400 {
        if hi - lo <= ROOT_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if psi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if mid <= 0.0 {
        return Err(Error::RootNotBracketed { station: k });
    }
    Ok(mid)
}
