//! Pathwise (IPA) sensitivities of the stationary sojourn time with respect to the
//! station service rates.
//!
//! Along a busy period each earlier requirement shifts the tagged job's wait by
//! `-J_k(n)/mu_k^2` per unit of rate, so `V_k = -sum_{n=1}^{-tau_k} J_k(n)/mu_k^2`,
//! where `tau_k <= 0` is the last epoch at or before job 0 that found station `k`
//! empty. Only the station attaining the sojourn maximum moves `S*(0)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backward::{BackwardPath, BackwardSampler};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    /// `tau_k`; always resolved for `k0`, for the others only when their zero lies in the revealed path.
    pub tau: Vec<Option<i64>>,
    /// `V_k`, present wherever `tau_k` is.
    pub v: Vec<Option<f64>>,
    pub k0: usize,
    /// `H_k = 1{k = k0} (V_k - J0_k / mu_k^2)`.
    pub h: Vec<f64>,
    pub tie: bool,
}

/// Station attaining `max_l W0_l + J0_l / mu_l`; ties go to the lowest index and are flagged.
pub fn argmax_station(w0: &[f64], j0: &[f64], rates: &[f64]) -> (usize, bool) {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    let mut tie = false;
    for (l, ((w, j), mu)) in w0.iter().zip(j0).zip(rates).enumerate() {
        let val = w + j / mu;
        if val > best_val {
            best = l;
            best_val = val;
            tie = false;
        } else if val == best_val {
            tie = true;
        }
    }
    (best, tie)
}

/// `tau_k` if a zero wait of station `k` lies in the finalized part of `path`.
pub fn last_empty_epoch(path: &BackwardPath, k: usize) -> Option<i64> {
    path.first_zero_wait(k).map(|n| -(n as i64))
}

/// `tau_k`, growing the path past its horizon when the busy period is longer.
pub fn resolve_last_empty_epoch<R: Rng + ?Sized>(
    sampler: &BackwardSampler,
    path: &mut BackwardPath,
    k: usize,
    rng: &mut R,
) -> Result<i64> {
    if let Some(tau) = last_empty_epoch(path, k) {
        if (-tau) as usize > path.horizon() {
            path.mark_tau_extended();
        }
        return Ok(tau);
    }
    sampler.extend_until(path, rng, |p| p.first_zero_wait(k).is_some())?;
    path.mark_tau_extended();
    Ok(last_empty_epoch(path, k).expect("extension stops at a zero"))
}

/// `V_k = -sum_{n=1}^{-tau} J_k(n) / mu_k^2`; excludes the tagged job's own requirement.
pub fn waiting_derivative(path: &BackwardPath, k: usize, tau: i64) -> f64 {
    let mu = path.rates()[k];
    let busy = (-tau) as usize;
    -(1..=busy).map(|n| path.requirement(n)[k]).sum::<f64>() / (mu * mu)
}

/// Builds `H` for the tagged job with fresh requirement `j0` and waiting vector `w0 = W*(0)`.
pub fn gradient_estimator<R: Rng + ?Sized>(
    sampler: &BackwardSampler,
    path: &mut BackwardPath,
    j0: &[f64],
    w0: &[f64],
    rng: &mut R,
) -> Result<GradientSample> {
    let k = path.k();
    let rates = path.rates().to_vec();
    let (k0, tie) = argmax_station(w0, j0, &rates);
    let tau_k0 = resolve_last_empty_epoch(sampler, path, k0, rng)?;

    let mut tau = vec![None; k];
    let mut v = vec![None; k];
    for l in 0..k {
        let t = if l == k0 { Some(tau_k0) } else { last_empty_epoch(path, l) };
        tau[l] = t;
        v[l] = t.map(|t| waiting_derivative(path, l, t));
    }
    let mut h = vec![0.0; k];
    let mu = rates[k0];
    h[k0] = v[k0].expect("k0 resolved") - j0[k0] / (mu * mu);
    Ok(GradientSample { tau, v, k0, h, tie })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_station(&[0.0, 0.0], &[1.0, 2.0], &[1.0, 1.0]), (1, false));
        assert_eq!(argmax_station(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]), (0, true));
        assert_eq!(argmax_station(&[3.2], &[0.1], &[2.0]), (0, false));
        // rate scaling matters
        assert_eq!(argmax_station(&[0.0, 0.0], &[1.0, 2.0], &[1.0, 4.0]), (0, false));
    }

    #[test]
    fn tie_flag_clears_when_beaten() {
        assert_eq!(argmax_station(&[1.0, 1.0, 2.0], &[1.0, 1.0, 1.0], &[1.0; 3]), (2, false));
    }
}
