//! Shared checks for the integration test targets.

use fjsim_core::{ipa, BackwardPath, BackwardSampler, NetworkModel};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Every structural property of one sampled path; returns the first violation.
pub fn check_path(path: &BackwardPath, model: &NetworkModel, sampler: &BackwardSampler, rng: &mut rand_chacha::ChaCha8Rng) -> Option<String> {
    let k = path.k();
    let rates = model.rates();
    let len = path.len();
    if path.horizon() > len || path.horizon() == 0 {
        return Some(format!("horizon {} outside 1..={len}", path.horizon()));
    }
    if path.walk(0).iter().any(|&r| r != 0.0) {
        return Some("R(0) != 0".into());
    }
    for n in 0..=len {
        let (r, m, w) = (path.walk(n), path.future_max(n), path.waiting(n));
        for c in 0..k {
            if n >= 1 {
                let step = path.requirement(n)[c] / rates[c] - path.interarrival(n);
                if path.walk(n - 1)[c] + step != r[c] {
                    return Some(format!("walk recursion fails at n={n}"));
                }
                // W*(-(n-1)) = max(0, W*(-n) + J(n)/mu - I(n))
                if !close(path.waiting(n - 1)[c], (w[c] + step).max(0.0)) {
                    return Some(format!("Lindley recursion fails at n={n}"));
                }
            }
            if n < len && m[c] != r[c].max(path.future_max(n + 1)[c]) {
                return Some(format!("max recursion fails at n={n}"));
            }
            if m[c] < r[c] || w[c] < 0.0 || w[c] != m[c] - r[c] {
                return Some(format!("waiting time inconsistent at n={n}"));
            }
        }
    }
    let gone = |n: usize| (0..k).all(|c| path.departure(n, c) < 0.0);
    if !gone(path.horizon()) || (1..path.horizon()).any(gone) {
        return Some("stopping index is not the first fully departed job".into());
    }
    let mut path = path.clone();
    for c in 0..k {
        let tau = ipa::resolve_last_empty_epoch(sampler, &mut path, c, rng).unwrap();
        let t = (-tau) as usize;
        if path.waiting(t)[c] != 0.0 || (0..t).any(|n| path.waiting(n)[c] <= 0.0) {
            return Some(format!("tau_{} = {tau} is not the last empty epoch", c + 1));
        }
    }
    None
}

