//! End-to-end statistical acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p fjsim-core --test acceptance -- 2 5`.

use std::process::ExitCode;
use std::time::Instant;

mod common;

use common::check_path;
use fjsim_core::stats::draw_replications;
use fjsim_core::*;

const TABLE_RATES: [f64; 4] = [1.8, 1.4, 1.1, 1.06];
const TRUE_S: [f64; 4] = [1.7882, 3.5268, 13.8636, 23.0346];
const TRUE_D: [f64; 4] = [1.0764, 2.0536, 7.7273, 12.7358];
const TRUE_H: [f64; 4] = [-2.1870, -8.6575, -137.6033, -382.0557];

type Criterion = (usize, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn sampler(model: &NetworkModel) -> BackwardSampler {
    BackwardSampler::from_model(model, SamplerConfig::default()).expect("valid model")
}

fn two_station(mu: f64) -> NetworkModel {
    NetworkModel::markovian(1.0, &[mu, mu])
}

fn ten_station() -> NetworkModel {
    NetworkModel::markovian(1.0, &(1..=10).map(|k| 2.0 - 0.05 * k as f64).collect::<Vec<_>>())
}

fn within_3se(e: &QuantityEstimate, truth: f64) -> (bool, String) {
    let z = (e.mean - truth) / e.std_error();
    (z.abs() <= 3.0, format!("{}={:.4} (truth {truth:.4}, z={z:+.2})", e.name, e.mean))
}

/// The two 95% intervals overlap.
fn agree(a: f64, hw_a: f64, b: f64, hw_b: f64) -> bool {
    (a - b).abs() <= hw_a + hw_b
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn closed_forms() -> Outcome {
    let mut bad = Vec::new();
    for (i, &mu) in TABLE_RATES.iter().enumerate() {
        let got = [
            mm_forkjoin_mean_sojourn(1.0, mu).unwrap(),
            mm_forkjoin_mean_unsync(1.0, mu).unwrap(),
            mm_forkjoin_sojourn_derivative(1.0, mu).unwrap(),
        ];
        for (g, want) in got.iter().zip([TRUE_S[i], TRUE_D[i], TRUE_H[i]]) {
            if round4(*g) != want {
                bad.push(format!("mu={mu}: {g:.6} vs {want}"));
            }
        }
    }
    Outcome { pass: bad.is_empty(), detail: if bad.is_empty() { "12/12 values".into() } else { bad.join("; ") } }
}

fn table_checks(rates: &[usize], reps: usize, seed: u64, gradient: bool) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for &i in rates {
        let mu = TABLE_RATES[i];
        let t = Instant::now();
        let report = run_experiment(&sampler(&two_station(mu)), reps, seed).unwrap();
        let checks = if gradient {
            vec![within_3se(report.get(Quantity::GradientSum), TRUE_H[i])]
        } else {
            vec![
                within_3se(report.get(Quantity::Sojourn), TRUE_S[i]),
                within_3se(report.get(Quantity::TotalUnsync), TRUE_D[i]),
            ]
        };
        for (ok, msg) in checks {
            pass &= ok;
            parts.push(format!("mu={mu}: {msg}"));
        }
        parts.push(format!("{:.1}s", t.elapsed().as_secs_f64()));
    }
    Outcome { pass, detail: parts.join(", ") }
}

fn coverage() -> Outcome {
    let res = coverage_experiment(&sampler(&two_station(1.4)), Quantity::Sojourn, 200, 2000, TRUE_S[1], 505).unwrap();
    Outcome {
        pass: (183..=198).contains(&res.covered),
        detail: format!("{}/200 intervals cover {}", res.covered, TRUE_S[1]),
    }
}

/// Kolmogorov distance between a sample and a law with CDF `cdf` that has an atom at zero.
fn ks_stat_with_atom(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let v = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == v {
            j += 1;
        }
        let left = if v == 0.0 { 0.0 } else { cdf(v) };
        d = d.max((i as f64 / n - left).abs()).max((j as f64 / n - cdf(v)).abs());
        i = j;
    }
    d
}

fn distributional_exactness() -> Outcome {
    let (lambda, mu) = (1.0, 1.4);
    let rho = lambda / mu;
    let n = 10_000;
    let samples = draw_replications(&sampler(&two_station(mu)), 606, 0, n).unwrap();
    let w: Vec<f64> = samples.iter().map(|s| s.w0[0]).collect();
    let d = ks_stat_with_atom(w, |x| if x < 0.0 { 0.0 } else { 1.0 - rho * (-(mu - lambda) * x).exp() });
    let critical = 1.628 / (n as f64).sqrt();
    let mut pass = d < critical;
    let mut parts = vec![format!("KS D={d:.4} (crit {critical:.4})")];
    let target = rho / (1.0 - rho);
    for k in 0..2 {
        let q: Vec<f64> = samples.iter().map(|s| f64::from(s.q[k])).collect();
        let e = QuantityEstimate::from_samples(format!("Q_{}", k + 1), &q).unwrap();
        let (ok, msg) = within_3se(&e, target);
        pass &= ok;
        parts.push(msg);
    }
    Outcome { pass, detail: parts.join(", ") }
}

fn ten_station_cross_validation() -> Outcome {
    let model = ten_station();
    let t = Instant::now();
    let report = run_experiment(&sampler(&model), 10_000, 707).unwrap();
    let burn = burn_in_estimate(&model, BurnInSettings::new(100_000, 1_000_000), &mut replication_rng(708, 0)).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();

    let s = report.get(Quantity::Sojourn);
    let agrees = agree(s.mean, s.half_width, burn.mean_sojourn, Z_95 * burn.se_sojourn);
    let near_reference = (s.mean - 3.8452).abs() <= 0.1;
    pass &= agrees && near_reference;
    parts.push(format!("S={:.4}±{:.4} vs burn-in {:.4}±{:.4}", s.mean, s.half_width, burn.mean_sojourn, Z_95 * burn.se_sojourn));

    let mut disagreeing = Vec::new();
    let mut d = Vec::new();
    for k in 0..10 {
        let e = report.get(Quantity::Unsync(k));
        d.push(e.mean);
        if !agree(e.mean, e.half_width, burn.mean_d[k], Z_95 * burn.se_d[k]) {
            disagreeing.push(format!("D_{}: {:.4}±{:.4} vs {:.4}±{:.4}", k + 1, e.mean, e.half_width, burn.mean_d[k], Z_95 * burn.se_d[k]));
        }
    }
    pass &= disagreeing.is_empty();
    parts.push(if disagreeing.is_empty() { "all D_k agree".into() } else { disagreeing.join("; ") });

    // decreasing in the qualitative sense: negative trend, station 10 shortest
    let kbar = 4.5;
    let dbar = d.iter().sum::<f64>() / 10.0;
    let slope: f64 = d.iter().enumerate().map(|(k, x)| (k as f64 - kbar) * (x - dbar)).sum();
    let last_is_min = d[..9].iter().all(|&x| x > d[9]);
    pass &= slope < 0.0 && last_is_min;
    parts.push(format!("D_k = [{}]", d.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")));
    parts.push(format!("{:.1}s", t.elapsed().as_secs_f64()));
    Outcome { pass, detail: parts.join(", ") }
}

fn gradient_vs_finite_differences() -> Outcome {
    let model = ten_station();
    let t = Instant::now();
    let report = run_experiment(&sampler(&model), 10_000, 808).unwrap();
    let settings = BurnInSettings::new(100_000, 1_000_000);
    let mut pass = true;
    let mut parts = Vec::new();
    let mut h = Vec::new();
    for k in 0..10 {
        let e = report.get(Quantity::Gradient(k));
        h.push(e.mean);
        let fd = finite_difference_gradient(&model, k, 0.01 * model.stations[k].rate, settings, 8, 809).unwrap();
        let ok = agree(e.mean, e.half_width, fd.mean, Z_95 * fd.std_error) && e.mean < 0.0;
        pass &= ok;
        parts.push(format!(
            "H_{}={:.4}±{:.4} vs FD {:.4}±{:.4}{}",
            k + 1,
            e.mean,
            e.half_width,
            fd.mean,
            Z_95 * fd.std_error,
            if ok { "" } else { " (x)" }
        ));
    }
    let increasing = h.windows(2).all(|w| w[1].abs() > w[0].abs());
    pass &= increasing;
    if !increasing {
        parts.push("|H_k| not increasing".into());
    }
    parts.push(format!("{:.1}s", t.elapsed().as_secs_f64()));
    Outcome { pass, detail: parts.join(", ") }
}

fn path_invariants() -> Outcome {
    let configs = [
        ("M/M 2x1.4", two_station(1.4)),
        ("M/M 10-station", ten_station()),
        (
            "D/D/1",
            NetworkModel::symmetric(DistributionSpec::deterministic(2.0), DistributionSpec::deterministic(1.0), 1.0, 1),
        ),
        (
            "Erlang/hyper 3-station",
            NetworkModel {
                arrival: DistributionSpec::Erlang { shape: 2, rate: 2.0 },
                stations: vec![
                    Station { service: DistributionSpec::exponential(1.0), rate: 1.5 },
                    Station { service: DistributionSpec::Hyperexponential { weights: vec![0.3, 0.7], rates: vec![0.5, 2.0] }, rate: 1.3 },
                    Station { service: DistributionSpec::Erlang { shape: 3, rate: 3.0 }, rate: 1.2 },
                ],
            },
        ),
        (
            "uniform/deterministic 2-station",
            NetworkModel {
                arrival: DistributionSpec::Uniform { lo: 0.0, hi: 2.0 },
                stations: vec![
                    Station { service: DistributionSpec::deterministic(1.0), rate: 1.25 },
                    Station { service: DistributionSpec::Uniform { lo: 0.5, hi: 1.5 }, rate: 1.1 },
                ],
            },
        ),
    ];
    let mut failures = Vec::new();
    let mut checked = 0;
    for (ci, (name, model)) in configs.iter().enumerate() {
        let sampler = sampler(model);
        for i in 0..200 {
            let mut rng = replication_rng(909 + ci as u64, i);
            let path = sampler.simulate(&mut rng).unwrap();
            checked += 1;
            if let Some(msg) = check_path(&path, model, &sampler, &mut rng) {
                failures.push(format!("{name} path {i}: {msg}"));
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() { format!("{checked} paths clean") } else { failures.join("; ") },
    }
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 9] = [
        (1, "closed-form oracle", closed_forms),
        (2, "unbiasedness, moderate traffic", || table_checks(&[0, 1], 10_000, 202, false)),
        (3, "gradient unbiasedness", || table_checks(&[0, 1], 10_000, 303, true)),
        (4, "heavy traffic", || {
            let a = table_checks(&[2, 3], 10_000, 404, false);
            let b = table_checks(&[2, 3], 10_000, 405, true);
            Outcome { pass: a.pass && b.pass, detail: format!("{}; {}", a.detail, b.detail) }
        }),
        (5, "interval coverage", coverage),
        (6, "distributional exactness", distributional_exactness),
        (7, "10-station cross-validation", ten_station_cross_validation),
        (8, "gradient vs finite differences", gradient_vs_finite_differences),
        (9, "path invariants", path_invariants),
    ];
    let mut all = true;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let out = run();
        all &= out.pass;
        println!("criterion {id} [{}] {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
