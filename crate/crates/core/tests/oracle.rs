use fjsim_core::*;

#[test]
fn burn_in_matches_two_station_closed_form() {
    let model = NetworkModel::markovian(1.0, &[1.4, 1.4]);
    let est = burn_in_estimate(&model, BurnInSettings::new(100_000, 1_000_000), &mut replication_rng(51, 0)).unwrap();
    let truth = mm_forkjoin_mean_sojourn(1.0, 1.4).unwrap();
    assert!((est.mean_sojourn / truth - 1.0).abs() < 0.02, "{}", est.mean_sojourn);
    let d = mm_forkjoin_mean_unsync(1.0, 1.4).unwrap();
    assert!((est.mean_total_unsync / d - 1.0).abs() < 0.05, "{}", est.mean_total_unsync);
    for k in 0..2 {
        // each station alone is M/M/1: mean number in system 2.5
        assert!((est.mean_q[k] / 2.5 - 1.0).abs() < 0.05, "{}", est.mean_q[k]);
    }
}

#[test]
fn burn_in_matches_mm1_wait() {
    let (lambda, mu) = (1.0, 1.6);
    let model = NetworkModel::markovian(lambda, &[mu]);
    let est = burn_in_estimate(&model, BurnInSettings::new(100_000, 1_000_000), &mut replication_rng(52, 0)).unwrap();
    let target = lambda / (mu * (mu - lambda));
    assert!((est.mean_wait[0] / target - 1.0).abs() < 0.02, "{}", est.mean_wait[0]);
    assert_eq!(est.mean_d, vec![0.0]);
}

#[test]
fn longer_horizon_shrinks_standard_error() {
    let model = NetworkModel::markovian(1.0, &[1.5, 1.8]);
    let short = burn_in_estimate(&model, BurnInSettings::new(20_000, 220_000), &mut replication_rng(53, 0)).unwrap();
    let long = burn_in_estimate(&model, BurnInSettings::new(20_000, 820_000), &mut replication_rng(53, 1)).unwrap();
    // four times the jobs: half the standard error, up to batch-means noise
    let ratio = long.se_sojourn / short.se_sojourn;
    assert!(ratio > 0.25 && ratio < 0.9, "{ratio}");
}

#[test]
fn finite_differences_recover_closed_form_derivative() {
    let model = NetworkModel::markovian(1.0, &[1.8, 1.8]);
    let settings = BurnInSettings::new(50_000, 500_000);
    let parts: Vec<FiniteDifference> =
        (0..2).map(|k| finite_difference_gradient(&model, k, 0.01, settings, 6, 54).unwrap()).collect();
    let sum = parts[0].mean + parts[1].mean;
    // the components share streams; se_0 + se_1 bounds the error of their sum and difference
    let se = parts[0].std_error + parts[1].std_error;
    let truth = mm_forkjoin_sojourn_derivative(1.0, 1.8).unwrap();
    assert!((sum - truth).abs() < 3.0 * se, "{sum} vs {truth}");
    assert!((parts[0].mean - parts[1].mean).abs() < 3.0 * se, "{parts:?}");
}
