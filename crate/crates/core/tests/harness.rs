//! Reduced-scale Monte Carlo behaviour of the experiment harness.

use spikedcorr::asymptotics::eigenvalue_prediction;
use spikedcorr::model::constant_correlation_model;
use spikedcorr::montecarlo::{
    run_cov_vs_corr, run_eigenvalue_clt, run_subcritical, ExperimentConfig, ModelSource, Verdict,
};

fn cfg(model: &str, n: usize, p: usize, reps: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(ModelSource::Named(model.into()), n, p, reps, seed)
}

#[test]
fn noise_family_does_not_matter() {
    let a = run_eigenvalue_clt(&cfg("const-corr:m=4,r=0.8", 400, 100, 400, 3)).unwrap();
    let b = run_eigenvalue_clt(&cfg("const-corr:m=4,r=0.8,noise=rademacher", 400, 100, 400, 4)).unwrap();
    let (ca, cb) = (a.check("eigenvalue_var_corr").unwrap(), b.check("eigenvalue_var_corr").unwrap());
    assert_eq!(ca.theory, cb.theory);
    let band = 4.0 * (ca.se * ca.se + cb.se * cb.se).sqrt();
    assert!((ca.empirical - cb.empirical).abs() <= band, "{} vs {}", ca.empirical, cb.empirical);
}

#[test]
fn limit_centering_shows_the_shift() {
    // γ_n = 0.6 against the limit 0.5: ρ(ℓ, γ_n) > ρ(ℓ, γ), so the mis-centred
    // statistic drifts upwards.
    let mut c = cfg("const-corr:m=4,r=0.8", 400, 240, 300, 8);
    c.gamma_limit = Some(0.5);
    let rep = run_eigenvalue_clt(&c).unwrap();
    let shift = rep.check("eigenvalue_mean_limit_centered").unwrap();
    assert!(shift.theory > 0.0 && shift.empirical > 0.0);
    assert_eq!(shift.verdict, Verdict::Pass);
    assert_eq!(rep.check("eigenvalue_mean_corr").unwrap().verdict, Verdict::Pass);
}

#[test]
fn gaussian_covariance_benchmark() {
    let rep = run_eigenvalue_clt(&cfg("const-corr:m=5,r=0.7", 500, 250, 400, 11)).unwrap();
    let c = rep.check("eigenvalue_var_cov").unwrap();
    let model = constant_correlation_model(5, 0.7).unwrap();
    let pred = eigenvalue_prediction(&model, 1, 0.5, 0.5).unwrap();
    let ell = pred.ell;
    assert!((c.theory - 2.0 * ell * ell * pred.rho_dot).abs() < 1e-12 * c.theory);
    assert_eq!(c.verdict, Verdict::Pass, "{c:?}");
    assert!(rep.passed, "{:?}", rep.checks);
}

#[test]
fn subcritical_limits() {
    let mut c = cfg("const-corr:m=2,r=0.4", 2000, 500, 10, 2);
    c.n_grid = vec![500, 2000];
    let rep = run_subcritical(&c).unwrap();
    assert!(rep.passed, "{:?}", rep.checks);
    assert_eq!(rep.check("eigenvalue_at_max_n").unwrap().theory, 2.25);

    // No spike at all: the top eigenvector carries no information about e₁.
    let mut c = cfg("identity:m=3", 1000, 500, 5, 2);
    c.n_grid = vec![1000];
    let rep = run_subcritical(&c).unwrap();
    assert!(rep.check("projection_sq_at_max_n").unwrap().empirical < 0.02);
}

#[test]
fn ar1_block_variance_reduction() {
    let mut c = cfg("ar1:block=10,r=0.95", 200, 90, 300, 1);
    c.ratio_below = Some(0.5);
    c.projections = vec![(2, 4)];
    let rep = run_cov_vs_corr(&c).unwrap();
    assert!(rep.passed, "{:?}", rep.checks);
    let hist = &rep.tables[0];
    let total: f64 = hist.rows.iter().map(|r| r[2]).sum();
    assert_eq!(total, 300.0);
    assert_eq!(rep.tables[1].rows.len(), 300);
}
