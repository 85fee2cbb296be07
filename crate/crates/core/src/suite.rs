//! Bundled verification suites: `paper-desk` (full acceptance scale) and
//! `smoke` (reduced replicates, about a minute).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    eigenvalue_prediction, eigenvalue_variance_gaussian, eigenvector_prediction, sigma_tilde_gaussian,
};
use crate::cumulants::{empirical_cumulants, kappa_tensor, kcheck_gaussian, kcheck_tensor, Tensor4};
use crate::error::{invalid, Result};
use crate::laws::{c_integral, companion_integrate, critical_spike, rho, rho_dot, stieltjes_m};
use crate::model::{build_model, DistributionSpec, ModelSpec};
use crate::montecarlo::{
    run_k_convergence, run_k_diagnostic, run_spike_clt, run_eigenvector_clt, run_subcritical, ExperimentConfig,
    McReport, ModelSource, Verdict,
};
use crate::sampling::{correlation_from_covariance, normalized_bilinear_form, sample_correlation, sample_covariance};

pub const SUITES: [&str; 2] = ["paper-desk", "smoke"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    PaperDesk,
    Smoke,
}

impl std::str::FromStr for Scale {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-desk" => Ok(Self::PaperDesk),
            "smoke" => Ok(Self::Smoke),
            other => Err(invalid(format!("unknown suite `{other}` (expected one of {})", SUITES.join(", ")))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    /// Failed checks and headline numbers.
    pub details: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<McReport>,
}

impl CriterionResult {
    fn new(id: u8, name: &str) -> Self {
        Self { id, name: name.into(), passed: true, details: Vec::new(), reports: Vec::new() }
    }

    fn require(&mut self, ok: bool, detail: impl Into<String>) {
        if !ok {
            self.passed = false;
            self.details.push(detail.into());
        }
    }

    fn add_report(&mut self, rep: McReport) {
        for c in rep.checks.iter().filter(|c| c.verdict == Verdict::Fail) {
            self.details.push(format!(
                "{}: theory {:.6} empirical {:.6} se {:.6}",
                c.stat, c.theory, c.empirical, c.se
            ));
        }
        self.passed &= rep.passed;
        self.reports.push(rep);
    }

    /// One summary line.
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("[{status}] criterion {:>2}: {}", self.id, self.name);
        if !self.details.is_empty() {
            s.push_str(" | ");
            s.push_str(&self.details.join("; "));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub suite: Scale,
    pub criteria: Vec<CriterionResult>,
    pub passed: bool,
}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "analytic identities"),
    (2, "dual-pathway oracle"),
    (3, "cumulant Monte Carlo"),
    (4, "eigenvalue CLT, Gaussian"),
    (5, "eigenvalue CLT, non-Gaussian"),
    (6, "eigenvector CLT"),
    (7, "subcritical spike"),
    (8, "K diagnostic"),
    (9, "concentration invariants"),
    (10, "determinism"),
];

fn name_of(id: u8) -> &'static str {
    CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.1)
}

fn smoke(scale: Scale) -> bool {
    scale == Scale::Smoke
}

fn cfg(model: &str, n: usize, p: usize, reps: usize, seed: u64, threads: Option<usize>) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ModelSource::Named(model.into()), n, p, reps, seed);
    c.threads = threads;
    c
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn analytic(id: u8) -> Result<CriterionResult> {
    let mut out = CriterionResult::new(id, name_of(id));
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for &g in &[0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 4.0] {
        for &ell in &[1.2, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0] {
            if ell <= critical_spike(g) + 1e-3 {
                continue;
            }
            let r = rho(ell, g)?;
            let e1 = (stieltjes_m(r, g)? + 1.0 / ell).abs();
            let e2 = (1.0 + c_integral(r, g)? * ell - r / (ell * rho_dot(ell, g)?)).abs();
            worst.0 = worst.0.max(e1);
            worst.1 = worst.1.max(e2);
        }
        worst.2 = worst.2.max((companion_integrate(|_| 1.0, g)? - 1.0).abs());
    }
    out.require(worst.0 <= 1e-7, format!("Stieltjes identity error {:.3e}", worst.0));
    out.require(worst.1 <= 1e-7, format!("c-identity error {:.3e}", worst.1));
    out.require(worst.2 <= 1e-9, format!("companion mass error {:.3e}", worst.2));
    if out.passed {
        out.details.push(format!("max errors {:.1e}, {:.1e}, {:.1e}", worst.0, worst.1, worst.2));
    }
    Ok(out)
}

/// Random SPD matrix with a clearly separated top eigenvalue.
pub fn random_spd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / m as f64 + &u * u.transpose() * 2.0 + DMatrix::identity(m, m) * 0.5
}

fn tensor_gap(a: &Tensor4, b: &Tensor4) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dual_pathway(id: u8) -> Result<CriterionResult> {
    let mut out = CriterionResult::new(id, name_of(id));
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let (mut w1, mut w2, mut w3) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let m = rng.random_range(2..=8);
        let model = build_model(random_spd(m, &mut rng), DistributionSpec::Gaussian)?;
        let ell = model.ell[0];
        let g = (0.25 * (ell - 1.0).powi(2)).min(0.5);
        let tensor = eigenvalue_prediction(&model, 1, g, g)?.var_total;
        w1 = w1.max(rel(tensor, eigenvalue_variance_gaussian(&model, 1, g)?));
        let st = eigenvector_prediction(&model, 1, g)?.sigma_tilde;
        let closed = sigma_tilde_gaussian(&model, 1, g)?;
        let scale = closed.amax().max(1.0);
        w2 = w2.max((st - &closed).amax() / scale);
        w3 = w3.max(tensor_gap(&kcheck_tensor(&model)?, &kcheck_gaussian(&model.gamma)));
    }
    out.require(w1 <= 1e-10, format!("eigenvalue pathways differ by {w1:.3e}"));
    out.require(w2 <= 1e-10, format!("eigenvector pathways differ by {w2:.3e}"));
    out.require(w3 <= 1e-12, format!("Gaussian κ̌ pathways differ by {w3:.3e}"));
    if out.passed {
        out.details.push(format!("max gaps {w1:.1e}, {w2:.1e}, {w3:.1e}"));
    }
    Ok(out)
}

fn cumulant_mc(id: u8, scale: Scale) -> Result<CriterionResult> {
    let mut out = CriterionResult::new(id, name_of(id));
    let n = if smoke(scale) { 100_000 } else { 1_000_000 };
    for (k, spec) in ["const-corr:m=3,r=0.5,dist=rademacher", "const-corr:m=4,r=0.6,dist=uniform", "ar1:block=4,r=0.7,dist=rademacher"]
        .iter()
        .enumerate()
    {
        let model = spec.parse::<ModelSpec>()?.build()?;
        let m = model.m;
        let mut rng = ChaCha8Rng::seed_from_u64(77 + k as u64);
        let mut x = DMatrix::zeros(n, m);
        let mut row = vec![0.0; m];
        for t in 0..n {
            model.sample_signal(&mut rng, &mut row);
            for c in 0..m {
                x[(t, c)] = row[c];
            }
        }
        let sd: Vec<f64> = model.sigma_sq.iter().map(|v| v.sqrt()).collect();
        let emp = empirical_cumulants(&x, Some(&sd), None)?;
        let (kappa, kcheck) = (kappa_tensor(&model)?, kcheck_tensor(&model)?);
        let mut worst = 0.0f64;
        let mut bad = 0;
        for (name, e, se, th) in [("κ", &emp.kappa, &emp.kappa_se, &kappa), ("κ̌", &emp.kcheck, &emp.kcheck_se, &kcheck)] {
            for i in 0..th.values.len() {
                let diff = (e.values[i] - th.values[i]).abs();
                // Components with no sampling variability must match to rounding.
                let z = if se.values[i] > 1e-12 { diff / se.values[i] } else if diff <= 1e-9 { 0.0 } else { f64::INFINITY };
                worst = worst.max(z);
                if z > 4.0 {
                    bad += 1;
                    if bad <= 3 {
                        out.details.push(format!("{spec} {name}[{i}] off by {z:.2} s.e."));
                    }
                }
            }
        }
        out.passed &= bad == 0;
        out.details.push(format!("{spec}: max |z| = {worst:.2}"));
    }
    Ok(out)
}

fn eigen_clt(scale: Scale, seed: u64, threads: Option<usize>) -> Result<(CriterionResult, CriterionResult)> {
    let (mut c4, mut c6) = (CriterionResult::new(4, name_of(4)), CriterionResult::new(6, name_of(6)));
    let reps = if smoke(scale) { 200 } else { 2000 };
    let mut base = cfg("const-corr:m=10,r=0.9", 1000, 500, reps, seed, threads);
    base.projections = vec![(2, 2), (2, 3)];
    base.ratio_below = Some(0.05);
    if !smoke(scale) {
        base.var_rel_tol = Some(0.10);
    }
    let (ev, vec) = run_spike_clt(&base)?;
    c4.add_report(ev);
    c6.add_report(vec);
    // Constant correlation makes Σ_{1,kl} isotropic for k, l ≥ 2; an AR(1)
    // block has genuine cross-covariances.
    let mut ar = cfg("ar1:block=10,r=0.95", 1000, 500, reps, seed + 1, threads);
    ar.projections = vec![(2, 4)];
    c6.add_report(run_eigenvector_clt(&ar)?);
    Ok((c4, c6))
}

fn nongaussian_clt(scale: Scale, seed: u64, threads: Option<usize>) -> Result<CriterionResult> {
    let mut out = CriterionResult::new(5, name_of(5));
    let reps = if smoke(scale) { 200 } else { 2000 };
    let rep = crate::montecarlo::run_eigenvalue_clt(&cfg("const-corr:m=4,r=0.8,dist=rademacher", 2000, 500, reps, seed, threads))?;
    let c = rep.check("eigenvalue_var_corr").expect("variance check");
    out.details.push(format!("variance {:.4} vs theory {:.4}", c.empirical, c.theory));
    out.add_report(rep);
    Ok(out)
}

fn subcritical(scale: Scale, seed: u64, threads: Option<usize>) -> Result<CriterionResult> {
    let mut out = CriterionResult::new(7, name_of(7));
    let (grid, reps) = if smoke(scale) { (vec![250, 500], 10) } else { (vec![250, 500, 1000, 2000], 20) };
    let n = *grid.last().expect("grid");
    let mut c = cfg("const-corr:m=4,r=0.1", n, n, reps, seed, threads);
    c.n_grid = grid;
    out.add_report(run_subcritical(&c)?);
    Ok(out)
}

fn k_diag(scale: Scale, seed: u64, threads: Option<usize>) -> Result<CriterionResult> {
    let mut out = CriterionResult::new(8, name_of(8));
    let reps = if smoke(scale) { 200 } else { 2000 };
    out.add_report(run_k_diagnostic(&cfg("const-corr:m=2,r=0.8", 2000, 500, reps, seed, threads))?);
    let reps = if smoke(scale) { 1 } else { 2 };
    let conv = run_k_convergence(&cfg("const-corr:m=2,r=0.8", 10_000, 1000, reps, seed + 1, threads), 0.05)?;
    out.details.push(format!("‖K − (ρ/ℓ)Γ‖ = {:.4}", conv.checks[0].empirical));
    out.add_report(conv);
    Ok(out)
}

fn concentration(id: u8, scale: Scale) -> Result<CriterionResult> {
    let mut out = CriterionResult::new(id, name_of(id));
    let cases = if smoke(scale) { 50 } else { 200 };
    let mut rng = ChaCha8Rng::seed_from_u64(31_337);
    let (mut worst_z, mut worst_inv) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        // n⁻¹x̄ᵀBȳ → c·n⁻¹tr B for unit vectors with correlation c.
        let n = rng.random_range(300..=1200);
        let c: f64 = rng.random_range(-0.9..0.9);
        let diag: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        let b = DMatrix::from_diagonal(&DVector::from_vec(diag.clone()));
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * c + z * (1.0 - c * c).sqrt();
        let nf = n as f64;
        let target = c * diag.iter().sum::<f64>() / nf;
        let sd = ((1.0 + c * c) * diag.iter().map(|d| d * d).sum::<f64>() / nf / nf).sqrt();
        worst_z = worst_z.max((normalized_bilinear_form(&x, &y, &b)? - target).abs() / sd);

        // Correlation is invariant under positive row scaling.
        let d = rng.random_range(3..=12);
        let nn = rng.random_range(d + 5..=4 * d + 20);
        let xs = DMatrix::from_fn(d, nn, |_, _| rng.sample::<f64, _>(StandardNormal));
        let scales: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
        let scaled = DMatrix::from_fn(d, nn, |i, j| xs[(i, j)] * scales[i]);
        let r1 = sample_correlation(&xs)?;
        let r2 = correlation_from_covariance(&sample_covariance(&scaled))?;
        worst_inv = worst_inv.max((r1 - r2).amax());
    }
    out.require(worst_z <= 6.0, format!("bilinear form deviates by {worst_z:.2} sd"));
    out.require(worst_inv <= 1e-12, format!("scale invariance error {worst_inv:.3e}"));
    if out.passed {
        out.details.push(format!("max |z| {worst_z:.2}, invariance error {worst_inv:.1e}"));
    }
    Ok(out)
}

fn determinism(id: u8) -> Result<CriterionResult> {
    let mut out = CriterionResult::new(id, name_of(id));
    let mut c = cfg("const-corr:m=4,r=0.8,dist=uniform", 300, 100, 100, 5, Some(1));
    c.projections = vec![(2, 2), (2, 3)];
    let run = |threads: usize| -> Result<String> {
        let mut c = c.clone();
        c.threads = Some(threads);
        let (a, b) = run_spike_clt(&c)?;
        let k = run_k_diagnostic(&c)?;
        Ok(serde_json::to_string(&(a, b, k)).expect("report serialises"))
    };
    let first = run(1)?;
    out.require(first == run(1)?, "repeat run differs");
    out.require(first == run(4)?, "4-worker run differs from 1-worker run");
    Ok(out)
}

/// Runs one criterion; criteria 4 and 6 share a simulation, so asking for
/// either runs both.
pub fn run_criteria(ids: &[u8], scale: Scale, threads: Option<usize>) -> Result<Vec<CriterionResult>> {
    let mut out = Vec::new();
    let mut clt: Option<(CriterionResult, CriterionResult)> = None;
    let seed = 20_240_601;
    for &id in ids {
        let r = match id {
            1 => analytic(id)?,
            2 => dual_pathway(id)?,
            3 => cumulant_mc(id, scale)?,
            4 | 6 => {
                if clt.is_none() {
                    clt = Some(eigen_clt(scale, seed, threads)?);
                }
                let (a, b) = clt.as_ref().expect("computed above");
                if id == 4 { a.clone() } else { b.clone() }
            }
            5 => nongaussian_clt(scale, seed + 5, threads)?,
            7 => subcritical(scale, seed + 7, threads)?,
            8 => k_diag(scale, seed + 8, threads)?,
            9 => concentration(id, scale)?,
            10 => determinism(id)?,
            other => return Err(invalid(format!("no criterion {other}"))),
        };
        out.push(r);
    }
    Ok(out)
}

pub fn run_suite(scale: Scale, threads: Option<usize>) -> Result<SuiteReport> {
    let ids: Vec<u8> = CRITERIA.iter().map(|c| c.0).collect();
    let criteria = run_criteria(&ids, scale, threads)?;
    let passed = criteria.iter().all(|c| c.passed);
    Ok(SuiteReport { schema_version: crate::SCHEMA_VERSION, suite: scale, criteria, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_criteria_pass() {
        for r in run_criteria(&[1, 2, 9], Scale::Smoke, None).unwrap() {
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn suite_names() {
        assert_eq!("smoke".parse::<Scale>().unwrap(), Scale::Smoke);
        assert!("nightly".parse::<Scale>().is_err());
        assert!(run_criteria(&[11], Scale::Smoke, None).is_err());
    }
}
