//! Replicate experiments compared against the asymptotic predictions.
//!
//! Replicates run in parallel, each on its own random stream, and are
//! aggregated in replicate order, so reports do not depend on the worker count.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    check_spike, eigenvalue_prediction_with, eigenvector_prediction_with, pair_index, wmatrix_covariance,
    ModelTensors,
};
use crate::error::{invalid, Error, Result};
use crate::laws::{critical_spike, rho};
use crate::linalg::sym_eigen_desc;
use crate::model::{FullModel, InnovationFamily, ModelJson, ModelSpec, SpikedModel};
use crate::sampling::{
    correlation_from_covariance, extract_spikes, generate, k_matrix, sample_covariance, MatrixKind, RngSpec,
    SpikeEstimate,
};
use crate::stats::{self, KsResult};

/// Minimum replicate count for CLT targets.
pub const MIN_CLT_REPLICATES: usize = 100;
pub const DEFAULT_K_SE: f64 = 4.0;

/// CSV columns emitted for every check.
pub const CSV_HEADERS: [&str; 9] = ["r", "gamma", "m", "n", "stat", "theory", "empirical", "se", "verdict"];

/// Where the signal model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    /// Compact model string, e.g. `const-corr:m=10,r=0.9`.
    Named(String),
    Explicit {
        model: ModelJson,
        #[serde(default = "gaussian_noise")]
        noise: InnovationFamily,
    },
}

fn gaussian_noise() -> InnovationFamily {
    InnovationFamily::GaussianInnovation
}

impl ModelSource {
    pub fn resolve(&self, p: usize) -> Result<FullModel> {
        match self {
            Self::Named(s) => s.parse::<ModelSpec>()?.full(p),
            Self::Explicit { model, noise } => FullModel::new(SpikedModel::from_json(model)?, p).with_noise(*noise),
        }
    }

    /// Correlation parameter of named one-parameter families.
    pub fn r(&self) -> Option<f64> {
        match self {
            Self::Named(s) => s.parse::<ModelSpec>().ok().and_then(|m| m.r()),
            Self::Explicit { .. } => None,
        }
    }
}

impl From<ModelSpec> for ModelSource {
    fn from(s: ModelSpec) -> Self {
        Self::Named(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub n: usize,
    pub p: usize,
    pub replicates: usize,
    pub seed: u64,
    /// 1-based spike index.
    pub nu: usize,
    /// 1-based component pairs `(k, l)` whose covariance is checked.
    #[serde(default)]
    pub projections: Vec<(usize, usize)>,
    /// Verdict threshold in standard errors.
    #[serde(default = "default_k_se")]
    pub k_se: f64,
    /// Relative bound for variance checks; standard errors are used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_rel_tol: Option<f64>,
    /// Upper bound for the correlation/covariance variance ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_below: Option<f64>,
    /// Limiting aspect ratio for a deliberately mis-centred comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_limit: Option<f64>,
    /// Sample sizes for the subcritical sweep (`p/n` held fixed).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_grid: Vec<usize>,
    /// Worker cap; never affects results and is not serialised.
    #[serde(skip)]
    pub threads: Option<usize>,
}

fn default_k_se() -> f64 {
    DEFAULT_K_SE
}

impl ExperimentConfig {
    pub fn new(model: impl Into<ModelSource>, n: usize, p: usize, replicates: usize, seed: u64) -> Self {
        Self {
            model: model.into(),
            n,
            p,
            replicates,
            seed,
            nu: 1,
            projections: Vec::new(),
            k_se: DEFAULT_K_SE,
            var_rel_tol: None,
            ratio_below: None,
            gamma_limit: None,
            n_grid: Vec::new(),
            threads: None,
        }
    }

    pub fn gamma_n(&self) -> f64 {
        self.p as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    /// `|empirical − theory| ≤ k·se`.
    WithinSe { k: f64 },
    /// `|empirical − theory| ≤ bound·|theory|`.
    Relative { bound: f64 },
    /// `empirical ≤ bound`.
    Below { bound: f64 },
    /// Same sign as theory and `|empirical| > k·se`.
    SameSignDetected { k: f64 },
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Info,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub stat: String,
    pub theory: f64,
    pub empirical: f64,
    pub se: f64,
    pub rel_error: Option<f64>,
    pub rule: Rule,
    pub verdict: Verdict,
}

impl Check {
    pub fn new(stat: impl Into<String>, theory: f64, empirical: f64, se: f64, rule: Rule) -> Self {
        let diff = (empirical - theory).abs();
        let ok = match rule {
            Rule::WithinSe { k } => diff <= k * se,
            Rule::Relative { bound } => diff <= bound * theory.abs(),
            Rule::Below { bound } => empirical <= bound,
            Rule::SameSignDetected { k } => theory != 0.0 && empirical.signum() == theory.signum() && empirical.abs() > k * se,
            Rule::Info => true,
        };
        let verdict = match (rule, ok) {
            (Rule::Info, _) => Verdict::Info,
            (_, true) => Verdict::Pass,
            (_, false) => Verdict::Fail,
        };
        let rel_error = (theory != 0.0).then(|| diff / theory.abs());
        Self { stat: stat.into(), theory, empirical, se, rel_error, rule, verdict }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Self { name: name.into(), headers: headers.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedKs {
    pub stat: String,
    #[serde(flatten)]
    pub ks: KsResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    EigenvalueClt,
    EigenvectorClt,
    Subcritical,
    CovVsCorr,
    KDiagnostic,
    KConvergence,
}

/// Wall-clock information, kept out of the serialised report so that
/// reports are byte-identical across runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeMeta {
    pub elapsed_secs: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub m: usize,
    pub gamma_n: f64,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normality: Vec<NamedKs>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tables: Vec<Table>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub passed: bool,
    #[serde(skip)]
    pub runtime: RuntimeMeta,
}

impl McReport {
    fn new(kind: ExperimentKind, cfg: &ExperimentConfig, m: usize) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            experiment: kind,
            config: cfg.clone(),
            m,
            gamma_n: cfg.gamma_n(),
            checks: Vec::new(),
            normality: Vec::new(),
            tables: Vec::new(),
            notes: Vec::new(),
            passed: true,
            runtime: RuntimeMeta::default(),
        }
    }

    fn finish(mut self, started: Instant, threads: usize) -> Self {
        self.passed = self.checks.iter().all(|c| c.verdict != Verdict::Fail);
        self.runtime = RuntimeMeta { elapsed_secs: started.elapsed().as_secs_f64(), threads };
        self
    }

    pub fn check(&self, stat: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.stat == stat)
    }

    /// One row per check, in [`CSV_HEADERS`] order.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let r = self.config.model.r().map(|v| v.to_string()).unwrap_or_default();
        self.checks
            .iter()
            .map(|c| {
                vec![
                    r.clone(),
                    self.gamma_n.to_string(),
                    self.m.to_string(),
                    self.config.n.to_string(),
                    c.stat.clone(),
                    c.theory.to_string(),
                    c.empirical.to_string(),
                    c.se.to_string(),
                    c.verdict.as_str().to_string(),
                ]
            })
            .collect()
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t.max(1));
    }
    b.build().map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

/// Runs `f` for replicates `0..reps` and returns results in replicate order.
fn run_replicates<T, F>(threads: Option<usize>, reps: usize, f: F) -> Result<(Vec<T>, usize)>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = pool(threads)?;
    let workers = pool.current_num_threads();
    let out = pool.install(|| (0..reps as u64).into_par_iter().map(&f).collect::<Result<Vec<T>>>())?;
    Ok((out, workers))
}

fn precondition(e: Error) -> Error {
    match e {
        Error::Domain(msg) => invalid(format!("experiment precondition violated: {msg}")),
        other => other,
    }
}

fn require_clt(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.replicates < MIN_CLT_REPLICATES {
        return Err(invalid(format!("CLT targets need at least {MIN_CLT_REPLICATES} replicates, got {}", cfg.replicates)));
    }
    Ok(())
}

fn unit_variances(model: &SpikedModel) -> bool {
    model.sigma_sq.iter().all(|&v| (v - 1.0).abs() < 1e-12)
}

/// Per-replicate spike estimates from `R` and optionally `S`.
#[derive(Debug, Clone)]
struct SpikeDraw {
    corr: SpikeEstimate,
    cov: Option<SpikeEstimate>,
}

fn interlacing_check(r: &DMatrix<f64>, m: usize, ell_hat_1: f64) -> Result<()> {
    let r11 = r.view((0, 0), (m, m)).into_owned();
    let top = sym_eigen_desc(&r11)?.values[0];
    if top > ell_hat_1 * (1.0 + 1e-10) {
        return Err(Error::NumericalFailure {
            message: format!("interlacing violated: λ₁(R₁₁) = {top} exceeds ℓ̂₁ = {ell_hat_1}"),
            residual: top - ell_hat_1,
        });
    }
    Ok(())
}

fn draw_spikes(model: &FullModel, n: usize, rng: &RngSpec, rep: u64, nu: usize, with_cov: bool) -> Result<SpikeDraw> {
    let x = generate(model, n, rng, rep)?;
    let s = sample_covariance(&x);
    let r = correlation_from_covariance(&s)?;
    let corr_spec = extract_spikes(&r, MatrixKind::Correlation, model, &[nu])?;
    interlacing_check(&r, model.spiked.m, corr_spec.eigenvalues[0])?;
    let corr = corr_spec.spikes.into_iter().next().expect("one spike requested");
    let cov = if with_cov {
        Some(extract_spikes(&s, MatrixKind::Covariance, model, &[nu])?.spikes.into_iter().next().expect("one spike"))
    } else {
        None
    };
    Ok(SpikeDraw { corr, cov })
}

struct SpikeSimulation {
    model: FullModel,
    tensors: ModelTensors,
    draws: Vec<SpikeDraw>,
    workers: usize,
    with_cov: bool,
}

fn simulate_spikes(cfg: &ExperimentConfig, want_cov: bool) -> Result<SpikeSimulation> {
    require_clt(cfg)?;
    let model = cfg.model.resolve(cfg.p)?;
    let g = cfg.gamma_n();
    check_spike(&model.spiked, cfg.nu, g).map_err(precondition)?;
    let tensors = ModelTensors::new(&model.spiked)?;
    let with_cov = want_cov && unit_variances(&model.spiked);
    let rng = RngSpec::new(cfg.seed);
    let (draws, workers) = run_replicates(cfg.threads, cfg.replicates, |rep| draw_spikes(&model, cfg.n, &rng, rep, cfg.nu, with_cov))?;
    Ok(SpikeSimulation { model, tensors, draws, workers, with_cov })
}

fn variance_rule(cfg: &ExperimentConfig) -> Rule {
    match cfg.var_rel_tol {
        Some(bound) => Rule::Relative { bound },
        None => Rule::WithinSe { k: cfg.k_se },
    }
}

fn eigenvalue_report(cfg: &ExperimentConfig, sim: &SpikeSimulation, started: Instant) -> Result<McReport> {
    let spiked = &sim.model.spiked;
    let g = cfg.gamma_n();
    let pred = eigenvalue_prediction_with(spiked, &sim.tensors, cfg.nu, g, g)?;
    let mut rep = McReport::new(ExperimentKind::EigenvalueClt, cfg, spiked.m);
    let sqn = (cfg.n as f64).sqrt();
    let s: Vec<f64> = sim.draws.iter().map(|d| sqn * (d.corr.ell_hat - pred.rho_n)).collect();
    let k = cfg.k_se;
    let var_corr = stats::variance(&s);
    rep.checks.push(Check::new("eigenvalue_mean_corr", 0.0, stats::mean(&s), stats::mean_se(&s), Rule::WithinSe { k }));
    rep.checks.push(Check::new("eigenvalue_var_corr", pred.var_total_n, var_corr, stats::variance_se(&s), variance_rule(cfg)));
    let sd = pred.var_total_n.sqrt();
    rep.normality.push(NamedKs { stat: "eigenvalue_corr".into(), ks: stats::ks_normal(&s.iter().map(|v| v / sd).collect::<Vec<_>>()) });
    rep.notes.extend(pred.warnings.iter().cloned());

    if let Some(gl) = cfg.gamma_limit {
        let rho_lim = rho(pred.ell, gl).map_err(precondition)?;
        let shifted: Vec<f64> = sim.draws.iter().map(|d| sqn * (d.corr.ell_hat - rho_lim)).collect();
        let theory = sqn * (pred.rho_n - rho_lim);
        rep.checks.push(Check::new("eigenvalue_mean_limit_centered", theory, stats::mean(&shifted), stats::mean_se(&shifted), Rule::WithinSe { k }));
    }

    if sim.with_cov {
        let theory_cov = pred.var_terms_n.gaussian_cov + pred.var_terms_n.nongaussian;
        let c: Vec<f64> = sim.draws.iter().map(|d| sqn * (d.cov.as_ref().expect("covariance pathway").ell_hat - pred.rho_n)).collect();
        let var_cov = stats::variance(&c);
        let se_cov = stats::variance_se(&c);
        rep.checks.push(Check::new("eigenvalue_mean_cov", 0.0, stats::mean(&c), stats::mean_se(&c), Rule::WithinSe { k }));
        rep.checks.push(Check::new("eigenvalue_var_cov", theory_cov, var_cov, se_cov, variance_rule(cfg)));
        let ratio = var_corr / var_cov;
        let ratio_se = ratio * ((stats::variance_se(&s) / var_corr).powi(2) + (se_cov / var_cov).powi(2)).sqrt();
        let rule = cfg.ratio_below.map_or(Rule::Info, |bound| Rule::Below { bound });
        rep.checks.push(Check::new("variance_ratio_corr_cov", pred.var_total_n / theory_cov, ratio, ratio_se, rule));
        rep.normality.push(NamedKs {
            stat: "eigenvalue_cov".into(),
            ks: stats::ks_normal(&c.iter().map(|v| v / theory_cov.sqrt()).collect::<Vec<_>>()),
        });
    } else if cfg.ratio_below.is_some() {
        rep.notes.push("covariance pathway skipped: model variances are not all one".into());
    }
    Ok(rep.finish(started, sim.workers))
}

fn eigenvector_report(cfg: &ExperimentConfig, sim: &SpikeSimulation, started: Instant) -> Result<McReport> {
    let spiked = &sim.model.spiked;
    let m = spiked.m;
    let g = cfg.gamma_n();
    let pred = eigenvector_prediction_with(spiked, &sim.tensors, cfg.nu, g)?;
    let mut rep = McReport::new(ExperimentKind::EigenvectorClt, cfg, m);
    let sqn = (cfg.n as f64).sqrt();
    let c = cfg.nu - 1;
    let v: Vec<DVector<f64>> = sim
        .draws
        .iter()
        .map(|d| {
            let mut x = d.corr.proj_vec.clone();
            x[c] -= 1.0;
            x * sqn
        })
        .collect();
    let comp = |k: usize| v.iter().map(|x| x[k]).collect::<Vec<f64>>();
    let k = cfg.k_se;
    for &(a, b) in &cfg.projections {
        if a == 0 || b == 0 || a > m || b > m {
            return Err(invalid(format!("projection pair ({a},{b}) outside 1..={m}")));
        }
        let (xa, xb) = (comp(a - 1), comp(b - 1));
        let theory = pred.sigma_nu[(a - 1, b - 1)];
        let emp = stats::covariance(&xa, &xb);
        let se = stats::covariance_se(&xa, &xb);
        rep.checks.push(Check::new(format!("eigvec_cov_{a}_{b}"), theory, emp, se, Rule::WithinSe { k }));
        // Entries that vanish by symmetry carry rounding noise only.
        let scale = (pred.sigma_nu[(a - 1, a - 1)] * pred.sigma_nu[(b - 1, b - 1)]).abs().sqrt();
        if a != b && theory.abs() > 1e-8 * scale {
            rep.checks.push(Check::new(format!("eigvec_cov_{a}_{b}_sign"), theory, emp, se, Rule::SameSignDetected { k }));
        }
    }
    let own = comp(c);
    rep.checks.push(Check::new(format!("eigvec_var_{}", cfg.nu), 0.0, stats::variance(&own), stats::variance_se(&own), Rule::Below { bound: 0.01 }));
    let proj2: Vec<f64> = sim.draws.iter().map(|d| d.corr.proj * d.corr.proj).collect();
    rep.checks.push(Check::new("projection_sq_mean", pred.proj_sq_limit, stats::mean(&proj2), stats::mean_se(&proj2), Rule::Relative { bound: 0.01 }));
    rep.notes.extend(pred.warnings.iter().cloned());

    let mut scatter = Table::new("eigvec_scatter", &["replicate", "pathway", "k", "l", "v_k", "v_l"]);
    for &(a, b) in cfg.projections.iter().filter(|(a, b)| a != b) {
        for (i, d) in sim.draws.iter().enumerate() {
            scatter.rows.push(vec![i as f64, 0.0, a as f64, b as f64, v[i][a - 1], v[i][b - 1]]);
            if let Some(cov) = &d.cov {
                let mut w = cov.proj_vec.clone();
                w[c] -= 1.0;
                scatter.rows.push(vec![i as f64, 1.0, a as f64, b as f64, sqn * w[a - 1], sqn * w[b - 1]]);
            }
        }
    }
    if !scatter.rows.is_empty() {
        rep.tables.push(scatter);
    }
    Ok(rep.finish(started, sim.workers))
}

/// Fluctuations of `√n(ℓ̂_ν − ρ_νn)` against `σ̃²_νn`, for the correlation
/// matrix and (when the model has unit variances) the covariance matrix.
pub fn run_eigenvalue_clt(cfg: &ExperimentConfig) -> Result<McReport> {
    let started = Instant::now();
    let sim = simulate_spikes(cfg, true)?;
    eigenvalue_report(cfg, &sim, started)
}

/// Covariances of `√n(Pᵀa_ν − e_ν)` against `Σ_ν`, and the squared
/// projection against `ρ̇ℓ/ρ`.
pub fn run_eigenvector_clt(cfg: &ExperimentConfig) -> Result<McReport> {
    let started = Instant::now();
    let sim = simulate_spikes(cfg, false)?;
    eigenvector_report(cfg, &sim, started)
}

/// Eigenvalue and eigenvector reports from one shared set of replicates.
pub fn run_spike_clt(cfg: &ExperimentConfig) -> Result<(McReport, McReport)> {
    let started = Instant::now();
    let sim = simulate_spikes(cfg, true)?;
    Ok((eigenvalue_report(cfg, &sim, started)?, eigenvector_report(cfg, &sim, started)?))
}

/// Subcritical spike: `ℓ̂_ν` approaches the bulk edge and the projection
/// vanishes along `cfg.n_grid` at fixed `p/n`.
pub fn run_subcritical(cfg: &ExperimentConfig) -> Result<McReport> {
    let started = Instant::now();
    let gamma = cfg.gamma_n();
    let base = cfg.model.resolve(0)?;
    let ell = base.spiked.spike(cfg.nu)?;
    if ell > critical_spike(gamma) {
        return Err(invalid(format!("spike {} (ℓ = {ell}) is supercritical at γ = {gamma}", cfg.nu)));
    }
    let grid = if cfg.n_grid.is_empty() { vec![cfg.n] } else { cfg.n_grid.clone() };
    let mut rep = McReport::new(ExperimentKind::Subcritical, cfg, base.spiked.m);
    let mut table = Table::new("subcritical", &["n", "p", "gamma_n", "edge", "mean_ell_hat", "se_ell_hat", "mean_proj_sq", "se_proj_sq"]);
    let mut workers = 1;
    let mut gaps = Vec::new();
    for (gi, &n) in grid.iter().enumerate() {
        let p = (gamma * n as f64).round() as usize;
        let model = cfg.model.resolve(p)?;
        let gn = p as f64 / n as f64;
        let edge = critical_spike(gn).powi(2);
        let rng = RngSpec::new(cfg.seed.wrapping_add(gi as u64));
        let (draws, w) = run_replicates(cfg.threads, cfg.replicates, |r| draw_spikes(&model, n, &rng, r, cfg.nu, false))?;
        workers = w;
        let ell_hat: Vec<f64> = draws.iter().map(|d| d.corr.ell_hat).collect();
        let proj2: Vec<f64> = draws.iter().map(|d| d.corr.proj * d.corr.proj).collect();
        let (me, mp) = (stats::mean(&ell_hat), stats::mean(&proj2));
        let (se_e, se_p) = if draws.len() > 1 { (stats::mean_se(&ell_hat), stats::mean_se(&proj2)) } else { (f64::NAN, f64::NAN) };
        table.rows.push(vec![n as f64, p as f64, gn, edge, me, se_e, mp, se_p]);
        gaps.push((me - edge).abs());
        if gi + 1 == grid.len() {
            rep.checks.push(Check::new("edge_gap_at_max_n", 0.0, (me - edge).abs(), se_e, Rule::Below { bound: 0.15 }));
            rep.checks.push(Check::new("projection_sq_at_max_n", 0.0, mp, se_p, Rule::Below { bound: 0.08 }));
            rep.checks.push(Check::new("eigenvalue_at_max_n", edge, me, se_e, Rule::Info));
        }
    }
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    rep.notes.push(format!("edge gap monotone along the n grid: {monotone}"));
    rep.tables.push(table);
    Ok(rep.finish(started, workers))
}

/// Largest spike from `S` and `R` side by side: histograms, projection
/// scatter data and the variance ratio.
pub fn run_cov_vs_corr(cfg: &ExperimentConfig) -> Result<McReport> {
    let started = Instant::now();
    let model = cfg.model.resolve(cfg.p)?;
    if !unit_variances(&model.spiked) {
        return Err(invalid("covariance/correlation comparison needs a model with unit variances"));
    }
    let g = cfg.gamma_n();
    check_spike(&model.spiked, cfg.nu, g).map_err(precondition)?;
    require_clt(cfg)?;
    let rng = RngSpec::new(cfg.seed);
    let (draws, workers) = run_replicates(cfg.threads, cfg.replicates, |r| draw_spikes(&model, cfg.n, &rng, r, cfg.nu, true))?;
    let tensors = ModelTensors::new(&model.spiked)?;
    let pred = eigenvalue_prediction_with(&model.spiked, &tensors, cfg.nu, g, g)?;
    let mut rep = McReport::new(ExperimentKind::CovVsCorr, cfg, model.spiked.m);
    let corr: Vec<f64> = draws.iter().map(|d| d.corr.ell_hat).collect();
    let cov: Vec<f64> = draws.iter().map(|d| d.cov.as_ref().expect("covariance pathway").ell_hat).collect();
    let lo = corr.iter().chain(&cov).cloned().fold(f64::INFINITY, f64::min);
    let hi = corr.iter().chain(&cov).cloned().fold(f64::NEG_INFINITY, f64::max);
    let bins = 40;
    let (edges, hc) = stats::histogram(&corr, lo, hi, bins);
    let (_, hs) = stats::histogram(&cov, lo, hi, bins);
    let mut hist = Table::new("largest_eigenvalue_histogram", &["bin_lo", "bin_hi", "count_cov", "count_corr"]);
    for b in 0..bins {
        hist.rows.push(vec![edges[b], edges[b + 1], hs[b] as f64, hc[b] as f64]);
    }
    rep.tables.push(hist);

    let m = model.spiked.m;
    let mut scatter = Table::new("projection_scatter", &["replicate", "k", "l", "cov_k", "cov_l", "corr_k", "corr_l"]);
    for &(a, b) in &cfg.projections {
        if a == 0 || b == 0 || a > m || b > m {
            return Err(invalid(format!("projection pair ({a},{b}) outside 1..={m}")));
        }
        for (i, d) in draws.iter().enumerate() {
            let c = d.cov.as_ref().expect("covariance pathway");
            scatter.rows.push(vec![i as f64, a as f64, b as f64, c.proj_vec[a - 1], c.proj_vec[b - 1], d.corr.proj_vec[a - 1], d.corr.proj_vec[b - 1]]);
        }
    }
    if !scatter.rows.is_empty() {
        rep.tables.push(scatter);
    }

    let nf = cfg.n as f64;
    let (vc, vs) = (stats::variance(&corr) * nf, stats::variance(&cov) * nf);
    let (sc, ss) = (stats::variance_se(&corr) * nf, stats::variance_se(&cov) * nf);
    let ratio = vc / vs;
    let ratio_se = ratio * ((sc / vc).powi(2) + (ss / vs).powi(2)).sqrt();
    let theory_cov = pred.var_terms_n.gaussian_cov + pred.var_terms_n.nongaussian;
    rep.checks.push(Check::new("eigenvalue_var_corr", pred.var_total_n, vc, sc, Rule::Info));
    rep.checks.push(Check::new("eigenvalue_var_cov", theory_cov, vs, ss, Rule::Info));
    let rule = cfg.ratio_below.map_or(Rule::Info, |bound| Rule::Below { bound });
    rep.checks.push(Check::new("variance_ratio_corr_cov", pred.var_total_n / theory_cov, ratio, ratio_se, rule));
    rep.notes.push("figure reproduction is qualitative: shapes and the variance ratio".into());
    rep.notes.extend(pred.warnings.iter().cloned());
    Ok(rep.finish(started, workers))
}

/// `W_n(ρ_νn) = √n[K(ρ_νn) − n⁻¹tr B_n Γ]` entry covariances against the
/// limiting formula.
pub fn run_k_diagnostic(cfg: &ExperimentConfig) -> Result<McReport> {
    let started = Instant::now();
    require_clt(cfg)?;
    let model = cfg.model.resolve(cfg.p)?;
    let spiked = &model.spiked;
    let m = spiked.m;
    let g = cfg.gamma_n();
    let (ell, _) = check_spike(spiked, cfg.nu, g).map_err(precondition)?;
    let rho_n = rho(ell, g)?;
    let pairs = pair_index(m);
    let nf = cfg.n as f64;
    let rng = RngSpec::new(cfg.seed);
    let (ws, workers) = run_replicates(cfg.threads, cfg.replicates, |r| {
        let x = generate(&model, cfg.n, &rng, r)?;
        let km = k_matrix(&x, m, rho_n)?;
        let w = (km.k - &spiked.gamma * (km.trace_b / nf)) * nf.sqrt();
        Ok(pairs.iter().map(|&(i, j)| w[(i, j)]).collect::<Vec<f64>>())
    })?;
    let theory = wmatrix_covariance(spiked, cfg.nu, g)?;
    let mut rep = McReport::new(ExperimentKind::KDiagnostic, cfg, m);
    let col = |a: usize| ws.iter().map(|w| w[a]).collect::<Vec<f64>>();
    let k = cfg.k_se;
    let label = |a: usize| format!("{}{}", pairs[a].0 + 1, pairs[a].1 + 1);
    for a in 0..pairs.len() {
        let x = col(a);
        rep.checks.push(Check::new(format!("w_mean_{}", label(a)), 0.0, stats::mean(&x), stats::mean_se(&x), Rule::WithinSe { k }));
    }
    // All covariance entries for small m, the diagonal otherwise.
    for a in 0..pairs.len() {
        for b in a..pairs.len() {
            if m > 3 && a != b {
                continue;
            }
            let (x, y) = (col(a), col(b));
            rep.checks.push(Check::new(
                format!("w_cov_{}_{}", label(a), label(b)),
                theory.cov[(a, b)],
                stats::covariance(&x, &y),
                stats::covariance_se(&x, &y),
                Rule::WithinSe { k },
            ));
        }
    }
    Ok(rep.finish(started, workers))
}

/// `‖K(ρ_νn) − (ρ_ν/ℓ_ν)Γ‖₂` averaged over replicates, against `bound`.
pub fn run_k_convergence(cfg: &ExperimentConfig, bound: f64) -> Result<McReport> {
    let started = Instant::now();
    let model = cfg.model.resolve(cfg.p)?;
    let spiked = &model.spiked;
    let g = cfg.gamma_n();
    let (ell, _) = check_spike(spiked, cfg.nu, g).map_err(precondition)?;
    let rho_n = rho(ell, g)?;
    let target = &spiked.gamma * (rho_n / ell);
    let rng = RngSpec::new(cfg.seed);
    let (norms, workers) = run_replicates(cfg.threads, cfg.replicates.max(1), |r| {
        let x = generate(&model, cfg.n, &rng, r)?;
        let km = k_matrix(&x, spiked.m, rho_n)?;
        crate::linalg::sym_spectral_norm(&(km.k - &target))
    })?;
    let mut rep = McReport::new(ExperimentKind::KConvergence, cfg, spiked.m);
    let se = if norms.len() > 1 { stats::mean_se(&norms) } else { f64::NAN };
    rep.checks.push(Check::new("k_norm_error", 0.0, stats::mean(&norms), se, Rule::Below { bound }));
    Ok(rep.finish(started, workers))
}

/// Theory curves for the constant-correlation model: eigenvalue variances
/// (`fig2a`) or `Σ_{1,22}` (`fig2b`) over an `r` grid. Subcritical grid
/// points are omitted.
pub fn variance_curves(ms: &[usize], gammas: &[f64], r_grid: &[f64], eigenvector: bool) -> Result<Table> {
    use crate::asymptotics::constant_correlation as cc;
    let mut t = if eigenvector {
        Table::new("fig2b", &["r", "m", "gamma", "Sigma_cov_22", "Sigma_corr_22"])
    } else {
        Table::new("fig2a", &["r", "m", "gamma", "var_cov", "var_corr"])
    };
    for &m in ms {
        for &g in gammas {
            for &r in r_grid {
                let model = crate::model::constant_correlation_model(m, r)?;
                if check_spike(&model, 1, g).is_err() {
                    continue;
                }
                let row = if eigenvector {
                    let (corr, cov) = cc::sigma22(m, r, g)?;
                    vec![r, m as f64, g, cov, corr]
                } else {
                    let tens = ModelTensors::new(&model)?;
                    let p = eigenvalue_prediction_with(&model, &tens, 1, g, g)?;
                    vec![r, m as f64, g, p.var_terms.gaussian_cov, p.var_total]
                };
                t.rows.push(row);
            }
        }
    }
    Ok(t)
}
