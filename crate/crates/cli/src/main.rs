//! `spikedcorr` command-line front end.
//!
//! Exit codes: 0 success (all verdicts pass), 1 verdict failure, 2 usage or
//! invalid configuration, 3 numerical or domain failure.

mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spikedcorr::asymptotics::{
    eigenvalue_prediction, eigenvector_prediction, variance_reduction_report, EigenvaluePrediction,
    EigenvectorPrediction, VarianceReduction,
};
use spikedcorr::cumulants::{kappa_tensor, kcheck_tensor, TensorJson};
use spikedcorr::laws::{classify_spike, default_critical_tol, subcritical_limits, SpikeClass};
use spikedcorr::montecarlo::{self as mc, ExperimentConfig, McReport, Table};
use spikedcorr::suite::{self, Scale, SuiteReport};
use spikedcorr::{Error, SCHEMA_VERSION};

use config::{CliConfig, Common, Format};
use output::Emit;

#[derive(Parser, Debug)]
#[command(name = "spikedcorr", version, about = "Spiked sample-correlation asymptotics and Monte Carlo checks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Asymptotic predictions for the requested spikes.
    Predict,
    /// One Monte Carlo experiment; the report is written whatever the verdict.
    Simulate(ExperimentArgs),
    /// A Monte Carlo experiment or bundled suite; exits 1 if any verdict fails.
    Verify {
        #[arg(long, global = true)]
        suite: Option<String>,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Data tables behind the figures.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
    },
    /// Dump the κ and κ̌ tensors of a model.
    Cumulants,
}

#[derive(clap::Args, Debug, Clone, Default)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value_t = Experiment::EigenvalueClt)]
    experiment: Experiment,
    /// Component pairs `k:l`, comma separated.
    #[arg(long, value_delimiter = ',')]
    projections: Vec<String>,
    /// Sample sizes for the subcritical sweep.
    #[arg(long, value_delimiter = ',')]
    n_grid: Vec<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Experiment {
    #[default]
    EigenvalueClt,
    EigenvectorClt,
    Subcritical,
    CovVsCorr,
    KDiagnostic,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Figure {
    Fig1a,
    Fig1b,
    Fig2a,
    Fig2b,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Fail {
    code: u8,
    message: String,
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Unsupported(_) => 2,
            Error::Domain(_) | Error::NumericalFailure { .. } | Error::DegenerateData { .. } => 3,
        };
        Fail { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Fail {
    Fail { code: 2, message: message.into() }
}

#[derive(Serialize)]
struct SpikeReport {
    nu: usize,
    ell: f64,
    class: SpikeClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    eigenvalue: Option<EigenvaluePrediction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eigenvector: Option<EigenvectorPrediction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance_reduction: Option<VarianceReduction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subcritical: Option<SubcriticalLimits>,
}

#[derive(Serialize)]
struct SubcriticalLimits {
    eigenvalue_limit: f64,
    projection_sq_limit: f64,
}

#[derive(Serialize)]
struct PredictReport {
    schema_version: u32,
    config: CliConfig,
    gamma: f64,
    gamma_n: f64,
    spikes: Vec<SpikeReport>,
}

#[derive(Serialize)]
struct CumulantReport {
    schema_version: u32,
    config: CliConfig,
    m: usize,
    kappa: TensorJson,
    kcheck: TensorJson,
}

#[derive(Serialize)]
struct FigureReport {
    schema_version: u32,
    figure: Figure,
    config: CliConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    experiment: Option<McReport>,
    tables: Vec<Table>,
}

fn predict(cfg: &CliConfig) -> Result<Emit, Fail> {
    let model = cfg.model_source()?.resolve(0)?.spiked;
    let (gamma, gamma_n) = cfg.gammas()?;
    let nus = if cfg.nu.is_empty() { vec![1] } else { cfg.nu.clone() };
    let mut spikes = Vec::new();
    for &nu in &nus {
        let ell = model.spike(nu)?;
        let class = classify_spike(ell, gamma, default_critical_tol(gamma))?;
        let mut rep = SpikeReport { nu, ell, class, eigenvalue: None, eigenvector: None, variance_reduction: None, subcritical: None };
        match class {
            SpikeClass::Critical => {
                return Err(Error::Domain(format!(
                    "spike {nu} (ℓ = {ell}) sits at the phase transition 1 + √γ = {}; no limit law applies",
                    1.0 + gamma.sqrt()
                ))
                .into())
            }
            SpikeClass::Subcritical => {
                let (e, p) = subcritical_limits(gamma)?;
                rep.subcritical = Some(SubcriticalLimits { eigenvalue_limit: e, projection_sq_limit: p });
            }
            SpikeClass::Supercritical => {
                rep.eigenvalue = Some(eigenvalue_prediction(&model, nu, gamma, gamma_n)?);
                rep.eigenvector = Some(eigenvector_prediction(&model, nu, gamma)?);
                rep.variance_reduction = variance_reduction_report(&model, nu, gamma).ok();
            }
        }
        spikes.push(rep);
    }
    let report = PredictReport { schema_version: SCHEMA_VERSION, config: cfg.clone(), gamma, gamma_n, spikes };
    let mut rows = Vec::new();
    for s in &report.spikes {
        let mut push = |k: &str, v: f64| rows.push(vec![s.nu.to_string(), k.to_string(), v.to_string()]);
        push("ell", s.ell);
        if let Some(e) = &s.eigenvalue {
            push("rho", e.rho);
            push("rho_n", e.rho_n);
            push("rho_dot", e.rho_dot);
            push("var_total", e.var_total);
            push("var_gaussian_cov", e.var_terms.gaussian_cov);
            push("var_nongaussian", e.var_terms.nongaussian);
            push("var_correlation", e.var_terms.correlation);
            push("var_total_n", e.var_total_n);
        }
        if let Some(v) = &s.eigenvector {
            push("proj_sq_limit", v.proj_sq_limit);
        }
        if let Some(l) = &s.subcritical {
            push("eigenvalue_limit", l.eigenvalue_limit);
            push("projection_sq_limit", l.projection_sq_limit);
        }
    }
    Emit::new(&report, vec!["nu".into(), "quantity".into(), "value".into()], rows)
}

fn experiment_config(cfg: &CliConfig, exp: &ExperimentArgs) -> Result<ExperimentConfig, Fail> {
    let (n, p) = cfg.dims()?;
    let mut e = ExperimentConfig::new(cfg.model_source()?, n, p, cfg.replicates.unwrap_or(1000), cfg.seed.unwrap_or(1));
    e.nu = match cfg.nu.as_slice() {
        [] => 1,
        [nu] => *nu,
        _ => return Err(usage("experiments take a single --nu")),
    };
    e.projections = exp.projections.iter().map(|s| config::parse_pair(s)).collect::<Result<_, _>>()?;
    e.n_grid = exp.n_grid.clone();
    e.threads = cfg.threads;
    Ok(e)
}

fn run_experiment(kind: Experiment, e: &ExperimentConfig) -> Result<McReport, Fail> {
    Ok(match kind {
        Experiment::EigenvalueClt => mc::run_eigenvalue_clt(e)?,
        Experiment::EigenvectorClt => mc::run_eigenvector_clt(e)?,
        Experiment::Subcritical => mc::run_subcritical(e)?,
        Experiment::CovVsCorr => mc::run_cov_vs_corr(e)?,
        Experiment::KDiagnostic => mc::run_k_diagnostic(e)?,
    })
}

fn report_emit(rep: &McReport) -> Result<Emit, Fail> {
    Emit::new(rep, mc::CSV_HEADERS.iter().map(|s| s.to_string()).collect(), rep.csv_rows())
}

fn suite_emit(rep: &SuiteReport) -> Result<Emit, Fail> {
    let mut headers = vec!["criterion".to_string()];
    headers.extend(mc::CSV_HEADERS.iter().map(|s| s.to_string()));
    let mut rows = Vec::new();
    for c in &rep.criteria {
        if c.reports.is_empty() {
            let verdict = if c.passed { "pass" } else { "fail" };
            rows.push(vec![c.id.to_string(), String::new(), String::new(), String::new(), String::new(), c.name.clone(), String::new(), String::new(), String::new(), verdict.into()]);
        }
        for r in &c.reports {
            for row in r.csv_rows() {
                let mut full = vec![c.id.to_string()];
                full.extend(row);
                rows.push(full);
            }
        }
    }
    Emit::new(rep, headers, rows)
}

fn table_emit(fig: &FigureReport, table: &Table) -> Result<Emit, Fail> {
    let rows = table.rows.iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
    Emit::new(fig, table.headers.clone(), rows)
}

fn reproduce(cfg: &CliConfig, figure: Figure) -> Result<Emit, Fail> {
    let mut rep = FigureReport { schema_version: SCHEMA_VERSION, figure, config: cfg.clone(), experiment: None, tables: Vec::new() };
    match figure {
        Figure::Fig2a | Figure::Fig2b => {
            let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
            let t = mc::variance_curves(&[5, 10, 20], &[0.1, 0.5, 1.0], &grid, figure == Figure::Fig2b)?;
            rep.tables.push(t);
        }
        Figure::Fig1a | Figure::Fig1b => {
            let model = cfg.model.clone().unwrap_or_else(|| "ar1:block=10,r=0.95".into());
            let c = CliConfig { model: Some(model), n: Some(cfg.n.unwrap_or(200)), p: Some(cfg.p.unwrap_or(90)), gamma: cfg.gamma, ..cfg.clone() };
            let c = if c.gamma.is_some() && cfg.p.is_none() { CliConfig { p: None, ..c } } else { c };
            let mut e = experiment_config(&c, &ExperimentArgs::default())?;
            e.replicates = cfg.replicates.unwrap_or(2000);
            e.projections = vec![(2, 4)];
            let r = mc::run_cov_vs_corr(&e)?;
            let name = if figure == Figure::Fig1a { "largest_eigenvalue_histogram" } else { "projection_scatter" };
            rep.tables.extend(r.tables.iter().filter(|t| t.name == name).cloned());
            rep.experiment = Some(r);
        }
    }
    let table = rep.tables[0].clone();
    table_emit(&rep, &table)
}

fn cumulants(cfg: &CliConfig) -> Result<Emit, Fail> {
    let model = cfg.model_source()?.resolve(0)?.spiked;
    let (k, kc) = (kappa_tensor(&model)?, kcheck_tensor(&model)?);
    let m = model.m;
    let mut rows = Vec::new();
    for i in 0..m {
        for j in 0..m {
            for a in 0..m {
                for b in 0..m {
                    rows.push(vec![
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        (a + 1).to_string(),
                        (b + 1).to_string(),
                        k.get(i, j, a, b).to_string(),
                        kc.get(i, j, a, b).to_string(),
                    ]);
                }
            }
        }
    }
    let report = CumulantReport { schema_version: SCHEMA_VERSION, config: cfg.clone(), m, kappa: k.to_json(), kcheck: kc.to_json() };
    Emit::new(&report, ["i", "j", "k", "l", "kappa", "kcheck"].iter().map(|s| s.to_string()).collect(), rows)
}

fn run(cli: Cli) -> Result<bool, Fail> {
    let command = match &cli.command {
        Command::Predict => "predict",
        Command::Simulate(_) => "simulate",
        Command::Verify { .. } => "verify",
        Command::Reproduce { .. } => "reproduce",
        Command::Cumulants => "cumulants",
    };
    let cfg = CliConfig::resolve(command, &cli.common)?;
    let format = cfg.format.unwrap_or(Format::Json);
    let (emit, passed) = match &cli.command {
        Command::Predict => (predict(&cfg)?, true),
        Command::Cumulants => (cumulants(&cfg)?, true),
        Command::Reproduce { figure } => (reproduce(&cfg, *figure)?, true),
        Command::Simulate(exp) => {
            let rep = run_experiment(exp.experiment, &experiment_config(&cfg, exp)?)?;
            (report_emit(&rep)?, true)
        }
        Command::Verify { suite: Some(name), .. } => {
            let scale: Scale = name.parse()?;
            let rep = suite::run_suite(scale, cfg.threads)?;
            for c in &rep.criteria {
                eprintln!("{}", c.line());
            }
            (suite_emit(&rep)?, rep.passed)
        }
        Command::Verify { suite: None, exp } => {
            let rep = run_experiment(exp.experiment, &experiment_config(&cfg, exp)?)?;
            for c in &rep.checks {
                eprintln!("{:<32} theory {:>12.6} empirical {:>12.6} se {:>10.6} {}", c.stat, c.theory, c.empirical, c.se, c.verdict.as_str());
            }
            let ok = rep.passed;
            (report_emit(&rep)?, ok)
        }
    };
    emit.write(format, cfg.output.as_deref())?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
