use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use spikedcorr::model::{InnovationFamily, ModelJson, ModelSpec};
use spikedcorr::montecarlo::ModelSource;

use crate::{usage, Fail};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Flags shared by every command.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Model string (e.g. `const-corr:m=10,r=0.9`) or path to a model JSON file.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Noise dimension.
    #[arg(long, global = true)]
    pub p: Option<usize>,
    /// 1-based spike indices, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub nu: Vec<usize>,
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON file with default values for any of these flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker cap; results do not depend on it.
    #[arg(long, global = true, env = "SPIKEDCORR_THREADS")]
    pub threads: Option<usize>,
}

/// Fully resolved settings, echoed into every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Parsed model, so that reports are self-contained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved_model: Option<ModelSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub nu: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip)]
    pub threads: Option<usize>,
}

#[derive(Deserialize)]
struct ExplicitFile {
    model: ModelJson,
    #[serde(default)]
    noise: Option<InnovationFamily>,
}

fn read_model_file(path: &Path) -> Result<ModelSource, Fail> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(f) = serde_json::from_str::<ExplicitFile>(&text) {
        return Ok(ModelSource::Explicit { model: f.model, noise: f.noise.unwrap_or(InnovationFamily::GaussianInnovation) });
    }
    let model: ModelJson =
        serde_json::from_str(&text).map_err(|e| usage(format!("{} is not a model file: {e}", path.display())))?;
    Ok(ModelSource::Explicit { model, noise: InnovationFamily::GaussianInnovation })
}

pub fn parse_pair(s: &str) -> Result<(usize, usize), Fail> {
    let (a, b) = s.split_once(':').ok_or_else(|| usage(format!("projection pair `{s}` should look like k:l")))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| usage(format!("bad index in `{s}`")));
    Ok((parse(a)?, parse(b)?))
}

impl CliConfig {
    /// Flags first, then the `--config` file.
    pub fn resolve(command: &str, flags: &Common) -> Result<Self, Fail> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str::<CliConfig>(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))?
            }
            None => CliConfig::default(),
        };
        let mut cfg = CliConfig {
            command: Some(command.into()),
            model: flags.model.clone().or(file.model),
            resolved_model: None,
            gamma: flags.gamma.or(file.gamma),
            n: flags.n.or(file.n),
            p: flags.p.or(file.p),
            nu: if flags.nu.is_empty() { file.nu } else { flags.nu.clone() },
            replicates: flags.replicates.or(file.replicates),
            seed: flags.seed.or(file.seed),
            output: flags.output.clone().or(file.output),
            format: flags.format.or(file.format),
            threads: flags.threads,
        };
        if cfg.gamma.is_some() && cfg.p.is_some() {
            return Err(usage("give either --gamma or --p, not both"));
        }
        if let Some(g) = cfg.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(usage(format!("--gamma must be positive, got {g}")));
            }
        }
        if cfg.nu.contains(&0) {
            return Err(usage("--nu is 1-based"));
        }
        if cfg.threads == Some(0) {
            return Err(usage("--threads must be at least 1"));
        }
        if let Some(m) = &cfg.model {
            cfg.resolved_model = Some(Self::source_of(m)?);
        }
        Ok(cfg)
    }

    fn source_of(m: &str) -> Result<ModelSource, Fail> {
        let path = Path::new(m);
        if path.is_file() {
            return read_model_file(path);
        }
        let spec: ModelSpec = m.parse()?;
        spec.build()?;
        Ok(ModelSource::Named(m.to_string()))
    }

    pub fn model_source(&self) -> Result<ModelSource, Fail> {
        match (&self.resolved_model, &self.model) {
            (Some(s), _) => Ok(s.clone()),
            (None, Some(m)) => Self::source_of(m),
            (None, None) => Err(usage("--model is required")),
        }
    }

    /// `(n, p)` from `--n` with either `--p` or `--gamma`.
    pub fn dims(&self) -> Result<(usize, usize), Fail> {
        let n = self.n.ok_or_else(|| usage("--n is required"))?;
        let p = match (self.p, self.gamma) {
            (Some(p), None) => p,
            (None, Some(g)) => (g * n as f64).round() as usize,
            _ => return Err(usage("give exactly one of --p or --gamma together with --n")),
        };
        if p == 0 {
            return Err(usage("noise dimension p must be positive"));
        }
        Ok((n, p))
    }

    /// Limiting and finite-sample aspect ratios for predictions.
    pub fn gammas(&self) -> Result<(f64, f64), Fail> {
        match (self.gamma, self.p, self.n) {
            (Some(g), None, None) => Ok((g, g)),
            (Some(g), None, Some(n)) => {
                let p = (g * n as f64).round();
                Ok((g, p / n as f64))
            }
            (None, Some(p), Some(n)) => {
                let g = p as f64 / n as f64;
                Ok((g, g))
            }
            _ => Err(usage("give --gamma (optionally with --n) or --p with --n")),
        }
    }
}
