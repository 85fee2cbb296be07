//! Population models: the signal covariance `Σ`, its correlation matrix `Γ`
//! with eigenstructure `Γ = P L Pᵀ`, and the distribution of the signal block.
//!
//! Spike indices `nu` are 1-based throughout the public API, so `nu = 1`
//! is the largest population eigenvalue.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{normalize_column_signs, sym_eigen_desc};

/// Largest signal dimension; tensors are stored densely with `m⁴` entries.
pub const MAX_SIGNAL_DIM: usize = 64;

/// Unit-variance, zero-mean innovation laws used to drive linear mixing
/// models and the noise block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationFamily {
    /// `±1` with equal probability.
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    Uniform,
    GaussianInnovation,
    /// Standardised Bernoulli(`p`): `(B - p)/√(p(1-p))`.
    TwoPointAsymmetric { p: f64 },
}

impl InnovationFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::TwoPointAsymmetric { p } if !(p > 0.0 && p < 1.0) => {
                Err(invalid(format!("two-point innovation needs p in (0,1), got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// Excess kurtosis `κ₄ = 𝔼z⁴ - 3`.
    pub fn excess_kurtosis(&self) -> f64 {
        match *self {
            Self::Rademacher => -2.0,
            Self::Uniform => -1.2,
            Self::GaussianInnovation => 0.0,
            Self::TwoPointAsymmetric { p } => (1.0 - 6.0 * p * (1.0 - p)) / (p * (1.0 - p)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Uniform => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            Self::GaussianInnovation => rng.sample(StandardNormal),
            Self::TwoPointAsymmetric { p } => {
                let b = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                (b - p) / (p * (1.0 - p)).sqrt()
            }
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Self::Rademacher => "rademacher".into(),
            Self::Uniform => "uniform".into(),
            Self::GaussianInnovation => "gaussian".into(),
            Self::TwoPointAsymmetric { p } => format!("two-point({p})"),
        }
    }
}

/// Law of the signal block `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    /// `ξ ~ N(0, Σ)`.
    Gaussian,
    /// `ξ = A z` with i.i.d. innovations `z`; `AAᵀ = Σ`. Without an explicit
    /// `mixing` matrix the lower Cholesky factor of `Σ` is used.
    LinearMixing {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mixing: Option<DMatrix<f64>>,
        family: InnovationFamily,
    },
}

impl DistributionSpec {
    pub fn linear_mixing(family: InnovationFamily) -> Self {
        Self::LinearMixing { mixing: None, family }
    }

    pub fn is_gaussian(&self) -> bool {
        match self {
            Self::Gaussian => true,
            Self::LinearMixing { family, .. } => *family == InnovationFamily::GaussianInnovation,
        }
    }

    /// Innovation excess kurtosis; zero for Gaussian data.
    pub fn excess_kurtosis(&self) -> f64 {
        match self {
            Self::Gaussian => 0.0,
            Self::LinearMixing { family, .. } => family.excess_kurtosis(),
        }
    }

    pub fn innovation(&self) -> InnovationFamily {
        match self {
            Self::Gaussian => InnovationFamily::GaussianInnovation,
            Self::LinearMixing { family, .. } => *family,
        }
    }
}

/// Signal-block model with its correlation eigenstructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedModel {
    pub m: usize,
    pub sigma: DMatrix<f64>,
    /// Diagonal variances `σᵢ²`.
    pub sigma_sq: Vec<f64>,
    /// Correlation matrix `Γ`, unit diagonal.
    pub gamma: DMatrix<f64>,
    /// Orthogonal eigenvectors of `Γ` as columns.
    pub p: DMatrix<f64>,
    /// Eigenvalues of `Γ`, descending.
    pub ell: Vec<f64>,
    pub dist: DistributionSpec,
    /// Matrix `A` used to draw `ξ = A z`.
    pub mixing: DMatrix<f64>,
    /// Set when `Σ` is rank deficient (allowed only with an explicit mixing matrix).
    pub singular: bool,
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn check_square(a: &DMatrix<f64>, what: &str) -> Result<usize> {
    let m = a.nrows();
    if m == 0 || a.ncols() != m {
        return Err(invalid(format!("{what} must be a non-empty square matrix, got {}x{}", m, a.ncols())));
    }
    if m > MAX_SIGNAL_DIM {
        return Err(invalid(format!("signal dimension {m} exceeds the supported maximum {MAX_SIGNAL_DIM}")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} has non-finite entries")));
    }
    Ok(m)
}

/// Builds a model from an SPD covariance `Σ`.
pub fn build_model(sigma: DMatrix<f64>, dist: DistributionSpec) -> Result<SpikedModel> {
    SpikedModel::from_parts(sigma, dist, false)
}

impl SpikedModel {
    fn from_parts(sigma: DMatrix<f64>, dist: DistributionSpec, allow_singular: bool) -> Result<Self> {
        let m = check_square(&sigma, "Σ")?;
        let scale = max_abs(&sigma);
        if (&sigma - sigma.transpose()).iter().any(|v| v.abs() > 1e-12 * scale) {
            return Err(invalid("Σ is not symmetric"));
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let sigma_sq: Vec<f64> = (0..m).map(|i| sigma[(i, i)]).collect();
        if let Some(i) = sigma_sq.iter().position(|&v| !(v > 0.0)) {
            return Err(invalid(format!("Σ has non-positive variance at coordinate {}", i + 1)));
        }

        let spectrum = sym_eigen_desc(&sigma)?;
        let norm = spectrum.values[0].abs().max(spectrum.values[m - 1].abs());
        let min_eig = spectrum.values[m - 1];
        let singular = !(min_eig > 1e-12 * norm);
        if singular && !allow_singular {
            return Err(invalid(format!(
                "Σ is not positive definite (smallest eigenvalue {min_eig:e}, norm {norm:e})"
            )));
        }
        if min_eig < -1e-10 * norm {
            return Err(invalid(format!("Σ has a negative eigenvalue {min_eig:e}")));
        }

        let mixing = match &dist {
            DistributionSpec::LinearMixing { mixing: Some(a), family } => {
                family.validate()?;
                check_mixing(a, &sigma)?;
                a.clone()
            }
            DistributionSpec::LinearMixing { mixing: None, family } => {
                family.validate()?;
                cholesky_factor(&sigma, singular)?
            }
            DistributionSpec::Gaussian => cholesky_factor(&sigma, singular)?,
        };

        let inv_sd: Vec<f64> = sigma_sq.iter().map(|v| 1.0 / v.sqrt()).collect();
        let mut gamma = DMatrix::from_fn(m, m, |i, j| sigma[(i, j)] * inv_sd[i] * inv_sd[j]);
        for i in 0..m {
            gamma[(i, i)] = 1.0;
        }
        let eig = sym_eigen_desc(&gamma)?;
        let mut p = eig.vectors;
        normalize_column_signs(&mut p);

        Ok(Self { m, sigma, sigma_sq, gamma, p, ell: eig.values, dist, mixing, singular })
    }

    /// Same covariance, different signal distribution.
    pub fn with_distribution(&self, dist: DistributionSpec) -> Result<Self> {
        let singular = self.singular;
        // A singular model keeps its rank-revealing mixing matrix.
        let dist = match dist {
            DistributionSpec::LinearMixing { mixing: None, family } if singular => {
                DistributionSpec::LinearMixing { mixing: Some(self.mixing.clone()), family }
            }
            DistributionSpec::Gaussian if singular => DistributionSpec::LinearMixing {
                mixing: Some(self.mixing.clone()),
                family: InnovationFamily::GaussianInnovation,
            },
            d => d,
        };
        Self::from_parts(self.sigma.clone(), dist, singular)
    }

    /// 0-based column for a 1-based spike index.
    pub fn spike_col(&self, nu: usize) -> Result<usize> {
        if nu == 0 || nu > self.m {
            return Err(invalid(format!("spike index {nu} outside 1..={}", self.m)));
        }
        Ok(nu - 1)
    }

    pub fn spike(&self, nu: usize) -> Result<f64> {
        Ok(self.ell[self.spike_col(nu)?])
    }

    /// Population eigenvector `p_ν`.
    pub fn eigenvector(&self, nu: usize) -> Result<DVector<f64>> {
        Ok(self.p.column(self.spike_col(nu)?).into_owned())
    }

    /// `ℓ_ν` is simple when it is separated from every other eigenvalue by
    /// more than `1e-8·ℓ₁`.
    pub fn is_simple(&self, nu: usize) -> Result<bool> {
        let c = self.spike_col(nu)?;
        let thresh = 1e-8 * self.ell[0].abs();
        Ok(self.ell.iter().enumerate().all(|(k, &l)| k == c || (l - self.ell[c]).abs() > thresh))
    }

    /// `ā`: mixing matrix with row `i` divided by `σᵢ`, so `ξ̄ = ā z`.
    pub fn scaled_mixing(&self) -> DMatrix<f64> {
        let mut a = self.mixing.clone();
        for (i, mut row) in a.row_iter_mut().enumerate() {
            row /= self.sigma_sq[i].sqrt();
        }
        a
    }

    /// One draw of `ξ`.
    pub fn sample_signal<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let family = self.dist.innovation();
        let cols = self.mixing.ncols();
        let mut z = [0.0f64; MAX_SIGNAL_DIM];
        for zk in z.iter_mut().take(cols) {
            *zk = family.sample(rng);
        }
        for (i, o) in out.iter_mut().enumerate().take(self.m) {
            let mut acc = 0.0;
            for (k, zk) in z.iter().enumerate().take(cols) {
                acc += self.mixing[(i, k)] * zk;
            }
            *o = acc;
        }
    }

    pub fn to_json(&self) -> ModelJson {
        let dist = match &self.dist {
            DistributionSpec::Gaussian => DistJson { kind: "gaussian".into(), kurtosis: Some(0.0), family: None },
            DistributionSpec::LinearMixing { family, .. } => DistJson {
                kind: "linear_mixing".into(),
                kurtosis: Some(family.excess_kurtosis()),
                family: Some(*family),
            },
        };
        let explicit_mixing = self.singular || matches!(self.dist, DistributionSpec::LinearMixing { mixing: Some(_), .. });
        ModelJson {
            m: self.m,
            sigma: row_major(&self.sigma),
            dist,
            mixing: explicit_mixing.then(|| row_major(&self.mixing)),
            singular: self.singular,
        }
    }

    pub fn from_json(spec: &ModelJson) -> Result<Self> {
        let m = spec.m;
        if m == 0 || spec.sigma.len() != m * m {
            return Err(invalid(format!("sigma must hold m² = {} values, got {}", m * m, spec.sigma.len())));
        }
        let sigma = DMatrix::from_row_slice(m, m, &spec.sigma);
        let mixing = match &spec.mixing {
            Some(v) if v.len() == m * m => Some(DMatrix::from_row_slice(m, m, v)),
            Some(v) => return Err(invalid(format!("mixing must hold m² = {} values, got {}", m * m, v.len()))),
            None => None,
        };
        if spec.singular && mixing.is_none() {
            return Err(invalid("a singular model needs an explicit mixing matrix"));
        }
        let dist = match spec.dist.kind.as_str() {
            "gaussian" => match mixing {
                None => DistributionSpec::Gaussian,
                Some(a) => DistributionSpec::LinearMixing { mixing: Some(a), family: InnovationFamily::GaussianInnovation },
            },
            "linear_mixing" => {
                let family = spec.dist.family.ok_or_else(|| invalid("linear_mixing needs an innovation family"))?;
                DistributionSpec::LinearMixing { mixing, family }
            }
            other => return Err(invalid(format!("unknown distribution kind '{other}'"))),
        };
        if let Some(k) = spec.dist.kurtosis {
            let implied = dist.excess_kurtosis();
            if (k - implied).abs() > 1e-12 * (1.0 + implied.abs()) {
                return Err(invalid(format!("kurtosis {k} contradicts the innovation family (κ₄ = {implied})")));
            }
        }
        Self::from_parts(sigma, dist, spec.singular)
    }
}

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    a.transpose().as_slice().to_vec()
}

fn check_mixing(a: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != sigma.nrows() || a.ncols() > MAX_SIGNAL_DIM {
        return Err(invalid(format!(
            "mixing matrix is {}x{}, expected {} rows",
            a.nrows(),
            a.ncols(),
            sigma.nrows()
        )));
    }
    let err = max_abs(&(a * a.transpose() - sigma));
    if err > 1e-10 * max_abs(sigma).max(1.0) {
        return Err(invalid(format!("mixing matrix inconsistent with Σ: ‖AAᵀ - Σ‖_max = {err:e}")));
    }
    Ok(())
}

fn cholesky_factor(sigma: &DMatrix<f64>, singular: bool) -> Result<DMatrix<f64>> {
    if singular {
        return Err(invalid("a singular Σ needs an explicit mixing matrix"));
    }
    sigma
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| invalid("Cholesky factorisation of Σ failed"))
}

/// JSON form of a model: row-major `sigma`, distribution tag, optional mixing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub m: usize,
    pub sigma: Vec<f64>,
    pub dist: DistJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<Vec<f64>>,
    #[serde(default)]
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistJson {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kurtosis: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<InnovationFamily>,
}

/// `Γ = (1-r)I + r·11ᵀ` with Gaussian data.
pub fn constant_correlation_model(m: usize, r: f64) -> Result<SpikedModel> {
    if m < 2 {
        return Err(invalid(format!("constant correlation needs m ≥ 2, got {m}")));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(invalid(format!("constant correlation needs r in [0,1), got {r}")));
    }
    let sigma = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { r });
    build_model(sigma, DistributionSpec::Gaussian)
}

/// Two groups of identical coordinates with correlation `-r` between groups:
/// `Γ = [[1, -r], [-r, 1]] ⊗ 11ᵀ`. `Γ` has rank 2; data are drawn through a
/// mixing matrix whose rows repeat within each group.
pub fn two_group_model(m: usize, r: f64) -> Result<SpikedModel> {
    if m < 2 || m % 2 != 0 {
        return Err(invalid(format!("two-group model needs an even m ≥ 2, got {m}")));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(invalid(format!("two-group model needs r in (0,1), got {r}")));
    }
    let h = m / 2;
    let group = |i: usize| usize::from(i >= h);
    let sigma = DMatrix::from_fn(m, m, |i, j| if group(i) == group(j) { 1.0 } else { -r });
    let c = (1.0 - r * r).sqrt();
    let mixing = DMatrix::from_fn(m, m, |i, k| match (group(i), k) {
        (0, 0) => 1.0,
        (1, 0) => -r,
        (1, 1) => c,
        _ => 0.0,
    });
    SpikedModel::from_parts(
        sigma,
        DistributionSpec::LinearMixing { mixing: Some(mixing), family: InnovationFamily::GaussianInnovation },
        true,
    )
}

/// AR(1) correlation `r^{|i-j|}` on the leading `block` coordinates, identity
/// on the remaining `total_m - block`.
pub fn ar1_block_model(block: usize, r: f64, total_m: usize) -> Result<SpikedModel> {
    if block == 0 || block > total_m {
        return Err(invalid(format!("block {block} must lie in 1..={total_m}")));
    }
    if !(r > -1.0 && r < 1.0) {
        return Err(invalid(format!("AR(1) coefficient must lie in (-1,1), got {r}")));
    }
    let sigma = DMatrix::from_fn(total_m, total_m, |i, j| {
        if i < block && j < block {
            r.powi((i as i32 - j as i32).abs())
        } else if i == j {
            1.0
        } else {
            0.0
        }
    });
    build_model(sigma, DistributionSpec::Gaussian)
}

/// Signal model plus noise dimension `p`; `Γ_x = blkdiag(Γ, I_p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullModel {
    pub spiked: SpikedModel,
    pub p: usize,
    /// Law of the i.i.d. noise coordinates `η`.
    pub noise: InnovationFamily,
}

impl FullModel {
    pub fn new(spiked: SpikedModel, p: usize) -> Self {
        Self { spiked, p, noise: InnovationFamily::GaussianInnovation }
    }

    pub fn with_noise(mut self, noise: InnovationFamily) -> Result<Self> {
        noise.validate()?;
        self.noise = noise;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.spiked.m + self.p
    }

    /// Population correlation `blkdiag(Γ, I_p)`.
    pub fn population_correlation(&self) -> DMatrix<f64> {
        let m = self.spiked.m;
        let mut g = DMatrix::identity(self.dim(), self.dim());
        g.view_mut((0, 0), (m, m)).copy_from(&self.spiked.gamma);
        g
    }

    /// Spike eigenvector `𝔭_ν = [p_νᵀ 0ᵀ]ᵀ`.
    pub fn spike_vector(&self, nu: usize) -> Result<DVector<f64>> {
        let p = self.spiked.eigenvector(nu)?;
        let mut v = DVector::zeros(self.dim());
        v.rows_mut(0, self.spiked.m).copy_from(&p);
        Ok(v)
    }
}

impl From<SpikedModel> for FullModel {
    fn from(spiked: SpikedModel) -> Self {
        Self::new(spiked, 0)
    }
}

/// Named model families addressable from a compact string such as
/// `const-corr:m=10,r=0.9,dist=rademacher`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelFamily {
    ConstCorr { m: usize, r: f64 },
    TwoGroup { m: usize, r: f64 },
    /// AR(1) block of size `block` inside an `m`-dimensional signal.
    Ar1 { block: usize, r: f64, m: usize },
    Identity { m: usize },
}

/// Parsed model string: family, signal innovations and noise law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    /// `None` for Gaussian signal data.
    pub innovations: Option<InnovationFamily>,
    pub noise: InnovationFamily,
}

fn parse_family_name(s: &str) -> Result<InnovationFamily> {
    match s {
        "gaussian" | "normal" => Ok(InnovationFamily::GaussianInnovation),
        "rademacher" => Ok(InnovationFamily::Rademacher),
        "uniform" => Ok(InnovationFamily::Uniform),
        _ => {
            let p = s
                .strip_prefix("two-point(")
                .and_then(|t| t.strip_suffix(')'))
                .ok_or_else(|| invalid(format!("unknown distribution '{s}'")))?;
            let p: f64 = p.parse().map_err(|_| invalid(format!("bad two-point probability '{p}'")))?;
            let f = InnovationFamily::TwoPointAsymmetric { p };
            f.validate()?;
            Ok(f)
        }
    }
}

impl ModelSpec {
    pub fn r(&self) -> Option<f64> {
        match self.family {
            ModelFamily::ConstCorr { r, .. } | ModelFamily::TwoGroup { r, .. } | ModelFamily::Ar1 { r, .. } => Some(r),
            ModelFamily::Identity { .. } => None,
        }
    }

    pub fn build(&self) -> Result<SpikedModel> {
        let base = match self.family {
            ModelFamily::ConstCorr { m, r } => constant_correlation_model(m, r)?,
            ModelFamily::TwoGroup { m, r } => two_group_model(m, r)?,
            ModelFamily::Ar1 { block, r, m } => ar1_block_model(block, r, m)?,
            ModelFamily::Identity { m } => build_model(DMatrix::identity(m, m), DistributionSpec::Gaussian)?,
        };
        match self.innovations {
            None => Ok(base),
            Some(f) => base.with_distribution(DistributionSpec::linear_mixing(f)),
        }
    }

    pub fn full(&self, p: usize) -> Result<FullModel> {
        FullModel::new(self.build()?, p).with_noise(self.noise)
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut kv: Vec<(&str, &str)> = Vec::new();
        for item in rest.split(',').filter(|t| !t.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| invalid(format!("expected key=value, got '{item}'")))?;
            if kv.iter().any(|(kk, _)| *kk == k) {
                return Err(invalid(format!("duplicate key '{k}'")));
            }
            kv.push((k.trim(), v.trim()));
        }
        let take = |kv: &mut Vec<(&str, &str)>, key: &str| -> Option<String> {
            kv.iter().position(|(k, _)| *k == key).map(|i| kv.remove(i).1.to_string())
        };
        let num = |v: Option<String>, key: &str| -> Result<f64> {
            let v = v.ok_or_else(|| invalid(format!("model '{name}' needs {key}=")))?;
            v.parse().map_err(|_| invalid(format!("{key}: cannot parse '{v}'")))
        };
        let int = |v: Option<String>, key: &str| -> Result<usize> {
            let v = v.ok_or_else(|| invalid(format!("model '{name}' needs {key}=")))?;
            v.parse().map_err(|_| invalid(format!("{key}: cannot parse '{v}'")))
        };
        let family = match name {
            "const-corr" => ModelFamily::ConstCorr { m: int(take(&mut kv, "m"), "m")?, r: num(take(&mut kv, "r"), "r")? },
            "two-group" => ModelFamily::TwoGroup { m: int(take(&mut kv, "m"), "m")?, r: num(take(&mut kv, "r"), "r")? },
            "ar1" => {
                let block = int(take(&mut kv, "block"), "block")?;
                let r = num(take(&mut kv, "r"), "r")?;
                let m = match take(&mut kv, "m") {
                    Some(v) => int(Some(v), "m")?,
                    None => block,
                };
                ModelFamily::Ar1 { block, r, m }
            }
            "identity" => ModelFamily::Identity { m: int(take(&mut kv, "m"), "m")? },
            other => return Err(invalid(format!("unknown model family '{other}'"))),
        };
        let innovations = match take(&mut kv, "dist") {
            None => None,
            Some(d) => match parse_family_name(&d)? {
                InnovationFamily::GaussianInnovation => None,
                f => Some(f),
            },
        };
        let noise = match take(&mut kv, "noise") {
            None => InnovationFamily::GaussianInnovation,
            Some(d) => parse_family_name(&d)?,
        };
        if let Some((k, _)) = kv.first() {
            return Err(invalid(format!("unknown key '{k}' for model '{name}'")));
        }
        Ok(Self { family, innovations, noise })
    }
}

fn family_label(f: &InnovationFamily) -> String {
    match f {
        InnovationFamily::TwoPointAsymmetric { p } => format!("two-point({p})"),
        other => other.name(),
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.family {
            ModelFamily::ConstCorr { m, r } => write!(f, "const-corr:m={m},r={r}")?,
            ModelFamily::TwoGroup { m, r } => write!(f, "two-group:m={m},r={r}")?,
            ModelFamily::Ar1 { block, r, m } => write!(f, "ar1:block={block},r={r},m={m}")?,
            ModelFamily::Identity { m } => write!(f, "identity:m={m}")?,
        }
        if let Some(d) = &self.innovations {
            write!(f, ",dist={}", family_label(d))?;
        }
        if self.noise != InnovationFamily::GaussianInnovation {
            write!(f, ",noise={}", family_label(&self.noise))?;
        }
        Ok(())
    }
}
