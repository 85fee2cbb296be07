//! Limits and CLT variances for spike eigenvalues and eigenvectors of the
//! sample correlation matrix, with Gaussian closed forms and the covariance of
//! the limiting `W` matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cumulants::{contract_all_kl, kappa_tensor, kcheck_tensor, Symmetry, Tensor4};
use crate::error::{domain, invalid, Error, Result};
use crate::laws::{critical_spike, rho, rho_dot};
use crate::model::SpikedModel;

pub use crate::laws::subcritical_limits;

/// Spikes closer than this to `1 + √γ` are refused.
pub const CRITICAL_REFUSE_GAP: f64 = 1e-6;
/// Spikes closer than this to `1 + √γ` produce a warning.
pub const CRITICAL_WARN_GAP: f64 = 0.05;

/// Checks that spike `nu` is simple and supercritical at `gamma`; returns
/// `ℓ_ν` and any near-critical warning.
pub fn check_spike(model: &SpikedModel, nu: usize, gamma: f64) -> Result<(f64, Option<String>)> {
    let ell = model.spike(nu)?;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid(format!("aspect ratio must be positive, got {gamma}")));
    }
    if !model.is_simple(nu)? {
        return Err(domain(format!("spike {nu} (ℓ = {ell}) is not a simple eigenvalue of Γ")));
    }
    let crit = critical_spike(gamma);
    if ell < crit + CRITICAL_REFUSE_GAP {
        return Err(domain(format!(
            "spike {nu} (ℓ = {ell}) is not supercritical at γ = {gamma}: threshold 1+√γ = {crit}"
        )));
    }
    let warn = (ell < crit + CRITICAL_WARN_GAP).then(|| {
        format!("spike {nu} (ℓ = {ell}) is within {CRITICAL_WARN_GAP} of the critical value {crit}; variances are unstable")
    });
    Ok((ell, warn))
}

/// `κ` and `κ̌` for a model, computed once and reused across predictions.
#[derive(Debug, Clone)]
pub struct ModelTensors {
    /// `None` when the data are Gaussian (`κ ≡ 0`).
    pub kappa: Option<Tensor4>,
    pub kcheck: Tensor4,
}

impl ModelTensors {
    pub fn new(model: &SpikedModel) -> Result<Self> {
        let kappa = kappa_tensor(model)?;
        let kappa = (kappa.max_abs() > 0.0).then_some(kappa);
        Ok(Self { kappa, kcheck: kcheck_tensor(model)? })
    }

    /// `[𝒫^{kνlν}, κ]` and `[𝒫^{kνlν}, κ̌]` over all `k, l`.
    fn kl_contractions(&self, model: &SpikedModel, nu: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let k = match &self.kappa {
            Some(t) => contract_all_kl(&model.p, nu, t)?,
            None => DMatrix::zeros(model.m, model.m),
        };
        Ok((k, contract_all_kl(&model.p, nu, &self.kcheck)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceTerms {
    /// `2ρ̇ℓ²`: the sample-covariance term.
    pub gaussian_cov: f64,
    /// `ρ̇²[𝒫ν, κ]`.
    pub nongaussian: f64,
    /// `ρ̇²[𝒫ν, κ̌]`: the correction from normalising to correlations.
    pub correlation: f64,
}

impl VarianceTerms {
    fn new(rd: f64, ell: f64, pk: f64, pkc: f64) -> Self {
        Self { gaussian_cov: 2.0 * rd * ell * ell, nongaussian: rd * rd * pk, correlation: rd * rd * pkc }
    }

    pub fn total(&self) -> f64 {
        self.gaussian_cov + self.nongaussian + self.correlation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvaluePrediction {
    pub nu: usize,
    pub ell: f64,
    pub gamma: f64,
    pub gamma_n: f64,
    pub rho: f64,
    /// Finite-sample centering `ρ(ℓ, γ_n)`.
    pub rho_n: f64,
    pub rho_dot: f64,
    pub rho_dot_n: f64,
    pub var_total: f64,
    pub var_terms: VarianceTerms,
    /// Variance with `ρ̇` evaluated at `γ_n`.
    pub var_total_n: f64,
    pub var_terms_n: VarianceTerms,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Limit and asymptotic variance of `√n(ℓ̂_ν − ρ_νn)`.
pub fn eigenvalue_prediction(model: &SpikedModel, nu: usize, gamma: f64, gamma_n: f64) -> Result<EigenvaluePrediction> {
    eigenvalue_prediction_with(model, &ModelTensors::new(model)?, nu, gamma, gamma_n)
}

pub fn eigenvalue_prediction_with(
    model: &SpikedModel,
    tensors: &ModelTensors,
    nu: usize,
    gamma: f64,
    gamma_n: f64,
) -> Result<EigenvaluePrediction> {
    let (ell, w1) = check_spike(model, nu, gamma)?;
    let (_, w2) = check_spike(model, nu, gamma_n)?;
    let (k, kc) = tensors.kl_contractions(model, nu)?;
    let c = nu - 1;
    let (pk, pkc) = (k[(c, c)], kc[(c, c)]);
    let (rd, rd_n) = (rho_dot(ell, gamma)?, rho_dot(ell, gamma_n)?);
    let terms = VarianceTerms::new(rd, ell, pk, pkc);
    let terms_n = VarianceTerms::new(rd_n, ell, pk, pkc);
    let mut warnings: Vec<String> = w1.into_iter().collect();
    warnings.extend(w2.filter(|w| !warnings.contains(w)));
    Ok(EigenvaluePrediction {
        nu,
        ell,
        gamma,
        gamma_n,
        rho: rho(ell, gamma)?,
        rho_n: rho(ell, gamma_n)?,
        rho_dot: rd,
        rho_dot_n: rd_n,
        var_total: terms.total(),
        var_terms: terms,
        var_total_n: terms_n.total(),
        var_terms_n: terms_n,
        warnings,
    })
}

fn require_gaussian(model: &SpikedModel) -> Result<()> {
    if model.dist.is_gaussian() {
        Ok(())
    } else {
        Err(Error::Unsupported("closed form requires Gaussian data".into()))
    }
}

/// `Δ_ν = 2ℓ_ν Σpᵢ⁴ − Σ(pᵢκ_ijpⱼ)²`.
pub fn delta(model: &SpikedModel, nu: usize) -> Result<f64> {
    let c = model.spike_col(nu)?;
    let p = model.p.column(c);
    let ell = model.ell[c];
    let p4: f64 = p.iter().map(|v| v.powi(4)).sum();
    let mut t = 0.0;
    for i in 0..model.m {
        for j in 0..model.m {
            t += (p[i] * model.gamma[(i, j)] * p[j]).powi(2);
        }
    }
    Ok(2.0 * ell * p4 - t)
}

/// Gaussian closed form `2ℓ²ρ̇[1 − ρ̇Δ_ν]`.
pub fn eigenvalue_variance_gaussian(model: &SpikedModel, nu: usize, gamma: f64) -> Result<f64> {
    require_gaussian(model)?;
    let (ell, _) = check_spike(model, nu, gamma)?;
    let rd = rho_dot(ell, gamma)?;
    Ok(2.0 * ell * ell * rd * (1.0 - rd * delta(model, nu)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionConditions {
    /// `Γ` and `±p_ν` entrywise non-negative.
    pub i: bool,
    /// `2ℓ_ν Σpᵢ⁴ > 1`.
    pub ii: bool,
    /// `2ℓ_ν > ℓ₁²`.
    pub iii: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReduction {
    pub nu: usize,
    pub delta: f64,
    /// Correlation-based variance is below the covariance-based one (`Δ_ν > 0`).
    pub reduced: bool,
    pub conditions: ReductionConditions,
    pub supercritical: bool,
}

/// Sign of `Δ_ν` and the sufficient conditions for `Δ_ν > 0` (Gaussian data).
pub fn variance_reduction_report(model: &SpikedModel, nu: usize, gamma: f64) -> Result<VarianceReduction> {
    require_gaussian(model)?;
    let c = model.spike_col(nu)?;
    let d = delta(model, nu)?;
    let ell = model.ell[c];
    let p = model.p.column(c);
    let tol = 1e-12;
    let gamma_nonneg = model.gamma.iter().all(|&v| v >= -tol);
    let p_one_sign = p.iter().all(|&v| v >= -tol) || p.iter().all(|&v| v <= tol);
    let p4: f64 = p.iter().map(|v| v.powi(4)).sum();
    Ok(VarianceReduction {
        nu,
        delta: d,
        reduced: d > 0.0,
        conditions: ReductionConditions {
            i: gamma_nonneg && p_one_sign,
            ii: 2.0 * ell * p4 > 1.0,
            iii: 2.0 * ell > model.ell[0].powi(2),
        },
        supercritical: check_spike(model, nu, gamma).is_ok(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceBasis {
    /// Covariance of `√n(Pᵀa_ν − e_ν)`.
    Projection,
    /// Covariance of `√n(a_ν − p_ν)`, i.e. `PΣ_νPᵀ`.
    Coordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvectorPrediction {
    pub nu: usize,
    pub ell: f64,
    pub gamma: f64,
    /// Limit of `⟨𝔭̂_ν, 𝔭_ν⟩²`: `ρ̇ℓ/ρ`.
    pub proj_sq_limit: f64,
    pub d_nu: DMatrix<f64>,
    pub sigma_tilde: DMatrix<f64>,
    /// `𝒟Σ̃𝒟` in the projection basis.
    pub sigma_nu: DMatrix<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EigenvectorPrediction {
    pub fn covariance(&self, basis: CovarianceBasis, p: &DMatrix<f64>) -> DMatrix<f64> {
        match basis {
            CovarianceBasis::Projection => self.sigma_nu.clone(),
            CovarianceBasis::Coordinate => symmetrize(p * &self.sigma_nu * p.transpose()),
        }
    }
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

fn d_matrix(model: &SpikedModel, nu: usize) -> DMatrix<f64> {
    let c = nu - 1;
    let ell = model.ell[c];
    DMatrix::from_fn(model.m, model.m, |k, l| if k == l && k != c { 1.0 / (ell - model.ell[k]) } else { 0.0 })
}

fn sandwich(d: &DMatrix<f64>, s: &DMatrix<f64>, c: usize) -> DMatrix<f64> {
    let mut out = symmetrize(d * s * d);
    out.row_mut(c).fill(0.0);
    out.column_mut(c).fill(0.0);
    out
}

/// Limit of the squared projection and covariance of `√n(Pᵀa_ν − e_ν)`.
pub fn eigenvector_prediction(model: &SpikedModel, nu: usize, gamma: f64) -> Result<EigenvectorPrediction> {
    eigenvector_prediction_with(model, &ModelTensors::new(model)?, nu, gamma)
}

pub fn eigenvector_prediction_with(
    model: &SpikedModel,
    tensors: &ModelTensors,
    nu: usize,
    gamma: f64,
) -> Result<EigenvectorPrediction> {
    let (ell, warn) = check_spike(model, nu, gamma)?;
    let rd = rho_dot(ell, gamma)?;
    let (k, kc) = tensors.kl_contractions(model, nu)?;
    let mut sigma_tilde = symmetrize(k + kc);
    for kk in 0..model.m {
        sigma_tilde[(kk, kk)] += model.ell[kk] * ell / rd;
    }
    let d_nu = d_matrix(model, nu);
    let sigma_nu = sandwich(&d_nu, &sigma_tilde, nu - 1);
    Ok(EigenvectorPrediction {
        nu,
        ell,
        gamma,
        proj_sq_limit: rd * ell / rho(ell, gamma)?,
        d_nu,
        sigma_tilde,
        sigma_nu,
        warnings: warn.into_iter().collect(),
    })
}

/// `𝒵 = PᵀP_D(Γ∘Γ)P_D P` and `𝒴 = PᵀP_D²P` with `P_D = diag(p_ν)`.
pub fn zy_matrices(model: &SpikedModel, nu: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let c = model.spike_col(nu)?;
    let pd = DMatrix::from_diagonal(&model.p.column(c).into_owned());
    let g2 = model.gamma.component_mul(&model.gamma);
    let z = model.p.transpose() * &pd * g2 * &pd * &model.p;
    let y = model.p.transpose() * &pd * &pd * &model.p;
    Ok((symmetrize(z), symmetrize(y)))
}

/// Gaussian closed form of `Σ̃_ν`.
pub fn sigma_tilde_gaussian(model: &SpikedModel, nu: usize, gamma: f64) -> Result<DMatrix<f64>> {
    require_gaussian(model)?;
    let (ell, _) = check_spike(model, nu, gamma)?;
    let rd = rho_dot(ell, gamma)?;
    let (z, y) = zy_matrices(model, nu)?;
    let m = model.m;
    let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(model.ell.clone()));
    let li = DMatrix::identity(m, m) * ell + &l;
    let s = &l * (ell / rd) + &li * (&z * 0.5 - &y * ell) * &li + (&y * (ell * ell) - &l * &y * &l) * ell;
    Ok(symmetrize(s))
}

/// Gaussian closed form of `Σ_ν = 𝒟Σ̃𝒟`.
pub fn eigenvector_covariance_gaussian(model: &SpikedModel, nu: usize, gamma: f64) -> Result<DMatrix<f64>> {
    let s = sigma_tilde_gaussian(model, nu, gamma)?;
    Ok(sandwich(&d_matrix(model, nu), &s, nu - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltParams {
    pub omega: f64,
    pub theta: f64,
    pub phi: f64,
}

/// `ω = φ = ρ²/ℓ²`, `θ = ω/ρ̇`.
pub fn clt_params(ell: f64, gamma: f64) -> Result<CltParams> {
    let r = rho(ell, gamma)?;
    let omega = (r / ell).powi(2);
    Ok(CltParams { omega, theta: omega / rho_dot(ell, gamma)?, phi: omega })
}

/// Covariance inputs of the bilinear-form CLT, all `M × M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearInputs {
    pub c_xx: DMatrix<f64>,
    pub c_xy: DMatrix<f64>,
    pub c_yx: DMatrix<f64>,
    pub c_yy: DMatrix<f64>,
    /// `Cov(xy, x′y′)`.
    pub c_zz: DMatrix<f64>,
    /// `Cov(w, w′)` with `w = ½ρ_xy(x² + y²)`.
    pub c_ww: DMatrix<f64>,
    /// `Cov(w, z′)`.
    pub c_wz: DMatrix<f64>,
}

/// `D = θJ + ωK + φK₂` with `J = C^{xy}∘C^{yx} + C^{xx}∘C^{yy}`,
/// `K = C^{zz} − J` and `K₂ = C^{ww} − C^{wz} − C^{zw}`.
pub fn bilinear_clt_covariance(c: &BilinearInputs, theta: f64, omega: f64, phi: f64) -> Result<DMatrix<f64>> {
    let mm = c.c_xx.nrows();
    for (name, a) in [
        ("C_xx", &c.c_xx),
        ("C_xy", &c.c_xy),
        ("C_yx", &c.c_yx),
        ("C_yy", &c.c_yy),
        ("C_zz", &c.c_zz),
        ("C_ww", &c.c_ww),
        ("C_wz", &c.c_wz),
    ] {
        if a.nrows() != mm || a.ncols() != mm {
            return Err(invalid(format!("{name} is {}x{}, expected {mm}x{mm}", a.nrows(), a.ncols())));
        }
    }
    for (name, a) in [("C_xx", &c.c_xx), ("C_yy", &c.c_yy)] {
        if (0..mm).any(|l| (a[(l, l)] - 1.0).abs() > 1e-12) {
            return Err(invalid(format!("{name} must have unit diagonal")));
        }
    }
    let j = c.c_xy.component_mul(&c.c_yx) + c.c_xx.component_mul(&c.c_yy);
    let k = &c.c_zz - &j;
    let k2 = &c.c_ww - &c.c_wz - c.c_wz.transpose();
    Ok(j * theta + k * omega + k2 * phi)
}

/// Pairs `(i, j)` with `i ≤ j`, ordered row by row; `M = m(m+1)/2`.
pub fn pair_index(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect()
}

/// Bilinear-CLT inputs induced by `x_l = ξ̄ᵢ`, `y_l = ξ̄ⱼ` over [`pair_index`].
pub fn pair_inputs(model: &SpikedModel) -> Result<BilinearInputs> {
    let k = &model.gamma;
    let mu = crate::cumulants::fourth_moment_tensor(model)?;
    let pairs = pair_index(model.m);
    let n = pairs.len();
    let f = |g: &dyn Fn((usize, usize), (usize, usize)) -> f64| DMatrix::from_fn(n, n, |a, b| g(pairs[a], pairs[b]));
    let kc = kcheck_tensor(model)?;
    // Only K₂ = C^{ww} − C^{wz} − C^{zw} enters D, so C^{ww} carries κ̌ and C^{wz} is zero.
    Ok(BilinearInputs {
        c_xx: f(&|(i, _), (a, _)| k[(i, a)]),
        c_xy: f(&|(i, _), (_, b)| k[(i, b)]),
        c_yx: f(&|(_, j), (a, _)| k[(j, a)]),
        c_yy: f(&|(_, j), (_, b)| k[(j, b)]),
        c_zz: f(&|(i, j), (a, b)| mu.get(i, j, a, b) - k[(i, j)] * k[(a, b)]),
        c_ww: f(&|(i, j), (a, b)| kc.get(i, j, a, b)),
        c_wz: DMatrix::zeros(n, n),
    })
}

/// `Cov[W_ij, W_i′j′] = θ(κ_ij′κ_ji′ + κ_ii′κ_jj′) + ω(κ_iji′j′ + κ̌_iji′j′)`
/// as a full four-index tensor.
pub fn wmatrix_covariance_tensor(model: &SpikedModel, nu: usize, gamma: f64) -> Result<Tensor4> {
    let (ell, _) = check_spike(model, nu, gamma)?;
    let cp = clt_params(ell, gamma)?;
    let t = ModelTensors::new(model)?;
    let k = &model.gamma;
    Ok(Tensor4::from_fn(model.m, Symmetry::Pairs, |i, j, a, b| {
        let kap = t.kappa.as_ref().map_or(0.0, |x| x.get(i, j, a, b));
        cp.theta * (k[(i, b)] * k[(j, a)] + k[(i, a)] * k[(j, b)]) + cp.omega * (kap + t.kcheck.get(i, j, a, b))
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WCovariance {
    /// 0-based `(i, j)`, `i ≤ j`.
    pub pairs: Vec<(usize, usize)>,
    pub cov: DMatrix<f64>,
}

/// `Cov[W_ij, W_i′j′]` over the symmetric index pairs.
pub fn wmatrix_covariance(model: &SpikedModel, nu: usize, gamma: f64) -> Result<WCovariance> {
    let t = wmatrix_covariance_tensor(model, nu, gamma)?;
    let pairs = pair_index(model.m);
    let cov = DMatrix::from_fn(pairs.len(), pairs.len(), |a, b| t.get(pairs[a].0, pairs[a].1, pairs[b].0, pairs[b].1));
    Ok(WCovariance { pairs, cov })
}

/// Closed forms for the constant-correlation model `Γ = (1−r)I + r11ᵀ`.
pub mod constant_correlation {
    use crate::error::Result;
    use crate::laws::rho_dot;

    pub fn ell1(m: usize, r: f64) -> f64 {
        1.0 + r * (m as f64 - 1.0)
    }

    /// `Δ = 1 − (1−r)²(1 − 1/m)`.
    pub fn delta(m: usize, r: f64) -> f64 {
        1.0 - (1.0 - r).powi(2) * (1.0 - 1.0 / m as f64)
    }

    /// `σ̃₁²/σ₁² = 1 − ρ̇₁Δ`.
    pub fn variance_ratio(m: usize, r: f64, gamma: f64) -> Result<f64> {
        Ok(1.0 - rho_dot(ell1(m, r), gamma)? * delta(m, r))
    }

    /// `Σ_{1,22}` and its covariance-matrix counterpart `Σ^cov_{1,22}`.
    pub fn sigma22(m: usize, r: f64, gamma: f64) -> Result<(f64, f64)> {
        let mf = m as f64;
        let (l1, l2) = (ell1(m, r), 1.0 - r);
        let rm2 = (r * mf).powi(2);
        let cov = l1 * l2 / (rm2 * rho_dot(l1, gamma)?);
        let zeta = 1.0 - r + 0.5 * (1.0 + r) / (1.0 + (1.0 - r) / (r * mf));
        Ok((cov - zeta / rm2 * l1 * l2 * (l1 + l2) / mf, cov))
    }

    /// `Δ₂ = (1 − 2r − r²)/2` for the two-group model.
    pub fn two_group_delta2(r: f64) -> f64 {
        (1.0 - 2.0 * r - r * r) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::contract;
    use crate::model::{build_model, constant_correlation_model, two_group_model, DistributionSpec, InnovationFamily};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, m: usize, strength: f64) -> SpikedModel {
        let u = DVector::from_fn(m, |_, _| rng.random::<f64>() + 0.2);
        let b = DMatrix::from_fn(m, m, |_, _| rng.random::<f64>() - 0.5);
        let s = &u * u.transpose() * strength + &b * b.transpose() * 0.3 + DMatrix::identity(m, m) * 0.2;
        let d = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| 0.5 + rng.random::<f64>()));
        build_model(&d * s * &d, DistributionSpec::Gaussian).unwrap()
    }

    #[test]
    fn constant_correlation_eigenvalue() {
        let model = constant_correlation_model(10, 0.9).unwrap();
        let pred = eigenvalue_prediction(&model, 1, 0.5, 0.5).unwrap();
        assert!((pred.var_terms.gaussian_cov - 164.358).abs() < 1e-3);
        assert_eq!(pred.var_terms.nongaussian, 0.0);
        let closed = pred.var_terms.gaussian_cov * constant_correlation::variance_ratio(10, 0.9, 0.5).unwrap();
        assert!((pred.var_total - closed).abs() < 1e-10 * closed);
        assert!((eigenvalue_variance_gaussian(&model, 1, 0.5).unwrap() - pred.var_total).abs() < 1e-10);
        assert!((pred.var_total - 2.7205).abs() < 1e-3, "{}", pred.var_total);
        assert!((delta(&model, 1).unwrap() - 0.991).abs() < 1e-12);
    }

    #[test]
    fn ratio_near_unit_correlation() {
        let model = constant_correlation_model(10, 0.999).unwrap();
        let pred = eigenvalue_prediction(&model, 1, 0.5, 0.5).unwrap();
        let ratio = pred.var_total / pred.var_terms.gaussian_cov;
        assert!((ratio / (0.5 / 81.0) - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn dual_pathways_on_random_gaussian_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gammas = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0];
        let mut checked = 0;
        for trial in 0..50 {
            let m = 2 + trial % 7;
            let gamma = gammas[trial % gammas.len()];
            let model = random_model(&mut rng, m, 2.0 + 3.0 * gamma);
            if check_spike(&model, 1, gamma).is_err() {
                continue;
            }
            checked += 1;
            let t = eigenvalue_prediction(&model, 1, gamma, gamma).unwrap();
            let g = eigenvalue_variance_gaussian(&model, 1, gamma).unwrap();
            assert!((t.var_total - g).abs() < 1e-10 * (1.0 + g.abs()), "trial {trial}");
            assert!(t.var_total > 0.0);
            let e = eigenvector_prediction(&model, 1, gamma).unwrap();
            let c = eigenvector_covariance_gaussian(&model, 1, gamma).unwrap();
            let scale = 1.0 + c.amax();
            assert!((&e.sigma_nu - &c).amax() < 1e-10 * scale, "trial {trial}");
            let eig = e.sigma_nu.clone().symmetric_eigenvalues();
            assert!(eig.iter().all(|&v| v >= -1e-12 * scale), "trial {trial}: {eig}");
            assert!(e.sigma_nu.row(0).iter().all(|&v| v == 0.0));
            assert!(e.sigma_nu.column(0).iter().all(|&v| v == 0.0));
        }
        assert!(checked >= 40, "only {checked} supercritical draws");
    }

    #[test]
    fn isserlis_contraction_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for m in 2..=6 {
            let model = random_model(&mut rng, m, 2.0);
            let k = &model.gamma;
            let a = Tensor4::from_fn(m, Symmetry::None, |i, j, x, y| k[(i, x)] * k[(j, y)]);
            let b = Tensor4::from_fn(m, Symmetry::Full, |i, j, x, y| k[(i, x)] * k[(j, y)] + k[(i, y)] * k[(j, x)]);
            for nu in 1..=m {
                let l = model.ell[nu - 1];
                assert!((contract(&model.p, nu, nu, nu, nu, &a).unwrap() - l * l).abs() < 1e-10 * l * l);
                let all = contract_all_kl(&model.p, nu, &b).unwrap();
                for kk in 0..m {
                    for ll in 0..m {
                        if kk == nu - 1 || ll == nu - 1 {
                            continue;
                        }
                        let want = if kk == ll { model.ell[kk] * l } else { 0.0 };
                        assert!((all[(kk, ll)] - want).abs() < 1e-10 * (1.0 + l * l));
                    }
                }
            }
        }
    }

    #[test]
    fn entrywise_eigenvector_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let model = random_model(&mut rng, 6, 4.0);
        let gamma = 0.3;
        let s = eigenvector_covariance_gaussian(&model, 1, gamma).unwrap();
        let (z, y) = zy_matrices(&model, 1).unwrap();
        let l = model.ell[0];
        let rd = rho_dot(l, gamma).unwrap();
        for k in 1..6 {
            for j in 1..6 {
                let (lk, lj) = (model.ell[k], model.ell[j]);
                let diag = if k == j { l / rd * lk } else { 0.0 };
                let inner = diag + (l + lk) * (l + lj) * z[(k, j)] / 2.0 - l * (l * (lk + lj) + 2.0 * lk * lj) * y[(k, j)];
                let want = inner / ((l - lk) * (l - lj));
                assert!((s[(k, j)] - want).abs() < 1e-12 * (1.0 + want.abs()), "({k},{j})");
            }
        }
    }

    #[test]
    fn constant_correlation_eigenvector() {
        let (m, r, gamma) = (10usize, 0.9, 0.5);
        let model = constant_correlation_model(m, r).unwrap();
        let (z, y) = zy_matrices(&model, 1).unwrap();
        let mf = m as f64;
        let mut want_z = DMatrix::identity(m, m) * ((1.0 - r * r) / mf);
        want_z[(0, 0)] += r * r;
        assert!((&z - want_z).amax() < 1e-12);
        assert!((&y - DMatrix::identity(m, m) / mf).amax() < 1e-12);
        let e = eigenvector_prediction(&model, 1, gamma).unwrap();
        let (s22, _) = constant_correlation::sigma22(m, r, gamma).unwrap();
        assert!((e.sigma_nu[(1, 1)] - s22).abs() < 1e-10 * s22.abs().max(1e-3), "{} vs {s22}", e.sigma_nu[(1, 1)]);
    }

    #[test]
    fn projection_limit() {
        let model = build_model(DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]), DistributionSpec::Gaussian).unwrap();
        // ℓ₁ = 1.9 > 1 + √0.5.
        let e = eigenvector_prediction(&model, 1, 0.5).unwrap();
        let l: f64 = 1.9;
        let rd = 1.0 - 0.5 / (l - 1.0).powi(2);
        assert!((e.proj_sq_limit - rd * l / (l + 0.5 * l / (l - 1.0))).abs() < 1e-12);
        assert!(e.proj_sq_limit > 0.0 && e.proj_sq_limit < 1.0);
        // ℓ = 3, γ = 1.
        let m3 = constant_correlation_model(4, 2.0 / 3.0).unwrap();
        let e = eigenvector_prediction(&m3, 1, 1.0).unwrap();
        assert!((e.proj_sq_limit - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_coordinate_model() {
        let model = build_model(DMatrix::from_element(1, 1, 4.0), DistributionSpec::Gaussian).unwrap();
        assert!(matches!(eigenvector_prediction(&model, 1, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_bad_spikes() {
        let model = constant_correlation_model(4, 0.5).unwrap();
        assert!(matches!(eigenvalue_prediction(&model, 2, 0.5, 0.5), Err(Error::Domain(_))));
        let weak = constant_correlation_model(2, 0.3).unwrap();
        assert!(matches!(eigenvalue_prediction(&weak, 1, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(eigenvalue_prediction(&model, 9, 0.5, 0.5), Err(Error::InvalidArgument(_))));
        let lm = model.with_distribution(DistributionSpec::linear_mixing(InnovationFamily::Rademacher)).unwrap();
        assert!(matches!(eigenvalue_variance_gaussian(&lm, 1, 0.5), Err(Error::Unsupported(_))));
        // ℓ₁ = 2.5 sits 0.04 above 1 + √γ at γ = 1.9².
        let near = constant_correlation_model(4, 0.5).unwrap();
        let g = (2.5f64 - 1.0 - 0.04).powi(2);
        assert_eq!(eigenvalue_prediction(&near, 1, g, g).unwrap().warnings.len(), 1);
    }

    #[test]
    fn variance_reduction_examples() {
        let cc = constant_correlation_model(10, 0.9).unwrap();
        let rep = variance_reduction_report(&cc, 1, 0.5).unwrap();
        assert!(rep.reduced && rep.conditions.ii && rep.conditions.i);
        let tg = two_group_model(4, 0.5).unwrap();
        let r2 = variance_reduction_report(&tg, 2, 0.5).unwrap();
        assert!((r2.delta + 0.125).abs() < 1e-12 && !r2.reduced);
        assert!((r2.delta - constant_correlation::two_group_delta2(0.5)).abs() < 1e-12);
        let r1 = variance_reduction_report(&tg, 1, 0.5).unwrap();
        assert!(r1.delta > 0.0 && r1.conditions.ii);
    }

    #[test]
    fn clt_parameter_values() {
        let c = clt_params(3.0, 1.0).unwrap();
        assert!((c.omega - 2.25).abs() < 1e-14 && (c.theta - 3.0).abs() < 1e-14 && c.phi == c.omega);
        let c = clt_params(9.1, 0.5).unwrap();
        assert!((c.omega - 1.127267).abs() < 1e-6, "{}", c.omega);
        let c = clt_params(3.0, 1e-12).unwrap();
        assert!((c.omega - 1.0).abs() < 1e-10 && (c.theta - 1.0).abs() < 1e-10);
        assert!(matches!(clt_params(1.5, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn bilinear_scalar_case() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let two = DMatrix::from_element(1, 1, 2.0);
        let inputs = BilinearInputs {
            c_xx: one.clone(),
            c_xy: one.clone(),
            c_yx: one.clone(),
            c_yy: one,
            c_zz: two.clone(),
            c_ww: two.clone(),
            c_wz: two,
        };
        let d = bilinear_clt_covariance(&inputs, 3.0, 5.0, 7.0).unwrap();
        assert!((d[(0, 0)] - (2.0 * 3.0 - 2.0 * 7.0)).abs() < 1e-14);
        let mut bad = inputs.clone();
        bad.c_zz = DMatrix::zeros(2, 2);
        assert!(matches!(bilinear_clt_covariance(&bad, 1.0, 1.0, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bilinear_matches_w_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let g = random_model(&mut rng, 4, 3.0);
        for model in [g.clone(), g.with_distribution(DistributionSpec::linear_mixing(InnovationFamily::TwoPointAsymmetric { p: 0.25 })).unwrap()] {
            let inputs = pair_inputs(&model).unwrap();
            let j = inputs.c_xy.component_mul(&inputs.c_yx) + inputs.c_xx.component_mul(&inputs.c_yy);
            let k = &inputs.c_zz - &j;
            if model.dist.is_gaussian() {
                assert!(k.amax() < 1e-14);
            }
            let cp = clt_params(model.ell[0], 0.4).unwrap();
            let d = bilinear_clt_covariance(&inputs, cp.theta, cp.omega, cp.phi).unwrap();
            let w = wmatrix_covariance(&model, 1, 0.4).unwrap();
            assert!((&d - &w.cov).amax() < 1e-12 * (1.0 + d.amax()));
        }
    }

    #[test]
    fn w_covariance_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let base = random_model(&mut rng, 5, 3.0);
        let gamma = 0.4;
        for model in [base.clone(), base.with_distribution(DistributionSpec::linear_mixing(InnovationFamily::Uniform)).unwrap()] {
            let w = wmatrix_covariance_tensor(&model, 1, gamma).unwrap();
            let l = model.ell[0];
            let r = rho(l, gamma).unwrap();
            let rd = rho_dot(l, gamma).unwrap();
            let pred = eigenvalue_prediction(&model, 1, gamma, gamma).unwrap();
            let var_w = contract(&model.p, 1, 1, 1, 1, &w).unwrap();
            assert!(((rd * l / r).powi(2) * var_w - pred.var_total).abs() < 1e-10 * pred.var_total);
            let e = eigenvector_prediction(&model, 1, gamma).unwrap();
            let all = contract_all_kl(&model.p, 1, &w).unwrap() * (l / r).powi(2);
            for k in 1..5 {
                for j in 1..5 {
                    assert!((all[(k, j)] - e.sigma_tilde[(k, j)]).abs() < 1e-10 * (1.0 + all.amax()));
                }
            }
        }
    }

    #[test]
    fn continuity_in_gamma() {
        let model = constant_correlation_model(6, 0.7).unwrap();
        let t = ModelTensors::new(&model).unwrap();
        let mut prev: Option<f64> = None;
        let mut g = 0.05;
        while g < 1.5 {
            let v = eigenvalue_prediction_with(&model, &t, 1, g, g).unwrap().var_total;
            if let Some(p) = prev {
                assert!((v - p).abs() < 1e-2 * p.abs(), "jump at γ={g}");
            }
            prev = Some(v);
            g += 1e-4;
        }
    }
}
