//! Data generation under the spiked model, sample covariance/correlation
//! spectra, and the `K(t)` and bilinear-form diagnostics.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::linalg::top_eigenpairs;
use crate::model::FullModel;

/// Master seed; each replicate draws from its own ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Generator for replicate `replicate`: key from the master seed, stream
    /// id from the replicate index.
    pub fn stream(&self, replicate: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(replicate);
        rng
    }
}

/// Draws `n` observations as the columns of an `(m+p) × n` matrix: signal
/// rows first, then i.i.d. noise rows.
pub fn generate(model: &FullModel, n: usize, rng: &RngSpec, replicate: u64) -> Result<DMatrix<f64>> {
    let m = model.spiked.m;
    if n < m + 2 {
        return Err(invalid(format!("need n ≥ m + 2 = {}, got {n}", m + 2)));
    }
    let d = model.dim();
    let mut r = rng.stream(replicate);
    let mut x = DMatrix::zeros(d, n);
    let noise = model.noise;
    for mut col in x.column_iter_mut() {
        let s = col.as_mut_slice();
        model.spiked.sample_signal(&mut r, &mut s[..m]);
        for v in &mut s[m..] {
            *v = noise.sample(&mut r);
        }
    }
    Ok(x)
}

/// `alpha·ABᵀ`.
fn outer<S1, S2>(alpha: f64, a: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::Dyn, S1>, b: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::Dyn, S2>) -> DMatrix<f64>
where
    S1: nalgebra::Storage<f64, nalgebra::Dyn, nalgebra::Dyn>,
    S2: nalgebra::Storage<f64, nalgebra::Dyn, nalgebra::Dyn>,
{
    let mut out = DMatrix::zeros(a.nrows(), b.nrows());
    out.gemm(alpha, a, &b.transpose(), 0.0);
    out
}

/// `S = n⁻¹XXᵀ` (no centering).
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    outer(1.0 / x.ncols() as f64, x, x)
}

/// `R = S_D^{-1/2} S S_D^{-1/2}` with the diagonal set to exactly one.
pub fn correlation_from_covariance(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = s.nrows();
    for i in 0..d {
        let v = s[(i, i)];
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::DegenerateData { row: i + 1, message: "has zero sample variance".into() });
        }
    }
    let mut r = DMatrix::from_fn(d, d, |i, j| s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt());
    for i in 0..d {
        r[(i, i)] = 1.0;
        for j in 0..i {
            let v = 0.5 * (r[(i, j)] + r[(j, i)]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(r)
}

pub fn sample_correlation(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    correlation_from_covariance(&sample_covariance(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Covariance,
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeEstimate {
    pub nu: usize,
    pub ell_hat: f64,
    /// `⟨𝔭̂_ν, 𝔭_ν⟩ ≥ 0` after sign alignment.
    pub proj: f64,
    /// Unit-norm signal block `a_ν = p̂_ν/‖p̂_ν‖`.
    pub a_nu: DVector<f64>,
    /// `Pᵀa_ν`.
    pub proj_vec: DVector<f64>,
    /// Neighbouring sample eigenvalue closer than `1e-8·ℓ̂_ν`.
    pub near_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpectrum {
    pub which: MatrixKind,
    /// Leading eigenvalues, descending (as many as were computed).
    pub eigenvalues: Vec<f64>,
    pub spikes: Vec<SpikeEstimate>,
}

/// Matches spike `ν` to the `ν`-th largest sample eigenvalue and aligns the
/// sample eigenvector's sign with the population one.
pub fn extract_spikes(mat: &DMatrix<f64>, which: MatrixKind, model: &FullModel, nus: &[usize]) -> Result<SampleSpectrum> {
    let d = model.dim();
    let m = model.spiked.m;
    if mat.nrows() != d || mat.ncols() != d {
        return Err(invalid(format!("matrix is {}x{}, model dimension is {d}", mat.nrows(), mat.ncols())));
    }
    let top = *nus.iter().max().ok_or_else(|| invalid("no spike indices requested"))?;
    if nus.iter().any(|&nu| nu == 0 || nu > m) {
        return Err(invalid(format!("spike indices must lie in 1..={m}")));
    }
    let k = (top + 1).min(d);
    let eig = top_eigenpairs(mat, k)?;
    let mut spikes = Vec::with_capacity(nus.len());
    for &nu in nus {
        let c = nu - 1;
        let ell_hat = eig.values[c];
        let mut v = eig.vectors.column(c).into_owned();
        let mut p_hat = v.rows(0, m).into_owned();
        let pop = model.spiked.p.column(c);
        let mut proj = p_hat.dot(&pop);
        if proj < 0.0 {
            v.neg_mut();
            p_hat.neg_mut();
            proj = -proj;
        }
        let norm = p_hat.norm();
        if !(norm > 0.0) {
            return Err(Error::NumericalFailure {
                message: format!("sample eigenvector {nu} has no signal component"),
                residual: norm,
            });
        }
        let a_nu = p_hat / norm;
        let proj_vec = model.spiked.p.transpose() * &a_nu;
        let gap = 1e-8 * ell_hat.abs();
        let near_degenerate = (c > 0 && (eig.values[c - 1] - ell_hat).abs() <= gap)
            || (c + 1 < k && (ell_hat - eig.values[c + 1]).abs() <= gap);
        spikes.push(SpikeEstimate { nu, ell_hat, proj, a_nu, proj_vec, near_degenerate });
    }
    Ok(SampleSpectrum { which, eigenvalues: eig.values, spikes })
}

/// Rows scaled to `n⁻¹‖x̄ᵢ‖² = 1`.
pub fn standardize_rows(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.ncols() as f64;
    let mut out = x.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateData { row: i + 1, message: "has zero sample variance".into() });
        }
        row *= n.sqrt() / norm;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMatrix {
    /// `K(t) = R₁₁ + R₁₂(tI − R₂₂)⁻¹R₂₁`.
    pub k: DMatrix<f64>,
    /// `tr B_n(t)` with `B_n(t) = t(tI_n − n⁻¹X̄₂ᵀX̄₂)⁻¹`.
    pub trace_b: f64,
}

/// `K(t) = n⁻¹X̄₁B_n(t)X̄₁ᵀ` for the first `m` rows of `x`.
///
/// With `p ≤ n` the `p × p` resolvent form is used; otherwise the `n × n`
/// system is solved. Fails with a domain error unless `t` exceeds the largest
/// eigenvalue of `R₂₂`.
pub fn k_matrix(x: &DMatrix<f64>, m: usize, t: f64) -> Result<KMatrix> {
    let (d, n) = (x.nrows(), x.ncols());
    if m == 0 || m > d {
        return Err(invalid(format!("signal block size {m} outside 1..={d}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain(format!("K(t) needs t > 0, got {t}")));
    }
    let p = d - m;
    let nf = n as f64;
    let xb = standardize_rows(x)?;
    let x1 = xb.rows(0, m);
    let r11 = outer(1.0 / nf, &x1, &x1);
    if p == 0 {
        return Ok(KMatrix { k: r11, trace_b: nf });
    }
    let x2 = xb.rows(m, p);
    let not_outside = || domain(format!("t = {t} is not above the noise-block spectrum"));
    if p <= n {
        let r22 = outer(1.0 / nf, &x2, &x2);
        let r21 = outer(1.0 / nf, &x2, &x1);
        let shifted = DMatrix::identity(p, p) * t - &r22;
        let chol = shifted.cholesky().ok_or_else(not_outside)?;
        let sol = chol.solve(&r21);
        let k = r11 + r21.transpose() * sol;
        let trace_inv = chol.inverse().trace();
        Ok(KMatrix { k: (&k + k.transpose()) * 0.5, trace_b: nf - p as f64 + t * trace_inv })
    } else {
        let x2t = x2.transpose();
        let g = outer(1.0 / nf, &x2t, &x2t);
        let shifted = DMatrix::identity(n, n) * t - g;
        let chol = shifted.cholesky().ok_or_else(not_outside)?;
        let sol = chol.solve(&x1.transpose());
        let k = x1 * sol * (t / nf);
        let trace_b = t * chol.inverse().trace();
        Ok(KMatrix { k: (&k + k.transpose()) * 0.5, trace_b })
    }
}

/// `n⁻¹x̄ᵀBȳ` with `x̄ = √n·x/‖x‖`.
pub fn normalized_bilinear_form(x: &DVector<f64>, y: &DVector<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let n = x.len();
    if y.len() != n || b.nrows() != n || b.ncols() != n {
        return Err(invalid("dimension mismatch in bilinear form"));
    }
    let (nx, ny) = (x.norm(), y.norm());
    if !(nx > 0.0 && ny > 0.0) {
        return Err(invalid("bilinear form of a zero vector"));
    }
    Ok(x.dot(&(b * y)) / (nx * ny))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, constant_correlation_model, DistributionSpec, InnovationFamily};

    fn full(model: crate::model::SpikedModel, p: usize) -> FullModel {
        FullModel::new(model, p)
    }

    #[test]
    fn identity_covariance_lln() {
        let m = full(build_model(DMatrix::identity(3, 3), DistributionSpec::Gaussian).unwrap(), 0);
        let x = generate(&m, 100_000, &RngSpec::new(1), 0).unwrap();
        let s = sample_covariance(&x);
        assert!((s - DMatrix::identity(3, 3)).amax() < 0.05);
    }

    #[test]
    fn determinism_and_streams() {
        let m = full(constant_correlation_model(3, 0.5).unwrap(), 4);
        let a = generate(&m, 50, &RngSpec::new(7), 3).unwrap();
        let b = generate(&m, 50, &RngSpec::new(7), 3).unwrap();
        let c = generate(&m, 50, &RngSpec::new(7), 4).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a.as_slice(), c.as_slice());
        assert!(matches!(generate(&m, 4, &RngSpec::new(7), 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rademacher_lattice() {
        let sm = build_model(DMatrix::identity(2, 2), DistributionSpec::linear_mixing(InnovationFamily::Rademacher)).unwrap();
        let x = generate(&full(sm, 1).with_noise(InnovationFamily::Uniform).unwrap(), 200, &RngSpec::new(2), 0).unwrap();
        assert!(x.rows(0, 2).iter().all(|&v| v == 1.0 || v == -1.0));
        assert!(x.row(2).iter().all(|&v| v.abs() <= 3f64.sqrt()));
    }

    #[test]
    fn correlation_basics() {
        let mut x = DMatrix::from_fn(3, 40, |i, j| ((i + 1) * (j + 3)) as f64 % 7.0 - 3.0);
        let r0 = x.row(0).into_owned();
        x.set_row(1, &r0);
        x.set_row(2, &(-r0));
        let r = sample_correlation(&x).unwrap();
        assert_eq!(r[(0, 1)], 1.0);
        assert_eq!(r[(0, 2)], -1.0);
        assert_eq!(r.diagonal().sum(), 3.0);
        let mut z = x.clone();
        z.row_mut(1).fill(0.0);
        assert!(matches!(sample_correlation(&z), Err(Error::DegenerateData { row: 2, .. })));
    }

    #[test]
    fn population_input_recovers_spikes() {
        let fm = full(constant_correlation_model(4, 0.8).unwrap(), 150);
        let spec = extract_spikes(&fm.population_correlation(), MatrixKind::Correlation, &fm, &[1]).unwrap();
        let s = &spec.spikes[0];
        assert!((s.ell_hat - 3.4).abs() < 1e-10);
        assert!((s.proj - 1.0).abs() < 1e-10);
        assert!((s.proj_vec[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn k_matrix_without_noise_is_r11() {
        let fm = full(constant_correlation_model(3, 0.5).unwrap(), 0);
        let x = generate(&fm, 60, &RngSpec::new(3), 0).unwrap();
        let k = k_matrix(&x, 3, 5.0).unwrap();
        assert!((k.k - sample_correlation(&x).unwrap()).amax() < 1e-14);
        assert_eq!(k.trace_b, 60.0);
    }

    #[test]
    fn k_matrix_paths_and_fixed_point() {
        let fm = full(constant_correlation_model(3, 0.8).unwrap(), 40);
        let x = generate(&fm, 120, &RngSpec::new(4), 0).unwrap();
        let r = sample_correlation(&x).unwrap();
        let spec = extract_spikes(&r, MatrixKind::Correlation, &fm, &[1]).unwrap();
        let l = spec.eigenvalues[0];
        let k = k_matrix(&x, 3, l).unwrap();
        let top = top_eigenpairs(&r, 1).unwrap();
        let p_hat = top.vectors.column(0).rows(0, 3).into_owned();
        assert!((&k.k * &p_hat - &p_hat * l).norm() <= 1e-8);
        // Same K through the n×n system (p > n).
        let wide = full(constant_correlation_model(3, 0.8).unwrap(), 200);
        let xw = generate(&wide, 120, &RngSpec::new(5), 0).unwrap();
        let t = 20.0;
        let k1 = k_matrix(&xw, 3, t).unwrap();
        let xb = standardize_rows(&xw).unwrap();
        let x1 = xb.rows(0, 3);
        let x2 = xb.rows(3, 200);
        let b = (DMatrix::identity(120, 120) * t - x2.transpose() * x2 / 120.0).try_inverse().unwrap() * t;
        let k2 = x1 * &b * x1.transpose() / 120.0;
        assert!((&k1.k - k2).amax() < 1e-10);
        assert!((k1.trace_b - b.trace()).abs() < 1e-8);
        assert!(matches!(k_matrix(&x, 3, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn bilinear_form_basics() {
        let x = DVector::from_fn(50, |i, _| (i as f64).sin() + 0.1);
        let v = normalized_bilinear_form(&x, &x, &DMatrix::identity(50, 50)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        assert!(normalized_bilinear_form(&x, &DVector::zeros(50), &DMatrix::identity(50, 50)).is_err());
    }
}
