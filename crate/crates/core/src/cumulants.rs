//! Order-4 moment and cumulant tensors of the standardised signal `ξ̄ᵢ = ξᵢ/σᵢ`,
//! the normalisation correction `κ̌`, plug-in estimators and projection
//! contractions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{DistributionSpec, SpikedModel};

/// Index symmetries a tensor is known to carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    /// Invariant under every permutation of the four indices.
    Full,
    /// Invariant under `i↔j`, `i′↔j′` and `(ij)↔(i′j′)`.
    Pairs,
    None,
}

/// Dense `m⁴` tensor, row-major in `(i, j, i′, j′)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    pub m: usize,
    pub symmetry: Symmetry,
    pub values: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(m: usize, symmetry: Symmetry) -> Self {
        Self { m, symmetry, values: vec![0.0; m * m * m * m] }
    }

    pub fn from_fn<F: FnMut(usize, usize, usize, usize) -> f64>(m: usize, symmetry: Symmetry, mut f: F) -> Self {
        let mut values = Vec::with_capacity(m * m * m * m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        values.push(f(i, j, k, l));
                    }
                }
            }
        }
        Self { m, symmetry, values }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.m + j) * self.m + k) * self.m + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.values[self.idx(i, j, k, l)]
    }

    /// `m² × m²` matrix view with rows `(i,j)` and columns `(i′,j′)`.
    pub fn as_pair_matrix(&self) -> DMatrix<f64> {
        let m2 = self.m * self.m;
        DMatrix::from_row_slice(m2, m2, &self.values)
    }

    fn from_pair_matrix(m: usize, symmetry: Symmetry, a: &DMatrix<f64>) -> Self {
        Self { m, symmetry, values: a.transpose().as_slice().to_vec() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Largest violation of the symmetries implied by `self.symmetry`.
    pub fn max_asymmetry(&self) -> f64 {
        let m = self.m;
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let v = self.get(i, j, k, l);
                        let others: &[f64] = match self.symmetry {
                            Symmetry::Full => &[self.get(j, i, k, l), self.get(k, j, i, l), self.get(i, k, j, l), self.get(l, j, k, i)],
                            Symmetry::Pairs => &[self.get(j, i, k, l), self.get(i, j, l, k), self.get(k, l, i, j)],
                            Symmetry::None => &[],
                        };
                        for o in others {
                            worst = worst.max((v - o).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn to_json(&self) -> TensorJson {
        TensorJson { shape: [self.m; 4], symmetry: self.symmetry, values: self.values.clone() }
    }
}

/// Dump format: shape, symmetry tag, row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    pub shape: [usize; 4],
    pub symmetry: Symmetry,
    pub values: Vec<f64>,
}

/// `κ_ij = 𝔼ξ̄ᵢξ̄ⱼ`, which is the model's `Γ`.
pub fn scaled_covariance(model: &SpikedModel) -> DMatrix<f64> {
    model.gamma.clone()
}

fn isserlis(k: &DMatrix<f64>) -> Tensor4 {
    Tensor4::from_fn(k.nrows(), Symmetry::Full, |i, j, a, b| {
        k[(i, j)] * k[(a, b)] + k[(i, a)] * k[(j, b)] + k[(i, b)] * k[(j, a)]
    })
}

/// Non-Gaussian part `κ₄ Σ_k ā_ik ā_jk ā_i′k ā_j′k`, or `None` for zero `κ₄`.
fn mixing_cumulant(model: &SpikedModel) -> Option<Tensor4> {
    let k4 = match &model.dist {
        DistributionSpec::Gaussian => return None,
        DistributionSpec::LinearMixing { family, .. } => family.excess_kurtosis(),
    };
    if k4 == 0.0 {
        return None;
    }
    let a = model.scaled_mixing();
    let m = model.m;
    let q = a.ncols();
    let pairs = DMatrix::from_fn(m * m, q, |r, k| a[(r / m, k)] * a[(r % m, k)]);
    let c = &pairs * pairs.transpose() * k4;
    Some(Tensor4::from_pair_matrix(m, Symmetry::Full, &c))
}

/// `μ_iji′j′ = 𝔼[ξ̄ᵢξ̄ⱼξ̄ᵢ′ξ̄ⱼ′]`.
pub fn fourth_moment_tensor(model: &SpikedModel) -> Result<Tensor4> {
    let mut mu = isserlis(&model.gamma);
    if let Some(k) = mixing_cumulant(model) {
        for (v, c) in mu.values.iter_mut().zip(&k.values) {
            *v += c;
        }
    }
    Ok(mu)
}

/// Fourth-order cumulants of `ξ̄`; exactly zero for Gaussian data.
pub fn kappa_tensor(model: &SpikedModel) -> Result<Tensor4> {
    Ok(mixing_cumulant(model).unwrap_or_else(|| Tensor4::zeros(model.m, Symmetry::Full)))
}

/// `κ̌ = Cov(ψ,ψ) − Cov(ψ,χ) − Cov(χ,ψ)` from the moment tensor, where
/// `χ_ij = ξ̄ᵢξ̄ⱼ` and `ψ_ij = ½κ_ij(ξ̄ᵢ² + ξ̄ⱼ²)`.
pub fn kcheck_from_moments(k2: &DMatrix<f64>, mu: &Tensor4) -> Tensor4 {
    let m = mu.m;
    Tensor4::from_fn(m, Symmetry::Pairs, |i, j, a, b| {
        let kij = k2[(i, j)];
        let kab = k2[(a, b)];
        let prod = kij * kab;
        let pp = 0.25 * prod * (mu.get(i, i, a, a) + mu.get(i, i, b, b) + mu.get(j, j, a, a) + mu.get(j, j, b, b)) - prod;
        let pc = 0.5 * kij * (mu.get(i, i, a, b) + mu.get(j, j, a, b)) - prod;
        let cp = 0.5 * kab * (mu.get(a, a, i, j) + mu.get(b, b, i, j)) - prod;
        pp - pc - cp
    })
}

pub fn kcheck_tensor(model: &SpikedModel) -> Result<Tensor4> {
    Ok(kcheck_from_moments(&model.gamma, &fourth_moment_tensor(model)?))
}

/// Closed form of `κ̌` for Gaussian data.
pub fn kcheck_gaussian(k: &DMatrix<f64>) -> Tensor4 {
    Tensor4::from_fn(k.nrows(), Symmetry::Pairs, |i, j, a, b| {
        0.5 * k[(i, j)] * k[(a, b)]
            * (k[(i, a)].powi(2) + k[(j, b)].powi(2) + k[(i, b)].powi(2) + k[(a, j)].powi(2))
            - k[(a, b)] * (k[(i, a)] * k[(j, a)] + k[(i, b)] * k[(j, b)])
            - k[(i, j)] * (k[(i, a)] * k[(i, b)] + k[(a, j)] * k[(j, b)])
    })
}

/// Whether empirical `ψ̂` used the population `κ_ij` or the sample one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    Oracle,
    Sample,
}

/// Plug-in estimates with batch standard errors (same shapes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalCumulants {
    pub n: usize,
    pub mode: EstimatorMode,
    pub kappa2: DMatrix<f64>,
    pub kappa2_se: DMatrix<f64>,
    pub mu: Tensor4,
    pub mu_se: Tensor4,
    pub kappa: Tensor4,
    pub kappa_se: Tensor4,
    pub kcheck: Tensor4,
    pub kcheck_se: Tensor4,
}

pub const EMPIRICAL_BATCHES: usize = 100;
pub const EMPIRICAL_MIN_N: usize = 1000;

struct Estimates {
    k2: DMatrix<f64>,
    mu: DMatrix<f64>,
    kappa: DMatrix<f64>,
    kcheck: DMatrix<f64>,
}

fn estimate(x: &DMatrix<f64>, pop_k2: Option<&DMatrix<f64>>) -> Estimates {
    let (n, m) = (x.nrows(), x.ncols());
    let nf = n as f64;
    let k2 = x.transpose() * x / nf;
    let kk = pop_k2.unwrap_or(&k2);
    let chi = DMatrix::from_fn(n, m * m, |t, r| x[(t, r / m)] * x[(t, r % m)]);
    let psi = DMatrix::from_fn(n, m * m, |t, r| {
        let (i, j) = (r / m, r % m);
        0.5 * kk[(i, j)] * (x[(t, i)].powi(2) + x[(t, j)].powi(2))
    });
    let mu = chi.transpose() * &chi / nf;
    let isserlis_hat = isserlis(&k2).as_pair_matrix();
    let kappa = &mu - isserlis_hat;

    let center = |a: &DMatrix<f64>| {
        let mean = a.row_mean();
        let mut c = a.clone();
        for mut row in c.row_iter_mut() {
            row -= &mean;
        }
        c
    };
    let (chi_c, psi_c) = (center(&chi), center(&psi));
    let pp = psi_c.transpose() * &psi_c / nf;
    let pc = psi_c.transpose() * &chi_c / nf;
    let kcheck = &pp - &pc - pc.transpose();
    Estimates { k2, mu, kappa, kcheck }
}

fn batch_se(batches: &[DMatrix<f64>]) -> DMatrix<f64> {
    let b = batches.len() as f64;
    let mean = batches.iter().fold(DMatrix::zeros(batches[0].nrows(), batches[0].ncols()), |acc, x| acc + x) / b;
    let ss = batches.iter().fold(DMatrix::zeros(mean.nrows(), mean.ncols()), |acc, x| {
        let d = x - &mean;
        acc + d.component_mul(&d)
    });
    (ss / (b * (b - 1.0))).map(f64::sqrt)
}

/// Moment and cumulant estimates from `n × m` draws of `ξ`.
///
/// Columns are scaled by `pop_sigma` when given, otherwise by their sample
/// standard deviation. With `pop_gamma` the `ψ̂` terms use the population
/// `κ_ij` (oracle mode). Standard errors come from 100 contiguous batches.
pub fn empirical_cumulants(
    samples: &DMatrix<f64>,
    pop_sigma: Option<&[f64]>,
    pop_gamma: Option<&DMatrix<f64>>,
) -> Result<EmpiricalCumulants> {
    let (n, m) = (samples.nrows(), samples.ncols());
    if n < EMPIRICAL_MIN_N {
        return Err(invalid(format!("need at least {EMPIRICAL_MIN_N} samples, got {n}")));
    }
    if m == 0 || m > crate::model::MAX_SIGNAL_DIM {
        return Err(invalid(format!("unsupported signal dimension {m}")));
    }
    let mut sd = Vec::with_capacity(m);
    for (c, col) in samples.column_iter().enumerate() {
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        if !(var > 0.0) || !var.is_finite() {
            return Err(invalid(format!("column {} has zero or undefined variance", c + 1)));
        }
        sd.push(var.sqrt());
    }
    let scale: Vec<f64> = match pop_sigma {
        Some(s) if s.len() != m => return Err(invalid("population σ length does not match the sample width")),
        Some(s) => s.to_vec(),
        None => sd,
    };
    if let Some(g) = pop_gamma {
        if g.nrows() != m || g.ncols() != m {
            return Err(invalid("population Γ shape does not match the sample width"));
        }
    }
    let x = DMatrix::from_fn(n, m, |t, c| samples[(t, c)] / scale[c]);

    let full = estimate(&x, pop_gamma);
    let per = n / EMPIRICAL_BATCHES;
    let parts: Vec<Estimates> = (0..EMPIRICAL_BATCHES)
        .map(|b| estimate(&x.rows(b * per, per).into_owned(), pop_gamma))
        .collect();
    let se = |f: fn(&Estimates) -> &DMatrix<f64>| batch_se(&parts.iter().map(|e| f(e).clone()).collect::<Vec<_>>());
    let t = |a: &DMatrix<f64>, s: Symmetry| Tensor4::from_pair_matrix(m, s, a);

    Ok(EmpiricalCumulants {
        n,
        mode: if pop_gamma.is_some() { EstimatorMode::Oracle } else { EstimatorMode::Sample },
        kappa2_se: se(|e| &e.k2),
        mu: t(&full.mu, Symmetry::Full),
        mu_se: t(&se(|e| &e.mu), Symmetry::None),
        kappa: t(&full.kappa, Symmetry::Full),
        kappa_se: t(&se(|e| &e.kappa), Symmetry::None),
        kcheck: t(&full.kcheck, Symmetry::Pairs),
        kcheck_se: t(&se(|e| &e.kcheck), Symmetry::None),
        kappa2: full.k2,
    })
}

fn check_vectors(p: &DMatrix<f64>, a: &Tensor4, idx: &[usize]) -> Result<()> {
    if p.nrows() != a.m || p.ncols() != a.m {
        return Err(invalid(format!("P is {}x{}, tensor dimension is {}", p.nrows(), p.ncols(), a.m)));
    }
    if let Some(bad) = idx.iter().find(|&&k| k == 0 || k > a.m) {
        return Err(invalid(format!("contraction index {bad} outside 1..={}", a.m)));
    }
    Ok(())
}

/// `[𝒫^{μμ′νν′}, A] = Σ p_{μ,i} p_{μ′,j} p_{ν,i′} p_{ν′,j′} A_{iji′j′}` with
/// 1-based column indices into `P`; direct quadruple sum.
pub fn contract_reference(p: &DMatrix<f64>, mu: usize, mup: usize, nu: usize, nup: usize, a: &Tensor4) -> Result<f64> {
    check_vectors(p, a, &[mu, mup, nu, nup])?;
    let (u, v, w, z) = (p.column(mu - 1), p.column(mup - 1), p.column(nu - 1), p.column(nup - 1));
    let m = a.m;
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    total += u[i] * v[j] * w[k] * z[l] * a.get(i, j, k, l);
                }
            }
        }
    }
    Ok(total)
}

/// `B_{ii′} = Σ_{j,j′} v_j z_{j′} A_{iji′j′}`.
pub fn partial_contract(a: &Tensor4, v: &DVector<f64>, z: &DVector<f64>) -> DMatrix<f64> {
    let m = a.m;
    let mut b = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let vj = v[j];
            if vj == 0.0 {
                continue;
            }
            for k in 0..m {
                let base = a.idx(i, j, k, 0);
                let row = &a.values[base..base + m];
                let s: f64 = row.iter().zip(z.iter()).map(|(x, y)| x * y).sum();
                b[(i, k)] += vj * s;
            }
        }
    }
    b
}

/// Same value as [`contract_reference`], contracting the second and fourth
/// indices first.
pub fn contract(p: &DMatrix<f64>, mu: usize, mup: usize, nu: usize, nup: usize, a: &Tensor4) -> Result<f64> {
    check_vectors(p, a, &[mu, mup, nu, nup])?;
    let b = partial_contract(a, &p.column(mup - 1).into_owned(), &p.column(nup - 1).into_owned());
    Ok((p.column(mu - 1).transpose() * b * p.column(nu - 1))[(0, 0)])
}

/// Matrix of `[𝒫^{kνlν}, A]` over all `k, l` (1-based `nu`).
pub fn contract_all_kl(p: &DMatrix<f64>, nu: usize, a: &Tensor4) -> Result<DMatrix<f64>> {
    check_vectors(p, a, &[nu])?;
    let pv = p.column(nu - 1).into_owned();
    let b = partial_contract(a, &pv, &pv);
    Ok(p.transpose() * b * p)
}
