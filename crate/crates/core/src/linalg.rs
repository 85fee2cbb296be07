//! Symmetric eigen-decompositions with deterministic ordering and signs, and a
//! Lanczos solver for the leading eigenpairs of large symmetric matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Eigenpairs sorted by descending eigenvalue; column `i` of `vectors`
/// belongs to `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Full symmetric eigen-decomposition, descending. Equal eigenvalues keep the
/// solver's original order.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> Result<SortedEigen> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidArgument(format!(
            "matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure {
            message: "non-finite entry in symmetric eigenproblem".into(),
            residual: f64::NAN,
        });
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0).ok_or_else(|| {
        Error::NumericalFailure { message: "symmetric eigensolver did not converge".into(), residual: f64::NAN }
    })?;
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SortedEigen { values, vectors })
}

/// Flips each column so that its largest-magnitude entry is positive
/// (lowest index wins among equal magnitudes).
pub fn normalize_column_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Largest dimension solved densely regardless of how many pairs are requested.
pub const DENSE_MAX_DIM: usize = 96;
const LANCZOS_SEED: u64 = 0x1a2c_705d_5eed;

/// The `k` largest eigenpairs of a symmetric matrix, descending.
///
/// Small problems, or requests for a large share of the spectrum, use the
/// dense solver. Otherwise Lanczos with full reorthogonalisation is run from a
/// fixed pseudo-random start until every requested Ritz pair has residual
/// below `1e-12·‖A‖`.
pub fn top_eigenpairs(a: &DMatrix<f64>, k: usize) -> Result<SortedEigen> {
    let d = a.nrows();
    if d != a.ncols() {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("cannot extract {k} eigenpairs of a {d}x{d} matrix")));
    }
    if d <= DENSE_MAX_DIM || 4 * k + 40 >= d {
        return dense_top(a, k);
    }
    match lanczos_top(a, k)? {
        Some(e) => Ok(e),
        None => dense_top(a, k),
    }
}

fn dense_top(a: &DMatrix<f64>, k: usize) -> Result<SortedEigen> {
    let full = sym_eigen_desc(a)?;
    Ok(SortedEigen { values: full.values[..k].to_vec(), vectors: full.vectors.columns(0, k).into_owned() })
}

/// Returns `None` when the Krylov space collapses before `k` pairs are found
/// (e.g. repeated leading eigenvalues); the caller then solves densely.
fn lanczos_top(a: &DMatrix<f64>, k: usize) -> Result<Option<SortedEigen>> {
    let d = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * d as f64;
    if scale == 0.0 {
        return Ok(None);
    }
    let tol = 1e-12 * scale.min(a.norm());

    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let mut q = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5);
    q /= q.norm();

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(4 * k + 60);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = DVector::zeros(d);
    let min_steps = (2 * k + 20).min(d);

    loop {
        w.gemv(1.0, a, &q, 0.0);
        let aj = q.dot(&w);
        basis.push(q.clone());
        alpha.push(aj);
        // Two passes of classical Gram–Schmidt against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let bj = w.norm();
        let steps = basis.len();
        let collapsed = bj <= 1e-10 * scale.min(a.norm()).max(f64::MIN_POSITIVE);
        let check = collapsed || steps == d || (steps >= min_steps && steps % 10 == 0);
        if check {
            let t = DMatrix::from_fn(steps, steps, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let ritz = sym_eigen_desc(&t)?;
            // A collapsed Krylov space holds one copy of each eigenvalue it
            // reached, so it may miss multiplicities among the leading pairs.
            if steps >= k && (!collapsed || steps == d) {
                let converged = (0..k).all(|i| (bj * ritz.vectors[(steps - 1, i)]).abs() <= tol);
                if converged || steps == d {
                    let mut vectors = DMatrix::zeros(d, k);
                    for i in 0..k {
                        let mut col = vectors.column_mut(i);
                        for (j, b) in basis.iter().enumerate() {
                            col.axpy(ritz.vectors[(j, i)], b, 1.0);
                        }
                        let nrm = col.norm();
                        col /= nrm;
                    }
                    return Ok(Some(SortedEigen { values: ritz.values[..k].to_vec(), vectors }));
                }
            }
            if collapsed {
                return Ok(None);
            }
        }
        beta.push(bj);
        q = &w / bj;
    }
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    let e = sym_eigen_desc(a)?;
    Ok(e.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// `‖AV - VΛ‖_max` for the given eigenpairs.
pub fn eigen_residual(a: &DMatrix<f64>, e: &SortedEigen) -> f64 {
    let av = a * &e.vectors;
    let mut worst = 0.0f64;
    for (c, &lam) in e.values.iter().enumerate() {
        for r in 0..a.nrows() {
            worst = worst.max((av[(r, c)] - lam * e.vectors[(r, c)]).abs());
        }
    }
    worst
}
