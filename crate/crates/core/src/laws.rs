//! Marchenko–Pastur and companion laws, the companion Stieltjes transform,
//! and the spike maps `ρ(ℓ, γ)`, `ρ̇(ℓ, γ)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, invalid, Error, Result};
use crate::quadrature;

/// Absolute tolerance for integrals against the continuous part of a law.
pub const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_INTERVALS: usize = 4000;

/// Limiting and finite-sample aspect ratios `p/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectRatio {
    pub gamma: f64,
    pub gamma_n: f64,
}

impl AspectRatio {
    pub fn new(gamma: f64, gamma_n: f64) -> Result<Self> {
        check_gamma(gamma)?;
        check_gamma(gamma_n)?;
        Ok(Self { gamma, gamma_n })
    }

    /// Uses `p/n` for both the limit and the finite-sample ratio.
    pub fn from_dims(p: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let g = p as f64 / n as f64;
        Self::new(g, g)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("aspect ratio must be positive and finite, got {gamma}")))
    }
}

/// Support edges `((1-√γ)², (1+√γ)²)` of the Marchenko–Pastur law.
pub fn mp_edges(gamma: f64) -> Result<(f64, f64)> {
    check_gamma(gamma)?;
    let s = gamma.sqrt();
    Ok(((1.0 - s).powi(2), (1.0 + s).powi(2)))
}

/// Density of the continuous part of the MP law `F_γ`; zero off `[a, b]`.
pub fn mp_density(x: f64, gamma: f64) -> Result<f64> {
    let (a, b) = mp_edges(gamma)?;
    if x <= a || x >= b || x <= 0.0 {
        return Ok(0.0);
    }
    Ok(((b - x) * (x - a)).sqrt() / (2.0 * PI * gamma * x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawKind {
    MarchenkoPastur,
    Companion,
}

/// A Marchenko–Pastur law `F_γ` or its companion `𝖥_γ = (1-γ)·δ₀ + γ·F_γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLaw {
    pub kind: LawKind,
    pub gamma: f64,
    pub a_edge: f64,
    pub b_edge: f64,
    pub atom_at_zero: f64,
    /// Factor applied to the MP density on `[a, b]`.
    continuous_weight: f64,
}

impl SpectralLaw {
    pub fn marchenko_pastur(gamma: f64) -> Result<Self> {
        let (a, b) = mp_edges(gamma)?;
        Ok(Self {
            kind: LawKind::MarchenkoPastur,
            gamma,
            a_edge: a,
            b_edge: b,
            atom_at_zero: (1.0 - 1.0 / gamma).max(0.0),
            continuous_weight: 1.0,
        })
    }

    pub fn companion(gamma: f64) -> Result<Self> {
        let (a, b) = mp_edges(gamma)?;
        Ok(Self {
            kind: LawKind::Companion,
            gamma,
            a_edge: a,
            b_edge: b,
            atom_at_zero: (1.0 - gamma).max(0.0),
            continuous_weight: gamma,
        })
    }

    /// Density of the absolutely continuous part at `x`.
    pub fn density(&self, x: f64) -> f64 {
        self.continuous_weight * mp_density(x, self.gamma).unwrap_or(0.0)
    }

    /// Whether `t` lies in the support (continuous part or atom).
    pub fn in_support(&self, t: f64) -> bool {
        (t >= self.a_edge && t <= self.b_edge) || (self.atom_at_zero > 0.0 && t == 0.0)
    }

    /// `∫ f dF`, atom included. The continuous part is integrated in the
    /// variable `θ` with `x = (a+b)/2 + (b-a)/2·sin θ`, which cancels the
    /// square-root behaviour of the density at both edges.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        Ok(self.integrate_with_error(f)?.0)
    }

    pub fn integrate_with_error<F: Fn(f64) -> f64>(&self, f: F) -> Result<(f64, f64)> {
        let (a, b) = (self.a_edge, self.b_edge);
        let half = 0.5 * (b - a);
        let scale = self.continuous_weight * half * half / (2.0 * PI * self.gamma);
        let integrand = |theta: f64| {
            let (s, c) = theta.sin_cos();
            let c2 = c * c;
            // Distance to the nearer edge, computed without cancellation.
            let x = if s < 0.0 { a + half * c2 / (1.0 - s) } else { b - half * c2 / (1.0 + s) };
            f(x) * scale * c2 / x
        };
        let q = quadrature::integrate(integrand, -0.5 * PI, 0.5 * PI, QUAD_TOL, QUAD_MAX_INTERVALS)?;
        let atom = if self.atom_at_zero > 0.0 { self.atom_at_zero * f(0.0) } else { 0.0 };
        Ok((atom + q.value, q.abs_error))
    }
}

/// `∫ f d𝖥_γ` for the companion law.
pub fn companion_integrate<F: Fn(f64) -> f64>(f: F, gamma: f64) -> Result<f64> {
    SpectralLaw::companion(gamma)?.integrate(f)
}

/// Stieltjes transform `𝗆(t; γ) = ∫ (x - t)⁻¹ 𝖥_γ(dx)` of the companion law,
/// for real `t` off the support.
///
/// `𝗆` is the root of `t𝗆² + (t + 1 - γ)𝗆 + 1 = 0` continuous from `t → ∞`
/// where `𝗆 ~ -1/t`: the square root `√((t-a)(t-b))` is taken positive above
/// the support and negative below it.
pub fn stieltjes_m(t: f64, gamma: f64) -> Result<f64> {
    let law = SpectralLaw::companion(gamma)?;
    if !t.is_finite() || t == 0.0 || law.in_support(t) {
        return Err(domain(format!(
            "t = {t} is not outside the support of the companion law (γ = {gamma}, support [{}, {}])",
            law.a_edge, law.b_edge
        )));
    }
    let m = stieltjes_closed_form(t, gamma, law.a_edge, law.b_edge);
    #[cfg(debug_assertions)]
    {
        let gap = (t - law.b_edge).abs().min((t - law.a_edge).abs());
        if gap > 1e-2 {
            if let Ok(q) = law.integrate(|x| 1.0 / (x - t)) {
                debug_assert!(
                    (q - m).abs() <= 1e-6 * (1.0 + m.abs()),
                    "Stieltjes branch mismatch at t={t}, γ={gamma}: closed {m} vs quadrature {q}"
                );
            }
        }
    }
    Ok(m)
}

fn stieltjes_closed_form(t: f64, gamma: f64, a: f64, b: f64) -> f64 {
    let branch = if t > b { 1.0 } else { -1.0 };
    let disc = ((t - a) * (t - b)).sqrt();
    let lin = t + 1.0 - gamma;
    // Root (-lin + branch·disc)/(2t); when that sum cancels, recover it from
    // the product of roots 1/t.
    if branch * lin <= 0.0 {
        (-lin + branch * disc) / (2.0 * t)
    } else {
        let other = (-lin - branch * disc) / (2.0 * t);
        1.0 / (t * other)
    }
}

/// `c(t) = ∫ x (t - x)⁻² 𝖥_γ(dx)` for `t` above the support.
///
/// Evaluated as `d(t𝗆)/dt = 𝗆 + t𝗆'` with `𝗆'` from the quadratic.
pub fn c_integral(t: f64, gamma: f64) -> Result<f64> {
    let (_, b) = mp_edges(gamma)?;
    if !(t > b) || !t.is_finite() {
        return Err(domain(format!("c(t) requires t > b_γ = {b}, got t = {t}")));
    }
    let m = stieltjes_m(t, gamma)?;
    let dm = -(m * m + m) / (2.0 * t * m + t + 1.0 - gamma);
    Ok(m + t * dm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpikeClass {
    Supercritical,
    Critical,
    Subcritical,
}

/// Phase transition location `1 + √γ`.
pub fn critical_spike(gamma: f64) -> f64 {
    1.0 + gamma.sqrt()
}

/// Default tolerance for calling a spike critical: `1e-9·(1 + √γ)`.
pub fn default_critical_tol(gamma: f64) -> f64 {
    1e-9 * critical_spike(gamma)
}

pub fn classify_spike(ell: f64, gamma: f64, tol: f64) -> Result<SpikeClass> {
    check_gamma(gamma)?;
    if !(ell > 1.0) || !ell.is_finite() {
        return Err(invalid(format!("spike ℓ = {ell} must exceed 1")));
    }
    let edge = critical_spike(gamma);
    Ok(if (ell - edge).abs() <= tol {
        SpikeClass::Critical
    } else if ell > edge {
        SpikeClass::Supercritical
    } else {
        SpikeClass::Subcritical
    })
}

fn require_supercritical(ell: f64, gamma: f64) -> Result<()> {
    check_gamma(gamma)?;
    let edge = critical_spike(gamma);
    if ell > edge && ell.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "spike ℓ = {ell} is not supercritical (phase transition 1+√γ = {edge})"
        )))
    }
}

/// Almost-sure limit `ρ(ℓ, γ) = ℓ + γℓ/(ℓ-1)` of a supercritical sample spike.
pub fn rho(ell: f64, gamma: f64) -> Result<f64> {
    require_supercritical(ell, gamma)?;
    Ok(ell + gamma * ell / (ell - 1.0))
}

/// `∂ρ/∂ℓ = 1 - γ/(ℓ-1)²`, in `(0, 1)` on the supercritical range.
pub fn rho_dot(ell: f64, gamma: f64) -> Result<f64> {
    require_supercritical(ell, gamma)?;
    Ok(1.0 - gamma / (ell - 1.0).powi(2))
}

/// Limits `((1+√γ)², 0)` of a subcritical spike eigenvalue and squared projection.
pub fn subcritical_limits(gamma: f64) -> Result<(f64, f64)> {
    check_gamma(gamma)?;
    Ok((critical_spike(gamma).powi(2), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges() {
        assert_eq!(mp_edges(0.25).unwrap(), (0.25, 2.25));
        assert_eq!(mp_edges(1.0).unwrap(), (0.0, 4.0));
        assert_eq!(mp_edges(4.0).unwrap(), (1.0, 9.0));
        assert!(matches!(mp_edges(0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(mp_edges(-1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn atoms() {
        assert_eq!(SpectralLaw::marchenko_pastur(4.0).unwrap().atom_at_zero, 0.75);
        assert_eq!(SpectralLaw::marchenko_pastur(0.5).unwrap().atom_at_zero, 0.0);
        assert_eq!(SpectralLaw::companion(0.5).unwrap().atom_at_zero, 0.5);
        assert_eq!(SpectralLaw::companion(4.0).unwrap().atom_at_zero, 0.0);
    }

    #[test]
    fn total_mass_is_one() {
        for &g in &[0.01, 0.1, 0.5, 1.0, 2.0, 4.0, 25.0] {
            let c = companion_integrate(|_| 1.0, g).unwrap();
            assert!((c - 1.0).abs() < 1e-9, "γ={g}: {c}");
            let mp = SpectralLaw::marchenko_pastur(g).unwrap().integrate(|_| 1.0).unwrap();
            assert!((mp - 1.0).abs() < 1e-9, "γ={g}: {mp}");
        }
    }

    #[test]
    fn companion_mean() {
        let v = companion_integrate(|x| x, 0.5).unwrap();
        assert!((v - 0.5).abs() < 1e-10);
    }

    #[test]
    fn companion_resolvent_at_spike_limit() {
        let r = rho(3.0, 1.0).unwrap();
        let v = companion_integrate(|x| r / (r - x), 1.0).unwrap();
        assert!((v - 1.5).abs() < 1e-10, "{v}");
    }

    #[test]
    fn stieltjes_at_spike_limits() {
        assert!((stieltjes_m(4.5, 1.0).unwrap() + 1.0 / 3.0).abs() < 1e-14);
        assert!((stieltjes_m(2.5, 0.25).unwrap() + 0.5).abs() < 1e-14);
        let far = stieltjes_m(1e12, 0.7).unwrap();
        assert!(far < 0.0 && far > -2e-12);
    }

    #[test]
    fn stieltjes_rejects_support() {
        assert!(matches!(stieltjes_m(1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(stieltjes_m(0.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(stieltjes_m(2.25, 0.25), Err(Error::Domain(_))));
    }

    #[test]
    fn stieltjes_below_support() {
        // γ < 1: between the atom at zero and the bulk; γ > 1: below the bulk; t < 0.
        for &(t, g) in &[(0.05, 0.5), (0.5, 4.0), (-1.0, 0.5), (-3.0, 2.0), (-0.5, 1.0)] {
            let closed = stieltjes_m(t, g).unwrap();
            let quad = companion_integrate(|x| 1.0 / (x - t), g).unwrap();
            assert!((closed - quad).abs() < 1e-8, "t={t} γ={g}: {closed} vs {quad}");
        }
    }

    #[test]
    fn c_values() {
        let c = c_integral(4.5, 1.0).unwrap();
        assert!((c - 1.0 / 3.0).abs() < 1e-13, "{c}");
        let quad = companion_integrate(|x| x / (4.5 - x).powi(2), 1.0).unwrap();
        assert!((c - quad).abs() < 1e-9);
        assert!(matches!(c_integral(4.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn c_vanishes_linearly_in_gamma() {
        // F_γ concentrates at 1 as γ → 0, so c(t) ≈ γ/(t-1)².
        for &g in &[1e-4, 1e-6, 1e-8] {
            let c = c_integral(3.0, g).unwrap();
            let approx = g / 4.0;
            assert!((c / approx - 1.0).abs() < 10.0 * g + 1e-6, "γ={g}: {c}");
        }
    }

    #[test]
    fn c_diverges_at_edge() {
        let b = mp_edges(1.0).unwrap().1;
        let mut last = 0.0;
        for k in 1..8 {
            let c = c_integral(b + 10f64.powi(-k), 1.0).unwrap();
            assert!(c > last);
            last = c;
        }
        assert!(last > 100.0);
    }

    #[test]
    fn spike_maps() {
        assert_eq!(rho(3.0, 1.0).unwrap(), 4.5);
        assert_eq!(rho_dot(3.0, 1.0).unwrap(), 0.75);
        assert!((rho(9.1, 0.5).unwrap() - 9.661_728_395).abs() < 1e-6);
        assert!((rho_dot(9.1, 0.5).unwrap() - 0.992_379_21).abs() < 1e-6);
        let near = rho_dot(1.0 + 0.5f64.sqrt() + 1e-9, 0.5).unwrap();
        assert!(near > 0.0 && near < 1e-8);
        assert!(matches!(rho(1.5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(rho_dot(2.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn classification() {
        let tol = 1e-9;
        assert_eq!(classify_spike(3.0, 1.0, tol).unwrap(), SpikeClass::Supercritical);
        assert_eq!(classify_spike(2.0, 1.0, tol).unwrap(), SpikeClass::Critical);
        assert_eq!(classify_spike(1.5, 1.0, tol).unwrap(), SpikeClass::Subcritical);
        assert!(matches!(classify_spike(1.0, 1.0, tol), Err(Error::InvalidArgument(_))));
        assert!(matches!(classify_spike(0.3, 1.0, tol), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn subcritical() {
        assert_eq!(subcritical_limits(1.0).unwrap(), (4.0, 0.0));
        assert_eq!(subcritical_limits(0.25).unwrap(), (2.25, 0.0));
        assert_eq!(subcritical_limits(4.0).unwrap(), (9.0, 0.0));
    }
}
