//! Stored-energy accounting, threshold latching, crack driving force and the
//! Fourier-preconditioned phase-field solve.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{ScalarField, Spectral};

/// `MJ/m^3 * mm` in J/m^2.
pub const MJ_M3_MM_TO_J_M2: f64 = 1e3;

/// Lower bound on the dislocation density (1/mm^2) inside the stored-energy
/// square root.
pub const DENSITY_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseFieldParams {
    /// Regularisation length (um).
    #[serde(default = "default_ell")]
    pub ell: f64,
    /// Critical stored energy density (J/m^2).
    #[serde(default = "default_g_crit")]
    pub g_crit: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    /// Residual stiffness.
    #[serde(default = "default_k_res")]
    pub k_res: f64,
    /// Fraction of plastic work stored in the dislocation structure. Required.
    pub stored_energy_fraction: f64,
}

fn default_ell() -> f64 {
    2.34
}
fn default_g_crit() -> f64 {
    4.0
}
fn default_zeta() -> f64 {
    1.0
}
fn default_k_res() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhaseFieldError {
    #[error("invalid phase-field parameter `{0}`")]
    InvalidParameter(&'static str),
    #[error("phase-field Krylov solve did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
}

impl PhaseFieldParams {
    pub fn new(ell: f64, stored_energy_fraction: f64) -> Self {
        Self { ell, g_crit: default_g_crit(), zeta: default_zeta(), k_res: default_k_res(), stored_energy_fraction }
    }

    pub fn validate(&self) -> Result<(), PhaseFieldError> {
        if !(self.ell > 0.0) {
            return Err(PhaseFieldError::InvalidParameter("ell"));
        }
        if !(self.g_crit > 0.0) {
            return Err(PhaseFieldError::InvalidParameter("g_crit"));
        }
        if !(self.zeta > 0.0) {
            return Err(PhaseFieldError::InvalidParameter("zeta"));
        }
        if !(self.k_res > 0.0 && self.k_res < 1e-2) {
            return Err(PhaseFieldError::InvalidParameter("k_res"));
        }
        if !(self.stored_energy_fraction > 0.0 && self.stored_energy_fraction <= 1.0) {
            return Err(PhaseFieldError::InvalidParameter("stored_energy_fraction"));
        }
        Ok(())
    }
}

/// `g(phi) = (1 - phi)^2 + k`.
#[inline]
pub fn degradation(phi: f64, k_res: f64) -> f64 {
    (1.0 - phi) * (1.0 - phi) + k_res
}

/// Stored energy increment in J/m^2 from a plastic work increment `w`
/// (MJ/m^3) and the total dislocation density (1/mm^2).
#[inline]
pub fn stored_energy_increment(w: f64, rho_total: f64, fraction: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    MJ_M3_MM_TO_J_M2 * fraction * w / rho_total.max(DENSITY_FLOOR).sqrt()
}

/// Latches `W_crit = max We+ + Wp` the first time `gs >= g_crit`.
#[inline]
pub fn latch_wcrit(w_crit: Option<f64>, gs: f64, g_crit: f64, we_plus_max: f64, wp: f64) -> Option<f64> {
    match w_crit {
        Some(w) => Some(w),
        None if gs >= g_crit => Some(we_plus_max + wp),
        None => None,
    }
}

/// `S = zeta <(We+ + Wp)/W_crit - 1>`, zero while unlatched.
#[inline]
pub fn driving_force(we_plus: f64, wp: f64, w_crit: Option<f64>, zeta: f64) -> f64 {
    match w_crit {
        Some(w) if w > 0.0 => zeta * ((we_plus + wp) / w - 1.0).max(0.0),
        _ => 0.0,
    }
}

/// Preconditioned conjugate gradients for
/// `(1 + 2S) phi - l^2 lap(phi) = 2S` with the Fourier preconditioner
/// `[1 + l^2 |xi|^2]^-1`, followed by the clamp `phi_prev <= phi <= 1`.
#[derive(Debug, Clone, Copy)]
pub struct PhaseFieldSolver {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PhaseFieldSolver {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 500 }
    }
}

/// Outcome of a phase-field solve.
#[derive(Debug, Clone)]
pub struct PhaseFieldSolution {
    pub phi: ScalarField,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl PhaseFieldSolver {
    pub fn solve(
        &self,
        spectral: &Spectral,
        s: &[f64],
        phi_prev: &[f64],
        ell: f64,
    ) -> Result<PhaseFieldSolution, PhaseFieldError> {
        let n = s.len();
        let l2 = ell * ell;
        let xi2 = |xi: [f64; 3]| xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        let apply = |x: &[f64]| -> Vec<f64> {
            let lap = spectral.apply_symbol(x, |xi| Complex64::new(l2 * xi2(xi), 0.0));
            x.par_iter().zip(s.par_iter()).zip(lap.par_iter()).map(|((x, s), l)| (1.0 + 2.0 * s) * x + l).collect()
        };
        let precondition = |r: &[f64]| spectral.apply_symbol(r, |xi| Complex64::new(1.0 / (1.0 + l2 * xi2(xi)), 0.0));

        let rhs: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        let rhs_norm = dot(&rhs, &rhs).sqrt();
        if rhs_norm == 0.0 {
            return Ok(PhaseFieldSolution { phi: phi_prev.to_vec(), iterations: 0 });
        }
        // Start from the previous field, clipped to the admissible range.
        let mut x: Vec<f64> = phi_prev.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let ax = apply(&x);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z = precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut iterations = 0;
        let mut res = dot(&r, &r).sqrt();
        while res > self.tolerance * rhs_norm {
            if iterations >= self.max_iterations {
                return Err(PhaseFieldError::NonConvergence { residual: res / rhs_norm, iterations });
            }
            iterations += 1;
            let ap = apply(&p);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            res = dot(&r, &r).sqrt();
            z = precondition(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        let phi = x.iter().zip(phi_prev).map(|(v, prev)| v.max(*prev).min(1.0)).collect();
        Ok(PhaseFieldSolution { phi, iterations })
    }
}
