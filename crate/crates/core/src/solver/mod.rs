//! Global solution: Newton-Krylov equilibrium, staggered coupling with the
//! phase field and time stepping over a cyclic load program.

pub mod driver;
pub mod gmres;
pub mod load;
pub mod mechanics;
pub mod stagger;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crystal::CrystalError;
use crate::phase_field::PhaseFieldError;

pub use driver::{IncrementRecord, RunOutcome, Simulation, StopReason};
pub use load::LoadProgram;
pub use mechanics::{ControlMask, Evaluation, MaterialLayout, Mechanics, NewtonReport, Phase};
pub use stagger::{IncrementResult, StaggerReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Staggered relative tolerance.
    pub tol_stag: f64,
    /// Krylov relative tolerance.
    pub tol_lin: f64,
    /// Newton criterion constant on `|grad du|_inf / |F_i - F_t|_inf`.
    pub tol_newton: f64,
    /// Absolute Newton criterion used when the increment is zero.
    pub newton_abs: f64,
    /// Relative bound on mean stress in the free (mixed-control) components.
    pub tol_mixed: f64,
    pub max_newton: usize,
    pub max_stag: usize,
    pub max_krylov: usize,
    pub krylov_restart: usize,
    pub max_line_search: usize,
    /// Increments per quarter cycle at the nominal step size.
    pub increments_per_quarter: usize,
    /// Smallest allowed step as a fraction of the nominal step.
    pub min_step_fraction: f64,
    /// Clean steps after which a reduced step is doubled again.
    pub redouble_after: usize,
    /// Phase-field Krylov relative tolerance.
    pub tol_phase_field: f64,
    pub max_phase_field: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_stag: 5e-3,
            tol_lin: 1e-5,
            tol_newton: 5e-3,
            newton_abs: 1e-8,
            tol_mixed: 1e-7,
            max_newton: 25,
            max_stag: 30,
            max_krylov: 600,
            krylov_restart: 60,
            max_line_search: 8,
            increments_per_quarter: 20,
            min_step_fraction: 1.0 / 256.0,
            redouble_after: 3,
            tol_phase_field: 1e-10,
            max_phase_field: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("solver setting `{0}` is out of range")]
    OutOfRange(&'static str),
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = [
            ("tol_stag", self.tol_stag),
            ("tol_lin", self.tol_lin),
            ("tol_newton", self.tol_newton),
            ("tol_mixed", self.tol_mixed),
            ("tol_phase_field", self.tol_phase_field),
            ("min_step_fraction", self.min_step_fraction),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(ConfigError::OutOfRange(name));
            }
        }
        if !(self.newton_abs > 0.0) {
            return Err(ConfigError::OutOfRange("newton_abs"));
        }
        let caps = [
            ("max_newton", self.max_newton),
            ("max_stag", self.max_stag),
            ("max_krylov", self.max_krylov),
            ("krylov_restart", self.krylov_restart),
            ("max_line_search", self.max_line_search),
            ("increments_per_quarter", self.increments_per_quarter),
            ("max_phase_field", self.max_phase_field),
        ];
        for (name, v) in caps {
            if v < 1 {
                return Err(ConfigError::OutOfRange(name));
            }
        }
        Ok(())
    }
}

/// Failure of a time increment. All variants except `MinimumStep` are
/// recovered by cutting the step.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("constitutive update failed at voxel {voxel}: {source}")]
    Constitutive { voxel: usize, source: CrystalError },
    #[error("Krylov solver stopped after {iterations} iterations at relative residual {residual:.3e}")]
    Krylov { iterations: usize, residual: f64 },
    #[error("Newton iteration did not converge in {iterations} iterations")]
    Newton { iterations: usize },
    #[error("line search could not reduce the residual ({residual:.3e})")]
    LineSearch { residual: f64 },
    #[error("staggered iteration did not converge in {passes} passes")]
    Stagger { passes: usize },
    #[error(transparent)]
    PhaseField(#[from] PhaseFieldError),
    #[error("time step fell below the minimum ({dt:.3e} s) at t = {time:.4} s: {cause}")]
    MinimumStep { dt: f64, time: f64, cause: Box<SolverError> },
}
