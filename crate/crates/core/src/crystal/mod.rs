//! Finite-strain, dislocation-based crystal plasticity at a material point.
//!
//! Kinematics: `F = Fe Fp`, `Lp = sum_i gdot_i s_i (x) n_i`. Elasticity is
//! cubic and acts on the logarithmic elastic strain `E = 1/2 ln(Fe^T Fe)`
//! through the Mandel stress `M = C : E`; the first Piola-Kirchhoff stress is
//! `P = Fe^-T M Fp^-T`. Slip increments are integrated implicitly with an
//! exponential update `Fp_{n+1} = exp(dt Lp) Fp_n`.

mod params;
mod slip;

pub use params::{CrystalParams, ParamError, MPA_MM3_TO_J};
pub use slip::{SlipSystem, SlipSystemSet, N_SLIP};

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::tensor::{ddot, expm_with_derivatives, flatten, unflatten, Mat3, SymLog, Tensor4, Vec9};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrystalError {
    #[error("slip rate argument {arg:.3e} exceeds the cap; reduce the time step")]
    StepSize { arg: f64 },
    #[error("local slip iteration did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },
    #[error("invalid kinematic state: det = {det:.3e}")]
    InvalidState { det: f64 },
}

/// Internal variables of one voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialPointState {
    pub fp: Mat3,
    pub gamma: [f64; N_SLIP],
    /// Sum of absolute slip increments over all systems.
    pub accumulated_slip: f64,
    /// Statistically stored dislocation density (1/mm^2).
    pub rho_ssd: f64,
    /// Geometrically necessary dislocation density (1/mm^2), set externally.
    pub rho_gnd: f64,
    /// Accumulated plastic work density (MJ/m^3).
    pub wp: f64,
    /// Historical maximum of the tensile elastic energy density (MJ/m^3).
    pub we_plus_max: f64,
    /// Stored energy density (J/m^2).
    pub gs: f64,
    /// Latched threshold energy (MJ/m^3); `None` until `gs` reaches its critical value.
    pub w_crit: Option<f64>,
}

impl Default for MaterialPointState {
    fn default() -> Self {
        Self {
            fp: Mat3::identity(),
            gamma: [0.0; N_SLIP],
            accumulated_slip: 0.0,
            rho_ssd: 0.0,
            rho_gnd: 0.0,
            wp: 0.0,
            we_plus_max: 0.0,
            gs: 0.0,
            w_crit: None,
        }
    }
}

/// Per-orientation data shared by all voxels of a grain.
#[derive(Debug, Clone)]
pub struct GrainKernel {
    pub rotation: Mat3,
    pub systems: SlipSystemSet,
    /// Sample-frame stiffness (MPa).
    pub stiffness: Tensor4,
    schmid: [Mat3; N_SLIP],
    /// `C : (s_i (x) n_i)` as matrices, so that `tau_i = Q_i : E`.
    projected: [Mat3; N_SLIP],
}

impl GrainKernel {
    pub fn new(params: &CrystalParams, rotation: Mat3) -> Self {
        let systems = SlipSystemSet::fcc().rotated(&rotation);
        let stiffness = crate::tensor::rotate4(&params.stiffness(), &rotation);
        let schmid = systems.systems.map(|s| s.schmid());
        let projected = schmid.map(|s| unflatten(&(stiffness.transpose() * flatten(&s))));
        Self { rotation, systems, stiffness, schmid, projected }
    }
}

/// Result of a constitutive update.
#[derive(Debug, Clone)]
pub struct PointResponse {
    /// First Piola-Kirchhoff stress (MPa), undegraded.
    pub p: Mat3,
    pub state: MaterialPointState,
    /// Plastic work increment `sigma : d eps_p` (MJ/m^3).
    pub plastic_work: f64,
    pub we_plus: f64,
    pub we_minus: f64,
    pub tangent: Option<Tensor4>,
    pub active_systems: usize,
}

/// Resolved shear stress of `stress` on a slip system.
pub fn resolved_shear_stress(stress: &Mat3, system: &SlipSystem) -> f64 {
    ddot(stress, &system.schmid())
}

/// Thermally activated slip rate with the sub-threshold clamp.
pub fn slip_rate(tau: f64, tau_c: f64, params: &CrystalParams) -> Result<f64, CrystalError> {
    let over = tau.abs() - tau_c;
    if over <= 0.0 {
        return Ok(0.0);
    }
    let arg = over * params.stress_sensitivity();
    if arg > params.sinh_cap {
        return Err(CrystalError::StepSize { arg });
    }
    Ok(params.rate_prefactor() * arg.sinh() * tau.signum())
}

/// Taylor hardening: `tau_c0 + mu b sqrt(rho_ssd + rho_gnd)`.
pub fn update_crss(rho_ssd: f64, rho_gnd: f64, params: &CrystalParams) -> f64 {
    params.tau_c0 + params.taylor_modulus() * params.burgers * (rho_ssd + rho_gnd).max(0.0).sqrt()
}

/// SSD accumulation rate `lambda sqrt(2/3 Lp : Lp)`.
pub fn ssd_rate(lp: &Mat3, params: &CrystalParams) -> f64 {
    params.hardening * (2.0 / 3.0 * ddot(lp, lp)).sqrt()
}

/// Tensile/compressive split of the elastic energy computed on the
/// logarithmic elastic strain, `W+ = E+ : C : E+`, `W- = E : C : E - W+`.
///
/// The strain is evaluated in the lattice (intermediate) frame, which gives
/// the same eigenvalues and energies as the spatial strain `1/2 ln(Fe Fe^T)`
/// with the stiffness rotated along.
pub fn elastic_energy_split(fe: &Mat3, stiffness: &Tensor4) -> (f64, f64) {
    match SymLog::new(&(fe.transpose() * fe)) {
        Some(sl) => split_from_log(&sl, stiffness),
        None => (0.0, 0.0),
    }
}

fn split_from_log(sl: &SymLog, stiffness: &Tensor4) -> (f64, f64) {
    let e = flatten(&sl.map_values(|v| 0.5 * v.ln()));
    let e_plus = flatten(&sl.map_values(|v| (0.5 * v.ln()).max(0.0)));
    let total = e.dot(&(stiffness * e));
    let plus = e_plus.dot(&(stiffness * e_plus));
    (plus, total - plus)
}

/// Largest slip change allowed in a single local Newton update.
const MAX_SLIP_INCREMENT: f64 = 0.01;

/// Settings of the local Newton iteration.
#[derive(Debug, Clone, Copy)]
pub struct LocalSolver {
    pub max_iterations: usize,
    pub max_active_set_changes: usize,
    /// Absolute residual tolerance on the slip equations (MPa).
    pub tolerance: f64,
}

impl Default for LocalSolver {
    fn default() -> Self {
        Self { max_iterations: 40, max_active_set_changes: 24, tolerance: 1e-9 }
    }
}

/// Crystal plasticity model with derived constants.
#[derive(Debug, Clone)]
pub struct CrystalModel {
    pub params: CrystalParams,
    pub local: LocalSolver,
    prefactor: f64,
    sensitivity: f64,
}

struct Kinematics {
    h: Mat3,
    dh: Vec<Mat3>,
    fe: Mat3,
    log: SymLog,
    mandel: Mat3,
    tau: [f64; N_SLIP],
    dl: Mat3,
}

struct SlipSolution {
    dgamma: [f64; N_SLIP],
    active: Vec<usize>,
    signs: [f64; N_SLIP],
    kin: Kinematics,
    jac: DMatrix<f64>,
    z_mats: Vec<Mat3>,
}

/// Inactive system with the largest resolved shear stress above `tau_c`.
fn most_overstressed(tau: &[f64; N_SLIP], tau_c: f64, active: &[usize]) -> Option<usize> {
    (0..N_SLIP)
        .filter(|i| !active.contains(i) && tau[*i].abs() > tau_c)
        .max_by(|&i, &j| tau[i].abs().total_cmp(&tau[j].abs()))
}

impl CrystalModel {
    pub fn new(params: CrystalParams) -> Self {
        let prefactor = params.rate_prefactor();
        let sensitivity = params.stress_sensitivity();
        Self { params, local: LocalSolver::default(), prefactor, sensitivity }
    }

    pub fn kernel(&self, rotation: Mat3) -> GrainKernel {
        GrainKernel::new(&self.params, rotation)
    }

    fn crss_and_slope(&self, prev: &MaterialPointState, dl: &Mat3, grain: &GrainKernel, active: &[usize]) -> (f64, Vec<f64>) {
        let p = &self.params;
        let norm = dl.norm();
        let coeff = p.hardening * (2.0f64 / 3.0).sqrt();
        let rho = prev.rho_ssd + coeff * norm + prev.rho_gnd;
        let tau_c = update_crss(prev.rho_ssd + coeff * norm, prev.rho_gnd, p);
        let slopes = if norm > 0.0 && rho > 0.0 {
            let dtau_drho = p.taylor_modulus() * p.burgers / (2.0 * rho.sqrt());
            active
                .iter()
                .map(|&j| dtau_drho * coeff * ddot(dl, &grain.schmid[j]) / norm)
                .collect()
        } else {
            vec![0.0; active.len()]
        };
        (tau_c, slopes)
    }

    fn kinematics(
        &self,
        a: &Mat3,
        dgamma: &[f64; N_SLIP],
        grain: &GrainKernel,
        active: &[usize],
    ) -> Result<Kinematics, CrystalError> {
        let mut dl = Mat3::zeros();
        for (g, s) in dgamma.iter().zip(&grain.schmid) {
            if *g != 0.0 {
                dl += s * *g;
            }
        }
        let dirs: Vec<Mat3> = active.iter().map(|&j| -grain.schmid[j]).collect();
        let (h, dh) = expm_with_derivatives(&(-dl), &dirs);
        let fe = a * h;
        let det = fe.determinant();
        if !(det > 0.0) {
            return Err(CrystalError::InvalidState { det });
        }
        let log = SymLog::new(&(fe.transpose() * fe)).ok_or(CrystalError::InvalidState { det })?;
        let e = log.map_values(|v| 0.5 * v.ln());
        let mandel = unflatten(&(grain.stiffness * flatten(&e)));
        let tau = std::array::from_fn(|i| ddot(&grain.projected[i], &e));
        Ok(Kinematics { h, dh, fe, log, mandel, tau, dl })
    }

    /// Implicit slip increments for the trial kinematics `a = F Fp_n^-1`.
    /// With `progressive` the active set grows one system at a time, most
    /// overstressed first; otherwise every overstressed system starts active.
    fn solve_slip(
        &self,
        a: &Mat3,
        prev: &MaterialPointState,
        grain: &GrainKernel,
        rate_scale: f64,
        inv_sens: f64,
        progressive: bool,
    ) -> Result<SlipSolution, CrystalError> {
        let mut dgamma = [0.0; N_SLIP];
        let mut active: Vec<usize> = Vec::new();
        let mut signs = [0.0; N_SLIP];

        let mut kin = self.kinematics(a, &dgamma, grain, &active)?;
        let (tau_c0, _) = self.crss_and_slope(prev, &kin.dl, grain, &active);
        if progressive {
            if let Some(i) = most_overstressed(&kin.tau, tau_c0, &active) {
                active.push(i);
                signs[i] = kin.tau[i].signum();
            }
        } else {
            for i in 0..N_SLIP {
                if kin.tau[i].abs() > tau_c0 {
                    active.push(i);
                    signs[i] = kin.tau[i].signum();
                }
            }
        }

        let mut jac = DMatrix::<f64>::zeros(0, 0);
        let mut z_mats: Vec<Mat3> = Vec::new();
        if !active.is_empty() {
            let mut rounds = 0;
            loop {
                kin = self.kinematics(a, &dgamma, grain, &active)?;
                let mut converged = false;
                let mut last_res = f64::INFINITY;
                let residual = |kin: &Kinematics, dgamma: &[f64; N_SLIP], active: &[usize]| {
                    let (tau_c, slopes) = self.crss_and_slope(prev, &kin.dl, grain, active);
                    let r = DVector::<f64>::from_iterator(
                        active.len(),
                        active.iter().map(|&i| {
                            signs[i] * kin.tau[i] - tau_c - inv_sens * (signs[i] * dgamma[i] / rate_scale).asinh()
                        }),
                    );
                    (r, tau_c, slopes)
                };
                let (mut r, mut tau_c, mut slopes) = residual(&kin, &dgamma, &active);
                for _ in 0..self.local.max_iterations {
                    let na = active.len();
                    last_res = r.amax();
                    // Jacobian rows from dtau_i/dFe = 2 Fe G_i.
                    z_mats = active
                        .iter()
                        .map(|&i| 2.0 * kin.fe * (0.5 * kin.log.derivative_adjoint(&grain.projected[i])))
                        .collect();
                    jac = DMatrix::<f64>::zeros(na, na);
                    for (row, &i) in active.iter().enumerate() {
                        let at_z = a.transpose() * z_mats[row];
                        for col in 0..na {
                            jac[(row, col)] = signs[i] * ddot(&at_z, &kin.dh[col]) - slopes[col];
                        }
                        jac[(row, row)] -= signs[i] * inv_sens / (rate_scale * rate_scale + dgamma[i] * dgamma[i]).sqrt();
                    }
                    if last_res <= self.local.tolerance * (1.0 + tau_c) {
                        converged = true;
                        break;
                    }
                    let mut step = jac.clone().lu().solve(&(-&r)).ok_or(CrystalError::NonConvergence { residual: last_res })?;
                    let biggest = step.amax();
                    if biggest > MAX_SLIP_INCREMENT {
                        step *= MAX_SLIP_INCREMENT / biggest;
                    }
                    // Backtracking on the residual norm.
                    let merit = r.norm_squared();
                    let mut alpha = 1.0;
                    let mut accepted = false;
                    for _ in 0..30 {
                        let mut trial = dgamma;
                        for (row, &i) in active.iter().enumerate() {
                            trial[i] += alpha * step[row];
                        }
                        if let Ok(k) = self.kinematics(a, &trial, grain, &active) {
                            let (rt, tc, sl) = residual(&k, &trial, &active);
                            if rt.norm_squared() < (1.0 - 1e-4 * alpha) * merit {
                                dgamma = trial;
                                kin = k;
                                r = rt;
                                tau_c = tc;
                                slopes = sl;
                                accepted = true;
                                break;
                            }
                        }
                        alpha *= 0.5;
                    }
                    if !accepted {
                        break;
                    }
                }
                if !converged {
                    return Err(CrystalError::NonConvergence { residual: last_res });
                }
                // Active set check.
                let (tau_c, _) = self.crss_and_slope(prev, &kin.dl, grain, &active);
                let mut changed = false;
                let before = active.clone();
                active.retain(|&i| {
                    if signs[i] * dgamma[i] < 0.0 {
                        dgamma[i] = 0.0;
                        changed = true;
                        false
                    } else {
                        true
                    }
                });
                if progressive {
                    if let Some(i) = most_overstressed(&kin.tau, tau_c * (1.0 + 1e-12), &before) {
                        active.push(i);
                        signs[i] = kin.tau[i].signum();
                        changed = true;
                    }
                } else {
                    for i in 0..N_SLIP {
                        if !before.contains(&i) && kin.tau[i].abs() > tau_c * (1.0 + 1e-12) {
                            active.push(i);
                            signs[i] = kin.tau[i].signum();
                            changed = true;
                        }
                    }
                }
                active.sort_unstable();
                if !changed {
                    break;
                }
                rounds += 1;
                if rounds > self.local.max_active_set_changes {
                    return Err(CrystalError::NonConvergence { residual: last_res });
                }
                if active.is_empty() {
                    kin = self.kinematics(a, &dgamma, grain, &active)?;
                    break;
                }
            }
            for &i in &active {
                let arg = (dgamma[i].abs() / rate_scale).asinh();
                if arg > self.params.sinh_cap {
                    return Err(CrystalError::StepSize { arg });
                }
            }
        }

        Ok(SlipSolution { dgamma, active, signs, kin, jac, z_mats })
    }

    /// Implicit constitutive update over `dt` seconds for deformation `f`.
    pub fn stress_update(
        &self,
        grain: &GrainKernel,
        f: &Mat3,
        prev: &MaterialPointState,
        dt: f64,
        want_tangent: bool,
    ) -> Result<PointResponse, CrystalError> {
        let det_f = f.determinant();
        if !(det_f > 0.0) {
            return Err(CrystalError::InvalidState { det: det_f });
        }
        let fp_inv = prev.fp.try_inverse().ok_or(CrystalError::InvalidState { det: prev.fp.determinant() })?;
        let a = f * fp_inv;
        let rate_scale = self.prefactor * dt;
        let inv_sens = 1.0 / self.sensitivity;

        let solution = match self.solve_slip(&a, prev, grain, rate_scale, inv_sens, false) {
            Err(CrystalError::NonConvergence { .. }) => self.solve_slip(&a, prev, grain, rate_scale, inv_sens, true)?,
            other => other?,
        };
        let SlipSolution { dgamma, active, signs, kin, jac, z_mats } = solution;

        let fe = kin.fe;
        let fe_inv = fe.try_inverse().ok_or(CrystalError::InvalidState { det: fe.determinant() })?;
        let fe_inv_t = fe_inv.transpose();
        let fp_inv_t = fp_inv.transpose();
        let b = kin.h.transpose() * fp_inv_t;
        let p = fe_inv_t * kin.mandel * b;

        let mut state = prev.clone();
        let mut plastic_work = 0.0;
        if !active.is_empty() {
            let h_inv = kin.h.try_inverse().ok_or(CrystalError::InvalidState { det: kin.h.determinant() })?;
            state.fp = h_inv * prev.fp;
            for &i in &active {
                state.gamma[i] += dgamma[i];
                state.accumulated_slip += dgamma[i].abs();
            }
            state.rho_ssd += self.params.hardening * (2.0 / 3.0 * ddot(&kin.dl, &kin.dl)).sqrt();
            let cauchy = p * f.transpose() / det_f;
            plastic_work = ddot(&cauchy, &(fe * kin.dl * fe_inv));
            state.wp += plastic_work;
        }
        let (we_plus, we_minus) = split_from_log(&kin.log, &grain.stiffness);

        let tangent = if want_tangent {
            // Derivative of P for a perturbation dFe (and dH) at fixed slip.
            let dp = |dfe: &Mat3, dh: Option<&Mat3>| -> Mat3 {
                let dce = dfe.transpose() * fe + fe.transpose() * dfe;
                let de = 0.5 * kin.log.derivative(&dce);
                let dm = unflatten(&(grain.stiffness * flatten(&de)));
                let mut out = -fe_inv_t * dfe.transpose() * fe_inv_t * kin.mandel * b + fe_inv_t * dm * b;
                if let Some(dh) = dh {
                    out += fe_inv_t * kin.mandel * dh.transpose() * fp_inv_t;
                }
                out
            };
            let right = fp_inv * kin.h;
            let mut k = Tensor4::zeros();
            for col in 0..9 {
                let mut e = Mat3::zeros();
                e[(col / 3, col % 3)] = 1.0;
                k.set_column(col, &flatten(&dp(&(e * right), None)));
            }
            if !active.is_empty() {
                let na = active.len();
                // dr/dF rows: sign_i * Z_i H^T Fp^-T.
                let mut dr_df = DMatrix::<f64>::zeros(na, 9);
                for (row, &i) in active.iter().enumerate() {
                    let g = signs[i] * z_mats[row] * b;
                    for col in 0..9 {
                        dr_df[(row, col)] = g[(col / 3, col % 3)];
                    }
                }
                let lu = jac.clone().lu();
                let dg_df = lu.solve(&(-dr_df)).ok_or(CrystalError::NonConvergence { residual: f64::NAN })?;
                for (col_j, _) in active.iter().enumerate() {
                    let dfe = a * kin.dh[col_j];
                    let dpj: Vec9 = flatten(&dp(&dfe, Some(&kin.dh[col_j])));
                    for c in 0..9 {
                        let w = dg_df[(col_j, c)];
                        if w != 0.0 {
                            let mut column = k.column_mut(c);
                            column += dpj * w;
                        }
                    }
                }
            }
            Some(k)
        } else {
            None
        };

        Ok(PointResponse { p, state, plastic_work, we_plus, we_minus, tangent, active_systems: active.len() })
    }

    /// Consistent tangent `dP/dF` of the discrete update.
    pub fn consistent_tangent(
        &self,
        grain: &GrainKernel,
        f: &Mat3,
        prev: &MaterialPointState,
        dt: f64,
    ) -> Result<Tensor4, CrystalError> {
        Ok(self.stress_update(grain, f, prev, dt, true)?.tangent.expect("tangent requested"))
    }
}

/// Unit load direction helper shared with Schmid factor reporting.
pub fn schmid_factor(system: &SlipSystem, load: &Vector3<f64>) -> f64 {
    (system.s.dot(load) * system.n.dot(load)).abs()
}
