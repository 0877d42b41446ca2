//! One time increment: alternating mechanical and phase-field solves until
//! both relative corrections are small, then energy accounting and the
//! dislocation-density update.

use rayon::prelude::*;

use super::mechanics::{field_max_diff, uniform_field, ControlMask, Evaluation, Mechanics};
use super::SolverError;
use crate::crystal::MaterialPointState;
use crate::gnd::gnd_field;
use crate::grid::{ScalarField, TensorField};
use crate::phase_field::{driving_force, latch_wcrit, stored_energy_increment, PhaseFieldParams, PhaseFieldSolver};
use crate::tensor::{Mat3, Tensor4};

/// Converged fields at the end of an increment.
#[derive(Debug, Clone)]
pub struct SolutionState {
    pub f: TensorField,
    /// Degraded first Piola-Kirchhoff stress (MPa).
    pub p: TensorField,
    pub phi: ScalarField,
    pub states: Vec<MaterialPointState>,
    pub f_bar: Mat3,
    pub p_bar: Mat3,
    /// Volume-averaged degraded tangent of the last evaluation.
    pub mean_tangent: Tensor4,
}

impl SolutionState {
    /// Undeformed, undamaged state; the tangent is evaluated at the identity.
    pub fn initial(mech: &Mechanics<'_>, phi0: ScalarField) -> Result<Self, SolverError> {
        let n = phi0.len();
        let f = uniform_field(&Mat3::identity(), n);
        let states = vec![MaterialPointState::default(); n];
        let eval = mech.evaluate(&f, &phi0, &states, 1.0)?;
        Ok(Self { f, p: eval.p, phi: phi0, states, f_bar: Mat3::identity(), p_bar: eval.mean_p, mean_tangent: eval.mean_tangent })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StaggerReport {
    pub passes: usize,
    pub newton_iterations: usize,
    pub krylov_iterations: usize,
    pub phase_field_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct IncrementResult {
    pub state: SolutionState,
    pub report: StaggerReport,
}

/// Damage and dislocation settings of the coupled problem.
pub struct Coupling<'a> {
    pub mech: Mechanics<'a>,
    pub phase_field: &'a PhaseFieldParams,
    pub pf_solver: PhaseFieldSolver,
    /// Plastic-gradient regularisation length (um).
    pub ell_fp: f64,
}

/// Elastic predictor for the free macroscopic components.
pub fn predict_f_bar(current: &Mat3, target: &Mat3, kbar: &Tensor4, control: &ControlMask) -> Mat3 {
    let mut next = *current;
    let mut dp = [0.0; 9];
    for c in 0..9 {
        if control.prescribed[c] {
            dp[c] = target[(c / 3, c % 3)] - current[(c / 3, c % 3)];
            next[(c / 3, c % 3)] = target[(c / 3, c % 3)];
        }
    }
    let free = control.free();
    if free.is_empty() {
        return next;
    }
    let m = free.len();
    let kff = nalgebra::DMatrix::from_fn(m, m, |a, b| kbar[(free[a], free[b])]);
    let rhs = nalgebra::DVector::from_fn(m, |a, _| -(0..9).map(|c| kbar[(free[a], c)] * dp[c]).sum::<f64>());
    if let Some(sol) = kff.lu().solve(&rhs) {
        for (a, &c) in free.iter().enumerate() {
            next[(c / 3, c % 3)] += sol[a];
        }
    }
    next
}

fn relative_change(new: f64, denom: f64) -> f64 {
    if denom == 0.0 {
        0.0
    } else {
        new / denom
    }
}

impl<'a> Coupling<'a> {
    fn driving_field(&self, eval: &Evaluation, prev: &[MaterialPointState]) -> ScalarField {
        let zeta = self.phase_field.zeta;
        (0..prev.len())
            .into_par_iter()
            .map(|v| {
                if !self.mech.layout.is_crystal(v) {
                    return 0.0;
                }
                let r = &eval.responses[v];
                driving_force(r.we_plus, r.state.wp, prev[v].w_crit, zeta)
            })
            .collect()
    }

    /// Advances `current` by `dt` to the prescribed components of `target`.
    pub fn increment(
        &self,
        current: &SolutionState,
        target: &Mat3,
        dt: f64,
        control: &ControlMask,
    ) -> Result<IncrementResult, SolverError> {
        let cfg = self.mech.config;
        let n = current.phi.len();
        let f_bar = predict_f_bar(&current.f_bar, target, &current.mean_tangent, control);
        let shift = f_bar - current.f_bar;
        let mut f: TensorField = std::array::from_fn(|c| current.f[c].iter().map(|v| v + shift[(c / 3, c % 3)]).collect());
        let mut phi = current.phi.clone();
        let mut report = StaggerReport::default();
        let mut previous_f: Option<TensorField> = None;

        loop {
            report.passes += 1;
            let (eval, newton) = self.mech.solve(&mut f, &current.f, &phi, &current.states, dt, control)?;
            report.newton_iterations += newton.iterations;
            report.krylov_iterations += newton.krylov_iterations;

            let s = self.driving_field(&eval, &current.states);
            let sol = self.pf_solver.solve(self.mech.spectral, &s, &current.phi, self.phase_field.ell)?;
            report.phase_field_iterations += sol.iterations;

            let phi_change = sol.phi.iter().zip(&phi).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            // Mechanics already saw this damage field.
            let consistent = phi_change == 0.0;
            let converged = consistent
                || previous_f.as_ref().is_some_and(|fp| {
                    let f_ratio = relative_change(field_max_diff(&f, fp), field_max_diff(&f, &current.f));
                    let phi_dev = sol.phi.iter().zip(&current.phi).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                    let phi_ratio = relative_change(phi_change, phi_dev);
                    f_ratio <= cfg.tol_stag && phi_ratio <= cfg.tol_stag
                });
            phi = sol.phi;
            if converged {
                let state = self.commit(f, phi, eval);
                return Ok(IncrementResult { state, report });
            }
            if report.passes >= cfg.max_stag {
                return Err(SolverError::Stagger { passes: report.passes });
            }
            previous_f = Some(f.clone());
            debug_assert_eq!(phi.len(), n);
        }
    }

    fn commit(&self, f: TensorField, phi: ScalarField, eval: Evaluation) -> SolutionState {
        let pf = self.phase_field;
        let layout = self.mech.layout;
        let mut states: Vec<MaterialPointState> = eval
            .responses
            .into_par_iter()
            .enumerate()
            .map(|(v, r)| {
                let mut st = r.state;
                if layout.is_crystal(v) {
                    st.we_plus_max = st.we_plus_max.max(r.we_plus);
                    st.gs += stored_energy_increment(r.plastic_work, st.rho_ssd + st.rho_gnd, pf.stored_energy_fraction);
                    st.w_crit = latch_wcrit(st.w_crit, st.gs, pf.g_crit, st.we_plus_max, st.wp);
                }
                st
            })
            .collect();
        if !layout.grains.is_empty() {
            let fp: TensorField = std::array::from_fn(|c| states.iter().map(|s| s.fp[(c / 3, c % 3)]).collect());
            let burgers = self.mech.model.params.burgers;
            let rho = gnd_field(self.mech.spectral, &fp, self.ell_fp, |v| layout.gnd_basis(v), burgers);
            for (st, r) in states.iter_mut().zip(rho) {
                st.rho_gnd = r;
            }
        }
        let f_bar = super::mechanics::field_mean(&f);
        SolutionState { f, p: eval.p, phi, states, f_bar, p_bar: eval.mean_p, mean_tangent: eval.mean_tangent }
    }
}
