//! Mechanical equilibrium in Fourier space: per-voxel material evaluation,
//! the residual of the momentum balance, its linearisation and the Newton
//! iteration with mixed macroscopic control.
//!
//! Unknowns are stored as one real vector: for every half-spectrum bin the
//! real and imaginary parts of `z = |xi| u_hat` (three components), followed
//! by nine slots for `N * dF_bar` (prescribed slots stay zero). With this
//! scaling the fluctuation gradient is `z (x) i n` with `n = xi / |xi|`, and
//! every block carries units of an unnormalised strain coefficient.

use nalgebra::{Matrix3, SMatrix};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::gmres::{gmres, GmresOutcome, GmresSettings};
use super::{SolverConfig, SolverError};
use crate::crystal::{CrystalModel, GrainKernel, MaterialPointState};
use crate::gnd::GndBasis;
use crate::grid::{Spectral, TensorField};
use crate::phase_field::degradation;
use crate::tensor::{flatten, isotropic_stiffness, unflatten, Mat3, Tensor4, Vec9};

/// Constitutive family of a voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Crystal plasticity with the given grain index.
    Crystal(u32),
    /// Small-strain linear elasticity with the given material index.
    Linear(u32),
}

/// Per-voxel material assignment and per-grain precomputed data.
#[derive(Debug, Clone)]
pub struct MaterialLayout {
    pub phases: Vec<Phase>,
    pub grains: Vec<GrainKernel>,
    pub gnd_bases: Vec<GndBasis>,
    /// Stiffness tensors (MPa) of the linear materials.
    pub linear: Vec<Tensor4>,
}

impl MaterialLayout {
    /// Crystal voxels from grain ids and rotations; voxels flagged `soft`
    /// become isotropic linear elastic with the Voigt-averaged crystal
    /// stiffness scaled by `soft_factor`.
    pub fn new(model: &CrystalModel, rotations: &[Mat3], grain_ids: &[u32], soft: &[bool], soft_factor: f64) -> Self {
        let grains: Vec<GrainKernel> = rotations.iter().map(|r| model.kernel(*r)).collect();
        let gnd_bases = grains.iter().map(|g| GndBasis::new(&g.systems)).collect();
        let (lambda, mu) = model.params.voigt_lame();
        let linear = vec![isotropic_stiffness(lambda, mu) * soft_factor];
        let phases = grain_ids
            .iter()
            .zip(soft)
            .map(|(&g, &s)| if s { Phase::Linear(0) } else { Phase::Crystal(g) })
            .collect();
        Self { phases, grains, gnd_bases, linear }
    }

    /// Purely linear-elastic layout (used for verification problems).
    pub fn linear_only(materials: Vec<Tensor4>, ids: &[u32]) -> Self {
        Self { phases: ids.iter().map(|&i| Phase::Linear(i)).collect(), grains: vec![], gnd_bases: vec![], linear: materials }
    }

    pub fn is_crystal(&self, voxel: usize) -> bool {
        matches!(self.phases[voxel], Phase::Crystal(_))
    }

    pub fn gnd_basis(&self, voxel: usize) -> Option<&GndBasis> {
        match self.phases[voxel] {
            Phase::Crystal(g) => Some(&self.gnd_bases[g as usize]),
            Phase::Linear(_) => None,
        }
    }
}

/// Which macroscopic deformation gradient components are prescribed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlMask {
    pub prescribed: [bool; 9],
}

impl ControlMask {
    /// All nine components prescribed.
    pub fn full() -> Self {
        Self { prescribed: [true; 9] }
    }

    /// `F_aa` prescribed; the lateral normal and upper-triangle shear
    /// components follow from zero mean stress. The lower-triangle shears
    /// stay at their prescribed values, which suppresses rigid rotation.
    pub fn uniaxial(axis: usize) -> Self {
        let mut prescribed = [false; 9];
        prescribed[4 * axis] = true;
        for (i, j) in [(1, 0), (2, 0), (2, 1)] {
            prescribed[3 * i + j] = true;
        }
        Self { prescribed }
    }

    pub fn free(&self) -> Vec<usize> {
        (0..9).filter(|&c| !self.prescribed[c]).collect()
    }
}

/// Material response of one voxel for a trial deformation.
#[derive(Debug, Clone)]
pub struct VoxelResponse {
    pub state: MaterialPointState,
    /// Plastic work increment (MJ/m^3), zero for linear voxels.
    pub plastic_work: f64,
    /// Undegraded tensile elastic energy (MJ/m^3), zero for linear voxels.
    pub we_plus: f64,
}

/// Degraded stress and tangent fields for a trial deformation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub p: TensorField,
    pub tangent: Vec<Tensor4>,
    pub responses: Vec<VoxelResponse>,
    pub mean_p: Mat3,
    pub mean_tangent: Tensor4,
}

/// Diagnostics of one converged mechanical solve.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub krylov_iterations: usize,
}

pub struct Mechanics<'a> {
    pub spectral: &'a Spectral,
    pub layout: &'a MaterialLayout,
    pub model: &'a CrystalModel,
    pub k_res: f64,
    pub config: &'a SolverConfig,
    /// Disables the Fourier preconditioner and the frequency scaling of the
    /// unknowns (verification only).
    pub unpreconditioned: bool,
    /// Unit wave vector per bin; `None` for the mean and Nyquist bins.
    normals: Vec<Option<[f64; 3]>>,
}

fn tensor_field_zeros(n: usize) -> TensorField {
    std::array::from_fn(|_| vec![0.0; n])
}

/// Largest absolute entry over all components.
pub fn field_max_abs(f: &TensorField) -> f64 {
    f.iter().flat_map(|c| c.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Largest absolute entry of `a - b` over all components.
pub fn field_max_diff(a: &TensorField, b: &TensorField) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0_f64, f64::max)
}

/// Uniform field equal to `m`.
pub fn uniform_field(m: &Mat3, n: usize) -> TensorField {
    std::array::from_fn(|c| vec![m[(c / 3, c % 3)]; n])
}

/// Volume average, summed in index order.
pub fn field_mean(f: &TensorField) -> Mat3 {
    Mat3::from_fn(|i, j| crate::grid::mean(&f[3 * i + j]))
}

impl<'a> Mechanics<'a> {
    pub fn new(
        spectral: &'a Spectral,
        layout: &'a MaterialLayout,
        model: &'a CrystalModel,
        k_res: f64,
        config: &'a SolverConfig,
    ) -> Self {
        let freqs = spectral.freqs();
        let normals = (0..spectral.spectral_len())
            .map(|s| {
                let xi = freqs.xi(s);
                let norm = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
                if norm == 0.0 || freqs.touches_nyquist(s) {
                    None
                } else {
                    Some([xi[0] / norm, xi[1] / norm, xi[2] / norm])
                }
            })
            .collect();
        Self { spectral, layout, model, k_res, config, unpreconditioned: false, normals }
    }

    pub fn dimension(&self) -> usize {
        6 * self.spectral.spectral_len() + 9
    }

    fn mean_offset(&self) -> usize {
        6 * self.spectral.spectral_len()
    }

    /// Evaluates every voxel from its step-start state.
    pub fn evaluate(
        &self,
        f: &TensorField,
        phi: &[f64],
        prev: &[MaterialPointState],
        dt: f64,
    ) -> Result<Evaluation, SolverError> {
        let n = phi.len();
        let results: Vec<Result<(Mat3, Tensor4, VoxelResponse), SolverError>> = (0..n)
            .into_par_iter()
            .map(|v| {
                let fv = Mat3::from_fn(|i, j| f[3 * i + j][v]);
                let g = degradation(phi[v], self.k_res);
                match self.layout.phases[v] {
                    Phase::Crystal(gi) => {
                        let grain = &self.layout.grains[gi as usize];
                        let r = self
                            .model
                            .stress_update(grain, &fv, &prev[v], dt, true)
                            .map_err(|e| SolverError::Constitutive { voxel: v, source: e })?;
                        let k = r.tangent.expect("tangent requested") * g;
                        Ok((r.p * g, k, VoxelResponse { state: r.state, plastic_work: r.plastic_work, we_plus: r.we_plus }))
                    }
                    Phase::Linear(mi) => {
                        let c = &self.layout.linear[mi as usize];
                        let strain = fv - Mat3::identity();
                        let p = unflatten(&(c * flatten(&strain)));
                        Ok((p * g, c * g, VoxelResponse { state: prev[v].clone(), plastic_work: 0.0, we_plus: 0.0 }))
                    }
                }
            })
            .collect();
        let mut p = tensor_field_zeros(n);
        let mut tangent = Vec::with_capacity(n);
        let mut responses = Vec::with_capacity(n);
        let mut sum_k = Tensor4::zeros();
        for (v, r) in results.into_iter().enumerate() {
            let (pv, kv, resp) = r?;
            for c in 0..9 {
                p[c][v] = pv[(c / 3, c % 3)];
            }
            sum_k += kv;
            tangent.push(kv);
            responses.push(resp);
        }
        let mean_p = field_mean(&p);
        Ok(Evaluation { p, tangent, responses, mean_p, mean_tangent: sum_k / n as f64 })
    }

    fn unit_normal(&self, s: usize) -> Option<[f64; 3]> {
        self.normals[s]
    }

    /// `|xi|` of a bin carrying unknowns, 1 elsewhere.
    fn frequency_scale(&self, s: usize) -> f64 {
        match self.normals[s] {
            Some(_) => {
                let xi = self.spectral.xi(s);
                (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt()
            }
            None => 1.0,
        }
    }

    /// Momentum residual `P_hat . i n` per bin and `N * P_bar` on the free
    /// components, as one real vector.
    pub fn residual(&self, p: &TensorField, control: &ControlMask) -> Vec<f64> {
        let ns = self.spectral.spectral_len();
        let specs: Vec<Vec<Complex64>> = p.par_iter().map(|c| self.spectral.forward(c)).collect();
        let mut out = vec![0.0; self.dimension()];
        for s in 0..ns {
            let Some(nv) = self.unit_normal(s) else { continue };
            for i in 0..3 {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..3 {
                    acc += specs[3 * i + j][s] * Complex64::new(0.0, nv[j]);
                }
                out[6 * s + 2 * i] = acc.re;
                out[6 * s + 2 * i + 1] = acc.im;
            }
        }
        let off = self.mean_offset();
        for c in control.free() {
            out[off + c] = specs[c][0].re;
        }
        out
    }

    /// Deformation-gradient field of an unknown vector.
    pub fn gradient_field(&self, x: &[f64]) -> TensorField {
        let ns = self.spectral.spectral_len();
        let n = self.spectral.grid().len();
        let off = self.mean_offset();
        let fields: Vec<Vec<f64>> = (0..9)
            .into_par_iter()
            .map(|c| {
                let (i, j) = (c / 3, c % 3);
                let mut spec = vec![Complex64::new(0.0, 0.0); ns];
                for (s, out) in spec.iter_mut().enumerate().skip(1) {
                    if let Some(nv) = self.unit_normal(s) {
                        let z = Complex64::new(x[6 * s + 2 * i], x[6 * s + 2 * i + 1]);
                        *out = z * Complex64::new(0.0, nv[j]);
                    }
                }
                spec[0] = Complex64::new(x[off + c], 0.0);
                let mut real = vec![0.0; n];
                self.spectral.inverse_in_place(&mut spec, &mut real);
                real
            })
            .collect();
        let mut it = fields.into_iter();
        std::array::from_fn(|_| it.next().expect("nine components"))
    }

    fn apply_jacobian(&self, tangent: &[Tensor4], x: &[f64], control: &ControlMask) -> Vec<f64> {
        let df = self.gradient_field(x);
        let n = tangent.len();
        let dp_vox: Vec<Vec9> = (0..n)
            .into_par_iter()
            .map(|v| {
                let d = Vec9::from_fn(|c, _| df[c][v]);
                tangent[v] * d
            })
            .collect();
        let dp: TensorField = std::array::from_fn(|c| dp_vox.iter().map(|d| d[c]).collect());
        self.residual(&dp, control)
    }

    fn preconditioner(&self, kbar: &Tensor4, control: &ControlMask) -> (Vec<Matrix3<f64>>, SMatrix<f64, 9, 9>) {
        let ns = self.spectral.spectral_len();
        let blocks = (0..ns)
            .map(|s| match self.unit_normal(s) {
                None => Matrix3::zeros(),
                Some(nv) => {
                    let a = Matrix3::from_fn(|i, k| {
                        let mut acc = 0.0;
                        for j in 0..3 {
                            for l in 0..3 {
                                acc += nv[j] * kbar[(3 * i + j, 3 * k + l)] * nv[l];
                            }
                        }
                        acc
                    });
                    -a.try_inverse().unwrap_or_else(Matrix3::zeros)
                }
            })
            .collect();
        let free = control.free();
        let mut mean_inv = SMatrix::<f64, 9, 9>::zeros();
        if !free.is_empty() {
            let m = free.len();
            let kff = nalgebra::DMatrix::from_fn(m, m, |a, b| kbar[(free[a], free[b])]);
            if let Some(inv) = kff.try_inverse() {
                for a in 0..m {
                    for b in 0..m {
                        mean_inv[(free[a], free[b])] = inv[(a, b)];
                    }
                }
            }
        }
        (blocks, mean_inv)
    }

    fn apply_preconditioner(&self, blocks: &[Matrix3<f64>], mean_inv: &SMatrix<f64, 9, 9>, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for (s, b) in blocks.iter().enumerate() {
            let re = nalgebra::Vector3::new(r[6 * s], r[6 * s + 2], r[6 * s + 4]);
            let im = nalgebra::Vector3::new(r[6 * s + 1], r[6 * s + 3], r[6 * s + 5]);
            let (pr, pi) = (b * re, b * im);
            for i in 0..3 {
                out[6 * s + 2 * i] = pr[i];
                out[6 * s + 2 * i + 1] = pi[i];
            }
        }
        let off = self.mean_offset();
        let rm = SMatrix::<f64, 9, 1>::from_fn(|c, _| r[off + c]);
        let pm = mean_inv * rm;
        for c in 0..9 {
            out[off + c] = pm[c];
        }
        out
    }

    /// Solves the linearised equilibrium `J dx = -R` at relative tolerance
    /// `tol_lin`.
    pub fn newton_step(
        &self,
        eval: &Evaluation,
        residual: &[f64],
        control: &ControlMask,
    ) -> Result<(Vec<f64>, GmresOutcome), SolverError> {
        let (blocks, mean_inv) = self.preconditioner(&eval.mean_tangent, control);
        let settings = GmresSettings {
            tolerance: self.config.tol_lin,
            restart: self.config.krylov_restart,
            max_iterations: self.config.max_krylov,
        };
        let out;
        let mut dx;
        if self.unpreconditioned {
            // Plain system in the displacement coefficients: u = z / |xi| and
            // the residual P_hat . i xi.
            let scale = self.unknown_scaling();
            let scaled = |v: &[f64]| -> Vec<f64> { v.iter().zip(&scale).map(|(a, d)| a * d).collect() };
            let rhs: Vec<f64> = residual.iter().zip(&scale).map(|(v, d)| -v * d).collect();
            let mut u = vec![0.0; rhs.len()];
            out = gmres(
                |x| scaled(&self.apply_jacobian(&eval.tangent, &scaled(x), control)),
                |r| r.to_vec(),
                &rhs,
                &mut u,
                &settings,
            );
            dx = scaled(&u);
        } else {
            let rhs: Vec<f64> = residual.iter().map(|v| -v).collect();
            dx = vec![0.0; rhs.len()];
            out = gmres(
                |x| self.apply_jacobian(&eval.tangent, x, control),
                |r| self.apply_preconditioner(&blocks, &mean_inv, r),
                &rhs,
                &mut dx,
                &settings,
            );
        }
        if !out.converged {
            return Err(SolverError::Krylov { iterations: out.iterations, residual: out.relative_residual });
        }
        Ok((dx, out))
    }

    fn unknown_scaling(&self) -> Vec<f64> {
        let mut d = vec![1.0; self.dimension()];
        for s in 0..self.spectral.spectral_len() {
            let f = self.frequency_scale(s);
            d[6 * s..6 * s + 6].iter_mut().for_each(|v| *v = f);
        }
        d
    }

    /// Stress-weighted residual norm used for the line search.
    pub fn residual_norm(r: &[f64]) -> f64 {
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Newton-Krylov solve of the momentum balance at fixed `phi`, starting
    /// from `f` (updated in place). `f_t` is the converged field of the
    /// previous increment.
    pub fn solve(
        &self,
        f: &mut TensorField,
        f_t: &TensorField,
        phi: &[f64],
        prev: &[MaterialPointState],
        dt: f64,
        control: &ControlMask,
    ) -> Result<(Evaluation, NewtonReport), SolverError> {
        let mut eval = self.evaluate(f, phi, prev, dt)?;
        let mut r = self.residual(&eval.p, control);
        let mut rn = Self::residual_norm(&r);
        let mut report = NewtonReport::default();
        let axis_component = (0..9).find(|&c| control.prescribed[c] && c % 4 == 0);
        for _ in 0..self.config.max_newton {
            let (dx, gm) = self.newton_step(&eval, &r, control)?;
            report.iterations += 1;
            report.krylov_iterations += gm.iterations;
            let df = self.gradient_field(&dx);
            let step = field_max_abs(&df);
            let mut trial: TensorField = std::array::from_fn(|c| f[c].iter().zip(&df[c]).map(|(a, b)| a + b).collect());
            let progress = field_max_diff(&trial, f_t);
            let small = if progress > 1e-14 {
                step / progress < self.config.tol_newton
            } else {
                step < self.config.newton_abs
            };
            let mut alpha = 1.0;
            let mut last_error = None;
            let mut accepted = false;
            for attempt in 0..self.config.max_line_search {
                if attempt > 0 {
                    alpha *= 0.5;
                    trial = std::array::from_fn(|c| f[c].iter().zip(&df[c]).map(|(a, b)| a + alpha * b).collect());
                }
                match self.evaluate(&trial, phi, prev, dt) {
                    Ok(te) => {
                        let tr = self.residual(&te.p, control);
                        let tn = Self::residual_norm(&tr);
                        if tn <= rn || (small && attempt == 0) {
                            *f = trial;
                            eval = te;
                            r = tr;
                            rn = tn;
                            accepted = true;
                            break;
                        }
                    }
                    Err(e) => last_error = Some(e),
                }
            }
            if !accepted {
                return Err(last_error.unwrap_or(SolverError::LineSearch { residual: rn }));
            }
            if small && alpha == 1.0 && self.mixed_control_satisfied(&eval, control, axis_component) {
                return Ok((eval, report));
            }
        }
        Err(SolverError::Newton { iterations: report.iterations })
    }

    fn mixed_control_satisfied(&self, eval: &Evaluation, control: &ControlMask, axis: Option<usize>) -> bool {
        let reference = axis.map(|c| eval.mean_p[(c / 3, c % 3)].abs()).unwrap_or(0.0).max(1.0);
        control
            .free()
            .iter()
            .all(|&c| eval.mean_p[(c / 3, c % 3)].abs() <= self.config.tol_mixed * reference)
    }
}
