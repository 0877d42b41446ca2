use nalgebra::Matrix3;
use spectral_fatigue::crystal::{CrystalModel, CrystalParams, MaterialPointState};
use spectral_fatigue::grid::{Spectral, VoxelGrid};
use spectral_fatigue::solver::mechanics::{field_mean, uniform_field};
use spectral_fatigue::solver::{ControlMask, MaterialLayout, Mechanics, NewtonReport, SolverConfig};
use spectral_fatigue::tensor::isotropic_stiffness;

use super::oracle::OracleMaterial;

pub const ACTIVATION_VOLUME: f64 = 1e-20;

pub struct ElasticCheck {
    pub report: NewtonReport,
    /// Relative difference of the mean stress to the analytic value.
    pub stress_error: f64,
    /// Largest deviation of the mean deformation gradient from the target.
    pub mean_f_error: f64,
}

/// Generic small stretch below the slip threshold.
pub fn elastic_target() -> Matrix3<f64> {
    Matrix3::new(1.0006, 2e-4, -1e-4, 1e-4, 0.9997, 3e-4, -2e-4, 1e-4, 1.0004)
}

/// Single crystal on an `n^3` grid under full macroscopic control.
pub fn homogeneous_elastic(n: usize) -> ElasticCheck {
    let spectral = Spectral::new(VoxelGrid::with_voxel_length([n, n, n], 1.0).unwrap());
    let model = CrystalModel::new(CrystalParams::with_activation_volume(ACTIVATION_VOLUME));
    let voxels = n * n * n;
    let layout = MaterialLayout::new(&model, &[Matrix3::identity()], &vec![0; voxels], &vec![false; voxels], 1e-5);
    let config = SolverConfig::default();
    let mech = Mechanics::new(&spectral, &layout, &model, 0.0, &config);
    let target = elastic_target();
    let f_t = uniform_field(&Matrix3::identity(), voxels);
    let mut f = uniform_field(&target, voxels);
    let prev = vec![MaterialPointState::default(); voxels];
    let phi = vec![0.0; voxels];
    let (eval, report) = mech.solve(&mut f, &f_t, &phi, &prev, 1.0, &ControlMask::full()).unwrap();
    let expected = OracleMaterial::table(ACTIVATION_VOLUME).piola(&target, &Matrix3::identity());
    ElasticCheck {
        report,
        stress_error: (eval.mean_p - expected).norm() / expected.norm(),
        mean_f_error: (field_mean(&f) - target).abs().max(),
    }
}

pub struct LaminateCheck {
    /// Largest relative deviation of the per-voxel axial strain from the series solution.
    pub strain_error: f64,
    pub report: NewtonReport,
}

/// Isotropic layers of stiffness contrast 10 stacked along x, 16 voxels each,
/// stretched normal to the layers.
pub fn laminate(n: usize, unpreconditioned: bool) -> LaminateCheck {
    let spectral = Spectral::new(VoxelGrid::with_voxel_length([n, 1, 1], 1.0).unwrap());
    let (lambda, mu) = (60e3, 40e3);
    let contrast = 10.0;
    let soft = isotropic_stiffness(lambda, mu);
    let hard = soft * contrast;
    let ids: Vec<u32> = (0..n).map(|i| u32::from(i >= n / 2)).collect();
    let layout = MaterialLayout::linear_only(vec![soft, hard], &ids);
    let model = CrystalModel::new(CrystalParams::with_activation_volume(ACTIVATION_VOLUME));
    let config = SolverConfig { tol_lin: 1e-10, ..SolverConfig::default() };
    let mut mech = Mechanics::new(&spectral, &layout, &model, 0.0, &config);
    mech.unpreconditioned = unpreconditioned;
    let eps = 1e-3;
    let mut target = Matrix3::identity();
    target[(0, 0)] += eps;
    let f_t = uniform_field(&Matrix3::identity(), n);
    let mut f = uniform_field(&target, n);
    let prev = vec![MaterialPointState::default(); n];
    let phi = vec![0.0; n];
    let (_, report) = mech.solve(&mut f, &f_t, &phi, &prev, 1.0, &ControlMask::full()).unwrap();

    // Series solution: equal normal stress, volume-averaged strain fixed.
    let m_soft = lambda + 2.0 * mu;
    let m_hard = contrast * m_soft;
    let frac_soft = 0.5;
    let sigma = eps / (frac_soft / m_soft + (1.0 - frac_soft) / m_hard);
    let strain_error = (0..n)
        .map(|v| {
            let expected = if ids[v] == 0 { sigma / m_soft } else { sigma / m_hard };
            ((f[0][v] - 1.0) - expected).abs() / expected.abs()
        })
        .fold(0.0, f64::max);
    LaminateCheck { strain_error, report }
}

/// Largest stress-controlled mean stress component relative to the axial one for uniaxial
/// control of a two-grain crystal.
pub fn mixed_control_lateral_ratio() -> f64 {
    use spectral_fatigue::solver::stagger::{predict_f_bar, SolutionState};
    let n = 8;
    let spectral = Spectral::new(VoxelGrid::with_voxel_length([n, n, 1], 1.0).unwrap());
    let model = CrystalModel::new(CrystalParams::with_activation_volume(ACTIVATION_VOLUME));
    let rot = nalgebra::Rotation3::from_euler_angles(0.3, 0.7, -0.2).into_inner();
    let ids: Vec<u32> = (0..n * n).map(|v| u32::from(v % n >= n / 2)).collect();
    let layout = MaterialLayout::new(&model, &[Matrix3::identity(), rot], &ids, &vec![false; n * n], 1e-5);
    let config = SolverConfig::default();
    let mech = Mechanics::new(&spectral, &layout, &model, 0.0, &config);
    let state = SolutionState::initial(&mech, vec![0.0; n * n]).unwrap();
    let control = ControlMask::uniaxial(1);
    let mut target = Matrix3::identity();
    target[(1, 1)] += 1e-3;
    let f_bar = predict_f_bar(&state.f_bar, &target, &state.mean_tangent, &control);
    let mut f = uniform_field(&f_bar, n * n);
    let (eval, _) = mech.solve(&mut f, &state.f, &state.phi, &state.states, 1.0, &control).unwrap();
    let axial = eval.mean_p[(1, 1)].abs();
    control.free().iter().map(|&c| eval.mean_p[(c / 3, c % 3)].abs()).fold(0.0, f64::max) / axial
}
