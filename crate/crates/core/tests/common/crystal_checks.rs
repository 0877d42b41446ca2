use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_fatigue::crystal::{CrystalModel, CrystalParams, MaterialPointState};
use spectral_fatigue::tensor::{flatten, Tensor4};

use super::oracle::OracleMaterial;

pub const ACTIVATION_VOLUME: f64 = 1e-20;

/// Simple shear `0 -> +A -> -A -> 0` along a generic lattice direction.
pub fn shear_history(amplitude: f64, period: f64) -> impl Fn(f64) -> Matrix3<f64> {
    let a = Vector3::new(1.0, 2.0, 0.5).normalize();
    let m = a.cross(&Vector3::new(0.3, -0.1, 1.0)).normalize();
    move |t: f64| {
        let q = (t / period).rem_euclid(1.0) * 4.0;
        let g = if q < 1.0 {
            q
        } else if q < 3.0 {
            2.0 - q
        } else {
            q - 4.0
        } * amplitude;
        Matrix3::identity() + a * m.transpose() * g
    }
}

pub struct OracleComparison {
    /// Relative stress difference after the full cycle.
    pub end: f64,
    /// Largest difference over the cycle relative to the peak stress.
    pub worst: f64,
}

/// Runs one shear cycle with `steps` implicit increments and compares to an
/// explicit integration with 100 times as many substeps.
pub fn compare_with_oracle(steps: usize) -> OracleComparison {
    let period = 40.0;
    let history = shear_history(0.01, period);
    let model = CrystalModel::new(CrystalParams::with_activation_volume(ACTIVATION_VOLUME));
    let grain = model.kernel(Matrix3::identity());
    let mut state = MaterialPointState::default();
    let dt = period / steps as f64;
    let mut ours = vec![Matrix3::zeros()];
    for k in 1..=steps {
        let r = model.stress_update(&grain, &history(k as f64 * dt), &state, dt, false).unwrap();
        state = r.state;
        ours.push(r.p);
    }
    let oracle = OracleMaterial::table(ACTIVATION_VOLUME).integrate(&history, period, steps * 100, steps);
    let peak = oracle.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let worst = ours.iter().zip(&oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / peak;
    let end = (ours[steps] - oracle[steps]).norm() / oracle[steps].norm();
    OracleComparison { end, worst }
}

/// Largest relative deviation between the analytic tangent and central
/// differences (step 1e-7) over `samples` random plastic states.
pub fn tangent_fd_error(samples: usize, seed: u64) -> f64 {
    let model = CrystalModel::new(CrystalParams::with_activation_volume(ACTIVATION_VOLUME));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let rot = Rotation3::from_euler_angles(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0));
        let grain = model.kernel(rot.into_inner());
        let dir = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let dir = dir / dir.norm();
        let amp = rng.random_range(0.004..0.015);
        let dt = rng.random_range(0.05..1.0);
        // Walk a short random path to build up plastic history.
        let mut state = MaterialPointState::default();
        let n = 8;
        for k in 1..=n {
            let f = Matrix3::identity() + dir * (amp * k as f64 / n as f64);
            state = model.stress_update(&grain, &f, &state, dt, false).unwrap().state;
        }
        state.rho_gnd = rng.random_range(0.0..1e6);
        let f = Matrix3::identity() + dir * (amp * 1.05);
        let k = model.consistent_tangent(&grain, &f, &state, dt).unwrap();
        let h = 1e-7;
        let mut fd = Tensor4::zeros();
        for c in 0..9 {
            let mut e = Matrix3::zeros();
            e[(c / 3, c % 3)] = h;
            let pp = model.stress_update(&grain, &(f + e), &state, dt, false).unwrap().p;
            let pm = model.stress_update(&grain, &(f - e), &state, dt, false).unwrap().p;
            fd.set_column(c, &flatten(&((pp - pm) / (2.0 * h))));
        }
        worst = worst.max((k - fd).norm() / fd.norm());
    }
    worst
}
