use spectral_fatigue::crystal::CrystalModel;
use spectral_fatigue::grid::Spectral;
use spectral_fatigue::phase_field::PhaseFieldSolver;
use spectral_fatigue::sim::{ExperimentConfig, Setup};
use spectral_fatigue::solver::mechanics::{field_mean, uniform_field};
use spectral_fatigue::solver::stagger::{Coupling, SolutionState};
use spectral_fatigue::solver::{ControlMask, IncrementRecord, MaterialLayout, Mechanics, RunOutcome, Simulation};
use spectral_fatigue::tensor::Mat3;

fn config(extra: &str) -> ExperimentConfig {
    let text = format!(
        r#"
seed = 11
[grid]
dims = [8, 8, 1]
voxel_length = 0.78
[material]
activation_volume = 1e-20
[phase_field]
stored_energy_fraction = 0.1
[solver]
increments_per_quarter = 3
[microstructure]
kind = "polycrystal"
n_grains = 4
mean_diameter = 3.5
{extra}
"#
    );
    let cfg = ExperimentConfig::parse(&text).unwrap();
    cfg.validate().unwrap();
    cfg
}

/// Runs the configured program, recording every increment.
fn run(cfg: &ExperimentConfig) -> (Setup, Vec<(IncrementRecord, SolutionState)>, RunOutcome) {
    let setup = cfg.setup().unwrap();
    let spectral = Spectral::new(setup.grid);
    let model = CrystalModel::new(cfg.material.clone());
    let layout = MaterialLayout::new(&model, &setup.map.rotations(), &setup.map.grain_id, &setup.soft.mask, setup.soft.factor);
    let mech = Mechanics::new(&spectral, &layout, &model, cfg.phase_field.k_res, &cfg.solver);
    let coupling = Coupling { mech, phase_field: &cfg.phase_field, pf_solver: PhaseFieldSolver::default(), ell_fp: cfg.gnd.ell_fp };
    let initial = SolutionState::initial(&coupling.mech, vec![0.0; setup.grid.len()]).unwrap();
    let sim = Simulation { coupling, program: cfg.load.clone(), control: ControlMask::uniaxial(cfg.load.axis) };
    let mut records = Vec::new();
    let outcome = sim
        .run(initial, |rec, st| {
            records.push((rec.clone(), st.clone()));
            true
        })
        .unwrap();
    (setup, records, outcome)
}

#[test]
fn no_driving_force_gives_single_pass_and_no_damage() {
    let mut cfg = config("[load]\nstrain_max = 0.01\nmax_cycles = 1");
    cfg.phase_field.g_crit = 1e12;
    let (_, records, _) = run(&cfg);
    assert!(!records.is_empty());
    for (rec, st) in &records {
        assert_eq!(rec.report.passes, 1, "increment {}", rec.index);
        assert!(st.phi.iter().all(|&p| p == 0.0));
    }
    // Plasticity did occur, so the single pass is not trivial.
    assert!(records.last().unwrap().1.states.iter().any(|s| s.accumulated_slip > 0.0));
}

#[test]
fn macroscopic_quantities_are_volume_averages() {
    let cfg = config("[load]\nstrain_max = 0.01\nmax_cycles = 1\n[soft]\ncentre_crack = true");
    let (_, records, _) = run(&cfg);
    for (rec, st) in &records {
        let mean_f = field_mean(&st.f);
        let mean_p = field_mean(&st.p);
        assert!((mean_f - st.f_bar).abs().max() < 1e-12);
        assert!((mean_p - st.p_bar).abs().max() <= 1e-9 * st.p_bar.abs().max().max(1.0));
        assert!((st.f_bar[(1, 1)] - 1.0 - rec.strain).abs() < 1e-12);
        assert_eq!(rec.stress, st.p_bar[(1, 1)]);
    }
}

#[test]
fn zero_amplitude_program_stays_at_rest() {
    let mut cfg = config("[load]\nstrain_max = 0.0\nmax_cycles = 3");
    cfg.load.strain_max = 0.0;
    let (_, records, outcome) = run(&cfg);
    assert_eq!(records.last().unwrap().0.cycle, 3);
    for (rec, st) in &records {
        assert_eq!(rec.strain, 0.0);
        assert!(rec.stress.abs() < 1e-9);
        assert!(st.states.iter().all(|s| s.accumulated_slip == 0.0 && s.gs == 0.0));
    }
    assert!(outcome.failure_cycle().is_none());
}

#[test]
fn elastic_cycle_closes_its_loop() {
    let cfg = config("[load]\nstrain_max = 0.001\nmax_cycles = 2");
    let (_, records, _) = run(&cfg);
    let mut area = 0.0;
    let mut last = (0.0, 0.0);
    let mut peak: f64 = 0.0;
    for (rec, st) in &records {
        area += 0.5 * (rec.stress + last.1) * (rec.strain - last.0);
        last = (rec.strain, rec.stress);
        peak = peak.max(rec.stress.abs());
        assert!(st.states.iter().all(|s| s.accumulated_slip == 0.0));
    }
    let (end, _) = records.last().unwrap();
    assert_eq!(end.strain, 0.0);
    assert!(end.stress.abs() < 1e-8 * peak, "residual stress {}", end.stress);
    assert!(area.abs() < 1e-8 * peak * 0.001, "loop area {area}");
}

#[test]
fn soft_voxels_never_plastify_or_store_energy() {
    let mut cfg = config("[load]\nstrain_max = 0.02\nmax_cycles = 1\n[soft]\ncentre_crack = true\nbuffers = { axis = 0, thickness = 1 }");
    cfg.solver.tol_lin = 1e-3;
    cfg.solver.krylov_restart = 300;
    cfg.solver.max_krylov = 3000;
    let (setup, records, _) = run(&cfg);
    let (_, last) = records.last().unwrap();
    assert!(setup.soft.count() > 0);
    for (v, st) in last.states.iter().enumerate() {
        if setup.soft.mask[v] {
            assert_eq!(st.accumulated_slip, 0.0);
            assert_eq!(st.gs, 0.0);
            assert_eq!(st.rho_gnd, 0.0);
            assert_eq!(st.fp, Mat3::identity());
        }
    }
    assert!(last.states.iter().zip(&setup.soft.mask).any(|(s, m)| !m && s.accumulated_slip > 0.0));
}

#[test]
fn free_surface_buffers_carry_no_traction() {
    let mut cfg = config("[soft]\nbuffers = { axis = 0, thickness = 2 }");
    cfg.grid.dims = [32, 16, 1];
    cfg.solver.tol_lin = 1e-3;
    cfg.solver.krylov_restart = 300;
    cfg.solver.max_krylov = 3000;
    cfg.microstructure = spectral_fatigue::sim::config::MicrostructureSpec::Polycrystal {
        n_grains: 6,
        mean_diameter: 6.0,
        sigma: 0.1,
    };
    let setup = cfg.setup().unwrap();
    let spectral = Spectral::new(setup.grid);
    let model = CrystalModel::new(cfg.material.clone());
    let layout = MaterialLayout::new(&model, &setup.map.rotations(), &setup.map.grain_id, &setup.soft.mask, setup.soft.factor);
    let mech = Mechanics::new(&spectral, &layout, &model, 0.0, &cfg.solver);
    let n = setup.grid.len();
    let mut target = Mat3::identity();
    target[(1, 1)] += 1e-3;
    let f_t = uniform_field(&Mat3::identity(), n);
    let mut f = uniform_field(&target, n);
    let prev = vec![Default::default(); n];
    let (eval, _) = mech.solve(&mut f, &f_t, &vec![0.0; n], &prev, 1.0, &ControlMask::uniaxial(1)).unwrap();
    let axial = eval.mean_p[(1, 1)];
    // Traction P e_x on the plane between the two buffer layers at x = 0.
    let plane: Vec<usize> = (0..n).filter(|&v| setup.grid.coords(v)[0] <= 1).collect();
    let traction: f64 = plane
        .iter()
        .map(|&v| (0..3).map(|i| eval.p[3 * i][v].powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / plane.len() as f64;
    assert!(traction < 1e-3 * axial.abs(), "traction {traction:e} axial {axial:e}");
}
