//! Runs an experiment and writes its output directory:
//!
//! | file                       | content                                  |
//! |----------------------------|------------------------------------------|
//! | `config.toml`              | the resolved configuration               |
//! | `microstructure.gmap`      | grain map                                |
//! | `history.csv`              | one row per committed increment          |
//! | `snapshots/*.vtk`          | field snapshots                          |
//! | `run_info.toml`            | stop reason and definitions              |
//! | `dadn.csv`                 | growth table, written by `postprocess`   |

use std::fs::File;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{CrackGeometry, ExperimentConfig, Setup, SnapshotCadence, SnapshotField};
use super::crack::{dadn_dk, CrackGauge, GrowthRow};
use super::history::{read_history, HistoryRecord, HistoryWriter};
use super::vtk::Snapshot;
use super::SimError;
use crate::crystal::CrystalModel;
use crate::grid::{ScalarField, Spectral};
use crate::microstructure::GrainMap;
use crate::phase_field::PhaseFieldSolver;
use crate::solver::stagger::{Coupling, SolutionState};
use crate::solver::{ControlMask, MaterialLayout, Mechanics, Simulation, StopReason};
use crate::tensor::Mat3;

pub const CONFIG_FILE: &str = "config.toml";
pub const GRAIN_MAP_FILE: &str = "microstructure.gmap";
pub const HISTORY_FILE: &str = "history.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const RUN_INFO_FILE: &str = "run_info.toml";
pub const GROWTH_FILE: &str = "dadn.csv";

/// Definition of the stress range used for stress intensity ranges.
pub const STRESS_RANGE_DEFINITION: &str =
    "peak-to-valley range of the mean axial first Piola-Kirchhoff stress within each cycle";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunInfo {
    stop_reason: String,
    failure_cycle: Option<usize>,
    increments: usize,
    stress_range_definition: String,
    history_units: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub stop: StopReason,
    pub increments: usize,
    pub history: Vec<HistoryRecord>,
    pub final_phi: ScalarField,
    pub output_dir: PathBuf,
}

impl RunSummary {
    pub fn failure_cycle(&self) -> Option<usize> {
        match self.stop {
            StopReason::UnstableCrack { cycle } => Some(cycle),
            _ => None,
        }
    }
}

/// Crack gauge for the configured geometry.
pub fn crack_gauge(cfg: &ExperimentConfig, setup: &Setup) -> CrackGauge {
    let axis = cfg.output.crack_axis;
    let surface_offset = match (&cfg.soft.buffers, cfg.output.crack_geometry) {
        (Some(b), CrackGeometry::Edge) if b.axis == axis => b.thickness,
        _ => 0,
    };
    CrackGauge {
        grid: setup.grid,
        notch: setup.notch_mask(),
        excluded: setup.buffer_mask.clone(),
        geometry: cfg.output.crack_geometry,
        axis,
        surface_offset,
    }
}

fn von_mises(p: &Mat3, f: &Mat3) -> f64 {
    let sigma = p * f.transpose() / f.determinant();
    let dev = sigma - Mat3::identity() * (sigma.trace() / 3.0);
    (1.5 * dev.component_mul(&dev).sum()).sqrt()
}

fn snapshot(
    state: &SolutionState,
    map: &GrainMap,
    fields: &[SnapshotField],
    title: &str,
) -> Result<Snapshot, SimError> {
    let mut snap = Snapshot::new(&map.grid, title);
    let n = map.grid.len();
    let at = |field: &crate::grid::TensorField, v: usize| Mat3::from_fn(|i, j| field[3 * i + j][v]);
    for &field in fields {
        let name = field.name();
        match field {
            SnapshotField::Phi => snap.add_float(name, state.phi.clone())?,
            SnapshotField::StoredEnergy => snap.add_float(name, state.states.iter().map(|s| s.gs).collect())?,
            SnapshotField::RhoSsd => snap.add_float(name, state.states.iter().map(|s| s.rho_ssd).collect())?,
            SnapshotField::RhoGnd => snap.add_float(name, state.states.iter().map(|s| s.rho_gnd).collect())?,
            SnapshotField::GrainId => snap.add_int(name, map.grain_id.iter().map(|&g| g as i32).collect())?,
            SnapshotField::VonMises => {
                snap.add_float(name, (0..n).map(|v| von_mises(&at(&state.p, v), &at(&state.f, v))).collect())?
            }
            SnapshotField::AccumulatedSlip => {
                snap.add_float(name, state.states.iter().map(|s| s.accumulated_slip).collect())?
            }
        }
    }
    Ok(snap)
}

fn io_context(path: &Path) -> impl Fn(std::io::Error) -> SimError + '_ {
    move |e| SimError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Runs the experiment, writing into `cfg.output.directory`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, SimError> {
    cfg.validate()?;
    let setup = cfg.setup()?;
    let out_dir = cfg.output.directory.clone();
    let snap_dir = out_dir.join(SNAPSHOT_DIR);
    std::fs::create_dir_all(&snap_dir).map_err(io_context(&snap_dir))?;
    std::fs::write(out_dir.join(CONFIG_FILE), cfg.to_toml()?).map_err(io_context(&out_dir))?;
    setup.map.save(&out_dir.join(GRAIN_MAP_FILE))?;

    let grid = setup.grid;
    let spectral = Spectral::new(grid);
    let model = CrystalModel::new(cfg.material.clone());
    let layout = MaterialLayout::new(&model, &setup.map.rotations(), &setup.map.grain_id, &setup.soft.mask, setup.soft.factor);
    let mech = Mechanics::new(&spectral, &layout, &model, cfg.phase_field.k_res, &cfg.solver);
    let pf_solver =
        PhaseFieldSolver { tolerance: cfg.solver.tol_phase_field, max_iterations: cfg.solver.max_phase_field };
    let coupling = Coupling { mech, phase_field: &cfg.phase_field, pf_solver, ell_fp: cfg.gnd.ell_fp };
    let initial = SolutionState::initial(&coupling.mech, vec![0.0; grid.len()])?;
    let sim = Simulation { coupling, program: cfg.load.clone(), control: ControlMask::uniaxial(cfg.load.axis) };

    let gauge = crack_gauge(cfg, &setup);
    let threshold = cfg.output.crack_threshold;
    let history_path = out_dir.join(HISTORY_FILE);
    let mut writer = HistoryWriter::new(File::create(&history_path).map_err(io_context(&history_path))?);
    let mut history = Vec::new();
    let mut failure: Option<SimError> = None;

    let outcome = sim.run(initial, |rec, state| {
        let record = HistoryRecord {
            time: rec.time,
            cycle: rec.cycle,
            strain_axial: rec.strain,
            stress_axial: rec.stress,
            phi_max: state.phi.iter().copied().fold(0.0, f64::max),
            crack_length: gauge.length(&state.phi, threshold),
            damaged_fraction: CrackGauge::damaged_fraction(&state.phi, threshold),
        };
        let result = writer.write(&record).and_then(|_| {
            if cfg.output.snapshots == SnapshotCadence::Extrema && (rec.at_peak || rec.at_valley) {
                let kind = if rec.at_peak { "peak" } else { "valley" };
                let title = format!("increment {} cycle {} {kind} t={}", rec.index, rec.cycle, rec.time);
                snapshot(state, &setup.map, &cfg.output.fields, &title)?
                    .save(&snap_dir.join(format!("increment_{:06}.vtk", rec.index)))?;
            }
            Ok(())
        });
        history.push(record);
        match result {
            Ok(()) => true,
            Err(e) => {
                failure = Some(e);
                false
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if cfg.output.snapshots != SnapshotCadence::None {
        snapshot(&outcome.final_state, &setup.map, &cfg.output.fields, "final state")?
            .save(&snap_dir.join("final.vtk"))?;
    }
    let info = RunInfo {
        stop_reason: format!("{:?}", outcome.stop),
        failure_cycle: outcome.failure_cycle(),
        increments: outcome.increments,
        stress_range_definition: STRESS_RANGE_DEFINITION.to_string(),
        history_units: "time s, strain dimensionless, stress MPa, crack length um".to_string(),
    };
    let info_text = toml::to_string(&info).map_err(|e| SimError::Config(e.to_string()))?;
    std::fs::write(out_dir.join(RUN_INFO_FILE), info_text).map_err(io_context(&out_dir))?;
    info!("run finished: {:?} after {} increments", outcome.stop, outcome.increments);
    Ok(RunSummary {
        stop: outcome.stop,
        increments: outcome.increments,
        history,
        final_phi: outcome.final_state.phi,
        output_dir: out_dir,
    })
}

/// Reads `history.csv` from a run directory and writes `dadn.csv`.
pub fn postprocess(out_dir: &Path) -> Result<Vec<GrowthRow>, SimError> {
    let path = out_dir.join(HISTORY_FILE);
    let history = read_history(File::open(&path).map_err(io_context(&path))?)?;
    let rows = dadn_dk(&history);
    let out = out_dir.join(GROWTH_FILE);
    let mut w = csv::Writer::from_writer(File::create(&out).map_err(io_context(&out))?);
    if rows.is_empty() {
        w.write_record(["cycle", "crack_length_um", "delta_sigma_MPa", "delta_K_MPa_sqrt_m", "da_dN_um_per_cycle"])?;
    }
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Builds the configured grain map and writes it to `path`.
pub fn generate(cfg: &ExperimentConfig, path: &Path) -> Result<GrainMap, SimError> {
    cfg.validate()?;
    let map = cfg.grain_map()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_context(dir))?;
    }
    map.save(path)?;
    Ok(map)
}
