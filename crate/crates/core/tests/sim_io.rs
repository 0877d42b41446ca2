use std::f64::consts::PI;
use std::path::Path;

use proptest::prelude::*;
use spectral_fatigue::grid::VoxelGrid;
use spectral_fatigue::microstructure::{orientation_100, GrainMap};
use spectral_fatigue::sim::config::MicrostructureSpec;
use spectral_fatigue::sim::runner::{CONFIG_FILE, GRAIN_MAP_FILE, GROWTH_FILE, HISTORY_FILE, RUN_INFO_FILE, SNAPSHOT_DIR};
use spectral_fatigue::sim::*;

const MINIMAL: &str = r#"
[grid]
dims = [4, 4, 1]
voxel_length = 0.78

[material]
activation_volume = 1e-20

[phase_field]
stored_energy_fraction = 0.1

[microstructure]
kind = "single"
orientation = "100"
"#;

fn small_run_config(dir: &Path) -> String {
    format!(
        r#"
seed = 3
[grid]
dims = [6, 6, 1]
voxel_length = 0.78
[material]
activation_volume = 1e-20
[phase_field]
stored_energy_fraction = 0.1
ell = 2.34
[solver]
increments_per_quarter = 2
[microstructure]
kind = "polycrystal"
n_grains = 3
mean_diameter = 2.5
[soft]
centre_crack = true
[load]
strain_max = 0.004
strain_rate = 1e-3
max_cycles = 2
[output]
directory = "{}"
"#,
        dir.display()
    )
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.material.c11, 250.0);
    assert_eq!(cfg.material.c12, 161.0);
    assert_eq!(cfg.material.c44, 129.0);
    assert_eq!(cfg.material.tau_c0, 350.0);
    assert_eq!(cfg.phase_field.g_crit, 4.0);
    assert_eq!(cfg.phase_field.zeta, 1.0);
    assert_eq!(cfg.gnd.ell_fp, 1.56);
    assert_eq!(cfg.load.strain_max, 0.02);
    assert_eq!(cfg.load.strain_ratio, 0.0);
    assert_eq!(cfg.load.strain_rate, 1e-3);
    assert_eq!(cfg.solver.tol_stag, 5e-3);
    assert_eq!(cfg.soft.factor, 1e-5);
    assert_eq!(cfg.output.fields.len(), SnapshotField::ALL.len());
}

#[test]
fn missing_required_keys_are_listed() {
    let no_dv = MINIMAL.replace("activation_volume = 1e-20", "");
    match ExperimentConfig::parse(&no_dv) {
        Err(SimError::MissingKeys(keys)) => assert_eq!(keys, vec!["material.activation_volume".to_string()]),
        other => panic!("expected missing-key error, got {other:?}"),
    }
    let neither = no_dv.replace("stored_energy_fraction = 0.1", "");
    let err = ExperimentConfig::parse(&neither).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("material.activation_volume") && msg.contains("phase_field.stored_energy_fraction"), "{msg}");
}

#[test]
fn unknown_keys_are_rejected() {
    let bad = MINIMAL.replace("voxel_length = 0.78", "voxel_length = 0.78\nvoxel_size = 1.0");
    assert!(matches!(ExperimentConfig::parse(&bad), Err(SimError::Config(_))));
    let bad_section = format!("{MINIMAL}\n[extras]\nx = 1\n");
    assert!(ExperimentConfig::parse(&bad_section).is_err());
}

#[test]
fn out_of_range_values_fail_validation() {
    let cfg = ExperimentConfig::parse(&MINIMAL.replace("stored_energy_fraction = 0.1", "stored_energy_fraction = 1.5"))
        .unwrap();
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::parse(MINIMAL).unwrap();
    cfg.output.crack_threshold = 1.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn config_round_trips() {
    let full = format!(
        "{}\n[soft]\ncentre_crack = true\nboxes = [[[0.0, 0.25], [0.4, 0.6], [0.0, 1.0]]]\nbuffers = {{ axis = 0, thickness = 1 }}\n[output]\ncrack_geometry = \"edge\"\nfields = [\"phi\", \"grain_id\"]\n",
        MINIMAL.replace(
            "kind = \"single\"\norientation = \"100\"",
            "kind = \"bicrystal\"\nwidth = 1.0\ninner = \"111\"\nouter = { quaternion = [1.0, 0.0, 0.0, 0.0] }"
        )
    );
    for text in [MINIMAL.to_string(), full] {
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}

#[test]
fn grain_map_file_paths_resolve_and_must_exist() {
    let dir = tempfile::tempdir().unwrap();
    let grid = VoxelGrid::with_voxel_length([4, 4, 1], 0.78).unwrap();
    GrainMap::single(grid, orientation_100()).save(&dir.path().join("map.gmap")).unwrap();
    let text = MINIMAL.replace("kind = \"single\"\norientation = \"100\"", "kind = \"file\"\npath = \"map.gmap\"");
    let cfg_path = dir.path().join("exp.toml");
    std::fs::write(&cfg_path, &text).unwrap();
    let cfg = ExperimentConfig::from_file(&cfg_path).unwrap();
    assert_eq!(cfg.microstructure, MicrostructureSpec::File { path: dir.path().join("map.gmap") });
    assert_eq!(cfg.grain_map().unwrap().n_grains(), 1);

    std::fs::write(&cfg_path, text.replace("map.gmap", "absent.gmap")).unwrap();
    assert!(ExperimentConfig::from_file(&cfg_path).is_err());
}

#[test]
fn constant_snapshot_round_trips_exactly() {
    let grid = VoxelGrid::with_voxel_length([4, 4, 4], 0.78).unwrap();
    let mut snap = Snapshot::new(&grid, "constant");
    snap.add_float("phi", vec![0.5; 64]).unwrap();
    let ids: Vec<i32> = (0..64).map(|v| v % 7).collect();
    snap.add_int("grain_id", ids.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.vtk");
    snap.save(&path).unwrap();
    let back = Snapshot::load(&path).unwrap();
    assert_eq!(back, snap);
    assert_eq!(back.get("phi"), Some(&FieldData::Float(vec![0.5; 64])));
    assert_eq!(back.get("grain_id"), Some(&FieldData::Int(ids)));
}

#[test]
fn unwritable_snapshot_path_fails() {
    let grid = VoxelGrid::with_voxel_length([2, 2, 2], 1.0).unwrap();
    let snap = Snapshot::new(&grid, "x");
    assert!(snap.save(Path::new("/nonexistent-dir/sub/s.vtk")).is_err());
}

fn edge_gauge(n: usize, notch_len: usize) -> CrackGauge {
    let grid = VoxelGrid::with_voxel_length([n, n, 1], 0.5).unwrap();
    let notch = (0..grid.len()).map(|v| {
        let c = grid.coords(v);
        c[1] == n / 2 && c[0] < notch_len
    });
    CrackGauge {
        grid,
        notch: notch.collect(),
        excluded: vec![false; grid.len()],
        geometry: CrackGeometry::Edge,
        axis: 0,
        surface_offset: 0,
    }
}

#[test]
fn undamaged_crack_is_the_notch() {
    let g = edge_gauge(32, 5);
    assert_eq!(g.length(&vec![0.0; g.grid.len()], 0.9), 5.0 * 0.5);
}

#[test]
fn band_beyond_notch_adds_its_length() {
    let g = edge_gauge(32, 5);
    let mut phi = vec![0.0; g.grid.len()];
    for i in 5..15 {
        phi[g.grid.index(i, 16, 0)] = 0.95;
    }
    // Detached damage does not count.
    phi[g.grid.index(25, 3, 0)] = 1.0;
    assert_eq!(g.length(&phi, 0.9), 15.0 * 0.5);
    assert_eq!(g.length(&phi, 0.96), 5.0 * 0.5);
}

#[test]
fn connectivity_does_not_wrap() {
    let g = edge_gauge(16, 3);
    let mut phi = vec![0.0; g.grid.len()];
    // Damage touching the far x face is not connected to the notch at x = 0.
    for i in 12..16 {
        phi[g.grid.index(i, 8, 0)] = 1.0;
    }
    assert_eq!(g.length(&phi, 0.9), 3.0 * 0.5);
}

#[test]
fn edge_length_from_surface_and_centre_half_extent() {
    let mut g = edge_gauge(32, 8);
    for i in 0..2 {
        for j in 0..32 {
            let v = g.grid.index(i, j, 0);
            g.excluded[v] = true;
            g.notch[v] = false;
        }
    }
    g.surface_offset = 2;
    let phi = vec![0.0; g.grid.len()];
    assert_eq!(g.length(&phi, 0.9), 6.0 * 0.5);

    let grid = VoxelGrid::with_voxel_length([32, 32, 1], 0.5).unwrap();
    let notch: Vec<bool> = (0..grid.len()).map(|v| {
        let c = grid.coords(v);
        c[1] == 16 && (12..20).contains(&c[0])
    }).collect();
    let mut phi = vec![0.0; grid.len()];
    for i in 20..24 {
        phi[grid.index(i, 16, 0)] = 1.0;
    }
    let centre = CrackGauge { grid, notch, excluded: vec![false; grid.len()], geometry: CrackGeometry::Centre, axis: 0, surface_offset: 0 };
    assert_eq!(centre.length(&phi, 0.9), 0.5 * 12.0 * 0.5);
}

#[test]
fn stress_intensity_examples() {
    let oracle = 1.1215 * 100.0 * (PI * 100e-6).sqrt();
    assert!((stress_intensity_range(100.0, 100.0) - oracle).abs() < 1e-12);
    assert!((oracle - 1.988).abs() < 1e-3);
    assert_eq!(stress_intensity_range(200.0, 100.0), 2.0 * stress_intensity_range(100.0, 100.0));
}

fn record(time: f64, cycle: usize, stress: f64, a: f64) -> HistoryRecord {
    HistoryRecord {
        time,
        cycle,
        strain_axial: 0.0,
        stress_axial: stress,
        phi_max: 0.0,
        crack_length: a,
        damaged_fraction: 0.0,
    }
}

#[test]
fn growth_table_from_history() {
    let history = vec![
        record(1.0, 1, 100.0, 10.0),
        record(2.0, 1, -50.0, 12.0),
        record(3.0, 2, 90.0, 13.0),
        record(4.0, 2, -60.0, 15.0),
        record(5.0, 3, 80.0, 15.0),
        record(6.0, 3, -70.0, 19.0),
    ];
    let rows = dadn_dk(&history);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].cycle, 2);
    assert_eq!(rows[0].dadn, 3.0);
    assert_eq!(rows[0].delta_sigma, 150.0);
    assert_eq!(rows[0].delta_k, stress_intensity_range(150.0, 15.0));
    assert_eq!(rows[1].dadn, 4.0);
    assert_eq!(rows[1].crack_length, 19.0);

    let flat: Vec<_> = history.iter().map(|r| HistoryRecord { crack_length: 7.0, ..r.clone() }).collect();
    assert!(dadn_dk(&flat).is_empty());
}

#[test]
fn history_csv_schema_and_round_trip() {
    let records = vec![record(0.5, 1, 12.25, 3.0), record(1.0, 1, -1e-7, 3.5)];
    let mut buf = Vec::new();
    write_history(&mut buf, &records).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), "time_s,cycle,strain_axial,stress_axial_MPa,phi_max,crack_length_um,damaged_fraction");
    assert_eq!(text.lines().count(), 3);
    assert_eq!(read_history(buf.as_slice()).unwrap(), records);
}

#[test]
fn run_writes_self_contained_output_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let cfg = ExperimentConfig::parse(&small_run_config(&first)).unwrap();
    let summary = run_experiment(&cfg).unwrap();
    for f in [CONFIG_FILE, GRAIN_MAP_FILE, HISTORY_FILE, RUN_INFO_FILE] {
        assert!(first.join(f).is_file(), "{f} missing");
    }
    let snaps: Vec<_> = std::fs::read_dir(first.join(SNAPSHOT_DIR)).unwrap().collect();
    // Two peaks, two valleys and the final state.
    assert_eq!(snaps.len(), 5);
    let fin = Snapshot::load(&first.join(SNAPSHOT_DIR).join("final.vtk")).unwrap();
    assert_eq!(fin.get("phi"), Some(&FieldData::Float(summary.final_phi.clone())));
    assert!(matches!(fin.get("grain_id"), Some(FieldData::Int(_))));

    let history = read_history(std::fs::File::open(first.join(HISTORY_FILE)).unwrap()).unwrap();
    assert_eq!(history, summary.history);
    assert!(history.windows(2).all(|w| w[1].time > w[0].time && w[1].crack_length >= w[0].crack_length));

    // Rerun from the copied configuration into another directory.
    let mut copied = ExperimentConfig::from_file(&first.join(CONFIG_FILE)).unwrap();
    let second = dir.path().join("second");
    copied.output.directory = second.clone();
    run_experiment(&copied).unwrap();
    assert_eq!(std::fs::read(first.join(HISTORY_FILE)).unwrap(), std::fs::read(second.join(HISTORY_FILE)).unwrap());

    postprocess(&first).unwrap();
    let growth = std::fs::read_to_string(first.join(GROWTH_FILE)).unwrap();
    assert!(growth.starts_with("cycle,crack_length_um,delta_sigma_MPa,delta_K_MPa_sqrt_m,da_dN_um_per_cycle"));
}

#[test]
fn generate_writes_a_loadable_grain_map() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&small_run_config(dir.path())).unwrap();
    let path = dir.path().join("maps").join("g.gmap");
    let map = generate(&cfg, &path).unwrap();
    assert_eq!(GrainMap::load(&path).unwrap(), map);
    assert_eq!(map, cfg.grain_map().unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lowering_threshold_never_shortens_crack(
        phi in proptest::collection::vec(0.0f64..1.0, 16 * 16),
        t_hi in 0.5f64..0.99,
        dt in 0.0f64..0.5,
    ) {
        let g = edge_gauge(16, 4);
        let t_lo = t_hi - dt;
        prop_assert!(g.length(&phi, t_lo) >= g.length(&phi, t_hi));
    }

    #[test]
    fn snapshot_arrays_round_trip_bitwise(
        values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 3 * 2 * 2),
        ints in proptest::collection::vec(any::<i32>(), 3 * 2 * 2),
    ) {
        let grid = VoxelGrid::with_voxel_length([3, 2, 2], 0.3).unwrap();
        let mut snap = Snapshot::new(&grid, "prop");
        snap.add_float("a", values).unwrap();
        snap.add_int("b", ints).unwrap();
        let mut buf = Vec::new();
        snap.write_to(&mut buf).unwrap();
        prop_assert_eq!(Snapshot::read_from(buf.as_slice()).unwrap(), snap);
    }
}
