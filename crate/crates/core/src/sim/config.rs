//! Experiment configuration file (TOML).

use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::crystal::CrystalParams;
use crate::grid::VoxelGrid;
use crate::microstructure::{
    banded_bicrystal, centre_crack_box, generate_polycrystal, lattice_orientation, orientation_100, orientation_111,
    random_orientation, GrainMap, PolycrystalSpec, SoftRegion, DEFAULT_SOFT_FACTOR,
};
use crate::phase_field::PhaseFieldParams;
use crate::solver::{LoadProgram, SolverConfig};

/// Keys that have no default and must appear in every configuration.
pub const REQUIRED_KEYS: [(&str, &str); 2] =
    [("material", "activation_volume"), ("phase_field", "stored_energy_fraction")];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for tessellation and random orientations.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    pub material: CrystalParams,
    pub phase_field: PhaseFieldParams,
    #[serde(default)]
    pub gnd: GndSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    pub microstructure: MicrostructureSpec,
    #[serde(default)]
    pub soft: SoftSpec,
    #[serde(default)]
    pub load: LoadProgram,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Voxel counts along x, y, z.
    pub dims: [usize; 3],
    /// Voxel edge length (um).
    pub voxel_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GndSpec {
    /// Regularisation length applied to Fp before the curl (um).
    #[serde(default = "default_ell_fp")]
    pub ell_fp: f64,
}

fn default_ell_fp() -> f64 {
    1.56
}

impl Default for GndSpec {
    fn default() -> Self {
        Self { ell_fp: default_ell_fp() }
    }
}

/// Crystal orientation of a grain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Cube axes aligned with the sample axes.
    #[serde(rename = "100")]
    Cube,
    /// Crystal [111] along the sample y axis.
    #[serde(rename = "111")]
    Axis111,
    /// Uniformly random, drawn from the experiment seed.
    Random,
    /// Crystal directions lying along sample x and y.
    Lattice { x: [f64; 3], y: [f64; 3] },
    /// Crystal-to-sample rotation `[w, x, y, z]`.
    Quaternion([f64; 4]),
}

impl Orientation {
    fn resolve(&self, rng: &mut ChaCha8Rng) -> Result<UnitQuaternion<f64>, SimError> {
        Ok(match self {
            Orientation::Cube => orientation_100(),
            Orientation::Axis111 => orientation_111(),
            Orientation::Random => random_orientation(rng),
            Orientation::Lattice { x, y } => lattice_orientation(*x, *y)?,
            Orientation::Quaternion([w, x, y, z]) => {
                let q = Quaternion::new(*w, *x, *y, *z);
                if !(q.norm() > 0.0) {
                    return Err(SimError::Config("orientation quaternion must be nonzero".into()));
                }
                UnitQuaternion::from_quaternion(q)
            }
        })
    }
}

fn default_sigma() -> f64 {
    0.1
}
fn default_band_angle() -> f64 {
    45.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MicrostructureSpec {
    Single {
        orientation: Orientation,
    },
    /// Periodic Laguerre tessellation with random orientations.
    Polycrystal {
        n_grains: usize,
        /// Mean equivalent diameter (um).
        mean_diameter: f64,
        /// Log-normal shape parameter of the diameters.
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// Band of `inner` of width `width` (um) through the domain centre at
    /// `angle_deg` to x, embedded in `outer`.
    Bicrystal {
        #[serde(default = "default_band_angle")]
        angle_deg: f64,
        width: f64,
        inner: Orientation,
        outer: Orientation,
    },
    /// Grain map file; relative paths are taken from the configuration file.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSpec {
    pub axis: usize,
    /// Layer thickness in voxels.
    pub thickness: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftSpec {
    #[serde(default = "default_soft_factor")]
    pub factor: f64,
    /// Adds the centred through-thickness pre-crack.
    #[serde(default)]
    pub centre_crack: bool,
    /// Closed boxes in domain fractions `[[x0, x1], [y0, y1], [z0, z1]]`.
    #[serde(default)]
    pub boxes: Vec<[[f64; 2]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffers: Option<BufferSpec>,
}

fn default_soft_factor() -> f64 {
    DEFAULT_SOFT_FACTOR
}

impl Default for SoftSpec {
    fn default() -> Self {
        Self { factor: DEFAULT_SOFT_FACTOR, centre_crack: false, boxes: Vec::new(), buffers: None }
    }
}

/// When field snapshots are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotCadence {
    /// Every strain peak and valley, plus the final state.
    Extrema,
    /// Final state only.
    Final,
    None,
}

/// Field written to a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotField {
    Phi,
    StoredEnergy,
    RhoSsd,
    RhoGnd,
    GrainId,
    VonMises,
    AccumulatedSlip,
}

impl SnapshotField {
    pub const ALL: [SnapshotField; 7] = [
        SnapshotField::Phi,
        SnapshotField::StoredEnergy,
        SnapshotField::RhoSsd,
        SnapshotField::RhoGnd,
        SnapshotField::GrainId,
        SnapshotField::VonMises,
        SnapshotField::AccumulatedSlip,
    ];

    /// Array name used in snapshot files.
    pub fn name(self) -> &'static str {
        match self {
            SnapshotField::Phi => "phi",
            SnapshotField::StoredEnergy => "stored_energy",
            SnapshotField::RhoSsd => "rho_ssd",
            SnapshotField::RhoGnd => "rho_gnd",
            SnapshotField::GrainId => "grain_id",
            SnapshotField::VonMises => "von_mises_stress",
            SnapshotField::AccumulatedSlip => "accumulated_slip",
        }
    }
}

/// Geometry used to measure crack length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrackGeometry {
    /// Crack grows from a free surface; length measured from the surface.
    Edge,
    /// Embedded crack; length is half its extent.
    Centre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_cadence")]
    pub snapshots: SnapshotCadence,
    #[serde(default = "default_fields")]
    pub fields: Vec<SnapshotField>,
    #[serde(default = "default_geometry")]
    pub crack_geometry: CrackGeometry,
    /// Phase-field level defining cracked material.
    #[serde(default = "default_threshold")]
    pub crack_threshold: f64,
    /// Axis along which crack length is measured.
    #[serde(default)]
    pub crack_axis: usize,
}

fn default_directory() -> PathBuf {
    PathBuf::from("output")
}
fn default_cadence() -> SnapshotCadence {
    SnapshotCadence::Extrema
}
fn default_fields() -> Vec<SnapshotField> {
    SnapshotField::ALL.to_vec()
}
fn default_geometry() -> CrackGeometry {
    CrackGeometry::Centre
}
fn default_threshold() -> f64 {
    0.9
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            snapshots: default_cadence(),
            fields: default_fields(),
            crack_geometry: default_geometry(),
            crack_threshold: default_threshold(),
            crack_axis: 0,
        }
    }
}

/// Grid, grain map and soft regions built from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: VoxelGrid,
    pub map: GrainMap,
    /// All soft voxels.
    pub soft: SoftRegion,
    /// Soft voxels that belong to free-surface buffers.
    pub buffer_mask: Vec<bool>,
}

impl Setup {
    /// Soft voxels that are notches or pre-cracks rather than buffers.
    pub fn notch_mask(&self) -> Vec<bool> {
        self.soft.mask.iter().zip(&self.buffer_mask).map(|(s, b)| *s && !b).collect()
    }
}

impl ExperimentConfig {
    /// Reads, checks and validates a configuration file. Relative grain map
    /// paths are resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let MicrostructureSpec::File { path: p } = &mut cfg.microstructure {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses configuration text without touching the file system.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| SimError::Config(e.to_string()))?;
        let missing: Vec<String> = REQUIRED_KEYS
            .iter()
            .filter(|(section, key)| {
                !table.get(*section).and_then(|s| s.as_table()).is_some_and(|s| s.contains_key(*key))
            })
            .map(|(section, key)| format!("{section}.{key}"))
            .collect();
        if !missing.is_empty() {
            return Err(SimError::MissingKeys(missing));
        }
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, SimError> {
        toml::to_string(self).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let cfg_err = |m: &str| Err(SimError::Config(m.to_string()));
        if self.grid.dims.contains(&0) {
            return cfg_err("grid dimensions must be positive");
        }
        if !(self.grid.voxel_length > 0.0 && self.grid.voxel_length.is_finite()) {
            return cfg_err("voxel length must be positive");
        }
        self.material.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.phase_field.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.solver.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if !(self.gnd.ell_fp >= 0.0) {
            return cfg_err("gnd.ell_fp must be non-negative");
        }
        let load = &self.load;
        if load.axis > 2 {
            return cfg_err("load.axis must be 0, 1 or 2");
        }
        if !(load.strain_rate > 0.0) || !load.strain_max.is_finite() || !load.strain_ratio.is_finite() {
            return cfg_err("load strain rate must be positive and strains finite");
        }
        if load.max_cycles == 0 {
            return cfg_err("load.max_cycles must be at least 1");
        }
        if !(self.soft.factor > 0.0 && self.soft.factor <= 1.0) {
            return cfg_err("soft.factor must lie in (0, 1]");
        }
        if let Some(b) = &self.soft.buffers {
            if b.axis > 2 {
                return cfg_err("soft.buffers.axis must be 0, 1 or 2");
            }
        }
        let out = &self.output;
        if !(out.crack_threshold > 0.0 && out.crack_threshold < 1.0) {
            return cfg_err("output.crack_threshold must lie in (0, 1)");
        }
        if out.crack_axis > 2 {
            return cfg_err("output.crack_axis must be 0, 1 or 2");
        }
        match &self.microstructure {
            MicrostructureSpec::Polycrystal { n_grains, mean_diameter, sigma } => {
                if *n_grains == 0 || !(*mean_diameter > 0.0) || !(*sigma >= 0.0) {
                    return cfg_err("polycrystal needs n_grains >= 1, mean_diameter > 0 and sigma >= 0");
                }
            }
            MicrostructureSpec::File { path } => {
                if !path.is_file() {
                    return Err(SimError::Config(format!("grain map file {} does not exist", path.display())));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn voxel_grid(&self) -> Result<VoxelGrid, SimError> {
        VoxelGrid::with_voxel_length(self.grid.dims, self.grid.voxel_length)
            .map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn grain_map(&self) -> Result<GrainMap, SimError> {
        let grid = self.voxel_grid()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let map = match &self.microstructure {
            MicrostructureSpec::Single { orientation } => GrainMap::single(grid, orientation.resolve(&mut rng)?),
            MicrostructureSpec::Polycrystal { n_grains, mean_diameter, sigma } => generate_polycrystal(
                grid,
                &PolycrystalSpec { n_grains: *n_grains, mean_diameter: *mean_diameter, sigma: *sigma, seed: self.seed },
            )?,
            MicrostructureSpec::Bicrystal { angle_deg, width, inner, outer } => {
                let inner = inner.resolve(&mut rng)?;
                let outer = outer.resolve(&mut rng)?;
                banded_bicrystal(grid, *angle_deg, *width, inner, outer)?
            }
            MicrostructureSpec::File { path } => {
                let map = GrainMap::load(path)?;
                if map.grid.dims() != grid.dims() {
                    return Err(SimError::Config(format!(
                        "grain map dimensions {:?} differ from the grid {:?}",
                        map.grid.dims(),
                        grid.dims()
                    )));
                }
                map
            }
        };
        Ok(map)
    }

    /// Builds the grain map and soft regions.
    pub fn setup(&self) -> Result<Setup, SimError> {
        let map = self.grain_map()?;
        let grid = map.grid;
        let mut soft = SoftRegion::empty(&grid, self.soft.factor)?;
        if self.soft.centre_crack {
            soft.insert_box(&grid, centre_crack_box(&grid))?;
        }
        for b in &self.soft.boxes {
            soft.insert_box(&grid, *b)?;
        }
        let mut buffer_mask = vec![false; grid.len()];
        if let Some(b) = &self.soft.buffers {
            let mut buffers = SoftRegion::empty(&grid, self.soft.factor)?;
            buffers.insert_free_surface_buffers(&grid, b.axis, b.thickness)?;
            for (v, m) in buffers.mask.iter().enumerate() {
                if *m {
                    buffer_mask[v] = true;
                    soft.mask[v] = true;
                }
            }
        }
        Ok(Setup { grid, map, soft, buffer_mask })
    }
}
