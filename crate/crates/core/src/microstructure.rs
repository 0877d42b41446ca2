//! Voxelised microstructures: periodic Laguerre tessellations, crystal
//! orientations, banded bicrystals and soft (compliant) regions.
//!
//! Grain map file layout (little-endian):
//!
//! | bytes      | content                                   |
//! |------------|-------------------------------------------|
//! | 4          | magic `GMAP`                              |
//! | 4          | `u32` format version (1)                  |
//! | 12         | `u32` dims (x, y, z)                      |
//! | 24         | `f64` lengths in um (x, y, z)             |
//! | 4          | `u32` grain count `n`                     |
//! | 32 n       | `f64` quaternions `w, x, y, z` per grain  |
//! | 4 N        | `u32` grain id per voxel, x fastest       |

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

use crate::crystal::{schmid_factor, SlipSystemSet, N_SLIP};
use crate::grid::VoxelGrid;
use crate::tensor::Mat3;

const MAGIC: &[u8; 4] = b"GMAP";
const VERSION: u32 = 1;
/// Cap on the weight fixed-point iterations of the tessellation.
pub const MAX_WEIGHT_ITERATIONS: usize = 50;

#[derive(Debug, Error)]
pub enum MicrostructureError {
    #[error("invalid microstructure setting: {0}")]
    Config(String),
    #[error("grain map file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_error(msg: impl Into<String>) -> MicrostructureError {
    MicrostructureError::Config(msg.into())
}

/// Grain index per voxel and one orientation per grain.
#[derive(Debug, Clone, PartialEq)]
pub struct GrainMap {
    pub grid: VoxelGrid,
    pub grain_id: Vec<u32>,
    /// Crystal-to-sample rotations.
    pub orientations: Vec<UnitQuaternion<f64>>,
}

impl GrainMap {
    /// Whole domain one grain.
    pub fn single(grid: VoxelGrid, orientation: UnitQuaternion<f64>) -> Self {
        Self { grid, grain_id: vec![0; grid.len()], orientations: vec![orientation] }
    }

    pub fn n_grains(&self) -> usize {
        self.orientations.len()
    }

    pub fn rotations(&self) -> Vec<Mat3> {
        self.orientations.iter().map(|q| q.to_rotation_matrix().into_inner()).collect()
    }

    /// Checks id range, contiguity and quaternion normalisation.
    pub fn validate(&self) -> Result<(), MicrostructureError> {
        if self.grain_id.len() != self.grid.len() {
            return Err(config_error("grain id count does not match the grid"));
        }
        let n = self.n_grains();
        let mut seen = vec![false; n];
        for &g in &self.grain_id {
            let g = g as usize;
            if g >= n {
                return Err(config_error(format!("grain id {g} exceeds grain count {n}")));
            }
            seen[g] = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(config_error(format!("grain {g} has no voxels")));
        }
        for q in &self.orientations {
            if (q.quaternion().norm() - 1.0).abs() > 1e-12 {
                return Err(config_error("orientation quaternion is not normalised"));
            }
        }
        Ok(())
    }

    /// Equivalent diameter (um) of every grain: circle-equivalent for
    /// single-layer grids, sphere-equivalent otherwise.
    pub fn equivalent_diameters(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.n_grains()];
        for &g in &self.grain_id {
            counts[g as usize] += 1;
        }
        let h = self.grid.voxel_length();
        let planar = self.grid.dims()[2] == 1;
        counts
            .into_iter()
            .map(|c| {
                if planar {
                    equivalent_diameter(c as f64 * h * h, 2)
                } else {
                    equivalent_diameter(c as f64 * h * h * h, 3)
                }
            })
            .collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), MicrostructureError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for d in self.grid.dims() {
            w.write_all(&u32::try_from(d).map_err(|_| config_error("dimension too large"))?.to_le_bytes())?;
        }
        for l in self.grid.lengths() {
            w.write_all(&l.to_le_bytes())?;
        }
        w.write_all(&(self.n_grains() as u32).to_le_bytes())?;
        for q in &self.orientations {
            for c in [q.w, q.i, q.j, q.k] {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        let mut buf = Vec::with_capacity(4 * self.grain_id.len());
        for g in &self.grain_id {
            buf.extend_from_slice(&g.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, MicrostructureError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(MicrostructureError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(MicrostructureError::Format(format!("unsupported version {version}")));
        }
        let dims = [read_u32(&mut r)? as usize, read_u32(&mut r)? as usize, read_u32(&mut r)? as usize];
        let lengths = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
        let grid = VoxelGrid::new(dims, lengths).map_err(|e| MicrostructureError::Format(e.to_string()))?;
        let n = read_u32(&mut r)? as usize;
        let mut orientations = Vec::with_capacity(n);
        for _ in 0..n {
            let (w, x, y, z) = (read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
            orientations.push(UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z)));
        }
        let mut bytes = vec![0u8; 4 * grid.len()];
        r.read_exact(&mut bytes)?;
        let grain_id = bytes.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let map = Self { grid, grain_id, orientations };
        map.validate()?;
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<(), MicrostructureError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MicrostructureError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn equivalent_diameter(measure: f64, dim: usize) -> f64 {
    if dim == 2 {
        2.0 * (measure / std::f64::consts::PI).sqrt()
    } else {
        (6.0 * measure / std::f64::consts::PI).cbrt()
    }
}

fn measure_of_diameter(d: f64, dim: usize) -> f64 {
    if dim == 2 {
        std::f64::consts::PI * d * d / 4.0
    } else {
        std::f64::consts::PI * d * d * d / 6.0
    }
}

/// Uniformly distributed rotation (Shoemake's method).
pub fn random_orientation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    UnitQuaternion::from_quaternion(Quaternion::new(
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    ))
}

/// Orientation whose crystal directions `x_dir` and `y_dir` (Miller
/// indices, orthogonal) lie along the sample x and y axes.
pub fn lattice_orientation(x_dir: [f64; 3], y_dir: [f64; 3]) -> Result<UnitQuaternion<f64>, MicrostructureError> {
    let a = Vector3::from(x_dir);
    let b = Vector3::from(y_dir);
    if a.norm() == 0.0 || b.norm() == 0.0 || a.normalize().dot(&b.normalize()).abs() > 1e-9 {
        return Err(config_error("orientation directions must be nonzero and orthogonal"));
    }
    let (a, b) = (a.normalize(), b.normalize());
    let c = a.cross(&b);
    // Rows are the crystal directions that map onto the sample axes.
    let r = Matrix3::from_rows(&[a.transpose(), b.transpose(), c.transpose()]);
    Ok(UnitQuaternion::from_matrix(&r))
}

/// Cube orientation: crystal axes along the sample axes.
pub fn orientation_100() -> UnitQuaternion<f64> {
    UnitQuaternion::identity()
}

/// Crystal `[1 -1 0]` along x and `[1 1 1]` along y, so `[-1 -1 2]` along z.
pub fn orientation_111() -> UnitQuaternion<f64> {
    lattice_orientation([1.0, -1.0, 0.0], [1.0, 1.0, 1.0]).expect("orthogonal directions")
}

/// Settings of a periodic Laguerre tessellation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolycrystalSpec {
    pub n_grains: usize,
    /// Mean equivalent grain diameter (um).
    pub mean_diameter: f64,
    /// Shape parameter of the log-normal diameter distribution.
    pub sigma: f64,
    pub seed: u64,
}

/// Squared periodic distance between two points.
pub fn periodic_distance2(a: &[f64; 3], b: &[f64; 3], lengths: &[f64; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let mut d = (a[k] - b[k]).abs() % lengths[k];
            if d > 0.5 * lengths[k] {
                d = lengths[k] - d;
            }
            d * d
        })
        .sum()
}

fn laguerre_assign(grid: &VoxelGrid, seeds: &[[f64; 3]], weights: &[f64]) -> Vec<u32> {
    use rayon::prelude::*;
    let lengths = grid.lengths();
    (0..grid.len())
        .into_par_iter()
        .map(|v| {
            let c = grid.center(v);
            let mut best = (f64::INFINITY, 0u32);
            for (g, (s, w)) in seeds.iter().zip(weights).enumerate() {
                let d = periodic_distance2(&c, s, &lengths) - w;
                if d < best.0 {
                    best = (d, g as u32);
                }
            }
            best.1
        })
        .collect()
}

/// Periodic Laguerre tessellation whose cell sizes are fitted to log-normally
/// distributed target diameters, with uniformly random orientations.
pub fn generate_polycrystal(grid: VoxelGrid, spec: &PolycrystalSpec) -> Result<GrainMap, MicrostructureError> {
    if spec.n_grains == 0 {
        return Err(config_error("n_grains must be at least 1"));
    }
    if !(spec.mean_diameter > 0.0) {
        return Err(config_error("mean grain diameter must be positive"));
    }
    if !(spec.sigma >= 0.0) {
        return Err(config_error("log-normal sigma must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    if spec.n_grains == 1 {
        return Ok(GrainMap::single(grid, random_orientation(&mut rng)));
    }
    let dims = grid.dims();
    let lengths = grid.lengths();
    let dim = if dims[2] == 1 { 2 } else { 3 };
    let active: Vec<usize> = (0..dim).collect();
    let min_extent = active.iter().map(|&k| lengths[k]).fold(f64::INFINITY, f64::min);

    let mu = spec.mean_diameter.ln() - 0.5 * spec.sigma * spec.sigma;
    let diameters: Vec<f64> = if spec.sigma > 0.0 {
        let dist = LogNormal::new(mu, spec.sigma).map_err(|e| config_error(e.to_string()))?;
        (0..spec.n_grains).map(|_| dist.sample(&mut rng)).collect()
    } else {
        vec![spec.mean_diameter; spec.n_grains]
    };
    if let Some(d) = diameters.iter().find(|&&d| d > min_extent) {
        return Err(config_error(format!("grain diameter {d:.3} um exceeds the domain extent {min_extent:.3} um")));
    }
    // Target measures rescaled to tile the domain exactly.
    let domain: f64 = active.iter().map(|&k| lengths[k]).product();
    let raw: Vec<f64> = diameters.iter().map(|&d| measure_of_diameter(d, dim)).collect();
    let scale = domain / raw.iter().sum::<f64>();
    let targets: Vec<f64> = raw.iter().map(|m| m * scale).collect();

    let seeds: Vec<[f64; 3]> = (0..spec.n_grains)
        .map(|_| {
            let mut p = [0.0; 3];
            for &k in &active {
                p[k] = rng.random::<f64>() * lengths[k];
            }
            if dim == 2 {
                p[2] = 0.5 * lengths[2];
            }
            p
        })
        .collect();
    let orientations: Vec<UnitQuaternion<f64>> = (0..spec.n_grains).map(|_| random_orientation(&mut rng)).collect();

    let cell = grid.voxel_length().powi(dim as i32);
    let mut weights = vec![0.0; spec.n_grains];
    let mut ids = laguerre_assign(&grid, &seeds, &weights);
    for _ in 0..MAX_WEIGHT_ITERATIONS {
        let mut measure = vec![0.0; spec.n_grains];
        for &g in &ids {
            measure[g as usize] += cell;
        }
        let worst = measure
            .iter()
            .zip(&targets)
            .map(|(m, t)| (m - t).abs() / t)
            .fold(0.0, f64::max);
        if worst < 0.05 {
            break;
        }
        // Squared-radius correction, damped.
        for g in 0..spec.n_grains {
            let r2_target = (equivalent_diameter(targets[g], dim) / 2.0).powi(2);
            let r2_now = (equivalent_diameter(measure[g], dim) / 2.0).powi(2);
            weights[g] += 0.5 * (r2_target - r2_now);
        }
        ids = laguerre_assign(&grid, &seeds, &weights);
    }

    // Drop empty cells so ids stay contiguous.
    let mut used = vec![false; spec.n_grains];
    for &g in &ids {
        used[g as usize] = true;
    }
    let mut remap = vec![u32::MAX; spec.n_grains];
    let mut kept = Vec::new();
    for g in 0..spec.n_grains {
        if used[g] {
            remap[g] = kept.len() as u32;
            kept.push(orientations[g]);
        }
    }
    if kept.len() < spec.n_grains {
        log::warn!("{} grains vanished during tessellation", spec.n_grains - kept.len());
    }
    let grain_id = ids.into_iter().map(|g| remap[g as usize]).collect();
    Ok(GrainMap { grid, grain_id, orientations: kept })
}

/// Two-orientation map made of straight bands at `angle_deg` from the x
/// axis. Voxels whose centre lies within `width / 2` (um, measured along y,
/// or along x for vertical bands) of the line through the domain centre get
/// `inner`; all others get `outer`. The band must tile periodically.
pub fn banded_bicrystal(
    grid: VoxelGrid,
    angle_deg: f64,
    width: f64,
    inner: UnitQuaternion<f64>,
    outer: UnitQuaternion<f64>,
) -> Result<GrainMap, MicrostructureError> {
    let l = grid.lengths();
    let theta = angle_deg.to_radians();
    let vertical = (theta.cos()).abs() < 1e-12;
    let (period, slope) = if vertical { (l[0], 0.0) } else { (l[1], theta.tan()) };
    if !vertical {
        let wraps = slope * l[0] / l[1];
        if (wraps - wraps.round()).abs() > 1e-9 {
            return Err(config_error("band angle is not compatible with periodicity"));
        }
    }
    if !(width > 0.0 && width < period) {
        return Err(config_error("band width must lie strictly between 0 and the period"));
    }
    let centre = [0.5 * l[0], 0.5 * l[1]];
    let grain_id = (0..grid.len())
        .map(|v| {
            let c = grid.center(v);
            let s = if vertical { c[0] - centre[0] } else { (c[1] - centre[1]) - slope * (c[0] - centre[0]) };
            let wrapped = (s + 0.5 * period).rem_euclid(period) - 0.5 * period;
            u32::from(wrapped.abs() >= 0.5 * width)
        })
        .collect();
    let map = GrainMap { grid, grain_id, orientations: vec![inner, outer] };
    map.validate()?;
    Ok(map)
}

/// Voxels treated as a compliant linear-elastic material.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftRegion {
    pub mask: Vec<bool>,
    /// Stiffness factor relative to the crystal's isotropic average.
    pub factor: f64,
}

pub const DEFAULT_SOFT_FACTOR: f64 = 1e-5;

impl SoftRegion {
    pub fn empty(grid: &VoxelGrid, factor: f64) -> Result<Self, MicrostructureError> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(config_error("soft stiffness factor must lie in (0, 1]"));
        }
        Ok(Self { mask: vec![false; grid.len()], factor })
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Marks voxels whose centres lie in the closed box given in domain
    /// fractions `[[x0, x1], [y0, y1], [z0, z1]]`. Returns the number of
    /// newly marked voxels.
    pub fn insert_box(&mut self, grid: &VoxelGrid, bounds: [[f64; 2]; 3]) -> Result<usize, MicrostructureError> {
        for b in &bounds {
            if !(0.0 <= b[0] && b[0] <= b[1] && b[1] <= 1.0) {
                return Err(config_error("soft box bounds must satisfy 0 <= lo <= hi <= 1"));
            }
        }
        let l = grid.lengths();
        let tol = 1e-9 * grid.voxel_length();
        let mut added = 0;
        for v in 0..grid.len() {
            let c = grid.center(v);
            let inside = (0..3).all(|k| c[k] >= bounds[k][0] * l[k] - tol && c[k] <= bounds[k][1] * l[k] + tol);
            if inside && !self.mask[v] {
                self.mask[v] = true;
                added += 1;
            }
        }
        if added == 0 {
            log::warn!("soft box {bounds:?} contains no voxel centres");
        }
        Ok(added)
    }

    /// Soft layers `thickness` voxels thick at both ends of `axis`.
    pub fn insert_free_surface_buffers(
        &mut self,
        grid: &VoxelGrid,
        axis: usize,
        thickness: usize,
    ) -> Result<usize, MicrostructureError> {
        let n = grid.dims()[axis];
        if thickness == 0 {
            return Err(config_error("buffer thickness must be at least one voxel"));
        }
        if 2 * thickness > n / 2 {
            return Err(config_error("buffer layers would cover more than half of the domain"));
        }
        let mut added = 0;
        for v in 0..grid.len() {
            let i = grid.coords(v)[axis];
            if (i < thickness || i >= n - thickness) && !self.mask[v] {
                self.mask[v] = true;
                added += 1;
            }
        }
        Ok(added)
    }
}

/// Box bounds of a centred through-thickness pre-crack: half the domain long
/// along x and two voxels thick along y.
pub fn centre_crack_box(grid: &VoxelGrid) -> [[f64; 2]; 3] {
    let ny = grid.dims()[1] as f64;
    [[0.375, 0.625], [0.5 - 1.0 / ny, 0.5 + 1.0 / ny], [0.0, 1.0]]
}

/// `|cos phi cos lambda|` of every slip system of every grain for a load
/// direction given in the sample frame.
pub fn schmid_factors(map: &GrainMap, load: Vector3<f64>) -> Vec<[f64; N_SLIP]> {
    let load = load.normalize();
    let fcc = SlipSystemSet::fcc();
    map.rotations()
        .iter()
        .map(|r| {
            let set = fcc.rotated(r);
            std::array::from_fn(|i| schmid_factor(&set.systems[i], &load))
        })
        .collect()
}
