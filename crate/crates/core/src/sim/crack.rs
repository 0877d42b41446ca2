//! Crack length measurement and fatigue crack growth rates.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::config::CrackGeometry;
use super::history::HistoryRecord;
use crate::grid::VoxelGrid;

/// Geometry factor of an edge crack in a semi-infinite body.
pub const EDGE_CRACK_FACTOR: f64 = 1.1215;

/// Measures crack length on a voxel grid from a phase field.
///
/// Cracked voxels are the notch voxels plus every voxel with
/// `phi >= threshold`. Connectivity is face-to-face and does not wrap across
/// domain faces; excluded voxels (free-surface buffers) never connect. The
/// crack is the component attached to the notch or, without a notch, the
/// largest component (ties go to the one containing the lowest voxel index).
#[derive(Debug, Clone)]
pub struct CrackGauge {
    pub grid: VoxelGrid,
    pub notch: Vec<bool>,
    pub excluded: Vec<bool>,
    pub geometry: CrackGeometry,
    /// Axis along which the length is measured.
    pub axis: usize,
    /// Voxel layers between each domain face and its free surface.
    pub surface_offset: usize,
}

impl CrackGauge {
    fn cracked_component(&self, phi: &[f64], threshold: f64) -> Vec<usize> {
        let n = self.grid.len();
        let dims = self.grid.dims();
        let cracked: Vec<bool> =
            (0..n).map(|v| !self.excluded[v] && (self.notch[v] || phi[v] >= threshold)).collect();
        let mut label = vec![usize::MAX; n];
        let mut components: Vec<Vec<usize>> = Vec::new();
        for seed in 0..n {
            if !cracked[seed] || label[seed] != usize::MAX {
                continue;
            }
            let id = components.len();
            let mut members = vec![seed];
            label[seed] = id;
            let mut queue = VecDeque::from([seed]);
            while let Some(v) = queue.pop_front() {
                let c = self.grid.coords(v);
                for axis in 0..3 {
                    for up in [false, true] {
                        let mut nc = c;
                        if up {
                            if c[axis] + 1 >= dims[axis] {
                                continue;
                            }
                            nc[axis] += 1;
                        } else {
                            if c[axis] == 0 {
                                continue;
                            }
                            nc[axis] -= 1;
                        }
                        let w = self.grid.index(nc[0], nc[1], nc[2]);
                        if cracked[w] && label[w] == usize::MAX {
                            label[w] = id;
                            members.push(w);
                            queue.push_back(w);
                        }
                    }
                }
            }
            components.push(members);
        }
        if self.notch.iter().any(|&m| m) {
            let ids: std::collections::BTreeSet<usize> =
                (0..n).filter(|&v| self.notch[v] && label[v] != usize::MAX).map(|v| label[v]).collect();
            ids.into_iter().flat_map(|id| components[id].clone()).collect()
        } else {
            // First maximum in seed order, so ties go to the lowest voxel index.
            let mut best: Option<Vec<usize>> = None;
            for c in components {
                if best.as_ref().is_none_or(|b| c.len() > b.len()) {
                    best = Some(c);
                }
            }
            best.unwrap_or_default()
        }
    }

    /// Crack length in micrometres.
    pub fn length(&self, phi: &[f64], threshold: f64) -> f64 {
        let members = self.cracked_component(phi, threshold);
        if members.is_empty() {
            return 0.0;
        }
        let h = self.grid.voxel_length();
        let nax = self.grid.dims()[self.axis];
        let idx = members.iter().map(|&v| self.grid.coords(v)[self.axis]);
        let (lo, hi) = idx.fold((usize::MAX, 0), |(lo, hi), i| (lo.min(i), hi.max(i)));
        match self.geometry {
            CrackGeometry::Centre => 0.5 * (hi - lo + 1) as f64 * h,
            CrackGeometry::Edge => {
                // Measured from the free surface nearest the crack.
                let from_low = (hi + 1).saturating_sub(self.surface_offset);
                let from_high = (nax - self.surface_offset).saturating_sub(lo);
                let centre = 0.5 * (lo + hi + 1) as f64;
                if centre <= 0.5 * nax as f64 {
                    from_low as f64 * h
                } else {
                    from_high as f64 * h
                }
            }
        }
    }

    /// Fraction of voxels with `phi >= threshold`.
    pub fn damaged_fraction(phi: &[f64], threshold: f64) -> f64 {
        phi.iter().filter(|&&p| p >= threshold).count() as f64 / phi.len() as f64
    }
}

/// `Y dsigma sqrt(pi a)` in MPa sqrt(m) for `a` in micrometres.
pub fn stress_intensity_range(delta_sigma: f64, crack_length_um: f64) -> f64 {
    EDGE_CRACK_FACTOR * delta_sigma * (std::f64::consts::PI * crack_length_um * 1e-6).sqrt()
}

/// One cycle of crack growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub cycle: usize,
    #[serde(rename = "crack_length_um")]
    pub crack_length: f64,
    #[serde(rename = "delta_sigma_MPa")]
    pub delta_sigma: f64,
    #[serde(rename = "delta_K_MPa_sqrt_m")]
    pub delta_k: f64,
    #[serde(rename = "da_dN_um_per_cycle")]
    pub dadn: f64,
}

/// Per-cycle growth table. For each cycle after the first, `da/dN` is the
/// change of the end-of-cycle crack length, the stress range is the
/// peak-to-valley range of the mean axial stress within the cycle, and the
/// stress intensity range uses the end-of-cycle length. Returns an empty
/// table when the crack never grows.
pub fn dadn_dk(history: &[HistoryRecord]) -> Vec<GrowthRow> {
    let mut cycles: BTreeMap<usize, (f64, f64, f64)> = BTreeMap::new();
    for r in history {
        let e = cycles.entry(r.cycle).or_insert((f64::INFINITY, f64::NEG_INFINITY, r.crack_length));
        e.0 = e.0.min(r.stress_axial);
        e.1 = e.1.max(r.stress_axial);
        e.2 = r.crack_length;
    }
    let list: Vec<(usize, (f64, f64, f64))> = cycles.into_iter().collect();
    let rows: Vec<GrowthRow> = list
        .windows(2)
        .map(|w| {
            let (_, (_, _, a_prev)) = w[0];
            let (cycle, (lo, hi, a)) = w[1];
            let delta_sigma = hi - lo;
            GrowthRow {
                cycle,
                crack_length: a,
                delta_sigma,
                delta_k: stress_intensity_range(delta_sigma, a),
                dadn: a - a_prev,
            }
        })
        .collect();
    if rows.iter().all(|r| r.dadn == 0.0) {
        return Vec::new();
    }
    rows
}
