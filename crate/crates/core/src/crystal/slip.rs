use nalgebra::Vector3;

use crate::tensor::{outer, Mat3};

pub const N_SLIP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipSystem {
    /// Slip direction, parallel to the Burgers vector.
    pub s: Vector3<f64>,
    /// Slip plane normal.
    pub n: Vector3<f64>,
    /// Edge line direction `n x s`.
    pub t: Vector3<f64>,
}

impl SlipSystem {
    fn new(s: Vector3<f64>, n: Vector3<f64>) -> Self {
        let s = s.normalize();
        let n = n.normalize();
        Self { s, n, t: n.cross(&s) }
    }

    /// Burgers direction (unit).
    pub fn b(&self) -> Vector3<f64> {
        self.s
    }

    /// Schmid tensor `s (x) n`.
    pub fn schmid(&self) -> Mat3 {
        outer(&self.s, &self.n)
    }

    pub fn rotated(&self, r: &Mat3) -> Self {
        Self { s: r * self.s, n: r * self.n, t: r * self.t }
    }
}

/// The twelve {111}<110> systems of an FCC lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SlipSystemSet {
    pub systems: [SlipSystem; N_SLIP],
}

impl SlipSystemSet {
    /// Crystal-frame systems.
    pub fn fcc() -> Self {
        let v = |x: f64, y: f64, z: f64| Vector3::new(x, y, z);
        let table = [
            (v(1., 1., 1.), v(0., 1., -1.)),
            (v(1., 1., 1.), v(1., 0., -1.)),
            (v(1., 1., 1.), v(1., -1., 0.)),
            (v(-1., 1., 1.), v(0., 1., -1.)),
            (v(-1., 1., 1.), v(1., 0., 1.)),
            (v(-1., 1., 1.), v(1., 1., 0.)),
            (v(1., -1., 1.), v(0., 1., 1.)),
            (v(1., -1., 1.), v(1., 0., -1.)),
            (v(1., -1., 1.), v(1., 1., 0.)),
            (v(1., 1., -1.), v(0., 1., 1.)),
            (v(1., 1., -1.), v(1., 0., 1.)),
            (v(1., 1., -1.), v(1., -1., 0.)),
        ];
        Self { systems: table.map(|(n, s)| SlipSystem::new(s, n)) }
    }

    /// Systems expressed in the sample frame for a crystal-to-sample rotation.
    pub fn rotated(&self, r: &Mat3) -> Self {
        Self { systems: self.systems.map(|s| s.rotated(r)) }
    }

    pub fn iter(&self) -> impl Iterator<Item = &SlipSystem> {
        self.systems.iter()
    }

    /// Indices of one representative system per distinct slip direction;
    /// these six directions carry the independent screw components.
    pub fn screw_representatives(&self) -> Vec<usize> {
        let mut reps: Vec<usize> = Vec::new();
        for (i, sys) in self.systems.iter().enumerate() {
            if !reps.iter().any(|&r| self.systems[r].s.cross(&sys.s).norm() < 1e-9) {
                reps.push(i);
            }
        }
        reps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fcc_geometry() {
        let set = SlipSystemSet::fcc();
        for sys in set.iter() {
            assert!(sys.s.dot(&sys.n).abs() < 1e-15);
            assert!((sys.s.norm() - 1.0).abs() < 1e-15);
            assert!((sys.n.norm() - 1.0).abs() < 1e-15);
            assert!((sys.t.norm() - 1.0).abs() < 1e-15);
            assert!((sys.t - sys.n.cross(&sys.s)).norm() < 1e-15);
            assert!(sys.schmid().trace().abs() < 1e-15);
        }
        assert_eq!(set.screw_representatives().len(), 6);
    }

    #[test]
    fn rotation_preserves_geometry() {
        let r = nalgebra::Rotation3::from_euler_angles(0.4, 1.2, -0.7).into_inner();
        let set = SlipSystemSet::fcc().rotated(&r);
        for sys in set.iter() {
            assert!(sys.s.dot(&sys.n).abs() < 1e-14);
            assert!((sys.t - sys.n.cross(&sys.s)).norm() < 1e-14);
        }
    }
}
