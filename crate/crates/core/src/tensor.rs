//! Small dense tensor helpers: 3x3 matrix functions with their directional
//! derivatives, and rank-4 operators stored as 9x9 matrices acting on
//! row-major flattened 3x3 tensors (`(i, j)` at `3*i + j`).

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen};

pub type Mat3 = Matrix3<f64>;
pub type Vec9 = SVector<f64, 9>;
/// Rank-4 tensor `A_ijkl` as a 9x9 matrix with row `3i+j` and column `3k+l`.
pub type Tensor4 = SMatrix<f64, 9, 9>;

#[inline]
pub fn flatten(m: &Mat3) -> Vec9 {
    Vec9::from_fn(|r, _| m[(r / 3, r % 3)])
}

#[inline]
pub fn unflatten(v: &Vec9) -> Mat3 {
    Mat3::from_fn(|i, j| v[3 * i + j])
}

/// Double contraction `A : B = A_ij B_ij`.
#[inline]
pub fn ddot(a: &Mat3, b: &Mat3) -> f64 {
    a.component_mul(b).sum()
}

#[inline]
pub fn outer(a: &nalgebra::Vector3<f64>, b: &nalgebra::Vector3<f64>) -> Mat3 {
    a * b.transpose()
}

pub fn max_abs(m: &Mat3) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Cubic stiffness in the crystal frame (same units as the constants).
pub fn cubic_stiffness(c11: f64, c12: f64, c44: f64) -> Tensor4 {
    let mut c = Tensor4::zeros();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let v = if i == j && k == l {
                        if i == k {
                            c11
                        } else {
                            c12
                        }
                    } else if (i == k && j == l) || (i == l && j == k) {
                        c44
                    } else {
                        0.0
                    };
                    c[(3 * i + j, 3 * k + l)] = v;
                }
            }
        }
    }
    c
}

/// Isotropic stiffness from Lame constants.
pub fn isotropic_stiffness(lambda: f64, mu: f64) -> Tensor4 {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    Tensor4::from_fn(|r, c| {
        let (i, j, k, l) = (r / 3, r % 3, c / 3, c % 3);
        lambda * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k))
    })
}

/// Rotates a rank-4 tensor: `A'_ijkl = R_ia R_jb R_kc R_ld A_abcd`.
pub fn rotate4(a: &Tensor4, r: &Mat3) -> Tensor4 {
    // Q_(ij),(ab) = R_ia R_jb, so A' = Q A Q^T.
    let q = Tensor4::from_fn(|row, col| r[(row / 3, col / 3)] * r[(row % 3, col % 3)]);
    q * a * q.transpose()
}

/// Spectral data of a symmetric positive matrix for evaluating `ln` and its
/// first derivative (Daleckii-Krein form).
#[derive(Debug, Clone)]
pub struct SymLog {
    pub values: [f64; 3],
    pub vectors: Mat3,
    /// Divided differences of `ln` over the eigenvalue pairs.
    theta: [[f64; 3]; 3],
}

impl SymLog {
    pub fn new(c: &Mat3) -> Option<Self> {
        let eig = SymmetricEigen::new(*c);
        let values = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
        if values.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let mut theta = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                theta[a][b] = log_divided_difference(values[a], values[b]);
            }
        }
        Some(Self { values, vectors: eig.eigenvectors, theta })
    }

    /// `ln(C)` itself.
    pub fn log(&self) -> Mat3 {
        self.map_values(f64::ln)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Mat3 {
        let n = &self.vectors;
        let d = Mat3::from_diagonal(&nalgebra::Vector3::new(
            f(self.values[0]),
            f(self.values[1]),
            f(self.values[2]),
        ));
        n * d * n.transpose()
    }

    /// Directional derivative `D ln(C)[dC]` for symmetric `dC`.
    pub fn derivative(&self, dc: &Mat3) -> Mat3 {
        let n = &self.vectors;
        let mut t = n.transpose() * dc * n;
        for a in 0..3 {
            for b in 0..3 {
                t[(a, b)] *= self.theta[a][b];
            }
        }
        n * t * n.transpose()
    }

    /// Adjoint of the derivative applied to `g`: returns `H` with
    /// `H : dC = g : D ln(C)[dC]` for every symmetric `dC`.
    pub fn derivative_adjoint(&self, g: &Mat3) -> Mat3 {
        let gs = 0.5 * (g + g.transpose());
        self.derivative(&gs)
    }
}

fn log_divided_difference(a: f64, b: f64) -> f64 {
    let d = a - b;
    if d.abs() <= 1e-6 * b.abs().max(a.abs()) {
        // Taylor expansion of (ln a - ln b)/(a - b) around b.
        let x = d / b;
        (1.0 - 0.5 * x + x * x / 3.0) / b
    } else {
        (a / b).ln() / d
    }
}

/// Matrix exponential together with its directional derivatives along
/// `dirs`, by Taylor series on a scaled argument followed by squaring.
pub fn expm_with_derivatives(x: &Mat3, dirs: &[Mat3]) -> (Mat3, Vec<Mat3>) {
    let norm = x.norm();
    let mut squarings = 0u32;
    if norm > 0.25 {
        squarings = (norm / 0.25).log2().ceil() as u32;
    }
    let scale = 0.5_f64.powi(squarings as i32);
    let y = x * scale;
    let id = Mat3::identity();

    let mut exp = id + y;
    let mut power = y;
    let mut dpow: Vec<Mat3> = dirs.iter().map(|e| e * scale).collect();
    let mut dexp: Vec<Mat3> = dpow.clone();
    let mut fact = 1.0;
    for k in 2..=20 {
        fact *= k as f64;
        // d(Y^k) = d(Y^(k-1)) Y + Y^(k-1) dY
        for (dp, e) in dpow.iter_mut().zip(dirs) {
            *dp = *dp * y + power * (e * scale);
        }
        power *= y;
        exp += power / fact;
        for (de, dp) in dexp.iter_mut().zip(&dpow) {
            *de += dp / fact;
        }
        if power.norm() / fact < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        for de in dexp.iter_mut() {
            *de = exp * *de + *de * exp;
        }
        exp = exp * exp;
    }
    (exp, dexp)
}
