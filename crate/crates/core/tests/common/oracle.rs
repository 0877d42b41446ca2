//! Independent explicit integrator of the single-crystal rate equations,
//! written without using the library's constitutive code.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

pub struct OracleMaterial {
    pub c11: f64,
    pub c12: f64,
    pub c44: f64,
    pub tau0: f64,
    pub mu: f64,
    pub b: f64,
    pub lambda: f64,
    pub prefactor: f64,
    pub sensitivity: f64,
    pub systems: Vec<(Vector3<f64>, Vector3<f64>)>,
}

impl OracleMaterial {
    /// Nickel-superalloy table values (MPa, mm) with activation volume `dv` mm^3.
    pub fn table(dv: f64) -> Self {
        let kt: f64 = 1.4e-23 * 295.0;
        let prefactor = 5e6 * 3.5e-7f64.powi(2) * 1e11 * (-4.9e-20 / kt).exp();
        let mut systems = Vec::new();
        let normals = [[1., 1., 1.], [-1., 1., 1.], [1., -1., 1.], [1., 1., -1.]];
        let dirs = [[1., -1., 0.], [1., 0., -1.], [0., 1., -1.], [1., 1., 0.], [1., 0., 1.], [0., 1., 1.]];
        for n in normals {
            let n: Vector3<f64> = Vector3::from(n).normalize();
            for d in dirs {
                let s: Vector3<f64> = Vector3::from(d).normalize();
                if s.dot(&n).abs() < 1e-12 {
                    systems.push((s, n));
                }
            }
        }
        assert_eq!(systems.len(), 12);
        Self {
            c11: 250e3,
            c12: 161e3,
            c44: 129e3,
            tau0: 350.0,
            mu: 129e3,
            b: 3.5e-7,
            lambda: 150e6,
            prefactor,
            sensitivity: dv * 1e-3 / kt,
            systems,
        }
    }

    fn stress(&self, e: &Matrix3<f64>) -> Matrix3<f64> {
        let tr = e.trace();
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = if i == j {
                    self.c11 * e[(i, i)] + self.c12 * (tr - e[(i, i)])
                } else {
                    2.0 * self.c44 * e[(i, j)]
                };
            }
        }
        m
    }

    fn log_strain(fe: &Matrix3<f64>) -> Matrix3<f64> {
        let eig = SymmetricEigen::new(fe.transpose() * fe);
        let d = Matrix3::from_diagonal(&eig.eigenvalues.map(|v| 0.5 * v.ln()));
        eig.eigenvectors * d * eig.eigenvectors.transpose()
    }

    /// First Piola-Kirchhoff stress for total `f` and plastic `fp`.
    pub fn piola(&self, f: &Matrix3<f64>, fp: &Matrix3<f64>) -> Matrix3<f64> {
        let fp_inv = fp.try_inverse().unwrap();
        let fe = f * fp_inv;
        let m = self.stress(&Self::log_strain(&fe));
        fe.try_inverse().unwrap().transpose() * m * fp_inv.transpose()
    }

    /// Time derivatives of (Fp, rho).
    fn rates(&self, f: &Matrix3<f64>, fp: &Matrix3<f64>, rho: f64) -> (Matrix3<f64>, f64) {
        let fe = f * fp.try_inverse().unwrap();
        let m = self.stress(&Self::log_strain(&fe));
        let tau_c = self.tau0 + self.mu * self.b * rho.max(0.0).sqrt();
        let mut lp = Matrix3::zeros();
        for (s, n) in &self.systems {
            let tau = (m * n).dot(s);
            let over = tau.abs() - tau_c;
            if over > 0.0 {
                lp += s * n.transpose() * (self.prefactor * (over * self.sensitivity).sinh() * tau.signum());
            }
        }
        let rho_dot = self.lambda * (2.0 / 3.0 * lp.norm_squared()).sqrt();
        (lp * fp, rho_dot)
    }

    /// Classical RK4 over `steps` substeps of the history `f_of_t` on [0, t_end].
    /// Returns the stress at each of `samples` equally spaced output times.
    pub fn integrate(
        &self,
        f_of_t: impl Fn(f64) -> Matrix3<f64>,
        t_end: f64,
        steps: usize,
        samples: usize,
    ) -> Vec<Matrix3<f64>> {
        let h = t_end / steps as f64;
        let mut fp = Matrix3::identity();
        let mut rho = 0.0;
        let mut out = Vec::with_capacity(samples + 1);
        out.push(self.piola(&f_of_t(0.0), &fp));
        let every = steps / samples;
        for k in 0..steps {
            let t = k as f64 * h;
            let (f0, fm, f1) = (f_of_t(t), f_of_t(t + 0.5 * h), f_of_t(t + h));
            let (a1, r1) = self.rates(&f0, &fp, rho);
            let (a2, r2) = self.rates(&fm, &(fp + a1 * (0.5 * h)), rho + 0.5 * h * r1);
            let (a3, r3) = self.rates(&fm, &(fp + a2 * (0.5 * h)), rho + 0.5 * h * r2);
            let (a4, r4) = self.rates(&f1, &(fp + a3 * h), rho + h * r3);
            fp += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
            rho += h / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
            if (k + 1) % every == 0 {
                out.push(self.piola(&f1, &fp));
            }
        }
        out
    }
}
