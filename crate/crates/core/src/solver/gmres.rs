//! Restarted GMRES over real vectors with left preconditioning.

#[derive(Debug, Clone, Copy)]
pub struct GmresSettings {
    /// Relative tolerance on the preconditioned residual.
    pub tolerance: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// Final preconditioned residual relative to the preconditioned rhs.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `M A x = M b` starting from `x` (overwritten).
pub fn gmres<A, M>(apply: A, precondition: M, b: &[f64], x: &mut [f64], settings: &GmresSettings) -> GmresOutcome
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mb = precondition(b);
    let target = settings.tolerance * norm(&mb);
    if norm(&mb) == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return GmresOutcome { iterations: 0, converged: true, relative_residual: 0.0 };
    }
    let mut iterations = 0;
    let m = settings.restart.max(1);
    loop {
        let ax = apply(x);
        let r0: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let z0 = precondition(&r0);
        let beta = norm(&z0);
        if beta <= target {
            return GmresOutcome { iterations, converged: true, relative_residual: beta / norm(&mb) };
        }
        if iterations >= settings.max_iterations {
            return GmresOutcome { iterations, converged: false, relative_residual: beta / norm(&mb) };
        }
        let mut basis: Vec<Vec<f64>> = vec![z0.iter().map(|v| v / beta).collect()];
        // Hessenberg columns, stored as rows of length j+2.
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < settings.max_iterations {
            let mut w = precondition(&apply(&basis[k]));
            let mut col = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hij * vi;
                }
            }
            let wn = norm(&w);
            col[k + 1] = wn;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = (col[k] * col[k] + col[k + 1] * col[k + 1]).sqrt();
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[k] / denom, col[k + 1] / denom) };
            col[k] = denom;
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g[k + 1] = -s * g[k];
            g[k] *= c;
            h.push(col);
            iterations += 1;
            k += 1;
            let res = g[k].abs();
            if res <= target || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // Back substitution for the k x k upper-triangular system.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= h[j][i] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * basis[j][i];
            }
        }
    }
}
