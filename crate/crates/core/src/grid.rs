//! Periodic voxel grids, real-to-complex transforms and spectral derivative
//! operators.
//!
//! Fields are stored component-major: a scalar field is a `Vec<f64>` of
//! length `N1*N2*N3` with x varying fastest, a vector field is `[Vec<f64>; 3]`
//! and a rank-2 field is `[Vec<f64>; 9]` with component `(i, j)` at `3*i + j`.
//!
//! The forward transform is unnormalised; the inverse divides by the voxel
//! count. Only the non-negative half of the first axis is stored
//! (`N1/2 + 1` bins), the remaining axes keep their native FFT bin order.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

pub type ScalarField = Vec<f64>;
pub type VectorField = [Vec<f64>; 3];
pub type TensorField = [Vec<f64>; 9];

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be at least 1, got {0:?}")]
    BadDims([usize; 3]),
    #[error("grid lengths must be positive, got {0:?}")]
    BadLengths([f64; 3]),
    #[error("voxels are not cubic: spacing {0:?}")]
    NonCubicVoxels([f64; 3]),
}

/// Periodic parallelepiped discretised into cubic voxels. Lengths in micrometres.
#[derive(Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    lengths: [f64; 3],
    voxel_length: f64,
}

impl fmt::Debug for VoxelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "VoxelGrid({}x{}x{}, {:?} um)",
            self.dims[0], self.dims[1], self.dims[2], self.lengths
        )
    }
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], lengths: [f64; 3]) -> Result<Self, GridError> {
        if dims.iter().any(|&n| n == 0) {
            return Err(GridError::BadDims(dims));
        }
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(GridError::BadLengths(lengths));
        }
        let spacing = [
            lengths[0] / dims[0] as f64,
            lengths[1] / dims[1] as f64,
            lengths[2] / dims[2] as f64,
        ];
        let resolved: Vec<f64> = (0..3).filter(|&a| dims[a] > 1).map(|a| spacing[a]).collect();
        let voxel_length = match resolved.first() {
            Some(&h) => {
                if resolved.iter().any(|&s| ((s - h) / h).abs() > 1e-9) {
                    return Err(GridError::NonCubicVoxels(spacing));
                }
                h
            }
            None => lengths[0],
        };
        Ok(Self { dims, lengths, voxel_length })
    }

    /// Grid with `dims` voxels of edge `voxel_length`.
    pub fn with_voxel_length(dims: [usize; 3], voxel_length: f64) -> Result<Self, GridError> {
        Self::new(
            dims,
            [
                dims[0] as f64 * voxel_length,
                dims[1] as f64 * voxel_length,
                dims[2] as f64 * voxel_length,
            ],
        )
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn voxel_length(&self) -> f64 {
        self.voxel_length
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    /// Voxel centre position.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let h = |a: usize| self.lengths[a] / self.dims[a] as f64;
        [
            (c[0] as f64 + 0.5) * h(0),
            (c[1] as f64 + 0.5) * h(1),
            (c[2] as f64 + 0.5) * h(2),
        ]
    }

    /// Angular frequencies along `axis` in native FFT bin order.
    ///
    /// Bin `m` carries `2*pi*(n - N/2)/L` for the `n` that aliases to `m`,
    /// so for even `N` the unpaired bin `N/2` holds the negative Nyquist
    /// frequency `-pi*N/L`.
    pub fn frequency_vector(&self, axis: usize) -> Vec<f64> {
        let n = self.dims[axis];
        let l = self.lengths[axis];
        let highest = (n - 1 - n / 2) as isize;
        (0..n)
            .map(|m| {
                let m = m as isize;
                let k = if m <= highest { m } else { m - n as isize };
                2.0 * PI * k as f64 / l
            })
            .collect()
    }
}

/// Frequency vectors for every stored (half-spectrum) bin.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    pub axes: [Vec<f64>; 3],
    half: usize,
    dims: [usize; 3],
}

impl FrequencyGrid {
    pub fn new(grid: &VoxelGrid) -> Self {
        let dims = grid.dims();
        Self {
            axes: [grid.frequency_vector(0), grid.frequency_vector(1), grid.frequency_vector(2)],
            half: dims[0] / 2 + 1,
            dims,
        }
    }

    #[inline]
    pub fn xi(&self, sidx: usize) -> [f64; 3] {
        let m = sidx % self.half;
        let r = sidx / self.half;
        let j = r % self.dims[1];
        let k = r / self.dims[1];
        [self.axes[0][m], self.axes[1][j], self.axes[2][k]]
    }

    /// Whether the bin lies on a Nyquist plane of an even-length axis, where
    /// odd-order derivatives of real fields are not representable.
    pub fn touches_nyquist(&self, sidx: usize) -> bool {
        let m = sidx % self.half;
        let r = sidx / self.half;
        let idx = [m, r % self.dims[1], r / self.dims[1]];
        (0..3).any(|a| self.dims[a] > 1 && self.dims[a] % 2 == 0 && idx[a] == self.dims[a] / 2)
    }

    pub fn len(&self) -> usize {
        self.half * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// FFT plans and frequency tables for one grid. Shared immutably.
pub struct Spectral {
    grid: VoxelGrid,
    freqs: FrequencyGrid,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: VoxelGrid) -> Self {
        let dims = grid.dims();
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        Self {
            grid,
            freqs: FrequencyGrid::new(&grid),
            half: dims[0] / 2 + 1,
            r2c: rp.plan_fft_forward(dims[0]),
            c2r: rp.plan_fft_inverse(dims[0]),
            fwd: [cp.plan_fft_forward(dims[1]), cp.plan_fft_forward(dims[2])],
            inv: [cp.plan_fft_inverse(dims[1]), cp.plan_fft_inverse(dims[2])],
        }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn freqs(&self) -> &FrequencyGrid {
        &self.freqs
    }

    pub fn spectral_len(&self) -> usize {
        self.freqs.len()
    }

    #[inline]
    pub fn xi(&self, sidx: usize) -> [f64; 3] {
        self.freqs.xi(sidx)
    }

    /// Half-spectrum index of the zero frequency.
    pub const ZERO: usize = 0;

    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.spectral_len()];
        self.forward_into(field, &mut out);
        out
    }

    pub fn forward_into(&self, field: &[f64], out: &mut [Complex64]) {
        let [n1, n2, n3] = self.grid.dims();
        assert_eq!(field.len(), n1 * n2 * n3);
        assert_eq!(out.len(), self.spectral_len());
        let h = self.half;
        let mut row = vec![0.0; n1];
        let mut scratch = self.r2c.make_scratch_vec();
        for r in 0..n2 * n3 {
            row.copy_from_slice(&field[r * n1..(r + 1) * n1]);
            self.r2c
                .process_with_scratch(&mut row, &mut out[r * h..(r + 1) * h], &mut scratch)
                .expect("r2c sizes are fixed by construction");
        }
        self.transform_yz(out, true);
    }

    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        let mut work = spec.to_vec();
        self.inverse_in_place(&mut work, &mut out);
        out
    }

    /// Inverse transform; `spec` is used as workspace and left unspecified.
    pub fn inverse_in_place(&self, spec: &mut [Complex64], out: &mut [f64]) {
        let [n1, n2, n3] = self.grid.dims();
        assert_eq!(out.len(), n1 * n2 * n3);
        self.transform_yz(spec, false);
        let h = self.half;
        let mut scratch = self.c2r.make_scratch_vec();
        let norm = 1.0 / self.grid.len() as f64;
        for r in 0..n2 * n3 {
            let row = &mut spec[r * h..(r + 1) * h];
            // Imaginary parts of the self-conjugate bins are discarded; realfft
            // reports that as an error while still producing the real output.
            let _ = self.c2r.process_with_scratch(row, &mut out[r * n1..(r + 1) * n1], &mut scratch);
        }
        out.iter_mut().for_each(|v| *v *= norm);
    }

    fn transform_yz(&self, data: &mut [Complex64], forward: bool) {
        let [_, n2, n3] = self.grid.dims();
        let h = self.half;
        let plans = if forward { &self.fwd } else { &self.inv };
        if n2 > 1 {
            let mut line = vec![Complex64::new(0.0, 0.0); n2];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plans[0].get_inplace_scratch_len()];
            for k in 0..n3 {
                for m in 0..h {
                    for j in 0..n2 {
                        line[j] = data[m + h * (j + n2 * k)];
                    }
                    plans[0].process_with_scratch(&mut line, &mut scratch);
                    for j in 0..n2 {
                        data[m + h * (j + n2 * k)] = line[j];
                    }
                }
            }
        }
        if n3 > 1 {
            let mut line = vec![Complex64::new(0.0, 0.0); n3];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plans[1].get_inplace_scratch_len()];
            let plane = h * n2;
            for p in 0..plane {
                for k in 0..n3 {
                    line[k] = data[p + plane * k];
                }
                plans[1].process_with_scratch(&mut line, &mut scratch);
                for k in 0..n3 {
                    data[p + plane * k] = line[k];
                }
            }
        }
    }

    /// Applies a per-bin multiplier to a real field: `F^-1{ m(xi) F{f} }`.
    pub fn apply_symbol<S>(&self, field: &[f64], symbol: S) -> Vec<f64>
    where
        S: Fn([f64; 3]) -> Complex64,
    {
        let mut spec = self.forward(field);
        for (s, c) in spec.iter_mut().enumerate() {
            *c *= symbol(self.xi(s));
        }
        let mut out = vec![0.0; self.grid.len()];
        self.inverse_in_place(&mut spec, &mut out);
        out
    }

    /// Spectral gradient of a scalar field.
    pub fn grad_scalar(&self, field: &[f64]) -> VectorField {
        let spec = self.forward(field);
        std::array::from_fn(|j| self.derive(&spec, j))
    }

    /// Spectral gradient of a vector field, `(grad u)_ij = d u_i / d x_j`.
    pub fn grad_vector(&self, field: &VectorField) -> TensorField {
        let specs: Vec<Vec<Complex64>> = field.iter().map(|c| self.forward(c)).collect();
        std::array::from_fn(|ij| self.derive(&specs[ij / 3], ij % 3))
    }

    /// Spectral divergence over the last index, `(div T)_i = d T_ij / d x_j`.
    pub fn divergence(&self, field: &TensorField) -> VectorField {
        let specs: Vec<Vec<Complex64>> = field.iter().map(|c| self.forward(c)).collect();
        std::array::from_fn(|i| {
            let mut acc = vec![Complex64::new(0.0, 0.0); self.spectral_len()];
            for j in 0..3 {
                for (s, a) in acc.iter_mut().enumerate() {
                    *a += specs[3 * i + j][s] * Complex64::new(0.0, self.xi(s)[j]);
                }
            }
            let mut out = vec![0.0; self.grid.len()];
            self.inverse_in_place(&mut acc, &mut out);
            out
        })
    }

    /// Reference-configuration curl of a plastic distortion field,
    /// `Lambda = F^-1{ i xi x F{Fp^T} }`, i.e. `Lambda_ij = e_ikl d_k Fp_jl`.
    pub fn curl_ref(&self, fp: &TensorField) -> TensorField {
        let specs: Vec<Vec<Complex64>> = fp.iter().map(|c| self.forward(c)).collect();
        std::array::from_fn(|ij| {
            let (i, j) = (ij / 3, ij % 3);
            let (k, l) = ((i + 1) % 3, (i + 2) % 3);
            // e_ikl with (i,k,l) cyclic is +1, anticyclic is -1.
            let mut acc = vec![Complex64::new(0.0, 0.0); self.spectral_len()];
            for (s, a) in acc.iter_mut().enumerate() {
                let xi = self.xi(s);
                *a = Complex64::new(0.0, xi[k]) * specs[3 * j + l][s]
                    - Complex64::new(0.0, xi[l]) * specs[3 * j + k][s];
            }
            let mut out = vec![0.0; self.grid.len()];
            self.inverse_in_place(&mut acc, &mut out);
            out
        })
    }

    /// Spectral Laplacian: each coefficient multiplied by `-|xi|^2`.
    pub fn laplacian(&self, field: &[f64]) -> Vec<f64> {
        self.apply_symbol(field, |xi| Complex64::new(-(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]), 0.0))
    }

    fn derive(&self, spec: &[Complex64], axis: usize) -> Vec<f64> {
        let mut d: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(s, c)| c * Complex64::new(0.0, self.xi(s)[axis]))
            .collect();
        let mut out = vec![0.0; self.grid.len()];
        self.inverse_in_place(&mut d, &mut out);
        out
    }
}

/// Volume average of a scalar field, summed in index order.
pub fn mean(field: &[f64]) -> f64 {
    field.iter().sum::<f64>() / field.len() as f64
}

pub fn max_abs(field: &[f64]) -> f64 {
    field.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
