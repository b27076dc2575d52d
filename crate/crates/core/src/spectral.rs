//! FFT plumbing for periodic grids: cached plans, axis-wise transforms,
//! wavenumber lattices and the Fourier multipliers used by the steppers.
//!
//! Forward transforms are plain unnormalized DFTs (`sum u_j e^{-i xi x_j}`
//! up to the lattice phase); the inverse carries the `1/N` factor. All mass
//! bookkeeping uses Parseval in the form `sum|u|^2 = (1/N) sum|U|^2`.

use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftPlanner};

use crate::grid::{BoundaryKind, Field, Grid};

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut p = PLANNER.lock().expect("fft planner poisoned");
    if forward {
        p.plan_fft_forward(len)
    } else {
        p.plan_fft_inverse(len)
    }
}

fn transform_axes(grid: &Grid, data: &mut [Complex64], forward: bool) {
    debug_assert_eq!(grid.boundary(), BoundaryKind::Periodic);
    match grid.dim() {
        1 => {
            plan(data.len(), forward).process(data);
        }
        _ => {
            let (n0, n1) = (grid.points()[0], grid.points()[1]);
            let row = plan(n1, forward);
            for chunk in data.chunks_exact_mut(n1) {
                row.process(chunk);
            }
            let col = plan(n0, forward);
            let mut tmp = vec![Complex64::new(0.0, 0.0); n0];
            for j in 0..n1 {
                for i in 0..n0 {
                    tmp[i] = data[i * n1 + j];
                }
                col.process(&mut tmp);
                for i in 0..n0 {
                    data[i * n1 + j] = tmp[i];
                }
            }
        }
    }
}

/// Unnormalized forward DFT along every axis.
pub fn forward(grid: &Grid, data: &mut [Complex64]) {
    transform_axes(grid, data, true);
}

/// Inverse DFT including the `1/N` normalization.
pub fn inverse(grid: &Grid, data: &mut [Complex64]) {
    transform_axes(grid, data, false);
    let scale = 1.0 / grid.len() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Wavenumbers of one axis in DFT bin order: `2 pi k / L` with `k` wrapped to
/// `(-n/2, n/2]`.
pub fn wavenumbers(grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.points()[axis];
    let (lo, hi) = grid.extents()[axis];
    let base = std::f64::consts::TAU / (hi - lo);
    (0..n)
        .map(|k| {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            base * kk
        })
        .collect()
}

/// `|xi|^2` for every node of the wavenumber lattice, flat-indexed like the
/// grid itself.
pub fn wavenumber_sq(grid: &Grid) -> Vec<f64> {
    match grid.dim() {
        1 => wavenumbers(grid, 0).iter().map(|x| x * x).collect(),
        _ => {
            let k0 = wavenumbers(grid, 0);
            let k1 = wavenumbers(grid, 1);
            let n1 = grid.points()[1];
            let mut out = vec![0.0; grid.len()];
            for (i, &a) in k0.iter().enumerate() {
                for (j, &b) in k1.iter().enumerate() {
                    out[i * n1 + j] = a * a + b * b;
                }
            }
            out
        }
    }
}

/// Apply the free-flow multiplier `e^{-i tau |xi|^2}` in place.
pub fn apply_free_multiplier(field: &mut Field, tau: f64) {
    let grid = field.grid().clone();
    let ksq = wavenumber_sq(&grid);
    let data = field.values_mut();
    forward(&grid, data);
    for (v, &k2) in data.iter_mut().zip(&ksq) {
        let phase = -tau * k2;
        *v *= Complex64::new(phase.cos(), phase.sin());
    }
    inverse(&grid, data);
}

/// Apply the implicit-midpoint linear update `(1 - i tau/2 |xi|^2)/(1 + i tau/2 |xi|^2)`
/// in place (the Cayley form of the free flow).
pub fn apply_cayley_multiplier(field: &mut Field, tau: f64) {
    let grid = field.grid().clone();
    let ksq = wavenumber_sq(&grid);
    let data = field.values_mut();
    forward(&grid, data);
    for (v, &k2) in data.iter_mut().zip(&ksq) {
        let z = Complex64::new(1.0, 0.5 * tau * k2);
        *v *= z.conj() / z;
    }
    inverse(&grid, data);
}

/// `||grad u||_L2^2` via the spectral derivative.
pub fn spectral_grad_l2(field: &Field) -> f64 {
    let grid = field.grid();
    let ksq = wavenumber_sq(grid);
    let mut data = field.values().to_vec();
    forward(grid, &mut data);
    let s: f64 = data.iter().zip(&ksq).map(|(v, &k2)| k2 * v.norm_sqr()).sum();
    s * grid.cell_volume() / grid.len() as f64
}

/// Periodic discrete convolution `(w * d)_j = h^N sum_k w_{j-k} d_k`,
/// evaluated spectrally. Returns the raw complex result; callers decide what
/// to do with the imaginary residue.
pub fn convolve_periodic(grid: &Grid, kernel: &[f64], density: &[f64]) -> Vec<Complex64> {
    let mut kw: Vec<Complex64> = kernel.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut dw: Vec<Complex64> = density.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(grid, &mut kw);
    forward(grid, &mut dw);
    for (a, b) in kw.iter_mut().zip(&dw) {
        *a *= b;
    }
    inverse(grid, &mut kw);
    let cell = grid.cell_volume();
    for v in kw.iter_mut() {
        *v *= cell;
    }
    kw
}
