//! Shared fixtures for the stepper and norm benchmarks.

use lightcone_core::grid::{Field, Grid};
use lightcone_core::prop::gaussian_exact;
use std::sync::Arc;

pub fn line_grid(n: usize) -> Arc<Grid> {
    Grid::periodic(&[(-40.0, 40.0)], &[n]).expect("benchmark grid")
}

pub fn plane_grid(n: usize) -> Arc<Grid> {
    Grid::periodic(&[(-40.0, 40.0), (-40.0, 40.0)], &[n, n]).expect("benchmark grid")
}

pub fn gaussian_on(grid: &Arc<Grid>) -> Field {
    gaussian_exact(0.0, grid).expect("benchmark initial data")
}
