//! Independent reference computations: adaptive quadrature, the error
//! function derived from it, and the direct-sum periodic convolution.
//!
//! These are the second route behind every frozen test constant; they never
//! call into the lattice norms or the spectral code they are used to check.

use num_complex::Complex64;

use crate::grid::Grid;

/// Adaptive Simpson quadrature to absolute tolerance `tol`. The interval is
/// seeded with 32 uniform panels so narrow features cannot hide between the
/// initial probe points.
pub fn integrate(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn recurse(
        f: impl Fn(f64) -> f64 + Copy,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    const PANELS: usize = 32;
    let w = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let lo = a + i as f64 * w;
            let hi = lo + w;
            recurse(f, lo, hi, simpson(f, lo, hi), tol / PANELS as f64, 48)
        })
        .sum()
}

/// Error function via quadrature of its defining integral.
pub fn erf(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let sign = z.signum();
    let z = z.abs();
    let sqrt_pi = integrate(|x| (-x * x).exp(), -30.0, 30.0, 1e-14);
    sign * 2.0 / sqrt_pi * integrate(|s| (-s * s).exp(), 0.0, z, 1e-14)
}

/// `|| e^{-xi^2/2} ||_{L^2(lo < |xi| < hi)}`, the limiting windowed mass of
/// the width-1 Gaussian under free flow.
pub fn gaussian_window_mass(lo: f64, hi: f64) -> f64 {
    assert!(lo >= 0.0 && hi > lo);
    let hi = hi.min(40.0);
    (2.0 * integrate(|x| (-x * x).exp(), lo, hi, 1e-14)).sqrt()
}

/// Direct `O(n^2)` periodic convolution `(w * d)_j = h^N sum_k w_{j-k} d_k`,
/// the slow route checked against the spectral one.
pub fn direct_convolve(grid: &Grid, kernel: &[f64], density: &[f64]) -> Vec<f64> {
    let cell = grid.cell_volume();
    match grid.dim() {
        1 => {
            let n = grid.len();
            (0..n)
                .map(|j| {
                    let mut s = 0.0;
                    for (k, &d) in density.iter().enumerate() {
                        s += kernel[(j + n - k) % n] * d;
                    }
                    s * cell
                })
                .collect()
        }
        _ => {
            let (n0, n1) = (grid.points()[0], grid.points()[1]);
            let mut out = vec![0.0; grid.len()];
            for j0 in 0..n0 {
                for j1 in 0..n1 {
                    let mut s = 0.0;
                    for k0 in 0..n0 {
                        let m0 = (j0 + n0 - k0) % n0;
                        for k1 in 0..n1 {
                            let m1 = (j1 + n1 - k1) % n1;
                            s += kernel[m0 * n1 + m1] * density[k0 * n1 + k1];
                        }
                    }
                    out[j0 * n1 + j1] = s * cell;
                }
            }
            out
        }
    }
}

/// Residual of a candidate solution under `i u_t + u_xx + lambda |u|^alpha u = 0`,
/// with the time derivative by central differences of the closed form and the
/// Laplacian taken spectrally. Used to certify closed-form references.
pub fn nls_residual_l2(
    grid: &std::sync::Arc<Grid>,
    u: impl Fn(f64, f64) -> Complex64,
    t: f64,
    dt: f64,
    lambda: f64,
    alpha: f64,
) -> f64 {
    use crate::grid::Field;
    let at = |s: f64| {
        Field::from_fn(grid.clone(), s, |x| u(s, x[0])).expect("closed form must be finite")
    };
    let (prev, mid, next) = (at(t - dt), at(t), at(t + dt));
    let mut lap = mid.values().to_vec();
    let ksq = crate::spectral::wavenumber_sq(grid);
    crate::spectral::forward(grid, &mut lap);
    for (v, &k2) in lap.iter_mut().zip(&ksq) {
        *v *= -k2;
    }
    crate::spectral::inverse(grid, &mut lap);

    let mut acc = 0.0;
    for (i, l) in lap.iter().enumerate() {
        let ut = (next.values()[i] - prev.values()[i]) / (2.0 * dt);
        let v = mid.values()[i];
        let f = lambda * v.norm().powf(alpha) * v;
        let r = Complex64::i() * ut + l + f;
        acc += r.norm_sqr();
    }
    (acc * grid.cell_volume()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_integral_constants() {
        let sqrt_pi = integrate(|x| (-x * x).exp(), -40.0, 40.0, 1e-14);
        assert!((sqrt_pi - 1.772453850905516).abs() < 1e-12);
        let second = integrate(|x| x * x * (-x * x).exp(), -40.0, 40.0, 1e-14);
        assert!((second - 0.886226925452758).abs() < 1e-12);
    }

    #[test]
    fn erf_reference_values() {
        assert!((erf(1.0) - 0.8427007929497149).abs() < 1e-12);
        assert!((erf(std::f64::consts::SQRT_2) - 0.9544997361036416).abs() < 1e-12);
        assert!((erf(-1.0) + 0.8427007929497149).abs() < 1e-12);
    }

    #[test]
    fn window_mass_matches_frozen_strauss_value() {
        let v = gaussian_window_mass(0.0, 1.0);
        assert!((v - 1.2221490357664461).abs() < 1e-10, "got {v}");
        let w = gaussian_window_mass(0.0, std::f64::consts::SQRT_2);
        assert!((w - 1.3006947116618866).abs() < 1e-10, "got {w}");
    }

    #[test]
    fn direct_convolution_identity_kernel() {
        let g = Grid::periodic(&[(-1.0, 1.0)], &[32]).unwrap();
        let mut kernel = vec![0.0; 32];
        kernel[0] = 1.0 / g.cell_volume();
        let density: Vec<f64> = (0..32).map(|i| (i as f64).cos()).collect();
        let out = direct_convolve(&g, &kernel, &density);
        for (a, b) in out.iter().zip(&density) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_reference_satisfies_free_equation() {
        let g = Grid::periodic(&[(-40.0, 40.0)], &[2048]).unwrap();
        let u = |t: f64, x: f64| {
            let w = Complex64::new(1.0, 2.0 * t);
            w.powf(-0.5) * (-Complex64::new(x * x, 0.0) / (2.0 * w)).exp()
        };
        let r = nls_residual_l2(&g, u, 0.7, 1e-4, 0.0, 0.0);
        assert!(r < 1e-6, "free-equation residual {r}");
    }

    #[test]
    fn soliton_satisfies_cubic_nls() {
        // u = e^{it} sqrt(2) sech(x) under i u_t + u_xx + |u|^2 u = 0
        let g = Grid::periodic(&[(-40.0, 40.0)], &[2048]).unwrap();
        let u = |t: f64, x: f64| {
            Complex64::new(0.0, t).exp() * std::f64::consts::SQRT_2 / x.cosh()
        };
        let r = nls_residual_l2(&g, u, 0.8, 1e-4, 1.0, 2.0);
        assert!(r < 1e-6, "pde residual {r}");
    }
}
