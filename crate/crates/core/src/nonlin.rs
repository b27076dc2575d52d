//! The nonlinearity catalog: zero, single power, external potential, Hartree
//! convolution and the saturated exterior-domain form, together with their
//! energy functionals and the pointwise gauge-condition diagnostic.
//!
//! Every member has the structure `f(u) = g(|u|^2, x) u` with `g` real, which
//! is what makes the split-step phase rotation exact and charge conservation
//! sharp.


use crate::error::{Error, Result};
use crate::grid::{self, BoundaryKind, Field, RealField, Region};
use crate::spectral;

/// Relative bound allowed for the imaginary residue of the spectral Hartree
/// convolution before it is discarded.
pub const CONVOLUTION_RESIDUE_LIMIT: f64 = 1e-12;

const GL4_NODES: [f64; 4] =
    [-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526];
const GL4_WEIGHTS: [f64; 4] =
    [0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538];

#[derive(Debug, Clone)]
pub enum HartreeKernelForm {
    PowerLaw { mu: f64, gamma: f64 },
    Sampled,
}

/// Interaction kernel realized on a periodic grid, indexed by displacement
/// (index 0 is the origin cell).
#[derive(Debug, Clone)]
pub struct HartreeKernel {
    form: HartreeKernelForm,
    samples: RealField,
}

impl HartreeKernel {
    /// `W(x) = mu |x|^{-gamma}` sampled on the displacement lattice. The
    /// origin cell takes the cell average: analytic in 1D, 16-point
    /// Gauss-Legendre in 2D, so the discrete kernel stays integrable.
    pub fn power_law(grid: &std::sync::Arc<grid::Grid>, mu: f64, gamma: f64) -> Result<Self> {
        if grid.boundary() != BoundaryKind::Periodic {
            return Err(Error::UnsupportedBoundary { op: "Hartree kernel", need: "periodic" });
        }
        if mu == 0.0 || !mu.is_finite() {
            return Err(Error::InvalidParameter("power-law kernel needs nonzero mu".into()));
        }
        let dim = grid.dim();
        let gamma_max = (dim as f64).min(4.0);
        if !(gamma > 0.0 && gamma < gamma_max) {
            return Err(Error::InvalidParameter(format!(
                "power-law exponent gamma={gamma} outside (0, {gamma_max}) for dim {dim}"
            )));
        }
        let mut values = vec![0.0; grid.len()];
        for (flat, v) in values.iter_mut().enumerate() {
            let d = displacement(grid, flat);
            let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
            *v = if flat == 0 {
                origin_cell_average(grid, mu, gamma)
            } else {
                mu * r.powf(-gamma)
            };
        }
        let samples = RealField::new(grid.clone(), values)?;
        Ok(HartreeKernel { form: HartreeKernelForm::PowerLaw { mu, gamma }, samples })
    }

    /// User-supplied kernel samples, checked for evenness under `x -> -x`.
    pub fn sampled(samples: RealField) -> Result<Self> {
        let grid = samples.grid();
        if grid.boundary() != BoundaryKind::Periodic {
            return Err(Error::UnsupportedBoundary { op: "Hartree kernel", need: "periodic" });
        }
        let scale = samples.max_abs().max(1e-300);
        for flat in 0..grid.len() {
            let refl = reflect_index(grid, flat);
            let diff = (samples.values()[flat] - samples.values()[refl]).abs();
            if diff > 1e-12 * scale {
                return Err(Error::InvalidParameter(format!(
                    "sampled Hartree kernel is not even: |W(x) - W(-x)| = {diff:.3e}"
                )));
            }
        }
        Ok(HartreeKernel { form: HartreeKernelForm::Sampled, samples: samples.clone() })
    }

    pub fn form(&self) -> &HartreeKernelForm {
        &self.form
    }

    pub fn samples(&self) -> &RealField {
        &self.samples
    }

    pub fn grid(&self) -> &std::sync::Arc<grid::Grid> {
        self.samples.grid()
    }

    /// Periodic convolution `W * density`, evaluated spectrally. The
    /// imaginary residue must stay below `1e-12` of the result magnitude and
    /// is then discarded.
    pub fn convolve(&self, density: &RealField) -> Result<RealField> {
        if !grid::same_grid(self.grid(), density.grid()) {
            return Err(Error::GridMismatch);
        }
        let grid = self.grid();
        let raw = spectral::convolve_periodic(grid, self.samples.values(), density.values());
        let mag = raw.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let residue = raw.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        if residue > CONVOLUTION_RESIDUE_LIMIT * mag.max(1e-300) {
            return Err(Error::InvalidParameter(format!(
                "hartree convolution imaginary residue {residue:.3e} exceeds 1e-12 of magnitude {mag:.3e}"
            )));
        }
        RealField::new(grid.clone(), raw.iter().map(|v| v.re).collect())
    }
}

fn displacement(grid: &grid::Grid, flat: usize) -> [f64; 2] {
    let idx = grid.unflatten(flat);
    let mut d = [0.0; 2];
    for a in 0..grid.dim() {
        let n = grid.points()[a];
        let i = idx[a];
        let wrapped = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        d[a] = wrapped * grid.spacing(a);
    }
    d
}

fn reflect_index(grid: &grid::Grid, flat: usize) -> usize {
    let idx = grid.unflatten(flat);
    let mut out = [0usize; 2];
    for a in 0..grid.dim() {
        let n = grid.points()[a];
        out[a] = (n - idx[a]) % n;
    }
    grid.flatten(out)
}

fn origin_cell_average(grid: &grid::Grid, mu: f64, gamma: f64) -> f64 {
    match grid.dim() {
        1 => {
            // (1/h) int_{-h/2}^{h/2} mu |x|^-gamma dx, gamma < 1
            let h = grid.spacing(0);
            mu * (h / 2.0).powf(-gamma) / (1.0 - gamma)
        }
        _ => {
            let (h0, h1) = (grid.spacing(0), grid.spacing(1));
            let mut acc = 0.0;
            for (i, &xa) in GL4_NODES.iter().enumerate() {
                for (j, &xb) in GL4_NODES.iter().enumerate() {
                    let x = xa * h0 / 2.0;
                    let y = xb * h1 / 2.0;
                    let r = (x * x + y * y).sqrt();
                    acc += GL4_WEIGHTS[i] * GL4_WEIGHTS[j] * mu * r.powf(-gamma);
                }
            }
            acc / 4.0
        }
    }
}

/// Tagged description of the nonlinearity `f` in `i u_t + Lap u + f(u) = 0`.
///
/// Sign conventions: `Power` stores the signed coupling (`lambda > 0`
/// attractive, `lambda < 0` repulsive); `Potential` stores `V` itself with
/// `f(u) = -V u`.
#[derive(Debug, Clone)]
pub enum NonlinearitySpec {
    Zero,
    Power { lambda: f64, alpha: f64 },
    Potential(RealField),
    Hartree(HartreeKernel),
    Saturated { lambda: f64, alpha: f64 },
}

impl NonlinearitySpec {
    pub fn name(&self) -> &'static str {
        match self {
            NonlinearitySpec::Zero => "zero",
            NonlinearitySpec::Power { .. } => "power",
            NonlinearitySpec::Potential(_) => "potential",
            NonlinearitySpec::Hartree(_) => "hartree",
            NonlinearitySpec::Saturated { .. } => "saturated",
        }
    }

    pub fn validate(&self, grid: &std::sync::Arc<grid::Grid>) -> Result<()> {
        match self {
            NonlinearitySpec::Zero => Ok(()),
            NonlinearitySpec::Power { alpha, .. } | NonlinearitySpec::Saturated { alpha, .. } => {
                if *alpha < 0.0 || !alpha.is_finite() {
                    Err(Error::InvalidParameter(format!("power exponent alpha={alpha} must be >= 0")))
                } else {
                    Ok(())
                }
            }
            NonlinearitySpec::Potential(v) => {
                if !grid::same_grid(v.grid(), grid) {
                    Err(Error::GridMismatch)
                } else {
                    Ok(())
                }
            }
            NonlinearitySpec::Hartree(k) => {
                if grid.boundary() != BoundaryKind::Periodic {
                    Err(Error::UnsupportedBoundary { op: "Hartree nonlinearity", need: "periodic" })
                } else if !grid::same_grid(k.grid(), grid) {
                    Err(Error::GridMismatch)
                } else {
                    Ok(())
                }
            }
        }
    }

    /// The real multiplier `g(|u|^2, x)` with `f(u) = g u`.
    pub fn phase(&self, u: &Field) -> Result<RealField> {
        self.validate(u.grid())?;
        let grid = u.grid().clone();
        match self {
            NonlinearitySpec::Zero => RealField::new(grid, vec![0.0; u.values().len()]),
            NonlinearitySpec::Power { lambda, alpha } => {
                let vals = u
                    .values()
                    .iter()
                    .map(|v| {
                        if *alpha == 0.0 {
                            *lambda
                        } else {
                            lambda * v.norm_sqr().powf(alpha / 2.0)
                        }
                    })
                    .collect();
                RealField::new(grid, vals)
            }
            NonlinearitySpec::Potential(v) => {
                let vals = v.values().iter().map(|&x| -x).collect();
                RealField::new(grid, vals)
            }
            NonlinearitySpec::Hartree(kernel) => {
                let density =
                    RealField::new(grid.clone(), u.values().iter().map(|v| v.norm_sqr()).collect())?;
                let conv = kernel.convolve(&density)?;
                let vals = conv.values().iter().map(|&x| -x).collect();
                RealField::new(grid, vals)
            }
            NonlinearitySpec::Saturated { lambda, alpha } => {
                let vals = u
                    .values()
                    .iter()
                    .map(|v| lambda * (1.0 + v.norm_sqr()).powf(alpha / 2.0))
                    .collect();
                RealField::new(grid, vals)
            }
        }
    }

    /// `f(u)` as a field; zero outside the domain mask.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        let g = self.phase(u)?;
        let vals = u.values().iter().zip(g.values()).map(|(v, &p)| p * v).collect();
        Field::new(u.grid().clone(), vals, u.time())
    }

    /// Pointwise gauge-condition defect `max |Im(f(u) conj(u))|`; pure
    /// roundoff for every catalog member.
    pub fn gauge_defect(&self, u: &Field) -> Result<f64> {
        let f = self.apply(u)?;
        let mut m = 0.0f64;
        for (fv, uv) in f.values().iter().zip(u.values()) {
            m = m.max((fv * uv.conj()).im.abs());
        }
        Ok(m)
    }

    /// Natural scale for the gauge defect: `1 + max|g| max|u|^2`, which is
    /// `1 + |lambda| max|u|^{alpha+2}` for powers, `1 + max|V| max|u|^2` for
    /// potentials and `1 + max|W*|u|^2| max|u|^2` for Hartree.
    pub fn gauge_defect_scale(&self, u: &Field) -> Result<f64> {
        let g = self.phase(u)?;
        let m = u.max_abs();
        Ok(1.0 + g.max_abs() * m * m)
    }

    /// The conserved energy of the catalog member. For powers the term is
    /// `-lambda/(alpha+2) ||u||_{alpha+2}^{alpha+2}`, so a repulsive
    /// (`lambda < 0`) coupling contributes positively.
    pub fn energy(&self, u: &Field) -> Result<f64> {
        self.validate(u.grid())?;
        let grad = grid::grad_l2_norm(u)?;
        let base = 0.5 * grad * grad;
        let cell = u.grid().cell_volume();
        match self {
            NonlinearitySpec::Zero => Ok(base),
            NonlinearitySpec::Power { lambda, alpha } => {
                let p = alpha + 2.0;
                let norm_p = grid::lp_norm(u, &Region::whole(u.grid()), p)?;
                Ok(base - lambda / p * norm_p.powf(p))
            }
            NonlinearitySpec::Potential(v) => {
                let s: f64 = v
                    .values()
                    .iter()
                    .zip(u.values())
                    .map(|(&vv, uv)| vv * uv.norm_sqr())
                    .sum();
                Ok(base + 0.5 * s * cell)
            }
            NonlinearitySpec::Hartree(kernel) => {
                let density = RealField::new(
                    u.grid().clone(),
                    u.values().iter().map(|v| v.norm_sqr()).collect(),
                )?;
                let conv = kernel.convolve(&density)?;
                let s: f64 =
                    conv.values().iter().zip(density.values()).map(|(&a, &b)| a * b).sum();
                Ok(base + 0.25 * s * cell)
            }
            NonlinearitySpec::Saturated { lambda, alpha } => {
                let p = (alpha + 2.0) / 2.0;
                let s: f64 = u
                    .values()
                    .iter()
                    .map(|v| (1.0 + v.norm_sqr()).powf(p) - 1.0)
                    .sum();
                Ok(base - lambda / (alpha + 2.0) * s * cell)
            }
        }
    }
}
