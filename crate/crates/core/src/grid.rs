//! Spatial discretization: rectangular lattices, domain masks, regions and
//! the discrete Lebesgue / gradient norms everything else is built on.
//!
//! Nodes sit at `x_i = a + i*h` with `h = (b-a)/n`; each node owns the cell
//! `[x_i - h/2, x_i + h/2]`, so the cell-sum quadrature below is the midpoint
//! rule. Region membership is decided at the node (= cell center), which
//! gives the staircase approximation of balls and annuli.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
}

/// Rectangular lattice over a 1D or 2D box, with a boolean mask carving the
/// domain out of the box. Dirichlet grids keep the mask false on box-boundary
/// nodes; obstacle masks may remove further nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: Vec<(f64, f64)>,
    points: Vec<usize>,
    boundary: BoundaryKind,
    mask: Vec<bool>,
}

impl Grid {
    pub fn periodic(extents: &[(f64, f64)], points: &[usize]) -> Result<Arc<Grid>> {
        let mut g = Self::check_box(extents, points, BoundaryKind::Periodic)?;
        for &n in points {
            if !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "periodic grids need power-of-two point counts, got {n}"
                )));
            }
        }
        g.mask = vec![true; g.len()];
        Ok(Arc::new(g))
    }

    pub fn dirichlet(extents: &[(f64, f64)], points: &[usize]) -> Result<Arc<Grid>> {
        Self::dirichlet_with_obstacle(extents, points, |_| false)
    }

    /// Dirichlet box with an additional obstacle carved out of the domain;
    /// `obstacle` returns true where the node is *excluded* from the domain.
    pub fn dirichlet_with_obstacle(
        extents: &[(f64, f64)],
        points: &[usize],
        obstacle: impl Fn(&[f64]) -> bool,
    ) -> Result<Arc<Grid>> {
        let mut g = Self::check_box(extents, points, BoundaryKind::Dirichlet)?;
        let mut mask = vec![true; g.len()];
        for (flat, m) in mask.iter_mut().enumerate() {
            let idx = g.unflatten(flat);
            // the x = a face lies on the box boundary; x = b is the ghost layer
            if idx.iter().take(g.dim).any(|&i| i == 0) {
                *m = false;
                continue;
            }
            let pos = g.position(flat);
            if obstacle(&pos[..g.dim]) {
                *m = false;
            }
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidGrid("domain mask is empty".into()));
        }
        g.mask = mask;
        Ok(Arc::new(g))
    }

    fn check_box(extents: &[(f64, f64)], points: &[usize], boundary: BoundaryKind) -> Result<Grid> {
        let dim = extents.len();
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if points.len() != dim {
            return Err(Error::InvalidGrid("extents/points length mismatch".into()));
        }
        for (a, &(lo, hi)) in extents.iter().enumerate() {
            if !(hi - lo).is_finite() || hi <= lo {
                return Err(Error::InvalidGrid(format!("axis {a}: empty interval [{lo}, {hi}]")));
            }
            if points[a] < 2 {
                return Err(Error::InvalidGrid(format!("axis {a}: need at least 2 points")));
            }
        }
        Ok(Grid {
            dim,
            extents: extents.to_vec(),
            points: points.to_vec(),
            boundary,
            mask: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi) = self.extents[axis];
        (hi - lo) / self.points[axis] as f64
    }

    /// Volume of one cell, `h_1 * ... * h_N`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn in_domain(&self, flat: usize) -> bool {
        self.mask[flat]
    }

    /// Per-axis index of a flat node index (axis 1 contiguous in 2D).
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.points[1], flat % self.points[1]],
        }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        match self.dim {
            1 => idx[0],
            _ => idx[0] * self.points[1] + idx[1],
        }
    }

    /// Node coordinates; entries past `dim` are zero.
    pub fn position(&self, flat: usize) -> [f64; 2] {
        let idx = self.unflatten(flat);
        let mut pos = [0.0; 2];
        for a in 0..self.dim {
            pos[a] = self.extents[a].0 + idx[a] as f64 * self.spacing(a);
        }
        pos
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        p.len() == self.dim
            && (0..self.dim).all(|a| p[a] >= self.extents[a].0 && p[a] <= self.extents[a].1)
    }

    /// Volume of the domain mask, `count * h^N`.
    pub fn domain_volume(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 * self.cell_volume()
    }
}

pub fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

fn dist(p: &[f64; 2], c: &[f64], dim: usize) -> f64 {
    let mut s = 0.0;
    for a in 0..dim {
        let d = p[a] - c[a];
        s += d * d;
    }
    s.sqrt()
}

/// Complex state on a grid, stamped with its simulation time. Values are kept
/// zero wherever the domain mask is false.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
    time: f64,
}

impl Field {
    pub fn new(grid: Arc<Grid>, mut values: Vec<Complex64>, time: f64) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        for (v, &m) in values.iter_mut().zip(grid.mask()) {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        let f = Field { grid, values, time };
        f.check_finite("field construction")?;
        Ok(f)
    }

    pub fn zero(grid: Arc<Grid>) -> Field {
        let n = grid.len();
        Field { grid, values: vec![Complex64::new(0.0, 0.0); n], time: 0.0 }
    }

    pub fn from_fn(
        grid: Arc<Grid>,
        time: f64,
        f: impl Fn(&[f64]) -> Complex64,
    ) -> Result<Field> {
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.position(i);
                f(&p[..grid.dim()])
            })
            .collect();
        Field::new(grid, values, time)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    /// Re-impose the Dirichlet mask after a mutation of the raw values.
    pub fn apply_mask(&mut self) {
        for (v, &m) in self.values.iter_mut().zip(self.grid.mask()) {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { context: context.to_string() })
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// Real-valued lattice function (potentials, kernels, cutoffs, densities).
#[derive(Debug, Clone)]
pub struct RealField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<RealField> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter("real field length mismatch".into()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "real field construction".into() });
        }
        Ok(RealField { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<RealField> {
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.position(i);
                f(&p[..grid.dim()])
            })
            .collect();
        RealField::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionKind {
    WholeDomain,
    Ball { center: Vec<f64>, radius: f64 },
    /// Half-open shell `inner <= |x-c| < outer`, so a ball and the annulus on
    /// top of it partition the bigger ball node-exactly.
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
}

/// A region realized as a node mask on a grid (always intersected with the
/// domain mask).
#[derive(Debug, Clone)]
pub struct Region {
    kind: RegionKind,
    grid: Arc<Grid>,
    mask: Vec<bool>,
}

impl Region {
    pub fn new(grid: &Arc<Grid>, kind: RegionKind) -> Result<Region> {
        match &kind {
            RegionKind::WholeDomain => {}
            RegionKind::Ball { center, radius } => {
                if !grid.contains_point(center) {
                    return Err(Error::InvalidRegion("ball center outside the box".into()));
                }
                if !(*radius > 0.0) {
                    return Err(Error::InvalidRegion("ball radius must be positive".into()));
                }
            }
            RegionKind::Annulus { center, inner, outer } => {
                if !grid.contains_point(center) {
                    return Err(Error::InvalidRegion("annulus center outside the box".into()));
                }
                if !(*inner >= 0.0 && inner < outer) {
                    return Err(Error::InvalidRegion("annulus needs 0 <= inner < outer".into()));
                }
            }
        }
        let dim = grid.dim();
        let mask = (0..grid.len())
            .map(|flat| {
                if !grid.in_domain(flat) {
                    return false;
                }
                let p = grid.position(flat);
                match &kind {
                    RegionKind::WholeDomain => true,
                    RegionKind::Ball { center, radius } => dist(&p, center, dim) < *radius,
                    RegionKind::Annulus { center, inner, outer } => {
                        let d = dist(&p, center, dim);
                        d >= *inner && d < *outer
                    }
                }
            })
            .collect();
        Ok(Region { kind, grid: grid.clone(), mask })
    }

    pub fn whole(grid: &Arc<Grid>) -> Region {
        Region::new(grid, RegionKind::WholeDomain).expect("whole-domain region is always valid")
    }

    pub fn ball(grid: &Arc<Grid>, center: &[f64], radius: f64) -> Result<Region> {
        Region::new(grid, RegionKind::Ball { center: center.to_vec(), radius })
    }

    pub fn annulus(grid: &Arc<Grid>, center: &[f64], inner: f64, outer: f64) -> Result<Region> {
        Region::new(grid, RegionKind::Annulus { center: center.to_vec(), inner, outer })
    }

    pub fn kind(&self) -> &RegionKind {
        &self.kind
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn node_mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn node_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Discrete region volume, `count * h^N`.
    pub fn volume(&self) -> f64 {
        self.node_count() as f64 * self.grid.cell_volume()
    }
}

/// Validate a Lebesgue exponent; the estimates only use `r` in `[2, inf]`.
pub fn check_exponent(r: f64) -> Result<()> {
    if r.is_nan() || r < 2.0 {
        return Err(Error::InvalidParameter(format!("Lebesgue exponent {r} outside [2, inf]")));
    }
    Ok(())
}

/// Discrete `L^r` norm of `u` over a region: `(sum |u|^r h^N)^(1/r)` for
/// finite `r`, the node maximum for `r = inf`. Empty regions give 0.
pub fn lp_norm(field: &Field, region: &Region, r: f64) -> Result<f64> {
    check_exponent(r)?;
    if !same_grid(field.grid(), region.grid()) {
        return Err(Error::GridMismatch);
    }
    let vals = field.values();
    let mask = region.node_mask();
    if r.is_infinite() {
        let mut m = 0.0f64;
        for (v, &inc) in vals.iter().zip(mask) {
            if inc {
                m = m.max(v.norm());
            }
        }
        return Ok(m);
    }
    let cell = field.grid().cell_volume();
    let mut acc = 0.0f64;
    if r == 2.0 {
        for (v, &inc) in vals.iter().zip(mask) {
            if inc {
                acc += v.norm_sqr();
            }
        }
    } else {
        for (v, &inc) in vals.iter().zip(mask) {
            if inc {
                acc += v.norm().powf(r);
            }
        }
    }
    Ok((acc * cell).powf(1.0 / r))
}

/// `L^2` norm over the whole domain.
pub fn l2_norm(field: &Field) -> f64 {
    let cell = field.grid().cell_volume();
    let s: f64 = field
        .values()
        .iter()
        .zip(field.grid().mask())
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.norm_sqr())
        .sum();
    (s * cell).sqrt()
}

/// Discrete `H^1` seminorm. Periodic grids use the spectral derivative;
/// Dirichlet grids use edge differences with zero ghost values, which keeps
/// the summation-by-parts identity with the stencil Laplacian exact.
pub fn grad_l2_norm(field: &Field) -> Result<f64> {
    field.check_finite("grad_l2_norm input")?;
    match field.grid().boundary() {
        BoundaryKind::Periodic => Ok(crate::spectral::spectral_grad_l2(field).sqrt()),
        BoundaryKind::Dirichlet => Ok(dirichlet_grad_sq(field).sqrt()),
    }
}

fn dirichlet_grad_sq(field: &Field) -> f64 {
    let grid = field.grid();
    let vals = field.values();
    let cell = grid.cell_volume();
    let dim = grid.dim();
    let mut total = 0.0f64;
    for axis in 0..dim {
        let n = grid.points()[axis];
        let h = grid.spacing(axis);
        let w = cell / (h * h);
        // edges (i, i+1) for i = -1 .. n-1 along this axis; out-of-range and
        // masked-off nodes contribute zero values
        match dim {
            1 => {
                let at = |i: isize| -> Complex64 {
                    if i < 0 || i as usize >= n {
                        Complex64::new(0.0, 0.0)
                    } else {
                        vals[i as usize]
                    }
                };
                for i in -1..(n as isize) {
                    let d = at(i + 1) - at(i);
                    total += d.norm_sqr() * w;
                }
            }
            _ => {
                let other = 1 - axis;
                let n_other = grid.points()[other];
                for j in 0..n_other {
                    let at = |i: isize| -> Complex64 {
                        if i < 0 || i as usize >= n {
                            Complex64::new(0.0, 0.0)
                        } else {
                            let mut idx = [0usize; 2];
                            idx[axis] = i as usize;
                            idx[other] = j;
                            vals[grid.flatten(idx)]
                        }
                    };
                    for i in -1..(n as isize) {
                        let d = at(i + 1) - at(i);
                        total += d.norm_sqr() * w;
                    }
                }
            }
        }
    }
    total
}

/// Volume of the ball of given radius: `omega_N R^N` with `omega_1 = 2`,
/// `omega_2 = pi`, `omega_3 = 4pi/3` (dim 3 for formula arithmetic only).
pub fn ball_volume(dim: usize, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius {radius} must be positive")));
    }
    let omega = match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => return Err(Error::InvalidParameter(format!("ball_volume: dim {dim} unsupported"))),
    };
    Ok(omega * radius.powi(dim as i32))
}
