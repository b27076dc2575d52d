//! Experiment orchestration: a declarative config wiring grid, nonlinearity,
//! stepper and bound parameters into one reproducible run, with conservation
//! verdicts and machine-readable CSV/JSON outputs.
//!
//! Runs are deterministic for a fixed config: reduction orders are fixed and
//! nothing depends on the wall clock (timestamps live in a sidecar written by
//! the CLI, not here).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    self, bounded_domain_floor, light_cone_speed, light_cone_speed_from_energy, verify_decay_bound,
    BoundParams, BoundReport, ConeSpeed, FloorCheck, LpExp,
};
use crate::error::{Error, Result};
use crate::grid::{self, BoundaryKind, Field, Grid, RealField};
use crate::nonlin::{HartreeKernel, NonlinearitySpec};
use crate::prop::{self, evolve, Scheme, StepperConfig, TrajectoryRecord};

/// Tail-mass fraction above which a periodic run stops imitating the whole
/// space and is declared numerically invalid.
pub const TAIL_MASS_LIMIT: f64 = 1e-6;

/// Mass-drift gates per scheme (relative) and the free-energy drift gate.
pub const MASS_DRIFT_SPLIT: f64 = 1e-10;
pub const MASS_DRIFT_MIDPOINT: f64 = 1e-8;
pub const ENERGY_DRIFT_FREE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Obstacle {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DomainConfig {
    pub dim: usize,
    /// Per-axis interval `[a, b]`.
    pub extent: Vec<(f64, f64)>,
    pub points: Vec<usize>,
    pub boundary: BoundaryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacle: Option<Obstacle>,
}

/// Initial-data descriptor. `kind` selects the family; exactly the keys that
/// family needs may be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct InitialConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PotentialBump {
    pub amplitude: f64,
    pub width: f64,
}

/// Nonlinearity descriptor mirroring the catalog.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct NonlinearityConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Gaussian bump potential `A exp(-|x|^2 / (2 w^2))` for kind = potential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump: Option<PotentialBump>,
    /// Path to a sampled real field file (potential or kernel).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum M0Source {
    #[default]
    SupGrad,
    Energy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BoundsConfig {
    pub eps: f64,
    pub center: Vec<f64>,
    pub r_list: Vec<LpExp>,
    pub t_window: (f64, f64),
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub m0_source: M0Source,
}

fn default_delta() -> f64 {
    bounds::DEFAULT_DELTA
}

impl BoundsConfig {
    pub fn to_params(&self) -> BoundParams {
        BoundParams {
            eps: self.eps,
            center: self.center.clone(),
            r_list: self.r_list.clone(),
            t_window: self.t_window,
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct OutputConfig {
    pub name: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_times: Option<Vec<f64>>,
    #[serde(default)]
    pub snapshots: bool,
}

fn default_out_dir() -> String {
    "runs".to_string()
}

/// One experiment, fully described. Field names map one-to-one onto the
/// sectioned config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub initial: InitialConfig,
    pub nonlinearity: NonlinearityConfig,
    pub stepper: StepperConfig,
    pub bounds: BoundsConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Stable 16-hex-digit hash of the resolved config.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn require<T: Copy>(opt: Option<T>, what: &str, kind: &str) -> Result<T> {
    opt.ok_or_else(|| cfg_err(format!("initial/nonlinearity kind '{kind}' needs '{what}'")))
}

fn forbid<T>(opt: &Option<T>, what: &str, kind: &str) -> Result<()> {
    if opt.is_some() {
        Err(cfg_err(format!("key '{what}' does not belong to kind '{kind}'")))
    } else {
        Ok(())
    }
}

pub fn build_grid(cfg: &DomainConfig) -> Result<Arc<Grid>> {
    if cfg.extent.len() != cfg.dim || cfg.points.len() != cfg.dim {
        return Err(cfg_err("domain extent/points must have one entry per axis"));
    }
    match cfg.boundary {
        BoundaryKind::Periodic => {
            if cfg.obstacle.is_some() {
                return Err(cfg_err("obstacles need a dirichlet domain"));
            }
            Grid::periodic(&cfg.extent, &cfg.points)
        }
        BoundaryKind::Dirichlet => match &cfg.obstacle {
            None => Grid::dirichlet(&cfg.extent, &cfg.points),
            Some(obs) => {
                if obs.center.len() != cfg.dim || !(obs.radius > 0.0) {
                    return Err(cfg_err("obstacle needs a center per axis and a positive radius"));
                }
                let c = obs.center.clone();
                let r2 = obs.radius * obs.radius;
                Grid::dirichlet_with_obstacle(&cfg.extent, &cfg.points, move |p| {
                    p.iter().zip(&c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() < r2
                })
            }
        },
    }
}

pub fn build_initial(cfg: &InitialConfig, grid: &Arc<Grid>) -> Result<Field> {
    let dim = grid.dim();
    let field = match cfg.kind.as_str() {
        "gaussian" => {
            forbid(&cfg.mode, "mode", "gaussian")?;
            forbid(&cfg.amplitude, "amplitude", "gaussian")?;
            forbid(&cfg.path, "path", "gaussian")?;
            let width = require(cfg.width, "width", "gaussian")?;
            if !(width > 0.0) {
                return Err(cfg_err("gaussian width must be positive"));
            }
            let center = cfg.center.clone().unwrap_or_else(|| vec![0.0; dim]);
            if center.len() != dim || !grid.contains_point(&center) {
                return Err(cfg_err("gaussian center outside the box"));
            }
            Field::from_fn(grid.clone(), 0.0, move |x| {
                let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
            })?
        }
        "eigenfunction" => {
            forbid(&cfg.width, "width", "eigenfunction")?;
            forbid(&cfg.amplitude, "amplitude", "eigenfunction")?;
            forbid(&cfg.path, "path", "eigenfunction")?;
            forbid(&cfg.center, "center", "eigenfunction")?;
            if grid.boundary() != BoundaryKind::Dirichlet {
                return Err(cfg_err("eigenfunction initial data needs a dirichlet box"));
            }
            let mode = cfg.mode.clone().ok_or_else(|| cfg_err("eigenfunction needs 'mode'"))?;
            if mode.len() != dim || mode.contains(&0) {
                return Err(cfg_err("eigenfunction mode needs one positive entry per axis"));
            }
            let extents = grid.extents().to_vec();
            Field::from_fn(grid.clone(), 0.0, move |x| {
                let mut v = 1.0;
                for a in 0..x.len() {
                    let (lo, hi) = extents[a];
                    v *= (mode[a] as f64 * std::f64::consts::PI * (x[a] - lo) / (hi - lo)).sin();
                }
                Complex64::new(v, 0.0)
            })?
        }
        "sech-soliton" => {
            forbid(&cfg.width, "width", "sech-soliton")?;
            forbid(&cfg.mode, "mode", "sech-soliton")?;
            forbid(&cfg.path, "path", "sech-soliton")?;
            if dim != 1 {
                return Err(cfg_err("the sech soliton is one-dimensional"));
            }
            let a = require(cfg.amplitude, "amplitude", "sech-soliton")?;
            if !(a > 0.0) {
                return Err(cfg_err("soliton amplitude must be positive"));
            }
            let center = cfg.center.clone().unwrap_or_else(|| vec![0.0]);
            if center.len() != 1 || !grid.contains_point(&center) {
                return Err(cfg_err("soliton center outside the box"));
            }
            let c = center[0];
            Field::from_fn(grid.clone(), 0.0, move |x| {
                Complex64::new(a / ((a * (x[0] - c)) / std::f64::consts::SQRT_2).cosh(), 0.0)
            })?
        }
        "from-file" => {
            forbid(&cfg.width, "width", "from-file")?;
            forbid(&cfg.mode, "mode", "from-file")?;
            forbid(&cfg.amplitude, "amplitude", "from-file")?;
            forbid(&cfg.center, "center", "from-file")?;
            let path = cfg.path.clone().ok_or_else(|| cfg_err("from-file needs 'path'"))?;
            crate::io::read_complex_field(Path::new(&path), grid)?
        }
        other => return Err(cfg_err(format!("unknown initial-data kind '{other}'"))),
    };
    if grid::l2_norm(&field) == 0.0 {
        return Err(cfg_err("initial data must be nonzero"));
    }
    Ok(field)
}

pub fn build_nonlinearity(cfg: &NonlinearityConfig, grid: &Arc<Grid>) -> Result<NonlinearitySpec> {
    match cfg.kind.as_str() {
        "zero" => {
            forbid(&cfg.lambda, "lambda", "zero")?;
            forbid(&cfg.alpha, "alpha", "zero")?;
            forbid(&cfg.bump, "bump", "zero")?;
            forbid(&cfg.file, "file", "zero")?;
            forbid(&cfg.mu, "mu", "zero")?;
            forbid(&cfg.gamma, "gamma", "zero")?;
            Ok(NonlinearitySpec::Zero)
        }
        kind @ ("power" | "saturated") => {
            forbid(&cfg.bump, "bump", kind)?;
            forbid(&cfg.file, "file", kind)?;
            forbid(&cfg.mu, "mu", kind)?;
            forbid(&cfg.gamma, "gamma", kind)?;
            let lambda = require(cfg.lambda, "lambda", kind)?;
            let alpha = require(cfg.alpha, "alpha", kind)?;
            let spec = if kind == "power" {
                NonlinearitySpec::Power { lambda, alpha }
            } else {
                NonlinearitySpec::Saturated { lambda, alpha }
            };
            spec.validate(grid)?;
            Ok(spec)
        }
        "potential" => {
            forbid(&cfg.lambda, "lambda", "potential")?;
            forbid(&cfg.alpha, "alpha", "potential")?;
            forbid(&cfg.mu, "mu", "potential")?;
            forbid(&cfg.gamma, "gamma", "potential")?;
            let v = match (&cfg.bump, &cfg.file) {
                (Some(bump), None) => {
                    if !(bump.width > 0.0) {
                        return Err(cfg_err("potential bump width must be positive"));
                    }
                    let (a, w) = (bump.amplitude, bump.width);
                    RealField::from_fn(grid.clone(), move |x| {
                        let r2: f64 = x.iter().map(|v| v * v).sum();
                        a * (-r2 / (2.0 * w * w)).exp()
                    })?
                }
                (None, Some(path)) => crate::io::read_real_field(Path::new(path), grid)?,
                _ => return Err(cfg_err("potential needs exactly one of 'bump' or 'file'")),
            };
            Ok(NonlinearitySpec::Potential(v))
        }
        "hartree" => {
            forbid(&cfg.lambda, "lambda", "hartree")?;
            forbid(&cfg.alpha, "alpha", "hartree")?;
            forbid(&cfg.bump, "bump", "hartree")?;
            let kernel = match (&cfg.file, cfg.mu, cfg.gamma) {
                (None, Some(mu), Some(gamma)) => HartreeKernel::power_law(grid, mu, gamma)?,
                (Some(path), None, None) => {
                    HartreeKernel::sampled(crate::io::read_real_field(Path::new(path), grid)?)?
                }
                _ => return Err(cfg_err("hartree needs 'mu' and 'gamma', or 'file'")),
            };
            Ok(NonlinearitySpec::Hartree(kernel))
        }
        other => Err(cfg_err(format!("unknown nonlinearity kind '{other}'"))),
    }
}

/// Resolve the sample-time list: either explicit times (0 prepended if
/// missing) or a uniform cadence covering the verification window.
pub fn build_sample_times(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let horizon = cfg.bounds.t_window.1;
    match (&cfg.output.sample_dt, &cfg.output.sample_times) {
        (Some(_), Some(_)) | (None, None) => {
            Err(cfg_err("output needs exactly one of 'sample-dt' or 'sample-times'"))
        }
        (Some(sdt), None) => {
            let sdt = *sdt;
            if !(sdt > 0.0) {
                return Err(cfg_err("sample-dt must be positive"));
            }
            let k = (horizon / sdt).round();
            if k < 1.0 || (horizon - k * sdt).abs() > 1e-9 * horizon {
                return Err(cfg_err("sample-dt must divide the window end"));
            }
            Ok((0..=k as usize).map(|i| i as f64 * sdt).collect())
        }
        (None, Some(times)) => {
            let mut ts = times.clone();
            if ts.first() != Some(&0.0) {
                ts.insert(0, 0.0);
            }
            if ts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(cfg_err("sample-times must be strictly increasing"));
            }
            Ok(ts)
        }
    }
}

fn energy_source_valid(spec: &NonlinearitySpec) -> Result<()> {
    let ok = match spec {
        NonlinearitySpec::Zero => true,
        NonlinearitySpec::Power { lambda, .. } => *lambda <= 0.0,
        NonlinearitySpec::Potential(v) => v.values().iter().all(|&x| x >= 0.0),
        NonlinearitySpec::Hartree(k) => match k.form() {
            crate::nonlin::HartreeKernelForm::PowerLaw { mu, .. } => *mu > 0.0,
            crate::nonlin::HartreeKernelForm::Sampled => {
                k.samples().values().iter().all(|&x| x >= 0.0)
            }
        },
        NonlinearitySpec::Saturated { .. } => false,
    };
    if ok {
        Ok(())
    } else {
        Err(cfg_err(
            "the energy form of the cone speed needs a nonnegative interaction term \
             (repulsive power, V >= 0, or W >= 0)",
        ))
    }
}

/// Sample-time gauge monitor; aborts when the defect leaves roundoff scale.
pub fn monitor_gauge(spec: &NonlinearitySpec, field: &Field) -> Result<f64> {
    let defect = spec.gauge_defect(field)?;
    if defect > prop::GAUGE_ABORT_LIMIT {
        return Err(Error::GaugeViolation { defect, limit: prop::GAUGE_ABORT_LIMIT });
    }
    Ok(defect)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConservationCheck {
    pub name: String,
    pub observed: f64,
    /// Gate applied to `observed`; informational entries carry none.
    pub tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FloorRow {
    pub r: LpExp,
    pub min_margin: f64,
    /// Absolute slack allowed on the margin, `1e-8 * mass0`.
    pub tolerance: f64,
    pub pass: bool,
    pub series: Vec<FloorCheck>,
}

/// Self-contained result of one run: resolved config, diagnostic series,
/// bound verdicts, conservation verdicts and provenance.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub version: String,
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub grad_l2: Vec<f64>,
    pub tail_mass: Vec<f64>,
    pub gauge_defect: Vec<f64>,
    pub bound: BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floors: Option<Vec<FloorRow>>,
    pub conservation: Vec<ConservationCheck>,
    pub conservation_ok: bool,
    pub passed: bool,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub trajectory: TrajectoryRecord,
}

fn cone_speed_for(
    cfg: &ExperimentConfig,
    spec: &NonlinearitySpec,
    traj: &TrajectoryRecord,
    eps: f64,
) -> Result<ConeSpeed> {
    let mass0 = traj.mass[0];
    match cfg.bounds.m0_source {
        M0Source::SupGrad => light_cone_speed(mass0, traj.sup_grad(), eps),
        M0Source::Energy => {
            energy_source_valid(spec)?;
            let e0 = traj.energy[0];
            if e0 < 0.0 {
                return Err(cfg_err(format!("initial energy {e0} negative; sqrt(2E) bound invalid")));
            }
            light_cone_speed_from_energy(mass0, e0, eps)
        }
    }
}

fn floors_for(
    traj: &TrajectoryRecord,
    r_list: &[LpExp],
    mass0: f64,
    grid: &Arc<Grid>,
) -> Result<Option<Vec<FloorRow>>> {
    if grid.boundary() != BoundaryKind::Dirichlet {
        return Ok(None);
    }
    let fields = traj.fields.as_ref().expect("runs retain fields");
    let mut rows = Vec::with_capacity(r_list.len());
    let tolerance = bounds::FLOOR_TOL_FACTOR * mass0;
    for r in r_list {
        let mut series = Vec::with_capacity(fields.len());
        let mut min_margin = f64::INFINITY;
        let mut pass = true;
        for f in fields {
            let check = bounded_domain_floor(f, r.0, mass0)?;
            min_margin = min_margin.min(check.margin);
            pass &= check.pass;
            series.push(check);
        }
        rows.push(FloorRow { r: *r, min_margin, tolerance, pass, series });
    }
    Ok(Some(rows))
}

fn conservation_checks(
    traj: &TrajectoryRecord,
    scheme: Scheme,
    spec: &NonlinearitySpec,
    periodic: bool,
) -> Vec<ConservationCheck> {
    let mass_tol = match scheme {
        Scheme::ImplicitMidpoint => MASS_DRIFT_MIDPOINT,
        _ => MASS_DRIFT_SPLIT,
    };
    let energy_tol = matches!(spec, NonlinearitySpec::Zero).then_some(ENERGY_DRIFT_FREE);
    let tail_tol = periodic.then_some(TAIL_MASS_LIMIT);
    let mut checks = vec![
        ConservationCheck {
            name: "mass-drift".into(),
            observed: traj.max_mass_drift(),
            tolerance: Some(mass_tol),
            pass: traj.max_mass_drift() <= mass_tol,
        },
        ConservationCheck {
            name: "energy-drift".into(),
            observed: traj.max_energy_drift(),
            tolerance: energy_tol,
            pass: energy_tol.is_none_or(|t| traj.max_energy_drift() <= t),
        },
        ConservationCheck {
            name: "gauge-defect".into(),
            observed: traj.max_gauge_defect(),
            tolerance: Some(prop::GAUGE_ABORT_LIMIT),
            pass: traj.max_gauge_defect() <= prop::GAUGE_ABORT_LIMIT,
        },
    ];
    checks.push(ConservationCheck {
        name: "tail-mass".into(),
        observed: traj.max_tail_mass(),
        tolerance: tail_tol,
        pass: tail_tol.is_none_or(|t| traj.max_tail_mass() <= t),
    });
    checks
}

fn assemble_report(
    cfg: &ExperimentConfig,
    traj: &TrajectoryRecord,
    bound: BoundReport,
    floors: Option<Vec<FloorRow>>,
    spec: &NonlinearitySpec,
    periodic: bool,
) -> RunReport {
    let conservation = conservation_checks(traj, cfg.stepper.scheme, spec, periodic);
    let conservation_ok = conservation.iter().all(|c| c.pass);
    let floors_ok = floors.as_ref().is_none_or(|rows| rows.iter().all(|r| r.pass));
    let passed = bound.passed && floors_ok && conservation_ok;
    RunReport {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        times: traj.times.clone(),
        mass: traj.mass.clone(),
        energy: traj.energy.clone(),
        grad_l2: traj.grad_l2.clone(),
        tail_mass: traj.tail_mass.clone(),
        gauge_defect: traj.gauge_defect.clone(),
        bound,
        floors,
        conservation,
        conservation_ok,
        passed,
    }
}

fn run_trajectory(
    cfg: &ExperimentConfig,
) -> Result<(Arc<Grid>, NonlinearitySpec, TrajectoryRecord)> {
    let grid = build_grid(&cfg.domain)?;
    let u0 = build_initial(&cfg.initial, &grid)?;
    let spec = build_nonlinearity(&cfg.nonlinearity, &grid)?;
    if !(cfg.stepper.dt > 0.0) {
        return Err(cfg_err("the harness runs forward in time; dt must be positive"));
    }
    cfg.stepper.validate(&grid, &spec)?;
    let mass0 = grid::l2_norm(&u0);
    cfg.bounds.to_params().validate(mass0)?;
    if cfg.bounds.center.len() != grid.dim() || !grid.contains_point(&cfg.bounds.center) {
        return Err(cfg_err("bounds center outside the box"));
    }
    let sample_times = build_sample_times(cfg)?;
    if cfg.bounds.t_window.1 > sample_times[sample_times.len() - 1] + 1e-12 {
        return Err(cfg_err("verification window extends past the last sample"));
    }
    let traj = evolve(&u0, &cfg.stepper, &spec, &sample_times, true)?;
    if grid.boundary() == BoundaryKind::Periodic {
        let tail = traj.max_tail_mass();
        if tail > TAIL_MASS_LIMIT {
            return Err(Error::TailMassBreach { fraction: tail, limit: TAIL_MASS_LIMIT });
        }
    }
    Ok((grid, spec, traj))
}

/// Execute one experiment end to end: evolve, verify the decay bound, gather
/// conservation verdicts. Deterministic for a fixed config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let (grid, spec, traj) = run_trajectory(cfg)?;
    let speed = cone_speed_for(cfg, &spec, &traj, cfg.bounds.eps)?;
    let bound = verify_decay_bound(&traj, &cfg.bounds.to_params(), &speed)?;
    let floors = floors_for(&traj, &cfg.bounds.r_list, traj.mass[0], &grid)?;
    let periodic = grid.boundary() == BoundaryKind::Periodic;
    let report = assemble_report(cfg, &traj, bound, floors, &spec, periodic);
    Ok(RunOutcome { report, trajectory: traj })
}

/// Run one trajectory and verify the bound for every `eps` in the list,
/// sharing the computed fields across the sweep (the bound varies `eps` on a
/// fixed solution). `jobs` caps the verification parallelism; results keep
/// the input order either way.
pub fn sweep(cfg: &ExperimentConfig, eps_values: &[f64], jobs: usize) -> Result<Vec<RunReport>> {
    if eps_values.is_empty() {
        return Err(cfg_err("eps sweep needs at least one value"));
    }
    let (grid, spec, traj) = run_trajectory(cfg)?;
    let mass0 = traj.mass[0];
    for &eps in eps_values {
        if !(eps > 0.0 && eps < mass0) {
            return Err(cfg_err(format!("sweep eps {eps} outside (0, mass = {mass0})")));
        }
    }
    let periodic = grid.boundary() == BoundaryKind::Periodic;
    let floors = floors_for(&traj, &cfg.bounds.r_list, mass0, &grid)?;

    let verify_one = |eps: f64| -> Result<RunReport> {
        let mut sub = cfg.clone();
        sub.bounds.eps = eps;
        let speed = cone_speed_for(&sub, &spec, &traj, eps)?;
        let bound = verify_decay_bound(&traj, &sub.bounds.to_params(), &speed)?;
        Ok(assemble_report(&sub, &traj, bound, floors.clone(), &spec, periodic))
    };

    let jobs = jobs.max(1).min(eps_values.len());
    if jobs == 1 {
        return eps_values.iter().map(|&eps| verify_one(eps)).collect();
    }
    let mut slots: Vec<Option<Result<RunReport>>> = (0..eps_values.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (chunk_idx, chunk) in slots.chunks_mut(eps_values.len().div_ceil(jobs)).enumerate() {
            let verify_one = &verify_one;
            let stride = eps_values.len().div_ceil(jobs);
            let eps_chunk = &eps_values[chunk_idx * stride..];
            scope.spawn(move || {
                for (slot, &eps) in chunk.iter_mut().zip(eps_chunk) {
                    *slot = Some(verify_one(eps));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every sweep slot is filled")).collect()
}

fn fmt_f64(v: f64) -> String {
    if !v.is_finite() {
        format!("{v:?}")
    } else if v == 0.0 || (v.abs() >= 1e-4 && v.abs() < 1e6) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Render the per-sample series as the CSV contract: fixed diagnostic
/// columns, then `q_r_<r>`, `rhs_<r>`, `margin_<r>` per exponent, then the
/// tent residual.
pub fn render_csv(report: &RunReport) -> String {
    let mut header = vec![
        "t".to_string(),
        "mass".to_string(),
        "energy".to_string(),
        "grad_l2".to_string(),
        "tail_mass".to_string(),
        "gauge_defect".to_string(),
    ];
    for check in &report.bound.checks {
        let label = check.r.label();
        header.push(format!("q_r_{label}"));
        header.push(format!("rhs_{label}"));
        header.push(format!("margin_{label}"));
    }
    header.push("residual_tent".to_string());
    let mut out = header.join(",");
    out.push('\n');
    for (i, &t) in report.times.iter().enumerate() {
        let mut row = vec![
            fmt_f64(t),
            fmt_f64(report.mass[i]),
            fmt_f64(report.energy[i]),
            fmt_f64(report.grad_l2[i]),
            fmt_f64(report.tail_mass[i]),
            fmt_f64(report.gauge_defect[i]),
        ];
        for check in &report.bound.checks {
            let p = &check.series[i];
            row.push(fmt_f64(p.value));
            row.push(fmt_f64(p.rhs));
            row.push(fmt_f64(p.margin));
        }
        row.push(fmt_f64(report.bound.tent_residuals[i].residual));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Write `<out_dir>/<name>/<hash>.{csv,json}` for one report; returns the
/// two file paths. Byte-identical across reruns of the same config.
pub fn write_report(report: &RunReport, out_dir: Option<&Path>) -> Result<(PathBuf, PathBuf)> {
    let base = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&report.config.output.out_dir));
    let dir = base.join(&report.config.output.name);
    std::fs::create_dir_all(&dir)?;
    let csv_path = dir.join(format!("{}.csv", report.config_hash));
    let json_path = dir.join(format!("{}.json", report.config_hash));
    std::fs::write(&csv_path, render_csv(report))?;
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    std::fs::write(&json_path, json)?;
    Ok((csv_path, json_path))
}

/// [`write_report`] plus field snapshots when the config retains them.
pub fn write_outputs(
    outcome: &RunOutcome,
    out_dir: Option<&Path>,
) -> Result<(PathBuf, PathBuf)> {
    let report = &outcome.report;
    let paths = write_report(report, out_dir)?;
    if report.config.output.snapshots {
        let dir = paths.0.parent().expect("report paths have a parent").to_path_buf();
        let snap_dir = dir.join(&report.config_hash);
        std::fs::create_dir_all(&snap_dir)?;
        if let Some(fields) = &outcome.trajectory.fields {
            for (i, f) in fields.iter().enumerate() {
                crate::io::write_complex_field(&snap_dir.join(format!("snapshot_{i:04}.field")), f)?;
            }
        }
    }
    Ok(paths)
}

/// Classify an error for the CLI exit contract: configuration problems vs
/// numerical failures.
pub fn is_config_error(err: &Error) -> bool {
    matches!(
        err,
        Error::InvalidGrid(_)
            | Error::InvalidRegion(_)
            | Error::InvalidParameter(_)
            | Error::GridMismatch
            | Error::UnsupportedBoundary { .. }
            | Error::Io(_)
            | Error::BadFieldFile(_)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::Verdict;

    pub(crate) fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            domain: DomainConfig {
                dim: 1,
                extent: vec![(-60.0, 60.0)],
                points: vec![1024],
                boundary: BoundaryKind::Periodic,
                obstacle: None,
            },
            initial: InitialConfig {
                kind: "gaussian".into(),
                width: Some(1.0),
                center: None,
                mode: None,
                amplitude: None,
                path: None,
            },
            nonlinearity: NonlinearityConfig {
                kind: "zero".into(),
                lambda: None,
                alpha: None,
                bump: None,
                file: None,
                mu: None,
                gamma: None,
            },
            stepper: StepperConfig::new(Scheme::SplitStepFourier, 0.125),
            bounds: BoundsConfig {
                eps: 0.9413962637767148,
                center: vec![0.0],
                r_list: vec![LpExp(2.0), LpExp(4.0), LpExp(f64::INFINITY)],
                t_window: (0.5, 2.0),
                delta: bounds::DEFAULT_DELTA,
                m0_source: M0Source::SupGrad,
            },
            output: OutputConfig {
                name: "quick".into(),
                out_dir: "runs".into(),
                sample_dt: Some(0.5),
                sample_times: None,
                snapshots: false,
            },
        }
    }

    #[test]
    fn free_gaussian_quick_run_passes() {
        let cfg = quick_config();
        let outcome = run_experiment(&cfg).unwrap();
        assert!(outcome.report.passed, "report: {:?}", outcome.report.conservation);
        assert!(outcome.report.bound.passed);
        assert!(!outcome.report.bound.geometry_skipped);
        assert!((outcome.report.bound.cone_speed - 2.8284271247461903).abs() < 1e-6);
    }

    #[test]
    fn eps_at_least_mass_rejected() {
        let mut cfg = quick_config();
        cfg.bounds.eps = 5.0;
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn gauge_monitor_passes_catalog_members() {
        let cfg = quick_config();
        let grid = build_grid(&cfg.domain).unwrap();
        let u = build_initial(&cfg.initial, &grid).unwrap();
        let spec = crate::nonlin::NonlinearitySpec::Power { lambda: -1.0, alpha: 2.0 };
        let defect = monitor_gauge(&spec, &u).unwrap();
        assert!(defect <= crate::prop::GAUGE_ABORT_LIMIT);
    }

    #[test]
    fn sampled_potential_and_initial_data_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_config();
        let grid = build_grid(&cfg.domain).unwrap();

        // write a nonnegative bump potential and a gaussian initial state
        let v = RealField::from_fn(grid.clone(), |x| (-x[0] * x[0] / 2.0).exp()).unwrap();
        let v_path = dir.path().join("bump.field");
        crate::io::write_real_field(&v_path, &v).unwrap();
        let u0 = build_initial(&cfg.initial, &grid).unwrap();
        let u_path = dir.path().join("u0.field");
        crate::io::write_complex_field(&u_path, &u0).unwrap();

        cfg.initial = InitialConfig {
            kind: "from-file".into(),
            width: None,
            center: None,
            mode: None,
            amplitude: None,
            path: Some(u_path.to_str().unwrap().into()),
        };
        cfg.nonlinearity = NonlinearityConfig {
            kind: "potential".into(),
            lambda: None,
            alpha: None,
            bump: None,
            file: Some(v_path.to_str().unwrap().into()),
            mu: None,
            gamma: None,
        };
        cfg.stepper.dt = 0.025;
        cfg.bounds.eps = 0.9;
        let outcome = run_experiment(&cfg).unwrap();
        assert!(outcome.report.bound.check(2.0).unwrap().verdict == Verdict::Pass);

        // a snapshot-enabled rerun writes one field file per sample
        cfg.output.snapshots = true;
        let outcome = run_experiment(&cfg).unwrap();
        let out = dir.path().join("snap-out");
        write_outputs(&outcome, Some(&out)).unwrap();
        let snap_dir = out.join(&cfg.output.name).join(outcome.report.config_hash.clone());
        let count = std::fs::read_dir(&snap_dir).unwrap().count();
        assert_eq!(count, outcome.report.times.len());
        // snapshots reload on the same grid
        let back = crate::io::read_complex_field(&snap_dir.join("snapshot_0002.field"), &grid).unwrap();
        assert_eq!(back.time(), outcome.report.times[2]);
    }

    #[test]
    fn sweep_shares_trajectory_and_orders_speeds() {
        let cfg = quick_config();
        let reports = sweep(&cfg, &[0.4, 0.8, 1.2], 2).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports[0].bound.cone_speed < reports[1].bound.cone_speed);
        assert!(reports[1].bound.cone_speed < reports[2].bound.cone_speed);
        assert_eq!(reports[0].mass, reports[1].mass);
        assert_eq!(reports[0].energy, reports[2].energy);
        for r in &reports {
            assert!(r.bound.check(2.0).unwrap().verdict == Verdict::Pass);
        }
    }

    #[test]
    fn sweep_rejects_bad_eps() {
        let cfg = quick_config();
        assert!(sweep(&cfg, &[], 1).is_err());
        assert!(sweep(&cfg, &[0.5, 2.0], 1).is_err());
    }

    #[test]
    fn near_mass_eps_skips_on_geometry() {
        let mut cfg = quick_config();
        let mass = 1.3313353638003897;
        cfg.bounds.eps = mass * (1.0 - 1e-6);
        let outcome = run_experiment(&cfg).unwrap();
        assert!(outcome.report.bound.geometry_skipped);
        assert!(outcome.report.passed, "skips are not failures");
        for c in &outcome.report.bound.checks {
            assert_eq!(c.verdict, Verdict::SkippedGeometry);
        }
    }

    #[test]
    fn report_lists_every_requested_exponent_once() {
        let cfg = quick_config();
        let outcome = run_experiment(&cfg).unwrap();
        let rs: Vec<String> =
            outcome.report.bound.checks.iter().map(|c| c.r.label()).collect();
        assert_eq!(rs, vec!["2", "4", "inf"]);
        assert_eq!(outcome.report.conservation.len(), 4);
    }

    #[test]
    fn outputs_are_deterministic() {
        let cfg = quick_config();
        let dir = tempfile::tempdir().unwrap();
        let a = run_experiment(&cfg).unwrap();
        let (csv_a, json_a) = write_outputs(&a, Some(&dir.path().join("one"))).unwrap();
        let b = run_experiment(&cfg).unwrap();
        let (csv_b, json_b) = write_outputs(&b, Some(&dir.path().join("two"))).unwrap();
        assert_eq!(std::fs::read(csv_a).unwrap(), std::fs::read(csv_b).unwrap());
        assert_eq!(std::fs::read(json_a).unwrap(), std::fs::read(json_b).unwrap());
    }

    #[test]
    fn csv_contract_columns() {
        let cfg = quick_config();
        let outcome = run_experiment(&cfg).unwrap();
        let csv = render_csv(&outcome.report);
        let header = csv.lines().next().unwrap();
        assert_eq!(
            header,
            "t,mass,energy,grad_l2,tail_mass,gauge_defect,\
             q_r_2,rhs_2,margin_2,q_r_4,rhs_4,margin_4,q_r_inf,rhs_inf,margin_inf,residual_tent"
        );
        assert_eq!(csv.lines().count(), 1 + outcome.report.times.len());
    }

    #[test]
    fn unknown_initial_kind_rejected() {
        let g = build_grid(&quick_config().domain).unwrap();
        let mut init = quick_config().initial;
        init.kind = "vortex".into();
        assert!(build_initial(&init, &g).is_err());
        // keys from the wrong family are rejected too
        let mut init = quick_config().initial;
        init.amplitude = Some(1.0);
        assert!(build_initial(&init, &g).is_err());
    }

    #[test]
    fn eigenfunction_on_dirichlet_box() {
        let domain = DomainConfig {
            dim: 1,
            extent: vec![(0.0, std::f64::consts::PI)],
            points: vec![256],
            boundary: BoundaryKind::Dirichlet,
            obstacle: None,
        };
        let g = build_grid(&domain).unwrap();
        let init = InitialConfig {
            kind: "eigenfunction".into(),
            width: None,
            center: None,
            mode: Some(vec![1]),
            amplitude: None,
            path: None,
        };
        let u = build_initial(&init, &g).unwrap();
        assert!((grid::l2_norm(&u) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn saturated_cannot_use_energy_speed() {
        let mut cfg = quick_config();
        cfg.nonlinearity.kind = "saturated".into();
        cfg.nonlinearity.lambda = Some(1.0);
        cfg.nonlinearity.alpha = Some(1.0);
        cfg.bounds.m0_source = M0Source::Energy;
        cfg.stepper.dt = 0.025;
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn energy_speed_on_repulsive_power_runs() {
        let mut cfg = quick_config();
        cfg.nonlinearity.kind = "power".into();
        cfg.nonlinearity.lambda = Some(-1.0);
        cfg.nonlinearity.alpha = Some(2.0);
        cfg.bounds.m0_source = M0Source::Energy;
        cfg.bounds.eps = 0.9;
        cfg.stepper.dt = 0.025;
        let outcome = run_experiment(&cfg).unwrap();
        // sqrt(2E) dominates the gradient surrogate, so the cone is wider
        assert!(outcome.report.bound.cone_speed > 0.0);
        assert!(outcome.report.bound.passed);
    }
}
