//! Command implementations behind the `lightcone` binary: config loading,
//! the run/sweep/oracle commands, and the exit-code contract.
//!
//! Exit codes: 0 all checks pass, 2 a bound check failed (or a geometry skip
//! under `--strict-geometry`), 3 numerical failure (NaN, fixed-point
//! divergence, tail-mass breach, conservation gate), 4 configuration error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lightcone_core::harness::{
    self, run_experiment, sweep, write_outputs, write_report, ExperimentConfig, RunReport,
};
use lightcone_core::oracle;
use lightcone_core::prop::gaussian_exact;
use lightcone_core::{Error as CoreError, Grid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BOUND_FAIL: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub strict_geometry: bool,
    pub jobs: usize,
}

#[derive(Debug)]
pub struct CliFailure {
    pub code: i32,
    pub message: String,
}

impl CliFailure {
    fn config(message: impl Into<String>) -> Self {
        CliFailure { code: EXIT_CONFIG, message: message.into() }
    }
}

pub type CliResult<T> = Result<T, CliFailure>;

fn classify(err: &CoreError) -> i32 {
    if harness::is_config_error(err) {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliFailure::config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliFailure::config(format!("bad config {}: {e}", path.display())))
}

/// Serialize the resolved config (defaults expanded) back to the sectioned
/// text form; parsing this again yields the same config.
pub fn resolved_config_text(cfg: &ExperimentConfig) -> String {
    toml::to_string_pretty(cfg).expect("resolved config serializes")
}

fn write_failure_marker(cfg: &ExperimentConfig, out_dir: Option<&Path>, message: &str) {
    let base = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.output.out_dir));
    let dir = base.join(&cfg.output.name);
    if std::fs::create_dir_all(&dir).is_ok() {
        let body = serde_json::json!({
            "failed": true,
            "error": message,
            "config-hash": cfg.hash(),
        });
        let _ = std::fs::write(
            dir.join(format!("{}.failed.json", cfg.hash())),
            format!("{body:#}\n"),
        );
    }
}

fn write_sidecar(report: &RunReport, out_dir: Option<&Path>, wall: f64) {
    let base = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&report.config.output.out_dir));
    let dir = base.join(&report.config.output.name);
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let body = serde_json::json!({
        "wall-time-s": wall,
        "unix-timestamp": stamp,
        "version": report.version,
    });
    let _ = std::fs::write(
        dir.join(format!("{}.meta.json", report.config_hash)),
        format!("{body:#}\n"),
    );
}

fn verdict_code(report: &RunReport, strict_geometry: bool) -> (i32, String) {
    if !report.conservation_ok {
        let bad: Vec<String> = report
            .conservation
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} = {:.3e}", c.name, c.observed))
            .collect();
        return (EXIT_NUMERICAL, format!("conservation gate failed: {}", bad.join(", ")));
    }
    if report.bound.geometry_skipped && strict_geometry {
        return (
            EXIT_BOUND_FAIL,
            "geometry: light cone leaves the box and --strict-geometry is set".into(),
        );
    }
    if !report.passed {
        return (EXIT_BOUND_FAIL, "a bound check failed".into());
    }
    (EXIT_OK, "all checks pass".into())
}

fn print_summary(report: &RunReport) {
    println!(
        "run {} [{}]: M = {:.6}, eps = {:.6}, mass = {:.6}",
        report.config.output.name,
        report.config_hash,
        report.bound.cone_speed,
        report.bound.eps,
        report.bound.mass0,
    );
    for check in &report.bound.checks {
        println!(
            "  r = {:>3}: min Q_r = {:.6}, floor = {:.6}, verdict {:?}",
            check.r.label(),
            check.window_min,
            check.rhs,
            check.verdict
        );
    }
    println!("  tent residual verdict {:?}", report.bound.tent_verdict);
    if let Some(floors) = &report.floors {
        for row in floors {
            println!(
                "  bounded-domain floor r = {:>3}: min margin = {:.3e}, pass {}",
                row.r.label(),
                row.min_margin,
                row.pass
            );
        }
    }
    for c in &report.conservation {
        match c.tolerance {
            Some(tol) => println!("  {}: {:.3e} (tol {:.1e}) pass {}", c.name, c.observed, tol, c.pass),
            None => println!("  {}: {:.3e} (informational)", c.name, c.observed),
        }
    }
}

pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> i32 {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return f.code;
        }
    };
    let started = Instant::now();
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            write_failure_marker(&cfg, opts.out_dir.as_deref(), &e.to_string());
            return classify(&e);
        }
    };
    if let Err(e) = write_outputs(&outcome, opts.out_dir.as_deref()) {
        eprintln!("error: cannot write outputs: {e}");
        return EXIT_CONFIG;
    }
    write_sidecar(&outcome.report, opts.out_dir.as_deref(), started.elapsed().as_secs_f64());
    print_summary(&outcome.report);
    let (code, message) = verdict_code(&outcome.report, opts.strict_geometry);
    if code != EXIT_OK {
        eprintln!("error: {message}");
    } else {
        println!("{message}");
    }
    code
}

pub fn cmd_sweep(config_path: &Path, eps: &[f64], opts: &RunOptions) -> i32 {
    if eps.is_empty() {
        eprintln!("error: sweep needs at least one eps value");
        return EXIT_CONFIG;
    }
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return f.code;
        }
    };
    if opts.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_CONFIG;
    }
    let reports = match sweep(&cfg, eps, opts.jobs.max(1)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            write_failure_marker(&cfg, opts.out_dir.as_deref(), &e.to_string());
            return classify(&e);
        }
    };
    let mut worst = EXIT_OK;
    for report in &reports {
        if let Err(e) = write_report(report, opts.out_dir.as_deref()) {
            eprintln!("error: cannot write outputs: {e}");
            return EXIT_CONFIG;
        }
        print_summary(report);
        let (code, message) = verdict_code(report, opts.strict_geometry);
        if code != EXIT_OK {
            eprintln!("error: eps = {}: {message}", report.bound.eps);
        }
        worst = worst.max(code);
    }
    worst
}

#[derive(Debug, Clone, Default)]
pub struct OracleArgs {
    pub t: Option<f64>,
    pub k_inner: Option<f64>,
    pub k: Option<f64>,
    pub points: Option<usize>,
    pub half_width: Option<f64>,
    pub mu: Option<f64>,
    pub gamma: Option<f64>,
    pub dim: Option<usize>,
}

fn print_value(name: &str, v: f64) {
    println!("{name} = {v:.14e}");
}

/// Standalone reference computations, printed at 15 significant digits.
pub fn cmd_oracle(kind: &str, args: &OracleArgs) -> i32 {
    match kind {
        "gaussian-integrals" => {
            let sqrt_pi = oracle::integrate(|x| (-x * x).exp(), -40.0, 40.0, 1e-13);
            let second = oracle::integrate(|x| x * x * (-x * x).exp(), -40.0, 40.0, 1e-13);
            print_value("int exp(-x^2) dx            (sqrt pi)  ", sqrt_pi);
            print_value("int x^2 exp(-x^2) dx        (sqrt pi)/2", second);
            print_value("l2 norm of exp(-x^2/2)      pi^(1/4)   ", sqrt_pi.sqrt());
            EXIT_OK
        }
        "strauss-rhs" => {
            let k_inner = args.k_inner.unwrap_or(0.0);
            let k = args.k.unwrap_or(2.0);
            if !(k_inner >= 0.0 && k > k_inner) {
                eprintln!("error: need 0 <= k-inner < k");
                return EXIT_CONFIG;
            }
            print_value(
                "windowed spectral mass of exp(-x^2/2)",
                oracle::gaussian_window_mass(k_inner / 2.0, k / 2.0),
            );
            EXIT_OK
        }
        "gaussian-evolution" => {
            let t = args.t.unwrap_or(0.0);
            let half = args.half_width.unwrap_or(40.0);
            let n = args.points.unwrap_or(4096);
            let grid = match Grid::periodic(&[(-half, half)], &[n]) {
                Ok(g) => g,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let u = match gaussian_exact(t, &grid) {
                Ok(u) => u,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let origin = (0..grid.len())
                .find(|&i| grid.position(i)[0] == 0.0)
                .expect("origin is a node on a symmetric box");
            print_value("t                ", t);
            print_value("l2 norm          ", lightcone_core::l2_norm(&u));
            print_value("re u(0)          ", u.values()[origin].re);
            print_value("im u(0)          ", u.values()[origin].im);
            print_value("max |u|          ", u.max_abs());
            EXIT_OK
        }
        "hartree-direct" => {
            let dim = args.dim.unwrap_or(1);
            let mu = args.mu.unwrap_or(1.0);
            let half = args.half_width.unwrap_or(20.0);
            let (grid, gamma_default) = match dim {
                1 => {
                    let n = args.points.unwrap_or(1024);
                    if n > 8192 {
                        eprintln!("error: direct 1D convolution capped at 8192 points");
                        return EXIT_CONFIG;
                    }
                    (Grid::periodic(&[(-half, half)], &[n]), 0.5)
                }
                2 => {
                    let n = args.points.unwrap_or(32);
                    if n > 64 {
                        eprintln!("error: direct 2D convolution capped at 64 points per axis");
                        return EXIT_CONFIG;
                    }
                    (Grid::periodic(&[(-half, half), (-half, half)], &[n, n]), 1.0)
                }
                _ => {
                    eprintln!("error: dim must be 1 or 2");
                    return EXIT_CONFIG;
                }
            };
            let grid = match grid {
                Ok(g) => g,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let gamma = args.gamma.unwrap_or(gamma_default);
            let kernel = match lightcone_core::HartreeKernel::power_law(&grid, mu, gamma) {
                Ok(k) => k,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let density = lightcone_core::RealField::from_fn(grid.clone(), |x| {
                (-x.iter().map(|v| v * v).sum::<f64>()).exp()
            })
            .expect("gaussian density is finite");
            let spectral = match kernel.convolve(&density) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_NUMERICAL;
                }
            };
            let direct = oracle::direct_convolve(&grid, kernel.samples().values(), density.values());
            let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let max_rel = spectral
                .values()
                .iter()
                .zip(&direct)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                / scale;
            print_value("direct (W * d)(0)        ", direct[0]);
            print_value("spectral (W * d)(0)      ", spectral.values()[0]);
            print_value("max relative discrepancy ", max_rel);
            EXIT_OK
        }
        other => {
            eprintln!("error: unknown oracle kind '{other}'");
            EXIT_CONFIG
        }
    }
}
