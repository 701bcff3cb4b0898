//! Command-line front end: convergence studies, single solves with a point
//! source, time-domain Maxwell runs, and spectrum analysis. Every command
//! writes machine-readable reports (JSON, schema 1) and plot-ready CSV data.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fdsa_core::basis::{gauss_legendre, BasisConfig};
use fdsa_core::fields::{
    divergence_max_2d, divergence_max_3d, error_norms_2d, error_norms_3d, project_rhs_2d,
    project_rhs_3d, GridSnapshot, SnapshotMeta,
};
use fdsa_core::maxwell::{Maxwell2d, Maxwell3d, MaxwellConfig2d, MaxwellConfig3d, TimeGrid};
use fdsa_core::problems;
use fdsa_core::solver2d::{CurlCurlConfig, ScalarField2, Solver2d};
use fdsa_core::solver3d::Solver3d;
use fdsa_core::spectra;

#[derive(Parser)]
#[command(
    name = "fdsa",
    version,
    about = "divergence-free spectral curl-curl solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study on a built-in manufactured problem.
    Convergence {
        /// Problem dimension (2 or 3); must match the example.
        #[arg(long, default_value_t = 2)]
        dim: u8,
        /// Built-in example id: `ex1` (2D) or `ex5` (3D).
        #[arg(long)]
        example: String,
        /// Polynomial orders, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        kappa: f64,
        /// Relative residual stopping threshold.
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        /// Disable the auxiliary-problem preconditioner (plain GMRES).
        #[arg(long, default_value_t = false)]
        no_precondition: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the indefinite Gaussian point-source problem and write a field
    /// snapshot.
    Pointsource {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = -10000.0, allow_negative_numbers = true)]
        kappa: f64,
        /// Gaussian width; must be positive.
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        /// Snapshot resolution per axis.
        #[arg(long, default_value_t = 201)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time-domain Maxwell run driven by a JSON config file.
    Maxwell {
        /// Problem dimension; overrides the config file.
        #[arg(long)]
        dim: Option<u8>,
        #[arg(long)]
        config: PathBuf,
        /// Polynomial order; overrides the config file.
        #[arg(long)]
        n: Option<usize>,
        /// Time step; overrides the config file.
        #[arg(long)]
        tau: Option<f64>,
        /// Final time; overrides the config file.
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dense spectrum analysis of the preconditioned operator at small N.
    Spectrum {
        #[arg(long, default_value_t = 2)]
        dim: u8,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        kappa: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct RunReport {
    schema: u32,
    command: String,
    n: usize,
    kappa: Option<f64>,
    eps: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    residual_history: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l2_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hcurl_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_div: Option<f64>,
    wall_time_s: f64,
    outputs: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaxwellFileConfig {
    #[serde(default)]
    schema: Option<u32>,
    dim: Option<u8>,
    n: Option<usize>,
    tau: Option<f64>,
    t_final: Option<f64>,
    #[serde(default = "default_one")]
    eps0: f64,
    #[serde(default = "default_one")]
    mu0: f64,
    /// Built-in medium: "vacuum" or "ring".
    medium: String,
    /// Current-source width.
    sigma: Option<f64>,
    /// Transition width of the ring permittivity profile.
    #[serde(default = "default_lambda")]
    lambda: f64,
    #[serde(default)]
    snapshot_times: Vec<f64>,
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
    #[serde(default = "default_grid")]
    snapshot_grid: usize,
}

fn default_one() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    0.05
}
fn default_eps() -> f64 {
    1e-12
}
fn default_max_iter() -> usize {
    500
}
fn default_grid() -> usize {
    101
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Convergence {
            dim,
            example,
            n,
            kappa,
            eps,
            max_iter,
            no_precondition,
            out,
        } => cmd_convergence(
            dim,
            &example,
            &n,
            kappa,
            eps,
            max_iter,
            no_precondition,
            &out,
        ),
        Command::Pointsource {
            n,
            kappa,
            sigma,
            eps,
            max_iter,
            grid,
            out,
        } => cmd_pointsource(n, kappa, sigma, eps, max_iter, grid, &out),
        Command::Maxwell {
            dim,
            config,
            n,
            tau,
            t_final,
            out,
        } => cmd_maxwell(dim, &config, n, tau, t_final, &out),
        Command::Spectrum { dim, n, kappa, out } => cmd_spectrum(dim, n, kappa, &out),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    std::fs::write(path, text).map_err(|e| format!("writing {}: {e}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_convergence(
    dim: u8,
    example: &str,
    n_list: &[usize],
    kappa: f64,
    eps: f64,
    max_iter: usize,
    no_precondition: bool,
    out: &Path,
) -> Result<(), String> {
    if n_list.is_empty() {
        return Err("usage: --n needs at least one polynomial order".into());
    }
    let expected_dim = match example {
        "ex1" => 2,
        "ex5" => 3,
        other => {
            return Err(format!(
                "usage: unknown example id `{other}` (try ex1 or ex5)"
            ))
        }
    };
    if dim != expected_dim {
        return Err(format!(
            "usage: example {example} is {expected_dim}D but --dim {dim} was given"
        ));
    }
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let csv_path = out.join("convergence.csv");
    let mut csv =
        std::io::BufWriter::new(std::fs::File::create(&csv_path).map_err(|e| e.to_string())?);
    writeln!(csv, "N,iters,l2,hcurl,time").map_err(|e| e.to_string())?;

    let mut reports = Vec::new();
    let mut all_converged = true;
    for &n in n_list {
        let cfg = BasisConfig::new(n).map_err(|e| e.to_string())?;
        let quad = gauss_legendre(2 * n).map_err(|e| e.to_string())?;
        let mut solve_cfg = CurlCurlConfig::new(kappa);
        solve_cfg.eps = eps;
        solve_cfg.max_iter = max_iter;
        solve_cfg.precondition = !no_precondition;

        let (iters, converged, history, l2, hcurl, max_div, wall) = if expected_dim == 2 {
            let solver = Solver2d::new(cfg).map_err(|e| e.to_string())?;
            let (source, exact) = problems::example1(kappa);
            let f = project_rhs_2d(&source, cfg, &quad).map_err(|e| e.to_string())?;
            let (u, report) = solver.solve(&f, &solve_cfg).map_err(|e| e.to_string())?;
            let norms = error_norms_2d(&u, cfg, &exact, &quad).map_err(|e| e.to_string())?;
            let div = divergence_max_2d(&u, cfg, 64).map_err(|e| e.to_string())?;
            (
                report.iterations,
                report.converged,
                report.residual_history,
                norms.l2,
                norms.hcurl,
                div,
                report.wall_time,
            )
        } else {
            let solver = Solver3d::new(cfg).map_err(|e| e.to_string())?;
            let (source, exact) = problems::example5(kappa);
            let f = project_rhs_3d(&source, cfg, &quad).map_err(|e| e.to_string())?;
            let (u, report) = solver.solve(&f, &solve_cfg).map_err(|e| e.to_string())?;
            let norms = error_norms_3d(&u, cfg, &exact, &quad).map_err(|e| e.to_string())?;
            let div = divergence_max_3d(&u, cfg, 16).map_err(|e| e.to_string())?;
            (
                report.iterations,
                report.converged,
                report.residual_history,
                norms.l2,
                norms.hcurl,
                div,
                report.wall_time,
            )
        };
        all_converged &= converged;
        writeln!(csv, "{n},{iters},{l2:.16e},{hcurl:.16e},{wall:.16e}")
            .map_err(|e| e.to_string())?;
        println!("N = {n}: {iters} iterations, L2 error {l2:.3e}, H(curl) error {hcurl:.3e}");
        reports.push(RunReport {
            schema: 1,
            command: format!("convergence --example {example}"),
            n,
            kappa: Some(kappa),
            eps: Some(eps),
            iterations: Some(iters),
            converged: Some(converged),
            residual_history: Some(history),
            l2_error: Some(l2),
            hcurl_error: Some(hcurl),
            max_div: Some(max_div),
            wall_time_s: wall,
            outputs: vec![csv_path.display().to_string()],
        });
    }
    csv.flush().map_err(|e| e.to_string())?;
    write_json(&out.join("reports.json"), &reports)?;
    if !all_converged {
        return Err("solver did not converge for at least one order".into());
    }
    Ok(())
}

fn cmd_pointsource(
    n: usize,
    kappa: f64,
    sigma: f64,
    eps: f64,
    max_iter: usize,
    grid: usize,
    out: &Path,
) -> Result<(), String> {
    if sigma <= 0.0 {
        return Err("usage: --sigma must be positive".into());
    }
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let cfg = BasisConfig::new(n).map_err(|e| e.to_string())?;
    let solver = Solver2d::new(cfg).map_err(|e| e.to_string())?;
    let quad = gauss_legendre(2 * n).map_err(|e| e.to_string())?;
    let source = problems::example3_source(sigma);
    let f = project_rhs_2d(&source, cfg, &quad).map_err(|e| e.to_string())?;
    let mut solve_cfg = CurlCurlConfig::new(kappa);
    solve_cfg.eps = eps;
    solve_cfg.max_iter = max_iter;
    let (u, report) = solver.solve(&f, &solve_cfg).map_err(|e| {
        // resonance errors carry the critical-kappa hint already
        e.to_string()
    })?;
    let div = divergence_max_2d(&u, cfg, 64).map_err(|e| e.to_string())?;
    let snap_path = out.join("pointsource.csv");
    let snap = GridSnapshot::from_2d(
        &u,
        cfg,
        grid,
        SnapshotMeta {
            n,
            kappa: Some(kappa),
            time: None,
        },
    )
    .map_err(|e| e.to_string())?;
    snap.write_csv(&snap_path).map_err(|e| e.to_string())?;
    println!(
        "N = {n}, kappa = {kappa}: {} iterations, converged = {}",
        report.iterations, report.converged
    );
    let report_json = RunReport {
        schema: 1,
        command: "pointsource".into(),
        n,
        kappa: Some(kappa),
        eps: Some(eps),
        iterations: Some(report.iterations),
        converged: Some(report.converged),
        residual_history: Some(report.residual_history.clone()),
        l2_error: None,
        hcurl_error: None,
        max_div: Some(div),
        wall_time_s: report.wall_time,
        outputs: vec![snap_path.display().to_string()],
    };
    write_json(&out.join("report.json"), &report_json)?;
    if !report.converged {
        return Err("solver did not converge".into());
    }
    Ok(())
}

fn cmd_maxwell(
    dim_flag: Option<u8>,
    config_path: &Path,
    n_flag: Option<usize>,
    tau_flag: Option<f64>,
    t_final_flag: Option<f64>,
    out: &Path,
) -> Result<(), String> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| format!("reading {}: {e}", config_path.display()))?;
    let file: MaxwellFileConfig =
        serde_json::from_str(&text).map_err(|e| format!("usage: malformed config: {e}"))?;
    if let Some(s) = file.schema {
        if s != 1 {
            return Err(format!("usage: unsupported config schema {s}"));
        }
    }
    // precedence: flags > config file > defaults
    let dim = dim_flag.or(file.dim).unwrap_or(2);
    let n = n_flag
        .or(file.n)
        .ok_or("usage: missing field `n` (or pass --n)")?;
    let tau = tau_flag
        .or(file.tau)
        .ok_or("usage: missing field `tau` (or pass --tau)")?;
    let t_final = t_final_flag
        .or(file.t_final)
        .ok_or("usage: missing field `t_final` (or pass --t-final)")?;
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;

    let time = TimeGrid { tau, t_final };
    let (snapshots, stats) = match (dim, file.medium.as_str()) {
        (2, medium @ ("vacuum" | "ring")) => {
            let sigma = file.sigma.unwrap_or(0.04);
            if sigma <= 0.0 {
                return Err("usage: field `sigma` must be positive".into());
            }
            let eps_r = if medium == "ring" {
                problems::ring_permittivity(file.lambda)
            } else {
                ScalarField2::constant(1.0)
            };
            let mx = Maxwell2d::new(MaxwellConfig2d {
                n,
                time,
                eps0: file.eps0,
                mu0: file.mu0,
                eps_r,
                current: problems::example4_current(sigma),
                solver_eps: file.eps,
                max_iter: file.max_iter,
                quad_size: None,
            })
            .map_err(|e| e.to_string())?;
            mx.run(&file.snapshot_times, file.snapshot_grid)
                .map_err(|e| e.to_string())?
        }
        (3, "vacuum") => {
            let sigma = file.sigma.unwrap_or(0.05);
            if sigma <= 0.0 {
                return Err("usage: field `sigma` must be positive".into());
            }
            let mx = Maxwell3d::new(MaxwellConfig3d {
                n,
                time,
                eps0: file.eps0,
                mu0: file.mu0,
                eps_r: 1.0,
                current: problems::example6_current(sigma),
                solver_eps: file.eps,
                max_iter: file.max_iter,
                quad_size: None,
            })
            .map_err(|e| e.to_string())?;
            mx.run(&file.snapshot_times, file.snapshot_grid)
                .map_err(|e| e.to_string())?
        }
        (3, "ring") => return Err("usage: field `medium`: ring is 2D only".into()),
        (d, m) if d == 2 || d == 3 => {
            return Err(format!("usage: field `medium`: unknown medium `{m}`"))
        }
        (d, _) => return Err(format!("usage: dim must be 2 or 3, got {d}")),
    };

    let mut outputs = Vec::new();
    for (i, snap) in snapshots.iter().enumerate() {
        let path = out.join(format!(
            "snapshot_{:04}_t{:.4}.csv",
            i,
            snap.meta.time.unwrap_or(0.0)
        ));
        snap.write_csv(&path).map_err(|e| e.to_string())?;
        outputs.push(path.display().to_string());
    }
    #[derive(Serialize)]
    struct MaxwellReport<'a> {
        schema: u32,
        command: &'a str,
        n: usize,
        tau: f64,
        steps: usize,
        avg_iterations: f64,
        max_iterations: usize,
        max_div_b: f64,
        wall_time: f64,
        outputs: &'a [String],
    }
    let report = MaxwellReport {
        schema: 1,
        command: "maxwell",
        n,
        tau,
        steps: stats.steps,
        avg_iterations: stats.avg_iterations,
        max_iterations: stats.max_iterations,
        max_div_b: stats.max_div_b,
        wall_time: stats.wall_time,
        outputs: &outputs,
    };
    write_json(&out.join("run_report.json"), &report)?;
    println!(
        "{} steps, avg {:.2} iterations/step, max |div B| = {:.3e}",
        stats.steps, stats.avg_iterations, stats.max_div_b
    );
    Ok(())
}

fn cmd_spectrum(dim: u8, n: usize, kappa: f64, out: &Path) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let pair = match dim {
        2 => spectra::assemble_dense_2d(n, kappa).map_err(|e| e.to_string())?,
        3 => spectra::assemble_dense_3d_interior(n, kappa).map_err(|e| e.to_string())?,
        d => return Err(format!("usage: dim must be 2 or 3, got {d}")),
    };
    let dim_eig1 =
        spectra::invariant_subspace_dim(&pair, spectra::RANK_TOL).map_err(|e| e.to_string())?;
    let spec = spectra::preconditioned_spectrum(&pair).map_err(|e| e.to_string())?;
    let csv_path = out.join("spectrum.csv");
    {
        let mut csv =
            std::io::BufWriter::new(std::fs::File::create(&csv_path).map_err(|e| e.to_string())?);
        writeln!(csv, "re,im").map_err(|e| e.to_string())?;
        for (re, im) in &spec {
            writeln!(csv, "{re:.16e},{im:.16e}").map_err(|e| e.to_string())?;
        }
    }
    let at_one = spec
        .iter()
        .filter(|(re, im)| (re - 1.0).abs() <= 1e-6 && im.abs() <= 1e-6)
        .count();
    #[derive(Serialize)]
    struct Summary {
        schema: u32,
        n: usize,
        kappa: f64,
        dim_eig1: usize,
        fraction_at_1: f64,
    }
    let summary = Summary {
        schema: 1,
        n,
        kappa,
        dim_eig1,
        fraction_at_1: at_one as f64 / spec.len() as f64,
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "matrix size {}, dim of eigenvalue-1 invariant subspace = {dim_eig1}",
        spec.len()
    );
    Ok(())
}
