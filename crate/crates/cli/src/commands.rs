//! Command implementations: each wraps a core pipeline, writes CSV data
//! files into a run directory, and seals a manifest.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use giver_core::analysis::{self, Density};
use giver_core::inversion::*;
use giver_core::moments::TransferFraction;
use giver_core::simulate::{self, InitialSpec};
use giver_core::solver::{solve_invariant, solve_ray, InitialGuess, SolverConfig};

use crate::manifest::RunDir;

/// Errors from bad flags and domain validation exit with code 2; numeric
/// failures (non-convergence and friends) exit with code 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numeric(e) => write!(f, "numerical failure: {e:#}"),
        }
    }
}

fn fraction(f: f64) -> Result<TransferFraction, CliError> {
    TransferFraction::new(f).map_err(|e| CliError::Usage(e.to_string()))
}

fn numeric(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Numeric(e.into())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolverFlags {
    /// Successive-change tolerance of the fixed-point iteration.
    #[arg(long, default_value_t = 1e-12)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,
    /// Logarithmic grid density (minimum 1000).
    #[arg(long, default_value_t = 2000)]
    pub nodes_per_decade: usize,
    /// Initial iterate: "cauchy" for 1/(1+z) or "exponential" for e^-z.
    #[arg(long, default_value = "cauchy")]
    pub guess: String,
}

impl SolverFlags {
    pub fn to_config(&self) -> Result<SolverConfig, CliError> {
        let initial_guess = match self.guess.as_str() {
            "cauchy" => InitialGuess::Cauchy,
            "exponential" => InitialGuess::Exponential,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown initial guess '{other}' (use cauchy or exponential)"
                )))
            }
        };
        Ok(SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            nodes_per_decade: self.nodes_per_decade,
            initial_guess,
            ..SolverConfig::default()
        })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    /// Transfer fraction, 0 < f < 1.
    #[arg(long)]
    pub f: f64,
    /// Modulus of the far end of the solved ray.
    #[arg(long)]
    pub zmax: f64,
    /// Ray angle in degrees from the positive real axis.
    #[arg(long, default_value_t = 0.0)]
    pub angle: f64,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Exact output directory (defaults to a timestamped run directory).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn cmd_solve(args: &SolveArgs) -> Result<PathBuf, CliError> {
    let f = fraction(args.f)?;
    if !(args.zmax > 1e-4) {
        return Err(CliError::Usage(format!(
            "--zmax must exceed 1e-4, got {}",
            args.zmax
        )));
    }
    let config = args.solver.to_config()?;
    let z_max = Complex64::from_polar(args.zmax, args.angle.to_radians());
    let grid = solve_ray(f, z_max, &config).map_err(numeric)?;
    let mut run = RunDir::create("solve", None, args.out.clone()).map_err(numeric)?;
    run.write_file("transform.csv", |buf| grid.write_csv(buf))
        .map_err(numeric)?;
    run.write_file("transform_header.json", |buf| grid.write_header_json(buf))
        .map_err(numeric)?;
    let dir = run.dir.clone();
    run.finish(
        "solve",
        serde_json::to_value(args).map_err(numeric)?,
        None,
    )
    .map_err(numeric)?;
    Ok(dir)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InvertArgs {
    #[arg(long)]
    pub f: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub wmin: f64,
    #[arg(long, default_value_t = 20.0)]
    pub wmax: f64,
    #[arg(long, default_value_t = 2000)]
    pub points: usize,
    /// euler, talbot, stehfest, or zakian.
    #[arg(long, default_value = "euler")]
    pub method: String,
    /// Optional second method for a pointwise cross-check.
    #[arg(long)]
    pub crosscheck: Option<String>,
    #[arg(long, default_value_t = 1e-8)]
    pub trust_floor: f64,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn cmd_invert(args: &InvertArgs) -> Result<PathBuf, CliError> {
    let f = fraction(args.f)?;
    if !(args.wmin > 0.0 && args.wmax > args.wmin) {
        return Err(CliError::Usage(
            "need 0 < wmin < wmax for the wealth grid".into(),
        ));
    }
    if args.points < 2 {
        return Err(CliError::Usage("need at least 2 grid points".into()));
    }
    let method = InversionMethod::from_str(&args.method).map_err(CliError::Usage)?;
    let cross_check = args
        .crosscheck
        .as_deref()
        .map(InversionMethod::from_str)
        .transpose()
        .map_err(CliError::Usage)?;
    let cfg = InversionConfig {
        method,
        cross_check,
        trust_floor: args.trust_floor,
        ..InversionConfig::default()
    };
    let grid = log_grid(args.wmin, args.wmax, args.points);
    let dist = invert_giver_distribution(f, &grid, &cfg, args.solver.to_config()?)
        .map_err(numeric)?;
    let mut run = RunDir::create("invert", None, args.out.clone()).map_err(numeric)?;
    run.write_file("distribution.csv", |buf| dist.write_csv(buf))
        .map_err(numeric)?;
    run.write_file("distribution_meta.json", |buf| dist.write_sidecar_json(buf))
        .map_err(numeric)?;
    let dir = run.dir.clone();
    run.finish(
        "invert",
        serde_json::to_value(args).map_err(numeric)?,
        None,
    )
    .map_err(numeric)?;
    Ok(dir)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub f: f64,
    #[arg(long, default_value_t = 100_000)]
    pub agents: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// uniform:0:MAX, eq13, delta:W0, or file:PATH (one wealth per line).
    #[arg(long, default_value = "uniform:0:100")]
    pub init: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Histogram bin width in wealth units (defaults to mean/50).
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn parse_init(spec: &str, agents: usize) -> Result<InitialSpec, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["uniform", lo, hi] => {
            let lo: f64 = lo.parse().map_err(|_| CliError::Usage(format!("bad uniform bound '{lo}'")))?;
            let hi: f64 = hi.parse().map_err(|_| CliError::Usage(format!("bad uniform bound '{hi}'")))?;
            if lo != 0.0 {
                return Err(CliError::Usage(
                    "uniform initial distributions start at 0 (use uniform:0:MAX)".into(),
                ));
            }
            Ok(InitialSpec::Uniform { max: hi })
        }
        ["eq13"] | ["two-level"] => {
            // The zero-entropy two-level profile, scaled by 1000 wealth
            // units.
            let (p1, p2, w2) = simulate::zero_entropy_two_level();
            Ok(InitialSpec::TwoLevel {
                p1,
                p2,
                w2,
                scale: 1000.0,
            })
        }
        ["delta", w0] => {
            let w0: f64 = w0.parse().map_err(|_| CliError::Usage(format!("bad delta location '{w0}'")))?;
            Ok(InitialSpec::Delta { w0 })
        }
        ["file", path] => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read '{path}': {e}")))?;
            let wealths: Result<Vec<f64>, _> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.trim().parse::<f64>())
                .collect();
            let wealths = wealths.map_err(|e| CliError::Usage(format!("bad wealth in '{path}': {e}")))?;
            if wealths.len() != agents {
                return Err(CliError::Usage(format!(
                    "'{path}' holds {} wealths for {} agents",
                    wealths.len(),
                    agents
                )));
            }
            Ok(InitialSpec::Explicit(wealths))
        }
        _ => Err(CliError::Usage(format!(
            "unknown init spec '{spec}' (use uniform:0:MAX, eq13, delta:W0, or file:PATH)"
        ))),
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<PathBuf, CliError> {
    let f = fraction(args.f)?;
    if args.steps < 1 {
        return Err(CliError::Usage("need at least 1 step".into()));
    }
    let spec = parse_init(&args.init, args.agents)?;
    let mut pop = simulate::init_population(args.agents, &spec, args.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let traj = pop.run(f, args.steps).map_err(numeric)?;
    let bin_width = match args.bin_width {
        Some(w) if w > 0.0 => w,
        Some(w) => return Err(CliError::Usage(format!("bin width must be positive, got {w}"))),
        None => pop.mean_wealth() / 50.0,
    };
    let hist = pop.histogram(bin_width).map_err(numeric)?;
    let mut run = RunDir::create("simulate", Some(args.seed), args.out.clone()).map_err(numeric)?;
    run.write_file("trajectory.csv", |buf| traj.write_csv(buf))
        .map_err(numeric)?;
    run.write_file("histogram.csv", |buf| hist.write_csv(buf))
        .map_err(numeric)?;
    let dir = run.dir.clone();
    run.finish(
        "simulate",
        serde_json::to_value(args).map_err(numeric)?,
        Some(args.seed),
    )
    .map_err(numeric)?;
    Ok(dir)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FiguresArgs {
    /// fig1, fig2, fig3, fig4a, fig4b, fig5a, fig5b, fig6, or fig7.
    pub id: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn write_ray_csv(buf: &mut Vec<u8>, grid: &giver_core::RayGrid) -> std::io::Result<()> {
    writeln!(buf, "r,re_g,im_g,abs_g")?;
    for k in 0..grid.len() {
        let (z, g) = grid.node(k);
        writeln!(buf, "{},{},{},{}", z.norm(), g.re, g.im, g.norm())?;
    }
    Ok(())
}

fn write_density_csv(buf: &mut Vec<u8>, d: &WealthDistribution) -> std::io::Result<()> {
    d.write_csv(buf)
}

fn sweep_csv(
    run: &mut RunDir,
    name: &str,
    header: &str,
    rows: &[(f64, f64, f64)],
) -> Result<()> {
    run.write_file(name, |buf| {
        writeln!(buf, "{header}")?;
        for (a, b, c) in rows {
            writeln!(buf, "{a},{b},{c}")?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn cmd_figures(args: &FiguresArgs) -> Result<PathBuf, CliError> {
    let mut run = RunDir::create(
        &format!("figures-{}", args.id),
        Some(args.seed),
        args.out.clone(),
    )
    .map_err(numeric)?;
    build_figure(&args.id, args.seed, &mut run).map_err(|e| match e.downcast::<CliError>() {
        Ok(cli) => cli,
        Err(e) => CliError::Numeric(e),
    })?;
    let dir = run.dir.clone();
    run.finish(
        "figures",
        serde_json::to_value(args).map_err(numeric)?,
        Some(args.seed),
    )
    .map_err(numeric)?;
    Ok(dir)
}

fn build_figure(id: &str, seed: u64, run: &mut RunDir) -> Result<()> {
    let solver = SolverConfig {
        nodes_per_decade: 2000,
        tolerance: 1e-13,
        max_iterations: 4000,
        ..SolverConfig::default()
    };
    match id {
        // g(z) for f = 0.1 along the real axis, the 60-degree line, and
        // the imaginary axis.
        "fig1" => {
            let f = TransferFraction::new(0.1).unwrap();
            for (label, deg) in [("theta0", 0.0f64), ("theta60", 60.0), ("theta90", 90.0)] {
                let z = Complex64::from_polar(100.0, deg.to_radians());
                let grid = solve_ray(f, z, &solver).context("ray solve")?;
                run.write_file(&format!("fig1_{label}.csv"), |buf| write_ray_csv(buf, &grid))?;
            }
        }
        // Complex-plane view of g for f = 0.1 on [-5,5]^2.
        "fig2" => {
            let f = TransferFraction::new(0.1).unwrap();
            let n = 161;
            run.write_file("fig2_complex_plane.csv", |buf| {
                writeln!(buf, "re_z,im_z,re_g,im_g")?;
                for i in 0..n {
                    for j in 0..n {
                        let re = -5.0 + 10.0 * i as f64 / (n - 1) as f64;
                        let im = -5.0 + 10.0 * j as f64 / (n - 1) as f64;
                        let z = Complex64::new(re, im);
                        let g = if z.norm() < giver_core::TAYLOR_RADIUS {
                            giver_core::taylor_eval(f, z, 20).ok()
                        } else {
                            solve_invariant(f, z, &solver).ok()
                        };
                        match g {
                            Some(g) => writeln!(buf, "{re},{im},{},{}", g.re, g.im)?,
                            None => writeln!(buf, "{re},{im},nan,nan")?,
                        }
                    }
                }
                Ok(())
            })?;
        }
        // Steady-state densities for f = 0.5 down to 0.025.
        "fig3" => {
            for f in [0.5, 0.25, 0.1, 0.05, 0.025] {
                let tf = TransferFraction::new(f).unwrap();
                let cfg = InversionConfig {
                    method: InversionMethod::Talbot,
                    cross_check: Some(InversionMethod::Euler),
                    ..InversionConfig::default()
                };
                let grid = log_grid(1e-3, 20.0, 1200);
                let dist = invert_giver_distribution(tf, &grid, &cfg, solver)?;
                run.write_file(&format!("fig3_f{f}.csv"), |buf| write_density_csv(buf, &dist))?;
            }
        }
        // Population histogram vs the rescaled master-equation solution.
        "fig4a" => figure4(run, 0.95, 100.0, seed, solver)?,
        "fig4b" => figure4(run, 0.05, 500.0, seed, solver)?,
        // Steady-state entropy against the variance over an f sweep.
        "fig5a" => {
            let rows = sweep(|f| {
                let d = sweep_density(f, solver)?;
                Ok(analysis::boltzmann_entropy(&d)?.s)
            })?;
            sweep_csv(run, "fig5a_entropy.csv", "f,sigma2,entropy", &rows)?;
        }
        // Entropy evolution from the zero-entropy two-level start.
        "fig5b" => {
            let (p1, p2, w2) = simulate::zero_entropy_two_level();
            let spec = InitialSpec::TwoLevel {
                p1,
                p2,
                w2,
                scale: 1000.0,
            };
            let f = TransferFraction::new(0.058).unwrap();
            let mut pop = simulate::init_population(337_123, &spec, seed)?;
            let traj = pop.run(f, 150)?;
            run.write_file("fig5b_entropy_evolution.csv", |buf| traj.write_csv(buf))?;
        }
        // Random-process limiting distribution vs the inverted steady state.
        "fig6" => {
            let f = TransferFraction::new(0.05).unwrap();
            let path = simulate::simulate_process(f, 1_000_000, seed);
            let hist = simulate::limiting_distribution(&path, 60)?;
            run.write_file("fig6_process_histogram.csv", |buf| hist.write_csv(buf))?;
            let cfg = InversionConfig {
                method: InversionMethod::Talbot,
                ..InversionConfig::default()
            };
            let dist = steady_distribution(f, None, 400, &cfg, solver)?;
            run.write_file("fig6_steady_density.csv", |buf| write_density_csv(buf, &dist))?;
        }
        // Gini coefficient against the variance over an f sweep.
        "fig7" => {
            let rows = sweep(|f| {
                let d = sweep_density(f, solver)?;
                Ok(analysis::gini(&d)?.g)
            })?;
            sweep_csv(run, "fig7_gini.csv", "f,sigma2,gini", &rows)?;
        }
        other => bail!(CliError::Usage(format!(
            "unknown figure '{other}' (fig1..fig7, fig4a/fig4b, fig5a/fig5b)"
        ))),
    }
    Ok(())
}

impl std::error::Error for CliError {}

fn sweep_density(f: f64, solver: SolverConfig) -> Result<Density> {
    let tf = TransferFraction::new(f).unwrap();
    let cfg = InversionConfig::default();
    let lo = if f >= 0.5 { Some(1e-12) } else { None };
    // The invariant backend stays fast across the whole f range, where
    // ray sweeps crawl near the endpoints.
    let dist = steady_distribution_invariant(tf, lo, 250, &cfg, solver)?;
    Ok(Density::from(&dist))
}

// 40 log-ish-spaced f values over the range the steady-state sweeps cover.
fn sweep(eval: impl Fn(f64) -> Result<f64>) -> Result<Vec<(f64, f64, f64)>> {
    let mut rows = Vec::new();
    for i in 0..40 {
        let f = 0.01 * (0.9f64 / 0.01).powf(i as f64 / 39.0);
        let value = eval(f).with_context(|| format!("sweep point f={f}"))?;
        rows.push((f, f / (1.0 - f), value));
    }
    Ok(rows)
}

fn figure4(
    run: &mut RunDir,
    f: f64,
    init_max: f64,
    seed: u64,
    solver: SolverConfig,
) -> Result<()> {
    let tf = TransferFraction::new(f).unwrap();
    let mut pop = simulate::init_population(400_000, &InitialSpec::Uniform { max: init_max }, seed)?;
    for _ in 0..100 {
        pop.step(tf);
    }
    let hist = pop.histogram(1.0)?;
    run.write_file(&format!("fig4_f{f}_histogram.csv"), |buf| hist.write_csv(buf))?;

    // Master-equation curve rescaled to the population: N p_s(w/<w>)/<w>.
    let mean = pop.mean_wealth();
    let n = pop.len() as f64;
    let cfg = InversionConfig::default();
    let lo = if f >= 0.5 { Some(1e-7) } else { None };
    let dist = steady_distribution_invariant(tf, lo, 300, &cfg, solver)?;
    run.write_file(&format!("fig4_f{f}_model.csv"), |buf| {
        writeln!(buf, "w,n_model")?;
        for (x, p) in dist.w.iter().zip(&dist.p) {
            let w = x * mean;
            writeln!(buf, "{w},{}", n * p / mean)?;
        }
        Ok(())
    })?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Path to a manifest.json from a previous run.
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<PathBuf, CliError> {
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| CliError::Usage(format!("cannot read manifest: {e}")))?;
    let manifest: crate::manifest::RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad manifest: {e}")))?;
    let with_out = |mut v: serde_json::Value| -> serde_json::Value {
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out");
        }
        v
    };
    let config = with_out(manifest.config);
    match manifest.command.as_str() {
        "solve" => {
            let mut a: SolveArgs = serde_json::from_value(config)
                .map_err(|e| CliError::Usage(format!("bad solve config: {e}")))?;
            a.out = args.out.clone();
            cmd_solve(&a)
        }
        "invert" => {
            let mut a: InvertArgs = serde_json::from_value(config)
                .map_err(|e| CliError::Usage(format!("bad invert config: {e}")))?;
            a.out = args.out.clone();
            cmd_invert(&a)
        }
        "simulate" => {
            let mut a: SimulateArgs = serde_json::from_value(config)
                .map_err(|e| CliError::Usage(format!("bad simulate config: {e}")))?;
            a.out = args.out.clone();
            cmd_simulate(&a)
        }
        "figures" => {
            let mut a: FiguresArgs = serde_json::from_value(config)
                .map_err(|e| CliError::Usage(format!("bad figures config: {e}")))?;
            a.out = args.out.clone();
            cmd_figures(&a)
        }
        other => Err(CliError::Usage(format!(
            "manifest records unknown command '{other}'"
        ))),
    }
}

pub fn usage_error(e: &CliError) -> bool {
    matches!(e, CliError::Usage(_))
}
