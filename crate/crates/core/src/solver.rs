//! Fixed-point solver for the steady-state functional equation
//!
//!   g(z) = g((1-f)z) / (2 - g(fz))
//!
//! in the complex plane, via two procedures: iteration on a uniform
//! logarithmic grid along a ray (with cubic-spline interpolation onto the
//! auxiliary grids shifted by log10(f) and log10(1-f)), and an
//! interpolation-free sweep on the invariant grid f^k (1-f)^m z.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::moments::{ModelError, TaylorSeries, TransferFraction};
use crate::spline::UniformSpline;

/// Below this |z| the truncated Taylor series is accurate to working
/// precision and replaces grid values.
pub const TAYLOR_RADIUS: f64 = 1e-4;

/// Default truncation order of the small-|z| Taylor expansion.
pub const DEFAULT_TAYLOR_TERMS: usize = 20;

/// Denominators |2 - g(fz)| below this trip the division guard.
pub const DIVISION_GUARD: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(
        "iteration did not converge after {iterations} sweeps \
         (last max change {max_change:.3e}, residual {residual:.3e})"
    )]
    NonConverged {
        iterations: usize,
        max_change: f64,
        residual: f64,
    },
    #[error("division guard tripped: |2 - g(fz)| = {denom:.3e} at |z| = {abs_z:.6e}")]
    DivisionGuard { denom: f64, abs_z: f64 },
    #[error("grid of {nodes} nodes exceeds the cap of {cap}")]
    GridOverflow { nodes: usize, cap: usize },
    #[error("query at angle {actual} is off the solved ray at angle {expected}")]
    OffRay { expected: f64, actual: f64 },
    #[error("query |z| = {abs_z:.6e} outside the solved range |z| <= {max_abs_z:.6e}")]
    OutOfRange { abs_z: f64, max_abs_z: f64 },
    #[error("fit window holds only {nodes} nodes; at least 10 required")]
    WindowTooSmall { nodes: usize },
}

/// Starting function for the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InitialGuess {
    /// g0(z) = 1/(1+z); works for all f.
    Cauchy,
    /// g0(z) = exp(-z); works for small f.
    Exponential,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverConfig {
    /// Maximum absolute successive-iterate change accepted as converged.
    pub tolerance: f64,
    /// Maximum relative successive change also required for convergence;
    /// keeps far-tail nodes (many orders of magnitude below the head)
    /// relatively settled, which absolute tolerance alone cannot see.
    pub relative_tolerance: f64,
    pub max_iterations: usize,
    /// Logarithmic grid density; at least 1000 per decade.
    pub nodes_per_decade: usize,
    pub initial_guess: InitialGuess,
    /// Cap on total grid nodes (ray length or invariant-grid area).
    pub max_grid_nodes: usize,
    /// Truncation order of the small-|z| Taylor seed.
    pub taylor_terms: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            relative_tolerance: 1e-10,
            max_iterations: 500,
            nodes_per_decade: 1000,
            initial_guess: InitialGuess::Cauchy,
            max_grid_nodes: 50_000_000,
            taylor_terms: DEFAULT_TAYLOR_TERMS,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        if !(self.tolerance > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.relative_tolerance > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "relative_tolerance must be positive, got {}",
                self.relative_tolerance
            )));
        }
        if self.max_iterations < 1 {
            return Err(SolverError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.nodes_per_decade < 1000 {
            return Err(SolverError::InvalidConfig(format!(
                "nodes_per_decade must be at least 1000, got {}",
                self.nodes_per_decade
            )));
        }
        if self.taylor_terms < 4 {
            return Err(SolverError::InvalidConfig(
                "taylor_terms must be at least 4".into(),
            ));
        }
        Ok(())
    }
}

/// Converged samples of g along one ray, on a uniform grid in log10|z|
/// covering [-4, log10|z_max|].
#[derive(Debug, Clone)]
pub struct RayGrid {
    f: TransferFraction,
    theta: f64,
    unit: Complex64,
    u_min: f64,
    h: f64,
    values: Vec<Complex64>,
    iterations: usize,
    residual: f64,
    tolerance: f64,
    taylor: TaylorSeries,
}

/// Metadata header written next to grid CSV exports.
#[derive(Debug, Clone, Serialize)]
pub struct RayGridHeader {
    pub f: f64,
    pub theta: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub residual: f64,
}

// Where an auxiliary-grid point lands: inside the Taylor disc (value is
// iteration-independent) or between grid knots.
enum AuxPoint {
    Fixed(Complex64),
    Interp(f64),
}

/// Solves the functional equation along the ray through `z_max` on a
/// logarithmic grid, iterating g_{i+1}(z) = g_i((1-f)z) / (2 - g_i(fz))
/// until the maximum successive change drops below the tolerance.
pub fn solve_ray(
    f: TransferFraction,
    z_max: Complex64,
    config: &SolverConfig,
) -> Result<RayGrid, SolverError> {
    config.validate()?;
    let abs_max = z_max.norm();
    if !(abs_max > TAYLOR_RADIUS) {
        return Err(SolverError::InvalidArgument(format!(
            "|z_max| = {abs_max:e} must exceed the Taylor radius {TAYLOR_RADIUS:e}"
        )));
    }
    let unit = z_max / abs_max;
    let theta = z_max.im.atan2(z_max.re);
    // The grid extends a little below the Taylor radius so the natural
    // boundary layer of the spline sits where no auxiliary point ever
    // samples it; queries below log10(TAYLOR_RADIUS) use the series.
    let taylor_edge = TAYLOR_RADIUS.log10();
    let u_min = taylor_edge - 60.0 / config.nodes_per_decade as f64;
    let u_max = abs_max.log10();
    let decades = u_max - u_min;
    let n = (decades * config.nodes_per_decade as f64).ceil() as usize + 1;
    if n > config.max_grid_nodes {
        return Err(SolverError::GridOverflow {
            nodes: n,
            cap: config.max_grid_nodes,
        });
    }
    let h = decades / (n - 1) as f64;
    let taylor = TaylorSeries::new(f, config.taylor_terms)?;

    let point = |u: f64| -> Complex64 { unit * 10f64.powf(u) };
    let guess = |z: Complex64| -> Complex64 {
        match config.initial_guess {
            InitialGuess::Cauchy => 1.0 / (1.0 + z),
            InitialGuess::Exponential => (-z).exp(),
        }
    };

    let mut values: Vec<Complex64> = (0..n).map(|k| guess(point(u_min + h * k as f64))).collect();

    // Auxiliary abscissas u + log10(f) and u + log10(1-f) never move, so
    // classify them once; points inside the Taylor disc keep fixed values.
    let classify = |shift: f64| -> Vec<AuxPoint> {
        (0..n)
            .map(|k| {
                let u = u_min + h * k as f64 + shift;
                if u < taylor_edge {
                    AuxPoint::Fixed(taylor.eval(point(u)))
                } else {
                    AuxPoint::Interp(u)
                }
            })
            .collect()
    };
    let aux_f = classify(f.value().log10());
    let aux_r = classify(f.complement().log10());

    let mut re_spline = UniformSpline::new(u_min, h, n);
    let mut im_spline = UniformSpline::new(u_min, h, n);
    let mut re_buf = vec![0.0f64; n];
    let mut im_buf = vec![0.0f64; n];
    let mut next = vec![Complex64::new(0.0, 0.0); n];

    let mut iterations = 0;
    let mut max_change = f64::INFINITY;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        for (k, v) in values.iter().enumerate() {
            re_buf[k] = v.re;
            im_buf[k] = v.im;
        }
        re_spline.fit(&re_buf);
        im_spline.fit(&im_buf);
        let sample = |p: &AuxPoint| -> Complex64 {
            match p {
                AuxPoint::Fixed(v) => *v,
                AuxPoint::Interp(u) => Complex64::new(re_spline.eval(*u), im_spline.eval(*u)),
            }
        };
        max_change = 0.0;
        let mut max_rel_change = 0.0f64;
        for k in 0..n {
            let g_at_fz = sample(&aux_f[k]);
            let g_at_rz = sample(&aux_r[k]);
            let denom = Complex64::new(2.0, 0.0) - g_at_fz;
            if denom.norm() < DIVISION_GUARD {
                return Err(SolverError::DivisionGuard {
                    denom: denom.norm(),
                    abs_z: 10f64.powf(u_min + h * k as f64),
                });
            }
            let v = g_at_rz / denom;
            let change = (v - values[k]).norm();
            if change > max_change {
                max_change = change;
            }
            // Subnormal magnitudes are exempt from the relative check.
            let rel = change / v.norm().max(1e-280);
            if rel > max_rel_change {
                max_rel_change = rel;
            }
            next[k] = v;
        }
        std::mem::swap(&mut values, &mut next);
        if max_change <= config.tolerance && max_rel_change <= config.relative_tolerance {
            converged = true;
            break;
        }
    }

    // Post-hoc fixed-point residual with the final iterate.
    for (k, v) in values.iter().enumerate() {
        re_buf[k] = v.re;
        im_buf[k] = v.im;
    }
    re_spline.fit(&re_buf);
    im_spline.fit(&im_buf);
    let sample = |p: &AuxPoint| -> Complex64 {
        match p {
            AuxPoint::Fixed(v) => *v,
            AuxPoint::Interp(u) => Complex64::new(re_spline.eval(*u), im_spline.eval(*u)),
        }
    };
    let mut residual = 0.0f64;
    for k in 0..n {
        let g_at_fz = sample(&aux_f[k]);
        let g_at_rz = sample(&aux_r[k]);
        let r = (values[k] - 0.5 * g_at_rz - 0.5 * values[k] * g_at_fz).norm();
        if r > residual {
            residual = r;
        }
    }
    // Successive change alone can stall-detect falsely near slow modes;
    // require the fixed-point residual too.
    if converged && residual > 10.0 * config.tolerance {
        converged = false;
    }

    if !converged {
        return Err(SolverError::NonConverged {
            iterations,
            max_change,
            residual,
        });
    }

    Ok(RayGrid {
        f,
        theta,
        unit,
        u_min,
        h,
        values,
        iterations,
        residual,
        tolerance: config.tolerance,
        taylor,
    })
}

impl RayGrid {
    pub fn f(&self) -> TransferFraction {
        self.f
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Worst fixed-point residual |g - g((1-f)z)/2 - g(z)g(fz)/2| over the grid.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn log10_abs_max(&self) -> f64 {
        self.u_min + self.h * (self.values.len() - 1) as f64
    }

    pub fn max_abs_z(&self) -> f64 {
        10f64.powf(self.log10_abs_max())
    }

    /// Grid spacing in log10|z|.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn node(&self, k: usize) -> (Complex64, Complex64) {
        let u = self.u_min + self.h * k as f64;
        (self.unit * 10f64.powf(u), self.values[k])
    }

    /// A coarse bound on the interpolation error carried by the converged
    /// grid: the cubic-spline h^4 term with an allowance of 300 covering
    /// the fourth derivative of g in log coordinates and the amplification
    /// of the per-sweep bias through the fixed-point iteration.
    pub fn interp_error_bound(&self) -> f64 {
        let h_ln = self.h * std::f64::consts::LN_10;
        5.0 / 384.0 * h_ln.powi(4) * 300.0
    }

    /// Evaluates g at a point on the ray by cubic-spline interpolation in
    /// log10|z|; |z| below the Taylor radius delegates to the series.
    pub fn evaluate(&self, z: Complex64) -> Result<Complex64, SolverError> {
        let a = z.norm();
        if a < TAYLOR_RADIUS {
            return Ok(self.taylor.eval(z));
        }
        let angle_off = (z * self.unit.conj()).arg().abs();
        if angle_off > 1e-12 {
            return Err(SolverError::OffRay {
                expected: self.theta,
                actual: z.im.atan2(z.re),
            });
        }
        let u = a.log10();
        if u > self.log10_abs_max() + 1e-12 {
            return Err(SolverError::OutOfRange {
                abs_z: a,
                max_abs_z: self.max_abs_z(),
            });
        }
        // Exact at knots; between knots use local cubic pieces built from a
        // one-off fit of the stored values.
        let idx = ((u - self.u_min) / self.h).round();
        let u_knot = self.u_min + self.h * idx;
        if (u - u_knot).abs() < 1e-13 && idx >= 0.0 && (idx as usize) < self.values.len() {
            return Ok(self.values[idx as usize]);
        }
        Ok(self.interpolate(u))
    }

    fn interpolate(&self, u: f64) -> Complex64 {
        // Local refit over a window; the natural boundary condition at the
        // window edges decays by ~0.27 per node, so 24 nodes of margin keep
        // the query in the asymptotically exact interior.
        let n = self.values.len();
        let lo = (((u - self.u_min) / self.h) as isize - 24).clamp(0, n as isize - 1) as usize;
        let hi = ((((u - self.u_min) / self.h) as isize) + 25).clamp(1, n as isize) as usize;
        let len = hi - lo;
        let x0 = self.u_min + self.h * lo as f64;
        let mut re = UniformSpline::new(x0, self.h, len);
        let mut im = UniformSpline::new(x0, self.h, len);
        let re_vals: Vec<f64> = self.values[lo..hi].iter().map(|v| v.re).collect();
        let im_vals: Vec<f64> = self.values[lo..hi].iter().map(|v| v.im).collect();
        re.fit(&re_vals);
        im.fit(&im_vals);
        Complex64::new(re.eval(u), im.eval(u))
    }

    /// Least-squares slope of log10|g| against log10|z| over the top
    /// `window_decades` of the grid, returned as the exponent estimate
    /// alpha (the negated slope).
    pub fn fit_tail_exponent(&self, window_decades: f64) -> Result<f64, SolverError> {
        let u_max = self.log10_abs_max();
        let u_lo = u_max - window_decades;
        let start = (((u_lo - self.u_min) / self.h).ceil() as isize).max(0) as usize;
        let pts: Vec<(f64, f64)> = (start..self.values.len())
            .filter_map(|k| {
                let m = self.values[k].norm();
                if m > 0.0 && m.is_finite() {
                    Some((self.u_min + self.h * k as f64, m.log10()))
                } else {
                    None
                }
            })
            .collect();
        if pts.len() < 10 {
            return Err(SolverError::WindowTooSmall { nodes: pts.len() });
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        Ok(-slope)
    }

    pub fn header(&self) -> RayGridHeader {
        RayGridHeader {
            f: self.f.value(),
            theta: self.theta,
            tolerance: self.tolerance,
            iterations: self.iterations,
            residual: self.residual,
        }
    }

    /// Writes the grid as CSV with columns log10_abs_z, re_g, im_g.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "log10_abs_z,re_g,im_g")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{},{}", self.u_min + self.h * k as f64, v.re, v.im)?;
        }
        Ok(())
    }

    /// Writes the JSON metadata header.
    pub fn write_header_json<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.header())?;
        writeln!(out, "{text}")?;
        Ok(())
    }
}

/// Evaluates g(z) on the invariant grid z_{k,m} = f^k (1-f)^m z, seeding
/// every node inside the Taylor disc from the series and sweeping the rule
/// g_{k,m} = g_{k,m+1} / (2 - g_{k+1,m}) to convergence. No interpolation
/// is involved, but the grid must be rebuilt per argument.
pub fn solve_invariant(
    f: TransferFraction,
    z: Complex64,
    config: &SolverConfig,
) -> Result<Complex64, SolverError> {
    config.validate()?;
    let abs_z = z.norm();
    if !(abs_z > TAYLOR_RADIUS) {
        return Err(SolverError::InvalidArgument(format!(
            "|z| = {abs_z:e} must exceed the Taylor radius {TAYLOR_RADIUS:e}"
        )));
    }
    let fv = f.value();
    let rv = f.complement();
    let target = (TAYLOR_RADIUS / abs_z).ln();
    let k_max = (target / fv.ln()).ceil() as usize;
    let m_max = (target / rv.ln()).ceil() as usize;
    let cols = m_max + 1;
    let nodes = (k_max + 1) * cols;
    if nodes > config.max_grid_nodes {
        return Err(SolverError::GridOverflow {
            nodes,
            cap: config.max_grid_nodes,
        });
    }
    let taylor = TaylorSeries::new(f, config.taylor_terms)?;

    let mut f_pow = Vec::with_capacity(k_max + 1);
    let mut acc = 1.0f64;
    for _ in 0..=k_max {
        f_pow.push(acc);
        acc *= fv;
    }
    let mut r_pow = Vec::with_capacity(m_max + 1);
    let mut acc = 1.0f64;
    for _ in 0..=m_max {
        r_pow.push(acc);
        acc *= rv;
    }

    let mut grid = vec![Complex64::new(0.0, 0.0); nodes];
    let mut fixed = vec![false; nodes];
    for (k, &fp) in f_pow.iter().enumerate() {
        for (m, &rp) in r_pow.iter().enumerate() {
            let scale = fp * rp;
            let zkm = z * scale;
            let idx = k * cols + m;
            if abs_z * scale < TAYLOR_RADIUS {
                grid[idx] = taylor.eval(zkm);
                fixed[idx] = true;
            } else {
                grid[idx] = match config.initial_guess {
                    InitialGuess::Cauchy => 1.0 / (1.0 + zkm),
                    InitialGuess::Exponential => (-zkm).exp(),
                };
            }
        }
    }

    // The update for (k, m) reads only (k, m+1) and (k+1, m), so a sweep in
    // descending k and m settles the grid; the second sweep confirms it.
    for _ in 0..config.max_iterations {
        let mut max_change = 0.0f64;
        for k in (0..k_max).rev() {
            for m in (0..m_max).rev() {
                let idx = k * cols + m;
                if fixed[idx] {
                    continue;
                }
                let denom = Complex64::new(2.0, 0.0) - grid[(k + 1) * cols + m];
                if denom.norm() < DIVISION_GUARD {
                    return Err(SolverError::DivisionGuard {
                        denom: denom.norm(),
                        abs_z: abs_z * f_pow[k] * r_pow[m],
                    });
                }
                let v = grid[idx + 1] / denom;
                let change = (v - grid[idx]).norm();
                if change > max_change {
                    max_change = change;
                }
                grid[idx] = v;
            }
        }
        if max_change <= config.tolerance {
            return Ok(grid[0]);
        }
    }
    Err(SolverError::NonConverged {
        iterations: config.max_iterations,
        max_change: f64::NAN,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(f: f64) -> TransferFraction {
        TransferFraction::new(f).unwrap()
    }

    fn cauchy(z: Complex64) -> Complex64 {
        1.0 / (1.0 + z)
    }

    #[test]
    fn half_fraction_recovers_cauchy_on_real_ray() {
        let grid = solve_ray(tf(0.5), Complex64::new(100.0, 0.0), &SolverConfig::default())
            .expect("converges");
        let mut worst = 0.0f64;
        for k in 0..grid.len() {
            let (z, g) = grid.node(k);
            worst = worst.max((g - cauchy(z)).norm());
        }
        assert!(worst <= 1e-8, "worst error {worst:e}");
        assert!(grid.residual() <= 10.0 * grid.tolerance());
    }

    #[test]
    fn half_fraction_on_imaginary_ray() {
        let grid = solve_ray(tf(0.5), Complex64::new(0.0, 100.0), &SolverConfig::default())
            .expect("converges");
        let mut worst = 0.0f64;
        for k in 0..grid.len() {
            let (z, g) = grid.node(k);
            worst = worst.max((g - cauchy(z)).norm());
        }
        assert!(worst <= 1e-8, "worst error {worst:e}");
    }

    #[test]
    fn small_fraction_close_to_exponential() {
        let grid = solve_ray(tf(0.05), Complex64::new(10.0, 0.0), &SolverConfig::default())
            .expect("converges");
        // a_n -> 1 as f -> 0, so g approaches exp(-z); at f = 0.05 the
        // match is close but not exact.
        let mut worst = 0.0f64;
        for k in 0..grid.len() {
            let (z, g) = grid.node(k);
            if z.norm() <= 3.0 {
                worst = worst.max((g - (-z).exp()).norm());
            }
        }
        assert!(worst < 0.02, "worst |g - exp(-z)| = {worst}");
    }

    #[test]
    fn residual_bound_holds_for_various_f() {
        for f in [0.1, 0.3, 0.7, 0.9] {
            let grid = solve_ray(tf(f), Complex64::new(0.0, 50.0), &SolverConfig::default())
                .expect("converges");
            assert!(
                grid.residual() <= 10.0 * grid.tolerance(),
                "f={f} residual {:e}",
                grid.residual()
            );
        }
    }

    #[test]
    fn initial_guess_independence() {
        for f in [0.3, 0.5] {
            let a = solve_ray(tf(f), Complex64::new(50.0, 0.0), &SolverConfig::default()).unwrap();
            let cfg = SolverConfig {
                initial_guess: InitialGuess::Exponential,
                ..SolverConfig::default()
            };
            let b = solve_ray(tf(f), Complex64::new(50.0, 0.0), &cfg).unwrap();
            let mut worst = 0.0f64;
            for k in 0..a.len() {
                worst = worst.max((a.node(k).1 - b.node(k).1).norm());
            }
            assert!(worst <= 10.0 * a.tolerance(), "f={f} diff {worst:e}");
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let up = solve_ray(
            tf(0.3),
            Complex64::from_polar(20.0, 1.0),
            &SolverConfig::default(),
        )
        .unwrap();
        let dn = solve_ray(
            tf(0.3),
            Complex64::from_polar(20.0, -1.0),
            &SolverConfig::default(),
        )
        .unwrap();
        let mut worst = 0.0f64;
        for k in 0..up.len() {
            let (zu, gu) = up.node(k);
            let (zd, gd) = dn.node(k);
            assert!((zu.conj() - zd).norm() < 1e-12 * zu.norm());
            worst = worst.max((gu.conj() - gd).norm());
        }
        assert!(worst <= 1e-10, "conjugate asymmetry {worst:e}");
    }

    #[test]
    fn evaluate_returns_stored_node_values() {
        let grid =
            solve_ray(tf(0.4), Complex64::new(10.0, 0.0), &SolverConfig::default()).unwrap();
        // Skip the leading nodes below the Taylor radius, where evaluate
        // delegates to the series instead of the grid.
        for k in [100usize, 1234, grid.len() - 1] {
            let (z, g) = grid.node(k);
            assert!(z.norm() >= TAYLOR_RADIUS);
            let e = grid.evaluate(z).unwrap();
            assert_eq!(e, g, "node {k}");
        }
    }

    #[test]
    fn evaluate_interpolates_between_nodes() {
        let grid =
            solve_ray(tf(0.5), Complex64::new(100.0, 0.0), &SolverConfig::default()).unwrap();
        for r in [0.00037, 0.0123, 1.7, 23.456, 99.2] {
            let z = Complex64::new(r, 0.0);
            let e = grid.evaluate(z).unwrap();
            assert!(
                (e - cauchy(z)).norm() < 1e-8,
                "r={r} err={:e}",
                (e - cauchy(z)).norm()
            );
        }
    }

    #[test]
    fn evaluate_delegates_to_taylor_below_radius() {
        let f = tf(0.35);
        let grid = solve_ray(f, Complex64::new(10.0, 0.0), &SolverConfig::default()).unwrap();
        let z = Complex64::new(1e-5, 0.0);
        let direct = crate::moments::taylor_eval(f, z, DEFAULT_TAYLOR_TERMS).unwrap();
        assert_eq!(grid.evaluate(z).unwrap(), direct);
    }

    #[test]
    fn evaluate_rejects_off_ray_and_out_of_range() {
        let grid =
            solve_ray(tf(0.4), Complex64::new(10.0, 0.0), &SolverConfig::default()).unwrap();
        match grid.evaluate(Complex64::new(0.0, 5.0)) {
            Err(SolverError::OffRay { .. }) => {}
            other => panic!("expected OffRay, got {other:?}"),
        }
        match grid.evaluate(Complex64::new(20.0, 0.0)) {
            Err(SolverError::OutOfRange { .. }) => {}
            other => panic!("expected OutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn normalization_and_mean_near_zero() {
        let grid =
            solve_ray(tf(0.25), Complex64::new(0.0, 10.0), &SolverConfig::default()).unwrap();
        let z = Complex64::new(0.0, 1e-6);
        let g = grid.evaluate(z).unwrap();
        let linear = Complex64::new(1.0, 0.0) - z;
        assert!((g - linear).norm() <= 1e-10);
    }

    #[test]
    fn invariant_matches_closed_form_at_half() {
        let cfg = SolverConfig::default();
        let g = solve_invariant(tf(0.5), Complex64::new(1.0, 0.0), &cfg).unwrap();
        assert!((g - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        let g = solve_invariant(tf(0.5), Complex64::new(0.0, 10.0), &cfg).unwrap();
        let exact = Complex64::new(1.0, -10.0) / 101.0;
        assert!((g - exact).norm() < 1e-8);
    }

    #[test]
    fn invariant_agrees_with_ray_interpolation() {
        let cfg = SolverConfig::default();
        let f = tf(0.3);
        let z = Complex64::new(5.0, 2.0);
        let ray = solve_ray(f, z * (10.0 / z.norm()), &cfg).unwrap();
        let a = ray.evaluate(z).unwrap();
        let b = solve_invariant(f, z, &cfg).unwrap();
        let tol = 10.0 * (cfg.tolerance + ray.interp_error_bound());
        assert!((a - b).norm() <= tol, "diff {:e} tol {tol:e}", (a - b).norm());
    }

    #[test]
    fn tail_exponent_fits() {
        let cfg = SolverConfig::default();
        // f = 0.5: |g| ~ |z|^-1 far out on the imaginary axis
        let grid = solve_ray(tf(0.5), Complex64::new(0.0, 1000.0), &cfg).unwrap();
        let alpha = grid.fit_tail_exponent(1.5).unwrap();
        assert!((alpha - 1.0).abs() < 0.02, "alpha={alpha}");
        // f = 0.1: alpha = -1/log2(0.9)
        let grid = solve_ray(tf(0.1), Complex64::new(0.0, 1000.0), &cfg).unwrap();
        let alpha = grid.fit_tail_exponent(1.5).unwrap();
        let expect = crate::moments::asymptotic_exponent(tf(0.1));
        assert!(
            (alpha - expect).abs() / expect < 0.02,
            "alpha={alpha} expect={expect}"
        );
    }

    #[test]
    fn rejects_tiny_arguments() {
        let cfg = SolverConfig::default();
        assert!(solve_ray(tf(0.5), Complex64::new(1e-5, 0.0), &cfg).is_err());
        assert!(solve_invariant(tf(0.5), Complex64::new(1e-5, 0.0), &cfg).is_err());
    }

    #[test]
    fn grid_overflow_is_reported() {
        let cfg = SolverConfig {
            max_grid_nodes: 100,
            ..SolverConfig::default()
        };
        match solve_ray(tf(0.5), Complex64::new(100.0, 0.0), &cfg) {
            Err(SolverError::GridOverflow { .. }) => {}
            other => panic!("expected GridOverflow, got {other:?}"),
        }
        // f near 1 makes the invariant k-extent huge
        match solve_invariant(tf(0.99), Complex64::new(100.0, 0.0), &cfg) {
            Err(SolverError::GridOverflow { .. }) => {}
            other => panic!("expected GridOverflow, got {other:?}"),
        }
    }

    #[test]
    fn csv_export_has_expected_shape() {
        let grid = solve_ray(tf(0.5), Complex64::new(1.0, 0.0), &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "log10_abs_z,re_g,im_g");
        assert_eq!(text.lines().count(), grid.len() + 1);
        let mut buf = Vec::new();
        grid.write_header_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["f"], 0.5);
        assert!(v["iterations"].as_u64().unwrap() > 0);
    }
}
