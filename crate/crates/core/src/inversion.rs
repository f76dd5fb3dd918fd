//! Numerical inversion of the Laplace transform g(z) back to the wealth
//! density p_s(w), via four algorithms (Euler, Talbot, Gaver-Stehfest,
//! Zakian) with cross-checking between methods.
//!
//! Documented oracle tolerances on the closed-form transform pairs over
//! w in [0.1, 10]: Euler and Talbot 1e-8 absolute, Stehfest 5e-4 (1e-4 on
//! the exponential pair, 1e-6 on 1/z), Zakian 1e-3. Euler samples only
//! Re(z) > 0; Talbot's contour dips into Re(z) < 0 and needs a
//! sector-capable evaluator, or it falls back to a shifted, truncated
//! contour with a ~1e-3 accuracy floor.
//!
//! All four methods carry an absolute error floor set by double-precision
//! cancellation (about 1e-11 for Euler, 1e-13 for Talbot at unit scale),
//! so relative accuracy degrades as the density approaches the trust
//! floor; cross-method agreement is meaningful well above it.

use std::f64::consts::{LN_10, PI};
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::moments::{ModelError, TaylorSeries, TransferFraction};
use crate::solver::{solve_invariant, solve_ray, RayGrid, SolverConfig, SolverError, TAYLOR_RADIUS};

#[derive(Debug, Error)]
pub enum InversionError {
    #[error("evaluator domain {domain:?} does not cover z = {z}")]
    EvalDomain { z: Complex64, domain: EvalDomain },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid wealth grid: {0}")]
    InvalidGrid(String),
    #[error("{failed} of {total} grid points failed to invert")]
    TooManyFailures { failed: usize, total: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Region of the complex plane where an evaluator is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EvalDomain {
    /// Only z real and positive.
    PositiveRealAxis,
    /// Re(z) > 0.
    PositiveHalfPlane,
    /// |arg z| <= half_angle.
    Sector { half_angle: f64 },
}

impl EvalDomain {
    /// Whether the domain contains rays up to |arg z| = `angle`.
    pub fn covers_angle(&self, angle: f64) -> bool {
        match self {
            EvalDomain::PositiveRealAxis => angle <= 1e-12,
            EvalDomain::PositiveHalfPlane => angle < PI / 2.0,
            EvalDomain::Sector { half_angle } => angle <= *half_angle,
        }
    }
}

/// An abstract Laplace-transform evaluation capability. Implementations
/// must be pure: equal arguments give equal values.
pub trait TransformEvaluator: Sync {
    fn eval(&self, z: Complex64) -> Result<Complex64, InversionError>;
    fn domain(&self) -> EvalDomain;
}

/// Wraps a closed-form transform for testing and cross-checks.
pub struct ClosedFormTransform<F: Fn(Complex64) -> Complex64 + Sync> {
    fun: F,
    domain: EvalDomain,
}

impl<F: Fn(Complex64) -> Complex64 + Sync> ClosedFormTransform<F> {
    pub fn new(fun: F) -> Self {
        Self {
            fun,
            domain: EvalDomain::Sector { half_angle: PI },
        }
    }

    pub fn with_domain(fun: F, domain: EvalDomain) -> Self {
        Self { fun, domain }
    }
}

impl<F: Fn(Complex64) -> Complex64 + Sync> TransformEvaluator for ClosedFormTransform<F> {
    fn eval(&self, z: Complex64) -> Result<Complex64, InversionError> {
        let angle = z.im.atan2(z.re).abs();
        if !self.domain.covers_angle(angle) {
            return Err(InversionError::EvalDomain {
                z,
                domain: self.domain,
            });
        }
        Ok((self.fun)(z))
    }

    fn domain(&self) -> EvalDomain {
        self.domain
    }
}

// ---------------------------------------------------------------------------
// Euler
// ---------------------------------------------------------------------------

/// Default Euler term count; chosen so double precision delivers about
/// eight significant digits at the density peak. The 10^{M/3} weight scale
/// amplifies roundoff, so pushing M higher degrades rather than helps.
pub const DEFAULT_EULER_TERMS: usize = 16;

fn euler_xi(m: usize) -> Vec<f64> {
    let mut xi = vec![1.0f64; 2 * m + 1];
    xi[0] = 0.5;
    let two_m = (0.5f64).powi(m as i32);
    xi[2 * m] = two_m;
    let mut binom = 1.0f64;
    for j in 1..m {
        binom = binom * (m - j + 1) as f64 / j as f64;
        xi[2 * m - j] = xi[2 * m - j + 1] + two_m * binom;
    }
    xi
}

/// Fourier-series inversion with Euler summation acceleration. Samples g
/// only in the positive half-plane, at nodes (M ln10 / 3 + i pi k) / w.
pub fn euler_invert(
    g: &dyn TransformEvaluator,
    w: f64,
    terms: usize,
) -> Result<f64, InversionError> {
    if !(w > 0.0) {
        return Err(InversionError::InvalidParameter(format!(
            "w must be positive, got {w}"
        )));
    }
    if terms < 2 {
        return Err(InversionError::InvalidParameter(
            "euler needs at least 2 terms".into(),
        ));
    }
    let m = terms;
    let a = m as f64 * LN_10 / 3.0;
    let max_angle = (PI * (2 * m) as f64).atan2(a);
    if !g.domain().covers_angle(max_angle) {
        return Err(InversionError::EvalDomain {
            z: Complex64::new(a, PI * (2 * m) as f64) / w,
            domain: g.domain(),
        });
    }
    let xi = euler_xi(m);
    // Neumaier-compensated sum; the 10^{M/3} prefactor amplifies roundoff.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (k, &xik) in xi.iter().enumerate() {
        let z = Complex64::new(a, PI * k as f64) / w;
        let val = g.eval(z)?.re;
        let term = if k % 2 == 0 { xik * val } else { -xik * val };
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    Ok(10f64.powf(m as f64 / 3.0) * (sum + comp) / w)
}

// ---------------------------------------------------------------------------
// Talbot
// ---------------------------------------------------------------------------

/// Default Talbot term count; the double-precision optimum. Larger M
/// amplifies roundoff through the e^{2M/5} weight scale faster than it
/// buys truncation.
pub const DEFAULT_TALBOT_TERMS: usize = 20;

// Contour terms whose weight magnitude e^{Re delta} falls below this are
// dropped; their contribution is below double precision.
const TALBOT_WEIGHT_CUTOFF: f64 = 1e-20;

struct TalbotNode {
    delta: Complex64,
    gamma: Complex64,
}

fn talbot_nodes(m: usize) -> Vec<TalbotNode> {
    let mf = m as f64;
    let mut nodes = Vec::with_capacity(m);
    nodes.push(TalbotNode {
        delta: Complex64::new(0.4 * mf, 0.0),
        gamma: Complex64::new(0.5 * (0.4 * mf).exp(), 0.0),
    });
    for k in 1..m {
        let theta = k as f64 * PI / mf;
        let cot = theta.cos() / theta.sin();
        let delta = 0.4 * k as f64 * PI * Complex64::new(cot, 1.0);
        if delta.re < TALBOT_WEIGHT_CUTOFF.ln() {
            break;
        }
        let poly = Complex64::new(1.0, theta * (1.0 + cot * cot) - cot);
        nodes.push(TalbotNode {
            delta,
            gamma: poly * delta.exp(),
        });
    }
    nodes
}

/// Deformed-contour inversion after Talbot, in the fixed-contour form with
/// M nodes. Far-left nodes with negligible weight are dropped; when the
/// evaluator cannot leave the positive half-plane the contour is truncated
/// and shifted right, trading accuracy (~1e-3 floor) for domain safety.
pub fn talbot_invert(
    g: &dyn TransformEvaluator,
    w: f64,
    terms: usize,
) -> Result<f64, InversionError> {
    if !(w > 0.0) {
        return Err(InversionError::InvalidParameter(format!(
            "w must be positive, got {w}"
        )));
    }
    if terms < 4 {
        return Err(InversionError::InvalidParameter(
            "talbot needs at least 4 terms".into(),
        ));
    }
    let nodes = talbot_nodes(terms);
    let max_angle = nodes
        .last()
        .map(|n| n.delta.im.atan2(n.delta.re).abs())
        .unwrap_or(0.0);
    if g.domain().covers_angle(max_angle) {
        let mut sum = 0.0f64;
        for n in &nodes {
            sum += (n.gamma * g.eval(n.delta / w)?).re;
        }
        return Ok(0.4 * sum / w);
    }
    // Shifted fallback: keep nodes the domain can reach after a right
    // shift sigma, drop the rest, and undo device by the e^{sigma w} factor.
    let keep_threshold = -18.0f64;
    let kept: Vec<&TalbotNode> = nodes.iter().filter(|n| n.delta.re >= keep_threshold).collect();
    let min_re = kept.iter().map(|n| n.delta.re).fold(f64::INFINITY, f64::min);
    let sigma = (0.5 - min_re) / w;
    let max_kept_angle = kept
        .iter()
        .map(|n| {
            let z = n.delta / w + sigma;
            z.im.atan2(z.re).abs()
        })
        .fold(0.0, f64::max);
    if !g.domain().covers_angle(max_kept_angle) {
        return Err(InversionError::EvalDomain {
            z: kept.last().map(|n| n.delta / w + sigma).unwrap_or_default(),
            domain: g.domain(),
        });
    }
    let mut sum = 0.0f64;
    for n in &kept {
        sum += (n.gamma * g.eval(n.delta / w + sigma)?).re;
    }
    Ok((sigma * w).exp() * 0.4 * sum / w)
}

// ---------------------------------------------------------------------------
// Gaver-Stehfest
// ---------------------------------------------------------------------------

/// Default (even) Gaver-Stehfest order.
pub const DEFAULT_STEHFEST_ORDER: usize = 14;

fn stehfest_weights(order: usize) -> Vec<f64> {
    let half = order / 2;
    let fact = |n: usize| -> i128 { (1..=n as i128).product::<i128>().max(1) };
    let mut v = Vec::with_capacity(order);
    for k in 1..=order {
        let mut sum = 0.0f64;
        let j_lo = k.div_ceil(2);
        let j_hi = k.min(half);
        for j in j_lo..=j_hi {
            let num = (j as i128).pow(half as u32) * fact(2 * j);
            let den = fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k);
            sum += num as f64 / den as f64;
        }
        let sign = if (half + k).is_multiple_of(2) { 1.0 } else { -1.0 };
        v.push(sign * sum);
    }
    v
}

/// Gaver-Stehfest inversion: real-axis sampling at nodes k ln2 / w with
/// alternating rational weights. Less accurate than Euler or Talbot.
pub fn stehfest_invert(
    g: &dyn TransformEvaluator,
    w: f64,
    order: usize,
) -> Result<f64, InversionError> {
    if !(w > 0.0) {
        return Err(InversionError::InvalidParameter(format!(
            "w must be positive, got {w}"
        )));
    }
    if order < 2 || !order.is_multiple_of(2) || order > 30 {
        return Err(InversionError::InvalidParameter(format!(
            "stehfest order must be even and in [2, 30], got {order}"
        )));
    }
    let ln2_w = std::f64::consts::LN_2 / w;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (k, vk) in stehfest_weights(order).iter().enumerate() {
        let z = Complex64::new((k + 1) as f64 * ln2_w, 0.0);
        let term = vk * g.eval(z)?.re;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    Ok(ln2_w * (sum + comp))
}

// ---------------------------------------------------------------------------
// Zakian
// ---------------------------------------------------------------------------

// Five conjugate-pair nodes of Zakian's method; the residues below solve
// the ten moment conditions sum_i 2 Re[K_i j! / alpha_i^{j+1}] = 1 for
// j = 0..9, which make the rule exact on polynomials through degree 9.
const ZAKIAN_ALPHA: [Complex64; 5] = [
    Complex64::new(12.837_676_75, 1.666_063_445),
    Complex64::new(12.226_132_09, 5.012_718_792),
    Complex64::new(10.934_303_08, 8.409_673_116),
    Complex64::new(8.776_434_715, 11.921_853_89),
    Complex64::new(5.225_453_361, 15.729_529_05),
];
const ZAKIAN_K: [Complex64; 5] = [
    Complex64::new(-36_902.076_374_179_01, 196_990.418_503_190_2),
    Complex64::new(61_277.019_725_369_04, -95_408.628_311_760_88),
    Complex64::new(-28_916.563_788_926_79, 18_169.187_868_271_46),
    Complex64::new(4_655.361_815_839_332, -1.901_256_394_137_757_4),
    Complex64::new(-118.741_334_044_822_68, -141.303_770_351_438_6),
];

/// Zakian's five-constant inversion; narrow accuracy range but cheap.
pub fn zakian_invert(g: &dyn TransformEvaluator, w: f64) -> Result<f64, InversionError> {
    if !(w > 0.0) {
        return Err(InversionError::InvalidParameter(format!(
            "w must be positive, got {w}"
        )));
    }
    let max_angle = ZAKIAN_ALPHA
        .iter()
        .map(|a| a.im.atan2(a.re).abs())
        .fold(0.0, f64::max);
    if !g.domain().covers_angle(max_angle) {
        return Err(InversionError::EvalDomain {
            z: ZAKIAN_ALPHA[4] / w,
            domain: g.domain(),
        });
    }
    let mut sum = 0.0f64;
    for (alpha, k) in ZAKIAN_ALPHA.iter().zip(ZAKIAN_K.iter()) {
        sum += (k * g.eval(alpha / w)?).re;
    }
    Ok(2.0 * sum / w)
}

// ---------------------------------------------------------------------------
// Solver-backed evaluator for the giver transform
// ---------------------------------------------------------------------------

/// Largest |arg z| the solver-backed evaluator claims; the iteration keeps
/// converging into the negative half-plane but degrades near the negative
/// real axis where g has complicated structure.
pub const GIVER_SECTOR_HALF_ANGLE: f64 = 2.75;

/// g(z) for the giver scheme, backed by pre-solved ray grids with a
/// per-argument invariant-grid fallback.
pub struct GiverTransform {
    f: TransferFraction,
    config: SolverConfig,
    taylor: TaylorSeries,
    rays: Vec<RayGrid>,
    domain: EvalDomain,
}

impl GiverTransform {
    /// No pre-solved rays; every evaluation runs the invariant grid.
    pub fn new(f: TransferFraction, config: SolverConfig) -> Result<Self, InversionError> {
        let taylor = TaylorSeries::new(f, config.taylor_terms)?;
        Ok(Self {
            f,
            config,
            taylor,
            rays: Vec::new(),
            domain: EvalDomain::Sector {
                half_angle: GIVER_SECTOR_HALF_ANGLE,
            },
        })
    }

    /// Pre-solves one ray per direction out to `abs_max`; directions are
    /// solved in parallel. Rays that fail to converge are dropped so the
    /// invariant fallback covers them.
    pub fn with_rays(
        f: TransferFraction,
        directions: &[f64],
        abs_max: f64,
        config: SolverConfig,
    ) -> Result<Self, InversionError> {
        let mut me = Self::new(f, config)?;
        let solved: Vec<Result<RayGrid, SolverError>> = directions
            .par_iter()
            .map(|&theta| solve_ray(f, Complex64::from_polar(abs_max, theta), &config))
            .collect();
        for r in solved {
            match r {
                Ok(grid) => me.rays.push(grid),
                Err(SolverError::NonConverged { .. }) | Err(SolverError::DivisionGuard { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(me)
    }

    /// Pre-solves the rays an inversion method will sample when inverting
    /// at wealths down to `w_min`.
    pub fn for_method(
        f: TransferFraction,
        method: InversionMethod,
        cfg: &InversionConfig,
        w_min: f64,
        solver: SolverConfig,
    ) -> Result<Self, InversionError> {
        if !(w_min > 0.0) {
            return Err(InversionError::InvalidParameter(format!(
                "w_min must be positive, got {w_min}"
            )));
        }
        let (angles, abs_max) = method_node_geometry(method, cfg);
        // Headroom keeps interpolation queries away from the grid edge.
        let abs_max = abs_max / w_min * 1.25;
        Self::with_rays(f, &angles, abs_max, solver)
    }

    pub fn f(&self) -> TransferFraction {
        self.f
    }

    pub fn rays(&self) -> &[RayGrid] {
        &self.rays
    }

    /// Restricts the declared domain (e.g. to the positive half-plane).
    pub fn restrict_domain(mut self, domain: EvalDomain) -> Self {
        self.domain = domain;
        self
    }
}

/// Node directions and the largest node modulus at w = 1 for a method.
fn method_node_geometry(method: InversionMethod, cfg: &InversionConfig) -> (Vec<f64>, f64) {
    match method {
        InversionMethod::Euler => {
            let m = cfg.euler_terms;
            let a = m as f64 * LN_10 / 3.0;
            let angles: Vec<f64> = (0..=2 * m).map(|k| (PI * k as f64).atan2(a)).collect();
            let abs_max = Complex64::new(a, PI * (2 * m) as f64).norm();
            (angles, abs_max)
        }
        InversionMethod::Talbot => {
            let nodes = talbot_nodes(cfg.talbot_terms);
            let angles: Vec<f64> = nodes
                .iter()
                .map(|n| n.delta.im.atan2(n.delta.re))
                .collect();
            let abs_max = nodes.iter().map(|n| n.delta.norm()).fold(0.0, f64::max);
            (angles, abs_max)
        }
        InversionMethod::Stehfest => {
            let abs_max = cfg.stehfest_order as f64 * std::f64::consts::LN_2;
            (vec![0.0], abs_max)
        }
        InversionMethod::Zakian => {
            let angles: Vec<f64> = ZAKIAN_ALPHA.iter().map(|a| a.im.atan2(a.re)).collect();
            let abs_max = ZAKIAN_ALPHA.iter().map(|a| a.norm()).fold(0.0, f64::max);
            (angles, abs_max)
        }
    }
}

impl TransformEvaluator for GiverTransform {
    fn eval(&self, z: Complex64) -> Result<Complex64, InversionError> {
        if z.norm() < TAYLOR_RADIUS {
            return Ok(self.taylor.eval(z));
        }
        let angle = z.im.atan2(z.re);
        if !self.domain.covers_angle(angle.abs()) {
            return Err(InversionError::EvalDomain {
                z,
                domain: self.domain,
            });
        }
        for ray in &self.rays {
            if (angle - ray.theta()).abs() < 1e-12 && z.norm() <= ray.max_abs_z() * (1.0 + 1e-12) {
                return Ok(ray.evaluate(z)?);
            }
        }
        Ok(solve_invariant(self.f, z, &self.config)?)
    }

    fn domain(&self) -> EvalDomain {
        self.domain
    }
}

// ---------------------------------------------------------------------------
// Distribution-level inversion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InversionMethod {
    Euler,
    Talbot,
    Stehfest,
    Zakian,
}

impl std::fmt::Display for InversionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            InversionMethod::Euler => "euler",
            InversionMethod::Talbot => "talbot",
            InversionMethod::Stehfest => "stehfest",
            InversionMethod::Zakian => "zakian",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for InversionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(InversionMethod::Euler),
            "talbot" => Ok(InversionMethod::Talbot),
            "stehfest" => Ok(InversionMethod::Stehfest),
            "zakian" => Ok(InversionMethod::Zakian),
            other => Err(format!("unknown inversion method '{other}'")),
        }
    }
}

/// Density level below which inversion output is truncation noise.
pub const DEFAULT_TRUST_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct InversionConfig {
    pub method: InversionMethod,
    pub cross_check: Option<InversionMethod>,
    pub euler_terms: usize,
    pub talbot_terms: usize,
    pub stehfest_order: usize,
    pub trust_floor: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            method: InversionMethod::Euler,
            cross_check: None,
            euler_terms: DEFAULT_EULER_TERMS,
            talbot_terms: DEFAULT_TALBOT_TERMS,
            stehfest_order: DEFAULT_STEHFEST_ORDER,
            trust_floor: DEFAULT_TRUST_FLOOR,
        }
    }
}

/// Inverts with one method at one wealth.
pub fn invert_at(
    g: &dyn TransformEvaluator,
    w: f64,
    method: InversionMethod,
    cfg: &InversionConfig,
) -> Result<f64, InversionError> {
    match method {
        InversionMethod::Euler => euler_invert(g, w, cfg.euler_terms),
        InversionMethod::Talbot => talbot_invert(g, w, cfg.talbot_terms),
        InversionMethod::Stehfest => stehfest_invert(g, w, cfg.stehfest_order),
        InversionMethod::Zakian => zakian_invert(g, w),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheckStats {
    pub method: InversionMethod,
    pub compared: usize,
    pub max_rel_diff: f64,
}

/// A sampled wealth density on an increasing grid. Values below the trust
/// floor are flagged rather than silently used.
#[derive(Debug, Clone)]
pub struct WealthDistribution {
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub trusted: Vec<bool>,
    pub method: InversionMethod,
    pub trust_floor: f64,
    pub cross_check: Option<CrossCheckStats>,
    /// Raw quadrature moments (mu0, mu1, mu2) over the trusted region.
    pub moments: [f64; 3],
    /// Model parameter, when the transform came from the giver scheme.
    pub f: Option<f64>,
}

#[derive(Serialize)]
struct DistributionSidecar<'a> {
    f: Option<f64>,
    method: InversionMethod,
    trust_floor: f64,
    cross_check: &'a Option<CrossCheckStats>,
    mu0: f64,
    mu1: f64,
    mu2: f64,
    points: usize,
    trusted_points: usize,
}

impl WealthDistribution {
    /// CSV with columns w, p, trusted_flag, method.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "w,p,trusted_flag,method")?;
        for i in 0..self.w.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.w[i],
                self.p[i],
                u8::from(self.trusted[i]),
                self.method
            )?;
        }
        Ok(())
    }

    /// JSON sidecar with the run parameters and quadrature moments.
    pub fn write_sidecar_json<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let side = DistributionSidecar {
            f: self.f,
            method: self.method,
            trust_floor: self.trust_floor,
            cross_check: &self.cross_check,
            mu0: self.moments[0],
            mu1: self.moments[1],
            mu2: self.moments[2],
            points: self.w.len(),
            trusted_points: self.trusted.iter().filter(|t| **t).count(),
        };
        let text = serde_json::to_string_pretty(&side)?;
        writeln!(out, "{text}")?;
        Ok(())
    }
}

/// Logarithmically spaced grid of `n` points covering [lo, hi].
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let l0 = lo.ln();
    let l1 = hi.ln();
    (0..n)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Inverts the transform on a whole wealth grid, optionally re-inverting
/// with a second method as a cross-check. Individual point failures are
/// flagged; the call fails only if more than 10% of points error out.
pub fn invert_distribution(
    g: &dyn TransformEvaluator,
    w_grid: &[f64],
    cfg: &InversionConfig,
) -> Result<WealthDistribution, InversionError> {
    if w_grid.len() < 2 {
        return Err(InversionError::InvalidGrid(
            "need at least 2 grid points".into(),
        ));
    }
    if w_grid[0] <= 0.0 || w_grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(InversionError::InvalidGrid(
            "grid must be positive and strictly increasing".into(),
        ));
    }
    let results: Vec<Result<f64, InversionError>> = w_grid
        .par_iter()
        .map(|&w| invert_at(g, w, cfg.method, cfg))
        .collect();
    let total = results.len();
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed * 10 > total {
        return Err(InversionError::TooManyFailures { failed, total });
    }
    let p: Vec<f64> = results
        .into_iter()
        .map(|r| r.unwrap_or(f64::NAN))
        .collect();
    let trusted: Vec<bool> = p
        .iter()
        .map(|&v| v.is_finite() && v >= cfg.trust_floor)
        .collect();

    let cross_check = if let Some(second) = cfg.cross_check {
        let other: Vec<Result<f64, InversionError>> = w_grid
            .par_iter()
            .map(|&w| invert_at(g, w, second, cfg))
            .collect();
        let mut max_rel = 0.0f64;
        let mut compared = 0usize;
        for i in 0..total {
            if let Ok(q) = other[i] {
                if trusted[i] && q >= cfg.trust_floor {
                    max_rel = max_rel.max((p[i] - q).abs() / p[i].abs().max(q.abs()));
                    compared += 1;
                }
            }
        }
        Some(CrossCheckStats {
            method: second,
            compared,
            max_rel_diff: max_rel,
        })
    } else {
        None
    };

    // Raw trapezoid moments over the trusted region, in log coordinates.
    let mut moments = [0.0f64; 3];
    for (n, slot) in moments.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for i in 1..total {
            if trusted[i] && trusted[i - 1] {
                let (w0, w1) = (w_grid[i - 1], w_grid[i]);
                let y0 = w0.powi(n as i32) * p[i - 1] * w0;
                let y1 = w1.powi(n as i32) * p[i] * w1;
                acc += 0.5 * (y0 + y1) * (w1.ln() - w0.ln());
            }
        }
        *slot = acc;
    }

    Ok(WealthDistribution {
        w: w_grid.to_vec(),
        p,
        trusted,
        method: cfg.method,
        trust_floor: cfg.trust_floor,
        cross_check,
        moments,
        f: None,
    })
}

/// Probes the wealth range over which the steady-state density stays
/// above about a tenth of the trust floor. The lower edge is probed only
/// for f < 1/2; for f >= 1/2 the density diverges at w = 0 and the caller
/// picks the depth it needs.
pub fn trusted_range(
    f: TransferFraction,
    cfg: &InversionConfig,
    solver: SolverConfig,
) -> Result<(Option<f64>, f64), InversionError> {
    let g = GiverTransform::new(f, solver)?;
    let threshold = cfg.trust_floor * 0.1;
    let probe = |w: f64| -> f64 { euler_invert(&g, w, cfg.euler_terms).unwrap_or(f64::NAN) };
    let mut hi = 4.0;
    while probe(hi) >= threshold && hi < 65_536.0 {
        hi *= 2.0;
    }
    let lo = if crate::moments::asymptotic_exponent(f) > 1.0 {
        let mut lo = 0.5;
        while probe(lo) >= threshold && lo > 1e-12 {
            lo *= 0.5;
        }
        Some(lo)
    } else {
        None
    };
    Ok((lo, hi))
}

/// End-to-end steady state: probes the trusted range, builds a log grid at
/// `points_per_decade`, and inverts. `w_lo` overrides the lower edge,
/// which is required for f >= 1/2 where the density diverges at zero.
pub fn steady_distribution(
    f: TransferFraction,
    w_lo: Option<f64>,
    points_per_decade: usize,
    cfg: &InversionConfig,
    solver: SolverConfig,
) -> Result<WealthDistribution, InversionError> {
    let (lo_probe, hi) = trusted_range(f, cfg, solver)?;
    let lo = w_lo
        .or(lo_probe)
        .ok_or_else(|| InversionError::InvalidParameter(
            "f >= 1/2 has a divergent density at w = 0; pass an explicit lower edge".into(),
        ))?;
    let decades = (hi / lo).log10();
    let n = ((decades * points_per_decade as f64).ceil() as usize).max(16) + 1;
    let grid = log_grid(lo, hi, n);
    invert_giver_distribution(f, &grid, cfg, solver)
}

/// Like `steady_distribution` but with the interpolation-free
/// invariant-grid backend per node instead of pre-solved rays. Slower per
/// evaluation but robust at extreme f, where the ray sweep crawls.
pub fn steady_distribution_invariant(
    f: TransferFraction,
    w_lo: Option<f64>,
    points_per_decade: usize,
    cfg: &InversionConfig,
    solver: SolverConfig,
) -> Result<WealthDistribution, InversionError> {
    let (lo_probe, hi) = trusted_range(f, cfg, solver)?;
    let lo = w_lo
        .or(lo_probe)
        .ok_or_else(|| InversionError::InvalidParameter(
            "f >= 1/2 has a divergent density at w = 0; pass an explicit lower edge".into(),
        ))?;
    let decades = (hi / lo).log10();
    let n = ((decades * points_per_decade as f64).ceil() as usize).max(16) + 1;
    let grid = log_grid(lo, hi, n);
    let g = GiverTransform::new(f, solver)?;
    let mut dist = invert_distribution(&g, &grid, cfg)?;
    dist.f = Some(f.value());
    Ok(dist)
}

/// Convenience pipeline: prepare a solver-backed evaluator for `f` and
/// invert over the grid, stamping f into the result.
pub fn invert_giver_distribution(
    f: TransferFraction,
    w_grid: &[f64],
    cfg: &InversionConfig,
    solver: SolverConfig,
) -> Result<WealthDistribution, InversionError> {
    if w_grid.is_empty() {
        return Err(InversionError::InvalidGrid("empty grid".into()));
    }
    let w_min = w_grid[0];
    if !(w_min > 0.0) {
        return Err(InversionError::InvalidGrid(
            "grid must be positive".into(),
        ));
    }
    // Pre-solve the rays both the primary and the cross-check method will
    // sample; anything else falls back to the invariant grid.
    let (mut angles, mut abs_max) = method_node_geometry(cfg.method, cfg);
    if let Some(second) = cfg.cross_check {
        let (more, amax) = method_node_geometry(second, cfg);
        angles.extend(more);
        abs_max = abs_max.max(amax);
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    // Rays cover wealths down to 1e-6; deeper grid points (divergent-head
    // integrations) fall back to the invariant grid per node, which keeps
    // ray storage bounded.
    let w_ray = w_min.max(1e-6);
    let g = GiverTransform::with_rays(f, &angles, abs_max / w_ray * 1.25, solver)?;
    let mut dist = invert_distribution(&g, w_grid, cfg)?;
    dist.f = Some(f.value());
    Ok(dist)
}
