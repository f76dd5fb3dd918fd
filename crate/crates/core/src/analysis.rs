//! Distribution diagnostics: Boltzmann entropy, Kullback-Leibler
//! divergence, Lorenz curve and Gini coefficient, quadrature moments, and
//! detection of log-periodic oscillations.
//!
//! All diagnostics normalize their input to a unit-mean probability
//! density first, and use only trusted density values; values below the
//! trust floor contribute zero (the p log p -> 0 limit).

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty or invalid density: {0}")]
    InvalidDensity(String),
    #[error("{fraction:.3} of the probability mass lies below the trust floor")]
    UntrustedMass { fraction: f64 },
    #[error("density is positive at w = {w} where the reference vanishes")]
    SupportMismatch { w: f64 },
    #[error("tail truncation estimate {estimate:.3e} exceeds tolerance {tolerance:.3e}")]
    TailDominated { estimate: f64, tolerance: f64 },
    #[error("trusted density spans only {decades:.2} decades; at least 3 required")]
    InsufficientRange { decades: f64 },
}

/// A sampled density on a strictly increasing positive wealth grid, with
/// per-point trust flags. The common currency between the inversion,
/// simulation, and diagnostic layers.
#[derive(Debug, Clone)]
pub struct Density {
    w: Vec<f64>,
    p: Vec<f64>,
    trusted: Vec<bool>,
}

impl Density {
    pub fn new(w: Vec<f64>, p: Vec<f64>, trusted: Vec<bool>) -> Result<Self, AnalysisError> {
        if w.len() < 2 || w.len() != p.len() || w.len() != trusted.len() {
            return Err(AnalysisError::InvalidDensity(
                "need at least two matching (w, p, trusted) samples".into(),
            ));
        }
        if w[0] <= 0.0 || w.windows(2).any(|q| q[1] <= q[0]) {
            return Err(AnalysisError::InvalidDensity(
                "grid must be positive and strictly increasing".into(),
            ));
        }
        Ok(Self { w, p, trusted })
    }

    /// All points trusted.
    pub fn from_values(w: Vec<f64>, p: Vec<f64>) -> Result<Self, AnalysisError> {
        let trusted = vec![true; w.len()];
        Self::new(w, p, trusted)
    }

    /// Samples a closed-form density on a log grid.
    pub fn from_fn(
        lo: f64,
        hi: f64,
        n: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, AnalysisError> {
        let w = crate::inversion::log_grid(lo, hi, n);
        let p = w.iter().map(|&x| f(x)).collect();
        Self::from_values(w, p)
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn trusted(&self) -> &[bool] {
        &self.trusted
    }

    fn trusted_mass_fraction(&self) -> f64 {
        let mut total = 0.0;
        let mut untrusted = 0.0;
        for i in 1..self.w.len() {
            let seg = 0.5
                * (self.p[i].max(0.0) + self.p[i - 1].max(0.0))
                * (self.w[i] - self.w[i - 1]);
            if !seg.is_finite() {
                continue;
            }
            total += seg;
            if !(self.trusted[i] && self.trusted[i - 1]) {
                untrusted += seg;
            }
        }
        if total > 0.0 {
            untrusted / total
        } else {
            1.0
        }
    }

    /// Rescales to a unit-mass, unit-mean density q(x) = m p(m x) / mu0
    /// over the trusted region.
    pub fn unit_mean(&self) -> Result<Density, AnalysisError> {
        let mu0 = trusted_integral(self, 0);
        let mu1 = trusted_integral(self, 1);
        if !(mu0 > 0.0) || !(mu1 > 0.0) {
            return Err(AnalysisError::InvalidDensity(
                "density has no trusted mass".into(),
            ));
        }
        let mean = mu1 / mu0;
        let w: Vec<f64> = self.w.iter().map(|&x| x / mean).collect();
        let p: Vec<f64> = self.p.iter().map(|&y| y * mean / mu0).collect();
        Ok(Density {
            w,
            p,
            trusted: self.trusted.clone(),
        })
    }
}

impl From<&crate::inversion::WealthDistribution> for Density {
    fn from(d: &crate::inversion::WealthDistribution) -> Self {
        Density {
            w: d.w.clone(),
            p: d.p.clone(),
            trusted: d.trusted.clone(),
        }
    }
}

// Trapezoid integral of w^n p(w) over trusted segments, in log coordinates.
fn trusted_integral(d: &Density, n: i32) -> f64 {
    integral_with_stride(d, n, 1)
}

fn integral_with_stride(d: &Density, n: i32, stride: usize) -> f64 {
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for i in (0..d.w.len()).step_by(stride) {
        if !d.trusted[i] || !d.p[i].is_finite() {
            prev = None;
            continue;
        }
        let y = d.w[i].powi(n) * d.p[i] * d.w[i];
        let x = d.w[i].ln();
        if let Some((x0, y0)) = prev {
            acc += 0.5 * (y + y0) * (x - x0);
        }
        prev = Some((x, y));
    }
    acc
}

// Integral of h(w, p) over trusted segments with a Richardson estimate.
fn integrate_with_error(d: &Density, h: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let eval = |stride: usize| -> f64 {
        let mut acc = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for i in (0..d.w.len()).step_by(stride) {
            if !d.trusted[i] || !d.p[i].is_finite() {
                prev = None;
                continue;
            }
            let y = h(d.w[i], d.p[i]) * d.w[i];
            let x = d.w[i].ln();
            if let Some((x0, y0)) = prev {
                acc += 0.5 * (y + y0) * (x - x0);
            }
            prev = Some((x, y));
        }
        acc
    };
    let fine = eval(1);
    let coarse = eval(2);
    (fine, (fine - coarse).abs() / 3.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    /// Boltzmann entropy in nats of the unit-mean density.
    pub s: f64,
    /// Richardson quadrature error estimate.
    pub quad_error: f64,
    /// Spread of S under halved and doubled bin widths (histogram inputs).
    pub binning_spread: Option<f64>,
}

/// Boltzmann entropy S = -integral p log p dw of the unit-mean density.
/// Errors with UntrustedMass when more than 1% of the mass is below the
/// trust floor.
pub fn boltzmann_entropy(dist: &Density) -> Result<EntropyReport, AnalysisError> {
    let fraction = dist.trusted_mass_fraction();
    if fraction > 0.01 {
        return Err(AnalysisError::UntrustedMass { fraction });
    }
    let d = dist.unit_mean()?;
    let (s, quad_error) =
        integrate_with_error(&d, |_, p| if p > 0.0 { -p * p.ln() } else { 0.0 });
    Ok(EntropyReport {
        s,
        quad_error,
        binning_spread: None,
    })
}

/// Kullback-Leibler divergence D = integral p log(p/m) dw of the
/// unit-mean density against a reference density m.
pub fn kl_divergence(
    dist: &Density,
    reference: impl Fn(f64) -> f64,
) -> Result<f64, AnalysisError> {
    let d = dist.unit_mean()?;
    for i in 0..d.w.len() {
        if d.trusted[i] && d.p[i] > 0.0 && !(reference(d.w[i]) > 0.0) {
            return Err(AnalysisError::SupportMismatch { w: d.w[i] });
        }
    }
    let (v, _) = integrate_with_error(&d, |w, p| {
        if p > 0.0 {
            p * (p / reference(w)).ln()
        } else {
            0.0
        }
    });
    Ok(v)
}

/// KL divergence against the exponential reference e^{-w}; relates to the
/// Boltzmann entropy by D = 1 - S for unit-mean inputs.
pub fn kl_vs_exponential(dist: &Density) -> Result<f64, AnalysisError> {
    kl_divergence(dist, |w| (-w).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct GiniReport {
    /// Gini coefficient in [0, 1].
    pub g: f64,
    /// Lorenz curve samples (X cumulative population, L cumulative wealth).
    pub lorenz: Vec<(f64, f64)>,
}

impl GiniReport {
    pub fn write_lorenz_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,l")?;
        for (x, l) in &self.lorenz {
            writeln!(out, "{x},{l}")?;
        }
        Ok(())
    }
}

/// Gini coefficient G = 1 - 2 integral_0^1 L dX from the Lorenz curve of
/// the unit-mean density.
pub fn gini(dist: &Density) -> Result<GiniReport, AnalysisError> {
    let fraction = dist.trusted_mass_fraction();
    if fraction > 0.01 {
        return Err(AnalysisError::UntrustedMass { fraction });
    }
    let d = dist.unit_mean()?;
    // Cumulative population share X(w) and wealth share L(w).
    let mut xs = Vec::with_capacity(d.w.len());
    let mut ls = Vec::with_capacity(d.w.len());
    let mut x_acc = 0.0;
    let mut l_acc = 0.0;
    let mut prev: Option<(f64, f64, f64)> = None;
    for i in 0..d.w.len() {
        if !d.trusted[i] || !d.p[i].is_finite() {
            prev = None;
            continue;
        }
        let p = d.p[i].max(0.0);
        let u = d.w[i].ln();
        if let Some((u0, p0, w0)) = prev {
            x_acc += 0.5 * (p * d.w[i] + p0 * w0) * (u - u0);
            l_acc += 0.5 * (p * d.w[i] * d.w[i] + p0 * w0 * w0) * (u - u0);
        }
        prev = Some((u, p, d.w[i]));
        xs.push(x_acc);
        ls.push(l_acc);
    }
    let x_tot = *xs.last().unwrap_or(&0.0);
    let l_tot = *ls.last().unwrap_or(&0.0);
    if !(x_tot > 0.0) || !(l_tot > 0.0) {
        return Err(AnalysisError::InvalidDensity(
            "no trusted mass for the Lorenz curve".into(),
        ));
    }
    for v in xs.iter_mut() {
        *v /= x_tot;
    }
    for v in ls.iter_mut() {
        *v /= l_tot;
    }
    // G = 1 - 2 integral L dX over the normalized curve.
    let mut area = 0.0;
    for i in 1..xs.len() {
        area += 0.5 * (ls[i] + ls[i - 1]) * (xs[i] - xs[i - 1]);
    }
    let lorenz = xs.into_iter().zip(ls).collect();
    Ok(GiniReport {
        g: 1.0 - 2.0 * area,
        lorenz,
    })
}

/// Gini coefficient of a finite sample (used per simulation step).
pub fn gini_of_sorted_sample(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = sorted.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut weighted = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        weighted += (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * x;
    }
    weighted / (n as f64 * total)
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    /// Moment values 0..=n_max including head/tail extrapolation.
    pub values: Vec<f64>,
    /// Combined error estimates (quadrature + extrapolation uncertainty).
    pub errors: Vec<f64>,
    /// Analytic tail corrections that were added.
    pub tail_corrections: Vec<f64>,
    /// Analytic head corrections that were added.
    pub head_corrections: Vec<f64>,
}

// Linear least squares on (x, y) pairs; returns (intercept, slope).
fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (sy / n, 0.0);
    }
    let slope = (n * sxy - sx * sy) / denom;
    ((sy - slope * sx) / n, slope)
}

/// Moments integral w^n p dw by composite quadrature on the native grid,
/// with fitted power-law head and exponential tail corrections and a
/// truncation error estimate. Errors with TailDominated when the estimate
/// exceeds `rel_tolerance` of the moment value.
pub fn quadrature_moments(
    dist: &Density,
    n_max: usize,
    rel_tolerance: f64,
) -> Result<MomentReport, AnalysisError> {
    let idx: Vec<usize> = (0..dist.w.len())
        .filter(|&i| dist.trusted[i] && dist.p[i].is_finite() && dist.p[i] > 0.0)
        .collect();
    if idx.len() < 8 {
        return Err(AnalysisError::InvalidDensity(
            "fewer than 8 trusted points".into(),
        ));
    }
    let w_lo = dist.w[idx[0]];
    let w_hi = dist.w[*idx.last().unwrap()];

    // Fit p ~ C w^{alpha-1} over the first trusted decade.
    let head_pts: Vec<(f64, f64)> = idx
        .iter()
        .filter(|&&i| dist.w[i] <= w_lo * 10.0)
        .map(|&i| (dist.w[i].ln(), dist.p[i].ln()))
        .collect();
    // Fit p ~ C e^{-lambda w} over the last trusted decade.
    let tail_pts: Vec<(f64, f64)> = idx
        .iter()
        .filter(|&&i| dist.w[i] >= w_hi / 10.0)
        .map(|&i| (dist.w[i], dist.p[i].ln()))
        .collect();

    let p_lo = dist.p[idx[0]];
    let p_hi = dist.p[*idx.last().unwrap()];
    let mut values = Vec::with_capacity(n_max + 1);
    let mut errors = Vec::with_capacity(n_max + 1);
    let mut tails = Vec::with_capacity(n_max + 1);
    let mut heads = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let fine = integral_with_stride(dist, n as i32, 1);
        let coarse = integral_with_stride(dist, n as i32, 2);
        let disc_err = (fine - coarse).abs() / 3.0;

        // Head: integral_0^{w_lo} of w^n p with p ~ C w^{alpha-1} gives
        // p(w_lo) w_lo^{n+1} / (n + alpha).
        let (head, head_unc) = if head_pts.len() >= 4 {
            let (_, slope) = linear_fit(&head_pts);
            let alpha = slope + 1.0;
            if n as f64 + alpha > 0.1 {
                let corr = p_lo * w_lo.powi(n as i32 + 1) / (n as f64 + alpha);
                let (_, slope_h) = linear_fit(&head_pts[..head_pts.len() / 2]);
                let alt = p_lo * w_lo.powi(n as i32 + 1) / (n as f64 + slope_h + 1.0).max(0.1);
                (corr, (corr - alt).abs() + 0.01 * corr.abs())
            } else {
                // Fitted head is not integrable; surface it as uncertainty.
                (0.0, p_lo * w_lo.powi(n as i32) * w_lo)
            }
        } else {
            (0.0, p_lo * w_lo.powi(n as i32) * w_lo)
        };

        // Tail: integral_{w_hi}^inf of w^n p with p ~ p(w_hi) e^{-lambda(w - w_hi)}.
        let (tail, tail_unc) = if tail_pts.len() >= 4 {
            let (_, neg_lambda) = linear_fit(&tail_pts);
            let lambda = -neg_lambda;
            if lambda > 0.0 {
                let corr = p_hi * exp_tail_moment(w_hi, lambda, n);
                // Refit on the inner half of the window for the uncertainty.
                let (_, neg_l2) = linear_fit(&tail_pts[tail_pts.len() / 2..]);
                let l2 = (-neg_l2).max(lambda * 0.3);
                let alt = p_hi * exp_tail_moment(w_hi, l2, n);
                (corr, (corr - alt).abs() + 0.02 * corr.abs())
            } else {
                (0.0, p_hi * w_hi.powi(n as i32) * w_hi)
            }
        } else {
            (0.0, p_hi * w_hi.powi(n as i32) * w_hi)
        };

        let value = fine + head + tail;
        let error = disc_err + head_unc + tail_unc;
        if error > rel_tolerance * value.abs() {
            return Err(AnalysisError::TailDominated {
                estimate: error,
                tolerance: rel_tolerance * value.abs(),
            });
        }
        values.push(value);
        errors.push(error);
        tails.push(tail);
        heads.push(head);
    }
    Ok(MomentReport {
        values,
        errors,
        tail_corrections: tails,
        head_corrections: heads,
    })
}

// integral_{a}^inf w^n e^{-lambda(w-a)} dw / 1  (normalized so the density
// at a is 1): I_0 = 1/lambda; I_n = (a^n + n I_{n-1} ... ) / lambda.
fn exp_tail_moment(a: f64, lambda: f64, n: usize) -> f64 {
    let mut acc = 1.0 / lambda;
    for k in 1..=n {
        acc = (a.powi(k as i32) + k as f64 * acc) / lambda;
    }
    acc
}

/// Amplitude (in log10 density units) above which a detrended residual
/// counts as oscillatory.
pub const OSCILLATION_AMPLITUDE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct OscillationReport {
    pub is_oscillatory: bool,
    /// Mean peak spacing in decades of w, when at least two peaks exist.
    pub log10_period: Option<f64>,
    /// Peak locations in log10 w.
    pub peak_locations: Vec<f64>,
    /// Half peak-to-trough amplitude of the detrended residual (log10 p).
    pub amplitude: f64,
    /// Detrended residual samples (log10 w, residual log10 p).
    pub residual: Vec<(f64, f64)>,
}

impl OscillationReport {
    pub fn write_residual_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "log10_w,residual_log10_p")?;
        for (x, r) in &self.residual {
            writeln!(out, "{x},{r}")?;
        }
        Ok(())
    }
}

/// Detects log-periodic modulation of the density: detrends log10 p
/// against log10 w by moving local regression, then reports the mean
/// spacing of residual maxima in decades.
pub fn detect_oscillations(dist: &Density) -> Result<OscillationReport, AnalysisError> {
    let pts: Vec<(f64, f64)> = (0..dist.w.len())
        .filter(|&i| dist.trusted[i] && dist.p[i].is_finite() && dist.p[i] > 0.0)
        .map(|i| (dist.w[i].log10(), dist.p[i].log10()))
        .collect();
    if pts.is_empty() {
        return Err(AnalysisError::InvalidDensity("no trusted points".into()));
    }
    let span = pts.last().unwrap().0 - pts[0].0;
    if span < 3.0 {
        return Err(AnalysisError::InsufficientRange { decades: span });
    }
    // Resample onto a uniform log10 grid.
    let step = 0.01;
    let n = (span / step).floor() as usize + 1;
    let x0 = pts[0].0;
    let mut ys = Vec::with_capacity(n);
    let mut j = 0usize;
    for i in 0..n {
        let x = x0 + step * i as f64;
        while j + 1 < pts.len() && pts[j + 1].0 < x {
            j += 1;
        }
        let (xa, ya) = pts[j];
        let (xb, yb) = pts[(j + 1).min(pts.len() - 1)];
        let y = if xb > xa {
            ya + (yb - ya) * (x - xa) / (xb - xa)
        } else {
            ya
        };
        ys.push(y);
    }
    // Local linear detrend with a window wide enough to track the slow
    // power-law-plus-cutoff trend but not the modulation itself.
    let window = ((span / 3.0).clamp(1.2, 2.5) / step) as usize | 1;
    let half = window / 2;
    let mut residual = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let seg: Vec<(f64, f64)> = (lo..hi).map(|k| (x0 + step * k as f64, ys[k])).collect();
        let (a, b) = linear_fit(&seg);
        let x = x0 + step * i as f64;
        residual.push((x, ys[i] - (a + b * x)));
    }
    // Robust amplitude from the 5th and 95th percentiles.
    let mut sorted: Vec<f64> = residual.iter().map(|r| r.1).collect();
    sorted.sort_by(f64::total_cmp);
    let pct = |q: f64| sorted[((sorted.len() - 1) as f64 * q) as usize];
    let amplitude = 0.5 * (pct(0.95) - pct(0.05));

    // Peaks: local maxima over +-0.2 decades, prominent vs the amplitude.
    let guard = (0.2 / step) as usize;
    let mut peaks = Vec::new();
    for i in guard..n.saturating_sub(guard) {
        let r = residual[i].1;
        if r < 0.25 * amplitude {
            continue;
        }
        let is_max = (i - guard..i + guard + 1).all(|k| residual[k].1 <= r);
        if is_max {
            if let Some(&last) = peaks.last() {
                if residual[i].0 - residual[last as usize].0 < 0.3 {
                    continue;
                }
            }
            peaks.push(i as u32);
        }
    }
    let peak_locations: Vec<f64> = peaks.iter().map(|&i| residual[i as usize].0).collect();
    let log10_period = if peak_locations.len() >= 2 {
        let spans: Vec<f64> = peak_locations.windows(2).map(|p| p[1] - p[0]).collect();
        Some(spans.iter().sum::<f64>() / spans.len() as f64)
    } else {
        None
    };
    Ok(OscillationReport {
        is_oscillatory: amplitude >= OSCILLATION_AMPLITUDE_THRESHOLD
            && peak_locations.len() >= 2,
        log10_period,
        peak_locations,
        amplitude,
        residual,
    })
}

/// Entropy of a finite sample by Freedman-Diaconis binning, normalized to
/// unit mean first; the report carries the spread under halved and doubled
/// bin widths.
pub fn entropy_of_sample(sample: &[f64]) -> Result<EntropyReport, AnalysisError> {
    if sample.len() < 16 {
        return Err(AnalysisError::InvalidDensity(
            "sample too small for binned entropy".into(),
        ));
    }
    let n = sample.len();
    let mean = sample.iter().sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return Err(AnalysisError::InvalidDensity("nonpositive mean".into()));
    }
    let mut x: Vec<f64> = sample.iter().map(|&v| v / mean).collect();
    x.sort_by(f64::total_cmp);
    let iqr = x[(3 * n) / 4] - x[n / 4];
    let h_fd = 2.0 * iqr * (n as f64).powf(-1.0 / 3.0);
    let h_fd = if h_fd > 0.0 { h_fd } else { 1e-3 };
    let entropy_at = |h: f64| -> f64 {
        let max = *x.last().unwrap();
        let bins = (max / h).ceil() as usize + 1;
        let mut counts = vec![0usize; bins];
        for &v in &x {
            counts[(v / h) as usize] += 1;
        }
        let mut s = 0.0;
        for &c in &counts {
            if c > 0 {
                let p = c as f64 / (n as f64 * h);
                s -= p * p.ln() * h;
            }
        }
        s
    };
    let s = entropy_at(h_fd);
    let s_half = entropy_at(h_fd * 0.5);
    let s_double = entropy_at(h_fd * 2.0);
    let spread = (s - s_half).abs().max((s - s_double).abs());
    Ok(EntropyReport {
        s,
        quad_error: spread,
        binning_spread: Some(spread),
    })
}

/// One-sample Kolmogorov-Smirnov distance between a sorted sample and a
/// model CDF.
pub fn ks_distance(sorted_sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted_sample.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in sorted_sample.iter().enumerate() {
        let c = cdf(x);
        worst = worst.max((c - i as f64 / n).abs());
        worst = worst.max((c - (i as f64 + 1.0) / n).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_density() -> Density {
        // Start deep enough that the sub-grid head mass (~1e-8) stays
        // below the quadrature tolerances asserted here.
        Density::from_fn(1e-8, 40.0, 8000, |w| (-w).exp()).unwrap()
    }

    #[test]
    fn entropy_of_exponential_is_one() {
        let r = boltzmann_entropy(&exp_density()).unwrap();
        assert!((r.s - 1.0).abs() < 1e-6, "S = {}", r.s);
    }

    #[test]
    fn entropy_of_two_level_zero_start() {
        // p1 on [0,1], p2 on (1, w2] chosen for zero entropy.
        let w2 = 1.4215210252959332;
        let p1 = 1.0 - 1.0 / w2;
        let p2 = 1.0 / (w2 * (w2 - 1.0));
        let d = Density::from_fn(1e-4, w2, 20000, |w| if w <= 1.0 { p1 } else { p2 }).unwrap();
        let r = boltzmann_entropy(&d).unwrap();
        assert!(r.s.abs() < 1e-3, "S = {}", r.s);
    }

    #[test]
    fn kl_identity_against_exponential() {
        let d = exp_density();
        let dkl = kl_vs_exponential(&d).unwrap();
        assert!(dkl.abs() < 1e-6, "D = {dkl}");
        // 1 - S identity for a non-exponential density
        let d = Density::from_fn(1e-8, 80.0, 8000, |w| 0.5 * (-w * 0.5).exp()).unwrap();
        let s = boltzmann_entropy(&d).unwrap().s;
        let dkl = kl_vs_exponential(&d).unwrap();
        assert!((dkl - (1.0 - s)).abs() < 1e-5, "D={dkl} 1-S={}", 1.0 - s);
    }

    #[test]
    fn kl_support_mismatch() {
        let d = exp_density();
        let r = kl_divergence(&d, |w| if w < 5.0 { 1.0 } else { 0.0 });
        assert!(matches!(r, Err(AnalysisError::SupportMismatch { .. })));
    }

    #[test]
    fn gini_of_exponential_is_half() {
        let r = gini(&exp_density()).unwrap();
        assert!((r.g - 0.5).abs() < 1e-3, "G = {}", r.g);
        assert!((r.lorenz.first().unwrap().1).abs() < 1e-6);
        assert!((r.lorenz.last().unwrap().1 - 1.0).abs() < 1e-12);
        for (x, l) in &r.lorenz {
            assert!(*l <= *x + 1e-9, "Lorenz dominance violated at {x}");
        }
        let mut buf = Vec::new();
        r.write_lorenz_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,l\n"));
        assert_eq!(text.lines().count(), r.lorenz.len() + 1);
    }

    #[test]
    fn gini_of_narrow_peak_near_zero() {
        // Tight normal-ish peak at w = 1: near-perfect equality.
        let d = Density::from_fn(0.5, 1.6, 4000, |w| {
            (-(w - 1.0) * (w - 1.0) / (2.0 * 1e-4)).exp() / (1e-2 * (2.0 * std::f64::consts::PI).sqrt())
        })
        .unwrap();
        let r = gini(&d).unwrap();
        assert!(r.g < 0.01, "G = {}", r.g);
    }

    #[test]
    fn gini_of_sample_matches_continuous() {
        // Exponential sample via inverse CDF at fixed quantiles.
        let n = 20000;
        let sorted: Vec<f64> = (0..n)
            .map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln())
            .collect();
        let g = gini_of_sorted_sample(&sorted);
        assert!((g - 0.5).abs() < 1e-3, "G = {g}");
    }

    #[test]
    fn moments_of_exponential() {
        let d = exp_density();
        let r = quadrature_moments(&d, 2, 1e-4).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-6);
        assert!((r.values[1] - 1.0).abs() < 1e-6);
        assert!((r.values[2] - 2.0).abs() / 2.0 < 1e-5, "mu2 = {}", r.values[2]);
    }

    #[test]
    fn moments_tail_correction_works() {
        // Truncate the grid early so the analytic tail matters.
        let d = Density::from_fn(1e-4, 8.0, 2000, |w| (-w).exp()).unwrap();
        let r = quadrature_moments(&d, 2, 1e-2).unwrap();
        // Without the correction mu2 would miss ~integral_8^inf w^2 e^-w = 3e-2.
        assert!(r.tail_corrections[2] > 0.02);
        assert!((r.values[2] - 2.0).abs() / 2.0 < 1e-3, "mu2 = {}", r.values[2]);
    }

    #[test]
    fn moments_flag_tail_domination() {
        let d = Density::from_fn(0.01, 10.0, 500, |w| 1.0 / (1.0 + w * w)).unwrap();
        // Lorentzian second moment diverges; the estimate must blow up.
        assert!(matches!(
            quadrature_moments(&d, 2, 1e-6),
            Err(AnalysisError::TailDominated { .. }) | Err(AnalysisError::InvalidDensity(_))
        ));
    }

    #[test]
    fn oscillation_detection_on_synthetic_signal() {
        let d = Density::from_fn(1e-4, 10.0, 6000, |w| {
            let x = w.log10();
            w.powf(-1.0) * 10f64.powf(0.12 * (2.0 * std::f64::consts::PI * x).sin())
        })
        .unwrap();
        let r = detect_oscillations(&d).unwrap();
        assert!(r.is_oscillatory);
        let period = r.log10_period.unwrap();
        assert!((period - 1.0).abs() < 0.08, "period {period}");
        let mut buf = Vec::new();
        r.write_residual_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("log10_w,residual_log10_p\n"));
        assert_eq!(text.lines().count(), r.residual.len() + 1);
    }

    #[test]
    fn oscillation_rejects_smooth_density() {
        let d = Density::from_fn(1e-3, 30.0, 4000, |w| (-w).exp().max(1e-300)).unwrap();
        let r = detect_oscillations(&d).unwrap();
        assert!(!r.is_oscillatory, "amplitude {}", r.amplitude);
    }

    #[test]
    fn oscillation_requires_range() {
        let d = Density::from_fn(0.1, 10.0, 500, |w| (-w).exp()).unwrap();
        assert!(matches!(
            detect_oscillations(&d),
            Err(AnalysisError::InsufficientRange { .. })
        ));
    }

    #[test]
    fn untrusted_mass_rejected() {
        let w = crate::inversion::log_grid(0.1, 10.0, 100);
        let p: Vec<f64> = w.iter().map(|&x| (-x).exp()).collect();
        let mut trusted = vec![true; 100];
        for t in trusted.iter_mut().take(60).skip(20) {
            *t = false;
        }
        let d = Density::new(w, p, trusted).unwrap();
        assert!(matches!(
            boltzmann_entropy(&d),
            Err(AnalysisError::UntrustedMass { .. })
        ));
    }

    #[test]
    fn sample_entropy_close_to_continuous() {
        // Exponential quantile sample: S should be near 1.
        let n = 200000;
        let sample: Vec<f64> = (0..n)
            .map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln())
            .collect();
        let r = entropy_of_sample(&sample).unwrap();
        assert!((r.s - 1.0).abs() < 0.02, "S = {}", r.s);
        assert!(r.binning_spread.unwrap() < 0.05);
    }

    #[test]
    fn ks_distance_basics() {
        let n = 10000;
        let sorted: Vec<f64> = (0..n)
            .map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln())
            .collect();
        let d = ks_distance(&sorted, |x| 1.0 - (-x).exp());
        assert!(d < 0.01, "KS = {d}");
        let d = ks_distance(&sorted, |x| 1.0 - (-x * 2.0).exp());
        assert!(d > 0.1);
    }
}
