//! Exact analytic quantities of the giver scheme: steady-state moment
//! recursion, Taylor expansion of the transform near zero, variance
//! evolution, relaxation time, and the small-wealth tail exponent.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("transfer fraction must satisfy 0 < f < 1, got {0}")]
    FractionOutOfRange(f64),
    #[error("moment order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("moment recursion overflowed at order {0}")]
    MomentOverflow(usize),
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("initial second moment must be at least 1 under unit mean, got {0}")]
    InvalidInitialMoment(f64),
}

/// The single model parameter f: the fraction of the giver's wealth
/// transferred per exchange. Valid strictly inside (0, 1); both endpoints
/// are degenerate (f = 0 freezes the dynamics, f = 1 has no proper limit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferFraction(f64);

impl TransferFraction {
    pub fn new(f: f64) -> Result<Self, ModelError> {
        if f.is_finite() && f > 0.0 && f < 1.0 {
            Ok(Self(f))
        } else {
            Err(ModelError::FractionOutOfRange(f))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// 1 - f, the fraction the giver retains.
    pub fn complement(self) -> f64 {
        1.0 - self.0
    }

    /// Steady-state variance f/(1-f) of the unit-mean distribution.
    pub fn steady_variance(self) -> f64 {
        self.0 / (1.0 - self.0)
    }
}

/// Steady-state moments a[n] of the unit-mean wealth distribution,
/// with a[0] = 1 and a[1] = 1.
#[derive(Debug, Clone)]
pub struct MomentSequence {
    f: TransferFraction,
    a: Vec<f64>,
}

impl MomentSequence {
    pub fn f(&self) -> TransferFraction {
        self.f
    }

    /// The n-th steady-state moment; panics if n exceeds the computed order.
    pub fn moment(&self, n: usize) -> f64 {
        self.a[n]
    }

    pub fn order(&self) -> usize {
        self.a.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }
}

/// Computes a[0..=n_max] from the steady-state recursion
///
///   a_n = sum_{k=1}^{n-1} C(n,k) f^k a_k a_{n-k} / (1 - f^n - (1-f)^n)
///
/// seeded by a_0 = 1 and a_1 = 1.
pub fn steady_moments(f: TransferFraction, n_max: usize) -> Result<MomentSequence, ModelError> {
    if n_max < 1 {
        return Err(ModelError::InvalidOrder(n_max));
    }
    let fv = f.value();
    let gv = f.complement();
    let mut a = Vec::with_capacity(n_max + 1);
    a.push(1.0);
    a.push(1.0);
    // Pascal row holds C(n, k); updated in place per order.
    let mut binom = vec![0.0f64; n_max + 1];
    binom[0] = 1.0;
    binom[1] = 1.0;
    let mut f_n = fv;
    let mut g_n = gv;
    for n in 2..=n_max {
        for k in (1..n).rev() {
            binom[k] += binom[k - 1];
        }
        binom[n] = 1.0;
        f_n *= fv;
        g_n *= gv;
        let denom = 1.0 - f_n - g_n;
        if denom <= 0.0 || !denom.is_finite() {
            return Err(ModelError::MomentOverflow(n));
        }
        let mut sum = 0.0;
        let mut f_k = 1.0;
        for k in 1..n {
            f_k *= fv;
            sum += binom[k] * f_k * a[k] * a[n - k];
        }
        let an = sum / denom;
        if !an.is_finite() {
            return Err(ModelError::MomentOverflow(n));
        }
        a.push(an);
    }
    Ok(MomentSequence { f, a })
}

/// Truncated Taylor expansion of the Laplace transform g(z) about z = 0,
/// precomputed for repeated evaluation at small |z|.
#[derive(Debug, Clone)]
pub struct TaylorSeries {
    // c[n] = a_n / n!, applied to powers of (-z)
    coeffs: Vec<f64>,
}

impl TaylorSeries {
    pub fn new(f: TransferFraction, n_terms: usize) -> Result<Self, ModelError> {
        let moments = steady_moments(f, n_terms)?;
        let mut coeffs = Vec::with_capacity(n_terms + 1);
        let mut fact = 1.0;
        for n in 0..=n_terms {
            if n > 0 {
                fact *= n as f64;
            }
            let c = moments.moment(n) / fact;
            if !c.is_finite() {
                return Err(ModelError::MomentOverflow(n));
            }
            coeffs.push(c);
        }
        Ok(Self { coeffs })
    }

    /// Evaluates sum_n a_n (-z)^n / n! by Horner's rule.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let w = -z;
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * w + c;
        }
        acc
    }

    pub fn terms(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// One-shot Taylor evaluation of g(z); intended for |z| < 1e-4 where the
/// truncated series is accurate to working precision.
pub fn taylor_eval(
    f: TransferFraction,
    z: Complex64,
    n_terms: usize,
) -> Result<Complex64, ModelError> {
    if n_terms < 1 {
        return Err(ModelError::InvalidOrder(n_terms));
    }
    Ok(TaylorSeries::new(f, n_terms)?.eval(z))
}

/// Variance of the wealth distribution at time t under unit mean:
///
///   sigma^2(t) = (mu2(0) - 1/(1-f)) exp(-f(1-f)t) + f/(1-f)
pub fn variance_evolution(
    f: TransferFraction,
    mu2_initial: f64,
    t: f64,
) -> Result<f64, ModelError> {
    if !(t >= 0.0) {
        return Err(ModelError::NegativeTime(t));
    }
    if !(mu2_initial >= 1.0) {
        return Err(ModelError::InvalidInitialMoment(mu2_initial));
    }
    let fv = f.value();
    let mu2_s = 1.0 / (1.0 - fv);
    Ok((mu2_initial - mu2_s) * (-fv * (1.0 - fv) * t).exp() + f.steady_variance())
}

/// Relaxation time 1/[f(1-f)] of the variance toward its steady state.
pub fn relaxation_time(f: TransferFraction) -> f64 {
    1.0 / (f.value() * f.complement())
}

/// Tail exponent alpha = -1/log2(1-f) of |g(z)| at large |z|; the density
/// behaves as w^(alpha-1) for w -> 0, diverging at zero when f > 1/2.
pub fn asymptotic_exponent(f: TransferFraction) -> f64 {
    -1.0 / f.complement().log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tf(f: f64) -> TransferFraction {
        TransferFraction::new(f).unwrap()
    }

    #[test]
    fn rejects_invalid_fractions() {
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN, f64::INFINITY] {
            assert!(TransferFraction::new(bad).is_err());
        }
        assert!(TransferFraction::new(0.5).is_ok());
    }

    #[test]
    fn moments_match_factorials_at_half() {
        // f = 1/2 gives the exponential density, whose moments are n!.
        let m = steady_moments(tf(0.5), 12).unwrap();
        let mut fact = 1.0;
        for n in 0..=12 {
            if n > 0 {
                fact *= n as f64;
            }
            assert_eq!(m.moment(n), fact, "moment {n}");
        }
    }

    #[test]
    fn second_moment_closed_form() {
        let m = steady_moments(tf(0.25), 2).unwrap();
        assert!((m.moment(2) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn third_moment_closed_form() {
        // a_3 = (1+f)/(1-f)^2
        let m = steady_moments(tf(0.1), 3).unwrap();
        let expect = 1.1 / (0.9 * 0.9);
        assert!((m.moment(3) - expect).abs() / expect < 1e-14);
        assert!((m.moment(3) - 1.358025).abs() < 1e-6);
    }

    #[test]
    fn moments_require_positive_order() {
        assert!(steady_moments(tf(0.5), 0).is_err());
    }

    #[test]
    fn taylor_at_zero_is_one() {
        for f in [0.05, 0.3, 0.5, 0.9] {
            let g = taylor_eval(tf(f), Complex64::new(0.0, 0.0), 20).unwrap();
            assert_eq!(g, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn taylor_matches_cauchy_form_at_half() {
        let z = Complex64::new(1e-5, 0.0);
        let g = taylor_eval(tf(0.5), z, 20).unwrap();
        let exact = 1.0 / (1.0 + 1e-5);
        assert!((g.re - exact).abs() < 1e-15);
        assert!(g.im.abs() < 1e-20);
    }

    #[test]
    fn taylor_slope_at_zero_is_minus_one() {
        // central difference of g along the real axis tends to g'(0) = -1
        let h = 1e-5;
        for f in [0.2, 0.5, 0.8] {
            let s = TaylorSeries::new(tf(f), 20).unwrap();
            let d = (s.eval(Complex64::new(h, 0.0)) - s.eval(Complex64::new(-h, 0.0))).re
                / (2.0 * h);
            assert!((d + 1.0).abs() < 1e-8, "f={f} slope={d}");
        }
    }

    #[test]
    fn variance_closed_form_cases() {
        let f = tf(0.5);
        // starting at the fixed point stays there
        let v = variance_evolution(f, 2.0, 7.3).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // t = 4 ln 2 from mu2(0) = 1 gives 1 - e^{-ln 2} = 1/2
        let v = variance_evolution(f, 1.0, 4.0 * (2.0f64).ln()).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        // long-time limit
        let v = variance_evolution(tf(0.3), 5.0, 1e4).unwrap();
        assert!((v - 0.3 / 0.7).abs() < 1e-12);
        assert!(variance_evolution(f, 1.0, -0.1).is_err());
        assert!(variance_evolution(f, 0.5, 1.0).is_err());
    }

    #[test]
    fn relaxation_time_values() {
        assert!((relaxation_time(tf(0.5)) - 4.0).abs() < 1e-12);
        assert!((relaxation_time(tf(0.1)) - 1.0 / 0.09).abs() < 1e-10);
        let t = relaxation_time(tf(0.001));
        assert!((t - 1001.001001).abs() < 1e-3);
    }

    #[test]
    fn exponent_values() {
        assert!((asymptotic_exponent(tf(0.5)) - 1.0).abs() < 1e-15);
        assert!((asymptotic_exponent(tf(0.75)) - 0.5).abs() < 1e-15);
        let a = asymptotic_exponent(tf(0.1));
        assert!((a - 6.5788).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn recursion_matches_closed_forms(f in 0.01f64..0.99) {
            let f = tf(f);
            let m = steady_moments(f, 20).unwrap();
            let fv = f.value();
            let a2 = 1.0 / (1.0 - fv);
            let a3 = (1.0 + fv) / ((1.0 - fv) * (1.0 - fv));
            prop_assert!((m.moment(2) - a2).abs() / a2 < 1e-13);
            prop_assert!((m.moment(3) - a3).abs() / a3 < 1e-13);
            for n in 0..=20 {
                prop_assert!(m.moment(n) > 0.0 && m.moment(n).is_finite());
            }
        }

        #[test]
        fn exponent_decreasing_and_threshold(f in 0.02f64..0.98) {
            let a = asymptotic_exponent(tf(f));
            let a2 = asymptotic_exponent(tf(f + 0.01));
            prop_assert!(a2 < a);
            if f > 0.5 {
                prop_assert!(a < 1.0);
            }
            if f < 0.5 {
                prop_assert!(a > 1.0);
            }
        }

        #[test]
        fn variance_monotone_and_convergent(
            f in 0.05f64..0.95,
            mu2 in 1.0f64..10.0,
        ) {
            let f = tf(f);
            let target = f.steady_variance();
            let mut prev = variance_evolution(f, mu2, 0.0).unwrap();
            let increasing = prev < target;
            for i in 1..=20 {
                let v = variance_evolution(f, mu2, i as f64).unwrap();
                if increasing {
                    prop_assert!(v >= prev - 1e-14);
                } else {
                    prop_assert!(v <= prev + 1e-14);
                }
                prev = v;
            }
            let v = variance_evolution(f, mu2, 1e3).unwrap();
            prop_assert!((v - target).abs() < 1e-6);
        }
    }
}
