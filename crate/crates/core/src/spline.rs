//! Natural cubic spline on a uniform grid, with reusable workspace so the
//! solver can refit the same grid every iteration without reallocating.

/// Natural cubic spline over equally spaced knots x0, x0+h, ...
#[derive(Debug, Clone)]
pub struct UniformSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
    scratch: Vec<f64>,
}

impl UniformSpline {
    pub fn new(x0: f64, h: f64, n: usize) -> Self {
        assert!(n >= 2, "spline needs at least two knots");
        assert!(h > 0.0);
        Self {
            x0,
            h,
            y: vec![0.0; n],
            m: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    /// Refits the spline to new ordinates on the same knots.
    pub fn fit(&mut self, y: &[f64]) {
        let n = self.y.len();
        assert_eq!(y.len(), n);
        self.y.copy_from_slice(y);
        // Tridiagonal solve for the second derivatives, natural boundary
        // conditions m[0] = m[n-1] = 0 (Numerical Recipes sweep with
        // constant sig = 1/2 on a uniform grid).
        let m = &mut self.m;
        let u = &mut self.scratch;
        m[0] = 0.0;
        u[0] = 0.0;
        let h2 = self.h * self.h;
        for i in 1..n - 1 {
            let p = 0.5 * m[i - 1] + 2.0;
            m[i] = -0.5 / p;
            let rhs = (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h2;
            u[i] = (6.0 * rhs / 2.0 - 0.5 * u[i - 1]) / p;
        }
        m[n - 1] = 0.0;
        for k in (0..n - 1).rev() {
            m[k] = m[k] * m[k + 1] + u[k];
        }
    }

    /// Evaluates the spline; clamps to the boundary polynomials outside the
    /// knot range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let mut i = ((x - self.x0) / self.h).floor() as isize;
        if i < 0 {
            i = 0;
        }
        if i > (n - 2) as isize {
            i = (n - 2) as isize;
        }
        let i = i as usize;
        let xi = self.x0 + self.h * i as f64;
        let b = (x - xi) / self.h;
        let a = 1.0 - b;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * self.h * self.h
                / 6.0
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_knot_values() {
        let ys: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut s = UniformSpline::new(-2.0, 0.1, 50);
        s.fit(&ys);
        for (i, &y) in ys.iter().enumerate() {
            let x = -2.0 + 0.1 * i as f64;
            assert!((s.eval(x) - y).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolates_smooth_function_accurately() {
        // sin on a dense grid: interior error should scale like h^4
        let n = 2001;
        let h = 1e-3;
        let ys: Vec<f64> = (0..n).map(|i| (i as f64 * h).sin()).collect();
        let mut s = UniformSpline::new(0.0, h, n);
        s.fit(&ys);
        let mut worst = 0.0f64;
        for k in 0..5000 {
            let x = 0.5 + k as f64 * 2e-4;
            let err = (s.eval(x) - x.sin()).abs();
            worst = worst.max(err);
        }
        assert!(worst < 1e-12, "worst interior error {worst:e}");
    }

    #[test]
    fn exact_on_linear_data() {
        let ys: Vec<f64> = (0..10).map(|i| 3.0 + 2.0 * i as f64).collect();
        let mut s = UniformSpline::new(0.0, 1.0, 10);
        s.fit(&ys);
        assert!((s.eval(4.37) - (3.0 + 2.0 * 4.37)).abs() < 1e-12);
    }
}
