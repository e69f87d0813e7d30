//! Cubic interpolating spline with not-a-knot end conditions.
//!
//! Used for the control-point parametrization of boundary profiles. The
//! not-a-knot closure reproduces constants and cubics exactly, which the
//! admissibility checks and the optimizer rely on.

/// Cubic spline through `(x_i, y_i)` stored via second-derivative moments.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    moments: Vec<f64>,
}

impl CubicSpline {
    /// Builds the not-a-knot spline. Requires at least 4 strictly increasing
    /// abscissae.
    pub fn not_a_knot(x: Vec<f64>, y: Vec<f64>) -> Option<Self> {
        let n = x.len();
        if n < 4 || y.len() != n {
            return None;
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return None;
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        // Dense system for the moments M_i; n stays small (control polygons),
        // so a pivoted dense solve is simpler than special-casing the two
        // non-tridiagonal closure rows.
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n];
        // not-a-knot at the second knot: S''' continuous across x_1
        a[0] = -h[1];
        a[1] = h[0] + h[1];
        a[2] = -h[0];
        for i in 1..n - 1 {
            a[i * n + i - 1] = h[i - 1] / 6.0;
            a[i * n + i] = (h[i - 1] + h[i]) / 3.0;
            a[i * n + i + 1] = h[i] / 6.0;
            b[i] = (y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1];
        }
        // not-a-knot at the second-to-last knot
        let r = (n - 1) * n;
        a[r + n - 3] = -h[n - 2];
        a[r + n - 2] = h[n - 3] + h[n - 2];
        a[r + n - 1] = -h[n - 3];
        let moments = solve_dense(n, &mut a, &mut b)?;
        Some(CubicSpline { x, y, moments })
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        self.x[1..n - 1].partition_point(|&k| k <= t).min(n - 2)
    }

    pub fn value(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let a = x1 - t;
        let b = t - x0;
        m0 * a * a * a / (6.0 * h)
            + m1 * b * b * b / (6.0 * h)
            + (y0 - m0 * h * h / 6.0) * a / h
            + (y1 - m1 * h * h / 6.0) * b / h
    }

    pub fn slope(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        let a = x1 - t;
        let b = t - x0;
        -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) + (self.y[i + 1] - self.y[i]) / h
            - (m1 - m0) * h / 6.0
    }

    pub fn curvature(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        (self.moments[i] * (x1 - t) + self.moments[i + 1] * (t - x0)) / h
    }
}

/// Gaussian elimination with partial pivoting on a small row-major system.
fn solve_dense(n: usize, a: &mut [f64], b: &mut [f64]) -> Option<Vec<f64>> {
    for k in 0..n {
        let mut piv = k;
        for r in k + 1..n {
            if a[r * n + k].abs() > a[piv * n + k].abs() {
                piv = r;
            }
        }
        if a[piv * n + k] == 0.0 {
            return None;
        }
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            b.swap(k, piv);
        }
        let d = a[k * n + k];
        for r in k + 1..n {
            let f = a[r * n + k] / d;
            if f != 0.0 {
                for c in k..n {
                    a[r * n + c] -= f * a[k * n + c];
                }
                b[r] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in k + 1..n {
            s -= a[k * n + c] * x[c];
        }
        x[k] = s / a[k * n + k];
    }
    Some(x)
}
