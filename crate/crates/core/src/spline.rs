//! Not-a-knot cubic spline on a uniform grid. Reproduces cubics exactly.

use crate::grid::UniformGrid;

#[derive(Debug, Clone)]
pub struct CubicSpline {
    grid: UniformGrid,
    values: Vec<f64>,
    // second derivatives at the nodes
    moments: Vec<f64>,
}

impl CubicSpline {
    /// Needs at least four nodes.
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Self {
        assert_eq!(grid.n, values.len());
        assert!(grid.n >= 4, "not-a-knot spline needs four nodes");
        let n = grid.n;
        let h = grid.step();
        let d: Vec<f64> = (1..n - 1)
            .map(|i| 6.0 * (values[i - 1] - 2.0 * values[i] + values[i + 1]) / (h * h))
            .collect();
        // Unknowns M_1..M_{n-2}. Rows: M_{i-1} + 4 M_i + M_{i+1} = d_i, with the
        // not-a-knot closures M_0 = 2M_1 - M_2 and M_{n-1} = 2M_{n-2} - M_{n-3}
        // folded into the first and last rows.
        let m = n - 2;
        let mut moments = vec![0.0; n];
        if m == 2 {
            // both rows collapse to 6 M = d
            moments[1] = d[0] / 6.0;
            moments[2] = d[1] / 6.0;
        } else {
            let mut diag = vec![4.0; m];
            let mut lower = vec![1.0; m];
            let mut upper = vec![1.0; m];
            diag[0] = 6.0;
            upper[0] = 0.0;
            diag[m - 1] = 6.0;
            lower[m - 1] = 0.0;
            let mut rhs = d;
            // Thomas algorithm
            for i in 1..m {
                let w = lower[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut x = vec![0.0; m];
            x[m - 1] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
            }
            moments[1..n - 1].copy_from_slice(&x);
        }
        moments[0] = 2.0 * moments[1] - moments[2];
        moments[n - 1] = 2.0 * moments[n - 2] - moments[n - 3];
        Self { grid, values, moments }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn locate(&self, x: f64) -> (usize, f64, f64) {
        let h = self.grid.step();
        let t = ((x - self.grid.min) / h).floor();
        let i = (t.max(0.0) as usize).min(self.grid.n - 2);
        let x0 = self.grid.node(i);
        (i, (x - x0) / h, h)
    }

    /// Value and first derivative. `x` is clamped into the grid.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let x = x.clamp(self.grid.min, self.grid.max);
        let (i, s, h) = self.locate(x);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        let a = 1.0 - s;
        let value = a * y0 + s * y1 + h * h / 6.0 * ((a * a * a - a) * m0 + (s * s * s - s) * m1);
        let deriv = (y1 - y0) / h + h / 6.0 * (-(3.0 * a * a - 1.0) * m0 + (3.0 * s * s - 1.0) * m1);
        (value, deriv)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }
}
