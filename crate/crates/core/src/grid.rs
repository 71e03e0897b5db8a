use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `min, min + step, ..., max` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(Error::Input(format!("grid bounds [{min}, {max}] invalid")));
        }
        if n < 2 {
            return Err(Error::InsufficientGrid { got: n, needed: 2 });
        }
        Ok(Self { min, max, n })
    }

    /// Grid on `[min, max]` whose spacing is as close as possible to `step`.
    pub fn with_step(min: f64, max: f64, step: f64) -> Result<Self> {
        if step <= 0.0 {
            return Err(Error::Input(format!("grid step {step} must be positive")));
        }
        let n = ((max - min) / step).round() as usize + 1;
        Self::new(min, max, n)
    }

    /// Symmetric grid `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, step: f64) -> Result<Self> {
        Self::with_step(-half_width, half_width, step)
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    /// Sub-grid on nodes `lo..=hi` sharing this grid's lattice.
    pub fn slice(&self, lo: usize, hi: usize) -> Result<Self> {
        if hi >= self.n || hi <= lo {
            return Err(Error::Input(format!("bad slice {lo}..={hi} of {} nodes", self.n)));
        }
        Ok(Self { min: self.node(lo), max: self.node(hi), n: hi - lo + 1 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_hit_both_ends() {
        let g = UniformGrid::with_step(-3.0, 3.0, 0.01).unwrap();
        assert_eq!(g.n, 601);
        assert_eq!(g.node(0), -3.0);
        assert_eq!(g.node(600), 3.0);
        assert!((g.node(300)).abs() < 1e-14);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(UniformGrid::new(1.0, 1.0, 10).is_err());
        assert!(UniformGrid::new(0.0, 1.0, 1).is_err());
    }
}
