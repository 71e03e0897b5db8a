//! Additive-recurrence (Kronecker) low-discrepancy points with a seeded
//! Cranley–Patterson rotation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Points `frac(shift + n·α)` in `[0, 1)^D`, with `α_i = φ_D^{-(i+1)}` and
/// `φ_D` the positive root of `x^{D+1} = x + 1`.
#[derive(Debug, Clone)]
pub struct Kronecker<const D: usize> {
    alpha: [f64; D],
    state: [f64; D],
}

impl<const D: usize> Kronecker<D> {
    pub fn new(seed: u64) -> Self {
        let mut phi = 2.0f64;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (D as f64 + 1.0));
        }
        let mut alpha = [0.0; D];
        for (i, a) in alpha.iter_mut().enumerate() {
            *a = phi.powi(-(i as i32 + 1)).fract();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = std::array::from_fn(|_| rng.random::<f64>());
        Self { alpha, state }
    }
}

impl<const D: usize> Iterator for Kronecker<D> {
    type Item = [f64; D];

    fn next(&mut self) -> Option<[f64; D]> {
        let out = self.state;
        for (s, a) in self.state.iter_mut().zip(self.alpha) {
            *s = (*s + a).fract();
        }
        Some(out)
    }
}
