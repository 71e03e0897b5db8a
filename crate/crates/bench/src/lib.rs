//! Workloads shared by the criterion benchmarks and their smoke test.

use mlsilab_core::kawasaki::{InitialLaw, KawasakiConfig};
use mlsilab_core::{make_double_well, CanonicalEnsemble, PotentialSpec, QuadratureSpec, UniformGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Double-well on `[-6, 6]` and a 201-node lattice on `[-2, 2]`.
pub fn renorm_workload() -> (PotentialSpec, UniformGrid, QuadratureSpec) {
    let psi = make_double_well().with_halfwidth(6.0).expect("valid half-width");
    let grid = UniformGrid::with_step(-2.0, 2.0, 0.02).expect("valid grid");
    (psi, grid, QuadratureSpec::default())
}

pub fn tilt_workload() -> (PotentialSpec, f64) {
    (PotentialSpec::quadratic_cosine(0.5).expect("valid amplitude"), 1.3)
}

/// Two point clouds of `n` points in the plane.
pub fn cloud_pair(n: usize) -> (Vec<f64>, Vec<f64>) {
    (normals(1, 2 * n), normals(2, 2 * n))
}

/// `N = 8` double-well, 64 paths of 1000 steps.
pub fn kawasaki_workload() -> (CanonicalEnsemble<PotentialSpec>, KawasakiConfig) {
    let ens = CanonicalEnsemble::new(8, 0.0, make_double_well()).expect("valid ensemble");
    let cfg = KawasakiConfig {
        n: 8,
        h: 1e-3,
        t_end: 1.0,
        n_paths: 64,
        n_checkpoints: 2,
        initial_law: InitialLaw::Gaussian { scale: 0.5 },
        seed: 1,
        reproject: true,
    };
    (ens, cfg)
}
