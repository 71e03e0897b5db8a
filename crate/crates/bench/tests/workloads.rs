use mlsilab_bench::{cloud_pair, kawasaki_workload, renorm_workload, tilt_workload};
use mlsilab_core::cramer::tilt_solve;
use mlsilab_core::kawasaki::simulate;
use mlsilab_core::renorm::renormalize;
use mlsilab_core::transport::{wasserstein_matching, wasserstein_sinkhorn};
use mlsilab_core::QuadratureSpec;

#[test]
fn workloads_run() {
    let (psi, grid, quad) = renorm_workload();
    assert_eq!(renormalize(&psi, &grid, &quad).unwrap().values().len(), 201);

    let (psi, m) = tilt_workload();
    assert!((tilt_solve(&psi, m, &QuadratureSpec::default()).unwrap().mean - m).abs() < 1e-9);

    let (a, b) = cloud_pair(64);
    let exact = wasserstein_matching(&a, &b, 2, 2.0).unwrap().cost;
    let entropic = wasserstein_sinkhorn(&a, &b, 2, 2.0, 1e-2, 100_000).unwrap().cost;
    assert!(entropic >= exact - 1e-9);

    let (ens, cfg) = kawasaki_workload();
    let t = simulate(&ens, &cfg, None).unwrap();
    assert_eq!(t.checkpoints.len(), 2);
    assert!((t.checkpoints[1].t - 1.0).abs() < 1e-12);
}
