//! One pipeline per subcommand; each writes its artifacts into the output
//! directory.

use mlsilab_core::cramer::{check_p_growth, cramer_deficit};
use mlsilab_core::ensemble::{sample_canonical, SamplerConfig};
use mlsilab_core::functional::{
    bakry_emery, concentration_constant, dual_exponent, estimate_best_rho, holley_stroock_report, laplace_bound_check,
    log_lambda_grid, talagrand_constant, HolleyStroock, MlsiEstimate, TiltFamily,
};
use mlsilab_core::kawasaki::{decay_experiment, DecayReferences, InitialLaw, KawasakiConfig, TransportMethod};
use mlsilab_core::renorm::{certify_p_convexity, iterate_renormalize, CertificationReport};
use mlsilab_core::transport::{self, wasserstein_1d, wasserstein_matching, wasserstein_sinkhorn};
use mlsilab_core::{
    CanonicalEnsemble, DiscretizedMeasure, QuadratureSpec, SampleBatch, SingleSite, TabulatedPotential, UniformGrid, WassersteinResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::{
    CertifySection, CramerSection, ExperimentConfig, KawasakiSection, MlsiSection, RenormSection, Subcommand, TransportChoice,
    TransportSection,
};
use crate::output::OutputDir;
use crate::potential::parse_potential;
use crate::CliError;

/// Run the pipeline of a resolved config.
pub fn execute(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let seed = cfg.seed.expect("resolved config has a seed");
    let quad = cfg.quadrature.unwrap_or_default();
    let missing = |s: Subcommand| CliError::Config(format!("resolved config lacks the [{}] section", s.name()));
    match cfg.subcommand.expect("resolved config names its subcommand") {
        Subcommand::Renorm => renorm(cfg.renorm.as_ref().ok_or(missing(Subcommand::Renorm))?, &quad, seed, out),
        Subcommand::Cramer => cramer(cfg.cramer.as_ref().ok_or(missing(Subcommand::Cramer))?, &quad, out),
        Subcommand::Mlsi => mlsi(cfg.mlsi.as_ref().ok_or(missing(Subcommand::Mlsi))?, out),
        Subcommand::Kawasaki => kawasaki(cfg.kawasaki.as_ref().ok_or(missing(Subcommand::Kawasaki))?, seed, out),
        Subcommand::Transport => transport_cmd(cfg.transport.as_ref().ok_or(missing(Subcommand::Transport))?, seed, out),
        Subcommand::Certify => certify(cfg.certify.as_ref().ok_or(missing(Subcommand::Certify))?, seed, out),
    }
}

fn symmetric_grid(half: f64, step: f64) -> Result<UniformGrid, CliError> {
    if !(half > 0.0 && step > 0.0 && step < half) {
        return Err(CliError::Config(format!("grid half-width {half} and step {step} must satisfy 0 < step < half-width")));
    }
    Ok(UniformGrid::with_step(-half, half, step)?)
}

#[derive(Serialize)]
struct IterateSummary {
    iteration: usize,
    block_size: usize,
    grid_min: f64,
    grid_max: f64,
    n_nodes: usize,
    normalization_offset: f64,
    rho_p: f64,
    c_uniform: f64,
    derivative_confirms: bool,
}

fn renorm(s: &RenormSection, quad: &QuadratureSpec, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let psi = parse_potential(&s.potential, Some(s.potential_halfwidth))?;
    let grid = symmetric_grid(s.grid_halfwidth, s.grid_step)?;
    let p = s.certify_p.unwrap_or(psi.exponent());
    let iterates = iterate_renormalize(&psi, s.iterations, &grid, quad, s.margin)?;
    let mut summary = Vec::with_capacity(iterates.len());
    for t in &iterates {
        let m = t.iteration_count();
        out.write(&format!("iterate_{m:02}.json"), t.to_json().as_bytes())?;
        let window = t.restrict(-s.certify_halfwidth, s.certify_halfwidth)?;
        let report: CertificationReport = certify_p_convexity(&window, p, s.n_triples, seed.wrapping_add(m as u64))?;
        out.write_json(&format!("certification_{m:02}.json"), &report)?;
        summary.push(IterateSummary {
            iteration: m,
            block_size: 1 << m,
            grid_min: t.grid().min,
            grid_max: t.grid().max,
            n_nodes: t.grid().n,
            normalization_offset: t.normalization_offset(),
            rho_p: report.rho_p,
            c_uniform: report.c_uniform,
            derivative_confirms: report.derivative_confirms,
        });
        log::info!("iterate {m}: c_uniform {:.4}, rho_p {:.4}", report.c_uniform, report.rho_p);
    }
    out.write_json("summary.json", &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct DeficitSummary {
    #[serde(rename = "K")]
    k: usize,
    max_deficit: f64,
    n_points: usize,
    /// `max_deficit(K/2) / max_deficit(K)` when `K/2` was also requested.
    ratio_to_previous: Option<f64>,
}

fn block_sizes(k: &[usize]) -> Result<Vec<usize>, CliError> {
    let mut ks = k.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks.iter().any(|&k| k < 2 || !k.is_power_of_two()) {
        return Err(CliError::Config(format!("K must list powers of two >= 2, got {k:?}")));
    }
    Ok(ks)
}

fn cramer(s: &CramerSection, quad: &QuadratureSpec, out: &mut OutputDir) -> Result<(), CliError> {
    let ks = block_sizes(&s.k)?;
    let psi = parse_potential(&s.potential, Some(s.potential_halfwidth))?;
    let grid = symmetric_grid(s.grid_halfwidth, s.grid_step)?;
    let m_grid = UniformGrid::with_step(s.m_min, s.m_max, s.m_step)?;
    let iterations = ks.last().expect("non-empty").trailing_zeros() as usize;
    let iterates = iterate_renormalize(&psi, iterations, &grid, quad, None)?;
    let mut summary: Vec<DeficitSummary> = Vec::with_capacity(ks.len());
    for &k in &ks {
        let table = cramer_deficit(&psi, &iterates[k.trailing_zeros() as usize - 1], &m_grid, quad)?;
        out.write_with(&format!("deficit_K{k}.csv"), |buf| table.write_csv(buf))?;
        let ratio = summary.iter().find(|r| 2 * r.k == k).map(|r| r.max_deficit / table.max_deficit);
        summary.push(DeficitSummary { k, max_deficit: table.max_deficit, n_points: table.rows.len(), ratio_to_previous: ratio });
    }
    out.write_json("summary.json", &summary)?;
    if let Some(p) = s.growth_p {
        let report = check_p_growth(&psi, p, &m_grid, quad)?;
        out.write_with("growth.csv", |buf| report.write_csv(buf))?;
        out.write_json("growth.json", &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MlsiSummary {
    estimate: MlsiEstimate,
    q: f64,
    n_support: usize,
    /// Constant from uniform convexity of the core alone.
    bakry_emery: f64,
    /// Bakry–Émery constant transferred across the perturbation.
    holley_stroock: HolleyStroock,
    concentration_constant: f64,
    talagrand_constant: f64,
    laplace_pass: bool,
    laplace_worst_margin: f64,
}

fn mlsi(s: &MlsiSection, out: &mut OutputDir) -> Result<(), CliError> {
    let psi = parse_potential(&s.potential, s.potential_halfwidth)?;
    let grid = symmetric_grid(s.grid_halfwidth, s.grid_step)?;
    let measure = DiscretizedMeasure::from_single_site(&psi, &grid)?;
    let family = TiltFamily { lambdas: log_lambda_grid(s.log_lambda_min, s.log_lambda_max, s.n_lambdas), ..TiltFamily::default_for(1) };
    let estimate = estimate_best_rho(&measure, s.p, &family)?;
    let q = dual_exponent(s.p)?;
    if !(s.laplace_step > 0.0 && s.laplace_max >= 0.0) {
        return Err(CliError::Config("laplace_step must be positive and laplace_max non-negative".into()));
    }
    let n_lambda = (s.laplace_max / s.laplace_step + 1e-9).floor() as usize;
    let lambdas: Vec<f64> = (0..=n_lambda).map(|i| i as f64 * s.laplace_step).collect();
    let laplace = laplace_bound_check(&measure, |x| x, estimate.rho_hat, q, &lambdas)?;
    out.write_with("laplace.csv", |buf| laplace.write_csv(buf))?;
    let be = bakry_emery(psi.convexity(), s.p)?;
    let summary = MlsiSummary {
        q,
        n_support: measure.len(),
        bakry_emery: be,
        holley_stroock: holley_stroock_report(be, psi.bounds().osc)?,
        concentration_constant: concentration_constant(estimate.rho_hat, s.p)?,
        talagrand_constant: talagrand_constant(estimate.rho_hat, s.p)?,
        laplace_pass: laplace.pass,
        laplace_worst_margin: laplace.worst_margin,
        estimate,
    };
    out.write_json("mlsi.json", &summary)?;
    Ok(())
}

fn method_label(m: &TransportMethod) -> String {
    match m {
        TransportMethod::Quantile => "quantile".into(),
        TransportMethod::Matching => "matching".into(),
        TransportMethod::Sinkhorn { epsilon } => format!("sinkhorn(epsilon={epsilon})"),
    }
}

fn kawasaki(s: &KawasakiSection, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let psi = parse_potential(&s.potential, None)?;
    let ens = CanonicalEnsemble::new(s.n, s.m, psi)?;
    let sampler = |offset: u64, n_samples: usize| SamplerConfig {
        n_samples,
        step_scale: s.sampler.step_scale,
        burn_in: s.sampler.burn_in,
        thinning: s.sampler.thinning,
        seed: seed.wrapping_add(offset),
    };
    let reference = sample_canonical(&ens, &sampler(1, s.n_paths))?;
    let second = sample_canonical(&ens, &sampler(2, s.n_paths))?;
    let start = match s.initial_law {
        InitialLaw::Equilibrium => Some(sample_canonical(&ens, &sampler(3, s.n_paths))?),
        _ => None,
    };
    let cfg = KawasakiConfig {
        n: s.n,
        h: s.h,
        t_end: s.t_end,
        n_paths: s.n_paths,
        n_checkpoints: s.n_checkpoints,
        initial_law: s.initial_law.clone(),
        seed,
        reproject: true,
    };
    let refs = DecayReferences { reference: &reference, second_reference: &second, start: start.as_ref() };
    let trace = decay_experiment(&ens, &cfg, s.p, s.method, refs, s.n_boot)?;
    out.write_with("trace.csv", |buf| trace.write_csv(buf, &method_label(&s.method)))?;
    out.write_json("trace.json", &trace)?;
    if trace.inconclusive {
        log::warn!("decay fit inconclusive: fewer than 3 checkpoints above three times the noise floor");
    }
    Ok(())
}

fn gaussian_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, shift: f64, seed: u64) -> Result<SampleBatch, CliError> {
    let data: Vec<f64> = (0..n * dim).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(SampleBatch::from_rows(dim, data, seed)?)
}

fn median_cost(a: &SampleBatch, b: &SampleBatch, p: f64) -> f64 {
    let mut costs: Vec<f64> = a
        .rows()
        .flat_map(|x| b.rows().map(move |y| x.iter().zip(y).map(|(u, v)| (u - v).abs().powf(p)).sum::<f64>()))
        .collect();
    let mid = costs.len() / 2;
    *costs.select_nth_unstable_by(mid, f64::total_cmp).1
}

#[derive(Serialize)]
struct TransportSummary {
    result: WassersteinResult,
    bootstrap_se: Option<f64>,
    n_a: usize,
    n_b: usize,
    dim: usize,
}

fn save_batch(out: &mut OutputDir, name: &str, batch: &SampleBatch) -> Result<(), CliError> {
    out.write_with(name, |buf| batch.write_binary(buf))?;
    out.write_json(&format!("{name}.json"), &batch.metadata())?;
    Ok(())
}

fn transport_cmd(s: &TransportSection, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let (a, b) = match (&s.a, &s.b) {
        (Some(a), Some(b)) => (SampleBatch::load(a)?, SampleBatch::load(b)?),
        (None, None) => {
            if s.n == 0 || s.dim == 0 {
                return Err(CliError::Config("n and dim must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian_batch(&mut rng, s.n, s.dim, 0.0, seed)?;
            let b = gaussian_batch(&mut rng, s.n, s.dim, s.shift, seed)?;
            save_batch(out, "a.bin", &a)?;
            save_batch(out, "b.bin", &b)?;
            (a, b)
        }
        _ => return Err(CliError::Config("give both `a` and `b` sample files, or neither".into())),
    };
    if a.dim != b.dim {
        return Err(CliError::Config(format!("sample dimensions differ: {} vs {}", a.dim, b.dim)));
    }
    let result = match s.method {
        TransportChoice::Auto => transport::wasserstein_batches(&a, &b, s.p)?,
        TransportChoice::Quantile => {
            if a.dim != 1 {
                return Err(CliError::Config("quantile coupling needs one-dimensional samples".into()));
            }
            wasserstein_1d(&a.data, &b.data, s.p)?
        }
        TransportChoice::Matching => wasserstein_matching(&a.data, &b.data, a.dim, s.p)?,
        TransportChoice::Sinkhorn => {
            let epsilon = s.epsilon_factor * median_cost(&a, &b, s.p);
            wasserstein_sinkhorn(&a.data, &b.data, a.dim, s.p, epsilon, s.max_iter)?
        }
    };
    let bootstrap_se = if s.n_boot >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        Some(transport::bootstrap_se(&a, &b, s.p, s.n_boot, &mut rng)?)
    } else {
        None
    };
    out.write_json("transport.json", &TransportSummary { result, bootstrap_se, n_a: a.n_samples, n_b: b.n_samples, dim: a.dim })?;
    Ok(())
}

fn certify(s: &CertifySection, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let tab = match &s.input {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            TabulatedPotential::from_json(&text)?
        }
        None => {
            let psi = parse_potential(&s.potential, None)?;
            let grid = symmetric_grid(s.grid_halfwidth, s.grid_step)?;
            TabulatedPotential::from_fn(grid, psi.exponent(), psi.convexity(), |x| psi.value(x))?
        }
    };
    let p = s.p.unwrap_or(tab.exponent());
    let report = certify_p_convexity(&tab, p, s.n_triples, seed)?;
    out.write_json("certification.json", &report)?;
    Ok(())
}
