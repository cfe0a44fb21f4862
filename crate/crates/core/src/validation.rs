//! Self-check suite: reduction identities of the analytic chain and its
//! statistical agreement with the event-level simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::loss_model::{output_distribution, output_trace};
use crate::mc_oracle::{compare, simulate, McConfig};
use crate::optimizer::{optimize_mu, single_photon_probability, MuRange};
use crate::photon_stats::{ideal_distribution, poisson_distribution, DEFAULT_N_MAX, TAIL_TOLERANCE};
use crate::source::SourceConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// The 3 x 3 x 2 grid over `m`, `mu` and switch loss at `e_h = 0.85`,
/// `e_s = 0.9`, plus one point with dark counts.
pub fn oracle_grid() -> Vec<SourceConfig> {
    let mut grid = Vec::new();
    for m in [0, 2, 4] {
        for mu in [0.05, 0.1, 0.5] {
            for il in [0.5, 1.0] {
                grid.push(SourceConfig::lossy(m, mu, il));
            }
        }
    }
    grid.push(SourceConfig::lossy(4, 0.1, 0.5).with_dark_probability(0.01));
    grid
}

fn check(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn random_configs(seed: u64, count: usize) -> Vec<SourceConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| SourceConfig {
            m: rng.random_range(0..=12),
            mu: 10f64.powf(rng.random_range(-6.0..=0.3)),
            e_h: rng.random_range(0.05..=1.0),
            e_s: rng.random_range(0.3..=1.0),
            e_sw_db: rng.random_range(0.0..=2.0),
            r_dark: rng.random_range(0.0..=1e7),
            ..SourceConfig::ideal(0, 0.0)
        })
        .collect()
}

/// Runs every check; the Monte Carlo part uses `trials` per configuration.
pub fn run_validation(trials: u64, seed: u64) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let configs = random_configs(seed, 100);

    let mut worst = 0.0f64;
    for cfg in &configs {
        let lossless = SourceConfig::ideal(cfg.m, cfg.mu);
        let a = output_distribution(&lossless, DEFAULT_N_MAX)?;
        let b = ideal_distribution(&lossless, DEFAULT_N_MAX)?;
        worst = worst.max(a.max_abs_diff(&b));
    }
    checks.push(check("lossless chain equals ideal distribution", worst <= 1e-12, format!("max |diff| = {worst:e}")));

    let mut worst = 0.0f64;
    for cfg in &configs {
        let single = SourceConfig { m: 0, ..*cfg };
        let out = output_distribution(&single, DEFAULT_N_MAX)?;
        let target = poisson_distribution(cfg.mu * single.total_signal_transmission(), DEFAULT_N_MAX)?;
        worst = worst.max(out.max_abs_diff(&target));
    }
    checks.push(check("single window reduces to thinned Poisson", worst <= 1e-12, format!("max |diff| = {worst:e}")));

    let mut worst = 0.0f64;
    for cfg in &configs {
        for (_, d) in output_trace(cfg, DEFAULT_N_MAX)?.stages() {
            let total: f64 = d.probs().iter().sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    checks.push(check("every stage normalized", worst < TAIL_TOLERANCE, format!("max |sum - 1| = {worst:e}")));

    let mut worst = 0.0f64;
    for cfg in configs.iter().take(5) {
        let template = SourceConfig { m: cfg.m.min(6), ..*cfg };
        let range = MuRange::default();
        let opt = optimize_mu(&template, range, 1e-7)?;
        let grid_best = (0..=20_000)
            .map(|i| range.lo + (range.hi - range.lo) * i as f64 / 20_000.0)
            .map(|mu| single_photon_probability(&template, mu))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::MIN, f64::max);
        worst = worst.max(grid_best - opt.p1_max);
    }
    checks.push(check("optimizer not beaten by a fine grid", worst <= 1e-8, format!("max deficit = {worst:e}")));

    for (i, cfg) in oracle_grid().iter().enumerate() {
        let mc = McConfig::new(trials, seed.wrapping_add(i as u64));
        let hist = simulate(cfg, &mc)?;
        let analytic = output_distribution(cfg, DEFAULT_N_MAX)?;
        let report = compare(cfg, &analytic, &hist)?;
        checks.push(check(
            &format!("monte carlo m={} mu={} il={} r_dark={:.3e}", cfg.m, cfg.mu, cfg.e_sw_db, cfg.r_dark),
            report.passed,
            format!(
                "tv = {:.3e} (limit {:.3e}), max |z| = {:.2}",
                report.tv_distance, report.tv_limit, report.max_abs_z
            ),
        ));
    }

    Ok(ValidationReport { checks })
}
