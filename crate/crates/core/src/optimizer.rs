//! Pump-rate tuning: the mean pair number that maximizes the single-photon
//! output probability, with and without a floor on the signal-to-noise ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss_model::output_distribution;
use crate::photon_stats::{mandel_q, snr, PhotonDistribution, DEFAULT_N_MAX};
use crate::source::SourceConfig;

/// Points in the logarithmic scan that seeds every refinement.
pub const COARSE_POINTS: usize = 128;

/// Default absolute tolerance on `mu`.
pub const DEFAULT_TOL: f64 = 1e-6;

const MAX_GOLDEN_ITERATIONS: usize = 200;
const MAX_BISECTIONS: usize = 200;

/// Closed search interval for `mu`, with `0 < lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuRange {
    pub lo: f64,
    pub hi: f64,
}

impl MuRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return Err(Error::Domain(format!("mu range must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `COARSE_POINTS` log-spaced points including both ends.
    fn coarse_grid(&self) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        let last = COARSE_POINTS - 1;
        (0..COARSE_POINTS)
            .map(|i| match i {
                0 => self.lo,
                i if i == last => self.hi,
                i => (a + (b - a) * i as f64 / last as f64).exp(),
            })
            .collect()
    }
}

impl Default for MuRange {
    fn default() -> Self {
        Self { lo: 1e-4, hi: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub mu_opt: f64,
    pub p1_max: f64,
    pub snr_at_opt: f64,
    pub mandel_q_at_opt: f64,
    /// Golden-section steps summed over every refined bracket.
    pub iterations: usize,
    pub converged: bool,
    /// Set when the maximum sits on an edge of the search range.
    pub boundary: Option<Bound>,
}

/// Output distribution of `template` at pump level `mu`.
pub fn distribution_at(template: &SourceConfig, mu: f64) -> Result<PhotonDistribution> {
    output_distribution(&template.with_mu(mu), DEFAULT_N_MAX)
}

/// Single-photon output probability of `template` at pump level `mu`.
pub fn single_photon_probability(template: &SourceConfig, mu: f64) -> Result<f64> {
    Ok(distribution_at(template, mu)?.p1())
}

struct Refined {
    mu: f64,
    p1: f64,
    iterations: usize,
    width: f64,
}

/// Golden-section maximization on `[a, b]`, seeded with a known point.
/// Returns the best point evaluated, never worse than the seed.
fn golden_section<F>(f: &F, mut a: f64, mut b: f64, seed: (f64, f64), tol: f64) -> Result<Refined>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut best = seed;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut iterations = 0;
    while b - a > tol && iterations < MAX_GOLDEN_ITERATIONS {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        iterations += 1;
        for (x, fx) in [(c, fc), (d, fd)] {
            if fx > best.1 {
                best = (x, fx);
            }
        }
    }
    Ok(Refined {
        mu: best.0,
        p1: best.1,
        iterations,
        width: b - a,
    })
}

/// Indices of local maxima of `values`, endpoints included.
fn local_maxima(values: &[f64]) -> Vec<usize> {
    let last = values.len() - 1;
    (0..=last)
        .filter(|&i| {
            let left_ok = i == 0 || values[i] >= values[i - 1];
            let right_ok = i == last || values[i] > values[i + 1];
            left_ok && right_ok
        })
        .collect()
}

fn finish(template: &SourceConfig, refined: Refined, iterations: usize, tol: f64, range: MuRange) -> Result<OptimizationResult> {
    let dist = distribution_at(template, refined.mu)?;
    let boundary = if refined.mu - range.lo <= tol {
        Some(Bound::Lower)
    } else if range.hi - refined.mu <= tol {
        Some(Bound::Upper)
    } else {
        None
    };
    Ok(OptimizationResult {
        mu_opt: refined.mu,
        p1_max: dist.p1(),
        snr_at_opt: snr(&dist),
        mandel_q_at_opt: mandel_q(&dist)?,
        iterations,
        converged: boundary.is_none() && refined.width <= tol,
        boundary,
    })
}

/// The `mu` in `range` that maximizes the single-photon output probability.
///
/// A logarithmic scan locates every local maximum; each bracket around one
/// is refined by golden-section search to width `tol`, and the best refined
/// point wins. A maximum on the range edge is returned with `converged =
/// false` and the edge recorded in `boundary`.
pub fn optimize_mu(template: &SourceConfig, range: MuRange, tol: f64) -> Result<OptimizationResult> {
    template.validate()?;
    MuRange::new(range.lo, range.hi)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be > 0, got {tol}")));
    }
    let p1 = |mu: f64| single_photon_probability(template, mu);
    let grid = range.coarse_grid();
    let values = grid.iter().map(|&mu| p1(mu)).collect::<Result<Vec<_>>>()?;
    let last = grid.len() - 1;

    let mut best: Option<Refined> = None;
    let mut iterations = 0;
    for i in local_maxima(&values) {
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(last)];
        let refined = golden_section(&p1, lo, hi, (grid[i], values[i]), tol)?;
        iterations += refined.iterations;
        if best.as_ref().is_none_or(|b| refined.p1 > b.p1) {
            best = Some(refined);
        }
    }
    let best = best.expect("a finite sequence has a maximum");
    finish(template, best, iterations, tol, range)
}

/// Outcome of a constrained optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SnrConstrained {
    Feasible {
        result: OptimizationResult,
        /// The optimum sits on the SNR floor rather than at the free maximum.
        constraint_active: bool,
        /// Whether SNR decreased monotonically over the coarse scan.
        snr_monotone: bool,
    },
    Infeasible {
        snr_target: f64,
        /// Largest SNR seen in the range, and where.
        max_snr: f64,
        mu_at_max_snr: f64,
    },
}

impl SnrConstrained {
    pub fn result(&self) -> Option<&OptimizationResult> {
        match self {
            SnrConstrained::Feasible { result, .. } => Some(result),
            SnrConstrained::Infeasible { .. } => None,
        }
    }
}

/// Bisects `[good, bad]` down to the last `mu` that still meets the floor.
fn feasible_edge<F>(feasible: &F, mut good: f64, mut bad: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<bool>,
{
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (good + bad);
        if mid == good || mid == bad || (good - bad).abs() <= 1e-13 * good.abs().max(bad.abs()) {
            break;
        }
        if feasible(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}

/// Maximizes the single-photon probability subject to `SNR >= snr_target`.
///
/// The feasible set is located on the coarse scan, its edges are sharpened
/// by bisection, and each feasible interval is optimized separately. SNR is
/// generally decreasing in `mu`, giving a single interval starting at the
/// lower end of `range`; that is checked, not assumed.
pub fn max_p1_with_snr_floor(template: &SourceConfig, snr_target: f64, range: MuRange) -> Result<SnrConstrained> {
    max_p1_with_snr_floor_tol(template, snr_target, range, DEFAULT_TOL)
}

pub fn max_p1_with_snr_floor_tol(
    template: &SourceConfig,
    snr_target: f64,
    range: MuRange,
    tol: f64,
) -> Result<SnrConstrained> {
    template.validate()?;
    MuRange::new(range.lo, range.hi)?;
    if !(snr_target.is_finite() && snr_target >= 0.0) {
        return Err(Error::Domain(format!("SNR target must be finite and >= 0, got {snr_target}")));
    }
    let snr_at = |mu: f64| -> Result<f64> { Ok(snr(&distribution_at(template, mu)?)) };
    let feasible = |mu: f64| -> Result<bool> { Ok(snr_at(mu)? >= snr_target) };

    let grid = range.coarse_grid();
    let snrs = grid.iter().map(|&mu| snr_at(mu)).collect::<Result<Vec<_>>>()?;
    let snr_monotone = snrs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let ok: Vec<bool> = snrs.iter().map(|&s| s >= snr_target).collect();

    let mut segments = Vec::new();
    let mut i = 0;
    while i < grid.len() {
        if !ok[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < grid.len() && ok[i + 1] {
            i += 1;
        }
        let lo = if start == 0 { range.lo } else { feasible_edge(&feasible, grid[start], grid[start - 1])? };
        let hi = if i == grid.len() - 1 { range.hi } else { feasible_edge(&feasible, grid[i], grid[i + 1])? };
        segments.push((lo, hi, i != grid.len() - 1));
        i += 1;
    }

    if segments.is_empty() {
        let (idx, max_snr) = snrs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
        return Ok(SnrConstrained::Infeasible {
            snr_target,
            max_snr,
            mu_at_max_snr: grid[idx],
        });
    }

    let mut best: Option<(OptimizationResult, bool)> = None;
    for (lo, hi, upper_is_constraint) in segments {
        let mut result = if hi - lo > tol {
            optimize_mu(template, MuRange { lo, hi }, tol)?
        } else {
            let refined = Refined {
                mu: lo,
                p1: single_photon_probability(template, lo)?,
                iterations: 0,
                width: 0.0,
            };
            finish(template, refined, 0, tol, MuRange { lo, hi })?
        };
        let mut active = false;
        if result.boundary == Some(Bound::Upper) && upper_is_constraint {
            // The floor, not the range, stops the search: a genuine optimum.
            result.boundary = None;
            result.converged = true;
            active = true;
        }
        if best.as_ref().is_none_or(|(b, _)| result.p1_max > b.p1_max) {
            best = Some((result, active));
        }
    }
    let (result, constraint_active) = best.expect("at least one segment");
    Ok(SnrConstrained::Feasible {
        result,
        constraint_active,
        snr_monotone,
    })
}
