//! Parameter sweeps that regenerate the figure data, as serializable tables.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loss_model::output_distribution;
use crate::optimizer::{max_p1_with_snr_floor, optimize_mu, MuRange, SnrConstrained, DEFAULT_TOL};
use crate::photon_stats::{mandel_q, snr, PhotonDistribution};
use crate::source::SourceConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Custom,
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
            FigureId::Custom => "custom",
        })
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(FigureId::Fig2),
            "fig3" => Ok(FigureId::Fig3),
            "fig4" => Ok(FigureId::Fig4),
            "fig5" => Ok(FigureId::Fig5),
            "custom" => Ok(FigureId::Custom),
            other => Err(Error::Domain(format!("unknown figure id `{other}`"))),
        }
    }
}

/// One evaluated parameter point: the full configuration, derived
/// quantities and the output statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub m: u32,
    pub delta_t0_ns: f64,
    pub mu: f64,
    pub herald_rate: Option<f64>,
    pub e_h: f64,
    pub e_s: f64,
    pub e_sw_db: f64,
    pub r_dark: f64,
    pub mu_t: f64,
    pub e_s_tot: f64,
    pub clock_freq_hz: f64,
    pub p0: f64,
    pub p1: f64,
    pub p_ge2: f64,
    pub snr: f64,
    pub mandel_q: Option<f64>,
    pub mu_opt: Option<f64>,
    pub snr_target: Option<f64>,
    pub feasible: Option<bool>,
}

impl SweepRecord {
    pub fn from_distribution(cfg: &SourceConfig, dist: &PhotonDistribution) -> Self {
        Self {
            m: cfg.m,
            delta_t0_ns: cfg.delta_t0_ns,
            mu: cfg.mu,
            herald_rate: cfg.herald_rate,
            e_h: cfg.e_h,
            e_s: cfg.e_s,
            e_sw_db: cfg.e_sw_db,
            r_dark: cfg.r_dark,
            mu_t: cfg.mu_total(),
            e_s_tot: cfg.total_signal_transmission(),
            clock_freq_hz: cfg.clock_frequency_hz(),
            p0: dist.p0(),
            p1: dist.p1(),
            p_ge2: dist.p_ge2(),
            snr: snr(dist),
            mandel_q: mandel_q(dist).ok(),
            mu_opt: None,
            snr_target: None,
            feasible: None,
        }
    }

    /// Evaluates the full loss chain at `cfg`.
    pub fn evaluate(cfg: &SourceConfig, n_max: usize) -> Result<Self> {
        Ok(Self::from_distribution(cfg, &output_distribution(cfg, n_max)?))
    }

    pub fn source(&self) -> SourceConfig {
        SourceConfig {
            m: self.m,
            delta_t0_ns: self.delta_t0_ns,
            mu: self.mu,
            herald_rate: self.herald_rate,
            e_h: self.e_h,
            e_s: self.e_s,
            e_sw_db: self.e_sw_db,
            r_dark: self.r_dark,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub tool_version: String,
    /// Supplied by the caller; tables are byte-stable without it.
    pub timestamp: Option<String>,
    /// SHA-256 over the figure id and every record's input configuration.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub figure_id: FigureId,
    pub metadata: TableMetadata,
    pub records: Vec<SweepRecord>,
}

impl SweepTable {
    pub fn new(figure_id: FigureId, records: Vec<SweepRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Domain("a sweep needs at least one point".into()));
        }
        let mut hasher = Sha256::new();
        hasher.update(figure_id.to_string().as_bytes());
        for r in &records {
            let inputs = (r.source(), r.snr_target);
            hasher.update(serde_json::to_vec(&inputs).expect("config serializes"));
        }
        let config_hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            figure_id,
            metadata: TableMetadata {
                tool_version: TOOL_VERSION.to_string(),
                timestamp: None,
                config_hash,
            },
            records,
        })
    }

    pub fn with_timestamp(mut self, timestamp: impl Into<String>) -> Self {
        self.metadata.timestamp = Some(timestamp.into());
        self
    }

    /// Comma-separated text: one header row, one row per record.
    pub fn to_delimited(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).expect("in-memory writes cannot fail");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
    }

    /// Self-describing JSON including metadata.
    pub fn to_structured(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    /// Parses the output of [`SweepTable::to_structured`].
    pub fn from_structured(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Domain(format!("malformed sweep table: {e}")))
    }

    pub fn records_for(&self, pred: impl Fn(&SweepRecord) -> bool) -> impl Iterator<Item = &SweepRecord> {
        self.records.iter().filter(move |r| pred(r))
    }

    /// Largest single-photon probability over the records of each `(m, IL)`
    /// curve, ordered by IL then `m`.
    pub fn curve_maxima(&self) -> Vec<(f64, u32, f64)> {
        let mut out: Vec<(f64, u32, f64)> = Vec::new();
        for r in &self.records {
            match out.iter_mut().find(|(il, m, _)| *il == r.e_sw_db && *m == r.m) {
                Some(entry) => entry.2 = entry.2.max(r.p1),
                None => out.push((r.e_sw_db, r.m, r.p1)),
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    i if i == n - 1 => hi,
                    i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Grid defaults for smooth curves.
pub mod defaults {
    pub const FIG2_M: std::ops::RangeInclusive<u32> = 0..=10;
    pub const FIG3_M: std::ops::RangeInclusive<u32> = 0..=8;
    pub const FIG4_M: std::ops::RangeInclusive<u32> = 0..=6;
    pub const FIG5_M: std::ops::RangeInclusive<u32> = 0..=6;
    pub const SWITCH_LOSSES_DB: [f64; 2] = [0.5, 1.0];
    pub const FIG4_MU: [f64; 2] = [0.1, 0.2];
    pub const SNR_TARGETS: [f64; 6] = [5.0, 10.0, 20.0, 50.0, 100.0, 200.0];

    pub fn mu_grid() -> Vec<f64> {
        super::log_grid(1e-3, 2.0, 200)
    }

    pub fn il_grid() -> Vec<f64> {
        super::linear_grid(0.0, 2.0, 50)
    }
}

/// Lossless source at its optimum pump level for each stage count.
pub fn figure2(m_values: &[u32], n_max: usize) -> Result<SweepTable> {
    figure2_with_window(m_values, n_max, crate::source::DEFAULT_WINDOW_NS)
}

pub fn figure2_with_window(m_values: &[u32], n_max: usize, delta_t0_ns: f64) -> Result<SweepTable> {
    let records = m_values
        .par_iter()
        .map(|&m| {
            let template = SourceConfig {
                delta_t0_ns,
                ..SourceConfig::ideal(m, 0.0)
            };
            let opt = optimize_mu(&template, MuRange::default(), DEFAULT_TOL)?;
            let at_opt = template.with_mu(opt.mu_opt);
            let mut record = SweepRecord::evaluate(&at_opt, n_max)?;
            record.mu_opt = Some(opt.mu_opt);
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    SweepTable::new(FigureId::Fig2, records)
}

/// Single-photon probability against `mu` for each `(IL, m)` curve.
/// Heralding and static transmissions come from `base`.
pub fn figure3(base: &SourceConfig, m_values: &[u32], mu_grid: &[f64], il_db_values: &[f64], n_max: usize) -> Result<SweepTable> {
    let points: Vec<SourceConfig> = il_db_values
        .iter()
        .flat_map(|&il| m_values.iter().map(move |&m| (il, m)))
        .flat_map(|(il, m)| {
            mu_grid
                .iter()
                .map(move |&mu| base.with_mu(mu).with_stages(m).with_switch_loss_db(il))
        })
        .collect();
    evaluate_points(FigureId::Fig3, &points, n_max)
}

/// Single-photon probability against switch loss at fixed pump levels.
pub fn figure4(base: &SourceConfig, mu_values: &[f64], il_grid: &[f64], m_values: &[u32], n_max: usize) -> Result<SweepTable> {
    let points: Vec<SourceConfig> = mu_values
        .iter()
        .flat_map(|&mu| m_values.iter().map(move |&m| (mu, m)))
        .flat_map(|(mu, m)| {
            il_grid
                .iter()
                .map(move |&il| base.with_mu(mu).with_stages(m).with_switch_loss_db(il))
        })
        .collect();
    evaluate_points(FigureId::Fig4, &points, n_max)
}

/// Best single-photon probability under each SNR floor.
///
/// Infeasible floors are recorded with `feasible = false`, evaluated at the
/// pump level of highest SNR.
pub fn figure5(base: &SourceConfig, snr_grid: &[f64], m_values: &[u32], il_db_values: &[f64], n_max: usize) -> Result<SweepTable> {
    let points: Vec<(SourceConfig, f64)> = il_db_values
        .iter()
        .flat_map(|&il| m_values.iter().map(move |&m| (il, m)))
        .flat_map(|(il, m)| {
            snr_grid
                .iter()
                .map(move |&t| (base.with_stages(m).with_switch_loss_db(il), t))
        })
        .collect();
    let records = points
        .par_iter()
        .map(|(template, target)| {
            let outcome = max_p1_with_snr_floor(template, *target, MuRange::default())?;
            let (mu, feasible) = match &outcome {
                SnrConstrained::Feasible { result, .. } => (result.mu_opt, true),
                SnrConstrained::Infeasible { mu_at_max_snr, .. } => (*mu_at_max_snr, false),
            };
            let mut record = SweepRecord::evaluate(&template.with_mu(mu), n_max)?;
            record.snr_target = Some(*target);
            record.feasible = Some(feasible);
            record.mu_opt = feasible.then_some(mu);
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    SweepTable::new(FigureId::Fig5, records)
}

/// Evaluates arbitrary configurations as a custom table.
pub fn evaluate_points(figure_id: FigureId, points: &[SourceConfig], n_max: usize) -> Result<SweepTable> {
    let records = points
        .par_iter()
        .map(|cfg| SweepRecord::evaluate(cfg, n_max))
        .collect::<Result<Vec<_>>>()?;
    SweepTable::new(figure_id, records)
}

/// Axis of a one-dimensional custom sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    M,
    Mu,
    EH,
    ES,
    ESwDb,
    RDark,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(SweepAxis::M),
            "mu" => Ok(SweepAxis::Mu),
            "e_h" => Ok(SweepAxis::EH),
            "e_s" => Ok(SweepAxis::ES),
            "e_sw_db" => Ok(SweepAxis::ESwDb),
            "r_dark" => Ok(SweepAxis::RDark),
            other => Err(Error::Domain(format!("unknown sweep axis `{other}`"))),
        }
    }
}

/// Varies one field of `base` over `values`.
pub fn custom_sweep(base: &SourceConfig, axis: SweepAxis, values: &[f64], n_max: usize) -> Result<SweepTable> {
    let points = values
        .iter()
        .map(|&v| {
            let mut cfg = *base;
            match axis {
                SweepAxis::M => {
                    if !(v >= 0.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX)) {
                        return Err(Error::Domain(format!("stage count must be a whole number, got {v}")));
                    }
                    cfg.m = v as u32;
                }
                SweepAxis::Mu => cfg = cfg.with_mu(v),
                SweepAxis::EH => cfg.e_h = v,
                SweepAxis::ES => cfg.e_s = v,
                SweepAxis::ESwDb => cfg.e_sw_db = v,
                SweepAxis::RDark => cfg.r_dark = v,
            }
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_points(FigureId::Custom, &points, n_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockReport {
    pub period_ns: f64,
    pub frequency_hz: f64,
}

/// Clock period `2^m * delta_t0` and its frequency.
pub fn clock_report(cfg: &SourceConfig) -> ClockReport {
    ClockReport {
        period_ns: cfg.period_ns(),
        frequency_hz: cfg.clock_frequency_hz(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_stats::DEFAULT_N_MAX;

    #[test]
    fn clock_values() {
        let c = clock_report(&SourceConfig::ideal(4, 0.1));
        assert_eq!((c.period_ns, c.frequency_hz), (32.0, 31.25e6));
        let c = clock_report(&SourceConfig::ideal(0, 0.1));
        assert_eq!((c.period_ns, c.frequency_hz), (2.0, 500e6));
        let c = clock_report(&SourceConfig::ideal(10, 0.1));
        assert_eq!(c.period_ns, 2048.0);
        assert!((c.frequency_hz - 488_281.25).abs() < 1e-6);
    }

    #[test]
    fn grids() {
        assert_eq!(linear_grid(0.0, 2.0, 3), vec![0.0, 1.0, 2.0]);
        let g = log_grid(1e-3, 2.0, 200);
        assert_eq!(g.len(), 200);
        assert_eq!((g[0], g[199]), (1e-3, 2.0));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn figure_ids_parse() {
        for id in [FigureId::Fig2, FigureId::Fig3, FigureId::Fig4, FigureId::Fig5, FigureId::Custom] {
            assert_eq!(id.to_string().parse::<FigureId>().unwrap(), id);
        }
        assert!("fig9".parse::<FigureId>().is_err());
    }

    #[test]
    fn empty_tables_rejected() {
        assert!(SweepTable::new(FigureId::Custom, Vec::new()).is_err());
    }

    #[test]
    fn figure2_single_window_row() {
        let t = figure2(&[0], DEFAULT_N_MAX).unwrap();
        let r = &t.records[0];
        assert!((r.mu_opt.unwrap() - 1.0).abs() < 1e-5);
        assert!((r.p1 - (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn figure4_lossless_switch_column() {
        let base = SourceConfig::lossy(0, 0.1, 0.0);
        let t = figure4(&base, &[0.1], &[0.0, 0.5], &[0, 4], DEFAULT_N_MAX).unwrap();
        for r in t.records_for(|r| r.e_sw_db == 0.0) {
            assert_eq!(r.e_s_tot, 0.9);
        }
    }

    #[test]
    fn delimited_output_shape() {
        let base = SourceConfig::lossy(0, 0.1, 0.5);
        let t = figure3(&base, &[0, 1], &[0.1, 0.2], &[0.5], DEFAULT_N_MAX).unwrap();
        let text = t.to_delimited();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("m,delta_t0_ns,mu,herald_rate,e_h,"));
        assert_eq!(SweepTable::from_structured(&t.to_structured()).unwrap(), t);
    }

    #[test]
    fn custom_sweep_rejects_fractional_stages() {
        let base = SourceConfig::lossy(0, 0.1, 0.5);
        assert!(custom_sweep(&base, SweepAxis::M, &[1.5], DEFAULT_N_MAX).is_err());
        assert!(custom_sweep(&base, SweepAxis::EH, &[1.5], DEFAULT_N_MAX).is_err());
        let t = custom_sweep(&base, SweepAxis::M, &[0.0, 1.0, 2.0], DEFAULT_N_MAX).unwrap();
        assert_eq!(t.records.iter().map(|r| r.m).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
