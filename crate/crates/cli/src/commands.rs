//! Subcommand execution. Each command renders one document and collects
//! any error records it raised along the way.

use msps_core::experiments::{self, defaults, FigureId, SweepTable, TOOL_VERSION};
use msps_core::optimizer::max_p1_with_snr_floor_tol;
use msps_core::validation::run_validation;
use msps_core::{
    clock_report, compare, mandel_q, optimize_mu, output_distribution, output_trace, simulate, snr, MuRange,
    OptimizationResult, PhotonDistribution, SnrConstrained,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, ConfigError, OutputFormat, RunConfig};
use crate::output::{self, num, opt_num, Table};

/// A machine-readable error, printed as `{"error": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub message: String,
}

impl ErrorRecord {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            key: None,
            line: None,
            message: message.into(),
        }
    }

    pub fn with_key(mut self, key: &str) -> Self {
        self.key = Some(key.to_string());
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&json!({ "error": self })).expect("error record serializes")
    }
}

impl From<ConfigError> for ErrorRecord {
    fn from(e: ConfigError) -> Self {
        Self {
            kind: "config",
            key: e.key,
            line: e.line,
            message: e.message,
        }
    }
}

impl From<msps_core::Error> for ErrorRecord {
    fn from(e: msps_core::Error) -> Self {
        match e {
            msps_core::Error::InvalidConfig { field, reason } => Self::new("config", reason).with_key(field),
            other => Self::new("model", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub document: String,
    /// File name used when writing into the default output directory.
    pub default_name: String,
    /// Records for failed checks; the document is still written.
    pub errors: Vec<ErrorRecord>,
}

/// Body of a command before formatting.
struct Body {
    table: Table,
    result: Value,
    errors: Vec<ErrorRecord>,
}

/// Executes `cfg.command`. `timestamp` is copied into the metadata verbatim.
pub fn run(cfg: &RunConfig, timestamp: Option<&str>) -> Result<Rendered, ErrorRecord> {
    let body = match &cfg.command {
        Command::Dist { trace } => dist(cfg, *trace)?,
        Command::Optimize {
            snr_target,
            mu_min,
            mu_max,
            tol,
        } => optimize(cfg, *snr_target, *mu_min, *mu_max, *tol)?,
        Command::Sweep {
            axis,
            from,
            to,
            points,
            log,
        } => {
            if *points == 0 {
                return Err(ErrorRecord::new("config", "need at least one point").with_key("points"));
            }
            if *log && !(*from > 0.0 && *to > 0.0) {
                return Err(ErrorRecord::new("config", "log spacing needs positive bounds").with_key("from"));
            }
            let values = if *log {
                experiments::log_grid(*from, *to, *points)
            } else {
                experiments::linear_grid(*from, *to, *points)
            };
            table_body(experiments::custom_sweep(&cfg.source, *axis, &values, cfg.n_max)?, timestamp)
        }
        Command::Figure { id, with_dark_counts } => {
            let mut base = cfg.source;
            if !with_dark_counts {
                base.r_dark = 0.0;
            }
            table_body(figure(*id, &base, cfg.n_max)?, timestamp)
        }
        Command::MonteCarlo => montecarlo(cfg)?,
        Command::Validate => validate(cfg)?,
    };
    Ok(render(cfg, body, timestamp))
}

fn figure(id: FigureId, base: &msps_core::SourceConfig, n_max: usize) -> msps_core::Result<SweepTable> {
    let collect = |r: std::ops::RangeInclusive<u32>| r.collect::<Vec<_>>();
    match id {
        FigureId::Fig2 => experiments::figure2_with_window(&collect(defaults::FIG2_M), n_max, base.delta_t0_ns),
        FigureId::Fig3 => experiments::figure3(
            base,
            &collect(defaults::FIG3_M),
            &defaults::mu_grid(),
            &defaults::SWITCH_LOSSES_DB,
            n_max,
        ),
        FigureId::Fig4 => experiments::figure4(
            base,
            &defaults::FIG4_MU,
            &defaults::il_grid(),
            &collect(defaults::FIG4_M),
            n_max,
        ),
        FigureId::Fig5 => experiments::figure5(
            base,
            &defaults::SNR_TARGETS,
            &collect(defaults::FIG5_M),
            &defaults::SWITCH_LOSSES_DB,
            n_max,
        ),
        FigureId::Custom => Err(msps_core::Error::Domain("`custom` tables come from `sweep`".into())),
    }
}

/// Sweep tables already carry the full configuration on every row.
fn table_body(table: SweepTable, timestamp: Option<&str>) -> Body {
    let table = match timestamp {
        Some(t) => table.with_timestamp(t),
        None => table,
    };
    let csv = table.to_delimited();
    let mut rows = csv::Reader::from_reader(csv.as_bytes());
    let mut out = Table::new(rows.headers().expect("own csv").iter());
    for row in rows.records() {
        out.push(row.expect("own csv").iter().map(str::to_string).collect());
    }
    Body {
        table: out,
        result: output::json(&table),
        errors: Vec::new(),
    }
}

fn source_columns(cfg: &RunConfig) -> Vec<(String, String)> {
    let s = &cfg.source;
    vec![
        ("m".into(), s.m.to_string()),
        ("delta_t0_ns".into(), num(s.delta_t0_ns)),
        ("mu".into(), num(s.mu)),
        ("herald_rate".into(), opt_num(s.herald_rate)),
        ("e_h".into(), num(s.e_h)),
        ("e_s".into(), num(s.e_s)),
        ("e_sw_db".into(), num(s.e_sw_db)),
        ("r_dark".into(), num(s.r_dark)),
        ("n_max".into(), cfg.n_max.to_string()),
    ]
}

fn mc_columns(cfg: &RunConfig) -> Vec<(String, String)> {
    vec![
        ("trials".into(), cfg.mc.trials.to_string()),
        ("seed".into(), cfg.mc.seed.to_string()),
        ("shards".into(), cfg.mc.shards.to_string()),
    ]
}

fn uses_mc(command: &Command) -> bool {
    matches!(command, Command::MonteCarlo | Command::Validate)
}

fn summary(dist: &PhotonDistribution) -> Value {
    json!({
        "p0": dist.p0(),
        "p1": dist.p1(),
        "p_ge2": dist.p_ge2(),
        "mean": dist.mean(),
        "snr": snr(dist),
        "mandel_q": mandel_q(dist).ok(),
        "tail_mass": dist.tail_mass(),
    })
}

fn dist(cfg: &RunConfig, trace: bool) -> Result<Body, ErrorRecord> {
    let clock = clock_report(&cfg.source);
    if !trace {
        let d = output_distribution(&cfg.source, cfg.n_max)?;
        let mut table = Table::new(["n", "p"]);
        for (n, p) in d.probs().iter().enumerate() {
            table.push(vec![n.to_string(), num(*p)]);
        }
        let result = json!({ "clock": clock, "summary": summary(&d), "probs": d.probs() });
        return Ok(Body {
            table,
            result,
            errors: Vec::new(),
        });
    }
    let chain = output_trace(&cfg.source, cfg.n_max)?;
    let mut header = vec!["n".to_string()];
    header.extend(chain.stages().iter().map(|(s, _)| s.label().to_string()));
    let mut table = Table::new(header);
    for n in 0..=cfg.n_max {
        let mut row = vec![n.to_string()];
        row.extend(chain.stages().iter().map(|(_, d)| num(d.get(n))));
        table.push(row);
    }
    let stages: Vec<Value> = chain
        .stages()
        .iter()
        .map(|(s, d)| json!({ "stage": s.label(), "summary": summary(d), "probs": d.probs() }))
        .collect();
    Ok(Body {
        table,
        result: json!({ "clock": clock, "stages": stages }),
        errors: Vec::new(),
    })
}

const OPT_COLUMNS: [&str; 7] = [
    "mu_opt",
    "p1_max",
    "snr_at_opt",
    "mandel_q_at_opt",
    "iterations",
    "converged",
    "boundary",
];

fn opt_cells(r: &OptimizationResult) -> Vec<String> {
    vec![
        num(r.mu_opt),
        num(r.p1_max),
        num(r.snr_at_opt),
        num(r.mandel_q_at_opt),
        r.iterations.to_string(),
        r.converged.to_string(),
        match r.boundary {
            Some(msps_core::Bound::Lower) => "lower".into(),
            Some(msps_core::Bound::Upper) => "upper".into(),
            None => String::new(),
        },
    ]
}

fn optimize(cfg: &RunConfig, target: Option<f64>, lo: f64, hi: f64, tol: f64) -> Result<Body, ErrorRecord> {
    let range = MuRange::new(lo, hi).map_err(|e| ErrorRecord::from(e).with_key("mu_min"))?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(ErrorRecord::new("config", format!("must be finite and > 0, got {tol}")).with_key("tol"));
    }
    let range_cells = vec![num(lo), num(hi), num(tol)];
    let mut header: Vec<&str> = vec!["mu_min", "mu_max", "tol"];
    let Some(target) = target else {
        let r = optimize_mu(&cfg.source, range, tol)?;
        header.extend(OPT_COLUMNS);
        let mut table = Table::new(header);
        table.push([range_cells, opt_cells(&r)].concat());
        return Ok(Body {
            table,
            result: output::json(&r),
            errors: Vec::new(),
        });
    };
    let outcome = max_p1_with_snr_floor_tol(&cfg.source, target, range, tol)?;
    header.extend(["snr_target", "status"]);
    header.extend(OPT_COLUMNS);
    header.extend(["constraint_active", "max_snr", "mu_at_max_snr"]);
    let mut table = Table::new(header);
    let row = match &outcome {
        SnrConstrained::Feasible {
            result,
            constraint_active,
            ..
        } => [
            range_cells,
            vec![num(target), "feasible".into()],
            opt_cells(result),
            vec![constraint_active.to_string(), String::new(), String::new()],
        ]
        .concat(),
        SnrConstrained::Infeasible {
            max_snr, mu_at_max_snr, ..
        } => [
            range_cells,
            vec![num(target), "infeasible".into()],
            vec![String::new(); OPT_COLUMNS.len()],
            vec![String::new(), num(*max_snr), num(*mu_at_max_snr)],
        ]
        .concat(),
    };
    table.push(row);
    Ok(Body {
        table,
        result: output::json(&outcome),
        errors: Vec::new(),
    })
}

fn montecarlo(cfg: &RunConfig) -> Result<Body, ErrorRecord> {
    let analytic = output_distribution(&cfg.source, cfg.n_max)?;
    let hist = simulate(&cfg.source, &cfg.mc)?;
    let report = compare(&cfg.source, &analytic, &hist)?;
    let mut table = Table::new([
        "tv_distance",
        "tv_limit",
        "passed",
        "n",
        "count",
        "frequency",
        "analytic",
        "z",
    ]);
    let bins = report.z_scores.len();
    for n in 0..bins {
        table.push(vec![
            num(report.tv_distance),
            num(report.tv_limit),
            report.passed.to_string(),
            n.to_string(),
            hist.count(n).to_string(),
            num(hist.frequency(n)),
            num(analytic.get(n)),
            num(report.z_scores[n]),
        ]);
    }
    let mut errors = Vec::new();
    if !report.passed {
        errors.push(ErrorRecord::new(
            "check",
            format!(
                "simulation disagrees with the analytic distribution: TV {} (limit {}), max |z| {}",
                report.tv_distance, report.tv_limit, report.max_abs_z
            ),
        ));
    }
    Ok(Body {
        table,
        result: json!({ "counts": hist.counts, "analytic": analytic.probs(), "comparison": report }),
        errors,
    })
}

fn validate(cfg: &RunConfig) -> Result<Body, ErrorRecord> {
    let report = run_validation(cfg.mc.trials, cfg.mc.seed)?;
    let mut table = Table::new(["check", "passed", "detail"]);
    let mut errors = Vec::new();
    for c in &report.checks {
        table.push(vec![c.name.clone(), c.passed.to_string(), c.detail.clone()]);
        if !c.passed {
            errors.push(ErrorRecord::new("check", format!("{}: {}", c.name, c.detail)).with_key(&c.name));
        }
    }
    Ok(Body {
        table,
        result: json!({ "passed": report.passed(), "checks": report.checks }),
        errors,
    })
}

fn render(cfg: &RunConfig, body: Body, timestamp: Option<&str>) -> Rendered {
    let name = cfg.command.name();
    let mut stem = name.to_string();
    if let Command::Figure { id, .. } = &cfg.command {
        stem = id.to_string();
    }
    let sweep_like = matches!(cfg.command, Command::Figure { .. } | Command::Sweep { .. });
    let document = match cfg.output_format {
        OutputFormat::Tabular => {
            let table = if sweep_like {
                body.table.with_prefix(&[("n_max".into(), cfg.n_max.to_string())])
            } else {
                let mut prefix = source_columns(cfg);
                if uses_mc(&cfg.command) {
                    prefix.extend(mc_columns(cfg));
                }
                body.table.with_prefix(&prefix)
            };
            table.to_csv()
        }
        OutputFormat::Structured => {
            let mut config = json!({ "source": cfg.source, "n_max": cfg.n_max });
            if uses_mc(&cfg.command) {
                config["mc"] = output::json(&cfg.mc);
            }
            if let Command::Sweep { axis, from, to, points, log } = &cfg.command {
                config["sweep"] = json!({ "axis": axis, "from": from, "to": to, "points": points, "log": log });
            }
            if let Command::Figure { with_dark_counts, .. } = &cfg.command {
                config["with_dark_counts"] = json!(with_dark_counts);
            }
            output::to_json(&json!({
                "command": name,
                "tool_version": TOOL_VERSION,
                "timestamp": timestamp,
                "config": config,
                "result": body.result,
            }))
        }
    };
    Rendered {
        document,
        default_name: format!("{stem}.{}", cfg.output_format.extension()),
        errors: body.errors,
    }
}
