//! Run configuration: a line-oriented `key = value` file, then flag
//! overrides, validated into a [`RunConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use msps_core::experiments::{FigureId, SweepAxis};
use msps_core::{McConfig, SourceConfig, DEFAULT_N_MAX};
use serde::Serialize;

/// Where a key's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Line(usize),
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl ConfigError {
    fn at(key: &str, origin: Option<Origin>, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            line: match origin {
                Some(Origin::Line(l)) => Some(l),
                _ => None,
            },
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// Comma-separated, one header row.
    #[default]
    Tabular,
    /// Pretty-printed JSON with metadata.
    Structured,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Tabular => "csv",
            OutputFormat::Structured => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Dist {
        trace: bool,
    },
    Optimize {
        snr_target: Option<f64>,
        mu_min: f64,
        mu_max: f64,
        tol: f64,
    },
    Sweep {
        axis: SweepAxis,
        from: f64,
        to: f64,
        points: usize,
        log: bool,
    },
    Figure {
        id: FigureId,
        with_dark_counts: bool,
    },
    MonteCarlo,
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Dist { .. } => "dist",
            Command::Optimize { .. } => "optimize",
            Command::Sweep { .. } => "sweep",
            Command::Figure { .. } => "figure",
            Command::MonteCarlo => "montecarlo",
            Command::Validate => "validate",
        }
    }

    /// Figures and validation run on built-in parameter sets; the rest need
    /// an explicit source.
    fn needs_source(&self) -> bool {
        !matches!(self, Command::Figure { .. } | Command::Validate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub source: SourceConfig,
    pub mc: McConfig,
    pub n_max: usize,
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
    /// Flag overrides in the order given, applied after the file.
    pub overrides: Vec<(String, String)>,
}

/// Accepted keys, with their aliases.
const KEYS: &[(&str, &[&str])] = &[
    ("m", &[]),
    ("delta_t0_ns", &[]),
    ("mu", &[]),
    ("r", &["herald_rate_r", "herald_rate"]),
    ("e_h", &[]),
    ("e_s", &[]),
    ("e_sw_db", &[]),
    ("r_dark", &[]),
    ("n_max", &[]),
    ("trials", &[]),
    ("seed", &[]),
    ("shards", &[]),
    ("output_path", &["output"]),
    ("output_format", &["format"]),
];

fn canonical(key: &str) -> Option<&'static str> {
    KEYS.iter()
        .find(|(name, aliases)| *name == key || aliases.contains(&key))
        .map(|(name, _)| *name)
}

struct Values(BTreeMap<&'static str, (String, Origin)>);

impl Values {
    fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let name = canonical(key).ok_or_else(|| ConfigError::at(key, Some(origin), "unknown key"))?;
        if let (Origin::Line(_), Some((_, Origin::Line(first)))) = (origin, self.0.get(name)) {
            return Err(ConfigError::at(key, Some(origin), format!("duplicate key, first set on line {first}")));
        }
        let value = value.trim().trim_matches('"').to_string();
        self.0.insert(name, (value, origin));
        Ok(())
    }

    fn origin(&self, key: &str) -> Option<Origin> {
        self.0.get(key).map(|(_, o)| *o)
    }

    fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some((raw, origin)) = self.0.get(key) else {
            return Ok(None);
        };
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Some)
            .ok_or_else(|| ConfigError::at(key, Some(*origin), format!("expected a finite number, got `{raw}`")))
    }

    /// Whole numbers, also accepting exponent notation such as `1e6`.
    fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        let Some((raw, origin)) = self.0.get(key) else {
            return Ok(None);
        };
        if let Ok(v) = raw.parse::<u64>() {
            return Ok(Some(v));
        }
        match raw.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(Some(v as u64)),
            _ => Err(ConfigError::at(key, Some(*origin), format!("expected a non-negative integer, got `{raw}`"))),
        }
    }
}

/// Splits `key = value` lines; `#` starts a comment.
fn parse_lines(text: &str, values: &mut Values) -> Result<(), ConfigError> {
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError {
                key: None,
                line: Some(line),
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(ConfigError::at(key, Some(Origin::Line(line)), "missing value"));
        }
        values.set(key, value, Origin::Line(line))?;
    }
    Ok(())
}

/// Parses an optional config file and `--key value` overrides into a fully
/// validated [`RunConfig`].
pub fn parse_config(file: Option<&str>, overrides: &[(String, String)], command: Command) -> Result<RunConfig, ConfigError> {
    let mut values = Values(BTreeMap::new());
    if let Some(text) = file {
        parse_lines(text, &mut values)?;
    }
    for (key, value) in overrides {
        values.set(key, value, Origin::Flag)?;
    }

    let base = if command.needs_source() {
        SourceConfig::ideal(0, 0.0)
    } else {
        SourceConfig::default()
    };
    let m = match values.get_u64("m")? {
        Some(m) => u32::try_from(m).map_err(|_| ConfigError::at("m", values.origin("m"), "stage count too large"))?,
        None if command.needs_source() => {
            return Err(ConfigError::at("m", None, "missing required key"));
        }
        None => base.m,
    };
    let mut source = SourceConfig {
        m,
        delta_t0_ns: values.get_f64("delta_t0_ns")?.unwrap_or(base.delta_t0_ns),
        e_h: values.get_f64("e_h")?.unwrap_or(base.e_h),
        e_s: values.get_f64("e_s")?.unwrap_or(base.e_s),
        e_sw_db: values.get_f64("e_sw_db")?.unwrap_or(base.e_sw_db),
        r_dark: values.get_f64("r_dark")?.unwrap_or(base.r_dark),
        ..base
    };
    let rate = values.get_f64("r")?;
    match (values.get_f64("mu")?, rate) {
        (Some(mu), rate) => {
            source.mu = mu;
            source.herald_rate = rate;
        }
        (None, Some(rate)) => {
            source.mu = source.window_seconds() * rate;
            source.herald_rate = Some(rate);
        }
        (None, None) if command.needs_source() => {
            return Err(ConfigError::at("mu", None, "missing required key (give `mu` or `r`)"));
        }
        (None, None) => {}
    }
    if let Err(msps_core::Error::InvalidConfig { field, reason }) = source.validate() {
        let key = match field {
            "herald_rate" => "r",
            other => other,
        };
        return Err(ConfigError::at(key, values.origin(key), reason));
    }

    let defaults = McConfig::default();
    let mc = McConfig {
        trials: values.get_u64("trials")?.unwrap_or(defaults.trials),
        seed: values.get_u64("seed")?.unwrap_or(defaults.seed),
        shards: values.get_u64("shards")?.map_or(defaults.shards, |s| s as usize),
    };
    if let Err(e) = mc.validate() {
        let key = if mc.trials == 0 || mc.trials > msps_core::mc_oracle::MAX_TRIALS { "trials" } else { "shards" };
        return Err(ConfigError::at(key, values.origin(key), e.to_string()));
    }

    let n_max = values.get_u64("n_max")?.map_or(DEFAULT_N_MAX, |n| n as usize);
    if n_max < 2 {
        return Err(ConfigError::at("n_max", values.origin("n_max"), "must be at least 2"));
    }
    let output_format = match values.0.get("output_format") {
        None => OutputFormat::default(),
        Some((v, origin)) => match v.as_str() {
            "tabular" | "csv" => OutputFormat::Tabular,
            "structured" | "json" => OutputFormat::Structured,
            other => {
                return Err(ConfigError::at(
                    "output_format",
                    Some(*origin),
                    format!("expected `tabular` or `structured`, got `{other}`"),
                ))
            }
        },
    };
    let output_path = values.0.get("output_path").map(|(v, _)| PathBuf::from(v));

    Ok(RunConfig {
        command,
        source,
        mc,
        n_max,
        output_path,
        output_format,
        overrides: overrides.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
# half-dB switches, four stages
m = 4
delta_t0_ns = 2
mu = 0.1
e_h = 0.85
e_s = 0.9
e_sw_db = 0.5
r_dark = 0
";

    fn dist() -> Command {
        Command::Dist { trace: false }
    }

    #[test]
    fn minimal_file() {
        let cfg = parse_config(Some(MINIMAL), &[], dist()).unwrap();
        assert_eq!(cfg.source, SourceConfig::lossy(4, 0.1, 0.5));
        assert_eq!(cfg.n_max, DEFAULT_N_MAX);
        assert_eq!(cfg.output_format, OutputFormat::Tabular);
    }

    #[test]
    fn range_error_names_key_and_line() {
        let text = MINIMAL.replace("e_h = 0.85", "e_h = 1.2");
        let err = parse_config(Some(&text), &[], dist()).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("e_h"));
        assert_eq!(err.line, Some(5));
        assert!(err.to_string().contains("line 5"));
    }

    #[test]
    fn inconsistent_rate() {
        let text = "m = 4\nmu = 0.1\nr = 100e6\ndelta_t0_ns = 2\n";
        let err = parse_config(Some(text), &[], dist()).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("mu"));
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn rate_alone_sets_mu() {
        let cfg = parse_config(Some("m = 1\nr = 50e6\n"), &[], dist()).unwrap();
        assert!((cfg.source.mu - 0.1).abs() < 1e-12);
    }

    #[test]
    fn flags_override_file() {
        let overrides = vec![("e_sw_db".to_string(), "1.0".to_string()), ("trials".into(), "1e6".into())];
        let cfg = parse_config(Some(MINIMAL), &overrides, dist()).unwrap();
        assert_eq!(cfg.source.e_sw_db, 1.0);
        assert_eq!(cfg.mc.trials, 1_000_000);
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        let err = parse_config(Some("m = 1\nmu = 0.1\ncolour = blue\n"), &[], dist()).unwrap_err();
        assert_eq!((err.key.as_deref(), err.line), (Some("colour"), Some(3)));
        let err = parse_config(Some("mu = 0.1\n"), &[], dist()).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("m"));
        let err = parse_config(Some("m = 2\n"), &[], dist()).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("mu"));
        let err = parse_config(None, &[("bogus".into(), "1".into())], dist()).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("bogus"));
    }

    #[test]
    fn rejects_malformed_lines() {
        let err = parse_config(Some("m = 1\nmu 0.1\n"), &[], dist()).unwrap_err();
        assert_eq!(err.line, Some(2));
        let err = parse_config(Some("m = 1\nmu = abc\n"), &[], dist()).unwrap_err();
        assert_eq!((err.key.as_deref(), err.line), (Some("mu"), Some(2)));
        let err = parse_config(Some("m = 1\nm = 2\nmu = 0.1\n"), &[], dist()).unwrap_err();
        assert_eq!(err.line, Some(2));
        let err = parse_config(Some("m = 1.5\nmu = 0.1\n"), &[], dist()).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("m"));
    }

    #[test]
    fn figure_runs_without_source() {
        let cmd = Command::Figure {
            id: FigureId::Fig2,
            with_dark_counts: false,
        };
        let cfg = parse_config(None, &[], cmd).unwrap();
        assert_eq!(cfg.source, SourceConfig::default());
    }

    #[test]
    fn output_options() {
        let cfg = parse_config(
            Some("m = 0\nmu = 1\noutput = \"out/table.json\"\nformat = structured\n"),
            &[],
            dist(),
        )
        .unwrap();
        assert_eq!(cfg.output_format, OutputFormat::Structured);
        assert_eq!(cfg.output_path, Some(PathBuf::from("out/table.json")));
        assert!(parse_config(Some("m = 0\nmu = 1\nformat = xml\n"), &[], dist()).is_err());
    }
}
