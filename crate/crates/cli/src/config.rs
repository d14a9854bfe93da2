//! Run configuration: a flat `key = value` file (or a JSON object) overlaid by
//! command-line flags.
//!
//! Text grammar, one entry per line:
//!
//! ```text
//! # comment
//! beta1 = -2
//! beta2: 1
//! scheme = maximal
//! ```
//!
//! Keys are case-sensitive, blank lines and `#` comments are ignored, and a value
//! runs to the end of the line (trailing `# ...` stripped). A file whose first
//! non-blank character is `{` is read as a JSON object of scalars instead.

use std::collections::BTreeMap;
use std::path::Path;

use bifsim_core::solver::{ModelParams, Scheme};
use serde::Serialize;

/// Every key accepted in a config file or as a flag, with a short description.
pub const KEYS: &[(&str, &str)] = &[
    ("beta1", "drift while X <= B"),
    ("beta2", "drift while X > B"),
    ("alpha1", "exponent on the X <= B side"),
    ("alpha2", "exponent on the X > B side"),
    ("sigma2", "driver variance per unit time"),
    ("t0", "start time"),
    ("x0", "start value of X"),
    ("dt", "driver step"),
    ("horizon", "path length, or the give-up time for escape runs"),
    ("trials", "Monte Carlo trials"),
    ("seed", "master seed"),
    ("epsilon", "local-time bandwidth, or smoothing width for the smoothed scheme"),
    ("barrier", "escape barrier on |Y|"),
    ("out", "output directory for CSV and report files"),
    ("scheme", "maximal | minimal | smoothed | push | adaptive"),
    ("delta", "push size for the push scheme, profile spacing for rayknight"),
    ("tol", "adaptive / bisection tolerance"),
    ("x_max", "right end of the rayknight profile grid"),
    ("bin_width", "local-time bin width for rayknight moments"),
    ("min_bin", "smallest bin count that is checked"),
    ("resolution", "minimum excursion height"),
    ("margin", "envelope window margin"),
    ("x1", "left start value for the flow-derivative check"),
    ("x2", "right start value for the flow-derivative check"),
    ("n_sub", "odd number of subgrid points for the flow-derivative check"),
    ("t_eval", "evaluation time for the flow-derivative check"),
    ("driver", "driver file to read (.csv or .bin)"),
    ("format", "csv | bin"),
    ("only", "comma-separated acceptance criteria to run"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    UnknownKey { key: String },
    BadValue { key: String, value: String, reason: String },
    Syntax { line: usize, text: String },
    Io(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::UnknownKey { key } => {
                let valid: Vec<&str> = KEYS.iter().map(|k| k.0).collect();
                write!(f, "unknown config key `{key}`; valid keys: {}", valid.join(", "))
            }
            ConfigError::BadValue { key, value, reason } => write!(f, "invalid value `{value}` for `{key}`: {reason}"),
            ConfigError::Syntax { line, text } => write!(f, "line {line}: expected `key = value`, got `{text}`"),
            ConfigError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

pub type Entries = BTreeMap<String, String>;

fn check_key(key: &str) -> Result<(), ConfigError> {
    if KEYS.iter().any(|k| k.0 == key) {
        Ok(())
    } else {
        Err(ConfigError::UnknownKey { key: key.to_string() })
    }
}

pub fn parse_text(src: &str) -> Result<Entries, ConfigError> {
    let mut out = Entries::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
        }
        check_key(k)?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

pub fn parse_json(src: &str) -> Result<Entries, ConfigError> {
    let v: serde_json::Value = serde_json::from_str(src).map_err(|e| ConfigError::Io(format!("config JSON: {e}")))?;
    let obj = v.as_object().ok_or_else(|| ConfigError::Io("config JSON must be an object".into()))?;
    let mut out = Entries::new();
    for (k, v) in obj {
        check_key(k)?;
        let s = match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            _ => {
                return Err(ConfigError::BadValue { key: k.clone(), value: v.to_string(), reason: "expected a scalar".into() })
            }
        };
        out.insert(k.clone(), s);
    }
    Ok(out)
}

pub fn parse(src: &str) -> Result<Entries, ConfigError> {
    if src.trim_start().starts_with('{') {
        parse_json(src)
    } else {
        parse_text(src)
    }
}

pub fn load(path: &Path) -> Result<Entries, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse(&src)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Maximal,
    Minimal,
    Smoothed,
    Push,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Bin,
}

/// Fully validated settings. Fields left as `None` fall back to per-command defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: ModelParams,
    pub dt: f64,
    pub horizon: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub epsilon: Option<f64>,
    pub barrier: Option<f64>,
    pub out: Option<String>,
    pub scheme: SchemeName,
    pub delta: Option<f64>,
    pub tol: f64,
    pub x_max: Option<f64>,
    pub bin_width: Option<f64>,
    pub min_bin: usize,
    pub resolution: Option<f64>,
    pub margin: Option<f64>,
    pub x1: f64,
    pub x2: f64,
    pub n_sub: usize,
    pub t_eval: f64,
    pub driver: Option<String>,
    pub format: Format,
    pub only: Option<Vec<u8>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ModelParams::new(-1.0, 1.0),
            dt: 1e-3,
            horizon: None,
            trials: 1000,
            seed: 1,
            epsilon: None,
            barrier: None,
            out: None,
            scheme: SchemeName::Maximal,
            delta: None,
            tol: 1e-10,
            x_max: None,
            bin_width: None,
            min_bin: 300,
            resolution: None,
            margin: None,
            x1: -0.5,
            x2: 0.5,
            n_sub: 21,
            t_eval: 1.0,
            driver: None,
            format: Format::Csv,
            only: None,
        }
    }
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.into() }
}

fn num(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| bad(key, v, "not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(key, v, "must be finite"))
    }
}

fn positive(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = num(key, v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(bad(key, v, "must be positive"))
    }
}

fn count(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| bad(key, v, "not a nonnegative integer"))
}

impl RunConfig {
    pub fn from_entries(e: &Entries) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        for (k, v) in e {
            let v = v.as_str();
            match k.as_str() {
                "beta1" => c.params.beta1 = num(k, v)?,
                "beta2" => c.params.beta2 = num(k, v)?,
                "alpha1" => c.params.alpha1 = num(k, v)?,
                "alpha2" => c.params.alpha2 = num(k, v)?,
                "sigma2" => c.params.sigma2 = positive(k, v)?,
                "t0" => c.params.t0 = num(k, v)?,
                "x0" => c.params.x0 = num(k, v)?,
                "dt" => c.dt = positive(k, v)?,
                "horizon" => c.horizon = Some(positive(k, v)?),
                "trials" => {
                    c.trials = count(k, v)?;
                    if c.trials == 0 {
                        return Err(bad(k, v, "need at least one trial"));
                    }
                }
                "seed" => c.seed = v.parse().map_err(|_| bad(k, v, "not an unsigned 64-bit integer"))?,
                "epsilon" => c.epsilon = Some(positive(k, v)?),
                "barrier" => c.barrier = Some(positive(k, v)?),
                "out" => c.out = Some(v.to_string()),
                "scheme" => {
                    c.scheme = match v {
                        "maximal" => SchemeName::Maximal,
                        "minimal" => SchemeName::Minimal,
                        "smoothed" => SchemeName::Smoothed,
                        "push" => SchemeName::Push,
                        "adaptive" => SchemeName::Adaptive,
                        _ => return Err(bad(k, v, "expected maximal, minimal, smoothed, push or adaptive")),
                    }
                }
                "delta" => c.delta = Some(positive(k, v)?),
                "tol" => c.tol = positive(k, v)?,
                "x_max" => c.x_max = Some(positive(k, v)?),
                "bin_width" => c.bin_width = Some(positive(k, v)?),
                "min_bin" => c.min_bin = count(k, v)?,
                "resolution" => {
                    let r = num(k, v)?;
                    if r < 0.0 {
                        return Err(bad(k, v, "must be nonnegative"));
                    }
                    c.resolution = Some(r);
                }
                "margin" => c.margin = Some(positive(k, v)?),
                "x1" => c.x1 = num(k, v)?,
                "x2" => c.x2 = num(k, v)?,
                "n_sub" => {
                    c.n_sub = count(k, v)?;
                    if c.n_sub < 3 || c.n_sub % 2 == 0 {
                        return Err(bad(k, v, "must be odd and at least 3"));
                    }
                }
                "t_eval" => c.t_eval = positive(k, v)?,
                "driver" => c.driver = Some(v.to_string()),
                "format" => {
                    c.format = match v {
                        "csv" => Format::Csv,
                        "bin" => Format::Bin,
                        _ => return Err(bad(k, v, "expected csv or bin")),
                    }
                }
                "only" => {
                    let ids = v
                        .split(',')
                        .map(|s| s.trim().parse::<u8>().ok().filter(|i| (1..=11).contains(i)))
                        .collect::<Option<Vec<u8>>>()
                        .ok_or_else(|| bad(k, v, "expected criterion numbers 1 to 11"))?;
                    c.only = Some(ids);
                }
                _ => return Err(ConfigError::UnknownKey { key: k.clone() }),
            }
        }
        if c.x1 > c.x2 {
            return Err(bad("x1", &c.x1.to_string(), "must not exceed x2"));
        }
        c.params.validate().map_err(|err| bad("params", "", err.to_string()))?;
        Ok(c)
    }

    pub fn horizon_or(&self, default: f64) -> f64 {
        self.horizon.unwrap_or(default)
    }

    /// Number of driver steps covering `span` at the configured step.
    pub fn steps(&self, span: f64) -> usize {
        ((span / self.dt).round() as usize).max(1)
    }

    pub fn scheme(&self) -> Result<Scheme, ConfigError> {
        Ok(match self.scheme {
            SchemeName::Maximal => Scheme::Maximal,
            SchemeName::Minimal => Scheme::Minimal,
            SchemeName::Smoothed => Scheme::Smoothed {
                epsilon: self.epsilon.ok_or_else(|| bad("epsilon", "", "the smoothed scheme needs epsilon"))?,
            },
            SchemeName::Push => Scheme::DeltaPush {
                delta: self.delta.ok_or_else(|| bad("delta", "", "the push scheme needs delta"))?,
            },
            SchemeName::Adaptive => Scheme::Adaptive { tol: self.tol },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_grammar() {
        let e = parse("# demo\nbeta1 = -2\n\nbeta2: 1   # trailing\nscheme=minimal\n").unwrap();
        assert_eq!(e["beta1"], "-2");
        assert_eq!(e["beta2"], "1");
        let c = RunConfig::from_entries(&e).unwrap();
        assert_eq!(c.params.beta1, -2.0);
        assert_eq!(c.scheme, SchemeName::Minimal);
    }

    #[test]
    fn json_alternative() {
        let e = parse(r#"{"beta1": -2, "trials": 50, "scheme": "push", "delta": 0.01}"#).unwrap();
        let c = RunConfig::from_entries(&e).unwrap();
        assert_eq!(c.trials, 50);
        assert_eq!(c.scheme().unwrap(), Scheme::DeltaPush { delta: 0.01 });
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = parse("beta3 = 1").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("beta3") && msg.contains("beta1") && msg.contains("scheme"), "{msg}");
        assert!(parse(r#"{"nope": 1}"#).is_err());
    }

    #[test]
    fn validation() {
        let one = |k: &str, v: &str| RunConfig::from_entries(&Entries::from([(k.to_string(), v.to_string())]));
        assert!(one("trials", "0").is_err());
        assert!(one("alpha1", "-1").is_err());
        assert!(one("sigma2", "0").is_err());
        assert!(one("dt", "abc").is_err());
        assert!(one("n_sub", "4").is_err());
        assert!(one("only", "12").is_err());
        assert_eq!(one("only", "1, 3").unwrap().only, Some(vec![1, 3]));
        assert!(matches!(parse("just words"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(RunConfig::from_entries(&Entries::from([("scheme".into(), "smoothed".into())])).unwrap().scheme().is_err());
    }
}
