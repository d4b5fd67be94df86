//! Flat key=value experiment configuration.
//!
//! A configuration is resolved by layering assignments: built-in defaults,
//! then an optional named preset, then an optional config file, then command
//! line flags, later layers winning. Every key must be known, every value
//! must pass its range check, and the handful of keys without defaults must
//! end up assigned. Each failure class carries its own exit code so scripts
//! can tell them apart.
//!
//! The fully resolved map is echoed into the output directory; feeding the
//! echo back through `--config` reproduces the run exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use docom_core::problems::sigmoid::DEFAULT_PARTITION;
use docom_core::{AlgorithmKind, CompressorConfig, InitBatch, LabelEncoding};

pub const EXIT_UNKNOWN_KEY: i32 = 2;
pub const EXIT_RANGE: i32 = 3;
pub const EXIT_MISSING: i32 = 4;

/// Key registry: name and default value. `None` marks a key the user must
/// supply one way or another.
const KNOWN_KEYS: &[(&str, Option<&str>)] = &[
    ("algo", None),
    ("iters", None),
    ("problem", Some("sigmoid")),
    ("topology", Some("ring")),
    ("n", Some("25")),
    ("compressor", Some("identity")),
    ("eta", Some("0.01")),
    ("gamma", Some("1.0")),
    ("beta", Some("1.0")),
    ("b0", Some("full")),
    ("batch", Some("1")),
    ("stride", Some("1")),
    ("seed", Some("1")),
    ("data_seed", Some("4242")),
    ("out", Some("")),
    ("timing", Some("false")),
    ("workers", Some("0")),
    // sigmoid problem family
    ("lambda", Some("0.0001")),
    ("encoding", Some("plus_minus")),
    ("d_feat", Some("1000")),
    ("classes", Some("5")),
    ("partition", Some("default")),
    ("dominant_classes", Some("2")),
    ("dominant_frac", Some("0.9")),
    ("mean_scale", Some("1.0")),
    // quadratic problem family
    ("dim", Some("20")),
    ("rows", Some("30")),
    ("sigma", Some("0.0")),
    // schedules
    ("lr_decay", Some("")),
    ("schedule_beta", Some("")),
    ("schedule_eta", Some("")),
    ("schedule_b0", Some("")),
];

#[derive(Debug)]
pub enum ConfigError {
    UnknownKey(String),
    Syntax { line: usize, text: String },
    Range { key: String, reason: String },
    Missing(&'static str),
    Io(String),
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::UnknownKey(_) | ConfigError::Syntax { .. } => EXIT_UNKNOWN_KEY,
            ConfigError::Range { .. } => EXIT_RANGE,
            ConfigError::Missing(_) => EXIT_MISSING,
            ConfigError::Io(_) => 1,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownKey(k) => write!(f, "unknown configuration key `{k}`"),
            ConfigError::Syntax { line, text } => {
                write!(f, "config line {line} is not `key = value`: `{text}`")
            }
            ConfigError::Range { key, reason } => write!(f, "invalid value for `{key}`: {reason}"),
            ConfigError::Missing(k) => write!(f, "required key `{k}` was never set"),
            ConfigError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologyKind {
    Ring,
    Complete,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Sigmoid {
        d_feat: usize,
        classes: usize,
        partition: Vec<usize>,
        dominant_classes: usize,
        dominant_frac: f64,
        mean_scale: f64,
        lambda: f64,
        encoding: LabelEncoding,
    },
    Quadratic {
        dim: usize,
        rows: usize,
        sigma: f64,
    },
}

/// A fully resolved and validated experiment description, plus the raw map
/// it was parsed from (for the provenance echo).
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algo: AlgorithmKind,
    pub problem: ProblemSpec,
    pub topology: TopologyKind,
    pub n: usize,
    pub compressor: CompressorConfig,
    pub eta: f64,
    pub gamma: f64,
    pub beta: f64,
    pub b0: InitBatch,
    pub batch: usize,
    pub iters: u64,
    pub stride: u64,
    pub seed: u64,
    pub data_seed: u64,
    pub out: Option<PathBuf>,
    pub timing: bool,
    pub workers: usize,
    pub lr_decay: Vec<(u64, f64)>,
    pub schedule_beta: Option<f64>,
    pub schedule_eta: Option<f64>,
    pub schedule_b0: Option<f64>,
    resolved: BTreeMap<String, String>,
}

/// Parses the flat `key = value` file format: one assignment per line,
/// `#` starts a comment, blank lines ignored.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
            line: idx + 1,
            text: line.to_string(),
        })?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Layers assignments over the defaults and validates the result.
pub fn resolve(layers: &[Vec<(String, String)>]) -> Result<ExperimentConfig, ConfigError> {
    let mut map: BTreeMap<String, String> = KNOWN_KEYS
        .iter()
        .filter_map(|(k, d)| d.map(|v| (k.to_string(), v.to_string())))
        .collect();
    for layer in layers {
        for (key, value) in layer {
            if !KNOWN_KEYS.iter().any(|(k, _)| k == key) {
                return Err(ConfigError::UnknownKey(key.clone()));
            }
            map.insert(key.clone(), value.clone());
        }
    }
    for (key, default) in KNOWN_KEYS {
        if default.is_none() && !map.contains_key(*key) {
            return Err(ConfigError::Missing(key));
        }
    }
    ExperimentConfig::from_map(map)
}

fn range_err(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn get<'m>(map: &'m BTreeMap<String, String>, key: &str) -> &'m str {
    map.get(key).map(String::as_str).unwrap_or("")
}

fn parse_num<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, ConfigError> {
    get(map, key)
        .parse()
        .map_err(|_| range_err(key, format!("`{}` does not parse", get(map, key))))
}

fn parse_f64(
    map: &BTreeMap<String, String>,
    key: &str,
    check: impl Fn(f64) -> bool,
    expect: &str,
) -> Result<f64, ConfigError> {
    let v: f64 = parse_num(map, key)?;
    if !v.is_finite() || !check(v) {
        return Err(range_err(key, format!("{v} is outside {expect}")));
    }
    Ok(v)
}

fn parse_bool(map: &BTreeMap<String, String>, key: &str) -> Result<bool, ConfigError> {
    match get(map, key) {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(range_err(key, format!("`{other}` is not a boolean"))),
    }
}

fn parse_lr_decay(spec: &str) -> Result<Vec<(u64, f64)>, ConfigError> {
    let mut out: Vec<(u64, f64)> = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (it, mult) = part
            .split_once(':')
            .ok_or_else(|| range_err("lr_decay", format!("`{part}` is not `iter:multiplier`")))?;
        let it: u64 = it
            .trim()
            .parse()
            .map_err(|_| range_err("lr_decay", format!("`{it}` is not an iteration count")))?;
        let mult: f64 = mult
            .trim()
            .parse()
            .map_err(|_| range_err("lr_decay", format!("`{mult}` is not a multiplier")))?;
        if !(mult.is_finite() && mult > 0.0) {
            return Err(range_err("lr_decay", "multipliers must be positive"));
        }
        if let Some(&(prev, _)) = out.last() {
            if it <= prev {
                return Err(range_err("lr_decay", "iterations must strictly increase"));
            }
        }
        out.push((it, mult));
    }
    Ok(out)
}

fn parse_schedule(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>, ConfigError> {
    let raw = get(map, key);
    if raw.is_empty() {
        return Ok(None);
    }
    Ok(Some(parse_f64(map, key, |v| v > 0.0, "(0, inf)")?))
}

impl ExperimentConfig {
    fn from_map(map: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let algo = AlgorithmKind::from_str(get(&map, "algo"))
            .map_err(|e| range_err("algo", e.to_string()))?;
        let iters: u64 = parse_num(&map, "iters")?;
        let n: usize = parse_num(&map, "n")?;
        if n == 0 {
            return Err(range_err("n", "at least one agent is required"));
        }
        let topology = match get(&map, "topology") {
            "ring" => {
                if n < 3 {
                    return Err(range_err("n", "a ring needs at least 3 agents"));
                }
                TopologyKind::Ring
            }
            "complete" => TopologyKind::Complete,
            other => return Err(range_err("topology", format!("`{other}` is not a topology"))),
        };
        let compressor = CompressorConfig::parse(get(&map, "compressor"))
            .map_err(|e| range_err("compressor", e.to_string()))?;
        let eta = parse_f64(&map, "eta", |v| v > 0.0, "(0, inf)")?;
        let gamma = parse_f64(&map, "gamma", |v| v > 0.0 && v <= 1.0, "(0, 1]")?;
        let beta = parse_f64(&map, "beta", |v| v > 0.0 && v <= 1.0, "(0, 1]")?;
        let b0 = match get(&map, "b0") {
            "full" => InitBatch::FullLocal,
            other => {
                let count: usize = other
                    .parse()
                    .map_err(|_| range_err("b0", format!("`{other}` is neither `full` nor a count")))?;
                if count == 0 {
                    return Err(range_err("b0", "batch count must be at least 1"));
                }
                InitBatch::Count(count)
            }
        };
        let batch: usize = parse_num(&map, "batch")?;
        if batch == 0 {
            return Err(range_err("batch", "must be at least 1"));
        }
        let stride: u64 = parse_num(&map, "stride")?;
        if stride == 0 {
            return Err(range_err("stride", "must be at least 1"));
        }
        let seed: u64 = parse_num(&map, "seed")?;
        let data_seed: u64 = parse_num(&map, "data_seed")?;
        let out = match get(&map, "out") {
            "" => None,
            path => Some(PathBuf::from(path)),
        };
        let timing = parse_bool(&map, "timing")?;
        let workers: usize = parse_num(&map, "workers")?;

        let problem = match get(&map, "problem") {
            "sigmoid" => {
                let classes: usize = parse_num(&map, "classes")?;
                if classes < 2 {
                    return Err(range_err("classes", "need at least 2 classes"));
                }
                let d_feat: usize = parse_num(&map, "d_feat")?;
                if d_feat == 0 {
                    return Err(range_err("d_feat", "need at least 1 feature"));
                }
                let partition = parse_partition(&map, n)?;
                let dominant_classes: usize = parse_num(&map, "dominant_classes")?;
                if dominant_classes == 0 || dominant_classes > classes {
                    return Err(range_err(
                        "dominant_classes",
                        format!("must lie in 1..={classes}"),
                    ));
                }
                let dominant_frac =
                    parse_f64(&map, "dominant_frac", |v| (0.0..=1.0).contains(&v), "[0, 1]")?;
                let mean_scale = parse_f64(&map, "mean_scale", |v| v >= 0.0, "[0, inf)")?;
                let lambda = parse_f64(&map, "lambda", |v| v >= 0.0, "[0, inf)")?;
                let encoding = match get(&map, "encoding") {
                    "plus_minus" => LabelEncoding::PlusMinus,
                    "zero_one" => LabelEncoding::ZeroOne,
                    other => {
                        return Err(range_err("encoding", format!("`{other}` is not an encoding")))
                    }
                };
                ProblemSpec::Sigmoid {
                    d_feat,
                    classes,
                    partition,
                    dominant_classes,
                    dominant_frac,
                    mean_scale,
                    lambda,
                    encoding,
                }
            }
            "quadratic" => {
                let dim: usize = parse_num(&map, "dim")?;
                if dim == 0 {
                    return Err(range_err("dim", "need at least 1 dimension"));
                }
                let rows: usize = parse_num(&map, "rows")?;
                if rows == 0 {
                    return Err(range_err("rows", "need at least 1 row per agent"));
                }
                let sigma = parse_f64(&map, "sigma", |v| v >= 0.0, "[0, inf)")?;
                ProblemSpec::Quadratic { dim, rows, sigma }
            }
            other => return Err(range_err("problem", format!("`{other}` is not a problem kind"))),
        };

        let lr_decay = parse_lr_decay(get(&map, "lr_decay"))?;
        let schedule_beta = parse_schedule(&map, "schedule_beta")?;
        let schedule_eta = parse_schedule(&map, "schedule_eta")?;
        let schedule_b0 = parse_schedule(&map, "schedule_b0")?;

        Ok(ExperimentConfig {
            algo,
            problem,
            topology,
            n,
            compressor,
            eta,
            gamma,
            beta,
            b0,
            batch,
            iters,
            stride,
            seed,
            data_seed,
            out,
            timing,
            workers,
            lr_decay,
            schedule_beta,
            schedule_eta,
            schedule_b0,
            resolved: map,
        })
    }

    /// The resolved assignment for one key, as echoed.
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.resolved.get(key).map(String::as_str)
    }

    /// Full provenance echo; parsing this text and resolving it reproduces
    /// the identical configuration.
    pub fn echo_text(&self) -> String {
        let mut out = String::from("# resolved experiment configuration\n");
        for (key, value) in &self.resolved {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(value);
            out.push('\n');
        }
        out
    }

    /// A copy with one key reassigned (revalidated from scratch).
    pub fn with(&self, key: &str, value: &str) -> Result<Self, ConfigError> {
        let layer = vec![(key.to_string(), value.to_string())];
        let base: Vec<(String, String)> = self
            .resolved
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        resolve(&[base, layer])
    }
}

fn parse_partition(map: &BTreeMap<String, String>, n: usize) -> Result<Vec<usize>, ConfigError> {
    match get(map, "partition") {
        "default" => {
            if n > DEFAULT_PARTITION.len() {
                return Err(range_err(
                    "partition",
                    format!(
                        "the built-in partition covers up to {} agents; give an explicit list",
                        DEFAULT_PARTITION.len()
                    ),
                ));
            }
            Ok(DEFAULT_PARTITION[..n].to_vec())
        }
        spec => {
            let mut out = Vec::new();
            for part in spec.split(',') {
                let count: usize = part.trim().parse().map_err(|_| {
                    range_err("partition", format!("`{part}` is not a sample count"))
                })?;
                if count == 0 {
                    return Err(range_err("partition", "every shard needs at least 1 sample"));
                }
                out.push(count);
            }
            if out.len() != n {
                return Err(range_err(
                    "partition",
                    format!("{} shard sizes given for n = {n}", out.len()),
                ));
            }
            Ok(out)
        }
    }
}
