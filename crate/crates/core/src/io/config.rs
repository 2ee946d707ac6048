//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! [encircle]
//! gamma1 = 1.5e-4
//! gamma2 = 8.8e-5
//! seed = 7
//! ```
//!
//! Exactly one `[experiment]` header; every other non-blank line is
//! `key = value`. Keys are validated against the experiment's schema and
//! missing optional keys are filled with their defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Direction, InitialState};
use crate::ep::MapAxis;
use crate::model::Handedness;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    EpLocate,
    RatioSweep,
    EigengapMap,
    Encircle,
    LoopSweep,
    Average,
    ScalingProbe,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::EpLocate,
        Experiment::RatioSweep,
        Experiment::EigengapMap,
        Experiment::Encircle,
        Experiment::LoopSweep,
        Experiment::Average,
        Experiment::ScalingProbe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::EpLocate => "ep-locate",
            Experiment::RatioSweep => "ratio-sweep",
            Experiment::EigengapMap => "map",
            Experiment::Encircle => "encircle",
            Experiment::LoopSweep => "loop-sweep",
            Experiment::Average => "average",
            Experiment::ScalingProbe => "scaling-probe",
        }
    }

    pub fn schema(self) -> &'static [KeySpec] {
        match self {
            Experiment::EpLocate => EP_LOCATE,
            Experiment::RatioSweep => RATIO_SWEEP,
            Experiment::EigengapMap => MAP,
            Experiment::Encircle => ENCIRCLE,
            Experiment::LoopSweep => LOOP_SWEEP,
            Experiment::Average => AVERAGE,
            Experiment::ScalingProbe => SCALING,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s || (s == "eigengap-map" && *e == Experiment::EigengapMap))
            .ok_or_else(|| Error::config(None, format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Both => "both",
        }
    }

    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "both" => Ok(OutputFormat::Both),
            other => Err(Error::config(
                None,
                format!("output_format must be csv, json or both, got '{other}'"),
            )),
        }
    }
}

/// Value type of a configuration key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    /// Non-negative integer.
    Count,
    Bool,
    FloatList,
    Handedness,
    Direction,
    Initial,
    Axis,
}

impl Kind {
    fn check(self, value: &str) -> std::result::Result<(), String> {
        let ok = match self {
            Kind::Float => parse_float(value).is_ok(),
            Kind::Count => value.parse::<usize>().is_ok(),
            Kind::Bool => matches!(value, "true" | "false"),
            Kind::FloatList => parse_float_list(value).is_ok(),
            Kind::Handedness => value.parse::<Handedness>().is_ok(),
            Kind::Direction => value.parse::<Direction>().is_ok(),
            Kind::Initial => value.parse::<InitialState>().is_ok(),
            Kind::Axis => value.parse::<MapAxis>().is_ok(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("expected {}, got '{value}'", self.describe()))
        }
    }

    fn describe(self) -> &'static str {
        match self {
            Kind::Float => "a finite number",
            Kind::Count => "a non-negative integer",
            Kind::Bool => "true or false",
            Kind::FloatList => "a comma-separated list of numbers",
            Kind::Handedness => "right or left",
            Kind::Direction => "as_written or reversed",
            Kind::Initial => "plus, minus or mixed",
            Kind::Axis => "one of gamma1, gamma2, delta, omega12",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    /// `None` marks a required key; `Some("")` an optional key without default.
    pub default: Option<&'static str>,
}

const fn req(name: &'static str, kind: Kind) -> KeySpec {
    KeySpec {
        name,
        kind,
        default: None,
    }
}

const fn opt(name: &'static str, kind: Kind, default: &'static str) -> KeySpec {
    KeySpec {
        name,
        kind,
        default: Some(default),
    }
}

pub const GLOBAL_KEYS: [&str; 3] = ["seed", "output_dir", "output_format"];
pub const DEFAULT_OUTPUT_DIR: &str = "out";

const EP_LOCATE: &[KeySpec] = &[
    req("gamma1", Kind::Float),
    opt("gamma2", Kind::Float, ""),
    opt("ratio", Kind::Float, ""),
    opt("refine", Kind::Bool, "true"),
];

const RATIO_SWEEP: &[KeySpec] = &[
    req("gamma1", Kind::Float),
    opt(
        "ratios",
        Kind::FloatList,
        "0,0.25,0.5,0.75,1,1.25,1.5,1.75,2,2.25,2.5,3",
    ),
];

const MAP: &[KeySpec] = &[
    req("gamma1", Kind::Float),
    req("gamma2", Kind::Float),
    opt("delta", Kind::Float, "0"),
    opt("omega12", Kind::Float, "0"),
    opt("x_axis", Kind::Axis, "delta"),
    req("x_min", Kind::Float),
    req("x_max", Kind::Float),
    opt("x_count", Kind::Count, "201"),
    opt("y_axis", Kind::Axis, "omega12"),
    req("y_min", Kind::Float),
    req("y_max", Kind::Float),
    opt("y_count", Kind::Count, "201"),
];

const ENCIRCLE: &[KeySpec] = &[
    req("gamma1", Kind::Float),
    req("gamma2", Kind::Float),
    opt("enantiomer", Kind::Handedness, "right"),
    opt("ep_branch", Kind::Count, "1"),
    opt("center_delta", Kind::Float, ""),
    opt("center_omega", Kind::Float, ""),
    opt("radius", Kind::Float, ""),
    opt("loop_time", Kind::Float, "4.78e5"),
    opt("direction", Kind::Direction, "as_written"),
    opt("start_phase", Kind::Float, "0"),
    opt("initial", Kind::Initial, "plus"),
    opt("rel_tol", Kind::Float, "1e-10"),
    opt("abs_tol", Kind::Float, "1e-20"),
    opt("samples", Kind::Count, "2048"),
    opt("branch_samples", Kind::Count, "4096"),
];

const LOOP_SWEEP: &[KeySpec] = &[
    req("gamma1", Kind::Float),
    req("gamma2", Kind::Float),
    opt("ep_branch", Kind::Count, "1"),
    opt("center_delta", Kind::Float, ""),
    opt("center_omega", Kind::Float, ""),
    opt("radius", Kind::Float, ""),
    opt("loop_times", Kind::FloatList, ""),
    opt("t_min", Kind::Float, "1e3"),
    opt("t_max", Kind::Float, "4.78e5"),
    opt("t_count", Kind::Count, "12"),
    opt("start_phase", Kind::Float, "0"),
    opt("initial", Kind::Initial, "plus"),
    opt("rel_tol", Kind::Float, "1e-10"),
    opt("abs_tol", Kind::Float, "1e-20"),
    opt("samples", Kind::Count, "256"),
    opt("branch_samples", Kind::Count, "4096"),
];

const AVERAGE: &[KeySpec] = &[
    req("d1e", Kind::FloatList),
    req("d2e", Kind::FloatList),
    req("d12", Kind::FloatList),
    req("f1", Kind::FloatList),
    req("f2", Kind::FloatList),
    req("f3", Kind::FloatList),
    req("omega1", Kind::Float),
    req("omega2", Kind::Float),
    opt("omega3", Kind::Float, ""),
    opt("e1", Kind::Float, "0"),
    opt("e2", Kind::Float, "0"),
    opt("samples", Kind::Count, "100000"),
];

const SCALING: &[KeySpec] = &[
    req("gamma1", Kind::Float),
    req("gamma2", Kind::Float),
    opt("enantiomer", Kind::Handedness, "right"),
    opt("ep_branch", Kind::Count, "0"),
    opt("at_delta", Kind::Float, ""),
    opt("at_omega", Kind::Float, ""),
    opt("direction_delta", Kind::Float, "1"),
    opt("direction_omega", Kind::Float, "0"),
    opt("eps_min", Kind::Float, "1e-6"),
    opt("eps_max", Kind::Float, "1e-4"),
    opt("eps_count", Kind::Count, "9"),
];

pub(crate) fn parse_float(s: &str) -> std::result::Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("'{s}' is not a finite number")),
    }
}

pub(crate) fn parse_float_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let items: Vec<&str> = s.split(',').map(str::trim).collect();
    if items.iter().any(|i| i.is_empty()) {
        return Err(format!("'{s}' has an empty list entry"));
    }
    items.into_iter().map(parse_float).collect()
}

/// Validated configuration. Parameters hold the resolved string values of
/// every schema key, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub parameters: BTreeMap<String, String>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub output_format: OutputFormat,
}

impl RunConfig {
    /// Resolve a set of raw key/value pairs for `experiment`.
    pub fn from_pairs<I, K, V>(experiment: Experiment, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let raw: Vec<RawEntry> = pairs
            .into_iter()
            .map(|(k, v)| RawEntry {
                key: k.into(),
                value: v.into(),
                line: None,
            })
            .collect();
        resolve(experiment, None, raw)
    }

    /// Return a copy with `key = value` applied on top, then re-validated.
    pub fn with_overrides<K: AsRef<str>, V: AsRef<str>>(
        &self,
        overrides: &[(K, V)],
    ) -> Result<Self> {
        let mut raw: Vec<RawEntry> = self
            .parameters
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| RawEntry {
                key: k.clone(),
                value: v.clone(),
                line: None,
            })
            .collect();
        raw.push(RawEntry::global("seed", self.seed.to_string()));
        raw.push(RawEntry::global(
            "output_dir",
            self.output_dir.display().to_string(),
        ));
        raw.push(RawEntry::global(
            "output_format",
            self.output_format.as_str().to_string(),
        ));
        for (k, v) in overrides {
            let (k, v) = (k.as_ref().trim(), v.as_ref().trim());
            raw.retain(|e| e.key != k);
            raw.push(RawEntry {
                key: k.to_string(),
                value: v.to_string(),
                line: None,
            });
        }
        resolve(self.experiment, None, raw)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.parameters
            .get(key)
            .map(String::as_str)
            .filter(|v| !v.is_empty())
    }

    pub fn float(&self, key: &str) -> Result<f64> {
        self.float_opt(key)?
            .ok_or_else(|| Error::config(None, format!("missing required key '{key}'")))
    }

    pub fn float_opt(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| parse_float(v).map_err(|m| Error::config(None, format!("{key}: {m}"))))
            .transpose()
    }

    pub fn count(&self, key: &str) -> Result<usize> {
        let v = self
            .get(key)
            .ok_or_else(|| Error::config(None, format!("missing required key '{key}'")))?;
        v.parse().map_err(|_| {
            Error::config(
                None,
                format!("{key}: expected a non-negative integer, got '{v}'"),
            )
        })
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            other => Err(Error::config(
                None,
                format!("{key}: expected true or false, got {other:?}"),
            )),
        }
    }

    pub fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| parse_float_list(v).map_err(|m| Error::config(None, format!("{key}: {m}"))))
            .transpose()
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self
            .get(key)
            .ok_or_else(|| Error::config(None, format!("missing required key '{key}'")))?;
        v.parse()
            .map_err(|_| Error::config(None, format!("{key}: invalid value '{v}'")))
    }

    /// Render back to the line format; parsing the result gives `self`.
    pub fn serialize(&self) -> String {
        let mut out = format!("[{}]\n", self.experiment);
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("output_dir = {}\n", self.output_dir.display()));
        out.push_str(&format!(
            "output_format = {}\n",
            self.output_format.as_str()
        ));
        for (k, v) in &self.parameters {
            if !v.is_empty() {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct RawEntry {
    key: String,
    value: String,
    line: Option<usize>,
}

impl RawEntry {
    fn global(key: &str, value: String) -> Self {
        RawEntry {
            key: key.to_string(),
            value,
            line: None,
        }
    }
}

fn strip_comment(line: &str) -> &str {
    // '#' starts a comment at the beginning of a line or after whitespace.
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

/// Parse a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut header: Option<(Experiment, usize)> = None;
    let mut raw: Vec<RawEntry> = Vec::new();
    for (idx, full) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(full).trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            let name = line
                .strip_prefix('[')
                .and_then(|l| l.strip_suffix(']'))
                .ok_or_else(|| {
                    Error::config(Some(line_no), format!("malformed header '{line}'"))
                })?;
            if let Some((_, first)) = header {
                return Err(Error::config(
                    Some(line_no),
                    format!("second experiment header (first on line {first})"),
                ));
            }
            let exp = name.parse::<Experiment>().map_err(|_| {
                Error::config(
                    Some(line_no),
                    format!("unknown experiment '{}'", name.trim()),
                )
            })?;
            header = Some((exp, line_no));
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(
                Some(line_no),
                format!("expected 'key = value', got '{line}'"),
            )
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::config(Some(line_no), format!("invalid key '{key}'")));
        }
        if value.is_empty() {
            return Err(Error::config(
                Some(line_no),
                format!("key '{key}' has an empty value"),
            ));
        }
        if let Some(prev) = raw.iter().find(|e| e.key == key) {
            return Err(Error::config(
                Some(line_no),
                format!(
                    "duplicate key '{key}' on lines {} and {line_no}",
                    prev.line.unwrap_or(0)
                ),
            ));
        }
        raw.push(RawEntry {
            key: key.to_string(),
            value: value.to_string(),
            line: Some(line_no),
        });
    }
    let (experiment, header_line) =
        header.ok_or_else(|| Error::config(None, "missing [experiment] header"))?;
    resolve(experiment, Some(header_line), raw)
}

fn resolve(
    experiment: Experiment,
    header_line: Option<usize>,
    raw: Vec<RawEntry>,
) -> Result<RunConfig> {
    let schema = experiment.schema();
    let mut seed = 0u64;
    let mut output_dir = PathBuf::from(DEFAULT_OUTPUT_DIR);
    let mut output_format = OutputFormat::Both;
    let mut parameters = BTreeMap::new();

    for e in &raw {
        match e.key.as_str() {
            "seed" => {
                seed = e.value.parse().map_err(|_| {
                    Error::config(
                        e.line,
                        format!(
                            "seed: expected a 64-bit unsigned integer, got '{}'",
                            e.value
                        ),
                    )
                })?;
            }
            "output_dir" => output_dir = PathBuf::from(&e.value),
            "output_format" => {
                output_format = e.value.parse().map_err(|err: Error| match err {
                    Error::Config { message, .. } => Error::config(e.line, message),
                    other => other,
                })?;
            }
            key => {
                let spec = schema.iter().find(|s| s.name == key).ok_or_else(|| {
                    Error::config(
                        e.line,
                        format!("unknown key '{key}' for experiment {experiment}"),
                    )
                })?;
                spec.kind
                    .check(&e.value)
                    .map_err(|m| Error::config(e.line, format!("{key}: {m}")))?;
                parameters.insert(key.to_string(), e.value.clone());
            }
        }
    }

    for spec in schema {
        if parameters.contains_key(spec.name) {
            continue;
        }
        match spec.default {
            None => {
                return Err(Error::config(
                    header_line,
                    format!(
                        "missing required key '{}' for experiment {experiment}",
                        spec.name
                    ),
                ))
            }
            Some(d) => {
                parameters.insert(spec.name.to_string(), d.to_string());
            }
        }
    }

    let cfg = RunConfig {
        experiment,
        parameters,
        seed,
        output_dir,
        output_format,
    };
    cross_check(&cfg, header_line)?;
    Ok(cfg)
}

fn cross_check(cfg: &RunConfig, line: Option<usize>) -> Result<()> {
    let both = |a: &str, b: &str| cfg.get(a).is_some() && cfg.get(b).is_some();
    let neither = |a: &str, b: &str| cfg.get(a).is_none() && cfg.get(b).is_none();
    match cfg.experiment {
        Experiment::EpLocate => {
            if both("gamma2", "ratio") {
                return Err(Error::config(line, "give either gamma2 or ratio, not both"));
            }
            if neither("gamma2", "ratio") {
                return Err(Error::config(
                    line,
                    "missing required key 'gamma2' (or 'ratio')",
                ));
            }
        }
        Experiment::Encircle | Experiment::LoopSweep => {
            if cfg.get("center_delta").is_some() != cfg.get("center_omega").is_some() {
                return Err(Error::config(
                    line,
                    "center_delta and center_omega must be given together",
                ));
            }
        }
        Experiment::ScalingProbe => {
            if cfg.get("at_delta").is_some() != cfg.get("at_omega").is_some() {
                return Err(Error::config(
                    line,
                    "at_delta and at_omega must be given together",
                ));
            }
        }
        Experiment::Average => {
            for key in ["d1e", "d2e", "d12", "f1", "f2", "f3"] {
                let n = cfg.floats(key)?.map(|v| v.len()).unwrap_or(0);
                if n != 3 && n != 6 {
                    return Err(Error::config(
                        line,
                        format!("{key}: expected 3 real or 6 (re, im) components, got {n}"),
                    ));
                }
            }
        }
        Experiment::RatioSweep | Experiment::EigengapMap => {}
    }
    Ok(())
}
