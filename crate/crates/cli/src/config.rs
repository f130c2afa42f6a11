//! Layered experiment configuration.
//!
//! Every key has a built-in default. A preset, a TOML file and `--set`
//! flags override it in that order of increasing precedence. Some defaults
//! are derived from other keys (the receiver scales with the duct radius)
//! and are recomputed unless set explicitly. Each resolved value remembers
//! where it came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use duct_channel::model::mean_velocity_from_pressure;

use crate::error::CliError;
use crate::units::{parse_quantity, Dimension};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    Preset,
    File,
    Flag,
    Derived,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Default => "default",
            Source::Preset => "preset",
            Source::File => "file",
            Source::Flag => "flag",
            Source::Derived => "derived",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Quantity(Dimension),
    QuantityList(Dimension),
    Count,
    Bool,
    Choice(&'static [&'static str]),
    ChoiceList(&'static [&'static str]),
    /// A quantity or one of a few keywords.
    QuantityOr(Dimension, &'static [&'static str]),
    CountOr(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Check {
    Any,
    Positive,
    NonNegative,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Numbers(Vec<f64>),
    Count(u64),
    Bool(bool),
    Text(String),
    Texts(Vec<String>),
    Unset,
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x:e}"),
            Value::Numbers(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| format!("{x:e}")).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Value::Count(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Text(s) => write!(f, "{s}"),
            Value::Texts(s) => write!(f, "[{}]", s.join(", ")),
            Value::Unset => write!(f, "unset"),
        }
    }
}

enum Fallback {
    Literal(&'static str),
    Derived(fn(&Resolved) -> Value),
    Unset,
}

struct KeyDef {
    path: &'static str,
    kind: Kind,
    check: Check,
    fallback: Fallback,
}

const RELEASE_KINDS: &[&str] = &["uniform", "point"];
const DELAY_KEYWORDS: &[&str] = &["auto", "t2", "peak"];
const CIR_MODELS: &[&str] = &["auto", "flow_uniform", "flow_point", "dispersion"];
const ANALYTIC: &[&str] = &["poisson", "binomial"];
pub const SER_METHODS: &[&str] = &[
    "poisson_analytic",
    "binomial_analytic",
    "monte_carlo_counts",
    "monte_carlo_particles",
];

fn half_radius(r: &Resolved) -> Value {
    Value::Number(r.number("channel.radius") / 2.0)
}

fn release_radius(r: &Resolved) -> Value {
    Value::Number(0.75 * r.number("channel.radius"))
}

fn own_radius(r: &Resolved) -> Value {
    Value::Numbers(vec![r.number("channel.radius")])
}

use Dimension as D;

const SCHEMA: &[KeyDef] = &[
    KeyDef {
        path: "seed",
        kind: Kind::Count,
        check: Check::Any,
        fallback: Fallback::Literal("1"),
    },
    KeyDef {
        path: "channel.radius",
        kind: Kind::Quantity(D::Length),
        check: Check::Positive,
        fallback: Fallback::Literal("10 um"),
    },
    KeyDef {
        path: "channel.diffusion",
        kind: Kind::Quantity(D::Diffusivity),
        check: Check::NonNegative,
        fallback: Fallback::Literal("1e-10 m^2/s"),
    },
    KeyDef {
        path: "channel.mean_velocity",
        kind: Kind::Quantity(D::Velocity),
        check: Check::NonNegative,
        fallback: Fallback::Literal("1 mm/s"),
    },
    KeyDef {
        path: "channel.pressure_gradient",
        kind: Kind::Quantity(D::PressureGradient),
        check: Check::Any,
        fallback: Fallback::Unset,
    },
    KeyDef {
        path: "channel.viscosity",
        kind: Kind::Quantity(D::Viscosity),
        check: Check::Positive,
        fallback: Fallback::Literal("1 mPa s"),
    },
    KeyDef {
        path: "receiver.distances",
        kind: Kind::QuantityList(D::Length),
        check: Check::Positive,
        fallback: Fallback::Literal("200 um, 800 um"),
    },
    KeyDef {
        path: "receiver.extent_x",
        kind: Kind::Quantity(D::Length),
        check: Check::Positive,
        fallback: Fallback::Derived(half_radius),
    },
    KeyDef {
        path: "receiver.extent_r",
        kind: Kind::Quantity(D::Length),
        check: Check::Positive,
        fallback: Fallback::Derived(half_radius),
    },
    KeyDef {
        path: "receiver.extent_phi",
        kind: Kind::Quantity(D::Angle),
        check: Check::Positive,
        fallback: Fallback::Literal("90 deg"),
    },
    KeyDef {
        path: "release.kind",
        kind: Kind::Choice(RELEASE_KINDS),
        check: Check::Any,
        fallback: Fallback::Literal("uniform"),
    },
    KeyDef {
        path: "release.r0",
        kind: Kind::Quantity(D::Length),
        check: Check::NonNegative,
        fallback: Fallback::Derived(release_radius),
    },
    KeyDef {
        path: "release.phi0",
        kind: Kind::Quantity(D::Angle),
        check: Check::Any,
        fallback: Fallback::Literal("0 deg"),
    },
    KeyDef {
        path: "release.n_tx",
        kind: Kind::Count,
        check: Check::Any,
        fallback: Fallback::Literal("1000"),
    },
    KeyDef {
        path: "sim.time_step",
        kind: Kind::Quantity(D::Time),
        check: Check::Positive,
        fallback: Fallback::Literal("1 ms"),
    },
    KeyDef {
        path: "sim.confidence_z",
        kind: Kind::Quantity(D::Dimensionless),
        check: Check::NonNegative,
        fallback: Fallback::Literal("3"),
    },
    KeyDef {
        path: "cir.t_start",
        kind: Kind::Quantity(D::Time),
        check: Check::NonNegative,
        fallback: Fallback::Literal("10 ms"),
    },
    KeyDef {
        path: "cir.t_end",
        kind: Kind::Quantity(D::Time),
        check: Check::Positive,
        fallback: Fallback::Literal("2 s"),
    },
    KeyDef {
        path: "cir.points",
        kind: Kind::Count,
        check: Check::Any,
        fallback: Fallback::Literal("200"),
    },
    KeyDef {
        path: "cir.simulate_uniform",
        kind: Kind::Bool,
        check: Check::Any,
        fallback: Fallback::Literal("true"),
    },
    KeyDef {
        path: "cir.simulate_point",
        kind: Kind::Bool,
        check: Check::Any,
        fallback: Fallback::Literal("false"),
    },
    KeyDef {
        path: "snapshot.times",
        kind: Kind::QuantityList(D::Time),
        check: Check::NonNegative,
        fallback: Fallback::Literal("0.02 s, 0.2 s, 0.8 s"),
    },
    KeyDef {
        path: "regime.radii",
        kind: Kind::QuantityList(D::Length),
        check: Check::Positive,
        fallback: Fallback::Derived(own_radius),
    },
    KeyDef {
        path: "link.symbol_intervals",
        kind: Kind::QuantityList(D::Time),
        check: Check::Positive,
        fallback: Fallback::Literal("0.1 s, 0.25 s, 0.5 s, 0.75 s"),
    },
    KeyDef {
        path: "link.seq_len",
        kind: Kind::Count,
        check: Check::Any,
        fallback: Fallback::Literal("8"),
    },
    KeyDef {
        path: "link.n_tx",
        kind: Kind::Count,
        check: Check::Any,
        fallback: Fallback::Literal("1000"),
    },
    KeyDef {
        path: "link.noise_mean",
        kind: Kind::Quantity(D::Dimensionless),
        check: Check::NonNegative,
        fallback: Fallback::Literal("4"),
    },
    KeyDef {
        path: "link.cir_model",
        kind: Kind::Choice(CIR_MODELS),
        check: Check::Any,
        fallback: Fallback::Literal("auto"),
    },
    KeyDef {
        path: "link.detection_delay",
        kind: Kind::QuantityOr(D::Time, DELAY_KEYWORDS),
        check: Check::NonNegative,
        fallback: Fallback::Literal("auto"),
    },
    KeyDef {
        path: "link.threshold",
        kind: Kind::CountOr(&["optimal"]),
        check: Check::Any,
        fallback: Fallback::Literal("optimal"),
    },
    KeyDef {
        path: "link.threshold_search",
        kind: Kind::Choice(ANALYTIC),
        check: Check::Any,
        fallback: Fallback::Literal("poisson"),
    },
    KeyDef {
        path: "link.methods",
        kind: Kind::ChoiceList(SER_METHODS),
        check: Check::Any,
        fallback: Fallback::Literal("poisson_analytic, monte_carlo_counts"),
    },
    KeyDef {
        path: "link.realizations",
        kind: Kind::Count,
        check: Check::Any,
        fallback: Fallback::Literal("10000"),
    },
];

fn key_def(path: &str) -> Option<&'static KeyDef> {
    SCHEMA.iter().find(|k| k.path == path)
}

/// Raw, unit-bearing input as it appears in a file or on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum Raw {
    Text(String),
    Number(f64),
    Bool(bool),
    List(Vec<Raw>),
}

impl Raw {
    fn describe(&self) -> String {
        match self {
            Raw::Text(s) => format!("`{s}`"),
            Raw::Number(x) => format!("{x}"),
            Raw::Bool(b) => format!("{b}"),
            Raw::List(_) => "a list".into(),
        }
    }

    /// Splits comma-separated text into list items.
    fn items(&self) -> Vec<Raw> {
        match self {
            Raw::List(items) => items.clone(),
            Raw::Text(s) => s
                .split(',')
                .map(|p| Raw::Text(p.trim().to_string()))
                .filter(|r| *r != Raw::Text(String::new()))
                .collect(),
            other => vec![other.clone()],
        }
    }
}

fn parse_number(raw: &Raw, dim: Dimension) -> Result<f64, String> {
    match raw {
        Raw::Number(x) => Ok(*x),
        Raw::Text(s) => parse_quantity(s, dim),
        other => Err(format!("expected a quantity, found {}", other.describe())),
    }
}

fn parse_count(raw: &Raw) -> Result<u64, String> {
    let x = match raw {
        Raw::Number(x) => *x,
        Raw::Text(s) => s
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("expected a non-negative integer, found `{s}`"))?,
        other => return Err(format!("expected a count, found {}", other.describe())),
    };
    if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(63) {
        Ok(x as u64)
    } else {
        Err(format!("expected a non-negative integer, found {x}"))
    }
}

fn parse_choice(raw: &Raw, choices: &[&str]) -> Result<String, String> {
    match raw {
        Raw::Text(s) if choices.contains(&s.trim()) => Ok(s.trim().to_string()),
        other => Err(format!(
            "expected one of {}, found {}",
            choices.join(", "),
            other.describe()
        )),
    }
}

fn check(value: f64, check: Check) -> Result<(), String> {
    match check {
        Check::Positive if !(value > 0.0) => Err(format!("{value} must be positive")),
        Check::NonNegative if !(value >= 0.0) => Err(format!("{value} must be non-negative")),
        _ => Ok(()),
    }
}

fn parse_value(def: &KeyDef, raw: &Raw) -> Result<Value, String> {
    let value = match def.kind {
        Kind::Quantity(dim) => {
            let x = parse_number(raw, dim)?;
            check(x, def.check)?;
            Value::Number(x)
        }
        Kind::QuantityList(dim) => {
            let xs = raw
                .items()
                .iter()
                .map(|r| parse_number(r, dim).and_then(|x| check(x, def.check).map(|_| x)))
                .collect::<Result<Vec<_>, _>>()?;
            Value::Numbers(xs)
        }
        Kind::Count => Value::Count(parse_count(raw)?),
        Kind::Bool => match raw {
            Raw::Bool(b) => Value::Bool(*b),
            Raw::Text(s) if s.trim() == "true" => Value::Bool(true),
            Raw::Text(s) if s.trim() == "false" => Value::Bool(false),
            other => {
                return Err(format!(
                    "expected true or false, found {}",
                    other.describe()
                ))
            }
        },
        Kind::Choice(choices) => Value::Text(parse_choice(raw, choices)?),
        Kind::ChoiceList(choices) => Value::Texts(
            raw.items()
                .iter()
                .map(|r| parse_choice(r, choices))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Kind::QuantityOr(dim, words) => match raw {
            Raw::Text(s) if words.contains(&s.trim()) => Value::Text(s.trim().to_string()),
            _ => {
                let x = parse_number(raw, dim)
                    .map_err(|e| format!("{e}; or one of {}", words.join(", ")))?;
                check(x, def.check)?;
                Value::Number(x)
            }
        },
        Kind::CountOr(words) => match raw {
            Raw::Text(s) if words.contains(&s.trim()) => Value::Text(s.trim().to_string()),
            _ => Value::Count(
                parse_count(raw).map_err(|e| format!("{e}; or one of {}", words.join(", ")))?,
            ),
        },
    };
    Ok(value)
}

/// Experiment presets. `custom` applies no overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub name: &'static str,
    pub command: &'static str,
    overrides: &'static [(&'static str, &'static str)],
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "snapshot_fig2",
        command: "snapshot",
        overrides: &[
            ("channel.radius", "10 um"),
            ("release.kind", "uniform"),
            ("release.n_tx", "1000"),
            ("snapshot.times", "0.02 s, 0.2 s, 0.8 s"),
        ],
    },
    Preset {
        name: "cir_small_duct_fig4a",
        command: "cir",
        overrides: &[
            ("channel.radius", "10 um"),
            ("receiver.distances", "200 um, 800 um"),
            ("release.n_tx", "1000000"),
            ("cir.t_start", "10 ms"),
            ("cir.t_end", "2 s"),
            ("cir.points", "200"),
            ("cir.simulate_uniform", "true"),
            ("cir.simulate_point", "false"),
        ],
    },
    Preset {
        name: "cir_large_duct_fig4b",
        command: "cir",
        overrides: &[
            ("channel.radius", "200 um"),
            ("receiver.distances", "200 um, 800 um"),
            ("release.n_tx", "1000000"),
            ("cir.t_start", "5 ms"),
            ("cir.t_end", "1 s"),
            ("cir.points", "200"),
            ("cir.simulate_uniform", "true"),
            ("cir.simulate_point", "true"),
        ],
    },
    Preset {
        name: "regime_map_fig3",
        command: "regime",
        overrides: &[
            ("regime.radii", "10 um, 200 um"),
            ("receiver.distances", "200 um, 800 um"),
        ],
    },
    Preset {
        name: "ser_sweep_fig5",
        command: "ser",
        overrides: &[
            ("channel.radius", "200 um"),
            ("channel.diffusion", "1e-12 m^2/s"),
            ("receiver.distances", "200 um, 400 um, 600 um, 800 um"),
            ("link.symbol_intervals", "0.1 s, 0.25 s, 0.5 s, 0.75 s"),
            ("link.seq_len", "8"),
            ("link.n_tx", "1000"),
            ("link.noise_mean", "4"),
            ("link.detection_delay", "t2"),
            ("link.realizations", "10000"),
            (
                "link.methods",
                "poisson_analytic, binomial_analytic, monte_carlo_counts",
            ),
        ],
    },
    Preset {
        name: "custom",
        command: "cir",
        overrides: &[],
    },
];

pub fn preset(name: &str) -> Result<&'static Preset, CliError> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        CliError::Config(format!(
            "unknown preset `{name}` (expected one of {})",
            names.join(", ")
        ))
    })
}

/// Explicit inputs in increasing order of precedence.
#[derive(Debug, Clone, Default)]
pub struct Layers {
    pub preset: Option<&'static Preset>,
    pub file: Vec<(String, Raw)>,
    pub flags: Vec<(String, Raw)>,
}

impl Layers {
    /// Reads a TOML file of sections and keys.
    pub fn with_file(mut self, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        self.file =
            parse_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(self)
    }

    /// Adds a `key=value` override.
    pub fn with_flag(mut self, assignment: &str) -> Result<Self, CliError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            CliError::Config(format!("`{assignment}` is not of the form key=value"))
        })?;
        self.flags
            .push((key.trim().to_string(), Raw::Text(value.trim().to_string())));
        Ok(self)
    }
}

fn to_raw(value: &toml::Value) -> Result<Raw, String> {
    match value {
        toml::Value::String(s) => Ok(Raw::Text(s.clone())),
        toml::Value::Integer(i) => Ok(Raw::Number(*i as f64)),
        toml::Value::Float(x) => Ok(Raw::Number(*x)),
        toml::Value::Boolean(b) => Ok(Raw::Bool(*b)),
        toml::Value::Array(items) => items
            .iter()
            .map(to_raw)
            .collect::<Result<_, _>>()
            .map(Raw::List),
        other => Err(format!("unsupported value {other}")),
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Raw)>) -> Result<(), String> {
    for (key, value) in table {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            toml::Value::Table(inner) => flatten(&path, inner, out)?,
            other => out.push((
                path.clone(),
                to_raw(other).map_err(|e| format!("{path}: {e}"))?,
            )),
        }
    }
    Ok(())
}

pub fn parse_toml(text: &str) -> Result<Vec<(String, Raw)>, String> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| e.message().to_string())?;
    let mut out = Vec::new();
    flatten("", &table, &mut out)?;
    Ok(out)
}

/// Fully resolved configuration in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    entries: Vec<(&'static str, Value, Source)>,
    pub preset: &'static str,
}

impl Resolved {
    pub fn resolve(layers: &Layers) -> Result<Self, CliError> {
        let mut explicit: BTreeMap<&'static str, (Value, Source)> = BTreeMap::new();
        let mut apply = |key: &str, raw: &Raw, source: Source| -> Result<(), CliError> {
            let def =
                key_def(key).ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
            let value =
                parse_value(def, raw).map_err(|e| CliError::Config(format!("{key}: {e}")))?;
            explicit.insert(def.path, (value, source));
            Ok(())
        };
        if let Some(p) = layers.preset {
            for (key, text) in p.overrides {
                apply(key, &Raw::Text(text.to_string()), Source::Preset)?;
            }
        }
        for (key, raw) in &layers.file {
            apply(key, raw, Source::File)?;
        }
        for (key, raw) in &layers.flags {
            apply(key, raw, Source::Flag)?;
        }

        let mut resolved = Resolved {
            entries: Vec::with_capacity(SCHEMA.len()),
            preset: layers.preset.map_or("none", |p| p.name),
        };
        for def in SCHEMA {
            let (value, source) = match (explicit.remove(def.path), &def.fallback) {
                (Some(v), _) => v,
                (None, Fallback::Literal(text)) => (
                    parse_value(def, &Raw::Text(text.to_string()))
                        .expect("built-in default parses"),
                    Source::Default,
                ),
                (None, Fallback::Unset) => (Value::Unset, Source::Default),
                (None, Fallback::Derived(_)) => (Value::Unset, Source::Derived),
            };
            resolved.entries.push((def.path, value, source));
        }
        for (i, def) in SCHEMA.iter().enumerate() {
            if let (Fallback::Derived(f), Source::Derived) = (&def.fallback, resolved.entries[i].2)
            {
                resolved.entries[i].1 = f(&resolved);
            }
        }
        resolved.derive_flow()?;
        Ok(resolved)
    }

    /// A set pressure gradient determines the mean velocity.
    fn derive_flow(&mut self) -> Result<(), CliError> {
        let Value::Number(gradient) = self.value("channel.pressure_gradient").clone() else {
            return Ok(());
        };
        if self.source("channel.mean_velocity") != Source::Default {
            return Err(CliError::Config(
                "channel.mean_velocity and channel.pressure_gradient are mutually exclusive".into(),
            ));
        }
        let v = mean_velocity_from_pressure(
            gradient,
            self.number("channel.radius"),
            self.number("channel.viscosity"),
        )
        .map_err(|e| CliError::Config(format!("channel.pressure_gradient: {e}")))?;
        let entry = self.entry_mut("channel.mean_velocity");
        entry.1 = Value::Number(v);
        entry.2 = Source::Derived;
        Ok(())
    }

    fn entry_mut(&mut self, key: &str) -> &mut (&'static str, Value, Source) {
        self.entries
            .iter_mut()
            .find(|e| e.0 == key)
            .unwrap_or_else(|| panic!("no key {key}"))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&'static str, &Value, Source)> {
        self.entries.iter().map(|(k, v, s)| (*k, v, *s))
    }

    pub fn value(&self, key: &str) -> &Value {
        &self
            .entries
            .iter()
            .find(|e| e.0 == key)
            .unwrap_or_else(|| panic!("no key {key}"))
            .1
    }

    pub fn source(&self, key: &str) -> Source {
        self.entries
            .iter()
            .find(|e| e.0 == key)
            .unwrap_or_else(|| panic!("no key {key}"))
            .2
    }

    pub fn number(&self, key: &str) -> f64 {
        match self.value(key) {
            Value::Number(x) => *x,
            other => panic!("{key} is {other:?}, not a number"),
        }
    }

    pub fn numbers(&self, key: &str) -> &[f64] {
        match self.value(key) {
            Value::Numbers(x) => x,
            other => panic!("{key} is {other:?}, not a list"),
        }
    }

    pub fn count(&self, key: &str) -> u64 {
        match self.value(key) {
            Value::Count(n) => *n,
            other => panic!("{key} is {other:?}, not a count"),
        }
    }

    pub fn flag(&self, key: &str) -> bool {
        match self.value(key) {
            Value::Bool(b) => *b,
            other => panic!("{key} is {other:?}, not a boolean"),
        }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.value(key) {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn texts(&self, key: &str) -> &[String] {
        match self.value(key) {
            Value::Texts(s) => s,
            other => panic!("{key} is {other:?}, not a list of words"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.count("seed")
    }

    /// `key = value  # source` lines, in schema order.
    pub fn describe(&self) -> Vec<String> {
        self.entries()
            .map(|(k, v, s)| format!("{k} = {v}  # {}", s.as_str()))
            .collect()
    }
}
