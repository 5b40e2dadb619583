//! Flat `section.key = value` configuration with a per-command schema.
//!
//! Lines are `key = value`; `#` starts a comment. Every key a command reads
//! is declared in its schema, either as required or with a default, so the
//! resolved configuration echoed into the manifest is complete.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use growfrag::model::{Nonlinearity, PeriodicControl, Signal};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Res<T> {
    Err(ConfigError(msg.into()))
}

/// `None` marks a required key.
pub type Field = (&'static str, Option<&'static str>);

const MODEL: [Field; 6] = [
    ("model.tau", None),
    ("model.nu", None),
    ("model.beta", None),
    ("model.gamma", None),
    ("model.mu", None),
    ("model.kernel", Some("constant-two")),
];
const GRID: [Field; 3] = [("grid.n", Some("400")), ("grid.dilation", Some("1,1")), ("eigen.tol", Some("1e-8"))];
const REDUCED: [Field; 12] = [
    ("reduced.system", None),
    ("reduced.f", Some("")),
    ("reduced.g", Some("")),
    ("reduced.p", Some("")),
    ("reduced.q", Some("")),
    ("reduced.lambda", Some("")),
    ("reduced.delta", Some("")),
    ("reduced.mp", Some("")),
    ("reduced.eps_p", Some("")),
    ("reduced.eps_q", Some("")),
    ("reduced.v1", Some("constant:1")),
    ("reduced.v2", Some("constant:0")),
];
const CONTROL: [Field; 2] = [("control.v", Some("constant:1")), ("control.r", Some("constant:0"))];
const ODE_RUN: [Field; 4] = [
    ("ode.y0", None),
    ("ode.t_end", None),
    ("ode.dt", Some("1e-3")),
    ("ode.stride", Some("10")),
];

/// Keys accepted by each subcommand.
pub fn schema(command: &str) -> Vec<Field> {
    let mut s: Vec<Field> = Vec::new();
    match command {
        "eigen" => {
            s.extend(MODEL);
            s.extend(GRID);
            s.push(("eigen.moments", Some("0,1,2")));
        }
        "simulate-pde" => {
            s.extend(MODEL);
            s.extend(GRID);
            s.extend(CONTROL);
            s.extend([
                ("pde.closure", Some("linear")),
                ("pde.initial", None),
                ("pde.t_end", None),
                ("pde.dt", Some("auto")),
                ("pde.stride", Some("10")),
                ("pde.f", Some("")),
                ("pde.g", Some("")),
                ("pde.p", Some("")),
                ("pde.q", Some("")),
                ("pde.lambda", Some("")),
                ("pde.delta", Some("")),
                ("pde.v0", Some("")),
                ("diag.p", Some("2")),
                ("diag.q", Some("1")),
                ("diag.x0", Some("")),
            ]);
        }
        "simulate-ode" => {
            s.extend(MODEL);
            s.extend(GRID);
            s.extend(REDUCED);
            s.extend(CONTROL);
            s.extend(ODE_RUN);
        }
        "steady-states" => {
            s.extend(MODEL);
            s.extend(GRID);
            s.extend(REDUCED);
            s.push(("analysis.search_end", Some("50")));
        }
        "hopf-scan" => {
            s.extend(MODEL);
            s.extend([
                ("reduced.f", None),
                ("reduced.lambda", None),
                ("reduced.delta", None),
                ("hopf.p_max", Some("8")),
                ("hopf.samples", Some("81")),
            ]);
        }
        "limit-cycle" => {
            s.extend(MODEL);
            s.extend(GRID);
            s.extend(REDUCED);
            s.extend(CONTROL);
            s.extend(ODE_RUN);
            s.extend([
                ("cycle.component", Some("0")),
                ("cycle.level", Some("mean")),
                ("cycle.burn_in", Some("half")),
            ]);
        }
        "floquet-compare" => {
            s.extend(MODEL);
            s.extend(CONTROL);
            s.extend([("floquet.dt", Some("1e-3")), ("floquet.random_cases", Some("0"))]);
        }
        "figure" => {
            s.extend([("figure.dt", Some("1e-3")), ("figure.stride", Some("20"))]);
        }
        _ => {}
    }
    s
}

/// Parses the raw `key = value` text.
pub fn parse(text: &str) -> Res<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return err(format!("line {}: expected key = value, got '{line}'", i + 1));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || !k.contains('.') {
            return err(format!("line {}: keys are dotted, like model.gamma, got '{k}'", i + 1));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return err(format!("line {}: duplicate key '{k}'", i + 1));
        }
    }
    Ok(map)
}

/// Configuration after schema validation, defaults filled in.
#[derive(Clone, Debug)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Res<BTreeMap<String, String>> {
        match path {
            None => Ok(BTreeMap::new()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
                parse(&text)
            }
        }
    }

    /// Rejects unknown keys and reports every missing required key at once.
    pub fn validate(command: &str, raw: BTreeMap<String, String>) -> Res<Self> {
        let fields = schema(command);
        let unknown: Vec<&str> = raw
            .keys()
            .filter(|k| !fields.iter().any(|(f, _)| f == k))
            .map(|k| k.as_str())
            .collect();
        if !unknown.is_empty() {
            return err(format!("unknown key(s) for '{command}': {}", unknown.join(", ")));
        }
        let missing: Vec<&str> = fields
            .iter()
            .filter(|(k, d)| d.is_none() && !raw.contains_key(*k))
            .map(|(k, _)| *k)
            .collect();
        if !missing.is_empty() {
            return err(format!("missing required key(s) for '{command}': {}", missing.join(", ")));
        }
        let mut values = raw;
        for (k, d) in fields {
            if let Some(d) = d {
                values.entry(k.to_string()).or_insert_with(|| d.to_string());
            }
        }
        Ok(Self { values })
    }

    /// Command-line overrides land on keys the schema already knows.
    pub fn set(&mut self, key: &str, value: String) -> Res<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => err(format!("flag sets '{key}', which this command does not use")),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }

    pub fn str(&self, key: &str) -> Res<&str> {
        self.values
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| ConfigError(format!("key '{key}' is not part of this command's schema")))
    }

    /// Empty values mean "not given" for keys that only some variants use.
    pub fn opt(&self, key: &str) -> Res<Option<&str>> {
        let v = self.str(key)?;
        Ok(if v.is_empty() { None } else { Some(v) })
    }

    pub fn need(&self, key: &str, why: &str) -> Res<&str> {
        match self.opt(key)? {
            Some(v) => Ok(v),
            None => err(format!("missing required key(s): {key} ({why})")),
        }
    }

    pub fn f64(&self, key: &str) -> Res<f64> {
        parse_f64(key, self.str(key)?)
    }

    pub fn need_f64(&self, key: &str, why: &str) -> Res<f64> {
        parse_f64(key, self.need(key, why)?)
    }

    pub fn opt_f64(&self, key: &str) -> Res<Option<f64>> {
        self.opt(key)?.map(|v| parse_f64(key, v)).transpose()
    }

    pub fn usize(&self, key: &str) -> Res<usize> {
        let v = self.str(key)?;
        v.parse()
            .map_err(|_| ConfigError(format!("{key}: expected a nonnegative integer, got '{v}'")))
    }

    pub fn list(&self, key: &str) -> Res<Vec<f64>> {
        self.str(key)?
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_f64(key, s.trim()))
            .collect()
    }

    pub fn nonlinearity(&self, key: &str, why: &str) -> Res<Nonlinearity> {
        Nonlinearity::parse(self.need(key, why)?).map_err(|e| ConfigError(format!("{key}: {e}")))
    }

    pub fn signal(&self, key: &str) -> Res<Signal> {
        Signal::parse(self.str(key)?).map_err(|e| ConfigError(format!("{key}: {e}")))
    }

    pub fn control(&self) -> Res<PeriodicControl> {
        PeriodicControl::new(self.signal("control.v")?, self.signal("control.r")?)
            .map_err(|e| ConfigError(format!("control: {e}")))
    }
}

fn parse_f64(key: &str, v: &str) -> Res<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => err(format!("{key}: expected a finite number, got '{v}'")),
    }
}
