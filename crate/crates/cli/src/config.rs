//! Run configuration: a line-oriented, sectioned `key = value` format.
//!
//! ```text
//! [grid]
//! n = 256
//!
//! [potential]            # V(x) = cos(2πx)
//! harmonics = [[1, 1, 0]]
//!
//! [run]
//! dt = 1e-3
//! ```
//!
//! Values are integers, decimals, strings (bare or double-quoted) and
//! bracketed numeric lists. `#` starts a comment outside quotes.

use std::collections::BTreeMap;
use std::path::PathBuf;

use fk_thermo::feynman_kac::PropagatorConfig;
use fk_thermo::{HarmonicSpec, Laplacian, McConfig, PeriodicGrid};
use serde_json::{json, Value as Json};

use crate::output::num;

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["n", "laplacian"]),
    ("potential", &["constant", "harmonics", "file"]),
    ("f", &["constant", "harmonics", "file"]),
    ("g", &["constant", "harmonics", "file"]),
    (
        "run",
        &[
            "t",
            "dt",
            "T",
            "paths",
            "seed",
            "bins",
            "x",
            "method",
            "init",
            "drift",
            "K",
            "lr",
            "iters",
            "output",
            "write_paths",
            "perturb_eigenvalue",
        ],
    ),
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
}

impl Value {
    fn describe(&self) -> &'static str {
        match self {
            Value::Int(_) => "an integer",
            Value::Float(_) => "a decimal",
            Value::Str(_) => "a string",
            Value::List(_) => "a list",
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Float(x) => Some(x),
            _ => None,
        }
    }
}

/// Where a grid function comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Harmonics(HarmonicSpec),
    /// CSV with header `x,value` whose `x` column lists the grid nodes.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pde,
    Mc,
}

/// Initial law for `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Point(f64),
    /// The Gibbs density `F²` of the configured potential.
    GibbsDensity,
    /// Nonnegative samples on the grid, rescaled to unit mass.
    File(PathBuf),
}

/// Drift used by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftChoice {
    /// `(log F)'` of the configured potential.
    Doob,
    /// `g'` of the `[g]` section.
    GSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub t: f64,
    pub dt: f64,
    pub horizon: f64,
    pub paths: u64,
    pub seed: u64,
    pub bins: usize,
    pub x: f64,
    pub method: Method,
    pub init: InitSpec,
    pub drift: DriftChoice,
    pub harmonics: usize,
    pub lr: f64,
    pub iters: usize,
    pub output: PathBuf,
    pub write_paths: bool,
    pub perturb_eigenvalue: f64,
}

/// Fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: PeriodicGrid,
    /// Explicit Laplacian; each command has its own default when unset.
    pub laplacian: Option<Laplacian>,
    pub potential: Source,
    pub f: Option<Source>,
    pub g: Option<Source>,
    pub run: RunParams,
}

impl RunConfig {
    /// JSON echo of every resolved field, with the Laplacian the command uses.
    pub fn echo(&self, laplacian: Laplacian) -> Json {
        let r = &self.run;
        json!({
            "grid": { "n": self.grid.n(), "laplacian": laplacian.name() },
            "potential": source_json(Some(&self.potential)),
            "f": source_json(self.f.as_ref()),
            "g": source_json(self.g.as_ref()),
            "run": {
                "t": num(r.t),
                "dt": num(r.dt),
                "T": num(r.horizon),
                "paths": r.paths,
                "seed": r.seed,
                "bins": r.bins,
                "x": num(r.x),
                "method": match r.method { Method::Pde => "pde", Method::Mc => "mc" },
                "init": match &r.init {
                    InitSpec::Point(x) => format!("point:{x}"),
                    InitSpec::GibbsDensity => "density:muV".to_string(),
                    InitSpec::File(p) => format!("density:{}", p.display()),
                },
                "drift": match r.drift { DriftChoice::Doob => "doob", DriftChoice::GSpec => "g-spec" },
                "K": r.harmonics,
                "lr": num(r.lr),
                "iters": r.iters,
                "output": r.output.display().to_string(),
                "write_paths": r.write_paths,
                "perturb_eigenvalue": num(r.perturb_eigenvalue),
            },
        })
    }
}

pub fn spec_json(spec: &HarmonicSpec) -> Json {
    json!({
        "constant": num(spec.constant),
        "harmonics": spec
            .harmonics
            .iter()
            .map(|h| json!([h.k, num(h.a), num(h.b)]))
            .collect::<Vec<_>>(),
    })
}

fn source_json(source: Option<&Source>) -> Json {
    match source {
        None => Json::Null,
        Some(Source::Harmonics(spec)) => spec_json(spec),
        Some(Source::File(p)) => json!({ "file": p.display().to_string() }),
    }
}

/// Parses and validates a configuration text with all defaults applied.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with(text, &[])
}

/// As [`parse_config`], with `(section.key, value)` overrides applied after
/// the file and before validation.
pub fn parse_config_with(
    text: &str,
    overrides: &[(String, String)],
) -> Result<RunConfig, ConfigError> {
    let mut doc = parse_document(text)?;
    for (name, raw) in overrides {
        let (section, key) = name
            .split_once('.')
            .ok_or_else(|| invalid(name.as_str(), "override must have the form section.key"))?;
        check_known(section, key).map_err(|m| invalid(name.as_str(), m))?;
        let value = parse_value(raw.trim()).map_err(|m| invalid(name.as_str(), m))?;
        doc.insert((section.to_string(), key.to_string()), value);
    }
    resolve(&doc)
}

type Document = BTreeMap<(String, String), Value>;

fn check_known(section: &str, key: &str) -> Result<(), String> {
    let keys = SECTIONS
        .iter()
        .find(|(s, _)| *s == section)
        .map(|(_, k)| *k)
        .ok_or_else(|| format!("unknown section [{section}]"))?;
    if keys.contains(&key) {
        Ok(())
    } else {
        Err(format!(
            "unknown key `{key}` in [{section}] (expected one of: {})",
            keys.join(", ")
        ))
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_document(text: &str) -> Result<Document, ConfigError> {
    let mut doc = Document::new();
    let mut first_seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| ConfigError::Parse { line, message };
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err("unterminated section header".into()))?
                .trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(err(format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim();
        let value = value.trim();
        let Some(section) = section.as_deref() else {
            return Err(err(format!("key `{key}` appears before any [section]")));
        };
        check_known(section, key).map_err(err)?;
        if value.is_empty() {
            return Err(err(format!("missing value for `{key}`")));
        }
        let slot = (section.to_string(), key.to_string());
        if let Some(first) = first_seen.get(&slot) {
            return Err(err(format!(
                "duplicate key `{key}` in [{section}] (first set on line {first})"
            )));
        }
        let value = parse_value(value).map_err(err)?;
        first_seen.insert(slot.clone(), line);
        doc.insert(slot, value);
    }
    Ok(doc)
}

fn parse_number(token: &str) -> Result<Value, String> {
    if let Ok(i) = token.parse::<i64>() {
        return Ok(Value::Int(i));
    }
    match token.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(Value::Float(x)),
        _ => Err(format!("invalid number `{token}`")),
    }
}

fn parse_value(text: &str) -> Result<Value, String> {
    let first = text.chars().next().ok_or("empty value")?;
    match first {
        '[' => {
            let mut parser = ListParser {
                chars: text.as_bytes(),
                pos: 0,
            };
            let value = parser.list()?;
            parser.skip_ws();
            if parser.pos != text.len() {
                return Err(format!("unexpected text after list: `{}`", &text[parser.pos..]));
            }
            Ok(value)
        }
        '"' => {
            let inner = text
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .filter(|s| !s.contains('"'))
                .ok_or_else(|| format!("malformed quoted string `{text}`"))?;
            Ok(Value::Str(inner.to_string()))
        }
        c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => parse_number(text),
        _ => Ok(Value::Str(text.to_string())),
    }
}

struct ListParser<'a> {
    chars: &'a [u8],
    pos: usize,
}

impl ListParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.chars.get(self.pos).copied()
    }

    fn list(&mut self) -> Result<Value, String> {
        self.pos += 1; // '['
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(Value::List(items));
        }
        loop {
            self.skip_ws();
            let item = match self.peek() {
                Some(b'[') => self.list()?,
                Some(_) => {
                    let start = self.pos;
                    while let Some(c) = self.peek() {
                        if c == b',' || c == b']' || c.is_ascii_whitespace() {
                            break;
                        }
                        self.pos += 1;
                    }
                    let token = std::str::from_utf8(&self.chars[start..self.pos]).unwrap();
                    if token.is_empty() {
                        return Err("empty list element".into());
                    }
                    parse_number(token)?
                }
                None => return Err("unterminated list".into()),
            };
            items.push(item);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(Value::List(items));
                }
                Some(c) => return Err(format!("unexpected `{}` in list", c as char)),
                None => return Err("unterminated list".into()),
            }
        }
    }
}

struct Lookup<'a> {
    doc: &'a Document,
}

impl Lookup<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&Value> {
        self.doc.get(&(section.to_string(), key.to_string()))
    }

    fn has_section(&self, section: &str) -> bool {
        self.doc.keys().any(|(s, _)| s == section)
    }

    fn float(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| {
                invalid(
                    format!("{section}.{key}"),
                    format!("expected a number, found {}", v.describe()),
                )
            }),
        }
    }

    fn uint(&self, section: &str, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(Value::Int(i)) if *i >= 0 => Ok(*i as u64),
            Some(v) => Err(invalid(
                format!("{section}.{key}"),
                format!("expected a nonnegative integer, found {}", describe_value(v)),
            )),
        }
    }

    fn string(&self, section: &str, key: &str, default: &str) -> Result<String, ConfigError> {
        match self.get(section, key) {
            None => Ok(default.to_string()),
            Some(Value::Str(s)) => Ok(s.clone()),
            Some(v) => Err(invalid(
                format!("{section}.{key}"),
                format!("expected a string, found {}", v.describe()),
            )),
        }
    }
}

fn describe_value(v: &Value) -> String {
    match v {
        Value::Int(i) => format!("{i}"),
        Value::Float(x) => format!("{x}"),
        other => other.describe().to_string(),
    }
}

fn source(
    lookup: &Lookup<'_>,
    section: &str,
    grid: PeriodicGrid,
) -> Result<Option<Source>, ConfigError> {
    if !lookup.has_section(section) {
        return Ok(None);
    }
    if let Some(file) = lookup.get(section, "file") {
        let Value::Str(path) = file else {
            return Err(invalid(format!("{section}.file"), "expected a path"));
        };
        if lookup.get(section, "harmonics").is_some() || lookup.get(section, "constant").is_some() {
            return Err(invalid(
                format!("{section}.file"),
                "cannot be combined with `constant` or `harmonics`",
            ));
        }
        return Ok(Some(Source::File(PathBuf::from(path))));
    }
    let key = format!("{section}.harmonics");
    let constant = lookup.float(section, "constant", 0.0)?;
    let mut triples = Vec::new();
    match lookup.get(section, "harmonics") {
        None => {}
        Some(Value::List(items)) => {
            for item in items {
                let triple = match item {
                    Value::List(t) if t.len() == 3 => t,
                    _ => return Err(invalid(&key, "each entry must be a list [k, a, b]")),
                };
                let k = match triple[0] {
                    Value::Int(k) if k >= 1 && k <= u32::MAX as i64 => k as u32,
                    _ => return Err(invalid(&key, "wavenumber k must be a positive integer")),
                };
                let a = triple[1].as_f64().unwrap_or(f64::NAN);
                let b = triple[2].as_f64().unwrap_or(f64::NAN);
                triples.push((k, a, b));
            }
        }
        Some(v) => {
            return Err(invalid(&key, format!("expected a list, found {}", v.describe())));
        }
    }
    let spec = HarmonicSpec::from_triples(constant, &triples)
        .map_err(|e| invalid(&key, e.to_string()))?;
    spec.sample(grid).map_err(|e| invalid(&key, e.to_string()))?;
    Ok(Some(Source::Harmonics(spec)))
}

fn resolve(doc: &Document) -> Result<RunConfig, ConfigError> {
    let l = Lookup { doc };
    let n = l.uint("grid", "n", 512)?;
    let grid = PeriodicGrid::new(n as usize).map_err(|e| invalid("grid.n", e.to_string()))?;
    let laplacian = match l.get("grid", "laplacian") {
        None => None,
        Some(_) => Some(
            l.string("grid", "laplacian", "")?
                .parse::<Laplacian>()
                .map_err(|m| invalid("grid.laplacian", m))?,
        ),
    };
    let potential = source(&l, "potential", grid)?
        .unwrap_or_else(|| Source::Harmonics(HarmonicSpec::constant(0.0)));
    let f = source(&l, "f", grid)?;
    let g = source(&l, "g", grid)?;

    let dt = l.float("run", "dt", 1e-3)?;
    McConfig::new(1, dt, 0).map_err(|e| invalid("run.dt", e.to_string()))?;
    let t = l.float("run", "t", 1.0)?;
    PropagatorConfig::new(t, dt).map_err(|e| invalid("run.t", e.to_string()))?;
    let horizon = l.float("run", "T", 1.0)?;
    PropagatorConfig::new(horizon, dt).map_err(|e| invalid("run.T", e.to_string()))?;

    let paths = l.uint("run", "paths", 10_000)?;
    if paths == 0 {
        return Err(invalid("run.paths", "need at least one path"));
    }
    let seed = l.uint("run", "seed", 42)?;
    let bins = l.uint("run", "bins", 64)? as usize;
    if bins == 0 {
        return Err(invalid("run.bins", "need at least one bin"));
    }
    let x = l.float("run", "x", 0.0)?;
    let method = match l.string("run", "method", "pde")?.as_str() {
        "pde" => Method::Pde,
        "mc" => Method::Mc,
        other => return Err(invalid("run.method", format!("expected pde or mc, got `{other}`"))),
    };
    let init = parse_init(&l.string("run", "init", "density:muV")?)?;
    let drift = match l.string("run", "drift", "doob")?.as_str() {
        "doob" => DriftChoice::Doob,
        "g-spec" => DriftChoice::GSpec,
        other => {
            return Err(invalid("run.drift", format!("expected doob or g-spec, got `{other}`")))
        }
    };
    if drift == DriftChoice::GSpec && g.is_none() {
        return Err(invalid("run.drift", "g-spec needs a [g] section"));
    }
    let harmonics = l.uint("run", "K", 3)? as usize;
    if harmonics == 0 || harmonics > grid.n() / 4 {
        return Err(invalid(
            "run.K",
            format!("need 1 <= K <= n/4 = {}, got {harmonics}", grid.n() / 4),
        ));
    }
    let lr = l.float("run", "lr", 0.5)?;
    if lr <= 0.0 {
        return Err(invalid("run.lr", format!("learning rate must be positive, got {lr}")));
    }
    let iters = l.uint("run", "iters", 500)? as usize;
    if iters == 0 {
        return Err(invalid("run.iters", "need at least one iteration"));
    }
    let output = PathBuf::from(l.string("run", "output", "fk-thermo-out")?);
    let write_paths = match l.get("run", "write_paths") {
        None => false,
        Some(Value::Int(0)) => false,
        Some(Value::Int(1)) => true,
        Some(Value::Str(s)) if s == "false" => false,
        Some(Value::Str(s)) if s == "true" => true,
        Some(_) => return Err(invalid("run.write_paths", "expected true or false")),
    };
    let perturb_eigenvalue = l.float("run", "perturb_eigenvalue", 0.0)?;

    Ok(RunConfig {
        grid,
        laplacian,
        potential,
        f,
        g,
        run: RunParams {
            t,
            dt,
            horizon,
            paths,
            seed,
            bins,
            x,
            method,
            init,
            drift,
            harmonics,
            lr,
            iters,
            output,
            write_paths,
            perturb_eigenvalue,
        },
    })
}

fn parse_init(text: &str) -> Result<InitSpec, ConfigError> {
    if let Some(x) = text.strip_prefix("point:") {
        return match x.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(InitSpec::Point(x)),
            _ => Err(invalid("run.init", format!("invalid start point `{x}`"))),
        };
    }
    match text.strip_prefix("density:") {
        Some("muV") => Ok(InitSpec::GibbsDensity),
        Some(path) if !path.is_empty() => Ok(InitSpec::File(PathBuf::from(path))),
        _ => Err(invalid(
            "run.init",
            format!("expected point:<x>, density:muV or density:<file.csv>, got `{text}`"),
        )),
    }
}
