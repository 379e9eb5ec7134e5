//! Flat `key = value` experiment configuration with dotted sections.
//!
//! ```text
//! birth_rate = 2.0
//! lifetime.kind = exponential
//! lifetime.death_rate = 1.0
//! mutation_rate = 0.5
//! horizons = 8,12,16
//! replicates = 100000
//! seed = 42
//! ```
//!
//! Blank lines and `#` comments are ignored; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{LifespanModel, Lifetime, ModelParams, TabulatedTail, DEFAULT_REGIME_TOL};

/// Verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    Spectrum,
    ExtremesLargest,
    ExtremesOldest,
    Joint,
    Bounds,
    OracleCrosscheck,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Spectrum,
        Suite::ExtremesLargest,
        Suite::ExtremesOldest,
        Suite::Joint,
        Suite::Bounds,
        Suite::OracleCrosscheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Spectrum => "spectrum",
            Suite::ExtremesLargest => "extremes-largest",
            Suite::ExtremesOldest => "extremes-oldest",
            Suite::Joint => "joint",
            Suite::Bounds => "bounds",
            Suite::OracleCrosscheck => "oracle-crosscheck",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}'")))
    }
}

/// Thresholds at which extremes are counted.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Thresholds {
    /// Regime centerings at offsets −2..=2.
    #[default]
    Auto,
    Explicit {
        sizes: Vec<f64>,
        ages: Vec<f64>,
        windows: Vec<(f64, f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub horizons: Vec<f64>,
    pub replicates: usize,
    pub master_seed: u64,
    pub thresholds: Thresholds,
    pub suites: Vec<Suite>,
    /// 0 means one worker per available core.
    pub workers: usize,
    /// Largest family size tracked individually in the spectrum.
    pub k_max: u64,
    /// Grid spacing; `None` uses the default for the model.
    pub grid_step: Option<f64>,
    pub z_max: f64,
    pub pop_cap: usize,
    pub regime_tol: f64,
}

impl ExperimentConfig {
    pub fn new(model: ModelParams) -> Self {
        Self {
            model,
            horizons: vec![1.0],
            replicates: 1000,
            master_seed: 0,
            thresholds: Thresholds::Auto,
            suites: vec![Suite::Spectrum],
            workers: 0,
            k_max: 10,
            grid_step: None,
            z_max: 3.0,
            pop_cap: crate::forward::DEFAULT_POP_CAP,
            regime_tol: DEFAULT_REGIME_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Config("horizons must be a nonempty list of positive numbers".into()));
        }
        if self.k_max == 0 {
            return Err(Error::Config("spectrum.k_max must be positive".into()));
        }
        if !(self.z_max > 0.0) {
            return Err(Error::Config("z_max must be positive".into()));
        }
        if let Thresholds::Explicit { windows, .. } = &self.thresholds {
            if let Some(w) = windows.iter().find(|w| !(w.1 <= w.2)) {
                return Err(Error::Config(format!("thresholds.windows: window {w:?} has s1 > s2")));
            }
        }
        if !self.model.lifespan.is_supercritical() {
            return Err(Error::NotSupercritical { mean_offspring: self.model.lifespan.mean_offspring() });
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let life = &self.model.lifespan;
        let _ = writeln!(out, "birth_rate = {}", life.birth_rate());
        match life.lifetime() {
            Lifetime::Exponential { death_rate } => {
                let _ = writeln!(out, "lifetime.kind = exponential\nlifetime.death_rate = {death_rate}");
            }
            Lifetime::Fixed { duration } => {
                let _ = writeln!(out, "lifetime.kind = fixed\nlifetime.duration = {duration}");
            }
            Lifetime::Immortal => {
                let _ = writeln!(out, "lifetime.kind = immortal");
            }
            Lifetime::Tabulated(tail) => {
                let _ = writeln!(out, "lifetime.kind = tabulated\nlifetime.step = {}", tail.step());
                let _ = writeln!(out, "lifetime.values = {}", join(tail.values()));
            }
        }
        let _ = writeln!(out, "mutation_rate = {}", self.model.mutation_rate());
        let _ = writeln!(out, "horizons = {}", join(&self.horizons));
        let _ = writeln!(out, "replicates = {}", self.replicates);
        let _ = writeln!(out, "seed = {}", self.master_seed);
        let _ = writeln!(out, "workers = {}", self.workers);
        let suites: Vec<&str> = self.suites.iter().map(|s| s.name()).collect();
        let _ = writeln!(out, "suites = {}", suites.join(","));
        match &self.thresholds {
            Thresholds::Auto => {
                let _ = writeln!(out, "thresholds = auto");
            }
            Thresholds::Explicit { sizes, ages, windows } => {
                let _ = writeln!(out, "thresholds = explicit");
                let _ = writeln!(out, "thresholds.sizes = {}", join(sizes));
                let _ = writeln!(out, "thresholds.ages = {}", join(ages));
                let w: Vec<String> = windows.iter().map(|(x, a, b)| format!("{x}:{a}:{b}")).collect();
                let _ = writeln!(out, "thresholds.windows = {}", w.join(","));
            }
        }
        let _ = writeln!(out, "spectrum.k_max = {}", self.k_max);
        if let Some(h) = self.grid_step {
            let _ = writeln!(out, "grid.step = {h}");
        }
        let _ = writeln!(out, "z_max = {}", self.z_max);
        let _ = writeln!(out, "pop_cap = {}", self.pop_cap);
        let _ = writeln!(out, "regime_tol = {}", self.regime_tol);
        out
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

const KEYS: [&str; 21] = [
    "birth_rate",
    "lifetime.kind",
    "lifetime.death_rate",
    "lifetime.duration",
    "lifetime.step",
    "lifetime.values",
    "mutation_rate",
    "horizons",
    "replicates",
    "seed",
    "workers",
    "suites",
    "thresholds",
    "thresholds.sizes",
    "thresholds.ages",
    "thresholds.windows",
    "spectrum.k_max",
    "grid.step",
    "z_max",
    "pop_cap",
    "regime_tol",
];

struct Doc {
    entries: BTreeMap<String, (usize, String)>,
}

impl Doc {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn required(&self, key: &str) -> Result<(usize, &str)> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    fn parse_with<T>(&self, key: &str, f: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => f(v)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("line {line}: invalid value '{v}' for key '{key}'"))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse_with(key, |v| v.parse().ok())
    }

    fn req_f64(&self, key: &str) -> Result<f64> {
        self.required(key)?;
        Ok(self.f64(key)?.expect("checked present"))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.parse_with(key, |v| {
            if v.is_empty() {
                return Some(Vec::new());
            }
            v.split(',').map(|x| x.trim().parse().ok()).collect()
        })
    }
}

/// Parses a configuration document, applying defaults and validating.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line_no}: expected 'key = value', got '{line}'")))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {line_no}: unknown key '{key}'")));
        }
        if entries.insert(key.to_string(), (line_no, value.trim().to_string())).is_some() {
            return Err(Error::Config(format!("line {line_no}: duplicate key '{key}'")));
        }
    }
    let doc = Doc { entries };
    let wrap = |key: &str, e: Error| match e {
        Error::Config(_) => e,
        other => Error::Config(format!("{key}: {other}")),
    };

    let b = doc.req_f64("birth_rate")?;
    let (kind_line, kind) = doc.required("lifetime.kind")?;
    let lifetime = match kind {
        "exponential" => Lifetime::Exponential { death_rate: doc.req_f64("lifetime.death_rate")? },
        "fixed" => Lifetime::Fixed { duration: doc.req_f64("lifetime.duration")? },
        "immortal" => Lifetime::Immortal,
        "tabulated" => {
            let step = doc.req_f64("lifetime.step")?;
            doc.required("lifetime.values")?;
            let values = doc.list("lifetime.values")?.expect("checked present");
            Lifetime::Tabulated(TabulatedTail::new(step, values).map_err(|e| wrap("lifetime.values", e))?)
        }
        other => {
            return Err(Error::Config(format!(
                "line {kind_line}: lifetime.kind must be exponential, fixed, immortal or tabulated, got '{other}'"
            )))
        }
    };
    let life = LifespanModel::new(b, lifetime).map_err(|e| wrap("birth_rate", e))?;
    let theta = doc.req_f64("mutation_rate")?;
    let model = ModelParams::new(life, theta).map_err(|e| wrap("mutation_rate", e))?;
    let mut cfg = ExperimentConfig::new(model);

    if let Some(h) = doc.list("horizons")? {
        cfg.horizons = h;
    }
    let int = |key: &str| doc.parse_with(key, |v| v.parse::<u64>().ok());
    if let Some(r) = int("replicates")? {
        cfg.replicates = r as usize;
    }
    if let Some(s) = int("seed")? {
        cfg.master_seed = s;
    }
    if let Some(w) = int("workers")? {
        cfg.workers = w as usize;
    }
    if let Some(k) = int("spectrum.k_max")? {
        cfg.k_max = k;
    }
    if let Some(c) = int("pop_cap")? {
        cfg.pop_cap = c as usize;
    }
    if let Some((line, v)) = doc.get("suites") {
        cfg.suites = v
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(Suite::parse)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Config(format!("line {line}: suites: {e}")))?;
    }
    cfg.grid_step = doc.f64("grid.step")?;
    if let Some(z) = doc.f64("z_max")? {
        cfg.z_max = z;
    }
    if let Some(t) = doc.f64("regime_tol")? {
        cfg.regime_tol = t;
    }
    let explicit_keys = ["thresholds.sizes", "thresholds.ages", "thresholds.windows"];
    match doc.get("thresholds") {
        None | Some((_, "auto")) => {
            if let Some(k) = explicit_keys.iter().find(|k| doc.get(k).is_some()) {
                return Err(Error::Config(format!("{k} requires 'thresholds = explicit'")));
            }
        }
        Some((_, "explicit")) => {
            let sizes = doc.list("thresholds.sizes")?.unwrap_or_default();
            let ages = doc.list("thresholds.ages")?.unwrap_or_default();
            let windows = doc
                .parse_with("thresholds.windows", |v| {
                    v.split(',')
                        .map(str::trim)
                        .filter(|w| !w.is_empty())
                        .map(|w| {
                            let p: Vec<f64> = w.split(':').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
                            (p.len() == 3).then(|| (p[0], p[1], p[2]))
                        })
                        .collect::<Option<Vec<_>>>()
                })?
                .unwrap_or_default();
            cfg.thresholds = Thresholds::Explicit { sizes, ages, windows };
        }
        Some((line, other)) => {
            return Err(Error::Config(format!("line {line}: thresholds must be auto or explicit, got '{other}'")))
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
