//! Simulation parameters and the plain-text `key = value` config format.
//!
//! A config file holds one assignment per line. `#` starts a comment, blank
//! lines are ignored, unknown or repeated keys are rejected. Lists are
//! comma-separated. Keys not present keep their default value.
//!
//! ```text
//! n_agents = 200
//! consumer_kind = mixed(0.5)
//! conv_tol = none
//! n_values = 100, 400, 1600, 6400
//! ```

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::error::SimError;

/// How free agents pick documents from their curated set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsumerKind {
    /// Reads the `k` curated documents nearest to its own belief.
    Biased,
    /// Reads `k` curated documents sampled uniformly.
    Uniform,
}

/// Population-level consumer assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConsumerMix {
    Biased,
    Uniform,
    /// The first `round(p_biased * n_free)` free agents are biased, the rest uniform.
    Mixed { p_biased: f64 },
}

/// How the per-step document pool is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductionMode {
    /// One document per free agent at its exact position.
    Mirror,
    /// `n_docs` documents drawn with replacement from free-agent positions.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Total population, committed agents included.
    pub n_agents: usize,
    pub n_committed: usize,
    pub dims: usize,
    /// Documents per step (Sampled mode).
    pub n_docs: usize,
    pub misinfo_ratio: f64,
    pub alpha: f64,
    pub capacity_k: usize,
    pub visibility_radius: f64,
    pub consumer_kind: ConsumerMix,
    pub production_mode: ProductionMode,
    pub committed_magnitude: f64,
    pub epsilon_influence: f64,
    pub init_spread: f64,
    pub t_max: u64,
    /// `None` disables convergence detection.
    pub conv_tol: Option<f64>,
    pub conv_window: usize,
    pub snapshot_every: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_agents: 200,
            n_committed: 2,
            dims: 1,
            n_docs: 1600,
            misinfo_ratio: 0.05,
            alpha: 0.8,
            capacity_k: 10,
            visibility_radius: 0.6,
            consumer_kind: ConsumerMix::Biased,
            production_mode: ProductionMode::Sampled,
            committed_magnitude: 0.95,
            epsilon_influence: 1e-6,
            init_spread: 0.25,
            t_max: 1000,
            conv_tol: Some(1e-9),
            conv_window: 20,
            snapshot_every: 100,
            seed: 1,
        }
    }
}

/// `floor(x + 1/2)`, with a small guard so that products such as `0.35 * 10`
/// that land just below a half-integer still round up.
pub fn round_half_up(x: f64) -> usize {
    let guarded = x + 0.5 + 1e-9 * x.abs().max(1.0);
    guarded.floor().max(0.0) as usize
}

impl SimConfig {
    pub fn n_free(&self) -> usize {
        self.n_agents.saturating_sub(self.n_committed)
    }

    /// Misinformation documents injected each step.
    pub fn n_misinfo_docs(&self) -> usize {
        match self.production_mode {
            ProductionMode::Sampled => round_half_up(self.misinfo_ratio * self.n_docs as f64),
            ProductionMode::Mirror => round_half_up(self.misinfo_ratio * self.n_free() as f64),
        }
    }

    /// Size of the per-step document pool.
    pub fn pool_size(&self) -> usize {
        match self.production_mode {
            ProductionMode::Sampled => self.n_docs,
            ProductionMode::Mirror => self.n_free() + self.n_misinfo_docs(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |key: &'static str, message: String| Err(SimError::InvalidField { key, message });
        if self.n_agents == 0 {
            return bad("n_agents", "must be positive".into());
        }
        if self.n_committed > self.n_agents {
            return bad(
                "n_committed",
                format!("{} exceeds n_agents ({})", self.n_committed, self.n_agents),
            );
        }
        if self.n_free() == 0 {
            return bad("n_committed", "leaves no free (non-committed) agent".into());
        }
        if self.dims == 0 {
            return bad("dims", "must be positive".into());
        }
        if self.n_docs == 0 {
            return bad("n_docs", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.misinfo_ratio) {
            return bad("misinfo_ratio", format!("{} not in [0, 1]", self.misinfo_ratio));
        }
        if self.misinfo_ratio > 0.0 && self.n_committed == 0 {
            return Err(SimError::NoCommittedAgents { ratio: self.misinfo_ratio });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("{} not in (0, 1)", self.alpha));
        }
        if self.capacity_k == 0 {
            return bad("capacity_k", "must be positive".into());
        }
        if !(self.visibility_radius >= 0.0 && self.visibility_radius.is_finite()) {
            return bad(
                "visibility_radius",
                format!("{} must be a non-negative number", self.visibility_radius),
            );
        }
        if let ConsumerMix::Mixed { p_biased } = self.consumer_kind {
            if !(0.0..=1.0).contains(&p_biased) {
                return bad("consumer_kind", format!("mixed fraction {p_biased} not in [0, 1]"));
            }
        }
        if self.production_mode == ProductionMode::Mirror && self.n_docs != self.n_free() {
            return bad(
                "n_docs",
                format!(
                    "mirror production requires n_docs = n_agents - n_committed ({}), got {}",
                    self.n_free(),
                    self.n_docs
                ),
            );
        }
        if !(0.0..=1.0).contains(&self.committed_magnitude) {
            return bad(
                "committed_magnitude",
                format!("{} not in [0, 1]", self.committed_magnitude),
            );
        }
        if !(self.epsilon_influence > 0.0 && self.epsilon_influence.is_finite()) {
            return bad(
                "epsilon_influence",
                format!("{} must be positive", self.epsilon_influence),
            );
        }
        if !(0.0..=1.0).contains(&self.init_spread) {
            return bad("init_spread", format!("{} not in [0, 1]", self.init_spread));
        }
        if let Some(tol) = self.conv_tol {
            if tol.is_nan() || tol <= 0.0 {
                return bad("conv_tol", format!("{tol} must be positive (or `none`)"));
            }
        }
        if self.conv_window == 0 {
            return bad("conv_window", "must be positive".into());
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every", "must be positive".into());
        }
        Ok(())
    }
}

/// A grid of (N, r) cells, each run `replicates` times.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub n_values: Vec<usize>,
    pub r_values: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            base: SimConfig::default(),
            n_values: vec![100, 400, 1600, 6400],
            r_values: vec![0.0, 0.05, 0.1, 0.2],
            replicates: 10,
            base_seed: 20_240_601,
        }
    }
}

impl SweepSpec {
    /// Checks the grid and every cell configuration it implies.
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        if self.n_values.is_empty() {
            return bad("n_values must not be empty");
        }
        if self.r_values.is_empty() {
            return bad("r_values must not be empty");
        }
        if self.replicates == 0 {
            return bad("replicates must be positive");
        }
        if !self.n_values.windows(2).all(|w| w[0] < w[1]) {
            return bad("n_values must be strictly ascending (no duplicates)");
        }
        if !self.r_values.windows(2).all(|w| w[0] < w[1]) {
            return bad("r_values must be strictly ascending (no duplicates)");
        }
        for &n in &self.n_values {
            for &r in &self.r_values {
                self.cell_config(n, r).validate().map_err(|e| {
                    SimError::InvalidConfig(format!("cell N={n}, r={r}: {e}"))
                })?;
            }
        }
        Ok(())
    }

    /// The base configuration overridden by one grid cell.
    pub fn cell_config(&self, n_docs: usize, misinfo_ratio: f64) -> SimConfig {
        SimConfig {
            n_docs,
            misinfo_ratio,
            ..self.base.clone()
        }
    }
}

/// Error from parsing a config file, carrying the 1-based line number.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(#[from] SimError),
}

const SIM_KEYS: &[&str] = &[
    "n_agents",
    "n_committed",
    "dims",
    "n_docs",
    "misinfo_ratio",
    "alpha",
    "capacity_k",
    "visibility_radius",
    "consumer_kind",
    "production_mode",
    "committed_magnitude",
    "epsilon_influence",
    "init_spread",
    "t_max",
    "conv_tol",
    "conv_window",
    "snapshot_every",
    "seed",
];

const SWEEP_KEYS: &[&str] = &["n_values", "r_values", "replicates", "base_seed"];

/// Names of every `SimConfig` key, in rendering order.
pub fn sim_keys() -> &'static [&'static str] {
    SIM_KEYS
}

fn parse_scalar<T: FromStr>(raw: &str, what: &str) -> Result<T, String> {
    raw.parse::<T>()
        .map_err(|_| format!("cannot parse `{raw}` as {what}"))
}

fn parse_f64(raw: &str) -> Result<f64, String> {
    let v: f64 = parse_scalar(raw, "a number")?;
    if v.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(v)
}

fn parse_list<T>(raw: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|s| item(s.trim())).collect()
}

fn parse_consumer_kind(raw: &str) -> Result<ConsumerMix, String> {
    match raw {
        "biased" => Ok(ConsumerMix::Biased),
        "uniform" => Ok(ConsumerMix::Uniform),
        _ => {
            let inner = raw
                .strip_prefix("mixed(")
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| {
                    format!("consumer_kind must be biased, uniform or mixed(<p>), got `{raw}`")
                })?;
            let p_biased = parse_f64(inner.trim())?;
            if !(0.0..=1.0).contains(&p_biased) {
                return Err(format!("mixed consumer fraction {p_biased} not in [0, 1]"));
            }
            Ok(ConsumerMix::Mixed { p_biased })
        }
    }
}

fn parse_production_mode(raw: &str) -> Result<ProductionMode, String> {
    match raw {
        "mirror" => Ok(ProductionMode::Mirror),
        "sampled" => Ok(ProductionMode::Sampled),
        _ => Err(format!("production_mode must be mirror or sampled, got `{raw}`")),
    }
}

/// Applies one assignment. Returns an error message on bad values.
fn assign(spec: &mut SweepSpec, key: &str, raw: &str) -> Result<(), String> {
    let c = &mut spec.base;
    match key {
        "n_agents" => c.n_agents = parse_scalar(raw, "a non-negative integer")?,
        "n_committed" => c.n_committed = parse_scalar(raw, "a non-negative integer")?,
        "dims" => c.dims = parse_scalar(raw, "a non-negative integer")?,
        "n_docs" => c.n_docs = parse_scalar(raw, "a non-negative integer")?,
        "misinfo_ratio" => c.misinfo_ratio = parse_f64(raw)?,
        "alpha" => c.alpha = parse_f64(raw)?,
        "capacity_k" => c.capacity_k = parse_scalar(raw, "a non-negative integer")?,
        "visibility_radius" => c.visibility_radius = parse_f64(raw)?,
        "consumer_kind" => c.consumer_kind = parse_consumer_kind(raw)?,
        "production_mode" => c.production_mode = parse_production_mode(raw)?,
        "committed_magnitude" => c.committed_magnitude = parse_f64(raw)?,
        "epsilon_influence" => c.epsilon_influence = parse_f64(raw)?,
        "init_spread" => c.init_spread = parse_f64(raw)?,
        "t_max" => c.t_max = parse_scalar(raw, "a non-negative integer")?,
        "conv_tol" => {
            c.conv_tol = if raw == "none" {
                None
            } else {
                Some(parse_f64(raw)?)
            }
        }
        "conv_window" => c.conv_window = parse_scalar(raw, "a non-negative integer")?,
        "snapshot_every" => c.snapshot_every = parse_scalar(raw, "a non-negative integer")?,
        "seed" => c.seed = parse_scalar(raw, "a 64-bit unsigned integer")?,
        "n_values" => spec.n_values = parse_list(raw, |s| parse_scalar(s, "an integer"))?,
        "r_values" => spec.r_values = parse_list(raw, parse_f64)?,
        "replicates" => spec.replicates = parse_scalar(raw, "a non-negative integer")?,
        "base_seed" => spec.base_seed = parse_scalar(raw, "a 64-bit unsigned integer")?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// Which config field a validation failure concerns, for line attribution.
fn offending_key(err: &SimError) -> Option<&'static str> {
    match err {
        SimError::InvalidField { key, .. } => Some(key),
        SimError::NoCommittedAgents { .. } => Some("misinfo_ratio"),
        _ => None,
    }
}

/// Parses config text into a sweep spec (whose `base` is the run config).
///
/// Values are checked per line; the combined configuration is then checked
/// with [`SimConfig::validate`] and reported against the line that set the
/// offending key (or line 0 when it kept its default).
pub fn parse_config(text: &str) -> Result<SweepSpec, ConfigError> {
    let mut spec = SweepSpec::default();
    let mut seen: Vec<(&str, usize)> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |message: String| ConfigError::Syntax { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| syntax(format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let value = value.trim();
        let known = SIM_KEYS.iter().chain(SWEEP_KEYS).find(|k| **k == key);
        let Some(&known) = known else {
            return Err(syntax(format!("unknown key `{key}`")));
        };
        if let Some((_, first)) = seen.iter().find(|(k, _)| *k == known) {
            return Err(syntax(format!("duplicate key `{key}` (first set on line {first})")));
        }
        seen.push((known, line));
        assign(&mut spec, key, value).map_err(syntax)?;
    }
    spec.base.validate().map_err(|e| {
        let line = offending_key(&e)
            .and_then(|k| seen.iter().find(|(s, _)| *s == k))
            .map(|(_, l)| *l)
            .unwrap_or(0);
        ConfigError::Syntax {
            line,
            message: e.to_string(),
        }
    })?;
    Ok(spec)
}

struct Value<'a>(&'a f64);

impl fmt::Display for Value<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Shortest round-trip representation.
        write!(f, "{}", self.0)
    }
}

/// Renders the `SimConfig` keys as config lines.
pub fn render_sim_config(c: &SimConfig) -> String {
    let mut out = String::new();
    let kind = match c.consumer_kind {
        ConsumerMix::Biased => "biased".to_string(),
        ConsumerMix::Uniform => "uniform".to_string(),
        ConsumerMix::Mixed { p_biased } => format!("mixed({})", Value(&p_biased)),
    };
    let mode = match c.production_mode {
        ProductionMode::Mirror => "mirror",
        ProductionMode::Sampled => "sampled",
    };
    let conv_tol = match &c.conv_tol {
        Some(t) => Value(t).to_string(),
        None => "none".to_string(),
    };
    let _ = writeln!(out, "n_agents = {}", c.n_agents);
    let _ = writeln!(out, "n_committed = {}", c.n_committed);
    let _ = writeln!(out, "dims = {}", c.dims);
    let _ = writeln!(out, "n_docs = {}", c.n_docs);
    let _ = writeln!(out, "misinfo_ratio = {}", Value(&c.misinfo_ratio));
    let _ = writeln!(out, "alpha = {}", Value(&c.alpha));
    let _ = writeln!(out, "capacity_k = {}", c.capacity_k);
    let _ = writeln!(out, "visibility_radius = {}", Value(&c.visibility_radius));
    let _ = writeln!(out, "consumer_kind = {kind}");
    let _ = writeln!(out, "production_mode = {mode}");
    let _ = writeln!(out, "committed_magnitude = {}", Value(&c.committed_magnitude));
    let _ = writeln!(out, "epsilon_influence = {}", Value(&c.epsilon_influence));
    let _ = writeln!(out, "init_spread = {}", Value(&c.init_spread));
    let _ = writeln!(out, "t_max = {}", c.t_max);
    let _ = writeln!(out, "conv_tol = {conv_tol}");
    let _ = writeln!(out, "conv_window = {}", c.conv_window);
    let _ = writeln!(out, "snapshot_every = {}", c.snapshot_every);
    let _ = writeln!(out, "seed = {}", c.seed);
    out
}

/// Renders a complete config file (run keys followed by sweep keys).
pub fn render_config(spec: &SweepSpec) -> String {
    let join = |items: Vec<String>| items.join(", ");
    let mut out = String::from("# simulation\n");
    out.push_str(&render_sim_config(&spec.base));
    out.push_str("\n# sweep\n");
    let _ = writeln!(
        out,
        "n_values = {}",
        join(spec.n_values.iter().map(|n| n.to_string()).collect())
    );
    let _ = writeln!(
        out,
        "r_values = {}",
        join(spec.r_values.iter().map(|r| Value(r).to_string()).collect())
    );
    let _ = writeln!(out, "replicates = {}", spec.replicates);
    let _ = writeln!(out, "base_seed = {}", spec.base_seed);
    out
}
