//! Study configuration, read from TOML.
//!
//! Every section is optional and falls back to the defaults of the default
//! study (the 18-outcome grid, 13 conceptual and 8 experiential simulated
//! respondents). Unknown keys are rejected. Errors point at a line: parse
//! errors carry the parser's position, and semantic errors carry the dotted
//! path of the offending field plus the line where it is set.
//!
//! ```toml
//! [study]
//! seed = 7
//! protocol = "primed_plus"
//!
//! [[condition]]
//! label = "primed-plus"
//! protocol = "primed_plus"
//! respondents = 8
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::outcome::{AttributeGrid, Outcome, OutcomeError, OutcomeSpace};
use crate::protocol::{Protocol, ProtocolKind, DEFAULT_PRIMED_PLUS_PREFIX};
use crate::query::SchedulingMode;
use crate::respondent::{BiasModel, Family, ResponseModel};
use crate::bounds::ConflictPolicy;
use crate::session::SessionSettings;
use crate::task::{TaskFactory, Vocabulary};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: cannot read config: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid { field: String, line: Option<usize>, message: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError::Invalid { field: field.into(), line: None, message: message.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub name: String,
    pub seed: u64,
    /// Protocol for sessions created over HTTP without an explicit one.
    pub protocol: ProtocolKind,
    pub scheduling: SchedulingMode,
    pub conflict_policy: ConflictPolicy,
    pub k: u32,
    pub termination_width: f64,
    pub task_complexity: u32,
    pub primed_plus_prefix: u32,
    pub record_timestamps: bool,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            name: "conceptual-vs-experiential".into(),
            seed: 2010,
            protocol: ProtocolKind::Conceptual,
            scheduling: SchedulingMode::Sequential,
            conflict_policy: ConflictPolicy::TrustNew,
            k: 10,
            termination_width: 0.1,
            task_complexity: 4,
            primed_plus_prefix: DEFAULT_PRIMED_PLUS_PREFIX,
            record_timestamps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchors {
    pub best: Outcome,
    pub worst: Outcome,
}

impl Default for Anchors {
    fn default() -> Self {
        let space = OutcomeSpace::default();
        Self { best: space.best(), worst: space.worst() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionSection {
    /// Utility of making no suggestion, one value per neediness level.
    /// When absent, the elicited midpoint of `u(n, l_min, q_min)` is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_none: Option<Vec<f64>>,
    /// Chance that an observed event does not reflect the user's goal.
    pub observation_noise: f64,
}

impl Default for DecisionSection {
    fn default() -> Self {
        Self { u_none: None, observation_noise: 0.1 }
    }
}

/// The simulated population every condition draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    pub families: Vec<Family>,
    pub bias: BiasModel,
    pub response: ResponseModel,
}

impl Default for PopulationSection {
    fn default() -> Self {
        Self { families: Family::SAMPLED.to_vec(), bias: BiasModel::default(), response: ResponseModel::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub label: String,
    pub protocol: ProtocolKind,
    pub respondents: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub study: StudySection,
    pub grid: AttributeGrid,
    pub anchors: Anchors,
    pub vocabulary: Vec<Vocabulary>,
    pub decision: DecisionSection,
    pub population: PopulationSection,
    pub condition: Vec<ConditionSpec>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            study: StudySection::default(),
            grid: AttributeGrid::default(),
            anchors: Anchors::default(),
            vocabulary: Vocabulary::defaults(),
            decision: DecisionSection::default(),
            population: PopulationSection::default(),
            condition: vec![
                ConditionSpec { label: "conceptual".into(), protocol: ProtocolKind::Conceptual, respondents: 13 },
                ConditionSpec { label: "experiential".into(), protocol: ProtocolKind::Experiential, respondents: 8 },
            ],
        }
    }
}

impl StudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: StudyConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
            ConfigError::Parse { line, column, message: e.message().trim().to_string() }
        })?;
        config.validate().map_err(|e| match e {
            ConfigError::Invalid { field, message, .. } => {
                let line = locate(text, &field);
                ConfigError::Invalid { field, line, message }
            }
            other => other,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn space(&self) -> Result<OutcomeSpace, ConfigError> {
        OutcomeSpace::new(self.grid.clone(), self.anchors.best, self.anchors.worst).map_err(|e| match e {
            OutcomeError::UnknownOutcome(o) if o == self.anchors.best => {
                ConfigError::invalid("anchors.best", format!("{o} is not on the grid"))
            }
            OutcomeError::UnknownOutcome(o) => ConfigError::invalid("anchors.worst", format!("{o} is not on the grid")),
            OutcomeError::InvalidGrid(m) if m.contains("anchors") => ConfigError::invalid("anchors", m),
            other => ConfigError::invalid(grid_field(&other), other),
        })
    }

    pub fn factory(&self) -> TaskFactory {
        TaskFactory { vocabularies: self.vocabulary.clone(), complexity: self.study.task_complexity }
    }

    pub fn protocol(&self, kind: ProtocolKind) -> Protocol {
        Protocol::new(kind, self.study.primed_plus_prefix)
    }

    /// Session settings for `kind`, seeded with `seed`.
    pub fn session_settings(&self, kind: ProtocolKind, seed: u64) -> Result<SessionSettings, ConfigError> {
        Ok(SessionSettings {
            space: self.space()?,
            factory: self.factory(),
            k: self.study.k,
            termination_width: self.study.termination_width,
            protocol: self.protocol(kind),
            scheduling: self.study.scheduling,
            conflict_policy: self.study.conflict_policy,
            seed,
            record_timestamps: self.study.record_timestamps,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.study;
        if s.k == 0 {
            return Err(ConfigError::invalid("study.k", "must be positive"));
        }
        if !(s.termination_width > 0.0 && s.termination_width < 1.0) {
            return Err(ConfigError::invalid("study.termination_width", "must lie in (0, 1)"));
        }
        if s.task_complexity == 0 {
            return Err(ConfigError::invalid("study.task_complexity", "must be positive"));
        }
        let space = self.space()?;
        if let Some(p) = space.probability_grid().into_iter().find(|p| p.count_of(s.k).is_none()) {
            return Err(ConfigError::invalid(
                "study.k",
                format!("k = {} cannot embody p = {p} with a whole number of tasks", s.k),
            ));
        }
        let tick = 1.0 / f64::from(space.steps());
        if s.termination_width < tick - 1e-9 {
            return Err(ConfigError::invalid(
                "study.termination_width",
                format!("{} is finer than the probability step {tick}; bisection would stall", s.termination_width),
            ));
        }
        self.grid
            .validate_qualities(s.task_complexity)
            .map_err(|e| ConfigError::invalid("grid.qualities", e))?;
        let mut levels = BTreeSet::new();
        for (i, v) in self.vocabulary.iter().enumerate() {
            v.validate().map_err(|e| ConfigError::invalid(format!("vocabulary[{i}]"), e))?;
            if !levels.insert(v.neediness_level) {
                return Err(ConfigError::invalid(
                    format!("vocabulary[{i}].neediness_level"),
                    format!("duplicate vocabulary for neediness {}", v.neediness_level),
                ));
            }
        }
        if let Some(n) = self.grid.neediness.iter().find(|n| !levels.contains(n)) {
            return Err(ConfigError::invalid("vocabulary", format!("no vocabulary for neediness level {n}")));
        }
        let d = &self.decision;
        if let Some(u) = &d.u_none {
            if u.len() != self.grid.neediness.len() {
                return Err(ConfigError::invalid(
                    "decision.u_none",
                    format!("expected {} values (one per neediness level), got {}", self.grid.neediness.len(), u.len()),
                ));
            }
            if let Some(v) = u.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(ConfigError::invalid("decision.u_none", format!("{v} outside [0, 1]")));
            }
        }
        if !(d.observation_noise > 0.0 && d.observation_noise < 1.0) {
            return Err(ConfigError::invalid("decision.observation_noise", "must lie in (0, 1)"));
        }
        let p = &self.population;
        if p.families.is_empty() {
            return Err(ConfigError::invalid("population.families", "needs at least one family"));
        }
        if p.families.contains(&Family::Custom) {
            return Err(ConfigError::invalid("population.families", "custom utilities cannot be sampled"));
        }
        p.bias.validate().map_err(|e| ConfigError::invalid("population.bias", e))?;
        for (name, set) in [("attenuation_set", &p.bias.attenuation_set), ("inflation_set", &p.bias.inflation_set)] {
            if let Some(o) = set.iter().find(|o| !self.grid.contains(o)) {
                return Err(ConfigError::invalid(format!("population.bias.{name}"), format!("{o} is not on the grid")));
            }
        }
        p.response.validate().map_err(|e| ConfigError::invalid("population.response", e))?;
        let mut labels = BTreeSet::new();
        for (i, c) in self.condition.iter().enumerate() {
            let ok = !c.label.is_empty()
                && c.label.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_');
            if !ok {
                return Err(ConfigError::invalid(
                    format!("condition[{i}].label"),
                    "labels must be non-empty and use only letters, digits, '-' and '_'",
                ));
            }
            if !labels.insert(c.label.as_str()) {
                return Err(ConfigError::invalid(format!("condition[{i}].label"), format!("duplicate label {:?}", c.label)));
            }
            if c.respondents == 0 {
                return Err(ConfigError::invalid(format!("condition[{i}].respondents"), "must be positive"));
            }
        }
        Ok(())
    }
}

fn grid_field(e: &OutcomeError) -> &'static str {
    let text = e.to_string();
    ["neediness", "lengths", "qualities", "probability_step"]
        .into_iter()
        .find(|f| text.contains(f) || (*f == "probability_step" && text.contains("probability step")))
        .map(|f| match f {
            "neediness" => "grid.neediness",
            "lengths" => "grid.lengths",
            "qualities" => "grid.qualities",
            _ => "grid.probability_step",
        })
        .unwrap_or("grid")
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

/// Line on which the dotted `field` path (e.g. `condition[1].respondents`)
/// is set, falling back to the line of its enclosing table.
fn locate(text: &str, field: &str) -> Option<usize> {
    let header = |l: &str| l.trim().trim_start_matches('[').trim_end_matches(']').trim().to_string();
    if !field.contains('[') {
        if let Some(i) = text.lines().position(|l| l.trim().starts_with('[') && header(l) == field) {
            return Some(i + 1);
        }
    }
    let mut segments: Vec<(String, Option<usize>)> = field
        .split('.')
        .map(|seg| match seg.split_once('[') {
            Some((name, rest)) => (name.to_string(), rest.trim_end_matches(']').parse().ok()),
            None => (seg.to_string(), None),
        })
        .collect();
    let key = if segments.len() > 1 { segments.pop().map(|(k, _)| k) } else { None };
    let mut occurrence = 0usize;
    let mut best: Option<usize> = None;
    let mut inside = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[') {
            let array = header.starts_with('[');
            let table = header.trim_start_matches('[').trim_end_matches(']').trim();
            inside = false;
            let target: Vec<&str> = segments.iter().map(|(s, _)| s.as_str()).collect();
            if table == target.join(".") {
                let wanted = segments.last().and_then(|(_, idx)| *idx);
                if array {
                    occurrence += 1;
                    inside = wanted.is_none_or(|w| w + 1 == occurrence);
                } else {
                    inside = true;
                }
                if inside && best.is_none() {
                    best = Some(i + 1);
                }
            }
            continue;
        }
        if inside {
            if let Some(k) = &key {
                let lhs = line.split('=').next().unwrap_or("").trim();
                if line.contains('=') && lhs == k {
                    return Some(i + 1);
                }
            }
        }
    }
    if best.is_none() && key.is_some() {
        // Key set in a parent table, e.g. `vocabulary = [...]` or an
        // inline table.
        let first = &segments[0].0;
        return text
            .lines()
            .position(|l| l.trim().split('=').next().map(str::trim) == Some(first.as_str()))
            .map(|i| i + 1);
    }
    best
}
