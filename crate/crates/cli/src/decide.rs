//! Batch evaluation of decision scenarios against an elicited utility.
//!
//! A scenario file is JSON:
//!
//! ```json
//! {
//!   "log": "sessions/conceptual-01.jsonl",
//!   "u_none": [0.35, 0.2],
//!   "scenarios": [
//!     {
//!       "name": "bold-italic",
//!       "neediness": 0,
//!       "goals": [{"target": {"bold": true, "italics": true}, "baseline": {}}],
//!       "events": [{"feature": "bold", "value": 1}],
//!       "candidates": [[{"bold": true, "italics": true}]]
//!     }
//!   ]
//! }
//! ```
//!
//! The utility is either the final midpoints of `log` (relative paths resolve
//! against the scenario file) or an explicit `utility` map over the grid of
//! the study config. `u_none` and `observation_noise` fall back to the
//! config, and `u_none` then to the elicited value of a single useless icon.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use elicit_core::bounds::UtilityFunction;
use elicit_core::config::StudyConfig;
use elicit_core::decision::{
    choose_action, default_no_suggestion_utility, update_belief, Decision, EventObservation, GoalLibrary,
};
use elicit_core::log::SessionLog;
use elicit_core::outcome::{AttributeGrid, Outcome};
use elicit_core::task::{FontStyle, HighlightGoal, Icon, Toolbar};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub log: Option<PathBuf>,
    #[serde(default)]
    pub utility: Option<BTreeMap<Outcome, f64>>,
    #[serde(default)]
    pub u_none: Option<Vec<f64>>,
    #[serde(default)]
    pub observation_noise: Option<f64>,
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub neediness: u32,
    pub goals: Vec<HighlightGoal>,
    /// Uniform when absent.
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    #[serde(default)]
    pub events: Vec<EventObservation>,
    /// Each candidate toolbar is a list of icon styles, in display order.
    pub candidates: Vec<Vec<FontStyle>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub name: String,
    pub posterior: Vec<f64>,
    #[serde(flatten)]
    pub decision: Decision,
}

fn bad(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Scenario { path: path.to_path_buf(), message: message.into() }
}

fn utility(file: &ScenarioFile, path: &Path, config: &StudyConfig) -> Result<UtilityFunction, CliError> {
    let (grid, values): (AttributeGrid, BTreeMap<Outcome, f64>) = match (&file.log, &file.utility) {
        (Some(log), None) => {
            let log_path = path.parent().unwrap_or(Path::new(".")).join(log);
            let log = SessionLog::read(&log_path).map_err(|e| bad(&log_path, e.to_string()))?;
            let (_, _, settings) = log.header().map_err(|e| bad(&log_path, e.to_string()))?;
            let grid = settings.space.grid().clone();
            let (_, midpoints) = log.final_record().ok_or_else(|| bad(&log_path, "session did not finish"))?;
            (grid, midpoints.clone())
        }
        (None, Some(values)) => (config.grid.clone(), values.clone()),
        _ => return Err(bad(path, "give exactly one of \"log\" and \"utility\"")),
    };
    UtilityFunction::new(grid, values).map_err(|e| bad(path, e.to_string()))
}

pub fn evaluate(path: &Path, config: &StudyConfig) -> Result<Vec<ScenarioResult>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| bad(path, e.to_string()))?;
    let u = utility(&file, path, config)?;
    let noise = file.observation_noise.unwrap_or(config.decision.observation_noise);
    let u_none_table = file.u_none.clone().or_else(|| config.decision.u_none.clone());
    let levels = &u.grid().neediness;
    if let Some(t) = &u_none_table {
        if t.len() != levels.len() {
            return Err(bad(path, format!("u_none needs {} values, one per neediness level", levels.len())));
        }
    }
    let mut out = Vec::with_capacity(file.scenarios.len());
    for s in &file.scenarios {
        let fail = |e: &dyn std::fmt::Display| bad(path, format!("scenario {:?}: {e}", s.name));
        let level = levels
            .iter()
            .position(|&n| n == s.neediness)
            .ok_or_else(|| fail(&format!("neediness {} is not on the grid", s.neediness)))?;
        let u_none = match &u_none_table {
            Some(t) => t[level],
            None => default_no_suggestion_utility(&u, s.neediness).map_err(|e| fail(&e))?,
        };
        let library = match &s.prior {
            Some(prior) => GoalLibrary::new(s.goals.clone(), prior.clone()),
            None => GoalLibrary::uniform(s.goals.clone()),
        }
        .map_err(|e| fail(&e))?;
        let mut belief = library.prior_belief();
        for event in &s.events {
            belief = update_belief(&library, &belief, event, noise).map_err(|e| fail(&e))?;
        }
        let candidates = s
            .candidates
            .iter()
            .map(|icons| Toolbar::new(icons.iter().map(|&style| Icon { style }).collect()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| fail(&e))?;
        let decision = choose_action(&candidates, &library, &belief, &u, s.neediness, u_none).map_err(|e| fail(&e))?;
        out.push(ScenarioResult { name: s.name.clone(), posterior: belief.posterior, decision });
    }
    Ok(out)
}
