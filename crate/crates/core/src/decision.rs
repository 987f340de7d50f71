//! Consumer of elicited utilities: a belief over highlighting goals and a
//! one-step expected-utility choice among candidate toolbars.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundsError, UtilityFunction};
use crate::task::{quality_toolbar, Feature, HighlightGoal, TaskError, Toolbar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecisionError {
    #[error("invalid goal library: {0}")]
    InvalidLibrary(String),
    #[error("observation noise must lie in (0, 1), got {0}")]
    InvalidNoise(f64),
    #[error("every goal has zero likelihood")]
    DegenerateBelief,
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalLibrary {
    goals: Vec<HighlightGoal>,
    prior: Vec<f64>,
}

impl GoalLibrary {
    pub fn new(goals: Vec<HighlightGoal>, prior: Vec<f64>) -> Result<Self, DecisionError> {
        if goals.is_empty() {
            return Err(DecisionError::InvalidLibrary("no goals".into()));
        }
        if prior.len() != goals.len() {
            return Err(DecisionError::InvalidLibrary(format!(
                "{} goals but {} prior weights",
                goals.len(),
                prior.len()
            )));
        }
        if prior.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(DecisionError::InvalidLibrary("prior weights must be nonnegative".into()));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DecisionError::InvalidLibrary(format!("prior sums to {total}")));
        }
        Ok(Self { goals, prior })
    }

    pub fn uniform(goals: Vec<HighlightGoal>) -> Result<Self, DecisionError> {
        let w = 1.0 / goals.len().max(1) as f64;
        let prior = vec![w; goals.len()];
        Self::new(goals, prior)
    }

    pub fn goals(&self) -> &[HighlightGoal] {
        &self.goals
    }

    pub fn prior_belief(&self) -> GoalBelief {
        GoalBelief { posterior: self.prior.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalBelief {
    pub posterior: Vec<f64>,
}

/// One observed formatting event, e.g. `bold = 1` or `color = 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventObservation {
    pub feature: Feature,
    pub value: u8,
}

/// Bayes update with a symmetric noise model: an event consistent with a
/// goal's target has likelihood `1 − ε`, otherwise `ε`.
pub fn update_belief(
    library: &GoalLibrary,
    belief: &GoalBelief,
    event: &EventObservation,
    noise: f64,
) -> Result<GoalBelief, DecisionError> {
    if !(noise > 0.0 && noise < 1.0) {
        return Err(DecisionError::InvalidNoise(noise));
    }
    let mut posterior: Vec<f64> = library
        .goals
        .iter()
        .zip(&belief.posterior)
        .map(|(g, &b)| {
            let likelihood = if g.target.get(event.feature) == event.value { 1.0 - noise } else { noise };
            b * likelihood
        })
        .collect();
    let total: f64 = posterior.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(DecisionError::DegenerateBelief);
    }
    posterior.iter_mut().for_each(|p| *p /= total);
    Ok(GoalBelief { posterior })
}

/// `u_none(n)` when none is configured: the elicited value of a single
/// useless icon, `u(n, l_min, q_min)`.
pub fn default_no_suggestion_utility(u: &UtilityFunction, neediness: u32) -> Result<f64, DecisionError> {
    let g = u.grid();
    Ok(u.interpolate(neediness, g.lengths[0], g.qualities[0])?)
}

/// Expected utility of showing `toolbar` (or nothing) under the belief.
pub fn expected_utility(
    toolbar: Option<&Toolbar>,
    library: &GoalLibrary,
    belief: &GoalBelief,
    u: &UtilityFunction,
    neediness: u32,
    u_none: f64,
) -> Result<f64, DecisionError> {
    let Some(toolbar) = toolbar else {
        return Ok(u_none);
    };
    let length = toolbar.length();
    library
        .goals
        .iter()
        .zip(&belief.posterior)
        .try_fold(0.0, |acc, (g, &b)| {
            let q = quality_toolbar(toolbar, g)?;
            Ok(acc + b * u.interpolate(neediness, length, q)?)
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action", content = "candidate")]
pub enum Action {
    NoSuggestion,
    Suggest(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub expected_utility: f64,
    pub no_suggestion_utility: f64,
    pub candidate_utilities: Vec<f64>,
}

fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Argmax of expected utility over the candidates and doing nothing.
/// Near-equal values (relative 1e-12) tie; ties go to no suggestion, then to
/// the shorter toolbar, then to the lexicographically smaller one.
pub fn choose_action(
    candidates: &[Toolbar],
    library: &GoalLibrary,
    belief: &GoalBelief,
    u: &UtilityFunction,
    neediness: u32,
    u_none: f64,
) -> Result<Decision, DecisionError> {
    let values = candidates
        .iter()
        .map(|t| expected_utility(Some(t), library, belief, u, neediness, u_none))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best: Option<usize> = None;
    let mut best_value = u_none;
    for (i, &v) in values.iter().enumerate() {
        let better = if ties(v, best_value) {
            match best {
                None => false,
                Some(j) => {
                    let (a, b) = (&candidates[i], &candidates[j]);
                    match a.length().cmp(&b.length()) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => a < b,
                    }
                }
            }
        } else {
            v > best_value
        };
        if better {
            best = Some(i);
            best_value = v;
        }
    }
    Ok(Decision {
        action: best.map_or(Action::NoSuggestion, Action::Suggest),
        expected_utility: best_value,
        no_suggestion_utility: u_none,
        candidate_utilities: values,
    })
}
