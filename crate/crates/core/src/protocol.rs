//! Elicitation protocols and the respondents that answer them.
//!
//! A protocol decides two things: whether the session opens with a block of
//! familiarization tasks, and which query ordinals are delivered
//! experientially. Everything else (query choice, bound updates) is shared.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::Answer;
use crate::outcome::{Outcome, OutcomeSpace};
use crate::query::{BoundQuery, Delivery, DeliveryPayload};
use crate::respondent::{self, BiasModel, GroundTruthUtility, ResponseModel};
use crate::rng;
use crate::task::{quality_icon, TaskCompletion, TaskSpec};

pub const DEFAULT_PRIMED_PLUS_PREFIX: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Conceptual,
    Experiential,
    Primed,
    PrimedPlus,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] =
        [ProtocolKind::Conceptual, ProtocolKind::Experiential, ProtocolKind::Primed, ProtocolKind::PrimedPlus];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Conceptual => "conceptual",
            ProtocolKind::Experiential => "experiential",
            ProtocolKind::Primed => "primed",
            ProtocolKind::PrimedPlus => "primed_plus",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s || k.as_str().replace('_', "-") == s)
            .ok_or_else(|| format!("unknown protocol {s:?} (expected conceptual, experiential, primed or primed_plus)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub training: bool,
    /// How many leading queries are experiential; `None` means all of them.
    pub experiential_prefix: Option<u32>,
}

impl Protocol {
    pub fn new(kind: ProtocolKind, primed_plus_prefix: u32) -> Self {
        let (training, experiential_prefix) = match kind {
            ProtocolKind::Conceptual => (false, Some(0)),
            ProtocolKind::Experiential => (false, None),
            ProtocolKind::Primed => (true, Some(0)),
            ProtocolKind::PrimedPlus => (true, Some(primed_plus_prefix)),
        };
        Self { kind, training, experiential_prefix }
    }

    /// Delivery of the query with 1-based `ordinal`.
    pub fn delivery_for(&self, ordinal: u32) -> Delivery {
        match self.experiential_prefix {
            None => Delivery::Experiential,
            Some(prefix) if ordinal <= prefix => Delivery::Experiential,
            Some(_) => Delivery::Conceptual,
        }
    }
}

impl From<ProtocolKind> for Protocol {
    fn from(kind: ProtocolKind) -> Self {
        Protocol::new(kind, DEFAULT_PRIMED_PLUS_PREFIX)
    }
}

/// Outcomes shown in the familiarization block: every corner of the
/// length/quality square at the lowest neediness, then the best and worst
/// corner at the highest.
pub fn training_outcomes(space: &OutcomeSpace) -> Vec<Outcome> {
    let g = space.grid();
    let (n_lo, n_hi) = (g.neediness[0], *g.neediness.last().expect("non-empty grid"));
    let (l_lo, l_hi) = (g.lengths[0], *g.lengths.last().expect("non-empty grid"));
    let (q_lo, q_hi) = (g.qualities[0], *g.qualities.last().expect("non-empty grid"));
    let mut out = vec![
        Outcome::new(n_lo, l_lo, q_lo),
        Outcome::new(n_lo, l_lo, q_hi),
        Outcome::new(n_lo, l_hi, q_lo),
        Outcome::new(n_lo, l_hi, q_hi),
    ];
    if n_hi != n_lo {
        out.push(Outcome::new(n_hi, l_lo, q_hi));
        out.push(Outcome::new(n_hi, l_hi, q_lo));
    }
    out
}

/// The respondent walked away; the session can be resumed later.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Abandoned;

/// Anything that can work through a session: a simulated user, a scripted
/// client, or a bridge to a person.
pub trait Respondent {
    fn complete_task(&mut self, task: &TaskSpec) -> Result<TaskCompletion, Abandoned>;
    fn answer(&mut self, query: &BoundQuery, payload: &DeliveryPayload) -> Result<Answer, Abandoned>;
}

/// Efficient simulated user: accepts the most helpful icon (when it helps at
/// all), fixes the rest by hand, and answers queries from a ground-truth
/// utility seen through the bias and response models.
#[derive(Debug, Clone)]
pub struct SimulatedRespondent {
    pub truth: GroundTruthUtility,
    pub bias: BiasModel,
    pub model: ResponseModel,
    pub seed: u64,
    /// Number of experiential queries answered so far.
    pub experience_count: u32,
    /// Walk away after this many answers (for suspension tests).
    pub abandon_after: Option<u32>,
    answered: u32,
}

impl SimulatedRespondent {
    pub fn new(truth: GroundTruthUtility, bias: BiasModel, model: ResponseModel, seed: u64) -> Self {
        Self { truth, bias, model, seed, experience_count: 0, abandon_after: None, answered: 0 }
    }

    pub fn answered(&self) -> u32 {
        self.answered
    }
}

impl Respondent for SimulatedRespondent {
    fn complete_task(&mut self, task: &TaskSpec) -> Result<TaskCompletion, Abandoned> {
        let best = task.toolbar.as_ref().and_then(|t| {
            t.icons()
                .iter()
                .enumerate()
                .map(|(i, icon)| (quality_icon(icon, &task.goal), i))
                .filter(|&(q, _)| q > 0)
                .max_by_key(|&(q, i)| (q, std::cmp::Reverse(i)))
                .map(|(_, i)| i)
        });
        let icon = best.and_then(|i| task.toolbar.as_ref().map(|t| t.icons()[i]));
        Ok(TaskCompletion {
            accepted_icon: best,
            manual_events: crate::task::simulate_manual_completion(&task.goal, icon.as_ref()),
            final_style: task.goal.target,
        })
    }

    fn answer(&mut self, query: &BoundQuery, payload: &DeliveryPayload) -> Result<Answer, Abandoned> {
        if self.abandon_after.is_some_and(|limit| self.answered >= limit) {
            return Err(Abandoned);
        }
        let a = respondent::answer(
            query,
            payload,
            &self.truth,
            &self.bias,
            &self.model,
            self.experience_count,
            rng::derive(self.seed, u64::from(query.ordinal)),
        );
        if payload.delivery() == Delivery::Experiential {
            self.experience_count += 1;
        }
        self.answered += 1;
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delivery_schedules() {
        let plus = Protocol::from(ProtocolKind::PrimedPlus);
        assert!(plus.training);
        let d: Vec<_> = (1..=7).map(|i| plus.delivery_for(i)).collect();
        assert_eq!(&d[..5], &[Delivery::Experiential; 5]);
        assert_eq!(&d[5..], &[Delivery::Conceptual; 2]);
        let primed = Protocol::from(ProtocolKind::Primed);
        assert!(primed.training);
        assert!((1..100).all(|i| primed.delivery_for(i) == Delivery::Conceptual));
        let exp = Protocol::from(ProtocolKind::Experiential);
        assert!(!exp.training);
        assert!((1..100).all(|i| exp.delivery_for(i) == Delivery::Experiential));
        assert!(!Protocol::from(ProtocolKind::Conceptual).training);
    }

    #[test]
    fn protocol_names_round_trip() {
        for k in ProtocolKind::ALL {
            assert_eq!(k.as_str().parse::<ProtocolKind>().unwrap(), k);
        }
        assert_eq!("primed-plus".parse::<ProtocolKind>().unwrap(), ProtocolKind::PrimedPlus);
        assert!("bogus".parse::<ProtocolKind>().is_err());
    }

    #[test]
    fn training_block_spans_the_anchors() {
        let space = OutcomeSpace::default();
        let t = training_outcomes(&space);
        assert_eq!(t.len(), 6);
        assert!(t.contains(&space.best()));
        assert!(t.contains(&space.worst()));
    }
}
