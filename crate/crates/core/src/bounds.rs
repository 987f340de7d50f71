//! Feasible utility intervals per outcome, and how bound-query answers move
//! them.
//!
//! Utilities are normalized so `u(o⊤) = 1` and `u(o⊥) = 0`. A bound query at
//! `p` compares outcome `o` against the standard gamble `SG(p)`, whose
//! expected utility is `p`: preferring the gamble caps `u(o)` at `p`,
//! preferring the sure thing floors it at `p`, and indifference pins it.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::outcome::{AttributeGrid, Outcome, OutcomeClass, OutcomeError, OutcomeSpace, Prob};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("probability {0} is not on the study grid")]
    InvalidProbability(Prob),
    #[error("anchor {0} has a fixed utility")]
    AnchorImmutable(Outcome),
    #[error(transparent)]
    Outcome(#[from] OutcomeError),
    #[error("({n}, l{l}, q{q}) lies outside the elicited grid")]
    OutOfHull { n: u32, l: u32, q: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    PrefersGamble,
    PrefersSure,
    Indifferent,
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::PrefersGamble => "prefers_gamble",
            Answer::PrefersSure => "prefers_sure",
            Answer::Indifferent => "indifferent",
        })
    }
}

/// What to do when an answer contradicts the current interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictPolicy {
    /// Keep the new bound and reset the opposing one to its extreme.
    #[default]
    TrustNew,
    /// Drop the contradicting answer.
    IgnoreNew,
    /// Pin the interval at the queried probability.
    CollapseToP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityInterval {
    pub lo: Prob,
    pub hi: Prob,
}

impl UtilityInterval {
    pub fn new(lo: Prob, hi: Prob) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi }
    }

    pub fn full(steps: u32) -> Self {
        Self::new(Prob::zero(steps), Prob::one(steps))
    }

    pub fn point(p: Prob) -> Self {
        Self::new(p, p)
    }

    pub fn width(&self) -> f64 {
        self.hi.value() - self.lo.value()
    }

    /// Width in grid ticks.
    pub fn width_ticks(&self) -> u32 {
        self.hi.ticks() - self.lo.ticks()
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo.value() + self.hi.value()) / 2.0
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo.value() <= value && value <= self.hi.value()
    }
}

impl fmt::Display for UtilityInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// A logged contradiction and how it was resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictEvent {
    pub outcome: Outcome,
    pub p: Prob,
    pub answer: Answer,
    pub before: UtilityInterval,
    pub after: UtilityInterval,
    pub policy: ConflictPolicy,
}

/// Result of applying one answer.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundUpdate {
    pub before: UtilityInterval,
    pub after: UtilityInterval,
    pub conflict: Option<ConflictEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityState {
    space: OutcomeSpace,
    intervals: BTreeMap<Outcome, UtilityInterval>,
    conflict_policy: ConflictPolicy,
    conflicts: Vec<ConflictEvent>,
}

impl UtilityState {
    /// Anchors pinned at 1 and 0, every other outcome unconstrained.
    pub fn init(space: &OutcomeSpace, conflict_policy: ConflictPolicy) -> Self {
        let steps = space.steps();
        let intervals = space
            .enumerate()
            .into_iter()
            .map(|o| {
                let interval = if o == space.best() {
                    UtilityInterval::point(Prob::one(steps))
                } else if o == space.worst() {
                    UtilityInterval::point(Prob::zero(steps))
                } else {
                    UtilityInterval::full(steps)
                };
                (o, interval)
            })
            .collect();
        Self { space: space.clone(), intervals, conflict_policy, conflicts: Vec::new() }
    }

    pub fn space(&self) -> &OutcomeSpace {
        &self.space
    }

    pub fn conflict_policy(&self) -> ConflictPolicy {
        self.conflict_policy
    }

    pub fn conflicts(&self) -> &[ConflictEvent] {
        &self.conflicts
    }

    pub fn intervals(&self) -> &BTreeMap<Outcome, UtilityInterval> {
        &self.intervals
    }

    pub fn interval(&self, o: &Outcome) -> Result<UtilityInterval, BoundsError> {
        self.intervals
            .get(o)
            .copied()
            .ok_or(BoundsError::Outcome(OutcomeError::UnknownOutcome(*o)))
    }

    pub fn width(&self, o: &Outcome) -> Result<f64, BoundsError> {
        self.interval(o).map(|i| i.width())
    }

    /// True iff every interior interval is at most `threshold` wide.
    pub fn all_converged(&self, threshold: f64) -> bool {
        self.intervals
            .iter()
            .filter(|(o, _)| **o != self.space.best() && **o != self.space.worst())
            .all(|(_, i)| is_converged(i, threshold))
    }

    pub fn apply_response(&mut self, o: &Outcome, p: Prob, answer: Answer) -> Result<BoundUpdate, BoundsError> {
        if p.steps() != self.space.steps() {
            return Err(BoundsError::InvalidProbability(p));
        }
        match self.space.classify(o)? {
            OutcomeClass::Interior => {}
            _ => return Err(BoundsError::AnchorImmutable(*o)),
        }
        let before = self.intervals[o];
        let steps = self.space.steps();
        let (lo, hi) = match answer {
            Answer::PrefersGamble => (before.lo, before.hi.min(p)),
            Answer::PrefersSure => (before.lo.max(p), before.hi),
            Answer::Indifferent => (p, p),
        };
        let contradicts = match answer {
            Answer::Indifferent => p < before.lo || p > before.hi,
            _ => lo > hi,
        };
        let after = if !contradicts {
            UtilityInterval::new(lo, hi)
        } else {
            match self.conflict_policy {
                ConflictPolicy::TrustNew => match answer {
                    Answer::PrefersGamble => UtilityInterval::new(Prob::zero(steps), p),
                    Answer::PrefersSure => UtilityInterval::new(p, Prob::one(steps)),
                    Answer::Indifferent => UtilityInterval::point(p),
                },
                ConflictPolicy::IgnoreNew => before,
                ConflictPolicy::CollapseToP => UtilityInterval::point(p),
            }
        };
        let conflict = contradicts.then(|| ConflictEvent {
            outcome: *o,
            p,
            answer,
            before,
            after,
            policy: self.conflict_policy,
        });
        if let Some(event) = &conflict {
            self.conflicts.push(event.clone());
        }
        self.intervals.insert(*o, after);
        Ok(BoundUpdate { before, after, conflict })
    }

    /// Point estimate at the center of every interval.
    pub fn midpoint_utility(&self) -> UtilityFunction {
        let values = self
            .intervals
            .iter()
            .map(|(o, i)| {
                let v = if *o == self.space.best() {
                    1.0
                } else if *o == self.space.worst() {
                    0.0
                } else {
                    i.midpoint()
                };
                (*o, v)
            })
            .collect();
        UtilityFunction { grid: self.space.grid().clone(), values }
    }
}

/// Width test shared by the state and the scheduler; a half-tick slack
/// keeps `0.1` thresholds exact on a tenths grid.
pub(crate) fn is_converged(interval: &UtilityInterval, threshold: f64) -> bool {
    let steps = f64::from(interval.lo.steps());
    f64::from(interval.width_ticks()) <= threshold * steps + 1e-9
}

/// A point-valued utility over the grid, `U(N, L, Q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityFunction {
    grid: AttributeGrid,
    values: BTreeMap<Outcome, f64>,
}

impl UtilityFunction {
    pub fn new(grid: AttributeGrid, values: BTreeMap<Outcome, f64>) -> Result<Self, BoundsError> {
        for &n in &grid.neediness {
            for &l in &grid.lengths {
                for &q in &grid.qualities {
                    let o = Outcome::new(n, l, q);
                    if !values.contains_key(&o) {
                        return Err(BoundsError::Outcome(OutcomeError::UnknownOutcome(o)));
                    }
                }
            }
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &AttributeGrid {
        &self.grid
    }

    pub fn values(&self) -> &BTreeMap<Outcome, f64> {
        &self.values
    }

    pub fn value(&self, o: &Outcome) -> Option<f64> {
        self.values.get(o).copied()
    }

    /// Same function under `a·u + b`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|(o, v)| (*o, a * v + b)).collect(),
        }
    }

    /// Piecewise-linear in `q` between adjacent grid qualities, then in `l`
    /// between adjacent grid lengths. Exact at grid nodes.
    pub fn interpolate(&self, n: u32, l: u32, q: u32) -> Result<f64, BoundsError> {
        let out = || BoundsError::OutOfHull { n, l, q };
        if !self.grid.neediness.contains(&n) {
            return Err(out());
        }
        let (l0, l1, wl) = bracket(&self.grid.lengths, l).ok_or_else(out)?;
        let (q0, q1, wq) = bracket(&self.grid.qualities, q).ok_or_else(out)?;
        let at = |l: u32, q: u32| self.values[&Outcome::new(n, l, q)];
        let along_q = |l: u32| at(l, q0) * (1.0 - wq) + at(l, q1) * wq;
        Ok(along_q(l0) * (1.0 - wl) + along_q(l1) * wl)
    }
}

/// Adjacent nodes around `x` and the weight of the upper one.
fn bracket(nodes: &[u32], x: u32) -> Option<(u32, u32, f64)> {
    if let Some(&exact) = nodes.iter().find(|&&v| v == x) {
        return Some((exact, exact, 0.0));
    }
    let upper = nodes.iter().position(|&v| v > x)?;
    if upper == 0 {
        return None;
    }
    let (a, b) = (nodes[upper - 1], nodes[upper]);
    Some((a, b, f64::from(x - a) / f64::from(b - a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tenth(t: u32) -> Prob {
        Prob::new(t, 10)
    }

    #[test]
    fn init_pins_anchors() {
        let space = OutcomeSpace::default();
        let state = UtilityState::init(&space, ConflictPolicy::TrustNew);
        let free: Vec<_> = state
            .intervals()
            .iter()
            .filter(|(_, i)| i.width_ticks() == 10)
            .collect();
        assert_eq!(free.len(), 16);
        assert_eq!(state.interval(&space.best()).unwrap(), UtilityInterval::point(tenth(10)));
        assert_eq!(state.interval(&space.worst()).unwrap(), UtilityInterval::point(tenth(0)));
        assert!(space.interior().iter().all(|o| state.width(o).unwrap() == 1.0));
        assert!(!state.all_converged(0.1));
    }

    #[test]
    fn singleton_plus_anchors() {
        let grid = AttributeGrid { neediness: vec![0], lengths: vec![1], qualities: vec![0, 2, 4], probability_step: 0.1 };
        let space = OutcomeSpace::new(grid, Outcome::new(0, 1, 4), Outcome::new(0, 1, 0)).unwrap();
        let state = UtilityState::init(&space, ConflictPolicy::TrustNew);
        assert_eq!(space.interior(), vec![Outcome::new(0, 1, 2)]);
        assert_eq!(state.width(&Outcome::new(0, 1, 2)).unwrap(), 1.0);
    }

    #[test]
    fn response_rules() {
        let space = OutcomeSpace::default();
        let mut state = UtilityState::init(&space, ConflictPolicy::TrustNew);
        let o = Outcome::new(0, 5, 2);
        let up = state.apply_response(&o, tenth(5), Answer::PrefersGamble).unwrap();
        assert_eq!(up.after, UtilityInterval::new(tenth(0), tenth(5)));
        assert!(up.conflict.is_none());
        state.apply_response(&o, tenth(2), Answer::PrefersSure).unwrap();
        assert_eq!(state.interval(&o).unwrap(), UtilityInterval::new(tenth(2), tenth(5)));

        let tight = Outcome::new(0, 10, 4);
        state.apply_response(&tight, tenth(8), Answer::Indifferent).unwrap();
        assert_eq!(state.interval(&tight).unwrap(), UtilityInterval::point(tenth(8)));
    }

    #[test]
    fn conflict_policies() {
        let space = OutcomeSpace::default();
        let o = Outcome::new(0, 5, 2);
        let prepared = |policy| {
            let mut s = UtilityState::init(&space, policy);
            s.apply_response(&o, tenth(4), Answer::PrefersSure).unwrap();
            s.apply_response(&o, tenth(6), Answer::PrefersGamble).unwrap();
            s
        };

        let mut trust = prepared(ConflictPolicy::TrustNew);
        let up = trust.apply_response(&o, tenth(3), Answer::PrefersGamble).unwrap();
        assert_eq!(up.after, UtilityInterval::new(tenth(0), tenth(3)));
        assert_eq!(trust.conflicts().len(), 1);

        let mut ignore = prepared(ConflictPolicy::IgnoreNew);
        let up = ignore.apply_response(&o, tenth(3), Answer::PrefersGamble).unwrap();
        assert_eq!(up.after, UtilityInterval::new(tenth(4), tenth(6)));
        assert!(up.conflict.is_some());

        let mut collapse = prepared(ConflictPolicy::CollapseToP);
        let up = collapse.apply_response(&o, tenth(8), Answer::PrefersSure).unwrap();
        assert_eq!(up.after, UtilityInterval::point(tenth(8)));
        let up = collapse.apply_response(&o, tenth(3), Answer::Indifferent).unwrap();
        assert!(up.conflict.is_some());
        assert_eq!(up.after, UtilityInterval::point(tenth(3)));
    }

    #[test]
    fn response_errors() {
        let space = OutcomeSpace::default();
        let mut state = UtilityState::init(&space, ConflictPolicy::TrustNew);
        assert_eq!(
            state.apply_response(&space.best(), tenth(5), Answer::PrefersGamble),
            Err(BoundsError::AnchorImmutable(space.best()))
        );
        assert!(matches!(
            state.apply_response(&Outcome::new(0, 5, 2), Prob::new(1, 4), Answer::PrefersGamble),
            Err(BoundsError::InvalidProbability(_))
        ));
    }

    #[test]
    fn widths_and_midpoints() {
        let space = OutcomeSpace::default();
        let mut state = UtilityState::init(&space, ConflictPolicy::TrustNew);
        let o = Outcome::new(0, 10, 0);
        state.apply_response(&o, tenth(1), Answer::PrefersGamble).unwrap();
        assert_relative_eq!(state.width(&o).unwrap(), 0.1);
        let mid = state.midpoint_utility();
        assert_relative_eq!(mid.value(&o).unwrap(), 0.05);
        assert_eq!(mid.value(&space.best()), Some(1.0));
        assert_eq!(mid.value(&space.worst()), Some(0.0));

        for outcome in space.interior() {
            state.apply_response(&outcome, tenth(8), Answer::Indifferent).unwrap();
        }
        assert!(state.all_converged(0.0));
        assert_eq!(state.midpoint_utility().value(&Outcome::new(0, 10, 4)), Some(0.8));
    }

    fn sample_function() -> UtilityFunction {
        let space = OutcomeSpace::default();
        let mut values = BTreeMap::new();
        for o in space.enumerate() {
            values.insert(o, 0.0);
        }
        values.insert(Outcome::new(0, 1, 2), 0.4);
        values.insert(Outcome::new(0, 1, 4), 1.0);
        values.insert(Outcome::new(0, 5, 4), 0.6);
        values.insert(Outcome::new(0, 10, 4), 0.3);
        values.insert(Outcome::new(0, 5, 2), 0.25);
        UtilityFunction::new(space.grid().clone(), values).unwrap()
    }

    #[test]
    fn interpolation() {
        let u = sample_function();
        assert_eq!(u.interpolate(0, 5, 2).unwrap(), 0.25);
        assert_relative_eq!(u.interpolate(0, 1, 3).unwrap(), 0.7);
        assert_relative_eq!(u.interpolate(0, 7, 4).unwrap(), 0.6 * 0.6 + 0.3 * 0.4);
        assert!(matches!(u.interpolate(0, 11, 4), Err(BoundsError::OutOfHull { .. })));
        assert!(matches!(u.interpolate(0, 0, 4), Err(BoundsError::OutOfHull { .. })));
        assert!(matches!(u.interpolate(0, 5, 5), Err(BoundsError::OutOfHull { .. })));
        assert!(matches!(u.interpolate(2, 5, 4), Err(BoundsError::OutOfHull { .. })));
    }
}
