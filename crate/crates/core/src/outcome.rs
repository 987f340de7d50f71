//! The discretized attribute grid over which utilities are elicited.
//!
//! An [`Outcome`] is one cell `(n, l, q)`: neediness level, toolbar length in
//! icons, and toolbar quality in saved actions. Query probabilities live on an
//! exact grid of integer ticks (see [`Prob`]) so bisection and termination
//! checks never compare floats.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OutcomeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("outcome {0} is not a member of the grid")]
    UnknownOutcome(Outcome),
    #[error("probability {value} is not on a grid with step 1/{steps}")]
    InvalidProbability { value: f64, steps: u32 },
    #[error("cannot parse {0:?}")]
    Parse(String),
}

/// One cell of the `(N, L, Q)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outcome {
    pub n: u32,
    pub l: u32,
    pub q: u32,
}

impl Outcome {
    pub const fn new(n: u32, l: u32, q: u32) -> Self {
        Self { n, l, q }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{},l{},q{}", self.n, self.l, self.q)
    }
}

impl FromStr for Outcome {
    type Err = OutcomeError;

    /// Parses `n0,l1,q4` (whitespace around commas is tolerated).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || OutcomeError::Parse(s.to_string());
        let mut parts = s.split(',').map(str::trim);
        let mut field = |prefix: char| -> Result<u32, OutcomeError> {
            let part = parts.next().ok_or_else(err)?;
            part.strip_prefix(prefix)
                .and_then(|v| v.parse().ok())
                .ok_or_else(err)
        };
        let n = field('n')?;
        let l = field('l')?;
        let q = field('q')?;
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(Outcome { n, l, q })
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A probability on a grid with step `1/steps`, stored as integer ticks.
///
/// Two probabilities are only ever combined when they share `steps`; that is
/// the case for everything produced within one study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Prob {
    ticks: u32,
    steps: u32,
}

impl Prob {
    pub fn new(ticks: u32, steps: u32) -> Self {
        assert!(steps > 0, "probability grid needs at least one step");
        assert!(ticks <= steps, "probability {ticks}/{steps} exceeds 1");
        Self { ticks, steps }
    }

    pub fn zero(steps: u32) -> Self {
        Self::new(0, steps)
    }

    pub fn one(steps: u32) -> Self {
        Self::new(steps, steps)
    }

    /// Snaps `value` onto the grid, failing when it is not (within 1e-9) a
    /// multiple of the step.
    pub fn from_f64(value: f64, steps: u32) -> Result<Self, OutcomeError> {
        let scaled = value * f64::from(steps);
        let ticks = scaled.round();
        if !(0.0..=f64::from(steps)).contains(&ticks) || (scaled - ticks).abs() > 1e-9 {
            return Err(OutcomeError::InvalidProbability { value, steps });
        }
        Ok(Self::new(ticks as u32, steps))
    }

    pub fn ticks(self) -> u32 {
        self.ticks
    }

    pub fn steps(self) -> u32 {
        self.steps
    }

    pub fn value(self) -> f64 {
        f64::from(self.ticks) / f64::from(self.steps)
    }

    /// Whether `p·k` is a whole number of tasks.
    pub fn count_of(self, k: u32) -> Option<u32> {
        let scaled = u64::from(self.ticks) * u64::from(k);
        (scaled % u64::from(self.steps) == 0).then(|| (scaled / u64::from(self.steps)) as u32)
    }
}

impl PartialOrd for Prob {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Prob {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let lhs = u64::from(self.ticks) * u64::from(other.steps);
        let rhs = u64::from(other.ticks) * u64::from(self.steps);
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&format_args!("{}/{}", self.ticks, self.steps))
    }
}

impl<'de> Deserialize<'de> for Prob {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let (ticks, steps) = s
            .split_once('/')
            .and_then(|(t, s)| Some((t.trim().parse::<u32>().ok()?, s.trim().parse::<u32>().ok()?)))
            .filter(|&(t, s)| s > 0 && t <= s)
            .ok_or_else(|| serde::de::Error::custom(format!("bad probability {s:?}")))?;
        Ok(Prob::new(ticks, steps))
    }
}

/// Discretization of the three attributes and of query probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributeGrid {
    pub neediness: Vec<u32>,
    pub lengths: Vec<u32>,
    pub qualities: Vec<u32>,
    pub probability_step: f64,
}

impl Default for AttributeGrid {
    fn default() -> Self {
        Self {
            neediness: vec![0, 1],
            lengths: vec![1, 5, 10],
            qualities: vec![0, 2, 4],
            probability_step: 0.1,
        }
    }
}

fn check_axis(name: &str, values: &[u32]) -> Result<(), OutcomeError> {
    if values.is_empty() {
        return Err(OutcomeError::InvalidGrid(format!("{name} is empty")));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(OutcomeError::InvalidGrid(format!(
            "{name} must be strictly increasing, got {values:?}"
        )));
    }
    Ok(())
}

impl AttributeGrid {
    pub fn validate(&self) -> Result<(), OutcomeError> {
        check_axis("neediness", &self.neediness)?;
        check_axis("lengths", &self.lengths)?;
        check_axis("qualities", &self.qualities)?;
        if self.lengths[0] == 0 {
            return Err(OutcomeError::InvalidGrid("toolbar lengths start at 1".into()));
        }
        self.probability_steps().map(|_| ())
    }

    /// Qualities cannot exceed the number of actions a task requires.
    pub fn validate_qualities(&self, max_complexity: u32) -> Result<(), OutcomeError> {
        match self.qualities.last() {
            Some(&q) if q > max_complexity => Err(OutcomeError::InvalidGrid(format!(
                "quality {q} exceeds task complexity {max_complexity}"
            ))),
            _ => Ok(()),
        }
    }

    /// Number of grid intervals between 0 and 1, i.e. `1 / probability_step`.
    pub fn probability_steps(&self) -> Result<u32, OutcomeError> {
        let step = self.probability_step;
        let bad = || {
            OutcomeError::InvalidGrid(format!("probability step {step} does not divide 1"))
        };
        if !(step > 0.0 && step <= 1.0) {
            return Err(bad());
        }
        let inverse = 1.0 / step;
        let steps = inverse.round();
        if (inverse - steps).abs() > 1e-9 * inverse.max(1.0) || steps > f64::from(u16::MAX) {
            return Err(bad());
        }
        Ok(steps as u32)
    }

    pub fn contains(&self, o: &Outcome) -> bool {
        self.neediness.contains(&o.n) && self.lengths.contains(&o.l) && self.qualities.contains(&o.q)
    }

    pub fn len(&self) -> usize {
        self.neediness.len() * self.lengths.len() * self.qualities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_quality(&self) -> u32 {
        self.qualities.last().copied().unwrap_or(0)
    }
}

/// Which anchor, if any, an outcome is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeClass {
    Best,
    Worst,
    Interior,
}

/// The grid together with its anchors `o⊤` (utility 1) and `o⊥` (utility 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct OutcomeSpace {
    grid: AttributeGrid,
    best: Outcome,
    worst: Outcome,
    #[serde(skip_serializing)]
    steps: u32,
}

#[derive(Deserialize)]
struct RawSpace {
    grid: AttributeGrid,
    best: Outcome,
    worst: Outcome,
}

impl TryFrom<RawSpace> for OutcomeSpace {
    type Error = OutcomeError;

    fn try_from(raw: RawSpace) -> Result<Self, Self::Error> {
        OutcomeSpace::new(raw.grid, raw.best, raw.worst)
    }
}

impl Default for OutcomeSpace {
    fn default() -> Self {
        Self::new(
            AttributeGrid::default(),
            Outcome::new(0, 1, 4),
            Outcome::new(1, 10, 0),
        )
        .expect("default outcome space is valid")
    }
}

impl OutcomeSpace {
    pub fn new(grid: AttributeGrid, best: Outcome, worst: Outcome) -> Result<Self, OutcomeError> {
        grid.validate()?;
        for anchor in [best, worst] {
            if !grid.contains(&anchor) {
                return Err(OutcomeError::UnknownOutcome(anchor));
            }
        }
        if best == worst {
            return Err(OutcomeError::InvalidGrid(format!(
                "best and worst anchors coincide at {best}"
            )));
        }
        let steps = grid.probability_steps()?;
        Ok(Self { grid, best, worst, steps })
    }

    pub fn grid(&self) -> &AttributeGrid {
        &self.grid
    }

    pub fn best(&self) -> Outcome {
        self.best
    }

    pub fn worst(&self) -> Outcome {
        self.worst
    }

    /// `1 / probability_step`.
    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// All grid cells in lexicographic `(n, l, q)` order.
    pub fn enumerate(&self) -> Vec<Outcome> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(g.len());
        for &n in &g.neediness {
            for &l in &g.lengths {
                for &q in &g.qualities {
                    out.push(Outcome { n, l, q });
                }
            }
        }
        out
    }

    /// Enumeration without the two anchors.
    pub fn interior(&self) -> Vec<Outcome> {
        self.enumerate()
            .into_iter()
            .filter(|o| *o != self.best && *o != self.worst)
            .collect()
    }

    /// `[0, step, 2·step, …, 1]`.
    pub fn probability_grid(&self) -> Vec<Prob> {
        (0..=self.steps).map(|t| Prob::new(t, self.steps)).collect()
    }

    pub fn prob(&self, value: f64) -> Result<Prob, OutcomeError> {
        Prob::from_f64(value, self.steps)
    }

    pub fn classify(&self, o: &Outcome) -> Result<OutcomeClass, OutcomeError> {
        if !self.grid.contains(o) {
            return Err(OutcomeError::UnknownOutcome(*o));
        }
        Ok(if *o == self.best {
            OutcomeClass::Best
        } else if *o == self.worst {
            OutcomeClass::Worst
        } else {
            OutcomeClass::Interior
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: Vec<u32>, l: Vec<u32>, q: Vec<u32>, step: f64) -> AttributeGrid {
        AttributeGrid { neediness: n, lengths: l, qualities: q, probability_step: step }
    }

    #[test]
    fn default_grid_has_eighteen_outcomes() {
        let space = OutcomeSpace::default();
        let all = space.enumerate();
        assert_eq!(all.len(), 18);
        assert_eq!(space.interior().len(), 16);
        assert_eq!(all.iter().filter(|o| **o == space.best()).count(), 1);
        assert_eq!(all.iter().filter(|o| **o == space.worst()).count(), 1);
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, all);
    }

    #[test]
    fn singleton_grid_enumerates_one() {
        let g = grid(vec![0], vec![1], vec![0], 0.1);
        let space = OutcomeSpace { steps: 10, best: Outcome::new(0, 1, 0), worst: Outcome::new(0, 1, 0), grid: g };
        assert_eq!(space.enumerate(), vec![Outcome::new(0, 1, 0)]);
    }

    #[test]
    fn two_three_three_grid() {
        let g = grid(vec![0, 1], vec![1, 5, 10], vec![0, 2, 4], 0.1);
        let space = OutcomeSpace::new(g, Outcome::new(0, 1, 4), Outcome::new(1, 10, 0)).unwrap();
        let all = space.enumerate();
        assert_eq!(all.len(), 2 * 3 * 3);
        assert_eq!(all[0], Outcome::new(0, 1, 0));
    }

    #[test]
    fn probability_grids() {
        let space = OutcomeSpace::default();
        let p = space.probability_grid();
        assert_eq!(p.len(), 11);
        assert_eq!(p[0].value(), 0.0);
        assert_eq!(p[10].value(), 1.0);
        assert!(p.iter().enumerate().all(|(i, v)| v.ticks() == i as u32));

        let half = grid(vec![0, 1], vec![1, 5, 10], vec![0, 2, 4], 0.5);
        let space = OutcomeSpace::new(half, Outcome::new(0, 1, 4), Outcome::new(1, 10, 0)).unwrap();
        let values: Vec<f64> = space.probability_grid().iter().map(|p| p.value()).collect();
        assert_eq!(values, vec![0.0, 0.5, 1.0]);

        let bad = grid(vec![0, 1], vec![1, 5, 10], vec![0, 2, 4], 0.3);
        assert!(matches!(
            OutcomeSpace::new(bad, Outcome::new(0, 1, 4), Outcome::new(1, 10, 0)),
            Err(OutcomeError::InvalidGrid(_))
        ));
    }

    #[test]
    fn classify_anchors() {
        let space = OutcomeSpace::default();
        assert_eq!(space.classify(&Outcome::new(0, 1, 4)).unwrap(), OutcomeClass::Best);
        assert_eq!(space.classify(&Outcome::new(1, 10, 0)).unwrap(), OutcomeClass::Worst);
        assert_eq!(space.classify(&Outcome::new(0, 10, 2)).unwrap(), OutcomeClass::Interior);
        assert!(matches!(
            space.classify(&Outcome::new(0, 3, 2)),
            Err(OutcomeError::UnknownOutcome(_))
        ));
    }

    #[test]
    fn invalid_grids_rejected() {
        let unsorted = grid(vec![1, 0], vec![1], vec![0], 0.1);
        assert!(unsorted.validate().is_err());
        let empty = grid(vec![0], vec![], vec![0], 0.1);
        assert!(empty.validate().is_err());
        let g = AttributeGrid::default();
        assert!(g.validate_qualities(4).is_ok());
        assert!(g.validate_qualities(3).is_err());
        assert!(OutcomeSpace::new(g, Outcome::new(0, 1, 4), Outcome::new(0, 1, 4)).is_err());
    }

    #[test]
    fn outcome_text_form() {
        let o: Outcome = "n1, l10, q4".parse().unwrap();
        assert_eq!(o, Outcome::new(1, 10, 4));
        assert_eq!(o.to_string(), "n1,l10,q4");
        assert!("n1,l10".parse::<Outcome>().is_err());
        assert!("x1,l10,q4".parse::<Outcome>().is_err());
    }

    #[test]
    fn prob_snapping_and_order() {
        assert_eq!(Prob::from_f64(0.8, 10).unwrap().ticks(), 8);
        assert!(Prob::from_f64(0.85, 10).is_err());
        assert!(Prob::from_f64(1.1, 10).is_err());
        assert!(Prob::new(1, 2) > Prob::new(4, 10));
        assert_eq!(Prob::new(5, 10).count_of(10), Some(5));
        assert_eq!(Prob::new(1, 3).count_of(10), None);
        let json = serde_json::to_string(&Prob::new(3, 10)).unwrap();
        assert_eq!(json, "\"3/10\"");
        assert_eq!(serde_json::from_str::<Prob>(&json).unwrap(), Prob::new(3, 10));
    }
}
