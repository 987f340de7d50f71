//! Bound-query selection by midpoint bisection, and the two ways a query is
//! delivered: a conceptual description, or an experiential plan of `2k`
//! real tasks.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{is_converged, UtilityState};
use crate::outcome::{Outcome, OutcomeSpace, Prob};
use crate::rng;
use crate::task::{TaskError, TaskFactory, TaskSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("bisection stalled on {outcome}: midpoint {p} hits an endpoint of {lo}..{hi}")]
    ScheduleStall { outcome: Outcome, p: Prob, lo: Prob, hi: Prob },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Task(#[from] TaskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    Conceptual,
    Experiential,
}

/// `B(o, p)`: would the respondent rather have `SG(p)` than `o`?
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub outcome: Outcome,
    pub p: Prob,
    pub delivery: Delivery,
    /// 1-based position in the session.
    pub ordinal: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulingMode {
    /// Drive each outcome to convergence before moving on.
    #[default]
    Sequential,
    /// Cycle through unconverged outcomes one query at a time.
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextQuery {
    Ask { outcome: Outcome, p: Prob },
    Done,
}

/// Seeded order in which interior outcomes are elicited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    mode: SchedulingMode,
    order: Vec<Outcome>,
    cursor: usize,
}

impl Schedule {
    pub fn new(space: &OutcomeSpace, mode: SchedulingMode, seed: u64) -> Self {
        let mut order = space.interior();
        order.shuffle(&mut rng::from_seed(seed));
        Self { mode, order, cursor: 0 }
    }

    /// Fixed order, mainly for tests.
    pub fn with_order(mode: SchedulingMode, order: Vec<Outcome>) -> Self {
        Self { mode, order, cursor: 0 }
    }

    pub fn order(&self) -> &[Outcome] {
        &self.order
    }

    pub fn mode(&self) -> SchedulingMode {
        self.mode
    }

    fn pick(&mut self, state: &UtilityState, threshold: f64) -> Option<Outcome> {
        let open = |o: &Outcome| {
            state
                .interval(o)
                .map(|i| !is_converged(&i, threshold))
                .unwrap_or(false)
        };
        match self.mode {
            SchedulingMode::Sequential => self.order.iter().copied().find(open),
            SchedulingMode::RoundRobin => {
                let len = self.order.len();
                let found = (0..len)
                    .map(|step| (self.cursor + step) % len)
                    .find(|&i| open(&self.order[i]))?;
                self.cursor = (found + 1) % len;
                Some(self.order[found])
            }
        }
    }

    /// Next outcome and probability, or `Done` once every scheduled outcome
    /// is within `threshold`. The probability is the interval midpoint
    /// rounded half-up to the grid.
    pub fn next_query(&mut self, state: &UtilityState, threshold: f64) -> Result<NextQuery, QueryError> {
        let Some(outcome) = self.pick(state, threshold) else {
            return Ok(NextQuery::Done);
        };
        let interval = state.interval(&outcome).expect("scheduled outcome belongs to the state");
        let (lo, hi) = (interval.lo, interval.hi);
        let p = Prob::new((lo.ticks() + hi.ticks()).div_ceil(2), lo.steps());
        if p <= lo || p >= hi {
            return Err(QueryError::ScheduleStall { outcome, p, lo, hi });
        }
        Ok(NextQuery::Ask { outcome, p })
    }
}

/// Free-function form of [`Schedule::next_query`].
pub fn next_query(state: &UtilityState, schedule: &mut Schedule, threshold: f64) -> Result<NextQuery, QueryError> {
    schedule.next_query(state, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmOrder {
    GambleFirst,
    SureFirst,
}

impl ArmOrder {
    /// Alternates by ordinal parity so neither arm is systematically first.
    pub fn for_ordinal(ordinal: u32) -> Self {
        if ordinal % 2 == 1 {
            ArmOrder::GambleFirst
        } else {
            ArmOrder::SureFirst
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Gamble,
    Sure,
}

/// The two task blocks that embody `SG(p)` and `o` for an experiential query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperientialPlan {
    pub k: u32,
    pub arm_order: ArmOrder,
    /// Position `i` of the gamble arm shows `o⊤` iff `gamble_layout[i]`.
    pub gamble_layout: Vec<bool>,
    pub gamble_arm: Vec<TaskSpec>,
    pub sure_arm: Vec<TaskSpec>,
}

impl ExperientialPlan {
    pub fn best_count(&self) -> u32 {
        self.gamble_layout.iter().filter(|&&b| b).count() as u32
    }

    /// Share of gamble-arm tasks that showed the best interface.
    pub fn realized_fraction(&self) -> f64 {
        f64::from(self.best_count()) / f64::from(self.k)
    }

    pub fn arms(&self) -> [Arm; 2] {
        match self.arm_order {
            ArmOrder::GambleFirst => [Arm::Gamble, Arm::Sure],
            ArmOrder::SureFirst => [Arm::Sure, Arm::Gamble],
        }
    }

    pub fn arm(&self, arm: Arm) -> &[TaskSpec] {
        match arm {
            Arm::Gamble => &self.gamble_arm,
            Arm::Sure => &self.sure_arm,
        }
    }

    /// The `index`-th task in presentation order (arm by arm).
    pub fn task_at(&self, index: usize) -> Option<(Arm, usize, &TaskSpec)> {
        let k = self.k as usize;
        let arm = *self.arms().get(index / k.max(1))?;
        let pos = index % k.max(1);
        self.arm(arm).get(pos).map(|t| (arm, pos, t))
    }
}

/// Which positions of a `k`-task gamble arm show `o⊤`: exactly `best`
/// of them, in seeded uniform random order.
pub fn gamble_layout(best: u32, k: u32, seed: u64) -> Vec<bool> {
    let mut layout: Vec<bool> = (0..k).map(|i| i < best).collect();
    layout.shuffle(&mut rng::from_seed(seed));
    layout
}

pub fn build_experiential_plan(
    query: &BoundQuery,
    k: u32,
    space: &OutcomeSpace,
    factory: &TaskFactory,
    seed: u64,
) -> Result<ExperientialPlan, QueryError> {
    if k == 0 {
        return Err(QueryError::InvalidPlan("k must be positive".into()));
    }
    let best = query.p.count_of(k).ok_or_else(|| {
        QueryError::InvalidPlan(format!("p = {} does not split {k} tasks evenly", query.p))
    })?;
    let layout = gamble_layout(best, k, rng::derive(seed, 0));
    let gamble_arm = layout
        .iter()
        .enumerate()
        .map(|(i, &top)| {
            let o = if top { space.best() } else { space.worst() };
            factory.task(&o, rng::derive(seed, 1 + i as u64))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sure_arm = (0..k)
        .map(|i| factory.task(&query.outcome, rng::derive(seed, 1 + u64::from(k) + u64::from(i))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperientialPlan {
        k,
        arm_order: ArmOrder::for_ordinal(query.ordinal),
        gamble_layout: layout,
        gamble_arm,
        sure_arm,
    })
}

/// What the respondent actually sees for a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "delivery", rename_all = "snake_case")]
pub enum DeliveryPayload {
    Conceptual(ConceptualPresentation),
    Experiential(ExperientialPlan),
}

impl DeliveryPayload {
    pub fn delivery(&self) -> Delivery {
        match self {
            DeliveryPayload::Conceptual(_) => Delivery::Conceptual,
            DeliveryPayload::Experiential(_) => Delivery::Experiential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreviewRole {
    Best,
    Worst,
    Offered,
}

/// A static stand-in for a screenshot of one outcome's interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomePreview {
    pub role: PreviewRole,
    pub outcome: Outcome,
    pub icon_count: u32,
    pub quality: u32,
    pub description: String,
    pub example: TaskSpec,
}

/// Text and previews for a conceptual bound query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptualPresentation {
    pub ordinal: u32,
    pub outcome: Outcome,
    pub p: Prob,
    pub headline: String,
    pub gamble_description: String,
    pub sure_description: String,
    pub previews: Vec<OutcomePreview>,
}

fn help_phrase(q: u32, complexity: u32) -> String {
    if q == 0 {
        "no useful help".to_string()
    } else if q >= complexity {
        "perfect help".to_string()
    } else {
        "partial help".to_string()
    }
}

fn icons_phrase(l: u32) -> String {
    if l == 1 {
        "1 icon".to_string()
    } else {
        format!("{l} icons")
    }
}

/// Short form used in the headline comparison, e.g. `5 icons, partial help`.
pub fn short_description(o: &Outcome, complexity: u32) -> String {
    format!("{}, {}", icons_phrase(o.l), help_phrase(o.q, complexity))
}

pub fn describe_outcome(o: &Outcome, space: &OutcomeSpace, complexity: u32) -> String {
    let needy = space.grid().neediness.first().is_some_and(|&n0| o.n != n0);
    let environment = if needy {
        "a needy task with a restricted set of similar colors and fonts"
    } else {
        "a standard task with the full set of colors and fonts"
    };
    let savings = if o.q > 0 && o.q < complexity {
        format!(" (the best icon saves {} of {} formatting actions)", o.q, complexity)
    } else {
        String::new()
    };
    format!(
        "{} suggested, {}{} on {}",
        icons_phrase(o.l),
        help_phrase(o.q, complexity),
        savings,
        environment
    )
}

fn percent(p: f64) -> u32 {
    (p * 100.0).round() as u32
}

pub fn build_conceptual_presentation(
    query: &BoundQuery,
    space: &OutcomeSpace,
    factory: &TaskFactory,
    seed: u64,
) -> Result<ConceptualPresentation, QueryError> {
    let c = factory.complexity;
    let p = query.p.value();
    let (best, worst) = (percent(p), 100 - percent(p));
    let headline = if worst == 0 {
        "100% best (certain)".to_string()
    } else if best == 0 {
        "100% worst (certain)".to_string()
    } else {
        format!("{best}% best / {worst}% worst")
    };
    let best_text = describe_outcome(&space.best(), space, c);
    let worst_text = describe_outcome(&space.worst(), space, c);
    let gamble_description = if worst == 0 {
        format!("An adaptive system that always gives the best interface: {best_text}.")
    } else if best == 0 {
        format!("An adaptive system that always gives the worst interface: {worst_text}.")
    } else {
        format!(
            "An adaptive system that, over repeated tasks, gives the best interface ({best_text}) \
             {best}% of the time and the worst interface ({worst_text}) {worst}% of the time."
        )
    };
    let sure_description = format!(
        "A static system that is always the same: {} ({}).",
        short_description(&query.outcome, c),
        describe_outcome(&query.outcome, space, c)
    );
    let previews = [
        (PreviewRole::Best, space.best()),
        (PreviewRole::Worst, space.worst()),
        (PreviewRole::Offered, query.outcome),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (role, o))| {
        Ok(OutcomePreview {
            role,
            outcome: o,
            icon_count: o.l,
            quality: o.q,
            description: describe_outcome(&o, space, c),
            example: factory.task(&o, rng::derive(seed, i as u64))?,
        })
    })
    .collect::<Result<Vec<_>, QueryError>>()?;
    Ok(ConceptualPresentation {
        ordinal: query.ordinal,
        outcome: query.outcome,
        p: query.p,
        headline,
        gamble_description,
        sure_description,
        previews,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{Answer, ConflictPolicy};
    use crate::task::quality_toolbar;

    fn p(t: u32) -> Prob {
        Prob::new(t, 10)
    }

    #[test]
    fn midpoint_rounding() {
        let space = OutcomeSpace::default();
        let o = Outcome::new(0, 5, 2);
        let mut state = UtilityState::init(&space, ConflictPolicy::TrustNew);
        let mut schedule = Schedule::with_order(SchedulingMode::Sequential, vec![o]);
        assert_eq!(schedule.next_query(&state, 0.1).unwrap(), NextQuery::Ask { outcome: o, p: p(5) });
        state.apply_response(&o, p(5), Answer::PrefersGamble).unwrap();
        assert_eq!(schedule.next_query(&state, 0.1).unwrap(), NextQuery::Ask { outcome: o, p: p(3) });
        state.apply_response(&o, p(3), Answer::PrefersSure).unwrap();
        assert_eq!(schedule.next_query(&state, 0.1).unwrap(), NextQuery::Ask { outcome: o, p: p(4) });
        state.apply_response(&o, p(4), Answer::PrefersGamble).unwrap();
        assert_eq!(schedule.next_query(&state, 0.1).unwrap(), NextQuery::Done);
    }

    #[test]
    fn stall_is_reported() {
        let space = OutcomeSpace::default();
        let o = Outcome::new(0, 5, 2);
        let mut state = UtilityState::init(&space, ConflictPolicy::TrustNew);
        state.apply_response(&o, p(5), Answer::PrefersSure).unwrap();
        state.apply_response(&o, p(6), Answer::PrefersGamble).unwrap();
        let mut schedule = Schedule::with_order(SchedulingMode::Sequential, vec![o]);
        assert!(matches!(schedule.next_query(&state, 0.0), Err(QueryError::ScheduleStall { .. })));
    }

    #[test]
    fn done_when_all_converged() {
        let space = OutcomeSpace::default();
        let mut state = UtilityState::init(&space, ConflictPolicy::TrustNew);
        for o in space.interior() {
            state.apply_response(&o, p(3), Answer::Indifferent).unwrap();
        }
        let mut schedule = Schedule::new(&space, SchedulingMode::Sequential, 1);
        assert_eq!(next_query(&state, &mut schedule, 0.1).unwrap(), NextQuery::Done);
    }

    #[test]
    fn round_robin_rotates() {
        let space = OutcomeSpace::default();
        let state = UtilityState::init(&space, ConflictPolicy::TrustNew);
        let mut schedule = Schedule::new(&space, SchedulingMode::RoundRobin, 3);
        let order = schedule.order().to_vec();
        let asked: Vec<Outcome> = (0..order.len() + 1)
            .map(|_| match schedule.next_query(&state, 0.1).unwrap() {
                NextQuery::Ask { outcome, .. } => outcome,
                NextQuery::Done => unreachable!(),
            })
            .collect();
        assert_eq!(&asked[..order.len()], &order[..]);
        assert_eq!(asked[order.len()], order[0]);
    }

    #[test]
    fn schedule_is_seeded() {
        let space = OutcomeSpace::default();
        let a = Schedule::new(&space, SchedulingMode::Sequential, 5);
        let b = Schedule::new(&space, SchedulingMode::Sequential, 5);
        assert_eq!(a, b);
        let mut sorted = a.order().to_vec();
        sorted.sort();
        assert_eq!(sorted, space.interior());
    }

    fn query(o: Outcome, t: u32, ordinal: u32) -> BoundQuery {
        BoundQuery { outcome: o, p: p(t), delivery: Delivery::Experiential, ordinal }
    }

    #[test]
    fn plan_composition() {
        let space = OutcomeSpace::default();
        let factory = TaskFactory::default();
        let o = Outcome::new(0, 5, 2);
        let plan = build_experiential_plan(&query(o, 8, 1), 10, &space, &factory, 4).unwrap();
        assert_eq!(plan.best_count(), 8);
        assert_eq!(plan.gamble_arm.len(), 10);
        assert_eq!(plan.sure_arm.len(), 10);
        for (task, &top) in plan.gamble_arm.iter().zip(&plan.gamble_layout) {
            let expected = if top { space.best() } else { space.worst() };
            assert_eq!(task.outcome, Some(expected));
            let t = task.toolbar.as_ref().unwrap();
            assert_eq!(quality_toolbar(t, &task.goal).unwrap(), expected.q);
        }
        assert!(plan.sure_arm.iter().all(|t| t.outcome == Some(o)));
        assert_eq!(plan.arm_order, ArmOrder::GambleFirst);

        let all_best = build_experiential_plan(&query(o, 10, 2), 10, &space, &factory, 4).unwrap();
        assert_eq!(all_best.best_count(), 10);
        assert_eq!(all_best.arm_order, ArmOrder::SureFirst);
        assert_eq!(all_best.task_at(0).unwrap().0, Arm::Sure);
        assert_eq!(all_best.task_at(10).unwrap().0, Arm::Gamble);
        assert!(all_best.task_at(20).is_none());

        let bad = build_experiential_plan(&query(o, 5, 1), 3, &space, &factory, 4);
        assert!(matches!(bad, Err(QueryError::InvalidPlan(_))));
    }

    #[test]
    fn conceptual_text() {
        let space = OutcomeSpace::default();
        let factory = TaskFactory::default();
        let q = BoundQuery { outcome: Outcome::new(0, 5, 2), p: p(5), delivery: Delivery::Conceptual, ordinal: 3 };
        let pres = build_conceptual_presentation(&q, &space, &factory, 1).unwrap();
        assert_eq!(pres.headline, "50% best / 50% worst");
        assert!(pres.sure_description.contains("always the same: 5 icons, partial help"));
        assert!(pres.gamble_description.contains("50% of the time"));

        let certain = BoundQuery { p: p(10), ..q };
        let pres = build_conceptual_presentation(&certain, &space, &factory, 1).unwrap();
        assert_eq!(pres.headline, "100% best (certain)");
        assert!(pres.gamble_description.contains("always gives the best interface"));

        for preview in &pres.previews {
            let t = preview.example.toolbar.as_ref().unwrap();
            assert_eq!(t.length(), preview.icon_count);
            assert_eq!(quality_toolbar(t, &preview.example.goal).unwrap(), preview.quality);
        }
        assert_eq!((pres.previews[0].icon_count, pres.previews[0].quality), (1, 4));
        assert_eq!((pres.previews[1].icon_count, pres.previews[1].quality), (10, 0));
    }
}
