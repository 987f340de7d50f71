//! The per-respondent session state machine.
//!
//! A session moves `training → querying → done`, and can be suspended from
//! either of the first two phases. While querying there is always exactly
//! one pending query. An experiential query is served as its `2k` tasks, arm
//! by arm, followed by a preference prompt. A conceptual query is served as
//! a single presentation that takes the answer directly. Nothing advances
//! without a submission.
//!
//! Sessions serialize in full (including their log), so a suspended session
//! can be written to disk and resumed with identical subsequent behavior.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{Answer, BoundsError, ConflictPolicy, UtilityInterval, UtilityState};
use crate::log::{now_millis, LogRecord, SessionLog, LOG_FORMAT, LOG_VERSION};
use crate::outcome::{Outcome, OutcomeSpace};
use crate::protocol::{training_outcomes, Abandoned, Protocol, ProtocolKind, Respondent};
use crate::query::{
    build_conceptual_presentation, build_experiential_plan, Arm, ArmOrder, BoundQuery, ConceptualPresentation,
    Delivery, DeliveryPayload, NextQuery, QueryError, Schedule, SchedulingMode,
};
use crate::rng;
use crate::task::{TaskCompletion, TaskError, TaskFactory, TaskSpec};

const SCHEDULE_STREAM: u64 = 1;
const TRAINING_STREAM: u64 = 2;
const QUERY_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("session is finished; no further steps")]
    Exhausted,
    #[error("session is suspended")]
    Suspended,
    #[error("session is not suspended")]
    NotSuspended,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Everything a session needs to run; snapshotted into the log header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSettings {
    pub space: OutcomeSpace,
    pub factory: TaskFactory,
    pub k: u32,
    pub termination_width: f64,
    pub protocol: Protocol,
    pub scheduling: SchedulingMode,
    pub conflict_policy: ConflictPolicy,
    pub seed: u64,
    /// When false every timestamp is written as 0.
    pub record_timestamps: bool,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            space: OutcomeSpace::default(),
            factory: TaskFactory::default(),
            k: 10,
            termination_width: 0.1,
            protocol: ProtocolKind::Conceptual.into(),
            scheduling: SchedulingMode::default(),
            conflict_policy: ConflictPolicy::default(),
            seed: 0,
            record_timestamps: true,
        }
    }
}

impl SessionSettings {
    pub fn with_protocol(mut self, protocol: impl Into<Protocol>) -> Self {
        self.protocol = protocol.into();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::InvalidSettings(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if !(self.termination_width > 0.0 && self.termination_width < 1.0) {
            return bad(format!("termination width {} outside (0, 1)", self.termination_width));
        }
        let tick = 1.0 / f64::from(self.space.steps());
        if self.termination_width < tick - 1e-9 {
            return bad(format!(
                "termination width {} is finer than the probability step {tick}",
                self.termination_width
            ));
        }
        if let Some(p) = self.space.probability_grid().into_iter().find(|p| p.count_of(self.k).is_none()) {
            return bad(format!("p = {p} does not split k = {} tasks evenly", self.k));
        }
        self.space
            .grid()
            .validate_qualities(self.factory.complexity)
            .map_err(|e| SessionError::InvalidSettings(e.to_string()))?;
        for &n in &self.space.grid().neediness {
            let vocab = self.factory.vocabulary(n)?;
            vocab.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Querying,
    Done,
    Suspended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Pending {
    query: BoundQuery,
    payload: DeliveryPayload,
    tasks_done: usize,
}

impl Pending {
    fn task_total(&self) -> usize {
        match &self.payload {
            DeliveryPayload::Experiential(plan) => 2 * plan.k as usize,
            DeliveryPayload::Conceptual(_) => 0,
        }
    }
}

/// What the respondent should do next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    TrainingTask {
        index: usize,
        total: usize,
        task: TaskSpec,
    },
    ExperientialTask {
        ordinal: u32,
        arm: Arm,
        /// 1 for the first arm shown, 2 for the second.
        arm_number: u32,
        position: usize,
        index: usize,
        total: usize,
        task: TaskSpec,
    },
    /// After both arms: which block would the respondent rather keep? The
    /// probability is embodied in the tasks and deliberately not shown.
    PreferencePrompt {
        ordinal: u32,
        outcome: Outcome,
        arm_order: ArmOrder,
    },
    Presentation {
        query: BoundQuery,
        presentation: ConceptualPresentation,
    },
    Done {
        queries: u32,
        intervals: std::collections::BTreeMap<Outcome, UtilityInterval>,
    },
}

impl Step {
    pub fn task(&self) -> Option<&TaskSpec> {
        match self {
            Step::TrainingTask { task, .. } | Step::ExperientialTask { task, .. } => Some(task),
            _ => None,
        }
    }

    pub fn expects_answer(&self) -> bool {
        matches!(self, Step::PreferencePrompt { .. } | Step::Presentation { .. })
    }
}

/// A respondent's reply to the current step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Submission {
    Task(TaskCompletion),
    Preference { answer: Answer },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    id: String,
    settings: SessionSettings,
    phase: Phase,
    resume_phase: Option<Phase>,
    state: UtilityState,
    schedule: Schedule,
    training: Vec<TaskSpec>,
    training_done: usize,
    pending: Option<Pending>,
    issued: u32,
    experiential_answered: u32,
    log: SessionLog,
}

impl Session {
    pub fn create(id: impl Into<String>, settings: SessionSettings) -> Result<Self, SessionError> {
        settings.validate()?;
        let id = id.into();
        let training = if settings.protocol.training {
            training_outcomes(&settings.space)
                .iter()
                .enumerate()
                .map(|(i, o)| settings.factory.task(o, rng::derive(rng::derive(settings.seed, TRAINING_STREAM), i as u64)))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            Vec::new()
        };
        let mut session = Session {
            state: UtilityState::init(&settings.space, settings.conflict_policy),
            schedule: Schedule::new(
                &settings.space,
                settings.scheduling,
                rng::derive(settings.seed, SCHEDULE_STREAM),
            ),
            phase: if training.is_empty() { Phase::Querying } else { Phase::Training },
            resume_phase: None,
            training,
            training_done: 0,
            pending: None,
            issued: 0,
            experiential_answered: 0,
            log: SessionLog::new(),
            id,
            settings,
        };
        let at = session.stamp();
        session.log.push(LogRecord::Header {
            format: LOG_FORMAT.to_string(),
            version: LOG_VERSION,
            session_id: session.id.clone(),
            protocol: session.settings.protocol.kind,
            settings: Box::new(session.settings.clone()),
            at,
        });
        if session.phase == Phase::Querying {
            session.advance()?;
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn state(&self) -> &UtilityState {
        &self.state
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    /// Number of bound queries issued so far.
    pub fn queries_issued(&self) -> u32 {
        self.issued
    }

    pub fn experiential_answered(&self) -> u32 {
        self.experiential_answered
    }

    pub fn pending_query(&self) -> Option<&BoundQuery> {
        self.pending.as_ref().map(|p| &p.query)
    }

    pub fn pending_payload(&self) -> Option<&DeliveryPayload> {
        self.pending.as_ref().map(|p| &p.payload)
    }

    pub fn converged_count(&self) -> usize {
        self.state
            .intervals()
            .values()
            .filter(|i| crate::bounds::is_converged(i, self.settings.termination_width))
            .count()
    }

    fn stamp(&self) -> u64 {
        if self.settings.record_timestamps {
            now_millis()
        } else {
            0
        }
    }

    /// Attach a record the session itself does not produce (for example a
    /// simulated respondent's ground truth).
    pub fn annotate(&mut self, record: LogRecord) {
        self.log.push(record);
    }

    fn advance(&mut self) -> Result<(), SessionError> {
        debug_assert!(self.pending.is_none());
        match self.schedule.next_query(&self.state, self.settings.termination_width)? {
            NextQuery::Done => {
                self.phase = Phase::Done;
                let at = self.stamp();
                self.log.push(LogRecord::Final {
                    queries: self.issued,
                    conflicts: self.state.conflicts().len(),
                    intervals: self.state.intervals().clone(),
                    midpoints: self.state.midpoint_utility().values().clone(),
                    at,
                });
            }
            NextQuery::Ask { outcome, p } => {
                self.issued += 1;
                let ordinal = self.issued;
                let query = BoundQuery { outcome, p, delivery: self.settings.protocol.delivery_for(ordinal), ordinal };
                let seed = rng::derive(rng::derive(self.settings.seed, QUERY_STREAM), u64::from(ordinal));
                let s = &self.settings;
                let payload = match query.delivery {
                    Delivery::Experiential => DeliveryPayload::Experiential(build_experiential_plan(
                        &query, s.k, &s.space, &s.factory, seed,
                    )?),
                    Delivery::Conceptual => DeliveryPayload::Conceptual(build_conceptual_presentation(
                        &query, &s.space, &s.factory, seed,
                    )?),
                };
                let (arm_order, gamble_layout, headline) = match &payload {
                    DeliveryPayload::Experiential(plan) => {
                        (Some(plan.arm_order), Some(plan.gamble_layout.clone()), None)
                    }
                    DeliveryPayload::Conceptual(c) => (None, None, Some(c.headline.clone())),
                };
                let at = self.stamp();
                self.log.push(LogRecord::Query {
                    ordinal,
                    outcome,
                    p,
                    delivery: query.delivery,
                    arm_order,
                    gamble_layout,
                    headline,
                    at,
                });
                self.pending = Some(Pending { query, payload, tasks_done: 0 });
            }
        }
        Ok(())
    }

    pub fn next_step(&self) -> Result<Step, SessionError> {
        match self.phase {
            Phase::Suspended => Err(SessionError::Suspended),
            Phase::Done => Ok(Step::Done { queries: self.issued, intervals: self.state.intervals().clone() }),
            Phase::Training => Ok(Step::TrainingTask {
                index: self.training_done,
                total: self.training.len(),
                task: self.training[self.training_done].clone(),
            }),
            Phase::Querying => {
                let pending = self.pending.as_ref().expect("a query is pending while querying");
                match &pending.payload {
                    DeliveryPayload::Conceptual(c) => {
                        Ok(Step::Presentation { query: pending.query, presentation: c.clone() })
                    }
                    DeliveryPayload::Experiential(plan) => match plan.task_at(pending.tasks_done) {
                        Some((arm, position, task)) => Ok(Step::ExperientialTask {
                            ordinal: pending.query.ordinal,
                            arm,
                            arm_number: (pending.tasks_done / plan.k as usize) as u32 + 1,
                            position,
                            index: pending.tasks_done,
                            total: pending.task_total(),
                            task: task.clone(),
                        }),
                        None => Ok(Step::PreferencePrompt {
                            ordinal: pending.query.ordinal,
                            outcome: pending.query.outcome,
                            arm_order: plan.arm_order,
                        }),
                    },
                }
            }
        }
    }

    pub fn submit(&mut self, submission: Submission) -> Result<(), SessionError> {
        let step = match self.phase {
            Phase::Done => return Err(SessionError::Exhausted),
            _ => self.next_step()?,
        };
        match (step, submission) {
            (Step::TrainingTask { index, task, .. }, Submission::Task(completion)) => {
                let record = task.evaluate(&completion).map_err(violation)?;
                let at = self.stamp();
                self.log.push(LogRecord::Training { index, task: Box::new(task), completion: record, at });
                self.training_done += 1;
                if self.training_done == self.training.len() {
                    self.phase = Phase::Querying;
                    self.advance()?;
                }
                Ok(())
            }
            (Step::ExperientialTask { ordinal, arm, position, task, .. }, Submission::Task(completion)) => {
                let record = task.evaluate(&completion).map_err(violation)?;
                let at = self.stamp();
                self.log.push(LogRecord::Task { ordinal, arm, position, task: Box::new(task), completion: record, at });
                self.pending.as_mut().expect("pending query").tasks_done += 1;
                Ok(())
            }
            (Step::PreferencePrompt { .. } | Step::Presentation { .. }, Submission::Preference { answer }) => {
                self.record_answer(answer)
            }
            (step, Submission::Task(_)) if step.expects_answer() => {
                Err(SessionError::ProtocolViolation("expected a preference answer, got a task completion".into()))
            }
            (_, Submission::Preference { .. }) => {
                Err(SessionError::ProtocolViolation("expected a task completion, got a preference answer".into()))
            }
            (step, submission) => Err(SessionError::ProtocolViolation(format!(
                "submission {submission:?} does not match step {}",
                step_name(&step)
            ))),
        }
    }

    fn record_answer(&mut self, answer: Answer) -> Result<(), SessionError> {
        let pending = self.pending.take().expect("pending query");
        let q = pending.query;
        let update = self.state.apply_response(&q.outcome, q.p, answer)?;
        if q.delivery == Delivery::Experiential {
            self.experiential_answered += 1;
        }
        let at = self.stamp();
        self.log.push(LogRecord::Response {
            ordinal: q.ordinal,
            outcome: q.outcome,
            p: q.p,
            answer,
            before: update.before,
            after: update.after,
            conflict: update.conflict,
            at,
        });
        self.advance()
    }

    pub fn suspend(&mut self) -> Result<(), SessionError> {
        match self.phase {
            Phase::Done => Err(SessionError::Exhausted),
            Phase::Suspended => Err(SessionError::Suspended),
            phase => {
                self.resume_phase = Some(phase);
                self.phase = Phase::Suspended;
                let at = self.stamp();
                self.log.push(LogRecord::Suspended { at });
                Ok(())
            }
        }
    }

    pub fn resume(&mut self) -> Result<(), SessionError> {
        if self.phase != Phase::Suspended {
            return Err(SessionError::NotSuspended);
        }
        self.phase = self.resume_phase.take().expect("suspended sessions remember their phase");
        let at = self.stamp();
        self.log.push(LogRecord::Resumed { at });
        Ok(())
    }
}

fn violation(e: TaskError) -> SessionError {
    SessionError::ProtocolViolation(e.to_string())
}

fn step_name(step: &Step) -> &'static str {
    match step {
        Step::TrainingTask { .. } => "training_task",
        Step::ExperientialTask { .. } => "experiential_task",
        Step::PreferencePrompt { .. } => "preference_prompt",
        Step::Presentation { .. } => "presentation",
        Step::Done { .. } => "done",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Suspended,
}

/// Drives `session` with `respondent` until it finishes or the respondent
/// walks away, in which case the session is left suspended. A suspended
/// session is resumed first.
pub fn run_protocol(session: &mut Session, respondent: &mut dyn Respondent) -> Result<RunStatus, SessionError> {
    if session.phase() == Phase::Suspended {
        session.resume()?;
    }
    loop {
        let step = session.next_step()?;
        let submission = match &step {
            Step::Done { .. } => return Ok(RunStatus::Completed),
            Step::TrainingTask { task, .. } | Step::ExperientialTask { task, .. } => {
                respondent.complete_task(task).map(Submission::Task)
            }
            Step::PreferencePrompt { .. } | Step::Presentation { .. } => {
                let query = *session.pending_query().expect("pending query");
                let payload = session.pending_payload().expect("pending query");
                respondent.answer(&query, payload).map(|answer| Submission::Preference { answer })
            }
        };
        match submission {
            Ok(s) => session.submit(s)?,
            Err(Abandoned) => {
                session.suspend()?;
                return Ok(RunStatus::Suspended);
            }
        }
    }
}
