//! Utility elicitation for mixed-initiative assistance.
//!
//! Outcomes of a suggestion episode are scored by an adaptive sequence of
//! bound queries against a standard gamble between the best and worst
//! outcomes. Queries can be described in words or delivered as a block of
//! hands-on tasks. The crate also ships a simulated respondent population,
//! a myopic decision model that consumes the elicited utilities, and the
//! two-sample statistics used to compare elicitation protocols.

pub mod bounds;
pub mod config;
pub mod decision;
pub mod log;
pub mod outcome;
pub mod protocol;
pub mod query;
pub mod respondent;
pub mod rng;
pub mod session;
pub mod stats;
pub mod study;
pub mod task;

pub use bounds::{Answer, ConflictPolicy, UtilityFunction, UtilityInterval, UtilityState};
pub use config::StudyConfig;
pub use outcome::{AttributeGrid, Outcome, OutcomeSpace, Prob};
pub use protocol::{Protocol, ProtocolKind};
pub use session::{Session, SessionSettings, Step, Submission};
