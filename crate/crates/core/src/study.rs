//! Simulated studies end to end: draw respondents from the configured
//! population, run each through its condition's protocol, write one log per
//! respondent, then reload the logs and compare conditions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConditionSpec, ConfigError, StudyConfig};
use crate::log::{LogError, LogRecord, SessionLog};
use crate::outcome::{Outcome, OutcomeSpace};
use crate::protocol::SimulatedRespondent;
use crate::respondent::{sample_ground_truth, GroundTruthUtility, RespondentError};
use crate::rng;
use crate::session::{run_protocol, RunStatus, Session, SessionError};
use crate::stats::{self, HotellingResult, SampleMatrix, SignificanceTable, StatsError, UnivariateBattery};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Respondent(#[from] RespondentError),
    #[error("{path}: {source}")]
    Log { path: PathBuf, source: LogError },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("incompatible study: {0}")]
    IncompatibleStudy(String),
    #[error("{0}: no session logs found")]
    EmptyCondition(PathBuf),
    #[error("{0}: session did not finish")]
    Unfinished(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StudyError + '_ {
    move |source| StudyError::Io { path: path.to_path_buf(), source }
}

/// One simulated respondent after their session.
#[derive(Debug, Clone)]
pub struct SimulatedParticipant {
    pub session: Session,
    pub truth: GroundTruthUtility,
}

/// Seed of respondent `index` in condition `condition` of a study seeded
/// with `study_seed`.
pub fn respondent_seed(study_seed: u64, condition: usize, index: u32) -> u64 {
    rng::derive(rng::derive(study_seed, 0x5eed_0000 + condition as u64), u64::from(index))
}

/// Draws one respondent from the population and runs them to completion.
pub fn simulate_respondent(
    config: &StudyConfig,
    condition: &ConditionSpec,
    seed: u64,
    id: &str,
) -> Result<SimulatedParticipant, StudyError> {
    let pop = &config.population;
    let space = config.space()?;
    let family = pop.families[rng::from_seed(rng::derive(seed, 1)).random_range(0..pop.families.len())];
    let truth = sample_ground_truth(family, &space, rng::derive(seed, 2))?;
    let settings = config.session_settings(condition.protocol, rng::derive(seed, 3))?;
    let mut session = Session::create(id, settings)?;
    session.annotate(LogRecord::SimulatedTruth { family, values: truth.values.clone() });
    let mut respondent =
        SimulatedRespondent::new(truth.clone(), pop.bias.clone(), pop.response.clone(), rng::derive(seed, 4));
    match run_protocol(&mut session, &mut respondent)? {
        RunStatus::Completed => Ok(SimulatedParticipant { session, truth }),
        RunStatus::Suspended => Err(StudyError::Unfinished(id.to_string())),
    }
}

/// All respondents of one condition, in index order.
pub fn simulate_condition(
    config: &StudyConfig,
    condition_index: usize,
    study_seed: u64,
) -> Result<Vec<SimulatedParticipant>, StudyError> {
    let condition = &config.condition[condition_index];
    let ids: Vec<(String, u64)> = (0..condition.respondents)
        .map(|i| (format!("{}-{:02}", condition.label, i + 1), respondent_seed(study_seed, condition_index, i)))
        .collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(ids.len().max(1));
    let chunk = ids.len().div_ceil(workers.max(1)).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = ids
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|(id, seed)| simulate_respondent(config, condition, *seed, id))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(ids.len());
        for h in handles {
            out.extend(h.join().expect("simulation thread panicked")?);
        }
        Ok(out)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionOutput {
    pub label: String,
    pub directory: PathBuf,
    pub logs: Vec<PathBuf>,
}

/// Runs every configured condition and writes `<out>/<label>/<id>.jsonl`,
/// plus the effective config as `<out>/study.toml`.
pub fn run_simulated_study(config: &StudyConfig, out_dir: &Path) -> Result<Vec<ConditionOutput>, StudyError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let config_path = out_dir.join("study.toml");
    std::fs::write(&config_path, config.to_toml_string()).map_err(io_err(&config_path))?;
    let mut outputs = Vec::new();
    for (ci, condition) in config.condition.iter().enumerate() {
        let dir = out_dir.join(&condition.label);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut logs = Vec::new();
        for participant in simulate_condition(config, ci, config.study.seed)? {
            let path = dir.join(format!("{}.jsonl", participant.session.id()));
            participant
                .session
                .log()
                .write(&path)
                .map_err(|source| StudyError::Log { path: path.clone(), source })?;
            logs.push(path);
        }
        outputs.push(ConditionOutput { label: condition.label.clone(), directory: dir, logs });
    }
    Ok(outputs)
}

/// Midpoint utilities of every finished, replay-checked log in a directory.
#[derive(Debug, Clone)]
pub struct ConditionData {
    pub label: String,
    pub space: OutcomeSpace,
    pub matrix: SampleMatrix,
}

fn same_space(a: &OutcomeSpace, b: &OutcomeSpace) -> bool {
    a.grid() == b.grid() && a.best() == b.best() && a.worst() == b.worst()
}

/// Builds the respondent × outcome matrix from completed logs. Each log is
/// replayed first and must reproduce its stored final intervals.
pub fn matrix_from_logs(logs: &[(String, SessionLog)]) -> Result<(OutcomeSpace, SampleMatrix), StudyError> {
    let mut space: Option<OutcomeSpace> = None;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (name, log) in logs {
        let wrap = |source| StudyError::Log { path: PathBuf::from(name), source };
        let (_, _, settings) = log.header().map_err(wrap)?;
        match &space {
            None => space = Some(settings.space.clone()),
            Some(s) if !same_space(s, &settings.space) => {
                return Err(StudyError::IncompatibleStudy(format!("{name} uses a different outcome grid or anchors")))
            }
            Some(_) => {}
        }
        log.replay().map_err(wrap)?;
        let (_, midpoints) = log.final_record().ok_or_else(|| wrap(LogError::Incomplete))?;
        let outcomes = settings.space.enumerate();
        rows.push(outcomes.iter().map(|o| midpoints[o]).collect::<Vec<f64>>());
        labels.push(name.clone());
    }
    let space = space.ok_or_else(|| StudyError::IncompatibleStudy("no logs".into()))?;
    let matrix = SampleMatrix::new(space.enumerate(), labels, &rows)?;
    Ok((space, matrix))
}

pub fn load_condition(dir: &Path) -> Result<ConditionData, StudyError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(StudyError::EmptyCondition(dir.to_path_buf()));
    }
    let logs = paths
        .iter()
        .map(|p| {
            let log = SessionLog::read(p).map_err(|source| StudyError::Log { path: p.clone(), source })?;
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok((name, log))
        })
        .collect::<Result<Vec<_>, StudyError>>()?;
    let (space, matrix) = matrix_from_logs(&logs)?;
    let label = dir.file_name().map_or_else(|| dir.display().to_string(), |s| s.to_string_lossy().into_owned());
    Ok(ConditionData { label, space, matrix })
}

/// Two-condition comparison. `t` is positive where condition A's mean
/// utility is higher.
#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub label_a: String,
    pub label_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub battery: UnivariateBattery,
    pub hotelling: HotellingResult,
    pub table: SignificanceTable,
}

pub fn analyze(
    a: &ConditionData,
    b: &ConditionData,
    alpha: f64,
) -> Result<Analysis, StudyError> {
    if !same_space(&a.space, &b.space) {
        return Err(StudyError::IncompatibleStudy(format!(
            "{} and {} were elicited over different outcome grids",
            a.label, b.label
        )));
    }
    let battery = stats::t_test_per_outcome(&a.matrix, &b.matrix)?;
    let hotelling = stats::hotelling_t2(&a.matrix, &b.matrix)?;
    let table = stats::summarize(&battery, alpha);
    Ok(Analysis {
        label_a: a.label.clone(),
        label_b: b.label.clone(),
        n_a: a.matrix.rows(),
        n_b: b.matrix.rows(),
        battery,
        hotelling,
        table,
    })
}

/// Loads two condition directories and compares them.
pub fn export_and_analyze(dir_a: &Path, dir_b: &Path, alpha: f64) -> Result<(ConditionData, ConditionData, Analysis), StudyError> {
    let a = load_condition(dir_a)?;
    let b = load_condition(dir_b)?;
    let analysis = analyze(&a, &b, alpha)?;
    Ok((a, b, analysis))
}

impl Analysis {
    pub fn to_text(&self) -> String {
        let h = &self.hotelling;
        let p = h.p_value.map_or_else(|| "undefined".to_string(), |p| format!("{p:.4}"));
        let f = h.f.map_or_else(|| "-".to_string(), |f| format!("{f:.3}"));
        let df2 = h.df2.map_or_else(|| "-".to_string(), |d| d.to_string());
        let mut out = format!(
            "{} (n = {}) vs {} (n = {}); t > 0 where {} is higher\n{}\n\nHotelling T^2 = {:.3}, rank(S) = {}, F({}, {}) = {}, p = {}\nmethod: {}\n",
            self.label_a, self.n_a, self.label_b, self.n_b, self.label_a, self.table, h.t2, h.rank, h.df1, df2, f, p, h.method
        );
        if let Some(w) = &h.warning {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["outcome", "mean_a", "mean_b", "t", "p", "significant"]).expect("in-memory write");
        for (i, row) in self.table.rows.iter().enumerate() {
            w.write_record([
                row.outcome.to_string(),
                self.battery.mean_a[i].to_string(),
                self.battery.mean_b[i].to_string(),
                row.t.to_string(),
                row.p_value.to_string(),
                row.significant.to_string(),
            ])
            .expect("in-memory write");
        }
        let h = &self.hotelling;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        w.write_record(["hotelling_t2", &h.t2.to_string(), "", "", &opt(h.p_value), ""]).expect("in-memory write");
        w.write_record(["hotelling_f", &opt(h.f), &h.df1.to_string(), &opt(h.df2), "", ""])
            .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn t_by_outcome(&self) -> BTreeMap<Outcome, f64> {
        self.battery.outcomes.iter().copied().zip(self.battery.t.iter().copied()).collect()
    }
}
