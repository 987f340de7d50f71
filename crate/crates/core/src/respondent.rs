//! Simulated respondents: a ground-truth utility, a bias that distorts
//! conceptual (described) queries but not experienced ones, and a response
//! noise model.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{Answer, UtilityFunction};
use crate::outcome::{Outcome, OutcomeSpace};
use crate::query::{BoundQuery, Delivery, DeliveryPayload};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RespondentError {
    #[error("invalid ground truth: {0}")]
    InvalidTruth(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Qualitative shape of a respondent's utility along `Q`, or along `L` for
/// [`Family::FlatAboveL1`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Convex,
    Concave,
    Linear,
    FlatBelowPerfectQ,
    FlatAboveL1,
    Custom,
}

impl Family {
    pub const SAMPLED: [Family; 5] = [
        Family::Convex,
        Family::Concave,
        Family::Linear,
        Family::FlatBelowPerfectQ,
        Family::FlatAboveL1,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthUtility {
    pub family: Family,
    pub values: BTreeMap<Outcome, f64>,
}

impl GroundTruthUtility {
    pub fn custom(values: BTreeMap<Outcome, f64>, space: &OutcomeSpace) -> Result<Self, RespondentError> {
        let truth = Self { family: Family::Custom, values };
        truth.validate(space)?;
        Ok(truth)
    }

    pub fn value(&self, o: &Outcome) -> f64 {
        self.values[o]
    }

    pub fn as_function(&self, space: &OutcomeSpace) -> UtilityFunction {
        UtilityFunction::new(space.grid().clone(), self.values.clone())
            .expect("validated truth covers the grid")
    }

    /// Anchors, range, and monotonicity (non-decreasing in `q`,
    /// non-increasing in `l`).
    pub fn validate(&self, space: &OutcomeSpace) -> Result<(), RespondentError> {
        let bad = |msg: String| Err(RespondentError::InvalidTruth(msg));
        let g = space.grid();
        for o in space.enumerate() {
            let Some(&v) = self.values.get(&o) else {
                return bad(format!("missing value for {o}"));
            };
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("u({o}) = {v} outside [0, 1]"));
            }
        }
        if self.values[&space.best()] != 1.0 || self.values[&space.worst()] != 0.0 {
            return bad("anchors must have utility 1 and 0".into());
        }
        let tol = 1e-12;
        for &n in &g.neediness {
            for &l in &g.lengths {
                for w in g.qualities.windows(2) {
                    let (a, b) = (Outcome::new(n, l, w[0]), Outcome::new(n, l, w[1]));
                    if self.values[&a] > self.values[&b] + tol {
                        return bad(format!("decreasing in q between {a} and {b}"));
                    }
                }
            }
            for &q in &g.qualities {
                for w in g.lengths.windows(2) {
                    let (a, b) = (Outcome::new(n, w[0], q), Outcome::new(n, w[1], q));
                    if self.values[&a] + tol < self.values[&b] {
                        return bad(format!("increasing in l between {a} and {b}"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn shape(family: Family, exponent: f64, x: f64) -> f64 {
    match family {
        Family::Convex => x.powf(exponent),
        Family::Concave => x.powf(1.0 / exponent),
        Family::FlatBelowPerfectQ => {
            if x >= 1.0 {
                1.0
            } else {
                0.0
            }
        }
        Family::Linear | Family::FlatAboveL1 | Family::Custom => x,
    }
}

/// Draws a utility of the given family. Each `(n, l)` row interpolates
/// between a floor (at the lowest quality) and a ceiling (at the highest);
/// both fall with toolbar length, which makes the result monotone.
pub fn sample_ground_truth(family: Family, space: &OutcomeSpace, seed: u64) -> Result<GroundTruthUtility, RespondentError> {
    if family == Family::Custom {
        return Err(RespondentError::InvalidParameter(
            "custom utilities are supplied, not sampled".into(),
        ));
    }
    let g = space.grid();
    let (l_min, l_max) = (g.lengths[0], *g.lengths.last().unwrap());
    let (q_min, q_max) = (g.qualities[0], g.max_quality());
    let (best, worst) = (space.best(), space.worst());
    if (best.l, best.q) != (l_min, q_max) || (worst.l, worst.q) != (l_max, q_min) {
        return Err(RespondentError::InvalidParameter(format!(
            "monotone families need o⊤ at (l{l_min}, q{q_max}) and o⊥ at (l{l_max}, q{q_min})"
        )));
    }
    let mut rng = rng::from_seed(seed);
    let exponent: f64 = rng.random_range(1.6..3.0);
    let flat_l = family == Family::FlatAboveL1;
    let mut values = BTreeMap::new();
    let ls = &g.lengths;
    for &n in &g.neediness {
        let mut ceiling = vec![0.0_f64; ls.len()];
        ceiling[0] = if n == best.n { 1.0 } else { rng.random_range(0.55..1.0) };
        for j in 1..ls.len() {
            ceiling[j] = if flat_l && j > 1 {
                ceiling[1]
            } else if flat_l {
                ceiling[0] * rng.random_range(0.4..0.8)
            } else {
                ceiling[j - 1] * rng.random_range(0.6..0.97)
            };
        }
        let mut floor = vec![0.0_f64; ls.len()];
        let last = ls.len() - 1;
        floor[last] = if n == worst.n { 0.0 } else { rng.random_range(0.0..0.3) * ceiling[last] };
        for j in (0..last).rev() {
            floor[j] = if flat_l && j >= 1 {
                floor[last]
            } else {
                let cap = 0.6 * ceiling[j];
                floor[j + 1] + rng.random_range(0.0..1.0) * (cap - floor[j + 1]).max(0.0)
            };
        }
        for (j, &l) in ls.iter().enumerate() {
            for &q in &g.qualities {
                let x = if q_max == q_min { 1.0 } else { f64::from(q - q_min) / f64::from(q_max - q_min) };
                let v = floor[j] + (ceiling[j] - floor[j]) * shape(family, exponent, x);
                values.insert(Outcome::new(n, l, q), v.clamp(0.0, 1.0));
            }
        }
    }
    values.insert(best, 1.0);
    values.insert(worst, 0.0);
    let truth = GroundTruthUtility { family, values };
    truth.validate(space)?;
    Ok(truth)
}

/// How described (conceptual) queries misread true utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasModel {
    /// `β`: fractional under-valuation of the attenuated outcomes.
    pub attenuation: f64,
    pub attenuation_set: BTreeSet<Outcome>,
    /// `γ`: additive over-valuation of the inflated outcomes.
    pub inflation: f64,
    pub inflation_set: BTreeSet<Outcome>,
    /// `λ`: share of bias removed by each experiential query answered.
    pub decay: f64,
}

impl Default for BiasModel {
    fn default() -> Self {
        let mut attenuation_set = BTreeSet::new();
        for n in [0, 1] {
            for l in [1, 5, 10] {
                attenuation_set.insert(Outcome::new(n, l, 2));
            }
            attenuation_set.insert(Outcome::new(n, 5, 0));
            attenuation_set.insert(Outcome::new(n, 1, 0));
        }
        Self {
            attenuation: 0.3,
            attenuation_set,
            inflation: 0.15,
            inflation_set: BTreeSet::from([Outcome::new(1, 10, 4)]),
            decay: 0.2,
        }
    }
}

impl BiasModel {
    pub fn none() -> Self {
        Self {
            attenuation: 0.0,
            attenuation_set: BTreeSet::new(),
            inflation: 0.0,
            inflation_set: BTreeSet::new(),
            decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), RespondentError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(RespondentError::InvalidParameter(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("attenuation", self.attenuation)?;
        unit("inflation", self.inflation)?;
        unit("decay", self.decay)
    }
}

/// `û`: the utility the respondent acts on. Experience reveals the truth;
/// descriptions are distorted, less so after each experiential query.
pub fn perceived_utility(
    truth: f64,
    bias: &BiasModel,
    o: &Outcome,
    delivery: Delivery,
    experience_count: u32,
) -> f64 {
    match delivery {
        Delivery::Experiential => truth,
        Delivery::Conceptual => {
            let residual = (1.0 - bias.decay).powi(experience_count as i32);
            let attenuated = if bias.attenuation_set.contains(o) { bias.attenuation * residual } else { 0.0 };
            let inflated = if bias.inflation_set.contains(o) { bias.inflation * residual } else { 0.0 };
            (truth * (1.0 - attenuated) + inflated).clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseMode {
    Deterministic,
    #[default]
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseModel {
    pub mode: ResponseMode,
    pub tau_conceptual: f64,
    pub tau_experiential: f64,
    /// Probability of flipping the answer.
    pub lapse: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        Self { mode: ResponseMode::Logistic, tau_conceptual: 0.1, tau_experiential: 0.05, lapse: 0.02 }
    }
}

impl ResponseModel {
    pub fn deterministic() -> Self {
        Self { mode: ResponseMode::Deterministic, lapse: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), RespondentError> {
        let bad = |m: String| Err(RespondentError::InvalidParameter(m));
        if !(self.tau_conceptual > 0.0 && self.tau_experiential > 0.0) {
            return bad("temperatures must be positive".into());
        }
        if self.tau_experiential > self.tau_conceptual {
            return bad("tau_experiential must not exceed tau_conceptual".into());
        }
        if !(0.0..0.5).contains(&self.lapse) {
            return bad(format!("lapse {} outside [0, 0.5)", self.lapse));
        }
        Ok(())
    }

    fn tau(&self, delivery: Delivery) -> f64 {
        match delivery {
            Delivery::Conceptual => self.tau_conceptual,
            Delivery::Experiential => self.tau_experiential,
        }
    }
}

/// Expected-utility comparison of the gamble against the sure outcome.
///
/// The gamble's value is `p` for a described query and the realized share
/// of best-outcome tasks for an experienced one (equal to `p` by
/// construction).
pub fn answer(
    query: &BoundQuery,
    payload: &DeliveryPayload,
    truth: &GroundTruthUtility,
    bias: &BiasModel,
    model: &ResponseModel,
    experience_count: u32,
    seed: u64,
) -> Answer {
    let delivery = payload.delivery();
    let gamble = match payload {
        DeliveryPayload::Experiential(plan) => plan.realized_fraction(),
        DeliveryPayload::Conceptual(_) => query.p.value(),
    };
    let perceived = perceived_utility(truth.value(&query.outcome), bias, &query.outcome, delivery, experience_count);
    let diff = gamble - perceived;
    match model.mode {
        ResponseMode::Deterministic => {
            if diff.abs() <= 1e-12 {
                Answer::Indifferent
            } else if diff > 0.0 {
                Answer::PrefersGamble
            } else {
                Answer::PrefersSure
            }
        }
        ResponseMode::Logistic => {
            let mut rng = rng::from_seed(seed);
            let p_gamble = 1.0 / (1.0 + (-diff / model.tau(delivery)).exp());
            let mut gamble_chosen = rng.random_bool(p_gamble.clamp(0.0, 1.0));
            if model.lapse > 0.0 && rng.random_bool(model.lapse) {
                gamble_chosen = !gamble_chosen;
            }
            if gamble_chosen {
                Answer::PrefersGamble
            } else {
                Answer::PrefersSure
            }
        }
    }
}
