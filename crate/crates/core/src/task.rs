//! The highlighting task: font styles, vocabularies, goals, suggestion
//! toolbars, and the effort model behind toolbar quality.
//!
//! Effort is counted in feature-setting events. A style differs from another
//! in some number of features; each differing feature takes exactly one event
//! to fix (toggle a flag, or pick the right color/font directly). The quality
//! of an icon is the number of events it saves over doing the goal by hand.

use std::collections::HashSet;
use std::fmt;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::outcome::Outcome;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("toolbar has no icons")]
    EmptyToolbar,
    #[error("no vocabulary for neediness level {0}")]
    MissingVocabulary(u32),
    #[error("style uses {feature} value {value} outside the vocabulary")]
    OutOfVocabulary { feature: Feature, value: u8 },
    #[error("invalid completion: {0}")]
    InvalidCompletion(String),
}

/// The seven font features a highlighting style is made of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Bold,
    Underline,
    Italics,
    Shadow,
    SizeIncrement,
    Color,
    Font,
}

impl Feature {
    pub const ALL: [Feature; 7] = [
        Feature::Bold,
        Feature::Underline,
        Feature::Italics,
        Feature::Shadow,
        Feature::SizeIncrement,
        Feature::Color,
        Feature::Font,
    ];

    pub fn is_binary(self) -> bool {
        !matches!(self, Feature::Color | Feature::Font)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Feature::Bold => "bold",
            Feature::Underline => "underline",
            Feature::Italics => "italics",
            Feature::Shadow => "shadow",
            Feature::SizeIncrement => "size_increment",
            Feature::Color => "color",
            Feature::Font => "font",
        };
        f.write_str(name)
    }
}

/// Five binary flags plus a color and a font family, both as indices into the
/// active [`Vocabulary`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FontStyle {
    #[serde(default)]
    pub bold: bool,
    #[serde(default)]
    pub underline: bool,
    #[serde(default)]
    pub italics: bool,
    #[serde(default)]
    pub shadow: bool,
    #[serde(default)]
    pub size_increment: bool,
    #[serde(default)]
    pub color: u8,
    #[serde(default)]
    pub font: u8,
}

impl FontStyle {
    /// Plain text: no flags, first color, first font.
    pub const PLAIN: FontStyle = FontStyle {
        bold: false,
        underline: false,
        italics: false,
        shadow: false,
        size_increment: false,
        color: 0,
        font: 0,
    };

    pub fn get(&self, feature: Feature) -> u8 {
        match feature {
            Feature::Bold => self.bold as u8,
            Feature::Underline => self.underline as u8,
            Feature::Italics => self.italics as u8,
            Feature::Shadow => self.shadow as u8,
            Feature::SizeIncrement => self.size_increment as u8,
            Feature::Color => self.color,
            Feature::Font => self.font,
        }
    }

    pub fn set(&mut self, feature: Feature, value: u8) {
        match feature {
            Feature::Bold => self.bold = value != 0,
            Feature::Underline => self.underline = value != 0,
            Feature::Italics => self.italics = value != 0,
            Feature::Shadow => self.shadow = value != 0,
            Feature::SizeIncrement => self.size_increment = value != 0,
            Feature::Color => self.color = value,
            Feature::Font => self.font = value,
        }
    }

    pub fn with(mut self, feature: Feature, value: u8) -> Self {
        self.set(feature, value);
        self
    }

    /// Number of features on which the two styles disagree.
    pub fn distance(&self, other: &FontStyle) -> u32 {
        Feature::ALL
            .iter()
            .filter(|&&f| self.get(f) != other.get(f))
            .count() as u32
    }
}

/// Number of feature events needed to turn `baseline` into `style`.
pub fn complexity(style: &FontStyle, baseline: &FontStyle) -> u32 {
    style.distance(baseline)
}

/// The feature values available in one task environment. Index 0 of both
/// lists is the plain-text value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub neediness_level: u32,
    pub colors: Vec<String>,
    pub fonts: Vec<String>,
}

impl Vocabulary {
    /// The full environment: 8 colors and 10 font families.
    pub fn standard() -> Self {
        let colors = ["black", "red", "orange", "green", "blue", "purple", "teal", "gray"];
        let fonts = [
            "Arial",
            "Times New Roman",
            "Courier New",
            "Georgia",
            "Verdana",
            "Comic Sans MS",
            "Impact",
            "Garamond",
            "Tahoma",
            "Trebuchet MS",
        ];
        Self {
            neediness_level: 0,
            colors: colors.iter().map(|s| s.to_string()).collect(),
            fonts: fonts.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The needy environment: 7 shades of red and 4 similar sans-serif fonts,
    /// which makes styles harder to tell apart.
    pub fn needy() -> Self {
        let colors = [
            "dark red", "maroon", "firebrick", "crimson", "red", "indian red", "tomato",
        ];
        let fonts = ["Arial", "Helvetica", "Verdana", "Tahoma"];
        Self {
            neediness_level: 1,
            colors: colors.iter().map(|s| s.to_string()).collect(),
            fonts: fonts.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn defaults() -> Vec<Vocabulary> {
        vec![Self::standard(), Self::needy()]
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.colors.is_empty() || self.fonts.is_empty() {
            return Err(TaskError::Infeasible(format!(
                "vocabulary for n{} needs at least one color and one font",
                self.neediness_level
            )));
        }
        if self.colors.len() > usize::from(u8::MAX) || self.fonts.len() > usize::from(u8::MAX) {
            return Err(TaskError::Infeasible("vocabulary too large".into()));
        }
        Ok(())
    }

    pub fn baseline(&self) -> FontStyle {
        FontStyle::PLAIN
    }

    /// Number of distinct values a feature can take here.
    pub fn cardinality(&self, feature: Feature) -> u8 {
        match feature {
            Feature::Color => self.colors.len() as u8,
            Feature::Font => self.fonts.len() as u8,
            _ => 2,
        }
    }

    pub fn check(&self, style: &FontStyle) -> Result<(), TaskError> {
        for feature in [Feature::Color, Feature::Font] {
            let value = style.get(feature);
            if value >= self.cardinality(feature) {
                return Err(TaskError::OutOfVocabulary { feature, value });
            }
        }
        Ok(())
    }

    /// Every style expressible in this vocabulary.
    pub fn styles(&self) -> impl Iterator<Item = FontStyle> + '_ {
        let colors = self.cardinality(Feature::Color);
        let fonts = self.cardinality(Feature::Font);
        (0u32..32).flat_map(move |flags| {
            (0..colors).flat_map(move |color| {
                (0..fonts).map(move |font| FontStyle {
                    bold: flags & 1 != 0,
                    underline: flags & 2 != 0,
                    italics: flags & 4 != 0,
                    shadow: flags & 8 != 0,
                    size_increment: flags & 16 != 0,
                    color,
                    font,
                })
            })
        })
    }

    pub fn style_count(&self) -> usize {
        32 * self.colors.len() * self.fonts.len()
    }

    pub fn random_style<R: Rng + ?Sized>(&self, rng: &mut R) -> FontStyle {
        let mut style = FontStyle::PLAIN;
        for feature in Feature::ALL {
            style.set(feature, rng.random_range(0..self.cardinality(feature)));
        }
        style
    }

    /// Features whose value can actually be changed away from plain.
    fn variable_features(&self) -> Vec<Feature> {
        Feature::ALL
            .into_iter()
            .filter(|&f| self.cardinality(f) >= 2)
            .collect()
    }

    /// A value for `feature` different from `current`, uniformly.
    fn other_value<R: Rng + ?Sized>(&self, feature: Feature, current: u8, rng: &mut R) -> u8 {
        let card = self.cardinality(feature);
        let pick = rng.random_range(0..card - 1);
        if pick >= current {
            pick + 1
        } else {
            pick
        }
    }
}

/// What the user wants the highlighted phrase to look like.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightGoal {
    pub target: FontStyle,
    pub baseline: FontStyle,
}

impl HighlightGoal {
    pub fn complexity(&self) -> u32 {
        complexity(&self.target, &self.baseline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Icon {
    pub style: FontStyle,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Toolbar {
    icons: Vec<Icon>,
}

impl Toolbar {
    pub fn new(icons: Vec<Icon>) -> Result<Self, TaskError> {
        if icons.is_empty() {
            return Err(TaskError::EmptyToolbar);
        }
        Ok(Self { icons })
    }

    pub fn icons(&self) -> &[Icon] {
        &self.icons
    }

    /// `L(t)`.
    pub fn length(&self) -> u32 {
        self.icons.len() as u32
    }
}

/// Residual events after accepting `icon`: every feature it gets wrong costs
/// one fix, whether the feature was missing or set incorrectly.
fn residual(icon: &Icon, goal: &HighlightGoal) -> u32 {
    icon.style.distance(&goal.target)
}

/// `Q(i|g)`: events saved by accepting the icon instead of working manually.
pub fn quality_icon(icon: &Icon, goal: &HighlightGoal) -> u32 {
    goal.complexity().saturating_sub(residual(icon, goal))
}

/// `Q(t|g)`: the best savings any icon on the toolbar offers.
pub fn quality_toolbar(toolbar: &Toolbar, goal: &HighlightGoal) -> Result<u32, TaskError> {
    toolbar
        .icons
        .iter()
        .map(|icon| quality_icon(icon, goal))
        .max()
        .ok_or(TaskError::EmptyToolbar)
}

/// Actions left to do by hand after optionally accepting an icon.
pub fn simulate_manual_completion(goal: &HighlightGoal, accepted: Option<&Icon>) -> u32 {
    match accepted {
        Some(icon) => residual(icon, goal),
        None => goal.complexity(),
    }
}

/// A goal whose target differs from plain text in exactly `complexity`
/// features.
pub fn generate_goal(vocab: &Vocabulary, complexity: u32, seed: u64) -> Result<HighlightGoal, TaskError> {
    let features = vocab.variable_features();
    if complexity as usize > features.len() {
        return Err(TaskError::Infeasible(format!(
            "complexity {complexity} exceeds the {} changeable features of vocabulary n{}",
            features.len(),
            vocab.neediness_level
        )));
    }
    let mut rng = rng::from_seed(seed);
    let baseline = vocab.baseline();
    let mut target = baseline;
    for i in index::sample(&mut rng, features.len(), complexity as usize) {
        let feature = features[i];
        let value = vocab.other_value(feature, baseline.get(feature), &mut rng);
        target.set(feature, value);
    }
    Ok(HighlightGoal { target, baseline })
}

/// A style exactly `distance` features away from `from`.
fn style_at_distance<R: Rng + ?Sized>(
    vocab: &Vocabulary,
    from: FontStyle,
    distance: u32,
    rng: &mut R,
) -> Option<FontStyle> {
    let features = vocab.variable_features();
    if distance as usize > features.len() {
        return None;
    }
    let mut style = from;
    for i in index::sample(rng, features.len(), distance as usize) {
        let feature = features[i];
        style.set(feature, vocab.other_value(feature, from.get(feature), rng));
    }
    Some(style)
}

/// Draws `count` distinct styles satisfying `accept`, none of them in
/// `taken`. Uniform rejection sampling first; exhaustive enumeration when the
/// accepted set turns out to be sparse.
fn sample_distinct<R: Rng + ?Sized>(
    vocab: &Vocabulary,
    count: usize,
    taken: &HashSet<FontStyle>,
    accept: impl Fn(&FontStyle) -> bool,
    rng: &mut R,
) -> Option<Vec<FontStyle>> {
    let mut chosen: Vec<FontStyle> = Vec::with_capacity(count);
    let mut seen: HashSet<FontStyle> = taken.clone();
    let budget = 64 * count + 256;
    for _ in 0..budget {
        if chosen.len() == count {
            return Some(chosen);
        }
        let style = vocab.random_style(rng);
        if accept(&style) && seen.insert(style) {
            chosen.push(style);
        }
    }
    if chosen.len() == count {
        return Some(chosen);
    }
    let mut pool: Vec<FontStyle> = vocab
        .styles()
        .filter(|s| accept(s) && !taken.contains(s))
        .collect();
    if pool.len() < count {
        return None;
    }
    pool.shuffle(rng);
    pool.truncate(count);
    Some(pool)
}

/// A toolbar realizing outcome `o` for `goal`: `o.l` icons, one of which
/// saves exactly `o.q` events while the rest save strictly less (all zero
/// when `o.q = 0`). Icon order is a seeded shuffle.
pub fn generate_toolbar(
    o: &Outcome,
    goal: &HighlightGoal,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<Toolbar, TaskError> {
    let c = goal.complexity();
    if o.q > c {
        return Err(TaskError::Infeasible(format!(
            "quality {} exceeds goal complexity {c}",
            o.q
        )));
    }
    if o.l == 0 {
        return Err(TaskError::EmptyToolbar);
    }
    let mut rng = rng::from_seed(seed);
    let mut taken = HashSet::from([goal.baseline]);
    let mut styles = Vec::with_capacity(o.l as usize);

    let distractors = if o.q > 0 {
        let primary = style_at_distance(vocab, goal.target, c - o.q, &mut rng).ok_or_else(|| {
            TaskError::Infeasible(format!("no style with quality {} in vocabulary", o.q))
        })?;
        taken.insert(primary);
        styles.push(primary);
        o.l as usize - 1
    } else {
        o.l as usize
    };

    let q = o.q;
    let accept = |s: &FontStyle| {
        let quality = c.saturating_sub(s.distance(&goal.target));
        if q == 0 {
            quality == 0
        } else {
            quality < q
        }
    };
    let rest = sample_distinct(vocab, distractors, &taken, accept, &mut rng).ok_or_else(|| {
        TaskError::Infeasible(format!(
            "vocabulary n{} has too few distractor styles for {} icons",
            vocab.neediness_level, o.l
        ))
    })?;
    styles.extend(rest);
    styles.shuffle(&mut rng);
    Toolbar::new(styles.into_iter().map(|style| Icon { style }).collect())
}

const SENTENCES: &[&str] = &[
    "The patient was given a new treatment plan after the first visit",
    "Quarterly revenue grew faster than the board had expected",
    "Photosynthesis converts light energy into chemical energy",
    "Every slide should carry a single clear message",
    "The committee approved the budget with minor changes",
    "Glaciers retreat when summer melt exceeds winter snowfall",
    "Our prototype reduces setup time by half",
    "Encryption keys must be rotated on a fixed schedule",
];

/// One highlighting exercise: match the styled phrase in the exemplar
/// sentence, optionally helped by a toolbar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub sentence: String,
    /// Word range `[start, end)` to be highlighted.
    pub highlight_span: (usize, usize),
    pub goal: HighlightGoal,
    pub toolbar: Option<Toolbar>,
    pub neediness: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
}

impl TaskSpec {
    pub fn highlighted_phrase(&self) -> String {
        let (start, end) = self.highlight_span;
        self.sentence
            .split_whitespace()
            .skip(start)
            .take(end - start)
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Checks a completion against the goal and computes the residual
    /// effort the server records.
    pub fn evaluate(&self, completion: &TaskCompletion) -> Result<CompletionRecord, TaskError> {
        if completion.final_style != self.goal.target {
            return Err(TaskError::InvalidCompletion(
                "final style does not match the target".into(),
            ));
        }
        let icon = match completion.accepted_icon {
            Some(i) => {
                let toolbar = self.toolbar.as_ref().ok_or_else(|| {
                    TaskError::InvalidCompletion("icon accepted but no toolbar was shown".into())
                })?;
                Some(*toolbar.icons().get(i).ok_or_else(|| {
                    TaskError::InvalidCompletion(format!("icon {i} is not on the toolbar"))
                })?)
            }
            None => None,
        };
        let residual = simulate_manual_completion(&self.goal, icon.as_ref());
        Ok(CompletionRecord {
            accepted_icon: completion.accepted_icon,
            residual,
            reported_events: completion.manual_events,
            saved: self.goal.complexity().saturating_sub(residual),
        })
    }
}

/// What a respondent submits after finishing a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCompletion {
    pub accepted_icon: Option<usize>,
    pub manual_events: u32,
    pub final_style: FontStyle,
}

/// Server-side view of a completed task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub accepted_icon: Option<usize>,
    /// Manual events required after the accepted icon (or with none).
    pub residual: u32,
    pub reported_events: u32,
    pub saved: u32,
}

/// Builds tasks for outcomes from the configured vocabularies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFactory {
    pub vocabularies: Vec<Vocabulary>,
    pub complexity: u32,
}

impl Default for TaskFactory {
    fn default() -> Self {
        Self { vocabularies: Vocabulary::defaults(), complexity: 4 }
    }
}

impl TaskFactory {
    pub fn vocabulary(&self, neediness: u32) -> Result<&Vocabulary, TaskError> {
        self.vocabularies
            .iter()
            .find(|v| v.neediness_level == neediness)
            .ok_or(TaskError::MissingVocabulary(neediness))
    }

    fn frame(&self, seed: u64) -> (String, (usize, usize)) {
        let mut rng = rng::from_seed(seed);
        let sentence = SENTENCES[rng.random_range(0..SENTENCES.len())];
        let words = sentence.split_whitespace().count();
        let width = rng.random_range(1..=2usize).min(words);
        let start = rng.random_range(0..=words - width);
        (sentence.to_string(), (start, start + width))
    }

    /// A task experienced under outcome `o`.
    pub fn task(&self, o: &Outcome, seed: u64) -> Result<TaskSpec, TaskError> {
        let vocab = self.vocabulary(o.n)?;
        let goal = generate_goal(vocab, self.complexity, rng::derive(seed, 1))?;
        let toolbar = generate_toolbar(o, &goal, vocab, rng::derive(seed, 2))?;
        let (sentence, highlight_span) = self.frame(rng::derive(seed, 3));
        Ok(TaskSpec {
            sentence,
            highlight_span,
            goal,
            toolbar: Some(toolbar),
            neediness: o.n,
            outcome: Some(*o),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain() -> FontStyle {
        FontStyle::PLAIN
    }

    #[test]
    fn complexity_counts_differing_features() {
        let bold_italic = plain().with(Feature::Bold, 1).with(Feature::Italics, 1);
        assert_eq!(complexity(&bold_italic, &plain()), 2);
        assert_eq!(complexity(&plain(), &plain()), 0);
        let vocab = Vocabulary::standard();
        let red = vocab.colors.iter().position(|c| c == "red").unwrap() as u8;
        let arial_idx = vocab.fonts.iter().position(|f| f == "Times New Roman").unwrap() as u8;
        let style = plain()
            .with(Feature::Bold, 1)
            .with(Feature::Underline, 1)
            .with(Feature::Color, red)
            .with(Feature::Font, arial_idx);
        assert_eq!(complexity(&style, &plain()), 4);
    }

    fn goal4() -> HighlightGoal {
        HighlightGoal {
            target: plain()
                .with(Feature::Bold, 1)
                .with(Feature::Italics, 1)
                .with(Feature::Color, 3)
                .with(Feature::Font, 2),
            baseline: plain(),
        }
    }

    #[test]
    fn icon_quality_examples() {
        let g = goal4();
        assert_eq!(quality_icon(&Icon { style: g.target }, &g), 4);
        let nothing = Icon { style: plain() };
        assert_eq!(quality_icon(&nothing, &g), 0);
        // three right, the fourth missing, one extra wrong flag
        let partial = Icon {
            style: plain()
                .with(Feature::Bold, 1)
                .with(Feature::Italics, 1)
                .with(Feature::Color, 3)
                .with(Feature::Shadow, 1),
        };
        assert_eq!(quality_icon(&partial, &g), 2);
        // sharing no features and adding wrong ones never goes negative
        let awful = Icon {
            style: plain()
                .with(Feature::Underline, 1)
                .with(Feature::Shadow, 1)
                .with(Feature::Color, 5),
        };
        assert_eq!(quality_icon(&awful, &g), 0);
    }

    #[test]
    fn toolbar_quality_is_max() {
        let g = goal4();
        let q2 = Icon { style: plain().with(Feature::Bold, 1).with(Feature::Italics, 1) };
        let q4 = Icon { style: g.target };
        let t = Toolbar::new(vec![q2, q4]).unwrap();
        assert_eq!(quality_toolbar(&t, &g).unwrap(), 4);
        let single = Toolbar::new(vec![q2]).unwrap();
        assert_eq!(quality_toolbar(&single, &g).unwrap(), 2);
        assert_eq!(Toolbar::new(vec![]), Err(TaskError::EmptyToolbar));
    }

    #[test]
    fn manual_completion() {
        let g = goal4();
        assert_eq!(simulate_manual_completion(&g, None), 4);
        assert_eq!(simulate_manual_completion(&g, Some(&Icon { style: g.target })), 0);
        let q2 = Icon { style: plain().with(Feature::Bold, 1).with(Feature::Italics, 1) };
        assert_eq!(simulate_manual_completion(&g, Some(&q2)), 2);
    }

    #[test]
    fn goals_have_requested_complexity() {
        let vocab = Vocabulary::standard();
        for seed in 0..1000 {
            let g = generate_goal(&vocab, 4, seed).unwrap();
            assert_eq!(g.complexity(), 4);
            vocab.check(&g.target).unwrap();
        }
        let g = generate_goal(&vocab, 0, 3).unwrap();
        assert_eq!(g.target, g.baseline);
        assert!(matches!(generate_goal(&vocab, 8, 0), Err(TaskError::Infeasible(_))));
        assert_eq!(generate_goal(&vocab, 4, 11), generate_goal(&vocab, 4, 11));
    }

    #[test]
    fn vocabulary_sizes() {
        let std = Vocabulary::standard();
        let needy = Vocabulary::needy();
        assert_eq!((std.colors.len(), std.fonts.len()), (8, 10));
        assert_eq!((needy.colors.len(), needy.fonts.len()), (7, 4));
        assert_eq!(std.styles().count(), 32 * 8 * 10);
        assert_eq!(needy.styles().count(), needy.style_count());
    }

    #[test]
    fn anchor_toolbars() {
        let vocab = Vocabulary::standard();
        let g = generate_goal(&vocab, 4, 5).unwrap();
        let best = generate_toolbar(&Outcome::new(0, 1, 4), &g, &vocab, 1).unwrap();
        assert_eq!(best.icons(), &[Icon { style: g.target }]);

        let needy = Vocabulary::needy();
        let g = generate_goal(&needy, 4, 5).unwrap();
        let worst = generate_toolbar(&Outcome::new(1, 10, 0), &g, &needy, 1).unwrap();
        assert_eq!(worst.length(), 10);
        assert!(worst.icons().iter().all(|i| quality_icon(i, &g) == 0));
    }

    #[test]
    fn generated_toolbars_hit_their_outcome() {
        let space = crate::outcome::OutcomeSpace::default();
        let factory = TaskFactory::default();
        for seed in 0..200u64 {
            for o in space.enumerate() {
                let vocab = factory.vocabulary(o.n).unwrap();
                let g = generate_goal(vocab, 4, seed).unwrap();
                let t = generate_toolbar(&o, &g, vocab, seed ^ 0xabc).unwrap();
                assert_eq!(t.length(), o.l);
                assert_eq!(quality_toolbar(&t, &g).unwrap(), o.q);
                let at_max = t.icons().iter().filter(|i| quality_icon(i, &g) == o.q).count();
                if o.q > 0 {
                    assert_eq!(at_max, 1, "{o} seed {seed}");
                }
                let distinct: HashSet<_> = t.icons().iter().collect();
                assert_eq!(distinct.len(), t.icons().len());
            }
        }
    }

    #[test]
    fn toolbar_infeasible_cases() {
        let vocab = Vocabulary::standard();
        let g = generate_goal(&vocab, 2, 0).unwrap();
        assert!(matches!(
            generate_toolbar(&Outcome::new(0, 1, 4), &g, &vocab, 0),
            Err(TaskError::Infeasible(_))
        ));
        let tiny = Vocabulary { neediness_level: 0, colors: vec!["black".into()], fonts: vec!["Arial".into()] };
        let g = generate_goal(&tiny, 4, 0).unwrap();
        // only 32 styles exist, far fewer than 40 quality-0 distractors
        assert!(matches!(
            generate_toolbar(&Outcome::new(0, 40, 0), &g, &tiny, 0),
            Err(TaskError::Infeasible(_))
        ));
    }

    #[test]
    fn task_evaluation() {
        let factory = TaskFactory::default();
        let task = factory.task(&Outcome::new(0, 5, 2), 9).unwrap();
        assert!(!task.highlighted_phrase().is_empty());
        let toolbar = task.toolbar.as_ref().unwrap();
        let best = toolbar
            .icons()
            .iter()
            .position(|i| quality_icon(i, &task.goal) == 2)
            .unwrap();
        let done = TaskCompletion { accepted_icon: Some(best), manual_events: 2, final_style: task.goal.target };
        let rec = task.evaluate(&done).unwrap();
        assert_eq!((rec.residual, rec.saved), (2, 2));
        let unfinished = TaskCompletion { final_style: plain(), ..done };
        assert!(task.evaluate(&unfinished).is_err());
        let bogus = TaskCompletion { accepted_icon: Some(99), ..done };
        assert!(task.evaluate(&bogus).is_err());
    }
}
