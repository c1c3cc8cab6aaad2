//! Joins per-question scores with human ratings and computes the correlation,
//! regression and paired t-test tables.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::explain::{Level, ScoreKind};
use crate::stats::{ols_fit_eval, paired_ttest_upper, pearson, OlsEval, PairedTTest};
use crate::{Error, Result};

/// The seven rating dimensions of the survey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Dimension {
    Explainability,
    Informativeness,
    Effectiveness,
    Persuasiveness,
    Transparency,
    Trustworthiness,
    Satisfaction,
}

impl Dimension {
    pub const ALL: [Dimension; 7] = [
        Dimension::Explainability,
        Dimension::Informativeness,
        Dimension::Effectiveness,
        Dimension::Persuasiveness,
        Dimension::Transparency,
        Dimension::Trustworthiness,
        Dimension::Satisfaction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Explainability => "Explainability",
            Dimension::Informativeness => "Informativeness",
            Dimension::Effectiveness => "Effectiveness",
            Dimension::Persuasiveness => "Persuasiveness",
            Dimension::Transparency => "Transparency",
            Dimension::Trustworthiness => "Trustworthiness",
            Dimension::Satisfaction => "Satisfaction",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown rating dimension `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatingRow {
    pub question_id: String,
    pub explanation_id: String,
    pub dimension: Dimension,
    pub participant_id: String,
    /// Likert rating 1..=5.
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatingTable {
    rows: Vec<RatingRow>,
}

impl RatingTable {
    pub fn new(rows: Vec<RatingRow>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| !(1..=5).contains(&r.rating)) {
            return Err(Error::invalid(format!(
                "rating {} from participant {} is outside 1..=5",
                bad.rating, bad.participant_id
            )));
        }
        Ok(RatingTable { rows })
    }

    pub fn rows(&self) -> &[RatingRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// The four scores of one explanation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreSet {
    pub cf: f64,
    pub cf_approx: f64,
    pub item_sim: f64,
    pub genre_jacc: f64,
}

impl ScoreSet {
    pub fn get(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::Cf => self.cf,
            ScoreKind::CfApprox => self.cf_approx,
            ScoreKind::ItemSim => self.item_sim,
            ScoreKind::GenreJacc => self.genre_jacc,
        }
    }
}

/// One survey question: the explanation chosen for `(selected_by, level)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoredQuestion {
    pub question_id: String,
    pub explanation_id: String,
    pub selected_by: ScoreKind,
    pub level: Level,
    pub scores: ScoreSet,
}

/// The t-test comparisons: `a` is tested as rated higher than `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Comparison {
    CfHighVsCfLow,
    CfHighVsItemSimHigh,
    CfHighVsGenreJaccHigh,
}

impl Comparison {
    pub const ALL: [Comparison; 3] = [
        Comparison::CfHighVsCfLow,
        Comparison::CfHighVsItemSimHigh,
        Comparison::CfHighVsGenreJaccHigh,
    ];

    pub fn groups(self) -> ((ScoreKind, Level), (ScoreKind, Level)) {
        let cf_high = (ScoreKind::Cf, Level::High);
        match self {
            Comparison::CfHighVsCfLow => (cf_high, (ScoreKind::Cf, Level::Low)),
            Comparison::CfHighVsItemSimHigh => (cf_high, (ScoreKind::ItemSim, Level::High)),
            Comparison::CfHighVsGenreJaccHigh => (cf_high, (ScoreKind::GenreJacc, Level::High)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::CfHighVsCfLow => "cf-high-vs-cf-low",
            Comparison::CfHighVsItemSimHigh => "cf-high-vs-item-sim-high",
            Comparison::CfHighVsGenreJaccHigh => "cf-high-vs-genre-jacc-high",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrelationCell {
    pub kind: ScoreKind,
    pub dimension: Dimension,
    pub n: usize,
    /// `None` when the coefficient is undefined; `note` says why.
    pub value: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegressionCell {
    pub kind: ScoreKind,
    pub dimension: Dimension,
    pub fit: Option<OlsEval>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TTestCell {
    pub comparison: Comparison,
    pub dimension: Dimension,
    /// Participants who rated both groups in this dimension.
    pub n: usize,
    pub result: Option<PairedTTest>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnalysisReport {
    pub n_explanations: usize,
    pub n_participants: usize,
    /// Row-major over `ScoreKind::ALL x Dimension::ALL`.
    pub correlations: Vec<CorrelationCell>,
    pub regressions: Vec<RegressionCell>,
    /// Row-major over `Comparison::ALL x Dimension::ALL`.
    pub ttests: Vec<TTestCell>,
}

impl AnalysisReport {
    pub fn correlation(&self, kind: ScoreKind, dimension: Dimension) -> Option<f64> {
        self.correlations
            .iter()
            .find(|c| c.kind == kind && c.dimension == dimension)
            .and_then(|c| c.value)
    }

    pub fn ttest(&self, comparison: Comparison, dimension: Dimension) -> Option<&PairedTTest> {
        self.ttests
            .iter()
            .find(|c| c.comparison == comparison && c.dimension == dimension)
            .and_then(|c| c.result.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            train_fraction: 0.7,
            split_seed: 0,
        }
    }
}

fn average(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Builds the analysis tables.
///
/// Ratings are first averaged over participants per `(explanation,
/// dimension)`; correlations and regressions then run over explanations. The
/// t-tests pair each participant's (averaged) ratings of the two compared
/// question groups. Cells whose statistic is undefined (zero variance, too few
/// points) carry `None` and a note instead of failing the whole report.
pub fn build_report(
    questions: &[ScoredQuestion],
    ratings: &RatingTable,
    options: ReportOptions,
) -> Result<AnalysisReport> {
    if ratings.is_empty() {
        return Err(Error::invalid("rating table is empty"));
    }
    let by_question: BTreeMap<&str, &ScoredQuestion> = questions
        .iter()
        .map(|q| (q.question_id.as_str(), q))
        .collect();
    if by_question.len() != questions.len() {
        return Err(Error::invalid("duplicate question id"));
    }
    let mut scores_by_expl: BTreeMap<&str, ScoreSet> = BTreeMap::new();
    for q in questions {
        if let Some(prev) = scores_by_expl.insert(&q.explanation_id, q.scores) {
            if prev != q.scores {
                return Err(Error::invalid(format!(
                    "explanation {} appears with two different score sets",
                    q.explanation_id
                )));
            }
        }
    }

    let mut unmatched = BTreeSet::new();
    for r in ratings.rows() {
        match by_question.get(r.question_id.as_str()) {
            Some(q) if q.explanation_id == r.explanation_id => {}
            _ => {
                unmatched.insert(format!("{}/{}", r.question_id, r.explanation_id));
            }
        }
    }
    if !unmatched.is_empty() {
        let list: Vec<String> = unmatched.into_iter().collect();
        return Err(Error::invalid(format!(
            "ratings reference unknown question/explanation ids: {}",
            list.join(", ")
        )));
    }

    // (explanation, dimension) -> ratings; (participant, kind, level, dimension) -> ratings
    let mut per_expl: BTreeMap<(&str, Dimension), Vec<f64>> = BTreeMap::new();
    let mut per_participant: BTreeMap<(&str, ScoreKind, Level, Dimension), Vec<f64>> =
        BTreeMap::new();
    let mut participants = BTreeSet::new();
    for r in ratings.rows() {
        let q = by_question[r.question_id.as_str()];
        per_expl
            .entry((r.explanation_id.as_str(), r.dimension))
            .or_default()
            .push(r.rating as f64);
        per_participant
            .entry((
                r.participant_id.as_str(),
                q.selected_by,
                q.level,
                r.dimension,
            ))
            .or_default()
            .push(r.rating as f64);
        participants.insert(r.participant_id.as_str());
    }
    let rated_expls: BTreeSet<&str> = per_expl.keys().map(|k| k.0).collect();

    let mut correlations = Vec::new();
    let mut regressions = Vec::new();
    for kind in ScoreKind::ALL {
        for dimension in Dimension::ALL {
            let pairs: Vec<(f64, f64)> = per_expl
                .iter()
                .filter(|((_, d), _)| *d == dimension)
                .map(|((e, _), rs)| (scores_by_expl[e].get(kind), average(rs)))
                .collect();
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let (value, note) = split(pearson(&xs, &ys));
            correlations.push(CorrelationCell {
                kind,
                dimension,
                n: pairs.len(),
                value,
                note,
            });
            let (fit, note) = split(ols_fit_eval(
                &pairs,
                options.train_fraction,
                options.split_seed,
            ));
            regressions.push(RegressionCell {
                kind,
                dimension,
                fit,
                note,
            });
        }
    }

    let mut ttests = Vec::new();
    for comparison in Comparison::ALL {
        let ((ka, la), (kb, lb)) = comparison.groups();
        for dimension in Dimension::ALL {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for &p in &participants {
                let ra = per_participant.get(&(p, ka, la, dimension));
                let rb = per_participant.get(&(p, kb, lb, dimension));
                if let (Some(ra), Some(rb)) = (ra, rb) {
                    a.push(average(ra));
                    b.push(average(rb));
                }
            }
            let (result, note) = split(paired_ttest_upper(&a, &b));
            ttests.push(TTestCell {
                comparison,
                dimension,
                n: a.len(),
                result,
                note,
            });
        }
    }

    Ok(AnalysisReport {
        n_explanations: rated_expls.len(),
        n_participants: participants.len(),
        correlations,
        regressions,
        ttests,
    })
}

fn split<T>(r: Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}
