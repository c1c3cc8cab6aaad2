//! On-disk formats: the score report CSV, the survey bundle JSON, the rating
//! table CSV and the analysis tables.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use cfprox_core::analysis::{
    AnalysisReport, Comparison, Dimension, RatingRow, RatingTable, ScoreSet, ScoredQuestion,
};
use cfprox_core::counterfactual::{CfResult, Strategy};
use cfprox_core::explain::{Level, ScoreKind};
use cfprox_core::{ItemId, UserId};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

pub const SCORE_HEADER: [&str; 15] = [
    "explanation_id",
    "user_id",
    "recommended_item",
    "explaining_items",
    "cf",
    "cf_approx",
    "item_sim",
    "genre_jacc",
    "cf_qualitative",
    "cf_approx_qualitative",
    "selection_labels",
    "cf_seconds",
    "cf_approx_seconds",
    "item_sim_seconds",
    "genre_jacc_seconds",
];

pub const RATINGS_HEADER: [&str; 5] = [
    "question_id",
    "explanation_id",
    "dimension",
    "participant_id",
    "rating",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub cf: f64,
    pub cf_approx: f64,
    pub item_sim: f64,
    pub genre_jacc: f64,
}

/// Objective trace summary of one full retrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainStats {
    pub half_sweeps: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub max_increase: f64,
    pub monotone: bool,
}

/// One row of the score report: a candidate explanation with all four scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub explanation_id: String,
    pub user: UserId,
    pub recommended_item: ItemId,
    pub items: Vec<ItemId>,
    pub cf: CfResult,
    pub cf_approx: CfResult,
    pub item_sim: f64,
    pub genre_jacc: f64,
    /// `kind:level` for every selection that picked this candidate.
    pub labels: Vec<String>,
    pub seconds: Timings,
    pub retrain: Option<RetrainStats>,
}

impl CandidateScore {
    pub fn scores(&self) -> ScoreSet {
        ScoreSet {
            cf: self.cf.score,
            cf_approx: self.cf_approx.score,
            item_sim: self.item_sim,
            genre_jacc: self.genre_jacc,
        }
    }
}

pub fn join_items(items: &[ItemId]) -> String {
    items
        .iter()
        .map(|i| i.0.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

pub fn score_report_csv(rows: &[CandidateScore]) -> String {
    let mut out = SCORE_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.explanation_id,
            r.user.0,
            r.recommended_item.0,
            join_items(&r.items),
            r.cf.score,
            r.cf_approx.score,
            r.item_sim,
            r.genre_jacc,
            r.cf.qualitative,
            r.cf_approx.qualitative,
            r.labels.join("|"),
            r.seconds.cf,
            r.seconds.cf_approx,
            r.seconds.item_sim,
            r.seconds.genre_jacc,
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieRef {
    pub item: ItemId,
    pub title: String,
    pub genres: Vec<String>,
}

/// Constants the bundle was generated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub embedding_dim: usize,
    pub iterations: usize,
    pub regularization: f64,
    pub init_scale: f64,
    pub train_seed: u64,
    pub history_size: usize,
    pub popularity_quantile: f64,
    pub popularity_threshold: usize,
    pub imputed_rating: f64,
    pub history_seed: u64,
    pub explanation_size: usize,
    pub candidates_scored: usize,
    pub cf_strategy: Strategy,
    pub approx_strategy: Strategy,
    pub finetune_iterations: usize,
    pub explanations_emitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleExplanation {
    pub question_id: String,
    pub explanation_id: String,
    pub selected_by: ScoreKind,
    pub level: Level,
    pub items: Vec<MovieRef>,
    pub scores: ScoreSet,
    pub cf_qualitative: bool,
    pub cf_benchmark_item: ItemId,
    pub cf_approx_qualitative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Spearman rank correlation of CF and CF^A over all candidates.
    pub spearman_cf_vs_cf_approx: Option<f64>,
    pub base_objective_monotone: bool,
    pub retrains_checked: usize,
    pub retrain_objective_monotone: bool,
}

/// Everything a survey needs: the synthetic history, the recommendation and
/// the twelve selected explanations with all cross-scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyBundle {
    pub schema_version: u32,
    pub config_hash: String,
    pub protocol: Protocol,
    pub user: UserId,
    pub history: Vec<MovieRef>,
    pub recommended: MovieRef,
    pub explanations: Vec<BundleExplanation>,
    pub diagnostics: Diagnostics,
}

impl SurveyBundle {
    pub fn questions(&self) -> Vec<ScoredQuestion> {
        self.explanations
            .iter()
            .map(|e| ScoredQuestion {
                question_id: e.question_id.clone(),
                explanation_id: e.explanation_id.clone(),
                selected_by: e.selected_by,
                level: e.level,
                scores: e.scores,
            })
            .collect()
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let b: SurveyBundle = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if b.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(format!(
                "unsupported bundle schema version {}",
                b.schema_version
            ));
        }
        Ok(b)
    }
}

/// Reads a rating table CSV.
pub fn read_ratings(path: &Path) -> Result<RatingTable> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let parse_err = |line: u64, column: usize, message: String| CliError::Parse {
        file: path.into(),
        line,
        column,
        message,
    };
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, 1, e.to_string()))?;
    if header.iter().map(str::trim).ne(RATINGS_HEADER) {
        return Err(parse_err(
            1,
            1,
            format!("expected header `{}`", RATINGS_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec =
            rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), 1, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != RATINGS_HEADER.len() {
            return Err(parse_err(
                line,
                rec.len() + 1,
                format!("expected 5 columns, found {}", rec.len()),
            ));
        }
        let dimension: Dimension = rec[2]
            .parse()
            .map_err(|e: cfprox_core::Error| parse_err(line, 3, e.to_string()))?;
        let rating: u8 = rec[4]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, 5, format!("cannot parse `{}` as a rating", &rec[4])))?;
        if !(1..=5).contains(&rating) {
            return Err(parse_err(line, 5, format!("rating {rating} outside 1..=5")));
        }
        rows.push(RatingRow {
            question_id: rec[0].trim().to_string(),
            explanation_id: rec[1].trim().to_string(),
            dimension,
            participant_id: rec[3].trim().to_string(),
            rating,
        });
    }
    Ok(RatingTable::new(rows)?)
}

pub fn ratings_csv(table: &RatingTable) -> String {
    let mut out = RATINGS_HEADER.join(",");
    out.push('\n');
    for r in table.rows() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.question_id, r.explanation_id, r.dimension, r.participant_id, r.rating
        );
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn dimension_header(first: &[&str]) -> String {
    let mut cols: Vec<&str> = first.to_vec();
    cols.extend(Dimension::ALL.iter().map(|d| d.as_str()));
    cols.join(",") + "\n"
}

/// Score kinds as rows, dimensions as columns.
pub fn correlation_csv(report: &AnalysisReport) -> String {
    let mut out = dimension_header(&["score"]);
    for kind in ScoreKind::ALL {
        let vals: Vec<String> = Dimension::ALL
            .iter()
            .map(|&d| cell(report.correlation(kind, d)))
            .collect();
        let _ = writeln!(out, "{kind},{}", vals.join(","));
    }
    out
}

/// Held-out MSE of the one-feature regressions, same layout as the
/// correlation table.
pub fn mse_csv(report: &AnalysisReport) -> String {
    let mut out = dimension_header(&["score"]);
    for kind in ScoreKind::ALL {
        let vals: Vec<String> = Dimension::ALL
            .iter()
            .map(|&d| {
                let fit = report
                    .regressions
                    .iter()
                    .find(|c| c.kind == kind && c.dimension == d)
                    .and_then(|c| c.fit);
                cell(fit.map(|f| f.test_mse))
            })
            .collect();
        let _ = writeln!(out, "{kind},{}", vals.join(","));
    }
    out
}

/// One block of rows per comparison (t, p, n, group means and deviations),
/// dimensions as columns.
pub fn ttest_csv(report: &AnalysisReport) -> String {
    let mut out = dimension_header(&["comparison", "statistic"]);
    for comparison in Comparison::ALL {
        let stats: [(&str, fn(&cfprox_core::stats::PairedTTest) -> f64); 7] = [
            ("t", |r| r.t),
            ("p", |r| r.p),
            ("n", |r| r.n as f64),
            ("mean_a", |r| r.mean_a),
            ("mean_b", |r| r.mean_b),
            ("sd_a", |r| r.sd_a),
            ("sd_b", |r| r.sd_b),
        ];
        for (name, get) in stats {
            let vals: Vec<String> = Dimension::ALL
                .iter()
                .map(|&d| cell(report.ttest(comparison, d).map(get)))
                .collect();
            let _ = writeln!(out, "{},{name},{}", comparison.as_str(), vals.join(","));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn ratings_csv_round_trips() {
        let rows = vec![
            RatingRow {
                question_id: "q01".into(),
                explanation_id: "e003".into(),
                dimension: Dimension::Transparency,
                participant_id: "p7".into(),
                rating: 4,
            },
            RatingRow {
                question_id: "q02".into(),
                explanation_id: "e010".into(),
                dimension: Dimension::Satisfaction,
                participant_id: "p7".into(),
                rating: 1,
            },
        ];
        let table = RatingTable::new(rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ratings.csv");
        fs::write(&p, ratings_csv(&table)).unwrap();
        assert_eq!(read_ratings(&p).unwrap(), table);
    }

    #[test]
    fn bad_rating_rows_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(
            &p,
            "question_id,explanation_id,dimension,participant_id,rating\nq1,e1,Helpfulness,p,3\n",
        )
        .unwrap();
        assert!(matches!(
            read_ratings(&p),
            Err(CliError::Parse {
                line: 2,
                column: 3,
                ..
            })
        ));
        fs::write(
            &p,
            "question_id,explanation_id,dimension,participant_id,rating\nq1,e1,Satisfaction,p,9\n",
        )
        .unwrap();
        assert!(matches!(
            read_ratings(&p),
            Err(CliError::Parse {
                line: 2,
                column: 5,
                ..
            })
        ));
    }
}
