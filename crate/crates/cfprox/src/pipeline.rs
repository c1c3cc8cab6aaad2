//! The five pipeline stages. Every stage writes into `<out>/run-<hash>`, where
//! the hash covers the data files and every result-affecting config value.
//! Artifacts are write-once: a stage whose outputs already exist reuses them,
//! and an attempt to replace an artifact with different bytes is refused.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cfprox_core::analysis::{build_report, AnalysisReport, ReportOptions};
use cfprox_core::baselines::{genre_jacc, genre_jaccard, item_cosine, item_sim};
use cfprox_core::counterfactual::{
    cf_evaluate, recommend, CfResult, CounterfactualProvider, Explanation, FullRetrain, Strategy,
    WarmStartFinetune,
};
use cfprox_core::dataset::{InteractionDataset, SyntheticHistory};
use cfprox_core::explain::{
    enumerate_candidates, select_baseline_triple, select_triple, Level, ScoreKind, SelectionTriple,
};
use cfprox_core::mf::{train_with_trace, FactorModel, TrainTrace};
use cfprox_core::stats::spearman;
use cfprox_core::{ItemId, UserId};
use log::{info, warn};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::movielens::{load_movielens, write_movielens};
use crate::report::{
    correlation_csv, mse_csv, read_ratings, score_report_csv, ttest_csv, BundleExplanation,
    CandidateScore, Diagnostics, MovieRef, Protocol, RetrainStats, SurveyBundle, Timings,
    BUNDLE_SCHEMA_VERSION,
};

pub const CONFIG_ECHO: &str = "config.json";
pub const SUMMARY: &str = "summary.json";
pub const SNAPSHOT_RATINGS: &str = "ratings.csv";
pub const SNAPSHOT_MOVIES: &str = "movies.csv";
pub const HISTORY: &str = "history.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_TRACE: &str = "train_trace.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const SCORE_STATE: &str = "scores.json";
pub const SCORE_REPORT: &str = "scores.csv";
pub const BUNDLE: &str = "bundle.json";

/// Counts printed and cached by `ingest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub config_hash: String,
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub rated_items: usize,
    pub items_with_genres: usize,
    /// Fraction of items carrying at least one genre.
    pub genre_coverage: f64,
    pub distinct_genres: usize,
}

impl DatasetSummary {
    pub fn of(dataset: &InteractionDataset, config_hash: &str) -> Self {
        let counts = dataset.item_counts();
        let with_genres = dataset.genres().values().filter(|g| !g.is_empty()).count();
        let distinct: std::collections::BTreeSet<&String> =
            dataset.genres().values().flatten().collect();
        DatasetSummary {
            config_hash: config_hash.to_string(),
            users: dataset.users().len(),
            items: dataset.items().len(),
            interactions: dataset.len(),
            rated_items: counts.values().filter(|&&c| c > 0).count(),
            items_with_genres: with_genres,
            genre_coverage: if dataset.items().is_empty() {
                0.0
            } else {
                with_genres as f64 / dataset.items().len() as f64
            },
            distinct_genres: distinct.len(),
        }
    }
}

/// The synthetic user as fixed by `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub popularity_threshold: usize,
    pub history: SyntheticHistory,
}

/// Outputs of `train`.
#[derive(Debug, Clone)]
pub struct Trained {
    pub dataset: InteractionDataset,
    pub history: HistoryRecord,
    pub model: FactorModel,
    pub trace: TrainTrace,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub kind: ScoreKind,
    pub level: Level,
    pub explanation_id: String,
    pub score: f64,
}

/// Everything `score` computes; cached as JSON so later stages (and re-runs)
/// never repeat the retrains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreState {
    pub config_hash: String,
    pub user: UserId,
    pub history: Vec<ItemId>,
    pub recommended_item: ItemId,
    pub popularity_threshold: usize,
    pub candidates: Vec<CandidateScore>,
    /// Ordered by score kind, then high/mean/low.
    pub selections: Vec<Selection>,
    pub spearman_cf_vs_cf_approx: Option<f64>,
    pub base_objective_monotone: bool,
    pub retrains_checked: usize,
    pub retrain_objective_monotone: bool,
    /// Wall-clock seconds of each whole pass over the candidates.
    pub pass_seconds: Timings,
}

impl ScoreState {
    pub fn candidate(&self, explanation_id: &str) -> Option<&CandidateScore> {
        self.candidates
            .iter()
            .find(|c| c.explanation_id == explanation_id)
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub dir: PathBuf,
    pub report: AnalysisReport,
}

pub struct Pipeline {
    config: PipelineConfig,
    hash: String,
    run_dir: PathBuf,
}

fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// Writes `bytes` unless the file already holds exactly these bytes; refuses
/// to replace different content.
pub fn write_once(path: &Path, bytes: &[u8]) -> Result<()> {
    match fs::read(path) {
        Ok(existing) if existing == bytes => return Ok(()),
        Ok(_) => {
            return Err(CliError::Data(format!(
                "{} already exists with different content; refusing to overwrite",
                path.display()
            )))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(CliError::io(path, e)),
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("artifact serializes");
    v.push(b'\n');
    v
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn stats_of(trace: &TrainTrace) -> RetrainStats {
    RetrainStats {
        half_sweeps: trace.sweeps.len(),
        initial_objective: trace.initial,
        final_objective: trace.final_objective(),
        max_increase: trace.max_increase(),
        monotone: trace.is_non_increasing(),
    }
}

fn movie(dataset: &InteractionDataset, item: ItemId) -> MovieRef {
    MovieRef {
        item,
        title: dataset.titles().get(&item).cloned().unwrap_or_default(),
        genres: dataset
            .genres()
            .get(&item)
            .map(|g| g.iter().cloned().collect())
            .unwrap_or_default(),
    }
}

struct CfPass {
    results: Vec<(CfResult, f64, Option<TrainTrace>)>,
    seconds: f64,
}

fn cf_pass(
    pool: &rayon::ThreadPool,
    dataset: &InteractionDataset,
    model: &FactorModel,
    candidates: &[Explanation],
    provider: &(dyn CounterfactualProvider + Sync),
) -> Result<CfPass> {
    let start = Instant::now();
    let results = pool.install(|| {
        candidates
            .par_iter()
            .map(|e| {
                let t = Instant::now();
                let out = cf_evaluate(dataset, model, e, provider)?;
                Ok((out.result, t.elapsed().as_secs_f64(), out.trace))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(CfPass {
        results,
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl Pipeline {
    /// Resolves the run directory for `config` under `out` and records the
    /// config there.
    pub fn new(config: PipelineConfig, out: &Path) -> Result<Self> {
        let hash = config.run_hash()?;
        let run_dir = out.join(format!("run-{hash}"));
        fs::create_dir_all(&run_dir).map_err(|e| CliError::io(&run_dir, e))?;
        let pipeline = Pipeline {
            config,
            hash,
            run_dir,
        };
        let mut echo = pipeline.config.clone();
        echo.runtime = Default::default();
        write_once(&pipeline.path(CONFIG_ECHO), &to_json(&echo))?;
        Ok(pipeline)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers())
            .build()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
    }

    /// Parses and validates the data files, caches a normalized snapshot and
    /// returns the summary.
    pub fn ingest(&self) -> Result<DatasetSummary> {
        self.ingested().map(|(_, s)| s)
    }

    fn ingested(&self) -> Result<(InteractionDataset, DatasetSummary)> {
        let (ratings, movies) = (self.path(SNAPSHOT_RATINGS), self.path(SNAPSHOT_MOVIES));
        let scale = self.config.rating_scale();
        let dataset = if ratings.exists() && movies.exists() {
            load_movielens(&ratings, &movies, scale)?
        } else {
            let d = load_movielens(&self.config.data.ratings, &self.config.data.movies, scale)?;
            if d.is_empty() {
                return Err(cfprox_core::Error::EmptyDataset.into());
            }
            let tmp = tempdir_in(&self.run_dir)?;
            let (tr, tm) = (tmp.join(SNAPSHOT_RATINGS), tmp.join(SNAPSHOT_MOVIES));
            write_movielens(&d, &tr, &tm)?;
            for (from, to) in [(tm, &movies), (tr, &ratings)] {
                fs::rename(&from, to).map_err(|e| CliError::io(to, e))?;
            }
            let _ = fs::remove_dir(&tmp);
            d
        };
        let summary = DatasetSummary::of(&dataset, &self.hash);
        write_once(&self.path(SUMMARY), &to_json(&summary))?;
        info!(
            "ingested {} users, {} items, {} interactions",
            summary.users, summary.items, summary.interactions
        );
        Ok((dataset, summary))
    }

    /// Samples the synthetic history, trains on the augmented data and writes
    /// the checkpoint and objective log.
    pub fn train(&self) -> Result<Trained> {
        let (base, _) = self.ingested()?;
        let (ckpt, hist_path, trace_path) = (
            self.path(CHECKPOINT),
            self.path(HISTORY),
            self.path(TRAIN_TRACE),
        );
        if ckpt.exists() && hist_path.exists() && trace_path.exists() {
            let history: HistoryRecord = read_json(&hist_path)?;
            let dataset = base.materialize(&history.history)?;
            return Ok(Trained {
                dataset,
                history,
                model: checkpoint::load(&ckpt)?,
                trace: read_json(&trace_path)?,
                checkpoint: ckpt,
            });
        }

        let h = &self.config.history;
        let threshold = base.popularity_threshold(h.popularity_quantile)?;
        let history =
            base.sample_history(h.size, h.popularity_quantile, h.imputed_rating, h.seed)?;
        info!(
            "history seed {}: user {} rates {} items with at least {threshold} ratings",
            h.seed,
            history.user.0,
            history.items.len()
        );
        let dataset = base.materialize(&history)?;
        let train = self.config.train_config();
        info!(
            "training d={} for {} iterations, init seed {}",
            train.embedding_dim, train.iterations, train.seed
        );
        let (model, trace) = train_with_trace(&dataset, &train)?;
        let mut log = String::from("iteration,side,objective\n");
        log.push_str(&format!("0,init,{}\n", trace.initial));
        for s in &trace.sweeps {
            info!(
                "iteration {} {:?}: objective {}",
                s.iteration, s.side, s.objective
            );
            let side = match s.side {
                cfprox_core::mf::Side::Items => "items",
                cfprox_core::mf::Side::Users => "users",
            };
            log.push_str(&format!("{},{side},{}\n", s.iteration, s.objective));
        }
        if !trace.is_non_increasing() {
            warn!("objective increased by up to {}", trace.max_increase());
        }
        let record = HistoryRecord {
            popularity_threshold: threshold,
            history,
        };
        write_once(&self.path(TRAIN_LOG), log.as_bytes())?;
        write_once(&trace_path, &to_json(&trace))?;
        write_once(&hist_path, &to_json(&record))?;
        write_once(&ckpt, &checkpoint::encode(&model))?;
        Ok(Trained {
            dataset,
            history: record,
            model,
            trace,
            checkpoint: ckpt,
        })
    }

    /// Scores every candidate explanation with all four scores and picks the
    /// selection triples.
    pub fn score(&self) -> Result<ScoreState> {
        let state_path = self.path(SCORE_STATE);
        if state_path.exists() {
            return read_json(&state_path);
        }
        let trained = self.train()?;
        let state = self.compute_scores(&trained)?;
        write_once(
            &self.path(SCORE_REPORT),
            score_report_csv(&state.candidates).as_bytes(),
        )?;
        write_once(&state_path, &to_json(&state))?;
        Ok(state)
    }

    fn compute_scores(&self, t: &Trained) -> Result<ScoreState> {
        let (dataset, model) = (&t.dataset, &t.model);
        let user = t.history.history.user;
        let history = &t.history.history.items;
        let rec = recommend(dataset, model, user)?;
        let set = enumerate_candidates(user, history, rec, self.config.explain.size)?;
        let candidates = &set.candidates;
        info!(
            "recommended item {}; scoring {} candidates",
            rec.0,
            candidates.len()
        );
        let pool = self.pool()?;

        let cf = cf_pass(&pool, dataset, model, candidates, &FullRetrain)?;
        info!("full-retrain pass: {:.2}s", cf.seconds);
        let approx_strategy = self.config.counterfactual.approx_strategy;
        let approx = match approx_strategy {
            Strategy::FullRetrain => CfPass {
                results: cf.results.clone(),
                seconds: cf.seconds,
            },
            Strategy::WarmStartFinetune => {
                let provider = WarmStartFinetune {
                    iterations: self.config.counterfactual.finetune_iterations,
                };
                cf_pass(&pool, dataset, model, candidates, &provider)?
            }
        };
        info!("{approx_strategy} pass: {:.2}s", approx.seconds);

        let mut rows = Vec::with_capacity(candidates.len());
        let (mut sim_total, mut jacc_total) = (0.0, 0.0);
        for (i, e) in candidates.iter().enumerate() {
            let t0 = Instant::now();
            let sim = item_sim(model, e)?;
            let t1 = Instant::now();
            let jacc = genre_jacc(dataset.genres(), e)?;
            let (sim_s, jacc_s) = (
                t1.duration_since(t0).as_secs_f64(),
                t1.elapsed().as_secs_f64(),
            );
            sim_total += sim_s;
            jacc_total += jacc_s;
            let (cf_res, cf_s, trace) = &cf.results[i];
            let (ap_res, ap_s, _) = &approx.results[i];
            rows.push(CandidateScore {
                explanation_id: format!("e{:03}", i + 1),
                user,
                recommended_item: rec,
                items: e.items().to_vec(),
                cf: *cf_res,
                cf_approx: *ap_res,
                item_sim: sim,
                genre_jacc: jacc,
                labels: Vec::new(),
                seconds: Timings {
                    cf: *cf_s,
                    cf_approx: *ap_s,
                    item_sim: sim_s,
                    genre_jacc: jacc_s,
                },
                retrain: trace.as_ref().map(stats_of),
            });
        }

        let per_item =
            |f: &dyn Fn(ItemId) -> cfprox_core::Result<f64>| -> Result<BTreeMap<ItemId, f64>> {
                history.iter().map(|&i| Ok((i, f(i)?))).collect()
            };
        let cos = per_item(&|i| item_cosine(model, i, rec))?;
        let jac = per_item(&|i| genre_jaccard(dataset.genres(), i, rec))?;
        let k = self.config.explain.size;
        let by = |f: fn(&CandidateScore) -> f64| -> Vec<(Explanation, f64)> {
            candidates
                .iter()
                .zip(&rows)
                .map(|(e, r)| (e.clone(), f(r)))
                .collect()
        };
        let triples: Vec<SelectionTriple> = vec![
            select_triple(ScoreKind::Cf, &by(|r| r.cf.score))?,
            select_triple(ScoreKind::CfApprox, &by(|r| r.cf_approx.score))?,
            select_baseline_triple(ScoreKind::ItemSim, user, rec, history, &cos, k)?,
            select_baseline_triple(ScoreKind::GenreJacc, user, rec, history, &jac, k)?,
        ];
        let mut selections = Vec::new();
        for triple in &triples {
            for level in Level::ALL {
                let (e, score) = triple.get(level);
                let idx = candidates.iter().position(|c| c == e).ok_or_else(|| {
                    CliError::Data(format!(
                        "selected explanation {:?} is not a candidate",
                        e.items()
                    ))
                })?;
                rows[idx]
                    .labels
                    .push(format!("{}:{level}", triple.score_kind));
                selections.push(Selection {
                    kind: triple.score_kind,
                    level,
                    explanation_id: rows[idx].explanation_id.clone(),
                    score,
                });
            }
        }

        let xs: Vec<f64> = rows.iter().map(|r| r.cf.score).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.cf_approx.score).collect();
        let rho = match spearman(&xs, &ys) {
            Ok(r) => Some(r),
            Err(e) => {
                warn!("CF/CF^A rank correlation undefined: {e}");
                None
            }
        };
        let retrain_monotone = rows.iter().all(|r| r.retrain.is_some_and(|s| s.monotone));
        if !retrain_monotone {
            warn!("objective increased during a counterfactual retrain");
        }
        Ok(ScoreState {
            config_hash: self.hash.clone(),
            user,
            history: history.clone(),
            recommended_item: rec,
            popularity_threshold: t.history.popularity_threshold,
            retrains_checked: rows.iter().filter(|r| r.retrain.is_some()).count(),
            candidates: rows,
            selections,
            spearman_cf_vs_cf_approx: rho,
            base_objective_monotone: t.trace.is_non_increasing(),
            retrain_objective_monotone: retrain_monotone,
            pass_seconds: Timings {
                cf: cf.seconds,
                cf_approx: approx.seconds,
                item_sim: sim_total,
                genre_jacc: jacc_total,
            },
        })
    }

    /// Writes the survey bundle (scoring first if needed).
    pub fn generate(&self) -> Result<SurveyBundle> {
        let state = self.score()?;
        let (dataset, _) = self.ingested()?;
        let c = &self.config;
        let protocol = Protocol {
            embedding_dim: c.train.embedding_dim,
            iterations: c.train.iterations,
            regularization: c.train.regularization,
            init_scale: c.train.init_scale,
            train_seed: c.train.seed,
            history_size: c.history.size,
            popularity_quantile: c.history.popularity_quantile,
            popularity_threshold: state.popularity_threshold,
            imputed_rating: c.history.imputed_rating,
            history_seed: c.history.seed,
            explanation_size: c.explain.size,
            candidates_scored: state.candidates.len(),
            cf_strategy: Strategy::FullRetrain,
            approx_strategy: c.counterfactual.approx_strategy,
            finetune_iterations: c.counterfactual.finetune_iterations,
            explanations_emitted: state.selections.len(),
        };
        let mut explanations = Vec::with_capacity(state.selections.len());
        for (n, s) in state.selections.iter().enumerate() {
            let row = state.candidate(&s.explanation_id).ok_or_else(|| {
                CliError::Data(format!("unknown explanation {}", s.explanation_id))
            })?;
            explanations.push(BundleExplanation {
                question_id: format!("q{:02}", n + 1),
                explanation_id: row.explanation_id.clone(),
                selected_by: s.kind,
                level: s.level,
                items: row.items.iter().map(|&i| movie(&dataset, i)).collect(),
                scores: row.scores(),
                cf_qualitative: row.cf.qualitative,
                cf_benchmark_item: row.cf.benchmark_item,
                cf_approx_qualitative: row.cf_approx.qualitative,
            });
        }
        let bundle = SurveyBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            config_hash: self.hash.clone(),
            protocol,
            user: state.user,
            history: state.history.iter().map(|&i| movie(&dataset, i)).collect(),
            recommended: movie(&dataset, state.recommended_item),
            explanations,
            diagnostics: Diagnostics {
                spearman_cf_vs_cf_approx: state.spearman_cf_vs_cf_approx,
                base_objective_monotone: state.base_objective_monotone,
                retrains_checked: state.retrains_checked,
                retrain_objective_monotone: state.retrain_objective_monotone,
            },
        };
        write_once(&self.path(BUNDLE), &to_json(&bundle))?;
        Ok(bundle)
    }

    /// Correlation, MSE and t-test tables for a ratings file, written to
    /// `analysis-<hash of the ratings>`. Nothing is written on failure.
    pub fn analyze(&self, ratings: &Path) -> Result<AnalysisOutput> {
        let bundle_path = self.path(BUNDLE);
        let bundle = if bundle_path.exists() {
            let text =
                fs::read_to_string(&bundle_path).map_err(|e| CliError::io(&bundle_path, e))?;
            SurveyBundle::from_json(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", bundle_path.display())))?
        } else {
            self.generate()?
        };
        let bytes = fs::read(ratings).map_err(|e| CliError::io(ratings, e))?;
        let table = read_ratings(ratings)?;
        let options = ReportOptions {
            train_fraction: self.config.analysis.train_fraction,
            split_seed: self.config.analysis.split_seed,
        };
        info!("analysis split seed {}", options.split_seed);
        let report = build_report(&bundle.questions(), &table, options).map_err(|e| match e {
            cfprox_core::Error::InvalidArgument(m) => CliError::Data(m),
            other => other.into(),
        })?;
        for cell in &report.correlations {
            if let Some(note) = &cell.note {
                warn!("correlation {}/{}: {note}", cell.kind, cell.dimension);
            }
        }

        let dir = self.path(&format!("analysis-{}", short_hash(&bytes)));
        if dir.exists() {
            return Ok(AnalysisOutput { dir, report });
        }
        let tmp = tempdir_in(&self.run_dir)?;
        let files: [(&str, Vec<u8>); 4] = [
            ("correlation.csv", correlation_csv(&report).into_bytes()),
            ("mse.csv", mse_csv(&report).into_bytes()),
            ("ttest.csv", ttest_csv(&report).into_bytes()),
            ("analysis.json", to_json(&report)),
        ];
        for (name, body) in files {
            let p = tmp.join(name);
            fs::write(&p, body).map_err(|e| CliError::io(&p, e))?;
        }
        fs::rename(&tmp, &dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(AnalysisOutput { dir, report })
    }
}

fn tempdir_in(parent: &Path) -> Result<PathBuf> {
    let dir = parent.join(format!(".tmp-{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_once_accepts_identical_bytes_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_once(&p, b"x").unwrap();
        write_once(&p, b"x").unwrap();
        assert!(write_once(&p, b"y").is_err());
        assert_eq!(fs::read(&p).unwrap(), b"x");
    }
}
