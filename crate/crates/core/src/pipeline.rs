//! End-to-end orchestration: ingest, embed, block, score, match, evaluate.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blocking::{
    block_clean_clean, block_dirty, blocking_precision, blocking_recall, meta_path, write_candidates, CandidateSet,
};
use crate::config::{EmbedderKind, PipelineConfig, TaskKind};
use crate::embedding::{
    embed_collection, load_precomputed, load_word_table, CharNgramEmbedder, EmbeddedCollection, Embedder,
};
use crate::error::Error;
use crate::evaluation::{emit_report, BlockingRow, MatchingRow, MetricTriple, Report, ReportFormat};
use crate::matching::{
    score_cross_product, score_pairs, threshold_sweep, write_matches, write_sweep, Algorithm, MatchSet, ScoredPair,
    SweepResult,
};
use crate::model::{load_csv, load_groundtruth, validate_task, EntityCollection, ErTask, GroundTruth, IdPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Embed,
    Block,
    Score,
    Match,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Embed => "embed",
            Stage::Block => "block",
            Stage::Score => "score",
            Stage::Match => "match",
            Stage::Evaluate => "evaluate",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> AtStage<T> for crate::error::Result<T> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Wall-clock seconds per stage, rounded to milliseconds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimings {
    pub entries: Vec<(Stage, f64)>,
}

impl StageTimings {
    pub fn record(&mut self, stage: Stage, started: Instant) -> f64 {
        let secs = round_ms(started.elapsed().as_secs_f64());
        log::info!("{stage}: {secs:.3} s");
        self.entries.push((stage, secs));
        secs
    }

    pub fn get(&self, stage: Stage) -> Option<f64> {
        self.entries.iter().find(|(s, _)| *s == stage).map(|(_, t)| *t)
    }
}

pub fn round_ms(secs: f64) -> f64 {
    (secs * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub blocking: BlockingRow,
    pub matching: Option<MatchingRow>,
    pub sweep: Option<SweepResult>,
    pub candidates: CandidateSet,
    pub matches: Option<MatchSet>,
    pub timings: StageTimings,
    pub files: Vec<PathBuf>,
}

pub const CANDIDATES_FILE: &str = "candidates.csv";
pub const BLOCKING_REPORT_FILE: &str = "blocking_report.csv";
pub const MATCHING_REPORT_FILE: &str = "matching_report.csv";
pub const MATCHES_FILE: &str = "matches.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const LEFT_VECTORS_FILE: &str = "left.embv";
pub const RIGHT_VECTORS_FILE: &str = "right.embv";

/// Builds the configured embedder for one side of the task.
pub fn build_embedder(cfg: &PipelineConfig, right_side: bool) -> crate::error::Result<Embedder> {
    let e = &cfg.embedder;
    Ok(match e.kind {
        EmbedderKind::CharNgram => Embedder::CharNgram(CharNgramEmbedder::new(e.ngram(cfg.seed))?),
        EmbedderKind::WordAvg => {
            let path = e.table.as_ref().ok_or_else(|| Error::Config("embedder.table is missing".into()))?;
            Embedder::WordAverage(load_word_table(path)?)
        }
        EmbedderKind::Precomputed => {
            let path = if right_side { &e.right_vectors } else { &e.vectors };
            let path = path.as_ref().ok_or_else(|| Error::Config("embedder vectors path is missing".into()))?;
            Embedder::Precomputed(load_precomputed(path)?)
        }
    })
}

/// Removes the files it tracks unless disarmed.
struct OutputGuard {
    files: Vec<PathBuf>,
    armed: bool,
}

impl OutputGuard {
    fn track(&mut self, path: PathBuf) -> PathBuf {
        self.files.push(path.clone());
        path
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.armed {
            for f in &self.files {
                let _ = std::fs::remove_file(f);
                let _ = std::fs::remove_file(meta_path(f));
            }
        }
    }
}

/// Reads and validates the configured task. Ground-truth ids missing from
/// the collections are an error.
pub fn load_task(cfg: &PipelineConfig) -> crate::error::Result<ErTask> {
    let t = &cfg.task;
    let left = load_csv(&t.left, &t.id_column)?;
    let ground_truth = load_groundtruth(&t.groundtruth)?;
    let task = match t.kind {
        TaskKind::CleanClean => {
            let right_path = t.right.as_ref().ok_or_else(|| Error::Config("task.right is missing".into()))?;
            let right = load_csv(right_path, &t.id_column)?;
            ErTask::CleanClean { left, right, ground_truth }
        }
        TaskKind::Dirty => ErTask::Dirty { collection: left, ground_truth },
    };
    let report = validate_task(&task);
    if report.empty_entities > 0 {
        log::warn!("{} entities have no attribute values", report.empty_entities);
    }
    if !report.is_valid() {
        return Err(Error::ingest(
            &t.groundtruth,
            format!(
                "{} ground-truth ids are absent from the collections (first: `{}`)",
                report.absent_ids.len(),
                report.absent_ids[0]
            ),
        ));
    }
    Ok(task)
}

/// Embeds the task's collections: `(left, Some(right))` for Clean-Clean
/// tasks, `(collection, None)` for Dirty ones.
pub fn embed_task(
    cfg: &PipelineConfig,
    task: &ErTask,
) -> crate::error::Result<(EmbeddedCollection, Option<EmbeddedCollection>)> {
    let embed = |c: &EntityCollection, right: bool| embed_collection(c, &build_embedder(cfg, right)?);
    Ok(match task {
        ErTask::CleanClean { left, right, .. } => (embed(left, false)?, Some(embed(right, true)?)),
        ErTask::Dirty { collection, .. } => (embed(collection, false)?, None),
    })
}

/// Runs the configured blocking over one or two embedded collections.
pub fn block_embedded(
    cfg: &PipelineConfig,
    left: &EmbeddedCollection,
    right: Option<&EmbeddedCollection>,
) -> crate::error::Result<CandidateSet> {
    let spec = cfg.blocking.index_spec(cfg.seed);
    match right {
        Some(r) => block_clean_clean(left, r, cfg.blocking.k, &spec),
        None => block_dirty(left, cfg.blocking.k, &spec),
    }
}

pub fn model_name(cfg: &PipelineConfig) -> String {
    cfg.embedder.kind.name().to_owned()
}

pub fn blocking_row(cfg: &PipelineConfig, candidates: &CandidateSet, gt: &GroundTruth, secs: f64) -> BlockingRow {
    BlockingRow {
        model: model_name(cfg),
        dataset: dataset_name(cfg),
        k: cfg.blocking.k,
        index: candidates.index_kind.to_string(),
        recall: blocking_recall(candidates, gt),
        precision: blocking_precision(candidates, gt),
        secs,
    }
}

/// Scores the full cross product when it fits the budget, otherwise only
/// the blocking candidates.
pub fn score_task(
    cfg: &PipelineConfig,
    left: &EmbeddedCollection,
    right: &EmbeddedCollection,
    candidates: Option<&CandidateSet>,
) -> crate::error::Result<Vec<ScoredPair>> {
    let cross = left.len() as u64 * right.len() as u64;
    if cross <= cfg.matching.budget {
        return score_cross_product(left, right);
    }
    log::info!("cross product of {cross} pairs exceeds the budget; scoring blocking candidates");
    let candidates = candidates.ok_or_else(|| {
        Error::Config(format!("cross product of {cross} pairs exceeds matching.budget and no candidates are available"))
    })?;
    score_pairs(&candidates.pairs, left, right)
}

/// The configured threshold, or the sweep's best one when sweeping.
pub fn choose_delta(
    cfg: &PipelineConfig,
    scored: &[ScoredPair],
    gt: &GroundTruth,
    smaller_size: usize,
) -> crate::error::Result<(f64, Option<SweepResult>)> {
    if cfg.matching.sweeps() {
        let s = threshold_sweep(scored, gt, smaller_size, &cfg.matching.grid())?;
        Ok((s.best.delta, Some(s)))
    } else {
        let delta = cfg
            .matching
            .delta
            .ok_or_else(|| Error::Config("matching.delta is missing".into()))?;
        Ok((delta, None))
    }
}

/// How a stored matching was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchMeta {
    pub algorithm: Algorithm,
    pub delta: f64,
    pub secs: f64,
}

pub fn write_match_meta(meta: &MatchMeta, matches_csv: &Path) -> crate::error::Result<()> {
    let path = meta_path(matches_csv);
    let text = serde_json::to_string_pretty(meta).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_match_meta(matches_csv: &Path) -> crate::error::Result<MatchMeta> {
    let path = meta_path(matches_csv);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn matching_row(cfg: &PipelineConfig, matched: &BTreeSet<IdPair>, gt: &GroundTruth, meta: &MatchMeta) -> MatchingRow {
    let correct = matched.iter().filter(|p| gt.contains_pair(p)).count();
    let metrics = MetricTriple::from_counts(correct, matched.len(), gt.len());
    MatchingRow {
        model: model_name(cfg),
        dataset: dataset_name(cfg),
        algorithm: meta.algorithm.name().to_owned(),
        delta: meta.delta,
        precision: metrics.precision,
        recall: metrics.recall,
        f1: metrics.f1,
        secs: meta.secs,
    }
}

pub fn dataset_name(cfg: &PipelineConfig) -> String {
    cfg.name.clone().unwrap_or_else(|| {
        cfg.task
            .left
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    })
}

/// Runs every stage and writes reports, candidates and matches under `cfg.output`.
/// On failure, files written by this run are removed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutcome, StageError> {
    cfg.validate().at(Stage::Ingest)?;
    let out = &cfg.output;
    std::fs::create_dir_all(out)
        .map_err(|e| Error::io(out, e))
        .at(Stage::Ingest)?;
    let mut guard = OutputGuard {
        files: Vec::new(),
        armed: true,
    };
    let mut timings = StageTimings::default();

    let t0 = Instant::now();
    let task = load_task(cfg).at(Stage::Ingest)?;
    timings.record(Stage::Ingest, t0);

    let t0 = Instant::now();
    let (left_emb, right_emb) = embed_task(cfg, &task).at(Stage::Embed)?;
    timings.record(Stage::Embed, t0);

    let t0 = Instant::now();
    let candidates = block_embedded(cfg, &left_emb, right_emb.as_ref()).at(Stage::Block)?;
    let block_secs = timings.record(Stage::Block, t0);
    let gt = task.ground_truth();
    let blocking = blocking_row(cfg, &candidates, gt, block_secs);
    write_candidates(&candidates, guard.track(out.join(CANDIDATES_FILE))).at(Stage::Block)?;

    let (mut matching, mut sweep, mut matches) = (None, None, None);
    if let Some(right_emb) = &right_emb {
        let t0 = Instant::now();
        let scored = score_task(cfg, &left_emb, right_emb, Some(&candidates)).at(Stage::Score)?;
        timings.record(Stage::Score, t0);

        let smaller = left_emb.len().min(right_emb.len());
        let (delta, s) = choose_delta(cfg, &scored, gt, smaller).at(Stage::Match)?;
        if let Some(s) = &s {
            write_sweep(s, guard.track(out.join(SWEEP_FILE))).at(Stage::Match)?;
        }
        sweep = s;
        let t0 = Instant::now();
        let m = cfg.matching.algorithm.run(&scored, delta, smaller);
        let match_secs = timings.record(Stage::Match, t0);

        let t0 = Instant::now();
        let meta = MatchMeta {
            algorithm: cfg.matching.algorithm,
            delta,
            secs: match_secs,
        };
        matching = Some(matching_row(cfg, &m.pair_set(), gt, &meta));
        let matches_path = guard.track(out.join(MATCHES_FILE));
        write_matches(&m, &matches_path).at(Stage::Evaluate)?;
        write_match_meta(&meta, &matches_path).at(Stage::Evaluate)?;
        matches = Some(m);
        timings.record(Stage::Evaluate, t0);
    } else {
        log::info!("dirty task: matching is evaluated on clean-clean tasks only");
    }

    emit_report(
        &Report::Blocking(vec![blocking.clone()]),
        guard.track(out.join(BLOCKING_REPORT_FILE)),
        ReportFormat::Csv,
    )
    .at(Stage::Evaluate)?;
    if let Some(row) = &matching {
        emit_report(
            &Report::Matching(vec![row.clone()]),
            guard.track(out.join(MATCHING_REPORT_FILE)),
            ReportFormat::Csv,
        )
        .at(Stage::Evaluate)?;
    }
    write_timings(&timings, &guard.track(out.join(TIMINGS_FILE))).at(Stage::Evaluate)?;

    guard.armed = false;
    Ok(RunOutcome {
        blocking,
        matching,
        sweep,
        candidates,
        matches,
        timings,
        files: std::mem::take(&mut guard.files),
    })
}

pub fn write_timings(t: &StageTimings, path: &Path) -> crate::error::Result<()> {
    let mut text = String::from("stage,secs\n");
    for (stage, secs) in &t.entries {
        text.push_str(&format!("{stage},{secs:.3}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
