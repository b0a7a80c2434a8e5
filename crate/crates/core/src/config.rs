//! Pipeline configuration, read from a TOML file of dotted keys such as
//! `blocking.k = 10`. Relative paths resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::blocking::IndexSpec;
use crate::embedding::NGramHashConfig;
use crate::error::{Error, Result};
use crate::matching::{default_grid, Algorithm};
use crate::nn::HnswParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    CleanClean,
    Dirty,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    /// First collection (the only one for Dirty tasks).
    pub left: PathBuf,
    pub right: Option<PathBuf>,
    #[serde(default = "default_id_column")]
    pub id_column: String,
    pub groundtruth: PathBuf,
}

fn default_id_column() -> String {
    "id".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    WordAvg,
    CharNgram,
    Precomputed,
}

impl EmbedderKind {
    pub fn name(&self) -> &'static str {
        match self {
            EmbedderKind::WordAvg => "word-avg",
            EmbedderKind::CharNgram => "char-ngram",
            EmbedderKind::Precomputed => "precomputed",
        }
    }
}

impl std::str::FromStr for EmbedderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word-avg" => Ok(EmbedderKind::WordAvg),
            "char-ngram" => Ok(EmbedderKind::CharNgram),
            "precomputed" => Ok(EmbedderKind::Precomputed),
            other => Err(Error::Config(format!("unknown embedder `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    /// Word-vector text file for `word-avg`.
    pub table: Option<PathBuf>,
    /// EMBV file for `precomputed` (left / only collection).
    pub vectors: Option<PathBuf>,
    /// EMBV file for the right collection of a Clean-Clean task.
    pub right_vectors: Option<PathBuf>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub buckets: Option<u64>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::CharNgram,
            table: None,
            vectors: None,
            right_vectors: None,
            n_min: None,
            n_max: None,
            buckets: None,
            dim: None,
            seed: None,
        }
    }
}

impl EmbedderConfig {
    pub fn ngram(&self, global_seed: u64) -> NGramHashConfig {
        let d = NGramHashConfig::default();
        NGramHashConfig {
            n_min: self.n_min.unwrap_or(d.n_min),
            n_max: self.n_max.unwrap_or(d.n_max),
            buckets: self.buckets.unwrap_or(d.buckets),
            dim: self.dim.unwrap_or(d.dim),
            seed: self.seed.unwrap_or(global_seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexChoice {
    Exact,
    Hnsw,
}

impl std::str::FromStr for IndexChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(IndexChoice::Exact),
            "hnsw" => Ok(IndexChoice::Hnsw),
            other => Err(Error::Config(format!("unknown index `{other}` (expected exact or hnsw)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockingConfig {
    pub k: usize,
    pub index: IndexChoice,
    pub m: Option<usize>,
    pub ef_construction: Option<usize>,
    pub ef_search: Option<usize>,
    pub level_norm: Option<f64>,
}

impl Default for BlockingConfig {
    fn default() -> Self {
        Self {
            k: 10,
            index: IndexChoice::Exact,
            m: None,
            ef_construction: None,
            ef_search: None,
            level_norm: None,
        }
    }
}

impl BlockingConfig {
    pub fn index_spec(&self, seed: u64) -> IndexSpec {
        match self.index {
            IndexChoice::Exact => IndexSpec::Exact,
            IndexChoice::Hnsw => {
                let d = HnswParams::with_m(self.m.unwrap_or(16));
                IndexSpec::Hnsw(HnswParams {
                    ef_construction: self.ef_construction.unwrap_or(d.ef_construction),
                    ef_search: self.ef_search.unwrap_or(d.ef_search),
                    level_norm: self.level_norm.unwrap_or(d.level_norm),
                    seed,
                    ..d
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    pub algorithm: Algorithm,
    /// Fixed threshold, used when the sweep is off.
    pub delta: Option<f64>,
    /// Pick the threshold by a sweep; defaults to on when no `delta` is given.
    pub sweep: Option<bool>,
    pub grid: Option<Vec<f64>>,
    /// Largest cross product scored exhaustively; above it only candidates are scored.
    pub budget: u64,
}

fn default_budget() -> u64 {
    100_000_000
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Umc,
            delta: None,
            sweep: None,
            grid: None,
            budget: default_budget(),
        }
    }
}

impl MatchingConfig {
    pub fn sweeps(&self) -> bool {
        self.sweep.unwrap_or(self.delta.is_none())
    }

    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(default_grid)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Dataset label used in reports; defaults to the left file stem.
    pub name: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub task: TaskConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub blocking: BlockingConfig,
    #[serde(default)]
    pub matching: MatchingConfig,
}

fn default_seed() -> u64 {
    42
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it become relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.output);
        fix(&mut self.task.left);
        fix(&mut self.task.groundtruth);
        for p in [
            self.task.right.as_mut(),
            self.embedder.table.as_mut(),
            self.embedder.vectors.as_mut(),
            self.embedder.right_vectors.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocking.k == 0 {
            return Err(Error::Config("blocking.k must be at least 1".into()));
        }
        if let IndexSpec::Hnsw(p) = self.blocking.index_spec(self.seed) {
            p.validate()?;
        }
        match (self.task.kind, &self.task.right) {
            (TaskKind::CleanClean, None) => return Err(Error::Config("task.right is required for clean-clean tasks".into())),
            (TaskKind::Dirty, Some(_)) => return Err(Error::Config("task.right is not used by dirty tasks".into())),
            _ => {}
        }
        match self.embedder.kind {
            EmbedderKind::WordAvg if self.embedder.table.is_none() => {
                return Err(Error::Config("embedder.table is required for word-avg".into()))
            }
            EmbedderKind::Precomputed if self.embedder.vectors.is_none() => {
                return Err(Error::Config("embedder.vectors is required for precomputed".into()))
            }
            EmbedderKind::Precomputed if self.task.kind == TaskKind::CleanClean && self.embedder.right_vectors.is_none() => {
                return Err(Error::Config("embedder.right_vectors is required for clean-clean precomputed".into()))
            }
            EmbedderKind::CharNgram => self.embedder.ngram(self.seed).validate()?,
            _ => {}
        }
        let in_unit = |d: f64| d > 0.0 && d < 1.0;
        if let Some(d) = self.matching.delta {
            if !in_unit(d) {
                return Err(Error::Config(format!("matching.delta = {d} must lie in (0, 1)")));
            }
        }
        if !self.matching.sweeps() && self.matching.delta.is_none() {
            return Err(Error::Config("set matching.delta or enable matching.sweep".into()));
        }
        let grid = self.matching.grid();
        if grid.is_empty() || grid.iter().any(|d| !in_unit(*d)) {
            return Err(Error::Config("matching.grid values must lie in (0, 1)".into()));
        }
        Ok(())
    }
}
