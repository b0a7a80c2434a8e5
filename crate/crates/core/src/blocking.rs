//! Candidate generation by k-nearest-neighbor queries.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddedCollection;
use crate::error::{Error, Result};
use crate::model::{load_pairs, write_pairs, GroundTruth, IdPair};
use crate::nn::{ExactIndex, HnswIndex, HnswParams, KnnSearch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Exact,
    Hnsw,
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexKind::Exact => "exact",
            IndexKind::Hnsw => "hnsw",
        })
    }
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(IndexKind::Exact),
            "hnsw" => Ok(IndexKind::Hnsw),
            other => Err(Error::Config(format!("unknown index kind `{other}` (expected exact or hnsw)"))),
        }
    }
}

/// Which index to build, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexSpec {
    Exact,
    Hnsw(HnswParams),
}

impl IndexSpec {
    pub fn kind(&self) -> IndexKind {
        match self {
            IndexSpec::Exact => IndexKind::Exact,
            IndexSpec::Hnsw(_) => IndexKind::Hnsw,
        }
    }
}

/// The Clean-Clean collection whose entities were posed as queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuerySide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Clean-Clean pairs are oriented (left collection, right collection);
    /// Dirty pairs are canonical unordered pairs.
    pub pairs: BTreeSet<IdPair>,
    pub k: usize,
    pub index_kind: IndexKind,
    pub query_side: Option<QuerySide>,
    pub embedder_tag: String,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of candidate pairs that are true duplicates.
    pub fn true_positives(&self, gt: &GroundTruth) -> usize {
        self.pairs.iter().filter(|p| gt.contains_pair(p)).count()
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    Ok(())
}

/// Runs `f` with the requested index built over `corpus`.
fn with_index<T>(corpus: &EmbeddedCollection, spec: &IndexSpec, f: impl FnOnce(&dyn KnnSearch) -> T) -> Result<T> {
    match spec {
        IndexSpec::Exact => Ok(f(&ExactIndex::new(corpus))),
        IndexSpec::Hnsw(params) => {
            let index = HnswIndex::build(corpus, *params)?;
            Ok(f(&index))
        }
    }
}

/// Record-linkage blocking: every entity of the smaller collection (the left
/// one on ties) retrieves its `k` nearest neighbors from the other.
pub fn block_clean_clean(
    left: &EmbeddedCollection,
    right: &EmbeddedCollection,
    k: usize,
    spec: &IndexSpec,
) -> Result<CandidateSet> {
    check_k(k)?;
    if left.dim() != right.dim() {
        return Err(Error::Dimension {
            expected: left.dim(),
            found: right.dim(),
        });
    }
    let query_side = if left.len() <= right.len() {
        QuerySide::Left
    } else {
        QuerySide::Right
    };
    let (queries, indexed) = match query_side {
        QuerySide::Left => (left, right),
        QuerySide::Right => (right, left),
    };
    let mut pairs = BTreeSet::new();
    if !indexed.is_empty() && !queries.is_empty() {
        let hits = with_index(indexed, spec, |index| {
            (0..queries.len())
                .into_par_iter()
                .map(|q| index.knn_hits(queries.vector(q), k))
                .collect::<Vec<_>>()
        })?;
        for (q, row) in hits.into_iter().enumerate() {
            let qid = queries.id(q);
            for h in row {
                let hid = indexed.id(h.pos);
                pairs.insert(match query_side {
                    QuerySide::Left => IdPair::new(qid, hid),
                    QuerySide::Right => IdPair::new(hid, qid),
                });
            }
        }
    }
    Ok(CandidateSet {
        pairs,
        k,
        index_kind: spec.kind(),
        query_side: Some(query_side),
        embedder_tag: left.embedder_tag().to_owned(),
    })
}

/// The `k` nearest other entities of every entity, by position.
pub fn dirty_neighbor_lists(emb: &EmbeddedCollection, k: usize, spec: &IndexSpec) -> Result<Vec<Vec<usize>>> {
    check_k(k)?;
    if emb.is_empty() {
        return Ok(Vec::new());
    }
    with_index(emb, spec, |index| {
        (0..emb.len())
            .into_par_iter()
            .map(|q| {
                index
                    .knn_hits(emb.vector(q), k + 1)
                    .into_iter()
                    .filter(|h| h.pos != q)
                    .take(k)
                    .map(|h| h.pos)
                    .collect()
            })
            .collect()
    })
}

/// Deduplication blocking: every entity queries an index over all entities.
/// Self matches are dropped and mirrored pairs are counted once.
pub fn block_dirty(emb: &EmbeddedCollection, k: usize, spec: &IndexSpec) -> Result<CandidateSet> {
    let lists = dirty_neighbor_lists(emb, k, spec)?;
    let pairs = lists
        .iter()
        .enumerate()
        .flat_map(|(q, row)| row.iter().map(move |&n| IdPair::unordered(emb.id(q), emb.id(n))))
        .collect();
    Ok(CandidateSet {
        pairs,
        k,
        index_kind: spec.kind(),
        query_side: None,
        embedder_tag: emb.embedder_tag().to_owned(),
    })
}

/// Pairs completeness: the fraction of true pairs among the candidates.
pub fn blocking_recall(cands: &CandidateSet, gt: &GroundTruth) -> f64 {
    if gt.is_empty() {
        return 1.0;
    }
    cands.true_positives(gt) as f64 / gt.len() as f64
}

pub fn blocking_precision(cands: &CandidateSet, gt: &GroundTruth) -> f64 {
    if cands.is_empty() {
        return 0.0;
    }
    cands.true_positives(gt) as f64 / cands.len() as f64
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateMeta {
    k: usize,
    index_kind: IndexKind,
    query_side: Option<QuerySide>,
    embedder_tag: String,
}

/// Path of the metadata side-car written next to a candidate CSV.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes `left_id,right_id` rows plus a JSON side-car with the provenance.
pub fn write_candidates(cands: &CandidateSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_pairs(&cands.pairs, path)?;
    let meta = CandidateMeta {
        k: cands.k,
        index_kind: cands.index_kind,
        query_side: cands.query_side,
        embedder_tag: cands.embedder_tag.clone(),
    };
    let meta_path = meta_path(path);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&meta_path, json + "\n").map_err(|e| Error::io(meta_path, e))
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<CandidateSet> {
    let path = path.as_ref();
    let meta_path = meta_path(path);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: CandidateMeta =
        serde_json::from_str(&text).map_err(|e| Error::parse(&meta_path, e.line() as u64, e.to_string()))?;
    let pairs = load_pairs(path)?.into_iter().collect();
    Ok(CandidateSet {
        pairs,
        k: meta.k,
        index_kind: meta.index_kind,
        query_side: meta.query_side,
        embedder_tag: meta.embedder_tag,
    })
}
