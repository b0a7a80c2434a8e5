//! Euclidean nearest-neighbor search: exhaustive scan and HNSW.
//!
//! Distances are compared squared internally; public results carry the
//! Euclidean distance. Equal distances are ordered by ascending id.

mod hnsw;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddedCollection;
use crate::error::{Error, Result};

pub use hnsw::{HnswIndex, HnswParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub distance: f32,
}

/// Squared Euclidean distance. Callers guarantee equal lengths.
#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let (rest_a, rest_b) = (chunks_a.remainder(), chunks_b.remainder());
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..8 {
            let d = ca[i] - cb[i];
            acc[i] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in rest_a.iter().zip(rest_b) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

pub fn euclidean_distance(u: &[f32], v: &[f32]) -> Result<f32> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(squared_distance(u, v).sqrt())
}

/// A hit by corpus position, with squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Hit {
    pub pos: usize,
    pub sq_dist: f32,
}

pub(crate) fn cmp_hits(ids: &[String], a: &Hit, b: &Hit) -> Ordering {
    a.sq_dist
        .total_cmp(&b.sq_dist)
        .then_with(|| ids[a.pos].cmp(&ids[b.pos]))
}

pub(crate) fn to_neighbors(ids: &[String], hits: &[Hit]) -> Vec<Neighbor> {
    hits.iter()
        .map(|h| Neighbor {
            id: ids[h.pos].clone(),
            distance: h.sq_dist.sqrt(),
        })
        .collect()
}

/// Something that answers k-NN queries by corpus position.
pub(crate) trait KnnSearch: Sync {
    fn knn_hits(&self, query: &[f32], k: usize) -> Vec<Hit>;
}

fn check_query(corpus_dim: usize, query: &[f32], k: usize) -> Result<()> {
    if query.len() != corpus_dim {
        return Err(Error::Dimension {
            expected: corpus_dim,
            found: query.len(),
        });
    }
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    Ok(())
}

/// Exhaustive k-NN over an embedded collection.
pub struct ExactIndex<'a> {
    corpus: &'a EmbeddedCollection,
}

impl<'a> ExactIndex<'a> {
    pub fn new(corpus: &'a EmbeddedCollection) -> Self {
        Self { corpus }
    }
}

impl KnnSearch for ExactIndex<'_> {
    fn knn_hits(&self, query: &[f32], k: usize) -> Vec<Hit> {
        let ids = self.corpus.ids();
        let mut hits: Vec<Hit> = self
            .corpus
            .vectors()
            .enumerate()
            .map(|(pos, v)| Hit {
                pos,
                sq_dist: squared_distance(query, v),
            })
            .collect();
        let k = k.min(hits.len());
        if k == 0 {
            return Vec::new();
        }
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, |a, b| cmp_hits(ids, a, b));
            hits.truncate(k);
        }
        hits.sort_unstable_by(|a, b| cmp_hits(ids, a, b));
        hits
    }
}

/// The `min(k, |corpus|)` nearest neighbors of `query`, closest first.
pub fn exact_knn(corpus: &EmbeddedCollection, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    check_query(corpus.dim(), query, k)?;
    let index = ExactIndex::new(corpus);
    Ok(to_neighbors(corpus.ids(), &index.knn_hits(query, k)))
}
