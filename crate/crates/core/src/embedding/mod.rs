//! Dense vectors for entities.
//!
//! Three interchangeable embedders are supported: averaged static word
//! vectors, a feature-hashed character n-gram model, and precomputed vectors
//! read from EMBV files.

pub mod embv;
mod ngram;
mod word;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::EntityCollection;
use crate::sentence::{build_sentence, tokenize};

pub use embv::{load_precomputed, read_embv, write_embv, Precomputed};
pub use ngram::{CharNgramEmbedder, NGramHashConfig};
pub use word::{embed_word_average, load_word_table, WordVectorTable};

/// A finite `f32` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f32>);

impl Vector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite vector entry at position {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f32 {
        self.0.iter().map(|v| v * v).sum::<f32>().sqrt()
    }
}

impl AsRef<[f32]> for Vector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// Ids and their vectors, stored contiguously and aligned by position.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedCollection {
    ids: Vec<String>,
    data: Vec<f32>,
    dim: usize,
    embedder_tag: String,
}

impl EmbeddedCollection {
    pub fn new(ids: Vec<String>, vectors: Vec<Vector>, dim: usize, embedder_tag: impl Into<String>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::Domain(format!(
                "{} ids but {} vectors",
                ids.len(),
                vectors.len()
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for v in vectors {
            if v.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: v.dim(),
                });
            }
            data.extend_from_slice(v.as_slice());
        }
        Ok(Self {
            ids,
            data,
            dim,
            embedder_tag: embedder_tag.into(),
        })
    }

    /// Builds from a flat row-major buffer of `ids.len() * dim` values.
    pub fn from_flat(ids: Vec<String>, data: Vec<f32>, dim: usize, embedder_tag: impl Into<String>) -> Result<Self> {
        if data.len() != ids.len() * dim {
            return Err(Error::Domain(format!(
                "buffer of {} values does not hold {} vectors of dim {dim}",
                data.len(),
                ids.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite vector entry".into()));
        }
        Ok(Self {
            ids,
            data,
            dim,
            embedder_tag: embedder_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        // chunks_exact panics on a zero chunk size
        let dim = self.dim.max(1);
        self.data.chunks_exact(dim).take(self.ids.len())
    }

    pub fn flat(&self) -> &[f32] {
        &self.data
    }

    pub fn embedder_tag(&self) -> &str {
        &self.embedder_tag
    }

    /// Position of every id.
    pub fn positions(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }
}

/// Vectorization strategy for [`embed_collection`].
#[derive(Debug, Clone)]
pub enum Embedder {
    WordAverage(WordVectorTable),
    CharNgram(CharNgramEmbedder),
    Precomputed(Precomputed),
}

impl Embedder {
    pub fn dim(&self) -> usize {
        match self {
            Embedder::WordAverage(t) => t.dim(),
            Embedder::CharNgram(e) => e.config().dim,
            Embedder::Precomputed(p) => p.dim,
        }
    }

    /// Names the embedder and its parameters.
    pub fn tag(&self) -> String {
        match self {
            Embedder::WordAverage(t) => format!("word-avg(dim={},vocab={})", t.dim(), t.len()),
            Embedder::CharNgram(e) => {
                let c = e.config();
                format!(
                    "char-ngram(n={}..{},buckets={},dim={},seed={})",
                    c.n_min, c.n_max, c.buckets, c.dim, c.seed
                )
            }
            Embedder::Precomputed(p) => format!("precomputed(dim={})", p.dim),
        }
    }
}

const EMBED_CHUNK: usize = 2048;

/// Embeds every entity of `collection`; output order equals input order.
pub fn embed_collection(collection: &EntityCollection, embedder: &Embedder) -> Result<EmbeddedCollection> {
    let dim = embedder.dim();
    let ids: Vec<String> = collection.ids().map(str::to_owned).collect();
    let entities = collection.entities();
    let data: Vec<f32> = match embedder {
        Embedder::WordAverage(table) => entities
            .par_iter()
            .flat_map_iter(|e| {
                let tokens = tokenize(&build_sentence(e).text);
                embed_word_average(&tokens, table).into_inner()
            })
            .collect(),
        Embedder::CharNgram(ngram) => entities
            .par_chunks(EMBED_CHUNK)
            .flat_map_iter(|chunk| {
                let mut cache = ngram.cache();
                let mut out = Vec::with_capacity(chunk.len() * dim);
                for e in chunk {
                    out.extend_from_slice(ngram.embed_cached(&build_sentence(e), &mut cache).as_slice());
                }
                out
            })
            .collect(),
        Embedder::Precomputed(p) => {
            let mut data = Vec::with_capacity(ids.len() * dim);
            for id in &ids {
                let v = p.map.get(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
                data.extend_from_slice(v.as_slice());
            }
            data
        }
    };
    EmbeddedCollection::from_flat(ids, data, dim, embedder.tag())
}
