//! Hierarchical navigable small-world graph.
//!
//! Nodes are inserted in corpus order. Each node draws a top level
//! `floor(-ln(U) * level_norm)` and is linked on every layer up to it. Links
//! are kept symmetric: when a node overflows its degree cap it re-selects its
//! neighbors with the distance heuristic and the dropped neighbors lose their
//! back link as well.

use std::cell::RefCell;
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddedCollection;
use crate::error::{Error, Result};

use super::{check_query, cmp_hits, squared_distance, to_neighbors, Hit, KnnSearch, Neighbor};

const MAX_LEVEL: usize = 32;
const MAGIC: [u8; 4] = *b"HNSW";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnswParams {
    /// Link cap per node on layers above 0; layer 0 allows `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub level_norm: f64,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self::with_m(16)
    }
}

impl HnswParams {
    /// Defaults for a given `m`, with `level_norm = 1 / ln(m)`.
    pub fn with_m(m: usize) -> Self {
        Self {
            m,
            ef_construction: 200,
            ef_search: 128,
            level_norm: 1.0 / (m as f64).ln(),
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!("m = {} must be at least 2", self.m)));
        }
        if self.ef_construction < self.m {
            return Err(Error::Config(format!(
                "ef_construction = {} must be at least m = {}",
                self.ef_construction, self.m
            )));
        }
        if self.ef_search < 1 {
            return Err(Error::Config("ef_search must be at least 1".into()));
        }
        if !(self.level_norm > 0.0 && self.level_norm.is_finite()) {
            return Err(Error::Config(format!("level_norm = {} must be positive", self.level_norm)));
        }
        Ok(())
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

/// Candidate ordered by squared distance, then node position.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    d: f32,
    node: u32,
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d.total_cmp(&other.d).then(self.node.cmp(&other.node))
    }
}

/// Epoch-stamped visited marks, reused across searches on one thread.
#[derive(Default)]
struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    /// Marks `i`; returns true if it was not yet visited.
    #[inline]
    fn insert(&mut self, i: u32) -> bool {
        let slot = &mut self.marks[i as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

thread_local! {
    static VISITED: RefCell<Visited> = RefCell::new(Visited::default());
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnswIndex {
    params: HnswParams,
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    /// `links[node][layer]`; a node's top level is `links[node].len() - 1`.
    links: Vec<Vec<Vec<u32>>>,
    entry_point: u32,
    max_level: usize,
}

impl HnswIndex {
    /// Builds the index by inserting every vector of `corpus` in order.
    pub fn build(corpus: &EmbeddedCollection, params: HnswParams) -> Result<Self> {
        params.validate()?;
        if corpus.is_empty() {
            return Err(Error::Build("cannot index an empty corpus".into()));
        }
        if corpus.len() > u32::MAX as usize {
            return Err(Error::Build("corpus exceeds u32 node ids".into()));
        }
        let mut index = HnswIndex {
            params,
            dim: corpus.dim(),
            ids: corpus.ids().to_vec(),
            data: corpus.flat().to_vec(),
            links: Vec::with_capacity(corpus.len()),
            entry_point: 0,
            max_level: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut visited = Visited::default();
        for node in 0..corpus.len() as u32 {
            let level = index.sample_level(&mut rng);
            index.insert(node, level, &mut visited);
        }
        Ok(index)
    }

    fn sample_level(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        ((-u.ln() * self.params.level_norm).floor() as usize).min(MAX_LEVEL)
    }

    #[inline]
    fn vector(&self, node: u32) -> &[f32] {
        let i = node as usize * self.dim;
        &self.data[i..i + self.dim]
    }

    #[inline]
    fn dist_to(&self, query: &[f32], node: u32) -> f32 {
        squared_distance(query, self.vector(node))
    }

    fn insert(&mut self, node: u32, level: usize, visited: &mut Visited) {
        self.links.push(vec![Vec::new(); level + 1]);
        if node == 0 {
            self.entry_point = 0;
            self.max_level = level;
            return;
        }
        let query = self.vector(node).to_vec();
        let mut ep = Cand {
            d: self.dist_to(&query, self.entry_point),
            node: self.entry_point,
        };
        for layer in (level + 1..=self.max_level).rev() {
            ep = self.greedy_closest(&query, ep, layer);
        }
        let mut entries = vec![ep];
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&query, &entries, self.params.ef_construction, layer, visited);
            let selected = self.select_neighbors(&found, self.params.m);
            for &nb in &selected {
                self.links[node as usize][layer].push(nb.node);
                self.links[nb.node as usize][layer].push(node);
            }
            let cap = self.params.cap(layer);
            for &nb in &selected {
                if self.links[nb.node as usize][layer].len() > cap {
                    self.shrink(nb.node, layer, cap);
                }
            }
            entries = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry_point = node;
        }
    }

    /// Re-selects `node`'s links at `layer` down to `cap`, removing back links of dropped nodes.
    fn shrink(&mut self, node: u32, layer: usize, cap: usize) {
        let base = self.vector(node).to_vec();
        let mut cands: Vec<Cand> = self.links[node as usize][layer]
            .iter()
            .map(|&n| Cand {
                d: self.dist_to(&base, n),
                node: n,
            })
            .collect();
        cands.sort_unstable();
        let keep = self.select_neighbors(&cands, cap);
        let kept: Vec<u32> = keep.iter().map(|c| c.node).collect();
        for c in &cands {
            if !kept.contains(&c.node) {
                self.links[c.node as usize][layer].retain(|&x| x != node);
            }
        }
        self.links[node as usize][layer] = kept;
    }

    /// Distance heuristic over `cands` (sorted by distance to the base node):
    /// a candidate is kept only if it is closer to the base than to every
    /// neighbor kept so far. Rejected candidates fill any remaining slots,
    /// nearest first.
    fn select_neighbors(&self, cands: &[Cand], m: usize) -> Vec<Cand> {
        let mut kept: Vec<Cand> = Vec::with_capacity(m);
        let mut rejected = Vec::new();
        for &c in cands {
            if kept.len() >= m {
                break;
            }
            let v = self.vector(c.node);
            let diverse = kept.iter().all(|k| c.d < squared_distance(v, self.vector(k.node)));
            if diverse {
                kept.push(c);
            } else {
                rejected.push(c);
            }
        }
        for c in rejected {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn greedy_closest(&self, query: &[f32], mut best: Cand, layer: usize) -> Cand {
        loop {
            let mut improved = false;
            for &n in &self.links[best.node as usize][layer] {
                let c = Cand {
                    d: self.dist_to(query, n),
                    node: n,
                };
                if c < best {
                    best = c;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Beam search of width `ef` on one layer; returns candidates sorted ascending.
    fn search_layer(&self, query: &[f32], entries: &[Cand], ef: usize, layer: usize, visited: &mut Visited) -> Vec<Cand> {
        visited.reset(self.links.len());
        let mut frontier: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        let mut best: BinaryHeap<Cand> = BinaryHeap::new();
        for &e in entries {
            if visited.insert(e.node) {
                frontier.push(Reverse(e));
                best.push(e);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(c)) = frontier.pop() {
            if best.len() >= ef && best.peek().is_some_and(|f| c.d > f.d) {
                break;
            }
            for &n in &self.links[c.node as usize][layer] {
                if !visited.insert(n) {
                    continue;
                }
                let cand = Cand {
                    d: self.dist_to(query, n),
                    node: n,
                };
                if best.len() < ef || best.peek().is_some_and(|f| cand < *f) {
                    frontier.push(Reverse(cand));
                    best.push(cand);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    fn search_hits(&self, query: &[f32], k: usize, ef: usize) -> Vec<Hit> {
        let ef = ef.max(k);
        let mut ep = Cand {
            d: self.dist_to(query, self.entry_point),
            node: self.entry_point,
        };
        for layer in (1..=self.max_level).rev() {
            ep = self.greedy_closest(query, ep, layer);
        }
        let found = VISITED.with(|v| self.search_layer(query, &[ep], ef, 0, &mut v.borrow_mut()));
        let mut hits: Vec<Hit> = found
            .into_iter()
            .map(|c| Hit {
                pos: c.node as usize,
                sq_dist: c.d,
            })
            .collect();
        hits.sort_by(|a, b| cmp_hits(&self.ids, a, b));
        hits.truncate(k);
        hits
    }

    /// Approximate k-NN with a beam of `max(ef_search, k)` on layer 0.
    pub fn search(&self, query: &[f32], k: usize, ef_search: usize) -> Result<Vec<Neighbor>> {
        check_query(self.dim, query, k)?;
        Ok(to_neighbors(&self.ids, &self.search_hits(query, k, ef_search)))
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
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

    pub fn entry_point(&self) -> usize {
        self.entry_point as usize
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    /// Top level of `node`.
    pub fn level(&self, node: usize) -> usize {
        self.links[node].len() - 1
    }

    pub fn neighbors(&self, node: usize, layer: usize) -> &[u32] {
        self.links[node].get(layer).map_or(&[], Vec::as_slice)
    }

    /// Audits degree caps, level nesting, edge validity and link symmetry.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.links.len();
        if n != self.ids.len() || self.data.len() != n * self.dim {
            return Err("node count does not match stored vectors".into());
        }
        if self.level(self.entry_point as usize) != self.max_level {
            return Err("entry point is not on the top layer".into());
        }
        for (node, layers) in self.links.iter().enumerate() {
            if layers.is_empty() {
                return Err(format!("node {node} has no layers"));
            }
            for (layer, nbrs) in layers.iter().enumerate() {
                if nbrs.len() > self.params.cap(layer) {
                    return Err(format!("node {node} has {} links on layer {layer}", nbrs.len()));
                }
                let mut sorted = nbrs.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != nbrs.len() {
                    return Err(format!("node {node} has duplicate links on layer {layer}"));
                }
                for &nb in nbrs {
                    let nb = nb as usize;
                    if nb == node {
                        return Err(format!("node {node} links to itself on layer {layer}"));
                    }
                    if nb >= n || self.level(nb) < layer {
                        return Err(format!("node {node} links to {nb}, absent from layer {layer}"));
                    }
                    if !self.links[nb][layer].contains(&(node as u32)) {
                        return Err(format!("link {node} -> {nb} on layer {layer} is not mirrored"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes the index in a little-endian binary dump.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(io);
        put(&MAGIC)?;
        put(&VERSION.to_le_bytes())?;
        put(&(self.params.m as u32).to_le_bytes())?;
        put(&(self.params.ef_construction as u32).to_le_bytes())?;
        put(&(self.params.ef_search as u32).to_le_bytes())?;
        put(&self.params.level_norm.to_le_bytes())?;
        put(&self.params.seed.to_le_bytes())?;
        put(&(self.dim as u32).to_le_bytes())?;
        put(&(self.ids.len() as u64).to_le_bytes())?;
        put(&self.entry_point.to_le_bytes())?;
        put(&(self.max_level as u32).to_le_bytes())?;
        for id in &self.ids {
            put(&(id.len() as u32).to_le_bytes())?;
            put(id.as_bytes())?;
        }
        for v in &self.data {
            put(&v.to_le_bytes())?;
        }
        for layers in &self.links {
            put(&(layers.len() as u32).to_le_bytes())?;
            for nbrs in layers {
                put(&(nbrs.len() as u32).to_le_bytes())?;
                for nb in nbrs {
                    put(&nb.to_le_bytes())?;
                }
            }
        }
        w.flush().map_err(io)
    }

    /// Reads a dump written by [`HnswIndex::save`]; rejects other versions.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("truncated index file".into()))?;
            Ok(buf)
        };
        let magic = take(4)?;
        if magic != MAGIC {
            return Err(Error::Format("not an HNSW index file".into()));
        }
        let u16_at = |b: Vec<u8>| u16::from_le_bytes([b[0], b[1]]);
        let u32_of = |b: Vec<u8>| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let u64_of = |b: Vec<u8>| u64::from_le_bytes(b.try_into().expect("8 bytes"));
        let version = u16_at(take(2)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported index version {version}")));
        }
        let m = u32_of(take(4)?) as usize;
        let ef_construction = u32_of(take(4)?) as usize;
        let ef_search = u32_of(take(4)?) as usize;
        let level_norm = f64::from_bits(u64_of(take(8)?));
        let seed = u64_of(take(8)?);
        let dim = u32_of(take(4)?) as usize;
        let count = u64_of(take(8)?) as usize;
        let entry_point = u32_of(take(4)?);
        let max_level = u32_of(take(4)?) as usize;
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u32_of(take(4)?) as usize;
            ids.push(String::from_utf8(take(len)?).map_err(|_| Error::Format("id is not UTF-8".into()))?);
        }
        let data = take(count * dim * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut links = Vec::with_capacity(count);
        for _ in 0..count {
            let n_layers = u32_of(take(4)?) as usize;
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let deg = u32_of(take(4)?) as usize;
                layers.push(take(deg * 4)?.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect());
            }
            links.push(layers);
        }
        let params = HnswParams {
            m,
            ef_construction,
            ef_search,
            level_norm,
            seed,
        };
        params.validate()?;
        let index = HnswIndex {
            params,
            dim,
            ids,
            data,
            links,
            entry_point,
            max_level,
        };
        index.check_invariants().map_err(Error::Format)?;
        Ok(index)
    }
}

impl KnnSearch for HnswIndex {
    fn knn_hits(&self, query: &[f32], k: usize) -> Vec<Hit> {
        self.search_hits(query, k, self.params.ef_search)
    }
}
