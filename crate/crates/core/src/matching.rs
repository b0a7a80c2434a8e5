//! Similarity scoring and unsupervised one-to-one matching.
//!
//! Similarities are `1 / (1 + d)` for the Euclidean distance `d`, so they lie
//! in `(0, 1]`. A pair is only ever matched when its similarity strictly
//! exceeds the threshold δ.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddedCollection;
use crate::error::{Error, Result};
use crate::evaluation::{match_metrics, MetricTriple};
use crate::model::{GroundTruth, IdPair};
use crate::nn::squared_distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub left: String,
    pub right: String,
    pub similarity: f64,
}

impl ScoredPair {
    pub fn new(left: impl Into<String>, right: impl Into<String>, similarity: f64) -> Self {
        Self {
            left: left.into(),
            right: right.into(),
            similarity,
        }
    }

    pub fn id_pair(&self) -> IdPair {
        IdPair::new(self.left.clone(), self.right.clone())
    }
}

/// Similarity descending, then left id, then right id.
pub fn cmp_scored(a: &ScoredPair, b: &ScoredPair) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.left.cmp(&b.left))
        .then_with(|| a.right.cmp(&b.right))
}

pub fn sort_scored(scored: &mut [ScoredPair]) {
    scored.par_sort_unstable_by(cmp_scored);
}

fn is_sorted(scored: &[ScoredPair]) -> bool {
    scored.windows(2).all(|w| cmp_scored(&w[0], &w[1]) != Ordering::Greater)
}

/// `1 / (1 + distance)`.
pub fn to_similarity(distance: f64) -> Result<f64> {
    if distance.is_nan() || distance < 0.0 {
        return Err(Error::Domain(format!("distance {distance} is not a non-negative number")));
    }
    Ok(1.0 / (1.0 + distance))
}

fn similarity_of(u: &[f32], v: &[f32]) -> f64 {
    1.0 / (1.0 + f64::from(squared_distance(u, v)).sqrt())
}

/// Scores `pairs`, looking up left ids in `left` and right ids in `right`.
/// For Dirty tasks pass the same collection twice.
pub fn score_pairs<'a>(
    pairs: impl IntoIterator<Item = &'a IdPair>,
    left: &EmbeddedCollection,
    right: &EmbeddedCollection,
) -> Result<Vec<ScoredPair>> {
    if left.dim() != right.dim() {
        return Err(Error::Dimension {
            expected: left.dim(),
            found: right.dim(),
        });
    }
    let (lpos, rpos) = (left.positions(), right.positions());
    let resolved = pairs
        .into_iter()
        .map(|p| {
            let l = *lpos.get(p.left.as_str()).ok_or_else(|| Error::UnknownId(p.left.clone()))?;
            let r = *rpos.get(p.right.as_str()).ok_or_else(|| Error::UnknownId(p.right.clone()))?;
            Ok((p, l, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scored: Vec<ScoredPair> = resolved
        .into_par_iter()
        .map(|(p, l, r)| ScoredPair::new(p.left.clone(), p.right.clone(), similarity_of(left.vector(l), right.vector(r))))
        .collect();
    sort_scored(&mut scored);
    Ok(scored)
}

/// Scores every (left, right) combination.
pub fn score_cross_product(left: &EmbeddedCollection, right: &EmbeddedCollection) -> Result<Vec<ScoredPair>> {
    if left.dim() != right.dim() {
        return Err(Error::Dimension {
            expected: left.dim(),
            found: right.dim(),
        });
    }
    let mut scored: Vec<ScoredPair> = (0..left.len())
        .into_par_iter()
        .flat_map_iter(|l| {
            (0..right.len()).map(move |r| {
                ScoredPair::new(left.id(l), right.id(r), similarity_of(left.vector(l), right.vector(r)))
            })
        })
        .collect();
    sort_scored(&mut scored);
    Ok(scored)
}

/// A one-to-one matching, in acceptance order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<ScoredPair>,
    pub threshold: f64,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair_set(&self) -> BTreeSet<IdPair> {
        self.pairs.iter().map(ScoredPair::id_pair).collect()
    }

    /// True when no left id and no right id occurs twice.
    pub fn is_one_to_one(&self) -> bool {
        let mut lefts = HashSet::new();
        let mut rights = HashSet::new();
        self.pairs
            .iter()
            .all(|p| lefts.insert(p.left.as_str()) && rights.insert(p.right.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Umc,
    Exact,
    Kiraly,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Umc => "umc",
            Algorithm::Exact => "exact",
            Algorithm::Kiraly => "kiraly",
        }
    }

    pub fn run(&self, scored: &[ScoredPair], delta: f64, smaller_size: usize) -> MatchSet {
        match self {
            Algorithm::Umc => unique_mapping_clustering(scored, delta, smaller_size),
            Algorithm::Exact => exact_clustering(scored, delta),
            Algorithm::Kiraly => kiraly_clustering(scored, delta),
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "umc" => Ok(Algorithm::Umc),
            "exact" => Ok(Algorithm::Exact),
            "kiraly" => Ok(Algorithm::Kiraly),
            other => Err(Error::Config(format!("unknown matching algorithm `{other}`"))),
        }
    }
}

fn umc_sorted(scored: &[ScoredPair], delta: f64, smaller_size: usize) -> MatchSet {
    let mut lefts = HashSet::new();
    let mut rights = HashSet::new();
    let mut pairs = Vec::new();
    for p in scored {
        if pairs.len() >= smaller_size || p.similarity <= delta {
            break;
        }
        if !lefts.contains(p.left.as_str()) && !rights.contains(p.right.as_str()) {
            lefts.insert(p.left.as_str());
            rights.insert(p.right.as_str());
            pairs.push(p.clone());
        }
    }
    MatchSet { pairs, threshold: delta }
}

/// Unique Mapping Clustering: scan pairs by descending similarity and accept
/// a pair when neither entity is matched yet. Stops once `smaller_size`
/// pairs are accepted or the similarity no longer exceeds `delta`.
pub fn unique_mapping_clustering(scored: &[ScoredPair], delta: f64, smaller_size: usize) -> MatchSet {
    if is_sorted(scored) {
        return umc_sorted(scored, delta, smaller_size);
    }
    let mut sorted = scored.to_vec();
    sort_scored(&mut sorted);
    umc_sorted(&sorted, delta, smaller_size)
}

/// Matches two entities when each is the other's most similar counterpart
/// (equal similarities resolved towards the smaller id).
pub fn exact_clustering(scored: &[ScoredPair], delta: f64) -> MatchSet {
    fn better(cand: &ScoredPair, cur: &ScoredPair, other_id: fn(&ScoredPair) -> &str) -> bool {
        match cand.similarity.total_cmp(&cur.similarity) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => other_id(cand) < other_id(cur),
        }
    }
    let mut best_for_left: HashMap<&str, &ScoredPair> = HashMap::new();
    let mut best_for_right: HashMap<&str, &ScoredPair> = HashMap::new();
    for p in scored {
        let e = best_for_left.entry(p.left.as_str()).or_insert(p);
        if better(p, e, |s| s.right.as_str()) {
            *e = p;
        }
        let e = best_for_right.entry(p.right.as_str()).or_insert(p);
        if better(p, e, |s| s.left.as_str()) {
            *e = p;
        }
    }
    let mut pairs: Vec<ScoredPair> = best_for_left
        .values()
        .filter(|p| p.similarity > delta)
        .filter(|p| best_for_right.get(p.right.as_str()).is_some_and(|q| q.left == p.left))
        .map(|p| (*p).clone())
        .collect();
    sort_scored(&mut pairs);
    MatchSet { pairs, threshold: delta }
}

/// Proposal-based approximation of maximum stable marriage. Left entities
/// propose in descending order of their best remaining similarity; a right
/// entity accepts its first proposal and never switches.
pub fn kiraly_clustering(scored: &[ScoredPair], delta: f64) -> MatchSet {
    #[derive(PartialEq)]
    struct Proposer<'a> {
        similarity: f64,
        left: &'a str,
    }
    impl Eq for Proposer<'_> {}
    impl PartialOrd for Proposer<'_> {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Proposer<'_> {
        // max-heap: higher similarity first, then smaller left id
        fn cmp(&self, other: &Self) -> Ordering {
            self.similarity
                .total_cmp(&other.similarity)
                .then_with(|| other.left.cmp(self.left))
        }
    }

    let mut prefs: HashMap<&str, Vec<&ScoredPair>> = HashMap::new();
    for p in scored.iter().filter(|p| p.similarity > delta) {
        prefs.entry(p.left.as_str()).or_default().push(p);
    }
    for list in prefs.values_mut() {
        list.sort_by(|a, b| cmp_scored(a, b));
    }
    let mut next: HashMap<&str, usize> = HashMap::new();
    let mut heap: BinaryHeap<Proposer> = prefs
        .iter()
        .map(|(left, list)| Proposer {
            similarity: list[0].similarity,
            left,
        })
        .collect();
    let mut taken: HashSet<&str> = HashSet::new();
    let mut pairs = Vec::new();
    while let Some(Proposer { left, .. }) = heap.pop() {
        let list = &prefs[left];
        let i = next.entry(left).or_insert(0);
        let p = list[*i];
        if taken.insert(p.right.as_str()) {
            pairs.push(p.clone());
            continue;
        }
        *i += 1;
        if let Some(q) = list.get(*i) {
            heap.push(Proposer {
                similarity: q.similarity,
                left,
            });
        }
    }
    MatchSet { pairs, threshold: delta }
}

/// The default threshold grid 0.05, 0.10, ..., 0.95.
pub fn default_grid() -> Vec<f64> {
    (1..=19).map(|i| f64::from(i) / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SweepPoint {
    fn new(delta: f64, m: MetricTriple) -> Self {
        Self {
            delta,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// One point per grid value, in grid order.
    pub points: Vec<SweepPoint>,
    /// Highest F1; ties go to the larger δ.
    pub best: SweepPoint,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    if let Some(d) = grid.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        return Err(Error::Config(format!("threshold {d} is outside (0, 1)")));
    }
    Ok(())
}

fn best_point(points: &[SweepPoint]) -> SweepPoint {
    *points
        .iter()
        .max_by(|a, b| a.f1.total_cmp(&b.f1).then(a.delta.total_cmp(&b.delta)))
        .expect("grid is non-empty")
}

/// Runs UMC once per threshold and scores each matching against `gt`.
pub fn threshold_sweep(scored: &[ScoredPair], gt: &GroundTruth, smaller_size: usize, grid: &[f64]) -> Result<SweepResult> {
    check_grid(grid)?;
    let sorted;
    let scored = if is_sorted(scored) {
        scored
    } else {
        let mut v = scored.to_vec();
        sort_scored(&mut v);
        sorted = v;
        &sorted
    };
    let points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&delta| SweepPoint::new(delta, match_metrics(&umc_sorted(scored, delta, smaller_size), gt)))
        .collect();
    let best = best_point(&points);
    Ok(SweepResult { points, best })
}

/// Single-pass sweep. UMC at a higher threshold is a prefix of the scan at a
/// lower one, so one greedy scan evaluated at each threshold boundary
/// (highest first) yields the same curve as [`threshold_sweep`].
pub fn threshold_sweep_batched(
    scored: &[ScoredPair],
    gt: &GroundTruth,
    smaller_size: usize,
    grid: &[f64],
) -> Result<SweepResult> {
    check_grid(grid)?;
    let mut sorted_owned = None;
    let scored = if is_sorted(scored) {
        scored
    } else {
        let mut v = scored.to_vec();
        sort_scored(&mut v);
        &*sorted_owned.insert(v)
    };
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    let mut lefts = HashSet::new();
    let mut rights = HashSet::new();
    let mut accepted = 0usize;
    let mut correct = 0usize;
    let mut cursor = 0usize;
    let mut points = vec![None; grid.len()];
    for gi in order {
        let delta = grid[gi];
        while cursor < scored.len() && accepted < smaller_size && scored[cursor].similarity > delta {
            let p = &scored[cursor];
            if !lefts.contains(p.left.as_str()) && !rights.contains(p.right.as_str()) {
                lefts.insert(p.left.as_str());
                rights.insert(p.right.as_str());
                accepted += 1;
                if gt.contains(&p.left, &p.right) {
                    correct += 1;
                }
            }
            cursor += 1;
        }
        points[gi] = Some(SweepPoint::new(delta, MetricTriple::from_counts(correct, accepted, gt.len())));
    }
    let points: Vec<SweepPoint> = points.into_iter().map(|p| p.expect("every grid value visited")).collect();
    let best = best_point(&points);
    Ok(SweepResult { points, best })
}

/// Writes `left_id,right_id,similarity` rows.
pub fn write_matches(matches: &MatchSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["left_id", "right_id", "similarity"]).map_err(csv_err)?;
    for p in &matches.pairs {
        w.write_record([p.left.as_str(), p.right.as_str(), &p.similarity.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matches(path: impl AsRef<Path>) -> Result<Vec<ScoredPair>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let sim = rec
            .get(2)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::parse(path, line, "missing or non-numeric similarity"))?;
        out.push(ScoredPair::new(&rec[0], &rec[1], sim));
    }
    Ok(out)
}

/// Writes the `delta,precision,recall,f1` curve.
pub fn write_sweep(sweep: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["delta", "precision", "recall", "f1"]).map_err(csv_err)?;
    for p in &sweep.points {
        w.write_record([p.delta, p.precision, p.recall, p.f1].map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
