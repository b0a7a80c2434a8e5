//! Reference implementations shared by the integration tests. They are written
//! for clarity and share no code with the library.
#![allow(dead_code)]

use std::collections::HashSet;

/// Greedy matching, one step at a time: among the pairs whose entities are
/// both still free and whose similarity exceeds `delta`, take the most similar
/// (lowest `(left, right)` on ties), until nothing is left or `limit` pairs
/// were taken.
pub fn greedy_simulator(pairs: &[(String, String, f64)], delta: f64, limit: usize) -> Vec<(String, String)> {
    let mut used_left = HashSet::new();
    let mut used_right = HashSet::new();
    let mut out = Vec::new();
    while out.len() < limit {
        let mut best: Option<&(String, String, f64)> = None;
        for p in pairs {
            if p.2 <= delta || used_left.contains(&p.0) || used_right.contains(&p.1) {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => p.2 > b.2 || (p.2 == b.2 && (&p.0, &p.1) < (&b.0, &b.1)),
            };
            if better {
                best = Some(p);
            }
        }
        let Some(b) = best else { break };
        used_left.insert(b.0.clone());
        used_right.insert(b.1.clone());
        out.push((b.0.clone(), b.1.clone()));
    }
    out
}

/// Precision, recall and F1 of `predicted` against unordered true pairs.
pub fn score(predicted: &[(String, String)], truth: &[(String, String)]) -> (f64, f64, f64) {
    let norm = |a: &String, b: &String| if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
    let truth: HashSet<(String, String)> = truth.iter().map(|(a, b)| norm(a, b)).collect();
    let predicted: HashSet<(String, String)> = predicted.iter().map(|(a, b)| norm(a, b)).collect();
    let hits = predicted.intersection(&truth).count() as f64;
    let p = if predicted.is_empty() { 0.0 } else { hits / predicted.len() as f64 };
    let r = if truth.is_empty() { 1.0 } else { hits / truth.len() as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// The `k` nearest ids by a full sort on (f64 squared distance, id).
pub fn knn_oracle(data: &[Vec<f32>], ids: &[String], q: &[f32], k: usize) -> Vec<String> {
    let mut all: Vec<(f64, &String)> = data
        .iter()
        .zip(ids)
        .map(|(v, id)| {
            let d: f64 = v.iter().zip(q).map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2)).sum();
            (d, id)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
    all.into_iter().take(k).map(|(_, id)| id.clone()).collect()
}
