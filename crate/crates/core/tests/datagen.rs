use std::collections::{HashMap, HashSet};

use erkit::blocking::{block_dirty, blocking_recall, IndexSpec};
use erkit::datagen::{generate_dirty_dataset, GenParams};
use erkit::embedding::{embed_collection, CharNgramEmbedder};
use erkit::model::{write_csv, write_groundtruth};
use erkit::{Embedder, NGramHashConfig};

fn params(n_total: usize, seed: u64) -> GenParams {
    GenParams {
        n_total,
        seed,
        ..GenParams::default()
    }
}

#[test]
fn groups_are_disjoint_and_truth_stays_inside_groups() {
    for seed in 0..5 {
        let d = generate_dirty_dataset(&params(800, seed)).unwrap();
        assert_eq!(d.collection.len(), 800);
        let mut group_of = HashMap::new();
        for (g, members) in d.groups.iter().enumerate() {
            for m in members {
                assert!(group_of.insert(m.clone(), g).is_none(), "{m} is in two groups");
                assert!(d.collection.get(m).is_some());
            }
        }
        for p in d.ground_truth.iter() {
            assert_eq!(group_of.get(&p.left), group_of.get(&p.right));
            assert!(group_of.contains_key(&p.left));
        }
        // every group contributes all of its internal pairs
        let expected: usize = d.groups.iter().map(|g| g.len() * (g.len() - 1) / 2).sum();
        assert_eq!(d.ground_truth.len(), expected);
    }
}

#[test]
fn edit_logs_respect_limits() {
    let p = GenParams {
        max_mods_per_attribute: 2,
        max_mods_per_record: 4,
        ..params(1000, 3)
    };
    let d = generate_dirty_dataset(&p).unwrap();
    let copies: HashSet<&str> = d.groups.iter().flat_map(|g| g[1..].iter().map(String::as_str)).collect();
    assert_eq!(d.edits.len(), copies.len());
    for log in &d.edits {
        assert!(copies.contains(log.id.as_str()));
        assert!(log.total() >= 1 && log.total() <= 4, "{log:?}");
        assert!(log.per_attribute.iter().all(|&c| c <= 2), "{log:?}");
    }
}

#[test]
fn same_params_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let write = |tag: &str| {
        let d = generate_dirty_dataset(&params(500, 77)).unwrap();
        let (c, g) = (dir.path().join(format!("{tag}.csv")), dir.path().join(format!("{tag}_gt.csv")));
        write_csv(&d.collection, &c, "id").unwrap();
        write_groundtruth(&d.ground_truth, &g).unwrap();
        (std::fs::read(c).unwrap(), std::fs::read(g).unwrap())
    };
    assert_eq!(write("a"), write("b"));
    let other = generate_dirty_dataset(&params(500, 78)).unwrap();
    let first = generate_dirty_dataset(&params(500, 77)).unwrap();
    assert_ne!(other.collection.entities(), first.collection.entities());
}

#[test]
fn unedited_duplicates_are_always_recovered() {
    let embedder = Embedder::CharNgram(
        CharNgramEmbedder::new(NGramHashConfig {
            dim: 32,
            buckets: 1 << 16,
            ..Default::default()
        })
        .unwrap(),
    );
    for seed in 0..4 {
        let p = GenParams {
            max_mods_per_record: 0,
            ..params(600, seed)
        };
        let d = generate_dirty_dataset(&p).unwrap();
        assert!(d.edits.iter().all(|e| e.total() == 0));
        let max_group = d.groups.iter().map(Vec::len).max().unwrap();
        let emb = embed_collection(&d.collection, &embedder).unwrap();
        let cands = block_dirty(&emb, max_group - 1, &IndexSpec::Exact).unwrap();
        assert_eq!(blocking_recall(&cands, &d.ground_truth), 1.0, "seed {seed}");
    }
}

#[test]
fn invalid_params_are_rejected() {
    assert!(generate_dirty_dataset(&GenParams { dup_fraction: 1.5, ..GenParams::default() }).is_err());
    assert!(generate_dirty_dataset(&GenParams { n_attributes: 0, ..GenParams::default() }).is_err());
    assert!(generate_dirty_dataset(&GenParams { n_attributes: 13, ..GenParams::default() }).is_err());
}
