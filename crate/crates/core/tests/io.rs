use std::collections::HashSet;

use erkit::embedding::{embed_collection, load_precomputed, read_embv, write_embv};
use erkit::model::{load_csv, load_groundtruth, write_csv};
use erkit::{Embedder, Entity, EntityCollection, Error};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn value() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9,;\"' .-]{0,12}".prop_map(|s| s.trim().to_owned())
}

fn collections() -> impl Strategy<Value = EntityCollection> {
    (1usize..5).prop_flat_map(|n_attrs| {
        prop::collection::vec(prop::collection::vec(value(), n_attrs), 0..20).prop_map(move |rows| {
            let names: Vec<String> = (0..n_attrs).map(|i| format!("attr{i}")).collect();
            let entities = rows
                .into_iter()
                .enumerate()
                .map(|(i, vals)| Entity::new(format!("id-{i}"), names.iter().cloned().zip(vals).collect()))
                .collect();
            EntityCollection::new("c", names, entities).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn entity_csv_round_trips(c in collections()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_csv(&c, &path, "id").unwrap();
        let back = load_csv(&path, "id").unwrap();
        prop_assert_eq!(back.attribute_names(), c.attribute_names());
        prop_assert_eq!(back.entities(), c.entities());
    }

    #[test]
    fn groundtruth_ignores_row_order_and_direction(
        pairs in prop::collection::vec(("[a-e][0-9]", "[f-j][0-9]"), 0..30),
        seed in any::<u64>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, rows: &[(String, String)]| {
            let path = dir.path().join(name);
            let mut text = String::from("left_id,right_id\n");
            for (a, b) in rows {
                text.push_str(&format!("{a},{b}\n"));
            }
            std::fs::write(&path, text).unwrap();
            load_groundtruth(&path).unwrap()
        };
        let original = write("a.csv", &pairs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled: Vec<(String, String)> = pairs
            .iter()
            .map(|(a, b)| if rng.random() { (b.clone(), a.clone()) } else { (a.clone(), b.clone()) })
            .collect();
        shuffled.shuffle(&mut rng);
        let permuted = write("b.csv", &shuffled);
        let expected: HashSet<(String, String)> =
            pairs.iter().map(|(a, b)| if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) }).collect();
        prop_assert_eq!(original.len(), expected.len());
        prop_assert_eq!(original, permuted);
    }
}

#[test]
fn embv_round_trip_is_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dim = 17;
    let ids: Vec<String> = (0..100).map(|i| format!("ent-{i}")).collect();
    let vectors: Vec<Vec<f32>> = (0..100)
        .map(|_| (0..dim).map(|_| f32::from_bits(rng.random_range(0..0x7f00_0000u32)) * if rng.random() { 1.0 } else { -1.0 }).collect())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.embv");
    write_embv(&path, dim, ids.iter().map(String::as_str).zip(vectors.iter().map(Vec::as_slice))).unwrap();
    let pre = load_precomputed(&path).unwrap();
    assert_eq!(pre.dim, dim);
    assert_eq!(pre.map.len(), 100);
    for (id, v) in ids.iter().zip(&vectors) {
        let got: Vec<u32> = pre.map[id].as_slice().iter().map(|x| x.to_bits()).collect();
        let want: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
        assert_eq!(got, want, "{id}");
    }
    let col = read_embv(&path).unwrap();
    assert_eq!(col.ids(), &ids[..]);
}

#[test]
fn precomputed_embedding_follows_collection_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.embv");
    let records = [("b", &[1.0f32, 2.0][..]), ("a", &[3.0, 4.0][..]), ("c", &[5.0, 6.0][..])];
    write_embv(&path, 2, records).unwrap();
    let pre = load_precomputed(&path).unwrap();
    let names = vec!["x".to_owned()];
    let ent = |id: &str| Entity::new(id, vec![("x".into(), "v".into())]);
    let coll = EntityCollection::new("c", names.clone(), vec![ent("a"), ent("b")]).unwrap();
    let emb = embed_collection(&coll, &Embedder::Precomputed(pre.clone())).unwrap();
    assert_eq!(emb.vector(0), &[3.0, 4.0]);
    assert_eq!(emb.vector(1), &[1.0, 2.0]);

    let missing = EntityCollection::new("c", names, vec![ent("a"), ent("zz")]).unwrap();
    match embed_collection(&missing, &Embedder::Precomputed(pre)) {
        Err(Error::UnknownId(id)) => assert_eq!(id, "zz"),
        other => panic!("expected unknown id, got {other:?}"),
    }
}

#[test]
fn ragged_and_duplicate_rows_report_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "id,name\n1,a\n2,b,extra\n").unwrap();
    assert!(matches!(load_csv(&path, "id"), Err(Error::Parse { line: 3, .. })));
    std::fs::write(&path, "id,name\n1,a\n2,b\n1,c\n").unwrap();
    assert!(matches!(load_csv(&path, "id"), Err(Error::Parse { line: 4, .. })));
    std::fs::write(&path, "id,name\n1\n").unwrap();
    let c = load_csv(&path, "id").unwrap();
    assert_eq!(c.entities()[0].value("name"), Some(""));
}
