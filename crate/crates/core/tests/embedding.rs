use std::collections::HashSet;

use erkit::embedding::{embed_collection, CharNgramEmbedder};
use erkit::nn::euclidean_distance;
use erkit::sentence::Sentence;
use erkit::{Embedder, Entity, EntityCollection, NGramHashConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every padded character n-gram of every lowercase alphanumeric token.
fn ngrams(text: &str, n_min: usize, n_max: usize) -> HashSet<String> {
    let mut out = HashSet::new();
    for token in text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let padded: Vec<char> = format!("<{token}>").chars().collect();
        for n in n_min..=n_max {
            for w in padded.windows(n) {
                out.insert(w.iter().collect());
            }
        }
    }
    out
}

fn shared_fraction(a: &str, b: &str) -> f64 {
    let (x, y) = (ngrams(a, 3, 5), ngrams(b, 3, 5));
    x.intersection(&y).count() as f64 / x.union(&y).count() as f64
}

fn random_words(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words)
        .map(|_| (0..rng.random_range(6..10)).map(|_| rng.random_range(b'a'..=b'z') as char).collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn shared_ngrams_mean_smaller_distance() {
    let embedder = CharNgramEmbedder::new(NGramHashConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let base = random_words(&mut rng, 12);
        let near = format!("{base} {}", random_words(&mut rng, 1));
        let far = loop {
            let s = random_words(&mut rng, 12);
            if shared_fraction(&base, &s) == 0.0 {
                break s;
            }
        };
        let overlap = shared_fraction(&base, &near);
        assert!(overlap >= 0.9, "trial {trial}: overlap {overlap}");
        let v = |s: &str| embedder.embed(&Sentence::new("x", s));
        let (b, n, f) = (v(&base), v(&near), v(&far));
        let d_near = euclidean_distance(b.as_slice(), n.as_slice()).unwrap();
        let d_far = euclidean_distance(b.as_slice(), f.as_slice()).unwrap();
        assert!(d_near < d_far, "trial {trial}: {d_near} vs {d_far}");
    }
}

#[test]
fn char_ngram_vectors_are_finite_and_bounded() {
    let embedder = CharNgramEmbedder::new(NGramHashConfig {
        dim: 50,
        ..Default::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for words in 0..40 {
        let v = embedder.embed(&Sentence::new("x", random_words(&mut rng, words % 7)));
        assert!(v.as_slice().iter().all(|x| x.is_finite()));
        assert!(v.norm() <= 1.0 + 1e-5);
    }
}

/// Seeded FNV-1a with a splitmix64 finalizer, written out longhand.
fn reference_bucket(gram: &str, seed: u64, buckets: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
    let mut h = 0xcbf29ce484222325u64 ^ mix(seed);
    for b in gram.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x100000001b3);
    }
    mix(h) % buckets
}

#[test]
fn char_ngram_golden_values() {
    let embedder = CharNgramEmbedder::new(NGramHashConfig {
        dim: 4,
        buckets: 1000,
        ..Default::default()
    })
    .unwrap();
    let expected: Vec<u64> = ["<ab", "ab>", "<ab>"].iter().map(|g| reference_bucket(g, 42, 1000)).collect();
    assert_eq!(embedder.buckets_for("ab"), expected);
    assert_eq!(expected, [682, 412, 218]);

    let v = embedder.embed(&Sentence::new("x", "AB"));
    let mut mean = [0.0f64; 4];
    for b in &expected {
        for (m, x) in mean.iter_mut().zip(embedder.bucket_vector(*b)) {
            *m += f64::from(x) / 3.0;
        }
    }
    for (got, want) in v.as_slice().iter().zip(mean) {
        assert!((f64::from(*got) - want).abs() < 1e-6);
    }
    // frozen output; any change here changes every stored embedding
    assert_eq!(v.as_slice(), [0.24978058, -0.051892936, -0.27183622, -0.6435904]);
}

#[test]
fn embedding_a_collection_twice_is_identical() {
    let names = vec!["name".to_owned(), "city".to_owned()];
    let entities = (0..30)
        .map(|i| Entity::new(format!("e{i}"), vec![("name".into(), format!("person {i}")), ("city".into(), "athens".into())]))
        .collect();
    let coll = EntityCollection::new("c", names, entities).unwrap();
    let embedder = Embedder::CharNgram(CharNgramEmbedder::new(NGramHashConfig::default()).unwrap());
    let a = embed_collection(&coll, &embedder).unwrap();
    let b = embed_collection(&coll, &embedder).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 30);
    assert_eq!(a.dim(), 300);
    assert!(a.embedder_tag().starts_with("char-ngram"));
}
