//! Feature-hashed character n-gram embeddings.
//!
//! Every token is padded with `<` and `>` and split into character n-grams.
//! An n-gram hashes to one of `buckets` slots; each slot owns a fixed random
//! unit vector, drawn from a Gaussian generator seeded by the slot index and
//! the model seed. The sentence vector is the mean of its n-gram vectors, so
//! sentences sharing many n-grams land close together.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sentence::{tokenize, Sentence};

use super::Vector;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NGramHashConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub buckets: u64,
    pub seed: u64,
    pub dim: usize,
}

impl Default for NGramHashConfig {
    fn default() -> Self {
        Self {
            n_min: 3,
            n_max: 5,
            buckets: 2_000_000,
            seed: 42,
            dim: 300,
        }
    }
}

impl NGramHashConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::Config(format!(
                "n-gram range {}..{} is empty",
                self.n_min, self.n_max
            )));
        }
        if self.buckets < 1 || self.dim < 1 {
            return Err(Error::Config("buckets and dim must be at least 1".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seeded FNV-1a over the UTF-8 bytes, finished with a splitmix64 avalanche.
fn hash_ngram(chars: &[char], seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix64(seed);
    let mut buf = [0u8; 4];
    for c in chars {
        for b in c.encode_utf8(&mut buf).bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    splitmix64(h)
}

/// Bucket vectors already generated for one embedding pass.
pub type BucketCache = HashMap<u64, Box<[f32]>>;

const CACHE_LIMIT_FLOATS: usize = 1 << 25;

#[derive(Debug, Clone)]
pub struct CharNgramEmbedder {
    config: NGramHashConfig,
}

impl CharNgramEmbedder {
    pub fn new(config: NGramHashConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &NGramHashConfig {
        &self.config
    }

    /// Bucket index of every n-gram of every token, in order.
    pub fn buckets_for(&self, sentence: &str) -> Vec<u64> {
        let cfg = &self.config;
        let mut out = Vec::new();
        for token in tokenize(sentence) {
            let padded: Vec<char> = std::iter::once('<').chain(token.chars()).chain(std::iter::once('>')).collect();
            for n in cfg.n_min..=cfg.n_max {
                for gram in padded.windows(n) {
                    out.push(hash_ngram(gram, cfg.seed) % cfg.buckets);
                }
            }
        }
        out
    }

    /// The unit vector owned by `bucket`.
    pub fn bucket_vector(&self, bucket: u64) -> Vec<f32> {
        let key = splitmix64(self.config.seed ^ splitmix64(bucket));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let mut v: Vec<f32> = (0..self.config.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x = (f64::from(*x) / norm) as f32;
            }
        }
        v
    }

    pub fn cache(&self) -> BucketCache {
        HashMap::new()
    }

    pub fn embed(&self, sentence: &Sentence) -> Vector {
        self.embed_cached(sentence, &mut self.cache())
    }

    pub fn embed_cached(&self, sentence: &Sentence, cache: &mut BucketCache) -> Vector {
        let dim = self.config.dim;
        let buckets = self.buckets_for(&sentence.text);
        if buckets.is_empty() {
            return Vector::zeros(dim);
        }
        let mut sum = vec![0.0f64; dim];
        for b in &buckets {
            if !cache.contains_key(b) && cache.len() * dim >= CACHE_LIMIT_FLOATS {
                cache.clear();
            }
            let v = cache.entry(*b).or_insert_with(|| self.bucket_vector(*b).into_boxed_slice());
            for (s, x) in sum.iter_mut().zip(v.iter()) {
                *s += f64::from(*x);
            }
        }
        let n = buckets.len() as f64;
        Vector(sum.into_iter().map(|s| (s / n) as f32).collect())
    }
}
