//! Seedable synthetic Dirty ER datasets in the style of Febrl.
//!
//! Clean records are sampled attribute by attribute from frequency tables.
//! A share of them is then chosen as group originals, and every original
//! spawns up to `max_dups_per_record` corrupted copies (character and word
//! edits). The ground truth holds every pair within a group.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Entity, EntityCollection, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub n_total: usize,
    /// Target share of entities that belong to a group of two or more.
    pub dup_fraction: f64,
    pub max_dups_per_record: usize,
    pub max_mods_per_attribute: usize,
    pub max_mods_per_record: usize,
    pub n_attributes: usize,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_total: 10_000,
            dup_fraction: 0.40,
            max_dups_per_record: 9,
            max_mods_per_attribute: 3,
            max_mods_per_record: 10,
            n_attributes: 12,
            seed: 42,
        }
    }
}

impl GenParams {
    pub fn limits(&self) -> CorruptionLimits {
        CorruptionLimits {
            max_mods_per_attribute: self.max_mods_per_attribute,
            max_mods_per_record: self.max_mods_per_record,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dup_fraction) {
            return Err(Error::Config(format!("dup_fraction {} is outside [0, 1]", self.dup_fraction)));
        }
        if self.dup_fraction > 0.0 && self.n_total < 2 {
            return Err(Error::Config("duplicates need at least two entities".into()));
        }
        if self.dup_fraction > 0.0 && self.max_dups_per_record == 0 {
            return Err(Error::Config("duplicates requested but max_dups_per_record is 0".into()));
        }
        if self.n_attributes == 0 {
            return Err(Error::Config("n_attributes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorruptionLimits {
    pub max_mods_per_attribute: usize,
    pub max_mods_per_record: usize,
}

/// Values of one attribute with their sampling weights.
#[derive(Debug, Clone)]
pub struct FrequencyTable {
    values: Vec<String>,
    dist: WeightedIndex<u64>,
}

impl FrequencyTable {
    pub fn new(entries: Vec<(String, u64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("frequency table is empty".into()));
        }
        let (values, weights): (Vec<String>, Vec<u64>) = entries.into_iter().unzip();
        let dist = WeightedIndex::new(weights).map_err(|e| Error::Config(format!("bad weights: {e}")))?;
        Ok(Self { values, dist })
    }

    /// Parses `value,weight` lines after a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut merged: BTreeMap<String, u64> = BTreeMap::new();
        let mut order = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let (value, weight) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::Config(format!("frequency table line {}: missing weight", i + 1)))?;
            let weight: u64 = weight
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("frequency table line {}: bad weight", i + 1)))?;
            let value = value.trim().to_owned();
            if !merged.contains_key(&value) {
                order.push(value.clone());
            }
            *merged.entry(value).or_insert(0) += weight;
        }
        Self::new(order.into_iter().map(|v| (v.clone(), merged[&v])).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.values[self.dist.sample(rng)]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-attribute frequency tables, in attribute order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub attributes: Vec<(String, FrequencyTable)>,
}

fn table(text: &str) -> FrequencyTable {
    FrequencyTable::from_csv(text).expect("bundled frequency table is valid")
}

fn generated(seed: u64, n: usize, mut f: impl FnMut(&mut ChaCha8Rng) -> String) -> FrequencyTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..n).map(|_| (f(&mut rng), 1)).collect();
    FrequencyTable::new(entries).expect("generated table is non-empty")
}

impl Vocabulary {
    pub fn new(attributes: Vec<(String, FrequencyTable)>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::Config("vocabulary has no attributes".into()));
        }
        Ok(Self { attributes })
    }

    /// The twelve bundled person/address attributes.
    pub fn bundled() -> Self {
        let street_names = table(include_str!("../data/street_names.csv"));
        let street_types = table(include_str!("../data/street_types.csv"));
        let address_1 = {
            let mut entries = Vec::new();
            for (i, name) in street_names.values.iter().enumerate() {
                for (j, kind) in street_types.values.iter().enumerate() {
                    // weight by rank of both parts
                    let w = 10_000 / ((i as u64 + 1) * (j as u64 + 1)) + 1;
                    entries.push((format!("{name} {kind}"), w));
                }
            }
            FrequencyTable::new(entries).expect("non-empty")
        };
        let address_2 = {
            let mut entries = vec![(String::new(), 600u64)];
            for n in 1..=40 {
                entries.push((format!("unit {n}"), 10));
                entries.push((format!("flat {n}"), 5));
            }
            for name in ["rosedale", "kingsford", "the elms", "meadowbank", "avalon", "seaview", "glenview", "oakleigh"] {
                entries.push((name.to_owned(), 8));
            }
            FrequencyTable::new(entries).expect("non-empty")
        };
        let street_number = FrequencyTable::new(
            (1..=400u64).map(|n| (n.to_string(), 1 + 2000 / (n + 10))).collect(),
        )
        .expect("non-empty");
        let date_of_birth = generated(11, 20_000, |r| {
            format!("{}{:02}{:02}", r.random_range(1930..=2005), r.random_range(1..=12), r.random_range(1..=28))
        });
        let age = FrequencyTable::new((18..=95u64).map(|a| (a.to_string(), 100 - a.min(90))).collect()).expect("non-empty");
        let phone_number = generated(12, 20_000, |r| {
            format!("0{} {:04} {:04}", r.random_range(2..=8), r.random_range(0..10_000), r.random_range(0..10_000))
        });
        let soc_sec_id = generated(13, 50_000, |r| format!("{:07}", r.random_range(1_000_000..10_000_000)));

        let attributes = vec![
            ("given_name", table(include_str!("../data/given_names.csv"))),
            ("surname", table(include_str!("../data/surnames.csv"))),
            ("street_number", street_number),
            ("address_1", address_1),
            ("address_2", address_2),
            ("suburb", table(include_str!("../data/suburbs.csv"))),
            ("postcode", table(include_str!("../data/postcodes.csv"))),
            ("state", table(include_str!("../data/states.csv"))),
            ("date_of_birth", date_of_birth),
            ("age", age),
            ("phone_number", phone_number),
            ("soc_sec_id", soc_sec_id),
        ];
        Self {
            attributes: attributes.into_iter().map(|(n, t)| (n.to_owned(), t)).collect(),
        }
    }

    /// The first `n` attributes.
    pub fn truncated(mut self, n: usize) -> Result<Self> {
        if n == 0 || n > self.attributes.len() {
            return Err(Error::Config(format!(
                "n_attributes = {n} must be within 1..={}",
                self.attributes.len()
            )));
        }
        self.attributes.truncate(n);
        Ok(self)
    }

    pub fn names(&self) -> Vec<String> {
        self.attributes.iter().map(|(n, _)| n.clone()).collect()
    }

    fn table_for(&self, attribute: &str) -> Option<&FrequencyTable> {
        self.attributes.iter().find(|(n, _)| n == attribute).map(|(_, t)| t)
    }
}

/// Samples `count` clean entities, ids `rec-{i}-org`.
pub fn generate_clean_entities(count: usize, vocab: &Vocabulary, seed: u64) -> Result<EntityCollection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    clean_entities(count, vocab, &mut rng)
}

fn clean_entities(count: usize, vocab: &Vocabulary, rng: &mut ChaCha8Rng) -> Result<EntityCollection> {
    if let Some((name, _)) = vocab.attributes.iter().find(|(_, t)| t.is_empty()) {
        return Err(Error::Config(format!("empty vocabulary for `{name}`")));
    }
    let entities = (0..count)
        .map(|i| {
            let attributes = vocab
                .attributes
                .iter()
                .map(|(name, t)| (name.clone(), t.sample(rng).to_owned()))
                .collect();
            Entity::new(format!("rec-{i}-org"), attributes)
        })
        .collect();
    EntityCollection::new("synthetic", vocab.names(), entities)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditKind {
    InsertChar,
    DeleteChar,
    ReplaceChar,
    DeleteWord,
    ReplaceWord,
}

const EDIT_KINDS: [EditKind; 5] = [
    EditKind::InsertChar,
    EditKind::DeleteChar,
    EditKind::ReplaceChar,
    EditKind::DeleteWord,
    EditKind::ReplaceWord,
];

const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

/// Edits applied to one corrupted record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditLog {
    pub id: String,
    /// Edit count per attribute, in attribute order.
    pub per_attribute: Vec<usize>,
}

impl EditLog {
    pub fn total(&self) -> usize {
        self.per_attribute.iter().sum()
    }
}

fn random_char<R: Rng + ?Sized>(rng: &mut R, not: Option<char>) -> char {
    loop {
        let c = ALPHABET[rng.random_range(0..ALPHABET.len())] as char;
        if Some(c) != not {
            return c;
        }
    }
}

fn replace_char<R: Rng + ?Sized>(value: &str, rng: &mut R) -> String {
    let mut chars: Vec<char> = value.chars().collect();
    if chars.is_empty() {
        return value.to_owned();
    }
    let i = rng.random_range(0..chars.len());
    chars[i] = random_char(rng, Some(chars[i].to_ascii_lowercase()));
    chars.into_iter().collect()
}

fn apply_edit<R: Rng + ?Sized>(value: &str, kind: EditKind, table: Option<&FrequencyTable>, rng: &mut R) -> String {
    let mut chars: Vec<char> = value.chars().collect();
    match kind {
        EditKind::InsertChar => {
            let i = rng.random_range(0..=chars.len());
            chars.insert(i, random_char(rng, None));
            chars.into_iter().collect()
        }
        EditKind::DeleteChar => {
            if !chars.is_empty() {
                chars.remove(rng.random_range(0..chars.len()));
            }
            chars.into_iter().collect()
        }
        EditKind::ReplaceChar => replace_char(value, rng),
        EditKind::DeleteWord => {
            let mut words: Vec<&str> = value.split_whitespace().collect();
            if !words.is_empty() {
                words.remove(rng.random_range(0..words.len()));
            }
            words.join(" ")
        }
        EditKind::ReplaceWord => {
            let mut words: Vec<String> = value.split_whitespace().map(str::to_owned).collect();
            if words.is_empty() {
                return value.to_owned();
            }
            let i = rng.random_range(0..words.len());
            let replacement = table.and_then(|t| {
                (0..8).find_map(|_| {
                    let tokens: Vec<&str> = t.sample(rng).split_whitespace().collect();
                    let w = *tokens.get(rng.random_range(0..tokens.len().max(1)))?;
                    (w != words[i]).then(|| w.to_owned())
                })
            });
            match replacement {
                Some(w) => words[i] = w,
                None => words[i] = replace_char(&words[i], rng),
            }
            words.join(" ")
        }
    }
}

const MAX_RETRIES: usize = 16;

/// Copies `entity` under `new_id` with between 1 and `max_mods_per_record`
/// random edits, never more than `max_mods_per_attribute` on one attribute.
pub fn corrupt_entity<R: Rng + ?Sized>(
    entity: &Entity,
    new_id: impl Into<String>,
    rng: &mut R,
    limits: &CorruptionLimits,
    vocab: &Vocabulary,
) -> (Entity, EditLog) {
    let new_id = new_id.into();
    let n_attrs = entity.attributes.len();
    let mut attempt = 0;
    loop {
        let mut out = Entity::new(new_id.clone(), entity.attributes.clone());
        let mut counts = vec![0usize; n_attrs];
        let budget = if limits.max_mods_per_record == 0 || limits.max_mods_per_attribute == 0 || n_attrs == 0 {
            0
        } else {
            rng.random_range(1..=limits.max_mods_per_record)
        };
        for _ in 0..budget {
            let eligible: Vec<usize> = (0..n_attrs).filter(|&a| counts[a] < limits.max_mods_per_attribute).collect();
            if eligible.is_empty() {
                break;
            }
            let a = eligible[rng.random_range(0..eligible.len())];
            let kind = EDIT_KINDS[rng.random_range(0..EDIT_KINDS.len())];
            let (name, value) = &out.attributes[a];
            let edited = apply_edit(value, kind, vocab.table_for(name), rng);
            out.attributes[a].1 = edited;
            counts[a] += 1;
        }
        let changed = out.attributes != entity.attributes;
        let retry = budget > 0 && !changed && !entity.is_empty() && attempt < MAX_RETRIES;
        if !retry {
            let log = EditLog {
                id: new_id,
                per_attribute: counts,
            };
            return (out, log);
        }
        attempt += 1;
    }
}

#[derive(Debug, Clone)]
pub struct DirtyDataset {
    pub collection: EntityCollection,
    pub ground_truth: GroundTruth,
    /// Member ids of every duplicate group, original first.
    pub groups: Vec<Vec<String>>,
    /// One log per corrupted copy.
    pub edits: Vec<EditLog>,
}

impl DirtyDataset {
    /// Share of entities that belong to a group of two or more.
    pub fn duplicate_member_fraction(&self) -> f64 {
        if self.collection.is_empty() {
            return 0.0;
        }
        let members: usize = self.groups.iter().filter(|g| g.len() >= 2).map(Vec::len).sum();
        members as f64 / self.collection.len() as f64
    }
}

/// Group sizes (each in `2..=max_group`) summing as close to `members` as possible.
fn plan_groups(members: usize, max_group: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut remaining = members;
    while remaining >= 2 {
        let mut s = rng.random_range(2..=max_group).min(remaining);
        if remaining - s == 1 {
            if remaining <= max_group {
                s = remaining;
            } else if s > 2 {
                s -= 1;
            }
        }
        sizes.push(s);
        remaining -= s;
    }
    if remaining == 1 {
        if let Some(g) = sizes.iter_mut().find(|s| **s < max_group) {
            *g += 1;
        }
    }
    sizes
}

pub fn generate_dirty_dataset(params: &GenParams) -> Result<DirtyDataset> {
    let vocab = Vocabulary::bundled().truncated(params.n_attributes)?;
    generate_dirty_dataset_with(params, &vocab)
}

/// Builds a Dirty dataset of exactly `n_total` entities from `vocab`.
pub fn generate_dirty_dataset_with(params: &GenParams, vocab: &Vocabulary) -> Result<DirtyDataset> {
    params.validate()?;
    let n = params.n_total;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let max_group = params.max_dups_per_record + 1;
    let mut members = (params.dup_fraction * n as f64).round() as usize;
    if params.dup_fraction > 0.0 {
        members = members.clamp(2, n);
    }
    let sizes = if members >= 2 { plan_groups(members, max_group, &mut rng) } else { Vec::new() };
    let copies: usize = sizes.iter().map(|s| s - 1).sum();
    let base_count = n - copies;

    let base = clean_entities(base_count, vocab, &mut rng)?;
    let originals = sample(&mut rng, base_count, sizes.len()).into_vec();

    let limits = params.limits();
    let mut entities: Vec<Entity> = base.entities().to_vec();
    let mut ground_truth = GroundTruth::new();
    let mut groups = Vec::with_capacity(sizes.len());
    let mut edits = Vec::with_capacity(copies);
    for (&orig, &size) in originals.iter().zip(&sizes) {
        let original = &base.entities()[orig];
        let mut group = vec![original.id.clone()];
        for j in 0..size - 1 {
            let (dup, log) = corrupt_entity(original, format!("rec-{orig}-dup-{j}"), &mut rng, &limits, vocab);
            group.push(dup.id.clone());
            entities.push(dup);
            edits.push(log);
        }
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                ground_truth.insert(a.clone(), b.clone());
            }
        }
        groups.push(group);
    }
    let collection = EntityCollection::new("synthetic", vocab.names(), entities)?;
    Ok(DirtyDataset {
        collection,
        ground_truth,
        groups,
        edits,
    })
}
