//! Entities, collections, ground truth and CSV ingestion.
//!
//! Ids are opaque strings. Every column other than the id column is kept as
//! a textual attribute, in header order; missing cells are stored as empty
//! strings.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub attributes: Vec<(String, String)>,
}

impl Entity {
    pub fn new(id: impl Into<String>, attributes: Vec<(String, String)>) -> Self {
        Self {
            id: id.into(),
            attributes,
        }
    }

    pub fn value(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    /// An entity whose attribute values are all empty.
    pub fn is_empty(&self) -> bool {
        self.attributes.iter().all(|(_, v)| v.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityCollection {
    source_name: String,
    attribute_names: Vec<String>,
    entities: Vec<Entity>,
}

impl EntityCollection {
    /// Builds a collection, checking id uniqueness and that every entity
    /// carries exactly `attribute_names` in order.
    pub fn new(
        source_name: impl Into<String>,
        attribute_names: Vec<String>,
        entities: Vec<Entity>,
    ) -> Result<Self> {
        let source_name = source_name.into();
        let mut seen = HashSet::with_capacity(entities.len());
        for (row, e) in entities.iter().enumerate() {
            if e.id.is_empty() {
                return Err(Error::ingest(&source_name, format!("entity {row} has an empty id")));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::ingest(&source_name, format!("duplicate id `{}` at entity {row}", e.id)));
            }
            let names_match = e.attributes.len() == attribute_names.len()
                && e.attributes.iter().zip(&attribute_names).all(|((n, _), m)| n == m);
            if !names_match {
                return Err(Error::ingest(
                    &source_name,
                    format!("entity `{}` does not carry the collection attributes", e.id),
                ));
            }
        }
        Ok(Self {
            source_name,
            attribute_names,
            entities,
        })
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(|e| e.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }
}

/// A pair of entity ids.
///
/// For Clean-Clean candidates and matches `left` belongs to the first
/// collection and `right` to the second. Ground truth and Dirty candidates
/// use the canonical unordered form produced by [`IdPair::unordered`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IdPair {
    pub left: String,
    pub right: String,
}

impl IdPair {
    pub fn new(left: impl Into<String>, right: impl Into<String>) -> Self {
        Self {
            left: left.into(),
            right: right.into(),
        }
    }

    /// Canonical form of an unordered pair: the lexicographically smaller id first.
    pub fn unordered(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            Self::new(a, b)
        } else {
            Self::new(b, a)
        }
    }

    pub fn canonical(&self) -> IdPair {
        IdPair::unordered(self.left.clone(), self.right.clone())
    }

    pub fn is_self_pair(&self) -> bool {
        self.left == self.right
    }
}

impl fmt::Display for IdPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.left, self.right)
    }
}

/// The set of true duplicate pairs, stored unordered.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pairs: BTreeSet<IdPair>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts the canonical form of `(a, b)`; returns false if it was already present.
    pub fn insert(&mut self, a: impl Into<String>, b: impl Into<String>) -> bool {
        self.pairs.insert(IdPair::unordered(a, b))
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.pairs.contains(&IdPair::unordered(a, b))
    }

    pub fn contains_pair(&self, pair: &IdPair) -> bool {
        self.contains(&pair.left, &pair.right)
    }

    pub fn pairs(&self) -> &BTreeSet<IdPair> {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &IdPair> {
        self.pairs.iter()
    }
}

impl<A: Into<String>, B: Into<String>> FromIterator<(A, B)> for GroundTruth {
    fn from_iter<T: IntoIterator<Item = (A, B)>>(iter: T) -> Self {
        let mut gt = GroundTruth::new();
        for (a, b) in iter {
            gt.insert(a, b);
        }
        gt
    }
}

#[derive(Debug, Clone)]
pub enum ErTask {
    /// Record linkage between two individually duplicate-free collections.
    CleanClean {
        left: EntityCollection,
        right: EntityCollection,
        ground_truth: GroundTruth,
    },
    /// Deduplication of a single collection.
    Dirty {
        collection: EntityCollection,
        ground_truth: GroundTruth,
    },
}

impl ErTask {
    pub fn ground_truth(&self) -> &GroundTruth {
        match self {
            ErTask::CleanClean { ground_truth, .. } | ErTask::Dirty { ground_truth, .. } => {
                ground_truth
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Ground-truth ids that occur in none of the task's collections, sorted.
    pub absent_ids: Vec<String>,
    /// Entities whose attributes are all empty.
    pub empty_entities: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.absent_ids.is_empty()
    }
}

pub fn validate_task(task: &ErTask) -> ValidationReport {
    let collections: Vec<&EntityCollection> = match task {
        ErTask::CleanClean { left, right, .. } => vec![left, right],
        ErTask::Dirty { collection, .. } => vec![collection],
    };
    let known: HashSet<&str> = collections.iter().flat_map(|c| c.ids()).collect();
    let mut absent = BTreeSet::new();
    for pair in task.ground_truth().iter() {
        for id in [&pair.left, &pair.right] {
            if !known.contains(id.as_str()) {
                absent.insert(id.clone());
            }
        }
    }
    let empty_entities = collections
        .iter()
        .flat_map(|c| c.entities())
        .filter(|e| e.is_empty())
        .count();
    ValidationReport {
        absent_ids: absent.into_iter().collect(),
        empty_entities,
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_line(record: &csv::StringRecord, fallback: u64) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(fallback)
}

/// Reads an entity CSV. The header row names the columns; `id_column` holds
/// the entity id and every other column becomes an attribute.
pub fn load_csv(path: impl AsRef<Path>, id_column: &str) -> Result<EntityCollection> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::ingest(path, format!("unreadable header: {e}")))?,
        None => return Err(Error::ingest(path, "missing header row")),
    };
    let header: Vec<String> = header.iter().map(str::to_owned).collect();
    let id_idx = header
        .iter()
        .position(|h| h == id_column)
        .ok_or_else(|| Error::ingest(path, format!("missing id column `{id_column}`")))?;
    let attribute_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != id_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut entities = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in records.enumerate() {
        let line = row as u64 + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let line = csv_line(&record, line);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() > header.len() {
            return Err(Error::parse(
                path,
                line,
                format!("row has {} fields, header has {}", record.len(), header.len()),
            ));
        }
        let cell = |i: usize| record.get(i).unwrap_or("").to_owned();
        let id = cell(id_idx);
        if id.is_empty() {
            return Err(Error::parse(path, line, format!("empty value in id column `{id_column}`")));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id `{id}`")));
        }
        let attributes = (0..header.len())
            .filter(|&i| i != id_idx)
            .map(|i| (header[i].clone(), cell(i)))
            .collect();
        entities.push(Entity { id, attributes });
    }
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EntityCollection::new(source, attribute_names, entities)
}

/// Writes a collection with the id in the first column, named `id_column`.
pub fn write_csv(collection: &EntityCollection, path: impl AsRef<Path>, id_column: &str) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![id_column];
    header.extend(collection.attribute_names().iter().map(String::as_str));
    w.write_record(&header).map_err(csv_err)?;
    for e in collection.entities() {
        let mut row = vec![e.id.as_str()];
        row.extend(e.attributes.iter().map(|(_, v)| v.as_str()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a two-column ground-truth CSV (`left_id,right_id` header).
pub fn load_groundtruth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let mut records = reader.records();
    match records.next() {
        Some(Ok(h)) if h.len() == 2 => {}
        Some(Ok(h)) => {
            return Err(Error::parse(path, 1, format!("expected 2 header columns, found {}", h.len())))
        }
        Some(Err(e)) => return Err(Error::parse(path, 1, e.to_string())),
        None => return Err(Error::ingest(path, "missing header row")),
    }
    let mut gt = GroundTruth::new();
    for (row, record) in records.enumerate() {
        let line = row as u64 + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let line = csv_line(&record, line);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match (record.len(), record.get(0), record.get(1)) {
            (2, Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => {
                gt.insert(a, b);
            }
            (n, _, _) => {
                return Err(Error::parse(path, line, format!("expected two non-empty ids, found {n} fields")))
            }
        }
    }
    Ok(gt)
}

pub fn write_groundtruth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    write_pairs(gt.iter(), path)
}

/// Writes pairs as a `left_id,right_id` CSV.
pub fn write_pairs<'a>(pairs: impl IntoIterator<Item = &'a IdPair>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["left_id", "right_id"]).map_err(csv_err)?;
    for p in pairs {
        w.write_record([&p.left, &p.right]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an ordered `left_id,right_id` CSV without canonicalizing the pairs.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<IdPair>> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate().skip(1) {
        let line = row as u64 + 1;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        match (record.get(0), record.get(1)) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => out.push(IdPair::new(a, b)),
            _ => return Err(Error::parse(path, csv_line(&record, line), "expected two non-empty ids")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_simple_csv() {
        let f = write_tmp("id,name,price\n1,Apple Watch,399\n2, Galaxy Watch ,\n");
        let c = load_csv(f.path(), "id").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.attribute_names(), ["name", "price"]);
        assert_eq!(c.entities()[1].value("name"), Some("Galaxy Watch"));
        assert_eq!(c.entities()[1].value("price"), Some(""));
    }

    #[test]
    fn id_column_need_not_be_first() {
        let f = write_tmp("name,key,price\nx,k1,1\ny,k2\n");
        let c = load_csv(f.path(), "key").unwrap();
        assert_eq!(c.ids().collect::<Vec<_>>(), ["k1", "k2"]);
        assert_eq!(c.attribute_names(), ["name", "price"]);
        assert_eq!(c.entities()[1].value("price"), Some(""));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let f = write_tmp("id,name\n7,a\n7,b\n");
        let err = load_csv(f.path(), "id").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("duplicate id `7`"));
    }

    #[test]
    fn rejects_missing_id_column_and_header() {
        let f = write_tmp("key,name\n1,a\n");
        let err = load_csv(f.path(), "id").unwrap_err();
        assert!(err.to_string().contains("missing id column `id`"));
        let f = write_tmp("");
        assert!(load_csv(f.path(), "id").is_err());
    }

    #[test]
    fn groundtruth_collapses_reversed_rows() {
        let f = write_tmp("left_id,right_id\na,b\nb,a\n");
        let gt = load_groundtruth(f.path()).unwrap();
        assert_eq!(gt.len(), 1);
        assert!(gt.contains("b", "a"));
    }

    #[test]
    fn groundtruth_header_only_is_empty() {
        let f = write_tmp("left_id,right_id\n");
        assert!(load_groundtruth(f.path()).unwrap().is_empty());
    }

    #[test]
    fn groundtruth_malformed_row_reports_line() {
        let f = write_tmp("left_id,right_id\na,b\nc\n");
        let err = load_groundtruth(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    fn collection(ids: &[&str]) -> EntityCollection {
        let names = vec!["name".to_string()];
        let entities = ids
            .iter()
            .map(|id| Entity::new(*id, vec![("name".into(), format!("n{id}"))]))
            .collect();
        EntityCollection::new("t", names, entities).unwrap()
    }

    #[test]
    fn validation_flags_absent_ids() {
        let task = ErTask::CleanClean {
            left: collection(&["a"]),
            right: collection(&["x"]),
            ground_truth: [("a", "x"), ("a", "zz")].into_iter().collect(),
        };
        let report = validate_task(&task);
        assert_eq!(report.absent_ids, ["zz"]);
        assert!(!report.is_valid());
    }

    #[test]
    fn validation_of_well_formed_task_is_empty() {
        let task = ErTask::Dirty {
            collection: collection(&["a", "b"]),
            ground_truth: [("a", "b")].into_iter().collect(),
        };
        assert_eq!(validate_task(&task), ValidationReport::default());
    }

    #[test]
    fn validation_counts_empty_entities() {
        let names = vec!["a".to_string(), "b".to_string()];
        let entities = vec![
            Entity::new("1", vec![("a".into(), "".into()), ("b".into(), "".into())]),
            Entity::new("2", vec![("a".into(), "x".into()), ("b".into(), "".into())]),
        ];
        let c = EntityCollection::new("t", names, entities).unwrap();
        let report = validate_task(&ErTask::Dirty {
            collection: c,
            ground_truth: GroundTruth::new(),
        });
        assert_eq!(report.empty_entities, 1);
        assert!(report.is_valid());
    }
}
