use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

use super::Vector;

/// Static word vectors keyed by token.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    entries: HashMap<String, Vector>,
}

impl WordVectorTable {
    pub fn from_entries(dim: usize, entries: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let mut map = HashMap::with_capacity(entries.len());
        for (token, values) in entries {
            if values.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: values.len(),
                });
            }
            map.insert(token, Vector::new(values)?);
        }
        Ok(Self { dim, entries: map })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&Vector> {
        self.entries.get(token)
    }
}

/// Reads the plain-text format: one `token f1 ... fD` line per word.
/// The dimension comes from the first line; on duplicate tokens the last line wins.
pub fn load_word_table(path: impl AsRef<Path>) -> Result<WordVectorTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim = None;
    let mut entries = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().unwrap_or_default().to_owned();
        let values = fields
            .map(|f| f.parse::<f32>().map_err(|_| Error::parse(path, line_no, format!("non-numeric value `{f}`"))))
            .collect::<Result<Vec<f32>>>()?;
        let expected = *dim.get_or_insert(values.len());
        if values.is_empty() || values.len() != expected {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {expected} values for `{token}`, found {}", values.len()),
            ));
        }
        let vector = Vector::new(values).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if entries.insert(token.clone(), vector).is_some() {
            log::warn!("{}:{line_no}: duplicate token `{token}`, keeping the later vector", path.display());
        }
    }
    Ok(WordVectorTable {
        dim: dim.unwrap_or(0),
        entries,
    })
}

/// Mean of the vectors of in-vocabulary tokens; the zero vector when none is known.
pub fn embed_word_average(tokens: &[String], table: &WordVectorTable) -> Vector {
    let mut sum = vec![0.0f64; table.dim];
    let mut hits = 0usize;
    for v in tokens.iter().filter_map(|t| table.get(t)) {
        for (s, x) in sum.iter_mut().zip(v.as_slice()) {
            *s += f64::from(*x);
        }
        hits += 1;
    }
    if hits == 0 {
        return Vector::zeros(table.dim);
    }
    Vector(sum.into_iter().map(|s| (s / hits as f64) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn table_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn toks(t: &[&str]) -> Vec<String> {
        t.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn loads_table() {
        let f = table_file("a 1 0 0\nb 0 1 0.5\n");
        let t = load_word_table(f.path()).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b").unwrap().as_slice(), [0.0, 1.0, 0.5]);
    }

    #[test]
    fn rejects_dimension_drift() {
        let f = table_file("a 1 0 0\nb 0 1\n");
        let err = load_word_table(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_non_numeric() {
        let f = table_file("a 1 x\n");
        assert!(matches!(load_word_table(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_token_keeps_last() {
        let f = table_file("a 1 2\nb 0 0\na 3 4\n");
        let t = load_word_table(f.path()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("a").unwrap().as_slice(), [3.0, 4.0]);
    }

    fn ab_table() -> WordVectorTable {
        WordVectorTable::from_entries(2, vec![("a".into(), vec![1.0, 0.0]), ("b".into(), vec![0.0, 1.0])]).unwrap()
    }

    #[test]
    fn averages_known_tokens() {
        let t = ab_table();
        assert_eq!(embed_word_average(&toks(&["a", "b"]), &t).as_slice(), [0.5, 0.5]);
        assert_eq!(embed_word_average(&toks(&["zzz", "a", "b"]), &t).as_slice(), [0.5, 0.5]);
        let v = embed_word_average(&toks(&["a", "a", "b"]), &t);
        assert!((v.as_slice()[0] - 2.0 / 3.0).abs() < 1e-7);
        assert!((v.as_slice()[1] - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn all_oov_is_zero() {
        assert_eq!(embed_word_average(&toks(&["x", "y"]), &ab_table()), Vector::zeros(2));
        assert_eq!(embed_word_average(&[], &ab_table()), Vector::zeros(2));
    }

    proptest! {
        #[test]
        fn permutation_invariant(tokens in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 0..12), seed in any::<u64>()) {
            let t = ab_table();
            let tokens = toks(&tokens);
            let mut shuffled = tokens.clone();
            let n = shuffled.len();
            if n > 1 {
                // Fisher-Yates driven by the seed
                let mut s = seed;
                for i in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    shuffled.swap(i, (s >> 33) as usize % (i + 1));
                }
            }
            prop_assert_eq!(embed_word_average(&tokens, &t), embed_word_average(&shuffled, &t));
        }
    }
}
