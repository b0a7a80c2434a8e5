//! EMBV: id-keyed `f32` vectors in a little-endian binary file.
//!
//! ```text
//! magic   4 bytes  "EMBV"
//! version u16      1
//! dim     u32
//! count   u64
//! count × [id_len u32][id bytes, UTF-8][dim × f32]
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{EmbeddedCollection, Vector};

pub const MAGIC: [u8; 4] = *b"EMBV";
pub const VERSION: u16 = 1;

/// Precomputed vectors keyed by entity id.
#[derive(Debug, Clone, PartialEq)]
pub struct Precomputed {
    pub dim: usize,
    pub map: HashMap<String, Vector>,
}

/// Writes `(id, vector)` records; every vector must have length `dim`.
pub fn write_embv<'a, I>(path: impl AsRef<Path>, dim: usize, records: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a [f32])>,
    I::IntoIter: ExactSizeIterator,
{
    let path = path.as_ref();
    let records = records.into_iter();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(&MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    let dim32 = u32::try_from(dim).map_err(|_| Error::Format(format!("dimension {dim} exceeds u32")))?;
    w.write_all(&dim32.to_le_bytes()).map_err(io)?;
    w.write_all(&(records.len() as u64).to_le_bytes()).map_err(io)?;
    for (id, values) in records {
        if values.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: values.len(),
            });
        }
        w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(id.as_bytes()).map_err(io)?;
        for v in values {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

impl EmbeddedCollection {
    pub fn write_embv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_embv(path, self.dim(), self.ids().iter().map(String::as_str).zip(self.vectors()))
    }
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::Format(format!("truncated file while reading {what}")))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.exact(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.exact(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }
}

/// Reads an EMBV file into an ordered collection.
pub fn read_embv(path: impl AsRef<Path>) -> Result<EmbeddedCollection> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Cursor {
        inner: BufReader::new(file),
    };
    let mut magic = [0u8; 4];
    r.exact(&mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic bytes {magic:02x?}")));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = r.u32("dimension")? as usize;
    let count = r.u64("record count")?;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut fbuf = vec![0u8; dim * 4];
    for i in 0..count {
        let len = r.u32("id length")? as usize;
        let mut idb = vec![0u8; len];
        r.exact(&mut idb, "id")?;
        let id = String::from_utf8(idb).map_err(|_| Error::Format(format!("record {i}: id is not UTF-8")))?;
        r.exact(&mut fbuf, "vector")?;
        for chunk in fbuf.chunks_exact(4) {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::Format(format!("record {i} (`{id}`): non-finite value")));
            }
            data.push(v);
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Format(format!("duplicate id `{id}`")));
        }
        ids.push(id);
    }
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format("trailing bytes after the last record".into()));
    }
    EmbeddedCollection::from_flat(ids, data, dim, format!("precomputed(dim={dim})"))
}

/// Reads an EMBV file into an id → vector map.
pub fn load_precomputed(path: impl AsRef<Path>) -> Result<Precomputed> {
    let emb = read_embv(path)?;
    let map = emb
        .ids()
        .iter()
        .zip(emb.vectors())
        .map(|(id, v)| (id.clone(), Vector(v.to_vec())))
        .collect();
    Ok(Precomputed { dim: emb.dim(), map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_file_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.embv");
        write_embv(&p, 8, Vec::<(&str, &[f32])>::new()).unwrap();
        let loaded = load_precomputed(&p).unwrap();
        assert_eq!(loaded.dim, 8);
        assert!(loaded.map.is_empty());
        // header only: 4 + 2 + 4 + 8 bytes
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 18);
    }

    #[test]
    fn bit_exact_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.embv");
        write_embv(&p, 2, vec![("ab", &[1.0f32, -2.5][..])]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let mut expected = b"EMBV".to_vec();
        expected.extend([1, 0]);
        expected.extend([2, 0, 0, 0]);
        expected.extend([1, 0, 0, 0, 0, 0, 0, 0]);
        expected.extend([2, 0, 0, 0]);
        expected.extend(b"ab");
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-2.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn round_trip_is_bitwise_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dim = 17;
        let records: Vec<(String, Vec<f32>)> = (0..100)
            .map(|i| (format!("id-{i}"), (0..dim).map(|_| rng.random_range(-1e3f32..1e3)).collect()))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.embv");
        write_embv(&p, dim, records.iter().map(|(id, v)| (id.as_str(), v.as_slice()))).unwrap();
        let loaded = load_precomputed(&p).unwrap();
        assert_eq!(loaded.map.len(), 100);
        for (id, v) in &records {
            let got = loaded.map[id].as_slice();
            assert!(got.iter().zip(v).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let ordered = read_embv(&p).unwrap();
        assert_eq!(ordered.id(42), "id-42");
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.embv");
        write_embv(&p, 2, vec![("a", &[1.0f32, 2.0][..])]).unwrap();
        let good = std::fs::read(&p).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_embv(&p), Err(Error::Format(m)) if m.contains("magic")));

        let mut bad = good.clone();
        bad[4] = 2;
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_embv(&p), Err(Error::Format(m)) if m.contains("version")));

        std::fs::write(&p, &good[..good.len() - 1]).unwrap();
        assert!(matches!(read_embv(&p), Err(Error::Format(m)) if m.contains("truncated")));

        let mut bad = good.clone();
        bad.push(0);
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_embv(&p), Err(Error::Format(_))));
    }
}
