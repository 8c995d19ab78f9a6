//! Model files.
//!
//! Binary layout, all little endian:
//!
//! ```text
//! "CEMB1"
//! repeated: name_len u32, name bytes, rows u64, dim u32, rows*dim f32 (row-major)
//! name_len 0
//! config hash u64
//! ```
//!
//! A cold-item fragment uses magic `CFRG1`, then `rows u64`, `dim u32`, and
//! per row the item id string followed by `dim` f32 values.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use dualcart_core::{EmbeddingStore, Matrix, Vocabulary};
use thiserror::Error;

use crate::bin_io::*;

const MAGIC: &[u8; 5] = b"CEMB1";
const FRAGMENT_MAGIC: &[u8; 5] = b"CFRG1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}: not a model snapshot")]
    Magic(PathBuf),
    #[error("snapshot is missing table {0}")]
    MissingTable(&'static str),
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("snapshot tables do not fit together: {0}")]
    Store(#[from] dualcart_core::StoreError),
    #[error("snapshot was trained with config hash {found:016x}, current config hashes to {expected:016x}")]
    HashMismatch { expected: u64, found: u64 },
    #[error("fragment dim {fragment} does not match model dim {model}")]
    DimMismatch { fragment: usize, model: usize },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_to(w: &mut impl Write, store: &EmbeddingStore, hash: u64) -> io::Result<()> {
    w.write_all(MAGIC)?;
    for (name, m) in store.tables() {
        put_str(w, name)?;
        put_u64(w, m.rows() as u64)?;
        put_u32(w, m.dim() as u32)?;
        let mut buf = Vec::with_capacity(m.rows() * m.dim() * 4);
        for v in m.to_vec() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    put_u32(w, 0)?;
    put_u64(w, hash)
}

pub fn to_bytes(store: &EmbeddingStore, hash: u64) -> Vec<u8> {
    let mut v = Vec::new();
    write_to(&mut v, store, hash).expect("writing to memory");
    v
}

pub fn save(path: &Path, store: &EmbeddingStore, hash: u64) -> Result<(), SnapshotError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    write_to(&mut w, store, hash).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn read_matrix(r: &mut impl Read) -> io::Result<Matrix> {
    let rows = get_u64(r)? as usize;
    let dim = get_u32(r)? as usize;
    let n = rows
        .checked_mul(dim)
        .filter(|&n| n < (1 << 34))
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "table too large"))?;
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    let vals = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Matrix::from_vec(rows, dim, vals))
}

/// Reads a snapshot and its stored config hash.
pub fn read_from(r: &mut impl Read, path: &Path) -> Result<(EmbeddingStore, u64), SnapshotError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(io_err(path))?;
    if &magic != MAGIC {
        return Err(SnapshotError::Magic(path.into()));
    }
    let (mut item_in, mut item_out, mut users, mut item_users, mut words, mut ufeat) =
        (None, None, None, None, None, None);
    loop {
        let name = get_str(r).map_err(io_err(path))?;
        if name.is_empty() {
            break;
        }
        let m = read_matrix(r).map_err(io_err(path))?;
        let slot = match name.as_str() {
            "items_in" => &mut item_in,
            "items_out" => &mut item_out,
            "users" => &mut users,
            "item_users" => &mut item_users,
            "item_tokens" => &mut words,
            "user_tokens" => &mut ufeat,
            _ => return Err(SnapshotError::UnknownTable(name)),
        };
        *slot = Some(m);
    }
    let hash = get_u64(r).map_err(io_err(path))?;
    let store = EmbeddingStore::from_tables(
        item_in.ok_or(SnapshotError::MissingTable("items_in"))?,
        item_out.ok_or(SnapshotError::MissingTable("items_out"))?,
        users.ok_or(SnapshotError::MissingTable("users"))?,
        item_users,
        words.ok_or(SnapshotError::MissingTable("item_tokens"))?,
        ufeat.ok_or(SnapshotError::MissingTable("user_tokens"))?,
    )?;
    Ok((store, hash))
}

pub fn load(path: &Path) -> Result<(EmbeddingStore, u64), SnapshotError> {
    let f = File::open(path).map_err(io_err(path))?;
    read_from(&mut BufReader::new(f), path)
}

/// Loads a snapshot and checks that it was trained under `expected_hash`.
pub fn load_verified(path: &Path, expected_hash: u64) -> Result<EmbeddingStore, SnapshotError> {
    let (store, found) = load(path)?;
    if found != expected_hash {
        return Err(SnapshotError::HashMismatch {
            expected: expected_hash,
            found,
        });
    }
    Ok(store)
}

/// Plain-text dump: a `# table NAME rows=R dim=D` header per table, then one
/// row per line with 9 significant digits.
pub fn export_text(store: &EmbeddingStore) -> String {
    let mut s = String::new();
    for (name, m) in store.tables() {
        s.push_str(&format!("# table {name} rows={} dim={}\n", m.rows(), m.dim()));
        for r in 0..m.rows() {
            let row: Vec<String> = m.row_vec(r).iter().map(|v| format!("{v:.8e}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
    }
    s
}

/// Item-in vectors for items outside the trained vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Fragment {
    pub dim: usize,
    pub items: Vec<(String, Vec<f32>)>,
}

impl Fragment {
    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        let f = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(f);
        let write = |w: &mut BufWriter<File>| -> io::Result<()> {
            w.write_all(FRAGMENT_MAGIC)?;
            put_u64(w, self.items.len() as u64)?;
            put_u32(w, self.dim as u32)?;
            for (id, v) in &self.items {
                put_str(w, id)?;
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            w.flush()
        };
        write(&mut w).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        let f = File::open(path).map_err(io_err(path))?;
        let mut r = BufReader::new(f);
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(io_err(path))?;
        if &magic != FRAGMENT_MAGIC {
            return Err(SnapshotError::Magic(path.into()));
        }
        let read = |r: &mut BufReader<File>| -> io::Result<Fragment> {
            let rows = get_u64(r)? as usize;
            let dim = get_u32(r)? as usize;
            let mut items = Vec::with_capacity(rows.min(1 << 20));
            for _ in 0..rows {
                let id = get_str(r)?;
                let v = (0..dim).map(|_| get_f32(r)).collect::<io::Result<Vec<f32>>>()?;
                items.push((id, v));
            }
            Ok(Fragment { dim, items })
        };
        read(&mut r).map_err(io_err(path))
    }

    /// Writes fragment rows into the model. Items already in the vocabulary
    /// get their item-in row replaced; new items are appended with zero
    /// item-out (and item-user) rows. Returns the merged model and vocabulary.
    pub fn merge_into(&self, store: &EmbeddingStore, vocab: &Vocabulary) -> Result<(EmbeddingStore, Vocabulary), SnapshotError> {
        if self.dim != store.dim() {
            return Err(SnapshotError::DimMismatch {
                fragment: self.dim,
                model: store.dim(),
            });
        }
        let mut vocab = vocab.clone();
        let mut fresh_in = Vec::new();
        let mut replace = Vec::new();
        for (id, v) in &self.items {
            match vocab.items.get(id) {
                Some(i) if (i as usize) < store.n_items() => replace.push((i, v)),
                _ => {
                    vocab.items.intern(id);
                    fresh_in.push(v.clone());
                }
            }
        }
        let n_new = fresh_in.len();
        let zeros = vec![vec![0.0f32; store.dim()]; n_new];
        let item_in = store.item_in.with_appended_rows(&fresh_in);
        for (i, v) in replace {
            item_in.write_row(i as usize, v);
        }
        let item_out = store.item_out.with_appended_rows(&zeros);
        let item_user = store
            .item_user
            .as_ref()
            .map(|m| m.with_appended_rows(&vec![vec![0.0f32; m.dim()]; n_new]));
        let old_rows = vocab.item_context.rows();
        let mut lists: Vec<Vec<u32>> = vocab.item_context.iter().map(|l| l.to_vec()).collect();
        lists.resize(old_rows + n_new, Vec::new());
        vocab.item_context = dualcart_core::TokenLists::from_lists(lists);
        let merged = EmbeddingStore::from_tables(
            item_in,
            item_out,
            store.user.clone(),
            item_user,
            store.word.clone(),
            store.user_feat.clone(),
        )?;
        Ok((merged, vocab))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dualcart_core::store::StoreShape;
    use dualcart_core::ItemUserTable;

    fn store(mode: ItemUserTable) -> EmbeddingStore {
        EmbeddingStore::init(
            StoreShape {
                items: 5,
                users: 3,
                item_tokens: 4,
                user_tokens: 2,
                dim: 3,
                user_dim: if mode == ItemUserTable::Tied { 3 } else { 2 },
                item_user: mode,
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip_is_bitwise() {
        for mode in [ItemUserTable::Tied, ItemUserTable::Separate] {
            let st = store(mode);
            let bytes = to_bytes(&st, 42);
            let (back, h) = read_from(&mut bytes.as_slice(), Path::new("mem")).unwrap();
            assert_eq!(h, 42);
            assert_eq!(back, st);
            assert_eq!(to_bytes(&back, 42), bytes);
        }
    }

    #[test]
    fn hash_is_verified() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cemb");
        save(&p, &store(ItemUserTable::Tied), 7).unwrap();
        assert!(load_verified(&p, 7).is_ok());
        assert!(matches!(load_verified(&p, 8), Err(SnapshotError::HashMismatch { .. })));
    }

    #[test]
    fn truncated_and_foreign_files_fail() {
        let bytes = to_bytes(&store(ItemUserTable::Tied), 1);
        assert!(read_from(&mut &bytes[..bytes.len() - 3], Path::new("m")).is_err());
        assert!(matches!(read_from(&mut &b"XXXXXX"[..], Path::new("m")), Err(SnapshotError::Magic(_))));
    }

    #[test]
    fn text_export_header() {
        let st = store(ItemUserTable::Tied);
        let t = export_text(&st);
        assert!(t.starts_with("# table items_in rows=5 dim=3\n"));
        let first: Vec<f32> = t.lines().nth(1).unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first, st.item_in.row_vec(0));
    }

    #[test]
    fn fragment_merge_appends_and_replaces() {
        let st = store(ItemUserTable::Tied);
        let mut vocab = Vocabulary::default();
        for i in 0..5 {
            vocab.items.intern(&format!("i{i}"));
        }
        vocab.item_context = dualcart_core::TokenLists::empty(5);
        let frag = Fragment {
            dim: 3,
            items: vec![("new".into(), vec![1.0, 2.0, 3.0]), ("i1".into(), vec![0.5, 0.5, 0.5])],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.frag");
        frag.save(&p).unwrap();
        assert_eq!(Fragment::load(&p).unwrap(), frag);
        let (m, v) = frag.merge_into(&st, &vocab).unwrap();
        assert_eq!(m.n_items(), 6);
        assert_eq!(v.items.get("new"), Some(5));
        assert_eq!(m.item_in.row_vec(5), vec![1.0, 2.0, 3.0]);
        assert_eq!(m.item_in.row_vec(1), vec![0.5, 0.5, 0.5]);
        assert_eq!(m.item_in.row_vec(0), st.item_in.row_vec(0));
    }
}
