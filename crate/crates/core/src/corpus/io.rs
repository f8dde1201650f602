//! On-disk layout for interaction matrices and splits.
//!
//! A `.csr` file is little-endian:
//!
//! ```text
//! b"PIA1" | u64 n_users | u64 n_items | u64 nnz
//!         | (n_users + 1) × u64 row offsets | nnz × u32 item indices
//! ```
//!
//! A split directory holds `train.csr`, `val_fold.csr`, `val_hold.csr`,
//! `test_fold.csr`, `test_hold.csr`, plus `idmap.tsv` with columns
//! `kind split index id` (`item - <i> <id>` rows, then
//! `user <train|val|test> <row> <id>` rows) and `split.json` with the seed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{InteractionMatrix, SplitDataset};
use crate::error::{Error, Result};

pub const CSR_MAGIC: &[u8; 4] = b"PIA1";

pub const TRAIN_FILE: &str = "train.csr";
pub const VAL_FOLD_FILE: &str = "val_fold.csr";
pub const VAL_HOLD_FILE: &str = "val_hold.csr";
pub const TEST_FOLD_FILE: &str = "test_fold.csr";
pub const TEST_HOLD_FILE: &str = "test_hold.csr";
pub const IDMAP_FILE: &str = "idmap.tsv";
pub const SPLIT_META_FILE: &str = "split.json";

/// Raw CSR payload of a `.csr` file (ids live in `idmap.tsv`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsrParts {
    pub n_users: usize,
    pub n_items: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
}

pub fn write_csr<W: Write>(m: &InteractionMatrix, mut w: W) -> std::io::Result<()> {
    w.write_all(CSR_MAGIC)?;
    for v in [m.n_users(), m.n_items(), m.nnz()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for &off in m.indptr() {
        w.write_all(&(off as u64).to_le_bytes())?;
    }
    for &i in m.indices() {
        w.write_all(&i.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_csr<R: Read>(mut r: R, path: &Path) -> Result<CsrParts> {
    let format = |message: String| Error::Format {
        path: path.to_owned(),
        message,
    };
    let io = |e: std::io::Error| Error::io(path, e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CSR_MAGIC {
        return Err(format(format!("bad magic {magic:?}")));
    }
    let read_u64 = |r: &mut R| -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(io)?;
        Ok(u64::from_le_bytes(b))
    };
    let n_users = read_u64(&mut r)? as usize;
    let n_items = read_u64(&mut r)? as usize;
    let nnz = read_u64(&mut r)? as usize;
    let mut indptr = Vec::with_capacity(n_users + 1);
    for _ in 0..=n_users {
        indptr.push(read_u64(&mut r)? as usize);
    }
    let mut buf = vec![0u8; nnz * 4];
    r.read_exact(&mut buf).map_err(io)?;
    let indices = buf
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(io)?;
    if !rest.is_empty() {
        return Err(format(format!("{} trailing bytes", rest.len())));
    }
    if indptr.last() != Some(&nnz) {
        return Err(format("row offsets do not end at nnz".into()));
    }
    Ok(CsrParts {
        n_users,
        n_items,
        indptr,
        indices,
    })
}

fn write_file(path: &Path, f: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    f(BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

fn check_id(id: &str, path: &Path) -> Result<()> {
    if id.contains(['\t', '\n', '\r']) {
        return Err(Error::Format {
            path: path.to_owned(),
            message: format!("id {id:?} contains a tab or newline"),
        });
    }
    Ok(())
}

/// Writes the five matrices plus `idmap.tsv` and `split.json` into `dir`.
pub fn write_split_dir(split: &SplitDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, m) in [
        (TRAIN_FILE, &split.train),
        (VAL_FOLD_FILE, &split.val_fold_in),
        (VAL_HOLD_FILE, &split.val_holdout),
        (TEST_FOLD_FILE, &split.test_fold_in),
        (TEST_HOLD_FILE, &split.test_holdout),
    ] {
        write_file(&dir.join(name), |w| write_csr(m, w))?;
    }

    let idmap = dir.join(IDMAP_FILE);
    let mut lines = String::from("kind\tsplit\tindex\tid\n");
    for (i, id) in split.train.item_ids().iter().enumerate() {
        check_id(id, &idmap)?;
        lines.push_str(&format!("item\t-\t{i}\t{id}\n"));
    }
    for (label, m) in [
        ("train", &split.train),
        ("val", &split.val_fold_in),
        ("test", &split.test_fold_in),
    ] {
        for (u, id) in m.user_ids().iter().enumerate() {
            check_id(id, &idmap)?;
            lines.push_str(&format!("user\t{label}\t{u}\t{id}\n"));
        }
    }
    write_file(&idmap, |mut w| w.write_all(lines.as_bytes()))?;

    let meta = serde_json::json!({ "seed": split.seed });
    write_file(&dir.join(SPLIT_META_FILE), |mut w| {
        w.write_all(meta.to_string().as_bytes())?;
        w.write_all(b"\n")
    })
}

struct IdMap {
    items: Vec<String>,
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

fn read_idmap(path: &Path) -> Result<IdMap> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut map = IdMap {
        items: Vec::new(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if n == 0 {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        let bad = || Error::Parse {
            line: n as u64 + 1,
            message: format!("malformed idmap line in {}", path.display()),
        };
        if fields.len() != 4 {
            return Err(bad());
        }
        let index: usize = fields[2].parse().map_err(|_| bad())?;
        let target = match (fields[0], fields[1]) {
            ("item", _) => &mut map.items,
            ("user", "train") => &mut map.train,
            ("user", "val") => &mut map.val,
            ("user", "test") => &mut map.test,
            _ => return Err(bad()),
        };
        if index != target.len() {
            return Err(bad());
        }
        target.push(fields[3].to_owned());
    }
    Ok(map)
}

fn load_matrix(dir: &Path, name: &str, users: &[String], items: &[String]) -> Result<InteractionMatrix> {
    let path = dir.join(name);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let parts = read_csr(BufReader::new(file), &path)?;
    if parts.n_users != users.len() || parts.n_items != items.len() {
        return Err(Error::Format {
            path,
            message: format!(
                "{}x{} matrix disagrees with id map ({} users, {} items)",
                parts.n_users,
                parts.n_items,
                users.len(),
                items.len()
            ),
        });
    }
    InteractionMatrix::from_csr(
        parts.n_items,
        parts.indptr,
        parts.indices,
        users.to_vec(),
        items.to_vec(),
    )
}

pub fn read_split_dir(dir: &Path) -> Result<SplitDataset> {
    let ids = read_idmap(&dir.join(IDMAP_FILE))?;
    let seed = match std::fs::read_to_string(dir.join(SPLIT_META_FILE)) {
        Ok(text) => serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v["seed"].as_u64())
            .unwrap_or(0),
        Err(_) => 0,
    };
    Ok(SplitDataset {
        train: load_matrix(dir, TRAIN_FILE, &ids.train, &ids.items)?,
        val_fold_in: load_matrix(dir, VAL_FOLD_FILE, &ids.val, &ids.items)?,
        val_holdout: load_matrix(dir, VAL_HOLD_FILE, &ids.val, &ids.items)?,
        test_fold_in: load_matrix(dir, TEST_FOLD_FILE, &ids.test, &ids.items)?,
        test_holdout: load_matrix(dir, TEST_HOLD_FILE, &ids.test, &ids.items)?,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split_dataset;

    #[test]
    fn csr_bytes_match_documented_layout() {
        let m = InteractionMatrix::from_rows_anonymous(vec![vec![1], vec![0, 2]], 3).unwrap();
        let mut buf = Vec::new();
        write_csr(&m, &mut buf).unwrap();
        let mut expected = b"PIA1".to_vec();
        for v in [2u64, 3, 3, 0, 1, 3] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        for i in [1u32, 0, 2] {
            expected.extend_from_slice(&i.to_le_bytes());
        }
        assert_eq!(buf, expected);
        let parts = read_csr(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(parts.indptr, vec![0, 1, 3]);
        assert_eq!(parts.indices, vec![1, 0, 2]);
    }

    #[test]
    fn rejects_corrupt_files() {
        let path = Path::new("mem");
        assert!(matches!(read_csr(&b"NOPE"[..], path), Err(Error::Format { .. })));
        let m = InteractionMatrix::from_rows_anonymous(vec![vec![1]], 3).unwrap();
        let mut buf = Vec::new();
        write_csr(&m, &mut buf).unwrap();
        buf.push(0);
        assert!(read_csr(&buf[..], path).is_err());
        buf.truncate(buf.len() - 3);
        assert!(read_csr(&buf[..], path).is_err());
    }

    #[test]
    fn split_dir_round_trip() {
        let rows = (0..30u32)
            .map(|u| vec![u % 7, 7 + u % 5, 12 + u % 3])
            .collect();
        let m = InteractionMatrix::from_rows_anonymous(rows, 15).unwrap();
        let split = split_dataset(&m, 5, 5, 0.8, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_split_dir(&split, dir.path()).unwrap();
        assert_eq!(read_split_dir(dir.path()).unwrap(), split);
    }
}
