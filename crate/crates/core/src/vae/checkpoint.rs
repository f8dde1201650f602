//! Model checkpoint container, little-endian:
//!
//! ```text
//! b"PIAM" | u64 n_items | u64 hidden | u64 latent | u64 flags
//!         | enc_w1 (I×hidden) | enc_b1 | enc_w_mu (latent×hidden) | enc_b_mu
//!         | enc_w_lv | enc_b_lv | dec_w (I×latent) | dec_b        (all f64)
//! [ b"ANCH" | u64 I | u64 d | anchors (I×d f64) ]
//! ```
//!
//! `flags` bit 0 records whether encoder inputs are L2-normalized.

use std::io::{Read, Write};
use std::path::Path;

use super::ModelParams;
use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;
use crate::pia::AnchorTable;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PIAM";
pub const ANCHOR_MAGIC: &[u8; 4] = b"ANCH";

const FLAG_NORMALIZE: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub anchors: Option<AnchorTable>,
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn checkpoint_bytes(ck: &Checkpoint) -> Vec<u8> {
    let p = &ck.params;
    let mut buf = CHECKPOINT_MAGIC.to_vec();
    put_u64(&mut buf, p.n_items() as u64);
    put_u64(&mut buf, p.hidden_dim() as u64);
    put_u64(&mut buf, p.latent_dim() as u64);
    put_u64(&mut buf, if p.normalize_input { FLAG_NORMALIZE } else { 0 });
    for seg in p.segments() {
        put_f64s(&mut buf, seg);
    }
    if let Some(a) = &ck.anchors {
        buf.extend_from_slice(ANCHOR_MAGIC);
        put_u64(&mut buf, a.n_items() as u64);
        put_u64(&mut buf, a.dim() as u64);
        put_f64s(&mut buf, a.anchors.as_slice());
    }
    buf
}

pub fn write_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&checkpoint_bytes(ck))
        .map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format {
                path: self.path.to_owned(),
                message: "truncated checkpoint".into(),
            });
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Format {
            path: self.path.to_owned(),
            message: "tensor size overflows".into(),
        })?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let format = |message: String| Error::Format {
        path: path.to_owned(),
        message,
    };
    let mut cur = Cursor { bytes, path };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(format("not a model checkpoint".into()));
    }
    let (i, h, d) = (cur.u64()?, cur.u64()?, cur.u64()?);
    let flags = cur.u64()?;
    let mut params = ModelParams::zeros(i, h, d);
    params.normalize_input = flags & FLAG_NORMALIZE as usize != 0;
    for seg in params.segments_mut() {
        let values = cur.f64s(seg.len())?;
        seg.copy_from_slice(&values);
    }
    params.validate()?;

    let anchors = if cur.bytes.is_empty() {
        None
    } else {
        if cur.take(4)? != ANCHOR_MAGIC {
            return Err(format("unknown trailing section".into()));
        }
        let (ai, ad) = (cur.u64()?, cur.u64()?);
        if (ai, ad) != (i, d) {
            return Err(format(format!("anchor table {ai}x{ad} does not match model {i}x{d}")));
        }
        let m = DenseMatrix::from_vec(ai, ad, cur.f64s(ai * ad)?)?;
        Some(AnchorTable::new(m, 1.0 / (ad as f64).sqrt())?)
    };
    if !cur.bytes.is_empty() {
        return Err(format(format!("{} trailing bytes", cur.bytes.len())));
    }
    Ok(Checkpoint { params, anchors })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_and_without_anchors() {
        let mut rng = crate::seeded_rng(5);
        let mut params = ModelParams::init(6, 4, 3, &mut rng);
        params.normalize_input = false;
        let anchors = AnchorTable::init(6, 3, &mut rng);
        let path = Path::new("mem");
        for anchors in [None, Some(anchors)] {
            let ck = Checkpoint {
                params: params.clone(),
                anchors,
            };
            let bytes = checkpoint_bytes(&ck);
            assert_eq!(&bytes[..4], b"PIAM");
            assert_eq!(parse_checkpoint(&bytes, path).unwrap(), ck);
        }
    }

    #[test]
    fn header_and_first_tensor_layout() {
        let mut p = ModelParams::zeros(2, 1, 1);
        p.enc_w1 = DenseMatrix::from_vec(2, 1, vec![1.5, -2.0]).unwrap();
        let bytes = checkpoint_bytes(&Checkpoint { params: p, anchors: None });
        let u = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        assert_eq!((u(4), u(12), u(20), u(28)), (2, 1, 1, 1));
        let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        assert_eq!((f(36), f(44)), (1.5, -2.0));
        // 2 + 1 + 1 + 1 + 1 + 1 + 2 + 2 values.
        assert_eq!(bytes.len(), 36 + 11 * 8);
    }

    #[test]
    fn rejects_corruption() {
        let p = ModelParams::zeros(2, 1, 1);
        let bytes = checkpoint_bytes(&Checkpoint { params: p, anchors: None });
        let path = Path::new("mem");
        assert!(parse_checkpoint(&bytes[..bytes.len() - 1], path).is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(b"JUNK");
        assert!(parse_checkpoint(&extra, path).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(parse_checkpoint(&bad, path), Err(Error::Format { .. })));
    }
}
