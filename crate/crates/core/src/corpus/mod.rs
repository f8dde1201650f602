//! Interaction data: the sparse binary user×item matrix, ingestion with the
//! usual count filters, fold-in/holdout user splits and synthetic
//! nested-cohort datasets.

mod ingest;
pub mod io;
mod split;
mod synth;

pub use ingest::{ingest_events, ingest_reader};
pub use split::{split_dataset, SplitDataset};
pub use synth::{synth_block_dataset, SynthSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary user×item interactions in compressed sparse row form.
///
/// Row `u` holds the strictly increasing item indices user `u` interacted
/// with. `user_ids[u]` / `item_ids[i]` map dense indices back to external ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    n_items: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl InteractionMatrix {
    /// Builds a matrix from per-user sorted rows, validating every invariant.
    pub fn from_rows(
        rows: Vec<Vec<u32>>,
        n_items: usize,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Result<Self> {
        if user_ids.len() != rows.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} user ids",
                rows.len(),
                user_ids.len()
            )));
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for row in rows {
            indices.extend_from_slice(&row);
            indptr.push(indices.len());
        }
        Self::from_csr(n_items, indptr, indices, user_ids, item_ids)
    }

    pub fn from_csr(
        n_items: usize,
        indptr: Vec<usize>,
        indices: Vec<u32>,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Result<Self> {
        let m = Self {
            n_items,
            indptr,
            indices,
            user_ids,
            item_ids,
        };
        m.validate()?;
        Ok(m)
    }

    /// Rows with generated ids `u{k}` / `i{k}`.
    pub fn from_rows_anonymous(rows: Vec<Vec<u32>>, n_items: usize) -> Result<Self> {
        let user_ids = (0..rows.len()).map(|u| format!("u{u}")).collect();
        let item_ids = (0..n_items).map(|i| format!("i{i}")).collect();
        Self::from_rows(rows, n_items, user_ids, item_ids)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Shape(msg));
        if self.indptr.first() != Some(&0) || self.indptr.len() != self.user_ids.len() + 1 {
            return bad("row offsets do not match user count".into());
        }
        if *self.indptr.last().unwrap() != self.indices.len() {
            return bad("last row offset does not equal nnz".into());
        }
        if self.item_ids.len() != self.n_items {
            return bad(format!(
                "{} item ids for {} items",
                self.item_ids.len(),
                self.n_items
            ));
        }
        for u in 0..self.n_users() {
            if self.indptr[u] > self.indptr[u + 1] {
                return bad(format!("row offsets decrease at user {u}"));
            }
            let row = self.row(u);
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {u} is not strictly increasing"));
            }
            if row.last().is_some_and(|&i| i as usize >= self.n_items) {
                return bad(format!("row {u} has an item index >= {}", self.n_items));
            }
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn row(&self, u: usize) -> &[u32] {
        &self.indices[self.indptr[u]..self.indptr[u + 1]]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        (0..self.n_users()).map(move |u| self.row(u))
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Sub-matrix over the given users (in the given order), sharing the
    /// item index space.
    pub fn select_users(&self, users: &[usize]) -> Self {
        let rows = users.iter().map(|&u| self.row(u).to_vec()).collect();
        let user_ids = users.iter().map(|&u| self.user_ids[u].clone()).collect();
        Self::from_rows(rows, self.n_items, user_ids, self.item_ids.clone())
            .expect("selecting rows preserves invariants")
    }

    /// Item interaction counts.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items];
        for &i in &self.indices {
            counts[i as usize] += 1;
        }
        counts
    }
}

/// `‖x_u − x_v‖₁` for two sorted binary rows.
pub fn hamming(a: &[u32], b: &[u32]) -> usize {
    a.len() + b.len() - 2 * overlap(a, b)
}

/// `⟨x_u, x_v⟩` for two sorted binary rows.
pub fn overlap(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_rows() {
        assert!(InteractionMatrix::from_rows_anonymous(vec![vec![0, 2], vec![1]], 3).is_ok());
        assert!(InteractionMatrix::from_rows_anonymous(vec![vec![2, 0]], 3).is_err());
        assert!(InteractionMatrix::from_rows_anonymous(vec![vec![1, 1]], 3).is_err());
        assert!(InteractionMatrix::from_rows_anonymous(vec![vec![3]], 3).is_err());
    }

    #[test]
    fn hamming_and_overlap() {
        assert_eq!(overlap(&[0, 1, 5], &[1, 5, 7]), 2);
        assert_eq!(hamming(&[0, 1, 5], &[1, 5, 7]), 2);
        assert_eq!(hamming(&[], &[1, 2]), 2);
    }

    #[test]
    fn select_users_keeps_item_space() {
        let m = InteractionMatrix::from_rows_anonymous(vec![vec![0], vec![1, 2], vec![2]], 4)
            .unwrap();
        let s = m.select_users(&[2, 0]);
        assert_eq!(s.n_items(), 4);
        assert_eq!(s.row(0), &[2]);
        assert_eq!(s.user_ids(), &["u2".to_string(), "u0".to_string()]);
        assert_eq!(m.item_counts(), vec![1, 1, 2, 0]);
    }
}
