use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::InteractionMatrix;
use crate::error::{Error, Result};

/// Disjoint train / validation / test users. Held-out users are further
/// partitioned into fold-in (observed) and holdout (to be ranked) items.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: InteractionMatrix,
    pub val_fold_in: InteractionMatrix,
    pub val_holdout: InteractionMatrix,
    pub test_fold_in: InteractionMatrix,
    pub test_holdout: InteractionMatrix,
    pub seed: u64,
}

/// Number of fold-in items for a row of length `n`: `round_half_up(f·n)`,
/// kept inside `[1, n − 1]` so both parts are nonempty.
pub fn fold_in_size(n: usize, fraction: f64) -> usize {
    let k = (fraction * n as f64 + 0.5).floor() as usize;
    k.clamp(1, n.saturating_sub(1).max(1))
}

pub fn split_dataset(
    m: &InteractionMatrix,
    n_val_users: usize,
    n_test_users: usize,
    fold_in_fraction: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(fold_in_fraction > 0.0 && fold_in_fraction < 1.0) {
        return Err(Error::Split(format!(
            "fold-in fraction must lie in (0, 1), got {fold_in_fraction}"
        )));
    }
    if n_val_users + n_test_users >= m.n_users() {
        return Err(Error::Split(format!(
            "{} validation + {} test users leaves no training users out of {}",
            n_val_users,
            n_test_users,
            m.n_users()
        )));
    }

    let mut rng = crate::seeded_rng(seed);
    let mut order: Vec<usize> = (0..m.n_users()).collect();
    order.shuffle(&mut rng);

    let mut val: Vec<usize> = order[..n_val_users].to_vec();
    let mut test: Vec<usize> = order[n_val_users..n_val_users + n_test_users].to_vec();
    let mut train: Vec<usize> = order[n_val_users + n_test_users..].to_vec();
    val.sort_unstable();
    test.sort_unstable();
    train.sort_unstable();

    let (val_fold_in, val_holdout) = fold_in_holdout(m, &val, fold_in_fraction, &mut rng)?;
    let (test_fold_in, test_holdout) = fold_in_holdout(m, &test, fold_in_fraction, &mut rng)?;

    Ok(SplitDataset {
        train: m.select_users(&train),
        val_fold_in,
        val_holdout,
        test_fold_in,
        test_holdout,
        seed,
    })
}

fn fold_in_holdout(
    m: &InteractionMatrix,
    users: &[usize],
    fraction: f64,
    rng: &mut crate::Rng,
) -> Result<(InteractionMatrix, InteractionMatrix)> {
    let mut fold_rows = Vec::with_capacity(users.len());
    let mut hold_rows = Vec::with_capacity(users.len());
    for &u in users {
        let row = m.row(u);
        if row.len() < 2 {
            return Err(Error::Split(format!(
                "held-out user `{}` has {} interaction(s); at least 2 are needed",
                m.user_ids()[u],
                row.len()
            )));
        }
        let mut items = row.to_vec();
        items.shuffle(rng);
        let k = fold_in_size(items.len(), fraction);
        let mut fold = items[..k].to_vec();
        let mut hold = items[k..].to_vec();
        fold.sort_unstable();
        hold.sort_unstable();
        fold_rows.push(fold);
        hold_rows.push(hold);
    }
    let ids: Vec<String> = users.iter().map(|&u| m.user_ids()[u].clone()).collect();
    let items = m.item_ids().to_vec();
    Ok((
        InteractionMatrix::from_rows(fold_rows, m.n_items(), ids.clone(), items.clone())?,
        InteractionMatrix::from_rows(hold_rows, m.n_items(), ids, items)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn toy(n_users: usize, n_items: usize, row_len: usize) -> InteractionMatrix {
        let rows = (0..n_users)
            .map(|u| (0..row_len).map(|k| ((u + 3 * k) % n_items) as u32).collect::<BTreeSet<_>>())
            .map(|s| s.into_iter().collect())
            .collect();
        InteractionMatrix::from_rows_anonymous(rows, n_items).unwrap()
    }

    #[test]
    fn eighty_percent_of_five_is_four() {
        assert_eq!(fold_in_size(5, 0.8), 4);
        assert_eq!(fold_in_size(10, 0.8), 8);
        assert_eq!(fold_in_size(3, 0.5), 2); // 1.5 rounds half up
        assert_eq!(fold_in_size(2, 0.8), 1); // clamped to keep a holdout item
    }

    #[test]
    fn user_sets_partition_all_users() {
        let m = toy(100, 40, 5);
        let s = split_dataset(&m, 10, 10, 0.8, 7).unwrap();
        assert_eq!(s.train.n_users(), 80);
        assert_eq!(s.val_fold_in.n_users(), 10);
        assert_eq!(s.test_fold_in.n_users(), 10);
        let mut all: Vec<&String> = s
            .train
            .user_ids()
            .iter()
            .chain(s.val_fold_in.user_ids())
            .chain(s.test_fold_in.user_ids())
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 100);
        for u in 0..10 {
            assert_eq!(s.val_fold_in.row(u).len(), 4);
            assert_eq!(s.val_holdout.row(u).len(), 1);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let m = toy(50, 30, 6);
        let a = split_dataset(&m, 5, 5, 0.8, 3).unwrap();
        let b = split_dataset(&m, 5, 5, 0.8, 3).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&m, 5, 5, 0.8, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_requests() {
        let m = toy(10, 30, 6);
        assert!(matches!(split_dataset(&m, 5, 5, 0.8, 0), Err(Error::Split(_))));
        assert!(matches!(split_dataset(&m, 1, 1, 1.0, 0), Err(Error::Split(_))));
        let single = toy(10, 30, 1);
        assert!(matches!(split_dataset(&single, 2, 2, 0.8, 0), Err(Error::Split(_))));
    }
}
