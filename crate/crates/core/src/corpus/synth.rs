use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::InteractionMatrix;
use crate::error::{Error, Result};

/// Planted nested-cohort dataset.
///
/// Cohort `k` has `cohort_sizes[k]` users whose positives are drawn from
/// support `k`. Supports are nested prefixes of one random item permutation,
/// so every smaller support is a subset of every larger one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub cohort_sizes: Vec<usize>,
    pub cohort_support_sizes: Vec<usize>,
    pub n_items: usize,
    /// Probability of each off-pattern item being added as a random positive.
    pub noise_rate: f64,
    /// Fraction of its cohort support each user covers (1.0 = the whole
    /// support).
    pub coverage: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Spec(m));
        if self.cohort_sizes.is_empty() {
            return err("at least one cohort is required".into());
        }
        if self.cohort_sizes.len() != self.cohort_support_sizes.len() {
            return err(format!(
                "{} cohort sizes but {} support sizes",
                self.cohort_sizes.len(),
                self.cohort_support_sizes.len()
            ));
        }
        if self.cohort_support_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return err("support sizes must be strictly increasing".into());
        }
        if self.cohort_support_sizes[0] == 0 {
            return err("supports must be nonempty".into());
        }
        let largest = *self.cohort_support_sizes.last().unwrap();
        if largest > self.n_items {
            return err(format!(
                "support of {largest} items exceeds n_items = {}",
                self.n_items
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return err(format!("noise rate {} outside [0, 1]", self.noise_rate));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return err(format!("coverage {} outside (0, 1]", self.coverage));
        }
        Ok(())
    }

    /// Item indices of support `k`, sorted.
    pub fn support(&self, k: usize) -> Vec<u32> {
        let mut s = self.item_permutation()[..self.cohort_support_sizes[k]].to_vec();
        s.sort_unstable();
        s
    }

    fn item_permutation(&self) -> Vec<u32> {
        let mut rng = crate::seeded_rng(self.seed);
        let mut perm: Vec<u32> = (0..self.n_items as u32).collect();
        perm.shuffle(&mut rng);
        perm
    }

    /// Cohort of each generated user, in row order.
    pub fn cohort_of_users(&self) -> Vec<usize> {
        self.cohort_sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| std::iter::repeat_n(k, n))
            .collect()
    }
}

const USER_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn synth_block_dataset(spec: &SynthSpec) -> Result<InteractionMatrix> {
    spec.validate()?;
    let perm = spec.item_permutation();
    // Separate stream for users so supports do not depend on cohort sizes.
    let mut rng = crate::seeded_rng(spec.seed ^ USER_STREAM_SALT);

    let mut rows = Vec::new();
    let mut user_ids = Vec::new();
    for (k, (&n_users, &support_size)) in spec
        .cohort_sizes
        .iter()
        .zip(&spec.cohort_support_sizes)
        .enumerate()
    {
        let support = &perm[..support_size];
        let take = ((spec.coverage * support_size as f64).round() as usize).clamp(1, support_size);
        for j in 0..n_users {
            let mut member = vec![false; spec.n_items];
            for pos in index::sample(&mut rng, support_size, take) {
                member[support[pos] as usize] = true;
            }
            if spec.noise_rate > 0.0 {
                for m in member.iter_mut() {
                    if !*m && rng.random_bool(spec.noise_rate) {
                        *m = true;
                    }
                }
            }
            rows.push(
                member
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &m)| m.then_some(i as u32))
                    .collect(),
            );
            user_ids.push(format!("c{k}_u{j}"));
        }
    }
    let item_ids = (0..spec.n_items).map(|i| format!("i{i}")).collect();
    InteractionMatrix::from_rows(rows, spec.n_items, user_ids, item_ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{hamming, overlap};

    fn spec(sizes: Vec<usize>, supports: Vec<usize>, n_items: usize, noise: f64) -> SynthSpec {
        SynthSpec {
            cohort_sizes: sizes,
            cohort_support_sizes: supports,
            n_items,
            noise_rate: noise,
            coverage: 1.0,
            seed: 42,
        }
    }

    #[test]
    fn noiseless_rows_stay_inside_support() {
        let s = spec(vec![2], vec![3], 10, 0.0);
        let m = synth_block_dataset(&s).unwrap();
        let support = s.support(0);
        assert_eq!(m.n_users(), 2);
        for row in m.rows() {
            assert!(row.iter().all(|i| support.contains(i)));
        }
    }

    #[test]
    fn nested_cohorts_are_far_but_related() {
        let s = spec(vec![4, 4], vec![5, 50], 200, 0.0);
        let m = synth_block_dataset(&s).unwrap();
        let (small, large) = (s.support(0), s.support(1));
        assert!(small.iter().all(|i| large.contains(i)));
        for u in 0..4 {
            for v in 4..8 {
                assert!(overlap(m.row(u), m.row(v)) > 0);
                assert!(hamming(m.row(u), m.row(v)) > 5);
            }
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let s = SynthSpec {
            coverage: 0.5,
            ..spec(vec![10, 10], vec![8, 30], 60, 0.05)
        };
        assert_eq!(synth_block_dataset(&s).unwrap(), synth_block_dataset(&s).unwrap());
        assert!(matches!(
            synth_block_dataset(&spec(vec![1], vec![11], 10, 0.0)),
            Err(Error::Spec(_))
        ));
        assert!(synth_block_dataset(&spec(vec![1, 1], vec![5, 5], 10, 0.0)).is_err());
        assert!(synth_block_dataset(&spec(vec![1], vec![5, 6], 10, 0.0)).is_err());
    }
}
