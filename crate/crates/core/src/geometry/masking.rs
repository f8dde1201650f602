use serde::{Deserialize, Serialize};

use crate::corpus::{hamming, overlap};
use crate::error::{Error, Result};

/// Pair statistics: `h = ‖x_u − x_v‖₁` disagreeing coordinates and
/// `s = ⟨x_u, x_v⟩` shared positives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub h: usize,
    pub s: usize,
}

impl PairStats {
    pub fn from_rows(a: &[u32], b: &[u32]) -> Self {
        Self {
            h: hamming(a, b),
            s: overlap(a, b),
        }
    }
}

/// `Bin(n, p)` probabilities, built by repeated Bernoulli convolution so
/// every entry is a sum of nonnegative terms.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    pmf[0] = 1.0;
    for m in 1..=n {
        for k in (1..=m).rev() {
            pmf[k] = pmf[k] * (1.0 - p) + pmf[k - 1] * p;
        }
        pmf[0] *= 1.0 - p;
    }
    pmf
}

fn check_args(keep_prob: f64, delta: f64) {
    assert!(
        keep_prob > 0.0 && keep_prob < 1.0,
        "keep_prob {keep_prob} outside (0, 1)"
    );
    assert!(delta > 0.0, "delta {delta} must be positive");
}

/// Lower bound on `Pr[D′ < δ]`:
/// `(ρ² + (1−ρ)²)^s · Pr[Bin(h, ρ) ≤ ⌈δ⌉ − 1]`.
pub fn contraction_bound(stats: PairStats, keep_prob: f64, delta: f64) -> f64 {
    check_args(keep_prob, delta);
    let rho = keep_prob;
    let t = delta.ceil() as usize - 1;
    let agree = rho * rho + (1.0 - rho) * (1.0 - rho);
    let pmf = binomial_pmf(stats.h, rho);
    agree.powi(stats.s as i32) * pmf[..=t.min(stats.h)].iter().sum::<f64>()
}

/// Lower bound on `Pr[D′ ≥ δ]`: `Pr[Bin(s, 2ρ(1−ρ)) ≥ ⌈δ⌉]`.
pub fn expansion_bound(s: usize, keep_prob: f64, delta: f64) -> f64 {
    check_args(keep_prob, delta);
    let u = delta.ceil() as usize;
    if u > s {
        return 0.0;
    }
    let p = 2.0 * keep_prob * (1.0 - keep_prob);
    binomial_pmf(s, p)[u..].iter().sum()
}

/// Largest number of mask bits enumerated directly by
/// [`masked_distance_exact`].
pub const ENUMERATION_MAX_BITS: usize = 20;

fn check_pair(x_u: &[u32], x_v: &[u32], keep_prob: f64) -> Result<()> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::Config(format!("keep_prob {keep_prob} outside (0, 1]")));
    }
    for x in [x_u, x_v] {
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("rows must be sorted and duplicate-free".into()));
        }
    }
    Ok(())
}

/// Distribution of `D′ = ‖x_u ⊙ b_u − x_v ⊙ b_v‖₁` by enumerating every mask
/// bit that touches a positive. Index `k` holds `Pr[D′ = k]`.
pub fn masked_distance_enumerate(x_u: &[u32], x_v: &[u32], keep_prob: f64) -> Result<Vec<f64>> {
    check_pair(x_u, x_v, keep_prob)?;
    let bits = x_u.len() + x_v.len();
    if bits > 30 {
        return Err(Error::Config(format!("{bits} mask bits is too many to enumerate")));
    }
    let mut coords: Vec<u32> = x_u.iter().chain(x_v).copied().collect();
    coords.sort_unstable();
    coords.dedup();
    let (cu, pu) = submask_tables(x_u, &coords, keep_prob);
    let (cv, pv) = submask_tables(x_v, &coords, keep_prob);
    // Neumaier-compensated accumulation; up to 2^bits terms land in a bucket.
    let mut table = vec![0.0; coords.len() + 1];
    let mut comp = vec![0.0; coords.len() + 1];
    for (&mu, &qu) in cu.iter().zip(&pu) {
        if qu == 0.0 {
            continue;
        }
        for (&mv, &qv) in cv.iter().zip(&pv) {
            let prob = qu * qv;
            if prob == 0.0 {
                continue;
            }
            let d = (mu ^ mv).count_ones() as usize;
            let t = table[d] + prob;
            comp[d] += if table[d].abs() >= prob {
                (table[d] - t) + prob
            } else {
                (prob - t) + table[d]
            };
            table[d] = t;
        }
    }
    Ok(table.iter().zip(&comp).map(|(t, c)| t + c).collect())
}

/// For every keep/drop pattern of `x`'s mask bits: the kept positives as a
/// bitset over `coords`, and the pattern's probability.
fn submask_tables(x: &[u32], coords: &[u32], keep_prob: f64) -> (Vec<u64>, Vec<f64>) {
    let pos: Vec<u64> = x
        .iter()
        .map(|i| 1u64 << coords.binary_search(i).expect("coordinate present"))
        .collect();
    let n = 1usize << x.len();
    let (mut sets, mut probs) = (vec![0u64; n], vec![1.0; n]);
    for m in 0..n {
        for (k, bit) in pos.iter().enumerate() {
            if m >> k & 1 == 1 {
                sets[m] |= bit;
                probs[m] *= keep_prob;
            } else {
                probs[m] *= 1.0 - keep_prob;
            }
        }
    }
    (sets, probs)
}

/// Distribution of `D′` as `Bin(h, ρ) ⊛ Bin(s, 2ρ(1−ρ))`.
pub fn masked_distance_convolution(x_u: &[u32], x_v: &[u32], keep_prob: f64) -> Result<Vec<f64>> {
    check_pair(x_u, x_v, keep_prob)?;
    let st = PairStats::from_rows(x_u, x_v);
    let y = binomial_pmf(st.h, keep_prob);
    let z = binomial_pmf(st.s, 2.0 * keep_prob * (1.0 - keep_prob));
    let mut table = vec![0.0; st.h + st.s + 1];
    for (a, py) in y.iter().enumerate() {
        for (b, pz) in z.iter().enumerate() {
            table[a + b] += py * pz;
        }
    }
    Ok(table)
}

/// Exact distribution of `D′`: enumeration when at most
/// [`ENUMERATION_MAX_BITS`] mask bits are involved, convolution otherwise.
/// The enumerated table is padded to the convolution's length.
pub fn masked_distance_exact(x_u: &[u32], x_v: &[u32], keep_prob: f64) -> Result<Vec<f64>> {
    if x_u.len() + x_v.len() <= ENUMERATION_MAX_BITS {
        let mut t = masked_distance_enumerate(x_u, x_v, keep_prob)?;
        let st = PairStats::from_rows(x_u, x_v);
        t.resize(st.h + st.s + 1, 0.0);
        Ok(t)
    } else {
        masked_distance_convolution(x_u, x_v, keep_prob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_hand_values() {
        assert_eq!(contraction_bound(PairStats { h: 0, s: 0 }, 0.3, 1.0), 1.0);
        assert!((contraction_bound(PairStats { h: 2, s: 1 }, 0.5, 1.0) - 0.125).abs() < 1e-15);
        assert_eq!(contraction_bound(PairStats { h: 1, s: 0 }, 0.5, 1.0), 0.5);
        assert_eq!(expansion_bound(0, 0.5, 1.0), 0.0);
        assert!((expansion_bound(2, 0.5, 1.0) - 0.75).abs() < 1e-15);
        assert_eq!(expansion_bound(1, 0.5, 2.0), 0.0);
    }

    #[test]
    fn distance_distribution_cases() {
        // x_u = [1,1,0], x_v = [1,0,1].
        let t = masked_distance_exact(&[0, 1], &[0, 2], 0.5).unwrap();
        assert!((t[0] - 0.125).abs() < 1e-15);
        let t = masked_distance_exact(&[0, 1, 5], &[1, 2], 1.0).unwrap();
        assert_eq!(t, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        // h = 1, s = 0: enumeration says the bound is tight.
        let t = masked_distance_exact(&[3], &[], 0.5).unwrap();
        assert_eq!(t[0], 0.5);
    }

    #[test]
    fn enumeration_matches_convolution() {
        let cases: [(&[u32], &[u32]); 4] = [
            (&[0, 1, 2], &[1, 2, 3]),
            (&[], &[4, 5]),
            (&[0, 2, 4, 6], &[0, 2, 4, 6]),
            (&[1, 3, 5, 7], &[0, 3, 6, 7]),
        ];
        for rho in [0.1, 0.35, 0.9] {
            for (a, b) in cases {
                let e = masked_distance_exact(a, b, rho).unwrap();
                let c = masked_distance_convolution(a, b, rho).unwrap();
                assert_eq!(e.len(), c.len());
                for (x, y) in e.iter().zip(&c) {
                    assert!((x - y).abs() < 1e-12);
                }
                assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn binomial_pmf_matches_closed_form() {
        let pmf = binomial_pmf(4, 0.3);
        let expect = [0.2401, 0.4116, 0.2646, 0.0756, 0.0081];
        for (a, b) in pmf.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
