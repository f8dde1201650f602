//! Recall@K and NDCG@K over fold-in / holdout users, overall and by activity
//! bucket.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::InteractionMatrix;
use crate::error::{Error, Result};
use crate::vae::{predict_scores, ModelParams};

/// Default activity-bucket edges: `[5-10]`, `[11-50]`, `[51-100]`, `[100+]`.
pub const DEFAULT_BUCKET_EDGES: [usize; 4] = [5, 10, 50, 100];

/// Top-`k` items by descending score, skipping `fold_in`; ties go to the
/// lower item index.
pub fn top_k(scores: &[f64], fold_in: &[u32], k: usize) -> Vec<u32> {
    let mut excluded = vec![false; scores.len()];
    for &i in fold_in {
        excluded[i as usize] = true;
    }
    let mut cand: Vec<u32> = (0..scores.len() as u32)
        .filter(|&i| !excluded[i as usize])
        .collect();
    let cmp = |a: &u32, b: &u32| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    };
    if k < cand.len() {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    cand
}

fn check_args(scores: &[f64], holdout: &[u32], fold_in: &[u32], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Metric("k must be >= 1".into()));
    }
    if holdout.is_empty() {
        return Err(Error::Metric("holdout set is empty".into()));
    }
    if let Some(i) = holdout.iter().chain(fold_in).find(|&&i| i as usize >= scores.len()) {
        return Err(Error::Metric(format!(
            "item {i} outside score vector of length {}",
            scores.len()
        )));
    }
    if holdout.iter().any(|h| fold_in.contains(h)) {
        return Err(Error::Metric("fold-in and holdout overlap".into()));
    }
    Ok(())
}

fn hits(scores: &[f64], holdout: &[u32], fold_in: &[u32], k: usize) -> Vec<bool> {
    top_k(scores, fold_in, k)
        .into_iter()
        .map(|i| holdout.contains(&i))
        .collect()
}

/// `|top_k ∩ holdout| / min(k, |holdout|)`.
pub fn recall_at_k(scores: &[f64], holdout: &[u32], fold_in: &[u32], k: usize) -> Result<f64> {
    check_args(scores, holdout, fold_in, k)?;
    let n_hits = hits(scores, holdout, fold_in, k).iter().filter(|h| **h).count();
    Ok(n_hits as f64 / k.min(holdout.len()) as f64)
}

pub fn ndcg_at_k(scores: &[f64], holdout: &[u32], fold_in: &[u32], k: usize) -> Result<f64> {
    check_args(scores, holdout, fold_in, k)?;
    let discount = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = hits(scores, holdout, fold_in, k)
        .iter()
        .enumerate()
        .filter(|(_, h)| **h)
        .map(|(r, _)| discount(r))
        .sum();
    let idcg: f64 = (0..k.min(holdout.len())).map(discount).sum();
    Ok(dcg / idcg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub n_users: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<BTreeMap<String, MetricReport>>,
}

impl MetricReport {
    /// CSV with one row per group (`all`, then each bucket) and one column
    /// per metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,n_users");
        for k in self.recall.keys() {
            out.push_str(&format!(",recall@{k}"));
        }
        for k in self.ndcg.keys() {
            out.push_str(&format!(",ndcg@{k}"));
        }
        out.push('\n');
        let mut line = |label: &str, r: &MetricReport| {
            out.push_str(&format!("{label},{}", r.n_users));
            for v in r.recall.values().chain(r.ndcg.values()) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        };
        line("all", self);
        if let Some(strata) = &self.strata {
            for (label, r) in ordered_strata(strata) {
                line(label, r);
            }
        }
        out
    }
}

// Bucket labels sort lexically out of order ("[100+]" < "[11-50]"), so order
// by the lower edge parsed back from the label.
fn ordered_strata(strata: &BTreeMap<String, MetricReport>) -> Vec<(&str, &MetricReport)> {
    let mut v: Vec<_> = strata.iter().map(|(k, r)| (k.as_str(), r)).collect();
    v.sort_by_key(|(k, _)| {
        let digits: String = k
            .trim_start_matches(['[', '<'])
            .chars()
            .take_while(|c| c.is_ascii_digit())
            .collect();
        (!k.starts_with("[<"), digits.parse::<usize>().unwrap_or(0))
    });
    v
}

struct Accumulator {
    recall: BTreeMap<usize, f64>,
    ndcg: BTreeMap<usize, f64>,
    n: usize,
}

impl Accumulator {
    fn new(ks: &[usize]) -> Self {
        Self {
            recall: ks.iter().map(|&k| (k, 0.0)).collect(),
            ndcg: ks.iter().map(|&k| (k, 0.0)).collect(),
            n: 0,
        }
    }

    fn add(&mut self, recall: &[f64], ndcg: &[f64]) {
        for ((r, n), (acc_r, acc_n)) in recall
            .iter()
            .zip(ndcg)
            .zip(self.recall.values_mut().zip(self.ndcg.values_mut()))
        {
            *acc_r += r;
            *acc_n += n;
        }
        self.n += 1;
    }

    fn finish(self) -> MetricReport {
        let n = self.n as f64;
        MetricReport {
            recall: self.recall.into_iter().map(|(k, v)| (k, v / n)).collect(),
            ndcg: self.ndcg.into_iter().map(|(k, v)| (k, v / n)).collect(),
            n_users: self.n,
            strata: None,
        }
    }
}

/// Label of the bucket containing `count`, for ascending `edges`
/// `e_0 < … < e_n`: `[<e_0]`, `[e_0-e_1]`, `[e_1+1-e_2]`, …, `[e_n+]`
/// (the last bucket holds counts above `e_n`).
pub fn bucket_label(count: usize, edges: &[usize]) -> String {
    match edges.iter().position(|&e| count <= e) {
        _ if edges.is_empty() => "[all]".into(),
        Some(0) if count < edges[0] => format!("[<{}]", edges[0]),
        Some(0) | Some(1) => format!("[{}-{}]", edges[0], edges[1.min(edges.len() - 1)]),
        Some(j) => format!("[{}-{}]", edges[j - 1] + 1, edges[j]),
        None => format!("[{}+]", edges[edges.len() - 1]),
    }
}

/// Metrics for every user of `fold_in`/`holdout` under an arbitrary scorer,
/// optionally stratified by fold-in count.
pub fn report_with_scorer<F>(
    mut scorer: F,
    fold_in: &InteractionMatrix,
    holdout: &InteractionMatrix,
    ks: &[usize],
    bucket_edges: Option<&[usize]>,
) -> Result<MetricReport>
where
    F: FnMut(&[u32]) -> Vec<f64>,
{
    if fold_in.n_users() != holdout.n_users() {
        return Err(Error::DimensionMismatch {
            expected: fold_in.n_users(),
            actual: holdout.n_users(),
        });
    }
    if fold_in.n_users() == 0 {
        return Err(Error::Metric("no evaluation users".into()));
    }
    if ks.is_empty() {
        return Err(Error::Metric("no cutoffs requested".into()));
    }
    if let Some(edges) = bucket_edges {
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Metric("bucket edges must be strictly ascending".into()));
        }
    }

    let mut overall = Accumulator::new(ks);
    let mut buckets: BTreeMap<String, Accumulator> = BTreeMap::new();
    for u in 0..fold_in.n_users() {
        let (f, h) = (fold_in.row(u), holdout.row(u));
        let scores = scorer(f);
        let recall = ks
            .iter()
            .map(|&k| recall_at_k(&scores, h, f, k))
            .collect::<Result<Vec<_>>>()?;
        let ndcg = ks
            .iter()
            .map(|&k| ndcg_at_k(&scores, h, f, k))
            .collect::<Result<Vec<_>>>()?;
        overall.add(&recall, &ndcg);
        if let Some(edges) = bucket_edges {
            buckets
                .entry(bucket_label(f.len(), edges))
                .or_insert_with(|| Accumulator::new(ks))
                .add(&recall, &ndcg);
        }
    }

    let mut report = overall.finish();
    if let Some(edges) = bucket_edges {
        let mut strata: BTreeMap<String, MetricReport> =
            buckets.into_iter().map(|(k, a)| (k, a.finish())).collect();
        for label in default_labels(edges) {
            if !strata.contains_key(&label) {
                log::info!("bucket {label} has no users; omitted");
            }
        }
        strata.retain(|_, r| r.n_users > 0);
        report.strata = Some(strata);
    }
    Ok(report)
}

fn default_labels(edges: &[usize]) -> Vec<String> {
    let mut probes: Vec<usize> = vec![edges[0]];
    probes.extend(edges.windows(2).map(|w| w[1]));
    probes.push(edges[edges.len() - 1] + 1);
    probes.into_iter().map(|c| bucket_label(c, edges)).collect()
}

/// Model metrics, stratified by fold-in interaction count.
pub fn stratified_report(
    p: &ModelParams,
    fold_in: &InteractionMatrix,
    holdout: &InteractionMatrix,
    ks: &[usize],
    bucket_edges: &[usize],
) -> Result<MetricReport> {
    report_with_scorer(
        |f| predict_scores(p, f),
        fold_in,
        holdout,
        ks,
        Some(bucket_edges),
    )
}

/// Mean NDCG@k of the model over the given users.
pub fn mean_ndcg(
    p: &ModelParams,
    fold_in: &InteractionMatrix,
    holdout: &InteractionMatrix,
    k: usize,
) -> Result<f64> {
    let r = report_with_scorer(|f| predict_scores(p, f), fold_in, holdout, &[k], None)?;
    Ok(r.ndcg[&k])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_cases() {
        let s = [0.9, 0.8, 0.7, 0.6, 0.5];
        assert_eq!(recall_at_k(&s, &[0, 1], &[], 2).unwrap(), 1.0);
        assert_eq!(recall_at_k(&s, &[3, 4], &[], 2).unwrap(), 0.0);
        // Top-2 = {0, 1}; one of three holdout items hit.
        assert!((recall_at_k(&s, &[1, 3, 4], &[], 2).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ndcg_cases() {
        let s = [0.9, 0.8, 0.7];
        assert_eq!(ndcg_at_k(&s, &[0, 1], &[], 2).unwrap(), 1.0);
        let v = ndcg_at_k(&s, &[1], &[], 2).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert_eq!(ndcg_at_k(&s, &[2], &[], 2).unwrap(), 0.0);
    }

    #[test]
    fn fold_in_is_skipped_and_ties_use_index() {
        let s = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(top_k(&s, &[1], 2), vec![0, 2]);
        assert_eq!(top_k(&s, &[], 10), vec![0, 1, 2, 3]);
        // Item 0 scores highest but is fold-in; it is never a hit.
        let s = [5.0, 0.0, 1.0];
        assert_eq!(recall_at_k(&s, &[2], &[0], 1).unwrap(), 1.0);
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(recall_at_k(&[1.0], &[], &[], 1), Err(Error::Metric(_))));
        assert!(ndcg_at_k(&[1.0, 2.0], &[0], &[], 0).is_err());
        assert!(ndcg_at_k(&[1.0, 2.0], &[0], &[0], 1).is_err());
    }

    #[test]
    fn bucket_labels_follow_edges() {
        let e = DEFAULT_BUCKET_EDGES;
        assert_eq!(bucket_label(3, &e), "[<5]");
        assert_eq!(bucket_label(5, &e), "[5-10]");
        assert_eq!(bucket_label(10, &e), "[5-10]");
        assert_eq!(bucket_label(11, &e), "[11-50]");
        assert_eq!(bucket_label(100, &e), "[51-100]");
        assert_eq!(bucket_label(101, &e), "[100+]");
    }

    #[test]
    fn strata_means_match_hand_average() {
        // Users 0, 1 have 1 fold-in item, user 2 has 3.
        let fold = InteractionMatrix::from_rows_anonymous(vec![vec![0], vec![1], vec![0, 1, 2]], 5).unwrap();
        let hold = InteractionMatrix::from_rows_anonymous(vec![vec![3], vec![4], vec![4]], 5).unwrap();
        // Item 3 outranks item 4 for everyone.
        let scorer = |_: &[u32]| vec![0.0, 0.0, 0.0, 2.0, 1.0];
        let r = report_with_scorer(scorer, &fold, &hold, &[1], Some(&[1, 2])).unwrap();
        assert_eq!(r.n_users, 3);
        assert!((r.recall[&1] - 1.0 / 3.0).abs() < 1e-12);
        let strata = r.strata.as_ref().unwrap();
        assert!((strata["[1-2]"].recall[&1] - 0.5).abs() < 1e-12);
        assert_eq!(strata["[2+]"].recall[&1], 0.0);
        assert_eq!(strata.len(), 2);

        let one = report_with_scorer(scorer, &fold, &hold, &[1], Some(&[1000])).unwrap();
        let s = &one.strata.as_ref().unwrap()["[<1000]"];
        assert_eq!(s.recall, one.recall);
        assert_eq!(s.ndcg, one.ndcg);
    }

    #[test]
    fn csv_lists_groups_in_edge_order() {
        let fold = InteractionMatrix::from_rows_anonymous(vec![vec![0]; 2], 3).unwrap();
        let hold = InteractionMatrix::from_rows_anonymous(vec![vec![1]; 2], 3).unwrap();
        let r = report_with_scorer(|_| vec![0.0, 1.0, 0.0], &fold, &hold, &[1, 2], Some(&[1, 5])).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("group,n_users,recall@1,recall@2,ndcg@1,ndcg@2"));
        assert_eq!(lines.next(), Some("all,2,1,1,1,1"));
        assert_eq!(lines.next(), Some("[1-5],2,1,1,1,1"));
    }
}
