//! Seeded batteries of geometry checks, shared by the command line and the
//! acceptance tests.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::corpus::{synth_block_dataset, InteractionMatrix, SynthSpec};
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, GaussianPosterior};
use crate::pia::{alignment_closed_form, alignment_mc_oracle, AnchorTable};
use crate::vae::ModelParams;

pub const KEEP_PROBS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Thm3,
    T1,
    Eq3,
    Prop1,
    Prop2,
    Eq4,
    Probe,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Thm3,
        Suite::T1,
        Suite::Eq3,
        Suite::Prop1,
        Suite::Prop2,
        Suite::Eq4,
        Suite::Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Thm3 => "thm3",
            Suite::T1 => "t1",
            Suite::Eq3 => "eq3",
            Suite::Prop1 => "prop1",
            Suite::Prop2 => "prop2",
            Suite::Eq4 => "eq4",
            Suite::Probe => "probe",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown geometry suite {s:?}")))
    }
}

/// Optional trained model and users for the model-based suites (`eq4`,
/// `probe`). Without them a seeded random model and a small synthetic
/// dataset are used.
#[derive(Clone, Copy, Debug, Default)]
pub struct SuiteInputs<'a> {
    pub model: Option<&'a ModelParams>,
    pub rows: Option<&'a InteractionMatrix>,
}

pub fn run_suite(suite: Suite, seed: u64, inputs: SuiteInputs<'_>) -> Result<Vec<GeometryReport>> {
    let mut rng = crate::seeded_rng(seed);
    match suite {
        Suite::Thm3 => thm3_grid(),
        Suite::T1 => t1_sweep(&mut rng),
        Suite::Eq3 => eq3_sweep(&mut rng),
        Suite::Prop1 => prop1_sweep(&mut rng),
        Suite::Prop2 => prop2_sweep(&mut rng),
        Suite::Eq4 => eq4_sweep(inputs, &mut rng),
        Suite::Probe => probe_pairs(inputs, &mut rng),
    }
}

/// Rows with `s` shared positives and `h` disagreeing coordinates split
/// between the two users.
pub fn pair_with_stats(h: usize, s: usize) -> (Vec<u32>, Vec<u32>) {
    let s32 = s as u32;
    let hu = h.div_ceil(2) as u32;
    let mut u: Vec<u32> = (0..s32).collect();
    let mut v = u.clone();
    u.extend(s32..s32 + hu);
    v.extend(s32 + hu..s32 + h as u32);
    (u, v)
}

fn named(r: GeometryReport, name: String) -> GeometryReport {
    GeometryReport { name, ..r }
}

/// Bounds over `h, s ∈ 0..=10`, `ρ ∈ KEEP_PROBS`, `δ ∈ 1..=5`, then
/// enumeration against convolution for `h + s ≤ 8`.
pub fn thm3_grid() -> Result<Vec<GeometryReport>> {
    let mut out = Vec::new();
    for h in 0..=10 {
        for s in 0..=10 {
            let (u, v) = pair_with_stats(h, s);
            for rho in KEEP_PROBS {
                let table = masked_distance_exact(&u, &v, rho)?;
                for delta in 1..=5usize {
                    let pr_contract: f64 = table[..delta.min(table.len())].iter().sum();
                    let pr_expand: f64 = table.iter().skip(delta).sum();
                    let cb = contraction_bound(PairStats { h, s }, rho, delta as f64);
                    let eb = expansion_bound(s, rho, delta as f64);
                    out.push(GeometryReport::from_checks(
                        format!("thm3 h={h} s={s} rho={rho} delta={delta}"),
                        [
                            ("pr_contract", pr_contract),
                            ("contraction_bound", cb),
                            ("contraction_violation", cb - pr_contract),
                            ("pr_expand", pr_expand),
                            ("expansion_bound", eb),
                            ("expansion_violation", eb - pr_expand),
                        ],
                        [("contraction_violation", 1e-12), ("expansion_violation", 1e-12)],
                    ));
                }
            }
        }
    }
    for h in 0..=8 {
        for s in 0..=8 - h {
            let (u, v) = pair_with_stats(h, s);
            for rho in KEEP_PROBS {
                let e = masked_distance_enumerate(&u, &v, rho)?;
                let c = masked_distance_convolution(&u, &v, rho)?;
                let diff = e
                    .iter()
                    .zip(&c)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let mass_error = (e.iter().sum::<f64>() - 1.0).abs();
                out.push(GeometryReport::from_checks(
                    format!("thm3_oracle h={h} s={s} rho={rho}"),
                    [("max_abs_diff", diff), ("mass_error", mass_error)],
                    [("max_abs_diff", 1e-12), ("mass_error", 1e-12)],
                ));
            }
        }
    }
    Ok(out)
}

fn uniform(rng: &mut crate::Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn normal(rng: &mut crate::Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_gaussian(rng: &mut crate::Rng, d: usize, mean_scale: f64) -> GaussianPosterior {
    let mean = (0..d).map(|_| mean_scale * normal(rng)).collect();
    let std: Vec<f64> = (0..d).map(|_| uniform(rng, 0.2, 2.5)).collect();
    GaussianPosterior::from_std(mean, &std).expect("finite draws")
}

/// Tight case, 200 random 1-D pairs, 200 random 8-D pairs.
pub fn t1_sweep(rng: &mut crate::Rng) -> Result<Vec<GeometryReport>> {
    let mut out = Vec::new();
    let tight = t1_bound_check(
        &GaussianPosterior::new(vec![1.0], vec![0.0])?,
        &GaussianPosterior::standard(1),
        1.0,
    )?;
    out.push(named(tight, "t1_tight".into()));
    for (dim, label) in [(1, "t1_1d"), (8, "t1_8d")] {
        for k in 0..200 {
            let prior_var = uniform(rng, 0.5, 2.0);
            let (a, b) = (random_gaussian(rng, dim, 1.5), random_gaussian(rng, dim, 1.5));
            out.push(named(t1_bound_check(&a, &b, prior_var)?, format!("{label} #{k}")));
        }
    }
    Ok(out)
}

fn random_binary(rng: &mut crate::Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect()
}

/// Pairwise decomposition on 20 random instances plus the equal-input and
/// disjoint-support cases, followed by a Jensen-gap sweep.
pub fn eq3_sweep(rng: &mut crate::Rng) -> Result<Vec<GeometryReport>> {
    let mut out = Vec::new();
    let quad = QuadSpec::default();
    for k in 0..20 {
        let m = rng.random_range(1..=5);
        let (xu, xv) = (random_binary(rng, m), random_binary(rng, m));
        let (qu, qv) = (random_gaussian(rng, 1, 1.0), random_gaussian(rng, 1, 1.0));
        let beta = uniform(rng, 0.0, 1.0);
        let r = pairwise_decomposition_check(&xu, &xv, &qu, &qv, beta, quad)?;
        out.push(named(r, format!("eq3 #{k}")));
    }
    let g1 = |m: f64| GaussianPosterior::new(vec![m], vec![0.0]).expect("finite");
    let x = [1.0, 0.0, 1.0];
    let r = pairwise_decomposition_check(&x, &x, &g1(0.0), &g1(0.8), 0.4, quad)?;
    let gap = r.value("gap_integral");
    out.push(GeometryReport::from_checks(
        "eq3 equal inputs",
        r.values.into_iter().chain([("abs_gap".to_owned(), gap.abs())]),
        [("rel_error", 1e-6), ("abs_gap", 1e-12)],
    ));
    let r = pairwise_decomposition_check(&[1.0, 0.0], &[0.0, 1.0], &g1(-40.0), &g1(40.0), 1.0, quad)?;
    out.push(GeometryReport::from_checks(
        "eq3 disjoint supports",
        r.values,
        [("rel_error", 1e-6), ("gap_integral", 1e-8)],
    ));

    let mut min_gap = f64::INFINITY;
    let mut max_equal_case: f64 = 0.0;
    for _ in 0..10_000 {
        let m = rng.random_range(1..=8);
        let t1: Vec<f64> = (0..m).map(|_| uniform(rng, 0.0, 1.0)).collect();
        let t2: Vec<f64> = (0..m).map(|_| uniform(rng, 0.0, 1.0)).collect();
        let alpha = uniform(rng, 0.0, 1.0);
        min_gap = min_gap.min(jensen_gap_bernoulli(&t1, &t2, alpha)?);
        for g in [
            jensen_gap_bernoulli(&t1, &t1, alpha)?,
            jensen_gap_bernoulli(&t1, &t2, 0.0)?,
            jensen_gap_bernoulli(&t1, &t2, 1.0)?,
        ] {
            max_equal_case = max_equal_case.max(g.abs());
        }
    }
    let ln2 = jensen_gap_bernoulli(&[1.0], &[0.0], 0.5)?;
    out.push(GeometryReport::from_checks(
        "jensen_gap",
        [
            ("min_gap", min_gap),
            ("negativity", -min_gap),
            ("max_equality_case", max_equal_case),
            ("ln2_case", ln2),
            ("ln2_error", (ln2 - std::f64::consts::LN_2).abs()),
        ],
        [("negativity", 1e-12), ("max_equality_case", 1e-12), ("ln2_error", 1e-12)],
    ));
    Ok(out)
}

/// Closed-form alignment vs the sampling oracle on 100 random instances
/// (10⁵ samples each), plus the exact zero case.
pub fn prop1_sweep(rng: &mut crate::Rng) -> Result<Vec<GeometryReport>> {
    let mut out = Vec::new();
    let n_items = 10;
    for k in 0..100 {
        let d = rng.random_range(1..=8);
        let anchors = AnchorTable::new(
            DenseMatrix::from_fn(n_items, d, |_, _| normal(rng)),
            1.0,
        )?;
        let n_pos = rng.random_range(1..=5);
        let mut positives: Vec<u32> = rand::seq::index::sample(rng, n_items, n_pos)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        positives.sort_unstable();
        let mean = (0..d).map(|_| normal(rng)).collect();
        let logvar = (0..d).map(|_| uniform(rng, -2.0, 1.0)).collect();
        let q = GaussianPosterior::new(mean, logvar)?;
        let cf = alignment_closed_form(&q, &anchors, &positives)?;
        let mc = alignment_mc_oracle(&q, &anchors, &positives, 100_000, rng)?;
        let z = (cf - mc.mean).abs() / mc.std_error;
        out.push(GeometryReport::from_checks(
            format!("prop1 #{k}"),
            [
                ("closed_form", cf),
                ("mc_mean", mc.mean),
                ("mc_std_error", mc.std_error),
                ("abs_z", z),
            ],
            [("abs_z", 3.0)],
        ));
    }
    let anchors = AnchorTable::new(DenseMatrix::from_vec(1, 3, vec![0.4, -1.0, 2.0])?, 1.0)?;
    let q = GaussianPosterior::point_mass(vec![0.4, -1.0, 2.0]);
    let cf = alignment_closed_form(&q, &anchors, &[0])?;
    let mc = alignment_mc_oracle(&q, &anchors, &[0], 1000, rng)?;
    out.push(GeometryReport::from_checks(
        "prop1 zero variance",
        [("closed_form", cf), ("mc_mean", mc.mean), ("abs_value", cf.abs().max(mc.mean.abs()))],
        [("abs_value", 0.0)],
    ));
    Ok(out)
}

/// 100 random quadratic toys plus the identity cases and a commuting
/// (axis-aligned) Löwner case.
pub fn prop2_sweep(rng: &mut crate::Rng) -> Result<Vec<GeometryReport>> {
    let mut out = Vec::new();
    for k in 0..100 {
        let d = rng.random_range(2..=6);
        let eigs: Vec<f64> = (0..d).map(|_| uniform(rng, 0.5, 4.0)).collect();
        let masks: Vec<Vec<f64>> = (0..50).map(|_| (0..d).map(|_| normal(rng)).collect()).collect();
        let lambda = uniform(rng, 0.0, 2.0);
        let centroid: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        out.push(named(quadratic_toy(&eigs, &masks, lambda, &centroid)?, format!("prop2 #{k}")));
    }

    let masks: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| normal(rng)).collect()).collect();
    let r = quadratic_toy(&[0.5, 1.5, 3.0], &masks, 0.0, &[0.1, 0.2, 0.3])?;
    out.push(GeometryReport::from_checks(
        "prop2 no alignment",
        [
            ("trace_ratio_error", (r.value("trace_ratio") - 1.0).abs()),
            ("drift_ratio_error", (r.value("drift_ratio") - 1.0).abs()),
            ("tau_error", (r.value("tau") - 1.0).abs()),
        ],
        [("trace_ratio_error", 1e-12), ("drift_ratio_error", 1e-12), ("tau_error", 1e-12)],
    ));
    let r = quadratic_toy(&[1.0, 1.0, 1.0], &masks, 0.5, &[0.1, 0.2, 0.3])?;
    out.push(GeometryReport::from_checks(
        "prop2 identity hessian",
        [
            ("trace_ratio_error", (r.value("trace_ratio") - 0.25).abs()),
            ("drift_ratio_error", (r.value("drift_ratio") - 0.5).abs()),
            ("tau_error", (r.value("tau") - 0.5).abs()),
        ],
        [("trace_ratio_error", 1e-12), ("drift_ratio_error", 1e-12), ("tau_error", 1e-12)],
    ));

    // ±c·e_j offsets give a diagonal empirical covariance.
    let eigs = [0.5, 1.2, 2.5, 4.0];
    let mut masks = Vec::new();
    for j in 0..eigs.len() {
        let c = uniform(rng, 0.5, 2.0);
        for sign in [1.0, -1.0] {
            let mut g = vec![0.0; eigs.len()];
            g[j] = sign * c;
            masks.push(g);
        }
    }
    out.push(named(quadratic_toy(&eigs, &masks, 0.8, &[0.0; 4])?, "prop2 lowner".into()));
    Ok(out)
}

/// Small default dataset for the model-based suites.
pub fn default_probe_rows(seed: u64) -> Result<InteractionMatrix> {
    synth_block_dataset(&SynthSpec {
        cohort_sizes: vec![20, 20, 20],
        cohort_support_sizes: vec![5, 10, 20],
        n_items: 30,
        noise_rate: 0.05,
        coverage: 0.6,
        seed,
    })
}

fn random_model(n_items: usize, seed: u64) -> ModelParams {
    ModelParams::init(n_items, 8, 4, &mut crate::seeded_rng(seed))
}

/// Dataset bound on the given model, or on 20 seeded random models.
pub fn eq4_sweep(inputs: SuiteInputs<'_>, rng: &mut crate::Rng) -> Result<Vec<GeometryReport>> {
    let default_rows;
    let rows = match inputs.rows {
        Some(r) => r,
        None => {
            default_rows = default_probe_rows(rng.random())?;
            &default_rows
        }
    };
    if let Some(p) = inputs.model {
        let r = dataset_bound_report(p, rows, 0.5, 1.0, 500, rng)?;
        return Ok(vec![named(r, "eq4 model".into())]);
    }
    (0..20)
        .map(|k| {
            let p = random_model(rows.n_items(), rng.random());
            let r = dataset_bound_report(&p, rows, 0.5, 1.0, 200, rng)?;
            Ok(named(r, format!("eq4 #{k}")))
        })
        .collect()
}

/// Sharing diagnostics on a few user pairs.
pub fn probe_pairs(inputs: SuiteInputs<'_>, rng: &mut crate::Rng) -> Result<Vec<GeometryReport>> {
    let default_rows;
    let rows = match inputs.rows {
        Some(r) => r,
        None => {
            default_rows = default_probe_rows(rng.random())?;
            &default_rows
        }
    };
    let default_model;
    let p = match inputs.model {
        Some(p) => p,
        None => {
            default_model = random_model(rows.n_items(), rng.random());
            &default_model
        }
    };
    if rows.n_users() < 2 {
        return Err(Error::EmptyDataset);
    }
    (0..5)
        .map(|k| {
            let u = rng.random_range(0..rows.n_users());
            let v = (u + rng.random_range(1..rows.n_users())) % rows.n_users();
            let d = sharing_probe(p, rows.row(u), rows.row(v), 200, 0.05, rng)?;
            Ok(named(d.to_report(), format!("probe u={u} v={v} #{k}")))
        })
        .collect()
}
