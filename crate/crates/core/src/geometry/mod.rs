//! Numerical checks of the latent-geometry results: masking contraction and
//! expansion, transport-entropy bounds, the exponential-family Jensen gap,
//! shrinkage under alignment and sharing-radius probes.
//!
//! Every check returns a [`GeometryReport`]. A tolerance entry `k → t`
//! asserts `values[k] ≤ t`.

mod expfam;
mod masking;
mod probe;
mod shrinkage;
pub mod suites;
mod transport;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use expfam::{
    bernoulli_conjugate, jensen_gap_bernoulli, pairwise_decomposition_check, QuadSpec,
};
pub use masking::{
    binomial_pmf, contraction_bound, expansion_bound, masked_distance_convolution,
    masked_distance_enumerate, masked_distance_exact, PairStats, ENUMERATION_MAX_BITS,
};
pub use probe::{export_latents, sharing_probe, SharingDiagnostics};
pub use shrinkage::quadratic_toy;
pub use transport::{
    dataset_bound_report, t1_bound_check, t1_bound_check_with, w1_1d_closed_form, w1_1d_numeric,
    w2_diag_gaussian, DEFAULT_W1_QUADRATURE,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub name: String,
    pub values: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub pass: bool,
}

impl GeometryReport {
    /// Report whose `pass` is the conjunction of all tolerance checks.
    pub fn from_checks<K: Into<String>, T: Into<String>>(
        name: impl Into<String>,
        values: impl IntoIterator<Item = (K, f64)>,
        tolerances: impl IntoIterator<Item = (T, f64)>,
    ) -> Self {
        let values: BTreeMap<String, f64> =
            values.into_iter().map(|(k, v)| (k.into(), v)).collect();
        let tolerances: BTreeMap<String, f64> =
            tolerances.into_iter().map(|(k, v)| (k.into(), v)).collect();
        let pass = tolerances.iter().all(|(k, t)| {
            let v = values
                .get(k)
                .unwrap_or_else(|| panic!("tolerance {k} has no value"));
            *v <= *t
        });
        Self {
            name: name.into(),
            values,
            tolerances,
            pass,
        }
    }

    pub fn value(&self, key: &str) -> f64 {
        self.values[key]
    }

    /// Single-line JSON. Non-finite values serialize as `null`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_is_conjunction_of_tolerances() {
        let r = GeometryReport::from_checks("x", [("a", 1.0), ("b", -2.0)], [("a", 1.0)]);
        assert!(r.pass);
        let r = GeometryReport::from_checks("x", [("a", 1.0), ("b", -2.0)], [("a", 0.5), ("b", 0.0)]);
        assert!(!r.pass);
        assert_eq!(
            r.to_json_line(),
            r#"{"name":"x","values":{"a":1.0,"b":-2.0},"tolerances":{"a":0.5,"b":0.0},"pass":false}"#
        );
    }
}
