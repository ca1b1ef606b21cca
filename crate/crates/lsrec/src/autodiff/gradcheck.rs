//! Central-difference verification of analytic gradients.
//!
//! The caller supplies a loss closure that rebuilds its graph from the
//! store on every call; this module perturbs one scalar at a time,
//! restores it bit-exactly, and compares the numeric slope against the
//! analytic gradient under a scale-aware relative error.

use std::collections::HashMap;

use super::params::ParamStore;
use super::tensor::Tensor;

/// Default step for central differences.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Absolute agreement below which the error counts as zero, so that
/// near-zero gradients do not blow up the relative scale.
pub const ABS_AGREEMENT: f64 = 1e-8;

/// One compared scalar.
#[derive(Debug, Clone)]
pub struct CheckEntry {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of a gradient check over a store.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub checked: usize,
    /// Entries whose slope needed a finer step than the base epsilon;
    /// they count as passes (see [`check_all`]).
    pub refined: usize,
    pub failures: Vec<CheckEntry>,
    pub worst: Option<CheckEntry>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn worst_rel_err(&self) -> f64 {
        self.worst.as_ref().map(|w| w.rel_err).unwrap_or(0.0)
    }
}

/// `|a - n| / max(|a|, |n|)`, or 0 when the absolute gap is within
/// [`ABS_AGREEMENT`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let gap = (analytic - numeric).abs();
    if gap <= ABS_AGREEMENT {
        0.0
    } else {
        gap / analytic.abs().max(numeric.abs())
    }
}

/// Numeric slope of `f` w.r.t. one scalar of one entry, by central
/// differences. The entry value is restored exactly afterwards.
pub fn central_diff(
    store: &mut ParamStore,
    name: &str,
    index: usize,
    epsilon: f64,
    f: &mut dyn FnMut(&ParamStore) -> f64,
) -> f64 {
    let original = store.get(name).data()[index];
    store.get_mut(name).data_mut()[index] = original + epsilon;
    let up = f(store);
    store.get_mut(name).data_mut()[index] = original - epsilon;
    let down = f(store);
    store.get_mut(name).data_mut()[index] = original;
    (up - down) / (2.0 * epsilon)
}

/// Check analytic gradients for every trainable entry of the store.
/// `limit_per_param` caps how many scalars are probed per entry
/// (evenly spaced); `None` probes all of them.
///
/// An entry that misses the tolerance at the base epsilon is retried at
/// epsilon/10 and epsilon/100 and passes if the finer slope agrees. The
/// base step straddles a hinge whenever a downstream pre-activation sits
/// within epsilon of its kink, and there the two-sided slope is not the
/// derivative; shrinking the step restores the comparison. A wrong
/// analytic gradient still fails, because the finer slopes converge to
/// the true derivative rather than to the claimed one.
pub fn check_all(
    store: &mut ParamStore,
    analytic: &HashMap<String, Tensor>,
    epsilon: f64,
    tolerance: f64,
    limit_per_param: Option<usize>,
    f: &mut dyn FnMut(&ParamStore) -> f64,
) -> CheckReport {
    let names = store.trainable_names();
    let mut checked = 0;
    let mut refined = 0;
    let mut failures = Vec::new();
    let mut worst: Option<CheckEntry> = None;
    for name in names {
        let grad = analytic
            .get(&name)
            .unwrap_or_else(|| panic!("no analytic gradient for {name}"))
            .clone();
        let n = grad.numel();
        let indices: Vec<usize> = match limit_per_param {
            Some(limit) if limit < n => {
                let stride = n as f64 / limit as f64;
                (0..limit).map(|k| (k as f64 * stride) as usize).collect()
            }
            _ => (0..n).collect(),
        };
        for idx in indices {
            let a = grad.data()[idx];
            let mut numeric = central_diff(store, &name, idx, epsilon, f);
            let mut rel = relative_error(a, numeric);
            if rel > tolerance {
                for shrink in [10.0, 100.0] {
                    let finer = central_diff(store, &name, idx, epsilon / shrink, f);
                    let finer_rel = relative_error(a, finer);
                    if finer_rel < rel {
                        numeric = finer;
                        rel = finer_rel;
                    }
                    if rel <= tolerance {
                        break;
                    }
                }
                if rel <= tolerance {
                    refined += 1;
                }
            }
            let entry = CheckEntry {
                name: name.clone(),
                index: idx,
                analytic: a,
                numeric,
                rel_err: rel,
            };
            checked += 1;
            if rel > tolerance {
                failures.push(entry.clone());
            }
            let is_worse = worst.as_ref().map(|w| rel > w.rel_err).unwrap_or(true);
            if is_worse {
                worst = Some(entry);
            }
        }
    }
    CheckReport {
        checked,
        refined,
        failures,
        worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::graph::Graph;

    #[test]
    fn relative_error_rules() {
        assert_eq!(relative_error(1.0, 1.0 + 5e-9), 0.0);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        let e = relative_error(2.0, 1.0);
        assert!((e - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadratic_gradient_verifies() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::vector(vec![1.5, -2.0, 0.3]), true, false);

        let mut loss = |s: &ParamStore| {
            let mut g = Graph::new();
            let bound = s.bind(&mut g);
            let x = bound.id("x");
            let sq = g.sum_sq(x);
            g.value(sq).item()
        };

        let analytic = {
            let mut g = Graph::new();
            let bound = store.bind(&mut g);
            let x = bound.id("x");
            let sq = g.sum_sq(x);
            let grads = g.backward(sq).unwrap();
            let mut m = HashMap::new();
            m.insert("x".to_string(), grads.grad(x).unwrap().clone());
            m
        };

        let report = check_all(&mut store, &analytic, DEFAULT_EPSILON, 1e-4, None, &mut loss);
        assert!(report.passed(), "worst: {:?}", report.worst);
        assert_eq!(report.checked, 3);
        // Perturbations restored exactly.
        assert_eq!(store.get("x").data(), &[1.5, -2.0, 0.3]);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::scalar(2.0), true, false);
        let mut loss = |s: &ParamStore| {
            let v = s.get("x").item();
            v * v
        };
        let mut analytic = HashMap::new();
        // Claim df/dx = x instead of 2x.
        analytic.insert("x".to_string(), Tensor::scalar(2.0));
        let report = check_all(&mut store, &analytic, DEFAULT_EPSILON, 1e-4, None, &mut loss);
        assert!(!report.passed());
        assert_eq!(report.failures.len(), 1);
    }

    #[test]
    fn near_kink_entry_passes_via_refinement() {
        // relu at x = 1e-6: the base step straddles the hinge and sees
        // slope ~0.55, the finer steps recover the true slope 1.
        let mut store = ParamStore::new();
        store.insert("x", Tensor::scalar(1e-6), true, false);
        let mut loss = |s: &ParamStore| s.get("x").item().max(0.0);
        let mut analytic = HashMap::new();
        analytic.insert("x".to_string(), Tensor::scalar(1.0));
        let report = check_all(&mut store, &analytic, 1e-5, 1e-4, None, &mut loss);
        assert!(report.passed(), "worst: {:?}", report.worst);
        assert_eq!(report.refined, 1);
    }

    #[test]
    fn refinement_does_not_rescue_a_wrong_gradient() {
        // Same near-kink point, but the claimed gradient is wrong; the
        // finer slopes converge to 1, not to 0.7.
        let mut store = ParamStore::new();
        store.insert("x", Tensor::scalar(1e-6), true, false);
        let mut loss = |s: &ParamStore| s.get("x").item().max(0.0);
        let mut analytic = HashMap::new();
        analytic.insert("x".to_string(), Tensor::scalar(0.7));
        let report = check_all(&mut store, &analytic, 1e-5, 1e-4, None, &mut loss);
        assert!(!report.passed());
        assert_eq!(report.refined, 0);
    }

    #[test]
    fn nonsmooth_relu_checks_away_from_kink() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::vector(vec![0.8, -0.9]), true, false);
        let mut loss = |s: &ParamStore| {
            let mut g = Graph::new();
            let bound = s.bind(&mut g);
            let x = bound.id("x");
            let r = g.relu(x);
            let s = g.sum(r);
            g.value(s).item()
        };
        let analytic = {
            let mut g = Graph::new();
            let bound = store.bind(&mut g);
            let x = bound.id("x");
            let r = g.relu(x);
            let s = g.sum(r);
            let grads = g.backward(s).unwrap();
            let mut m = HashMap::new();
            m.insert("x".to_string(), grads.grad(x).unwrap().clone());
            m
        };
        let report = check_all(&mut store, &analytic, DEFAULT_EPSILON, 1e-4, None, &mut loss);
        assert!(report.passed());
    }
}
