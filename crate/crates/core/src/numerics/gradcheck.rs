//! Central-difference verification of analytic gradients.

use rand::Rng as _;

use super::params::ParamStore;
use super::rng::labeled_rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probes: Vec<ProbeResult>,
}

impl GradCheckReport {
    /// Largest relative error per tensor name, in store order.
    pub fn per_tensor(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for p in &self.probes {
            match out.iter_mut().find(|(n, _)| *n == p.tensor) {
                Some((_, e)) => *e = e.max(p.relative_error),
                None => out.push((p.tensor.clone(), p.relative_error)),
            }
        }
        out
    }

    pub fn worst(&self) -> Option<&ProbeResult> {
        self.probes
            .iter()
            .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compare the gradients already stored in `params` against central differences
/// of `loss_fn`.
///
/// Up to `samples_per_tensor` scalar entries are drawn from every unfrozen
/// tensor (all entries when the tensor is smaller), so each parameter class is
/// covered. Values are restored bit-exactly after each probe.
pub fn finite_diff_check<F>(
    mut loss_fn: F,
    params: &mut ParamStore,
    h: f64,
    samples_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let first = loss_fn(params)?;
    let second = loss_fn(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut rng = labeled_rng(seed, "gradcheck");
    let mut report = GradCheckReport::default();
    for ti in 0..params.len() {
        let (len, frozen, name) = {
            let t = &params.tensors()[ti];
            (t.len(), t.frozen, t.name.clone())
        };
        if frozen || len == 0 {
            continue;
        }
        let indices: Vec<usize> = if len <= samples_per_tensor {
            (0..len).collect()
        } else {
            (0..samples_per_tensor).map(|_| rng.random_range(0..len)).collect()
        };
        for idx in indices {
            let original = params.tensors()[ti].value[idx];
            let analytic = params.tensors()[ti].grad[idx];
            params.tensors_mut()[ti].value[idx] = original + h;
            let plus = loss_fn(params);
            params.tensors_mut()[ti].value[idx] = original - h;
            let minus = loss_fn(params);
            params.tensors_mut()[ti].value[idx] = original;
            let numeric = (plus? - minus?) / (2.0 * h);
            let err = relative_error(analytic, numeric);
            report.max_relative_error = report.max_relative_error.max(err);
            report.probes.push(ProbeResult {
                tensor: name.clone(),
                index: idx,
                analytic,
                numeric,
                relative_error: err,
            });
        }
    }
    Ok(report)
}
