//! Central-difference gradient checking against the reverse-mode tape.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::graph::{Graph, Node};
use crate::numerics::params::ParamStore;
use crate::rng::{salt, SplitMix64};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOpts {
    /// Central-difference step.
    pub eps: f64,
    /// Coordinates sampled per parameter (all coordinates when the
    /// parameter is smaller).
    pub coords_per_param: usize,
    /// Seed for coordinate sampling.
    pub seed: u64,
}

impl Default for GradCheckOpts {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            coords_per_param: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max relative error per parameter.
    pub per_param: BTreeMap<String, f64>,
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

impl GradCheckReport {
    /// Max relative error over parameters whose name starts with `prefix`.
    pub fn max_for_prefix(&self, prefix: &str) -> f64 {
        self.per_param
            .iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .map(|(_, &err)| err)
            .fold(0.0, f64::max)
    }
}

/// Relative error |a - n| / max(1, |a|, |n|).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs())
}

/// Checks reverse-mode gradients of `build` against central differences.
///
/// `build` must construct the loss deterministically from the store; this
/// is verified by evaluating the base point twice and comparing bits.
pub fn grad_check<F>(store: &ParamStore, build: F, opts: &GradCheckOpts) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Node>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut graph = Graph::new();
        let loss = build(&mut graph, store)?;
        Ok(graph.value(loss).item())
    };

    // Analytic gradients at the base point.
    let mut graph = Graph::new();
    let loss = build(&mut graph, store)?;
    let base_value = graph.value(loss).item();
    graph.backward(loss)?;
    let analytic = graph.param_grads();

    if eval(store)?.to_bits() != base_value.to_bits() {
        return Err(Error::NonDeterministicLoss);
    }

    let mut per_param = BTreeMap::new();
    let mut max_rel_err = 0.0f64;
    let mut coords_checked = 0;
    let mut perturbed = store.clone();

    for (name, grad) in &analytic {
        let len = grad.len();
        let coords: Vec<usize> = if len <= opts.coords_per_param {
            (0..len).collect()
        } else {
            let mut rng = SplitMix64::salted(opts.seed ^ name_hash(name), salt::GRADCHECK);
            (0..opts.coords_per_param).map(|_| rng.index(len)).collect()
        };

        let mut worst = 0.0f64;
        for &i in &coords {
            let original = store.get(name).data()[i];
            perturbed.get_mut(name).data_mut()[i] = original + opts.eps;
            let plus = eval(&perturbed)?;
            perturbed.get_mut(name).data_mut()[i] = original - opts.eps;
            let minus = eval(&perturbed)?;
            perturbed.get_mut(name).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * opts.eps);
            worst = worst.max(relative_error(grad.data()[i], numeric));
            coords_checked += 1;
        }
        max_rel_err = max_rel_err.max(worst);
        per_param.insert(name.clone(), worst);
    }

    Ok(GradCheckReport {
        per_param,
        max_rel_err,
        coords_checked,
    })
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a, enough to decorrelate per-parameter sampling streams.
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in name.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
