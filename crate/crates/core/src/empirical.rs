//! Empirical NTK of realized networks and its Monte-Carlo aggregation.
//!
//! The layer-`h` contribution is evaluated as
//! `sum_i b_i(x) b_i(x') <g(x) ⊙ m_i, g(x') ⊙ m_i>` with `g = g^(h-1)` and
//! `m_i` the `i`-th mask row, which equals the Frobenius inner product of the
//! two layer gradients without materializing either of them.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::kernel_recursion;
use crate::error::{check_len, Result};
use crate::model::{build_network, InputPoint, NetworkConfig, NetworkState};
use crate::propagation::{backward_pair, backward_pass, forward_pair, forward_pass, masked_sum, BackwardTrace, ForwardTrace};
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkEstimate {
    pub total: f64,
    /// Contribution of layer `h` at index `h - 1`, `h = 1..=L+1`.
    pub per_layer: Vec<f64>,
    pub sample_id: u64,
    pub width_used: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkAggregate {
    pub mean: f64,
    /// Unbiased sample standard deviation; 0 for a single sample.
    pub sample_std: f64,
    /// Mean absolute deviation from the supplied reference (NaN if none).
    pub mad_vs_limit: f64,
    pub n_samples: usize,
    pub reference: f64,
    pub per_layer_mean: Vec<f64>,
    pub samples: Vec<NtkEstimate>,
}

/// Forward and backward pass of one input, reusable across kernel pairs.
#[derive(Debug, Clone)]
pub struct Traced {
    pub forward: ForwardTrace,
    pub backward: BackwardTrace,
}

pub fn trace_input(state: &NetworkState, x: &InputPoint) -> Result<Traced> {
    let forward = forward_pass(state, x)?;
    let backward = backward_pass(state, &forward)?;
    Ok(Traced { forward, backward })
}

/// Traces two inputs with one sweep over the weights per pass.
pub fn trace_pair(state: &NetworkState, x: &InputPoint, x2: &InputPoint) -> Result<(Traced, Traced)> {
    let (f1, f2) = forward_pair(state, x, x2)?;
    let (b1, b2) = backward_pair(state, &f1, &f2)?;
    Ok((
        Traced {
            forward: f1,
            backward: b1,
        },
        Traced {
            forward: f2,
            backward: b2,
        },
    ))
}

/// Per-layer kernel contributions for two traced inputs of the same network.
pub fn layer_contributions(state: &NetworkState, a: &Traced, b: &Traced) -> Vec<f64> {
    (1..=state.depth() + 1)
        .map(|h| {
            let (_, mask) = state.layer(h);
            let ga = &a.forward.acts[h - 1];
            let gb = &b.forward.acts[h - 1];
            let gg: Vec<f64> = ga.iter().zip(gb.iter()).map(|(u, v)| u * v).collect();
            let s2 = mask.scale() * mask.scale();
            let keep = mask.support().as_slice().expect("masks are stored row-major");
            // unpruned layers share one row sum
            let full_row = keep.iter().all(|&k| k).then(|| gg.iter().sum::<f64>());
            keep.chunks_exact(gg.len().max(1))
                .zip(a.backward.at(h).iter().zip(b.backward.at(h).iter()))
                .map(|(kr, (&u, &v))| {
                    let bprod = u * v;
                    if bprod == 0.0 {
                        return 0.0;
                    }
                    let row = full_row.unwrap_or_else(|| masked_sum(&gg, kr));
                    bprod * s2 * row
                })
                .sum()
        })
        .collect()
}

fn estimate(state: &NetworkState, per_layer: Vec<f64>) -> NtkEstimate {
    NtkEstimate {
        total: per_layer.iter().sum(),
        per_layer,
        sample_id: state.origin().map(|s| s.stream_id).unwrap_or(0),
        width_used: state.max_width(),
        alpha: state.config().alpha,
    }
}

/// `Θ̃(x, x')` for one realization.
pub fn ntk_pair(state: &NetworkState, x: &InputPoint, x2: &InputPoint) -> Result<NtkEstimate> {
    let per_layer = if x == x2 {
        let a = trace_input(state, x)?;
        layer_contributions(state, &a, &a)
    } else {
        let (a, b) = trace_pair(state, x, x2)?;
        layer_contributions(state, &a, &b)
    };
    Ok(estimate(state, per_layer))
}

/// Mean, unbiased standard deviation and mean absolute deviation from `reference`.
/// Sums run in slice order.
pub fn summarize(values: &[f64], reference: f64) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mad = if reference.is_nan() {
        f64::NAN
    } else {
        values.iter().map(|v| (v - reference).abs()).sum::<f64>() / n
    };
    (mean, std, mad)
}

/// Draws `n_samples` networks (sample `k` from stream `(config.seed, k)`) and
/// evaluates the kernel on each. Samples run in parallel; reductions are in
/// sample order so the result does not depend on scheduling.
pub fn ntk_monte_carlo(
    config: &NetworkConfig,
    x: &InputPoint,
    x2: &InputPoint,
    n_samples: usize,
    reference: f64,
) -> Result<NtkAggregate> {
    config.validate()?;
    if n_samples == 0 {
        return Err(crate::NtkError::Config("n_samples must be at least 1".into()));
    }
    check_len("ntk_monte_carlo x", config.input_dim, x.dim())?;
    check_len("ntk_monte_carlo x2", config.input_dim, x2.dim())?;
    let samples = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let state = build_network(config, RandomStream::new(config.seed, k))?;
            ntk_pair(&state, x, x2)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(samples, reference))
}

pub fn aggregate(samples: Vec<NtkEstimate>, reference: f64) -> NtkAggregate {
    let totals: Vec<f64> = samples.iter().map(|s| s.total).collect();
    let (mean, sample_std, mad_vs_limit) = summarize(&totals, reference);
    let layers = samples.first().map(|s| s.per_layer.len()).unwrap_or(0);
    let per_layer_mean = (0..layers)
        .map(|h| samples.iter().map(|s| s.per_layer[h]).sum::<f64>() / samples.len() as f64)
        .collect();
    NtkAggregate {
        mean,
        sample_std,
        mad_vs_limit,
        n_samples: samples.len(),
        reference,
        per_layer_mean,
        samples,
    }
}

/// Which kernel a Gram matrix is built from.
#[derive(Debug, Clone, Copy)]
pub enum GramSource<'a> {
    /// Empirical kernel of one realized network (a genuine Gram matrix).
    Realization(&'a NetworkState),
    /// Infinite-width kernel of an unpruned depth-`depth` network.
    AnalyticLimit { depth: usize },
}

/// Symmetric `n x n` matrix of pairwise kernel values.
pub fn ntk_gram(source: GramSource<'_>, points: &[InputPoint]) -> Result<Array2<f64>> {
    let n = points.len();
    let mut gram = Array2::zeros((n, n));
    match source {
        GramSource::Realization(state) => {
            let traces = points
                .iter()
                .map(|p| trace_input(state, p))
                .collect::<Result<Vec<_>>>()?;
            for i in 0..n {
                for j in i..n {
                    let v: f64 = layer_contributions(state, &traces[i], &traces[j]).iter().sum();
                    gram[[i, j]] = v;
                    gram[[j, i]] = v;
                }
            }
        }
        GramSource::AnalyticLimit { depth } => {
            for i in 0..n {
                for j in i..n {
                    let v = kernel_recursion(&points[i], &points[j], depth)?.theta_inf;
                    gram[[i, j]] = v;
                    gram[[j, i]] = v;
                }
            }
        }
    }
    Ok(gram)
}

/// Kernel values between one point and every point of `points`.
pub fn ntk_row(source: GramSource<'_>, x: &InputPoint, points: &[InputPoint]) -> Result<Vec<f64>> {
    match source {
        GramSource::Realization(state) => {
            let tx = trace_input(state, x)?;
            points
                .iter()
                .map(|p| {
                    let tp = trace_input(state, p)?;
                    Ok(layer_contributions(state, &tx, &tp).iter().sum())
                })
                .collect()
        }
        GramSource::AnalyticLimit { depth } => points
            .iter()
            .map(|p| Ok(kernel_recursion(x, p, depth)?.theta_inf))
            .collect(),
    }
}
