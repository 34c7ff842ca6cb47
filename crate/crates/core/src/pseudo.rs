//! Mask-induced pseudo-networks and Monte-Carlo checks of the distributional
//! facts used to bound them.
//!
//! The pseudo-network seeded by column `j` of `m^(h)` starts from
//!
//! ```text
//! g^(h,j,h)_i = sqrt(c_σ/d_h) D^(h)_i [m_ij ≠ 0] f^(h)_i / ||g^(h-1) ⊙ m_i||²
//! ```
//!
//! and then propagates linearly through the host network's weights, masks and
//! ReLU gates: `g^(h,j,h') = sqrt(c_σ/d_h') D^(h') (W^(h') ⊙ m^(h')) g^(h,j,h'-1)`.
//! Masks follow the rescaled convention, so `m_ij sqrt(α)` is exactly 0 or 1.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, NtkError, Result};
use crate::model::NetworkState;
use crate::propagation::{
    act_scale, backward_pass, check_trace, masked_dot, masked_matvec, masked_matvec_t, masked_sum, ForwardTrace,
};
use crate::rng::{standard_normal, RandomStream, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoTrace {
    pub source_layer: usize,
    /// 0-based column of `m^(h)`.
    pub column: usize,
    /// `g^(h,j,h')` for `h' = h..=L`.
    pub g_seq: Vec<Array1<f64>>,
    pub output: f64,
}

fn check_site(state: &NetworkState, host: &ForwardTrace, h: usize, j: usize) -> Result<()> {
    let cfg = state.config();
    if !(cfg.rescale || cfg.alpha == 1.0) {
        return Err(NtkError::Precondition(
            "pseudo-networks use the rescaled mask convention; enable rescale".into(),
        ));
    }
    let depth = state.depth();
    if h < 2 || h > depth {
        return Err(NtkError::Precondition(format!(
            "pseudo-network source layer must lie in 2..={depth}, got {h}"
        )));
    }
    check_trace(state, host)?;
    let cols = state.layer_dims()[h - 1];
    if j >= cols {
        return Err(NtkError::Precondition(format!(
            "column {j} out of range for layer {h} with {cols} columns"
        )));
    }
    Ok(())
}

/// First pseudo-network activation `g^(h,j,h)`.
fn seed_activation(state: &NetworkState, host: &ForwardTrace, h: usize, j: usize) -> Result<Vec<f64>> {
    let (_, mask) = state.layer(h);
    let g = host.acts[h - 1].as_slice().expect("contiguous");
    let sq: Vec<f64> = g.iter().map(|v| v * v).collect();
    let s2 = mask.scale() * mask.scale();
    let scale = act_scale(mask.shape().0);
    let keep = mask.support();
    let f = &host.preacts[h - 1];
    let d = &host.relu_diag[h - 1];
    let mut out = vec![0.0; mask.shape().0];
    for (i, o) in out.iter_mut().enumerate() {
        if !keep[[i, j]] {
            continue;
        }
        let row = keep.row(i);
        let denom = s2 * masked_sum(&sq, row.as_slice().expect("contiguous"));
        if denom == 0.0 {
            return Err(NtkError::DegenerateMask { layer: h, row: i });
        }
        *o = scale * d[i] * f[i] / denom;
    }
    Ok(out)
}

pub fn pseudo_forward(state: &NetworkState, host: &ForwardTrace, h: usize, j: usize) -> Result<PseudoTrace> {
    check_site(state, host, h, j)?;
    let depth = state.depth();
    let dims = state.layer_dims();
    let mut g_seq = vec![Array1::from(seed_activation(state, host, h, j)?)];
    for hp in h + 1..=depth {
        let (w, m) = state.layer(hp);
        let prev = g_seq.last().expect("non-empty").as_slice().expect("contiguous");
        let f = masked_matvec(w, m, prev);
        let scale = act_scale(dims[hp]);
        let g: Vec<f64> = f
            .iter()
            .zip(host.relu_diag[hp - 1].iter())
            .map(|(v, d)| scale * d * v)
            .collect();
        g_seq.push(Array1::from(g));
    }
    let (w, m) = state.layer(depth + 1);
    let last = g_seq.last().expect("non-empty").as_slice().expect("contiguous");
    let output = masked_matvec(w, m, last)[0];
    Ok(PseudoTrace {
        source_layer: h,
        column: j,
        g_seq,
        output,
    })
}

/// `f^(h,j,L+1)` for every column `j` of `m^(h)` at once.
///
/// The pseudo-network is linear after its first layer, so its output is
/// `a · g^(h,j,h)` with `a = (W^(h+1) ⊙ m^(h+1))^T b^(h+1)` taken from the host
/// network's backward pass. Agrees with [`pseudo_forward`] up to rounding.
pub fn pseudo_outputs(state: &NetworkState, host: &ForwardTrace, h: usize) -> Result<Vec<f64>> {
    check_site(state, host, h, 0)?;
    let back = backward_pass(state, host)?;
    let (w, m) = state.layer(h + 1);
    let a = masked_matvec_t(w, m, back.at(h + 1).as_slice().expect("contiguous"));
    let (_, mask) = state.layer(h);
    let g = host.acts[h - 1].as_slice().expect("contiguous");
    let sq: Vec<f64> = g.iter().map(|v| v * v).collect();
    let s2 = mask.scale() * mask.scale();
    let scale = act_scale(mask.shape().0);
    let keep = mask.support();
    let mut out = vec![0.0; mask.shape().1];
    for (i, row) in keep.outer_iter().enumerate() {
        let row = row.as_slice().expect("contiguous");
        let denom = s2 * masked_sum(&sq, row);
        if denom == 0.0 {
            if row.iter().any(|&k| k) {
                return Err(NtkError::DegenerateMask { layer: h, row: i });
            }
            continue;
        }
        let r = a[i] * scale * host.relu_diag[h - 1][i] * host.preacts[h - 1][i] / denom;
        if r == 0.0 {
            continue;
        }
        for (o, &k) in out.iter_mut().zip(row) {
            if k {
                *o += r;
            }
        }
    }
    Ok(out)
}

/// Largest `|f^(h,j,L+1)|` over all `h` in `2..=L` and all columns `j`.
pub fn max_abs_pseudo_output(state: &NetworkState, host: &ForwardTrace) -> Result<f64> {
    (2..=state.depth()).try_fold(0.0f64, |acc, h| {
        Ok(pseudo_outputs(state, host, h)?.iter().fold(acc, |m, v| m.max(v.abs())))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    /// Mean of `(w·x)² 1(w·y > 0)`.
    pub mean_lhs: f64,
    /// Mean of `(w·x)² 1(w·x > 0)`.
    pub mean_rhs: f64,
    /// Two-sample Kolmogorov–Smirnov distance between the two statistics.
    pub ks_distance: f64,
    pub n_samples: usize,
}

/// Two-sample Kolmogorov–Smirnov statistic; ties are stepped over together.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut k) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && k < b.len() {
        let v = if a[i] <= b[k] { a[i] } else { b[k] };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while k < b.len() && b[k] <= v {
            k += 1;
        }
        d = d.max((i as f64 / na - k as f64 / nb).abs());
    }
    d
}

/// Samples `w ~ N(0, I)` and compares `(w·x)² 1(w·y > 0)` with
/// `(w·x)² 1(w·x > 0)`. Both statistics share each `w`, so `y = x` makes them
/// identical sample by sample.
pub fn check_indicator_identity(
    x: &[f64],
    y: &[f64],
    n_samples: usize,
    stream: RandomStream,
) -> Result<IndicatorReport> {
    check_len("indicator identity vectors", x.len(), y.len())?;
    if x.iter().all(|&v| v == 0.0) || y.iter().all(|&v| v == 0.0) {
        return Err(NtkError::Domain("indicator identity needs nonzero vectors".into()));
    }
    if n_samples == 0 {
        return Err(NtkError::Config("n_samples must be at least 1".into()));
    }
    let mut rng = stream.rng(0, Role::Sampler);
    let mut lhs = Vec::with_capacity(n_samples);
    let mut rhs = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let (mut wx, mut wy) = (0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            let w = standard_normal(&mut rng);
            wx += w * a;
            wy += w * b;
        }
        let sq = wx * wx;
        lhs.push(if wy > 0.0 { sq } else { 0.0 });
        rhs.push(if wx > 0.0 { sq } else { 0.0 });
    }
    let n = n_samples as f64;
    Ok(IndicatorReport {
        mean_lhs: lhs.iter().sum::<f64>() / n,
        mean_rhs: rhs.iter().sum::<f64>() / n,
        ks_distance: ks_distance(&lhs, &rhs),
        n_samples,
    })
}

/// What gets redrawn in layers `h+1..=L` by [`check_norm_preservation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResampleMode {
    WeightsAndMasks,
    WeightsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormPreservationReport {
    /// Mean of `||g^(h,j,L)||²` over the resamples.
    pub lhs: f64,
    /// `||g^(h,j,h)||²`.
    pub rhs: f64,
    /// Mean of `||g^(h,j,h')||²` for `h' = h+1..=L`.
    pub layer_means: Vec<f64>,
    /// Standard error of `lhs`.
    pub lhs_std_err: f64,
    pub n_resample: usize,
}

impl NormPreservationReport {
    pub fn relative_gap(&self) -> f64 {
        (self.lhs / self.rhs - 1.0).abs()
    }
}

/// Keeps layers `1..=h` (and so `g^(h,j,h)`) fixed, redraws layers `h+1..=L`
/// `n_resample` times, and averages the squared pseudo-activation norms. The host
/// network's ReLU gates are recomputed from each redraw.
pub fn check_norm_preservation(
    state: &NetworkState,
    host: &ForwardTrace,
    h: usize,
    j: usize,
    n_resample: usize,
    stream: RandomStream,
    mode: ResampleMode,
) -> Result<NormPreservationReport> {
    check_site(state, host, h, j)?;
    let seed = seed_activation(state, host, h, j)?;
    let rhs: f64 = seed.iter().map(|v| v * v).sum();
    let depth = state.depth();
    if depth == h {
        return Ok(NormPreservationReport {
            lhs: rhs,
            rhs,
            layer_means: Vec::new(),
            lhs_std_err: 0.0,
            n_resample,
        });
    }
    if n_resample == 0 {
        return Err(NtkError::Config("n_resample must be at least 1".into()));
    }
    let cfg = state.config();
    let dims = state.layer_dims();
    let mut sums = vec![0.0; depth - h];
    let mut finals = Vec::with_capacity(n_resample);
    for r in 0..n_resample as u64 {
        let sub = stream.child(r);
        let mut host_g = host.acts[h].to_vec();
        let mut pseudo_g = seed.clone();
        for hp in h + 1..=depth {
            let (rows, cols) = (dims[hp], dims[hp - 1]);
            let (_, state_mask) = state.layer(hp);
            let s = state_mask.scale();
            let scale = act_scale(rows);
            let mut wrng = sub.rng(hp, Role::Weight);
            let mut mrng = sub.rng(hp, Role::Mask);
            let mut wrow = vec![0.0; cols];
            let mut krow = vec![true; cols];
            let mut next_host = vec![0.0; rows];
            let mut next_pseudo = vec![0.0; rows];
            for i in 0..rows {
                for w in wrow.iter_mut() {
                    *w = standard_normal(&mut wrng);
                }
                match mode {
                    ResampleMode::WeightsAndMasks if cfg.is_pruned(hp) && cfg.alpha < 1.0 => {
                        for k in krow.iter_mut() {
                            *k = mrng.random::<f64>() < cfg.alpha;
                        }
                    }
                    ResampleMode::WeightsAndMasks => {}
                    ResampleMode::WeightsOnly => {
                        let row = state_mask.support().row(i);
                        krow.copy_from_slice(row.as_slice().expect("contiguous"));
                    }
                }
                let f_host = s * masked_dot(&wrow, &krow, &host_g);
                if f_host > 0.0 {
                    next_host[i] = scale * f_host;
                    next_pseudo[i] = scale * s * masked_dot(&wrow, &krow, &pseudo_g);
                }
            }
            host_g = next_host;
            pseudo_g = next_pseudo;
            sums[hp - h - 1] += pseudo_g.iter().map(|v| v * v).sum::<f64>();
        }
        finals.push(pseudo_g.iter().map(|v| v * v).sum::<f64>());
    }
    let n = n_resample as f64;
    let lhs = finals.iter().sum::<f64>() / n;
    let var = if n_resample > 1 {
        finals.iter().map(|v| (v - lhs).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(NormPreservationReport {
        lhs,
        rhs,
        layer_means: sums.iter().map(|s| s / n).collect(),
        lhs_std_err: (var / n).sqrt(),
        n_resample,
    })
}
