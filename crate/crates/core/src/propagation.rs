//! Exact forward and backward passes of a pruned network.

use ndarray::{Array1, Array2};

use crate::error::{check_len, NtkError, Result};
use crate::model::{InputPoint, Mask, NetworkState, C_SIGMA};

/// Per-layer quantities of one forward pass.
///
/// `preacts[h - 1]` is `f^(h)` for `h = 1..=L+1` (the last one has length 1),
/// `acts[h]` is `g^(h)` for `h = 0..=L` with `g^(0) = x`, and `relu_diag[h - 1]`
/// holds the 0/1 diagonal of `D^(h)` for `h = 1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub preacts: Vec<Array1<f64>>,
    pub acts: Vec<Array1<f64>>,
    pub relu_diag: Vec<Array1<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> f64 {
        self.preacts.last().map(|f| f[0]).unwrap_or(0.0)
    }

    pub fn depth(&self) -> usize {
        self.relu_diag.len()
    }
}

/// `b^(h)` for `h = 1..=L+1`, stored at index `h - 1`; `b^(L+1) = [1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardTrace {
    pub back: Vec<Array1<f64>>,
}

impl BackwardTrace {
    pub fn at(&self, h: usize) -> &Array1<f64> {
        &self.back[h - 1]
    }
}

/// Post-activation scale `sqrt(c_sigma / d)`.
#[inline]
pub(crate) fn act_scale(width: usize) -> f64 {
    (C_SIGMA / width as f64).sqrt()
}

/// `sum_j w_j [keep_j] g_j`, with four partial sums so the loop vectorizes.
#[inline]
pub(crate) fn masked_dot(w: &[f64], keep: &[bool], g: &[f64]) -> f64 {
    let n = w.len();
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let base = c * 4;
        for l in 0..4 {
            let k = base + l;
            acc[l] += if keep[k] { w[k] * g[k] } else { 0.0 };
        }
    }
    let mut tail = 0.0;
    for k in chunks * 4..n {
        if keep[k] {
            tail += w[k] * g[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Two masked dot products sharing one pass over `w` and `keep`.
#[inline]
pub(crate) fn masked_dot2(w: &[f64], keep: &[bool], g1: &[f64], g2: &[f64]) -> (f64, f64) {
    let n = w.len();
    let mut a1 = [0.0f64; 4];
    let mut a2 = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let base = c * 4;
        for l in 0..4 {
            let k = base + l;
            a1[l] += if keep[k] { w[k] * g1[k] } else { 0.0 };
            a2[l] += if keep[k] { w[k] * g2[k] } else { 0.0 };
        }
    }
    let (mut t1, mut t2) = (0.0, 0.0);
    for k in chunks * 4..n {
        if keep[k] {
            t1 += w[k] * g1[k];
            t2 += w[k] * g2[k];
        }
    }
    (
        (a1[0] + a1[1]) + (a1[2] + a1[3]) + t1,
        (a2[0] + a2[1]) + (a2[2] + a2[3]) + t2,
    )
}

/// `sum_j [keep_j] v_j`.
#[inline]
pub(crate) fn masked_sum(v: &[f64], keep: &[bool]) -> f64 {
    let n = v.len();
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let base = c * 4;
        for l in 0..4 {
            acc[l] += if keep[base + l] { v[base + l] } else { 0.0 };
        }
    }
    let tail: f64 = (chunks * 4..n).filter(|&k| keep[k]).map(|k| v[k]).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `(W ⊙ m) g`.
pub(crate) fn masked_matvec(w: &Array2<f64>, mask: &Mask, g: &[f64]) -> Vec<f64> {
    let cols = w.ncols();
    let w = w.as_slice().expect("weights are stored row-major");
    let keep = mask.support().as_slice().expect("masks are stored row-major");
    let s = mask.scale();
    w.chunks_exact(cols)
        .zip(keep.chunks_exact(cols))
        .map(|(wr, kr)| s * masked_dot(wr, kr, g))
        .collect()
}

/// `(W ⊙ m) g1` and `(W ⊙ m) g2` in one sweep.
pub(crate) fn masked_matvec2(w: &Array2<f64>, mask: &Mask, g1: &[f64], g2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cols = w.ncols();
    let w = w.as_slice().expect("weights are stored row-major");
    let keep = mask.support().as_slice().expect("masks are stored row-major");
    let s = mask.scale();
    w.chunks_exact(cols)
        .zip(keep.chunks_exact(cols))
        .map(|(wr, kr)| {
            let (u, v) = masked_dot2(wr, kr, g1, g2);
            (s * u, s * v)
        })
        .unzip()
}

/// `(W ⊙ m)^T b`.
pub(crate) fn masked_matvec_t(w: &Array2<f64>, mask: &Mask, b: &[f64]) -> Vec<f64> {
    let cols = w.ncols();
    let ws = w.as_slice().expect("weights are stored row-major");
    let keep = mask.support().as_slice().expect("masks are stored row-major");
    let s = mask.scale();
    let mut out = vec![0.0; cols];
    for ((wr, kr), &bi) in ws.chunks_exact(cols).zip(keep.chunks_exact(cols)).zip(b) {
        if bi == 0.0 {
            continue;
        }
        let coef = s * bi;
        for ((o, &wv), &k) in out.iter_mut().zip(wr).zip(kr) {
            *o += if k { coef * wv } else { 0.0 };
        }
    }
    out
}

/// `(W ⊙ m)^T b1` and `(W ⊙ m)^T b2` in one sweep.
pub(crate) fn masked_matvec_t2(w: &Array2<f64>, mask: &Mask, b1: &[f64], b2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cols = w.ncols();
    let ws = w.as_slice().expect("weights are stored row-major");
    let keep = mask.support().as_slice().expect("masks are stored row-major");
    let s = mask.scale();
    let mut o1 = vec![0.0; cols];
    let mut o2 = vec![0.0; cols];
    for (((wr, kr), &u), &v) in ws.chunks_exact(cols).zip(keep.chunks_exact(cols)).zip(b1).zip(b2) {
        if u == 0.0 && v == 0.0 {
            continue;
        }
        let (c1, c2) = (s * u, s * v);
        for (((p, q), &wv), &k) in o1.iter_mut().zip(o2.iter_mut()).zip(wr).zip(kr) {
            *p += if k { c1 * wv } else { 0.0 };
            *q += if k { c2 * wv } else { 0.0 };
        }
    }
    (o1, o2)
}

impl ForwardTrace {
    fn start(x: &InputPoint, depth: usize) -> Self {
        let mut acts = Vec::with_capacity(depth + 1);
        acts.push(Array1::from(x.as_slice().to_vec()));
        ForwardTrace {
            preacts: Vec::with_capacity(depth + 1),
            acts,
            relu_diag: Vec::with_capacity(depth),
        }
    }

    fn push_hidden(&mut self, f: Vec<f64>, scale: f64) {
        let g: Vec<f64> = f.iter().map(|&v| scale * v.max(0.0)).collect();
        let d: Vec<f64> = f.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        self.preacts.push(Array1::from(f));
        self.acts.push(Array1::from(g));
        self.relu_diag.push(Array1::from(d));
    }

    fn last_act(&self) -> &[f64] {
        self.acts.last().expect("input is always present").as_slice().expect("contiguous")
    }
}

pub fn forward_pass(state: &NetworkState, x: &InputPoint) -> Result<ForwardTrace> {
    let dims = state.layer_dims();
    check_len("forward_pass input", dims[0], x.dim())?;
    let depth = state.depth();
    let mut t = ForwardTrace::start(x, depth);
    for h in 1..=depth {
        let (w, m) = state.layer(h);
        let f = masked_matvec(w, m, t.last_act());
        t.push_hidden(f, act_scale(dims[h]));
    }
    let (w, m) = state.layer(depth + 1);
    let out = masked_matvec(w, m, t.last_act());
    t.preacts.push(Array1::from(out));
    Ok(t)
}

/// Forward passes of two inputs sharing each sweep over the weights. Equal to two
/// calls of [`forward_pass`].
pub fn forward_pair(state: &NetworkState, x: &InputPoint, x2: &InputPoint) -> Result<(ForwardTrace, ForwardTrace)> {
    let dims = state.layer_dims();
    check_len("forward_pair input", dims[0], x.dim())?;
    check_len("forward_pair input", dims[0], x2.dim())?;
    let depth = state.depth();
    let mut t1 = ForwardTrace::start(x, depth);
    let mut t2 = ForwardTrace::start(x2, depth);
    for h in 1..=depth {
        let (w, m) = state.layer(h);
        let (f1, f2) = masked_matvec2(w, m, t1.last_act(), t2.last_act());
        t1.push_hidden(f1, act_scale(dims[h]));
        t2.push_hidden(f2, act_scale(dims[h]));
    }
    let (w, m) = state.layer(depth + 1);
    let (o1, o2) = masked_matvec2(w, m, t1.last_act(), t2.last_act());
    t1.preacts.push(Array1::from(o1));
    t2.preacts.push(Array1::from(o2));
    Ok((t1, t2))
}

pub(crate) fn check_trace(state: &NetworkState, trace: &ForwardTrace) -> Result<()> {
    let dims = state.layer_dims();
    let depth = state.depth();
    check_len("trace depth", depth, trace.relu_diag.len())?;
    check_len("trace activations", depth + 1, trace.acts.len())?;
    check_len("trace pre-activations", depth + 1, trace.preacts.len())?;
    for h in 0..=depth {
        check_len("trace activation width", dims[h], trace.acts[h].len())?;
    }
    for h in 1..=depth {
        check_len("trace relu diagonal width", dims[h], trace.relu_diag[h - 1].len())?;
    }
    Ok(())
}

pub fn backward_pass(state: &NetworkState, trace: &ForwardTrace) -> Result<BackwardTrace> {
    check_trace(state, trace)?;
    let dims = state.layer_dims();
    let depth = state.depth();
    let mut back = vec![Array1::zeros(0); depth + 1];
    back[depth] = Array1::from(vec![1.0]);
    for h in (1..=depth).rev() {
        let (w, m) = state.layer(h + 1);
        let t = masked_matvec_t(w, m, back[h].as_slice().expect("contiguous"));
        back[h - 1] = gate(&t, &trace.relu_diag[h - 1], act_scale(dims[h]));
    }
    Ok(BackwardTrace { back })
}

fn gate(t: &[f64], diag: &Array1<f64>, scale: f64) -> Array1<f64> {
    t.iter().zip(diag.iter()).map(|(&v, &d)| scale * d * v).collect()
}

/// Backward passes of two traces sharing each sweep over the weights.
pub fn backward_pair(
    state: &NetworkState,
    t1: &ForwardTrace,
    t2: &ForwardTrace,
) -> Result<(BackwardTrace, BackwardTrace)> {
    check_trace(state, t1)?;
    check_trace(state, t2)?;
    let dims = state.layer_dims();
    let depth = state.depth();
    let mut b1 = vec![Array1::zeros(0); depth + 1];
    let mut b2 = vec![Array1::zeros(0); depth + 1];
    b1[depth] = Array1::from(vec![1.0]);
    b2[depth] = Array1::from(vec![1.0]);
    for h in (1..=depth).rev() {
        let (w, m) = state.layer(h + 1);
        let (u, v) = masked_matvec_t2(
            w,
            m,
            b1[h].as_slice().expect("contiguous"),
            b2[h].as_slice().expect("contiguous"),
        );
        let scale = act_scale(dims[h]);
        b1[h - 1] = gate(&u, &t1.relu_diag[h - 1], scale);
        b2[h - 1] = gate(&v, &t2.relu_diag[h - 1], scale);
    }
    Ok((BackwardTrace { back: b1 }, BackwardTrace { back: b2 }))
}

/// `∂f/∂W^(h) = (b^(h) g^(h-1)^T) ⊙ m^(h)`. Pruned positions are exactly zero.
pub fn layer_gradient(
    state: &NetworkState,
    ftrace: &ForwardTrace,
    btrace: &BackwardTrace,
    h: usize,
) -> Result<Array2<f64>> {
    let max = state.depth() + 1;
    if h == 0 || h > max {
        return Err(NtkError::LayerIndex { layer: h, max });
    }
    check_trace(state, ftrace)?;
    check_len("backward trace depth", max, btrace.back.len())?;
    let (_, mask) = state.layer(h);
    let b = &btrace.back[h - 1];
    let g = &ftrace.acts[h - 1];
    check_len("backward vector width", mask.shape().0, b.len())?;
    Ok(Array2::from_shape_fn(mask.shape(), |(i, j)| {
        if mask.support()[[i, j]] {
            b[i] * g[j] * mask.scale()
        } else {
            0.0
        }
    }))
}

/// Scalar output `f^(L+1)(x)`.
pub fn network_output(state: &NetworkState, x: &InputPoint) -> Result<f64> {
    Ok(forward_pass(state, x)?.output())
}
