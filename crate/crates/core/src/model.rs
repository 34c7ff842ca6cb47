//! Network configuration, realized weights/masks and their construction.
//!
//! Layers use the 1-based numbering of the recursion: layer `h` maps the
//! activations of layer `h - 1` (layer 0 is the input) to `d_h` pre-activations,
//! and layer `L + 1` is the scalar output. Neuron indices are 0-based.

use ndarray::Array2;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, NtkError, Result};
use crate::rng::{standard_normal, unit_vector, RandomStream, Role};

/// ReLU normalization constant `(E[relu(z)^2])^-1` for standard normal `z`.
pub const C_SIGMA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    /// `d_1..d_L`; the depth `L` is the length of this list.
    pub hidden_widths: Vec<usize>,
    /// Keep-probability; the pruning probability is `1 - alpha`.
    pub alpha: f64,
    /// Surviving mask entries take the value `1/sqrt(alpha)` instead of 1.
    pub rescale: bool,
    /// Whether the output layer is pruned along with the hidden layers.
    pub prune_output: bool,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, alpha: f64) -> Self {
        Self {
            input_dim,
            hidden_widths,
            alpha,
            rescale: false,
            prune_output: true,
            seed: 0,
        }
    }

    /// `depth` hidden layers of equal `width`.
    pub fn uniform(input_dim: usize, depth: usize, width: usize, alpha: f64) -> Self {
        Self::new(input_dim, vec![width; depth], alpha)
    }

    pub fn with_rescale(mut self, rescale: bool) -> Self {
        self.rescale = rescale;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_prune_output(mut self, prune_output: bool) -> Self {
        self.prune_output = prune_output;
        self
    }

    pub fn depth(&self) -> usize {
        self.hidden_widths.len()
    }

    /// `[d_0, d_1, .., d_L, 1]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.depth() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(1);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() {
            return Err(NtkError::Config("depth must be at least 1".into()));
        }
        if self.input_dim == 0 {
            return Err(NtkError::Config("input dimension must be positive".into()));
        }
        if let Some(h) = self.hidden_widths.iter().position(|&w| w == 0) {
            return Err(NtkError::Config(format!("width of layer {} is zero", h + 1)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(NtkError::Config(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Whether layer `h` carries a Bernoulli mask. The input layer never does.
    pub fn is_pruned(&self, h: usize) -> bool {
        h >= 2 && (h <= self.depth() || (h == self.depth() + 1 && self.prune_output))
    }

    /// Value taken by surviving mask entries of layer `h`.
    pub fn mask_scale(&self, h: usize) -> f64 {
        if self.is_pruned(h) && self.rescale {
            1.0 / self.alpha.sqrt()
        } else {
            1.0
        }
    }

    pub fn keep_probability(&self, h: usize) -> f64 {
        if self.is_pruned(h) {
            self.alpha
        } else {
            1.0
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().windows(2).map(|w| w[0] * w[1]).sum()
    }
}

/// A network input. Entries must be finite; the unit-ball condition the
/// convergence results assume is checked separately by [`InputPoint::within_unit_ball`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPoint(Vec<f64>);

impl InputPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(NtkError::Config("input point has no coordinates".into()));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(NtkError::Domain(format!("input coordinate {i} is not finite")));
        }
        Ok(Self(coords))
    }

    /// Uniform random point on the unit sphere, drawn from the `Input` role of `stream`.
    pub fn random_unit(stream: RandomStream, index: usize, dim: usize) -> Self {
        let mut rng = stream.rng(index, Role::Input);
        Self(unit_vector(&mut rng, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &InputPoint) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn within_unit_ball(&self) -> bool {
        self.norm() <= 1.0 + 1e-12
    }
}

/// Binary mask with entries in `{0, scale}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    support: Array2<bool>,
    scale: f64,
}

impl Mask {
    /// All entries kept, value 1.
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            support: Array2::from_elem((rows, cols), true),
            scale: 1.0,
        }
    }

    pub fn from_support(support: Array2<bool>, scale: f64) -> Self {
        Self {
            support: support.as_standard_layout().into_owned(),
            scale,
        }
    }

    pub fn support(&self) -> &Array2<bool> {
        &self.support
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> (usize, usize) {
        self.support.dim()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        if self.support[[i, j]] {
            self.scale
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.support.mapv(|k| if k { self.scale } else { 0.0 })
    }

    pub fn kept_count(&self) -> usize {
        self.support.iter().filter(|&&k| k).count()
    }

    pub fn row_counts(&self) -> Vec<usize> {
        self.support
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&k| k).count())
            .collect()
    }
}

/// One realization of weights and masks. Immutable once built, apart from the
/// explicit single-weight setter used by finite-difference checks.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    config: NetworkConfig,
    weights: Vec<Array2<f64>>,
    masks: Vec<Mask>,
    origin: Option<RandomStream>,
}

/// Integer form of `u < alpha` for `u = (bits >> 11) 2^-53`, the uniform draw
/// `rng.random::<f64>()` makes from `bits = rng.next_u64()`. Both sides are
/// exact, so the decision is identical.
fn keep_threshold(alpha: f64) -> u64 {
    (alpha * (1u64 << 53) as f64).ceil() as u64
}

fn draw_mask(config: &NetworkConfig, stream: RandomStream, h: usize) -> Mask {
    let dims = config.layer_dims();
    let (rows, cols) = (dims[h], dims[h - 1]);
    if config.is_pruned(h) && config.alpha < 1.0 {
        let mut rng = stream.rng(h, Role::Mask);
        let threshold = keep_threshold(config.alpha);
        let mut keep = vec![false; rows * cols];
        for k in keep.iter_mut() {
            *k = (rng.next_u64() >> 11) < threshold;
        }
        Mask::from_support(
            Array2::from_shape_vec((rows, cols), keep).expect("shape matches length"),
            config.mask_scale(h),
        )
    } else {
        Mask::from_support(Array2::from_elem((rows, cols), true), config.mask_scale(h))
    }
}

/// The masks [`build_network`] would draw from `stream`, without the weights.
pub fn build_masks(config: &NetworkConfig, stream: RandomStream) -> Result<Vec<Mask>> {
    config.validate()?;
    Ok((1..config.layer_dims().len()).map(|h| draw_mask(config, stream, h)).collect())
}

/// Draws weights i.i.d. `N(0,1)` and masks i.i.d. `Bernoulli(alpha)` for every
/// pruned layer. Weight and mask draws of layer `h` come from the
/// `(h, Weight)` and `(h, Mask)` slots of `stream`, so two configurations that
/// differ only in `alpha` or `rescale` share their weights.
pub fn build_network(config: &NetworkConfig, stream: RandomStream) -> Result<NetworkState> {
    config.validate()?;
    let dims = config.layer_dims();
    let mut weights = Vec::with_capacity(dims.len() - 1);
    for h in 1..dims.len() {
        let (rows, cols) = (dims[h], dims[h - 1]);
        let mut rng = stream.rng(h, Role::Weight);
        let w: Vec<f64> = (0..rows * cols).map(|_| standard_normal(&mut rng)).collect();
        weights.push(Array2::from_shape_vec((rows, cols), w).expect("shape matches length"));
    }
    Ok(NetworkState {
        config: config.clone(),
        weights,
        masks: build_masks(config, stream)?,
        origin: Some(stream),
    })
}

impl NetworkState {
    /// Assembles a network from explicit parts, checking every invariant.
    pub fn from_parts(
        config: NetworkConfig,
        weights: Vec<Array2<f64>>,
        masks: Vec<Mask>,
    ) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        check_len("layer count (weights)", dims.len() - 1, weights.len())?;
        check_len("layer count (masks)", dims.len() - 1, masks.len())?;
        for h in 1..dims.len() {
            let (w, m) = (&weights[h - 1], &masks[h - 1]);
            check_len("weight rows", dims[h], w.nrows())?;
            check_len("weight cols", dims[h - 1], w.ncols())?;
            check_len("mask rows", dims[h], m.shape().0)?;
            check_len("mask cols", dims[h - 1], m.shape().1)?;
            if m.scale != config.mask_scale(h) {
                return Err(NtkError::Config(format!(
                    "mask of layer {h} has scale {}, expected {}",
                    m.scale,
                    config.mask_scale(h)
                )));
            }
            if !config.is_pruned(h) && m.support.iter().any(|&k| !k) {
                return Err(NtkError::Config(format!("layer {h} is unpruned but its mask has zeros")));
            }
        }
        let weights = weights
            .into_iter()
            .map(|w| w.as_standard_layout().into_owned())
            .collect();
        Ok(Self {
            config,
            weights,
            masks,
            origin: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.config.depth()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.config.layer_dims()
    }

    /// Stream the network was drawn from, if it was built by [`build_network`].
    pub fn origin(&self) -> Option<RandomStream> {
        self.origin
    }

    fn check_layer(&self, h: usize) -> Result<usize> {
        let max = self.depth() + 1;
        if h == 0 || h > max {
            Err(NtkError::LayerIndex { layer: h, max })
        } else {
            Ok(h - 1)
        }
    }

    /// `W^(h)`, shape `d_h x d_{h-1}`.
    pub fn weights(&self, h: usize) -> Result<&Array2<f64>> {
        Ok(&self.weights[self.check_layer(h)?])
    }

    pub fn mask(&self, h: usize) -> Result<&Mask> {
        Ok(&self.masks[self.check_layer(h)?])
    }

    pub(crate) fn layer(&self, h: usize) -> (&Array2<f64>, &Mask) {
        (&self.weights[h - 1], &self.masks[h - 1])
    }

    pub fn set_weight(&mut self, h: usize, i: usize, j: usize, value: f64) -> Result<()> {
        let idx = self.check_layer(h)?;
        let w = &mut self.weights[idx];
        if i >= w.nrows() || j >= w.ncols() {
            return Err(NtkError::Precondition(format!(
                "weight index ({i}, {j}) outside {}x{} layer {h}",
                w.nrows(),
                w.ncols()
            )));
        }
        w[[i, j]] = value;
        Ok(())
    }

    /// Largest hidden width.
    pub fn max_width(&self) -> usize {
        self.config.hidden_widths.iter().copied().max().unwrap_or(0)
    }
}

/// Same weights and mask support with surviving entries set to `1/sqrt(alpha)`
/// (`on`) or 1 (`off`).
pub fn toggle_rescale(state: &NetworkState, on: bool) -> NetworkState {
    let mut out = state.clone();
    out.config.rescale = on;
    for (idx, mask) in out.masks.iter_mut().enumerate() {
        mask.scale = out.config.mask_scale(idx + 1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSurvival {
    pub layer: usize,
    /// `keep_probability * d_{h-1}`.
    pub expected: f64,
    pub counts: Vec<usize>,
    /// `|count - expected| / expected` per row.
    pub rel_deviation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalStats {
    pub layers: Vec<LayerSurvival>,
}

impl SurvivalStats {
    pub fn max_rel_deviation(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.rel_deviation.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// Per-row counts of surviving weights for every layer `h >= 2`.
pub fn mask_survival_stats(state: &NetworkState) -> SurvivalStats {
    survival_stats(&state.config, &state.masks)
}

/// Like [`mask_survival_stats`] for masks alone, as returned by [`build_masks`].
pub fn survival_stats(config: &NetworkConfig, masks: &[Mask]) -> SurvivalStats {
    let layers = masks
        .iter()
        .enumerate()
        .skip(1)
        .map(|(idx, mask)| {
            let h = idx + 1;
            let expected = config.keep_probability(h) * mask.shape().1 as f64;
            let counts = mask.row_counts();
            let rel_deviation = counts
                .iter()
                .map(|&c| (c as f64 - expected).abs() / expected)
                .collect();
            LayerSurvival {
                layer: h,
                expected,
                counts,
                rel_deviation,
            }
        })
        .collect();
    SurvivalStats { layers }
}
