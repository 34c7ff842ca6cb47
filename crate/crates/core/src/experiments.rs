//! Width and keep-probability sweeps of the empirical NTK against its
//! infinite-width limit.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{kernel_recursion, pruned_limit};
use crate::empirical::ntk_monte_carlo;
use crate::error::{check_len, NtkError, Result};
use crate::model::{InputPoint, NetworkConfig};
use crate::rng::RandomStream;

/// Where the kernel's input pair comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputPairSource {
    /// Two independent uniform points on the unit sphere, drawn from the sweep
    /// seed (indices 0 and 1 of the input role of stream `(seed, 0)`).
    SeededRandomUnit { dim: usize },
    Explicit { x: Vec<f64>, x2: Vec<f64> },
}

impl Default for InputPairSource {
    fn default() -> Self {
        InputPairSource::SeededRandomUnit { dim: 16 }
    }
}

impl InputPairSource {
    pub fn resolve(&self, seed: u64) -> Result<(InputPoint, InputPoint)> {
        match self {
            InputPairSource::SeededRandomUnit { dim } => {
                if *dim == 0 {
                    return Err(NtkError::Config("input dimension must be positive".into()));
                }
                let stream = RandomStream::new(seed, 0);
                Ok((
                    InputPoint::random_unit(stream, 0, *dim),
                    InputPoint::random_unit(stream, 1, *dim),
                ))
            }
            InputPairSource::Explicit { x, x2 } => {
                check_len("input pair", x.len(), x2.len())?;
                Ok((InputPoint::new(x.clone())?, InputPoint::new(x2.clone())?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthSweepSpec {
    /// Strictly increasing hidden widths.
    pub widths: Vec<usize>,
    pub depth: usize,
    pub alpha: f64,
    pub rescale: bool,
    pub n_samples: usize,
    pub seed: u64,
    pub inputs: InputPairSource,
    /// Also run an unpruned network (same weights) at every width.
    pub include_control: bool,
}

impl Default for WidthSweepSpec {
    fn default() -> Self {
        WidthSweepSpec {
            widths: (5..=13).map(|k| 1usize << k).collect(),
            depth: 3,
            alpha: 0.5,
            rescale: true,
            n_samples: 64,
            seed: 0,
            inputs: InputPairSource::default(),
            include_control: false,
        }
    }
}

/// How the width grows as the keep-probability shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthScaling {
    /// `d = d_ref / α`
    Linear,
    /// `d = d_ref / α²`
    Quadratic,
}

impl WidthScaling {
    pub fn width(self, base: usize, alpha: f64) -> usize {
        let pow = match self {
            WidthScaling::Linear => 1,
            WidthScaling::Quadratic => 2,
        };
        (base as f64 / alpha.powi(pow)).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepSpec {
    pub alphas: Vec<f64>,
    pub base_width: usize,
    pub scaling: WidthScaling,
    pub n_samples: usize,
    pub depth: usize,
    pub rescale: bool,
    pub seed: u64,
    pub inputs: InputPairSource,
    /// Largest width the sweep may allocate.
    pub max_width: usize,
}

impl Default for AlphaSweepSpec {
    fn default() -> Self {
        AlphaSweepSpec {
            alphas: (0..=5).map(|k| 1.0 - 0.1 * k as f64).collect(),
            base_width: 1024,
            scaling: WidthScaling::Linear,
            n_samples: 100,
            depth: 3,
            rescale: true,
            seed: 0,
            inputs: InputPairSource::default(),
            max_width: 20_000,
        }
    }
}

impl AlphaSweepSpec {
    /// `(α, width)` for every grid point.
    pub fn grid(&self) -> Vec<(f64, usize)> {
        self.alphas
            .iter()
            .map(|&a| (a, self.scaling.width(self.base_width, a)))
            .collect()
    }
}

/// One line of a sweep table. `sweep_var` is the keep-probability of the run,
/// so unpruned control rows carry 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_var: f64,
    pub width: usize,
    pub mean: f64,
    pub std: f64,
    pub mad: f64,
    pub limit: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub seed: u64,
    pub x: Vec<f64>,
    pub x2: Vec<f64>,
    pub widths: Vec<usize>,
    pub alphas: Vec<f64>,
    /// Hex SHA-256 of the JSON-serialized sweep specification.
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

fn digest<T: Serialize>(spec: &T) -> String {
    let json = serde_json::to_vec(spec).expect("sweep specs serialize");
    hex::encode(Sha256::digest(json))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(NtkError::Config(format!("keep-probability must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

fn run_point(
    config: NetworkConfig,
    x: &InputPoint,
    x2: &InputPoint,
    n_samples: usize,
    theta_inf_kernel: &crate::analytic::AnalyticKernel,
) -> Result<SweepRow> {
    let limit = pruned_limit(theta_inf_kernel, config.alpha, config.rescale);
    let agg = ntk_monte_carlo(&config, x, x2, n_samples, limit)?;
    Ok(SweepRow {
        sweep_var: config.alpha,
        width: config.hidden_widths[0],
        mean: agg.mean,
        std: agg.sample_std,
        mad: agg.mad_vs_limit,
        limit,
        n_samples,
    })
}

fn check_common(depth: usize, n_samples: usize) -> Result<()> {
    if depth == 0 {
        return Err(NtkError::Config("depth must be at least 1".into()));
    }
    if n_samples == 0 {
        return Err(NtkError::Config("n_samples must be at least 1".into()));
    }
    Ok(())
}

/// Runs the pruned network at every width, each followed by its unpruned control
/// when requested and `α < 1`.
pub fn run_width_sweep(spec: &WidthSweepSpec) -> Result<SweepResult> {
    check_common(spec.depth, spec.n_samples)?;
    check_alpha(spec.alpha)?;
    if spec.widths.is_empty() || spec.widths[0] == 0 {
        return Err(NtkError::Config("width grid must be non-empty and positive".into()));
    }
    if spec.widths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(NtkError::Config("width grid must be strictly increasing".into()));
    }
    let (x, x2) = spec.inputs.resolve(spec.seed)?;
    let kernel = kernel_recursion(&x, &x2, spec.depth)?;
    let mut rows = Vec::new();
    for &width in &spec.widths {
        let config = NetworkConfig::uniform(x.dim(), spec.depth, width, spec.alpha)
            .with_rescale(spec.rescale)
            .with_seed(spec.seed);
        rows.push(run_point(config.clone(), &x, &x2, spec.n_samples, &kernel)?);
        if spec.include_control && spec.alpha < 1.0 {
            let control = NetworkConfig { alpha: 1.0, ..config };
            rows.push(run_point(control, &x, &x2, spec.n_samples, &kernel)?);
        }
    }
    Ok(SweepResult {
        rows,
        metadata: SweepMetadata {
            seed: spec.seed,
            x: x.as_slice().to_vec(),
            x2: x2.as_slice().to_vec(),
            widths: spec.widths.clone(),
            alphas: vec![spec.alpha],
            config_digest: digest(spec),
        },
    })
}

/// Runs every keep-probability at its scaled width. The whole grid is checked
/// against `max_width` before any network is drawn.
pub fn run_alpha_sweep(spec: &AlphaSweepSpec) -> Result<SweepResult> {
    check_common(spec.depth, spec.n_samples)?;
    if spec.alphas.is_empty() || spec.base_width == 0 {
        return Err(NtkError::Config("alpha grid must be non-empty and base width positive".into()));
    }
    for &a in &spec.alphas {
        check_alpha(a)?;
    }
    let grid = spec.grid();
    if let Some(&(alpha, width)) = grid.iter().find(|(_, w)| *w > spec.max_width) {
        return Err(NtkError::Resource {
            alpha,
            width,
            limit: spec.max_width,
        });
    }
    let (x, x2) = spec.inputs.resolve(spec.seed)?;
    let kernel = kernel_recursion(&x, &x2, spec.depth)?;
    let rows = grid
        .iter()
        .map(|&(alpha, width)| {
            let config = NetworkConfig::uniform(x.dim(), spec.depth, width, alpha)
                .with_rescale(spec.rescale)
                .with_seed(spec.seed);
            run_point(config, &x, &x2, spec.n_samples, &kernel)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        rows,
        metadata: SweepMetadata {
            seed: spec.seed,
            x: x.as_slice().to_vec(),
            x2: x2.as_slice().to_vec(),
            widths: grid.iter().map(|g| g.1).collect(),
            alphas: spec.alphas.clone(),
            config_digest: digest(spec),
        },
    })
}
