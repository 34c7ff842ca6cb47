//! Infinite-width quantities: the `Σ^(h)` / `Σ̇^(h)` recursion, the limiting
//! NTK `Θ_∞`, its keep-probability scaling, and kernel regression with it.
//!
//! Bivariate-Gaussian ReLU moments use the arc-cosine closed form: with
//! `ρ = Σ12 / sqrt(Σ11 Σ22)` and `θ = arccos ρ`,
//!
//! ```text
//! c_σ E[σ(u)σ(v)] = sqrt(Σ11 Σ22) (sin θ + (π - θ) ρ) / π
//! c_σ E[σ̇(u)σ̇(v)] = (π - θ) / π
//! ```
//!
//! for `c_σ = 2`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, NtkError, Result};
use crate::model::InputPoint;

/// Tolerance on `|ρ| - 1` (and on negative variances) before input is rejected.
pub const RHO_TOLERANCE: f64 = 1e-9;

/// Reciprocal condition number below which a kernel system counts as singular.
pub const MIN_RCOND: f64 = 1e-12;

/// Symmetric 2x2 covariance `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }
}

/// `(c_σ E[σ(u)σ(v)], c_σ E[σ̇(u)σ̇(v)])` for `(u, v) ~ N(0, cov)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualMoments {
    pub pair: f64,
    pub dot_pair: f64,
}

pub fn relu_dual(cov: Cov2) -> Result<DualMoments> {
    let Cov2 { xx, xy, yy } = cov;
    if !(xx.is_finite() && xy.is_finite() && yy.is_finite()) {
        return Err(NtkError::Domain(format!("non-finite covariance {cov:?}")));
    }
    if xx < -RHO_TOLERANCE || yy < -RHO_TOLERANCE {
        return Err(NtkError::Domain(format!("negative variance in {cov:?}")));
    }
    let (xx, yy) = (xx.max(0.0), yy.max(0.0));
    let norm = (xx * yy).sqrt();
    if norm == 0.0 {
        // degenerate: one coordinate is almost surely 0, so σ(u)σ(v) = 0;
        // the derivative moment is pinned to 1/2 by convention
        return Ok(DualMoments {
            pair: 0.0,
            dot_pair: 0.5,
        });
    }
    let rho = xy / norm;
    if rho.abs() > 1.0 + RHO_TOLERANCE {
        return Err(NtkError::Domain(format!(
            "covariance is not PSD (correlation {rho})"
        )));
    }
    let rho = rho.clamp(-1.0, 1.0);
    let theta = rho.acos();
    Ok(DualMoments {
        pair: norm * (theta.sin() + (PI - theta) * rho) / PI,
        dot_pair: (PI - theta) / PI,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticKernel {
    /// `Σ^(h)(x, x')` for `h = 0..=L`.
    pub sigma: Vec<f64>,
    /// `(Σ^(h)(x, x), Σ^(h)(x', x'))` for `h = 0..=L`.
    pub sigma_diag: Vec<(f64, f64)>,
    /// `Σ̇^(h)(x, x')` for `h = 1..=L`, stored at index `h - 1`.
    pub sigma_dot: Vec<f64>,
    /// `Λ^(h)` for `h = 1..=L`, stored at index `h - 1`.
    pub lambda: Vec<Cov2>,
    pub theta_inf: f64,
}

impl AnalyticKernel {
    pub fn depth(&self) -> usize {
        self.sigma_dot.len()
    }

    /// `Σ̇^(h)`, with the linear output layer contributing `Σ̇^(L+1) = 1`.
    pub fn sigma_dot_at(&self, h: usize) -> f64 {
        if h == self.depth() + 1 {
            1.0
        } else {
            self.sigma_dot[h - 1]
        }
    }

    /// `Σ^(h-1) ∏_{h'=h}^{L+1} Σ̇^(h')` for `h = 1..=L+1`; these sum to `Θ_∞`.
    pub fn layer_terms(&self) -> Vec<f64> {
        let depth = self.depth();
        (1..=depth + 1)
            .map(|h| self.sigma[h - 1] * self.backward_product(h))
            .collect()
    }

    /// `∏_{h'=h}^{L} Σ̇^(h')`, the limit of `<b^(h)(x), b^(h)(x')>` in an unpruned network.
    pub fn backward_product(&self, h: usize) -> f64 {
        (h..=self.depth()).map(|k| self.sigma_dot[k - 1]).product()
    }

    /// Limit of `<g^(h)(x), g^(h)(x')>` when layers `2..=h` are pruned without rescaling:
    /// `α^(h-1) Σ^(h)`.
    pub fn pruned_sigma(&self, h: usize, alpha: f64) -> f64 {
        alpha.powi(h as i32 - 1) * self.sigma[h]
    }

    /// Limit of `<b^(h)(x), b^(h)(x')>` when layers `h+1..=L+1` are pruned without
    /// rescaling: `α^(L+1-h) ∏ Σ̇`.
    pub fn pruned_backward_product(&self, h: usize, alpha: f64) -> f64 {
        alpha.powi((self.depth() + 1 - h) as i32) * self.backward_product(h)
    }
}

/// Runs the covariance recursion for an unpruned depth-`depth` network and
/// assembles `Θ_∞(x, x')`.
pub fn kernel_recursion(x: &InputPoint, x2: &InputPoint, depth: usize) -> Result<AnalyticKernel> {
    check_len("kernel_recursion inputs", x.dim(), x2.dim())?;
    if depth == 0 {
        return Err(NtkError::Config("depth must be at least 1".into()));
    }
    let mut sigma = vec![x.dot(x2)];
    let mut sigma_diag = vec![(x.dot(x), x2.dot(x2))];
    let mut sigma_dot = Vec::with_capacity(depth);
    let mut lambda = Vec::with_capacity(depth);
    for h in 1..=depth {
        let (sxx, syy) = sigma_diag[h - 1];
        let cov = Cov2::new(sxx, sigma[h - 1], syy);
        let cross = relu_dual(cov)?;
        let dxx = relu_dual(Cov2::new(sxx, sxx, sxx))?.pair;
        let dyy = relu_dual(Cov2::new(syy, syy, syy))?.pair;
        lambda.push(cov);
        sigma.push(cross.pair);
        sigma_dot.push(cross.dot_pair);
        sigma_diag.push((dxx, dyy));
    }
    let mut kernel = AnalyticKernel {
        sigma,
        sigma_diag,
        sigma_dot,
        lambda,
        theta_inf: 0.0,
    };
    kernel.theta_inf = kernel.layer_terms().iter().sum();
    Ok(kernel)
}

/// Limit of the pruned network's NTK: `α^L Θ_∞` without rescaling, `Θ_∞` with it.
pub fn pruned_limit(kernel: &AnalyticKernel, alpha: f64, rescaled: bool) -> f64 {
    debug_assert!(alpha > 0.0 && alpha <= 1.0);
    if rescaled {
        kernel.theta_inf
    } else {
        alpha.powi(kernel.depth() as i32) * kernel.theta_inf
    }
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn condition_of(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Ratio of largest to smallest singular value (infinite when singular).
pub fn condition_estimate(gram: &Array2<f64>) -> f64 {
    condition_of(&to_dmatrix(gram))
}

/// Cholesky factor and condition number, or the condition number if the
/// system is too ill-conditioned or not positive definite.
fn factor(m: DMatrix<f64>) -> std::result::Result<(Cholesky<f64, Dyn>, f64), f64> {
    let cond = condition_of(&m);
    if 1.0 / cond < MIN_RCOND {
        return Err(cond);
    }
    Cholesky::new(m).map(|c| (c, cond)).ok_or(cond)
}

/// Kernel interpolant `k(x)^T Θ(X,X)^{-1} y`, factored once for many queries.
#[derive(Debug, Clone)]
pub struct KernelRegressor {
    factor: Cholesky<f64, Dyn>,
    coef: DVector<f64>,
    /// Diagonal jitter actually applied (0 unless the plain system was singular).
    pub jitter_used: f64,
    pub condition: f64,
}

impl KernelRegressor {
    /// Factors `gram`. If it is singular or numerically indefinite and
    /// `jitter > 0`, `gram + jitter I` is used instead.
    pub fn fit(gram: &Array2<f64>, y: &[f64], jitter: f64) -> Result<Self> {
        let n = gram.nrows();
        if n == 0 {
            return Err(NtkError::Config("kernel regression needs at least one training point".into()));
        }
        check_len("gram columns", n, gram.ncols())?;
        check_len("regression targets", n, y.len())?;
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(NtkError::Config(format!("jitter must be finite and >= 0, got {jitter}")));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(NtkError::Domain(format!("non-finite target {v}")));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (gram[[i, j]], gram[[j, i]]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(NtkError::Precondition(format!(
                        "gram matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let plain = to_dmatrix(gram);
        let (chol, condition, jitter_used) = match factor(plain.clone()) {
            Ok((c, cond)) => (c, cond, 0.0),
            Err(condition) if jitter == 0.0 => return Err(NtkError::Singular { condition }),
            Err(_) => {
                let shifted = plain + DMatrix::identity(n, n) * jitter;
                match factor(shifted) {
                    Ok((c, cond)) => (c, cond, jitter),
                    Err(condition) => return Err(NtkError::Singular { condition }),
                }
            }
        };
        let coef = chol.solve(&DVector::from_column_slice(y));
        Ok(Self {
            factor: chol,
            coef,
            jitter_used,
            condition,
        })
    }

    pub fn predict(&self, kvec: &[f64]) -> Result<f64> {
        check_len("kernel vector", self.coef.len(), kvec.len())?;
        Ok(kvec.iter().zip(self.coef.iter()).map(|(k, c)| k * c).sum())
    }

    /// Solves `Θ(X,X) c = rhs` with the stored factor.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len("right-hand side", self.coef.len(), rhs.len())?;
        Ok(self.factor.solve(&DVector::from_column_slice(rhs)).iter().copied().collect())
    }
}

/// One-shot kernel regression prediction.
pub fn ntk_regress(gram: &Array2<f64>, kvec: &[f64], y: &[f64], jitter: f64) -> Result<f64> {
    KernelRegressor::fit(gram, y, jitter)?.predict(kvec)
}
