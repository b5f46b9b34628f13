//! Probability densities on Rⁿ and positive test functions relative to the
//! standard Gaussian.
//!
//! Three density representations are supported: a single Gaussian, a finite
//! Gaussian mixture, and a sampled grid field on a box (n ≤ 3). Analytic
//! families carry exact gradients; grid fields interpolate multilinearly and
//! differentiate by central finite differences with the grid spacing as step
//! (one-sided at box faces).
//!
//! [`RelativeFunction`] is the `f` of the Gaussian-measure inequalities: an
//! exponential witness exp(a·x + c), a grid field, or an arbitrary positive
//! evaluator with its gradient.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{SymMat, EIG_FLOOR};
use crate::special::std_normal_tail;

/// Maximum grid dimension.
pub const MAX_GRID_DIM: usize = 3;

/// Floor applied to values inside logarithms (never to the values themselves).
pub const LOG_FLOOR: f64 = 1e-300;

/// Half-width of the default discretization box, in per-axis standard
/// deviations. Tail mass beyond 8σ is below 1e-14, negligible against the
/// 1e-6 functional tolerances.
pub const DEFAULT_BOX_SIGMAS: f64 = 8.0;

/// Tail mass outside a discretization box above which the box is rejected.
pub const COVERAGE_LIMIT: f64 = 1e-8;

/// x·ln x with the 0·ln 0 := 0 convention.
#[inline]
pub fn xlogx(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

/// ln with the [`LOG_FLOOR`] clamp.
#[inline]
pub fn ln_floored(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

// ---------------------------------------------------------------------------
// Gaussian
// ---------------------------------------------------------------------------

/// An n-dimensional Gaussian with positive-definite covariance.
///
/// The inverse, symmetric square-root factor, eigenvalues, and normalization
/// are computed once at construction; the value is immutable afterwards.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    mean: Vec<f64>,
    cov: SymMat,
    inv: SymMat,
    sqrt_factor: SymMat,
    eigenvalues: Vec<f64>,
    log_norm: f64,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, cov_rows: &[Vec<f64>]) -> Result<Self> {
        let cov = SymMat::from_rows(cov_rows)?;
        Self::from_parts(mean, cov)
    }

    pub fn from_parts(mean: Vec<f64>, cov: SymMat) -> Result<Self> {
        let n = mean.len();
        if cov.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cov.dim(),
            });
        }
        let eigenvalues = cov.eigenvalues();
        if eigenvalues[0] <= EIG_FLOOR {
            return Err(Error::SingularCovariance {
                min_eigenvalue: eigenvalues[0],
            });
        }
        let inv = cov.inverse()?;
        let sqrt_factor = cov.sqrt()?;
        let log_det: f64 = eigenvalues.iter().map(|l| l.ln()).sum();
        let log_norm = -0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        Ok(GaussianSpec {
            mean,
            cov,
            inv,
            sqrt_factor,
            eigenvalues,
            log_norm,
        })
    }

    /// γ_n: the standard Gaussian (0, Identity).
    pub fn standard(n: usize) -> Self {
        Self::from_parts(vec![0.0; n], SymMat::identity(n)).expect("identity is PD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SymMat {
        &self.cov
    }

    pub fn cov_inv(&self) -> &SymMat {
        &self.inv
    }

    /// Symmetric K^{1/2}, used to push standard-Gaussian quadrature nodes
    /// onto this component.
    pub fn sqrt_factor(&self) -> &SymMat {
        &self.sqrt_factor
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.log_norm - 0.5 * self.inv.quad_form(&d)
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    /// ∇ log g = −K⁻¹(x − m).
    pub fn grad_log_pdf(&self, x: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.inv.matvec(&d).iter().map(|v| -v).collect()
    }

    /// H(X) = (n/2)·log(2πe) + ½·log|K|.
    pub fn entropy(&self) -> f64 {
        let n = self.dim() as f64;
        0.5 * n * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
            + 0.5 * self.eigenvalues.iter().map(|l| l.ln()).sum::<f64>()
    }
}

// ---------------------------------------------------------------------------
// Mixture
// ---------------------------------------------------------------------------

/// Finite Gaussian mixture with positive weights summing to one.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    weights: Vec<f64>,
    components: Vec<GaussianSpec>,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianSpec>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {sum}")));
        }
        let n = components[0].dim();
        if components.iter().any(|c| c.dim() != n) {
            return Err(Error::invalid("mixture components differ in dimension"));
        }
        Ok(MixtureSpec {
            weights,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianSpec] {
        &self.components
    }

    /// log Σ wᵢ φᵢ(x), evaluated by log-sum-exp so far tails stay finite.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w.ln() + c.log_pdf(x))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    /// ∇ log g as the posterior-weighted average of component scores.
    pub fn grad_log_pdf(&self, x: &[f64]) -> Vec<f64> {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w.ln() + c.log_pdf(x))
            .collect();
        let lse = log_sum_exp(&terms);
        let mut grad = vec![0.0; self.dim()];
        for (t, c) in terms.iter().zip(&self.components) {
            let post = (t - lse).exp();
            for (g, s) in grad.iter_mut().zip(c.grad_log_pdf(x)) {
                *g += post * s;
            }
        }
        grad
    }

    /// Mixture mean Σ wᵢ mᵢ.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for (mi, ci) in m.iter_mut().zip(c.mean()) {
                *mi += w * ci;
            }
        }
        m
    }

    /// Law of total covariance: Σ wᵢ (Kᵢ + mᵢmᵢᵀ) − m mᵀ.
    pub fn covariance(&self) -> SymMat {
        let n = self.dim();
        let m = self.mean();
        SymMat::from_fn(n, |i, j| {
            let mut acc = -m[i] * m[j];
            for (w, c) in self.weights.iter().zip(&self.components) {
                acc += w * (c.cov().get(i, j) + c.mean()[i] * c.mean()[j]);
            }
            acc
        })
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------------------
// Grid field
// ---------------------------------------------------------------------------

/// Non-negative samples on a uniform tensor grid over a box (n ≤ 3),
/// row-major with the last axis fastest.
///
/// Integration against the field is the tensor-product trapezoid rule, whose
/// weights sum exactly to the box volume; [`GridField::normalize`] rescales so
/// that integral is one.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    lo: Vec<f64>,
    hi: Vec<f64>,
    shape: Vec<usize>,
    values: Vec<f64>,
    spacing: Vec<f64>,
}

impl GridField {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n = lo.len();
        if n == 0 || n > MAX_GRID_DIM {
            return Err(Error::UnsupportedDimension {
                dim: n,
                max: MAX_GRID_DIM,
            });
        }
        if hi.len() != n || shape.len() != n {
            return Err(Error::invalid("grid lo/hi/shape lengths differ"));
        }
        for a in 0..n {
            if !(hi[a] > lo[a]) {
                return Err(Error::invalid(format!(
                    "grid box degenerate on axis {a}: [{}, {}]",
                    lo[a], hi[a]
                )));
            }
            if shape[a] < 8 {
                return Err(Error::invalid(format!(
                    "grid needs at least 8 points per axis, got {} on axis {a}",
                    shape[a]
                )));
            }
        }
        let count: usize = shape.iter().product();
        if values.len() != count {
            return Err(Error::invalid(format!(
                "grid shape {:?} wants {count} values, got {}",
                shape,
                values.len()
            )));
        }
        if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("grid values must be finite and ≥ 0"));
        }
        let spacing = (0..n)
            .map(|a| (hi[a] - lo[a]) / (shape[a] - 1) as f64)
            .collect();
        Ok(GridField {
            lo,
            hi,
            shape,
            values,
            spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordinates of the node with the given flat index.
    pub fn point_at(&self, mut flat: usize) -> Vec<f64> {
        let n = self.dim();
        let mut idx = vec![0usize; n];
        for a in (0..n).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        (0..n)
            .map(|a| self.lo[a] + idx[a] as f64 * self.spacing[a])
            .collect()
    }

    pub(crate) fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let n = self.dim();
        let mut idx = vec![0usize; n];
        for a in (0..n).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    pub(crate) fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for a in 0..self.dim() {
            flat = flat * self.shape[a] + idx[a];
        }
        flat
    }

    /// Trapezoid weight of a node: ∏ₐ hₐ·(½ at a face, 1 inside).
    pub fn trapezoid_weight(&self, flat: usize) -> f64 {
        let idx = self.multi_index(flat);
        let mut w = 1.0;
        for a in 0..self.dim() {
            let edge = idx[a] == 0 || idx[a] == self.shape[a] - 1;
            w *= self.spacing[a] * if edge { 0.5 } else { 1.0 };
        }
        w
    }

    /// ∫ t(node)·dλ over the box by the trapezoid rule.
    pub fn integrate_nodes(&self, t: impl Fn(usize, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.trapezoid_weight(i) * t(i, self.values[i]);
        }
        acc
    }

    pub fn trapezoid_integral(&self) -> f64 {
        self.integrate_nodes(|_, v| v)
    }

    /// Composite Simpson integral when every axis has an odd point count;
    /// falls back to per-axis trapezoid weights on even axes. Used only as a
    /// second route for error estimation.
    pub fn simpson_integral(&self) -> f64 {
        let n = self.dim();
        let axis_weight = |a: usize, i: usize| -> f64 {
            let m = self.shape[a];
            let h = self.spacing[a];
            if m % 2 == 1 {
                // Simpson pattern 1 4 2 4 ... 4 1, scaled by h/3
                let c = if i == 0 || i == m - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            } else {
                let c = if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
                c * h
            }
        };
        let mut acc = 0.0;
        for flat in 0..self.len() {
            let idx = self.multi_index(flat);
            let mut w = 1.0;
            for a in 0..n {
                w *= axis_weight(a, idx[a]);
            }
            acc += w * self.values[flat];
        }
        acc
    }

    /// Multilinear interpolation; errors outside the box.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0_f64; n];
        for a in 0..n {
            if x[a] < self.lo[a] - 1e-12 || x[a] > self.hi[a] + 1e-12 {
                return Err(Error::OutOfDomain {
                    axis: a,
                    value: x[a],
                    lo: self.lo[a],
                    hi: self.hi[a],
                });
            }
            let u = ((x[a] - self.lo[a]) / self.spacing[a])
                .max(0.0)
                .min((self.shape[a] - 1) as f64);
            let i = (u.floor() as usize).min(self.shape[a] - 2);
            base[a] = i;
            frac[a] = u - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = vec![0usize; n];
            for a in 0..n {
                if corner >> a & 1 == 1 {
                    idx[a] = base[a] + 1;
                    w *= frac[a];
                } else {
                    idx[a] = base[a];
                    w *= 1.0 - frac[a];
                }
            }
            acc += w * self.values[self.flat_index(&idx)];
        }
        Ok(acc)
    }

    /// Gradient of the interpolant by central differences with the grid
    /// spacing as step, one-sided within a step of a box face.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut grad = vec![0.0; n];
        for a in 0..n {
            let h = self.spacing[a];
            let mut fwd = x.to_vec();
            let mut bwd = x.to_vec();
            fwd[a] += h;
            bwd[a] -= h;
            grad[a] = if fwd[a] <= self.hi[a] && bwd[a] >= self.lo[a] {
                (self.interpolate(&fwd)? - self.interpolate(&bwd)?) / (2.0 * h)
            } else if fwd[a] > self.hi[a] {
                (self.interpolate(x)? - self.interpolate(&bwd)?) / h
            } else {
                (self.interpolate(&fwd)? - self.interpolate(x)?) / h
            };
        }
        Ok(grad)
    }

    /// Finite-difference gradient of `t(value)` at a grid node, central in
    /// the interior and one-sided at faces.
    pub(crate) fn node_gradient_of(&self, flat: usize, t: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.dim();
        let idx = self.multi_index(flat);
        let mut grad = vec![0.0; n];
        for a in 0..n {
            let h = self.spacing[a];
            let m = self.shape[a];
            let at = |i: usize| {
                let mut id = idx.clone();
                id[a] = i;
                t(self.values[self.flat_index(&id)])
            };
            grad[a] = if idx[a] == 0 {
                (at(1) - at(0)) / h
            } else if idx[a] == m - 1 {
                (at(m - 1) - at(m - 2)) / h
            } else {
                (at(idx[a] + 1) - at(idx[a] - 1)) / (2.0 * h)
            };
        }
        grad
    }

    /// Rescales so the trapezoid integral is exactly one.
    pub fn normalize(&self) -> Result<GridField> {
        let total = self.trapezoid_integral();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let mut out = self.clone();
        for v in &mut out.values {
            *v /= total;
        }
        Ok(out)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|a| x[a] >= self.lo[a] - 1e-12 && x[a] <= self.hi[a] + 1e-12)
    }
}

/// Samples a function on a uniform grid over the box.
pub fn sample_grid(
    lo: &[f64],
    hi: &[f64],
    shape: &[usize],
    f: impl Fn(&[f64]) -> f64,
) -> Result<GridField> {
    let count: usize = shape.iter().product();
    let mut probe = GridField::new(
        lo.to_vec(),
        hi.to_vec(),
        shape.to_vec(),
        vec![0.0; count],
    )?;
    let mut values = vec![0.0; count];
    for (i, v) in values.iter_mut().enumerate() {
        *v = f(&probe.point_at(i));
    }
    if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("sampled grid values must be finite and ≥ 0"));
    }
    probe.values = values;
    Ok(probe)
}

// ---------------------------------------------------------------------------
// Density
// ---------------------------------------------------------------------------

/// A probability density on Rⁿ in one of the three representations.
#[derive(Debug, Clone)]
pub enum Density {
    Gaussian(GaussianSpec),
    Mixture(MixtureSpec),
    Grid(GridField),
}

impl Density {
    pub fn dim(&self) -> usize {
        match self {
            Density::Gaussian(g) => g.dim(),
            Density::Mixture(m) => m.dim(),
            Density::Grid(g) => g.dim(),
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, Density::Grid(_))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Density value at a point (multilinear interpolation for grids).
    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            Density::Gaussian(g) => g.pdf(x),
            Density::Mixture(m) => m.pdf(x),
            Density::Grid(g) => g.interpolate(x)?,
        })
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            Density::Gaussian(g) => g.log_pdf(x),
            Density::Mixture(m) => m.log_pdf(x),
            Density::Grid(g) => ln_floored(g.interpolate(x)?),
        })
    }

    /// ∇g: analytic for Gaussian/mixture, finite differences for grids.
    pub fn grad_pdf(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(match self {
            Density::Gaussian(g) => {
                let v = g.pdf(x);
                g.grad_log_pdf(x).iter().map(|s| s * v).collect()
            }
            Density::Mixture(m) => {
                let v = m.pdf(x);
                m.grad_log_pdf(x).iter().map(|s| s * v).collect()
            }
            Density::Grid(g) => g.gradient(x)?,
        })
    }

    pub fn grad_log_pdf(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(match self {
            Density::Gaussian(g) => g.grad_log_pdf(x),
            Density::Mixture(m) => m.grad_log_pdf(x),
            Density::Grid(g) => {
                let v = g.interpolate(x)?.max(LOG_FLOOR);
                g.gradient(x)?.iter().map(|d| d / v).collect()
            }
        })
    }

    /// Per-axis standard deviations from the (closed-form) covariance, used
    /// for default box construction. Grid densities fall back to their box.
    pub fn axis_sigmas(&self) -> Option<Vec<f64>> {
        match self {
            Density::Gaussian(g) => {
                Some((0..g.dim()).map(|a| g.cov().get(a, a).sqrt()).collect())
            }
            Density::Mixture(m) => {
                let k = m.covariance();
                Some((0..m.dim()).map(|a| k.get(a, a).sqrt()).collect())
            }
            Density::Grid(_) => None,
        }
    }

    /// The default discretization box: mean ± 8σ per axis, widened across all
    /// mixture components; a grid density returns its own box.
    pub fn default_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Density::Gaussian(g) => {
                let n = g.dim();
                let mut lo = vec![0.0; n];
                let mut hi = vec![0.0; n];
                for a in 0..n {
                    let s = g.cov().get(a, a).sqrt();
                    lo[a] = g.mean()[a] - DEFAULT_BOX_SIGMAS * s;
                    hi[a] = g.mean()[a] + DEFAULT_BOX_SIGMAS * s;
                }
                (lo, hi)
            }
            Density::Mixture(m) => {
                let n = m.dim();
                let mut lo = vec![f64::INFINITY; n];
                let mut hi = vec![f64::NEG_INFINITY; n];
                for c in m.components() {
                    for a in 0..n {
                        let s = c.cov().get(a, a).sqrt();
                        lo[a] = lo[a].min(c.mean()[a] - DEFAULT_BOX_SIGMAS * s);
                        hi[a] = hi[a].max(c.mean()[a] + DEFAULT_BOX_SIGMAS * s);
                    }
                }
                (lo, hi)
            }
            Density::Grid(g) => (g.lo().to_vec(), g.hi().to_vec()),
        }
    }

    /// Conservative (union-bound) estimate of the mass outside an
    /// axis-aligned box, exact enough for the coverage gate.
    pub fn mass_outside_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let marginal_tail = |g: &GaussianSpec| -> f64 {
            let mut acc = 0.0;
            for a in 0..g.dim() {
                let s = g.cov().get(a, a).sqrt();
                acc += std_normal_tail((hi[a] - g.mean()[a]) / s);
                acc += std_normal_tail((g.mean()[a] - lo[a]) / s);
            }
            acc
        };
        match self {
            Density::Gaussian(g) => marginal_tail(g),
            Density::Mixture(m) => m
                .weights()
                .iter()
                .zip(m.components())
                .map(|(w, c)| w * marginal_tail(c))
                .sum(),
            Density::Grid(g) => {
                // trapezoid mass at nodes outside the target box
                g.integrate_nodes(|i, v| if contains_point(lo, hi, &g.point_at(i)) { 0.0 } else { v })
            }
        }
    }

    /// Pointwise samples of the density on a uniform grid over the box; the
    /// result is not yet normalized. Rejects boxes that miss more than
    /// [`COVERAGE_LIMIT`] of the mass.
    pub fn discretize(&self, lo: &[f64], hi: &[f64], shape: &[usize]) -> Result<GridField> {
        let outside = self.mass_outside_box(lo, hi);
        if outside > COVERAGE_LIMIT {
            return Err(Error::InsufficientCoverage {
                outside_mass: outside,
            });
        }
        let count: usize = shape.iter().product();
        let mut field = GridField::new(lo.to_vec(), hi.to_vec(), shape.to_vec(), vec![0.0; count])?;
        for i in 0..count {
            let x = field.point_at(i);
            let v = match self {
                Density::Grid(g) if !g.contains(&x) => 0.0,
                _ => self.pdf(&x)?,
            };
            field.values[i] = v;
        }
        Ok(field)
    }

    /// Discretizes on the default box at the given per-axis resolution and
    /// normalizes.
    pub fn discretize_default(&self, points_per_axis: usize) -> Result<GridField> {
        let (lo, hi) = self.default_box();
        let shape = vec![points_per_axis; self.dim()];
        self.discretize(&lo, &hi, &shape)?.normalize()
    }

    /// Short description used in report digests.
    pub fn digest(&self) -> String {
        match self {
            Density::Gaussian(g) => format!("gaussian(n={})", g.dim()),
            Density::Mixture(m) => {
                format!("mixture(n={}, k={})", m.dim(), m.components().len())
            }
            Density::Grid(g) => format!("grid(n={}, shape={:?})", g.dim(), g.shape()),
        }
    }
}

fn contains_point(lo: &[f64], hi: &[f64], x: &[f64]) -> bool {
    (0..x.len()).all(|a| x[a] >= lo[a] && x[a] <= hi[a])
}

// ---------------------------------------------------------------------------
// Relative functions
// ---------------------------------------------------------------------------

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// An arbitrary positive evaluator with its analytic gradient.
#[derive(Clone)]
pub struct CustomFunction {
    pub dim: usize,
    pub label: String,
    pub value: ScalarFn,
    /// log f, when the caller can supply it more stably than ln∘value.
    pub log_value: Option<ScalarFn>,
    pub gradient: VectorFn,
    /// ∇f/f, preferred over gradient/value where f underflows.
    pub grad_log: Option<VectorFn>,
    /// Box on which the induced pdf f·dγ effectively lives; used by
    /// [`relative_to_pdf`] to place its grid.
    pub suggested_box: Option<(Vec<f64>, Vec<f64>)>,
}

impl std::fmt::Debug for CustomFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CustomFunction")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .finish()
    }
}

/// A positive function on Rⁿ interpreted relative to the standard Gaussian.
#[derive(Debug, Clone)]
pub enum RelativeFunction {
    /// exp(a·x + c), the saturation witness of both Sobolev forms.
    Exp { slope: Vec<f64>, offset: f64 },
    Grid(GridField),
    Custom(CustomFunction),
}

impl RelativeFunction {
    pub fn exp_witness(slope: Vec<f64>) -> Self {
        RelativeFunction::Exp {
            slope,
            offset: 0.0,
        }
    }

    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::NonPositiveValue {
                value: c,
                at: None,
            });
        }
        Ok(RelativeFunction::Exp {
            slope: vec![0.0; dim],
            offset: c.ln(),
        })
    }

    /// Wraps closures for value and gradient.
    pub fn custom(
        dim: usize,
        label: impl Into<String>,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        RelativeFunction::Custom(CustomFunction {
            dim,
            label: label.into(),
            value: Arc::new(value),
            log_value: None,
            gradient: Arc::new(gradient),
            grad_log: None,
            suggested_box: None,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            RelativeFunction::Exp { slope, .. } => slope.len(),
            RelativeFunction::Grid(g) => g.dim(),
            RelativeFunction::Custom(c) => c.dim,
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        match self {
            RelativeFunction::Exp { slope, offset } => {
                Ok((dot(slope, x) + offset).exp())
            }
            RelativeFunction::Grid(g) => g.interpolate(x),
            RelativeFunction::Custom(c) => Ok((c.value)(x)),
        }
    }

    pub fn log_value(&self, x: &[f64]) -> Result<f64> {
        match self {
            RelativeFunction::Exp { slope, offset } => Ok(dot(slope, x) + offset),
            RelativeFunction::Grid(g) => Ok(ln_floored(g.interpolate(x)?)),
            RelativeFunction::Custom(c) => match &c.log_value {
                Some(lv) => Ok(lv(x)),
                None => Ok(ln_floored((c.value)(x))),
            },
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            RelativeFunction::Exp { slope, offset } => {
                let v = (dot(slope, x) + offset).exp();
                Ok(slope.iter().map(|a| a * v).collect())
            }
            RelativeFunction::Grid(g) => g.gradient(x),
            RelativeFunction::Custom(c) => Ok((c.gradient)(x)),
        }
    }

    /// ∇f/f, computed without forming f where a stable form is available.
    pub fn grad_log(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            RelativeFunction::Exp { slope, .. } => Ok(slope.clone()),
            RelativeFunction::Grid(g) => {
                let v = g.interpolate(x)?.max(LOG_FLOOR);
                Ok(g.gradient(x)?.iter().map(|d| d / v).collect())
            }
            RelativeFunction::Custom(c) => match &c.grad_log {
                Some(gl) => Ok(gl(x)),
                None => {
                    let v = (c.value)(x).max(LOG_FLOOR);
                    Ok((c.gradient)(x).iter().map(|d| d / v).collect())
                }
            },
        }
    }

    /// The Dirichlet integrand |∇f|²/f = |∇log f|²·f, assembled from the
    /// stable pieces.
    pub fn dirichlet(&self, x: &[f64]) -> Result<f64> {
        let gl = self.grad_log(x)?;
        let v = self.value(x)?;
        Ok(gl.iter().map(|d| d * d).sum::<f64>() * v)
    }

    /// Whether the point is inside the evaluation domain (always, except for
    /// grid fields and their box).
    pub fn in_domain(&self, x: &[f64]) -> bool {
        match self {
            RelativeFunction::Grid(g) => g.contains(x),
            _ => true,
        }
    }

    /// A quadrature box the induced pdf is known to live on, when one is known.
    pub fn suggested_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            RelativeFunction::Exp { .. } => None,
            RelativeFunction::Grid(g) => Some((g.lo().to_vec(), g.hi().to_vec())),
            RelativeFunction::Custom(c) => c.suggested_box.clone(),
        }
    }

    pub fn digest(&self) -> String {
        match self {
            RelativeFunction::Exp { slope, offset } => {
                format!("exp(a·x+c), a={slope:?}, c={offset}")
            }
            RelativeFunction::Grid(g) => format!("grid(n={}, shape={:?})", g.dim(), g.shape()),
            RelativeFunction::Custom(c) => c.label.clone(),
        }
    }

    /// Re-wraps an analytic witness as an opaque evaluator, forcing the
    /// quadrature path in checkers that would otherwise use closed forms.
    pub fn as_opaque(&self) -> RelativeFunction {
        match self {
            RelativeFunction::Exp { slope, offset } => {
                let (a, c) = (slope.clone(), *offset);
                let (a2, c2) = (slope.clone(), *offset);
                let (a3, _) = (slope.clone(), *offset);
                RelativeFunction::Custom(CustomFunction {
                    dim: a.len(),
                    label: format!("opaque exp, a={a:?}"),
                    value: Arc::new(move |x: &[f64]| (dot(&a, x) + c).exp()),
                    log_value: Some(Arc::new(move |x: &[f64]| dot(&a2, x) + c2)),
                    gradient: {
                        let a = slope.clone();
                        let c = *offset;
                        Arc::new(move |x: &[f64]| {
                            let v = (dot(&a, x) + c).exp();
                            a.iter().map(|ai| ai * v).collect()
                        })
                    },
                    grad_log: Some(Arc::new(move |_x: &[f64]| a3.clone())),
                    suggested_box: None,
                })
            }
            other => other.clone(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The pdf induced by a relative function: h = f·(2π)^{-n/2}·e^{-|x|²/2} / ∫f dγ.
///
/// Exponential witnesses map in closed form to a unit-covariance Gaussian at
/// mean a; other representations are sampled onto a grid and normalized. The
/// γ-integral of f is screened by the 64- vs 96-node Gauss–Hermite
/// convergence heuristic and rejected as divergent past 1e-6 relative
/// disagreement.
pub fn relative_to_pdf(f: &RelativeFunction) -> Result<Density> {
    crate::functionals::check_gamma_integrable(f)?;
    match f {
        RelativeFunction::Exp { slope, .. } => {
            // e^{a·x}·γ normalizes to N(a, I): complete the square.
            let n = slope.len();
            Ok(Density::Gaussian(GaussianSpec::from_parts(
                slope.clone(),
                SymMat::identity(n),
            )?))
        }
        RelativeFunction::Grid(g) => {
            let mut out = g.clone();
            for i in 0..out.len() {
                let x = out.point_at(i);
                let log_gamma = -0.5 * dot(&x, &x)
                    - 0.5 * (out.dim() as f64) * (2.0 * std::f64::consts::PI).ln();
                out.values[i] *= log_gamma.exp();
            }
            Ok(Density::Grid(out.normalize()?))
        }
        RelativeFunction::Custom(c) => {
            let n = c.dim;
            let (lo, hi) = c
                .suggested_box
                .clone()
                .unwrap_or_else(|| (vec![-12.0; n], vec![12.0; n]));
            let shape = vec![crate::functionals::default_grid_points(n); n];
            let field = sample_grid(&lo, &hi, &shape, |x| {
                let log_h = f.log_value(x).unwrap_or(f64::NEG_INFINITY)
                    - 0.5 * dot(x, x)
                    - 0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln();
                log_h.exp()
            })?;
            Ok(Density::Grid(field.normalize()?))
        }
    }
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

mod schema {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    pub struct GaussianJson {
        pub mean: Vec<f64>,
        pub cov: Vec<Vec<f64>>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "type", rename_all = "lowercase")]
    pub enum DensityJson {
        Gaussian {
            mean: Vec<f64>,
            cov: Vec<Vec<f64>>,
        },
        Mixture {
            weights: Vec<f64>,
            components: Vec<GaussianJson>,
        },
        Grid {
            lo: Vec<f64>,
            hi: Vec<f64>,
            shape: Vec<usize>,
            values: Vec<f64>,
        },
    }
}

use schema::{DensityJson, GaussianJson};

impl Density {
    pub fn to_json(&self) -> serde_json::Value {
        let dto = match self {
            Density::Gaussian(g) => DensityJson::Gaussian {
                mean: g.mean().to_vec(),
                cov: g.cov().rows(),
            },
            Density::Mixture(m) => DensityJson::Mixture {
                weights: m.weights().to_vec(),
                components: m
                    .components()
                    .iter()
                    .map(|c| GaussianJson {
                        mean: c.mean().to_vec(),
                        cov: c.cov().rows(),
                    })
                    .collect(),
            },
            Density::Grid(g) => DensityJson::Grid {
                lo: g.lo().to_vec(),
                hi: g.hi().to_vec(),
                shape: g.shape().to_vec(),
                values: g.values().to_vec(),
            },
        };
        serde_json::to_value(dto).expect("density DTO serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Density> {
        let dto: DensityJson = serde_json::from_value(value.clone())?;
        match dto {
            DensityJson::Gaussian { mean, cov } => {
                Ok(Density::Gaussian(GaussianSpec::new(mean, &cov)?))
            }
            DensityJson::Mixture {
                weights,
                components,
            } => {
                let comps = components
                    .into_iter()
                    .map(|c| GaussianSpec::new(c.mean, &c.cov))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Density::Mixture(MixtureSpec::new(weights, comps)?))
            }
            DensityJson::Grid {
                lo,
                hi,
                shape,
                values,
            } => Ok(Density::Grid(GridField::new(lo, hi, shape, values)?)),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Density> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        Density::from_json(&value)
    }
}
