//! Quadrature engines and the information functionals: relative entropy,
//! Shannon entropy, entropy power, covariance, and Fisher information.
//!
//! Two quadrature families cover the lab. Expectations against the standard
//! Gaussian γₙ use tensor-product Gauss–Hermite rules in the probabilists'
//! normalization (weights sum to one); Lebesgue integrals over a grid box use
//! the tensor trapezoid rule (weights sum to the box volume). Every
//! quadrature-backed functional reports an `estimated_error`: the difference
//! against a second resolution (1.5× the Gauss–Hermite nodes, or Simpson
//! weights on the same grid).
//!
//! All entropies are in nats.

use std::collections::HashMap;
use std::sync::Arc;

use once_cell::sync::Lazy;
use std::sync::RwLock;

use crate::density::{ln_floored, xlogx, Density, GaussianSpec, GridField, RelativeFunction};
use crate::error::{Error, Result};
use crate::linalg::{sym_tridiag_eigen, SymMat};

/// Default Gauss–Hermite points per axis.
pub const DEFAULT_GH_POINTS: usize = 64;

/// Largest supported per-axis Gauss–Hermite count.
pub const MAX_GH_POINTS: usize = 256;

/// Largest dimension for tensor quadrature.
pub const MAX_QUAD_DIM: usize = 3;

/// Fisher integrand mask: nodes where g < MASK_REL · max g are excluded.
pub const FISHER_MASK_REL: f64 = 1e-12;

/// Mass the Fisher mask may remove before the input is declared degenerate.
pub const FISHER_MASK_MASS_LIMIT: f64 = 1e-6;

/// Default grid resolution per axis by dimension (indices 1..=3).
pub fn default_grid_points(dim: usize) -> usize {
    match dim {
        1 => 257,
        2 => 129,
        _ => 65,
    }
}

/// 1.5× refinement used for error estimates.
pub fn refined_gh_points(points: usize) -> usize {
    ((points * 3 + 1) / 2).clamp(points + 1, MAX_GH_POINTS)
}

/// The measure a rule integrates against.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureTag {
    /// Standard Gaussian γₙ; weights sum to 1.
    Gaussian,
    /// Lebesgue measure restricted to a box; weights sum to its volume.
    LebesgueBox { lo: Vec<f64>, hi: Vec<f64> },
}

/// Nodes and weights, flat storage with `dim` coordinates per node.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    points_per_axis: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    measure: MeasureTag,
    /// Grid shape for Lebesgue rules, enabling the Simpson re-weighting.
    grid_shape: Option<Vec<usize>>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn measure(&self) -> &MeasureTag {
        &self.measure
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.node(i), self.weights[i]))
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

static GH_CACHE: Lazy<RwLock<HashMap<(usize, usize), Arc<QuadratureRule>>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

/// One-dimensional Gauss–Hermite nodes/weights for ∫·dγ₁ by Golub–Welsch.
///
/// The probabilists' Hermite recurrence Heₖ₊₁ = x·Heₖ − k·Heₖ₋₁ gives a
/// Jacobi matrix with zero diagonal and off-diagonal √k; its eigenvalues are
/// the nodes and the squared first eigenvector components are the weights
/// (the measure has total mass one). Exact for polynomials of degree
/// ≤ 2m − 1.
fn gauss_hermite_1d(points: usize) -> (Vec<f64>, Vec<f64>) {
    if points == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let diag = vec![0.0; points];
    let off: Vec<f64> = (1..points).map(|k| (k as f64).sqrt()).collect();
    let (values, first) = sym_tridiag_eigen(&diag, &off);
    let mut pairs: Vec<(f64, f64)> = values
        .into_iter()
        .zip(first.into_iter().map(|z| z * z))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
    )
}

/// Tensor-product Gauss–Hermite rule for γₙ, cached by (points, dim).
pub fn gauss_hermite_rule(points_per_axis: usize, dim: usize) -> Result<Arc<QuadratureRule>> {
    if dim == 0 || dim > MAX_QUAD_DIM {
        return Err(Error::UnsupportedDimension {
            dim,
            max: MAX_QUAD_DIM,
        });
    }
    if points_per_axis < 2 || points_per_axis > MAX_GH_POINTS {
        return Err(Error::invalid(format!(
            "gauss-hermite points per axis must be in [2, {MAX_GH_POINTS}], got {points_per_axis}"
        )));
    }
    if let Some(rule) = GH_CACHE.read().unwrap().get(&(points_per_axis, dim)) {
        return Ok(rule.clone());
    }
    let (nodes_1d, weights_1d) = gauss_hermite_1d(points_per_axis);
    let count = points_per_axis.pow(dim as u32);
    let mut nodes = Vec::with_capacity(count * dim);
    let mut weights = Vec::with_capacity(count);
    for flat in 0..count {
        let mut rest = flat;
        let mut w = 1.0;
        let mut coords = [0.0; MAX_QUAD_DIM];
        for a in (0..dim).rev() {
            let i = rest % points_per_axis;
            rest /= points_per_axis;
            coords[a] = nodes_1d[i];
            w *= weights_1d[i];
        }
        nodes.extend_from_slice(&coords[..dim]);
        weights.push(w);
    }
    let rule = Arc::new(QuadratureRule {
        dim,
        points_per_axis,
        nodes,
        weights,
        measure: MeasureTag::Gaussian,
        grid_shape: None,
    });
    GH_CACHE
        .write()
        .unwrap()
        .insert((points_per_axis, dim), rule.clone());
    Ok(rule)
}

/// Trapezoid rule over a grid's own nodes (Lebesgue-on-box measure).
pub fn grid_rule(field: &GridField) -> QuadratureRule {
    let count = field.len();
    let dim = field.dim();
    let mut nodes = Vec::with_capacity(count * dim);
    let mut weights = Vec::with_capacity(count);
    for i in 0..count {
        nodes.extend_from_slice(&field.point_at(i));
        weights.push(field.trapezoid_weight(i));
    }
    QuadratureRule {
        dim,
        points_per_axis: field.shape().iter().copied().max().unwrap_or(0),
        nodes,
        weights,
        measure: MeasureTag::LebesgueBox {
            lo: field.lo().to_vec(),
            hi: field.hi().to_vec(),
        },
        grid_shape: Some(field.shape().to_vec()),
    }
}

/// Second-route rule used for error estimation: 1.5× nodes for Gauss–Hermite,
/// Simpson weights on the same nodes for grid rules.
fn refined_rule(rule: &QuadratureRule) -> Result<Option<Arc<QuadratureRule>>> {
    match &rule.measure {
        MeasureTag::Gaussian => {
            if rule.points_per_axis >= MAX_GH_POINTS {
                return Ok(None);
            }
            let refined = refined_gh_points(rule.points_per_axis);
            Ok(Some(gauss_hermite_rule(refined, rule.dim)?))
        }
        MeasureTag::LebesgueBox { lo, hi } => {
            let shape = match &rule.grid_shape {
                Some(s) => s.clone(),
                None => return Ok(None),
            };
            let dim = rule.dim;
            let spacing: Vec<f64> = (0..dim)
                .map(|a| (hi[a] - lo[a]) / (shape[a] - 1) as f64)
                .collect();
            let mut weights = Vec::with_capacity(rule.len());
            for i in 0..rule.len() {
                let mut rest = i;
                let mut idx = vec![0usize; dim];
                for a in (0..dim).rev() {
                    idx[a] = rest % shape[a];
                    rest /= shape[a];
                }
                weights.push(grid_alt_weight(&shape, &spacing, &idx));
            }
            Ok(Some(Arc::new(QuadratureRule {
                dim,
                points_per_axis: rule.points_per_axis,
                nodes: rule.nodes.clone(),
                weights,
                measure: rule.measure.clone(),
                grid_shape: rule.grid_shape.clone(),
            })))
        }
    }
}

/// A functional evaluation together with its two-resolution error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValue {
    pub value: f64,
    pub estimated_error: f64,
}

impl FunctionalValue {
    pub fn exact(value: f64) -> Self {
        FunctionalValue {
            value,
            estimated_error: 0.0,
        }
    }
}

/// Which of the two quadrature routes to evaluate. `Primary` is the requested
/// resolution (trapezoid weights on grids); `Refined` is the error-estimation
/// partner (1.5× Gauss–Hermite nodes, Simpson weights on grids). Checkers
/// evaluate composed quantities along both routes and report the difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Primary,
    Refined,
}

fn route_points(points: usize, route: Route) -> usize {
    match route {
        Route::Primary => points,
        Route::Refined => refined_gh_points(points),
    }
}

/// Per-node weight of the grid's second quadrature route: composite Simpson
/// on odd axes, trapezoid on even ones.
fn grid_alt_weight(shape: &[usize], spacing: &[f64], idx: &[usize]) -> f64 {
    let mut w = 1.0;
    for a in 0..shape.len() {
        let m = shape[a];
        let h = spacing[a];
        w *= if m % 2 == 1 {
            let c = if idx[a] == 0 || idx[a] == m - 1 {
                1.0
            } else if idx[a] % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        } else {
            let c = if idx[a] == 0 || idx[a] == m - 1 { 0.5 } else { 1.0 };
            c * h
        };
    }
    w
}

/// Node weight of a grid field along a route.
pub(crate) fn grid_route_weight(field: &GridField, i: usize, route: Route) -> f64 {
    match route {
        Route::Primary => field.trapezoid_weight(i),
        Route::Refined => {
            let idx = field.multi_index(i);
            grid_alt_weight(field.shape(), field.spacing(), &idx)
        }
    }
}

fn entropy_over_rule(f: &RelativeFunction, rule: &QuadratureRule) -> Result<f64> {
    let mut total = 0.0;
    let mut flog = 0.0;
    for (x, w) in rule.iter() {
        if !f.in_domain(x) {
            continue;
        }
        let v = f.value(x)?;
        if v < 0.0 {
            return Err(Error::NonPositiveValue {
                value: v,
                at: Some(format!("{x:?}")),
            });
        }
        total += w * v;
        flog += w * xlogx(v);
    }
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(flog - total * total.ln())
}

/// Ent_μ(f) = ∫f log f dμ − ∫f dμ · log ∫f dμ over the given rule, with the
/// 0·log 0 := 0 convention. Grid functions are truncated to their box: nodes
/// outside contribute nothing.
pub fn relative_entropy(f: &RelativeFunction, rule: &QuadratureRule) -> Result<FunctionalValue> {
    let value = entropy_over_rule(f, rule)?;
    let estimated_error = match refined_rule(rule)? {
        Some(fine) => (entropy_over_rule(f, &fine)? - value).abs(),
        None => 0.0,
    };
    Ok(FunctionalValue {
        value,
        estimated_error,
    })
}

/// Ent_γ(f) at the default resolution.
pub fn relative_entropy_gamma(f: &RelativeFunction, points: usize) -> Result<FunctionalValue> {
    let rule = gauss_hermite_rule(points, f.dim())?;
    relative_entropy(f, &rule)
}

/// E_γ f with error estimate.
pub fn expect_gamma(f: &RelativeFunction, points: usize) -> Result<FunctionalValue> {
    let eval = |rule: &QuadratureRule| -> Result<f64> {
        let mut acc = 0.0;
        for (x, w) in rule.iter() {
            if !f.in_domain(x) {
                continue;
            }
            acc += w * f.value(x)?;
        }
        Ok(acc)
    };
    let rule = gauss_hermite_rule(points, f.dim())?;
    let value = eval(&rule)?;
    let fine = gauss_hermite_rule(refined_gh_points(points), f.dim())?;
    Ok(FunctionalValue {
        value,
        estimated_error: (eval(&fine)? - value).abs(),
    })
}

/// E_γ ∇f with a max-component error estimate.
pub fn expect_grad_gamma(f: &RelativeFunction, points: usize) -> Result<(Vec<f64>, f64)> {
    let eval = |rule: &QuadratureRule| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; f.dim()];
        for (x, w) in rule.iter() {
            if !f.in_domain(x) {
                continue;
            }
            for (a, g) in acc.iter_mut().zip(f.gradient(x)?) {
                *a += w * g;
            }
        }
        Ok(acc)
    };
    let rule = gauss_hermite_rule(points, f.dim())?;
    let value = eval(&rule)?;
    let fine_rule = gauss_hermite_rule(refined_gh_points(points), f.dim())?;
    let fine = eval(&fine_rule)?;
    let err = value
        .iter()
        .zip(&fine)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok((value, err))
}

/// E_γ |∇f|²/f, the Dirichlet side of the logarithmic Sobolev inequality.
pub fn expect_dirichlet_gamma(f: &RelativeFunction, points: usize) -> Result<FunctionalValue> {
    let eval = |rule: &QuadratureRule| -> Result<f64> {
        let mut acc = 0.0;
        for (x, w) in rule.iter() {
            if !f.in_domain(x) {
                continue;
            }
            acc += w * f.dirichlet(x)?;
        }
        Ok(acc)
    };
    let rule = gauss_hermite_rule(points, f.dim())?;
    let value = eval(&rule)?;
    let fine_rule = gauss_hermite_rule(refined_gh_points(points), f.dim())?;
    let fine = eval(&fine_rule)?;
    Ok(FunctionalValue {
        value,
        estimated_error: (fine - value).abs(),
    })
}

/// Everything the Sobolev checkers need about f under γ, gathered in one
/// pass over the nodes: mass E_γf, entropy Ent_γ(f), mean gradient E_γ∇f, and
/// the Dirichlet integral E_γ|∇f|²/f.
#[derive(Debug, Clone)]
pub struct GammaMoments {
    pub mass: f64,
    pub entropy: f64,
    pub grad: Vec<f64>,
    pub dirichlet: f64,
}

pub fn gamma_moments(f: &RelativeFunction, points: usize, route: Route) -> Result<GammaMoments> {
    let rule = gauss_hermite_rule(route_points(points, route), f.dim())?;
    let mut mass = 0.0;
    let mut flogf = 0.0;
    let mut grad = vec![0.0; f.dim()];
    let mut dirichlet = 0.0;
    for (x, w) in rule.iter() {
        if !f.in_domain(x) {
            continue;
        }
        let v = f.value(x)?;
        if v < 0.0 {
            return Err(Error::NonPositiveValue {
                value: v,
                at: Some(format!("{x:?}")),
            });
        }
        let gl = f.grad_log(x)?;
        mass += w * v;
        flogf += w * xlogx(v);
        let mut sq = 0.0;
        for (a, s) in grad.iter_mut().zip(&gl) {
            *a += w * s * v;
            sq += s * s;
        }
        dirichlet += w * sq * v;
    }
    if mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(GammaMoments {
        mass,
        entropy: flogf - mass * mass.ln(),
        grad,
        dirichlet,
    })
}

/// Screens ∫f dγ with the 64/96-node heuristic; relative disagreement beyond
/// 1e-6 is treated as divergence.
pub fn check_gamma_integrable(f: &RelativeFunction) -> Result<()> {
    if matches!(f, RelativeFunction::Exp { .. }) {
        return Ok(()); // converges in closed form
    }
    let coarse = {
        let rule = gauss_hermite_rule(DEFAULT_GH_POINTS, f.dim())?;
        let mut acc = 0.0;
        for (x, w) in rule.iter() {
            if f.in_domain(x) {
                acc += w * f.value(x)?;
            }
        }
        acc
    };
    let fine = {
        let rule = gauss_hermite_rule(96, f.dim())?;
        let mut acc = 0.0;
        for (x, w) in rule.iter() {
            if f.in_domain(x) {
                acc += w * f.value(x)?;
            }
        }
        acc
    };
    let denom = fine.abs().max(1e-300);
    if ((coarse - fine) / denom).abs() > 1e-6 {
        return Err(Error::DivergentIntegral {
            detail: format!(
                "gauss-hermite 64 vs 96 nodes disagree: {coarse} vs {fine} on {}",
                f.digest()
            ),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Expectations under a density (per-component Gauss–Hermite for mixtures)
// ---------------------------------------------------------------------------

/// E_g[t(x)] for an analytic density by recentered Gauss–Hermite: each
/// component integrates t against itself through the affine map m + K^{1/2}y.
fn analytic_expectation(
    g: &Density,
    points: usize,
    mut t: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    let rule = gauss_hermite_rule(points, g.dim())?;
    let mut parts: Vec<(f64, &GaussianSpec)> = Vec::new();
    match g {
        Density::Gaussian(spec) => parts.push((1.0, spec)),
        Density::Mixture(m) => {
            for (w, c) in m.weights().iter().zip(m.components()) {
                parts.push((*w, c));
            }
        }
        Density::Grid(_) => {
            return Err(Error::UnsupportedRepresentation {
                detail: "analytic expectation on a grid density".into(),
            })
        }
    }
    let dim = g.dim();
    let mut acc = 0.0;
    let mut x = vec![0.0; dim];
    for (w, comp) in parts {
        let a = comp.sqrt_factor();
        let mean = comp.mean();
        for (y, wq) in rule.iter() {
            for i in 0..dim {
                x[i] = mean[i] + (0..dim).map(|j| a.get(i, j) * y[j]).sum::<f64>();
            }
            acc += w * wq * t(&x);
        }
    }
    Ok(acc)
}

/// H(X) along one route: closed form for Gaussians, recentered Gauss–Hermite
/// for mixtures, grid weights for grid densities.
pub fn shannon_entropy_route(g: &Density, points: usize, route: Route) -> Result<f64> {
    match g {
        Density::Gaussian(spec) => Ok(spec.entropy()),
        Density::Mixture(m) => {
            Ok(-analytic_expectation(g, route_points(points, route), |x| m.log_pdf(x))?)
        }
        Density::Grid(field) => {
            let mut acc = 0.0;
            for i in 0..field.len() {
                acc -= grid_route_weight(field, i, route) * xlogx(field.values()[i]);
            }
            Ok(acc)
        }
    }
}

/// H(X) = −∫g log g with the two-route error estimate.
pub fn shannon_entropy(g: &Density) -> Result<FunctionalValue> {
    shannon_entropy_at(g, DEFAULT_GH_POINTS)
}

pub fn shannon_entropy_at(g: &Density, points: usize) -> Result<FunctionalValue> {
    let value = shannon_entropy_route(g, points, Route::Primary)?;
    let alt = shannon_entropy_route(g, points, Route::Refined)?;
    Ok(FunctionalValue {
        value,
        estimated_error: (alt - value).abs(),
    })
}

/// N(X) = (2πe)^{-1} exp(2H/n).
pub fn entropy_power(g: &Density) -> Result<FunctionalValue> {
    entropy_power_at(g, DEFAULT_GH_POINTS)
}

pub fn entropy_power_at(g: &Density, points: usize) -> Result<FunctionalValue> {
    let h = shannon_entropy_at(g, points)?;
    Ok(entropy_power_of(h, g.dim()))
}

/// The exact map H ↦ N with first-order error propagation.
pub fn entropy_power_of(h: FunctionalValue, dim: usize) -> FunctionalValue {
    let n = dim as f64;
    let value = (2.0 * h.value / n).exp() / (2.0 * std::f64::consts::PI * std::f64::consts::E);
    FunctionalValue {
        value,
        estimated_error: value * (2.0 / n) * h.estimated_error,
    }
}

/// Covariance matrix: closed form for Gaussian/mixture, trapezoid moments for
/// grids.
pub fn covariance(g: &Density) -> Result<SymMat> {
    Ok(covariance_with_error(g)?.0)
}

/// Covariance along one route; closed forms are route-independent.
pub fn covariance_route(g: &Density, route: Route) -> Result<SymMat> {
    match g {
        Density::Gaussian(spec) => Ok(spec.cov().clone()),
        Density::Mixture(m) => Ok(m.covariance()),
        Density::Grid(field) => {
            let dim = field.dim();
            let mut mass = 0.0;
            let mut mean = vec![0.0; dim];
            for i in 0..field.len() {
                let w = grid_route_weight(field, i, route) * field.values()[i];
                mass += w;
                for (ma, xa) in mean.iter_mut().zip(field.point_at(i)) {
                    *ma += w * xa;
                }
            }
            if mass <= 0.0 {
                return Err(Error::ZeroMass);
            }
            for ma in &mut mean {
                *ma /= mass;
            }
            Ok(SymMat::from_fn(dim, |a, b| {
                let mut acc = 0.0;
                for i in 0..field.len() {
                    let w = grid_route_weight(field, i, route) * field.values()[i];
                    let x = field.point_at(i);
                    acc += w * (x[a] - mean[a]) * (x[b] - mean[b]);
                }
                acc / mass
            }))
        }
    }
}

pub fn covariance_with_error(g: &Density) -> Result<(SymMat, f64)> {
    let primary = covariance_route(g, Route::Primary)?;
    let err = if g.is_analytic() {
        0.0
    } else {
        let alt = covariance_route(g, Route::Refined)?;
        primary.max_abs_diff(&alt)
    };
    Ok((primary, err))
}

/// Fisher information matrix J_m(X) = ∫(∇log g)(∇log g)ᵀ g dx.
///
/// Gaussians use K⁻¹ exactly. Quadrature paths apply the tail mask: nodes
/// where g < 1e-12·max g are excluded, and if the excluded nodes carry more
/// than 1e-6 of the mass the input is rejected as [`Error::DegenerateSupport`]
/// instead of returning a polluted value.
pub fn fisher_matrix(g: &Density) -> Result<SymMat> {
    Ok(fisher_matrix_with_error(g, DEFAULT_GH_POINTS)?.0)
}

/// Fisher matrix along one route.
pub fn fisher_matrix_route(g: &Density, points: usize, route: Route) -> Result<SymMat> {
    match g {
        Density::Gaussian(spec) => Ok(spec.cov_inv().clone()),
        Density::Mixture(_) => mixture_fisher(g, route_points(points, route)),
        Density::Grid(field) => grid_fisher(field, GridFisherForm::GradLog, &|i| {
            grid_route_weight(field, i, route)
        }),
    }
}

pub fn fisher_matrix_with_error(g: &Density, points: usize) -> Result<(SymMat, f64)> {
    let primary = fisher_matrix_route(g, points, Route::Primary)?;
    let err = if matches!(g, Density::Gaussian(_)) {
        0.0
    } else {
        let alt = fisher_matrix_route(g, points, Route::Refined)?;
        primary.max_abs_diff(&alt)
    };
    Ok((primary, err))
}

fn mixture_fisher(g: &Density, points: usize) -> Result<SymMat> {
    let dim = g.dim();
    let mut parts: Vec<(f64, &GaussianSpec)> = Vec::new();
    match g {
        Density::Gaussian(spec) => parts.push((1.0, spec)),
        Density::Mixture(m) => {
            for (w, c) in m.weights().iter().zip(m.components()) {
                parts.push((*w, c));
            }
        }
        Density::Grid(_) => unreachable!("mixture_fisher is only called on analytic densities"),
    }
    let rule = gauss_hermite_rule(points, dim)?;
    // pass 1: max log-density over nodes, for the mask threshold
    let mut max_logpdf = f64::NEG_INFINITY;
    let mut x = vec![0.0; dim];
    for &(_, comp) in &parts {
        let afac = comp.sqrt_factor();
        let mean = comp.mean();
        for (y, _) in rule.iter() {
            for i in 0..dim {
                x[i] = mean[i] + (0..dim).map(|j| afac.get(i, j) * y[j]).sum::<f64>();
            }
            max_logpdf = max_logpdf.max(g.log_pdf(&x)?);
        }
    }
    let threshold = max_logpdf + FISHER_MASK_REL.ln();
    // pass 2: masked accumulation of the score outer product
    let mut acc = vec![0.0; dim * dim];
    let mut excluded_mass = 0.0;
    for &(w, comp) in &parts {
        let afac = comp.sqrt_factor();
        let mean = comp.mean();
        for (y, wq) in rule.iter() {
            for i in 0..dim {
                x[i] = mean[i] + (0..dim).map(|j| afac.get(i, j) * y[j]).sum::<f64>();
            }
            if g.log_pdf(&x)? < threshold {
                excluded_mass += w * wq;
                continue;
            }
            let s = g.grad_log_pdf(&x)?;
            for a in 0..dim {
                for b in 0..dim {
                    acc[a * dim + b] += w * wq * s[a] * s[b];
                }
            }
        }
    }
    if excluded_mass > FISHER_MASK_MASS_LIMIT {
        return Err(Error::DegenerateSupport {
            excluded_mass,
            limit: FISHER_MASK_MASS_LIMIT,
        });
    }
    Ok(SymMat::from_fn(dim, |a, b| {
        0.5 * (acc[a * dim + b] + acc[b * dim + a])
    }))
}

/// Which algebraic form the grid Fisher evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFisherForm {
    /// ∫ g·(∇log g)(∇log g)ᵀ (the primary path).
    GradLog,
    /// 4∫ (∇√g)(∇√g)ᵀ, algebraically equal; kept as an internal cross-check.
    SqrtForm,
}

fn grid_fisher(
    field: &GridField,
    form: GridFisherForm,
    weight: &dyn Fn(usize) -> f64,
) -> Result<SymMat> {
    let dim = field.dim();
    let vmax = field.max_value();
    if vmax <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let threshold = FISHER_MASK_REL * vmax;
    let mut acc = vec![0.0; dim * dim];
    let mut excluded_mass = 0.0;
    for i in 0..field.len() {
        let v = field.values()[i];
        let w = weight(i);
        if v < threshold {
            excluded_mass += w * v;
            continue;
        }
        match form {
            GridFisherForm::GradLog => {
                let s = field.node_gradient_of(i, ln_floored);
                for a in 0..dim {
                    for b in 0..dim {
                        acc[a * dim + b] += w * v * s[a] * s[b];
                    }
                }
            }
            GridFisherForm::SqrtForm => {
                let s = field.node_gradient_of(i, |v| v.max(0.0).sqrt());
                for a in 0..dim {
                    for b in 0..dim {
                        acc[a * dim + b] += 4.0 * w * s[a] * s[b];
                    }
                }
            }
        }
    }
    if excluded_mass > FISHER_MASK_MASS_LIMIT {
        return Err(Error::DegenerateSupport {
            excluded_mass,
            limit: FISHER_MASK_MASS_LIMIT,
        });
    }
    Ok(SymMat::from_fn(dim, |a, b| {
        0.5 * (acc[a * dim + b] + acc[b * dim + a])
    }))
}

/// The 4|∇√g|² route on a grid, exposed for the cross-check tests.
pub fn fisher_matrix_sqrt_form(field: &GridField) -> Result<SymMat> {
    grid_fisher(field, GridFisherForm::SqrtForm, &|i| {
        field.trapezoid_weight(i)
    })
}

/// Scalar Fisher information J(X) = Tr J_m(X).
pub fn fisher_scalar(g: &Density) -> Result<FunctionalValue> {
    fisher_scalar_at(g, DEFAULT_GH_POINTS)
}

pub fn fisher_scalar_at(g: &Density, points: usize) -> Result<FunctionalValue> {
    let (m, err) = fisher_matrix_with_error(g, points)?;
    Ok(FunctionalValue {
        value: m.trace(),
        estimated_error: err * g.dim() as f64,
    })
}

// ---------------------------------------------------------------------------
// Moments of relative functions against γ (for the change-of-function route)
// ---------------------------------------------------------------------------

/// E_γ[f·t(x)] for a scalar t, sharing the truncation convention.
pub fn expect_weighted_gamma(
    f: &RelativeFunction,
    points: usize,
    t: impl Fn(&[f64]) -> f64,
) -> Result<FunctionalValue> {
    let eval = |rule: &QuadratureRule| -> Result<f64> {
        let mut acc = 0.0;
        for (x, w) in rule.iter() {
            if !f.in_domain(x) {
                continue;
            }
            acc += w * f.value(x)? * t(x);
        }
        Ok(acc)
    };
    let rule = gauss_hermite_rule(points, f.dim())?;
    let value = eval(&rule)?;
    let fine_rule = gauss_hermite_rule(refined_gh_points(points), f.dim())?;
    let fine = eval(&fine_rule)?;
    Ok(FunctionalValue {
        value,
        estimated_error: (fine - value).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{sample_grid, MixtureSpec};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn two_point_rule_is_plus_minus_one() {
        let rule = gauss_hermite_rule(2, 1).unwrap();
        assert_close(rule.node(0)[0], -1.0, 1e-14);
        assert_close(rule.node(1)[0], 1.0, 1e-14);
        assert_close(rule.weight(0), 0.5, 1e-14);
        assert_close(rule.weight(1), 0.5, 1e-14);
    }

    #[test]
    fn gaussian_moments_are_exact() {
        // ∫x² dγ = 1 with 2 points, ∫x⁴ dγ = 3 with 3 points
        let rule = gauss_hermite_rule(2, 1).unwrap();
        let m2: f64 = rule.iter().map(|(x, w)| w * x[0] * x[0]).sum();
        assert_close(m2, 1.0, 1e-14);
        let rule = gauss_hermite_rule(3, 1).unwrap();
        let m4: f64 = rule.iter().map(|(x, w)| w * x[0].powi(4)).sum();
        assert_close(m4, 3.0, 1e-13);
    }

    #[test]
    fn high_moments_match_double_factorial() {
        // ∫x^{2k} dγ = (2k−1)!!
        let rule = gauss_hermite_rule(64, 1).unwrap();
        let mut expected = 1.0;
        for k in 1..=8 {
            expected *= (2 * k - 1) as f64;
            let m: f64 = rule.iter().map(|(x, w)| w * x[0].powi(2 * k as i32)).sum();
            assert!(
                ((m - expected) / expected).abs() < 1e-12,
                "moment {k}: {m} vs {expected}"
            );
        }
    }

    #[test]
    fn gamma_weights_sum_to_one() {
        for dim in 1..=3 {
            let rule = gauss_hermite_rule(8, dim).unwrap();
            assert_close(rule.weight_sum(), 1.0, 1e-12);
        }
    }

    #[test]
    fn grid_rule_weights_sum_to_box_volume() {
        let field = sample_grid(&[-1.0, 0.0], &[2.0, 1.0], &[33, 17], |_| 1.0).unwrap();
        let rule = grid_rule(&field);
        assert_close(rule.weight_sum(), 3.0, 1e-12);
    }

    #[test]
    fn relative_entropy_of_constant_vanishes() {
        let f = RelativeFunction::constant(1, 2.5).unwrap();
        let rule = gauss_hermite_rule(32, 1).unwrap();
        let e = relative_entropy(&f, &rule).unwrap();
        assert_close(e.value, 0.0, 1e-14);
    }

    #[test]
    fn relative_entropy_of_exp_witness() {
        // Ent_γ(e^{ax}) = (a²/2)·e^{a²/2}
        let cases = [(1.0, 0.8243606353500641), (2.0, 14.778112197861301)];
        for (a, want) in cases {
            let f = RelativeFunction::exp_witness(vec![a]);
            let e = relative_entropy_gamma(&f, 64).unwrap();
            assert!(
                ((e.value - want) / want).abs() < 1e-10,
                "a={a}: {} vs {want}",
                e.value
            );
        }
    }

    #[test]
    fn shannon_entropy_closed_forms() {
        let std1 = Density::Gaussian(GaussianSpec::standard(1));
        let h = shannon_entropy(&std1).unwrap();
        assert_close(h.value, 1.4189385332046727, 1e-14);
        let wide = Density::Gaussian(GaussianSpec::new(vec![0.0], &[vec![4.0]]).unwrap());
        let h = shannon_entropy(&wide).unwrap();
        assert_close(h.value, 1.4189385332046727 + 2.0_f64.ln(), 1e-14);
    }

    #[test]
    fn shannon_entropy_grid_cross_checks_closed_form() {
        let g = Density::Gaussian(GaussianSpec::new(vec![0.3], &[vec![1.7]]).unwrap());
        let want = shannon_entropy(&g).unwrap().value;
        let field = g.discretize_default(257).unwrap();
        let h = shannon_entropy(&Density::Grid(field)).unwrap();
        assert!((h.value - want).abs() < 1e-8, "{} vs {want}", h.value);
    }

    #[test]
    fn uniform_grid_entropy_is_zero() {
        let field = sample_grid(&[0.0], &[1.0], &[65], |_| 1.0)
            .unwrap()
            .normalize()
            .unwrap();
        let h = shannon_entropy(&Density::Grid(field)).unwrap();
        assert_close(h.value, 0.0, 1e-14);
    }

    #[test]
    fn entropy_power_examples() {
        let std2 = Density::Gaussian(GaussianSpec::standard(2));
        assert_close(entropy_power(&std2).unwrap().value, 1.0, 1e-14);
        let v9 = Density::Gaussian(GaussianSpec::new(vec![0.0], &[vec![9.0]]).unwrap());
        assert_close(entropy_power(&v9).unwrap().value, 9.0, 1e-12);
        let aniso = Density::Gaussian(
            GaussianSpec::new(vec![0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap(),
        );
        assert_close(entropy_power(&aniso).unwrap().value, 2.0, 1e-12);
    }

    #[test]
    fn covariance_of_symmetric_mixture() {
        // equal-weight means ±1, unit variance: total variance 1 + 1 = 2
        let m = MixtureSpec::new(
            vec![0.5, 0.5],
            vec![
                GaussianSpec::new(vec![1.0], &[vec![1.0]]).unwrap(),
                GaussianSpec::new(vec![-1.0], &[vec![1.0]]).unwrap(),
            ],
        )
        .unwrap();
        let k = covariance(&Density::Mixture(m)).unwrap();
        assert_close(k.get(0, 0), 2.0, 1e-14);
    }

    #[test]
    fn covariance_of_discretized_gaussian() {
        let g = Density::Gaussian(GaussianSpec::standard(1));
        let field = g.discretize_default(257).unwrap();
        let k = covariance(&Density::Grid(field)).unwrap();
        assert_close(k.get(0, 0), 1.0, 1e-6);
    }

    #[test]
    fn fisher_closed_forms() {
        let g = GaussianSpec::new(
            vec![0.5, -0.5],
            &[vec![2.0, 0.3], vec![0.3, 1.0]],
        )
        .unwrap();
        let j = fisher_matrix(&Density::Gaussian(g.clone())).unwrap();
        assert!(j.max_abs_diff(g.cov_inv()) < 1e-13);
        let std2 = Density::Gaussian(GaussianSpec::standard(2));
        assert!(fisher_matrix(&std2)
            .unwrap()
            .max_abs_diff(&SymMat::identity(2))
            < 1e-13);
        let v4 = Density::Gaussian(GaussianSpec::new(vec![0.0], &[vec![4.0]]).unwrap());
        assert_close(fisher_scalar(&v4).unwrap().value, 0.25, 1e-14);
        let prod = Density::Gaussian(
            GaussianSpec::new(vec![0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap(),
        );
        assert_close(fisher_scalar(&prod).unwrap().value, 1.25, 1e-14);
    }

    #[test]
    fn mixture_fisher_matches_grid_route() {
        let m = Density::Mixture(
            MixtureSpec::new(
                vec![0.6, 0.4],
                vec![
                    GaussianSpec::new(vec![0.8], &[vec![1.0]]).unwrap(),
                    GaussianSpec::new(vec![-0.8], &[vec![0.7]]).unwrap(),
                ],
            )
            .unwrap(),
        );
        let j_mix = fisher_scalar(&m).unwrap();
        let field = m.discretize_default(1025).unwrap();
        let j_grid = fisher_scalar(&Density::Grid(field)).unwrap();
        assert!(
            (j_mix.value - j_grid.value).abs() < 1e-3,
            "{} vs {}",
            j_mix.value,
            j_grid.value
        );
    }

    #[test]
    fn grid_fisher_two_forms_agree() {
        // log-form vs 4|∇√g|² on a fine grid
        for density in [
            Density::Gaussian(GaussianSpec::standard(1)),
            Density::Mixture(
                MixtureSpec::new(
                    vec![0.5, 0.5],
                    vec![
                        GaussianSpec::new(vec![0.7], &[vec![0.8]]).unwrap(),
                        GaussianSpec::new(vec![-0.7], &[vec![1.2]]).unwrap(),
                    ],
                )
                .unwrap(),
            ),
        ] {
            let field = density.discretize_default(1025).unwrap();
            let a = fisher_matrix(&Density::Grid(field.clone())).unwrap();
            let b = fisher_matrix_sqrt_form(&field).unwrap();
            assert!(
                a.max_abs_diff(&b) < 1e-4,
                "forms differ by {}",
                a.max_abs_diff(&b)
            );
        }
    }

    #[test]
    fn degenerate_support_is_detected() {
        // An un-normalized field whose spike pushes the mask threshold above
        // the bulk: the masked bulk carries O(1) mass, which must be rejected
        // rather than silently dropped.
        let mut values = vec![1.0; 65];
        values[32] = 1e20;
        let field = GridField::new(vec![0.0], vec![1.0], vec![65], values).unwrap();
        let err = fisher_matrix(&Density::Grid(field));
        assert!(matches!(err, Err(Error::DegenerateSupport { .. })));
    }

    #[test]
    fn nj_and_njj_saturate_for_gaussians() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let l1: f64 = rng.gen_range(0.25..4.0);
            let l2: f64 = rng.gen_range(0.25..4.0);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let (c, s) = (th.cos(), th.sin());
            let k = SymMat::from_fn(2, |i, j| {
                let r = [[c, -s], [s, c]];
                (0..2).map(|m| r[i][m] * [l1, l2][m] * r[j][m]).sum()
            });
            let g = Density::Gaussian(
                GaussianSpec::from_parts(vec![rng.gen_range(-2.0..2.0), 0.0], k).unwrap(),
            );
            let n = entropy_power(&g).unwrap().value;
            let jm = fisher_matrix(&g).unwrap();
            let j = jm.trace();
            assert!((n * j - 2.0).abs() < 1e-8 || n * j >= 2.0 - 1e-8);
            let det_j = jm.det();
            assert_close(n * det_j.powf(0.5), 1.0, 1e-8);
        }
    }
}
