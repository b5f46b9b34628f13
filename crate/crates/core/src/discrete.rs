//! The discrete proof route: the two-point inequality on {−1,+1}, its
//! optimal Bernoulli constant, entropy tensorization over product measures,
//! and the central-limit passage to the Gaussian reversed inequality.
//!
//! The two-point checker uses the direction c(p)·(f(+1)−f(−1))² ≤
//! Ent_β(f)·E_β(f) with c(p) = p²q²·(log q − log p)/(q − p): the Taylor
//! expansion at near-constant f gives Ent·E/Δ² → pq/2 and the brute-force
//! scan confirms c(p) as the infimum, so the constant multiplies Δ².

use std::sync::Arc;

use crate::density::RelativeFunction;
use crate::error::{Error, Result};
use crate::functionals::{gamma_moments, Route, DEFAULT_GH_POINTS};
use crate::inequalities::{CheckOptions, InequalityReport};

/// Largest cube dimension for the full-table representation.
pub const MAX_FULL_DIM: usize = 16;

/// Largest cube dimension for the sum-symmetric representation.
pub const MAX_SYM_DIM: usize = 20_000;

/// Bernoulli measure on {−1, +1} with P(+1) = p.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliMeasure {
    p: f64,
}

impl BernoulliMeasure {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::OutOfRange { value: p });
        }
        Ok(BernoulliMeasure { p })
    }

    /// The symmetric case p = ½, the one whose tensorized limit is sharp.
    pub fn symmetric() -> Self {
        BernoulliMeasure { p: 0.5 }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }
}

/// The three closed-form quantities of the two-point inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointSides {
    /// (f(+1) − f(−1))².
    pub delta_sq: f64,
    /// Ent_β(f).
    pub entropy: f64,
    /// E_β(f).
    pub mean: f64,
}

/// Exact Δ², Ent_β(f), E_β(f) for f = (f(+1), f(−1)) = (fp, fm) under
/// Bernoulli(p). The entropy uses Ent(f) = E[f·log(f/Ef)] with `ln_1p`
/// evaluation, which stays fully accurate as fp → fm where both the naive
/// difference and Δ² vanish quadratically.
pub fn two_point_sides(fp: f64, fm: f64, p: f64) -> Result<TwoPointSides> {
    if fp <= 0.0 {
        return Err(Error::NonPositiveValue {
            value: fp,
            at: Some("f(+1)".into()),
        });
    }
    if fm <= 0.0 {
        return Err(Error::NonPositiveValue {
            value: fm,
            at: Some("f(-1)".into()),
        });
    }
    let beta = BernoulliMeasure::new(p)?;
    let (p, q) = (beta.p(), beta.q());
    let d = fp - fm;
    let mean = p * fp + q * fm;
    // f/mean − 1 at the two points, computed without cancellation
    let u_plus = q * d / mean;
    let u_minus = -p * d / mean;
    let entropy =
        mean * (p * (1.0 + u_plus) * u_plus.ln_1p() + q * (1.0 + u_minus) * u_minus.ln_1p());
    Ok(TwoPointSides {
        delta_sq: d * d,
        entropy,
        mean,
    })
}

/// The full checker: c(p)·Δ² ≤ Ent_β(f)·E_β(f).
pub fn two_point_check(fp: f64, fm: f64, p: f64) -> Result<InequalityReport> {
    let sides = two_point_sides(fp, fm, p)?;
    let c = bernoulli_optimal_constant(p)?;
    let opts = CheckOptions::default();
    Ok(InequalityReport::new(
        "two_point",
        c * sides.delta_sq,
        sides.entropy * sides.mean,
        0.0,
        opts.tol_floor,
        format!("fp={fp}, fm={fm}, p={p}"),
    ))
}

/// The optimal constant c(p) = p²q²·(log q − log p)/(q − p), evaluated as
/// p²q²·2·atanh(u)/u with u = q − p so the removable singularity at p = ½
/// (where c = 1/8) is handled by the series.
pub fn bernoulli_optimal_constant(p: f64) -> Result<f64> {
    let beta = BernoulliMeasure::new(p)?;
    let (p, q) = (beta.p(), beta.q());
    let u = q - p;
    let slope = if u.abs() < 1e-4 {
        // atanh(u)/u = 1 + u²/3 + u⁴/5 + …
        1.0 + u * u / 3.0 + u.powi(4) / 5.0
    } else {
        u.atanh() / u
    };
    Ok(p * p * q * q * 2.0 * slope)
}

/// The brute-force counterpart of [`bernoulli_optimal_constant`].
#[derive(Debug, Clone, Copy)]
pub struct ScanResult {
    /// inf Ent·E/Δ² over the scanned family.
    pub constant: f64,
    /// The minimizing (f(+1), f(−1)) pair.
    pub argmin: (f64, f64),
}

/// Empirical optimal constant: the infimum of Ent_β(f)·E_β(f)/Δ² over a
/// log-spaced grid of (fp, fm) ∈ [1e-3, 1e3]², refined by golden-section
/// search in the ratio fp/fm (the objective is scale-invariant). This is the
/// independent oracle for the closed-form constant; the two must agree and
/// any disagreement is surfaced by the caller, not absorbed here.
pub fn scan_optimal_constant(p: f64, grid_size: usize) -> Result<ScanResult> {
    BernoulliMeasure::new(p)?;
    if grid_size < 8 {
        return Err(Error::invalid(format!(
            "scan grid must have at least 8 points per axis, got {grid_size}"
        )));
    }
    let lo = 1e-3_f64.ln();
    let hi = 1e3_f64.ln();
    let step = (hi - lo) / (grid_size - 1) as f64;
    let ratio_objective = |log_r: f64| -> f64 {
        let r = log_r.exp();
        match two_point_sides(r, 1.0, p) {
            Ok(s) if s.delta_sq > 0.0 => s.entropy * s.mean / s.delta_sq,
            _ => f64::INFINITY,
        }
    };
    let mut best = f64::INFINITY;
    let mut best_pair = (1.0, 1.0);
    for i in 0..grid_size {
        for j in 0..grid_size {
            if i == j {
                continue; // fp = fm has Δ = 0
            }
            let fp = (lo + i as f64 * step).exp();
            let fm = (lo + j as f64 * step).exp();
            let s = two_point_sides(fp, fm, p)?;
            let ratio = s.entropy * s.mean / s.delta_sq;
            if ratio < best {
                best = ratio;
                best_pair = (fp, fm);
            }
        }
    }
    // local refinement over the scale-invariant ratio around the grid argmin
    let center = (best_pair.0 / best_pair.1).ln();
    let mut a = center - 2.0 * step;
    let mut b = center + 2.0 * step;
    let phi = 0.618_033_988_749_894_8;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = ratio_objective(x1);
    let mut f2 = ratio_objective(x2);
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = ratio_objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = ratio_objective(x2);
        }
        if (b - a).abs() < 1e-10 {
            break;
        }
    }
    let refined = f1.min(f2);
    if refined < best {
        best = refined;
        let r = (0.5 * (a + b)).exp();
        best_pair = (r, 1.0);
    }
    Ok(ScanResult {
        constant: best,
        argmin: best_pair,
    })
}

// ---------------------------------------------------------------------------
// Cube functions
// ---------------------------------------------------------------------------

/// Value table of a positive function on {−1, +1}ⁿ.
#[derive(Debug, Clone)]
pub enum CubeRepr {
    /// 2ⁿ values; bit i of the index set means coordinate i equals +1.
    Full(Vec<f64>),
    /// n+1 values indexed by the number of +1 coordinates; requires a shared
    /// Bernoulli parameter across coordinates.
    SumSymmetric(Vec<f64>),
}

/// A positive function on the discrete cube under a product Bernoulli
/// measure with per-coordinate parameters.
#[derive(Debug, Clone)]
pub struct CubeFunction {
    n: usize,
    repr: CubeRepr,
    probs: Vec<f64>,
}

impl CubeFunction {
    pub fn full(n: usize, values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_FULL_DIM {
            return Err(Error::UnsupportedDimension {
                dim: n,
                max: MAX_FULL_DIM,
            });
        }
        if values.len() != 1 << n {
            return Err(Error::invalid(format!(
                "full table needs 2^{n} values, got {}",
                values.len()
            )));
        }
        if probs.len() != n {
            return Err(Error::invalid("one Bernoulli parameter per coordinate"));
        }
        for &p in &probs {
            BernoulliMeasure::new(p)?;
        }
        for &v in &values {
            if v <= 0.0 {
                return Err(Error::NonPositiveValue {
                    value: v,
                    at: None,
                });
            }
        }
        Ok(CubeFunction {
            n,
            repr: CubeRepr::Full(values),
            probs,
        })
    }

    pub fn sum_symmetric(n: usize, values: Vec<f64>, p: f64) -> Result<Self> {
        if n == 0 || n > MAX_SYM_DIM {
            return Err(Error::UnsupportedDimension {
                dim: n,
                max: MAX_SYM_DIM,
            });
        }
        if values.len() != n + 1 {
            return Err(Error::invalid(format!(
                "sum-symmetric form needs n+1 = {} values, got {}",
                n + 1,
                values.len()
            )));
        }
        BernoulliMeasure::new(p)?;
        for &v in &values {
            if v <= 0.0 {
                return Err(Error::NonPositiveValue {
                    value: v,
                    at: None,
                });
            }
        }
        Ok(CubeFunction {
            n,
            repr: CubeRepr::SumSymmetric(values),
            probs: vec![p; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn repr(&self) -> &CubeRepr {
        &self.repr
    }

    fn point_log_weight_full(&self, state: usize) -> f64 {
        let mut lw = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            lw += if state >> i & 1 == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            };
        }
        lw
    }

    /// E_μ(f).
    pub fn mean(&self) -> f64 {
        match &self.repr {
            CubeRepr::Full(values) => values
                .iter()
                .enumerate()
                .map(|(s, v)| self.point_log_weight_full(s).exp() * v)
                .sum(),
            CubeRepr::SumSymmetric(values) => {
                let lw = log_binomial_weights(self.n, self.probs[0]);
                values
                    .iter()
                    .zip(&lw)
                    .map(|(v, l)| l.exp() * v)
                    .sum()
            }
        }
    }

    /// Ent_μ(f) = E[f log f] − E[f]·log E[f].
    pub fn entropy(&self) -> f64 {
        let mean = self.mean();
        let flogf: f64 = match &self.repr {
            CubeRepr::Full(values) => values
                .iter()
                .enumerate()
                .map(|(s, v)| self.point_log_weight_full(s).exp() * v * v.ln())
                .sum(),
            CubeRepr::SumSymmetric(values) => {
                let lw = log_binomial_weights(self.n, self.probs[0]);
                values
                    .iter()
                    .zip(&lw)
                    .map(|(v, l)| l.exp() * v * v.ln())
                    .sum()
            }
        };
        flogf - mean * mean.ln()
    }

    /// Expands the sum-symmetric form into the full table (n ≤ 16), for the
    /// representation cross-check.
    pub fn to_full(&self) -> Result<CubeFunction> {
        match &self.repr {
            CubeRepr::Full(_) => Ok(self.clone()),
            CubeRepr::SumSymmetric(values) => {
                if self.n > MAX_FULL_DIM {
                    return Err(Error::UnsupportedDimension {
                        dim: self.n,
                        max: MAX_FULL_DIM,
                    });
                }
                let table: Vec<f64> = (0..1usize << self.n)
                    .map(|s| values[s.count_ones() as usize])
                    .collect();
                CubeFunction::full(self.n, table, self.probs.clone())
            }
        }
    }
}

/// log of the Binomial(n, p) weights C(n,k)·p^k·q^{n−k}, accumulated
/// iteratively so n = 20000 stays finite.
fn log_binomial_weights(n: usize, p: f64) -> Vec<f64> {
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut out = Vec::with_capacity(n + 1);
    let mut log_choose = 0.0;
    for k in 0..=n {
        out.push(log_choose + k as f64 * lp + (n - k) as f64 * lq);
        if k < n {
            log_choose += ((n - k) as f64 / (k + 1) as f64).ln();
        }
    }
    out
}

/// Entropy tensorization over the product measure:
/// Ent_μ(f) ≥ Σᵢ Ent_{μᵢ}(E_{μ_{−i}} f), with the marginals summed exactly.
/// Reported with lhs = the marginal sum, rhs = Ent_μ(f).
pub fn tensorization_check(f: &CubeFunction) -> Result<InequalityReport> {
    let values = match &f.repr {
        CubeRepr::Full(v) => v,
        CubeRepr::SumSymmetric(_) => {
            return tensorization_check(&f.to_full()?);
        }
    };
    let n = f.n;
    let rhs = f.entropy();
    let mut lhs = 0.0;
    for i in 0..n {
        // marginal g_i(x_i) = E over the other coordinates
        let mut g = [0.0_f64; 2]; // [x_i = −1, x_i = +1]
        for (state, v) in values.iter().enumerate() {
            let mut lw = 0.0;
            for (j, &pj) in f.probs.iter().enumerate() {
                if j == i {
                    continue;
                }
                lw += if state >> j & 1 == 1 {
                    pj.ln()
                } else {
                    (1.0 - pj).ln()
                };
            }
            g[(state >> i & 1) as usize] += lw.exp() * v;
        }
        let sides = two_point_sides(g[1], g[0], f.probs[i])?;
        lhs += sides.entropy;
    }
    Ok(InequalityReport::new(
        "tensorization",
        lhs,
        rhs,
        0.0,
        1e-12,
        format!("cube n={n}"),
    ))
}

// ---------------------------------------------------------------------------
// CLT passage
// ---------------------------------------------------------------------------

/// A smooth positive 1-D function with its analytic derivative, the seed of
/// the lifted cube family F_n(x) = f((x₁+…+x_n)/√n).
#[derive(Clone)]
pub struct SmoothFn1D {
    pub label: String,
    pub value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub deriv: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl SmoothFn1D {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        SmoothFn1D {
            label: label.into(),
            value: Arc::new(value),
            deriv: Arc::new(deriv),
        }
    }

    /// exp(x), the saturation witness.
    pub fn exp() -> Self {
        SmoothFn1D::new("exp", |s| s.exp(), |s| s.exp())
    }

    /// The constant 1.
    pub fn one() -> Self {
        SmoothFn1D::new("one", |_| 1.0, |_| 0.0)
    }

    /// 2 + sin(x), a bounded non-saturating probe.
    pub fn two_plus_sin() -> Self {
        SmoothFn1D::new("sin", |s| 2.0 + s.sin(), |s| s.cos())
    }

    fn as_relative(&self) -> RelativeFunction {
        let value = self.value.clone();
        let deriv = self.deriv.clone();
        RelativeFunction::custom(
            1,
            self.label.clone(),
            move |x: &[f64]| value(x[0]),
            move |x: &[f64]| vec![deriv(x[0])],
        )
    }
}

impl std::fmt::Debug for SmoothFn1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothFn1D").field("label", &self.label).finish()
    }
}

/// One row of the convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltRow {
    pub n: usize,
    /// Ent over β^{⊗n} of the lifted function F_n.
    pub discrete_ent: f64,
    /// Squared norm of the mean discrete gradient, Σᵢ (E[DᵢF_n])² with
    /// DᵢF = (F(σᵢ⁺x) − F(σᵢ⁻x))/2; converges to (E_γ f′)².
    pub discrete_grad_sq: f64,
    /// Ent_γ₁(f).
    pub gaussian_ent: f64,
    /// (E_γ₁ f′)².
    pub gaussian_grad_sq: f64,
    /// |discrete reversed-inequality deficit − Gaussian deficit|, with
    /// deficit = Ent·E − ½·(mean-gradient squared norm) in each world.
    pub deficit_gap: f64,
}

/// CSV with the canonical header.
pub fn clt_rows_to_csv(rows: &[CltRow]) -> String {
    let mut out =
        String::from("n,discrete_ent,discrete_grad_sq,gaussian_ent,gaussian_grad_sq,deficit_gap\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.n, r.discrete_ent, r.discrete_grad_sq, r.gaussian_ent, r.gaussian_grad_sq,
            r.deficit_gap
        ));
    }
    out
}

/// Builds F_n(x) = f((x₁+…+x_n)/√n) in the sum-symmetric representation for
/// each n and compares the discrete reversed-inequality data against the
/// Gaussian targets under the symmetric measure.
pub fn clt_pipeline(f: &SmoothFn1D, n_list: &[usize]) -> Result<Vec<CltRow>> {
    // Gaussian side once: Ent_γ(f), E_γf, E_γf′
    let rel = f.as_relative();
    let moments = gamma_moments(&rel, DEFAULT_GH_POINTS, Route::Primary)?;
    let gaussian_ent = moments.entropy;
    let gaussian_grad_sq = moments.grad[0] * moments.grad[0];
    let gaussian_deficit = gaussian_ent * moments.mass - 0.5 * gaussian_grad_sq;

    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 || n > MAX_SYM_DIM {
            return Err(Error::UnsupportedDimension {
                dim: n,
                max: MAX_SYM_DIM,
            });
        }
        let root = (n as f64).sqrt();
        let mut values = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let s = (2.0 * k as f64 - n as f64) / root;
            let v = (f.value)(s);
            if !(v > 0.0) {
                return Err(Error::NonPositiveSample { point: s, value: v });
            }
            values.push(v);
        }
        let cube = CubeFunction::sum_symmetric(n, values.clone(), 0.5)?;
        let discrete_ent = cube.entropy();
        let mass = cube.mean();
        // E[DᵢF_n] is coordinate-independent: condition on the other n−1
        // coordinates, whose +1 count is Binomial(n−1, ½).
        let lw = log_binomial_weights(n - 1, 0.5);
        let mut e_d1 = 0.0;
        for k in 0..n {
            e_d1 += lw[k].exp() * 0.5 * (values[k + 1] - values[k]);
        }
        let discrete_grad_sq = n as f64 * e_d1 * e_d1;
        let discrete_deficit = discrete_ent * mass - 0.5 * discrete_grad_sq;
        rows.push(CltRow {
            n,
            discrete_ent,
            discrete_grad_sq,
            gaussian_ent,
            gaussian_grad_sq,
            deficit_gap: (discrete_deficit - gaussian_deficit).abs(),
        });
    }
    Ok(rows)
}
