//! One checker per inequality in the Gaussian chain. Every checker returns an
//! [`InequalityReport`] carrying both sides, the slack rhs − lhs, a verdict,
//! and the tolerance that produced it, so downstream equivalence tests can
//! compare transformed quantities rather than bare booleans.
//!
//! Tolerance policy: `tol = tol_floor + 10 × estimated_error`, where the
//! estimate is the disagreement of the fully composed sides between the two
//! quadrature routes. A checker therefore never reports a false violation
//! merely because quadrature noise exceeded a fixed cutoff.
//!
//! Conventions: slack ≥ 0 means satisfied, uniformly. Where the literature
//! states a constant lower bound (N·J ≥ n, N·|J_m|^{1/n} ≥ 1) the constant is
//! placed on the lhs so the convention holds.

use serde::{Deserialize, Serialize};

use crate::density::{Density, RelativeFunction};
use crate::error::{Error, Result};
use crate::functionals::{
    covariance_route, fisher_matrix_route, gamma_moments, shannon_entropy_route, Route,
    DEFAULT_GH_POINTS,
};

/// Baseline tolerance added to every verdict.
pub const TOL_FLOOR: f64 = 1e-7;

/// Multiplier on the two-route error estimate.
pub const TOL_ERROR_MULT: f64 = 10.0;

const LOG_2PI: f64 = 1.8378770664093453;
const LOG_2PIE: f64 = 2.8378770664093453;

/// The outcome of one checker run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// rhs − lhs; nonnegative when the inequality holds.
    pub slack: f64,
    /// slack ≥ −tol.
    pub satisfied: bool,
    pub tol: f64,
    pub estimated_error: f64,
    #[serde(rename = "inputs")]
    pub inputs_digest: String,
}

impl InequalityReport {
    pub fn new(
        name: &str,
        lhs: f64,
        rhs: f64,
        estimated_error: f64,
        tol: f64,
        inputs_digest: String,
    ) -> Self {
        let slack = rhs - lhs;
        InequalityReport {
            name: name.to_string(),
            lhs,
            rhs,
            slack,
            satisfied: slack >= -tol,
            tol,
            estimated_error,
            inputs_digest,
        }
    }
}

/// Knobs shared by all checkers.
#[derive(Debug, Clone)]
pub struct CheckOptions {
    /// Gauss–Hermite points per axis for quadrature-backed functionals.
    pub gh_points: usize,
    /// Use closed forms where available (Gaussian densities, exponential
    /// witnesses). Disable to force the pure quadrature path.
    pub use_closed_forms: bool,
    pub tol_floor: f64,
    /// Hard tolerance override; when set, the error-scaled policy is skipped.
    pub tol_override: Option<f64>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            gh_points: DEFAULT_GH_POINTS,
            use_closed_forms: true,
            tol_floor: TOL_FLOOR,
            tol_override: None,
        }
    }
}

impl CheckOptions {
    /// The pure quadrature configuration.
    pub fn quadrature_only() -> Self {
        CheckOptions {
            use_closed_forms: false,
            ..Default::default()
        }
    }

    fn tol(&self, estimated_error: f64) -> f64 {
        self.tol_override
            .unwrap_or(self.tol_floor + TOL_ERROR_MULT * estimated_error)
    }

    fn report(
        &self,
        name: &str,
        lhs: f64,
        rhs: f64,
        estimated_error: f64,
        inputs: String,
    ) -> InequalityReport {
        InequalityReport::new(
            name,
            lhs,
            rhs,
            estimated_error,
            self.tol(estimated_error),
            inputs,
        )
    }
}

/// Evaluates composed (lhs, rhs) along both quadrature routes and returns
/// them with the max-side disagreement as the error estimate.
fn two_route(mut sides: impl FnMut(Route) -> Result<(f64, f64)>) -> Result<(f64, f64, f64)> {
    let (lhs, rhs) = sides(Route::Primary)?;
    let (lhs_alt, rhs_alt) = sides(Route::Refined)?;
    let err = (lhs - lhs_alt).abs().max((rhs - rhs_alt).abs());
    Ok((lhs, rhs, err))
}

fn entropy_power_from(h: f64, n: f64) -> f64 {
    (2.0 * h / n).exp() / (2.0 * std::f64::consts::PI * std::f64::consts::E)
}

/// The saturation witness f(x) = exp(a·x).
pub fn exp_witness(a: &[f64]) -> RelativeFunction {
    RelativeFunction::exp_witness(a.to_vec())
}

/// Closed-form γ-moments of exp(a·x + c): mass e^{c+|a|²/2}, entropy
/// (|a|²/2)·mass, mean gradient a·mass, Dirichlet integral |a|²·mass.
fn exp_moments(slope: &[f64], offset: f64) -> (f64, f64, Vec<f64>, f64) {
    let s: f64 = slope.iter().map(|a| a * a).sum();
    let mass = (offset + 0.5 * s).exp();
    let entropy = 0.5 * s * mass;
    let grad: Vec<f64> = slope.iter().map(|a| a * mass).collect();
    let dirichlet = s * mass;
    (mass, entropy, grad, dirichlet)
}

/// Gross logarithmic Sobolev inequality: 2·Ent_γ(f) ≤ E_γ(|∇f|²/f).
pub fn check_lsi_gross(f: &RelativeFunction) -> Result<InequalityReport> {
    check_lsi_gross_opts(f, &CheckOptions::default())
}

pub fn check_lsi_gross_opts(f: &RelativeFunction, opts: &CheckOptions) -> Result<InequalityReport> {
    let (lhs, rhs, err) = match f {
        RelativeFunction::Exp { slope, offset } if opts.use_closed_forms => {
            let (_, ent, _, dirichlet) = exp_moments(slope, *offset);
            (2.0 * ent, dirichlet, 0.0)
        }
        _ => two_route(|route| {
            let m = gamma_moments(f, opts.gh_points, route)?;
            Ok((2.0 * m.entropy, m.dirichlet))
        })?,
    };
    Ok(opts.report("lsi_gross", lhs, rhs, err, f.digest()))
}

/// Reversed logarithmic Sobolev inequality: |E_γ∇f|²/E_γf ≤ 2·Ent_γ(f).
pub fn check_reversed_lsi(f: &RelativeFunction) -> Result<InequalityReport> {
    check_reversed_lsi_opts(f, &CheckOptions::default())
}

pub fn check_reversed_lsi_opts(
    f: &RelativeFunction,
    opts: &CheckOptions,
) -> Result<InequalityReport> {
    let (lhs, rhs, err) = match f {
        RelativeFunction::Exp { slope, offset } if opts.use_closed_forms => {
            let (mass, ent, grad, _) = exp_moments(slope, *offset);
            let sq: f64 = grad.iter().map(|g| g * g).sum();
            (sq / mass, 2.0 * ent, 0.0)
        }
        _ => two_route(|route| {
            let m = gamma_moments(f, opts.gh_points, route)?;
            let sq: f64 = m.grad.iter().map(|g| g * g).sum();
            Ok((sq / m.mass, 2.0 * m.entropy))
        })?,
    };
    Ok(opts.report("reversed_lsi", lhs, rhs, err, f.digest()))
}

/// Euclidean logarithmic Sobolev inequality:
/// Ent_λ(g) ≤ (n/2)·log[J(g)/(2πen)].
pub fn check_euclidean_lsi(g: &Density) -> Result<InequalityReport> {
    check_euclidean_lsi_opts(g, &CheckOptions::default())
}

pub fn check_euclidean_lsi_opts(g: &Density, opts: &CheckOptions) -> Result<InequalityReport> {
    let n = g.dim() as f64;
    let (lhs, rhs, err) = two_route(|route| {
        let h = shannon_entropy_route(g, opts.gh_points, route)?;
        let j = fisher_matrix_route(g, opts.gh_points, route)?.trace();
        Ok((
            -h,
            0.5 * n * (j / (2.0 * std::f64::consts::PI * std::f64::consts::E * n)).ln(),
        ))
    })?;
    Ok(opts.report("euclidean_lsi", lhs, rhs, err, g.digest()))
}

/// Entropy power × Fisher information: N(X)·J(X) ≥ n, reported as
/// lhs = n, rhs = N·J so that slack ≥ 0 means satisfied.
pub fn check_nj(g: &Density) -> Result<InequalityReport> {
    check_nj_opts(g, &CheckOptions::default())
}

pub fn check_nj_opts(g: &Density, opts: &CheckOptions) -> Result<InequalityReport> {
    let n = g.dim() as f64;
    let (lhs, rhs, err) = two_route(|route| {
        let h = shannon_entropy_route(g, opts.gh_points, route)?;
        let j = fisher_matrix_route(g, opts.gh_points, route)?.trace();
        Ok((n, entropy_power_from(h, n) * j))
    })?;
    Ok(opts.report("nj", lhs, rhs, err, g.digest()))
}

/// Matrix form: N(X)·|J_m(X)|^{1/n} ≥ 1, reported as lhs = 1.
pub fn check_njj(g: &Density) -> Result<InequalityReport> {
    check_njj_opts(g, &CheckOptions::default())
}

pub fn check_njj_opts(g: &Density, opts: &CheckOptions) -> Result<InequalityReport> {
    let n = g.dim() as f64;
    let (lhs, rhs, err) = two_route(|route| {
        let h = shannon_entropy_route(g, opts.gh_points, route)?;
        let jm = fisher_matrix_route(g, opts.gh_points, route)?;
        let det_root = jm.log_det().map(|ld| (ld / n).exp())?;
        Ok((1.0, entropy_power_from(h, n) * det_root))
    })?;
    Ok(opts.report("njj", lhs, rhs, err, g.digest()))
}

/// Entropy power against the covariance trace: N(X) ≤ Tr K/n.
pub fn check_entropy_trace(g: &Density) -> Result<InequalityReport> {
    check_entropy_trace_opts(g, &CheckOptions::default())
}

pub fn check_entropy_trace_opts(g: &Density, opts: &CheckOptions) -> Result<InequalityReport> {
    let n = g.dim() as f64;
    let (lhs, rhs, err) = two_route(|route| {
        let h = shannon_entropy_route(g, opts.gh_points, route)?;
        let k = covariance_route(g, route)?;
        Ok((entropy_power_from(h, n), k.trace() / n))
    })?;
    Ok(opts.report("entropy_trace", lhs, rhs, err, g.digest()))
}

/// Reversed Euclidean logarithmic Sobolev form:
/// H(g) ≤ (n/2)·log[2πe·Tr K/n]. The same content as
/// [`check_entropy_trace`] before exponentiation, kept as its own checker so
/// the equivalence machinery can compare the two transcriptions.
pub fn check_reversed_euclidean(g: &Density) -> Result<InequalityReport> {
    check_reversed_euclidean_opts(g, &CheckOptions::default())
}

pub fn check_reversed_euclidean_opts(
    g: &Density,
    opts: &CheckOptions,
) -> Result<InequalityReport> {
    let n = g.dim() as f64;
    let (lhs, rhs, err) = two_route(|route| {
        let h = shannon_entropy_route(g, opts.gh_points, route)?;
        let k = covariance_route(g, route)?;
        Ok((h, 0.5 * n * (LOG_2PIE + (k.trace() / n).ln())))
    })?;
    Ok(opts.report("reversed_euclidean", lhs, rhs, err, g.digest()))
}

/// Maximum-entropy bound at fixed covariance: N(X) ≤ |K|^{1/n}.
pub fn check_max_entropy_det(g: &Density) -> Result<InequalityReport> {
    check_max_entropy_det_opts(g, &CheckOptions::default())
}

pub fn check_max_entropy_det_opts(g: &Density, opts: &CheckOptions) -> Result<InequalityReport> {
    let n = g.dim() as f64;
    let (lhs, rhs, err) = two_route(|route| {
        let h = shannon_entropy_route(g, opts.gh_points, route)?;
        let k = covariance_route(g, route)?;
        let det_root = k.log_det().map(|ld| (ld / n).exp())?;
        Ok((entropy_power_from(h, n), det_root))
    })?;
    Ok(opts.report("max_entropy_det", lhs, rhs, err, g.digest()))
}

/// Arithmetic–geometric mean inequality on a list of positive reals.
pub fn check_amgm(values: &[f64]) -> Result<InequalityReport> {
    check_amgm_opts(values, &CheckOptions::default())
}

pub fn check_amgm_opts(values: &[f64], opts: &CheckOptions) -> Result<InequalityReport> {
    if values.is_empty() {
        return Err(Error::invalid("empty value list"));
    }
    for &v in values {
        if v <= 0.0 {
            return Err(Error::NonPositiveInput { value: v });
        }
    }
    let n = values.len() as f64;
    let geometric = (values.iter().map(|v| v.ln()).sum::<f64>() / n).exp();
    let arithmetic = values.iter().sum::<f64>() / n;
    Ok(opts.report(
        "amgm",
        geometric,
        arithmetic,
        0.0,
        format!("{} values", values.len()),
    ))
}

/// Intermediate (pre-optimization) change-of-function bound:
/// H(h) ≤ ½·Tr K(h) + (n/2)·log 2π. The α-scaling pipeline in `transforms`
/// sharpens it into the reversed Euclidean form.
pub fn check_intermediate_bound(g: &Density, opts: &CheckOptions) -> Result<InequalityReport> {
    let n = g.dim() as f64;
    let (lhs, rhs, err) = two_route(|route| {
        let h = shannon_entropy_route(g, opts.gh_points, route)?;
        let k = covariance_route(g, route)?;
        Ok((h, 0.5 * k.trace() + 0.5 * n * LOG_2PI))
    })?;
    Ok(opts.report("intermediate_bound", lhs, rhs, err, g.digest()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GaussianSpec;
    use crate::density::MixtureSpec;

    const SQRT_E: f64 = 1.6487212707001282;

    #[test]
    fn constant_witness_saturates_both_sobolev_forms() {
        let f = RelativeFunction::constant(1, 1.0).unwrap();
        let lsi = check_lsi_gross(&f).unwrap();
        assert_eq!(lsi.lhs, 0.0);
        assert_eq!(lsi.rhs, 0.0);
        assert!(lsi.satisfied);
        let rev = check_reversed_lsi(&f).unwrap();
        assert_eq!(rev.lhs, 0.0);
        assert_eq!(rev.rhs, 0.0);
    }

    #[test]
    fn exp_witness_saturates_closed_form() {
        let f = exp_witness(&[1.0]);
        let lsi = check_lsi_gross(&f).unwrap();
        assert!((lsi.lhs - SQRT_E).abs() < 1e-12);
        assert_eq!(lsi.slack, 0.0);
        let rev = check_reversed_lsi(&f).unwrap();
        assert!((rev.rhs - SQRT_E).abs() < 1e-12);
        assert_eq!(rev.slack, 0.0);
    }

    #[test]
    fn exp_witness_saturates_quadrature_path() {
        let opts = CheckOptions::quadrature_only();
        for a in [0.5, 1.0, -1.5] {
            let f = exp_witness(&[a]).as_opaque();
            let lsi = check_lsi_gross_opts(&f, &opts).unwrap();
            assert!(
                lsi.slack.abs() <= 1e-8 * (1.0 + lsi.rhs.abs()),
                "a={a}: lsi slack {}",
                lsi.slack
            );
            let rev = check_reversed_lsi_opts(&f, &opts).unwrap();
            assert!(
                rev.slack.abs() <= 1e-8 * (1.0 + rev.rhs.abs()),
                "a={a}: reversed slack {}",
                rev.slack
            );
        }
    }

    #[test]
    fn sine_perturbation_is_strictly_inside_lsi() {
        // f = 1 + 0.5 sin(x) ≥ 0.5 > 0, not exponential: strict inequality
        let f = RelativeFunction::custom(
            1,
            "1 + 0.5 sin(x)",
            |x: &[f64]| 1.0 + 0.5 * x[0].sin(),
            |x: &[f64]| vec![0.5 * x[0].cos()],
        );
        let rep = check_lsi_gross(&f).unwrap();
        assert!(rep.slack > 1e-3, "slack {}", rep.slack);
        assert!(rep.satisfied);
    }

    #[test]
    fn even_function_kills_reversed_lhs() {
        // f = 1 + x²: E∇f = E[2x] = 0 by symmetry, rhs > 0
        let f = RelativeFunction::custom(
            1,
            "1 + x^2",
            |x: &[f64]| 1.0 + x[0] * x[0],
            |x: &[f64]| vec![2.0 * x[0]],
        );
        let rep = check_reversed_lsi(&f).unwrap();
        assert!(rep.lhs.abs() < 1e-12);
        assert!(rep.rhs > 0.1);
    }

    #[test]
    fn euclidean_lsi_is_equality_for_gaussians() {
        for var in [1.0, 4.0, 0.25] {
            let g = Density::Gaussian(GaussianSpec::new(vec![0.3], &[vec![var]]).unwrap());
            let rep = check_euclidean_lsi(&g).unwrap();
            assert!(
                rep.slack.abs() < 1e-10,
                "var {var}: lhs {} rhs {}",
                rep.lhs,
                rep.rhs
            );
        }
        let std = Density::Gaussian(GaussianSpec::standard(1));
        let rep = check_euclidean_lsi(&std).unwrap();
        assert!((rep.lhs - (-1.4189385332046727)).abs() < 1e-12);
    }

    #[test]
    fn euclidean_lsi_strict_for_separated_mixture() {
        let m = Density::Mixture(
            MixtureSpec::new(
                vec![0.5, 0.5],
                vec![
                    GaussianSpec::new(vec![2.0], &[vec![1.0]]).unwrap(),
                    GaussianSpec::new(vec![-2.0], &[vec![1.0]]).unwrap(),
                ],
            )
            .unwrap(),
        );
        let rep = check_euclidean_lsi(&m).unwrap();
        assert!(rep.slack > 1e-2, "slack {}", rep.slack);
    }

    #[test]
    fn anisotropic_gaussian_nj_gap() {
        let g = Density::Gaussian(
            GaussianSpec::new(vec![0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap(),
        );
        let nj = check_nj(&g).unwrap();
        assert!((nj.slack - 0.5).abs() < 1e-10, "nj slack {}", nj.slack);
        let njj = check_njj(&g).unwrap();
        assert!(njj.slack.abs() < 1e-10, "njj slack {}", njj.slack);
        let trace = check_entropy_trace(&g).unwrap();
        assert!((trace.slack - 0.5).abs() < 1e-10);
        let det = check_max_entropy_det(&g).unwrap();
        assert!(det.slack.abs() < 1e-10);
    }

    #[test]
    fn isotropic_gaussian_saturates_all_four() {
        let g = Density::Gaussian(GaussianSpec::standard(2));
        for rep in [
            check_nj(&g).unwrap(),
            check_njj(&g).unwrap(),
            check_entropy_trace(&g).unwrap(),
            check_max_entropy_det(&g).unwrap(),
            check_reversed_euclidean(&g).unwrap(),
        ] {
            assert!(rep.slack.abs() < 1e-8, "{}: slack {}", rep.name, rep.slack);
        }
    }

    #[test]
    fn amgm_examples() {
        let eq = check_amgm(&[1.0, 1.0, 1.0]).unwrap();
        assert!(eq.slack.abs() < 1e-14);
        let rep = check_amgm(&[1.0, 4.0]).unwrap();
        assert!((rep.lhs - 2.0).abs() < 1e-14);
        assert!((rep.rhs - 2.5).abs() < 1e-14);
        assert!(matches!(
            check_amgm(&[1.0, -2.0]),
            Err(Error::NonPositiveInput { .. })
        ));
    }

    #[test]
    fn report_invariants() {
        let rep = check_amgm(&[2.0, 3.0]).unwrap();
        assert_eq!(rep.satisfied, rep.slack >= -rep.tol);
        assert!(rep.tol > 0.0);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"inputs\""));
        let back: InequalityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn intermediate_bound_examples() {
        // equality at the standard Gaussian, strict off unit scale
        let std = Density::Gaussian(GaussianSpec::standard(1));
        let rep = check_intermediate_bound(&std, &CheckOptions::default()).unwrap();
        assert!(rep.slack.abs() < 1e-12);
        let wide = Density::Gaussian(GaussianSpec::new(vec![0.0], &[vec![4.0]]).unwrap());
        let rep = check_intermediate_bound(&wide, &CheckOptions::default()).unwrap();
        assert!((rep.lhs - 2.1120857137646178).abs() < 1e-10);
        assert!((rep.rhs - 2.9189385332046727).abs() < 1e-10);
        let narrow = Density::Gaussian(GaussianSpec::new(vec![0.0], &[vec![0.25]]).unwrap());
        let rep = check_intermediate_bound(&narrow, &CheckOptions::default()).unwrap();
        assert!((rep.lhs - 0.7257913526447274).abs() < 1e-8);
        assert!((rep.rhs - 1.0439385332046727).abs() < 1e-8);
        assert!(rep.slack > 0.0);
    }
}
