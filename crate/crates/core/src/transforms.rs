//! The constructive equivalence machinery connecting the four reversed-form
//! statements: whitening, the scaling family h_α = αⁿ·g(α·), the
//! Gaussian↔Euclidean change of function, α-optimization of the intermediate
//! bound, and the AM-GM spectral step.

use std::sync::Arc;

use crate::density::{
    relative_to_pdf, CustomFunction, Density, GaussianSpec, GridField, MixtureSpec,
    RelativeFunction,
};
use crate::error::{Error, Result};
use crate::functionals::{covariance_route, shannon_entropy_route, Route};
use crate::inequalities::{
    check_entropy_trace_opts, check_intermediate_bound, check_max_entropy_det_opts,
    check_reversed_euclidean_opts, check_reversed_lsi_opts, CheckOptions, InequalityReport,
};
use crate::linalg::SymMat;

const LOG_2PI: f64 = 1.8378770664093453;

/// The law of X/α for a base density g: h_α(x) = αⁿ·g(αx).
#[derive(Debug, Clone)]
pub struct ScalingFamily {
    pub base: Density,
    pub alpha: f64,
}

impl ScalingFamily {
    pub fn new(base: Density, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::NonPositiveInput { value: alpha });
        }
        Ok(ScalingFamily { base, alpha })
    }

    /// Materializes h_α as a density. Entropy drops by n·log α and the
    /// covariance scales by 1/α², exactly for analytic families.
    pub fn density(&self) -> Result<Density> {
        let a = self.alpha;
        match &self.base {
            Density::Gaussian(g) => {
                let mean: Vec<f64> = g.mean().iter().map(|m| m / a).collect();
                let cov = SymMat::from_fn(g.dim(), |i, j| g.cov().get(i, j) / (a * a));
                Ok(Density::Gaussian(GaussianSpec::from_parts(mean, cov)?))
            }
            Density::Mixture(m) => {
                let comps = m
                    .components()
                    .iter()
                    .map(|c| {
                        let mean: Vec<f64> = c.mean().iter().map(|v| v / a).collect();
                        let cov = SymMat::from_fn(c.dim(), |i, j| c.cov().get(i, j) / (a * a));
                        GaussianSpec::from_parts(mean, cov)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Density::Mixture(MixtureSpec::new(
                    m.weights().to_vec(),
                    comps,
                )?))
            }
            Density::Grid(g) => {
                let n = g.dim();
                let lo: Vec<f64> = g.lo().iter().map(|v| v / a).collect();
                let hi: Vec<f64> = g.hi().iter().map(|v| v / a).collect();
                let scale = a.powi(n as i32);
                let values: Vec<f64> = g.values().iter().map(|v| v * scale).collect();
                Ok(Density::Grid(GridField::new(
                    lo,
                    hi,
                    g.shape().to_vec(),
                    values,
                )?))
            }
        }
    }
}

/// The law of X/α.
pub fn scale_family(g: &Density, alpha: f64) -> Result<Density> {
    ScalingFamily::new(g.clone(), alpha)?.density()
}

/// The density of K^{-1/2}·X: exact means/covariances for analytic families.
/// Grid inputs are rejected; re-interpolation error would contaminate the
/// 1e-6 equivalence comparisons this op exists to serve.
pub fn whiten(g: &Density) -> Result<Density> {
    match g {
        Density::Gaussian(spec) => {
            let w = spec.cov().inv_sqrt()?;
            let mean = w.matvec(spec.mean());
            let cov = spec.cov().congruence(&w);
            Ok(Density::Gaussian(GaussianSpec::from_parts(mean, cov)?))
        }
        Density::Mixture(m) => {
            let total = m.covariance();
            let w = total.inv_sqrt()?;
            let comps = m
                .components()
                .iter()
                .map(|c| GaussianSpec::from_parts(w.matvec(c.mean()), c.cov().congruence(&w)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Density::Mixture(MixtureSpec::new(
                m.weights().to_vec(),
                comps,
            )?))
        }
        Density::Grid(_) => Err(Error::UnsupportedRepresentation {
            detail: "whitening a grid density would require re-interpolation".into(),
        }),
    }
}

/// f(x) = h(x)·(2π)^{n/2}·e^{|x|²/2}, so that f·dγₙ = h·dλₙ. Inverse of
/// [`relative_to_pdf`] up to normalization.
pub fn gauss_to_euclid_function(h: &Density) -> RelativeFunction {
    let n = h.dim();
    let shared = Arc::new(h.clone());
    let half_log_2pi_n = 0.5 * (n as f64) * LOG_2PI;
    let log_f = {
        let h = shared.clone();
        move |x: &[f64]| -> f64 {
            let lp = h.log_pdf(x).unwrap_or(f64::NEG_INFINITY);
            lp + 0.5 * x.iter().map(|v| v * v).sum::<f64>() + half_log_2pi_n
        }
    };
    let value = {
        let log_f = log_f.clone();
        move |x: &[f64]| log_f(x).exp()
    };
    let grad_log = {
        let h = shared.clone();
        move |x: &[f64]| -> Vec<f64> {
            match h.grad_log_pdf(x) {
                Ok(gl) => gl.iter().zip(x).map(|(s, xi)| s + xi).collect(),
                Err(_) => vec![0.0; x.len()],
            }
        }
    };
    let gradient = {
        let log_f = log_f.clone();
        let grad_log = grad_log.clone();
        move |x: &[f64]| -> Vec<f64> {
            let v = log_f(x).exp();
            grad_log(x).iter().map(|s| s * v).collect()
        }
    };
    RelativeFunction::Custom(CustomFunction {
        dim: n,
        label: format!("gauss_to_euclid({})", h.digest()),
        value: Arc::new(value),
        log_value: Some(Arc::new(log_f)),
        gradient: Arc::new(gradient),
        grad_log: Some(Arc::new(grad_log)),
        suggested_box: Some(h.default_box()),
    })
}

/// H(h) ≤ ½·Tr K(h) + (n/2)·log 2π, the bound before scale optimization.
pub fn intermediate_bound_check(h: &Density) -> Result<InequalityReport> {
    check_intermediate_bound(h, &CheckOptions::default())
}

/// The optimal scaling and the optimized bound value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalAlpha {
    /// α* = √(Tr K/n), the minimizer of ½·TrK/α² + n·log α.
    pub alpha: f64,
    /// The minimized bound (n/2)·log(2πe·TrK/n).
    pub bound: f64,
}

pub fn optimal_alpha(tr_k: f64, n: usize) -> Result<OptimalAlpha> {
    if !(tr_k > 0.0) {
        return Err(Error::NonPositiveTrace { value: tr_k });
    }
    let nf = n as f64;
    let alpha = (tr_k / nf).sqrt();
    let bound = 0.5 * nf * (1.0 + LOG_2PI + (tr_k / nf).ln());
    Ok(OptimalAlpha { alpha, bound })
}

/// The intermediate bound applied to h_α, mapped back to the unscaled
/// variables: B(α) = ½·TrK/α² + n·log α + (n/2)·log 2π ≥ H(h). Minimized at
/// α* = √(TrK/n); the grid-scan verification lives in tests.
pub fn scaled_bound(h: &Density, alpha: f64, opts: &CheckOptions) -> Result<f64> {
    let n = h.dim() as f64;
    let scaled = scale_family(h, alpha)?;
    let rep = check_intermediate_bound(&scaled, opts)?;
    Ok(rep.rhs + n * alpha.ln())
}

/// Derives the reversed Euclidean inequality constructively: scales h by α*,
/// applies the intermediate bound, and maps both sides back. On analytic
/// families the per-component quadrature is scale-equivariant, so the result
/// reproduces the direct checker to roundoff.
pub fn derive_reversed_euclidean(h: &Density) -> Result<InequalityReport> {
    derive_reversed_euclidean_opts(h, &CheckOptions::default())
}

pub fn derive_reversed_euclidean_opts(
    h: &Density,
    opts: &CheckOptions,
) -> Result<InequalityReport> {
    let n = h.dim() as f64;
    let mut sides = |route: Route| -> Result<(f64, f64)> {
        let tr_k = covariance_route(h, route)?.trace();
        let best = optimal_alpha(tr_k, h.dim())?;
        let scaled = scale_family(h, best.alpha)?;
        let lhs_scaled = shannon_entropy_route(&scaled, opts.gh_points, route)?;
        let rhs_scaled = 0.5 * covariance_route(&scaled, route)?.trace() + 0.5 * n * LOG_2PI;
        let shift = n * best.alpha.ln();
        Ok((lhs_scaled + shift, rhs_scaled + shift))
    };
    let (lhs, rhs) = sides(Route::Primary)?;
    let (lhs_alt, rhs_alt) = sides(Route::Refined)?;
    let err = (lhs - lhs_alt).abs().max((rhs - rhs_alt).abs());
    Ok(InequalityReport::new(
        "derived_reversed_euclidean",
        lhs,
        rhs,
        err,
        opts.tol_floor + crate::inequalities::TOL_ERROR_MULT * err,
        h.digest(),
    ))
}

/// Eigenvalue means of a PSD matrix: (|K|^{1/n}, Tr K/n).
pub fn amgm_reduce(k: &SymMat) -> (f64, f64) {
    let ev = k.eigenvalues();
    let n = ev.len() as f64;
    let geometric = (ev.iter().map(|l| l.max(0.0).ln()).sum::<f64>() / n).exp();
    let arithmetic = k.trace() / n;
    (geometric, arithmetic)
}

/// All four equivalent statements evaluated on one density, with the
/// transport identities that connect them checked numerically.
#[derive(Debug, Clone)]
pub struct EquivalenceBundle {
    /// (i): reversed LSI applied to f = g·(2π)^{n/2}e^{|x|²/2}.
    pub reversed_lsi_via_change: InequalityReport,
    /// (ii): H(g) ≤ (n/2)·log(2πe·TrK/n).
    pub reversed_euclidean: InequalityReport,
    /// (iii): N(g) ≤ Tr K/n.
    pub entropy_trace: InequalityReport,
    /// (iv): N(g) ≤ |K|^{1/n}.
    pub max_entropy_det: InequalityReport,
    /// (iii) applied to the whitened density.
    pub entropy_trace_whitened: InequalityReport,
    /// |N(whiten(g)) − N(g)/|K|^{1/n}|: entropy power under linear maps.
    pub whitening_transport_gap: f64,
    /// |slack(iii on whiten(g)) − slack(iv)/|K|^{1/n}|.
    pub whiten_det_slack_gap: f64,
    /// Slacks of (ii) and (iii) agree in sign (up to their tolerances).
    pub sign_consistent: bool,
    /// All transport identities hold within 1e-6.
    pub consistent: bool,
}

pub fn equivalence_roundtrip(g: &Density) -> Result<EquivalenceBundle> {
    equivalence_roundtrip_opts(g, &CheckOptions::default())
}

pub fn equivalence_roundtrip_opts(g: &Density, opts: &CheckOptions) -> Result<EquivalenceBundle> {
    let n = g.dim() as f64;
    let f = gauss_to_euclid_function(g);
    let reversed_lsi_via_change = check_reversed_lsi_opts(&f, opts)?;
    let reversed_euclidean = check_reversed_euclidean_opts(g, opts)?;
    let entropy_trace = check_entropy_trace_opts(g, opts)?;
    let max_entropy_det = check_max_entropy_det_opts(g, opts)?;

    let white = whiten(g)?;
    let entropy_trace_whitened = check_entropy_trace_opts(&white, opts)?;

    // N(whiten(g)) should be N(g)/|K|^{1/n}: whitening is the linear map
    // K^{-1/2}, which shifts H by −½·log|K|.
    let k = covariance_route(g, Route::Primary)?;
    let det_root = k.log_det().map(|ld| (ld / n).exp())?;
    let n_white = entropy_trace_whitened.lhs;
    let n_transported = entropy_trace.lhs / det_root;
    let whitening_transport_gap = (n_white - n_transported).abs();

    // slack(iii on whitened) = 1 − N(g)/|K|^{1/n} = slack(iv)/|K|^{1/n}
    let whiten_det_slack_gap =
        (entropy_trace_whitened.slack - max_entropy_det.slack / det_root).abs();

    let same_sign = reversed_euclidean.slack.signum() == entropy_trace.slack.signum();
    let both_tiny = reversed_euclidean.slack.abs() <= reversed_euclidean.tol
        && entropy_trace.slack.abs() <= entropy_trace.tol;
    let sign_consistent = same_sign || both_tiny;

    let consistent =
        whitening_transport_gap <= 1e-6 && whiten_det_slack_gap <= 1e-6 && sign_consistent;

    Ok(EquivalenceBundle {
        reversed_lsi_via_change,
        reversed_euclidean,
        entropy_trace,
        max_entropy_det,
        entropy_trace_whitened,
        whitening_transport_gap,
        whiten_det_slack_gap,
        sign_consistent,
        consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{covariance, shannon_entropy};

    fn gaussian_2d(mean: [f64; 2], rows: [[f64; 2]; 2]) -> Density {
        Density::Gaussian(
            GaussianSpec::new(mean.to_vec(), &[rows[0].to_vec(), rows[1].to_vec()]).unwrap(),
        )
    }

    fn two_mixture() -> Density {
        Density::Mixture(
            MixtureSpec::new(
                vec![0.3, 0.7],
                vec![
                    GaussianSpec::new(vec![1.0, 0.5], &[vec![1.0, 0.2], vec![0.2, 0.5]]).unwrap(),
                    GaussianSpec::new(vec![-0.5, -1.0], &[vec![0.5, -0.1], vec![-0.1, 2.0]])
                        .unwrap(),
                ],
            )
            .unwrap(),
        )
    }

    #[test]
    fn whiten_gaussian_gives_identity_covariance() {
        let g = gaussian_2d([1.0, -1.0], [[2.0, 0.3], [0.3, 0.5]]);
        let white = whiten(&g).unwrap();
        let k = covariance(&white).unwrap();
        assert!(k.max_abs_diff(&SymMat::identity(2)) < 1e-12);
    }

    #[test]
    fn whiten_standard_gaussian_is_identity() {
        let g = Density::Gaussian(GaussianSpec::standard(2));
        let white = whiten(&g).unwrap();
        let k = covariance(&white).unwrap();
        assert!(k.max_abs_diff(&SymMat::identity(2)) < 1e-14);
    }

    #[test]
    fn whiten_mixture_total_covariance() {
        let m = two_mixture();
        let white = whiten(&m).unwrap();
        let k = covariance(&white).unwrap();
        assert!(k.max_abs_diff(&SymMat::identity(2)) < 1e-12);
    }

    #[test]
    fn whiten_is_idempotent() {
        let m = two_mixture();
        let once = whiten(&m).unwrap();
        let twice = whiten(&once).unwrap();
        let (k1, k2) = (covariance(&once).unwrap(), covariance(&twice).unwrap());
        assert!(k1.max_abs_diff(&k2) < 1e-8);
    }

    #[test]
    fn whiten_rejects_grids() {
        let g = Density::Gaussian(GaussianSpec::standard(1));
        let field = g.discretize_default(257).unwrap();
        assert!(matches!(
            whiten(&Density::Grid(field)),
            Err(Error::UnsupportedRepresentation { .. })
        ));
    }

    #[test]
    fn scale_family_examples() {
        let g = Density::Gaussian(GaussianSpec::new(vec![0.0], &[vec![1.0]]).unwrap());
        let same = scale_family(&g, 1.0).unwrap();
        assert!((covariance(&same).unwrap().get(0, 0) - 1.0).abs() < 1e-14);
        let shrunk = scale_family(&g, 2.0).unwrap();
        assert!((covariance(&shrunk).unwrap().get(0, 0) - 0.25).abs() < 1e-14);
        let m = two_mixture();
        let tr = covariance(&m).unwrap().trace();
        let grown = scale_family(&m, 0.5).unwrap();
        assert!((covariance(&grown).unwrap().trace() - 4.0 * tr).abs() < 1e-12);
    }

    #[test]
    fn scale_family_entropy_shift() {
        // H(X/α) = H(X) − n·log α
        let m = two_mixture();
        let h0 = shannon_entropy(&m).unwrap().value;
        for alpha in [0.5, 2.0] {
            let scaled = scale_family(&m, alpha).unwrap();
            let h = shannon_entropy(&scaled).unwrap().value;
            assert!(
                (h - (h0 - 2.0 * alpha.ln())).abs() < 1e-8,
                "alpha {alpha}: {h} vs {}",
                h0 - 2.0 * alpha.ln()
            );
        }
    }

    #[test]
    fn scale_family_preserves_grid_mass() {
        let g = Density::Gaussian(GaussianSpec::standard(1));
        let field = g.discretize_default(257).unwrap();
        let scaled = scale_family(&Density::Grid(field), 1.7).unwrap();
        match scaled {
            Density::Grid(f) => assert!((f.trapezoid_integral() - 1.0).abs() < 1e-10),
            _ => unreachable!(),
        }
    }

    #[test]
    fn scale_family_rejects_nonpositive_alpha() {
        let g = Density::Gaussian(GaussianSpec::standard(1));
        assert!(scale_family(&g, 0.0).is_err());
        assert!(scale_family(&g, -1.0).is_err());
    }

    #[test]
    fn change_of_function_round_trips_gaussian() {
        for (mean, var) in [(0.0, 1.0), (1.2, 0.49), (-0.7, 2.25)] {
            let h = Density::Gaussian(GaussianSpec::new(vec![mean], &[vec![var]]).unwrap());
            let f = gauss_to_euclid_function(&h);
            let back = relative_to_pdf(&f).unwrap();
            let (got_mean, got_var) = match &back {
                Density::Grid(field) => {
                    let k = covariance(&back).unwrap();
                    let mut mass = 0.0;
                    let mut mu = 0.0;
                    for i in 0..field.len() {
                        let w = field.trapezoid_weight(i) * field.values()[i];
                        mass += w;
                        mu += w * field.point_at(i)[0];
                    }
                    (mu / mass, k.get(0, 0))
                }
                _ => panic!("expected grid"),
            };
            assert!((got_mean - mean).abs() < 1e-8, "mean {got_mean} vs {mean}");
            assert!((got_var - var).abs() < 1e-8, "var {got_var} vs {var}");
        }
    }

    #[test]
    fn change_of_function_has_unit_gamma_mass() {
        // ∫f dγ = ∫h dλ = 1
        let m = two_mixture();
        let f = gauss_to_euclid_function(&m);
        let mass = crate::functionals::expect_gamma(&f, 64).unwrap();
        assert!((mass.value - 1.0).abs() < 1e-6, "mass {}", mass.value);
    }

    #[test]
    fn optimal_alpha_examples() {
        assert!((optimal_alpha(1.0, 1).unwrap().alpha - 1.0).abs() < 1e-15);
        assert!((optimal_alpha(4.0, 1).unwrap().alpha - 2.0).abs() < 1e-15);
        assert!((optimal_alpha(2.0, 2).unwrap().alpha - 1.0).abs() < 1e-15);
        assert!(matches!(
            optimal_alpha(0.0, 1),
            Err(Error::NonPositiveTrace { .. })
        ));
    }

    #[test]
    fn optimal_alpha_minimizes_scaled_bound() {
        let opts = CheckOptions::default();
        let h = gaussian_2d([0.5, -0.5], [[1.5, 0.4], [0.4, 0.7]]);
        let tr_k = covariance(&h).unwrap().trace();
        let best = optimal_alpha(tr_k, 2).unwrap();
        let at_star = scaled_bound(&h, best.alpha, &opts).unwrap();
        assert!((at_star - best.bound).abs() < 1e-10);
        // 33-point log-spaced scan over [α*/4, 4α*]
        let mut min_idx = 0;
        let mut min_val = f64::INFINITY;
        for i in 0..33 {
            let t = i as f64 / 32.0;
            let alpha = best.alpha * 0.25_f64.powf(1.0 - 2.0 * t);
            let b = scaled_bound(&h, alpha, &opts).unwrap();
            if b < min_val {
                min_val = b;
                min_idx = i;
            }
            assert!(b >= at_star - 1e-8, "bound below optimum at alpha {alpha}");
        }
        assert_eq!(min_idx, 16, "scan minimum not at the closed-form point");
    }

    #[test]
    fn derived_matches_direct_reversed_euclidean() {
        for g in [
            gaussian_2d([0.5, 0.0], [[2.0, 0.3], [0.3, 0.5]]),
            two_mixture(),
        ] {
            let derived = derive_reversed_euclidean(&g).unwrap();
            let direct = check_reversed_euclidean_opts(&g, &CheckOptions::default()).unwrap();
            assert!(
                (derived.lhs - direct.lhs).abs() < 1e-8,
                "lhs {} vs {}",
                derived.lhs,
                direct.lhs
            );
            assert!(
                (derived.rhs - direct.rhs).abs() < 1e-8,
                "rhs {} vs {}",
                derived.rhs,
                direct.rhs
            );
        }
    }

    #[test]
    fn amgm_reduce_orders_means() {
        let k = SymMat::diag(&[1.0, 4.0]);
        let (geo, ar) = amgm_reduce(&k);
        assert!((geo - 2.0).abs() < 1e-14);
        assert!((ar - 2.5).abs() < 1e-14);
    }

    #[test]
    fn equivalence_roundtrip_is_consistent() {
        for g in [
            Density::Gaussian(GaussianSpec::standard(2)),
            gaussian_2d([1.0, -0.5], [[1.0, 0.0], [0.0, 4.0]]),
            two_mixture(),
        ] {
            let bundle = equivalence_roundtrip(&g).unwrap();
            assert!(
                bundle.consistent,
                "transport gap {} det gap {} sign {}",
                bundle.whitening_transport_gap,
                bundle.whiten_det_slack_gap,
                bundle.sign_consistent
            );
            assert!(bundle.reversed_lsi_via_change.satisfied);
            assert!(bundle.max_entropy_det.satisfied);
        }
    }
}
