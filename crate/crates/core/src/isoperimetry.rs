//! The Gaussian isoperimetric function I = φ∘Φ⁻¹ and Bobkov's translation
//! inequality |E_γ∇f| ≤ I(E_γf) for [0,1]-valued f.
//!
//! Φ is evaluated through the series/continued-fraction error function rather
//! than quadrature because the quantile polishing needs ~1e-14 CDF accuracy.
//! Φ⁻¹ starts from a rational approximation and is polished by two Newton
//! steps on Φ.

use std::sync::Arc;

use crate::density::{CustomFunction, RelativeFunction};
use crate::error::{Error, Result};
use crate::functionals::Route;
use crate::inequalities::{CheckOptions, InequalityReport};
use crate::special;

/// Φ(x) = γ₁((−∞, x]).
pub fn gaussian_cdf(x: f64) -> f64 {
    special::std_normal_cdf(x)
}

/// φ(x), the standard normal density.
pub fn gaussian_pdf(x: f64) -> f64 {
    special::std_normal_pdf(x)
}

/// Φ⁻¹(t) for t ∈ (0, 1): rational initial approximation polished by two
/// Newton steps on Φ, giving Φ(Φ⁻¹(t)) = t to ~1e-15.
pub fn gaussian_quantile(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::OutOfRange { value: t });
    }
    let mut x = special::quantile_initial(t);
    for _ in 0..2 {
        let pdf = gaussian_pdf(x);
        if pdf < 1e-305 {
            break;
        }
        let step = (gaussian_cdf(x) - t) / pdf;
        x -= step.clamp(-0.5, 0.5);
    }
    Ok(x)
}

/// The Gaussian isoperimetric function I(t) = φ(Φ⁻¹(t)), extended
/// continuously by I(0) = I(1) = 0.
pub fn isoperimetric_profile(t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange { value: t });
    }
    if t == 0.0 || t == 1.0 {
        return Ok(0.0);
    }
    Ok(gaussian_pdf(gaussian_quantile(t)?))
}

/// Tolerance for the [0, 1] range precondition of Bobkov's inequality.
/// Values beyond it are errors, not warnings: the inequality is false
/// without the range constraint.
pub const RANGE_TOL: f64 = 1e-12;

/// Half-width of the Bobkov quadrature box; γ-mass beyond it is ~1e-32.
const BOBKOV_RANGE: f64 = 12.0;

/// Points per axis for the Bobkov rule by dimension. Near-extremal test
/// functions concentrate their gradient on an O(ε) window, which
/// Gauss–Hermite nodes (spacing ~π/√m near the origin) cannot resolve; a
/// dense uniform trapezoid rule against the explicit γ weight is spectrally
/// accurate for these analytic integrands instead.
fn bobkov_points(dim: usize, route: Route) -> usize {
    let base = match dim {
        1 => 4801,
        2 => 241,
        _ => 81,
    };
    match route {
        Route::Primary => base,
        Route::Refined => base + base / 2,
    }
}

/// Bobkov's translation inequality: |E_γ∇f| ≤ I(E_γf) for smooth
/// f: Rⁿ → [0,1]. The range is enforced at every quadrature node.
pub fn check_bobkov(f: &RelativeFunction) -> Result<InequalityReport> {
    check_bobkov_opts(f, &CheckOptions::default())
}

pub fn check_bobkov_opts(f: &RelativeFunction, opts: &CheckOptions) -> Result<InequalityReport> {
    let dim = f.dim();
    let sides = |route: Route| -> Result<(f64, f64)> {
        let m = bobkov_points(dim, route);
        let h = 2.0 * BOBKOV_RANGE / (m - 1) as f64;
        let count = m.pow(dim as u32);
        let mut mass = 0.0;
        let mut grad = vec![0.0; dim];
        let mut x = vec![0.0; dim];
        for flat in 0..count {
            let mut rest = flat;
            let mut w = 1.0;
            for a in (0..dim).rev() {
                let i = rest % m;
                rest /= m;
                x[a] = -BOBKOV_RANGE + i as f64 * h;
                let edge = if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
                w *= edge * h * gaussian_pdf(x[a]);
            }
            if !f.in_domain(&x) {
                continue;
            }
            let v = f.value(&x)?;
            if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v) {
                return Err(Error::RangeViolation {
                    value: v,
                    tol: RANGE_TOL,
                });
            }
            mass += w * v.clamp(0.0, 1.0);
            for (a, d) in grad.iter_mut().zip(f.gradient(&x)?) {
                *a += w * d;
            }
        }
        let lhs = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let rhs = isoperimetric_profile(mass.clamp(0.0, 1.0))?;
        Ok((lhs, rhs))
    };
    let (lhs, rhs) = sides(Route::Primary)?;
    let (lhs_alt, rhs_alt) = sides(Route::Refined)?;
    let err = (lhs - lhs_alt).abs().max((rhs - rhs_alt).abs());
    Ok(InequalityReport::new(
        "bobkov",
        lhs,
        rhs,
        err,
        opts.tol_floor + crate::inequalities::TOL_ERROR_MULT * err,
        f.digest(),
    ))
}

/// The smoothed half-space indicator f(x) = Φ((x₁ − a)/ε), the near-extremal
/// test family for Bobkov's inequality: as ε → 0 both sides tend to φ(a).
pub fn smoothed_half_space(dim: usize, a: f64, eps: f64) -> RelativeFunction {
    let value = move |x: &[f64]| gaussian_cdf((x[0] - a) / eps);
    let gradient = move |x: &[f64]| {
        let mut g = vec![0.0; x.len()];
        g[0] = gaussian_pdf((x[0] - a) / eps) / eps;
        g
    };
    RelativeFunction::Custom(CustomFunction {
        dim,
        label: format!("smoothed half-space a={a}, eps={eps}"),
        value: Arc::new(value),
        log_value: None,
        gradient: Arc::new(gradient),
        grad_log: None,
        suggested_box: None,
    })
}

/// A logistic ramp along a unit direction, range (0, 1): the generic
/// [0,1]-valued test family.
pub fn logistic_ramp(direction: Vec<f64>, shift: f64, eps: f64) -> RelativeFunction {
    let dim = direction.len();
    let dir = Arc::new(direction);
    let value = {
        let dir = dir.clone();
        move |x: &[f64]| {
            let s: f64 = dir.iter().zip(x).map(|(d, xi)| d * xi).sum();
            1.0 / (1.0 + (-(s - shift) / eps).exp())
        }
    };
    let gradient = {
        let dir = dir.clone();
        move |x: &[f64]| {
            let s: f64 = dir.iter().zip(x).map(|(d, xi)| d * xi).sum();
            let sig = 1.0 / (1.0 + (-(s - shift) / eps).exp());
            let factor = sig * (1.0 - sig) / eps;
            dir.iter().map(|d| d * factor).collect()
        }
    };
    RelativeFunction::Custom(CustomFunction {
        dim,
        label: format!("logistic ramp shift={shift}, eps={eps}"),
        value: Arc::new(value),
        log_value: None,
        gradient: Arc::new(gradient),
        grad_log: None,
        suggested_box: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI_0: f64 = 0.3989422804014327; // φ(0) = 1/√(2π)

    #[test]
    fn cdf_basics() {
        assert!((gaussian_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((gaussian_cdf(1.959964) - 0.975).abs() < 1e-6);
        for x in [0.3, 1.1, 2.7] {
            assert!((gaussian_cdf(-x) - (1.0 - gaussian_cdf(x))).abs() < 1e-15);
        }
    }

    #[test]
    fn quantile_round_trip() {
        for i in 1..10_000 {
            let t = i as f64 / 10_000.0;
            let x = gaussian_quantile(t).unwrap();
            assert!(
                (gaussian_cdf(x) - t).abs() < 1e-12,
                "round trip at t={t}: {}",
                (gaussian_cdf(x) - t).abs()
            );
        }
        assert!((gaussian_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        for t in [0.0, 1.0, -0.5, 1.5] {
            assert!(matches!(
                gaussian_quantile(t),
                Err(Error::OutOfRange { .. })
            ));
        }
    }

    #[test]
    fn profile_examples() {
        assert!((isoperimetric_profile(0.5).unwrap() - PHI_0).abs() < 1e-12);
        assert_eq!(isoperimetric_profile(0.0).unwrap(), 0.0);
        assert_eq!(isoperimetric_profile(1.0).unwrap(), 0.0);
        let a = isoperimetric_profile(0.3).unwrap();
        let b = isoperimetric_profile(0.7).unwrap();
        assert!((a - b).abs() < 1e-12, "symmetry: {a} vs {b}");
    }

    #[test]
    fn profile_is_concave() {
        let n = 2000;
        let at = |i: usize| isoperimetric_profile(i as f64 / n as f64).unwrap();
        for i in 1..n {
            let second = at(i + 1) - 2.0 * at(i) + at(i - 1);
            assert!(second <= 1e-8, "second difference {second} at {i}");
        }
    }

    #[test]
    fn constant_half_is_strictly_inside() {
        let f = RelativeFunction::custom(
            1,
            "1/2",
            |_: &[f64]| 0.5,
            |x: &[f64]| vec![0.0; x.len()],
        );
        let rep = check_bobkov(&f).unwrap();
        assert!(rep.lhs.abs() < 1e-14);
        assert!((rep.rhs - PHI_0).abs() < 1e-12);
        assert!(rep.satisfied);
    }

    #[test]
    fn smoothed_half_space_is_near_extremal() {
        // both sides → φ(a) as ε → 0; the ratio is exactly 1/√(1+ε²)
        let f = smoothed_half_space(1, 0.0, 0.05);
        let rep = check_bobkov(&f).unwrap();
        let rel_gap = (rep.rhs - rep.lhs) / rep.rhs;
        assert!(rel_gap > 0.0);
        assert!(rel_gap < 0.02, "relative gap {rel_gap}");
        // exact ratio check
        let expected = 1.0 - 1.0 / (1.0f64 + 0.05 * 0.05).sqrt();
        assert!((rel_gap - expected).abs() < 1e-6);
    }

    #[test]
    fn shifted_unit_width_half_space() {
        // f = Φ(x − 1): lhs = e^{-1/4}/(2√π), Ef = Φ(−1/√2), strict
        let f = smoothed_half_space(1, 1.0, 1.0);
        let rep = check_bobkov(&f).unwrap();
        assert!(
            (rep.lhs - 0.2196956447338612).abs() < 1e-9,
            "lhs {}",
            rep.lhs
        );
        let want_rhs = isoperimetric_profile(0.2397500610934767).unwrap();
        assert!((rep.rhs - want_rhs).abs() < 1e-9);
        assert!(rep.slack > 0.05);
    }

    #[test]
    fn range_violation_is_rejected() {
        let f = RelativeFunction::custom(
            1,
            "3/2",
            |_: &[f64]| 1.5,
            |x: &[f64]| vec![0.0; x.len()],
        );
        assert!(matches!(
            check_bobkov(&f),
            Err(Error::RangeViolation { .. })
        ));
    }

    #[test]
    fn logistic_family_holds_in_two_dims() {
        let f = logistic_ramp(vec![0.6, 0.8], 0.3, 0.7);
        let rep = check_bobkov(&f).unwrap();
        assert!(rep.satisfied, "slack {}", rep.slack);
    }
}
