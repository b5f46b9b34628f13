//! The heat-semigroup proof engine: P_t f(x) = ∫ f(x + √t·y) dγₙ(y), the
//! entropy interpolation identity along the flow, and the two Cauchy–Schwarz
//! bounds that recover the logarithmic Sobolev inequality and its reversed
//! form at (t, x) = (1, 0).
//!
//! The interpolation identity writes
//!
//!   P_t(f log f) − P_tf·log P_tf = ½·∫₀ᵗ P_s(|∇P_{t−s}f|²/P_{t−s}f) ds,
//!
//! and the integrand is squeezed pointwise in s between
//! |P_t∇f|²/P_tf (outer Cauchy–Schwarz, reversed side) and P_t(|∇f|²/f)
//! (inner Cauchy–Schwarz, forward side). Gradients commute with P_t, so the
//! inner expressions use P_{t−s}(∇f) with the analytic gradient rather than
//! differentiating through quadrature.

use crate::density::{xlogx, RelativeFunction, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::functionals::{gauss_hermite_rule, relative_entropy_gamma, DEFAULT_GH_POINTS};

/// Default Simpson slice count over s ∈ [0, t].
pub const DEFAULT_SLICES: usize = 32;

#[derive(Debug, Clone, Copy)]
pub struct SemigroupOptions {
    /// Gauss–Hermite points per axis for every P_· application.
    pub gh_points: usize,
    /// Composite Simpson slices for the s-integral (must be even).
    pub slices: usize,
}

impl Default for SemigroupOptions {
    fn default() -> Self {
        SemigroupOptions {
            gh_points: DEFAULT_GH_POINTS,
            slices: DEFAULT_SLICES,
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("negative semigroup time {t}")));
    }
    Ok(())
}

/// P_t f(x) by Gauss–Hermite in y; P_0 is the identity.
pub fn heat_apply(f: &RelativeFunction, t: f64, x: &[f64], points: usize) -> Result<f64> {
    check_time(t)?;
    if t == 0.0 {
        return f.value(x);
    }
    let rule = gauss_hermite_rule(points, f.dim())?;
    let root = t.sqrt();
    let mut acc = 0.0;
    let mut z = vec![0.0; f.dim()];
    for (y, w) in rule.iter() {
        for (zi, (xi, yi)) in z.iter_mut().zip(x.iter().zip(y)) {
            *zi = xi + root * yi;
        }
        acc += w * f.value(&z)?;
    }
    Ok(acc)
}

/// P_t applied to the coordinates of ∇f (gradients commute with P_t).
pub fn heat_apply_grad(f: &RelativeFunction, t: f64, x: &[f64], points: usize) -> Result<Vec<f64>> {
    check_time(t)?;
    if t == 0.0 {
        return f.gradient(x);
    }
    let rule = gauss_hermite_rule(points, f.dim())?;
    let root = t.sqrt();
    let mut acc = vec![0.0; f.dim()];
    let mut z = vec![0.0; f.dim()];
    for (y, w) in rule.iter() {
        for (zi, (xi, yi)) in z.iter_mut().zip(x.iter().zip(y)) {
            *zi = xi + root * yi;
        }
        for (a, g) in acc.iter_mut().zip(f.gradient(&z)?) {
            *a += w * g;
        }
    }
    Ok(acc)
}

/// P_t(f·log f)(x), with the 0·log 0 convention.
fn heat_apply_flogf(f: &RelativeFunction, t: f64, x: &[f64], points: usize) -> Result<f64> {
    let rule = gauss_hermite_rule(points, f.dim())?;
    let root = t.sqrt();
    let mut acc = 0.0;
    let mut z = vec![0.0; f.dim()];
    for (y, w) in rule.iter() {
        for (zi, (xi, yi)) in z.iter_mut().zip(x.iter().zip(y)) {
            *zi = xi + root * yi;
        }
        let v = f.value(&z)?;
        if v < 0.0 {
            return Err(Error::NonPositiveValue {
                value: v,
                at: Some(format!("{z:?}")),
            });
        }
        acc += w * xlogx(v);
    }
    Ok(acc)
}

/// P_t(|∇f|²/f)(x).
fn heat_apply_dirichlet(f: &RelativeFunction, t: f64, x: &[f64], points: usize) -> Result<f64> {
    let rule = gauss_hermite_rule(points, f.dim())?;
    let root = t.sqrt();
    let mut acc = 0.0;
    let mut z = vec![0.0; f.dim()];
    for (y, w) in rule.iter() {
        for (zi, (xi, yi)) in z.iter_mut().zip(x.iter().zip(y)) {
            *zi = xi + root * yi;
        }
        acc += w * f.dirichlet(&z)?;
    }
    Ok(acc)
}

/// Verifies ∇P_t f = P_t ∇f: central finite differences of `heat_apply`
/// against the quadrature of the analytic gradient.
#[derive(Debug, Clone)]
pub struct CommuteReport {
    pub fd_gradient: Vec<f64>,
    pub semigroup_gradient: Vec<f64>,
    pub max_diff: f64,
    pub ok: bool,
}

pub fn heat_gradient_commute_check(
    f: &RelativeFunction,
    t: f64,
    x: &[f64],
    points: usize,
) -> Result<CommuteReport> {
    let semigroup_gradient = heat_apply_grad(f, t, x, points)?;
    let step = 1e-5;
    let mut fd_gradient = vec![0.0; f.dim()];
    for a in 0..f.dim() {
        let mut fwd = x.to_vec();
        let mut bwd = x.to_vec();
        fwd[a] += step;
        bwd[a] -= step;
        fd_gradient[a] =
            (heat_apply(f, t, &fwd, points)? - heat_apply(f, t, &bwd, points)?) / (2.0 * step);
    }
    let max_diff = fd_gradient
        .iter()
        .zip(&semigroup_gradient)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(CommuteReport {
        ok: max_diff <= 1e-5,
        fd_gradient,
        semigroup_gradient,
        max_diff,
    })
}

/// One Simpson node of the interpolation record.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub s: f64,
    /// P_s(|P_{t−s}∇f|²/P_{t−s}f)(x), the production integrand.
    pub production: f64,
    /// |P_s(P_{t−s}∇f)|²/P_s(P_{t−s}f)(x): outer Cauchy–Schwarz, ≤ production.
    pub reversed: f64,
    /// P_s(P_{t−s}(|∇f|²/f))(x): inner Cauchy–Schwarz, ≥ production.
    pub forward: f64,
}

/// Time-sampled record of the interpolation identity and its bounds.
#[derive(Debug, Clone)]
pub struct SemigroupTrace {
    pub f_digest: String,
    pub t: f64,
    pub x: Vec<f64>,
    /// P_t(f log f)(x) − P_tf(x)·log P_tf(x).
    pub identity_lhs: f64,
    /// ½·Simpson integral of the production integrand over [0, t].
    pub production_integral: f64,
    /// (t/2)·|P_t∇f(x)|²/P_tf(x).
    pub reversed_bound: f64,
    /// (t/2)·P_t(|∇f|²/f)(x).
    pub forward_bound: f64,
    pub s_grid: Vec<f64>,
    pub rows: Vec<TraceRow>,
}

impl SemigroupTrace {
    /// CSV rows (s, production, reversed, forward) for offline plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,production_integrand,reversed_integrand,forward_integrand\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                row.s, row.production, row.reversed, row.forward
            ));
        }
        out
    }
}

/// Computes both sides of the entropy interpolation identity at (t, x),
/// sampling the production integrand on a composite Simpson grid. The s = t
/// endpoint uses the analytic limit |∇f|²/f under P_t (P_0 is the identity),
/// avoiding a 0/0 evaluation.
pub fn interpolation_identity(
    f: &RelativeFunction,
    t: f64,
    x: &[f64],
    opts: &SemigroupOptions,
) -> Result<SemigroupTrace> {
    check_time(t)?;
    if !(t > 0.0) {
        return Err(Error::invalid("interpolation identity needs t > 0"));
    }
    if opts.slices < 2 || opts.slices % 2 != 0 {
        return Err(Error::invalid(format!(
            "Simpson slice count must be even and ≥ 2, got {}",
            opts.slices
        )));
    }
    let points = opts.gh_points;
    let ptf = heat_apply(f, t, x, points)?;
    if ptf <= 0.0 {
        return Err(Error::NonPositiveValue {
            value: ptf,
            at: Some("P_t f".into()),
        });
    }
    let identity_lhs = heat_apply_flogf(f, t, x, points)? - ptf * ptf.max(LOG_FLOOR).ln();

    let pt_grad = heat_apply_grad(f, t, x, points)?;
    let grad_sq: f64 = pt_grad.iter().map(|g| g * g).sum();
    let reversed_const = grad_sq / ptf;
    let forward_const = heat_apply_dirichlet(f, t, x, points)?;

    let rule = gauss_hermite_rule(points, f.dim())?;
    let h = t / opts.slices as f64;
    let mut s_grid = Vec::with_capacity(opts.slices + 1);
    let mut rows = Vec::with_capacity(opts.slices + 1);
    let mut z = vec![0.0; f.dim()];
    for i in 0..=opts.slices {
        let s = i as f64 * h;
        let tau = t - s;
        let row = if i == 0 {
            // outer P_0 is the identity
            TraceRow {
                s,
                production: reversed_const,
                reversed: reversed_const,
                forward: heat_apply_dirichlet(f, tau, x, points)?,
            }
        } else if i == opts.slices {
            // inner P_0 is the identity: integrand is P_t(|∇f|²/f)
            let production = heat_apply_dirichlet(f, t, x, points)?;
            let mut num = vec![0.0; f.dim()];
            let mut den = 0.0;
            let root = s.sqrt();
            for (y, w) in rule.iter() {
                for (zi, (xi, yi)) in z.iter_mut().zip(x.iter().zip(y)) {
                    *zi = xi + root * yi;
                }
                den += w * f.value(&z)?;
                for (a, g) in num.iter_mut().zip(f.gradient(&z)?) {
                    *a += w * g;
                }
            }
            let reversed = num.iter().map(|g| g * g).sum::<f64>() / den.max(LOG_FLOOR);
            TraceRow {
                s,
                production,
                reversed,
                forward: production,
            }
        } else {
            let root = s.sqrt();
            let mut production = 0.0;
            let mut forward = 0.0;
            let mut num = vec![0.0; f.dim()];
            let mut den = 0.0;
            for (y, w) in rule.iter() {
                for (zi, (xi, yi)) in z.iter_mut().zip(x.iter().zip(y)) {
                    *zi = xi + root * yi;
                }
                let inner_f = heat_apply(f, tau, &z, points)?;
                let inner_grad = heat_apply_grad(f, tau, &z, points)?;
                let gsq: f64 = inner_grad.iter().map(|g| g * g).sum();
                production += w * gsq / inner_f.max(LOG_FLOOR);
                forward += w * heat_apply_dirichlet(f, tau, &z, points)?;
                den += w * inner_f;
                for (a, g) in num.iter_mut().zip(inner_grad) {
                    *a += w * g;
                }
            }
            let reversed = num.iter().map(|g| g * g).sum::<f64>() / den.max(LOG_FLOOR);
            TraceRow {
                s,
                production,
                reversed,
                forward,
            }
        };
        s_grid.push(s);
        rows.push(row);
    }
    // composite Simpson, fixed index order
    let mut integral = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let c = if i == 0 || i == opts.slices {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        integral += c * row.production;
    }
    integral *= h / 3.0;
    let production_integral = 0.5 * integral;

    Ok(SemigroupTrace {
        f_digest: f.digest(),
        t,
        x: x.to_vec(),
        identity_lhs,
        production_integral,
        reversed_bound: 0.5 * t * reversed_const,
        forward_bound: 0.5 * t * forward_const,
        s_grid,
        rows,
    })
}

/// (t/2)·|P_t∇f(x)|²/P_tf(x). At (t, x) = (1, 0) this is half the lhs of the
/// reversed logarithmic Sobolev inequality.
pub fn reversed_bound(f: &RelativeFunction, t: f64, x: &[f64], points: usize) -> Result<f64> {
    let num: f64 = heat_apply_grad(f, t, x, points)?
        .iter()
        .map(|g| g * g)
        .sum();
    let den = heat_apply(f, t, x, points)?;
    Ok(0.5 * t * num / den.max(LOG_FLOOR))
}

/// (t/2)·P_t(|∇f|²/f)(x). At (t, x) = (1, 0) this is half the rhs of the
/// Gross logarithmic Sobolev inequality.
pub fn forward_bound(f: &RelativeFunction, t: f64, x: &[f64], points: usize) -> Result<f64> {
    Ok(0.5 * t * heat_apply_dirichlet(f, t, x, points)?)
}

/// The double derivation at (t, x) = (1, 0): reversed ≤ Ent_γ(f) ≤ forward,
/// with the identity lhs agreeing with the entropy functional.
#[derive(Debug, Clone)]
pub struct SandwichReport {
    pub reversed: f64,
    pub entropy: f64,
    pub forward: f64,
    pub identity_lhs: f64,
    pub production_integral: f64,
    /// reversed ≤ entropy ≤ forward within tolerance.
    pub sandwich_ok: bool,
    /// |entropy − identity_lhs| ≤ 1e-6·(1 + |entropy|).
    pub identity_ok: bool,
    pub trace: SemigroupTrace,
}

pub fn sandwich_at_origin(f: &RelativeFunction, opts: &SemigroupOptions) -> Result<SandwichReport> {
    let x = vec![0.0; f.dim()];
    let trace = interpolation_identity(f, 1.0, &x, opts)?;
    let entropy = relative_entropy_gamma(f, opts.gh_points)?;
    let tol = 1e-6 * (1.0 + entropy.value.abs()) + 10.0 * entropy.estimated_error;
    let sandwich_ok = trace.reversed_bound <= entropy.value + tol
        && entropy.value <= trace.forward_bound + tol;
    let identity_ok = (entropy.value - trace.identity_lhs).abs() <= tol;
    Ok(SandwichReport {
        reversed: trace.reversed_bound,
        entropy: entropy.value,
        forward: trace.forward_bound,
        identity_lhs: trace.identity_lhs,
        production_integral: trace.production_integral,
        sandwich_ok,
        identity_ok,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ENT_EXP_1: f64 = 0.8243606353500641; // (1/2)·e^{1/2}

    fn tanh_bump() -> RelativeFunction {
        RelativeFunction::custom(
            1,
            "1 + 0.5 tanh(x)",
            |x: &[f64]| 1.0 + 0.5 * x[0].tanh(),
            |x: &[f64]| {
                let c = x[0].cosh();
                vec![0.5 / (c * c)]
            },
        )
    }

    fn quad_bump() -> RelativeFunction {
        RelativeFunction::custom(
            1,
            "1 + 0.25 x^2",
            |x: &[f64]| 1.0 + 0.25 * x[0] * x[0],
            |x: &[f64]| vec![0.5 * x[0]],
        )
    }

    #[test]
    fn heat_apply_of_square_at_origin() {
        // E(0 + √t·y)² = t
        let f = quad_bump(); // 1 + 0.25 x² → P_1 at 0 = 1 + 0.25
        let v = heat_apply(&f, 1.0, &[0.0], 64).unwrap();
        assert!((v - 1.25).abs() < 1e-12);
        let sq = RelativeFunction::custom(
            1,
            "x^2",
            |x: &[f64]| x[0] * x[0],
            |x: &[f64]| vec![2.0 * x[0]],
        );
        let v = heat_apply(&sq, 1.0, &[0.0], 64).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heat_apply_of_exp_matches_mgf() {
        // P_t e^{a·} (x) = e^{ax + a²t/2}
        let f = RelativeFunction::exp_witness(vec![0.7]);
        for (t, x) in [(0.5, 0.3), (1.0, -1.2), (2.0, 0.0)] {
            let got = heat_apply(&f, t, &[x], 64).unwrap();
            let want = (0.7 * x + 0.49 * t / 2.0).exp();
            assert!(
                ((got - want) / want).abs() < 1e-12,
                "t={t}, x={x}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn heat_apply_at_time_zero_is_identity() {
        let f = tanh_bump();
        assert_eq!(
            heat_apply(&f, 0.0, &[0.4], 64).unwrap(),
            f.value(&[0.4]).unwrap()
        );
    }

    #[test]
    fn gradient_commutes_with_semigroup() {
        for f in [RelativeFunction::exp_witness(vec![1.0]), tanh_bump()] {
            let rep = heat_gradient_commute_check(&f, 0.7, &[0.2], 64).unwrap();
            assert!(rep.ok, "max diff {}", rep.max_diff);
        }
    }

    #[test]
    fn semigroup_property() {
        // P_s P_t = P_{s+t} on the test family
        let f = tanh_bump();
        for (s, t) in [(0.25, 0.25), (0.25, 0.5), (0.5, 0.5)] {
            let composed = {
                let inner = f.clone();
                let outer = RelativeFunction::custom(
                    1,
                    "P_s f",
                    move |x: &[f64]| heat_apply(&inner, s, x, 64).unwrap(),
                    |x: &[f64]| vec![0.0; x.len()],
                );
                heat_apply(&outer, t, &[0.3], 64).unwrap()
            };
            let direct = heat_apply(&f, s + t, &[0.3], 64).unwrap();
            assert!(
                (composed - direct).abs() < 1e-6,
                "s={s}, t={t}: {composed} vs {direct}"
            );
        }
    }

    #[test]
    fn identity_trivial_for_constants() {
        let f = RelativeFunction::constant(1, 1.0).unwrap();
        let trace = interpolation_identity(&f, 1.0, &[0.0], &SemigroupOptions::default()).unwrap();
        assert!(trace.identity_lhs.abs() < 1e-14);
        assert!(trace.production_integral.abs() < 1e-14);
    }

    #[test]
    fn identity_for_exp_witness() {
        let f = RelativeFunction::exp_witness(vec![1.0]);
        let trace = interpolation_identity(&f, 1.0, &[0.0], &SemigroupOptions::default()).unwrap();
        assert!(
            (trace.identity_lhs - ENT_EXP_1).abs() < 1e-6,
            "lhs {}",
            trace.identity_lhs
        );
        assert!(
            (trace.identity_lhs - trace.production_integral).abs() < 1e-4,
            "lhs {} vs integral {}",
            trace.identity_lhs,
            trace.production_integral
        );
    }

    #[test]
    fn identity_for_tanh() {
        let f = tanh_bump();
        let trace = interpolation_identity(&f, 1.0, &[0.0], &SemigroupOptions::default()).unwrap();
        assert!(
            (trace.identity_lhs - trace.production_integral).abs() <= 1e-4,
            "lhs {} vs {}",
            trace.identity_lhs,
            trace.production_integral
        );
    }

    #[test]
    fn rows_are_sandwiched_pointwise() {
        for f in [
            RelativeFunction::exp_witness(vec![0.8]),
            tanh_bump(),
            quad_bump(),
        ] {
            let trace =
                interpolation_identity(&f, 1.0, &[0.0], &SemigroupOptions::default()).unwrap();
            for row in &trace.rows {
                assert!(
                    row.reversed <= row.production + 1e-9,
                    "s={}: reversed {} > production {}",
                    row.s,
                    row.reversed,
                    row.production
                );
                assert!(
                    row.production <= row.forward + 1e-9,
                    "s={}: production {} > forward {}",
                    row.s,
                    row.production,
                    row.forward
                );
            }
        }
    }

    #[test]
    fn identity_self_converges() {
        // doubling slices and nodes moves the integral by < 1e-5
        let f = tanh_bump();
        let coarse =
            interpolation_identity(&f, 1.0, &[0.0], &SemigroupOptions::default()).unwrap();
        let fine = interpolation_identity(
            &f,
            1.0,
            &[0.0],
            &SemigroupOptions {
                gh_points: 128,
                slices: 64,
            },
        )
        .unwrap();
        assert!(
            (coarse.production_integral - fine.production_integral).abs() < 1e-5,
            "{} vs {}",
            coarse.production_integral,
            fine.production_integral
        );
    }

    #[test]
    fn sandwich_collapses_for_exp() {
        let f = RelativeFunction::exp_witness(vec![1.0]);
        let rep = sandwich_at_origin(&f, &SemigroupOptions::default()).unwrap();
        assert!(rep.sandwich_ok && rep.identity_ok);
        for v in [rep.reversed, rep.entropy, rep.forward] {
            assert!((v - ENT_EXP_1).abs() < 1e-4, "value {v}");
        }
    }

    #[test]
    fn sandwich_strict_for_quadratic() {
        let f = quad_bump();
        let rep = sandwich_at_origin(&f, &SemigroupOptions::default()).unwrap();
        assert!(rep.sandwich_ok && rep.identity_ok);
        assert!(rep.entropy - rep.reversed > 1e-3, "lower gap too small");
        assert!(rep.forward - rep.entropy > 1e-3, "upper gap too small");
    }

    #[test]
    fn sandwich_zero_for_constants() {
        let f = RelativeFunction::constant(1, 2.0).unwrap();
        let rep = sandwich_at_origin(&f, &SemigroupOptions::default()).unwrap();
        assert!(rep.reversed.abs() < 1e-12);
        assert!(rep.entropy.abs() < 1e-12);
        assert!(rep.forward.abs() < 1e-12);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let f = RelativeFunction::exp_witness(vec![1.0]);
        let trace = interpolation_identity(&f, 1.0, &[0.0], &SemigroupOptions::default()).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 33);
        assert!(lines[0].starts_with("s,"));
    }
}
