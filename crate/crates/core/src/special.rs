//! Error-function machinery behind the Gaussian CDF.
//!
//! `erf` on [0, 2) uses the positive-term confluent series
//! erf(x) = (2/√π)·x·e^{-x²}·Σ (2x²)^k / (1·3···(2k+1)), which has no
//! cancellation; for x ≥ 2, `erfc` uses the classical continued fraction
//! evaluated by the modified Lentz scheme. Both paths keep relative error
//! near machine precision, which the quantile polishing downstream relies on.

const FRAC_2_SQRT_PI: f64 = 1.1283791670955126; // 2/√π
const FRAC_1_SQRT_PI: f64 = 0.5641895835477563; // 1/√π

/// Series/continued-fraction split point.
const ERF_SPLIT: f64 = 2.0;

fn erf_series(x: f64) -> f64 {
    // erf(x) = (2/√π) x e^{-x²} Σ_{k≥0} (2x²)^k / (2k+1)!!
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= 2.0 * x2 / (2.0 * k as f64 + 1.0);
        sum += term;
        if term < f64::EPSILON * sum || k > 200 {
            break;
        }
    }
    FRAC_2_SQRT_PI * x * (-x2).exp() * sum
}

fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = tiny;
    let mut c = f;
    let mut d = 0.0;
    for j in 1..400 {
        let a = if j == 1 { 1.0 } else { (j - 1) as f64 / 2.0 };
        d = x + a * d;
        if d == 0.0 {
            d = tiny;
        }
        c = x + a / c;
        if c == 0.0 {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    FRAC_1_SQRT_PI * (-x * x).exp() * f
}

pub(crate) fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return -erf(-x);
    }
    if x < ERF_SPLIT {
        erf_series(x)
    } else {
        1.0 - erfc_cf(x)
    }
}

pub(crate) fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < ERF_SPLIT {
        1.0 - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

/// Standard normal density φ(x).
pub(crate) fn std_normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.3989422804014327;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF Φ(x) = ½ erfc(−x/√2).
pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail Φ(−x) = ½ erfc(x/√2), accurate for large x.
pub(crate) fn std_normal_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Rational initial guess for Φ⁻¹ (Acklam's approximation, |rel err| < 1.2e-9).
/// Callers polish with Newton steps on the high-precision CDF.
pub(crate) fn quantile_initial(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        q * (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5])
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
