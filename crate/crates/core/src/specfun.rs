//! Closed-form layer: modified Bessel functions `K0`, `K1`, the Green's
//! function of `-Δ + λ` on the plane and the renormalized boundary constant
//! `θ_λ` that every charge-dependent energy term goes through.

use std::f64::consts::PI;

use thiserror::Error;

/// Euler–Mascheroni constant, 20 significant digits.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_61;

/// Arguments above this return zero with the underflow flag raised.
pub const UNDERFLOW_THRESHOLD: f64 = 700.0;

const SERIES_CUTOFF: f64 = 2.0;
const MAX_TERMS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SpecfunError {
    #[error("{what} requires a positive argument, got {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("{what} overflows for argument {value}")]
    Overflow { what: &'static str, value: f64 },
}

/// A Bessel value together with the tail-underflow flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselValue {
    pub value: f64,
    pub underflow: bool,
}

fn check_positive(what: &'static str, x: f64) -> Result<(), SpecfunError> {
    if x > 0.0 && !x.is_nan() {
        Ok(())
    } else {
        Err(SpecfunError::Domain { what, value: x })
    }
}

/// Power series around the origin, valid (and used) for `0 < x <= 2`.
fn k01_series(x: f64) -> (f64, f64) {
    let t = 0.25 * x * x;
    let log_term = (0.5 * x).ln() + EULER_GAMMA;

    // I0, I1 and the harmonic-number weighted companion sums.
    let mut i0 = 1.0;
    let mut i1_sum = 1.0;
    let mut k0_tail = 0.0;
    let mut k1_tail = 1.0; // k = 0 term: (H_0 + H_1) / (0! 1!) = 1
    let mut term0 = 1.0; // t^k / (k!)^2
    let mut term1 = 1.0; // t^k / (k! (k+1)!)
    let mut harmonic = 0.0; // H_k
    for k in 1..MAX_TERMS {
        let kf = k as f64;
        term0 *= t / (kf * kf);
        term1 *= t / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        let harmonic_next = harmonic + 1.0 / (kf + 1.0);
        i0 += term0;
        i1_sum += term1;
        k0_tail += harmonic * term0;
        k1_tail += (harmonic + harmonic_next) * term1;
        if term0 < 1e-18 * i0 && term1 < 1e-18 * i1_sum {
            break;
        }
    }
    let i1 = 0.5 * x * i1_sum;
    let k0 = -log_term * i0 + k0_tail;
    let k1 = 1.0 / x + log_term * i1 - 0.25 * x * k1_tail;
    (k0, k1)
}

/// Steed's continued fraction (Temme / Thompson–Barnett), order zero,
/// valid for `x >= 2`.
fn k01_continued_fraction(x: f64) -> (f64, f64) {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_TERMS {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

fn k01(x: f64) -> (f64, f64) {
    if x <= SERIES_CUTOFF {
        k01_series(x)
    } else {
        k01_continued_fraction(x)
    }
}

/// `K0(x)` with the underflow flag.
pub fn bessel_k0_flagged(x: f64) -> Result<BesselValue, SpecfunError> {
    check_positive("bessel_k0", x)?;
    if x > UNDERFLOW_THRESHOLD {
        return Ok(BesselValue { value: 0.0, underflow: true });
    }
    Ok(BesselValue { value: k01(x).0, underflow: false })
}

/// `K1(x)` with the underflow flag.
pub fn bessel_k1_flagged(x: f64) -> Result<BesselValue, SpecfunError> {
    check_positive("bessel_k1", x)?;
    if x > UNDERFLOW_THRESHOLD {
        return Ok(BesselValue { value: 0.0, underflow: true });
    }
    Ok(BesselValue { value: k01(x).1, underflow: false })
}

/// Modified Bessel function of the second kind, order zero.
pub fn bessel_k0(x: f64) -> Result<f64, SpecfunError> {
    bessel_k0_flagged(x).map(|v| v.value)
}

/// Modified Bessel function of the second kind, order one.
pub fn bessel_k1(x: f64) -> Result<f64, SpecfunError> {
    bessel_k1_flagged(x).map(|v| v.value)
}

/// Both orders at once; the two share all of their work.
pub fn bessel_k01(x: f64) -> Result<(f64, f64), SpecfunError> {
    check_positive("bessel_k01", x)?;
    if x > UNDERFLOW_THRESHOLD {
        return Ok((0.0, 0.0));
    }
    Ok(k01(x))
}

/// `θ_λ = (log(√λ / 2) + γ) / (2π)`.
pub fn theta(lambda: f64) -> Result<f64, SpecfunError> {
    check_positive("theta", lambda)?;
    let value = ((0.5 * lambda.sqrt()).ln() + EULER_GAMMA) / (2.0 * PI);
    if cfg!(feature = "theta-sign-mutation") {
        Ok(-value)
    } else {
        Ok(value)
    }
}

/// Inverse of [`theta`]: `λ = 4 exp(4πt − 2γ)`.
pub fn lambda_for_theta(t: f64) -> Result<f64, SpecfunError> {
    let t = if cfg!(feature = "theta-sign-mutation") { -t } else { t };
    let exponent = 4.0 * PI * t - 2.0 * EULER_GAMMA;
    let value = 4.0 * exponent.exp();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SpecfunError::Overflow { what: "lambda_for_theta", value: t })
    }
}

/// Green's function of `-Δ + λ` on the plane: `K0(√λ r) / (2π)`.
pub fn green_value(lambda: f64, r: f64) -> Result<f64, SpecfunError> {
    check_positive("green_value (lambda)", lambda)?;
    check_positive("green_value (r)", r)?;
    Ok(bessel_k0(lambda.sqrt() * r)? / (2.0 * PI))
}

/// Radial derivative of the Green's function: `-√λ K1(√λ r) / (2π)`.
pub fn green_derivative(lambda: f64, r: f64) -> Result<f64, SpecfunError> {
    check_positive("green_derivative (lambda)", lambda)?;
    check_positive("green_derivative (r)", r)?;
    let k = lambda.sqrt();
    Ok(-k * bessel_k1(k * r)? / (2.0 * PI))
}

/// `‖G_λ‖₂² = 1 / (4πλ)`.
pub fn green_l2_norm_sq(lambda: f64) -> Result<f64, SpecfunError> {
    check_positive("green_l2_norm_sq", lambda)?;
    Ok(1.0 / (4.0 * PI * lambda))
}
