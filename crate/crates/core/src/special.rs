//! Special functions and certified tail sums.
//!
//! Logarithms are natural throughout. `log_m` is the m-fold iterated
//! logarithm with `log_0 x = x`.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Default absolute tolerance for [`zeta_tail`].
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;

/// Upper limit on the number of summed terms in [`zeta_tail`].
pub const DEFAULT_MAX_TERMS: u64 = 1 << 30;

// Lanczos approximation, g = 7, nine coefficients.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(z: f64) -> f64 {
    // z is the shifted argument x - 1
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    acc
}

/// Γ(x) for x > 0.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma_fn requires x > 0, got {x}")));
    }
    Ok(gamma_positive(x))
}

fn gamma_positive(x: f64) -> f64 {
    if x < 0.5 {
        // reflection keeps the Lanczos sum in its accurate range
        PI / ((PI * x).sin() * gamma_positive(1.0 - x))
    } else {
        let z = x - 1.0;
        let t = z + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z)
    }
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_positive(x))
}

fn ln_gamma_positive(x: f64) -> f64 {
    if x < 0.5 {
        (PI / (PI * x).sin()).ln() - ln_gamma_positive(1.0 - x)
    } else {
        let z = x - 1.0;
        let t = z + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln()
    }
}

/// `λ_σ = Γ(1+2σ) / (σ Γ(σ) Γ(1+σ))` with `λ_0 = 1`.
///
/// Evaluated as `Γ(1+2σ)/Γ(1+σ)²`, which is the same quantity and is
/// continuous at σ = 0.
pub fn lambda_sigma(sigma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::Domain(format!("lambda_sigma requires σ ∈ [0,1], got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(1.0);
    }
    if sigma == 1.0 {
        return Ok(2.0);
    }
    let g1 = gamma_positive(1.0 + sigma);
    Ok(gamma_positive(1.0 + 2.0 * sigma) / (g1 * g1))
}

/// m-fold iterated natural logarithm of a real argument.
///
/// Returns NaN or -inf when an intermediate logarithm leaves the domain.
pub fn iterated_log(m: u32, x: f64) -> f64 {
    (0..m).fold(x, |acc, _| acc.ln())
}

/// `𝒪_m = min{n ≥ 1 : log_m n > 0}`.
///
/// Only m ≤ 4 is representable: 𝒪_5 is about `exp(3.8e6)`.
pub fn script_o(m: u32) -> Result<u64> {
    // log_m x > 0 exactly when x > c_m, with c_0 = 0 and c_m = exp(c_{m-1}).
    let mut c = 0.0_f64;
    for _ in 0..m {
        c = c.exp();
    }
    if !c.is_finite() || c >= 2f64.powi(53) {
        return Err(Error::Domain(format!("𝒪_{m} does not fit in a 64-bit integer")));
    }
    let mut n = (c.floor() as u64).max(1);
    // correct for rounding in c
    while n > 1 && iterated_log(m, (n - 1) as f64) > 0.0 {
        n -= 1;
    }
    while !(iterated_log(m, n as f64) > 0.0) {
        n += 1;
    }
    Ok(n)
}

/// `λ(m,s,x) = (log_m x)^s ∏_{j<m} log_j x` for real x in the domain.
pub(crate) fn lambda_weight_real(m: u32, s: f64, x: f64) -> f64 {
    let mut prod = 1.0;
    let mut l = x;
    for _ in 0..m {
        prod *= l;
        l = l.ln();
    }
    prod * l.powf(s)
}

/// `λ(m,s,i) = (log_m i)^s ∏_{j=0}^{m-1} log_j i`, for `i ≥ 𝒪_m`.
pub fn lambda_weight(m: u32, s: f64, i: u64) -> Result<f64> {
    let threshold = script_o(m)?;
    if i < threshold {
        return Err(Error::Domain(format!(
            "lambda_weight(m={m}) requires i ≥ 𝒪_{m} = {threshold}, got {i}"
        )));
    }
    Ok(lambda_weight_real(m, s, i as f64))
}

/// A sum with a certified bound on the distance to its exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSum {
    pub value: f64,
    pub truncation_bound: f64,
}

impl TailSum {
    pub fn contains(&self, exact: f64) -> bool {
        (self.value - exact).abs() <= self.truncation_bound
    }
}

/// `∫_x^∞ du / λ(m,s,u)` for s > 1.
fn tail_integral(m: u32, s: f64, x: f64) -> f64 {
    iterated_log(m, x).powf(1.0 - s) / (s - 1.0)
}

/// `ζ(m,s) = Σ_{i ≥ n0} 1/λ(m,s,i)` with the default tolerance.
pub fn zeta_tail(m: u32, s: f64, n0: u64) -> Result<TailSum> {
    zeta_tail_with(m, s, n0, DEFAULT_TAIL_TOLERANCE, DEFAULT_MAX_TERMS)
}

/// `ζ(m,s) = Σ_{i ≥ n0} 1/λ(m,s,i)` to absolute tolerance `tol`.
///
/// Terms `n0..=N` are summed directly. The summand is convex and decreasing
/// on `[𝒪_m, ∞)`, so the remaining tail lies between the trapezoid bound
/// `∫_{N+1}^∞ + f(N+1)/2` and the midpoint bound `∫_{N+1/2}^∞`. N is doubled
/// until half the bracket width is within `tol`.
pub fn zeta_tail_with(m: u32, s: f64, n0: u64, tol: f64, max_terms: u64) -> Result<TailSum> {
    if !(s > 1.0) {
        return Err(Error::NonConvergent(format!("ζ(m,s) needs s > 1, got s = {s}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let threshold = script_o(m)?;
    if n0 < threshold {
        return Err(Error::Domain(format!(
            "zeta_tail(m={m}) requires n0 ≥ 𝒪_{m} = {threshold}, got {n0}"
        )));
    }
    let f = |x: f64| 1.0 / lambda_weight_real(m, s, x);

    let mut partial = CompensatedSum::new();
    let mut next = n0;
    let mut last = n0.saturating_add(63);
    loop {
        while next <= last {
            partial.add(f(next as f64));
            next += 1;
        }
        let lo = tail_integral(m, s, (last + 1) as f64) + 0.5 * f((last + 1) as f64);
        let hi = tail_integral(m, s, last as f64 + 0.5);
        let value = partial.value() + 0.5 * (lo + hi);
        let bound = 0.5 * (hi - lo).abs() + 4.0 * f64::EPSILON * value.abs();
        if bound <= tol {
            return Ok(TailSum { value, truncation_bound: bound });
        }
        let terms = last - n0 + 1;
        if terms >= max_terms {
            return Err(Error::NonConvergent(format!(
                "tolerance {tol:e} not reached within {max_terms} terms (bound {bound:e})"
            )));
        }
        last = n0 + (2 * terms).min(max_terms) - 1;
    }
}

/// Rising factorial `α(α+1)⋯(α+k−1)`; the empty product is one.
///
/// Generic so exact rational types can reuse it.
pub fn rising_factorial<T>(alpha: T, k: u32) -> T
where
    T: Clone + One + Add<Output = T> + Mul<Output = T>,
{
    let mut acc = T::one();
    let mut term = alpha;
    for _ in 0..k {
        acc = acc * term.clone();
        term = term + T::one();
    }
    acc
}

/// `E ξ^k = Γ(k+α)/Γ(α)` for `ξ ~ Gamma(α, 1)`.
pub fn gamma_moment(alpha: f64, k: u32) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("gamma_moment requires α > 0, got {alpha}")));
    }
    Ok(rising_factorial(alpha, k))
}

const INCGAMMA_MAX_ITER: usize = 1000;

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    Ok(gamma_pq(a, x)?.0)
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    Ok(gamma_pq(a, x)?.1)
}

fn gamma_pq(a: f64, x: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(Error::Domain(format!("incomplete gamma needs a > 0, x ≥ 0 (a={a}, x={x})")));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let log_prefactor = a * x.ln() - x - ln_gamma_positive(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..INCGAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                let p = (sum.ln() + log_prefactor).exp().min(1.0);
                return Ok((p, 1.0 - p));
            }
        }
        Err(Error::NonConvergent(format!("P({a}, {x}) series")))
    } else {
        // modified Lentz on the continued fraction for Q
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=INCGAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                let q = (h.ln() + log_prefactor).exp().min(1.0);
                return Ok((1.0 - q, q));
            }
        }
        Err(Error::NonConvergent(format!("Q({a}, {x}) continued fraction")))
    }
}
