//! Exact multiple sums by dynamic programming, and their limit predictors.
//!
//! With `j_0 = 0` and a gap `n0 ≥ 1`,
//!
//! ```text
//! Φ(n, m) = Σ_{1 ≤ j_1 < … < j_m ≤ n, j_i − j_{i−1} ≥ n0} ∏_i 1/D(j_i − j_{i−1})
//! ```
//!
//! satisfies `Φ(n, m) = Σ_{j=n0}^{n−(m−1)n0} Φ(n−j, m−1) / D(j)` with
//! `Φ(·, 0) ≡ 1`, so each fold is a truncated convolution of the previous
//! prefix table with `1/D`.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RhoKernel;
use crate::numeric::{csum, CompensatedSum};
use crate::special::{self, TailSum};

type WeightFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum WeightFamily {
    /// `D(n) = scale · n^exponent`
    Power { scale: f64, exponent: f64 },
    /// `D(n) = (n + shift)^exponent`
    ShiftedPower { shift: f64, exponent: f64 },
    /// `D(n) = λ(m, s, n)`, held at `λ(m, s, 𝒪_m)` below `𝒪_m`.
    IteratedLog { m: u32, s: f64, floor: u64 },
    Custom { label: String, generator: WeightFn },
}

impl fmt::Debug for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Power { scale, exponent } => write!(f, "Power({scale}·n^{exponent})"),
            Self::ShiftedPower { shift, exponent } => write!(f, "ShiftedPower((n+{shift})^{exponent})"),
            Self::IteratedLog { m, s, .. } => write!(f, "IteratedLog(m={m}, s={s})"),
            Self::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

/// A distance weight `D(n) > 0` with its metadata.
#[derive(Clone, Debug)]
pub struct WeightSequence {
    family: WeightFamily,
    summable: bool,
    rv_index: Option<f64>,
    gap: usize,
}

impl WeightSequence {
    /// `D(n) = scale · n^exponent`.
    pub fn power(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale > 0.0) || !exponent.is_finite() {
            return Err(Error::InvalidWeight(format!("scale·n^p needs scale > 0 (scale={scale}, p={exponent})")));
        }
        Ok(Self::from_family(WeightFamily::Power { scale, exponent }, exponent > 1.0))
    }

    /// `D(n) = (n + shift)^exponent`, e.g. `(1+n)²` for the critical
    /// geometric Galton–Watson return kernel.
    pub fn shifted_power(shift: f64, exponent: f64) -> Result<Self> {
        if !(shift > -1.0) || !exponent.is_finite() {
            return Err(Error::InvalidWeight(format!("(n+c)^p needs c > -1 (c={shift}, p={exponent})")));
        }
        Ok(Self::from_family(WeightFamily::ShiftedPower { shift, exponent }, exponent > 1.0))
    }

    /// `D(n) = λ(m, s, n)`; indices below `𝒪_m` reuse the value at `𝒪_m`.
    pub fn iterated_log(m: u32, s: f64) -> Result<Self> {
        let floor = special::script_o(m)?;
        Ok(Self::from_family(WeightFamily::IteratedLog { m, s, floor }, s > 1.0))
    }

    /// User-supplied weight. `summable` is taken on trust.
    pub fn custom<F>(label: impl Into<String>, generator: F, summable: bool) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        Self::from_family(
            WeightFamily::Custom { label: label.into(), generator: Arc::new(generator) },
            summable,
        )
    }

    fn from_family(family: WeightFamily, summable: bool) -> Self {
        Self { family, summable, rv_index: None, gap: 1 }
    }

    /// Minimum spacing `n0` between consecutive indices (and of `j_1` from 0).
    pub fn with_gap(mut self, gap: usize) -> Self {
        self.gap = gap.max(1);
        self
    }

    /// Declares `S(n) = Σ_{i≤n} 1/D(i)` regularly varying with index τ.
    pub fn with_rv_index(mut self, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Parameter(format!("regular-variation index must lie in [0,1], got {tau}")));
        }
        self.rv_index = Some(tau);
        Ok(self)
    }

    pub fn family(&self) -> &WeightFamily {
        &self.family
    }

    pub fn gap(&self) -> usize {
        self.gap
    }

    pub fn is_summable(&self) -> bool {
        self.summable
    }

    pub fn rv_index(&self) -> Option<f64> {
        self.rv_index
    }

    pub fn label(&self) -> String {
        format!("{:?}, n0={}", self.family, self.gap)
    }

    /// `D(n)` for `n ≥ 1`.
    pub fn weight(&self, n: usize) -> f64 {
        let x = n as f64;
        match &self.family {
            WeightFamily::Power { scale, exponent } => scale * x.powf(*exponent),
            WeightFamily::ShiftedPower { shift, exponent } => (x + shift).powf(*exponent),
            WeightFamily::IteratedLog { m, s, floor } => {
                special::lambda_weight_real(*m, *s, (n as u64).max(*floor) as f64)
            }
            WeightFamily::Custom { generator, .. } => generator(n),
        }
    }

    /// `1/D(n)`.
    #[inline]
    pub fn reciprocal(&self, n: usize) -> f64 {
        1.0 / self.weight(n)
    }

    /// `1/D(n)` for n in `0..=n_max`, zero below the gap.
    pub fn gapped_reciprocals(&self, n_max: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n_max + 1];
        for (n, slot) in out.iter_mut().enumerate().skip(self.gap) {
            let d = self.weight(n);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidWeight(format!("D({n}) = {d} is not a positive real")));
            }
            *slot = 1.0 / d;
        }
        Ok(out)
    }

    /// `S(n) = Σ_{i=1}^n 1/D(i)` (no gap).
    pub fn partial_sum(&self, n: usize) -> f64 {
        csum((1..=n).map(|i| self.reciprocal(i)))
    }

    /// `Σ_{n ≥ n0} 1/D(n)`, certified, for the built-in summable families.
    pub fn zeta(&self, tol: f64) -> Result<TailSum> {
        if !self.summable {
            return Err(Error::NonConvergent(format!("{} is not summable", self.label())));
        }
        let n0 = self.gap as u64;
        match &self.family {
            WeightFamily::Power { scale, exponent } => {
                let t = special::zeta_tail_with(0, *exponent, n0, tol * scale, special::DEFAULT_MAX_TERMS)?;
                Ok(TailSum { value: t.value / scale, truncation_bound: t.truncation_bound / scale })
            }
            WeightFamily::ShiftedPower { shift, exponent } if shift.fract() == 0.0 && *shift >= 0.0 => {
                // Σ_{n≥n0} (n+c)^{-p} = Σ_{i≥n0+c} i^{-p}
                special::zeta_tail_with(0, *exponent, n0 + *shift as u64, tol, special::DEFAULT_MAX_TERMS)
            }
            WeightFamily::IteratedLog { m, s, floor } => {
                // indices below 𝒪_m carry the clamped value
                let start = n0.max(*floor);
                let t = special::zeta_tail_with(*m, *s, start, tol, special::DEFAULT_MAX_TERMS)?;
                let head = (n0..start).map(|i| self.reciprocal(i as usize)).sum::<f64>();
                Ok(TailSum { value: t.value + head, truncation_bound: t.truncation_bound })
            }
            _ => Err(Error::Unsupported(format!("no certified tail bound for {}", self.label()))),
        }
    }
}

/// Result of an exact multiple-sum evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiSumResult {
    pub n: usize,
    pub m: usize,
    pub value: f64,
    /// True when a gap `n0 > 1` restricts the index tuples.
    pub constrained: bool,
}

/// How each fold's convolution is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convolution {
    /// O(n²) per fold, compensated, increasing-index order. Reference path.
    Direct,
    /// O(n log n) per fold via FFT; accurate to roughly 1e-13 relative to the
    /// table's largest entry.
    Fft,
}

/// Prefix tables `Φ(n', q)` for `0 ≤ n' ≤ n`, `0 ≤ q ≤ m`.
#[derive(Debug, Clone)]
pub struct PhiTable {
    gap: usize,
    levels: Vec<Vec<f64>>,
}

impl PhiTable {
    pub fn build(weights: &WeightSequence, n: usize, m: usize, method: Convolution) -> Result<Self> {
        let a = weights.gapped_reciprocals(n)?;
        let mut levels = Vec::with_capacity(m + 1);
        levels.push(vec![1.0; n + 1]);
        for q in 1..=m {
            let prev = &levels[q - 1];
            let next = match method {
                Convolution::Direct => fold_direct(&a, prev, weights.gap, q),
                Convolution::Fft => fold_fft(&a, prev, weights.gap, q),
            };
            levels.push(next);
        }
        Ok(Self { gap: weights.gap, levels })
    }

    pub fn horizon(&self) -> usize {
        self.levels[0].len() - 1
    }

    pub fn folds(&self) -> usize {
        self.levels.len() - 1
    }

    /// `Φ(n, q)`, or None outside the table.
    pub fn value(&self, n: usize, q: usize) -> Option<f64> {
        self.levels.get(q).and_then(|l| l.get(n)).copied()
    }

    pub fn level(&self, q: usize) -> &[f64] {
        &self.levels[q]
    }

    pub fn gap(&self) -> usize {
        self.gap
    }
}

/// First feasible horizon for q folds with gap n0.
#[inline]
fn first_feasible(gap: usize, q: usize) -> usize {
    gap * q
}

/// `Σ_{j=n0}^{n−(q−1)n0} a(j) Φ(n−j, q−1)` for a single n.
fn fold_point(a: &[f64], prev: &[f64], gap: usize, q: usize, n: usize) -> f64 {
    if n < first_feasible(gap, q) {
        return 0.0;
    }
    let upper = n - (q - 1) * gap;
    let mut acc = CompensatedSum::new();
    for j in gap..=upper {
        acc.add(a[j] * prev[n - j]);
    }
    acc.value()
}

fn fold_direct(a: &[f64], prev: &[f64], gap: usize, q: usize) -> Vec<f64> {
    (0..prev.len()).map(|n| fold_point(a, prev, gap, q, n)).collect()
}

fn fold_fft(a: &[f64], prev: &[f64], gap: usize, q: usize) -> Vec<f64> {
    let len = prev.len();
    // Φ(·, q−1) as a point mass density: φ(0) = Φ(0), φ(n) = Φ(n) − Φ(n−1).
    // Convolving densities then re-accumulating avoids summing a growing table.
    let size = (2 * len).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut fa: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); size];
    for (slot, &x) in fa.iter_mut().zip(a.iter()) {
        slot.re = x;
    }
    let mut fb: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); size];
    let mut last = 0.0;
    for (slot, &x) in fb.iter_mut().zip(prev.iter()) {
        slot.re = x - last;
        last = x;
    }
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;

    let floor = first_feasible(gap, q);
    let mut out = vec![0.0; len];
    let mut acc = CompensatedSum::new();
    for (n, slot) in out.iter_mut().enumerate() {
        if n >= floor {
            acc.add(fa[n].re * scale);
            *slot = acc.value().max(0.0);
        }
    }
    out
}

/// `Φ(n, m)` exactly, by the reference recursion.
///
/// Folds `1..m` are tabulated with the direct convolution; the last fold is
/// evaluated only at `n`. Returns zero when `n < m·n0`. `m = 0` gives the
/// empty product 1.
pub fn phi(weights: &WeightSequence, n: usize, m: usize) -> Result<MultiSumResult> {
    phi_with(weights, n, m, Convolution::Direct)
}

/// `Φ(n, m)` with the chosen fold method for all but the final fold.
pub fn phi_with(weights: &WeightSequence, n: usize, m: usize, method: Convolution) -> Result<MultiSumResult> {
    let constrained = weights.gap > 1;
    if m == 0 {
        return Ok(MultiSumResult { n, m, value: 1.0, constrained });
    }
    if n < first_feasible(weights.gap, m) {
        return Ok(MultiSumResult { n, m, value: 0.0, constrained });
    }
    let table = PhiTable::build(weights, n, m - 1, method)?;
    let a = weights.gapped_reciprocals(n)?;
    let value = fold_point(&a, table.level(m - 1), weights.gap, m, n);
    Ok(MultiSumResult { n, m, value, constrained })
}

/// `U_n(k, m, n0, s)`: the k-fold sum with weights `λ(m, s, ·)` and gap n0.
pub fn u_sum(k: usize, m: u32, n0: u64, s: f64, n: usize) -> Result<MultiSumResult> {
    let threshold = special::script_o(m)?;
    if n0 < threshold {
        return Err(Error::Domain(format!("U_n needs n0 ≥ 𝒪_{m} = {threshold}, got {n0}")));
    }
    let weights = WeightSequence::iterated_log(m, s)?.with_gap(n0 as usize);
    phi(&weights, n, k)
}

/// Prefix tables `Ψ_{n'}(q)` of the joint-success sums of a kernel.
#[derive(Debug, Clone)]
pub struct PsiTable {
    /// `prefix[q-1][n'] = Ψ_{n'}(q)`
    prefix: Vec<Vec<f64>>,
}

impl PsiTable {
    /// Builds `T(j,1) = r(0,j)`, `T(j,q) = Σ_{i<j} T(i,q−1) r(i,j)` for
    /// `j ≤ n`, `q ≤ m`, and accumulates `Ψ_{n'}(q) = Σ_{j≤n'} T(j,q)`.
    ///
    /// Every queried probability must lie in `(0, 1]`.
    pub fn build(kernel: &dyn RhoKernel, n: usize, m: usize) -> Result<Self> {
        let mut t = vec![vec![0.0; n + 1]; m];
        let mut row = vec![0.0; n + 1];
        for j in 1..=n {
            if m >= 2 {
                kernel.success_row(j, &mut row[..j]);
                check_row(&row[..j], j)?;
            } else {
                row[0] = kernel.success_prob(0, j);
                check_row(&row[..1], j)?;
            }
            t[0][j] = row[0];
            for q in 2..=m.min(j) {
                let prev = &t[q - 2];
                let mut acc = CompensatedSum::new();
                for i in (q - 1)..j {
                    acc.add(prev[i] * row[i]);
                }
                t[q - 1][j] = acc.value();
            }
        }
        let prefix = t
            .into_iter()
            .map(|level| {
                let mut acc = CompensatedSum::new();
                level
                    .into_iter()
                    .map(|x| {
                        acc.add(x);
                        acc.value()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { prefix })
    }

    pub fn horizon(&self) -> usize {
        self.prefix.first().map_or(0, |l| l.len() - 1)
    }

    pub fn max_order(&self) -> usize {
        self.prefix.len()
    }

    /// `Ψ_n(q)`; zero when `q > n`.
    pub fn value(&self, n: usize, q: usize) -> f64 {
        assert!(q >= 1 && q <= self.prefix.len(), "order {q} not tabulated");
        self.prefix[q - 1][n]
    }
}

fn check_row(row: &[f64], j: usize) -> Result<()> {
    for (i, &p) in row.iter().enumerate() {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Range(format!("success probability r({i},{j}) = {p} is outside (0,1]")));
        }
    }
    Ok(())
}

/// `Ψ_n(m) = Σ_{1≤j_1<…<j_m≤n} r(0,j_1) r(j_1,j_2) ⋯ r(j_{m−1},j_m)`.
pub fn psi_general(kernel: &dyn RhoKernel, n: usize, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Parameter("Ψ_n(m) needs m ≥ 1".into()));
    }
    if m > n {
        return Ok(0.0);
    }
    Ok(PsiTable::build(kernel, n, m)?.value(n, m))
}

/// Growth descriptor of a predicted limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scaling {
    /// The sum itself converges.
    Constant,
    /// `S(n)^m` with `S(n) = Σ_{i≤n} 1/D(i)`.
    PartialSumPower { power: u32 },
    /// `(log n)^k`
    LogPower { power: u32 },
    /// `n^exponent`
    NPower { exponent: f64 },
    /// `(log_depth n)^power`
    IteratedLogPower { depth: u32, power: u32 },
}

impl Scaling {
    /// Value of the scaling at n. `partial_sum` is `S(n)`, needed only for
    /// [`Scaling::PartialSumPower`].
    pub fn at(&self, n: usize, partial_sum: Option<f64>) -> Result<f64> {
        let x = n as f64;
        Ok(match *self {
            Scaling::Constant => 1.0,
            Scaling::PartialSumPower { power } => {
                let s = partial_sum.ok_or_else(|| Error::Parameter("S(n) required for S(n)^m scaling".into()))?;
                s.powi(power as i32)
            }
            Scaling::LogPower { power } => x.ln().powi(power as i32),
            Scaling::NPower { exponent } => x.powf(exponent),
            Scaling::IteratedLogPower { depth, power } => special::iterated_log(depth, x).powi(power as i32),
        })
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scaling::Constant => write!(f, "constant"),
            Scaling::PartialSumPower { power } => write!(f, "S(n)^{power}"),
            Scaling::LogPower { power } => write!(f, "(log n)^{power}"),
            Scaling::NPower { exponent } => write!(f, "n^{exponent}"),
            Scaling::IteratedLogPower { depth, power } => write!(f, "(log_{depth} n)^{power}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPrediction {
    pub scaling: Scaling,
    pub coefficient: f64,
}

impl AsymptoticPrediction {
    /// `coefficient · scaling(n)`
    pub fn predicted_value(&self, n: usize, partial_sum: Option<f64>) -> Result<f64> {
        Ok(self.coefficient * self.scaling.at(n, partial_sum)?)
    }
}

/// Cases of the iterated-logarithm family `U_n(k, m, n0, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IteratedLogCase {
    /// σ > 1: `U_n → ζ(m,σ)^k`.
    Convergent { m: u32, sigma: f64, n0: u64 },
    /// σ = 1: `U_n ~ (log_{m+1} n)^k`.
    Critical { m: u32 },
    /// 0 ≤ σ < 1, m ≥ 1: `U_n ~ (log_m n)^k / (1−σ)^k`.
    SubcriticalLog { m: u32, sigma: f64 },
    /// 0 ≤ σ < 1, m = 0: `U_n ~ c · n^{k(1−σ)}`.
    SubcriticalPower { sigma: f64 },
}

#[derive(Debug, Clone)]
pub enum Regime {
    /// `Σ 1/D < ∞`: `Φ(n, m) → λ^m` with `λ = Σ_{n≥n0} 1/D(n)`.
    Summable(WeightSequence),
    /// `S(n)` regularly varying with index τ: `Φ(n,m)/S(n)^m → λ_τ^{−(m−1)}`.
    RegularlyVarying { tau: f64 },
    /// Power-type kernel sums: `Ψ_n(k)/(log n)^k → ∏_{j<k}(j+α) / (k! α^k β^k)`.
    /// β = 1 is the plain multiple sum with weights `j_s^{1−α}(j_s^α − j_{s−1}^α)`.
    Power { alpha: f64, beta: f64 },
    IteratedLog(IteratedLogCase),
}

/// Limit predictor for the order-`order` multiple sum in the given regime.
pub fn predict(regime: &Regime, order: usize) -> Result<AsymptoticPrediction> {
    if order == 0 {
        return Err(Error::Parameter("fold count must be ≥ 1".into()));
    }
    let k = order as i32;
    match regime {
        Regime::Summable(w) => {
            let lambda = w.zeta(special::DEFAULT_TAIL_TOLERANCE)?.value;
            Ok(AsymptoticPrediction { scaling: Scaling::Constant, coefficient: lambda.powi(k) })
        }
        Regime::RegularlyVarying { tau } => {
            let l = special::lambda_sigma(*tau)?;
            Ok(AsymptoticPrediction {
                scaling: Scaling::PartialSumPower { power: order as u32 },
                coefficient: l.powi(-(k - 1)),
            })
        }
        Regime::Power { alpha, beta } => {
            if !(*alpha > 0.0 && *beta > 0.0) {
                return Err(Error::Parameter(format!("power regime needs α, β > 0 (α={alpha}, β={beta})")));
            }
            let numerator = special::rising_factorial(*alpha, order as u32);
            let factorial = special::rising_factorial(1.0, order as u32);
            Ok(AsymptoticPrediction {
                scaling: Scaling::LogPower { power: order as u32 },
                coefficient: numerator / (factorial * (alpha * beta).powi(k)),
            })
        }
        Regime::IteratedLog(case) => predict_iterated_log(case, order),
    }
}

fn predict_iterated_log(case: &IteratedLogCase, order: usize) -> Result<AsymptoticPrediction> {
    let k = order as i32;
    match *case {
        IteratedLogCase::Convergent { m, sigma, n0 } => {
            let z = special::zeta_tail(m, sigma, n0)?;
            Ok(AsymptoticPrediction { scaling: Scaling::Constant, coefficient: z.value.powi(k) })
        }
        IteratedLogCase::Critical { m } => Ok(AsymptoticPrediction {
            scaling: Scaling::IteratedLogPower { depth: m + 1, power: order as u32 },
            coefficient: 1.0,
        }),
        IteratedLogCase::SubcriticalLog { m, sigma } => {
            if m == 0 || !(0.0..1.0).contains(&sigma) {
                return Err(Error::Unsupported(format!("log-scaling case needs m ≥ 1, 0 ≤ σ < 1 (m={m}, σ={sigma})")));
            }
            Ok(AsymptoticPrediction {
                scaling: Scaling::IteratedLogPower { depth: m, power: order as u32 },
                coefficient: (1.0 - sigma).powi(-k),
            })
        }
        IteratedLogCase::SubcriticalPower { sigma } => {
            if !(0.0..1.0).contains(&sigma) {
                return Err(Error::Unsupported(format!("power-scaling case needs 0 ≤ σ < 1, got {sigma}")));
            }
            let g = special::gamma_fn(2.0 - sigma)? * special::gamma_fn(1.0 - sigma)?
                / special::gamma_fn(3.0 - 2.0 * sigma)?;
            Ok(AsymptoticPrediction {
                scaling: Scaling::NPower { exponent: order as f64 * (1.0 - sigma) },
                coefficient: g.powi(k - 1) / (1.0 - sigma),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Enumerates every gap-feasible increasing tuple. Independent of the
    /// recursion: products are formed from scratch for each tuple.
    fn brute_phi(w: &WeightSequence, n: usize, m: usize) -> f64 {
        fn rec(w: &WeightSequence, n: usize, left: usize, last: usize, prod: f64, out: &mut Vec<f64>) {
            if left == 0 {
                out.push(prod);
                return;
            }
            for j in (last + w.gap())..=n {
                rec(w, n, left - 1, j, prod / w.weight(j - last), out);
            }
        }
        let mut terms = Vec::new();
        rec(w, n, m, 0, 1.0, &mut terms);
        terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        terms.iter().sum()
    }

    fn families() -> Vec<WeightSequence> {
        vec![
            WeightSequence::power(1.0, 1.0).unwrap(),
            WeightSequence::power(1.0, 2.0).unwrap(),
            WeightSequence::power(2.0, 0.5).unwrap(),
            WeightSequence::shifted_power(1.0, 2.0).unwrap(),
        ]
    }

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    #[test]
    fn phi_examples() {
        let d_n = WeightSequence::power(1.0, 1.0).unwrap();
        assert!((phi(&d_n, 3, 2).unwrap().value - 2.0).abs() < 1e-15);
        let sq = WeightSequence::shifted_power(1.0, 2.0).unwrap();
        let v = phi(&sq, 3, 1).unwrap().value;
        assert!((v - (0.25 + 1.0 / 9.0 + 1.0 / 16.0)).abs() < 1e-15);
        let gapped = d_n.clone().with_gap(2);
        let r = phi(&gapped, 3, 2).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.constrained);
        assert_eq!(phi(&gapped, 4, 2).unwrap().value, 0.25);
    }

    #[test]
    fn phi_matches_enumeration_on_small_horizons() {
        for w in families() {
            for gap in [1usize, 2] {
                let w = w.clone().with_gap(gap);
                for n in 1..=12 {
                    for m in 1..=4 {
                        let fast = phi(&w, n, m).unwrap().value;
                        let slow = brute_phi(&w, n, m);
                        assert!(rel(fast, slow) <= 1e-12, "{} n={n} m={m}: {fast} vs {slow}", w.label());
                    }
                }
            }
        }
    }

    #[test]
    fn table_and_single_point_agree() {
        let w = WeightSequence::power(2.0, 0.5).unwrap();
        let table = PhiTable::build(&w, 40, 3, Convolution::Direct).unwrap();
        for n in [0, 1, 5, 17, 40] {
            for m in 1..=3 {
                assert!(rel(table.value(n, m).unwrap(), phi(&w, n, m).unwrap().value) <= 1e-13);
            }
        }
    }

    #[test]
    fn fft_fold_tracks_direct_fold() {
        for w in families() {
            let w = w.with_gap(2);
            let direct = PhiTable::build(&w, 500, 3, Convolution::Direct).unwrap();
            let fft = PhiTable::build(&w, 500, 3, Convolution::Fft).unwrap();
            for q in 1..=3 {
                let scale = direct.level(q).iter().cloned().fold(0.0, f64::max);
                for n in 0..=500 {
                    let d = direct.value(n, q).unwrap();
                    let f = fft.value(n, q).unwrap();
                    assert!((d - f).abs() <= 1e-11 * scale.max(1.0), "q={q} n={n}");
                }
            }
        }
    }

    #[test]
    fn convolution_identity_against_independent_loop() {
        let w = WeightSequence::shifted_power(1.0, 2.0).unwrap().with_gap(2);
        for n in [9usize, 20, 33] {
            for m in 2..=4 {
                let lhs = phi(&w, n, m).unwrap().value;
                let lo = w.gap();
                let hi = n.saturating_sub((m - 1) * w.gap());
                let mut rhs = 0.0;
                for j in lo..=hi {
                    rhs += brute_phi(&w, n - j, m - 1) / w.weight(j);
                }
                assert!(rel(lhs, rhs) <= 1e-12, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn phi_is_nondecreasing_in_n() {
        let w = WeightSequence::power(2.0, 0.5).unwrap();
        let t = PhiTable::build(&w, 300, 3, Convolution::Direct).unwrap();
        for q in 1..=3 {
            for n in 1..=300 {
                assert!(t.value(n, q).unwrap() >= t.value(n - 1, q).unwrap());
            }
        }
    }

    #[test]
    fn u_sum_examples() {
        assert!((u_sum(1, 0, 1, 2.0, 2).unwrap().value - 1.25).abs() < 1e-15);
        assert!((u_sum(2, 0, 1, 2.0, 3).unwrap().value - 1.5).abs() < 1e-15);
        assert_eq!(u_sum(2, 0, 1, 2.0, 1).unwrap().value, 0.0);
        assert!(matches!(u_sum(1, 1, 1, 2.0, 10), Err(Error::Domain(_))));
        assert!(matches!(u_sum(1, 2, 2, 2.0, 10), Err(Error::Domain(_))));
        // m = 1 with n0 = 2: 1/(2 ln 2)
        let v = u_sum(1, 1, 2, 1.0, 2).unwrap().value;
        assert!((v - 1.0 / (2.0 * 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn predictor_examples() {
        let gw = WeightSequence::shifted_power(1.0, 2.0).unwrap();
        let p = predict(&Regime::Summable(gw), 3).unwrap();
        assert_eq!(p.scaling, Scaling::Constant);
        assert!((p.coefficient - (PI * PI / 6.0 - 1.0).powi(3)).abs() < 1e-9);

        let p = predict(&Regime::RegularlyVarying { tau: 0.5 }, 2).unwrap();
        assert_eq!(p.scaling, Scaling::PartialSumPower { power: 2 });
        assert!((p.coefficient - PI / 4.0).abs() < 1e-12);

        let p = predict(&Regime::Power { alpha: 1.0, beta: 1.0 }, 2).unwrap();
        assert_eq!(p.scaling, Scaling::LogPower { power: 2 });
        assert!((p.coefficient - 1.0).abs() < 1e-15);

        let p = predict(&Regime::Power { alpha: 2.0, beta: 1.0 }, 2).unwrap();
        assert!((p.coefficient - 6.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn predictor_paths_agree_on_pi() {
        // prpd(ii): Φ(n,2)/S(n)² → π/4 with S(n) ~ 2√n, i.e. Φ(n,2)/n → π
        let rv = predict(&Regime::RegularlyVarying { tau: 0.5 }, 2).unwrap();
        let via_rv = rv.coefficient * 4.0;
        let sl1 = predict(&Regime::IteratedLog(IteratedLogCase::SubcriticalPower { sigma: 0.5 }), 2).unwrap();
        assert_eq!(sl1.scaling, Scaling::NPower { exponent: 1.0 });
        assert!((via_rv - sl1.coefficient).abs() <= 1e-10);
        assert!((via_rv - PI).abs() <= 1e-10);
    }

    #[test]
    fn iterated_log_predictors() {
        let c = predict(&Regime::IteratedLog(IteratedLogCase::Convergent { m: 0, sigma: 2.0, n0: 1 }), 2).unwrap();
        assert!((c.coefficient - (PI * PI / 6.0).powi(2)).abs() < 1e-9);
        let c = predict(&Regime::IteratedLog(IteratedLogCase::Critical { m: 1 }), 3).unwrap();
        assert_eq!(c.scaling, Scaling::IteratedLogPower { depth: 2, power: 3 });
        let c = predict(&Regime::IteratedLog(IteratedLogCase::SubcriticalLog { m: 1, sigma: 0.5 }), 2).unwrap();
        assert!((c.coefficient - 4.0).abs() < 1e-15);
        assert!(predict(&Regime::IteratedLog(IteratedLogCase::SubcriticalLog { m: 0, sigma: 0.5 }), 2).is_err());
        assert!(predict(&Regime::IteratedLog(IteratedLogCase::SubcriticalPower { sigma: 1.0 }), 2).is_err());
        // k = 1: U_n/n^{1−σ} → 1/(1−σ)
        let c = predict(&Regime::IteratedLog(IteratedLogCase::SubcriticalPower { sigma: 0.25 }), 1).unwrap();
        assert!((c.coefficient - 1.0 / 0.75).abs() < 1e-15);
    }

    #[test]
    fn summable_zeta_respects_gap() {
        let w = WeightSequence::power(1.0, 2.0).unwrap().with_gap(2);
        let z = w.zeta(1e-10).unwrap();
        assert!((z.value - (PI * PI / 6.0 - 1.0)).abs() < 1e-9);
        assert!(WeightSequence::power(1.0, 1.0).unwrap().zeta(1e-10).is_err());
    }

    #[test]
    fn invalid_weights_are_rejected() {
        assert!(WeightSequence::power(0.0, 1.0).is_err());
        let bad = WeightSequence::custom("negative", |n| 1.0 - n as f64, false);
        assert!(matches!(phi(&bad, 4, 1), Err(Error::InvalidWeight(_))));
    }
}
