//! Limit laws and empirical comparisons against them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::geo_limit_moments;
use crate::numeric::{csum, CompensatedSum};
use crate::simulate::ReplicateBatch;
use crate::special::{gamma_moment, gamma_p};

/// Smallest replicate count accepted by [`moment_zscores`].
pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LimitLaw {
    /// `P(ξ = i) = (1 − p)^i p` on `{0, 1, …}`.
    Geometric { p: f64 },
    /// Density `λ e^{−λx}`.
    Exponential { rate: f64 },
    /// Density `x^{α−1} e^{−x} / Γ(α)` (rate 1).
    Gamma { shape: f64 },
}

impl LimitLaw {
    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Parameter(format!("geometric p = {p} must lie in (0,1)")));
        }
        Ok(Self::Geometric { p })
    }

    /// `Geo(1/(ζ + 1))`, mean `ζ`.
    pub fn geometric_with_mean(zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::Parameter(format!("geometric mean ζ = {zeta} must be positive")));
        }
        Self::geometric(1.0 / (zeta + 1.0))
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Parameter(format!("exponential rate {rate} must be positive")));
        }
        Ok(Self::Exponential { rate })
    }

    pub fn gamma(shape: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::Parameter(format!("gamma shape {shape} must be positive")));
        }
        Ok(Self::Gamma { shape })
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::Geometric { .. })
    }

    /// Probability mass at integer `i` (geometric only; zero for continuous laws).
    pub fn pmf(&self, i: u64) -> f64 {
        match *self {
            Self::Geometric { p } => p * ((i as f64) * (-p).ln_1p()).exp(),
            _ => 0.0,
        }
    }

    /// Density at `x` (continuous laws only; zero for the geometric law).
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            Self::Geometric { .. } => 0.0,
            Self::Exponential { rate } => rate * (-rate * x).exp(),
            Self::Gamma { shape } => {
                if x == 0.0 {
                    return if shape < 1.0 {
                        f64::INFINITY
                    } else if shape == 1.0 {
                        1.0
                    } else {
                        0.0
                    };
                }
                let lg = crate::special::ln_gamma(shape).expect("shape > 0");
                ((shape - 1.0) * x.ln() - x - lg).exp()
            }
        }
    }

    /// `P(ξ ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            Self::Geometric { p } => -((x.floor() + 1.0) * (-p).ln_1p()).exp_m1(),
            Self::Exponential { rate } => -(-rate * x).exp_m1(),
            Self::Gamma { shape } => gamma_p(shape, x).expect("shape > 0, x ≥ 0"),
        }
    }

    /// `P(ξ < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match *self {
            Self::Geometric { .. } => {
                if x <= 0.0 {
                    0.0
                } else if x.fract() == 0.0 {
                    self.cdf(x - 1.0)
                } else {
                    self.cdf(x)
                }
            }
            _ => self.cdf(x),
        }
    }

    /// Smallest `x` with `cdf(x) ≥ u`, for `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile level {u} outside [0,1)")));
        }
        Ok(match *self {
            Self::Geometric { p } => {
                let mut i = ((-u).ln_1p() / (-p).ln_1p() - 1.0).ceil().max(0.0);
                // guard the rounding at exact lattice points
                while i > 0.0 && self.cdf(i - 1.0) >= u {
                    i -= 1.0;
                }
                while self.cdf(i) < u {
                    i += 1.0;
                }
                i
            }
            Self::Exponential { rate } => -(-u).ln_1p() / rate,
            Self::Gamma { shape } => {
                if u == 0.0 {
                    return Ok(0.0);
                }
                let mut hi = shape.max(1.0);
                while self.cdf(hi) < u {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                hi
            }
        })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Geometric { p } => (1.0 - p) / p,
            Self::Exponential { rate } => 1.0 / rate,
            Self::Gamma { shape } => shape,
        }
    }

    /// `E ξ^k`.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if k == 0 {
            return Ok(1.0);
        }
        match *self {
            Self::Geometric { p } => Ok(geo_limit_moments((1.0 - p) / p, k as usize)?[k as usize - 1]),
            Self::Exponential { rate } => Ok((1..=k).map(|j| j as f64 / rate).product()),
            Self::Gamma { shape } => gamma_moment(shape, k),
        }
    }
}

/// Sup-distance between the sample ECDF and the law's CDF, checked on both
/// sides of every sample point.
pub fn ks_distance(sample: &[f64], law: &LimitLaw) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        d = d.max((below - law.cdf_left(x)).abs()).max((upto - law.cdf(x)).abs());
        i = j;
    }
    Ok(d.min(1.0))
}

/// Total variation between an empirical pmf `empirical[i] = P̂(i)` and a
/// geometric law; mass beyond the last index is compared as one tail bin.
pub fn tv_distance_pmf(empirical: &[f64], law: &LimitLaw) -> Result<f64> {
    if !law.is_discrete() {
        return Err(Error::Unsupported("total variation needs an integer-valued law".into()));
    }
    let mut acc = CompensatedSum::new();
    let mut emp_mass = CompensatedSum::new();
    for (i, &e) in empirical.iter().enumerate() {
        acc.add((e - law.pmf(i as u64)).abs());
        emp_mass.add(e);
    }
    let n = empirical.len() as f64;
    let law_tail = if empirical.is_empty() { 1.0 } else { 1.0 - law.cdf(n - 1.0) };
    let emp_tail = (1.0 - emp_mass.value()).max(0.0);
    acc.add((emp_tail - law_tail).abs());
    Ok((0.5 * acc.value()).clamp(0.0, 1.0))
}

/// Total variation between the empirical law of an integer sample and a
/// geometric law.
pub fn tv_distance_integer(sample: &[u64], law: &LimitLaw) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let max = *sample.iter().max().unwrap() as usize;
    let mut freq = vec![0u64; max + 1];
    for &x in sample {
        freq[x as usize] += 1;
    }
    let n = sample.len() as f64;
    let pmf: Vec<f64> = freq.iter().map(|&c| c as f64 / n).collect();
    tv_distance_pmf(&pmf, law)
}

/// For `k = 1..=max_order`: `(mean of x^k − E ξ^k) / standard error of that mean`.
pub fn moment_zscores_sample(sample: &[f64], law: &LimitLaw, max_order: u32) -> Result<Vec<f64>> {
    if sample.len() < MIN_REPLICATES {
        return Err(Error::Parameter(format!(
            "moment z-scores need at least {MIN_REPLICATES} replicates, got {}",
            sample.len()
        )));
    }
    let n = sample.len() as f64;
    (1..=max_order)
        .map(|k| {
            let target = law.moment(k)?;
            let powered: Vec<f64> = sample.iter().map(|x| x.powi(k as i32)).collect();
            let (mean, var) = mean_var(&powered);
            let diff = mean - target;
            let se = (var / n).sqrt();
            if se == 0.0 {
                if diff == 0.0 {
                    return Ok(0.0);
                }
                return Err(Error::DegenerateSample(format!(
                    "order {k}: zero variance with mean {mean} against target {target}"
                )));
            }
            Ok(diff / se)
        })
        .collect()
}

/// [`moment_zscores_sample`] on the checkpoint column `h` of a batch, each count
/// divided by `scale`.
pub fn moment_zscores(batch: &ReplicateBatch, h: usize, scale: f64, law: &LimitLaw, max_order: u32) -> Result<Vec<f64>> {
    let xs: Vec<f64> = batch.column(h).into_iter().map(|c| c as f64 / scale).collect();
    moment_zscores_sample(&xs, law, max_order)
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = csum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = csum(xs.iter().map(|x| (x - mean) * (x - mean)));
    (mean, ss / (n - 1.0))
}

/// `(estimate, standard error)` of `E X^k` from a sample.
pub fn raw_moment_with_se(xs: &[f64], k: i32) -> (f64, f64) {
    let powered: Vec<f64> = xs.iter().map(|x| x.powi(k)).collect();
    let (m, v) = mean_var(&powered);
    (m, (v / xs.len() as f64).sqrt())
}
