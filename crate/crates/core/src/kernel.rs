//! Success-probability kernels of Markovian Bernoulli sequences.
//!
//! A kernel gives `r(i, j) = 1/ρ(i, j)`, the probability of success at `j`
//! given success at `i` (and nothing about earlier indices), with `i = 0`
//! standing for the marginal `P(η_j = 1)`. Joint success probabilities of
//! increasing indices are products along the chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multisum::WeightSequence;

/// Indices `1..=WEIGHT_CHECK_SPAN` are checked when a distance kernel is built.
pub const WEIGHT_CHECK_SPAN: usize = 1024;

pub trait RhoKernel: Send + Sync {
    /// `r(i, j)` for `0 ≤ i < j`.
    fn success_prob(&self, i: usize, j: usize) -> f64;

    /// `ρ(i, j) = 1 / r(i, j)`.
    fn rho(&self, i: usize, j: usize) -> f64 {
        1.0 / self.success_prob(i, j)
    }

    /// Fills `out[i] = r(i, j)` for `i < out.len()` (normally `out.len() == j`).
    fn success_row(&self, j: usize, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.success_prob(i, j);
        }
    }

    fn description(&self) -> String;
}

/// `P(η_{j_1} = 1, …, η_{j_m} = 1)` for strictly increasing `indices ≥ 1`.
pub fn joint_success(kernel: &dyn RhoKernel, indices: &[usize]) -> f64 {
    let mut prev = 0;
    let mut p = 1.0;
    for &j in indices {
        assert!(j > prev, "indices must be strictly increasing and ≥ 1");
        p *= kernel.success_prob(prev, j);
        prev = j;
    }
    p
}

/// `ρ(i, j) = D(j − i)` and `ρ(0, j) = scale · D(j)`.
#[derive(Debug, Clone)]
pub struct DistanceKernel {
    weights: WeightSequence,
    marginal_scale: f64,
}

impl DistanceKernel {
    /// Multiplies the marginal `ρ(0, j)` by `scale`, e.g. by `λ_σ`.
    pub fn with_marginal_scale(mut self, scale: f64) -> Result<Self> {
        for n in 1..=WEIGHT_CHECK_SPAN {
            if scale * self.weights.weight(n) < 1.0 {
                return Err(Error::InvalidWeight(format!(
                    "scaled marginal ρ(0,{n}) = {} < 1",
                    scale * self.weights.weight(n)
                )));
            }
        }
        self.marginal_scale = scale;
        Ok(self)
    }

    pub fn weights(&self) -> &WeightSequence {
        &self.weights
    }
}

/// Distance kernel `r(i, j) = 1/D(j − i)`, `r(0, j) = 1/D(j)`.
///
/// `D(n) = 1` (certain success) is accepted; `D(n) < 1` is not a probability
/// and is rejected on the checked span.
pub fn kernel_distance(weights: WeightSequence) -> Result<DistanceKernel> {
    for n in 1..=WEIGHT_CHECK_SPAN {
        let d = weights.weight(n);
        if !(d >= 1.0) || !d.is_finite() {
            return Err(Error::InvalidWeight(format!("D({n}) = {d} must be ≥ 1")));
        }
    }
    Ok(DistanceKernel { weights, marginal_scale: 1.0 })
}

impl RhoKernel for DistanceKernel {
    fn success_prob(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j > i);
        if i == 0 {
            1.0 / (self.marginal_scale * self.weights.weight(j))
        } else {
            1.0 / self.weights.weight(j - i)
        }
    }

    fn description(&self) -> String {
        if self.marginal_scale == 1.0 {
            format!("distance[{}]", self.weights.label())
        } else {
            format!("distance[{}, marginal×{}]", self.weights.label(), self.marginal_scale)
        }
    }
}

/// `ρ(0, i) = β i`, `ρ(i, j) = β j^{1−α} (j^α − i^α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerKernel {
    alpha: f64,
    beta: f64,
}

pub fn kernel_power(alpha: f64, beta: f64) -> Result<PowerKernel> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Parameter(format!("power kernel needs α, β > 0 (α={alpha}, β={beta})")));
    }
    Ok(PowerKernel { alpha, beta })
}

impl PowerKernel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    fn pow(&self, x: f64) -> f64 {
        if self.alpha == 1.0 {
            x
        } else if self.alpha == 2.0 {
            x * x
        } else if self.alpha == 0.5 {
            x.sqrt()
        } else {
            x.powf(self.alpha)
        }
    }

    /// `ρ(i, j)`; for `i = 0` this is `β j`.
    pub fn rho_value(&self, i: usize, j: usize) -> f64 {
        let jf = j as f64;
        if i == 0 {
            return self.beta * jf;
        }
        let fi = i as f64;
        let diff = if self.alpha == 2.0 {
            // exact for integer arguments
            (jf - fi) * (jf + fi)
        } else {
            self.pow(jf) - self.pow(fi)
        };
        self.beta * jf.powf(1.0 - self.alpha) * diff
    }

    /// Checks `ρ ≥ 1` on every pair up to `n`; returns the first violation.
    pub fn check_range(&self, n: usize) -> Result<()> {
        for j in 1..=n {
            for i in 0..j {
                let r = self.rho_value(i, j);
                if !(r >= 1.0) {
                    return Err(Error::Range(format!("ρ({i},{j}) = {r} < 1 for {}", self.description())));
                }
            }
        }
        Ok(())
    }
}

impl RhoKernel for PowerKernel {
    fn success_prob(&self, i: usize, j: usize) -> f64 {
        1.0 / self.rho_value(i, j)
    }

    fn success_row(&self, j: usize, out: &mut [f64]) {
        let jf = j as f64;
        if out.is_empty() {
            return;
        }
        out[0] = 1.0 / (self.beta * jf);
        if self.alpha == 2.0 {
            let c = jf / self.beta;
            for (i, slot) in out.iter_mut().enumerate().skip(1) {
                let fi = i as f64;
                *slot = c / ((jf - fi) * (jf + fi));
            }
        } else {
            let pj = self.pow(jf);
            let c = jf.powf(self.alpha - 1.0) / self.beta;
            for (i, slot) in out.iter_mut().enumerate().skip(1) {
                *slot = c / (pj - self.pow(i as f64));
            }
        }
    }

    fn description(&self) -> String {
        format!("power[α={}, β={}]", self.alpha, self.beta)
    }
}

/// Offspring parameter `p_t` of the generation-t geometric law
/// `P(k) = p_t (1 − p_t)^k`, with mean `m_t = (1 − p_t)/p_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OffspringSchedule {
    /// `p_t ≡ p`
    Constant(f64),
    /// `p_t = 1/2 − r_t/4` with `r_t = scale · t^{−decay}`.
    PerturbedPower { scale: f64, decay: f64 },
    /// `p_t = 1/2 − r_t/4` with `r_t` read from a table (`r[0]` is `r_1`).
    PerturbedTable(Vec<f64>),
    /// `p_t = 1/2 − B/(4t)`, i.e. `r_t = B/t`; `I_n/log n → Gamma(1−B, 1)`.
    NearCritical { b: f64 },
    /// `p_t` read from a table (`p[0]` is `p_1`).
    Table(Vec<f64>),
}

impl OffspringSchedule {
    /// Checks `0 < p_t < 1` wherever the schedule is defined.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Parameter(what));
        match self {
            Self::Constant(p) => {
                if !(*p > 0.0 && *p < 1.0) {
                    return bad(format!("p = {p} must lie in (0,1)"));
                }
            }
            Self::PerturbedPower { scale, decay } => {
                if !(0.0..=1.0).contains(scale) || !(*decay >= 0.0) {
                    return bad(format!("r_t = {scale}·t^-{decay} must stay in [0,1]"));
                }
            }
            Self::PerturbedTable(r) => {
                if let Some((t, x)) = r.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
                    return bad(format!("r_{} = {x} must lie in [0,1]", t + 1));
                }
            }
            Self::NearCritical { b } => {
                if !(0.0..2.0).contains(b) {
                    return bad(format!("B = {b} must lie in [0,2) so that p_1 > 0"));
                }
            }
            Self::Table(p) => {
                if let Some((t, x)) = p.iter().enumerate().find(|(_, x)| !(**x > 0.0 && **x < 1.0)) {
                    return bad(format!("p_{} = {x} must lie in (0,1)", t + 1));
                }
            }
        }
        Ok(())
    }

    /// Largest generation the schedule covers, if bounded.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            Self::PerturbedTable(r) => Some(r.len()),
            Self::Table(p) => Some(p.len()),
            _ => None,
        }
    }

    fn check_generation(&self, t: usize) {
        assert!(t >= 1, "generations start at 1");
        if let Some(h) = self.horizon() {
            assert!(t <= h, "generation {t} beyond schedule table of length {h}");
        }
    }

    /// `r_t` in the `p_t = 1/2 − r_t/4` parameterisation, when the schedule has one.
    fn perturbation(&self, t: usize) -> Option<f64> {
        match self {
            Self::PerturbedPower { scale, decay } => Some(scale * (t as f64).powf(-decay)),
            Self::PerturbedTable(r) => Some(r[t - 1]),
            Self::NearCritical { b } => Some(b / t as f64),
            _ => None,
        }
    }

    /// `p_t` for `t ≥ 1`.
    pub fn p(&self, t: usize) -> f64 {
        self.check_generation(t);
        match self {
            Self::Constant(p) => *p,
            Self::Table(p) => p[t - 1],
            _ => 0.5 - self.perturbation(t).unwrap() / 4.0,
        }
    }

    /// `log m_t = log((1 − p_t)/p_t)`.
    pub fn log_mean(&self, t: usize) -> f64 {
        self.check_generation(t);
        match self.perturbation(t) {
            // m_t = (2 + r)/(2 − r)
            Some(r) => (0.5 * r).ln_1p() - (-0.5 * r).ln_1p(),
            None => {
                let p = self.p(t);
                (1.0 - p).ln() - p.ln()
            }
        }
    }
}

/// `ρ(i, j) = 1 + Σ_{t=i+1}^j m_t ⋯ m_j` for the BPVE with one immigrant per
/// generation; `r(i, j) = P(Z_j = 0 | Z_i = 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingKernel {
    schedule: OffspringSchedule,
}

pub fn kernel_branching(schedule: OffspringSchedule) -> Result<BranchingKernel> {
    schedule.validate()?;
    Ok(BranchingKernel { schedule })
}

impl BranchingKernel {
    pub fn schedule(&self) -> &OffspringSchedule {
        &self.schedule
    }

    /// `ρ(i, j)`, products accumulated in log space from `j` downwards.
    pub fn rho_value(&self, i: usize, j: usize) -> f64 {
        let mut log_prod = 0.0;
        let mut acc = 0.0;
        for t in ((i + 1)..=j).rev() {
            log_prod += self.schedule.log_mean(t);
            acc += log_prod.exp();
        }
        1.0 + acc
    }
}

impl RhoKernel for BranchingKernel {
    fn success_prob(&self, i: usize, j: usize) -> f64 {
        1.0 / self.rho_value(i, j)
    }

    fn success_row(&self, j: usize, out: &mut [f64]) {
        // sweeping i downwards adds one suffix product per step
        let mut log_prod = 0.0;
        let mut acc = 0.0;
        let mut t = j;
        for i in (0..j).rev() {
            while t > i {
                log_prod += self.schedule.log_mean(t);
                acc += log_prod.exp();
                t -= 1;
            }
            if i < out.len() {
                out[i] = 1.0 / (1.0 + acc);
            }
        }
    }

    fn description(&self) -> String {
        format!("branching[{:?}]", self.schedule)
    }
}

/// Level geometry for the scale-function kernels: spheres (or points) at
/// `kb`, offset `a`, scale function `w(x) = x^{−γ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    gamma: f64,
    a: f64,
    b: f64,
}

impl ScaleSpec {
    pub fn new(gamma: f64, a: f64, b: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!("scale exponent γ must be positive, got {gamma}")));
        }
        if !(a > 0.0) || !(b > a) || !b.is_finite() {
            return Err(Error::Parameter(format!("need b > a > 0, got a={a}, b={b}")));
        }
        Ok(Self { gamma, a, b })
    }

    /// d-dimensional Brownian motion, `γ = d − 2`.
    pub fn brownian(d: u32, a: f64, b: f64) -> Result<Self> {
        if d < 3 {
            return Err(Error::Parameter(format!("Brownian motion in d = {d} is recurrent; need d ≥ 3")));
        }
        Self::new(d as f64 - 2.0, a, b)
    }

    /// Geometric Brownian motion `dX = μX dt + σX dB`, `γ = 2μ/σ² − 1`.
    pub fn gbm(mu: f64, sigma: f64, a: f64, b: f64) -> Result<Self> {
        if !(sigma > 0.0) || !(2.0 * mu > sigma * sigma) {
            return Err(Error::Parameter(format!("GBM needs σ > 0 and 2μ > σ² (μ={mu}, σ={sigma})")));
        }
        Self::new(2.0 * mu / (sigma * sigma) - 1.0, a, b)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Scale function `w(x) = x^{−γ}`.
    pub fn w(&self, x: f64) -> f64 {
        x.powf(-self.gamma)
    }
}

/// `1 − (x/y)^γ` without cancellation for `x ≤ y`.
#[inline]
fn one_minus_ratio_pow(x: f64, y: f64, gamma: f64) -> f64 {
    -(gamma * (x / y).ln()).exp_m1()
}

/// Marginal `(w(i) − w(i+c))/w(i) = 1 − (i/(i+c))^γ` for any `c > 0`.
pub fn scale_marginal(gamma: f64, c: f64, i: f64) -> f64 {
    one_minus_ratio_pow(i, i + c, gamma)
}

/// Kernel of weak a-cutsphere / a-cutpoint indicators at levels `kb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleKernel {
    spec: ScaleSpec,
}

pub fn kernel_scale(spec: ScaleSpec) -> ScaleKernel {
    ScaleKernel { spec }
}

impl ScaleKernel {
    pub fn spec(&self) -> &ScaleSpec {
        &self.spec
    }
}

impl RhoKernel for ScaleKernel {
    fn success_prob(&self, i: usize, j: usize) -> f64 {
        let g = self.spec.gamma;
        let c = self.spec.a / self.spec.b;
        let jf = j as f64;
        let escape = one_minus_ratio_pow(jf, jf + c, g);
        if i == 0 {
            escape
        } else {
            // w(i)/(w(i) − w(j+c)) · (w(j) − w(j+c))/w(j)
            escape / one_minus_ratio_pow(i as f64, jf + c, g)
        }
    }

    fn description(&self) -> String {
        format!("scale[γ={}, a={}, b={}]", self.spec.gamma, self.spec.a, self.spec.b)
    }
}
