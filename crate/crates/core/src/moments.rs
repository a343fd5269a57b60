//! Exact moments of the success count `Σ_{j≤n} η_j`.
//!
//! Expanding `(Σ η_j)^k` and collapsing repeated indices (`η² = η`) gives
//! `E(Σ η_j)^k = Σ_{m=1}^{k} c(k,m) Ψ_n(m)`, where `c(k,m)` counts the
//! surjections of a k-set onto an m-set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RhoKernel;
use crate::multisum::PsiTable;
use crate::numeric::CompensatedSum;

/// Largest order whose coefficients are computed (they stay below 2^64 up to 20).
pub const MAX_MOMENT_ORDER: usize = 20;

/// `c(k, m) = m! S(k, m)` for `m = 1..=k`, as `u128`.
///
/// Uses `c(k, m) = m (c(k−1, m−1) + c(k−1, m))`.
pub fn surjection_counts(k: usize) -> Result<Vec<u128>> {
    if k > MAX_MOMENT_ORDER {
        return Err(Error::Overflow { order: k, max: MAX_MOMENT_ORDER });
    }
    // row[m] for m = 0..=k
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for kk in 1..=k {
        for m in (1..=kk).rev() {
            row[m] = m as u128 * (row[m - 1] + row[m]);
        }
        row[0] = 0;
    }
    Ok(row[1..].to_vec())
}

/// `E(Σ_{j≤n} η_j)^k` for the sequence defined by `kernel`.
pub fn count_moment(kernel: &dyn RhoKernel, n: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    let coeff = surjection_counts(k)?;
    let table = PsiTable::build(kernel, n, k.min(n.max(1)))?;
    Ok(combine(&coeff, &table, n))
}

fn combine(coeff: &[u128], table: &PsiTable, n: usize) -> f64 {
    let mut acc = CompensatedSum::new();
    for (m, &c) in coeff.iter().enumerate().take(table.max_order()) {
        acc.add(c as f64 * table.value(n, m + 1));
    }
    acc.value()
}

/// Exact moments at several horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub horizons: Vec<usize>,
    pub max_order: usize,
    /// `values[h][k-1] = E(Σ_{j≤horizons[h]} η_j)^k`
    pub values: Vec<Vec<f64>>,
}

impl MomentTable {
    /// One Ψ table up to the largest horizon serves every horizon.
    pub fn build(kernel: &dyn RhoKernel, horizons: &[usize], max_order: usize) -> Result<Self> {
        if max_order == 0 {
            return Err(Error::Parameter("moment order must be ≥ 1".into()));
        }
        if horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("horizons must be strictly increasing".into()));
        }
        let coeff = (1..=max_order).map(surjection_counts).collect::<Result<Vec<_>>>()?;
        let n_max = horizons.last().copied().unwrap_or(0);
        let table = PsiTable::build(kernel, n_max, max_order.min(n_max.max(1)))?;
        let values = horizons
            .iter()
            .map(|&n| (1..=max_order).map(|k| combine(&coeff[k - 1], &table, n)).collect())
            .collect();
        Ok(Self { horizons: horizons.to_vec(), max_order, values })
    }

    /// `E(Σ η)^k` at `horizons[h]`.
    pub fn moment(&self, h: usize, k: usize) -> f64 {
        self.values[h][k - 1]
    }

    /// `Var(Σ η)` at `horizons[h]`; needs `max_order ≥ 2`.
    pub fn variance(&self, h: usize) -> f64 {
        let m1 = self.moment(h, 1);
        self.moment(h, 2) - m1 * m1
    }
}

/// Moments `E ξ^k`, `k = 1..=max_order`, of `ξ ~ Geo(1/(ζ+1))` on `{0,1,…}`.
///
/// `M_k = ζ Σ_{j<k} C(k,j) M_j`, `M_0 = 1`, which is `E ξ^k = E ξ · (E(ξ+1)^k − E ξ^k)`
/// solved for `E ξ^k`.
pub fn geo_limit_moments(zeta: f64, max_order: usize) -> Result<Vec<f64>> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::Parameter(format!("ζ must be positive and finite, got {zeta}")));
    }
    let mut m = vec![1.0];
    for k in 1..=max_order {
        let mut binom = 1.0;
        let mut acc = CompensatedSum::new();
        for (j, &mj) in m.iter().enumerate() {
            acc.add(binom * mj);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        m.push(zeta * acc.value());
    }
    m.remove(0);
    Ok(m)
}

/// One point of a normalised moment curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub moment: f64,
    pub scale: f64,
    /// `moment / scale^k`
    pub normalized: f64,
}

/// `E(Σ_{j≤n} η_j)^k / scaler(n)^k` along increasing horizons.
pub fn scaled_moment_curve<F>(kernel: &dyn RhoKernel, k: usize, horizons: &[usize], scaler: F) -> Result<Vec<CurvePoint>>
where
    F: Fn(usize) -> f64,
{
    let table = MomentTable::build(kernel, horizons, k)?;
    Ok(horizons
        .iter()
        .enumerate()
        .map(|(h, &n)| {
            let moment = table.moment(h, k);
            let scale = scaler(n);
            CurvePoint { n, moment, scale, normalized: moment / scale.powi(k as i32) }
        })
        .collect())
}
