//! Exact-law Monte Carlo for the three application models.
//!
//! Every replicate draws from its own ChaCha8 stream, keyed by `(seed,
//! replicate index)`, and rows are stored at their replicate index, so a
//! batch depends only on its inputs and not on the number of workers.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{OffspringSchedule, ScaleSpec};

/// Galton–Watson populations above this size stop being simulated.
pub const POPULATION_CAP: u64 = 1_000_000_000;

/// Level-walk steps allowed per replicate.
pub const STEP_CAP: u64 = 1_000_000_000;

/// Geometric sums with at most this many terms are drawn term by term.
const INVERSION_LIMIT: u64 = 16;

/// Counts of successes up to each checkpoint, one row per replicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateBatch {
    pub seed: u64,
    pub replicates: usize,
    pub horizons: Vec<usize>,
    /// `counts[r][h]`: successes of replicate `r` in `1..=horizons[h]`.
    pub counts: Vec<Vec<u64>>,
    /// Replicates stopped early by the population cap (counts kept as final).
    pub capped: usize,
}

impl ReplicateBatch {
    /// Counts at checkpoint `h`, in replicate order.
    pub fn column(&self, h: usize) -> Vec<u64> {
        self.counts.iter().map(|row| row[h]).collect()
    }
}

/// Stream `replicate` of the generator keyed by `seed`.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

fn check_horizons(horizons: &[usize]) -> Result<usize> {
    match horizons.first() {
        None => return Err(Error::Parameter("at least one checkpoint horizon is required".into())),
        Some(0) => return Err(Error::Parameter("checkpoint horizons start at 1".into())),
        _ => {}
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("checkpoint horizons must be strictly increasing".into()));
    }
    Ok(*horizons.last().unwrap())
}

fn check_replicates(replicates: usize) -> Result<()> {
    if replicates == 0 {
        return Err(Error::Parameter("replicate count must be positive".into()));
    }
    Ok(())
}

/// Running count with snapshots at the checkpoints.
struct Recorder<'a> {
    horizons: &'a [usize],
    next: usize,
    count: u64,
    row: Vec<u64>,
}

impl<'a> Recorder<'a> {
    fn new(horizons: &'a [usize]) -> Self {
        Self { horizons, next: 0, count: 0, row: Vec::with_capacity(horizons.len()) }
    }

    /// Records the outcome at time `t` (times visited in order 1, 2, …).
    #[inline]
    fn step(&mut self, t: usize, success: bool) {
        self.count += success as u64;
        if self.horizons.get(self.next) == Some(&t) {
            self.row.push(self.count);
            self.next += 1;
        }
    }

    /// Freezes the count for all remaining checkpoints.
    fn finish(mut self) -> Vec<u64> {
        while self.row.len() < self.horizons.len() {
            self.row.push(self.count);
        }
        self.row
    }
}

/// Precomputed constants of `Geo(p)` on `{0, 1, …}`, `P(k) = p (1−p)^k`.
#[derive(Debug, Clone, Copy)]
struct GeometricLaw {
    p: f64,
    ln_q: f64,
}

impl GeometricLaw {
    fn new(p: f64) -> Self {
        Self { p, ln_q: (-p).ln_1p() }
    }

    /// Sum of `c` independent draws.
    fn sum<R: Rng>(&self, c: u64, rng: &mut R) -> u64 {
        if c == 0 {
            return 0;
        }
        if c <= INVERSION_LIMIT {
            let mut s = 0u64;
            for _ in 0..c {
                // U in (0, 1]
                let u = 1.0 - rng.random::<f64>();
                s += (u.ln() / self.ln_q).floor() as u64;
            }
            return s;
        }
        // NegBin(c, p) as a Gamma-mixed Poisson
        let scale = (1.0 - self.p) / self.p;
        let lambda = Gamma::new(c as f64, scale).expect("positive shape and scale").sample(rng);
        if !(lambda > 0.0) {
            return 0;
        }
        Poisson::new(lambda).expect("finite positive rate").sample(rng) as u64
    }
}

/// Critical Galton–Watson process with `P(offspring = k) = 2^{−(k+1)}`,
/// `Y_0 = 1`; counts `#{1 ≤ t ≤ n : Y_t = level}`.
pub fn sim_gw(level: u64, horizons: &[usize], replicates: usize, seed: u64) -> Result<ReplicateBatch> {
    if level == 0 {
        return Err(Error::Parameter("the visited level must be ≥ 1".into()));
    }
    let n = check_horizons(horizons)?;
    check_replicates(replicates)?;
    let law = GeometricLaw::new(0.5);
    let rows: Vec<(Vec<u64>, bool)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let mut rec = Recorder::new(horizons);
            let mut y = 1u64;
            let mut capped = false;
            for t in 1..=n {
                y = law.sum(y, &mut rng);
                rec.step(t, y == level);
                if y == 0 {
                    break;
                }
                if y > POPULATION_CAP {
                    capped = true;
                    break;
                }
            }
            (rec.finish(), capped)
        })
        .collect();
    Ok(assemble(seed, horizons, rows))
}

fn assemble(seed: u64, horizons: &[usize], rows: Vec<(Vec<u64>, bool)>) -> ReplicateBatch {
    let capped = rows.iter().filter(|(_, c)| *c).count();
    ReplicateBatch {
        seed,
        replicates: rows.len(),
        horizons: horizons.to_vec(),
        counts: rows.into_iter().map(|(row, _)| row).collect(),
        capped,
    }
}

/// BPVE path: `Z_0 = 0`, `Z_t` is the sum of `Z_{t−1} + 1` draws of
/// `Geo(p_t)`. Calls `visit(t, Z_t)` for `t = 1..=n`.
fn bpve_path<R: Rng, F: FnMut(usize, u64)>(laws: &[GeometricLaw], rng: &mut R, mut visit: F) {
    let mut z = 0u64;
    for (idx, law) in laws.iter().enumerate() {
        z = law.sum(z + 1, rng);
        visit(idx + 1, z);
    }
}

fn bpve_laws(schedule: &OffspringSchedule, n: usize) -> Result<Vec<GeometricLaw>> {
    schedule.validate()?;
    if let Some(h) = schedule.horizon() {
        if n > h {
            return Err(Error::Parameter(format!("horizon {n} exceeds the offspring table length {h}")));
        }
    }
    Ok((1..=n).map(|t| GeometricLaw::new(schedule.p(t))).collect())
}

/// Branching process in a varying environment with one immigrant per
/// generation; counts regeneration times `#{1 ≤ t ≤ n : Z_t = 0}`.
pub fn sim_bpve(schedule: &OffspringSchedule, horizons: &[usize], replicates: usize, seed: u64) -> Result<ReplicateBatch> {
    let n = check_horizons(horizons)?;
    check_replicates(replicates)?;
    let laws = bpve_laws(schedule, n)?;
    let rows: Vec<(Vec<u64>, bool)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let mut rec = Recorder::new(horizons);
            bpve_path(&laws, &mut rng, |t, z| rec.step(t, z == 0));
            (rec.finish(), false)
        })
        .collect();
    Ok(assemble(seed, horizons, rows))
}

/// Indicators `Z_t = 0` at the watched generations, one row per replicate.
/// Uses the same streams as [`sim_bpve`].
pub fn sim_bpve_zeros(schedule: &OffspringSchedule, watch: &[usize], replicates: usize, seed: u64) -> Result<Vec<Vec<bool>>> {
    let n = check_horizons(watch)?;
    check_replicates(replicates)?;
    let laws = bpve_laws(schedule, n)?;
    Ok((0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let mut out = Vec::with_capacity(watch.len());
            let mut next = 0;
            bpve_path(&laws, &mut rng, |t, z| {
                if watch.get(next) == Some(&t) {
                    out.push(z == 0);
                    next += 1;
                }
            });
            out
        })
        .collect())
}

/// Where the level walk starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LevelWalkStart {
    /// Brownian motion from the origin, first reaching level `b`.
    Origin,
    /// Start at `x0 ∈ (0, b)`, added as an extra bottom level.
    Point(f64),
}

/// `1 − (x/y)^γ` for `0 < x ≤ y`.
#[inline]
fn one_minus_ratio_pow(x: f64, y: f64, gamma: f64) -> f64 {
    -(gamma * (x / y).ln()).exp_m1()
}

/// Probability that the walk at `level` hits `upper` before `lower`,
/// `(w(lower) − w(level)) / (w(lower) − w(upper))` with `w(x) = x^{−γ}`.
pub fn up_probability(gamma: f64, lower: f64, level: f64, upper: f64) -> f64 {
    one_minus_ratio_pow(lower, level, gamma) / one_minus_ratio_pow(lower, upper, gamma)
}

/// Probability of never returning to `lower` from `top`, `(w(lower) − w(top))/w(lower)`.
pub fn escape_probability(gamma: f64, lower: f64, top: f64) -> f64 {
    one_minus_ratio_pow(lower, top, gamma)
}

#[inline]
fn threshold(p: f64) -> u64 {
    const TWO_64: f64 = 18_446_744_073_709_551_616.0;
    if p >= 1.0 {
        u64::MAX
    } else {
        (p * TWO_64) as u64
    }
}

/// Sorted levels and per-level move thresholds for `n` spheres.
#[derive(Debug, Clone)]
pub struct LevelLayout {
    pub levels: Vec<f64>,
    /// Index of level `b` (sphere 1's inner level).
    pub first_sphere: usize,
    /// `next_u64() < up[i]` moves up (or escapes from the top).
    up: Vec<u64>,
}

impl LevelLayout {
    pub fn new(spec: &ScaleSpec, n: usize, start: LevelWalkStart) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("need at least one sphere".into()));
        }
        let (a, b, g) = (spec.a(), spec.b(), spec.gamma());
        let mut levels = Vec::with_capacity(2 * n + 1);
        if let LevelWalkStart::Point(x0) = start {
            if !(x0 > 0.0 && x0 < b) {
                return Err(Error::Parameter(format!("start x0 = {x0} must lie in (0, b = {b})")));
            }
            levels.push(x0);
        }
        let first_sphere = levels.len();
        for k in 1..=n {
            levels.push(k as f64 * b);
            levels.push(k as f64 * b + a);
        }
        let last = levels.len() - 1;
        let up = (0..levels.len())
            .map(|i| {
                let p = if i == 0 {
                    1.0
                } else if i == last {
                    escape_probability(g, levels[i - 1], levels[i])
                } else {
                    up_probability(g, levels[i - 1], levels[i], levels[i + 1])
                };
                threshold(p)
            })
            .collect();
        Ok(Self { levels, first_sphere, up })
    }

    pub fn spheres(&self) -> usize {
        (self.levels.len() - self.first_sphere) / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sphere {
    Untouched,
    Pending,
    Failed,
}

/// Runs one walk until escape; `visit` sees every level index entered,
/// starting with the initial one. Returns the success flag of each sphere.
fn level_walk<R: RngCore, F: FnMut(usize)>(layout: &LevelLayout, rng: &mut R, mut visit: F) -> Result<Vec<bool>> {
    let spheres = layout.spheres();
    let base = layout.first_sphere;
    let top = layout.levels.len() - 1;
    let mut state = vec![Sphere::Untouched; spheres];
    let mut pos = 0usize;
    let mut steps = 0u64;
    loop {
        visit(pos);
        if pos >= base {
            let rel = pos - base;
            let k = rel / 2;
            if rel % 2 == 1 {
                if state[k] == Sphere::Untouched {
                    state[k] = Sphere::Pending;
                }
            } else if state[k] == Sphere::Pending {
                state[k] = Sphere::Failed;
            }
        }
        steps += 1;
        if steps > STEP_CAP {
            return Err(Error::StepCap { cap: STEP_CAP, context: format!("level walk over {spheres} spheres") });
        }
        let up = rng.next_u64() < layout.up[pos];
        if pos == top {
            if up {
                break;
            }
            pos -= 1;
        } else if up {
            pos += 1;
        } else {
            pos -= 1;
        }
    }
    Ok(state.into_iter().map(|s| s == Sphere::Pending).collect())
}

/// Weak a-cutsphere (or a-cutpoint) counts of a transient diffusion with
/// scale function `x^{−γ}`, from the embedded walk on the levels
/// `b < b+a < 2b < … < nb+a`.
pub fn sim_levelwalk(
    spec: &ScaleSpec,
    start: LevelWalkStart,
    horizons: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<ReplicateBatch> {
    let n = check_horizons(horizons)?;
    check_replicates(replicates)?;
    let layout = LevelLayout::new(spec, n, start)?;
    let rows = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let success = level_walk(&layout, &mut rng, |_| {})?;
            let mut rec = Recorder::new(horizons);
            for (k, &s) in success.iter().enumerate() {
                rec.step(k + 1, s);
            }
            Ok((rec.finish(), false))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(seed, horizons, rows))
}

/// Full record of one level walk.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelWalkTrace {
    pub levels: Vec<f64>,
    pub first_sphere: usize,
    /// Level indices in visiting order.
    pub path: Vec<usize>,
    /// `successes[k−1]` for sphere k.
    pub successes: Vec<bool>,
}

impl LevelWalkTrace {
    /// True when each success has no visit to `kb` after its first visit to
    /// `kb + a`, and each failure has one.
    pub fn is_consistent(&self) -> bool {
        self.successes.iter().enumerate().all(|(k, &ok)| {
            let inner = self.first_sphere + 2 * k;
            let outer = inner + 1;
            let revisit = match self.path.iter().position(|&p| p == outer) {
                Some(first) => self.path[first..].contains(&inner),
                None => return false,
            };
            ok != revisit
        })
    }
}

/// Replicate `replicate` of [`sim_levelwalk`] with its full path.
pub fn levelwalk_trace(spec: &ScaleSpec, start: LevelWalkStart, n: usize, seed: u64, replicate: usize) -> Result<LevelWalkTrace> {
    let layout = LevelLayout::new(spec, n, start)?;
    let mut rng = replicate_rng(seed, replicate);
    let mut path = Vec::new();
    let successes = level_walk(&layout, &mut rng, |p| path.push(p))?;
    Ok(LevelWalkTrace { levels: layout.levels.clone(), first_sphere: layout.first_sphere, path, successes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::raw_moment_with_se;

    fn column_f64(batch: &ReplicateBatch, h: usize) -> Vec<f64> {
        batch.column(h).into_iter().map(|c| c as f64).collect()
    }

    #[test]
    fn geometric_pmf_at_zero() {
        let law = GeometricLaw::new(0.5);
        let mut rng = replicate_rng(7, 0);
        let draws = 200_000;
        let zeros = (0..draws).filter(|_| law.sum(1, &mut rng) == 0).count();
        let p = zeros as f64 / draws as f64;
        assert!((p - 0.5).abs() < 4.0 * (0.25 / draws as f64).sqrt());
    }

    #[test]
    fn large_geometric_sums_have_negbin_moments() {
        let law = GeometricLaw::new(0.3);
        let mut rng = replicate_rng(11, 0);
        let c = 40;
        let xs: Vec<f64> = (0..100_000).map(|_| law.sum(c, &mut rng) as f64).collect();
        let mean = c as f64 * 0.7 / 0.3;
        let var = c as f64 * 0.7 / 0.09;
        let (m, se) = raw_moment_with_se(&xs, 1);
        assert!((m - mean).abs() < 4.0 * se);
        let (m2, se2) = raw_moment_with_se(&xs, 2);
        assert!((m2 - (var + mean * mean)).abs() < 4.0 * se2);
    }

    #[test]
    fn gw_first_step() {
        let batch = sim_gw(1, &[1], 100_000, 3).unwrap();
        let (m, se) = raw_moment_with_se(&column_f64(&batch, 0), 1);
        assert!((m - 0.25).abs() < 4.0 * se);
    }

    #[test]
    fn gw_counts_match_exact_moments() {
        use crate::kernel::kernel_distance;
        use crate::moments::MomentTable;
        use crate::multisum::WeightSequence;
        let horizons = [10, 100, 400];
        let batch = sim_gw(1, &horizons, 40_000, 5).unwrap();
        let k = kernel_distance(WeightSequence::shifted_power(1.0, 2.0).unwrap()).unwrap();
        let exact = MomentTable::build(&k, &horizons, 2).unwrap();
        for h in 0..horizons.len() {
            let xs = column_f64(&batch, h);
            for ord in 1..=2 {
                let (m, se) = raw_moment_with_se(&xs, ord);
                assert!((m - exact.moment(h, ord as usize)).abs() < 4.0 * se, "h={h} k={ord}");
            }
        }
    }

    #[test]
    fn counts_are_nondecreasing_per_replicate() {
        let b = sim_gw(1, &[5, 50, 500], 2000, 1).unwrap();
        let spec = ScaleSpec::brownian(3, 1.0, 2.0).unwrap();
        let w = sim_levelwalk(&spec, LevelWalkStart::Origin, &[3, 10, 20], 500, 2).unwrap();
        let z = sim_bpve(&OffspringSchedule::NearCritical { b: 0.5 }, &[10, 100], 500, 3).unwrap();
        for batch in [b, w, z] {
            for row in &batch.counts {
                assert!(row.windows(2).all(|p| p[0] <= p[1]));
            }
        }
    }

    #[test]
    fn batches_do_not_depend_on_worker_count() {
        let spec = ScaleSpec::brownian(3, 1.0, 2.0).unwrap();
        let run = || {
            (
                sim_gw(1, &[10, 200], 3000, 42).unwrap(),
                sim_bpve(&OffspringSchedule::NearCritical { b: 0.5 }, &[50], 300, 42).unwrap(),
                sim_levelwalk(&spec, LevelWalkStart::Point(0.5), &[5, 15], 300, 42).unwrap(),
            )
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(run);
        assert_eq!(one, many);
        assert_eq!(one, run());
        assert_ne!(one.0, sim_gw(1, &[10, 200], 3000, 43).unwrap());
    }

    #[test]
    fn bpve_first_generation() {
        let sched = OffspringSchedule::Table(vec![0.35, 0.5]);
        let b = sim_bpve(&sched, &[1], 100_000, 9).unwrap();
        let (m, se) = raw_moment_with_se(&column_f64(&b, 0), 1);
        assert!((m - 0.35).abs() < 4.0 * se);
        assert!(sim_bpve(&sched, &[3], 10, 9).is_err());
        assert!(sim_bpve(&OffspringSchedule::Constant(1.0), &[3], 10, 9).is_err());
    }

    #[test]
    fn zero_perturbation_gives_identical_batches() {
        let a = sim_bpve(&OffspringSchedule::PerturbedTable(vec![0.0; 200]), &[50, 200], 500, 4).unwrap();
        let b = sim_bpve(&OffspringSchedule::NearCritical { b: 0.0 }, &[50, 200], 500, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bpve_fair_conditional_regeneration() {
        let watch = [10, 15, 30];
        let rows = sim_bpve_zeros(&OffspringSchedule::NearCritical { b: 0.0 }, &watch, 100_000, 8).unwrap();
        for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let given: Vec<&Vec<bool>> = rows.iter().filter(|r| r[a]).collect();
            let hits = given.iter().filter(|r| r[b]).count() as f64;
            let n = given.len() as f64;
            let p = 1.0 / (watch[b] - watch[a] + 1) as f64;
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((hits / n - p).abs() < 4.0 * se, "({},{})", watch[a], watch[b]);
        }
    }

    #[test]
    fn level_walk_probabilities() {
        assert!((up_probability(1.0, 1.0, 2.0, 3.0) - 0.75).abs() < 1e-15);
        assert!((escape_probability(1.0, 1.0, 2.0) - 0.5).abs() < 1e-15);
        assert_eq!(threshold(1.0), u64::MAX);
        assert_eq!(threshold(0.5), 1 << 63);
    }

    #[test]
    fn single_sphere_marginal() {
        let spec = ScaleSpec::new(1.0, 1.0, 2.0).unwrap();
        let b = sim_levelwalk(&spec, LevelWalkStart::Origin, &[1], 100_000, 12).unwrap();
        let (m, se) = raw_moment_with_se(&column_f64(&b, 0), 1);
        assert!((m - 1.0 / 3.0).abs() < 4.0 * se);
    }

    #[test]
    fn traces_are_consistent() {
        let spec = ScaleSpec::brownian(3, 1.0, 2.0).unwrap();
        for r in 0..50 {
            let t = levelwalk_trace(&spec, LevelWalkStart::Origin, 20, 77, r).unwrap();
            assert!(t.is_consistent());
            assert_eq!(t.path[0], 0);
            assert!(t.path.windows(2).all(|w| w[0].abs_diff(w[1]) == 1));
            assert_eq!(*t.path.last().unwrap(), t.levels.len() - 1);
        }
        let b = sim_levelwalk(&spec, LevelWalkStart::Origin, &[20], 50, 77).unwrap();
        for r in 0..50 {
            let t = levelwalk_trace(&spec, LevelWalkStart::Origin, 20, 77, r).unwrap();
            assert_eq!(b.counts[r][0], t.successes.iter().filter(|&&s| s).count() as u64);
        }
    }

    #[test]
    fn gbm_start_is_a_bottom_level() {
        let spec = ScaleSpec::gbm(1.5, 1.0, 0.5, 1.0).unwrap();
        let t = levelwalk_trace(&spec, LevelWalkStart::Point(0.25), 5, 1, 0).unwrap();
        assert_eq!(t.levels[0], 0.25);
        assert_eq!(t.first_sphere, 1);
        assert!(levelwalk_trace(&spec, LevelWalkStart::Point(1.5), 5, 1, 0).is_err());
    }

    #[test]
    fn horizon_validation() {
        assert!(sim_gw(1, &[], 10, 0).is_err());
        assert!(sim_gw(1, &[5, 5], 10, 0).is_err());
        assert!(sim_gw(1, &[0, 5], 10, 0).is_err());
        assert!(sim_gw(0, &[5], 10, 0).is_err());
        assert!(sim_gw(1, &[5], 0, 0).is_err());
    }
}
