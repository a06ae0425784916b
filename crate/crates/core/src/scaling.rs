//! Finite-size-scaling estimators: box crossing probabilities, the
//! correlation length `L(p, ε)`, the scale-matched `p_n`, one-arm
//! probabilities, the θ(p) proxy, and the iterated-log levels `p_l(j)`.
//!
//! Trial `i` of every estimator uses the field seeded by
//! `trial_seed(seed, stream, i)`, so estimates at different `p` (and, for
//! crossings, different `n`) are coupled through the same fields.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{four_arm_alternating, reaches, CrossingSense, Direction, Rect, Window};
use crate::error::{Error, Result};
use crate::lattice::{Edge, Site};
use crate::stats::{quantile_ci, wilson, Estimate};
use crate::weights::{trial_seed, WeightField};

pub const P_C: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_C_STAR: f64 = 1.0;
pub const MIN_TRIALS: u64 = 100;
pub const MIN_THETA_RADIUS: u32 = 64;
/// Iterated logarithms stop once they drop to this level.
pub const LOG_STAR_LEVEL: f64 = 10.0;

/// Stream tags separating the estimators' trial seeds.
pub mod stream {
    pub const CROSSING: u64 = 1;
    pub const ONE_ARM: u64 = 2;
    pub const THETA: u64 = 3;
    pub const FOUR_ARM: u64 = 4;
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::Domain(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} is not a probability")));
    }
    Ok(())
}

fn field(seed: u64, tag: u64, i: u64) -> WeightField {
    WeightField::new(trial_seed(seed, tag, i))
}

fn frequency<F>(trials: u64, hit: F) -> Result<Estimate>
where
    F: Fn(u64) -> Result<bool> + Sync + Send,
{
    let hits: Vec<bool> = (0..trials).into_par_iter().map(hit).collect::<Result<_>>()?;
    Ok(wilson(hits.iter().filter(|&&h| h).count() as u64, trials))
}

/// Frequency of an open left-right crossing of the `n × n` square
/// `[0,n]²`, with a Wilson interval.
pub fn crossing_prob(p: f64, n: u32, trials: u64, seed: u64) -> Result<Estimate> {
    crossing_prob_rect(p, n, n, trials, seed)
}

/// As [`crossing_prob`] for a `width × height` rectangle.
pub fn crossing_prob_rect(p: f64, width: u32, height: u32, trials: u64, seed: u64) -> Result<Estimate> {
    check_trials(trials)?;
    check_p(p)?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidRegion(format!("{width} x {height} rectangle")));
    }
    let rect = Rect::new(0, 0, width, height);
    frequency(trials, |i| {
        let w = Window::new(&field(seed, stream::CROSSING, i), rect)?;
        Ok(w.crossing(p, Direction::Horizontal, CrossingSense::OpenPrimal))
    })
}

/// Per-trial crossing thresholds of `n × n` squares, cached per `n`. The
/// square crosses at level `p` iff its threshold is below `p`.
#[derive(Debug, Clone)]
pub struct ThresholdBank {
    seed: u64,
    trials: u64,
    sorted: BTreeMap<u32, Vec<f64>>,
}

impl ThresholdBank {
    pub fn new(seed: u64, trials: u64) -> Self {
        ThresholdBank { seed, trials, sorted: BTreeMap::new() }
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    /// Sorted thresholds for side `n`.
    pub fn thresholds(&mut self, n: u32) -> Result<&[f64]> {
        if !self.sorted.contains_key(&n) {
            if n == 0 {
                return Err(Error::InvalidRegion("zero-size square".into()));
            }
            let rect = Rect::new(0, 0, n, n);
            let seed = self.seed;
            let mut t: Vec<f64> = (0..self.trials)
                .into_par_iter()
                .map(|i| Window::new(&field(seed, stream::CROSSING, i), rect).map(|w| w.crossing_threshold(Direction::Horizontal)))
                .collect::<Result<_>>()?;
            t.sort_by(f64::total_cmp);
            self.sorted.insert(n, t);
        }
        Ok(&self.sorted[&n])
    }

    /// Crossing frequency at level `p` for side `n`.
    pub fn sigma(&mut self, n: u32, p: f64) -> Result<Estimate> {
        let trials = self.trials;
        let t = self.thresholds(n)?;
        Ok(wilson(t.partition_point(|&x| x < p) as u64, trials))
    }
}

/// Number of successes out of `trials` needed for a frequency `≥ 1 − ε`.
pub fn required_hits(trials: u64, epsilon: f64) -> u64 {
    let k = ((1.0 - epsilon) * trials as f64 - 1e-9).ceil();
    (k.max(1.0) as u64).min(trials)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationLengthEstimate {
    pub p: f64,
    pub epsilon: f64,
    /// Smallest probed side whose crossing frequency reached `1 − ε`, or
    /// `n_max` when saturated.
    #[serde(rename = "L")]
    pub length: u32,
    pub trials_per_n: u64,
    /// Crossing frequency at `length`.
    pub sigma: Estimate,
    pub ci_halfwidth: f64,
    /// No probed side up to `n_max` reached `1 − ε`.
    pub saturated: bool,
}

/// `L(p, ε)` by exponential search over `n = 1, 2, 4, …` followed by binary
/// search inside the last doubling, each probe using `trials` coupled fields.
pub fn correlation_length(p: f64, epsilon: f64, trials: u64, n_max: u32, seed: u64) -> Result<CorrelationLengthEstimate> {
    if p <= P_C {
        return Err(Error::Subcritical { p, p_c: P_C });
    }
    check_p(p)?;
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Domain(format!("epsilon = {epsilon} outside (0, 1/2)")));
    }
    check_trials(trials)?;
    if n_max == 0 {
        return Err(Error::InvalidRegion("n_max = 0".into()));
    }
    let need = required_hits(trials, epsilon);
    let mut cache: BTreeMap<u32, Estimate> = BTreeMap::new();
    let mut probe = |n: u32| -> Result<bool> {
        if !cache.contains_key(&n) {
            cache.insert(n, crossing_prob(p, n, trials, seed)?);
        }
        Ok((cache[&n].value * trials as f64).round() as u64 >= need)
    };

    let mut lo = 0u32;
    let mut hi = 1u32;
    loop {
        if probe(hi)? {
            break;
        }
        if hi >= n_max {
            let sigma = crossing_prob(p, n_max, trials, seed)?;
            return Ok(CorrelationLengthEstimate {
                p,
                epsilon,
                length: n_max,
                trials_per_n: trials,
                sigma,
                ci_halfwidth: sigma.halfwidth(),
                saturated: true,
            });
        }
        lo = hi;
        hi = hi.saturating_mul(2).min(n_max);
    }
    // probe(hi) holds; probe(lo) fails (or lo = 0)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let sigma = cache[&hi];
    Ok(CorrelationLengthEstimate {
        p,
        epsilon,
        length: hi,
        trials_per_n: trials,
        sigma,
        ci_halfwidth: sigma.halfwidth(),
        saturated: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnEstimate {
    pub n: u32,
    /// Midpoint of the final bisection bracket.
    pub value: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    /// Order-statistic 95% interval for the level where the crossing
    /// frequency reaches `1 − ε`.
    pub ci: Estimate,
    pub trials: u64,
}

/// `p_n`: bisection on `p ∈ [p_c, 1]` of the predicate "the `n × n` crossing
/// frequency is below `1 − ε`" (i.e. `L(p, ε) > n`) down to width `tol`.
/// If the predicate already fails at `p_c` the trial count is doubled
/// (twice) before a bracket error is returned.
pub fn p_n_estimate(n: u32, epsilon: f64, tol: f64, trials: u64, seed: u64) -> Result<PnEstimate> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol = {tol} must be positive")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Domain(format!("epsilon = {epsilon} outside (0, 1/2)")));
    }
    check_trials(trials)?;
    let mut bank = ThresholdBank::new(seed, trials);
    for _ in 0..3 {
        if let Some(est) = p_n_from_bank(&mut bank, n, epsilon, tol)? {
            return Ok(est);
        }
        bank = ThresholdBank::new(seed, bank.trials() * 2);
    }
    Err(Error::Bracket(format!(
        "crossing frequency at p_c already reaches 1 - {epsilon} for n = {n} with {} trials",
        bank.trials() / 2
    )))
}

/// One bisection over a fixed bank; `None` when `p_c` does not bracket.
pub fn p_n_from_bank(bank: &mut ThresholdBank, n: u32, epsilon: f64, tol: f64) -> Result<Option<PnEstimate>> {
    let trials = bank.trials();
    let need = required_hits(trials, epsilon);
    let t = bank.thresholds(n)?;
    let below = |p: f64| (t.partition_point(|&x| x < p) as u64) < need;
    if !below(P_C) {
        return Ok(None);
    }
    let (mut lo, mut hi) = (P_C, 1.0);
    if below(hi) {
        // every trial must cross at p = 1; kept for robustness
        return Ok(None);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ci = quantile_ci(t, need as f64 / trials as f64);
    Ok(Some(PnEstimate { n, value: 0.5 * (lo + hi), bracket_lo: lo, bracket_hi: hi, ci, trials }))
}

/// `π(n, p)`: frequency of `0 ↔ ∂B(n)` with a Wilson interval.
pub fn pi_estimate(n: u32, p: f64, trials: u64, seed: u64) -> Result<Estimate> {
    check_trials(trials)?;
    check_p(p)?;
    frequency(trials, |i| Ok(reaches(&field(seed, stream::ONE_ARM, i), Site::ORIGIN, n, p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub estimate: Estimate,
    /// Radius of the escape event used as the proxy; the proxy is an upper
    /// bound for θ(p).
    pub r_max: u32,
}

/// θ(p) proxy `ℙ_p(0 ↔ ∂B(R_max))`.
pub fn theta_estimate(p: f64, r_max: u32, trials: u64, seed: u64) -> Result<ThetaEstimate> {
    if r_max < MIN_THETA_RADIUS {
        return Err(Error::Domain(format!("R_max = {r_max} below {MIN_THETA_RADIUS}")));
    }
    check_trials(trials)?;
    check_p(p)?;
    let estimate = frequency(trials, |i| Ok(reaches(&field(seed, stream::THETA, i), Site::ORIGIN, r_max, p)))?;
    Ok(ThetaEstimate { estimate, r_max })
}

/// Frequency of the alternating four-arm event from the edge `(0,0)-(1,0)`
/// to distance `n` at level `p`.
pub fn four_arm_prob(n: u32, p: f64, trials: u64, seed: u64) -> Result<Estimate> {
    check_trials(trials)?;
    check_p(p)?;
    let e = Edge::horizontal(Site::ORIGIN);
    frequency(trials, |i| four_arm_alternating(&field(seed, stream::FOUR_ARM, i), e, n, p, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourArmRelation {
    pub n: u32,
    pub p_n: PnEstimate,
    /// Four-arm probability at `p_c`.
    pub four_arm: Estimate,
    /// `(p_n − p_c) n² ℙ_{p_c}(A_n)`, its interval from the factors' interval ends.
    pub product: Estimate,
}

/// The near-critical product `(p_n − p_c) n² ℙ_{p_c}(four arms to n)`.
pub fn four_arm_relation(n: u32, epsilon: f64, trials: u64, seed: u64) -> Result<FourArmRelation> {
    let p_n = p_n_estimate(n, epsilon, 1e-4, trials, seed)?;
    let four_arm = four_arm_prob(n, P_C, trials, seed)?;
    let n2 = (n as f64).powi(2);
    let product = Estimate {
        value: (p_n.value - P_C) * n2 * four_arm.value,
        lo: (p_n.ci.lo - P_C).max(0.0) * n2 * four_arm.lo,
        hi: (p_n.ci.hi - P_C) * n2 * four_arm.hi,
    };
    Ok(FourArmRelation { n, p_n, four_arm, product })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleProbe {
    pub n: u32,
    pub p_n: PnEstimate,
    pub pi_n: Estimate,
    pub theta: ThetaEstimate,
}

/// `p_n`, `π_n` and θ(p_n) at one scale.
pub fn scale_probe(n: u32, epsilon: f64, trials: u64, r_max: u32, seed: u64) -> Result<ScaleProbe> {
    let p_n = p_n_estimate(n, epsilon, 1e-4, trials, seed)?;
    let pi_n = pi_estimate(n, P_C, trials, seed)?;
    let theta = theta_estimate(p_n.value, r_max, trials, seed)?;
    Ok(ScaleProbe { n, p_n, pi_n, theta })
}

/// `log^{(j)} x` in base 2, or `None` once an intermediate value is not
/// positive.
pub fn iterated_log(x: f64, j: u32) -> Option<f64> {
    let mut v = x;
    for _ in 0..j {
        if v <= 0.0 {
            return None;
        }
        v = v.log2();
    }
    Some(v)
}

/// `log* x = min{j > 0 : log^{(j)} x ≤ 10}` (base-2 logarithms).
pub fn log_star_f64(x: f64) -> Result<u32> {
    if !(x > LOG_STAR_LEVEL) || !x.is_finite() {
        return Err(Error::Domain(format!("log* needs a finite argument above {LOG_STAR_LEVEL}, got {x}")));
    }
    let mut v = x;
    let mut j = 0;
    while v > LOG_STAR_LEVEL {
        v = v.log2();
        j += 1;
    }
    Ok(j)
}

pub fn log_star(l: u64) -> Result<u32> {
    log_star_f64(l as f64)
}

/// `p_l(j)`: 1 for `j = 0`, `p_c` for `j ≥ log* l`, and otherwise the level
/// at which `L(·, ε)` drops to `l / (C_* log^{(j)} l)`, i.e. `p_m` with that
/// `m` (rounded down).
pub fn p_l_j(l: u64, j: u32, c_star: f64, epsilon: f64, trials: u64, seed: u64) -> Result<f64> {
    let ls = log_star(l)?;
    if !(c_star > 0.0) {
        return Err(Error::Domain(format!("C_* = {c_star} must be positive")));
    }
    if j == 0 {
        return Ok(1.0);
    }
    if j >= ls {
        return Ok(P_C);
    }
    let lj = iterated_log(l as f64, j).ok_or_else(|| Error::Domain(format!("log^({j}) {l} undefined")))?;
    let m = (l as f64 / (c_star * lj)).floor();
    if m < 1.0 {
        return Err(Error::Domain(format!("scale l / (C_* log^({j}) l) = {m} below 1")));
    }
    Ok(p_n_estimate(m as u32, epsilon, 1e-4, trials, seed)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_extremes() {
        assert_eq!(crossing_prob(1.0, 5, 100, 1).unwrap().value, 1.0);
        assert_eq!(crossing_prob(0.0, 5, 100, 1).unwrap().value, 0.0);
        assert!(crossing_prob(0.5, 5, 99, 1).unwrap_err().is_domain());
    }

    #[test]
    fn unit_square_matches_closed_form() {
        // left-right crossing of [0,1]^2 needs one of its two horizontal edges
        for p in [0.3, 0.5, 0.8] {
            let e = crossing_prob(p, 1, 4000, 9).unwrap();
            let exact = 1.0 - (1.0 - p) * (1.0 - p);
            assert!(e.contains(exact), "p = {p}: {e:?} vs {exact}");
        }
    }

    #[test]
    fn bank_agrees_with_direct_crossings() {
        let mut bank = ThresholdBank::new(5, 200);
        for p in [0.45, 0.5, 0.55] {
            assert_eq!(bank.sigma(6, p).unwrap(), crossing_prob(p, 6, 200, 5).unwrap());
        }
    }

    #[test]
    fn correlation_length_basics() {
        let est = correlation_length(0.99, 0.05, 200, 64, 3).unwrap();
        assert_eq!(est.length, 1);
        assert!(!est.saturated);
        assert!(matches!(correlation_length(0.5, 0.05, 200, 64, 3), Err(Error::Subcritical { .. })));
        let sat = correlation_length(0.51, 0.05, 100, 4, 3).unwrap();
        assert!(sat.saturated && sat.length == 4);
    }

    #[test]
    fn correlation_length_monotone_on_grid() {
        let ps = [0.6, 0.7, 0.8];
        let eps = [0.2, 0.1, 0.05];
        let mut l = [[0u32; 3]; 3];
        for (a, &p) in ps.iter().enumerate() {
            for (b, &e) in eps.iter().enumerate() {
                l[a][b] = correlation_length(p, e, 200, 256, 11).unwrap().length;
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                if a + 1 < 3 {
                    assert!(l[a + 1][b] <= l[a][b], "{l:?}");
                }
                if b + 1 < 3 {
                    assert!(l[a][b + 1] >= l[a][b], "{l:?}");
                }
            }
        }
        assert!(l[0][2] > l[2][2], "{l:?}");
    }

    #[test]
    fn p_n_for_unit_square_inverts_closed_form() {
        // 1 - (1-p)^2 = 1 - eps  =>  p = 1 - sqrt(eps)
        let est = p_n_estimate(1, 0.05, 1e-5, 4000, 21).unwrap();
        let exact = 1.0 - 0.05f64.sqrt();
        assert!(est.ci.contains(exact) || (est.value - exact).abs() < 0.01, "{est:?} vs {exact}");
        assert!(est.bracket_hi - est.bracket_lo <= 1e-5);
    }

    #[test]
    fn p_n_bisection_lands_on_order_statistic() {
        let mut bank = ThresholdBank::new(4, 300);
        let est = p_n_from_bank(&mut bank, 8, 0.05, 1e-9).unwrap().unwrap();
        let t = bank.thresholds(8).unwrap();
        let k = required_hits(300, 0.05) as usize;
        assert!((est.value - t[k - 1]).abs() < 1e-8);
    }

    #[test]
    fn p_n_decreases_with_n() {
        let a = p_n_estimate(4, 0.05, 1e-4, 1000, 8).unwrap();
        let b = p_n_estimate(16, 0.05, 1e-4, 1000, 8).unwrap();
        assert!(a.value > b.value && b.value > P_C);
    }

    #[test]
    fn one_arm_at_radius_one() {
        let e = pi_estimate(1, 0.5, 4000, 2).unwrap();
        assert!(e.contains(15.0 / 16.0), "{e:?}");
        assert_eq!(pi_estimate(3, 1.0, 100, 2).unwrap().value, 1.0);
    }

    #[test]
    fn theta_domain_and_extremes() {
        assert!(theta_estimate(0.6, 32, 100, 1).unwrap_err().is_domain());
        let t = theta_estimate(1.0, 64, 100, 1).unwrap();
        assert_eq!(t.estimate.value, 1.0);
        assert_eq!(t.r_max, 64);
    }

    #[test]
    fn log_star_values() {
        assert_eq!(log_star(11).unwrap(), 1);
        assert_eq!(log_star(1024).unwrap(), 1);
        assert_eq!(log_star(1025).unwrap(), 2);
        assert_eq!(log_star_f64(2f64.powi(1000)).unwrap(), 2);
        assert!(log_star(10).unwrap_err().is_domain());
        assert!((iterated_log(2f64.powi(1000), 2).unwrap() - 1000f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn p_l_j_boundaries() {
        let l = 1u64 << 20;
        let ls = log_star(l).unwrap();
        assert_eq!(p_l_j(l, 0, 1.0, 0.05, 100, 1).unwrap(), 1.0);
        assert_eq!(p_l_j(l, ls, 1.0, 0.05, 100, 1).unwrap(), P_C);
        assert!(p_l_j(10, 1, 1.0, 0.05, 100, 1).unwrap_err().is_domain());
        // l = 2^12: log* = 2, m = 4096 / (C_* * 12) < 1 for huge C_*
        assert!(p_l_j(1 << 12, 1, 1e6, 0.05, 100, 1).unwrap_err().is_domain());
        let p = p_l_j(1 << 12, 1, 64.0, 0.05, 200, 1).unwrap();
        assert!(p > P_C && p < 1.0);
    }
}
