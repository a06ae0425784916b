//! Experiments on outlet weights, pond volumes and outlet counts.

use serde_json::json;

use super::table::{est_cells, num, ResultTable};
use super::{check_trials, per_trial, stream, ExperimentConfig};
use crate::error::{Error, Result};
use crate::invasion::{decompose, invade, outlet_count, suffix_max_records, Invader, PondDecomposition, StopRule};
use crate::lattice::{AnnulusRegion, BoxRegion, Site};
use crate::scaling::{correlation_length, pi_estimate, theta_estimate, MIN_THETA_RADIUS};
use crate::stats::{adjusted_spread, linear_fit, mean_ci, ratio, variance, wilson, Estimate};
use crate::weights::WeightField;

const MAX_CORRELATION_N: u32 = 4096;
/// Tables are flagged above this uncertified fraction.
const UNCERTIFIED_LIMIT: f64 = 0.05;
/// Run-fraction gate for almost-sure statements.
const RUN_FRACTION: f64 = 0.95;

fn check_k(ks: &[usize], allowed: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.iter().any(|k| !allowed.contains(k)) {
        return Err(Error::Domain(format!("k-range {ks:?} must be a nonempty subset of {allowed:?}")));
    }
    Ok(())
}

fn invade_and_decompose(f: WeightField, radius: u32, cert: u32, p_c: f64) -> Result<PondDecomposition> {
    let run = invade(f, Site::ORIGIN, StopRule::ReachRadius(radius))?;
    Ok(decompose(&run, f, p_c, cert)?.0)
}

/// The first outlets of one run to `R_max` as `(weight, certified)`; a
/// record counts as certified when it occurred before the run reached
/// `R_max / 2`, the rest of the run serving as its certificate.
fn leading_records(f: WeightField, r_max: u32, p_c: f64, k_max: usize) -> Result<Vec<(f64, bool)>> {
    let mut inv = Invader::new(f, Site::ORIGIN);
    inv.advance(StopRule::ReachRadius(r_max / 2))?;
    let half = inv.steps() as usize;
    inv.advance(StopRule::ReachRadius(r_max))?;
    let w: Vec<f64> = inv.accepted().iter().map(|a| a.weight).collect();
    Ok(suffix_max_records(&w)
        .into_iter()
        .take_while(|&i| w[i] > p_c)
        .take(k_max)
        .map(|i| (w[i], i < half))
        .collect())
}

/// Tail probabilities ℙ(τ̂ₖ < p) against θ(p) and the correlation length.
pub fn exp_tau_tail(cfg: &ExperimentConfig) -> Result<ResultTable> {
    check_k(&cfg.k_range, &[1, 2, 3])?;
    for &p in &cfg.p_grid {
        if p <= cfg.p_c {
            return Err(Error::Subcritical { p, p_c: cfg.p_c });
        }
        if p > 0.6 {
            return Err(Error::Domain(format!("p = {p} above 0.6")));
        }
    }
    if cfg.r_max < MIN_THETA_RADIUS {
        return Err(Error::Domain(format!("R_max = {} below {MIN_THETA_RADIUS}", cfg.r_max)));
    }
    check_trials(cfg.trials, 1)?;
    let k_max = *cfg.k_range.iter().max().expect("nonempty");
    let runs = per_trial(cfg.seed, stream::TAU_TAIL, cfg.trials, |_, f| leading_records(f, cfg.r_max, cfg.p_c, k_max))?;

    let mut t = ResultTable::new("exp_tau_tail");
    t.col("p", "1").col("k", "1").est("prob", "1").col("prob_bracket_lo", "1").col("prob_bracket_hi", "1");
    t.col("L", "sites").col("L_saturated", "bool").est("theta", "1").col("log_L", "1").est("ratio", "1");
    t.col("certified_fraction", "1").col("runs", "count");

    let n = cfg.trials as f64;
    let mut ratios: Vec<Vec<Estimate>> = vec![Vec::new(); k_max + 1];
    let mut k1_ok = true;
    for &p in &cfg.p_grid {
        let theta = theta_estimate(p, cfg.r_max, cfg.corr_trials, cfg.seed)?.estimate;
        let corr = correlation_length(p, cfg.epsilon, cfg.corr_trials, MAX_CORRELATION_N, cfg.seed)?;
        let log_l = (corr.length as f64).ln();
        for &k in &cfg.k_range {
            let (mut below, mut decided_below, mut decided_above, mut certified) = (0u64, 0u64, 0u64, 0u64);
            for recs in &runs {
                match recs.get(k - 1) {
                    // no k-th record above p_c within R_max
                    None => below += 1,
                    Some(&(w, cert)) => {
                        if w < p {
                            below += 1;
                        }
                        if cert {
                            certified += 1;
                            if w < p {
                                decided_below += 1;
                            } else {
                                decided_above += 1;
                            }
                        }
                    }
                }
            }
            let prob = wilson(below, cfg.trials);
            let den = theta.scale(log_l.powi(k as i32 - 1));
            let r = ratio(prob, den);
            ratios[k].push(r);
            if k == 1 && (prob.value - theta.value).abs() > prob.halfwidth() + theta.halfwidth() {
                k1_ok = false;
            }
            let cert_frac = certified as f64 / n;
            if 1.0 - cert_frac > UNCERTIFIED_LIMIT {
                t.flag(format!("p = {p}, k = {k}: uncertified fraction {:.3} exceeds {UNCERTIFIED_LIMIT}", 1.0 - cert_frac));
            }
            let [pv, ph] = est_cells(prob);
            let [tv, th] = est_cells(theta);
            let [rv, rh] = est_cells(r);
            t.push(vec![
                json!(p),
                json!(k),
                pv,
                ph,
                num(decided_below as f64 / n),
                num(1.0 - decided_above as f64 / n),
                json!(corr.length),
                json!(corr.saturated),
                tv,
                th,
                num(log_l),
                rv,
                rh,
                num(cert_frac),
                json!(cfg.trials),
            ]);
        }
    }
    if cfg.k_range.contains(&1) {
        t.gate("k1_prob_matches_theta", k1_ok, "|P(tau_1 < p) - theta(p)| within the summed CI half-widths".into());
    }
    for &k in cfg.k_range.iter().filter(|&&k| k >= 2) {
        let s = adjusted_spread(&ratios[k]);
        t.gate(&format!("k{k}_ratio_within_factor"), s <= cfg.gate_factor, format!("CI-adjusted spread {s:.3} vs {}", cfg.gate_factor));
    }
    Ok(t)
}

/// Pond-volume tails ℙ(|V̂ₖ| ≥ n²πₙ).
pub fn exp_pond_volume(cfg: &ExperimentConfig) -> Result<ResultTable> {
    check_k(&cfg.k_range, &[1, 2])?;
    if cfg.n_grid.is_empty() || cfg.n_grid.iter().any(|&n| !n.is_power_of_two() || n > 256) {
        return Err(Error::Domain(format!("n-grid {:?} must hold powers of two up to 256", cfg.n_grid)));
    }
    check_trials(cfg.trials, 1)?;
    // (volume lower bound, exact) for ponds 1 and 2
    let runs = per_trial(cfg.seed, stream::POND_VOLUME, cfg.trials, |_, f| {
        let d = invade_and_decompose(f, cfg.r_max, 2 * cfg.r_max, cfg.p_c)?;
        let mut out = [(0usize, false); 2];
        let mut prefix_certified = true;
        for k in 1..=2 {
            if !prefix_certified {
                break;
            }
            let exact = d.outlets.get(k - 1).is_some_and(|o| o.certified);
            out[k - 1] = if exact {
                (d.pond_volume(k), true)
            } else {
                // the pond in progress is part of pond k
                (d.ponds[k - 1..].iter().map(Vec::len).sum(), false)
            };
            prefix_certified = exact;
        }
        Ok(out)
    })?;

    let mut t = ResultTable::new("exp_pond_volume");
    t.col("n", "sites").col("k", "1").est("prob", "1").col("prob_bracket_hi", "1");
    t.est("pi_n", "1").col("threshold", "sites").est("ratio", "1").col("undetermined_fraction", "1");
    let mut k1: Vec<Estimate> = Vec::new();
    let mut tail_ratio: Vec<f64> = Vec::new();
    for &n in &cfg.n_grid {
        let pi = pi_estimate(n, cfg.p_c, cfg.corr_trials, cfg.seed)?;
        let threshold = (n as f64).powi(2) * pi.value;
        let mut probs = [0.0; 2];
        for &k in &cfg.k_range {
            let (mut hit, mut open) = (0u64, 0u64);
            for r in &runs {
                let (v, exact) = r[k - 1];
                if v as f64 >= threshold {
                    hit += 1;
                } else if !exact {
                    open += 1;
                }
            }
            let prob = wilson(hit, cfg.trials);
            probs[k - 1] = prob.value;
            let r = ratio(prob, pi.scale((n as f64).ln().powi(k as i32 - 1)));
            if k == 1 {
                k1.push(r);
            }
            let [a, b] = est_cells(prob);
            let [c, d] = est_cells(pi);
            let [e, g] = est_cells(r);
            t.push(vec![
                json!(n),
                json!(k),
                a,
                b,
                num((hit + open) as f64 / cfg.trials as f64),
                c,
                d,
                num(threshold),
                e,
                g,
                num(open as f64 / cfg.trials as f64),
            ]);
        }
        if probs[0] > 0.0 {
            tail_ratio.push(probs[1] / probs[0]);
        }
    }
    if !k1.is_empty() {
        let s = adjusted_spread(&k1);
        t.gate("k1_ratio_within_factor", s <= cfg.gate_factor, format!("CI-adjusted spread {s:.3} vs {}", cfg.gate_factor));
    }
    if cfg.k_range.contains(&1) && cfg.k_range.contains(&2) {
        let up = tail_ratio.windows(2).all(|w| w[1] > w[0]);
        t.gate("k2_over_k1_increasing", up, format!("k=2/k=1 tail ratios {tail_ratio:?}"));
    }
    Ok(t)
}

/// Outlet counts `O(2ⁿ)` in dyadic boxes and moments of `O(n, 2n)`.
pub fn exp_outlet_growth(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.n_grid.is_empty() {
        return Err(Error::InvalidRegion("empty radius grid".into()));
    }
    if cfg.n_grid.contains(&0) {
        return Err(Error::InvalidRegion("radius exponent 0".into()));
    }
    if cfg.n_grid.iter().any(|e| !(4..=10).contains(e)) {
        return Err(Error::Domain(format!("radius exponents {:?} outside 4..=10", cfg.n_grid)));
    }
    check_trials(cfg.trials, 2)?;
    let mut exps = cfg.n_grid.clone();
    exps.sort_unstable();
    exps.dedup();
    let top = *exps.last().expect("nonempty");
    let r_run = 1u32 << top;
    // per run: (box counts, annulus counts, outlets in B(r_run), uncertified among them)
    let runs = per_trial(cfg.seed, stream::OUTLET_GROWTH, cfg.trials, |_, f| {
        let d = invade_and_decompose(f, r_run, 2 * r_run, cfg.p_c)?;
        let boxes: Vec<f64> = exps.iter().map(|&e| outlet_count(&d, BoxRegion::centered(1 << e)) as f64).collect();
        let annuli: Vec<f64> = exps
            .iter()
            .filter(|&&e| e < top)
            .map(|&e| Ok(outlet_count(&d, AnnulusRegion::centered(1 << e, 1 << (e + 1))?) as f64))
            .collect::<Result<_>>()?;
        let uncertified = d.outlets.iter().filter(|o| !o.certified).count();
        Ok((boxes, annuli, d.outlets.len(), uncertified))
    })?;

    let mut t = ResultTable::new("exp_outlet_growth");
    t.col("n", "log2 sites").col("radius", "sites").est("mean_count", "outlets").col("var_count", "outlets^2");
    t.est("count_over_n", "outlets").est("annulus_m1", "outlets").est("annulus_m2", "outlets^2").est("annulus_m3", "outlets^3");
    t.col("runs", "count");
    let mut means = Vec::new();
    let mut per_n = Vec::new();
    let mut moments: [Vec<Estimate>; 3] = Default::default();
    for (j, &e) in exps.iter().enumerate() {
        let xs: Vec<f64> = runs.iter().map(|r| r.0[j]).collect();
        let m = mean_ci(&xs);
        let over = m.scale(1.0 / e as f64);
        means.push(m.value);
        per_n.push(over);
        let mut row = vec![json!(e), json!(1u32 << e)];
        row.extend(est_cells(m));
        row.push(num(variance(&xs)));
        row.extend(est_cells(over));
        for (t_pow, slot) in moments.iter_mut().enumerate() {
            if e < top {
                let ys: Vec<f64> = runs.iter().map(|r| r.1[j].powi(t_pow as i32 + 1)).collect();
                let mt = mean_ci(&ys);
                slot.push(mt);
                row.extend(est_cells(mt));
            } else {
                row.extend([serde_json::Value::Null, serde_json::Value::Null]);
            }
        }
        row.push(json!(cfg.trials));
        t.push(row);
    }
    let total: usize = runs.iter().map(|r| r.2).sum();
    let unc: usize = runs.iter().map(|r| r.3).sum();
    let unc_frac = if total == 0 { 0.0 } else { unc as f64 / total as f64 };
    if unc_frac > UNCERTIFIED_LIMIT {
        t.flag(format!("uncertified outlet fraction {unc_frac:.3} exceeds {UNCERTIFIED_LIMIT}"));
    }
    t.meta.insert("uncertified_fraction".into(), num(unc_frac));
    t.meta.insert("per_run_counts".into(), json!(runs.iter().map(|r| &r.0).collect::<Vec<_>>()));
    if exps.len() >= 2 {
        let x: Vec<f64> = exps.iter().map(|&e| e as f64).collect();
        let fit = linear_fit(&x, &means, None);
        t.meta.insert("fit".into(), serde_json::to_value(fit).expect("fit serializes"));
        t.gate("slope_positive", fit.slope_lo > 0.0, format!("slope {:.4} in [{:.4}, {:.4}]", fit.slope, fit.slope_lo, fit.slope_hi));
    }
    let s = adjusted_spread(&per_n);
    t.gate("count_over_n_within_factor", s <= cfg.gate_factor, format!("CI-adjusted spread {s:.3} vs {}", cfg.gate_factor));
    for (i, m) in moments.iter().enumerate().filter(|(_, m)| !m.is_empty()) {
        let s = adjusted_spread(m);
        t.gate(&format!("annulus_moment{}_within_factor", i + 1), s <= cfg.gate_factor, format!("CI-adjusted spread {s:.3}"));
    }
    Ok(t)
}

/// Geometric decay of outlet weights and radii along single runs.
pub fn exp_tau_decay(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.r_max < 1024 {
        return Err(Error::Domain(format!("R_max = {} below 1024", cfg.r_max)));
    }
    check_trials(cfg.trials, 1)?;
    let runs = per_trial(cfg.seed, stream::TAU_DECAY, cfg.trials, |_, f| {
        let d = invade_and_decompose(f, cfg.r_max / 2, cfg.r_max, cfg.p_c)?;
        let k = d.certified_count();
        Ok((1..=k).map(|k| (d.outlets[k - 1].weight - cfg.p_c, d.radii[k - 1])).collect::<Vec<_>>())
    })?;
    let included: Vec<&Vec<(f64, u32)>> = runs.iter().filter(|r| r.len() >= 3).collect();
    let excluded = runs.len() - included.len();
    let k_max = included.iter().map(|r| r.len()).max().unwrap_or(0);
    let tau_ok = |r: &[(f64, u32)]| r.iter().enumerate().skip(1).all(|(i, &(g, _))| {
        let x = g.powf(1.0 / (i + 1) as f64);
        x > 0.0 && x < 1.0
    });
    let radius_ok = |r: &[(f64, u32)]| r.iter().enumerate().skip(1).all(|(i, &(_, rad))| {
        let x = (rad as f64).powf(1.0 / (i + 1) as f64);
        x > 1.0 && x < 8.0
    });

    let mut t = ResultTable::new("exp_tau_decay");
    t.col("k", "1").col("runs_with_k", "count").est("tau_root", "1").est("radius_root", "sites");
    t.col("tau_root_in_range", "1").col("radius_root_in_range", "1");
    for k in 1..=k_max {
        let at: Vec<(f64, f64)> = included
            .iter()
            .filter_map(|r| r.get(k - 1))
            .map(|&(g, rad)| (g.powf(1.0 / k as f64), (rad as f64).powf(1.0 / k as f64)))
            .collect();
        let a: Vec<f64> = at.iter().map(|x| x.0).collect();
        let b: Vec<f64> = at.iter().map(|x| x.1).collect();
        let frac = |v: &[f64], lo: f64, hi: f64| v.iter().filter(|&&x| x > lo && x < hi).count() as f64 / v.len() as f64;
        let mut row = vec![json!(k), json!(at.len())];
        row.extend(est_cells(mean_ci(&a)));
        row.extend(est_cells(mean_ci(&b)));
        row.push(num(frac(&a, 0.0, 1.0)));
        row.push(num(frac(&b, 1.0, 8.0)));
        t.push(row);
    }
    let m = included.len() as f64;
    let f_tau = included.iter().filter(|r| tau_ok(r)).count() as f64 / m;
    let f_rad = included.iter().filter(|r| radius_ok(r)).count() as f64 / m;
    let f_both = included.iter().filter(|r| tau_ok(r) && radius_ok(r)).count() as f64 / m;
    let monotone = runs.iter().all(|r| r.windows(2).all(|w| w[1].1 >= w[0].1));
    t.meta.insert("runs".into(), json!(runs.len()));
    t.meta.insert("excluded_runs".into(), json!(excluded));
    t.meta.insert("run_fraction_tau".into(), num(f_tau));
    t.meta.insert("run_fraction_radius".into(), num(f_rad));
    t.meta.insert("run_fraction_both".into(), num(f_both));
    t.meta.insert(
        "sequences".into(),
        json!(included
            .iter()
            .map(|r| r.iter().enumerate().map(|(i, &(g, rad))| {
                let k = (i + 1) as f64;
                [g.powf(1.0 / k), (rad as f64).powf(1.0 / k)]
            }).collect::<Vec<_>>())
            .collect::<Vec<_>>()),
    );
    if included.is_empty() {
        t.flag("no run has three certified outlets".into());
    }
    t.gate("radii_nondecreasing", monotone, "R_k nondecreasing in k in every run".into());
    t.gate(
        "decay_rates_in_range",
        !included.is_empty() && f_both >= RUN_FRACTION,
        format!("{f_both:.3} of {} included runs ({excluded} excluded) vs {RUN_FRACTION}", included.len()),
    );
    Ok(t)
}

/// Pooled histogram of consecutive outlet ratios `(τ̂ₖ₊₁ − p_c)/(τ̂ₖ − p_c)`.
pub fn exp_ratio_density(cfg: &ExperimentConfig) -> Result<ResultTable> {
    check_trials(cfg.trials, 1)?;
    let runs = per_trial(cfg.seed, stream::RATIO_DENSITY, cfg.trials, |_, f| {
        let d = invade_and_decompose(f, cfg.r_max / 2, cfg.r_max, cfg.p_c)?;
        let k = d.certified_count();
        Ok(d.outlets[..k].iter().map(|o| o.weight - cfg.p_c).collect::<Vec<f64>>())
    })?;
    let used: Vec<&Vec<f64>> = runs.iter().filter(|g| g.len() >= 4).collect();
    let ratios: Vec<f64> = used.iter().flat_map(|g| g.windows(2).map(|w| w[1] / w[0])).collect();
    const BINS: usize = 10;
    let mut counts = [0u64; BINS];
    for &r in &ratios {
        counts[((r * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let mut t = ResultTable::new("exp_ratio_density");
    t.col("bin", "1").col("lo", "1").col("hi", "1").col("count", "count").est("frequency", "1");
    for (b, &c) in counts.iter().enumerate() {
        let mut row = vec![json!(b), num(b as f64 / BINS as f64), num((b + 1) as f64 / BINS as f64), json!(c)];
        row.extend(est_cells(wilson(c, ratios.len() as u64)));
        t.push(row);
    }
    t.meta.insert("pooled_ratios".into(), json!(ratios.len()));
    t.meta.insert("runs_used".into(), json!(used.len()));
    t.meta.insert("excluded_runs".into(), json!(runs.len() - used.len()));
    let strict = ratios.iter().all(|&r| r > 0.0 && r < 1.0);
    t.gate("ratios_in_unit_interval", strict, "every ratio in (0, 1)".into());
    let enough = ratios.len() as u64 >= cfg.samples;
    if !enough {
        t.flag(format!("only {} pooled ratios, wanted {}", ratios.len(), cfg.samples));
    }
    let empty = counts.iter().filter(|&&c| c == 0).count();
    t.gate("all_bins_nonempty", enough && empty == 0, format!("{empty} empty bins over {} ratios", ratios.len()));
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(name: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(name).unwrap();
        c.trials = 20;
        c.corr_trials = 100;
        c
    }

    #[test]
    fn tau_tail_rejects_subcritical_p() {
        let mut c = cfg("exp_tau_tail");
        c.p_grid = vec![0.5];
        assert!(matches!(exp_tau_tail(&c), Err(Error::Subcritical { .. })));
        c.p_grid = vec![0.55];
        c.k_range = vec![4];
        assert!(exp_tau_tail(&c).unwrap_err().is_domain());
    }

    #[test]
    fn tau_tail_small_run() {
        let mut c = cfg("exp_tau_tail");
        c.p_grid = vec![0.6];
        c.r_max = 64;
        let t = exp_tau_tail(&c).unwrap();
        assert_eq!(t.rows.len(), 2);
        // P(tau_2 < p) >= P(tau_1 < p) since records decrease
        assert!(t.f64_at(1, "prob").unwrap() >= t.f64_at(0, "prob").unwrap());
        let lo = t.f64_at(0, "prob_bracket_lo").unwrap();
        let hi = t.f64_at(0, "prob_bracket_hi").unwrap();
        assert!(lo <= t.f64_at(0, "prob").unwrap() && t.f64_at(0, "prob").unwrap() <= hi);
    }

    #[test]
    fn growth_rejects_degenerate_grid() {
        let mut c = cfg("exp_outlet_growth");
        c.n_grid = vec![];
        assert!(matches!(exp_outlet_growth(&c), Err(Error::InvalidRegion(_))));
        c.n_grid = vec![0];
        assert!(matches!(exp_outlet_growth(&c), Err(Error::InvalidRegion(_))));
        c.n_grid = vec![3];
        assert!(exp_outlet_growth(&c).unwrap_err().is_domain());
    }

    #[test]
    fn growth_counts_nest() {
        let mut c = cfg("exp_outlet_growth");
        c.n_grid = vec![4, 5];
        let t = exp_outlet_growth(&c).unwrap();
        assert!(t.f64_at(1, "mean_count").unwrap() >= t.f64_at(0, "mean_count").unwrap());
        assert!(t.f64_at(0, "annulus_m1").is_some());
        assert!(t.cell(1, "annulus_m1").unwrap().is_null());
    }

    #[test]
    fn ratio_histogram_counts_everything() {
        let mut c = cfg("exp_ratio_density");
        c.r_max = 64;
        c.samples = 1;
        let t = exp_ratio_density(&c).unwrap();
        let total: u64 = (0..10).map(|b| t.cell(b, "count").unwrap().as_u64().unwrap()).sum();
        assert_eq!(total, t.meta["pooled_ratios"].as_u64().unwrap());
        assert!(t.find_gate("ratios_in_unit_interval").unwrap().passed);
    }

    #[test]
    fn decay_requires_large_radius() {
        let mut c = cfg("exp_tau_decay");
        c.r_max = 512;
        assert!(exp_tau_decay(&c).unwrap_err().is_domain());
    }

    #[test]
    fn pond_volume_small_run() {
        let mut c = cfg("exp_pond_volume");
        c.n_grid = vec![8, 16];
        c.r_max = 64;
        let t = exp_pond_volume(&c).unwrap();
        assert_eq!(t.rows.len(), 4);
        for i in 0..4 {
            assert!(t.f64_at(i, "prob").unwrap() <= t.f64_at(i, "prob_bracket_hi").unwrap());
        }
        c.n_grid = vec![12];
        assert!(exp_pond_volume(&c).unwrap_err().is_domain());
    }
}
