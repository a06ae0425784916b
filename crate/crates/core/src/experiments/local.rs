//! Window laws near invasion features against conditioned references.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::table::{est_cells, ResultTable};
use super::{stream, ExperimentConfig};
use crate::connectivity::SigmaSequence;
use crate::error::{Error, Result};
use crate::iic::{
    conditioned_law, four_arm_law, local_window_law, product_law, tv_bootstrap, tv_distance, LawSource, LocalLawParams,
    WindowLaw, MAX_WINDOW_RADIUS,
};
use crate::stats::Estimate;
use crate::weights::trial_seed;

/// Source runs allowed per requested sample.
const RUNS_PER_SAMPLE: u64 = 500;
/// Reference rejection attempts allowed per requested sample.
const ATTEMPTS_PER_SAMPLE: u64 = 10_000;

/// Bootstrap of `TV(a, ref_a) − TV(b, ref_b)`. Laws passed more than once
/// (by reference) are resampled once per replicate, keeping the pairing.
pub fn tv_difference(
    a: &WindowLaw,
    ref_a: &WindowLaw,
    b: &WindowLaw,
    ref_b: &WindowLaw,
    reps: usize,
    seed: u64,
) -> Result<Estimate> {
    let value = tv_distance(a, ref_a)? - tv_distance(b, ref_b)?;
    let laws = [a, ref_a, b, ref_b];
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, stream::BOOTSTRAP, 0));
    let mut diffs = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut drawn: Vec<WindowLaw> = Vec::with_capacity(4);
        for (i, law) in laws.iter().enumerate() {
            match laws[..i].iter().position(|l| std::ptr::eq(*l, *law)) {
                Some(j) => {
                    let copy = drawn[j].clone();
                    drawn.push(copy);
                }
                None => drawn.push(law.resample(&mut rng)),
            }
        }
        diffs.push(tv_distance(&drawn[0], &drawn[1])? - tv_distance(&drawn[2], &drawn[3])?);
    }
    if diffs.is_empty() {
        return Ok(Estimate::exact(value));
    }
    diffs.sort_by(f64::total_cmp);
    let at = |q: f64| diffs[((q * reps as f64) as usize).min(reps - 1)];
    Ok(Estimate { value, lo: at(0.025), hi: at(0.975) })
}

struct References {
    four_arm: Option<WindowLaw>,
    one_arm: Option<WindowLaw>,
    two_arm: Option<WindowLaw>,
    product_edge: Option<WindowLaw>,
    product_vertex: Option<WindowLaw>,
}

impl References {
    fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let (r, n, p, s) = (cfg.window_radius, cfg.reference_n, cfg.p_c, cfg.samples);
        let cap = s.saturating_mul(ATTEMPTS_PER_SAMPLE);
        let edge = cfg.sources.iter().any(|x| x.edge_centred());
        let wants = |x: LawSource| cfg.sources.contains(&x);
        Ok(References {
            four_arm: if edge { Some(four_arm_law(n, p, r, s, cap, cfg.seed)?.0) } else { None },
            one_arm: if wants(LawSource::InvadedVertex) {
                Some(conditioned_law(0, n, &SigmaSequence::one_arm(), p, r, s, cap, cfg.seed)?.0)
            } else {
                None
            },
            two_arm: if wants(LawSource::BackboneVertex) {
                Some(conditioned_law(0, n, &SigmaSequence::two_open(), p, r, s, cap, cfg.seed)?.0)
            } else {
                None
            },
            product_edge: if edge { Some(product_law(true, p, r, s, cfg.seed)?) } else { None },
            product_vertex: if cfg.sources.iter().any(|x| !x.edge_centred()) {
                Some(product_law(false, p, r, s, cfg.seed)?)
            } else {
                None
            },
        })
    }

    /// The arm-conditioned reference and the product reference of a source.
    fn for_source(&self, source: LawSource) -> [(&'static str, &WindowLaw); 2] {
        let (name, arm, product) = match source {
            LawSource::OutletEdge | LawSource::PivotalEdge => ("four_arm", &self.four_arm, &self.product_edge),
            LawSource::InvadedVertex => ("one_arm", &self.one_arm, &self.product_vertex),
            LawSource::BackboneVertex => ("two_arm", &self.two_arm, &self.product_vertex),
        };
        [(name, arm.as_ref().expect("reference built")), ("product", product.as_ref().expect("reference built"))]
    }
}

pub fn exp_local_laws(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let r = cfg.window_radius;
    if r == 0 || r > MAX_WINDOW_RADIUS {
        return Err(Error::Domain(format!("window radius {r} outside 1..={MAX_WINDOW_RADIUS}")));
    }
    if cfg.sources.is_empty() {
        return Err(Error::Domain("no law sources".into()));
    }
    if cfg.dist_grid.is_empty() && cfg.sources.iter().any(|&s| s != LawSource::PivotalEdge) {
        return Err(Error::Domain("empty distance grid".into()));
    }
    let refs = References::build(cfg)?;
    let params = LocalLawParams {
        seed: cfg.seed,
        p_c: cfg.p_c,
        max_runs: cfg.samples.saturating_mul(RUNS_PER_SAMPLE),
        pivotal_n: cfg.pivotal_n,
        pivotal_margin: cfg.pivotal_n / 2,
    };

    let mut t = ResultTable::new("exp_local_laws");
    t.col("source", "").col("dist", "sites").col("reference", "").est("tv", "1");
    t.col("samples", "count").col("reference_samples", "count").col("runs", "count").col("partial", "bool");
    let mut collected: Vec<(LawSource, u32, WindowLaw)> = Vec::new();
    for &source in &cfg.sources {
        let dists = if source == LawSource::PivotalEdge { vec![cfg.pivotal_n] } else { cfg.dist_grid.clone() };
        for d in dists {
            let law = local_window_law(source, r, d, cfg.samples, &params)?;
            if law.partial {
                t.flag(format!("{source} at dist {d}: {} of {} samples after {} runs", law.law.total(), cfg.samples, law.runs));
            }
            if law.law.is_empty() {
                continue;
            }
            for (name, reference) in refs.for_source(source) {
                let tv = tv_bootstrap(&law.law, reference, cfg.bootstrap, cfg.seed)?;
                let mut row = vec![json!(source.name()), json!(d), json!(name)];
                row.extend(est_cells(tv));
                row.extend([json!(law.law.total()), json!(reference.total()), json!(law.runs), json!(law.partial)]);
                t.push(row);
            }
            collected.push((source, d, law.law));
        }
    }

    let outlets: Vec<&(LawSource, u32, WindowLaw)> = collected.iter().filter(|c| c.0 == LawSource::OutletEdge).collect();
    if outlets.len() >= 2 {
        let near = outlets.iter().min_by_key(|c| c.1).expect("two laws");
        let far = outlets.iter().max_by_key(|c| c.1).expect("two laws");
        let four_arm = refs.four_arm.as_ref().expect("edge reference");
        let diff = tv_difference(&far.2, four_arm, &near.2, four_arm, cfg.bootstrap, cfg.seed)?;
        t.meta.insert("outlet_tv_difference".into(), serde_json::to_value(diff).expect("estimate serializes"));
        t.gate(
            "outlet_tv_decreasing",
            diff.hi < 0.0,
            format!("TV(dist {}) - TV(dist {}) = {:.4} in [{:.4}, {:.4}]", far.1, near.1, diff.value, diff.lo, diff.hi),
        );
    }
    if let Some(piv) = collected.iter().find(|c| c.0 == LawSource::PivotalEdge) {
        let [(_, arm), (_, product)] = refs.for_source(LawSource::PivotalEdge);
        let diff = tv_difference(&piv.2, arm, &piv.2, product, cfg.bootstrap, cfg.seed)?;
        t.meta.insert("pivotal_tv_difference".into(), serde_json::to_value(diff).expect("estimate serializes"));
        t.gate(
            "pivotal_closer_to_four_arm",
            diff.hi < 0.0,
            format!("TV(four-arm) - TV(product) = {:.4} in [{:.4}, {:.4}]", diff.value, diff.lo, diff.hi),
        );
    }
    Ok(t)
}
