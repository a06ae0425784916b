//! Outlets, ponds and their certification on truncated runs.
//!
//! Outlets are the suffix-maximum records of the accepted-weight sequence
//! lying above `p_c`. On a truncated run a record may still be beaten by a
//! later edge. A candidate is certified against a larger radius `R_max` by
//! continuing the invasion until it reaches `∂B(origin, R_max)`: if every edge
//! accepted on the way is lighter than the candidate, the invaded set joined
//! with the candidate-open edges already connects to `∂B(R_max)`.

use serde::{Deserialize, Serialize};

use super::{Accepted, Invader, InvasionRun, StopRule};
use crate::error::{Error, Result};
use crate::lattice::{Edge, Region, Site};
use crate::weights::EdgeWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outlet {
    /// 1-based outlet index.
    pub k: usize,
    pub edge: Edge,
    pub weight: f64,
    /// Step at which the outlet was accepted.
    pub step: u64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PondDecomposition {
    pub p_c: f64,
    pub outlets: Vec<Outlet>,
    /// `ponds[k-1]` holds the sites of pond `k`. One extra trailing entry
    /// holds the sites invaded after the last outlet (an incomplete pond).
    pub ponds: Vec<Vec<Site>>,
    /// `radii[k-1]` is the largest sup-distance from the origin over ponds `1..=k`.
    pub radii: Vec<u32>,
    /// True when the run was stopped by a weight-drop rule.
    pub weight_drop: bool,
}

impl PondDecomposition {
    pub fn outlet_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.outlets.iter().map(|o| o.weight)
    }

    /// Number of leading certified outlets.
    pub fn certified_count(&self) -> usize {
        self.outlets.iter().take_while(|o| o.certified).count()
    }

    /// Whether pond `k` (1-based) may be reported as a pond of the infinite
    /// invasion.
    pub fn pond_reported(&self, k: usize) -> bool {
        k >= 1 && k <= self.outlets.len() && (self.weight_drop || self.outlets[k - 1].certified)
    }

    /// The reported ponds, as `(k, sites)`.
    pub fn reported_ponds(&self) -> impl Iterator<Item = (usize, &[Site])> + '_ {
        (1..=self.outlets.len())
            .filter(|&k| self.pond_reported(k))
            .map(|k| (k, self.ponds[k - 1].as_slice()))
    }

    pub fn pond_volume(&self, k: usize) -> usize {
        self.ponds[k - 1].len()
    }
}

/// Indices of the suffix-maximum records of `w`, in increasing order. Each
/// record is strictly larger than everything after it, so the record values
/// strictly decrease. Among tied maxima the last occurrence is the record.
pub fn suffix_max_records(w: &[f64]) -> Vec<usize> {
    let mut rec = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for i in (0..w.len()).rev() {
        if w[i] > best {
            best = w[i];
            rec.push(i);
        }
    }
    rec.reverse();
    rec
}

/// Outlets, ponds and radii of a run. Certification flags are all false;
/// see [`decompose`] for the certified version.
pub fn pond_decomposition(run: &InvasionRun, p_c: f64) -> PondDecomposition {
    let weights: Vec<f64> = run.weights().collect();
    let records: Vec<usize> = suffix_max_records(&weights)
        .into_iter()
        .take_while(|&i| weights[i] > p_c)
        .collect();

    let mut outlets = Vec::with_capacity(records.len());
    let mut ponds = Vec::with_capacity(records.len() + 1);
    let mut radii = Vec::with_capacity(records.len());
    // step i_k has accepted index i_k - 1; G_{i_k - 1} has sites[..i_k]
    let mut lo = 0usize;
    let mut radius = 0u32;
    for (j, &idx) in records.iter().enumerate() {
        let a = &run.accepted[idx];
        let hi = a.step as usize;
        let pond = run.sites[lo..hi].to_vec();
        radius = pond.iter().map(|s| s.dist(run.origin)).fold(radius, u32::max);
        outlets.push(Outlet { k: j + 1, edge: a.edge, weight: a.weight, step: a.step, certified: false });
        ponds.push(pond);
        radii.push(radius);
        lo = hi;
    }
    ponds.push(run.sites[lo..].to_vec());
    PondDecomposition {
        p_c,
        outlets,
        ponds,
        radii,
        weight_drop: matches!(run.stop, StopRule::WeightDrop { .. }),
    }
}

/// Result of continuing a run out to `∂B(origin, r_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub r_max: u32,
    /// Edges accepted after the end of the run, up to the first one reaching `∂B(r_max)`.
    pub extension: Vec<Accepted>,
    /// Heaviest extension edge; `None` when the run already touched `∂B(r_max)`.
    pub extension_max: Option<f64>,
}

impl Certificate {
    /// A record of weight `tau` survives the extension.
    pub fn certifies(&self, tau: f64) -> bool {
        self.extension_max.map_or(true, |m| tau > m)
    }
}

/// Continue `run` on the same field until it reaches `∂B(origin, r_max)`.
pub fn extend_run<W: EdgeWeights>(run: &InvasionRun, weights: W, r_max: u32) -> Result<Certificate> {
    if run.stop.radius().is_none() {
        return Err(Error::NotCertifiable(format!("stop rule {:?} is not a radius rule", run.stop)));
    }
    if run.max_radius >= r_max {
        return Ok(Certificate { r_max, extension: Vec::new(), extension_max: None });
    }
    let mut inv = Invader::resume(weights, run);
    inv.advance(StopRule::ReachRadius(r_max))?;
    let extension = inv.accepted()[run.accepted.len()..].to_vec();
    let extension_max = extension.iter().map(|a| a.weight).fold(None, |m: Option<f64>, w| Some(m.map_or(w, |m| m.max(w))));
    Ok(Certificate { r_max, extension, extension_max })
}

/// Certification flags for every suffix-maximum record of the run, in record
/// order. The outlets above any `p_c` are a prefix of these records, and the
/// certified records are themselves a prefix.
pub fn certify_outlets<W: EdgeWeights>(run: &InvasionRun, weights: W, r_max: u32) -> Result<Vec<bool>> {
    let cert = extend_run(run, weights, r_max)?;
    let w: Vec<f64> = run.weights().collect();
    Ok(suffix_max_records(&w).into_iter().map(|i| cert.certifies(w[i])).collect())
}

/// Decomposition with certification against `r_max`.
pub fn decompose<W: EdgeWeights>(
    run: &InvasionRun,
    weights: W,
    p_c: f64,
    r_max: u32,
) -> Result<(PondDecomposition, Certificate)> {
    let mut d = pond_decomposition(run, p_c);
    let cert = extend_run(run, weights, r_max)?;
    for o in &mut d.outlets {
        o.certified = cert.certifies(o.weight);
    }
    Ok((d, cert))
}

/// Certified outlets whose edge has both endpoints in `region`.
pub fn outlet_count(d: &PondDecomposition, region: impl Into<Region>) -> usize {
    let region = region.into();
    d.outlets.iter().filter(|o| o.certified && region.contains_edge(o.edge)).count()
}
