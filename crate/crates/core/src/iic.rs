//! Conditioned sampling of arm-event (IIC) approximants and empirical
//! window laws around vertices and edges.
//!
//! A window of radius `r` around an anchor is the p-open/closed state of
//! every edge of `B(anchor, r)`, packed as a bit pattern in a fixed
//! reference order. Edge anchors are aligned so the anchor becomes the edge
//! `(0,0)-(1,0)`; vertical anchors are rotated a quarter turn. The anchor
//! edge's own bit is always cleared for edge anchors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::connectivity::{four_arm_alternating, pivotal_edges, sigma_connected, SigmaSequence, Window};
use crate::error::{Error, Result};
use crate::invasion::decompose;
use crate::invasion::{invade, StopRule};
use crate::lattice::{canonical_edge, edges_in, BoxRegion, Edge, Site};
use crate::stats::{wilson_z, Estimate, Z95};
use crate::weights::{trial_seed, EdgeWeights, WeightField};

pub const MAX_WINDOW_RADIUS: u32 = 4;
/// Attempts evaluated per parallel batch by the rejection samplers.
const BATCH: u64 = 256;

pub mod stream {
    pub const CONDITIONED: u64 = 0x11c0;
    pub const FOUR_ARM_REF: u64 = 0x11c1;
    pub const PRODUCT: u64 = 0x11c2;
    pub const SOURCE: u64 = 0x11c3;
    pub const BOOTSTRAP: u64 = 0x11c4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeState {
    Open,
    Closed,
}

/// A cylinder event: prescribed states on finitely many edges of `B(window_radius)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    constraints: Vec<(Edge, EdgeState)>,
    window_radius: u32,
}

impl EventSpec {
    pub fn new(constraints: Vec<(Edge, EdgeState)>, window_radius: u32) -> Result<Self> {
        let b = BoxRegion::centered(window_radius);
        if let Some((e, _)) = constraints.iter().find(|(e, _)| !b.contains_edge(*e)) {
            return Err(Error::InvalidRegion(format!("{e:?} lies outside B({window_radius})")));
        }
        Ok(EventSpec { constraints, window_radius })
    }

    /// The sure event.
    pub fn sure(window_radius: u32) -> Self {
        EventSpec { constraints: Vec::new(), window_radius }
    }

    pub fn single(e: Edge, state: EdgeState, window_radius: u32) -> Result<Self> {
        Self::new(vec![(e, state)], window_radius)
    }

    pub fn constraints(&self) -> &[(Edge, EdgeState)] {
        &self.constraints
    }

    pub fn window_radius(&self) -> u32 {
        self.window_radius
    }

    /// The event shifted by `(dx, dy)`; its window is then `B((dx,dy), r)`.
    pub fn translate(&self, dx: i32, dy: i32) -> Vec<(Edge, EdgeState)> {
        self.constraints.iter().map(|&(e, s)| (e.translate(dx, dy), s)).collect()
    }

    pub fn holds<W: EdgeWeights>(&self, f: &W, p: f64) -> bool {
        holds_all(&self.constraints, |e| f.weight(e), p)
    }

    pub fn holds_in(&self, win: &Window, p: f64) -> bool {
        holds_all(&self.constraints, |e| win.weight(e).unwrap_or(f64::NAN), p)
    }
}

fn holds_all(cs: &[(Edge, EdgeState)], weight: impl Fn(Edge) -> f64, p: f64) -> bool {
    cs.iter().all(|&(e, s)| {
        let w = weight(e);
        match s {
            EdgeState::Open => w < p,
            EdgeState::Closed => w >= p,
        }
    })
}

/// A field seen from `(dx, dy)`: `weight(e) = base.weight(e + (dx, dy))`.
#[derive(Debug, Clone, Copy)]
pub struct Shifted<W> {
    pub base: W,
    pub dx: i32,
    pub dy: i32,
}

impl<W: EdgeWeights> EdgeWeights for Shifted<W> {
    fn weight(&self, e: Edge) -> f64 {
        self.base.weight(e.translate(self.dx, self.dy))
    }
}

/// Where a window is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Vertex(Site),
    Edge(Edge),
}

/// Reference edge order for windows of one radius.
#[derive(Debug, Clone)]
pub struct WindowFrame {
    radius: u32,
    edges: Vec<Edge>,
    centre_edge: usize,
}

impl WindowFrame {
    pub fn new(radius: u32) -> Result<Self> {
        if radius == 0 || radius > MAX_WINDOW_RADIUS {
            return Err(Error::Domain(format!("window radius {radius} outside 1..={MAX_WINDOW_RADIUS}")));
        }
        let mut edges = edges_in(BoxRegion::centered(radius))?;
        edges.sort();
        let e0 = Edge::horizontal(Site::ORIGIN);
        let centre_edge = edges.iter().position(|&e| e == e0).expect("B(r) contains the unit edge");
        Ok(WindowFrame { radius, edges, centre_edge })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn bits(&self) -> usize {
        self.edges.len()
    }

    fn place(anchor: Anchor, s: Site) -> Site {
        match anchor {
            Anchor::Vertex(v) => v.offset(s.x, s.y),
            Anchor::Edge(e) => match e.orientation {
                crate::lattice::Orientation::Horizontal => e.base.offset(s.x, s.y),
                crate::lattice::Orientation::Vertical => e.base.offset(-s.y, s.x),
            },
        }
    }

    /// The field edge sitting at reference position `i` for `anchor`.
    pub fn edge_at(&self, anchor: Anchor, i: usize) -> Edge {
        let (a, b) = self.edges[i].endpoints();
        canonical_edge(Self::place(anchor, a), Self::place(anchor, b)).expect("placement keeps adjacency")
    }

    /// Open/closed pattern of the window around `anchor` at level `p`.
    pub fn pattern<W: EdgeWeights>(&self, f: &W, anchor: Anchor, p: f64) -> Pattern {
        let mut words = vec![0u64; self.bits().div_ceil(64)];
        for i in 0..self.bits() {
            if matches!(anchor, Anchor::Edge(_)) && i == self.centre_edge {
                continue;
            }
            if f.weight(self.edge_at(anchor, i)) < p {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Pattern(words)
    }
}

/// Edge-state bit pattern, bit `i` for reference edge `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern(pub Vec<u64>);

impl Pattern {
    pub fn bit(&self, i: usize) -> bool {
        self.0.get(i / 64).is_some_and(|w| w >> (i % 64) & 1 == 1)
    }

    /// Hex string, most significant nibble first, `ceil(bits / 4)` digits.
    pub fn to_hex(&self, bits: usize) -> String {
        let digits = bits.div_ceil(4).max(1);
        (0..digits)
            .rev()
            .map(|d| {
                let nib = (0..4).fold(0u32, |acc, b| acc | (self.bit(4 * d + b) as u32) << b);
                char::from_digit(nib, 16).expect("nibble")
            })
            .collect()
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bad = || Error::Config { line: 0, msg: format!("bad pattern {s:?}") };
        let digits: Vec<u32> = s.chars().rev().map(|c| c.to_digit(16).ok_or_else(bad)).collect::<Result<_>>()?;
        let mut words = vec![0u64; (digits.len() * 4).div_ceil(64).max(1)];
        for (d, nib) in digits.into_iter().enumerate() {
            for b in 0..4 {
                if nib >> b & 1 == 1 {
                    let i = 4 * d + b;
                    words[i / 64] |= 1 << (i % 64);
                }
            }
        }
        Ok(Pattern(words))
    }
}

/// Empirical distribution of window patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowLaw {
    radius: u32,
    total: u64,
    counts: BTreeMap<Pattern, u64>,
}

#[derive(Serialize, Deserialize)]
struct LawEntry {
    pattern: String,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct LawJson {
    radius: u32,
    total: u64,
    entries: Vec<LawEntry>,
}

impl WindowLaw {
    pub fn new(radius: u32) -> Self {
        WindowLaw { radius, total: 0, counts: BTreeMap::new() }
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn support(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, p: &Pattern) -> u64 {
        self.counts.get(p).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Pattern, u64)> {
        self.counts.iter().map(|(p, &c)| (p, c))
    }

    pub fn observe(&mut self, p: Pattern) {
        *self.counts.entry(p).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &WindowLaw) -> Result<()> {
        if other.radius != self.radius {
            return Err(Error::Domain(format!("radius {} vs {}", self.radius, other.radius)));
        }
        for (p, &c) in &other.counts {
            *self.counts.entry(p.clone()).or_insert(0) += c;
        }
        self.total += other.total;
        Ok(())
    }

    /// Frequency of patterns with reference bit `i` set.
    pub fn bit_frequency(&self, i: usize) -> f64 {
        let hits: u64 = self.counts.iter().filter(|(p, _)| p.bit(i)).map(|(_, &c)| c).sum();
        hits as f64 / self.total as f64
    }

    pub fn to_json(&self) -> serde_json::Value {
        let bits = 2 * (2 * self.radius as usize + 1) * 2 * self.radius as usize;
        let j = LawJson {
            radius: self.radius,
            total: self.total,
            entries: self.counts.iter().map(|(p, &count)| LawEntry { pattern: p.to_hex(bits), count }).collect(),
        };
        serde_json::to_value(j).expect("law serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let j: LawJson = serde_json::from_value(v.clone())?;
        let mut law = WindowLaw::new(j.radius);
        for e in j.entries {
            *law.counts.entry(Pattern::from_hex(&e.pattern)?).or_insert(0) += e.count;
        }
        law.total = law.counts.values().sum();
        if law.total != j.total {
            return Err(Error::Config { line: 0, msg: format!("total {} but entries sum to {}", j.total, law.total) });
        }
        Ok(law)
    }

    fn cumulative(&self) -> (Vec<&Pattern>, Vec<u64>) {
        let mut acc = 0;
        let mut keys = Vec::with_capacity(self.counts.len());
        let mut cum = Vec::with_capacity(self.counts.len());
        for (p, &c) in &self.counts {
            acc += c;
            keys.push(p);
            cum.push(acc);
        }
        (keys, cum)
    }

    /// Multinomial resample of the same size.
    pub fn resample<R: Rng>(&self, rng: &mut R) -> WindowLaw {
        let (keys, cum) = self.cumulative();
        let mut out = WindowLaw::new(self.radius);
        for _ in 0..self.total {
            let u = rng.gen_range(0..self.total);
            let i = cum.partition_point(|&c| c <= u);
            out.observe(keys[i].clone());
        }
        out
    }
}

/// Half the L1 distance between the normalized histograms.
pub fn tv_distance(a: &WindowLaw, b: &WindowLaw) -> Result<f64> {
    if a.radius != b.radius {
        return Err(Error::Domain(format!("window radius {} vs {}", a.radius, b.radius)));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Undefined("total variation of an empty law".into()));
    }
    let (na, nb) = (a.total as f64, b.total as f64);
    let mut sum = 0.0;
    for (p, &c) in &a.counts {
        sum += (c as f64 / na - b.count(p) as f64 / nb).abs();
    }
    for (p, &c) in &b.counts {
        if !a.counts.contains_key(p) {
            sum += c as f64 / nb;
        }
    }
    Ok((0.5 * sum).min(1.0))
}

/// TV distance with a percentile bootstrap interval from `reps` joint
/// multinomial resamples.
pub fn tv_bootstrap(a: &WindowLaw, b: &WindowLaw, reps: usize, seed: u64) -> Result<Estimate> {
    let value = tv_distance(a, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, stream::BOOTSTRAP, 0));
    let mut tvs: Vec<f64> = (0..reps).map(|_| tv_distance(&a.resample(&mut rng), &b.resample(&mut rng))).collect::<Result<_>>()?;
    tvs.sort_by(f64::total_cmp);
    if tvs.is_empty() {
        return Ok(Estimate::exact(value));
    }
    let at = |q: f64| tvs[((q * reps as f64) as usize).min(reps - 1)];
    Ok(Estimate { value, lo: at(0.025), hi: at(0.975) })
}

/// Run `accept` on attempts `0, 1, 2, …` (in parallel batches, results in
/// attempt order) until `wanted` attempts are accepted or `max_attempts`
/// is used up. Returns the accepted values and the attempts consumed.
fn rejection<T, F>(wanted: u64, max_attempts: u64, accept: F) -> Result<(Vec<T>, u64)>
where
    T: Send,
    F: Fn(u64) -> Result<Option<T>> + Sync + Send,
{
    let mut out = Vec::new();
    let mut next = 0u64;
    while (out.len() as u64) < wanted && next < max_attempts {
        let end = (next + BATCH).min(max_attempts);
        let batch: Vec<Option<T>> = (next..end).into_par_iter().map(&accept).collect::<Result<_>>()?;
        for (i, v) in batch.into_iter().enumerate() {
            if let Some(v) = v {
                out.push(v);
                if out.len() as u64 == wanted {
                    return Ok((out, next + i as u64 + 1));
                }
            }
        }
        next = end;
    }
    Ok((out, next))
}

fn rejected(attempts: u64, accepted: u64) -> Error {
    Error::Rejected { attempts, accepted, rate: if attempts == 0 { 0.0 } else { accepted as f64 / attempts as f64 } }
}

/// Nested box radii `4, 8, …, n` for cheap early rejection of events that
/// are decreasing in the outer radius.
fn stages(start: u32, n: u32) -> Vec<u32> {
    let mut v = Vec::new();
    let mut m = start.max(1) * 4;
    while m < n {
        v.push(m);
        m *= 2;
    }
    v.push(n);
    v
}

fn check_sigma(l: u32, n: u32, sigma: &SigmaSequence) -> Result<()> {
    if !sigma.is_supported() {
        return Err(Error::Unsupported(format!("arm sequence {sigma}")));
    }
    if l >= n {
        return Err(Error::Domain(format!("need l < n, got l = {l}, n = {n}")));
    }
    let boundary = if l == 0 { 1 } else { 8 * l as usize };
    if boundary <= sigma.len() && l > 0 {
        return Err(Error::Domain(format!("|∂B({l})| = {boundary} does not exceed |σ| = {}", sigma.len())));
    }
    Ok(())
}

fn sigma_holds<W: EdgeWeights>(f: &W, l: u32, n: u32, p: f64, sigma: &SigmaSequence) -> Result<bool> {
    for m in stages(l + 1, n) {
        if m > l && !sigma_connected(f, l, m, p, sigma)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// An accepted draw of the σ-conditioned configuration on `B(n)`.
#[derive(Debug, Clone)]
pub struct ConditionedSample {
    pub window: Window,
    /// Attempts used, including the accepted one.
    pub attempts: u64,
    pub field_seed: u64,
}

/// Rejection sampling of `B(l) ↔_σ ∂B(n)`: fresh fields until the event
/// holds.
pub fn sample_conditioned(
    l: u32,
    n: u32,
    sigma: &SigmaSequence,
    p: f64,
    max_attempts: u64,
    seed: u64,
) -> Result<ConditionedSample> {
    check_sigma(l, n, sigma)?;
    let (mut got, attempts) = rejection(1, max_attempts, |i| {
        let s = trial_seed(seed, stream::CONDITIONED, i);
        Ok(sigma_holds(&WeightField::new(s), l, n, p, sigma)?.then_some(s))
    })?;
    let Some(field_seed) = got.pop() else {
        return Err(rejected(attempts, 0));
    };
    let window = Window::of_box(&WeightField::new(field_seed), BoxRegion::centered(n))?;
    Ok(ConditionedSample { window, attempts, field_seed })
}

/// Seeds of the first `samples` accepted σ-conditioned fields.
pub fn conditioned_seeds(
    l: u32,
    n: u32,
    sigma: &SigmaSequence,
    p: f64,
    samples: u64,
    max_attempts: u64,
    seed: u64,
) -> Result<(Vec<u64>, u64)> {
    check_sigma(l, n, sigma)?;
    let (seeds, attempts) = rejection(samples, max_attempts, |i| {
        let s = trial_seed(seed, stream::CONDITIONED, i);
        Ok(sigma_holds(&WeightField::new(s), l, n, p, sigma)?.then_some(s))
    })?;
    if (seeds.len() as u64) < samples {
        return Err(rejected(attempts, seeds.len() as u64));
    }
    Ok((seeds, attempts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuEstimate {
    pub estimate: Estimate,
    pub samples: u64,
    pub attempts: u64,
}

/// Frequency of `event` among `samples` accepted σ-conditioned draws, with a
/// Wilson interval at normal quantile `z`.
pub fn nu_sigma_estimate_z(
    event: &EventSpec,
    l: u32,
    n: u32,
    sigma: &SigmaSequence,
    p: f64,
    samples: u64,
    max_attempts: u64,
    seed: u64,
    z: f64,
) -> Result<NuEstimate> {
    if samples < 100 {
        return Err(Error::Domain(format!("need at least 100 samples, got {samples}")));
    }
    if event.window_radius() + 1 > n {
        return Err(Error::Domain(format!("event window B({}) not inside B({})", event.window_radius(), n - 1)));
    }
    let (seeds, attempts) = conditioned_seeds(l, n, sigma, p, samples, max_attempts, seed)?;
    let hits = seeds.par_iter().filter(|&&s| event.holds(&WeightField::new(s), p)).count() as u64;
    Ok(NuEstimate { estimate: wilson_z(hits, samples, z), samples, attempts })
}

/// [`nu_sigma_estimate_z`] at 95%.
pub fn nu_sigma_estimate(
    event: &EventSpec,
    l: u32,
    n: u32,
    sigma: &SigmaSequence,
    p: f64,
    samples: u64,
    max_attempts: u64,
    seed: u64,
) -> Result<NuEstimate> {
    nu_sigma_estimate_z(event, l, n, sigma, p, samples, max_attempts, seed, Z95)
}

/// Window law of `B(r)` around the origin under σ-conditioning of `B(l)` to `∂B(n)`.
pub fn conditioned_law(
    l: u32,
    n: u32,
    sigma: &SigmaSequence,
    p: f64,
    r: u32,
    samples: u64,
    max_attempts: u64,
    seed: u64,
) -> Result<(WindowLaw, u64)> {
    let frame = WindowFrame::new(r)?;
    let (seeds, attempts) = conditioned_seeds(l, n, sigma, p, samples, max_attempts, seed)?;
    let mut law = WindowLaw::new(r);
    for s in seeds {
        law.observe(frame.pattern(&WeightField::new(s), Anchor::Vertex(Site::ORIGIN), p));
    }
    Ok((law, attempts))
}

/// Edge-centred window law under the alternating four-arm event of the
/// edge `(0,0)-(1,0)` to distance `n` (the reference for outlet and pivotal
/// windows).
pub fn four_arm_law(n: u32, p: f64, r: u32, samples: u64, max_attempts: u64, seed: u64) -> Result<(WindowLaw, u64)> {
    let frame = WindowFrame::new(r)?;
    let e0 = Edge::horizontal(Site::ORIGIN);
    let (seeds, attempts) = rejection(samples, max_attempts, |i| {
        let s = trial_seed(seed, stream::FOUR_ARM_REF, i);
        let f = WeightField::new(s);
        for m in stages(1, n) {
            if !four_arm_alternating(&f, e0, m, p, p)? {
                return Ok(None);
            }
        }
        Ok(Some(s))
    })?;
    if (seeds.len() as u64) < samples {
        return Err(rejected(attempts, seeds.len() as u64));
    }
    let mut law = WindowLaw::new(r);
    for s in seeds {
        law.observe(frame.pattern(&WeightField::new(s), Anchor::Edge(e0), p));
    }
    Ok((law, attempts))
}

/// Unconditioned window law, vertex- or edge-centred.
pub fn product_law(edge_centred: bool, p: f64, r: u32, samples: u64, seed: u64) -> Result<WindowLaw> {
    let frame = WindowFrame::new(r)?;
    let anchor = if edge_centred { Anchor::Edge(Edge::horizontal(Site::ORIGIN)) } else { Anchor::Vertex(Site::ORIGIN) };
    let pats: Vec<Pattern> = (0..samples)
        .into_par_iter()
        .map(|i| frame.pattern(&WeightField::new(trial_seed(seed, stream::PRODUCT, i)), anchor, p))
        .collect();
    let mut law = WindowLaw::new(r);
    for pat in pats {
        law.observe(pat);
    }
    Ok(law)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawSource {
    InvadedVertex,
    BackboneVertex,
    OutletEdge,
    PivotalEdge,
}

impl LawSource {
    pub fn edge_centred(self) -> bool {
        matches!(self, LawSource::OutletEdge | LawSource::PivotalEdge)
    }

    pub fn name(self) -> &'static str {
        match self {
            LawSource::InvadedVertex => "invaded_vertex",
            LawSource::BackboneVertex => "backbone_vertex",
            LawSource::OutletEdge => "outlet_edge",
            LawSource::PivotalEdge => "pivotal_edge",
        }
    }
}

impl fmt::Display for LawSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LawSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "invaded_vertex" => LawSource::InvadedVertex,
            "backbone_vertex" => LawSource::BackboneVertex,
            "outlet_edge" => LawSource::OutletEdge,
            "pivotal_edge" => LawSource::PivotalEdge,
            other => return Err(Error::Unsupported(format!("law source {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalLawParams {
    pub seed: u64,
    pub p_c: f64,
    /// Upper bound on independent runs.
    pub max_runs: u64,
    /// Box radius for the pivotal source.
    pub pivotal_n: u32,
    /// Pivotal edges must satisfy `|e| ≤ pivotal_n − pivotal_margin`.
    pub pivotal_margin: u32,
}

impl Default for LocalLawParams {
    fn default() -> Self {
        LocalLawParams { seed: 1, p_c: 0.5, max_runs: 100_000, pivotal_n: 128, pivotal_margin: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalLaw {
    pub law: WindowLaw,
    pub runs: u64,
    /// Runs that offered no qualifying location.
    pub empty_runs: u64,
    /// Fewer than the requested samples were collected.
    pub partial: bool,
}

/// Sites at sup-distance in `[dist, dist + max(1, dist/4))` qualify.
pub fn in_band(norm: u32, dist: u32) -> bool {
    norm >= dist && norm < dist + (dist / 4).max(1)
}

/// Backbone sites of an invasion tree: sites on a tree path from the origin
/// to a site at sup-distance at least `radius`.
pub fn backbone_sites(run: &crate::invasion::InvasionRun, radius: u32) -> Vec<Site> {
    let index: FxHashMap<Site, usize> = run.sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut parent = vec![usize::MAX; run.sites.len()];
    for a in &run.accepted {
        let i = index[&a.new_site];
        parent[i] = index[&a.edge.other_end(a.new_site)];
    }
    let mut reach: Vec<bool> = run.sites.iter().map(|s| s.norm() >= radius).collect();
    for i in (1..run.sites.len()).rev() {
        if reach[i] {
            reach[parent[i]] = true;
        }
    }
    run.sites.iter().zip(reach).filter(|(_, r)| *r).map(|(&s, _)| s).collect()
}

/// Qualifying anchors of one run.
fn run_anchors(source: LawSource, dist: u32, params: &LocalLawParams, f: &WeightField) -> Result<Vec<Anchor>> {
    Ok(match source {
        LawSource::InvadedVertex | LawSource::BackboneVertex => {
            let run = invade(f, Site::ORIGIN, StopRule::ReachRadius(2 * dist))?;
            let sites = if source == LawSource::BackboneVertex { backbone_sites(&run, 2 * dist) } else { run.sites };
            sites.into_iter().filter(|s| in_band(s.norm(), dist)).map(Anchor::Vertex).collect()
        }
        LawSource::OutletEdge => {
            let run = invade(f, Site::ORIGIN, StopRule::ReachRadius(2 * dist))?;
            let (d, _) = decompose(&run, f, params.p_c, 4 * dist)?;
            d.outlets.iter().filter(|o| o.certified && in_band(o.edge.base.norm(), dist)).map(|o| Anchor::Edge(o.edge)).collect()
        }
        LawSource::PivotalEdge => {
            let bulk = params.pivotal_n.saturating_sub(params.pivotal_margin);
            pivotal_edges(f, params.pivotal_n, params.p_c)?
                .into_iter()
                .filter(|e| e.norm() <= bulk)
                .map(Anchor::Edge)
                .collect()
        }
    })
}

/// Empirical ω_{p_c} window law around qualifying locations, one location
/// per run chosen uniformly among that run's candidates.
pub fn local_window_law(source: LawSource, r: u32, dist: u32, samples: u64, params: &LocalLawParams) -> Result<LocalLaw> {
    let frame = WindowFrame::new(r)?;
    if source != LawSource::PivotalEdge && dist <= 2 * r {
        return Err(Error::Domain(format!("dist = {dist} must exceed 2r = {}", 2 * r)));
    }
    let (pats, runs) = rejection(samples, params.max_runs, |i| {
        let s = trial_seed(params.seed, stream::SOURCE, i);
        let f = WeightField::new(s);
        let anchors = run_anchors(source, dist, params, &f)?;
        if anchors.is_empty() {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let a = anchors[rng.gen_range(0..anchors.len())];
        Ok(Some(frame.pattern(&f, a, params.p_c)))
    })?;
    let mut law = WindowLaw::new(r);
    let got = pats.len() as u64;
    for p in pats {
        law.observe(p);
    }
    Ok(LocalLaw { law, runs, empty_runs: runs - got, partial: got < samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::ConstantWeights;

    #[test]
    fn frame_alignment() {
        let fr = WindowFrame::new(1).unwrap();
        assert_eq!(fr.bits(), 12);
        let v = Edge::vertical(Site::new(3, -2));
        // the anchor itself sits at the centre slot after rotation
        assert_eq!(fr.edge_at(Anchor::Edge(v), fr.centre_edge), v);
        let h = Edge::horizontal(Site::new(-5, 7));
        assert_eq!(fr.edge_at(Anchor::Edge(h), fr.centre_edge), h);
        let placed: std::collections::BTreeSet<Edge> = (0..12).map(|i| fr.edge_at(Anchor::Edge(v), i)).collect();
        let expected: std::collections::BTreeSet<Edge> = edges_in(BoxRegion::new(v.base, 1)).unwrap().into_iter().collect();
        assert_eq!(placed, expected);
    }

    #[test]
    fn pattern_hex_round_trip() {
        let fr = WindowFrame::new(3).unwrap();
        let f = WeightField::new(4);
        let p = fr.pattern(&f, Anchor::Vertex(Site::new(2, 2)), 0.5);
        let hex = p.to_hex(fr.bits());
        assert_eq!(hex.len(), fr.bits().div_ceil(4));
        assert_eq!(Pattern::from_hex(&hex).unwrap(), p);
    }

    #[test]
    fn tv_basics() {
        let mut a = WindowLaw::new(1);
        let mut b = WindowLaw::new(1);
        a.observe(Pattern(vec![1]));
        a.observe(Pattern(vec![2]));
        b.observe(Pattern(vec![3]));
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_distance(&a, &b).unwrap(), 1.0);
        assert!(matches!(tv_distance(&a, &WindowLaw::new(1)), Err(Error::Undefined(_))));
        assert!(tv_distance(&a, &WindowLaw::new(2)).unwrap_err().is_domain());
        let mut c = a.clone();
        c.merge(&b).unwrap();
        assert_eq!(c.total(), 3);
        assert!((tv_distance(&a, &c).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn law_json_round_trip() {
        let law = product_law(false, 0.5, 1, 300, 2).unwrap();
        let j = law.to_json();
        assert_eq!(j["radius"], 1);
        assert_eq!(j["total"], 300);
        assert_eq!(WindowLaw::from_json(&j).unwrap(), law);
    }

    /// `E|X − Y|` for independent Poisson(λ) counts, summed exactly.
    fn poisson_abs_diff(lambda: f64) -> f64 {
        let pmf: Vec<f64> = (0..200)
            .scan(f64::exp(-lambda), |p, k| {
                let cur = *p;
                *p *= lambda / (k as f64 + 1.0);
                Some(cur)
            })
            .collect();
        let mut e = 0.0;
        for (i, a) in pmf.iter().enumerate() {
            for (j, b) in pmf.iter().enumerate() {
                e += a * b * (i as f64 - j as f64).abs();
            }
        }
        e
    }

    #[test]
    fn independent_product_samples_sit_at_the_noise_floor() {
        let n = 10_000u64;
        let a = product_law(false, 0.5, 1, n, 1).unwrap();
        let b = product_law(false, 0.5, 1, n, 2).unwrap();
        // 4096 equally likely cells: TV ≈ K E|X − Y| / (2N) with X, Y ~ Poisson(N/K)
        let k = 4096.0;
        let floor = k * poisson_abs_diff(n as f64 / k) / (2.0 * n as f64);
        let tv = tv_distance(&a, &b).unwrap();
        assert!((tv - floor).abs() < 0.02, "{tv} vs {floor}");
        assert!((a.bit_frequency(0) - b.bit_frequency(0)).abs() < 0.05);
        let boot = tv_bootstrap(&a, &b, 50, 3).unwrap();
        assert!(boot.lo <= boot.hi);
    }

    #[test]
    fn sampler_edge_cases() {
        let one = SigmaSequence::one_arm();
        let s = sample_conditioned(1, 2, &one, 1.0, 10, 3).unwrap();
        assert_eq!(s.attempts, 1);
        assert!(matches!(sample_conditioned(1, 2, &one, 0.0, 50, 3), Err(Error::Rejected { attempts: 50, accepted: 0, .. })));
        assert!(sample_conditioned(2, 2, &one, 0.5, 10, 3).unwrap_err().is_domain());
        let sure = EventSpec::sure(1);
        let e = nu_sigma_estimate(&sure, 1, 3, &one, 0.5, 200, 10_000, 1).unwrap();
        assert_eq!(e.estimate.value, 1.0);
        assert!(EventSpec::single(Edge::horizontal(Site::new(1, 0)), EdgeState::Open, 1).is_err());
    }

    #[test]
    fn acceptance_rate_matches_direct_frequency() {
        let one = SigmaSequence::one_arm();
        let (seeds, attempts) = conditioned_seeds(0, 3, &one, 0.5, 2000, 1_000_000, 5).unwrap();
        let rate = wilson_z(seeds.len() as u64, attempts, Z95);
        let direct = crate::scaling::pi_estimate(3, 0.5, 4000, 6).unwrap();
        assert!(rate.lo <= direct.hi && direct.lo <= rate.hi, "{rate:?} vs {direct:?}");
    }

    #[test]
    fn conditioning_boosts_an_arm_edge() {
        // with l = 0 the origin's arm must leave through one of its four edges
        let e = Edge::horizontal(Site::ORIGIN);
        let spec = EventSpec::single(e, EdgeState::Open, 1).unwrap();
        let est = nu_sigma_estimate(&spec, 0, 8, &SigmaSequence::one_arm(), 0.5, 2000, 1_000_000, 9).unwrap();
        assert!(est.estimate.lo > 0.5, "{est:?}");
        let closed = EventSpec::new(Site::ORIGIN.incident_edges().iter().map(|&g| (g, EdgeState::Closed)).collect(), 1).unwrap();
        let none = nu_sigma_estimate(&closed, 0, 8, &SigmaSequence::one_arm(), 0.5, 200, 1_000_000, 9).unwrap();
        assert_eq!(none.estimate.value, 0.0);
    }

    #[test]
    fn shift_alignment_is_exact() {
        let f = WeightField::new(77);
        let spec = EventSpec::new(
            vec![(Edge::horizontal(Site::new(-1, 0)), EdgeState::Open), (Edge::vertical(Site::new(1, -1)), EdgeState::Closed)],
            1,
        )
        .unwrap();
        for (dx, dy) in [(0, 0), (5, -3), (-40, 12)] {
            let moved = holds_all(&spec.translate(dx, dy), |e| f.weight(e), 0.5);
            assert_eq!(moved, spec.holds(&Shifted { base: &f, dx, dy }, 0.5));
        }
    }

    #[test]
    fn backbone_of_a_line() {
        let run = invade(ConstantWeights(0.3), Site::ORIGIN, StopRule::ReachRadius(3)).unwrap();
        let bb = backbone_sites(&run, 3);
        assert!(bb.contains(&Site::ORIGIN));
        assert!(bb.iter().any(|s| s.norm() == 3));
        // every backbone site except the end has a backbone child
        assert!(bb.len() <= run.sites.len());
    }

    #[test]
    fn pivotal_law_of_all_open_field_is_empty() {
        let params = LocalLawParams { max_runs: 50, pivotal_n: 8, pivotal_margin: 4, ..Default::default() };
        assert!(pivotal_edges(&ConstantWeights(0.0), 8, 0.5).unwrap().is_empty());
        // every field with no pivotal bulk edge contributes nothing
        let l = local_window_law(LawSource::PivotalEdge, 1, 0, 1_000_000, &params).unwrap();
        assert!(l.partial && l.runs == 50 && l.law.total() + l.empty_runs == 50);
    }

    #[test]
    fn local_laws_collect() {
        let params = LocalLawParams { seed: 3, max_runs: 200, pivotal_n: 16, pivotal_margin: 8, ..Default::default() };
        for src in [LawSource::InvadedVertex, LawSource::BackboneVertex, LawSource::OutletEdge, LawSource::PivotalEdge] {
            let l = local_window_law(src, 1, 8, 20, &params).unwrap();
            assert!(l.law.total() > 0, "{src}");
            if src.edge_centred() {
                assert!(l.law.entries().all(|(p, _)| !p.bit(WindowFrame::new(1).unwrap().centre_edge)));
            }
        }
    }
}
