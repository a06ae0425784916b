//! Invasion percolation from a single origin.
//!
//! At every step the invader accepts the minimum-weight edge of the outer
//! edge boundary that leads to a new site. Frontier edges whose far endpoint
//! has meanwhile been invaded are dropped lazily when they surface at the top
//! of the heap. On a finite window this is Prim's algorithm, so a complete
//! invasion invades exactly the minimum spanning tree.

mod bond;
mod ponds;
mod snapshot;

pub use ponds::{
    certify_outlets, decompose, extend_run, outlet_count, pond_decomposition, suffix_max_records,
    Certificate, Outlet, PondDecomposition,
};
pub use bond::{bond_invasion, BondInvasion};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotRecord};

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoxRegion, Edge, Site};
use crate::weights::{EdgeWeights, WeightField};

/// Default cap on accepted edges before a run gives up with `ResourceLimit`.
pub const DEFAULT_MAX_STEPS: u64 = 50_000_000;

/// Truncation rule for the (infinite) invasion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop at the first step whose new site lies on `∂B(origin, R)`.
    ReachRadius(u32),
    /// Stop after `T` accepted edges.
    StepCount(u64),
    /// Stop at the first step at which `∂B(origin, R)` has been reached and
    /// the next edge to be accepted has weight below `p_star`.
    WeightDrop { p_star: f64, radius: u32 },
}

impl StopRule {
    /// Radius of the rule if it is a radius rule.
    pub fn radius(&self) -> Option<u32> {
        match *self {
            StopRule::ReachRadius(r) => Some(r),
            StopRule::WeightDrop { radius, .. } => Some(radius),
            StopRule::StepCount(_) => None,
        }
    }
}

/// One accepted edge. `new_site` is the endpoint that joined the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    pub step: u64,
    pub edge: Edge,
    pub weight: f64,
    pub new_site: Site,
}

/// The record of a truncated invasion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvasionRun {
    pub origin: Site,
    pub seed: Option<u64>,
    pub stop: StopRule,
    /// Accepted edges in step order; `accepted[i].step == i + 1`.
    pub accepted: Vec<Accepted>,
    /// Invaded sites in invasion order, origin first; `sites[i]` joined at step `i`.
    pub sites: Vec<Site>,
    /// Outer edge boundary at termination, ascending by (weight, edge).
    pub frontier: Vec<(f64, Edge)>,
    /// Largest sup-distance from the origin reached.
    pub max_radius: u32,
    /// True when a finite window ran out of frontier before the stop rule fired.
    pub exhausted: bool,
}

impl InvasionRun {
    pub fn steps(&self) -> usize {
        self.accepted.len()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.accepted.iter().map(|a| a.weight)
    }

    pub fn max_weight(&self) -> Option<f64> {
        self.weights().fold(None, |m, w| Some(m.map_or(w, |m: f64| m.max(w))))
    }

    pub fn invaded_set(&self) -> FxHashSet<Site> {
        self.sites.iter().copied().collect()
    }

    /// Smallest frontier weight, i.e. the weight of the next edge to be invaded.
    pub fn frontier_min(&self) -> Option<f64> {
        self.frontier.first().map(|&(w, _)| w)
    }
}

/// Weight sources that know their seed.
pub trait Seeded {
    fn seed_of(&self) -> Option<u64>;
}

impl Seeded for WeightField {
    fn seed_of(&self) -> Option<u64> {
        Some(self.seed())
    }
}

impl<W: Seeded> Seeded for &W {
    fn seed_of(&self) -> Option<u64> {
        (**self).seed_of()
    }
}

impl<W> Seeded for crate::weights::PinnedWeights<W> {
    fn seed_of(&self) -> Option<u64> {
        None
    }
}

impl Seeded for crate::weights::ConstantWeights {
    fn seed_of(&self) -> Option<u64> {
        None
    }
}

type HeapKey = Reverse<(u64, Edge)>;

/// Resumable invasion state.
pub struct Invader<W> {
    weights: W,
    origin: Site,
    window: Option<BoxRegion>,
    invaded: FxHashSet<Site>,
    heap: BinaryHeap<HeapKey>,
    live: usize,
    accepted: Vec<Accepted>,
    sites: Vec<Site>,
    max_radius: u32,
    max_steps: u64,
}

impl<W: EdgeWeights> Invader<W> {
    pub fn new(weights: W, origin: Site) -> Self {
        let mut inv = Invader {
            weights,
            origin,
            window: None,
            invaded: FxHashSet::default(),
            heap: BinaryHeap::new(),
            live: 0,
            accepted: Vec::new(),
            sites: Vec::new(),
            max_radius: 0,
            max_steps: DEFAULT_MAX_STEPS,
        };
        inv.add_site(origin, None);
        inv
    }

    /// Restrict the invasion to the edges of a finite box. Must be called
    /// before the first step.
    pub fn within(mut self, window: BoxRegion) -> Self {
        assert!(self.accepted.is_empty(), "window must be set before invading");
        self.window = Some(window);
        self.heap.clear();
        self.invaded.clear();
        self.sites.clear();
        self.live = 0;
        let o = self.origin;
        self.add_site(o, None);
        self
    }

    pub fn max_steps(mut self, limit: u64) -> Self {
        self.max_steps = limit;
        self
    }

    /// Continue a previous run. The frontier is rebuilt from the run.
    pub fn resume(weights: W, run: &InvasionRun) -> Self {
        let mut heap = BinaryHeap::with_capacity(run.frontier.len());
        for &(w, e) in &run.frontier {
            heap.push(Reverse((w.to_bits(), e)));
        }
        Invader {
            weights,
            origin: run.origin,
            window: None,
            invaded: run.sites.iter().copied().collect(),
            live: heap.len(),
            heap,
            accepted: run.accepted.clone(),
            sites: run.sites.clone(),
            max_radius: run.max_radius,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn weights(&self) -> &W {
        &self.weights
    }

    pub fn is_invaded(&self, s: Site) -> bool {
        self.invaded.contains(&s)
    }

    pub fn max_radius(&self) -> u32 {
        self.max_radius
    }

    pub fn steps(&self) -> u64 {
        self.accepted.len() as u64
    }

    pub fn accepted(&self) -> &[Accepted] {
        &self.accepted
    }

    /// Number of edges currently on the outer boundary.
    pub fn frontier_len(&self) -> usize {
        self.live
    }

    fn allowed(&self, e: Edge) -> bool {
        match &self.window {
            Some(w) => w.contains_edge(e),
            None => true,
        }
    }

    fn add_site(&mut self, s: Site, via: Option<Edge>) {
        self.invaded.insert(s);
        self.sites.push(s);
        self.max_radius = self.max_radius.max(s.dist(self.origin));
        for e in s.incident_edges() {
            if Some(e) == via || !self.allowed(e) {
                continue;
            }
            let other = e.other_end(s);
            if self.invaded.contains(&other) {
                // was on the frontier, now internal; its heap entry dies lazily
                self.live -= 1;
            } else {
                let w = self.weights.weight(e);
                self.heap.push(Reverse((w.to_bits(), e)));
                self.live += 1;
            }
        }
    }

    fn drop_dead_top(&mut self) {
        while let Some(Reverse((_, e))) = self.heap.peek() {
            let (a, b) = e.endpoints();
            if self.invaded.contains(&a) && self.invaded.contains(&b) {
                self.heap.pop();
            } else {
                break;
            }
        }
    }

    /// Weight of the edge the next step would accept.
    pub fn peek_weight(&mut self) -> Option<f64> {
        self.drop_dead_top();
        self.heap.peek().map(|Reverse((w, _))| f64::from_bits(*w))
    }

    /// Accept one edge. `None` when the frontier is empty (finite windows only).
    pub fn step(&mut self) -> Option<Accepted> {
        self.drop_dead_top();
        let Reverse((wbits, e)) = self.heap.pop()?;
        let (a, b) = e.endpoints();
        let new_site = if self.invaded.contains(&a) { b } else { a };
        self.live -= 1;
        self.add_site(new_site, Some(e));
        let acc = Accepted {
            step: self.accepted.len() as u64 + 1,
            edge: e,
            weight: f64::from_bits(wbits),
            new_site,
        };
        self.accepted.push(acc);
        Some(acc)
    }

    fn limit_error(&self) -> Error {
        Error::ResourceLimit {
            what: format!("invasion exceeded {} steps", self.max_steps),
            partial: Some(Box::new(self.snapshot(StopRule::StepCount(self.steps()), None))),
        }
    }

    /// Step until `stop` fires. Returns `Ok(true)` if the window was exhausted first.
    pub fn advance(&mut self, stop: StopRule) -> Result<bool> {
        match stop {
            StopRule::ReachRadius(r) => {
                while self.max_radius < r {
                    if self.steps() >= self.max_steps {
                        return Err(self.limit_error());
                    }
                    if self.step().is_none() {
                        return Ok(true);
                    }
                }
            }
            StopRule::StepCount(t) => {
                if t > self.max_steps {
                    return Err(Error::resource(format!("step count {t} exceeds limit {}", self.max_steps)));
                }
                while self.steps() < t {
                    if self.step().is_none() {
                        return Ok(true);
                    }
                }
            }
            StopRule::WeightDrop { p_star, radius } => loop {
                if self.max_radius >= radius {
                    match self.peek_weight() {
                        Some(w) if w < p_star => break,
                        None => return Ok(true),
                        _ => {}
                    }
                }
                if self.steps() >= self.max_steps {
                    return Err(self.limit_error());
                }
                if self.step().is_none() {
                    return Ok(true);
                }
            },
        }
        Ok(false)
    }

    fn live_frontier(&self) -> Vec<(f64, Edge)> {
        let mut frontier: Vec<(f64, Edge)> = self
            .heap
            .iter()
            .filter_map(|Reverse((w, e))| {
                let (a, b) = e.endpoints();
                let dead = self.invaded.contains(&a) && self.invaded.contains(&b);
                (!dead).then(|| (f64::from_bits(*w), *e))
            })
            .collect();
        frontier.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        frontier
    }

    /// Freeze the current state into an [`InvasionRun`].
    pub fn snapshot(&self, stop: StopRule, seed: Option<u64>) -> InvasionRun {
        InvasionRun {
            origin: self.origin,
            seed,
            stop,
            accepted: self.accepted.clone(),
            sites: self.sites.clone(),
            frontier: self.live_frontier(),
            max_radius: self.max_radius,
            exhausted: false,
        }
    }

    /// Consume the invader, moving its records into an [`InvasionRun`].
    pub fn into_run(self, stop: StopRule, seed: Option<u64>, exhausted: bool) -> InvasionRun {
        let frontier = self.live_frontier();
        InvasionRun {
            origin: self.origin,
            seed,
            stop,
            accepted: self.accepted,
            sites: self.sites,
            frontier,
            max_radius: self.max_radius,
            exhausted,
        }
    }
}

/// Run the invasion from `origin` on the field until `stop` fires.
pub fn invade<W: EdgeWeights + Seeded>(weights: W, origin: Site, stop: StopRule) -> Result<InvasionRun> {
    origin.check_bounds()?;
    if let Some(r) = stop.radius() {
        BoxRegion::new(origin, r).check_bounds()?;
    }
    let seed = weights.seed_of();
    let mut inv = Invader::new(weights, origin);
    let exhausted = inv.advance(stop)?;
    Ok(inv.into_run(stop, seed, exhausted))
}

/// Invade a finite box until no frontier remains.
pub fn invade_window<W: EdgeWeights + Seeded>(weights: W, origin: Site, window: BoxRegion) -> InvasionRun {
    let seed = weights.seed_of();
    let mut inv = Invader::new(weights, origin).within(window);
    while inv.step().is_some() {}
    let steps = inv.steps();
    inv.into_run(StopRule::StepCount(steps), seed, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Orientation;
    use crate::weights::{ConstantWeights, PinnedWeights};

    #[test]
    fn greedy_first_step() {
        // incident edges of the origin: right, up, left, down
        let o = Site::ORIGIN;
        let inc = o.incident_edges();
        let w = PinnedWeights::new(ConstantWeights(0.99))
            .with(inc[0], 0.9)
            .with(inc[1], 0.3)
            .with(inc[2], 0.7)
            .with(inc[3], 0.6);
        let run = invade(&w, o, StopRule::StepCount(1)).unwrap();
        assert_eq!(run.accepted.len(), 1);
        assert_eq!(run.accepted[0].edge, Edge { base: o, orientation: Orientation::Vertical });
        assert_eq!(run.accepted[0].weight, 0.3);
        assert_eq!(run.sites, vec![o, Site::new(0, 1)]);
    }

    #[test]
    fn step_count_contract() {
        for seed in 0..20 {
            let run = invade(WeightField::new(seed), Site::ORIGIN, StopRule::StepCount(200)).unwrap();
            assert_eq!(run.accepted.len(), 200);
            let n = run.invaded_set().len();
            assert!((2..=201).contains(&n));
            // one new site per step on the tree invasion
            assert_eq!(n, 201);
            for (i, a) in run.accepted.iter().enumerate() {
                assert_eq!(a.step, i as u64 + 1);
                assert_eq!(run.sites[i + 1], a.new_site);
            }
        }
    }

    #[test]
    fn reach_radius_stops_on_boundary() {
        let run = invade(WeightField::new(9), Site::new(5, -3), StopRule::ReachRadius(12)).unwrap();
        let last = run.accepted.last().unwrap();
        assert_eq!(last.new_site.dist(Site::new(5, -3)), 12);
        assert!(run.sites[..run.sites.len() - 1].iter().all(|s| s.dist(Site::new(5, -3)) < 12));
        assert_eq!(run.max_radius, 12);
        let zero = invade(WeightField::new(9), Site::ORIGIN, StopRule::ReachRadius(0)).unwrap();
        assert!(zero.accepted.is_empty());
    }

    #[test]
    fn frontier_is_outer_boundary() {
        let run = invade(WeightField::new(4), Site::ORIGIN, StopRule::StepCount(500)).unwrap();
        let inv = run.invaded_set();
        let accepted: FxHashSet<Edge> = run.accepted.iter().map(|a| a.edge).collect();
        let mut expected = Vec::new();
        for s in &run.sites {
            for e in s.incident_edges() {
                let (a, b) = e.endpoints();
                if !(inv.contains(&a) && inv.contains(&b)) {
                    expected.push(e);
                }
            }
        }
        expected.sort();
        expected.dedup();
        let mut got: Vec<Edge> = run.frontier.iter().map(|f| f.1).collect();
        got.sort();
        assert_eq!(got, expected);
        assert!(got.iter().all(|e| !accepted.contains(e)));
        assert!(run.frontier.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let f = WeightField::new(77);
        let full = invade(f, Site::ORIGIN, StopRule::StepCount(400)).unwrap();
        let half = invade(f, Site::ORIGIN, StopRule::StepCount(150)).unwrap();
        let mut inv = Invader::resume(f, &half);
        inv.advance(StopRule::StepCount(400)).unwrap();
        assert_eq!(inv.accepted(), &full.accepted[..]);
    }

    #[test]
    fn weight_drop_stops_in_low_weights() {
        let run = invade(WeightField::new(5), Site::ORIGIN, StopRule::WeightDrop { p_star: 0.5, radius: 10 }).unwrap();
        assert!(run.max_radius >= 10);
        assert!(run.frontier_min().unwrap() < 0.5);
    }

    #[test]
    fn resource_limit_carries_partial_run() {
        let inv = Invader::new(WeightField::new(1), Site::ORIGIN).max_steps(50);
        let mut inv = inv;
        match inv.advance(StopRule::ReachRadius(1000)) {
            Err(Error::ResourceLimit { partial: Some(run), .. }) => assert_eq!(run.accepted.len(), 50),
            other => panic!("expected resource limit, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_replay() {
        let a = invade(WeightField::new(123), Site::ORIGIN, StopRule::ReachRadius(20)).unwrap();
        let b = invade(WeightField::new(123), Site::ORIGIN, StopRule::ReachRadius(20)).unwrap();
        assert_eq!(a, b);
    }
}
