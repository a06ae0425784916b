//! The seeded weight field `τ_e`.
//!
//! Weights are produced lazily by a counter-based generator: the canonical
//! edge is packed into a unique 63-bit counter and pushed through the
//! SplitMix64 output function, keyed by the seed. The top 53 bits become a
//! uniform double in `[0, 1)`. There is no state, so the field is `Copy`,
//! thread-safe, and any edge of the (practically) infinite lattice can be
//! queried in any order with bit-identical results.

use rustc_hash::FxHashMap;

use crate::lattice::{Edge, Orientation, COORD_LIMIT};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Top 53 bits of `h` as a double in `[0, 1)`.
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Domain tags separating the derived seed streams.
pub mod domain {
    pub const EDGE: u64 = 0x6564_6765_7765_6967; // "edgeweig"
    pub const TRIAL: u64 = 0x7472_6961_6c73_6565; // "trialsee"
}

/// Unique 63-bit counter for an edge with coordinates inside the limits.
#[inline]
fn edge_code(e: Edge) -> u64 {
    let x = (e.base.x as i64 + COORD_LIMIT) as u64;
    let y = (e.base.y as i64 + COORD_LIMIT) as u64;
    let o = match e.orientation {
        Orientation::Horizontal => 0,
        Orientation::Vertical => 1,
    };
    (x << 32) | (y << 1) | o
}

/// Seed for trial `index` of a stream rooted at `master`, under a caller
/// chosen `stream` tag. Uses the same mixer as the edge weights, keyed by a
/// separate domain tag, so no two trials share a weight field.
pub fn trial_seed(master: u64, stream: u64, index: u64) -> u64 {
    let k = mix64(master ^ domain::TRIAL).wrapping_add(mix64(stream.wrapping_add(GOLDEN)));
    mix64(k.wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// Anything that assigns a weight in `[0, 1]` to every edge.
pub trait EdgeWeights {
    fn weight(&self, e: Edge) -> f64;

    /// `e` is p-open iff `τ_e < p`.
    #[inline]
    fn is_open(&self, e: Edge, p: f64) -> bool {
        self.weight(e) < p
    }
}

impl<W: EdgeWeights + ?Sized> EdgeWeights for &W {
    #[inline]
    fn weight(&self, e: Edge) -> f64 {
        (**self).weight(e)
    }
}

/// The i.i.d. Uniform[0,1) field for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WeightField {
    seed: u64,
    key: u64,
}

impl WeightField {
    pub fn new(seed: u64) -> Self {
        WeightField { seed, key: mix64(seed ^ domain::EDGE) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn weight(&self, e: Edge) -> f64 {
        unit_f64(mix64(self.key.wrapping_add(edge_code(e).wrapping_mul(GOLDEN))))
    }
}

impl EdgeWeights for WeightField {
    #[inline]
    fn weight(&self, e: Edge) -> f64 {
        WeightField::weight(self, e)
    }
}

/// A base field with some edges overridden. Used for exhaustive
/// enumeration, hand-built configurations and flip tests.
#[derive(Debug, Clone)]
pub struct PinnedWeights<W> {
    base: W,
    pins: FxHashMap<Edge, f64>,
}

impl<W: EdgeWeights> PinnedWeights<W> {
    pub fn new(base: W) -> Self {
        PinnedWeights { base, pins: FxHashMap::default() }
    }

    pub fn pin(&mut self, e: Edge, w: f64) -> &mut Self {
        self.pins.insert(e, w);
        self
    }

    pub fn unpin(&mut self, e: Edge) {
        self.pins.remove(&e);
    }

    pub fn with(mut self, e: Edge, w: f64) -> Self {
        self.pins.insert(e, w);
        self
    }
}

impl<W: EdgeWeights> EdgeWeights for PinnedWeights<W> {
    #[inline]
    fn weight(&self, e: Edge) -> f64 {
        match self.pins.get(&e) {
            Some(&w) => w,
            None => self.base.weight(e),
        }
    }
}

/// Every edge has the same weight.
#[derive(Debug, Clone, Copy)]
pub struct ConstantWeights(pub f64);

impl EdgeWeights for ConstantWeights {
    #[inline]
    fn weight(&self, _e: Edge) -> f64 {
        self.0
    }
}
