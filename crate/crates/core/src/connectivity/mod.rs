//! Bernoulli percolation on the coupled field: an edge is p-open iff its
//! weight is below `p`, and its dual edge is p-closed iff the edge is.
//!
//! Work happens on a [`Window`], a rectangle of primal sites whose edge
//! weights are materialized once. The dual lattice of a window is its set of
//! interior faces, each face named by its lower-left corner. Dual crossings
//! of a rectangle use the faces as interior dual sites and attach the
//! terminal dual rows (or columns) just outside through the rectangle's own
//! boundary edges, which makes the open/closed crossing duality exact.

mod arms;
mod flow;
mod union_find;

pub use arms::{
    closed_dual_crossing_count, dual_circuit_blocks, four_arm_alternating, open_arm_count,
    open_crossing_cluster_count, pivotal_edges, reaches, sigma_connected, sigma_connected_at,
    ArmColour, SigmaSequence,
};
pub use flow::DisjointPaths;
pub use union_find::UnionFind;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoxRegion, Edge, Orientation, Site};
use crate::weights::EdgeWeights;

/// Largest number of sites a window may hold.
pub const MAX_WINDOW_SITES: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lattice {
    Primal,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Open,
    Closed,
}

impl Sense {
    #[inline]
    pub fn admits(self, weight: f64, p: f64) -> bool {
        match self {
            Sense::Open => weight < p,
            Sense::Closed => weight >= p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Left side to right side.
    Horizontal,
    /// Bottom side to top side.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrossingSense {
    OpenPrimal,
    ClosedDual,
}

/// The sites `[x0, x0 + width] × [y0, y0 + height]`. Dimensions count edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i32,
    pub y0: i32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn new(x0: i32, y0: i32, width: u32, height: u32) -> Self {
        Rect { x0, y0, width, height }
    }

    pub fn of_box(b: BoxRegion) -> Self {
        let r = b.radius as i32;
        Rect { x0: b.center.x - r, y0: b.center.y - r, width: 2 * b.radius, height: 2 * b.radius }
    }

    pub fn contains(&self, s: Site) -> bool {
        let (dx, dy) = (s.x as i64 - self.x0 as i64, s.y as i64 - self.y0 as i64);
        dx >= 0 && dy >= 0 && dx <= self.width as i64 && dy <= self.height as i64
    }

    pub fn contains_edge(&self, e: Edge) -> bool {
        let (a, b) = e.endpoints();
        self.contains(a) && self.contains(b)
    }

    pub fn site_count(&self) -> usize {
        (self.width as usize + 1) * (self.height as usize + 1)
    }

    pub fn face_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    fn check(&self) -> Result<()> {
        let lo = -(crate::lattice::COORD_LIMIT);
        let hi = crate::lattice::COORD_LIMIT;
        let x1 = self.x0 as i64 + self.width as i64;
        let y1 = self.y0 as i64 + self.height as i64;
        if (self.x0 as i64) <= lo || (self.y0 as i64) <= lo || x1 >= hi || y1 >= hi {
            return Err(Error::InvalidRegion(format!("{self:?} exceeds coordinate limits")));
        }
        if self.site_count() > MAX_WINDOW_SITES {
            return Err(Error::resource(format!("window of {} sites exceeds the memory budget", self.site_count())));
        }
        Ok(())
    }
}

/// Edge weights of a rectangle, materialized.
///
/// Horizontal edge `(i, j)` joins local sites `(i, j)` and `(i+1, j)`;
/// vertical edge `(i, j)` joins `(i, j)` and `(i, j+1)`. Face `(i, j)` is the
/// unit square with lower-left corner at local site `(i, j)`.
#[derive(Debug, Clone)]
pub struct Window {
    rect: Rect,
    hw: Vec<f64>,
    vw: Vec<f64>,
}

impl Window {
    pub fn new<W: EdgeWeights>(f: &W, rect: Rect) -> Result<Self> {
        rect.check()?;
        let (w, h) = (rect.width as usize, rect.height as usize);
        let mut hw = Vec::with_capacity(w * (h + 1));
        for j in 0..=h {
            for i in 0..w {
                hw.push(f.weight(Edge::horizontal(Site::new(rect.x0 + i as i32, rect.y0 + j as i32))));
            }
        }
        let mut vw = Vec::with_capacity((w + 1) * h);
        for j in 0..h {
            for i in 0..=w {
                vw.push(f.weight(Edge::vertical(Site::new(rect.x0 + i as i32, rect.y0 + j as i32))));
            }
        }
        Ok(Window { rect, hw, vw })
    }

    pub fn of_box<W: EdgeWeights>(f: &W, b: BoxRegion) -> Result<Self> {
        Window::new(f, Rect::of_box(b))
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.rect.width as usize
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.rect.height as usize
    }

    #[inline]
    pub fn hweight(&self, i: usize, j: usize) -> f64 {
        self.hw[j * self.w() + i]
    }

    #[inline]
    pub fn vweight(&self, i: usize, j: usize) -> f64 {
        self.vw[j * (self.w() + 1) + i]
    }

    #[inline]
    pub fn site_index(&self, i: usize, j: usize) -> usize {
        j * (self.w() + 1) + i
    }

    #[inline]
    pub fn face_index(&self, i: usize, j: usize) -> usize {
        j * self.w() + i
    }

    pub fn local(&self, s: Site) -> Option<(usize, usize)> {
        self.rect.contains(s).then(|| ((s.x - self.rect.x0) as usize, (s.y - self.rect.y0) as usize))
    }

    pub fn site(&self, i: usize, j: usize) -> Site {
        Site::new(self.rect.x0 + i as i32, self.rect.y0 + j as i32)
    }

    pub fn index_of(&self, s: Site) -> Option<usize> {
        self.local(s).map(|(i, j)| self.site_index(i, j))
    }

    pub fn h_edge(&self, i: usize, j: usize) -> Edge {
        Edge::horizontal(self.site(i, j))
    }

    pub fn v_edge(&self, i: usize, j: usize) -> Edge {
        Edge::vertical(self.site(i, j))
    }

    /// Weight of an edge of the window.
    pub fn weight(&self, e: Edge) -> Option<f64> {
        if !self.rect.contains_edge(e) {
            return None;
        }
        let (i, j) = self.local(e.base)?;
        Some(match e.orientation {
            Orientation::Horizontal => self.hweight(i, j),
            Orientation::Vertical => self.vweight(i, j),
        })
    }

    /// Override one edge weight.
    pub fn set_weight(&mut self, e: Edge, weight: f64) -> bool {
        if !self.rect.contains_edge(e) {
            return false;
        }
        let (i, j) = self.local(e.base).expect("edge inside window");
        let w = self.w();
        match e.orientation {
            Orientation::Horizontal => self.hw[j * w + i] = weight,
            Orientation::Vertical => self.vw[j * (w + 1) + i] = weight,
        }
        true
    }

    /// Every edge of the window with its weight, row-major, horizontal first.
    pub fn edges(&self) -> impl Iterator<Item = (Edge, f64)> + '_ {
        let (w, h) = (self.w(), self.h());
        (0..=h).flat_map(move |j| {
            let hs = (0..w).map(move |i| (self.h_edge(i, j), self.hweight(i, j)));
            let vs = (0..=w).filter(move |_| j < h).map(move |i| (self.v_edge(i, j), self.vweight(i, j)));
            hs.chain(vs)
        })
    }

    /// Union-find over the window sites (plus `extra` virtual nodes at the
    /// end) joining every edge whose weight satisfies `keep` and for which
    /// `skip` is false.
    pub fn primal_union<K, S>(&self, extra: usize, keep: K, skip: S) -> UnionFind
    where
        K: Fn(f64) -> bool,
        S: Fn(Edge) -> bool,
    {
        let (w, h) = (self.w(), self.h());
        let mut uf = UnionFind::new(self.rect.site_count() + extra);
        for j in 0..=h {
            for i in 0..w {
                if keep(self.hweight(i, j)) && !skip(self.h_edge(i, j)) {
                    uf.union(self.site_index(i, j), self.site_index(i + 1, j));
                }
            }
        }
        for j in 0..h {
            for i in 0..=w {
                if keep(self.vweight(i, j)) && !skip(self.v_edge(i, j)) {
                    uf.union(self.site_index(i, j), self.site_index(i, j + 1));
                }
            }
        }
        uf
    }

    /// Union-find over the window faces (plus `extra` virtual nodes) joining
    /// adjacent faces across every interior edge whose weight satisfies `keep`
    /// and for which `skip` is false.
    pub fn dual_union<K, S>(&self, extra: usize, keep: K, skip: S) -> UnionFind
    where
        K: Fn(f64) -> bool,
        S: Fn(Edge) -> bool,
    {
        let (w, h) = (self.w(), self.h());
        let mut uf = UnionFind::new(self.rect.face_count() + extra);
        // faces (i, j-1) and (i, j) share horizontal edge (i, j)
        for j in 1..h {
            for i in 0..w {
                if keep(self.hweight(i, j)) && !skip(self.h_edge(i, j)) {
                    uf.union(self.face_index(i, j - 1), self.face_index(i, j));
                }
            }
        }
        // faces (i-1, j) and (i, j) share vertical edge (i, j)
        for j in 0..h {
            for i in 1..w {
                if keep(self.vweight(i, j)) && !skip(self.v_edge(i, j)) {
                    uf.union(self.face_index(i - 1, j), self.face_index(i, j));
                }
            }
        }
        uf
    }

    /// Whether the rectangle is crossed in `dir` by a path of the given sense.
    pub fn crossing(&self, p: f64, dir: Direction, sense: CrossingSense) -> bool {
        let (w, h) = (self.w(), self.h());
        match sense {
            CrossingSense::OpenPrimal => {
                let n = self.rect.site_count();
                let (a, b) = (n, n + 1);
                let mut uf = self.primal_union(2, |x| x < p, |_| false);
                match dir {
                    Direction::Horizontal => {
                        for j in 0..=h {
                            uf.union(a, self.site_index(0, j));
                            uf.union(b, self.site_index(w, j));
                        }
                    }
                    Direction::Vertical => {
                        for i in 0..=w {
                            uf.union(a, self.site_index(i, 0));
                            uf.union(b, self.site_index(i, h));
                        }
                    }
                }
                uf.same(a, b)
            }
            CrossingSense::ClosedDual => {
                let closed = |x: f64| x >= p;
                let n = self.rect.face_count();
                let (a, b) = (n, n + 1);
                let mut uf = self.dual_union(2, closed, |_| false);
                match dir {
                    Direction::Vertical => {
                        for i in 0..w {
                            if closed(self.hweight(i, 0)) {
                                uf.union(a, self.face_index(i, 0));
                            }
                            if closed(self.hweight(i, h)) {
                                uf.union(b, self.face_index(i, h - 1));
                            }
                        }
                    }
                    Direction::Horizontal => {
                        for j in 0..h {
                            if closed(self.vweight(0, j)) {
                                uf.union(a, self.face_index(0, j));
                            }
                            if closed(self.vweight(w, j)) {
                                uf.union(b, self.face_index(w - 1, j));
                            }
                        }
                    }
                }
                uf.same(a, b)
            }
        }
    }

    /// Smallest weight level at which the rectangle has an open crossing in
    /// `dir`: the crossing is p-open iff the returned value is below `p`.
    pub fn crossing_threshold(&self, dir: Direction) -> f64 {
        let (w, h) = (self.w(), self.h());
        let n = self.rect.site_count();
        let (a, b) = (n, n + 1);
        let mut uf = UnionFind::new(n + 2);
        match dir {
            Direction::Horizontal => {
                for j in 0..=h {
                    uf.union(a, self.site_index(0, j));
                    uf.union(b, self.site_index(w, j));
                }
            }
            Direction::Vertical => {
                for i in 0..=w {
                    uf.union(a, self.site_index(i, 0));
                    uf.union(b, self.site_index(i, h));
                }
            }
        }
        if uf.same(a, b) {
            return f64::NEG_INFINITY;
        }
        let mut order: Vec<(f64, u32, u32)> = Vec::with_capacity(self.hw.len() + self.vw.len());
        for j in 0..=h {
            for i in 0..w {
                order.push((self.hweight(i, j), self.site_index(i, j) as u32, self.site_index(i + 1, j) as u32));
            }
        }
        for j in 0..h {
            for i in 0..=w {
                order.push((self.vweight(i, j), self.site_index(i, j) as u32, self.site_index(i, j + 1) as u32));
            }
        }
        order.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
        for (wt, u, v) in order {
            uf.union(u as usize, v as usize);
            if uf.same(a, b) {
                return wt;
            }
        }
        f64::INFINITY
    }
}

/// Connectivity of the sites (primal) or faces (dual) of a box window at one
/// threshold.
#[derive(Debug, Clone)]
pub struct ClusterIndex {
    window: BoxRegion,
    lattice: Lattice,
    p: f64,
    sense: Sense,
    /// Lower-left corner and side length of the indexed site grid.
    origin: Site,
    side: usize,
    uf: UnionFind,
}

impl ClusterIndex {
    pub fn window(&self) -> BoxRegion {
        self.window
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Number of indexed sites.
    pub fn len(&self) -> usize {
        self.uf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uf.is_empty()
    }

    /// Indexed sites (dual sites by lower-left corner), row-major.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let (o, s) = (self.origin, self.side as i32);
        (0..s).flat_map(move |j| (0..s).map(move |i| o.offset(i, j)))
    }

    fn idx(&self, s: Site) -> Option<usize> {
        let (i, j) = (s.x as i64 - self.origin.x as i64, s.y as i64 - self.origin.y as i64);
        let side = self.side as i64;
        (i >= 0 && j >= 0 && i < side && j < side).then(|| (j * side + i) as usize)
    }

    pub fn contains(&self, s: Site) -> bool {
        self.idx(s).is_some()
    }

    /// Representative label of the cluster of `s`.
    pub fn find(&mut self, s: Site) -> Option<usize> {
        let i = self.idx(s)?;
        Some(self.uf.find(i))
    }

    pub fn connected(&mut self, a: Site, b: Site) -> bool {
        match (self.idx(a), self.idx(b)) {
            (Some(i), Some(j)) => self.uf.same(i, j),
            _ => false,
        }
    }

    pub fn cluster_size(&mut self, s: Site) -> Option<usize> {
        let i = self.idx(s)?;
        Some(self.uf.set_size(i))
    }

    pub fn cluster_count(&self) -> usize {
        self.uf.set_count()
    }
}

/// Clusters of the box `window` at threshold `p`. Dual clusters live on the
/// `(2n)²` faces of the box and use only edges crossing its interior.
pub fn clusters<W: EdgeWeights>(f: &W, window: BoxRegion, p: f64, lattice: Lattice, sense: Sense) -> Result<ClusterIndex> {
    window.check_bounds()?;
    let win = Window::of_box(f, window)?;
    let r = window.radius as i32;
    let origin = window.center.offset(-r, -r);
    let (uf, side) = match lattice {
        Lattice::Primal => (win.primal_union(0, |x| sense.admits(x, p), |_| false), window.side()),
        Lattice::Dual => {
            if window.radius == 0 {
                return Err(Error::InvalidRegion("B(0) has no faces".into()));
            }
            (win.dual_union(0, |x| sense.admits(x, p), |_| false), 2 * window.radius as usize)
        }
    };
    Ok(ClusterIndex { window, lattice, p, sense, origin, side, uf })
}

/// Crossing of the rectangle of primal sites `rect`. The closed-dual variant
/// is the blocking event: `crossing(.., Horizontal, OpenPrimal)` holds iff
/// `crossing(.., Vertical, ClosedDual)` fails, and symmetrically.
pub fn crossing<W: EdgeWeights>(f: &W, rect: Rect, p: f64, dir: Direction, sense: CrossingSense) -> Result<bool> {
    if rect.width == 0 || rect.height == 0 {
        return Err(Error::InvalidRegion("crossing rectangles need width and height at least 1".into()));
    }
    Ok(Window::new(f, rect)?.crossing(p, dir, sense))
}

/// Open-crossing threshold of a rectangle (see [`Window::crossing_threshold`]).
pub fn crossing_threshold<W: EdgeWeights>(f: &W, rect: Rect, dir: Direction) -> Result<f64> {
    Ok(Window::new(f, rect)?.crossing_threshold(dir))
}
