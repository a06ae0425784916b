//! Arm events: one-arm reach, annulus blocking, alternating four arms,
//! σ-connections and pivotal edges.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{flow::DisjointPaths, Window};
use crate::error::{Error, Result};
use crate::lattice::{BoxRegion, Edge, Site};
use crate::weights::EdgeWeights;

/// Whether `origin` is joined to `∂B(origin, n)` by a p-open path inside the box.
pub fn reaches<W: EdgeWeights>(f: &W, origin: Site, n: u32, p: f64) -> bool {
    if n == 0 {
        return true;
    }
    let b = BoxRegion::new(origin, n);
    let side = b.side();
    let mut seen = vec![0u64; (side * side).div_ceil(64)];
    let mark = |seen: &mut Vec<u64>, i: usize| -> bool {
        let (w, bit) = (i / 64, 1u64 << (i % 64));
        let fresh = seen[w] & bit == 0;
        seen[w] |= bit;
        fresh
    };
    mark(&mut seen, b.index(origin));
    let mut stack = vec![origin];
    while let Some(s) = stack.pop() {
        for e in s.incident_edges() {
            let t = e.other_end(s);
            if !b.contains(t) || f.weight(e) >= p {
                continue;
            }
            if b.on_boundary(t) {
                return true;
            }
            if mark(&mut seen, b.index(t)) {
                stack.push(t);
            }
        }
    }
    false
}

/// True iff no p-open path joins `∂B(m)` to `∂B(R)` using edges of `B(R)` not
/// inside `B(m)`; equivalently a p-closed dual circuit surrounds `B(m)` in the
/// annulus.
pub fn dual_circuit_blocks<W: EdgeWeights>(f: &W, m: u32, r: u32, p: f64) -> Result<bool> {
    if m < 1 || m >= r {
        return Err(Error::Domain(format!("need 1 <= m < R, got m = {m}, R = {r}")));
    }
    let win = Window::of_box(f, BoxRegion::centered(r))?;
    let c = r as i64;
    let d = |i: usize, j: usize| (i as i64 - c).abs().max((j as i64 - c).abs()) as u32;
    let inner_edge = |e: Edge| {
        let (a, b) = e.endpoints();
        a.norm() <= m && b.norm() <= m
    };
    let n = win.rect().site_count();
    let (src, dst) = (n, n + 1);
    let mut uf = win.primal_union(2, |x| x < p, inner_edge);
    let side = 2 * r as usize + 1;
    for j in 0..side {
        for i in 0..side {
            let dd = d(i, j);
            if dd == m {
                uf.union(src, win.site_index(i, j));
            } else if dd == r {
                uf.union(dst, win.site_index(i, j));
            }
        }
    }
    Ok(!uf.same(src, dst))
}

/// Per-cluster flags over a union-find: `mark[root]` set for every listed node.
fn root_flags(uf: &mut super::UnionFind, nodes: impl Iterator<Item = usize>) -> Vec<bool> {
    let mut flags = vec![false; uf.len()];
    for v in nodes {
        let r = uf.find(v);
        flags[r] = true;
    }
    flags
}

/// The four-arm event around `e` in a window centred at `e_x`.
fn four_arm_in_window(win: &Window, e: Edge, p_open: f64, p_closed: f64) -> bool {
    let (w, h) = (win.w(), win.h());
    let (ex, ey) = e.endpoints();
    let (Some(ix), Some(iy)) = (win.index_of(ex), win.index_of(ey)) else {
        return false;
    };
    let mut uf = win.primal_union(0, |x| x < p_open, |g| g == e);
    let (rx, ry) = (uf.find(ix), uf.find(iy));
    if rx == ry {
        return false;
    }
    let boundary = (0..=h).flat_map(|j| (0..=w).map(move |i| (i, j))).filter(|&(i, j)| i == 0 || j == 0 || i == w || j == h);
    let touch = root_flags(&mut uf, boundary.map(|(i, j)| win.site_index(i, j)));
    if !(touch[rx] && touch[ry]) {
        return false;
    }

    let (da, db) = e.dual().endpoints();
    let face = |s: Site| -> Option<usize> {
        let (i, j) = win.local(s)?;
        (i < w && j < h).then(|| win.face_index(i, j))
    };
    let (Some(fa), Some(fb)) = (face(da.lower_left), face(db.lower_left)) else {
        return false;
    };
    let mut duf = win.dual_union(0, |x| x >= p_closed, |g| g == e);
    let (ra, rb) = (duf.find(fa), duf.find(fb));
    if ra == rb {
        return false;
    }
    let dtouch = root_flags(&mut duf, exterior_faces(win, |x| x >= p_closed).into_iter());
    dtouch[ra] && dtouch[rb]
}

/// Faces of the window joined to the exterior dual boundary by a boundary
/// edge satisfying `keep`.
fn exterior_faces(win: &Window, keep: impl Fn(f64) -> bool) -> Vec<usize> {
    let (w, h) = (win.w(), win.h());
    let mut out = Vec::new();
    for i in 0..w {
        if keep(win.hweight(i, 0)) {
            out.push(win.face_index(i, 0));
        }
        if keep(win.hweight(i, h)) {
            out.push(win.face_index(i, h - 1));
        }
    }
    for j in 0..h {
        if keep(win.vweight(0, j)) {
            out.push(win.face_index(0, j));
        }
        if keep(win.vweight(w, j)) {
            out.push(win.face_index(w - 1, j));
        }
    }
    out
}

/// Alternating four-arm event for edge `e` to distance `n` around `e_x`: two
/// `p_open`-open arms from `e_x` and `e_y` in distinct open clusters of the
/// box with `e` removed, and two `p_closed`-closed dual arms from the ends of
/// `e*` in distinct closed dual clusters with `e*` removed, each reaching the
/// box boundary. The dual boundary is the ring of faces just outside the box,
/// entered through a closed boundary edge.
pub fn four_arm_alternating<W: EdgeWeights>(f: &W, e: Edge, n: u32, p_open: f64, p_closed: f64) -> Result<bool> {
    if p_closed > p_open {
        return Err(Error::Domain(format!("p_closed = {p_closed} exceeds p_open = {p_open}")));
    }
    let b = BoxRegion::new(e.base, n);
    b.check_bounds()?;
    if n == 0 {
        return Ok(false);
    }
    let win = Window::of_box(f, b)?;
    Ok(four_arm_in_window(&win, e, p_open, p_closed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArmColour {
    Open,
    Closed,
}

/// Colours of the arms in counterclockwise order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SigmaSequence {
    pub entries: Vec<ArmColour>,
}

impl SigmaSequence {
    pub fn new(entries: Vec<ArmColour>) -> Self {
        SigmaSequence { entries }
    }

    pub fn one_arm() -> Self {
        SigmaSequence::new(vec![ArmColour::Open])
    }

    pub fn two_open() -> Self {
        SigmaSequence::new(vec![ArmColour::Open, ArmColour::Open])
    }

    pub fn alternating_four() -> Self {
        use ArmColour::*;
        SigmaSequence::new(vec![Open, Closed, Open, Closed])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_monochromatic(&self) -> bool {
        self.entries.windows(2).all(|w| w[0] == w[1])
    }

    pub fn is_alternating(&self) -> bool {
        self.entries.len() % 2 == 0 && self.entries.windows(2).all(|w| w[0] != w[1])
    }

    fn shape(&self) -> Option<Shape> {
        if *self == Self::one_arm() {
            Some(Shape::One)
        } else if *self == Self::two_open() {
            Some(Shape::TwoOpen)
        } else if *self == Self::alternating_four() {
            Some(Shape::Four)
        } else {
            None
        }
    }

    pub fn is_supported(&self) -> bool {
        self.shape().is_some()
    }
}

impl fmt::Display for SigmaSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<&str> = self
            .entries
            .iter()
            .map(|c| match c {
                ArmColour::Open => "open",
                ArmColour::Closed => "closed",
            })
            .collect();
        write!(f, "({})", s.join(","))
    }
}

impl FromStr for SigmaSequence {
    type Err = Error;

    /// Accepts `o`/`c` letter strings (`ococ`) or comma lists (`open,closed`),
    /// optionally parenthesized.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let bad = || Error::Unsupported(format!("cannot parse arm sequence {s:?}"));
        let entries: Vec<ArmColour> = if t.contains(',') {
            t.split(',')
                .map(|w| match w.trim().to_ascii_lowercase().as_str() {
                    "open" | "o" => Ok(ArmColour::Open),
                    "closed" | "c" => Ok(ArmColour::Closed),
                    _ => Err(bad()),
                })
                .collect::<Result<_>>()?
        } else {
            t.chars()
                .map(|c| match c.to_ascii_lowercase() {
                    'o' => Ok(ArmColour::Open),
                    'c' => Ok(ArmColour::Closed),
                    _ => Err(bad()),
                })
                .collect::<Result<_>>()?
        };
        if entries.is_empty() {
            return Err(bad());
        }
        Ok(SigmaSequence { entries })
    }
}

#[derive(Clone, Copy)]
enum Shape {
    One,
    TwoOpen,
    Four,
}

/// Local geometry of `B(center, n)` with an inner box `B(center, l)`.
struct Annulus<'a> {
    win: &'a Window,
    n: usize,
    l: usize,
}

impl<'a> Annulus<'a> {
    fn dist(&self, i: usize, j: usize) -> usize {
        (i as i64 - self.n as i64).unsigned_abs().max((j as i64 - self.n as i64).unsigned_abs()) as usize
    }

    fn sites(&self) -> impl Iterator<Item = (usize, usize)> {
        let side = 2 * self.n + 1;
        (0..side).flat_map(move |j| (0..side).map(move |i| (i, j)))
    }

    fn inner_edge(&self, e: Edge) -> bool {
        let c = self.win.site(self.n, self.n);
        let (a, b) = e.endpoints();
        a.dist(c) as usize <= self.l && b.dist(c) as usize <= self.l
    }

    /// Sources of the inner box: its boundary, or the centre when `l = 0`.
    fn inner_sites(&self) -> Vec<usize> {
        self.sites().filter(|&(i, j)| self.dist(i, j) == self.l).map(|(i, j)| self.win.site_index(i, j)).collect()
    }

    fn outer_sites(&self) -> Vec<usize> {
        self.sites().filter(|&(i, j)| self.dist(i, j) == self.n).map(|(i, j)| self.win.site_index(i, j)).collect()
    }

    fn one_arm(&self, p: f64) -> bool {
        let n = self.win.rect().site_count();
        let mut uf = self.win.primal_union(2, |x| x < p, |e| self.inner_edge(e));
        for v in self.inner_sites() {
            uf.union(n, v);
        }
        for v in self.outer_sites() {
            uf.union(n + 1, v);
        }
        uf.same(n, n + 1)
    }

    fn crossing_clusters(&self, p: f64) -> usize {
        let mut uf = self.win.primal_union(0, |x| x < p, |e| self.inner_edge(e));
        let outer = root_flags(&mut uf, self.outer_sites().into_iter());
        let mut roots: Vec<usize> = self.inner_sites().into_iter().map(|v| uf.find(v)).filter(|&r| outer[r]).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    fn dual_crossing_clusters(&self, p: f64) -> usize {
        let (n, l) = (self.n as i64, self.l as i64);
        let side = 2 * self.n;
        // face (i, j) covers local sites (i..=i+1, j..=j+1); it lies inside
        // B(l) iff both corners do
        let inside = |i: usize, j: usize| {
            let (a, b) = (i as i64 - n, j as i64 - n);
            a >= -l && a < l && b >= -l && b < l
        };
        // faces sharing an edge with the inner box; corner faces touch it
        // only at a site, which the open arms on both sides share
        let near_inner = |i: usize, j: usize| {
            let (a, b) = (i as i64 - n, j as i64 - n);
            let side_x = (a == -l - 1 || a == l) && b >= -l && b < l;
            let side_y = (b == -l - 1 || b == l) && a >= -l && a < l;
            side_x || side_y
        };
        let win = self.win;
        let mut uf = win.dual_union(0, |x| x >= p, |e| {
            let (da, db) = e.dual().endpoints();
            let (Some((ai, aj)), Some((bi, bj))) = (win.local(da.lower_left), win.local(db.lower_left)) else {
                return true;
            };
            inside(ai, aj) || inside(bi, bj)
        });
        let faces: Vec<(usize, usize)> = (0..side).flat_map(|j| (0..side).map(move |i| (i, j))).collect();
        let outer = root_flags(&mut uf, exterior_faces(win, |x| x >= p).into_iter());
        let mut roots: Vec<usize> = faces
            .iter()
            .filter(|&&(i, j)| near_inner(i, j))
            .map(|&(i, j)| uf.find(win.face_index(i, j)))
            .filter(|&r| outer[r])
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    fn disjoint_arms(&self, p: f64, vertex_disjoint: bool, limit: usize) -> usize {
        let win = self.win;
        let (w, h) = (win.w(), win.h());
        let mut g = DisjointPaths::new(win.rect().site_count(), vertex_disjoint);
        for j in 0..=h {
            for i in 0..=w {
                if i < w && win.hweight(i, j) < p && !self.inner_edge(win.h_edge(i, j)) {
                    g.edge(win.site_index(i, j), win.site_index(i + 1, j));
                }
                if j < h && win.vweight(i, j) < p && !self.inner_edge(win.v_edge(i, j)) {
                    g.edge(win.site_index(i, j), win.site_index(i, j + 1));
                }
            }
        }
        for v in self.inner_sites() {
            g.source(v);
            if self.l == 0 {
                g.uncap(v);
            }
        }
        for v in self.outer_sites() {
            g.sink(v);
        }
        g.max_paths(limit)
    }
}

fn annulus_window<W: EdgeWeights>(f: &W, center: Site, l: u32, n: u32) -> Result<Window> {
    if l >= n {
        return Err(Error::Domain(format!("need l < n, got l = {l}, n = {n}")));
    }
    let b = BoxRegion::new(center, n);
    b.check_bounds()?;
    Window::of_box(f, b)
}

/// Number of distinct p-open clusters of `Ann(center; l, n)` (edges inside
/// `B(l)` removed) joining `∂B(l)` to `∂B(n)`.
pub fn open_crossing_cluster_count<W: EdgeWeights>(f: &W, center: Site, l: u32, n: u32, p: f64) -> Result<usize> {
    let win = annulus_window(f, center, l, n)?;
    Ok(Annulus { win: &win, n: n as usize, l: l as usize }.crossing_clusters(p))
}

/// Number of distinct p-closed dual clusters among the faces of `B(center, n)`
/// outside `B(l)` that touch both a face sharing an edge with `B(l)` and the
/// exterior (through a closed edge of `∂B(n)`).
pub fn closed_dual_crossing_count<W: EdgeWeights>(f: &W, center: Site, l: u32, n: u32, p: f64) -> Result<usize> {
    if l == 0 {
        return Err(Error::Domain("closed dual arms need l >= 1".into()));
    }
    let win = annulus_window(f, center, l, n)?;
    Ok(Annulus { win: &win, n: n as usize, l: l as usize }.dual_crossing_clusters(p))
}

/// Maximum number of disjoint p-open paths from `B(center, l)` to `∂B(center, n)`,
/// capped at `limit`.
pub fn open_arm_count<W: EdgeWeights>(
    f: &W,
    center: Site,
    l: u32,
    n: u32,
    p: f64,
    vertex_disjoint: bool,
    limit: usize,
) -> Result<usize> {
    let win = annulus_window(f, center, l, n)?;
    Ok(Annulus { win: &win, n: n as usize, l: l as usize }.disjoint_arms(p, vertex_disjoint, limit))
}

/// σ-connection of `B(l)` to `∂B(n)` around the origin.
pub fn sigma_connected<W: EdgeWeights>(f: &W, l: u32, n: u32, p: f64, sigma: &SigmaSequence) -> Result<bool> {
    sigma_connected_at(f, Site::ORIGIN, l, n, p, sigma)
}

/// σ-connection of `B(center, l)` to `∂B(center, n)`.
///
/// * `(open)`: an open path from the inner box.
/// * `(open,open)`: two vertex-disjoint open paths (unit node capacities).
/// * `(open,closed,open,closed)`: two distinct open clusters of the annulus
///   cross it, which by planarity forces the closed dual arms between them.
///
/// Edges inside `B(l)` take no part. `l = 0` is accepted for the open shapes.
pub fn sigma_connected_at<W: EdgeWeights>(f: &W, center: Site, l: u32, n: u32, p: f64, sigma: &SigmaSequence) -> Result<bool> {
    let shape = sigma.shape().ok_or_else(|| Error::Unsupported(format!("arm sequence {sigma}")))?;
    if matches!(shape, Shape::Four) && l == 0 {
        return Err(Error::Domain("the alternating sequence needs l >= 1".into()));
    }
    let win = annulus_window(f, center, l, n)?;
    sigma_in_window(&win, l, n, p, sigma)
}

/// σ-connection evaluated on a prepared window of `B(center, n)`.
pub(crate) fn sigma_in_window(win: &Window, l: u32, n: u32, p: f64, sigma: &SigmaSequence) -> Result<bool> {
    let shape = sigma.shape().ok_or_else(|| Error::Unsupported(format!("arm sequence {sigma}")))?;
    let a = Annulus { win, n: n as usize, l: l as usize };
    Ok(match shape {
        Shape::One => a.one_arm(p),
        Shape::TwoOpen => a.disjoint_arms(p, true, 2) >= 2,
        Shape::Four => a.crossing_clusters(p) >= 2,
    })
}

/// Edges of `B(n)` whose state decides the left-right open crossing of the box.
pub fn pivotal_edges<W: EdgeWeights>(f: &W, n: u32, p: f64) -> Result<BTreeSet<Edge>> {
    if n == 0 {
        return Err(Error::Domain("pivotal edges need n >= 1".into()));
    }
    let win = Window::of_box(f, BoxRegion::centered(n))?;
    Ok(pivotal_in_window(&win, p))
}

/// Pivotal edges for the left-right crossing of a window.
pub(crate) fn pivotal_in_window(win: &Window, p: f64) -> BTreeSet<Edge> {
    let (w, h) = (win.w(), win.h());
    let mut out = BTreeSet::new();
    let ns = win.rect().site_count();
    let (left, right) = (ns, ns + 1);
    let mut uf = win.primal_union(2, |x| x < p, |_| false);
    for j in 0..=h {
        uf.union(left, win.site_index(0, j));
        uf.union(right, win.site_index(w, j));
    }
    if uf.same(left, right) {
        // open edges whose dual ends are joined to the bottom and top terminals
        let nf = win.rect().face_count();
        let (bot, top) = (nf, nf + 1);
        let closed = |x: f64| x >= p;
        let mut duf = win.dual_union(2, closed, |_| false);
        for i in 0..w {
            if closed(win.hweight(i, 0)) {
                duf.union(bot, win.face_index(i, 0));
            }
            if closed(win.hweight(i, h)) {
                duf.union(top, win.face_index(i, h - 1));
            }
        }
        let (rb, rt) = (duf.find(bot), duf.find(top));
        let mut check = |a: usize, b: usize| {
            let (ra, rb2) = (duf.find(a), duf.find(b));
            (ra == rb && rb2 == rt) || (ra == rt && rb2 == rb)
        };
        for j in 0..=h {
            for i in 0..w {
                if win.hweight(i, j) < p {
                    let below = if j == 0 { bot } else { win.face_index(i, j - 1) };
                    let above = if j == h { top } else { win.face_index(i, j) };
                    if check(below, above) {
                        out.insert(win.h_edge(i, j));
                    }
                }
            }
        }
        for j in 0..h {
            for i in 1..w {
                if win.vweight(i, j) < p && check(win.face_index(i - 1, j), win.face_index(i, j)) {
                    out.insert(win.v_edge(i, j));
                }
            }
        }
    } else {
        let (rl, rr) = (uf.find(left), uf.find(right));
        let mut check = |a: usize, b: usize| {
            let (ra, rb) = (uf.find(a), uf.find(b));
            (ra == rl && rb == rr) || (ra == rr && rb == rl)
        };
        for j in 0..=h {
            for i in 0..w {
                if win.hweight(i, j) >= p && check(win.site_index(i, j), win.site_index(i + 1, j)) {
                    out.insert(win.h_edge(i, j));
                }
            }
        }
        for j in 0..h {
            for i in 0..=w {
                if win.vweight(i, j) >= p && check(win.site_index(i, j), win.site_index(i, j + 1)) {
                    out.insert(win.v_edge(i, j));
                }
            }
        }
    }
    out
}
