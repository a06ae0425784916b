//! Geometry of the square lattice and its dual: sites, canonical edges,
//! boxes and annuli.
//!
//! Sites use the sup-norm `|x| = max(|x1|, |x2|)`. Every nearest-neighbour
//! pair maps to exactly one canonical [`Edge`], identified by its left (or
//! bottom) endpoint and an orientation. Dual sites `x* = x + (1/2, 1/2)` are
//! stored through their lower-left primal site.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates must stay strictly inside `(-COORD_LIMIT, COORD_LIMIT)`.
pub const COORD_LIMIT: i64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub const ORIGIN: Site = Site { x: 0, y: 0 };

    #[inline]
    pub const fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    /// Sup-norm `max(|x|, |y|)`.
    #[inline]
    pub fn norm(self) -> u32 {
        self.x.unsigned_abs().max(self.y.unsigned_abs())
    }

    /// Sup-norm distance to `other`.
    #[inline]
    pub fn dist(self, other: Site) -> u32 {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }

    #[inline]
    pub fn offset(self, dx: i32, dy: i32) -> Site {
        Site::new(self.x + dx, self.y + dy)
    }

    pub fn in_bounds(self) -> bool {
        (self.x as i64).abs() < COORD_LIMIT && (self.y as i64).abs() < COORD_LIMIT
    }

    pub fn check_bounds(self) -> Result<Self> {
        if self.in_bounds() {
            Ok(self)
        } else {
            Err(Error::OutOfBounds(self))
        }
    }

    /// The four nearest neighbours in the order right, up, left, down.
    #[inline]
    pub fn neighbours(self) -> [Site; 4] {
        [
            self.offset(1, 0),
            self.offset(0, 1),
            self.offset(-1, 0),
            self.offset(0, -1),
        ]
    }

    /// The four edges incident to this site, in the same order as
    /// [`Site::neighbours`].
    #[inline]
    pub fn incident_edges(self) -> [Edge; 4] {
        [
            Edge::horizontal(self),
            Edge::vertical(self),
            Edge::horizontal(self.offset(-1, 0)),
            Edge::vertical(self.offset(0, -1)),
        ]
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

impl Orientation {
    pub fn as_char(self) -> char {
        match self {
            Orientation::Horizontal => 'H',
            Orientation::Vertical => 'V',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'H' | 'h' => Some(Orientation::Horizontal),
            'V' | 'v' => Some(Orientation::Vertical),
            _ => None,
        }
    }
}

/// A nearest-neighbour edge in canonical form.
///
/// The derived ordering is lexicographic on `(base.x, base.y, orientation)`,
/// which is the tie-break order used by the invasion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub base: Site,
    pub orientation: Orientation,
}

impl Edge {
    #[inline]
    pub const fn horizontal(base: Site) -> Self {
        Edge { base, orientation: Orientation::Horizontal }
    }

    #[inline]
    pub const fn vertical(base: Site) -> Self {
        Edge { base, orientation: Orientation::Vertical }
    }

    /// `(e_x, e_y)`: left/bottom endpoint first.
    #[inline]
    pub fn endpoints(self) -> (Site, Site) {
        let b = self.base;
        match self.orientation {
            Orientation::Horizontal => (b, b.offset(1, 0)),
            Orientation::Vertical => (b, b.offset(0, 1)),
        }
    }

    #[inline]
    pub fn other_end(self, s: Site) -> Site {
        let (a, b) = self.endpoints();
        if s == a {
            b
        } else {
            a
        }
    }

    /// `|e|`, taken as the norm of `e_x` (the shift `θ_e` is `θ_{e_x}`).
    pub fn norm(self) -> u32 {
        self.base.norm()
    }

    pub fn translate(self, dx: i32, dy: i32) -> Edge {
        Edge { base: self.base.offset(dx, dy), orientation: self.orientation }
    }

    pub fn dual(self) -> DualEdge {
        DualEdge { primal: self }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.endpoints();
        write!(f, "<{a},{b}>")
    }
}

/// Canonical edge for the nearest-neighbour pair `{a, b}`.
pub fn canonical_edge(a: Site, b: Site) -> Result<Edge> {
    let dx = b.x as i64 - a.x as i64;
    let dy = b.y as i64 - a.y as i64;
    match (dx, dy) {
        (1, 0) => Ok(Edge::horizontal(a)),
        (-1, 0) => Ok(Edge::horizontal(b)),
        (0, 1) => Ok(Edge::vertical(a)),
        (0, -1) => Ok(Edge::vertical(b)),
        _ => Err(Error::InvalidEdge(a, b)),
    }
}

/// A site of the dual lattice, `lower_left + (1/2, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualSite {
    pub lower_left: Site,
}

impl DualSite {
    /// Coordinates doubled, so that `(1/2, 1/2)` becomes `(1, 1)`.
    pub fn doubled(self) -> (i64, i64) {
        (2 * self.lower_left.x as i64 + 1, 2 * self.lower_left.y as i64 + 1)
    }
}

/// The dual edge `e*`, crossing the primal edge `e` at its midpoint. It shares
/// the weight of `e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualEdge {
    pub primal: Edge,
}

impl DualEdge {
    /// `e* = <e_x + (1/2,1/2), e_y - (1/2,1/2)>`, returned in canonical order
    /// (bottom then top, or left then right).
    pub fn endpoints(self) -> (DualSite, DualSite) {
        let b = self.primal.base;
        match self.primal.orientation {
            // <(x,y),(x+1,y)>  ->  (x+1/2, y-1/2) -- (x+1/2, y+1/2)
            Orientation::Horizontal => (
                DualSite { lower_left: b.offset(0, -1) },
                DualSite { lower_left: b },
            ),
            // <(x,y),(x,y+1)>  ->  (x-1/2, y+1/2) -- (x+1/2, y+1/2)
            Orientation::Vertical => (
                DualSite { lower_left: b.offset(-1, 0) },
                DualSite { lower_left: b },
            ),
        }
    }

    /// The dual edge viewed as an edge of the shifted lattice: the primal
    /// edge between the lower-left representatives of its endpoints.
    pub fn as_shifted_edge(self) -> Edge {
        let (a, b) = self.endpoints();
        canonical_edge(a.lower_left, b.lower_left).expect("dual endpoints are adjacent")
    }

    /// Inverse of [`DualEdge::as_shifted_edge`]: applies the dual-edge rule
    /// `f* = <f_x + (1/2,1/2), f_y - (1/2,1/2)>` to a shifted edge `f`, whose
    /// endpoints sit at `f_x + (1/2,1/2)` and `f_y + (1/2,1/2)`.
    pub fn from_shifted_edge(f: Edge) -> DualEdge {
        let (fx, fy) = f.endpoints();
        let e = canonical_edge(fx.offset(1, 1), fy).expect("dual of a dual edge is a primal edge");
        DualEdge { primal: e }
    }

    /// `dual(dual(e))`: the primal edge recovered from the shifted form.
    pub fn dual(self) -> Edge {
        DualEdge::from_shifted_edge(self.as_shifted_edge()).primal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub center: Site,
    pub radius: u32,
}

impl BoxRegion {
    pub fn new(center: Site, radius: u32) -> Self {
        BoxRegion { center, radius }
    }

    pub fn centered(radius: u32) -> Self {
        BoxRegion { center: Site::ORIGIN, radius }
    }

    #[inline]
    pub fn contains(&self, s: Site) -> bool {
        s.dist(self.center) <= self.radius
    }

    #[inline]
    pub fn on_boundary(&self, s: Site) -> bool {
        s.dist(self.center) == self.radius
    }

    pub fn contains_edge(&self, e: Edge) -> bool {
        let (a, b) = e.endpoints();
        self.contains(a) && self.contains(b)
    }

    /// Side length in sites, `2n + 1`.
    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    pub fn site_count(&self) -> usize {
        self.side() * self.side()
    }

    /// Number of edges with both endpoints in the box, `2 (2n+1) 2n`.
    pub fn edge_count(&self) -> usize {
        2 * self.side() * 2 * self.radius as usize
    }

    pub fn check_bounds(&self) -> Result<()> {
        let r = self.radius as i64;
        let cx = self.center.x as i64;
        let cy = self.center.y as i64;
        if (cx.abs() + r) < COORD_LIMIT && (cy.abs() + r) < COORD_LIMIT {
            Ok(())
        } else {
            Err(Error::InvalidRegion(format!("box {} of radius {} exceeds coordinate limits", self.center, self.radius)))
        }
    }

    /// Sites in row-major order (y ascending, then x ascending).
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let r = self.radius as i32;
        let c = self.center;
        (-r..=r).flat_map(move |dy| (-r..=r).map(move |dx| c.offset(dx, dy)))
    }

    /// Dense row-major index of a site in the box.
    #[inline]
    pub fn index(&self, s: Site) -> usize {
        let r = self.radius as i32;
        let side = self.side();
        (s.y - self.center.y + r) as usize * side + (s.x - self.center.x + r) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnulusRegion {
    pub center: Site,
    pub inner: u32,
    pub outer: u32,
}

impl AnnulusRegion {
    pub fn new(center: Site, inner: u32, outer: u32) -> Result<Self> {
        let a = AnnulusRegion { center, inner, outer };
        a.validate()?;
        Ok(a)
    }

    pub fn centered(inner: u32, outer: u32) -> Result<Self> {
        Self::new(Site::ORIGIN, inner, outer)
    }

    fn validate(&self) -> Result<()> {
        if self.inner >= self.outer {
            return Err(Error::InvalidRegion(format!(
                "annulus needs inner < outer, got {} >= {}",
                self.inner, self.outer
            )));
        }
        Ok(())
    }

    /// `Ann(c; m, n) = B(c, n) \ B(c, m)`.
    #[inline]
    pub fn contains(&self, s: Site) -> bool {
        let d = s.dist(self.center);
        d > self.inner && d <= self.outer
    }

    pub fn contains_edge(&self, e: Edge) -> bool {
        let (a, b) = e.endpoints();
        self.contains(a) && self.contains(b)
    }
}

/// Either kind of finite region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Box(BoxRegion),
    Annulus(AnnulusRegion),
}

impl Region {
    pub fn contains(&self, s: Site) -> bool {
        match self {
            Region::Box(b) => b.contains(s),
            Region::Annulus(a) => a.contains(s),
        }
    }

    pub fn contains_edge(&self, e: Edge) -> bool {
        match self {
            Region::Box(b) => b.contains_edge(e),
            Region::Annulus(a) => a.contains_edge(e),
        }
    }

    /// The smallest box containing the region.
    pub fn bounding_box(&self) -> BoxRegion {
        match *self {
            Region::Box(b) => b,
            Region::Annulus(a) => BoxRegion::new(a.center, a.outer),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Region::Box(b) => b.check_bounds(),
            Region::Annulus(a) => {
                a.validate()?;
                BoxRegion::new(a.center, a.outer).check_bounds()
            }
        }
    }
}

impl From<BoxRegion> for Region {
    fn from(b: BoxRegion) -> Self {
        Region::Box(b)
    }
}

impl From<AnnulusRegion> for Region {
    fn from(a: AnnulusRegion) -> Self {
        Region::Annulus(a)
    }
}

/// Every edge with both endpoints in the region, once each, in row-major
/// site order with the horizontal edge of a site before its vertical edge.
pub fn edges_in(region: impl Into<Region>) -> Result<Vec<Edge>> {
    let region = region.into();
    region.validate()?;
    let bb = region.bounding_box();
    let mut out = Vec::new();
    for s in bb.sites() {
        if !region.contains(s) {
            continue;
        }
        if region.contains(s.offset(1, 0)) {
            out.push(Edge::horizontal(s));
        }
        if region.contains(s.offset(0, 1)) {
            out.push(Edge::vertical(s));
        }
    }
    Ok(out)
}
