use percolab::lattice::edges_in;
use percolab::{BoxRegion, Edge, Site};

/// Exact `ℙ(e open | B(l) ↔ ∂B(n))` at `p = 1/2` for every edge of
/// `B(window)`, by enumerating every configuration of the edges that can
/// matter: those with an endpoint strictly inside `B(n)`.
pub fn one_arm_conditionals(l: u32, n: u32, window: u32) -> Vec<(Edge, f64)> {
    let outer = BoxRegion::centered(n);
    let sites: Vec<Site> = outer.sites().collect();
    let idx = |s: Site| sites.iter().position(|&t| t == s).expect("site in box");
    let edges: Vec<Edge> = edges_in(outer)
        .unwrap()
        .into_iter()
        .filter(|e| {
            let (a, b) = e.endpoints();
            a.norm() < n || b.norm() < n
        })
        .collect();
    assert!(edges.len() <= 26, "enumeration too large");
    let ends: Vec<(u64, u64)> = edges
        .iter()
        .map(|e| {
            let (a, b) = e.endpoints();
            (1u64 << idx(a), 1u64 << idx(b))
        })
        .collect();
    let start: u64 = sites.iter().enumerate().filter(|(_, s)| s.norm() <= l).map(|(i, _)| 1u64 << i).sum();
    let target: u64 = sites.iter().enumerate().filter(|(_, s)| s.norm() == n).map(|(i, _)| 1u64 << i).sum();

    let mut hits = 0u64;
    let mut open_hits = vec![0u64; edges.len()];
    for bits in 0..1u64 << edges.len() {
        let mut reached = start;
        loop {
            let before = reached;
            for (k, &(a, b)) in ends.iter().enumerate() {
                if bits >> k & 1 == 1 && (reached & (a | b)) != 0 {
                    reached |= a | b;
                }
            }
            if reached == before || reached & target != 0 {
                break;
            }
        }
        if reached & target != 0 {
            hits += 1;
            for (k, c) in open_hits.iter_mut().enumerate() {
                *c += bits >> k & 1;
            }
        }
    }
    let inner = BoxRegion::centered(window);
    edges
        .iter()
        .zip(&open_hits)
        .filter(|(e, _)| inner.contains_edge(**e))
        .map(|(&e, &c)| (e, c as f64 / hits as f64))
        .collect()
}
