//! Bond-invasion view of a site-invasion run.
//!
//! Bond invasion also takes frontier edges whose two endpoints are already
//! invaded. Those edges never change the invaded site set, so the new-site
//! acceptances coincide with the run's steps, and an internal edge is taken
//! in the gap just before the first later step heavier than itself.

use rustc_hash::{FxHashMap, FxHashSet};

use super::InvasionRun;
use crate::lattice::Edge;
use crate::weights::EdgeWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct BondInvasion {
    /// `(step, weight)` of every invaded edge. Internal edges carry the
    /// step of the new-site acceptance they preceded.
    pub invaded: Vec<(u64, f64)>,
    /// Edges touching the invaded sites that were not invaded.
    pub surface: usize,
}

impl BondInvasion {
    pub fn volume(&self) -> usize {
        self.invaded.len()
    }

    pub fn surface_to_volume(&self) -> f64 {
        self.surface as f64 / self.volume() as f64
    }

    /// Weights of edges invaded at steps strictly after `step`.
    pub fn weights_after(&self, step: u64) -> Vec<f64> {
        self.invaded.iter().filter(|&&(s, _)| s > step).map(|&(_, w)| w).collect()
    }
}

/// Range-maximum table over step weights, 1-based.
struct MaxTable {
    levels: Vec<Vec<f64>>,
}

impl MaxTable {
    fn new(w: &[f64]) -> Self {
        let mut levels = vec![w.to_vec()];
        let mut span = 1;
        while 2 * span <= w.len() {
            let prev = levels.last().expect("level");
            let next: Vec<f64> = (0..=w.len() - 2 * span).map(|i| prev[i].max(prev[i + span])).collect();
            levels.push(next);
            span *= 2;
        }
        MaxTable { levels }
    }

    /// First index `i ≥ from` (0-based) with `w[i] > x`.
    fn first_above(&self, from: usize, x: f64) -> Option<usize> {
        let n = self.levels[0].len();
        let mut i = from;
        while i < n {
            // largest block starting at i that stays at or below x
            let mut k = self.levels.len();
            loop {
                if k == 0 {
                    return Some(i);
                }
                k -= 1;
                if i + (1 << k) <= n && self.levels[k][i] <= x {
                    i += 1 << k;
                    break;
                }
            }
        }
        None
    }
}

pub fn bond_invasion<W: EdgeWeights>(run: &InvasionRun, weights: W) -> BondInvasion {
    let w: Vec<f64> = run.weights().collect();
    let table = MaxTable::new(&w);
    let join: FxHashMap<_, usize> = run.sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let tree: FxHashSet<Edge> = run.accepted.iter().map(|a| a.edge).collect();
    let mut invaded: Vec<(u64, f64)> = run.accepted.iter().map(|a| (a.step, a.weight)).collect();
    let mut surface = 0;
    for (&s, &js) in &join {
        for e in s.incident_edges() {
            match join.get(&e.other_end(s)) {
                None => surface += 1,
                Some(&jo) if jo < js && !tree.contains(&e) => {
                    let x = weights.weight(e);
                    // steps after js are w[js..] in 0-based terms
                    match table.first_above(js, x) {
                        Some(i) => invaded.push((i as u64 + 1, x)),
                        None => surface += 1,
                    }
                }
                Some(_) => {}
            }
        }
    }
    invaded.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    BondInvasion { invaded, surface }
}
