//! Unit-capacity max-flow for counting disjoint paths (Menger).

use std::collections::VecDeque;

/// Undirected graph with unit edge capacities and optional unit vertex
/// capacities (node splitting).
#[derive(Debug, Clone)]
pub struct DisjointPaths {
    nodes: usize,
    vertex_disjoint: bool,
    edges: Vec<(usize, usize)>,
    sources: Vec<usize>,
    sinks: Vec<usize>,
    /// Nodes exempt from the vertex capacity (e.g. a shared start site).
    uncapped: Vec<usize>,
}

struct Network {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<i32>,
    next: Vec<usize>,
}

const NIL: usize = usize::MAX;

impl Network {
    fn new(n: usize) -> Self {
        Network { head: vec![NIL; n], to: Vec::new(), cap: Vec::new(), next: Vec::new() }
    }

    fn arc(&mut self, u: usize, v: usize, c: i32, back: i32) {
        for (a, b, cap) in [(u, v, c), (v, u, back)] {
            self.to.push(b);
            self.cap.push(cap);
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() - 1;
        }
    }

    fn augment(&mut self, s: usize, t: usize) -> bool {
        let n = self.head.len();
        let mut via = vec![NIL; n];
        let mut seen = vec![false; n];
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            let mut a = self.head[u];
            while a != NIL {
                let v = self.to[a];
                if self.cap[a] > 0 && !seen[v] {
                    seen[v] = true;
                    via[v] = a;
                    if v == t {
                        let mut x = t;
                        while x != s {
                            let arc = via[x];
                            self.cap[arc] -= 1;
                            self.cap[arc ^ 1] += 1;
                            x = self.to[arc ^ 1];
                        }
                        return true;
                    }
                    q.push_back(v);
                }
                a = self.next[a];
            }
        }
        false
    }
}

impl DisjointPaths {
    pub fn new(nodes: usize, vertex_disjoint: bool) -> Self {
        DisjointPaths { nodes, vertex_disjoint, edges: Vec::new(), sources: Vec::new(), sinks: Vec::new(), uncapped: Vec::new() }
    }

    pub fn edge(&mut self, u: usize, v: usize) {
        self.edges.push((u, v));
    }

    pub fn source(&mut self, u: usize) {
        self.sources.push(u);
    }

    pub fn sink(&mut self, u: usize) {
        self.sinks.push(u);
    }

    pub fn uncap(&mut self, u: usize) {
        self.uncapped.push(u);
    }

    /// Maximum number of disjoint source-to-sink paths, stopping at `limit`.
    pub fn max_paths(&self, limit: usize) -> usize {
        let n = self.nodes;
        let (s, t) = (2 * n, 2 * n + 1);
        let mut net = Network::new(2 * n + 2);
        let big = i32::MAX / 4;
        let (inn, out) = (|u: usize| 2 * u, |u: usize| 2 * u + 1);
        let mut uncapped = vec![false; n];
        for &u in &self.uncapped {
            uncapped[u] = true;
        }
        for u in 0..n {
            let c = if self.vertex_disjoint && !uncapped[u] { 1 } else { big };
            net.arc(inn(u), out(u), c, 0);
        }
        for &(u, v) in &self.edges {
            net.arc(out(u), inn(v), 1, 0);
            net.arc(out(v), inn(u), 1, 0);
        }
        for &u in &self.sources {
            net.arc(s, inn(u), big, 0);
        }
        for &u in &self.sinks {
            net.arc(out(u), t, big, 0);
        }
        let mut flow = 0;
        while flow < limit && net.augment(s, t) {
            flow += 1;
        }
        flow
    }
}
