//! Max-flow / min-cut on directed networks with real capacities (Dinic's
//! algorithm with an explicit augmenting-path stack).
//!
//! Arcs are stored in pairs: arc `2k` and its residual twin `2k + 1`. The
//! search visits each node's arcs in insertion order, so the result depends
//! only on the order in which arcs were added.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct FlowNetwork {
    n_nodes: usize,
    from: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl FlowNetwork {
    /// A network with `n_nodes` inner nodes plus the two terminals.
    pub fn new(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            ..Self::default()
        }
    }

    pub fn with_capacity(n_nodes: usize, arcs: usize) -> Self {
        Self {
            n_nodes,
            from: Vec::with_capacity(2 * arcs),
            to: Vec::with_capacity(2 * arcs),
            cap: Vec::with_capacity(2 * arcs),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn source(&self) -> usize {
        self.n_nodes
    }

    pub fn sink(&self) -> usize {
        self.n_nodes + 1
    }

    fn check(&self, u: usize, v: usize, caps: &[f64]) -> Result<()> {
        let limit = self.n_nodes + 2;
        if u >= limit || v >= limit || u == v {
            return Err(Error::InvalidArgument(format!("bad arc ({u}, {v})")));
        }
        if caps.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "capacities on ({u}, {v}) must be finite and >= 0"
            )));
        }
        Ok(())
    }

    /// Adds `u → v` with capacity `cap_uv` and `v → u` with `cap_vu`, sharing
    /// one residual pair.
    pub fn add_edge(&mut self, u: usize, v: usize, cap_uv: f64, cap_vu: f64) -> Result<()> {
        self.check(u, v, &[cap_uv, cap_vu])?;
        self.push_pair(u, v, cap_uv, cap_vu);
        Ok(())
    }

    pub fn add_arc(&mut self, u: usize, v: usize, cap: f64) -> Result<()> {
        self.add_edge(u, v, cap, 0.0)
    }

    pub(crate) fn push_pair(&mut self, u: usize, v: usize, cap_uv: f64, cap_vu: f64) {
        self.from.push(u);
        self.to.push(v);
        self.cap.push(cap_uv);
        self.from.push(v);
        self.to.push(u);
        self.cap.push(cap_vu);
    }

    /// Declared capacity of every arc crossing from `side` to its complement.
    pub fn cut_capacity(&self, source_side: &[bool]) -> f64 {
        (0..self.to.len())
            .filter(|&a| source_side[self.from[a]] && !source_side[self.to[a]])
            .map(|a| self.cap[a])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    pub flow: f64,
    /// Indexed by node id including the terminals; true for nodes reachable
    /// from the source in the final residual network.
    pub source_side: Vec<bool>,
}

/// Maximum s-t flow and the minimum cut made of source-reachable nodes.
pub fn max_flow(net: &FlowNetwork) -> MinCut {
    let total = net.n_nodes + 2;
    let (s, t) = (net.source(), net.sink());
    let max_cap = net.cap.iter().copied().fold(0.0, f64::max);
    let eps = 1e-14 * max_cap;

    // CSR over arcs, insertion order within each node
    let mut start = vec![0usize; total + 1];
    for &u in &net.from {
        start[u + 1] += 1;
    }
    for k in 0..total {
        start[k + 1] += start[k];
    }
    let mut fill = start.clone();
    let mut order = vec![0usize; net.from.len()];
    for (a, &u) in net.from.iter().enumerate() {
        order[fill[u]] = a;
        fill[u] += 1;
    }

    let mut residual = net.cap.clone();
    let mut level = vec![-1i64; total];
    let mut cursor = vec![0usize; total];
    let mut queue = VecDeque::new();
    let mut path: Vec<usize> = Vec::new();
    let mut flow = 0.0;

    loop {
        level.iter_mut().for_each(|l| *l = -1);
        level[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &a in &order[start[u]..start[u + 1]] {
                let v = net.to[a];
                if level[v] < 0 && residual[a] > eps {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if level[t] < 0 {
            break;
        }
        cursor.copy_from_slice(&start[..total]);
        path.clear();
        let mut u = s;
        loop {
            if u == t {
                let push = path.iter().map(|&a| residual[a]).fold(f64::INFINITY, f64::min);
                let mut retreat = path.len();
                for (k, &a) in path.iter().enumerate() {
                    residual[a] -= push;
                    residual[a ^ 1] += push;
                    if retreat == path.len() && residual[a] <= eps {
                        retreat = k;
                    }
                }
                flow += push;
                path.truncate(retreat);
                u = path.last().map_or(s, |&a| net.to[a]);
                continue;
            }
            let mut advanced = false;
            while cursor[u] < start[u + 1] {
                let a = order[cursor[u]];
                let v = net.to[a];
                if residual[a] > eps && level[v] == level[u] + 1 {
                    path.push(a);
                    u = v;
                    advanced = true;
                    break;
                }
                cursor[u] += 1;
            }
            if advanced {
                continue;
            }
            level[u] = -1;
            match path.pop() {
                Some(a) => {
                    u = net.from[a];
                    cursor[u] += 1;
                }
                None => break,
            }
        }
    }

    let mut source_side = vec![false; total];
    source_side[s] = true;
    queue.clear();
    queue.push_back(s);
    while let Some(u) = queue.pop_front() {
        for &a in &order[start[u]..start[u + 1]] {
            let v = net.to[a];
            if !source_side[v] && residual[a] > eps {
                source_side[v] = true;
                queue.push_back(v);
            }
        }
    }
    MinCut { flow, source_side }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{draw_index, seeded_rng};
    use rand::RngCore;

    #[test]
    fn bottleneck() {
        let mut net = FlowNetwork::new(1);
        let (s, t) = (net.source(), net.sink());
        net.add_arc(s, 0, 3.0).unwrap();
        net.add_arc(0, t, 2.0).unwrap();
        let cut = max_flow(&net);
        assert_eq!(cut.flow, 2.0);
        assert!(cut.source_side[0]);
        assert_eq!(net.cut_capacity(&cut.source_side), 2.0);
    }

    #[test]
    fn disconnected() {
        let mut net = FlowNetwork::new(2);
        let (s, t) = (net.source(), net.sink());
        net.add_arc(s, 0, 3.0).unwrap();
        net.add_arc(1, t, 2.0).unwrap();
        let cut = max_flow(&net);
        assert_eq!(cut.flow, 0.0);
        assert_eq!(cut.source_side, vec![true, false, true, false]);
    }

    #[test]
    fn rejects_negative_capacity() {
        let mut net = FlowNetwork::new(1);
        assert!(net.add_arc(0, 2, -1.0).is_err());
        assert!(net.add_arc(0, 0, 1.0).is_err());
    }

    /// Minimum cut by enumerating every subset containing the source.
    fn brute_min_cut(net: &FlowNetwork) -> f64 {
        let n = net.n_nodes();
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << n) {
            let mut side = vec![false; n + 2];
            for (i, slot) in side.iter_mut().enumerate().take(n) {
                *slot = mask >> i & 1 == 1;
            }
            side[n] = true;
            best = best.min(net.cut_capacity(&side));
        }
        best
    }

    fn random_net(seed: u64, n: usize, arcs: usize) -> Vec<(usize, usize, f64)> {
        let mut rng = seeded_rng(seed);
        let mut out = Vec::new();
        while out.len() < arcs {
            let u = draw_index(&mut rng, n + 2);
            let v = draw_index(&mut rng, n + 2);
            if u != v {
                let cap = (rng.next_u64() % 1000) as f64 / 100.0;
                out.push((u, v, cap));
            }
        }
        out
    }

    #[test]
    fn duality_and_permutation_invariance() {
        for seed in 0..60 {
            let n = 2 + (seed as usize % 7);
            let arcs = random_net(seed, n, 3 * n + 4);
            let mut net = FlowNetwork::new(n);
            for &(u, v, c) in &arcs {
                net.add_arc(u, v, c).unwrap();
            }
            let cut = max_flow(&net);
            let brute = brute_min_cut(&net);
            assert!((cut.flow - brute).abs() < 1e-9, "seed {seed}: {} vs {brute}", cut.flow);
            assert!((net.cut_capacity(&cut.source_side) - cut.flow).abs() < 1e-9);

            let mut rev = FlowNetwork::new(n);
            for &(u, v, c) in arcs.iter().rev() {
                rev.add_arc(u, v, c).unwrap();
            }
            assert!((max_flow(&rev).flow - cut.flow).abs() < 1e-9);
        }
    }
}
