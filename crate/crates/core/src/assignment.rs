//! Maximum-weight bipartite matching on sparse graphs.
//!
//! Successive shortest augmenting paths with Dijkstra and node potentials (the
//! Jonker-Volgenant family). Every left node gets a private zero-weight "unmatched"
//! slot, so the solver always finds a complete assignment and real edges with negative
//! weight are simply never chosen.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Copy, Clone, PartialEq)]
struct State {
    dist: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Maximum-weight matching over `edges = (left, right, weight)`; returns matched
/// `(left, right)` pairs sorted by left index. Unmatched nodes are omitted.
pub fn max_weight_matching(n_left: usize, n_right: usize, edges: &[(usize, usize, f64)]) -> Vec<(usize, usize)> {
    if n_left == 0 || edges.is_empty() {
        return Vec::new();
    }
    let shift = edges.iter().map(|e| e.2).fold(0.0_f64, f64::max);
    // right nodes: 0..n_right real, n_right + i is the private slot of left i
    let n_slots = n_right + n_left;
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_left];
    for &(l, r, w) in edges {
        assert!(l < n_left && r < n_right, "edge ({l}, {r}) out of range");
        adj[l].push((r, shift - w));
    }
    for (l, list) in adj.iter_mut().enumerate() {
        list.push((n_right + l, shift));
    }

    // node ids: left l -> l, right r -> n_left + r
    let total = n_left + n_slots;
    let mut potential = vec![0.0_f64; total];
    let mut match_left: Vec<Option<usize>> = vec![None; n_left];
    let mut match_right: Vec<Option<usize>> = vec![None; n_slots];
    let mut matched_cost = vec![0.0_f64; n_slots];

    let mut dist = vec![f64::INFINITY; total];
    let mut prev = vec![usize::MAX; total];
    let mut prev_cost = vec![0.0_f64; n_slots];
    let mut done = vec![false; total];

    for source in 0..n_left {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        done.iter_mut().for_each(|d| *d = false);
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(State { dist: 0.0, node: source });
        let mut sink = None;

        while let Some(State { dist: d, node }) = heap.pop() {
            if done[node] || d > dist[node] {
                continue;
            }
            done[node] = true;
            if node < n_left {
                for &(r, cost) in &adj[node] {
                    if match_left[node] == Some(r) {
                        continue;
                    }
                    let id = n_left + r;
                    let nd = d + (cost + potential[node] - potential[id]).max(0.0);
                    if nd < dist[id] {
                        dist[id] = nd;
                        prev[id] = node;
                        prev_cost[r] = cost;
                        heap.push(State { dist: nd, node: id });
                    }
                }
            } else {
                let r = node - n_left;
                match match_right[r] {
                    None => {
                        sink = Some(r);
                        break;
                    }
                    Some(l) => {
                        let nd = d + (potential[node] - matched_cost[r] - potential[l]).max(0.0);
                        if nd < dist[l] {
                            dist[l] = nd;
                            prev[l] = node;
                            heap.push(State { dist: nd, node: l });
                        }
                    }
                }
            }
        }

        let sink = sink.expect("every left node can reach its private slot");
        let reach = dist[n_left + sink];
        for (p, &d) in potential.iter_mut().zip(&dist) {
            *p += d.min(reach);
        }

        let mut r = sink;
        loop {
            let l = prev[n_left + r];
            let previous = match_left[l];
            match_left[l] = Some(r);
            match_right[r] = Some(l);
            matched_cost[r] = prev_cost[r];
            if l == source {
                break;
            }
            r = previous.expect("interior path nodes are matched");
        }
    }

    match_left
        .iter()
        .enumerate()
        .filter_map(|(l, r)| r.filter(|&r| r < n_right).map(|r| (l, r)))
        .collect()
}
