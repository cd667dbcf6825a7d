//! Hopcroft–Karp maximum bipartite matching, O(√V · E).
//!
//! Left vertices are processed in index order and each adjacency list is
//! scanned in the order given, so the result is deterministic.

use std::collections::VecDeque;

const INF: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    pub left_to_right: Vec<Option<usize>>,
    pub right_to_left: Vec<Option<usize>>,
    pub size: usize,
}

impl Matching {
    pub fn is_perfect(&self) -> bool {
        self.size == self.left_to_right.len() && self.size == self.right_to_left.len()
    }
}

pub fn hopcroft_karp(adj: &[Vec<usize>], n_right: usize) -> Matching {
    let n_left = adj.len();
    let mut l2r: Vec<Option<usize>> = vec![None; n_left];
    let mut r2l: Vec<Option<usize>> = vec![None; n_right];
    let mut dist = vec![INF; n_left];
    let mut next_edge = vec![0usize; n_left];
    let mut size = 0;

    while layer(adj, &l2r, &r2l, &mut dist) {
        next_edge.iter_mut().for_each(|e| *e = 0);
        for u in 0..n_left {
            if l2r[u].is_none() && augment(u, adj, &mut l2r, &mut r2l, &mut dist, &mut next_edge) {
                size += 1;
            }
        }
    }

    Matching {
        left_to_right: l2r,
        right_to_left: r2l,
        size,
    }
}

/// BFS from all free left vertices. Returns whether some free right vertex
/// is reachable; layers beyond the shortest augmenting length are not built.
fn layer(
    adj: &[Vec<usize>],
    l2r: &[Option<usize>],
    r2l: &[Option<usize>],
    dist: &mut [u32],
) -> bool {
    let mut queue = VecDeque::new();
    for (u, m) in l2r.iter().enumerate() {
        if m.is_none() {
            dist[u] = 0;
            queue.push_back(u);
        } else {
            dist[u] = INF;
        }
    }
    let mut limit = INF;
    while let Some(u) = queue.pop_front() {
        if dist[u] >= limit {
            continue;
        }
        for &v in &adj[u] {
            match r2l[v] {
                None => limit = limit.min(dist[u] + 1),
                Some(w) if dist[w] == INF => {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
                Some(_) => {}
            }
        }
    }
    limit != INF
}

/// Iterative layered DFS from the free left vertex `root`.
fn augment(
    root: usize,
    adj: &[Vec<usize>],
    l2r: &mut [Option<usize>],
    r2l: &mut [Option<usize>],
    dist: &mut [u32],
    next_edge: &mut [usize],
) -> bool {
    // path_r[i] is the right vertex taken out of path_l[i]
    let mut path_l = vec![root];
    let mut path_r: Vec<usize> = Vec::new();
    while let Some(&u) = path_l.last() {
        if next_edge[u] < adj[u].len() {
            let v = adj[u][next_edge[u]];
            next_edge[u] += 1;
            match r2l[v] {
                None => {
                    path_r.push(v);
                    for (&l, &r) in path_l.iter().zip(&path_r) {
                        l2r[l] = Some(r);
                        r2l[r] = Some(l);
                    }
                    return true;
                }
                Some(w) if dist[w] != INF && dist[w] == dist[u] + 1 => {
                    path_r.push(v);
                    path_l.push(w);
                }
                Some(_) => {}
            }
        } else {
            dist[u] = INF;
            path_l.pop();
            path_r.pop();
        }
    }
    false
}

/// For a maximum matching that leaves `free_left` unmatched, returns the
/// left vertices reachable from it by alternating paths and their
/// neighbourhood. The neighbourhood is one smaller than the left set, which
/// violates Hall's condition.
pub fn hall_witness(
    adj: &[Vec<usize>],
    m: &Matching,
    free_left: usize,
) -> (Vec<usize>, Vec<usize>) {
    debug_assert!(m.left_to_right[free_left].is_none());
    let mut seen_l = vec![false; adj.len()];
    let mut seen_r = vec![false; m.right_to_left.len()];
    let mut queue = VecDeque::from([free_left]);
    seen_l[free_left] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if seen_r[v] {
                continue;
            }
            seen_r[v] = true;
            if let Some(w) = m.right_to_left[v] {
                if !seen_l[w] {
                    seen_l[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    let left = (0..adj.len()).filter(|&u| seen_l[u]).collect();
    let right = (0..seen_r.len()).filter(|&v| seen_r[v]).collect();
    (left, right)
}
