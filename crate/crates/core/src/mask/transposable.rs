//! Transposable masks: every M×M tile keeps at most N entries per row and
//! per column, chosen to maximize the kept magnitude.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use super::{Direction, Mask};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Matrix, NmPattern};

/// Largest M for which [`TransposableMethod::Exact`] enumerates tile masks.
pub const EXACT_MAX_M: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransposableMethod {
    /// Enumerates every feasible tile mask. Only for M <= 4.
    Exact,
    /// Greedy descending-magnitude insertion under both block budgets.
    /// Keeps at least half of the optimal magnitude.
    TwoApprox,
    /// Optimal tile masks via min-cost flow, usable for any M.
    Flow,
}

impl fmt::Display for TransposableMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransposableMethod::Exact => "exact",
            TransposableMethod::TwoApprox => "approx",
            TransposableMethod::Flow => "flow",
        })
    }
}

impl FromStr for TransposableMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "approx" | "two-approx" => Ok(Self::TwoApprox),
            "flow" => Ok(Self::Flow),
            other => Err(Error::InvalidArgument(format!(
                "unknown transposable method {other:?}"
            ))),
        }
    }
}

/// Builds a transposable mask tile by tile.
///
/// After the method picks its entries, remaining zero-cost slots are filled
/// in row-major order wherever both budgets allow, so rows reach N ones
/// whenever the tile admits it. Filling never lowers the kept magnitude.
pub fn transposable_mask(
    w: &Matrix,
    pattern: NmPattern,
    method: TransposableMethod,
) -> Result<Mask> {
    pattern.check_divides("weight rows", w.rows())?;
    pattern.check_divides("weight cols", w.cols())?;
    let m = pattern.m();
    if method == TransposableMethod::Exact && m > EXACT_MAX_M {
        return Err(Error::Infeasible {
            what: "exact transposable enumeration",
            note: format!(
                "M = {m} exceeds {EXACT_MAX_M}; the tile search space grows as 2^(M*M), use the flow or approx method"
            ),
        });
    }
    let tile_cols = w.cols() / m;
    let tiles = par::map_range((w.rows() / m) * tile_cols, |t| {
        let (ti, tj) = (t / tile_cols, t % tile_cols);
        let mag: Vec<f64> = (0..m * m)
            .map(|k| w.get(ti * m + k / m, tj * m + k % m).abs())
            .collect();
        let mut tile = match method {
            TransposableMethod::Exact => exact_tile(&mag, pattern),
            TransposableMethod::TwoApprox => greedy_tile(&mag, pattern),
            TransposableMethod::Flow => flow_tile(&mag, pattern),
        };
        complete_tile(&mut tile, pattern);
        tile
    });
    let mut bits = vec![false; w.rows() * w.cols()];
    for (t, tile) in tiles.iter().enumerate() {
        let (ti, tj) = (t / tile_cols, t % tile_cols);
        for (k, &b) in tile.iter().enumerate() {
            bits[(ti * m + k / m) * w.cols() + tj * m + k % m] = b;
        }
    }
    Mask::new(Direction::Transposable, pattern, w.rows(), w.cols(), bits)
}

/// Kept magnitude `sum |w|` over the mask, per M×M tile in row-major tile order.
pub fn tile_kept_magnitudes(w: &Matrix, mask: &Mask) -> Result<Vec<f64>> {
    let m = mask.pattern().m();
    let kept = mask.apply(w)?;
    mask.pattern().check_divides("mask rows", w.rows())?;
    mask.pattern().check_divides("mask cols", w.cols())?;
    let tile_cols = w.cols() / m;
    Ok((0..(w.rows() / m) * tile_cols)
        .map(|t| {
            let (ti, tj) = (t / tile_cols, t % tile_cols);
            let mut sum = 0.0;
            for i in ti * m..(ti + 1) * m {
                for j in tj * m..(tj + 1) * m {
                    sum += kept.get(i, j).abs();
                }
            }
            sum
        })
        .collect())
}

/// Depth-first search over per-row subsets with column budgets. Prefers the
/// larger kept magnitude, then more kept entries, then the first found.
fn exact_tile(mag: &[f64], pattern: NmPattern) -> Vec<bool> {
    let (n, m) = (pattern.n(), pattern.m());
    let row_choices: Vec<u32> = (0u32..1 << m)
        .filter(|s| s.count_ones() as usize <= n)
        .collect();

    struct Search<'a> {
        mag: &'a [f64],
        m: usize,
        n: usize,
        choices: &'a [u32],
        current: Vec<u32>,
        col_used: Vec<usize>,
        best: (f64, u32, Vec<u32>),
    }

    impl Search<'_> {
        fn go(&mut self, row: usize, sum: f64, ones: u32) {
            if row == self.m {
                let better = sum > self.best.0 || (sum == self.best.0 && ones > self.best.1);
                if better {
                    self.best = (sum, ones, self.current.clone());
                }
                return;
            }
            for ci in 0..self.choices.len() {
                let set = self.choices[ci];
                if (0..self.m).any(|c| set >> c & 1 == 1 && self.col_used[c] == self.n) {
                    continue;
                }
                let mut add = 0.0;
                for c in 0..self.m {
                    if set >> c & 1 == 1 {
                        self.col_used[c] += 1;
                        add += self.mag[row * self.m + c];
                    }
                }
                self.current[row] = set;
                self.go(row + 1, sum + add, ones + set.count_ones());
                for c in 0..self.m {
                    if set >> c & 1 == 1 {
                        self.col_used[c] -= 1;
                    }
                }
            }
        }
    }

    let mut search = Search {
        mag,
        m,
        n,
        choices: &row_choices,
        current: vec![0; m],
        col_used: vec![0; m],
        best: (f64::NEG_INFINITY, 0, vec![0; m]),
    };
    search.go(0, 0.0, 0);
    let best = search.best.2;
    (0..m * m)
        .map(|k| best[k / m] >> (k % m) & 1 == 1)
        .collect()
}

/// Accepts entries in descending magnitude (ties by row-major position)
/// while both the row and the column budget have room.
fn greedy_tile(mag: &[f64], pattern: NmPattern) -> Vec<bool> {
    let (n, m) = (pattern.n(), pattern.m());
    let mut order: Vec<usize> = (0..m * m).collect();
    order.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]).then(a.cmp(&b)));
    let mut rows = vec![0; m];
    let mut cols = vec![0; m];
    let mut tile = vec![false; m * m];
    for k in order {
        let (r, c) = (k / m, k % m);
        if rows[r] < n && cols[c] < n {
            rows[r] += 1;
            cols[c] += 1;
            tile[k] = true;
        }
    }
    tile
}

/// Maximum-weight degree-bounded bipartite subgraph via successive shortest
/// paths. Augments while a path strictly lowers the cost.
fn flow_tile(mag: &[f64], pattern: NmPattern) -> Vec<bool> {
    let (n, m) = (pattern.n(), pattern.m());
    let source = 2 * m;
    let sink = 2 * m + 1;
    let mut net = FlowNetwork::new(2 * m + 2);
    for r in 0..m {
        net.add_edge(source, r, n as i64, 0.0);
    }
    let mut cell_edges = vec![0; m * m];
    for r in 0..m {
        for c in 0..m {
            cell_edges[r * m + c] = net.add_edge(r, m + c, 1, -mag[r * m + c]);
        }
    }
    for c in 0..m {
        net.add_edge(m + c, sink, n as i64, 0.0);
    }
    while net.augment_negative_path(source, sink) {}
    cell_edges.iter().map(|&e| net.edges[e].cap == 0).collect()
}

/// Adds entries in row-major order while both budgets allow.
fn complete_tile(tile: &mut [bool], pattern: NmPattern) {
    let (n, m) = (pattern.n(), pattern.m());
    let mut rows = vec![0; m];
    let mut cols = vec![0; m];
    for (k, &b) in tile.iter().enumerate() {
        if b {
            rows[k / m] += 1;
            cols[k % m] += 1;
        }
    }
    for k in 0..m * m {
        let (r, c) = (k / m, k % m);
        if !tile[k] && rows[r] < n && cols[c] < n {
            tile[k] = true;
            rows[r] += 1;
            cols[c] += 1;
        }
    }
}

struct FlowEdge {
    to: usize,
    cap: i64,
    cost: f64,
}

struct FlowNetwork {
    edges: Vec<FlowEdge>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Returns the index of the forward edge; its reverse is `index ^ 1`.
    fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(FlowEdge { to, cap, cost });
        self.edges.push(FlowEdge {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Finds a shortest residual path (SPFA; residual graphs of successive
    /// shortest paths have no negative cycles) and pushes one unit along it
    /// if its cost is negative.
    fn augment_negative_path(&mut self, source: usize, sink: usize) -> bool {
        const EPS: f64 = 1e-12;
        let nodes = self.adj.len();
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        let mut queued = vec![false; nodes];
        let mut queue = VecDeque::new();
        dist[source] = 0.0;
        queue.push_back(source);
        queued[source] = true;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            for &e in &self.adj[u] {
                let edge = &self.edges[e];
                if edge.cap > 0 && dist[u] + edge.cost < dist[edge.to] - EPS {
                    dist[edge.to] = dist[u] + edge.cost;
                    via[edge.to] = e;
                    if !queued[edge.to] {
                        queued[edge.to] = true;
                        queue.push_back(edge.to);
                    }
                }
            }
        }
        if !(dist[sink] < -EPS) {
            return false;
        }
        let mut v = sink;
        while v != source {
            let e = via[v];
            self.edges[e].cap -= 1;
            self.edges[e ^ 1].cap += 1;
            v = self.edges[e ^ 1].to;
        }
        true
    }
}
