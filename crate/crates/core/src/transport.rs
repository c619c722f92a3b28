//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Costs are evaluated on demand, so only the spanning tree is stored. The tree is kept
//! strongly feasible, which rules out cycling on degenerate pivots.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct TransportSolution {
    pub cost: f64,
    /// Dual objective `sum_j b_j v_j - sum_i a_i u_i`.
    pub dual: f64,
    /// `|cost - dual|`.
    pub gap: f64,
    /// Most negative reduced cost left at termination (0 if none).
    pub dual_violation: f64,
    /// Positive flows `(source, sink, amount)`.
    pub flows: Vec<(usize, usize, f64)>,
    /// Potentials of sources and sinks; `c(i, j) + u_i - v_j >= 0`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
}

#[derive(Clone, Copy, Debug)]
struct TreeArc {
    from: usize,
    to: usize,
    cost: f64,
    flow: f64,
    /// Source and sink indices of a real arc.
    real: Option<(usize, usize)>,
}

/// Minimum-cost transport of `supply` onto `demand` with costs `cost(i, j) <= cost_bound`.
///
/// Totals must agree to a relative `1e-9`; the demand is rescaled to match exactly.
pub fn solve<C>(supply: &[f64], demand: &[f64], cost_bound: f64, cost: C) -> Result<TransportSolution>
where
    C: Fn(usize, usize) -> f64,
{
    let (n, m) = (supply.len(), demand.len());
    let sa: f64 = supply.iter().sum();
    let sb: f64 = demand.iter().sum();
    if supply.iter().chain(demand).any(|&x| !(x >= 0.0) || !x.is_finite())
        || (sa - sb).abs() > 1e-9 * sa.max(sb).max(1e-300)
    {
        return Err(Error::UnbalancedMasses { a: sa, b: sb });
    }
    if n == 0 || m == 0 || sa == 0.0 {
        return Ok(TransportSolution {
            cost: 0.0,
            dual: 0.0,
            gap: 0.0,
            dual_violation: 0.0,
            flows: Vec::new(),
            u: vec![0.0; n],
            v: vec![0.0; m],
            pivots: 0,
        });
    }
    let scale = sa / sb;
    let demand: Vec<f64> = demand.iter().map(|b| b * scale).collect();
    let nodes = n + m + 1;
    let root = n + m;
    let cmax = cost_bound.max(1e-300);
    let big = (nodes as f64 + 1.0) * cmax + 1.0;
    let tol = 1e-12 * big.max(1.0);

    // initial tree: every source ships to the root and the root feeds every sink
    let mut tree: Vec<TreeArc> = Vec::with_capacity(n + m);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (i, &a) in supply.iter().enumerate() {
        adj[i].push(tree.len());
        adj[root].push(tree.len());
        tree.push(TreeArc { from: i, to: root, cost: big, flow: a, real: None });
    }
    for (j, &b) in demand.iter().enumerate() {
        adj[n + j].push(tree.len());
        adj[root].push(tree.len());
        tree.push(TreeArc { from: root, to: n + j, cost: big, flow: b, real: None });
    }

    let mut parent = vec![usize::MAX; nodes];
    let mut parc = vec![usize::MAX; nodes];
    let mut depth = vec![0usize; nodes];
    let mut pi = vec![0.0f64; nodes];
    let mut queue = VecDeque::with_capacity(nodes);
    parent[root] = root;
    hang(root, &tree, &adj, &mut parent, &mut parc, &mut depth, &mut pi, &mut queue);

    let total = n * m;
    let block = ((total as f64).sqrt() as usize).clamp(16, total.max(16));
    let mut cursor = 0usize;
    let mut pivots = 0usize;
    let max_pivots = 50 * nodes * nodes.max(64);
    let mut up_u: Vec<usize> = Vec::new();
    let mut up_v: Vec<usize> = Vec::new();
    loop {
        // block pricing
        let mut best = (-tol, usize::MAX);
        let mut scanned = 0usize;
        while scanned < total {
            let end = (scanned + block).min(total);
            for _ in scanned..end {
                let (i, j) = (cursor / m, cursor % m);
                let rc = cost(i, j) + pi[i] - pi[n + j];
                if rc < best.0 {
                    best = (rc, cursor);
                }
                cursor += 1;
                if cursor == total {
                    cursor = 0;
                }
            }
            scanned = end;
            if best.1 != usize::MAX {
                break;
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::ToleranceNotReached(format!("network simplex exceeded {max_pivots} pivots")));
        }
        let (i, j) = (best.1 / m, best.1 % m);
        let (u, v) = (i, n + j);
        // tree paths from both ends up to the apex
        up_u.clear();
        up_v.clear();
        let (mut a, mut b) = (u, v);
        while depth[a] > depth[b] {
            up_u.push(a);
            a = parent[a];
        }
        while depth[b] > depth[a] {
            up_v.push(b);
            b = parent[b];
        }
        while a != b {
            up_u.push(a);
            a = parent[a];
            up_v.push(b);
            b = parent[b];
        }
        // orientation: apex -> ... -> u -> v -> ... -> apex; keep the last blocking arc
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        // whether the leaving arc lies on the path from u
        let mut below_u = true;
        for &x in up_u.iter().rev() {
            let t = tree[parc[x]];
            // traversed parent -> x: forward iff the arc points to x
            if t.to != x && t.flow <= theta {
                theta = t.flow;
                leave = parc[x];
                below_u = true;
            }
        }
        for &x in up_v.iter() {
            let t = tree[parc[x]];
            // traversed x -> parent: forward iff the arc leaves x
            if t.from != x && t.flow <= theta {
                theta = t.flow;
                leave = parc[x];
                below_u = false;
            }
        }
        if leave == usize::MAX {
            return Err(Error::InvalidParameter("unbounded transport problem".into()));
        }
        for &x in &up_u {
            let s = parc[x];
            if tree[s].to == x {
                tree[s].flow += theta;
            } else {
                tree[s].flow -= theta;
            }
        }
        for &x in &up_v {
            let s = parc[x];
            if tree[s].from == x {
                tree[s].flow += theta;
            } else {
                tree[s].flow -= theta;
            }
        }
        let old = tree[leave];
        adj[old.from].retain(|&s| s != leave);
        adj[old.to].retain(|&s| s != leave);
        tree[leave] = TreeArc {
            from: u,
            to: v,
            cost: cost(i, j),
            flow: theta,
            real: Some((i, j)),
        };
        adj[u].push(leave);
        adj[v].push(leave);
        // only the subtree cut off below the leaving arc moves; rehang it from the entering arc
        let (q, o) = if below_u { (u, v) } else { (v, u) };
        parent[q] = o;
        parc[q] = leave;
        depth[q] = depth[o] + 1;
        pi[q] = if q == u { pi[o] - tree[leave].cost } else { pi[o] + tree[leave].cost };
        hang(q, &tree, &adj, &mut parent, &mut parc, &mut depth, &mut pi, &mut queue);
    }

    let mut primal = 0.0;
    let mut flows = Vec::new();
    let mut artificial = 0.0;
    for t in &tree {
        match t.real {
            Some((i, j)) => {
                if t.flow > 0.0 {
                    primal += t.flow * t.cost;
                    flows.push((i, j, t.flow));
                }
            }
            None => artificial += t.flow,
        }
    }
    if artificial > 1e-9 * sa {
        return Err(Error::ToleranceNotReached(format!(
            "artificial flow {artificial:.3e} left in the optimal tree"
        )));
    }
    let dual: f64 = demand.iter().enumerate().map(|(j, b)| b * pi[n + j]).sum::<f64>()
        - supply.iter().enumerate().map(|(i, a)| a * pi[i]).sum::<f64>();
    // shift potentials so the smallest source potential is zero
    let shift = pi[..n].iter().cloned().fold(f64::INFINITY, f64::min);
    let mut viol = 0.0f64;
    for k in 0..total {
        let (i, j) = (k / m, k % m);
        viol = viol.min(cost(i, j) + pi[i] - pi[n + j]);
    }
    Ok(TransportSolution {
        cost: primal,
        dual,
        gap: (primal - dual).abs(),
        dual_violation: viol,
        flows,
        u: pi[..n].iter().map(|p| p - shift).collect(),
        v: pi[n..n + m].iter().map(|p| p - shift).collect(),
        pivots,
    })
}

/// Recomputes parent, depth and potentials below `start`, whose own entries are already set.
#[allow(clippy::too_many_arguments)]
fn hang(
    start: usize,
    tree: &[TreeArc],
    adj: &[Vec<usize>],
    parent: &mut [usize],
    parc: &mut [usize],
    depth: &mut [usize],
    pi: &mut [f64],
    queue: &mut VecDeque<usize>,
) {
    queue.clear();
    queue.push_back(start);
    while let Some(x) = queue.pop_front() {
        for &a in &adj[x] {
            if a == parc[x] {
                continue;
            }
            let t = tree[a];
            let y = if t.from == x { t.to } else { t.from };
            parent[y] = x;
            parc[y] = a;
            depth[y] = depth[x] + 1;
            // zero reduced cost on tree arcs: cost + pi_from - pi_to = 0
            pi[y] = if t.from == x { pi[x] + t.cost } else { pi[x] - t.cost };
            queue.push_back(y);
        }
    }
}
