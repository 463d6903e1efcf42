//! Fill-reducing orderings.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::SparseSpd;

#[derive(Debug, Clone, Default, PartialEq)]
pub enum OrderingMethod {
    /// Approximate minimum degree on the quotient graph of supervariables.
    #[default]
    MinimumDegree,
    /// Recursive longest-axis bisection of per-row coordinates.
    NestedDissection(Vec<[f64; 3]>),
    Natural,
    /// Explicit permutation, `perm[new] = old`.
    Given(Vec<usize>),
}

/// Returns `perm` with `perm[new] = old`.
pub fn compute_ordering(a: &SparseSpd, method: &OrderingMethod) -> Vec<usize> {
    match method {
        OrderingMethod::Natural => (0..a.n()).collect(),
        OrderingMethod::Given(p) => p.clone(),
        OrderingMethod::MinimumDegree => minimum_degree(a),
        OrderingMethod::NestedDissection(coords) => nested_dissection(a, coords),
    }
}

#[inline]
fn mix(i: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = (i as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Groups rows with identical closed neighbourhoods. Returns the
/// supervariable id of every row and the number of supervariables.
fn supervariables(a: &SparseSpd) -> (Vec<usize>, usize) {
    let n = a.n();
    let mut hash = vec![0u64; n];
    let mut degree = vec![0usize; n];
    for j in 0..n {
        hash[j] = hash[j].wrapping_add(mix(j));
        degree[j] += 1;
        for (i, _) in a.column(j) {
            if i != j {
                hash[j] = hash[j].wrapping_add(mix(i));
                hash[i] = hash[i].wrapping_add(mix(j));
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }
    let mut ids: HashMap<(u64, usize), usize> = HashMap::new();
    let mut sv = vec![0usize; n];
    for j in 0..n {
        let next = ids.len();
        sv[j] = *ids.entry((hash[j], degree[j])).or_insert(next);
    }
    (sv, ids.len())
}

fn minimum_degree(a: &SparseSpd) -> Vec<usize> {
    let n = a.n();
    if n == 0 {
        return Vec::new();
    }
    let (sv, nsv) = supervariables(a);
    let mut weight = vec![0usize; nsv];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nsv];
    for (row, &s) in sv.iter().enumerate() {
        weight[s] += 1;
        members[s].push(row);
    }
    let mut edges: HashSet<(usize, usize)> = HashSet::new();
    for j in 0..n {
        let sj = sv[j];
        let mut last = usize::MAX;
        for (i, _) in a.column(j) {
            let si = sv[i];
            if si != sj && si != last {
                edges.insert((si.min(sj), si.max(sj)));
                last = si;
            }
        }
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nsv];
    let mut edges: Vec<(usize, usize)> = edges.into_iter().collect();
    edges.sort_unstable();
    for (u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let dense_threshold = 16.0f64.max(10.0 * (n as f64).sqrt()) as usize;
    amd(&adj, &weight, dense_threshold)
        .into_iter()
        .flat_map(|s| members[s].clone())
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Variable,
    Element,
    Absorbed,
    Dense,
}

/// Weighted approximate minimum degree on a quotient graph. Vertices whose
/// degree exceeds `dense_threshold` are deferred to the end.
fn amd(adj: &[Vec<usize>], weight: &[usize], dense_threshold: usize) -> Vec<usize> {
    let nv = adj.len();
    let mut status = vec![Status::Variable; nv];
    let mut degree: Vec<usize> = (0..nv).map(|i| adj[i].iter().map(|&j| weight[j]).sum()).collect();
    for i in 0..nv {
        if degree[i] > dense_threshold {
            status[i] = Status::Dense;
        }
    }
    let mut avars: Vec<Vec<usize>> = adj
        .iter()
        .map(|l| l.iter().copied().filter(|&j| status[j] == Status::Variable).collect())
        .collect();
    let mut elems: Vec<Vec<usize>> = vec![Vec::new(); nv];
    let mut evars: Vec<Vec<usize>> = vec![Vec::new(); nv];
    let mut live: usize = 0;
    let mut heap = BinaryHeap::new();
    for i in 0..nv {
        if status[i] == Status::Variable {
            degree[i] = avars[i].iter().map(|&j| weight[j]).sum();
            live += weight[i];
            heap.push(Reverse((degree[i], i)));
        }
    }
    let mut mark = vec![0usize; nv];
    let mut wstamp = vec![0usize; nv];
    let mut w = vec![0isize; nv];
    let mut stamp = 0usize;
    let mut order = Vec::with_capacity(nv);

    while let Some(Reverse((d, p))) = heap.pop() {
        if status[p] != Status::Variable || d != degree[p] {
            continue;
        }
        stamp += 1;
        mark[p] = stamp;
        let mut lp = Vec::new();
        for &v in &avars[p] {
            if status[v] == Status::Variable && mark[v] != stamp {
                mark[v] = stamp;
                lp.push(v);
            }
        }
        for &e in &elems[p] {
            if status[e] != Status::Element {
                continue;
            }
            for &v in &evars[e] {
                if status[v] == Status::Variable && mark[v] != stamp {
                    mark[v] = stamp;
                    lp.push(v);
                }
            }
            status[e] = Status::Absorbed;
            evars[e] = Vec::new();
        }
        status[p] = Status::Element;
        avars[p] = Vec::new();
        elems[p] = Vec::new();
        live -= weight[p];
        order.push(p);

        // |Le \ Lp| for every element touching Lp.
        for &i in &lp {
            for &e in &elems[i] {
                if status[e] != Status::Element {
                    continue;
                }
                if wstamp[e] != stamp {
                    wstamp[e] = stamp;
                    evars[e].retain(|&v| status[v] == Status::Variable);
                    w[e] = evars[e].iter().map(|&v| weight[v] as isize).sum();
                }
                w[e] -= weight[i] as isize;
            }
        }
        let lp_weight: usize = lp.iter().map(|&v| weight[v]).sum();
        for &i in &lp {
            avars[i].retain(|&v| status[v] == Status::Variable && mark[v] != stamp);
            let list = std::mem::take(&mut elems[i]);
            let mut kept = Vec::with_capacity(list.len() + 1);
            let mut ext = 0usize;
            for e in list {
                if status[e] != Status::Element {
                    continue;
                }
                if w[e] <= 0 {
                    // Le is contained in Lp.
                    status[e] = Status::Absorbed;
                    evars[e] = Vec::new();
                    continue;
                }
                ext += w[e] as usize;
                kept.push(e);
            }
            kept.push(p);
            elems[i] = kept;
            let a_weight: usize = avars[i].iter().map(|&v| weight[v]).sum();
            let approx = a_weight + (lp_weight - weight[i]) + ext;
            let d_new = approx.min(live - weight[i]).min(degree[i] + lp_weight);
            degree[i] = d_new;
            heap.push(Reverse((d_new, i)));
        }
        evars[p] = lp;
    }
    let mut dense: Vec<usize> = (0..nv).filter(|&i| status[i] == Status::Dense).collect();
    dense.sort_by_key(|&i| (degree[i], i));
    order.extend(dense);
    order
}

fn nested_dissection(a: &SparseSpd, coords: &[[f64; 3]]) -> Vec<usize> {
    let n = a.n();
    assert_eq!(coords.len(), n, "one coordinate per row is required");
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for (i, _) in a.column(j) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut side = vec![0u8; n];
    let mut order = Vec::with_capacity(n);
    dissect((0..n).collect(), coords, &adj, &mut side, &mut order);
    order
}

const ND_LEAF: usize = 64;

fn dissect(mut set: Vec<usize>, coords: &[[f64; 3]], adj: &[Vec<usize>], side: &mut [u8], order: &mut Vec<usize>) {
    if set.len() <= ND_LEAF {
        set.sort_unstable();
        order.extend(set);
        return;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &set {
        for k in 0..3 {
            lo[k] = lo[k].min(coords[i][k]);
            hi[k] = hi[k].max(coords[i][k]);
        }
    }
    let axis = (0..3)
        .max_by(|&x, &y| (hi[x] - lo[x]).partial_cmp(&(hi[y] - lo[y])).unwrap())
        .unwrap();
    set.sort_by(|&x, &y| coords[x][axis].partial_cmp(&coords[y][axis]).unwrap().then(x.cmp(&y)));
    let half = set.len() / 2;
    let (left, right) = set.split_at(half);
    for &i in left {
        side[i] = 1;
    }
    for &i in right {
        side[i] = 2;
    }
    // Separator: left rows adjacent to the right half.
    let mut sep = Vec::new();
    let mut rest_left = Vec::new();
    for &i in left {
        if adj[i].iter().any(|&j| side[j] == 2) {
            sep.push(i);
        } else {
            rest_left.push(i);
        }
    }
    let right = right.to_vec();
    for &i in &set {
        side[i] = 0;
    }
    if sep.len() == left.len() {
        // No useful separator; stop dissecting.
        set.sort_unstable();
        order.extend(set);
        return;
    }
    dissect(rest_left, coords, adj, side, order);
    dissect(right, coords, adj, side, order);
    sep.sort_unstable();
    order.extend(sep);
}
