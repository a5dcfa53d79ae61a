//! Motion planning: A* to target sets under avoidance, and visit orders for
//! iterated reachability via Christofides over shortest-path distances.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};

use crate::lang::Dir;
use crate::world::{GridWorld, Point};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathQuery {
    pub start: Point,
    pub targets: BTreeSet<Point>,
    /// Cells never entered after the start, except as the arrival target (¬A U T).
    pub avoid: BTreeSet<Point>,
}

impl PathQuery {
    pub fn to(start: Point, targets: BTreeSet<Point>) -> PathQuery {
        PathQuery {
            start,
            targets,
            avoid: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub moves: Vec<Dir>,
    pub end: Point,
}

impl Path {
    pub fn cost(&self) -> usize {
        self.moves.len()
    }

    /// Cells visited after the start, in order.
    pub fn cells(&self, start: Point) -> Vec<Point> {
        let mut p = start;
        self.moves
            .iter()
            .map(|d| {
                p = p.step(*d);
                p
            })
            .collect()
    }

    /// Replays the path against the query's constraints.
    pub fn validates(&self, q: &PathQuery, w: &GridWorld) -> bool {
        let cells = self.cells(q.start);
        let last = cells.last().copied().unwrap_or(q.start);
        let before_arrival = &cells[..cells.len().saturating_sub(1)];
        cells.iter().all(|c| w.is_free(*c))
            && before_arrival.iter().all(|c| !q.avoid.contains(c))
            && q.targets.contains(&last)
            && last == self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no target reachable")]
pub struct Unreachable;

fn dir_rank(d: Dir) -> u8 {
    match d {
        Dir::Up => 0,
        Dir::Down => 1,
        Dir::Left => 2,
        Dir::Right => 3,
    }
}

/// A* to the nearest target. Ties break on lower f, then lower h, then the direction of
/// the last move (up, down, left, right), then insertion order.
pub fn shortest_path(q: &PathQuery, w: &GridWorld) -> Result<Path, Unreachable> {
    let targets: Vec<Point> = q.targets.iter().copied().filter(|t| w.is_free(*t)).collect();
    if targets.is_empty() {
        return Err(Unreachable);
    }
    if q.targets.contains(&q.start) {
        return Ok(Path {
            moves: vec![],
            end: q.start,
        });
    }
    let h = |p: Point| targets.iter().map(|t| p.manhattan(*t)).min().unwrap_or(0);
    let mut g: HashMap<Point, u64> = HashMap::new();
    let mut parent: HashMap<Point, (Point, Dir)> = HashMap::new();
    let mut closed: BTreeSet<Point> = BTreeSet::new();
    let mut open = BinaryHeap::new();
    let mut seq: u64 = 0;
    g.insert(q.start, 0);
    open.push(Reverse((h(q.start), h(q.start), 0u8, seq, q.start)));
    while let Some(Reverse((_, _, _, _, p))) = open.pop() {
        if !closed.insert(p) {
            continue;
        }
        if q.targets.contains(&p) {
            let mut moves = Vec::new();
            let mut cur = p;
            while let Some(&(prev, d)) = parent.get(&cur) {
                moves.push(d);
                cur = prev;
            }
            moves.reverse();
            return Ok(Path { moves, end: p });
        }
        let gp = g[&p];
        for (d, n) in w.neighbours(p) {
            if (q.avoid.contains(&n) && !q.targets.contains(&n)) || closed.contains(&n) {
                continue;
            }
            let gn = gp + 1;
            if g.get(&n).is_some_and(|&old| old <= gn) {
                continue;
            }
            g.insert(n, gn);
            parent.insert(n, (p, d));
            seq += 1;
            let hn = h(n);
            open.push(Reverse((gn + hn, hn, dir_rank(d), seq, n)));
        }
    }
    Err(Unreachable)
}

/// Breadth-first distances from `from` over free cells.
pub fn bfs_distances(from: Point, w: &GridWorld) -> HashMap<Point, u64> {
    let mut dist = HashMap::new();
    if !w.is_free(from) {
        return dist;
    }
    dist.insert(from, 0);
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        let d = dist[&p];
        for (_, n) in w.neighbours(p) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(n) {
                e.insert(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VisitOrder {
    pub order: Vec<Point>,
    /// Sites no path reaches; they are left out of `order`.
    pub unreachable: Vec<Point>,
}

/// Largest odd-vertex count matched exactly; greedy above.
pub const EXACT_MATCHING_LIMIT: usize = 20;

/// An open tour from `start` through every reachable site.
///
/// Christofides runs over the shortest-path metric with `start` as a vertex; the closed
/// tour is opened at `start` in the cheaper direction and then improved with 2-opt and
/// or-opt moves that respect the fixed start.
pub fn visit_order(start: Point, sites: &BTreeSet<Point>, w: &GridWorld) -> VisitOrder {
    let reach = bfs_distances(start, w);
    let (mut ok, mut unreachable) = (Vec::new(), Vec::new());
    for s in sites {
        if *s == start {
            continue;
        }
        if reach.contains_key(s) {
            ok.push(*s);
        } else {
            unreachable.push(*s);
        }
    }
    let mut order = Vec::new();
    if sites.contains(&start) {
        order.push(start);
    }
    if ok.is_empty() {
        return VisitOrder { order, unreachable };
    }
    let mut verts = vec![start];
    verts.extend(ok.iter().copied());
    let n = verts.len();
    let mut dist = vec![vec![0u64; n]; n];
    for i in 0..n {
        let d = if i == 0 { reach.clone() } else { bfs_distances(verts[i], w) };
        for j in 0..n {
            dist[i][j] = d[&verts[j]];
        }
    }
    let tour = open_tour(&dist);
    order.extend(tour.into_iter().skip(1).map(|i| verts[i]));
    VisitOrder { order, unreachable }
}

/// Open path over vertex indices starting at 0.
pub fn open_tour(dist: &[Vec<u64>]) -> Vec<usize> {
    let n = dist.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let closed = christofides(dist);
    let at = closed.iter().position(|&v| v == 0).unwrap_or(0);
    let mut fwd: Vec<usize> = closed[at..].iter().chain(&closed[..at]).copied().collect();
    let mut bwd = fwd.clone();
    bwd[1..].reverse();
    if path_len(dist, &bwd) < path_len(dist, &fwd) {
        fwd = bwd;
    }
    polish(dist, &mut fwd);
    fwd
}

pub fn path_len(dist: &[Vec<u64>], order: &[usize]) -> u64 {
    order.windows(2).map(|w| dist[w[0]][w[1]]).sum()
}

/// Closed Christofides tour over all vertices, starting at vertex 0.
pub fn christofides(dist: &[Vec<u64>]) -> Vec<usize> {
    let n = dist.len();
    let mst = prim(dist);
    let mut degree = vec![0usize; n];
    let mut edges: Vec<(usize, usize)> = mst;
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let odd: Vec<usize> = (0..n).filter(|&v| degree[v] % 2 == 1).collect();
    edges.extend(min_matching(dist, &odd));
    let circuit = euler_circuit(n, &edges);
    let mut seen = vec![false; n];
    circuit
        .into_iter()
        .filter(|&v| !std::mem::replace(&mut seen[v], true))
        .collect()
}

/// Minimum spanning tree edges (Prim from vertex 0, lowest index on ties).
fn prim(dist: &[Vec<u64>]) -> Vec<(usize, usize)> {
    let n = dist.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![(u64::MAX, 0usize); n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    in_tree[0] = true;
    for v in 1..n {
        best[v] = (dist[0][v], 0);
    }
    for _ in 1..n {
        let v = (0..n)
            .filter(|&v| !in_tree[v])
            .min_by_key(|&v| (best[v].0, v))
            .expect("vertex left");
        in_tree[v] = true;
        edges.push((best[v].1, v));
        for u in 0..n {
            if !in_tree[u] && dist[v][u] < best[u].0 {
                best[u] = (dist[v][u], v);
            }
        }
    }
    edges
}

/// Minimum-weight perfect matching on `odd` (exact up to the limit, greedy above).
pub fn min_matching(dist: &[Vec<u64>], odd: &[usize]) -> Vec<(usize, usize)> {
    if odd.len() <= EXACT_MATCHING_LIMIT {
        exact_matching(dist, odd)
    } else {
        greedy_matching(dist, odd)
    }
}

fn exact_matching(dist: &[Vec<u64>], odd: &[usize]) -> Vec<(usize, usize)> {
    let k = odd.len();
    if k == 0 {
        return vec![];
    }
    let full = (1usize << k) - 1;
    let mut dp = vec![u64::MAX; 1 << k];
    let mut choice = vec![0usize; 1 << k];
    dp[0] = 0;
    for mask in 1..=full {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut r = rest;
        while r != 0 {
            let j = r.trailing_zeros() as usize;
            r &= r - 1;
            let sub = rest & !(1 << j);
            if dp[sub] == u64::MAX {
                continue;
            }
            let c = dp[sub] + dist[odd[i]][odd[j]];
            if c < dp[mask] {
                dp[mask] = c;
                choice[mask] = j;
            }
        }
    }
    let mut out = Vec::with_capacity(k / 2);
    let mut mask = full;
    while mask != 0 {
        let i = mask.trailing_zeros() as usize;
        let j = choice[mask];
        out.push((odd[i], odd[j]));
        mask &= !(1 << i) & !(1 << j);
    }
    out
}

fn greedy_matching(dist: &[Vec<u64>], odd: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (a, &i) in odd.iter().enumerate() {
        for &j in &odd[a + 1..] {
            pairs.push((dist[i][j], i, j));
        }
    }
    pairs.sort();
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used.contains(&i) && !used.contains(&j) {
            used.insert(i);
            used.insert(j);
            out.push((i, j));
        }
    }
    out
}

/// Hierholzer's algorithm from vertex 0, taking the lowest-indexed unused edge first.
fn euler_circuit(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, e));
        adj[b].push((a, e));
    }
    for l in &mut adj {
        l.sort();
        l.reverse();
    }
    let mut used = vec![false; edges.len()];
    let mut stack = vec![0usize];
    let mut circuit = Vec::new();
    while let Some(&v) = stack.last() {
        while adj[v].last().is_some_and(|&(_, e)| used[e]) {
            adj[v].pop();
        }
        match adj[v].pop() {
            Some((u, e)) => {
                used[e] = true;
                stack.push(u);
            }
            None => circuit.push(stack.pop().expect("non-empty")),
        }
    }
    circuit.reverse();
    circuit
}

/// First-improvement 2-opt and or-opt on an open path with a fixed first vertex.
fn polish(dist: &[Vec<u64>], order: &mut Vec<usize>) {
    let n = order.len();
    let mut improved = true;
    while improved {
        improved = false;
        // 2-opt: reverse order[i..=j].
        'two: for i in 1..n {
            for j in (i + 1)..n {
                let before = dist[order[i - 1]][order[i]]
                    + if j + 1 < n { dist[order[j]][order[j + 1]] } else { 0 };
                let after = dist[order[i - 1]][order[j]]
                    + if j + 1 < n { dist[order[i]][order[j + 1]] } else { 0 };
                if after < before {
                    order[i..=j].reverse();
                    improved = true;
                    break 'two;
                }
            }
        }
        if improved {
            continue;
        }
        // or-opt: move a segment of length 1..=3 elsewhere.
        let base = path_len(dist, order);
        'or: for len in 1..=3usize {
            for i in 1..n {
                if i + len > n {
                    break;
                }
                for k in 1..=(n - len) {
                    if k == i {
                        continue;
                    }
                    let mut cand = order.clone();
                    let seg: Vec<usize> = cand.drain(i..i + len).collect();
                    for rev in [false, true] {
                        let mut c = cand.clone();
                        let mut s = seg.clone();
                        if rev {
                            s.reverse();
                        }
                        c.splice(k..k, s);
                        if path_len(dist, &c) < base {
                            *order = c;
                            improved = true;
                            break 'or;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line() {
        let w = GridWorld::new(5, 1);
        let q = PathQuery::to(Point::new(0, 0), [Point::new(4, 0)].into());
        let p = shortest_path(&q, &w).unwrap();
        assert_eq!(p.moves, vec![Dir::Right; 4]);
        assert!(p.validates(&q, &w));
    }

    #[test]
    fn start_in_targets_is_empty_path() {
        let w = GridWorld::new(3, 3);
        let q = PathQuery::to(Point::new(1, 1), [Point::new(1, 1), Point::new(0, 0)].into());
        assert_eq!(shortest_path(&q, &w).unwrap().cost(), 0);
    }

    #[test]
    fn walls_and_avoidance() {
        let w = GridWorld::new(3, 1).with_obstacle(1, 0);
        let q = PathQuery::to(Point::new(0, 0), [Point::new(2, 0)].into());
        assert_eq!(shortest_path(&q, &w), Err(Unreachable));
        let w = GridWorld::new(3, 2);
        let mut q = PathQuery::to(Point::new(0, 0), [Point::new(2, 0)].into());
        q.avoid.insert(Point::new(1, 0));
        let p = shortest_path(&q, &w).unwrap();
        assert_eq!(p.cost(), 4);
        assert!(p.validates(&q, &w));
        q.avoid.insert(Point::new(2, 0));
        assert_eq!(shortest_path(&q, &w).unwrap().cost(), 4);
    }

    #[test]
    fn tie_break_prefers_down_before_right() {
        let w = GridWorld::new(2, 2);
        let q = PathQuery::to(Point::new(0, 0), [Point::new(1, 1)].into());
        assert_eq!(shortest_path(&q, &w).unwrap().moves, vec![Dir::Down, Dir::Right]);
    }

    #[test]
    fn collinear_sites_left_to_right() {
        let w = GridWorld::new(10, 1);
        let sites: BTreeSet<Point> = [7, 2, 5].iter().map(|&x| Point::new(x, 0)).collect();
        let o = visit_order(Point::new(0, 0), &sites, &w);
        assert_eq!(o.order, vec![Point::new(2, 0), Point::new(5, 0), Point::new(7, 0)]);
    }

    #[test]
    fn single_and_unreachable_sites() {
        let w = GridWorld::new(3, 1).with_obstacle(1, 0);
        let sites: BTreeSet<Point> = [Point::new(2, 0), Point::new(0, 0)].into();
        let o = visit_order(Point::new(0, 0), &sites, &w);
        assert_eq!(o.order, vec![Point::new(0, 0)]);
        assert_eq!(o.unreachable, vec![Point::new(2, 0)]);
    }

    #[test]
    fn matching_exact_beats_greedy_case() {
        // Points on a line at 0, 1, 2, 3: the optimal pairing costs 2.
        let xs = [0i64, 1, 2, 3];
        let dist: Vec<Vec<u64>> = xs
            .iter()
            .map(|a| xs.iter().map(|b| a.abs_diff(*b)).collect())
            .collect();
        let m = exact_matching(&dist, &[0, 1, 2, 3]);
        let cost: u64 = m.iter().map(|&(a, b)| dist[a][b]).sum();
        assert_eq!(cost, 2);
    }
}
