//! Immutable simple-graph representation and the elementary quantities the
//! rest of the crate consumes: degrees into sets, pair densities, components
//! of vertex-deleted subgraphs, and chromatic upper bounds.
//!
//! Vertex ids are dense integers `0..n-1`. Graphs never change after
//! construction; derived graphs are new values, so everything here is safe
//! to share across threads.

use crate::bitset::Bitset;
use crate::error::{Error, Result};

/// An undirected simple graph on vertices `0..n-1` with bitset adjacency.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Graph {
    n: usize,
    m: usize,
    adj: Vec<Bitset>,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops, duplicate
    /// edges and out-of-range endpoints.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Graph> {
        let mut adj = vec![Bitset::new(n); n];
        let mut m = 0;
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u},{v}) out of range for n={n}"
                )));
            }
            if u == v {
                return Err(Error::InvalidArgument(format!("self-loop at vertex {u}")));
            }
            if adj[u].contains(v) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({u},{v})")));
            }
            adj[u].insert(v);
            adj[v].insert(u);
            m += 1;
        }
        Ok(Graph { n, m, adj })
    }

    pub fn empty(n: usize) -> Graph {
        Graph {
            n,
            m: 0,
            adj: vec![Bitset::new(n); n],
        }
    }

    pub fn complete(n: usize) -> Graph {
        let edges: Vec<_> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .collect();
        Graph::from_edges(n, &edges).expect("complete graph edges are valid")
    }

    pub fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        Graph::from_edges(n, &edges).expect("path edges are valid")
    }

    pub fn cycle(n: usize) -> Graph {
        assert!(n >= 3, "cycle needs at least 3 vertices");
        let mut edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        edges.push((0, n - 1));
        Graph::from_edges(n, &edges).expect("cycle edges are valid")
    }

    /// Star with center 0 and `n-1` leaves.
    pub fn star(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|v| (0, v)).collect();
        Graph::from_edges(n, &edges).expect("star edges are valid")
    }

    pub fn complete_bipartite(a: usize, b: usize) -> Graph {
        let edges: Vec<_> = (0..a)
            .flat_map(|u| (a..a + b).map(move |v| (u, v)))
            .collect();
        Graph::from_edges(a + b, &edges).expect("complete bipartite edges are valid")
    }

    /// Complete multipartite graph; `parts` gives the class sizes,
    /// classes occupy consecutive id ranges.
    pub fn complete_multipartite(parts: &[usize]) -> Graph {
        let n: usize = parts.iter().sum();
        let mut class = vec![0usize; n];
        let mut idx = 0;
        for (c, &sz) in parts.iter().enumerate() {
            for _ in 0..sz {
                class[idx] = c;
                idx += 1;
            }
        }
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if class[u] != class[v] {
                    edges.push((u, v));
                }
            }
        }
        Graph::from_edges(n, &edges).expect("multipartite edges are valid")
    }

    /// `rows x cols` grid, row-major vertex ids.
    pub fn grid(rows: usize, cols: usize) -> Graph {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Graph::from_edges(rows * cols, &edges).expect("grid edges are valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adj[u].contains(v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].count()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[v].iter()
    }

    pub fn neighbor_row(&self, v: usize) -> &Bitset {
        &self.adj[v]
    }

    /// Iterate all edges `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| self.adj[u].iter().filter(move |&v| u < v).map(move |v| (u, v)))
    }

    /// Number of neighbors of `v` inside `set`.
    pub fn degree_into(&self, v: usize, set: &VertexSet) -> Result<usize> {
        if v >= self.n {
            return Err(Error::InvalidArgument(format!(
                "vertex {v} out of range for n={}",
                self.n
            )));
        }
        set.check_universe(self.n)?;
        Ok(self.adj[v].intersection_count(set.bits()))
    }

    /// Number of edges with one endpoint in `x` and the other in `y`;
    /// the sets must be disjoint.
    pub fn edges_between(&self, x: &VertexSet, y: &VertexSet) -> Result<usize> {
        x.check_universe(self.n)?;
        y.check_universe(self.n)?;
        if !x.bits().is_disjoint(y.bits()) {
            return Err(Error::InvalidArgument(
                "edges_between requires disjoint sets".into(),
            ));
        }
        Ok(x.iter()
            .map(|v| self.adj[v].intersection_count(y.bits()))
            .sum())
    }

    /// Pair density `e(X,Y) / (|X||Y|)` for disjoint nonempty sets.
    pub fn density(&self, x: &VertexSet, y: &VertexSet) -> Result<f64> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::InvalidArgument(
                "density requires nonempty sets".into(),
            ));
        }
        let e = self.edges_between(x, y)?;
        Ok(e as f64 / (x.len() as f64 * y.len() as f64))
    }

    pub fn min_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).min().unwrap_or(0)
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Connected components of the graph with `removed` deleted.
    /// The union of the results is exactly `V - removed`.
    pub fn components(&self, removed: &VertexSet) -> Result<Vec<VertexSet>> {
        removed.check_universe(self.n)?;
        let mut seen = removed.bits().clone();
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.n {
            if seen.contains(start) {
                continue;
            }
            let mut comp = Bitset::new(self.n);
            stack.push(start);
            seen.insert(start);
            comp.insert(start);
            while let Some(v) = stack.pop() {
                for w in self.adj[v].iter() {
                    if !seen.contains(w) {
                        seen.insert(w);
                        comp.insert(w);
                        stack.push(w);
                    }
                }
            }
            out.push(VertexSet::from_bits(comp));
        }
        Ok(out)
    }

    /// New graph keeping only edges accepted by `keep`.
    pub fn filter_edges<F: FnMut(usize, usize) -> bool>(&self, mut keep: F) -> Graph {
        let edges: Vec<_> = self.edges().filter(|&(u, v)| keep(u, v)).collect();
        Graph::from_edges(self.n, &edges).expect("filtered edges remain valid")
    }

    /// Parses the edge-list text format: first line `n m`, then `m` lines
    /// `u v` with `0 <= u < v < n`. Duplicates and self-loops are rejected
    /// with the offending line number.
    pub fn parse_edge_list(text: &str) -> Result<Graph> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: "empty input".into(),
            })?;
        let mut it = header.split_whitespace();
        let parse_usize = |tok: Option<&str>, line: usize, what: &str| -> Result<usize> {
            tok.ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing {what}"),
            })?
            .parse::<usize>()
            .map_err(|e| Error::Parse {
                line,
                msg: format!("bad {what}: {e}"),
            })
        };
        let n = parse_usize(it.next(), 1, "vertex count")?;
        let m = parse_usize(it.next(), 1, "edge count")?;
        if it.next().is_some() {
            return Err(Error::Parse {
                line: 1,
                msg: "trailing tokens after `n m`".into(),
            });
        }
        let mut adj = vec![Bitset::new(n); n];
        let mut count = 0;
        for (idx, raw) in lines {
            let line_no = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let mut it = raw.split_whitespace();
            let u = parse_usize(it.next(), line_no, "endpoint")?;
            let v = parse_usize(it.next(), line_no, "endpoint")?;
            if it.next().is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "trailing tokens after edge".into(),
                });
            }
            if u == v {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("self-loop at vertex {u}"),
                });
            }
            if u > v {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("edge ({u},{v}) must be written with u < v"),
                });
            }
            if v >= n {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("endpoint {v} out of range for n={n}"),
                });
            }
            if adj[u].contains(v) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate edge ({u},{v})"),
                });
            }
            adj[u].insert(v);
            adj[v].insert(u);
            count += 1;
        }
        if count != m {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header declares {m} edges, found {count}"),
            });
        }
        Ok(Graph { n, m, adj })
    }

    /// Serializes to the edge-list text format with edges sorted `u < v`.
    pub fn to_edge_list_string(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.m);
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}

/// A subset of the vertices of a graph on a fixed universe `0..n-1`,
/// with cached cardinality.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct VertexSet {
    bits: Bitset,
    count: usize,
}

impl VertexSet {
    pub fn empty(n: usize) -> VertexSet {
        VertexSet {
            bits: Bitset::new(n),
            count: 0,
        }
    }

    pub fn full(n: usize) -> VertexSet {
        let mut bits = Bitset::new(n);
        for i in 0..n {
            bits.insert(i);
        }
        VertexSet { bits, count: n }
    }

    pub fn from_bits(bits: Bitset) -> VertexSet {
        let count = bits.count();
        VertexSet { bits, count }
    }

    /// Builds a set from ids, validating the universe bound.
    pub fn from_iter<I: IntoIterator<Item = usize>>(n: usize, ids: I) -> Result<VertexSet> {
        let mut bits = Bitset::new(n);
        for v in ids {
            if v >= n {
                return Err(Error::InvalidArgument(format!(
                    "vertex {v} out of range for universe {n}"
                )));
            }
            bits.insert(v);
        }
        Ok(VertexSet::from_bits(bits))
    }

    pub fn universe(&self) -> usize {
        self.bits.capacity()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, v: usize) -> bool {
        self.bits.contains(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn bits(&self) -> &Bitset {
        &self.bits
    }

    pub fn insert(&mut self, v: usize) {
        if !self.bits.contains(v) {
            self.bits.insert(v);
            self.count += 1;
        }
    }

    pub fn remove(&mut self, v: usize) {
        if self.bits.contains(v) {
            self.bits.remove(v);
            self.count -= 1;
        }
    }

    pub fn union(&self, other: &VertexSet) -> VertexSet {
        let mut bits = self.bits.clone();
        bits.union_with(other.bits());
        VertexSet::from_bits(bits)
    }

    pub fn intersect(&self, other: &VertexSet) -> VertexSet {
        VertexSet::from_bits(self.bits.intersect(other.bits()))
    }

    pub fn difference(&self, other: &VertexSet) -> VertexSet {
        let mut bits = self.bits.clone();
        bits.subtract_with(other.bits());
        VertexSet::from_bits(bits)
    }

    pub fn complement(&self) -> VertexSet {
        let n = self.universe();
        let mut bits = Bitset::new(n);
        for i in 0..n {
            if !self.bits.contains(i) {
                bits.insert(i);
            }
        }
        VertexSet::from_bits(bits)
    }

    pub fn is_disjoint(&self, other: &VertexSet) -> bool {
        self.bits.is_disjoint(other.bits())
    }

    fn check_universe(&self, n: usize) -> Result<()> {
        if self.universe() != n {
            return Err(Error::InvalidArgument(format!(
                "vertex set over universe {} used with graph on {} vertices",
                self.universe(),
                n
            )));
        }
        Ok(())
    }
}

/// A proper coloring: `colors[v]` in `0..num_classes`.
#[derive(Clone, Debug)]
pub struct Coloring {
    pub colors: Vec<usize>,
    pub num_classes: usize,
}

impl Coloring {
    pub fn is_proper(&self, g: &Graph) -> bool {
        g.edges().all(|(u, v)| self.colors[u] != self.colors[v])
    }

    /// Vertices of a given color restricted to `area`.
    pub fn class_within(&self, area: &VertexSet, color: usize) -> VertexSet {
        VertexSet::from_iter(area.universe(), area.iter().filter(|&v| self.colors[v] == color))
            .expect("class members are within the universe")
    }
}

/// DSATUR greedy coloring.
fn dsatur(g: &Graph) -> Coloring {
    let n = g.n();
    let mut colors = vec![usize::MAX; n];
    let mut sat: Vec<Bitset> = vec![Bitset::new(n.max(1)); n];
    let mut num_classes = 0;
    for _ in 0..n {
        // Highest saturation first, ties by degree, then id.
        let v = (0..n)
            .filter(|&v| colors[v] == usize::MAX)
            .max_by_key(|&v| (sat[v].count(), g.degree(v), std::cmp::Reverse(v)))
            .expect("an uncolored vertex exists");
        let mut c = 0;
        while sat[v].contains(c) {
            c += 1;
        }
        colors[v] = c;
        num_classes = num_classes.max(c + 1);
        for w in g.neighbors(v) {
            if colors[w] == usize::MAX {
                sat[w].insert(c);
            }
        }
    }
    Coloring { colors, num_classes }
}

/// Largest clique found greedily from each start vertex; a cheap lower
/// bound for the exact search.
fn greedy_clique_lower_bound(g: &Graph) -> usize {
    let n = g.n();
    let mut best = if n == 0 { 0 } else { 1 };
    for start in 0..n {
        let mut members = vec![start];
        let mut cand = g.neighbor_row(start).clone();
        loop {
            let Some(next) = cand.iter().max_by_key(|&v| g.neighbor_row(v).intersection_count(&cand)) else {
                break;
            };
            members.push(next);
            cand.intersect_with(g.neighbor_row(next));
        }
        best = best.max(members.len());
    }
    best
}

fn k_colorable(g: &Graph, k: usize, order: &[usize], colors: &mut [usize], idx: usize) -> bool {
    if idx == order.len() {
        return true;
    }
    let v = order[idx];
    // Bound the palette by one more than colors already in use.
    let used = colors
        .iter()
        .filter(|&&c| c != usize::MAX)
        .max()
        .map_or(0, |&c| c + 1);
    let limit = k.min(used + 1);
    for c in 0..limit {
        if g.neighbors(v).all(|w| colors[w] != c) {
            colors[v] = c;
            if k_colorable(g, k, order, colors, idx + 1) {
                return true;
            }
            colors[v] = usize::MAX;
        }
    }
    false
}

/// Chromatic upper bound: DSATUR, refined to the exact chromatic number by
/// branch-and-bound when `n <= 20`.
pub fn chromatic_upper(g: &Graph) -> Coloring {
    let n = g.n();
    if n == 0 {
        return Coloring {
            colors: vec![],
            num_classes: 0,
        };
    }
    let greedy = dsatur(g);
    if n > 20 {
        return greedy;
    }
    let lb = greedy_clique_lower_bound(g);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(g.degree(v)));
    let mut best = greedy;
    for k in lb..best.num_classes {
        let mut colors = vec![usize::MAX; n];
        if k_colorable(g, k, &order, &mut colors, 0) {
            best = Coloring {
                colors,
                num_classes: k,
            };
            break;
        }
    }
    best
}
