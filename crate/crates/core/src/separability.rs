//! Separator certification and discovery for the subgraph `H`.
//!
//! A separation is a set `S` together with the components of `H - S`; it is
//! alpha-separable when `|S| <= alpha*n` and every component has size at most
//! `alpha*n`. Low-bandwidth orderings convert into separations by cutting the
//! order into intervals and keeping every sqrt-th interval as separator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexSet};

/// Separator set plus the components of `H - S`.
#[derive(Clone, Debug)]
pub struct Separation {
    pub separator: VertexSet,
    pub components: Vec<VertexSet>,
}

/// JSON shape: `{"S":[...],"components":[[...],...]}`.
#[derive(Serialize, Deserialize)]
pub struct SeparationData {
    #[serde(rename = "S")]
    pub s: Vec<usize>,
    pub components: Vec<Vec<usize>>,
}

impl Separation {
    pub fn new(separator: VertexSet, components: Vec<VertexSet>) -> Separation {
        Separation {
            separator,
            components,
        }
    }

    /// `max(|S|, max component size) / n`, the quantity certified by
    /// `verify_separation`.
    pub fn certificate_ratio(&self, n: usize) -> f64 {
        let worst = self
            .components
            .iter()
            .map(|c| c.len())
            .max()
            .unwrap_or(0)
            .max(self.separator.len());
        worst as f64 / n as f64
    }

    /// Structural validity: the separator and components partition `V(H)`
    /// and no edge of `h` joins two distinct components.
    pub fn validate_structure(&self, h: &Graph) -> Result<()> {
        let n = h.n();
        if self.separator.universe() != n
            || self.components.iter().any(|c| c.universe() != n)
        {
            return Err(Error::Structural(
                "separation universe does not match graph".into(),
            ));
        }
        let mut seen = self.separator.clone();
        let mut total = self.separator.len();
        for comp in &self.components {
            if comp.is_empty() {
                return Err(Error::Structural("empty component listed".into()));
            }
            if !seen.is_disjoint(comp) {
                return Err(Error::Structural(
                    "separator/components overlap".into(),
                ));
            }
            seen = seen.union(comp);
            total += comp.len();
        }
        if total != n {
            return Err(Error::Structural(format!(
                "separation covers {total} of {n} vertices"
            )));
        }
        // Components must be unions of connected pieces with no cross edges.
        for (i, a) in self.components.iter().enumerate() {
            for b in self.components.iter().skip(i + 1) {
                if h.edges_between(a, b)? > 0 {
                    return Err(Error::Structural(format!(
                        "edge joins two listed components ({i} and a later one)"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_data(&self) -> SeparationData {
        SeparationData {
            s: self.separator.to_vec(),
            components: self.components.iter().map(|c| c.to_vec()).collect(),
        }
    }

    pub fn from_data(n: usize, data: &SeparationData) -> Result<Separation> {
        let separator = VertexSet::from_iter(n, data.s.iter().copied())?;
        let components = data
            .components
            .iter()
            .map(|c| VertexSet::from_iter(n, c.iter().copied()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Separation {
            separator,
            components,
        })
    }
}

/// Why a structurally valid separation fails the alpha test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SeparationViolation {
    SeparatorTooLarge { size: usize, bound: f64 },
    ComponentTooLarge { index: usize, size: usize, bound: f64 },
    CrossComponentEdge { u: usize, v: usize },
}

/// Outcome of `verify_separation`.
#[derive(Clone, Debug)]
pub enum SeparationVerdict {
    Separable { ratio: f64 },
    Violated(SeparationViolation),
}

impl SeparationVerdict {
    pub fn is_separable(&self) -> bool {
        matches!(self, SeparationVerdict::Separable { .. })
    }
}

/// Checks `|S| <= alpha*n`, every component at most `alpha*n`, and the
/// absence of cross-component edges. Malformed separations (overlap,
/// coverage gap) are a structural error, distinct from a clean "no".
pub fn verify_separation(
    h: &Graph,
    sep: &Separation,
    alpha: f64,
) -> Result<SeparationVerdict> {
    let n = h.n();
    // Structural checks except cross-edges, which count as a violation.
    let mut seen = sep.separator.clone();
    let mut total = sep.separator.len();
    for comp in &sep.components {
        if comp.is_empty() {
            return Err(Error::Structural("empty component listed".into()));
        }
        if !seen.is_disjoint(comp) {
            return Err(Error::Structural("separator/components overlap".into()));
        }
        seen = seen.union(comp);
        total += comp.len();
    }
    if total != n {
        return Err(Error::Structural(format!(
            "separation covers {total} of {n} vertices"
        )));
    }
    let bound = alpha * n as f64;
    if sep.separator.len() as f64 > bound {
        return Ok(SeparationVerdict::Violated(
            SeparationViolation::SeparatorTooLarge {
                size: sep.separator.len(),
                bound,
            },
        ));
    }
    for (i, comp) in sep.components.iter().enumerate() {
        if comp.len() as f64 > bound {
            return Ok(SeparationVerdict::Violated(
                SeparationViolation::ComponentTooLarge {
                    index: i,
                    size: comp.len(),
                    bound,
                },
            ));
        }
    }
    // Cross-component edge scan.
    let mut comp_of = vec![usize::MAX; n];
    for (i, comp) in sep.components.iter().enumerate() {
        for v in comp.iter() {
            comp_of[v] = i;
        }
    }
    for (u, v) in h.edges() {
        if comp_of[u] != usize::MAX && comp_of[v] != usize::MAX && comp_of[u] != comp_of[v] {
            return Ok(SeparationVerdict::Violated(
                SeparationViolation::CrossComponentEdge { u, v },
            ));
        }
    }
    Ok(SeparationVerdict::Separable {
        ratio: sep.certificate_ratio(n),
    })
}

/// A vertex ordering together with its width (maximum edge stretch).
#[derive(Clone, Debug)]
pub struct BandwidthOrdering {
    order: Vec<usize>,
    width: usize,
}

impl BandwidthOrdering {
    /// Validates the permutation and computes the width against `h`.
    pub fn new(h: &Graph, order: Vec<usize>) -> Result<BandwidthOrdering> {
        let n = h.n();
        if order.len() != n {
            return Err(Error::InvalidArgument(format!(
                "ordering has {} entries for {} vertices",
                order.len(),
                n
            )));
        }
        let mut pos = vec![usize::MAX; n];
        for (p, &v) in order.iter().enumerate() {
            if v >= n || pos[v] != usize::MAX {
                return Err(Error::InvalidArgument(
                    "ordering is not a permutation of the vertices".into(),
                ));
            }
            pos[v] = p;
        }
        let width = h
            .edges()
            .map(|(u, v)| pos[u].abs_diff(pos[v]))
            .max()
            .unwrap_or(0);
        Ok(BandwidthOrdering { order, width })
    }

    pub fn identity(h: &Graph) -> BandwidthOrdering {
        BandwidthOrdering::new(h, (0..h.n()).collect()).expect("identity is a permutation")
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Position of each vertex in the order.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (p, &v) in self.order.iter().enumerate() {
            pos[v] = p;
        }
        pos
    }
}

/// Cuts a width-`beta*n` ordering into `m = floor(1/beta)` intervals of
/// length `ceil(n/m)` and keeps every `s = floor(sqrt(m))`-th interval as
/// the separator; the runs of intervals in between become the components.
///
/// The idealized construction yields a `sqrt(beta)`-separation; with the
/// rounding rule here the certified ratio is computed exactly and may carry
/// a small slack, which callers check via `certificate_ratio`.
pub fn bandwidth_separator(
    h: &Graph,
    ordering: &BandwidthOrdering,
    beta: f64,
) -> Result<Separation> {
    let n = h.n();
    if !(0.0 < beta && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta={beta} out of (0,1]")));
    }
    let allowed = beta * n as f64;
    if ordering.width() as f64 > allowed {
        // Name a violating edge for the error message.
        let pos = ordering.positions();
        let (u, v) = h
            .edges()
            .find(|&(u, v)| pos[u].abs_diff(pos[v]) as f64 > allowed)
            .expect("width exceeds bound, so a long edge exists");
        return Err(Error::InvalidArgument(format!(
            "ordering width {} exceeds beta*n = {allowed}: edge ({u},{v})",
            ordering.width()
        )));
    }
    let m = (1.0 / beta).floor() as usize;
    let s = (m as f64).sqrt().floor() as usize;
    let interval_len = n.div_ceil(m.max(1)).max(1);
    let num_intervals = if n == 0 { 0 } else { n.div_ceil(interval_len) };

    // Interval i (1-based) covers order positions (i-1)*L .. min(i*L, n).
    let interval_vertices = |i: usize| -> Vec<usize> {
        let lo = (i - 1) * interval_len;
        let hi = (i * interval_len).min(n);
        ordering.order()[lo..hi].to_vec()
    };

    let mut separator = VertexSet::empty(n);
    let mut components: Vec<VertexSet> = Vec::new();
    let mut current = VertexSet::empty(n);
    for i in 1..=num_intervals {
        if s >= 1 && i % s == 0 {
            for v in interval_vertices(i) {
                separator.insert(v);
            }
            if !current.is_empty() {
                components.push(std::mem::replace(&mut current, VertexSet::empty(n)));
            }
        } else {
            for v in interval_vertices(i) {
                current.insert(v);
            }
        }
    }
    if !current.is_empty() {
        components.push(current);
    }

    // The blocks between separator intervals may split further inside h;
    // list actual connected components so the structure is exact.
    let mut exact_components = Vec::new();
    for block in components {
        let outside = block.complement();
        for comp in h.components(&outside)? {
            exact_components.push(comp);
        }
    }
    Ok(Separation::new(separator, exact_components))
}

/// Result of separator search: a found separation, or nothing — which is a
/// proof of non-separability only when `exhaustive` is set.
#[derive(Clone, Debug)]
pub enum SeparatorSearch {
    Found(Separation),
    NotFound { exhaustive: bool },
}

impl SeparatorSearch {
    pub fn found(&self) -> Option<&Separation> {
        match self {
            SeparatorSearch::Found(s) => Some(s),
            SeparatorSearch::NotFound { .. } => None,
        }
    }
}

const EXACT_SEPARATOR_CAP: usize = 18;

/// Finds an alpha-separation if it can: exact enumeration for
/// `n <= 18`, otherwise BFS-layer sweeps and recursive bisection.
pub fn find_separator(h: &Graph, alpha: f64) -> SeparatorSearch {
    let n = h.n();
    if n == 0 {
        return SeparatorSearch::Found(Separation::new(VertexSet::empty(0), vec![]));
    }
    let bound = (alpha * n as f64).floor() as usize;

    // Already scattered enough with an empty separator?
    if let Some(sep) = separation_from_separator(h, &VertexSet::empty(n)) {
        if verify_ok(h, &sep, alpha) {
            return SeparatorSearch::Found(sep);
        }
    }

    if n <= EXACT_SEPARATOR_CAP {
        return exact_separator_search(h, alpha, bound);
    }

    let mut best: Option<Separation> = None;
    // BFS-layer sweep from a spread of roots.
    let roots: Vec<usize> = if n <= 64 {
        (0..n).collect()
    } else {
        (0..n).step_by(n / 32).collect()
    };
    for root in roots {
        if let Some(sep) = bfs_layer_sweep(h, root, bound) {
            if verify_ok(h, &sep, alpha) {
                return SeparatorSearch::Found(sep);
            }
            best = pick_better(best, sep, n);
        }
    }
    // Recursive bisection: repeatedly split the largest component.
    if let Some(sep) = recursive_bisection(h, alpha) {
        if verify_ok(h, &sep, alpha) {
            return SeparatorSearch::Found(sep);
        }
        best = pick_better(best, sep, n);
    }
    match best {
        Some(sep) if verify_ok(h, &sep, alpha) => SeparatorSearch::Found(sep),
        _ => SeparatorSearch::NotFound { exhaustive: false },
    }
}

fn verify_ok(h: &Graph, sep: &Separation, alpha: f64) -> bool {
    matches!(
        verify_separation(h, sep, alpha),
        Ok(SeparationVerdict::Separable { .. })
    )
}

fn pick_better(best: Option<Separation>, cand: Separation, n: usize) -> Option<Separation> {
    match best {
        None => Some(cand),
        Some(b) => {
            if cand.certificate_ratio(n) < b.certificate_ratio(n) {
                Some(cand)
            } else {
                Some(b)
            }
        }
    }
}

/// Components of `h - separator`, or None if the separator covers everything.
fn separation_from_separator(h: &Graph, separator: &VertexSet) -> Option<Separation> {
    let comps = h.components(separator).ok()?;
    Some(Separation::new(separator.clone(), comps))
}

/// Enumerates separator candidates in increasing size with component-size
/// checking; complete for `n <= 18`.
fn exact_separator_search(h: &Graph, alpha: f64, bound: usize) -> SeparatorSearch {
    let n = h.n();
    let mut chosen: Vec<usize> = Vec::new();
    for size in 0..=bound.min(n) {
        if let Some(sep) = enumerate_subsets(h, alpha, size, 0, &mut chosen) {
            return SeparatorSearch::Found(sep);
        }
    }
    SeparatorSearch::NotFound { exhaustive: true }
}

fn enumerate_subsets(
    h: &Graph,
    alpha: f64,
    size: usize,
    from: usize,
    chosen: &mut Vec<usize>,
) -> Option<Separation> {
    if chosen.len() == size {
        let separator = VertexSet::from_iter(h.n(), chosen.iter().copied()).ok()?;
        let sep = separation_from_separator(h, &separator)?;
        if verify_ok(h, &sep, alpha) {
            return Some(sep);
        }
        return None;
    }
    let remaining = size - chosen.len();
    for v in from..=(h.n() - remaining) {
        chosen.push(v);
        if let Some(found) = enumerate_subsets(h, alpha, size, v + 1, chosen) {
            chosen.pop();
            return Some(found);
        }
        chosen.pop();
    }
    None
}

/// Greedy sweep over BFS layers: accumulate layers until the running chunk
/// would exceed the size bound, then spend the next layer as separator.
fn bfs_layer_sweep(h: &Graph, root: usize, bound: usize) -> Option<Separation> {
    let n = h.n();
    let layers = bfs_layers(h, root);
    let mut separator = VertexSet::empty(n);
    let mut chunk = 0usize;
    for layer in &layers {
        if chunk + layer.len() > bound && chunk > 0 {
            for &v in layer {
                separator.insert(v);
            }
            chunk = 0;
        } else {
            chunk += layer.len();
        }
    }
    if separator.len() > bound {
        return None;
    }
    separation_from_separator(h, &separator)
}

/// BFS layers over all components (each new root starts at layer 0 of its
/// own run, appended in sequence).
fn bfs_layers(h: &Graph, root: usize) -> Vec<Vec<usize>> {
    let n = h.n();
    let mut seen = vec![false; n];
    let mut layers: Vec<Vec<usize>> = Vec::new();
    let mut queue: Vec<usize> = Vec::new();
    let starts: Vec<usize> = std::iter::once(root).chain(0..n).collect();
    for start in starts {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push(start);
        while !queue.is_empty() {
            layers.push(queue.clone());
            let mut next = Vec::new();
            for &v in &queue {
                for w in h.neighbors(v) {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                    }
                }
            }
            queue = next;
        }
    }
    layers
}

/// Splits oversized components with their own BFS sweeps until everything
/// fits or the separator budget is exhausted.
fn recursive_bisection(h: &Graph, alpha: f64) -> Option<Separation> {
    let n = h.n();
    let bound = (alpha * n as f64).floor() as usize;
    let mut separator = VertexSet::empty(n);
    for _ in 0..n {
        let sep = separation_from_separator(h, &separator)?;
        let Some(big) = sep.components.iter().max_by_key(|c| c.len()) else {
            return Some(sep);
        };
        if big.len() <= bound || separator.len() >= bound {
            return Some(sep);
        }
        // Sweep inside the oversized component from an eccentric root.
        let inside = big.clone();
        let root = inside.iter().next()?;
        let far = furthest_from(h, root, &inside);
        let layers = bfs_layers_within(h, far, &inside);
        // Cut at the layer closest to the middle of the component.
        let mut cum = 0usize;
        let half = inside.len() / 2;
        let mut cut_layer: Option<&Vec<usize>> = None;
        for layer in &layers {
            cum += layer.len();
            if cum >= half {
                cut_layer = Some(layer);
                break;
            }
        }
        for &v in cut_layer? {
            separator.insert(v);
        }
    }
    separation_from_separator(h, &separator)
}

fn furthest_from(h: &Graph, root: usize, within: &VertexSet) -> usize {
    let layers = bfs_layers_within(h, root, within);
    layers
        .last()
        .and_then(|l| l.first().copied())
        .unwrap_or(root)
}

fn bfs_layers_within(h: &Graph, root: usize, within: &VertexSet) -> Vec<Vec<usize>> {
    let n = h.n();
    let mut seen = vec![false; n];
    let mut layers = Vec::new();
    let mut queue = vec![root];
    seen[root] = true;
    while !queue.is_empty() {
        layers.push(queue.clone());
        let mut next = Vec::new();
        for &v in &queue {
            for w in h.neighbors(v) {
                if !seen[w] && within.contains(w) {
                    seen[w] = true;
                    next.push(w);
                }
            }
        }
        queue = next;
    }
    layers
}
