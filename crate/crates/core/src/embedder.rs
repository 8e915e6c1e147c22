//! Finishing the embedding inside the clique structure.
//!
//! Within each clique, vertices assigned to its clusters are embedded by
//! randomized greedy in most-constrained-first order; a reserved fraction
//! of each cluster is completed by a perfect matching between the
//! remaining vertices and remaining slots. Cross-clique edges are honored
//! through restriction sets (vertices with guaranteed degree into every
//! cluster hosting one of their cross-neighbors) and by embedding cliques
//! sequentially. The result is always re-checked by an independent
//! verifier that trusts nothing from the embedder.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bitset::Bitset;
use crate::error::{Error, Result};
use crate::factor::CliqueFactor;
use crate::graph::{Graph, VertexSet};
use crate::regularity::RegularPartition;

/// The subset of its cluster a restricted vertex may land on.
#[derive(Clone, Debug)]
pub struct RestrictionSet {
    pub vertex: usize,
    pub allowed: VertexSet,
}

/// Restriction sets for every endpoint of a cross-clique edge, plus the
/// bookkeeping the acceptance checks read.
#[derive(Clone, Debug)]
pub struct RestrictionReport {
    pub restrictions: Vec<RestrictionSet>,
    pub cross_edges: Vec<(usize, usize)>,
    /// Restricted-vertex count per cluster.
    pub per_cluster_counts: Vec<usize>,
    /// Smallest |T_x| / |cluster| seen, 1.0 when nothing is restricted.
    pub min_ratio: f64,
    /// Largest number of degree filters applied to one vertex.
    pub max_filters: usize,
}

/// Builds `T_x` for every endpoint of a cross-clique edge by iterated
/// degree filtering: survivors have more than `(density - eps) |V_u|`
/// pruned neighbors in every cluster hosting one of their cross-neighbors.
///
/// `baseline` is the partition before load balancing: the per-filter
/// casualty bound from the low-degree fact applies to the certified
/// cluster content, so the size check runs against the stayers (vertices
/// present both before and after balancing).
pub fn build_restrictions(
    h: &Graph,
    kappa: &[usize],
    part: &RegularPartition,
    baseline: &RegularPartition,
    factor: &CliqueFactor,
) -> Result<RestrictionReport> {
    let l = part.num_clusters();
    let mut cross_edges = Vec::new();
    for (x, y) in h.edges() {
        let (cx, cy) = (kappa[x], kappa[y]);
        if factor.clique_of(cx) != factor.clique_of(cy) {
            cross_edges.push((x, y));
        }
    }
    let mut endpoints: Vec<usize> = cross_edges
        .iter()
        .flat_map(|&(x, y)| [x, y])
        .collect();
    endpoints.sort_unstable();
    endpoints.dedup();

    let eps = part.eps_effective();
    let mut restrictions = Vec::new();
    let mut per_cluster_counts = vec![0usize; l];
    let mut min_ratio = 1.0f64;
    let mut max_filters = 0usize;
    for &x in &endpoints {
        let own = kappa[x];
        let mut targets: Vec<usize> = h
            .neighbors(x)
            .filter(|&y| factor.clique_of(kappa[y]) != factor.clique_of(own))
            .map(|y| kappa[y])
            .collect();
        targets.sort_unstable();
        targets.dedup();
        max_filters = max_filters.max(targets.len());
        let cluster = &part.clusters()[own];
        let mut allowed = cluster.clone();
        for &u in &targets {
            // The filter scale is the pair's own measured density minus
            // eps, the quantity the low-degree bound actually speaks
            // about; rebalancing can leave individual transplants far
            // below it, and exactly those must drop out of T_x.
            let pair_density = part.pruned().density(cluster, &part.clusters()[u])?;
            let floor = (pair_density - eps) * part.clusters()[u].len() as f64;
            let keep: Vec<usize> = allowed
                .iter()
                .filter(|&v| {
                    part.pruned()
                        .degree_into(v, &part.clusters()[u])
                        .map(|deg| deg as f64 > floor)
                        .unwrap_or(false)
                })
                .collect();
            allowed = VertexSet::from_iter(part.host().n(), keep)?;
        }
        let stayers = cluster.intersect(&baseline.clusters()[own]);
        let kept_stayers = allowed.intersect(&stayers).len() as f64;
        let ratio = allowed.len() as f64 / cluster.len() as f64;
        let bound = (1.0 - targets.len() as f64 * eps) * stayers.len() as f64;
        if kept_stayers < bound {
            return Err(Error::Inconsistency(format!(
                "restriction set of vertex {x} keeps only {kept_stayers} of {} certified \
                 cluster members, below (1 - {}*eps) = {bound:.1} — some pair was not \
                 really regular",
                stayers.len(),
                targets.len()
            )));
        }
        min_ratio = min_ratio.min(ratio);
        per_cluster_counts[own] += 1;
        restrictions.push(RestrictionSet { vertex: x, allowed });
    }
    Ok(RestrictionReport {
        restrictions,
        cross_edges,
        per_cluster_counts,
        min_ratio,
        max_filters,
    })
}

/// An injective vertex map from H into G.
#[derive(Clone, Debug, Serialize)]
pub struct Embedding {
    pub phi: Vec<usize>,
}

/// Tuning knobs for the finisher.
#[derive(Clone, Copy, Debug)]
pub struct EmbedConfig {
    /// Fraction of each cluster completed by the matching phase.
    pub rho: f64,
    /// Reshuffles allowed per clique before giving up.
    pub retries: usize,
    /// Full restarts of the clique sequence: failures caused by an earlier
    /// clique's placements (sealed cross-constraints) only clear when that
    /// clique re-embeds.
    pub restarts: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            rho: 0.3,
            retries: 5,
            restarts: 10,
        }
    }
}

/// Embeds H clique by clique. Requires `|V_i| = L_i` for every cluster.
pub fn embed_cliquewise(
    h: &Graph,
    kappa: &[usize],
    part: &RegularPartition,
    factor: &CliqueFactor,
    restrictions: &[RestrictionSet],
    cfg: &EmbedConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Embedding> {
    let n = h.n();
    if kappa.len() != n || part.host().n() != n {
        return Err(Error::InvalidArgument(
            "embedding requires |V(H)| = |V(G)| and a full assignment".into(),
        ));
    }
    let l = part.num_clusters();
    let mut load_sets: Vec<Vec<usize>> = vec![Vec::new(); l];
    for (x, &c) in kappa.iter().enumerate() {
        if c >= l {
            return Err(Error::InvalidArgument(format!(
                "vertex {x} assigned to cluster {c} out of range"
            )));
        }
        load_sets[c].push(x);
    }
    for (c, cluster) in part.clusters().iter().enumerate() {
        if load_sets[c].len() != cluster.len() {
            return Err(Error::Pipeline(format!(
                "cluster {c} holds {} slots but carries {} vertices — balance first",
                cluster.len(),
                load_sets[c].len()
            )));
        }
    }
    let mut restriction_of: Vec<Option<&VertexSet>> = vec![None; n];
    for r in restrictions {
        restriction_of[r.vertex] = Some(&r.allowed);
    }
    // A vertex with many cross-clique edges must embed before its
    // counterparts: once they freeze, its candidate set is an intersection
    // of that many fixed neighborhoods. Order cliques by their worst such
    // burden, then by total restricted vertices.
    let cross_degree = |x: usize| -> usize {
        let own = factor.clique_of(kappa[x]);
        h.neighbors(x)
            .filter(|&y| factor.clique_of(kappa[y]) != own)
            .count()
    };
    let mut order: Vec<usize> = (0..factor.cliques.len()).collect();
    let burden = |q: usize| -> (usize, usize) {
        let mut worst = 0;
        let mut restricted = 0;
        for &c in &factor.cliques[q] {
            for &x in &load_sets[c] {
                if restriction_of[x].is_some() {
                    restricted += 1;
                    worst = worst.max(cross_degree(x));
                }
            }
        }
        (worst, restricted)
    };
    order.sort_by_key(|&q| (std::cmp::Reverse(burden(q)), q));

    // Vertices whose neighbors live almost entirely in other cliques are
    // anchored up front, while every pool is still full: embedded last,
    // their candidate sets would be intersections of several already-fixed
    // neighborhoods, which at desk scale can vanish.
    let mut anchors: Vec<usize> = (0..n).filter(|&x| cross_degree(x) >= 3).collect();
    anchors.sort_by_key(|&x| (std::cmp::Reverse(cross_degree(x)), x));
    let mut anchored = vec![false; n];
    for &x in &anchors {
        anchored[x] = true;
    }

    let mut last_failure = None;
    for _restart in 0..=cfg.restarts {
        let mut phi: Vec<Option<usize>> = vec![None; n];
        let mut ok = true;
        let mut taken: Vec<bool> = vec![false; n];
        for &x in &anchors {
            let c = kappa[x];
            let mut cand = part.clusters()[c].bits().clone();
            if let Some(t) = restriction_of[x] {
                cand.intersect_with(t.bits());
            }
            for y in h.neighbors(x) {
                if let Some(v) = phi[y] {
                    cand.intersect_with(part.pruned().neighbor_row(v));
                }
            }
            let options: Vec<usize> = cand.iter().filter(|&v| !taken[v]).collect();
            let Some(&v) = options.first().map(|_| {
                &options[rng.gen_range(0..options.len())]
            }) else {
                let placed_nbrs = h.neighbors(x).filter(|&y| phi[y].is_some()).count();
                last_failure = Some(Error::EmbedFailed {
                    clique: factor.clique_of(c).unwrap_or(0),
                    msg: format!(
                        "anchor vertex {x} has no admissible slot (cluster {c} size {}, \
                         {} anchors total, {placed_nbrs} placed neighbors, T_x={})",
                        part.clusters()[c].len(),
                        anchors.len(),
                        restriction_of[x].map(|t| t.len()).unwrap_or(usize::MAX)
                    ),
                });
                ok = false;
                break;
            };
            phi[x] = Some(v);
            taken[v] = true;
        }
        if ok {
            for &q in &order {
                match embed_one_clique(
                    h,
                    part,
                    factor,
                    q,
                    &load_sets,
                    &restriction_of,
                    &anchored,
                    cfg,
                    &mut phi,
                    rng,
                ) {
                    Ok(()) => {}
                    Err(e @ Error::EmbedFailed { .. }) => {
                        last_failure = Some(e);
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if ok {
            let phi: Vec<usize> = phi
                .into_iter()
                .enumerate()
                .map(|(x, v)| {
                    v.ok_or_else(|| Error::Pipeline(format!("vertex {x} left unembedded")))
                })
                .collect::<Result<Vec<usize>>>()?;
            return Ok(Embedding { phi });
        }
    }
    Err(last_failure.unwrap_or_else(|| Error::Pipeline("no embedding attempt ran".into())))
}

#[allow(clippy::too_many_arguments)]
fn embed_one_clique(
    h: &Graph,
    part: &RegularPartition,
    factor: &CliqueFactor,
    q: usize,
    load_sets: &[Vec<usize>],
    restriction_of: &[Option<&VertexSet>],
    anchored: &[bool],
    cfg: &EmbedConfig,
    phi: &mut [Option<usize>],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let clusters = &factor.cliques[q];
    let n = h.n();
    let in_this_clique: Vec<bool> = {
        let mut flag = vec![false; n];
        for &c in clusters {
            for &x in &load_sets[c] {
                flag[x] = true;
            }
        }
        flag
    };

    // Reserved vertices for the matching phase: pairwise non-adjacent,
    // with every H-neighbor either already embedded or a non-reserved
    // member of this clique.
    let mut reserved = vec![false; n];
    for &c in clusters {
        let target = (cfg.rho * load_sets[c].len() as f64).ceil() as usize;
        let mut by_degree = load_sets[c].clone();
        by_degree.sort_by_key(|&x| (h.degree(x), x));
        let mut taken = 0;
        for &x in &by_degree {
            if taken >= target {
                break;
            }
            if anchored[x] {
                continue;
            }
            let ok = h.neighbors(x).all(|y| {
                !reserved[y] && (phi[y].is_some() || in_this_clique[y])
            });
            if ok {
                reserved[x] = true;
                taken += 1;
            }
        }
    }

    let mut failure = None;
    for _attempt in 0..=cfg.retries {
        match try_embed_clique(
            h,
            part,
            clusters,
            load_sets,
            restriction_of,
            &reserved,
            anchored,
            phi,
            rng,
        ) {
            Ok(()) => return Ok(()),
            Err(msg) => {
                // Roll back this clique's placements (anchors stay) and
                // reshuffle.
                for &c in clusters {
                    for &x in &load_sets[c] {
                        if !anchored[x] {
                            phi[x] = None;
                        }
                    }
                }
                failure = Some(msg);
            }
        }
    }
    Err(Error::EmbedFailed {
        clique: q,
        msg: failure.unwrap_or_else(|| "no attempt ran".into()),
    })
}

/// One randomized attempt at a clique; on failure returns a description
/// (stuck vertex or Hall violator) and the caller rolls back.
#[allow(clippy::too_many_arguments)]
fn try_embed_clique(
    h: &Graph,
    part: &RegularPartition,
    clusters: &[usize],
    load_sets: &[Vec<usize>],
    restriction_of: &[Option<&VertexSet>],
    reserved: &[bool],
    anchored: &[bool],
    phi: &mut [Option<usize>],
    rng: &mut ChaCha8Rng,
) -> std::result::Result<(), String> {
    let n = h.n();
    let pruned = part.pruned();
    // Free slots: cluster members minus anything already placed (anchors
    // and earlier cliques).
    let mut free: Vec<Bitset> = part
        .clusters()
        .iter()
        .map(|c| c.bits().clone())
        .collect();
    for v in phi.iter().flatten() {
        for f in free.iter_mut() {
            f.remove(*v);
        }
    }
    let cluster_of_x: Vec<usize> = {
        let mut map = vec![usize::MAX; n];
        for (c, set) in load_sets.iter().enumerate() {
            for &x in set {
                map[x] = c;
            }
        }
        map
    };
    let in_clique: Vec<bool> = {
        let mut flags = vec![false; load_sets.len()];
        for &c in clusters {
            flags[c] = true;
        }
        flags
    };

    // Who occupies each host slot (this clique's placements only).
    // Anchor slots are pinned: relocation chains and evictions skip them.
    let mut occupant: Vec<Option<usize>> = vec![None; n];
    let mut anchor_slots = Bitset::new(n);
    for &c in clusters {
        for &x in &load_sets[c] {
            if let Some(v) = phi[x] {
                occupant[v] = Some(x);
                if anchored[x] {
                    anchor_slots.insert(v);
                }
            }
        }
    }

    // Full compatibility set of x given current placements (free or not).
    let compat_except = |x: usize, phi: &[Option<usize>], skip: usize| -> Bitset {
        let c = cluster_of_x[x];
        let mut cand = part.clusters()[c].bits().clone();
        if let Some(t) = restriction_of[x] {
            cand.intersect_with(t.bits());
        }
        for y in h.neighbors(x) {
            if y == skip {
                continue;
            }
            if let Some(v) = phi[y] {
                cand.intersect_with(pruned.neighbor_row(v));
            }
        }
        cand
    };
    let compat = |x: usize, phi: &[Option<usize>]| -> Bitset { compat_except(x, phi, usize::MAX) };

    // Greedy phase over non-reserved vertices in a degeneracy order:
    // repeatedly peel the member with the fewest remaining in-batch
    // neighbors and embed in reverse peel order. Each vertex then faces at
    // most degeneracy-many placed in-batch neighbors when its turn comes —
    // on bounded-degree subgraphs this keeps candidate sets from
    // collapsing. A vertex without a free compatible slot frees one
    // through an alternating path (occupants relocate, each rechecked
    // against its own full constraint set).
    let batch: Vec<usize> = clusters
        .iter()
        .flat_map(|&c| load_sets[c].iter().copied())
        .filter(|&x| !reserved[x])
        .collect();
    let order = {
        let mut in_batch = vec![false; n];
        for &x in &batch {
            in_batch[x] = true;
        }
        let mut deg: Vec<usize> = vec![0; n];
        for &x in &batch {
            deg[x] = h.neighbors(x).filter(|&y| in_batch[y]).count();
        }
        let mut remaining = batch.clone();
        let mut peeled = Vec::with_capacity(batch.len());
        while !remaining.is_empty() {
            let (idx, _) = remaining
                .iter()
                .enumerate()
                .min_by_key(|&(_, &x)| (deg[x], x))
                .expect("remaining nonempty");
            let x = remaining.swap_remove(idx);
            in_batch[x] = false;
            for y in h.neighbors(x) {
                if in_batch[y] {
                    deg[y] -= 1;
                }
            }
            peeled.push(x);
        }
        peeled.reverse();
        // Vertices with cross-clique edges go first: their placements seed
        // the sealed constraint sets of later cliques, and full pools keep
        // those seeds large. The rest go smallest-cluster-first — skewed
        // loads leave crowded clusters whose vertices embed easiest while
        // their neighbors in roomier clusters are still unplaced — with
        // the peel order within each group.
        let has_cross = |x: usize| {
            h.neighbors(x)
                .any(|y| cluster_of_x[y] == usize::MAX || !in_clique[cluster_of_x[y]])
        };
        let (cross, mut bulk): (Vec<usize>, Vec<usize>) =
            peeled.into_iter().partition(|&x| has_cross(x));
        bulk.sort_by_key(|&x| part.clusters()[cluster_of_x[x]].len());
        let mut ordered = cross;
        ordered.extend(bulk);
        ordered
    };
    // Matching phase appended after the greedy batch: the reserved
    // vertices are placed by the same augmenting-path machinery (Kuhn's
    // algorithm over the full cluster compatibility graph).
    let mut worklist: std::collections::VecDeque<usize> = order.into();
    for &c in clusters {
        let mut left: Vec<usize> = load_sets[c]
            .iter()
            .copied()
            .filter(|&x| reserved[x])
            .collect();
        left.sort_by_key(|&x| (std::cmp::Reverse(h.degree(x)), x));
        worklist.extend(left);
    }
    // Conflict-eviction budget: placements beyond this mean thrashing.
    let mut budget = 80 * worklist.len() + 100;
    while let Some(x) = worklist.pop_front() {
        if phi[x].is_some() {
            continue;
        }
        if budget == 0 {
            // Small leftover knots cycle under randomized eviction; a
            // plain exhaustive search over the residue settles them.
            let mut remaining: Vec<usize> = std::iter::once(x)
                .chain(worklist.iter().copied())
                .filter(|&y| phi[y].is_none())
                .collect();
            remaining.sort_unstable();
            remaining.dedup();
            if remaining.len() <= 24 {
                let mut nodes = 100_000usize;
                let mut pool = remaining.clone();
                if joint_search(
                    &mut pool,
                    &cluster_of_x,
                    &compat,
                    &mut free,
                    phi,
                    &mut occupant,
                    &mut nodes,
                    8,
                ) {
                    continue;
                }
            }
            let detail: Vec<String> = remaining
                .iter()
                .map(|&y| {
                    let cy = cluster_of_x[y];
                    format!(
                        "v{y}@c{cy}(total {}, free {})",
                        compat(y, phi).count(),
                        compat(y, phi).intersection_count(&free[cy])
                    )
                })
                .collect();
            return Err(format!(
                "placement thrashing: eviction budget exhausted; residue [{}]",
                detail.join(", ")
            ));
        }
        budget -= 1;
        let c = cluster_of_x[x];
        let cand = compat(x, phi);
        let open: Vec<usize> = cand.intersect(&free[c]).iter().collect();
        if !open.is_empty() {
            // Forward check on unplaced cross-clique neighbors: avoid
            // slots that would empty a counterpart's sealed candidate
            // set; fall back to the unfiltered pick if none survives.
            let guarded: Vec<usize> = open
                .iter()
                .copied()
                .filter(|&v| {
                    h.neighbors(x)
                        .filter(|&y| {
                            phi[y].is_none()
                                && cluster_of_x[y] != usize::MAX
                                && !in_clique[cluster_of_x[y]]
                        })
                        .all(|y| {
                            let mut sealed = compat(y, phi);
                            sealed.intersect_with(pruned.neighbor_row(v));
                            !sealed.is_empty()
                        })
                })
                .collect();
            let pool = if guarded.is_empty() { &open } else { &guarded };
            let v = pool[rng.gen_range(0..pool.len())];
            phi[x] = Some(v);
            occupant[v] = Some(x);
            free[c].remove(v);
            continue;
        }
        if place_with_repair(
            h,
            pruned,
            x,
            &cluster_of_x,
            &in_clique,
            &anchor_slots,
            &compat,
            &compat_except,
            &mut free,
            phi,
            &mut occupant,
        ) {
            continue;
        }
        // Last resort: place x against its sealed constraints only and
        // evict the in-clique conflictors for another pass.
        let mut frozen_cand = part.clusters()[c].bits().clone();
        if let Some(t) = restriction_of[x] {
            frozen_cand.intersect_with(t.bits());
        }
        for y in h.neighbors(x) {
            if cluster_of_x[y] == usize::MAX || !in_clique[cluster_of_x[y]] {
                if let Some(v) = phi[y] {
                    frozen_cand.intersect_with(pruned.neighbor_row(v));
                }
            }
        }
        let options: Vec<usize> = frozen_cand.iter().collect();
        if options.is_empty() {
            let frozen: Vec<(usize, usize)> = h
                .neighbors(x)
                .filter(|&y| {
                    (cluster_of_x[y] == usize::MAX || !in_clique[cluster_of_x[y]])
                        && phi[y].is_some()
                })
                .map(|y| (y, phi[y].unwrap()))
                .collect();
            return Err(format!(
                "vertex {x} (cluster {c}, size {}, restricted={}) has no slot compatible \
                 with its sealed cross-clique constraints (frozen neighbors {frozen:?}) — \
                 retries cannot fix this clique order",
                part.clusters()[c].len(),
                restriction_of[x].map(|t| t.len()).unwrap_or(usize::MAX),
            ));
        }
        // Prefer kick targets that keep unplaced cross-neighbors alive.
        let guarded: Vec<usize> = options
            .iter()
            .copied()
            .filter(|&v| {
                h.neighbors(x)
                    .filter(|&y| {
                        phi[y].is_none()
                            && cluster_of_x[y] != usize::MAX
                            && !in_clique[cluster_of_x[y]]
                    })
                    .all(|y| {
                        let mut sealed = compat(y, phi);
                        sealed.intersect_with(pruned.neighbor_row(v));
                        !sealed.is_empty()
                    })
            })
            .collect();
        let pool = if guarded.is_empty() { &options } else { &guarded };
        let unpinned: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&s| !anchor_slots.contains(s))
            .collect();
        if unpinned.is_empty() {
            return Err(format!(
                "vertex {x} (cluster {c}): every admissible slot is pinned by an anchor"
            ));
        }
        let s = unpinned[rng.gen_range(0..unpinned.len())];
        if let Some(prev) = occupant[s] {
            phi[prev] = None;
            occupant[s] = None;
            worklist.push_back(prev);
        } else {
            free[c].remove(s);
        }
        for y in h.neighbors(x) {
            if cluster_of_x[y] != usize::MAX && in_clique[cluster_of_x[y]] {
                if let Some(v) = phi[y] {
                    if !pruned.has_edge(v, s) {
                        phi[y] = None;
                        occupant[v] = None;
                        free[cluster_of_x[y]].insert(v);
                        worklist.push_back(y);
                    }
                }
            }
        }
        phi[x] = Some(s);
        occupant[s] = Some(x);
    }
    Ok(())
}

/// Places `x` by direct choice, same-cluster augmentation, or by
/// relocating one embedded neighbor so a slot opens. Only neighbors whose
/// cluster belongs to the clique being embedded are relocatable — earlier
/// cliques are sealed, and their free/occupant state is out of scope here.
#[allow(clippy::too_many_arguments)]
fn place_with_repair(
    h: &Graph,
    pruned: &Graph,
    x: usize,
    cluster_of_x: &[usize],
    in_clique: &[bool],
    anchor_slots: &Bitset,
    compat: &impl Fn(usize, &[Option<usize>]) -> Bitset,
    compat_except: &impl Fn(usize, &[Option<usize>], usize) -> Bitset,
    free: &mut [Bitset],
    phi: &mut [Option<usize>],
    occupant: &mut [Option<usize>],
) -> bool {

    let c = cluster_of_x[x];
    let mut visited = anchor_slots.clone();
    if augment(x, compat, &mut free[c], phi, occupant, &mut visited) {
        return true;
    }
    let nbrs: Vec<usize> = h
        .neighbors(x)
        .filter(|&y| {
            cluster_of_x[y] != usize::MAX && in_clique[cluster_of_x[y]] && phi[y].is_some()
        })
        .collect();
    // Slots holding x's other embedded neighbors must not move during the
    // repair: the slot chosen for x was validated against their positions.
    let pinned = |skip: usize, phi: &[Option<usize>]| -> Bitset {
        let mut pins = anchor_slots.clone();
        for z in h.neighbors(x) {
            if z != skip {
                if let Some(v) = phi[z] {
                    pins.insert(v);
                }
            }
        }
        pins
    };
    for &y in &nbrs {
        let cy = cluster_of_x[y];
        let slots_for_x: Vec<usize> = compat_except(x, phi, y)
            .intersect(&free[c])
            .iter()
            .collect();
        if slots_for_x.is_empty() {
            continue;
        }
        let v_old = phi[y].expect("y is embedded");
        free[cy].insert(v_old);
        occupant[v_old] = None;
        phi[y] = None;
        for &s in &slots_for_x {
            let filter = pruned.neighbor_row(s).clone();
            let mut visited = pinned(y, phi);
            if augment_filtered(y, &filter, compat, &mut free[cy], phi, occupant, &mut visited)
            {
                phi[x] = Some(s);
                occupant[s] = Some(x);
                free[c].remove(s);
                return true;
            }
        }
        phi[y] = Some(v_old);
        occupant[v_old] = Some(y);
        free[cy].remove(v_old);
    }
    false
}

/// Joint completion of a small residue by depth-first search: unplaced
/// vertices take free compatible slots, or evict an occupant (who joins
/// the residue) while eviction budget lasts. Most-constrained first.
#[allow(clippy::too_many_arguments)]
fn joint_search(
    unplaced: &mut Vec<usize>,
    cluster_of_x: &[usize],
    compat: &impl Fn(usize, &[Option<usize>]) -> Bitset,
    free: &mut [Bitset],
    phi: &mut [Option<usize>],
    occupant: &mut [Option<usize>],
    nodes: &mut usize,
    evict_budget: usize,
) -> bool {
    if unplaced.is_empty() {
        return true;
    }
    if *nodes == 0 {
        return false;
    }
    *nodes -= 1;
    let (idx, _) = unplaced
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let cy = cluster_of_x[y];
            (i, compat(y, phi).intersection_count(&free[cy]))
        })
        .min_by_key(|&(_, opts)| opts)
        .expect("residue nonempty");
    let x = unplaced.swap_remove(idx);
    let cx = cluster_of_x[x];
    let cand = compat(x, phi);
    // Free slots first.
    for v in cand.iter() {
        if !free[cx].contains(v) {
            continue;
        }
        phi[x] = Some(v);
        occupant[v] = Some(x);
        free[cx].remove(v);
        if joint_search(unplaced, cluster_of_x, compat, free, phi, occupant, nodes, evict_budget) {
            return true;
        }
        free[cx].insert(v);
        occupant[v] = None;
        phi[x] = None;
    }
    if evict_budget > 0 {
        for v in cand.iter() {
            let Some(z) = occupant[v] else { continue };
            phi[z] = None;
            phi[x] = Some(v);
            occupant[v] = Some(x);
            unplaced.push(z);
            if joint_search(
                unplaced,
                cluster_of_x,
                compat,
                free,
                phi,
                occupant,
                nodes,
                evict_budget - 1,
            ) {
                return true;
            }
            let pos = unplaced
                .iter()
                .position(|&u| u == z)
                .expect("evicted vertex stays in the residue on failure");
            unplaced.swap_remove(pos);
            occupant[v] = Some(z);
            phi[z] = Some(v);
            phi[x] = None;
        }
    }
    unplaced.push(x);
    false
}

/// Like `augment`, but the top-level vertex may only take slots inside
/// `filter` (occupant relocations below it are unrestricted).
fn augment_filtered(
    x: usize,
    filter: &Bitset,
    compat: &impl Fn(usize, &[Option<usize>]) -> Bitset,
    free: &mut Bitset,
    phi: &mut [Option<usize>],
    occupant: &mut [Option<usize>],
    visited: &mut Bitset,
) -> bool {
    let cand = compat(x, phi).intersect(filter);
    for v in cand.iter() {
        if !visited.contains(v) && free.contains(v) {
            visited.insert(v);
            free.remove(v);
            phi[x] = Some(v);
            occupant[v] = Some(x);
            return true;
        }
    }
    for v in cand.iter() {
        if visited.contains(v) {
            continue;
        }
        visited.insert(v);
        let Some(y) = occupant[v] else {
            continue;
        };
        if augment(y, compat, free, phi, occupant, visited) {
            phi[x] = Some(v);
            occupant[v] = Some(x);
            return true;
        }
    }
    false
}

/// Kuhn-style augmentation: give `x` a compatible slot, relocating a chain
/// of occupants if needed; every relocated vertex is rechecked against its
/// own full constraint set. Slots in `visited` are not retried.
fn augment(
    x: usize,
    compat: &impl Fn(usize, &[Option<usize>]) -> Bitset,
    free: &mut Bitset,
    phi: &mut [Option<usize>],
    occupant: &mut [Option<usize>],
    visited: &mut Bitset,
) -> bool {
    let cand = compat(x, phi);
    for v in cand.iter() {
        if !visited.contains(v) && free.contains(v) {
            visited.insert(v);
            free.remove(v);
            phi[x] = Some(v);
            occupant[v] = Some(x);
            return true;
        }
    }
    for v in cand.iter() {
        if visited.contains(v) {
            continue;
        }
        visited.insert(v);
        let Some(y) = occupant[v] else {
            continue;
        };
        if augment(y, compat, free, phi, occupant, visited) {
            phi[x] = Some(v);
            occupant[v] = Some(x);
            return true;
        }
    }
    false
}

/// Why an embedding is invalid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum EmbedViolation {
    WrongLength { got: usize, want: usize },
    ImageOutOfRange { x: usize, image: usize },
    NotInjective { x1: usize, x2: usize, image: usize },
    MissingEdge { x: usize, y: usize, u: usize, v: usize },
}

/// Exhaustive independent check: injectivity and edge preservation against
/// the original host. Trusts nothing from the embedder.
pub fn verify_embedding(
    h: &Graph,
    g: &Graph,
    phi: &[usize],
) -> std::result::Result<(), EmbedViolation> {
    if phi.len() != h.n() {
        return Err(EmbedViolation::WrongLength {
            got: phi.len(),
            want: h.n(),
        });
    }
    let mut owner = vec![usize::MAX; g.n()];
    for (x, &v) in phi.iter().enumerate() {
        if v >= g.n() {
            return Err(EmbedViolation::ImageOutOfRange { x, image: v });
        }
        if owner[v] != usize::MAX {
            return Err(EmbedViolation::NotInjective {
                x1: owner[v],
                x2: x,
                image: v,
            });
        }
        owner[v] = x;
    }
    for (x, y) in h.edges() {
        if !g.has_edge(phi[x], phi[y]) {
            return Err(EmbedViolation::MissingEdge {
                x,
                y,
                u: phi[x],
                v: phi[y],
            });
        }
    }
    Ok(())
}

pub fn is_valid_embedding(h: &Graph, g: &Graph, phi: &[usize]) -> bool {
    verify_embedding(h, g, phi).is_ok()
}

pub const BRUTE_FORCE_CAP: usize = 12;

/// Exhaustive backtracking subgraph embedding for `|V(H)| <= 12`; a `None`
/// answer is a proof of non-embeddability.
pub fn brute_force_embed(h: &Graph, g: &Graph) -> Result<Option<Embedding>> {
    let nh = h.n();
    if nh > BRUTE_FORCE_CAP {
        return Err(Error::Regime(format!(
            "brute-force embedding capped at {BRUTE_FORCE_CAP} vertices, got {nh}"
        )));
    }
    if nh > g.n() {
        return Ok(None);
    }
    // Order: most-placed-neighbors first, then degree, then id.
    let mut order = Vec::with_capacity(nh);
    let mut placed = vec![false; nh];
    for _ in 0..nh {
        let x = (0..nh)
            .filter(|&x| !placed[x])
            .max_by_key(|&x| {
                let anchored = h.neighbors(x).filter(|&y| placed[y]).count();
                (anchored, h.degree(x), std::cmp::Reverse(x))
            })
            .expect("unplaced vertex exists");
        placed[x] = true;
        order.push(x);
    }
    let mut phi = vec![usize::MAX; nh];
    let mut used = vec![false; g.n()];
    if backtrack(h, g, &order, 0, &mut phi, &mut used) {
        Ok(Some(Embedding { phi }))
    } else {
        Ok(None)
    }
}

fn backtrack(
    h: &Graph,
    g: &Graph,
    order: &[usize],
    depth: usize,
    phi: &mut [usize],
    used: &mut [bool],
) -> bool {
    if depth == order.len() {
        return true;
    }
    let x = order[depth];
    let need = h.degree(x);
    for v in 0..g.n() {
        if used[v] || g.degree(v) < need {
            continue;
        }
        let ok = h
            .neighbors(x)
            .all(|y| phi[y] == usize::MAX || g.has_edge(v, phi[y]));
        if !ok {
            continue;
        }
        phi[x] = v;
        used[v] = true;
        if backtrack(h, g, order, depth + 1, phi, used) {
            return true;
        }
        used[v] = false;
        phi[x] = usize::MAX;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularity::{degree_form_prune, CertifyMode};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn range_set(n: usize, lo: usize, hi: usize) -> VertexSet {
        VertexSet::from_iter(n, lo..hi).unwrap()
    }

    #[test]
    fn verify_identity_on_literal_subgraph() {
        let h = Graph::path(5);
        let g = Graph::cycle(5);
        let phi: Vec<usize> = (0..5).collect();
        assert!(verify_embedding(&h, &g, &phi).is_ok());
    }

    #[test]
    fn verify_rejects_non_injective() {
        let h = Graph::empty(3);
        let g = Graph::empty(3);
        match verify_embedding(&h, &g, &[0, 0, 1]) {
            Err(EmbedViolation::NotInjective { image, .. }) => assert_eq!(image, 0),
            other => panic!("expected injectivity failure, got {other:?}"),
        }
    }

    #[test]
    fn verify_names_missing_edge() {
        let h = Graph::path(3); // edges (0,1), (1,2)
        let g = Graph::path(3);
        match verify_embedding(&h, &g, &[0, 2, 1]) {
            Err(EmbedViolation::MissingEdge { x, y, u, v }) => {
                assert_eq!((x, y), (0, 1));
                assert_eq!((u, v), (0, 2));
            }
            other => panic!("expected missing edge, got {other:?}"),
        }
    }

    #[test]
    fn brute_force_c4_into_k4() {
        let h = Graph::cycle(4);
        let g = Graph::complete(4);
        let emb = brute_force_embed(&h, &g).unwrap().expect("C4 fits in K4");
        assert!(is_valid_embedding(&h, &g, &emb.phi));
    }

    #[test]
    fn brute_force_triangle_not_in_c5() {
        let h = Graph::complete(3);
        let g = Graph::cycle(5);
        assert!(brute_force_embed(&h, &g).unwrap().is_none());
    }

    #[test]
    fn brute_force_cap() {
        let h = Graph::empty(13);
        let g = Graph::empty(13);
        assert!(matches!(brute_force_embed(&h, &g), Err(Error::Regime(_))));
    }

    fn planted_complete(l: usize, m: usize) -> RegularPartition {
        let n = l * m;
        let g = Graph::complete(n);
        let clusters = (0..l).map(|i| range_set(n, i * m, (i + 1) * m)).collect();
        degree_form_prune(&g, clusters, 0.25, 0.3, CertifyMode::DensityOnly).unwrap()
    }

    #[test]
    fn restrictions_empty_without_cross_edges() {
        let part = planted_complete(2, 5);
        let factor = CliqueFactor::new(vec![vec![0, 1]], vec![], 2, 2).unwrap();
        // H = 5 disjoint edges, alternating clusters.
        let h = Graph::from_edges(10, &[(0, 5), (1, 6), (2, 7), (3, 8), (4, 9)]).unwrap();
        let kappa: Vec<usize> = (0..10).map(|x| if x < 5 { 0 } else { 1 }).collect();
        let report = build_restrictions(&h, &kappa, &part, &part, &factor).unwrap();
        assert!(report.restrictions.is_empty());
        assert!(report.cross_edges.is_empty());
        assert_eq!(report.min_ratio, 1.0);
    }

    #[test]
    fn restrictions_complete_host_full_cluster() {
        // Two cliques with one cross edge: on a complete host every vertex
        // passes the degree filter, so T_x is the whole cluster.
        let part = planted_complete(4, 5);
        let factor = CliqueFactor::new(vec![vec![0, 1], vec![2, 3]], vec![], 2, 4).unwrap();
        let mut edges = vec![(0, 5), (10, 15)];
        edges.push((0, 10)); // cross-clique edge
        let h = Graph::from_edges(20, &edges).unwrap();
        let kappa: Vec<usize> = (0..20).map(|x| x / 5).collect();
        let report = build_restrictions(&h, &kappa, &part, &part, &factor).unwrap();
        assert_eq!(report.cross_edges, vec![(0, 10)]);
        assert_eq!(report.restrictions.len(), 2);
        assert!(report.restrictions.iter().all(|r| r.allowed.len() == 5));
        assert_eq!(report.min_ratio, 1.0);
        assert_eq!(report.max_filters, 1);
    }

    #[test]
    fn embed_matching_into_planted_pair() {
        // H = perfect matching across two clusters of a complete host.
        let part = planted_complete(2, 10);
        let factor = CliqueFactor::new(vec![vec![0, 1]], vec![], 2, 2).unwrap();
        let edges: Vec<(usize, usize)> = (0..10).map(|i| (i, 10 + i)).collect();
        let h = Graph::from_edges(20, &edges).unwrap();
        let kappa: Vec<usize> = (0..20).map(|x| x / 10).collect();
        let emb = embed_cliquewise(
            &h,
            &kappa,
            &part,
            &factor,
            &[],
            &EmbedConfig::default(),
            &mut rng(7),
        )
        .unwrap();
        assert!(is_valid_embedding(&h, part.host(), &emb.phi));
        // kappa respected: images stay in the assigned cluster.
        for (x, &v) in emb.phi.iter().enumerate() {
            assert!(part.clusters()[kappa[x]].contains(v));
        }
    }

    #[test]
    fn embed_isolated_vertices_pass_through_matching() {
        let part = planted_complete(2, 6);
        let factor = CliqueFactor::new(vec![vec![0, 1]], vec![], 2, 2).unwrap();
        let h = Graph::empty(12);
        let kappa: Vec<usize> = (0..12).map(|x| x / 6).collect();
        let emb = embed_cliquewise(
            &h,
            &kappa,
            &part,
            &factor,
            &[],
            &EmbedConfig::default(),
            &mut rng(3),
        )
        .unwrap();
        assert!(is_valid_embedding(&h, part.host(), &emb.phi));
    }

    #[test]
    fn embed_respects_restrictions() {
        let part = planted_complete(2, 6);
        let factor = CliqueFactor::new(vec![vec![0, 1]], vec![], 2, 2).unwrap();
        let h = Graph::empty(12);
        let kappa: Vec<usize> = (0..12).map(|x| x / 6).collect();
        // Restrict vertex 0 to a two-slot window.
        let allowed = VertexSet::from_iter(12, [2usize, 3]).unwrap();
        let restrictions = vec![RestrictionSet { vertex: 0, allowed }];
        for seed in 0..10 {
            let emb = embed_cliquewise(
                &h,
                &kappa,
                &part,
                &factor,
                &restrictions,
                &EmbedConfig::default(),
                &mut rng(seed),
            )
            .unwrap();
            assert!(emb.phi[0] == 2 || emb.phi[0] == 3);
        }
    }

    #[test]
    fn embed_requires_balanced_loads() {
        let part = planted_complete(2, 5);
        let factor = CliqueFactor::new(vec![vec![0, 1]], vec![], 2, 2).unwrap();
        let h = Graph::empty(10);
        let kappa = vec![0usize; 10]; // everything on cluster 0
        assert!(matches!(
            embed_cliquewise(
                &h,
                &kappa,
                &part,
                &factor,
                &[],
                &EmbedConfig::default(),
                &mut rng(1)
            ),
            Err(Error::Pipeline(_))
        ));
    }

    #[test]
    fn embed_grid_into_planted_host_and_cross_check() {
        // 3x4 grid (bipartite) into a complete host on two clusters of 6.
        let part = planted_complete(2, 6);
        let factor = CliqueFactor::new(vec![vec![0, 1]], vec![], 2, 2).unwrap();
        let h = Graph::grid(3, 4);
        let coloring = crate::graph::chromatic_upper(&h);
        assert_eq!(coloring.num_classes, 2);
        let kappa: Vec<usize> = (0..12).map(|x| coloring.colors[x]).collect();
        let emb = embed_cliquewise(
            &h,
            &kappa,
            &part,
            &factor,
            &[],
            &EmbedConfig::default(),
            &mut rng(11),
        )
        .unwrap();
        assert!(is_valid_embedding(&h, part.host(), &emb.phi));
        // One-directional consistency with the exact oracle.
        assert!(brute_force_embed(&h, part.host()).unwrap().is_some());
    }

    #[test]
    fn hall_violation_fails_with_stuck_clique() {
        // Two vertices restricted to the same single slot: no perfect
        // matching can exist, and the failure names the clique.
        let part = planted_complete(2, 4);
        let factor = CliqueFactor::new(vec![vec![0, 1]], vec![], 2, 2).unwrap();
        let h = Graph::empty(8);
        let kappa: Vec<usize> = (0..8).map(|x| x / 4).collect();
        let slot = VertexSet::from_iter(8, [0usize]).unwrap();
        let restrictions = vec![
            RestrictionSet { vertex: 0, allowed: slot.clone() },
            RestrictionSet { vertex: 1, allowed: slot },
        ];
        match embed_cliquewise(
            &h,
            &kappa,
            &part,
            &factor,
            &restrictions,
            &EmbedConfig::default(),
            &mut rng(1),
        ) {
            Err(Error::EmbedFailed { clique, msg }) => {
                assert_eq!(clique, 0);
                assert!(
                    msg.contains("stuck")
                        || msg.contains("Hall")
                        || msg.contains("thrashing")
                        || msg.contains("anchor"),
                    "msg: {msg}"
                );
            }
            other => panic!("expected embed failure, got {other:?}"),
        }
    }
}
