//! Assigning the vertices of `H` to clusters of the reduced graph:
//! distributing the exceptional set through the absorption graph F1,
//! the randomized component-mapping algorithm, boundary reassignment so
//! adjacent vertices land on adjacent clusters, and load balancing through
//! the directed move graph F2.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bitset::Bitset;
use crate::error::{Error, Result};
use crate::factor::CliqueFactor;
use crate::graph::{Coloring, Graph, VertexSet};
use crate::regularity::RegularPartition;

/// Default structural epsilon (balance-slack accounting).
pub const DEFAULT_EPS: f64 = 0.02;
/// Default pair-density threshold.
pub const DEFAULT_D: f64 = 0.25;

/// The pipeline's slack parameters. `gamma` is the host's degree margin;
/// `eps` and `d` here are the structural quantities driving the
/// gamma-arithmetic and balance slacks (pair certification runs at its own
/// scale, recorded on the partition).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Parameters {
    pub k: usize,
    pub gamma: f64,
    pub eps: f64,
    pub d: f64,
    pub delta: f64,
}

impl Parameters {
    /// Explicit parameters, validated.
    pub fn new(k: usize, gamma: f64, eps: f64, d: f64, delta: f64) -> Result<Parameters> {
        let p = Parameters {
            k,
            gamma,
            eps,
            d,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Scales `eps` and `d` off `gamma` and picks the delta that leaves the
    /// restriction-set bound `(d-eps)^{2k-2} > delta` a factor-two margin.
    pub fn derived(k: usize, gamma: f64) -> Result<Parameters> {
        let eps = gamma / 10.0;
        let d = gamma / 5.0;
        let delta = (d - eps).powi(2 * k as i32 - 2) / 2.0;
        Parameters::new(k, gamma, eps, d, delta)
    }

    pub fn validate(&self) -> Result<()> {
        let Parameters {
            k,
            gamma,
            eps,
            d,
            delta,
        } = *self;
        if k < 2 {
            return Err(Error::InvalidArgument("k must be at least 2".into()));
        }
        if !(0.0 < eps && eps < d && d < gamma && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < eps < d < gamma < 1; got eps={eps}, d={d}, gamma={gamma}"
            )));
        }
        if !(0.0 < delta && delta < (d - eps).powi(2 * k as i32 - 2)) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < delta < (d-eps)^(2k-2) = {}; got delta={delta}",
                (d - eps).powi(2 * k as i32 - 2)
            )));
        }
        if self.gamma1() <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gamma' = gamma - d - 2 eps = {} must be positive",
                self.gamma1()
            )));
        }
        if self.gamma2() <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gamma'' = k (gamma - 2(eps + d)) = {} must be positive",
                self.gamma2()
            )));
        }
        Ok(())
    }

    /// `gamma' = gamma - d - 2 eps`, the reduced-degree margin.
    pub fn gamma1(&self) -> f64 {
        self.gamma - self.d - 2.0 * self.eps
    }

    /// `gamma'' = k (gamma - 2(eps + d))`, the absorption-degree margin.
    pub fn gamma2(&self) -> f64 {
        self.k as f64 * (self.gamma - 2.0 * (self.eps + self.d))
    }
}

/// The bipartite absorption graph: exceptional vertices on the left,
/// clusters on the right; an edge means the vertex has at least `delta*m`
/// host-neighbors in every clique partner of that cluster, so it can join
/// the cluster without hurting super-regularity.
#[derive(Clone, Debug, Serialize)]
pub struct AuxBipartite {
    pub v0_vertices: Vec<usize>,
    pub cluster_count: usize,
    /// Per V0 vertex (parallel to `v0_vertices`), the admissible clusters.
    pub neighbors: Vec<Vec<usize>>,
    /// Minimum left degree, `None` when V0 is empty.
    pub min_left_degree: Option<usize>,
}

/// Builds F1 by the degree rule, over the original host graph.
pub fn build_f1(
    g: &Graph,
    part: &RegularPartition,
    factor: &CliqueFactor,
    delta: f64,
) -> Result<AuxBipartite> {
    let m = part.cluster_size() as f64;
    let l = part.num_clusters();
    let v0_vertices = part.v0().to_vec();
    let mut neighbors = Vec::with_capacity(v0_vertices.len());
    for &v in &v0_vertices {
        let mut adm = Vec::new();
        'cluster: for i in 0..l {
            let Some(partners) = factor.partners(i) else {
                continue; // uncovered clusters cannot absorb
            };
            for j in partners {
                if (g.degree_into(v, &part.clusters()[j])? as f64) < delta * m {
                    continue 'cluster;
                }
            }
            adm.push(i);
        }
        neighbors.push(adm);
    }
    let min_left_degree = neighbors.iter().map(|a| a.len()).min();
    Ok(AuxBipartite {
        v0_vertices,
        cluster_count: l,
        neighbors,
        min_left_degree,
    })
}

/// Outcome counters for `distribute_v0`.
#[derive(Clone, Debug, Serialize)]
pub struct DistributionReport {
    pub placed: usize,
    pub attempts: usize,
    pub max_size_spread: usize,
    pub spread_bound: f64,
}

const DISTRIBUTE_RETRIES: usize = 20;

/// Places every exceptional vertex into a uniformly random F1-neighbor
/// cluster, retrying with fresh draws until the cluster sizes stay within
/// `4 k eps m` of each other.
pub fn distribute_v0(
    part: &RegularPartition,
    f1: &AuxBipartite,
    params: &Parameters,
    rng: &mut ChaCha8Rng,
) -> Result<(RegularPartition, DistributionReport)> {
    if let Some(pos) = f1.neighbors.iter().position(|a| a.is_empty()) {
        return Err(Error::Pipeline(format!(
            "exceptional vertex {} is isolated in the absorption graph",
            f1.v0_vertices[pos]
        )));
    }
    let m = part.cluster_size() as f64;
    let bound = 4.0 * params.k as f64 * params.eps * m;
    let mut last_spread = 0usize;
    for attempt in 1..=DISTRIBUTE_RETRIES {
        let mut clusters = part.clusters().to_vec();
        for (idx, &v) in f1.v0_vertices.iter().enumerate() {
            let choices = &f1.neighbors[idx];
            let pick = choices[rng.gen_range(0..choices.len())];
            clusters[pick].insert(v);
        }
        let sizes: Vec<usize> = clusters.iter().map(|c| c.len()).collect();
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        last_spread = spread;
        if (spread as f64) < bound {
            let out = part.replace_clusters(clusters, VertexSet::empty(part.host().n()))?;
            return Ok((
                out,
                DistributionReport {
                    placed: f1.v0_vertices.len(),
                    attempts: attempt,
                    max_size_spread: spread,
                    spread_bound: bound,
                },
            ));
        }
    }
    Err(Error::Balance(format!(
        "cluster size spread {last_spread} still at or above {bound:.2} after \
         {DISTRIBUTE_RETRIES} attempts"
    )))
}

/// Vertex-of-H to cluster map with per-cluster load counts.
#[derive(Clone, Debug)]
pub struct AssignmentMap {
    kappa: Vec<Option<usize>>,
}

impl AssignmentMap {
    pub fn new(n: usize) -> AssignmentMap {
        AssignmentMap {
            kappa: vec![None; n],
        }
    }

    pub fn set(&mut self, v: usize, cluster: usize) {
        self.kappa[v] = Some(cluster);
    }

    pub fn get(&self, v: usize) -> Option<usize> {
        self.kappa[v]
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    /// Loads `L_i`: the number of H-vertices assigned to each cluster.
    pub fn loads(&self, cluster_count: usize) -> Vec<usize> {
        let mut loads = vec![0; cluster_count];
        for c in self.kappa.iter().flatten() {
            loads[*c] += 1;
        }
        loads
    }

    /// All vertices assigned, as a plain array.
    pub fn finalized(&self) -> Result<Vec<usize>> {
        self.kappa
            .iter()
            .enumerate()
            .map(|(v, c)| {
                c.ok_or_else(|| Error::Pipeline(format!("vertex {v} was never assigned")))
            })
            .collect()
    }

    /// Clusters used by the vertices of `set` (usually a single one when
    /// the set is one color class of one mapped area).
    pub fn clusters_of(&self, set: &VertexSet) -> Vec<usize> {
        let mut out: Vec<usize> = set.iter().filter_map(|v| self.kappa[v]).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// One round of the mapping algorithm: a uniform clique of the factor, a
/// uniform permutation of its clusters, and every color class of `area`
/// lands on its permuted cluster.
pub fn map_component(
    area: &VertexSet,
    coloring: &Coloring,
    k: usize,
    factor: &CliqueFactor,
    kappa: &mut AssignmentMap,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if factor.cliques.is_empty() {
        return Err(Error::Pipeline("the clique factor is empty".into()));
    }
    if coloring.num_classes > k {
        return Err(Error::InvalidArgument(format!(
            "coloring has {} classes, mapping uses k={k}",
            coloring.num_classes
        )));
    }
    let q = rng.gen_range(0..factor.cliques.len());
    let clique = &factor.cliques[q];
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    for v in area.iter() {
        let color = coloring.colors[v];
        kappa.set(v, clique[perm[color]]);
    }
    Ok(())
}

/// Checks whether a freshly mapped component's boundary can be reassigned
/// without leaving the separator's and its own cliques: for every color
/// class the candidate intersection must contain its current cluster, the
/// same-color separator cluster, or something in the separator's clique.
/// Mapping draws failing this are worth redrawing — their boundary rows
/// would land in foreign cliques and drag cross-clique edges along.
pub fn boundary_stays_local(
    h: &Graph,
    separator: &VertexSet,
    component: &VertexSet,
    coloring: &Coloring,
    k: usize,
    kappa: &AssignmentMap,
    gr: &Graph,
    factor: &CliqueFactor,
) -> bool {
    if separator.is_empty() {
        return true;
    }
    let n = h.n();
    let mut boundary = VertexSet::empty(n);
    for s in separator.iter() {
        for w in h.neighbors(s) {
            if component.contains(w) {
                boundary.insert(w);
            }
        }
    }
    if boundary.is_empty() {
        return true;
    }
    let l = gr.n();
    // The boundary layers of every class can move (conservatively treat
    // each nonempty class as moving).
    for c in 0..k {
        // Conservative: any nonempty class may be pulled by the recursion.
        let class = coloring.class_within(component, c);
        if class.is_empty() {
            continue;
        }
        let mut cand = Bitset::new(l);
        for i in 0..l {
            cand.insert(i);
        }
        for p in 0..k {
            if p == c {
                continue;
            }
            let sp = coloring.class_within(separator, p);
            for cl in kappa.clusters_of(&sp) {
                cand.intersect_with(gr.neighbor_row(cl));
            }
        }
        for p in 0..k {
            if p == c {
                continue;
            }
            let cp = coloring.class_within(component, p);
            for cl in kappa.clusters_of(&cp) {
                cand.intersect_with(gr.neighbor_row(cl));
            }
        }
        let here = kappa.clusters_of(&class);
        let identity_ok = here.iter().any(|&cl| cand.contains(cl));
        if identity_ok {
            continue;
        }
        let sc = coloring.class_within(separator, c);
        let same_color_ok = kappa
            .clusters_of(&sc)
            .iter()
            .any(|&cl| cand.contains(cl));
        if same_color_ok {
            continue;
        }
        let sep_cliques: Vec<usize> = (0..k)
            .flat_map(|p| {
                let sp = coloring.class_within(separator, p);
                kappa.clusters_of(&sp)
            })
            .filter_map(|cl| factor.clique_of(cl))
            .collect();
        let sep_clique_ok = cand
            .iter()
            .any(|cl| factor.clique_of(cl).is_some_and(|q| sep_cliques.contains(&q)));
        if !sep_clique_ok {
            return false;
        }
    }
    true
}

/// Statistics over repeated full mapping runs: the per-run maximum
/// deviation of cluster loads from `n / l`.
#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationReport {
    pub runs: usize,
    pub cluster_count: usize,
    pub expected_load: f64,
    /// Max_i |Z_i - n/l| for each run.
    pub max_deviations: Vec<f64>,
    /// Pooled sample standard deviation of the per-cluster load.
    pub load_std: f64,
}

impl ConcentrationReport {
    /// Fraction of runs whose max deviation reached `threshold`.
    pub fn tail_fraction(&self, threshold: f64) -> f64 {
        if self.runs == 0 {
            return 0.0;
        }
        self.max_deviations
            .iter()
            .filter(|&&d| d >= threshold)
            .count() as f64
            / self.runs as f64
    }
}

/// Runs the mapping algorithm `runs` times over the separator and the
/// components, recording load deviations.
pub fn concentration_report(
    h: &Graph,
    areas: &[VertexSet],
    coloring: &Coloring,
    k: usize,
    factor: &CliqueFactor,
    runs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ConcentrationReport> {
    let n = h.n() as f64;
    let l = factor.covered_count().max(1);
    let expected = n / l as f64;
    let mut max_deviations = Vec::with_capacity(runs);
    let mut sum_sq = 0.0;
    let mut samples = 0usize;
    for _ in 0..runs {
        let mut kappa = AssignmentMap::new(h.n());
        for area in areas {
            if area.is_empty() {
                continue;
            }
            map_component(area, coloring, k, factor, &mut kappa, rng)?;
        }
        let loads = kappa.loads(l);
        let mut worst = 0.0f64;
        for &z in &loads {
            let dev = (z as f64 - expected).abs();
            worst = worst.max(dev);
            sum_sq += dev * dev;
            samples += 1;
        }
        max_deviations.push(worst);
    }
    let load_std = if samples > 1 {
        (sum_sq / (samples as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(ConcentrationReport {
        runs,
        cluster_count: l,
        expected_load: expected,
        max_deviations,
        load_std,
    })
}

/// What `reassign_boundary` did for one component.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ReassignStats {
    /// Vertices moved (the union of the boundary layers).
    pub moved: usize,
    /// Destination cluster chosen for each color class that moved.
    pub destinations: Vec<(usize, usize)>,
}

/// Recomputes the boundary layers of one component near the separator by
/// the backward recursion and moves them onto fresh clusters chosen from
/// the common reduced-graph neighborhoods, so that every H-edge ends on a
/// reduced-graph edge.
///
/// Destination choice is randomized within a preference order: the
/// same-color separator cluster first, then anything in the separator's
/// clique, then cliques of earlier destinations, then any candidate. This
/// keeps boundary edges inside super-regular cliques wherever possible.
#[allow(clippy::too_many_arguments)]
pub fn reassign_boundary(
    h: &Graph,
    separator: &VertexSet,
    component: &VertexSet,
    coloring: &Coloring,
    k: usize,
    kappa: &mut AssignmentMap,
    gr: &Graph,
    factor: &CliqueFactor,
    rng: &mut ChaCha8Rng,
) -> Result<ReassignStats> {
    if separator.is_empty() {
        return Ok(ReassignStats::default());
    }
    let n = h.n();
    // B = N(S) ∩ C.
    let mut boundary = VertexSet::empty(n);
    for s in separator.iter() {
        for w in h.neighbors(s) {
            if component.contains(w) {
                boundary.insert(w);
            }
        }
    }
    if boundary.is_empty() {
        return Ok(ReassignStats::default());
    }

    // Backward recursion over color classes, highest first:
    // layers[c] = B_c ∪ (N(layers[c']) ∩ C^c) for all c' > c.
    let class_of = |c: usize| coloring.class_within(component, c);
    let mut layers: Vec<VertexSet> = vec![VertexSet::empty(n); k];
    for c in (0..k).rev() {
        let mut layer = boundary.intersect(&class_of(c));
        for upper in (c + 1)..k {
            for v in layers[upper].iter() {
                for w in h.neighbors(v) {
                    if component.contains(w) && coloring.colors[w] == c {
                        layer.insert(w);
                    }
                }
            }
        }
        layers[c] = layer;
    }

    let l = gr.n();
    let full = || {
        let mut b = Bitset::new(l);
        for i in 0..l {
            b.insert(i);
        }
        b
    };
    let neighborhood = |cluster: usize| gr.neighbor_row(cluster).clone();

    // Choose destinations W_c in class order; each is constrained by the
    // separator classes, the still-unmoved upper classes of this component,
    // and the already-chosen destinations.
    let mut destinations: Vec<Option<usize>> = vec![None; k];
    let mut stats = ReassignStats::default();
    for c in 0..k {
        if layers[c].is_empty() {
            continue;
        }
        let mut cand = full();
        let constrain = |cand: &mut Bitset, clusters: &[usize]| {
            for &cl in clusters {
                cand.intersect_with(&neighborhood(cl));
            }
        };
        for p in 0..k {
            if p == c {
                continue;
            }
            let sp = coloring.class_within(separator, p);
            if !sp.is_empty() {
                constrain(&mut cand, &kappa.clusters_of(&sp));
            }
        }
        for p in (c + 1)..k {
            let cp = class_of(p);
            if !cp.is_empty() {
                constrain(&mut cand, &kappa.clusters_of(&cp));
            }
        }
        for p in 0..c {
            if let Some(w) = destinations[p] {
                cand.intersect_with(&neighborhood(w));
            }
        }
        let options: Vec<usize> = cand.iter().collect();
        if options.is_empty() {
            return Err(Error::HostRegime(format!(
                "no cluster is adjacent to all constraint clusters for class {c}; \
                 the reduced-degree margin is too thin"
            )));
        }
        // Identity first: when the class's current cluster already sits in
        // the candidate set, nothing has to move and no cross-clique
        // edges appear at all.
        let identity: Vec<usize> = {
            let here = kappa.clusters_of(&class_of(c));
            options.iter().copied().filter(|o| here.contains(o)).collect()
        };
        let same_color: Vec<usize> = {
            let sc = coloring.class_within(separator, c);
            let own = kappa.clusters_of(&sc);
            options.iter().copied().filter(|o| own.contains(o)).collect()
        };
        let sep_cliques: Vec<usize> = (0..k)
            .flat_map(|p| {
                let sp = coloring.class_within(separator, p);
                kappa.clusters_of(&sp)
            })
            .filter_map(|cl| factor.clique_of(cl))
            .collect();
        let in_sep_clique: Vec<usize> = options
            .iter()
            .copied()
            .filter(|&o| factor.clique_of(o).is_some_and(|q| sep_cliques.contains(&q)))
            .collect();
        let w_cliques: Vec<usize> = destinations
            .iter()
            .flatten()
            .filter_map(|&w| factor.clique_of(w))
            .collect();
        let near_w: Vec<usize> = options
            .iter()
            .copied()
            .filter(|&o| factor.clique_of(o).is_some_and(|q| w_cliques.contains(&q)))
            .collect();
        let pool = [identity, same_color, in_sep_clique, near_w]
            .into_iter()
            .find(|tier| !tier.is_empty())
            .unwrap_or(options);
        let w = pool[rng.gen_range(0..pool.len())];
        destinations[c] = Some(w);
        for v in layers[c].iter() {
            kappa.set(v, w);
            stats.moved += 1;
        }
        stats.destinations.push((c, w));
    }
    Ok(stats)
}

/// Checks that every H-edge lands on a reduced-graph edge; returns the
/// first offender.
pub fn check_edge_compatibility(
    h: &Graph,
    kappa: &AssignmentMap,
    gr: &Graph,
) -> std::result::Result<(), (usize, usize)> {
    for (u, v) in h.edges() {
        match (kappa.get(u), kappa.get(v)) {
            (Some(cu), Some(cv)) if cu != cv && gr.has_edge(cu, cv) => {}
            _ => return Err((u, v)),
        }
    }
    Ok(())
}

/// Directed move graph: an arc `i -> j` means cluster `i` is adjacent (in
/// the reduced graph) to every clique partner of `j`, so a suitable vertex
/// of `i` can transfer into `j`.
#[derive(Clone, Debug)]
pub struct MoveGraph {
    arcs: Vec<Bitset>,
}

impl MoveGraph {
    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.arcs[from].contains(to)
    }

    pub fn out_neighbors(&self, from: usize) -> Vec<usize> {
        self.arcs[from].iter().collect()
    }
}

/// Builds F2 over the covered clusters of the factor.
pub fn build_f2(gr: &Graph, factor: &CliqueFactor) -> MoveGraph {
    let l = gr.n();
    let mut arcs = vec![Bitset::new(l); l];
    for from in 0..l {
        for to in 0..l {
            if from == to {
                continue;
            }
            let Some(partners) = factor.partners(to) else {
                continue;
            };
            if partners.iter().all(|&p| gr.has_edge(from, p)) {
                arcs[from].insert(to);
            }
        }
    }
    MoveGraph { arcs }
}

/// Outcome counters for `balance_loads`.
#[derive(Clone, Debug, Serialize)]
pub struct BalanceReport {
    /// Individual vertex relocations (a two-step path counts twice).
    pub moves: usize,
    pub initial_imbalance: usize,
    pub max_initial_gap: usize,
}

/// Moves host vertices along F2 arcs (or random-center two-step paths)
/// from surplus clusters to deficit clusters until `|V_i| = L_i`
/// everywhere. Moved vertices must clear the `delta*m` degree floor into
/// every clique partner of their destination.
pub fn balance_loads(
    part: &RegularPartition,
    loads: &[usize],
    f2: &MoveGraph,
    factor: &CliqueFactor,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(RegularPartition, BalanceReport)> {
    let l = part.num_clusters();
    if loads.len() != l {
        return Err(Error::InvalidArgument(
            "load vector length does not match the cluster count".into(),
        ));
    }
    let total_size: usize = part.clusters().iter().map(|c| c.len()).sum();
    let total_load: usize = loads.iter().sum();
    if total_size != total_load {
        return Err(Error::InvalidArgument(format!(
            "total cluster size {total_size} differs from total load {total_load}"
        )));
    }
    let mut clusters = part.clusters().to_vec();
    let m = part.cluster_size() as f64;
    // Per-destination mover floors: a vertex joining cluster `to` must
    // carry at least max(delta*m, (pair density - eps)|V_p|) pruned
    // neighbors into every partner p, measured against the entry-time
    // clusters the certificates describe. The density term keeps
    // transplants from arriving with token connectivity; when it blocks
    // every route the sweep falls back to the bare delta*m floor.
    let floors_at = |strict: bool| -> Vec<Option<Vec<(usize, f64)>>> {
        (0..l)
            .map(|to| {
                factor.partners(to).map(|partners| {
                    partners
                        .into_iter()
                        .map(|p| {
                            let scale = if strict {
                                let density = part
                                    .pruned()
                                    .density(&part.clusters()[to], &part.clusters()[p])
                                    .unwrap_or(0.0);
                                (density - part.eps_effective())
                                    * part.clusters()[p].len() as f64
                            } else {
                                0.0
                            };
                            (p, scale.max(delta * m))
                        })
                        .collect()
                })
            })
            .collect()
    };
    let strict_floor = floors_at(true);
    let relaxed_floor = floors_at(false);
    let gap = |clusters: &[VertexSet], i: usize| clusters[i].len() as isize - loads[i] as isize;
    let initial: Vec<isize> = (0..l).map(|i| gap(&clusters, i)).collect();
    let initial_imbalance: usize = initial.iter().map(|g| g.unsigned_abs()).sum();
    let max_initial_gap = initial.iter().map(|g| g.unsigned_abs()).max().unwrap_or(0);

    let mut moves = 0usize;
    loop {
        let mut surplus: Vec<usize> = (0..l).filter(|&i| gap(&clusters, i) > 0).collect();
        let mut deficit: Vec<usize> = (0..l).filter(|&i| gap(&clusters, i) < 0).collect();
        if surplus.is_empty() && deficit.is_empty() {
            break;
        }
        surplus.sort_by_key(|&i| (std::cmp::Reverse(gap(&clusters, i)), i));
        deficit.sort_by_key(|&i| (gap(&clusters, i), i));
        // Largest gaps first; on a blocked route, fall through to other
        // pairs and centers before giving up.
        let mut any_path = false;
        // Candidate relay paths from j to i through F2, shortest first.
        // Two-step paths cover the regime the margin arguments promise;
        // with very few cliques the out- and in-neighborhoods of opposite
        // cliques can be disjoint halves, and a third hop bridges them.
        let paths_between = |j: usize, i: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
            let mut paths = Vec::new();
            if f2.has_arc(j, i) {
                paths.push(vec![j, i]);
            }
            let mut centers: Vec<usize> = f2
                .out_neighbors(j)
                .into_iter()
                .filter(|&p| p != i && p != j && f2.has_arc(p, i))
                .collect();
            if centers.len() > 1 {
                let first = rng.gen_range(0..centers.len());
                centers.swap(0, first);
            }
            for p in centers {
                paths.push(vec![j, p, i]);
            }
            for p in f2.out_neighbors(j) {
                if p == i || p == j {
                    continue;
                }
                for q in f2.out_neighbors(p) {
                    if q != i && q != j && q != p && f2.has_arc(q, i) {
                        paths.push(vec![j, p, q, i]);
                    }
                }
            }
            paths.truncate(64);
            paths
        };
        let mut routed_now = false;
        'tiers: for floors in [&strict_floor, &relaxed_floor] {
            let floors_for = |to: usize| -> Result<&Vec<(usize, f64)>> {
                floors[to]
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument(format!("cluster {to} is uncovered")))
            };
            for &j in &surplus {
                for &i in &deficit {
                    for path in paths_between(j, i, rng) {
                        any_path = true;
                        // Move one vertex along every hop; undo on a
                        // blocked hop and try the next path.
                        let mut done: Vec<(usize, usize, usize)> = Vec::new();
                        let mut complete = true;
                        for hop in path.windows(2) {
                            let (a, b) = (hop[0], hop[1]);
                            match move_one(part, &mut clusters, a, b, floors_for(b)?)? {
                                Some(v) => done.push((a, b, v)),
                                None => {
                                    complete = false;
                                    break;
                                }
                            }
                        }
                        if complete {
                            moves += done.len();
                            routed_now = true;
                            break 'tiers;
                        }
                        for &(a, b, v) in done.iter().rev() {
                            clusters[b].remove(v);
                            clusters[a].insert(v);
                        }
                    }
                }
            }
        }
        if !routed_now {
            if !any_path {
                return Err(Error::HostRegime(
                    "no direct arc and no two-step path between any surplus and \
                     deficit cluster"
                        .into(),
                ));
            }
            let sizes: Vec<usize> = clusters.iter().map(|c| c.len()).collect();
            return Err(Error::Inconsistency(format!(
                "every move route is blocked: no vertex clears the degree floor \
                 on any surplus-to-deficit path (sizes {sizes:?}, loads {loads:?}) — \
                 certified densities cannot be right"
            )));
        }
    }
    let out = part.replace_clusters(clusters, part.v0().clone())?;
    Ok((
        out,
        BalanceReport {
            moves,
            initial_imbalance,
            max_initial_gap,
        },
    ))
}

/// Relocates the best-qualified vertex of `from` into `to` and returns it:
/// among the residents clearing every per-partner floor, the one with the
/// highest worst partner degree goes. `None` when no resident qualifies
/// (the caller tries another route).
///
/// Floors are measured against the partner clusters as they stood at
/// balance entry: the pair certificates speak about that content, and a
/// mid-flight snapshot can be arbitrarily unrepresentative when loads are
/// skewed.
fn move_one(
    part: &RegularPartition,
    clusters: &mut [VertexSet],
    from: usize,
    to: usize,
    floors: &[(usize, f64)],
) -> Result<Option<usize>> {
    let mut best: Option<(usize, usize)> = None; // (min partner degree, vertex)
    for v in clusters[from].iter() {
        let mut worst = usize::MAX;
        let mut ok = true;
        for &(p, floor) in floors {
            let deg = part.pruned().degree_into(v, &part.clusters()[p])?;
            worst = worst.min(deg);
            if (deg as f64) < floor {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        best = match best {
            None => Some((worst, v)),
            Some((bw, bv)) if worst > bw || (worst == bw && v < bv) => Some((worst, v)),
            keep => keep,
        };
    }
    let Some((_, v)) = best else {
        return Ok(None);
    };
    clusters[from].remove(v);
    clusters[to].insert(v);
    Ok(Some(v))
}
