//! Property-based invariants across the graph layer and the randomized
//! stages, plus the Monte Carlo observations named alongside the
//! operations.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wellsep_core::assignment::{build_f1, distribute_v0, Parameters};
use wellsep_core::factor::find_kfactor;
use wellsep_core::graph::{chromatic_upper, Graph, VertexSet};
use wellsep_core::harness::gen::{generate_host, HostSpec, ReducedPattern};
use wellsep_core::regularity::reduced_graph;

fn arbitrary_graph() -> impl Strategy<Value = Graph> {
    (2usize..24).prop_flat_map(|n| {
        proptest::collection::vec(proptest::bool::ANY, n * (n - 1) / 2).prop_map(move |bits| {
            let mut edges = Vec::new();
            let mut idx = 0;
            for u in 0..n {
                for v in (u + 1)..n {
                    if bits[idx] {
                        edges.push((u, v));
                    }
                    idx += 1;
                }
            }
            Graph::from_edges(n, &edges).expect("generated edges are valid")
        })
    })
}

proptest! {
    #[test]
    fn density_symmetric_and_bounded(g in arbitrary_graph(), split in 1usize..23) {
        let n = g.n();
        let cut = split.min(n - 1);
        let x = VertexSet::from_iter(n, 0..cut).unwrap();
        let y = VertexSet::from_iter(n, cut..n).unwrap();
        let d_xy = g.density(&x, &y).unwrap();
        let d_yx = g.density(&y, &x).unwrap();
        prop_assert!((d_xy - d_yx).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&d_xy));
    }

    #[test]
    fn handshake_and_component_partition(g in arbitrary_graph()) {
        let total: usize = (0..g.n()).map(|v| g.degree(v)).sum();
        prop_assert_eq!(total, 2 * g.edge_count());
        let comps = g.components(&VertexSet::empty(g.n())).unwrap();
        let covered: usize = comps.iter().map(|c| c.len()).sum();
        prop_assert_eq!(covered, g.n());
        for (i, a) in comps.iter().enumerate() {
            for b in comps.iter().skip(i + 1) {
                prop_assert!(a.is_disjoint(b));
                prop_assert_eq!(g.edges_between(a, b).unwrap(), 0);
            }
        }
    }

    #[test]
    fn bridging_two_components_merges_exactly_them(g in arbitrary_graph()) {
        let comps = g.components(&VertexSet::empty(g.n())).unwrap();
        if comps.len() >= 2 {
            let u = comps[0].iter().next().unwrap();
            let v = comps[1].iter().next().unwrap();
            let mut edges: Vec<(usize, usize)> = g.edges().collect();
            edges.push((u.min(v), u.max(v)));
            let merged = Graph::from_edges(g.n(), &edges).unwrap();
            let after = merged.components(&VertexSet::empty(g.n())).unwrap();
            prop_assert_eq!(after.len(), comps.len() - 1);
        }
    }

    #[test]
    fn greedy_coloring_is_proper(g in arbitrary_graph()) {
        let coloring = chromatic_upper(&g);
        prop_assert!(coloring.is_proper(&g));
        prop_assert!(coloring.num_classes <= g.max_degree() + 1);
    }
}

/// Types shared across threads by the experiment runner.
#[test]
fn pipeline_types_are_send_and_sync() {
    fn check<T: Send + Sync>() {}
    check::<Graph>();
    check::<VertexSet>();
    check::<wellsep_core::regularity::RegularPartition>();
    check::<wellsep_core::factor::CliqueFactor>();
    check::<wellsep_core::separability::Separation>();
    check::<wellsep_core::harness::pipeline::ExperimentRecord>();
}

fn planted(seed: u64, pattern: ReducedPattern) -> wellsep_core::harness::gen::PlantedHost {
    generate_host(&HostSpec {
        ell: 4,
        m: 50,
        k: 2,
        gamma: 0.1,
        pattern,
        d_pair: 0.5,
        v0_frac: 0.01,
        seed,
    })
    .unwrap()
}

/// The absorption-degree observation: every exceptional vertex sees at
/// least (1/2 + gamma'') l admissible clusters on planted hosts.
#[test]
fn f1_degree_bound_observed_across_seeds() {
    let params = Parameters::derived(2, 0.1).unwrap();
    for seed in 0..40 {
        let pattern = if seed % 2 == 0 {
            ReducedPattern::Complete
        } else {
            ReducedPattern::RandomMinDegree
        };
        let host = planted(seed, pattern);
        let part = wellsep_core::regularity::degree_form_prune(
            &host.graph,
            host.clusters.clone(),
            params.d,
            0.3,
            wellsep_core::regularity::CertifyMode::DensityOnly,
        )
        .unwrap();
        let gr = reduced_graph(&part, params.d).unwrap();
        let factor = find_kfactor(&gr.graph, 2).unwrap().expect("factor exists");
        let f1 = build_f1(&host.graph, &part, &factor, params.delta).unwrap();
        let required = (0.5 + params.gamma2()) * part.num_clusters() as f64;
        if let Some(min_deg) = f1.min_left_degree {
            assert!(
                min_deg as f64 >= required,
                "seed {seed}: F1 min degree {min_deg} below {required:.2}"
            );
        }
        // Edge-rule soundness replay: every listed edge really clears the
        // degree floor into each clique partner.
        for (idx, &v) in f1.v0_vertices.iter().enumerate() {
            for &cl in &f1.neighbors[idx] {
                for p in factor.partners(cl).unwrap() {
                    let deg = host.graph.degree_into(v, &part.clusters()[p]).unwrap();
                    assert!(deg as f64 >= params.delta * part.cluster_size() as f64);
                }
            }
        }
    }
}

/// Distribution balance: the 4*k*eps*m spread target is met on the first
/// attempt in nearly every planted run.
#[test]
fn distribute_first_attempt_rate() {
    let params = Parameters::derived(2, 0.1).unwrap();
    let mut first_try = 0;
    let runs = 40;
    for seed in 0..runs {
        let host = planted(seed, ReducedPattern::Complete);
        let part = wellsep_core::regularity::degree_form_prune(
            &host.graph,
            host.clusters.clone(),
            params.d,
            0.3,
            wellsep_core::regularity::CertifyMode::DensityOnly,
        )
        .unwrap();
        let gr = reduced_graph(&part, params.d).unwrap();
        let factor = find_kfactor(&gr.graph, 2).unwrap().unwrap();
        let f1 = build_f1(&host.graph, &part, &factor, params.delta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, report) = distribute_v0(&part, &f1, &params, &mut rng).unwrap();
        if report.attempts == 1 {
            first_try += 1;
        }
    }
    assert!(
        first_try as f64 >= 0.95 * runs as f64,
        "first-try balance rate {first_try}/{runs}"
    );
}

/// Isolated vertices with a padded second color class concentrate near
/// the uniform load.
#[test]
fn concentration_isolated_vertices_near_uniform() {
    use wellsep_core::assignment::concentration_report;
    use wellsep_core::factor::CliqueFactor;
    use wellsep_core::graph::Coloring;
    let n = 400;
    let h = Graph::empty(n);
    let coloring = Coloring {
        colors: vec![0; n],
        num_classes: 1,
    };
    let factor = CliqueFactor::new(
        vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]],
        vec![],
        2,
        8,
    )
    .unwrap();
    // Every vertex its own component: t = n independent assignments.
    let areas: Vec<VertexSet> = (0..n)
        .map(|v| VertexSet::from_iter(n, [v]).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let report =
        concentration_report(&h, &areas, &coloring, 2, &factor, 200, &mut rng).unwrap();
    let expected = n as f64 / 8.0;
    // Deviations stay within a handful of standard deviations of the
    // binomial scale, far from the degenerate giant-component regime.
    let binom_std = (n as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
    for &dev in &report.max_deviations {
        assert!(dev <= 6.0 * binom_std, "deviation {dev} vs std {binom_std}");
    }
    assert!(report.load_std <= 2.0 * binom_std);
    assert!(expected > 0.0);
}

/// Success rates do not degrade as the host's degree margin grows.
#[test]
fn experiment_success_monotone_in_gamma() {
    use wellsep_core::harness::experiment::{run_experiment, ExperimentCell, ExperimentMatrix};
    use wellsep_core::harness::gen::{HFamily, SubgraphSpec};
    use wellsep_core::harness::pipeline::PipelineConfig;
    let cell = |gamma: f64| ExperimentCell {
        label: format!("gamma-{gamma}"),
        host: HostSpec {
            ell: 4,
            m: 50,
            k: 2,
            gamma,
            pattern: ReducedPattern::Complete,
            d_pair: 0.5,
            v0_frac: 0.01,
            seed: 0,
        },
        h: SubgraphSpec {
            family: HFamily::ComponentPaths { max_len: 10 },
            n: 0,
            seed: 0,
        },
    };
    let matrix = ExperimentMatrix {
        cells: vec![cell(0.05), cell(0.1), cell(0.2)],
        trials: 10,
        base_seed: 31,
    };
    let summary = run_experiment(
        &matrix,
        |c| PipelineConfig::for_params(Parameters::derived(c.host.k, c.host.gamma).unwrap()),
        None,
    )
    .unwrap();
    let rates: Vec<f64> = summary.cells.iter().map(|c| c.rate).collect();
    assert!(
        rates[2] >= rates[0],
        "success rate fell as gamma grew: {rates:?}"
    );
}
