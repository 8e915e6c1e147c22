//! Command-line driver for the embedding pipeline.
//!
//! Exit codes: 0 on success, 1 when a pipeline stage or verification
//! fails, 2 on argument or I/O errors. `WELLSEP_OUT_DIR` supplies the
//! default output directory when `--out` is not given.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wellsep_core::assignment::Parameters;
use wellsep_core::embedder::{brute_force_embed, verify_embedding};
use wellsep_core::error::Error;
use wellsep_core::factor::{find_kfactor, verify_factor_detail};
use wellsep_core::graph::{Graph, VertexSet};
use wellsep_core::harness::experiment::{run_experiment, ExperimentMatrix};
use wellsep_core::harness::gen::{generate_h, generate_host, HostSpec, SubgraphSpec};
use wellsep_core::harness::pipeline::{
    run_pipeline, run_pipeline_degenerate, CertifyKind, PipelineConfig,
};
use wellsep_core::lp::solve_assignment_lp;
use wellsep_core::regularity::{degree_form_prune, reduced_graph, CertifyMode, PairStatus};

#[derive(Parser)]
#[command(name = "wellsep", version, about = "Embed well-separable bounded-degree spanning subgraphs into dense hosts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the exceptional-vertex assignment LP and check duality.
    Lp {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        gamma2: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find a clique factor of a reduced graph given as an edge list.
    Factor {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prune a host against a supplied cluster partition and report pair
    /// certificates plus the reduced graph.
    Decompose {
        #[arg(long)]
        graph: PathBuf,
        /// JSON file with a list of clusters (lists of vertex ids);
        /// alternative to --ell.
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Split vertices 0..l*m into l consecutive equal clusters.
        #[arg(long)]
        ell: Option<usize>,
        #[arg(long, default_value_t = 0.25)]
        d: f64,
        #[arg(long, default_value_t = 0.3)]
        eps: f64,
        /// Certification mode: density | heuristic | exact.
        #[arg(long, default_value = "heuristic")]
        certify: String,
        #[arg(long, default_value_t = 64)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a planted host; writes host.edges, clusters.json,
    /// factor.json, report.json.
    GenHost {
        /// HostSpec as JSON.
        #[arg(long)]
        params: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a subgraph family instance; writes h.edges, witness.json.
    GenH {
        /// SubgraphSpec as JSON.
        #[arg(long)]
        params: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline through balancing and emit the cluster assignment.
    Assign {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the full pipeline and emit the embedding.
    Embed {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check a serialized embedding against H and G.
    Verify {
        #[arg(long)]
        h: PathBuf,
        #[arg(long)]
        g: PathBuf,
        /// JSON array of G-vertex ids, indexed by H-vertex.
        #[arg(long)]
        embedding: PathBuf,
    },
    /// Exact embedding search for tiny H (at most 12 vertices).
    BruteForce {
        #[arg(long)]
        h: PathBuf,
        #[arg(long)]
        g: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment matrix from a JSON file.
    Experiment {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    h: PathBuf,
    #[arg(long)]
    g: PathBuf,
    /// Cluster partition JSON; omit to run the degenerate single-vertex
    /// cluster mode (tiny instances).
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Pipeline parameters as JSON; defaults derive from gamma and k.
    #[arg(long)]
    params: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Pipeline parameter overrides accepted on the command line.
#[derive(serde::Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ParamsJson {
    k: Option<usize>,
    gamma: Option<f64>,
    eps: Option<f64>,
    d: Option<f64>,
    delta: Option<f64>,
    cert_eps: Option<f64>,
    certify: Option<String>,
    trials: Option<usize>,
    rho: Option<f64>,
    retries: Option<usize>,
    alpha: Option<f64>,
    max_degree: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_)
                | Error::Parse { .. }
                | Error::Generation(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Regime(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn out_dir(explicit: Option<PathBuf>) -> Option<PathBuf> {
    explicit.or_else(|| std::env::var_os("WELLSEP_OUT_DIR").map(PathBuf::from))
}

fn write_or_print(out: Option<PathBuf>, name: &str, text: &str) -> Result<(), Error> {
    match out_dir(out) {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            fs::write(dir.join(name), text)?;
            println!("wrote {}", dir.join(name).display());
            Ok(())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_graph(path: &Path) -> Result<Graph, Error> {
    Graph::parse_edge_list(&fs::read_to_string(path)?)
}

fn load_clusters(path: &Path, n: usize) -> Result<Vec<VertexSet>, Error> {
    let raw: Vec<Vec<usize>> = serde_json::from_str(&fs::read_to_string(path)?)?;
    raw.into_iter()
        .map(|ids| VertexSet::from_iter(n, ids))
        .collect()
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Lp { k, gamma2, out } => {
            let sol = solve_assignment_lp(k, gamma2)?;
            write_or_print(out, "lp.json", &serde_json::to_string_pretty(&sol)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Factor { graph, k, out } => {
            let gr = load_graph(&graph)?;
            match find_kfactor(&gr, k)? {
                Some(f) => {
                    verify_factor_detail(&gr, &f, k)
                        .map_err(Error::Structural)?;
                    write_or_print(out, "factor.json", &serde_json::to_string_pretty(&f)?)?;
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    eprintln!("no K_{k}-factor found");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Decompose {
            graph,
            clusters,
            ell,
            d,
            eps,
            certify,
            trials,
            seed,
            out,
        } => {
            let g = load_graph(&graph)?;
            let clusters = match (clusters, ell) {
                (Some(path), None) => load_clusters(&path, g.n())?,
                (None, Some(l)) => {
                    if l == 0 || g.n() / l == 0 {
                        return Err(Error::InvalidArgument(
                            "--ell must divide into at least one vertex per cluster".into(),
                        ));
                    }
                    let m = g.n() / l;
                    (0..l)
                        .map(|i| VertexSet::from_iter(g.n(), i * m..(i + 1) * m))
                        .collect::<Result<Vec<_>, _>>()?
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "give exactly one of --clusters or --ell".into(),
                    ))
                }
            };
            let mode = match certify.as_str() {
                "density" => CertifyMode::DensityOnly,
                "exact" => CertifyMode::Exact,
                "heuristic" => CertifyMode::Heuristic { trials, seed },
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown certify mode `{other}`"
                    )))
                }
            };
            let part = degree_form_prune(&g, clusters, d, eps, mode)?;
            let reduced = reduced_graph(&part, d)?;
            let l = part.num_clusters();
            let pairs: Vec<serde_json::Value> = (0..l)
                .flat_map(|i| ((i + 1)..l).map(move |j| (i, j)))
                .map(|(i, j)| {
                    let status = part.pair_status(i, j);
                    let mut v = serde_json::json!({"i": i, "j": j});
                    match status {
                        PairStatus::Kept { density } => {
                            v["status"] = "kept".into();
                            v["density"] = (*density).into();
                        }
                        PairStatus::EmptiedLowDensity { density } => {
                            v["status"] = "low-density".into();
                            v["density"] = (*density).into();
                        }
                        PairStatus::EmptiedRefuted { certificate } => {
                            v["status"] = "refuted".into();
                            v["certificate"] = serde_json::to_value(certificate).unwrap();
                        }
                    }
                    v
                })
                .collect();
            let summary = serde_json::json!({
                "clusters": l,
                "cluster_size": part.cluster_size(),
                "v0": part.v0().to_vec(),
                "eps": part.eps(),
                "d": part.d(),
                "pairs": pairs,
                "reduced_edges": reduced.graph.edges().collect::<Vec<_>>(),
                "degree_report": reduced.degree_report,
            });
            write_or_print(out, "decompose.json", &serde_json::to_string_pretty(&summary)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::GenHost { params, out } => {
            let spec: HostSpec = serde_json::from_str(&params)?;
            let host = generate_host(&spec)?;
            let dir = out_dir(out).unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("host.edges"), host.graph.to_edge_list_string())?;
            let clusters: Vec<Vec<usize>> = host.clusters.iter().map(|c| c.to_vec()).collect();
            fs::write(dir.join("clusters.json"), serde_json::to_string(&clusters)?)?;
            fs::write(
                dir.join("factor.json"),
                serde_json::to_string_pretty(&host.factor)?,
            )?;
            fs::write(
                dir.join("report.json"),
                serde_json::to_string_pretty(&host.report)?,
            )?;
            println!(
                "wrote host n={} to {}",
                host.graph.n(),
                dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::GenH { params, out } => {
            let spec: SubgraphSpec = serde_json::from_str(&params)?;
            let gen = generate_h(&spec)?;
            let dir = out_dir(out).unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("h.edges"), gen.graph.to_edge_list_string())?;
            let witness = match &gen.witness {
                wellsep_core::harness::gen::SepWitness::Separation(sep) => {
                    serde_json::json!({"kind": "separation", "value": serde_json::to_value(sep.to_data())?})
                }
                wellsep_core::harness::gen::SepWitness::Ordering(ord) => {
                    serde_json::json!({"kind": "ordering", "order": ord.order(), "width": ord.width()})
                }
                wellsep_core::harness::gen::SepWitness::None => {
                    serde_json::json!({"kind": "none"})
                }
            };
            fs::write(
                dir.join("witness.json"),
                serde_json::to_string_pretty(&witness)?,
            )?;
            println!("wrote H n={} to {}", gen.graph.n(), dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Assign { run } => run_and_emit(run, false),
        Command::Embed { run } => run_and_emit(run, true),
        Command::Verify { h, g, embedding } => {
            let h = load_graph(&h)?;
            let g = load_graph(&g)?;
            let phi: Vec<usize> = serde_json::from_str(&fs::read_to_string(embedding)?)?;
            match verify_embedding(&h, &g, &phi) {
                Ok(()) => {
                    println!("embedding valid");
                    Ok(ExitCode::SUCCESS)
                }
                Err(violation) => {
                    eprintln!("embedding invalid: {violation:?}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::BruteForce { h, g, out } => {
            let h = load_graph(&h)?;
            let g = load_graph(&g)?;
            match brute_force_embed(&h, &g)? {
                Some(emb) => {
                    write_or_print(out, "embedding.json", &serde_json::to_string(&emb.phi)?)?;
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    println!("no embedding exists (exhaustive)");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Experiment {
            matrix,
            trials,
            seed,
            out,
        } => {
            let mut matrix: ExperimentMatrix =
                serde_json::from_str(&fs::read_to_string(matrix)?)?;
            if let Some(t) = trials {
                matrix.trials = t;
            }
            if let Some(s) = seed {
                matrix.base_seed = s;
            }
            let dir = out_dir(out);
            let summary = run_experiment(
                &matrix,
                |cell| {
                    let params = Parameters::derived(cell.host.k, cell.host.gamma)
                        .expect("host spec gamma/k combinations are validated at generation");
                    PipelineConfig::for_params(params)
                },
                dir.as_deref(),
            )?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn build_config(raw: Option<&str>) -> Result<PipelineConfig, Error> {
    let p: ParamsJson = match raw {
        Some(text) => serde_json::from_str(text)?,
        None => ParamsJson::default(),
    };
    let k = p.k.unwrap_or(2);
    let gamma = p.gamma.unwrap_or(0.1);
    let base = Parameters::derived(k, gamma)?;
    let params = Parameters::new(
        k,
        gamma,
        p.eps.unwrap_or(base.eps),
        p.d.unwrap_or(base.d),
        p.delta.unwrap_or(base.delta),
    )?;
    let mut cfg = PipelineConfig::for_params(params);
    if let Some(e) = p.cert_eps {
        cfg.cert_eps = e;
    }
    if let Some(mode) = p.certify.as_deref() {
        cfg.certify = match mode {
            "density" => CertifyKind::DensityOnly,
            "exact" => CertifyKind::Exact,
            "heuristic" => CertifyKind::Heuristic {
                trials: p.trials.unwrap_or(64),
            },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown certify mode `{other}`"
                )))
            }
        };
    }
    if let Some(rho) = p.rho {
        cfg.embed.rho = rho;
    }
    if let Some(r) = p.retries {
        cfg.embed.retries = r;
    }
    if let Some(a) = p.alpha {
        cfg.alpha = a;
    }
    if let Some(md) = p.max_degree {
        cfg.max_degree = md;
    }
    Ok(cfg)
}

fn run_and_emit(run: RunArgs, want_embedding: bool) -> Result<ExitCode, Error> {
    let h = load_graph(&run.h)?;
    let g = load_graph(&run.g)?;
    let record = match &run.clusters {
        Some(path) => {
            let clusters = load_clusters(path, g.n())?;
            let cfg = build_config(run.params.as_deref())?;
            run_pipeline(&h, &g, clusters, None, &cfg, run.seed)
        }
        None => run_pipeline_degenerate(&h, &g, run.seed),
    };
    let dir = out_dir(run.out);
    if let Some(dir) = &dir {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("record.json"),
            serde_json::to_string_pretty(&record)?,
        )?;
    }
    for stage in &record.stages {
        println!(
            "{:>18}  {:?}  {}",
            stage.stage, stage.status, stage.detail
        );
    }
    if want_embedding {
        match (&record.embedding, record.success) {
            (Some(phi), true) => {
                let text = serde_json::to_string(phi)?;
                match &dir {
                    Some(dir) => {
                        fs::write(dir.join("embedding.json"), &text)?;
                        println!("wrote {}", dir.join("embedding.json").display());
                    }
                    None => println!("{text}"),
                }
                Ok(ExitCode::SUCCESS)
            }
            _ => Ok(ExitCode::from(1)),
        }
    } else {
        match &record.assignment {
            Some(kappa) => {
                let text = serde_json::to_string(kappa)?;
                match &dir {
                    Some(dir) => {
                        fs::write(dir.join("assignment.json"), &text)?;
                        println!("wrote {}", dir.join("assignment.json").display());
                    }
                    None => println!("{text}"),
                }
                Ok(ExitCode::SUCCESS)
            }
            None => Ok(ExitCode::from(1)),
        }
    }
}
