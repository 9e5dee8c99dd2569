use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context as _};
use serde::Serialize;
use serde_json::json;

use corrsync_core::baselines::{default_epsilon, direct_propagate, mst_propagate, shortest_path_propagate, EdgeCost, TreeStructure};
use corrsync_core::benchmark::{
    collection_oracles, corrupt_maps, grid, run_benchmark, stability_report, synth_collection, BenchmarkConfig, Method,
    SynthConfig, SynthMaps,
};
use corrsync_core::collection::io::{format_map, load_collection, save_collection_annotated, write_atomic, LoadOptions};
use corrsync_core::collection::{intra_metric, DEFAULT_BETA};
use corrsync_core::flow::{directed_flow_matrix, PathOptions};
use corrsync_core::matching::{
    fps_landmarks, gp_partial_match, interpolate_dense, joint_fps_refine, shape_extrema, stable_curvature_match, LandmarkSet,
    MatchList, DEFAULT_INTERPOLATION_NEIGHBORS,
};
use corrsync_core::soft::{frechet_mean, mle, path_distribution, propagate_soft, QuerySet};
use corrsync_core::ShapeCollection;
use corrsync_geolab::lattice::{lattice_walks, LatticeGraph, WalkMode};
use corrsync_geolab::sphere::{holonomy_trials, trials_csv};

use crate::config::RunConfig;
use crate::output::{write_json, write_text, Provenance};
use crate::{Command, UsageError};

pub fn dispatch(command: Command, config: &RunConfig) -> anyhow::Result<()> {
    let name = command.name();
    match command {
        Command::Flow { paths, source, target, out, matrix, paths_out, .. } => {
            flow(config, name, &source, &target, paths.strict, out, matrix, paths_out)
        }
        Command::Propagate { paths, source, target, points, out, .. } => {
            propagate(config, name, &source, &target, paths.strict, &points, out)
        }
        Command::Baseline { method, source, target, edge_cost, out, .. } => {
            baseline(config, name, &method, &source, &target, &edge_cost, out)
        }
        Command::Match { paths, pair, landmarks, hops, out, dense, .. } => {
            matching(config, name, &pair, paths.strict, landmarks, hops, out, dense)
        }
        Command::Benchmark {
            strict, methods, lambda, to_mean, edge_cost, grid_points, grid_max, unnormalized, out, svg, ..
        } => benchmark(
            config,
            name,
            BenchArgs { strict, methods, lambda, to_mean, edge_cost, grid_points, grid_max, unnormalized, out, svg },
        ),
        Command::Lattice { mode, walks, side, source, target, max_steps, out, summary } => {
            lattice(config, name, &mode, walks, side, source, target, max_steps, out, summary)
        }
        Command::Holonomy { trials, steps, out } => holonomy(config, name, trials, steps, out),
        Command::Synth { shapes, points, amplitude, landmarks, maps, corrupt, corrupt_subset, out, .. } => {
            synth(config, name, shapes, points, amplitude, landmarks, &maps, corrupt, corrupt_subset, out)
        }
        Command::Stability { paths, remove, compare, points, out, .. } => {
            stability(config, name, paths.strict, remove.as_deref(), compare.as_deref(), &points, out)
        }
    }
}

fn load(config: &RunConfig, manifest: &Path) -> anyhow::Result<ShapeCollection> {
    let options = LoadOptions { allow_duplicates: config.allow_duplicates, beta: config.beta };
    let c = load_collection(manifest, &options).with_context(|| format!("loading {}", manifest.display()))?;
    log::info!("loaded {} shapes from {}", c.len(), manifest.display());
    Ok(c)
}

fn load_main(config: &RunConfig) -> anyhow::Result<ShapeCollection> {
    load(config, config.manifest()?)
}

fn path_options(config: &RunConfig, strict: bool) -> PathOptions {
    PathOptions { lambda: config.lambda, max_paths: config.max_paths, strict }
}

fn query_set(points: &str) -> Result<QuerySet, UsageError> {
    match points {
        "landmarks" => Ok(QuerySet::Landmarks),
        "all" => Ok(QuerySet::All),
        other => Err(UsageError(format!("--points must be `landmarks` or `all`, got {other:?}"))),
    }
}

fn parse<T: FromStr>(flag: &str, value: &str) -> Result<T, UsageError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| UsageError(format!("--{flag}: {e}")))
}

#[allow(clippy::too_many_arguments)]
fn flow(
    config: &RunConfig,
    name: &str,
    source: &str,
    target: &str,
    strict: bool,
    out: Option<PathBuf>,
    matrix: Option<PathBuf>,
    paths_out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let c = load_main(config)?;
    let (i, j) = (c.index_of(source)?, c.index_of(target)?);
    let flow = directed_flow_matrix(c.graph(), i, j)?;
    let id = |v: usize| c.shape(v).id.as_str();
    let prov = Provenance::new(name, config, json!({ "source": source, "target": target, "strict": strict }));

    let mut edges = String::from("from,to,weight,distance\n");
    for m in 0..flow.len() {
        for e in flow.out_edges(m) {
            let _ = writeln!(edges, "{},{},{},{}", id(m), id(e.to), e.weight, e.dist);
        }
    }
    let out = config.output(out.as_deref(), "flow.csv");
    write_text(&out, &prov, &[format!("edges: {}", flow.edge_count())], &edges)?;

    let mut dense = String::from("id");
    for v in 0..flow.len() {
        let _ = write!(dense, ",{}", id(v));
    }
    dense.push('\n');
    for (m, row) in flow.dense().iter().enumerate() {
        dense.push_str(id(m));
        for x in row {
            let _ = write!(dense, ",{x}");
        }
        dense.push('\n');
    }
    let matrix = match matrix {
        Some(p) => config.output(Some(&p), ""),
        None => {
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("flow");
            out.with_file_name(format!("{stem}_matrix.csv"))
        }
    };
    write_text(&matrix, &prov, &[], &dense)?;

    if let Some(p) = paths_out {
        let dist = path_distribution(&c, i, j, &path_options(config, strict))?;
        let mut body = String::from("path,energy,weight,probability\n");
        for (rec, prob) in dist.iter() {
            let names: Vec<&str> = rec.vertices.iter().map(|&v| id(v)).collect();
            let _ = writeln!(body, "{},{},{},{}", names.join(" "), rec.energy, rec.weight, prob);
        }
        write_text(&config.output(Some(&p), ""), &prov, &[format!("paths: {}", dist.len())], &body)?;
    }
    log::info!("{} flow edges from {source} to {target}", flow.edge_count());
    Ok(())
}

#[derive(Serialize)]
struct SoftRow {
    source_index: usize,
    support: Vec<(usize, f64)>,
}

#[derive(Serialize)]
struct SoftOutput {
    source: String,
    target: String,
    lambda: f64,
    beta: f64,
    path_count: usize,
    rows: Vec<SoftRow>,
    mle: Vec<(usize, usize)>,
    frechet: Vec<(usize, usize)>,
}

fn propagate(
    config: &RunConfig,
    name: &str,
    source: &str,
    target: &str,
    strict: bool,
    points: &str,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let query = query_set(points)?;
    let c = load_main(config)?;
    let (i, j) = (c.index_of(source)?, c.index_of(target)?);
    let vertices = query.vertices(&c, i);
    if vertices.is_empty() {
        bail!("shape {source} has no landmarks; use --points all");
    }
    let soft = propagate_soft(&c, i, j, &path_options(config, strict), &vertices)?;
    let oracle = intra_metric(c.shape(j), config.neighbors)?;
    let body = SoftOutput {
        source: source.into(),
        target: target.into(),
        lambda: soft.lambda,
        beta: soft.beta,
        path_count: soft.path_count,
        rows: soft
            .rows
            .iter()
            .map(|(v, d)| SoftRow { source_index: *v, support: d.entries().to_vec() })
            .collect(),
        mle: mle(&soft)?.pairs,
        frechet: frechet_mean(&soft, &oracle)?.pairs,
    };
    let prov = Provenance::new(name, config, json!({ "source": source, "target": target, "points": points, "strict": strict }));
    write_json(&config.output(out.as_deref(), "soft.json"), &prov, &body)?;
    log::info!("{} rows over {} paths", body.rows.len(), body.path_count);
    Ok(())
}

fn baseline(
    config: &RunConfig,
    name: &str,
    method: &str,
    source: &str,
    target: &str,
    edge_cost: &str,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let cost: EdgeCost = parse("edge-cost", edge_cost)?;
    let c = load_main(config)?;
    let (i, j) = (c.index_of(source)?, c.index_of(target)?);
    let mut params = json!({ "method": method, "source": source, "target": target });
    let (map, path) = match method {
        "direct" => (direct_propagate(&c, i, j)?, vec![i, j]),
        "mst" => mst_propagate(&c, &TreeStructure::kruskal(c.graph()), i, j)?,
        "shortest" => {
            let eps = config.epsilon.unwrap_or_else(|| default_epsilon(c.graph()));
            params["epsilon"] = json!(eps);
            params["edge_cost"] = json!(cost);
            shortest_path_propagate(&c, i, j, eps, cost)?
        }
        other => return Err(UsageError(format!("--method must be direct, mst or shortest, got {other:?}")).into()),
    };
    let names: Vec<&str> = path.iter().map(|&v| c.shape(v).id.as_str()).collect();
    let prov = Provenance::new(name, config, params);
    let out = config.output(out.as_deref(), "map.csv");
    write_text(&out, &prov, &[format!("path: {}", names.join(" > "))], &format_map(&map))?;
    log::info!("{method} path {}", names.join(" > "));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn matching(
    config: &RunConfig,
    name: &str,
    pair: &str,
    strict: bool,
    landmarks: Option<usize>,
    hops: usize,
    out: Option<PathBuf>,
    dense: Option<PathBuf>,
) -> anyhow::Result<()> {
    let Some((a, b)) = pair.split_once(',') else {
        return Err(UsageError(format!("--pair must be `A,B`, got {pair:?}")).into());
    };
    let radius = config
        .radius
        .ok_or_else(|| UsageError("a ball radius is required (--radius or `radius` in the config file)".into()))?;
    let c = load_main(config)?;
    let (i, j) = (c.index_of(a)?, c.index_of(b)?);
    let (si, sj) = (c.shape(i), c.shape(j));
    let (oi, oj) = (intra_metric(si, config.neighbors)?, intra_metric(sj, config.neighbors)?);
    let pick = |shape, oracle| -> anyhow::Result<LandmarkSet> {
        let provided = LandmarkSet::provided(shape);
        Ok(match landmarks {
            None if !provided.vertices.is_empty() => provided,
            n => fps_landmarks(shape, n.unwrap_or(config.max_matches).min(shape.len()), 0, oracle)?,
        })
    };
    let (li, lj) = (pick(si, &oi)?, pick(sj, &oj)?);
    let opts = path_options(config, strict);
    let soft_ij = propagate_soft(&c, i, j, &opts, &li.vertices)?;
    let soft_ji = propagate_soft(&c, j, i, &opts, &lj.vertices)?;
    let partial = gp_partial_match(&soft_ij, &soft_ji, &li, &lj, radius, &oi, &oj)?;
    let seed = match config.delta {
        Some(delta) => {
            let (ei, ej) = (shape_extrema(si, &oi, hops)?, shape_extrema(sj, &oj, hops)?);
            stable_curvature_match(si, sj, &ei, &ej, delta, &oi, &oj)?
        }
        None => MatchList::default(),
    };
    let refined = joint_fps_refine(&seed, &partial, config.max_matches, &oi, &oj)?;

    let mut body = String::from("source_index,target_index,provenance\n");
    for m in &refined.matches {
        let _ = writeln!(body, "{},{},{}", m.source, m.target, m.provenance);
    }
    let unmatched: Vec<String> = partial.unmatched.iter().map(|v| v.to_string()).collect();
    let prov = Provenance::new(
        name,
        config,
        json!({ "pair": [a, b], "landmarks": [li.method, lj.method], "hops": hops, "strict": strict }),
    );
    let extra = [
        format!("curvature matches: {}, partial matches: {}", seed.len(), partial.len()),
        format!("unmatched source landmarks: {}", unmatched.join(" ")),
    ];
    write_text(&config.output(out.as_deref(), "matches.csv"), &prov, &extra, &body)?;
    if let Some(p) = dense {
        let map = interpolate_dense(&refined, si, sj, &oi, DEFAULT_INTERPOLATION_NEIGHBORS)?;
        write_text(&config.output(Some(&p), ""), &prov, &[], &format_map(&map))?;
    }
    log::info!("{} matches ({} curvature seeds)", refined.len(), seed.len());
    Ok(())
}

struct BenchArgs {
    strict: bool,
    methods: Vec<String>,
    lambda: Vec<f64>,
    to_mean: bool,
    edge_cost: String,
    grid_points: usize,
    grid_max: f64,
    unnormalized: bool,
    out: Option<PathBuf>,
    svg: Option<PathBuf>,
}

fn benchmark(config: &RunConfig, name: &str, args: BenchArgs) -> anyhow::Result<()> {
    let methods = args
        .methods
        .iter()
        .map(|m| parse::<Method>("methods", m))
        .collect::<Result<Vec<_>, _>>()?;
    let lambdas = if args.lambda.is_empty() { vec![config.lambda] } else { args.lambda.clone() };
    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(UsageError(format!("--lambda must lie in [0, 1], got {l}")).into());
    }
    if args.grid_points == 0 || !(args.grid_max > 0.0) {
        return Err(UsageError("the error grid needs at least one point and a positive maximum".into()).into());
    }
    let cost: EdgeCost = parse("edge-cost", &args.edge_cost)?;
    let c = load_main(config)?;
    let oracles = collection_oracles(&c, config.neighbors)?;
    let bench = BenchmarkConfig {
        methods,
        lambdas: lambdas.clone(),
        to_mean: args.to_mean,
        grid: grid(args.grid_points, args.grid_max),
        normalize: !args.unnormalized,
        epsilon: config.epsilon,
        edge_cost: cost,
        max_paths: config.max_paths,
        strict: args.strict,
    };
    let report = run_benchmark(&c, &bench, &oracles)?;
    let prov = Provenance::new(
        name,
        config,
        json!({
            "methods": args.methods, "lambdas": lambdas, "to_mean": args.to_mean, "edge_cost": cost,
            "epsilon": report.epsilon, "grid_points": args.grid_points, "grid_max": args.grid_max,
            "normalized": !args.unnormalized, "strict": args.strict,
        }),
    );
    let extra: Vec<String> = report
        .curves
        .iter()
        .map(|cv| match cv.lambda {
            Some(l) => format!("{} lambda {l}: mean error {}, auc {}", cv.method, cv.mean_error, cv.auc()),
            None => format!("{}: mean error {}, auc {}", cv.method, cv.mean_error, cv.auc()),
        })
        .collect();
    write_text(&config.output(args.out.as_deref(), "curves.csv"), &prov, &extra, &report.to_csv())?;
    if let Some(p) = args.svg {
        let path = config.output(Some(&p), "");
        let mut text: String = prov.lines().iter().map(|l| format!("<!-- {} -->\n", l.replace("--", "- -"))).collect();
        text.push_str(&report.to_svg());
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        write_atomic(&path, &text)?;
    }
    for line in &extra {
        log::info!("{line}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn lattice(
    config: &RunConfig,
    name: &str,
    mode: &str,
    walks: usize,
    side: usize,
    source: Option<usize>,
    target: Option<usize>,
    max_steps: usize,
    out: Option<PathBuf>,
    summary: Option<PathBuf>,
) -> anyhow::Result<()> {
    let mode: WalkMode = parse("mode", mode)?;
    let l = LatticeGraph::new(side)?;
    let (s, t) = (source.unwrap_or(0), target.unwrap_or(l.len() - 1));
    let set = lattice_walks(&l, mode, s, t, walks, config.seed, max_steps)?;
    let prov = Provenance::new(
        name,
        config,
        json!({ "mode": mode, "walks": walks, "side": side, "source": s, "target": t, "max_steps": max_steps }),
    );
    let st = &set.stats;
    let extra = [
        format!("reached: {}, discarded: {}", st.reached, st.discarded),
        format!("max deviation: {}, mean max deviation: {}", st.max_deviation, st.mean_max_deviation),
    ];
    write_text(&config.output(out.as_deref(), "walks.csv"), &prov, &extra, &set.to_csv(&l))?;
    if let Some(p) = summary {
        write_text(&config.output(Some(&p), ""), &prov, &extra, &set.summary_csv())?;
    }
    log::info!("{} walks reached the target, {} discarded", st.reached, st.discarded);
    Ok(())
}

fn holonomy(config: &RunConfig, name: &str, trials: usize, steps: usize, out: Option<PathBuf>) -> anyhow::Result<()> {
    let results = holonomy_trials(trials, config.seed, steps)?;
    let violations = results.iter().filter(|t| !t.holonomy.satisfied).count();
    let gap = results
        .iter()
        .map(|t| (t.holonomy.deficit - t.holonomy.deficit_integrated).abs())
        .fold(0.0, f64::max);
    let prov = Provenance::new(name, config, json!({ "trials": trials, "steps": steps }));
    let extra = [format!("bound violations: {violations}, max closed-form vs integrated gap: {gap:e}")];
    write_text(&config.output(out.as_deref(), "holonomy.csv"), &prov, &extra, &trials_csv(&results))?;
    log::info!("{}", extra[0]);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth(
    config: &RunConfig,
    name: &str,
    shapes: usize,
    points: usize,
    amplitude: f64,
    landmarks: usize,
    maps: &str,
    corrupt: f64,
    corrupt_subset: f64,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let maps = match maps {
        "aligned" => SynthMaps::Aligned,
        "ground-truth" => SynthMaps::GroundTruth,
        other => return Err(UsageError(format!("--maps must be `aligned` or `ground-truth`, got {other:?}")).into()),
    };
    let synth = SynthConfig {
        n_shapes: shapes,
        n_points: points,
        amplitude,
        seed: config.seed,
        landmarks,
        maps,
        beta: config.beta.unwrap_or(DEFAULT_BETA),
        allow_duplicates: config.allow_duplicates,
        ..SynthConfig::default()
    };
    let mut c = synth_collection(&synth)?;
    let mut log_value = serde_json::Value::Null;
    if corrupt > 0.0 {
        let (bad, log) = corrupt_maps(&c, corrupt, corrupt_subset, config.seed)?;
        log::info!("scrambled maps of {} shape pairs", log.pairs.len());
        log_value = serde_json::to_value(&log)?;
        c = bad;
    }
    let prov = Provenance::new(
        name,
        config,
        json!({ "synth": synth, "corrupt": corrupt, "corrupt_subset": corrupt_subset, "corruption": log_value }),
    );
    let dir = config.output(out.as_deref(), "synth");
    let manifest = save_collection_annotated(&c, &dir, &prov.lines(), Some(prov.value()))?;
    log::info!("wrote {}", manifest.display());
    Ok(())
}

fn stability(
    config: &RunConfig,
    name: &str,
    strict: bool,
    remove: Option<&str>,
    compare: Option<&Path>,
    points: &str,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let query = query_set(points)?;
    let before = load_main(config)?;
    let (after, params) = match (remove, compare) {
        (Some(id), None) => (before.without_shape(before.index_of(id)?)?, json!({ "remove": id })),
        (None, Some(m)) => (load(config, m)?, json!({ "compare": m })),
        _ => return Err(UsageError("give exactly one of --remove or --compare".into()).into()),
    };
    let report = stability_report(&before, &after, &path_options(config, strict), &query)?;
    let mut params = params;
    params["points"] = json!(points);
    params["strict"] = json!(strict);
    let prov = Provenance::new(name, config, params);
    write_json(&config.output(out.as_deref(), "stability.json"), &prov, &report)?;
    log::info!(
        "MST edges added {}, removed {}; flow diff {}; max TV {}; MST path changes {}",
        report.mst_added.len(),
        report.mst_removed.len(),
        report.total_flow_diff(),
        report.max_tv(),
        report.mst_path_changes()
    );
    Ok(())
}
