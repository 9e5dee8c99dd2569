//! The `corrsync` command line.
//!
//! Exit codes: 0 on success, 1 on a domain error, 2 on a usage error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod config;
pub mod output;

use config::{FileConfig, RunConfig};

/// Bad arguments or configuration; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "corrsync", version, about = "Consistent correspondences across shape collections")]
pub struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for relative output paths.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CollectionArgs {
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Accept shapes at distance zero from each other.
    #[arg(long)]
    allow_duplicates: bool,
    /// Inverse temperature of edge weights `exp(-beta d^2)`.
    #[arg(long)]
    beta: Option<f64>,
    /// Neighbors per point in the geodesic graph of point clouds.
    #[arg(long)]
    neighbors: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct PathArgs {
    /// Minimum path weight.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_paths: Option<usize>,
    /// Apply the weight threshold to the direct path too.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Directed flow graph of one ordered pair of shapes.
    Flow {
        #[command(flatten)]
        collection: CollectionArgs,
        #[command(flatten)]
        paths: PathArgs,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        /// Edge list `from,to,weight,distance`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Binary adjacency matrix (default: next to the edge list).
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Admissible paths with energies and probabilities.
        #[arg(long = "paths-out")]
        paths_out: Option<PathBuf>,
    },
    /// Soft correspondence from one shape to another.
    Propagate {
        #[command(flatten)]
        collection: CollectionArgs,
        #[command(flatten)]
        paths: PathArgs,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        /// Source points to propagate: `landmarks` or `all`.
        #[arg(long, default_value = "landmarks")]
        points: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hard map by direct, spanning-tree or shortest-path propagation.
    Baseline {
        #[command(flatten)]
        collection: CollectionArgs,
        #[arg(long)]
        method: String,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        /// Pruning radius for `shortest` (default: smallest connecting value).
        #[arg(long)]
        epsilon: Option<f64>,
        /// `squared`, `linear` or `neg-log-weight`.
        #[arg(long, default_value = "squared")]
        edge_cost: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Landmark matching between two shapes.
    Match {
        #[command(flatten)]
        collection: CollectionArgs,
        #[command(flatten)]
        paths: PathArgs,
        /// `A,B`
        #[arg(long)]
        pair: String,
        /// Ball radius for the mutual mass test.
        #[arg(long)]
        radius: Option<f64>,
        /// Geodesic tolerance for curvature extrema (needs scalar fields).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        max_matches: Option<usize>,
        /// Farthest-point landmarks per shape when none are provided.
        #[arg(long)]
        landmarks: Option<usize>,
        /// Hop radius for local maxima of the scalar field.
        #[arg(long, default_value_t = 1)]
        hops: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Interpolated dense map.
        #[arg(long)]
        dense: Option<PathBuf>,
    },
    /// Landmark error curves of the propagation methods.
    Benchmark {
        #[command(flatten)]
        collection: CollectionArgs,
        #[arg(long)]
        max_paths: Option<usize>,
        #[arg(long)]
        strict: bool,
        #[arg(long, value_delimiter = ',', default_value = "direct,mst,shortest,frechet,mle")]
        methods: Vec<String>,
        /// One curve per value for `frechet` and `mle`.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        /// Only evaluate maps into the Fréchet-mean shape.
        #[arg(long)]
        to_mean: bool,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value = "squared")]
        edge_cost: String,
        #[arg(long, default_value_t = corrsync_core::benchmark::DEFAULT_GRID_POINTS)]
        grid_points: usize,
        #[arg(long, default_value_t = corrsync_core::benchmark::DEFAULT_GRID_MAX)]
        grid_max: f64,
        /// Raw geodesic errors instead of fractions of the diameter.
        #[arg(long)]
        unnormalized: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Random walks on a square lattice.
    Lattice {
        /// `standard`, `nonbacktracking` or `eop`.
        #[arg(long, default_value = "eop")]
        mode: String,
        #[arg(long, default_value_t = 100)]
        walks: usize,
        #[arg(long, default_value_t = corrsync_geolab::lattice::DEFAULT_SIDE)]
        side: usize,
        /// Start vertex (default: corner `(0, 0)`).
        #[arg(long)]
        source: Option<usize>,
        /// End vertex (default: corner `(1, 1)`).
        #[arg(long)]
        target: Option<usize>,
        #[arg(long, default_value_t = 1_000_000)]
        max_steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-walk steps and deviation.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Holonomy of random spherical triangles.
    Holonomy {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Integration steps per geodesic leg.
        #[arg(long, default_value_t = corrsync_geolab::sphere::DEFAULT_RK4_STEPS)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthetic collection of deformed spheres.
    Synth {
        #[arg(long, default_value_t = 10)]
        shapes: usize,
        #[arg(long, default_value_t = 500)]
        points: usize,
        #[arg(long, default_value_t = 0.1)]
        amplitude: f64,
        #[arg(long, default_value_t = 12)]
        landmarks: usize,
        /// `aligned` or `ground-truth`.
        #[arg(long, default_value = "aligned")]
        maps: String,
        /// Fraction of shape pairs whose maps are scrambled.
        #[arg(long, default_value_t = 0.0)]
        corrupt: f64,
        /// Fraction of target vertices permuted in a scrambled pair.
        #[arg(long, default_value_t = 0.5)]
        corrupt_subset: f64,
        #[arg(long)]
        allow_duplicates: bool,
        #[arg(long)]
        beta: Option<f64>,
        /// Collection directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Effect of removing or adding shapes on trees, flows and soft maps.
    Stability {
        #[command(flatten)]
        collection: CollectionArgs,
        #[command(flatten)]
        paths: PathArgs,
        /// Compare against the collection without this shape.
        #[arg(long, conflicts_with = "compare")]
        remove: Option<String>,
        /// Compare against another collection sharing shape ids.
        #[arg(long, value_name = "MANIFEST")]
        compare: Option<PathBuf>,
        #[arg(long, default_value = "landmarks")]
        points: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Flow { .. } => "flow",
            Command::Propagate { .. } => "propagate",
            Command::Baseline { .. } => "baseline",
            Command::Match { .. } => "match",
            Command::Benchmark { .. } => "benchmark",
            Command::Lattice { .. } => "lattice",
            Command::Holonomy { .. } => "holonomy",
            Command::Synth { .. } => "synth",
            Command::Stability { .. } => "stability",
        }
    }
}

fn resolve(cli: &Cli, file: &FileConfig) -> RunConfig {
    let none = CollectionArgs::default();
    let no_paths = PathArgs::default();
    let (collection, paths) = match &cli.command {
        Command::Flow { collection, paths, .. }
        | Command::Propagate { collection, paths, .. }
        | Command::Match { collection, paths, .. }
        | Command::Stability { collection, paths, .. } => (collection, paths),
        Command::Baseline { collection, .. } | Command::Benchmark { collection, .. } => (collection, &no_paths),
        _ => (&none, &no_paths),
    };
    let (mut radius, mut delta, mut max_matches, mut epsilon, mut max_paths) = (None, None, None, None, paths.max_paths);
    match &cli.command {
        Command::Match { radius: r, delta: d, max_matches: m, .. } => {
            (radius, delta, max_matches) = (*r, *d, *m);
        }
        Command::Baseline { epsilon: e, .. } => epsilon = *e,
        Command::Benchmark { epsilon: e, max_paths: m, .. } => (epsilon, max_paths) = (*e, *m),
        _ => {}
    }
    let beta = match &cli.command {
        Command::Synth { beta, .. } => *beta,
        _ => collection.beta,
    };
    let lambda = match &cli.command {
        Command::Benchmark { lambda, .. } => lambda.first().copied(),
        _ => paths.lambda,
    };
    let allow_duplicates = match &cli.command {
        Command::Synth { allow_duplicates, .. } => *allow_duplicates,
        _ => collection.allow_duplicates,
    };
    RunConfig {
        manifest: collection.manifest.clone().or_else(|| file.manifest.clone()),
        beta: beta.or(file.beta),
        lambda: lambda.or(file.lambda).unwrap_or(corrsync_core::flow::DEFAULT_LAMBDA),
        radius: radius.or(file.radius),
        delta: delta.or(file.delta),
        epsilon: epsilon.or(file.epsilon),
        max_matches: max_matches.or(file.max_matches).unwrap_or(corrsync_core::matching::DEFAULT_MAX_MATCHES),
        max_paths: max_paths.or(file.max_paths).unwrap_or(corrsync_core::flow::DEFAULT_MAX_PATHS),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out_dir: cli.out_dir.clone().or_else(|| file.out_dir.clone()),
        neighbors: collection
            .neighbors
            .or(file.neighbors)
            .unwrap_or(corrsync_core::collection::DEFAULT_NEIGHBORS),
        allow_duplicates: allow_duplicates || file.allow_duplicates.unwrap_or(false),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("Run `corrsync --help` for usage.");
                2
            } else {
                1
            }
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let quiet = cli.quiet || file.quiet.unwrap_or(false);
    let level = if quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(UsageError("--threads must be positive".into()).into());
        }
        // a pool may already exist when running in-process more than once
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = resolve(&cli, &file);
    config.validate()?;
    commands::dispatch(cli.command, &config)
}
