//! Subcommands. A single `--seed` fans out to world generation (`seed`),
//! path sampling (`seed + 1`), model init and shuffling (`seed + 2`) and
//! the random router (`seed + 3`).

use std::collections::BTreeSet;
use std::path::{Path as FsPath, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use pivotroute_core::experiment::{
    dev_pairs, evaluate, route_pair, training_examples, RoutingContext,
};
use pivotroute_core::metrics::{cdf, MethodReport};
use pivotroute_core::nn::{init_model, train, LtrModel, TrainConfig, TrainReport};
use pivotroute_core::path::{
    candidate_paths, count_paths, estimate_eval_cost, ordered_pivot_selections,
};
use pivotroute_core::routers::{build_pivot_map, Method, PathLabels, DEFAULT_PIVOT_MIN_COUNT};
use pivotroute_core::synth::{
    apply_supervised_overlay, build_dataset, build_dataset_with, gen_world, uniform_boost,
    DatasetConfig, RoutingDataset, WorldConfig,
};
use pivotroute_core::{LangId, LanguageRegistry, QualityMatrix};

use crate::io::{self, Checkpoint, Manifest};

pub const LANGUAGES_FILE: &str = "languages.tsv";
pub const MATRIX_FILE: &str = "matrix.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.tsv";

#[derive(Debug, Parser)]
#[command(name = "pivotroute", version, about = "Multi-hop pivot path routing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world (or split a real one) and its routing dataset.
    Gen(GenArgs),
    /// Train the path-quality predictor on a dataset.
    Train(TrainArgs),
    /// Route a single language pair with each method.
    Route(RouteArgs),
    /// Evaluate routing methods on the test pairs.
    Eval(EvalArgs),
    /// Path counts and the brute-force evaluation cost model.
    Count(CountArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Read languages.tsv, matrix.tsv and labels.tsv from this directory
    /// instead of generating a world.
    #[arg(long, conflicts_with_all = ["languages", "branches", "noise"])]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub languages: Option<usize>,
    #[arg(long)]
    pub branches: Option<usize>,
    /// Standard deviation of the multiplicative path noise.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub dev_frac: f64,
    #[arg(long, default_value_t = 0.10)]
    pub test_frac: f64,
    /// Fraction of each train pair's paths that get a label.
    #[arg(long, default_value_t = 0.10)]
    pub train_path_frac: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `gen`.
    #[arg(long)]
    pub world: PathBuf,
    /// Output directory for the checkpoint and training report.
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the seed recorded by `gen`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 6)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = DEFAULT_PIVOT_MIN_COUNT)]
    pub pivot_min_count: usize,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long)]
    pub world: PathBuf,
    /// Checkpoint written by `train`; needed for LTR.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub src: String,
    #[arg(long)]
    pub tgt: String,
    /// Comma-separated methods. Defaults to every method whose inputs exist.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_PIVOT_MIN_COUNT)]
    pub pivot_min_count: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated methods; rows always come out as DT RR HA PP LTR GT.
    #[arg(long, value_delimiter = ',', default_value = "DT,RR,HA,PP,LTR,GT")]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_PIVOT_MIN_COUNT)]
    pub pivot_min_count: usize,
    /// Also evaluate with supervised scores on edges among the pivots,
    /// writing the results to `<out>/overlay/`. Synthetic worlds only.
    #[arg(long)]
    pub supervised_overlay: bool,
    /// BLEU added to each overlay edge (capped at 100).
    #[arg(long, default_value_t = 20.0)]
    pub boost: f64,
    /// Comma-separated overlay pivots; defaults to each branch's prior pivot.
    #[arg(long, value_delimiter = ',')]
    pub overlay_pivots: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    /// Size of the pivot pool between one source and target.
    #[arg(
        long,
        conflicts_with = "languages",
        required_unless_present = "languages"
    )]
    pub pivots: Option<u64>,
    /// Total number of languages.
    #[arg(long)]
    pub languages: Option<u64>,
    #[arg(long, default_value_t = 3)]
    pub max_hops: usize,
    /// Minutes to score one path.
    #[arg(long, default_value_t = 20.0)]
    pub minutes: f64,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    execute(Cli::try_parse_from(args)?)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Route(a) => {
            print!("{}", cmd_route(&a)?);
            Ok(())
        }
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Count(a) => {
            print!("{}", cmd_count(&a)?);
            Ok(())
        }
    }
}

fn create_dir(dir: &FsPath) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let split = DatasetConfig {
        dev_frac: a.dev_frac,
        test_frac: a.test_frac,
        train_path_frac: a.train_path_frac,
        seed: a.seed.wrapping_add(1),
    };
    let (registry, matrix, dataset, world) = match &a.from {
        Some(dir) => {
            let registry = io::parse_registry(&io::read_text(&dir.join(LANGUAGES_FILE))?)
                .with_context(|| format!("in {}", dir.join(LANGUAGES_FILE).display()))?;
            let matrix = io::parse_matrix(&io::read_text(&dir.join(MATRIX_FILE))?, &registry)
                .with_context(|| format!("in {}", dir.join(MATRIX_FILE).display()))?;
            let labels = io::parse_labels(&io::read_text(&dir.join(LABELS_FILE))?, &registry)
                .with_context(|| format!("in {}", dir.join(LABELS_FILE).display()))?;
            let dataset = build_dataset_with(&registry, &split, |p| {
                labels.get(p).copied().ok_or_else(|| {
                    pivotroute_core::Error::MissingLabel(p.to_string_with(&registry))
                })
            })?;
            (registry, matrix, dataset, None)
        }
        None => {
            let defaults = WorldConfig::default();
            let config = WorldConfig {
                num_languages: a.languages.unwrap_or(defaults.num_languages),
                num_branches: a.branches.unwrap_or(defaults.num_branches),
                noise_sigma: a.noise.unwrap_or(defaults.noise_sigma),
                seed: a.seed,
                ..defaults
            };
            let world = gen_world(&config)?;
            let dataset = build_dataset(&world.registry, &world.oracle, &split)?;
            (world.registry, world.matrix, dataset, Some(config))
        }
    };
    let manifest = Manifest::new(&registry, &dataset, a.seed, world.as_ref(), &split);
    create_dir(&a.out)?;
    io::write_text(&a.out.join(LANGUAGES_FILE), &io::format_registry(&registry))?;
    io::write_text(
        &a.out.join(MATRIX_FILE),
        &io::format_matrix(&registry, &matrix),
    )?;
    io::write_text(
        &a.out.join(LABELS_FILE),
        &io::format_labels(&registry, &dataset),
    )?;
    io::write_text(&a.out.join(MANIFEST_FILE), &manifest.to_json())?;
    Ok(())
}

/// Everything `gen` wrote, loaded back.
pub struct LoadedWorld {
    pub registry: LanguageRegistry,
    pub matrix: QualityMatrix,
    pub labels: PathLabels,
    pub manifest: Manifest,
    pub dataset: RoutingDataset,
}

pub fn load_world(dir: &FsPath) -> Result<LoadedWorld> {
    let file = |name: &str| dir.join(name);
    let registry = io::parse_registry(&io::read_text(&file(LANGUAGES_FILE))?)
        .with_context(|| format!("in {}", file(LANGUAGES_FILE).display()))?;
    let matrix = io::parse_matrix(&io::read_text(&file(MATRIX_FILE))?, &registry)
        .with_context(|| format!("in {}", file(MATRIX_FILE).display()))?;
    let labels = io::parse_labels(&io::read_text(&file(LABELS_FILE))?, &registry)
        .with_context(|| format!("in {}", file(LABELS_FILE).display()))?;
    let manifest = Manifest::from_json(&io::read_text(&file(MANIFEST_FILE))?)
        .with_context(|| format!("in {}", file(MANIFEST_FILE).display()))?;
    let dataset = manifest
        .dataset(&registry, &labels)
        .with_context(|| format!("in {}", file(MANIFEST_FILE).display()))?;
    Ok(LoadedWorld {
        registry,
        matrix,
        labels,
        manifest,
        dataset,
    })
}

pub fn load_model(path: &FsPath, registry: &LanguageRegistry) -> Result<LtrModel> {
    Checkpoint::from_json(&io::read_text(path)?)
        .and_then(|c| c.model(registry))
        .with_context(|| format!("in {}", path.display()))
}

pub fn cmd_train(a: &TrainArgs) -> Result<(LtrModel, TrainReport)> {
    let w = load_world(&a.world)?;
    let seed = a.seed.unwrap_or(w.manifest.seed).wrapping_add(2);
    let config = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed,
        ..TrainConfig::default()
    };
    config.validate()?;
    let data = training_examples(&w.dataset.train, &w.matrix)?;
    let dev = dev_pairs(
        &w.dataset.dev,
        &w.registry,
        &w.matrix,
        a.pivot_min_count,
        &w.dataset.pivot_counts,
    )?;
    let init = init_model(w.registry.len(), a.hidden, a.layers, seed)?;
    let (model, report) = train(&init, &data, &dev, &config)?;
    create_dir(&a.out)?;
    io::write_text(
        &a.out.join(MODEL_FILE),
        &Checkpoint::new(&model, &w.registry).to_json(),
    )?;
    io::write_text(
        &a.out.join(TRAIN_REPORT_FILE),
        &io::format_train_report(&report),
    )?;
    Ok((model, report))
}

/// Selected methods in canonical order, without repeats.
fn canonical(methods: &[Method]) -> Vec<Method> {
    let wanted: BTreeSet<Method> = methods.iter().copied().collect();
    Method::ALL
        .into_iter()
        .filter(|m| wanted.contains(m))
        .collect()
}

pub fn cmd_route(a: &RouteArgs) -> Result<String> {
    let w = load_world(&a.world)?;
    let x = w.registry.id(&a.src)?;
    let y = w.registry.id(&a.tgt)?;
    let model = a
        .model
        .as_deref()
        .map(|p| load_model(p, &w.registry))
        .transpose()?;
    let candidates = candidate_paths(&w.registry, x, y)?;
    let labels: Option<PathLabels> = candidates
        .paths
        .iter()
        .map(|p| w.labels.get(p).map(|&b| (p.clone(), b)))
        .collect();
    let methods = match &a.methods {
        Some(m) => canonical(m),
        None => Method::ALL
            .into_iter()
            .filter(|m| match m {
                Method::Ltr => model.is_some(),
                Method::Gt => labels.is_some(),
                _ => true,
            })
            .collect(),
    };
    let seed = a.seed.unwrap_or(w.manifest.seed);
    let ctx = RoutingContext {
        registry: &w.registry,
        matrix: &w.matrix,
        model: model.as_ref(),
        pivot_map: build_pivot_map(&w.registry)?,
        pivot_counts: &w.dataset.pivot_counts,
        pivot_min_count: a.pivot_min_count,
        random_seed: seed.wrapping_add(3),
    };
    let mut out = String::from("src\ttgt\tmethod\tpath\tpredicted\tactual\n");
    for m in methods {
        let mut r = route_pair(&ctx, x, y, labels.as_ref(), m, 0)?.result;
        if r.actual.is_none() {
            r.actual = w.labels.get(&r.chosen).copied();
        }
        out.push_str(&io::format_route_row(&w.registry, &r));
        out.push('\n');
    }
    Ok(out)
}

/// Reports written by `eval`, overlay results second when requested.
pub struct EvalOutput {
    pub reports: Vec<MethodReport>,
    pub overlay: Option<Vec<MethodReport>>,
}

fn write_reports(
    dir: &FsPath,
    registry: &LanguageRegistry,
    reports: &[MethodReport],
) -> Result<()> {
    create_dir(dir)?;
    io::write_text(&dir.join("report.tsv"), &io::format_report(reports))?;
    io::write_text(
        &dir.join("routes.tsv"),
        &io::format_routes(registry, reports),
    )?;
    io::write_text(&dir.join("pairs.tsv"), &io::format_pairs(registry, reports))?;
    for r in reports {
        let scores: Vec<f64> = r
            .rows
            .iter()
            .map(|row| row.actual.context("routing result without a label"))
            .collect::<Result<_>>()?;
        let name = format!("cdf_{}.csv", r.method.as_str().to_lowercase());
        io::write_text(&dir.join(name), &io::format_cdf(&cdf(&scores)?))?;
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<EvalOutput> {
    let w = load_world(&a.world)?;
    let methods = canonical(&a.methods);
    ensure!(!methods.is_empty(), "no methods selected");
    let model = match (&a.model, methods.contains(&Method::Ltr)) {
        (Some(p), _) => Some(load_model(p, &w.registry)?),
        (None, true) => bail!("LTR needs a checkpoint; pass --model or drop LTR from --methods"),
        (None, false) => None,
    };
    let seed = a.seed.unwrap_or(w.manifest.seed);
    let ctx = RoutingContext {
        registry: &w.registry,
        matrix: &w.matrix,
        model: model.as_ref(),
        pivot_map: build_pivot_map(&w.registry)?,
        pivot_counts: &w.dataset.pivot_counts,
        pivot_min_count: a.pivot_min_count,
        random_seed: seed.wrapping_add(3),
    };
    let reports = evaluate(&ctx, &w.dataset.test, &methods)?;
    write_reports(&a.out, &w.registry, &reports)?;

    let overlay = if a.supervised_overlay {
        let spec = w
            .manifest
            .world
            .as_ref()
            .context("--supervised-overlay needs a synthetic world to relabel paths")?;
        let world = gen_world(&WorldConfig::from(spec))?;
        ensure!(
            world.matrix == w.matrix && world.registry == w.registry,
            "{} no longer matches the world recorded in {}",
            MATRIX_FILE,
            MANIFEST_FILE
        );
        let pivots: Vec<LangId> = match &a.overlay_pivots {
            Some(codes) => codes
                .iter()
                .map(|c| w.registry.id(c))
                .collect::<pivotroute_core::Result<_>>()?,
            None => ctx.pivot_map.pivots().map(|(_, l)| l).collect(),
        };
        ensure!(a.boost >= 0.0, "boost must be nonnegative, got {}", a.boost);
        let boost = uniform_boost(&w.matrix, &pivots, a.boost);
        let matrix = apply_supervised_overlay(&w.registry, &w.matrix, &pivots, &boost)?;
        let relabeled = w.dataset.relabel(&world.oracle.with_matrix(matrix.clone()));
        let octx = RoutingContext {
            matrix: &matrix,
            ..ctx.clone()
        };
        let reports = evaluate(&octx, &relabeled.test, &methods)?;
        let dir = a.out.join("overlay");
        write_reports(&dir, &w.registry, &reports)?;
        io::write_text(
            &dir.join(MATRIX_FILE),
            &io::format_matrix(&w.registry, &matrix),
        )?;
        Some(reports)
    } else {
        None
    };
    Ok(EvalOutput { reports, overlay })
}

pub fn cmd_count(a: &CountArgs) -> Result<String> {
    let mut out = String::new();
    match (a.pivots, a.languages) {
        (Some(p), _) => out.push_str(&format!(
            "paths_per_pair\t{}\n",
            count_paths(p, a.max_hops)?
        )),
        (None, Some(m)) => {
            ensure!(m >= 2, "need at least 2 languages, got {m}");
            let pool = m - 2;
            out.push_str(&format!("pivot_pool\t{pool}\n"));
            out.push_str(&format!(
                "paths_per_pair\t{}\n",
                count_paths(pool, a.max_hops)?
            ));
            out.push_str(&format!(
                "ordered_selections\t{}\n",
                ordered_pivot_selections(m, a.max_hops)?
            ));
            out.push_str(&format!(
                "gpu_days\t{}\n",
                estimate_eval_cost(m, a.minutes)?
            ));
        }
        (None, None) => bail!("pass --pivots or --languages"),
    }
    Ok(out)
}
