use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use lsgnn::bundle::save_bundle;
use lsgnn::graph::node_homophily;
use lsgnn::harness::{
    dataset_stats, depth_sweep, load_dataset, make_splits, random_search, save_dataset, train_splits, write_csv,
    DatasetBundle, PropagationCache, RunConfig, SearchSpace, SplitSpec, DEFAULT_RATIOS, MANIFEST_FILE, REPORT_FILE,
    TIMING_FILE,
};
use lsgnn::model::{self, load_checkpoint, save_checkpoint, LocalSimMode, ModelInput, WeightMode};
use lsgnn::propagation::{hex_digest, precompute_bundle};
use lsgnn::synthetic::{generate_fsbm, l1_gap_check, theory_check, toy_study, FsbmConfig, FsbmMode, ToyConfig};
use lsgnn::{Error, Result, SimilarityKind, Variant};

/// Local-similarity GNN experiments.
#[derive(Parser)]
#[command(name = "lsgnn", version)]
struct Cli {
    /// Base seed for graphs, splits and initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat TOML config; a previous run's manifest works too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "lsgnn-out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an FSBM mixture and write it as a dataset directory.
    GenFsbm(FsbmArgs),
    /// Precompute the propagation stack of a dataset.
    Precompute {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Train one model per split and save checkpoints.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Evaluate saved checkpoints on their splits.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        exp: ExpArgs,
        /// Directory with `split_{i}.lspm` files.
        #[arg(long)]
        checkpoints: Option<String>,
    },
    /// Raw vs graph-level vs node-level weighting on FSBM mixtures.
    Toy {
        #[command(flatten)]
        fsbm: FsbmArgs,
        /// Cells as `l1:l2`, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<String>>,
        /// Seeds per cell.
        #[arg(long)]
        toy_seeds: Option<usize>,
    },
    /// Monte-Carlo check of the LocalSim expectation and gap bound.
    Theory {
        #[command(flatten)]
        fsbm: FsbmArgs,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Dataset statistics.
    Stats {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Accuracy against depth for the model and its plain-filter counterpart.
    SweepDepth {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
    },
    /// Random hyperparameter search.
    Search {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long)]
        budget: Option<usize>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory (`edges.txt`, `features.csv`, `labels.txt`).
    #[arg(long)]
    data: Option<String>,
}

#[derive(Args)]
struct ExpArgs {
    /// Number of random 48/32/20 splits.
    #[arg(long)]
    splits: Option<usize>,
    /// Propagation depth K.
    #[arg(long)]
    layers: Option<usize>,
    /// Residual-difference weight in [0, 1].
    #[arg(long)]
    gamma: Option<f64>,
    /// Identity share of the low-pass filter, in [0, 1].
    #[arg(long)]
    beta: Option<f64>,
    /// irdc, sgc, initial_residual or difference_residual.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    normalize: Option<bool>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    h_ls: Option<usize>,
    #[arg(long)]
    h_alpha: Option<usize>,
    /// cosine, euclidean or neg_sq_scalar.
    #[arg(long)]
    sim_kind: Option<SimilarityKind>,
    #[arg(long)]
    dropout: Option<f64>,
    /// node_level or graph_level.
    #[arg(long)]
    weight_mode: Option<WeightMode>,
    /// refined or naive.
    #[arg(long)]
    localsim_mode: Option<LocalSimMode>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct FsbmArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Homophily level per subgraph, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    expected_degree: Option<f64>,
    /// Community feature means, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    mu: Option<Vec<f64>>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    fsbm_mode: Option<FsbmMode>,
}

impl DataArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.data.clone_from(&self.data);
    }
}

impl ExpArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.splits = self.splits;
        c.layers = self.layers;
        c.gamma = self.gamma;
        c.beta = self.beta;
        c.variant = self.variant;
        c.normalize = self.normalize;
        c.hidden = self.hidden;
        c.h_ls = self.h_ls;
        c.h_alpha = self.h_alpha;
        c.sim_kind = self.sim_kind;
        c.dropout = self.dropout;
        c.weight_mode = self.weight_mode;
        c.localsim_mode = self.localsim_mode;
        c.lr = self.lr;
        c.weight_decay = self.weight_decay;
        c.epochs = self.epochs;
        c.patience = self.patience;
    }
}

impl FsbmArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.n = self.n;
        c.lambdas.clone_from(&self.lambdas);
        c.expected_degree = self.expected_degree;
        c.mu.clone_from(&self.mu);
        c.sigma = self.sigma;
        c.fsbm_mode = self.fsbm_mode;
    }
}

fn parse_cell(s: &str) -> Result<[f64; 2]> {
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad grid cell `{s}`, expected `l1:l2`")))
    };
    match s.split_once(':') {
        Some((a, b)) => Ok([parse(a)?, parse(b)?]),
        None => Err(Error::Config(format!("bad grid cell `{s}`, expected `l1:l2`"))),
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenFsbm(_) => "gen-fsbm",
            Command::Precompute { .. } => "precompute",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Toy { .. } => "toy",
            Command::Theory { .. } => "theory",
            Command::Stats { .. } => "stats",
            Command::SweepDepth { .. } => "sweep-depth",
            Command::Search { .. } => "search",
        }
    }

    /// Keys given on the command line.
    fn overrides(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        match self {
            Command::GenFsbm(f) => f.apply(&mut c),
            Command::Precompute { data, exp } | Command::Train { data, exp } => {
                data.apply(&mut c);
                exp.apply(&mut c);
            }
            Command::Eval { data, exp, checkpoints } => {
                data.apply(&mut c);
                exp.apply(&mut c);
                c.checkpoints.clone_from(checkpoints);
            }
            Command::Toy { fsbm, grid, toy_seeds } => {
                fsbm.apply(&mut c);
                if let Some(cells) = grid {
                    c.grid = Some(cells.iter().map(|s| parse_cell(s)).collect::<Result<_>>()?);
                }
                c.toy_seeds = *toy_seeds;
            }
            Command::Theory { fsbm, trials } => {
                fsbm.apply(&mut c);
                c.trials = *trials;
            }
            Command::Stats { data } => data.apply(&mut c),
            Command::SweepDepth { data, exp, depths } => {
                data.apply(&mut c);
                exp.apply(&mut c);
                c.depths.clone_from(depths);
            }
            Command::Search { data, exp, budget } => {
                data.apply(&mut c);
                exp.apply(&mut c);
                c.budget = *budget;
            }
        }
        Ok(c)
    }
}

/// CSV header and rows plus free-form timing lines.
struct Output {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    timing: Vec<String>,
}

impl Output {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
            timing: Vec::new(),
        }
    }

    fn row(&mut self, values: Vec<String>) {
        self.rows.push(values);
    }
}

macro_rules! cells {
    ($($v:expr),* $(,)?) => { vec![$($v.to_string()),*] };
}

fn require<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::Config(format!("missing `{key}`")))
}

fn dataset(cfg: &RunConfig) -> Result<DatasetBundle> {
    let dir = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset: pass --data <dir> or set `data`".into()))?;
    load_dataset(Path::new(dir))
}

fn splits(cfg: &RunConfig, n: usize) -> Result<Vec<SplitSpec>> {
    make_splits(n, DEFAULT_RATIOS, require(&cfg.seed, "seed")?, require(&cfg.splits, "splits")?)
}

fn fsbm_config(cfg: &RunConfig) -> Result<FsbmConfig> {
    let lambdas = require(&cfg.lambdas, "lambdas")?;
    let mut f = FsbmConfig::mixture(
        require(&cfg.n, "n")?,
        &lambdas,
        require(&cfg.expected_degree, "expected_degree")?,
        require(&cfg.fsbm_mode, "fsbm_mode")?,
    )?;
    f.mu = require(&cfg.mu, "mu")?;
    f.sigma = require(&cfg.sigma, "sigma")?;
    f.validate()?;
    Ok(f)
}

fn per_200_epochs(seconds: f64, epochs: usize) -> f64 {
    if epochs == 0 {
        0.0
    } else {
        seconds * 200.0 / epochs as f64
    }
}

fn gen_fsbm(cfg: &RunConfig, out: &Path) -> Result<Output> {
    let f = fsbm_config(cfg)?;
    let ds = generate_fsbm(&f, require(&cfg.seed, "seed")?)?;
    let h = node_homophily(&ds.graph, &ds.community)?;
    let mut o = Output::new(&["subgraph", "lambda", "nodes", "edges", "homophily"]);
    for (tau, lambda) in f.lambdas().into_iter().enumerate() {
        let nodes: Vec<usize> = ds.nodes_in_subgraph(tau).collect();
        let degree: usize = nodes.iter().map(|&i| ds.graph.degree(i)).sum();
        let alive: Vec<usize> = nodes.iter().copied().filter(|&i| ds.graph.degree(i) > 0).collect();
        let homophily = alive.iter().map(|&i| h.per_node[i]).sum::<f64>() / alive.len().max(1) as f64;
        o.row(cells![tau, lambda, nodes.len(), degree / 2, homophily]);
    }
    let bundle = DatasetBundle::from_synthetic(ds, Some("fsbm".into()))?;
    save_dataset(out, &bundle)?;
    Ok(o)
}

fn precompute(cfg: &RunConfig, out: &Path) -> Result<Output> {
    let b = dataset(cfg)?;
    let prop = cfg.experiment().propagation();
    let start = Instant::now();
    let stack = precompute_bundle(&b.graph, &b.features, &prop)?;
    let seconds = start.elapsed().as_secs_f64();
    save_bundle(&stack, &out.join("bundle.lspb"))?;
    let mut o = Output::new(&["nodes", "features", "layers", "variant", "feature_digest"]);
    o.row(cells![stack.n(), stack.d(), stack.layers(), prop.variant, hex_digest(&stack.feature_digest)]);
    o.timing.push(format!("precompute_seconds = {seconds}"));
    Ok(o)
}

fn train(cfg: &RunConfig, out: &Path) -> Result<Output> {
    let b = dataset(cfg)?;
    let sp = splits(cfg, b.n())?;
    let run = train_splits(&b, &cfg.experiment(), &sp, &PropagationCache::new())?;
    let mut o = Output::new(&["split", "seed", "val_acc", "test_acc", "best_epoch", "epochs_run"]);
    for (r, params) in run.report.per_split.iter().zip(&run.params) {
        save_checkpoint(&out.join(format!("split_{}.lspm", r.split)), &run.model, params)?;
        o.row(cells![r.split, r.seed, r.val_acc, r.test_acc, r.best_epoch, r.epochs_run]);
    }
    let epochs = run.report.per_split.iter().map(|r| r.epochs_run).sum();
    println!("test accuracy {:.4} +/- {:.4}", run.report.mean, run.report.std);
    o.timing.push(format!("seconds = {}", run.report.seconds));
    o.timing.push(format!("seconds_per_200_epochs = {}", per_200_epochs(run.report.seconds, epochs)));
    Ok(o)
}

fn eval(cfg: &RunConfig, out: &Path) -> Result<Output> {
    let b = dataset(cfg)?;
    let sp = splits(cfg, b.n())?;
    let dir = cfg
        .checkpoints
        .clone()
        .unwrap_or_else(|| out.to_string_lossy().into_owned());
    let exp = cfg.experiment();
    let stack = precompute_bundle(&b.graph, &b.features, &exp.propagation())?;
    let mut input: Option<ModelInput<'_>> = None;
    let mut o = Output::new(&["split", "seed", "val_acc", "test_acc"]);
    for (i, s) in sp.iter().enumerate() {
        let (mc, params) = load_checkpoint(&Path::new(&dir).join(format!("split_{i}.lspm")))?;
        if mc.layers != stack.layers() || mc.in_dim != b.features.cols() || mc.classes != b.classes {
            return Err(Error::Config(format!(
                "checkpoint {i} expects K={}, d={}, C={}; data and config give K={}, d={}, C={}",
                mc.layers,
                mc.in_dim,
                mc.classes,
                stack.layers(),
                b.features.cols(),
                b.classes
            )));
        }
        let inp = match input.take() {
            Some(inp) => inp,
            None => ModelInput::new(&b.graph, &b.features, &stack, mc.sim_kind)?,
        };
        let val = model::evaluate(&params, &mc, &inp, &b.labels, &s.val)?;
        let test = model::evaluate(&params, &mc, &inp, &b.labels, &s.test)?;
        input = Some(inp);
        o.row(cells![i, s.seed, val, test]);
    }
    Ok(o)
}

fn toy(cfg: &RunConfig) -> Result<Output> {
    let seed = require(&cfg.seed, "seed")?;
    let tc = ToyConfig {
        n: require(&cfg.n, "n")?,
        expected_degree: require(&cfg.expected_degree, "expected_degree")?,
        mode: require(&cfg.fsbm_mode, "fsbm_mode")?,
        seeds: (0..require(&cfg.toy_seeds, "toy_seeds")? as u64).map(|i| seed + i).collect(),
        ..ToyConfig::default()
    };
    let grid: Vec<(f64, f64)> = require(&cfg.grid, "grid")?.iter().map(|c| (c[0], c[1])).collect();
    let start = Instant::now();
    let report = toy_study(&grid, &tc)?;
    let mut o = Output::new(&["lambda1", "lambda2", "seed", "raw", "graph_level", "node_level"]);
    for row in &report.rows {
        for (s, acc) in tc.seeds.iter().zip(&row.per_seed) {
            o.row(cells![row.lambda1, row.lambda2, s, acc[0], acc[1], acc[2]]);
        }
        println!(
            "lambda ({}, {}): raw {:.4} graph-level {:.4} node-level {:.4}",
            row.lambda1, row.lambda2, row.raw, row.graph_level, row.node_level
        );
    }
    o.timing.push(format!("seconds = {}", start.elapsed().as_secs_f64()));
    Ok(o)
}

fn theory(cfg: &RunConfig) -> Result<Output> {
    let f = fsbm_config(cfg)?;
    let trials = require(&cfg.trials, "trials")?;
    let seed = require(&cfg.seed, "seed")?;
    let start = Instant::now();
    let rep = theory_check(&f, trials, seed)?;
    let mut o = Output::new(&["check", "subgraph", "lambda", "empirical", "reference", "stderr", "pass"]);
    for s in &rep.subgraphs {
        o.row(cells!["expectation", s.subgraph, s.lambda, s.empirical, s.analytic, s.stderr, s.pass]);
    }
    if f.subgraphs == 2 {
        let gap = l1_gap_check(&f, trials, seed)?;
        o.row(cells!["l1_gap", "", "", gap.empirical, gap.bound, gap.stderr, gap.pass]);
    }
    o.timing.push(format!("seconds = {}", start.elapsed().as_secs_f64()));
    Ok(o)
}

fn stats(cfg: &RunConfig) -> Result<Output> {
    let b = dataset(cfg)?;
    let s = dataset_stats(&b)?;
    let mut o = Output::new(&["name", "nodes", "edges", "classes", "features", "homophily"]);
    o.row(cells![b.name.unwrap_or_default(), s.nodes, s.edges, s.classes, s.features, s.homophily]);
    Ok(o)
}

fn sweep(cfg: &RunConfig) -> Result<Output> {
    let b = dataset(cfg)?;
    let sp = splits(cfg, b.n())?;
    let rows = depth_sweep(&b, &cfg.experiment(), &require(&cfg.depths, "depths")?, &sp, &PropagationCache::new())?;
    let mut o = Output::new(&["layers", "variant", "mean", "std", "val_mean"]);
    for r in &rows {
        for rep in [&r.lsgnn, &r.sgc] {
            o.row(cells![r.layers, rep.config.variant, rep.mean, rep.std, rep.val_mean]);
            o.timing.push(format!("layers = {} variant = {} seconds = {}", r.layers, rep.config.variant, rep.seconds));
        }
        println!("K={}: {:.4} vs sgc {:.4}", r.layers, r.lsgnn.mean, r.sgc.mean);
    }
    Ok(o)
}

fn search(cfg: &RunConfig) -> Result<Output> {
    let b = dataset(cfg)?;
    let sp = splits(cfg, b.n())?;
    let start = Instant::now();
    let res = random_search(
        &b,
        &SearchSpace::default(),
        &cfg.experiment(),
        require(&cfg.budget, "budget")?,
        &sp,
        require(&cfg.seed, "seed")?,
        &PropagationCache::new(),
    )?;
    let mut o = Output::new(&[
        "trial", "lr", "weight_decay", "dropout", "beta", "gamma", "sim_kind", "val_mean", "test_mean", "test_std",
        "best",
    ]);
    for t in &res.trials {
        let c = &t.config;
        let (val, test, std) = match &t.report {
            Some(r) => (r.val_mean.to_string(), r.mean.to_string(), r.std.to_string()),
            None => ("failed".into(), String::new(), String::new()),
        };
        o.row(cells![
            t.index,
            c.lr,
            c.weight_decay,
            c.dropout,
            c.beta,
            c.gamma,
            c.sim_kind,
            val,
            test,
            std,
            t.index == res.best_index
        ]);
    }
    println!(
        "best trial {}: validation {:.4}, test {:.4} +/- {:.4}",
        res.best_index, res.report.val_mean, res.report.mean, res.report.std
    );
    o.timing.push(format!("seconds = {}", start.elapsed().as_secs_f64()));
    Ok(o)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = file.version.as_deref().filter(|&v| v != lsgnn::VERSION) {
        warn!("config was written by version {v}, this is {}", lsgnn::VERSION);
    }
    let mut over = cli.command.overrides()?;
    over.command = Some(cli.command.name().to_string());
    over.version = Some(lsgnn::VERSION.to_string());
    over.seed = cli.seed;
    let cfg = file.overlay(&over)?.resolved()?;

    let out = cli.out.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    info!("{} -> {}", cli.command.name(), out.display());
    let output = match &cli.command {
        Command::GenFsbm(_) => gen_fsbm(&cfg, out)?,
        Command::Precompute { .. } => precompute(&cfg, out)?,
        Command::Train { .. } => train(&cfg, out)?,
        Command::Eval { .. } => eval(&cfg, out)?,
        Command::Toy { .. } => toy(&cfg)?,
        Command::Theory { .. } => theory(&cfg)?,
        Command::Stats { .. } => stats(&cfg)?,
        Command::SweepDepth { .. } => sweep(&cfg)?,
        Command::Search { .. } => search(&cfg)?,
    };
    write_csv(&out.join(REPORT_FILE), &output.header, &output.rows)?;
    let manifest = out.join(MANIFEST_FILE);
    fs::write(&manifest, cfg.to_manifest()?).map_err(|e| Error::io(&manifest, e))?;
    if !output.timing.is_empty() {
        let timing = out.join(TIMING_FILE);
        fs::write(&timing, output.timing.join("\n") + "\n").map_err(|e| Error::io(&timing, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
