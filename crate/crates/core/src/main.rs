use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ncdstruct::codec::CodecSpec;
use ncdstruct::dendro::{build_tree_agglomerative, refine_best_of, LeafPaths, RootedDendrogram, UnrootedBinaryTree};
use ncdstruct::grammar::{self, CorpusSpec};
use ncdstruct::metrics::{dsc_detail, report_csv, summarize, ClusterAssignment};
use ncdstruct::pipeline::{self, ExperimentConfig, GrammarParts};
use ncdstruct::projection::{emit_plot, mds_project, silhouette_euclidean};
use ncdstruct::{ncd, DistanceMatrix, Error, Result};

/// Compression-distance clustering of text corpora.
#[derive(Parser, Debug)]
#[command(name = "ncdstruct", version)]
struct Cli {
    /// TOML configuration; command-line flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write masked and shuffled copies of a dataset.
    Distort(ExpArgs),
    /// NCD of two files, or the matrix of a dataset.
    Ncd(NcdArgs),
    /// Build a tree from a distance matrix.
    Cluster(ClusterArgs),
    /// Score a tree against document classes.
    Metrics(MetricsArgs),
    /// Sample a corpus file from a grammar, or dump its distribution.
    GrammarGen(GrammarArgs),
    /// Project a distance matrix to the plane.
    Project(ProjectArgs),
    /// Run one of the experiments.
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Subcommand, Debug)]
enum Experiment {
    /// Distortion sweep over techniques, degrees and repetitions.
    Distortion(ExpArgs),
    /// PPM order sweep.
    OrderSweep(ExpArgs),
    /// Grammar corpora: trees, projections and KL table.
    Grammar(GrammarExpArgs),
}

#[derive(Args, Debug, Default, Clone)]
struct ExpArgs {
    /// Dataset directory (one sub-directory per class).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Word frequency list.
    #[arg(long)]
    freq: Option<PathBuf>,
    /// ppm:N, lz, bwt or ext:<command>; repeatable.
    #[arg(long = "codec")]
    codecs: Vec<String>,
    /// oo, rpa, rprw or rpe; repeatable.
    #[arg(long = "technique")]
    techniques: Vec<String>,
    /// Comma-separated degrees, e.g. 0.1,0.5,1.0.
    #[arg(long, value_delimiter = ',')]
    degrees: Vec<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated PPM orders.
    #[arg(long, value_delimiter = ',')]
    orders: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    refine_iterations: Option<usize>,
    #[arg(long)]
    refine_chains: Option<usize>,
    /// Let RPA move asterisk runs into any word slot.
    #[arg(long)]
    rpa_any_slot: bool,
    /// Matrix cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GrammarExpArgs {
    #[command(flatten)]
    common: ExpArgs,
    /// Grammar file (default: the bundled one).
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Comma-separated corpus seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Comma-separated v bindings, one class each.
    #[arg(long, value_delimiter = ',')]
    v: Vec<String>,
    #[arg(long)]
    w: Option<String>,
    /// Skip the small-corpus trees.
    #[arg(long)]
    no_trees: bool,
    /// Skip the large-corpus projections.
    #[arg(long)]
    no_projections: bool,
}

#[derive(Args, Debug)]
struct NcdArgs {
    /// Two files to compare.
    files: Vec<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "ppm:6")]
    codec: String,
    /// Matrix output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    /// Distance matrix CSV.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value_t = 2000)]
    refine_iterations: usize,
    #[arg(long, default_value_t = 2)]
    refine_chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Newick output (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a per-edge list for plotting.
    #[arg(long)]
    edges: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassArgs {
    /// `id<TAB>class` lines.
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Otherwise take the class from the id prefix before this character.
    #[arg(long, default_value = ".")]
    sep: char,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Newick file.
    #[arg(long)]
    tree: PathBuf,
    /// Keep the tree's two-child root as an internal node.
    #[arg(long)]
    rooted: bool,
    #[command(flatten)]
    classes: ClassArgs,
    /// Also list per-leaf silhouettes.
    #[arg(long)]
    per_leaf: bool,
}

#[derive(Args, Debug)]
struct GrammarArgs {
    /// Grammar file (default: the bundled one).
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Parameter bindings, e.g. v=1/4,w=1/2.
    #[arg(long, default_value = "v=1/2,w=1/2")]
    bindings: String,
    #[arg(long, default_value_t = grammar::DEFAULT_CORPUS_BYTES)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Print `sentence<TAB>probability` for every sentence instead.
    #[arg(long)]
    enumerate: bool,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    classes: ClassArgs,
    /// Output stem; writes <stem>.csv and <stem>.svg.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(w) = cli.workers.or(cfg.workers) {
        cfg.workers = Some(w);
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .map_err(|e| Error::Resource(e.to_string()))?;
    }
    match cli.command {
        Command::Distort(a) => {
            apply(&mut cfg, &a);
            let manifest = pipeline::cmd_distort(&cfg)?;
            println!("{}", manifest.display());
        }
        Command::Ncd(a) => cmd_ncd(&a)?,
        Command::Cluster(a) => cmd_cluster(&a)?,
        Command::Metrics(a) => cmd_metrics(&a)?,
        Command::GrammarGen(a) => cmd_grammar_gen(&a)?,
        Command::Project(a) => cmd_project(&a)?,
        Command::Experiment(Experiment::Distortion(a)) => {
            apply(&mut cfg, &a);
            let report = pipeline::cmd_experiment_distortion(&cfg)?;
            print!("{}", report.summary_csv);
        }
        Command::Experiment(Experiment::OrderSweep(a)) => {
            apply(&mut cfg, &a);
            pipeline::cmd_experiment_order_sweep(&cfg)?;
            print!("{}", read_text(&cfg.out.join("order_curve.csv"))?);
        }
        Command::Experiment(Experiment::Grammar(a)) => {
            apply(&mut cfg, &a.common);
            if a.common.orders.is_empty() && cli.config.is_none() {
                cfg.orders = vec![2, 4, 6];
            }
            if a.grammar.is_some() {
                cfg.grammar = a.grammar.clone();
            }
            if !a.seeds.is_empty() {
                cfg.seeds = a.seeds.clone();
            }
            if !a.v.is_empty() {
                cfg.v_values = a.v.clone();
            }
            if let Some(w) = &a.w {
                cfg.w = w.clone();
            }
            let parts = GrammarParts {
                trees: !a.no_trees,
                projections: !a.no_projections,
            };
            pipeline::cmd_experiment_grammar(&cfg, parts)?;
            print!("{}", read_text(&cfg.out.join("grammar.csv"))?);
        }
    }
    Ok(())
}

fn apply(cfg: &mut ExperimentConfig, a: &ExpArgs) {
    if a.dataset.is_some() {
        cfg.dataset = a.dataset.clone();
    }
    if a.freq.is_some() {
        cfg.freq = a.freq.clone();
    }
    if !a.codecs.is_empty() {
        cfg.codecs = a.codecs.clone();
    }
    if !a.techniques.is_empty() {
        cfg.techniques = a.techniques.clone();
    }
    if !a.degrees.is_empty() {
        cfg.degrees = a.degrees.clone();
    }
    if !a.orders.is_empty() {
        cfg.orders = a.orders.clone();
    }
    if let Some(v) = a.repetitions {
        cfg.repetitions = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = &a.out {
        cfg.out = v.clone();
    }
    if let Some(v) = a.refine_iterations {
        cfg.refine_iterations = v;
    }
    if let Some(v) = a.refine_chains {
        cfg.refine_chains = v;
    }
    if a.rpa_any_slot {
        cfg.rpa_any_slot = true;
    }
    if a.cache.is_some() {
        cfg.cache = a.cache.clone();
    }
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::io(p, e))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn load_matrix(p: &Path) -> Result<DistanceMatrix> {
    let f = fs::File::open(p).map_err(|e| Error::io(p, e))?;
    DistanceMatrix::from_csv(BufReader::new(f))
}

fn load_classes(a: &ClassArgs, ids: &[String]) -> Result<ClusterAssignment> {
    match &a.classes {
        Some(p) => {
            let text = read_text(p)?;
            let mut pairs = Vec::new();
            for (k, line) in text.lines().enumerate() {
                if line.trim().is_empty() || line.starts_with('#') {
                    continue;
                }
                let (id, class) = line.split_once('\t').ok_or_else(|| Error::Parse {
                    line: k + 1,
                    msg: "expected id<TAB>class".into(),
                })?;
                pairs.push((id.trim().to_string(), class.trim().to_string()));
            }
            ClusterAssignment::from_pairs(pairs)
        }
        None => ClusterAssignment::from_id_prefix(ids, a.sep),
    }
}

fn cmd_ncd(a: &NcdArgs) -> Result<()> {
    let codec: CodecSpec = a.codec.parse()?;
    if let Some(dir) = &a.dataset {
        let docs = pipeline::load_dataset(dir)?;
        let m = ncdstruct::ncd_matrix(&docs, &codec)?.sorted_by_id();
        return write_or_print(a.out.as_deref(), &m.to_csv());
    }
    if a.files.len() != 2 {
        return Err(Error::input("give two files or --dataset"));
    }
    let x = fs::read(&a.files[0]).map_err(|e| Error::io(&a.files[0], e))?;
    let y = fs::read(&a.files[1]).map_err(|e| Error::io(&a.files[1], e))?;
    println!("{:.6}", ncd(&x, &y, &codec)?);
    Ok(())
}

fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let m = load_matrix(&a.matrix)?;
    let t = build_tree_agglomerative(&m)?;
    let seeds: Vec<u64> = (0..a.refine_chains.max(1) as u64).map(|c| a.seed.wrapping_add(c)).collect();
    let t = if a.refine_iterations > 0 {
        refine_best_of(&m, &t, a.refine_iterations, &seeds)?
    } else {
        t
    };
    if let Some(p) = &a.edges {
        fs::write(p, t.edge_export()).map_err(|e| Error::io(p, e))?;
    }
    write_or_print(a.out.as_deref(), &format!("{}\n", t.canonical_newick()))
}

fn cmd_metrics(a: &MetricsArgs) -> Result<()> {
    let text = read_text(&a.tree)?;
    let tree: Box<dyn LeafPaths> = if a.rooted {
        Box::new(RootedDendrogram::from_newick(&text)?)
    } else {
        Box::new(UnrootedBinaryTree::from_newick(&text)?)
    };
    let classes = load_classes(&a.classes, tree.leaf_ids())?;
    let q = summarize(tree.as_ref(), &classes)?;
    let label = a.tree.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    print!("{}", report_csv(&[(label, q)]));
    if a.per_leaf {
        let d = dsc_detail(tree.as_ref(), &classes)?;
        println!("leaf,silhouette");
        for (id, s) in d.per_leaf {
            println!("{id},{s:.6}");
        }
    }
    Ok(())
}

fn cmd_grammar_gen(a: &GrammarArgs) -> Result<()> {
    let text = match &a.grammar {
        Some(p) => read_text(p)?,
        None => pipeline::BUNDLED_GRAMMAR.to_string(),
    };
    let g = grammar::parse_grammar(text.as_bytes(), &grammar::parse_bindings(&a.bindings)?)?;
    if a.enumerate {
        let mut out = String::new();
        for (s, p) in grammar::enumerate_distribution(&g)? {
            out.push_str(&format!("{s}\t{}\n", grammar::format_rational(&p)));
        }
        return write_or_print(a.out.as_deref(), &out);
    }
    let doc = grammar::generate_corpus(&CorpusSpec {
        grammar: g,
        target_size_bytes: a.size,
        seed: a.seed,
        stream: a.stream,
        id: "corpus".into(),
        class_label: a.bindings.clone(),
    })?;
    match &a.out {
        Some(p) => fs::write(p, &doc.body).map_err(|e| Error::io(p, e)),
        None => io::stdout().write_all(&doc.body).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn cmd_project(a: &ProjectArgs) -> Result<()> {
    let m = load_matrix(&a.matrix)?;
    let classes = load_classes(&a.classes, &m.ids)?;
    let p = mds_project(&m, &classes)?;
    let (csv, svg) = emit_plot(&p, &a.out)?;
    println!("silhouette,{:.6}", silhouette_euclidean(&p)?);
    println!("stress,{:.6}", p.stress);
    log::info!("wrote {} and {}", csv.display(), svg.display());
    Ok(())
}
