//! Corpus loading, the distortion writer and the three experiments.
//!
//! Every experiment is a pure function of its configuration and input
//! files: distance matrices are cached under a content digest, run cells
//! are sorted before aggregation, and finished cells are recorded so an
//! interrupted run can resume.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::codec::CodecSpec;
use crate::dendro::{build_tree_agglomerative, refine_best_of, UnrootedBinaryTree};
use crate::distortion::{
    build_word_sets, distort_document, load_frequency_list, standard_degrees, DistortionPlan, RunPlacement,
    Technique, WordSet,
};
use crate::error::{Error, Result};
use crate::grammar::{self, CorpusSpec, Grammar};
use crate::metrics::{dsc_average, dsc_relative, summarize, ClusterAssignment, QualitySummary};
use crate::ncd::{ncd_matrix, DistanceMatrix, Document};
use crate::projection::{emit_plot, mds_project, silhouette_euclidean};

/// The bundled two-parameter grammar (`v` picks the first letter, `w` one
/// of the last letters); every sentence ends with `.123456`.
pub const BUNDLED_GRAMMAR: &str = include_str!("../fixtures/vw_grammar.pcfg");

/// Settings shared by every command. Read from a TOML file; command-line
/// flags override individual keys.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory with one sub-directory per class.
    pub dataset: Option<PathBuf>,
    /// Grammar file; the bundled grammar when absent.
    pub grammar: Option<PathBuf>,
    /// Word frequency list (`word<TAB>number` lines).
    pub freq: Option<PathBuf>,
    pub codecs: Vec<String>,
    pub techniques: Vec<String>,
    pub degrees: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
    /// Seeds for the grammar experiment.
    pub seeds: Vec<u64>,
    pub orders: Vec<usize>,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub refine_iterations: usize,
    pub refine_chains: usize,
    /// Let RPA move asterisk runs into any word slot.
    pub rpa_any_slot: bool,
    pub v_values: Vec<String>,
    pub w: String,
    pub small_per_class: usize,
    pub large_per_class: usize,
    pub target_size: usize,
    /// Cache directory for distance matrices; `<out>/cache` when absent.
    pub cache: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            grammar: None,
            freq: None,
            codecs: vec!["ppm:6".into()],
            techniques: Technique::ALL.iter().map(|t| t.to_string()).collect(),
            degrees: standard_degrees(),
            repetitions: 12,
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            orders: vec![2, 3, 4, 5, 6],
            out: PathBuf::from("out"),
            workers: None,
            refine_iterations: 2000,
            refine_chains: 2,
            rpa_any_slot: false,
            v_values: vec!["1/4".into(), "1/5".into(), "1/6".into()],
            w: "1/2".into(),
            small_per_class: 4,
            large_per_class: 30,
            target_size: grammar::DEFAULT_CORPUS_BYTES,
            cache: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::input("repetitions must be at least 1"));
        }
        let allowed = standard_degrees();
        for d in &self.degrees {
            if !allowed.iter().any(|a| (a - d).abs() < 1e-9) {
                return Err(Error::input(format!("degree {d} is not one of 0.1..1.0")));
            }
        }
        if self.degrees.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("degrees must be strictly ascending"));
        }
        self.codec_specs()?;
        self.technique_list()?;
        if self.refine_chains == 0 {
            return Err(Error::input("refine_chains must be at least 1"));
        }
        Ok(())
    }

    pub fn codec_specs(&self) -> Result<Vec<CodecSpec>> {
        if self.codecs.is_empty() {
            return Err(Error::input("no codecs configured"));
        }
        self.codecs.iter().map(|c| c.parse::<CodecSpec>()).collect()
    }

    pub fn technique_list(&self) -> Result<Vec<Technique>> {
        let mut out: Vec<Technique> = self.techniques.iter().map(|t| t.parse()).collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    fn chain_seeds(&self, salt: u64) -> Vec<u64> {
        (0..self.refine_chains as u64)
            .map(|c| self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ c)
            .collect()
    }

    fn cache_dir(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    fn placement(&self) -> RunPlacement {
        if self.rpa_any_slot {
            RunPlacement::AnySlot
        } else {
            RunPlacement::RunSlots
        }
    }

    fn require_dataset(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::input("no dataset directory given"))
    }

    fn word_sets(&self) -> Result<Vec<WordSet>> {
        let path = self
            .freq
            .as_deref()
            .ok_or_else(|| Error::input("no frequency list given"))?;
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let freq = load_frequency_list(BufReader::new(file))?;
        build_word_sets(&freq, &self.degrees)
    }
}

/// One document per file in `<root>/<class>/`, classes and files sorted by
/// name; ids are `<class>/<file name>`.
pub fn load_dataset(root: &Path) -> Result<Vec<Document>> {
    let mut classes: Vec<PathBuf> = read_dir_sorted(root)?.into_iter().filter(|p| p.is_dir()).collect();
    classes.retain(|p| !file_name(p).starts_with('.'));
    if classes.is_empty() {
        return Err(Error::input(format!("{} has no class directories", root.display())));
    }
    let mut docs = Vec::new();
    for dir in classes {
        let class = file_name(&dir);
        for file in read_dir_sorted(&dir)? {
            if !file.is_file() || file_name(&file).starts_with('.') {
                continue;
            }
            let body = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            docs.push(Document::new(format!("{class}/{}", file_name(&file)), class.clone(), body));
        }
    }
    if docs.len() < 3 {
        return Err(Error::input("dataset needs at least 3 documents"));
    }
    Ok(docs)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn assignment_of(docs: &[Document]) -> Result<ClusterAssignment> {
    ClusterAssignment::from_pairs(docs.iter().map(|d| (d.id.clone(), d.class_label.clone())))
}

/// Distance matrices on disk, keyed by a digest of the codec and inputs.
#[derive(Debug, Clone)]
pub struct MatrixCache {
    dir: Option<PathBuf>,
}

impl MatrixCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MatrixCache { dir: Some(dir.into()) }
    }

    /// A cache that never stores anything.
    pub fn disabled() -> Self {
        MatrixCache { dir: None }
    }

    pub fn key(docs: &[Document], codec: &CodecSpec) -> String {
        let mut sorted: Vec<&Document> = docs.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let mut h = Sha256::new();
        h.update(b"ncd-matrix-v1\n");
        h.update(codec.to_string().as_bytes());
        for d in sorted {
            h.update(b"\n");
            h.update((d.id.len() as u64).to_le_bytes());
            h.update(d.id.as_bytes());
            h.update((d.body.len() as u64).to_le_bytes());
            h.update(&d.body);
        }
        hex::encode(h.finalize())
    }

    /// Matrix rows sorted by id; computed only on a cache miss.
    pub fn matrix(&self, docs: &[Document], codec: &CodecSpec) -> Result<DistanceMatrix> {
        let Some(dir) = &self.dir else {
            return Ok(ncd_matrix(docs, codec)?.sorted_by_id());
        };
        let path = dir.join(format!("{}.csv", Self::key(docs, codec)));
        if let Ok(file) = fs::File::open(&path) {
            match DistanceMatrix::from_csv(BufReader::new(file)) {
                Ok(mut m) => {
                    m.codec = Some(codec.clone());
                    return Ok(m);
                }
                Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
            }
        }
        let m = ncd_matrix(docs, codec)?.sorted_by_id();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, m.to_csv_exact()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(m)
    }
}

/// Build, refine and score one tree.
pub fn cluster_and_score(
    m: &DistanceMatrix,
    classes: &ClusterAssignment,
    iterations: usize,
    chain_seeds: &[u64],
) -> Result<(UnrootedBinaryTree, QualitySummary)> {
    let t = build_tree_agglomerative(m)?;
    let t = if iterations > 0 {
        refine_best_of(m, &t, iterations, chain_seeds)?
    } else {
        t
    };
    let q = summarize(&t, classes)?;
    Ok((t, q))
}

fn degree_label(d: f64) -> String {
    format!("{d:.1}")
}

/// Write distorted copies of the dataset, one directory per
/// (technique, degree, repetition), plus `manifest.tsv`. OO is
/// deterministic and is written once per degree.
pub fn cmd_distort(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let sets = cfg.word_sets()?;
    let docs = load_dataset(cfg.require_dataset()?)?;
    let mut manifest = String::from("path\ttechnique\tdegree\trepetition\tseed\tdocument\n");
    for tech in cfg.technique_list()? {
        let reps = if tech == Technique::Oo { 1 } else { cfg.repetitions };
        for set in &sets {
            for rep in 0..reps {
                let dir = cfg
                    .out
                    .join(tech.to_string())
                    .join(format!("d{}", degree_label(set.degree)))
                    .join(format!("r{rep:02}"));
                let plan = DistortionPlan {
                    placement: cfg.placement(),
                    ..DistortionPlan::new(tech, set.degree, cfg.seed, rep as u64)
                };
                let outs: Vec<Document> = docs
                    .par_iter()
                    .map(|d| distort_document(d, set, &plan))
                    .collect::<Result<_>>()?;
                for d in outs {
                    let path = dir.join(&d.id);
                    if let Some(parent) = path.parent() {
                        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                    }
                    fs::write(&path, &d.body).map_err(|e| Error::io(&path, e))?;
                    let _ = writeln!(
                        manifest,
                        "{}\t{tech}\t{}\t{rep}\t{}\t{}",
                        path.display(),
                        degree_label(set.degree),
                        cfg.seed,
                        d.id
                    );
                }
            }
        }
    }
    let path = cfg.out.join("manifest.tsv");
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// One (codec, technique, degree, repetition) result.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub codec: String,
    pub technique: Technique,
    pub degree: f64,
    pub repetition: usize,
    pub seed: u64,
    pub clustering_error: u64,
    pub dsc: f64,
}

impl Cell {
    fn key(codec: &str, technique: Technique, degree: f64, repetition: usize) -> String {
        let mut h = Sha256::new();
        h.update(format!("{codec}\n{technique}\n{}\n{repetition}", degree_label(degree)).as_bytes());
        hex::encode(&h.finalize()[..12])
    }
}

/// Report tables as CSV text.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub cells: Vec<Cell>,
    /// codec,technique,degree,runs,dsc_mean,dsc_std,error_mean,error_std
    pub curves_csv: String,
    /// codec,technique,dsc_avg,dsc_rel
    pub summary_csv: String,
    /// codec,technique,degree,repetition,seed,clustering_error,dsc
    pub cells_csv: String,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn config_digest(cfg: &ExperimentConfig, docs: &[Document]) -> String {
    let mut h = Sha256::new();
    h.update(
        format!(
            "{:?}|{:?}|{:?}|{}|{}|{}|{}|{}",
            cfg.codecs,
            cfg.technique_list().unwrap_or_default(),
            cfg.degrees,
            cfg.repetitions,
            cfg.seed,
            cfg.refine_iterations,
            cfg.refine_chains,
            cfg.rpa_any_slot
        )
        .as_bytes(),
    );
    let codec = CodecSpec::Ppm { order: 0 };
    h.update(MatrixCache::key(docs, &codec).as_bytes());
    if let Some(f) = &cfg.freq {
        h.update(fs::read(f).unwrap_or_default());
    }
    hex::encode(h.finalize())
}

fn load_progress(path: &Path) -> HashMap<String, (u64, f64)> {
    let mut done = HashMap::new();
    let Ok(file) = fs::File::open(path) else {
        return done;
    };
    for line in BufReader::new(file).lines().map_while(std::result::Result::ok) {
        let mut f = line.split('\t');
        if let (Some(k), Some(e), Some(d)) = (f.next(), f.next(), f.next()) {
            if let (Ok(e), Ok(d)) = (e.parse(), d.parse()) {
                done.insert(k.to_string(), (e, d));
            }
        }
    }
    done
}

/// Distort, measure and cluster for every configured cell, then write
/// `cells.csv`, `curves.csv` and `summary.csv` under `cfg.out`.
///
/// `summary.csv` holds the mean DSC over degrees per technique and its
/// gain relative to OO, `(DSC_OO - DSC_i) / (1 - DSC_i)`.
pub fn cmd_experiment_distortion(cfg: &ExperimentConfig) -> Result<DistortionReport> {
    cfg.validate()?;
    let docs = load_dataset(cfg.require_dataset()?)?;
    run_distortion(cfg, &docs)
}

/// [`cmd_experiment_distortion`] on documents already in memory.
pub fn run_distortion(cfg: &ExperimentConfig, docs: &[Document]) -> Result<DistortionReport> {
    cfg.validate()?;
    let classes = assignment_of(docs)?;
    let sets = cfg.word_sets()?;
    let codecs = cfg.codec_specs()?;
    let techniques = cfg.technique_list()?;
    let cache = MatrixCache::new(cfg.cache_dir());
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;

    // Resume only when the manifest digest matches this configuration.
    let digest = config_digest(cfg, docs);
    let manifest_path = cfg.out.join("run_manifest.txt");
    let progress_path = cfg.out.join("progress.tsv");
    let same_run = fs::read_to_string(&manifest_path).map(|m| m.trim() == digest).unwrap_or(false);
    if !same_run {
        fs::write(&manifest_path, format!("{digest}\n")).map_err(|e| Error::io(&manifest_path, e))?;
        fs::write(&progress_path, "").map_err(|e| Error::io(&progress_path, e))?;
    }
    let mut done = load_progress(&progress_path);
    let mut progress = fs::OpenOptions::new()
        .append(true)
        .create(true)
        .open(&progress_path)
        .map_err(|e| Error::io(&progress_path, e))?;

    let mut cells = Vec::new();
    for codec in &codecs {
        let codec_name = codec.to_string();
        for &tech in &techniques {
            let reps = if tech == Technique::Oo { 1 } else { cfg.repetitions };
            for set in &sets {
                for rep in 0..reps {
                    let key = Cell::key(&codec_name, tech, set.degree, rep);
                    let (err, d) = match done.get(&key) {
                        Some(&hit) => hit,
                        None => {
                            let plan = DistortionPlan {
                                placement: cfg.placement(),
                                ..DistortionPlan::new(tech, set.degree, cfg.seed, rep as u64)
                            };
                            let distorted: Vec<Document> = docs
                                .par_iter()
                                .map(|doc| distort_document(doc, set, &plan))
                                .collect::<Result<_>>()?;
                            let m = cache.matrix(&distorted, codec).map_err(|e| with_cell(e, &codec_name, tech, set.degree, rep))?;
                            let salt = u64::from_str_radix(&key[..16], 16).unwrap_or(0);
                            let (_, q) = cluster_and_score(&m, &classes, cfg.refine_iterations, &cfg.chain_seeds(salt))
                                .map_err(|e| with_cell(e, &codec_name, tech, set.degree, rep))?;
                            writeln!(progress, "{key}\t{}\t{}", q.clustering_error, q.dsc)
                                .map_err(|e| Error::io(&progress_path, e))?;
                            done.insert(key.clone(), (q.clustering_error, q.dsc));
                            (q.clustering_error, q.dsc)
                        }
                    };
                    cells.push(Cell {
                        codec: codec_name.clone(),
                        technique: tech,
                        degree: set.degree,
                        repetition: rep,
                        seed: cfg.seed,
                        clustering_error: err,
                        dsc: d,
                    });
                }
            }
        }
    }
    let report = render_distortion(&cells, &cfg.degrees)?;
    for (name, text) in [
        ("cells.csv", &report.cells_csv),
        ("curves.csv", &report.curves_csv),
        ("summary.csv", &report.summary_csv),
    ] {
        let p = cfg.out.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(report)
}

fn with_cell(e: Error, codec: &str, tech: Technique, degree: f64, rep: usize) -> Error {
    match e {
        Error::CodecUnavailable(m) => Error::CodecUnavailable(format!("{m} (codec {codec}, {tech}, degree {degree:.1}, repetition {rep})")),
        Error::Input(m) => Error::Input(format!("{m} (codec {codec}, {tech}, degree {degree:.1}, repetition {rep})")),
        other => other,
    }
}

fn render_distortion(cells: &[Cell], degrees: &[f64]) -> Result<DistortionReport> {
    let mut sorted = cells.to_vec();
    sorted.sort_by(|a, b| {
        (a.codec.as_str(), a.technique, degree_label(a.degree), a.repetition)
            .cmp(&(b.codec.as_str(), b.technique, degree_label(b.degree), b.repetition))
    });
    let mut cells_csv = String::from("codec,technique,degree,repetition,seed,clustering_error,dsc\n");
    for c in &sorted {
        let _ = writeln!(
            cells_csv,
            "{},{},{},{},{},{},{:.6}",
            csv_field(&c.codec),
            c.technique,
            degree_label(c.degree),
            c.repetition,
            c.seed,
            c.clustering_error,
            c.dsc
        );
    }

    let mut groups: BTreeMap<(String, Technique, String), Vec<&Cell>> = BTreeMap::new();
    for c in &sorted {
        groups
            .entry((c.codec.clone(), c.technique, degree_label(c.degree)))
            .or_default()
            .push(c);
    }
    let mut curves_csv = String::from("codec,technique,degree,runs,dsc_mean,dsc_std,error_mean,error_std\n");
    let mut per_tech: BTreeMap<(String, Technique), Vec<(f64, f64)>> = BTreeMap::new();
    for ((codec, tech, deg), group) in &groups {
        let dscs: Vec<f64> = group.iter().map(|c| c.dsc).collect();
        let errs: Vec<f64> = group.iter().map(|c| c.clustering_error as f64).collect();
        let (dm, ds) = mean_std(&dscs);
        let (em, es) = mean_std(&errs);
        let _ = writeln!(
            curves_csv,
            "{},{tech},{deg},{},{dm:.6},{ds:.6},{em:.6},{es:.6}",
            csv_field(codec),
            group.len()
        );
        per_tech
            .entry((codec.clone(), *tech))
            .or_default()
            .push((group[0].degree, dm));
    }

    let full_sweep = degrees.len() == 10;
    let mut averages: BTreeMap<(String, Technique), f64> = BTreeMap::new();
    for (k, vals) in &per_tech {
        let avg = if full_sweep {
            dsc_average(vals)?
        } else {
            vals.iter().map(|v| v.1).sum::<f64>() / vals.len() as f64
        };
        averages.insert(k.clone(), avg);
    }
    let mut summary_csv = String::from("codec,technique,dsc_avg,dsc_rel\n");
    for ((codec, tech), avg) in &averages {
        let rel = match averages.get(&(codec.clone(), Technique::Oo)) {
            Some(&oo) => format!("{:.6}", dsc_relative(oo, *avg)?),
            None => String::new(),
        };
        let _ = writeln!(summary_csv, "{},{tech},{avg:.6},{rel}", csv_field(codec));
    }
    Ok(DistortionReport {
        cells: sorted,
        curves_csv,
        summary_csv,
        cells_csv,
    })
}

/// One point of the order sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderPoint {
    pub order: usize,
    /// Scores on the undistorted documents.
    pub undistorted: QualitySummary,
    /// Mean DSC of OO over the configured degrees, when a frequency list
    /// is configured.
    pub dsc_oo: Option<f64>,
}

/// PPM order sweep: for each order, score the undistorted dataset and,
/// with a frequency list, run the OO distortion sweep. Writes
/// `order_curve.csv`.
pub fn cmd_experiment_order_sweep(cfg: &ExperimentConfig) -> Result<Vec<OrderPoint>> {
    let docs = load_dataset(cfg.require_dataset()?)?;
    run_order_sweep(cfg, &docs)
}

pub fn run_order_sweep(cfg: &ExperimentConfig, docs: &[Document]) -> Result<Vec<OrderPoint>> {
    if cfg.orders.is_empty() {
        return Err(Error::input("no PPM orders configured"));
    }
    let classes = assignment_of(docs)?;
    let cache = MatrixCache::new(cfg.cache_dir());
    let mut points = Vec::new();
    for &order in &cfg.orders {
        let codec = CodecSpec::ppm(order)?;
        let m = cache.matrix(docs, &codec)?;
        let (_, undistorted) = cluster_and_score(&m, &classes, cfg.refine_iterations, &cfg.chain_seeds(order as u64))?;
        let dsc_oo = if cfg.freq.is_some() {
            let sub = ExperimentConfig {
                codecs: vec![codec.to_string()],
                techniques: vec!["OO".into()],
                out: cfg.out.join(format!("order-{order}")),
                cache: Some(cfg.cache_dir()),
                ..cfg.clone()
            };
            let report = run_distortion(&sub, docs)?;
            let dscs: Vec<f64> = report.cells.iter().map(|c| c.dsc).collect();
            Some(dscs.iter().sum::<f64>() / dscs.len() as f64)
        } else {
            None
        };
        points.push(OrderPoint {
            order,
            undistorted,
            dsc_oo,
        });
    }
    let mut csv = String::from("order,clustering_error,dsc,dsc_oo,one_minus_dsc_oo\n");
    for p in &points {
        let (oo, gap) = match p.dsc_oo {
            Some(v) => (format!("{v:.6}"), format!("{:.6}", 1.0 - v)),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            csv,
            "{},{},{:.6},{oo},{gap}",
            p.order, p.undistorted.clustering_error, p.undistorted.dsc
        );
    }
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let path = cfg.out.join("order_curve.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(points)
}

/// Grammar for one `v` binding with the configured `w`.
pub fn class_grammar(cfg: &ExperimentConfig, v: &str) -> Result<Grammar> {
    let text = match &cfg.grammar {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => BUNDLED_GRAMMAR.to_string(),
    };
    let bindings = grammar::parse_bindings(&format!("v={v},w={}", cfg.w))?;
    grammar::parse_grammar(text.as_bytes(), &bindings)
}

/// Generated corpus: `per_class` files for each `v` binding. Class `k`
/// gets ids starting with the letter `A + k`; each file has its own PRNG
/// stream.
pub fn grammar_corpus(cfg: &ExperimentConfig, seed: u64, per_class: usize) -> Result<Vec<Document>> {
    let mut specs = Vec::new();
    for (k, v) in cfg.v_values.iter().enumerate() {
        let g = class_grammar(cfg, v)?;
        let letter = (b'A' + (k % 26) as u8) as char;
        for i in 0..per_class {
            specs.push(CorpusSpec {
                grammar: g.clone(),
                target_size_bytes: cfg.target_size,
                seed,
                stream: (k * per_class + i) as u64,
                id: format!("{letter}{:02}", i + 1),
                class_label: format!("v={v}"),
            });
        }
    }
    specs.par_iter().map(grammar::generate_corpus).collect()
}

/// One row of the grammar experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct GrammarRow {
    pub seed: u64,
    pub order: usize,
    /// From the small corpus tree.
    pub clustering_error: u64,
    pub dsc: f64,
    /// From the large corpus projection.
    pub silhouette: f64,
    pub stress: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrammarReport {
    pub rows: Vec<GrammarRow>,
    /// (q class, p class, KL(q || p) in bits)
    pub kl: Vec<(String, String, f64)>,
}

/// Which parts of the grammar experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrammarParts {
    pub trees: bool,
    pub projections: bool,
}

impl Default for GrammarParts {
    fn default() -> Self {
        GrammarParts {
            trees: true,
            projections: true,
        }
    }
}

/// Generate small and large corpora per seed, then for every PPM order
/// cluster the small one and project the large one. Writes trees,
/// projection plots, `grammar.csv` and `kl.csv`.
pub fn cmd_experiment_grammar(cfg: &ExperimentConfig, parts: GrammarParts) -> Result<GrammarReport> {
    if cfg.v_values.len() < 2 {
        return Err(Error::input("the grammar experiment needs at least two v values"));
    }
    if cfg.orders.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::input("orders and seeds must be non-empty"));
    }
    let cache = MatrixCache::new(cfg.cache_dir());
    let tree_dir = cfg.out.join("trees");
    let proj_dir = cfg.out.join("projections");
    for d in [&cfg.out, &tree_dir, &proj_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let small = if parts.trees { Some(grammar_corpus(cfg, seed, cfg.small_per_class)?) } else { None };
        let large = if parts.projections { Some(grammar_corpus(cfg, seed, cfg.large_per_class)?) } else { None };
        for &order in &cfg.orders {
            let codec = CodecSpec::ppm(order)?;
            let mut row = GrammarRow {
                seed,
                order,
                clustering_error: 0,
                dsc: f64::NAN,
                silhouette: f64::NAN,
                stress: f64::NAN,
            };
            if let Some(docs) = &small {
                let m = cache.matrix(docs, &codec)?;
                let classes = assignment_of(docs)?;
                let salt = seed.wrapping_mul(31).wrapping_add(order as u64);
                let (t, q) = cluster_and_score(&m, &classes, cfg.refine_iterations, &cfg.chain_seeds(salt))?;
                let p = tree_dir.join(format!("seed{seed}_order{order}.nwk"));
                fs::write(&p, format!("{}\n", t.canonical_newick())).map_err(|e| Error::io(&p, e))?;
                row.clustering_error = q.clustering_error;
                row.dsc = q.dsc;
            }
            if let Some(docs) = &large {
                let m = cache.matrix(docs, &codec)?;
                let proj = mds_project(&m, &assignment_of(docs)?)?;
                emit_plot(&proj, &proj_dir.join(format!("seed{seed}_order{order}")))?;
                row.silhouette = silhouette_euclidean(&proj)?;
                row.stress = proj.stress;
            }
            log::info!(
                "seed {seed} order {order}: error {} dsc {:.4} silhouette {:.4}",
                row.clustering_error,
                row.dsc,
                row.silhouette
            );
            rows.push(row);
        }
    }

    let mut dists = Vec::new();
    for v in &cfg.v_values {
        let g = class_grammar(cfg, v)?;
        dists.push((format!("v={v}"), grammar::enumerate_distribution(&g)?));
    }
    let mut kl = Vec::new();
    for (qn, q) in &dists {
        for (pn, p) in &dists {
            if qn != pn {
                kl.push((qn.clone(), pn.clone(), grammar::kl_divergence(q, p)?));
            }
        }
    }

    let fmt_opt = |v: f64| if v.is_nan() { String::new() } else { format!("{v:.6}") };
    let mut csv = String::from("seed,order,clustering_error,dsc,silhouette,stress\n");
    for r in &rows {
        let err = if parts.trees { r.clustering_error.to_string() } else { String::new() };
        let _ = writeln!(
            csv,
            "{},{},{err},{},{},{}",
            r.seed,
            r.order,
            fmt_opt(r.dsc),
            fmt_opt(r.silhouette),
            fmt_opt(r.stress)
        );
    }
    let p = cfg.out.join("grammar.csv");
    fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
    let mut kcsv = String::from("q,p,kl_bits\n");
    for (q, p, v) in &kl {
        let _ = writeln!(kcsv, "{q},{p},{v:.6}");
    }
    let p = cfg.out.join("kl.csv");
    fs::write(&p, kcsv).map_err(|e| Error::io(&p, e))?;
    Ok(GrammarReport { rows, kl })
}

/// Synthetic corpus whose classes differ only in vocabulary: each class
/// owns a few keywords scattered through filler text drawn from a shared
/// vocabulary in random order. Word order carries no class signal.
pub fn keyword_corpus(classes: usize, per_class: usize, words_per_doc: usize, seed: u64) -> Vec<Document> {
    const FILLER: [&str; 24] = [
        "river", "stone", "window", "market", "letter", "garden", "winter", "engine", "silver", "harbour", "candle",
        "ladder", "meadow", "pocket", "signal", "timber", "valley", "anchor", "basket", "copper", "saddle", "tunnel",
        "velvet", "wagon",
    ];
    let mut docs = Vec::new();
    for c in 0..classes {
        let keywords: Vec<String> = (0..4).map(|k| format!("kw{c}x{k}q")).collect();
        for i in 0..per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((c * per_class + i) as u64);
            let mut words: Vec<String> = (0..words_per_doc)
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        keywords.choose(&mut rng).expect("keywords").clone()
                    } else {
                        FILLER.choose(&mut rng).expect("filler").to_string()
                    }
                })
                .collect();
            words.shuffle(&mut rng);
            docs.push(Document::new(format!("k{c}/{i:02}"), format!("k{c}"), words.join(" ").into_bytes()));
        }
    }
    docs
}

/// Write documents as `<root>/<class>/<file>` (the loader's layout).
pub fn write_dataset(root: &Path, docs: &[Document]) -> Result<()> {
    let mut seen = HashSet::new();
    for d in docs {
        let name = d.id.rsplit('/').next().unwrap_or(&d.id);
        let path = root.join(&d.class_label).join(name);
        if !seen.insert(path.clone()) {
            return Err(Error::input(format!("two documents map to {}", path.display())));
        }
        let parent = path.parent().expect("has parent");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        fs::write(&path, &d.body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
