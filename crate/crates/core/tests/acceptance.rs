//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. The
//! process fails if a criterion fails that is not listed in `KNOWN_UNMET`,
//! or if a listed one starts passing (the list must then be updated).

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use ncdstruct::dendro::{all_topologies, LeafPaths, RootedDendrogram};
use ncdstruct::grammar::{enumerate_distribution, parse_bindings, parse_grammar};
use ncdstruct::metrics::{baseline_for_class, clustering_error, dsc, dsc_relative, ClusterAssignment};
use ncdstruct::pipeline::{
    cmd_experiment_grammar, keyword_corpus, run_order_sweep, ExperimentConfig, GrammarParts, BUNDLED_GRAMMAR,
};

use common::*;

/// Criteria that cannot be met, with the reason. Each one still runs
/// and prints its FAIL line.
const KNOWN_UNMET: &[(u8, &str)] = &[
    (
        1,
        "no tree with the required within-class distances scores 0.589; exhaustive search bottoms out at 0.598 (0.5925 unrooted); the fixture is the closest tree",
    ),
    (
        4,
        "the classes differ only in one branch frequency and every terminal is fixed by a one-symbol context, so the middle class (v=1/5) wraps around a neighbour at orders 2, 4 and 6 alike",
    ),
    (
        5,
        "projection silhouette grows monotonically with order on this grammar; order 6 beats order 4",
    ),
];

const ERRORS_TREE: &str = include_str!("../fixtures/tree_with_errors.nwk");
const ERRORLESS_TREE: &str = include_str!("../fixtures/tree_errorless.nwk");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

// 1: exact clustering errors and silhouettes on the two tree fixtures
fn tree_fixture_scores() -> Outcome {
    const DSC_TOL: f64 = 0.001;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, text, want_err, want_dsc) in [
        ("with-errors", ERRORS_TREE, 9u64, 0.589),
        ("errorless", ERRORLESS_TREE, 0, 0.767),
    ] {
        let t = match RootedDendrogram::from_newick(text.trim()) {
            Ok(t) => t,
            Err(e) => return outcome(false, format!("{name}: {e}")),
        };
        let c = ClusterAssignment::from_id_prefix(t.leaf_ids(), '.').expect("fixture ids");
        let err = clustering_error(&t, &c).expect("error");
        let q = dsc(&t, &c).expect("dsc");
        let ok = err == want_err && within(q, want_dsc, DSC_TOL);
        pass &= ok;
        parts.push(format!("{name}: error {err} (want {want_err}), dsc {q:.4} (want {want_dsc}±{DSC_TOL})"));
    }
    outcome(pass, parts.join("; "))
}

// 2: relative DSC gain closes arithmetically
fn relative_gain_arithmetic() -> Outcome {
    const TOL: f64 = 0.002;
    let oo = 0.576;
    let rows = [(0.406, 0.287), (0.364, 0.334), (0.321, 0.376)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (di, want) in rows {
        let got = dsc_relative(oo, di).expect("relative");
        pass &= within(got, want, TOL);
        parts.push(format!("{di} -> {got:.4} (want {want})"));
    }
    outcome(pass, parts.join(", "))
}

// 3: exact sentence entropy and probability mass of the grammar
fn grammar_entropy() -> Outcome {
    let g = parse_grammar(BUNDLED_GRAMMAR.as_bytes(), &parse_bindings("v=1/2,w=1/2").expect("bindings"))
        .expect("grammar");
    let dist = enumerate_distribution(&g).expect("enumerable");
    let total: BigRational = dist.values().cloned().sum();
    let p = dist.get("acft.123456").cloned();
    let sixteenth = BigRational::new(BigInt::one(), BigInt::from(16));
    let bits = p.as_ref().map(|p| -num_traits::ToPrimitive::to_f64(p).unwrap_or(f64::NAN).log2());
    let pass = dist.len() == 16 && total.is_one() && p.as_ref() == Some(&sixteenth) && bits == Some(4.0);
    outcome(
        pass,
        format!(
            "{} sentences, total mass {}, P(acft.123456) = {}, {} bits",
            dist.len(),
            total,
            p.map_or("missing".into(), |p| p.to_string()),
            bits.map_or("-".into(), |b| b.to_string())
        ),
    )
}

fn grammar_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        seeds: (0..5).collect(),
        orders: vec![2, 4, 6],
        out: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

// 4: twelve-file corpus is errorless only at the matching order
fn order_sweep_errorless_at_matching_order() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = grammar_config(dir.path());
    let report = match cmd_experiment_grammar(
        &cfg,
        GrammarParts {
            trees: true,
            projections: false,
        },
    ) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let errors = |order: usize| -> Vec<u64> {
        report.rows.iter().filter(|r| r.order == order).map(|r| r.clustering_error).collect()
    };
    let (e2, e4, e6) = (errors(2), errors(4), errors(6));
    let zero4 = e4.iter().filter(|&&e| e == 0).count();
    let pos2 = e2.iter().filter(|&&e| e > 0).count();
    let pos6 = e6.iter().filter(|&&e| e > 0).count();
    let pass = zero4 >= 4 && pos2 >= 3 && pos6 >= 3;
    outcome(
        pass,
        format!("errors by seed: order 2 {e2:?}, order 4 {e4:?}, order 6 {e6:?}; need order 4 zero in >=4, orders 2/6 nonzero in >=3"),
    )
}

// 5: ninety-file projection separates classes best at order 4
fn projection_peaks_at_matching_order() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = grammar_config(dir.path());
    let report = match cmd_experiment_grammar(
        &cfg,
        GrammarParts {
            trees: false,
            projections: true,
        },
    ) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let sc = |seed: u64, order: usize| {
        report
            .rows
            .iter()
            .find(|r| r.seed == seed && r.order == order)
            .map_or(f64::NAN, |r| r.silhouette)
    };
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..5 {
        let (s2, s4, s6) = (sc(seed, 2), sc(seed, 4), sc(seed, 6));
        if s4 > s2 && s4 > s6 {
            wins += 1;
        }
        parts.push(format!("seed {seed}: {s2:.3}/{s4:.3}/{s6:.3}"));
    }
    outcome(
        wins >= 4,
        format!("silhouette at orders 2/4/6: {}; order 4 best in {wins} of 5 (need >=4)", parts.join(", ")),
    )
}

/// Smallest within-class path sum for `k` class leaves among all trees
/// with two extra leaves.
fn exhaustive_baseline(k: usize) -> u64 {
    if k < 2 {
        return 0;
    }
    let ids: Vec<String> = (0..k).map(|i| format!("c{i}")).chain(["x0".into(), "x1".into()]).collect();
    all_topologies(&ids)
        .expect("topologies")
        .iter()
        .map(|t| {
            let d = t.leaf_distances();
            let mut s = 0u64;
            for i in 0..k {
                for j in i + 1..k {
                    s += d[t.leaf_index(&ids[i]).expect("leaf")][t.leaf_index(&ids[j]).expect("leaf")] as u64;
                }
            }
            s
        })
        .min()
        .expect("at least one topology")
}

// 6: closed-form baseline matches brute force for small classes
fn baseline_matches_enumeration() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 1..=6 {
        let closed = baseline_for_class(k);
        let brute = exhaustive_baseline(k);
        pass &= closed == brute;
        parts.push(format!("B({k})={closed}/{brute}"));
    }
    pass &= baseline_for_class(2) == 1 && baseline_for_class(3) == 5 && baseline_for_class(4) == 13;
    outcome(pass, format!("closed/exhaustive: {}", parts.join(" ")))
}

fn run_property<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Check,
    failures: &mut Vec<String>,
) {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
    let mut runner = TestRunner::new_with_rng(config, rng);
    if let Err(e) = runner.run(&strategy, check) {
        failures.push(format!("{name}: {e}"));
    }
}

// 7: the invariant property suites
fn property_suites() -> Outcome {
    use proptest::prelude::*;
    let mut failures = Vec::new();
    let n = 64;
    run_property("ncd symmetry/range", n, (same_source_pair(), codec()), |((x, y), c)| ncd_symmetric_in_range(&x, &y, &c), &mut failures);
    run_property("ppm determinism", n, (small_bytes(), 1usize..=8), |(d, o)| ppm_deterministic(&d, o), &mut failures);
    run_property("word-set nesting", n, (frequency_list(), prose()), |(f, t)| word_sets_nest(&f, &t), &mut failures);
    run_property(
        "oo length",
        n,
        (prose(), proptest::sample::subsequence(vec!["the", "cat", "don't", "über", "rock"], 0..5)),
        |(t, w)| oo_keeps_length(&t, &word_set(&w)),
        &mut failures,
    );
    run_property(
        "permutation multiset/slots",
        n,
        (masked_text(), technique(), any::<u64>(), 0u64..12),
        |(t, k, s, r)| permutation_preserves_slots(&t, k, s, r),
        &mut failures,
    );
    run_property("kl >= 0, = 0 iff equal", n, distribution_pair(), |(q, p)| kl_nonnegative_and_zero_iff_equal(&q, &p), &mut failures);
    run_property("mds procrustes", n, planar_points(), |p| mds_recovers_planar_points(&p), &mut failures);

    let mut random = vec![0u8; 64 * 1024];
    {
        use rand::{RngCore, SeedableRng};
        rand_chacha::ChaCha8Rng::seed_from_u64(9).fill_bytes(&mut random);
    }
    let random_bpb = (1..=6).map(|o| bits_per_byte(&random, o)).fold(f64::INFINITY, f64::min);
    if random_bpb < 7.9 {
        failures.push(format!("random data {random_bpb:.3} bits/byte < 7.9"));
    }
    let english_bpc = (2..=6).map(|o| bits_per_byte(ENGLISH.as_bytes(), o)).fold(0.0, f64::max);
    if english_bpc > 3.0 {
        failures.push(format!("english {english_bpc:.3} bits/char > 3.0"));
    }
    let detail = if failures.is_empty() {
        format!("7 suites x {n} cases; random >= {random_bpb:.3} bits/byte; english <= {english_bpc:.3} bits/char (orders 2-6)")
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

// 8: what cannot be reproduced here, and the behavioural check standing in
fn desk_scale_substitutes() -> Outcome {
    let statement = "NOT REPRODUCED: absolute distortion curves and DSC tables for the Books, UCI-KDD, Medline and \
                     IMDB corpora need those corpora and the British National Corpus frequency list, which are not \
                     distributable; substitutes are the grammar order sweep (criterion 4) and the keyword order sweep";
    let dir = tempfile::tempdir().expect("tempdir");
    let docs = keyword_corpus(3, 4, 400, 11);
    let cfg = ExperimentConfig {
        orders: vec![2, 6],
        out: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    match run_order_sweep(&cfg, &docs) {
        Ok(points) => {
            let q2 = points[0].undistorted.dsc;
            let q6 = points[1].undistorted.dsc;
            outcome(q2 >= q6, format!("{statement}. keyword corpus DSC order 2 {q2:.4} >= order 6 {q6:.4}"))
        }
        Err(e) => outcome(false, format!("{statement}. keyword sweep failed: {e}")),
    }
}

fn main() {
    let criteria: [(u8, &str, Duration, fn() -> Outcome); 8] = [
        (1, "tree fixture scores", Duration::from_secs(1), tree_fixture_scores),
        (2, "relative gain arithmetic", Duration::from_secs(1), relative_gain_arithmetic),
        (3, "grammar sentence entropy", Duration::from_secs(1), grammar_entropy),
        (4, "order sweep errorless at matching order", Duration::from_secs(300), order_sweep_errorless_at_matching_order),
        (5, "projection silhouette peaks at matching order", Duration::from_secs(900), projection_peaks_at_matching_order),
        (6, "baseline equals exhaustive minimum", Duration::from_secs(60), baseline_matches_enumeration),
        (7, "property suites", Duration::from_secs(300), property_suites),
        (8, "desk-scale substitutes", Duration::from_secs(300), desk_scale_substitutes),
    ];
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, limit, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut o = run();
        let took = start.elapsed();
        if took > limit {
            o.pass = false;
            o.detail = format!("{} [took {took:.1?}, limit {limit:?}]", o.detail);
        }
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict} {name} ({took:.2?}): {}", o.detail);
        let known = KNOWN_UNMET.iter().find(|(k, _)| *k == id);
        match (o.pass, known) {
            (false, Some((_, why))) => println!("    known unmet: {why}"),
            (false, None) => unexpected.push(format!("criterion {id} failed")),
            (true, Some(_)) => unexpected.push(format!("criterion {id} passes but is listed as unmet")),
            (true, None) => {}
        }
    }
    if !unexpected.is_empty() {
        eprintln!("{}", unexpected.join("\n"));
        std::process::exit(1);
    }
}
