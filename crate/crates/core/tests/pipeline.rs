use std::fs;
use std::path::{Path, PathBuf};

use ncdstruct::codec::CodecSpec;
use ncdstruct::distortion::{build_word_sets, load_frequency_list, standard_degrees, Technique};
use ncdstruct::pipeline::{
    cmd_distort, cmd_experiment_distortion, grammar_corpus, keyword_corpus, load_dataset, run_distortion,
    run_order_sweep, write_dataset, ExperimentConfig,
};
use ncdstruct::{ncd, ncd_matrix, Document};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn small_grammar_docs(seed: u64) -> Vec<Document> {
    let cfg = ExperimentConfig {
        target_size: 3000,
        ..ExperimentConfig::default()
    };
    grammar_corpus(&cfg, seed, 3).unwrap()
}

#[test]
fn frequency_fixture_head() {
    let f = load_frequency_list(fs::read(fixture("english_freq.tsv")).unwrap().as_slice()).unwrap();
    let sets = build_word_sets(&f, &standard_degrees()).unwrap();
    let mut first: Vec<&str> = sets[0].words.iter().map(String::as_str).collect();
    first.sort_unstable();
    assert_eq!(first, ["and", "of", "the"]);
    assert_eq!(sets[9].words.len(), f.len());

    let u = load_frequency_list(fs::read(fixture("uniform_freq.tsv")).unwrap().as_slice()).unwrap();
    let sets = build_word_sets(&u, &standard_degrees()).unwrap();
    for (k, s) in sets.iter().enumerate() {
        assert_eq!(s.words.len(), k + 1);
    }
}

#[test]
fn distort_writes_every_variant_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let docs = keyword_corpus(2, 2, 40, 3);
    write_dataset(&data, &docs).unwrap();
    let cfg = ExperimentConfig {
        dataset: Some(data.clone()),
        freq: Some(fixture("english_freq.tsv")),
        techniques: vec!["OO".into(), "RPE".into()],
        repetitions: 12,
        out: dir.path().join("out"),
        ..ExperimentConfig::default()
    };
    let manifest = cmd_distort(&cfg).unwrap();
    let text = fs::read_to_string(&manifest).unwrap();
    // 10 OO degrees plus 12 RPE repetitions per degree, 4 documents each
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count() - 1, (10 + 120) * 4);
    let oo: Vec<_> = fs::read_dir(dir.path().join("out/OO")).unwrap().collect();
    assert_eq!(oo.len(), 10);
    for entry in fs::read_dir(dir.path().join("out/OO/d0.5/r00/k0")).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_owned();
        let original = fs::read_to_string(data.join("k0").join(&name)).unwrap();
        let masked = fs::read_to_string(&p).unwrap();
        assert_eq!(masked.chars().count(), original.chars().count());
    }
    let reps: Vec<_> = fs::read_dir(dir.path().join("out/RPE/d0.1")).unwrap().collect();
    assert_eq!(reps.len(), 12);
}

#[test]
fn distortion_report_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&data, &keyword_corpus(3, 3, 60, 8)).unwrap();
    let cfg = ExperimentConfig {
        dataset: Some(data),
        freq: Some(fixture("english_freq.tsv")),
        codecs: vec!["ppm:2".into()],
        techniques: vec!["OO".into(), "RPE".into()],
        repetitions: 2,
        refine_iterations: 100,
        out: dir.path().join("a"),
        ..ExperimentConfig::default()
    };
    let first = cmd_experiment_distortion(&cfg).unwrap();
    let progress = fs::read_to_string(dir.path().join("a/progress.tsv")).unwrap();
    assert_eq!(progress.lines().count(), 10 + 20);

    // a rerun in place finds every cell done and reproduces the report
    let again = cmd_experiment_distortion(&cfg).unwrap();
    assert_eq!(first, again);
    assert_eq!(fs::read_to_string(dir.path().join("a/progress.tsv")).unwrap(), progress);

    // a fresh directory recomputes everything to the same bytes
    let fresh = ExperimentConfig {
        out: dir.path().join("b"),
        ..cfg.clone()
    };
    cmd_experiment_distortion(&fresh).unwrap();
    for name in ["cells.csv", "curves.csv", "summary.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(name)).unwrap(),
            fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    // every cell row names codec, technique, degree, repetition and seed
    let cells = fs::read_to_string(dir.path().join("a/cells.csv")).unwrap();
    assert!(cells.starts_with("codec,technique,degree,repetition,seed,"));
    assert!(cells.lines().skip(1).all(|l| l.starts_with("ppm:2,") && l.split(',').count() == 7));

    // relative gain of OO against itself is zero; RPE's is at least that
    let rel = |tech: &str| -> f64 {
        first
            .summary_csv
            .lines()
            .find(|l| l.split(',').nth(1) == Some(tech))
            .and_then(|l| l.rsplit(',').next())
            .and_then(|v| v.parse().ok())
            .unwrap()
    };
    assert_eq!(rel("OO"), 0.0);
    assert!(rel("RPE") >= rel("OO"));
}

#[test]
fn changed_configuration_discards_progress() {
    let dir = tempfile::tempdir().unwrap();
    let docs = keyword_corpus(2, 3, 40, 2);
    let base = ExperimentConfig {
        freq: Some(fixture("uniform_freq.tsv")),
        codecs: vec!["lz".into()],
        techniques: vec!["OO".into()],
        refine_iterations: 10,
        out: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    run_distortion(&base, &docs).unwrap();
    let other = ExperimentConfig {
        seed: 99,
        ..base.clone()
    };
    run_distortion(&other, &docs).unwrap();
    let progress = fs::read_to_string(dir.path().join("progress.tsv")).unwrap();
    assert_eq!(progress.lines().count(), 10);
}

/// Frequency list over the corpus's own words, so masking hits the
/// frequent sentences first.
fn own_words(docs: &[Document], path: &Path) {
    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    for d in docs {
        for w in String::from_utf8_lossy(&d.body).split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty()) {
            *counts.entry(w.to_string()).or_default() += 1;
        }
    }
    fs::write(path, counts.iter().map(|(w, c)| format!("{w}\t{c}\n")).collect::<String>()).unwrap();
}

#[test]
fn structure_destruction_hurts_grammar_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut gains = Vec::new();
    for seed in 0..5u64 {
        let docs = grammar_corpus(&ExperimentConfig::default(), seed, 4).unwrap();
        let freq = dir.path().join(format!("words{seed}.tsv"));
        own_words(&docs, &freq);
        let cfg = ExperimentConfig {
            freq: Some(freq),
            codecs: vec!["ppm:4".into()],
            techniques: vec!["OO".into(), "RPA".into()],
            repetitions: 2,
            refine_iterations: 300,
            out: dir.path().join(format!("out{seed}")),
            ..ExperimentConfig::default()
        };
        let report = run_distortion(&cfg, &docs).unwrap();
        let line = report.summary_csv.lines().find(|l| l.contains(",RPA,")).unwrap().to_string();
        gains.push(line.rsplit(',').next().unwrap().parse::<f64>().unwrap());
    }
    // sentences are independent, so the effect is small; it never reverses
    assert!(gains.iter().all(|&g| g >= 0.0), "{gains:?}");
    assert!(gains.iter().sum::<f64>() / gains.len() as f64 > 0.0, "{gains:?}");
}

#[test]
fn keyword_classes_favour_low_orders() {
    let dir = tempfile::tempdir().unwrap();
    let docs = keyword_corpus(3, 4, 400, 11);
    let cfg = ExperimentConfig {
        orders: vec![2, 6],
        refine_iterations: 500,
        out: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let points = run_order_sweep(&cfg, &docs).unwrap();
    assert!(points[0].undistorted.dsc >= points[1].undistorted.dsc);
    assert_eq!(
        fs::read_to_string(dir.path().join("order_curve.csv")).unwrap().lines().count(),
        3
    );
}

#[test]
fn single_order_sweep_gives_one_point() {
    let dir = tempfile::tempdir().unwrap();
    let docs = keyword_corpus(2, 3, 60, 1);
    let cfg = ExperimentConfig {
        orders: vec![6],
        freq: Some(fixture("english_freq.tsv")),
        degrees: standard_degrees(),
        refine_iterations: 20,
        out: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let points = run_order_sweep(&cfg, &docs).unwrap();
    assert_eq!(points.len(), 1);
    assert!(points[0].dsc_oo.is_some());
}

#[test]
fn farther_grammar_parameters_are_farther_apart() {
    let cfg = ExperimentConfig {
        target_size: 4000,
        ..ExperimentConfig::default()
    };
    let docs = grammar_corpus(&cfg, 2, 3).unwrap();
    let m = ncd_matrix(&docs, &CodecSpec::Ppm { order: 3 }).unwrap();
    let class = |i: usize| docs[i].id.chars().next().unwrap();
    let mean_between = |a: char, b: char| {
        let mut s = Vec::new();
        for i in 0..docs.len() {
            for j in 0..docs.len() {
                if class(i) == a && class(j) == b {
                    s.push(m.get(i, j));
                }
            }
        }
        s.iter().sum::<f64>() / s.len() as f64
    };
    // A is v=1/4, B is v=1/5, C is v=1/6
    assert!(mean_between('A', 'C') >= mean_between('A', 'B'));
}

#[test]
fn matrix_entries_match_pairwise_ncd() {
    let docs = small_grammar_docs(4);
    let codec = CodecSpec::Ppm { order: 2 };
    let m = ncd_matrix(&docs[..4], &codec).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(m.get(i, j), ncd(&docs[i].body, &docs[j].body, &codec).unwrap());
        }
    }
}

#[test]
fn dataset_layout_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let docs = keyword_corpus(2, 2, 10, 0);
    write_dataset(dir.path(), &docs).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), 4);
    assert!(back.iter().all(|d| d.id.starts_with(&format!("{}/", d.class_label))));
    assert_eq!(Technique::ALL.len(), 4);
}
