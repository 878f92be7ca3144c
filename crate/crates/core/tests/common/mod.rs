//! Property checks shared by the property suite and the acceptance target.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use ncdstruct::codec::{compressed_size, CodecSpec};
use ncdstruct::dendro::{refine_with_trace, tree_score, UnrootedBinaryTree};
use ncdstruct::distortion::{
    apply_oo, build_word_sets, permute, standard_degrees, tokenize_masked, DistortionPlan, FrequencyList, Technique,
    TokenKind, WordSet,
};
use ncdstruct::grammar::{kl_divergence, Distribution};
use ncdstruct::metrics::ClusterAssignment;
use ncdstruct::projection::mds_project;
use ncdstruct::{ncd, DistanceMatrix};

pub type Check = Result<(), TestCaseError>;

pub const ENGLISH: &str = include_str!("../../fixtures/english_sample.txt");

// ---- strategies ----

pub fn small_bytes() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        proptest::collection::vec(any::<u8>(), 1..200),
        proptest::collection::vec(prop::sample::select(b"ab c.\n".to_vec()), 1..300),
    ]
}

/// Two documents of one kind (random bytes, small-alphabet text, or
/// English excerpts), 64 bytes or longer. Mixing kinds, or going
/// shorter, lets PPM exceed the NCD range bound (see the ledger).
pub fn same_source_pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    let random = proptest::collection::vec(any::<u8>(), 64..600);
    let small = proptest::collection::vec(prop::sample::select(b"ab c.\n".to_vec()), 64..600);
    let english = (0..ENGLISH.len() - 600, 64usize..600).prop_map(|(s, n)| ENGLISH.as_bytes()[s..s + n].to_vec());
    prop_oneof![
        (random.clone(), random),
        (small.clone(), small),
        (english.clone(), english),
    ]
}

pub fn codec() -> impl Strategy<Value = CodecSpec> {
    prop_oneof![
        (1usize..=6).prop_map(|order| CodecSpec::Ppm { order }),
        Just(CodecSpec::Lz),
        Just(CodecSpec::Bwt),
    ]
}

const VOCAB: &[&str] = &[
    "the", "The", "of", "and", "rock", "n", "roll", "don't", "it’s", "Über", "naïve", "cat", "Cat", "dog", "x", "zebra",
];
const SEPS: &[&str] = &[" ", ", ", ". ", "\n", " - ", "; ", "  ", "1 ", " (", ") "];

/// Text built from words with separators between every pair of tokens.
pub fn prose() -> impl Strategy<Value = String> {
    proptest::collection::vec((prop::sample::select(VOCAB), prop::sample::select(SEPS)), 1..60)
        .prop_map(|parts| parts.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
}

/// Masked text: words and asterisk runs, each followed by a separator.
pub fn masked_text() -> impl Strategy<Value = String> {
    let token = prop_oneof![
        prop::sample::select(VOCAB).prop_map(str::to_string),
        (1usize..8).prop_map(|k| "*".repeat(k)),
    ];
    proptest::collection::vec((token, prop::sample::select(SEPS)), 1..50)
        .prop_map(|parts| parts.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
}

pub fn frequency_list() -> impl Strategy<Value = FrequencyList> {
    proptest::collection::btree_map("[a-z]{1,6}", 1u32..10_000, 1..80).prop_map(|m| {
        FrequencyList::from_counts(m.into_iter().map(|(w, c)| (w, c as f64))).expect("positive counts")
    })
}

pub fn technique() -> impl Strategy<Value = Technique> {
    prop::sample::select(vec![Technique::Rpa, Technique::Rprw, Technique::Rpe])
}

/// Two full-support distributions over the same sentences.
pub fn distribution_pair() -> impl Strategy<Value = (Distribution, Distribution)> {
    (2usize..8)
        .prop_flat_map(|n| (proptest::collection::vec(1u32..20, n), proptest::collection::vec(1u32..20, n)))
        .prop_map(|(a, b)| (normalise(&a), normalise(&b)))
}

pub fn normalise(weights: &[u32]) -> Distribution {
    let total: u32 = weights.iter().sum();
    weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (format!("s{i}"), BigRational::new(BigInt::from(w), BigInt::from(total))))
        .collect()
}

pub fn planar_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..20)
}

/// Random unrooted binary tree by repeated edge insertion.
pub fn random_tree() -> impl Strategy<Value = UnrootedBinaryTree> {
    (3usize..=32)
        .prop_flat_map(|n| (Just(n), proptest::collection::vec(any::<prop::sample::Index>(), n - 3)))
        .prop_map(|(n, picks)| tree_from_picks(n, &picks))
}

pub fn tree_from_picks(n: usize, picks: &[prop::sample::Index]) -> UnrootedBinaryTree {
    let ids: Vec<String> = (0..n).map(|i| format!("L{i:02}")).collect();
    let mut edges = vec![(n, 0), (n, 1), (n, 2)];
    for (k, pick) in picks.iter().enumerate() {
        let leaf = k + 3;
        let mid = n + k + 1;
        let (a, b) = edges.swap_remove(pick.index(edges.len()));
        edges.extend([(a, mid), (mid, b), (mid, leaf)]);
    }
    UnrootedBinaryTree::from_edges(ids, &edges).expect("insertion builds a valid tree")
}

pub fn random_matrix(n: usize, values: &[f64]) -> DistanceMatrix {
    let ids: Vec<String> = (0..n).map(|i| format!("L{i:02}")).collect();
    let mut v = vec![vec![0.0; n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            v[i][j] = values[k % values.len()];
            v[j][i] = v[i][j];
            k += 1;
        }
    }
    DistanceMatrix::new(ids, v, None).expect("valid matrix")
}

// ---- checks ----

pub fn ncd_symmetric_in_range(x: &[u8], y: &[u8], codec: &CodecSpec) -> Check {
    let a = ncd(x, y, codec).map_err(fail)?;
    let b = ncd(y, x, codec).map_err(fail)?;
    prop_assert_eq!(a.to_bits(), b.to_bits(), "ncd is not exactly symmetric");
    prop_assert!((0.0..=1.1).contains(&a), "ncd {} outside [0, 1.1]", a);
    Ok(())
}

pub fn ppm_deterministic(data: &[u8], order: usize) -> Check {
    let codec = CodecSpec::Ppm { order };
    let a = compressed_size(data, &codec).map_err(fail)?;
    let b = compressed_size(data, &codec).map_err(fail)?;
    prop_assert_eq!(a.bits.to_bits(), b.bits.to_bits());
    prop_assert_eq!(a.bytes, b.bytes);
    Ok(())
}

/// Word sets grow with the degree, and so does the masked character count.
pub fn word_sets_nest(freq: &FrequencyList, text: &str) -> Check {
    let sets = build_word_sets(freq, &standard_degrees()).map_err(fail)?;
    let mut last_stars = 0;
    for pair in sets.windows(2) {
        prop_assert!(pair[0].words.is_subset(&pair[1].words), "set at {} not inside next", pair[0].degree);
    }
    for s in &sets {
        let stars = apply_oo(text, s).chars().filter(|&c| c == '*').count();
        prop_assert!(stars >= last_stars);
        last_stars = stars;
    }
    prop_assert_eq!(sets.last().map(|s| s.words.len()), Some(freq.len()));
    Ok(())
}

pub fn oo_keeps_length(text: &str, words: &WordSet) -> Check {
    let out = apply_oo(text, words);
    prop_assert_eq!(out.chars().count(), text.chars().count());
    Ok(())
}

fn sorted_texts(text: &str) -> Vec<String> {
    let mut v: Vec<String> = tokenize_masked(text).into_iter().map(|t| t.text).collect();
    v.sort();
    v
}

fn texts_of(text: &str, kind: TokenKind) -> Vec<String> {
    tokenize_masked(text).into_iter().filter(|t| t.kind == kind).map(|t| t.text).collect()
}

/// Token multiset is kept, separators never move, and each technique
/// leaves the other slot type where it was.
pub fn permutation_preserves_slots(text: &str, technique: Technique, seed: u64, repetition: u64) -> Check {
    let plan = DistortionPlan::new(technique, 0.5, seed, repetition);
    let out = permute(text, &plan).map_err(fail)?;
    prop_assert_eq!(sorted_texts(&out), sorted_texts(text));
    prop_assert_eq!(texts_of(&out, TokenKind::Separator), texts_of(text, TokenKind::Separator));
    match technique {
        Technique::Rpa => prop_assert_eq!(texts_of(&out, TokenKind::Word), texts_of(text, TokenKind::Word)),
        Technique::Rprw => {
            prop_assert_eq!(texts_of(&out, TokenKind::AsteriskRun), texts_of(text, TokenKind::AsteriskRun))
        }
        _ => {}
    }
    prop_assert_eq!(permute(text, &plan).map_err(fail)?, out, "permutation is not deterministic");
    Ok(())
}

pub fn kl_nonnegative_and_zero_iff_equal(q: &Distribution, p: &Distribution) -> Check {
    let d = kl_divergence(q, p).map_err(fail)?;
    prop_assert!(d >= 0.0);
    prop_assert_eq!(d == 0.0, q == p, "KL {} for q == p: {}", d, q == p);
    prop_assert_eq!(kl_divergence(q, q).map_err(fail)?, 0.0);
    Ok(())
}

/// Classical scaling of exact planar distances reproduces the points up
/// to a rigid motion.
pub fn mds_recovers_planar_points(points: &[(f64, f64)]) -> Check {
    let n = points.len();
    let ids: Vec<String> = (0..n).map(|i| format!("p{i:02}")).collect();
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let values: Vec<Vec<f64>> = points.iter().map(|&a| points.iter().map(|&b| dist(a, b)).collect()).collect();
    let m = DistanceMatrix::new(ids.clone(), values, None).map_err(fail)?;
    let labels = ClusterAssignment::from_pairs(ids.iter().map(|id| (id.clone(), "x".to_string()))).map_err(fail)?;
    let proj = mds_project(&m, &labels).map_err(fail)?;
    let got: Vec<(f64, f64)> = proj.points.iter().map(|p| (p.x, p.y)).collect();
    let err = procrustes_residual(&got, points);
    prop_assert!(err < 1e-6, "procrustes residual {}", err);
    Ok(())
}

/// Largest coordinate error after the best rotation or reflection plus
/// translation of `a` onto `b`.
pub fn procrustes_residual(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let n = a.len() as f64;
    let centre = |p: &[(f64, f64)]| {
        let (sx, sy) = p.iter().fold((0.0, 0.0), |s, q| (s.0 + q.0, s.1 + q.1));
        DMatrix::from_fn(p.len(), 2, |i, j| if j == 0 { p[i].0 - sx / n } else { p[i].1 - sy / n })
    };
    let (pa, pb) = (centre(a), centre(b));
    let h: Matrix2<f64> = (pa.transpose() * &pb).fixed_view::<2, 2>(0, 0).into_owned();
    let svd = h.svd(true, true);
    let r = svd.u.expect("u") * svd.v_t.expect("v_t");
    let aligned = pa * r;
    (&aligned - &pb).abs().max()
}

pub fn leaf_distance_is_metric(t: &UnrootedBinaryTree) -> Check {
    let d = t.leaf_distances();
    let n = t.leaf_count();
    for a in 0..n {
        prop_assert_eq!(d[a][a], 0);
        for b in 0..n {
            prop_assert_eq!(d[a][b], d[b][a]);
            if a != b {
                prop_assert!(d[a][b] >= 1);
            }
            for c in 0..n {
                prop_assert!(d[a][c] <= d[a][b] + d[b][c]);
            }
        }
    }
    prop_assert_eq!(t.leaf_distance(&t.leaf_ids()[0], &t.leaf_ids()[n - 1]).map_err(fail)?, d[0][n - 1]);
    Ok(())
}

pub fn refine_never_worsens(t: &UnrootedBinaryTree, m: &DistanceMatrix, seed: u64) -> Check {
    let start = tree_score(t, m).map_err(fail)?;
    let (best, trace) = refine_with_trace(m, t, 60, seed).map_err(fail)?;
    best.validate().map_err(fail)?;
    let mut last = start;
    for &s in &trace {
        prop_assert!(s <= last, "score rose from {} to {}", last, s);
        last = s;
    }
    prop_assert_eq!(tree_score(&best, m).map_err(fail)?, last);
    Ok(())
}

pub fn bits_per_byte(data: &[u8], order: usize) -> f64 {
    compressed_size(data, &CodecSpec::Ppm { order }).expect("ppm").bits / data.len() as f64
}

pub fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

/// Word set holding the given words, for OO checks.
pub fn word_set(words: &[&str]) -> WordSet {
    WordSet {
        degree: 0.5,
        words: words.iter().map(|s| s.to_string()).collect(),
    }
}

/// Class sizes keyed by class, for reporting.
pub fn class_counts(c: &ClusterAssignment) -> BTreeMap<String, usize> {
    c.class_sizes().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
