//! Tree quality scores against known document classes.
//!
//! `clustering_error` is the excess of within-class leaf distances over the
//! smallest value any tree could reach for the same class sizes. The
//! dendrogram silhouette (`dsc`) is the silhouette coefficient with leaf
//! distances, where `b(i)` averages over every leaf outside `i`'s class.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::dendro::LeafPaths;
use crate::error::{Error, Result};

/// Document id to class label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterAssignment {
    labels: BTreeMap<String, String>,
}

impl ClusterAssignment {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut labels = BTreeMap::new();
        for (id, class) in pairs {
            let id = id.into();
            let class = class.into();
            if class.is_empty() {
                return Err(Error::input(format!("empty class label for {id:?}")));
            }
            if labels.insert(id.clone(), class).is_some() {
                return Err(Error::input(format!("duplicate id {id:?}")));
            }
        }
        Ok(ClusterAssignment { labels })
    }

    /// Class is the part of each id before the first `sep`.
    pub fn from_id_prefix(ids: &[String], sep: char) -> Result<Self> {
        Self::from_pairs(ids.iter().map(|id| {
            let class = id.split(sep).next().unwrap_or_default();
            (id.clone(), class.to_string())
        }))
    }

    pub fn class_of(&self, id: &str) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Class label to member count.
    pub fn class_sizes(&self) -> BTreeMap<&str, usize> {
        let mut sizes = BTreeMap::new();
        for class in self.labels.values() {
            *sizes.entry(class.as_str()).or_insert(0) += 1;
        }
        sizes
    }

    /// Class index per tree leaf, checking the ids match exactly.
    fn leaf_classes(&self, leaf_ids: &[String]) -> Result<Vec<usize>> {
        if leaf_ids.len() != self.labels.len() {
            return Err(Error::input("class assignment and tree cover different documents"));
        }
        let classes: Vec<&str> = self.class_sizes().into_keys().collect();
        leaf_ids
            .iter()
            .map(|id| {
                let c = self
                    .class_of(id)
                    .ok_or_else(|| Error::input(format!("leaf {id:?} has no class")))?;
                Ok(classes.binary_search(&c).expect("class listed"))
            })
            .collect()
    }
}

/// Smallest possible within-class sum of leaf distances for one class of
/// `k` leaves, in any tree that contains other leaves as well.
///
/// Exact dynamic programme over rooted binary shapes of the class subtree:
/// for each shape track the total leaf depth `D` and the within-class
/// path sum `W` (in edges), keeping the Pareto front of `(D, W)`.
/// Joining shapes `a` and `b` gives
/// `W = Wa + Wb + |b|·Da + |a|·Db + 2|a||b|`, and the answer is
/// `min W − k(k−1)/2` since each path's internal-node count is one less
/// than its edge count.
pub fn baseline_for_class(k: usize) -> u64 {
    if k < 2 {
        return 0;
    }
    // fronts[s] = sorted (depth_sum, pair_sum) with pair_sum strictly falling
    let mut fronts: Vec<Vec<(u64, u64)>> = vec![Vec::new(), vec![(0, 0)]];
    for size in 2..=k {
        let mut best: BTreeMap<u64, u64> = BTreeMap::new();
        for a in 1..=size / 2 {
            let b = size - a;
            let (au, bu) = (a as u64, b as u64);
            for &(da, wa) in &fronts[a] {
                for &(db, wb) in &fronts[b] {
                    let d = da + db + size as u64;
                    let w = wa + wb + bu * da + au * db + 2 * au * bu;
                    let slot = best.entry(d).or_insert(u64::MAX);
                    *slot = (*slot).min(w);
                }
            }
        }
        let mut front = Vec::new();
        let mut floor = u64::MAX;
        for (d, w) in best {
            if w < floor {
                front.push((d, w));
                floor = w;
            }
        }
        fronts.push(front);
    }
    let pairs = (k * (k - 1) / 2) as u64;
    fronts[k].iter().map(|&(_, w)| w).min().expect("non-empty front") - pairs
}

/// Sum of [`baseline_for_class`] over the given class sizes.
pub fn errorless_baseline(class_sizes: &[usize]) -> Result<u64> {
    if class_sizes.iter().any(|&k| k == 0) {
        return Err(Error::input("class sizes must be positive"));
    }
    let mut memo: HashMap<usize, u64> = HashMap::new();
    Ok(class_sizes
        .iter()
        .map(|&k| *memo.entry(k).or_insert_with(|| baseline_for_class(k)))
        .sum())
}

/// Within-class distance sum minus the errorless baseline; 0 means every
/// class sits in a subtree as tight as possible.
pub fn clustering_error<T: LeafPaths + ?Sized>(t: &T, c: &ClusterAssignment) -> Result<u64> {
    let cls = c.leaf_classes(t.leaf_ids())?;
    let d = t.leaf_distances();
    let n = cls.len();
    let mut within = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if cls[i] == cls[j] {
                within += d[i][j] as u64;
            }
        }
    }
    let sizes: Vec<usize> = c.class_sizes().into_values().collect();
    let base = errorless_baseline(&sizes)?;
    within
        .checked_sub(base)
        .ok_or_else(|| Error::Contract(format!("within-class sum {within} below baseline {base}")))
}

/// Per-leaf silhouettes alongside their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteDetail {
    pub mean: f64,
    pub per_leaf: Vec<(String, f64)>,
    /// Leaves alone in their class; they score 0.
    pub singletons: Vec<String>,
}

/// Dendrogram silhouette with per-leaf values.
pub fn dsc_detail<T: LeafPaths + ?Sized>(t: &T, c: &ClusterAssignment) -> Result<SilhouetteDetail> {
    let cls = c.leaf_classes(t.leaf_ids())?;
    let distinct: BTreeSet<usize> = cls.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Undefined("silhouette needs at least two classes".into()));
    }
    let d = t.leaf_distances();
    let n = cls.len();
    let mut per_leaf = Vec::with_capacity(n);
    let mut singletons = Vec::new();
    for i in 0..n {
        let (mut same, mut ns, mut other, mut no) = (0u64, 0u64, 0u64, 0u64);
        for j in 0..n {
            if j == i {
                continue;
            }
            if cls[j] == cls[i] {
                same += d[i][j] as u64;
                ns += 1;
            } else {
                other += d[i][j] as u64;
                no += 1;
            }
        }
        let id = t.leaf_ids()[i].clone();
        if ns == 0 {
            singletons.push(id.clone());
            per_leaf.push((id, 0.0));
            continue;
        }
        let a = same as f64 / ns as f64;
        let b = other as f64 / no as f64;
        let top = a.max(b);
        let s = if top > 0.0 { (b - a) / top } else { 0.0 };
        per_leaf.push((id, s));
    }
    let mean = per_leaf.iter().map(|(_, s)| s).sum::<f64>() / n as f64;
    Ok(SilhouetteDetail {
        mean,
        per_leaf,
        singletons,
    })
}

/// Dendrogram silhouette coefficient in [-1, 1].
pub fn dsc<T: LeafPaths + ?Sized>(t: &T, c: &ClusterAssignment) -> Result<f64> {
    dsc_detail(t, c).map(|d| d.mean)
}

/// Mean DSC over the ten distortion degrees 0.1, 0.2, ..., 1.0.
pub fn dsc_average(values: &[(f64, f64)]) -> Result<f64> {
    let mut seen = [false; 10];
    for &(degree, v) in values {
        let tenth = (degree * 10.0).round();
        if (degree * 10.0 - tenth).abs() > 1e-9 || !(1.0..=10.0).contains(&tenth) {
            return Err(Error::input(format!("degree {degree} is not one of 0.1..1.0")));
        }
        let slot = &mut seen[tenth as usize - 1];
        if *slot {
            return Err(Error::input(format!("degree {degree} given twice")));
        }
        if !v.is_finite() {
            return Err(Error::input("non-finite DSC value"));
        }
        *slot = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::input("need one value for each degree 0.1..1.0"));
    }
    Ok(values.iter().map(|(_, v)| v).sum::<f64>() / 10.0)
}

/// How much of the gap to a perfect score the distortion closes:
/// `(dsc_oo - dsc_i) / (1 - dsc_i)`.
pub fn dsc_relative(dsc_oo: f64, dsc_i: f64) -> Result<f64> {
    if !dsc_oo.is_finite() || !dsc_i.is_finite() {
        return Err(Error::Domain("non-finite DSC".into()));
    }
    if dsc_i >= 1.0 {
        return Err(Error::Domain("reference DSC must be below 1".into()));
    }
    Ok((dsc_oo - dsc_i) / (1.0 - dsc_i))
}

/// Scores for one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitySummary {
    pub leaves: usize,
    pub classes: usize,
    pub clustering_error: u64,
    pub dsc: f64,
}

pub fn summarize<T: LeafPaths + ?Sized>(t: &T, c: &ClusterAssignment) -> Result<QualitySummary> {
    Ok(QualitySummary {
        leaves: t.leaf_ids().len(),
        classes: c.class_sizes().len(),
        clustering_error: clustering_error(t, c)?,
        dsc: dsc(t, c)?,
    })
}

/// CSV report: one header row, then `label,leaves,classes,error,dsc` rows.
pub fn report_csv(rows: &[(String, QualitySummary)]) -> String {
    let mut out = String::from("label,leaves,classes,clustering_error,dsc\n");
    for (label, q) in rows {
        let _ = writeln!(
            out,
            "{label},{},{},{},{:.6}",
            q.leaves, q.classes, q.clustering_error, q.dsc
        );
    }
    out
}
