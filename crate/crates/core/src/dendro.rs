//! Unrooted binary trees over documents.
//!
//! Trees are built by average-linkage agglomeration (the degree-2 root is
//! then suppressed) and optionally refined by a seeded hill climb that
//! proposes nearest-neighbour interchanges and leaf swaps, accepting a
//! proposal only when the [`tree_score`] strictly drops.
//!
//! Leaf-to-leaf distance counts the internal nodes on the connecting path.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ncd::DistanceMatrix;

/// Node `i < n` is the leaf for `leaf_ids[i]`; nodes `n..2n-2` are internal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnrootedBinaryTree {
    leaf_ids: Vec<String>,
    adj: Vec<Vec<usize>>,
}

impl UnrootedBinaryTree {
    /// Build from leaf ids and an edge list, then check the structure.
    pub fn from_edges(leaf_ids: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = leaf_ids.len();
        if n < 3 {
            return Err(Error::input("an unrooted binary tree needs at least 3 leaves"));
        }
        let nodes = 2 * n - 2;
        let mut adj = vec![Vec::with_capacity(3); nodes];
        for &(a, b) in edges {
            if a >= nodes || b >= nodes || a == b {
                return Err(Error::input(format!("bad edge ({a},{b})")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let t = UnrootedBinaryTree { leaf_ids, adj };
        t.validate()?;
        Ok(t)
    }

    /// Connected, acyclic, leaves of degree 1, internal nodes of degree 3,
    /// `n - 2` internal nodes and unique leaf ids.
    pub fn validate(&self) -> Result<()> {
        let n = self.leaf_ids.len();
        if n < 3 || self.adj.len() != 2 * n - 2 {
            return Err(Error::input("wrong node count for an unrooted binary tree"));
        }
        let ids: BTreeSet<&str> = self.leaf_ids.iter().map(String::as_str).collect();
        if ids.len() != n {
            return Err(Error::input("leaf ids are not unique"));
        }
        for (v, nb) in self.adj.iter().enumerate() {
            let want = if v < n { 1 } else { 3 };
            if nb.len() != want {
                return Err(Error::input(format!(
                    "node {v} has degree {}, expected {want}",
                    nb.len()
                )));
            }
        }
        let edges: usize = self.adj.iter().map(Vec::len).sum::<usize>() / 2;
        if edges != self.adj.len() - 1 {
            return Err(Error::input("edge count does not match a tree"));
        }
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::input("tree is not connected"));
        }
        Ok(())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_ids.len()
    }

    pub fn leaf_ids(&self) -> &[String] {
        &self.leaf_ids
    }

    pub fn leaf_index(&self, id: &str) -> Option<usize> {
        self.leaf_ids.iter().position(|x| x == id)
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, nb) in self.adj.iter().enumerate() {
            for &b in nb {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Internal-node counts between every pair of leaves.
    pub fn leaf_distances(&self) -> Vec<Vec<u32>> {
        leaf_path_counts(&self.adj, self.leaf_count())
    }

    /// Number of internal nodes on the path between leaves `a` and `b`.
    pub fn leaf_distance(&self, a: &str, b: &str) -> Result<u32> {
        let ia = self
            .leaf_index(a)
            .ok_or_else(|| Error::input(format!("unknown leaf {a:?}")))?;
        let ib = self
            .leaf_index(b)
            .ok_or_else(|| Error::input(format!("unknown leaf {b:?}")))?;
        if ia == ib {
            return Err(Error::input("leaf distance needs two distinct leaves"));
        }
        let mut dist = vec![u32::MAX; self.adj.len()];
        dist[ia] = 0;
        let mut queue = VecDeque::from([ia]);
        while let Some(v) = queue.pop_front() {
            if v == ib {
                break;
            }
            for &w in &self.adj[v] {
                if dist[w] == u32::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(dist[ib] - 1)
    }

    fn smallest_leaf_below(&self, node: usize, parent: usize, memo: &mut HashMap<(usize, usize), String>) -> String {
        if let Some(s) = memo.get(&(node, parent)) {
            return s.clone();
        }
        let s = if node < self.leaf_count() {
            self.leaf_ids[node].clone()
        } else {
            self.adj[node]
                .iter()
                .filter(|&&c| c != parent)
                .map(|&c| self.smallest_leaf_below(c, node, memo))
                .min()
                .unwrap_or_default()
        };
        memo.insert((node, parent), s.clone());
        s
    }

    fn write_subtree(&self, node: usize, parent: usize, canonical: bool, memo: &mut HashMap<(usize, usize), String>, out: &mut String) {
        if node < self.leaf_count() {
            out.push_str(&self.leaf_ids[node]);
            return;
        }
        let mut children: Vec<usize> = self.adj[node].iter().copied().filter(|&c| c != parent).collect();
        if canonical {
            children.sort_by_cached_key(|&c| self.smallest_leaf_below(c, node, memo));
        }
        out.push('(');
        for (k, c) in children.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            self.write_subtree(*c, node, canonical, memo, out);
        }
        out.push(')');
    }

    fn newick(&self, canonical: bool) -> String {
        // Hang the tree from the internal node next to the anchor leaf.
        let anchor = if canonical {
            (0..self.leaf_count())
                .min_by(|&a, &b| self.leaf_ids[a].cmp(&self.leaf_ids[b]))
                .unwrap_or(0)
        } else {
            0
        };
        let top = self.adj[anchor][0];
        let mut memo = HashMap::new();
        let mut out = String::new();
        self.write_subtree(top, usize::MAX, canonical, &mut memo, &mut out);
        out.push(';');
        out
    }

    /// Newick text without branch lengths or internal labels.
    pub fn to_newick(&self) -> String {
        self.newick(false)
    }

    /// Newick text that is identical for identical topologies: hung from
    /// the smallest leaf id, children ordered by their smallest leaf id.
    pub fn canonical_newick(&self) -> String {
        self.newick(true)
    }

    /// Parse Newick text. A degree-2 root is suppressed; branch lengths and
    /// internal labels are not supported.
    pub fn from_newick(text: &str) -> Result<Self> {
        let s = text.trim().trim_end_matches(';').trim();
        let bytes = s.as_bytes();
        let mut pos = 0usize;
        let mut leaf_ids: Vec<String> = Vec::new();
        // internal nodes are numbered provisionally from 1_000_000_000 upward
        let mut internal_edges: Vec<(NodeRef, NodeRef)> = Vec::new();
        let mut next_internal = 0usize;

        #[derive(Clone, Copy, PartialEq, Eq, Debug)]
        enum NodeRef {
            Leaf(usize),
            Internal(usize),
        }

        fn parse(
            bytes: &[u8],
            pos: &mut usize,
            leaves: &mut Vec<String>,
            edges: &mut Vec<(NodeRef, NodeRef)>,
            next: &mut usize,
        ) -> Result<NodeRef> {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'(' {
                *pos += 1;
                let me = NodeRef::Internal(*next);
                *next += 1;
                loop {
                    let child = parse(bytes, pos, leaves, edges, next)?;
                    edges.push((me, child));
                    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                        *pos += 1;
                    }
                    match bytes.get(*pos) {
                        Some(b',') => *pos += 1,
                        Some(b')') => {
                            *pos += 1;
                            break;
                        }
                        _ => return Err(Error::input("unbalanced newick text")),
                    }
                }
                Ok(me)
            } else {
                let start = *pos;
                while *pos < bytes.len() && !matches!(bytes[*pos], b',' | b'(' | b')') {
                    *pos += 1;
                }
                let label = String::from_utf8_lossy(&bytes[start..*pos]).trim().to_string();
                if label.is_empty() {
                    return Err(Error::input("empty leaf label in newick text"));
                }
                leaves.push(label);
                Ok(NodeRef::Leaf(leaves.len() - 1))
            }
        }

        let root = parse(bytes, &mut pos, &mut leaf_ids, &mut internal_edges, &mut next_internal)?;
        if pos != bytes.len() {
            return Err(Error::input("trailing characters after newick tree"));
        }
        let n = leaf_ids.len();
        let mut edges: Vec<(NodeRef, NodeRef)> = internal_edges;
        // Suppress a degree-2 root.
        if let NodeRef::Internal(_) = root {
            let kids: Vec<NodeRef> = edges.iter().filter(|(a, _)| *a == root).map(|&(_, b)| b).collect();
            if kids.len() == 2 {
                edges.retain(|(a, _)| *a != root);
                edges.push((kids[0], kids[1]));
            }
        }
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut id_of = |r: NodeRef| -> usize {
            match r {
                NodeRef::Leaf(i) => i,
                NodeRef::Internal(k) => {
                    let len = remap.len();
                    *remap.entry(k).or_insert(n + len)
                }
            }
        };
        let flat: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (id_of(a), id_of(b))).collect();
        UnrootedBinaryTree::from_edges(leaf_ids, &flat)
    }

    /// Exchange the leaves holding ids `a` and `b`.
    pub fn swap_leaves(&mut self, a: usize, b: usize) {
        self.leaf_ids.swap(a, b);
    }

    /// Nearest-neighbour interchange across internal edge `(u, v)`: the
    /// `i`-th non-`v` neighbour of `u` trades places with the `j`-th non-`u`
    /// neighbour of `v`.
    pub fn nni(&mut self, u: usize, v: usize, i: usize, j: usize) -> Result<()> {
        let n = self.leaf_count();
        if u < n || v < n || !self.adj[u].contains(&v) {
            return Err(Error::input("nni needs an internal edge"));
        }
        let x = self.adj[u].iter().copied().filter(|&w| w != v).nth(i % 2).expect("degree 3");
        let y = self.adj[v].iter().copied().filter(|&w| w != u).nth(j % 2).expect("degree 3");
        let replace = |list: &mut Vec<usize>, from: usize, to: usize| {
            if let Some(slot) = list.iter_mut().find(|s| **s == from) {
                *slot = to;
            }
        };
        replace(&mut self.adj[u], x, y);
        replace(&mut self.adj[v], y, x);
        replace(&mut self.adj[x], u, v);
        replace(&mut self.adj[y], v, u);
        Ok(())
    }

    /// Edge list suitable for plotting: one `(a, b)` pair of node labels
    /// per edge, leaves by id and internal nodes as `#k`.
    pub fn edge_export(&self) -> String {
        let label = |v: usize| {
            if v < self.leaf_count() {
                self.leaf_ids[v].clone()
            } else {
                format!("#{}", v - self.leaf_count())
            }
        };
        let mut out = String::from("from,to\n");
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{},{}", label(a), label(b));
        }
        out
    }
}

/// Anything whose leaves are joined by paths through internal nodes.
pub trait LeafPaths {
    fn leaf_ids(&self) -> &[String];
    /// Internal nodes on the path between every pair of leaves.
    fn leaf_distances(&self) -> Vec<Vec<u32>>;
}

impl LeafPaths for UnrootedBinaryTree {
    fn leaf_ids(&self) -> &[String] {
        &self.leaf_ids
    }
    fn leaf_distances(&self) -> Vec<Vec<u32>> {
        UnrootedBinaryTree::leaf_distances(self)
    }
}

fn leaf_path_counts(adj: &[Vec<usize>], n: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; n]; n];
    let mut dist = vec![u32::MAX; adj.len()];
    let mut queue = VecDeque::new();
    for (src, row) in out.iter_mut().enumerate() {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[src] = 0;
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[w] == u32::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        for (dst, cell) in row.iter_mut().enumerate() {
            // edges on the path minus one = internal nodes on the path
            *cell = dist[dst].saturating_sub(1);
        }
    }
    out
}

/// A drawn binary dendrogram that keeps its degree-2 root. Paths that
/// cross the root count it as an internal node, as a reader counting
/// nodes on a rooted drawing would.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedDendrogram {
    leaf_ids: Vec<String>,
    adj: Vec<Vec<usize>>,
}

impl RootedDendrogram {
    /// Parse rooted Newick text whose root has exactly two children.
    pub fn from_newick(text: &str) -> Result<Self> {
        // Hang a placeholder leaf off the root: the root becomes an ordinary
        // degree-3 node and the placeholder is dropped afterwards.
        let body = text.trim().trim_end_matches(';').trim();
        let inner = body
            .strip_prefix('(')
            .and_then(|b| b.strip_suffix(')'))
            .ok_or_else(|| Error::input("rooted newick must be parenthesised"))?;
        const MARK: &str = "\u{1}root";
        let t = UnrootedBinaryTree::from_newick(&format!("({inner},{MARK});"))?;
        let mark = t.leaf_index(MARK).expect("placeholder leaf");
        let n = t.leaf_count() - 1;
        // renumber so leaves stay 0..n and the placeholder disappears
        let map = |v: usize| if v > mark { v - 1 } else { v };
        let adj: Vec<Vec<usize>> = t
            .adj
            .iter()
            .enumerate()
            .filter(|(v, _)| *v != mark)
            .map(|(_, nb)| nb.iter().copied().filter(|&w| w != mark).map(map).collect())
            .collect();
        let leaf_ids: Vec<String> = t.leaf_ids.iter().filter(|id| id.as_str() != MARK).cloned().collect();
        if adj.iter().skip(n).filter(|nb| nb.len() == 2).count() != 1 {
            return Err(Error::input("rooted newick root must have two children"));
        }
        Ok(RootedDendrogram { leaf_ids, adj })
    }

    /// The same topology with the root suppressed.
    pub fn unrooted(&self) -> Result<UnrootedBinaryTree> {
        let n = self.leaf_ids.len();
        let root = (n..self.adj.len())
            .find(|&v| self.adj[v].len() == 2)
            .expect("validated root");
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (a, nb) in self.adj.iter().enumerate() {
            for &b in nb {
                if a < b && a != root && b != root {
                    edges.push((a, b));
                }
            }
        }
        edges.push((self.adj[root][0], self.adj[root][1]));
        let map = |v: usize| if v > root { v - 1 } else { v };
        let edges: Vec<(usize, usize)> = edges.into_iter().map(|(a, b)| (map(a), map(b))).collect();
        UnrootedBinaryTree::from_edges(self.leaf_ids.clone(), &edges)
    }
}

impl LeafPaths for RootedDendrogram {
    fn leaf_ids(&self) -> &[String] {
        &self.leaf_ids
    }
    fn leaf_distances(&self) -> Vec<Vec<u32>> {
        leaf_path_counts(&self.adj, self.leaf_ids.len())
    }
}

/// Map each tree leaf to its row in `m`.
fn leaf_rows(t: &UnrootedBinaryTree, m: &DistanceMatrix) -> Result<Vec<usize>> {
    if t.leaf_count() != m.len() {
        return Err(Error::input("tree and matrix cover different documents"));
    }
    t.leaf_ids()
        .iter()
        .map(|id| {
            m.index_of(id)
                .ok_or_else(|| Error::input(format!("leaf {id:?} missing from matrix")))
        })
        .collect()
}

/// Balanced tree length: sum over leaf pairs of distance times
/// `2^-k`, `k` being the internal nodes on their path. Lower is better,
/// and a tree-additive matrix is minimised by its own topology.
pub fn tree_score(t: &UnrootedBinaryTree, m: &DistanceMatrix) -> Result<f64> {
    let rows = leaf_rows(t, m)?;
    Ok(score_with_rows(t, m, &rows))
}

fn score_with_rows(t: &UnrootedBinaryTree, m: &DistanceMatrix, rows: &[usize]) -> f64 {
    let d = t.leaf_distances();
    let n = t.leaf_count();
    let weights: Vec<f64> = (0..n).map(|k| (-(k as f64)).exp2()).collect();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += m.get(rows[i], rows[j]) * weights[d[i][j] as usize];
        }
    }
    s
}

/// Average-linkage agglomeration with the root suppressed.
///
/// Ties merge the pair whose (smaller, larger) minimum member ids sort
/// first, so the topology does not depend on row order.
pub fn build_tree_agglomerative(m: &DistanceMatrix) -> Result<UnrootedBinaryTree> {
    m.validate()?;
    let n = m.len();
    if n < 3 {
        return Err(Error::input("clustering needs at least 3 documents"));
    }
    struct Cluster {
        node: usize,
        size: usize,
        min_id: String,
    }
    let mut clusters: Vec<Option<Cluster>> = (0..n)
        .map(|i| {
            Some(Cluster {
                node: i,
                size: 1,
                min_id: m.ids[i].clone(),
            })
        })
        .collect();
    let mut dist: Vec<Vec<f64>> = m.values.clone();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(2 * n);
    let mut next_node = n;
    let mut root_children = (0, 0);

    for _ in 0..n - 1 {
        let mut best: Option<(f64, (String, String), usize, usize)> = None;
        for a in 0..clusters.len() {
            let Some(ca) = &clusters[a] else { continue };
            for b in a + 1..clusters.len() {
                let Some(cb) = &clusters[b] else { continue };
                let d = dist[a][b];
                let key = if ca.min_id <= cb.min_id {
                    (ca.min_id.clone(), cb.min_id.clone())
                } else {
                    (cb.min_id.clone(), ca.min_id.clone())
                };
                let better = match &best {
                    None => true,
                    Some((bd, bk, _, _)) => d < *bd || (d == *bd && key < *bk),
                };
                if better {
                    best = Some((d, key, a, b));
                }
            }
        }
        let (_, _, a, b) = best.expect("at least two active clusters");
        let ca = clusters[a].take().expect("active");
        let cb = clusters[b].take().expect("active");
        let node = next_node;
        next_node += 1;
        edges.push((node, ca.node));
        edges.push((node, cb.node));
        root_children = (ca.node, cb.node);

        let size = ca.size + cb.size;
        let new_row: Vec<f64> = (0..clusters.len())
            .map(|c| {
                if clusters[c].is_some() {
                    (ca.size as f64 * dist[a][c] + cb.size as f64 * dist[b][c]) / size as f64
                } else {
                    0.0
                }
            })
            .collect();
        let idx = clusters.len();
        for (c, row) in dist.iter_mut().enumerate() {
            row.push(new_row[c]);
        }
        let mut last = new_row;
        last.push(0.0);
        dist.push(last);
        clusters.push(Some(Cluster {
            node,
            size,
            min_id: ca.min_id.min(cb.min_id),
        }));
        debug_assert_eq!(idx + 1, clusters.len());
    }

    // Root is the last node created; fuse its two edges.
    let root = next_node - 1;
    edges.retain(|&(p, _)| p != root);
    edges.push(root_children);
    UnrootedBinaryTree::from_edges(m.ids.clone(), &edges)
}

/// Seeded hill climb; the result never scores worse than the input.
pub fn refine_tree(m: &DistanceMatrix, t: &UnrootedBinaryTree, iterations: usize, seed: u64) -> Result<UnrootedBinaryTree> {
    refine_with_trace(m, t, iterations, seed).map(|(t, _)| t)
}

/// Like [`refine_tree`], also returning the score after every iteration.
pub fn refine_with_trace(
    m: &DistanceMatrix,
    t: &UnrootedBinaryTree,
    iterations: usize,
    seed: u64,
) -> Result<(UnrootedBinaryTree, Vec<f64>)> {
    t.validate()?;
    let rows = leaf_rows(t, m)?;
    let n = t.leaf_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = t.clone();
    // Leaf relabelling moves matrix rows with the ids.
    let mut cur_rows = rows;
    let mut score = score_with_rows(&current, m, &cur_rows);
    let mut trace = Vec::with_capacity(iterations);
    let internal_edges: Vec<(usize, usize)> = current
        .edges()
        .into_iter()
        .filter(|&(a, b)| a >= n && b >= n)
        .collect();

    for _ in 0..iterations {
        let mut cand = current.clone();
        let mut cand_rows = cur_rows.clone();
        if !internal_edges.is_empty() && rng.gen_bool(0.5) {
            // internal edges are re-read from the candidate: NNI changes them
            let edges: Vec<(usize, usize)> = cand
                .edges()
                .into_iter()
                .filter(|&(a, b)| a >= n && b >= n)
                .collect();
            let (u, v) = edges[rng.gen_range(0..edges.len())];
            cand.nni(u, v, rng.gen_range(0..2), rng.gen_range(0..2))?;
        } else {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            cand.swap_leaves(a, b);
            cand_rows.swap(a, b);
        }
        let s = score_with_rows(&cand, m, &cand_rows);
        if s < score {
            current = cand;
            cur_rows = cand_rows;
            score = s;
        }
        trace.push(score);
    }
    current.validate()?;
    Ok((current, trace))
}

/// Run one refinement chain per seed in parallel and keep the best;
/// equal scores fall back to the smallest canonical Newick string.
pub fn refine_best_of(m: &DistanceMatrix, t: &UnrootedBinaryTree, iterations: usize, seeds: &[u64]) -> Result<UnrootedBinaryTree> {
    let results: Vec<(f64, String, UnrootedBinaryTree)> = seeds
        .par_iter()
        .map(|&s| {
            let r = refine_tree(m, t, iterations, s)?;
            let score = tree_score(&r, m)?;
            Ok((score, r.canonical_newick(), r))
        })
        .collect::<Result<_>>()?;
    results
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .map(|(_, _, t)| t)
        .ok_or_else(|| Error::input("no refinement seeds given"))
}

/// Every unrooted binary topology on `ids`, by stepwise leaf insertion.
/// There are `(2n-5)!!` of them, so keep `n` small.
pub fn all_topologies(ids: &[String]) -> Result<Vec<UnrootedBinaryTree>> {
    let n = ids.len();
    if n < 3 {
        return Err(Error::input("need at least 3 leaves"));
    }
    // Edge lists over provisional numbering: leaves 0..n, internals n.. .
    let mut partial: Vec<Vec<(usize, usize)>> = vec![vec![(n, 0), (n, 1), (n, 2)]];
    for leaf in 3..n {
        let internal = n + leaf - 2;
        let mut next = Vec::new();
        for edges in &partial {
            for k in 0..edges.len() {
                let (a, b) = edges[k];
                let mut e = edges.clone();
                e[k] = (a, internal);
                e.push((internal, b));
                e.push((internal, leaf));
                next.push(e);
            }
        }
        partial = next;
    }
    partial
        .into_iter()
        .map(|e| UnrootedBinaryTree::from_edges(ids.to_vec(), &e))
        .collect()
}
