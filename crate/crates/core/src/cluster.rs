//! Kernel feature vectors and Ward hierarchical clustering.
//!
//! Cluster distances are squared Euclidean throughout. Leaves are numbered
//! `0..n`, and the cluster formed by merge `s` gets id `n + s`, following the
//! SciPy linkage-matrix convention. Dendrogram heights are half the merge
//! distance.

use std::fmt::Write as _;

use crate::cfg::AnnotatedCfg;
use crate::error::{Error, Result};
use crate::sass::MixVector;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub kernel_id: String,
    pub values: Vec<f64>,
}

/// Corpus-wide denominators for the graph-structure features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureNorms {
    pub max_nodes: usize,
    pub max_edges: usize,
}

impl FeatureNorms {
    pub fn from_corpus<'a>(graphs: impl IntoIterator<Item = &'a AnnotatedCfg>) -> Self {
        let mut norms = FeatureNorms {
            max_nodes: 0,
            max_edges: 0,
        };
        for g in graphs {
            norms.max_nodes = norms.max_nodes.max(g.cfg.blocks.len());
            norms.max_edges = norms.max_edges.max(g.cfg.edges.len());
        }
        norms
    }
}

fn ratio(x: usize, max: usize) -> f64 {
    if max == 0 {
        0.0
    } else {
        x as f64 / max as f64
    }
}

/// `[class fractions…, nodes/max_nodes, edges/max_edges, reference scores…]`.
pub fn feature_vector(
    acfg: &AnnotatedCfg,
    mix: &MixVector,
    refs: Option<&[f64]>,
    norms: FeatureNorms,
) -> FeatureVector {
    let mut values = mix.fraction_vec();
    values.push(ratio(acfg.cfg.blocks.len(), norms.max_nodes));
    values.push(ratio(acfg.cfg.edges.len(), norms.max_edges));
    values.extend(refs.unwrap_or_default().iter().copied());
    FeatureVector {
        kernel_id: acfg.cfg.kernel_id.clone(),
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linkage {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Linkage {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("a,b,distance,size\n");
        for m in &self.merges {
            let _ = writeln!(s, "{},{},{:.6},{}", m.a, m.b, m.distance, m.size);
        }
        s
    }

    /// Leaf ids under each cluster id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members: Vec<Vec<usize>> = (0..self.n).map(|i| vec![i]).collect();
        for m in &self.merges {
            let mut v = [members[m.a].clone(), members[m.b].clone()].concat();
            v.sort_unstable();
            members.push(v);
        }
        members
    }
}

pub fn squared_euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Ward agglomeration with Lance–Williams distance updates. Ties go to the
/// lexicographically smallest (a, b) cluster-id pair.
pub fn ward_linkage(vectors: &[FeatureVector]) -> Result<Linkage> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::DegenerateInput(
            "clustering needs at least two vectors",
        ));
    }
    let dim = vectors[0].values.len();
    if let Some(v) = vectors.iter().find(|v| v.values.len() != dim) {
        return Err(Error::DimMismatch(dim, v.values.len()));
    }

    let total = 2 * n - 1;
    let mut d = vec![vec![0.0; total]; total];
    for i in 0..n {
        for j in i + 1..n {
            let v = squared_euclidean(&vectors[i].values, &vectors[j].values);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut size = vec![0usize; total];
    size[..n].fill(1);
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                if best.is_none_or(|(_, _, bd)| d[a][b] < bd) {
                    best = Some((a, b, d[a][b]));
                }
            }
        }
        let (a, b, dist) = best.expect("at least two active clusters");
        let new = n + step;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &j in &active {
            if j == a || j == b {
                continue;
            }
            let nj = size[j] as f64;
            let v = ((nj + na) * d[a][j] + (nj + nb) * d[b][j] - nj * dist) / (nj + na + nb);
            d[new][j] = v;
            d[j][new] = v;
        }
        size[new] = size[a] + size[b];
        active.retain(|&c| c != a && c != b);
        active.push(new);
        merges.push(Merge {
            a,
            b,
            distance: dist,
            size: size[new],
        });
    }
    Ok(Linkage { n, merges })
}

/// Flat clusters after `n - k` merges, numbered by smallest member leaf.
pub fn cut_clusters(linkage: &Linkage, k: usize) -> Result<Vec<usize>> {
    let n = linkage.n;
    if k == 0 || k > n {
        return Err(Error::BadK { k, n });
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn root(parent: &[usize], mut x: usize) -> usize {
        while parent[x] != x {
            x = parent[x];
        }
        x
    }
    for (s, m) in linkage.merges.iter().take(n - k).enumerate() {
        parent[m.a] = n + s;
        parent[m.b] = n + s;
    }
    let mut index_of_root = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(n);
    for leaf in 0..n {
        let r = root(&parent, leaf);
        let next = index_of_root.len();
        out.push(*index_of_root.entry(r).or_insert(next));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dendrogram {
    /// Indented outline with merge heights.
    pub outline: String,
    pub newick: String,
}

fn newick_name(name: &str) -> String {
    if name
        .chars()
        .any(|c| c.is_whitespace() || "(),:;[]'".contains(c))
    {
        format!("'{}'", name.replace('\'', "''"))
    } else {
        name.to_string()
    }
}

fn height(linkage: &Linkage, id: usize) -> f64 {
    if id < linkage.n {
        0.0
    } else {
        linkage.merges[id - linkage.n].distance / 2.0
    }
}

fn write_newick(linkage: &Linkage, ids: &[String], id: usize, out: &mut String) {
    if id < linkage.n {
        out.push_str(&newick_name(&ids[id]));
        return;
    }
    let m = &linkage.merges[id - linkage.n];
    let h = height(linkage, id);
    out.push('(');
    write_newick(linkage, ids, m.a, out);
    let _ = write!(out, ":{}", h - height(linkage, m.a));
    out.push(',');
    write_newick(linkage, ids, m.b, out);
    let _ = write!(out, ":{}", h - height(linkage, m.b));
    out.push(')');
}

fn write_outline(linkage: &Linkage, ids: &[String], id: usize, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    if id < linkage.n {
        let _ = writeln!(out, "{pad}leaf {id} {}", ids[id]);
        return;
    }
    let m = &linkage.merges[id - linkage.n];
    let _ = writeln!(
        out,
        "{pad}node {id} height {:.6} size {}",
        height(linkage, id),
        m.size
    );
    write_outline(linkage, ids, m.a, depth + 1, out);
    write_outline(linkage, ids, m.b, depth + 1, out);
}

pub fn export_dendrogram(linkage: &Linkage, ids: &[String]) -> Dendrogram {
    assert_eq!(ids.len(), linkage.n, "one name per leaf");
    let root = 2 * linkage.n - 2;
    let mut newick = String::new();
    write_newick(linkage, ids, root, &mut newick);
    newick.push_str(";\n");
    let mut outline = String::new();
    write_outline(linkage, ids, root, 0, &mut outline);
    Dendrogram { outline, newick }
}
