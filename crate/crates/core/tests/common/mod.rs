//! Independent oracles and generators shared by the integration suites.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;

use kernelflow::cfg::{attribute_profile, build_cfg, AnnotatedCfg};
use kernelflow::matrix::{MatrixMode, TransitionMatrix};
use kernelflow::profile::KernelProfile;
use kernelflow::sass::parse_listing;

/// The listing fragment with stub definitions for its two branch targets.
pub const SNIPPET: &str = "\
.L_41:
   /*04a0*/ DSETP.LE.AND P0,PT,|R6|,+INF,PT;
   /*04a8*/ @P0 BRA `(.L_43);
   /*04b0*/ LOP32I.OR R5, R7, 0x80000;
   /*04b8*/ MOV R4, R6;

   /*04c8*/ BRA `(.L_42);
.L_43:
   /*04d0*/ EXIT;
.L_42:
   /*04d8*/ EXIT;
";

const BODY_OPS: &[&str] = &[
    "IADD R1, R1, R2",
    "FFMA R3, R4, R5, R3",
    "LDG.E R6, [R2]",
    "STS [R0], R6",
    "MOV R7, R8",
    "DADD R10, R10, R12",
    "I2F R9, R1",
    "VADD R2, R2, R3",
    "PSETP.AND P1, PT, P0, PT, PT",
    "NOP",
];

/// Random listing of `blocks` labeled regions with mixed terminators.
pub fn random_listing(rng: &mut impl Rng, blocks: usize) -> String {
    let mut text = String::new();
    let mut off = 0u64;
    for b in 0..blocks {
        text.push_str(&format!(".L_{b}:\n"));
        for _ in 0..rng.gen_range(1..=3) {
            let op = BODY_OPS[rng.gen_range(0..BODY_OPS.len())];
            text.push_str(&format!("  /*{off:04x}*/ {op};\n"));
            off += 8;
        }
        let target = rng.gen_range(0..blocks);
        let term = match rng.gen_range(0..6) {
            0 => Some(format!("@P0 BRA `(.L_{target})")),
            1 => Some(format!("@!P1 BRA `(.L_{target})")),
            2 => Some(format!("BRA `(.L_{target})")),
            3 => Some("@P2 EXIT".to_string()),
            4 if b + 1 < blocks => Some("EXIT".to_string()),
            _ => None,
        };
        if let Some(t) = term {
            text.push_str(&format!("  /*{off:04x}*/ {t};\n"));
            off += 8;
        }
    }
    text
}

/// Random listing turned into an annotated graph with random samples (and
/// sometimes observed edges).
pub fn random_annotated(rng: &mut impl Rng, id: &str) -> AnnotatedCfg {
    let blocks = rng.gen_range(1..=8);
    let listing = parse_listing(&random_listing(rng, blocks), id).unwrap();
    let cfg = build_cfg(&listing, "synthetic").unwrap();
    let mut p = KernelProfile::new(id);
    let last = listing.lines.last().unwrap().instr.offset;
    for _ in 0..rng.gen_range(0..20) {
        let off = rng.gen_range(0..=last / 8) * 8;
        *p.samples.entry(off).or_insert(0) += rng.gen_range(1..50);
    }
    if rng.gen_bool(0.3) {
        let mut rec = std::collections::BTreeMap::new();
        for e in &cfg.edges {
            if rng.gen_bool(0.7) {
                rec.insert(
                    (
                        cfg.node_name(e.src).replace("L_", ".L_"),
                        cfg.node_name(e.dst).replace("L_", ".L_"),
                    ),
                    rng.gen_range(0..100),
                );
            }
        }
        p.edge_counts = Some(rec);
    }
    attribute_profile(&cfg, &p).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, id: &str) -> TransitionMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        0.0
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect()
        })
        .collect();
    TransitionMatrix::from_rows(id, &rows, MatrixMode::RawCounts)
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn normalize_rows(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    m.iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter().map(|v| v / s).collect()
            } else {
                vec![1.0 / n as f64; n]
            }
        })
        .collect()
}

/// Fixed point of `x = αKᵀx + (1−α)h` by a direct solve over the explicit
/// Kronecker product.
pub fn isorank_oracle(a: &[Vec<f64>], b: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    let n = a.len();
    let (a, b) = (normalize_rows(a), normalize_rows(b));
    let nn = n * n;
    // K[(k,l),(i,j)] = a[k][i]·b[l][j]
    let mut sys = vec![vec![0.0; nn]; nn];
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            sys[row][row] += 1.0;
            for k in 0..n {
                for l in 0..n {
                    sys[row][k * n + l] -= alpha * a[k][i] * b[l][j];
                }
            }
        }
    }
    let rhs = vec![(1.0 - alpha) / nn as f64; nn];
    dense_solve(sys, rhs)
}

/// Bilinear surface through the source grid, evaluated at continuous
/// source coordinates (row, col).
pub fn bilinear_at(src: &[Vec<f64>], row: f64, col: f64) -> f64 {
    let n = src.len();
    let r0 = (row.floor() as usize).min(n - 1);
    let c0 = (col.floor() as usize).min(n - 1);
    let r1 = (r0 + 1).min(n - 1);
    let c1 = (c0 + 1).min(n - 1);
    let (u, v) = (row - r0 as f64, col - c0 as f64);
    src[r0][c0] * (1.0 - u) * (1.0 - v)
        + src[r0][c1] * (1.0 - u) * v
        + src[r1][c0] * u * (1.0 - v)
        + src[r1][c1] * u * v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMerge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

/// Ward clustering recomputed from scratch each round using the centroid
/// form `2·|A||B|/(|A|+|B|)·‖c_A − c_B‖²`.
pub fn ward_oracle(points: &[Vec<f64>]) -> Vec<OracleMerge> {
    let n = points.len();
    let dim = points[0].len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let centroid = |members: &[usize]| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        for &m in members {
            for (x, p) in c.iter_mut().zip(&points[m]) {
                *x += p;
            }
        }
        c.iter().map(|x| x / members.len() as f64).collect()
    };
    let mut out = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let (ma, mb) = (&clusters[x].1, &clusters[y].1);
                let (ca, cb) = (centroid(ma), centroid(mb));
                let sq: f64 = ca.iter().zip(&cb).map(|(p, q)| (p - q) * (p - q)).sum();
                let (na, nb) = (ma.len() as f64, mb.len() as f64);
                let d = 2.0 * na * nb / (na + nb) * sq;
                let key = (
                    clusters[x].0.min(clusters[y].0),
                    clusters[x].0.max(clusters[y].0),
                );
                let better = match best {
                    None => true,
                    Some((bx, by, bd)) => {
                        let bkey = (
                            clusters[bx].0.min(clusters[by].0),
                            clusters[bx].0.max(clusters[by].0),
                        );
                        d < bd || (d == bd && key < bkey)
                    }
                };
                if better {
                    best = Some((x, y, d));
                }
            }
        }
        let (x, y, d) = best.unwrap();
        let (ida, idb) = (clusters[x].0, clusters[y].0);
        let mut members = clusters[x].1.clone();
        members.extend(&clusters[y].1);
        let size = members.len();
        clusters.remove(y);
        clusters.remove(x);
        clusters.push((n + step, members));
        out.push(OracleMerge {
            a: ida.min(idb),
            b: ida.max(idb),
            distance: d,
            size,
        });
    }
    out
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

pub fn corpus_manifest() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/manifest.txt")
}
