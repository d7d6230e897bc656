//! Transition-probability matrices over the canonical block order, and
//! bilinear rescaling between matrix sizes.

use std::fmt::{self, Write as _};

use crate::cfg::{AnnotatedCfg, BlockId, Node};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixMode {
    /// Each row with outgoing flow sums to one.
    RowStochastic,
    /// All entries together sum to one.
    Global,
    RawCounts,
    /// Result of rescaling; no normalization guarantee.
    Interpolated,
}

impl MatrixMode {
    pub fn name(self) -> &'static str {
        match self {
            MatrixMode::RowStochastic => "row_stochastic",
            MatrixMode::Global => "global",
            MatrixMode::RawCounts => "raw_counts",
            MatrixMode::Interpolated => "interpolated",
        }
    }
}

impl fmt::Display for MatrixMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub kernel_id: String,
    pub n: usize,
    /// Row-major n×n.
    pub entries: Vec<f64>,
    /// Block ids in row order; empty after interpolation.
    pub ordering: Vec<BlockId>,
    pub mode: MatrixMode,
}

impl TransitionMatrix {
    pub fn from_rows(kernel_id: &str, rows: &[Vec<f64>], mode: MatrixMode) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        TransitionMatrix {
            kernel_id: kernel_id.to_string(),
            n,
            entries: rows.concat(),
            ordering: (0..n).collect(),
            mode,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.n + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.n..(r + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|r| self.row(r).to_vec()).collect()
    }

    /// Text form: `n <dim> mode <mode>` then one row per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("n {} mode {}\n", self.n, self.mode);
        for r in 0..self.n {
            let row: Vec<String> = self.row(r).iter().map(|v| format_sig6(*v)).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }
}

/// Formats like C's `%.6g`.
pub fn format_sig6(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.5e}", v);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, v))
    } else {
        let mant = trim_zeros(mant.to_string());
        format!(
            "{}e{}{:02}",
            mant,
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Builds the block-to-block matrix from edge counts. START/STOP edges are
/// left out; parallel edges between the same pair of blocks are summed.
pub fn transition_matrix(acfg: &AnnotatedCfg, mode: MatrixMode) -> Result<TransitionMatrix> {
    let cfg = &acfg.cfg;
    if cfg.blocks.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let ordering = cfg.canonical_order();
    let n = ordering.len();
    let mut pos = vec![0; n];
    for (i, &b) in ordering.iter().enumerate() {
        pos[b] = i;
    }
    let mut entries = vec![0.0; n * n];
    for (e, &count) in cfg.edges.iter().zip(&acfg.edge_counts) {
        if let (Node::Block(s), Node::Block(d)) = (e.src, e.dst) {
            entries[pos[s] * n + pos[d]] += count;
        }
    }
    match mode {
        MatrixMode::RowStochastic => {
            for row in entries.chunks_mut(n) {
                let sum: f64 = row.iter().sum();
                if sum > 0.0 {
                    row.iter_mut().for_each(|v| *v /= sum);
                }
            }
        }
        MatrixMode::Global => {
            let sum: f64 = entries.iter().sum();
            if sum > 0.0 {
                entries.iter_mut().for_each(|v| *v /= sum);
            }
        }
        MatrixMode::RawCounts | MatrixMode::Interpolated => {}
    }
    Ok(TransitionMatrix {
        kernel_id: cfg.kernel_id.clone(),
        n,
        entries,
        ordering,
        mode,
    })
}

/// Bilinear rescale of an n×n matrix onto a target_n×target_n grid whose
/// corners coincide with the source corners.
pub fn interpolate_to(m: &TransitionMatrix, target_n: usize) -> Result<TransitionMatrix> {
    if target_n < m.n || m.n == 0 {
        return Err(Error::BadTarget {
            source_n: m.n,
            target: target_n,
        });
    }
    if target_n == m.n {
        return Ok(m.clone());
    }
    let n = m.n;
    let mut entries = Vec::with_capacity(target_n * target_n);
    if n == 1 {
        entries.resize(target_n * target_n, m.entries[0]);
    } else {
        let scale = (n - 1) as f64 / (target_n - 1) as f64;
        let axis: Vec<(usize, usize, f64)> = (0..target_n)
            .map(|t| {
                let s = t as f64 * scale;
                let lo = (s.floor() as usize).min(n - 1);
                let hi = (lo + 1).min(n - 1);
                (lo, hi, s - lo as f64)
            })
            .collect();
        for &(r0, r1, fr) in &axis {
            for &(c0, c1, fc) in &axis {
                let top = m.get(r0, c0) * (1.0 - fc) + m.get(r0, c1) * fc;
                let bottom = m.get(r1, c0) * (1.0 - fc) + m.get(r1, c1) * fc;
                entries.push(top * (1.0 - fr) + bottom * fr);
            }
        }
    }
    Ok(TransitionMatrix {
        kernel_id: m.kernel_id.clone(),
        n: target_n,
        entries,
        ordering: Vec::new(),
        mode: MatrixMode::Interpolated,
    })
}

/// Brings two matrices to a common size by upscaling the smaller one.
pub fn normalize_pair(
    a: &TransitionMatrix,
    b: &TransitionMatrix,
) -> Result<(TransitionMatrix, TransitionMatrix)> {
    let n = a.n.max(b.n);
    Ok((interpolate_to(a, n)?, interpolate_to(b, n)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::{attribute_profile, build_cfg};
    use crate::profile::KernelProfile;
    use crate::sass::parse_listing;
    use std::collections::BTreeMap;

    fn m(rows: &[&[f64]]) -> TransitionMatrix {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        TransitionMatrix::from_rows("k", &rows, MatrixMode::RowStochastic)
    }

    fn chain() -> AnnotatedCfg {
        let text = "\
.L_a:
/*0000*/ BRA `(.L_b);
.L_b:
/*0008*/ BRA `(.L_c);
.L_c:
/*0010*/ EXIT;
.L_dead:
/*0018*/ EXIT;
";
        let g = build_cfg(&parse_listing(text, "k").unwrap(), "a").unwrap();
        let mut p = KernelProfile::new("k");
        let mut rec = BTreeMap::new();
        rec.insert((".L_a".to_string(), ".L_b".to_string()), 4);
        rec.insert((".L_b".to_string(), ".L_c".to_string()), 4);
        p.edge_counts = Some(rec);
        attribute_profile(&g, &p).unwrap()
    }

    #[test]
    fn chain_row_stochastic() {
        let t = transition_matrix(&chain(), MatrixMode::RowStochastic).unwrap();
        assert_eq!(t.n, 4);
        assert_eq!(t.ordering, vec![0, 1, 2, 3]);
        assert_eq!(t.get(0, 1), 1.0);
        assert_eq!(t.get(1, 2), 1.0);
        assert!(t.row(3).iter().all(|v| *v == 0.0));
        assert!(t.row(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn chain_global() {
        let t = transition_matrix(&chain(), MatrixMode::Global).unwrap();
        assert_eq!(t.get(0, 1), 0.5);
        assert_eq!(t.get(1, 2), 0.5);
        assert!((t.entries.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.row(3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_graph() {
        let g = build_cfg(&parse_listing("", "k").unwrap(), "a").unwrap();
        let a = AnnotatedCfg::unprofiled(g);
        assert!(matches!(
            transition_matrix(&a, MatrixMode::Global),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn interpolate_2_to_3() {
        let out = interpolate_to(&m(&[&[0.0, 1.0], &[1.0, 0.0]]), 3).unwrap();
        let want = [[0.0, 0.5, 1.0], [0.5, 0.5, 0.5], [1.0, 0.5, 0.0]];
        for (r, row) in want.iter().enumerate() {
            for (c, w) in row.iter().enumerate() {
                assert!((out.get(r, c) - w).abs() < 1e-12);
            }
        }
        assert_eq!(out.mode, MatrixMode::Interpolated);
    }

    #[test]
    fn interpolate_constant_and_identity() {
        let out = interpolate_to(&m(&[&[0.7]]), 3).unwrap();
        assert!(out.entries.iter().all(|v| *v == 0.7));
        let src = m(&[&[0.1, 0.2], &[0.3, 0.4]]);
        assert_eq!(interpolate_to(&src, 2).unwrap(), src);
        assert!(matches!(
            interpolate_to(&src, 1),
            Err(Error::BadTarget { .. })
        ));
    }

    #[test]
    fn pair_normalization() {
        let a = m(&[&[0.0; 4], &[0.0; 4], &[0.0; 4], &[0.0; 4]]);
        let b = TransitionMatrix::from_rows("b", &vec![vec![0.1; 6]; 6], MatrixMode::Global);
        let (x, y) = normalize_pair(&a, &b).unwrap();
        assert_eq!((x.n, y.n), (6, 6));
        assert_eq!(y, b);
        let (x, y) = normalize_pair(&m(&[&[0.5]]), &m(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(x.entries, vec![0.5; 4]);
        assert_eq!(y.n, 2);
    }

    #[test]
    fn text_export() {
        let t = m(&[&[1.0, 0.0], &[1.0 / 3.0, 2.0 / 3.0]]);
        assert_eq!(
            t.to_text(),
            "n 2 mode row_stochastic\n1 0\n0.333333 0.666667\n"
        );
    }

    #[test]
    fn sig6() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(0.21), "0.21");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.00001234), "1.234e-05");
        assert_eq!(format_sig6(-2.5), "-2.5");
    }
}
