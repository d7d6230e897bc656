//! Distance measures between equal-size transition matrices, IsoRank
//! alignment, and pairwise score matrices over a kernel set.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{normalize_pair, TransitionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MeasureId {
    Euc,
    Iso,
    Man,
    Min,
    Jac,
    Cos,
}

impl MeasureId {
    pub const ALL: [MeasureId; 6] = [
        MeasureId::Euc,
        MeasureId::Iso,
        MeasureId::Man,
        MeasureId::Min,
        MeasureId::Jac,
        MeasureId::Cos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureId::Euc => "euc",
            MeasureId::Iso => "iso",
            MeasureId::Man => "man",
            MeasureId::Min => "min",
            MeasureId::Jac => "jac",
            MeasureId::Cos => "cos",
        }
    }

    /// Measures for which a kernel is at distance zero from itself.
    pub fn zero_on_self(self) -> bool {
        self != MeasureId::Iso
    }
}

impl fmt::Display for MeasureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasureId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown measure {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoRankParams {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IsoRankParams {
    fn default() -> Self {
        IsoRankParams {
            alpha: 0.85,
            tol: 1e-9,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureParams {
    pub minkowski_p: f64,
    pub isorank: IsoRankParams,
}

impl Default for MeasureParams {
    fn default() -> Self {
        MeasureParams {
            minkowski_p: 3.0,
            isorank: IsoRankParams::default(),
        }
    }
}

fn check_dims(a: &TransitionMatrix, b: &TransitionMatrix) -> Result<()> {
    if a.n != b.n {
        return Err(Error::DimMismatch(a.n, b.n));
    }
    Ok(())
}

fn diffs<'a>(a: &'a TransitionMatrix, b: &'a TransitionMatrix) -> impl Iterator<Item = f64> + 'a {
    a.entries.iter().zip(&b.entries).map(|(x, y)| (x - y).abs())
}

pub fn euclidean(a: &TransitionMatrix, b: &TransitionMatrix) -> Result<f64> {
    check_dims(a, b)?;
    Ok(diffs(a, b).map(|d| d * d).sum::<f64>().sqrt())
}

pub fn manhattan(a: &TransitionMatrix, b: &TransitionMatrix) -> Result<f64> {
    check_dims(a, b)?;
    Ok(diffs(a, b).sum())
}

pub fn minkowski(a: &TransitionMatrix, b: &TransitionMatrix, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::BadOrder(p));
    }
    check_dims(a, b)?;
    if p == 1.0 {
        return manhattan(a, b);
    }
    if p == 2.0 {
        return euclidean(a, b);
    }
    Ok(diffs(a, b).map(|d| d.powf(p)).sum::<f64>().powf(1.0 / p))
}

/// `Σ(x−y)² / (Σx² + Σy² − Σxy)`.
pub fn jaccard(a: &TransitionMatrix, b: &TransitionMatrix) -> Result<f64> {
    check_dims(a, b)?;
    let (mut num, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in a.entries.iter().zip(&b.entries) {
        num += (x - y) * (x - y);
        xx += x * x;
        yy += y * y;
        xy += x * y;
    }
    let den = xx + yy - xy;
    if den == 0.0 {
        return Err(Error::DegenerateInput("jaccard of two all-zero matrices"));
    }
    Ok(num / den)
}

pub fn cosine(a: &TransitionMatrix, b: &TransitionMatrix) -> Result<f64> {
    check_dims(a, b)?;
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for (x, y) in a.entries.iter().zip(&b.entries) {
        xx += x * x;
        yy += y * y;
        xy += x * y;
    }
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::DegenerateInput("cosine of an all-zero matrix"));
    }
    Ok((1.0 - xy / (xx.sqrt() * yy.sqrt())).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub n: usize,
    /// Row-major n×n node-pair scores summing to one.
    pub r: Vec<f64>,
    /// `matching[i]` is the column matched to row i.
    pub matching: Vec<usize>,
    pub matched_weight: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Copy of `m` with every row scaled to sum one; empty rows become uniform.
pub fn row_normalized(m: &TransitionMatrix) -> Vec<f64> {
    let n = m.n;
    let mut out = m.entries.clone();
    for row in out.chunks_mut(n) {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        } else {
            row.iter_mut().for_each(|v| *v = 1.0 / n as f64);
        }
    }
    out
}

/// One damped step `x ← α·Kᵀx + (1−α)·h` with `K = A ⊗ B`, computed as
/// `Aᵀ·X·B` on the n×n reshaping of x.
fn isorank_step(a: &[f64], b: &[f64], x: &[f64], n: usize, alpha: f64) -> Vec<f64> {
    // t = Aᵀ X
    let mut t = vec![0.0; n * n];
    for k in 0..n {
        for i in 0..n {
            let aki = a[k * n + i];
            if aki == 0.0 {
                continue;
            }
            for l in 0..n {
                t[i * n + l] += aki * x[k * n + l];
            }
        }
    }
    let h = (1.0 - alpha) / (n * n) as f64;
    let mut out = vec![h; n * n];
    for i in 0..n {
        for l in 0..n {
            let til = t[i * n + l];
            if til == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += alpha * til * b[l * n + j];
            }
        }
    }
    out
}

/// Greedy one-to-one matching: repeatedly takes the largest remaining score,
/// ties to the lowest (row, column).
pub fn greedy_matching(r: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n * n).collect();
    order.sort_by(|&p, &q| r[q].total_cmp(&r[p]).then(p.cmp(&q)));
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; n];
    let mut matching = vec![usize::MAX; n];
    let mut left = n;
    for idx in order {
        if left == 0 {
            break;
        }
        let (i, j) = (idx / n, idx % n);
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            matching[i] = j;
            left -= 1;
        }
    }
    matching
}

/// IsoRank alignment by power iteration from the uniform vector.
pub fn isorank_align(
    a: &TransitionMatrix,
    b: &TransitionMatrix,
    params: IsoRankParams,
) -> Result<AlignmentResult> {
    isorank_align_traced(a, b, params, |_| {})
}

/// As [`isorank_align`], calling `observe` with the iterate after every step.
pub fn isorank_align_traced(
    a: &TransitionMatrix,
    b: &TransitionMatrix,
    params: IsoRankParams,
    mut observe: impl FnMut(&[f64]),
) -> Result<AlignmentResult> {
    check_dims(a, b)?;
    let IsoRankParams {
        alpha,
        tol,
        max_iter,
    } = params;
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::BadAlpha(alpha));
    }
    let n = a.n;
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let an = row_normalized(a);
    let bn = row_normalized(b);
    let mut x = vec![1.0 / (n * n) as f64; n * n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut next = isorank_step(&an, &bn, &x, n, alpha);
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= sum);
        let change: f64 = next.iter().zip(&x).map(|(p, q)| (p - q).abs()).sum();
        x = next;
        iterations += 1;
        observe(&x);
        if change < tol {
            converged = true;
            break;
        }
    }
    let matching = greedy_matching(&x, n);
    let matched_weight = matching
        .iter()
        .enumerate()
        .map(|(i, &j)| x[i * n + j])
        .sum();
    Ok(AlignmentResult {
        n,
        r: x,
        matching,
        matched_weight,
        iterations,
        converged,
    })
}

/// Scalar distance in [1, 2] from an alignment: 1 when all mass sits on the
/// matching, 2 when the alignment is uniform.
pub fn isorank_distance(al: &AlignmentResult) -> f64 {
    let n = al.n as f64;
    let concentration = if al.n <= 1 {
        1.0
    } else {
        ((al.matched_weight - 1.0 / n) / (1.0 - 1.0 / n)).clamp(0.0, 1.0)
    };
    1.0 + (1.0 - concentration)
}

/// Distance between two equal-size matrices under `measure`.
pub fn distance(
    measure: MeasureId,
    a: &TransitionMatrix,
    b: &TransitionMatrix,
    params: &MeasureParams,
) -> Result<f64> {
    match measure {
        MeasureId::Euc => euclidean(a, b),
        MeasureId::Man => manhattan(a, b),
        MeasureId::Min => minkowski(a, b, params.minkowski_p),
        MeasureId::Jac => jaccard(a, b),
        MeasureId::Cos => cosine(a, b),
        MeasureId::Iso => isorank_align(a, b, params.isorank).map(|al| isorank_distance(&al)),
    }
}

/// Size-normalizes the pair, then applies `measure`.
pub fn compare(
    measure: MeasureId,
    a: &TransitionMatrix,
    b: &TransitionMatrix,
    params: &MeasureParams,
) -> Result<f64> {
    let (x, y) = normalize_pair(a, b)?;
    distance(measure, &x, &y, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatrix {
    pub measure: MeasureId,
    pub kernel_ids: Vec<String>,
    /// Row-major; NaN marks a pair whose computation failed.
    pub scores: Vec<f64>,
    pub scaled: bool,
}

impl PairwiseMatrix {
    pub fn len(&self) -> usize {
        self.kernel_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.len() + j]
    }

    /// Heatmap CSV: kernel ids as header row and column, six decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kernel_id");
        for id in &self.kernel_ids {
            s.push(',');
            s.push_str(id);
        }
        s.push('\n');
        for (i, id) in self.kernel_ids.iter().enumerate() {
            s.push_str(id);
            for j in 0..self.len() {
                let v = self.get(i, j);
                if v.is_nan() {
                    s.push_str(",nan");
                } else {
                    let _ = write!(s, ",{v:.6}");
                }
            }
            s.push('\n');
        }
        s
    }
}

/// All-pairs scores, ordered by kernel id. Failed pairs become NaN.
pub fn pairwise(
    all: &[TransitionMatrix],
    measure: MeasureId,
    params: &MeasureParams,
) -> PairwiseMatrix {
    let mut sorted: Vec<&TransitionMatrix> = all.iter().collect();
    sorted.sort_by(|a, b| a.kernel_id.cmp(&b.kernel_id));
    let n = sorted.len();
    let symmetric = measure != MeasureId::Iso;

    let cells: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !symmetric || i < j)
        .collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| compare(measure, sorted[i], sorted[j], params).unwrap_or(f64::NAN))
        .collect();

    let mut scores = vec![0.0; n * n];
    for (&(i, j), v) in cells.iter().zip(values) {
        scores[i * n + j] = v;
        if symmetric {
            scores[j * n + i] = v;
        }
    }
    PairwiseMatrix {
        measure,
        kernel_ids: sorted.iter().map(|m| m.kernel_id.clone()).collect(),
        scores,
        scaled: false,
    }
}

/// Min-max scaling over the finite off-diagonal scores; results are clamped
/// to [0, 1] so diagonal entries outside that range stay in bounds.
pub fn minmax_scale(pm: &PairwiseMatrix) -> PairwiseMatrix {
    let n = pm.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let v = pm.get(i, j);
            if i != j && v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    let scores = pm
        .scores
        .iter()
        .map(|&v| {
            if v.is_nan() {
                v
            } else if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    PairwiseMatrix {
        measure: pm.measure,
        kernel_ids: pm.kernel_ids.clone(),
        scores,
        scaled: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::MatrixMode;

    fn m(rows: &[&[f64]]) -> TransitionMatrix {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        TransitionMatrix::from_rows("k", &rows, MatrixMode::RowStochastic)
    }

    fn flat(v: &[f64]) -> TransitionMatrix {
        // 1×n vectors are not square; embed them as a diagonal-free row block
        let n = (v.len() as f64).sqrt() as usize;
        assert_eq!(n * n, v.len());
        TransitionMatrix {
            kernel_id: "v".into(),
            n,
            entries: v.to_vec(),
            ordering: (0..n).collect(),
            mode: MatrixMode::RawCounts,
        }
    }

    #[test]
    fn distance_examples() {
        let i = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let s = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(euclidean(&i, &i).unwrap(), 0.0);
        assert_eq!(euclidean(&i, &s).unwrap(), 2.0);
        assert_eq!(manhattan(&i, &s).unwrap(), 4.0);
        assert_eq!(manhattan(&m(&[&[0.3]]), &m(&[&[0.8]])).unwrap(), 0.5);
        assert!((minkowski(&i, &s, 3.0).unwrap() - 4f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!((minkowski(&i, &s, 3.0).unwrap() - 1.5874).abs() < 1e-4);
        assert!(matches!(minkowski(&i, &s, 0.5), Err(Error::BadOrder(_))));
        assert!(matches!(
            euclidean(&i, &m(&[&[1.0]])),
            Err(Error::DimMismatch(2, 1))
        ));
    }

    #[test]
    fn jaccard_examples() {
        // x=[1,0], y=[0,1] padded with zeros to a 2×2 grid
        let x = flat(&[1.0, 0.0, 0.0, 0.0]);
        let y = flat(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(jaccard(&x, &y).unwrap(), 1.0);
        let x = flat(&[2.0, 0.0, 0.0, 0.0]);
        let y = flat(&[1.0, 0.0, 0.0, 0.0]);
        assert!((jaccard(&x, &y).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&x, &x).unwrap(), 0.0);
        let z = flat(&[0.0; 4]);
        assert!(matches!(jaccard(&z, &z), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn cosine_examples() {
        let x = flat(&[1.0, 2.0, 0.0, 0.5]);
        let y = flat(&[2.0, 4.0, 0.0, 1.0]);
        assert!(cosine(&x, &x).unwrap().abs() < 1e-15);
        assert!(cosine(&x, &y).unwrap().abs() < 1e-15);
        let p = flat(&[1.0, 0.0, 0.0, 0.0]);
        let q = flat(&[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(cosine(&p, &q).unwrap(), 1.0);
        assert!(cosine(&p, &flat(&[0.0; 4])).is_err());
    }

    #[test]
    fn isorank_singleton() {
        let a = m(&[&[0.4]]);
        let al = isorank_align(&a, &a, IsoRankParams::default()).unwrap();
        assert_eq!(al.r, vec![1.0]);
        assert_eq!(al.matched_weight, 1.0);
        assert_eq!(al.iterations, 1);
        assert!(al.converged);
        assert_eq!(isorank_distance(&al), 1.0);
    }

    #[test]
    fn isorank_zero_damping_is_uniform() {
        let a = m(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]);
        let b = m(&[&[0.5, 0.5, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        let al = isorank_align(
            &a,
            &b,
            IsoRankParams {
                alpha: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(al.r.iter().all(|v| (v - 1.0 / 9.0).abs() < 1e-15));
        assert!((al.matched_weight - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(isorank_distance(&al), 2.0);
    }

    #[test]
    fn isorank_rejects_bad_alpha() {
        let a = m(&[&[1.0]]);
        for alpha in [-0.1, 1.0, f64::NAN] {
            let p = IsoRankParams {
                alpha,
                ..Default::default()
            };
            assert!(matches!(isorank_align(&a, &a, p), Err(Error::BadAlpha(_))));
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let a = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let b = m(&[&[0.9, 0.1], &[0.2, 0.8]]);
        let p = IsoRankParams {
            alpha: 0.99,
            tol: 1e-15,
            max_iter: 2,
        };
        let al = isorank_align(&a, &b, p).unwrap();
        assert!(!al.converged);
        assert_eq!(al.iterations, 2);
    }

    #[test]
    fn greedy_ties_go_low() {
        assert_eq!(greedy_matching(&[0.25; 4], 2), vec![0, 1]);
        assert_eq!(greedy_matching(&[0.1, 0.4, 0.4, 0.1], 2), vec![1, 0]);
    }

    #[test]
    fn pairwise_identical_kernels() {
        let mut a = m(&[&[0.0, 1.0], &[0.0, 0.0]]);
        a.kernel_id = "b".into();
        let mut b = a.clone();
        b.kernel_id = "a".into();
        let pm = pairwise(&[a, b], MeasureId::Euc, &MeasureParams::default());
        assert_eq!(pm.kernel_ids, vec!["a", "b"]);
        assert_eq!(pm.scores, vec![0.0; 4]);
    }

    #[test]
    fn pairwise_failures_are_nan() {
        let mut z = m(&[&[0.0]]);
        z.kernel_id = "z".into();
        let mut y = z.clone();
        y.kernel_id = "y".into();
        let pm = pairwise(&[z, y], MeasureId::Cos, &MeasureParams::default());
        assert!(pm.get(0, 1).is_nan());
        assert_eq!(pm.get(0, 0), 0.0);
        assert!(pm.to_csv().contains(",nan"));
    }

    #[test]
    fn scaling() {
        let pm = PairwiseMatrix {
            measure: MeasureId::Man,
            kernel_ids: vec!["a".into(), "b".into(), "c".into()],
            scores: vec![0.0, 2.0, 4.0, 2.0, 0.0, 3.0, 4.0, 3.0, 0.0],
            scaled: false,
        };
        let s = minmax_scale(&pm);
        assert_eq!(s.scores, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 1.0, 0.5, 0.0]);
        assert_eq!(minmax_scale(&s), s);

        let spread = PairwiseMatrix {
            scores: vec![0.0, 0.0, 2.0, 0.0, 0.0, 4.0, 2.0, 4.0, 0.0],
            ..pm.clone()
        };
        let s = minmax_scale(&spread);
        assert_eq!((s.get(0, 1), s.get(0, 2), s.get(1, 2)), (0.0, 0.5, 1.0));

        let flat = PairwiseMatrix {
            scores: vec![0.0, 5.0, 5.0, 0.0],
            kernel_ids: vec!["a".into(), "b".into()],
            ..pm
        };
        assert!(minmax_scale(&flat).scores.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn csv_format() {
        let pm = PairwiseMatrix {
            measure: MeasureId::Euc,
            kernel_ids: vec!["a".into(), "b".into()],
            scores: vec![0.0, 1.5, 1.5, 0.0],
            scaled: false,
        };
        assert_eq!(
            pm.to_csv(),
            "kernel_id,a,b\na,0.000000,1.500000\nb,1.500000,0.000000\n"
        );
    }
}
