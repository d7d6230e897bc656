//! Scalar kernel characterization: static goodness, dynamic efficiency and
//! instruction-mix estimation error.

use std::collections::BTreeSet;

use crate::cfg::AnnotatedCfg;
use crate::error::{Error, Result};
use crate::sass::{InstrClass, MixVector};

/// Default operation classes counted by [`goodness`].
pub fn default_goodness_classes() -> BTreeSet<InstrClass> {
    [InstrClass::Fp32, InstrClass::Fp64, InstrClass::Mem]
        .into_iter()
        .collect()
}

/// Classes counted as useful work by [`efficiency`].
pub const EFFICIENCY_CLASSES: [InstrClass; 5] = [
    InstrClass::Fp32,
    InstrClass::Fp64,
    InstrClass::Int,
    InstrClass::Simd,
    InstrClass::Conv,
];

/// `Σ_{j∈J} op_j · calls_n`.
pub fn goodness(mix: &MixVector, calls_n: u64, classes: &BTreeSet<InstrClass>) -> f64 {
    let ops: u64 = classes.iter().map(|c| mix.get(*c)).sum();
    ops as f64 * calls_n as f64
}

/// Compute-class operations per second of execution, times `calls_n`.
pub fn efficiency(mix: &MixVector, time_exec_ns: i64, calls_n: u64) -> Result<f64> {
    if time_exec_ns <= 0 {
        return Err(Error::BadTime(time_exec_ns));
    }
    let ops: u64 = EFFICIENCY_CLASSES.iter().map(|c| mix.get(*c)).sum();
    let seconds = time_exec_ns as f64 * 1e-9;
    Ok(ops as f64 / seconds * calls_n as f64)
}

/// Mean squared difference between the class-fraction vectors.
pub fn mix_error(static_mix: &MixVector, dynamic_mix: &MixVector) -> f64 {
    let s = static_mix.fraction_vec();
    let d = dynamic_mix.fraction_vec();
    let k = s.len() as f64;
    s.iter()
        .zip(&d)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / k
}

/// Dynamic mix approximated as the block-count-weighted sum of per-block
/// static mixes.
pub fn weighted_block_mix(acfg: &AnnotatedCfg) -> MixVector {
    let mut mix = MixVector::new();
    for (b, &count) in acfg.cfg.blocks.iter().zip(&acfg.block_counts) {
        for (&class, &n) in &b.mix.counts {
            mix.add(class, n * count);
        }
    }
    mix
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub kernel_id: String,
    pub goodness: f64,
    pub efficiency: Option<f64>,
    pub mix_error: Option<f64>,
    pub classes: BTreeSet<InstrClass>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "kernel_id,goodness,efficiency,mix_error,J";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let j: Vec<&str> = self.classes.iter().map(|c| c.name()).collect();
        format!(
            "{},{:.6},{},{},{}",
            self.kernel_id,
            self.goodness,
            opt(self.efficiency),
            opt(self.mix_error),
            j.join(";")
        )
    }
}
