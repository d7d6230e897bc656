//! Offline kernel profiles.
//!
//! ```text
//! # comment
//! kernel k80.rodinia.pathfinder.dynproc_kernel
//! sample 04a0 5
//! edge .L_41 .L_43 3
//! time_ns 125000
//! calls 4
//! dynmix FP32=10 INT=4 MEM=2
//! ```
//!
//! Edge endpoints name a block by label (`.L_41`), by id (`B3`), by an
//! offset it contains (`0x4b0`), or the virtual `START` / `STOP` nodes.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sass::{InstrClass, MixVector};

#[derive(Debug, Clone, PartialEq)]
pub struct KernelProfile {
    pub kernel_id: String,
    pub samples: BTreeMap<u64, u64>,
    /// Observed edge records keyed by endpoint names, if any were given.
    pub edge_counts: Option<BTreeMap<(String, String), u64>>,
    pub time_exec_ns: Option<u64>,
    pub calls_n: u64,
    pub dynamic_mix: Option<MixVector>,
}

impl KernelProfile {
    pub fn new(kernel_id: impl Into<String>) -> Self {
        KernelProfile {
            kernel_id: kernel_id.into(),
            samples: BTreeMap::new(),
            edge_counts: None,
            time_exec_ns: None,
            calls_n: 1,
            dynamic_mix: None,
        }
    }

    pub fn total_samples(&self) -> u64 {
        self.samples.values().sum()
    }
}

fn err(line: usize, reason: impl Into<String>) -> Error {
    Error::Profile {
        line,
        reason: reason.into(),
    }
}

fn parse_u64(line: usize, what: &str, s: &str) -> Result<u64> {
    s.parse::<u64>().map_err(|_| {
        err(
            line,
            format!("{what} must be a nonnegative integer, got {s:?}"),
        )
    })
}

/// Parses every kernel section of a profile file.
pub fn parse_profiles(text: &str) -> Result<Vec<KernelProfile>> {
    let mut out: Vec<KernelProfile> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let (key, args) = (fields[0], &fields[1..]);

        if key == "kernel" {
            let [id] = args else {
                return Err(err(line, "expected `kernel <kernel_id>`"));
            };
            if out.iter().any(|p| p.kernel_id == *id) {
                return Err(err(line, format!("duplicate kernel {id}")));
            }
            out.push(KernelProfile::new(*id));
            continue;
        }

        let Some(cur) = out.last_mut() else {
            return Err(err(line, format!("`{key}` before any `kernel` header")));
        };
        match key {
            "sample" => {
                let [off, count] = args else {
                    return Err(err(line, "expected `sample <hex_offset> <count>`"));
                };
                let digits = off.trim_start_matches("0x");
                let off = u64::from_str_radix(digits, 16)
                    .map_err(|_| err(line, format!("bad hex offset {off:?}")))?;
                let count = parse_u64(line, "sample count", count)?;
                *cur.samples.entry(off).or_insert(0) += count;
            }
            "edge" => {
                let [src, dst, count] = args else {
                    return Err(err(line, "expected `edge <src> <dst> <count>`"));
                };
                let count = parse_u64(line, "edge count", count)?;
                *cur.edge_counts
                    .get_or_insert_with(BTreeMap::new)
                    .entry((src.to_string(), dst.to_string()))
                    .or_insert(0) += count;
            }
            "time_ns" => {
                let [v] = args else {
                    return Err(err(line, "expected `time_ns <integer>`"));
                };
                let v = parse_u64(line, "time_ns", v)?;
                if v == 0 {
                    return Err(err(line, "time_ns must be positive"));
                }
                cur.time_exec_ns = Some(v);
            }
            "calls" => {
                let [v] = args else {
                    return Err(err(line, "expected `calls <integer>`"));
                };
                let v = parse_u64(line, "calls", v)?;
                if v == 0 {
                    return Err(err(line, "calls must be at least 1"));
                }
                cur.calls_n = v;
            }
            "dynmix" => {
                let mut mix = MixVector::new();
                for item in args {
                    let (class, count) = item
                        .split_once('=')
                        .ok_or_else(|| err(line, format!("expected CLASS=count, got {item:?}")))?;
                    let class: InstrClass = class
                        .parse()
                        .map_err(|_| err(line, format!("unknown instruction class {class:?}")))?;
                    mix.add(class, parse_u64(line, "dynmix count", count)?);
                }
                cur.dynamic_mix = Some(mix);
            }
            other => return Err(err(line, format!("unknown record `{other}`"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_records() {
        let text = "\
# two kernels
kernel a.s.app.k1
sample 04a0 5
sample 0x4a8 3
edge .L_41 .L_43 2
time_ns 2000
calls 3
dynmix FP32=4 int=1

kernel a.s.app.k2
";
        let ps = parse_profiles(text).unwrap();
        assert_eq!(ps.len(), 2);
        let p = &ps[0];
        assert_eq!(p.samples[&0x4a0], 5);
        assert_eq!(p.samples[&0x4a8], 3);
        assert_eq!(p.total_samples(), 8);
        let edges = p.edge_counts.as_ref().unwrap();
        assert_eq!(edges[&(".L_41".to_string(), ".L_43".to_string())], 2);
        assert_eq!(p.time_exec_ns, Some(2000));
        assert_eq!(p.calls_n, 3);
        assert_eq!(p.dynamic_mix.as_ref().unwrap().get(InstrClass::Int), 1);
        assert_eq!(ps[1].calls_n, 1);
        assert!(ps[1].edge_counts.is_none());
    }

    #[test]
    fn rejects_bad_records() {
        for bad in [
            "sample 10 1",
            "kernel k\nsample zz 1",
            "kernel k\nsample 10 -1",
            "kernel k\ncalls 0",
            "kernel k\ntime_ns 0",
            "kernel k\ndynmix FOO=1",
            "kernel k\nkernel k",
            "kernel k\nbogus 1",
        ] {
            assert!(parse_profiles(bad).is_err(), "{bad:?} accepted");
        }
    }
}
