//! Corpus manifests and per-kernel pipeline state.
//!
//! A manifest lists one kernel per line:
//!
//! ```text
//! # kernel_id                          listing            [profile]       arch
//! kepler.rodinia.pathfinder.dynproc    kepler/dyn.sass    kepler/dyn.prof kepler
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::cfg::{attribute_profile, build_cfg, AnnotatedCfg, Cfg};
use crate::error::{Error, Result};
use crate::profile::{parse_profiles, KernelProfile};
use crate::sass::{parse_listing, static_mix, Listing, MixVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub kernel_id: String,
    pub listing_path: PathBuf,
    pub profile_path: Option<PathBuf>,
    pub arch: String,
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<CorpusEntry>> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        let (id, listing, profile, arch) = match f.as_slice() {
            [id, listing, arch] => (*id, *listing, None, *arch),
            [id, listing, profile, arch] => (*id, *listing, Some(*profile), *arch),
            _ => {
                return Err(Error::Manifest {
                    line,
                    reason: "expected `kernel_id listing_path [profile_path] arch`".into(),
                })
            }
        };
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateKernel(id.to_string()));
        }
        entries.push(CorpusEntry {
            kernel_id: id.to_string(),
            listing_path: base.join(listing),
            profile_path: profile.map(|p| base.join(p)),
            arch: arch.to_string(),
        });
    }
    Ok(entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<CorpusEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base).map_err(|e| e.in_file(path))
}

/// A kernel taken through parsing, CFG construction and profile attribution.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub entry: CorpusEntry,
    pub listing: Listing,
    pub profile: Option<KernelProfile>,
    pub acfg: AnnotatedCfg,
}

impl Kernel {
    pub fn id(&self) -> &str {
        &self.entry.kernel_id
    }

    pub fn cfg(&self) -> &Cfg {
        &self.acfg.cfg
    }

    pub fn static_mix(&self) -> MixVector {
        static_mix(&self.listing)
    }

    pub fn calls_n(&self) -> u64 {
        self.profile.as_ref().map_or(1, |p| p.calls_n)
    }

    pub fn load(entry: &CorpusEntry) -> Result<Kernel> {
        let path = &entry.listing_path;
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let listing = parse_listing(&text, &entry.kernel_id).map_err(|e| e.in_file(path))?;
        let cfg = build_cfg(&listing, &entry.arch).map_err(|e| e.in_file(path))?;

        let profile = match &entry.profile_path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let profiles = parse_profiles(&text).map_err(|e| e.in_file(p))?;
                let found = profiles
                    .into_iter()
                    .find(|k| k.kernel_id == entry.kernel_id)
                    .ok_or_else(|| {
                        Error::Profile {
                            line: 0,
                            reason: format!("no section for kernel {}", entry.kernel_id),
                        }
                        .in_file(p)
                    })?;
                Some(found)
            }
            None => None,
        };
        let acfg = match &profile {
            Some(p) => attribute_profile(&cfg, p)?,
            None => AnnotatedCfg::unprofiled(cfg),
        };
        Ok(Kernel {
            entry: entry.clone(),
            listing,
            profile,
            acfg,
        })
    }
}

/// Loads every entry (in parallel), returned sorted by kernel id.
pub fn load_corpus(entries: &[CorpusEntry]) -> Result<Vec<Kernel>> {
    let mut kernels = entries
        .par_iter()
        .map(Kernel::load)
        .collect::<Result<Vec<_>>>()?;
    kernels.sort_by(|a, b| a.entry.kernel_id.cmp(&b.entry.kernel_id));
    Ok(kernels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lines() {
        let text = "# c\nk1 a.sass kepler\nk2 b.sass b.prof maxwell\n";
        let e = parse_manifest(text, Path::new("/base")).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].listing_path, PathBuf::from("/base/a.sass"));
        assert_eq!(e[0].profile_path, None);
        assert_eq!(e[1].profile_path, Some(PathBuf::from("/base/b.prof")));
        assert_eq!(e[1].arch, "maxwell");
    }

    #[test]
    fn manifest_errors() {
        assert!(matches!(
            parse_manifest("k1 a b c d", Path::new(".")),
            Err(Error::Manifest { line: 1, .. })
        ));
        assert!(matches!(
            parse_manifest("k1 a x\nk1 b y", Path::new(".")),
            Err(Error::DuplicateKernel(_))
        ));
    }
}
