//! Command-line driver.
//!
//! Exit codes: 0 on success, 1 on a data error, 2 on a usage error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::cluster::{cut_clusters, export_dendrogram, feature_vector, ward_linkage, FeatureNorms};
use crate::corpus::{load_corpus, read_manifest, Kernel};
use crate::error::{Error, Result};
use crate::matrix::{transition_matrix, MatrixMode, TransitionMatrix};
use crate::metrics::{
    default_goodness_classes, efficiency, goodness, mix_error, weighted_block_mix, MetricReport,
};
use crate::sass::{parse_listing, InstrClass};
use crate::sim::{compare, minmax_scale, pairwise, IsoRankParams, MeasureId, MeasureParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "kernelflow",
    version,
    about = "Control flow graphs, transition matrices and similarity for GPU kernel listings"
)]
pub struct Args {
    /// Corpus manifest: `kernel_id listing_path [profile_path] arch` per line
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// key=value file mirroring these flags; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Transition-matrix normalization: row | global
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// euc | iso | man | min | jac | cos | all (comma-separated list allowed)
    #[arg(long, global = true)]
    pub measure: Option<String>,
    /// Minkowski order
    #[arg(long = "p", global = true)]
    pub p: Option<f64>,
    /// IsoRank damping factor
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// IsoRank L1 convergence tolerance
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// IsoRank iteration cap
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Goodness operation classes, comma separated (e.g. FP32,FP64,MEM)
    #[arg(long, global = true)]
    pub j: Option<String>,
    /// Number of flat clusters
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Kernel whose distances to every kernel are appended to the features
    #[arg(long, global = true)]
    pub reference: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse listings and report diagnostics
    Parse {
        /// Listing files; defaults to the manifest's listings
        paths: Vec<PathBuf>,
    },
    /// Write one CFG file per kernel
    Cfg {
        /// Graphviz output (default)
        #[arg(long)]
        dot: bool,
        /// Plain edge-list output
        #[arg(long)]
        edges: bool,
    },
    /// Write one transition matrix per kernel
    Matrix,
    /// Pairwise heatmap CSVs per measure
    Compare,
    /// Goodness / efficiency / mix-error report
    Metrics,
    /// Ward clustering of kernel feature vectors
    Cluster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub mode: MatrixMode,
    pub measures: Vec<MeasureId>,
    pub params: MeasureParams,
    pub goodness_classes: BTreeSet<InstrClass>,
    pub k: usize,
    pub reference: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            out: PathBuf::from("out"),
            mode: MatrixMode::RowStochastic,
            measures: MeasureId::ALL.to_vec(),
            params: MeasureParams::default(),
            goodness_classes: default_goodness_classes(),
            k: 2,
            reference: None,
        }
    }
}

fn parse_mode(s: &str) -> Result<MatrixMode> {
    match s {
        "row" | "row_stochastic" => Ok(MatrixMode::RowStochastic),
        "global" => Ok(MatrixMode::Global),
        _ => Err(Error::Config(format!(
            "unknown mode {s:?} (expected row|global)"
        ))),
    }
}

fn parse_measures(s: &str) -> Result<Vec<MeasureId>> {
    if s == "all" {
        return Ok(MeasureId::ALL.to_vec());
    }
    let mut out: Vec<MeasureId> = s
        .split(',')
        .map(|m| m.trim().parse())
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

fn parse_classes(s: &str) -> Result<BTreeSet<InstrClass>> {
    s.split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(|c| {
            c.parse()
                .map_err(|_| Error::Config(format!("unknown class {c:?}")))
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
}

impl RunConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "mode" => self.mode = parse_mode(value)?,
            "measure" => self.measures = parse_measures(value)?,
            "p" => self.params.minkowski_p = parse_num(key, value)?,
            "alpha" => self.params.isorank.alpha = parse_num(key, value)?,
            "tol" => self.params.isorank.tol = parse_num(key, value)?,
            "max-iter" | "max_iter" => self.params.isorank.max_iter = parse_num(key, value)?,
            "j" => self.goodness_classes = parse_classes(value)?,
            "k" => self.k = parse_num(key, value)?,
            "reference" => self.reference = Some(value.to_string()),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(args: &Args) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &args.config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let base = path.parent().unwrap_or(Path::new("."));
            for (i, line) in text.lines().enumerate() {
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                let (k, v) = t.split_once('=').ok_or_else(|| {
                    Error::Config(format!("{}:{}: expected key=value", path.display(), i + 1))
                })?;
                let (k, v) = (k.trim(), v.trim());
                cfg.apply(k, v)?;
                if k == "manifest" || k == "out" {
                    let p = base.join(v);
                    if k == "manifest" {
                        cfg.manifest = Some(p);
                    } else {
                        cfg.out = p;
                    }
                }
            }
        }
        if let Some(v) = &args.manifest {
            cfg.manifest = Some(v.clone());
        }
        if let Some(v) = &args.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &args.mode {
            cfg.mode = parse_mode(v)?;
        }
        if let Some(v) = &args.measure {
            cfg.measures = parse_measures(v)?;
        }
        if let Some(v) = args.p {
            cfg.params.minkowski_p = v;
        }
        if let Some(v) = args.alpha {
            cfg.params.isorank.alpha = v;
        }
        if let Some(v) = args.tol {
            cfg.params.isorank.tol = v;
        }
        if let Some(v) = args.max_iter {
            cfg.params.isorank.max_iter = v;
        }
        if let Some(v) = &args.j {
            cfg.goodness_classes = parse_classes(v)?;
        }
        if let Some(v) = args.k {
            cfg.k = v;
        }
        if let Some(v) = &args.reference {
            cfg.reference = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let IsoRankParams {
            alpha,
            tol,
            max_iter,
        } = self.params.isorank;
        let p = self.params.minkowski_p;
        if p.is_nan() || p < 1.0 {
            return Err(Error::Config(format!("--p must be >= 1, got {p}")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "--alpha must lie in [0, 1), got {alpha}"
            )));
        }
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::Config(format!("--tol must be positive, got {tol}")));
        }
        if max_iter == 0 {
            return Err(Error::Config("--max-iter must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("--k must be at least 1".into()));
        }
        if self.measures.is_empty() {
            return Err(Error::Config("no measure selected".into()));
        }
        Ok(())
    }
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

/// Parses `argv` and runs the selected command, returning the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    let cfg = match RunConfig::resolve(&args) {
        Ok(c) => c,
        Err(e @ Error::Io { .. }) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_DATA;
        }
        Err(e) => {
            let _ = writeln!(stderr, "usage error: {e}");
            return EXIT_USAGE;
        }
    };
    let result = match &args.command {
        Command::Parse { paths } => cmd_parse(&cfg, paths, stdout, stderr),
        Command::Cfg { dot, edges } => cmd_cfg(&cfg, *dot || !*edges, *edges, stdout, stderr),
        Command::Matrix => cmd_matrix(&cfg, stdout),
        Command::Compare => cmd_compare(&cfg, stdout),
        Command::Metrics => cmd_metrics(&cfg, stdout),
        Command::Cluster => cmd_cluster(&cfg, stdout),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "usage error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DATA
        }
    }
}

fn corpus(cfg: &RunConfig) -> std::result::Result<Vec<Kernel>, Failure> {
    let manifest = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Failure::Usage("--manifest is required".into()))?;
    Ok(load_corpus(&read_manifest(manifest)?)?)
}

fn write_file(path: &Path, contents: &str, stdout: &mut dyn Write) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    let _ = writeln!(stdout, "wrote {}", path.display());
    Ok(())
}

type CmdResult = std::result::Result<i32, Failure>;

fn cmd_parse(
    cfg: &RunConfig,
    paths: &[PathBuf],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CmdResult {
    let targets: Vec<(String, PathBuf)> = if !paths.is_empty() {
        paths
            .iter()
            .map(|p| {
                let id = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                (id, p.clone())
            })
            .collect()
    } else if let Some(m) = &cfg.manifest {
        read_manifest(m)?
            .into_iter()
            .map(|e| (e.kernel_id, e.listing_path))
            .collect()
    } else {
        return Err(Failure::Usage(
            "no listing paths given (pass files or --manifest)".into(),
        ));
    };

    let mut failed = false;
    for (id, path) in targets {
        let parsed = fs::read_to_string(&path)
            .map_err(|e| Error::io(&path, e))
            .and_then(|text| parse_listing(&text, &id).map_err(|e| e.in_file(&path)));
        match parsed {
            Ok(l) => {
                let labels = l.lines.iter().filter(|x| x.label.is_some()).count();
                let _ = writeln!(
                    stdout,
                    "ok {} {} instructions {} labels",
                    path.display(),
                    l.len(),
                    labels
                );
            }
            Err(e) => {
                failed = true;
                let _ = writeln!(stderr, "error: {e}");
            }
        }
    }
    Ok(if failed { EXIT_DATA } else { EXIT_OK })
}

fn cmd_cfg(
    cfg: &RunConfig,
    dot: bool,
    edges: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CmdResult {
    let kernels = corpus(cfg)?;
    for k in &kernels {
        for w in &k.cfg().warnings {
            let _ = writeln!(stderr, "warning: {}: {w}", k.id());
        }
        if dot {
            let text = if k.profile.is_some() {
                k.acfg.to_dot()
            } else {
                k.cfg().to_dot()
            };
            write_file(&cfg.out.join(format!("{}.dot", k.id())), &text, stdout)?;
        }
        if edges {
            write_file(
                &cfg.out.join(format!("{}.edges", k.id())),
                &k.cfg().to_edge_list(),
                stdout,
            )?;
        }
    }
    Ok(EXIT_OK)
}

fn matrices(kernels: &[Kernel], mode: MatrixMode) -> Result<Vec<TransitionMatrix>> {
    kernels
        .iter()
        .map(|k| transition_matrix(&k.acfg, mode).map_err(|e| e.in_file(&k.entry.listing_path)))
        .collect()
}

fn cmd_matrix(cfg: &RunConfig, stdout: &mut dyn Write) -> CmdResult {
    let kernels = corpus(cfg)?;
    for (k, m) in kernels.iter().zip(matrices(&kernels, cfg.mode)?) {
        write_file(
            &cfg.out.join(format!("{}.matrix", k.id())),
            &m.to_text(),
            stdout,
        )?;
    }
    Ok(EXIT_OK)
}

fn cmd_compare(cfg: &RunConfig, stdout: &mut dyn Write) -> CmdResult {
    let kernels = corpus(cfg)?;
    if kernels.len() < 2 {
        return Err(Failure::Data(Error::DegenerateInput(
            "compare needs at least two kernels",
        )));
    }
    let mats = matrices(&kernels, cfg.mode)?;
    for &measure in &cfg.measures {
        let pm = pairwise(&mats, measure, &cfg.params);
        write_file(
            &cfg.out.join(format!("{measure}.csv")),
            &pm.to_csv(),
            stdout,
        )?;
        write_file(
            &cfg.out.join(format!("{measure}_scaled.csv")),
            &minmax_scale(&pm).to_csv(),
            stdout,
        )?;
    }
    Ok(EXIT_OK)
}

pub fn metric_report(k: &Kernel, classes: &BTreeSet<InstrClass>) -> MetricReport {
    let mix = k.static_mix();
    let calls = k.calls_n();
    let profile = k.profile.as_ref();
    let dynamic = profile.and_then(|p| {
        p.dynamic_mix
            .clone()
            .or_else(|| (p.total_samples() > 0).then(|| weighted_block_mix(&k.acfg)))
    });
    MetricReport {
        kernel_id: k.id().to_string(),
        goodness: goodness(&mix, calls, classes),
        efficiency: profile
            .and_then(|p| p.time_exec_ns)
            .and_then(|t| efficiency(&mix, t as i64, calls).ok()),
        mix_error: dynamic.map(|d| mix_error(&mix, &d)),
        classes: classes.clone(),
    }
}

fn cmd_metrics(cfg: &RunConfig, stdout: &mut dyn Write) -> CmdResult {
    let kernels = corpus(cfg)?;
    let mut metrics = format!("{}\n", MetricReport::CSV_HEADER);
    let mut scatter = String::from("kernel_id,arch,goodness,efficiency,total_ops\n");
    for k in &kernels {
        let r = metric_report(k, &cfg.goodness_classes);
        metrics.push_str(&r.csv_row());
        metrics.push('\n');
        let eff = r.efficiency.map(|e| format!("{e:.6}")).unwrap_or_default();
        let total_ops = k.static_mix().total() * k.calls_n();
        scatter.push_str(&format!(
            "{},{},{:.6},{},{}\n",
            k.id(),
            k.entry.arch,
            r.goodness,
            eff,
            total_ops
        ));
    }
    write_file(&cfg.out.join("metrics.csv"), &metrics, stdout)?;
    write_file(&cfg.out.join("scatter.csv"), &scatter, stdout)?;
    Ok(EXIT_OK)
}

/// Per-measure distances from `reference` to every kernel, min-max scaled
/// across the corpus; failed comparisons count as maximally distant.
fn reference_scores(
    kernels: &[Kernel],
    mats: &[TransitionMatrix],
    reference: &str,
    cfg: &RunConfig,
) -> std::result::Result<Vec<Vec<f64>>, Failure> {
    let r = kernels
        .iter()
        .position(|k| k.id() == reference)
        .ok_or_else(|| Failure::Usage(format!("reference kernel {reference:?} not in corpus")))?;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for &measure in &cfg.measures {
        let raw: Vec<f64> = mats
            .iter()
            .map(|m| compare(measure, &mats[r], m, &cfg.params).unwrap_or(f64::NAN))
            .collect();
        let finite = raw.iter().copied().filter(|v| v.is_finite());
        let lo = finite.clone().fold(f64::INFINITY, f64::min);
        let hi = finite.fold(f64::NEG_INFINITY, f64::max);
        columns.push(
            raw.iter()
                .map(|&v| {
                    if !v.is_finite() {
                        1.0
                    } else if hi > lo {
                        (v - lo) / (hi - lo)
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
    }
    Ok((0..kernels.len())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect())
}

fn cmd_cluster(cfg: &RunConfig, stdout: &mut dyn Write) -> CmdResult {
    let kernels = corpus(cfg)?;
    if kernels.len() < 2 {
        return Err(Failure::Data(Error::DegenerateInput(
            "clustering needs at least two kernels",
        )));
    }
    let n = kernels.len();
    if cfg.k > n {
        return Err(Failure::Data(Error::BadK { k: cfg.k, n }));
    }
    let refs = match &cfg.reference {
        Some(r) => Some(reference_scores(
            &kernels,
            &matrices(&kernels, cfg.mode)?,
            r,
            cfg,
        )?),
        None => None,
    };
    let norms = FeatureNorms::from_corpus(kernels.iter().map(|k| &k.acfg));
    let vectors: Vec<_> = kernels
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let r = refs.as_ref().map(|r| r[i].as_slice());
            feature_vector(&k.acfg, &k.static_mix(), r, norms)
        })
        .collect();
    let linkage = ward_linkage(&vectors)?;
    let ids: Vec<String> = kernels.iter().map(|k| k.id().to_string()).collect();
    let dendro = export_dendrogram(&linkage, &ids);
    let clusters = cut_clusters(&linkage, cfg.k)?;

    let mut flat = String::from("kernel_id,cluster\n");
    let by_id: BTreeMap<&str, usize> = ids.iter().map(String::as_str).zip(clusters).collect();
    for (id, c) in by_id {
        flat.push_str(&format!("{id},{c}\n"));
    }
    write_file(&cfg.out.join("linkage.csv"), &linkage.to_csv(), stdout)?;
    write_file(&cfg.out.join("dendrogram.nwk"), &dendro.newick, stdout)?;
    write_file(&cfg.out.join("dendrogram.txt"), &dendro.outline, stdout)?;
    write_file(&cfg.out.join("clusters.csv"), &flat, stdout)?;
    Ok(EXIT_OK)
}
