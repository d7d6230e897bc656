//! Basic-block partitioning, control flow graph construction and profile
//! attribution.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::profile::KernelProfile;
use crate::sass::{self, Listing, MixVector};

pub type BlockId = usize;

/// A CFG node. Ordering is START, blocks by id, STOP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Start,
    Block(BlockId),
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Entry,
    Fallthrough,
    Taken,
    Exit,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Entry => "entry",
            EdgeKind::Fallthrough => "fallthrough",
            EdgeKind::Taken => "taken",
            EdgeKind::Exit => "exit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: Node,
    pub dst: Node,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub label: Option<String>,
    pub start_offset: u64,
    /// Offset of the last instruction (inclusive).
    pub end_offset: u64,
    pub instrs: Range<usize>,
    pub mix: MixVector,
}

impl BasicBlock {
    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn contains(&self, offset: u64) -> bool {
        (self.start_offset..=self.end_offset).contains(&offset)
    }

    /// Display name: the label without its leading dot, or `B<id>`.
    pub fn name(&self) -> String {
        match &self.label {
            Some(l) => l.trim_start_matches('.').to_string(),
            None => format!("B{}", self.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    IndirectBranch { offset: u64 },
    Unreachable { block: BlockId },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::IndirectBranch { offset } => {
                write!(f, "indirect branch at {offset:#x}: no edge emitted")
            }
            Warning::Unreachable { block } => write!(f, "block B{block} unreachable from START"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cfg {
    pub kernel_id: String,
    pub arch: String,
    pub blocks: Vec<BasicBlock>,
    /// Sorted, free of duplicate (src, dst, kind) triples.
    pub edges: Vec<Edge>,
    pub reachable: Vec<bool>,
    pub warnings: Vec<Warning>,
}

impl Cfg {
    pub fn start_node(&self) -> Node {
        Node::Start
    }

    pub fn stop_node(&self) -> Node {
        Node::Stop
    }

    pub fn node_name(&self, n: Node) -> String {
        match n {
            Node::Start => "START".into(),
            Node::Stop => "STOP".into(),
            Node::Block(b) => self.blocks[b].name(),
        }
    }

    pub fn successors(&self, n: Node) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.src == n)
    }

    pub fn block_by_label(&self, label: &str) -> Option<BlockId> {
        self.blocks
            .iter()
            .find(|b| b.label.as_deref() == Some(label))
            .map(|b| b.id)
    }

    /// Block whose inclusive offset range holds `offset`.
    pub fn block_at(&self, offset: u64) -> Option<BlockId> {
        let i = self.blocks.partition_point(|b| b.start_offset <= offset);
        let b = self.blocks.get(i.checked_sub(1)?)?;
        b.contains(offset).then_some(b.id)
    }

    /// Reverse post-order from START, unreachable blocks appended by offset.
    pub fn canonical_order(&self) -> Vec<BlockId> {
        let n = self.blocks.len();
        let mut succ: Vec<Vec<BlockId>> = vec![Vec::new(); n];
        for e in &self.edges {
            if let (Node::Block(s), Node::Block(d)) = (e.src, e.dst) {
                succ[s].push(d);
            }
        }
        for s in &mut succ {
            s.sort_unstable();
            s.dedup();
            // visit higher offsets first so lower offsets come first in RPO
            s.reverse();
        }

        let mut visited = vec![false; n];
        let mut post = Vec::with_capacity(n);
        let roots: Vec<BlockId> = self
            .successors(Node::Start)
            .filter_map(|e| match e.dst {
                Node::Block(b) => Some(b),
                _ => None,
            })
            .collect();
        for root in roots {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            let mut stack = vec![(root, 0usize)];
            while let Some((node, next)) = stack.last_mut() {
                if let Some(&child) = succ[*node].get(*next) {
                    *next += 1;
                    if !visited[child] {
                        visited[child] = true;
                        stack.push((child, 0));
                    }
                } else {
                    post.push(*node);
                    stack.pop();
                }
            }
        }
        post.reverse();
        post.extend((0..n).filter(|b| !visited[*b]));
        post
    }

    pub fn to_dot(&self) -> String {
        render_dot(self, None)
    }

    /// One edge per line: `src dst kind`.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for e in &self.edges {
            let _ = writeln!(
                s,
                "{} {} {}",
                self.node_name(e.src),
                self.node_name(e.dst),
                e.kind.name()
            );
        }
        s
    }
}

/// Offsets that start a basic block.
pub fn find_leaders(listing: &Listing) -> BTreeSet<u64> {
    let mut leaders = BTreeSet::new();
    let Some(first) = listing.lines.first() else {
        return leaders;
    };
    leaders.insert(first.instr.offset);
    for (i, line) in listing.lines.iter().enumerate() {
        if line.label.is_some() {
            leaders.insert(line.instr.offset);
        }
        if let Some(target) = &line.instr.branch_target {
            if let Some(off) = listing.label_offset(target) {
                leaders.insert(off);
            }
        }
        if line.instr.is_ctrl() {
            if let Some(next) = listing.lines.get(i + 1) {
                leaders.insert(next.instr.offset);
            }
        }
    }
    leaders
}

/// Splits the listing at its leaders and wires the edges.
pub fn build_cfg(listing: &Listing, arch: &str) -> Result<Cfg> {
    for (i, line) in listing.lines.iter().enumerate() {
        if let Some(t) = &line.instr.branch_target {
            if listing.label_offset(t).is_none() {
                return Err(Error::UnresolvedLabel {
                    label: t.clone(),
                    line: i + 1,
                });
            }
        }
    }

    let leaders = find_leaders(listing);
    let mut blocks: Vec<BasicBlock> = Vec::new();
    let mut begin = 0;
    for i in 0..listing.len() {
        let last = i + 1 == listing.len() || leaders.contains(&listing.lines[i + 1].instr.offset);
        if last {
            let lines = &listing.lines[begin..=i];
            blocks.push(BasicBlock {
                id: blocks.len(),
                label: lines[0].label.clone(),
                start_offset: lines[0].instr.offset,
                end_offset: lines[lines.len() - 1].instr.offset,
                instrs: begin..i + 1,
                mix: MixVector::from_instructions(lines.iter().map(|l| &l.instr)),
            });
            begin = i + 1;
        }
    }

    let mut edges: BTreeSet<Edge> = BTreeSet::new();
    let mut warnings = Vec::new();
    let n = blocks.len();
    if n > 0 {
        edges.insert(Edge {
            src: Node::Start,
            dst: Node::Block(0),
            kind: EdgeKind::Entry,
        });
    }
    for b in &blocks {
        let src = Node::Block(b.id);
        let next = if b.id + 1 < n {
            Node::Block(b.id + 1)
        } else {
            Node::Stop
        };
        let fall_kind = if b.id + 1 < n {
            EdgeKind::Fallthrough
        } else {
            EdgeKind::Exit
        };
        let term = &listing.lines[b.instrs.end - 1].instr;
        let conditional = term.predicate.is_some();
        let mut falls = true;

        if term.is_ctrl() {
            let op = term.opcode.as_str();
            if sass::is_jump(op) {
                match &term.branch_target {
                    Some(t) => {
                        let dst = listing
                            .label_offset(t)
                            .and_then(|off| blocks.iter().find(|b| b.start_offset == off))
                            .map(|b| b.id)
                            .expect("branch targets are leaders");
                        edges.insert(Edge {
                            src,
                            dst: Node::Block(dst),
                            kind: EdgeKind::Taken,
                        });
                    }
                    None => warnings.push(Warning::IndirectBranch {
                        offset: term.offset,
                    }),
                }
                falls = conditional;
            } else if sass::is_exit(op) {
                edges.insert(Edge {
                    src,
                    dst: Node::Stop,
                    kind: EdgeKind::Exit,
                });
                falls = conditional;
            } else if sass::is_indirect(op) {
                warnings.push(Warning::IndirectBranch {
                    offset: term.offset,
                });
                falls = conditional;
            }
        }
        if falls {
            edges.insert(Edge {
                src,
                dst: next,
                kind: fall_kind,
            });
        }
    }
    if n > 0 && !edges.iter().any(|e| e.dst == Node::Stop) {
        edges.insert(Edge {
            src: Node::Block(n - 1),
            dst: Node::Stop,
            kind: EdgeKind::Exit,
        });
    }
    let edges: Vec<Edge> = edges.into_iter().collect();

    let mut reachable = vec![false; n];
    let mut queue: VecDeque<Node> = VecDeque::from([Node::Start]);
    while let Some(node) = queue.pop_front() {
        for e in edges.iter().filter(|e| e.src == node) {
            if let Node::Block(d) = e.dst {
                if !reachable[d] {
                    reachable[d] = true;
                    queue.push_back(e.dst);
                }
            }
        }
    }
    warnings.extend(
        (0..n)
            .filter(|b| !reachable[*b])
            .map(|block| Warning::Unreachable { block }),
    );

    Ok(Cfg {
        kernel_id: listing.kernel_id.clone(),
        arch: arch.to_string(),
        blocks,
        edges,
        reachable,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    Observed,
    FlowBalance,
    UniformStatic,
}

impl EstimationMode {
    pub fn name(self) -> &'static str {
        match self {
            EstimationMode::Observed => "observed",
            EstimationMode::FlowBalance => "flow_balance",
            EstimationMode::UniformStatic => "uniform_static",
        }
    }
}

/// A CFG with per-block and per-edge execution counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedCfg {
    pub cfg: Cfg,
    /// Indexed by block id.
    pub block_counts: Vec<u64>,
    /// Parallel to `cfg.edges`.
    pub edge_counts: Vec<f64>,
    pub estimation_mode: EstimationMode,
    /// Samples outside every block, as (offset, count).
    pub orphan_samples: Vec<(u64, u64)>,
    /// Edge records that name no edge of the graph.
    pub orphan_edges: Vec<(String, String, u64)>,
}

impl AnnotatedCfg {
    pub fn orphan_total(&self) -> u64 {
        self.orphan_samples.iter().map(|(_, c)| c).sum()
    }

    pub fn to_dot(&self) -> String {
        render_dot(&self.cfg, Some(self))
    }

    /// Static-only annotation: no samples, 1/outdegree edge weights.
    pub fn unprofiled(cfg: Cfg) -> Self {
        attribute_profile(&cfg, &KernelProfile::new(cfg.kernel_id.clone()))
            .expect("kernel ids match")
    }
}

fn resolve_endpoint(cfg: &Cfg, name: &str) -> Option<Node> {
    match name {
        "START" => return Some(Node::Start),
        "STOP" => return Some(Node::Stop),
        _ => {}
    }
    if name.starts_with('.') {
        return cfg.block_by_label(name).map(Node::Block);
    }
    if let Some(hex) = name.strip_prefix("0x") {
        let off = u64::from_str_radix(hex, 16).ok()?;
        return cfg.block_at(off).map(Node::Block);
    }
    if let Some(id) = name.strip_prefix('B') {
        let id: usize = id.parse().ok()?;
        return (id < cfg.blocks.len()).then_some(Node::Block(id));
    }
    None
}

/// Maps profile observations onto blocks and edges.
pub fn attribute_profile(cfg: &Cfg, profile: &KernelProfile) -> Result<AnnotatedCfg> {
    if profile.kernel_id != cfg.kernel_id {
        return Err(Error::KernelMismatch {
            cfg: cfg.kernel_id.clone(),
            profile: profile.kernel_id.clone(),
        });
    }
    let n = cfg.blocks.len();
    let mut block_counts = vec![0u64; n];
    let mut orphan_samples = Vec::new();
    for (&off, &count) in &profile.samples {
        match cfg.block_at(off) {
            Some(b) => block_counts[b] += count,
            None => orphan_samples.push((off, count)),
        }
    }

    let mut edge_counts = vec![0.0; cfg.edges.len()];
    let mut orphan_edges = Vec::new();
    let observed = profile.edge_counts.as_ref().filter(|m| !m.is_empty());
    let estimation_mode = if let Some(records) = observed {
        for ((src, dst), &count) in records {
            let hit = resolve_endpoint(cfg, src)
                .zip(resolve_endpoint(cfg, dst))
                .and_then(|(s, d)| cfg.edges.iter().position(|e| e.src == s && e.dst == d));
            match hit {
                Some(i) => edge_counts[i] += count as f64,
                None => orphan_edges.push((src.clone(), dst.clone(), count)),
            }
        }
        EstimationMode::Observed
    } else if block_counts.iter().any(|c| *c > 0) {
        flow_balance(cfg, &block_counts, &mut edge_counts);
        EstimationMode::FlowBalance
    } else {
        uniform_static(cfg, &mut edge_counts);
        EstimationMode::UniformStatic
    };

    Ok(AnnotatedCfg {
        cfg: cfg.clone(),
        block_counts,
        edge_counts,
        estimation_mode,
        orphan_samples,
        orphan_edges,
    })
}

/// Splits each block's count over its successors in proportion to their
/// counts (STOP weighs zero), or evenly when every successor weighs zero.
fn flow_balance(cfg: &Cfg, block_counts: &[u64], edge_counts: &mut [f64]) {
    let mut by_src: BTreeMap<Node, Vec<usize>> = BTreeMap::new();
    for (i, e) in cfg.edges.iter().enumerate() {
        by_src.entry(e.src).or_default().push(i);
    }
    for (src, out) in by_src {
        let Node::Block(b) = src else {
            for i in out {
                if let Node::Block(d) = cfg.edges[i].dst {
                    edge_counts[i] = block_counts[d] as f64;
                }
            }
            continue;
        };
        let total = block_counts[b] as f64;
        let weights: Vec<f64> = out
            .iter()
            .map(|&i| match cfg.edges[i].dst {
                Node::Block(d) => block_counts[d] as f64,
                _ => 0.0,
            })
            .collect();
        let wsum: f64 = weights.iter().sum();
        for (&i, w) in out.iter().zip(&weights) {
            edge_counts[i] = if wsum > 0.0 {
                total * w / wsum
            } else {
                total / out.len() as f64
            };
        }
    }
}

fn uniform_static(cfg: &Cfg, edge_counts: &mut [f64]) {
    let mut outdeg: BTreeMap<Node, usize> = BTreeMap::new();
    for e in &cfg.edges {
        *outdeg.entry(e.src).or_insert(0) += 1;
    }
    for (i, e) in cfg.edges.iter().enumerate() {
        edge_counts[i] = 1.0 / outdeg[&e.src] as f64;
    }
}

fn render_dot(cfg: &Cfg, ann: Option<&AnnotatedCfg>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "digraph \"{}\" {{", cfg.kernel_id);
    let _ = writeln!(s, "  \"START\" [shape=box];");
    for b in &cfg.blocks {
        let mut attrs = format!(
            "label=\"{}\\n{:#x}-{:#x}\", instrs={}",
            b.name(),
            b.start_offset,
            b.end_offset,
            b.len()
        );
        if let Some(a) = ann {
            let _ = write!(attrs, ", count={}", a.block_counts[b.id]);
        }
        if !cfg.reachable[b.id] {
            attrs.push_str(", unreachable=true, style=dashed");
        }
        let _ = writeln!(s, "  \"{}\" [{}];", b.name(), attrs);
    }
    let _ = writeln!(s, "  \"STOP\" [shape=box];");
    for (i, e) in cfg.edges.iter().enumerate() {
        let mut attrs = format!("kind={}", e.kind.name());
        if let Some(a) = ann {
            let _ = write!(attrs, ", count={}", a.edge_counts[i]);
        }
        let _ = writeln!(
            s,
            "  \"{}\" -> \"{}\" [{}];",
            cfg.node_name(e.src),
            cfg.node_name(e.dst),
            attrs
        );
    }
    s.push_str("}\n");
    s
}
