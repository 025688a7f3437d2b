//! Synthetic benchmark generation.
//!
//! Four tasks probe different subgraph properties: DENSITY (internal
//! structure), CUT RATIO (border structure), CORENESS (border structure and
//! position), and COMPONENT (internal and external position). Each dataset
//! is a base graph plus labeled subgraphs with train/val/test tags, written
//! as an edge list, a subgraph table, and a JSON meta file.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{self, Graph, GraphError, Subgraph};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// The four synthetic property-prediction tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Density,
    CutRatio,
    Coreness,
    Component,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Density => "density",
            Task::CutRatio => "cut_ratio",
            Task::Coreness => "coreness",
            Task::Component => "component",
        }
    }

    pub const ALL: [Task; 4] = [Task::Density, Task::CutRatio, Task::Coreness, Task::Component];
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Task, String> {
        match s {
            "density" => Ok(Task::Density),
            "cut_ratio" | "cut-ratio" => Ok(Task::CutRatio),
            "coreness" => Ok(Task::Coreness),
            "component" => Ok(Task::Component),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// Train/val/test membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Split, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Generation knobs. `for_task` fills in the published defaults; fields stay
/// public so experiments can deviate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub task: Task,
    pub seed: u64,
    pub num_subgraphs: usize,
    /// Nodes in the base graph before any planting or stapling.
    pub base_nodes: usize,
    /// Preferential-attachment edges per new node for BA bases.
    pub ba_attach: usize,
    /// Neighbor retention probability for duplication-divergence bases.
    pub dd_retain: f64,
    /// Target subgraph (or planted patch) size.
    pub subgraph_size: usize,
    /// BFS truncation depth for extracted subgraphs.
    pub bfs_depth: usize,
    /// Triad-closure probability for BA bases (0 = plain attachment).
    pub ba_triad: f64,
    /// Inclusive range of shared nodes for planted subgraphs.
    pub common_range: (usize, usize),
    /// Inclusive range of component counts for multi-component subgraphs.
    pub components_range: (usize, usize),
    /// Node count of each stapled component.
    pub component_size: usize,
    /// Number of label bins for scalar metrics.
    pub num_bins: usize,
}

impl SynthConfig {
    pub fn for_task(task: Task, seed: u64) -> SynthConfig {
        let mut cfg = SynthConfig {
            task,
            seed,
            num_subgraphs: 250,
            base_nodes: 5000,
            ba_attach: 5,
            ba_triad: 0.0,
            dd_retain: 0.7,
            subgraph_size: 20,
            bfs_depth: 3,
            common_range: (2, 15),
            components_range: (2, 10),
            component_size: 15,
            num_bins: 3,
        };
        match task {
            // Triad closure raises local clustering so BFS balls reach the
            // published density range; the edge count is unchanged.
            Task::Density => cfg.ba_triad = 0.9,
            // Denser base so planted cliques sit on well-connected hosts and
            // the measured cut ratios land in the published range.
            Task::CutRatio => cfg.ba_attach = 40,
            Task::Coreness => cfg.num_subgraphs = 221,
            Task::Component => cfg.ba_attach = 1,
        }
        cfg
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.num_subgraphs == 0 {
            return Err(SynthError::Config("num_subgraphs must be positive".into()));
        }
        if self.base_nodes <= self.ba_attach {
            return Err(SynthError::Config(
                "base_nodes must exceed ba_attach".into(),
            ));
        }
        if self.ba_attach == 0 {
            return Err(SynthError::Config("ba_attach must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ba_triad) {
            return Err(SynthError::Config("ba_triad must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.dd_retain) {
            return Err(SynthError::Config("dd_retain must lie in [0, 1]".into()));
        }
        if self.subgraph_size < 2 {
            return Err(SynthError::Config("subgraph_size must be at least 2".into()));
        }
        if self.common_range.0 < 2 || self.common_range.0 > self.common_range.1 {
            return Err(SynthError::Config(
                "common_range must be an increasing range starting at 2 or more".into(),
            ));
        }
        if self.num_bins < 2 {
            return Err(SynthError::Config("num_bins must be at least 2".into()));
        }
        Ok(())
    }
}

/// A base graph with labeled, split-tagged subgraphs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub subgraphs: Vec<Subgraph>,
    pub splits: Vec<Split>,
    pub label_names: Vec<String>,
    pub meta: DatasetMeta,
}

/// Sidecar metadata persisted as `meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task: String,
    pub seed: u64,
    pub label_names: Vec<String>,
    /// Metric values at label-bin boundaries (empty for categorical labels).
    pub bin_edges: Vec<f64>,
}

impl Dataset {
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Complete graph on `n` nodes.
pub fn complete_graph(n: usize) -> Graph {
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            edges.push((u, v));
        }
    }
    Graph::from_edges(n, edges).expect("complete graph edges are in range")
}

/// Barabasi-Albert preferential attachment: a complete seed on `attach + 1`
/// nodes, then each new node links to `attach` distinct existing nodes with
/// probability proportional to degree.
///
/// The edge count is deterministic:
/// `attach * (n - attach - 1) + C(attach + 1, 2)`.
pub fn gen_barabasi_albert(n: usize, attach: usize, rng: &mut impl Rng) -> Graph {
    gen_barabasi_albert_clustered(n, attach, 0.0, rng)
}

/// Preferential attachment with triad closure: after each accepted target,
/// the next link goes to a random neighbor of that target with probability
/// `triad` instead of a fresh degree-proportional draw. `triad = 0` is plain
/// BA. Each new node still adds exactly `attach` distinct edges, so the edge
/// count matches the plain construction; only local clustering changes.
pub fn gen_barabasi_albert_clustered(
    n: usize,
    attach: usize,
    triad: f64,
    rng: &mut impl Rng,
) -> Graph {
    assert!(n > attach && attach >= 1, "need n > attach >= 1");
    assert!((0.0..=1.0).contains(&triad));
    let seed_nodes = attach + 1;
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    // Degree-proportional sampling via the repeated-endpoints list.
    let mut endpoints: Vec<u32> = Vec::new();
    for u in 0..seed_nodes as u32 {
        for v in u + 1..seed_nodes as u32 {
            edges.push((u, v));
            endpoints.push(u);
            endpoints.push(v);
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
    }
    let mut targets: Vec<u32> = Vec::with_capacity(attach);
    for v in seed_nodes..n {
        targets.clear();
        let mut prev: Option<u32> = None;
        let mut stale = 0u32;
        while targets.len() < attach {
            // A saturated neighborhood could starve pure triad draws, so
            // fall back to preferential sampling after repeated misses.
            let t = match prev {
                Some(p) if stale < 16 && triad > 0.0 && rng.gen_bool(triad) => {
                    let nbrs = &adj[p as usize];
                    nbrs[rng.gen_range(0..nbrs.len())]
                }
                _ => endpoints[rng.gen_range(0..endpoints.len())],
            };
            if t as usize != v && !targets.contains(&t) {
                targets.push(t);
                prev = Some(t);
                stale = 0;
            } else {
                stale += 1;
            }
        }
        for &t in &targets {
            edges.push((t, v as u32));
            endpoints.push(t);
            endpoints.push(v as u32);
            adj[t as usize].push(v as u32);
            adj[v].push(t);
        }
    }
    Graph::from_edges(n, edges).expect("generated ids are in range")
}

/// Duplication-divergence growth: each new node copies a random template's
/// neighbors, keeping each with probability `retain`, and links to the
/// template itself with probability `retain`. Attempts that leave the new
/// node isolated are redrawn, template included.
pub fn gen_duplication_divergence(n: usize, retain: f64, rng: &mut impl Rng) -> Graph {
    assert!(n >= 2, "need at least two nodes");
    assert!((0.0..=1.0).contains(&retain));
    let mut adj: Vec<Vec<u32>> = vec![vec![1], vec![0]];
    for v in 2..n as u32 {
        let mut kept: Vec<u32> = Vec::new();
        loop {
            kept.clear();
            let template = rng.gen_range(0..v);
            for &w in &adj[template as usize] {
                if rng.gen_bool(retain) {
                    kept.push(w);
                }
            }
            if rng.gen_bool(retain) {
                kept.push(template);
            }
            if !kept.is_empty() {
                break;
            }
        }
        for &w in &kept {
            adj[w as usize].push(v);
        }
        adj.push(kept);
    }
    let mut edges = Vec::new();
    for (u, nbrs) in adj.iter().enumerate() {
        for &v in nbrs {
            if (u as u32) < v {
                edges.push((u as u32, v));
            }
        }
    }
    Graph::from_edges(n, edges).expect("generated ids are in range")
}

/// Plants `patch` into `base`, identifying `n_common` patch nodes with base
/// nodes. The identified nodes always include one patch edge mapped onto one
/// base edge, so patch and base genuinely share structure. Returns the grown
/// graph and the patch's node ids in it (shared base ids plus fresh ids).
pub fn plant(
    base: &Graph,
    patch: &Graph,
    n_common: usize,
    rng: &mut impl Rng,
) -> Result<(Graph, Vec<u32>), SynthError> {
    if patch.num_edges() == 0 || base.num_edges() == 0 {
        return Err(SynthError::Generation(
            "plant requires both graphs to have at least one edge".into(),
        ));
    }
    if n_common < 2 || n_common > patch.num_nodes() || n_common > base.num_nodes() {
        return Err(SynthError::Generation(format!(
            "n_common = {n_common} out of range for plant"
        )));
    }

    let patch_edges = patch.edges();
    let (pa, pb) = patch_edges[rng.gen_range(0..patch_edges.len())];
    let base_edges = base.edges();
    let (ba, bb) = base_edges[rng.gen_range(0..base_edges.len())];

    // Shared nodes beyond the mapped edge are drawn uniformly.
    let mut patch_shared = vec![pa, pb];
    let mut patch_rest: Vec<u32> = (0..patch.num_nodes() as u32)
        .filter(|v| *v != pa && *v != pb)
        .collect();
    patch_rest.shuffle(rng);
    patch_shared.extend(patch_rest.iter().take(n_common - 2));

    let mut base_shared = vec![ba, bb];
    while base_shared.len() < n_common {
        let cand = rng.gen_range(0..base.num_nodes() as u32);
        if !base_shared.contains(&cand) {
            base_shared.push(cand);
        }
    }

    // Map shared patch nodes onto base ids, everything else onto fresh ids.
    let mut mapping = vec![u32::MAX; patch.num_nodes()];
    for (p, b) in patch_shared.iter().zip(&base_shared) {
        mapping[*p as usize] = *b;
    }
    let mut next_id = base.num_nodes() as u32;
    for p in 0..patch.num_nodes() {
        if mapping[p] == u32::MAX {
            mapping[p] = next_id;
            next_id += 1;
        }
    }

    let mut edges = base.edges();
    for (u, v) in patch_edges {
        edges.push((mapping[u as usize], mapping[v as usize]));
    }
    let grown = Graph::from_edges(next_id as usize, edges)?;
    let mut nodes: Vec<u32> = mapping;
    nodes.sort_unstable();
    Ok((grown, nodes))
}

/// Staples `patch` next to `base` as a disjoint copy joined by one bridge
/// edge between a uniform base node and a uniform patch node. The returned
/// node set is the patch copy only; the bridge's base endpoint is excluded.
pub fn staple(base: &Graph, patch: &Graph, rng: &mut impl Rng) -> (Graph, Vec<u32>) {
    let offset = base.num_nodes() as u32;
    let mut edges = base.edges();
    for (u, v) in patch.edges() {
        edges.push((u + offset, v + offset));
    }
    let base_end = rng.gen_range(0..base.num_nodes() as u32);
    let patch_end = offset + rng.gen_range(0..patch.num_nodes() as u32);
    edges.push((base_end, patch_end));
    let grown = Graph::from_edges(base.num_nodes() + patch.num_nodes(), edges)
        .expect("stapled ids are in range");
    let nodes: Vec<u32> = (offset..offset + patch.num_nodes() as u32).collect();
    (grown, nodes)
}

/// Breadth-first ball around `start`, with per-node neighbor order shuffled,
/// truncated at `size_cap` nodes in visitation order and at `max_depth` hops.
pub fn bfs_extract(
    graph: &Graph,
    start: u32,
    max_depth: usize,
    size_cap: usize,
    rng: &mut impl Rng,
) -> Vec<u32> {
    let mut visited = vec![false; graph.num_nodes()];
    visited[start as usize] = true;
    let mut out = vec![start];
    let mut queue = VecDeque::from([(start, 0usize)]);
    let mut scratch: Vec<u32> = Vec::new();
    while let Some((u, depth)) = queue.pop_front() {
        if out.len() >= size_cap || depth >= max_depth {
            if out.len() >= size_cap {
                break;
            }
            continue;
        }
        scratch.clear();
        scratch.extend_from_slice(graph.neighbors(u));
        scratch.shuffle(rng);
        for &v in &scratch {
            if !visited[v as usize] {
                visited[v as usize] = true;
                out.push(v);
                queue.push_back((v, depth + 1));
                if out.len() >= size_cap {
                    return out;
                }
            }
        }
    }
    out
}

/// Builds the dataset for `cfg.task` from a single seeded stream.
pub fn make_dataset(cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let mut rng = crate::rng::stream(cfg.seed, &[crate::rng::tag::SYNTH]);
    match cfg.task {
        Task::Density => make_density(cfg, &mut rng),
        Task::CutRatio => make_cut_ratio(cfg, &mut rng),
        Task::Coreness => make_coreness(cfg, &mut rng),
        Task::Component => make_component(cfg, &mut rng),
    }
}

fn make_density(cfg: &SynthConfig, rng: &mut crate::rng::Stream) -> Result<Dataset, SynthError> {
    let graph = gen_barabasi_albert_clustered(cfg.base_nodes, cfg.ba_attach, cfg.ba_triad, rng);
    let mut node_sets = Vec::with_capacity(cfg.num_subgraphs);
    let mut attempts = 0usize;
    while node_sets.len() < cfg.num_subgraphs {
        attempts += 1;
        if attempts > cfg.num_subgraphs * 20 {
            return Err(SynthError::Generation(
                "could not extract enough full-size BFS subgraphs".into(),
            ));
        }
        let start = rng.gen_range(0..graph.num_nodes() as u32);
        let nodes = bfs_extract(&graph, start, cfg.bfs_depth, cfg.subgraph_size, rng);
        if nodes.len() == cfg.subgraph_size {
            node_sets.push(nodes);
        }
    }
    let metrics: Vec<f64> = node_sets
        .iter()
        .map(|s| graph::density(&graph, s))
        .collect::<Result<_, _>>()?;
    finish_binned(cfg, graph, node_sets, metrics, rng)
}

fn make_cut_ratio(cfg: &SynthConfig, rng: &mut crate::rng::Stream) -> Result<Dataset, SynthError> {
    let mut graph = gen_barabasi_albert(cfg.base_nodes, cfg.ba_attach, rng);
    let patch = complete_graph(cfg.subgraph_size);
    let mut node_sets = Vec::with_capacity(cfg.num_subgraphs);
    for _ in 0..cfg.num_subgraphs {
        let n_common = rng.gen_range(cfg.common_range.0..=cfg.common_range.1);
        let (grown, nodes) = plant(&graph, &patch, n_common, rng)?;
        graph = grown;
        node_sets.push(nodes);
    }
    // Labels come from the finished graph: later plants can add border edges
    // to earlier subgraphs.
    let metrics: Vec<f64> = node_sets
        .iter()
        .map(|s| graph::cut_ratio(&graph, s))
        .collect::<Result<_, _>>()?;
    finish_binned(cfg, graph, node_sets, metrics, rng)
}

fn make_coreness(cfg: &SynthConfig, rng: &mut crate::rng::Stream) -> Result<Dataset, SynthError> {
    let mut graph = gen_duplication_divergence(cfg.base_nodes, cfg.dd_retain, rng);
    let mut node_sets = Vec::with_capacity(cfg.num_subgraphs);
    for _ in 0..cfg.num_subgraphs {
        let patch = gen_duplication_divergence(cfg.subgraph_size, cfg.dd_retain, rng);
        let (grown, nodes) = plant(&graph, &patch, 2, rng)?;
        graph = grown;
        node_sets.push(nodes);
    }
    let cores = graph::core_numbers(&graph);
    let metrics: Vec<f64> = node_sets
        .iter()
        .map(|s| s.iter().map(|&v| cores[v as usize] as f64).sum::<f64>() / s.len() as f64)
        .collect();
    finish_binned(cfg, graph, node_sets, metrics, rng)
}

fn make_component(cfg: &SynthConfig, rng: &mut crate::rng::Stream) -> Result<Dataset, SynthError> {
    let mut graph = gen_barabasi_albert(cfg.base_nodes, cfg.ba_attach, rng);
    let half = cfg.num_subgraphs / 2;
    let mut is_multi: Vec<bool> = (0..cfg.num_subgraphs).map(|i| i >= half).collect();
    is_multi.shuffle(rng);

    let mut node_sets: Vec<Vec<u32>> = Vec::with_capacity(cfg.num_subgraphs);
    let mut labels: Vec<usize> = Vec::with_capacity(cfg.num_subgraphs);
    for &multi in &is_multi {
        let count = if multi {
            rng.gen_range(cfg.components_range.0..=cfg.components_range.1)
        } else {
            1
        };
        let mut nodes = Vec::new();
        for _ in 0..count {
            let piece = gen_barabasi_albert(cfg.component_size, 1, rng);
            let (grown, piece_nodes) = staple(&graph, &piece, rng);
            graph = grown;
            nodes.extend(piece_nodes);
        }
        node_sets.push(nodes);
        labels.push(usize::from(multi));
    }

    let label_names = vec!["single".to_string(), "multiple".to_string()];
    let subgraphs = build_subgraphs(&graph, node_sets, &labels)?;
    let splits = stratified_splits(&labels, cfg.num_subgraphs, rng);
    let meta = DatasetMeta {
        task: cfg.task.as_str().to_string(),
        seed: cfg.seed,
        label_names: label_names.clone(),
        bin_edges: vec![1.5],
    };
    Ok(Dataset {
        graph,
        subgraphs,
        splits,
        label_names,
        meta,
    })
}

/// Shared tail for scalar-metric tasks: empirical balanced binning, then
/// stratified splits.
fn finish_binned(
    cfg: &SynthConfig,
    graph: Graph,
    node_sets: Vec<Vec<u32>>,
    metrics: Vec<f64>,
    rng: &mut crate::rng::Stream,
) -> Result<Dataset, SynthError> {
    let (labels, bin_edges) = balanced_bins(&metrics, cfg.num_bins);
    let label_names: Vec<String> = match cfg.num_bins {
        2 => vec!["low".into(), "high".into()],
        3 => vec!["low".into(), "medium".into(), "high".into()],
        n => (0..n).map(|i| format!("bin{i}")).collect(),
    };
    let subgraphs = build_subgraphs(&graph, node_sets, &labels)?;
    let splits = stratified_splits(&labels, cfg.num_subgraphs, rng);
    let meta = DatasetMeta {
        task: cfg.task.as_str().to_string(),
        seed: cfg.seed,
        label_names: label_names.clone(),
        bin_edges,
    };
    Ok(Dataset {
        graph,
        subgraphs,
        splits,
        label_names,
        meta,
    })
}

fn build_subgraphs(
    graph: &Graph,
    node_sets: Vec<Vec<u32>>,
    labels: &[usize],
) -> Result<Vec<Subgraph>, SynthError> {
    node_sets
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(id, (nodes, &label))| Ok(Subgraph::new(graph, id, nodes, vec![label])?))
        .collect()
}

/// Splits scalar metrics into `bins` classes balanced within one element.
/// Ties are broken by index so the outcome is deterministic. Returns the
/// label per element and the metric midpoints at bin boundaries.
pub fn balanced_bins(metrics: &[f64], bins: usize) -> (Vec<usize>, Vec<f64>) {
    let n = metrics.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| metrics[a].total_cmp(&metrics[b]).then(a.cmp(&b)));

    // Largest-remainder quotas keep class sizes within one of each other.
    let mut quota = vec![n / bins; bins];
    for b in 0..n % bins {
        quota[b] += 1;
    }

    let mut labels = vec![0usize; n];
    let mut edges = Vec::new();
    let mut cursor = 0usize;
    for (bin, &q) in quota.iter().enumerate() {
        for &idx in &order[cursor..cursor + q] {
            labels[idx] = bin;
        }
        if bin + 1 < bins && q > 0 && cursor + q < n {
            let hi = metrics[order[cursor + q - 1]];
            let lo = metrics[order[cursor + q]];
            edges.push((hi + lo) / 2.0);
        }
        cursor += q;
    }
    (labels, edges)
}

/// Assigns splits with exact global 50/25/25 quotas while keeping each label
/// class proportionally represented. Members are shuffled within their class
/// first, so same-class assignment is random but seed-determined.
pub fn stratified_splits(labels: &[usize], n: usize, rng: &mut crate::rng::Stream) -> Vec<Split> {
    assert_eq!(labels.len(), n);
    let num_labels = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); num_labels];
    for (i, &l) in labels.iter().enumerate() {
        by_label[l].push(i);
    }
    let mut ordered: Vec<usize> = Vec::with_capacity(n);
    for group in &mut by_label {
        group.shuffle(rng);
        ordered.extend_from_slice(group);
    }

    // Online largest-deficit assignment over the label-blocked order hits
    // the global quotas exactly and stays within one per class.
    let fracs = [0.5f64, 0.25, 0.25];
    let quotas = largest_remainder(n, &fracs);
    let splits = [Split::Train, Split::Val, Split::Test];
    let mut counts = [0usize; 3];
    let mut out = vec![Split::Train; n];
    for (pos, &idx) in ordered.iter().enumerate() {
        let mut best = 0usize;
        let mut best_deficit = f64::NEG_INFINITY;
        for s in 0..3 {
            if counts[s] >= quotas[s] {
                continue;
            }
            let deficit = fracs[s] * (pos + 1) as f64 - counts[s] as f64;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = s;
            }
        }
        counts[best] += 1;
        out[idx] = splits[best];
    }
    out
}

fn largest_remainder(n: usize, fracs: &[f64]) -> Vec<usize> {
    let mut quotas: Vec<usize> = fracs.iter().map(|f| (f * n as f64).floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut rema: Vec<(f64, usize)> = fracs
        .iter()
        .enumerate()
        .map(|(i, f)| (f * n as f64 - quotas[i] as f64, i))
        .collect();
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for k in 0..n - assigned {
        quotas[rema[k % rema.len()].1] += 1;
    }
    quotas
}

/// Writes `edge_list.txt`, `subgraphs.tsv`, and `meta.json` under `dir`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    ds.graph.save_edge_list(&dir.join("edge_list.txt"))?;

    let mut tsv = std::io::BufWriter::new(std::fs::File::create(dir.join("subgraphs.tsv"))?);
    for (sg, split) in ds.subgraphs.iter().zip(&ds.splits) {
        let nodes = sg
            .nodes
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("-");
        let names = sg
            .labels
            .iter()
            .map(|&l| ds.label_names[l].as_str())
            .collect::<Vec<_>>()
            .join("-");
        writeln!(tsv, "{nodes}\t{names}\t{}", split.as_str())?;
    }
    tsv.flush()?;

    let meta = serde_json::to_string_pretty(&ds.meta)?;
    std::fs::write(dir.join("meta.json"), meta + "\n")?;
    Ok(())
}

/// Loads a dataset directory written by [`save_dataset`] or assembled by
/// hand in the same format.
pub fn load_dataset(dir: &Path) -> Result<Dataset, SynthError> {
    let graph = Graph::load_edge_list(&dir.join("edge_list.txt"))?;
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;

    let tsv_path = dir.join("subgraphs.tsv");
    let file = std::fs::File::open(&tsv_path)?;
    let mut subgraphs = Vec::new();
    let mut splits = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| SynthError::Format {
            path: format!("{}:{}", tsv_path.display(), idx + 1),
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let nodes = fields[0]
            .split('-')
            .map(|t| t.parse::<u32>().map_err(|e| bad(format!("bad node id {t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let labels = fields[1]
            .split('-')
            .map(|name| {
                meta.label_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| bad(format!("unknown label {name:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let split = Split::from_str(fields[2]).map_err(bad)?;
        subgraphs.push(Subgraph::new(&graph, subgraphs.len(), nodes, labels)?);
        splits.push(split);
    }

    Ok(Dataset {
        graph,
        subgraphs,
        splits,
        label_names: meta.label_names.clone(),
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn ba_edge_count_is_closed_form() {
        let mut rng = stream(1, &[]);
        let g = gen_barabasi_albert(200, 5, &mut rng);
        assert_eq!(g.num_edges(), 5 * (200 - 6) + 15);
        let tree = gen_barabasi_albert(3, 1, &mut rng);
        assert_eq!(tree.num_edges(), 2);
        // m = 1 grows a connected forest with one seed edge: a tree.
        assert_eq!(
            graph::connected_components(&tree, &[0, 1, 2]).unwrap().len(),
            1
        );
    }

    #[test]
    fn dd_mean_degree_grows_superlinearly_in_retention() {
        let mean_degree = |p: f64| -> f64 {
            let mut total = 0.0;
            for seed in 0..20u64 {
                let g = gen_duplication_divergence(300, p, &mut stream(seed, &[9]));
                total += 2.0 * g.num_edges() as f64 / g.num_nodes() as f64;
            }
            total / 20.0
        };
        let lo = mean_degree(0.3);
        let hi = mean_degree(0.7);
        assert!(
            hi / lo > 0.7 / 0.3,
            "expected superlinear growth, got {lo:.2} -> {hi:.2}"
        );
    }

    #[test]
    fn dd_nodes_never_isolated() {
        let g = gen_duplication_divergence(150, 0.3, &mut stream(4, &[]));
        for v in 0..150 {
            assert!(g.degree(v) >= 1, "node {v} is isolated");
        }
    }

    #[test]
    fn plant_shares_structure_and_keeps_patch_edges() {
        let mut rng = stream(11, &[]);
        let base = gen_barabasi_albert(60, 3, &mut rng);
        let patch = complete_graph(8);
        let (grown, nodes) = plant(&base, &patch, 3, &mut rng).unwrap();
        assert_eq!(nodes.len(), 8);
        assert_eq!(grown.num_nodes(), 60 + 5);
        // Shared ids live in the base range, fresh ids beyond it.
        assert_eq!(nodes.iter().filter(|&&v| v < 60).count(), 3);
        // The full clique must be present in the grown graph.
        assert_eq!(graph::density(&grown, &nodes).unwrap(), 1.0);
        let comps = graph::connected_components(&grown, &nodes).unwrap();
        assert_eq!(comps.len(), 1);
    }

    #[test]
    fn staple_is_disjoint_plus_bridge() {
        let mut rng = stream(12, &[]);
        let base = gen_barabasi_albert(40, 2, &mut rng);
        let patch = gen_barabasi_albert(15, 1, &mut rng);
        let base_edges = base.num_edges();
        let (grown, nodes) = staple(&base, &patch, &mut rng);
        assert_eq!(nodes, (40u32..55).collect::<Vec<_>>());
        assert_eq!(grown.num_edges(), base_edges + patch.num_edges() + 1);
        // Exactly one border edge leaves the stapled copy.
        let border: usize = nodes
            .iter()
            .map(|&v| grown.neighbors(v).iter().filter(|&&w| w < 40).count())
            .sum();
        assert_eq!(border, 1);
    }

    #[test]
    fn bfs_extract_respects_cap_and_depth() {
        let mut rng = stream(13, &[]);
        let g = gen_barabasi_albert(300, 4, &mut rng);
        let nodes = bfs_extract(&g, 7, 3, 20, &mut rng);
        assert_eq!(nodes.len(), 20);
        assert_eq!(nodes[0], 7);
        // All visited nodes stay within the depth limit.
        let idx = graph::DistanceIndex::from_sources(&g, &[7]);
        assert!(nodes.iter().all(|&v| idx.distance(v).unwrap() <= 3));

        // A path graph caps by depth instead.
        let p = Graph::from_edges(10, (0..9u32).map(|i| (i, i + 1))).unwrap();
        let nodes = bfs_extract(&p, 0, 2, 20, &mut rng);
        assert_eq!(nodes, vec![0, 1, 2]);
    }

    #[test]
    fn balanced_bins_are_balanced_and_ordered() {
        let metrics: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let (labels, edges) = balanced_bins(&metrics, 3);
        let counts = (0..3)
            .map(|b| labels.iter().filter(|&&l| l == b).count())
            .collect::<Vec<_>>();
        assert_eq!(counts, vec![4, 3, 3]);
        assert_eq!(edges.len(), 2);
        assert!(edges[0] < edges[1]);
        // Low metrics map to low bins.
        assert_eq!(labels[0], 0);
        assert_eq!(labels[9], 2);
    }

    #[test]
    fn stratified_splits_have_exact_quotas() {
        let mut rng = stream(5, &[]);
        let labels: Vec<usize> = (0..250).map(|i| i % 3).collect();
        let splits = stratified_splits(&labels, 250, &mut rng);
        let count = |s: Split| splits.iter().filter(|&&x| x == s).count();
        assert_eq!(count(Split::Train), 125);
        assert!((62..=63).contains(&count(Split::Val)));
        assert!((62..=63).contains(&count(Split::Test)));
        // Per-class proportions stay near 50/25/25.
        for class in 0..3usize {
            let members: Vec<usize> = (0..250).filter(|&i| labels[i] == class).collect();
            let train = members
                .iter()
                .filter(|&&i| splits[i] == Split::Train)
                .count();
            let ideal = members.len() as f64 * 0.5;
            assert!((train as f64 - ideal).abs() <= 1.0);
        }
    }

    #[test]
    fn dataset_round_trip() {
        let mut cfg = SynthConfig::for_task(Task::Density, 42);
        cfg.base_nodes = 300;
        cfg.num_subgraphs = 12;
        let ds = make_dataset(&cfg).unwrap();
        assert_eq!(ds.subgraphs.len(), 12);

        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.graph, ds.graph);
        assert_eq!(back.label_names, ds.label_names);
        assert_eq!(back.splits, ds.splits);
        for (a, b) in ds.subgraphs.iter().zip(&back.subgraphs) {
            assert_eq!(a.nodes, b.nodes);
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.components, b.components);
        }
    }

    #[test]
    fn component_task_mixes_single_and_multi() {
        let mut cfg = SynthConfig::for_task(Task::Component, 3);
        cfg.base_nodes = 200;
        cfg.num_subgraphs = 20;
        let ds = make_dataset(&cfg).unwrap();
        let mut singles = 0;
        for sg in &ds.subgraphs {
            let comps = sg.components.len();
            if sg.labels[0] == 0 {
                assert_eq!(comps, 1);
                singles += 1;
            } else {
                assert!((2..=10).contains(&comps), "got {comps} components");
            }
        }
        assert_eq!(singles, 10);
    }

    #[test]
    fn same_seed_reproduces_dataset_exactly() {
        let mut cfg = SynthConfig::for_task(Task::CutRatio, 9);
        cfg.base_nodes = 150;
        cfg.ba_attach = 8;
        cfg.num_subgraphs = 9;
        let a = make_dataset(&cfg).unwrap();
        let b = make_dataset(&cfg).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.splits, b.splits);
        for (x, y) in a.subgraphs.iter().zip(&b.subgraphs) {
            assert_eq!(x.nodes, y.nodes);
            assert_eq!(x.labels, y.labels);
        }
    }
}
