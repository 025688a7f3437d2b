//! Node-embedding pretraining via link prediction.
//!
//! A per-node vector table is trained so that connected nodes score higher
//! dot products than non-edges. During training each endpoint is seen
//! through one neighbor-mean mixing layer; the returned table holds the raw
//! per-node vectors, which downstream models consume as frozen features.

use std::io::{BufRead, BufReader, Read as _, Write as _};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::rng::Stream;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("embedding table has {found} nodes, graph has {expected}")]
    NodeCountMismatch { found: usize, expected: usize },
    #[error("embedding dimension {found} does not match configured {expected}")]
    DimMismatch { found: usize, expected: usize },
    #[error("graph has no edges to train on")]
    NoEdges,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Frozen per-node feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub num_nodes: usize,
    pub dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(num_nodes: usize, dim: usize) -> EmbeddingTable {
        EmbeddingTable {
            num_nodes,
            dim,
            data: vec![0.0; num_nodes * dim],
        }
    }

    pub fn random(num_nodes: usize, dim: usize, scale: f64, rng: &mut Stream) -> EmbeddingTable {
        EmbeddingTable {
            num_nodes,
            dim,
            data: (0..num_nodes * dim)
                .map(|_| rng.gen_range(-scale..scale))
                .collect(),
        }
    }

    pub fn row(&self, u: u32) -> &[f64] {
        let u = u as usize;
        &self.data[u * self.dim..(u + 1) * self.dim]
    }

    fn row_mut(&mut self, u: u32) -> &mut [f64] {
        let u = u as usize;
        &mut self.data[u * self.dim..(u + 1) * self.dim]
    }

    pub fn dot(&self, u: u32, v: u32) -> f64 {
        self.row(u)
            .iter()
            .zip(self.row(v))
            .map(|(a, b)| a * b)
            .sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Negatives sampled per positive edge.
    pub neg_ratio: usize,
    pub lr: f64,
    /// Per-epoch multiplicative shrink on the whole table. Capacity control:
    /// without it the table memorizes the training edges and ranks every
    /// unseen pair below them.
    pub weight_decay: f64,
    pub init_scale: f64,
    /// Fraction of edges held out for the quality check.
    pub holdout: f64,
}

impl Default for PretrainConfig {
    fn default() -> PretrainConfig {
        PretrainConfig {
            dim: 32,
            epochs: 30,
            neg_ratio: 5,
            lr: 0.02,
            weight_decay: 0.01,
            init_scale: 0.1,
            holdout: 0.1,
        }
    }
}

/// Mixed view of a node: its own vector plus the mean of its neighbors'.
/// `skip` drops one neighbor from the mean; when a training pair is also an
/// edge, scoring it with itself in the mixture leaks the answer (the score
/// gains a |t|^2 term no unseen pair can have), so callers exclude the
/// partner. Returns the view and the count actually averaged over.
fn mixed_without(table: &EmbeddingTable, graph: &Graph, u: u32, skip: u32) -> (Vec<f64>, usize) {
    let mut out = table.row(u).to_vec();
    let nbrs: Vec<u32> = graph
        .neighbors(u)
        .iter()
        .copied()
        .filter(|&v| v != skip)
        .collect();
    if !nbrs.is_empty() {
        let inv = 1.0 / nbrs.len() as f64;
        for &v in &nbrs {
            for (o, x) in out.iter_mut().zip(table.row(v)) {
                *o += x * inv;
            }
        }
    }
    (out, nbrs.len())
}

fn sample_non_edge(graph: &Graph, rng: &mut Stream) -> (u32, u32) {
    let n = graph.num_nodes() as u32;
    loop {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v && !graph.has_edge(u, v) {
            return (u, v);
        }
    }
}

/// One SGD step on the logistic loss of score(u,v) = e_u · e_v against
/// target y, where e is the mixed view with the partner excluded. Updates
/// the endpoint rows and both neighborhoods.
fn sgd_pair(table: &mut EmbeddingTable, graph: &Graph, u: u32, v: u32, y: f64, lr: f64) {
    let (eu, nu) = mixed_without(table, graph, u, v);
    let (ev, nv) = mixed_without(table, graph, v, u);
    let score: f64 = eu.iter().zip(&ev).map(|(a, b)| a * b).sum();
    // d(loss)/d(score) for logistic loss.
    let g = 1.0 / (1.0 + (-score).exp()) - y;
    let step = lr * g;

    let mut apply = |node: u32, grad_dir: &[f64], weight: f64| {
        for (t, d) in table.row_mut(node).iter_mut().zip(grad_dir) {
            *t -= step * weight * d;
        }
    };
    // e_u = t_u + mean(t_nbrs): gradient hits t_u with weight 1 and each
    // averaged neighbor with weight 1/count.
    apply(u, &ev, 1.0);
    if nu > 0 {
        let w = 1.0 / nu as f64;
        for &nb in graph.neighbors(u) {
            if nb != v {
                apply(nb, &ev, w);
            }
        }
    }
    apply(v, &eu, 1.0);
    if nv > 0 {
        let w = 1.0 / nv as f64;
        for &nb in graph.neighbors(v) {
            if nb != u {
                apply(nb, &eu, w);
            }
        }
    }
}

/// Trains per-node vectors by link prediction on `graph`: positives are its
/// edges, negatives uniform non-edges at `neg_ratio` per positive. Zero
/// epochs return the initialization unchanged.
pub fn pretrain_link_prediction(
    graph: &Graph,
    cfg: &PretrainConfig,
    rng: &mut Stream,
) -> Result<EmbeddingTable, EmbedError> {
    if graph.num_edges() == 0 {
        return Err(EmbedError::NoEdges);
    }
    let mut table = EmbeddingTable::random(graph.num_nodes(), cfg.dim, cfg.init_scale, rng);
    let edges = graph.edges();
    let mut order: Vec<usize> = (0..edges.len()).collect();
    for _ in 0..cfg.epochs {
        for i in 0..order.len() {
            let j = rng.gen_range(i..order.len());
            order.swap(i, j);
        }
        for &e in &order {
            let (u, v) = edges[e];
            sgd_pair(&mut table, graph, u, v, 1.0, cfg.lr);
            for _ in 0..cfg.neg_ratio {
                let (a, b) = sample_non_edge(graph, rng);
                sgd_pair(&mut table, graph, a, b, 0.0, cfg.lr);
            }
        }
        if cfg.weight_decay > 0.0 {
            let shrink = 1.0 - cfg.weight_decay;
            for t in &mut table.data {
                *t *= shrink;
            }
        }
    }
    Ok(table)
}

/// Pretraining stage: holds out a fraction of edges, trains on the rest,
/// and scores the held-out edges against sampled non-edges with the model's
/// own score (mixed views over the training graph, which never contains the
/// evaluated pairs). Returns the table and the held-out AUROC.
pub fn pretrain_with_holdout(
    graph: &Graph,
    cfg: &PretrainConfig,
    rng: &mut Stream,
) -> Result<(EmbeddingTable, f64), EmbedError> {
    let mut edges = graph.edges();
    if edges.is_empty() {
        return Err(EmbedError::NoEdges);
    }
    for i in 0..edges.len() {
        let j = rng.gen_range(i..edges.len());
        edges.swap(i, j);
    }
    let held = ((edges.len() as f64 * cfg.holdout).round() as usize)
        .min(edges.len().saturating_sub(1));
    let (test_edges, train_edges) = edges.split_at(held);
    let train_graph = Graph::from_edges(graph.num_nodes(), train_edges.iter().copied())
        .expect("edge subset is valid");
    let table = pretrain_link_prediction(&train_graph, cfg, rng)?;

    let model_score = |u: u32, v: u32| {
        let (eu, _) = mixed_without(&table, &train_graph, u, v);
        let (ev, _) = mixed_without(&table, &train_graph, v, u);
        eu.iter().zip(&ev).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for &(u, v) in test_edges {
        scores.push(model_score(u, v));
        labels.push(true);
    }
    for _ in 0..test_edges.len().max(1) {
        let (u, v) = sample_non_edge(graph, rng);
        scores.push(model_score(u, v));
        labels.push(false);
    }
    let auc = crate::metrics::binary_auroc(&scores, &labels).unwrap_or(0.5);
    Ok((table, auc))
}

/// Text format: header "num_nodes dim", then one line per node with its id
/// and `dim` reals at full round-trip precision.
pub fn save_embeddings(table: &EmbeddingTable, path: &Path) -> Result<(), EmbedError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{} {}", table.num_nodes, table.dim)?;
    for u in 0..table.num_nodes as u32 {
        write!(out, "{u}")?;
        for v in table.row(u) {
            write!(out, " {v:?}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

const EMBED_MAGIC: &[u8; 4] = b"SGEM";

/// Binary form: magic "SGEM", num_nodes and dim as u64, then f64 rows.
pub fn save_embeddings_binary(table: &EmbeddingTable, path: &Path) -> Result<(), EmbedError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(EMBED_MAGIC)?;
    out.write_all(&(table.num_nodes as u64).to_le_bytes())?;
    out.write_all(&(table.dim as u64).to_le_bytes())?;
    for v in &table.data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Loads either format, sniffing the binary magic.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, EmbedError> {
    let mut head = [0u8; 4];
    let n = std::fs::File::open(path)?.read(&mut head)?;
    if n == 4 && &head == EMBED_MAGIC {
        load_binary(path)
    } else {
        load_text(path)
    }
}

fn load_binary(path: &Path) -> Result<EmbeddingTable, EmbedError> {
    let bad = |msg: String| EmbedError::Format {
        path: path.display().to_string(),
        msg,
    };
    let bytes = std::fs::read(path)?;
    if bytes.len() < 20 {
        return Err(bad("truncated header".into()));
    }
    let num_nodes = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let want = 20 + num_nodes * dim * 8;
    if bytes.len() != want {
        return Err(bad(format!(
            "truncated at byte {}: expected {} bytes",
            bytes.len(),
            want
        )));
    }
    let data = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(EmbeddingTable {
        num_nodes,
        dim,
        data,
    })
}

fn load_text(path: &Path) -> Result<EmbeddingTable, EmbedError> {
    let bad = |line: usize, msg: String| EmbedError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| bad(1, "empty file".into()))?
        .1
        .map(|h| (0, h))
        .map_err(EmbedError::Io)?;
    let mut parts = header.split_whitespace();
    let num_nodes: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad(1, "header must be \"num_nodes dim\"".into()))?;
    let dim: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad(1, "header must be \"num_nodes dim\"".into()))?;
    let mut table = EmbeddingTable::zeros(num_nodes, dim);
    let mut seen = vec![false; num_nodes];
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let id: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(idx + 1, "expected node id".into()))?;
        if id >= num_nodes {
            return Err(bad(idx + 1, format!("node id {id} out of range")));
        }
        if seen[id] {
            return Err(bad(idx + 1, format!("duplicate node id {id}")));
        }
        seen[id] = true;
        let row = table.row_mut(id as u32);
        for (d, slot) in row.iter_mut().enumerate() {
            let tok = tokens
                .next()
                .ok_or_else(|| bad(idx + 1, format!("expected {dim} values, found {d}")))?;
            *slot = tok
                .parse()
                .map_err(|_| bad(idx + 1, format!("invalid real {tok:?}")))?;
        }
        if tokens.next().is_some() {
            return Err(bad(idx + 1, format!("more than {dim} values")));
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(EmbedError::Format {
            path: path.display().to_string(),
            msg: format!("node {missing} missing from table"),
        });
    }
    Ok(table)
}

/// Rejects a table whose shape does not match the graph and config.
pub fn validate_embeddings(
    table: &EmbeddingTable,
    graph: &Graph,
    expected_dim: Option<usize>,
) -> Result<(), EmbedError> {
    if table.num_nodes != graph.num_nodes() {
        return Err(EmbedError::NodeCountMismatch {
            found: table.num_nodes,
            expected: graph.num_nodes(),
        });
    }
    if let Some(d) = expected_dim {
        if table.dim != d {
            return Err(EmbedError::DimMismatch {
                found: table.dim,
                expected: d,
            });
        }
    }
    Ok(())
}
