//! Channel similarity functions and their precomputed cache.
//!
//! Position and neighborhood channels weight anchor messages by
//! 1/(mean shortest-path distance + 1); the structure channel compares
//! degree sequences with normalized dynamic time warping. All values land
//! in [0,1] and are cached per (component, pool patch, subchannel) so the
//! training loop never runs BFS or DTW.

use std::collections::HashMap;
use std::io::{Read as _, Write as _};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchors::{AnchorPatch, AnchorPools, ComponentIndex, Subchannel};
use crate::graph::{avg_shortest_path, DistanceIndex, Graph, Subgraph};

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("dtw input sequence is empty")]
    EmptyInput,
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Degree definition for structure comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeMode {
    /// Edges to other members of the set.
    Internal,
    /// Edges leaving the set.
    Border,
}

/// Non-increasing degree list; the canonical ordering makes comparisons
/// independent of node numbering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeSequence {
    pub values: Vec<u32>,
    pub mode: DegreeMode,
}

impl DegreeSequence {
    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Per-node edge counts within (internal) or out of (border) the node set,
/// sorted non-increasing. `nodes` must be non-empty.
pub fn degree_sequence(graph: &Graph, nodes: &[u32], mode: DegreeMode) -> DegreeSequence {
    assert!(!nodes.is_empty(), "degree_sequence needs a non-empty set");
    let mut member = vec![false; graph.num_nodes()];
    for &v in nodes {
        member[v as usize] = true;
    }
    let mut values: Vec<u32> = nodes
        .iter()
        .map(|&u| {
            graph
                .neighbors(u)
                .iter()
                .filter(|&&v| member[v as usize] == (mode == DegreeMode::Internal))
                .count() as u32
        })
        .collect();
    values.sort_unstable_by(|a, b| b.cmp(a));
    DegreeSequence { values, mode }
}

/// How DTW cost is scaled: by the optimal warping path's cell count (ties
/// in cost resolve toward shorter paths), by the longer input's length, or
/// not at all.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtwNormalization {
    #[default]
    PathLength,
    MaxLength,
    None,
}

/// Dynamic time warping with |a−b| local cost and steps {(1,0),(0,1),(1,1)}.
/// The DP tracks (cost, path length) lexicographically, so ties in cost
/// resolve toward shorter paths; appending a cell adds the same amount to
/// every candidate, which preserves the lexicographic order and keeps the
/// substructure optimal.
pub fn dtw(a: &[f64], b: &[f64], norm: DtwNormalization) -> Result<f64, SimilarityError> {
    let (cost, len) = dtw_path(a, b)?;
    Ok(match norm {
        DtwNormalization::PathLength => cost / len as f64,
        DtwNormalization::MaxLength => cost / a.len().max(b.len()) as f64,
        DtwNormalization::None => cost,
    })
}

/// Optimal (cost, path length in cells) of the warping between `a` and `b`.
pub fn dtw_path(a: &[f64], b: &[f64]) -> Result<(f64, usize), SimilarityError> {
    if a.is_empty() || b.is_empty() {
        return Err(SimilarityError::EmptyInput);
    }
    let m = b.len();
    // One DP row of (cost, len), scanned over rows of `a`.
    let mut prev: Vec<(f64, usize)> = Vec::with_capacity(m);
    let mut cur: Vec<(f64, usize)> = vec![(0.0, 0); m];
    for (i, &av) in a.iter().enumerate() {
        for j in 0..m {
            let cell = (av - b[j]).abs();
            let best = match (i, j) {
                (0, 0) => (0.0, 0),
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => {
                    let mut best = prev[j];
                    for cand in [cur[j - 1], prev[j - 1]] {
                        if cand.0 < best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                            best = cand;
                        }
                    }
                    best
                }
            };
            cur[j] = (best.0 + cell, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
        if cur.len() < m {
            cur = vec![(0.0, 0); m];
        }
    }
    Ok(prev[m - 1])
}

fn distance_gamma(graph: &Graph, component: &[u32], patch_nodes: &[u32]) -> f64 {
    if patch_nodes.is_empty() {
        return 0.0;
    }
    let d = avg_shortest_path(graph, component, patch_nodes).expect("sets validated upstream");
    if d.is_infinite() {
        0.0
    } else {
        1.0 / (d + 1.0)
    }
}

/// Position similarity: 1/(mean shortest-path distance + 1); any unreachable
/// pair collapses the value to 0.
pub fn gamma_position(graph: &Graph, component: &[u32], patch: &AnchorPatch) -> f64 {
    distance_gamma(graph, component, &patch.nodes)
}

/// Neighborhood similarity: same distance form as the position channel;
/// empty sentinel patches score 0.
pub fn gamma_neighborhood(graph: &Graph, component: &[u32], patch: &AnchorPatch) -> f64 {
    distance_gamma(graph, component, &patch.nodes)
}

/// Structure similarity: 1/(DTW(degree sequences) + 1) under the selected
/// degree mode. Always in (0,1].
pub fn gamma_structure(
    graph: &Graph,
    component: &[u32],
    patch: &AnchorPatch,
    mode: DegreeMode,
    norm: DtwNormalization,
) -> f64 {
    if patch.nodes.is_empty() {
        return 0.0;
    }
    let a = degree_sequence(graph, component, mode).as_f64();
    let b = degree_sequence(graph, &patch.nodes, mode).as_f64();
    let d = dtw(&a, &b, norm).expect("degree sequences are non-empty");
    1.0 / (d + 1.0)
}

/// Precomputed γ values for every (component, pool patch, subchannel)
/// combination, stored flat in (component, patch, subchannel) lexicographic
/// order with subchannels ordered P_I, P_B, N_I, N_B, S_I, S_B.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityCache {
    pub num_components: usize,
    pub pool_size: usize,
    values: Vec<f32>,
}

const CACHE_MAGIC: &[u8; 4] = b"SGSC";
const CACHE_VERSION: u32 = 1;

impl SimilarityCache {
    fn flat(&self, component: usize, patch: usize, sub: Subchannel) -> usize {
        debug_assert!(component < self.num_components && patch < self.pool_size);
        (component * self.pool_size + patch) * 6 + sub.index()
    }

    pub fn get(&self, component: usize, patch: usize, sub: Subchannel) -> f32 {
        self.values[self.flat(component, patch, sub)]
    }

    /// Assembles a cache from values in the storage order documented above.
    pub fn from_values(num_components: usize, pool_size: usize, values: Vec<f32>) -> SimilarityCache {
        assert_eq!(values.len(), num_components * pool_size * 6);
        SimilarityCache {
            num_components,
            pool_size,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<(), SimilarityError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&CACHE_VERSION.to_le_bytes())?;
        out.write_all(&(self.num_components as u64).to_le_bytes())?;
        out.write_all(&(self.pool_size as u64).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SimilarityCache, SimilarityError> {
        let bad = |msg: String| SimilarityError::Format {
            path: path.display().to_string(),
            msg,
        };
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut head = [0u8; 24];
        file.read_exact(&mut head)
            .map_err(|_| bad("truncated header".into()))?;
        if &head[0..4] != CACHE_MAGIC {
            return Err(bad("not a similarity cache (bad magic)".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let num_components = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
        let pool_size = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
        let count = num_components
            .checked_mul(pool_size)
            .and_then(|n| n.checked_mul(6))
            .ok_or_else(|| bad("header counts overflow".into()))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        if bytes.len() != count * 4 {
            return Err(bad(format!(
                "expected {} value bytes, found {}",
                count * 4,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(SimilarityCache {
            num_components,
            pool_size,
            values,
        })
    }

    /// Human-readable dump for debugging; same entry order as the binary.
    pub fn save_json(&self, path: &Path) -> Result<(), SimilarityError> {
        #[derive(Serialize)]
        struct Dump<'a> {
            num_components: usize,
            pool_size: usize,
            subchannel_order: [&'static str; 6],
            values: &'a [f32],
        }
        let dump = Dump {
            num_components: self.num_components,
            pool_size: self.pool_size,
            subchannel_order: ["P_I", "P_B", "N_I", "N_B", "S_I", "S_B"],
            values: &self.values,
        };
        let mut text = serde_json::to_string_pretty(&dump).expect("cache serializes");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Fills the cache for every combination the training loop can request.
///
/// Distance subchannels share one BFS per distinct anchor node (θ(u,v) =
/// θ(v,u) lets a patch-side BFS serve every component); structure
/// subchannels run DTW on degree sequences computed once per side. Work is
/// parallel but every slot is written exactly once, so the result is
/// bit-identical across runs and thread counts.
pub fn precompute(
    graph: &Graph,
    subgraphs: &[Subgraph],
    pools: &AnchorPools,
    norm: DtwNormalization,
) -> SimilarityCache {
    let index = ComponentIndex::build(subgraphs);
    let nc = index.num_components();
    let ps = pools.pool_size;
    let mut cache = SimilarityCache {
        num_components: nc,
        pool_size: ps,
        values: vec![0.0; nc * ps * 6],
    };

    // flat slots needing mean distance from each anchor node, as
    // (slot, component id).
    let mut by_node: HashMap<u32, Vec<(usize, usize)>> = HashMap::new();
    let distance_subs = [
        Subchannel::PosInternal,
        Subchannel::PosBorder,
        Subchannel::NbrInternal,
        Subchannel::NbrBorder,
    ];
    for c in 0..nc {
        for sub in distance_subs {
            let pool = pools.pool_for(sub, &index, c);
            for (p, patch) in pool.iter().enumerate() {
                if let Some(&v) = patch.nodes.first() {
                    let slot = cache.flat(c, p, sub);
                    by_node.entry(v).or_default().push((slot, c));
                }
                // Sentinel patches keep the zero already in the slot.
            }
        }
    }
    let mut nodes: Vec<u32> = by_node.keys().copied().collect();
    nodes.sort_unstable();
    let distance_fills: Vec<Vec<(usize, f32)>> = nodes
        .par_iter()
        .map(|&v| {
            let dist = DistanceIndex::from_sources(graph, &[v]);
            by_node[&v]
                .iter()
                .map(|&(slot, c)| {
                    let mean = dist.mean_distance(index.nodes(subgraphs, c));
                    let g = if mean.is_infinite() {
                        0.0
                    } else {
                        1.0 / (mean + 1.0)
                    };
                    (slot, g as f32)
                })
                .collect()
        })
        .collect();
    for fills in distance_fills {
        for (slot, v) in fills {
            cache.values[slot] = v;
        }
    }

    // Structure: degree sequences once per side and mode, then DTW per pair.
    let seq = |nodes: &[u32], mode| degree_sequence(graph, nodes, mode).as_f64();
    let patch_seqs: Vec<(Vec<f64>, Vec<f64>)> = pools
        .structure
        .iter()
        .map(|p| {
            (
                seq(&p.nodes, DegreeMode::Internal),
                seq(&p.nodes, DegreeMode::Border),
            )
        })
        .collect();
    let struct_fills: Vec<Vec<(usize, f32)>> = (0..nc)
        .into_par_iter()
        .map(|c| {
            let comp = index.nodes(subgraphs, c);
            let comp_int = seq(comp, DegreeMode::Internal);
            let comp_bor = seq(comp, DegreeMode::Border);
            let mut fills = Vec::with_capacity(ps * 2);
            for (p, (pi, pb)) in patch_seqs.iter().enumerate() {
                let gi = 1.0 / (dtw(&comp_int, pi, norm).expect("non-empty") + 1.0);
                let gb = 1.0 / (dtw(&comp_bor, pb, norm).expect("non-empty") + 1.0);
                fills.push((cache.flat(c, p, Subchannel::StructInternal), gi as f32));
                fills.push((cache.flat(c, p, Subchannel::StructBorder), gb as f32));
            }
            fills
        })
        .collect();
    for fills in struct_fills {
        for (slot, v) in fills {
            cache.values[slot] = v;
        }
    }

    cache
}
