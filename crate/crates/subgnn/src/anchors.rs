//! Anchor-patch sampling.
//!
//! Each channel compares subgraph components against anchor patches: single
//! nodes for the position and neighborhood channels, connected node sets
//! grown by triangular random walks for the structure channel. Patches are
//! drawn once into fixed pools so similarities can be precomputed; training
//! then draws per-epoch anchor subsets from the pools.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{khop_neighborhood, Graph, GraphError, Subgraph};

#[derive(Debug, Error)]
pub enum AnchorError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid walk config: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Position,
    Neighborhood,
    Structure,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Position, Channel::Neighborhood, Channel::Structure];

    pub fn subchannels(self) -> [Subchannel; 2] {
        match self {
            Channel::Position => [Subchannel::PosInternal, Subchannel::PosBorder],
            Channel::Neighborhood => [Subchannel::NbrInternal, Subchannel::NbrBorder],
            Channel::Structure => [Subchannel::StructInternal, Subchannel::StructBorder],
        }
    }
}

/// The six channel/topology combinations, in canonical concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subchannel {
    PosInternal,
    PosBorder,
    NbrInternal,
    NbrBorder,
    StructInternal,
    StructBorder,
}

impl Subchannel {
    pub const ALL: [Subchannel; 6] = [
        Subchannel::PosInternal,
        Subchannel::PosBorder,
        Subchannel::NbrInternal,
        Subchannel::NbrBorder,
        Subchannel::StructInternal,
        Subchannel::StructBorder,
    ];

    /// Index into similarity-cache entries; matches `ALL` order.
    pub fn index(self) -> usize {
        match self {
            Subchannel::PosInternal => 0,
            Subchannel::PosBorder => 1,
            Subchannel::NbrInternal => 2,
            Subchannel::NbrBorder => 3,
            Subchannel::StructInternal => 4,
            Subchannel::StructBorder => 5,
        }
    }

    pub fn channel(self) -> Channel {
        match self {
            Subchannel::PosInternal | Subchannel::PosBorder => Channel::Position,
            Subchannel::NbrInternal | Subchannel::NbrBorder => Channel::Neighborhood,
            Subchannel::StructInternal | Subchannel::StructBorder => Channel::Structure,
        }
    }

    pub fn is_border(self) -> bool {
        matches!(
            self,
            Subchannel::PosBorder | Subchannel::NbrBorder | Subchannel::StructBorder
        )
    }
}

/// One anchor patch: a node set plus its slot in the similarity cache.
/// Position/neighborhood patches hold exactly one node (or none, for the
/// sentinel used when a component has an empty border neighborhood);
/// structure patches hold the distinct nodes of one triangular walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorPatch {
    pub nodes: Vec<u32>,
    pub pool_index: usize,
}

impl AnchorPatch {
    pub fn is_sentinel(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Triangular random walk parameters. `beta` is the probability of stepping
/// to a triangle-closing successor; `walk_length` counts steps, so walks
/// contain up to `walk_length + 1` nodes; `num_walks` is the number of walks
/// the structure encoder runs per patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub beta: f64,
    pub walk_length: usize,
    pub num_walks: usize,
}

impl Default for WalkConfig {
    fn default() -> WalkConfig {
        WalkConfig {
            beta: 0.5,
            walk_length: 20,
            num_walks: 4,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), AnchorError> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(AnchorError::Config("beta must lie in [0, 1]".into()));
        }
        if self.walk_length == 0 || self.num_walks == 0 {
            return Err(AnchorError::Config(
                "walk_length and num_walks must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn allowed(mask: Option<&[bool]>, v: u32) -> bool {
    mask.map_or(true, |m| m[v as usize])
}

/// Extends a walk that already holds at least two nodes, following the
/// triangular transition law for `steps` more steps.
///
/// From state (x, y) the successors are T = N(y) ∩ N(x) with probability
/// beta and U = N(y) \ N(x) with probability 1 - beta (the predecessor x is
/// in U). If one set is empty all mass moves to the other; if both are empty
/// the walk halts.
fn walk_continue(
    graph: &Graph,
    cfg: &WalkConfig,
    mask: Option<&[bool]>,
    steps: usize,
    out: &mut Vec<u32>,
    rng: &mut impl Rng,
) {
    let mut tri: Vec<u32> = Vec::new();
    let mut non_tri: Vec<u32> = Vec::new();
    for _ in 0..steps {
        let y = out[out.len() - 1];
        let x = out[out.len() - 2];
        tri.clear();
        non_tri.clear();
        for &z in graph.neighbors(y) {
            if !allowed(mask, z) {
                continue;
            }
            if graph.has_edge(z, x) {
                tri.push(z);
            } else {
                non_tri.push(z);
            }
        }
        let take_tri = if tri.is_empty() {
            if non_tri.is_empty() {
                return;
            }
            false
        } else if non_tri.is_empty() {
            true
        } else {
            rng.gen_bool(cfg.beta)
        };
        let set = if take_tri { &tri } else { &non_tri };
        out.push(set[rng.gen_range(0..set.len())]);
    }
}

/// Triangular random walk: X_0 uniform over the allowed `starts`, X_1
/// uniform over allowed neighbors of X_0, then the triangular law.
/// `restrict`, when given, is a node mask limiting the whole walk. Returns
/// fewer than `walk_length + 1` nodes when the walk halts early; empty when
/// no start is allowed.
pub fn triangular_walk(
    graph: &Graph,
    starts: &[u32],
    cfg: &WalkConfig,
    restrict: Option<&[bool]>,
    rng: &mut impl Rng,
) -> Vec<u32> {
    let usable: Vec<u32> = starts
        .iter()
        .copied()
        .filter(|&v| allowed(restrict, v))
        .collect();
    if usable.is_empty() {
        return Vec::new();
    }
    let x0 = usable[rng.gen_range(0..usable.len())];
    walk_from(graph, x0, cfg, restrict, restrict, rng)
}

/// Walk with separate masks for the first step and the remainder; the
/// border-mode structure encoder forces X_1 into the external neighborhood.
fn walk_from(
    graph: &Graph,
    x0: u32,
    cfg: &WalkConfig,
    first_mask: Option<&[bool]>,
    mask: Option<&[bool]>,
    rng: &mut impl Rng,
) -> Vec<u32> {
    let mut out = vec![x0];
    let first: Vec<u32> = graph
        .neighbors(x0)
        .iter()
        .copied()
        .filter(|&v| allowed(first_mask, v))
        .collect();
    if first.is_empty() || cfg.walk_length == 0 {
        return out;
    }
    out.push(first[rng.gen_range(0..first.len())]);
    walk_continue(graph, cfg, mask, cfg.walk_length - 1, &mut out, rng);
    out
}

/// Internal-position sampler: one uniform node from the whole subgraph,
/// shared by all of its components.
pub fn sample_position_internal(subgraph: &Subgraph, rng: &mut impl Rng) -> AnchorPatch {
    let v = subgraph.nodes[rng.gen_range(0..subgraph.nodes.len())];
    AnchorPatch {
        nodes: vec![v],
        pool_index: 0,
    }
}

/// Border-position sampler: one uniform node from the full graph, shared by
/// every subgraph.
pub fn sample_position_border(graph: &Graph, rng: &mut impl Rng) -> AnchorPatch {
    let v = rng.gen_range(0..graph.num_nodes() as u32);
    AnchorPatch {
        nodes: vec![v],
        pool_index: 0,
    }
}

/// Neighborhood sampler: internal draws a uniform component member; border
/// draws a uniform node from the component's k-hop neighborhood, or the
/// empty sentinel patch when that neighborhood is empty.
pub fn sample_neighborhood(
    graph: &Graph,
    component: &[u32],
    k: usize,
    border: bool,
    rng: &mut impl Rng,
) -> Result<AnchorPatch, AnchorError> {
    let nodes = if border {
        let hood = khop_neighborhood(graph, component, k)?;
        if hood.is_empty() {
            Vec::new()
        } else {
            vec![hood[rng.gen_range(0..hood.len())]]
        }
    } else {
        vec![component[rng.gen_range(0..component.len())]]
    };
    Ok(AnchorPatch {
        nodes,
        pool_index: 0,
    })
}

/// Structure sampler: the distinct nodes visited by one triangular walk from
/// a uniform start over the full graph. The patch is connected because walks
/// move along edges. One pool serves both structure subchannels.
pub fn sample_structure(graph: &Graph, cfg: &WalkConfig, rng: &mut impl Rng) -> AnchorPatch {
    let start = rng.gen_range(0..graph.num_nodes() as u32);
    let mut nodes = walk_from(graph, start, cfg, None, None, rng);
    nodes.sort_unstable();
    nodes.dedup();
    AnchorPatch {
        nodes,
        pool_index: 0,
    }
}

/// Walk region for encoding a structure patch. Internal mode confines walks
/// to the patch; border mode starts them at patch nodes with external edges,
/// forces the first step outside, and then roams the patch border plus its
/// k-hop external neighborhood.
#[derive(Debug, Clone)]
pub struct WalkRegion {
    starts: Vec<u32>,
    first_mask: Option<Vec<bool>>,
    mask: Vec<bool>,
}

impl WalkRegion {
    pub fn internal(graph: &Graph, patch: &[u32]) -> WalkRegion {
        let mut mask = vec![false; graph.num_nodes()];
        for &v in patch {
            mask[v as usize] = true;
        }
        WalkRegion {
            starts: patch.to_vec(),
            first_mask: None,
            mask,
        }
    }

    pub fn border(graph: &Graph, patch: &[u32], k: usize) -> Result<WalkRegion, AnchorError> {
        let external = khop_neighborhood(graph, patch, k)?;
        let mut ext_mask = vec![false; graph.num_nodes()];
        for &v in &external {
            ext_mask[v as usize] = true;
        }
        // Border nodes: patch members with at least one external edge.
        let starts: Vec<u32> = patch
            .iter()
            .copied()
            .filter(|&u| graph.neighbors(u).iter().any(|&v| ext_mask[v as usize]))
            .collect();
        let mut mask = ext_mask.clone();
        for &v in &starts {
            mask[v as usize] = true;
        }
        Ok(WalkRegion {
            starts,
            first_mask: Some(ext_mask),
            mask,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }
}

/// Draws the walks the structure encoder consumes for one patch. Walks can
/// be empty (no walkable region); the encoder treats that as a zero vector.
pub fn structure_encoding_walks(
    graph: &Graph,
    region: &WalkRegion,
    cfg: &WalkConfig,
    rng: &mut impl Rng,
) -> Vec<Vec<u32>> {
    if region.is_empty() {
        return Vec::new();
    }
    (0..cfg.num_walks)
        .map(|_| {
            let x0 = region.starts[rng.gen_range(0..region.starts.len())];
            walk_from(
                graph,
                x0,
                cfg,
                region.first_mask.as_deref().or(Some(&region.mask)),
                Some(&region.mask),
                rng,
            )
        })
        .collect()
}

/// Global component numbering across all subgraphs, in subgraph order then
/// component order. Similarity-cache rows and per-component pools index by
/// this id.
#[derive(Debug, Clone)]
pub struct ComponentIndex {
    /// (subgraph index, component index within subgraph) per global id.
    pub entries: Vec<(usize, usize)>,
    /// First global id per subgraph; one extra terminal entry.
    pub offsets: Vec<usize>,
}

impl ComponentIndex {
    pub fn build(subgraphs: &[Subgraph]) -> ComponentIndex {
        let mut entries = Vec::new();
        let mut offsets = Vec::with_capacity(subgraphs.len() + 1);
        for (si, sg) in subgraphs.iter().enumerate() {
            offsets.push(entries.len());
            for ci in 0..sg.components.len() {
                entries.push((si, ci));
            }
        }
        offsets.push(entries.len());
        ComponentIndex { entries, offsets }
    }

    pub fn num_components(&self) -> usize {
        self.entries.len()
    }

    /// Global ids of one subgraph's components.
    pub fn of_subgraph(&self, subgraph_idx: usize) -> std::ops::Range<usize> {
        self.offsets[subgraph_idx]..self.offsets[subgraph_idx + 1]
    }

    pub fn nodes<'a>(&self, subgraphs: &'a [Subgraph], global_id: usize) -> &'a [u32] {
        let (si, ci) = self.entries[global_id];
        &subgraphs[si].components[ci]
    }
}

/// Pool sampling parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    /// Patches per pool; at least the largest per-epoch anchor count.
    pub pool_size: usize,
    /// Hop limit for border neighborhoods.
    pub k_hops: usize,
    pub walk: WalkConfig,
}

impl Default for PoolConfig {
    fn default() -> PoolConfig {
        PoolConfig {
            pool_size: 100,
            k_hops: 1,
            walk: WalkConfig::default(),
        }
    }
}

/// Pre-sampled anchor pools. Border-position and structure pools are global;
/// internal-position pools are per subgraph; neighborhood pools are per
/// component (global component id).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPools {
    pub pool_size: usize,
    pub pos_border: Vec<AnchorPatch>,
    pub structure: Vec<AnchorPatch>,
    pub pos_internal: Vec<Vec<AnchorPatch>>,
    pub nbr_internal: Vec<Vec<AnchorPatch>>,
    pub nbr_border: Vec<Vec<AnchorPatch>>,
}

impl AnchorPools {
    /// The pool a subchannel reads for a given component. Global pools
    /// ignore the component; scoped pools resolve through `index`.
    pub fn pool_for<'a>(
        &'a self,
        sub: Subchannel,
        index: &ComponentIndex,
        global_comp: usize,
    ) -> &'a [AnchorPatch] {
        match sub {
            Subchannel::PosBorder => &self.pos_border,
            Subchannel::StructInternal | Subchannel::StructBorder => &self.structure,
            Subchannel::PosInternal => {
                let (si, _) = index.entries[global_comp];
                &self.pos_internal[si]
            }
            Subchannel::NbrInternal => &self.nbr_internal[global_comp],
            Subchannel::NbrBorder => &self.nbr_border[global_comp],
        }
    }
}

/// Samples every pool from one seeded stream: border-position and structure
/// pools first, then per-subgraph internal-position pools, then per-component
/// neighborhood pools in global component order.
pub fn build_pools(
    graph: &Graph,
    subgraphs: &[Subgraph],
    cfg: &PoolConfig,
    rng: &mut crate::rng::Stream,
) -> Result<AnchorPools, AnchorError> {
    cfg.walk.validate()?;
    if cfg.pool_size == 0 {
        return Err(AnchorError::Config("pool_size must be at least 1".into()));
    }
    let with_index = |mut p: AnchorPatch, i: usize| {
        p.pool_index = i;
        p
    };

    let pos_border: Vec<AnchorPatch> = (0..cfg.pool_size)
        .map(|i| with_index(sample_position_border(graph, rng), i))
        .collect();
    let structure: Vec<AnchorPatch> = (0..cfg.pool_size)
        .map(|i| with_index(sample_structure(graph, &cfg.walk, rng), i))
        .collect();

    let pos_internal: Vec<Vec<AnchorPatch>> = subgraphs
        .iter()
        .map(|sg| {
            (0..cfg.pool_size)
                .map(|i| with_index(sample_position_internal(sg, rng), i))
                .collect()
        })
        .collect();

    let index = ComponentIndex::build(subgraphs);
    let mut nbr_internal = Vec::with_capacity(index.num_components());
    let mut nbr_border = Vec::with_capacity(index.num_components());
    for gid in 0..index.num_components() {
        let comp = index.nodes(subgraphs, gid);
        let internal: Vec<AnchorPatch> = (0..cfg.pool_size)
            .map(|i| {
                let v = comp[rng.gen_range(0..comp.len())];
                AnchorPatch {
                    nodes: vec![v],
                    pool_index: i,
                }
            })
            .collect();
        // One k-hop computation serves the whole border pool.
        let hood = khop_neighborhood(graph, comp, cfg.k_hops)?;
        let border: Vec<AnchorPatch> = (0..cfg.pool_size)
            .map(|i| {
                let nodes = if hood.is_empty() {
                    Vec::new()
                } else {
                    vec![hood[rng.gen_range(0..hood.len())]]
                };
                AnchorPatch {
                    nodes,
                    pool_index: i,
                }
            })
            .collect();
        nbr_internal.push(internal);
        nbr_border.push(border);
    }

    Ok(AnchorPools {
        pool_size: cfg.pool_size,
        pos_border,
        structure,
        pos_internal,
        nbr_internal,
        nbr_border,
    })
}

#[derive(Serialize, Deserialize)]
struct PoolLine {
    subchannel: String,
    /// Subgraph index for P_I, global component id for N_*, absent for the
    /// global P_B and S pools.
    #[serde(skip_serializing_if = "Option::is_none")]
    scope: Option<usize>,
    nodes: Vec<u32>,
}

/// Writes pools as JSON lines, one patch per line, in the same order
/// `build_pools` samples them.
pub fn save_pools(pools: &AnchorPools, path: &Path) -> Result<(), AnchorError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut emit = |sub: &str, scope: Option<usize>, patches: &[AnchorPatch]| -> std::io::Result<()> {
        for p in patches {
            let line = PoolLine {
                subchannel: sub.to_string(),
                scope,
                nodes: p.nodes.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&line).expect("pool line serializes"))?;
        }
        Ok(())
    };
    emit("P_B", None, &pools.pos_border)?;
    emit("S", None, &pools.structure)?;
    for (si, pool) in pools.pos_internal.iter().enumerate() {
        emit("P_I", Some(si), pool)?;
    }
    for (gid, pool) in pools.nbr_internal.iter().enumerate() {
        emit("N_I", Some(gid), pool)?;
    }
    for (gid, pool) in pools.nbr_border.iter().enumerate() {
        emit("N_B", Some(gid), pool)?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a pool file and validates it against the dataset's shape.
pub fn load_pools(
    path: &Path,
    graph: &Graph,
    subgraphs: &[Subgraph],
) -> Result<AnchorPools, AnchorError> {
    let bad = |line: usize, msg: String| AnchorError::Format {
        path: format!("{}:{}", path.display(), line),
        msg,
    };
    let index = ComponentIndex::build(subgraphs);
    let mut pos_border: Vec<AnchorPatch> = Vec::new();
    let mut structure: Vec<AnchorPatch> = Vec::new();
    let mut pos_internal: Vec<Vec<AnchorPatch>> = vec![Vec::new(); subgraphs.len()];
    let mut nbr_internal: Vec<Vec<AnchorPatch>> = vec![Vec::new(); index.num_components()];
    let mut nbr_border: Vec<Vec<AnchorPatch>> = vec![Vec::new(); index.num_components()];

    let file = std::fs::File::open(path)?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PoolLine =
            serde_json::from_str(&line).map_err(|e| bad(idx + 1, e.to_string()))?;
        for &v in &parsed.nodes {
            if v as usize >= graph.num_nodes() {
                return Err(bad(idx + 1, format!("node id {v} out of range")));
            }
        }
        let scoped = |scopes: &mut Vec<Vec<AnchorPatch>>,
                      scope: Option<usize>|
         -> Result<(), AnchorError> {
            let s = scope.ok_or_else(|| bad(idx + 1, "missing scope".into()))?;
            if s >= scopes.len() {
                return Err(bad(idx + 1, format!("scope {s} out of range")));
            }
            let pool_index = scopes[s].len();
            scopes[s].push(AnchorPatch {
                nodes: parsed.nodes.clone(),
                pool_index,
            });
            Ok(())
        };
        match parsed.subchannel.as_str() {
            "P_B" => {
                let pool_index = pos_border.len();
                pos_border.push(AnchorPatch {
                    nodes: parsed.nodes,
                    pool_index,
                });
            }
            "S" => {
                let pool_index = structure.len();
                structure.push(AnchorPatch {
                    nodes: parsed.nodes,
                    pool_index,
                });
            }
            "P_I" => scoped(&mut pos_internal, parsed.scope)?,
            "N_I" => scoped(&mut nbr_internal, parsed.scope)?,
            "N_B" => scoped(&mut nbr_border, parsed.scope)?,
            other => return Err(bad(idx + 1, format!("unknown subchannel {other:?}"))),
        }
    }

    let pool_size = pos_border.len();
    if pool_size == 0 {
        return Err(AnchorError::Format {
            path: path.display().to_string(),
            msg: "pool file holds no border-position patches".into(),
        });
    }
    let uniform = structure.len() == pool_size
        && pos_internal.iter().all(|p| p.len() == pool_size)
        && nbr_internal.iter().all(|p| p.len() == pool_size)
        && nbr_border.iter().all(|p| p.len() == pool_size);
    if !uniform {
        return Err(AnchorError::Format {
            path: path.display().to_string(),
            msg: format!("pools are not uniformly sized (expected {pool_size} per pool); file does not match this dataset"),
        });
    }
    Ok(AnchorPools {
        pool_size,
        pos_border,
        structure,
        pos_internal,
        nbr_internal,
        nbr_border,
    })
}
