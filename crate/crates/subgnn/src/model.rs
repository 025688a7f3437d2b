//! The subgraph encoder: channel message passing from anchor patches to
//! subgraph components, property-aware outputs, the aggregation hierarchy,
//! readout, and the classifier head.
//!
//! Forward-pass layout per component c, starting from z_c^(0) = the
//! aggregated member-node embeddings:
//!   - neighborhood subchannels keep a hidden state h, updated per layer as
//!     h = act(W · [sum(messages) ; h_prev]),
//!   - position and structure subchannels emit per layer a vector z with one
//!     coordinate per drawn anchor, z[i] = act(q · m_i),
//!   - a layer's subchannel outputs concatenate (enabled only, fixed
//!     order), layers concatenate onto z_c^(0), and the subgraph embedding
//!     is the sum over components.
//!
//! Every sum over an unordered collection (messages, walk encodings,
//! component readout) sorts its summands by value first, which makes the
//! forward pass bit-identical under any input reordering.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::anchors::{
    structure_encoding_walks, AnchorPools, Channel, ComponentIndex, Subchannel, WalkConfig,
    WalkRegion,
};
use crate::graph::{Graph, Subgraph};
use crate::nn::{BiRecurrent, Id, NnError, ParamStore, Tape};
use crate::pretrain::EmbeddingTable;
use crate::rng::{stream, tag, Stream};
use crate::similarity::SimilarityCache;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitAgg {
    Sum,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

/// Channel selection; at least one must be on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub position: bool,
    pub neighborhood: bool,
    pub structure: bool,
}

impl ChannelSet {
    pub const ALL: ChannelSet = ChannelSet {
        position: true,
        neighborhood: true,
        structure: true,
    };

    pub fn only(channel: Channel) -> ChannelSet {
        ChannelSet {
            position: channel == Channel::Position,
            neighborhood: channel == Channel::Neighborhood,
            structure: channel == Channel::Structure,
        }
    }

    pub fn contains(&self, channel: Channel) -> bool {
        match channel {
            Channel::Position => self.position,
            Channel::Neighborhood => self.neighborhood,
            Channel::Structure => self.structure,
        }
    }

    pub fn any(&self) -> bool {
        self.position || self.neighborhood || self.structure
    }

    /// Parses flags like "pns", "s", "PN".
    pub fn parse(s: &str) -> Result<ChannelSet, String> {
        let mut set = ChannelSet {
            position: false,
            neighborhood: false,
            structure: false,
        };
        for ch in s.chars() {
            match ch.to_ascii_lowercase() {
                'p' => set.position = true,
                'n' => set.neighborhood = true,
                's' => set.structure = true,
                other => return Err(format!("unknown channel {other:?} (expected p, n, s)")),
            }
        }
        if !set.any() {
            return Err("at least one channel must be enabled".into());
        }
        Ok(set)
    }

    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.position {
            s.push('P');
        }
        if self.neighborhood {
            s.push('N');
        }
        if self.structure {
            s.push('S');
        }
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub channels: ChannelSet,
    /// Anchors drawn per layer, per subchannel.
    pub n_pos_internal: usize,
    pub n_pos_border: usize,
    pub n_nbr_internal: usize,
    pub n_nbr_border: usize,
    pub n_structure: usize,
    /// Neighborhood hop count, shared with the border structure walk region.
    pub k_hops: usize,
    pub layers: usize,
    /// Hidden width of the neighborhood update and the walk encoder.
    pub hidden_dim: usize,
    pub walk: WalkConfig,
    pub init_agg: InitAgg,
    pub activation: Activation,
    /// Internal-neighborhood messages use similarity exactly 1 (the anchors
    /// live inside the component, so the distance term degenerates); off
    /// reads the precomputed value instead.
    pub nbr_internal_gamma_one: bool,
    /// Property outputs score each anchor with its own learned row instead
    /// of one shared projection vector.
    pub property_matrix: bool,
    /// Redraw anchors from the pools every epoch; off freezes the epoch-0
    /// draw for the whole run.
    pub resample_each_epoch: bool,
    /// Classifier head.
    pub ff_hidden: usize,
    pub dropout: f64,
}

impl Default for ChannelConfig {
    fn default() -> ChannelConfig {
        ChannelConfig {
            channels: ChannelSet::ALL,
            n_pos_internal: 40,
            n_pos_border: 100,
            n_nbr_internal: 15,
            n_nbr_border: 40,
            n_structure: 30,
            k_hops: 1,
            layers: 2,
            hidden_dim: 32,
            walk: WalkConfig::default(),
            init_agg: InitAgg::Sum,
            activation: Activation::Relu,
            nbr_internal_gamma_one: true,
            property_matrix: false,
            resample_each_epoch: true,
            ff_hidden: 64,
            dropout: 0.2,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self, pool_size: usize) -> Result<(), String> {
        if !self.channels.any() {
            return Err("at least one channel must be enabled".into());
        }
        let counts = [
            ("n_pos_internal", self.n_pos_internal),
            ("n_pos_border", self.n_pos_border),
            ("n_nbr_internal", self.n_nbr_internal),
            ("n_nbr_border", self.n_nbr_border),
            ("n_structure", self.n_structure),
        ];
        for (name, c) in counts {
            if c == 0 {
                return Err(format!("{name} must be at least 1"));
            }
            if c > pool_size {
                return Err(format!("{name} = {c} exceeds pool size {pool_size}"));
            }
        }
        if !(1..=4).contains(&self.layers) {
            return Err(format!("layers = {} outside [1, 4]", self.layers));
        }
        if !(1..=2).contains(&self.k_hops) {
            return Err(format!("k_hops = {} outside [1, 2]", self.k_hops));
        }
        if self.hidden_dim == 0 || self.ff_hidden == 0 {
            return Err("hidden dims must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout = {} outside [0, 1)", self.dropout));
        }
        self.walk.validate().map_err(|e| e.to_string())
    }

    pub fn anchors_for(&self, sub: Subchannel) -> usize {
        match sub {
            Subchannel::PosInternal => self.n_pos_internal,
            Subchannel::PosBorder => self.n_pos_border,
            Subchannel::NbrInternal => self.n_nbr_internal,
            Subchannel::NbrBorder => self.n_nbr_border,
            Subchannel::StructInternal | Subchannel::StructBorder => self.n_structure,
        }
    }

    /// Width a subchannel contributes to one layer's concat.
    pub fn subchannel_dim(&self, sub: Subchannel) -> usize {
        match sub {
            Subchannel::NbrInternal | Subchannel::NbrBorder => self.hidden_dim,
            other => self.anchors_for(other),
        }
    }

    pub fn enabled_subchannels(&self) -> Vec<Subchannel> {
        Subchannel::ALL
            .into_iter()
            .filter(|s| self.channels.contains(s.channel()))
            .collect()
    }

    /// Final embedding width: the init vector plus every layer's concat.
    pub fn output_dim(&self, embed_dim: usize) -> usize {
        let per_layer: usize = self
            .enabled_subchannels()
            .iter()
            .map(|&s| self.subchannel_dim(s))
            .sum();
        embed_dim + self.layers * per_layer
    }
}

fn subchannel_prefix(sub: Subchannel) -> &'static str {
    match sub {
        Subchannel::PosInternal => "pos_internal",
        Subchannel::PosBorder => "pos_border",
        Subchannel::NbrInternal => "nbr_internal",
        Subchannel::NbrBorder => "nbr_border",
        Subchannel::StructInternal => "struct_internal",
        Subchannel::StructBorder => "struct_border",
    }
}

/// Registers every model parameter. All six subchannels and the walk
/// encoder are registered whatever the enabled set, so disabling a channel
/// is observable as exactly-zero gradients rather than missing slots; only
/// the classifier's input width depends on the enabled channels.
pub fn register_model(
    store: &mut ParamStore,
    cfg: &ChannelConfig,
    embed_dim: usize,
    pool_size: usize,
    num_classes: usize,
) {
    for sub in Subchannel::ALL {
        let prefix = subchannel_prefix(sub);
        match sub.channel() {
            Channel::Neighborhood => {
                for l in 1..=cfg.layers {
                    let in_dim = if l == 1 {
                        2 * embed_dim
                    } else {
                        embed_dim + cfg.hidden_dim
                    };
                    store.add_matrix(&format!("{prefix}.l{l}.w"), cfg.hidden_dim, in_dim);
                }
            }
            _ => {
                let msg_dim = match sub.channel() {
                    Channel::Structure => cfg.hidden_dim,
                    _ => embed_dim,
                };
                for l in 1..=cfg.layers {
                    let name = format!("{prefix}.l{l}.q");
                    if cfg.property_matrix {
                        store.add_matrix(&name, pool_size, msg_dim);
                    } else {
                        store.add_vector_glorot(&name, msg_dim);
                    }
                }
            }
        }
    }
    BiRecurrent::register(store, "walk_encoder", embed_dim, cfg.hidden_dim);
    register_classifier(
        store,
        cfg.output_dim(embed_dim),
        cfg.ff_hidden,
        num_classes,
    );
}

/// Three affine layers; used by the model and, with input width equal to
/// the embedding dim, by the node-averaging baseline. The output layer
/// starts at zero so logits begin uniform whatever the input scale.
pub fn register_classifier(
    store: &mut ParamStore,
    in_dim: usize,
    ff_hidden: usize,
    num_classes: usize,
) {
    store.add_matrix("classifier.l1.w", ff_hidden, in_dim);
    store.add_vector("classifier.l1.b", ff_hidden, 0.0);
    store.add_matrix("classifier.l2.w", ff_hidden, ff_hidden);
    store.add_vector("classifier.l2.b", ff_hidden, 0.0);
    let slot = store.add_matrix("classifier.l3.w", num_classes, ff_hidden);
    for v in &mut store.tensor_mut(slot).data {
        *v = 0.0;
    }
    store.add_vector("classifier.l3.b", num_classes, 0.0);
}

/// Anchor draws for one layer of one epoch. Indices point into the
/// matching pool, sorted ascending, drawn without replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerAnchors {
    /// Per subgraph, shared by all of its components.
    pub pos_internal: Vec<Vec<usize>>,
    /// Shared by every subgraph.
    pub pos_border: Vec<usize>,
    /// Per global component.
    pub nbr_internal: Vec<Vec<usize>>,
    pub nbr_border: Vec<Vec<usize>>,
    /// Shared by every subgraph; one entry per drawn structure anchor.
    pub structure: Vec<usize>,
    /// Encoder walks aligned with `structure`, one list per drawn patch.
    pub walks_internal: Vec<Vec<Vec<u32>>>,
    pub walks_border: Vec<Vec<Vec<u32>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochAnchors {
    /// layers[l-1] holds the draws layer l consumes.
    pub layers: Vec<LayerAnchors>,
}

/// Sorted sample of `count` distinct indices from [0, pool).
fn draw_indices(pool: usize, count: usize, rng: &mut Stream) -> Vec<usize> {
    assert!(count <= pool, "drawing {count} from pool of {pool}");
    let mut slots: Vec<usize> = (0..pool).collect();
    for i in 0..count {
        let j = rng.gen_range(i..slots.len());
        slots.swap(i, j);
    }
    let mut picked = slots[..count].to_vec();
    picked.sort_unstable();
    picked
}

use rand::Rng;

/// Draws one epoch's anchors for every layer. Streams are addressed by
/// (epoch, layer, subchannel, scope), so draws are independent of batch
/// order and of each other; with resampling off the epoch collapses to 0.
pub fn draw_epoch_anchors(
    graph: &Graph,
    pools: &AnchorPools,
    index: &ComponentIndex,
    num_subgraphs: usize,
    cfg: &ChannelConfig,
    seed: u64,
    epoch: u64,
) -> EpochAnchors {
    let epoch = if cfg.resample_each_epoch { epoch } else { 0 };
    let pool = pools.pool_size;
    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 1..=cfg.layers as u64 {
        let draw = |sub: Subchannel, scope: u64, count: usize, rng_pool: usize| {
            let mut rng = stream(seed, &[tag::ANCHORS, epoch, l, sub.index() as u64, scope]);
            draw_indices(rng_pool, count, &mut rng)
        };
        let pos_internal: Vec<Vec<usize>> = (0..num_subgraphs)
            .map(|s| draw(Subchannel::PosInternal, s as u64, cfg.n_pos_internal, pool))
            .collect();
        let pos_border = draw(Subchannel::PosBorder, 0, cfg.n_pos_border, pool);
        let nbr_internal: Vec<Vec<usize>> = (0..index.num_components())
            .map(|c| draw(Subchannel::NbrInternal, c as u64, cfg.n_nbr_internal, pool))
            .collect();
        let nbr_border: Vec<Vec<usize>> = (0..index.num_components())
            .map(|c| draw(Subchannel::NbrBorder, c as u64, cfg.n_nbr_border, pool))
            .collect();
        let structure = draw(Subchannel::StructInternal, 0, cfg.n_structure, pool);

        let mut walks_internal = Vec::with_capacity(structure.len());
        let mut walks_border = Vec::with_capacity(structure.len());
        for &p in &structure {
            let patch = &pools.structure[p];
            if patch.is_sentinel() {
                walks_internal.push(Vec::new());
                walks_border.push(Vec::new());
                continue;
            }
            let mut rng = stream(seed, &[tag::WALKS, epoch, l, p as u64, 0]);
            let region = WalkRegion::internal(graph, &patch.nodes);
            walks_internal.push(structure_encoding_walks(graph, &region, &cfg.walk, &mut rng));
            let mut rng = stream(seed, &[tag::WALKS, epoch, l, p as u64, 1]);
            let region = WalkRegion::border(graph, &patch.nodes, cfg.k_hops)
                .expect("pool patches are in range");
            walks_border.push(structure_encoding_walks(graph, &region, &cfg.walk, &mut rng));
        }
        layers.push(LayerAnchors {
            pos_internal,
            pos_border,
            nbr_internal,
            nbr_border,
            structure,
            walks_internal,
            walks_border,
        });
    }
    EpochAnchors { layers }
}

/// Similarity-scaled anchor representation.
pub fn message(tape: &mut Tape, encoding: Id, gamma: f64) -> Id {
    tape.scale(encoding, gamma)
}

/// Sorts ids by their forward values (lexicographic over coordinates); any
/// permutation of equal-content inputs folds to bit-identical sums.
fn sort_by_content(tape: &Tape, ids: &mut [Id]) {
    ids.sort_by(|&a, &b| {
        let (va, vb) = (tape.value(a), tape.value(b));
        for (x, y) in va.iter().zip(vb) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        va.len().cmp(&vb.len())
    });
}

fn apply_activation(tape: &mut Tape, act: Activation, x: Id) -> Id {
    match act {
        Activation::Relu => tape.relu(x),
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Tanh => tape.tanh(x),
    }
}

/// Neighborhood update: g = sum of messages (zero when none), then
/// h = act(W · [g ; h_prev]).
pub fn layer_update(
    tape: &mut Tape,
    h_prev: Id,
    messages: &[Id],
    w: Id,
    act: Activation,
) -> Result<(Id, Id), NnError> {
    let g = if messages.is_empty() {
        let dim = tape.shape(w)[1] - tape.value(h_prev).len();
        tape.constant_vector(vec![0.0; dim])
    } else {
        let mut sorted = messages.to_vec();
        sort_by_content(tape, &mut sorted);
        tape.add_n(&sorted)?
    };
    let joined = tape.concat(&[g, h_prev])?;
    let pre = tape.matvec(w, joined)?;
    Ok((g, apply_activation(tape, act, pre)))
}

/// Property output: one coordinate per anchor message, in the given (pool)
/// order. `rows` selects each anchor's scoring row when q is a matrix;
/// otherwise q is a shared projection vector.
pub fn property_output(
    tape: &mut Tape,
    q: Id,
    messages: &[Id],
    rows: Option<&[usize]>,
    act: Activation,
) -> Result<Id, NnError> {
    let mut coords = Vec::with_capacity(messages.len());
    for (i, &m) in messages.iter().enumerate() {
        let proj = match rows {
            Some(rows) => tape.lookup(q, rows[i])?,
            None => q,
        };
        coords.push(tape.dot(proj, m)?);
    }
    let stacked = tape.stack(&coords)?;
    Ok(apply_activation(tape, act, stacked))
}

/// Everything a forward pass reads. Parameters and the tape stay outside so
/// one tape can carry a whole batch.
pub struct ForwardCtx<'a> {
    pub graph: &'a Graph,
    pub subgraphs: &'a [Subgraph],
    pub index: &'a ComponentIndex,
    pub pools: &'a AnchorPools,
    pub cache: &'a SimilarityCache,
    pub embeddings: &'a EmbeddingTable,
    pub cfg: &'a ChannelConfig,
    pub anchors: &'a EpochAnchors,
}

/// Memo of structure-patch encodings, keyed by (layer, pool index, border);
/// shared across components and batch members on one tape.
pub type StructMemo = HashMap<(usize, usize, bool), Id>;

pub struct ForwardOut {
    /// READOUT: sum of component embeddings.
    pub z_s: Id,
    /// Per component, the full concat (init block plus every layer).
    pub z_c: Vec<Id>,
    /// Per component, per layer, per subchannel index: that subchannel's
    /// output (h for neighborhood, z otherwise); None when disabled.
    pub subchannel_outputs: Vec<Vec<[Option<Id>; 6]>>,
}

/// Structure-patch encoding: each walk's embedding sequence through the
/// shared bidirectional encoder, summed over walks. No walks (sentinel
/// patch or no walkable region) gives a zero vector.
fn encode_structure_patch(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ChannelConfig,
    embeddings: &EmbeddingTable,
    walks: &[Vec<u32>],
) -> Result<Id, NnError> {
    if walks.is_empty() {
        return Ok(tape.constant_vector(vec![0.0; cfg.hidden_dim]));
    }
    let encoder = BiRecurrent::from_store("walk_encoder", embeddings.dim, cfg.hidden_dim);
    let mut encoded = Vec::with_capacity(walks.len());
    for walk in walks {
        let seq: Vec<Id> = walk
            .iter()
            .map(|&v| tape.constant_vector(embeddings.row(v).to_vec()))
            .collect();
        encoded.push(encoder.encode(tape, store, &seq)?);
    }
    sort_by_content(tape, &mut encoded);
    tape.add_n(&encoded)
}

/// ψ_x for position and neighborhood patches: the anchor node's embedding.
/// Sentinels encode to zero.
fn encode_node_patch(embeddings: &EmbeddingTable, nodes: &[u32]) -> Vec<f64> {
    match nodes.first() {
        Some(&v) => embeddings.row(v).to_vec(),
        None => vec![0.0; embeddings.dim],
    }
}

/// Component init: aggregate member-node embeddings (sum or elementwise
/// max), folding in sorted node order.
fn init_component(embeddings: &EmbeddingTable, nodes: &[u32], agg: InitAgg) -> Vec<f64> {
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    let mut acc = vec![
        match agg {
            InitAgg::Sum => 0.0,
            InitAgg::Max => f64::NEG_INFINITY,
        };
        embeddings.dim
    ];
    for &v in &sorted {
        for (a, x) in acc.iter_mut().zip(embeddings.row(v)) {
            *a = match agg {
                InitAgg::Sum => *a + x,
                InitAgg::Max => a.max(*x),
            };
        }
    }
    acc
}

/// Off-tape sum of constant message vectors, content-sorted like the tape
/// sums so the same bit-exactness argument applies.
fn sum_constant_messages(messages: &mut Vec<Vec<f64>>, dim: usize) -> Vec<f64> {
    messages.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b.iter()) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        a.len().cmp(&b.len())
    });
    let mut acc = vec![0.0; dim];
    for m in messages.iter() {
        for (a, x) in acc.iter_mut().zip(m) {
            *a += x;
        }
    }
    acc
}

/// Full forward pass for one subgraph. Position and neighborhood messages
/// are constants (frozen embeddings scaled by cached similarities), so only
/// parameter-dependent nodes land on the tape.
pub fn forward(
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &ForwardCtx,
    subgraph_idx: usize,
    memo: &mut StructMemo,
) -> Result<ForwardOut, NnError> {
    let cfg = ctx.cfg;
    let sub = &ctx.subgraphs[subgraph_idx];
    assert!(!sub.nodes.is_empty(), "subgraph has no nodes");
    let comp_range = ctx.index.of_subgraph(subgraph_idx);
    let embed_dim = ctx.embeddings.dim;
    let act = cfg.activation;
    let enabled = cfg.enabled_subchannels();

    let mut z_c_ids = Vec::with_capacity(sub.components.len());
    let mut all_outputs = Vec::with_capacity(sub.components.len());

    for (ci, comp) in sub.components.iter().enumerate() {
        let gid = comp_range.start + ci;
        let z0_data = init_component(ctx.embeddings, comp, cfg.init_agg);
        let z0 = tape.constant_vector(z0_data.clone());

        // Hidden streams for the two neighborhood subchannels.
        let mut h_ni = z0;
        let mut h_nb = z0;
        let mut pieces = vec![z0];
        let mut layer_outputs = Vec::with_capacity(cfg.layers);

        for l in 1..=cfg.layers {
            let la = &ctx.anchors.layers[l - 1];
            let mut outputs: [Option<Id>; 6] = Default::default();

            for &sc in &enabled {
                let out = match sc {
                    Subchannel::PosInternal | Subchannel::PosBorder => {
                        let (draws, pool) = match sc {
                            Subchannel::PosInternal => (
                                &la.pos_internal[subgraph_idx],
                                &ctx.pools.pos_internal[subgraph_idx],
                            ),
                            _ => (&la.pos_border, &ctx.pools.pos_border),
                        };
                        let mut rows = Vec::with_capacity(draws.len());
                        let mut msgs = Vec::with_capacity(draws.len());
                        for &p in draws {
                            let gamma = ctx.cache.get(gid, p, sc) as f64;
                            let a_x = encode_node_patch(ctx.embeddings, &pool[p].nodes);
                            msgs.push(tape.constant_vector(
                                a_x.iter().map(|x| x * gamma).collect(),
                            ));
                            rows.push(p);
                        }
                        let q = tape.param(store, &format!("{}.l{l}.q", subchannel_prefix(sc)))?;
                        let rows = cfg.property_matrix.then_some(rows.as_slice());
                        property_output(tape, q, &msgs, rows, act)?
                    }
                    Subchannel::NbrInternal | Subchannel::NbrBorder => {
                        let (draws, pool, h_prev) = match sc {
                            Subchannel::NbrInternal => (
                                &la.nbr_internal[gid],
                                &ctx.pools.nbr_internal[gid],
                                &mut h_ni,
                            ),
                            _ => (&la.nbr_border[gid], &ctx.pools.nbr_border[gid], &mut h_nb),
                        };
                        let mut msgs = Vec::with_capacity(draws.len());
                        for &p in draws {
                            let gamma = if sc == Subchannel::NbrInternal
                                && cfg.nbr_internal_gamma_one
                            {
                                1.0
                            } else {
                                ctx.cache.get(gid, p, sc) as f64
                            };
                            let a_x = encode_node_patch(ctx.embeddings, &pool[p].nodes);
                            msgs.push(a_x.iter().map(|x| x * gamma).collect());
                        }
                        let g_data = sum_constant_messages(&mut msgs, embed_dim);
                        let g = tape.constant_vector(g_data);
                        let w = tape.param(store, &format!("{}.l{l}.w", subchannel_prefix(sc)))?;
                        let joined = tape.concat(&[g, *h_prev])?;
                        let pre = tape.matvec(w, joined)?;
                        let h = apply_activation(tape, act, pre);
                        *h_prev = h;
                        h
                    }
                    Subchannel::StructInternal | Subchannel::StructBorder => {
                        let border = sc == Subchannel::StructBorder;
                        let mut rows = Vec::with_capacity(la.structure.len());
                        let mut msgs = Vec::with_capacity(la.structure.len());
                        for (j, &p) in la.structure.iter().enumerate() {
                            let enc = match memo.entry((l, p, border)) {
                                std::collections::hash_map::Entry::Occupied(e) => *e.get(),
                                std::collections::hash_map::Entry::Vacant(e) => {
                                    let walks = if border {
                                        &la.walks_border[j]
                                    } else {
                                        &la.walks_internal[j]
                                    };
                                    let enc = encode_structure_patch(
                                        tape,
                                        store,
                                        cfg,
                                        ctx.embeddings,
                                        walks,
                                    )?;
                                    *e.insert(enc)
                                }
                            };
                            let gamma = ctx.cache.get(gid, p, sc) as f64;
                            msgs.push(message(tape, enc, gamma));
                            rows.push(p);
                        }
                        let q = tape.param(store, &format!("{}.l{l}.q", subchannel_prefix(sc)))?;
                        let rows = cfg.property_matrix.then_some(rows.as_slice());
                        property_output(tape, q, &msgs, rows, act)?
                    }
                };
                outputs[sc.index()] = Some(out);
            }

            let layer_concat: Vec<Id> = enabled
                .iter()
                .map(|&sc| outputs[sc.index()].unwrap())
                .collect();
            pieces.push(tape.concat(&layer_concat)?);
            layer_outputs.push(outputs);
        }

        z_c_ids.push(tape.concat(&pieces)?);
        all_outputs.push(layer_outputs);
    }

    let z_s = if z_c_ids.len() == 1 {
        z_c_ids[0]
    } else {
        let mut sorted = z_c_ids.clone();
        sort_by_content(tape, &mut sorted);
        tape.add_n(&sorted)?
    };
    Ok(ForwardOut {
        z_s,
        z_c: z_c_ids,
        subchannel_outputs: all_outputs,
    })
}

/// Classifier head: three affine layers with relu and dropout after the
/// first two. Loss functions downstream interpret the logits as softmax
/// (multiclass) or independent sigmoids (multilabel).
pub fn classify(
    tape: &mut Tape,
    store: &ParamStore,
    z: Id,
    dropout: f64,
    train: bool,
    rng: &mut Stream,
) -> Result<Id, NnError> {
    let mut x = z;
    for l in 1..=3 {
        let w = tape.param(store, &format!("classifier.l{l}.w"))?;
        let b = tape.param(store, &format!("classifier.l{l}.b"))?;
        let wx = tape.matvec(w, x)?;
        x = tape.add(wx, b)?;
        if l < 3 {
            x = tape.relu(x);
            x = tape.dropout(x, dropout, train, rng);
        }
    }
    Ok(x)
}

/// Mean of the member-node embeddings; the trivial baseline fed to the same
/// classifier head shape.
pub fn node_avg_baseline(subgraph: &Subgraph, embeddings: &EmbeddingTable) -> Vec<f64> {
    assert!(!subgraph.nodes.is_empty(), "subgraph has no nodes");
    let mut sorted = subgraph.nodes.clone();
    sorted.sort_unstable();
    let mut acc = vec![0.0; embeddings.dim];
    for &v in &sorted {
        for (a, x) in acc.iter_mut().zip(embeddings.row(v)) {
            *a += x;
        }
    }
    let inv = 1.0 / sorted.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    acc
}
