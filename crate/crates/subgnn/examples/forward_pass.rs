//! Runs one forward pass end to end on a tiny stack and prints the shape
//! and content of every intermediate the encoder produces.
//!
//! Usage: cargo run --release --example forward_pass

use std::collections::HashMap;

use subgnn::anchors::{build_pools, ComponentIndex, PoolConfig, Subchannel, WalkConfig};
use subgnn::model::{
    classify, draw_epoch_anchors, forward, register_model, ChannelConfig, ForwardCtx,
};
use subgnn::nn::{ParamStore, Tape};
use subgnn::pretrain::EmbeddingTable;
use subgnn::rng::stream;
use subgnn::similarity::{precompute, DtwNormalization};
use subgnn::synth::{make_dataset, SynthConfig, Task};

fn main() {
    let mut cfg = SynthConfig::for_task(Task::Component, 9);
    cfg.num_subgraphs = 12;
    cfg.base_nodes = 600;
    let ds = make_dataset(&cfg).unwrap();
    let embeddings = EmbeddingTable::random(ds.graph.num_nodes(), 16, 0.1, &mut stream(9, &[1]));
    let pool_cfg = PoolConfig {
        pool_size: 20,
        k_hops: 1,
        walk: WalkConfig {
            beta: 0.5,
            walk_length: 10,
            num_walks: 2,
        },
    };
    let pools = build_pools(&ds.graph, &ds.subgraphs, &pool_cfg, &mut stream(9, &[2])).unwrap();
    let cache = precompute(&ds.graph, &ds.subgraphs, &pools, DtwNormalization::PathLength);
    let index = ComponentIndex::build(&ds.subgraphs);

    let channel_cfg = ChannelConfig {
        n_pos_internal: 6,
        n_pos_border: 8,
        n_nbr_internal: 4,
        n_nbr_border: 6,
        n_structure: 5,
        hidden_dim: 12,
        walk: pool_cfg.walk,
        ..ChannelConfig::default()
    };
    let mut store = ParamStore::new(9);
    register_model(
        &mut store,
        &channel_cfg,
        embeddings.dim,
        pools.pool_size,
        ds.label_names.len(),
    );
    println!("registered {} parameter tensors", store.len());

    let anchors = draw_epoch_anchors(
        &ds.graph,
        &pools,
        &index,
        ds.subgraphs.len(),
        &channel_cfg,
        9,
        0,
    );
    let ctx = ForwardCtx {
        graph: &ds.graph,
        subgraphs: &ds.subgraphs,
        index: &index,
        pools: &pools,
        cache: &cache,
        embeddings: &embeddings,
        cfg: &channel_cfg,
        anchors: &anchors,
    };

    let sub_idx = 0;
    let s = &ds.subgraphs[sub_idx];
    println!(
        "subgraph {sub_idx}: {} nodes in {} components, label {}",
        s.nodes.len(),
        s.components.len(),
        s.labels[0]
    );

    let mut tape = Tape::new();
    let mut memo = HashMap::new();
    let out = forward(&mut tape, &store, &ctx, sub_idx, &mut memo).unwrap();
    println!(
        "z_S dim {} = embed({}) + layers({}) x per-layer({})",
        tape.shape(out.z_s)[0],
        embeddings.dim,
        channel_cfg.layers,
        (tape.shape(out.z_s)[0] - embeddings.dim) / channel_cfg.layers
    );
    for (c, per_layer) in out.subchannel_outputs.iter().enumerate() {
        let dims: Vec<String> = Subchannel::ALL
            .iter()
            .map(|&sub| match per_layer[0][sub.index()] {
                Some(id) => format!("{:?}:{}", sub, tape.shape(id)[0]),
                None => format!("{sub:?}:-"),
            })
            .collect();
        println!("  component {c} layer 1: {}", dims.join(" "));
    }
    let head: Vec<f64> = tape.value(out.z_s)[..6].to_vec();
    println!("z_S[..6] = {head:?}");

    let logits = classify(&mut tape, &store, out.z_s, 0.0, false, &mut stream(9, &[3])).unwrap();
    println!("logits = {:?} (untrained, zero output head)", tape.value(logits));
    println!("memoized structure encodings: {}", memo.len());
    println!("tape nodes for one subgraph: {}", tape.len());
}
