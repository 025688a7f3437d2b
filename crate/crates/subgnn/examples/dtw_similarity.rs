//! Walks through the channel similarity functions: degree sequences, DTW,
//! the three gamma forms, and a full precomputed cache.
//!
//! Usage: cargo run --release --example dtw_similarity

use subgnn::anchors::{build_pools, AnchorPatch, ComponentIndex, PoolConfig, Subchannel, WalkConfig};
use subgnn::graph::{Graph, Subgraph};
use subgnn::rng::stream;
use subgnn::similarity::{
    degree_sequence, dtw, gamma_position, gamma_structure, precompute, DegreeMode,
    DtwNormalization,
};
use subgnn::synth::gen_barabasi_albert;

fn main() {
    // Dense triangle vs sparse path: the degree sequences differ and DTW
    // quantifies by how much.
    let g = Graph::from_edges(6, vec![(0, 1), (0, 2), (1, 2), (3, 4), (4, 5)]).unwrap();
    let tri = degree_sequence(&g, &[0, 1, 2], DegreeMode::Internal);
    let path = degree_sequence(&g, &[3, 4, 5], DegreeMode::Internal);
    println!("triangle internal degrees {:?}", tri.values);
    println!("path internal degrees     {:?}", path.values);
    for norm in [
        DtwNormalization::PathLength,
        DtwNormalization::MaxLength,
        DtwNormalization::None,
    ] {
        println!(
            "  dtw({norm:?}) = {:.3}",
            dtw(&tri.as_f64(), &path.as_f64(), norm).unwrap()
        );
    }

    let patch = AnchorPatch {
        nodes: vec![3, 4, 5],
        pool_index: 0,
    };
    println!(
        "gamma_structure(triangle vs path) = {:.3}",
        gamma_structure(
            &g,
            &[0, 1, 2],
            &patch,
            DegreeMode::Internal,
            DtwNormalization::PathLength
        )
    );
    println!(
        "gamma_position(triangle vs {{2}})   = {:.3}",
        gamma_position(
            &g,
            &[0, 1, 2],
            &AnchorPatch {
                nodes: vec![2],
                pool_index: 0
            }
        )
    );

    // Full cache over a small benchmark-shaped fixture.
    let base = gen_barabasi_albert(200, 3, &mut stream(31, &[]));
    let subgraphs: Vec<Subgraph> = (0..4)
        .map(|i| {
            let start = (i * 40) as u32;
            Subgraph::new(&base, i, (start..start + 6).collect(), vec![i % 2]).unwrap()
        })
        .collect();
    let cfg = PoolConfig {
        pool_size: 8,
        k_hops: 1,
        walk: WalkConfig::default(),
    };
    let pools = build_pools(&base, &subgraphs, &cfg, &mut stream(32, &[])).unwrap();
    let cache = precompute(&base, &subgraphs, &pools, DtwNormalization::PathLength);
    let index = ComponentIndex::build(&subgraphs);
    println!(
        "\ncache: {} components x {} patches x 6 subchannels = {} values",
        index.num_components(),
        cache.pool_size,
        cache.len()
    );
    for sub in Subchannel::ALL {
        let row: Vec<String> = (0..4)
            .map(|p| format!("{:.2}", cache.get(0, p, sub)))
            .collect();
        println!("  component 0, {sub:?}: [{}]", row.join(", "));
    }
}
