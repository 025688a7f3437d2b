//! Computes every supported subgraph property on a small hand-built graph
//! and on one synthetic benchmark subgraph.
//!
//! Usage: cargo run --example graph_metrics

use subgnn::graph::{
    avg_shortest_path, connected_components, core_numbers, cut_ratio, density,
    khop_neighborhood, Graph,
};
use subgnn::synth::{make_dataset, SynthConfig, Task};

fn main() {
    // Two triangles joined by a bridge, plus a pendant node.
    let g = Graph::from_edges(
        7,
        vec![
            (0, 1),
            (0, 2),
            (1, 2),
            (2, 3),
            (3, 4),
            (3, 5),
            (4, 5),
            (5, 6),
        ],
    )
    .unwrap();

    let set = vec![0u32, 1, 2, 4, 5];
    println!("node set {set:?} in a 7-node graph:");
    println!("  density          {:.3}", density(&g, &set).unwrap());
    println!("  cut ratio        {:.3}", cut_ratio(&g, &set).unwrap());
    println!(
        "  components       {:?}",
        connected_components(&g, &set).unwrap()
    );
    println!(
        "  1-hop border     {:?}",
        khop_neighborhood(&g, &set, 1).unwrap()
    );
    println!(
        "  avg path to {{3}}  {:.3}",
        avg_shortest_path(&g, &set, &[3]).unwrap()
    );
    println!("  core numbers     {:?}", core_numbers(&g));

    // The same metrics drive benchmark labels.
    let ds = make_dataset(&SynthConfig::for_task(Task::Density, 7)).unwrap();
    let s = &ds.subgraphs[0];
    println!(
        "\ndensity benchmark subgraph 0: {} nodes, density {:.3}, label {} ({})",
        s.nodes.len(),
        density(&ds.graph, &s.nodes).unwrap(),
        s.labels[0],
        ds.label_names[s.labels[0]],
    );
}
