//! Demonstrates triangle-biased random walks: empirical next-step
//! frequencies on K4 against the closed-form law, and the patches the walk
//! induces on a larger graph.
//!
//! Usage: cargo run --release --example triangular_walks

use subgnn::anchors::{sample_structure, triangular_walk, WalkConfig};
use subgnn::graph::Graph;
use subgnn::rng::stream;
use subgnn::synth::gen_barabasi_albert;

fn main() {
    // On K4, every neighbor w of the current node closes a triangle with
    // the previous node; with probability beta the step is drawn from those
    // closing neighbors, otherwise from the rest.
    let k4 = Graph::from_edges(4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
    let mut rng = stream(11, &[]);
    for beta in [0.0, 0.5, 1.0] {
        let cfg = WalkConfig {
            beta,
            walk_length: 3,
            num_walks: 1,
        };
        // On K4 all three neighbors close a triangle, so the first-step
        // distribution stays uniform for every beta.
        let mut counts = [0usize; 4];
        for _ in 0..30_000 {
            let walk = triangular_walk(&k4, &[0], &cfg, None, &mut rng);
            if walk.len() >= 2 {
                counts[walk[1] as usize] += 1;
            }
        }
        let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / 30_000.0).collect();
        println!("K4 beta={beta}: first-step frequencies {freqs:?}");
    }

    // Star graph: no triangles at all, so beta has nothing to bias and
    // every walk bounces through the hub.
    let star = Graph::from_edges(5, vec![(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
    let cfg = WalkConfig {
        beta: 1.0,
        walk_length: 6,
        num_walks: 1,
    };
    let walk = triangular_walk(&star, &[1], &cfg, None, &mut rng);
    println!("star walk from 1: {walk:?} (hub revisited every other step)");

    // Structure anchor patches are the node sets such walks visit.
    let g = gen_barabasi_albert(300, 3, &mut stream(12, &[]));
    let cfg = WalkConfig::default();
    let mut sizes = Vec::new();
    for _ in 0..5 {
        let patch = sample_structure(&g, &cfg, &mut rng);
        sizes.push(patch.nodes.len());
        if sizes.len() <= 2 {
            println!("sampled structure patch: {:?}", patch.nodes);
        }
    }
    println!(
        "patch sizes over 5 draws: {sizes:?} (walk length {})",
        cfg.walk_length
    );
}
