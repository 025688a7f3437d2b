//! Runs the four-arm channel ablation (P, N, S, P+N+S) on a reduced
//! component-counting benchmark and prints the comparison table.
//!
//! Usage: cargo run --release --example ablation_table

use subgnn::anchors::{build_pools, PoolConfig, WalkConfig};
use subgnn::model::ChannelConfig;
use subgnn::pretrain::{pretrain_link_prediction, PretrainConfig};
use subgnn::rng::{stream, tag};
use subgnn::similarity::{precompute, DtwNormalization};
use subgnn::synth::{make_dataset, SynthConfig, Task};
use subgnn::train::{ablate, AblationTable, RunConfig, TrainData};

fn main() {
    let seed = 23;
    let mut synth = SynthConfig::for_task(Task::Component, seed);
    synth.num_subgraphs = 90;
    let dataset = make_dataset(&synth).unwrap();
    let embeddings = pretrain_link_prediction(
        &dataset.graph,
        &PretrainConfig::default(),
        &mut stream(seed, &[tag::PRETRAIN]),
    )
    .unwrap();
    let pool_cfg = PoolConfig {
        pool_size: 100,
        k_hops: 1,
        walk: WalkConfig::default(),
    };
    let pools = build_pools(
        &dataset.graph,
        &dataset.subgraphs,
        &pool_cfg,
        &mut stream(seed, &[tag::POOLS]),
    )
    .unwrap();
    let cache = precompute(
        &dataset.graph,
        &dataset.subgraphs,
        &pools,
        DtwNormalization::PathLength,
    );
    let data = TrainData {
        dataset: &dataset,
        pools: &pools,
        cache: &cache,
        embeddings: &embeddings,
    };

    let base = RunConfig {
        channel: ChannelConfig {
            resample_each_epoch: false,
            dropout: 0.0,
            ..ChannelConfig::default()
        },
        batch_size: 16,
        epochs: 40,
        patience: 10,
        seeds: vec![0, 1],
        ..RunConfig::default()
    };
    let start = std::time::Instant::now();
    let runs = ablate(&data, &base).unwrap();
    let table = AblationTable::from_runs(&runs);
    println!(
        "component task, {} subgraphs, seeds {:?}, {:.0}s\n",
        dataset.subgraphs.len(),
        base.seeds,
        start.elapsed().as_secs_f64()
    );
    print!("{}", table.to_text());
    println!("\ncsv form:\n{}", table.to_csv());
}
