//! Trains a structure-channel model on a reduced density benchmark and
//! prints the per-seed report plus the node-averaging baseline.
//!
//! Usage: cargo run --release --example train_density

use subgnn::anchors::{build_pools, Channel, PoolConfig, WalkConfig};
use subgnn::model::{node_avg_baseline, ChannelConfig, ChannelSet};
use subgnn::pretrain::{pretrain_link_prediction, PretrainConfig};
use subgnn::rng::{stream, tag};
use subgnn::similarity::{precompute, DtwNormalization};
use subgnn::synth::{make_dataset, Split, SynthConfig, Task};
use subgnn::train::{baseline_report, format_mean_std, train, RunConfig, TrainData};

fn main() {
    let seed = 17;
    let mut synth = SynthConfig::for_task(Task::Density, seed);
    synth.num_subgraphs = 120;
    synth.base_nodes = 2500;
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

    let cfg = RunConfig {
        channel: ChannelConfig {
            channels: ChannelSet::only(Channel::Structure),
            resample_each_epoch: false,
            dropout: 0.0,
            ..ChannelConfig::default()
        },
        batch_size: 16,
        epochs: 60,
        seeds: vec![0, 1],
        ..RunConfig::default()
    };
    let start = std::time::Instant::now();
    let out = train(&data, &cfg).unwrap();
    println!("trained in {:.0}s", start.elapsed().as_secs_f64());
    for s in &out.report.seeds {
        println!(
            "  seed {}: val micro-F1 {:.3}, test micro-F1 {:.3}, test AUROC {:.3}",
            s.seed, s.val.micro_f1, s.test.micro_f1, s.test.auroc
        );
    }
    println!(
        "mean test micro-F1 {}",
        format_mean_std(out.report.mean.test.micro_f1, out.report.std.test.micro_f1)
    );

    // A classifier over mean node embeddings ignores all topology; the gap
    // to it is what the channels buy.
    let baseline = baseline_report(&data, &cfg).unwrap();
    println!(
        "node-averaging baseline test micro-F1 {}",
        format_mean_std(baseline.mean.test.micro_f1, baseline.std.test.micro_f1)
    );

    // Same features, nearest-centroid view of the gap.
    let train_idx = data.split_indices(Split::Train);
    let featurize = |i: usize| node_avg_baseline(&dataset.subgraphs[i], &embeddings);
    let k = dataset.label_names.len();
    let mut centroids = vec![vec![0.0; embeddings.dim]; k];
    let mut counts = vec![0usize; k];
    for &i in &train_idx {
        let f = featurize(i);
        let l = dataset.subgraphs[i].labels[0];
        counts[l] += 1;
        for (c, x) in centroids[l].iter_mut().zip(&f) {
            *c += x;
        }
    }
    for (c, n) in centroids.iter_mut().zip(&counts) {
        for x in c.iter_mut() {
            *x /= (*n).max(1) as f64;
        }
    }
    let test_idx = data.split_indices(Split::Test);
    let hits = test_idx
        .iter()
        .filter(|&&i| {
            let f = featurize(i);
            let best = (0..k)
                .min_by(|&a, &b| {
                    let da: f64 = centroids[a].iter().zip(&f).map(|(c, x)| (c - x).powi(2)).sum();
                    let db: f64 = centroids[b].iter().zip(&f).map(|(c, x)| (c - x).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            best == dataset.subgraphs[i].labels[0]
        })
        .count();
    println!(
        "nearest-centroid on the same features: {:.3}",
        hits as f64 / test_idx.len() as f64
    );
}
