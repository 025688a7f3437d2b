use subgnn::anchors::{build_pools, PoolConfig, WalkConfig};
use subgnn::model::{node_avg_baseline, Activation, ChannelConfig, ChannelSet};
use subgnn::pretrain::{pretrain_link_prediction, PretrainConfig};
use subgnn::rng::{stream, tag};
use subgnn::similarity::{precompute, DtwNormalization};
use subgnn::synth::{make_dataset, Split, SynthConfig, Task};
use subgnn::train::{train, RunConfig, TrainData};

fn main() {
    let t0 = std::time::Instant::now();
    let cfg = SynthConfig::for_task(Task::Density, 41);
    let dataset = make_dataset(&cfg).unwrap();
    let embeddings = pretrain_link_prediction(
        &dataset.graph,
        &PretrainConfig::default(),
        &mut stream(41, &[tag::PRETRAIN]),
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
        &mut stream(41, &[tag::POOLS]),
    )
    .unwrap();
    let cache = precompute(
        &dataset.graph,
        &dataset.subgraphs,
        &pools,
        DtwNormalization::PathLength,
    );
    println!("stack ready {:.1}s", t0.elapsed().as_secs_f64());
    let data = TrainData {
        dataset: &dataset,
        pools: &pools,
        cache: &cache,
        embeddings: &embeddings,
    };

    // node-averaging baseline scale check: 1-NN on mean-embedding features.
    let feats: Vec<Vec<f64>> = dataset
        .subgraphs
        .iter()
        .map(|s| node_avg_baseline(s, &embeddings))
        .collect();
    let labels: Vec<usize> = dataset.subgraphs.iter().map(|s| s.labels[0]).collect();
    let mut hits = 0;
    for i in 0..feats.len() {
        let mut best = (f64::INFINITY, 0usize);
        for j in 0..feats.len() {
            if i == j {
                continue;
            }
            let d: f64 = feats[i]
                .iter()
                .zip(&feats[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.0 {
                best = (d, labels[j]);
            }
        }
        if best.1 == labels[i] {
            hits += 1;
        }
    }
    println!(
        "node-avg 1-NN acc {:.3}",
        hits as f64 / feats.len() as f64
    );

    let variants: Vec<(&str, usize, usize, usize)> = vec![
        ("n_s=100 relu b16 h32", 100, 32, 16),
        ("n_s=100 relu b16 h64", 100, 64, 16),
        ("n_s=100 relu b32 h32", 100, 32, 32),
    ];
    for (name, n_s, hidden, batch) in variants {
        let rc = RunConfig {
            channel: ChannelConfig {
                channels: ChannelSet::parse("s").unwrap(),
                n_structure: n_s,
                hidden_dim: hidden,
                activation: Activation::Relu,
                resample_each_epoch: false,
                dropout: 0.0,
                ..ChannelConfig::default()
            },
            batch_size: batch,
            epochs: 120,
            patience: 20,
            seeds: vec![0, 1, 2],
            ..RunConfig::default()
        };
        let t1 = std::time::Instant::now();
        let out = train(&data, &rc).unwrap();
        println!(
            "--- {name}: {:.0}s  val {:.3}±{:.3}  test {:.3}±{:.3} (auroc {:.3})  epochs {:?}",
            t1.elapsed().as_secs_f64(),
            out.report.mean.val.micro_f1,
            out.report.std.val.micro_f1,
            out.report.mean.test.micro_f1,
            out.report.std.test.micro_f1,
            out.report.mean.test.auroc,
            out.traces.iter().map(|t| t.epochs_run).collect::<Vec<_>>(),
        );
        for tr in &out.traces {
            let l = &tr.epoch_losses;
            println!(
                "    seed best {} final loss {:.2} start {:.2}",
                tr.best_epoch,
                l.last().copied().unwrap_or(f64::NAN),
                l.first().copied().unwrap_or(f64::NAN)
            );
        }
    }
}
