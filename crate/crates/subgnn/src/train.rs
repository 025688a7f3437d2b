//! Training loop, evaluation, and the channel-ablation harness.
//!
//! One run trains each configured seed independently: mini-batch gradient
//! descent over the train split, anchors redrawn per epoch, early stopping
//! on validation micro-F1, and the best-validation checkpoint restored
//! before test evaluation. Everything downstream of the seed is
//! deterministic, so identical configs produce identical reports.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchors::{AnchorPools, ComponentIndex};
use crate::metrics::{
    auroc, micro_f1, multiclass_decisions, multilabel_decisions, one_hot, AurocAverage,
    MetricsError,
};
use crate::model::{
    classify, draw_epoch_anchors, forward, node_avg_baseline, register_classifier,
    register_model, ChannelConfig, ChannelSet, EpochAnchors, ForwardCtx, StructMemo,
};
use crate::nn::{Adam, NnError, ParamStore, Tape};
use crate::pretrain::EmbeddingTable;
use crate::rng::{stream, tag};
use crate::similarity::SimilarityCache;
use crate::synth::{Dataset, Split};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid run config: {0}")]
    BadConfig(String),
    #[error("{split} split is empty")]
    EmptySplit { split: &'static str },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    MulticlassCe,
    MultilabelBce,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub channel: ChannelConfig,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_clip: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub loss: LossKind,
    /// Multilabel decision threshold on sigmoid outputs.
    pub threshold: f64,
    pub auroc_average: AurocAverage,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            channel: ChannelConfig::default(),
            batch_size: 32,
            lr: 1e-3,
            grad_clip: 0.25,
            epochs: 80,
            patience: 15,
            seeds: vec![0],
            loss: LossKind::MulticlassCe,
            threshold: 0.5,
            auroc_average: AurocAverage::Macro,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, pool_size: usize) -> Result<(), TrainError> {
        self.channel
            .validate(pool_size)
            .map_err(TrainError::BadConfig)?;
        if !(16..=128).contains(&self.batch_size) {
            return Err(TrainError::BadConfig(format!(
                "batch_size = {} outside [16, 128]",
                self.batch_size
            )));
        }
        if !(1e-4..=1e-3).contains(&self.lr) {
            return Err(TrainError::BadConfig(format!(
                "lr = {} outside [1e-4, 1e-3]",
                self.lr
            )));
        }
        if !(0.0..=0.5).contains(&self.grad_clip) {
            return Err(TrainError::BadConfig(format!(
                "grad_clip = {} outside [0, 0.5]",
                self.grad_clip
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(TrainError::BadConfig("at least one seed required".into()));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(TrainError::BadConfig(format!(
                "threshold = {} outside [0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Everything a run consumes; shared read-only across seeds and arms.
pub struct TrainData<'a> {
    pub dataset: &'a Dataset,
    pub pools: &'a AnchorPools,
    pub cache: &'a SimilarityCache,
    pub embeddings: &'a EmbeddingTable,
}

impl<'a> TrainData<'a> {
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.dataset
            .splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    fn num_classes(&self) -> usize {
        self.dataset.label_names.len()
    }

    /// Truth rows in decision space: one-hot for multiclass, multi-hot for
    /// multilabel.
    fn truth_rows(&self, indices: &[usize], loss: LossKind) -> Vec<Vec<bool>> {
        let k = self.num_classes();
        match loss {
            LossKind::MulticlassCe => {
                let labels: Vec<usize> =
                    indices.iter().map(|&i| self.dataset.subgraphs[i].labels[0]).collect();
                one_hot(&labels, k)
            }
            LossKind::MultilabelBce => indices
                .iter()
                .map(|&i| {
                    let mut row = vec![false; k];
                    for &l in &self.dataset.subgraphs[i].labels {
                        row[l] = true;
                    }
                    row
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub micro_f1: f64,
    pub auroc: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub val: MetricPair,
    pub test: MetricPair,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSummary {
    pub val: MetricPair,
    pub test: MetricPair,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seeds: Vec<SeedReport>,
    pub mean: SplitSummary,
    pub std: SplitSummary,
    pub wall_time_s: f64,
}

impl RunReport {
    /// Population statistics over seeds; a single seed reports std 0.
    fn summarize(config: RunConfig, seeds: Vec<SeedReport>, wall_time_s: f64) -> RunReport {
        let n = seeds.len() as f64;
        let stat = |pick: &dyn Fn(&SeedReport) -> f64| {
            let mean = seeds.iter().map(|s| pick(s)).sum::<f64>() / n;
            let var = seeds.iter().map(|s| (pick(s) - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let (vf_m, vf_s) = stat(&|s| s.val.micro_f1);
        let (va_m, va_s) = stat(&|s| s.val.auroc);
        let (tf_m, tf_s) = stat(&|s| s.test.micro_f1);
        let (ta_m, ta_s) = stat(&|s| s.test.auroc);
        RunReport {
            config,
            seeds,
            mean: SplitSummary {
                val: MetricPair {
                    micro_f1: vf_m,
                    auroc: va_m,
                },
                test: MetricPair {
                    micro_f1: tf_m,
                    auroc: ta_m,
                },
            },
            std: SplitSummary {
                val: MetricPair {
                    micro_f1: vf_s,
                    auroc: va_s,
                },
                test: MetricPair {
                    micro_f1: tf_s,
                    auroc: ta_s,
                },
            },
            wall_time_s,
        }
    }
}

/// Per-seed training diagnostics, kept outside the report for tests and
/// debugging.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub seed: u64,
    /// Mean train loss per completed epoch.
    pub epoch_losses: Vec<f64>,
    /// Dataset indices of every gradient batch, in update order.
    pub batch_log: Vec<Vec<usize>>,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

pub struct TrainOutput {
    /// Best-validation checkpoint of the best-validation seed.
    pub store: ParamStore,
    pub report: RunReport,
    pub traces: Vec<TrainTrace>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Class scores for a set of subgraphs under fixed anchors, dropout off.
/// One tape serves the whole pass so structure encodings are shared.
pub fn score_split(
    data: &TrainData,
    cfg: &ChannelConfig,
    store: &ParamStore,
    index: &ComponentIndex,
    anchors: &EpochAnchors,
    indices: &[usize],
    loss: LossKind,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let ctx = ForwardCtx {
        graph: &data.dataset.graph,
        subgraphs: &data.dataset.subgraphs,
        index,
        pools: data.pools,
        cache: data.cache,
        embeddings: data.embeddings,
        cfg,
        anchors,
    };
    let mut tape = Tape::new();
    let mut memo = StructMemo::new();
    let mut dummy = stream(0, &[]);
    let mut scores = Vec::with_capacity(indices.len());
    for &i in indices {
        let out = forward(&mut tape, store, &ctx, i, &mut memo)?;
        let logits = classify(&mut tape, store, out.z_s, cfg.dropout, false, &mut dummy)?;
        let row = tape.value(logits);
        scores.push(match loss {
            LossKind::MulticlassCe => softmax(row),
            LossKind::MultilabelBce => row.iter().map(|&x| sigmoid(x)).collect(),
        });
    }
    Ok(scores)
}

fn decisions(scores: &[Vec<f64>], loss: LossKind, threshold: f64) -> Vec<Vec<bool>> {
    match loss {
        LossKind::MulticlassCe => multiclass_decisions(scores),
        LossKind::MultilabelBce => multilabel_decisions(scores, threshold),
    }
}

/// Micro-F1 and AUROC of a checkpoint on one split, under the seed's
/// evaluation anchors.
pub fn evaluate(
    data: &TrainData,
    cfg: &RunConfig,
    store: &ParamStore,
    seed: u64,
    split: Split,
) -> Result<MetricPair, TrainError> {
    let index = ComponentIndex::build(&data.dataset.subgraphs);
    let anchors = draw_epoch_anchors(
        &data.dataset.graph,
        data.pools,
        &index,
        data.dataset.subgraphs.len(),
        &cfg.channel,
        seed,
        tag::EVAL_EPOCH,
    );
    let indices = data.split_indices(split);
    if indices.is_empty() {
        return Err(TrainError::EmptySplit {
            split: split.as_str(),
        });
    }
    let scores = score_split(data, &cfg.channel, store, &index, &anchors, &indices, cfg.loss)?;
    let truth = data.truth_rows(&indices, cfg.loss);
    Ok(MetricPair {
        micro_f1: micro_f1(&decisions(&scores, cfg.loss, cfg.threshold), &truth)?,
        auroc: auroc(&scores, &truth, cfg.auroc_average)?,
    })
}

/// Trains one seed. Returns the best-validation checkpoint, its metrics,
/// and the trace.
pub fn train_single(
    data: &TrainData,
    cfg: &RunConfig,
    seed: u64,
) -> Result<(ParamStore, SeedReport, TrainTrace), TrainError> {
    cfg.validate(data.pools.pool_size)?;
    let dataset = data.dataset;
    let index = ComponentIndex::build(&dataset.subgraphs);
    let train_idx = data.split_indices(Split::Train);
    let val_idx = data.split_indices(Split::Val);
    let test_idx: Vec<usize> = data.split_indices(Split::Test);
    if train_idx.is_empty() {
        return Err(TrainError::EmptySplit { split: "train" });
    }
    if val_idx.is_empty() {
        return Err(TrainError::EmptySplit { split: "val" });
    }

    let mut store = ParamStore::new(seed);
    register_model(
        &mut store,
        &cfg.channel,
        data.embeddings.dim,
        data.pools.pool_size,
        data.num_classes(),
    );
    let clip = (cfg.grad_clip > 0.0).then_some(cfg.grad_clip);
    let mut adam = Adam::new(&store, cfg.lr, clip);

    let eval_anchors = draw_epoch_anchors(
        &dataset.graph,
        data.pools,
        &index,
        dataset.subgraphs.len(),
        &cfg.channel,
        seed,
        tag::EVAL_EPOCH,
    );
    let val_truth = data.truth_rows(&val_idx, cfg.loss);

    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_snapshot = store.snapshot();
    let mut best_epoch = 0;
    let mut bad_epochs = 0;
    let mut epoch_losses = Vec::new();
    let mut batch_log: Vec<Vec<usize>> = Vec::new();

    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        let anchors = draw_epoch_anchors(
            &dataset.graph,
            data.pools,
            &index,
            dataset.subgraphs.len(),
            &cfg.channel,
            seed,
            epoch as u64,
        );
        let ctx = ForwardCtx {
            graph: &dataset.graph,
            subgraphs: &dataset.subgraphs,
            index: &index,
            pools: data.pools,
            cache: data.cache,
            embeddings: data.embeddings,
            cfg: &cfg.channel,
            anchors: &anchors,
        };

        let mut order = train_idx.clone();
        order.shuffle(&mut stream(seed, &[tag::EPOCH, epoch as u64, 0]));
        let mut dropout_rng = stream(seed, &[tag::EPOCH, epoch as u64, 1]);

        let mut loss_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let mut memo = StructMemo::new();
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let out = forward(&mut tape, &store, &ctx, i, &mut memo)?;
                let logits = classify(
                    &mut tape,
                    &store,
                    out.z_s,
                    cfg.channel.dropout,
                    true,
                    &mut dropout_rng,
                )?;
                let loss = match cfg.loss {
                    LossKind::MulticlassCe => {
                        tape.softmax_cross_entropy(logits, dataset.subgraphs[i].labels[0])?
                    }
                    LossKind::MultilabelBce => {
                        let mut targets = vec![0.0; data.num_classes()];
                        for &l in &dataset.subgraphs[i].labels {
                            targets[l] = 1.0;
                        }
                        tape.sigmoid_bce(logits, &targets)?
                    }
                };
                losses.push(loss);
            }
            let total = tape.add_n(&losses)?;
            let mean = tape.scale(total, 1.0 / batch.len() as f64);
            loss_total += tape.scalar(mean) * batch.len() as f64;
            let grads = tape.backward(mean, &store);
            adam.step(&mut store, &grads)?;
            batch_log.push(batch.to_vec());
        }
        epoch_losses.push(loss_total / train_idx.len() as f64);

        let val_scores = score_split(
            data,
            &cfg.channel,
            &store,
            &index,
            &eval_anchors,
            &val_idx,
            cfg.loss,
        )?;
        let val_f1 = micro_f1(&decisions(&val_scores, cfg.loss, cfg.threshold), &val_truth)?;
        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best_snapshot = store.snapshot();
            best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.patience {
                break;
            }
        }
    }

    // Test indices must never steer training; the batch log is the record.
    for batch in &batch_log {
        for i in batch {
            assert!(
                !test_idx.contains(i),
                "test subgraph {i} appeared in a gradient batch"
            );
        }
    }

    store.restore(&best_snapshot);
    let val = evaluate(data, cfg, &store, seed, Split::Val)?;
    let test = evaluate(data, cfg, &store, seed, Split::Test)?;
    Ok((
        store,
        SeedReport { seed, val, test },
        TrainTrace {
            seed,
            epoch_losses,
            batch_log,
            best_epoch,
            epochs_run,
        },
    ))
}

/// Trains the feedforward classifier alone over mean-pooled node
/// embeddings, with the same splits, loss, seeds, and early stopping as the
/// full model. Every channel run is measured against this floor.
pub fn baseline_report(data: &TrainData, cfg: &RunConfig) -> Result<RunReport, TrainError> {
    cfg.validate(data.pools.pool_size)?;
    let start = Instant::now();
    let dataset = data.dataset;
    let features: Vec<Vec<f64>> = dataset
        .subgraphs
        .iter()
        .map(|s| node_avg_baseline(s, data.embeddings))
        .collect();
    let dim = data.embeddings.dim;
    let train_idx = data.split_indices(Split::Train);
    let val_idx = data.split_indices(Split::Val);
    if train_idx.is_empty() {
        return Err(TrainError::EmptySplit { split: "train" });
    }
    if val_idx.is_empty() {
        return Err(TrainError::EmptySplit { split: "val" });
    }

    let score = |store: &ParamStore, indices: &[usize]| -> Result<Vec<Vec<f64>>, TrainError> {
        let mut tape = Tape::new();
        let mut dummy = stream(0, &[]);
        let mut rows = Vec::with_capacity(indices.len());
        for &i in indices {
            let x = tape.constant(vec![dim], features[i].clone());
            let logits = classify(&mut tape, store, x, 0.0, false, &mut dummy)?;
            let row = tape.value(logits);
            rows.push(match cfg.loss {
                LossKind::MulticlassCe => softmax(row),
                LossKind::MultilabelBce => row.iter().map(|&x| sigmoid(x)).collect(),
            });
        }
        Ok(rows)
    };
    let metrics = |store: &ParamStore, indices: &[usize]| -> Result<MetricPair, TrainError> {
        let scores = score(store, indices)?;
        let truth = data.truth_rows(indices, cfg.loss);
        Ok(MetricPair {
            micro_f1: micro_f1(&decisions(&scores, cfg.loss, cfg.threshold), &truth)?,
            auroc: auroc(&scores, &truth, cfg.auroc_average)?,
        })
    };
    let val_truth = data.truth_rows(&val_idx, cfg.loss);

    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut store = ParamStore::new(seed);
        register_classifier(&mut store, dim, cfg.channel.ff_hidden, data.num_classes());
        let clip = (cfg.grad_clip > 0.0).then_some(cfg.grad_clip);
        let mut adam = Adam::new(&store, cfg.lr, clip);

        let mut best_f1 = f64::NEG_INFINITY;
        let mut best_snapshot = store.snapshot();
        let mut bad_epochs = 0;
        for epoch in 1..=cfg.epochs {
            let mut order = train_idx.clone();
            order.shuffle(&mut stream(seed, &[tag::EPOCH, epoch as u64, 0]));
            let mut dropout_rng = stream(seed, &[tag::EPOCH, epoch as u64, 1]);
            for batch in order.chunks(cfg.batch_size) {
                let mut tape = Tape::new();
                let mut losses = Vec::with_capacity(batch.len());
                for &i in batch {
                    let x = tape.constant(vec![dim], features[i].clone());
                    let logits = classify(
                        &mut tape,
                        &store,
                        x,
                        cfg.channel.dropout,
                        true,
                        &mut dropout_rng,
                    )?;
                    losses.push(match cfg.loss {
                        LossKind::MulticlassCe => {
                            tape.softmax_cross_entropy(logits, dataset.subgraphs[i].labels[0])?
                        }
                        LossKind::MultilabelBce => {
                            let mut targets = vec![0.0; data.num_classes()];
                            for &l in &dataset.subgraphs[i].labels {
                                targets[l] = 1.0;
                            }
                            tape.sigmoid_bce(logits, &targets)?
                        }
                    });
                }
                let total = tape.add_n(&losses)?;
                let mean = tape.scale(total, 1.0 / batch.len() as f64);
                let grads = tape.backward(mean, &store);
                adam.step(&mut store, &grads)?;
            }

            let val_scores = score(&store, &val_idx)?;
            let val_f1 = micro_f1(&decisions(&val_scores, cfg.loss, cfg.threshold), &val_truth)?;
            if val_f1 > best_f1 {
                best_f1 = val_f1;
                best_snapshot = store.snapshot();
                bad_epochs = 0;
            } else {
                bad_epochs += 1;
                if bad_epochs >= cfg.patience {
                    break;
                }
            }
        }
        store.restore(&best_snapshot);
        seeds.push(SeedReport {
            seed,
            val: metrics(&store, &val_idx)?,
            test: metrics(&store, &data.split_indices(Split::Test))?,
        });
    }
    Ok(RunReport::summarize(
        cfg.clone(),
        seeds,
        start.elapsed().as_secs_f64(),
    ))
}

/// Trains every configured seed and aggregates the report. The returned
/// checkpoint is the best-validation seed's.
pub fn train(data: &TrainData, cfg: &RunConfig) -> Result<TrainOutput, TrainError> {
    cfg.validate(data.pools.pool_size)?;
    let start = Instant::now();
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    let mut traces = Vec::with_capacity(cfg.seeds.len());
    let mut best: Option<(f64, ParamStore)> = None;
    for &seed in &cfg.seeds {
        let (store, report, trace) = train_single(data, cfg, seed)?;
        if best.as_ref().is_none_or(|(f, _)| report.val.micro_f1 > *f) {
            best = Some((report.val.micro_f1, store));
        }
        seeds.push(report);
        traces.push(trace);
    }
    let report = RunReport::summarize(cfg.clone(), seeds, start.elapsed().as_secs_f64());
    Ok(TrainOutput {
        store: best.expect("at least one seed").1,
        report,
        traces,
    })
}

/// One ablation arm's report row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmReport {
    pub label: String,
    pub report: RunReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub arms: Vec<ArmReport>,
}

/// A completed ablation arm, checkpoint included.
pub struct AblationRun {
    pub label: String,
    pub output: TrainOutput,
}

pub const ABLATION_ARMS: [ChannelSet; 4] = [
    ChannelSet {
        position: true,
        neighborhood: false,
        structure: false,
    },
    ChannelSet {
        position: false,
        neighborhood: true,
        structure: false,
    },
    ChannelSet {
        position: false,
        neighborhood: false,
        structure: true,
    },
    ChannelSet::ALL,
];

/// Runs the four channel arms with shared seeds and artifacts. Arms train
/// concurrently; each is internally single-threaded and deterministic.
pub fn ablate(data: &TrainData, base: &RunConfig) -> Result<Vec<AblationRun>, TrainError> {
    base.validate(data.pools.pool_size)?;
    let configs: Vec<RunConfig> = ABLATION_ARMS
        .iter()
        .map(|&channels| {
            let mut cfg = base.clone();
            cfg.channel.channels = channels;
            cfg
        })
        .collect();
    let results: Vec<Result<AblationRun, TrainError>> = {
        use rayon::prelude::*;
        configs
            .par_iter()
            .map(|cfg| {
                let output = train(data, cfg)?;
                Ok(AblationRun {
                    label: cfg.channel.channels.label(),
                    output,
                })
            })
            .collect()
    };
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }
    Ok(runs)
}

impl AblationTable {
    pub fn from_runs(runs: &[AblationRun]) -> AblationTable {
        AblationTable {
            arms: runs
                .iter()
                .map(|r| ArmReport {
                    label: r.label.clone(),
                    report: r.output.report.clone(),
                })
                .collect(),
        }
    }

    pub fn arm(&self, label: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.label == label)
    }

    /// Aligned-text comparison, one row per arm.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:>18} {:>18} {:>18} {:>18}\n",
            "arm", "val micro-F1", "val AUROC", "test micro-F1", "test AUROC"
        ));
        for arm in &self.arms {
            let r = &arm.report;
            out.push_str(&format!(
                "{:<6} {:>18} {:>18} {:>18} {:>18}\n",
                arm.label,
                format_mean_std(r.mean.val.micro_f1, r.std.val.micro_f1),
                format_mean_std(r.mean.val.auroc, r.std.val.auroc),
                format_mean_std(r.mean.test.micro_f1, r.std.test.micro_f1),
                format_mean_std(r.mean.test.auroc, r.std.test.auroc),
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "arm,val_micro_f1_mean,val_micro_f1_std,val_auroc_mean,val_auroc_std,\
             test_micro_f1_mean,test_micro_f1_std,test_auroc_mean,test_auroc_std\n",
        );
        for arm in &self.arms {
            let r = &arm.report;
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                arm.label,
                r.mean.val.micro_f1,
                r.std.val.micro_f1,
                r.mean.val.auroc,
                r.std.val.auroc,
                r.mean.test.micro_f1,
                r.std.test.micro_f1,
                r.mean.test.auroc,
                r.std.test.auroc,
            ));
        }
        out
    }
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3}±{std:.3}")
}
