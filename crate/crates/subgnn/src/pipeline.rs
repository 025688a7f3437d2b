//! On-disk pipeline: a fixed artifact layout under one output directory,
//! content-hash bookkeeping, and one function per CLI stage.
//!
//! Every stage verifies the artifacts it consumes before running: the file
//! on disk must hash to what its producing stage recorded, and the producer
//! chain must be internally consistent (a cache built from regenerated
//! pools is refused until `precompute` reruns). The manifest stores paths
//! relative to the output directory, so replaying a pipeline into a fresh
//! directory reproduces every artifact byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::anchors::{build_pools, load_pools, save_pools, AnchorPools, PoolConfig};
use crate::model::register_model;
use crate::nn::ParamStore;
use crate::pretrain::{
    load_embeddings, pretrain_link_prediction, save_embeddings_binary, validate_embeddings,
    EmbeddingTable, PretrainConfig,
};
use crate::rng::{stream, tag};
use crate::similarity::{precompute, DtwNormalization, SimilarityCache};
use crate::synth::{load_dataset, make_dataset, save_dataset, Dataset, Split, SynthConfig};
use crate::train::{
    ablate, evaluate, train, AblationTable, MetricPair, RunConfig, RunReport, TrainData,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
#[error("{stage}: {msg}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub msg: String,
}

pub type StageResult<T> = Result<T, PipelineError>;

fn fail<T>(stage: &'static str, msg: impl Into<String>) -> StageResult<T> {
    Err(PipelineError {
        stage,
        msg: msg.into(),
    })
}

trait StageContext<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T, E: std::fmt::Display> StageContext<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|e| PipelineError {
            stage,
            msg: e.to_string(),
        })
    }
}

/// Artifact names; each maps to a fixed location under the output dir.
pub const DATASET: &str = "dataset";
pub const EMBEDDINGS: &str = "embeddings";
pub const POOLS: &str = "pools";
pub const CACHE: &str = "cache";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub dataset_dir: String,
    pub embeddings_path: String,
    pub pools_path: String,
    pub cache_path: String,
    pub checkpoints_dir: String,
    pub reports_dir: String,
    pub master_seed: u64,
    pub tool_version: String,
    /// Content hash of each artifact, recorded by its producing stage.
    #[serde(default)]
    pub hashes: BTreeMap<String, String>,
    /// Stage that produced each artifact.
    #[serde(default)]
    pub producers: BTreeMap<String, String>,
    /// Per stage, the hash of every upstream artifact it consumed.
    #[serde(default)]
    pub consumed: BTreeMap<String, BTreeMap<String, String>>,
    /// Effective config echo per stage.
    #[serde(default)]
    pub configs: BTreeMap<String, serde_json::Value>,
}

impl PipelineManifest {
    pub fn new(master_seed: u64) -> PipelineManifest {
        PipelineManifest {
            dataset_dir: DATASET.into(),
            embeddings_path: "embeddings.bin".into(),
            pools_path: "pools.jsonl".into(),
            cache_path: "cache.bin".into(),
            checkpoints_dir: "checkpoints".into(),
            reports_dir: "reports".into(),
            master_seed,
            tool_version: TOOL_VERSION.into(),
            hashes: BTreeMap::new(),
            producers: BTreeMap::new(),
            consumed: BTreeMap::new(),
            configs: BTreeMap::new(),
        }
    }

    pub fn manifest_path(out: &Path) -> PathBuf {
        out.join("manifest.json")
    }

    pub fn load(out: &Path, stage: &'static str) -> StageResult<PipelineManifest> {
        let path = Self::manifest_path(out);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError {
            stage,
            msg: format!(
                "cannot read {} ({e}); run `subgnn synth` first to start a pipeline",
                path.display()
            ),
        })?;
        serde_json::from_str(&text).stage(stage)
    }

    pub fn save(&self, out: &Path, stage: &'static str) -> StageResult<()> {
        let mut text = serde_json::to_string_pretty(self).stage(stage)?;
        text.push('\n');
        fs::write(Self::manifest_path(out), text).stage(stage)
    }

    /// Absolute location of a named artifact.
    pub fn artifact_path(&self, out: &Path, name: &str) -> PathBuf {
        if let Some(rest) = name.strip_prefix("checkpoint:") {
            return out.join(&self.checkpoints_dir).join(rest);
        }
        if let Some(rest) = name.strip_prefix("report:") {
            return out.join(&self.reports_dir).join(rest);
        }
        match name {
            DATASET => out.join(&self.dataset_dir),
            EMBEDDINGS => out.join(&self.embeddings_path),
            POOLS => out.join(&self.pools_path),
            CACHE => out.join(&self.cache_path),
            other => out.join(other),
        }
    }

    fn record(
        &mut self,
        out: &Path,
        stage: &'static str,
        artifact: &str,
    ) -> StageResult<String> {
        let hash = hash_path(&self.artifact_path(out, artifact)).stage(stage)?;
        self.hashes.insert(artifact.into(), hash.clone());
        self.producers.insert(artifact.into(), stage.into());
        Ok(hash)
    }

    /// Verifies an artifact and its whole producer chain, returning the
    /// artifact's current hash for the consumer to record.
    pub fn verify(&self, out: &Path, stage: &'static str, artifact: &str) -> StageResult<String> {
        let recorded = match self.hashes.get(artifact) {
            Some(h) => h,
            None => {
                return fail(
                    stage,
                    format!(
                        "{artifact} has not been produced yet; run `subgnn {}` first",
                        default_producer(artifact)
                    ),
                )
            }
        };
        let path = self.artifact_path(out, artifact);
        let current = hash_path(&path).map_err(|e| PipelineError {
            stage,
            msg: format!(
                "{artifact} is missing or unreadable at {} ({e}); re-run `subgnn {}`",
                path.display(),
                self.producer_of(artifact)
            ),
        })?;
        if current != *recorded {
            return fail(
                stage,
                format!(
                    "{artifact} at {} was modified since `subgnn {}` produced it \
                     (hash mismatch); re-run that stage or restore the file",
                    path.display(),
                    self.producer_of(artifact)
                ),
            );
        }
        // The producer itself must have consumed artifacts that still match
        // the current records; otherwise this artifact is silently stale.
        let producer = self.producer_of(artifact);
        if let Some(upstream) = self.consumed.get(producer) {
            for (up, seen) in upstream {
                match self.hashes.get(up) {
                    Some(now) if now == seen => {}
                    _ => {
                        return fail(
                            stage,
                            format!(
                                "{artifact} is stale: it was built from a {up} that has since \
                                 been replaced; re-run `subgnn {producer}`"
                            ),
                        )
                    }
                }
                self.verify(out, stage, up)?;
            }
        }
        Ok(current)
    }

    fn producer_of(&self, artifact: &str) -> &str {
        self.producers
            .get(artifact)
            .map(String::as_str)
            .unwrap_or_else(|| default_producer(artifact))
    }
}

fn default_producer(artifact: &str) -> &'static str {
    if artifact.starts_with("checkpoint:") || artifact.starts_with("report:") {
        return "train";
    }
    match artifact {
        DATASET => "synth",
        EMBEDDINGS => "pretrain",
        POOLS => "pools",
        CACHE => "precompute",
        _ => "synth",
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Hash of a file, or of a directory as the sorted sequence of
/// (relative path, content) pairs.
pub fn hash_path(path: &Path) -> std::io::Result<String> {
    let meta = fs::metadata(path)?;
    if meta.is_file() {
        return Ok(hash_bytes(&fs::read(path)?));
    }
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in &files {
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        hasher.update(&fs::read(path.join(rel))?);
        hasher.update([0xffu8]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(hex)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("entry under root")
                .to_string_lossy()
                .into_owned();
            out.push(rel);
        }
    }
    Ok(())
}

fn config_echo<T: Serialize>(cfg: &T, stage: &'static str) -> StageResult<serde_json::Value> {
    serde_json::to_value(cfg).stage(stage)
}

/// Generates the dataset and starts (or restarts) the pipeline manifest.
pub fn stage_synth(out: &Path, cfg: &SynthConfig) -> StageResult<PathBuf> {
    const STAGE: &str = "synth";
    let dataset = make_dataset(cfg).stage(STAGE)?;
    let mut manifest = match PipelineManifest::load(out, STAGE) {
        Ok(mut m) => {
            m.master_seed = cfg.seed;
            m.tool_version = TOOL_VERSION.into();
            m
        }
        Err(_) => PipelineManifest::new(cfg.seed),
    };
    let dir = manifest.artifact_path(out, DATASET);
    fs::create_dir_all(&dir).stage(STAGE)?;
    save_dataset(&dataset, &dir).stage(STAGE)?;
    manifest.record(out, STAGE, DATASET)?;
    manifest.consumed.insert(STAGE.into(), BTreeMap::new());
    manifest
        .configs
        .insert(STAGE.into(), config_echo(cfg, STAGE)?);
    manifest.save(out, STAGE)?;
    Ok(dir)
}

/// Imports an externally built dataset directory (same on-disk format as
/// `synth`) into the pipeline, validating and normalizing it on the way in.
pub fn stage_import(out: &Path, src: &Path, seed: u64) -> StageResult<PathBuf> {
    const STAGE: &str = "synth";
    let dataset = load_dataset(src).stage(STAGE)?;
    let mut manifest = match PipelineManifest::load(out, STAGE) {
        Ok(mut m) => {
            m.master_seed = seed;
            m.tool_version = TOOL_VERSION.into();
            m
        }
        Err(_) => PipelineManifest::new(seed),
    };
    let dir = manifest.artifact_path(out, DATASET);
    fs::create_dir_all(&dir).stage(STAGE)?;
    save_dataset(&dataset, &dir).stage(STAGE)?;
    manifest.record(out, STAGE, DATASET)?;
    manifest.consumed.insert(STAGE.into(), BTreeMap::new());
    manifest.configs.insert(
        STAGE.into(),
        serde_json::json!({ "imported_from": src.display().to_string(), "seed": seed }),
    );
    manifest.save(out, STAGE)?;
    Ok(dir)
}

fn load_verified_dataset(
    out: &Path,
    manifest: &PipelineManifest,
    stage: &'static str,
    consumed: &mut BTreeMap<String, String>,
) -> StageResult<Dataset> {
    let hash = manifest.verify(out, stage, DATASET)?;
    consumed.insert(DATASET.into(), hash);
    load_dataset(&manifest.artifact_path(out, DATASET)).stage(stage)
}

/// Pretrains node embeddings on the dataset's base graph.
pub fn stage_pretrain(
    out: &Path,
    cfg: &PretrainConfig,
    seed_override: Option<u64>,
) -> StageResult<PathBuf> {
    const STAGE: &str = "pretrain";
    let mut manifest = PipelineManifest::load(out, STAGE)?;
    let mut consumed = BTreeMap::new();
    let dataset = load_verified_dataset(out, &manifest, STAGE, &mut consumed)?;
    let seed = seed_override.unwrap_or(manifest.master_seed);
    let table = pretrain_link_prediction(
        &dataset.graph,
        cfg,
        &mut stream(seed, &[tag::PRETRAIN]),
    )
    .stage(STAGE)?;
    let path = manifest.artifact_path(out, EMBEDDINGS);
    save_embeddings_binary(&table, &path).stage(STAGE)?;
    manifest.record(out, STAGE, EMBEDDINGS)?;
    manifest.consumed.insert(STAGE.into(), consumed);
    manifest
        .configs
        .insert(STAGE.into(), config_echo(&(cfg, seed), STAGE)?);
    manifest.save(out, STAGE)?;
    Ok(path)
}

/// Samples anchor pools for every subchannel.
pub fn stage_pools(
    out: &Path,
    cfg: &PoolConfig,
    seed_override: Option<u64>,
) -> StageResult<PathBuf> {
    const STAGE: &str = "pools";
    let mut manifest = PipelineManifest::load(out, STAGE)?;
    let mut consumed = BTreeMap::new();
    let dataset = load_verified_dataset(out, &manifest, STAGE, &mut consumed)?;
    let seed = seed_override.unwrap_or(manifest.master_seed);
    let pools = build_pools(
        &dataset.graph,
        &dataset.subgraphs,
        cfg,
        &mut stream(seed, &[tag::POOLS]),
    )
    .stage(STAGE)?;
    let path = manifest.artifact_path(out, POOLS);
    save_pools(&pools, &path).stage(STAGE)?;
    manifest.record(out, STAGE, POOLS)?;
    manifest.consumed.insert(STAGE.into(), consumed);
    manifest
        .configs
        .insert(STAGE.into(), config_echo(&(cfg, seed), STAGE)?);
    manifest.save(out, STAGE)?;
    Ok(path)
}

/// Precomputes the similarity cache from the dataset and pools.
pub fn stage_precompute(out: &Path, norm: DtwNormalization) -> StageResult<PathBuf> {
    const STAGE: &str = "precompute";
    let mut manifest = PipelineManifest::load(out, STAGE)?;
    let mut consumed = BTreeMap::new();
    let dataset = load_verified_dataset(out, &manifest, STAGE, &mut consumed)?;
    let pools_hash = manifest.verify(out, STAGE, POOLS)?;
    consumed.insert(POOLS.into(), pools_hash);
    let pools = load_pools(
        &manifest.artifact_path(out, POOLS),
        &dataset.graph,
        &dataset.subgraphs,
    )
    .stage(STAGE)?;
    let cache = precompute(&dataset.graph, &dataset.subgraphs, &pools, norm);
    let path = manifest.artifact_path(out, CACHE);
    cache.save(&path).stage(STAGE)?;
    manifest.record(out, STAGE, CACHE)?;
    manifest.consumed.insert(STAGE.into(), consumed);
    manifest
        .configs
        .insert(STAGE.into(), config_echo(&norm, STAGE)?);
    manifest.save(out, STAGE)?;
    Ok(path)
}

struct LoadedStack {
    dataset: Dataset,
    embeddings: EmbeddingTable,
    pools: AnchorPools,
    cache: SimilarityCache,
}

impl LoadedStack {
    fn data(&self) -> TrainData<'_> {
        TrainData {
            dataset: &self.dataset,
            pools: &self.pools,
            cache: &self.cache,
            embeddings: &self.embeddings,
        }
    }
}

fn load_training_stack(
    out: &Path,
    manifest: &PipelineManifest,
    stage: &'static str,
    consumed: &mut BTreeMap<String, String>,
) -> StageResult<LoadedStack> {
    let dataset = load_verified_dataset(out, manifest, stage, consumed)?;
    for artifact in [EMBEDDINGS, POOLS, CACHE] {
        let hash = manifest.verify(out, stage, artifact)?;
        consumed.insert(artifact.into(), hash);
    }
    let embeddings =
        load_embeddings(&manifest.artifact_path(out, EMBEDDINGS)).stage(stage)?;
    validate_embeddings(&embeddings, &dataset.graph, None).stage(stage)?;
    let pools = load_pools(
        &manifest.artifact_path(out, POOLS),
        &dataset.graph,
        &dataset.subgraphs,
    )
    .stage(stage)?;
    let cache = SimilarityCache::load(&manifest.artifact_path(out, CACHE)).stage(stage)?;
    Ok(LoadedStack {
        dataset,
        embeddings,
        pools,
        cache,
    })
}

/// Fills empty seed lists from the manifest's master seed.
fn resolve_seeds(cfg: &mut RunConfig, manifest: &PipelineManifest) {
    if cfg.seeds.is_empty() {
        cfg.seeds = vec![manifest.master_seed];
    }
}

fn write_report(path: &Path, report: &impl Serialize, stage: &'static str) -> StageResult<()> {
    let mut text = serde_json::to_string_pretty(report).stage(stage)?;
    text.push('\n');
    fs::write(path, text).stage(stage)
}

/// Trains one run and writes the checkpoint plus the report JSON.
pub fn stage_train(out: &Path, cfg: &RunConfig) -> StageResult<RunReport> {
    const STAGE: &str = "train";
    let mut manifest = PipelineManifest::load(out, STAGE)?;
    let mut consumed = BTreeMap::new();
    let stack = load_training_stack(out, &manifest, STAGE, &mut consumed)?;
    let mut cfg = cfg.clone();
    resolve_seeds(&mut cfg, &manifest);
    let output = train(&stack.data(), &cfg).stage(STAGE)?;

    fs::create_dir_all(out.join(&manifest.checkpoints_dir)).stage(STAGE)?;
    fs::create_dir_all(out.join(&manifest.reports_dir)).stage(STAGE)?;
    let ckpt = format!("checkpoint:model_{}.ckpt", cfg.channel.channels.label());
    output
        .store
        .save(&manifest.artifact_path(out, &ckpt))
        .stage(STAGE)?;
    let report_name = "report:train.json";
    write_report(
        &manifest.artifact_path(out, report_name),
        &output.report,
        STAGE,
    )?;
    manifest.record(out, STAGE, &ckpt)?;
    manifest.record(out, STAGE, report_name)?;
    manifest.consumed.insert(STAGE.into(), consumed);
    manifest
        .configs
        .insert(STAGE.into(), config_echo(&cfg, STAGE)?);
    manifest.save(out, STAGE)?;
    Ok(output.report)
}

/// Runs the four-channel ablation; arms run in parallel bounded by `jobs`.
pub fn stage_ablate(out: &Path, cfg: &RunConfig, jobs: usize) -> StageResult<AblationTable> {
    const STAGE: &str = "ablate";
    let mut manifest = PipelineManifest::load(out, STAGE)?;
    let mut consumed = BTreeMap::new();
    let stack = load_training_stack(out, &manifest, STAGE, &mut consumed)?;
    let mut cfg = cfg.clone();
    resolve_seeds(&mut cfg, &manifest);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .stage(STAGE)?;
    let runs = pool.install(|| ablate(&stack.data(), &cfg)).stage(STAGE)?;
    let table = AblationTable::from_runs(&runs);

    fs::create_dir_all(out.join(&manifest.checkpoints_dir)).stage(STAGE)?;
    fs::create_dir_all(out.join(&manifest.reports_dir)).stage(STAGE)?;
    let mut produced = Vec::new();
    for run in &runs {
        let ckpt = format!("checkpoint:arm_{}.ckpt", run.label);
        run.output
            .store
            .save(&manifest.artifact_path(out, &ckpt))
            .stage(STAGE)?;
        produced.push(ckpt);
    }
    write_report(
        &manifest.artifact_path(out, "report:ablation.json"),
        &table,
        STAGE,
    )?;
    fs::write(
        manifest.artifact_path(out, "report:ablation.txt"),
        table.to_text(),
    )
    .stage(STAGE)?;
    fs::write(
        manifest.artifact_path(out, "report:ablation.csv"),
        table.to_csv(),
    )
    .stage(STAGE)?;
    produced.extend([
        "report:ablation.json".to_string(),
        "report:ablation.txt".to_string(),
        "report:ablation.csv".to_string(),
    ]);
    for name in &produced {
        manifest.record(out, STAGE, name)?;
    }
    manifest.consumed.insert(STAGE.into(), consumed);
    manifest
        .configs
        .insert(STAGE.into(), config_echo(&(&cfg, jobs), STAGE)?);
    manifest.save(out, STAGE)?;
    Ok(table)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: RunConfig,
    pub split: String,
    pub checkpoint: Option<String>,
    pub seed: u64,
    pub metrics: MetricPair,
}

/// Evaluates a checkpoint (or a freshly initialized model when `checkpoint`
/// is None) on one split.
pub fn stage_eval(
    out: &Path,
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    split: Split,
    seed_override: Option<u64>,
) -> StageResult<EvalReport> {
    const STAGE: &str = "eval";
    let mut manifest = PipelineManifest::load(out, STAGE)?;
    let mut consumed = BTreeMap::new();
    let stack = load_training_stack(out, &manifest, STAGE, &mut consumed)?;
    let mut cfg = cfg.clone();
    resolve_seeds(&mut cfg, &manifest);
    let seed = seed_override.unwrap_or(manifest.master_seed);

    let store = match checkpoint {
        Some(path) => {
            // Checkpoints inside the pipeline dir are hash-verified like any
            // other artifact; external paths are loaded as-is.
            if let Ok(rel) = path.strip_prefix(out.join(&manifest.checkpoints_dir)) {
                let name = format!("checkpoint:{}", rel.display());
                let hash = manifest.verify(out, STAGE, &name)?;
                consumed.insert(name, hash);
            }
            ParamStore::load(path).stage(STAGE)?
        }
        None => {
            let mut store = ParamStore::new(seed);
            register_model(
                &mut store,
                &cfg.channel,
                stack.embeddings.dim,
                stack.pools.pool_size,
                stack.dataset.label_names.len(),
            );
            store
        }
    };

    let metrics = evaluate(&stack.data(), &cfg, &store, seed, split).stage(STAGE)?;
    let report = EvalReport {
        config: cfg,
        split: split.as_str().into(),
        checkpoint: checkpoint.map(|p| p.display().to_string()),
        seed,
        metrics,
    };
    fs::create_dir_all(out.join(&manifest.reports_dir)).stage(STAGE)?;
    let name = format!("report:eval_{}.json", split.as_str());
    write_report(&manifest.artifact_path(out, &name), &report, STAGE)?;
    manifest.record(out, STAGE, &name)?;
    manifest.consumed.insert(STAGE.into(), consumed);
    manifest
        .configs
        .insert(STAGE.into(), config_echo(&report.config, STAGE)?);
    manifest.save(out, STAGE)?;
    Ok(report)
}

/// Renders every report in the reports directory into one comparison table.
pub fn stage_report(out: &Path) -> StageResult<String> {
    const STAGE: &str = "report";
    let manifest = PipelineManifest::load(out, STAGE)?;
    let dir = out.join(&manifest.reports_dir);
    let mut lines = String::new();
    lines.push_str(&format!(
        "{:<24} {:>18} {:>18} {:>18} {:>18}\n",
        "run", "val micro-F1", "val AUROC", "test micro-F1", "test AUROC"
    ));
    let fmt = crate::train::format_mean_std;

    let train_path = dir.join("train.json");
    if train_path.is_file() {
        let report: RunReport =
            serde_json::from_str(&fs::read_to_string(&train_path).stage(STAGE)?).stage(STAGE)?;
        let label = format!("train[{}]", report.config.channel.channels.label());
        lines.push_str(&format!(
            "{:<24} {:>18} {:>18} {:>18} {:>18}\n",
            label,
            fmt(report.mean.val.micro_f1, report.std.val.micro_f1),
            fmt(report.mean.val.auroc, report.std.val.auroc),
            fmt(report.mean.test.micro_f1, report.std.test.micro_f1),
            fmt(report.mean.test.auroc, report.std.test.auroc),
        ));
    }
    let ablation_path = dir.join("ablation.json");
    if ablation_path.is_file() {
        let table: AblationTable =
            serde_json::from_str(&fs::read_to_string(&ablation_path).stage(STAGE)?)
                .stage(STAGE)?;
        for arm in &table.arms {
            let r = &arm.report;
            lines.push_str(&format!(
                "{:<24} {:>18} {:>18} {:>18} {:>18}\n",
                format!("ablate[{}]", arm.label),
                fmt(r.mean.val.micro_f1, r.std.val.micro_f1),
                fmt(r.mean.val.auroc, r.std.val.auroc),
                fmt(r.mean.test.micro_f1, r.std.test.micro_f1),
                fmt(r.mean.test.auroc, r.std.test.auroc),
            ));
        }
    }
    for split in ["train", "val", "test"] {
        let eval_path = dir.join(format!("eval_{split}.json"));
        if !eval_path.is_file() {
            continue;
        }
        let report: EvalReport =
            serde_json::from_str(&fs::read_to_string(&eval_path).stage(STAGE)?).stage(STAGE)?;
        let m = report.metrics;
        lines.push_str(&format!(
            "{:<24} {:>18} {:>18}\n",
            format!("eval[{split}]"),
            format!("micro-F1 {:.3}", m.micro_f1),
            format!("AUROC {:.3}", m.auroc),
        ));
    }
    if lines.lines().count() <= 1 {
        return fail(
            STAGE,
            format!(
                "no reports found under {}; run `subgnn train`, `subgnn ablate`, \
                 or `subgnn eval` first",
                dir.display()
            ),
        );
    }
    fs::create_dir_all(&dir).stage(STAGE)?;
    fs::write(dir.join("report.txt"), &lines).stage(STAGE)?;
    Ok(lines)
}
