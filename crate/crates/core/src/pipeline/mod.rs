//! Manifest-gated stages over a run directory.
//!
//! ```text
//! <run>/env/          generated apps (graph, states, rasters)
//! <run>/raw/          explorer shards
//! <run>/structural/   structural survivors + cluster map
//! <run>/visual/       visual survivors + cluster map + static drops
//! <run>/semantic/     semantic survivors, verdicts, quarantine
//! <run>/synth/        annotations and training samples
//! <run>/mix/          mixed corpus
//! <run>/evalset/      generalization items and action records
//! <run>/eval/         metrics and per-record scores
//! <run>/report/       funnel
//! ```
//!
//! Every stage writes `manifest.json` last. A stage refuses to start unless
//! each upstream manifest exists, its files match their digests, and its own
//! recorded inputs still match the manifests on disk.

pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{convert_coords, CoordSpace};
use crate::corpus::{self, placeholder_pool, CorpusRecord, FunnelReport, MixSpec, Source, PLACEHOLDER_POOL_VERSION};
use crate::dedup::structural::dedup_structural;
use crate::dedup::visual::dedup_visual;
use crate::dedup::ClusterRecord;
use crate::env::io::{read_graph, write_graph};
use crate::env::{generate_environment, EnvGraph, GraphSet};
use crate::eval::{self, EvalRecord};
use crate::explore::{run_fleet, FleetSpec, RawCorpus, Transition};
use crate::hashing::{derive_seed, hash_strs, sha256_hex};
use crate::par::Executor;
use crate::semantic::{filter_semantic, RuleVerifier, Verdict};
use crate::shards::{read_shard, verify_shard, ShardEntry};
use crate::synth::generalize::{build_generalization_items, candidate_paths, GeneralizationItem, Level, ProbeTask};
use crate::synth::judge::JudgeKind;
use crate::synth::{emit_samples, synthesize_annotations, Annotator, GroundedAnnotation, TemplateAnnotator, TrainingSample};

pub use config::{Mode, PipelineConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("stage {needed} has not been run (no manifest at {path})")]
    MissingManifest { needed: Stage, path: PathBuf },
    #[error("integrity check failed for {stage}: {detail}")]
    Integrity { stage: Stage, detail: String },
    #[error("{stage} failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("remote endpoint: {0}")]
    Remote(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit status for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::MissingManifest { .. } => 3,
            PipelineError::Integrity { .. } => 4,
            PipelineError::Stage { .. } => 5,
            PipelineError::Remote(_) => 6,
            PipelineError::Io { .. } => 7,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::MissingManifest { .. } => "missing-manifest",
            PipelineError::Integrity { .. } => "integrity",
            PipelineError::Stage { .. } => "stage",
            PipelineError::Remote(_) => "remote",
            PipelineError::Io { .. } => "io",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenEnv,
    Explore,
    DedupStruct,
    DedupVisual,
    FilterSemantic,
    Synth,
    Mix,
    GenEvalSet,
    Eval,
    Report,
}

impl Stage {
    /// Execution order of `run`.
    pub const ALL: [Stage; 10] = [
        Stage::GenEnv,
        Stage::Explore,
        Stage::DedupStruct,
        Stage::DedupVisual,
        Stage::FilterSemantic,
        Stage::Synth,
        Stage::Mix,
        Stage::GenEvalSet,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenEnv => "gen-env",
            Stage::Explore => "explore",
            Stage::DedupStruct => "dedup-struct",
            Stage::DedupVisual => "dedup-visual",
            Stage::FilterSemantic => "filter-semantic",
            Stage::Synth => "synth",
            Stage::Mix => "mix",
            Stage::GenEvalSet => "gen-eval-set",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }

    pub fn dir(self) -> &'static str {
        match self {
            Stage::GenEnv => "env",
            Stage::Explore => "raw",
            Stage::DedupStruct => "structural",
            Stage::DedupVisual => "visual",
            Stage::FilterSemantic => "semantic",
            Stage::Synth => "synth",
            Stage::Mix => "mix",
            Stage::GenEvalSet => "evalset",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }

    pub fn inputs(self) -> &'static [Stage] {
        match self {
            Stage::GenEnv => &[],
            Stage::Explore => &[Stage::GenEnv],
            Stage::DedupStruct => &[Stage::GenEnv, Stage::Explore],
            Stage::DedupVisual => &[Stage::GenEnv, Stage::DedupStruct],
            Stage::FilterSemantic => &[Stage::GenEnv, Stage::DedupVisual],
            Stage::Synth => &[Stage::GenEnv, Stage::FilterSemantic],
            Stage::Mix => &[Stage::Synth],
            Stage::GenEvalSet => &[Stage::GenEnv],
            Stage::Eval => &[Stage::GenEvalSet],
            Stage::Report => &[
                Stage::Explore,
                Stage::DedupStruct,
                Stage::DedupVisual,
                Stage::FilterSemantic,
                Stage::Synth,
            ],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: Stage,
    pub config_sha256: String,
    pub config: serde_json::Value,
    /// Upstream stage → SHA-256 of its manifest file.
    pub inputs: BTreeMap<Stage, String>,
    /// Files under the stage directory with their digests.
    pub files: Vec<ShardEntry>,
    pub counts: BTreeMap<String, u64>,
    /// Reason → number of items dropped at this stage.
    pub rejections: BTreeMap<String, u64>,
    pub notes: BTreeMap<String, String>,
}

impl StageManifest {
    pub fn files_under<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a ShardEntry> + 'a {
        self.files.iter().filter(move |e| e.file.starts_with(prefix))
    }

    pub fn count(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }
}

/// Optional external inputs of the eval stage.
#[derive(Clone, Debug, Default)]
pub struct EvalInputs {
    /// JSONL of `{item_id, prediction_text}`; a seeded baseline is used when absent.
    pub predictions: Option<PathBuf>,
    /// JSONL of `{item_id, verdict_text}` for generalization items.
    pub judgments: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub item_id: String,
    pub prediction_text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentLine {
    pub item_id: String,
    pub verdict_text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub actions: eval::Metrics,
    /// `"<level>/<task>"` → mean judge score, when judgments were supplied.
    pub judged: BTreeMap<String, f64>,
    pub predictions_source: String,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    root: PathBuf,
    exec: Executor,
    eval_inputs: EvalInputs,
}

type StageResult = Result<StageOutput, PipelineError>;

#[derive(Default)]
struct StageOutput {
    files: Vec<ShardEntry>,
    counts: BTreeMap<String, u64>,
    rejections: BTreeMap<String, u64>,
    notes: BTreeMap<String, String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn prefixed(prefix: &str, entries: Vec<ShardEntry>) -> Vec<ShardEntry> {
    entries
        .into_iter()
        .map(|mut e| {
            e.file = format!("{prefix}/{}", e.file);
            e
        })
        .collect()
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let root = cfg.out.clone();
        let exec = Executor::new(cfg.workers);
        Ok(Self { cfg, root, exec, eval_inputs: EvalInputs::default() })
    }

    pub fn with_eval_inputs(mut self, inputs: EvalInputs) -> Self {
        self.eval_inputs = inputs;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.dir())
    }

    pub fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.stage_dir(stage).join("manifest.json")
    }

    fn stage_err(stage: Stage) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
        move |e| PipelineError::Stage { stage, message: e.to_string() }
    }

    /// Reads a manifest without checking file digests.
    pub fn read_manifest(&self, stage: Stage) -> Result<StageManifest, PipelineError> {
        let path = self.manifest_path(stage);
        let text = std::fs::read_to_string(&path).map_err(|_| PipelineError::MissingManifest { needed: stage, path: path.clone() })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Integrity { stage, detail: format!("manifest: {e}") })
    }

    fn manifest_digest(&self, stage: Stage) -> Result<String, PipelineError> {
        let path = self.manifest_path(stage);
        let bytes = std::fs::read(&path).map_err(|_| PipelineError::MissingManifest { needed: stage, path: path.clone() })?;
        Ok(sha256_hex(&bytes))
    }

    /// Loads `stage`'s manifest and checks every file digest and every
    /// recorded upstream manifest digest.
    pub fn verify(&self, stage: Stage) -> Result<StageManifest, PipelineError> {
        let m = self.read_manifest(stage)?;
        let dir = self.stage_dir(stage);
        self.exec
            .try_map(&m.files, |e| verify_shard(&dir, e).map(|_| ()))
            .map_err(|e| PipelineError::Integrity { stage, detail: e.to_string() })?;
        for (up, digest) in &m.inputs {
            let now = self.manifest_digest(*up)?;
            if &now != digest {
                return Err(PipelineError::Integrity {
                    stage,
                    detail: format!("upstream {up} changed since this stage ran; re-run {stage}"),
                });
            }
        }
        Ok(m)
    }

    fn read_set<T: DeserializeOwned + Send>(&self, stage: Stage, m: &StageManifest, prefix: &str) -> Result<Vec<T>, PipelineError> {
        let dir = self.stage_dir(stage);
        let prefix = format!("{prefix}/");
        let entries: Vec<ShardEntry> = m.files_under(&prefix).cloned().collect();
        let parts = self
            .exec
            .try_map(&entries, |e| read_shard::<T>(&dir, e))
            .map_err(|e| PipelineError::Integrity { stage, detail: e.to_string() })?;
        Ok(parts.into_iter().flatten().collect())
    }

    fn write_set<T: Serialize + Sync>(&self, stage: Stage, prefix: &str, records: &[T]) -> Result<Vec<ShardEntry>, PipelineError> {
        let dir = self.stage_dir(stage).join(prefix);
        let entries = corpus::write_shards(&dir, records, self.cfg.shard_size, &self.exec).map_err(|e| Self::stage_err(stage)(&e))?;
        Ok(prefixed(prefix, entries))
    }

    fn write_single<T: Serialize>(&self, stage: Stage, file: &str, records: &[T]) -> Result<ShardEntry, PipelineError> {
        crate::shards::write_shard(&self.stage_dir(stage), file, records).map_err(|e| Self::stage_err(stage)(&e))
    }

    fn write_json<T: Serialize>(&self, stage: Stage, file: &str, value: &T) -> Result<ShardEntry, PipelineError> {
        let path = self.stage_dir(stage).join(file);
        let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
        std::fs::write(&path, &text).map_err(io_err(&path))?;
        Ok(ShardEntry { file: file.to_string(), records: 1, sha256: sha256_hex(text.as_bytes()) })
    }

    fn load_graphs(&self) -> Result<GraphSet, PipelineError> {
        let m = self.verify(Stage::GenEnv)?;
        let dir = self.stage_dir(Stage::GenEnv);
        let apps: Vec<String> = m
            .files
            .iter()
            .filter_map(|e| e.file.strip_suffix("/graph.jsonl").map(str::to_string))
            .collect();
        let graphs = self
            .exec
            .try_map(&apps, |a| read_graph(&dir.join(a)))
            .map_err(|e| PipelineError::Integrity { stage: Stage::GenEnv, detail: e.to_string() })?;
        Ok(GraphSet::new(graphs))
    }

    /// Runs one stage after checking its inputs; returns its manifest.
    pub fn run_stage(&self, stage: Stage) -> Result<StageManifest, PipelineError> {
        let mut inputs = BTreeMap::new();
        for &up in stage.inputs() {
            self.verify(up)?;
            inputs.insert(up, self.manifest_digest(up)?);
        }
        let dir = self.stage_dir(stage);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let t0 = std::time::Instant::now();
        let out = match stage {
            Stage::GenEnv => self.gen_env(),
            Stage::Explore => self.explore(),
            Stage::DedupStruct => self.dedup_struct(),
            Stage::DedupVisual => self.dedup_visual(),
            Stage::FilterSemantic => self.filter_semantic(),
            Stage::Synth => self.synth(),
            Stage::Mix => self.mix(),
            Stage::GenEvalSet => self.gen_eval_set(),
            Stage::Eval => self.eval(),
            Stage::Report => self.report(),
        }?;
        let manifest = StageManifest {
            stage,
            config_sha256: self.cfg.snapshot_sha256(),
            config: self.cfg.snapshot(),
            inputs,
            files: out.files,
            counts: out.counts,
            rejections: out.rejections,
            notes: out.notes,
        };
        let path = self.manifest_path(stage);
        let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
        std::fs::write(&path, text).map_err(io_err(&path))?;
        tracing::info!(stage = %stage, elapsed_ms = t0.elapsed().as_millis() as u64, "stage complete");
        Ok(manifest)
    }

    /// Runs every stage in order.
    pub fn run_all(&self) -> Result<Vec<StageManifest>, PipelineError> {
        Stage::ALL.into_iter().map(|s| self.run_stage(s)).collect()
    }

    fn gen_env(&self) -> StageResult {
        let stage = Stage::GenEnv;
        let graphs = generate_environment(derive_seed(self.cfg.seed, hash_strs(&["env"])), &self.cfg.env, &self.exec)
            .map_err(|e| Self::stage_err(stage)(&e))?;
        let dir = self.stage_dir(stage);
        self.exec
            .try_map(&graphs, |g| write_graph(&dir, g))
            .map_err(|e| Self::stage_err(stage)(&e))?;
        let mut rel: Vec<String> = Vec::new();
        for g in &graphs {
            rel.push(format!("{}/graph.jsonl", g.app_id));
            rel.push(format!("{}/states.jsonl", g.app_id));
            for s in &g.states {
                rel.push(format!("{}/rasters/{}.gray", g.app_id, s.id()));
            }
        }
        let files = self
            .exec
            .try_map(&rel, |f| {
                let bytes = std::fs::read(dir.join(f))?;
                let records = if f.ends_with(".jsonl") { bytes.iter().filter(|&&b| b == b'\n').count() } else { 0 };
                Ok::<_, std::io::Error>(ShardEntry { file: f.clone(), records, sha256: sha256_hex(&bytes) })
            })
            .map_err(io_err(&dir))?;
        let mut counts = BTreeMap::new();
        counts.insert("apps".into(), graphs.len() as u64);
        counts.insert("states".into(), graphs.iter().map(|g| g.states.len() as u64).sum());
        counts.insert("edges".into(), graphs.iter().map(|g| g.edges.len() as u64).sum());
        counts.insert(
            "flagged_edges".into(),
            graphs.iter().map(|g| g.edges.iter().filter(|e| e.flag.is_fault()).count() as u64).sum(),
        );
        Ok(StageOutput { files, counts, ..Default::default() })
    }

    fn fleet_spec(&self) -> FleetSpec {
        FleetSpec {
            n_workers: self.cfg.fleet.n_workers,
            budget_per_worker: self.cfg.fleet.budget_per_worker,
            base_seed: derive_seed(self.cfg.seed, hash_strs(&["fleet"])),
            priority_levels: self.cfg.fleet.priority_levels,
        }
    }

    fn explore(&self) -> StageResult {
        let stage = Stage::Explore;
        let graphs = self.load_graphs()?;
        let raw = run_fleet(graphs.graphs(), &self.fleet_spec(), &self.exec).map_err(|e| Self::stage_err(stage)(&e))?;
        let entries = raw.write(&self.stage_dir(stage).join("shards"), &self.exec).map_err(|e| Self::stage_err(stage)(&e))?;
        Ok(StageOutput { files: prefixed("shards", entries), counts: raw.counts(), ..Default::default() })
    }

    fn load_raw(&self) -> Result<Vec<Transition>, PipelineError> {
        let m = self.verify(Stage::Explore)?;
        let entries: Vec<ShardEntry> = m.files_under("shards/").cloned().collect();
        let raw = RawCorpus::read(&self.stage_dir(Stage::Explore), &entries, &self.exec)
            .map_err(|e| PipelineError::Integrity { stage: Stage::Explore, detail: e.to_string() })?;
        Ok(raw.to_vec())
    }

    fn load_survivors(&self, stage: Stage) -> Result<Vec<Transition>, PipelineError> {
        let m = self.verify(stage)?;
        self.read_set(stage, &m, "survivors")
    }

    fn dedup_struct(&self) -> StageResult {
        let stage = Stage::DedupStruct;
        let graphs = self.load_graphs()?;
        let raw = self.load_raw()?;
        let out = dedup_structural(&raw, &graphs, &self.cfg.structural, &self.exec).map_err(|e| Self::stage_err(stage)(&e))?;
        let mut files = self.write_set(stage, "survivors", &out.survivors)?;
        files.push(self.write_single(stage, "clusters.jsonl", &out.cluster_records())?);
        let mut counts = BTreeMap::new();
        counts.insert("input".into(), raw.len() as u64);
        counts.insert("survivors".into(), out.survivors.len() as u64);
        let mut rejections = BTreeMap::new();
        rejections.insert("near_duplicate".into(), (raw.len() - out.survivors.len()) as u64);
        Ok(StageOutput { files, counts, rejections, ..Default::default() })
    }

    fn dedup_visual(&self) -> StageResult {
        let stage = Stage::DedupVisual;
        let graphs = self.load_graphs()?;
        let input = self.load_survivors(Stage::DedupStruct)?;
        let out = dedup_visual(&input, &graphs, &self.cfg.visual, &self.exec).map_err(|e| Self::stage_err(stage)(&e))?;
        let mut files = self.write_set(stage, "survivors", &out.dedup.survivors)?;
        files.push(self.write_single(stage, "clusters.jsonl", &out.dedup.cluster_records())?);
        let statics: Vec<ClusterRecord> = out
            .static_dropped
            .iter()
            .map(|id| ClusterRecord { member_id: id.clone(), representative_id: String::new() })
            .collect();
        files.push(self.write_single(stage, "static.jsonl", &statics)?);
        let fps: Vec<BTreeMap<&str, String>> = out
            .fingerprints
            .iter()
            .map(|(id, fp)| BTreeMap::from([("transition_id", id.clone()), ("fingerprint", fp.to_hex())]))
            .collect();
        files.push(self.write_single(stage, "fingerprints.jsonl", &fps)?);
        let n_static = out.static_dropped.len() as u64;
        let n_dup = input.len() as u64 - n_static - out.dedup.survivors.len() as u64;
        let counts = BTreeMap::from([
            ("input".to_string(), input.len() as u64),
            ("survivors".to_string(), out.dedup.survivors.len() as u64),
        ]);
        let rejections = BTreeMap::from([("static".to_string(), n_static), ("near_duplicate".to_string(), n_dup)]);
        Ok(StageOutput { files, counts, rejections, ..Default::default() })
    }

    #[cfg(feature = "remote")]
    fn transport(&self, ep: &crate::remote::EndpointConfig) -> Result<crate::remote::HttpTransport, PipelineError> {
        crate::remote::HttpTransport::from_env(ep).map_err(|e| PipelineError::Remote(e.to_string()))
    }

    fn filter_semantic(&self) -> StageResult {
        let stage = Stage::FilterSemantic;
        let graphs = self.load_graphs()?;
        let input = self.load_survivors(Stage::DedupVisual)?;
        let outcome = match self.cfg.mode {
            Mode::Offline => filter_semantic(&input, &RuleVerifier::new(&graphs), &self.exec),
            Mode::Remote => {
                #[cfg(feature = "remote")]
                {
                    let ep = &self.cfg.remote.verifier;
                    let v = crate::semantic::RemoteVerifier::new(&graphs, self.transport(ep)?, ep.max_retries);
                    filter_semantic(&input, &v as &dyn crate::semantic::Verifier, &Executor::new(ep.max_in_flight.max(1)))
                }
                #[cfg(not(feature = "remote"))]
                return Err(PipelineError::Remote("built without the `remote` feature".into()));
            }
        }
        .map_err(|e| Self::stage_err(stage)(&e))?;
        let mut files = self.write_set(stage, "survivors", &outcome.survivors)?;
        files.extend(self.write_set(stage, "quarantine", &outcome.quarantine)?);
        files.push(self.write_single(stage, "verdicts.jsonl", &outcome.verdicts)?);
        let c = &outcome.counts;
        let counts = BTreeMap::from([
            ("input".to_string(), c.input),
            ("survivors".to_string(), c.accepted),
            ("rejected".to_string(), c.rejected),
            ("quarantined".to_string(), c.quarantined()),
        ]);
        let mut rejections = BTreeMap::new();
        for v in outcome.verdicts.iter().filter(|v: &&Verdict| !v.valid) {
            *rejections.entry(v.reason.clone()).or_insert(0) += 1;
        }
        Ok(StageOutput { files, counts, rejections, ..Default::default() })
    }

    fn synth(&self) -> StageResult {
        let stage = Stage::Synth;
        let graphs = self.load_graphs()?;
        let input = self.load_survivors(Stage::FilterSemantic)?;
        let outcome = match self.cfg.mode {
            Mode::Offline => synthesize_annotations(&input, &TemplateAnnotator::new(&graphs) as &dyn Annotator, &self.exec),
            Mode::Remote => {
                #[cfg(feature = "remote")]
                {
                    let ep = &self.cfg.remote.annotator;
                    let a = crate::synth::RemoteAnnotator::new(&graphs, self.transport(ep)?, ep.max_retries);
                    synthesize_annotations(&input, &a as &dyn Annotator, &Executor::new(ep.max_in_flight.max(1)))
                }
                #[cfg(not(feature = "remote"))]
                return Err(PipelineError::Remote("built without the `remote` feature".into()));
            }
        }
        .map_err(|e| Self::stage_err(stage)(&e))?;
        let kinds = self.cfg.synth.kinds.iter().copied().collect();
        let samples: Vec<TrainingSample> = self
            .exec
            .map(&outcome.annotated, |(t, a)| emit_samples(t, a, &kinds))
            .into_iter()
            .flatten()
            .collect();
        let anns: Vec<&GroundedAnnotation> = outcome.annotated.iter().map(|(_, a)| a).collect();
        let mut files = self.write_set(stage, "annotations", &anns)?;
        files.extend(self.write_set(stage, "samples", &samples)?);
        let counts = BTreeMap::from([
            ("input".to_string(), input.len() as u64),
            ("annotated".to_string(), outcome.annotated.len() as u64),
            ("skipped".to_string(), outcome.skipped.len() as u64),
            ("samples".to_string(), samples.len() as u64),
        ]);
        let mut rejections = BTreeMap::new();
        if !outcome.skipped.is_empty() {
            rejections.insert("annotation_skipped".to_string(), outcome.skipped.len() as u64);
        }
        Ok(StageOutput { files, counts, rejections, ..Default::default() })
    }

    /// Largest total whose dynamics share fits in `n` samples.
    fn mix_total(&self, n: usize) -> usize {
        let r = self.cfg.mix.ratio_dynamics;
        if r <= 0.0 {
            return 0;
        }
        let spec = |total| MixSpec { ratio_dynamics: r, ratio_general: self.cfg.mix.ratio_general, ratio_grounding: self.cfg.mix.ratio_grounding, total, seed: 0 };
        let mut total = (n as f64 / r).floor() as usize + 1;
        while total > 0 && spec(total).counts()[0] > n {
            total -= 1;
        }
        total
    }

    fn mix(&self) -> StageResult {
        let stage = Stage::Mix;
        let m = self.verify(Stage::Synth)?;
        let samples: Vec<TrainingSample> = self.read_set(Stage::Synth, &m, "samples")?;
        let spec = MixSpec {
            ratio_dynamics: self.cfg.mix.ratio_dynamics,
            ratio_general: self.cfg.mix.ratio_general,
            ratio_grounding: self.cfg.mix.ratio_grounding,
            total: self.cfg.mix.total.unwrap_or_else(|| self.mix_total(samples.len())),
            seed: derive_seed(self.cfg.seed, hash_strs(&["mix"])),
        };
        let [_, ng, nu] = spec.counts();
        let pool_seed = derive_seed(self.cfg.seed, hash_strs(&["pools"]));
        let general = placeholder_pool(Source::General, ng * 2, pool_seed);
        let grounding = placeholder_pool(Source::Grounding, nu * 2, pool_seed);
        let mixed = corpus::mix(&samples, &general, &grounding, &spec).map_err(|e| Self::stage_err(stage)(&e))?;
        let files = self.write_set(stage, "corpus", &mixed)?;
        let mut counts: BTreeMap<String, u64> =
            corpus::source_counts(&mixed).into_iter().map(|(s, n)| (s.to_string(), n as u64)).collect();
        counts.insert("total".into(), mixed.len() as u64);
        counts.insert("dynamics_pool".into(), samples.len() as u64);
        let notes = BTreeMap::from([
            ("general_pool".to_string(), format!("{PLACEHOLDER_POOL_VERSION}/general/{}", general.len())),
            ("grounding_pool".to_string(), format!("{PLACEHOLDER_POOL_VERSION}/grounding/{}", grounding.len())),
        ]);
        Ok(StageOutput { files, counts, notes, ..Default::default() })
    }

    fn gen_eval_set(&self) -> StageResult {
        let stage = Stage::GenEvalSet;
        let graphs = self.load_graphs()?;
        let seed = derive_seed(self.cfg.seed, hash_strs(&["evalset"]));
        let n = self.cfg.eval_set.items_per_app;
        let err = Self::stage_err(stage);
        let mut items: Vec<GeneralizationItem> = Vec::new();
        let mut records: Vec<EvalRecord> = Vec::new();
        for g in graphs.graphs() {
            for level in [Level::L1, Level::L2] {
                for task in [ProbeTask::Forward, ProbeTask::Inverse] {
                    items.extend(build_generalization_items(g, level, task, n, seed).map_err(|e| err(&e))?);
                }
            }
            records.extend(self.action_records(g, seed).map_err(|e| err(&e))?);
        }
        let files = vec![
            self.write_single(stage, "items.jsonl", &items)?,
            self.write_single(stage, "actions.jsonl", &records)?,
        ];
        let counts = BTreeMap::from([
            ("items".to_string(), items.len() as u64),
            ("action_records".to_string(), records.len() as u64),
        ]);
        Ok(StageOutput { files, counts, ..Default::default() })
    }

    /// Action-prediction records drawn from valid edges, ground truth in the
    /// configured coordinate space, predictions empty.
    fn action_records(&self, g: &EnvGraph, seed: u64) -> Result<Vec<EvalRecord>, crate::synth::SynthError> {
        use rand::seq::index::sample;
        let paths = candidate_paths(g, Level::L1);
        let n = self.cfg.eval_set.actions_per_app.min(paths.len());
        let mut rng = crate::hashing::rng_for(seed, hash_strs(&["actions", &g.app_id]));
        let mut idx = sample(&mut rng, paths.len(), n).into_vec();
        idx.sort_unstable();
        let space = self.cfg.eval_set.coord_space;
        idx.into_iter()
            .enumerate()
            .map(|(k, p)| {
                let edge = &g.edges[paths[p][0]];
                let node = g.state(edge.from)?.node(&edge.target_node).map(|n| n.bounds);
                let gt_action = convert_coords(&edge.action, CoordSpace::Absolute, space, g.screen).expect("non-zero screen");
                Ok(EvalRecord {
                    item_id: format!("{}-act-{k:05}", g.app_id),
                    gt_action,
                    gt_target_node: node,
                    gt_state: edge.from,
                    prediction_text: String::new(),
                    coord_space: space,
                    screen: g.screen,
                })
            })
            .collect()
    }

    fn eval(&self) -> StageResult {
        let stage = Stage::Eval;
        let m = self.verify(Stage::GenEvalSet)?;
        let dir = self.stage_dir(Stage::GenEvalSet);
        let find = |f: &str| m.files.iter().find(|e| e.file == f).cloned();
        let integrity = |d: String| PipelineError::Integrity { stage: Stage::GenEvalSet, detail: d };
        let entry = find("actions.jsonl").ok_or_else(|| integrity("actions.jsonl missing".into()))?;
        let mut records: Vec<EvalRecord> = read_shard(&dir, &entry).map_err(|e| integrity(e.to_string()))?;
        let items_entry = find("items.jsonl").ok_or_else(|| integrity("items.jsonl missing".into()))?;
        let items: Vec<GeneralizationItem> = read_shard(&dir, &items_entry).map_err(|e| integrity(e.to_string()))?;

        let source = match &self.eval_inputs.predictions {
            Some(path) => {
                let lines: Vec<PredictionLine> = read_jsonl_file(path)?;
                let by_id: BTreeMap<&str, &str> = lines.iter().map(|l| (l.item_id.as_str(), l.prediction_text.as_str())).collect();
                for r in &mut records {
                    r.prediction_text = by_id.get(r.item_id.as_str()).copied().unwrap_or_default().to_string();
                }
                format!("file:{}", sha256_hex(&std::fs::read(path).map_err(io_err(path))?))
            }
            None => {
                let seed = derive_seed(self.cfg.seed, hash_strs(&["baseline"]));
                for r in &mut records {
                    r.prediction_text = baseline_prediction(r, seed);
                }
                "baseline".to_string()
            }
        };
        let (metrics, scores) = eval::evaluate(&records, &self.cfg.scoring, &self.exec).map_err(|e| Self::stage_err(stage)(&e))?;

        let mut judged = BTreeMap::new();
        if let Some(path) = &self.eval_inputs.judgments {
            let lines: Vec<JudgmentLine> = read_jsonl_file(path)?;
            let by_id: BTreeMap<&str, &str> = lines.iter().map(|l| (l.item_id.as_str(), l.verdict_text.as_str())).collect();
            let mut groups: BTreeMap<String, (JudgeKind, Vec<&str>)> = BTreeMap::new();
            for it in &items {
                if let Some(v) = by_id.get(it.item_id.as_str()) {
                    let kind = match it.task {
                        ProbeTask::Forward => JudgeKind::Forward,
                        ProbeTask::Inverse => JudgeKind::Inverse,
                    };
                    groups.entry(format!("{}/{}", it.level, it.task.as_str())).or_insert((kind, Vec::new())).1.push(v);
                }
            }
            for (k, (kind, vs)) in groups {
                let mean = eval::aggregate_judged(&vs, kind).map_err(|e| Self::stage_err(stage)(&format!("{k}: {e}")))?;
                judged.insert(k, mean);
            }
        }
        let counts = BTreeMap::from([
            ("records".to_string(), metrics.n),
            ("em_hits".to_string(), scores.iter().filter(|s| s.em).count() as u64),
            ("tm_hits".to_string(), scores.iter().filter(|s| s.tm).count() as u64),
            ("parse_failures".to_string(), scores.iter().filter(|s| s.parse_error.is_some()).count() as u64),
        ]);
        let report = EvalReport { actions: metrics, judged, predictions_source: source };
        let files = vec![
            self.write_json(stage, "metrics.json", &report)?,
            self.write_single(stage, "scores.jsonl", &scores)?,
        ];
        Ok(StageOutput { files, counts, ..Default::default() })
    }

    /// Funnel from the stage manifests.
    pub fn funnel(&self) -> Result<FunnelReport, PipelineError> {
        let raw = self.read_manifest(Stage::Explore)?;
        let s = self.read_manifest(Stage::DedupStruct)?;
        let v = self.read_manifest(Stage::DedupVisual)?;
        let sem = self.read_manifest(Stage::FilterSemantic)?;
        let syn = self.read_manifest(Stage::Synth)?;
        let rejections = [(Stage::DedupStruct, &s), (Stage::DedupVisual, &v), (Stage::FilterSemantic, &sem), (Stage::Synth, &syn)]
            .into_iter()
            .filter(|(_, m)| !m.rejections.is_empty())
            .map(|(st, m)| (st.name().to_string(), m.rejections.clone()))
            .collect();
        FunnelReport::new(
            [raw.count("raw"), s.count("survivors"), v.count("survivors"), sem.count("survivors")],
            syn.count("samples"),
            rejections,
        )
        .map_err(|e| Self::stage_err(Stage::Report)(&e))
    }

    fn report(&self) -> StageResult {
        let stage = Stage::Report;
        let funnel = self.funnel()?;
        let table_path = self.stage_dir(stage).join("funnel.txt");
        let table = funnel.to_table();
        std::fs::write(&table_path, &table).map_err(io_err(&table_path))?;
        let files = vec![
            self.write_json(stage, "funnel.json", &funnel)?,
            ShardEntry { file: "funnel.txt".into(), records: table.lines().count(), sha256: sha256_hex(table.as_bytes()) },
        ];
        let counts = funnel.stages().iter().map(|(k, n)| (k.to_string(), *n)).collect();
        Ok(StageOutput { files, counts, ..Default::default() })
    }

    /// Dynamics samples in the mixed corpus.
    pub fn mixed_corpus(&self) -> Result<Vec<CorpusRecord>, PipelineError> {
        let m = self.verify(Stage::Mix)?;
        self.read_set(Stage::Mix, &m, "corpus")
    }

    pub fn samples(&self) -> Result<Vec<TrainingSample>, PipelineError> {
        let m = self.verify(Stage::Synth)?;
        self.read_set(Stage::Synth, &m, "samples")
    }

    pub fn semantic_survivors(&self) -> Result<Vec<Transition>, PipelineError> {
        self.load_survivors(Stage::FilterSemantic)
    }

    pub fn graphs(&self) -> Result<GraphSet, PipelineError> {
        self.load_graphs()
    }

    pub fn eval_items(&self) -> Result<Vec<GeneralizationItem>, PipelineError> {
        let m = self.verify(Stage::GenEvalSet)?;
        let e = m.files.iter().find(|e| e.file == "items.jsonl").cloned().ok_or_else(|| PipelineError::Integrity {
            stage: Stage::GenEvalSet,
            detail: "items.jsonl missing".into(),
        })?;
        read_shard(&self.stage_dir(Stage::GenEvalSet), &e)
            .map_err(|e| PipelineError::Integrity { stage: Stage::GenEvalSet, detail: e.to_string() })
    }
}

fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    crate::jsonl::from_jsonl(&text).map_err(|(line, e)| PipelineError::Config(format!("{} line {line}: {e}", path.display())))
}

/// Seeded stand-in for a model: mostly correct answers, some wrong
/// locations, wrong kinds and malformed replies; half wrapped in the
/// reasoning format.
pub fn baseline_prediction(r: &EvalRecord, seed: u64) -> String {
    let h = crate::hashing::hash_u64s(&[seed, hash_strs(&[&r.item_id])]);
    let (xmax, ymax) = r.coord_space.limits(r.screen);
    let answer = match h % 100 {
        0..=54 => r.gt_action.to_string(),
        55..=74 => match r.gt_action.point() {
            Some((x, y)) => r.gt_action.with_point(xmax - x, ymax - y).to_string(),
            None => r.gt_action.to_string(),
        },
        75..=89 => match r.gt_action.kind() {
            crate::action::ActionKind::Wait => "finish".to_string(),
            _ => "wait".to_string(),
        },
        _ => "tap the button".to_string(),
    };
    if (h >> 32) % 2 == 0 {
        format!("<think>Looking at the screen.</think><sub_goal>Proceed.</sub_goal><answer>{answer}</answer>")
    } else {
        answer
    }
}
