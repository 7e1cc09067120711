//! End-to-end commands with content-addressed caching.
//!
//! Each artifact lives at `<cache>/<kind>-<hash>.<ext>` where the hash
//! covers the input file contents and only the configuration fields that
//! affect that artifact, so changing `q` reuses the similarity index. Every
//! artifact has a `<file>.manifest.json` recording its config hash and seed;
//! a manifest that disagrees with the expected hash is rejected.
//!
//! The master seed fans out to independent sub-seeds for episodes, encoder
//! initialization, validation tasks, test tasks and augmentations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{class_centroids, class_level_similarity, dump_embeddings};
use crate::diffusion::{diffusion_index, DiffusionConfig};
use crate::encoder::{encode, Checkpoint, GcnInput};
use crate::episodes::{
    generate_gumtra_episodes, generate_naq_episodes, generate_supervised_episodes, overlap_ratio,
    read_episodes, write_episodes, AugmentSpec, Episode, NaqConfig,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, sample_tasks, EvalReport, EvalTask};
use crate::graph::{generate_sbm, load_graph, write_edges, write_labels, Graph, LabelSet, SbmSpec, SplitKind};
use crate::io;
use crate::meta::{train, write_history, TrainConfig};
use crate::rng::derive_seed;
use crate::similarity::{build_index, Metric, SimilarityIndex, DEFAULT_K};

pub const CACHE_ENV: &str = "NAQ_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NaqFeat,
    NaqDiff,
    GUmtra,
    Supervised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub split: PathBuf,
}

impl DatasetPaths {
    /// Standard file names inside one directory, as written by `synth`.
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            edges: dir.join("edges.tsv"),
            features: dir.join("features.naqf"),
            labels: dir.join("labels.tsv"),
            split: dir.join("split.json"),
        }
    }
}

impl Default for DatasetPaths {
    fn default() -> Self {
        DatasetPaths::in_dir(Path::new("data"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeSettings {
    pub n_way: usize,
    /// Support shots for supervised episodes (NaQ and g-UMTRA are 1-shot).
    pub k_shot: usize,
    pub q: usize,
    pub count: usize,
    pub drop_overlap: bool,
    pub drop_edge_rate: f64,
    pub drop_feature_rate: f64,
}

impl Default for EpisodeSettings {
    fn default() -> Self {
        EpisodeSettings {
            n_way: 5,
            k_shot: 5,
            q: crate::episodes::DEFAULT_QUERIES,
            count: crate::episodes::DEFAULT_EPISODES,
            drop_overlap: false,
            drop_edge_rate: 0.2,
            drop_feature_rate: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub n_way: usize,
    pub k_shot: usize,
    pub queries: usize,
    pub test_tasks: usize,
    pub val_tasks: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            n_way: 5,
            k_shot: 1,
            queries: crate::eval::DEFAULT_EVAL_QUERIES,
            test_tasks: crate::eval::DEFAULT_TEST_TASKS,
            val_tasks: crate::eval::DEFAULT_VAL_TASKS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSettings {
    pub top: usize,
    pub tail_pct: f64,
    pub dump_embeddings: bool,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings { top: 10, tail_pct: 0.1, dump_embeddings: true }
    }
}

/// Everything a run needs. Loaded from JSON; missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetPaths,
    pub method: Method,
    /// Feature metric for `naq-feat`; ignored by `naq-diff`.
    pub metric: Metric,
    pub index_k: usize,
    /// Rows per parallel work item while building a feature index.
    pub index_batch: usize,
    pub diffusion: DiffusionConfig,
    pub episodes: EpisodeSettings,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub analysis: AnalysisSettings,
    pub synth: SbmSpec,
    pub seed: u64,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetPaths::default(),
            method: Method::NaqFeat,
            metric: Metric::Cosine,
            index_k: DEFAULT_K,
            index_batch: 256,
            diffusion: DiffusionConfig::default(),
            episodes: EpisodeSettings::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            analysis: AnalysisSettings::default(),
            synth: SbmSpec {
                n_classes: 15,
                nodes_per_class: 60,
                p_in: 0.05,
                p_out: 0.002,
                d: 100,
                feature_signal: 1.0,
                noise_sigma: 1.0,
                seed: 0,
            },
            seed: 0,
            out: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&io::read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == Method::NaqFeat && self.metric == Metric::Diffusion {
            return Err(Error::Config("naq-feat needs a feature metric (cosine, jaccard, neg_euclidean)".into()));
        }
        if self.index_k == 0 || self.index_batch == 0 {
            return Err(Error::Config("index_k and index_batch must be positive".into()));
        }
        self.diffusion.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        Ok(())
    }

    /// Directory holding cached artifacts: `NAQ_CACHE_DIR`, else
    /// `cache_dir`, else `<out>/cache`.
    pub fn resolved_cache_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(CACHE_ENV) {
            return PathBuf::from(dir);
        }
        self.cache_dir.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    /// Training configuration with the encoder seed derived from the master seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: derive_seed(self.seed, SEED_INIT), ..self.train.clone() }
    }
}

const SEED_EPISODES: u64 = 1;
const SEED_INIT: u64 = 2;
const SEED_VAL: u64 = 3;
const SEED_TEST: u64 = 4;
const SEED_AUGMENT: u64 = 5;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_json(v: &serde_json::Value) -> String {
    sha256_hex(v.to_string().as_bytes())
}

/// Where an artifact lives and whether it was reused.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: PathBuf,
    pub config_hash: String,
    pub cache_hit: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    config_hash: String,
    seed: u64,
    key: serde_json::Value,
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_manifest(path: &Path, kind: &str, config_hash: &str, seed: u64, key: &serde_json::Value) -> Result<()> {
    let m = Manifest { kind: kind.into(), config_hash: config_hash.into(), seed, key: key.clone() };
    io::write_bytes(&manifest_path(path), serde_json::to_string_pretty(&m)?.as_bytes())
}

/// Checks an existing artifact's manifest. `Ok(false)` when the artifact or
/// its manifest is missing.
fn check_manifest(path: &Path, kind: &str, config_hash: &str) -> Result<bool> {
    let mpath = manifest_path(path);
    if !path.exists() || !mpath.exists() {
        return Ok(false);
    }
    let m: Manifest = serde_json::from_str(&io::read_text(&mpath)?)?;
    if m.kind != kind || m.config_hash != config_hash {
        return Err(Error::Config(format!(
            "{} was built for config {} ({}), expected {} ({kind}); refusing to mix artifacts",
            path.display(),
            m.config_hash,
            m.kind,
            config_hash
        )));
    }
    Ok(true)
}

/// Summary written by `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub method: Method,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub homophily: f64,
    pub index_metric: Option<Metric>,
    pub top: usize,
    pub class_level_similarity: Option<f64>,
    pub tail_pct: f64,
    pub tail_class_level_similarity: Option<f64>,
    pub overlap_ratio: f64,
    pub embeddings: Option<PathBuf>,
}

/// A configured run with its dataset loaded once.
pub struct Pipeline {
    cfg: RunConfig,
    cache: PathBuf,
    graph: Graph,
    labels: LabelSet,
    dataset_hash: String,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let d = &cfg.dataset;
        let (graph, labels) = load_graph(&d.edges, &d.features, &d.labels, &d.split)?;
        let mut parts = String::new();
        for p in [&d.edges, &d.features, &d.labels, &d.split] {
            parts.push_str(&sha256_hex(&io::read_bytes(p)?));
        }
        let dataset_hash = sha256_hex(parts.as_bytes());
        let cache = cfg.resolved_cache_dir();
        Ok(Pipeline { cfg, cache, graph, labels, dataset_hash })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    fn artifact_path(&self, kind: &str, hash: &str, ext: &str) -> PathBuf {
        self.cache.join(format!("{kind}-{}.{ext}", &hash[..16]))
    }

    fn index_key(&self) -> Option<serde_json::Value> {
        match self.cfg.method {
            Method::NaqFeat => Some(json!({
                "dataset": self.dataset_hash,
                "metric": self.cfg.metric,
                "k": self.cfg.index_k,
            })),
            Method::NaqDiff => Some(json!({
                "dataset": self.dataset_hash,
                "metric": Metric::Diffusion,
                "diffusion": self.cfg.diffusion,
            })),
            Method::GUmtra | Method::Supervised => None,
        }
    }

    /// Builds or reuses the similarity index (NaQ methods only).
    pub fn index(&self) -> Result<(SimilarityIndex, Artifact)> {
        let key = self
            .index_key()
            .ok_or_else(|| Error::Config(format!("method {:?} does not use a similarity index", self.cfg.method)))?;
        let hash = hash_json(&key);
        let path = self.artifact_path("index", &hash, "naqs");
        if check_manifest(&path, "index", &hash)? {
            log::info!("cache hit: {}", path.display());
            let idx = SimilarityIndex::load(&path)?;
            return Ok((idx, Artifact { path, config_hash: hash, cache_hit: true }));
        }
        let idx = match self.cfg.method {
            Method::NaqDiff => diffusion_index(&self.graph, &self.cfg.diffusion)?,
            _ => build_index(&self.graph, self.cfg.metric, self.cfg.index_k, self.cfg.index_batch)?,
        };
        idx.save(&path)?;
        write_manifest(&path, "index", &hash, self.cfg.seed, &key)?;
        log::info!("built index {}", path.display());
        // Reload so every consumer sees cache precision.
        Ok((SimilarityIndex::load(&path)?, Artifact { path, config_hash: hash, cache_hit: false }))
    }

    fn episodes_key(&self) -> Result<serde_json::Value> {
        let index = match self.cfg.method {
            Method::NaqFeat | Method::NaqDiff => Some(hash_json(&self.index_key().expect("naq"))),
            _ => None,
        };
        Ok(json!({
            "dataset": self.dataset_hash,
            "method": self.cfg.method,
            "index": index,
            "episodes": self.cfg.episodes,
            "seed": self.cfg.seed,
        }))
    }

    pub fn episodes(&self) -> Result<(Vec<Episode>, Artifact)> {
        let key = self.episodes_key()?;
        let hash = hash_json(&key);
        let path = self.artifact_path("episodes", &hash, "jsonl");
        if check_manifest(&path, "episodes", &hash)? {
            log::info!("cache hit: {}", path.display());
            return Ok((read_episodes(&path)?, Artifact { path, config_hash: hash, cache_hit: true }));
        }
        let s = &self.cfg.episodes;
        let seed = derive_seed(self.cfg.seed, SEED_EPISODES);
        let eps = match self.cfg.method {
            Method::NaqFeat | Method::NaqDiff => {
                let (idx, _) = self.index()?;
                let cfg = NaqConfig { n_way: s.n_way, q: s.q, episodes: s.count, drop_overlap: s.drop_overlap };
                generate_naq_episodes(&idx, &cfg, seed)?
            }
            Method::Supervised => generate_supervised_episodes(&self.labels, s.n_way, s.k_shot, s.q, s.count, seed)?,
            Method::GUmtra => {
                let aug = AugmentSpec {
                    drop_edge_rate: s.drop_edge_rate,
                    drop_feature_rate: s.drop_feature_rate,
                    seed: derive_seed(self.cfg.seed, SEED_AUGMENT),
                };
                generate_gumtra_episodes(self.graph.n_nodes(), s.n_way, s.count, seed, aug)?
            }
        };
        write_episodes(&path, &eps)?;
        write_manifest(&path, "episodes", &hash, self.cfg.seed, &key)?;
        log::info!("wrote {} episodes to {}", eps.len(), path.display());
        Ok((eps, Artifact { path, config_hash: hash, cache_hit: false }))
    }

    /// Validation tasks; empty when the validation split cannot host them.
    /// Uses fewer ways than `eval.n_way` when the split has too few classes.
    pub fn val_tasks(&self) -> Result<Vec<EvalTask>> {
        let e = &self.cfg.eval;
        if e.val_tasks == 0 {
            return Ok(Vec::new());
        }
        let sizes = self.labels.class_sizes();
        let usable = self.labels.split().val.iter().filter(|&&c| sizes[c] >= e.k_shot + e.queries).count();
        let n_way = e.n_way.min(usable);
        if n_way < e.n_way {
            log::warn!("validation split has {usable} usable classes; validating {n_way}-way");
        }
        match sample_tasks(&self.labels, SplitKind::Val, n_way, e.k_shot, e.queries, e.val_tasks, derive_seed(self.cfg.seed, SEED_VAL)) {
            Ok(t) => Ok(t),
            Err(Error::Domain(msg)) => {
                log::warn!("no validation tasks: {msg}");
                Ok(Vec::new())
            }
            Err(e) => Err(e),
        }
    }

    pub fn test_tasks(&self) -> Result<Vec<EvalTask>> {
        let e = &self.cfg.eval;
        sample_tasks(&self.labels, SplitKind::Target, e.n_way, e.k_shot, e.queries, e.test_tasks, derive_seed(self.cfg.seed, SEED_TEST))
    }

    fn train_key(&self) -> Result<serde_json::Value> {
        Ok(json!({
            "episodes": hash_json(&self.episodes_key()?),
            "train": self.cfg.train,
            "val": {
                "n_way": self.cfg.eval.n_way,
                "k_shot": self.cfg.eval.k_shot,
                "queries": self.cfg.eval.queries,
                "tasks": self.cfg.eval.val_tasks,
            },
            "seed": self.cfg.seed,
        }))
    }

    /// Best-validation checkpoint and training history.
    pub fn checkpoint(&self) -> Result<(Checkpoint, Artifact)> {
        let key = self.train_key()?;
        let hash = hash_json(&key);
        let path = self.artifact_path("model", &hash, "naqw");
        let history = self.artifact_path("history", &hash, "csv");
        if check_manifest(&path, "model", &hash)? {
            log::info!("cache hit: {}", path.display());
            return Ok((Checkpoint::load(&path)?, Artifact { path, config_hash: hash, cache_hit: true }));
        }
        let (eps, _) = self.episodes()?;
        let val = self.val_tasks()?;
        let outcome = train(&self.graph, &eps, &self.cfg.train_config(), &val)?;
        write_history(&history, &outcome.history)?;
        write_manifest(&history, "history", &hash, self.cfg.seed, &key)?;
        outcome.best.save(&path)?;
        write_manifest(&path, "model", &hash, self.cfg.seed, &key)?;
        log::info!(
            "trained {} steps, best step {} (val {:?}) -> {}",
            outcome.history.len(),
            outcome.best_step,
            outcome.best_val,
            path.display()
        );
        Ok((outcome.best, Artifact { path, config_hash: hash, cache_hit: false }))
    }

    pub fn history_path(&self) -> Result<PathBuf> {
        Ok(self.artifact_path("history", &hash_json(&self.train_key()?), "csv"))
    }

    fn eval_key(&self) -> Result<serde_json::Value> {
        Ok(json!({ "model": hash_json(&self.train_key()?), "eval": self.cfg.eval, "seed": self.cfg.seed }))
    }

    /// Evaluates the trained encoder on the test tasks; writes
    /// `<out>/report.json`.
    pub fn report(&self) -> Result<(EvalReport, Artifact)> {
        let (ck, _) = self.checkpoint()?;
        let tasks = self.test_tasks()?;
        let report = evaluate(&ck.params, &self.graph, &tasks)?;
        let key = self.eval_key()?;
        let hash = hash_json(&key);
        let path = self.cfg.out.join("report.json");
        io::write_bytes(&path, report.to_json()?.as_bytes())?;
        write_manifest(&path, "report", &hash, self.cfg.seed, &key)?;
        Ok((report, Artifact { path, config_hash: hash, cache_hit: false }))
    }

    /// Class-level similarity, overlap and homophily diagnostics; writes
    /// `<out>/analysis.json` and optionally an embedding dump.
    pub fn analyze(&self) -> Result<(AnalysisReport, Artifact)> {
        let a = &self.cfg.analysis;
        let (index_metric, cls, tail) = match self.index_key() {
            Some(_) => {
                let (idx, _) = self.index()?;
                let centroids = class_centroids(&self.graph, &self.labels)?;
                let top = a.top.min(idx.k());
                let all = class_level_similarity(&idx, &self.labels, &centroids, top, None)?;
                let tail = class_level_similarity(&idx, &self.labels, &centroids, top, Some(a.tail_pct))?;
                (Some(idx.metric()), Some(all), Some(tail))
            }
            None => (None, None, None),
        };
        let (eps, _) = self.episodes()?;
        let embeddings = if a.dump_embeddings {
            let (ck, _) = self.checkpoint()?;
            let emb = encode(&ck.params, &GcnInput::new(&self.graph))?;
            let p = self.cfg.out.join("embeddings.naqf");
            dump_embeddings(&p, &emb, self.labels.labels())?;
            Some(p)
        } else {
            None
        };
        let report = AnalysisReport {
            method: self.cfg.method,
            n_nodes: self.graph.n_nodes(),
            n_edges: self.graph.n_edges(),
            homophily: self.labels.homophily(&self.graph),
            index_metric,
            top: a.top,
            class_level_similarity: cls,
            tail_pct: a.tail_pct,
            tail_class_level_similarity: tail,
            overlap_ratio: overlap_ratio(&eps),
            embeddings,
        };
        let key = json!({ "episodes": hash_json(&self.episodes_key()?), "analysis": a });
        let hash = hash_json(&key);
        let path = self.cfg.out.join("analysis.json");
        io::write_bytes(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
        write_manifest(&path, "analysis", &hash, self.cfg.seed, &key)?;
        Ok((report, Artifact { path, config_hash: hash, cache_hit: false }))
    }
}

pub fn cmd_index(cfg: &RunConfig) -> Result<Artifact> {
    Ok(Pipeline::new(cfg.clone())?.index()?.1)
}

pub fn cmd_episodes(cfg: &RunConfig) -> Result<Artifact> {
    Ok(Pipeline::new(cfg.clone())?.episodes()?.1)
}

/// Returns the checkpoint artifact and the history CSV path.
pub fn cmd_train(cfg: &RunConfig) -> Result<(Artifact, PathBuf)> {
    let p = Pipeline::new(cfg.clone())?;
    let (_, art) = p.checkpoint()?;
    Ok((art, p.history_path()?))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    Ok(Pipeline::new(cfg.clone())?.report()?.0)
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalysisReport> {
    Ok(Pipeline::new(cfg.clone())?.analyze()?.0)
}

/// Writes an SBM dataset into `dir` using the standard file names.
pub fn cmd_synth(spec: &SbmSpec, dir: &Path) -> Result<DatasetPaths> {
    let (g, ls) = generate_sbm(spec)?;
    let paths = DatasetPaths::in_dir(dir);
    write_dataset(&paths, &g, &ls)?;
    let key = serde_json::to_value(spec)?;
    let hash = hash_json(&key);
    write_manifest(&paths.features, "synth", &hash, spec.seed, &key)?;
    Ok(paths)
}

/// Writes a graph and labels in the on-disk dataset formats.
pub fn write_dataset(paths: &DatasetPaths, g: &Graph, ls: &LabelSet) -> Result<()> {
    write_edges(&paths.edges, g)?;
    io::write_matrix(&paths.features, g.features())?;
    write_labels(&paths.labels, ls.labels())?;
    io::write_bytes(&paths.split, serde_json::to_string(ls.split())?.as_bytes())
}
