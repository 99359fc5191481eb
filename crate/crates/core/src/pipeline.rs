//! File-backed pipeline stages with reproducibility manifests.
//!
//! Every command reads its declared inputs, computes all outputs in memory
//! and only then writes them (each file atomically) next to a
//! `manifest_<command>.json` recording the config, seed and SHA-256 of every
//! file read and written. A failing command leaves the output directory
//! untouched.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ekg::{self, EventContext, GraphFormat, HeavinessLabel};
use crate::featsel::{self, select_subset, silhouette};
use crate::fsutil::{sha256_hex, write_atomic};
use crate::graphcluster::{
    assign_heaviness_levels, girvan_newman, kmeans_elbow, modularity, ClusterError, Clustering,
    GnTarget, GraphConfig, KMeansConfig, Method, SpectralMode, SpectralOptions, Weighting,
};
use crate::ingest::{
    self, build_sample_sets, parse_activities, parse_food_log, parse_heart_rate, IngestConfig,
    NoiseConfig, SampleSet,
};
use crate::metrics::zscore_columns;
use crate::signal::{self, analyze_sample_set, feature_index, FeatureTable, SignalConfig, SignalError};
use crate::synth::{self, NoiseMix};

pub const SAMPLE_SETS: &str = "sample_sets.json";
pub const REJECTIONS: &str = "rejections.csv";
pub const UNMATCHED_FOODS: &str = "unmatched_foods.csv";
pub const FEATURES: &str = "features.csv";
pub const UNUSABLE: &str = "unusable.csv";
pub const SUBSET_SCORES: &str = "subset_scores.csv";
pub const SWEEP: &str = "sweep.csv";
pub const CLUSTERS: &str = "clusters.csv";
pub const LEVEL_TABLE: &str = "level_table.csv";
pub const BASELINE_GN: &str = "baseline_gn.csv";
pub const BASELINE_KMEANS: &str = "baseline_kmeans.csv";
pub const ELBOW: &str = "elbow.csv";
pub const BASELINE_SUMMARY: &str = "baseline_summary.csv";
pub const ASPECT_REPORT: &str = "aspect_report.csv";
pub const HEATMAP_CSV: &str = "heatmap.csv";
pub const HEATMAP_SVG: &str = "heatmap.svg";
pub const SWEEP_SVG: &str = "sweep.svg";

/// Largest feature subset searched; the search is exhaustive up to this size.
pub const MAX_SUBSET_SIZE: usize = 5;

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "EDL_OUT_DIR";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input file {0} does not exist")]
    MissingInput(PathBuf),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Config(String),
    #[error("{file}: {message}")]
    Format { file: String, message: String },
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error("no eating segments found in the activity file")]
    NoEatingSegments,
    #[error("no sample set produced a usable feature vector")]
    NoUsableSamples,
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Featsel(#[from] featsel::FeatselError),
    #[error(transparent)]
    Ekg(#[from] ekg::EkgError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error("{CLUSTERS} holds no clustered samples")]
    EmptyClusters,
}

impl PipelineError {
    /// Stable snake_case error code.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::MissingInput(_) => "missing_input",
            PipelineError::Io { .. } => "io",
            PipelineError::Config(_) => "invalid_config",
            PipelineError::Format { .. } => "malformed_input",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::NoEatingSegments => "no_eating_segments",
            PipelineError::NoUsableSamples => "no_usable_samples",
            PipelineError::Cluster(_) => "cluster",
            PipelineError::Featsel(_) => "feature_selection",
            PipelineError::Ekg(_) => "ekg",
            PipelineError::Synth(_) => "synth",
            PipelineError::EmptyClusters => "empty_clusters",
        }
    }

    /// `error[<code>]: <message>` on a single line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.code(), msg)
    }
}

fn format_err(file: &str, message: impl ToString) -> PipelineError {
    PipelineError::Format {
        file: file.to_string(),
        message: message.to_string(),
    }
}

/// Flat key-value configuration shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub out_dir: PathBuf,
    pub heart_rate_file: String,
    pub activities_file: String,
    pub food_log_file: String,
    /// Optional JSON object mapping sample ids to extra event context.
    pub context_file: Option<String>,
    /// Row label of the aspect report.
    pub user: String,
    pub median_window: usize,
    pub prominence_bpm: f64,
    pub start_threshold_bpm: f64,
    pub coverage_min: f64,
    pub match_window_min: i64,
    /// Neighbour count of the k-NN graph; 0 picks `max(3, ⌈log2 n⌉)`.
    pub knn: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub subset_min: usize,
    pub subset_max: usize,
    pub seed: u64,
    pub clusterer: Method,
    /// Gaussian instead of binary edge weights.
    pub weighted: bool,
    pub spectral_mode: SpectralMode,
    pub graph_format: GraphFormat,
    pub svg: bool,
    pub synth_n_per_class: usize,
    pub synth_noise_std: f64,
    /// Fraction of synthetic episodes receiving a data-quality defect.
    pub synth_noise_rate: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_dir: PathBuf::from("."),
            out_dir: PathBuf::from("out"),
            heart_rate_file: "heart_rate.csv".into(),
            activities_file: "activities.json".into(),
            food_log_file: "food_log.csv".into(),
            context_file: None,
            user: "user".into(),
            median_window: signal::DEFAULT_MEDIAN_WINDOW,
            prominence_bpm: signal::DEFAULT_PROMINENCE_BPM,
            start_threshold_bpm: 100.0,
            coverage_min: 0.6,
            match_window_min: 15,
            knn: 0,
            k_min: 2,
            k_max: 10,
            subset_min: 2,
            subset_max: 5,
            seed: 0,
            clusterer: Method::Spectral,
            weighted: false,
            spectral_mode: SpectralMode::Njw,
            graph_format: GraphFormat::TriplesJson,
            svg: true,
            synth_n_per_class: 20,
            synth_noise_std: 2.0,
            synth_noise_rate: 0.0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => PipelineError::MissingInput(path.to_path_buf()),
            _ => PipelineError::Io {
                path: path.to_path_buf(),
                message: e.to_string(),
            },
        })?;
        Self::from_toml_str(&text)
    }

    /// Sets one key from its TOML literal; bare words are taken as strings.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self, PipelineError> {
        let mut table = toml::Table::try_from(self).map_err(|e| PipelineError::Config(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
        table
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(format!("{key}: {}", e.message())))
    }

    /// Applies [`OUT_DIR_ENV`] when it is set and non-empty.
    pub fn apply_env(mut self) -> Self {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            self.out_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: &str| Err(PipelineError::Config(msg.to_string()));
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return fail("median_window must be a positive odd integer");
        }
        if !(self.prominence_bpm > 0.0) {
            return fail("prominence_bpm must be positive");
        }
        if !(self.start_threshold_bpm > 20.0 && self.start_threshold_bpm < 250.0) {
            return fail("start_threshold_bpm must lie in (20, 250)");
        }
        if !(self.coverage_min > 0.0 && self.coverage_min <= 1.0) {
            return fail("coverage_min must lie in (0, 1]");
        }
        if self.match_window_min < 0 {
            return fail("match_window_min must be non-negative");
        }
        if self.k_min < 2 || self.k_max < self.k_min {
            return fail("K range needs 2 <= k_min <= k_max");
        }
        if self.subset_min == 0 || self.subset_max < self.subset_min || self.subset_max > MAX_SUBSET_SIZE {
            return fail("subset sizes need 1 <= subset_min <= subset_max <= 5");
        }
        if self.synth_n_per_class == 0 {
            return fail("synth_n_per_class must be positive");
        }
        if !(self.synth_noise_std >= 0.0) {
            return fail("synth_noise_std must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.synth_noise_rate) {
            return fail("synth_noise_rate must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            match_window_min: self.match_window_min,
            noise: NoiseConfig {
                start_threshold_bpm: self.start_threshold_bpm,
                coverage_min: self.coverage_min,
                median_window: self.median_window,
            },
        }
    }

    pub fn signal_config(&self) -> SignalConfig {
        SignalConfig {
            median_window: self.median_window,
            prominence_bpm: self.prominence_bpm,
        }
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            knn: (self.knn > 0).then_some(self.knn),
            weighting: if self.weighted { Weighting::Gaussian } else { Weighting::Binary },
            k_min: self.k_min,
            k_max: self.k_max,
            spectral: SpectralOptions {
                mode: self.spectral_mode,
                kmeans: KMeansConfig::default(),
            },
        }
    }

    /// Synthetic defect mix: the total rate split 8:6:4 between high-start,
    /// empty and partial episodes.
    pub fn noise_mix(&self) -> NoiseMix {
        let r = self.synth_noise_rate;
        NoiseMix {
            high_start: r * 8.0 / 18.0,
            empty: r * 6.0 / 18.0,
            partial: r * 4.0 / 18.0,
        }
    }

    pub fn events_file(&self) -> &'static str {
        match self.graph_format {
            GraphFormat::TriplesJson => "events.json",
            GraphFormat::EdgeList => "events.tsv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Command {
    Ingest,
    Features,
    Select,
    Sweep,
    Cluster,
    Levels,
    Baseline,
    Ekg,
    Report,
    Synth,
    Pipeline,
}

impl Command {
    /// Stages run by `pipeline`, in order.
    pub const STAGES: [Command; 9] = [
        Command::Ingest,
        Command::Features,
        Command::Select,
        Command::Sweep,
        Command::Cluster,
        Command::Levels,
        Command::Baseline,
        Command::Ekg,
        Command::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Features => "features",
            Command::Select => "select",
            Command::Sweep => "sweep",
            Command::Cluster => "cluster",
            Command::Levels => "levels",
            Command::Baseline => "baseline",
            Command::Ekg => "ekg",
            Command::Report => "report",
            Command::Synth => "synth",
            Command::Pipeline => "pipeline",
        }
    }

    pub fn manifest_name(self) -> String {
        format!("manifest_{}.json", self.as_str())
    }
}

impl FromStr for Command {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, PipelineError> {
        Command::STAGES
            .into_iter()
            .chain([Command::Synth, Command::Pipeline])
            .find(|c| c.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Config without the directory paths, so manifests compare across machines.
    pub config: BTreeMap<String, serde_json::Value>,
    /// SHA-256 of every file read, by name.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written, by name (the manifest itself excluded).
    pub outputs: BTreeMap<String, String>,
}

/// Files staged in memory until the whole command has succeeded.
struct Store<'a> {
    cfg: &'a PipelineConfig,
    staged: BTreeMap<String, Vec<u8>>,
    reads: BTreeMap<String, String>,
    writes: BTreeMap<String, String>,
}

impl<'a> Store<'a> {
    fn new(cfg: &'a PipelineConfig) -> Self {
        Self {
            cfg,
            staged: BTreeMap::new(),
            reads: BTreeMap::new(),
            writes: BTreeMap::new(),
        }
    }

    fn read_path(&mut self, key: String, path: PathBuf) -> Result<Vec<u8>, PipelineError> {
        let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => PipelineError::MissingInput(path.clone()),
            _ => PipelineError::Io {
                path: path.clone(),
                message: e.to_string(),
            },
        })?;
        self.reads.insert(key, sha256_hex(&bytes));
        Ok(bytes)
    }

    /// A raw input file from `input_dir`.
    fn input(&mut self, name: &str) -> Result<Vec<u8>, PipelineError> {
        let path = self.cfg.input_dir.join(name);
        self.read_path(format!("input/{name}"), path)
    }

    /// An artifact of an earlier stage: staged in this run or on disk.
    fn artifact(&mut self, name: &str) -> Result<Vec<u8>, PipelineError> {
        if let Some(bytes) = self.staged.get(name) {
            let bytes = bytes.clone();
            self.reads.insert(name.to_string(), sha256_hex(&bytes));
            return Ok(bytes);
        }
        let path = self.cfg.out_dir.join(name);
        self.read_path(name.to_string(), path)
    }

    fn put(&mut self, name: &str, bytes: Vec<u8>) {
        self.writes.insert(name.to_string(), sha256_hex(&bytes));
        self.staged.insert(name.to_string(), bytes);
    }

    /// Closes the current command: stages its manifest and resets the logs.
    fn finish(&mut self, command: Command) -> Manifest {
        let manifest = Manifest {
            command: command.as_str().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            config: manifest_config(self.cfg),
            inputs: std::mem::take(&mut self.reads),
            outputs: std::mem::take(&mut self.writes),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        self.staged.insert(command.manifest_name(), bytes);
        manifest
    }
}

fn manifest_config(cfg: &PipelineConfig) -> BTreeMap<String, serde_json::Value> {
    let value = serde_json::to_value(cfg).expect("config serializes");
    let mut map: BTreeMap<String, serde_json::Value> = match value {
        serde_json::Value::Object(m) => m.into_iter().collect(),
        _ => BTreeMap::new(),
    };
    map.remove("input_dir");
    map.remove("out_dir");
    map
}

/// What a successful command produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifests: Vec<Manifest>,
    /// Every file written, relative to `out_dir`, in name order.
    pub files: Vec<String>,
}

/// Runs `command`, writing its outputs only if every stage succeeds.
pub fn run(command: Command, cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let mut store = Store::new(cfg);
    let mut manifests = Vec::new();
    let stages: Vec<Command> = match command {
        Command::Pipeline => Command::STAGES.to_vec(),
        other => vec![other],
    };
    for stage in &stages {
        run_stage(*stage, &mut store)?;
        manifests.push(store.finish(*stage));
    }
    if command == Command::Pipeline {
        store.reads = manifests.iter().flat_map(|m| m.inputs.clone()).filter(|(k, _)| k.starts_with("input/")).collect();
        store.writes = store
            .staged
            .iter()
            .map(|(name, bytes)| (name.clone(), sha256_hex(bytes)))
            .collect();
        manifests.push(store.finish(Command::Pipeline));
    }

    for (name, bytes) in &store.staged {
        let path = cfg.out_dir.join(name);
        write_atomic(&path, bytes).map_err(|e| PipelineError::Io {
            path,
            message: e.to_string(),
        })?;
    }
    Ok(RunSummary {
        manifests,
        files: store.staged.keys().cloned().collect(),
    })
}

fn run_stage(stage: Command, store: &mut Store) -> Result<(), PipelineError> {
    match stage {
        Command::Ingest => stage_ingest(store),
        Command::Features => stage_features(store),
        Command::Select => stage_select(store),
        Command::Sweep => stage_sweep(store),
        Command::Cluster => stage_cluster(store),
        Command::Levels => stage_levels(store),
        Command::Baseline => stage_baseline(store),
        Command::Ekg => stage_ekg(store),
        Command::Report => stage_report(store),
        Command::Synth => stage_synth(store),
        Command::Pipeline => unreachable!("pipeline is expanded into its stages"),
    }
}

fn stage_ingest(store: &mut Store) -> Result<(), PipelineError> {
    let cfg = store.cfg;
    let hr = parse_heart_rate(&store.input(&cfg.heart_rate_file)?)?;
    let activities = parse_activities(&store.input(&cfg.activities_file)?)?;
    let foods = parse_food_log(&store.input(&cfg.food_log_file)?)?;
    let ingested = build_sample_sets(&hr, &activities, &foods, &cfg.ingest_config());
    if ingested.sets.is_empty() {
        return Err(PipelineError::NoEatingSegments);
    }
    let mut json = serde_json::to_vec_pretty(&ingested.sets).expect("sample sets serialize");
    json.push(b'\n');
    store.put(SAMPLE_SETS, json);
    store.put(REJECTIONS, ingest::write_rejections(&ingested.sets));
    store.put(UNMATCHED_FOODS, ingest::write_food_log(&ingested.unmatched));
    Ok(())
}

fn read_sample_sets(store: &mut Store) -> Result<Vec<SampleSet>, PipelineError> {
    serde_json::from_slice(&store.artifact(SAMPLE_SETS)?).map_err(|e| format_err(SAMPLE_SETS, e))
}

fn stage_features(store: &mut Store) -> Result<(), PipelineError> {
    let sets = read_sample_sets(store)?;
    let cfg = store.cfg.signal_config();
    let mut table = FeatureTable::default();
    let mut unusable = String::from("sample_id,reason\n");
    for set in sets.iter().filter(|s| s.is_accepted()) {
        match analyze_sample_set(set, &cfg) {
            Ok(a) => table.push(set.id.clone(), a.features),
            Err(e) => {
                let reason = match e {
                    SignalError::NoCycle => "no_cycle",
                    _ => "signal_error",
                };
                let _ = writeln!(unusable, "{},{reason}", set.id);
            }
        }
    }
    if table.is_empty() {
        return Err(PipelineError::NoUsableSamples);
    }
    store.put(FEATURES, table.to_csv());
    store.put(UNUSABLE, unusable.into_bytes());
    Ok(())
}

fn read_features(store: &mut Store) -> Result<FeatureTable, PipelineError> {
    FeatureTable::from_csv(&store.artifact(FEATURES)?).map_err(|e| format_err(FEATURES, e))
}

fn stage_select(store: &mut Store) -> Result<(), PipelineError> {
    let table = read_features(store)?;
    let cfg = store.cfg;
    let scores = select_subset(
        &table.matrix(),
        &signal::FEATURE_NAMES,
        cfg.subset_min..=cfg.subset_max,
        &cfg.graph_config(),
        cfg.seed,
    )?;
    store.put(SUBSET_SCORES, featsel::write_subset_scores(&scores));
    Ok(())
}

/// Feature table plus the z-scored columns of the top-ranked subset.
struct Selected {
    table: FeatureTable,
    features: Vec<String>,
    points: DMatrix<f64>,
}

fn read_selected(store: &mut Store) -> Result<Selected, PipelineError> {
    let table = read_features(store)?;
    let scores = featsel::parse_subset_scores(&store.artifact(SUBSET_SCORES)?)
        .map_err(|e| format_err(SUBSET_SCORES, e))?;
    let top = scores
        .first()
        .ok_or_else(|| format_err(SUBSET_SCORES, "no ranked subsets"))?;
    let cols = top
        .features
        .iter()
        .map(|f| feature_index(f).ok_or_else(|| format_err(SUBSET_SCORES, format!("unknown feature {f:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let points = zscore_columns(&table.matrix()).select_columns(&cols);
    Ok(Selected {
        table,
        features: top.features.clone(),
        points,
    })
}

fn stage_sweep(store: &mut Store) -> Result<(), PipelineError> {
    let sel = read_selected(store)?;
    let (_, sweep) = store.cfg.graph_config().sweep(&sel.points, store.cfg.seed)?;
    store.put(SWEEP, sweep.to_csv());
    Ok(())
}

fn write_assignments(ids: &[String], clustering: &Clustering, levels: &[usize]) -> Vec<u8> {
    let mut out = String::from("sample_id,cluster,level\n");
    for (id, &label) in ids.iter().zip(&clustering.labels) {
        let _ = writeln!(out, "{id},{label},{}", levels[label]);
    }
    out.into_bytes()
}

fn kmeans_clustering(
    sel: &Selected,
    cfg: &PipelineConfig,
    graph: &crate::graphcluster::AffinityGraph,
) -> Result<(Clustering, Vec<f64>), PipelineError> {
    let (run, curve) = kmeans_elbow(&sel.points, cfg.k_max, cfg.seed, &KMeansConfig::default())?;
    let k = run.labels.iter().max().map_or(0, |m| m + 1);
    let q = modularity(graph, &run.labels)?;
    Ok((
        Clustering {
            labels: run.labels,
            k,
            q,
            method: Method::Kmeans,
            seed: cfg.seed,
        },
        curve,
    ))
}

fn stage_cluster(store: &mut Store) -> Result<(), PipelineError> {
    let sel = read_selected(store)?;
    let cfg = store.cfg;
    let gcfg = cfg.graph_config();
    let clustering = match cfg.clusterer {
        Method::Spectral => gcfg.sweep(&sel.points, cfg.seed)?.1.best,
        Method::Gn => girvan_newman(&gcfg.graph(&sel.points)?, GnTarget::MaxModularity)?,
        Method::Kmeans => kmeans_clustering(&sel, cfg, &gcfg.graph(&sel.points)?)?.0,
    };
    let levels = assign_heaviness_levels(&clustering, &sel.table);
    store.put(CLUSTERS, write_assignments(&sel.table.ids, &clustering, &levels));
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct Assignment {
    sample_id: String,
    cluster: usize,
    level: usize,
}

fn read_assignments(store: &mut Store) -> Result<Vec<Assignment>, PipelineError> {
    let bytes = store.artifact(CLUSTERS)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| format_err(CLUSTERS, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("sample_id,cluster,level") {
        return Err(format_err(CLUSTERS, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || format_err(CLUSTERS, format!("line {}: malformed row", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(Assignment {
                sample_id: f[0].to_string(),
                cluster: f[1].parse().map_err(|_| bad())?,
                level: f[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Checks that the assignments cover exactly the feature rows, in order.
fn check_alignment(assignments: &[Assignment], table: &FeatureTable) -> Result<(), PipelineError> {
    let same = assignments.len() == table.len()
        && assignments.iter().zip(&table.ids).all(|(a, id)| &a.sample_id == id);
    if same {
        Ok(())
    } else {
        Err(format_err(CLUSTERS, format!("sample ids do not match {FEATURES}")))
    }
}

fn per_point_silhouette(points: &DMatrix<f64>, labels: &[usize]) -> Vec<f64> {
    silhouette(points, labels)
        .map(|(s, _)| s)
        .unwrap_or_else(|_| vec![0.0; labels.len()])
}

fn stage_levels(store: &mut Store) -> Result<(), PipelineError> {
    let sel = read_selected(store)?;
    let assignments = read_assignments(store)?;
    check_alignment(&assignments, &sel.table)?;
    let sets = read_sample_sets(store)?;
    let foods: HashMap<&str, Vec<&str>> = sets.iter().map(|s| (s.id.as_str(), s.food_names())).collect();

    let labels: Vec<usize> = assignments.iter().map(|a| a.cluster).collect();
    let sil = per_point_silhouette(&sel.points, &labels);
    let max_level = assignments.iter().map(|a| a.level).max().unwrap_or(0);

    // Column per level: food names of members by descending silhouette, first five distinct.
    let mut columns: Vec<Vec<String>> = Vec::with_capacity(max_level);
    for level in 1..=max_level {
        let mut members: Vec<usize> = (0..assignments.len()).filter(|&i| assignments[i].level == level).collect();
        members.sort_by(|&a, &b| sil[b].total_cmp(&sil[a]).then_with(|| assignments[a].sample_id.cmp(&assignments[b].sample_id)));
        let mut names: Vec<String> = Vec::new();
        for i in members {
            for name in foods.get(assignments[i].sample_id.as_str()).into_iter().flatten() {
                if names.len() < 5 && !names.iter().any(|n| n == name) {
                    names.push(name.to_string());
                }
            }
        }
        columns.push(names);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("rank".to_string())
        .chain((1..=max_level).map(|l| format!("Level {l}")))
        .collect();
    w.write_record(&header).expect("in-memory write");
    for rank in 0..5 {
        let row: Vec<String> = std::iter::once((rank + 1).to_string())
            .chain(columns.iter().map(|c| c.get(rank).cloned().unwrap_or_default()))
            .collect();
        w.write_record(&row).expect("in-memory write");
    }
    store.put(LEVEL_TABLE, w.into_inner().expect("in-memory flush"));
    Ok(())
}

fn stage_baseline(store: &mut Store) -> Result<(), PipelineError> {
    let sel = read_selected(store)?;
    let cfg = store.cfg;
    let gcfg = cfg.graph_config();
    let (graph, sweep) = gcfg.sweep(&sel.points, cfg.seed)?;
    let gn = girvan_newman(&graph, GnTarget::MaxModularity)?;
    let (km, curve) = kmeans_clustering(&sel, cfg, &graph)?;

    let mut summary = String::from("method,k,q,mean_silhouette\n");
    for (name, c) in [("spectral", &sweep.best), ("gn", &gn), ("kmeans", &km)] {
        let sil = silhouette(&sel.points, &c.labels).map(|(_, m)| m.to_string()).unwrap_or_default();
        let _ = writeln!(summary, "{name},{},{},{sil}", c.k, c.q);
    }
    let mut elbow = String::from("K,distortion\n");
    for (i, d) in curve.iter().enumerate() {
        let _ = writeln!(elbow, "{},{d}", i + 1);
    }
    store.put(BASELINE_GN, write_assignments(&sel.table.ids, &gn, &assign_heaviness_levels(&gn, &sel.table)));
    store.put(BASELINE_KMEANS, write_assignments(&sel.table.ids, &km, &assign_heaviness_levels(&km, &sel.table)));
    store.put(ELBOW, elbow.into_bytes());
    store.put(BASELINE_SUMMARY, summary.into_bytes());
    Ok(())
}

fn stage_ekg(store: &mut Store) -> Result<(), PipelineError> {
    let cfg = store.cfg;
    let sets = read_sample_sets(store)?;
    let assignments = read_assignments(store)?;
    let activities = parse_activities(&store.input(&cfg.activities_file)?)?;
    let context: HashMap<String, EventContext> = match &cfg.context_file {
        Some(name) => serde_json::from_slice(&store.input(name)?).map_err(|e| format_err(name, e))?,
        None => HashMap::new(),
    };
    let labels: HashMap<String, HeavinessLabel> = assignments
        .into_iter()
        .map(|a| (a.sample_id, HeavinessLabel { cluster: a.cluster, level: a.level }))
        .collect();
    let events = ekg::build_events(&sets, &labels, &activities, &context);
    let ratios = ekg::missing_aspect_ratio(&events)?;
    store.put(cfg.events_file(), ekg::serialize_graph(&events, cfg.graph_format));
    store.put(ASPECT_REPORT, ekg::write_aspect_report(&[(cfg.user.clone(), ratios)]));
    Ok(())
}

fn stage_report(store: &mut Store) -> Result<(), PipelineError> {
    let assignments = read_assignments(store)?;
    if assignments.is_empty() {
        return Err(PipelineError::EmptyClusters);
    }
    let sel = read_selected(store)?;
    check_alignment(&assignments, &sel.table)?;
    let sweep = parse_sweep(&store.artifact(SWEEP)?)?;

    let mut order: Vec<usize> = (0..assignments.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&assignments[a], &assignments[b]);
        (x.level, x.cluster, &x.sample_id).cmp(&(y.level, y.cluster, &y.sample_id))
    });
    let mut csv = format!("sample_id,level,{}\n", sel.features.join(","));
    for &i in &order {
        let _ = write!(csv, "{},{}", assignments[i].sample_id, assignments[i].level);
        for j in 0..sel.points.ncols() {
            let _ = write!(csv, ",{}", sel.points[(i, j)]);
        }
        csv.push('\n');
    }
    store.put(HEATMAP_CSV, csv.into_bytes());
    if store.cfg.svg {
        store.put(HEATMAP_SVG, heatmap_svg(&sel, &assignments, &order));
        store.put(SWEEP_SVG, sweep_svg(&sweep));
    }
    Ok(())
}

fn parse_sweep(bytes: &[u8]) -> Result<Vec<(usize, Option<f64>)>, PipelineError> {
    let text = std::str::from_utf8(bytes).map_err(|e| format_err(SWEEP, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("K,Q") {
        return Err(format_err(SWEEP, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || format_err(SWEEP, format!("line {}: malformed row", i + 2));
            let (k, q) = line.split_once(',').ok_or_else(bad)?;
            let q = if q.is_empty() { None } else { Some(q.parse().map_err(|_| bad())?) };
            Ok((k.parse().map_err(|_| bad())?, q))
        })
        .collect()
}

/// Diverging blue-white-red colour for a z-score clipped to [-2.5, 2.5].
fn diverging(z: f64) -> String {
    let t = (z.clamp(-2.5, 2.5) / 2.5 + 1.0) / 2.0;
    let (r, g, b) = if t < 0.5 {
        let s = t / 0.5;
        (59.0 + s * 196.0, 76.0 + s * 179.0, 192.0 + s * 63.0)
    } else {
        let s = (t - 0.5) / 0.5;
        (255.0 - s * 75.0, 255.0 - s * 251.0, 255.0 - s * 217.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

fn heatmap_svg(sel: &Selected, assignments: &[Assignment], order: &[usize]) -> Vec<u8> {
    let cell_w = 48.0;
    let cell_h = (480.0 / order.len() as f64).clamp(2.0, 16.0);
    let left = 70.0;
    let top = 30.0;
    let width = left + cell_w * sel.features.len() as f64 + 20.0;
    let height = top + cell_h * order.len() as f64 + 20.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    for (j, name) in sel.features.iter().enumerate() {
        let x = left + cell_w * (j as f64 + 0.5);
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{name}</text>", top - 10.0);
    }
    let mut prev_level = None;
    for (row, &i) in order.iter().enumerate() {
        let y = top + cell_h * row as f64;
        let level = assignments[i].level;
        if prev_level != Some(level) {
            let _ = writeln!(s, "<text x=\"4\" y=\"{}\">Level {level}</text>", y + 11.0);
            if prev_level.is_some() {
                let _ = writeln!(
                    s,
                    "<line x1=\"{left}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"black\"/>",
                    left + cell_w * sel.features.len() as f64
                );
            }
            prev_level = Some(level);
        }
        for j in 0..sel.points.ncols() {
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{y}\" width=\"{cell_w}\" height=\"{cell_h}\" fill=\"{}\"/>",
                left + cell_w * j as f64,
                diverging(sel.points[(i, j)])
            );
        }
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}

fn sweep_svg(rows: &[(usize, Option<f64>)]) -> Vec<u8> {
    let (w, h, pad) = (420.0, 260.0, 40.0);
    let points: Vec<(usize, f64)> = rows.iter().filter_map(|&(k, q)| q.map(|q| (k, q))).collect();
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        let (k0, k1) = (first.0 as f64, (last.0 as f64).max(first.0 as f64 + 1.0));
        let q_max = points.iter().map(|p| p.1).fold(0.0f64, f64::max).max(1e-9);
        let sx = |k: usize| pad + (k as f64 - k0) / (k1 - k0) * (w - 2.0 * pad);
        let sy = |q: f64| h - pad - q.max(0.0) / q_max * (h - 2.0 * pad);
        let path: Vec<String> = points.iter().map(|&(k, q)| format!("{:.2},{:.2}", sx(k), sy(q))).collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"#b40426\" stroke-width=\"2\" points=\"{}\"/>", path.join(" "));
        for &(k, q) in &points {
            let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\"/>", sx(k), sy(q));
        }
        for &(k, _) in rows {
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{k}</text>", sx(k), h - pad + 15.0);
        }
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">K</text>", w / 2.0, h - 5.0);
        let _ = writeln!(s, "<text x=\"5\" y=\"{}\">Q</text>", h / 2.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{q_max:.4}</text>", pad - 4.0, pad + 4.0);
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}

fn stage_synth(store: &mut Store) -> Result<(), PipelineError> {
    let cfg = store.cfg;
    let bundle = synth::gen_lifelog(
        &synth::default_templates(cfg.synth_noise_std),
        cfg.synth_n_per_class,
        cfg.noise_mix(),
        cfg.seed,
    )?;
    for (name, bytes) in bundle.files() {
        store.put(name, bytes);
    }
    Ok(())
}
