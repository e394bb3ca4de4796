//! The `scenesense` command-line front end.
//!
//! Every subcommand reads an optional JSON [`RunConfig`] and applies flag
//! overrides on top. Outputs go to the `--out` directory and are written
//! atomically. Exit codes: 0 success, 1 internal error, 2 input or
//! configuration error, 3 I/O error, 4 backend error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    write_jsonl, ClassificationResult, ClassifyError, EmbeddingClassifier, RoomClassifier, StatisticalClassifier,
    TrainConfig, TrainError, TrainedHead, ZeroShotClassifier,
};
use crate::cooccurrence::{
    build_index, build_proxy_table, count_cooccurrences, CooccurrenceError, CooccurrenceTable, CountingMode,
    InformativenessIndex, SelectionConfig, TableSidecar,
};
use crate::eval::{
    evaluate, holdout_experiment, split, transfer_experiment, EmbeddingPipeline, EvalError, EvalOptions, EvalReport,
    SplitSpec, TransferSide,
};
use crate::lm_backend::{
    hash_embedder, mock_scorer_from_conditionals, BackendError, HttpConfig, HttpEmbedder, HttpScorer, LmScorer,
    MockTable, TextEmbedder,
};
use crate::query::{render_structured, StructuredOutcome, StructuredStringConfig, DEFAULT_BOOTSTRAP_SCHEDULE};
use crate::scene_graph::{load_scene_graph_path, preprocess, LabelSpace, RoomSample, SceneGraph, SceneGraphError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Input(_) => 2,
            CliError::Io(_) => 3,
            CliError::Backend(_) => 4,
        }
    }
}

impl From<SceneGraphError> for CliError {
    fn from(err: SceneGraphError) -> Self {
        match &err {
            SceneGraphError::Read { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::Input(format!("input not found: {path}"))
            }
            SceneGraphError::Read { .. } => CliError::Io(err.to_string()),
            _ => CliError::Input(err.to_string()),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(err: BackendError) -> Self {
        match err {
            BackendError::Config(_) => CliError::Input(err.to_string()),
            _ => CliError::Backend(err.to_string()),
        }
    }
}

impl From<CooccurrenceError> for CliError {
    fn from(err: CooccurrenceError) -> Self {
        match err {
            CooccurrenceError::Backend { .. } => CliError::Backend(err.to_string()),
            CooccurrenceError::Io(_) => CliError::Io(err.to_string()),
            _ => CliError::Input(err.to_string()),
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(err: ClassifyError) -> Self {
        match err {
            ClassifyError::Backend(e) => e.into(),
            ClassifyError::Cooccurrence(e) => e.into(),
            ClassifyError::Train(TrainError::NonFinite { .. }) => CliError::Internal(err.to_string()),
            _ => CliError::Input(err.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::Classify(e) => e.into(),
            EvalError::Cooccurrence(e) => e.into(),
            _ => CliError::Input(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TableMode {
    /// Count co-occurrences in labeled rooms.
    #[default]
    Gt,
    /// Softmax language-model scores.
    Proxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Zeroshot,
    Statistical,
    Embedding,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CountingArg {
    #[default]
    Presence,
    Multiplicity,
}

impl From<CountingArg> for CountingMode {
    fn from(c: CountingArg) -> Self {
        match c {
            CountingArg::Presence => CountingMode::Presence,
            CountingArg::Multiplicity => CountingMode::Multiplicity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: Option<BackendKind>,
    pub http: HttpConfig,
    /// Output dimension of the mock hash embedder.
    pub mock_dimension: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: None,
            http: HttpConfig::default(),
            mock_dimension: 256,
        }
    }
}

/// Everything a run needs. Relative paths in a config file are resolved
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graphs: Vec<PathBuf>,
    pub label_space: Option<PathBuf>,
    /// Remap target for `preprocess`, or the evaluation space for transfer.
    pub target_label_space: Option<PathBuf>,
    pub target_graphs: Vec<PathBuf>,
    pub table: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub target_index: Option<PathBuf>,
    pub head: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub method: Option<MethodArg>,
    pub table_mode: TableMode,
    pub counting: CountingArg,
    pub alpha: f64,
    pub backend: BackendConfig,
    pub selection: SelectionConfig,
    pub structured: StructuredStringConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub bootstrap_schedule: Vec<(usize, usize)>,
    pub seed: u64,
    pub holdout: Vec<String>,
    pub full_dataset: bool,
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            graphs: Vec::new(),
            label_space: None,
            target_label_space: None,
            target_graphs: Vec::new(),
            table: None,
            index: None,
            target_index: None,
            head: None,
            out: None,
            method: None,
            table_mode: TableMode::Gt,
            counting: CountingArg::Presence,
            alpha: 1.0,
            backend: BackendConfig::default(),
            selection: SelectionConfig::default(),
            structured: StructuredStringConfig::default(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            bootstrap_schedule: DEFAULT_BOOTSTRAP_SCHEDULE.to_vec(),
            seed: 0,
            holdout: Vec::new(),
            full_dataset: false,
            strict: false,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = read_input(path)?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        cfg.for_each_path(|p| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        });
        Ok(cfg)
    }

    fn for_each_path(&mut self, mut f: impl FnMut(&mut PathBuf)) {
        self.graphs.iter_mut().for_each(&mut f);
        self.target_graphs.iter_mut().for_each(&mut f);
        for p in [
            &mut self.label_space,
            &mut self.target_label_space,
            &mut self.table,
            &mut self.index,
            &mut self.target_index,
            &mut self.head,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            f(p);
        }
    }

    /// The config as embedded in reports: paths reduced to file names so
    /// outputs do not depend on where the inputs live.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut copy = self.clone();
        copy.for_each_path(|p| {
            if let Some(name) = p.file_name() {
                *p = PathBuf::from(name);
            }
        });
        copy.out = None;
        serde_json::to_value(copy).expect("config serializes")
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(CliError::Input(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if self.selection.k == 0 {
            return Err(CliError::Input("k must be at least 1".into()));
        }
        self.split.validate()?;
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "scenesense",
    version,
    about = "Room classification from scene-graph object labels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, reassign and optionally remap scene graphs.
    Preprocess(CommonArgs),
    /// Build a co-occurrence table and informativeness index.
    Cooccur(CommonArgs),
    /// Classify every room and write predictions as JSON lines.
    Classify(CommonArgs),
    /// Train an embedding head on bootstrapped queries.
    Train(CommonArgs),
    /// Write the bootstrapped embedding dataset.
    Bootstrap(CommonArgs),
    /// Write structured room strings.
    ExportStructured(CommonArgs),
    /// Evaluate a method; supports holdout and transfer modes.
    Eval(CommonArgs),
    /// Turn an evaluation report into a per-label accuracy CSV.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Scene-graph JSON files.
    pub graphs: Vec<PathBuf>,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub label_space: Option<PathBuf>,
    #[arg(long)]
    pub target_label_space: Option<PathBuf>,
    /// Scene graphs in the target space (transfer evaluation).
    #[arg(long, num_args = 1..)]
    pub target_graphs: Vec<PathBuf>,
    /// Number of informative objects per query.
    #[arg(long)]
    pub k: Option<usize>,
    /// Smoothing pseudo-count.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Co-occurrence source.
    #[arg(long, value_enum)]
    pub mode: Option<TableMode>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, value_enum)]
    pub counting: Option<CountingArg>,
    #[arg(long)]
    pub no_positions: bool,
    #[arg(long)]
    pub no_room_size: bool,
    /// Use every room instead of the split partition.
    #[arg(long)]
    pub full_dataset: bool,
    /// Comma-separated object labels to hold out.
    #[arg(long, value_delimiter = ',')]
    pub holdout: Vec<String>,
    /// Co-occurrence table CSV (metadata read from the same path with `.json`).
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Informativeness index CSV.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub target_index: Option<PathBuf>,
    /// Trained embedding head JSON.
    #[arg(long)]
    pub head: Option<PathBuf>,
    /// Count classifier failures as errors.
    #[arg(long)]
    pub strict: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// An evaluation report JSON.
    pub report: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    /// Merge flags over the config file (or defaults).
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::default(),
        };
        if !self.graphs.is_empty() {
            cfg.graphs = self.graphs.clone();
        }
        if !self.target_graphs.is_empty() {
            cfg.target_graphs = self.target_graphs.clone();
        }
        let paths = [
            (&self.label_space, &mut cfg.label_space),
            (&self.target_label_space, &mut cfg.target_label_space),
            (&self.table, &mut cfg.table),
            (&self.index, &mut cfg.index),
            (&self.target_index, &mut cfg.target_index),
            (&self.head, &mut cfg.head),
            (&self.out, &mut cfg.out),
        ];
        for (flag, slot) in paths {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(kind) = self.backend {
            cfg.backend.kind = Some(kind);
        }
        if let Some(endpoint) = &self.endpoint {
            cfg.backend.http.endpoint.clone_from(endpoint);
        }
        if let Some(model) = &self.model {
            cfg.backend.http.model.clone_from(model);
        }
        if let Some(k) = self.k {
            cfg.selection.k = k;
        }
        if let Some(alpha) = self.alpha {
            cfg.alpha = alpha;
        }
        if let Some(mode) = self.mode {
            cfg.table_mode = mode;
        }
        if let Some(method) = self.method {
            cfg.method = Some(method);
        }
        if let Some(counting) = self.counting {
            cfg.counting = counting;
        }
        if self.no_positions {
            cfg.structured.include_positions = false;
        }
        if self.no_room_size {
            cfg.structured.include_room_size = false;
        }
        cfg.full_dataset |= self.full_dataset;
        cfg.strict |= self.strict;
        if !self.holdout.is_empty() {
            cfg.holdout = self.holdout.iter().map(|s| s.trim().to_string()).collect();
        }
        cfg.train.seed = cfg.seed;
        cfg.split.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Preprocess(a) => cmd_preprocess(&a.resolve()?),
        Command::Cooccur(a) => cmd_cooccur(&a.resolve()?),
        Command::Classify(a) => cmd_classify(&a.resolve()?),
        Command::Train(a) => cmd_train(&a.resolve()?),
        Command::Bootstrap(a) => cmd_bootstrap(&a.resolve()?),
        Command::ExportStructured(a) => cmd_export_structured(&a.resolve()?),
        Command::Eval(a) => cmd_eval(&a.resolve()?),
        Command::Report(a) => cmd_report(a),
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Input(format!("input not found: {}", path.display())),
        _ => CliError::Io(format!("{}: {e}", path.display())),
    })
}

/// Write `bytes` to `dir/name` via a temporary file in `dir`.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("cannot write to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| io(e.error))?;
    Ok(target)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.out
        .as_deref()
        .ok_or_else(|| CliError::Input("missing --out directory".into()))
}

/// Write several outputs, announcing each. Nothing is written until every
/// output has been computed.
fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<(), CliError> {
    for (name, bytes) in files {
        let path = write_atomic(dir, name, bytes)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn required<'a>(slot: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    slot.as_deref()
        .ok_or_else(|| CliError::Input(format!("missing artifact: {what}")))
}

fn load_space(path: Option<&Path>, flag: &str) -> Result<LabelSpace, CliError> {
    let path = path.ok_or_else(|| CliError::Input(format!("missing {flag}")))?;
    let text = read_input(path)?;
    Ok(LabelSpace::from_json(&text)?)
}

fn load_graphs(paths: &[PathBuf], space: &LabelSpace) -> Result<Vec<SceneGraph>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Input("no scene-graph files given".into()));
    }
    paths.iter().map(|p| Ok(load_scene_graph_path(p, space)?.0)).collect()
}

fn all_samples(graphs: &[SceneGraph]) -> Vec<RoomSample> {
    graphs.iter().flat_map(SceneGraph::samples).collect()
}

/// Rooms with a label from the room vocabulary and at least one object.
fn labeled(samples: Vec<RoomSample>, space: &LabelSpace) -> Vec<RoomSample> {
    samples
        .into_iter()
        .filter(|s| !s.object_labels.is_empty())
        .filter(|s| s.label.as_deref().is_some_and(|l| space.room_index(l).is_some()))
        .collect()
}

fn load_table(path: &Path) -> Result<CooccurrenceTable, CliError> {
    let sidecar_path = path.with_extension("json");
    let sidecar: TableSidecar = serde_json::from_str(&read_input(&sidecar_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", sidecar_path.display())))?;
    let text = read_input(path)?;
    Ok(CooccurrenceTable::read_csv(text.as_bytes(), &sidecar)?)
}

fn load_index(path: &Path, space: &LabelSpace) -> Result<InformativenessIndex, CliError> {
    let text = read_input(path)?;
    Ok(InformativenessIndex::read_csv(
        text.as_bytes(),
        space.room_labels.len(),
    )?)
}

fn backend_kind(cfg: &RunConfig, purpose: &str) -> Result<BackendKind, CliError> {
    cfg.backend
        .kind
        .ok_or_else(|| CliError::Input(format!("{purpose} needs a backend (--backend mock|http)")))
}

fn http_config(cfg: &RunConfig) -> Result<HttpConfig, CliError> {
    let http = cfg.backend.http.clone().with_env_api_key();
    if http.model.is_empty() {
        return Err(CliError::Input("http backend needs --model".into()));
    }
    http.validate()?;
    Ok(http)
}

fn make_scorer(cfg: &RunConfig, purpose: &str) -> Result<Box<dyn LmScorer>, CliError> {
    match backend_kind(cfg, purpose)? {
        BackendKind::Http => Ok(Box::new(HttpScorer::new(http_config(cfg)?)?)),
        BackendKind::Mock => match &cfg.table {
            // With a table the mock scores queries as summed log conditionals.
            Some(path) => Ok(Box::new(mock_scorer_from_conditionals(&load_table(path)?, -1e9, false))),
            None => Ok(Box::new(MockTable::new(0.0))),
        },
    }
}

fn make_embedder(cfg: &RunConfig) -> Result<Box<dyn TextEmbedder>, CliError> {
    match backend_kind(cfg, "embedding")? {
        BackendKind::Http => Ok(Box::new(HttpEmbedder::new(http_config(cfg)?)?)),
        BackendKind::Mock => {
            if cfg.backend.mock_dimension == 0 {
                return Err(CliError::Input("mock_dimension must be positive".into()));
            }
            Ok(Box::new(hash_embedder(cfg.backend.mock_dimension, cfg.seed)))
        }
    }
}

fn to_json_line<T: Serialize>(value: &T) -> Vec<u8> {
    let mut line = serde_json::to_vec(value).expect("serializable");
    line.push(b'\n');
    line
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_vec_pretty(value).expect("serializable");
    text.push(b'\n');
    text
}

fn cmd_preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let space = load_space(cfg.label_space.as_deref(), "--label-space")?;
    let target = match &cfg.target_label_space {
        Some(p) => Some(load_space(Some(p), "--target-label-space")?),
        None => None,
    };
    let dir = out_dir(cfg)?;
    if cfg.graphs.is_empty() {
        return Err(CliError::Input("no scene-graph files given".into()));
    }
    let mut files = Vec::new();
    for path in &cfg.graphs {
        let (graph, load) = load_scene_graph_path(path, &space)?;
        let (graph, report) = preprocess(graph, &space, target.as_ref())?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("graph").to_string();
        let mut text = report.to_string();
        if !load.aliases_applied.is_empty() {
            text.push_str("aliases applied\n");
            for (raw, n) in &load.aliases_applied {
                text.push_str(&format!("  {raw} -> {}: {n}\n", space.canonical(raw)));
            }
        }
        if !load.unknown_object_labels.is_empty() {
            text.push_str("labels outside the label space\n");
            for (label, n) in &load.unknown_object_labels {
                text.push_str(&format!("  {label}: {n}\n"));
            }
        }
        let mut json = graph.to_json();
        json.push('\n');
        files.push((format!("{stem}.json"), json.into_bytes()));
        files.push((format!("{stem}.report.txt"), text.into_bytes()));
    }
    let files: Vec<(&str, Vec<u8>)> = files.iter().map(|(n, b)| (n.as_str(), b.clone())).collect();
    write_outputs(dir, &files)
}

/// The partition a command works on: all rooms with `--full-dataset`,
/// otherwise the given split part.
fn partition(rooms: Vec<RoomSample>, cfg: &RunConfig, part: Part) -> Result<Vec<RoomSample>, CliError> {
    if cfg.full_dataset {
        return Ok(rooms);
    }
    let parts = split(&rooms, &cfg.split)?;
    Ok(match part {
        Part::Train => parts.train,
        Part::Test => parts.test,
    })
}

#[derive(Clone, Copy)]
enum Part {
    Train,
    Test,
}

fn cmd_cooccur(cfg: &RunConfig) -> Result<(), CliError> {
    let space = load_space(cfg.label_space.as_deref(), "--label-space")?;
    let dir = out_dir(cfg)?;
    let table = match cfg.table_mode {
        TableMode::Gt => {
            let graphs = load_graphs(&cfg.graphs, &space)?;
            let rooms = partition(labeled(all_samples(&graphs), &space), cfg, Part::Train)?;
            count_cooccurrences(&rooms, &space, cfg.counting.into(), cfg.alpha)?
        }
        TableMode::Proxy => {
            if cfg.backend.kind.is_none() {
                return Err(CliError::Input(
                    "proxy co-occurrence needs a backend (--backend mock|http)".into(),
                ));
            }
            let scorer = make_scorer(
                &RunConfig {
                    table: None,
                    ..cfg.clone()
                },
                "proxy co-occurrence",
            )?;
            build_proxy_table(scorer.as_ref(), &space)?
        }
    };
    let index = build_index(&table)?;
    let mut table_csv = Vec::new();
    table.write_csv(&mut table_csv)?;
    let mut index_csv = Vec::new();
    index.write_csv(&mut index_csv)?;
    write_outputs(
        dir,
        &[
            ("table.csv", table_csv),
            ("table.json", pretty(&table.sidecar())),
            ("index.csv", index_csv),
        ],
    )
}

/// Classifier inputs that must outlive the classifier.
enum Artifacts {
    Statistical(CooccurrenceTable),
    ZeroShot(Box<dyn LmScorer>, InformativenessIndex),
    Embedding(Box<dyn TextEmbedder>, TrainedHead, InformativenessIndex),
}

fn load_artifacts(cfg: &RunConfig, space: &LabelSpace) -> Result<Artifacts, CliError> {
    let method = cfg
        .method
        .ok_or_else(|| CliError::Input("missing --method (zeroshot|statistical|embedding)".into()))?;
    match method {
        MethodArg::Statistical => {
            let table = load_table(required(&cfg.table, "--table (co-occurrence table) for statistical")?)?;
            Ok(Artifacts::Statistical(table))
        }
        MethodArg::Zeroshot => {
            let index = load_index(
                required(&cfg.index, "--index (informativeness index) for zeroshot")?,
                space,
            )?;
            Ok(Artifacts::ZeroShot(
                make_scorer(cfg, "zero-shot classification")?,
                index,
            ))
        }
        MethodArg::Embedding => {
            let head = TrainedHead::from_path(required(&cfg.head, "--head (trained embedding head) for embedding")?)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let index = load_index(
                required(&cfg.index, "--index (informativeness index) for embedding")?,
                space,
            )?;
            let embedder = make_embedder(cfg)?;
            if embedder.dimension().is_some_and(|d| d != head.embedder.dimension) {
                return Err(CliError::Input(format!(
                    "head expects {}-dimensional embeddings from `{}`, backend gives {}",
                    head.embedder.dimension,
                    head.embedder.name,
                    embedder.dimension().unwrap_or(0)
                )));
            }
            Ok(Artifacts::Embedding(embedder, head, index))
        }
    }
}

fn with_classifier<R>(
    artifacts: &Artifacts,
    cfg: &RunConfig,
    space: &LabelSpace,
    f: impl FnOnce(&dyn RoomClassifier) -> R,
) -> R {
    match artifacts {
        Artifacts::Statistical(table) => f(&StatisticalClassifier {
            table,
            mode: cfg.counting.into(),
        }),
        Artifacts::ZeroShot(scorer, index) => f(&ZeroShotClassifier {
            scorer: scorer.as_ref(),
            index,
            selection: cfg.selection,
            room_labels: space.room_labels.clone(),
        }),
        Artifacts::Embedding(embedder, head, index) => f(&EmbeddingClassifier {
            embedder: embedder.as_ref(),
            head,
            index,
            selection: cfg.selection,
        }),
    }
}

fn cmd_classify(cfg: &RunConfig) -> Result<(), CliError> {
    let space = load_space(cfg.label_space.as_deref(), "--label-space")?;
    let dir = out_dir(cfg)?;
    let graphs = load_graphs(&cfg.graphs, &space)?;
    let rooms: Vec<RoomSample> = all_samples(&graphs)
        .into_iter()
        .filter(|s| !s.object_labels.is_empty())
        .collect();
    let artifacts = load_artifacts(cfg, &space)?;
    let results = with_classifier(&artifacts, cfg, &space, |clf| {
        rooms
            .par_iter()
            .map(|room| clf.classify(room))
            .collect::<Result<Vec<ClassificationResult>, ClassifyError>>()
    })?;
    let mut lines = Vec::new();
    write_jsonl(&results, &mut lines).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("classified {} rooms", results.len());
    write_outputs(dir, &[("predictions.jsonl", lines)])
}

fn pipeline<'a>(cfg: &RunConfig, embedder: &'a dyn TextEmbedder) -> EmbeddingPipeline<'a> {
    EmbeddingPipeline {
        embedder,
        selection: cfg.selection,
        schedule: cfg.bootstrap_schedule.clone(),
        train: cfg.train.clone(),
    }
}

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let space = load_space(cfg.label_space.as_deref(), "--label-space")?;
    let dir = out_dir(cfg)?;
    let index = load_index(
        required(&cfg.index, "--index (informativeness index) for training")?,
        &space,
    )?;
    let embedder = make_embedder(cfg)?;
    let graphs = load_graphs(&cfg.graphs, &space)?;
    let rooms = labeled(all_samples(&graphs), &space);
    let (train_rooms, val_rooms) = if cfg.full_dataset {
        (rooms, Vec::new())
    } else {
        let parts = split(&rooms, &cfg.split)?;
        (parts.train, parts.val)
    };
    let pipe = pipeline(cfg, embedder.as_ref());
    let train_rows = pipe.bootstrap(&train_rooms, &index)?;
    let val_rows = pipe.bootstrap(&val_rooms, &index)?;
    let (head, curve) = pipe.fit(&train_rows, &val_rows, &space.room_labels)?;
    let last = curve.epochs.last().expect("at least one epoch");
    println!(
        "trained on {} rows; final train accuracy {:.4}, loss {:.6}",
        train_rows.len(),
        last.train_accuracy,
        last.train_loss
    );
    let mut head_json = head.to_json().into_bytes();
    head_json.push(b'\n');
    write_outputs(
        dir,
        &[("head.json", head_json), ("training_curve.json", pretty(&curve))],
    )
}

fn cmd_bootstrap(cfg: &RunConfig) -> Result<(), CliError> {
    let space = load_space(cfg.label_space.as_deref(), "--label-space")?;
    let dir = out_dir(cfg)?;
    let index = load_index(
        required(&cfg.index, "--index (informativeness index) for bootstrap")?,
        &space,
    )?;
    let graphs = load_graphs(&cfg.graphs, &space)?;
    let rooms = partition(labeled(all_samples(&graphs), &space), cfg, Part::Train)?;
    let embedder = hash_embedder(1, 0);
    let rows = pipeline(cfg, &embedder).bootstrap(&rooms, &index)?;
    let bytes: Vec<u8> = rows.iter().flat_map(to_json_line).collect();
    println!("{} rows from {} rooms", rows.len(), rooms.len());
    write_outputs(dir, &[("bootstrap.jsonl", bytes)])
}

#[derive(Serialize)]
struct StructuredRow<'a> {
    room_id: &'a str,
    label: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped_object_count: Option<usize>,
}

fn cmd_export_structured(cfg: &RunConfig) -> Result<(), CliError> {
    let space = load_space(cfg.label_space.as_deref(), "--label-space")?;
    let dir = out_dir(cfg)?;
    let graphs = load_graphs(&cfg.graphs, &space)?;
    let mut bytes = Vec::new();
    let (mut rendered, mut skipped) = (0, 0);
    for graph in &graphs {
        for room in graph.rooms() {
            let objects: Vec<_> = graph.objects_in(room).collect();
            let outcome = render_structured(room, &objects, &cfg.structured);
            let row = StructuredRow {
                room_id: &room.id,
                label: room.label.as_deref(),
                text: outcome.text(),
                skipped_object_count: match &outcome {
                    StructuredOutcome::Skipped { object_count, .. } => Some(*object_count),
                    StructuredOutcome::Rendered(_) => None,
                },
            };
            if row.text.is_some() {
                rendered += 1;
            } else {
                skipped += 1;
            }
            bytes.extend(to_json_line(&row));
        }
    }
    println!("{rendered} rooms rendered, {skipped} skipped");
    write_outputs(dir, &[("structured.jsonl", bytes)])
}

fn report_files(
    report: &EvalReport,
    predictions: Option<&[ClassificationResult]>,
) -> Result<Vec<(&'static str, Vec<u8>)>, CliError> {
    let csv_err = |e: csv::Error| CliError::Internal(e.to_string());
    let mut confusion = Vec::new();
    report.write_confusion_csv(&mut confusion).map_err(csv_err)?;
    let mut per_label = Vec::new();
    report.write_per_label_csv(&mut per_label).map_err(csv_err)?;
    let mut files = vec![
        ("report.json", report.to_json().into_bytes()),
        ("confusion.csv", confusion),
        ("per_label.csv", per_label),
    ];
    if let Some(predictions) = predictions {
        let mut lines = Vec::new();
        write_jsonl(predictions, &mut lines).map_err(|e| CliError::Internal(e.to_string()))?;
        files.push(("predictions.jsonl", lines));
    }
    Ok(files)
}

fn percent(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let space = load_space(cfg.label_space.as_deref(), "--label-space")?;
    let dir = out_dir(cfg)?;
    let graphs = load_graphs(&cfg.graphs, &space)?;
    let rooms = labeled(all_samples(&graphs), &space);
    if !cfg.holdout.is_empty() {
        return eval_holdout(cfg, &space, &rooms, dir);
    }
    if !cfg.target_graphs.is_empty() {
        return eval_transfer(cfg, &space, &rooms, dir);
    }
    let artifacts = load_artifacts(cfg, &space)?;
    let (eval_rooms, split_id) = if cfg.full_dataset {
        (rooms.clone(), "full".to_string())
    } else {
        (
            partition(rooms.clone(), cfg, Part::Test)?,
            format!("test:{}", cfg.split.id()),
        )
    };
    let options = EvalOptions {
        split: split_id,
        strict: cfg.strict,
        seed: Some(cfg.seed),
        config: Some(cfg.snapshot()),
    };
    let outcome = with_classifier(&artifacts, cfg, &space, |clf| {
        evaluate(clf, &eval_rooms, &space.room_labels, &options)
    })?;
    let report = &outcome.report;
    if cfg.full_dataset && !matches!(artifacts, Artifacts::Embedding(..)) {
        // Training-free methods also get the test-split number, with the
        // full-dataset accuracy in parentheses.
        let test = partition(
            rooms,
            &RunConfig {
                full_dataset: false,
                ..cfg.clone()
            },
            Part::Test,
        );
        let test_acc = test.ok().and_then(|test| {
            let opts = EvalOptions {
                config: None,
                ..options.clone()
            };
            with_classifier(&artifacts, cfg, &space, |clf| {
                evaluate(clf, &test, &space.room_labels, &opts)
            })
            .ok()
            .map(|o| o.report.overall_accuracy)
        });
        match test_acc {
            Some(t) => println!("accuracy: {} ({})", percent(t), percent(report.overall_accuracy)),
            None => println!("accuracy: ({})", percent(report.overall_accuracy)),
        }
    } else {
        println!("accuracy: {}", percent(report.overall_accuracy));
    }
    if !report.failures.is_empty() {
        eprintln!("warning: {} room(s) failed to classify", report.failures.len());
    }
    write_outputs(dir, &report_files(report, Some(&outcome.predictions))?)
}

fn eval_holdout(cfg: &RunConfig, space: &LabelSpace, rooms: &[RoomSample], dir: &Path) -> Result<(), CliError> {
    let index = load_index(
        required(&cfg.index, "--index (informativeness index) for holdout")?,
        space,
    )?;
    let embedder = make_embedder(cfg)?;
    let pipe = pipeline(cfg, embedder.as_ref());
    let mut report = holdout_experiment(rooms, &cfg.split, &cfg.holdout, space, &index, &pipe)?;
    report.overall.config = Some(cfg.snapshot());
    println!("holdout accuracy: {}", percent(report.overall.overall_accuracy));
    for (label, acc) in &report.per_object {
        println!("  {label}: {} of {} rooms", percent(acc.accuracy), acc.total);
    }
    let mut files = report_files(&report.overall, None)?;
    files.push(("holdout.json", pretty(&report)));
    write_outputs(dir, &files)
}

fn eval_transfer(cfg: &RunConfig, space: &LabelSpace, rooms: &[RoomSample], dir: &Path) -> Result<(), CliError> {
    let target_space = load_space(cfg.target_label_space.as_deref(), "--target-label-space for transfer")?;
    let target_graphs = load_graphs(&cfg.target_graphs, &target_space)?;
    let target_rooms = labeled(all_samples(&target_graphs), &target_space);
    let index = load_index(
        required(&cfg.index, "--index (source informativeness index) for transfer")?,
        space,
    )?;
    let target_index = load_index(
        required(
            &cfg.target_index,
            "--target-index (target informativeness index) for transfer",
        )?,
        &target_space,
    )?;
    let embedder = make_embedder(cfg)?;
    let pipe = pipeline(cfg, embedder.as_ref());
    let source = TransferSide {
        rooms,
        space,
        index: &index,
    };
    let target = TransferSide {
        rooms: &target_rooms,
        space: &target_space,
        index: &target_index,
    };
    let mut outcome = transfer_experiment(&source, &target, &cfg.split, &pipe)?;
    outcome.report.config = Some(cfg.snapshot());
    println!("transfer accuracy: {}", percent(outcome.report.overall_accuracy));
    write_outputs(dir, &report_files(&outcome.report, Some(&outcome.predictions))?)
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let text = read_input(&args.report)?;
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", args.report.display())))?;
    let mut csv_bytes = Vec::new();
    report
        .write_per_label_csv(&mut csv_bytes)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    for (label, acc) in &report.per_label {
        println!(
            "{label:<24} {:>7} ({}/{})",
            percent(acc.accuracy),
            acc.correct,
            acc.total
        );
    }
    println!(
        "{:<24} {:>7} ({}/{})",
        "overall",
        percent(report.overall_accuracy),
        report.correct,
        report.total
    );
    let dir = args
        .out
        .as_deref()
        .ok_or_else(|| CliError::Input("missing --out directory".into()))?;
    write_outputs(dir, &[("per_label.csv", csv_bytes)])
}
