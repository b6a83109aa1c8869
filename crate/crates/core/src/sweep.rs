//! Hyperparameter grid sweeps: train, save, evaluate and tabulate every
//! configuration of a grid, resumably.
//!
//! A sweep is described by a TOML file:
//!
//! ```toml
//! corpus = "wiki.txt"          # relative paths resolve against the spec file
//! suite = "questions-words.txt"
//! output = "runs"
//! methods = ["cosadd", "cosmul"]  # optional, both by default
//!
//! [training]                   # optional shared SGD settings
//! epochs = 5
//! seed = 1
//! workers = 4
//!
//! [sg]
//! dim = [200, 300, 400, 500]
//! window = [3, 5]
//! min_count = [1, 5]
//! negatives = [1, 5, 10]
//!
//! [cbow]
//! dim = [200, 300, 400, 500]
//! window = [2, 5]
//! min_count = [1, 5]
//! negatives = [1, 5, 15]
//! ```
//!
//! Each configuration gets `<output>/<config_id>/` holding `vectors.txt`,
//! `vectors.vecbin`, `vocab.tsv`, `train.log.tsv`, `eval-<method>.json`,
//! `eval-<method>.tsv`, `errors-<method>.jsonl` and `manifest.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analogy::{
    evaluate, parse_suite, save_error_records, AnalogyError, AnalogySuite, EvalReport, Method,
    MethodConfig,
};
use crate::corpus::{TextCorpus, TokenizerConfig};
use crate::embeddings::EmbeddingSpace;
use crate::trainer::{train, ModelKind, TrainError, TrainedModel, TrainingConfig};
use crate::vocab::DEFAULT_SAMPLER_POWER;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VECTORS_TEXT: &str = "vectors.txt";
pub const VECTORS_BINARY: &str = "vectors.vecbin";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const TRAIN_LOG: &str = "train.log.tsv";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("cannot read sweep spec {path}: {source}")]
    ReadSpec {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid sweep spec: {0}")]
    Spec(String),
    #[error("hyperparameter {0} has an empty value list")]
    EmptyAxis(String),
    #[error("output root {path} is not writable: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corpus {path} is not readable: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("run {config_id} has no {method} report")]
    MissingReport { config_id: String, method: Method },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Analogy(#[from] AnalogyError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn both_methods() -> Vec<Method> {
    vec![Method::CosAdd, Method::CosMul]
}

fn default_epsilon() -> f64 {
    MethodConfig::DEFAULT_EPSILON
}

fn default_parallel() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharedSettings {
    pub epochs: usize,
    pub seed: u64,
    pub workers: usize,
    pub lr_floor_fraction: f64,
    pub subsample: Option<f64>,
    pub sampler_power: f64,
}

impl Default for SharedSettings {
    fn default() -> Self {
        SharedSettings {
            epochs: 5,
            seed: 1,
            workers: 1,
            lr_floor_fraction: 1e-4,
            subsample: None,
            sampler_power: DEFAULT_SAMPLER_POWER,
        }
    }
}

/// Value lists for one model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    pub dim: Vec<usize>,
    pub window: Vec<usize>,
    pub min_count: Vec<u64>,
    pub negatives: Vec<usize>,
    /// Initial learning rate; the model default when absent.
    #[serde(default)]
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub corpus: PathBuf,
    pub suite: PathBuf,
    pub output: PathBuf,
    #[serde(default = "both_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub training: SharedSettings,
    #[serde(default)]
    pub sg: Option<GridAxes>,
    #[serde(default)]
    pub cbow: Option<GridAxes>,
    /// Configurations trained concurrently. Training is already parallel
    /// internally, so this defaults to 1.
    #[serde(default = "default_parallel")]
    pub parallel_configs: usize,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self, SweepError> {
        toml::from_str(text).map_err(|e| SweepError::Spec(e.to_string()))
    }

    /// Reads a spec file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let text = fs::read_to_string(path).map_err(|source| SweepError::ReadSpec {
            path: path.to_path_buf(),
            source,
        })?;
        let mut spec = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut spec.corpus, &mut spec.suite, &mut spec.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn method_configs(&self) -> Vec<MethodConfig> {
        self.methods
            .iter()
            .map(|&m| MethodConfig {
                epsilon: self.epsilon,
                ..MethodConfig::new(m)
            })
            .collect()
    }
}

/// Cartesian product of the value lists, SG before CBOW, then dim, window,
/// min_count and negatives in nested order.
pub fn expand_grid(spec: &SweepSpec) -> Result<Vec<TrainingConfig>, SweepError> {
    let mut out = Vec::new();
    for (model, axes) in [
        (ModelKind::SkipGram, &spec.sg),
        (ModelKind::Cbow, &spec.cbow),
    ] {
        let Some(axes) = axes else { continue };
        for (name, empty) in [
            ("dim", axes.dim.is_empty()),
            ("window", axes.window.is_empty()),
            ("min_count", axes.min_count.is_empty()),
            ("negatives", axes.negatives.is_empty()),
        ] {
            if empty {
                return Err(SweepError::EmptyAxis(format!("{model}.{name}")));
            }
        }
        for &dim in &axes.dim {
            for &window in &axes.window {
                for &min_count in &axes.min_count {
                    for &negatives in &axes.negatives {
                        let t = &spec.training;
                        let config = TrainingConfig {
                            dim,
                            window,
                            min_count,
                            negatives,
                            epochs: t.epochs,
                            initial_lr: axes.lr.unwrap_or(model.default_learning_rate()),
                            lr_floor_fraction: t.lr_floor_fraction,
                            seed: t.seed,
                            workers: t.workers,
                            subsample: t.subsample,
                            sampler_power: t.sampler_power,
                            ..TrainingConfig::new(model)
                        };
                        config.validate().map_err(|e| {
                            SweepError::Spec(format!("{}: {e}", config.config_id()))
                        })?;
                        out.push(config);
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(SweepError::Spec("no [sg] or [cbow] grid given".into()));
    }
    let mut ids: Vec<String> = out.iter().map(TrainingConfig::config_id).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(SweepError::Spec(format!(
            "duplicate configuration {}",
            w[0]
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Pending,
    Trained,
    Evaluated,
    Failed,
}

/// File names of one evaluation, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportPaths {
    pub json: String,
    pub tsv: String,
    pub errors: String,
}

impl ReportPaths {
    pub fn for_method(method: Method) -> Self {
        ReportPaths {
            json: format!("eval-{method}.json"),
            tsv: format!("eval-{method}.tsv"),
            errors: format!("errors-{method}.jsonl"),
        }
    }
}

/// Artifact file names, relative to the run directory. Present only once
/// the producing stage finished.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Artifacts {
    pub vectors_text: Option<String>,
    pub vectors_binary: Option<String>,
    pub vocab: Option<String>,
    pub log: Option<String>,
    pub reports: BTreeMap<Method, ReportPaths>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_id: String,
    pub config: TrainingConfig,
    pub status: RunStatus,
    pub artifacts: Artifacts,
    pub duration_secs: f64,
    #[serde(default)]
    pub error: Option<String>,
    /// Directory holding the artifacts; not serialized.
    #[serde(skip)]
    pub dir: PathBuf,
}

impl RunManifest {
    pub fn new(config: TrainingConfig, dir: PathBuf) -> Self {
        RunManifest {
            config_id: config.config_id(),
            config,
            status: RunStatus::Pending,
            artifacts: Artifacts::default(),
            duration_secs: 0.0,
            error: None,
            dir,
        }
    }

    pub fn save(&self) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()
    }

    pub fn load(dir: &Path) -> Result<Self, SweepError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)?;
        let mut m: RunManifest = serde_json::from_str(&text).map_err(|e| SweepError::Manifest {
            path: path.clone(),
            message: e.to_string(),
        })?;
        m.dir = dir.to_path_buf();
        Ok(m)
    }

    /// Evaluated, with every recorded artifact still on disk.
    pub fn is_complete(&self, methods: &[Method]) -> bool {
        let a = &self.artifacts;
        let files = [&a.vectors_text, &a.vectors_binary, &a.vocab, &a.log];
        self.status == RunStatus::Evaluated
            && files
                .iter()
                .all(|f| f.as_ref().is_some_and(|f| self.dir.join(f).is_file()))
            && methods.iter().all(|m| {
                a.reports.get(m).is_some_and(|r| {
                    [&r.json, &r.tsv, &r.errors]
                        .iter()
                        .all(|f| self.dir.join(f).is_file())
                })
            })
    }

    pub fn report(&self, method: Method) -> Result<EvalReport, SweepError> {
        let paths =
            self.artifacts
                .reports
                .get(&method)
                .ok_or_else(|| SweepError::MissingReport {
                    config_id: self.config_id.clone(),
                    method,
                })?;
        Ok(EvalReport::load_json(&self.dir.join(&paths.json))?)
    }
}

/// Writes vectors (text and binary), vocabulary and training log of a model
/// into `dir`, recording them in `artifacts`.
pub fn save_training_artifacts(
    model: &TrainedModel<f32>,
    space: &EmbeddingSpace<f32>,
    dir: &Path,
    artifacts: &mut Artifacts,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    space.save_text(&dir.join(VECTORS_TEXT))?;
    artifacts.vectors_text = Some(VECTORS_TEXT.into());
    space.save_binary(&dir.join(VECTORS_BINARY))?;
    artifacts.vectors_binary = Some(VECTORS_BINARY.into());
    model.vocab.save(&dir.join(VOCAB_FILE))?;
    artifacts.vocab = Some(VOCAB_FILE.into());
    model.log.save_tsv(&dir.join(TRAIN_LOG))?;
    artifacts.log = Some(TRAIN_LOG.into());
    Ok(())
}

/// Evaluates `space` and writes the JSON and TSV reports and the error
/// records into `dir`.
pub fn evaluate_and_save(
    space: &EmbeddingSpace<f32>,
    suite: &AnalogySuite,
    method: &MethodConfig,
    config_id: &str,
    dir: &Path,
) -> Result<(EvalReport, ReportPaths), SweepError> {
    let (report, errors) = evaluate(space, suite, method, config_id)?;
    let paths = ReportPaths::for_method(method.method);
    report.save_json(&dir.join(&paths.json))?;
    fs::write(dir.join(&paths.tsv), report.to_tsv())?;
    save_error_records(&errors, &dir.join(&paths.errors))?;
    Ok((report, paths))
}

fn run_config(
    corpus: &TextCorpus,
    suite: &AnalogySuite,
    methods: &[MethodConfig],
    config: TrainingConfig,
    dir: PathBuf,
) -> RunManifest {
    let started = Instant::now();
    let mut manifest = RunManifest::new(config, dir);
    let outcome = (|| -> Result<(), SweepError> {
        fs::create_dir_all(&manifest.dir)?;
        manifest.save()?;
        let model = train::<f32>(corpus, &manifest.config)?;
        let space = EmbeddingSpace::from_model(&model);
        save_training_artifacts(&model, &space, &manifest.dir, &mut manifest.artifacts)?;
        manifest.status = RunStatus::Trained;
        manifest.duration_secs = started.elapsed().as_secs_f64();
        manifest.save()?;
        for m in methods {
            let (_, paths) =
                evaluate_and_save(&space, suite, m, &manifest.config_id, &manifest.dir)?;
            manifest.artifacts.reports.insert(m.method, paths);
        }
        manifest.status = RunStatus::Evaluated;
        Ok(())
    })();
    if let Err(e) = outcome {
        manifest.status = RunStatus::Failed;
        manifest.error = Some(e.to_string());
    }
    manifest.duration_secs = started.elapsed().as_secs_f64();
    // a failed manifest write leaves the run to be redone on resume
    let _ = manifest.save();
    manifest
}

fn check_writable(root: &Path) -> Result<(), SweepError> {
    let unwritable = |source| SweepError::Unwritable {
        path: root.to_path_buf(),
        source,
    };
    fs::create_dir_all(root).map_err(unwritable)?;
    let probe = root.join(".write-probe");
    File::create(&probe).map_err(unwritable)?;
    fs::remove_file(&probe).map_err(unwritable)?;
    Ok(())
}

/// Runs every configuration of the grid. Failures are recorded in the
/// manifest of the failing configuration and do not stop the sweep. With
/// `resume`, configurations whose manifest shows a complete evaluation are
/// loaded instead of rerun.
pub fn run_sweep(spec: &SweepSpec, resume: bool) -> Result<Vec<RunManifest>, SweepError> {
    let configs = expand_grid(spec)?;
    check_writable(&spec.output)?;
    File::open(&spec.corpus).map_err(|source| SweepError::Corpus {
        path: spec.corpus.clone(),
        source,
    })?;
    let suite = parse_suite(&spec.suite)?;
    let corpus = TextCorpus::new(&spec.corpus, TokenizerConfig::default());
    let methods = spec.method_configs();

    let run_one = |config: TrainingConfig| -> RunManifest {
        let dir = spec.output.join(config.config_id());
        if resume {
            if let Ok(m) = RunManifest::load(&dir) {
                if m.config == config && m.is_complete(&spec.methods) {
                    return m;
                }
            }
        }
        run_config(&corpus, &suite, &methods, config, dir)
    };

    if spec.parallel_configs <= 1 {
        Ok(configs.into_iter().map(run_one).collect())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.parallel_configs)
            .build()
            .map_err(|e| SweepError::Spec(e.to_string()))?;
        Ok(pool.install(|| configs.into_par_iter().map(run_one).collect()))
    }
}

/// Manifests of every run directory directly below `root`, by config id.
pub fn load_manifests(root: &Path) -> Result<Vec<RunManifest>, SweepError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root)? {
        let dir = entry?.path();
        if dir.join(MANIFEST_FILE).is_file() {
            out.push(RunManifest::load(&dir)?);
        }
    }
    out.sort_by(|a, b| a.config_id.cmp(&b.config_id));
    Ok(out)
}

/// One bar of the accuracy comparison: accuracies by relation kind for a
/// (configuration, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub config_id: String,
    pub method: Method,
    pub morphosyntactic: f64,
    pub semantic: f64,
    pub overall: f64,
    pub morphosyntactic_attempted: Option<f64>,
    pub semantic_attempted: Option<f64>,
    pub overall_attempted: Option<f64>,
    pub not_given: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FigureReport {
    pub rows: Vec<FigureRow>,
}

impl FigureReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "config_id\tmethod\tmorphosyntactic\tsemantic\toverall\tmorphosyntactic_attempted\tsemantic_attempted\toverall_attempted\tnot_given\n",
        );
        let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_owned(), |v| format!("{v:.6}"));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
                r.config_id,
                r.method,
                r.morphosyntactic,
                r.semantic,
                r.overall,
                opt(r.morphosyntactic_attempted),
                opt(r.semantic_attempted),
                opt(r.overall_attempted),
                r.not_given
            );
        }
        out
    }
}

/// One row per (manifest, evaluated method). Accuracies are over all
/// questions of the group; the `_attempted` columns exclude not-given ones.
pub fn figure_report(manifests: &[RunManifest]) -> Result<FigureReport, SweepError> {
    let mut rows = Vec::new();
    for m in manifests {
        if m.status != RunStatus::Evaluated || m.artifacts.reports.is_empty() {
            return Err(SweepError::MissingReport {
                config_id: m.config_id.clone(),
                method: Method::CosAdd,
            });
        }
        for &method in m.artifacts.reports.keys() {
            let r = m.report(method)?;
            rows.push(FigureRow {
                config_id: m.config_id.clone(),
                method,
                morphosyntactic: r.morphosyntactic.accuracy_over_all,
                semantic: r.semantic.accuracy_over_all,
                overall: r.overall.accuracy_over_all,
                morphosyntactic_attempted: r.morphosyntactic.accuracy_over_attempted,
                semantic_attempted: r.semantic.accuracy_over_attempted,
                overall_attempted: r.overall.accuracy_over_attempted,
                not_given: r.overall.not_given,
            });
        }
    }
    Ok(FigureReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER_GRID: &str = r#"
corpus = "c.txt"
suite = "s.txt"
output = "runs"

[sg]
dim = [200, 300, 400, 500]
window = [3, 5]
min_count = [1, 5]
negatives = [1, 5, 10]

[cbow]
dim = [200, 300, 400, 500]
window = [2, 5]
min_count = [1, 5]
negatives = [1, 5, 15]
"#;

    #[test]
    fn paper_grid_sizes() {
        let spec = SweepSpec::from_toml(PAPER_GRID).unwrap();
        assert_eq!(spec.methods, both_methods());
        let grid = expand_grid(&spec).unwrap();
        assert_eq!(grid.len(), 96);
        let sg = grid
            .iter()
            .filter(|c| c.model == ModelKind::SkipGram)
            .count();
        assert_eq!(sg, 48);
        assert_eq!(grid[0].config_id(), "sg-d200-w3-m1-n1");
        assert_eq!(grid[1].config_id(), "sg-d200-w3-m1-n5");
        assert_eq!(grid[47].config_id(), "sg-d500-w5-m5-n10");
        assert_eq!(grid[95].config_id(), "cbow-d500-w5-m5-n15");
        assert_eq!(grid[48].initial_lr, 0.05);
    }

    #[test]
    fn single_value_axes() {
        let spec = SweepSpec::from_toml(
            "corpus='c'\nsuite='s'\noutput='o'\n[sg]\ndim=[8]\nwindow=[2]\nmin_count=[1]\nnegatives=[3]\n",
        )
        .unwrap();
        let grid = expand_grid(&spec).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!(grid[0].config_id(), "sg-d8-w2-m1-n3");
    }

    #[test]
    fn empty_axis_named() {
        let spec = SweepSpec::from_toml(
            "corpus='c'\nsuite='s'\noutput='o'\n[cbow]\ndim=[8]\nwindow=[]\nmin_count=[1]\nnegatives=[3]\n",
        )
        .unwrap();
        match expand_grid(&spec) {
            Err(SweepError::EmptyAxis(name)) => assert_eq!(name, "cbow.window"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spec_errors() {
        assert!(SweepSpec::from_toml("corpus='c'").is_err());
        let no_models = SweepSpec::from_toml("corpus='c'\nsuite='s'\noutput='o'\n").unwrap();
        assert!(matches!(expand_grid(&no_models), Err(SweepError::Spec(_))));
        assert!(SweepSpec::from_toml("corpus='c'\nsuite='s'\noutput='o'\nbogus=1\n").is_err());
        let partial =
            SweepSpec::from_toml("corpus='c'\nsuite='s'\noutput='o'\n[training]\nepochs=2\n")
                .unwrap();
        assert_eq!(partial.training.epochs, 2);
        assert_eq!(partial.training.workers, 1);
    }

    #[test]
    fn relative_paths_resolve_against_spec_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.toml");
        fs::write(&path, PAPER_GRID).unwrap();
        let spec = SweepSpec::load(&path).unwrap();
        assert_eq!(spec.corpus, dir.path().join("c.txt"));
        assert_eq!(spec.output, dir.path().join("runs"));
    }

    #[test]
    fn figure_report_requires_reports() {
        let m = RunManifest::new(
            TrainingConfig::new(ModelKind::SkipGram),
            PathBuf::from("/nowhere"),
        );
        assert!(matches!(
            figure_report(&[m]),
            Err(SweepError::MissingReport { .. })
        ));
    }
}
