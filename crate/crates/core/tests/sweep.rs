mod support;

use std::fs;
use std::path::Path;

use embedlab::analogy::{load_error_records, parse_suite};
use embedlab::sweep::{
    evaluate_and_save, expand_grid, figure_report, load_manifests, run_sweep, RunStatus,
    SweepError, SweepSpec,
};
use embedlab::{train, EmbeddingSpace, EvalReport, Method, TextCorpus, TokenizerConfig};

fn toy_spec(dir: &Path, grid: &str) -> SweepSpec {
    let synthetic = support::generate(20_000, 5);
    fs::write(dir.join("corpus.txt"), &synthetic.text).unwrap();
    fs::write(dir.join("suite.txt"), &synthetic.suite).unwrap();
    let text = format!(
        "corpus = 'corpus.txt'\nsuite = 'suite.txt'\noutput = 'runs'\n[training]\nepochs = 2\nseed = 3\n{grid}"
    );
    let path = dir.join("sweep.toml");
    fs::write(&path, text).unwrap();
    SweepSpec::load(&path).unwrap()
}

const GRID: &str = "[sg]\ndim = [8, 12]\nwindow = [2]\nmin_count = [1]\nnegatives = [2]\n\
                    [cbow]\ndim = [8]\nwindow = [2]\nmin_count = [1]\nnegatives = [3]\n";

#[test]
fn sweep_matches_standalone_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = toy_spec(dir.path(), GRID);
    let manifests = run_sweep(&spec, false).unwrap();
    assert_eq!(manifests.len(), 3);
    let suite = parse_suite(&spec.suite).unwrap();
    let corpus = TextCorpus::new(&spec.corpus, TokenizerConfig::default());
    let scratch = tempfile::tempdir().unwrap();
    for (m, config) in manifests.iter().zip(expand_grid(&spec).unwrap()) {
        assert_eq!(m.status, RunStatus::Evaluated, "{:?}", m.error);
        assert_eq!(m.config, config);
        assert!(m.is_complete(&spec.methods));
        for f in [
            "vectors.txt",
            "vectors.vecbin",
            "vocab.tsv",
            "train.log.tsv",
            "manifest.json",
        ] {
            assert!(m.dir.join(f).is_file(), "{f}");
        }
        let model = train::<f32>(&corpus, &config).unwrap();
        let space = EmbeddingSpace::from_model(&model);
        let saved = EmbeddingSpace::<f32>::load(&m.dir.join("vectors.vecbin")).unwrap();
        assert_eq!(space.vectors(), saved.vectors());
        for method in spec.method_configs() {
            let out = scratch.path().join(&m.config_id);
            fs::create_dir_all(&out).unwrap();
            let (_, paths) =
                evaluate_and_save(&space, &suite, &method, &m.config_id, &out).unwrap();
            let standalone = EvalReport::load_json(&out.join(&paths.json)).unwrap();
            assert_eq!(standalone, m.report(method.method).unwrap());
            assert_eq!(
                load_error_records(&out.join(&paths.errors)).unwrap(),
                load_error_records(&m.dir.join(&paths.errors)).unwrap()
            );
        }
    }
    let report = figure_report(&load_manifests(&spec.output).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert_eq!(report.to_tsv().lines().count(), 7);
}

#[test]
fn resume_skips_finished_configs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = toy_spec(dir.path(), GRID);
    let first = run_sweep(&spec, false).unwrap();
    let manifest_text =
        |id: &str| fs::read_to_string(spec.output.join(id).join("manifest.json")).unwrap();
    let before: Vec<String> = first.iter().map(|m| manifest_text(&m.config_id)).collect();

    // break one run: its cosmul report disappears
    let broken = &first[1];
    let cosmul = broken.report(Method::CosMul).unwrap();
    fs::remove_file(broken.dir.join("eval-cosmul.json")).unwrap();
    let second = run_sweep(&spec, true).unwrap();
    assert_eq!(second.len(), 3);
    for (i, m) in second.iter().enumerate() {
        assert_eq!(m.status, RunStatus::Evaluated);
        if i == 1 {
            assert!(m.dir.join("eval-cosmul.json").is_file());
            assert_eq!(m.report(Method::CosMul).unwrap(), cosmul);
        } else {
            assert_eq!(
                manifest_text(&m.config_id),
                before[i],
                "{} was rerun",
                m.config_id
            );
        }
    }
}

#[test]
fn failing_config_does_not_stop_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let grid = "[sg]\ndim = [8]\nwindow = [2]\nmin_count = [1, 1000000000]\nnegatives = [2]\n";
    let spec = toy_spec(dir.path(), grid);
    let manifests = run_sweep(&spec, false).unwrap();
    assert_eq!(manifests[0].status, RunStatus::Evaluated);
    assert_eq!(manifests[1].status, RunStatus::Failed);
    assert!(manifests[1]
        .error
        .as_deref()
        .unwrap()
        .contains("vocabulary"));
    assert!(manifests[1].artifacts.vectors_text.is_none());
    let err = figure_report(&manifests).unwrap_err();
    assert!(
        matches!(err, SweepError::MissingReport { ref config_id, .. } if config_id == "sg-d8-w2-m1000000000-n2")
    );
}

#[test]
fn unwritable_output_fails_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = toy_spec(dir.path(), GRID);
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "not a directory").unwrap();
    spec.output = blocker.join("runs");
    assert!(matches!(
        run_sweep(&spec, false),
        Err(SweepError::Unwritable { .. })
    ));
}

#[test]
fn missing_corpus_fails_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = toy_spec(dir.path(), GRID);
    spec.corpus = dir.path().join("absent.txt");
    assert!(matches!(
        run_sweep(&spec, false),
        Err(SweepError::Corpus { .. })
    ));
    assert!(fs::read_dir(&spec.output).unwrap().next().is_none());
}
