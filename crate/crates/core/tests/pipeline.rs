use std::fs;
use std::path::Path;

use lcg_core::config::{Config, Provider};
use lcg_core::corpus::{load_dataset, Format, InstructionRecord};
use lcg_core::embedding::{hashing_embed, write_lcge};
use lcg_core::pipeline::{self, Stage};
use lcg_core::selection::read_scores;
use lcg_core::synth::topic_corpus;
use lcg_core::ErrorKind;

fn write_corpus(dir: &Path) -> std::path::PathBuf {
    let ds = topic_corpus(300, 6, 0.3, 11).unwrap();
    let path = dir.join("data.jsonl");
    let mut text = String::new();
    for r in ds.records() {
        text.push_str(&serde_json::to_string(r).unwrap());
        text.push('\n');
    }
    fs::write(&path, text).unwrap();
    path
}

fn small_config(dataset: &Path, out: &Path) -> Config {
    let mut c = Config::from_text(
        "k = 6\nhidden = 32\nlr = 0.001\ndim = 64\ncoreset_mode = nearest_fraction\ncoreset_param = 0.2\ntau = 0.6\n",
    )
    .unwrap();
    c.dataset = Some(dataset.to_path_buf());
    c.out_dir = out.to_path_buf();
    c
}

fn artifacts(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn stages_one_by_one_equal_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_corpus(tmp.path());
    let full = small_config(&data, &tmp.path().join("full"));
    let summary = pipeline::run(&full).unwrap();
    assert_eq!(summary.records, 300);
    assert_eq!(summary.scored + summary.coreset, 300);

    let staged = small_config(&data, &tmp.path().join("staged"));
    for stage in [Stage::Embed, Stage::Cluster, Stage::Coreset, Stage::Train, Stage::Score, Stage::Select, Stage::Report] {
        pipeline::run_stage(stage, &staged).unwrap();
    }
    let a = artifacts(&full.out_dir);
    let b = artifacts(&staged.out_dir);
    assert_eq!(a.iter().map(|f| &f.0).collect::<Vec<_>>(), b.iter().map(|f| &f.0).collect::<Vec<_>>());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.1 == y.1, "{} differs", x.0);
    }
    assert!(!full.out_dir.join(pipeline::INCOMPLETE).exists());
}

#[test]
fn thread_count_does_not_change_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_corpus(tmp.path());
    let mut one = small_config(&data, &tmp.path().join("one"));
    one.sweep = true;
    let mut four = small_config(&data, &tmp.path().join("four"));
    four.sweep = true;
    lcg_core::par::with_threads(1, || pipeline::run(&one)).unwrap().unwrap();
    lcg_core::par::with_threads(4, || pipeline::run(&four)).unwrap().unwrap();
    assert_eq!(artifacts(&one.out_dir), artifacts(&four.out_dir));
}

fn text_of(r: &InstructionRecord) -> (String, String, String) {
    (r.instruction.clone(), r.input.clone(), r.output.clone())
}

#[test]
fn subset_holds_exactly_the_low_confidence_records() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_corpus(tmp.path());
    let c = small_config(&data, &tmp.path().join("out"));
    pipeline::run(&c).unwrap();
    let scores = read_scores(c.out_dir.join(pipeline::SCORES)).unwrap();
    let ds = load_dataset(&data, Format::Jsonl).unwrap();
    let expected: Vec<_> = scores
        .iter()
        .filter(|s| s.confidence < c.tau)
        .map(|s| text_of(&ds.records()[s.id]))
        .collect();
    let subset = load_dataset(c.out_dir.join(pipeline::SUBSET), Format::Jsonl).unwrap();
    let got: Vec<_> = subset.records().iter().map(text_of).collect();
    assert!(!got.is_empty());
    assert_eq!(got, expected);
    for s in &scores {
        let p = s.probabilities.as_slice();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(s.confidence, p.iter().cloned().fold(f64::MIN, f64::max));
    }
}

#[test]
fn rerun_clears_stale_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_corpus(tmp.path());
    let mut c = small_config(&data, &tmp.path().join("out"));
    c.sweep = true;
    pipeline::run(&c).unwrap();
    assert!(c.out_dir.join(pipeline::SWEEP).exists());
    c.sweep = false;
    pipeline::run(&c).unwrap();
    assert!(!c.out_dir.join(pipeline::SWEEP).exists());
    assert!(pipeline::load_report(&c.out_dir).unwrap().sweep.is_empty());
}

#[test]
fn missing_embedding_file_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_corpus(tmp.path());
    let mut c = small_config(&data, &tmp.path().join("out"));
    c.provider = Provider::Lcge;
    c.embeddings_path = Some(tmp.path().join("nope.lcge"));
    let err = pipeline::run(&c).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    assert!(err.to_string().contains("stage `embed`"), "{err}");
    let marker = fs::read_to_string(c.out_dir.join(pipeline::INCOMPLETE)).unwrap();
    assert!(marker.contains("embed"));
    assert!(!c.out_dir.join(pipeline::SUBSET).exists());
}

#[test]
fn later_stage_without_inputs_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_corpus(tmp.path());
    let c = small_config(&data, &tmp.path().join("out"));
    let err = pipeline::run_stage(Stage::Train, &c).unwrap_err();
    assert!(err.to_string().contains("stage `train`"), "{err}");
}

#[test]
fn precomputed_embeddings_are_used_and_checked() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_corpus(tmp.path());
    let ds = load_dataset(&data, Format::Jsonl).unwrap();
    let emb = hashing_embed(&ds, 64).unwrap();
    let file = tmp.path().join("emb.lcge");
    write_lcge(&emb, ds.source_digest(), &file).unwrap();

    let mut external = small_config(&data, &tmp.path().join("ext"));
    external.provider = Provider::Lcge;
    external.embeddings_path = Some(file.clone());
    pipeline::run(&external).unwrap();
    let internal = small_config(&data, &tmp.path().join("int"));
    pipeline::run(&internal).unwrap();
    assert_eq!(artifacts(&external.out_dir), artifacts(&internal.out_dir));

    write_lcge(&emb, &[7u8; 32], &file).unwrap();
    let err = pipeline::run(&external).unwrap_err();
    assert!(err.to_string().contains("stage `embed`"), "{err}");
}

#[test]
fn naive_bayes_pipeline_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_corpus(tmp.path());
    let mut c = small_config(&data, &tmp.path().join("out"));
    c.set("classifier", "mnb").unwrap();
    c.set("strategy", "topk").unwrap();
    c.set("k_per_cluster", "5").unwrap();
    let s = pipeline::run(&c).unwrap();
    assert!(s.selected <= 30 && s.selected > 0);
    let report = pipeline::load_report(&c.out_dir).unwrap();
    assert_eq!(report.histogram.iter().sum::<usize>(), s.scored);
    assert!(report.selection.selected_per_cluster.iter().all(|&n| n <= 5));
}
