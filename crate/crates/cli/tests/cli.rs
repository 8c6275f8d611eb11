use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phrase_critic::pipeline::{ChunkRecord, EvalReport};
use phrase_critic::ranker::RankedRecord;

const SMALL: &str = "seed = 3\n\
[dims]\nword_dim = 4\nfeature_dim = 8\nhidden_dim = 6\nregressor_hidden = 4\nbuckets = 64\n\
[train]\nepochs = 3\nnegatives_per_image = 2\n\
[grounder.synthetic]\nfeature_dim = 8\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phrase-critic"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// synth-gen with the small config, returning the directory holding it.
fn small_bench() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let o = run(
        dir.path(),
        &["--config", "small.toml", "--out", "bench", "synth-gen", "--train-images", "8", "--test-images", "3", "--candidates", "6"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

#[test]
fn chunk_prints_one_record_per_sentence() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["chunk", "--sentence", "the red bird has a red beak and a black face"]);
    assert_eq!(code(&o), 0);
    let rec: ChunkRecord = serde_json::from_str(stdout(&o).trim()).unwrap();
    let texts: Vec<&str> = rec.phrases.iter().map(|p| p.text.as_str()).collect();
    assert_eq!(texts, ["red bird", "red beak", "black face"]);
}

#[test]
fn chunk_empty_file_succeeds_silently() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.txt"), "").unwrap();
    let o = run(dir.path(), &["chunk", "empty.txt"]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
}

#[test]
fn chunk_invalid_utf8_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), b"a red beak\n\xff\xfe\n").unwrap();
    let o = run(dir.path(), &["chunk", "bad.txt"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.txt:2"));
    assert_eq!(code(&run(dir.path(), &["chunk", "missing.txt"])), 3);
}

#[test]
fn flip_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), "a red beak and a long neck\nthis bird has a white eye\n").unwrap();
    let a = run(dir.path(), &["--seed", "5", "flip", "s.txt"]);
    let b = run(dir.path(), &["--seed", "5", "flip", "s.txt"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 2);
    let o = run(dir.path(), &["flip", "--sentence", "this is a bird"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("zero.toml"), "[train]\nepochs = 0\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", "zero.toml", "chunk", "--sentence", "x"])), 2);
    assert_eq!(code(&run(dir.path(), &["--lambda", "-1", "chunk", "--sentence", "x"])), 2);
    assert_eq!(code(&run(dir.path(), &["--grounder", "magic", "chunk", "--sentence", "x"])), 2);
    fs::write(dir.path().join("typo.toml"), "sed = 1\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", "typo.toml", "chunk", "--sentence", "x"])), 2);
    let bench = small_bench();
    let o = run(bench.path(), &["--config", "bench/run.toml", "train", "--epochs", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_rank_eval_round_trip() {
    let dir = small_bench();
    let d = dir.path();
    let cfg = ["--config", "bench/run.toml"];

    let t1 = run(d, &[&cfg[..], &["train"]].concat());
    assert_eq!(code(&t1), 0, "{}", String::from_utf8_lossy(&t1.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&t1)).unwrap();
    assert_eq!(report["holdout_images"], 3);
    assert!(report["holdout_accuracy"].is_number());
    let first = fs::read(d.join("bench/critic.json")).unwrap();
    let history = fs::read_to_string(d.join("bench/critic.history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 3);

    let t2 = run(d, &[&cfg[..], &["train"]].concat());
    assert_eq!(code(&t2), 0);
    assert_eq!(first, fs::read(d.join("bench/critic.json")).unwrap());

    let r = run(d, &[&cfg[..], &["--out", "ranked.jsonl", "rank"]].concat());
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let ranked: Vec<RankedRecord> = phrase_critic::jsonl::read_jsonl(d.join("ranked.jsonl")).unwrap();
    assert_eq!(ranked.len(), 18);
    for chunk in ranked.chunks(6) {
        let ranks: Vec<usize> = chunk.iter().map(|r| r.rank).collect();
        assert_eq!(ranks, [1, 2, 3, 4, 5, 6]);
        assert!(chunk.iter().all(|r| r.image_id == chunk[0].image_id));
    }

    let e = run(d, &[&cfg[..], &["eval", "ranked.jsonl"]].concat());
    assert_eq!(code(&e), 0);
    let report: EvalReport = serde_json::from_str(&stdout(&e)).unwrap();
    assert_eq!(report.images, 3);

    let s = run(d, &[&cfg[..], &["score"]].concat());
    assert_eq!(code(&s), 0);
    assert_eq!(stdout(&s).lines().count(), 18);

    let wide = run(d, &["--config", "bench/run.toml", "--seed", "1", "rank", "--checkpoint", "bench/critic.json"]);
    assert_eq!(code(&wide), 0);
    fs::write(d.join("wide.toml"), "").unwrap();
    let mismatch = run(d, &["--config", "wide.toml", "rank", "--checkpoint", "bench/critic.json", "--images", "bench/test_images.jsonl", "--candidates", "bench/candidates.jsonl"]);
    assert_eq!(code(&mismatch), 2, "{}", String::from_utf8_lossy(&mismatch.stderr));
}

#[test]
fn single_candidate_ranks_first_and_dangling_ids_fail() {
    let dir = small_bench();
    let d = dir.path();
    assert_eq!(code(&run(d, &["--config", "bench/run.toml", "train"])), 0);
    let image = fs::read_to_string(d.join("bench/test_images.jsonl")).unwrap();
    let first = image.lines().next().unwrap();
    let id = serde_json::from_str::<serde_json::Value>(first).unwrap()["image_id"].as_str().unwrap().to_string();
    fs::write(d.join("one.jsonl"), format!("{first}\n")).unwrap();
    fs::write(
        d.join("c.jsonl"),
        format!("{{\"image_id\":\"{id}\",\"candidate_index\":4,\"sentence\":\"a bird with a black tail\",\"log_prob\":-2.5}}\n"),
    )
    .unwrap();
    let o = run(d, &["--config", "bench/run.toml", "rank", "--images", "one.jsonl", "--candidates", "c.jsonl"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rec: RankedRecord = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!((rec.rank, rec.candidate_index), (1, 4));

    fs::write(
        d.join("c.jsonl"),
        "{\"image_id\":\"nobody\",\"candidate_index\":0,\"sentence\":\"a red beak\",\"log_prob\":-1.0}\n",
    )
    .unwrap();
    let o = run(d, &["--config", "bench/run.toml", "rank", "--images", "one.jsonl", "--candidates", "c.jsonl"]);
    assert_eq!(code(&o), 3);
}
