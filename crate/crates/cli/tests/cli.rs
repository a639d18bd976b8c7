//! End-to-end runs of the `g2t` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use g2t::ingestion::webnlg::relexicalise;
use g2t::ingestion::{read_jsonl, write_jsonl, Example};
use g2t::toy::synthetic_corpus;
use tempfile::TempDir;

const DEPENDENCY_RECORD: &str = "(SROOT SROOT will) (will P .) (will SBJ temperature) (temperature A1 economy) \
(economy AINV the) (economy SUFFIX 's) (will VC be) (be VC take) (take A1 temperature) (take A2 from) \
(from A1 point) (point A1 vantage) (point AINV several) (take AM-ADV with) (with A1 reading) (reading A1 on) \
(on A1 trade) (trade COORD output) (output COORD housing) (housing COORD and) (and CONJ inflation) \
(take AM-MOD will) (take AM-TMP week) (week AINV this)";

fn g2t(args: &[&str]) -> Output {
    g2t_env(args, &[])
}

fn g2t_env(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_g2t"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("G2T_DATA_ROOT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn triple_block(id: usize, words: usize) -> String {
    let target = vec!["word"; words].join(" ");
    format!("# id: t{id}\nAenir | precededBy | Castle\nCastle | author | Garth Nix\n# text: {target}\n\n")
}

#[test]
fn preprocess_webnlg_emits_valid_graphs() {
    let dir = TempDir::new().unwrap();
    let text: String = (0..3).map(|i| triple_block(i, 5)).collect();
    let input = write(dir.path(), "train.txt", &text);
    let out = dir.path().join("data");
    ok(&g2t(&["preprocess", "--task", "webnlg", "--in", s(&input), "--out", s(&out)]));
    let lines = fs::read_to_string(out.join("train.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
    let examples = read_jsonl(&out.join("train.jsonl")).unwrap();
    for ex in &examples {
        assert!(ex.graph.validate().is_ok());
        // Aenir, Castle, Garth, Nix and two relation nodes.
        assert_eq!(ex.graph.node_count(), 6);
    }
    assert!(out.join("vocab.json").exists());
    let manifest = fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 1);
    assert!(manifest.contains("train.jsonl"));
}

#[test]
fn preprocess_drops_long_targets_and_reports_it() {
    let dir = TempDir::new().unwrap();
    let text = format!("{}{}{}", triple_block(0, 10), triple_block(1, 51), triple_block(2, 50));
    let input = write(dir.path(), "in.txt", &text);
    let out = dir.path().join("data");
    let stdout = ok(&g2t(&["preprocess", "--in", s(&input), "--out", s(&out)]));
    assert_eq!(fs::read_to_string(out.join("train.jsonl")).unwrap().lines().count(), 2);
    let stats: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(stats["splits"]["train"]["filtered"], 1);
    assert_eq!(stats["relations"], 2);
    assert!(stats["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("373")));
}

#[test]
fn preprocess_dependency_record() {
    let dir = TempDir::new().unwrap();
    let text = format!("{DEPENDENCY_RECORD}\ntemperature\tnum=sg\n# text: the economy 's temperature will be taken .\n");
    write(dir.path(), "dev.txt", &text);
    let out = dir.path().join("data");
    ok(&g2t(&["preprocess", "--task", "sr11", "--in", s(dir.path()), "--out", s(&out)]));
    let examples = read_jsonl(&out.join("dev.jsonl")).unwrap();
    assert_eq!(examples.len(), 1);
    let g = &examples[0].graph;
    assert_eq!(g.edges.len(), 24);
    assert_eq!(g.nodes[0].label, "SROOT");
    let temp = g.nodes.iter().find(|n| n.label == "temperature").unwrap();
    assert_eq!(temp.features, vec!["num=sg".to_string()]);
}

#[test]
fn malformed_input_is_a_data_error_with_position() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "bad.txt", "(SROOT SROOT will)\n(will P)\n");
    let out = g2t(&["preprocess", "--task", "sr11", "--in", s(&input), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bad.txt:2"), "{}", stderr(&out));
}

#[test]
fn data_root_resolves_relative_inputs() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "train.txt", &triple_block(0, 4));
    let out = dir.path().join("data");
    ok(&g2t_env(
        &["preprocess", "--in", "train.txt", "--out", s(&out)],
        &[("G2T_DATA_ROOT", dir.path())],
    ));
    assert!(out.join("train.jsonl").exists());
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "train.txt", &triple_block(0, 4));
    let out = dir.path().join("data");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".g2t.lock"), "1").unwrap();
    let res = g2t(&["preprocess", "--in", s(&input), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("in use"));
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let stdout = ok(&g2t(&["gradcheck"]));
    assert!(stdout.contains("residual-gcn") && stdout.contains("dense-gcn-copy") && stdout.contains("bilstm"));
    ok(&g2t(&["gradcheck", "--variant", "bilstm"]));
    let res = g2t(&["gradcheck", "--variant", "residual-gcn", "--corrupt-grad", "dec.out_b"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("dec.out_b"));
}

fn dataset(dir: &Path, train: &[Example], dev: &[Example], test: Option<&[Example]>) -> PathBuf {
    let data = dir.join("data");
    fs::create_dir_all(&data).unwrap();
    write_jsonl(&data.join("train.jsonl"), train).unwrap();
    write_jsonl(&data.join("dev.jsonl"), dev).unwrap();
    if let Some(t) = test {
        write_jsonl(&data.join("test.jsonl"), t).unwrap();
    }
    data
}

const SMALL: [&str; 8] = ["--layers", "1", "--skip", "none", "--hidden", "8", "--epochs", "2"];

#[test]
fn overfit_checkpoint_reproduces_targets_and_restores_placeholders() {
    let dir = TempDir::new().unwrap();
    let mut corpus = synthetic_corpus(6, 5);
    // The first target token of the first example stands for a surface string.
    let key = corpus[0].target[0].clone();
    corpus[0].relex.insert(key, "Garth Nix".into());
    let data = dataset(dir.path(), &corpus, &corpus, None);
    let run = dir.path().join("run");
    ok(&g2t(&[
        "train", "--data", s(&data), "--out", s(&run), "--layers", "2", "--hidden", "48", "--batch-size", "2",
        "--dropout", "0", "--patience", "0", "--epochs", "120", "--save-every-epoch=false", "--seed", "3",
    ]));
    let output = dir.path().join("gen/out.txt");
    ok(&g2t(&["generate", "--model", s(&run.join("best.ckpt")), "--input", s(&data.join("train.jsonl")), "--output", s(&output)]));
    let lines: Vec<String> = fs::read_to_string(&output).unwrap().lines().map(str::to_string).collect();
    let expected: Vec<String> = corpus.iter().map(|ex| relexicalise(&ex.target, &ex.relex).join(" ")).collect();
    assert_eq!(lines, expected);
    assert!(lines[0].starts_with("Garth Nix "));

    let hyp = output.to_str().unwrap();
    let report = ok(&g2t(&["evaluate", "--hyp", hyp, "--ref", s(&data.join("train.jsonl"))]));
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["bleu"], 1.0);
}

#[test]
fn generate_on_empty_input_writes_empty_output() {
    let dir = TempDir::new().unwrap();
    let corpus = synthetic_corpus(4, 1);
    let data = dataset(dir.path(), &corpus, &corpus[..2], None);
    let run = dir.path().join("run");
    ok(&g2t(&[&["train", "--data", s(&data), "--out", s(&run)], &SMALL[..]].concat()));
    let empty = write(dir.path(), "empty.jsonl", "");
    let output = dir.path().join("out/empty.txt");
    ok(&g2t(&["generate", "--model", s(&run.join("best.ckpt")), "--input", s(&empty), "--output", s(&output)]));
    assert_eq!(fs::read_to_string(&output).unwrap(), "");
    let manifest = fs::read_to_string(dir.path().join("out/manifest.jsonl")).unwrap();
    assert!(manifest.contains("empty.txt") && manifest.contains("best.ckpt"));
}

#[test]
fn generate_rejects_a_foreign_vocabulary() {
    let dir = TempDir::new().unwrap();
    let corpus = synthetic_corpus(4, 1);
    let data = dataset(dir.path(), &corpus, &corpus[..2], None);
    let run = dir.path().join("run");
    ok(&g2t(&[&["train", "--data", s(&data), "--out", s(&run)], &SMALL[..]].concat()));

    let foreign = dir.path().join("foreign");
    ok(&g2t(&["preprocess", "--in", s(&write(dir.path(), "t.txt", &triple_block(0, 3))), "--out", s(&foreign)]));
    let res = g2t(&[
        "generate", "--model", s(&run.join("best.ckpt")), "--input", s(&data.join("dev.jsonl")),
        "--output", s(&dir.path().join("o.txt")), "--vocab", s(&foreign.join("vocab.json")),
    ]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr(&res);
    assert!(err.contains("vocabulary mismatch") && err.contains("hash"), "{err}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let corpus = synthetic_corpus(4, 2);
    let data = dataset(dir.path(), &corpus, &corpus[..2], None);
    let cfg = write(
        dir.path(),
        "c.toml",
        "seed = 5\n[model]\ngcn_layers = 1\nskip = \"none\"\nhidden = 10\nembed_dim = 10\n[train]\nepochs_max = 1\nbatch_size = 2\n",
    );
    let run = dir.path().join("run");
    ok(&g2t(&["--config", s(&cfg), "train", "--data", s(&data), "--out", s(&run), "--hidden", "6"]));
    let snapshot: toml::Value = toml::from_str(&fs::read_to_string(run.join("config.toml")).unwrap()).unwrap();
    assert_eq!(snapshot["model"]["hidden"].as_integer(), Some(6));
    assert_eq!(snapshot["model"]["embed_dim"].as_integer(), Some(6));
    assert_eq!(snapshot["train"]["epochs_max"].as_integer(), Some(1));
    assert_eq!(snapshot["train"]["seed"].as_integer(), Some(5));
    assert_eq!(fs::read_to_string(run.join("log.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn repeated_training_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let corpus = synthetic_corpus(6, 4);
    let data = dataset(dir.path(), &corpus[..4], &corpus[4..], None);
    let runs = [dir.path().join("a"), dir.path().join("b")];
    for r in &runs {
        ok(&g2t(&[&["train", "--data", s(&data), "--out", s(r), "--seed", "8"], &SMALL[..]].concat()));
    }
    for name in ["best.ckpt", "epoch1.ckpt", "epoch2.ckpt", "vocab.json", "config.toml"] {
        assert_eq!(fs::read(runs[0].join(name)).unwrap(), fs::read(runs[1].join(name)).unwrap(), "{name}");
    }
}

#[test]
fn multiple_runs_report_mean_and_deviation() {
    let dir = TempDir::new().unwrap();
    let corpus = synthetic_corpus(8, 6);
    let data = dataset(dir.path(), &corpus[..5], &corpus[5..7], Some(&corpus[7..]));
    let run = dir.path().join("run");
    let stdout = ok(&g2t(&[&["train", "--data", s(&data), "--out", s(&run), "--runs", "3"], &SMALL[..]].concat()));
    assert!(stdout.contains("±") && stdout.contains("3 runs"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 3);
    for k in 0..3 {
        assert!(run.join(format!("run{k}/result.json")).exists());
    }
}

#[test]
fn ablation_table_has_single_layer_plain_row() {
    let dir = TempDir::new().unwrap();
    let corpus = synthetic_corpus(6, 7);
    let data = dataset(dir.path(), &corpus[..4], &corpus[4..], None);
    let out = dir.path().join("ablate");
    let stdout = ok(&g2t(&[
        "ablate", "--data", s(&data), "--out", s(&out), "--min-layers", "1", "--max-layers", "2",
        "--skips", "none,residual,dense", "--runs", "2", "--hidden", "6", "--epochs", "1",
    ]));
    let rows: Vec<&str> = stdout.lines().collect();
    assert!(rows[0].contains("BLEU none") && rows[0].contains("SIZE den"));
    let one = rows.iter().find(|r| r.starts_with("| 1L")).unwrap();
    assert_eq!(one.matches(" - ").count(), 4, "{one}");
    let cells: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(cells.len(), 4);
    let size = |l: u64, skip: &str| {
        cells.iter().find(|c| c["layers"] == l && c["skip"] == skip).unwrap()["parameters"].as_u64().unwrap()
    };
    assert!(size(2, "none") > size(1, "none"));
    assert!(size(2, "dense") >= size(2, "residual"));
}

#[test]
fn bad_flag_values_are_contract_violations() {
    let res = g2t(&["train", "--data", "x", "--out", "y", "--skip", "wide"]);
    assert_eq!(res.status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    let corpus = synthetic_corpus(3, 1);
    let data = dataset(dir.path(), &corpus, &corpus, None);
    let res = g2t(&["train", "--data", s(&data), "--out", s(&dir.path().join("r")), "--lr", "-1"]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
}
