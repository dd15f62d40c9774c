use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use xarch_embed::model::load;
use xarch_embed::Model;

fn xaem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xaem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CORPUS: &str = r#"{"id": "p1", "a": {"arch": "x86", "ins": ["push rbp", "mov rbp, rsp", "sub rsp, 16", "callq printf", "leave", "ret"]}, "b": {"arch": "arm", "ins": ["push {r11, lr}", "mov r11, sp", "sub sp, sp, #16", "bl printf", "pop {r11, pc}"]}}
{"id": "p2", "a": {"arch": "x86", "ins": ["mov eax, 1", "add eax, 2", "ret"]}, "b": {"arch": "arm", "ins": ["mov r0, #1", "add r0, r0, #2", "bx lr"]}}
{"id": "p3", "a": {"arch": "x86", "ins": ["push rbp", "mov rbp, rsp", "mov eax, 1", "ret"]}, "b": {"arch": "arm", "ins": ["push {r11, lr}", "mov r11, sp", "mov r0, #1", "bx lr"]}}
"#;

struct Fixture {
    dir: TempDir,
    corpus: PathBuf,
    model: PathBuf,
}

fn trained(extra: &[&str]) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("train.jsonl");
    fs::write(&corpus, CORPUS).unwrap();
    let model = dir.path().join("model.bin");
    let mut args = vec![
        "train",
        "--corpus",
        s(&corpus),
        "--model",
        s(&model),
        "--dim",
        "8",
        "--min-count",
        "1",
        "--negatives",
        "3",
        "--subsample",
        "0",
    ];
    if !extra.contains(&"--epochs") {
        args.extend_from_slice(&["--epochs", "3"]);
    }
    args.extend_from_slice(extra);
    let o = xaem(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    Fixture { dir, corpus, model }
}

#[test]
fn train_reports_and_saves() {
    let f = trained(&[]);
    let o = xaem(&[
        "train",
        "--corpus",
        s(&f.corpus),
        "--model",
        s(&f.model),
        "--dim",
        "8",
        "--min-count",
        "1",
        "--epochs",
        "2",
        "--subsample",
        "0",
    ]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("3 pairs, "));
    assert_eq!(lines.next(), Some("epoch\tmono_loss\tmulti_loss"));
    assert_eq!(lines.filter(|l| l.split('\t').count() == 3).count(), 2);
    let m: Model = load(&f.model).unwrap();
    assert_eq!(m.meta().epochs_completed, 2);
}

#[test]
fn sim_of_a_token_with_itself_is_one() {
    let f = trained(&[]);
    let o = xaem(&[
        "sim",
        "--model",
        s(&f.model),
        "--a",
        "x86:mov rbp,rsp",
        "--b",
        "x86:mov rbp,rsp",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "1.000000");
}

#[test]
fn unknown_token_is_a_usage_error() {
    let f = trained(&[]);
    let o = xaem(&[
        "sim",
        "--model",
        s(&f.model),
        "--a",
        "x86:nope",
        "--b",
        "x86:ret",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("x86:nope"));
}

#[test]
fn nn_lists_neighbours_in_score_order() {
    let f = trained(&[]);
    let o = xaem(&[
        "nn",
        "--model",
        s(&f.model),
        "--token",
        "arm:bl FOO",
        "--k",
        "4",
        "--arch",
        "x86",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<(String, f64)> = text
        .lines()
        .filter_map(|l| l.rsplit_once('\t'))
        .filter_map(|(t, v)| v.parse().ok().map(|v| (t.to_string(), v)))
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|(t, _)| t.starts_with("x86:")));
    assert!(rows.windows(2).all(|w| w[0].1 >= w[1].1));
}

#[test]
fn zero_epochs_equals_initialization() {
    let f = trained(&["--epochs", "0", "--seed", "9"]);
    let m: Model = load(&f.model).unwrap();
    let init = Model::init(m.vocab().clone(), 8, 9);
    assert_eq!(m.input(), init.input());
    assert!(m.output().iter().all(|&x| x == 0.0));
}

#[test]
fn training_is_reproducible() {
    let a = trained(&["--seed", "3"]);
    let b = trained(&["--seed", "3"]);
    assert_eq!(fs::read(&a.model).unwrap(), fs::read(&b.model).unwrap());
}

#[test]
fn export_reimports_to_f32() {
    let f = trained(&[]);
    let out = f.dir.path().join("vectors.txt");
    assert!(
        xaem(&["export", "--model", s(&f.model), "--output", s(&out)])
            .status
            .success()
    );
    let m: Model = load(&f.model).unwrap();
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header: Vec<usize> = lines
        .next()
        .unwrap()
        .split(' ')
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(header, [m.vocab().len(), m.dim()]);
    let mut seen = 0;
    for line in lines {
        // Tokens contain spaces, so the last `dim` fields are the vector.
        let fields: Vec<&str> = line.rsplitn(m.dim() + 1, ' ').collect();
        let token = fields[m.dim()];
        let v: Vec<f32> = fields[..m.dim()]
            .iter()
            .rev()
            .map(|x| x.parse().unwrap())
            .collect();
        assert_eq!(m.embedding(token).unwrap(), &v[..]);
        seen += 1;
    }
    assert_eq!(seen, m.vocab().len());
}

#[test]
fn preprocess_marks_records_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    let norm = dir.path().join("norm.jsonl");
    fs::write(&raw, CORPUS).unwrap();
    let o = xaem(&["preprocess", "--corpus", s(&raw), "--output", s(&norm)]);
    assert!(o.status.success());
    let text = fs::read_to_string(&norm).unwrap();
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["normalized"], true);
    }
    assert!(text.contains("\"callq FOO\""));
    assert!(text.contains("\"sub sp,sp,0\""));
    // Normalized input is passed through unchanged.
    let again = dir.path().join("again.jsonl");
    assert!(
        xaem(&["preprocess", "--corpus", s(&norm), "--output", s(&again)])
            .status
            .success()
    );
    assert_eq!(fs::read_to_string(&again).unwrap(), text);
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(xaem(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(xaem(&["frobnicate"]).status.code(), Some(1));
    let f = trained(&[]);
    let o = xaem(&[
        "train",
        "--corpus",
        s(&f.corpus),
        "--model",
        s(&f.model),
        "--dim",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.bin");
    let missing = dir.path().join("absent.jsonl");
    let o = xaem(&["train", "--corpus", s(&missing), "--model", s(&model)]);
    assert_eq!(o.status.code(), Some(2));

    let broken = dir.path().join("broken.jsonl");
    fs::write(&broken, "{\"id\": \"x\", \"a\": \n").unwrap();
    let o = xaem(&["train", "--corpus", s(&broken), "--model", s(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    let junk = dir.path().join("junk.bin");
    fs::write(&junk, b"not a model").unwrap();
    let o = xaem(&[
        "sim",
        "--model",
        s(&junk),
        "--a",
        "x86:ret",
        "--b",
        "x86:ret",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_synthetic_writes_corpus_and_planted_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("syn.jsonl");
    let planted = dir.path().join("planted.tsv");
    let o = xaem(&[
        "gen-synthetic",
        "--corpus",
        s(&corpus),
        "--planted",
        s(&planted),
        "--vocab-size",
        "10",
        "--blocks",
        "40",
        "--seed",
        "5",
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&corpus).unwrap().lines().count(), 40);
    let pairs = xarch_embed::corpus::load_instruction_pairs(&planted, &Default::default()).unwrap();
    assert!(!pairs.is_empty());
    let again = dir.path().join("syn2.jsonl");
    xaem(&[
        "gen-synthetic",
        "--corpus",
        s(&again),
        "--vocab-size",
        "10",
        "--blocks",
        "40",
        "--seed",
        "5",
    ]);
    assert_eq!(fs::read(&corpus).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn eval_commands_write_reports() {
    let f = trained(&[]);
    let pairs = f.dir.path().join("pairs.tsv");
    fs::write(&pairs, "x86\tmov eax, 1\tarm\tmov r0, #1\t1\nx86\tret\tarm\tbl printf\t-1\nx86\tud2\tarm\tnop\t1\n").unwrap();
    let roc = f.dir.path().join("roc.tsv");
    let report = f.dir.path().join("report.json");
    let o = xaem(&[
        "eval-instr",
        "--model",
        s(&f.model),
        "--pairs",
        s(&pairs),
        "--roc",
        s(&roc),
        "--report",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["positives"], 1);
    assert_eq!(rep["negatives"], 1);
    assert_eq!(rep["excluded"], 1);
    assert!(fs::read_to_string(&roc)
        .unwrap()
        .lines()
        .last()
        .unwrap()
        .starts_with("AUC\t"));

    let blocks = f.dir.path().join("blocks.jsonl");
    let labeled: String = CORPUS
        .lines()
        .enumerate()
        .map(|(i, l)| {
            format!(
                "{}, \"label\": {}}}\n",
                &l[..l.len() - 1],
                if i == 1 { -1 } else { 1 }
            )
        })
        .collect();
    fs::write(&blocks, labeled).unwrap();
    for extra in [&["--model", s(&f.model)][..], &["--baseline"][..]] {
        let mut args = vec!["eval-blocks", "--pairs", s(&blocks)];
        args.extend_from_slice(extra);
        let o = xaem(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("AUC"));
    }
}
