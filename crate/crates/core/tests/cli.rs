//! The `csifm` binary: every command twice, byte-identical outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csifm::cli::load_dataset;

const CONFIG: &str = r#"
seed = 3

[simulator]
corpus_size = 8
data_scale = 0.0002

[pretrain]
epochs = 1
batch_size = 2
max_steps = 2

[train]
epochs = 1
lr = 1e-3
batch_size = 4

[finetune]
epochs = 1
max_steps = 2
"#;

struct Sandbox {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("run.toml");
        std::fs::write(&config, CONFIG).unwrap();
        Sandbox { _dir: dir, root, config }
    }

    fn run(&self, args: &[&str]) -> Output {
        let out = Command::new(env!("CARGO_BIN_EXE_csifm"))
            .args(args)
            .arg("--config")
            .arg(&self.config)
            .env("WGPT_THREADS", "1")
            .output()
            .unwrap();
        out
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(out.status.success(), "{args:?} failed: {stderr}");
        String::from_utf8(out.stdout).unwrap()
    }

    fn path(&self, rel: &str) -> String {
        self.root.join(rel).display().to_string()
    }
}

fn same_bytes(a: &Path, b: &Path) {
    let (x, y) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(x == y, "{} and {} differ", a.display(), b.display());
}

/// Every file under `a` has a byte-identical twin under `b`.
fn same_tree(a: &Path, b: &Path) {
    let mut n = 0;
    for e in std::fs::read_dir(a).unwrap() {
        let p = e.unwrap().path();
        same_bytes(&p, &b.join(p.file_name().unwrap()));
        n += 1;
    }
    assert!(n > 0, "{} is empty", a.display());
}

/// Run `args` once with `--out <rel>.a` and once with `--out <rel>.b`.
fn twice(sb: &Sandbox, rel: &str, args: &[&str]) -> (String, String) {
    let (a, b) = (sb.path(&format!("{rel}.a")), sb.path(&format!("{rel}.b")));
    for out in [&a, &b] {
        let mut full = args.to_vec();
        full.extend(["--out", out.as_str()]);
        sb.ok(&full);
    }
    (a, b)
}

fn same(a: &str, b: &str) {
    let (a, b) = (Path::new(a), Path::new(b));
    if a.is_dir() {
        same_tree(a, b);
    } else {
        same_bytes(a, b);
    }
}

#[test]
fn estimation_workflow_is_reproducible() {
    let sb = Sandbox::new();
    let (corpus, c2) = twice(&sb, "corpus", &["gen-data", "--task", "corpus"]);
    same(&corpus, &c2);
    let (enc, e2) = twice(&sb, "enc.wgck", &["pretrain", "--data", &corpus]);
    same(&enc, &e2);
    let (data, d2) = twice(&sb, "est", &["gen-data", "--task", "estimation"]);
    same(&data, &d2);

    let report = |name: &str| sb.path(name);
    let (ra, rb) = (report("train.a.csv"), report("train.b.csv"));
    let mut heads = Vec::new();
    for (r, o) in [(&ra, "head.a.wgck"), (&rb, "head.b.wgck")] {
        let o = sb.path(o);
        sb.ok(&["train-head", "--task", "estimation", "--input", "rep", "--ckpt", &enc, "--data", &data, "--out", &o, "--report", r]);
        heads.push(o);
    }
    same(&heads[0], &heads[1]);
    same(&ra, &rb);
    same(&format!("{ra}.meta"), &format!("{rb}.meta"));

    let (ea, eb) = (report("eval.a.csv"), report("eval.b.csv"));
    let first = sb.ok(&["eval", "--ckpt", &heads[0], "--data", &data, "--report", &ea]);
    sb.ok(&["eval", "--ckpt", &heads[0], "--data", &data, "--report", &eb]);
    same(&ea, &eb);
    assert!(first.contains("nmse"), "{first}");
    let csv = std::fs::read_to_string(&ea).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let (ft, f2) = twice(&sb, "ft.wgck", &["finetune", "--task", "estimation", "--ckpt", &heads[0], "--data", &data]);
    same(&ft, &f2);
    let (emb, m2) = twice(&sb, "emb.wgct", &["embed", "--ckpt", &enc, "--data", &data]);
    same(&emb, &m2);
    let (reps, _) = load_dataset(Path::new(&emb)).unwrap();
    assert_eq!(reps.dims, [64, 128, 1]);
}

#[test]
fn activity_embeddings_and_finetune_refusal() {
    let sb = Sandbox::new();
    std::fs::write(&sb.config, CONFIG.replace("data_scale = 0.0002", "data_scale = 0.005")).unwrap();
    let (data, d2) = twice(&sb, "har", &["gen-data", "--task", "har"]);
    same(&data, &d2);
    let train = format!("{data}/train.wgct");
    let (enc, e2) = twice(&sb, "har-enc.wgck", &["pretrain", "--data", &train]);
    same(&enc, &e2);
    let (emb, m2) = twice(&sb, "har-emb.wgct", &["embed", "--ckpt", &enc, "--data", &train]);
    same(&emb, &m2);
    let (reps, _) = load_dataset(Path::new(&emb)).unwrap();
    assert_eq!(reps.dims, [72, 64, 1]);
    assert_eq!(reps.samples.len(), 4);

    let out = sb.run(&["finetune", "--task", "har", "--ckpt", &enc, "--data", &data, "--out", &sb.path("x.wgck")]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("kind=unsupported"), "{stderr}");
    assert!(!Path::new(&sb.path("x.wgck")).exists());
}

#[test]
fn bad_input_exits_with_error_line() {
    let sb = Sandbox::new();
    let out = sb.run(&["embed", "--ckpt", &sb.path("missing.wgck"), "--data", &sb.path("nothing"), "--out", &sb.path("e")]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error kind=io"), "{stderr}");
    let out = sb.run(&["eval", "--task", "weather"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=invalid_config"));
}
