mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{synthetic_dataset, SyntheticDataset};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eigenbio"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

struct Work {
    _dir: tempfile::TempDir,
    ds: SyntheticDataset,
    out: PathBuf,
}

impl Work {
    fn new(subjects: usize, noise: f64, seed: u64, blend: Option<(usize, usize, usize)>) -> Work {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthetic_dataset(&dir.path().join("data"), subjects, 7, noise, seed, blend);
        let out = dir.path().join("out");
        std::fs::create_dir_all(&out).unwrap();
        Work { _dir: dir, ds, out }
    }

    fn p(&self, name: &str) -> String {
        self.out.join(name).display().to_string()
    }

    fn common(&self) -> Vec<String> {
        [
            "--dataset",
            &self.ds.root.display().to_string(),
            "--face-model",
            &self.p("face.json"),
            "--ear-model",
            &self.p("ear.json"),
            "--store",
            &self.p("store.json"),
            "--face-size",
            &self.ds.face_size_arg(),
            "--ear-size",
            &self.ds.ear_size_arg(),
        ]
        .map(String::from)
        .to_vec()
    }

    fn cmd(&self, sub: &str, extra: &[&str]) -> Output {
        let mut c = bin();
        c.arg(sub).args(self.common()).args(extra);
        let o = c.output().unwrap();
        if code(&o) == 2 {
            eprintln!("{sub} stderr: {}", String::from_utf8_lossy(&o.stderr));
        }
        o
    }

    fn train_enroll(&self) {
        assert_eq!(code(&self.cmd("train", &[])), 0);
        assert_eq!(code(&self.cmd("enroll", &[])), 0);
    }

    fn sample(&self, subject: &str, modality: &str, i: usize) -> String {
        self.ds.sample_path(subject, modality, i).display().to_string()
    }
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn train_enroll_verify_exit_codes() {
    let w = Work::new(4, 0.01, 1, None);
    let o = w.cmd("train", &[]);
    assert_eq!(code(&o), 0);
    let t = text(&o);
    assert!(t.contains("face: 16 images 8x10"), "{t}");
    assert!(t.contains("ear: 16 images 6x8"), "{t}");
    assert_eq!(code(&w.cmd("enroll", &[])), 0);

    // Probes are the held-out samples 4, 5 and 6.
    let probe = |s: &str, m: &str| -> Vec<String> { (4..7).map(|i| w.sample(s, m, i)).collect() };
    let verify = |claim: &str, owner: &str| {
        let mut args = vec!["--claim".to_string(), claim.to_string(), "--face".into()];
        args.extend(probe(owner, "face"));
        args.push("--ear".into());
        args.extend(probe(owner, "ear"));
        args.extend(["--face-threshold", "0.5", "--ear-threshold", "0.5"].map(String::from));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        w.cmd("verify", &refs)
    };
    let genuine = verify("s01", "s01");
    assert_eq!(code(&genuine), 0, "{}", text(&genuine));
    let t = text(&genuine);
    assert!(t.starts_with("claimed subject: s01\n"));
    assert!(t.contains("face verdict: accept (3/3 votes, need 2)"), "{t}");
    assert!(t.ends_with("fused decision: accept\n"));
    assert_eq!(t.lines().filter(|l| l.contains(" sample ")).count(), 6);

    let impostor = verify("s02", "s01");
    assert_eq!(code(&impostor), 1);
    assert!(text(&impostor).contains("vote=reject(over-threshold)"));
    assert!(text(&impostor).ends_with("fused decision: reject\n"));

    let unknown = verify("zz", "s01");
    assert_eq!(code(&unknown), 2);

    // Two face images where three are required.
    let short = w.cmd(
        "verify",
        &[
            "--claim", "s01", "--face", &w.sample("s01", "face", 4), &w.sample("s01", "face", 5),
            "--ear", &w.sample("s01", "ear", 4), &w.sample("s01", "ear", 5), &w.sample("s01", "ear", 6),
            "--face-threshold", "1", "--ear-threshold", "1",
        ],
    );
    assert_eq!(code(&short), 2);
    assert!(String::from_utf8_lossy(&short.stderr).starts_with("error: "));

    let mismatched = w.cmd(
        "verify",
        &[
            "--claim", "s01", "--face", &w.sample("s01", "ear", 4), &w.sample("s01", "ear", 5), &w.sample("s01", "ear", 6),
            "--ear", &w.sample("s01", "ear", 4), &w.sample("s01", "ear", 5), &w.sample("s01", "ear", 6),
            "--face-threshold", "1", "--ear-threshold", "1",
        ],
    );
    // Ear images are resized to the face model's dimensions, so this is a
    // low-quality genuine claim rather than an error.
    assert_ne!(code(&mismatched), 2);
}

#[test]
fn verify_output_is_stable() {
    let w = Work::new(3, 0.01, 2, None);
    w.train_enroll();
    let args: Vec<String> = ["--claim", "s00", "--face"]
        .map(String::from)
        .into_iter()
        .chain((4..7).map(|i| w.sample("s00", "face", i)))
        .chain(std::iter::once("--ear".into()))
        .chain((4..7).map(|i| w.sample("s00", "ear", i)))
        .chain(["--face-threshold", "0", "--ear-threshold", "100", "--min-ncc", "0.5"].map(String::from))
        .collect();
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = w.cmd("verify", &refs);
    assert_eq!(code(&o), 1);
    let t = text(&o);
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 10, "{t}");
    assert_eq!(lines[0], "claimed subject: s00");
    for l in &lines[1..4] {
        assert!(l.starts_with("face sample "), "{l}");
        assert!(l.contains("quality=pass"));
        assert!(l.ends_with("vote=reject(over-threshold)"), "{l}");
    }
    assert_eq!(lines[4], "face verdict: reject (0/3 votes, need 2)");
    for l in &lines[5..8] {
        assert!(l.starts_with("ear sample ") && l.ends_with("vote=accept"), "{l}");
    }
    assert_eq!(lines[8], "ear verdict: accept (3/3 votes, need 2)");
    assert_eq!(lines[9], "fused decision: reject");
    assert_eq!(text(&w.cmd("verify", &refs)), t);
}

#[test]
fn identify_names_the_owner() {
    let w = Work::new(4, 0.01, 3, None);
    w.train_enroll();
    let mut args = vec!["--face".to_string()];
    args.extend((4..7).map(|i| w.sample("s03", "face", i)));
    args.push("--ear".into());
    args.extend((4..7).map(|i| w.sample("s03", "ear", i)));
    args.extend(["--face-threshold", "1", "--ear-threshold", "1"].map(String::from));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = w.cmd("identify", &refs);
    assert_eq!(code(&o), 0);
    assert!(text(&o).ends_with("identified: s03\n"), "{}", text(&o));

    let tight: Vec<&str> = refs[..8].iter().copied().chain(["--face-threshold", "0", "--ear-threshold", "0"]).collect();
    let o = w.cmd("identify", &tight);
    assert_eq!(code(&o), 1);
    assert!(text(&o).ends_with("identified: none\n"));
}

#[test]
fn usage_and_input_errors_exit_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["verify", "--claim", "x"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let model = dir.path().join("m.json").display().to_string();
    let o = run(&["train", "--dataset", &empty.display().to_string(), "--face-model", &model, "--ear-model", &model]);
    assert_eq!(code(&o), 2);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    assert!(!dir.path().join("m.json").exists());

    let missing = dir.path().join("missing").display().to_string();
    assert_eq!(code(&run(&["train", "--dataset", &missing, "--face-model", &model, "--ear-model", &model])), 2);

    let w = Work::new(3, 0.01, 4, None);
    assert_eq!(code(&w.cmd("train", &["--split", "3:3"])), 2);
    assert_eq!(code(&w.cmd("train", &["--min-ncc", "1.5"])), 2);
    assert_eq!(code(&w.cmd("evaluate", &["--out", &w.p("eval")])), 2, "no models yet");
}

#[test]
fn reruns_are_byte_identical_and_thread_independent() {
    let w = Work::new(4, 0.08, 5, Some((3, 0, 1)));
    let run_all = |threads: &str, tag: &str| -> Vec<Vec<u8>> {
        let with = |sub: &str, extra: &[&str]| {
            let mut c = bin();
            c.arg(sub).args(w.common()).args(extra).env("RAYON_NUM_THREADS", threads);
            let o = c.output().unwrap();
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            o
        };
        with("train", &["--seed", "9"]);
        with("enroll", &["--seed", "9"]);
        let out = w.p(tag);
        let e = with("evaluate", &["--seed", "9", "--out", &out, "--threads", threads]);
        let mut files: Vec<Vec<u8>> = ["face.json", "ear.json"].iter().map(|f| read(w.out.join(f))).collect();
        for f in ["face_curve.csv", "ear_curve.csv", "report.json", "report.txt"] {
            files.push(read(w.out.join(tag).join(f)));
        }
        files.push(e.stdout);
        files
    };
    let a = run_all("1", "a");
    let b = run_all("4", "b");
    let c = run_all("1", "c");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn evaluate_writes_reports_for_ambiguous_subject() {
    let w = Work::new(5, 0.08, 6, Some((4, 0, 1)));
    w.train_enroll();
    let dir = w.p("eval");
    let o = w.cmd("evaluate", &["--out", &dir]);
    assert_eq!(code(&o), 0);
    let t = text(&o);
    assert!(t.contains("Recognition Rate"), "{t}");
    assert!(t.contains("Multimodal Fusion"));

    let csv = String::from_utf8(read(w.out.join("eval/face_curve.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("threshold,far,frr,recognition_rate"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        assert!((r[2] + r[3] - 1.0).abs() < 1e-12);
    }
    for p in rows.windows(2) {
        assert!(p[0][0] < p[1][0] && p[0][1] <= p[1][1]);
    }

    let report: serde_json::Value = serde_json::from_slice(&read(w.out.join("eval/report.json"))).unwrap();
    let far = |k: &str| report[k]["far"].as_f64().unwrap();
    assert!(far("fused") <= far("face").min(far("ear")));
    assert_eq!(report["fused"]["counts"]["impostor_total"].as_u64(), Some(20));
    assert_eq!(report["samples_per_modality"].as_u64(), Some(3));

    let scores = w.out.join("g.txt");
    std::fs::write(&scores, "# genuine\n0.5\n1.0\n\n").unwrap();
    let imp = w.out.join("i.txt");
    std::fs::write(&imp, "2.0\n0.75\n").unwrap();
    let o = run(&[
        "sweep", "--genuine", &scores.display().to_string(), "--impostor", &imp.display().to_string(),
        "--thresholds", "0.5,1,2",
    ]);
    assert_eq!(code(&o), 0);
    let t = text(&o);
    assert!(t.starts_with("threshold,far,frr,recognition_rate\n0.5,0,0.5,0.5\n1,0.5,0,1\n2,1,0,1\n"), "{t}");
}
