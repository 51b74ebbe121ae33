use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn ppg_qa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppg-qa"))
        .args(args)
        .output()
        .expect("spawn ppg-qa")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Small corpus with train features and an rf model, built once.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn path(&self, name: &str) -> String {
        s(&self.root.join(name))
    }
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let f = Fixture { _dir: dir, root };
        let run = |args: &[&str]| {
            let out = ppg_qa(args);
            assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
        };
        run(&[
            "synth",
            "--n-good",
            "20",
            "--n-bad",
            "40",
            "--seed",
            "3",
            "--out",
            &f.path("corpus"),
        ]);
        for split in ["train", "test"] {
            run(&[
                "features",
                "--manifest",
                &f.path("corpus/manifest.csv"),
                "--fs",
                "128",
                "--split",
                split,
                "--out",
                &f.path(&format!("{split}.csv")),
            ]);
        }
        run(&[
            "train",
            "--features",
            &f.path("train.csv"),
            "--algo",
            "rf",
            "--n-trees",
            "20",
            "--out",
            &f.path("rf.json"),
        ]);
        f
    })
}

#[test]
fn help_and_version_exit_zero() {
    let out = ppg_qa(&["--help"]);
    assert_eq!(code(&out), 0);
    let out = ppg_qa(&["--version"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("model format_version 1"));
    let out = ppg_qa(&["features", "--help"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("segment_id,path,raw_label,split"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&ppg_qa(&[])), 1);
    let out = ppg_qa(&[
        "train",
        "--features",
        "x.csv",
        "--algo",
        "bogus",
        "--out",
        "m.json",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bogus"));
}

#[test]
fn missing_manifest_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let missing = s(&dir.path().join("nope.csv"));
    let out = ppg_qa(&[
        "features",
        "--manifest",
        &missing,
        "--fs",
        "128",
        "--out",
        &s(&dir.path().join("f.csv")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains(&missing), "{}", stderr(&out));
    assert!(!dir.path().join("f.csv").exists());
}

#[test]
fn invalid_arguments_write_nothing() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("preds.csv");
    let out = ppg_qa(&[
        "predict",
        "--model",
        &f.path("rf.json"),
        "--features",
        &f.path("test.csv"),
        "--threshold",
        "1.5",
        "--out",
        &s(&out_path),
    ]);
    assert_eq!(code(&out), 1);
    assert!(!out_path.exists());

    let out = ppg_qa(&[
        "synth",
        "--out",
        &s(&dir.path().join("missing/parent/corpus")),
        "--n-good",
        "1",
        "--n-bad",
        "1",
    ]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));

    let out = ppg_qa(&[
        "predict",
        "--model",
        &f.path("rf.json"),
        "--features",
        &f.path("test.csv"),
        "--out",
        &s(&dir.path().join("no/such/dir/p.csv")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unsupported_model_version_is_rejected() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(f.path("rf.json")).unwrap();
    let bumped = dir.path().join("v2.json");
    fs::write(
        &bumped,
        text.replacen("\"format_version\": 1", "\"format_version\": 2", 1),
    )
    .unwrap();
    let out = ppg_qa(&["importance", "--model", &s(&bumped)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains('2'), "{}", stderr(&out));
}

#[test]
fn pipeline_outputs_and_sidecars() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| s(&dir.path().join(name));

    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.path("rf.json")).unwrap()).unwrap();
    assert_eq!(model["format_version"], 1);
    assert_eq!(model["kind"], "random_forest");
    assert_eq!(model["importances"].as_array().unwrap().len(), 27);
    assert!(Path::new(&f.path("rf.json.run.json")).exists());

    let out = ppg_qa(&[
        "predict",
        "--model",
        &f.path("rf.json"),
        "--features",
        &f.path("test.csv"),
        "--out",
        &p("preds.csv"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let preds = fs::read_to_string(p("preds.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("segment_id,label,score,reason"));
    assert_eq!(lines.count(), 9);

    let out = ppg_qa(&[
        "evaluate",
        "--model",
        &f.path("rf.json"),
        "--manifest",
        &f.path("corpus/manifest.csv"),
        "--out",
        &p("report.json"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p("report.json")).unwrap()).unwrap();
    let cm = &report["confusion"];
    let total: u64 = ["tp", "fp", "fn", "tn"]
        .iter()
        .map(|k| cm[k].as_u64().unwrap())
        .sum();
    assert_eq!(total, 9);
    assert_eq!(report["positive_class"], "good");
    assert!(report["threshold_sweep"].as_array().unwrap().len() >= 20);

    let out = ppg_qa(&[
        "importance",
        "--model",
        &f.path("rf.json"),
        "--out",
        &p("imp.csv"),
    ]);
    assert_eq!(code(&out), 0);
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    assert_eq!(table, fs::read_to_string(p("imp.csv")).unwrap());
    let total: f64 = table
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn gbdt_trains_from_the_same_features() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let model = s(&dir.path().join("gbdt.json"));
    let out = ppg_qa(&[
        "train",
        "--features",
        &f.path("train.csv"),
        "--algo",
        "gbdt",
        "--n-rounds",
        "10",
        "--out",
        &model,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(v["kind"], "gradient_boosted");
    assert_eq!(v["trees"].as_array().unwrap().len(), 10);
}

#[test]
fn filter_and_detect_single_segment() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let seg = f.path("corpus/segments/seg_000000.csv");
    let filtered = s(&dir.path().join("filtered.csv"));
    let out = ppg_qa(&["filter", "--in", &seg, "--fs", "128", "--out", &filtered]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let n_in = fs::read_to_string(&seg)
        .unwrap()
        .lines()
        .filter(|l| l.parse::<f64>().is_ok())
        .count();
    let n_out = fs::read_to_string(&filtered)
        .unwrap()
        .lines()
        .filter(|l| l.parse::<f64>().is_ok())
        .count();
    assert_eq!(n_in, n_out);

    let markers = s(&dir.path().join("markers.json"));
    let out = ppg_qa(&["detect", "--in", &filtered, "--fs", "128", "--out", &markers]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&markers).unwrap()).unwrap();
    assert!(v["peaks"].as_array().unwrap().len() > 20);
    assert!(!v["troughs"].as_array().unwrap().is_empty());

    let out = ppg_qa(&[
        "filter", "--in", &seg, "--fs", "128", "--low", "12", "--high", "10", "--out", &filtered,
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unreadable_segment_is_a_runtime_error() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    fs::create_dir_all(corpus.join("segments")).unwrap();
    let manifest = fs::read_to_string(f.path("corpus/manifest.csv")).unwrap();
    fs::write(corpus.join("manifest.csv"), &manifest).unwrap();
    for entry in fs::read_dir(f.root.join("corpus/segments")).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), corpus.join("segments").join(entry.file_name())).unwrap();
    }
    let victim = manifest
        .lines()
        .skip(1)
        .find(|l| l.ends_with(",test"))
        .and_then(|l| l.split(',').next())
        .unwrap()
        .to_string();
    fs::write(corpus.join(format!("segments/{victim}.csv")), "value\n0.1\nabc\n").unwrap();

    let report = dir.path().join("report.json");
    let out = ppg_qa(&[
        "evaluate",
        "--model",
        &f.path("rf.json"),
        "--manifest",
        &s(&corpus.join("manifest.csv")),
        "--out",
        &s(&report),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains(&victim), "{}", stderr(&out));
    assert!(!report.exists());
}

#[test]
fn synth_refuses_a_non_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("keep.txt"), "x").unwrap();
    let out = ppg_qa(&["synth", "--n-good", "1", "--n-bad", "1", "--out", &s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert_eq!(fs::read_to_string(dir.path().join("keep.txt")).unwrap(), "x");
}
