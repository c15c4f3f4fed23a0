use std::path::Path;
use std::process::{Command, Output};

use hrnn::checkpoint::load_model;
use hrnn::data::{
    generate_synthetic, load_dataset, read_features, write_dataset, LoadOptions, Split,
    SyntheticSpec,
};
use hrnn::eval::{
    evaluate_dataset, precision_recall_f, select_key_subshots, EvalReport, SelectionRule,
};
use hrnn::{KeynessPrediction, ModelRegistry};

fn hrnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn spec(videos: usize, test_videos: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        videos,
        frames: 40,
        subshot_len: 4,
        feature_dim: 3,
        key_fraction: 0.3,
        signal: 1.0,
        seed,
        test_videos,
    }
}

/// Two training videos and one test video.
fn fixture(dir: &Path) {
    write_dataset(dir, &generate_synthetic(&spec(3, 1, 11)).unwrap()).unwrap();
}

const SMALL: &[&str] = &[
    "--subshot-len",
    "4",
    "--hidden1",
    "3",
    "--hidden2",
    "2",
    "--max-frames",
    "0",
];

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", p(data), "--out", p(out)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    hrnn(&args)
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(hrnn(&["--help"]).status.code(), Some(0));
    assert_eq!(hrnn(&["train", "--help"]).status.code(), Some(0));
    assert_eq!(hrnn(&[]).status.code(), Some(1));
    assert_eq!(hrnn(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hrnn(&["cost", "2000"]).status.code(), Some(1));
    assert_eq!(hrnn(&["cost", "2000", "0"]).status.code(), Some(1));
    assert_eq!(
        hrnn(&[
            "summarize",
            "--model",
            "m",
            "--video",
            "v",
            "--budget",
            "0.1",
            "--threshold",
            "0.5"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn cost_table() {
    let o = hrnn(&["cost", "2000", "40"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("hierarchical\t140\n"), "{text}");
    assert!(text.contains("flat\t2000\n"));
    assert!(text.contains("reduction\t93.0%\n"));
    let t = stdout(&hrnn(&["cost", "1600", "40"]));
    assert!(t.contains("hierarchical\t120\n") && t.contains("flat\t1600\n"));
    let t = stdout(&hrnn(&["cost", "40", "40"]));
    assert!(t.contains("hierarchical\t42\n") && t.contains("flat\t40\n"));
}

#[test]
fn train_writes_loadable_deterministic_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fixture(&data);
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    let o = train(&data, &a, &["--epochs", "1", "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(train(&data, &b, &["--epochs", "1", "--seed", "5"])
        .status
        .success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let (model, epoch) = load_model(&ModelRegistry::builtin(), &a).unwrap();
    assert_eq!(model.variant(), "hrnn");
    assert_eq!(epoch, Some(1));
    let log = std::fs::read_to_string(dir.path().join("a.bin.metrics.txt")).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(log.starts_with("1 "));

    let c = dir.path().join("c.bin");
    assert!(train(&data, &c, &["--epochs", "1", "--seed", "6"])
        .status
        .success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn every_variant_trains() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fixture(&data);
    for name in ModelRegistry::builtin().names() {
        let out = dir.path().join(format!("{name}.bin"));
        let o = train(
            &data,
            &out,
            &["--variant", name, "--epochs", "1", "--flat-steps", "5"],
        );
        assert!(
            o.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let (m, _) = load_model(&ModelRegistry::builtin(), &out).unwrap();
        assert_eq!(m.variant(), name);
    }
}

#[test]
fn invalid_train_flags_leave_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fixture(&data);
    let out = dir.path().join("m.bin");
    for extra in [
        &["--epochs", "0"][..],
        &["--variant", "nope"],
        &["--learning-rate", "nan"],
        &["--variant", "flat-bi-mean", "--masked"],
        &["--hidden1", "0"],
    ] {
        let o = train(&data, &out, extra);
        assert_eq!(o.status.code(), Some(1), "{extra:?}");
        assert!(!out.exists());
        assert!(!dir.path().join("m.bin.metrics.txt").exists());
    }
    let o = train(&dir.path().join("missing"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn evaluate_matches_library_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fixture(&data);
    let model_path = dir.path().join("m.bin");
    assert!(train(&data, &model_path, &["--epochs", "2"])
        .status
        .success());
    let report = dir.path().join("r.tsv");
    let o = hrnn(&[
        "evaluate",
        "--model",
        p(&model_path),
        "--data",
        p(&data),
        "--out",
        p(&report),
        "--max-frames",
        "0",
        "--split",
        "all",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let registry = ModelRegistry::builtin();
    let (model, _) = load_model(&registry, &model_path).unwrap();
    let videos = load_dataset(
        &data,
        &LoadOptions {
            grid: model.grid_spec(),
            max_frames: None,
        },
    )
    .unwrap();
    let expected = evaluate_dataset(model.as_ref(), &videos, SelectionRule::Budget(0.15)).unwrap();
    let written = std::fs::read_to_string(&report).unwrap();
    assert_eq!(written, expected.to_tsv());
    assert_eq!(stdout(&o), written);
    let parsed = EvalReport::parse_tsv(&report, &written).unwrap();
    assert_eq!(parsed.f_measure.to_bits(), expected.f_measure.to_bits());
    assert_eq!(parsed.videos.len(), 3);

    // Default split is test: one video plus the ALL row.
    let o = hrnn(&[
        "evaluate",
        "--model",
        p(&model_path),
        "--data",
        p(&data),
        "--out",
        p(&report),
        "--max-frames",
        "0",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn evaluate_missing_model_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fixture(&data);
    let report = dir.path().join("r.tsv");
    let o = hrnn(&[
        "evaluate",
        "--model",
        p(&dir.path().join("nope.bin")),
        "--data",
        p(&data),
        "--out",
        p(&report),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!report.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.bin"));

    std::fs::write(dir.path().join("junk.bin"), b"not a model").unwrap();
    let o = hrnn(&[
        "evaluate",
        "--model",
        p(&dir.path().join("junk.bin")),
        "--data",
        p(&data),
        "--out",
        p(&report),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!report.exists());
}

#[test]
fn summarize_selects_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fixture(&data);
    let model_path = dir.path().join("m.bin");
    assert!(train(&data, &model_path, &["--epochs", "1"])
        .status
        .success());
    let video = data.join("synth_0000.hrnf");
    let run = |budget: &str| {
        let o = hrnn(&[
            "summarize",
            "--model",
            p(&model_path),
            "--video",
            p(&video),
            "--max-frames",
            "0",
            "--budget",
            budget,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    let all: Vec<usize> = run("1.0").lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(all, (0..10).collect::<Vec<_>>());

    let text = run("0.3");
    assert_eq!(text, run("0.3"));
    let (model, _) = load_model(&ModelRegistry::builtin(), &model_path).unwrap();
    let preds: Vec<KeynessPrediction> = model.predict(&read_features(&video).unwrap()).unwrap();
    let want = select_key_subshots(&preds, 0.3).unwrap().selected;
    let got: Vec<usize> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(got, want);

    let out = dir.path().join("sel.txt");
    let o = hrnn(&[
        "summarize",
        "--model",
        p(&model_path),
        "--video",
        p(&video),
        "--max-frames",
        "0",
        "--budget",
        "0.3",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), text);
}

#[test]
fn gradcheck_passes_and_negative_control_fails() {
    let o = hrnn(&["gradcheck", "--instances", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("layer1.W_ix\t"));
    assert!(text.contains("head.b_p\t"));
    assert!(text.contains("PASS"));

    let o = hrnn(&["gradcheck", "--instances", "3", "--corrupt-backward"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));

    for v in ["hrnn-single", "flat-bi-sample"] {
        let o = hrnn(&["gradcheck", "--instances", "2", "--variant", v]);
        assert!(o.status.success(), "{v}: {}", stdout(&o));
    }
    assert_eq!(
        hrnn(&["gradcheck", "--variant", "nope"]).status.code(),
        Some(1)
    );
}

#[test]
fn synth_is_deterministic_and_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = |out: &Path| {
        vec![
            "synth".to_string(),
            "--out".into(),
            p(out).into(),
            "--videos".into(),
            "6".into(),
            "--test-videos".into(),
            "2".into(),
            "--frames".into(),
            "60".into(),
            "--subshot-len".into(),
            "6".into(),
            "--feature-dim".into(),
            "4".into(),
            "--seed".into(),
            "3".into(),
        ]
    };
    let run = |out: &Path| {
        let a = args(out);
        hrnn(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    assert!(run(&a).status.success());
    assert!(run(&b).status.success());
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 13);
    for n in &names {
        assert_eq!(
            std::fs::read(a.join(n)).unwrap(),
            std::fs::read(b.join(n)).unwrap()
        );
    }

    let loaded = load_dataset(&a, &LoadOptions::variable(6)).unwrap();
    let mut s = spec(6, 2, 3);
    (s.frames, s.subshot_len, s.feature_dim, s.key_fraction) = (60, 6, 4, 0.2);
    assert_eq!(loaded, generate_synthetic(&s).unwrap());
    assert_eq!(loaded.iter().filter(|v| v.split == Split::Test).count(), 2);
}

#[test]
fn oracle_classifier_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = hrnn(&[
        "synth",
        "--out",
        p(&out),
        "--videos",
        "20",
        "--test-videos",
        "5",
        "--seed",
        "7",
    ]);
    assert!(o.status.success());
    let videos = load_dataset(&out, &LoadOptions::variable(20)).unwrap();
    let mut total = 0.0;
    for v in &videos {
        // Key frames are centred on +signal: a subshot is key when its mean is positive.
        let guess: Vec<usize> = (0..v.grid.subshot_count)
            .filter(|&i| {
                let r = v.grid.frame_range(i);
                let n = (r.len() * v.sequence.dim()) as f64;
                r.map(|t| v.sequence.frame(t).iter().sum::<f64>())
                    .sum::<f64>()
                    / n
                    > 0.0
            })
            .collect();
        total += precision_recall_f(&guess, &v.key_subshots(), v.grid.subshot_count)
            .unwrap()
            .f_measure;
    }
    let f = total / videos.len() as f64;
    assert!(f >= 0.95, "{f}");
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fixture(&data);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# tiny run\nsubshot_len = 4\nhidden1 = 3\nhidden2 = 2\nmax-frames = 0\nepochs = 1\nseed = 9\n",
    )
    .unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec![
            "train",
            "--config",
            p(&cfg),
            "--data",
            p(&data),
            "--out",
            p(out),
        ];
        args.extend_from_slice(extra);
        hrnn(&args)
    };
    assert!(run(&a, &[]).status.success());
    let direct = train(&data, &b, &["--epochs", "1", "--seed", "9"]);
    assert!(direct.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    assert!(run(&c, &["--epochs", "2"]).status.success());
    let (_, epoch) = load_model(&ModelRegistry::builtin(), &c).unwrap();
    assert_eq!(epoch, Some(2));

    std::fs::write(&cfg, "epoch = 3\n").unwrap();
    assert_eq!(run(&dir.path().join("d"), &[]).status.code(), Some(1));
}
