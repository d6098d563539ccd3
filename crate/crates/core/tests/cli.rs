use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use digmm::dataio::{read_csv, read_model};
use digmm::detector::Detector;
use digmm::eval::quantile;
use digmm::{AnyModel, Dataset64};

fn digmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_digmm"))
        .args(args)
        .output()
        .unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

fn synth(dir: &Path, seed: u64) -> String {
    let out = p(dir, &format!("synth{seed}.csv"));
    let o = digmm(&[
        "synth",
        "--preset",
        "paper-like",
        "--seed",
        &seed.to_string(),
        "--out",
        &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn load_data(path: &str) -> Dataset64 {
    read_csv(fs::File::open(path).unwrap()).unwrap()
}

fn load_model(path: &str) -> AnyModel<f64> {
    read_model(fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn synth_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let a = fs::read(synth(dir.path(), 7)).unwrap();
    let b = digmm(&["synth", "--preset", "paper-like", "--seed", "7"]);
    assert!(b.status.success());
    assert_eq!(a, b.stdout);
    let data = load_data(&p(dir.path(), "synth7.csv"));
    assert_eq!(data.n(), 800);
    let labels = data.labels().unwrap();
    assert!(labels.iter().any(|l| l.is_normal()) && labels.iter().any(|l| !l.is_normal()));
}

#[test]
fn synth_bad_spec_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = p(dir.path(), "spec.json");
    fs::write(&spec, "{\"clusters\": 3}").unwrap();
    assert_eq!(digmm(&["synth", "--spec", &spec]).status.code(), Some(2));
}

#[test]
fn fit_digmm_and_detect() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 3);
    let model = p(dir.path(), "m.json");
    let o = digmm(&[
        "fit",
        "--data",
        &data,
        "--detector",
        "digmm",
        "--m",
        "3",
        "--nu",
        "0.1",
        "--seed",
        "3",
        "--out",
        &model,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(
        stderr.contains("log-likelihood") && stderr.contains("Converged"),
        "{stderr}"
    );
    let m = load_model(&model);
    assert_eq!(m.dim(), 2);

    let verdicts = p(dir.path(), "v.csv");
    assert!(
        digmm(&["detect", "--model", &model, "--data", &data, "--out", &verdicts])
            .status
            .success()
    );
    let text = fs::read_to_string(&verdicts).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,score,label"));
    let rows: Vec<(usize, f64, String)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().unwrap(),
                f[1].parse().unwrap(),
                f[2].to_owned(),
            )
        })
        .collect();
    let ds = load_data(&data);
    assert_eq!(rows.len(), ds.n());
    for (k, (i, score, label)) in rows.iter().enumerate() {
        assert_eq!(*i, k);
        assert_eq!(label == "normal", *score > 0.0);
    }
    let labels = ds.labels().unwrap();
    let train: Vec<_> = rows
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.is_normal())
        .collect();
    let n = train.len() as f64;
    let flagged = train.iter().filter(|(r, _)| r.2 == "anomalous").count() as f64;
    assert!(flagged / n <= 0.1 + 2.0 / n, "{}", flagged / n);
}

#[test]
fn fit_flag_validation() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1);
    let base = ["fit", "--data", data.as_str(), "--m", "2"];
    let run = |extra: &[&str]| digmm(&[&base[..], extra].concat()).status.code();
    assert_eq!(run(&["--detector", "digmm", "--nu", "0"]), Some(1));
    assert_eq!(run(&["--detector", "digmm", "--nu", "1.5"]), Some(1));
    assert_eq!(run(&["--detector", "digmm"]), Some(1));
    assert_eq!(run(&["--detector", "threshold-gmm"]), Some(1));
    assert_eq!(
        run(&[
            "--detector",
            "threshold-gmm",
            "--log-threshold",
            "-7",
            "--target-fpr",
            "0.1"
        ]),
        Some(1)
    );
    // ν·n < 1 on 400 training rows
    assert_eq!(run(&["--detector", "digmm", "--nu", "0.001"]), Some(3));
    assert_eq!(
        digmm(&[
            "fit",
            "--data",
            "/nonexistent.csv",
            "--detector",
            "digmm",
            "--m",
            "2",
            "--nu",
            "0.1"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn target_fpr_threshold_matches_quantile() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 2);
    let o = digmm(&[
        "fit",
        "--data",
        &data,
        "--detector",
        "threshold-gmm",
        "--m",
        "2",
        "--target-fpr",
        "0.05",
        "--seed",
        "2",
    ]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let lt = json["log_threshold"].as_f64().unwrap();
    let model: AnyModel<f64> = read_model(o.stdout.as_slice()).unwrap();
    let train = load_data(&data).normal_only();
    let lds: Vec<f64> = train
        .points()
        .iter_rows()
        .map(|x| model.gmm().mixture_log_pdf(x).unwrap())
        .collect();
    assert_eq!(quantile(&lds, 0.05), Some(lt));
}

#[test]
fn detect_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 4);
    let model = p(dir.path(), "m.json");
    assert!(digmm(&[
        "fit",
        "--data",
        &data,
        "--detector",
        "threshold-gmm",
        "--m",
        "2",
        "--log-threshold",
        "-7",
        "--out",
        &model
    ])
    .status
    .success());
    let wide = p(dir.path(), "wide.csv");
    fs::write(&wide, "x1,x2,x3\n0,0,0\n").unwrap();
    assert_eq!(
        digmm(&["detect", "--model", &model, "--data", &wide])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        digmm(&[
            "grid",
            "--model",
            &model,
            "--xmin",
            "-1",
            "--xmax",
            "1",
            "--ymin",
            "-1",
            "--ymax",
            "1",
            "--resolution",
            "1"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn eval_reports_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 5);
    let test = synth(dir.path(), 6);
    let (dm, bm) = (p(dir.path(), "d.json"), p(dir.path(), "b.json"));
    assert!(digmm(&[
        "fit",
        "--data",
        &data,
        "--detector",
        "digmm",
        "--m",
        "2",
        "--nu",
        "0.1",
        "--out",
        &dm
    ])
    .status
    .success());
    assert!(digmm(&[
        "fit",
        "--data",
        &data,
        "--detector",
        "threshold-gmm",
        "--m",
        "2",
        "--log-threshold",
        "-7",
        "--out",
        &bm
    ])
    .status
    .success());
    let o = digmm(&["eval", "--model", &dm, "--model", &bm, "--data", &test]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    let mut keys: Vec<&str> = lines[0]["report"]
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    keys.sort();
    assert_eq!(
        keys,
        [
            "auc",
            "best_threshold_accuracy",
            "fpr_at_zero",
            "n_eval",
            "tpr_at_zero"
        ]
    );
    let (d, b) = (&lines[0]["report"], &lines[1]["report"]);
    assert_eq!(lines[0]["model_kind"], "digmm");
    assert_eq!(lines[1]["model_kind"], "threshold_gmm");
    let bal = |r: &serde_json::Value| {
        0.5 * (r["tpr_at_zero"].as_f64().unwrap() + 1.0 - r["fpr_at_zero"].as_f64().unwrap())
    };
    let c = &lines[2]["comparison"];
    assert_eq!(
        c["auc_delta"].as_f64().unwrap(),
        d["auc"].as_f64().unwrap() - b["auc"].as_f64().unwrap()
    );
    assert!((c["balanced_accuracy_delta"].as_f64().unwrap() - (bal(d) - bal(b))).abs() < 1e-15);
    assert!(
        (c["ceiling_delta"].as_f64().unwrap()
            - (bal(d) - b["best_threshold_accuracy"].as_f64().unwrap()))
        .abs()
            < 1e-15
    );

    let unlabeled = p(dir.path(), "u.csv");
    fs::write(&unlabeled, "x1,x2\n0,0\n").unwrap();
    assert_eq!(
        digmm(&["eval", "--model", &dm, "--data", &unlabeled])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn eval_separable_case_has_unit_auc() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "sep.csv");
    let mut text = String::from("x1,x2,label\n");
    for i in 0..20 {
        let t = i as f64 * 0.3;
        text.push_str(&format!("{},{},1\n", t.cos() * 0.5, t.sin() * 0.7));
        text.push_str(&format!("{},{},0\n", 20.0 + t, -20.0 - t));
    }
    fs::write(&data, text).unwrap();
    let model = p(dir.path(), "m.json");
    assert!(digmm(&[
        "fit",
        "--data",
        &data,
        "--detector",
        "threshold-gmm",
        "--m",
        "1",
        "--log-threshold",
        "-10",
        "--out",
        &model
    ])
    .status
    .success());
    let o = digmm(&["eval", "--model", &model, "--data", &data]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["auc"], 1.0);
}

#[test]
fn grid_default_resolution_and_dimension_check() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 8);
    let model = p(dir.path(), "m.json");
    assert!(digmm(&[
        "fit",
        "--data",
        &data,
        "--detector",
        "threshold-gmm",
        "--m",
        "2",
        "--log-threshold",
        "-7",
        "--out",
        &model
    ])
    .status
    .success());
    let o = digmm(&[
        "grid", "--model", &model, "--xmin", "-20", "--xmax", "12", "--ymin", "-14", "--ymax", "14",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 200 * 200 + 1);

    let three = p(dir.path(), "three.csv");
    let mut t = String::from("x1,x2,x3\n");
    for i in 0..30 {
        let v = i as f64;
        t.push_str(&format!(
            "{},{},{}\n",
            v.sin(),
            (2.0 * v).cos(),
            (0.3 * v).sin() * 2.0
        ));
    }
    fs::write(&three, t).unwrap();
    let m3 = p(dir.path(), "m3.json");
    assert!(digmm(&[
        "fit",
        "--data",
        &three,
        "--detector",
        "threshold-gmm",
        "--m",
        "1",
        "--log-threshold",
        "-5",
        "--out",
        &m3
    ])
    .status
    .success());
    assert_eq!(
        digmm(&[
            "grid", "--model", &m3, "--xmin", "-1", "--xmax", "1", "--ymin", "-1", "--ymax", "1"
        ])
        .status
        .code(),
        Some(2)
    );
}
