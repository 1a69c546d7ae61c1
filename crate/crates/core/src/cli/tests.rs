use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bdas::{HeatmapCell, IIAHeatmap};

fn args(config: &Path, out: &Path) -> CommonArgs {
    CommonArgs { config: config.to_path_buf(), out: Some(out.to_path_buf()), seeds: None, jobs: None }
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn heatmap(values: &[f64]) -> IIAHeatmap {
    IIAHeatmap {
        hypothesis: "LeftBoundary".into(),
        cells: values
            .iter()
            .enumerate()
            .map(|(i, &v)| HeatmapCell { layer: i / 10, position: i % 10, iia: Some(v), best_seed: Some(0) })
            .collect(),
        task_acc: 0.9,
        base_rate: 0.5,
        control: (0, 0),
    }
}

#[test]
fn seed_lists() {
    assert_eq!(parse_seeds("0,1,2").unwrap(), vec![0, 1, 2]);
    assert_eq!(parse_seeds("3-5, 9").unwrap(), vec![3, 4, 5, 9]);
    for bad in ["", "a", "5-3", "1,,x"] {
        assert!(matches!(parse_seeds(bad), Err(Error::Config(_))), "{bad}");
    }
}

#[test]
fn config_errors_carry_lines() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.json", "{\n  \"hypothesis\": \"LeftBoundary\",\n  \"train\": {\n    \"batch\": 0\n  }\n}\n");
    let e = load_config(&p).unwrap_err();
    assert_eq!(e.line, Some(4), "{e}");
    assert!(e.message.starts_with("batch"));

    let p = write(dir.path(), "d.json", "{\n  \"hypothesis\": \"LeftBoundary\",\n  \"bogus\": true\n}\n");
    let e = load_config(&p).unwrap_err();
    assert_eq!(e.line, Some(3), "{e}");
    assert!(e.to_string().contains("d.json:3:"));

    let p = write(dir.path(), "e.json", "{\n  \"net\": {\"kind\": \"saved\", \"path\": \"missing/net\"}\n}\n");
    let e = load_config(&p).unwrap_err();
    assert_eq!(e.line, Some(2), "{e}");

    let p = write(dir.path(), "f.json", "{ \"hypothesis\": \"Nope\" }");
    assert!(load_config(&p).unwrap_err().message.contains("Nope"));
}

#[test]
fn report_statistics() {
    let mut g = ChaCha8Rng::seed_from_u64(3);
    let v: Vec<f64> = (0..40).map(|_| g.random_range(0.4..1.0)).collect();
    let h = heatmap(&v);
    let row = summarize("x", &h, Some(&h)).unwrap();
    assert_eq!(row.correlation, Some(1.0));
    assert_eq!(row.iia_max, v.iter().copied().fold(0.0, f64::max));

    let flat = heatmap(&[0.7; 12]);
    let row = summarize("flat", &flat, None).unwrap();
    assert_eq!(row.variance_x100, 0.0);
    assert_eq!(row.correlation, None);

    let row = summarize("pair", &heatmap(&[0.5, 0.7]), None).unwrap();
    assert!((row.variance_x100 - 1.0).abs() < 1e-12);

    assert!(matches!(summarize("x", &heatmap(&[0.5, 0.6]), Some(&flat)), Err(Error::Report(_))));
}

#[test]
fn independent_heatmaps_are_uncorrelated() {
    let mut g = ChaCha8Rng::seed_from_u64(17);
    let trials = 1000;
    let small = (0..trials)
        .filter(|_| {
            let a: Vec<f64> = (0..100).map(|_| g.random()).collect();
            let b: Vec<f64> = (0..100).map(|_| g.random()).collect();
            pearson(&a, &b).unwrap().abs() < 0.3
        })
        .count();
    assert!(small as f64 >= 0.95 * trials as f64, "{small}");
}

#[test]
fn summary_formats() {
    let rows = vec![
        SummaryRow { experiment: "a".into(), task_acc: 0.85, iia_max: 0.9, correlation: Some(1.0), variance_x100: 2.4567 },
        SummaryRow {
            experiment: "longer-name".into(),
            task_acc: f64::NAN,
            iia_max: 0.7,
            correlation: None,
            variance_x100: 0.0,
        },
    ];
    let csv = String::from_utf8(summary_csv(&rows).unwrap()).unwrap();
    assert_eq!(
        csv,
        "experiment,task_acc,iia_max,correlation,variance_x100\na,0.85,0.90,1.00,2.46\nlonger-name,NA,0.70,NA,0.00\n"
    );
    let text = summary_text(&rows);
    let widths: Vec<usize> = text.lines().map(str::len).collect();
    assert!(widths.windows(2).all(|w| w[0] == w[1]), "{text}");
}

#[test]
fn experiment_names() {
    assert_eq!(experiment_name(Path::new("runs/left/heatmap.csv")), "left");
    assert_eq!(experiment_name(Path::new("runs/bracket.csv")), "bracket");
}

const SWEEP: &str = r#"{
  "hypothesis": "LeftBoundary",
  "net": { "kind": "planted-mlp", "width": 16, "seed": 7 },
  "sites": [{ "layer": 1, "position": 1 }, { "layer": 1, "position": 0 }],
  "seeds": [0],
  "train": { "train_size": 8000 }
}"#;

#[test]
fn sweep_command_writes_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.json", SWEEP);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let a = run(&Command::Sweep(args(&cfg, &out_a))).unwrap();
    assert_eq!(a.exit_code(), 0);
    assert!(a.artifacts.contains(&"heatmap.csv".to_string()));
    assert!(a.artifacts.contains(&"manifest.json".to_string()));
    for name in &a.artifacts {
        assert!(out_a.join(name).exists(), "{name}");
    }
    let h = IIAHeatmap::load_csv(&out_a.join("heatmap.csv")).unwrap();
    let best = h.max_cell().unwrap();
    assert_eq!((best.layer, best.position), (1, 1));
    assert_eq!(h.control, (0, 0));
    assert!(h.cell(0, 0).unwrap().iia.unwrap() <= 0.55);

    run(&Command::Sweep(CommonArgs { jobs: Some(2), ..args(&cfg, &out_b) })).unwrap();
    for name in a.artifacts.iter().filter(|n| n.ends_with(".csv")) {
        assert_eq!(std::fs::read(out_a.join(name)).unwrap(), std::fs::read(out_b.join(name)).unwrap(), "{name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([0]));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    // evaluate the saved best alignment of the planted site
    let eval = write(
        dir.path(),
        "eval.json",
        r#"{
  "hypothesis": "LeftBoundary",
  "net": { "kind": "planted-mlp", "width": 16, "seed": 7 },
  "sites": [{ "layer": 1, "position": 1 }],
  "alignment": "a/alignments/L1P1"
}"#,
    );
    let out_e = dir.path().join("e");
    let done = run(&Command::Eval(args(&eval, &out_e))).unwrap();
    let rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_e.join("eval.json")).unwrap()).unwrap();
    assert!(rec["iia"].as_f64().unwrap() >= 0.99, "{}", done.message);

    let rep = write(
        dir.path(),
        "report.json",
        r#"{ "heatmaps": ["a/heatmap.csv", "b/heatmap.csv"], "reference": "a/heatmap.csv" }"#,
    );
    let out_r = dir.path().join("r");
    run(&Command::Report(args(&rep, &out_r))).unwrap();
    let summary = std::fs::read_to_string(out_r.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "experiment,task_acc,iia_max,correlation,variance_x100");
    assert!(lines[1].starts_with("a,1.00,1.00,1.00,"), "{summary}");
}

#[test]
fn invalid_config_exits_two_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &SWEEP.replace(r#""train_size": 8000"#, r#""lr_rotation": -0.001"#));
    let out = dir.path().join("out");
    let e = run(&Command::Sweep(args(&cfg, &out))).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(!out.exists());

    let cfg = write(dir.path(), "sites.json", &SWEEP.replace(r#""position": 0"#, r#""position": 5"#));
    let e = run(&Command::Sweep(args(&cfg, &out))).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
    assert!(!out.exists());

    let e = run(&Command::Train(args(&write(dir.path(), "two.json", SWEEP), &out))).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
    assert!(!out.exists());
}

#[test]
fn divergence_maps_to_exit_three() {
    assert_eq!(CliError::Run(Error::Divergence("loss".into())).exit_code(), 3);
    assert_eq!(CliError::Run(Error::Io(std::io::Error::other("x"))).exit_code(), 1);
}

#[test]
fn data_and_planted_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "task.json", r#"{ "data": { "kind": "task", "n": 50, "seed": 2 } }"#);
    let out = dir.path().join("task");
    run(&Command::GenData(args(&cfg, &out))).unwrap();
    let data = crate::target::read_task_csv(&out.join("task.csv")).unwrap();
    assert_eq!(data.len(), 50);

    let cfg = write(
        dir.path(),
        "cf.json",
        r#"{ "hypothesis": "LeftAndRightBoundary", "data": { "kind": "counterfactual", "n": 40, "seed": 2 } }"#,
    );
    let out = dir.path().join("cf");
    run(&Command::GenData(args(&cfg, &out))).unwrap();
    let text = std::fs::read_to_string(out.join("counterfactual.csv")).unwrap();
    assert_eq!(text.lines().count(), 41);

    let cfg = write(
        dir.path(),
        "planted.json",
        r#"{ "hypothesis": "MidpointDistance", "net": { "kind": "planted-mlp", "width": 12, "seed": 4 } }"#,
    );
    let out = dir.path().join("planted");
    run(&Command::BuildPlanted(args(&cfg, &out))).unwrap();
    let net = Network::load(&out.join("net")).unwrap();
    assert_eq!(net, crate::target::build_planted_net(&crate::causal::Hypothesis::MidpointDistance.model(), 12, 4).unwrap());
}
