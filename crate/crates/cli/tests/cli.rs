use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn edl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edl"))
        .args(args)
        .env_remove("EDL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = edl(args);
    assert!(
        out.status.success(),
        "edl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "expected one error line, got {text:?}");
    text.trim_end().to_string()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn synth(dir: &Path, extra: &[&str]) {
    let d = dir.to_str().unwrap();
    let mut args = vec!["synth", "-o", d];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn zero_noise_pipeline_finds_three_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, &["--noise-std", "0"]);
    ok(&["pipeline", "-i", data.to_str().unwrap(), "-o", out.to_str().unwrap()]);

    let clusters = fs::read_to_string(out.join("clusters.csv")).unwrap();
    let mut levels: Vec<&str> = clusters.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(levels.len(), 60);
    levels.sort();
    levels.dedup();
    assert_eq!(levels, ["1", "2", "3"]);

    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let best = sweep
        .lines()
        .skip(1)
        .map(|l| {
            let (k, q) = l.split_once(',').unwrap();
            (k.parse::<usize>().unwrap(), q.parse::<f64>().unwrap())
        })
        .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
    assert_eq!(best.0, 3);
}

#[test]
fn pipeline_is_deterministic_and_equals_stage_composition() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &["--seed", "5"]);
    let d = data.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    ok(&["pipeline", "-i", d, "-o", a.to_str().unwrap(), "--seed", "5"]);
    ok(&["pipeline", "-i", d, "-o", b.to_str().unwrap(), "--seed", "5"]);
    let first = read_dir(&a);
    assert_eq!(first, read_dir(&b));

    for stage in ["ingest", "features", "select", "sweep", "cluster", "levels", "baseline", "ekg", "report"] {
        ok(&[stage, "-i", d, "-o", c.to_str().unwrap(), "--seed", "5"]);
    }
    let mut composed = read_dir(&c);
    let mut piped = first;
    piped.remove("manifest_pipeline.json");
    composed.remove("manifest_pipeline.json");
    assert_eq!(piped, composed);
}

#[test]
fn report_on_empty_clusters_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("clusters.csv"), "sample_id,cluster,level\n").unwrap();
    let before = read_dir(tmp.path());
    let out = edl(&["report", "-o", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).starts_with("error[empty_clusters]:"));
    assert_eq!(read_dir(tmp.path()), before);
}

#[test]
fn missing_input_fails_before_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = edl(&["ingest", "-i", tmp.path().to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).starts_with("error[missing_input]:"));
    assert!(!out_dir.exists());
}

#[test]
fn invalid_config_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("edl.toml");
    fs::write(&cfg, "median_window = 4\n").unwrap();
    let out = edl(&["show-config", "-c", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(
        stderr_line(&out),
        "error[invalid_config]: median_window must be a positive odd integer"
    );
    let out = edl(&["show-config", "--set", "no_such_key=1"]);
    assert!(stderr_line(&out).starts_with("error[invalid_config]:"));
}

#[test]
fn config_file_flags_and_env_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("edl.toml");
    fs::write(&cfg, "seed = 9\nknn = 4\nout_dir = \"from-file\"\n").unwrap();
    let c = cfg.to_str().unwrap();

    let shown = ok(&["show-config", "-c", c, "--set", "knn=7"]);
    assert!(shown.contains("seed = 9"));
    assert!(shown.contains("knn = 7"));
    assert!(shown.contains("out_dir = \"from-file\""));

    let env = Command::new(env!("CARGO_BIN_EXE_edl"))
        .args(["show-config", "-c", c])
        .env("EDL_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(String::from_utf8(env.stdout).unwrap().contains("out_dir = \"from-env\""));

    let flag = Command::new(env!("CARGO_BIN_EXE_edl"))
        .args(["show-config", "-c", c, "-o", "from-flag"])
        .env("EDL_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(String::from_utf8(flag.stdout).unwrap().contains("out_dir = \"from-flag\""));
}

#[test]
fn env_var_sets_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let target = tmp.path().join("env-out");
    let out = Command::new(env!("CARGO_BIN_EXE_edl"))
        .args(["synth", "--n-per-class", "3"])
        .env("EDL_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("truth.csv").exists());
}

#[test]
fn ekg_edge_list_and_inputs_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, &["--noise-rate", "0.18"]);
    let inputs = read_dir(&data);
    let (d, o) = (data.to_str().unwrap(), out.to_str().unwrap());
    ok(&["pipeline", "-i", d, "-o", o]);
    ok(&["ekg", "-i", d, "-o", o, "--format", "edge-list"]);
    let tsv = fs::read_to_string(out.join("events.tsv")).unwrap();
    assert!(tsv.starts_with("event_id\tsubject\tpredicate\tobject\tcategory\n"));
    assert!(tsv.contains("\tlasts\t"));
    assert_eq!(read_dir(&data), inputs);

    let rejections = fs::read_to_string(out.join("rejections.csv")).unwrap();
    // 60 episodes at 18% split 8:6:4: round(4.8) + round(3.6) + round(2.4) = 11.
    assert_eq!(rejections.lines().count() - 1, 11);
}
