use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

fn jupad(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jupad"))
        .args(args)
        .current_dir(dir)
        .env("JUPAD_THREADS", "2")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The stderr error record, parsed.
fn error_record(o: &Output) -> serde_json::Value {
    let line = stderr(o)
        .lines()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no error record in {:?}", stderr(o)))
        .to_string();
    serde_json::from_str(&line).unwrap()
}

/// Two well separated classes in two features, deterministic.
fn write_toy(dir: &Path) {
    let mut text = String::from("a,b,class\n");
    for i in 0..600 {
        let t = (i as f64 * 0.618_033_988_75).fract();
        let u = (i as f64 * 0.414_213_562_37).fract();
        let (cls, shift) = if i % 2 == 0 { ("A", -2.0) } else { ("B", 2.0) };
        writeln!(text, "{},{},{cls}", shift + 1.6 * (t - 0.5), -shift + 1.6 * (u - 0.5)).unwrap();
    }
    std::fs::write(dir.join("toy.csv"), text).unwrap();
}

const RUN: &str = r#"
[data]
path = "toy.csv"
label = "class"
columns = [{ name = "a" }, { name = "b" }, { name = "class", kind = "discrete" }]

[dictionary.default]
recipe = "grid"
spacing = 1.0
families = [{ family = "gaussian", variance = 0.5 }]

[fit]
rank = 2
strict_deterministic = true

[output]
model = "model.json"
trace = "trace.csv"
"#;

#[test]
fn fit_then_classify_emits_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path());
    std::fs::write(dir.path().join("run.toml"), RUN).unwrap();
    let input_before = std::fs::read(dir.path().join("toy.csv")).unwrap();

    let o = jupad(dir.path(), &["fit", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("stage,block,iteration,objective\n"));

    let o = jupad(dir.path(), &["classify", "--model", "model.json", "--data", "toy.csv", "--predictions", "pred.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "dataset,rank,split_seed,accuracy,zero_density_fraction");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[1], "2");
    let acc: f64 = row[3].parse().unwrap();
    assert!(acc > 0.95, "{acc}");
    let preds = std::fs::read_to_string(dir.path().join("pred.csv")).unwrap();
    assert_eq!(preds.lines().count(), 601);

    std::fs::write(dir.path().join("pts.csv"), "a,b,class\n-2,2,A\n2,-2,B\n").unwrap();
    let o = jupad(dir.path(), &["eval-density", "--model", "model.json", "--points", "pts.csv", "-o", "dens.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dens = std::fs::read_to_string(dir.path().join("dens.csv")).unwrap();
    for line in dens.lines().skip(1) {
        let v: f64 = line.split(',').next_back().unwrap().parse().unwrap();
        assert!(v > 0.0);
    }

    let o = jupad(dir.path(), &["sample", "--model", "model.json", "--count", "50", "--seed", "3"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(s.lines().next().unwrap(), "a,b,class");
    assert_eq!(s.lines().count(), 51);
    assert!(s.lines().skip(1).all(|l| l.ends_with(",A") || l.ends_with(",B")));

    let o = jupad(dir.path(), &["inspect", "--data", "toy.csv", "--discrete", "class", "--bins", "4"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 4 + 4 + 2);

    assert_eq!(std::fs::read(dir.path().join("toy.csv")).unwrap(), input_before);
}

#[test]
fn strict_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path());
    std::fs::write(dir.path().join("run.toml"), RUN).unwrap();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        assert!(jupad(dir.path(), &["fit", "--config", "run.toml"]).status.success());
        let model = std::fs::read(dir.path().join("model.json")).unwrap();
        let trace = std::fs::read(dir.path().join("trace.csv")).unwrap();
        let o = jupad(dir.path(), &["classify", "--model", "model.json", "--data", "toy.csv"]);
        outputs.push((model, trace, o.stdout));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn synth_table_has_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
sizes = [500, 2000]
trials = 2
seed = 3

[spec]
rank = 5
dims = [{ family = "laplacian_mix" }, { family = "laplacian_mix" }, { family = "laplacian_mix" }, { family = "laplacian_mix" }]

[run]
dictionary = { mode = "oracle" }
test_points = 200
fit = { rank = 5, strict_deterministic = true }
"#;
    std::fs::write(dir.path().join("synth.toml"), config).unwrap();
    let o = jupad(dir.path(), &["synth", "--config", "synth.toml", "-o", "table.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "n_samples,mean_d,std_d,trials,infinite_trials,wall_time_s");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("500,") && lines[2].starts_with("2000,"));
    assert!(lines[1].ends_with(",NA"));
    let o = jupad(dir.path(), &["synth", "--config", "synth.toml", "-o", "table.csv"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("table.csv")).unwrap(), first);
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = jupad(dir.path(), &["fit", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let rec = error_record(&o);
    assert_eq!(rec["kind"], "usage");
    assert_eq!(rec["exit_code"], 1);
    assert!(stderr(&o).contains("Usage:"));
    let o = jupad(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = jupad(dir.path(), &["sample", "--model", "missing.json", "--count", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["kind"], "io");

    write_toy(dir.path());
    std::fs::write(dir.path().join("run.toml"), RUN.replace("rank = 2", "rank = 0")).unwrap();
    let o = jupad(dir.path(), &["fit", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["kind"], "config");

    std::fs::write(dir.path().join("run.toml"), format!("{RUN}\nsurprise = 1\n")).unwrap();
    assert_eq!(jupad(dir.path(), &["fit", "--config", "run.toml"]).status.code(), Some(2));

    std::fs::write(dir.path().join("bad.json"), "{\"format\": \"jupad-model\"").unwrap();
    let o = jupad(dir.path(), &["sample", "--model", "bad.json", "--count", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["kind"], "corrupt_model");
    assert_eq!(stderr(&o).lines().filter(|l| l.starts_with('{')).count(), 1);

    let o = Command::new(env!("CARGO_BIN_EXE_jupad"))
        .args(["sample", "--model", "bad.json", "--count", "3"])
        .current_dir(dir.path())
        .env("JUPAD_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_rank_search_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path());
    let config = RUN.replace("[output]", "[selection]\ncandidates = [40, 50]\n\n[output]");
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    let o = jupad(dir.path(), &["fit", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(error_record(&o)["kind"], "all_candidates_failed");
}
