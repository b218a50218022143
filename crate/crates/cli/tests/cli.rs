use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tod-instruct"));
    c.env_remove("TOD_INSTRUCT_OUT");
    c
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name).display().to_string()
}

fn ic_manifest(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "task = \"IC\"\nontology = {:?}\ndata = {:?}\ndomains = [\"bank\"]\nseeds = [0, 1, 2]\nmodes = [\"STD\", \"PE\"]\n\
         prompts = [{{ root = \"intent\", expression = \"question\" }}]\noutput_dir = \"run\"\n{extra}\n\
         [plan]\nstrategy = \"k_per_label\"\nk_or_pct = 5\n",
        fixture("intent_ontology.json"),
        fixture("intents.jsonl"),
    );
    let path = dir.join("ic.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn cell_dirs(run_dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![run_dir.join("cells")];
    while let Some(d) = stack.pop() {
        if d.join("cell.json").exists() {
            out.push(d);
            continue;
        }
        for e in fs::read_dir(&d).unwrap() {
            stack.push(e.unwrap().path());
        }
    }
    out.sort();
    out
}

#[test]
fn compile_score_report_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = ic_manifest(tmp.path(), "");
    let o = run(bin().arg("compile").arg(&manifest));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("6 cells, 0 failed"));
    // relative output_dir resolves against the manifest
    let run_dir = tmp.path().join("run");
    let cells = cell_dirs(&run_dir);
    assert_eq!(cells.len(), 6);

    for cell in &cells {
        for split in ["test", "validation"] {
            let preds = tmp.path().join("preds.jsonl");
            let o = run(bin().arg("predict-gold").arg(cell).args(["--split", split, "--out"]).arg(&preds));
            assert!(o.status.success(), "{}", stderr(&o));
            let o = run(bin().arg("score").arg(cell).arg(&preds).args(["--split", split]));
            assert!(o.status.success(), "{}", stderr(&o));
            let scores: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
            assert_eq!(scores["metrics"]["accuracy"], 1.0);
        }
    }
    assert!(cells[0].join("scores.json").exists() && cells[0].join("scores.validation.json").exists());

    let o = run(bin().arg("report").arg(&run_dir));
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("intent(Q)") && text.contains("100.00±0.00"), "{text}");
    assert!(text.contains("best (validation)"));

    let o = run(bin().arg("report").arg(&run_dir).arg("--json"));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert_eq!(report["primary_metric"], "accuracy");
}

#[test]
fn output_env_and_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = ic_manifest(tmp.path(), "");
    let env_dir = tmp.path().join("from-env");
    let o = run(bin().arg("compile").arg(&manifest).env("TOD_INSTRUCT_OUT", &env_dir));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_dir.join("run.json").exists());
    assert!(!tmp.path().join("run").exists());

    let flag_dir = tmp.path().join("from-flag");
    let o = run(bin().arg("compile").arg(&manifest).arg("--out").arg(&flag_dir).env("TOD_INSTRUCT_OUT", &env_dir));
    assert!(o.status.success());
    assert!(flag_dir.join("run.json").exists());
    assert_eq!(fs::read(env_dir.join("run.json")).unwrap(), fs::read(flag_dir.join("run.json")).unwrap());
}

#[test]
fn invalid_manifest_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dup = tmp.path().join("dup.toml");
    let text = fs::read_to_string(ic_manifest(tmp.path(), "")).unwrap().replace("seeds = [0, 1, 2]", "seeds = [1, 1]");
    fs::write(&dup, text).unwrap();
    let o = run(bin().arg("compile").arg(&dup));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));

    let garbage = tmp.path().join("garbage.toml");
    fs::write(&garbage, "task = \"IC\"\nnonsense = 1\n").unwrap();
    assert_eq!(run(bin().arg("compile").arg(&garbage)).status.code(), Some(2));
    assert_eq!(run(bin().arg("compile").arg(tmp.path().join("absent.toml"))).status.code(), Some(2));
}

#[test]
fn input_and_cell_failures_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(ic_manifest(tmp.path(), "")).unwrap().replace(&fixture("intents.jsonl"), "missing.jsonl");
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, text).unwrap();
    let o = run(bin().arg("ingest").arg(&bad));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.jsonl"), "{}", stderr(&o));

    // a prompt with an unknown placeholder fails every PE cell; STD cells still compile
    let catalog = tmp.path().join("catalog.json");
    fs::write(
        &catalog,
        r#"[{"task": "IC", "root": "intent", "expression": "question", "text": "Question: {bogus}?"},
            {"task": "IC", "root": "intent", "expression": "declarative", "text": "The intent is"}]"#,
    )
    .unwrap();
    let m = ic_manifest(tmp.path(), &format!("prompt_catalog = {:?}", catalog.display().to_string()));
    let o = run(bin().arg("compile").arg(&m));
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("6 cells, 3 failed"));
    assert!(stderr(&o).contains("bogus"));
    let run_dir = tmp.path().join("run");
    assert!(run_dir.join("cells/std/std/full/seed-0/test.jsonl").exists());
    assert!(!run_dir.join("cells/pe/intent-q/full/seed-0/test.jsonl").exists());
}

#[test]
fn sample_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = ic_manifest(tmp.path(), "");
    let a = run(bin().arg("sample").arg(&manifest).args(["--seed", "4"]));
    let out = tmp.path().join("split.jsonl");
    let b = run(bin().arg("sample").arg(&manifest).args(["--seed", "4", "--out"]).arg(&out));
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, fs::read(&out).unwrap());
    assert_eq!(stdout(&a).lines().count(), 1 + 75 + 75);
    let c = run(bin().arg("sample").arg(&manifest).args(["--seed", "5"]));
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn ablate_expands_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = ic_manifest(tmp.path(), "");
    let out = tmp.path().join("ablated.toml");
    let o = run(bin().arg("ablate").arg(&manifest).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("no-description") && text.contains("\"CINS\""), "{text}");
    assert!(text.contains("output_dir = \"run\""));

    let o = run(bin().arg("compile").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    // STD 1 + PE 1 + CINS 1 variant x 5 ablations, per seed
    assert!(stdout(&o).contains("21 cells, 0 failed"), "{}", stdout(&o));
}

#[test]
fn score_lists_missing_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = ic_manifest(tmp.path(), "");
    assert!(run(bin().arg("compile").arg(&manifest)).status.success());
    let cell = tmp.path().join("run/cells/std/std/full/seed-0");
    let o = run(bin().arg("predict-gold").arg(&cell));
    let gold = stdout(&o);
    let mut lines: Vec<&str> = gold.lines().collect();
    let dropped: Vec<String> = lines
        .drain(..2)
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect();
    let preds = tmp.path().join("partial.jsonl");
    fs::write(&preds, lines.join("\n")).unwrap();
    let o = run(bin().arg("score").arg(&cell).arg(&preds));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("2 missing") && dropped.iter().all(|id| err.contains(id.as_str())), "{err}");
}
