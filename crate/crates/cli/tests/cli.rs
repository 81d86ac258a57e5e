use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffsynth"))
        .args(args)
        .output()
        .expect("spawn diffsynth")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("diffsynth-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn tasks_lists_every_task() {
    let o = bin(&["tasks"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["len", "sum", "rev", "mapInc", "dupK"] {
        assert!(text.contains(name), "missing {name} in\n{text}");
    }
}

#[test]
fn run_then_report() {
    let dir = scratch("run");
    let out = dir.to_str().unwrap();
    let o = bin(&[
        "run", "--model", "ctpi,c", "--task", "len", "--preset", "simple-loop", "--restarts", "2", "--epochs", "20",
        "-o", out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("model,task,group,restarts,success_ratio,zero_loss_ratio"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("C+T+I,len,0,2,"));
    assert!(rows[1].starts_with("C,len,0,2,"));

    let runs = fs::read_to_string(dir.join("runs.jsonl")).unwrap();
    assert_eq!(runs.lines().count(), 4);
    for line in runs.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["task"], "len");
        assert!(v["final_loss"].is_number());
    }

    let o = bin(&["report", out]);
    assert!(o.status.success());
    let table = stdout(&o);
    assert!(table.starts_with("| task | C+T+I | C |"), "{table}");
    assert_eq!(fs::read_to_string(dir.join("report.md")).unwrap(), table);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn enumerate_finds_len_and_rejects_contradictions() {
    let dir = scratch("enum");
    let out = dir.to_str().unwrap();
    let o = bin(&["enumerate", "--model", "ctpi", "--task", "len", "--preset", "simple-loop", "--time-limit", "30", "-o", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.join("enumerate.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("C+T+I,len,0,1,"), "{csv}");
    assert!(dir.join("programs/enum_cti_len.txt").exists());

    let examples = dir.join("bad.json");
    fs::write(&examples, r#"[{"inputs": [[1, 2]], "output": 2}, {"inputs": [[1, 2]], "output": 3}]"#).unwrap();
    let o = bin(&[
        "enumerate", "--model", "ctpi", "--task", "len", "--preset", "simple-loop", "--max-nodes", "20000",
        "--examples", examples.to_str().unwrap(), "-o", out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.join("enumerate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "row replaced, not appended");
    assert!(csv.lines().nth(1).unwrap().starts_with("C+T+I,len,0,0,"), "{csv}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = scratch("bad");
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, r#"{"restart": 3}"#).unwrap();
    let o = bin(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));

    assert!(!bin(&["run", "--model", "Z", "--restarts", "1", "-o", dir.to_str().unwrap()]).status.success());
    assert!(!bin(&["run", "--task", "dupK", "-o", dir.to_str().unwrap()]).status.success());
    assert!(!bin(&["report", dir.join("missing").to_str().unwrap()]).status.success());
    fs::remove_dir_all(&dir).unwrap();
}
