use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tattn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tattn")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("bench.cfg");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = "variants = tensor_attention_linear, diag_fast\nn_values = 16, 32\nd = 4\nrepetitions = 3\nwarmup = 0\n";

#[test]
fn verify_passes_and_reports_the_trace_line() {
    let out = tattn(&["verify"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("tr(T) = ‖QKᵀ‖²_F"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn negative_control_fails_by_name() {
    let out = tattn(&["verify", "--negative-control"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL\tnegative control"));
}

#[test]
fn demo_defaults_and_interaction() {
    let out = tattn(&["demo"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("output norm"));
    let out = tattn(&["demo", "--mechanism", "tensor-interaction", "--n", "4", "--d", "8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn demo_rejects_unknown_mechanism() {
    let out = tattn(&["demo", "--mechanism", "flash"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bench_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let checksums = |name: &str| {
        let csv = dir.path().join(name);
        let out = tattn(&["bench", "--config", &cfg, "--threads", "1", "--out", csv.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("median_ns"));
        let text = fs::read_to_string(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("variant,n,d,seed,rep,wall_nanos,checksum"));
        let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
        assert_eq!(rows.len(), 2 * 2 * 3);
        assert!(text.ends_with('\n'));
        rows.into_iter()
            .map(|r| (r[0].clone(), r[1].clone(), r[6].clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(checksums("a.csv"), checksums("b.csv"));
}

#[test]
fn bench_jsonl_flag_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}format = csv\n"));
    let out = tattn(&["bench", "--config", &cfg, "--format", "jsonl"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v.as_object().unwrap().len(), 7);
        assert!(v["wall_nanos"].as_u64().unwrap() > 0);
    }
}

#[test]
fn bench_config_errors_exit_2_with_field() {
    let dir = tempfile::tempdir().unwrap();
    for (body, field) in [
        ("n_values = 32, 16\n", "n_values"),
        ("repetitions = 1\n", "repetitions"),
        ("variants = nope\n", "variants"),
    ] {
        let cfg = write_config(dir.path(), body);
        let out = tattn(&["bench", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(field), "{body}");
    }
    let out = tattn(&["bench", "--config", "/definitely/missing.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}
