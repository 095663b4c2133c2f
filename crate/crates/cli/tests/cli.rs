use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qqual(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qqual"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn validate_bundled_corpus_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qqual(tmp.path(), &["validate-data"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    for line in [
        "HallA_E12-06-114: 1080 points",
        "HallA_E07-007: 404 points",
        "HallA_E00-110: 468 points",
        "HallB_e1-DVCS1: 1933 points",
        "total: 3885 points",
    ] {
        assert!(s.contains(line), "{s}");
    }
}

#[test]
fn validate_reports_bad_and_empty_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rows = String::from("experiment,E_beam,Q2,xB,t,phi,F,sigma_F\n");
    for k in 0..6 {
        rows.push_str(&format!("X,5.75,2.0,1.2,-0.3,{},1.0,0.1\n", 30 * k));
    }
    write(tmp.path(), "bad.csv", &rows);
    let o = qqual(tmp.path(), &["validate-data", "bad.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("x_B = 1.2 outside (0, 1)"));

    write(tmp.path(), "empty.csv", "");
    let o = qqual(tmp.path(), &["validate-data", "empty.csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("total: 0 points"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no data rows"));

    write(tmp.path(), "garbled.csv", "a,b\n1,2\n");
    assert_eq!(
        qqual(tmp.path(), &["validate-data", "garbled.csv"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn configuration_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "typo.json", r#"{"qualify": {"epohc": 3}}"#);
    assert_eq!(
        qqual(tmp.path(), &["qualify", "--config", "typo.json"])
            .status
            .code(),
        Some(2)
    );
    write(
        tmp.path(),
        "bad.json",
        r#"{"dvcs": {"campaign": {"checkpoints": [4, 2]}}}"#,
    );
    assert_eq!(
        qqual(tmp.path(), &["dvcs", "--config", "bad.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        qqual(tmp.path(), &["no-such-command"]).status.code(),
        Some(2)
    );
    let o = Command::new(env!("CARGO_BIN_EXE_qqual"))
        .args(["validate-data"])
        .env("QQUAL_THREADS", "zero")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    write(
        tmp.path(),
        "missing.json",
        r#"{"qualify": {"refit_ledger": "nowhere.csv"}}"#,
    );
    assert_eq!(
        qqual(tmp.path(), &["qualify", "--config", "missing.json"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bench_class_smoke_and_rerun_is_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "c.json",
        r#"{"bench_class": {"base": {"ensemble": 1, "cdnn": {"epochs": 0}, "qdnn": {"epochs": 0}}}}"#,
    );
    let o = qqual(
        tmp.path(),
        &["bench-class", "--config", "c.json", "--out", "a"],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let a = tmp.path().join("a");
    for f in [
        "ledger.csv",
        "report.md",
        "resolved_config.json",
        "table1.csv",
    ] {
        assert!(a.join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(a.join("table1.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5, "{table}");
    assert!(lines.iter().all(|l| l.split(',').count() == 5));
    let report = fs::read_to_string(a.join("report.md")).unwrap();
    assert!(report.contains("0.8144") && report.contains("0.8151"));

    let o = qqual(
        tmp.path(),
        &[
            "bench-class",
            "--config",
            "a/resolved_config.json",
            "--out",
            "b",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    for f in ["ledger.csv", "table1.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn qualify_reports_centered_row_and_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qqual(tmp.path(), &["qualify", "--out", "q"]);
    assert_eq!(o.status.code(), Some(0));
    let q = tmp.path().join("q");
    let report = fs::read_to_string(q.join("report.md")).unwrap();
    assert!(report.contains("α = 0.0101"));
    assert!(report.contains("PASS: refit"));
    let ledger = fs::read_to_string(q.join("ledger.csv")).unwrap();
    let centered = ledger.lines().find(|l| l.starts_with("centered,")).unwrap();
    let xi_hat: f64 = centered.split(',').nth(7).unwrap().parse().unwrap();
    assert_eq!(xi_hat, 0.0);
    assert_eq!(ledger.lines().count(), 8);
}

#[test]
fn bench_reg_grid_and_refit() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "r.json",
        r#"{"bench_reg": {"n_points": 40, "checkpoints": [1, 2, 50]}}"#,
    );
    let o = qqual(
        tmp.path(),
        &["bench-reg", "--config", "r.json", "--out", "r"],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = tmp.path().join("r");
    write(
        tmp.path(),
        "tiny.json",
        r#"{"bench_reg": {"n_points": 20}}"#,
    );
    assert_eq!(
        qqual(
            tmp.path(),
            &["bench-reg", "--config", "tiny.json", "--out", "t"]
        )
        .status
        .code(),
        Some(3)
    );
    let svgs = fs::read_dir(&r)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".svg")
        })
        .count();
    assert_eq!(svgs, 18);
    let mut rdr = csv::Reader::from_path(r.join("ledger.csv")).unwrap();
    let mut rows = 0;
    let mut reference = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let f = |k: usize| rec[k].parse::<f64>().unwrap();
        assert_eq!(f(6), f(4) / f(5) - 1.0);
        if &rec[7] == "true" {
            reference += 1;
            assert_eq!((&rec[0], f(1), &rec[3]), ("cos4x", 1.0, "50"));
        }
        rows += 1;
    }
    assert_eq!((rows, reference), (54, 1));

    write(
        tmp.path(),
        "q.json",
        r#"{"qualify": {"refit_ledger": "r/ledger.csv", "self_check": false}}"#,
    );
    let o = qqual(tmp.path(), &["qualify", "--config", "q.json", "--out", "q"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(tmp.path().join("q/refit_table.json").exists());
}

#[test]
fn dvcs_pipeline_emits_maps_and_statistics() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "d.json",
        r#"{"dvcs": {"campaign": {"ensemble": 1, "checkpoints": [2, 4, 6]}, "resolution": 40}}"#,
    );
    let o = qqual(tmp.path(), &["dvcs", "--config", "d.json", "--out", "d"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let d = tmp.path().join("d");
    for l in ["0.5", "1", "2"] {
        let svg = fs::read_to_string(d.join(format!("map_lambda_{l}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("#d62728") || svg.contains("#000000"));
        assert!(d.join(format!("xi_grid_lambda_{l}.csv")).exists());
    }
    let stats = fs::read_to_string(d.join("stats.csv")).unwrap();
    let self_rows: Vec<&str> = stats
        .lines()
        .filter(|l| l.starts_with("self_check"))
        .collect();
    assert_eq!(self_rows.len(), 3);
    assert!(self_rows.iter().all(|l| l.ends_with(",1")));
    assert!(
        fs::read_to_string(d.join("ledger.csv"))
            .unwrap()
            .lines()
            .count()
            > 300
    );
}

#[test]
fn gen_data_writes_round_trippable_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qqual(tmp.path(), &["gen-data", "--out", "g"]);
    assert_eq!(o.status.code(), Some(0));
    let o = qqual(
        tmp.path(),
        &["validate-data", "g/dvcs_corpus.csv", "--full"],
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read_dir(tmp.path().join("g/regression"))
            .unwrap()
            .count(),
        18
    );
    write(
        tmp.path(),
        "q.json",
        r#"{"qualify": {"inputs": ["g/regression/cos4x_s1.csv"]}}"#,
    );
    let o = qqual(tmp.path(), &["qualify", "--config", "q.json", "--out", "q"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(tmp.path().join("q/ledger.csv"))
        .unwrap()
        .contains("cos4x_s1.csv"));
}
