use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn bhplus(args: &[&str]) -> Output {
    bhplus_env(args, &[])
}

fn bhplus_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bhplus"));
    cmd.args(args).env_remove("BHPLUS_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Exit code and a single diagnostic line with the given prefix.
fn assert_failure(o: &Output, code: i32, prefix: &str) {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(prefix), "{err}");
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn analyze_matches_golden_outputs() {
    let f = fixtures();
    for (stem, test, filter) in [
        ("methylation_fixture", "bt", "methylation"),
        ("hiv_fixture", "fet", "hiv"),
        ("safety_fixture", "fet", "none"),
    ] {
        let input = f.join(format!("{stem}.csv"));
        let input = input.to_str().unwrap();
        let base = [
            "analyze", "--input", input, "--test", test, "--alpha", "0.05", "--filter", filter,
        ];
        let rows = bhplus(&base);
        assert!(rows.status.success(), "{}", stderr(&rows));
        assert_eq!(
            rows.stdout,
            std::fs::read(f.join(format!("{stem}.golden.csv"))).unwrap()
        );

        let mut json_args = base.to_vec();
        json_args.extend(["--format", "json"]);
        let json = bhplus(&json_args);
        assert_eq!(
            json.stdout,
            std::fs::read(f.join(format!("{stem}.golden.json"))).unwrap()
        );
    }
}

#[test]
fn analyze_writes_files_and_is_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixtures().join("methylation_fixture.csv");
    let run = |workers: &str, tag: &str| {
        let rows = dir.path().join(format!("rows-{tag}.csv"));
        let summary = dir.path().join(format!("summary-{tag}.json"));
        let o = bhplus_env(
            &[
                "analyze",
                "--input",
                input.to_str().unwrap(),
                "--test",
                "bt",
                "--alpha",
                "0.1",
                "--output",
                rows.to_str().unwrap(),
                "--summary",
                summary.to_str().unwrap(),
            ],
            &[("BHPLUS_WORKERS", workers)],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(o.stdout.is_empty());
        (
            std::fs::read(rows).unwrap(),
            std::fs::read(summary).unwrap(),
        )
    };
    let one = run("1", "a");
    let many = run("4", "b");
    assert_eq!(one, many);
    let summary: serde_json::Value = serde_json::from_slice(&one.1).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["hypotheses"], 200);
}

#[test]
fn pvalue_selection_blanks_unrequested_columns() {
    let input = fixtures().join("hiv_fixture.csv");
    let o = bhplus(&[
        "analyze",
        "--input",
        input.to_str().unwrap(),
        "--test",
        "fet",
        "--alpha",
        "0.05",
        "--pvalue",
        "mid",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("id,p_conv,p_mid,reject_bh,reject_bhplus,reject_midpbhplus")
    );
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 6);
        assert!(cols[3].is_empty() && cols[4].is_empty());
        assert!(cols[5] == "true" || cols[5] == "false");
    }
}

#[test]
fn tsv_input_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "t.tsv", "id\tc1\tc2\na\t0\t9\nb\t4\t4\n");
    let o = bhplus(&[
        "analyze", "--input", &input, "--test", "bt", "--alpha", "0.05",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.contains("a,0.00390625,0.001953125,true,true,true"),
        "{text}"
    );
}

#[test]
fn usage_errors_exit_1() {
    let input = fixtures().join("hiv_fixture.csv");
    let input = input.to_str().unwrap();
    for args in [
        vec![
            "analyze", "--input", input, "--test", "fet", "--alpha", "1.5",
        ],
        vec![
            "analyze", "--input", input, "--test", "chi2", "--alpha", "0.05",
        ],
        vec!["analyze", "--test", "fet", "--alpha", "0.05"],
        vec![
            "simulate", "--test", "fet", "--pi0", "0.5", "--alpha", "0.05", "--n", "10", "--reps",
            "0",
        ],
        vec![
            "simulate", "--test", "bt", "--pi0", "0.5", "--alpha", "0.05", "--n", "10",
        ],
        vec![
            "simulate", "--test", "fet", "--pi0", "0.333", "--alpha", "0.05", "--n", "10",
        ],
        vec!["simulate", "--test", "fet", "--grid", "--pi0", "0.5"],
        vec!["frobnicate"],
        vec![],
    ] {
        assert_failure(&bhplus(&args), 1, "error[usage]: ");
    }
    let o = bhplus_env(
        &[
            "compare", "--input", input, "--test", "fet", "--alpha", "0.05",
        ],
        &[("BHPLUS_WORKERS", "0")],
    );
    assert_failure(&o, 1, "error[usage]: ");
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let empty = write(d, "empty.csv", "id,c1,c2\n");
    let o = bhplus(&[
        "analyze", "--input", &empty, "--test", "bt", "--alpha", "0.05",
    ]);
    assert_failure(&o, 2, "error[data]: no hypotheses");
    let o = bhplus(&["support", "--input", &empty, "--test", "bt"]);
    assert_failure(&o, 2, "error[data]: no hypotheses");

    let cases = [
        ("missing.csv", None, "fet"),
        ("over.csv", Some("id,c1,c2,n1,n2\na,5,1,3,3\n"), "fet"),
        ("negative.csv", Some("id,c1,c2\na,-1,2\n"), "bt"),
        ("nocol.csv", Some("id,c1\na,1\n"), "bt"),
        ("notrials.csv", Some("id,c1,c2\na,1,2\n"), "fet"),
    ];
    for (name, body, test) in cases {
        let path = match body {
            Some(b) => write(d, name, b),
            None => d.join(name).to_str().unwrap().to_owned(),
        };
        let o = bhplus(&[
            "analyze", "--input", &path, "--test", test, "--alpha", "0.05",
        ]);
        assert_failure(&o, 2, "error[data]: ");
    }
}

#[test]
fn simulate_is_deterministic_across_worker_counts() {
    let args = [
        "simulate", "--test", "fet", "--pi0", "0.5", "--alpha", "0.05", "--n", "10", "--reps",
        "300", "--seed", "1",
    ];
    let a = bhplus_env(&args, &[("BHPLUS_WORKERS", "1")]);
    let b = bhplus_env(&args, &[("BHPLUS_WORKERS", "3")]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);

    let text = String::from_utf8(a.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let procedure = &r[col("procedure")];
        if procedure == "MidPBH+" {
            continue;
        }
        let fdr: f64 = r[col("fdr")].parse().unwrap();
        let sd: f64 = r[col("fdp_sd")].parse().unwrap();
        assert!(fdr <= 0.05 + 3.0 * sd / 300f64.sqrt(), "{procedure}: {fdr}");
    }
}

#[test]
fn simulate_grid_covers_every_cell() {
    let o = bhplus(&["simulate", "--grid", "--test", "bt", "--reps", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 5 * 4 * 3 * 3);
}

#[test]
fn support_dumps_single_record() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "one.csv", "id,c1,c2\nx,0,2\n");
    let o = bhplus(&["support", "--input", &input, "--test", "bt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        String::from_utf8(o.stdout).unwrap(),
        "kind,id,point,cdf\ntest,x,0.5,0.5\ntest,x,1.0,1.0\nmax,,0.5,0.5\nmax,,1.0,1.0\n"
    );
}

#[test]
fn support_grid_is_bounded_by_union_of_points() {
    let input = fixtures().join("methylation_fixture.csv");
    let o = bhplus(&[
        "support",
        "--input",
        input.to_str().unwrap(),
        "--test",
        "bt",
        "--filter",
        "methylation",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mut points: Vec<f64> = v["tests"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|t| {
            t["points"]
                .as_array()
                .unwrap()
                .iter()
                .map(|p| p.as_f64().unwrap())
        })
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let grid = v["max_cdf"]["grid"].as_array().unwrap();
    assert!(!grid.is_empty() && grid.len() <= points.len());
}

#[test]
fn compare_reports_condition() {
    let dir = tempfile::tempdir().unwrap();
    let flat = write(dir.path(), "flat.csv", "id,c1,c2\na,3,3\nb,7,7\nc,0,0\n");
    let o = bhplus(&[
        "compare", "--input", &flat, "--test", "bt", "--alpha", "0.05",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((v["r_cp"].as_u64(), v["r_mp"].as_u64()), (Some(0), Some(0)));
    assert_eq!(v["condition_holds"], true);

    let input = fixtures().join("methylation_fixture.csv");
    let o = bhplus(&[
        "compare",
        "--input",
        input.to_str().unwrap(),
        "--test",
        "bt",
        "--alpha",
        "0.05",
        "--filter",
        "methylation",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["condition_holds"], v["mid_at_least_conventional"]);
    assert_eq!(v["hypotheses"], 107);
}
