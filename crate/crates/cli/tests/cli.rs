//! End-to-end checks that spawn the built binary, covering the exit-code
//! contract, the report envelope, and the csv shapes.

use std::process::{Command, Output};

fn hh_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hh-lab"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stdout_text(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout should be utf-8")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout_text(out)).expect("stdout should be a json envelope")
}

#[test]
fn hh_check_convex_pair_passes() {
    let out = hh_lab(&[
        "hh-check",
        "-f",
        "x^2",
        "-F",
        "x^3/3",
        "--interval",
        "0",
        "1",
        "--pairs",
        "1000",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {:?}", out.stderr);
    let v = stdout_json(&out);
    assert_eq!(v["report"]["violations"], 0);
    assert!(v["report"]["pairs_tested"].as_u64().unwrap() >= 1000);
    assert_eq!(v["config"]["function"], "x^2");
    assert_eq!(v["config"]["seed"], 0);
}

#[test]
fn hh_check_concave_pair_fails_with_witness() {
    let out = hh_lab(&[
        "hh-check",
        "-f",
        "0-x^2",
        "-F",
        "0-x^3/3",
        "--interval",
        "0",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert!(v["report"]["violations"].as_u64().unwrap() > 0);
    let w = &v["report"]["first_violation"];
    assert!(w.is_object(), "witness should be reported: {v}");
    // the midpoint inequality is the one a concave function breaks
    assert_eq!(w["left_holds"], false);
}

#[test]
fn integrate_affine_is_exact() {
    let out = hh_lab(&[
        "integrate",
        "-f",
        "2*x+3",
        "--interval",
        "1",
        "5",
        "--exact",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {:?}", out.stderr);
    let v = stdout_json(&out);
    assert_eq!(v["report"]["value"], "36/1");
    assert_eq!(v["report"]["exact"], true);
    assert_eq!(v["report"]["converged"], true);
}

#[test]
fn integrate_exact_flag_rejects_float_results() {
    let out = hh_lab(&[
        "integrate",
        "-f",
        "exp",
        "--interval",
        "0",
        "1",
        "--exact",
        "--tol",
        "1e-4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["report"]["exact"], false);
}

#[test]
fn integrate_csv_has_one_row_per_depth() {
    let out = hh_lab(&[
        "integrate",
        "-f",
        "square",
        "--interval",
        "0",
        "1",
        "--tol",
        "1e-3",
        "--out",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_text(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config {"));
    assert_eq!(
        lines.next().unwrap(),
        "depth,lower,upper,midpoint,trapezoid"
    );
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    for (i, row) in rows.iter().enumerate() {
        assert!(row.starts_with(&format!("{},", i + 1)), "row {row}");
        assert_eq!(row.split(',').count(), 5);
    }
}

#[test]
fn sandwich_csv_shape_and_exact_rows() {
    let out = hh_lab(&[
        "sandwich",
        "-f",
        "square",
        "--interval",
        "0",
        "1",
        "--depth",
        "4",
        "--out",
        "csv",
    ]);
    // four depths cannot shrink the gap to 1e-9, so the run reports
    // non-convergence while still emitting every row
    assert_eq!(out.status.code(), Some(1));
    let text = stdout_text(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config {"));
    assert_eq!(
        lines.next().unwrap(),
        "depth,n_cells,midpoint_sum,delta_F,trapezoid_sum,gap"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0], "1,1,1/4,1/3,1/2,1/4");
    assert_eq!(rows[3], "4,8,85/256,1/3,43/128,1/256");
}

#[test]
fn sums_random_partition_is_seeded() {
    // on [0, 1] abs is monotone, so endpoint bounds keep every cell exact
    let args = [
        "sums",
        "-f",
        "abs",
        "--interval",
        "0",
        "1",
        "--partition",
        "random:7,60",
        "--seed",
        "11",
    ];
    let first = hh_lab(&args);
    let second = hh_lab(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let v = stdout_json(&first);
    assert_eq!(v["report"]["exact"], true);
    assert_eq!(
        v["report"]["partition"]["alphas"].as_array().unwrap().len(),
        8
    );
}

#[test]
fn violation_search_finds_sine_pair() {
    let out = hh_lab(&[
        "violation",
        "-f",
        "sine",
        "-F",
        "0-cos(x)",
        "--interval",
        "0",
        "3",
        "--pairs",
        "2000",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["report"]["found"], true);
    assert!(v["report"]["witness"]["x"].is_string());
}

#[test]
fn violation_search_clears_convex_pair() {
    let out = hh_lab(&[
        "violation",
        "-f",
        "square",
        "--interval",
        "0",
        "1",
        "--pairs",
        "500",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["report"]["found"], false);
}

#[test]
fn convexity_grid_mode_reports_counterexample_side() {
    let out = hh_lab(&[
        "convexity",
        "-f",
        "sine",
        "--interval",
        "0",
        "6",
        "--mode",
        "grid",
        "--partition",
        "uniform:24",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["report"]["verdict"], "Counterexample");
    assert!(v["report"]["witness"].is_object());
}

#[test]
fn support_line_on_nonconvex_exits_one() {
    let out = hh_lab(&["support-line", "-f", "sine", "--at", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no support line"));
}

#[test]
fn usage_errors_exit_two() {
    // unknown strategy
    let out = hh_lab(&[
        "integrate",
        "-f",
        "square",
        "--interval",
        "0",
        "1",
        "--strategy",
        "bogus",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // csv for a subcommand without a trace
    let out = hh_lab(&[
        "hh-check",
        "-f",
        "square",
        "--interval",
        "0",
        "1",
        "--out",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // malformed expression
    let out = hh_lab(&["integrate", "-f", "x +* 2", "--interval", "0", "1"]);
    assert_eq!(out.status.code(), Some(2));
    // missing required interval
    let out = hh_lab(&["integrate", "-f", "square"]);
    assert_eq!(out.status.code(), Some(2));
    // reversed interval is a library precondition, reported as usage
    let out = hh_lab(&["integrate", "-f", "square", "--interval", "1", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn negative_rational_arguments_parse() {
    let out = hh_lab(&[
        "integrate",
        "-f",
        "2*x+3",
        "--interval",
        "-1/2",
        "3/2",
        "--exact",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {:?}", out.stderr);
    let v = stdout_json(&out);
    // closed form: [x^2 + 3x] from -1/2 to 3/2 = (9/4 + 9/2) - (1/4 - 3/2) = 8
    assert_eq!(v["report"]["value"], "8/1");
}
