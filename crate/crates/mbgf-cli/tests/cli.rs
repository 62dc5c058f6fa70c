use std::process::{Command, Output};

use mbgf::taylor::{taylor_partial_sum, ModelPoles};

fn mbgf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbgf")).args(args).output().unwrap()
}

fn summary(out: &Output, key: &str) -> String {
    let err = String::from_utf8_lossy(&out.stderr);
    err.lines()
        .find_map(|l| l.trim().strip_prefix(&format!("{key}: ")).map(str::to_string))
        .unwrap_or_else(|| panic!("no {key} in {err}"))
}

#[test]
fn exact_roots_of_the_dimer() {
    let out = mbgf(&["roots", "--hubbard", "1,2", "--exact"]);
    assert!(out.status.success());
    let dev: f64 = summary(&out, "electron_sum_rule_deviation").parse().unwrap();
    assert!(dev <= 1e-7);
    let dev: f64 = summary(&out, "orbital_sum_rule_deviation").parse().unwrap();
    assert!(dev <= 1e-7);
    assert_eq!(summary(&out, "distinct_roots"), summary(&out, "fci_poles"));
    let e: f64 = summary(&out, "fci_energy").parse().unwrap();
    assert!((e - (1.0 - 5f64.sqrt())).abs() < 1e-10);
}

#[test]
fn csv_header_and_columns() {
    let out = mbgf(&["tda", "--cycles", "2", "--hubbard", "1,2", "--omega-step", "0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# mbgf "));
    assert!(lines[1].starts_with("# config: {"));
    assert!(lines[2].starts_with("# input-sha256: "));
    assert_eq!(lines[3], "omega,curve_0,curve_1,curve_2,curve_3");
}

#[test]
fn json_schema_version() {
    let out = mbgf(&["scgf2", "--hubbard", "1,2", "--cycles", "1", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["cycles"][0]["pole_count"], 8);
    assert!(v["cycles"][1]["pole_count"].as_u64().unwrap() > 8);
}

#[test]
fn model_column_is_the_partial_sum() {
    let out = mbgf(&["model", "--orders", "0,1,2,19", "--omega-step", "0.25"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = text.lines().skip_while(|l| l.starts_with('#'));
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "order_19").unwrap();
    let p = ModelPoles::standard();
    let mut n = 0;
    for line in rows {
        let cells: Vec<&str> = line.split(',').collect();
        let w: f64 = cells[0].parse().unwrap();
        let s = taylor_partial_sum(&p, w, 19).unwrap();
        assert_eq!(cells[col], format!("{s:.11e}"));
        n += 1;
    }
    assert!(n > 20);
}

#[test]
fn third_order_leaves_a_satellite_bracket_empty() {
    let out = mbgf(&[
        "pt", "--order", "3", "--hubbard", "1,4,4", "--site-energies", "1", "--orbital", "4",
        "--omega-step", "0.25",
    ]);
    assert!(out.status.success());
    let empty: usize = summary(&out, "empty_satellite_brackets").parse().unwrap();
    assert!(empty >= 1);
}

#[test]
fn exit_codes_by_category() {
    assert_eq!(mbgf(&["roots", "--hubbard", "1,2,3"]).status.code(), Some(3));
    assert_eq!(mbgf(&["roots"]).status.code(), Some(3));
    assert_eq!(mbgf(&["roots", "--hubbard", "1,2", "--order", "12"]).status.code(), Some(3));
    assert_eq!(mbgf(&["roots", "--hubbard", "1,2", "--max-sector-dim", "2"]).status.code(), Some(4));
    assert_eq!(mbgf(&["scgf2", "--hubbard", "1,2", "--pole-cap", "3"]).status.code(), Some(4));
    let bad = mbgf(&["roots", "--fcidump", "/nonexistent/FCIDUMP"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("hint:"));
}
