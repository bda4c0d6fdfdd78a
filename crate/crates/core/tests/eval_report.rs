mod common;

use std::fs;

use common::fixtures;
use solrefine_core::metrics::{build_report, emit_report, FileResult, ReportFormat};
use solrefine_core::refine::SelectionPolicy;

fn load(name: &str) -> Vec<FileResult> {
    serde_json::from_str(&fs::read_to_string(fixtures().join("eval").join(name)).unwrap()).unwrap()
}

#[test]
fn markdown_matches_golden() {
    let report = build_report("fixture", SelectionPolicy::BestScore, load("results.json"), Some(&load("baseline.json"))).unwrap();
    let md = emit_report(&report, ReportFormat::Markdown);
    if std::env::var_os("PRINT_REPORT").is_some() {
        println!("{md}");
    }
    let golden = fs::read_to_string(fixtures().join("golden/report.md")).unwrap();
    assert_eq!(md, golden);
}


fn close(a: Option<f64>, b: f64) {
    let a = a.expect("value present");
    assert!((a - b).abs() < 1e-9, "{a} != {b}");
}

#[test]
fn numbers_match_hand_computation() {
    let r = build_report("fixture", SelectionPolicy::BestScore, load("results.json"), Some(&load("baseline.json"))).unwrap();

    assert_eq!((r.pass.files, r.pass.compiled), (3, 2));
    close(r.pass.compile_rate, 2.0 / 3.0);
    assert_eq!((r.pass.passed_tests, r.pass.total_tests), (6, 13));
    close(r.pass.pass1, 6.0 / 13.0);
    let per_file = r.pass.per_file.unwrap();
    assert!((per_file.mean - 0.75).abs() < 1e-12 && (per_file.std - 0.25).abs() < 1e-12);

    // alpha: 100/200, 300/150, 50/50; bravo: 200/100, 150/300
    let gas = r.gas.unwrap();
    assert_eq!(gas.common_tests, 5);
    close(gas.mean_ratio, (0.5 + 2.0 + 1.0 + 2.0 + 0.5) / 5.0);
    close(gas.p90, 2.0);
    assert_eq!((gas.file_count, gas.files_better, gas.files_worse), (2, 1, 1));

    let vuln = r.vuln.unwrap();
    assert_eq!((vuln.common_files, vuln.baseline_vuln, vuln.method_vuln, vuln.vuln_diff), (2, 6, 4, -2));
    close(vuln.delta_pct, -200.0 / 6.0);

    assert_eq!((r.complexity.loc, r.complexity.ploc, r.complexity.complexity), (50, 65, 15));
    close(r.complexity.avg_ploc, 32.5);

    let t = &r.tokens;
    assert_eq!((t.coding_prompt, t.coding_completion), (2700, 530));
    assert_eq!((t.refine_prompt, t.refine_completion), (14_100, 1480));
    assert_eq!(t.refine_rounds, 5);
    close(t.avg_total_prompt_per_file, 8400.0);
    close(t.avg_prompt_per_round, 2820.0);
}

