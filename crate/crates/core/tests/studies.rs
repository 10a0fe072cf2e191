mod common;

use bdar::harness::{run_with_threads, write_report, McDesign, StudyMode};
use bdar::selection::bic;
use bdar::{fit, SearchConfig};
use common::reference_sample;

#[test]
fn reports_do_not_depend_on_worker_count() {
    let mut design = McDesign::reference(vec![150, 250], 4, 77);
    let one = run_with_threads(&design, 1).unwrap().to_json().unwrap();
    let three = run_with_threads(&design, 3).unwrap().to_json().unwrap();
    assert_eq!(one, three);

    design.mode = StudyMode::SelectionStudy;
    design.sample_sizes = vec![200];
    design.replications = 3;
    design.p_max = 3;
    let one = run_with_threads(&design, 1).unwrap().to_json().unwrap();
    let two = run_with_threads(&design, 2).unwrap().to_json().unwrap();
    assert_eq!(one, two);
}

#[test]
fn report_files_are_written() {
    let design = McDesign::reference(vec![120], 3, 3);
    let report = run_with_threads(&design, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_report(&report, dir.path()).unwrap();
    assert_eq!(paths.len(), 2);
    let csv = std::fs::read_to_string(&paths[1]).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 - report.sizes[0].failures);
    let back: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&paths[0]).unwrap()).unwrap();
    assert_eq!(back["sizes"][0]["n"], 120);
}

#[test]
fn overfitting_is_penalised_on_most_paths() {
    let cfg = SearchConfig::fast(800);
    let mut wins = 0;
    for seed in 0..20 {
        let y = reference_sample(800, 6, 1000 + seed);
        let b2 = bic(&fit(&y, 2, &cfg).unwrap(), 2).unwrap();
        let b3 = bic(&fit(&y, 3, &cfg).unwrap(), 3).unwrap();
        if b3 > b2 {
            wins += 1;
        }
    }
    assert!(wins > 10, "BIC(3) > BIC(2) on only {wins} of 20 paths");
}
