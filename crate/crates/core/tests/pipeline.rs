// SPDX-License-Identifier: MIT OR Apache-2.0

use cpdbench_core::analysis::{cd_diagram, compare, ZeroMethod};
use cpdbench_core::data::{load_dataset_dir, save_dataset};
use cpdbench_core::detect::DetectorKind;
use cpdbench_core::experiments::{
    aggregate, read_records, run_experiment, score_records, write_records, ExperimentPlan, Mode,
    ScoreMatrix, Status,
};
use cpdbench_core::metrics::MetricConfig;
use cpdbench_core::synth;
use cpdbench_core::{AnnotationDb, IndexBase};

fn fixture() -> (tempfile::TempDir, AnnotationDb) {
    let dir = tempfile::tempdir().unwrap();
    let mut truth = AnnotationDb::new();
    for name in ["demo_100", "demo_200", "demo_300", "demo_400", "demo_800", "quality_control_2"] {
        let g = synth::generate(name, 11).unwrap();
        save_dataset(&g.series, dir.path().join(format!("{name}.json"))).unwrap();
        truth.merge(g.truth_annotations());
    }
    (dir, truth)
}

#[test]
fn default_and_oracle_end_to_end() {
    let (dir, truth) = fixture();
    let ann_dir = tempfile::tempdir().unwrap();
    let ann_path = ann_dir.path().join("annotations.json");
    truth.save(&ann_path).unwrap();
    let truth = AnnotationDb::load(&ann_path, IndexBase::One).unwrap();
    let series = load_dataset_dir(dir.path()).unwrap();
    assert_eq!(series.len(), 6);

    let default_plan = ExperimentPlan::default_mode().with_runtime(false);
    let default_records = run_experiment(&default_plan, &series);
    assert_eq!(default_records.len(), default_plan.cardinality(series.len()));

    let kinds = [DetectorKind::Amoc, DetectorKind::Pelt, DetectorKind::Bocpd, DetectorKind::Zero];
    let mut oracle_plan = ExperimentPlan::new(Mode::Oracle, &kinds).with_runtime(false);
    // Thin the BOCPD grid to keep the test quick.
    oracle_plan.grids[2].configs.truncate(25);
    oracle_plan.grids[2].configs.push(DetectorKind::Bocpd.default_spec());
    let oracle_records = run_experiment(&oracle_plan, &series);
    assert_eq!(oracle_records.len(), oracle_plan.cardinality(series.len()));

    // Multivariate demo_800 is only run by BOCPD and ZERO.
    for r in oracle_records.iter().filter(|r| r.series == "demo_800") {
        let expected = if r.detector.supports_multivariate() { Status::Success } else { Status::Skip };
        assert_eq!(r.status, expected);
    }

    let cfg = MetricConfig::default();
    let default = score_records(&default_records, &truth, &cfg).unwrap();
    let oracle = score_records(&oracle_records, &truth, &cfg).unwrap();
    for (d, o) in default.iter().zip(&oracle) {
        assert_eq!(d.metric, o.metric);
        for s in &o.series {
            for m in &o.methods {
                if let (Some(dv), Some(ov)) = (d.get(s, m), o.get(s, m)) {
                    assert!(ov >= dv, "{} {s} {m}: oracle {ov} < default {dv}", o.metric);
                }
            }
        }
        let (bench, qc) = o.split_quality_control();
        assert_eq!(qc.series, vec!["quality_control_2"]);
        let means = aggregate(&bench).unwrap();
        assert!(means.iter().all(|(_, v)| (0.0..=1.0).contains(v)));
    }

    let csv = ScoreMatrix::to_csv(&oracle).unwrap();
    assert_eq!(ScoreMatrix::from_csv(&csv).unwrap(), oracle);

    let both = oracle[1].select_methods(&["bocpd", "zero"]).unwrap();
    let report = compare(&both, 0.05, ZeroMethod::Wilcox).unwrap();
    assert_eq!(report.datasets, 6);
    assert!(cd_diagram(&report).contains("</svg>"));
}

#[test]
fn runs_are_byte_identical() {
    let (dir, _) = fixture();
    let series = load_dataset_dir(dir.path()).unwrap();
    let plan = ExperimentPlan::default_mode().with_runtime(false);
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_records(&mut a, &run_experiment(&plan, &series)).unwrap();
    write_records(&mut b, &run_experiment(&plan, &series)).unwrap();
    assert_eq!(a, b);
    assert_eq!(read_records(&a[..]).unwrap().len(), 36);
}
