// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use cpdbench_core::analysis::{
    bonferroni, compare, friedman, holm_adjust, maximal_cliques, rank_scores, ZeroMethod,
};
use cpdbench_core::bocpd::{self, BocpdParams};
use cpdbench_core::costs::{CostKind, PenalizedCost, Penalty};
use cpdbench_core::data::{dataset_to_json, parse_dataset};
use cpdbench_core::detect::{binseg, optimal_partitioning, pelt, segneigh, Budget};
use cpdbench_core::experiments::ScoreMatrix;
use cpdbench_core::metrics::{covering, f_measure, true_positives, Metric, MetricConfig};
use cpdbench_core::{ChangePointSet, Segmentation, TimeSeries};
use proptest::prelude::*;

fn cps_strategy(length: usize) -> impl Strategy<Value = ChangePointSet> {
    proptest::collection::btree_set(1..=length, 0..=length.min(8))
        .prop_map(move |s| ChangePointSet::new(s.into_iter().collect(), length).unwrap())
}

fn series_and_cps() -> impl Strategy<Value = (usize, ChangePointSet, ChangePointSet)> {
    (2usize..60).prop_flat_map(|t| (Just(t), cps_strategy(t), cps_strategy(t)))
}

fn data_strategy() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-5.0f64..5.0, 4..50)
}

fn cost_strategy() -> impl Strategy<Value = CostKind> {
    prop_oneof![Just(CostKind::Mean), Just(CostKind::Var), Just(CostKind::MeanVar)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dataset_json_round_trips(
        cols in proptest::collection::vec(proptest::collection::vec(proptest::option::weighted(0.9, -1e6f64..1e6), 5), 1..4)
    ) {
        prop_assume!(cols.iter().all(|c| c.iter().any(Option::is_some)));
        let s = TimeSeries::new("x", cols).unwrap();
        let back = parse_dataset(&dataset_to_json(&s)).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn change_point_sets_round_trip(cps in cps_strategy(40)) {
        let json = serde_json::to_string(&cps).unwrap();
        prop_assert_eq!(serde_json::from_str::<ChangePointSet>(&json).unwrap(), cps.clone());
        let seg = Segmentation::from_change_points(&cps, 40).unwrap();
        let expected: Vec<usize> = cps.locations().iter().copied().filter(|&c| c > 1).collect();
        let got = seg.boundaries();
        prop_assert_eq!(got.locations(), expected.as_slice());
    }

    #[test]
    fn standardize_is_idempotent(v in proptest::collection::vec(-100.0f64..100.0, 2..40)) {
        let s = TimeSeries::univariate("s", &v).unwrap().standardize();
        let twice = s.standardize();
        for (a, b) in s.dense_univariate().unwrap().iter().zip(twice.dense_univariate().unwrap()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn covering_and_f1_bounds((t, gt, pred) in series_and_cps()) {
        let g = Segmentation::from_change_points(&gt, t).unwrap();
        let p = Segmentation::from_change_points(&pred, t).unwrap();
        let c = covering(&g, &p).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
        prop_assert!((covering(&g, &g).unwrap() - 1.0).abs() < 1e-12);

        let cfg = MetricConfig::default();
        let f = f_measure(std::slice::from_ref(&gt), &pred, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&f.f_beta));
        prop_assert_eq!(f_measure(std::slice::from_ref(&gt), &gt, &cfg).unwrap().f_beta, 1.0);
    }

    #[test]
    fn matching_is_symmetric_and_bounded((_, a, b) in series_and_cps(), margin in 0usize..6) {
        let ab = true_positives(&a, &b, margin).len();
        let ba = true_positives(&b, &a, margin).len();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab <= a.len().min(b.len()));
        prop_assert!(true_positives(&a, &b, margin + 1).len() >= ab);
    }

    #[test]
    fn pelt_equals_optimal_partitioning(data in data_strategy(), kind in cost_strategy(), log_l in -3.0f64..3.0) {
        let pc = PenalizedCost::from_data(&data, kind, Penalty::Manual(10f64.powf(log_l))).unwrap();
        let m = kind.min_segment_len();
        let b = Budget::unlimited();
        let a = pelt(&pc, m, &b).unwrap();
        let o = optimal_partitioning(&pc, m, &b).unwrap();
        prop_assert_eq!(&a.change_points, &o.change_points);
        prop_assert!((a.objective - o.objective).abs() < 1e-9);
        prop_assert!((pc.objective(a.change_points.locations()) - a.objective).abs() < 1e-8);
    }

    #[test]
    fn larger_penalty_never_adds_change_points(data in data_strategy(), l1 in 0.001f64..50.0, factor in 1.0f64..10.0) {
        let b = Budget::unlimited();
        let small = PenalizedCost::from_data(&data, CostKind::Mean, Penalty::Manual(l1)).unwrap();
        let large = PenalizedCost::from_data(&data, CostKind::Mean, Penalty::Manual(l1 * factor)).unwrap();
        let n_small = pelt(&small, 1, &b).unwrap().change_points.len();
        let n_large = pelt(&large, 1, &b).unwrap().change_points.len();
        prop_assert!(n_large <= n_small);
    }

    #[test]
    fn segneigh_beats_binseg(data in data_strategy(), q in 1usize..6, log_l in -2.0f64..2.0) {
        let b = Budget::unlimited();
        let pc = PenalizedCost::from_data(&data, CostKind::Mean, Penalty::Manual(10f64.powf(log_l))).unwrap();
        let sn = segneigh(&pc, q, 1, &b).unwrap();
        let bs = binseg(&pc, q, 1, &b).unwrap();
        prop_assert!(sn.objective <= pc.objective(bs.locations()) + 1e-9);
        prop_assert!(sn.change_points.len() <= q);
    }

    #[test]
    fn bocpd_columns_are_distributions(data in data_strategy(), intensity in 1.0f64..300.0, a in 0.01f64..100.0, k in 0.01f64..100.0) {
        let params = BocpdParams::new(intensity, a, 1.0, k);
        let post = bocpd::filter(std::slice::from_ref(&data), &params, &Budget::unlimited()).unwrap();
        prop_assert_eq!(post.len(), data.len());
        for col in post.columns() {
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(col.iter().all(|p| *p >= 0.0));
        }
        let cps = bocpd::map_segmentation(&post);
        prop_assert!(cps.locations().iter().all(|&c| c >= 2 && c <= data.len()));
    }

    #[test]
    fn rank_columns_sum_and_monotone_invariance(
        rows in proptest::collection::vec(proptest::collection::vec(0u8..5, 4), 2..12)
    ) {
        let build = |f: &dyn Fn(f64) -> f64| {
            let mut sm = ScoreMatrix::new(Metric::F1, (0..4).map(|j| format!("m{j}")).collect());
            for (i, r) in rows.iter().enumerate() {
                sm.push_row(format!("d{i}"), r.iter().map(|&v| Some(f(v as f64 / 4.0))).collect()).unwrap();
            }
            sm
        };
        let rt = rank_scores(&build(&|x| x)).unwrap();
        for r in &rt.ranks {
            prop_assert_eq!(r.iter().sum::<f64>(), 10.0);
            prop_assert!(r.iter().all(|&x| (1.0..=4.0).contains(&x)));
        }
        let transformed = rank_scores(&build(&|x| (3.0 * x).exp() - 7.0)).unwrap();
        prop_assert_eq!(friedman(&rt).unwrap(), friedman(&transformed).unwrap());
    }

    #[test]
    fn holm_contains_bonferroni(p in proptest::collection::vec(0.0f64..0.2, 0..15), alpha in 0.01f64..0.1) {
        let h = holm_adjust(&p, alpha);
        let b = bonferroni(&p, alpha);
        for (hi, bi) in h.iter().zip(&b) {
            prop_assert!(!bi || *hi);
        }
        // Rejections form a prefix of the sorted p-values.
        let max_rejected = p.iter().zip(&h).filter(|(_, r)| **r).map(|(v, _)| *v).fold(f64::MIN, f64::max);
        let min_kept = p.iter().zip(&h).filter(|(_, r)| !**r).map(|(v, _)| *v).fold(f64::MAX, f64::min);
        prop_assert!(max_rejected <= min_kept);
    }

    #[test]
    fn cliques_are_maximal_and_complete(edges in proptest::collection::vec(any::<bool>(), 15)) {
        let n = 6;
        let mut reject = vec![vec![false; n]; n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                reject[i][j] = edges[k];
                reject[j][i] = edges[k];
                k += 1;
            }
        }
        let cliques = maximal_cliques(&reject);
        for c in &cliques {
            for &a in c {
                for &b in c {
                    prop_assert!(a == b || !reject[a][b]);
                }
            }
            for v in 0..n {
                if !c.contains(&v) {
                    prop_assert!(c.iter().any(|&u| reject[u][v]));
                }
            }
        }
        // Every non-significant pair lies in some clique.
        for i in 0..n {
            for j in (i + 1)..n {
                if !reject[i][j] {
                    prop_assert!(cliques.iter().any(|c| c.contains(&i) && c.contains(&j)));
                }
            }
        }
        let distinct: BTreeSet<_> = cliques.iter().collect();
        prop_assert_eq!(distinct.len(), cliques.len());
    }
}

#[test]
fn compare_groups_match_cliques() {
    let mut sm = ScoreMatrix::new(Metric::F1, vec!["a".into(), "b".into(), "c".into()]);
    for i in 0..8 {
        let x = i as f64 / 10.0;
        sm.push_row(format!("d{i}"), vec![Some(x), Some(x + 0.01 * (i % 2) as f64), Some(1.0 - x)]).unwrap();
    }
    let rep = compare(&sm, 0.05, ZeroMethod::Wilcox).unwrap();
    let expected: Vec<Vec<usize>> = maximal_cliques(&rep.reject).into_iter().filter(|c| c.len() > 1).collect();
    assert_eq!(rep.groups, expected);
}
