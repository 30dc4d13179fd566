use proptest::prelude::*;
use tesscast::metrics::*;

fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..50).prop_flat_map(|n| (prop::collection::vec(0.0f64..1e4, n), prop::collection::vec(0.0f64..1e4, n)))
}

proptest! {
    #[test]
    fn smape_is_bounded((y, f) in pairs()) {
        let s = smape(&y, &f).unwrap();
        prop_assert!((0.0..100.0).contains(&s));
    }

    #[test]
    fn rmse_dominates_mae((y, f) in pairs()) {
        let mae = y.iter().zip(&f).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
        prop_assert!(rmse(&y, &f).unwrap() >= mae * (1.0 - 1e-12));
    }

    #[test]
    fn metrics_ignore_joint_order((y, f) in pairs(), rot in 0usize..50) {
        let k = rot % y.len();
        let (mut y2, mut f2) = (y.clone(), f.clone());
        y2.rotate_left(k);
        f2.rotate_left(k);
        y2.reverse();
        f2.reverse();
        let insample: Vec<f64> = (0..60).map(|i| (i % 24) as f64 + (i / 24) as f64).collect();
        prop_assert!((smape(&y, &f).unwrap() - smape(&y2, &f2).unwrap()).abs() < 1e-9);
        prop_assert!((rmse(&y, &f).unwrap() - rmse(&y2, &f2).unwrap()).abs() < 1e-9);
        let (a, b) = (mase(&y, &f, &insample, 24).unwrap().unwrap(), mase(&y2, &f2, &insample, 24).unwrap().unwrap());
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }

    #[test]
    fn run_order_does_not_change_summary(vals in prop::collection::vec(prop::option::of(0.0f64..100.0), 1..20), rot in 0usize..20) {
        let mut other = vals.clone();
        let k = rot % vals.len();
        other.rotate_left(k);
        prop_assert_eq!(Summary::of(&vals), Summary::of(&other));
    }
}

#[test]
fn worked_examples() {
    assert_eq!(smape(&[3.0], &[1.0]).unwrap(), 40.0);
    assert_eq!(smape(&[2.0, 5.0], &[2.0, 5.0]).unwrap(), 0.0);
    assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
    assert!((rmse(&[1.0, 2.0, 3.0], &[3.5, 4.5, 5.5]).unwrap() - 2.5).abs() < 1e-12);
    assert_eq!(mase(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0, 3.0, 4.0], 2).unwrap(), Some(0.0));
}

#[test]
fn naive_forecast_with_in_sample_error_scores_one() {
    // in-sample lag-2 errors are all 3; test errors of 3 give MASE 1
    let insample = [0.0, 1.0, 3.0, 4.0, 6.0, 7.0];
    let y = [10.0, 11.0];
    let f = [7.0, 14.0];
    assert_eq!(mase(&y, &f, &insample, 2).unwrap(), Some(1.0));
}

#[test]
fn aggregation_counts_failures_and_undefined() {
    let m = |s: f64, ma: Option<f64>| Some(RunMetrics {
        smape: s,
        mase: ma,
        rmse: s / 10.0,
        mase_undefined_regions: 0,
    });
    let runs: Vec<RunRecord> = [(0, m(10.0, Some(1.0))), (1, m(14.0, None)), (2, None)]
        .into_iter()
        .map(|(repeat, metrics)| RunRecord {
            dataset: "d".into(),
            kind: "voronoi".into(),
            k: 0,
            repeat,
            metrics,
        })
        .collect();
    let g = aggregate_runs(&runs).unwrap();
    assert_eq!(g.len(), 1);
    assert_eq!((g[0].runs, g[0].failed), (2, 1));
    assert_eq!(g[0].smape.mean, Some(12.0));
    assert!((g[0].smape.std.unwrap() - 8f64.sqrt()).abs() < 1e-12);
    assert_eq!((g[0].mase.n, g[0].mase.undefined), (1, 1));
    assert!(aggregate_runs(&[]).is_err());
}
