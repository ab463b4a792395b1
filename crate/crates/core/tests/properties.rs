use std::collections::BTreeMap;

use maxsum::applications::build_risk_process;
use maxsum::array::build_stopping;
use maxsum::config::build_preset;
use maxsum::diagnostics::ks_distance;
use maxsum::limit::{JointJumpMeasure, LimitCharacteristics, TailFunction};
use maxsum::path::{fmt17, modulus_j, modulus_j_at_least, modulus_u};
use maxsum::seed::child_rng;
use maxsum::{CadlagPath, CoordFlag, InverseStatus};
use proptest::prelude::*;

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..60)
}

/// Step path on `[0, 4]` with distinct jump times.
fn step_path(monotone: bool) -> impl Strategy<Value = CadlagPath> {
    let size = if monotone { 0.0f64..1.0 } else { -1.0f64..1.0 };
    (prop::collection::btree_map(1u32..3999, size, 0..30), -1.0f64..1.0).prop_map(move |(jumps, x0)| {
        let times: Vec<f64> = jumps.keys().map(|&k| k as f64 / 1000.0).collect();
        let sizes: Vec<f64> = jumps.values().copied().collect();
        let flag = if monotone { CoordFlag::Nondecreasing } else { CoordFlag::Free };
        CadlagPath::from_jumps(vec![x0], vec![0.0], 4.0, vec![flag], times, sizes).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ks_is_a_metric_on_samples(a in sample(), b in sample(), c in sample()) {
        let ab = ks_distance(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, ks_distance(&b, &a).unwrap());
        prop_assert_eq!(ks_distance(&a, &a).unwrap(), 0.0);
        let ac = ks_distance(&a, &c).unwrap();
        let cb = ks_distance(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn j_modulus_is_monotone_in_c_and_below_u(p in step_path(false), c1 in 0.005f64..0.5, dc in 0.0f64..0.5) {
        let c2 = c1 + dc;
        let j1 = modulus_j(&p, c1, 0.5, 3.5, &[0]).unwrap();
        let j2 = modulus_j(&p, c2, 0.5, 3.5, &[0]).unwrap();
        prop_assert!(j1 <= j2);
        prop_assert!(j2 <= modulus_u(&p, 2.0 * c2, 0.5, 3.5, &[0]).unwrap() + 1e-12);
        for delta in [0.05, j1, 0.3] {
            prop_assert_eq!(modulus_j_at_least(&p, c1, 0.5, 3.5, &[0], delta).unwrap(), j1 >= delta);
        }
    }

    #[test]
    fn generalized_inverse_is_monotone_and_sublevel(p in step_path(true), t1 in -1.5f64..15.0, dt in 0.0f64..3.0) {
        let a = p.generalized_inverse(t1, 0).unwrap();
        let b = p.generalized_inverse(t1 + dt, 0).unwrap();
        prop_assert!(a.time <= b.time);
        if a.status != InverseStatus::EmptyLevelSet && a.time > 0.0 {
            prop_assert!(p.left_limit(a.time).unwrap()[0] <= t1);
        }
        if a.status == InverseStatus::Interior {
            prop_assert!(p.eval_coord(a.time, 0).unwrap() > t1);
        }
    }

    #[test]
    fn records_round_trip(p in step_path(false)) {
        let (head, body) = p.to_records().unwrap();
        prop_assert_eq!(CadlagPath::from_records(&head, &body).unwrap(), p);
    }

    #[test]
    fn fmt17_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn extremal_fdd_is_a_distribution(alpha in 0.5f64..3.0, t in 0.1f64..4.0, dt in 0.0f64..2.0, u in 0.1f64..5.0, du in 0.0f64..2.0) {
        let ch = LimitCharacteristics::new(TailFunction::Frechet { alpha, scale: 1.0 }, JointJumpMeasure::empty(), 0.0, 0.0, 0.0).unwrap();
        let f = ch.extremal_fdd(&[t], &[u]).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(ch.extremal_fdd(&[t + dt], &[u]).unwrap() <= f);
        prop_assert!(ch.extremal_fdd(&[t], &[u + du]).unwrap() >= f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn risk_identities_hold(seed in any::<u64>(), premium in 0.0f64..4.0, n in prop::sample::select(vec![10.0, 50.0, 200.0])) {
        let params = BTreeMap::from([("premium".to_string(), premium)]);
        let (model, _) = build_preset("risk", &params).unwrap();
        let grid: Vec<f64> = (1..=20).map(|k| k as f64 * 0.1).collect();
        let run = build_risk_process(&model, n, 2.0, &grid, &mut child_rng(seed, 7, 0)).unwrap();
        for r in &run.rows {
            prop_assert!(r.identity_gap() <= 1e-12);
            prop_assert!(r.bound_holds());
        }
    }

    #[test]
    fn prelimit_stopping_is_nondecreasing(seed in any::<u64>(), n in prop::sample::select(vec![10.0, 100.0, 1000.0])) {
        let (model, _) = build_preset("example2_insurance", &BTreeMap::new()).unwrap();
        let p = model.build_prelimit_covering(n, 2.0, &mut child_rng(seed, 1, 0)).unwrap();
        let tau = build_stopping(&p, 2.0, 2).unwrap();
        prop_assert!(!tau.truncated);
        let mut last = f64::NEG_INFINITY;
        for k in 0..=200 {
            let v = tau.path.eval_coord(k as f64 * 0.01, 0).unwrap();
            prop_assert!(v >= last);
            last = v;
        }
    }
}
