use std::sync::Arc;

use proptest::prelude::*;

use signrr::distributed::{aggregate, Aggregation, Cluster, CommLedger, CostModel};
use signrr::metrics::{emit_csv, parse_csv, CsvOptions};
use signrr::optimizers::{
    bias_correct, build_optimizer, shuffle, shuffle_for_worker, sign_into, Algorithm, EpochContext, OptimizerSpec,
};
use signrr::problems::{FiniteSumProblem, RosenbrockSum};
use signrr::schedules::Schedule;
use signrr::theory::{check_anchor_cancellation, check_freeze, check_momentum_replay};
use signrr::trace::{StepDiagnostics, Telemetry, Trace, TraceRecord};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1e-6f64..1e-6, Just(0.0), Just(-0.0)]
}

fn record(dim: usize) -> impl Strategy<Value = TraceRecord> {
    let vec = move || prop::collection::vec(finite(), dim);
    (
        (0usize..50, 0usize..500, finite(), 0f64..1e6, 0f64..1e6, any::<bool>(), 1e-8f64..1.0, 0f64..1.0),
        prop::option::of((
            finite(),
            vec(),
            prop::option::of(vec()),
            vec(),
            prop::option::of(vec()),
            vec(),
            vec(),
        )),
    )
        .prop_map(|((t, i, f, l1, l2, applied, gamma, d), diag)| TraceRecord {
            t,
            i,
            f,
            grad_l1: l1,
            grad_l2: l2,
            applied,
            gamma,
            d_threshold: d,
            diag: diag.map(|(f_next, x, anchor, estimator, momentum, direction, grad)| StepDiagnostics {
                f_next,
                x,
                anchor,
                estimator,
                momentum,
                direction,
                grad,
            }),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_exact(
        records in (1usize..5).prop_flat_map(|dim| prop::collection::vec(record(dim), 0..12)),
    ) {
        let trace = Trace { records };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");

        emit_csv(&trace, &path, CsvOptions { diagnostics: true }).unwrap();
        let back = parse_csv(&path).unwrap();
        prop_assert_eq!(back.records.len(), trace.records.len());
        for (a, b) in trace.records.iter().zip(&back.records) {
            prop_assert_eq!(a.f.to_bits(), b.f.to_bits());
            prop_assert_eq!(a.gamma.to_bits(), b.gamma.to_bits());
            prop_assert_eq!((a.t, a.i, a.applied), (b.t, b.i, b.applied));
        }
        // With every record carrying diagnostics the round trip is total.
        if trace.records.iter().all(|r| r.diag.is_some()) {
            prop_assert_eq!(&back, &trace);
        }

        emit_csv(&trace, &path, CsvOptions::default()).unwrap();
        let plain = parse_csv(&path).unwrap();
        prop_assert!(plain.records.iter().all(|r| r.diag.is_none()));
        prop_assert_eq!(plain.records.len(), trace.records.len());
    }

    #[test]
    fn every_shuffle_is_a_bijection(n in 1usize..400, t in 0usize..1000, seed in any::<u64>(), k in 0usize..64) {
        prop_assert!(shuffle(n, t, seed).is_bijection());
        prop_assert!(shuffle_for_worker(n, t, seed, k).is_bijection());
        prop_assert_eq!(shuffle(n, t, seed), shuffle_for_worker(n, t, seed, 0));
    }

    #[test]
    fn sign_takes_three_values(v in prop::collection::vec(finite(), 0..30)) {
        let mut out = vec![9.0; v.len()];
        sign_into(&v, &mut out).unwrap();
        for (x, s) in v.iter().zip(&out) {
            let want = if *x > 0.0 { 1.0 } else if *x < 0.0 { -1.0 } else { 0.0 };
            prop_assert_eq!(*s, want);
        }
    }

    #[test]
    fn bias_correction_keeps_signs(
        q in prop::collection::vec(finite(), 1..20),
        beta in 0.001f64..0.999,
        i in 0usize..100_000,
    ) {
        let c = bias_correct(&q, beta, i).unwrap();
        for (a, b) in q.iter().zip(&c) {
            prop_assert_eq!(*a > 0.0, *b > 0.0);
            prop_assert_eq!(*a < 0.0, *b < 0.0);
        }
    }

    #[test]
    fn aggregates_are_bounded(
        signs in prop::collection::vec(prop::collection::vec(prop_oneof![Just(-1.0), Just(0.0), Just(1.0)], 4), 1..12),
    ) {
        let m = signs.len() as f64;
        let avg = aggregate(Aggregation::SignAverage, &signs).unwrap();
        let vote = aggregate(Aggregation::MajorityVote, &signs).unwrap();
        for j in 0..4 {
            let sum: f64 = signs.iter().map(|s| s[j]).sum();
            prop_assert!((avg.payload[j] - sum / m).abs() <= 1e-15);
            prop_assert!(avg.payload[j].abs() <= 1.0);
            prop_assert_eq!(vote.payload[j], sum.signum() * (sum != 0.0) as u8 as f64);
        }
    }

    #[test]
    fn ledger_matches_closed_form(m in 1usize..64, d in 1usize..1000, rounds in 0usize..50, sign in 1u64..4, float in 1u64..128) {
        let cost = CostModel { bytes_per_sign: sign, bytes_per_float: float };
        let mut avg = CommLedger::new(cost);
        let mut vote = CommLedger::new(cost);
        for _ in 0..rounds {
            avg.record_round(m, d, Aggregation::SignAverage);
            vote.record_round(m, d, Aggregation::MajorityVote);
        }
        let unit = (rounds * m * d) as u64;
        prop_assert_eq!(avg.bytes_up, unit * sign);
        prop_assert_eq!(avg.bytes_down, unit * float);
        prop_assert_eq!(vote.total(), unit * 2 * sign);
    }

    #[test]
    fn cluster_objective_is_the_full_sum(m in 1usize..6, n0 in 1usize..8, seed in any::<u64>(), x in prop::collection::vec(-2f64..2.0, 4)) {
        let full = RosenbrockSum::new(m * n0, 4, 10.0, seed).unwrap();
        let shards = full.partition(m).unwrap().into_iter().map(|p| Arc::new(p) as Arc<dyn FiniteSumProblem>).collect();
        let cluster = Cluster::new(shards).unwrap();
        let (a, b) = (cluster.value(&x), full.value(&x));
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        for (ga, gb) in cluster.grad(&x).iter().zip(full.grad(&x)) {
            prop_assert!((ga - gb).abs() <= 1e-10 * gb.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn variance_reduced_traces_satisfy_invariants(
        seed in 0u64..1000,
        gamma in prop_oneof![Just(1e-1), Just(1e-2), Just(1e-3)],
        d0 in prop_oneof![Just(1e-3), Just(1e-2), Just(1.0)],
        beta in 0.05f64..0.95,
        carry in any::<bool>(),
    ) {
        let p = RosenbrockSum::new(25, 3, 10.0, seed).unwrap();
        let ctx = EpochContext { seed, batch: 1, telemetry: Telemetry::with_diagnostics() };
        for alg in [Algorithm::SignRvr, Algorithm::SignRvm] {
            let mut spec = OptimizerSpec::new(alg, Schedule::constant(gamma).unwrap())
                .threshold(Schedule::constant(d0).unwrap())
                .beta(beta);
            spec.carry_momentum = carry;
            let mut opt = build_optimizer(&spec, vec![0.5, -0.5, 1.5]).unwrap();
            let mut trace = Trace::new();
            for _ in 0..4 {
                trace.extend(opt.run_epoch(&p, &ctx).unwrap());
            }
            prop_assert!(check_freeze(&trace).passed());
            prop_assert!(check_anchor_cancellation(&trace).passed());
            if alg == Algorithm::SignRvm {
                let r = check_momentum_replay(&trace, beta, carry, 1e-12);
                prop_assert!(r.passed() && r.samples == trace.len());
            }
        }
    }
}
