use proptest::prelude::*;

use num_complex::Complex64;
use ofdma_ia::alloc::{
    dual_master, sinr_and_rate, AscentParams, CellCandidates, DualParams, PairMode, PowerProblem,
    SubcarrierUnit,
};
use ofdma_ia::channel::{gen_symmetric_channels, SystemDims};
use ofdma_ia::harness::{csv_string, parse_csv, ResultRow, ResultTable};
use ofdma_ia::ia::{distributed_ia_from, random_triple, IaDesign, IaParams};
use ofdma_ia::linalg::Vec2;
use ofdma_ia::schemes::{
    recompute_sum_rate, run_ia, run_ofp, run_traditional, SchemeParams, UnitAllocation, Weights,
};

fn gains() -> impl Strategy<Value = [[f64; 3]; 3]> {
    prop::array::uniform3(prop::array::uniform3(0.0f64..5.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn leakage_never_increases(
        seed in any::<u64>(),
        cross in 0.05f64..3.0,
        start in prop::array::uniform3(prop::array::uniform4(-1.0f64..1.0)),
    ) {
        let ch = random_triple(seed, cross);
        let params = IaParams { max_iters: 40, design: IaDesign::LeakageMin, ..IaParams::default() };
        let v = start.map(|x| {
            let v = Vec2::new(Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]));
            if v.norm() > 1e-3 { v.normalized() } else { Vec2::real(1.0, 0.0) }
        });
        let sol = distributed_ia_from(&ch, v, &params);
        for w in sol.leakage_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn own_rate_grows_with_own_power(g in gains(), p in prop::array::uniform3(0.0f64..10.0), m in 0usize..3, dp in 0.0f64..5.0) {
        let (_, r0) = sinr_and_rate(&g, &p, 8, m);
        let mut q = p;
        q[m] += dp;
        let (_, r1) = sinr_and_rate(&g, &q, 8, m);
        prop_assert!(r1 >= r0 - 1e-15);
    }

    #[test]
    fn coordinate_ascent_is_monotone(
        g in gains(),
        lambda in prop::array::uniform3(0.001f64..0.5),
        start in prop::array::uniform3(0.0f64..4.0),
    ) {
        let problem = PowerProblem {
            gains: &g,
            weights: &[1.0; 3],
            lambda: &lambda,
            cap: &[4.0; 3],
            n_subcarriers: 2,
        };
        let (sol, history) = problem.ascend_from(start, &AscentParams::default());
        for w in history.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        prop_assert!(sol.powers.iter().all(|p| (0.0..=4.0).contains(p)));
        prop_assert!((problem.objective(&sol.powers) - sol.objective).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trips(rows in prop::collection::vec(
        ("[a-z_]{1,12}", -50.0f64..80.0, 1usize..500, 0.0f64..1e3, 0.0f64..10.0, 0.0f64..1.0, 0.0f64..1.0),
        1..12,
    )) {
        let table = ResultTable {
            rows: rows.into_iter().map(|(scheme, snr_db, trials, m, se, gap, leak)| ResultRow {
                scheme, snr_db, trials, mean_sum_rate: m, std_error: se, mean_dual_gap: gap, mean_ia_leakage: leak,
            }).collect(),
        };
        let text = csv_string(&table).unwrap();
        prop_assert_eq!(text.lines().count(), table.rows.len() + 1);
        prop_assert!(text.ends_with('\n'));
        let back = parse_csv(&text).unwrap();
        prop_assert_eq!(back.rows.len(), table.rows.len());
        let close = |a: f64, b: f64| (a - b).abs() <= 5e-9 * a.abs().max(b.abs()) || (a - b).abs() < 1e-300;
        for (a, b) in table.rows.iter().zip(&back.rows) {
            prop_assert_eq!(&a.scheme, &b.scheme);
            prop_assert_eq!(a.trials, b.trials);
            for (x, y) in [
                (a.snr_db, b.snr_db),
                (a.mean_sum_rate, b.mean_sum_rate),
                (a.std_error, b.std_error),
                (a.mean_dual_gap, b.mean_dual_gap),
                (a.mean_ia_leakage, b.mean_ia_leakage),
            ] {
                prop_assert!(close(x, y), "{} vs {}", x, y);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn schemes_are_feasible_and_consistent(seed in 0u64..10_000, h in 0.0f64..1.5, snr in 0.0f64..40.0) {
        let dims = SystemDims::new(8, 2);
        let t = gen_symmetric_channels(&dims, h, seed).unwrap();
        let w = Weights::uniform(2);
        let budget = [8.0 * 10f64.powf(snr / 10.0); 3];
        let params = SchemeParams::default();
        let results = [
            run_traditional(&t, &w, &budget, &params, None).unwrap(),
            run_ia(&t, &w, &budget, PairMode::Perfect, &params, None).unwrap(),
            run_ia(&t, &w, &budget, PairMode::WithResidual, &params, None).unwrap(),
            run_ofp(&t, &w, &budget).unwrap(),
        ];
        for r in &results {
            prop_assert!(r.is_feasible(), "{}: {:?} > {:?}", r.scheme, r.power_used, r.budget);
            let again = recompute_sum_rate(&t, &w, &r.allocation);
            prop_assert!((again - r.sum_rate).abs() <= 1e-9 * r.sum_rate.max(1.0));
            // The unit tables and the raw tensor agree on the utility.
            if let Some(a) = &r.warm {
                prop_assert!((a.utility - r.sum_rate).abs() <= 1e-9 * r.sum_rate.max(1.0),
                    "{}: units {} tensor {}", r.scheme, a.utility, r.sum_rate);
            }
        }
    }

    #[test]
    fn residual_interference_only_hurts(seed in 0u64..10_000, snr in 0.0f64..40.0) {
        let dims = SystemDims::new(8, 2);
        let t = gen_symmetric_channels(&dims, 1.0, seed).unwrap();
        let w = Weights::uniform(2);
        let budget = [8.0 * 10f64.powf(snr / 10.0); 3];
        let r = run_ia(&t, &w, &budget, PairMode::Perfect, &SchemeParams::default(), None).unwrap();
        // Same triples, precoders and powers, with the residual counted.
        let with_ri: Vec<UnitAllocation> = r.allocation.iter().cloned().map(|mut u| {
            if let UnitAllocation::Pair { with_residual, .. } = &mut u {
                *with_residual = true;
            }
            u
        }).collect();
        prop_assert!(recompute_sum_rate(&t, &w, &with_ri) <= r.sum_rate + 1e-12);
    }

    #[test]
    fn ofp_ignores_cross_links(seed in 0u64..10_000, h in 0.0f64..2.0) {
        let dims = SystemDims::new(9 * 2, 3);
        let w = Weights::uniform(3);
        let a = gen_symmetric_channels(&dims, 0.0, seed).unwrap();
        // Same direct links, scaled cross links.
        let b = ofdma_ia::channel::ChannelTensor::from_fn(dims.clone(), |j, m, k, n| {
            let g = a.gain(j, m, k, n);
            if j == m { g } else { num_complex::Complex64::new(h, -h) }
        }).unwrap();
        let ra = run_ofp(&a, &w, &[50.0; 3]).unwrap();
        let rb = run_ofp(&b, &w, &[50.0; 3]).unwrap();
        prop_assert_eq!(ra.sum_rate, rb.sum_rate);
    }
}

#[test]
fn weak_duality_and_slackness_hold_along_the_iterates() {
    let dims = SystemDims::new(16, 2);
    for seed in 0..5 {
        let t = gen_symmetric_channels(&dims, 0.5, seed).unwrap();
        let w = Weights::uniform(2);
        let units: Vec<SubcarrierUnit> = (0..16)
            .map(|n| {
                ofdma_ia::schemes::subcarrier_unit(
                    &t,
                    &w,
                    n,
                    &std::array::from_fn(|_| vec![0, 1]),
                    AscentParams::default(),
                )
            })
            .collect();
        let budget = [160.0; 3];
        let params = DualParams {
            tol: 1e-5,
            ..DualParams::default()
        };
        let (state, alloc) = dual_master(&units, &budget, 16, &params, None);
        assert!(alloc.is_feasible(&budget));
        for it in &state.history {
            assert!(
                it.dual_value >= alloc.utility - 1e-9,
                "seed {seed}: dual {} below primal {}",
                it.dual_value,
                alloc.utility
            );
        }
        let used = alloc.power_used();
        for m in 0..3 {
            // Idle budget at a positive price would leave the certificate loose.
            let slack = state.lambda[m] * (budget[m] - used[m]);
            assert!(
                slack <= 1e-3 * state.dual_value,
                "seed {seed} BS {m}: slackness {slack} vs {}",
                state.dual_value
            );
        }
    }
}

#[test]
fn warm_start_keeps_utility_monotone_in_budget() {
    let dims = SystemDims::new(8, 2);
    let t = gen_symmetric_channels(&dims, 1.0, 3).unwrap();
    let w = Weights::uniform(2);
    let params = SchemeParams::default();
    let mut prev = None;
    let mut last = 0.0;
    for snr in [0.0, 5.0, 10.0, 20.0, 30.0, 40.0] {
        let budget = [8.0 * 10f64.powf(snr / 10.0); 3];
        let r = run_traditional(&t, &w, &budget, &params, prev.as_ref()).unwrap();
        assert!(
            r.sum_rate >= last - 1e-6,
            "{snr} dB: {} < {last}",
            r.sum_rate
        );
        last = r.sum_rate;
        prev = Some(r);
    }
}

#[test]
fn single_cell_example_uses_distinct_users() {
    // One cell with a strong user on subcarrier 0 and another on 1.
    let unit = |g0: f64, g1: f64| SubcarrierUnit {
        cells: std::array::from_fn(|m| CellCandidates {
            users: vec![0, 1],
            gains: vec![
                {
                    let mut g = [0.0; 3];
                    g[m] = if m == 0 { g0 } else { 0.0 };
                    g
                },
                {
                    let mut g = [0.0; 3];
                    g[m] = if m == 0 { g1 } else { 0.0 };
                    g
                },
            ],
            weights: vec![1.0, 1.0],
        }),
        n_subcarriers: 2,
        ascent: AscentParams::default(),
    };
    let units = vec![unit(5.0, 1.0), unit(1.0, 5.0)];
    let (_, alloc) = dual_master(&units, &[2.0, 0.0, 0.0], 2, &DualParams::default(), None);
    assert_eq!(alloc.users[0][0], 0);
    assert_eq!(alloc.users[1][0], 1);
    assert!((alloc.powers[0][0] - 1.0).abs() < 1e-3 && (alloc.powers[1][0] - 1.0).abs() < 1e-3);
}
