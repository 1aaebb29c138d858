//! Acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are never captured. A FAIL
//! line does not fail `cargo test` unless `ACCEPTANCE_STRICT=1` is set.
//! `ACCEPTANCE_TRIALS=n` caps the Monte Carlo trial counts for a quick look;
//! such runs are labelled as reduced.

mod common;

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use ofdma_ia::channel::{gen_symmetric_channels, SystemDims};
use ofdma_ia::harness::{
    csv_string, run_experiment_detailed, ExperimentConfig, Profile, ResultTable,
};
use ofdma_ia::ia::{
    distributed_ia, distributed_ia_from, random_triple, IaDesign, IaParams, TripleChannels,
};
use ofdma_ia::linalg::{Diag2, Vec2};
use ofdma_ia::rng::seeded;
use ofdma_ia::schemes::{run_traditional, SchemeId, SchemeParams, Weights};

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn record(&mut self, id: &str, pass: bool, what: &str, detail: String, started: Instant) {
        let line = format!(
            "{} {id:<4} {what}: {detail} [{:.0}s]",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        println!("{line}");
        self.lines.push((pass, line));
    }
}

fn trial_cap() -> Option<usize> {
    std::env::var("ACCEPTANCE_TRIALS")
        .ok()
        .and_then(|s| s.parse().ok())
}

fn capped(mut c: ExperimentConfig) -> ExperimentConfig {
    if let Some(t) = trial_cap() {
        c.trials = c.trials.min(t.max(1));
    }
    c
}

fn run(config: &ExperimentConfig) -> ResultTable {
    let out = run_experiment_detailed(config).expect("experiment runs");
    for f in &out.failures {
        println!(
            "     trial {} {} at {} dB failed: {}",
            f.trial, f.scheme, f.snr_db, f.message
        );
    }
    out.table
}

fn means(table: &ResultTable, scheme: SchemeId) -> Vec<(f64, f64)> {
    table
        .series(scheme)
        .iter()
        .map(|r| (r.snr_db, r.mean_sum_rate))
        .collect()
}

fn at(table: &ResultTable, scheme: SchemeId, snr: f64) -> f64 {
    table.get(scheme, snr).map_or(f64::NAN, |r| r.mean_sum_rate)
}

/// First SNR where `a - b` turns from non-positive to positive, linearly
/// interpolated. `Some(first grid point)` when `a` leads from the start.
fn fmt_cross(c: Option<f64>) -> String {
    c.map_or("none".into(), |c| format!("{c:.1} dB"))
}

fn upward_crossing(a: &[(f64, f64)], b: &[(f64, f64)]) -> Option<f64> {
    let d: Vec<(f64, f64)> = a.iter().zip(b).map(|(x, y)| (x.0, x.1 - y.1)).collect();
    if d.first()?.1 > 0.0 {
        return Some(d[0].0);
    }
    d.windows(2)
        .find(|w| w[0].1 <= 0.0 && w[1].1 > 0.0)
        .map(|w| {
            let (s0, d0) = w[0];
            let (s1, d1) = w[1];
            s0 + (s1 - s0) * (-d0) / (d1 - d0)
        })
}

fn fmt_series(s: &[(f64, f64)]) -> String {
    s.iter()
        .map(|(x, y)| format!("{x:.0}:{y:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn strong_interference(report: &mut Report) {
    let started = Instant::now();
    let config = capped(Profile::StrongInterference.config());
    let table = run(&config);
    let trad = means(&table, SchemeId::Traditional);
    let perfect = means(&table, SchemeId::IaPerfect);
    let ri = means(&table, SchemeId::IaRi);
    println!("     {} trials at h=1", config.trials);
    println!("     traditional {}", fmt_series(&trad));
    println!("     ia_perfect  {}", fmt_series(&perfect));
    println!("     ia_ri       {}", fmt_series(&ri));

    let losing: Vec<f64> = ri
        .iter()
        .zip(&trad)
        .filter(|(r, t)| r.0 >= 25.0 && r.1 <= t.1)
        .map(|(r, _)| r.0)
        .collect();
    let cross = upward_crossing(&ri, &trad);
    let in_window = cross.is_some_and(|c| (10.0..=25.0).contains(&c));
    report.record(
        "C1",
        losing.is_empty() && in_window,
        "ia_ri above traditional from 25 dB, crossover in [10, 25] dB",
        format!(
            "crossover {}, ia_ri not above traditional at {losing:?} dB",
            fmt_cross(cross)
        ),
        started,
    );

    let t0 = Instant::now();
    let slope = |s: SchemeId| (at(&table, s, 50.0) - at(&table, s, 40.0)) / 10.0;
    let ratio = slope(SchemeId::IaPerfect) / slope(SchemeId::Traditional);
    report.record(
        "C3",
        (1.35..=1.65).contains(&ratio),
        "40-50 dB slope ratio ia_perfect/traditional in [1.35, 1.65]",
        format!(
            "ratio {ratio:.3} (slopes {:.4} / {:.4} bps/Hz per dB)",
            slope(SchemeId::IaPerfect),
            slope(SchemeId::Traditional)
        ),
        t0,
    );

    let t0 = Instant::now();
    let inverted: Vec<f64> = perfect
        .iter()
        .zip(&ri)
        .filter(|(p, r)| p.1 < r.1)
        .map(|(p, _)| p.0)
        .collect();
    let p30 = at(&table, SchemeId::IaPerfect, 30.0);
    let gap30 = (p30 - at(&table, SchemeId::IaRi, 30.0)) / p30;
    report.record(
        "C4",
        inverted.is_empty() && gap30 <= 0.15,
        "ia_perfect >= ia_ri everywhere, gap <= 15% at 30 dB",
        format!(
            "gap at 30 dB {:.1}%, inverted at {inverted:?} dB",
            100.0 * gap30
        ),
        t0,
    );

    let t0 = Instant::now();
    let row = |s| table.get(s, 40.0).expect("40 dB row");
    let (p, t) = (row(SchemeId::IaPerfect), row(SchemeId::Traditional));
    let separated = p.mean_sum_rate - 2.0 * p.std_error > t.mean_sum_rate + 2.0 * t.std_error;
    report.record(
        "C1b",
        separated,
        "ia_perfect above traditional at 40 dB with disjoint 2-sigma bands",
        format!(
            "{:.3} +- {:.3} vs {:.3} +- {:.3}",
            p.mean_sum_rate,
            2.0 * p.std_error,
            t.mean_sum_rate,
            2.0 * t.std_error
        ),
        t0,
    );
}

fn weak_interference(report: &mut Report) {
    let started = Instant::now();
    let config = capped(Profile::WeakInterference.config());
    let table = run(&config);
    let trad = means(&table, SchemeId::Traditional);
    let ri = means(&table, SchemeId::IaRi);
    println!("     {} trials at h=0.1", config.trials);
    println!("     traditional {}", fmt_series(&trad));
    println!("     ia_ri       {}", fmt_series(&ri));
    let not_winning: Vec<f64> = trad
        .iter()
        .zip(&ri)
        .filter(|(t, r)| t.0 <= 20.0 && t.1 <= r.1)
        .map(|(t, _)| t.0)
        .collect();
    let cross = upward_crossing(&ri, &trad);
    report.record(
        "C2",
        not_winning.is_empty() && cross.is_none_or(|c| c >= 30.0),
        "traditional above ia_ri on [0, 20] dB, crossover >= 30 dB if any",
        format!(
            "crossover {}, traditional not above at {not_winning:?} dB",
            fmt_cross(cross)
        ),
        started,
    );
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn duality_gap(report: &mut Report) {
    let started = Instant::now();
    let mut params = SchemeParams::default();
    params.dual.tol = 1e-4;
    let mut medians = Vec::new();
    for n in [16, 64] {
        let dims = SystemDims::new(n, 4);
        let budget = [n as f64 * 100.0; 3];
        let gaps: Vec<f64> = (0..20)
            .map(|seed| {
                let t = gen_symmetric_channels(&dims, 1.0, 5000 + seed).unwrap();
                run_traditional(&t, &Weights::uniform(4), &budget, &params, None)
                    .unwrap()
                    .dual_gap
            })
            .collect();
        medians.push(median(gaps));
    }
    report.record(
        "C5",
        medians[0] <= 0.05 && medians[1] <= 0.02,
        "median relative duality gap <= 5% at N=16, <= 2% at N=64",
        format!(
            "N=16 {:.2}%, N=64 {:.2}%",
            100.0 * medians[0],
            100.0 * medians[1]
        ),
        started,
    );
}

fn leakage(report: &mut Report) {
    let started = Instant::now();
    let params = IaParams {
        design: IaDesign::LeakageMin,
        ..IaParams::default()
    };
    // Random starts: the default start (1, 0) is already aligned on diagonal
    // channels and would make the history a single point.
    let mut worst_rise = f64::NEG_INFINITY;
    let mut steps = 0;
    for seed in 0..100 {
        let cross = [0.1, 0.5, 1.0, 2.0][seed as usize % 4];
        let mut rng = seeded(3000 + seed);
        let mut unit = || {
            let mut c = || Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            Vec2::new(c(), c()).normalized()
        };
        let start = [unit(), unit(), unit()];
        let sol = distributed_ia_from(&random_triple(seed, cross), start, &params);
        for w in sol.leakage_history.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
            steps += 1;
        }
    }
    let mut worst_scalar = 0.0f64;
    for seed in 0..100 {
        let mut rng = seeded(7000 + seed);
        let mut ch: TripleChannels = random_triple(seed, 1.0);
        for j in 0..3 {
            for m in 0..3 {
                if j != m {
                    let c =
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2.0;
                    ch.h[j][m] = Diag2([c, c]);
                }
            }
        }
        worst_scalar = worst_scalar.max(distributed_ia(&ch, &params).leakage);
    }
    report.record(
        "C6",
        worst_rise <= 1e-9 && worst_scalar <= 1e-6,
        "leakage never rises by more than 1e-9; scalar cross links align to <= 1e-6",
        format!("largest rise {worst_rise:.2e} over {steps} steps, worst scalar-cross leakage {worst_scalar:.2e}"),
        started,
    );
}

fn oracles(report: &mut Report) {
    let started = Instant::now();
    let (sc_gap, sc_seed) = common::per_sc_worst_gap(0..20);
    let (miss, p_seed, p_budget) = common::pipeline_worst_miss(0..20);
    let (excess, ia_seed) = common::ia_worst_excess(0..20);
    report.record(
        "C7",
        sc_gap <= 1e-3 && miss <= 0.01 && excess <= 1e-3,
        "per-subcarrier, two-subcarrier pipeline and IA leakage match brute force",
        format!(
            "per-SC worst {sc_gap:.1e} (seed {sc_seed}), pipeline worst {:.3}% (seed {p_seed}, P {p_budget}), \
             IA excess {excess:.1e} (seed {ia_seed})",
            100.0 * miss
        ),
        started,
    );
}

fn hybrid_balance(report: &mut Report) {
    let started = Instant::now();
    let config = capped(Profile::Heterogeneous.config());
    let table = run(&config);
    println!("     {} trials, heterogeneous N=64 K=6", config.trials);
    for s in &config.schemes {
        println!("     {:<11} {}", s.as_str(), fmt_series(&means(&table, *s)));
    }
    let lo = config.snr_grid_db[0];
    let hi = *config.snr_grid_db.last().unwrap();
    let low_ref = at(&table, SchemeId::Traditional, lo).max(at(&table, SchemeId::Ofp, lo));
    let low_ok = at(&table, SchemeId::Hybrid, lo) >= 0.9 * low_ref;
    let high_ok = at(&table, SchemeId::Hybrid, hi) >= 0.9 * at(&table, SchemeId::IaRi, hi);
    let worst_at: Vec<f64> = config
        .snr_grid_db
        .iter()
        .copied()
        .filter(|&s| {
            let h = at(&table, SchemeId::Hybrid, s);
            config
                .schemes
                .iter()
                .filter(|&&x| x != SchemeId::Hybrid)
                .all(|&x| h < at(&table, x, s))
        })
        .collect();
    report.record(
        "C8",
        low_ok && high_ok && worst_at.is_empty(),
        "hybrid >= 0.9x best of traditional/ofp at the lowest SNR, >= 0.9x ia_ri at the highest, never worst",
        format!(
            "lowest {:.3} vs {:.3}, highest {:.3} vs {:.3}, worst at {worst_at:?} dB",
            at(&table, SchemeId::Hybrid, lo),
            low_ref,
            at(&table, SchemeId::Hybrid, hi),
            at(&table, SchemeId::IaRi, hi)
        ),
        started,
    );
}

/// Water level by bisection.
fn waterfill_rate(gains: &[f64], budget: f64, n: usize) -> f64 {
    let used = |level: f64| {
        gains
            .iter()
            .map(|g| (level - 1.0 / g).max(0.0))
            .sum::<f64>()
    };
    let (mut lo, mut hi) = (
        0.0,
        budget + gains.iter().map(|g| 1.0 / g).fold(0.0, f64::max),
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if used(mid) > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    gains
        .iter()
        .map(|g| (1.0 + (lo - 1.0 / g).max(0.0) * g).log2())
        .sum::<f64>()
        / n as f64
}

fn zero_interference(report: &mut Report) {
    let started = Instant::now();
    let dims = SystemDims::new(64, 4);
    let mut params = SchemeParams::default();
    params.dual.tol = 1e-9;
    let budget = [6400.0; 3];
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let t = gen_symmetric_channels(&dims, 0.0, 9000 + seed).unwrap();
        let r = run_traditional(&t, &Weights::uniform(4), &budget, &params, None).unwrap();
        let expected: f64 = (0..3)
            .map(|m| {
                let best: Vec<f64> = (0..64)
                    .map(|n| {
                        (0..4)
                            .map(|k| t.gain(m, m, k, n).norm_sqr())
                            .fold(0.0, f64::max)
                    })
                    .collect();
                waterfill_rate(&best, budget[m], 64)
            })
            .sum();
        worst = worst.max((r.sum_rate - expected).abs());
    }
    report.record(
        "C9",
        worst <= 1e-6,
        "h=0 traditional equals three single-cell water-fillings within 1e-6",
        format!("largest difference {worst:.2e} bps/Hz"),
        started,
    );
}

fn determinism(report: &mut Report) {
    let started = Instant::now();
    let mut config = Profile::Heterogeneous.config();
    config.n_subcarriers = 12;
    config.users_per_cell = 3;
    config.trials = 4;
    config.snr_grid_db = vec![0.0, 15.0, 30.0];
    config.schemes = SchemeId::ALL.to_vec();
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("run{i}.csv"));
        ofdma_ia::harness::emit_csv(&run(&config), &path).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    let symmetric = {
        let mut c = Profile::StrongInterference.config();
        c.n_subcarriers = 8;
        c.users_per_cell = 2;
        c.trials = 3;
        c.snr_grid_db = vec![10.0, 40.0];
        c
    };
    let same_sym = csv_string(&run(&symmetric)).unwrap() == csv_string(&run(&symmetric)).unwrap();
    report.record(
        "C10",
        bytes[0] == bytes[1] && same_sym,
        "repeated runs with one master seed give byte-identical CSV",
        format!(
            "{} bytes, heterogeneous and symmetric runs compared",
            bytes[0].len()
        ),
        started,
    );
}

fn main() {
    // Skip when libtest-style filtering asks for something else.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return;
    }
    if let Some(t) = trial_cap() {
        println!("reduced run: Monte Carlo trials capped at {t}");
    }
    let started = Instant::now();
    let mut report = Report { lines: Vec::new() };
    oracles(&mut report);
    leakage(&mut report);
    zero_interference(&mut report);
    duality_gap(&mut report);
    determinism(&mut report);
    strong_interference(&mut report);
    weak_interference(&mut report);
    hybrid_balance(&mut report);

    let failed = report.lines.iter().filter(|(p, _)| !p).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.0}s",
        report.lines.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
