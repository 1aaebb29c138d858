//! Brute-force references shared by the oracle tests and the acceptance
//! run. Every oracle recomputes rates from scratch instead of calling the
//! library's objective code.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;

use ofdma_ia::alloc::{per_sc_subproblem, AscentParams, CellCandidates, SubcarrierUnit};
use ofdma_ia::channel::{gen_symmetric_channels, ChannelTensor, SystemDims};
use ofdma_ia::ia::{distributed_ia, random_triple, IaParams, TripleChannels};
use ofdma_ia::linalg::Vec2;
use ofdma_ia::rng::seeded;
use ofdma_ia::schemes::{run_traditional, SchemeParams, Weights};

/// `sum_m w_m log2(1 + sinr_m) / n - lambda_m p_m`, with
/// `g[m][j]` the gain from BS `j` to the user of cell `m`.
pub fn lagrangian(g: &[[f64; 3]; 3], w: &[f64; 3], lambda: &[f64; 3], p: &[f64; 3], n: f64) -> f64 {
    let mut f = 0.0;
    for m in 0..3 {
        let mut interference = 1.0;
        for j in 0..3 {
            if j != m {
                interference += p[j] * g[m][j];
            }
        }
        f += w[m] * (1.0 + p[m] * g[m][m] / interference).log2() / n - lambda[m] * p[m];
    }
    f
}

/// Compass search from `x` inside the box `[0, hi]`.
pub fn polish<const D: usize>(
    mut x: [f64; D],
    hi: [f64; D],
    f: impl Fn(&[f64; D]) -> f64,
) -> ([f64; D], f64) {
    let mut fx = f(&x);
    let mut step: [f64; D] = std::array::from_fn(|i| hi[i] / 20.0);
    while step.iter().any(|s| *s > 1e-10) {
        let mut moved = false;
        for i in 0..D {
            for dir in [1.0, -1.0] {
                let mut y = x;
                y[i] = (y[i] + dir * step[i]).clamp(0.0, hi[i]);
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    moved = true;
                }
            }
        }
        if !moved {
            for s in step.iter_mut() {
                *s /= 2.0;
            }
        }
    }
    (x, fx)
}

pub fn grid_oracle_triple(
    g: &[[f64; 3]; 3],
    w: &[f64; 3],
    lambda: &[f64; 3],
    cap: f64,
    n: f64,
) -> f64 {
    const STEPS: usize = 40;
    let mut best = ([0.0; 3], f64::NEG_INFINITY);
    for a in 0..=STEPS {
        for b in 0..=STEPS {
            for c in 0..=STEPS {
                let p = [a, b, c].map(|i| cap * i as f64 / STEPS as f64);
                let v = lagrangian(g, w, lambda, &p, n);
                if v > best.1 {
                    best = (p, v);
                }
            }
        }
    }
    polish(best.0, [cap; 3], |p| lagrangian(g, w, lambda, p, n)).1
}

pub struct ScInstance {
    pub unit: SubcarrierUnit,
    /// `gains[m][k][j]`.
    pub gains: Vec<Vec<[f64; 3]>>,
    pub lambda: [f64; 3],
    pub cap: f64,
}

pub fn sc_instance(seed: u64, k: usize) -> ScInstance {
    let mut rng = seeded(seed);
    let n = 4;
    let gains: Vec<Vec<[f64; 3]>> = (0..3)
        .map(|m| {
            (0..k)
                .map(|_| {
                    std::array::from_fn(|j| {
                        let e: f64 = -(1.0 - rng.random::<f64>()).ln();
                        if j == m {
                            4.0 * e
                        } else {
                            e
                        }
                    })
                })
                .collect()
        })
        .collect();
    let lambda = std::array::from_fn(|_| 0.02 + 0.1 * rng.random::<f64>());
    let cells = std::array::from_fn(|m| CellCandidates {
        users: (0..k).collect(),
        gains: gains[m].clone(),
        weights: vec![1.0; k],
    });
    ScInstance {
        unit: SubcarrierUnit {
            cells,
            n_subcarriers: n,
            ascent: AscentParams::default(),
        },
        gains,
        lambda,
        cap: 6.0,
    }
}

/// Exhaustive search over both subcarriers' powers for N = 2, K = 1.
pub fn joint_grid_two_subcarriers(t: &ChannelTensor, budget: f64) -> f64 {
    let g = |j: usize, m: usize, n: usize| t.gain(j, m, 0, n).norm_sqr() / t.noise_variance();
    let rate = |p: &[[f64; 2]; 3]| -> f64 {
        let mut s = 0.0;
        for n in 0..2 {
            for m in 0..3 {
                let i: f64 = 1.0
                    + (0..3)
                        .filter(|&j| j != m)
                        .map(|j| p[j][n] * g(j, m, n))
                        .sum::<f64>();
                s += (1.0 + p[m][n] * g(m, m, n) / i).log2() / 2.0;
            }
        }
        s
    };
    // Per BS: power on subcarrier 0 and on subcarrier 1 within the budget.
    const STEPS: usize = 14;
    let mut splits = Vec::new();
    for a in 0..=STEPS {
        for b in 0..=(STEPS - a) {
            splits.push([
                budget * a as f64 / STEPS as f64,
                budget * b as f64 / STEPS as f64,
            ]);
        }
    }
    let mut best = ([[0.0; 2]; 3], f64::NEG_INFINITY);
    for s0 in &splits {
        for s1 in &splits {
            for s2 in &splits {
                let p = [*s0, *s1, *s2];
                let v = rate(&p);
                if v > best.1 {
                    best = (p, v);
                }
            }
        }
    }
    // Polish with the budget enforced by a penalty.
    let flat: [f64; 6] = std::array::from_fn(|i| best.0[i / 2][i % 2]);
    let (_, v) = polish(flat, [budget; 6], |x| {
        let p = [[x[0], x[1]], [x[2], x[3]], [x[4], x[5]]];
        if p.iter().any(|q| q[0] + q[1] > budget * (1.0 + 1e-12)) {
            return f64::NEG_INFINITY;
        }
        rate(&p)
    });
    v
}

fn unit_vec(theta: f64, phi: f64) -> Vec2 {
    Vec2::new(
        Complex64::new(theta.cos(), 0.0),
        Complex64::from_polar(theta.sin(), phi),
    )
}

/// Smallest eigenvalue of `sum_j a_j a_j^H` for two vectors, from the trace
/// and determinant.
fn min_interference(a: Vec2, b: Vec2) -> f64 {
    let q00 = a.0[0].norm_sqr() + b.0[0].norm_sqr();
    let q11 = a.0[1].norm_sqr() + b.0[1].norm_sqr();
    let q01 = a.0[0] * a.0[1].conj() + b.0[0] * b.0[1].conj();
    let tr = q00 + q11;
    let det = q00 * q11 - q01.norm_sqr();
    0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt())
}

/// Leakage with the filters chosen optimally for the given precoders, each
/// precoder parametrized as `(cos t, sin t e^{i phi})`.
fn leakage_at(ch: &TripleChannels, angles: &[f64; 6]) -> f64 {
    let v: [Vec2; 3] = std::array::from_fn(|m| unit_vec(angles[2 * m], angles[2 * m + 1]));
    let apply = |j: usize, m: usize| {
        let h = &ch.h[j][m];
        Vec2::new(h.0[0] * v[j].0[0], h.0[1] * v[j].0[1])
    };
    (0..3)
        .map(|m| {
            let others: Vec<usize> = (0..3).filter(|&j| j != m).collect();
            min_interference(apply(others[0], m), apply(others[1], m))
        })
        .sum()
}

/// Grid over the precoder angles followed by a compass refinement.
pub fn angle_grid_leakage(ch: &TripleChannels) -> f64 {
    let mut dirs = Vec::new();
    for i in 0..=8 {
        for k in 0..12 {
            dirs.push([
                std::f64::consts::FRAC_PI_2 * i as f64 / 8.0,
                std::f64::consts::TAU * k as f64 / 12.0,
            ]);
        }
    }
    let mut best = ([0.0; 6], f64::INFINITY);
    for a in &dirs {
        for b in &dirs {
            for c in &dirs {
                let x = [a[0], a[1], b[0], b[1], c[0], c[1]];
                let l = leakage_at(ch, &x);
                if l < best.1 {
                    best = (x, l);
                }
            }
        }
    }
    let hi = [std::f64::consts::FRAC_PI_2, std::f64::consts::TAU];
    let (_, neg) = polish(best.0, std::array::from_fn(|i| hi[i % 2]), |x| {
        -leakage_at(ch, x)
    });
    -neg
}

/// Largest gap between the per-subcarrier solver and the power grid over
/// single-user cells, as `(gap, seed)`.
pub fn per_sc_worst_gap(seeds: std::ops::Range<u64>) -> (f64, u64) {
    let mut worst = (0.0, 0);
    for seed in seeds {
        let inst = sc_instance(seed, 1);
        let sol = per_sc_subproblem(&inst.unit, &inst.lambda, &[inst.cap; 3]);
        let g = [inst.gains[0][0], inst.gains[1][0], inst.gains[2][0]];
        let oracle = grid_oracle_triple(&g, &[1.0; 3], &inst.lambda, inst.cap, 4.0);
        let gap = (sol.value - oracle).abs();
        if gap > worst.0 {
            worst = (gap, seed);
        }
    }
    worst
}

/// Largest relative miss of the traditional pipeline against the joint grid
/// on two-subcarrier, one-user instances, as `(miss, seed, budget)`.
pub fn pipeline_worst_miss(seeds: std::ops::Range<u64>) -> (f64, u64, f64) {
    let dims = SystemDims::new(2, 1);
    let mut params = SchemeParams::default();
    params.dual.tol = 1e-6;
    let mut worst = (0.0, 0, 0.0);
    for seed in seeds {
        let t = gen_symmetric_channels(&dims, 1.0, seed).unwrap();
        for budget in [2.0, 20.0] {
            let r = run_traditional(&t, &Weights::uniform(1), &[budget; 3], &params, None).unwrap();
            let oracle = joint_grid_two_subcarriers(&t, budget);
            let miss = (r.sum_rate / oracle - 1.0).abs();
            if miss > worst.0 {
                worst = (miss, seed, budget);
            }
        }
    }
    worst
}

/// Largest excess of the distributed IA leakage over the angle-grid minimum,
/// as `(excess, seed)`.
pub fn ia_worst_excess(seeds: std::ops::Range<u64>) -> (f64, u64) {
    let mut worst = (f64::NEG_INFINITY, 0);
    for seed in seeds {
        let ch = random_triple(seed, 1.0);
        let sol = distributed_ia(&ch, &IaParams::default());
        let excess = sol.leakage - angle_grid_leakage(&ch);
        if excess > worst.0 {
            worst = (excess, seed);
        }
    }
    worst
}
