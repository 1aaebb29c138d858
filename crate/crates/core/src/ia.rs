//! Frequency-domain interference alignment over subcarrier pairs.
//!
//! Subcarrier `n` is grouped with `n + N/2`; over each pair every link is a
//! diagonal 2x2 channel. Each base station sends one stream per pair through a
//! unit-norm precoder `v_m` and each selected user projects its two received
//! samples onto a unit-norm filter `u_m` (stored here as a column vector `w`
//! with `u = w^H`).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{ChannelTensor, N_CELLS};
use crate::error::{Error, Result};
use crate::linalg::{least_eigvec_2x2_hermitian, Diag2, Mat2, Vec2};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubcarrierPairing {
    n_subcarriers: usize,
    /// Zero-based `(n, n + N/2)`.
    pairs: Vec<(usize, usize)>,
}

impl SubcarrierPairing {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }
}

/// Pairs subcarrier `n` with `n + N/2`, maximizing the frequency gap inside
/// each pair.
pub fn pair_subcarriers(n_subcarriers: usize) -> Result<SubcarrierPairing> {
    if n_subcarriers < 2 || !n_subcarriers.is_multiple_of(2) {
        return Err(Error::InvalidDims(format!(
            "pairing needs an even subcarrier count >= 2, got {n_subcarriers}"
        )));
    }
    let half = n_subcarriers / 2;
    Ok(SubcarrierPairing {
        n_subcarriers,
        pairs: (0..half).map(|n| (n, n + half)).collect(),
    })
}

/// Diagonal pair channels `H[tx][cell][user][pair]` for a whole tensor.
#[derive(Debug, Clone)]
pub struct PairedChannels {
    users_per_cell: usize,
    n_pairs: usize,
    noise_variance: f64,
    mats: Vec<Diag2>,
}

impl PairedChannels {
    #[inline]
    fn index(&self, tx: usize, cell: usize, user: usize, pair: usize) -> usize {
        ((tx * N_CELLS + cell) * self.users_per_cell + user) * self.n_pairs + pair
    }

    pub fn get(&self, tx: usize, cell: usize, user: usize, pair: usize) -> &Diag2 {
        &self.mats[self.index(tx, cell, user, pair)]
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn users_per_cell(&self) -> usize {
        self.users_per_cell
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// The nine channels seen by one user triple on one pair.
    pub fn triple(&self, pair: usize, users: [usize; N_CELLS]) -> TripleChannels {
        let mut h = [[Diag2::ZERO; N_CELLS]; N_CELLS];
        for (tx, row) in h.iter_mut().enumerate() {
            for (cell, entry) in row.iter_mut().enumerate() {
                *entry = *self.get(tx, cell, users[cell], pair);
            }
        }
        TripleChannels { h }
    }
}

/// Assembles `diag(h^{n1}, h^{n2})` for every link and pair.
pub fn build_paired_channels(
    tensor: &ChannelTensor,
    pairing: &SubcarrierPairing,
) -> Result<PairedChannels> {
    if pairing.n_subcarriers() != tensor.n_subcarriers() {
        return Err(Error::InvalidDims(format!(
            "pairing covers {} subcarriers, tensor has {}",
            pairing.n_subcarriers(),
            tensor.n_subcarriers()
        )));
    }
    let k = tensor.users_per_cell();
    let n_pairs = pairing.len();
    let mut mats = Vec::with_capacity(N_CELLS * N_CELLS * k * n_pairs);
    for tx in 0..N_CELLS {
        for cell in 0..N_CELLS {
            for user in 0..k {
                for &(a, b) in pairing.pairs() {
                    mats.push(Diag2([
                        tensor.gain(tx, cell, user, a),
                        tensor.gain(tx, cell, user, b),
                    ]));
                }
            }
        }
    }
    Ok(PairedChannels {
        users_per_cell: k,
        n_pairs,
        noise_variance: tensor.noise_variance(),
        mats,
    })
}

/// `h[tx][cell]`: channel from base station `tx` to the selected user of
/// `cell`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleChannels {
    pub h: [[Diag2; N_CELLS]; N_CELLS],
}

impl TripleChannels {
    pub fn direct(&self, cell: usize) -> &Diag2 {
        &self.h[cell][cell]
    }
}

/// Precoder design used when building effective pair gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IaDesign {
    /// Alternating minimization of total interference leakage.
    LeakageMin,
    /// Alternating SINR maximization at the nominal per-stream power.
    MaxSinr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IaParams {
    pub max_iters: usize,
    pub leakage_tol: f64,
    /// Number of starts. Start 0 uses `v = (1, 0)`; the rest are seeded
    /// random unit vectors.
    pub restarts: usize,
    pub seed: u64,
    pub design: IaDesign,
}

impl Default for IaParams {
    fn default() -> Self {
        Self {
            max_iters: 50,
            leakage_tol: 1e-8,
            restarts: 4,
            seed: 0,
            design: IaDesign::MaxSinr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IaSolution {
    pub precoders: [Vec2; N_CELLS],
    /// Receive filters as column vectors `w_m`; the filter row is `w_m^H`.
    pub filters: [Vec2; N_CELLS],
    /// Total residual interference with unit stream powers.
    pub leakage: f64,
    /// Leakage after each iteration of the winning start.
    pub leakage_history: Vec<f64>,
    pub iterations_used: usize,
}

/// `sum_m sum_{j != m} |u_m H_{j,m} v_j|^2`.
pub fn leakage(ch: &TripleChannels, precoders: &[Vec2; N_CELLS], filters: &[Vec2; N_CELLS]) -> f64 {
    let mut total = 0.0;
    for (m, w) in filters.iter().enumerate() {
        for (j, v) in precoders.iter().enumerate() {
            if j != m {
                total += ch.h[j][m].bilinear_gain(w, v);
            }
        }
    }
    total
}

fn initial_precoders(start: usize, seed: u64) -> [Vec2; N_CELLS] {
    if start == 0 {
        return [Vec2::real(1.0, 0.0); N_CELLS];
    }
    let mut rng = crate::rng::substream(seed, start as u64);
    let mut draw = || {
        let mut z = [num_complex::Complex64::new(0.0, 0.0); 2];
        for c in z.iter_mut() {
            *c =
                num_complex::Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        Vec2(z).normalized().phase_fixed()
    };
    [draw(), draw(), draw()]
}

fn forward_filters(ch: &TripleChannels, v: &[Vec2; N_CELLS]) -> [Vec2; N_CELLS] {
    let mut w = [Vec2::real(1.0, 0.0); N_CELLS];
    for (m, wm) in w.iter_mut().enumerate() {
        let mut q = Mat2::ZERO;
        for (j, vj) in v.iter().enumerate() {
            if j != m {
                q = q.add(&ch.h[j][m].apply(vj).outer(1.0));
            }
        }
        // Built from outer products, so Hermitian PSD up to rounding.
        *wm = least_eigvec_2x2_hermitian(&q).unwrap_or(Vec2::real(1.0, 0.0));
    }
    w
}

fn reverse_precoders(ch: &TripleChannels, w: &[Vec2; N_CELLS]) -> [Vec2; N_CELLS] {
    let mut v = [Vec2::real(1.0, 0.0); N_CELLS];
    for (j, vj) in v.iter_mut().enumerate() {
        let mut q = Mat2::ZERO;
        for (m, wm) in w.iter().enumerate() {
            if m != j {
                q = q.add(&ch.h[j][m].apply_adjoint(wm).outer(1.0));
            }
        }
        *vj = least_eigvec_2x2_hermitian(&q).unwrap_or(Vec2::real(1.0, 0.0));
    }
    v
}

/// Single run of the leakage-minimizing iteration from the given precoders.
pub fn distributed_ia_from(
    ch: &TripleChannels,
    mut v: [Vec2; N_CELLS],
    params: &IaParams,
) -> IaSolution {
    let mut history = Vec::with_capacity(params.max_iters);
    let mut w = forward_filters(ch, &v);
    for _ in 0..params.max_iters.max(1) {
        w = forward_filters(ch, &v);
        v = reverse_precoders(ch, &w);
        let l = leakage(ch, &v, &w);
        history.push(l);
        if l <= params.leakage_tol {
            break;
        }
    }
    IaSolution {
        precoders: v,
        filters: w,
        leakage: *history.last().unwrap_or(&leakage(ch, &v, &w)),
        iterations_used: history.len(),
        leakage_history: history,
    }
}

/// Distributed interference alignment by alternating leakage minimization
/// between the forward and the reciprocal (conjugate-transposed) network.
///
/// Leakage is evaluated with unit stream powers and never increases between
/// iterations. With several starts the lowest-leakage run is returned.
pub fn distributed_ia(ch: &TripleChannels, params: &IaParams) -> IaSolution {
    let mut best: Option<IaSolution> = None;
    for start in 0..params.restarts.max(1) {
        let sol = distributed_ia_from(ch, initial_precoders(start, params.seed), params);
        if best.as_ref().is_none_or(|b| sol.leakage < b.leakage) {
            best = Some(sol);
        }
    }
    best.expect("at least one start")
}

fn max_sinr_filters(
    ch: &TripleChannels,
    v: &[Vec2; N_CELLS],
    stream_power: f64,
    noise: f64,
    reverse: bool,
) -> [Vec2; N_CELLS] {
    let mut out = [Vec2::real(1.0, 0.0); N_CELLS];
    for (r, o) in out.iter_mut().enumerate() {
        let mut b = Mat2::identity();
        for i in 0..2 {
            b.0[i][i] *= noise;
        }
        for (t, vt) in v.iter().enumerate() {
            if t == r {
                continue;
            }
            let x = if reverse {
                ch.h[r][t].apply_adjoint(vt)
            } else {
                ch.h[t][r].apply(vt)
            };
            b = b.add(&x.outer(stream_power));
        }
        let d = if reverse {
            ch.h[r][r].apply_adjoint(&v[r])
        } else {
            ch.h[r][r].apply(&v[r])
        };
        *o = b
            .solve(&d)
            .map(|x| x.normalized().phase_fixed())
            .unwrap_or(Vec2::real(1.0, 0.0));
    }
    out
}

/// Sum of `log2(1 + SINR)` over the three streams with equal stream powers.
pub fn equal_power_sum_rate(
    ch: &TripleChannels,
    v: &[Vec2; N_CELLS],
    w: &[Vec2; N_CELLS],
    stream_power: f64,
    noise: f64,
) -> f64 {
    let mut s = 0.0;
    for m in 0..N_CELLS {
        let sig = stream_power * ch.h[m][m].bilinear_gain(&w[m], &v[m]);
        let mut den = noise;
        for j in 0..N_CELLS {
            if j != m {
                den += stream_power * ch.h[j][m].bilinear_gain(&w[m], &v[j]);
            }
        }
        s += (1.0 + sig / den).log2();
    }
    s
}

/// Alternating max-SINR design: every receiver applies the MMSE-type filter
/// `(sigma^2 I + sum_j P H v v^H H^H)^{-1} H v`, then the reciprocal network
/// does the same with conjugate-transposed channels. Starts follow the same
/// rule as [`distributed_ia`]; the start with the highest equal-power sum rate
/// wins.
pub fn max_sinr_ia(
    ch: &TripleChannels,
    stream_power: f64,
    noise_variance: f64,
    params: &IaParams,
) -> IaSolution {
    let mut best: Option<(f64, IaSolution)> = None;
    for start in 0..params.restarts.max(1) {
        let mut v = initial_precoders(start, params.seed);
        if start == 0 {
            // (1, 0) is a fixed point of the leakage iteration with zero
            // desired signal; the SINR iteration starts from the diagonal.
            let s = std::f64::consts::FRAC_1_SQRT_2;
            v = [Vec2::real(s, s); N_CELLS];
        }
        let mut history = Vec::with_capacity(params.max_iters);
        for _ in 0..params.max_iters.max(1) {
            let w = max_sinr_filters(ch, &v, stream_power, noise_variance, false);
            v = max_sinr_filters(ch, &w, stream_power, noise_variance, true);
            history.push(leakage(ch, &v, &w));
        }
        let w = max_sinr_filters(ch, &v, stream_power, noise_variance, false);
        let score = equal_power_sum_rate(ch, &v, &w, stream_power, noise_variance);
        let sol = IaSolution {
            precoders: v,
            filters: w,
            leakage: leakage(ch, &v, &w),
            iterations_used: history.len(),
            leakage_history: history,
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, sol));
        }
    }
    best.expect("at least one start").1
}

/// Runs the configured design for one triple.
pub fn design_precoders(
    ch: &TripleChannels,
    stream_power: f64,
    noise_variance: f64,
    params: &IaParams,
) -> IaSolution {
    match params.design {
        IaDesign::LeakageMin => distributed_ia(ch, params),
        IaDesign::MaxSinr => max_sinr_ia(ch, stream_power, noise_variance, params),
    }
}

/// Noise-normalized effective gains of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveGains {
    /// `|u_m H_{m,m} v_m|^2 / sigma^2`.
    pub direct: [f64; N_CELLS],
    /// `cross[j][m] = |u_m H_{j,m} v_j|^2 / sigma^2`, zero diagonal.
    pub cross: [[f64; N_CELLS]; N_CELLS],
}

impl EffectiveGains {
    /// As a full `g[tx][cell]` matrix with the direct gains on the diagonal.
    pub fn as_matrix(&self) -> [[f64; N_CELLS]; N_CELLS] {
        let mut g = self.cross;
        for m in 0..N_CELLS {
            g[m][m] = self.direct[m];
        }
        g
    }

    /// Same gains with the residual interference removed.
    pub fn perfect(&self) -> [[f64; N_CELLS]; N_CELLS] {
        let mut g = [[0.0; N_CELLS]; N_CELLS];
        for m in 0..N_CELLS {
            g[m][m] = self.direct[m];
        }
        g
    }
}

/// Effective direct and residual-interference gains for given precoders and
/// filters.
pub fn effective_gains(
    ch: &TripleChannels,
    precoders: &[Vec2; N_CELLS],
    filters: &[Vec2; N_CELLS],
    noise_variance: f64,
) -> EffectiveGains {
    let mut direct = [0.0; N_CELLS];
    let mut cross = [[0.0; N_CELLS]; N_CELLS];
    for m in 0..N_CELLS {
        for j in 0..N_CELLS {
            let g = ch.h[j][m].bilinear_gain(&filters[m], &precoders[j]) / noise_variance;
            if j == m {
                direct[m] = g;
            } else {
                cross[j][m] = g;
            }
        }
    }
    EffectiveGains { direct, cross }
}

/// Random diagonal triple, used by tests and examples.
pub fn random_triple(seed: u64, cross_variance: f64) -> TripleChannels {
    let mut rng = seeded(seed);
    let mut h = [[Diag2::ZERO; N_CELLS]; N_CELLS];
    for (j, row) in h.iter_mut().enumerate() {
        for (m, e) in row.iter_mut().enumerate() {
            let var: f64 = if j == m { 1.0 } else { cross_variance };
            let s = (var / 2.0).sqrt();
            for z in e.0.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *z = num_complex::Complex64::new(re * s, im * s);
            }
        }
    }
    TripleChannels { h }
}
