//! End-to-end allocation schemes.
//!
//! * traditional: every subcarrier is its own dimension, priced by one dual
//!   master over all `N` subcarriers;
//! * IA: subcarrier pairs carry three aligned streams, one per cell;
//! * hybrid: a reserved subband runs the IA scheme for cell-intersection
//!   users, the rest runs the traditional scheme for everybody else, under a
//!   single budget per base station;
//! * OFP: each cell owns a third of the band, no interference at all.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::alloc::{
    dual_master, AnyUnit, AscentParams, CellCandidates, DualParams, DualState, LinkGains,
    PairCandidate, PairMode, PairUnit, SubcarrierUnit,
};
use crate::channel::{ChannelTensor, Region, UserLayout, N_CELLS};
use crate::error::{Error, Result};
use crate::ia::{
    build_paired_channels, design_precoders, effective_gains, pair_subcarriers, IaParams,
    PairedChannels,
};
use crate::linalg::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    Traditional,
    IaPerfect,
    IaRi,
    Hybrid,
    Ofp,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [
        SchemeId::Traditional,
        SchemeId::IaPerfect,
        SchemeId::IaRi,
        SchemeId::Hybrid,
        SchemeId::Ofp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeId::Traditional => "traditional",
            SchemeId::IaPerfect => "ia_perfect",
            SchemeId::IaRi => "ia_ri",
            SchemeId::Hybrid => "hybrid",
            SchemeId::Ofp => "ofp",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// Per-user weights `w[cell][user]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(pub [Vec<f64>; N_CELLS]);

impl Weights {
    /// Unit weights: plain sum rate.
    pub fn uniform(users_per_cell: usize) -> Self {
        Self(std::array::from_fn(|_| vec![1.0; users_per_cell]))
    }

    pub fn get(&self, cell: usize, user: usize) -> f64 {
        self.0[cell][user]
    }

    fn check(&self, tensor: &ChannelTensor) -> Result<()> {
        let k = tensor.users_per_cell();
        if self.0.iter().any(|c| c.len() != k) {
            return Err(Error::InvalidArgument(format!(
                "weights must list {k} users per cell"
            )));
        }
        if self
            .0
            .iter()
            .flatten()
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(Error::InvalidArgument(
                "weights must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SchemeParams {
    pub ia: IaParams,
    pub dual: DualParams,
    pub ascent: AscentParams,
    /// Keep only the strongest users per cell (by mean direct gain) when
    /// enumerating IA triples.
    pub ia_preselect: Option<usize>,
}

/// One allocated block of spectrum.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitAllocation {
    Subcarrier {
        sc: usize,
        users: [usize; N_CELLS],
        powers: [f64; N_CELLS],
    },
    Pair {
        subcarriers: (usize, usize),
        users: [usize; N_CELLS],
        powers: [f64; N_CELLS],
        precoders: [Vec2; N_CELLS],
        filters: [Vec2; N_CELLS],
        /// Whether the residual interference counts towards the rate.
        with_residual: bool,
    },
}

impl UnitAllocation {
    pub fn powers(&self) -> &[f64; N_CELLS] {
        match self {
            UnitAllocation::Subcarrier { powers, .. } | UnitAllocation::Pair { powers, .. } => {
                powers
            }
        }
    }

    pub fn users(&self) -> &[usize; N_CELLS] {
        match self {
            UnitAllocation::Subcarrier { users, .. } | UnitAllocation::Pair { users, .. } => users,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Mean unit-power leakage over the allocated pairs.
    pub mean_ia_leakage: f64,
    pub max_ia_leakage: f64,
    pub mean_ia_iterations: f64,
    pub dual_iterations: usize,
    pub gap_flag: bool,
    /// Hybrid only: which subbands fell back to traditional allocation.
    pub fallback_intersection: bool,
    pub fallback_outer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub scheme: SchemeId,
    pub sum_rate: f64,
    /// `per_user_rates[cell][user]`, weighted rates not applied.
    pub per_user_rates: [Vec<f64>; N_CELLS],
    pub power_used: [f64; N_CELLS],
    pub budget: [f64; N_CELLS],
    pub dual_gap: f64,
    pub dual_value: f64,
    pub diagnostics: Diagnostics,
    pub wall_time: f64,
    pub allocation: Vec<UnitAllocation>,
    /// Internal per-unit choices, usable as a warm start for a larger budget.
    pub warm: Option<crate::alloc::Allocation>,
}

impl SchemeResult {
    pub fn is_feasible(&self) -> bool {
        self.allocation
            .iter()
            .flat_map(|u| u.powers().iter())
            .all(|p| *p >= 0.0)
            && (0..N_CELLS).all(|m| self.power_used[m] <= self.budget[m] * (1.0 + 1e-6) + 1e-12)
    }
}

/// Recomputes the weighted sum rate of an allocation straight from the
/// channel tensor.
pub fn recompute_sum_rate(
    tensor: &ChannelTensor,
    weights: &Weights,
    allocation: &[UnitAllocation],
) -> f64 {
    per_user_rates(tensor, allocation)
        .iter()
        .enumerate()
        .map(|(m, r)| {
            r.iter()
                .enumerate()
                .map(|(k, x)| weights.get(m, k) * x)
                .sum::<f64>()
        })
        .sum()
}

/// Rates per user accumulated over the allocation.
pub fn per_user_rates(
    tensor: &ChannelTensor,
    allocation: &[UnitAllocation],
) -> [Vec<f64>; N_CELLS] {
    let n = tensor.n_subcarriers() as f64;
    let sigma2 = tensor.noise_variance();
    let mut rates: [Vec<f64>; N_CELLS] =
        std::array::from_fn(|_| vec![0.0; tensor.users_per_cell()]);
    for unit in allocation {
        match unit {
            UnitAllocation::Subcarrier { sc, users, powers } => {
                for m in 0..N_CELLS {
                    if powers[m] <= 0.0 {
                        continue;
                    }
                    let k = users[m];
                    let mut den = sigma2;
                    for j in 0..N_CELLS {
                        if j != m {
                            den += powers[j] * tensor.gain(j, m, k, *sc).norm_sqr();
                        }
                    }
                    let sinr = powers[m] * tensor.gain(m, m, k, *sc).norm_sqr() / den;
                    rates[m][k] += (1.0 + sinr).log2() / n;
                }
            }
            UnitAllocation::Pair {
                subcarriers: (a, b),
                users,
                powers,
                precoders,
                filters,
                with_residual,
            } => {
                for m in 0..N_CELLS {
                    if powers[m] <= 0.0 {
                        continue;
                    }
                    let k = users[m];
                    let link = |j: usize| {
                        let h = crate::linalg::Diag2([
                            tensor.gain(j, m, k, *a),
                            tensor.gain(j, m, k, *b),
                        ]);
                        h.bilinear_gain(&filters[m], &precoders[j])
                    };
                    let mut den = sigma2;
                    if *with_residual {
                        for j in 0..N_CELLS {
                            if j != m {
                                den += powers[j] * link(j);
                            }
                        }
                    }
                    let sinr = powers[m] * link(m) / den;
                    rates[m][k] += (1.0 + sinr).log2() / n;
                }
            }
        }
    }
    rates
}

fn check_budget(budget: &[f64; N_CELLS]) -> Result<()> {
    if budget.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument(
            "power budgets must be finite and >= 0".into(),
        ));
    }
    Ok(())
}

fn all_users(tensor: &ChannelTensor) -> [Vec<usize>; N_CELLS] {
    std::array::from_fn(|_| (0..tensor.users_per_cell()).collect())
}

/// Per-subcarrier unit restricted to the given candidate users.
pub fn subcarrier_unit(
    tensor: &ChannelTensor,
    weights: &Weights,
    sc: usize,
    candidates: &[Vec<usize>; N_CELLS],
    ascent: AscentParams,
) -> SubcarrierUnit {
    let cells = std::array::from_fn(|m| {
        let users = candidates[m].clone();
        let gains = users
            .iter()
            .map(|&k| std::array::from_fn(|j| tensor.norm_gain(j, m, k, sc)))
            .collect();
        let w = users.iter().map(|&k| weights.get(m, k)).collect();
        CellCandidates {
            users,
            gains,
            weights: w,
        }
    });
    SubcarrierUnit {
        cells,
        n_subcarriers: tensor.n_subcarriers(),
        ascent,
    }
}

/// Strongest `keep` users of each cell by mean direct gain, in index order.
pub fn preselect_users(
    tensor: &ChannelTensor,
    eligible: &[Vec<usize>; N_CELLS],
    keep: usize,
) -> [Vec<usize>; N_CELLS] {
    std::array::from_fn(|m| {
        let mut scored: Vec<(f64, usize)> = eligible[m]
            .iter()
            .map(|&k| {
                let mean = (0..tensor.n_subcarriers())
                    .map(|n| tensor.norm_gain(m, m, k, n))
                    .sum::<f64>()
                    / tensor.n_subcarriers() as f64;
                (mean, k)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = scored
            .into_iter()
            .take(keep.max(1))
            .map(|(_, k)| k)
            .collect();
        chosen.sort_unstable();
        chosen
    })
}

/// Precoders, filters and effective gains of every candidate triple on every
/// pair. Precoders do not depend on the prices, so one cache serves every
/// iteration of the dual master and both IA variants.
#[derive(Debug, Clone)]
pub struct IaCache {
    pub pairs: Vec<(usize, usize)>,
    /// `entries[pair]` in lexicographic triple order.
    pub entries: Vec<Vec<IaEntry>>,
}

#[derive(Debug, Clone)]
pub struct IaEntry {
    pub users: [usize; N_CELLS],
    pub precoders: [Vec2; N_CELLS],
    pub filters: [Vec2; N_CELLS],
    pub gains: LinkGains,
    pub leakage: f64,
    pub iterations: usize,
}

/// Nominal per-stream power used by SINR-driven precoder designs: the mean
/// budget spread evenly over the `N/2` pairs.
pub fn nominal_stream_power(budget: &[f64; N_CELLS], n_subcarriers: usize) -> f64 {
    budget.iter().sum::<f64>() / N_CELLS as f64 / (n_subcarriers as f64 / 2.0)
}

fn triples(candidates: &[Vec<usize>; N_CELLS]) -> Vec<[usize; N_CELLS]> {
    let mut out = Vec::new();
    for &a in &candidates[0] {
        for &b in &candidates[1] {
            for &c in &candidates[2] {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// Runs the precoder design for every `(pair, triple)` of the selected pairs.
pub fn prepare_ia_cache(
    tensor: &ChannelTensor,
    pair_indices: &[usize],
    candidates: &[Vec<usize>; N_CELLS],
    budget: &[f64; N_CELLS],
    params: &IaParams,
) -> Result<IaCache> {
    let pairing = pair_subcarriers(tensor.n_subcarriers())?;
    let paired: PairedChannels = build_paired_channels(tensor, &pairing)?;
    let sigma2 = tensor.noise_variance();
    let stream_power = nominal_stream_power(budget, tensor.n_subcarriers()).max(sigma2 * 1e-12);
    let trip = triples(candidates);
    let entries: Vec<Vec<IaEntry>> = pair_indices
        .par_iter()
        .map(|&pair| {
            trip.iter()
                .map(|&users| {
                    let ch = paired.triple(pair, users);
                    let sol = design_precoders(&ch, stream_power, sigma2, params);
                    let eff = effective_gains(&ch, &sol.precoders, &sol.filters, sigma2);
                    IaEntry {
                        users,
                        precoders: sol.precoders,
                        filters: sol.filters,
                        gains: eff.as_matrix(),
                        leakage: sol.leakage,
                        iterations: sol.iterations_used,
                    }
                })
                .collect()
        })
        .collect();
    Ok(IaCache {
        pairs: pair_indices.iter().map(|&p| pairing.pairs()[p]).collect(),
        entries,
    })
}

/// Dual-master units for the pairs of a cache.
pub fn pair_units(
    cache: &IaCache,
    weights: &Weights,
    mode: PairMode,
    n: usize,
    ascent: AscentParams,
) -> Vec<PairUnit> {
    cache
        .entries
        .iter()
        .map(|entries| PairUnit {
            candidates: entries
                .iter()
                .map(|e| PairCandidate {
                    users: e.users,
                    gains: e.gains,
                    weights: std::array::from_fn(|m| weights.get(m, e.users[m])),
                })
                .collect(),
            mode,
            n_subcarriers: n,
            ascent,
        })
        .collect()
}

/// How each dual-master unit maps back onto spectrum.
enum UnitKind<'a> {
    Subcarrier(usize),
    Pair(&'a IaCache, usize, bool),
}

fn finish(
    scheme: SchemeId,
    tensor: &ChannelTensor,
    weights: &Weights,
    budget: &[f64; N_CELLS],
    kinds: &[UnitKind<'_>],
    state: &DualState,
    alloc: crate::alloc::Allocation,
    started: Instant,
    mut diagnostics: Diagnostics,
) -> SchemeResult {
    let mut allocation = Vec::with_capacity(kinds.len());
    let mut leaks = Vec::new();
    let mut iters = Vec::new();
    for (i, kind) in kinds.iter().enumerate() {
        let powers = alloc.powers[i];
        let users = alloc.users[i];
        match kind {
            UnitKind::Subcarrier(sc) => allocation.push(UnitAllocation::Subcarrier {
                sc: *sc,
                users,
                powers,
            }),
            UnitKind::Pair(cache, p, with_residual) => {
                let e = &cache.entries[*p][alloc.choices[i]];
                leaks.push(e.leakage);
                iters.push(e.iterations as f64);
                allocation.push(UnitAllocation::Pair {
                    subcarriers: cache.pairs[*p],
                    users,
                    powers,
                    precoders: e.precoders,
                    filters: e.filters,
                    with_residual: *with_residual,
                });
            }
        }
    }
    if !leaks.is_empty() {
        diagnostics.mean_ia_leakage = leaks.iter().sum::<f64>() / leaks.len() as f64;
        diagnostics.max_ia_leakage = leaks.iter().copied().fold(0.0, f64::max);
        diagnostics.mean_ia_iterations = iters.iter().sum::<f64>() / iters.len() as f64;
    }
    diagnostics.dual_iterations = state.iterations;
    diagnostics.gap_flag = state.gap_flag;
    let per_user = per_user_rates(tensor, &allocation);
    let sum_rate = recompute_sum_rate(tensor, weights, &allocation);
    let mut power_used = [0.0; N_CELLS];
    for u in &allocation {
        for m in 0..N_CELLS {
            power_used[m] += u.powers()[m];
        }
    }
    SchemeResult {
        scheme,
        sum_rate,
        per_user_rates: per_user,
        power_used,
        budget: *budget,
        dual_gap: state.relative_gap,
        dual_value: state.dual_value,
        diagnostics,
        wall_time: started.elapsed().as_secs_f64(),
        allocation,
        warm: Some(alloc),
    }
}

/// Traditional scheme: one dual master over all `N` per-subcarrier problems.
pub fn run_traditional(
    tensor: &ChannelTensor,
    weights: &Weights,
    budget: &[f64; N_CELLS],
    params: &SchemeParams,
    warm: Option<&SchemeResult>,
) -> Result<SchemeResult> {
    let started = Instant::now();
    weights.check(tensor)?;
    check_budget(budget)?;
    let cands = all_users(tensor);
    let units: Vec<SubcarrierUnit> = (0..tensor.n_subcarriers())
        .map(|n| subcarrier_unit(tensor, weights, n, &cands, params.ascent))
        .collect();
    let (state, alloc) = dual_master(
        &units,
        budget,
        tensor.n_subcarriers(),
        &params.dual,
        warm.and_then(|w| w.warm.as_ref()),
    );
    let kinds: Vec<UnitKind<'_>> = (0..tensor.n_subcarriers())
        .map(UnitKind::Subcarrier)
        .collect();
    Ok(finish(
        SchemeId::Traditional,
        tensor,
        weights,
        budget,
        &kinds,
        &state,
        alloc,
        started,
        Diagnostics::default(),
    ))
}

/// Candidate users for the IA triples of a full-band IA run.
pub fn ia_candidates(tensor: &ChannelTensor, params: &SchemeParams) -> [Vec<usize>; N_CELLS] {
    let all = all_users(tensor);
    match params.ia_preselect {
        Some(keep) => preselect_users(tensor, &all, keep),
        None => all,
    }
}

/// IA scheme over all `N/2` pairs with a precomputed cache.
pub fn run_ia_cached(
    tensor: &ChannelTensor,
    weights: &Weights,
    budget: &[f64; N_CELLS],
    mode: PairMode,
    cache: &IaCache,
    params: &SchemeParams,
    warm: Option<&SchemeResult>,
) -> Result<SchemeResult> {
    let started = Instant::now();
    weights.check(tensor)?;
    check_budget(budget)?;
    let n = tensor.n_subcarriers();
    let units = pair_units(cache, weights, mode, n, params.ascent);
    let (state, alloc) = dual_master(
        &units,
        budget,
        n,
        &params.dual,
        warm.and_then(|w| w.warm.as_ref()),
    );
    let with_residual = mode == PairMode::WithResidual;
    let kinds: Vec<UnitKind<'_>> = (0..units.len())
        .map(|p| UnitKind::Pair(cache, p, with_residual))
        .collect();
    let scheme = if with_residual {
        SchemeId::IaRi
    } else {
        SchemeId::IaPerfect
    };
    Ok(finish(
        scheme,
        tensor,
        weights,
        budget,
        &kinds,
        &state,
        alloc,
        started,
        Diagnostics::default(),
    ))
}

/// IA scheme: pairs `(n, n + N/2)`, one aligned stream per cell on each pair.
pub fn run_ia(
    tensor: &ChannelTensor,
    weights: &Weights,
    budget: &[f64; N_CELLS],
    mode: PairMode,
    params: &SchemeParams,
    warm: Option<&SchemeResult>,
) -> Result<SchemeResult> {
    check_budget(budget)?;
    let n_pairs = tensor.n_subcarriers() / 2;
    let pair_indices: Vec<usize> = (0..n_pairs).collect();
    let cands = ia_candidates(tensor, params);
    let cache = prepare_ia_cache(tensor, &pair_indices, &cands, budget, &params.ia)?;
    run_ia_cached(tensor, weights, budget, mode, &cache, params, warm)
}

/// Split of the band between the IA subband and the traditional subband.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubbandPartition {
    /// Zero-based subcarriers reserved for intersection-region users.
    pub phi: Vec<usize>,
    /// The complement.
    pub phi_prime: Vec<usize>,
    /// Pairs `(i, i + N/2)` covering `phi`.
    pub pairs: Vec<(usize, usize)>,
}

/// `floor(N/6)` pairs `(i, i + floor(N/2))` at the bottom of each half band
/// go to the IA subband, everything else to the traditional one.
pub fn build_subband_partition(n_subcarriers: usize) -> Result<SubbandPartition> {
    if n_subcarriers < 6 {
        return Err(Error::InvalidDims(format!(
            "subband partition needs at least 6 subcarriers, got {n_subcarriers}"
        )));
    }
    let sixth = n_subcarriers / 6;
    let half = n_subcarriers / 2;
    let pairs: Vec<(usize, usize)> = (0..sixth).map(|i| (i, i + half)).collect();
    let mut in_phi = vec![false; n_subcarriers];
    for &(a, b) in &pairs {
        in_phi[a] = true;
        in_phi[b] = true;
    }
    let phi = (0..n_subcarriers).filter(|&n| in_phi[n]).collect();
    let phi_prime = (0..n_subcarriers).filter(|&n| !in_phi[n]).collect();
    Ok(SubbandPartition {
        phi,
        phi_prime,
        pairs,
    })
}

/// Hybrid scheme. IA over the pairs of the reserved subband for users of the
/// cell-intersection region, traditional allocation for the remaining users
/// on the rest of the band, one price per base station across both.
///
/// When some cell has no user of a region, the subband meant for that region
/// falls back to traditional allocation with every user eligible.
pub fn run_hybrid(
    tensor: &ChannelTensor,
    layout: &UserLayout,
    weights: &Weights,
    budget: &[f64; N_CELLS],
    params: &SchemeParams,
    warm: Option<&SchemeResult>,
) -> Result<SchemeResult> {
    let started = Instant::now();
    weights.check(tensor)?;
    check_budget(budget)?;
    let n = tensor.n_subcarriers();
    let partition = build_subband_partition(n)?;
    let everyone = all_users(tensor);
    let cir: [Vec<usize>; N_CELLS] = std::array::from_fn(|m| layout.users_in(m, Region::Cir));
    let cnir: [Vec<usize>; N_CELLS] = std::array::from_fn(|m| layout.users_in(m, Region::Cnir));
    let mut diagnostics = Diagnostics::default();
    diagnostics.fallback_intersection = cir.iter().any(|c| c.is_empty());
    diagnostics.fallback_outer = cnir.iter().any(|c| c.is_empty());

    let outer_cands = if diagnostics.fallback_outer {
        everyone.clone()
    } else {
        cnir
    };
    let mut units: Vec<AnyUnit> = Vec::new();
    let mut kinds_spec: Vec<(bool, usize)> = Vec::new();
    let cache;
    if diagnostics.fallback_intersection {
        cache = None;
        for &sc in &partition.phi {
            units.push(AnyUnit::Subcarrier(subcarrier_unit(
                tensor,
                weights,
                sc,
                &everyone,
                params.ascent,
            )));
            kinds_spec.push((false, sc));
        }
    } else {
        let cands = match params.ia_preselect {
            Some(keep) => preselect_users(tensor, &cir, keep),
            None => cir,
        };
        let pair_indices: Vec<usize> = partition.pairs.iter().map(|&(a, _)| a).collect();
        let c = prepare_ia_cache(tensor, &pair_indices, &cands, budget, &params.ia)?;
        for pu in pair_units(&c, weights, PairMode::WithResidual, n, params.ascent) {
            units.push(AnyUnit::Pair(pu));
        }
        for p in 0..pair_indices.len() {
            kinds_spec.push((true, p));
        }
        cache = Some(c);
    }
    for &sc in &partition.phi_prime {
        units.push(AnyUnit::Subcarrier(subcarrier_unit(
            tensor,
            weights,
            sc,
            &outer_cands,
            params.ascent,
        )));
        kinds_spec.push((false, sc));
    }
    let (state, alloc) = dual_master(
        &units,
        budget,
        n,
        &params.dual,
        warm.and_then(|w| w.warm.as_ref()),
    );
    let kinds: Vec<UnitKind<'_>> = kinds_spec
        .iter()
        .map(|&(is_pair, i)| {
            if is_pair {
                UnitKind::Pair(cache.as_ref().expect("pairs imply a cache"), i, true)
            } else {
                UnitKind::Subcarrier(i)
            }
        })
        .collect();
    Ok(finish(
        SchemeId::Hybrid,
        tensor,
        weights,
        budget,
        &kinds,
        &state,
        alloc,
        started,
        diagnostics,
    ))
}

/// Subcarriers owned by each cell under orthogonal partitioning; the
/// `N mod 3` leftovers go to the last cell.
pub fn ofp_blocks(n_subcarriers: usize) -> [Vec<usize>; N_CELLS] {
    let third = n_subcarriers / 3;
    std::array::from_fn(|m| {
        let end = if m == N_CELLS - 1 {
            n_subcarriers
        } else {
            (m + 1) * third
        };
        (m * third..end).collect()
    })
}

/// Weighted water-filling of one base station over its own subcarriers,
/// `p_n = (w_n / (lambda N ln2) - 1/g_n)^+`, with the price found by
/// bisection so that the budget is met to `1e-8` relative.
pub fn weighted_waterfill(
    gains: &[f64],
    weights: &[f64],
    budget: f64,
    n_subcarriers: usize,
) -> Vec<f64> {
    let n = n_subcarriers as f64;
    let demand = |lambda: f64| -> (f64, Vec<f64>) {
        let p: Vec<f64> = gains
            .iter()
            .zip(weights)
            .map(|(&g, &w)| {
                if g > 0.0 && w > 0.0 {
                    (w / (lambda * n * LN_2) - 1.0 / g).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        (p.iter().sum(), p)
    };
    let top = gains
        .iter()
        .zip(weights)
        .map(|(g, w)| g * w)
        .fold(0.0, f64::max)
        / (n * LN_2);
    if budget <= 0.0 || top <= 0.0 {
        return vec![0.0; gains.len()];
    }
    // demand(top) = 0 <= budget; walk down until the budget is exceeded.
    let mut hi = top;
    let mut lo = top / 2.0;
    while demand(lo).0 < budget {
        hi = lo;
        lo /= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (d, _) = demand(mid);
        if d > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    let (d, mut p) = demand(hi);
    if d > 0.0 && (budget - d) / budget > 1e-8 {
        // Distribute the residual over the active links at a common level.
        let active: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
        let extra = (budget - d) / active.len().max(1) as f64;
        for i in active {
            p[i] += extra;
        }
    }
    p
}

/// Orthogonal frequency partition: each cell serves, on every subcarrier of
/// its third of the band, the user with the largest weighted gain and
/// water-fills its budget across them.
pub fn run_ofp(
    tensor: &ChannelTensor,
    weights: &Weights,
    budget: &[f64; N_CELLS],
) -> Result<SchemeResult> {
    let started = Instant::now();
    weights.check(tensor)?;
    check_budget(budget)?;
    let n = tensor.n_subcarriers();
    let blocks = ofp_blocks(n);
    let mut allocation = Vec::with_capacity(n);
    for (m, block) in blocks.iter().enumerate() {
        let mut chosen = Vec::with_capacity(block.len());
        for &sc in block {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for k in 0..tensor.users_per_cell() {
                let v = weights.get(m, k) * tensor.norm_gain(m, m, k, sc);
                if v > best.0 {
                    best = (v, k);
                }
            }
            chosen.push(best.1);
        }
        let g: Vec<f64> = block
            .iter()
            .zip(&chosen)
            .map(|(&sc, &k)| tensor.norm_gain(m, m, k, sc))
            .collect();
        let w: Vec<f64> = chosen.iter().map(|&k| weights.get(m, k)).collect();
        let p = weighted_waterfill(&g, &w, budget[m], n);
        for ((&sc, &k), &pw) in block.iter().zip(&chosen).zip(&p) {
            let mut users = [0; N_CELLS];
            users[m] = k;
            let mut powers = [0.0; N_CELLS];
            powers[m] = pw;
            allocation.push(UnitAllocation::Subcarrier { sc, users, powers });
        }
    }
    allocation.sort_by_key(|u| match u {
        UnitAllocation::Subcarrier { sc, .. } => *sc,
        UnitAllocation::Pair { subcarriers, .. } => subcarriers.0,
    });
    let per_user = per_user_rates(tensor, &allocation);
    let sum_rate = recompute_sum_rate(tensor, weights, &allocation);
    let mut power_used = [0.0; N_CELLS];
    for u in &allocation {
        for m in 0..N_CELLS {
            power_used[m] += u.powers()[m];
        }
    }
    Ok(SchemeResult {
        scheme: SchemeId::Ofp,
        sum_rate,
        per_user_rates: per_user,
        power_used,
        budget: *budget,
        dual_gap: 0.0,
        dual_value: sum_rate,
        diagnostics: Diagnostics::default(),
        wall_time: started.elapsed().as_secs_f64(),
        allocation,
        warm: None,
    })
}

/// Single-cell reference: water-filling of cell `m` over all subcarriers with
/// the best user per subcarrier, ignoring the other cells.
pub fn single_cell_waterfill_rate(
    tensor: &ChannelTensor,
    weights: &Weights,
    cell: usize,
    budget: f64,
) -> f64 {
    let n = tensor.n_subcarriers();
    let mut g = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for sc in 0..n {
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for k in 0..tensor.users_per_cell() {
            let gk = tensor.norm_gain(cell, cell, k, sc);
            let wk = weights.get(cell, k);
            if wk * gk > best.0 {
                best = (wk * gk, gk, wk);
            }
        }
        g.push(best.1);
        w.push(best.2);
    }
    let p = weighted_waterfill(&g, &w, budget, n);
    p.iter()
        .zip(g.iter().zip(&w))
        .map(|(p, (g, w))| w * (1.0 + p * g).log2() / n as f64)
        .sum()
}
