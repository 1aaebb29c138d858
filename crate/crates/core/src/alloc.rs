//! Weighted sum-rate allocation in the dual domain.
//!
//! Pricing each base station's power budget with a multiplier `lambda_m`
//! splits the coupled problem into independent per-subcarrier (or per-pair)
//! problems `max sum_m (w_m r_m - lambda_m p_m)` over the selected user triple
//! and the three powers. The prices themselves are found with the ellipsoid
//! method on the dual function.

use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::channel::N_CELLS;
use crate::error::{Error, Result};

/// `g[tx][cell]`: noise-normalized power gain from base station `tx` to the
/// user selected in `cell`.
pub type LinkGains = [[f64; N_CELLS]; N_CELLS];

/// SINR of the user in `cell` and its rate `log2(1 + sinr) / N`.
pub fn sinr_and_rate(
    g: &LinkGains,
    powers: &[f64; N_CELLS],
    n_subcarriers: usize,
    cell: usize,
) -> (f64, f64) {
    let mut interference = 1.0;
    for j in 0..N_CELLS {
        if j != cell {
            interference += powers[j] * g[j][cell];
        }
    }
    let sinr = powers[cell] * g[cell][cell] / interference;
    (sinr, (1.0 + sinr).log2() / n_subcarriers as f64)
}

/// `sum_m w_m r_m`.
pub fn weighted_rate(
    g: &LinkGains,
    weights: &[f64; N_CELLS],
    powers: &[f64; N_CELLS],
    n_subcarriers: usize,
) -> f64 {
    (0..N_CELLS)
        .map(|m| {
            if weights[m] == 0.0 || powers[m] <= 0.0 {
                0.0
            } else {
                weights[m] * sinr_and_rate(g, powers, n_subcarriers, m).1
            }
        })
        .sum()
}

/// Per-unit dual objective `sum_m (w_m r_m - lambda_m p_m)`.
pub fn unit_objective(
    g: &LinkGains,
    weights: &[f64; N_CELLS],
    lambda: &[f64; N_CELLS],
    powers: &[f64; N_CELLS],
    n_subcarriers: usize,
) -> f64 {
    weighted_rate(g, weights, powers, n_subcarriers)
        - (0..N_CELLS).map(|m| lambda[m] * powers[m]).sum::<f64>()
}

/// Water level solution `max(0, w / (lambda N ln2) - 1 / g)`.
pub fn waterfilling_power(
    g_eff: f64,
    weight: f64,
    lambda: f64,
    n_subcarriers: usize,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "water-filling needs a positive price, got {lambda}"
        )));
    }
    if !(g_eff > 0.0) {
        return Ok(0.0);
    }
    Ok((weight / (lambda * n_subcarriers as f64 * LN_2) - 1.0 / g_eff).max(0.0))
}

/// Single-link optimum of `w log2(1 + p g) / N - lambda p` on `[0, cap]`.
/// Returns `(power, value)`; `lambda = 0` puts the full cap on the link.
pub fn single_link_optimum(
    g: f64,
    weight: f64,
    lambda: f64,
    cap: f64,
    n_subcarriers: usize,
) -> (f64, f64) {
    if g <= 0.0 || weight <= 0.0 || cap <= 0.0 {
        return (0.0, 0.0);
    }
    let p = if lambda > 0.0 {
        waterfilling_power(g, weight, lambda, n_subcarriers)
            .unwrap_or(0.0)
            .min(cap)
    } else {
        cap
    };
    (
        p,
        weight * (1.0 + p * g).log2() / n_subcarriers as f64 - lambda * p,
    )
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Tuning of the per-unit power search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentParams {
    /// Golden-section tolerance, relative to the search bracket (floored at
    /// one unit of power).
    pub power_tol: f64,
    /// Stop when a full sweep improves the objective by less than this.
    pub improve_tol: f64,
    pub max_sweeps: usize,
}

impl Default for AscentParams {
    fn default() -> Self {
        Self {
            power_tol: 1e-5,
            improve_tol: 1e-9,
            max_sweeps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub powers: [f64; N_CELLS],
    pub objective: f64,
}

/// Inputs of the fixed-triple power problem.
#[derive(Debug, Clone, Copy)]
pub struct PowerProblem<'a> {
    pub gains: &'a LinkGains,
    pub weights: &'a [f64; N_CELLS],
    pub lambda: &'a [f64; N_CELLS],
    pub cap: &'a [f64; N_CELLS],
    pub n_subcarriers: usize,
}

impl PowerProblem<'_> {
    pub fn objective(&self, p: &[f64; N_CELLS]) -> f64 {
        unit_objective(self.gains, self.weights, self.lambda, p, self.n_subcarriers)
    }

    /// Upper end of the search interval for coordinate `m`. Past the water
    /// level `w / (lambda N ln2)` the own-rate slope is below the price and
    /// the interference terms only fall, so the maximizer lies below it.
    fn bracket(&self, m: usize) -> f64 {
        let cap = self.cap[m].max(0.0);
        if self.gains[m][m] <= 0.0 || self.weights[m] <= 0.0 {
            return 0.0;
        }
        if self.lambda[m] > 0.0 {
            let level = self.weights[m] / (self.lambda[m] * self.n_subcarriers as f64 * LN_2);
            // No positive power pays off once the price exceeds the slope at 0.
            if self.lambda[m] * self.n_subcarriers as f64 * LN_2
                >= self.weights[m] * self.gains[m][m]
            {
                return 0.0;
            }
            cap.min(level)
        } else {
            cap
        }
    }

    /// Maximizes over coordinate `m` with the other powers fixed. Never returns
    /// a point worse than the current one.
    fn coordinate_update(
        &self,
        p: &mut [f64; N_CELLS],
        m: usize,
        current: f64,
        params: &AscentParams,
    ) -> f64 {
        let hi = self.bracket(m);
        let base = *p;
        let eval = |x: f64| {
            let mut q = base;
            q[m] = x;
            self.objective(&q)
        };
        if hi <= 0.0 {
            p[m] = 0.0;
            return eval(0.0);
        }
        let mut best_x = p[m];
        let mut best_f = current;
        let tol = params.power_tol * hi.max(1.0);
        let (mut a, mut b) = (0.0, hi);
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = eval(x1);
        let mut f2 = eval(x2);
        while b - a > tol {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = eval(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = eval(x1);
            }
        }
        let mid = 0.5 * (a + b);
        for (x, f) in [(mid, eval(mid)), (0.0, eval(0.0)), (hi, eval(hi))] {
            if f > best_f {
                best_f = f;
                best_x = x;
            }
        }
        p[m] = best_x;
        best_f
    }

    /// Cyclic coordinate ascent from `start`. Returns the final point and the
    /// objective after every sweep.
    pub fn ascend_from(
        &self,
        start: [f64; N_CELLS],
        params: &AscentParams,
    ) -> (PowerSolution, Vec<f64>) {
        let mut p = start;
        for m in 0..N_CELLS {
            p[m] = p[m].clamp(0.0, self.cap[m].max(0.0));
        }
        let mut f = self.objective(&p);
        let mut history = vec![f];
        for _ in 0..params.max_sweeps {
            let before = f;
            for m in 0..N_CELLS {
                f = self.coordinate_update(&mut p, m, f, params);
            }
            history.push(f);
            if f - before < params.improve_tol {
                break;
            }
        }
        (
            PowerSolution {
                powers: p,
                objective: f,
            },
            history,
        )
    }

    /// The four deterministic starts: all zero, then each base station alone
    /// at its interference-free optimum.
    pub fn starts(&self) -> [[f64; N_CELLS]; 4] {
        let mut s = [[0.0; N_CELLS]; 4];
        for m in 0..N_CELLS {
            s[m + 1][m] = single_link_optimum(
                self.gains[m][m],
                self.weights[m],
                self.lambda[m],
                self.cap[m],
                self.n_subcarriers,
            )
            .0;
        }
        s
    }
}

/// Local maximization of `f_n` for a fixed user triple: cyclic coordinate
/// ascent with golden-section line searches from four starts, best result
/// kept.
pub fn optimize_powers_fixed_users(
    problem: &PowerProblem<'_>,
    params: &AscentParams,
) -> PowerSolution {
    let mut best: Option<PowerSolution> = None;
    for s in problem.starts() {
        let (sol, _) = problem.ascend_from(s, params);
        if best.as_ref().is_none_or(|b| sol.objective > b.objective) {
            best = Some(sol);
        }
    }
    best.expect("four starts")
}

/// Result of one per-unit subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSolution {
    /// Index of the chosen candidate inside the unit.
    pub choice: usize,
    /// Selected user per cell.
    pub users: [usize; N_CELLS],
    pub powers: [f64; N_CELLS],
    /// `f_n`, including the price term.
    pub value: f64,
}

/// One independent block of the dual decomposition: a subcarrier or a pair.
pub trait Unit: Sync {
    /// Solves `max f_n` for the given prices and per-unit power caps.
    fn solve(&self, lambda: &[f64; N_CELLS], cap: &[f64; N_CELLS]) -> UnitSolution;
    /// Weighted rate of a candidate at given powers.
    fn utility(&self, choice: usize, powers: &[f64; N_CELLS]) -> f64;
    /// Per-user rates of a candidate at given powers.
    fn rates(&self, choice: usize, powers: &[f64; N_CELLS]) -> [f64; N_CELLS];
    fn users_of(&self, choice: usize) -> [usize; N_CELLS];
    /// Largest weight times direct gain over all candidates of `cell`.
    fn max_weighted_direct_gain(&self, cell: usize) -> f64;
    fn max_weight(&self, cell: usize) -> f64;
    /// Number of candidates.
    fn n_choices(&self) -> usize;
}

/// Candidate users of one cell on one subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCandidates {
    pub users: Vec<usize>,
    /// `gains[i][tx]`: gain from `tx` to candidate `i`.
    pub gains: Vec<[f64; N_CELLS]>,
    pub weights: Vec<f64>,
}

/// Per-subcarrier problem of the traditional scheme.
#[derive(Debug, Clone)]
pub struct SubcarrierUnit {
    pub cells: [CellCandidates; N_CELLS],
    pub n_subcarriers: usize,
    pub ascent: AscentParams,
}

impl CellCandidates {
    /// Candidates of cell `cell` not dominated by another one. Candidate `j`
    /// dominates `i` when it has at least the weight and direct gain of `i`
    /// and at most its received interference; on exact equality the smaller
    /// index survives. Swapping a dominated user for its dominator never
    /// lowers the per-subcarrier objective, whatever the powers.
    pub fn undominated(&self, cell: usize) -> Vec<usize> {
        let n = self.users.len();
        let dominates = |j: usize, i: usize| {
            let (gj, gi) = (&self.gains[j], &self.gains[i]);
            let ge = self.weights[j] >= self.weights[i]
                && gj[cell] >= gi[cell]
                && (0..N_CELLS).all(|t| t == cell || gj[t] <= gi[t]);
            if !ge {
                return false;
            }
            let equal = self.weights[j] == self.weights[i] && gj == gi;
            !equal || j < i
        };
        (0..n)
            .filter(|&i| !(0..n).any(|j| j != i && dominates(j, i)))
            .collect()
    }
}

impl SubcarrierUnit {
    fn dims(&self) -> [usize; N_CELLS] {
        [
            self.cells[0].users.len(),
            self.cells[1].users.len(),
            self.cells[2].users.len(),
        ]
    }

    /// Lexicographic index of a candidate triple.
    pub fn encode(&self, idx: [usize; N_CELLS]) -> usize {
        let d = self.dims();
        (idx[0] * d[1] + idx[1]) * d[2] + idx[2]
    }

    pub fn decode(&self, choice: usize) -> [usize; N_CELLS] {
        let d = self.dims();
        [
            choice / (d[1] * d[2]),
            (choice / d[2]) % d[1],
            choice % d[2],
        ]
    }

    pub fn link_gains(&self, idx: [usize; N_CELLS]) -> LinkGains {
        let mut g = [[0.0; N_CELLS]; N_CELLS];
        for m in 0..N_CELLS {
            let col = self.cells[m].gains[idx[m]];
            for j in 0..N_CELLS {
                g[j][m] = col[j];
            }
        }
        g
    }

    fn weights(&self, idx: [usize; N_CELLS]) -> [f64; N_CELLS] {
        [
            self.cells[0].weights[idx[0]],
            self.cells[1].weights[idx[1]],
            self.cells[2].weights[idx[2]],
        ]
    }
}

/// Search over all user triples of one subcarrier. Each triple gets
/// [`optimize_powers_fixed_users`]; ties go to the lexicographically smallest
/// triple.
///
/// The sum of a triple's three interference-free single-link optima bounds
/// its value from above, since interference only lowers rates. Triples whose
/// bound cannot beat the incumbent are never evaluated.
pub fn per_sc_subproblem(
    unit: &SubcarrierUnit,
    lambda: &[f64; N_CELLS],
    cap: &[f64; N_CELLS],
) -> UnitSolution {
    let d = unit.dims();
    let n = unit.n_subcarriers;
    let single: Vec<Vec<f64>> = (0..N_CELLS)
        .map(|m| {
            (0..d[m])
                .map(|i| {
                    single_link_optimum(
                        unit.cells[m].gains[i][m],
                        unit.cells[m].weights[i],
                        lambda[m],
                        cap[m],
                        n,
                    )
                    .1
                })
                .collect()
        })
        .collect();
    let keep: [Vec<usize>; N_CELLS] = std::array::from_fn(|m| unit.cells[m].undominated(m));
    let mut order = Vec::with_capacity(keep.iter().map(Vec::len).product());
    for &a in &keep[0] {
        for &b in &keep[1] {
            for &c in &keep[2] {
                order.push((
                    single[0][a] + single[1][b] + single[2][c],
                    unit.encode([a, b, c]),
                ));
            }
        }
    }
    let (choice, powers, value) = best_first(order, |choice| {
        let idx = unit.decode(choice);
        let g = unit.link_gains(idx);
        let w = unit.weights(idx);
        let problem = PowerProblem {
            gains: &g,
            weights: &w,
            lambda,
            cap,
            n_subcarriers: n,
        };
        let sol = optimize_powers_fixed_users(&problem, &unit.ascent);
        (sol.powers, sol.objective)
    });
    // The user of a silent cell does not affect the objective; report the
    // first candidate, as a scan in lexicographic order would.
    let mut idx = unit.decode(choice);
    for m in 0..N_CELLS {
        if powers[m] == 0.0 {
            idx[m] = 0;
        }
    }
    let choice = unit.encode(idx);
    UnitSolution {
        choice,
        users: unit.users_of(choice),
        powers,
        value,
    }
}

/// Branch-and-bound over candidates given as `(upper bound, index)`.
/// Candidates are visited by decreasing bound and the search stops once no
/// bound can beat the incumbent. The result is the maximizer with the
/// smallest index, exactly as an exhaustive scan in index order would find.
fn best_first(
    mut order: Vec<(f64, usize)>,
    mut eval: impl FnMut(usize) -> ([f64; N_CELLS], f64),
) -> (usize, [f64; N_CELLS], f64) {
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut best: Option<(usize, [f64; N_CELLS], f64)> = None;
    for (bound, idx) in order {
        if let Some((bi, _, bv)) = best {
            if bound < bv || (bound == bv && idx > bi) {
                if bound < bv {
                    break;
                }
                continue;
            }
        }
        let (powers, value) = eval(idx);
        let better = match best {
            None => true,
            Some((bi, _, bv)) => value > bv || (value == bv && idx < bi),
        };
        if better {
            best = Some((idx, powers, value));
        }
    }
    best.expect("at least one candidate")
}

impl Unit for SubcarrierUnit {
    fn solve(&self, lambda: &[f64; N_CELLS], cap: &[f64; N_CELLS]) -> UnitSolution {
        per_sc_subproblem(self, lambda, cap)
    }

    fn utility(&self, choice: usize, powers: &[f64; N_CELLS]) -> f64 {
        let idx = self.decode(choice);
        weighted_rate(
            &self.link_gains(idx),
            &self.weights(idx),
            powers,
            self.n_subcarriers,
        )
    }

    fn rates(&self, choice: usize, powers: &[f64; N_CELLS]) -> [f64; N_CELLS] {
        let g = self.link_gains(self.decode(choice));
        let mut r = [0.0; N_CELLS];
        for (m, rm) in r.iter_mut().enumerate() {
            if powers[m] > 0.0 {
                *rm = sinr_and_rate(&g, powers, self.n_subcarriers, m).1;
            }
        }
        r
    }

    fn users_of(&self, choice: usize) -> [usize; N_CELLS] {
        let idx = self.decode(choice);
        [
            self.cells[0].users[idx[0]],
            self.cells[1].users[idx[1]],
            self.cells[2].users[idx[2]],
        ]
    }

    fn max_weighted_direct_gain(&self, cell: usize) -> f64 {
        let c = &self.cells[cell];
        c.gains
            .iter()
            .zip(&c.weights)
            .map(|(g, w)| g[cell] * w)
            .fold(0.0, f64::max)
    }

    fn max_weight(&self, cell: usize) -> f64 {
        self.cells[cell].weights.iter().copied().fold(0.0, f64::max)
    }

    fn n_choices(&self) -> usize {
        self.dims().iter().product()
    }
}

/// How the residual interference of an aligned pair is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// Residual interference neglected; closed-form water-filling powers.
    Perfect,
    /// Residual interference kept; powers by coordinate ascent.
    WithResidual,
}

/// One candidate triple of a subcarrier pair with its effective gains.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCandidate {
    pub users: [usize; N_CELLS],
    pub gains: LinkGains,
    pub weights: [f64; N_CELLS],
}

/// Per-pair problem of the alignment scheme.
#[derive(Debug, Clone)]
pub struct PairUnit {
    pub candidates: Vec<PairCandidate>,
    pub mode: PairMode,
    pub n_subcarriers: usize,
    pub ascent: AscentParams,
}

impl PairUnit {
    fn effective(&self, choice: usize) -> LinkGains {
        let g = self.candidates[choice].gains;
        match self.mode {
            PairMode::WithResidual => g,
            PairMode::Perfect => {
                let mut d = [[0.0; N_CELLS]; N_CELLS];
                for m in 0..N_CELLS {
                    d[m][m] = g[m][m];
                }
                d
            }
        }
    }
}

/// Per-pair subproblem over the candidate triples; ties go to the earliest
/// candidate.
///
/// With perfect alignment each stream is water-filled independently. With
/// residual interference the perfect-alignment value of a triple bounds its
/// value from above and is used to skip hopeless triples.
pub fn per_pair_subproblem(
    unit: &PairUnit,
    lambda: &[f64; N_CELLS],
    cap: &[f64; N_CELLS],
) -> UnitSolution {
    let n = unit.n_subcarriers;
    let mut order = Vec::with_capacity(unit.candidates.len());
    let mut perfect = Vec::with_capacity(unit.candidates.len());
    for (i, cand) in unit.candidates.iter().enumerate() {
        let mut powers = [0.0; N_CELLS];
        let mut bound = 0.0;
        for m in 0..N_CELLS {
            let (p, v) =
                single_link_optimum(cand.gains[m][m], cand.weights[m], lambda[m], cap[m], n);
            powers[m] = p;
            bound += v;
        }
        order.push((bound, i));
        perfect.push((powers, bound));
    }
    let (choice, powers, value) = best_first(order, |i| match unit.mode {
        PairMode::Perfect => perfect[i],
        PairMode::WithResidual => {
            let cand = &unit.candidates[i];
            let problem = PowerProblem {
                gains: &cand.gains,
                weights: &cand.weights,
                lambda,
                cap,
                n_subcarriers: n,
            };
            let sol = optimize_powers_fixed_users(&problem, &unit.ascent);
            (sol.powers, sol.objective)
        }
    });
    UnitSolution {
        choice,
        users: unit.candidates[choice].users,
        powers,
        value,
    }
}

impl Unit for PairUnit {
    fn solve(&self, lambda: &[f64; N_CELLS], cap: &[f64; N_CELLS]) -> UnitSolution {
        per_pair_subproblem(self, lambda, cap)
    }

    fn utility(&self, choice: usize, powers: &[f64; N_CELLS]) -> f64 {
        weighted_rate(
            &self.effective(choice),
            &self.candidates[choice].weights,
            powers,
            self.n_subcarriers,
        )
    }

    fn rates(&self, choice: usize, powers: &[f64; N_CELLS]) -> [f64; N_CELLS] {
        let g = self.effective(choice);
        let mut r = [0.0; N_CELLS];
        for (m, rm) in r.iter_mut().enumerate() {
            if powers[m] > 0.0 {
                *rm = sinr_and_rate(&g, powers, self.n_subcarriers, m).1;
            }
        }
        r
    }

    fn users_of(&self, choice: usize) -> [usize; N_CELLS] {
        self.candidates[choice].users
    }

    fn max_weighted_direct_gain(&self, cell: usize) -> f64 {
        self.candidates
            .iter()
            .map(|c| c.gains[cell][cell] * c.weights[cell])
            .fold(0.0, f64::max)
    }

    fn max_weight(&self, cell: usize) -> f64 {
        self.candidates
            .iter()
            .map(|c| c.weights[cell])
            .fold(0.0, f64::max)
    }

    fn n_choices(&self) -> usize {
        self.candidates.len()
    }
}

/// Either kind of unit; lets one dual master price a mixed band.
pub enum AnyUnit {
    Subcarrier(SubcarrierUnit),
    Pair(PairUnit),
}

impl AnyUnit {
    fn inner(&self) -> &dyn Unit {
        match self {
            AnyUnit::Subcarrier(u) => u,
            AnyUnit::Pair(u) => u,
        }
    }
}

impl Unit for AnyUnit {
    fn solve(&self, lambda: &[f64; N_CELLS], cap: &[f64; N_CELLS]) -> UnitSolution {
        self.inner().solve(lambda, cap)
    }
    fn utility(&self, choice: usize, powers: &[f64; N_CELLS]) -> f64 {
        self.inner().utility(choice, powers)
    }
    fn rates(&self, choice: usize, powers: &[f64; N_CELLS]) -> [f64; N_CELLS] {
        self.inner().rates(choice, powers)
    }
    fn users_of(&self, choice: usize) -> [usize; N_CELLS] {
        self.inner().users_of(choice)
    }
    fn max_weighted_direct_gain(&self, cell: usize) -> f64 {
        self.inner().max_weighted_direct_gain(cell)
    }
    fn max_weight(&self, cell: usize) -> f64 {
        self.inner().max_weight(cell)
    }
    fn n_choices(&self) -> usize {
        self.inner().n_choices()
    }
}

/// Primal allocation: one entry per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub choices: Vec<usize>,
    pub users: Vec<[usize; N_CELLS]>,
    /// `powers[unit][cell]`.
    pub powers: Vec<[f64; N_CELLS]>,
    pub utility: f64,
}

impl Allocation {
    pub fn power_used(&self) -> [f64; N_CELLS] {
        let mut s = [0.0; N_CELLS];
        for p in &self.powers {
            for m in 0..N_CELLS {
                s[m] += p[m];
            }
        }
        s
    }

    pub fn is_feasible(&self, budget: &[f64; N_CELLS]) -> bool {
        let used = self.power_used();
        self.powers.iter().flatten().all(|p| *p >= 0.0)
            && (0..N_CELLS).all(|m| used[m] <= budget[m] * (1.0 + 1e-6) + 1e-12)
    }

    /// Recomputes the weighted rate against `units`.
    pub fn recompute_utility<U: Unit>(&self, units: &[U]) -> f64 {
        units
            .iter()
            .zip(self.choices.iter().zip(&self.powers))
            .map(|(u, (c, p))| u.utility(*c, p))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualParams {
    /// Stop once the ellipsoid certifies `f(lambda) - min f <= tol * f`.
    pub tol: f64,
    pub max_iters: usize,
    /// Stop once the ellipsoid volume falls below this fraction of the
    /// initial one.
    pub volume_tol: f64,
}

impl Default for DualParams {
    fn default() -> Self {
        Self {
            tol: 1e-2,
            max_iters: 300,
            volume_tol: 1e-24,
        }
    }
}

/// One evaluated price vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DualIterate {
    pub lambda: [f64; N_CELLS],
    pub dual_value: f64,
    pub subgradient: [f64; N_CELLS],
    /// Weighted rate of the budget-rescaled primal at this price.
    pub primal_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// Price with the smallest dual value seen.
    pub lambda: [f64; N_CELLS],
    pub dual_value: f64,
    pub subgradient: [f64; N_CELLS],
    pub history: Vec<DualIterate>,
    pub iterations: usize,
    /// `(dual - primal) / dual` at termination.
    pub relative_gap: f64,
    /// Gap above the 5% acceptance threshold.
    pub gap_flag: bool,
}

/// Duality gap above which a run is flagged.
pub const GAP_FLAG_THRESHOLD: f64 = 0.05;

fn solve_all<U: Unit>(
    units: &[U],
    lambda: &[f64; N_CELLS],
    cap: &[f64; N_CELLS],
) -> Vec<UnitSolution> {
    units.par_iter().map(|u| u.solve(lambda, cap)).collect()
}

/// Primal point recovered from the per-unit optima at one price. Each base
/// station is either scaled down to its budget (if it overspends) or scaled
/// to exactly its budget; all eight combinations are evaluated and the best
/// is kept.
fn rescaled_primal<U: Unit>(
    units: &[U],
    sols: &[UnitSolution],
    budget: &[f64; N_CELLS],
) -> Allocation {
    let mut used = [0.0; N_CELLS];
    for s in sols {
        for m in 0..N_CELLS {
            used[m] += s.powers[m];
        }
    }
    let choices: Vec<usize> = sols.iter().map(|s| s.choice).collect();
    let mut best: Option<Allocation> = None;
    for mask in 0..(1usize << N_CELLS) {
        let mut scale = [1.0; N_CELLS];
        let mut duplicate = false;
        for m in 0..N_CELLS {
            let fill = mask & (1 << m) != 0;
            if used[m] > budget[m] {
                scale[m] = budget[m] / used[m];
                // Filling and capping coincide for an overspending station.
                duplicate |= fill;
            } else if fill {
                if used[m] > 0.0 {
                    scale[m] = budget[m] / used[m];
                } else {
                    duplicate = true;
                }
            }
        }
        if duplicate {
            continue;
        }
        let powers: Vec<[f64; N_CELLS]> = sols
            .iter()
            .map(|s| {
                [
                    s.powers[0] * scale[0],
                    s.powers[1] * scale[1],
                    s.powers[2] * scale[2],
                ]
            })
            .collect();
        let utility = units
            .iter()
            .zip(choices.iter().zip(&powers))
            .map(|(u, (c, p))| u.utility(*c, p))
            .sum();
        if best.as_ref().is_none_or(|b| utility > b.utility) {
            best = Some(Allocation {
                choices: choices.clone(),
                users: sols.iter().map(|s| s.users).collect(),
                powers,
                utility,
            });
        }
    }
    best.expect("mask 0 is never a duplicate")
}

/// Box `[0, U_m]` that contains an optimal price. At `lambda_m >= U_m` the
/// demand of base station `m` is at most its budget: either the price
/// exceeds every link's slope at zero power, or the water level caps the
/// summed demand at `P_m`.
pub fn lambda_upper_bounds<U: Unit>(
    units: &[U],
    budget: &[f64; N_CELLS],
    n_subcarriers: usize,
) -> [f64; N_CELLS] {
    let n = n_subcarriers as f64;
    let mut ub = [0.0; N_CELLS];
    for m in 0..N_CELLS {
        let wg = units
            .iter()
            .map(|u| u.max_weighted_direct_gain(m))
            .fold(0.0, f64::max);
        let w = units.iter().map(|u| u.max_weight(m)).fold(0.0, f64::max);
        let shutdown = wg / (n * LN_2);
        let level = if budget[m] > 0.0 {
            w * units.len() as f64 / (n * LN_2 * budget[m])
        } else {
            f64::INFINITY
        };
        ub[m] = shutdown.min(level).max(1e-300);
    }
    ub
}

/// Ellipsoid method on the dual function `f(lambda) = sum_n f_n + lambda^T P`.
///
/// Each evaluated price also yields a primal point: the per-unit optima,
/// scaled per base station to fit the budget. The best such point (or the
/// warm start, if better) is returned with the dual state.
pub fn dual_master<U: Unit>(
    units: &[U],
    budget: &[f64; N_CELLS],
    n_subcarriers: usize,
    params: &DualParams,
    warm_start: Option<&Allocation>,
) -> (DualState, Allocation) {
    let cap = *budget;
    let mut best_primal = Allocation {
        choices: vec![0; units.len()],
        users: units.iter().map(|u| u.users_of(0)).collect(),
        powers: vec![[0.0; N_CELLS]; units.len()],
        utility: 0.0,
    };
    if let Some(w) = warm_start {
        if w.choices.len() == units.len() && w.is_feasible(budget) {
            let u = w.recompute_utility(units);
            if u > best_primal.utility {
                best_primal = Allocation {
                    utility: u,
                    ..w.clone()
                };
            }
        }
    }

    if budget.iter().all(|p| *p <= 0.0) || units.is_empty() {
        let state = DualState {
            lambda: [0.0; N_CELLS],
            dual_value: 0.0,
            subgradient: *budget,
            history: Vec::new(),
            iterations: 0,
            relative_gap: 0.0,
            gap_flag: false,
        };
        return (state, best_primal);
    }

    let ub = lambda_upper_bounds(units, budget, n_subcarriers);
    let mut center = [ub[0] / 2.0, ub[1] / 2.0, ub[2] / 2.0];
    // Axis-aligned ellipsoid through the corners of the box.
    let mut shape = [[0.0; N_CELLS]; N_CELLS];
    for m in 0..N_CELLS {
        shape[m][m] = 0.75 * ub[m] * ub[m];
    }
    let dim = N_CELLS as f64;
    let shrink = dim * dim / (dim * dim - 1.0);
    // Volume ratio per iteration of the central-cut update.
    let vol_step = (dim / (dim + 1.0)) * shrink.powf((dim - 1.0) / 2.0);
    let mut log_volume = 0.0;

    let mut history: Vec<DualIterate> = Vec::new();
    let mut best_dual: Option<usize> = None;
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        iterations += 1;
        let cut: [f64; N_CELLS];
        if let Some(m) = (0..N_CELLS).find(|&m| center[m] < 0.0) {
            let mut a = [0.0; N_CELLS];
            a[m] = -1.0;
            cut = a;
        } else {
            let sols = solve_all(units, &center, &cap);
            let mut demand = [0.0; N_CELLS];
            let mut value = 0.0;
            for s in &sols {
                value += s.value;
                for m in 0..N_CELLS {
                    demand[m] += s.powers[m];
                }
            }
            let sub = [
                budget[0] - demand[0],
                budget[1] - demand[1],
                budget[2] - demand[2],
            ];
            value += (0..N_CELLS).map(|m| center[m] * budget[m]).sum::<f64>();
            let primal = rescaled_primal(units, &sols, budget);
            if primal.utility > best_primal.utility {
                best_primal = primal.clone();
            }
            history.push(DualIterate {
                lambda: center,
                dual_value: value,
                subgradient: sub,
                primal_value: primal.utility,
            });
            if best_dual.is_none_or(|b| value < history[b].dual_value) {
                best_dual = Some(history.len() - 1);
            }
            let bound = quad(&shape, &sub).max(0.0).sqrt();
            let f_best = history[best_dual.unwrap()].dual_value;
            if sub.iter().all(|s| *s == 0.0) || bound <= params.tol * f_best.abs().max(1e-300) {
                break;
            }
            cut = sub;
        }
        // Central cut keeping {x : cut^T (x - center) <= 0}.
        let ea = mat_vec(&shape, &cut);
        let denom = quad(&shape, &cut).max(0.0).sqrt();
        if denom <= 0.0 {
            break;
        }
        for m in 0..N_CELLS {
            center[m] -= ea[m] / (denom * (dim + 1.0));
        }
        for i in 0..N_CELLS {
            for j in 0..N_CELLS {
                shape[i][j] =
                    shrink * (shape[i][j] - 2.0 / (dim + 1.0) * ea[i] * ea[j] / (denom * denom));
            }
        }
        log_volume += vol_step.ln();
        if log_volume < params.volume_tol.ln() {
            break;
        }
    }

    let (lambda, dual_value, subgradient) = match best_dual {
        Some(b) => (
            history[b].lambda,
            history[b].dual_value,
            history[b].subgradient,
        ),
        None => (center, f64::INFINITY, [0.0; N_CELLS]),
    };
    let relative_gap = if dual_value > 0.0 && dual_value.is_finite() {
        ((dual_value - best_primal.utility) / dual_value).max(0.0)
    } else {
        0.0
    };
    let state = DualState {
        lambda,
        dual_value,
        subgradient,
        history,
        iterations,
        relative_gap,
        gap_flag: relative_gap > GAP_FLAG_THRESHOLD,
    };
    (state, best_primal)
}

fn mat_vec(a: &[[f64; N_CELLS]; N_CELLS], x: &[f64; N_CELLS]) -> [f64; N_CELLS] {
    let mut y = [0.0; N_CELLS];
    for i in 0..N_CELLS {
        for j in 0..N_CELLS {
            y[i] += a[i][j] * x[j];
        }
    }
    y
}

fn quad(a: &[[f64; N_CELLS]; N_CELLS], x: &[f64; N_CELLS]) -> f64 {
    let y = mat_vec(a, x);
    (0..N_CELLS).map(|i| x[i] * y[i]).sum()
}
