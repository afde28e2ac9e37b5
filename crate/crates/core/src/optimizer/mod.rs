//! Block-coordinate descent over `(A, C)` and the exhaustive oracle.
//!
//! The A-step moves serving links while the non-serving coordination bits of
//! the incumbent stay fixed: for a candidate association `A'` the evaluated
//! coordination is `(C \ A) | A'`, optionally widened to intra-operator or full
//! coordination when that fits the budgets. With `A' = A` the first candidate
//! is the incumbent itself, so the A-step never decreases the objective. The
//! C-step searches `C >= A` under the budgets and keeps the incumbent unless a
//! strictly better matrix is found.

pub mod baseline;
mod oracle;

use std::collections::HashSet;
use std::io::Write;

use nalgebra::DMatrix;

pub use oracle::{brute_force_oracle, count_feasible, oracle_benchmark, OracleResult};

use crate::coordination::{special_case, CoordinationMode, SharingDecision, SharingProblem};
use crate::error::{Error, Result};
use crate::evaluator::RateEvaluator;
use crate::interference::RATE_FLOOR_BPS;
use crate::matrix::BinMatrix;

/// Weighted sum of operator log-utilities under a rate evaluator.
pub struct Objective<'a> {
    pub problem: &'a SharingProblem,
    pub evaluator: &'a dyn RateEvaluator,
    /// Operator weights `alpha_z`, summing to one.
    pub weights: Vec<f64>,
}

impl<'a> Objective<'a> {
    /// Uniform weights `1 / Z`.
    pub fn new(problem: &'a SharingProblem, evaluator: &'a dyn RateEvaluator) -> Self {
        let z = problem.num_operators();
        Self {
            problem,
            evaluator,
            weights: vec![1.0 / z as f64; z],
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.len() != self.problem.num_operators() || weights.iter().any(|&w| !(w > 0.0)) || total <= 0.0 {
            return Err(Error::config("weights", "need one positive weight per operator"));
        }
        self.weights = weights.iter().map(|w| w / total).collect();
        Ok(self)
    }

    /// Weight of each UE's log-rate: its operator's weight.
    pub fn ue_weights(&self) -> Vec<f64> {
        let t = self.problem.topology();
        (0..t.num_ue()).map(|u| self.weights[t.ue_operator(u)]).collect()
    }

    pub fn value_of_rates(&self, rates: &[f64]) -> f64 {
        let t = self.problem.topology();
        rates
            .iter()
            .enumerate()
            .map(|(u, r)| self.weights[t.ue_operator(u)] * r.max(RATE_FLOOR_BPS).ln())
            .sum()
    }

    pub fn value(&self, decision: &SharingDecision) -> Result<f64> {
        Ok(self.value_of_rates(&self.evaluator.rates(decision)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    /// Largest association count enumerated exhaustively in the A-step.
    pub exhaustive_a_limit: u128,
    /// Largest number of budget-feasible coordination matrices searched
    /// exhaustively in the C-step; above it the C-step runs greedy plus local search.
    pub exhaustive_c_limit: u128,
    /// Minimum objective improvement per outer iteration.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Projected-gradient steps of the relaxed A-step.
    pub relaxation_steps: usize,
    pub relaxation_step_size: f64,
    /// Sweeps of single-UE moves after rounding in the relaxed A-step.
    pub max_move_sweeps: usize,
    /// Candidate limit of the exhaustive oracle.
    pub oracle_limit: u128,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            exhaustive_a_limit: 100_000,
            exhaustive_c_limit: 2_000,
            tolerance: 1e-9,
            max_iterations: 100,
            relaxation_steps: 40,
            relaxation_step_size: 0.5,
            max_move_sweeps: 20,
            oracle_limit: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Init,
    A,
    C,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub outer: usize,
    pub step: Step,
    pub objective: f64,
    pub changed_bits: usize,
    pub decision: SharingDecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Repeated,
    MaxIterations,
}

/// Objective after every half-step of a BCD run.
#[derive(Debug, Clone, PartialEq)]
pub struct BcdTrace {
    pub entries: Vec<TraceEntry>,
    pub reason: StopReason,
}

impl BcdTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.objective).collect()
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.entries.windows(2).all(|w| w[1].objective >= w[0].objective - tol)
    }

    /// CSV with one row per half-step: `iteration,objective,changed_bits`.
    /// `iteration` counts half-steps; 0 is the starting point.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,objective,changed_bits")?;
        for (k, e) in self.entries.iter().enumerate() {
            writeln!(out, "{k},{:.12e},{}", e.objective, e.changed_bits)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BcdResult {
    pub decision: SharingDecision,
    pub objective: f64,
    pub trace: BcdTrace,
}

fn better(v: f64, d: &SharingDecision, best_v: f64, best_d: &SharingDecision) -> bool {
    v > best_v || (v == best_v && d < best_d)
}

/// Coordination evaluated with association `new_a` during an A-step.
fn carried_coordination(current: &SharingDecision, new_a: &BinMatrix) -> BinMatrix {
    let old_a = &current.association;
    let c = &current.coordination;
    BinMatrix::from_fn(c.rows(), c.cols(), |b, u| (c.get(b, u) && !old_a.get(b, u)) || new_a.get(b, u))
}

fn a_candidate(current: &SharingDecision, a: BinMatrix) -> SharingDecision {
    let c = carried_coordination(current, &a);
    SharingDecision::new(a, c)
}

/// Decisions tried for association `a` in an A-step: the carried
/// coordination, plus its union with intra-operator and with full
/// coordination when those fit the budgets.
fn a_candidates(problem: &SharingProblem, current: &SharingDecision, a: &BinMatrix) -> Vec<SharingDecision> {
    let carried = a_candidate(current, a.clone());
    let mut out = vec![carried.clone()];
    for mode in [CoordinationMode::Partial, CoordinationMode::Full] {
        let c = carried.coordination.or(&special_case(problem.topology(), a, mode));
        if out.iter().any(|d| d.coordination == c) {
            continue;
        }
        let cand = SharingDecision::new(a.clone(), c);
        if problem.within_budget(&problem.costs(&cand)) {
            out.push(cand);
        }
    }
    out
}

/// Number of associations with one admissible serving BS per UE (ignoring cell size).
pub fn association_count(problem: &SharingProblem) -> u128 {
    (0..problem.num_ue()).fold(1u128, |acc, u| acc.saturating_mul(problem.candidates(u).len() as u128))
}

/// Maximizes the objective over `A` with the non-serving coordination fixed.
pub fn a_step(
    obj: &Objective,
    current: &SharingDecision,
    opts: &OptimizerOptions,
) -> Result<(SharingDecision, f64)> {
    let problem = obj.problem;
    let current_value = obj.value(current)?;
    if association_count(problem) <= opts.exhaustive_a_limit {
        let mut best = (current.clone(), current_value);
        let mut found = false;
        let mut a = BinMatrix::zeros(problem.num_bs(), problem.num_ue());
        let mut load = vec![0usize; problem.num_bs()];
        enumerate_associations(problem, 0, &mut a, &mut load, &mut |a| {
            for cand in a_candidates(problem, current, a) {
                if !problem.within_budget(&problem.costs(&cand)) {
                    continue;
                }
                let v = obj.value(&cand)?;
                found = true;
                if better(v, &cand, best.1, &best.0) {
                    best = (cand, v);
                }
            }
            Ok(())
        })?;
        if !found && !problem.is_feasible(current) {
            return Err(Error::Infeasible("no association satisfies the budget".into()));
        }
        return Ok(best);
    }
    relaxed_a_step(obj, current, current_value, opts)
}

/// Depth-first enumeration of associations respecting the cell-size limit.
pub(crate) fn enumerate_associations(
    problem: &SharingProblem,
    u: usize,
    a: &mut BinMatrix,
    load: &mut [usize],
    visit: &mut dyn FnMut(&BinMatrix) -> Result<()>,
) -> Result<()> {
    if u == problem.num_ue() {
        return visit(a);
    }
    for &b in problem.candidates(u) {
        if load[b] >= problem.n_bs() {
            continue;
        }
        load[b] += 1;
        a.set(b, u, true);
        enumerate_associations(problem, u + 1, a, load, visit)?;
        a.set(b, u, false);
        load[b] -= 1;
    }
    Ok(())
}

/// Relaxed A-step for instances too large to enumerate: projected gradient
/// ascent over per-UE simplices, rounding to the largest entry, cell-size
/// repair, then single-UE moves to a local optimum. The incumbent is kept unless
/// beaten.
fn relaxed_a_step(
    obj: &Objective,
    current: &SharingDecision,
    current_value: f64,
    opts: &OptimizerOptions,
) -> Result<(SharingDecision, f64)> {
    let problem = obj.problem;
    let (nb, nu) = (problem.num_bs(), problem.num_ue());
    let weights = obj.ue_weights();
    let mut x = DMatrix::from_fn(nb, nu, |b, u| if current.association.get(b, u) { 1.0 } else { 0.0 });

    let move_scores = || -> Result<DMatrix<f64>> {
        let mut g = DMatrix::zeros(nb, nu);
        for u in 0..nu {
            let here = current.association.first_in_col(u);
            for &b in problem.candidates(u) {
                if Some(b) == here {
                    continue;
                }
                let mut a = current.association.clone();
                if let Some(h) = here {
                    a.set(h, u, false);
                }
                a.set(b, u, true);
                if a.row_count(b) > problem.n_bs() {
                    continue;
                }
                let cand = a_candidate(current, a);
                g[(b, u)] = obj.value(&cand)? - current_value;
            }
        }
        Ok(g)
    };

    let mut fallback: Option<DMatrix<f64>> = None;
    for _ in 0..opts.relaxation_steps {
        let g = match obj.evaluator.relaxed_gradient(&x, current, &weights) {
            Some(g) => g,
            None => {
                if fallback.is_none() {
                    fallback = Some(move_scores()?);
                }
                fallback.clone().expect("computed above")
            }
        };
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            break;
        }
        for u in 0..nu {
            let cands = problem.candidates(u);
            let mut v: Vec<f64> = cands
                .iter()
                .map(|&b| x[(b, u)] + opts.relaxation_step_size * g[(b, u)] / scale)
                .collect();
            project_simplex(&mut v);
            for (k, &b) in cands.iter().enumerate() {
                x[(b, u)] = v[k];
            }
        }
    }

    let rounded = round_and_repair(problem, &x)?;
    let mut best = (current.clone(), current_value);
    for cand in a_candidates(problem, current, &rounded) {
        if problem.is_feasible(&cand) {
            let v = obj.value(&cand)?;
            if better(v, &cand, best.1, &best.0) {
                best = (cand, v);
            }
        }
    }
    // Single-UE moves from the best point so far until none improves.
    for _ in 0..opts.max_move_sweeps {
        let start = best.1;
        for u in 0..nu {
            for &b in problem.candidates(u) {
                let base = best.0.clone();
                let here = base.association.first_in_col(u);
                if Some(b) == here {
                    continue;
                }
                let mut a = base.association.clone();
                if let Some(h) = here {
                    a.set(h, u, false);
                }
                a.set(b, u, true);
                for cand in a_candidates(problem, &base, &a) {
                    if !problem.is_feasible(&cand) {
                        continue;
                    }
                    let v = obj.value(&cand)?;
                    if better(v, &cand, best.1, &best.0) {
                        best = (cand, v);
                    }
                }
            }
        }
        if best.1 <= start {
            break;
        }
    }
    Ok(best)
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k as f64 + 1.0);
        if x - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Largest relaxed entry per UE, then moves the lowest-scoring UEs out of
/// overfull cells to their next-best BS with room.
pub fn round_and_repair(problem: &SharingProblem, x: &DMatrix<f64>) -> Result<BinMatrix> {
    let (nb, nu) = (problem.num_bs(), problem.num_ue());
    let ranked: Vec<Vec<usize>> = (0..nu)
        .map(|u| {
            let mut c = problem.candidates(u).to_vec();
            c.sort_by(|&p, &q| x[(q, u)].total_cmp(&x[(p, u)]).then(p.cmp(&q)));
            c
        })
        .collect();
    let mut choice: Vec<usize> = vec![0; nu];
    let mut load = vec![0usize; nb];
    for u in 0..nu {
        let b = *ranked[u]
            .first()
            .ok_or_else(|| Error::Infeasible(format!("UE {} has no admissible BS", u + 1)))?;
        load[b] += 1;
    }
    loop {
        let Some(b) = (0..nb).find(|&b| load[b] > problem.n_bs()) else {
            break;
        };
        // UEs currently on b that still have a next option with room.
        let movable = (0..nu)
            .filter(|&u| ranked[u][choice[u]] == b)
            .filter_map(|u| {
                ranked[u]
                    .iter()
                    .enumerate()
                    .skip(choice[u] + 1)
                    .find(|&(_, &nb2)| load[nb2] < problem.n_bs())
                    .map(|(k, _)| (u, k))
            })
            .min_by(|&(u1, _), &(u2, _)| x[(b, u1)].total_cmp(&x[(b, u2)]).then(u1.cmp(&u2)));
        let Some((u, k)) = movable else {
            return Err(Error::Infeasible(format!("cannot relieve BS {}", b + 1)));
        };
        load[b] -= 1;
        choice[u] = k;
        load[ranked[u][k]] += 1;
    }
    Ok(BinMatrix::from_fn(nb, nu, |b, u| ranked[u][choice[u]] == b))
}

/// Coordination bits that may be toggled for association `A`: linked pairs not served.
fn free_bits(problem: &SharingProblem, association: &BinMatrix) -> Vec<(usize, usize)> {
    let t = problem.topology();
    let mut out = Vec::new();
    for b in 0..problem.num_bs() {
        for u in 0..problem.num_ue() {
            if t.is_linked(b, u) && !association.get(b, u) {
                out.push((b, u));
            }
        }
    }
    out
}

/// Maximizes the objective over `C >= A` within the budgets.
pub fn c_step(
    obj: &Objective,
    current: &SharingDecision,
    opts: &OptimizerOptions,
) -> Result<(SharingDecision, f64)> {
    let problem = obj.problem;
    let a = &current.association;
    let bits = free_bits(problem, a);
    let current_value = obj.value(current)?;
    let mut best = (current.clone(), current_value);
    let base = SharingDecision::uncoordinated(a.clone());
    if !problem.within_budget(&problem.costs(&base)) {
        return Err(Error::Infeasible("serving links alone exceed the budget".into()));
    }
    if oracle::coordination_count(problem, a) <= opts.exhaustive_c_limit {
        let mut c = a.clone();
        let costs = problem.costs(&base);
        enumerate_coordination(problem, a, &bits, 0, &mut c, costs, &mut |c| {
            let cand = SharingDecision::new(a.clone(), c.clone());
            let v = obj.value(&cand)?;
            if better(v, &cand, best.1, &best.0) {
                best = (cand, v);
            }
            Ok(())
        })?;
        return Ok(best);
    }
    for start in [base, current.clone()] {
        let (cand, v) = greedy_coordination(obj, start, &bits, opts.tolerance)?;
        let (cand, v) = local_search_coordination(obj, cand, v, &bits, opts.tolerance)?;
        if better(v, &cand, best.1, &best.0) {
            best = (cand, v);
        }
    }
    Ok(best)
}

/// Best-improvement local search over single-bit additions, removals and
/// swaps (one bit off, one bit on) that keep the budgets.
fn local_search_coordination(
    obj: &Objective,
    start: SharingDecision,
    start_value: f64,
    bits: &[(usize, usize)],
    tol: f64,
) -> Result<(SharingDecision, f64)> {
    let problem = obj.problem;
    let a = start.association.clone();
    let mut state = start;
    let mut value = start_value;
    loop {
        let on: Vec<(usize, usize)> = bits.iter().copied().filter(|&(b, u)| state.coordination.get(b, u)).collect();
        let off: Vec<(usize, usize)> = bits.iter().copied().filter(|&(b, u)| !state.coordination.get(b, u)).collect();
        let mut moves: Vec<(Option<(usize, usize)>, Option<(usize, usize)>)> = Vec::new();
        moves.extend(on.iter().map(|&x| (Some(x), None)));
        moves.extend(off.iter().map(|&y| (None, Some(y))));
        for &x in &on {
            moves.extend(off.iter().map(|&y| (Some(x), Some(y))));
        }
        let mut pick: Option<(SharingDecision, f64)> = None;
        for (drop, add) in moves {
            let mut c = state.coordination.clone();
            if let Some((b, u)) = drop {
                c.set(b, u, false);
            }
            if let Some((b, u)) = add {
                c.set(b, u, true);
            }
            let cand = SharingDecision::new(a.clone(), c);
            if !problem.within_budget(&problem.costs(&cand)) {
                continue;
            }
            let v = obj.value(&cand)?;
            if v - value > tol && pick.as_ref().is_none_or(|(d, pv)| better(v, &cand, *pv, d)) {
                pick = Some((cand, v));
            }
        }
        let Some((cand, v)) = pick else {
            break;
        };
        state = cand;
        value = v;
    }
    Ok((state, value))
}

/// Depth-first enumeration of coordination matrices within budget.
pub(crate) fn enumerate_coordination(
    problem: &SharingProblem,
    a: &BinMatrix,
    bits: &[(usize, usize)],
    k: usize,
    c: &mut BinMatrix,
    costs: Vec<f64>,
    visit: &mut dyn FnMut(&BinMatrix) -> Result<()>,
) -> Result<()> {
    if k == bits.len() {
        return visit(c);
    }
    enumerate_coordination(problem, a, bits, k + 1, c, costs.clone(), visit)?;
    let (b, u) = bits[k];
    let z = problem.owner(b, u);
    let mut with = costs;
    with[z] += problem.bit_penalty(a, b, u);
    if with[z] <= problem.budget(z) + 1e-9 {
        c.set(b, u, true);
        enumerate_coordination(problem, a, bits, k + 1, c, with, visit)?;
        c.set(b, u, false);
    }
    Ok(())
}

/// Adds the bit with the best utility gain per unit penalty until no bit
/// both fits the budget and improves the objective.
fn greedy_coordination(
    obj: &Objective,
    start: SharingDecision,
    bits: &[(usize, usize)],
    tol: f64,
) -> Result<(SharingDecision, f64)> {
    let problem = obj.problem;
    let a = start.association.clone();
    let mut state = start;
    let mut value = obj.value(&state)?;
    let mut costs = problem.costs(&state);
    loop {
        let mut pick: Option<(f64, f64, usize, SharingDecision)> = None;
        for (k, &(b, u)) in bits.iter().enumerate() {
            if state.coordination.get(b, u) {
                continue;
            }
            let z = problem.owner(b, u);
            let pen = problem.bit_penalty(&a, b, u);
            if costs[z] + pen > problem.budget(z) + 1e-9 {
                continue;
            }
            let cand = SharingDecision::new(a.clone(), state.coordination.clone().with(b, u, true));
            let v = obj.value(&cand)?;
            let gain = v - value;
            if gain <= tol {
                continue;
            }
            let ratio = gain / pen.max(1e-12);
            if pick.as_ref().is_none_or(|p| ratio > p.0) {
                pick = Some((ratio, v, k, cand));
            }
        }
        let Some((_, v, k, cand)) = pick else {
            break;
        };
        let (b, u) = bits[k];
        costs[problem.owner(b, u)] += problem.bit_penalty(&a, b, u);
        state = cand;
        value = v;
    }
    Ok((state, value))
}

/// Alternates A-steps and C-steps from a feasible starting point.
pub fn bcd_optimize(obj: &Objective, start: &SharingDecision, opts: &OptimizerOptions) -> Result<BcdResult> {
    obj.problem.check(start)?;
    let mut state = start.clone();
    let mut value = obj.value(&state)?;
    let mut entries = vec![TraceEntry {
        outer: 0,
        step: Step::Init,
        objective: value,
        changed_bits: 0,
        decision: state.clone(),
    }];
    let mut seen = HashSet::new();
    seen.insert(state.clone());
    let mut reason = StopReason::MaxIterations;
    for k in 1..=opts.max_iterations {
        let (s1, v1) = a_step(obj, &state, opts)?;
        entries.push(TraceEntry {
            outer: k,
            step: Step::A,
            objective: v1,
            changed_bits: s1.changed_bits(&state),
            decision: s1.clone(),
        });
        let (s2, v2) = c_step(obj, &s1, opts)?;
        entries.push(TraceEntry {
            outer: k,
            step: Step::C,
            objective: v2,
            changed_bits: s2.changed_bits(&s1),
            decision: s2.clone(),
        });
        let improvement = v2 - value;
        let repeated = !seen.insert(s2.clone());
        if improvement < opts.tolerance {
            if v2 > value {
                state = s2;
                value = v2;
            }
            reason = StopReason::Converged;
            break;
        }
        state = s2;
        value = v2;
        if repeated {
            reason = StopReason::Repeated;
            break;
        }
    }
    Ok(BcdResult {
        decision: state,
        objective: value,
        trace: BcdTrace { entries, reason },
    })
}
