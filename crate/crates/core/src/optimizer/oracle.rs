//! Exhaustive maximization over all feasible `(A, C)` and the oracle benchmark.

use crate::coordination::{SharingDecision, SharingProblem};
use crate::error::{Error, Result};
use crate::matrix::BinMatrix;

use super::baseline::{closest_bs_decision, strongest_bs_decision};
use super::{bcd_optimize, better, enumerate_associations, enumerate_coordination, free_bits, Objective, OptimizerOptions};

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub decision: SharingDecision,
    pub objective: f64,
    /// Feasible candidates in the instance (when counted).
    pub candidates: Option<u128>,
    /// True when the result comes from full enumeration.
    pub exhaustive: bool,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Subsets of `groups` (penalty, count) whose total penalty fits in `room`.
fn count_subsets(groups: &[(f64, usize)], room: f64) -> u128 {
    let Some((&(pen, n), rest)) = groups.split_first() else {
        return 1;
    };
    let mut total: u128 = 0;
    for k in 0..=n {
        let spent = pen * k as f64;
        if spent > room + 1e-9 {
            break;
        }
        total = total.saturating_add(binomial(n, k).saturating_mul(count_subsets(rest, room - spent)));
    }
    total
}

/// Budget-feasible coordination matrices `C >= A` for association `A`.
pub(crate) fn coordination_count(problem: &SharingProblem, a: &BinMatrix) -> u128 {
    let base = problem.costs(&SharingDecision::uncoordinated(a.clone()));
    if !problem.within_budget(&base) {
        return 0;
    }
    let bits = free_bits(problem, a);
    let mut total: u128 = 1;
    for (z, &spent) in base.iter().enumerate() {
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for &(b, u) in bits.iter().filter(|&&(b, u)| problem.owner(b, u) == z) {
            let pen = problem.bit_penalty(a, b, u);
            match groups.iter_mut().find(|g| g.0 == pen) {
                Some(g) => g.1 += 1,
                None => groups.push((pen, 1)),
            }
        }
        groups.sort_by(|x, y| x.0.total_cmp(&y.0));
        total = total.saturating_mul(count_subsets(&groups, problem.budget(z) - spent));
    }
    total
}

/// Number of feasible `(A, C)` pairs; stops counting once `limit` is exceeded.
pub fn count_feasible(problem: &SharingProblem, limit: u128) -> u128 {
    let mut total: u128 = 0;
    let mut a = BinMatrix::zeros(problem.num_bs(), problem.num_ue());
    let mut load = vec![0usize; problem.num_bs()];
    let _ = enumerate_associations(problem, 0, &mut a, &mut load, &mut |a| {
        total = total.saturating_add(coordination_count(problem, a));
        if total > limit {
            Err(Error::TooLarge {
                candidates: total,
                limit,
            })
        } else {
            Ok(())
        }
    });
    total
}

/// Exact maximizer by enumeration; refuses instances above `limit` candidates.
pub fn brute_force_oracle(obj: &Objective, limit: u128) -> Result<OracleResult> {
    let problem = obj.problem;
    let count = count_feasible(problem, limit);
    if count > limit {
        return Err(Error::TooLarge {
            candidates: count,
            limit,
        });
    }
    if count == 0 {
        return Err(Error::EmptyFeasibleSet);
    }
    let mut best: Option<(SharingDecision, f64)> = None;
    let mut a = BinMatrix::zeros(problem.num_bs(), problem.num_ue());
    let mut load = vec![0usize; problem.num_bs()];
    enumerate_associations(problem, 0, &mut a, &mut load, &mut |a| {
        let base = SharingDecision::uncoordinated(a.clone());
        let costs = problem.costs(&base);
        if !problem.within_budget(&costs) {
            return Ok(());
        }
        let bits = free_bits(problem, a);
        let mut c = a.clone();
        enumerate_coordination(problem, a, &bits, 0, &mut c, costs, &mut |c| {
            let cand = SharingDecision::new(a.clone(), c.clone());
            let v = obj.value(&cand)?;
            if best.as_ref().is_none_or(|(d, bv)| better(v, &cand, *bv, d)) {
                best = Some((cand, v));
            }
            Ok(())
        })
    })?;
    let (decision, objective) = best.ok_or(Error::EmptyFeasibleSet)?;
    Ok(OracleResult {
        decision,
        objective,
        candidates: Some(count),
        exhaustive: true,
    })
}

/// Best achievable decision with true rates: enumeration when the instance has
/// at most `exhaustive_limit` candidates, otherwise BCD from the strongest-BS
/// and closest-BS starting points.
pub fn oracle_benchmark(obj: &Objective, opts: &OptimizerOptions, exhaustive_limit: u128) -> Result<OracleResult> {
    let count = count_feasible(obj.problem, exhaustive_limit);
    if count <= exhaustive_limit {
        return brute_force_oracle(obj, exhaustive_limit);
    }
    let mut starts = vec![strongest_bs_decision(obj.problem)?];
    if let Ok(c) = closest_bs_decision(obj.problem) {
        if obj.problem.is_feasible(&c) && !starts.contains(&c) {
            starts.push(c);
        }
    }
    let mut best: Option<(SharingDecision, f64)> = None;
    for s in &starts {
        let r = bcd_optimize(obj, s, opts)?;
        if best.as_ref().is_none_or(|(d, v)| better(r.objective, &r.decision, *v, d)) {
            best = Some((r.decision, r.objective));
        }
    }
    let (decision, objective) = best.expect("at least one start");
    Ok(OracleResult {
        decision,
        objective,
        candidates: None,
        exhaustive: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SharingConfig;
    use crate::evaluator::RateEvaluator;
    use crate::topology::{NetworkTopology, Node};

    struct Constant;
    impl RateEvaluator for Constant {
        fn rates(&self, d: &SharingDecision) -> Result<Vec<f64>> {
            Ok(vec![1e9; d.association.cols()])
        }
    }

    #[test]
    fn one_bs_two_ues_forced() {
        let t = NetworkTopology::new(
            1,
            vec![Node::new(0.0, 0.0, 0)],
            vec![Node::new(5.0, 0.0, 0), Node::new(0.0, 7.0, 0)],
            Default::default(),
            1e9,
        )
        .unwrap();
        let p = SharingProblem::new(t, 8, SharingConfig::default());
        assert_eq!(count_feasible(&p, 100), 1);
        let r = brute_force_oracle(&Objective::new(&p, &Constant), 100).unwrap();
        assert_eq!(r.candidates, Some(1));
        assert_eq!(r.decision.association.to_grid(), "11\n");
    }

    #[test]
    fn count_matches_enumeration() {
        let p = SharingProblem::new(
            NetworkTopology::toy(),
            8,
            SharingConfig {
                budget: vec![40.0],
                ..SharingConfig::default()
            },
        );
        let counted = count_feasible(&p, u128::MAX);
        let mut enumerated = 0u128;
        let mut a = BinMatrix::zeros(4, 10);
        let mut load = vec![0; 4];
        enumerate_associations(&p, 0, &mut a, &mut load, &mut |a| {
            let base = SharingDecision::uncoordinated(a.clone());
            let costs = p.costs(&base);
            if !p.within_budget(&costs) {
                return Ok(());
            }
            let bits = free_bits(&p, a);
            let mut c = a.clone();
            enumerate_coordination(&p, a, &bits, 0, &mut c, costs, &mut |_| {
                enumerated += 1;
                Ok(())
            })
        })
        .unwrap();
        assert_eq!(counted, enumerated);
    }

    #[test]
    fn too_large_is_an_error() {
        let p = SharingProblem::new(
            NetworkTopology::toy(),
            8,
            SharingConfig {
                budget: vec![],
                ..SharingConfig::default()
            },
        );
        let err = brute_force_oracle(&Objective::new(&p, &Constant), 10_000_000).unwrap_err();
        assert!(matches!(err, Error::TooLarge { .. }));
    }
}
