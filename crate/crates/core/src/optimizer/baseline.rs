//! Fixed association rules used as baselines and BCD starting points.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::coordination::{SharingDecision, SharingProblem};
use crate::error::{Error, Result};
use crate::matrix::BinMatrix;
use crate::topology::NetworkTopology;

/// Assigns every UE to the first BS of its preference list with a free slot.
fn assign_by_preference(
    num_bs: usize,
    num_ue: usize,
    n_bs: usize,
    mut prefs: impl FnMut(usize) -> Vec<usize>,
) -> Result<BinMatrix> {
    let mut a = BinMatrix::zeros(num_bs, num_ue);
    let mut load = vec![0usize; num_bs];
    for u in 0..num_ue {
        let b = prefs(u)
            .into_iter()
            .find(|&b| load[b] < n_bs)
            .ok_or_else(|| Error::Infeasible(format!("no BS with a free slot can serve UE {}", u + 1)))?;
        load[b] += 1;
        a.set(b, u, true);
    }
    Ok(a)
}

/// Every UE to its nearest BS of the same operator (any operator with
/// roaming); ties go to the lowest BS id, full cells overflow to the next nearest.
pub fn closest_bs(topology: &NetworkTopology, n_bs: usize, roaming: bool) -> Result<BinMatrix> {
    assign_by_preference(topology.num_bs(), topology.num_ue(), n_bs, |u| {
        let z = topology.ue_operator(u);
        let mut bs: Vec<usize> = (0..topology.num_bs())
            .filter(|&b| (roaming || topology.bs_operator(b) == z) && topology.is_linked(b, u))
            .collect();
        bs.sort_by(|&x, &y| topology.distance(x, u).total_cmp(&topology.distance(y, u)).then(x.cmp(&y)));
        bs
    })
}

/// Closest-BS association with `C = A`.
pub fn closest_bs_decision(problem: &SharingProblem) -> Result<SharingDecision> {
    let a = closest_bs(problem.topology(), problem.n_bs(), problem.rules().roaming)?;
    Ok(SharingDecision::uncoordinated(a))
}

/// Every UE to the admissible BS with the largest path gain, `C = A`.
pub fn strongest_bs_decision(problem: &SharingProblem) -> Result<SharingDecision> {
    let topo = problem.topology();
    let a = assign_by_preference(problem.num_bs(), problem.num_ue(), problem.n_bs(), |u| {
        let mut bs = problem.candidates(u).to_vec();
        bs.sort_by(|&x, &y| topo.pathloss(y, u).total_cmp(&topo.pathloss(x, u)).then(x.cmp(&y)));
        bs
    })?;
    Ok(SharingDecision::uncoordinated(a))
}

/// Uniformly random admissible association with `C = A`; used when nothing
/// is known about the topology.
pub fn random_decision(problem: &SharingProblem, rng: &mut impl Rng) -> Result<SharingDecision> {
    let a = assign_by_preference(problem.num_bs(), problem.num_ue(), problem.n_bs(), |u| {
        let mut bs = problem.candidates(u).to_vec();
        bs.shuffle(rng);
        bs
    })?;
    Ok(SharingDecision::uncoordinated(a))
}
