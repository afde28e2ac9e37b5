//! Random feasible decisions for exploration.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::coordination::{SharingDecision, SharingProblem};
use crate::error::{Error, Result};
use crate::matrix::BinMatrix;

/// Draws feasible `(A, C)`: each UE picks one of its `k` strongest admissible
/// BSs that still has a free slot, then non-serving coordination bits are
/// switched on at random while the budgets allow. Draws that dead-end are
/// rejected, up to `attempts` times.
#[derive(Debug, Clone)]
pub struct FeasibilitySampler<'a> {
    problem: &'a SharingProblem,
    /// Per UE: its strongest `k` candidate BSs.
    choices: Vec<Vec<usize>>,
    attempts: usize,
}

impl<'a> FeasibilitySampler<'a> {
    pub fn new(problem: &'a SharingProblem, k: usize, attempts: usize) -> Self {
        let t = problem.topology();
        let choices = (0..problem.num_ue())
            .map(|u| {
                let mut bs = problem.candidates(u).to_vec();
                bs.sort_by(|&x, &y| t.pathloss(y, u).total_cmp(&t.pathloss(x, u)).then(x.cmp(&y)));
                bs.truncate(k.max(1));
                bs
            })
            .collect();
        Self {
            problem,
            choices,
            attempts: attempts.max(1),
        }
    }

    /// True when some UE has no admissible BS at all.
    pub fn is_empty(&self) -> bool {
        self.choices.iter().any(Vec::is_empty)
    }

    fn draw(&self, rng: &mut impl Rng) -> Option<SharingDecision> {
        let p = self.problem;
        let mut order: Vec<usize> = (0..p.num_ue()).collect();
        order.shuffle(rng);
        let mut a = BinMatrix::zeros(p.num_bs(), p.num_ue());
        let mut load = vec![0usize; p.num_bs()];
        for u in order {
            let open: Vec<usize> = self.choices[u].iter().copied().filter(|&b| load[b] < p.n_bs()).collect();
            let &b = open.choose(rng)?;
            load[b] += 1;
            a.set(b, u, true);
        }
        let mut decision = SharingDecision::uncoordinated(a.clone());
        let mut costs = p.costs(&decision);
        if !p.within_budget(&costs) {
            return None;
        }
        let mut bits: Vec<(usize, usize)> = (0..p.num_bs())
            .flat_map(|b| (0..p.num_ue()).map(move |u| (b, u)))
            .filter(|&(b, u)| !a.get(b, u) && p.topology().is_linked(b, u))
            .collect();
        bits.shuffle(rng);
        for (b, u) in bits {
            if !rng.random_bool(0.5) {
                continue;
            }
            let z = p.owner(b, u);
            let pen = p.bit_penalty(&a, b, u);
            if costs[z] + pen <= p.budget(z) + 1e-9 {
                costs[z] += pen;
                decision.coordination.set(b, u, true);
            }
        }
        p.is_feasible(&decision).then_some(decision)
    }

    /// One feasible sample, or `None` when every attempt was rejected.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<Option<SharingDecision>> {
        if self.is_empty() {
            return Err(Error::EmptyFeasibleSet);
        }
        Ok((0..self.attempts).find_map(|_| self.draw(rng)))
    }
}

/// With probability `epsilon` a random feasible decision, otherwise `best`.
/// Returns the decision and whether it came from the sampler.
pub fn explore(
    best: &SharingDecision,
    sampler: &FeasibilitySampler,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<(SharingDecision, bool)> {
    if sampler.is_empty() {
        return Err(Error::EmptyFeasibleSet);
    }
    if rng.random::<f64>() < epsilon {
        if let Some(d) = sampler.sample(rng)? {
            return Ok((d, true));
        }
    }
    Ok((best.clone(), false))
}
