//! Association/coordination decisions, penalties, costs and feasibility.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{Attribution, SharingConfig};
use crate::error::{Error, Result};
use crate::matrix::BinMatrix;
use crate::topology::NetworkTopology;

/// Association `A` and coordination `C`. Ordered lexicographically by `(A, C)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SharingDecision {
    pub association: BinMatrix,
    pub coordination: BinMatrix,
}

impl SharingDecision {
    pub fn new(association: BinMatrix, coordination: BinMatrix) -> Self {
        Self {
            association,
            coordination,
        }
    }

    /// `C = A`: every BS only estimates the UEs it serves.
    pub fn uncoordinated(association: BinMatrix) -> Self {
        Self {
            coordination: association.clone(),
            association,
        }
    }

    pub fn serving(&self) -> Vec<Option<usize>> {
        (0..self.association.cols())
            .map(|u| self.association.first_in_col(u))
            .collect()
    }

    pub fn changed_bits(&self, other: &Self) -> usize {
        self.association.hamming(&other.association) + self.coordination.hamming(&other.coordination)
    }
}

/// `[P0]_bu = p` for same-operator pairs and `p_bar` otherwise.
pub fn template_penalty(topology: &NetworkTopology, p_intra: f64, p_inter: f64) -> DMatrix<f64> {
    DMatrix::from_fn(topology.num_bs(), topology.num_ue(), |b, u| {
        if topology.bs_operator(b) == topology.ue_operator(u) {
            p_intra
        } else {
            p_inter
        }
    })
}

/// `P = P0 + A o (p_b - P0)`: served links cost `p_b`, everything else `P0`.
pub fn effective_penalty(p0: &DMatrix<f64>, association: &BinMatrix, p_serving: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p0.nrows(), p0.ncols(), |b, u| {
        if association.get(b, u) {
            p_serving
        } else {
            p0[(b, u)]
        }
    })
}

/// Coordination cost charged to operator `z`.
pub fn coordination_cost(
    topology: &NetworkTopology,
    z: usize,
    coordination: &BinMatrix,
    penalty: &DMatrix<f64>,
    attribution: Attribution,
) -> f64 {
    let mut cost = 0.0;
    for (b, u) in coordination.iter_ones() {
        let owner = match attribution {
            Attribution::Ue => topology.ue_operator(u),
            Attribution::Bs => topology.bs_operator(b),
        };
        if owner == z {
            cost += penalty[(b, u)];
        }
    }
    cost
}

/// The same cost through the trace form: `sum_{u in U_z} [P^T C]_uu`
/// (or `sum_{b in B_z} [P C^T]_bb` under BS attribution).
pub fn cost_identity_check(
    topology: &NetworkTopology,
    association: &BinMatrix,
    coordination: &BinMatrix,
    p0: &DMatrix<f64>,
    p_serving: f64,
    attribution: Attribution,
) -> Vec<f64> {
    let a = to_real(association);
    let c = to_real(coordination);
    let ones = DMatrix::from_element(p0.nrows(), p0.ncols(), p_serving);
    let p = p0 + a.component_mul(&(ones - p0));
    (0..topology.num_operators())
        .map(|z| match attribution {
            Attribution::Ue => {
                let g = p.transpose() * &c;
                topology.ues_of_operator(z).iter().map(|&u| g[(u, u)]).sum()
            }
            Attribution::Bs => {
                let g = &p * c.transpose();
                topology.bs_of_operator(z).iter().map(|&b| g[(b, b)]).sum()
            }
        })
        .collect()
}

fn to_real(m: &BinMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| if m.get(r, c) { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinationMode {
    /// `C = A`.
    None,
    /// Every BS coordinates every UE of its own operator.
    Partial,
    /// Every BS coordinates every UE.
    Full,
}

pub fn special_case(topology: &NetworkTopology, association: &BinMatrix, mode: CoordinationMode) -> BinMatrix {
    match mode {
        CoordinationMode::None => association.clone(),
        CoordinationMode::Partial => BinMatrix::from_fn(topology.num_bs(), topology.num_ue(), |b, u| {
            topology.bs_operator(b) == topology.ue_operator(u)
        })
        .or(association),
        CoordinationMode::Full => BinMatrix::ones(topology.num_bs(), topology.num_ue()),
    }
}

/// A violated constraint of the sharing problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape,
    NotServed { ue: usize },
    MultiplyServed { ue: usize },
    CellTooLarge { bs: usize, served: usize },
    Budget { operator: usize, cost: f64, budget: f64 },
    Roaming { bs: usize, ue: usize },
    ServedNotCoordinated { bs: usize, ue: usize },
    OutsideCell { bs: usize, ue: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape => write!(f, "matrix shape does not match the network"),
            Violation::NotServed { ue } => write!(f, "UE {} has no serving BS", ue + 1),
            Violation::MultiplyServed { ue } => write!(f, "UE {} has more than one serving BS", ue + 1),
            Violation::CellTooLarge { bs, served } => write!(f, "BS {} serves {served} UEs", bs + 1),
            Violation::Budget { operator, cost, budget } => {
                write!(f, "operator {} cost {cost} exceeds budget {budget}", operator + 1)
            }
            Violation::Roaming { bs, ue } => write!(f, "BS {} serves foreign UE {}", bs + 1, ue + 1),
            Violation::ServedNotCoordinated { bs, ue } => {
                write!(f, "BS {} serves UE {} without estimating its channel", bs + 1, ue + 1)
            }
            Violation::OutsideCell { bs, ue } => {
                write!(f, "UE {} is outside the admissible cell of BS {}", ue + 1, bs + 1)
            }
        }
    }
}

/// Network, antenna count and sharing rules: everything needed to price and
/// check a decision.
#[derive(Debug, Clone)]
pub struct SharingProblem {
    topology: NetworkTopology,
    n_bs: usize,
    rules: SharingConfig,
    p0: DMatrix<f64>,
    candidates: Vec<Vec<usize>>,
}

impl SharingProblem {
    pub fn new(topology: NetworkTopology, n_bs: usize, rules: SharingConfig) -> Self {
        let p0 = template_penalty(&topology, rules.p_intra, rules.p_inter);
        let candidates = (0..topology.num_ue())
            .map(|u| {
                (0..topology.num_bs())
                    .filter(|&b| Self::admissible(&topology, &rules, b, u))
                    .collect()
            })
            .collect();
        Self {
            topology,
            n_bs,
            rules,
            p0,
            candidates,
        }
    }

    fn admissible(topology: &NetworkTopology, rules: &SharingConfig, b: usize, u: usize) -> bool {
        topology.is_linked(b, u)
            && (rules.roaming || topology.bs_operator(b) == topology.ue_operator(u))
            && rules.cell_radius_m.is_none_or(|r| topology.distance(b, u) <= r)
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }
    pub fn n_bs(&self) -> usize {
        self.n_bs
    }
    pub fn rules(&self) -> &SharingConfig {
        &self.rules
    }
    pub fn num_bs(&self) -> usize {
        self.topology.num_bs()
    }
    pub fn num_ue(&self) -> usize {
        self.topology.num_ue()
    }
    pub fn num_operators(&self) -> usize {
        self.topology.num_operators()
    }
    pub fn template(&self) -> &DMatrix<f64> {
        &self.p0
    }

    /// BSs allowed to serve `u`, ascending.
    pub fn candidates(&self, u: usize) -> &[usize] {
        &self.candidates[u]
    }

    pub fn is_admissible(&self, b: usize, u: usize) -> bool {
        self.candidates[u].binary_search(&b).is_ok()
    }

    pub fn budget(&self, z: usize) -> f64 {
        self.rules.budget_of(z)
    }

    pub fn penalty(&self, association: &BinMatrix) -> DMatrix<f64> {
        effective_penalty(&self.p0, association, self.rules.p_serving)
    }

    /// Operator charged for coordination bit `(b, u)`.
    pub fn owner(&self, b: usize, u: usize) -> usize {
        match self.rules.attribution {
            Attribution::Ue => self.topology.ue_operator(u),
            Attribution::Bs => self.topology.bs_operator(b),
        }
    }

    /// Penalty of bit `(b, u)` under association `A`.
    pub fn bit_penalty(&self, association: &BinMatrix, b: usize, u: usize) -> f64 {
        if association.get(b, u) {
            self.rules.p_serving
        } else {
            self.p0[(b, u)]
        }
    }

    pub fn costs(&self, decision: &SharingDecision) -> Vec<f64> {
        let p = self.penalty(&decision.association);
        (0..self.num_operators())
            .map(|z| coordination_cost(&self.topology, z, &decision.coordination, &p, self.rules.attribution))
            .collect()
    }

    pub fn within_budget(&self, costs: &[f64]) -> bool {
        costs.iter().enumerate().all(|(z, &c)| c <= self.budget(z) + 1e-9)
    }

    /// Constraint violations of association alone (unique serving BS, cell
    /// size, operator ownership, admissible links).
    pub fn association_violations(&self, association: &BinMatrix) -> Vec<Violation> {
        let mut out = Vec::new();
        if association.rows() != self.num_bs() || association.cols() != self.num_ue() {
            return vec![Violation::Shape];
        }
        for u in 0..self.num_ue() {
            match association.col_count(u) {
                0 => out.push(Violation::NotServed { ue: u }),
                1 => {}
                _ => out.push(Violation::MultiplyServed { ue: u }),
            }
        }
        for b in 0..self.num_bs() {
            let served = association.row_count(b);
            if served > self.n_bs {
                out.push(Violation::CellTooLarge { bs: b, served });
            }
        }
        for (b, u) in association.iter_ones() {
            if !self.rules.roaming && self.topology.bs_operator(b) != self.topology.ue_operator(u) {
                out.push(Violation::Roaming { bs: b, ue: u });
            } else if !self.is_admissible(b, u) {
                out.push(Violation::OutsideCell { bs: b, ue: u });
            }
        }
        out
    }

    pub fn violations(&self, decision: &SharingDecision) -> Vec<Violation> {
        let (a, c) = (&decision.association, &decision.coordination);
        if !a.same_shape(c) {
            return vec![Violation::Shape];
        }
        let mut out = self.association_violations(a);
        if out.contains(&Violation::Shape) {
            return out;
        }
        if self.rules.serving_implies_coordinated {
            for (b, u) in a.iter_ones() {
                if !c.get(b, u) {
                    out.push(Violation::ServedNotCoordinated { bs: b, ue: u });
                }
            }
        }
        for (z, cost) in self.costs(decision).into_iter().enumerate() {
            let budget = self.budget(z);
            if cost > budget + 1e-9 {
                out.push(Violation::Budget {
                    operator: z,
                    cost,
                    budget,
                });
            }
        }
        out
    }

    pub fn is_feasible(&self, decision: &SharingDecision) -> bool {
        self.violations(decision).is_empty()
    }

    pub fn check(&self, decision: &SharingDecision) -> Result<()> {
        let v = self.violations(decision);
        if v.is_empty() {
            Ok(())
        } else {
            let list: Vec<String> = v.iter().map(ToString::to_string).collect();
            Err(Error::Infeasible(list.join("; ")))
        }
    }

    /// Same problem with a different budget vector.
    pub fn with_budget(&self, budget: Vec<f64>) -> Self {
        let mut rules = self.rules.clone();
        rules.budget = budget;
        Self::new(self.topology.clone(), self.n_bs, rules)
    }
}
