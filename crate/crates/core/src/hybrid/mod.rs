//! The explore/exploit control loop.
//!
//! Every CI runs one decision on a fresh channel realization and measures
//! per-UE rates. Operation frames run the incumbent. Training frames first
//! feed the rates averaged over the preceding operation frames to the rate
//! models, re-optimize `(A, C)` on the learned models, possibly replace the
//! result by a random feasible decision, run it, and feed its measurement
//! back. An optimizer proposal that differs from the incumbent becomes the
//! challenger and is re-run in later training frames until the ledger either
//! promotes it to incumbent or rejects it.

mod ledger;
mod sampler;
mod schedule;

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use ledger::{CandidateLedger, CandidateStats};
pub use sampler::{explore, FeasibilitySampler};
pub use schedule::{FrameSchedule, FrameType};

use crate::beamforming::BeamformingState;
use crate::channel::ChannelRealization;
use crate::config::{Config, EventAction, Knowledge, RadioConfig, UeEvent};
use crate::coordination::{SharingDecision, SharingProblem};
use crate::error::{Error, Result};
use crate::interference::{evaluate, operator_utilities, UeMetrics};
use crate::optimizer::baseline::{random_decision, strongest_bs_decision};
use crate::optimizer::{bcd_optimize, Objective, OptimizerOptions};
use crate::rate_model::{PopulationChange, RateModelSet};
use crate::topology::{NetworkTopology, Node};

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Channel = 1,
    Explore = 2,
    Event = 3,
    Models = 4,
    Init = 5,
    Topology = 6,
}

/// Generator for one purpose at one CI; runs are reproducible and the
/// channel of a CI does not depend on what happened before it.
pub fn ci_rng(seed: u64, ci: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream as u64);
    rng.set_stream(ci);
    rng
}

/// Per-UE measurements of one CI.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub ci: u64,
    pub metrics: Vec<UeMetrics>,
}

impl RateReport {
    pub fn rates(&self) -> Vec<f64> {
        self.metrics.iter().map(|m| m.rate_bps).collect()
    }

    pub fn sum_rate(&self) -> f64 {
        self.metrics.iter().map(|m| m.rate_bps).sum()
    }

    pub fn min_rate(&self) -> f64 {
        self.metrics.iter().map(|m| m.rate_bps).fold(f64::INFINITY, f64::min)
    }
}

/// Draws the channels of one CI, beamforms for `decision` and measures every UE.
pub fn run_ci(
    ci: u64,
    topology: &NetworkTopology,
    radio: &RadioConfig,
    decision: &SharingDecision,
    rng: &mut ChaCha8Rng,
) -> Result<RateReport> {
    let channels = ChannelRealization::sample(topology, radio.n_bs, radio.n_ue, radio.num_paths, rng);
    let state = BeamformingState::build(
        &channels,
        &decision.association,
        &decision.coordination,
        radio.n_bs,
        radio.n_ue,
        radio.delta,
        radio.tx_power_w(),
    )?;
    Ok(RateReport {
        ci,
        metrics: evaluate(&state, &state.cells, topology, &state.serving, radio.noise_psd_w()),
    })
}

/// One row of the run time series.
#[derive(Debug, Clone, PartialEq)]
pub struct CiRecord {
    pub ci: u64,
    pub frame: FrameType,
    /// Index into [`SimulationOutput::phases`].
    pub phase: usize,
    /// Decision run in this CI (index into [`SimulationOutput::decisions`]).
    pub decision: usize,
    /// Incumbent after this CI.
    pub incumbent: usize,
    pub explored: bool,
    pub sum_rate: f64,
    pub min_rate: f64,
    pub utilities: Vec<f64>,
    pub costs: Vec<f64>,
    pub epsilon: f64,
    /// Per-UE measurements of this CI.
    pub metrics: Vec<UeMetrics>,
}

/// Stretch of the run with a fixed UE population.
#[derive(Debug, Clone)]
pub struct Phase {
    pub start_ci: u64,
    pub problem: SharingProblem,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub records: Vec<CiRecord>,
    /// Distinct decisions with the phase they belong to.
    pub decisions: Vec<(usize, SharingDecision)>,
    pub phases: Vec<Phase>,
    pub final_decision: SharingDecision,
    pub promotions: usize,
    pub models: RateModelSet,
}

impl SimulationOutput {
    pub fn decision(&self, idx: usize) -> &SharingDecision {
        &self.decisions[idx].1
    }

    /// CI indices at which the incumbent changed.
    pub fn promotion_cis(&self) -> Vec<u64> {
        self.records
            .windows(2)
            .filter(|w| w[0].incumbent != w[1].incumbent && w[0].phase == w[1].phase)
            .map(|w| w[1].ci)
            .collect()
    }
}

/// Loop state between CIs.
pub struct HybridLoop {
    config: Config,
    problem: SharingProblem,
    models: RateModelSet,
    incumbent: SharingDecision,
    challenger: Option<SharingDecision>,
    ledger: CandidateLedger,
    schedule: FrameSchedule,
    options: OptimizerOptions,
    op_sum: Vec<f64>,
    op_count: usize,
    phase: usize,
    phases: Vec<Phase>,
    decisions: Vec<(usize, SharingDecision)>,
    index: HashMap<(usize, SharingDecision), usize>,
    promotions: usize,
}

impl HybridLoop {
    /// Initial association: strongest BS by path loss with `C = A`, or a
    /// random admissible association when nothing is known about the topology.
    pub fn new(config: &Config, topology: NetworkTopology) -> Result<Self> {
        config.validate()?;
        let problem = SharingProblem::new(topology, config.radio.n_bs, config.sharing.clone());
        let incumbent = match config.learning.knowledge {
            Knowledge::Full | Knowledge::Partial => strongest_bs_decision(&problem)?,
            Knowledge::None => random_decision(&problem, &mut ci_rng(config.seed, 0, Stream::Init))?,
        };
        problem.check(&incumbent)?;
        let models = RateModelSet::initialize(
            config.learning.knowledge,
            problem.topology(),
            &config.radio,
            &config.learning,
            config.seed ^ Stream::Models as u64,
        )?;
        let num_ue = problem.num_ue();
        Ok(Self {
            config: config.clone(),
            phases: vec![Phase {
                start_ci: 0,
                problem: problem.clone(),
            }],
            problem,
            models,
            incumbent,
            challenger: None,
            ledger: CandidateLedger::new(),
            schedule: FrameSchedule::new(&config.schedule),
            options: OptimizerOptions::default(),
            op_sum: vec![0.0; num_ue],
            op_count: 0,
            phase: 0,
            decisions: Vec::new(),
            index: HashMap::new(),
            promotions: 0,
        })
    }

    pub fn with_options(mut self, options: OptimizerOptions) -> Self {
        self.options = options;
        self
    }

    pub fn problem(&self) -> &SharingProblem {
        &self.problem
    }

    pub fn incumbent(&self) -> &SharingDecision {
        &self.incumbent
    }

    pub fn models(&self) -> &RateModelSet {
        &self.models
    }

    fn intern(&mut self, d: &SharingDecision) -> usize {
        let key = (self.phase, d.clone());
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.decisions.push(key.clone());
        self.index.insert(key, self.decisions.len() - 1);
        self.decisions.len() - 1
    }

    pub fn challenger(&self) -> Option<&SharingDecision> {
        self.challenger.as_ref()
    }

    /// Promotes or drops the challenger when the evidence is conclusive. The
    /// margin is a relative gain of `confidence_margin` in the weighted
    /// geometric-mean rate; with the sum-rate guard on, a candidate must also
    /// raise the measured sum rate by `confidence_z` standard errors.
    fn judge_challenger(&mut self) {
        let Some(cand) = self.challenger.clone() else {
            return;
        };
        let s = &self.config.schedule;
        let weights = Objective::new(&self.problem, &self.models).ue_weights();
        let margin = (1.0 + s.confidence_margin).ln() * weights.iter().sum::<f64>();
        let keeps_sum_rate =
            !s.confidence_sum_rate_guard || self.ledger.raises_sum_rate(&cand, &self.incumbent, s.confidence_z);
        if keeps_sum_rate
            && self
                .ledger
                .should_promote(&cand, &self.incumbent, &weights, s.confidence_min_samples, margin, s.confidence_z)
        {
            self.incumbent = cand;
            self.challenger = None;
            self.promotions += 1;
        } else if self.ledger.should_reject(
            &cand,
            &self.incumbent,
            &weights,
            margin,
            s.confidence_z,
            s.confidence_max_samples,
        ) {
            self.challenger = None;
        }
    }

    /// Runs CI `ci`, applying any UE events scheduled for it first.
    pub fn step(&mut self, ci: u64) -> Result<CiRecord> {
        let events: Vec<UeEvent> = self.config.events.iter().filter(|e| e.ci == ci).cloned().collect();
        for e in &events {
            self.apply_event(ci, e)?;
        }
        self.schedule.advance(ci);
        let frame = self.schedule.frame(ci);
        let seed = self.config.seed;
        let (decision, explored) = match frame {
            FrameType::Operation => (self.incumbent.clone(), false),
            FrameType::Training => {
                if self.op_count > 0 {
                    let mean: Vec<f64> = self.op_sum.iter().map(|s| s / self.op_count as f64).collect();
                    let inc = self.incumbent.clone();
                    self.models.update(&self.problem, ci, &inc, &mean)?;
                    self.op_sum.iter_mut().for_each(|s| *s = 0.0);
                    self.op_count = 0;
                }
                let predictor = self.models.download();
                let obj = Objective::new(&self.problem, &predictor);
                let best = bcd_optimize(&obj, &self.incumbent, &self.options)?.decision;
                if self.challenger.is_none() && best != self.incumbent {
                    self.challenger = Some(best);
                }
                let best = self.challenger.clone().unwrap_or_else(|| self.incumbent.clone());
                let sampler = FeasibilitySampler::new(
                    &self.problem,
                    self.config.schedule.sampler_strongest_k,
                    self.config.schedule.sampler_attempts,
                );
                explore(&best, &sampler, self.schedule.epsilon(), &mut ci_rng(seed, ci, Stream::Explore))?
            }
        };
        self.problem.check(&decision)?;
        let report = run_ci(
            ci,
            self.problem.topology(),
            &self.config.radio,
            &decision,
            &mut ci_rng(seed, ci, Stream::Channel),
        )?;
        let rates = report.rates();
        self.ledger.observe(&decision, &rates, frame == FrameType::Training);
        match frame {
            FrameType::Training => {
                self.models.update(&self.problem, ci, &decision, &rates)?;
                if self.challenger.as_ref() == Some(&decision) {
                    self.judge_challenger();
                }
            }
            FrameType::Operation => {
                for (s, r) in self.op_sum.iter_mut().zip(&rates) {
                    *s += r;
                }
                self.op_count += 1;
            }
        }
        let d_idx = self.intern(&decision);
        let inc = self.incumbent.clone();
        let i_idx = self.intern(&inc);
        Ok(CiRecord {
            ci,
            frame,
            phase: self.phase,
            decision: d_idx,
            incumbent: i_idx,
            explored,
            sum_rate: report.sum_rate(),
            min_rate: report.min_rate(),
            utilities: operator_utilities(self.problem.topology(), &rates),
            costs: self.problem.costs(&decision),
            epsilon: self.schedule.epsilon(),
            metrics: report.metrics,
        })
    }

    /// Adds or removes UEs of every operator and repairs the incumbent: a new
    /// UE is served by its strongest BS with a free slot, and coordination
    /// bits are dropped (most expensive first) until the budgets hold again.
    pub fn apply_event(&mut self, ci: u64, event: &UeEvent) -> Result<()> {
        let mut rng = ci_rng(self.config.seed, ci, Stream::Event);
        let mut topo = self.problem.topology().clone();
        let mut a = self.incumbent.association.clone();
        let mut c = self.incumbent.coordination.clone();
        for z in 0..topo.num_operators() {
            for _ in 0..event.count {
                match event.action {
                    EventAction::Add => {
                        let (t2, u) = self.place_ue(&topo, z, &mut rng)?;
                        self.models.on_population_change(&t2, PopulationChange::Added(u))?;
                        a = a.insert_col(u);
                        c = c.insert_col(u);
                        let p = SharingProblem::new(t2.clone(), self.config.radio.n_bs, self.config.sharing.clone());
                        let mut cands = p.candidates(u).to_vec();
                        cands.sort_by(|&x, &y| t2.pathloss(y, u).total_cmp(&t2.pathloss(x, u)).then(x.cmp(&y)));
                        let b = cands
                            .into_iter()
                            .find(|&b| a.row_count(b) < self.config.radio.n_bs)
                            .ok_or_else(|| Error::Infeasible(format!("no free slot for new UE {}", u + 1)))?;
                        a.set(b, u, true);
                        c.set(b, u, true);
                        topo = t2;
                    }
                    EventAction::Remove => {
                        let u = *topo
                            .ues_of_operator(z)
                            .last()
                            .ok_or_else(|| Error::Infeasible(format!("operator {} has no UE to remove", z + 1)))?;
                        let t2 = topo.without_ue(u)?;
                        self.models.on_population_change(&t2, PopulationChange::Removed(u))?;
                        a = a.remove_col(u);
                        c = c.remove_col(u);
                        topo = t2;
                    }
                }
            }
        }
        self.problem = SharingProblem::new(topo, self.config.radio.n_bs, self.config.sharing.clone());
        self.incumbent = repair_budget(&self.problem, SharingDecision::new(a, c))?;
        self.ledger.clear();
        self.challenger = None;
        self.op_sum = vec![0.0; self.problem.num_ue()];
        self.op_count = 0;
        self.phase += 1;
        self.phases.push(Phase {
            start_ci: ci,
            problem: self.problem.clone(),
        });
        Ok(())
    }

    /// Drops a UE of operator `z` uniformly in a drop area (or the bounding
    /// box of the network) at a spot with at least one admissible BS.
    fn place_ue(&self, topo: &NetworkTopology, z: usize, rng: &mut ChaCha8Rng) -> Result<(NetworkTopology, usize)> {
        use rand::Rng;
        let nodes = topo.bs_nodes().iter().chain(topo.ue_nodes());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for n in nodes {
            x0 = x0.min(n.x);
            x1 = x1.max(n.x);
            y0 = y0.min(n.y);
            y1 = y1.max(n.y);
        }
        for _ in 0..1000 {
            let node = match topo.areas().choose(rng) {
                Some(area) => {
                    let (x, y) = area.sample(rng);
                    Node::new(x, y, z).in_region(area.region)
                }
                None => Node::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1), z),
            };
            let (t2, u) = topo.with_added_ue(node)?;
            let p = SharingProblem::new(t2.clone(), self.config.radio.n_bs, self.config.sharing.clone());
            if !p.candidates(u).is_empty() {
                return Ok((t2, u));
            }
        }
        Err(Error::Infeasible(format!(
            "could not place a UE of operator {} within reach of a BS",
            z + 1
        )))
    }

    pub fn finish(self, records: Vec<CiRecord>) -> SimulationOutput {
        SimulationOutput {
            records,
            decisions: self.decisions,
            phases: self.phases,
            final_decision: self.incumbent,
            promotions: self.promotions,
            models: self.models,
        }
    }
}

/// Drops non-serving coordination bits, most expensive first, until every
/// operator is within budget.
pub fn repair_budget(problem: &SharingProblem, mut decision: SharingDecision) -> Result<SharingDecision> {
    let a = decision.association.clone();
    for z in 0..problem.num_operators() {
        let mut bits: Vec<(usize, usize)> = decision
            .coordination
            .iter_ones()
            .filter(|&(b, u)| !a.get(b, u) && problem.owner(b, u) == z)
            .collect();
        bits.sort_by(|&x, &y| {
            problem
                .bit_penalty(&a, y.0, y.1)
                .total_cmp(&problem.bit_penalty(&a, x.0, x.1))
                .then(x.cmp(&y))
        });
        let mut bits = bits.into_iter();
        while problem.costs(&decision)[z] > problem.budget(z) + 1e-9 {
            let Some((b, u)) = bits.next() else {
                return Err(Error::Infeasible(format!(
                    "serving links alone exceed the budget of operator {}",
                    z + 1
                )));
            };
            decision.coordination.set(b, u, false);
        }
    }
    problem.check(&decision)?;
    Ok(decision)
}

/// Runs the loop for `config.scenario.ci_count` CIs on `topology`.
pub fn run_simulation(config: &Config, topology: NetworkTopology) -> Result<SimulationOutput> {
    let mut hl = HybridLoop::new(config, topology)?;
    let mut records = Vec::with_capacity(config.scenario.ci_count as usize);
    for ci in 0..config.scenario.ci_count {
        records.push(hl.step(ci)?);
    }
    Ok(hl.finish(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SharingConfig;
    use crate::coordination::{special_case, CoordinationMode};
    use crate::optimizer::baseline::closest_bs_decision;

    fn short_config(cis: u64) -> Config {
        let mut c = Config::default();
        c.scenario.ci_count = cis;
        c.radio.realizations = 10;
        c
    }

    #[test]
    fn run_ci_is_deterministic_and_complete() {
        let t = NetworkTopology::toy();
        let p = SharingProblem::new(t.clone(), 8, SharingConfig::default());
        let d = closest_bs_decision(&p).unwrap();
        let r = RadioConfig::default();
        let a = run_ci(5, &t, &r, &d, &mut ci_rng(1, 5, Stream::Channel)).unwrap();
        let b = run_ci(5, &t, &r, &d, &mut ci_rng(1, 5, Stream::Channel)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.metrics.len(), 10);
        let c = run_ci(6, &t, &r, &d, &mut ci_rng(1, 6, Stream::Channel)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_coordination_in_small_cells_nulls_interference() {
        // One UE per BS, so every BS has room to null all four UEs.
        let t = NetworkTopology::new(
            2,
            vec![
                Node::new(0.0, 0.0, 0),
                Node::new(60.0, 0.0, 0),
                Node::new(0.0, 60.0, 1),
                Node::new(60.0, 60.0, 1),
            ],
            vec![
                Node::new(10.0, 5.0, 0),
                Node::new(50.0, 5.0, 0),
                Node::new(10.0, 55.0, 1),
                Node::new(50.0, 55.0, 1),
            ],
            Default::default(),
            1e9,
        )
        .unwrap();
        let p = SharingProblem::new(t.clone(), 8, SharingConfig::default());
        let a = closest_bs_decision(&p).unwrap().association;
        let d = SharingDecision::new(a.clone(), special_case(&t, &a, CoordinationMode::Full));
        let r = RadioConfig::default();
        let rep = run_ci(0, &t, &r, &d, &mut ci_rng(3, 0, Stream::Channel)).unwrap();
        for m in &rep.metrics {
            assert!(m.interference() < 1e-8 * m.rx, "{m:?}");
        }
    }

    #[test]
    fn short_run_keeps_operation_frames_feasible() {
        let c = short_config(300);
        let out = run_simulation(&c, NetworkTopology::toy()).unwrap();
        assert_eq!(out.records.len(), 300);
        let p = &out.phases[0].problem;
        for r in &out.records {
            let d = out.decision(r.decision);
            assert!(p.is_feasible(d));
            if r.frame == FrameType::Operation {
                assert_eq!(r.decision, out.records.iter().rev().find(|q| q.ci < r.ci).map_or(r.decision, |q| q.incumbent));
                assert!(r.costs.iter().zip(&c.sharing.budget).all(|(x, b)| x <= b));
            }
        }
        let again = run_simulation(&c, NetworkTopology::toy()).unwrap();
        assert_eq!(again.records, out.records);
    }

    #[test]
    fn zero_epsilon_never_explores() {
        let mut c = short_config(60);
        c.schedule.epsilon0 = 0.0;
        let out = run_simulation(&c, NetworkTopology::toy()).unwrap();
        assert!(out.records.iter().all(|r| !r.explored));
    }

    #[test]
    fn add_then_remove_restores_population() {
        let mut c = short_config(40);
        c.events = vec![
            UeEvent {
                ci: 10,
                action: EventAction::Add,
                count: 2,
            },
            UeEvent {
                ci: 25,
                action: EventAction::Remove,
                count: 2,
            },
        ];
        let out = run_simulation(&c, NetworkTopology::toy()).unwrap();
        assert_eq!(out.phases.len(), 3);
        assert_eq!(out.phases[1].problem.num_ue(), 14);
        assert_eq!(out.phases[2].problem.num_ue(), 10);
        assert_eq!(out.phases[2].problem.topology().ue_nodes(), NetworkTopology::toy().ue_nodes());
        for r in &out.records {
            let p = &out.phases[r.phase].problem;
            assert!(p.is_feasible(out.decision(r.decision)));
        }
    }

    #[test]
    fn budget_repair_drops_expensive_bits_first() {
        let p = SharingProblem::new(NetworkTopology::toy(), 8, SharingConfig::default());
        let a = closest_bs_decision(&p).unwrap().association;
        let full = SharingDecision::new(a.clone(), special_case(p.topology(), &a, CoordinationMode::Full));
        let fixed = repair_budget(&p, full).unwrap();
        assert!(p.is_feasible(&fixed));
        assert!(fixed.coordination.count_ones() > a.count_ones());
    }
}
