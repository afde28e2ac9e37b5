//! Networks built from a configuration, the fixed example decisions on the
//! toy network, and long-term summaries of single decisions.

use serde::Serialize;

use crate::config::{Config, RadioConfig, TopologyKind};
use crate::coordination::{SharingDecision, SharingProblem};
use crate::error::{Error, Result};
use crate::evaluator::{LongTermReport, MonteCarloEvaluator};
use crate::hybrid::{ci_rng, Stream};
use crate::interference::network_utility;
use crate::matrix::BinMatrix;
use crate::optimizer::baseline::closest_bs_decision;
use crate::optimizer::{oracle_benchmark, Objective, OptimizerOptions, OracleResult};
use crate::topology::NetworkTopology;

/// Topology described by `config.scenario`, with the interference ball applied.
pub fn build_topology(config: &Config) -> Result<NetworkTopology> {
    let radio = &config.radio;
    let topo = match config.scenario.topology {
        TopologyKind::Toy => NetworkTopology::toy_with(radio.pathloss, radio.bandwidth_hz).with_carrier(radio.carrier_hz),
        TopologyKind::Manhattan => NetworkTopology::manhattan(
            &mut ci_rng(config.seed, 0, Stream::Topology),
            radio.pathloss,
            radio.bandwidth_hz,
        )
        .with_carrier(radio.carrier_hz),
        TopologyKind::File => {
            let path = config
                .scenario
                .topology_file
                .as_deref()
                .ok_or_else(|| Error::config("scenario.topology_file", "missing"))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config("scenario.topology_file", format!("{path}: {e}")))?;
            NetworkTopology::from_toml_str(&text)?
        }
    };
    Ok(match config.sharing.interference_ball_m {
        Some(r) => topo.apply_interference_ball(r),
        None => topo,
    })
}

pub fn build_problem(config: &Config, topology: NetworkTopology) -> SharingProblem {
    SharingProblem::new(topology, config.radio.n_bs, config.sharing.clone())
}

/// The three fixed decisions compared on the toy network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleScenario {
    /// Closest-BS association, `C = A`.
    A,
    /// As `A`, plus the nearest other-operator BS nulls the focus UE.
    B,
    /// As `A`, with every BS coordinating every UE.
    C,
}

impl ExampleScenario {
    pub const ALL: [ExampleScenario; 3] = [Self::A, Self::B, Self::C];

    pub fn label(self) -> &'static str {
        match self {
            Self::A => "a",
            Self::B => "b",
            Self::C => "c",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.label() == s)
    }
}

/// Nearest BS of another operator to UE `u`; ties go to the lowest id.
pub fn nearest_foreign_bs(topology: &NetworkTopology, u: usize) -> Option<usize> {
    let z = topology.ue_operator(u);
    (0..topology.num_bs())
        .filter(|&b| topology.bs_operator(b) != z)
        .min_by(|&x, &y| topology.distance(x, u).total_cmp(&topology.distance(y, u)).then(x.cmp(&y)))
}

/// Decision of an example scenario; `focus` is the 0-based focus UE.
pub fn example_decision(problem: &SharingProblem, which: ExampleScenario, focus: usize) -> Result<SharingDecision> {
    check_focus(problem.topology(), focus)?;
    let a = closest_bs_decision(problem)?.association;
    Ok(match which {
        ExampleScenario::A => SharingDecision::uncoordinated(a),
        ExampleScenario::B => {
            let b = nearest_foreign_bs(problem.topology(), focus)
                .ok_or_else(|| Error::Infeasible("scenario b needs a second operator".to_string()))?;
            SharingDecision::new(a.clone(), a.with(b, focus, true))
        }
        ExampleScenario::C => SharingDecision::new(a, BinMatrix::ones(problem.num_bs(), problem.num_ue())),
    })
}

fn check_focus(topology: &NetworkTopology, focus: usize) -> Result<()> {
    if focus >= topology.num_ue() {
        return Err(Error::config(
            "scenario.focus_ue",
            format!("UE {} does not exist; the network has {} UEs", focus + 1, topology.num_ue()),
        ));
    }
    Ok(())
}

/// Long-term performance of one decision. Rates are in Gbps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionSummary {
    pub label: String,
    pub n_bs: usize,
    pub n_ue: usize,
    pub sum_rate_gbps: Vec<f64>,
    pub min_rate_gbps: Vec<f64>,
    /// 1-based focus UE.
    pub focus_ue: usize,
    pub focus_rate_gbps: f64,
    /// Mean of `I1/rx`, `I2/rx`, `I3/rx` at the focus UE.
    pub focus_interference: [f64; 3],
    /// Relative rate gain of the focus UE over a reference decision, percent.
    pub focus_improvement_pct: Option<f64>,
    pub costs: Vec<f64>,
    pub utility: f64,
    pub rates_gbps: Vec<f64>,
    /// 1-based serving BS per UE.
    pub serving_bs: Vec<usize>,
    pub association: String,
    pub coordination: String,
}

impl DecisionSummary {
    pub fn from_report(
        label: impl Into<String>,
        problem: &SharingProblem,
        radio: &RadioConfig,
        decision: &SharingDecision,
        report: &LongTermReport,
        focus: usize,
    ) -> Result<Self> {
        let t = problem.topology();
        check_focus(t, focus)?;
        let per_op = |f: fn(&[f64]) -> f64| -> Vec<f64> {
            (0..t.num_operators())
                .map(|z| {
                    let r: Vec<f64> = t.ues_of_operator(z).iter().map(|&u| report.rates[u] / 1e9).collect();
                    f(&r)
                })
                .collect()
        };
        Ok(Self {
            label: label.into(),
            n_bs: radio.n_bs,
            n_ue: radio.n_ue,
            sum_rate_gbps: per_op(|r| r.iter().sum()),
            min_rate_gbps: per_op(|r| r.iter().copied().fold(f64::INFINITY, f64::min)),
            focus_ue: focus + 1,
            focus_rate_gbps: report.rates[focus] / 1e9,
            focus_interference: report.normalized_interference[focus],
            focus_improvement_pct: None,
            costs: problem.costs(decision),
            utility: network_utility(t, &report.rates),
            rates_gbps: report.rates.iter().map(|r| r / 1e9).collect(),
            serving_bs: report.serving.iter().map(|b| b + 1).collect(),
            association: decision.association.to_grid(),
            coordination: decision.coordination.to_grid(),
        })
    }

    /// Monte-Carlo summary of `decision` on the bank of `evaluator`.
    pub fn evaluate(
        label: impl Into<String>,
        problem: &SharingProblem,
        evaluator: &MonteCarloEvaluator,
        decision: &SharingDecision,
        focus: usize,
    ) -> Result<Self> {
        let report = evaluator.report(decision)?;
        Self::from_report(label, problem, evaluator.radio(), decision, &report, focus)
    }

    pub fn relative_to(mut self, reference: &DecisionSummary) -> Self {
        self.focus_improvement_pct = Some(100.0 * (self.focus_rate_gbps / reference.focus_rate_gbps - 1.0));
        self
    }
}

/// Largest feasible-set size the oracle enumerates; bigger instances fall
/// back to multi-start BCD on the true rates.
pub const ORACLE_EXHAUSTIVE_LIMIT: u128 = 100_000;

/// Best decision under true Monte-Carlo rates.
pub fn solve_oracle(problem: &SharingProblem, evaluator: &MonteCarloEvaluator) -> Result<OracleResult> {
    let obj = Objective::new(problem, evaluator);
    oracle_benchmark(&obj, &OptimizerOptions::default(), ORACLE_EXHAUSTIVE_LIMIT)
}

fn bank(config: &Config, topology: &NetworkTopology, radio: &RadioConfig) -> MonteCarloEvaluator {
    MonteCarloEvaluator::new(topology, radio, config.seed)
}

/// The closest-BS decision and its summary.
pub fn baseline_summary(config: &Config) -> Result<(SharingDecision, DecisionSummary)> {
    let topo = build_topology(config)?;
    let problem = build_problem(config, topo);
    let ev = bank(config, problem.topology(), &config.radio);
    let d = closest_bs_decision(&problem)?;
    let s = DecisionSummary::evaluate("closest-bs", &problem, &ev, &d, config.scenario.focus_ue - 1)?;
    Ok((d, s))
}

/// The true-rate optimum, or a fixed example decision when `fixed` is given.
pub fn oracle_summary(config: &Config, fixed: Option<ExampleScenario>) -> Result<(SharingDecision, DecisionSummary)> {
    let topo = build_topology(config)?;
    let problem = build_problem(config, topo);
    let ev = bank(config, problem.topology(), &config.radio);
    let focus = config.scenario.focus_ue - 1;
    let (label, d) = match fixed {
        Some(w) => (w.label().to_string(), example_decision(&problem, w, focus)?),
        None => ("oracle".to_string(), solve_oracle(&problem, &ev)?.decision),
    };
    let s = DecisionSummary::evaluate(label, &problem, &ev, &d, focus)?;
    Ok((d, s))
}

/// Rows of the example comparison: scenarios (a), (b), (c), the optimum and
/// the roaming optimum under `config`'s budget, for both antenna settings.
/// With `include_optimal` false only the fixed scenarios are evaluated.
pub fn example_table(config: &Config, include_optimal: bool) -> Result<Vec<DecisionSummary>> {
    let topo = build_topology(config)?;
    let focus = config.scenario.focus_ue - 1;
    let budget = config.sharing.budget_of(0);
    let mut rows = Vec::new();
    for settings in [RadioConfig::small_antennas(), RadioConfig::large_antennas()] {
        let radio = RadioConfig {
            n_bs: settings.n_bs,
            n_ue: settings.n_ue,
            ..config.radio.clone()
        };
        let ev = bank(config, &topo, &radio);
        let mut free = config.sharing.clone();
        free.budget = vec![];
        free.roaming = false;
        let open = SharingProblem::new(topo.clone(), radio.n_bs, free);
        let fixed = ExampleScenario::ALL
            .into_iter()
            .map(|w| DecisionSummary::evaluate(w.label(), &open, &ev, &example_decision(&open, w, focus)?, focus))
            .collect::<Result<Vec<_>>>()?;
        let reference = fixed[0].clone();
        rows.extend(fixed.into_iter().map(|s| s.relative_to(&reference)));
        if !include_optimal {
            continue;
        }
        for roaming in [false, true] {
            let mut rules = config.sharing.clone();
            rules.roaming = roaming;
            let p = SharingProblem::new(topo.clone(), radio.n_bs, rules);
            let d = solve_oracle(&p, &ev)?.decision;
            let label = format!("{}optimal,{}", if roaming { "roaming-" } else { "" }, budget);
            rows.push(DecisionSummary::evaluate(label, &p, &ev, &d, focus)?.relative_to(&reference));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SharingConfig;

    #[test]
    fn toy_examples_match_the_narrative() {
        let p = SharingProblem::new(NetworkTopology::toy(), 8, SharingConfig::default());
        assert_eq!(nearest_foreign_bs(p.topology(), 5), Some(0));
        let a = example_decision(&p, ExampleScenario::A, 5).unwrap();
        let b = example_decision(&p, ExampleScenario::B, 5).unwrap();
        let c = example_decision(&p, ExampleScenario::C, 5).unwrap();
        assert_eq!(a.serving()[5], Some(2));
        assert_eq!(b.coordination, a.coordination.clone().with(0, 5, true));
        assert_eq!(c.coordination.count_ones(), 40);
        assert_eq!(p.costs(&a), vec![5.0, 5.0]);
        assert_eq!(p.costs(&b), vec![5.0, 105.0]);
        assert_eq!(p.costs(&c), vec![1055.0, 1055.0]);
        assert!(example_decision(&p, ExampleScenario::A, 10).is_err());
    }

    #[test]
    fn manhattan_is_seeded() {
        let mut c = Config::default();
        c.scenario.topology = TopologyKind::Manhattan;
        let t1 = build_topology(&c).unwrap();
        assert_eq!(t1.ue_nodes(), build_topology(&c).unwrap().ue_nodes());
        c.seed = 2;
        assert_ne!(t1.ue_nodes(), build_topology(&c).unwrap().ue_nodes());
    }

    #[test]
    fn summary_columns() {
        let mut c = Config::default();
        c.radio.realizations = 5;
        let (d, s) = baseline_summary(&c).unwrap();
        assert_eq!(s.serving_bs[5], 3);
        assert_eq!(s.sum_rate_gbps.len(), 2);
        assert!((s.sum_rate_gbps.iter().sum::<f64>() - s.rates_gbps.iter().sum::<f64>()).abs() < 1e-9);
        assert_eq!(s.association, d.association.to_grid());
        assert!(s.focus_interference[0] < 1e-9);
    }
}
