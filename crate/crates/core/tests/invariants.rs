use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mmshare::beamforming::{BeamformingState, EffectiveRows};
use mmshare::channel::ChannelRealization;
use mmshare::config::{Attribution, RadioConfig, SharingConfig};
use mmshare::coordination::{cost_identity_check, SharingProblem};
use mmshare::evaluator::MonteCarloEvaluator;
use mmshare::hybrid::FeasibilitySampler;
use mmshare::interference::received_power;
use mmshare::optimizer::baseline::random_decision;
use mmshare::optimizer::{bcd_optimize, count_feasible, Objective, OptimizerOptions};
use mmshare::Error;
use mmshare::topology::{NetworkTopology, Node};

fn nodes(coords: &[(f64, f64)], operators: usize) -> Vec<Node> {
    coords
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| Node::new(x, y, k % operators))
        .collect()
}

/// `None` when a UE sits exactly on a BS.
fn topology(bs: &[(f64, f64)], ue: &[(f64, f64)]) -> Option<NetworkTopology> {
    NetworkTopology::new(2, nodes(bs, 2), nodes(ue, 2), Default::default(), 1e9).ok()
}

fn coords(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((1.0..150.0f64, 1.0..150.0f64), n)
}

fn open_rules(attribution: Attribution, budget: f64) -> SharingConfig {
    SharingConfig {
        attribution,
        budget: vec![budget],
        roaming: true,
        cell_radius_m: None,
        ..SharingConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn coordinated_ues_see_no_leakage(bs in coords(2..=4), ue in coords(2..=6), seed in any::<u64>()) {
        let topo = topology(&bs, &ue);
        prop_assume!(topo.is_some());
        let topo = topo.unwrap();
        let radio = RadioConfig::default();
        let p = SharingProblem::new(topo.clone(), radio.n_bs, open_rules(Attribution::Ue, 1e9));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampler = FeasibilitySampler::new(&p, 3, 100);
        let d = sampler.sample(&mut rng).unwrap().unwrap();
        let ch = ChannelRealization::sample(&topo, radio.n_bs, radio.n_ue, radio.num_paths, &mut rng);
        let st = BeamformingState::build(&ch, &d.association, &d.coordination, radio.n_bs, radio.n_ue, radio.delta, radio.tx_power_w()).unwrap();
        for (i, u) in d.coordination.iter_ones() {
            let cell = &st.cells[i];
            let leak: f64 = (0..cell.served.len())
                .filter(|&k| cell.served[k] != u)
                .map(|k| cell.stream_power(st.row(i, u), k))
                .sum();
            let rx = received_power(&st, &st.cells, u, st.serving[u]);
            prop_assert!(leak <= 1e-8 * rx, "leak {leak} rx {rx} at ({i},{u})");
        }
    }

    #[test]
    fn costs_match_the_explicit_sum(
        bs in coords(2..=4),
        ue in coords(2..=6),
        seed in any::<u64>(),
        budget in 0.0..400.0f64,
        per_ue in any::<bool>(),
    ) {
        let attribution = if per_ue { Attribution::Ue } else { Attribution::Bs };
        let rules = open_rules(attribution, budget);
        let p_serving = rules.p_serving;
        let topo = topology(&bs, &ue);
        prop_assume!(topo.is_some());
        let topo = topo.unwrap();
        let p = SharingProblem::new(topo, 8, rules);
        let sampler = FeasibilitySampler::new(&p, 4, 50);
        if let Some(d) = sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap() {
            let explicit = cost_identity_check(p.topology(), &d.association, &d.coordination, p.template(), p_serving, attribution);
            prop_assert_eq!(p.costs(&d), explicit);
        }
    }

    #[test]
    fn sampled_decisions_are_feasible(bs in coords(2..=4), ue in coords(2..=6), seed in any::<u64>(), budget in 0.0..400.0f64) {
        let topo = topology(&bs, &ue);
        prop_assume!(topo.is_some());
        let topo = topo.unwrap();
        let p = SharingProblem::new(topo, 8, open_rules(Attribution::Ue, budget));
        let sampler = FeasibilitySampler::new(&p, 3, 50);
        if let Some(d) = sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap() {
            prop_assert!(p.is_feasible(&d), "{:?}", p.violations(&d));
            prop_assert!(d.association.is_subset_of(&d.coordination));
            for u in 0..p.num_ue() {
                prop_assert_eq!(d.association.col_count(u), 1);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bcd_never_decreases_the_objective(bs in coords(2..=3), ue in coords(2..=4), seed in any::<u64>(), budget in 0.0..300.0f64) {
        let mut radio = RadioConfig::default();
        radio.realizations = 4;
        let topo = topology(&bs, &ue);
        prop_assume!(topo.is_some());
        let topo = topo.unwrap();
        let p = SharingProblem::new(topo, radio.n_bs, open_rules(Attribution::Ue, budget));
        let bank = MonteCarloEvaluator::new(p.topology(), &radio, seed);
        let obj = Objective::new(&p, &bank);
        let start = random_decision(&p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let r = match bcd_optimize(&obj, &start, &OptimizerOptions::default()) {
            Ok(r) => r,
            Err(Error::Infeasible(_)) => {
                prop_assert_eq!(count_feasible(&p, 1_000_000), 0);
                return Ok(());
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(r.trace.is_monotone(1e-12));
        prop_assert!(r.objective >= obj.value(&start).unwrap() - 1e-12);
        prop_assert!(p.is_feasible(&r.decision));
    }
}
