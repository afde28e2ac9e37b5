//! Learned per-UE rate functions `r_u(A, C)`.
//!
//! Every UE has its own network fed with the flattened bits of `A` and `C`.
//! The network learns a correction on top of the closed-form surrogate:
//! `r_u = unit * g(s_u / unit + f_u(A, C))` where `s_u` is the surrogate rate
//! and `g` is a smooth nonnegativity map. The output layer starts at zero, so
//! a fresh model reproduces the surrogate exactly and training moves it
//! toward measured rates.

mod dataset;
mod mlp;
mod surrogate;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use dataset::{Dataset, Record};
pub use mlp::{Adam, Mlp, Trace};
pub use surrogate::{los_interference, sinc, Surrogate, SurrogateTerms};

use crate::config::{Knowledge, LearningConfig, RadioConfig};
use crate::coordination::{SharingDecision, SharingProblem};
use crate::error::{Error, Result};
use crate::evaluator::RateEvaluator;
use crate::topology::NetworkTopology;

/// Below this (in rate units) the output map bends smoothly toward zero.
const KNEE: f64 = 1e-3;

/// Identity above the knee, exponential decay toward zero below it.
fn nonneg(z: f64) -> f64 {
    if z >= KNEE {
        z
    } else {
        KNEE * (z / KNEE - 1.0).exp()
    }
}

fn nonneg_slope(z: f64) -> f64 {
    if z >= KNEE {
        1.0
    } else {
        (z / KNEE - 1.0).exp()
    }
}

/// Network input: row-major `A` bits followed by row-major `C` bits.
pub fn features(decision: &SharingDecision) -> Vec<f64> {
    decision
        .association
        .as_f64s()
        .chain(decision.coordination.as_f64s())
        .collect()
}

/// Immutable snapshot of the rate functions, usable as an evaluator.
#[derive(Debug, Clone)]
pub struct Predictor {
    surrogate: Surrogate,
    models: Vec<Mlp>,
    unit: f64,
}

impl Predictor {
    pub fn surrogate(&self) -> &Surrogate {
        &self.surrogate
    }

    pub fn models(&self) -> &[Mlp] {
        &self.models
    }

    fn check(&self, decision: &SharingDecision) -> Result<()> {
        let t = self.surrogate.topology();
        for m in [&decision.association, &decision.coordination] {
            if m.rows() != t.num_bs() || m.cols() != t.num_ue() {
                return Err(Error::Dimension("decision does not match the rate models".into()));
            }
        }
        Ok(())
    }

    /// Estimated per-UE rates in bit/s.
    pub fn predict(&self, decision: &SharingDecision) -> Result<Vec<f64>> {
        self.check(decision)?;
        let base = self.surrogate.rates(decision)?;
        let x = features(decision);
        Ok(self
            .models
            .iter()
            .zip(&base)
            .map(|(m, s)| self.unit * nonneg(s / self.unit + m.forward(&x)))
            .collect())
    }
}

impl RateEvaluator for Predictor {
    fn rates(&self, decision: &SharingDecision) -> Result<Vec<f64>> {
        self.predict(decision)
    }
}

/// Summary of one training call.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    pub steps: usize,
    /// Mean mini-batch loss (squared error in rate units) of the first and last step.
    pub first_loss: f64,
    pub last_loss: f64,
    pub perturbations: usize,
}

/// Change of the UE population the models must follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopulationChange {
    /// A UE now sits at this index of the new topology.
    Added(usize),
    /// The UE at this index of the old topology left.
    Removed(usize),
}

/// The cloud-side rate models: dataset, per-UE networks and their optimizers.
#[derive(Debug, Clone)]
pub struct RateModelSet {
    learning: LearningConfig,
    radio: RadioConfig,
    predictor: Predictor,
    optimizers: Vec<Adam>,
    dataset: Dataset,
    /// Per record: network input and surrogate rates.
    cache: Vec<(Vec<f64>, Vec<f64>)>,
    rng: ChaCha8Rng,
    best_loss: Vec<f64>,
    stalled: Vec<usize>,
}

impl RateModelSet {
    /// Fresh models equal to the surrogate of the given knowledge level.
    pub fn initialize(
        knowledge: Knowledge,
        topology: &NetworkTopology,
        radio: &RadioConfig,
        learning: &LearningConfig,
        seed: u64,
    ) -> Result<Self> {
        learning.validate()?;
        radio.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = 2 * topology.num_bs() * topology.num_ue();
        let hidden = vec![learning.hidden_width; learning.hidden_layers];
        let models: Vec<Mlp> = (0..topology.num_ue())
            .map(|_| Mlp::new(inputs, &hidden, true, &mut rng))
            .collect();
        let optimizers = models.iter().map(|m| Self::adam(learning, m)).collect();
        let n = models.len();
        Ok(Self {
            learning: learning.clone(),
            radio: radio.clone(),
            predictor: Predictor {
                surrogate: Surrogate::new(knowledge, topology, radio),
                models,
                unit: learning.rate_unit_bps,
            },
            optimizers,
            dataset: Dataset::new(topology.num_bs(), topology.num_ue()),
            cache: Vec::new(),
            rng,
            best_loss: vec![f64::INFINITY; n],
            stalled: vec![0; n],
        })
    }

    fn adam(learning: &LearningConfig, m: &Mlp) -> Adam {
        Adam::new(m.num_params(), learning.learning_rate, learning.beta1, learning.beta2)
    }

    pub fn knowledge(&self) -> Knowledge {
        self.predictor.surrogate.knowledge()
    }

    pub fn topology(&self) -> &NetworkTopology {
        self.predictor.surrogate.topology()
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn predict(&self, decision: &SharingDecision) -> Result<Vec<f64>> {
        self.predictor.predict(decision)
    }

    /// Snapshot of the current models.
    pub fn download(&self) -> Predictor {
        self.predictor.clone()
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    /// Records a feasible measurement without training.
    pub fn record(&mut self, problem: &SharingProblem, ci: u64, decision: &SharingDecision, rates: &[f64]) -> Result<()> {
        problem.check(decision)?;
        self.predictor.check(decision)?;
        let base = self.predictor.surrogate.rates(decision)?;
        let evicted = self.dataset.push(Record {
            ci,
            decision: decision.clone(),
            rates: rates.to_vec(),
        })?;
        self.cache.push((features(decision), base));
        self.cache.drain(..evicted);
        Ok(())
    }

    /// Appends a measurement and runs the configured number of training steps.
    pub fn update(
        &mut self,
        problem: &SharingProblem,
        ci: u64,
        decision: &SharingDecision,
        rates: &[f64],
    ) -> Result<TrainStats> {
        self.record(problem, ci, decision, rates)?;
        Ok(self.train(self.learning.steps_per_update))
    }

    /// Mean squared error (rate units) of every model on the batch `idx`.
    pub fn batch_loss(&self, idx: &[usize]) -> f64 {
        let unit = self.predictor.unit;
        let mut total = 0.0;
        for &i in idx {
            let (x, base) = &self.cache[i];
            for (u, m) in self.predictor.models.iter().enumerate() {
                let y = self.dataset.records()[i].rates[u] / unit;
                total += (nonneg(base[u] / unit + m.forward(x)) - y).powi(2);
            }
        }
        total / (idx.len() * self.predictor.models.len()).max(1) as f64
    }

    /// Runs `steps` mini-batch Adam steps on batches drawn with replacement.
    pub fn train(&mut self, steps: usize) -> TrainStats {
        let mut stats = TrainStats::default();
        if self.dataset.is_empty() || steps == 0 {
            return stats;
        }
        let unit = self.predictor.unit;
        let batch = self.learning.batch_size;
        let mut perturbed = vec![0usize; self.predictor.models.len()];
        let mut trace = Trace::default();
        for step in 0..steps {
            let idx: Vec<usize> = (0..batch).map(|_| self.rng.random_range(0..self.dataset.len())).collect();
            let mut step_loss = 0.0;
            for u in 0..self.predictor.models.len() {
                let model = &self.predictor.models[u];
                let mut grad = vec![0.0; model.num_params()];
                let mut loss = 0.0;
                for &i in &idx {
                    let (x, base) = &self.cache[i];
                    let z = base[u] / unit + model.forward_traced(x, &mut trace);
                    let err = nonneg(z) - self.dataset.records()[i].rates[u] / unit;
                    loss += err * err;
                    model.accumulate_gradient(x, &trace, 2.0 * err * nonneg_slope(z) / batch as f64, &mut grad);
                }
                loss /= batch as f64;
                step_loss += loss;
                if loss < self.best_loss[u] - self.learning.stall_tolerance {
                    self.best_loss[u] = loss;
                    self.stalled[u] = 0;
                } else {
                    self.stalled[u] += 1;
                }
                if self.stalled[u] >= self.learning.stall_window && perturbed[u] < self.learning.max_perturbations {
                    let scale = self.learning.perturbation_scale * model.param_rms();
                    if scale > 0.0 {
                        let normal = Normal::new(0.0, scale).expect("finite scale");
                        for g in &mut grad {
                            *g += normal.sample(&mut self.rng);
                        }
                    }
                    perturbed[u] += 1;
                    stats.perturbations += 1;
                    self.stalled[u] = 0;
                }
                self.optimizers[u].step(self.predictor.models[u].params_mut(), &grad);
            }
            step_loss /= self.predictor.models.len() as f64;
            if step == 0 {
                stats.first_loss = step_loss;
            }
            stats.last_loss = step_loss;
            stats.steps += 1;
        }
        stats
    }

    /// Follows a UE arriving or leaving. Existing networks keep their weights
    /// (inputs of a new UE start with zero weights), a new UE gets a fresh
    /// network, the surrogate is rebuilt for the new topology, and the
    /// dataset is cleared because old records lack the new shape.
    pub fn on_population_change(&mut self, topology: &NetworkTopology, change: PopulationChange) -> Result<()> {
        let old = self.topology();
        let (nb, old_ue) = (old.num_bs(), old.num_ue());
        if topology.num_bs() != nb {
            return Err(Error::Dimension("the BS set must not change".into()));
        }
        match change {
            PopulationChange::Added(u) => {
                let nu = old_ue + 1;
                if topology.num_ue() != nu || u >= nu {
                    return Err(Error::Dimension("added UE does not match the new topology".into()));
                }
                let positions: Vec<usize> = (0..2 * nb).map(|k| k * nu + u).collect();
                for m in &mut self.predictor.models {
                    for &p in &positions {
                        m.insert_input(p);
                    }
                }
                let hidden = vec![self.learning.hidden_width; self.learning.hidden_layers];
                let fresh = Mlp::new(2 * nb * nu, &hidden, true, &mut self.rng);
                self.predictor.models.insert(u, fresh);
                self.best_loss.insert(u, f64::INFINITY);
                self.stalled.insert(u, 0);
            }
            PopulationChange::Removed(u) => {
                if old_ue == 0 || topology.num_ue() != old_ue - 1 || u >= old_ue {
                    return Err(Error::Dimension("removed UE does not match the new topology".into()));
                }
                let positions: Vec<usize> = (0..2 * nb).rev().map(|k| k * old_ue + u).collect();
                self.predictor.models.remove(u);
                for m in &mut self.predictor.models {
                    for &p in &positions {
                        m.remove_input(p);
                    }
                }
                self.best_loss.remove(u);
                self.stalled.remove(u);
            }
        }
        self.predictor.surrogate = Surrogate::new(self.knowledge(), topology, &self.radio);
        self.optimizers = self
            .predictor
            .models
            .iter()
            .map(|m| Self::adam(&self.learning, m))
            .collect();
        self.dataset = Dataset::new(nb, topology.num_ue());
        self.cache.clear();
        Ok(())
    }

    /// Header line with the layer sizes, then one line of parameters per UE.
    pub fn models_to_text(&self) -> String {
        let models = &self.predictor.models;
        let sizes = models
            .first()
            .map(|m| m.sizes().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","))
            .unwrap_or_default();
        let mut out = format!("# mlp ues={} layers={}\n", models.len(), sizes);
        for m in models {
            let line: Vec<String> = m.params().iter().map(|p| p.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Replaces the network parameters with those of a saved model file.
    pub fn load_models(&mut self, text: &str) -> Result<()> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty model file".into()))?;
        let sizes: Vec<usize> = header
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("layers="))
            .ok_or_else(|| Error::Parse("model header lacks `layers`".into()))?
            .split(',')
            .map(|s| s.parse().map_err(|e| Error::Parse(format!("layer size `{s}`: {e}"))))
            .collect::<Result<_>>()?;
        let models: Vec<Mlp> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let params = l
                    .split(',')
                    .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("parameter `{s}`: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                Mlp::from_parts(sizes.clone(), params)
            })
            .collect::<Result<_>>()?;
        let expected = self.predictor.models.first().map(|m| m.sizes().to_vec());
        if models.len() != self.predictor.models.len() || expected.is_some_and(|s| s != sizes) {
            return Err(Error::Dimension("saved models do not match this network".into()));
        }
        self.predictor.models = models;
        for (opt, m) in self.optimizers.iter_mut().zip(&self.predictor.models) {
            opt.reset(m.num_params());
        }
        Ok(())
    }
}

impl RateEvaluator for RateModelSet {
    fn rates(&self, decision: &SharingDecision) -> Result<Vec<f64>> {
        self.predict(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SharingConfig;
    use crate::evaluator::MonteCarloEvaluator;
    use crate::optimizer::baseline::{closest_bs_decision, random_decision};
    use crate::topology::Node;

    fn toy_set(knowledge: Knowledge) -> (SharingProblem, RateModelSet) {
        let t = NetworkTopology::toy();
        let radio = RadioConfig::default();
        let p = SharingProblem::new(t.clone(), radio.n_bs, SharingConfig::default());
        let m = RateModelSet::initialize(knowledge, &t, &radio, &LearningConfig::default(), 5).unwrap();
        (p, m)
    }

    #[test]
    fn nonneg_map_is_smooth_and_positive() {
        assert_eq!(nonneg(2.0), 2.0);
        assert_eq!(nonneg(KNEE), KNEE);
        assert!((nonneg(KNEE - 1e-12) - KNEE).abs() < 1e-11);
        assert!(nonneg(-0.01) > 0.0 && nonneg(-50.0) >= 0.0);
        assert!((nonneg_slope(KNEE - 1e-12) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fresh_models_equal_the_surrogate() {
        let (p, m) = toy_set(Knowledge::Full);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let d = random_decision(&p, &mut rng).unwrap();
            let s = m.predictor().surrogate().rates(&d).unwrap();
            let r = m.predict(&d).unwrap();
            for (a, b) in r.iter().zip(&s) {
                assert!((a - b).abs() <= 1e-9 * b, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn update_appends_and_validates() {
        let (p, mut m) = toy_set(Knowledge::Full);
        let d = closest_bs_decision(&p).unwrap();
        m.update(&p, 0, &d, &[1e9; 10]).unwrap();
        assert_eq!(m.dataset().len(), 1);
        m.update(&p, 1, &d, &[1e9; 10]).unwrap();
        assert!(m.predict(&d).unwrap().iter().all(|r| r.is_finite() && *r >= 0.0));
        let bad = SharingDecision::uncoordinated(d.association.clone().with(3, 0, true));
        assert!(m.update(&p, 2, &bad, &[1e9; 10]).is_err());
        assert_eq!(m.dataset().len(), 2);
    }

    #[test]
    fn training_moves_predictions_toward_measurements() {
        let (p, mut m) = toy_set(Knowledge::Full);
        let d = closest_bs_decision(&p).unwrap();
        let target = vec![2e9; 10];
        let before = m.predict(&d).unwrap();
        for ci in 0..30 {
            m.update(&p, ci, &d, &target).unwrap();
        }
        let after = m.predict(&d).unwrap();
        let err = |v: &[f64]| v.iter().map(|r| (r - 2e9).abs()).sum::<f64>();
        assert!(err(&after) < 0.2 * err(&before), "{} vs {}", err(&after), err(&before));
    }

    #[test]
    fn models_round_trip_through_text() {
        let (p, mut m) = toy_set(Knowledge::Partial);
        let d = closest_bs_decision(&p).unwrap();
        m.update(&p, 0, &d, &[3e9; 10]).unwrap();
        let text = m.models_to_text();
        assert!(text.starts_with("# mlp ues=10 layers=80,20,20,20,20,20,1\n"));
        let (_, mut fresh) = toy_set(Knowledge::Partial);
        fresh.load_models(&text).unwrap();
        assert_eq!(fresh.predict(&d).unwrap(), m.predict(&d).unwrap());
        assert!(fresh.load_models("# mlp ues=1 layers=2,1\n0,0,0\n").is_err());
    }

    #[test]
    fn adding_and_removing_a_ue() {
        let (p, mut m) = toy_set(Knowledge::Full);
        let d = closest_bs_decision(&p).unwrap();
        for ci in 0..5 {
            m.update(&p, ci, &d, &[2e9; 10]).unwrap();
        }
        let before = m.predict(&d).unwrap();
        let t = p.topology().clone();
        let (t2, u) = t.with_added_ue(Node::new(60.0, 60.0, 0)).unwrap();
        m.on_population_change(&t2, PopulationChange::Added(u)).unwrap();
        assert_eq!(m.dataset().len(), 0);
        assert_eq!(m.predictor().models().len(), 11);
        let t3 = t2.without_ue(u).unwrap();
        m.on_population_change(&t3, PopulationChange::Removed(u)).unwrap();
        // Back to the original shape: surviving networks are unchanged.
        assert_eq!(m.predict(&d).unwrap(), before);
        assert!(m.on_population_change(&t3, PopulationChange::Added(0)).is_err());
    }

    #[test]
    fn new_ue_inputs_do_not_disturb_existing_networks() {
        let (p, mut m) = toy_set(Knowledge::Full);
        let d = closest_bs_decision(&p).unwrap();
        for ci in 0..5 {
            m.update(&p, ci, &d, &[2e9; 10]).unwrap();
        }
        let x_old = features(&d);
        let out_old: Vec<f64> = m.predictor().models().iter().map(|n| n.forward(&x_old)).collect();
        let (t2, u) = p.topology().with_added_ue(Node::new(60.0, 60.0, 0)).unwrap();
        m.on_population_change(&t2, PopulationChange::Added(u)).unwrap();
        let a2 = d.association.insert_col(u).with(0, u, true);
        let c2 = d.coordination.insert_col(u).with(0, u, true);
        let x_new = features(&SharingDecision::new(a2, c2));
        for (k, net) in m.predictor().models().iter().enumerate() {
            let out = net.forward(&x_new);
            if k == u {
                assert_eq!(out, 0.0);
            } else {
                let old = out_old[if k < u { k } else { k - 1 }];
                assert!((out - old).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn learns_long_term_rates_of_random_decisions() {
        let (p, mut m) = toy_set(Knowledge::Full);
        let ev = MonteCarloEvaluator::new(p.topology(), &RadioConfig::default(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let decisions: Vec<SharingDecision> = (0..40).map(|_| random_decision(&p, &mut rng).unwrap()).collect();
        let rates: Vec<Vec<f64>> = decisions.iter().map(|d| ev.rates(d).unwrap()).collect();
        for (i, (d, r)) in decisions.iter().zip(&rates).enumerate() {
            m.record(&p, i as u64, d, r).unwrap();
        }
        let all: Vec<usize> = (0..40).collect();
        let before = m.batch_loss(&all);
        let stats = m.train(1500);
        assert_eq!(stats.steps, 1500);
        assert!(m.batch_loss(&all) < 0.5 * before, "{} vs {before}", m.batch_loss(&all));
    }
}
