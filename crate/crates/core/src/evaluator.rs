//! Rate evaluators: maps from a sharing decision to long-term per-UE rates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::beamforming::{analog_combiner, effective_channel, Cell, EffectiveRows, Row};
use crate::channel::ChannelRealization;
use crate::config::RadioConfig;
use crate::coordination::SharingDecision;
use crate::error::{Error, Result};
use crate::interference::{evaluate, UeMetrics};
use crate::topology::NetworkTopology;

/// Long-term rate function of a sharing decision.
pub trait RateEvaluator {
    /// Per-UE rates in bit/s.
    fn rates(&self, decision: &SharingDecision) -> Result<Vec<f64>>;

    /// Gradient of `sum_u weight_u ln r_u` with respect to a relaxed
    /// association matrix, when the evaluator is differentiable.
    fn relaxed_gradient(
        &self,
        _association: &DMatrix<f64>,
        _decision: &SharingDecision,
        _weights: &[f64],
    ) -> Option<DMatrix<f64>> {
        None
    }
}

/// Monte-Carlo mean over a fixed bank of channel realizations.
///
/// All decisions are scored on the same realizations, so comparisons between
/// decisions are free of sampling noise and every query is deterministic.
#[derive(Debug, Clone)]
pub struct MonteCarloEvaluator {
    topology: NetworkTopology,
    radio: RadioConfig,
    num_ue: usize,
    num_bs: usize,
    /// `slots[u][b]`: index of BS `b` among the BSs linked to `u`.
    slots: Vec<Vec<Option<usize>>>,
    /// `rows[r][u][slot][i]`: effective row of BS `i` at UE `u` when `u` is
    /// combined toward the BS of `slot`, in realization `r`.
    rows: Vec<Vec<Vec<Vec<Row>>>>,
    /// Serving links whose channel has no usable path in some realization.
    dead: Vec<Vec<Vec<bool>>>,
}

struct BankRows<'a> {
    bank: &'a MonteCarloEvaluator,
    r: usize,
    slot_of: Vec<usize>,
}

impl EffectiveRows for BankRows<'_> {
    fn row(&self, bs: usize, ue: usize) -> &Row {
        &self.bank.rows[self.r][ue][self.slot_of[ue]][bs]
    }
}

impl MonteCarloEvaluator {
    /// Draws `radio.realizations` channels with a generator seeded by `seed`.
    pub fn new(topology: &NetworkTopology, radio: &RadioConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let realizations: Vec<ChannelRealization> = (0..radio.realizations)
            .map(|_| ChannelRealization::sample(topology, radio.n_bs, radio.n_ue, radio.num_paths, &mut rng))
            .collect();
        Self::from_realizations(topology, radio, &realizations)
    }

    pub fn from_realizations(
        topology: &NetworkTopology,
        radio: &RadioConfig,
        realizations: &[ChannelRealization],
    ) -> Self {
        let (num_bs, num_ue) = (topology.num_bs(), topology.num_ue());
        let mut slots = vec![vec![None; num_bs]; num_ue];
        for (u, s) in slots.iter_mut().enumerate() {
            let mut k = 0;
            for (b, slot) in s.iter_mut().enumerate() {
                if topology.is_linked(b, u) {
                    *slot = Some(k);
                    k += 1;
                }
            }
        }
        let zero = Row::from_element(radio.n_bs, Complex64::ZERO);
        let mut rows = Vec::with_capacity(realizations.len());
        let mut dead = Vec::with_capacity(realizations.len());
        for ch in realizations {
            let mut per_ue = Vec::with_capacity(num_ue);
            let mut dead_ue = Vec::with_capacity(num_ue);
            for u in 0..num_ue {
                let mut per_slot = Vec::new();
                let mut dead_slot = Vec::new();
                for b in (0..num_bs).filter(|&b| slots[u][b].is_some()) {
                    let combiner = analog_combiner(ch.link(b, u), radio.n_ue);
                    dead_slot.push(combiner.is_none());
                    let per_bs = (0..num_bs)
                        .map(|i| match &combiner {
                            Some(w) if !ch.link(i, u).is_blocked() => effective_channel(w, &ch.link(i, u).matrix),
                            _ => zero.clone(),
                        })
                        .collect();
                    per_slot.push(per_bs);
                }
                per_ue.push(per_slot);
                dead_ue.push(dead_slot);
            }
            rows.push(per_ue);
            dead.push(dead_ue);
        }
        Self {
            topology: topology.clone(),
            radio: radio.clone(),
            num_ue,
            num_bs,
            slots,
            rows,
            dead,
        }
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn radio(&self) -> &RadioConfig {
        &self.radio
    }

    pub fn num_realizations(&self) -> usize {
        self.rows.len()
    }

    /// Per-realization metrics of every UE.
    pub fn metrics(&self, decision: &SharingDecision) -> Result<Vec<Vec<UeMetrics>>> {
        let (a, c) = (&decision.association, &decision.coordination);
        if a.rows() != self.num_bs || a.cols() != self.num_ue || !a.same_shape(c) {
            return Err(Error::Dimension("decision does not match the evaluator network".into()));
        }
        let mut serving = Vec::with_capacity(self.num_ue);
        let mut slot_of = Vec::with_capacity(self.num_ue);
        for u in 0..self.num_ue {
            let b = a.first_in_col(u).ok_or(Error::NoServingBs(u))?;
            let slot = self.slots[u][b].ok_or(Error::UnservableLink { bs: b, ue: u })?;
            serving.push(b);
            slot_of.push(slot);
        }
        let noise = self.radio.noise_psd_w();
        let tx = self.radio.tx_power_w();
        (0..self.rows.len())
            .map(|r| {
                if let Some(u) = (0..self.num_ue).find(|&u| self.dead[r][u][slot_of[u]]) {
                    return Err(Error::UnservableLink { bs: serving[u], ue: u });
                }
                let src = BankRows {
                    bank: self,
                    r,
                    slot_of: slot_of.clone(),
                };
                let cells = (0..self.num_bs)
                    .map(|b| Cell::build(b, a, c, &src, self.radio.n_bs, self.radio.delta, tx))
                    .collect::<Result<Vec<_>>>()?;
                Ok(evaluate(&src, &cells, &self.topology, &serving, noise))
            })
            .collect()
    }

    /// Mean rates and mean normalized interference per UE.
    pub fn report(&self, decision: &SharingDecision) -> Result<LongTermReport> {
        let per = self.metrics(decision)?;
        Ok(LongTermReport::from_realizations(&per))
    }
}

impl RateEvaluator for MonteCarloEvaluator {
    fn rates(&self, decision: &SharingDecision) -> Result<Vec<f64>> {
        Ok(self.report(decision)?.rates)
    }
}

/// Realization-averaged view of a decision.
#[derive(Debug, Clone, PartialEq)]
pub struct LongTermReport {
    pub serving: Vec<usize>,
    /// Mean rate per UE, bit/s.
    pub rates: Vec<f64>,
    /// Standard error of the mean rate per UE, bit/s.
    pub rate_stderr: Vec<f64>,
    /// Mean of `I_k / rx` over realizations, per UE.
    pub normalized_interference: Vec<[f64; 3]>,
}

impl LongTermReport {
    pub fn from_realizations(per: &[Vec<UeMetrics>]) -> Self {
        let k = per.len() as f64;
        let num_ue = per.first().map_or(0, Vec::len);
        let mut rates = vec![0.0; num_ue];
        let mut sq = vec![0.0; num_ue];
        let mut norm = vec![[0.0; 3]; num_ue];
        for real in per {
            for m in real {
                rates[m.ue] += m.rate_bps / k;
                sq[m.ue] += m.rate_bps * m.rate_bps / k;
                let n = m.normalized();
                for t in 0..3 {
                    norm[m.ue][t] += n[t] / k;
                }
            }
        }
        let rate_stderr = rates
            .iter()
            .zip(&sq)
            .map(|(m, s)| {
                if k > 1.0 {
                    ((s - m * m).max(0.0) * k / (k - 1.0) / k).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            serving: per.first().map(|r| r.iter().map(|m| m.serving_bs).collect()).unwrap_or_default(),
            rates,
            rate_stderr,
            normalized_interference: norm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::BeamformingState;
    use crate::matrix::BinMatrix;
    use crate::optimizer::baseline::closest_bs;
    use rand::SeedableRng;

    #[test]
    fn bank_matches_direct_beamforming() {
        let topo = NetworkTopology::toy();
        let radio = RadioConfig {
            realizations: 4,
            ..RadioConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let reals: Vec<ChannelRealization> = (0..4)
            .map(|_| ChannelRealization::sample(&topo, 8, 2, 3, &mut rng))
            .collect();
        let bank = MonteCarloEvaluator::from_realizations(&topo, &radio, &reals);
        let a = closest_bs(&topo, 8, false).unwrap();
        let c = a.clone().with(0, 5, true).with(3, 2, true);
        let d = SharingDecision::new(a.clone(), c.clone());
        let via_bank = bank.metrics(&d).unwrap();
        for (r, ch) in reals.iter().enumerate() {
            let st = BeamformingState::build(ch, &a, &c, 8, 2, radio.delta, radio.tx_power_w()).unwrap();
            let direct = evaluate(&st, &st.cells, &topo, &st.serving, radio.noise_psd_w());
            assert_eq!(direct, via_bank[r]);
        }
    }

    #[test]
    fn deterministic_and_standard_error_shrinks() {
        let topo = NetworkTopology::toy();
        let a = closest_bs(&topo, 8, false).unwrap();
        let d = SharingDecision::uncoordinated(a);
        let small = RadioConfig {
            realizations: 25,
            ..RadioConfig::default()
        };
        let big = RadioConfig {
            realizations: 400,
            ..RadioConfig::default()
        };
        let e1 = MonteCarloEvaluator::new(&topo, &small, 7).report(&d).unwrap();
        let e1b = MonteCarloEvaluator::new(&topo, &small, 7).report(&d).unwrap();
        assert_eq!(e1, e1b);
        let e2 = MonteCarloEvaluator::new(&topo, &big, 7).report(&d).unwrap();
        // stderr ~ 1/sqrt(K): 16x the realizations should give roughly 1/4 the error.
        let ratio: f64 = (0..10).map(|u| e2.rate_stderr[u] / e1.rate_stderr[u]).sum::<f64>() / 10.0;
        assert!(ratio > 0.15 && ratio < 0.4, "ratio {ratio}");
    }

    #[test]
    fn rejects_unserved_ue() {
        let topo = NetworkTopology::toy();
        let radio = RadioConfig {
            realizations: 2,
            ..RadioConfig::default()
        };
        let bank = MonteCarloEvaluator::new(&topo, &radio, 1);
        let d = SharingDecision::uncoordinated(BinMatrix::zeros(4, 10));
        assert!(matches!(bank.rates(&d), Err(Error::NoServingBs(0))));
    }
}
