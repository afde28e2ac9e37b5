//! Closed-form rate model built from topology alone.
//!
//! Received power is the full array gain times the path gain, intra-cell
//! interference is taken as nulled, and every uncoordinated active BS
//! contributes a LoS interference term attenuated by the UE combiner's
//! sinc-shaped angular response.

use crate::config::{Knowledge, RadioConfig};
use crate::coordination::SharingDecision;
use crate::error::{Error, Result};
use crate::evaluator::RateEvaluator;
use crate::interference::shannon_rate;
use crate::topology::NetworkTopology;

/// `sin(x) / x`, with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Expected interference from BS `i` at UE `u` served by BS `b` under
/// single-path LoS channels; zero when BS `i` coordinates `u`.
pub fn los_interference(
    topology: &NetworkTopology,
    radio: &RadioConfig,
    b: usize,
    i: usize,
    u: usize,
    coordinated: bool,
) -> f64 {
    if coordinated {
        return 0.0;
    }
    let gain = (radio.n_bs * radio.n_ue) as f64 * topology.pathloss(i, u) * radio.tx_power_w();
    let phi = topology.theta_ue(b, u) - topology.theta_ue(i, u);
    gain * sinc(radio.n_ue as f64 * phi / 2.0).abs()
}

/// Per-UE surrogate quantities for a decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateTerms {
    pub rx: f64,
    pub i2: f64,
    pub i3: f64,
    pub rate_bps: f64,
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    knowledge: Knowledge,
    topology: NetworkTopology,
    radio: RadioConfig,
}

impl Surrogate {
    pub fn new(knowledge: Knowledge, topology: &NetworkTopology, radio: &RadioConfig) -> Self {
        Self {
            knowledge,
            topology: topology.clone(),
            radio: radio.clone(),
        }
    }

    pub fn knowledge(&self) -> Knowledge {
        self.knowledge
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    /// Interference term of BS `i` at UE `u` (served by `b`) at this knowledge level.
    pub fn interference_term(&self, b: usize, i: usize, u: usize, coordinated: bool) -> f64 {
        if coordinated {
            return 0.0;
        }
        let array = (self.radio.n_bs * self.radio.n_ue) as f64 * self.radio.tx_power_w();
        match self.knowledge {
            Knowledge::Full => los_interference(&self.topology, &self.radio, b, i, u, false),
            Knowledge::Partial => array * self.topology.pathloss(i, u),
            Knowledge::None => 0.0,
        }
    }

    pub fn terms(&self, decision: &SharingDecision) -> Result<Vec<SurrogateTerms>> {
        let t = &self.topology;
        let (a, c) = (&decision.association, &decision.coordination);
        if a.rows() != t.num_bs() || a.cols() != t.num_ue() {
            return Err(Error::Dimension("decision does not match the surrogate network".into()));
        }
        let active: Vec<bool> = (0..t.num_bs()).map(|i| a.row_count(i) > 0).collect();
        let array = (self.radio.n_bs * self.radio.n_ue) as f64 * self.radio.tx_power_w();
        let noise = self.radio.noise_psd_w();
        (0..t.num_ue())
            .map(|u| {
                let b = a.first_in_col(u).ok_or(Error::NoServingBs(u))?;
                let z = t.ue_operator(u);
                let rx = match self.knowledge {
                    Knowledge::None => array,
                    _ => array * t.pathloss(b, u),
                };
                let (mut i2, mut i3) = (0.0, 0.0);
                for i in (0..t.num_bs()).filter(|&i| i != b && active[i]) {
                    let term = self.interference_term(b, i, u, c.get(i, u));
                    if t.bs_operator(i) == z {
                        i2 += term;
                    } else {
                        i3 += term;
                    }
                }
                let w = t.operator_bandwidth(z);
                Ok(SurrogateTerms {
                    rx,
                    i2,
                    i3,
                    rate_bps: shannon_rate(w, rx, i2 + i3, noise),
                })
            })
            .collect()
    }
}

impl RateEvaluator for Surrogate {
    fn rates(&self, decision: &SharingDecision) -> Result<Vec<f64>> {
        Ok(self.terms(decision)?.into_iter().map(|s| s.rate_bps).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::BinMatrix;
    use crate::optimizer::baseline::closest_bs;

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert!((sinc(std::f64::consts::PI)).abs() < 1e-15);
        assert!((sinc(1.0) - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn aligned_angles_give_full_gain() {
        let t = NetworkTopology::toy();
        let r = RadioConfig::default();
        let v = los_interference(&t, &r, 0, 0, 5, false);
        assert_eq!(v, 16.0 * t.pathloss(0, 5) * r.tx_power_w());
        assert_eq!(los_interference(&t, &r, 2, 0, 5, true), 0.0);
    }

    #[test]
    fn knowledge_levels() {
        let t = NetworkTopology::toy();
        let r = RadioConfig::default();
        let a = closest_bs(&t, 8, false).unwrap();
        let d = SharingDecision::uncoordinated(a.clone());
        let none = Surrogate::new(Knowledge::None, &t, &r).terms(&d).unwrap();
        assert!(none.iter().all(|s| s.i2 == 0.0 && s.i3 == 0.0 && s.rx == 16.0));
        let partial = Surrogate::new(Knowledge::Partial, &t, &r).terms(&d).unwrap();
        let full = Surrogate::new(Knowledge::Full, &t, &r).terms(&d).unwrap();
        // UE 6 (index 5): partial knowledge sees BS 1 at full array gain.
        let expect = 16.0 * t.pathloss(0, 5) + 16.0 * t.pathloss(1, 5);
        assert!((partial[5].i3 - expect).abs() <= 1e-12 * expect);
        for u in 0..10 {
            assert!(full[u].i2 + full[u].i3 <= partial[u].i2 + partial[u].i3 + 1e-30);
        }
        // Coordinating UE 6 at BS 1 removes that term.
        let coord = SharingDecision::new(a.clone(), a.clone().with(0, 5, true));
        let f2 = Surrogate::new(Knowledge::Full, &t, &r).terms(&coord).unwrap();
        let removed = los_interference(&t, &r, 2, 0, 5, false);
        assert!((full[5].i3 - f2[5].i3 - removed).abs() <= 1e-12 * full[5].i3);
        // Without the inter-operator term UE 6 would do better.
        let no_i3 = shannon_rate(1e9, full[5].rx, full[5].i2, r.noise_psd_w());
        assert!(full[5].rate_bps < no_i3);
    }

    #[test]
    fn silent_bs_contributes_nothing() {
        let t = NetworkTopology::toy();
        let r = RadioConfig::default();
        let a = BinMatrix::from_grid("1111100000\n0000000000\n0000011111\n0000000000").unwrap();
        let s = Surrogate::new(Knowledge::Partial, &t, &r).terms(&SharingDecision::uncoordinated(a)).unwrap();
        let expect = 16.0 * t.pathloss(2, 0);
        assert!((s[0].i3 - expect).abs() <= 1e-12 * expect);
        assert_eq!(s[0].i2, 0.0);
    }
}
