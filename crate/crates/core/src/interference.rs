//! Received power, the three interference terms, rates and utilities.

use serde::Serialize;

use crate::beamforming::{Cell, EffectiveRows};
use crate::topology::NetworkTopology;

/// Rates are floored at this value before taking logs.
pub const RATE_FLOOR_BPS: f64 = 1.0;

/// Downlink quantities seen by one UE in one realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UeMetrics {
    pub ue: usize,
    pub serving_bs: usize,
    /// Received signal power, W.
    pub rx: f64,
    /// Intra-cell interference, W.
    pub i1: f64,
    /// Interference from other BSs of the UE's operator, W.
    pub i2: f64,
    /// Interference from BSs of other operators, W.
    pub i3: f64,
    pub rate_bps: f64,
}

impl UeMetrics {
    /// Interference terms divided by the received power.
    pub fn normalized(&self) -> [f64; 3] {
        if self.rx > 0.0 {
            [self.i1 / self.rx, self.i2 / self.rx, self.i3 / self.rx]
        } else {
            [f64::INFINITY; 3]
        }
    }

    pub fn interference(&self) -> f64 {
        self.i1 + self.i2 + self.i3
    }
}

fn served_column(cell: &Cell, u: usize) -> usize {
    cell.served
        .binary_search(&u)
        .unwrap_or_else(|_| panic!("BS {} does not serve UE {u}", cell.bs))
}

/// Power of all streams of `cell` leaking into UE `u`, optionally skipping one stream.
fn cell_leakage<R: EffectiveRows>(rows: &R, cell: &Cell, u: usize, skip: Option<usize>) -> f64 {
    if cell.lambda == 0.0 {
        return 0.0;
    }
    let row = rows.row(cell.bs, u);
    (0..cell.served.len())
        .filter(|&k| Some(cell.served[k]) != skip)
        .map(|k| cell.stream_power(row, k))
        .sum()
}

/// `lambda_b |w_u^H H_bu w_bu|^2`; `b` must serve `u`.
pub fn received_power<R: EffectiveRows>(rows: &R, cells: &[Cell], u: usize, b: usize) -> f64 {
    let cell = &cells[b];
    cell.stream_power(rows.row(b, u), served_column(cell, u))
}

/// Leakage of the other streams of the serving BS.
pub fn intra_cell_interference<R: EffectiveRows>(rows: &R, cells: &[Cell], u: usize, b: usize) -> f64 {
    cell_leakage(rows, &cells[b], u, Some(u))
}

/// Leakage of every other BS of the UE's own operator.
pub fn inter_cell_interference<R: EffectiveRows>(
    rows: &R,
    cells: &[Cell],
    topology: &NetworkTopology,
    u: usize,
    b: usize,
) -> f64 {
    let z = topology.ue_operator(u);
    cells
        .iter()
        .filter(|c| c.bs != b && topology.bs_operator(c.bs) == z)
        .map(|c| cell_leakage(rows, c, u, None))
        .sum()
}

/// Leakage of every BS of the other operators (except the serving one under roaming).
pub fn inter_operator_interference<R: EffectiveRows>(
    rows: &R,
    cells: &[Cell],
    topology: &NetworkTopology,
    u: usize,
    b: usize,
) -> f64 {
    let z = topology.ue_operator(u);
    cells
        .iter()
        .filter(|c| c.bs != b && topology.bs_operator(c.bs) != z)
        .map(|c| cell_leakage(rows, c, u, None))
        .sum()
}

/// `W log2(1 + rx / (interference + W sigma^2))`.
pub fn shannon_rate(bandwidth_hz: f64, rx: f64, interference: f64, noise_psd: f64) -> f64 {
    let sinr = rx / (interference + bandwidth_hz * noise_psd);
    bandwidth_hz * (1.0 + sinr).log2()
}

/// Evaluates every UE. `serving[u]` is the serving BS of `u`.
pub fn evaluate<R: EffectiveRows>(
    rows: &R,
    cells: &[Cell],
    topology: &NetworkTopology,
    serving: &[usize],
    noise_psd: f64,
) -> Vec<UeMetrics> {
    (0..serving.len())
        .map(|u| {
            let b = serving[u];
            let rx = received_power(rows, cells, u, b);
            let i1 = intra_cell_interference(rows, cells, u, b);
            let i2 = inter_cell_interference(rows, cells, topology, u, b);
            let i3 = inter_operator_interference(rows, cells, topology, u, b);
            let w = topology.operator_bandwidth(topology.ue_operator(u));
            UeMetrics {
                ue: u,
                serving_bs: b,
                rx,
                i1,
                i2,
                i3,
                rate_bps: shannon_rate(w, rx, i1 + i2 + i3, noise_psd),
            }
        })
        .collect()
}

/// `sum ln max(r, floor)` over the given rates.
pub fn operator_utility(rates: impl IntoIterator<Item = f64>) -> f64 {
    rates.into_iter().map(|r| r.max(RATE_FLOOR_BPS).ln()).sum()
}

/// Per-operator utilities from a full per-UE rate vector.
pub fn operator_utilities(topology: &NetworkTopology, rates: &[f64]) -> Vec<f64> {
    (0..topology.num_operators())
        .map(|z| operator_utility(topology.ues_of_operator(z).into_iter().map(|u| rates[u])))
        .collect()
}

/// `sum_z f_z / Z`.
pub fn network_utility(topology: &NetworkTopology, rates: &[f64]) -> f64 {
    let z = topology.num_operators() as f64;
    operator_utilities(topology, rates).iter().sum::<f64>() / z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::BeamformingState;
    use crate::channel::ChannelRealization;
    use crate::config::RadioConfig;
    use crate::coordination::special_case;
    use crate::coordination::CoordinationMode;
    use crate::matrix::BinMatrix;
    use crate::optimizer::baseline::closest_bs;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_state(seed: u64, c_full: bool) -> (NetworkTopology, BeamformingState, BinMatrix) {
        let topo = NetworkTopology::toy();
        let radio = RadioConfig::default();
        let a = closest_bs(&topo, radio.n_bs, false).unwrap();
        let c = if c_full {
            special_case(&topo, &a, CoordinationMode::Full)
        } else {
            a.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = ChannelRealization::sample(&topo, radio.n_bs, radio.n_ue, radio.num_paths, &mut rng);
        let st = BeamformingState::build(&ch, &a, &c, radio.n_bs, radio.n_ue, radio.delta, radio.tx_power_w()).unwrap();
        (topo, st, a)
    }

    #[test]
    fn rate_examples() {
        assert_relative_eq!(shannon_rate(1e9, 2.0, 1.0, 1e-9), 1e9, epsilon = 1e-3);
        assert_eq!(shannon_rate(1e9, 0.0, 1.0, 1e-21), 0.0);
    }

    #[test]
    fn utility_examples() {
        assert_eq!(operator_utility([1.0, 1.0, 1.0]), 0.0);
        assert_relative_eq!(operator_utility([std::f64::consts::E]), 1.0, epsilon = 1e-15);
        assert!(operator_utility([2.0, 5.0]) < operator_utility([2.0, 6.0]));
        assert_eq!(operator_utility([0.0]), 0.0);
    }

    #[test]
    fn decomposition_is_complete() {
        for seed in 0..5 {
            let (topo, st, _) = toy_state(seed, false);
            let metrics = evaluate(&st, &st.cells, &topo, &st.serving, 4e-21);
            for m in &metrics {
                // Brute force over every stream of every BS except the serving stream.
                let mut total = 0.0;
                for cell in &st.cells {
                    for (k, &j) in cell.served.iter().enumerate() {
                        if cell.bs == m.serving_bs && j == m.ue {
                            continue;
                        }
                        let row = st.row(cell.bs, m.ue);
                        let col = cell.precoder.column(k);
                        let mut acc = Complex64::ZERO;
                        for n in 0..row.len() {
                            acc += row[n] * col[n];
                        }
                        total += cell.lambda * acc.norm_sqr();
                    }
                }
                assert_relative_eq!(m.interference(), total, max_relative = 1e-12);
                assert!(m.rx >= 0.0 && m.i1 >= 0.0 && m.i2 >= 0.0 && m.i3 >= 0.0);
            }
        }
    }

    #[test]
    fn received_power_matches_naive_triple_product() {
        let (_, st, _) = toy_state(3, false);
        for u in 0..10 {
            let b = st.serving[u];
            let cell = &st.cells[b];
            let k = cell.served.iter().position(|&j| j == u).unwrap();
            let row = st.row(b, u);
            let mut acc = Complex64::ZERO;
            for n in 0..row.len() {
                acc += row[n] * cell.precoder[(n, k)];
            }
            assert_relative_eq!(received_power(&st, &st.cells, u, b), cell.lambda * acc.norm_sqr(), max_relative = 1e-12);
        }
    }

    #[test]
    fn full_coordination_nulls_small_cells() {
        // Only 2 BSs with 2 UEs each so that every row count stays within N_BS.
        use crate::topology::Node;
        let bs = vec![Node::new(0.0, 0.0, 0), Node::new(60.0, 0.0, 1)];
        let ue = vec![
            Node::new(10.0, 20.0, 0),
            Node::new(-15.0, 5.0, 0),
            Node::new(70.0, 20.0, 1),
            Node::new(55.0, -30.0, 1),
        ];
        let topo = NetworkTopology::new(2, bs, ue, Default::default(), 1e9).unwrap();
        let radio = RadioConfig::default();
        let a = BinMatrix::from_grid("1100\n0011").unwrap();
        let c = BinMatrix::ones(2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = ChannelRealization::sample(&topo, radio.n_bs, radio.n_ue, radio.num_paths, &mut rng);
        let st = BeamformingState::build(&ch, &a, &c, radio.n_bs, radio.n_ue, radio.delta, 1.0).unwrap();
        for m in evaluate(&st, &st.cells, &topo, &st.serving, 4e-21) {
            let [n1, n2, n3] = m.normalized();
            assert!(n1 < 1e-8 && n2 < 1e-8 && n3 < 1e-8, "{m:?}");
        }
    }

    #[test]
    fn single_bs_per_operator_has_no_inter_cell_term() {
        use crate::topology::Node;
        let bs = vec![Node::new(0.0, 0.0, 0), Node::new(60.0, 0.0, 1)];
        let ue = vec![Node::new(10.0, 20.0, 0), Node::new(70.0, 20.0, 1)];
        let topo = NetworkTopology::new(2, bs, ue, Default::default(), 1e9).unwrap();
        let a = BinMatrix::from_grid("10\n01").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = ChannelRealization::sample(&topo, 8, 2, 3, &mut rng);
        let st = BeamformingState::build(&ch, &a, &a, 8, 2, 1e-6, 1.0).unwrap();
        for m in evaluate(&st, &st.cells, &topo, &st.serving, 4e-21) {
            assert_eq!(m.i2, 0.0);
            assert_eq!(m.i1, 0.0);
            assert!(m.i3 > 0.0);
        }
    }
}
