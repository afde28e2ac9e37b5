//! Network geometry: operators, BS/UE placement, path loss and LoS angles.
//!
//! Indices are 0-based in code. Operator ids in files and reports are 1-based.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::PathLossModel;
use crate::error::{Error, Result};

/// A BS or UE location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub x: f64,
    pub y: f64,
    /// Owning operator, 0-based.
    pub operator: usize,
    /// Propagation region. Nodes in different regions never couple.
    pub region: usize,
}

impl Node {
    pub fn new(x: f64, y: f64, operator: usize) -> Self {
        Self {
            x,
            y,
            operator,
            region: 0,
        }
    }

    pub fn in_region(mut self, region: usize) -> Self {
        self.region = region;
        self
    }

    pub fn distance(&self, other: &Node) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle where UEs of a region may be dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub region: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Area {
    pub fn sample(&self, rng: &mut impl Rng) -> (f64, f64) {
        (
            rng.random_range(self.x_min..=self.x_max),
            rng.random_range(self.y_min..=self.y_max),
        )
    }
}

/// Linear power gain of the power-law path-loss model at `distance` meters.
pub fn pathloss(distance: f64, model: &PathLossModel) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::NonPositiveDistance(distance));
    }
    let db = model.intercept_db + 10.0 * model.exponent * distance.log10();
    Ok(10f64.powf(-db / 10.0))
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    num_operators: usize,
    bs: Vec<Node>,
    ue: Vec<Node>,
    carrier_hz: f64,
    bandwidth_hz: f64,
    operator_bandwidth_hz: Vec<f64>,
    model: PathLossModel,
    ball_radius_m: Option<f64>,
    areas: Vec<Area>,
    pathloss: DMatrix<f64>,
    theta_bs: DMatrix<f64>,
    theta_ue: DMatrix<f64>,
}

impl NetworkTopology {
    pub fn new(
        num_operators: usize,
        bs: Vec<Node>,
        ue: Vec<Node>,
        model: PathLossModel,
        bandwidth_hz: f64,
    ) -> Result<Self> {
        if num_operators == 0 {
            return Err(Error::config("topology.num_operators", "must be positive"));
        }
        for (kind, nodes) in [("bs", &bs), ("ue", &ue)] {
            if let Some(k) = nodes.iter().position(|n| n.operator >= num_operators) {
                return Err(Error::config(
                    format!("topology.{kind}[{}].operator", k + 1),
                    format!("must lie in [1, {num_operators}]"),
                ));
            }
        }
        let areas = vec![bounding_area(&bs, &ue, 0)];
        let mut topo = Self {
            num_operators,
            bs,
            ue,
            carrier_hz: 28e9,
            bandwidth_hz,
            operator_bandwidth_hz: vec![bandwidth_hz; num_operators],
            model,
            ball_radius_m: None,
            areas,
            pathloss: DMatrix::zeros(0, 0),
            theta_bs: DMatrix::zeros(0, 0),
            theta_ue: DMatrix::zeros(0, 0),
        };
        topo.recompute()?;
        Ok(topo)
    }

    fn recompute(&mut self) -> Result<()> {
        let (nb, nu) = (self.bs.len(), self.ue.len());
        let mut l = DMatrix::zeros(nb, nu);
        let mut tb = DMatrix::zeros(nb, nu);
        let mut tu = DMatrix::zeros(nb, nu);
        for (b, bs) in self.bs.iter().enumerate() {
            for (u, ue) in self.ue.iter().enumerate() {
                let (dx, dy) = (ue.x - bs.x, ue.y - bs.y);
                let d = dx.hypot(dy);
                let gain = pathloss(d, &self.model)?;
                let blocked = bs.region != ue.region
                    || self.ball_radius_m.is_some_and(|r| d > r);
                l[(b, u)] = if blocked { 0.0 } else { gain };
                tb[(b, u)] = wrap_angle(dy.atan2(dx));
                tu[(b, u)] = wrap_angle((-dy).atan2(-dx));
            }
        }
        self.pathloss = l;
        self.theta_bs = tb;
        self.theta_ue = tu;
        Ok(())
    }

    /// The two-operator example network: 2 BSs and 5 UEs per operator.
    pub fn toy() -> Self {
        Self::toy_with(PathLossModel::default(), 1e9)
    }

    pub fn toy_with(model: PathLossModel, bandwidth_hz: f64) -> Self {
        let bs = vec![
            Node::new(100.0, 90.0, 0),
            Node::new(175.0, 90.0, 0),
            Node::new(140.0, 125.0, 1),
            Node::new(200.0, 150.0, 1),
        ];
        let ue_xy = [
            (20.0, 10.0),
            (45.0, 135.0),
            (165.0, 140.0),
            (200.0, 20.0),
            (120.0, 55.0),
            (98.0, 119.0),
            (135.0, 85.0),
            (220.0, 107.0),
            (185.0, 185.0),
            (230.0, 125.0),
        ];
        let ue = ue_xy
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| Node::new(x, y, k / 5))
            .collect();
        let mut topo = Self::new(2, bs, ue, model, bandwidth_hz).expect("toy topology is valid");
        topo.areas = vec![Area {
            region: 0,
            x_min: 0.0,
            x_max: 270.0,
            y_min: 0.0,
            y_max: 200.0,
        }];
        topo
    }

    /// Two operators along two parallel avenues 280 m apart. Each avenue has 14
    /// BS sites at 75 m spacing alternating between operators (operator 1 on the
    /// west curb, operator 2 on the east curb), and 20 UEs per operator dropped
    /// uniformly in the 30 m wide corridor. Avenues do not couple.
    pub fn manhattan(rng: &mut impl Rng, model: PathLossModel, bandwidth_hz: f64) -> Self {
        const AVENUE_X: [f64; 2] = [0.0, 280.0];
        const SITES: usize = 14;
        const SPACING: f64 = 75.0;
        const HALF_WIDTH: f64 = 15.0;
        const UES_PER_OPERATOR: usize = 20;

        let mut bs = Vec::with_capacity(2 * SITES);
        let mut areas = Vec::new();
        for (region, &x0) in AVENUE_X.iter().enumerate() {
            for k in 0..SITES {
                let op = k % 2;
                let x = if op == 0 { x0 - HALF_WIDTH } else { x0 + HALF_WIDTH };
                bs.push(Node::new(x, k as f64 * SPACING, op).in_region(region));
            }
            areas.push(Area {
                region,
                x_min: x0 - HALF_WIDTH,
                x_max: x0 + HALF_WIDTH,
                y_min: -SPACING / 2.0,
                y_max: (SITES - 1) as f64 * SPACING + SPACING / 2.0,
            });
        }
        // Order BSs by operator so that B_1 precedes B_2.
        bs.sort_by_key(|n| n.operator);

        let mut ue = Vec::with_capacity(4 * UES_PER_OPERATOR);
        for op in 0..2 {
            for area in &areas {
                for _ in 0..UES_PER_OPERATOR {
                    let (x, y) = area.sample(rng);
                    ue.push(Node::new(x, y, op).in_region(area.region));
                }
            }
        }
        let mut topo = Self::new(2, bs, ue, model, bandwidth_hz).expect("manhattan topology is valid");
        topo.areas = areas;
        topo
    }

    /// Zeroes the path loss of every pair farther apart than `d_max`.
    pub fn apply_interference_ball(&self, d_max: f64) -> Self {
        let mut out = self.clone();
        out.ball_radius_m = Some(match self.ball_radius_m {
            Some(r) => r.min(d_max),
            None => d_max,
        });
        out.recompute().expect("geometry unchanged");
        out
    }

    pub fn with_areas(mut self, areas: Vec<Area>) -> Self {
        if !areas.is_empty() {
            self.areas = areas;
        }
        self
    }

    pub fn with_carrier(mut self, carrier_hz: f64) -> Self {
        self.carrier_hz = carrier_hz;
        self
    }

    /// Returns a copy with `node` appended as the last UE of its operator.
    /// UE indices are kept grouped by operator; the returned index is where
    /// the new UE landed.
    pub fn with_added_ue(&self, node: Node) -> Result<(Self, usize)> {
        let mut out = self.clone();
        let pos = out
            .ue
            .iter()
            .rposition(|n| n.operator <= node.operator)
            .map_or(0, |p| p + 1);
        out.ue.insert(pos, node);
        out.recompute()?;
        Ok((out, pos))
    }

    pub fn without_ue(&self, u: usize) -> Result<Self> {
        if u >= self.ue.len() {
            return Err(Error::Dimension(format!("UE {u} does not exist")));
        }
        let mut out = self.clone();
        out.ue.remove(u);
        out.recompute()?;
        Ok(out)
    }

    pub fn num_operators(&self) -> usize {
        self.num_operators
    }
    pub fn num_bs(&self) -> usize {
        self.bs.len()
    }
    pub fn num_ue(&self) -> usize {
        self.ue.len()
    }
    pub fn bs(&self, b: usize) -> &Node {
        &self.bs[b]
    }
    pub fn ue(&self, u: usize) -> &Node {
        &self.ue[u]
    }
    pub fn bs_nodes(&self) -> &[Node] {
        &self.bs
    }
    pub fn ue_nodes(&self) -> &[Node] {
        &self.ue
    }
    pub fn bs_operator(&self, b: usize) -> usize {
        self.bs[b].operator
    }
    pub fn ue_operator(&self, u: usize) -> usize {
        self.ue[u].operator
    }
    pub fn bs_of_operator(&self, z: usize) -> Vec<usize> {
        (0..self.bs.len()).filter(|&b| self.bs[b].operator == z).collect()
    }
    pub fn ues_of_operator(&self, z: usize) -> Vec<usize> {
        (0..self.ue.len()).filter(|&u| self.ue[u].operator == z).collect()
    }
    pub fn distance(&self, b: usize, u: usize) -> f64 {
        self.bs[b].distance(&self.ue[u])
    }
    /// Linear path-loss gain `L_bu`; zero for blocked pairs.
    pub fn pathloss(&self, b: usize, u: usize) -> f64 {
        self.pathloss[(b, u)]
    }
    pub fn pathloss_matrix(&self) -> &DMatrix<f64> {
        &self.pathloss
    }
    /// LoS angle of departure at BS `b` toward UE `u`.
    pub fn theta_bs(&self, b: usize, u: usize) -> f64 {
        self.theta_bs[(b, u)]
    }
    /// LoS angle of arrival at UE `u` from BS `b`.
    pub fn theta_ue(&self, b: usize, u: usize) -> f64 {
        self.theta_ue[(b, u)]
    }
    pub fn is_linked(&self, b: usize, u: usize) -> bool {
        self.pathloss[(b, u)] > 0.0
    }
    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }
    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }
    /// Bandwidth `W_z` available to operator `z`.
    pub fn operator_bandwidth(&self, z: usize) -> f64 {
        self.operator_bandwidth_hz[z]
    }
    pub fn pathloss_model(&self) -> &PathLossModel {
        &self.model
    }
    pub fn ball_radius(&self) -> Option<f64> {
        self.ball_radius_m
    }
    pub fn areas(&self) -> &[Area] {
        &self.areas
    }

    /// Same-operator BS with the largest path gain toward `u` (ties: lowest id).
    pub fn strongest_bs(&self, u: usize, roaming: bool) -> Option<usize> {
        let z = self.ue_operator(u);
        let mut best: Option<(usize, f64)> = None;
        for b in 0..self.num_bs() {
            if !roaming && self.bs_operator(b) != z {
                continue;
            }
            let l = self.pathloss(b, u);
            if l > 0.0 && best.is_none_or(|(_, lb)| l > lb) {
                best = Some((b, l));
            }
        }
        best.map(|(b, _)| b)
    }

    /// Serializes to the TOML node-table format read by [`NetworkTopology::from_toml_str`].
    pub fn to_toml_string(&self) -> String {
        let file = TopologyFile {
            num_operators: self.num_operators,
            bandwidth_hz: self.bandwidth_hz,
            carrier_hz: self.carrier_hz,
            pathloss: self.model,
            interference_ball_m: self.ball_radius_m,
            area: self.areas.clone(),
            node: self
                .bs
                .iter()
                .enumerate()
                .map(|(k, n)| NodeRecord::from_node(k + 1, NodeKind::Bs, n))
                .chain(
                    self.ue
                        .iter()
                        .enumerate()
                        .map(|(k, n)| NodeRecord::from_node(k + 1, NodeKind::Ue, n)),
                )
                .collect(),
        };
        toml::to_string(&file).expect("topology serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: TopologyFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut bs: Vec<&NodeRecord> = file.node.iter().filter(|n| n.kind == NodeKind::Bs).collect();
        let mut ue: Vec<&NodeRecord> = file.node.iter().filter(|n| n.kind == NodeKind::Ue).collect();
        bs.sort_by_key(|n| n.id);
        ue.sort_by_key(|n| n.id);
        let to_nodes = |recs: Vec<&NodeRecord>, kind: &str| -> Result<Vec<Node>> {
            recs.iter()
                .map(|r| {
                    if r.operator == 0 || r.operator > file.num_operators {
                        return Err(Error::config(
                            format!("node.{kind}{}.operator", r.id),
                            format!("must lie in [1, {}]", file.num_operators),
                        ));
                    }
                    Ok(Node::new(r.x, r.y, r.operator - 1).in_region(r.region))
                })
                .collect()
        };
        let bs = to_nodes(bs, "bs")?;
        let ue = to_nodes(ue, "ue")?;
        let topo = Self::new(file.num_operators, bs, ue, file.pathloss, file.bandwidth_hz)?
            .with_carrier(file.carrier_hz)
            .with_areas(file.area);
        Ok(match file.interference_ball_m {
            Some(r) => topo.apply_interference_ball(r),
            None => topo,
        })
    }
}

fn bounding_area(bs: &[Node], ue: &[Node], region: usize) -> Area {
    let it = || bs.iter().chain(ue.iter());
    let fold = |f: fn(f64, f64) -> f64, init: f64, g: fn(&Node) -> f64| it().map(g).fold(init, f);
    Area {
        region,
        x_min: fold(f64::min, f64::INFINITY, |n| n.x),
        x_max: fold(f64::max, f64::NEG_INFINITY, |n| n.x),
        y_min: fold(f64::min, f64::INFINITY, |n| n.y),
        y_max: fold(f64::max, f64::NEG_INFINITY, |n| n.y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NodeKind {
    Bs,
    Ue,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: usize,
    kind: NodeKind,
    x: f64,
    y: f64,
    operator: usize,
    #[serde(default)]
    region: usize,
}

impl NodeRecord {
    fn from_node(id: usize, kind: NodeKind, n: &Node) -> Self {
        Self {
            id,
            kind,
            x: n.x,
            y: n.y,
            operator: n.operator + 1,
            region: n.region,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    num_operators: usize,
    #[serde(default = "default_bandwidth")]
    bandwidth_hz: f64,
    #[serde(default = "default_carrier")]
    carrier_hz: f64,
    #[serde(default)]
    pathloss: PathLossModel,
    #[serde(default)]
    interference_ball_m: Option<f64>,
    #[serde(default)]
    area: Vec<Area>,
    node: Vec<NodeRecord>,
}

fn default_bandwidth() -> f64 {
    1e9
}
fn default_carrier() -> f64 {
    28e9
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_counts_and_ownership() {
        let t = NetworkTopology::toy();
        assert_eq!((t.num_bs(), t.num_ue(), t.num_operators()), (4, 10, 2));
        assert_eq!(t.bs_of_operator(0), vec![0, 1]);
        assert_eq!(t.ues_of_operator(1), vec![5, 6, 7, 8, 9]);
        let ue6 = t.ue(5);
        assert_eq!((ue6.x, ue6.y, ue6.operator), (98.0, 119.0, 1));
    }

    #[test]
    fn ue6_is_closer_to_bs1_than_its_own_bs3() {
        let t = NetworkTopology::toy();
        assert!(t.distance(0, 5) < t.distance(2, 5));
    }

    #[test]
    fn pathloss_reference_value() {
        // 61.4 + 20 log10(10) = 81.4 dB
        let l = pathloss(10.0, &PathLossModel::default()).unwrap();
        assert!((l / 10f64.powf(-8.14) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pathloss_doubling_distance() {
        let m = PathLossModel { intercept_db: 61.4, exponent: 2.9 };
        let a = pathloss(37.0, &m).unwrap();
        let b = pathloss(74.0, &m).unwrap();
        assert!((b / a - 2f64.powf(-2.9)).abs() < 1e-12);
    }

    #[test]
    fn pathloss_monotone_and_rejects_zero() {
        let m = PathLossModel::default();
        let gains: Vec<f64> = (1..=500).map(|d| pathloss(d as f64, &m).unwrap()).collect();
        assert!(gains.windows(2).all(|w| w[1] < w[0]));
        assert!(matches!(pathloss(0.0, &m), Err(Error::NonPositiveDistance(_))));
    }

    #[test]
    fn angles_in_half_open_interval() {
        assert_eq!(wrap_angle(-std::f64::consts::PI), std::f64::consts::PI);
        let t = NetworkTopology::toy();
        for b in 0..t.num_bs() {
            for u in 0..t.num_ue() {
                for th in [t.theta_bs(b, u), t.theta_ue(b, u)] {
                    assert!(th > -std::f64::consts::PI && th <= std::f64::consts::PI);
                }
            }
        }
    }

    #[test]
    fn interference_ball_on_toy() {
        let t = NetworkTopology::toy();
        let ball = t.apply_interference_ball(150.0);
        for b in 0..4 {
            for u in 0..10 {
                let d = t.distance(b, u);
                if d > 150.0 {
                    assert_eq!(ball.pathloss(b, u), 0.0, "pair ({b},{u}) at {d} m");
                } else {
                    assert_eq!(ball.pathloss(b, u), t.pathloss(b, u));
                }
            }
        }
        // BS1 -> UE8: (120, 17) -> ~121.2 m, retained.
        assert!(ball.pathloss(0, 7) > 0.0);
        // BS1 -> UE10 at ~134.6 m retained; BS3 -> UE1 at ~166.2 m removed.
        assert!(ball.pathloss(0, 9) > 0.0);
        assert_eq!(ball.pathloss(2, 0), 0.0);
        assert_eq!(ball.apply_interference_ball(150.0), ball);
        assert_eq!(t.apply_interference_ball(f64::INFINITY).pathloss_matrix(), t.pathloss_matrix());
    }

    #[test]
    fn manhattan_shape_and_isolation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = NetworkTopology::manhattan(&mut rng, PathLossModel::default(), 1e9);
        assert_eq!((t.num_bs(), t.num_ue()), (28, 80));
        assert_eq!(t.bs_of_operator(0).len(), 14);
        for b in 0..t.num_bs() {
            for u in 0..t.num_ue() {
                if t.bs(b).region != t.ue(u).region {
                    assert_eq!(t.pathloss(b, u), 0.0);
                }
            }
        }
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let again = NetworkTopology::manhattan(&mut rng2, PathLossModel::default(), 1e9);
        assert_eq!(t, again);
        let ball = t.apply_interference_ball(150.0);
        for b in 0..t.num_bs() {
            for u in 0..t.num_ue() {
                if t.bs(b).region != t.ue(u).region {
                    assert_eq!(ball.pathloss(b, u), 0.0);
                }
            }
        }
    }

    #[test]
    fn equidistant_ues_get_equal_pathloss() {
        let bs = vec![Node::new(0.0, 0.0, 0)];
        let ue = vec![Node::new(30.0, 40.0, 0), Node::new(-50.0, 0.0, 0)];
        let t = NetworkTopology::new(1, bs, ue, PathLossModel::default(), 1e9).unwrap();
        assert_eq!(t.pathloss(0, 0), t.pathloss(0, 1));
    }

    #[test]
    fn file_round_trip() {
        let t = NetworkTopology::toy().apply_interference_ball(150.0);
        let text = t.to_toml_string();
        let back = NetworkTopology::from_toml_str(&text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn added_ue_stays_grouped_by_operator() {
        let t = NetworkTopology::toy();
        let (t2, idx) = t.with_added_ue(Node::new(60.0, 60.0, 0)).unwrap();
        assert_eq!(idx, 5);
        assert_eq!(t2.ues_of_operator(0), vec![0, 1, 2, 3, 4, 5]);
        let back = t2.without_ue(idx).unwrap();
        assert_eq!(back.pathloss_matrix(), t.pathloss_matrix());
    }

    #[test]
    fn operator_out_of_range_rejected() {
        let r = NetworkTopology::new(1, vec![Node::new(0.0, 0.0, 1)], vec![], PathLossModel::default(), 1e9);
        assert!(r.is_err());
    }
}
