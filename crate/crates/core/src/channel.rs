//! Narrowband geometric channel with half-wavelength ULAs at both ends.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::topology::NetworkTopology;

/// Steering vector of an `n`-element half-wavelength ULA, unit norm.
/// Entry `k` is `exp(-j k pi sin(theta)) / sqrt(n)`.
pub fn ula_response(theta: f64, n: usize) -> DVector<Complex64> {
    assert!(n >= 1, "array needs at least one element");
    let scale = 1.0 / (n as f64).sqrt();
    let phase = -std::f64::consts::PI * theta.sin();
    DVector::from_iterator(n, (0..n).map(|k| Complex64::from_polar(scale, phase * k as f64)))
}

/// One propagation path of a BS-UE link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Angle of departure at the BS.
    pub theta_bs: f64,
    /// Angle of arrival at the UE.
    pub theta_ue: f64,
}

/// Channel of one BS-UE link: the path list and the `n_ue x n_bs` matrix it builds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkChannel {
    pub paths: Vec<Path>,
    pub matrix: DMatrix<Complex64>,
}

impl LinkChannel {
    pub fn from_paths(paths: Vec<Path>, n_bs: usize, n_ue: usize) -> Self {
        let matrix = channel_matrix(&paths, n_bs, n_ue);
        Self { paths, matrix }
    }

    pub fn blocked(n_bs: usize, n_ue: usize) -> Self {
        Self {
            paths: Vec::new(),
            matrix: DMatrix::zeros(n_ue, n_bs),
        }
    }

    pub fn is_blocked(&self) -> bool {
        self.paths.is_empty()
    }
}

/// `sqrt(n_bs n_ue / n_paths) * sum_n g_n a_ue(theta_ue_n) a_bs(theta_bs_n)^H`.
pub fn channel_matrix(paths: &[Path], n_bs: usize, n_ue: usize) -> DMatrix<Complex64> {
    let mut h = DMatrix::zeros(n_ue, n_bs);
    if paths.is_empty() {
        return h;
    }
    let scale = ((n_bs * n_ue) as f64 / paths.len() as f64).sqrt();
    for p in paths {
        let a_ue = ula_response(p.theta_ue, n_ue);
        let a_bs = ula_response(p.theta_bs, n_bs);
        h += (a_ue * a_bs.adjoint()) * (p.gain * scale);
    }
    h
}

/// Draws the paths of link `(b, u)`. The first path follows the geometric LoS
/// angles; the others have angles uniform on `(-pi/2, pi/2)` at both ends.
/// Gains are circularly-symmetric Gaussian with variance `L_bu`.
pub fn sample_paths(
    topology: &NetworkTopology,
    b: usize,
    u: usize,
    num_paths: usize,
    rng: &mut impl Rng,
) -> Vec<Path> {
    let l = topology.pathloss(b, u);
    if l <= 0.0 {
        return Vec::new();
    }
    let sigma = (l / 2.0).sqrt();
    let half_pi = std::f64::consts::FRAC_PI_2;
    (0..num_paths)
        .map(|n| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let gain = Complex64::new(re * sigma, im * sigma);
            let (theta_bs, theta_ue) = if n == 0 {
                (topology.theta_bs(b, u), topology.theta_ue(b, u))
            } else {
                (
                    rng.random_range(-half_pi..half_pi),
                    rng.random_range(-half_pi..half_pi),
                )
            };
            Path {
                gain,
                theta_bs,
                theta_ue,
            }
        })
        .collect()
}

/// Channels of every BS-UE pair for one coherence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    num_bs: usize,
    num_ue: usize,
    links: Vec<LinkChannel>,
}

impl ChannelRealization {
    /// Samples all links in BS-major order. Blocked links consume no randomness.
    pub fn sample(
        topology: &NetworkTopology,
        n_bs: usize,
        n_ue: usize,
        num_paths: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut links = Vec::with_capacity(topology.num_bs() * topology.num_ue());
        for b in 0..topology.num_bs() {
            for u in 0..topology.num_ue() {
                let paths = sample_paths(topology, b, u, num_paths, rng);
                links.push(if paths.is_empty() {
                    LinkChannel::blocked(n_bs, n_ue)
                } else {
                    LinkChannel::from_paths(paths, n_bs, n_ue)
                });
            }
        }
        Self {
            num_bs: topology.num_bs(),
            num_ue: topology.num_ue(),
            links,
        }
    }

    pub fn from_links(num_bs: usize, num_ue: usize, links: Vec<LinkChannel>) -> Self {
        assert_eq!(links.len(), num_bs * num_ue);
        Self {
            num_bs,
            num_ue,
            links,
        }
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_ue(&self) -> usize {
        self.num_ue
    }

    pub fn link(&self, b: usize, u: usize) -> &LinkChannel {
        &self.links[b * self.num_ue + u]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PathLossModel;
    use crate::topology::Node;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ula_broadside() {
        let a = ula_response(0.0, 4);
        for k in 0..4 {
            assert_relative_eq!(a[k].re, 0.5, epsilon = 1e-15);
            assert_relative_eq!(a[k].im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn ula_endfire() {
        let a = ula_response(std::f64::consts::FRAC_PI_2, 2);
        let s = 1.0 / 2f64.sqrt();
        assert_relative_eq!(a[0].re, s, epsilon = 1e-15);
        assert_relative_eq!(a[1].re, -s, epsilon = 1e-15);
        assert!(a[1].im.abs() < 1e-15);
    }

    #[test]
    fn ula_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let th = rng.random_range(-3.2..3.2);
            let n = rng.random_range(1..70);
            assert_relative_eq!(ula_response(th, n).norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_unit_path_is_scaled_outer_product() {
        let p = Path {
            gain: Complex64::new(1.0, 0.0),
            theta_bs: 0.0,
            theta_ue: 0.0,
        };
        let h = channel_matrix(&[p], 8, 2);
        let expected = (ula_response(0.0, 2) * ula_response(0.0, 8).adjoint()) * Complex64::from(4.0);
        assert_relative_eq!((h.clone() - expected).norm(), 0.0, epsilon = 1e-14);
        assert_eq!(h.rank(1e-9), 1);
    }

    fn two_node(distance: f64) -> NetworkTopology {
        NetworkTopology::new(
            1,
            vec![Node::new(0.0, 0.0, 0)],
            vec![Node::new(distance, 0.0, 0)],
            PathLossModel::default(),
            1e9,
        )
        .unwrap()
    }

    #[test]
    fn frobenius_energy_matches_pathloss() {
        // E||H||_F^2 = n_bs n_ue L for any path count; check the sample mean.
        let topo = two_node(40.0);
        let l = topo.pathloss(0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let mean: f64 = (0..draws)
            .map(|_| {
                let r = ChannelRealization::sample(&topo, 8, 2, 3, &mut rng);
                r.link(0, 0).matrix.norm_squared() / 16.0
            })
            .sum::<f64>()
            / draws as f64;
        assert!((mean / l - 1.0).abs() < 0.05, "mean/L = {}", mean / l);
    }

    #[test]
    fn gain_variance_within_three_standard_errors() {
        let topo = two_node(25.0);
        let l = topo.pathloss(0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..20_000)
            .flat_map(|_| sample_paths(&topo, 0, 0, 1, &mut rng))
            .map(|p| p.gain.norm_sqr())
            .collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - l).abs() < 3.0 * (var / n).sqrt());
    }

    #[test]
    fn blocked_link_is_zero_and_rank_bounded() {
        let topo = two_node(40.0).apply_interference_ball(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = ChannelRealization::sample(&topo, 8, 2, 3, &mut rng);
        assert!(r.link(0, 0).is_blocked());
        assert_eq!(r.link(0, 0).matrix.norm(), 0.0);

        let open = two_node(40.0);
        for paths in 1..=3 {
            let r = ChannelRealization::sample(&open, 8, 4, paths, &mut rng);
            let link = r.link(0, 0);
            assert!(link.matrix.rank(1e-12 * link.matrix.norm()) <= paths);
            assert_eq!(channel_matrix(&link.paths, 8, 4), link.matrix);
        }
    }
}
