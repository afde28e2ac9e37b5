//! Analog combining at the UEs and regularized zero-forcing at the BSs.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use crate::channel::{ula_response, ChannelRealization, LinkChannel};
use crate::error::{Error, Result};
use crate::matrix::BinMatrix;

pub type Row = RowDVector<Complex64>;

/// Combiner steered at the strongest path of the serving link (ties: lowest index).
pub fn analog_combiner(link: &LinkChannel, n_ue: usize) -> Option<DVector<Complex64>> {
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in link.paths.iter().enumerate() {
        let g = p.gain.norm();
        if g > 0.0 && best.is_none_or(|(_, bg)| g > bg) {
            best = Some((k, g));
        }
    }
    best.map(|(k, _)| ula_response(link.paths[k].theta_ue, n_ue))
}

/// `w^H H`.
pub fn effective_channel(w: &DVector<Complex64>, h: &DMatrix<Complex64>) -> Row {
    w.adjoint() * h
}

/// Moore-Penrose pseudo-inverse via SVD, dropping singular values below
/// `max(m, n) * eps * sigma_max`.
pub fn pinv(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return DMatrix::zeros(cols, rows);
    }
    let cutoff = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    svd.pseudo_inverse(cutoff).expect("both singular-vector sets were computed")
}

/// Regularized zero-forcing precoder for an `M x N` effective-channel matrix.
///
/// Returns `pinv(H + delta_abs * E)` where `E` has ones on its main diagonal.
/// `delta` is relative to the smallest nonzero singular value of `H`, so the
/// precoder does not depend on the overall channel scale and the residual
/// leakage between rows stays near `delta` whatever their conditioning.
pub fn rzf_precoder(hbar: &DMatrix<Complex64>, delta: f64) -> DMatrix<Complex64> {
    let (m, n) = hbar.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let sv = hbar.singular_values();
    let cutoff = m.max(n) as f64 * f64::EPSILON * sv.max();
    let scale = sv.iter().copied().filter(|&v| v > cutoff).fold(f64::INFINITY, f64::min);
    let scale = if scale.is_finite() { scale } else { 0.0 };
    let mut reg = hbar.clone();
    for k in 0..m.min(n) {
        reg[(k, k)] += Complex64::from(delta * scale);
    }
    pinv(&reg)
}

/// `lambda = rho / tr(W W^H)`.
pub fn power_normalization(w: &DMatrix<Complex64>, tx_power: f64) -> Result<f64> {
    let energy = w.norm_squared();
    if !(energy > 0.0) {
        return Err(Error::ZeroPrecoder);
    }
    Ok(tx_power / energy)
}

/// Source of effective channel rows `w_u^H H_iu`.
pub trait EffectiveRows {
    fn row(&self, bs: usize, ue: usize) -> &Row;
}

/// Precoding state of one BS.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub bs: usize,
    /// UEs whose effective channels form the rows of the precoded matrix, ascending.
    pub rows: Vec<usize>,
    /// Served UEs, ascending; column `k` of `precoder` belongs to `served[k]`.
    pub served: Vec<usize>,
    /// `N_BS x N_b` digital precoder, one column per served UE.
    pub precoder: DMatrix<Complex64>,
    /// Power normalizer; zero for a silent BS.
    pub lambda: f64,
}

impl Cell {
    /// Builds the RZF cell of BS `bs`. Rows are the UEs with `C_bu = 1` or
    /// `A_bu = 1`; rows that are exactly zero (blocked links) carry nothing to
    /// null and are left out. A BS without served UEs stays silent.
    pub fn build<R: EffectiveRows>(
        bs: usize,
        association: &BinMatrix,
        coordination: &BinMatrix,
        rows_src: &R,
        n_bs: usize,
        delta: f64,
        tx_power: f64,
    ) -> Result<Self> {
        let served = association.row_ones(bs);
        if served.len() > n_bs {
            return Err(Error::CellTooLarge {
                bs,
                served: served.len(),
                antennas: n_bs,
            });
        }
        if served.is_empty() {
            return Ok(Self {
                bs,
                rows: Vec::new(),
                served,
                precoder: DMatrix::zeros(n_bs, 0),
                lambda: 0.0,
            });
        }
        let mut rows = Vec::new();
        for u in 0..association.cols() {
            let served_here = association.get(bs, u);
            if !(served_here || coordination.get(bs, u)) {
                continue;
            }
            let zero = rows_src.row(bs, u).iter().all(|z| *z == Complex64::ZERO);
            if zero {
                if served_here {
                    return Err(Error::UnservableLink { bs, ue: u });
                }
                continue;
            }
            rows.push(u);
        }
        let hbar = DMatrix::from_fn(rows.len(), n_bs, |m, k| rows_src.row(bs, rows[m])[k]);
        let full = rzf_precoder(&hbar, delta);
        let cols: Vec<usize> = served
            .iter()
            .map(|u| rows.binary_search(u).expect("served UEs are rows"))
            .collect();
        let precoder = full.select_columns(&cols);
        let lambda = power_normalization(&precoder, tx_power)?;
        Ok(Self {
            bs,
            rows,
            served,
            precoder,
            lambda,
        })
    }

    /// `lambda * |row * w_k|^2`: power of stream `k` received through `row`.
    pub fn stream_power(&self, row: &Row, k: usize) -> f64 {
        let col = self.precoder.column(k);
        let mut acc = Complex64::ZERO;
        for (a, b) in row.iter().zip(col.iter()) {
            acc += a * b;
        }
        self.lambda * acc.norm_sqr()
    }
}

/// Combiners, effective channels and precoders for one realization.
#[derive(Debug, Clone)]
pub struct BeamformingState {
    num_ue: usize,
    /// Per-UE combiner, steered toward its serving BS.
    pub combiners: Vec<DVector<Complex64>>,
    /// Serving BS per UE.
    pub serving: Vec<usize>,
    effective: Vec<Row>,
    pub cells: Vec<Cell>,
}

impl EffectiveRows for BeamformingState {
    fn row(&self, bs: usize, ue: usize) -> &Row {
        &self.effective[bs * self.num_ue + ue]
    }
}

impl BeamformingState {
    pub fn build(
        channels: &ChannelRealization,
        association: &BinMatrix,
        coordination: &BinMatrix,
        n_bs: usize,
        n_ue: usize,
        delta: f64,
        tx_power: f64,
    ) -> Result<Self> {
        let (num_bs, num_ue) = (channels.num_bs(), channels.num_ue());
        if association.rows() != num_bs || association.cols() != num_ue || !association.same_shape(coordination) {
            return Err(Error::Dimension(format!(
                "decision is {}x{}, network is {num_bs}x{num_ue}",
                association.rows(),
                association.cols()
            )));
        }
        let mut serving = Vec::with_capacity(num_ue);
        let mut combiners = Vec::with_capacity(num_ue);
        for u in 0..num_ue {
            let b = association.first_in_col(u).ok_or(Error::NoServingBs(u))?;
            let w = analog_combiner(channels.link(b, u), n_ue).ok_or(Error::UnservableLink { bs: b, ue: u })?;
            serving.push(b);
            combiners.push(w);
        }
        let mut effective = Vec::with_capacity(num_bs * num_ue);
        for i in 0..num_bs {
            for u in 0..num_ue {
                effective.push(effective_channel(&combiners[u], &channels.link(i, u).matrix));
            }
        }
        let mut state = Self {
            num_ue,
            combiners,
            serving,
            effective,
            cells: Vec::new(),
        };
        let cells = (0..num_bs)
            .map(|b| Cell::build(b, association, coordination, &state, n_bs, delta, tx_power))
            .collect::<Result<Vec<_>>>()?;
        state.cells = cells;
        Ok(state)
    }

    pub fn num_ue(&self) -> usize {
        self.num_ue
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Path;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, m: usize, n: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(m, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn combiner_aims_at_strongest_path() {
        let paths: Vec<Path> = [0.1, 0.9, 0.3]
            .iter()
            .enumerate()
            .map(|(k, &g)| Path {
                gain: Complex64::new(g, 0.0),
                theta_bs: 0.1 * k as f64,
                theta_ue: -0.4 + 0.5 * k as f64,
            })
            .collect();
        let link = LinkChannel::from_paths(paths.clone(), 8, 4);
        let w = analog_combiner(&link, 4).unwrap();
        assert_eq!(w, ula_response(paths[1].theta_ue, 4));
        assert_relative_eq!(w.norm(), 1.0, epsilon = 1e-12);
        let single = LinkChannel::from_paths(vec![paths[2]], 8, 4);
        assert_eq!(analog_combiner(&single, 4).unwrap(), ula_response(paths[2].theta_ue, 4));
        assert!(analog_combiner(&LinkChannel::blocked(8, 4), 4).is_none());
    }

    #[test]
    fn combiner_ties_pick_lowest_index() {
        let p = |th: f64| Path {
            gain: Complex64::new(0.5, 0.0),
            theta_bs: 0.0,
            theta_ue: th,
        };
        let link = LinkChannel::from_paths(vec![p(0.3), p(-0.2)], 8, 2);
        assert_eq!(analog_combiner(&link, 2).unwrap(), ula_response(0.3, 2));
    }

    #[test]
    fn effective_channel_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_matrix(&mut rng, 4, 8);
        let w = DVector::from_fn(4, |k, _| Complex64::new(k as f64, 1.0));
        let row = effective_channel(&w, &h);
        for n in 0..8 {
            let mut acc = Complex64::ZERO;
            for k in 0..4 {
                acc += w[k].conj() * h[(k, n)];
            }
            assert_relative_eq!((row[n] - acc).norm(), 0.0, epsilon = 1e-12);
        }
        assert_eq!(effective_channel(&w, &DMatrix::zeros(4, 8)).norm(), 0.0);
    }

    #[test]
    fn square_invertible_gives_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_matrix(&mut rng, 4, 4);
        let p = rzf_precoder(&h, 1e-12);
        assert!((h * p - DMatrix::identity(4, 4)).norm() < 1e-8);
    }

    #[test]
    fn wide_matrix_matches_least_squares() {
        // Minimum-norm solution of H X = I is H^H (H H^H)^-1.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_matrix(&mut rng, 2, 8);
        let p = rzf_precoder(&h, 1e-6);
        assert!((&h * &p - DMatrix::identity(2, 2)).norm() < 1e-4);
        let gram = &h * h.adjoint();
        let ls = h.adjoint() * gram.try_inverse().unwrap();
        assert!((&p - &ls).norm() < 1e-4 * ls.norm());
        let cross = (&h.row(0) * p.column(1))[(0, 0)].norm();
        assert!(cross < 1e-6 * h.norm());
    }

    #[test]
    fn tall_matrix_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_matrix(&mut rng, 5, 3);
        let p = rzf_precoder(&h, 0.0);
        let gram = h.adjoint() * &h;
        let ls = gram.try_inverse().unwrap() * h.adjoint();
        assert!((&p - &ls).norm() < 1e-9 * ls.norm());
    }

    #[test]
    fn power_normalization_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut w = random_matrix(&mut rng, 8, 3);
        let l = power_normalization(&w, 1.0).unwrap();
        assert_relative_eq!(l * w.norm_squared(), 1.0, epsilon = 1e-12);
        let unit = &w / Complex64::from(w.norm());
        assert_relative_eq!(power_normalization(&unit, 2.5).unwrap(), 2.5, epsilon = 1e-12);
        let c = Complex64::new(0.0, 3.0);
        let scaled = power_normalization(&(&w * c), 1.0).unwrap();
        assert_relative_eq!(scaled, l / 9.0, epsilon = 1e-12);
        w.fill(Complex64::ZERO);
        assert!(matches!(power_normalization(&w, 1.0), Err(Error::ZeroPrecoder)));
    }

    #[test]
    fn pinv_of_zero_and_empty() {
        assert_eq!(pinv(&DMatrix::zeros(2, 3)), DMatrix::<Complex64>::zeros(3, 2));
        assert_eq!(rzf_precoder(&DMatrix::zeros(0, 4), 1e-6).shape(), (4, 0));
    }
}
