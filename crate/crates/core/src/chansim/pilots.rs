use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::channel::ChannelTensor;
use super::noise::noise_power;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

/// Dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn mul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(Error::shape("CMatrix::mul", format!("{}x{} * {}x{}", self.rows, self.cols, other.rows, other.cols)));
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn h(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<CMatrix> {
        if self.rows != self.cols {
            return Err(Error::shape("CMatrix::inverse", format!("{}x{}", self.rows, self.cols)));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = CMatrix::identity(n);
        let scale = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| a[(x, col)].norm().total_cmp(&a[(y, col)].norm()))
                .expect("non-empty range");
            if a[(piv, col)].norm() <= 1e-12 * scale {
                return Err(Error::Singular(format!("pivot {col} vanishes")));
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(piv * n + j, col * n + j);
                    inv.data.swap(piv * n + j, col * n + j);
                }
            }
            let p = a[(col, col)].inv();
            for j in 0..n {
                a[(col, j)] *= p;
                inv[(col, j)] *= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    let (ac, ic) = (a[(col, j)], inv[(col, j)]);
                    a[(r, j)] -= f * ac;
                    inv[(r, j)] -= f * ic;
                }
            }
        }
        Ok(inv)
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Known pilots `X [N_tx x L]` and the received block `Y [N_rx x L]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotFrame {
    pub pilots: CMatrix,
    pub received: CMatrix,
    pub noise_var: f64,
}

fn qpsk(r: &mut impl Rng) -> Complex64 {
    let re = if r.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if r.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

fn hadamard(n: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![1.0]];
    while h.len() < n {
        let m = h.len();
        let mut next = vec![vec![0.0; 2 * m]; 2 * m];
        for i in 0..m {
            for j in 0..m {
                next[i][j] = h[i][j];
                next[i][j + m] = h[i][j];
                next[i + m][j] = h[i][j];
                next[i + m][j + m] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

/// QPSK pilot block. When `n_tx` is a power of two and `len` a multiple of
/// it, one random QPSK sequence is masked by Hadamard rows so that
/// `X X^H = L I`; otherwise entries are independent random QPSK.
pub fn qpsk_pilots(n_tx: usize, len: usize, seed: u64) -> CMatrix {
    let mut r = rng::stream(seed, 0x9170);
    if n_tx.is_power_of_two() && len.is_multiple_of(n_tx) {
        let w = hadamard(n_tx);
        let base: Vec<Complex64> = (0..len).map(|_| qpsk(&mut r)).collect();
        CMatrix::from_fn(n_tx, len, |i, l| base[l] * w[i][l % n_tx])
    } else {
        CMatrix::from_fn(n_tx, len, |_, _| qpsk(&mut r))
    }
}

/// `Y = H X + N` for one `[N_rx x N_tx]` channel matrix.
pub fn simulate_pilot_observation(h: &CMatrix, pilot_len: usize, noise_var: f64, seed: u64) -> Result<PilotFrame> {
    if pilot_len < h.cols {
        return Err(Error::Contract(format!("pilot length {pilot_len} shorter than {} transmit antennas", h.cols)));
    }
    simulate_with_pilots(h, qpsk_pilots(h.cols, pilot_len, seed), noise_var, seed)
}

fn simulate_with_pilots(h: &CMatrix, pilots: CMatrix, noise_var: f64, seed: u64) -> Result<PilotFrame> {
    let mut received = h.mul(&pilots)?;
    if noise_var > 0.0 {
        let sigma = (noise_var / 2.0).sqrt();
        let mut r = rng::stream(seed, 0x4015e);
        for z in &mut received.data {
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            *z += Complex64::new(sigma * a, sigma * b);
        }
    }
    Ok(PilotFrame { pilots, received, noise_var })
}

/// Least-squares estimate `Y X^H (X X^H)^-1`.
pub fn ls_estimate(frame: &PilotFrame) -> Result<CMatrix> {
    let xh = frame.pilots.h();
    let gram = frame.pilots.mul(&xh)?;
    let inv = gram.inverse()?;
    frame.received.mul(&xh)?.mul(&inv)
}

/// Expected LS NMSE for a given frame layout: `σ² N_rx tr((X X^H)^-1) / ||H||²`.
pub fn ls_expected_nmse(h: &CMatrix, pilots: &CMatrix, noise_var: f64) -> Result<f64> {
    let inv = pilots.mul(&pilots.h())?.inverse()?;
    let tr: f64 = (0..inv.rows).map(|i| inv[(i, i)].re).sum();
    Ok(noise_var * h.rows as f64 * tr / h.frobenius_sq())
}

/// Spatial slice `[N_rx x N_tx]` of `h` at slot `t`, subcarrier `f`.
pub fn channel_matrix(h: &ChannelTensor, t: usize, f: usize) -> CMatrix {
    let cfg = &h.meta.config;
    let (nrx, ntx) = (cfg.rx_array.elements(), cfg.tx_array.elements());
    CMatrix::from_fn(nrx, ntx, |r, x| h.at(t, r * ntx + x, f))
}

/// LS-estimate every `(slot, subcarrier)` matrix of `h` from `pilot_len`
/// QPSK pilots at average receive SNR `snr_db` (`None` = noiseless).
pub fn ls_estimate_tensor(h: &ChannelTensor, pilot_len: usize, snr_db: Option<f64>, seed: u64) -> Result<ChannelTensor> {
    let cfg = &h.meta.config;
    let (nrx, ntx) = (cfg.rx_array.elements(), cfg.tx_array.elements());
    let (nt, ns, nf) = h.dims();
    if nrx * ntx != ns {
        return Err(Error::shape("ls_estimate_tensor", format!("{nrx}x{ntx} antennas vs spatial axis {ns}")));
    }
    if pilot_len < ntx {
        return Err(Error::Contract(format!("pilot length {pilot_len} shorter than {ntx} transmit antennas")));
    }
    let noise_var = match snr_db {
        Some(s) => noise_power(h.mean_power() * ntx as f64, s),
        None => 0.0,
    };
    let pilots = qpsk_pilots(ntx, pilot_len, seed);
    let xh = pilots.h();
    let proj = xh.mul(&pilots.mul(&xh)?.inverse()?)?;
    let mut data = vec![0f32; nt * ns * nf * 2];
    for t in 0..nt {
        for f in 0..nf {
            let hm = channel_matrix(h, t, f);
            let frame = simulate_with_pilots(&hm, pilots.clone(), noise_var, crate::rng::mix(seed, (t * nf + f) as u64))?;
            let est = frame.received.mul(&proj)?;
            for r in 0..nrx {
                for x in 0..ntx {
                    let i = ((t * ns + r * ntx + x) * nf + f) * 2;
                    data[i] = est[(r, x)].re as f32;
                    data[i + 1] = est[(r, x)].im as f32;
                }
            }
        }
    }
    let mut meta = h.meta.clone();
    meta.snr_db = snr_db;
    ChannelTensor::new(Tensor::new([nt, ns, nf, 2], data)?, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_h(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut r = rng::stream(seed, 1);
        CMatrix::from_fn(rows, cols, |_, _| {
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            Complex64::new(a, b)
        })
    }

    #[test]
    fn pilots_are_unit_qpsk_and_orthogonal() {
        let x = qpsk_pilots(4, 64, 3);
        for z in &x.data {
            assert!((z.norm() - 1.0).abs() < 1e-12);
            assert!((z.re.abs() - FRAC_1_SQRT_2).abs() < 1e-12);
        }
        let g = x.mul(&x.h()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 64.0 } else { 0.0 };
                assert!((g[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn noiseless_observation_is_exact_product() {
        let h = random_h(4, 4, 0);
        let f = simulate_pilot_observation(&h, 64, 0.0, 1).unwrap();
        assert_eq!(f.received, h.mul(&f.pilots).unwrap());
        let est = ls_estimate(&f).unwrap();
        let err: f64 = est.data.iter().zip(&h.data).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(err / h.frobenius_sq() < 1e-10);
    }

    #[test]
    fn short_pilots_rejected() {
        assert!(simulate_pilot_observation(&random_h(4, 4, 0), 3, 0.0, 0).is_err());
    }

    #[test]
    fn square_case_is_plain_inverse() {
        let h = random_h(2, 4, 5);
        let f = simulate_pilot_observation(&h, 4, 0.3, 2).unwrap();
        let direct = f.received.mul(&f.pilots.inverse().unwrap()).unwrap();
        let ls = ls_estimate(&f).unwrap();
        for (a, b) in ls.data.iter().zip(&direct.data) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn singular_gram_rejected() {
        let frame = PilotFrame {
            pilots: CMatrix::from_fn(2, 4, |_, _| Complex64::new(1.0, 0.0)),
            received: CMatrix::zeros(2, 4),
            noise_var: 0.0,
        };
        assert!(matches!(ls_estimate(&frame), Err(Error::Singular(_))));
    }
}
