//! Shared oracles for the integration and acceptance suites. These stay
//! deliberately naive — direct summations and textbook algebra — so they
//! exercise none of the code paths they are checking.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use pulseprint::eval::{self, ScoreSet};
use pulseprint::features::{self, ScaleGrid, Scalogram};

/// Direct O(n^2)-per-scale discretization of the wavelet inner product:
/// sample the dilated wavelet by a hand-rolled inverse DFT of its closed-form
/// frequency response, then correlate in the time domain.
pub fn cwt_direct(x: &[f64], grid: &ScaleGrid) -> Vec<Vec<Complex64>> {
    let n = x.len();
    let morse = grid.morse();
    let mut rows = Vec::with_capacity(grid.len());
    for &a in grid.scales() {
        let psi_hat =
            features::morse_wavelet(morse.gamma, morse.beta, a, n, grid.sample_rate).unwrap();
        let mut psi = vec![Complex64::new(0.0, 0.0); n];
        for (u, slot) in psi.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, w) in psi_hat.iter().enumerate() {
                let ang = std::f64::consts::TAU * (k as f64) * (u as f64) / n as f64;
                acc += w * Complex64::new(ang.cos(), ang.sin());
            }
            *slot = acc / n as f64;
        }
        let gain = 1.0 / a.sqrt();
        let mut row = Vec::with_capacity(n);
        for b in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (u, &xv) in x.iter().enumerate() {
                acc += psi[(u + n - b) % n].conj() * xv;
            }
            row.push(acc * gain);
        }
        rows.push(row);
    }
    rows
}

/// Relative Frobenius error between a fast scalogram and the direct rows.
pub fn rel_frobenius_error(fast: &Scalogram, direct: &[Vec<Complex64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in 0..fast.n_scales {
        for (a, b) in fast.row(s).iter().zip(&direct[s]) {
            num += (a - b).norm_sqr();
            den += b.norm_sqr();
        }
    }
    (num / den.max(1e-300)).sqrt()
}

/// Brute-force generalized symmetric eigensolve of `S_b v = lambda S_w v`
/// through the explicit inverse square root of `S_w` — a different algebraic
/// route than the Cholesky reduction used by the library.
pub fn generalized_eig_oracle(
    s_b: &DMatrix<f64>,
    s_w: &DMatrix<f64>,
) -> (Vec<f64>, DMatrix<f64>) {
    let eig_w = SymmetricEigen::new(s_w.clone());
    let mut inv_sqrt = eig_w.eigenvalues.clone();
    for v in inv_sqrt.iter_mut() {
        *v = 1.0 / v.sqrt();
    }
    let u = &eig_w.eigenvectors;
    let w_inv_sqrt = u * DMatrix::from_diagonal(&inv_sqrt) * u.transpose();
    let m = &w_inv_sqrt * s_b * &w_inv_sqrt;
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(s_b.nrows(), order.len());
    for (c, &i) in order.iter().enumerate() {
        let v = &w_inv_sqrt * eig.eigenvectors.column(i);
        let norm = v.norm();
        vecs.set_column(c, &(v / norm));
    }
    (vals, vecs)
}

/// Largest principal angle (radians) between the column spans of two
/// matrices.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let overlap = qa.transpose() * qb;
    let svd = overlap.svd(false, false);
    svd.singular_values
        .iter()
        .map(|s| s.min(1.0).acos())
        .fold(0.0, f64::max)
}

/// Exhaustive threshold sweep for the equal error rate: recount FAR and FRR
/// at every distinct score by full scans (O(n^2) total), then apply the
/// shared crossing convention.
pub fn eer_exhaustive(scores: &ScoreSet) -> f64 {
    let mut thresholds: Vec<f64> =
        scores.genuine.iter().chain(&scores.imposter).cloned().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    let mut pts = vec![(0.0, 1.0)];
    for &t in &thresholds {
        let fa = scores.imposter.iter().filter(|&&s| s <= t).count() as f64
            / scores.imposter.len() as f64;
        let fr = scores.genuine.iter().filter(|&&s| s > t).count() as f64
            / scores.genuine.len() as f64;
        pts.push((fa, fr));
    }
    eval::eer_from_sweep(&pts)
}

/// Class samples `mu +- sigma e_i` for every axis, whose within-class
/// scatter is exactly isotropic.
pub fn isotropic_class(center: &[f64], sigma: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..center.len() {
        for sign in [1.0, -1.0] {
            let mut v = center.to_vec();
            v[i] += sign * sigma;
            out.push(v);
        }
    }
    out
}

/// A Haar-ish random rotation from the QR of a Gaussian matrix.
pub fn random_rotation(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}
