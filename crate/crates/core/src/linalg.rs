//! Dense complex linear algebra helpers shared by every module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Qubit `q` of an `n`-qubit
//! register corresponds to bit `n - 1 - q` of a computational-basis index, so
//! qubit 0 is the most significant (leftmost) tensor factor.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Default absolute tolerance for algebraic identities.
pub const TOL: f64 = 1e-10;
/// Floor used when deciding whether an eigenvalue counts as non-negative.
pub const PSD_TOL: f64 = 1e-8;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

/// Build a matrix from row-major entries.
pub fn from_rows(rows: usize, cols: usize, entries: &[C64]) -> CMat {
    assert_eq!(entries.len(), rows * cols);
    CMat::from_row_slice(rows, cols, entries)
}

pub fn from_real_rows(rows: usize, cols: usize, entries: &[f64]) -> CMat {
    let v: Vec<C64> = entries.iter().map(|&x| c(x, 0.0)).collect();
    from_rows(rows, cols, &v)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_all(ms: &[CMat]) -> CMat {
    let mut out = identity(1);
    for m in ms {
        out = out.kronecker(m);
    }
    out
}

/// Max absolute entrywise difference.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_abs_diff");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn approx_eq(a: &CMat, b: &CMat, tol: f64) -> bool {
    a.shape() == b.shape() && max_abs_diff(a, b) <= tol
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && max_abs_diff(m, &m.adjoint()) <= tol
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), h);
    }
    match to_faer(&h).self_adjoint_eigen(faer::Side::Lower) {
        Ok(eig) => {
            let s = eig.S().column_vector();
            let u = eig.U();
            let vals = (0..n).map(|k| s[k].re).collect();
            (vals, CMat::from_fn(n, n, |i, j| u[(i, j)]))
        }
        Err(_) => eigh_fallback(h),
    }
}

fn eigh_fallback(h: CMat) -> (Vec<f64>, CMat) {
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = CMat::zeros(eig.eigenvectors.nrows(), idx.len());
    for (j, &k) in idx.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(k));
    }
    (vals, vecs)
}

pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    eigh(m).0
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone().singular_values().iter().copied().collect()
}

/// Sum of singular values.
pub fn trace_norm(m: &CMat) -> f64 {
    singular_values(m).iter().sum()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// `exp(-i H)` for Hermitian `H`, via eigendecomposition.
pub fn expm_hermitian(h: &CMat) -> CMat {
    let (vals, vecs) = eigh(h);
    let phases = CMat::from_diagonal(&CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&l| C64::from_polar(1.0, -l)),
    ));
    &vecs * phases * vecs.adjoint()
}

/// Partial trace keeping the listed qubits (in ascending order).
pub fn partial_trace_keep(rho: &CMat, n: usize, keep: &[usize]) -> CMat {
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    let traced: Vec<usize> = (0..n).filter(|q| !keep_sorted.contains(q)).collect();
    let dk = 1usize << keep_sorted.len();
    let dt = 1usize << traced.len();
    let compose = |k: usize, t: usize| -> usize {
        let mut idx = 0usize;
        for (pos, &q) in keep_sorted.iter().enumerate() {
            let bit = (k >> (keep_sorted.len() - 1 - pos)) & 1;
            idx |= bit << (n - 1 - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            let bit = (t >> (traced.len() - 1 - pos)) & 1;
            idx |= bit << (n - 1 - q);
        }
        idx
    };
    let mut out = CMat::zeros(dk, dk);
    for t in 0..dt {
        for i in 0..dk {
            let ri = compose(i, t);
            for j in 0..dk {
                out[(i, j)] += rho[(ri, compose(j, t))];
            }
        }
    }
    out
}

/// Apply a `2^k`-dimensional operator to the listed target qubits, acting on
/// the row index of `m` (left multiplication by `op ⊗ I`, suitably permuted).
pub fn apply_left(m: &CMat, op: &CMat, targets: &[usize], n: usize) -> CMat {
    let k = targets.len();
    let dk = 1usize << k;
    debug_assert_eq!(op.nrows(), dk);
    let dim = 1usize << n;
    let masks: Vec<usize> = targets.iter().map(|&q| 1usize << (n - 1 - q)).collect();
    let full_mask: usize = masks.iter().sum();
    let offset = |sub: usize| -> usize {
        let mut idx = 0;
        for (pos, &mask) in masks.iter().enumerate() {
            if (sub >> (k - 1 - pos)) & 1 == 1 {
                idx |= mask;
            }
        }
        idx
    };
    let offs: Vec<usize> = (0..dk).map(offset).collect();
    let mut out = CMat::zeros(dim, m.ncols());
    let mut buf = vec![ZERO; dk];
    for base in 0..dim {
        if base & full_mask != 0 {
            continue;
        }
        for col in 0..m.ncols() {
            for (s, o) in offs.iter().enumerate() {
                buf[s] = m[(base | o, col)];
            }
            for r in 0..dk {
                let mut acc = ZERO;
                for s in 0..dk {
                    acc += op[(r, s)] * buf[s];
                }
                out[(base | offs[r], col)] = acc;
            }
        }
    }
    out
}

/// `op · m · op†` with `op` acting on `targets`.
pub fn conjugate_local(m: &CMat, op: &CMat, targets: &[usize], n: usize) -> CMat {
    let left = apply_left(m, op, targets, n);
    apply_left(&left.adjoint(), op, targets, n).adjoint()
}

/// Embed a local operator into the full register (dense).
pub fn embed(op: &CMat, targets: &[usize], n: usize) -> CMat {
    apply_left(&identity(1 << n), op, targets, n)
}

pub fn qubits_for_dim(d: usize) -> Result<usize> {
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::Dimension(format!("dimension {d} is not a power of two")));
    }
    Ok(d.trailing_zeros() as usize)
}

pub fn random_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Haar-random unitary via QR of a Ginibre matrix with phase correction.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    let g = random_gaussian_matrix(rng, d, d);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let ph = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
        let mut col = q.column_mut(j);
        col *= ph;
    }
    q
}

/// Random density matrix of full rank drawn from the Ginibre ensemble.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    let g = random_gaussian_matrix(rng, d, d);
    let m = &g * g.adjoint();
    let t = trace(&m);
    m / t
}

pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    let v = random_gaussian_matrix(rng, d, 1);
    let norm = v.norm();
    let v = v / c(norm, 0.0);
    &v * v.adjoint()
}

/// Random Hermitian matrix with i.i.d. Gaussian entries before symmetrization.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    hermitian_part(&random_gaussian_matrix(rng, d, d))
}
