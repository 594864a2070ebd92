//! Random channel generators used by sampling harnesses and tests.

use rand::seq::index::sample;
use rand::Rng;

use super::pauli::{pauli_strings, PauliIndex};
use super::repr::KrausSet;
use crate::linalg::{c, eigh, expm_hermitian, identity, random_gaussian_matrix, random_unitary, CMat};

/// Random CPTP map from a Ginibre isometry, with `rank` Kraus operators
/// raised to at least `⌈d_in/d_out⌉` so the isometry exists.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize, rank: usize) -> KrausSet {
    let rank = rank.max(d_in.div_ceil(d_out));
    let g = random_gaussian_matrix(rng, rank * d_out, d_in);
    let gram = g.adjoint() * &g;
    let (vals, vecs) = eigh(&gram);
    let inv_sqrt = CMat::from_diagonal(&crate::linalg::CVec::from_iterator(
        d_in,
        vals.iter().map(|&l| c(1.0 / l.max(1e-300).sqrt(), 0.0)),
    ));
    let iso = &g * (&vecs * inv_sqrt * vecs.adjoint());
    let operators = (0..rank).map(|i| iso.rows(i * d_out, d_out).into_owned()).collect();
    KrausSet { d_in, d_out, operators }
}

pub fn random_unitary_channel<R: Rng + ?Sized>(rng: &mut R, d: usize) -> KrausSet {
    KrausSet::unitary(random_unitary(rng, d))
}

/// Channels whose process matrix has few non-zero entries: Pauli channels on
/// a random support, single Pauli rotations, and mixtures of a rotation with
/// the identity.
pub fn random_sparse_channel<R: Rng + ?Sized>(rng: &mut R, n: usize) -> KrausSet {
    let d = 1usize << n;
    let m = 1usize << (2 * n);
    let paulis = pauli_strings(n);
    match rng.gen_range(0..3) {
        0 => {
            let support = rng.gen_range(1..=m.min(4));
            let idx = sample(rng, m, support).into_vec();
            let w: Vec<f64> = idx.iter().map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = w.iter().sum();
            let operators = idx
                .iter()
                .zip(&w)
                .map(|(&a, &p)| paulis[a].to_dense().scale((p / total).sqrt()))
                .collect();
            KrausSet { d_in: d, d_out: d, operators }
        }
        1 => {
            let a = rng.gen_range(1..m);
            KrausSet::unitary(pauli_rotation(n, a, rng.gen_range(-3.0..3.0)))
        }
        _ => {
            let a = rng.gen_range(1..m);
            let p: f64 = rng.gen();
            let u = pauli_rotation(n, a, rng.gen_range(-3.0..3.0));
            KrausSet {
                d_in: d,
                d_out: d,
                operators: vec![identity(d).scale(p.sqrt()), u.scale((1.0 - p).sqrt())],
            }
        }
    }
}

/// `exp(-i t σ_A)`.
pub fn pauli_rotation(n: usize, code: usize, t: f64) -> CMat {
    let p = PauliIndex::new(n, code).string().to_dense();
    expm_hermitian(&p.scale(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_channels_are_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (di, dout, r) in [(2, 2, 1), (2, 2, 4), (4, 2, 3), (2, 4, 2), (4, 2, 1), (8, 2, 2)] {
            let k = random_channel(&mut rng, di, dout, r);
            assert!(k.operators.len() * dout >= di);
            assert!(k.is_trace_preserving(1e-10));
        }
        for _ in 0..30 {
            assert!(random_sparse_channel(&mut rng, 2).is_trace_preserving(1e-10));
        }
    }
}
