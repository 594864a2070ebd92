//! Pauli strings and the canonical Pauli basis.
//!
//! A Pauli string on `n` qubits is indexed by its code word
//! `a_0 a_1 … a_{n-1}` over `{0,1,2,3}` (I, X, Y, Z), read as a base-4 number
//! with `a_0` most significant. Index 0 is the identity string.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, C64, I, ONE};

pub const MAX_BASIS_QUBITS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliIndex {
    pub n: usize,
    pub code: usize,
}

impl PauliIndex {
    pub fn new(n: usize, code: usize) -> Self {
        debug_assert!(code < 1 << (2 * n));
        Self { n, code }
    }

    pub fn from_symbols(symbols: &[u8]) -> Self {
        let code = symbols.iter().fold(0usize, |acc, &s| acc * 4 + s as usize);
        Self { n: symbols.len(), code }
    }

    /// Symbol acting on qubit `q`.
    pub fn symbol(&self, q: usize) -> u8 {
        ((self.code >> (2 * (self.n - 1 - q))) & 3) as u8
    }

    pub fn label(&self) -> String {
        (0..self.n).map(|q| ['I', 'X', 'Y', 'Z'][self.symbol(q) as usize]).collect()
    }

    pub fn string(&self) -> PauliString {
        PauliString::from_index(*self)
    }
}

/// Sparse form of a Pauli string: it maps `|j⟩` to `phase(j) |j ⊕ x⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliString {
    pub n: usize,
    pub x_mask: usize,
    pub z_mask: usize,
    /// Number of Y factors; the global phase is `i^y_count`.
    pub y_count: u32,
}

impl PauliString {
    pub fn from_index(idx: PauliIndex) -> Self {
        let mut x_mask = 0;
        let mut z_mask = 0;
        let mut y_count = 0;
        for q in 0..idx.n {
            let bit = 1usize << (idx.n - 1 - q);
            match idx.symbol(q) {
                1 => x_mask |= bit,
                2 => {
                    x_mask |= bit;
                    z_mask |= bit;
                    y_count += 1;
                }
                3 => z_mask |= bit,
                _ => {}
            }
        }
        Self { n: idx.n, x_mask, z_mask, y_count }
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    fn global_phase(&self) -> C64 {
        match self.y_count % 4 {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        }
    }

    /// Column `col` has its single non-zero entry at row `col ^ x_mask`.
    #[inline]
    pub fn entry_for_col(&self, col: usize) -> (usize, C64) {
        let sign = if (col & self.z_mask).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        (col ^ self.x_mask, self.global_phase() * sign)
    }

    pub fn to_dense(&self) -> CMat {
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for col in 0..d {
            let (row, v) = self.entry_for_col(col);
            m[(row, col)] = v;
        }
        m
    }

    /// `Tr(σ · m)`.
    pub fn trace_with(&self, m: &CMat) -> C64 {
        // Tr(σ m) = Σ_col Σ_row σ[row, col] m[col, row]
        (0..self.dim())
            .map(|col| {
                let (row, v) = self.entry_for_col(col);
                v * m[(col, row)]
            })
            .sum()
    }

    /// `σ · m` computed sparsely.
    pub fn left_mul(&self, m: &CMat) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, m.ncols());
        for k in 0..d {
            let (row, v) = self.entry_for_col(k);
            for j in 0..m.ncols() {
                out[(row, j)] = v * m[(k, j)];
            }
        }
        out
    }

    /// `m · σ` computed sparsely.
    pub fn right_mul(&self, m: &CMat) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(m.nrows(), d);
        for col in 0..d {
            let (row, v) = self.entry_for_col(col);
            for i in 0..m.nrows() {
                out[(i, col)] = m[(i, row)] * v;
            }
        }
        out
    }
}

/// All `4^n` Pauli strings in canonical order.
pub fn pauli_strings(n: usize) -> Vec<PauliString> {
    (0..1usize << (2 * n)).map(|code| PauliString::from_index(PauliIndex::new(n, code))).collect()
}

/// Dense Pauli basis `[σ_0, …, σ_{4^n - 1}]`.
pub fn pauli_basis(n: usize) -> Result<Vec<CMat>> {
    if n == 0 || n > MAX_BASIS_QUBITS {
        return Err(Error::Range(format!(
            "pauli_basis requires 1 <= n <= {MAX_BASIS_QUBITS}, got {n}"
        )));
    }
    Ok(pauli_strings(n).iter().map(PauliString::to_dense).collect())
}

pub fn single_qubit_paulis() -> [CMat; 4] {
    let z = c(0.0, 0.0);
    [
        CMat::from_row_slice(2, 2, &[ONE, z, z, ONE]),
        CMat::from_row_slice(2, 2, &[z, ONE, ONE, z]),
        CMat::from_row_slice(2, 2, &[z, -I, I, z]),
        CMat::from_row_slice(2, 2, &[ONE, z, z, -ONE]),
    ]
}
