//! The four interchangeable channel representations and conversions.

use serde::{Deserialize, Serialize};

use super::pauli::{pauli_strings, PauliString};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{
    c, eigh, frobenius_sq, identity, max_abs_diff, qubits_for_dim, trace, CMat, C64, PSD_TOL, TOL,
    ZERO,
};

/// Kraus operators `K_i : C^{d_in} → C^{d_out}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrausSet {
    pub d_in: usize,
    pub d_out: usize,
    #[serde(with = "io::cmat_vec")]
    pub operators: Vec<CMat>,
}

impl KrausSet {
    pub fn new(operators: Vec<CMat>) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::Channel("empty Kraus set".into()))?;
        let (d_out, d_in) = first.shape();
        if operators.iter().any(|k| k.shape() != (d_out, d_in)) {
            return Err(Error::Dimension("Kraus operators differ in shape".into()));
        }
        Ok(Self { d_in, d_out, operators })
    }

    pub fn unitary(u: CMat) -> Self {
        let (d_out, d_in) = u.shape();
        Self { d_in, d_out, operators: vec![u] }
    }

    pub fn identity(d: usize) -> Self {
        Self::unitary(identity(d))
    }

    /// Maximally depolarizing channel on `n` qubits, written with scaled Paulis.
    pub fn depolarizing(n: usize) -> Self {
        let d = 1usize << n;
        let s = 1.0 / d as f64;
        let operators = pauli_strings(n).iter().map(|p| p.to_dense().scale(s)).collect();
        Self { d_in: d, d_out: d, operators }
    }

    /// `Σ K_i† K_i`.
    pub fn completeness(&self) -> CMat {
        self.operators
            .iter()
            .fold(CMat::zeros(self.d_in, self.d_in), |acc, k| acc + k.adjoint() * k)
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        max_abs_diff(&self.completeness(), &identity(self.d_in)) <= tol
    }

    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        check_input(rho, self.d_in)?;
        Ok(self
            .operators
            .iter()
            .fold(CMat::zeros(self.d_out, self.d_out), |acc, k| acc + k * rho * k.adjoint()))
    }

    /// Kraus set of `other ∘ self`.
    pub fn then(&self, other: &KrausSet) -> Result<KrausSet> {
        if self.d_out != other.d_in {
            return Err(Error::Dimension(format!(
                "cannot chain d_out={} into d_in={}",
                self.d_out, other.d_in
            )));
        }
        let mut ops = Vec::with_capacity(self.operators.len() * other.operators.len());
        for b in &other.operators {
            for a in &self.operators {
                ops.push(b * a);
            }
        }
        KrausSet::new(ops)
    }

    pub fn to_choi(&self) -> Choi {
        let (di, dout) = (self.d_in, self.d_out);
        let mut j = CMat::zeros(di * dout, di * dout);
        for k in &self.operators {
            // vec_k[(a, c)] = K[c, a]
            let v: Vec<C64> = (0..di * dout).map(|idx| k[(idx % dout, idx / dout)]).collect();
            for r in 0..di * dout {
                if v[r] == ZERO {
                    continue;
                }
                for s in 0..di * dout {
                    j[(r, s)] += v[r] * v[s].conj();
                }
            }
        }
        Choi { d_in: di, d_out: dout, matrix: j }
    }
}

/// Unnormalized Choi operator, input factor first, `Tr J = d_in` for TP maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choi {
    pub d_in: usize,
    pub d_out: usize,
    #[serde(with = "io::cmat")]
    pub matrix: CMat,
}

impl Choi {
    pub fn new(d_in: usize, d_out: usize, matrix: CMat) -> Result<Self> {
        if matrix.shape() != (d_in * d_out, d_in * d_out) {
            return Err(Error::Dimension(format!(
                "Choi matrix must be {0}x{0}, got {1:?}",
                d_in * d_out,
                matrix.shape()
            )));
        }
        Ok(Self { d_in, d_out, matrix })
    }

    #[inline]
    fn idx(&self, a: usize, c: usize) -> usize {
        a * self.d_out + c
    }

    /// `φ(X)` for any `d_in × d_in` operator `X`.
    pub fn apply(&self, x: &CMat) -> Result<CMat> {
        check_input(x, self.d_in)?;
        let (di, dout) = (self.d_in, self.d_out);
        let mut out = CMat::zeros(dout, dout);
        for a in 0..di {
            for b in 0..di {
                let xab = x[(a, b)];
                if xab == ZERO {
                    continue;
                }
                for cc in 0..dout {
                    let r = self.idx(a, cc);
                    for e in 0..dout {
                        out[(cc, e)] += xab * self.matrix[(r, self.idx(b, e))];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `Tr_out J`, equal to `I_{d_in}` exactly when the map is trace preserving.
    pub fn partial_trace_out(&self) -> CMat {
        CMat::from_fn(self.d_in, self.d_in, |a, b| {
            (0..self.d_out).map(|cc| self.matrix[(self.idx(a, cc), self.idx(b, cc))]).sum()
        })
    }

    pub fn purity(&self) -> f64 {
        frobenius_sq(&self.matrix)
    }

    /// Kraus operators from the eigendecomposition of a PSD Choi matrix.
    pub fn to_kraus(&self) -> Result<KrausSet> {
        let (vals, vecs) = eigh(&self.matrix);
        if vals[0] < -PSD_TOL {
            return Err(Error::Channel(format!(
                "Choi matrix has negative eigenvalue {:.3e}; no Kraus form",
                vals[0]
            )));
        }
        let (di, dout) = (self.d_in, self.d_out);
        let mut ops = Vec::new();
        for (k, &lam) in vals.iter().enumerate().rev() {
            if lam <= PSD_TOL {
                continue;
            }
            let s = lam.sqrt();
            ops.push(CMat::from_fn(dout, di, |cc, a| vecs[(a * dout + cc, k)] * s));
        }
        if ops.is_empty() {
            return Err(Error::Channel("Choi matrix is zero".into()));
        }
        KrausSet::new(ops)
    }

    pub fn to_pm(&self) -> Result<ProcessMatrix> {
        if self.d_in != self.d_out {
            return Err(Error::Representation(format!(
                "process matrix requires d_in = d_out, got {} -> {}",
                self.d_in, self.d_out
            )));
        }
        let d = self.d_in;
        let n = qubits_for_dim(d)?;
        let paulis = pauli_strings(n);
        let m = paulis.len();
        // w_B[a] = J v_B restricted to its nonzero pattern is dense, so build J v_B once per B.
        let mut chi = CMat::zeros(m, m);
        let scale = 1.0 / (d * d) as f64;
        let jv: Vec<Vec<C64>> = paulis.iter().map(|pb| self.mul_vec_pauli(pb)).collect();
        for (ai, pa) in paulis.iter().enumerate() {
            for (bi, jvb) in jv.iter().enumerate() {
                let mut acc = ZERO;
                for a in 0..d {
                    let (cc, v) = pa.entry_for_col(a);
                    acc += v.conj() * jvb[a * d + cc];
                }
                chi[(ai, bi)] = acc * scale;
            }
        }
        Ok(ProcessMatrix { n, chi })
    }

    /// `J v_P` with `v_P[(a, c)] = P[c, a]`.
    fn mul_vec_pauli(&self, p: &PauliString) -> Vec<C64> {
        let dim = self.d_in * self.d_out;
        let mut out = vec![ZERO; dim];
        for b in 0..self.d_in {
            let (e, v) = p.entry_for_col(b);
            let col = self.idx(b, e);
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.matrix[(r, col)] * v;
            }
        }
        out
    }

    pub fn to_ptm(&self) -> Result<TransferMatrix> {
        let n_in = qubits_for_dim(self.d_in)?;
        let n_out = qubits_for_dim(self.d_out)?;
        let pin = pauli_strings(n_in);
        let pout = pauli_strings(n_out);
        let norm = 1.0 / ((self.d_in * self.d_out) as f64).sqrt();
        let mut r = CMat::zeros(pout.len(), pin.len());
        for (bi, pb) in pin.iter().enumerate() {
            let img = self.apply(&pb.to_dense())?;
            for (ai, pa) in pout.iter().enumerate() {
                r[(ai, bi)] = pa.trace_with(&img) * norm;
            }
        }
        Ok(TransferMatrix { d_in: self.d_in, d_out: self.d_out, r })
    }
}

/// `χ` with `φ(ρ) = Σ_{A,B} χ(A,B) σ_A ρ σ_B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessMatrix {
    pub n: usize,
    #[serde(with = "io::cmat")]
    pub chi: CMat,
}

impl ProcessMatrix {
    pub fn new(n: usize, chi: CMat) -> Result<Self> {
        let m = 1usize << (2 * n);
        if chi.shape() != (m, m) {
            return Err(Error::Dimension(format!("process matrix must be {m}x{m}")));
        }
        Ok(Self { n, chi })
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn to_choi(&self) -> Choi {
        let d = self.dim();
        let paulis = pauli_strings(self.n);
        let mut j = CMat::zeros(d * d, d * d);
        for (ai, pa) in paulis.iter().enumerate() {
            for (bi, pb) in paulis.iter().enumerate() {
                let x = self.chi[(ai, bi)];
                if x == ZERO {
                    continue;
                }
                for a in 0..d {
                    let (cc, va) = pa.entry_for_col(a);
                    let left = x * va;
                    for b in 0..d {
                        let (e, vb) = pb.entry_for_col(b);
                        j[(a * d + cc, b * d + e)] += left * vb.conj();
                    }
                }
            }
        }
        Choi { d_in: d, d_out: d, matrix: j }
    }

    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        let d = self.dim();
        check_input(rho, d)?;
        let paulis = pauli_strings(self.n);
        let mut out = CMat::zeros(d, d);
        let left: Vec<CMat> = paulis.iter().map(|p| p.left_mul(rho)).collect();
        for (ai, la) in left.iter().enumerate() {
            for (bi, pb) in paulis.iter().enumerate() {
                let x = self.chi[(ai, bi)];
                if x == ZERO {
                    continue;
                }
                for col in 0..d {
                    let (row, v) = pb.entry_for_col(col);
                    let f = x * v;
                    for i in 0..d {
                        out[(i, col)] += la[(i, row)] * f;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `R(A,B) = Tr(σ_A φ(σ_B)) / √(d_in d_out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub d_in: usize,
    pub d_out: usize,
    #[serde(with = "io::cmat")]
    pub r: CMat,
}

impl TransferMatrix {
    pub fn new(d_in: usize, d_out: usize, r: CMat) -> Result<Self> {
        if r.shape() != (d_out * d_out, d_in * d_in) {
            return Err(Error::Dimension(format!(
                "transfer matrix must be {}x{}",
                d_out * d_out,
                d_in * d_in
            )));
        }
        Ok(Self { d_in, d_out, r })
    }

    fn norm(&self) -> f64 {
        1.0 / ((self.d_in * self.d_out) as f64).sqrt()
    }

    pub fn to_choi(&self) -> Result<Choi> {
        let pin = pauli_strings(qubits_for_dim(self.d_in)?);
        let pout = pauli_strings(qubits_for_dim(self.d_out)?);
        let (di, dout) = (self.d_in, self.d_out);
        let mut j = CMat::zeros(di * dout, di * dout);
        let s = self.norm();
        for (bi, pb) in pin.iter().enumerate() {
            // (σ_B)_{b a} is nonzero only for b = a ^ x_B.
            for a in 0..di {
                let (b, vb) = pb.entry_for_col(a);
                for (ai, pa) in pout.iter().enumerate() {
                    let x = self.r[(ai, bi)];
                    if x == ZERO {
                        continue;
                    }
                    let f = x * vb * s;
                    for e in 0..dout {
                        let (cc, va) = pa.entry_for_col(e);
                        j[(a * dout + cc, b * dout + e)] += f * va;
                    }
                }
            }
        }
        Ok(Choi { d_in: di, d_out: dout, matrix: j })
    }

    /// Pauli coefficients `Tr(σ_B ρ)` of an input operator.
    pub fn input_coefficients(&self, rho: &CMat) -> Result<Vec<C64>> {
        check_input(rho, self.d_in)?;
        Ok(pauli_strings(qubits_for_dim(self.d_in)?).iter().map(|p| p.trace_with(rho)).collect())
    }

    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        let coeff = self.input_coefficients(rho)?;
        let pout = pauli_strings(qubits_for_dim(self.d_out)?);
        let s = self.norm();
        let mut out = CMat::zeros(self.d_out, self.d_out);
        for (ai, pa) in pout.iter().enumerate() {
            let mut y = ZERO;
            for (bi, cb) in coeff.iter().enumerate() {
                y += self.r[(ai, bi)] * cb;
            }
            if y == ZERO {
                continue;
            }
            for col in 0..self.d_out {
                let (row, v) = pa.entry_for_col(col);
                out[(row, col)] += y * v * s;
            }
        }
        Ok(out)
    }

    /// True when the map sends `I/d_in` to `I/d_out`.
    pub fn is_unital(&self, tol: f64) -> bool {
        let expected = (self.d_out as f64 / self.d_in as f64).sqrt();
        (self.r[(0, 0)] - c(expected, 0.0)).norm() <= tol
            && (1..self.r.nrows()).all(|a| self.r[(a, 0)].norm() <= tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelRep {
    Kraus(KrausSet),
    Choi(Choi),
    Pm(ProcessMatrix),
    Ptm(TransferMatrix),
}

impl ChannelRep {
    pub fn d_in(&self) -> usize {
        match self {
            ChannelRep::Kraus(k) => k.d_in,
            ChannelRep::Choi(j) => j.d_in,
            ChannelRep::Pm(p) => p.dim(),
            ChannelRep::Ptm(r) => r.d_in,
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            ChannelRep::Kraus(k) => k.d_out,
            ChannelRep::Choi(j) => j.d_out,
            ChannelRep::Pm(p) => p.dim(),
            ChannelRep::Ptm(r) => r.d_out,
        }
    }

    pub fn to_choi(&self) -> Result<Choi> {
        match self {
            ChannelRep::Kraus(k) => Ok(k.to_choi()),
            ChannelRep::Choi(j) => Ok(j.clone()),
            ChannelRep::Pm(p) => Ok(p.to_choi()),
            ChannelRep::Ptm(r) => r.to_choi(),
        }
    }

    pub fn to_pm(&self) -> Result<ProcessMatrix> {
        match self {
            ChannelRep::Pm(p) => Ok(p.clone()),
            other => other.to_choi()?.to_pm(),
        }
    }

    pub fn to_ptm(&self) -> Result<TransferMatrix> {
        match self {
            ChannelRep::Ptm(r) => Ok(r.clone()),
            other => other.to_choi()?.to_ptm(),
        }
    }

    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        match self {
            ChannelRep::Kraus(k) => k.apply(rho),
            ChannelRep::Choi(j) => j.apply(rho),
            ChannelRep::Pm(p) => p.apply(rho),
            ChannelRep::Ptm(r) => r.apply(rho),
        }
    }
}

impl From<KrausSet> for ChannelRep {
    fn from(k: KrausSet) -> Self {
        ChannelRep::Kraus(k)
    }
}

impl From<Choi> for ChannelRep {
    fn from(j: Choi) -> Self {
        ChannelRep::Choi(j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptpReport {
    pub is_cp: bool,
    pub is_tp: bool,
    pub min_choi_eigenvalue: f64,
    pub tp_residual: f64,
}

pub fn validate_cptp(rep: &ChannelRep) -> Result<CptpReport> {
    let j = rep.to_choi()?;
    let min_eig = eigh(&j.matrix).0[0];
    let residual = (j.partial_trace_out() - identity(j.d_in)).norm();
    Ok(CptpReport {
        is_cp: min_eig >= -PSD_TOL,
        is_tp: residual <= TOL,
        min_choi_eigenvalue: min_eig,
        tp_residual: residual,
    })
}

/// Apply layers in order, checking that dimensions chain.
pub fn compose(layers: &[ChannelRep], rho0: &CMat) -> Result<CMat> {
    let mut rho = rho0.clone();
    for (j, layer) in layers.iter().enumerate() {
        if rho.nrows() != layer.d_in() {
            return Err(Error::Dimension(format!(
                "layer {j} expects dimension {}, got {}",
                layer.d_in(),
                rho.nrows()
            )));
        }
        rho = layer.apply(&rho)?;
    }
    Ok(rho)
}

/// Validate a density matrix: Hermitian, unit trace, PSD within tolerance.
pub fn check_density(rho: &CMat) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::Dimension("density matrix must be square".into()));
    }
    if !crate::linalg::is_hermitian(rho, TOL) {
        return Err(Error::Channel("density matrix is not Hermitian".into()));
    }
    let t = trace(rho);
    if (t - c(1.0, 0.0)).norm() > 1e-9 {
        return Err(Error::Channel(format!("density matrix trace {t} != 1")));
    }
    if eigh(rho).0[0] < -PSD_TOL {
        return Err(Error::Channel("density matrix is not PSD".into()));
    }
    Ok(())
}

fn check_input(x: &CMat, d: usize) -> Result<()> {
    if x.shape() != (d, d) {
        return Err(Error::Dimension(format!("expected {d}x{d} input, got {:?}", x.shape())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::random::random_channel;
    use crate::linalg::{approx_eq, kron, random_density};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn omega_projector(d: usize) -> CMat {
        let mut v = CMat::zeros(d * d, 1);
        for a in 0..d {
            v[(a * d + a, 0)] = c(1.0, 0.0);
        }
        &v * v.adjoint()
    }

    #[test]
    fn identity_choi_is_scaled_bell_projector() {
        let j = KrausSet::identity(2).to_choi();
        assert!(approx_eq(&j.matrix, &omega_projector(2), 1e-15));
        assert!((trace(&j.matrix).re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn depolarizing_choi_is_maximally_mixed() {
        let j = KrausSet::depolarizing(1).to_choi();
        assert!(approx_eq(&j.matrix, &identity(4).scale(0.5), 1e-15));
    }

    #[test]
    fn random_two_kraus_channel_has_psd_choi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let k = random_channel(&mut rng, 2, 2, 2);
            let j = k.to_choi();
            assert!(eigh(&j.matrix).0[0] > -1e-12);
            assert!((trace(&j.matrix).re - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pm_of_identity_and_depolarizing() {
        let chi = KrausSet::identity(2).to_choi().to_pm().unwrap().chi;
        let mut e00 = CMat::zeros(4, 4);
        e00[(0, 0)] = c(1.0, 0.0);
        assert!(approx_eq(&chi, &e00, 1e-15));
        let chi = KrausSet::depolarizing(1).to_choi().to_pm().unwrap().chi;
        assert!(approx_eq(&chi, &identity(4).scale(0.25), 1e-15));
    }

    #[test]
    fn pm_purity_matches_choi_purity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in 1..=2 {
            let d = 1 << n;
            let j = random_channel(&mut rng, d, d, 3).to_choi();
            let chi = j.to_pm().unwrap().chi;
            let lhs = frobenius_sq(&chi) * (d * d) as f64;
            assert!((lhs - j.purity()).abs() < 1e-10);
            assert!((trace(&chi) - c(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn ptm_of_identity_and_depolarizing() {
        let r = KrausSet::identity(2).to_choi().to_ptm().unwrap().r;
        assert!(approx_eq(&r, &identity(4), 1e-15));
        let r = KrausSet::depolarizing(1).to_choi().to_ptm().unwrap().r;
        let mut e00 = CMat::zeros(4, 4);
        e00[(0, 0)] = c(1.0, 0.0);
        assert!(approx_eq(&r, &e00, 1e-15));
    }

    #[test]
    fn rectangular_ptm_round_trip_and_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let k = random_channel(&mut rng, 4, 2, 3);
        let j = k.to_choi();
        let r = j.to_ptm().unwrap();
        assert_eq!(r.r.shape(), (4, 16));
        assert!((frobenius_sq(&r.r) - j.purity()).abs() < 1e-10);
        let back = r.to_choi().unwrap();
        assert!(approx_eq(&back.matrix, &j.matrix, 1e-10));
        assert!(j.to_pm().is_err());
    }

    #[test]
    fn applications_agree_with_kraus() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let k = random_channel(&mut rng, 4, 4, 2);
        let rho = random_density(&mut rng, 4);
        let direct = k.apply(&rho).unwrap();
        let j = k.to_choi();
        assert!(approx_eq(&j.apply(&rho).unwrap(), &direct, 1e-12));
        assert!(approx_eq(&j.to_pm().unwrap().apply(&rho).unwrap(), &direct, 1e-12));
        assert!(approx_eq(&j.to_ptm().unwrap().apply(&rho).unwrap(), &direct, 1e-12));
    }

    #[test]
    fn kraus_recovered_from_choi() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let k = random_channel(&mut rng, 2, 4, 2);
        let j = k.to_choi();
        let k2 = j.to_kraus().unwrap();
        assert!(k2.is_trace_preserving(1e-10));
        assert!(approx_eq(&k2.to_choi().matrix, &j.matrix, 1e-10));
    }

    #[test]
    fn validate_cptp_flags() {
        let rep: ChannelRep = KrausSet::identity(2).into();
        let r = validate_cptp(&rep).unwrap();
        assert!(r.is_cp && r.is_tp);

        let chi = CMat::from_diagonal(&crate::linalg::CVec::from_vec(vec![
            c(1.2, 0.0),
            c(-0.2, 0.0),
            ZERO,
            ZERO,
        ]));
        let r = validate_cptp(&ChannelRep::Pm(ProcessMatrix::new(1, chi).unwrap())).unwrap();
        assert!(!r.is_cp);

        // Transpose map: its Choi is the swap operator, eigenvalue -1.
        let swap = CMat::from_fn(4, 4, |r, s| {
            let (a, cc) = (r / 2, r % 2);
            let (b, e) = (s / 2, s % 2);
            if a == e && cc == b { c(1.0, 0.0) } else { ZERO }
        });
        let r = validate_cptp(&ChannelRep::Choi(Choi::new(2, 2, swap).unwrap())).unwrap();
        assert!(!r.is_cp);
        assert!(r.is_tp);
        assert!((r.min_choi_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn compose_chains_and_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let rho = random_density(&mut rng, 2);
        let id: ChannelRep = KrausSet::identity(2).into();
        assert!(approx_eq(&compose(&[id.clone(), id.clone()], &rho).unwrap(), &rho, 1e-15));
        let any: ChannelRep = random_channel(&mut rng, 2, 2, 3).into();
        let dep: ChannelRep = KrausSet::depolarizing(1).into();
        let out = compose(&[any, dep], &rho).unwrap();
        assert!(approx_eq(&out, &identity(2).scale(0.5), 1e-14));
        let wide: ChannelRep = KrausSet::identity(4).into();
        assert!(compose(&[id, wide], &rho).is_err());
    }

    #[test]
    fn three_layer_stack_matches_collapsed_kraus() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ks: Vec<KrausSet> = (0..3).map(|_| random_channel(&mut rng, 2, 2, 2)).collect();
        let rho = random_density(&mut rng, 2);
        let reps: Vec<ChannelRep> = ks.iter().cloned().map(Into::into).collect();
        let collapsed = ks[0].then(&ks[1]).unwrap().then(&ks[2]).unwrap();
        assert_eq!(collapsed.operators.len(), 8);
        assert!(approx_eq(&compose(&reps, &rho).unwrap(), &collapsed.apply(&rho).unwrap(), 1e-12));
    }

    #[test]
    fn product_channel_choi_has_product_purity() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let a = random_channel(&mut rng, 2, 2, 2);
        let b = random_channel(&mut rng, 2, 2, 3);
        let mut ops = Vec::new();
        for ka in &a.operators {
            for kb in &b.operators {
                ops.push(kron(ka, kb));
            }
        }
        let ab = KrausSet::new(ops).unwrap();
        let lhs = ab.to_choi().purity();
        assert!((lhs - a.to_choi().purity() * b.to_choi().purity()).abs() < 1e-10);
    }
}
