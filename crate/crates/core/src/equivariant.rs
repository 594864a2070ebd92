//! Finite-group symmetry: projectors, isotypic decomposition, and equivariant
//! Choi operators assembled block by block.
//!
//! A channel is equivariant when `φ(R_in(g) ρ R_in(g)†) = R_out(g) φ(ρ) R_out(g)†`.
//! In Choi form this means `J` commutes with `conj(R_in(g)) ⊗ R_out(g)`, so by
//! Schur's lemma it is `⊕_λ I_{d_λ} ⊗ B_λ` in an aligned basis.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::Choi;
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{c, eigh, frobenius_sq, identity, kron, max_abs_diff, CMat, CVec, PSD_TOL, TOL};
use crate::norms;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteGroup {
    pub name: String,
    pub order: usize,
    pub elements: Vec<String>,
    pub multiplication: Vec<Vec<usize>>,
    #[serde(skip)]
    pub inverse: Vec<usize>,
    #[serde(skip)]
    pub identity: usize,
}

impl FiniteGroup {
    pub fn new(name: String, elements: Vec<String>, multiplication: Vec<Vec<usize>>) -> Result<Self> {
        let order = elements.len();
        let bad = |m: &str| Error::Representation(format!("group '{name}': {m}"));
        if order == 0 || multiplication.len() != order || multiplication.iter().any(|r| r.len() != order) {
            return Err(bad("multiplication table has the wrong shape"));
        }
        for row in &multiplication {
            let mut seen = vec![false; order];
            for &x in row {
                if x >= order || std::mem::replace(&mut seen[x], true) {
                    return Err(bad("table is not a Latin square"));
                }
            }
        }
        for col in 0..order {
            let mut seen = vec![false; order];
            for row in &multiplication {
                if std::mem::replace(&mut seen[row[col]], true) {
                    return Err(bad("table is not a Latin square"));
                }
            }
        }
        let identity = (0..order)
            .find(|&e| (0..order).all(|g| multiplication[e][g] == g && multiplication[g][e] == g))
            .ok_or_else(|| bad("no identity element"))?;
        if order <= 24 {
            for a in 0..order {
                for b in 0..order {
                    for cc in 0..order {
                        let ab = multiplication[a][b];
                        let bc = multiplication[b][cc];
                        if multiplication[ab][cc] != multiplication[a][bc] {
                            return Err(bad("multiplication is not associative"));
                        }
                    }
                }
            }
        }
        let inverse = (0..order)
            .map(|g| (0..order).find(|&h| multiplication[g][h] == identity).expect("Latin square"))
            .collect();
        Ok(Self { name, order, elements, multiplication, inverse, identity })
    }

    pub fn mul(&self, g: usize, h: usize) -> usize {
        self.multiplication[g][h]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Irrep {
    pub label: String,
    pub dim: usize,
    #[serde(with = "io::cmat_vec")]
    pub matrices: Vec<CMat>,
}

impl Irrep {
    pub fn character(&self) -> Vec<crate::linalg::C64> {
        self.matrices.iter().map(crate::linalg::trace).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrrepTable {
    pub irreps: Vec<Irrep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitaryRep {
    pub label: String,
    pub dim: usize,
    #[serde(with = "io::cmat_vec")]
    pub matrices: Vec<CMat>,
}

impl UnitaryRep {
    pub fn new(label: impl Into<String>, matrices: Vec<CMat>) -> Result<Self> {
        let dim = matrices.first().map_or(0, |m| m.nrows());
        if dim == 0 || matrices.iter().any(|m| m.shape() != (dim, dim)) {
            return Err(Error::Dimension("representation matrices must share one square shape".into()));
        }
        Ok(Self { label: label.into(), dim, matrices })
    }

    /// Largest violation of unitarity, `R(e) = I`, and `R(g)R(h) = R(gh)`.
    pub fn homomorphism_error(&self, group: &FiniteGroup) -> f64 {
        if self.matrices.len() != group.order {
            return f64::INFINITY;
        }
        let id = identity(self.dim);
        let mut err = max_abs_diff(&self.matrices[group.identity], &id);
        for g in 0..group.order {
            err = err.max(max_abs_diff(&(self.matrices[g].adjoint() * &self.matrices[g]), &id));
            for h in 0..group.order {
                let lhs = &self.matrices[g] * &self.matrices[h];
                err = err.max(max_abs_diff(&lhs, &self.matrices[group.mul(g, h)]));
            }
        }
        err
    }

    pub fn validate(&self, group: &FiniteGroup) -> Result<()> {
        let err = self.homomorphism_error(group);
        if err > 1e-9 {
            return Err(Error::Representation(format!(
                "'{}' is not a unitary representation of {} (error {err:.2e})",
                self.label, group.name
            )));
        }
        Ok(())
    }

    /// `conj(R_in(g)) ⊗ R_out(g)`, the action commuting with equivariant Choi operators.
    pub fn choi_action(r_in: &UnitaryRep, r_out: &UnitaryRep) -> Result<UnitaryRep> {
        if r_in.matrices.len() != r_out.matrices.len() {
            return Err(Error::Representation("input and output reps of different groups".into()));
        }
        let ms = r_in
            .matrices
            .iter()
            .zip(&r_out.matrices)
            .map(|(a, b)| kron(&a.conjugate(), b))
            .collect();
        UnitaryRep::new(format!("conj({})⊗{}", r_in.label, r_out.label), ms)
    }

    /// The regular representation `R(g) e_h = e_{gh}`.
    pub fn regular(group: &FiniteGroup) -> Self {
        let n = group.order;
        let ms = (0..n)
            .map(|g| {
                let mut m = CMat::zeros(n, n);
                for h in 0..n {
                    m[(group.mul(g, h), h)] = c(1.0, 0.0);
                }
                m
            })
            .collect();
        UnitaryRep { label: "regular".into(), dim: n, matrices: ms }
    }
}

/// A group, its irreps, and named qubit representations loaded from one file.
#[derive(Debug, Clone)]
pub struct GroupFixture {
    pub group: FiniteGroup,
    pub irreps: IrrepTable,
    pub reps: Vec<UnitaryRep>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    name: String,
    #[allow(dead_code)]
    order: usize,
    elements: Vec<String>,
    multiplication: Vec<Vec<usize>>,
    irreps: Vec<Irrep>,
    #[serde(default)]
    representations: Vec<RepFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RepFile {
    label: String,
    #[allow(dead_code)]
    qubits: usize,
    #[serde(with = "io::cmat_vec")]
    matrices: Vec<CMat>,
}

impl GroupFixture {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: FixtureFile = serde_json::from_str(text)?;
        let group = FiniteGroup::new(f.name, f.elements, f.multiplication)?;
        let irreps = IrrepTable { irreps: f.irreps };
        validate_irreps(&group, &irreps)?;
        let reps = f
            .representations
            .into_iter()
            .map(|r| {
                let rep = UnitaryRep::new(r.label, r.matrices)?;
                rep.validate(&group)?;
                Ok(rep)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { group, irreps, reps })
    }

    /// Built-in fixtures: `trivial`, `z2`, `z3`, `z4`, `s3`.
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name.to_ascii_lowercase().as_str() {
            "trivial" => include_str!("../data/groups/trivial.json"),
            "z2" => include_str!("../data/groups/z2.json"),
            "z3" => include_str!("../data/groups/z3.json"),
            "z4" => include_str!("../data/groups/z4.json"),
            "s3" => include_str!("../data/groups/s3.json"),
            other => return Err(Error::Representation(format!("unknown group fixture '{other}'"))),
        };
        Self::from_json(text)
    }

    pub fn rep(&self, label: &str) -> Result<&UnitaryRep> {
        self.reps
            .iter()
            .find(|r| r.label == label)
            .ok_or_else(|| Error::Representation(format!("no representation '{label}'")))
    }

    pub fn d_max(&self) -> usize {
        self.irreps.irreps.iter().map(|i| i.dim).max().unwrap_or(1)
    }
}

/// Checks `Σ d_λ² = |G|`, homomorphism, and character orthonormality.
pub fn validate_irreps(group: &FiniteGroup, table: &IrrepTable) -> Result<()> {
    let sum_sq: usize = table.irreps.iter().map(|i| i.dim * i.dim).sum();
    if sum_sq != group.order {
        return Err(Error::Representation(format!(
            "irrep dimensions give Σd² = {sum_sq}, group order is {}",
            group.order
        )));
    }
    for irrep in &table.irreps {
        UnitaryRep::new(irrep.label.clone(), irrep.matrices.clone())?.validate(group)?;
        if irrep.matrices[0].nrows() != irrep.dim {
            return Err(Error::Representation(format!("irrep '{}' has wrong dimension", irrep.label)));
        }
    }
    let chars: Vec<_> = table.irreps.iter().map(Irrep::character).collect();
    for (a, ca) in chars.iter().enumerate() {
        for (b, cb) in chars.iter().enumerate() {
            let ip: crate::linalg::C64 =
                ca.iter().zip(cb).map(|(x, y)| x.conj() * y).sum::<crate::linalg::C64>() / group.order as f64;
            let expected = if a == b { 1.0 } else { 0.0 };
            if (ip - c(expected, 0.0)).norm() > 1e-9 {
                return Err(Error::Representation("characters are not orthonormal".into()));
            }
        }
    }
    Ok(())
}

/// `P^λ_{ij} = (d_λ/|G|) Σ_g conj(D_λ(g)_{ij}) R(g)`.
fn generalized_projector(rep: &UnitaryRep, irrep: &Irrep, i: usize, j: usize) -> CMat {
    let scale = irrep.dim as f64 / rep.matrices.len() as f64;
    rep.matrices
        .iter()
        .zip(&irrep.matrices)
        .fold(CMat::zeros(rep.dim, rep.dim), |acc, (r, d)| acc + r * d[(i, j)].conj())
        .scale(scale)
}

/// Isotypic projector `P_λ = (d_λ/|G|) Σ_g conj(χ_λ(g)) R(g)`.
pub fn character_projector(rep: &UnitaryRep, irrep: &Irrep) -> Result<CMat> {
    if rep.matrices.len() != irrep.matrices.len() {
        return Err(Error::Representation("rep and irrep belong to different groups".into()));
    }
    Ok((0..irrep.dim).fold(CMat::zeros(rep.dim, rep.dim), |acc, i| {
        acc + generalized_projector(rep, irrep, i, i)
    }))
}

pub fn projector_rank(p: &CMat) -> usize {
    crate::linalg::trace(p).re.round() as usize
}

#[derive(Debug, Clone)]
pub struct IsotypicDecomposition {
    pub labels: Vec<String>,
    pub irrep_dims: Vec<usize>,
    pub multiplicities: Vec<usize>,
    /// Unitary whose columns are ordered by irrep, then irrep row, then multiplicity.
    pub basis: CMat,
    pub group_order: usize,
}

impl IsotypicDecomposition {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Column offset of irrep block `λ`.
    pub fn offset(&self, lam: usize) -> usize {
        (0..lam).map(|l| self.irrep_dims[l] * self.multiplicities[l]).sum()
    }

    pub fn param_count(&self) -> usize {
        eq_param_count(self)
    }

    /// Present irreps only (multiplicity > 0).
    pub fn present(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&l| self.multiplicities[l] > 0).collect()
    }

    /// Block-diagonal assembly `Q (⊕_λ I_{d_λ} ⊗ B_λ) Q†`.
    pub fn assemble(&self, blocks: &[CMat]) -> Result<CMat> {
        if blocks.len() != self.labels.len() {
            return Err(Error::Dimension(format!(
                "expected {} blocks, got {}",
                self.labels.len(),
                blocks.len()
            )));
        }
        let dim = self.dim();
        let mut inner = CMat::zeros(dim, dim);
        for (lam, b) in blocks.iter().enumerate() {
            let m = self.multiplicities[lam];
            if b.shape() != (m, m) {
                return Err(Error::Dimension(format!(
                    "block {lam} must be {m}x{m}, got {:?}",
                    b.shape()
                )));
            }
            let off = self.offset(lam);
            for i in 0..self.irrep_dims[lam] {
                let base = off + i * m;
                inner.view_mut((base, base), (m, m)).copy_from(b);
            }
        }
        Ok(&self.basis * inner * self.basis.adjoint())
    }

    /// Blocks `B_λ` of an operator, averaged over the `d_λ` copies, plus the
    /// Frobenius mass outside the block pattern.
    pub fn extract_blocks(&self, op: &CMat) -> (Vec<CMat>, f64) {
        let rotated = self.basis.adjoint() * op * &self.basis;
        let mut pattern = CMat::zeros(self.dim(), self.dim());
        let mut blocks = Vec::with_capacity(self.labels.len());
        for lam in 0..self.labels.len() {
            let m = self.multiplicities[lam];
            let d = self.irrep_dims[lam];
            let off = self.offset(lam);
            let mut acc = CMat::zeros(m, m);
            for i in 0..d {
                let base = off + i * m;
                acc += rotated.view((base, base), (m, m));
            }
            let b = if d > 0 { acc.scale(1.0 / d as f64) } else { acc };
            for i in 0..d {
                let base = off + i * m;
                pattern.view_mut((base, base), (m, m)).copy_from(&b);
            }
            blocks.push(b);
        }
        let off_block = frobenius_sq(&(rotated - pattern)).sqrt();
        (blocks, off_block)
    }
}

pub fn isotypic_decompose(rep: &UnitaryRep, table: &IrrepTable, group: &FiniteGroup) -> Result<IsotypicDecomposition> {
    rep.validate(group)?;
    let dim = rep.dim;
    let mut columns: Vec<CVec> = Vec::with_capacity(dim);
    let mut labels = Vec::new();
    let mut dims = Vec::new();
    let mut mults = Vec::new();
    for irrep in &table.irreps {
        let p = character_projector(rep, irrep)?;
        let tr = crate::linalg::trace(&p).re;
        let rank = tr.round();
        if (tr - rank).abs() > 1e-6 || rank as usize % irrep.dim != 0 {
            return Err(Error::Representation(format!(
                "non-integer multiplicity for irrep '{}' (rank {tr:.6})",
                irrep.label
            )));
        }
        let m = rank as usize / irrep.dim;
        let p00 = generalized_projector(rep, irrep, 0, 0);
        let seeds = orthonormal_range(&p00, m)?;
        for i in 0..irrep.dim {
            let pi0 = generalized_projector(rep, irrep, i, 0);
            for w in &seeds {
                columns.push(&pi0 * w);
            }
        }
        labels.push(irrep.label.clone());
        dims.push(irrep.dim);
        mults.push(m);
    }
    let total: usize = dims.iter().zip(&mults).map(|(d, m)| d * m).sum();
    if total != dim {
        return Err(Error::Representation(format!(
            "Σ d_λ m_λ = {total} does not match representation dimension {dim}"
        )));
    }
    let basis = CMat::from_columns(&columns);
    let unitarity = max_abs_diff(&(basis.adjoint() * &basis), &identity(dim));
    if unitarity > 1e-8 {
        return Err(Error::Representation(format!("aligned basis is not unitary ({unitarity:.2e})")));
    }
    Ok(IsotypicDecomposition { labels, irrep_dims: dims, multiplicities: mults, basis, group_order: group.order })
}

/// Orthonormal basis of the range of projector `p`, by Gram–Schmidt on
/// `p e_k` over canonical vectors in index order.
fn orthonormal_range(p: &CMat, rank: usize) -> Result<Vec<CVec>> {
    let mut out: Vec<CVec> = Vec::with_capacity(rank);
    for k in 0..p.ncols() {
        if out.len() == rank {
            break;
        }
        let mut v: CVec = p.column(k).into_owned();
        for _ in 0..2 {
            for u in &out {
                let ip = u.dotc(&v);
                v -= u * ip;
            }
        }
        let nrm = v.norm();
        if nrm > 1e-8 {
            out.push(v / c(nrm, 0.0));
        }
    }
    if out.len() != rank {
        return Err(Error::Representation("projector range has unexpected dimension".into()));
    }
    Ok(out)
}

pub fn eq_param_count(decomp: &IsotypicDecomposition) -> usize {
    decomp.multiplicities.iter().map(|m| m * m).sum()
}

/// Per-irrep weight blocks `W_λ` (Hermitian, `m_λ × m_λ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqChannelParams {
    #[serde(with = "io::cmat_vec")]
    pub blocks: Vec<CMat>,
    pub d_in: usize,
    pub d_out: usize,
}

impl EqChannelParams {
    pub fn zeros(decomp: &IsotypicDecomposition, d_in: usize, d_out: usize) -> Self {
        Self {
            blocks: decomp.multiplicities.iter().map(|&m| CMat::zeros(m, m)).collect(),
            d_in,
            d_out,
        }
    }

    pub fn eq_norm_1(&self, decomp: &IsotypicDecomposition) -> Result<f64> {
        norms::eq_norm_1(&self.blocks, &decomp.irrep_dims)
    }

    pub fn eq_norm_f2(&self, decomp: &IsotypicDecomposition) -> Result<f64> {
        norms::eq_norm_f2(&self.blocks, &decomp.irrep_dims)
    }
}

/// Choi operator `Q (⊕_λ I_{d_λ} ⊗ (I_{m_λ}/d_out + W_λ)) Q†`.
pub fn build_equivariant_choi(decomp: &IsotypicDecomposition, params: &EqChannelParams, strict: bool) -> Result<Choi> {
    let (d_in, d_out) = (params.d_in, params.d_out);
    if decomp.dim() != d_in * d_out {
        return Err(Error::Dimension(format!(
            "decomposition has dimension {}, channel needs {}",
            decomp.dim(),
            d_in * d_out
        )));
    }
    let baseline_trace: f64 = decomp
        .irrep_dims
        .iter()
        .zip(&decomp.multiplicities)
        .map(|(&d, &m)| (d * m) as f64 / d_out as f64)
        .sum();
    if (baseline_trace - d_in as f64).abs() > TOL {
        return Err(Error::Representation("baseline blocks do not give a trace-d_in Choi".into()));
    }
    let blocks: Vec<CMat> = params
        .blocks
        .iter()
        .zip(&decomp.multiplicities)
        .map(|(w, &m)| identity(m).scale(1.0 / d_out as f64) + w)
        .collect();
    let j = decomp.assemble(&blocks)?;
    if strict {
        let min = eigh(&j).0[0];
        if min < -PSD_TOL {
            return Err(Error::Channel(format!("assembled Choi is not PSD (min eigenvalue {min:.3e})")));
        }
    }
    Choi::new(d_in, d_out, j)
}

/// Weight blocks of an equivariant Choi operator, with its off-block mass.
pub fn choi_to_eq_params(decomp: &IsotypicDecomposition, j: &Choi) -> (EqChannelParams, f64) {
    let (blocks, off) = decomp.extract_blocks(&j.matrix);
    let blocks = blocks
        .into_iter()
        .zip(&decomp.multiplicities)
        .map(|(b, &m)| b - identity(m).scale(1.0 / j.d_out as f64))
        .collect();
    (EqChannelParams { blocks, d_in: j.d_in, d_out: j.d_out }, off)
}

/// Group average `(1/|G|) Σ_g P(g) X P(g)†`, projecting onto the commutant.
pub fn twirl(action: &UnitaryRep, x: &CMat) -> CMat {
    let n = action.matrices.len() as f64;
    action
        .matrices
        .iter()
        .fold(CMat::zeros(x.nrows(), x.ncols()), |acc, p| acc + p * x * p.adjoint())
        .scale(1.0 / n)
}

/// Random equivariant CPTP channel: twirl of a random channel.
pub fn random_equivariant_choi<R: Rng + ?Sized>(
    rng: &mut R,
    action: &UnitaryRep,
    d_in: usize,
    d_out: usize,
    rank: usize,
) -> Choi {
    let k = crate::channel::random::random_channel(rng, d_in, d_out, rank);
    let j = k.to_choi();
    Choi { d_in, d_out, matrix: twirl(action, &j.matrix) }
}

/// `max_g max_probe ‖φ(R_in ρ R_in†) − R_out φ(ρ) R_out†‖_F` over matrix-unit probes.
pub fn check_equivariance(j: &Choi, r_in: &UnitaryRep, r_out: &UnitaryRep) -> Result<f64> {
    if r_in.dim != j.d_in || r_out.dim != j.d_out || r_in.matrices.len() != r_out.matrices.len() {
        return Err(Error::Dimension("representations do not match the channel".into()));
    }
    let mut worst: f64 = 0.0;
    for a in 0..j.d_in {
        for b in 0..j.d_in {
            let mut probe = CMat::zeros(j.d_in, j.d_in);
            probe[(a, b)] = c(1.0, 0.0);
            let out = j.apply(&probe)?;
            for (gi, go) in r_in.matrices.iter().zip(&r_out.matrices) {
                let lhs = j.apply(&(gi * &probe * gi.adjoint()))?;
                let rhs = go * &out * go.adjoint();
                worst = worst.max(frobenius_sq(&(lhs - rhs)).sqrt());
            }
        }
    }
    Ok(worst)
}

/// Projects a Hermitian Choi-space operator onto the trace-annihilating
/// subspace: `X − Tr_out(X) ⊗ I/d_out`.
pub fn remove_output_trace(x: &CMat, d_in: usize, d_out: usize) -> CMat {
    let t = CMat::from_fn(d_in, d_in, |a, b| {
        (0..d_out).map(|cc| x[(a * d_out + cc, b * d_out + cc)]).sum()
    });
    x - kron(&t, &identity(d_out)).scale(1.0 / d_out as f64)
}

/// Random Hermitian blocks shaped by the multiplicities.
pub fn hermitian_blocks<R: Rng + ?Sized>(rng: &mut R, decomp: &IsotypicDecomposition) -> Vec<CMat> {
    decomp
        .multiplicities
        .iter()
        .map(|&m| crate::linalg::random_hermitian(rng, m))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::KrausSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixtures_load_and_validate() {
        for name in ["trivial", "z2", "z3", "z4", "s3"] {
            let f = GroupFixture::builtin(name).unwrap();
            let sum: usize = f.irreps.irreps.iter().map(|i| i.dim * i.dim).sum();
            assert_eq!(sum, f.group.order);
        }
        assert!(GroupFixture::builtin("a5").is_err());
    }

    #[test]
    fn non_latin_table_rejected() {
        let r = FiniteGroup::new("bad".into(), vec!["a".into(), "b".into()], vec![vec![0, 1], vec![0, 1]]);
        assert!(r.is_err());
    }

    #[test]
    fn xx_trivial_projector_has_rank_two() {
        let f = GroupFixture::builtin("z2").unwrap();
        let rep = f.rep("xx").unwrap();
        let p = character_projector(rep, &f.irreps.irreps[0]).unwrap();
        assert!(max_abs_diff(&(&p * &p), &p) < 1e-14);
        assert_eq!(projector_rank(&p), 2);
        // Oracle: +1 eigenspace projector of X⊗X is (I + XX)/2.
        let oracle = (identity(4) + &rep.matrices[1]).scale(0.5);
        assert!(max_abs_diff(&p, &oracle) < 1e-14);
    }

    #[test]
    fn trivial_group_projector_is_identity() {
        let f = GroupFixture::builtin("trivial").unwrap();
        let p = character_projector(f.rep("identity").unwrap(), &f.irreps.irreps[0]).unwrap();
        assert!(max_abs_diff(&p, &identity(2)) < 1e-15);
    }

    #[test]
    fn regular_rep_of_z3_has_rank_one_components() {
        let f = GroupFixture::builtin("z3").unwrap();
        let reg = UnitaryRep::regular(&f.group);
        let mut total = CMat::zeros(3, 3);
        for irrep in &f.irreps.irreps {
            let p = character_projector(&reg, irrep).unwrap();
            assert_eq!(projector_rank(&p), 1);
            total += p;
        }
        assert!(max_abs_diff(&total, &identity(3)) < 1e-14);
    }

    #[test]
    fn multiplicities_of_small_reps() {
        let f = GroupFixture::builtin("z2").unwrap();
        let x = f.rep("x").unwrap();
        let d = isotypic_decompose(x, &f.irreps, &f.group).unwrap();
        assert_eq!(d.multiplicities, vec![1, 1]);
        let act = UnitaryRep::choi_action(x, x).unwrap();
        let d = isotypic_decompose(&act, &f.irreps, &f.group).unwrap();
        assert_eq!(d.multiplicities, vec![2, 2]);
        assert_eq!(eq_param_count(&d), 8);
        let xx = f.rep("xx").unwrap();
        let act = UnitaryRep::choi_action(xx, xx).unwrap();
        let d = isotypic_decompose(&act, &f.irreps, &f.group).unwrap();
        assert_eq!(d.multiplicities, vec![8, 8]);
        assert_eq!(eq_param_count(&d), 128);
    }

    #[test]
    fn aligned_basis_block_diagonalizes_rep() {
        let f = GroupFixture::builtin("s3").unwrap();
        let rep = f.rep("qubit-permutation").unwrap();
        let d = isotypic_decompose(rep, &f.irreps, &f.group).unwrap();
        assert_eq!(d.multiplicities, vec![4, 0, 2]);
        for (g, r) in rep.matrices.iter().enumerate() {
            let rotated = d.basis.adjoint() * r * &d.basis;
            let mut expected = CMat::zeros(8, 8);
            for (lam, irrep) in f.irreps.irreps.iter().enumerate() {
                let m = d.multiplicities[lam];
                let block = kron(&irrep.matrices[g], &identity(m));
                let off = d.offset(lam);
                expected.view_mut((off, off), block.shape()).copy_from(&block);
            }
            assert!(max_abs_diff(&rotated, &expected) < 1e-12, "element {g}");
        }
    }

    #[test]
    fn zero_blocks_give_depolarizing_baseline() {
        let f = GroupFixture::builtin("z2").unwrap();
        let x = f.rep("x").unwrap();
        let act = UnitaryRep::choi_action(x, x).unwrap();
        let d = isotypic_decompose(&act, &f.irreps, &f.group).unwrap();
        let j = build_equivariant_choi(&d, &EqChannelParams::zeros(&d, 2, 2), true).unwrap();
        assert!(max_abs_diff(&j.matrix, &KrausSet::depolarizing(1).to_choi().matrix) < 1e-14);
    }

    #[test]
    fn planted_blocks_shift_eigenvalues() {
        let f = GroupFixture::builtin("s3").unwrap();
        let rep = f.rep("qubit-permutation").unwrap();
        // Channel on 3 qubits -> 3 qubits would be 64-dim; use rep on input and output.
        let act = UnitaryRep::choi_action(rep, rep).unwrap();
        let d = isotypic_decompose(&act, &f.irreps, &f.group).unwrap();
        let mut params = EqChannelParams::zeros(&d, 8, 8);
        let lam = 2;
        let m = d.multiplicities[lam];
        params.blocks[lam] = CMat::from_diagonal(&CVec::from_iterator(m, (0..m).map(|k| c(0.001 * k as f64, 0.0))));
        let j = build_equivariant_choi(&d, &params, false).unwrap();
        let vals = eigh(&j.matrix).0;
        let base = 1.0 / 8.0;
        for k in 1..m {
            let target = base + 0.001 * k as f64;
            let count = vals.iter().filter(|v| (*v - target).abs() < 1e-9).count();
            assert_eq!(count, d.irrep_dims[lam], "planted value {k}");
        }
    }

    #[test]
    fn twirled_channels_are_equivariant_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let f = GroupFixture::builtin("z4").unwrap();
        let s = f.rep("s").unwrap();
        let act = UnitaryRep::choi_action(s, s).unwrap();
        let d = isotypic_decompose(&act, &f.irreps, &f.group).unwrap();
        let j = random_equivariant_choi(&mut rng, &act, 2, 2, 3);
        assert!(check_equivariance(&j, s, s).unwrap() < 1e-12);
        let (params, off) = choi_to_eq_params(&d, &j);
        assert!(off < 1e-12);
        let rebuilt = build_equivariant_choi(&d, &params, true).unwrap();
        assert!(max_abs_diff(&rebuilt.matrix, &j.matrix) < 1e-12);
    }

    #[test]
    fn generic_channel_breaks_z2_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let f = GroupFixture::builtin("z2").unwrap();
        let x = f.rep("x").unwrap();
        let j = crate::channel::random::random_channel(&mut rng, 2, 2, 2).to_choi();
        assert!(check_equivariance(&j, x, x).unwrap() > 1e-3);
        let t = GroupFixture::builtin("trivial").unwrap();
        let id = t.rep("identity").unwrap();
        assert_eq!(check_equivariance(&j, id, id).unwrap(), 0.0);
    }
}
