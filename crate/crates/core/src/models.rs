//! Dynamic PQC and QCNN architectures as layered channel models.
//!
//! A [`ModelSpec`] is a parameter-free plan: each layer is a list of
//! [`OpTemplate`]s that own a contiguous slice of the parameter vector.
//! [`ModelSpec::build`] instantiates the plan into a [`LayeredModel`].

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::pauli::{pauli_strings, PauliIndex};
use crate::channel::{
    channel_to_weight, extract_layer_channel, ChannelRep, KrausSet, Layer, LayerKind, LayeredModel, Op,
    TransferMatrix, WeightKind,
};
use crate::error::{Error, Result};
use crate::linalg::{c, expm_hermitian, identity, CMat, C64};
use crate::norms::{norm_report, DEFAULT_SPARSITY_TOL};
use crate::pacbayes::{Formalism, LayerNorms};

/// Standard deviation of the initial two-qubit generator coefficients.
pub const GENERATOR_INIT_STD: f64 = 0.1;
pub const DYNAMIC_PARAMS: usize = 3;
pub const DOUBLE_DYNAMIC_PARAMS: usize = 6;
pub const SU4_PARAMS: usize = 15;
/// Largest input register for direct transfer-matrix extraction.
pub const PTM_PROBE_MAX_QUBITS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicOpParams {
    pub theta: f64,
    pub phi: f64,
    pub varphi: f64,
}

impl DynamicOpParams {
    pub fn from_slice(p: &[f64]) -> Self {
        Self { theta: p[0], phi: p[1], varphi: p[2] }
    }
}

/// `[[cos ϕ, −e^{−iφ} sin ϕ], [e^{iφ} sin ϕ, cos ϕ]]`.
pub fn dynamic_unitary(phi: f64, varphi: f64) -> CMat {
    let (s, co) = varphi.sin_cos();
    let e = C64::from_polar(1.0, phi);
    CMat::from_row_slice(2, 2, &[c(co, 0.0), -e.conj() * s, e * s, c(co, 0.0)])
}

/// `ρ ↦ cos²(θ/2) ρ + sin²(θ/2) U ρ U†`.
pub fn dynamic_channel(p: DynamicOpParams) -> KrausSet {
    let (s, co) = (p.theta / 2.0).sin_cos();
    KrausSet {
        d_in: 2,
        d_out: 2,
        operators: vec![identity(2).scale(co), dynamic_unitary(p.phi, p.varphi).scale(s)],
    }
}

/// Two dynamic operations in sequence, `p1` first.
pub fn double_dynamic_channel(p1: DynamicOpParams, p2: DynamicOpParams) -> KrausSet {
    let (s1, c1) = (p1.theta / 2.0).sin_cos();
    let (s2, c2) = (p2.theta / 2.0).sin_cos();
    let u1 = dynamic_unitary(p1.phi, p1.varphi);
    let u2 = dynamic_unitary(p2.phi, p2.varphi);
    let u21 = &u2 * &u1;
    KrausSet {
        d_in: 2,
        d_out: 2,
        operators: vec![identity(2).scale(c1 * c2), u1.scale(s1 * c2), u2.scale(c1 * s2), u21.scale(s1 * s2)],
    }
}

/// `tr(χ²) = (1/d²) Σ_{i,j} |Tr(K_i† K_j)|²`.
pub fn pm_purity(k: &KrausSet) -> f64 {
    let d = k.d_in as f64;
    let mut acc = 0.0;
    for a in &k.operators {
        for b in &k.operators {
            acc += (a.adjoint() * b).trace().norm_sqr();
        }
    }
    acc / (d * d)
}

/// `Σ_{a≠0} c_a σ_a` over the 15 non-identity two-qubit Pauli strings.
pub fn su4_generator(coeffs: &[f64]) -> Result<CMat> {
    if coeffs.len() != SU4_PARAMS {
        return Err(Error::Layout { expected: SU4_PARAMS, got: coeffs.len() });
    }
    let mut h = CMat::zeros(4, 4);
    for (code, &w) in coeffs.iter().enumerate() {
        let p = PauliIndex::new(2, code + 1).string();
        for col in 0..4 {
            let (row, v) = p.entry_for_col(col);
            h[(row, col)] += v * w;
        }
    }
    Ok(h)
}

/// `exp(−i Σ_a c_a σ_a)`.
pub fn su4_gate(coeffs: &[f64]) -> Result<CMat> {
    Ok(expm_hermitian(&su4_generator(coeffs)?))
}

/// Neighbouring pairs `(i, i+1)` starting at `offset`, stepping by two.
pub fn brickwork_pairs(n: usize, offset: usize) -> Vec<[usize; 2]> {
    (offset..n.saturating_sub(1)).step_by(2).map(|i| [i, i + 1]).collect()
}

/// One staggered row of two-qubit gates as a unitary channel on `n` qubits.
pub fn brickwork_layer(n: usize, params: &[f64], offset: usize) -> Result<KrausSet> {
    let pairs = brickwork_pairs(n, offset);
    if params.len() != SU4_PARAMS * pairs.len() {
        return Err(Error::Layout { expected: SU4_PARAMS * pairs.len(), got: params.len() });
    }
    let ops = pairs
        .iter()
        .zip(params.chunks(SU4_PARAMS))
        .map(|(pair, p)| Ok(Op::Unitary { targets: pair.to_vec(), u: su4_gate(p)? }))
        .collect::<Result<Vec<_>>>()?;
    crate::channel::layered::layer_kraus(&Layer::trainable("brickwork", n, ops, true))
}

/// Global unitary followed by tracing out everything but `keep`; Kraus
/// operators `(⟨ℓ|_env ⊗ I) U`.
pub fn qcnn_block(u: &CMat, keep: &[usize]) -> Result<KrausSet> {
    let n = crate::linalg::qubits_for_dim(u.nrows())?;
    if keep.is_empty() || keep.len() >= n || keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&q| q >= n) {
        return Err(Error::Model(format!("keep set {keep:?} must be a proper ascending subset of {n} qubits")));
    }
    let all: Vec<usize> = (0..n).collect();
    let layer = Layer::trainable(
        "qcnn-block",
        n,
        vec![Op::Unitary { targets: all, u: u.clone() }, Op::Trace { keep: keep.to_vec() }],
        false,
    );
    crate::channel::layered::layer_kraus(&layer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    DynamicPqc,
    Qcnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Dynamic-operation angle, initialized uniformly in `[−π, π]`.
    Angle,
    /// Two-qubit generator coefficient, initialized from `N(0, 0.1)`.
    Generator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpTemplate {
    /// Two dynamic operations on `qubit`, parameters `[θ1, φ1, ϕ1, θ2, φ2, ϕ2]`.
    DoubleDynamic { qubit: usize, start: usize },
    /// Pauli-exponential gate on a neighbouring pair.
    Su4 { pair: [usize; 2], start: usize },
    Trace { keep: Vec<usize> },
}

impl OpTemplate {
    pub fn param_range(&self) -> std::ops::Range<usize> {
        match self {
            OpTemplate::DoubleDynamic { start, .. } => *start..start + DOUBLE_DYNAMIC_PARAMS,
            OpTemplate::Su4 { start, .. } => *start..start + SU4_PARAMS,
            OpTemplate::Trace { .. } => 0..0,
        }
    }

    pub fn param_kind(&self) -> Option<ParamKind> {
        match self {
            OpTemplate::DoubleDynamic { .. } => Some(ParamKind::Angle),
            OpTemplate::Su4 { .. } => Some(ParamKind::Generator),
            OpTemplate::Trace { .. } => None,
        }
    }

    pub fn instantiate(&self, params: &[f64]) -> Result<Op> {
        let r = self.param_range();
        if r.end > params.len() {
            return Err(Error::Layout { expected: r.end, got: params.len() });
        }
        let p = &params[r];
        Ok(match self {
            OpTemplate::DoubleDynamic { qubit, .. } => {
                let k = double_dynamic_channel(DynamicOpParams::from_slice(&p[..3]), DynamicOpParams::from_slice(&p[3..]));
                Op::Kraus { targets: vec![*qubit], ops: k.operators }
            }
            OpTemplate::Su4 { pair, .. } => Op::Unitary { targets: pair.to_vec(), u: su4_gate(p)? },
            OpTemplate::Trace { keep } => Op::Trace { keep: keep.clone() },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub label: String,
    pub n_in: usize,
    pub ops: Vec<OpTemplate>,
    pub unital: bool,
}

impl LayerPlan {
    pub fn n_out(&self) -> usize {
        self.ops.iter().fold(self.n_in, |n, op| match op {
            OpTemplate::Trace { keep } => keep.len(),
            _ => n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub n: usize,
    pub layers: Vec<LayerPlan>,
    pub readout: Vec<usize>,
    pub param_count: usize,
}

impl ModelSpec {
    pub fn new(architecture: Architecture, n: usize) -> Result<Self> {
        match architecture {
            Architecture::DynamicPqc => Self::dynamic_pqc(n),
            Architecture::Qcnn => Self::qcnn(n),
        }
    }

    /// Two dynamic operations per qubit, then brickwork rows at offsets 0 and 1,
    /// all in one layer; the first two qubits are read out.
    pub fn dynamic_pqc(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Model("dynamic PQC needs at least two qubits".into()));
        }
        let mut start = 0;
        let mut ops = Vec::new();
        for qubit in 0..n {
            ops.push(OpTemplate::DoubleDynamic { qubit, start });
            start += DOUBLE_DYNAMIC_PARAMS;
        }
        for offset in [0, 1] {
            for pair in brickwork_pairs(n, offset) {
                ops.push(OpTemplate::Su4 { pair, start });
                start += SU4_PARAMS;
            }
        }
        let layer = LayerPlan { label: "dynamic-pqc".into(), n_in: n, ops, unital: true };
        Ok(Self { architecture: Architecture::DynamicPqc, n, layers: vec![layer], readout: vec![0, 1], param_count: start })
    }

    /// Convolution (brickwork rows at offsets 0 and 1), dynamic operations on the
    /// even qubits, then pooling onto the even qubits, until two qubits remain.
    pub fn qcnn(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Model("QCNN needs at least two qubits".into()));
        }
        let mut start = 0;
        let mut layers = Vec::new();
        let mut cur = n;
        loop {
            let keep: Vec<usize> = (0..cur).step_by(2).collect();
            let mut ops = Vec::new();
            for offset in [0, 1] {
                for pair in brickwork_pairs(cur, offset) {
                    ops.push(OpTemplate::Su4 { pair, start });
                    start += SU4_PARAMS;
                }
            }
            for &qubit in &keep {
                ops.push(OpTemplate::DoubleDynamic { qubit, start });
                start += DOUBLE_DYNAMIC_PARAMS;
            }
            let next = keep.len();
            ops.push(OpTemplate::Trace { keep });
            layers.push(LayerPlan { label: format!("qcnn-{cur}-{next}"), n_in: cur, ops, unital: false });
            cur = next;
            if cur <= 2 {
                break;
            }
        }
        let readout = (0..cur).collect();
        Ok(Self { architecture: Architecture::Qcnn, n, layers, readout, param_count: start })
    }

    pub fn formalism(&self) -> Formalism {
        match self.architecture {
            Architecture::DynamicPqc => Formalism::Pm,
            Architecture::Qcnn => Formalism::Ptm,
        }
    }

    pub fn n_final(&self) -> usize {
        self.layers.last().map_or(self.n, LayerPlan::n_out)
    }

    pub fn num_outcomes(&self) -> usize {
        1 << self.readout.len()
    }

    pub fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::Layout { expected: self.param_count, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    pub fn build(&self, params: &[f64]) -> Result<LayeredModel> {
        self.check_params(params)?;
        let layers = self
            .layers
            .iter()
            .map(|plan| {
                let ops = plan.ops.iter().map(|t| t.instantiate(params)).collect::<Result<Vec<_>>>()?;
                Ok(Layer::trainable(plan.label.clone(), plan.n_in, ops, plan.unital))
            })
            .collect::<Result<Vec<_>>>()?;
        LayeredModel::new(self.n, layers, self.readout.clone())
    }

    /// Kind of every parameter, by position.
    pub fn param_kinds(&self) -> Vec<ParamKind> {
        let mut kinds = vec![ParamKind::Angle; self.param_count];
        for plan in &self.layers {
            for t in &plan.ops {
                if let Some(k) = t.param_kind() {
                    for i in t.param_range() {
                        kinds[i] = k;
                    }
                }
            }
        }
        kinds
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let normal = Normal::new(0.0, GENERATOR_INIT_STD).expect("valid std");
        self.param_kinds()
            .into_iter()
            .map(|k| match k {
                ParamKind::Angle => rng.gen_range(-PI..=PI),
                ParamKind::Generator => normal.sample(rng),
            })
            .collect()
    }

    /// `‖W_j‖_F²` per layer from single-qubit purities alone.
    ///
    /// Unitaries leave Choi purity unchanged, so only the dynamic blocks enter.
    pub fn structural_fro2(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.layers
            .iter()
            .map(|plan| {
                let purity: f64 = plan
                    .ops
                    .iter()
                    .filter_map(|t| match t {
                        OpTemplate::DoubleDynamic { start, .. } => Some(*start),
                        _ => None,
                    })
                    .map(|s| {
                        let p = &params[s..s + DOUBLE_DYNAMIC_PARAMS];
                        pm_purity(&double_dynamic_channel(DynamicOpParams::from_slice(&p[..3]), DynamicOpParams::from_slice(&p[3..])))
                    })
                    .product();
                let di = (1usize << plan.n_in) as f64;
                let dout = (1usize << plan.n_out()) as f64;
                Ok(match self.architecture {
                    // ‖χ‖_F² − 1/4^n with ‖χ‖_F² = Π tr(χ_i²).
                    Architecture::DynamicPqc => purity - 1.0 / (di * di),
                    // ‖R‖_F² − d_in/d_out with ‖R‖_F² = Tr J² = d_in d_out Π tr(χ_i²).
                    Architecture::Qcnn => di * dout * purity - di / dout,
                })
            })
            .collect()
    }

    /// Indices of parameters that change `structural_fro2`.
    pub fn regularized_params(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|p| p.ops.iter())
            .filter(|t| matches!(t, OpTemplate::DoubleDynamic { .. }))
            .flat_map(|t| t.param_range())
            .collect()
    }
}

pub fn build_dynamic_pqc(n: usize, params: &[f64]) -> Result<LayeredModel> {
    ModelSpec::dynamic_pqc(n)?.build(params)
}

pub fn build_qcnn(n: usize, params: &[f64]) -> Result<LayeredModel> {
    ModelSpec::qcnn(n)?.build(params)
}

/// Transfer matrix of a layer by applying it to every input Pauli string.
pub fn layer_ptm(layer: &Layer) -> Result<TransferMatrix> {
    if layer.kind != LayerKind::Trainable {
        return Err(Error::Model(format!("layer '{}' depends on the input", layer.label)));
    }
    if layer.n_in > PTM_PROBE_MAX_QUBITS {
        return Err(Error::Model(format!(
            "transfer-matrix probing is limited to {PTM_PROBE_MAX_QUBITS} input qubits"
        )));
    }
    let (di, dout) = (1usize << layer.n_in, 1usize << layer.n_out);
    let pin = pauli_strings(layer.n_in);
    let pout = pauli_strings(layer.n_out);
    let norm = 1.0 / ((di * dout) as f64).sqrt();
    let mut r = CMat::zeros(pout.len(), pin.len());
    for (bi, pb) in pin.iter().enumerate() {
        let img = layer.apply(&pb.to_dense());
        for (ai, pa) in pout.iter().enumerate() {
            r[(ai, bi)] = pa.trace_with(&img) * norm;
        }
    }
    TransferMatrix::new(di, dout, r)
}

/// Process matrix of a product of single-qubit channels, summarized without
/// materializing the `4^n × 4^n` matrix: `(‖W‖_{1,1}, ξ, ‖W‖_F²)`.
pub fn product_pm_summary(factors: &[KrausSet], tol: f64) -> Result<(f64, usize, f64)> {
    let chis: Vec<CMat> = factors
        .iter()
        .map(|k| Ok(ChannelRep::Kraus(k.clone()).to_pm()?.chi))
        .collect::<Result<Vec<_>>>()?;
    let n = chis.len();
    let base = 1.0 / 4f64.powi(n as i32);
    let norm11: f64 = chis.iter().map(|m| m.iter().map(|z| z.norm()).sum::<f64>()).product();
    let nnz: usize = chis.iter().map(|m| m.iter().filter(|z| z.norm() > tol).count()).product();
    let mut diag = vec![c(1.0, 0.0)];
    for m in &chis {
        diag = diag.iter().flat_map(|&a| (0..4).map(move |i| a * m[(i, i)])).collect();
    }
    let diag_abs: f64 = diag.iter().map(|z| z.norm()).sum();
    let diag_nnz = diag.iter().filter(|z| z.norm() > tol).count();
    let w_diag: f64 = diag.iter().map(|z| (z - base).norm()).sum();
    let w_diag_nnz = diag.iter().filter(|z| (*z - base).norm() > tol).count();
    let fro2_chi: f64 = chis.iter().map(crate::linalg::frobenius_sq).product();
    Ok((norm11 - diag_abs + w_diag, nnz - diag_nnz + w_diag_nnz, fro2_chi - base))
}

/// Per-layer norms in the formalism that matches the architecture.
///
/// Layers up to four qubits are reconstructed exactly. Larger dynamic-PQC
/// layers fall back to their dissipative product part for `‖W‖_{1,1}` and `ξ`,
/// with `‖W‖_F²` still exact.
pub fn layer_norms(spec: &ModelSpec, params: &[f64]) -> Result<Vec<LayerNorms>> {
    let model = spec.build(params)?;
    let fro_exact = spec.structural_fro2(params)?;
    let mut out = Vec::with_capacity(model.layers.len());
    for (j, layer) in model.layers.iter().enumerate() {
        let (di, dout) = (1usize << layer.n_in, 1usize << layer.n_out);
        let (w1, xi, wf2) = match spec.formalism() {
            Formalism::Pm if layer.n_in <= crate::channel::layered::TOMOGRAPHY_MAX_QUBITS => {
                let w = channel_to_weight(&extract_layer_channel(&model, j)?, WeightKind::Pm)?;
                let r = norm_report(&w.w, DEFAULT_SPARSITY_TOL)?;
                (r.norm_11, r.sparsity, r.norm_f2())
            }
            Formalism::Pm => {
                let factors: Vec<KrausSet> = (0..layer.n_in)
                    .map(|q| {
                        let t = spec.layers[j]
                            .ops
                            .iter()
                            .find(|t| matches!(t, OpTemplate::DoubleDynamic { qubit, .. } if *qubit == q))
                            .ok_or_else(|| Error::Model(format!("qubit {q} has no dynamic block")))?;
                        match t.instantiate(params)? {
                            Op::Kraus { ops, .. } => KrausSet::new(ops),
                            _ => unreachable!("dynamic template yields Kraus"),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (w1, xi, _) = product_pm_summary(&factors, DEFAULT_SPARSITY_TOL)?;
                (w1, xi, fro_exact[j])
            }
            _ => {
                let ptm = layer_ptm(layer)?;
                let w = channel_to_weight(&ChannelRep::Ptm(ptm), WeightKind::Ptm)?;
                let r = norm_report(&w.w, DEFAULT_SPARSITY_TOL)?;
                (r.norm_11, r.sparsity, r.norm_f2())
            }
        };
        out.push(LayerNorms { xi, w1, wf2, d_in: di, d_out: dout, unital: layer.unital && spec.formalism() == Formalism::Ptm });
    }
    Ok(out)
}
