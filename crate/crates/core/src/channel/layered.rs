//! Layered channel models on qubit registers.
//!
//! A layer is a short program of register operations (local unitaries, local
//! Kraus channels, partial traces, dense channels). Layers run in order on a
//! density matrix and the model ends in a computational-basis measurement of
//! the readout qubits.

use serde::{Deserialize, Serialize};

use super::repr::{ChannelRep, Choi, KrausSet};
use crate::error::{Error, Result};
use crate::linalg::{
    apply_left, conjugate_local, identity, kron_all, partial_trace_keep, CMat, ZERO,
};

/// Register size up to which layers are reconstructed by full tomography.
pub const TOMOGRAPHY_MAX_QUBITS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Unitary { targets: Vec<usize>, u: CMat },
    Kraus { targets: Vec<usize>, ops: Vec<CMat> },
    /// Keep the listed qubits (ascending) and trace out the rest.
    Trace { keep: Vec<usize> },
    /// A channel on the whole register, possibly changing its size.
    Dense(KrausSet),
}

impl Op {
    pub fn n_out(&self, n_in: usize) -> usize {
        match self {
            Op::Trace { keep } => keep.len(),
            Op::Dense(k) => k.d_out.trailing_zeros() as usize,
            _ => n_in,
        }
    }

    pub fn apply(&self, rho: &CMat, n: usize) -> CMat {
        match self {
            Op::Unitary { targets, u } => conjugate_local(rho, u, targets, n),
            Op::Kraus { targets, ops } => {
                let mut acc = CMat::zeros(rho.nrows(), rho.ncols());
                for k in ops {
                    acc += conjugate_local(rho, k, targets, n);
                }
                acc
            }
            Op::Trace { keep } => partial_trace_keep(rho, n, keep),
            Op::Dense(k) => k
                .operators
                .iter()
                .fold(CMat::zeros(k.d_out, k.d_out), |acc, kk| acc + kk * rho * kk.adjoint()),
        }
    }

    /// Heisenberg-picture map `O ↦ φ†(O)` on an observable of the output register.
    pub fn adjoint(&self, obs: &CMat, n_in: usize) -> CMat {
        match self {
            Op::Unitary { targets, u } => conjugate_local(obs, &u.adjoint(), targets, n_in),
            Op::Kraus { targets, ops } => {
                let mut acc = CMat::zeros(obs.nrows(), obs.ncols());
                for k in ops {
                    acc += conjugate_local(obs, &k.adjoint(), targets, n_in);
                }
                acc
            }
            Op::Trace { keep } => embed_observable(obs, n_in, keep),
            Op::Dense(k) => k
                .operators
                .iter()
                .fold(CMat::zeros(k.d_in, k.d_in), |acc, kk| acc + kk.adjoint() * obs * kk),
        }
    }

    fn is_single_qubit(&self) -> bool {
        match self {
            Op::Unitary { targets, .. } | Op::Kraus { targets, .. } => targets.len() == 1,
            _ => false,
        }
    }

    fn local_kraus(&self) -> Option<(usize, Vec<CMat>)> {
        match self {
            Op::Unitary { targets, u } if targets.len() == 1 => Some((targets[0], vec![u.clone()])),
            Op::Kraus { targets, ops } if targets.len() == 1 => Some((targets[0], ops.clone())),
            _ => None,
        }
    }
}

/// `O ⊗ I` with `O` acting on `keep` inside an `n`-qubit register.
fn embed_observable(obs: &CMat, n: usize, keep: &[usize]) -> CMat {
    let dim = 1usize << n;
    let k = keep.len();
    let keep_mask: usize = keep.iter().map(|&q| 1usize << (n - 1 - q)).sum();
    let sub = |i: usize| -> usize {
        keep.iter()
            .enumerate()
            .fold(0, |acc, (pos, &q)| acc | (((i >> (n - 1 - q)) & 1) << (k - 1 - pos)))
    };
    let subs: Vec<usize> = (0..dim).map(sub).collect();
    let mut out = CMat::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            if (i & !keep_mask) == (j & !keep_mask) {
                out[(i, j)] = obs[(subs[i], subs[j])];
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum LayerKind {
    Trainable,
    Encoding { slot: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub label: String,
    pub kind: LayerKind,
    pub n_in: usize,
    pub n_out: usize,
    pub ops: Vec<Op>,
    /// Declared unital (maps `I/d_in` to `I/d_out`).
    pub unital: bool,
}

impl Layer {
    pub fn trainable(label: impl Into<String>, n_in: usize, ops: Vec<Op>, unital: bool) -> Self {
        let n_out = ops.iter().fold(n_in, |n, op| op.n_out(n));
        Self { label: label.into(), kind: LayerKind::Trainable, n_in, n_out, ops, unital }
    }

    pub fn encoding(slot: usize, n: usize) -> Self {
        Self {
            label: format!("encoding-{slot}"),
            kind: LayerKind::Encoding { slot },
            n_in: n,
            n_out: n,
            ops: Vec::new(),
            unital: false,
        }
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut n = self.n_in;
        let mut rho = rho.clone();
        for op in &self.ops {
            rho = op.apply(&rho, n);
            n = op.n_out(n);
        }
        rho
    }

    /// A layer is local when it is a product of single-qubit maps.
    pub fn is_local(&self) -> bool {
        self.n_in == self.n_out && self.ops.iter().all(Op::is_single_qubit)
    }

    /// Per-qubit channels of a local layer, in qubit order.
    pub fn local_factors(&self) -> Result<Vec<KrausSet>> {
        if !self.is_local() {
            return Err(Error::Model(format!("layer '{}' is not a product of single-qubit maps", self.label)));
        }
        let mut factors: Vec<KrausSet> = (0..self.n_in).map(|_| KrausSet::identity(2)).collect();
        for op in &self.ops {
            let (q, ks) = op.local_kraus().expect("local op");
            factors[q] = factors[q].then(&KrausSet::new(ks)?)?;
        }
        Ok(factors)
    }

    /// Choi operator by applying the layer to every matrix unit `|a⟩⟨b|`.
    pub fn tomography(&self) -> Result<Choi> {
        if self.kind != LayerKind::Trainable {
            return Err(Error::Model(format!("layer '{}' depends on the input", self.label)));
        }
        let di = 1usize << self.n_in;
        let dout = 1usize << self.n_out;
        let mut j = CMat::zeros(di * dout, di * dout);
        for a in 0..di {
            for b in 0..di {
                let mut unit = CMat::zeros(di, di);
                unit[(a, b)] = crate::linalg::ONE;
                let img = self.apply(&unit);
                for cc in 0..dout {
                    for e in 0..dout {
                        j[(a * dout + cc, b * dout + e)] = img[(cc, e)];
                    }
                }
            }
        }
        Choi::new(di, dout, j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredModel {
    pub n_in: usize,
    pub layers: Vec<Layer>,
    /// Qubits of the final register that are measured.
    pub readout: Vec<usize>,
}

impl LayeredModel {
    pub fn new(n_in: usize, layers: Vec<Layer>, readout: Vec<usize>) -> Result<Self> {
        let mut n = n_in;
        for (j, l) in layers.iter().enumerate() {
            if l.n_in != n {
                return Err(Error::Dimension(format!(
                    "layer {j} expects {} qubits, previous layer gives {n}",
                    l.n_in
                )));
            }
            n = l.n_out;
        }
        if readout.is_empty() || readout.iter().any(|&q| q >= n) || readout.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Model(format!("invalid readout {readout:?} for a {n}-qubit register")));
        }
        Ok(Self { n_in, layers, readout })
    }

    pub fn n_final(&self) -> usize {
        self.layers.last().map_or(self.n_in, |l| l.n_out)
    }

    pub fn num_outcomes(&self) -> usize {
        1 << self.readout.len()
    }

    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&j| self.layers[j].kind == LayerKind::Trainable).collect()
    }

    pub fn encoding_slots(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l.kind {
                LayerKind::Encoding { slot } => Some(slot),
                LayerKind::Trainable => None,
            })
            .collect()
    }

    /// Final state with encoding slot `s` filled by `encodings[s]`.
    pub fn forward_with(&self, rho: &CMat, encodings: &[KrausSet]) -> Result<CMat> {
        if rho.nrows() != 1 << self.n_in {
            return Err(Error::Dimension(format!(
                "model expects a {}-qubit input",
                self.n_in
            )));
        }
        let mut rho = rho.clone();
        for layer in &self.layers {
            rho = match layer.kind {
                LayerKind::Trainable => layer.apply(&rho),
                LayerKind::Encoding { slot } => {
                    let enc = encodings.get(slot).ok_or_else(|| {
                        Error::Model(format!("no encoding supplied for slot {slot}"))
                    })?;
                    if enc.d_in != rho.nrows() || enc.d_out != rho.nrows() {
                        return Err(Error::Dimension(format!("encoding {slot} has wrong dimension")));
                    }
                    enc.apply(&rho)?
                }
            };
        }
        Ok(rho)
    }

    pub fn forward(&self, rho: &CMat) -> Result<CMat> {
        self.forward_with(rho, &[])
    }

    /// Outcome probabilities of the final state on the readout qubits.
    pub fn probabilities(&self, rho_final: &CMat) -> Vec<f64> {
        let n = self.n_final();
        let reduced = if self.readout.len() == n {
            rho_final.clone()
        } else {
            partial_trace_keep(rho_final, n, &self.readout)
        };
        reduced.diagonal().iter().map(|z| z.re).collect()
    }
}

pub fn model_output(model: &LayeredModel, rho_in: &CMat) -> Result<Vec<f64>> {
    let out = model.forward(rho_in)?;
    Ok(model.probabilities(&out))
}

pub fn reupload_compose(model: &LayeredModel, encodings: &[KrausSet], rho0: &CMat) -> Result<CMat> {
    let slots = model.encoding_slots();
    if let Some(&missing) = slots.iter().find(|&&s| s >= encodings.len()) {
        return Err(Error::Model(format!("missing encoding for slot {missing}")));
    }
    model.forward_with(rho0, encodings)
}

/// Channel of layer `j`: full tomography on small registers, tensor products of
/// per-qubit factors for local layers on larger ones.
pub fn extract_layer_channel(model: &LayeredModel, j: usize) -> Result<ChannelRep> {
    let layer = model
        .layers
        .get(j)
        .ok_or_else(|| Error::Model(format!("no layer {j}")))?;
    if layer.kind != LayerKind::Trainable {
        return Err(Error::Model(format!("layer {j} is an input-dependent encoding layer")));
    }
    if layer.n_in <= TOMOGRAPHY_MAX_QUBITS && layer.n_out <= TOMOGRAPHY_MAX_QUBITS {
        return Ok(ChannelRep::Choi(layer.tomography()?));
    }
    if layer.is_local() {
        let factors = layer.local_factors()?;
        return Ok(ChannelRep::Choi(product_choi(&factors)?));
    }
    Err(Error::Model(format!(
        "layer {j} acts non-locally on {} qubits; tomography is limited to {TOMOGRAPHY_MAX_QUBITS}",
        layer.n_in
    )))
}

/// Choi operator of a tensor product of single-qubit channels.
pub fn product_choi(factors: &[KrausSet]) -> Result<Choi> {
    let chois: Vec<Choi> = factors.iter().map(KrausSet::to_choi).collect();
    let n = chois.len();
    let d = 1usize << n;
    let big = kron_all(&chois.iter().map(|c| c.matrix.clone()).collect::<Vec<_>>());
    // big is indexed by (a_1 c_1, a_2 c_2, ...); regroup into (a_1..a_n, c_1..c_n).
    let perm = |idx: usize| -> usize {
        let mut a = 0usize;
        let mut cc = 0usize;
        for q in 0..n {
            let pair = (idx >> (2 * (n - 1 - q))) & 3;
            a = (a << 1) | (pair >> 1);
            cc = (cc << 1) | (pair & 1);
        }
        a * d + cc
    };
    let dim = d * d;
    let mut j = CMat::from_element(dim, dim, ZERO);
    let p: Vec<usize> = (0..dim).map(perm).collect();
    for r in 0..dim {
        for s in 0..dim {
            j[(p[r], p[s])] = big[(r, s)];
        }
    }
    Choi::new(d, d, j)
}

/// `|k⟩⟨k|` on a `dim`-dimensional space.
pub fn computational_projector(dim: usize, k: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    m[(k, k)] = crate::linalg::ONE;
    m
}

/// Dense Kraus form of a whole layer; used to cross-check the register program.
pub fn layer_kraus(layer: &Layer) -> Result<KrausSet> {
    let mut acc = KrausSet::identity(1 << layer.n_in);
    let mut n = layer.n_in;
    for op in &layer.ops {
        let step = match op {
            Op::Unitary { targets, u } => {
                KrausSet::unitary(apply_left(&identity(1 << n), u, targets, n))
            }
            Op::Kraus { targets, ops } => KrausSet::new(
                ops.iter().map(|k| apply_left(&identity(1 << n), k, targets, n)).collect(),
            )?,
            Op::Trace { keep } => {
                let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
                let dk = 1usize << keep.len();
                let mut ops = Vec::new();
                for env in 0..1usize << traced.len() {
                    let mut k = CMat::zeros(dk, 1 << n);
                    for col in 0..1usize << n {
                        let env_bits = traced
                            .iter()
                            .enumerate()
                            .fold(0, |acc, (pos, &q)| acc | (((col >> (n - 1 - q)) & 1) << (traced.len() - 1 - pos)));
                        if env_bits != env {
                            continue;
                        }
                        let row = keep
                            .iter()
                            .enumerate()
                            .fold(0, |acc, (pos, &q)| acc | (((col >> (n - 1 - q)) & 1) << (keep.len() - 1 - pos)));
                        k[(row, col)] = crate::linalg::ONE;
                    }
                    ops.push(k);
                }
                KrausSet::new(ops)?
            }
            Op::Dense(k) => k.clone(),
        };
        acc = acc.then(&step)?;
        n = op.n_out(n);
    }
    Ok(acc)
}
