//! Generalized cluster Hamiltonian, exact ground states, phase labelers and
//! seeded dataset generation.

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::pauli::PauliIndex;
use crate::error::{Error, Result};
use crate::io::{vector_from_json, vector_to_json};
use crate::linalg::{c, eigh, CMat, CVec, C64};
use crate::seed::rng_for;

pub const COUPLING_RANGE: f64 = 4.0;
pub const MAX_QUBITS: usize = 12;
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingPoint {
    #[serde(rename = "J1")]
    pub j1: f64,
    #[serde(rename = "J2")]
    pub j2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGroundState {
    pub point: CouplingPoint,
    pub state: CVec,
    pub label: usize,
    pub energy: f64,
}

impl LabeledGroundState {
    /// `|ψ⟩⟨ψ|`.
    pub fn density(&self) -> CMat {
        &self.state * self.state.adjoint()
    }
}

/// `(coefficient, per-qubit Pauli symbols)` terms of `H(J1, J2)` on a ring.
pub fn cluster_terms(n: usize, j1: f64, j2: f64) -> Result<Vec<(f64, Vec<u8>)>> {
    if n < 3 {
        return Err(Error::Range(format!("cluster chain needs n ≥ 3, got {n}")));
    }
    if n > MAX_QUBITS {
        return Err(Error::Range(format!("dense diagonalization limited to {MAX_QUBITS} qubits")));
    }
    let mut terms = Vec::with_capacity(3 * n);
    for i in 0..n {
        let (prev, next) = ((i + n - 1) % n, (i + 1) % n);
        let mut z = vec![0u8; n];
        z[i] = 3;
        terms.push((1.0, z));
        let mut xx = vec![0u8; n];
        xx[i] = 1;
        xx[next] = 1;
        terms.push((-j1, xx));
        let mut xzx = vec![0u8; n];
        xzx[prev] = 1;
        xzx[i] = 3;
        xzx[next] = 1;
        terms.push((-j2, xzx));
    }
    Ok(terms)
}

/// `H = Σ_i (Z_i − J1 X_i X_{i+1} − J2 X_{i−1} Z_i X_{i+1})` with periodic boundaries.
pub fn cluster_hamiltonian(n: usize, j1: f64, j2: f64) -> Result<CMat> {
    let d = 1usize << n;
    let mut h = CMat::zeros(d, d);
    for (coef, symbols) in cluster_terms(n, j1, j2)? {
        if coef == 0.0 {
            continue;
        }
        let p = PauliIndex::from_symbols(&symbols).string();
        for col in 0..d {
            let (row, v) = p.entry_for_col(col);
            h[(row, col)] += v * coef;
        }
    }
    Ok(h)
}

/// Lowest eigenpair with a deterministic choice inside a degenerate eigenspace.
pub fn ground_state(h: &CMat) -> Result<(f64, CVec)> {
    if !h.is_square() || h.nrows() == 0 {
        return Err(Error::Dimension("ground_state needs a non-empty square matrix".into()));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("Hamiltonian".into()));
    }
    let (vals, vecs) = eigh(h);
    let e0 = vals[0];
    let tol = DEGENERACY_TOL * e0.abs().max(1.0);
    let g = vals.iter().take_while(|&&v| v - e0 <= tol).count();
    let basis = vecs.columns(0, g);
    // Project the lowest-index basis state with nonzero overlap onto the eigenspace.
    let mut state = None;
    for k in 0..h.nrows() {
        let coeffs: Vec<C64> = (0..g).map(|j| basis[(k, j)].conj()).collect();
        let v = CVec::from_fn(h.nrows(), |r, _| (0..g).map(|j| basis[(r, j)] * coeffs[j]).sum());
        let norm = v.norm();
        if norm > 1e-8 {
            state = Some(v.unscale(norm));
            break;
        }
    }
    let mut v = state.ok_or_else(|| Error::Undefined("eigenspace has no support".into()))?;
    fix_phase(&mut v);
    let energy = (v.adjoint() * h * &v)[(0, 0)].re;
    Ok((energy, v))
}

/// Makes the first non-negligible amplitude real and positive.
fn fix_phase(v: &mut CVec) {
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-12).copied() {
        let phase = z / z.norm();
        v.iter_mut().for_each(|a| *a /= phase);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub label: usize,
    /// Polygon vertices in the `(J1, J2)` plane.
    pub polygon: Vec<[f64; 2]>,
}

/// Weights on the four order-parameter scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderWeights {
    pub paramagnet: f64,
    pub ferro: f64,
    pub antiferro: f64,
    pub cluster: f64,
}

impl Default for OrderWeights {
    fn default() -> Self {
        Self { paramagnet: 1.0, ferro: 1.0, antiferro: 1.0, cluster: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Labeler {
    /// Four classes by the signs of `(J1, J2)`: a consistent stand-in task,
    /// not the physical phase diagram.
    #[default]
    Quadrant,
    RegionMap { regions: Vec<Region> },
    /// Argmax over weighted order parameters of the ground state.
    OrderParameter {
        #[serde(default)]
        weights: OrderWeights,
    },
}

impl Labeler {
    pub fn id(&self) -> String {
        match self {
            Labeler::Quadrant => "quadrant".into(),
            Labeler::RegionMap { regions } => format!("region-map/{}", regions.len()),
            Labeler::OrderParameter { .. } => "order-parameter".into(),
        }
    }

    pub fn needs_state(&self) -> bool {
        matches!(self, Labeler::OrderParameter { .. })
    }
}

fn point_in_polygon(p: (f64, f64), poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[(i + n - 1) % n];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

/// Order parameters `(−⟨Z⟩, ⟨X_i X_{i+1}⟩, ⟨X_{i−1} Z_i X_{i+1}⟩)`, averaged over the ring.
pub fn order_parameters(state: &CVec, n: usize) -> Result<[f64; 3]> {
    if state.len() != 1 << n || n < 3 {
        return Err(Error::Dimension("state does not match the chain".into()));
    }
    let expect = |symbols: &[u8]| -> f64 {
        let p = PauliIndex::from_symbols(symbols).string();
        let mut acc = c(0.0, 0.0);
        for col in 0..state.len() {
            let (row, v) = p.entry_for_col(col);
            acc += state[row].conj() * v * state[col];
        }
        acc.re
    };
    let mut out = [0.0; 3];
    for i in 0..n {
        let (prev, next) = ((i + n - 1) % n, (i + 1) % n);
        let mut z = vec![0u8; n];
        z[i] = 3;
        out[0] -= expect(&z);
        let mut xx = vec![0u8; n];
        xx[i] = 1;
        xx[next] = 1;
        out[1] += expect(&xx);
        let mut xzx = vec![0u8; n];
        xzx[prev] = 1;
        xzx[i] = 3;
        xzx[next] = 1;
        out[2] += expect(&xzx);
    }
    Ok(out.map(|v| v / n as f64))
}

/// Class in `1..=4`. The state is only consulted by the order-parameter labeler.
pub fn phase_label(point: CouplingPoint, state: Option<(&CVec, usize)>, labeler: &Labeler) -> Result<usize> {
    match labeler {
        Labeler::Quadrant => Ok(match (point.j1 >= 0.0, point.j2 >= 0.0) {
            (true, true) => 1,
            (false, true) => 2,
            (false, false) => 3,
            (true, false) => 4,
        }),
        Labeler::RegionMap { regions } => regions
            .iter()
            .find(|r| point_in_polygon((point.j1, point.j2), &r.polygon))
            .map(|r| r.label)
            .filter(|l| (1..=4).contains(l))
            .ok_or_else(|| Error::Labeler(format!("({}, {}) lies in no configured region", point.j1, point.j2))),
        Labeler::OrderParameter { weights } => {
            let (psi, n) = state.ok_or_else(|| Error::Labeler("order-parameter labeler needs the ground state".into()))?;
            let [mz, xx, xzx] = order_parameters(psi, n)?;
            let scores = [
                weights.paramagnet * mz,
                weights.ferro * xx,
                weights.antiferro * -xx,
                weights.cluster * xzx.abs(),
            ];
            let best = scores
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (k, &s)| if s > acc.1 { (k, s) } else { acc });
            Ok(best.0 + 1)
        }
    }
}

pub fn labeled_ground_state(n: usize, point: CouplingPoint, labeler: &Labeler) -> Result<LabeledGroundState> {
    let h = cluster_hamiltonian(n, point.j1, point.j2)?;
    let (energy, state) = ground_state(&h)?;
    let label = phase_label(point, Some((&state, n)), labeler)?;
    Ok(LabeledGroundState { point, state, label, energy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub n: usize,
    pub seed: u64,
    pub labeler: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<LabeledGroundState>,
}

/// `count` i.i.d. couplings from `[−4, 4]²`, each from its own derived seed.
pub fn sample_dataset(n: usize, count: usize, seed: u64, labeler: &Labeler) -> Result<Dataset> {
    cluster_terms(n, 0.0, 0.0)?;
    let samples = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, &[i as u64]);
            let point = CouplingPoint {
                j1: rng.gen_range(-COUPLING_RANGE..=COUPLING_RANGE),
                j2: rng.gen_range(-COUPLING_RANGE..=COUPLING_RANGE),
            };
            labeled_ground_state(n, point, labeler)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { header: DatasetHeader { n, seed, labeler: labeler.id(), count }, samples })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    #[serde(rename = "J1")]
    j1: f64,
    #[serde(rename = "J2")]
    j2: f64,
    label: usize,
    energy: f64,
    state: Vec<[f64; 2]>,
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    serde_json::to_writer(&mut out, &ds.header)?;
    out.write_all(b"\n")?;
    for s in &ds.samples {
        let rec = SampleRecord {
            j1: s.point.j1,
            j2: s.point.j2,
            label: s.label,
            energy: s.energy,
            state: vector_to_json(&s.state),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let head = lines.next().ok_or_else(|| Error::Range("empty dataset file".into()))??;
    let header: DatasetHeader = serde_json::from_str(&head)?;
    let mut samples = Vec::with_capacity(header.count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: SampleRecord = serde_json::from_str(&line)?;
        let state = vector_from_json(&r.state);
        if state.len() != 1 << header.n {
            return Err(Error::Dimension("state length does not match header".into()));
        }
        if !(1..=4).contains(&r.label) {
            return Err(Error::Range(format!("label {} out of range", r.label)));
        }
        samples.push(LabeledGroundState { point: CouplingPoint { j1: r.j1, j2: r.j2 }, state, label: r.label, energy: r.energy });
    }
    if samples.len() != header.count {
        return Err(Error::Range(format!("header promises {} samples, file has {}", header.count, samples.len())));
    }
    Ok(Dataset { header, samples })
}
