//! Perturbation bounds for layered channel models and a Monte-Carlo harness
//! that checks simulated output deviations against them.
//!
//! All three formalisms share one template: with `Δ_j` the trace distance of
//! the perturbed and unperturbed states after layer `j`,
//! `Δ_{j+1} ≤ ν ‖U_{j+1}‖ + μ (‖W_{j+1}‖ + ‖U_{j+1}‖) Δ_j`, which unrolls to
//! `e Σ_j ν_j ‖U_j‖ Π_{ℓ>j} μ_ℓ ‖W_ℓ‖` under `‖U_j‖ ≤ ‖W_j‖/L`.

use std::f64::consts::E;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::random::{random_channel, random_sparse_channel};
use crate::channel::{channel_to_weight, ChannelRep, Choi, WeightKind, WeightMatrix};
use crate::equivariant::{
    build_equivariant_choi, choi_to_eq_params, isotypic_decompose, random_equivariant_choi,
    remove_output_trace, EqChannelParams, GroupFixture, IsotypicDecomposition, UnitaryRep,
};
use crate::error::{Error, Result};
use crate::linalg::{random_density, random_hermitian, random_pure_state, trace_norm, CMat};
use crate::norms::{eq_norm_1, norm_11};
use crate::pacbayes::Formalism;
use crate::seed::rng_for;

/// Slack allowed when comparing an actual deviation against its bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Per-layer weights with perturbations of matching shape.
#[derive(Debug, Clone)]
pub struct PerturbationPair {
    pub weights: Vec<WeightMatrix>,
    pub perturbations: Vec<CMat>,
}

impl PerturbationPair {
    pub fn new(weights: Vec<WeightMatrix>, perturbations: Vec<CMat>) -> Result<Self> {
        if weights.is_empty() || weights.len() != perturbations.len() {
            return Err(Error::Dimension("need one perturbation per layer".into()));
        }
        for (j, (w, u)) in weights.iter().zip(&perturbations).enumerate() {
            if w.w.shape() != u.shape() {
                return Err(Error::Dimension(format!("perturbation {j} has the wrong shape")));
            }
        }
        for j in 1..weights.len() {
            if weights[j].d_in != weights[j - 1].d_out {
                return Err(Error::Dimension(format!("layer {j} does not chain")));
            }
        }
        Ok(Self { weights, perturbations })
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn w_norms(&self) -> Vec<f64> {
        self.weights.iter().map(|w| norm_11(&w.w)).collect()
    }

    pub fn u_norms(&self) -> Vec<f64> {
        self.perturbations.iter().map(norm_11).collect()
    }

    /// `‖U_j‖_{1,1} ≤ ‖W_j‖_{1,1}/L` for every layer.
    pub fn scale_valid(&self) -> bool {
        scale_ok(&self.u_norms(), &self.w_norms())
    }

    fn check_scale(&self) -> Result<()> {
        check_scale(&self.u_norms(), &self.w_norms())
    }

    pub fn unperturbed_chois(&self) -> Result<Vec<Choi>> {
        self.weights.iter().map(|w| w.to_rep()?.to_choi()).collect()
    }

    pub fn perturbed_chois(&self) -> Result<Vec<Choi>> {
        self.weights
            .iter()
            .zip(&self.perturbations)
            .map(|(w, u)| w.shifted(u)?.to_rep()?.to_choi())
            .collect()
    }

    fn kind(&self) -> WeightKind {
        self.weights[0].kind
    }
}

/// Equivariant layers sharing one decomposition, perturbed block by block.
#[derive(Debug, Clone)]
pub struct EqPerturbationPair {
    pub decomp: IsotypicDecomposition,
    pub weights: Vec<EqChannelParams>,
    pub perturbations: Vec<Vec<CMat>>,
}

impl EqPerturbationPair {
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn w_norms(&self) -> Result<Vec<f64>> {
        self.weights.iter().map(|w| w.eq_norm_1(&self.decomp)).collect()
    }

    pub fn u_norms(&self) -> Result<Vec<f64>> {
        self.perturbations
            .iter()
            .map(|u| eq_norm_1(u, &self.decomp.irrep_dims))
            .collect()
    }

    /// `‖U_{j,λ}‖_1 ≤ ‖W_{j,λ}‖_1 / L` for every layer and irrep.
    pub fn scale_valid(&self) -> bool {
        let l = self.depth() as f64;
        self.weights.iter().zip(&self.perturbations).all(|(w, u)| {
            w.blocks.iter().zip(u).all(|(wb, ub)| trace_norm(ub) <= trace_norm(wb) / l * (1.0 + 1e-12) + 1e-15)
        })
    }

    pub fn unperturbed_chois(&self) -> Result<Vec<Choi>> {
        self.weights.iter().map(|w| build_equivariant_choi(&self.decomp, w, false)).collect()
    }

    pub fn perturbed_chois(&self) -> Result<Vec<Choi>> {
        self.weights
            .iter()
            .zip(&self.perturbations)
            .map(|(w, u)| {
                let blocks = w.blocks.iter().zip(u).map(|(a, b)| a + b).collect();
                let shifted = EqChannelParams { blocks, d_in: w.d_in, d_out: w.d_out };
                build_equivariant_choi(&self.decomp, &shifted, false)
            })
            .collect()
    }
}

fn scale_ok(u: &[f64], w: &[f64]) -> bool {
    let l = w.len() as f64;
    u.iter().zip(w).all(|(&uj, &wj)| uj <= wj / l * (1.0 + 1e-12) + 1e-15)
}

fn check_scale(u: &[f64], w: &[f64]) -> Result<()> {
    let l = w.len() as f64;
    for (j, (&uj, &wj)) in u.iter().zip(w).enumerate() {
        if uj > wj / l * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::ScaleCondition {
                layer: j,
                detail: format!("‖U‖ = {uj:.6e} exceeds ‖W‖/L = {:.6e}", wj / l),
            });
        }
    }
    Ok(())
}

/// `e Σ_j ν_j u_j Π_{ℓ>j} μ_ℓ w_ℓ` for caller-supplied per-layer constants.
pub fn template_bound(u: &[f64], w: &[f64], nu: &[f64], mu: &[f64]) -> f64 {
    let l = u.len();
    let mut total = 0.0;
    for j in 0..l {
        let tail: f64 = (j + 1..l).map(|k| mu[k] * w[k]).product();
        total += nu[j] * u[j] * tail;
    }
    E * total
}

/// Per-layer `(μ, ν)` for a formalism and dimension chain.
pub fn recursion_constants(formalism: Formalism, dims: &[(usize, usize)]) -> Vec<(f64, f64)> {
    dims.iter()
        .map(|&(di, dout)| match formalism {
            Formalism::Ptm => {
                let r = (dout as f64 / di as f64).sqrt();
                (r, r)
            }
            Formalism::Pm | Formalism::Eq => (1.0, 1.0),
        })
        .collect()
}

pub fn pm_deviation_bound(pair: &PerturbationPair) -> Result<f64> {
    if pair.kind() != WeightKind::Pm {
        return Err(Error::Representation("PM bound needs PM weights".into()));
    }
    pair.check_scale()?;
    let l = pair.depth();
    Ok(template_bound(&pair.u_norms(), &pair.w_norms(), &vec![1.0; l], &vec![1.0; l]))
}

pub fn ptm_deviation_bound(pair: &PerturbationPair) -> Result<f64> {
    if pair.kind() != WeightKind::Ptm {
        return Err(Error::Representation("PTM bound needs PTM weights".into()));
    }
    pair.check_scale()?;
    let d_out_last = pair.weights.last().expect("nonempty").d_out as f64;
    let u = pair.u_norms();
    let w = pair.w_norms();
    let l = pair.depth();
    let mut total = 0.0;
    for j in 0..l {
        let tail: f64 = w[j + 1..].iter().product();
        total += u[j] * tail / (pair.weights[j].d_in as f64).sqrt();
    }
    Ok(E * d_out_last.sqrt() * total)
}

pub fn eq_deviation_bound(pair: &EqPerturbationPair) -> Result<f64> {
    if !pair.scale_valid() {
        return Err(Error::ScaleCondition {
            layer: 0,
            detail: "some block violates ‖U_λ‖_1 ≤ ‖W_λ‖_1 / L".into(),
        });
    }
    let l = pair.depth();
    Ok(template_bound(&pair.u_norms()?, &pair.w_norms()?, &vec![1.0; l], &vec![1.0; l]))
}

fn run_chain(chois: &[Choi], rho: &CMat) -> Result<Vec<CMat>> {
    let mut states = Vec::with_capacity(chois.len());
    let mut cur = rho.clone();
    for j in chois {
        cur = j.apply(&cur)?;
        states.push(cur.clone());
    }
    Ok(states)
}

/// `‖f_{w+u}(ρ) − f_w(ρ)‖_∞` for computational-basis outcome probabilities.
pub fn actual_deviation(unperturbed: &[Choi], perturbed: &[Choi], rho_in: &CMat) -> Result<f64> {
    let a = run_chain(unperturbed, rho_in)?;
    let b = run_chain(perturbed, rho_in)?;
    let (fa, fb) = (a.last().expect("nonempty"), b.last().expect("nonempty"));
    Ok((0..fa.nrows()).map(|k| (fa[(k, k)] - fb[(k, k)]).norm()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionStep {
    pub delta: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Trace distances after each layer, with the recursion right-hand side.
pub fn recursion_check(
    unperturbed: &[Choi],
    perturbed: &[Choi],
    u_norms: &[f64],
    w_norms: &[f64],
    constants: &[(f64, f64)],
    rho_in: &CMat,
) -> Result<Vec<RecursionStep>> {
    let a = run_chain(unperturbed, rho_in)?;
    let b = run_chain(perturbed, rho_in)?;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(a.len());
    for j in 0..a.len() {
        let delta = trace_norm(&(&b[j] - &a[j]));
        let (mu, nu) = constants[j];
        let rhs = nu * u_norms[j] + mu * (w_norms[j] + u_norms[j]) * prev;
        out.push(RecursionStep { delta, rhs, holds: delta <= rhs + BOUND_SLACK });
        prev = delta;
    }
    Ok(out)
}

/// Unrolled recursion `Σ_j ν_j u_j Π_{ℓ>j} μ_ℓ (w_ℓ + u_ℓ)`.
pub fn unrolled_recursion(u: &[f64], w: &[f64], constants: &[(f64, f64)]) -> f64 {
    let l = u.len();
    (0..l)
        .map(|j| {
            let tail: f64 = (j + 1..l).map(|k| constants[k].0 * (w[k] + u[k])).product();
            constants[j].1 * u[j] * tail
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// Both endpoints are CPTP: `U` is a scaled difference of two channels.
    CptpPair,
    /// Random Hermitian-preserving, trace-annihilating directions.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub formalism: Formalism,
    pub mode: SamplerMode,
    pub trials: usize,
    pub seed: u64,
    /// Largest register per layer, in qubits.
    #[serde(default = "default_max_qubits")]
    pub max_qubits: usize,
    #[serde(default = "default_max_layers")]
    pub max_layers: usize,
    /// Fixed layer dimension chain (`L + 1` entries); drawn per trial when absent.
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
}

fn default_max_qubits() -> usize {
    2
}

fn default_max_layers() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub formalism: Formalism,
    pub mode: SamplerMode,
    pub trials: usize,
    pub violations: usize,
    pub recursion_violations: usize,
    pub max_ratio: f64,
    /// Counts of `actual/bound` in ten bins over `[0, 1)` plus one overflow bin.
    pub histogram: Vec<usize>,
    pub seed: u64,
}

struct TrialOutcome {
    actual: f64,
    bound: f64,
    recursion_ok: bool,
}

const MAX_ATTEMPTS: usize = 64;

pub fn mc_verify(cfg: &SamplerConfig) -> Result<VerificationReport> {
    if cfg.trials == 0 {
        return Err(Error::Range("trials must be at least 1".into()));
    }
    if cfg.max_qubits == 0 || cfg.max_layers == 0 {
        return Err(Error::Range("max_qubits and max_layers must be positive".into()));
    }
    if let Some(d) = &cfg.dims {
        if d.len() < 2 {
            return Err(Error::Range("dims needs at least two entries".into()));
        }
        if cfg.formalism != Formalism::Ptm && d.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Representation("PM and EQ layers must be square".into()));
        }
    }
    let eq_setups = if cfg.formalism == Formalism::Eq { eq_setups(cfg.max_qubits)? } else { Vec::new() };
    let outcomes: Vec<Result<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(cfg.seed, &[t as u64]);
            for _ in 0..MAX_ATTEMPTS {
                if let Some(o) = run_trial(&mut rng, cfg, &eq_setups)? {
                    return Ok(o);
                }
            }
            Err(Error::SamplerExhausted(MAX_ATTEMPTS))
        })
        .collect();
    let mut report = VerificationReport {
        formalism: cfg.formalism,
        mode: cfg.mode,
        trials: cfg.trials,
        violations: 0,
        recursion_violations: 0,
        max_ratio: 0.0,
        histogram: vec![0; 11],
        seed: cfg.seed,
    };
    for o in outcomes {
        let o = o?;
        if o.actual > o.bound + BOUND_SLACK {
            report.violations += 1;
        }
        if !o.recursion_ok {
            report.recursion_violations += 1;
        }
        let ratio = if o.bound > 0.0 { o.actual / o.bound } else if o.actual > BOUND_SLACK { f64::INFINITY } else { 0.0 };
        report.max_ratio = report.max_ratio.max(ratio);
        let bin = if ratio >= 1.0 { 10 } else { (ratio * 10.0) as usize };
        report.histogram[bin] += 1;
    }
    Ok(report)
}

struct EqSetup {
    decomp: IsotypicDecomposition,
    action: UnitaryRep,
    d: usize,
}

fn eq_setups(max_qubits: usize) -> Result<Vec<EqSetup>> {
    let mut out = Vec::new();
    for (group, rep) in [("z2", "x"), ("z2", "xx"), ("z3", "phase"), ("z4", "s"), ("s3", "qubit-permutation")] {
        let f = GroupFixture::builtin(group)?;
        let r = f.rep(rep)?;
        if r.dim > 1 << max_qubits {
            continue;
        }
        let action = UnitaryRep::choi_action(r, r)?;
        let decomp = isotypic_decompose(&action, &f.irreps, &f.group)?;
        out.push(EqSetup { decomp, action, d: r.dim });
    }
    Ok(out)
}

fn sample_chain<R: Rng + ?Sized>(rng: &mut R, cfg: &SamplerConfig) -> Vec<usize> {
    if let Some(d) = &cfg.dims {
        return d.clone();
    }
    let l = rng.gen_range(1..=cfg.max_layers);
    match cfg.formalism {
        Formalism::Ptm => (0..=l).map(|_| 1usize << rng.gen_range(1..=cfg.max_qubits)).collect(),
        _ => vec![1usize << rng.gen_range(1..=cfg.max_qubits); l + 1],
    }
}

fn sample_input<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    if rng.gen_bool(0.5) {
        random_pure_state(rng, d)
    } else {
        random_density(rng, d)
    }
}

fn sample_channel<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize) -> ChannelRep {
    if d_in == d_out && rng.gen_bool(0.3) {
        random_sparse_channel(rng, d_in.trailing_zeros() as usize).into()
    } else {
        let rank = rng.gen_range(1..=4);
        random_channel(rng, d_in, d_out, rank).into()
    }
}

/// Hermiticity-preserving, trace-annihilating random direction for one layer.
fn free_direction<R: Rng + ?Sized>(rng: &mut R, kind: WeightKind, d_in: usize, d_out: usize) -> Result<CMat> {
    let j = remove_output_trace(&random_hermitian(rng, d_in * d_out), d_in, d_out);
    let rep = ChannelRep::Choi(Choi::new(d_in, d_out, j)?);
    Ok(match kind {
        WeightKind::Pm => rep.to_pm()?.chi,
        WeightKind::Ptm => rep.to_ptm()?.r,
    })
}

fn run_trial<R: Rng + ?Sized>(rng: &mut R, cfg: &SamplerConfig, eq: &[EqSetup]) -> Result<Option<TrialOutcome>> {
    if cfg.formalism == Formalism::Eq {
        return run_eq_trial(rng, cfg, eq);
    }
    let kind = if cfg.formalism == Formalism::Pm { WeightKind::Pm } else { WeightKind::Ptm };
    let chain = sample_chain(rng, cfg);
    let l = chain.len() - 1;
    let mut weights = Vec::with_capacity(l);
    let mut perturbations = Vec::with_capacity(l);
    for j in 0..l {
        let (di, dout) = (chain[j], chain[j + 1]);
        let base = sample_channel(rng, di, dout);
        let w = channel_to_weight(&base, kind)?;
        let w11 = norm_11(&w.w);
        if w11 == 0.0 {
            return Ok(None);
        }
        let dir = match cfg.mode {
            SamplerMode::CptpPair => {
                let other = channel_to_weight(&sample_channel(rng, di, dout), kind)?;
                &other.w - &w.w
            }
            SamplerMode::Free => free_direction(rng, kind, di, dout)?,
        };
        let dn = norm_11(&dir);
        if dn == 0.0 {
            return Ok(None);
        }
        // Never stretch a CPTP difference beyond the second endpoint.
        let cap = if cfg.mode == SamplerMode::CptpPair { 1.0 } else { f64::INFINITY };
        let s = rng.gen_range(0.0..=1.0) * (w11 / (l as f64 * dn)).min(cap);
        perturbations.push(dir.scale(s));
        weights.push(w);
    }
    let pair = PerturbationPair::new(weights, perturbations)?;
    let bound = match kind {
        WeightKind::Pm => pm_deviation_bound(&pair)?,
        WeightKind::Ptm => ptm_deviation_bound(&pair)?,
    };
    let rho = sample_input(rng, chain[0]);
    let a = pair.unperturbed_chois()?;
    let b = pair.perturbed_chois()?;
    let actual = actual_deviation(&a, &b, &rho)?;
    let dims: Vec<(usize, usize)> = pair.weights.iter().map(|w| (w.d_in, w.d_out)).collect();
    let steps = recursion_check(&a, &b, &pair.u_norms(), &pair.w_norms(), &recursion_constants(cfg.formalism, &dims), &rho)?;
    Ok(Some(TrialOutcome { actual, bound, recursion_ok: steps.iter().all(|s| s.holds) }))
}

fn run_eq_trial<R: Rng + ?Sized>(rng: &mut R, cfg: &SamplerConfig, eq: &[EqSetup]) -> Result<Option<TrialOutcome>> {
    if eq.is_empty() {
        return Err(Error::Representation("no equivariant fixture fits max_qubits".into()));
    }
    let setup = &eq[rng.gen_range(0..eq.len())];
    let l = cfg.dims.as_ref().map_or_else(|| rng.gen_range(1..=cfg.max_layers), |d| d.len() - 1);
    let d = setup.d;
    let mut weights = Vec::with_capacity(l);
    let mut perturbations = Vec::with_capacity(l);
    for _ in 0..l {
        let rank = rng.gen_range(1..=4);
        let j = random_equivariant_choi(rng, &setup.action, d, d, rank);
        let (w, _) = choi_to_eq_params(&setup.decomp, &j);
        let dir: Vec<CMat> = match cfg.mode {
            SamplerMode::CptpPair => {
                let rank2 = rng.gen_range(1..=4);
                let j2 = random_equivariant_choi(rng, &setup.action, d, d, rank2);
                let (w2, _) = choi_to_eq_params(&setup.decomp, &j2);
                w2.blocks.iter().zip(&w.blocks).map(|(a, b)| a - b).collect()
            }
            SamplerMode::Free => {
                let raw = crate::equivariant::hermitian_blocks(rng, &setup.decomp);
                let assembled = setup.decomp.assemble(&raw)?;
                let projected = remove_output_trace(&assembled, d, d);
                setup.decomp.extract_blocks(&projected).0
            }
        };
        let mut s = if cfg.mode == SamplerMode::CptpPair { 1.0 } else { f64::INFINITY };
        for (wb, ub) in w.blocks.iter().zip(&dir) {
            let un = trace_norm(ub);
            if un > 1e-14 {
                s = s.min(trace_norm(wb) / (l as f64 * un));
            }
        }
        if !s.is_finite() || s == 0.0 {
            return Ok(None);
        }
        let s = s * rng.gen_range(0.0..=1.0) * (1.0 - 1e-9);
        perturbations.push(dir.iter().map(|b| b.scale(s)).collect());
        weights.push(w);
    }
    let pair = EqPerturbationPair { decomp: setup.decomp.clone(), weights, perturbations };
    let bound = eq_deviation_bound(&pair)?;
    let rho = sample_input(rng, d);
    let a = pair.unperturbed_chois()?;
    let b = pair.perturbed_chois()?;
    let actual = actual_deviation(&a, &b, &rho)?;
    let constants = vec![(1.0, 1.0); l];
    let steps = recursion_check(&a, &b, &pair.u_norms()?, &pair.w_norms()?, &constants, &rho)?;
    Ok(Some(TrialOutcome { actual, bound, recursion_ok: steps.iter().all(|s| s.holds) }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::pauli::PauliIndex;
    use crate::channel::KrausSet;
    use crate::linalg::{c, trace, ZERO};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn weight_with_norm(kind: WeightKind, d_in: usize, d_out: usize, norm: f64) -> WeightMatrix {
        let mut w = WeightMatrix::zeros(kind, d_in, d_out).unwrap();
        w.w[(1, 1)] = c(norm, 0.0);
        w
    }

    #[test]
    fn pm_closed_form_examples() {
        let w = weight_with_norm(WeightKind::Pm, 2, 2, 0.5);
        let mut u = CMat::zeros(4, 4);
        u[(2, 2)] = c(0.1, 0.0);
        let pair = PerturbationPair::new(vec![w.clone()], vec![u]).unwrap();
        assert!((pm_deviation_bound(&pair).unwrap() - E * 0.1).abs() < 1e-15);

        let w2 = weight_with_norm(WeightKind::Pm, 2, 2, 0.3);
        let mut u1 = CMat::zeros(4, 4);
        u1[(0, 0)] = c(0.1, 0.0);
        let mut u2 = CMat::zeros(4, 4);
        u2[(0, 1)] = c(0.05, 0.0);
        let w1 = weight_with_norm(WeightKind::Pm, 2, 2, 0.5);
        let pair = PerturbationPair::new(vec![w1, w2], vec![u1, u2]).unwrap();
        assert!((pm_deviation_bound(&pair).unwrap() - E * 0.08).abs() < 1e-15);

        let pair = PerturbationPair::new(vec![w], vec![CMat::zeros(4, 4)]).unwrap();
        assert_eq!(pm_deviation_bound(&pair).unwrap(), 0.0);
    }

    #[test]
    fn scale_condition_enforced() {
        let w = weight_with_norm(WeightKind::Pm, 2, 2, 0.1);
        let mut u = CMat::zeros(4, 4);
        u[(0, 0)] = c(0.2, 0.0);
        let pair = PerturbationPair::new(vec![w], vec![u]).unwrap();
        assert!(!pair.scale_valid());
        assert!(matches!(pm_deviation_bound(&pair), Err(Error::ScaleCondition { .. })));
    }

    #[test]
    fn ptm_closed_form_examples() {
        let w = weight_with_norm(WeightKind::Ptm, 2, 2, 1.0);
        let mut u = CMat::zeros(4, 4);
        u[(1, 1)] = c(0.1, 0.0);
        let pair = PerturbationPair::new(vec![w], vec![u]).unwrap();
        assert!((ptm_deviation_bound(&pair).unwrap() - E * 0.1).abs() < 1e-15);

        let w1 = weight_with_norm(WeightKind::Ptm, 4, 2, 1.0);
        let w2 = weight_with_norm(WeightKind::Ptm, 2, 2, 0.5);
        let mut u1 = CMat::zeros(4, 16);
        u1[(1, 2)] = c(0.2, 0.0);
        let mut u2 = CMat::zeros(4, 4);
        u2[(2, 2)] = c(0.1, 0.0);
        let pair = PerturbationPair::new(vec![w1, w2], vec![u1, u2]).unwrap();
        let expected = E * 2f64.sqrt() * (0.2 * 0.5 / 2.0 + 0.1 / 2f64.sqrt());
        assert!((ptm_deviation_bound(&pair).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn eq_closed_form_examples() {
        assert!((template_bound(&[0.05], &[0.1], &[1.0], &[1.0]) - E * 0.05).abs() < 1e-15);
        let v = template_bound(&[0.1, 0.2], &[1.0, 0.4], &[1.0; 2], &[1.0; 2]);
        assert!((v - E * (0.1 * 0.4 + 0.2)).abs() < 1e-15);
        assert_eq!(template_bound(&[0.0, 0.0], &[1.0, 2.0], &[1.0; 2], &[1.0; 2]), 0.0);
    }

    #[test]
    fn bounds_are_linear_in_perturbation() {
        let w = weight_with_norm(WeightKind::Pm, 2, 2, 0.6);
        let mut u = CMat::zeros(4, 4);
        u[(0, 3)] = c(0.1, 0.05);
        let pair = PerturbationPair::new(vec![w.clone(), w.clone()], vec![u.clone(), u.clone()]).unwrap();
        let b = pm_deviation_bound(&pair).unwrap();
        for s in [0.25, 0.5, 1.0] {
            let p2 = PerturbationPair::new(vec![w.clone(), w.clone()], vec![u.scale(s), u.scale(s)]).unwrap();
            assert!((pm_deviation_bound(&p2).unwrap() - s * b).abs() < 1e-15);
        }
    }

    #[test]
    fn planted_single_entry_deviation() {
        // Identity channel with U = ε (|X⟩⟨X| − |I⟩⟨I|): output shifts by ε(XρX − ρ).
        let w = channel_to_weight(&KrausSet::identity(2).into(), WeightKind::Pm).unwrap();
        let eps = 0.1;
        let mut u = CMat::zeros(4, 4);
        u[(0, 0)] = c(-eps, 0.0);
        let x = PauliIndex::from_symbols(&[1]).code;
        u[(x, x)] = c(eps, 0.0);
        let pair = PerturbationPair::new(vec![w], vec![u]).unwrap();
        let mut rho = CMat::zeros(2, 2);
        rho[(0, 0)] = c(1.0, 0.0);
        let dev = actual_deviation(&pair.unperturbed_chois().unwrap(), &pair.perturbed_chois().unwrap(), &rho).unwrap();
        // Hand evaluation: Tr(|0⟩⟨0| ε(XρX − ρ)) = −ε.
        assert!((dev - eps).abs() < 1e-14);
        assert!(dev <= pm_deviation_bound(&pair).unwrap());
    }

    #[test]
    fn recursion_unrolls_to_closed_form() {
        let u = [0.02, 0.05, 0.01];
        let w = [0.3, 0.6, 0.9];
        let consts = vec![(1.0, 1.0); 3];
        let unrolled = unrolled_recursion(&u, &w, &consts);
        let closed = template_bound(&u, &w, &[1.0; 3], &[1.0; 3]);
        assert!(unrolled <= closed);
        // Replacing w + u by w (1 + 1/L) and (1 + 1/L)^L by e gives the closed form exactly.
        let l = 3.0f64;
        let inflated: f64 = (0..3)
            .map(|j| u[j] * (j + 1..3).map(|k| w[k] * (1.0 + 1.0 / l)).product::<f64>() / (1.0 + 1.0 / l).powi((2 - j) as i32))
            .sum();
        assert!((E * inflated - closed).abs() < 1e-12);
    }

    #[test]
    fn zero_perturbation_gives_zero_deltas() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let ws: Vec<WeightMatrix> = (0..3)
            .map(|_| channel_to_weight(&random_channel(&mut rng, 2, 2, 2).into(), WeightKind::Pm).unwrap())
            .collect();
        let us = vec![CMat::zeros(4, 4); 3];
        let pair = PerturbationPair::new(ws, us).unwrap();
        let rho = random_density(&mut rng, 2);
        let steps = recursion_check(
            &pair.unperturbed_chois().unwrap(),
            &pair.perturbed_chois().unwrap(),
            &pair.u_norms(),
            &pair.w_norms(),
            &[(1.0, 1.0); 3],
            &rho,
        )
        .unwrap();
        assert!(steps.iter().all(|s| s.delta < 1e-14 && s.holds));
    }

    #[test]
    fn free_directions_are_trace_annihilating() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let u = free_direction(&mut rng, WeightKind::Ptm, 4, 2).unwrap();
        for b in 0..16 {
            assert!(u[(0, b)].norm() < 1e-12);
        }
        assert!(u.iter().all(|z| z.im.abs() < 1e-12));
        let u = free_direction(&mut rng, WeightKind::Pm, 2, 2).unwrap();
        let rep = ChannelRep::Pm(crate::channel::ProcessMatrix::new(1, u).unwrap());
        let rho = random_density(&mut rng, 2);
        assert!(trace(&rep.apply(&rho).unwrap()).norm() < 1e-12);
        let _ = ZERO;
    }

    #[test]
    fn small_monte_carlo_runs_clean() {
        for formalism in [Formalism::Pm, Formalism::Ptm, Formalism::Eq] {
            for mode in [SamplerMode::CptpPair, SamplerMode::Free] {
                let cfg = SamplerConfig { formalism, mode, trials: 200, seed: 3, max_qubits: 2, max_layers: 3, dims: None };
                let r = mc_verify(&cfg).unwrap();
                assert_eq!(r.violations, 0, "{formalism:?} {mode:?}");
                assert_eq!(r.recursion_violations, 0, "{formalism:?} {mode:?}");
                assert!(r.max_ratio <= 1.0);
                assert_eq!(r.histogram.iter().sum::<usize>(), 200);
            }
        }
    }

    #[test]
    fn empty_run_rejected_and_results_deterministic() {
        let mut cfg = SamplerConfig {
            formalism: Formalism::Pm,
            mode: SamplerMode::Free,
            trials: 0,
            seed: 1,
            max_qubits: 1,
            max_layers: 2,
            dims: None,
        };
        assert!(mc_verify(&cfg).is_err());
        cfg.trials = 20;
        assert_eq!(mc_verify(&cfg).unwrap(), mc_verify(&cfg).unwrap());
    }
}
