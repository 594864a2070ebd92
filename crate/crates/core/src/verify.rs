//! Named verification suites over randomly sampled channels.
//!
//! Every suite is a list of [`CheckResult`]s; a check counts samples whose
//! measured value exceeds its bound by more than the check's tolerance.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::random::{random_channel, random_sparse_channel, random_unitary_channel};
use crate::channel::{apply_pm, apply_ptm, channel_to_weight, ChannelRep, KrausSet, WeightKind, WeightMatrix};
use crate::equivariant::{
    build_equivariant_choi, check_equivariance, choi_to_eq_params, isotypic_decompose, random_equivariant_choi,
    GroupFixture, IsotypicDecomposition, UnitaryRep,
};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, identity, random_density, random_unitary, CMat};
use crate::norms::{
    eq_eta, eq_norm_1, eq_norm_bounds, eq_norm_f2, kraus_frobenius_total, norm_report, pm_w11_upper, pm_wf2_upper,
    ptm_entry_upper, ptm_w11_uppers, ptm_wf2_upper, DEFAULT_SPARSITY_TOL,
};
use crate::pacbayes::Formalism;
use crate::perturb::{mc_verify, SamplerConfig, SamplerMode, VerificationReport};
use crate::seed::rng_for;

/// Slack for inequality checks.
pub const BOUND_TOL: f64 = 1e-9;
/// Tolerance for exact identities.
pub const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    PerturbPm,
    PerturbPtm,
    PerturbEq,
    Norms,
    Twirl,
    Equivariance,
    KrausBlind,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::PerturbPm,
        Suite::PerturbPtm,
        Suite::PerturbEq,
        Suite::Norms,
        Suite::Twirl,
        Suite::Equivariance,
        Suite::KrausBlind,
    ];

    fn perturb_formalism(self) -> Option<Formalism> {
        match self {
            Suite::PerturbPm => Some(Formalism::Pm),
            Suite::PerturbPtm => Some(Formalism::Ptm),
            Suite::PerturbEq => Some(Formalism::Eq),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub trials: usize,
    pub seed: u64,
    pub max_qubits: usize,
    pub max_layers: usize,
    /// Sampler mode for the perturbation suites; both modes when absent.
    pub mode: Option<SamplerMode>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { trials: 1000, seed: 0, max_qubits: 2, max_layers: 3, mode: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Largest `value − bound` seen; negative when every sample has slack.
    pub worst_excess: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: &str, tolerance: f64) -> Self {
        Self { name: name.into(), samples: 0, violations: 0, worst_excess: f64::NEG_INFINITY, tolerance }
    }

    fn record(&mut self, value: f64, bound: f64) {
        let excess = value - bound;
        self.samples += 1;
        if !(excess <= self.tolerance) {
            self.violations += 1;
        }
        if excess > self.worst_excess || excess.is_nan() {
            self.worst_excess = excess;
        }
    }

    fn merge(&mut self, other: &CheckResult) {
        self.samples += other.samples;
        self.violations += other.violations;
        if other.worst_excess > self.worst_excess || other.worst_excess.is_nan() {
            self.worst_excess = other.worst_excess;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub perturbation: Vec<VerificationReport>,
    pub violations: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Runs `trials` independent samples and merges their checks by name, in order.
fn sampled<F>(seed: u64, stream: u64, trials: usize, names: &[(&str, f64)], body: F) -> Result<Vec<CheckResult>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, &mut [CheckResult]) -> Result<()> + Sync,
{
    let parts = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, &[stream, t as u64]);
            let mut checks: Vec<CheckResult> = names.iter().map(|(n, tol)| CheckResult::new(n, *tol)).collect();
            body(&mut rng, &mut checks)?;
            Ok(checks)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<CheckResult> = names.iter().map(|(n, tol)| CheckResult::new(n, *tol)).collect();
    for p in &parts {
        for (o, c) in out.iter_mut().zip(p) {
            o.merge(c);
        }
    }
    Ok(out)
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn random_mixed_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> KrausSet {
    let k = rng.gen_range(1..=4);
    let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    let operators = w.iter().map(|p| random_unitary(rng, d).scale((p / total).sqrt())).collect();
    KrausSet { d_in: d, d_out: d, operators }
}

/// Process-matrix weight checks on sparse and generic square channels.
pub fn pm_norm_checks(trials: usize, seed: u64, max_qubits: usize) -> Result<Vec<CheckResult>> {
    let names = [
        ("pm-trace-zero", IDENTITY_TOL),
        ("pm-diagonal-floor", BOUND_TOL),
        ("pm-w11-upper", BOUND_TOL),
        ("pm-wf2-upper", BOUND_TOL),
    ];
    sampled(seed, 1, trials, &names, |rng, checks| {
        let n = rng.gen_range(1..=max_qubits.clamp(1, 2));
        let d = 1usize << n;
        let rank = rng.gen_range(1..=4);
        let k = if rng.gen_bool(0.7) { random_sparse_channel(rng, n) } else { random_channel(rng, d, d, rank) };
        let w = channel_to_weight(&ChannelRep::Kraus(k), WeightKind::Pm)?.w;
        let r = norm_report(&w, DEFAULT_SPARSITY_TOL)?;
        let floor = -1.0 / (d * d) as f64;
        checks[0].record(w.trace().norm(), 0.0);
        let min_diag = w.diagonal().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        checks[1].record(floor - min_diag, 0.0);
        checks[2].record(r.norm_11, pm_w11_upper(r.sparsity, n));
        checks[3].record(r.norm_f2(), pm_wf2_upper(r.sparsity, n));
        Ok(())
    })
}

/// Transfer-matrix weight checks on rectangular, unital and unitary channels.
pub fn ptm_norm_checks(trials: usize, seed: u64, max_qubits: usize) -> Result<Vec<CheckResult>> {
    let names = [
        ("ptm-entry-upper", BOUND_TOL),
        ("ptm-entry-upper-unital", BOUND_TOL),
        ("ptm-w11-sparsity", BOUND_TOL),
        ("ptm-w11-unital", BOUND_TOL),
        ("ptm-wf2-upper", BOUND_TOL),
        ("ptm-wf2-unitary-equality", BOUND_TOL),
    ];
    let q = max_qubits.clamp(1, 2);
    sampled(seed, 2, trials, &names, |rng, checks| {
        let d_in = 1usize << rng.gen_range(1..=q);
        let d_out = 1usize << rng.gen_range(1..=q);
        let rank = rng.gen_range(1..=4);
        let general = random_channel(rng, d_in, d_out, rank);
        let r = ChannelRep::Kraus(general.clone()).to_ptm()?.r;
        checks[0].record(max_abs(&r), ptm_entry_upper(d_in, d_out, false));
        let w = channel_to_weight(&ChannelRep::Kraus(general), WeightKind::Ptm)?.w;
        let rep = norm_report(&w, DEFAULT_SPARSITY_TOL)?;
        checks[2].record(rep.norm_11, ptm_w11_uppers(rep.sparsity, d_in, d_out, false).sparsity_bound);
        checks[4].record(rep.norm_f2(), ptm_wf2_upper(d_in, d_out));

        let d = 1usize << rng.gen_range(1..=q);
        let unital = random_mixed_unitary(rng, d);
        let r = ChannelRep::Kraus(unital.clone()).to_ptm()?.r;
        checks[1].record(max_abs(&r), ptm_entry_upper(d, d, true));
        let w = channel_to_weight(&ChannelRep::Kraus(unital), WeightKind::Ptm)?.w;
        let rep = norm_report(&w, DEFAULT_SPARSITY_TOL)?;
        let bound = ptm_w11_uppers(rep.sparsity, d, d, true).unital_bound.expect("unital branch");
        checks[3].record(rep.norm_11, bound);

        let u = random_unitary_channel(rng, d);
        let f2 = frobenius_sq(&channel_to_weight(&ChannelRep::Kraus(u), WeightKind::Ptm)?.w);
        checks[5].record((f2 - ptm_wf2_upper(d, d)).abs(), 0.0);
        Ok(())
    })
}

struct EqSetup {
    group_order: usize,
    decomp: IsotypicDecomposition,
    action: UnitaryRep,
    rep: UnitaryRep,
    d: usize,
}

/// Builtin `(group, representation)` pairs acting on at most `max_qubits` qubits.
pub const EQ_FIXTURES: [(&str, &str); 5] =
    [("z2", "x"), ("z2", "xx"), ("z3", "phase"), ("z4", "s"), ("s3", "qubit-permutation")];

fn eq_setups(max_qubits: usize) -> Result<Vec<EqSetup>> {
    let mut out = Vec::new();
    for (group, rep) in EQ_FIXTURES {
        let f = GroupFixture::builtin(group)?;
        let r = f.rep(rep)?;
        if r.dim > 1 << max_qubits {
            continue;
        }
        let action = UnitaryRep::choi_action(r, r)?;
        let decomp = isotypic_decompose(&action, &f.irreps, &f.group)?;
        out.push(EqSetup { group_order: f.group.order, decomp, action, rep: r.clone(), d: r.dim });
    }
    Ok(out)
}

/// Equivariant-norm checks on twirled random channels.
pub fn eq_norm_checks(trials: usize, seed: u64, max_qubits: usize) -> Result<Vec<CheckResult>> {
    let setups = eq_setups(max_qubits)?;
    let names = [("eq-fourth-root", BOUND_TOL), ("eq-spectral", BOUND_TOL)];
    sampled(seed, 3, trials, &names, |rng, checks| {
        let s = &setups[rng.gen_range(0..setups.len())];
        let rank = rng.gen_range(1..=4);
        let j = random_equivariant_choi(rng, &s.action, s.d, s.d, rank);
        let (params, _) = choi_to_eq_params(&s.decomp, &j);
        let dims = &s.decomp.irrep_dims;
        let xi: usize = s.decomp.multiplicities.iter().map(|m| m * m).sum();
        let b = eq_norm_bounds(xi, s.group_order, eq_eta(&params.blocks));
        let e1 = eq_norm_1(&params.blocks, dims)?;
        checks[0].record(e1, b.fourth_root_bound_factor * eq_norm_f2(&params.blocks, dims)?.sqrt());
        checks[1].record(e1, b.spectral_bound);
        Ok(())
    })
}

/// Zero weights map every input to the maximally mixed state.
pub fn twirl_checks(trials: usize, seed: u64, max_qubits: usize) -> Result<Vec<CheckResult>> {
    let names = [("pm-zero-weight-output", IDENTITY_TOL), ("ptm-zero-weight-output", IDENTITY_TOL)];
    let q = max_qubits.clamp(1, 3);
    sampled(seed, 4, trials, &names, |rng, checks| {
        let n = rng.gen_range(1..=q);
        let d = 1usize << n;
        let rho = random_density(rng, d);
        let mixed = identity(d).scale(1.0 / d as f64);
        let out = apply_pm(&WeightMatrix::zeros(WeightKind::Pm, d, d)?, &rho)?;
        checks[0].record(max_abs(&(out - &mixed)), 0.0);
        let d_out = 1usize << rng.gen_range(1..=q);
        let out = apply_ptm(&WeightMatrix::zeros(WeightKind::Ptm, d, d_out)?, &rho)?;
        checks[1].record(max_abs(&(out - identity(d_out).scale(1.0 / d_out as f64))), 0.0);
        Ok(())
    })
}

/// Channels assembled from irrep blocks commute with the group action.
pub fn equivariance_checks(trials: usize, seed: u64, max_qubits: usize) -> Result<Vec<CheckResult>> {
    let setups = eq_setups(max_qubits.max(3))?;
    let names = [("eq-assembled-commutes", BOUND_TOL), ("eq-dimension-count", 0.0)];
    sampled(seed, 5, trials, &names, |rng, checks| {
        let s = &setups[rng.gen_range(0..setups.len())];
        let rank = rng.gen_range(1..=4);
        let j = random_equivariant_choi(rng, &s.action, s.d, s.d, rank);
        let (params, _) = choi_to_eq_params(&s.decomp, &j);
        let rebuilt = build_equivariant_choi(&s.decomp, &params, true)?;
        checks[0].record(check_equivariance(&rebuilt, &s.rep, &s.rep)?, 0.0);
        let count: usize = s.decomp.irrep_dims.iter().zip(&s.decomp.multiplicities).map(|(d, m)| d * m).sum();
        checks[1].record((count as f64 - s.action.dim as f64).abs(), 0.0);
        Ok(())
    })
}

/// `Σ_i ‖K_i‖_F² = d_in` for every sampled channel.
pub fn kraus_blind_checks(trials: usize, seed: u64, max_qubits: usize) -> Result<Vec<CheckResult>> {
    let names = [("kraus-frobenius-total", IDENTITY_TOL)];
    let q = max_qubits.clamp(1, 3);
    sampled(seed, 6, trials, &names, |rng, checks| {
        let d_in = 1usize << rng.gen_range(1..=q);
        let d_out = 1usize << rng.gen_range(1..=q);
        let rank = rng.gen_range(1..=8);
        let k = random_channel(rng, d_in, d_out, rank);
        checks[0].record((kraus_frobenius_total(&k) - d_in as f64).abs(), 0.0);
        Ok(())
    })
}

pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<SuiteReport> {
    if cfg.trials == 0 {
        return Err(Error::Range("trials must be at least 1".into()));
    }
    let (checks, perturbation) = match suite.perturb_formalism() {
        Some(formalism) => {
            let modes = match cfg.mode {
                Some(m) => vec![m],
                None => vec![SamplerMode::CptpPair, SamplerMode::Free],
            };
            let reports = modes
                .into_iter()
                .map(|mode| {
                    mc_verify(&SamplerConfig {
                        formalism,
                        mode,
                        trials: cfg.trials,
                        seed: cfg.seed,
                        max_qubits: cfg.max_qubits,
                        max_layers: cfg.max_layers,
                        dims: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (Vec::new(), reports)
        }
        None => {
            let checks = match suite {
                Suite::Norms => {
                    let mut all = pm_norm_checks(cfg.trials, cfg.seed, cfg.max_qubits)?;
                    all.extend(ptm_norm_checks(cfg.trials, cfg.seed, cfg.max_qubits)?);
                    all.extend(eq_norm_checks(cfg.trials, cfg.seed, cfg.max_qubits)?);
                    all
                }
                Suite::Twirl => twirl_checks(cfg.trials, cfg.seed, cfg.max_qubits)?,
                Suite::Equivariance => equivariance_checks(cfg.trials, cfg.seed, cfg.max_qubits)?,
                Suite::KrausBlind => kraus_blind_checks(cfg.trials, cfg.seed, cfg.max_qubits)?,
                _ => unreachable!("perturbation suites handled above"),
            };
            (checks, Vec::new())
        }
    };
    let violations = checks.iter().map(|c| c.violations).sum::<usize>()
        + perturbation.iter().map(|r| r.violations + r.recursion_violations).sum::<usize>();
    Ok(SuiteReport { suite, seed: cfg.seed, checks, perturbation, violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_small() {
        for suite in Suite::ALL {
            let cfg = SuiteConfig { trials: 40, seed: 3, ..SuiteConfig::default() };
            let rep = run_suite(suite, &cfg).unwrap();
            assert!(rep.passed(), "{suite:?}: {rep:?}");
            assert!(rep.checks.iter().all(|c| c.samples == 40 || c.samples == 0));
        }
    }

    #[test]
    fn check_counts_violations() {
        let mut c = CheckResult::new("x", 0.1);
        c.record(1.0, 1.05);
        c.record(1.2, 1.0);
        c.record(f64::NAN, 1.0);
        assert_eq!((c.samples, c.violations), (3, 2));
        assert!(c.worst_excess.is_nan());
    }

    #[test]
    fn suites_are_deterministic_and_seed_sensitive() {
        let cfg = SuiteConfig { trials: 30, seed: 9, ..SuiteConfig::default() };
        let a = run_suite(Suite::Norms, &cfg).unwrap();
        let b = run_suite(Suite::Norms, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = run_suite(Suite::Norms, &SuiteConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.checks[2].worst_excess, c.checks[2].worst_excess);
        assert!(run_suite(Suite::Twirl, &SuiteConfig { trials: 0, ..SuiteConfig::default() }).is_err());
    }

    #[test]
    fn suite_names_are_kebab_case() {
        assert_eq!(serde_json::to_string(&Suite::KrausBlind).unwrap(), "\"kraus-blind\"");
        assert_eq!(serde_json::from_str::<Suite>("\"perturb-ptm\"").unwrap(), Suite::PerturbPtm);
    }
}
