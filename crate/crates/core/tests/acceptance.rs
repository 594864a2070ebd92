//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use qpac_core::channel::random::random_channel;
use qpac_core::channel::{apply_pm, WeightKind, WeightMatrix};
use qpac_core::clusterdata::{
    cluster_hamiltonian, ground_state, sample_dataset, write_dataset, Labeler,
};
use qpac_core::equivariant::{
    build_equivariant_choi, check_equivariance, choi_to_eq_params, isotypic_decompose, random_equivariant_choi,
    GroupFixture, UnitaryRep,
};
use qpac_core::linalg::{c, identity, kron, random_density, CMat};
use qpac_core::models::{double_dynamic_channel, pm_purity, DynamicOpParams, ModelSpec};
use qpac_core::pacbayes::{gap_and_correlation, tail_threshold, Formalism};
use qpac_core::perturb::{mc_verify, SamplerConfig, SamplerMode};
use qpac_core::seed::{derive_seed, rng_for};
use qpac_core::train::{evaluate_report, train_run, Batch, TrainConfig};
use qpac_core::verify::{eq_norm_checks, kraus_blind_checks, pm_norm_checks, ptm_norm_checks, CheckResult};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn checks_pass(checks: &[CheckResult]) -> (bool, String) {
    let pass = checks.iter().all(|c| c.violations == 0 && c.samples > 0);
    let detail = checks
        .iter()
        .map(|c| format!("{} {}/{} worst {:+.1e}", c.name, c.violations, c.samples, c.worst_excess))
        .collect::<Vec<_>>()
        .join("; ");
    (pass, detail)
}

fn c1_baseline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        let d = 1usize << n;
        let w = WeightMatrix::zeros(WeightKind::Pm, d, d).unwrap();
        let mixed = identity(d).scale(1.0 / d as f64);
        for _ in 0..100 {
            let out = apply_pm(&w, &random_density(&mut rng, d)).unwrap();
            worst = worst.max(max_abs(&(out - &mixed)));
        }
    }
    outcome(worst < 1e-10, format!("max deviation {worst:.2e} over 300 inputs"))
}

fn c2_representations() -> Outcome {
    let worst = (0..1000u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(102, &[t]);
            let d_in = 1usize << rng.gen_range(1..=2);
            let d_out = 1usize << rng.gen_range(1..=2);
            let rank = rng.gen_range(1..=4);
            let k = random_channel(&mut rng, d_in, d_out, rank);
            let rho = random_density(&mut rng, d_in);
            let reference = k.apply(&rho).unwrap();
            let j = k.to_choi();
            let mut err = max_abs(&(j.apply(&rho).unwrap() - &reference));
            let back = j.to_kraus().unwrap().to_choi();
            err = err.max(max_abs(&(back.matrix - &j.matrix)));
            let ptm = j.to_ptm().unwrap();
            err = err.max(max_abs(&(ptm.apply(&rho).unwrap() - &reference)));
            err = err.max(max_abs(&(ptm.to_choi().unwrap().matrix - &j.matrix)));
            if d_in == d_out {
                let pm = j.to_pm().unwrap();
                err = err.max(max_abs(&(pm.apply(&rho).unwrap() - &reference)));
                err = err.max(max_abs(&(pm.to_choi().matrix - &j.matrix)));
            }
            err
        })
        .reduce(|| 0.0, f64::max);
    outcome(worst < 1e-9, format!("max round-trip/apply error {worst:.2e} over 1000 channels"))
}

fn c3_perturbation() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for formalism in [Formalism::Pm, Formalism::Ptm, Formalism::Eq] {
        for mode in [SamplerMode::CptpPair, SamplerMode::Free] {
            let r = mc_verify(&SamplerConfig {
                formalism,
                mode,
                trials: 10_000,
                seed: 103,
                max_qubits: 2,
                max_layers: 3,
                dims: None,
            })
            .unwrap();
            pass &= r.violations == 0 && r.trials == 10_000;
            parts.push(format!("{formalism}/{mode:?} {} violations, max ratio {:.3}", r.violations, r.max_ratio));
        }
    }
    outcome(pass, parts.join("; "))
}

fn c4_norms() -> Outcome {
    let mut checks = pm_norm_checks(1000, 104, 2).unwrap();
    checks.extend(ptm_norm_checks(1000, 104, 2).unwrap());
    checks.extend(eq_norm_checks(1000, 104, 3).unwrap());
    let (pass, detail) = checks_pass(&checks);
    outcome(pass, detail)
}

fn c5_depolarizing_pqc() -> Outcome {
    let p1 = DynamicOpParams { theta: FRAC_PI_2, phi: FRAC_PI_2, varphi: FRAC_PI_2 };
    let p2 = DynamicOpParams { theta: FRAC_PI_2, phi: 0.0, varphi: FRAC_PI_2 };
    let purity = pm_purity(&double_dynamic_channel(p1, p2));
    let spec = ModelSpec::dynamic_pqc(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut params = spec.init_params(&mut rng);
    for s in spec.regularized_params().chunks(6) {
        for (i, v) in s.iter().zip([FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, 0.0, FRAC_PI_2]) {
            params[*i] = v;
        }
    }
    let train = Batch::from_samples(&sample_dataset(4, 8, 105, &Labeler::Quadrant).unwrap().samples);
    let report = evaluate_report(&spec, &params, &train, 0.1, 0.05).unwrap();
    let pass = (purity - 0.25).abs() < 1e-10 && report.complexity_term.abs() < 1e-10;
    outcome(pass, format!("tr χ² = {purity:.12}, complexity_term = {:.2e}", report.complexity_term))
}

fn c6_qcnn_purity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [2usize, 4] {
        let spec = ModelSpec::qcnn(n).unwrap();
        let dynamic = spec.regularized_params();
        let (d_in, d_out) = (1usize << n, 1usize << spec.layers[0].n_out());
        let mut values = Vec::new();
        for t in 0..50u64 {
            let mut rng = rng_for(106, &[n as u64, t]);
            let mut params = spec.init_params(&mut rng);
            let normal = Normal::new(0.0, 1.0).unwrap();
            for (i, p) in params.iter_mut().enumerate() {
                // Identity dynamic blocks leave convolution and pooling only.
                *p = if dynamic.contains(&i) { 0.0 } else { normal.sample(&mut rng) };
            }
            let model = spec.build(&params).unwrap();
            values.push(model.layers[0].tomography().unwrap().purity());
        }
        let target = (d_in * d_out) as f64;
        let err = values.iter().map(|v| (v - target).abs()).fold(0.0, f64::max);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        pass &= err < 1e-8 && hi - lo < 1e-8;
        parts.push(format!("{n}->{}: Tr J² error {err:.1e}, spread {:.1e}", n / 2, hi - lo));
    }
    outcome(pass, parts.join("; "))
}

fn c7_kraus_blind() -> Outcome {
    let (pass, detail) = checks_pass(&kraus_blind_checks(1000, 107, 3).unwrap());
    outcome(pass, detail)
}

fn c8_tail() -> Outcome {
    let grids: [&[usize]; 7] = [&[1], &[4], &[16], &[4, 4], &[2, 16], &[1, 8, 64], &[16, 16, 16]];
    let sigma = 0.1;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (g, xi) in grids.iter().enumerate() {
        let t = tail_threshold(sigma, xi, None);
        let mut rng = rng_for(108, &[g as u64]);
        let normal = Normal::new(0.0, sigma).unwrap();
        let draws = 10_000;
        let failures = (0..draws)
            .filter(|_| xi.iter().any(|&x| (0..x).map(|_| normal.sample(&mut rng).abs()).sum::<f64>() > t))
            .count();
        let frac = failures as f64 / draws as f64;
        worst = worst.max(frac);
        parts.push(format!("L={} ξ={xi:?}: {frac:.4}", xi.len()));
    }
    outcome(worst <= 0.5, format!("worst failure fraction {worst:.4} ({})", parts.join(", ")))
}

fn c9_equivariance() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (group, rep) in [("z2", "x"), ("z2", "xx"), ("z3", "phase"), ("z4", "s"), ("s3", "qubit-permutation")] {
        let f = GroupFixture::builtin(group).unwrap();
        let r = f.rep(rep).unwrap();
        let action = UnitaryRep::choi_action(r, r).unwrap();
        let decomp = isotypic_decompose(&action, &f.irreps, &f.group).unwrap();
        let count: usize = decomp.irrep_dims.iter().zip(&decomp.multiplicities).map(|(d, m)| d * m).sum();
        let mut worst: f64 = 0.0;
        let mut rng = rng_for(109, &[group.len() as u64, rep.len() as u64]);
        for _ in 0..10 {
            let rank = rng.gen_range(1..=4);
            let j = random_equivariant_choi(&mut rng, &action, r.dim, r.dim, rank);
            let (params, _) = choi_to_eq_params(&decomp, &j);
            let built = build_equivariant_choi(&decomp, &params, true).unwrap();
            worst = worst.max(check_equivariance(&built, r, r).unwrap());
        }
        pass &= worst < 1e-9 && count == action.dim;
        parts.push(format!("{group}/{rep}: violation {worst:.1e}, Σdm {count}/{}", action.dim));
    }
    outcome(pass, parts.join("; "))
}

struct CorrelationOutcome {
    c10: Outcome,
    c11: Outcome,
}

/// Seeding matches the `correlate` command: run `r` uses child seeds `[r, 0|1|2]`.
fn c10_c11_correlation() -> CorrelationOutcome {
    const RUNS: usize = 200;
    const BASE: u64 = 110;
    let cfg = TrainConfig::default();
    let mut pass10 = true;
    let mut pass11 = true;
    let mut parts10 = Vec::new();
    let mut parts11 = Vec::new();
    for spec in [ModelSpec::dynamic_pqc(4).unwrap(), ModelSpec::qcnn(4).unwrap()] {
        let start = Instant::now();
        let runs: Vec<_> = (0..RUNS)
            .into_par_iter()
            .map(|r| {
                let (s0, s1, s2) =
                    (derive_seed(BASE, &[r as u64, 0]), derive_seed(BASE, &[r as u64, 1]), derive_seed(BASE, &[r as u64, 2]));
                let train = Batch::from_samples(&sample_dataset(4, 8, s1, &Labeler::Quadrant).unwrap().samples);
                let test = Batch::from_samples(&sample_dataset(4, 200, s2, &Labeler::Quadrant).unwrap().samples);
                train_run(&spec, &train, &test, &TrainConfig { seed: s0, ..cfg.clone() }, r).unwrap()
            })
            .collect();
        let rows: Vec<_> = runs.iter().map(|r| r.correlation_row()).collect();
        let s = gap_and_correlation(&rows, BASE).unwrap();
        let r = s.pearson_r.unwrap_or(f64::NAN);
        let (lo, hi) = s.ci90.unwrap_or((f64::NAN, f64::NAN));
        pass10 &= r > 0.05 && lo > -0.05;
        parts10.push(format!(
            "{:?}: r = {r:.3}, 90% CI [{lo:.3}, {hi:.3}], {RUNS} runs in {:.0}s",
            spec.architecture,
            start.elapsed().as_secs_f64()
        ));
        let bad = runs
            .iter()
            .filter(|run| {
                let rep = &run.report;
                !(rep.bound_value >= rep.empirical_margin_loss && rep.all_finite() && rep.beta_in_range())
            })
            .count();
        pass11 &= bad == 0;
        parts11.push(format!("{:?}: {bad} of {RUNS} runs violate", spec.architecture));
    }
    CorrelationOutcome { c10: outcome(pass10, parts10.join("; ")), c11: outcome(pass11, parts11.join("; ")) }
}

/// Dense oracle `Σ_i Z_i − J1 X_i X_{i+1} − J2 X_{i−1} Z_i X_{i+1}` built from Kronecker products.
fn oracle_hamiltonian(n: usize, j1: f64, j2: f64) -> CMat {
    let x = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    let z = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
    let i2 = identity(2);
    let string = |ops: &[(usize, &CMat)]| -> CMat {
        (0..n).fold(CMat::identity(1, 1), |acc, q| {
            let f = ops.iter().find(|(p, _)| *p == q).map_or(&i2, |(_, m)| *m);
            kron(&acc, f)
        })
    };
    let d = 1usize << n;
    let mut h = CMat::zeros(d, d);
    for i in 0..n {
        let (l, r) = ((i + n - 1) % n, (i + 1) % n);
        h += string(&[(i, &z)]);
        h -= string(&[(i, &x), (r, &x)]).scale(j1);
        h -= string(&[(l, &x), (i, &z), (r, &x)]).scale(j2);
    }
    h
}

fn c12_cluster() -> Outcome {
    let (e0, psi) = ground_state(&cluster_hamiltonian(4, 0.0, 0.0).unwrap()).unwrap();
    let basis_ok = (psi[15].re - 1.0).abs() < 1e-12 && psi.iter().take(15).all(|z| z.norm() < 1e-12);
    let energy_ok = (e0 + 4.0).abs() < 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(3..=6);
        let (j1, j2) = (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        let oracle = oracle_hamiltonian(n, j1, j2);
        let h = cluster_hamiltonian(n, j1, j2).unwrap();
        worst = worst.max(max_abs(&(&h - &oracle)));
        let (e, v) = ground_state(&h).unwrap();
        let residual = &oracle * &v - v.scale(e);
        worst = worst.max(residual.iter().map(|z| z.norm()).fold(0.0, f64::max));
        let evs = oracle.clone().symmetric_eigenvalues();
        worst = worst.max((evs.iter().copied().fold(f64::INFINITY, f64::min) - e).abs());
    }

    let bytes = |seed| {
        let mut buf = Vec::new();
        write_dataset(&sample_dataset(4, 50, seed, &Labeler::Quadrant).unwrap(), &mut buf).unwrap();
        buf
    };
    let same = bytes(7) == bytes(7);
    let pass = basis_ok && energy_ok && worst < 1e-9 && same;
    outcome(
        pass,
        format!("E0 = {e0:.12}, |1111⟩ {basis_ok}, oracle error {worst:.1e}, byte-identical {same}"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("criterion {id:>2} {tag} {name}: {}", o.detail);
    };
    report(1, "baseline exactness", c1_baseline());
    report(2, "representation consistency", c2_representations());
    report(3, "perturbation-bound dominance", c3_perturbation());
    report(4, "structural norm bounds", c4_norms());
    report(5, "dynamic-PQC depolarizing point", c5_depolarizing_pqc());
    report(6, "QCNN purity identity", c6_qcnn_purity());
    report(7, "Kraus parameter-blindness", c7_kraus_blind());
    report(8, "tail-bound calibration", c8_tail());
    report(9, "equivariance", c9_equivariance());
    let corr = c10_c11_correlation();
    report(10, "complexity/gap correlation", corr.c10);
    report(11, "bound sanity", corr.c11);
    report(12, "cluster dataset", c12_cluster());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
