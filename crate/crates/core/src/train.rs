//! Fidelity training with Adam and finite-difference gradients.
//!
//! The data term is linear in the input state, so training states are summed
//! per label before the forward pass. Gradients of the data term use a cached
//! Heisenberg sweep: the derivative with respect to a parameter of operation
//! `k` only needs the state entering `k` and the observable pulled back from
//! the readout to the output of `k`.

use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::layered::computational_projector;
use crate::channel::{LayeredModel, Op};
use crate::clusterdata::LabeledGroundState;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::models::{layer_norms, ModelSpec};
use crate::pacbayes::{complexity_report, margin_loss, ComplexityInputs, ComplexityReport, CorrelationRow};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Standard deviation of the per-run regularization strength `λ ~ N(0, std²)`.
    pub lambda_std: f64,
    /// Fixed `λ`, overriding the draw.
    pub lambda: Option<f64>,
    pub gamma: f64,
    pub delta: f64,
    pub fd_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            epochs: 200,
            seed: 0,
            lambda_std: 0.1,
            lambda: None,
            gamma: 0.1,
            delta: 0.05,
            fd_step: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Range("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Range("learning rate must be finite and non-negative".into()));
        }
        if !(self.lambda_std >= 0.0 && self.lambda_std.is_finite()) {
            return Err(Error::Range("λ std must be finite and non-negative".into()));
        }
        if !(self.gamma > 0.0 && self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Range("need γ > 0 and δ ∈ (0, 1)".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::Range("finite-difference step must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Training or test split in model-input form.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Vec<CMat>,
    /// 1-based class labels.
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_samples(samples: &[LabeledGroundState]) -> Self {
        Self { states: samples.iter().map(|s| s.density()).collect(), labels: samples.iter().map(|s| s.label).collect() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(y, Σ_{s: y_s = y} ρ_s / N)` for every label present.
    pub fn label_means(&self) -> Vec<(usize, CMat)> {
        let n = self.len() as f64;
        let mut groups: Vec<(usize, CMat)> = Vec::new();
        for (rho, &y) in self.states.iter().zip(&self.labels) {
            match groups.iter_mut().find(|(l, _)| *l == y) {
                Some((_, acc)) => *acc += rho.scale(1.0 / n),
                None => groups.push((y, rho.scale(1.0 / n))),
            }
        }
        groups.sort_by_key(|(y, _)| *y);
        groups
    }
}

pub fn model_outputs(model: &LayeredModel, batch: &Batch) -> Result<Vec<Vec<f64>>> {
    batch.states.iter().map(|rho| crate::channel::model_output(model, rho)).collect()
}

fn check_labels(model: &LayeredModel, labels: &[usize]) -> Result<()> {
    let k = model.num_outcomes();
    match labels.iter().find(|&&y| y == 0 || y > k) {
        Some(y) => Err(Error::Range(format!("label {y} has no target among {k} outcomes"))),
        None => Ok(()),
    }
}

/// `1 − mean_s ⟨y_s|ρ_out,s|y_s⟩`.
pub fn fidelity_loss(model: &LayeredModel, batch: &Batch) -> Result<f64> {
    check_labels(model, &batch.labels)?;
    if batch.is_empty() {
        return Err(Error::Range("empty batch".into()));
    }
    let outputs = model_outputs(model, batch)?;
    let mean = outputs.iter().zip(&batch.labels).map(|(f, &y)| f[y - 1]).sum::<f64>() / batch.len() as f64;
    Ok(1.0 - mean)
}

/// `|λ| Σ_j ‖W_j‖_F`.
pub fn regularizer(fro2: &[f64], lambda: f64) -> f64 {
    lambda.abs() * fro2.iter().map(|f| f.max(0.0).sqrt()).sum::<f64>()
}

/// Fidelity loss plus the weight-norm penalty.
pub fn fidelity_cost(spec: &ModelSpec, params: &[f64], batch: &Batch, lambda: f64) -> Result<f64> {
    let model = spec.build(params)?;
    let reg = if lambda == 0.0 { 0.0 } else { regularizer(&spec.structural_fro2(params)?, lambda) };
    Ok(fidelity_loss(&model, batch)? + reg)
}

/// Central differences, one coordinate at a time in index order.
pub fn grad_fd<F>(f: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Range("step must be positive".into()));
    }
    let mut x = params.to_vec();
    let mut g = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let x0 = x[i];
        x[i] = x0 + h;
        let fp = f(&x)?;
        x[i] = x0 - h;
        let fm = f(&x)?;
        x[i] = x0;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("cost at coordinate {i}")));
        }
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// Register operations of a model in execution order with their input sizes.
fn flat_ops(model: &LayeredModel) -> Vec<(&Op, usize)> {
    let mut out = Vec::new();
    for layer in &model.layers {
        let mut n = layer.n_in;
        for op in &layer.ops {
            out.push((op, n));
            n = op.n_out(n);
        }
    }
    out
}

/// Readout projector `|k⟩⟨k|` embedded into the final register.
fn readout_observable(model: &LayeredModel, k: usize) -> CMat {
    let n = model.n_final();
    let proj = computational_projector(model.num_outcomes(), k);
    if model.readout.len() == n {
        return proj;
    }
    Op::Trace { keep: model.readout.clone() }.adjoint(&proj, n)
}

/// Gradient of the fidelity loss by finite differences, evaluated with one
/// forward and one backward sweep per label group.
pub fn fidelity_loss_grad(spec: &ModelSpec, params: &[f64], batch: &Batch, h: f64) -> Result<Vec<f64>> {
    let model = spec.build(params)?;
    check_labels(&model, &batch.labels)?;
    let ops = flat_ops(&model);
    // Template for every flattened operation, same order.
    let templates: Vec<_> = spec.layers.iter().flat_map(|p| p.ops.iter()).collect();
    debug_assert_eq!(templates.len(), ops.len());

    struct Sweep {
        states: Vec<CMat>,
        observables: Vec<CMat>,
    }
    let sweeps: Vec<Sweep> = batch
        .label_means()
        .into_iter()
        .map(|(y, rho)| {
            let mut states = Vec::with_capacity(ops.len());
            let mut cur = rho;
            for (op, n) in &ops {
                let next = op.apply(&cur, *n);
                states.push(cur);
                cur = next;
            }
            let mut observables = vec![CMat::zeros(0, 0); ops.len()];
            let mut obs = readout_observable(&model, y - 1);
            for (k, (op, n)) in ops.iter().enumerate().rev() {
                let pulled = op.adjoint(&obs, *n);
                observables[k] = obs;
                obs = pulled;
            }
            Sweep { states, observables }
        })
        .collect();

    let mut grad = vec![0.0; params.len()];
    let mut x = params.to_vec();
    for (k, t) in templates.iter().enumerate() {
        let n = ops[k].1;
        for i in t.param_range() {
            let x0 = x[i];
            x[i] = x0 + h;
            let plus = t.instantiate(&x)?;
            x[i] = x0 - h;
            let minus = t.instantiate(&x)?;
            x[i] = x0;
            let mut d = 0.0;
            for s in &sweeps {
                let o = &s.observables[k];
                let rho = &s.states[k];
                d += (o * plus.apply(rho, n)).trace().re - (o * minus.apply(rho, n)).trace().re;
            }
            // The loss is one minus the fidelity.
            grad[i] = -d / (2.0 * h);
        }
    }
    Ok(grad)
}

/// Gradient of the full cost; the penalty depends only on the dynamic parameters.
pub fn cost_grad(spec: &ModelSpec, params: &[f64], batch: &Batch, lambda: f64, h: f64) -> Result<Vec<f64>> {
    let mut g = fidelity_loss_grad(spec, params, batch, h)?;
    if lambda != 0.0 {
        let mut x = params.to_vec();
        for i in spec.regularized_params() {
            let x0 = x[i];
            x[i] = x0 + h;
            let fp = regularizer(&spec.structural_fro2(&x)?, lambda);
            x[i] = x0 - h;
            let fm = regularizer(&spec.structural_fro2(&x)?, lambda);
            x[i] = x0;
            g[i] += (fp - fm) / (2.0 * h);
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub params: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: Vec<f64>) -> Self {
        let n = params.len();
        Self { params, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub fn adam_step(state: &mut AdamState, grad: &[f64], lr: f64) -> Result<()> {
    if grad.len() != state.params.len() {
        return Err(Error::Layout { expected: state.params.len(), got: grad.len() });
    }
    state.t += 1;
    let b1t = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let b2t = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for (i, &g) in grad.iter().enumerate() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        state.params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub run_id: usize,
    pub seed: u64,
    pub config_digest: String,
    pub lambda: f64,
    pub params: Vec<f64>,
    pub train_loss_margin: f64,
    pub train_loss_0: f64,
    pub test_loss_0: f64,
    /// Test 0-loss minus train 0-loss.
    pub gap: f64,
    pub final_cost: f64,
    pub report: ComplexityReport,
    /// Not serialized, so records of identical runs are byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrainingRun {
    pub fn correlation_row(&self) -> CorrelationRow {
        CorrelationRow {
            run_id: self.run_id,
            seed: self.seed,
            formalism: self.report.formalism,
            depth: self.report.depth,
            beta: self.report.beta,
            fro_sum: self.report.fro_sum,
            xi_max: self.report.xi_max,
            complexity_term: self.report.complexity_term,
            train_loss_margin: self.train_loss_margin,
            test_loss_0: self.test_loss_0,
            gap: self.gap,
            bound_value: self.report.bound_value,
        }
    }
}

/// Complexity report of a trained parameter vector on the training split.
pub fn evaluate_report(spec: &ModelSpec, params: &[f64], train: &Batch, gamma: f64, delta: f64) -> Result<ComplexityReport> {
    let model = spec.build(params)?;
    let outputs = model_outputs(&model, train)?;
    let empirical = margin_loss(&outputs, &train.labels, gamma)?;
    complexity_report(&ComplexityInputs {
        formalism: spec.formalism(),
        layers: layer_norms(spec, params)?,
        gamma,
        delta,
        n_samples: train.len(),
        empirical_margin_loss: empirical,
        eq: None,
    })
}

/// Full-batch Adam from a seeded initialization, then evaluation.
///
/// Parameters, `λ` and every derived number depend only on
/// `(spec, train, test, config, run_id)`.
pub fn train_run(spec: &ModelSpec, train: &Batch, test: &Batch, config: &TrainConfig, run_id: usize) -> Result<TrainingRun> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Range("training set is empty".into()));
    }
    let start = Instant::now();
    let mut rng = rng_for(config.seed, &[]);
    let lambda = match config.lambda {
        Some(l) => l,
        None => Normal::new(0.0, config.lambda_std).map_err(|e| Error::Range(e.to_string()))?.sample(&mut rng),
    };
    let mut state = AdamState::new(spec.init_params(&mut rng));
    for _ in 0..config.epochs {
        let g = cost_grad(spec, &state.params, train, lambda, config.fd_step)?;
        adam_step(&mut state, &g, config.learning_rate)?;
    }
    let params = state.params;
    let model = spec.build(&params)?;
    let train_out = model_outputs(&model, train)?;
    let test_out = model_outputs(&model, test)?;
    let train_loss_margin = margin_loss(&train_out, &train.labels, config.gamma)?;
    let train_loss_0 = margin_loss(&train_out, &train.labels, 0.0)?;
    let test_loss_0 = if test.is_empty() { 0.0 } else { margin_loss(&test_out, &test.labels, 0.0)? };
    let report = evaluate_report(spec, &params, train, config.gamma, config.delta)?;
    let final_cost = fidelity_cost(spec, &params, train, lambda)?;
    Ok(TrainingRun {
        run_id,
        seed: config.seed,
        config_digest: config.digest(),
        lambda,
        params,
        train_loss_margin,
        train_loss_0,
        test_loss_0,
        gap: test_loss_0 - train_loss_0,
        final_cost,
        report,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// `|k⟩⟨k| ⊗ I` helper used by tests and callers that build targets by hand.
pub fn target_state(num_outcomes: usize, label: usize) -> Result<CMat> {
    if label == 0 || label > num_outcomes {
        return Err(Error::Range(format!("label {label} outside 1..={num_outcomes}")));
    }
    Ok(computational_projector(num_outcomes, label - 1))
}
