//! PAC-Bayesian bound pipeline: β terms and their ranges, the Gaussian tail
//! threshold, σ ceiling, KL terms, covering-net size, margin loss and the
//! complexity/gap correlation table.

use std::f64::consts::{E, LN_2};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::pm_w11_upper;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Formalism {
    Pm,
    Ptm,
    Eq,
}

impl std::fmt::Display for Formalism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Formalism::Pm => "PM",
            Formalism::Ptm => "PTM",
            Formalism::Eq => "EQ",
        })
    }
}

fn nonempty(norms: &[f64]) -> Result<()> {
    if norms.is_empty() {
        return Err(Error::Range("need at least one layer".into()));
    }
    if norms.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Range("layer norms must be finite and non-negative".into()));
    }
    Ok(())
}

/// `Σ_j Π_{ℓ>j} a_ℓ`.
fn suffix_product_sum(a: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut tail = 1.0;
    for x in a.iter().rev() {
        total += tail;
        tail *= x;
    }
    total
}

pub fn beta_pm(w11: &[f64]) -> Result<f64> {
    nonempty(w11)?;
    Ok(suffix_product_sum(w11))
}

pub fn beta_eq(eq1: &[f64]) -> Result<f64> {
    nonempty(eq1)?;
    Ok(suffix_product_sum(eq1))
}

/// `√d_out^{(L)} Σ_j (1/√d_in^{(j)}) Π_{ℓ>j} ‖W_ℓ‖_{1,1}` for a chain of `L + 1` dimensions.
pub fn beta_ptm(w11: &[f64], chain: &[usize]) -> Result<f64> {
    nonempty(w11)?;
    check_chain(chain, w11.len())?;
    Ok(ptm_weighted_sum(w11, chain))
}

fn ptm_weighted_sum(factors: &[f64], chain: &[usize]) -> f64 {
    let l = factors.len();
    let mut total = 0.0;
    for j in 0..l {
        let tail: f64 = factors[j + 1..].iter().product();
        total += tail / (chain[j] as f64).sqrt();
    }
    (chain[l] as f64).sqrt() * total
}

fn check_chain(chain: &[usize], layers: usize) -> Result<()> {
    if chain.len() != layers + 1 {
        return Err(Error::Dimension(format!(
            "dimension chain has {} entries for {layers} layers",
            chain.len()
        )));
    }
    if chain.contains(&0) {
        return Err(Error::Dimension("zero dimension in chain".into()));
    }
    Ok(())
}

/// `Σ_{k<L} C^k`, equal to `(C^L − 1)/(C − 1)` and to `L` at `C = 1`.
pub fn geometric_m(c: f64, l: usize) -> f64 {
    (0..l).map(|k| c.powi(k as i32)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRange {
    pub lo: f64,
    pub hi: f64,
}

/// Per-layer shape information for the PTM range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtmLayerShape {
    pub xi: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub unital: bool,
}

/// Per-layer constant `C_ℓ` for the PTM range.
pub fn ptm_c(layer: &PtmLayerShape) -> f64 {
    let x = layer.xi as f64;
    let (di, dout) = (layer.d_in as f64, layer.d_out as f64);
    if layer.unital {
        x * (dout / di).sqrt()
    } else {
        (x.sqrt() * di).min((x * (di * di - di / dout)).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "formalism", rename_all = "UPPERCASE")]
pub enum RangeParams {
    Pm { n: usize, xi_max: usize, layers: usize },
    Ptm { layers: Vec<PtmLayerShape> },
    Eq { eta: f64, group_order: usize, xi_max: usize, layers: usize },
}

pub fn beta_ranges(params: &RangeParams) -> Result<BetaRange> {
    match params {
        RangeParams::Pm { n, xi_max, layers } => {
            if *layers == 0 {
                return Err(Error::Range("need at least one layer".into()));
            }
            Ok(BetaRange { lo: 1.0, hi: geometric_m(pm_w11_upper(*xi_max, *n), *layers) })
        }
        RangeParams::Ptm { layers } => {
            let last = layers.last().ok_or_else(|| Error::Range("need at least one layer".into()))?;
            for w in layers.windows(2) {
                if w[0].d_out != w[1].d_in {
                    return Err(Error::Dimension("PTM layers do not chain".into()));
                }
            }
            let mut chain: Vec<usize> = layers.iter().map(|s| s.d_in).collect();
            chain.push(last.d_out);
            let cs: Vec<f64> = layers.iter().map(ptm_c).collect();
            Ok(BetaRange {
                lo: (last.d_out as f64 / last.d_in as f64).sqrt(),
                hi: ptm_weighted_sum(&cs, &chain),
            })
        }
        RangeParams::Eq { eta, group_order, xi_max, layers } => {
            if *layers == 0 {
                return Err(Error::Range("need at least one layer".into()));
            }
            let c = eta * ((*group_order * *xi_max) as f64).sqrt();
            Ok(BetaRange { lo: 1.0, hi: geometric_m(c, *layers) })
        }
    }
}

/// `ln(2 Σ_j 2^{ξ_j})`, evaluated without overflow.
pub fn log_two_sum_pow2(xi: &[usize]) -> f64 {
    let m = xi.iter().copied().max().unwrap_or(0) as f64;
    let s: f64 = xi.iter().map(|&x| ((x as f64 - m) * LN_2).exp()).sum();
    LN_2 + m * LN_2 + s.ln()
}

/// `√(2 ξ_max ln(2 Σ_j 2^{ξ_j}))`.
pub fn tail_factor(xi: &[usize]) -> f64 {
    let xi_max = xi.iter().copied().max().unwrap_or(0) as f64;
    (2.0 * xi_max * log_two_sum_pow2(xi)).sqrt()
}

/// `t = σ √(2 ξ_max ln(2 Σ 2^{ξ_j}))`; the equivariant variant carries an extra `d_max`.
pub fn tail_threshold(sigma: f64, xi: &[usize], d_max: Option<usize>) -> f64 {
    sigma * tail_factor(xi) * d_max.unwrap_or(1) as f64
}

/// `(1 − 1/L)`, replaced by 1 for a single layer.
pub fn discretization_factor(l: usize) -> f64 {
    if l <= 1 {
        1.0
    } else {
        1.0 - 1.0 / l as f64
    }
}

pub fn sigma_ceiling(gamma: f64, l: usize, beta_tilde: f64, xi: &[usize], d_max: Option<usize>) -> Result<f64> {
    if beta_tilde <= 0.0 {
        return Err(Error::Range("β̃ must be positive".into()));
    }
    if gamma < 0.0 {
        return Err(Error::Range("γ must be non-negative".into()));
    }
    let denom = 4.0 * E * beta_tilde * tail_factor(xi) * d_max.unwrap_or(1) as f64;
    Ok(gamma * discretization_factor(l) / denom)
}

/// `Σ‖W_j‖_F² / (2σ²)`.
pub fn kl_upper(fro_sum: f64, sigma: f64) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::Range("σ must be positive".into()));
    }
    Ok(fro_sum / (2.0 * sigma * sigma))
}

/// The KL term with `σ` at its ceiling, written out in closed form.
pub fn kl_substituted(gamma: f64, l: usize, beta_tilde: f64, xi: &[usize], fro_sum: f64, d_max: Option<usize>) -> Result<f64> {
    if gamma <= 0.0 {
        return Err(Error::Range("γ must be positive".into()));
    }
    let xi_max = xi.iter().copied().max().unwrap_or(0) as f64;
    let dm = d_max.unwrap_or(1) as f64;
    let f = discretization_factor(l);
    Ok(16.0 * E * E * beta_tilde * beta_tilde * dm * dm * xi_max * log_two_sum_pow2(xi) * fro_sum
        / (gamma * gamma * f * f))
}

/// `L · min{γ√N/√ΣF², hi} / lo`, never below 1.
pub fn covering_size(lo: f64, hi: f64, l: usize, cap: Option<f64>) -> Result<f64> {
    if lo <= 0.0 {
        return Err(Error::Range("β lower range must be positive".into()));
    }
    let top = cap.map_or(hi, |c| c.min(hi));
    Ok((l as f64 * top / lo).max(1.0))
}

/// `γ√N/√ΣF²`, absent when the weights vanish.
pub fn covering_cap(gamma: f64, n_samples: usize, fro_sum: f64) -> Option<f64> {
    (fro_sum > 0.0).then(|| gamma * (n_samples as f64).sqrt() / fro_sum.sqrt())
}

/// Nearest point of the geometric grid `lo (1 + 1/L)^k` inside `[lo, hi]`.
pub fn beta_tilde(beta: f64, range: BetaRange, l: usize) -> f64 {
    let ratio = 1.0 + 1.0 / l as f64;
    let b = beta.clamp(range.lo, range.hi.max(range.lo));
    let k = ((b / range.lo).ln() / ratio.ln()).floor();
    let below = range.lo * ratio.powf(k);
    let above = below * ratio;
    let pick = if (b - below).abs() <= (above - b).abs() || above > range.hi * (1.0 + 1e-12) { below } else { above };
    pick.max(range.lo)
}

/// `L̂_γ + 4√((KL + ln(6 N N_β / δ))/(N − 1))`.
pub fn pacbayes_bound(kl: f64, covering: f64, empirical_margin_loss: f64, delta: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Range("need at least two samples".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Range("δ must lie in (0, 1)".into()));
    }
    if !(0.0..=1.0).contains(&empirical_margin_loss) {
        return Err(Error::Range("empirical loss must lie in [0, 1]".into()));
    }
    let nf = n as f64;
    let log_term = (6.0 * nf * covering / delta).ln();
    Ok(empirical_margin_loss + 4.0 * ((kl + log_term) / (nf - 1.0)).sqrt())
}

/// Fraction of samples with `f[y] ≤ γ + max_{k≠y} f[k]`; labels are 1-based.
pub fn margin_loss(outputs: &[Vec<f64>], labels: &[usize], gamma: f64) -> Result<f64> {
    if outputs.len() != labels.len() {
        return Err(Error::Dimension("outputs and labels differ in length".into()));
    }
    if outputs.is_empty() {
        return Ok(0.0);
    }
    let mut missed = 0usize;
    for (f, &y) in outputs.iter().zip(labels) {
        if y == 0 || y > f.len() {
            return Err(Error::Range(format!("label {y} outside 1..={}", f.len())));
        }
        let best_other = f
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != y - 1)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if f[y - 1] <= gamma + best_other {
            missed += 1;
        }
    }
    Ok(missed as f64 / outputs.len() as f64)
}

/// Per-layer measurements feeding a complexity report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorms {
    /// Sparsity `ξ_j`, or the block parameter count `Ξ_j` for equivariant layers.
    pub xi: usize,
    /// `‖W_j‖_{1,1}` or `‖W_j‖_{eq,1}`.
    pub w1: f64,
    /// `‖W_j‖_F²` or `‖W_j‖_{eq,F}²`.
    pub wf2: f64,
    pub d_in: usize,
    pub d_out: usize,
    #[serde(default)]
    pub unital: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqExtras {
    pub eta: f64,
    pub group_order: usize,
    pub d_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityInputs {
    pub formalism: Formalism,
    pub layers: Vec<LayerNorms>,
    pub gamma: f64,
    pub delta: f64,
    pub n_samples: usize,
    pub empirical_margin_loss: f64,
    #[serde(default)]
    pub eq: Option<EqExtras>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub formalism: Formalism,
    pub xi: Vec<usize>,
    pub w1: Vec<f64>,
    pub wf2: Vec<f64>,
    pub xi_max: usize,
    pub beta: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub beta_tilde: f64,
    pub fro_sum: f64,
    pub complexity_term: f64,
    pub tail_factor: f64,
    pub sigma_ceiling: f64,
    pub kl_upper: f64,
    pub covering_size: f64,
    pub bound_value: f64,
    pub empirical_margin_loss: f64,
    pub gamma: f64,
    pub delta: f64,
    pub n_samples: usize,
    pub depth: usize,
    pub dims: Vec<usize>,
    pub d_max: Option<usize>,
}

impl ComplexityReport {
    pub fn all_finite(&self) -> bool {
        let scalars = [
            self.beta,
            self.beta_lo,
            self.beta_hi,
            self.beta_tilde,
            self.fro_sum,
            self.complexity_term,
            self.tail_factor,
            self.sigma_ceiling,
            self.kl_upper,
            self.covering_size,
            self.bound_value,
        ];
        scalars.iter().chain(&self.w1).chain(&self.wf2).all(|x| x.is_finite() && *x >= 0.0)
    }

    pub fn beta_in_range(&self) -> bool {
        let tol = 1e-9 * self.beta_hi.max(1.0);
        self.beta >= self.beta_lo - tol && self.beta <= self.beta_hi + tol
    }
}

pub fn complexity_report(inp: &ComplexityInputs) -> Result<ComplexityReport> {
    let l = inp.layers.len();
    if l == 0 {
        return Err(Error::Range("need at least one layer".into()));
    }
    if inp.gamma <= 0.0 {
        return Err(Error::Range("γ must be positive".into()));
    }
    for w in inp.layers.windows(2) {
        if w[0].d_out != w[1].d_in {
            return Err(Error::Dimension("layers do not chain".into()));
        }
    }
    let xi: Vec<usize> = inp.layers.iter().map(|s| s.xi).collect();
    let w1: Vec<f64> = inp.layers.iter().map(|s| s.w1).collect();
    let wf2: Vec<f64> = inp.layers.iter().map(|s| s.wf2).collect();
    let mut dims: Vec<usize> = inp.layers.iter().map(|s| s.d_in).collect();
    dims.push(inp.layers[l - 1].d_out);
    let xi_max = xi.iter().copied().max().unwrap_or(0);
    let (beta, range, d_max) = match inp.formalism {
        Formalism::Pm => {
            let n = crate::linalg::qubits_for_dim(dims.iter().copied().max().unwrap_or(1))?;
            (beta_pm(&w1)?, beta_ranges(&RangeParams::Pm { n, xi_max, layers: l })?, None)
        }
        Formalism::Ptm => {
            let shapes = inp
                .layers
                .iter()
                .map(|s| PtmLayerShape { xi: s.xi, d_in: s.d_in, d_out: s.d_out, unital: s.unital })
                .collect();
            (beta_ptm(&w1, &dims)?, beta_ranges(&RangeParams::Ptm { layers: shapes })?, None)
        }
        Formalism::Eq => {
            let extras = inp.eq.ok_or_else(|| Error::Range("equivariant report needs η, |G| and d_max".into()))?;
            let range = beta_ranges(&RangeParams::Eq {
                eta: extras.eta,
                group_order: extras.group_order,
                xi_max,
                layers: l,
            })?;
            (beta_eq(&w1)?, range, Some(extras.d_max))
        }
    };
    let fro_sum: f64 = wf2.iter().sum();
    let bt = beta_tilde(beta, range, l);
    let sigma = sigma_ceiling(inp.gamma, l, bt, &xi, d_max)?;
    let kl = kl_substituted(inp.gamma, l, bt, &xi, fro_sum, d_max)?;
    let covering = covering_size(range.lo, range.hi, l, covering_cap(inp.gamma, inp.n_samples, fro_sum))?;
    let bound_value = pacbayes_bound(kl, covering, inp.empirical_margin_loss, inp.delta, inp.n_samples)?;
    Ok(ComplexityReport {
        formalism: inp.formalism,
        xi,
        w1,
        wf2,
        xi_max,
        beta,
        beta_lo: range.lo,
        beta_hi: range.hi,
        beta_tilde: bt,
        fro_sum,
        complexity_term: beta * fro_sum.sqrt(),
        tail_factor: tail_factor(&inp.layers.iter().map(|s| s.xi).collect::<Vec<_>>()),
        sigma_ceiling: sigma,
        kl_upper: kl,
        covering_size: covering,
        bound_value,
        empirical_margin_loss: inp.empirical_margin_loss,
        gamma: inp.gamma,
        delta: inp.delta,
        n_samples: inp.n_samples,
        depth: l,
        dims,
        d_max,
    })
}

/// Pearson correlation; `None` when either column has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Percentile bootstrap interval for Pearson's r.
pub fn bootstrap_pearson_ci(x: &[f64], y: &[f64], resamples: usize, level: f64, seed: u64) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 3 || resamples == 0 {
        return None;
    }
    let n = x.len();
    let mut rng = rng_for(seed, &[0xB007]);
    let mut rs = Vec::with_capacity(resamples);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..resamples {
        for i in 0..n {
            let k = rng.gen_range(0..n);
            bx[i] = x[k];
            by[i] = y[k];
        }
        if let Some(r) = pearson(&bx, &by) {
            rs.push(r);
        }
    }
    if rs.is_empty() {
        return None;
    }
    rs.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let at = |q: f64| rs[((q * (rs.len() - 1) as f64).round() as usize).min(rs.len() - 1)];
    Some((at(alpha), at(1.0 - alpha)))
}

/// One line of the correlation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub run_id: usize,
    pub seed: u64,
    pub formalism: Formalism,
    #[serde(rename = "L")]
    pub depth: usize,
    pub beta: f64,
    pub fro_sum: f64,
    pub xi_max: usize,
    pub complexity_term: f64,
    pub train_loss_margin: f64,
    pub test_loss_0: f64,
    pub gap: f64,
    pub bound_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub pearson_r: Option<f64>,
    pub ci90: Option<(f64, f64)>,
    pub runs: usize,
}

pub fn gap_and_correlation(rows: &[CorrelationRow], seed: u64) -> Result<CorrelationSummary> {
    if rows.len() < 3 {
        return Err(Error::Range("need at least three runs".into()));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.complexity_term).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    if x.iter().chain(&y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    Ok(CorrelationSummary {
        pearson_r: pearson(&x, &y),
        ci90: bootstrap_pearson_ci(&x, &y, 2000, 0.90, seed),
        runs: rows.len(),
    })
}

pub fn write_correlation_csv<W: Write>(rows: &[CorrelationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
