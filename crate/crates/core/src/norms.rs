//! Matrix norms, sparsity, and closed-form norm bounds for weight matrices.

use serde::{Deserialize, Serialize};

use crate::channel::{Choi, KrausSet};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, singular_values, CMat};

pub const DEFAULT_SPARSITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub norm_11: f64,
    pub norm_f: f64,
    pub sparsity: usize,
    pub trace_norm: f64,
    pub spectral_norm: f64,
    pub sparsity_tolerance: f64,
}

impl NormReport {
    pub fn norm_f2(&self) -> f64 {
        self.norm_f * self.norm_f
    }
}

/// Entrywise 1-norm `Σ |m_ij|`.
pub fn norm_11(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).sum()
}

pub fn sparsity(m: &CMat, tol: f64) -> usize {
    m.iter().filter(|z| z.norm() > tol).count()
}

pub fn norm_report(m: &CMat, sparsity_tolerance: f64) -> Result<NormReport> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix passed to norm_report".into()));
    }
    let sv = singular_values(m);
    Ok(NormReport {
        norm_11: norm_11(m),
        norm_f: frobenius_sq(m).sqrt(),
        sparsity: sparsity(m, sparsity_tolerance),
        trace_norm: sv.iter().sum(),
        spectral_norm: sv.iter().copied().fold(0.0, f64::max),
        sparsity_tolerance,
    })
}

/// `‖W‖_{1,1} ≤ (2ξ² + ξ − 2)/4^n` for CPTP process-matrix weights.
pub fn pm_w11_upper(xi: usize, n: usize) -> f64 {
    if xi == 0 {
        return 0.0;
    }
    let x = xi as f64;
    (2.0 * x * x + x - 2.0) / 4f64.powi(n as i32)
}

/// `‖W‖_F² ≤ ξ³/4^{2n}` for CPTP process-matrix weights.
pub fn pm_wf2_upper(xi: usize, n: usize) -> f64 {
    (xi as f64).powi(3) / 16f64.powi(n as i32)
}

/// Entrywise bound on a transfer matrix of a CPTP map.
pub fn ptm_entry_upper(d_in: usize, d_out: usize, unital: bool) -> f64 {
    if unital {
        (d_out as f64 / d_in as f64).sqrt()
    } else {
        (d_in as f64 / d_out as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtmW11Bounds {
    /// `ξ √(d_out/d_in)`, valid for unital maps only.
    pub unital_bound: Option<f64>,
    /// `√ξ · d_in`.
    pub sparsity_bound: f64,
}

pub fn ptm_w11_uppers(xi: usize, d_in: usize, d_out: usize, unital: bool) -> PtmW11Bounds {
    let x = xi as f64;
    PtmW11Bounds {
        unital_bound: unital.then(|| x * (d_out as f64 / d_in as f64).sqrt()),
        sparsity_bound: x.sqrt() * d_in as f64,
    }
}

/// `‖W‖_F² ≤ d_in² − d_in/d_out` for CPTP transfer-matrix weights.
pub fn ptm_wf2_upper(d_in: usize, d_out: usize) -> f64 {
    let di = d_in as f64;
    di * di - di / d_out as f64
}

fn check_blocks(blocks: &[CMat], dims: &[usize]) -> Result<()> {
    if blocks.len() != dims.len() {
        return Err(Error::Dimension(format!(
            "{} blocks but {} irrep dimensions",
            blocks.len(),
            dims.len()
        )));
    }
    if blocks.iter().any(|b| !b.is_square()) {
        return Err(Error::Dimension("equivariant blocks must be square".into()));
    }
    Ok(())
}

/// `Σ_λ d_λ ‖W_λ‖_1`.
pub fn eq_norm_1(blocks: &[CMat], dims: &[usize]) -> Result<f64> {
    check_blocks(blocks, dims)?;
    Ok(blocks
        .iter()
        .zip(dims)
        .map(|(b, &d)| d as f64 * singular_values(b).iter().sum::<f64>())
        .sum())
}

/// `Σ_λ d_λ ‖W_λ‖_F²`.
pub fn eq_norm_f2(blocks: &[CMat], dims: &[usize]) -> Result<f64> {
    check_blocks(blocks, dims)?;
    Ok(blocks.iter().zip(dims).map(|(b, &d)| d as f64 * frobenius_sq(b)).sum())
}

/// Largest block spectral norm.
pub fn eq_eta(blocks: &[CMat]) -> f64 {
    blocks
        .iter()
        .map(|b| singular_values(b).into_iter().fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqNormBounds {
    pub fourth_root_bound_factor: f64,
    pub spectral_bound: f64,
}

pub fn eq_norm_bounds(xi: usize, group_order: usize, eta: f64) -> EqNormBounds {
    let g_xi = (group_order * xi) as f64;
    EqNormBounds { fourth_root_bound_factor: g_xi.powf(0.25), spectral_bound: eta * g_xi.sqrt() }
}

/// Weight Frobenius norm in the rescaled transfer-matrix convention.
pub fn alt_ptm_wf2(j: &Choi) -> f64 {
    let (di, dout) = (j.d_in as f64, j.d_out as f64);
    j.purity() / (di * dout) - 1.0 / (dout * dout)
}

/// `Σ_i ‖K_i‖_F²`, equal to `d_in` for every CPTP map.
pub fn kraus_frobenius_total(k: &KrausSet) -> f64 {
    k.operators.iter().map(frobenius_sq).sum()
}

/// Sparsity scaling model `ξ_ℓ = ξ_L · 2^{α (n_ℓ − n_L)}` for predicted-scaling plots.
pub fn sparsity_model(xi_last: f64, alpha: f64, n_layer: usize, n_last: usize) -> f64 {
    xi_last * 2f64.powf(alpha * (n_layer as f64 - n_last as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::random::random_channel;
    use crate::channel::{channel_to_weight, ChannelRep, WeightKind};
    use crate::linalg::c;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> CMat {
        CMat::from_diagonal(&crate::linalg::CVec::from_iterator(v.len(), v.iter().map(|&x| c(x, 0.0))))
    }

    #[test]
    fn identity_channel_reports() {
        let r = norm_report(&diag(&[0.75, -0.25, -0.25, -0.25]), DEFAULT_SPARSITY_TOL).unwrap();
        assert!((r.norm_11 - 1.5).abs() < 1e-15);
        assert!((r.norm_f2() - 0.75).abs() < 1e-15);
        assert_eq!(r.sparsity, 4);
        let r = norm_report(&diag(&[0.0, 1.0, 1.0, 1.0]), DEFAULT_SPARSITY_TOL).unwrap();
        assert_eq!((r.norm_11, r.sparsity), (3.0, 3));
        assert!((r.norm_f2() - 3.0).abs() < 1e-15);
        let z = norm_report(&CMat::zeros(3, 3), DEFAULT_SPARSITY_TOL).unwrap();
        assert_eq!((z.norm_11, z.norm_f, z.sparsity, z.trace_norm, z.spectral_norm), (0.0, 0.0, 0, 0.0, 0.0));
    }

    #[test]
    fn closed_forms() {
        assert_eq!(pm_w11_upper(4, 1), 8.5);
        assert_eq!(pm_w11_upper(1, 1), 0.25);
        assert_eq!(pm_w11_upper(0, 1), 0.0);
        assert_eq!(pm_wf2_upper(4, 1), 4.0);
        assert!((ptm_entry_upper(4, 2, false) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(ptm_entry_upper(2, 2, false), 1.0);
        assert_eq!(ptm_entry_upper(2, 2, true), 1.0);
        assert!((ptm_entry_upper(4, 2, true) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(ptm_w11_uppers(3, 2, 2, true).unital_bound, Some(3.0));
        assert_eq!(ptm_w11_uppers(4, 2, 2, false).sparsity_bound, 4.0);
        assert_eq!(ptm_w11_uppers(4, 2, 2, false).unital_bound, None);
        let z = ptm_w11_uppers(0, 2, 2, true);
        assert_eq!((z.unital_bound, z.sparsity_bound), (Some(0.0), 0.0));
        assert_eq!(ptm_wf2_upper(2, 2), 3.0);
        assert_eq!(ptm_wf2_upper(4, 2), 14.0);
    }

    #[test]
    fn equivariant_norms() {
        assert!((eq_norm_1(&[diag(&[0.2])], &[1]).unwrap() - 0.2).abs() < 1e-15);
        let v = eq_norm_1(&[diag(&[0.1]), diag(&[0.3])], &[1, 1]).unwrap();
        assert!((v - 0.4).abs() < 1e-15);
        assert_eq!(eq_norm_1(&[CMat::zeros(2, 2)], &[2]).unwrap(), 0.0);
        assert!(eq_norm_1(&[diag(&[0.1])], &[1, 2]).is_err());
        let b = eq_norm_bounds(8, 2, 0.5);
        assert!((b.spectral_bound - 2.0).abs() < 1e-15);
        assert_eq!(eq_norm_bounds(8, 2, 0.0).spectral_bound, 0.0);
        assert_eq!(eq_norm_bounds(1, 1, 1.0).fourth_root_bound_factor, 1.0);
    }

    #[test]
    fn rescaled_convention() {
        let dep = KrausSet::depolarizing(1).to_choi();
        assert!(alt_ptm_wf2(&dep).abs() < 1e-15);
        let id = KrausSet::identity(2).to_choi();
        assert!((alt_ptm_wf2(&id) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn kraus_totals_are_parameter_blind() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        assert_eq!(kraus_frobenius_total(&KrausSet::identity(2)), 2.0);
        assert!((kraus_frobenius_total(&random_channel(&mut rng, 2, 2, 6)) - 2.0).abs() < 1e-10);
        assert!((kraus_frobenius_total(&random_channel(&mut rng, 4, 4, 3)) - 4.0).abs() < 1e-10);
    }

    #[test]
    fn identity_ptm_weight_attains_frobenius_bound() {
        let w = channel_to_weight(&ChannelRep::Kraus(KrausSet::identity(2)), WeightKind::Ptm).unwrap();
        assert!((frobenius_sq(&w.w) - ptm_wf2_upper(2, 2)).abs() < 1e-14);
    }

    #[test]
    fn sparsity_model_scaling() {
        assert_eq!(sparsity_model(4.0, 1.0, 3, 2), 8.0);
        assert_eq!(sparsity_model(4.0, 2.0, 2, 2), 4.0);
    }
}
