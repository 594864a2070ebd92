//! Weight matrices: a layer's deviation from the maximally depolarizing map.

use serde::{Deserialize, Serialize};

use super::repr::{ChannelRep, ProcessMatrix, TransferMatrix};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{c, identity, qubits_for_dim, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum WeightKind {
    Pm,
    Ptm,
}

impl std::fmt::Display for WeightKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightKind::Pm => "PM",
            WeightKind::Ptm => "PTM",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub kind: WeightKind,
    pub d_in: usize,
    pub d_out: usize,
    #[serde(with = "io::cmat")]
    pub w: CMat,
}

impl WeightMatrix {
    pub fn zeros(kind: WeightKind, d_in: usize, d_out: usize) -> Result<Self> {
        let shape = weight_shape(kind, d_in, d_out)?;
        Ok(Self { kind, d_in, d_out, w: CMat::zeros(shape.0, shape.1) })
    }

    pub fn new(kind: WeightKind, d_in: usize, d_out: usize, w: CMat) -> Result<Self> {
        let shape = weight_shape(kind, d_in, d_out)?;
        if w.shape() != shape {
            return Err(Error::Dimension(format!(
                "{kind} weight must be {shape:?}, got {:?}",
                w.shape()
            )));
        }
        Ok(Self { kind, d_in, d_out, w })
    }

    /// The depolarizing baseline that `W` is measured against.
    pub fn baseline(&self) -> CMat {
        baseline(self.kind, self.d_in, self.d_out)
    }

    /// Full representation matrix `baseline + W`.
    pub fn full(&self) -> CMat {
        self.baseline() + &self.w
    }

    pub fn to_rep(&self) -> Result<ChannelRep> {
        match self.kind {
            WeightKind::Pm => {
                Ok(ChannelRep::Pm(ProcessMatrix::new(qubits_for_dim(self.d_in)?, self.full())?))
            }
            WeightKind::Ptm => {
                Ok(ChannelRep::Ptm(TransferMatrix::new(self.d_in, self.d_out, self.full())?))
            }
        }
    }

    /// A same-kind weight with `W` replaced by `W + u`.
    pub fn shifted(&self, u: &CMat) -> Result<Self> {
        Self::new(self.kind, self.d_in, self.d_out, &self.w + u)
    }
}

fn weight_shape(kind: WeightKind, d_in: usize, d_out: usize) -> Result<(usize, usize)> {
    qubits_for_dim(d_in)?;
    qubits_for_dim(d_out)?;
    match kind {
        WeightKind::Pm if d_in != d_out => Err(Error::Representation(format!(
            "PM weights need a square channel, got {d_in} -> {d_out}"
        ))),
        WeightKind::Pm => Ok((d_in * d_in, d_in * d_in)),
        WeightKind::Ptm => Ok((d_out * d_out, d_in * d_in)),
    }
}

pub fn baseline(kind: WeightKind, d_in: usize, d_out: usize) -> CMat {
    match kind {
        WeightKind::Pm => {
            let m = d_in * d_in;
            identity(m).scale(1.0 / m as f64)
        }
        WeightKind::Ptm => {
            let mut b = CMat::zeros(d_out * d_out, d_in * d_in);
            b[(0, 0)] = c((d_in as f64 / d_out as f64).sqrt(), 0.0);
            b
        }
    }
}

pub fn channel_to_weight(rep: &ChannelRep, kind: WeightKind) -> Result<WeightMatrix> {
    let (d_in, d_out) = (rep.d_in(), rep.d_out());
    let full = match kind {
        WeightKind::Pm => {
            if d_in != d_out {
                return Err(Error::Representation(format!(
                    "PM weights need a square channel, got {d_in} -> {d_out}"
                )));
            }
            rep.to_pm()?.chi
        }
        WeightKind::Ptm => rep.to_ptm()?.r,
    };
    let w = full - baseline(kind, d_in, d_out);
    WeightMatrix::new(kind, d_in, d_out, w)
}

pub fn apply_pm(w: &WeightMatrix, rho: &CMat) -> Result<CMat> {
    if w.kind != WeightKind::Pm {
        return Err(Error::Representation("apply_pm needs a PM weight".into()));
    }
    w.to_rep()?.apply(rho)
}

pub fn apply_ptm(w: &WeightMatrix, rho: &CMat) -> Result<CMat> {
    if w.kind != WeightKind::Ptm {
        return Err(Error::Representation("apply_ptm needs a PTM weight".into()));
    }
    w.to_rep()?.apply(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::random::random_channel;
    use crate::channel::repr::KrausSet;
    use crate::linalg::{approx_eq, frobenius_sq, random_density, trace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weight_gives_maximally_mixed_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..=2 {
            let d = 1 << n;
            let rho = random_density(&mut rng, d);
            let w = WeightMatrix::zeros(WeightKind::Pm, d, d).unwrap();
            assert!(approx_eq(&apply_pm(&w, &rho).unwrap(), &identity(d).scale(1.0 / d as f64), 1e-14));
            let w = WeightMatrix::zeros(WeightKind::Ptm, 4, 2).unwrap();
            let rho4 = random_density(&mut rng, 4);
            assert!(approx_eq(&apply_ptm(&w, &rho4).unwrap(), &identity(2).scale(0.5), 1e-14));
        }
    }

    #[test]
    fn identity_channel_weights() {
        let id: ChannelRep = KrausSet::identity(2).into();
        let pm = channel_to_weight(&id, WeightKind::Pm).unwrap();
        let expected = CMat::from_diagonal(&crate::linalg::CVec::from_vec(vec![
            c(0.75, 0.0),
            c(-0.25, 0.0),
            c(-0.25, 0.0),
            c(-0.25, 0.0),
        ]));
        assert!(approx_eq(&pm.w, &expected, 1e-15));
        assert!(trace(&pm.w).norm() < 1e-15);

        let ptm = channel_to_weight(&id, WeightKind::Ptm).unwrap();
        let expected = CMat::from_diagonal(&crate::linalg::CVec::from_vec(vec![
            c(0.0, 0.0),
            c(1.0, 0.0),
            c(1.0, 0.0),
            c(1.0, 0.0),
        ]));
        assert!(approx_eq(&ptm.w, &expected, 1e-15));
        assert!((frobenius_sq(&ptm.w) - 3.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let rho = random_density(&mut rng, 2);
        assert!(approx_eq(&apply_pm(&pm, &rho).unwrap(), &rho, 1e-14));
        assert!(approx_eq(&apply_ptm(&ptm, &rho).unwrap(), &rho, 1e-14));
    }

    #[test]
    fn depolarizing_has_zero_weight() {
        let dep: ChannelRep = KrausSet::depolarizing(1).into();
        for kind in [WeightKind::Pm, WeightKind::Ptm] {
            assert!(frobenius_sq(&channel_to_weight(&dep, kind).unwrap().w) < 1e-28);
        }
    }

    #[test]
    fn pm_rejected_for_rectangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let k: ChannelRep = random_channel(&mut rng, 4, 2, 2).into();
        assert!(channel_to_weight(&k, WeightKind::Pm).is_err());
        assert!(channel_to_weight(&k, WeightKind::Ptm).is_ok());
    }

    #[test]
    fn apply_pm_on_ket_zero_matches_kraus() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let k = random_channel(&mut rng, 2, 2, 3);
        let mut rho = CMat::zeros(2, 2);
        rho[(0, 0)] = c(1.0, 0.0);
        let w = channel_to_weight(&k.clone().into(), WeightKind::Pm).unwrap();
        assert!(approx_eq(&apply_pm(&w, &rho).unwrap(), &k.apply(&rho).unwrap(), 1e-12));
    }
}
