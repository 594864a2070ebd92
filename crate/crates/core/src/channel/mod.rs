//! Channel representations, conversions, application and layered models.

pub mod layered;
pub mod pauli;
pub mod random;
pub mod repr;
pub mod weight;

pub use layered::{
    extract_layer_channel, model_output, product_choi, reupload_compose, Layer, LayerKind,
    LayeredModel, Op,
};
pub use pauli::{pauli_basis, pauli_strings, PauliIndex, PauliString};
pub use repr::{
    check_density, compose, validate_cptp, ChannelRep, Choi, CptpReport, KrausSet, ProcessMatrix,
    TransferMatrix,
};
pub use weight::{apply_pm, apply_ptm, channel_to_weight, WeightKind, WeightMatrix};
