//! Two-photon polarization state of a sub-threshold, type-II OPO whose
//! vertically polarized mode is squeezed and whose horizontal mode carries
//! a weak coherent field.
//!
//! The pipeline runs from source parameters ([`opo`]) through the
//! second-order correlation record to the density matrix and its
//! entanglement measures ([`two_photon`]), then to rate-weighted figures of
//! merit ([`metrics`]) and parameter sweeps ([`sweep`]). [`oracle`] rebuilds
//! the correlations from the cavity spectra by numerical Fourier transform
//! as an independent check of the closed forms.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod metrics;
pub mod opo;
pub mod oracle;
pub mod quad;
pub mod sweep;
pub mod two_photon;

pub use error::{Error, Result};
pub use metrics::{flux_metrics, FluxMetrics};
pub use opo::{pair_correlations, OpoParams, PairCorrelations, ParamsRecord, VvvvForm};
pub use quad::QuadConfig;
pub use sweep::{eval_point, run_sweep, EvalOptions, PointReport, SweepResult, SweepSpec};
pub use two_photon::{build_odm, entanglement_metrics, TwoPhotonOdm};
