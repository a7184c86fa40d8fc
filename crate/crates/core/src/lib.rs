//! Learned-latent sanitization: a VAE decoupler that isolates sensitive
//! factors in a dedicated latent block, privacy mechanisms that rewrite that
//! block, and the evaluation harness used to measure leakage and utility.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod dcorr;
pub mod decoupler;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod math;
pub mod mechanisms;

pub use data::{AttributeSchema, LabeledDataset, Role, SynthConfig};
pub use decoupler::{DecouplerConfig, DecouplerModel, LatentCode};
pub use error::{Error, Result};
pub use eval::{EvalConfig, GridPoint, Report, TradeoffCurve, TradeoffPoint};
pub use math::{Matrix, RngStream};
pub use mechanisms::{MechanismConfig, MechanismKind, PrivacyBudget, SanitizedDataset};
