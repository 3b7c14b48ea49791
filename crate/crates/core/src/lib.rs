//! Simulation, Laplace transforms and maximum likelihood estimation of the
//! growth rate `b` for the stable Cox–Ingersoll–Ross process
//!
//! ```text
//! dY_t = (a - b Y_t) dt + σ √Y_t dW_t + δ Y_{t-}^{1/α} dL_t
//! ```
//!
//! driven by a Wiener process `W` and an independent spectrally positive
//! strictly α-stable Lévy process `L`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod levy;
pub mod model;
pub mod numerics;
pub mod simulate;
pub mod inference;
pub mod io;
pub mod transforms;
pub mod experiments;
pub mod oracle;

pub use error::{Error, Result};
pub use levy::StableLaw;
pub use model::{ModelParams, Regime};
pub use simulate::{Path, SimOptions};
pub use inference::{EstimateReport, Method};
pub use experiments::{ExperimentConfig, ExperimentResult};
