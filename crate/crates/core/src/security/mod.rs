//! Parameter estimation, covariance construction, information quantities
//! and asymptotic key rates under collective Gaussian attacks.

mod covariance;
mod estimate;
mod holevo;
mod keyrate;

pub use covariance::{build_covariance_matrix, CovAccumulator};
pub use estimate::{estimate_channel, estimate_from_covariance, ChannelEstimate, MIN_SAMPLES};
pub use holevo::{holevo_bound, holevo_pair, HolevoPair};
pub use keyrate::{
    inter_qnu_mi, inter_qnu_mi_max, mutual_info_ab, secret_key_rate, KeyRate, KeyRateParams,
    SecurityQuantities,
};

use thiserror::Error;

use crate::gaussian::GaussianError;

#[derive(Debug, Error)]
pub enum SecurityError {
    #[error("frame {0} carries no shot-noise calibration reference")]
    NotNormalized(u64),
    #[error("{got} samples available, at least {min} required")]
    InsufficientSamples { got: usize, min: usize },
    #[error("estimated QLT-QNU covariance {0:.3e} is not positive")]
    NegativeTransmittance(f64),
    #[error("stream length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("QNU index {index} out of range for {len} QNUs")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unphysical input: {0}")]
    UnphysicalInput(String),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}
