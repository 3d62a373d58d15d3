//! Transfer learning for matrix completion when whole rows and columns of
//! the target are missing.

pub mod design;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod sampling;
pub mod ssr;
pub mod transfer;

pub use error::{Error, Result};
pub use design::{Design, DesignRecord};
pub use estimator::{Metrics, RidgePolicy, SpectralFeatures, ThetaEstimate};
pub use harness::{EstimatorKind, ExperimentConfig, TrialResult};
pub use linalg::{DenseMatrix, MaskedMatrix, OrthonormalFactor, SvdTriple};
pub use sampling::{ActiveSample, ObservationSet, RowColMask};
pub use ssr::SSRReport;
pub use transfer::{ModelKind, ShiftKind, ShiftSpec, TransferPair};
