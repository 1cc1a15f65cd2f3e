pub mod disorder;
pub mod error;
pub mod fit;
pub mod harness;
pub mod lambert_w;
pub mod particle_sim;
pub mod quadrature;
pub mod spectral;

pub use disorder::{DisorderKind, DisorderSpec, EnvelopeResult, Validity};
pub use error::{Error, Result};
pub use harness::{ComparisonReport, ExperimentSpec, SeriesRow};
pub use lambert_w::{lambert_w, lambert_w_log, BranchIndex, LogArgument, Sign};
pub use particle_sim::{ConsumptionSeries, DeviceState, SimConfig};
pub use spectral::{
    AsymptoticCoeffs, EnsembleParams, InitialCondition, PhaseSpacePoint, Profile, Regime, SpectralMode, TwoVector,
};
