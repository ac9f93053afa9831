//! Modeling and analysis of heralded single-photon sources read out by
//! multi-pixel photon-number-resolving detectors.

pub mod detector;
pub mod distribution;
pub mod error;
pub mod estimation;
pub mod gaussian;
pub mod oracle;
pub mod pnr;
pub mod presets;
pub mod probabilities;
pub mod sim;
pub mod source;
pub mod statistics;

pub use detector::{HeraldDetectorModel, IdlerArmConfig, ReadoutMode};
pub use distribution::{ClickDistribution, PhotonNumberDistribution};
pub use error::{Error, Result};
pub use probabilities::DetectionProbabilities;
pub use source::{SchmidtSpectrum, SourceConfig};
