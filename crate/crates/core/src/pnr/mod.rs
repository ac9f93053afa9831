//! Multi-pixel detector model: conditional click matrix, forward map,
//! photon-number reconstruction and calibration fits.

mod characterize;
mod matrix;
mod profile;
mod reconstruct;

pub use characterize::{characterize_from_poisson, Characterization, CharacterizationOptions, PixelModel, CALIBRATION_TAIL};
pub use matrix::{build_conditional_matrix, poisson_cutoff, poisson_distribution, ConditionalMatrix, MAX_PIXELS};
pub use profile::{read_matrix_csv, write_matrix_csv, CalibrationData, DetectorProfile, REFERENCE_ENTRIES, REFERENCE_FIT};
pub use reconstruct::{reconstruct_distribution, Reconstruction, ReconstructionOptions};
