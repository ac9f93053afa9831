//! Reference operating point of the characterized source and detector.

/// Signal (heralding) arm efficiency.
pub const ETA_H: f64 = 0.6348;
/// Idler arm efficiency before the 50/50 splitter.
pub const ETA_I: f64 = 0.6051;
pub const ETA_A: f64 = 0.6293;
pub const ETA_B: f64 = 0.5809;
/// Approximate spectral purity of the idler mode.
pub const PURITY: f64 = 0.84;

pub const PIXELS: usize = 4;
/// Photon-number range used for reconstruction.
pub const MAX_PHOTONS: usize = 9;

/// Mean photon number of the Poissonian calibration light and its spread.
pub const CALIBRATION_MU: f64 = 1.0;
pub const CALIBRATION_SIGMA: f64 = 0.05;
pub const MONTE_CARLO_ITERATIONS: usize = 1000;

pub const REPETITION_RATE_HZ: f64 = 76e6;
pub const COINCIDENCE_WINDOW_PS: f64 = 1000.0;

/// Mean photon number at which efficiencies are calibrated.
pub const KLYSHKO_MU: f64 = 5e-4;
