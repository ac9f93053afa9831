//! Gaussian model of the heralded source: covariance-matrix engine and the
//! closed-form detection probabilities built on it.

pub mod closed_form;
pub mod covariance;
pub mod network;

pub use closed_form::{
    detection_probabilities, g2_heralded, g2_heralded_from, g2_unconditional, g2_unconditional_from, improvement_ratio,
    p_a, p_ab, p_b, p_herald_and_a, p_herald_and_a_and_b, p_herald_and_b, p_heralding, MIN_MU_FOR_G2,
};
pub use covariance::{herald_network, tmsv_covariance, CovarianceState};
pub use network::CovarianceRoute;
