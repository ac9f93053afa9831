use serde::{Deserialize, Serialize};

/// Single and coincidence detection probabilities per pump pulse for the
/// heralding detector h and the two idler detectors a, b.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionProbabilities {
    pub p_h: f64,
    pub p_a: f64,
    pub p_b: f64,
    pub p_ha: f64,
    pub p_hb: f64,
    pub p_ab: f64,
    pub p_hab: f64,
}

impl DetectionProbabilities {
    pub const NAMES: [&'static str; 7] = ["p_h", "p_a", "p_b", "p_ha", "p_hb", "p_ab", "p_hab"];

    pub fn values(&self) -> [f64; 7] {
        [self.p_h, self.p_a, self.p_b, self.p_ha, self.p_hb, self.p_ab, self.p_hab]
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
