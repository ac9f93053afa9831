//! Brute-force photon-routing oracle.
//!
//! Every measurement in the model is diagonal in photon number, so the
//! coherences of the pair state never influence click statistics. The
//! oracle therefore enumerates the total pair number n (a convolution of
//! per-Schmidt-mode geometric laws) and, for each n, routes the n signal
//! and n idler photons independently:
//!
//! * a signal photon reaches pixel k with probability η_h T_k η_k and is
//!   lost otherwise; `herald_clicks` is the number of distinct pixels hit,
//!   obtained exactly by inclusion–exclusion over pixel subsets;
//! * an idler photon reaches detector a with probability η_a/2, b with
//!   η_b/2, and is lost otherwise.
//!
//! Nothing here samples, and nothing here shares code with the closed forms.

use crate::detector::{HeraldDetectorModel, IdlerArmConfig};
use crate::error::{Error, Result};
use crate::probabilities::DetectionProbabilities;
use crate::source::SourceConfig;

/// Tail mass accepted by default truncation.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

/// Subset enumeration is 2^N; keep it bounded.
pub const MAX_ORACLE_PIXELS: usize = 20;

const MAX_PAIR_NUMBER: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PairNumberDistribution {
    pub probabilities: Vec<f64>,
    pub truncation_tail: f64,
}

impl PairNumberDistribution {
    pub fn n_max(&self) -> usize {
        self.probabilities.len() - 1
    }
}

fn convolve_modes(source: &SourceConfig, n_max: usize) -> Vec<f64> {
    let mut dist = vec![0.0; n_max + 1];
    dist[0] = 1.0;
    for nu in source.mode_means() {
        if nu == 0.0 {
            continue;
        }
        let ratio = nu / (1.0 + nu);
        let mut geo = Vec::with_capacity(n_max + 1);
        let mut term = 1.0 / (1.0 + nu);
        for _ in 0..=n_max {
            geo.push(term);
            term *= ratio;
        }
        let mut next = vec![0.0; n_max + 1];
        for (i, &a) in dist.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &g) in geo[..=n_max - i].iter().enumerate() {
                next[i + j] += a * g;
            }
        }
        dist = next;
    }
    dist
}

fn tail_of(p: &[f64]) -> f64 {
    (1.0 - p.iter().sum::<f64>()).max(0.0)
}

/// Smallest n_max whose truncation tail is below `tolerance`.
pub fn auto_n_max(source: &SourceConfig, tolerance: f64) -> Result<usize> {
    if !(tolerance >= 1e-15) {
        return Err(Error::invalid(format!("tail tolerance {tolerance} below attainable precision")));
    }
    let ratio_max = source.mode_means().map(|nu| nu / (1.0 + nu)).fold(0.0, f64::max);
    if ratio_max == 0.0 {
        return Ok(0);
    }
    let modes = source.spectrum().len();
    let mut guess = ((tolerance.ln() / ratio_max.ln()).ceil() as usize).max(1) + 4 * modes;
    loop {
        if guess > MAX_PAIR_NUMBER {
            return Err(Error::invalid(format!("mean photon number {} needs more than {MAX_PAIR_NUMBER} pair terms", source.mu())));
        }
        let p = convolve_modes(source, guess);
        if tail_of(&p) < tolerance {
            let mut acc = 0.0;
            for (n, x) in p.iter().enumerate() {
                acc += x;
                if 1.0 - acc < tolerance {
                    return Ok(n);
                }
            }
            return Ok(guess);
        }
        guess *= 2;
    }
}

/// Pair-number law of the multimode source, truncated at `n_max`.
pub fn pair_distribution(source: &SourceConfig, n_max: usize, tolerance: f64) -> Result<PairNumberDistribution> {
    let probabilities = convolve_modes(source, n_max);
    let tail = tail_of(&probabilities);
    if tail >= tolerance {
        return Err(Error::Truncation {
            n_max,
            tail,
            tolerance,
            suggested: auto_n_max(source, tolerance)?,
        });
    }
    Ok(PairNumberDistribution { probabilities, truncation_tail: tail })
}

fn resolve_pairs(source: &SourceConfig, n_max: Option<usize>) -> Result<PairNumberDistribution> {
    let n = match n_max {
        Some(n) => n,
        None => auto_n_max(source, DEFAULT_TAIL_TOLERANCE)?,
    };
    pair_distribution(source, n, DEFAULT_TAIL_TOLERANCE)
}

/// Idler outcome index: bit 0 = a clicked, bit 1 = b clicked.
fn idler_outcomes(arm: &IdlerArmConfig, n: i32) -> [f64; 4] {
    let to_a = arm.eta_a() / 2.0;
    let to_b = arm.eta_b() / 2.0;
    let lost = 1.0 - to_a - to_b;
    let none = lost.powi(n);
    let not_b = (lost + to_a).powi(n);
    let not_a = (lost + to_b).powi(n);
    [none, not_b - none, not_a - none, 1.0 - not_a - not_b + none]
}

/// Probability of exactly c distinct pixels firing, c = 0..N, for n photons.
fn herald_click_distribution(click_probs: &[f64], n: i32, scratch: &mut [f64]) -> Vec<f64> {
    let pixels = click_probs.len();
    let lost = 1.0 - click_probs.iter().sum::<f64>();
    // scratch[S] = P(every photon lost or on a pixel in S)
    for (s, slot) in scratch.iter_mut().enumerate() {
        let reach: f64 = (0..pixels).filter(|k| s >> k & 1 == 1).map(|k| click_probs[k]).sum();
        *slot = (lost + reach).max(0.0).powi(n);
    }
    // Möbius inversion: scratch[S] = P(fired set is exactly S)
    for bit in 0..pixels {
        let b = 1usize << bit;
        for s in 0..scratch.len() {
            if s & b != 0 {
                scratch[s] -= scratch[s ^ b];
            }
        }
    }
    let mut by_count = vec![0.0; pixels + 1];
    for (s, &p) in scratch.iter().enumerate() {
        by_count[s.count_ones() as usize] += p;
    }
    by_count
}

/// Exact joint law of (herald click multiplicity, a clicked, b clicked).
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    /// `cells[c][o]`: c herald clicks, idler outcome o (bit 0 = a, bit 1 = b).
    cells: Vec<[f64; 4]>,
    pub truncation_tail: f64,
}

impl EventTable {
    pub fn pixel_count(&self) -> usize {
        self.cells.len() - 1
    }

    pub fn probability(&self, herald_clicks: usize, a_clicked: bool, b_clicked: bool) -> f64 {
        let o = a_clicked as usize | (b_clicked as usize) << 1;
        self.cells.get(herald_clicks).map_or(0.0, |c| c[o])
    }

    /// All outcome cells as (herald_clicks, a_clicked, b_clicked, probability).
    pub fn outcomes(&self) -> impl Iterator<Item = (usize, bool, bool, f64)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(c, row)| row.iter().enumerate().map(move |(o, &p)| (c, o & 1 == 1, o & 2 == 2, p)))
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }

    /// Marginal law of the herald click multiplicity.
    pub fn herald_marginal(&self) -> Vec<f64> {
        self.cells.iter().map(|row| row.iter().sum()).collect()
    }

    fn probabilities_where(&self, herald: impl Fn(usize) -> bool) -> DetectionProbabilities {
        let mut out = DetectionProbabilities::default();
        for (c, a, b, p) in self.outcomes() {
            let h = herald(c);
            if h {
                out.p_h += p;
            }
            if a {
                out.p_a += p;
            }
            if b {
                out.p_b += p;
            }
            if h && a {
                out.p_ha += p;
            }
            if h && b {
                out.p_hb += p;
            }
            if a && b {
                out.p_ab += p;
                if h {
                    out.p_hab += p;
                }
            }
        }
        out
    }

    /// Heralding on one or more clicks.
    pub fn threshold_probabilities(&self) -> DetectionProbabilities {
        self.probabilities_where(|c| c >= 1)
    }

    /// Heralding on exactly one click.
    pub fn exactly_one_click_probabilities(&self) -> DetectionProbabilities {
        self.probabilities_where(|c| c == 1)
    }
}

/// Exact event probabilities by enumeration over the pair number.
/// `n_max = None` picks the smallest truncation with tail below 1e-12.
pub fn exact_event_probabilities(
    source: &SourceConfig,
    herald: &HeraldDetectorModel,
    arm: &IdlerArmConfig,
    n_max: Option<usize>,
) -> Result<EventTable> {
    let pixels = herald.pixel_count();
    if pixels > MAX_ORACLE_PIXELS {
        return Err(Error::invalid(format!("oracle enumerates at most {MAX_ORACLE_PIXELS} pixels, got {pixels}")));
    }
    let pairs = resolve_pairs(source, n_max)?;
    let click_probs = herald.click_probabilities();
    let mut scratch = vec![0.0; 1 << pixels];
    let mut cells = vec![[0.0; 4]; pixels + 1];
    for (n, &pn) in pairs.probabilities.iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        let n = n as i32;
        let herald_dist = herald_click_distribution(&click_probs, n, &mut scratch);
        let idler = idler_outcomes(arm, n);
        for (row, &h) in cells.iter_mut().zip(&herald_dist) {
            for (cell, &i) in row.iter_mut().zip(&idler) {
                *cell += pn * h * i;
            }
        }
    }
    Ok(EventTable { cells, truncation_tail: pairs.truncation_tail })
}

/// Heralding on exactly one detected signal photon.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerfectPnrProbabilities {
    pub p_h1: f64,
    pub p_h1a: f64,
    pub p_h1b: f64,
    pub p_h1ab: f64,
}

/// Perfect photon-number-resolving herald with overall efficiency `eta_h`.
pub fn perfect_pnr_probabilities(
    source: &SourceConfig,
    eta_h: f64,
    arm: &IdlerArmConfig,
    n_max: Option<usize>,
) -> Result<PerfectPnrProbabilities> {
    if !(0.0..=1.0).contains(&eta_h) {
        return Err(Error::invalid(format!("eta_h must lie in [0, 1], got {eta_h}")));
    }
    let pairs = resolve_pairs(source, n_max)?;
    let mut out = PerfectPnrProbabilities::default();
    for (n, &pn) in pairs.probabilities.iter().enumerate().skip(1) {
        let n = n as i32;
        let one_detected = pn * n as f64 * eta_h * (1.0 - eta_h).powi(n - 1);
        if one_detected == 0.0 {
            continue;
        }
        let [_, a_only, b_only, both] = idler_outcomes(arm, n);
        out.p_h1 += one_detected;
        out.p_h1a += one_detected * (a_only + both);
        out.p_h1b += one_detected * (b_only + both);
        out.p_h1ab += one_detected * both;
    }
    Ok(out)
}
