//! Detector profiles on disk.
//!
//! A profile is a TOML file holding metadata and, optionally, the pixel
//! click probabilities and the calibration data they came from; the
//! conditional matrix sits beside it as CSV with header `n,m0,m1,...` and
//! one row per click number n.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::characterize::PixelModel;
use super::matrix::{build_conditional_matrix, ConditionalMatrix};

/// Calibration run a profile was fitted from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationData {
    pub mu: f64,
    pub counts: Vec<u64>,
    #[serde(default)]
    pub model: PixelModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProfileFile {
    name: String,
    pixels: usize,
    max_photons: usize,
    matrix_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    click_probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    standard_errors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    calibration: Option<CalibrationData>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorProfile {
    pub name: String,
    pub matrix: ConditionalMatrix,
    pub click_probabilities: Option<Vec<f64>>,
    pub standard_errors: Option<Vec<f64>>,
    pub calibration: Option<CalibrationData>,
}

/// Measured entries (n clicks, m photons) of the reference four-pixel
/// detector, stored verbatim in its profile.
pub const REFERENCE_ENTRIES: [(usize, usize, f64); 5] = [(1, 1, 0.84), (1, 2, 0.55), (2, 2, 0.42), (1, 3, 0.31), (1, 4, 0.17)];

/// Least-squares four-pixel fit to `REFERENCE_ENTRIES`. No pixel model
/// matches all five; the best fit misses by up to 2.3e-3.
pub const REFERENCE_FIT: [f64; 4] = [0.433038211657, 0.298797527807, 0.0537525158, 0.0537525158];

impl DetectorProfile {
    pub fn from_click_probabilities(name: &str, d: Vec<f64>, standard_errors: Option<Vec<f64>>, max_photons: usize) -> Result<Self> {
        let matrix = build_conditional_matrix(&d, max_photons)?;
        Ok(Self { name: name.to_string(), matrix, click_probabilities: Some(d), standard_errors, calibration: None })
    }

    /// Reference four-pixel detector with M = 9. Measured entries are kept
    /// as given; every other entry comes from `REFERENCE_FIT`, rescaled so
    /// each column keeps unit sum.
    pub fn reference() -> Self {
        const M: usize = 9;
        let fit = build_conditional_matrix(&REFERENCE_FIT, M).expect("reference fit is a valid pixel model");
        let mut entries = fit.entries().clone();
        for m in 0..M {
            let fixed: Vec<(usize, f64)> = REFERENCE_ENTRIES.iter().filter(|e| e.1 == m).map(|e| (e.0, e.2)).collect();
            if fixed.is_empty() {
                continue;
            }
            let fixed_mass: f64 = fixed.iter().map(|f| f.1).sum();
            let free_mass: f64 = (0..=4).filter(|n| !fixed.iter().any(|f| f.0 == *n)).map(|n| fit.entry(n, m)).sum();
            let scale = (1.0 - fixed_mass) / free_mass;
            for n in 0..=4 {
                entries[(n, m)] = match fixed.iter().find(|f| f.0 == n) {
                    Some(f) => f.1,
                    None => entries[(n, m)] * scale,
                };
            }
        }
        // exact unit column sums after rescaling
        for m in 0..M {
            let s: f64 = entries.column(m).sum();
            entries[(0, m)] += 1.0 - s;
        }
        Self {
            name: "reference-4px".to_string(),
            matrix: ConditionalMatrix::from_entries(entries).expect("reference matrix is column-stochastic"),
            click_probabilities: None,
            standard_errors: None,
            calibration: None,
        }
    }

    /// Writes `<stem>.toml` and `<stem>_matrix.csv` into `dir`; returns both
    /// paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let matrix_name = format!("{stem}_matrix.csv");
        let file = ProfileFile {
            name: self.name.clone(),
            pixels: self.matrix.pixel_count(),
            max_photons: self.matrix.max_photons(),
            matrix_file: matrix_name.clone(),
            click_probabilities: self.click_probabilities.clone(),
            standard_errors: self.standard_errors.clone(),
            calibration: self.calibration.clone(),
        };
        let text = toml::to_string(&file).map_err(|e| Error::Io(e.to_string()))?;
        let toml_path = dir.join(format!("{stem}.toml"));
        fs::write(&toml_path, text)?;
        let csv_path = dir.join(matrix_name);
        write_matrix_csv(&self.matrix, fs::File::create(&csv_path)?)?;
        Ok((toml_path, csv_path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: ProfileFile = toml::from_str(&text).map_err(|e| Error::Parse {
            line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let matrix = read_matrix_csv(fs::File::open(dir.join(&file.matrix_file))?)?;
        if matrix.pixel_count() != file.pixels || matrix.max_photons() != file.max_photons {
            return Err(Error::DimensionMismatch(format!(
                "profile declares {}x{}, matrix file is {}x{}",
                file.pixels + 1,
                file.max_photons,
                matrix.pixel_count() + 1,
                matrix.max_photons()
            )));
        }
        if let Some(d) = &file.click_probabilities {
            if d.len() != file.pixels {
                return Err(Error::DimensionMismatch(format!("{} click probabilities for {} pixels", d.len(), file.pixels)));
            }
        }
        Ok(Self {
            name: file.name,
            matrix,
            click_probabilities: file.click_probabilities,
            standard_errors: file.standard_errors,
            calibration: file.calibration,
        })
    }
}

pub fn write_matrix_csv<W: Write>(matrix: &ConditionalMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["n".to_string()];
    header.extend((0..matrix.max_photons()).map(|m| format!("m{m}")));
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for n in 0..=matrix.pixel_count() {
        let mut row = vec![n.to_string()];
        row.extend((0..matrix.max_photons()).map(|m| format!("{:e}", matrix.entry(n, m))));
        w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(reader: R) -> Result<ConditionalMatrix> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = r.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let cols = header.len().saturating_sub(1);
    if header.get(0) != Some("n") || cols == 0 || (0..cols).any(|m| header.get(m + 1) != Some(format!("m{m}").as_str())) {
        return Err(Error::Parse { line: 1, message: "expected header n,m0,m1,...".into() });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if rec.len() != cols + 1 {
            return Err(Error::Parse { line, message: format!("expected {} fields, found {}", cols + 1, rec.len()) });
        }
        let n: usize = rec[0].parse().map_err(|_| Error::Parse { line, message: format!("bad click number '{}'", &rec[0]) })?;
        if n != rows.len() {
            return Err(Error::Parse { line, message: format!("rows must be ordered n = 0, 1, ...; found {n}") });
        }
        let values = (1..=cols)
            .map(|j| rec[j].parse::<f64>().map_err(|_| Error::Parse { line, message: format!("bad number '{}'", &rec[j]) }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(values);
    }
    if rows.len() < 2 {
        return Err(Error::Parse { line: rows.len() + 1, message: "matrix needs at least two rows".into() });
    }
    let entries = DMatrix::from_fn(rows.len(), cols, |n, m| rows[n][m]);
    ConditionalMatrix::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_keeps_measured_entries() {
        let p = DetectorProfile::reference();
        for (n, m, v) in REFERENCE_ENTRIES {
            assert_eq!(p.matrix.entry(n, m), v);
        }
        assert!((p.matrix.entry(0, 1) - 0.16).abs() < 1e-12);
        assert!((p.matrix.entry(0, 2) - 0.03).abs() < 1e-12);
        assert_eq!(p.matrix.max_photons(), 9);
        assert_eq!(p.matrix.pixel_count(), 4);
    }

    #[test]
    fn reference_fit_is_stationary() {
        let cost = |d: &[f64]| -> f64 {
            let m = build_conditional_matrix(d, 5).unwrap();
            REFERENCE_ENTRIES.iter().map(|(n, k, v)| (m.entry(*n, *k) - v).powi(2)).sum()
        };
        let base = cost(&REFERENCE_FIT);
        let h = 1e-6;
        for j in 0..4 {
            let mut up = REFERENCE_FIT;
            up[j] += h;
            let mut dn = REFERENCE_FIT;
            dn[j] -= h;
            let g = (cost(&up) - cost(&dn)) / (2.0 * h);
            assert!(g.abs() < 1e-6, "gradient {g}");
        }
        assert!(base > 1e-6, "an exact fit would make the completion trivial");
    }

    #[test]
    fn round_trip_on_disk() {
        let dir = std::env::temp_dir().join(format!("profile-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let mut p = DetectorProfile::from_click_probabilities("x", vec![0.2, 0.2], Some(vec![1e-3, 1e-3]), 5).unwrap();
        p.calibration = Some(CalibrationData { mu: 1.0, counts: vec![5, 3, 1], model: PixelModel::Uniform });
        let (toml_path, _) = p.write(&dir, "det").unwrap();
        let back = DetectorProfile::read(&toml_path).unwrap();
        assert_eq!(back, p);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn matrix_csv_errors_carry_lines() {
        let bad = "n,m0,m1\n0,1,0.5\n1,0,x\n";
        match read_matrix_csv(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_matrix_csv("a,b\n".as_bytes()).is_err());
    }
}
