//! CSV schemas written by the commands and their self-validation.

use std::fs;
use std::io::Read;
use std::path::Path;

use herald_core::pnr::read_matrix_csv;
use herald_core::sim::{read_timetags, TIMETAG_HEADER};
use herald_core::statistics::CountRecord;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    /// Float or empty when the quantity is undefined.
    OptFloat,
    Text,
    Bool,
}

pub struct Schema {
    pub name: &'static str,
    pub columns: &'static [(&'static str, Kind)],
}

use Kind::*;

pub const CLICKS: Schema = Schema { name: "clicks", columns: &[("clicks", Int), ("count", Int)] };

pub const SWEEP: Schema = Schema {
    name: "model-sweep",
    columns: &[
        ("mode", Text),
        ("variant", Text),
        ("purity", Float),
        ("mu", Float),
        ("p_h", Float),
        ("p_a", Float),
        ("p_b", Float),
        ("p_ha", Float),
        ("p_hb", Float),
        ("p_ab", Float),
        ("p_hab", Float),
        ("g2_h", OptFloat),
        ("g2_unc", OptFloat),
        ("ratio_to_threshold", OptFloat),
    ],
};

pub const RECONSTRUCTION: Schema = Schema {
    name: "reconstruction",
    columns: &[("m", Int), ("p", Float), ("mc_mean", Float), ("mc_std", Float), ("lower95", Float), ("upper95", Float)],
};

pub const G2_SUMMARY: Schema = Schema {
    name: "g2-summary",
    columns: &[
        ("g2", Float),
        ("mc_mean", Float),
        ("mc_std", Float),
        ("lower95", Float),
        ("upper95", Float),
        ("residual_norm", Float),
        ("iterations", Int),
        ("mc_successes", Int),
        ("mc_failures", Int),
    ],
};

pub const COUNT_G2: Schema = Schema {
    name: "count-g2",
    columns: &[("quantity", Text), ("readout", Text), ("value", OptFloat), ("std_error", OptFloat)],
};

pub const PIXELS: Schema = Schema { name: "characterization", columns: &[("pixel", Int), ("d", Float), ("std_error", Float)] };

pub const ORACLE: Schema = Schema {
    name: "oracle-check",
    columns: &[
        ("mu", Float),
        ("eta_h", Float),
        ("eta_a", Float),
        ("eta_b", Float),
        ("pixels", Int),
        ("splitting", Text),
        ("purity", Float),
        ("readout", Text),
        ("max_abs_delta", Float),
        ("pass", Bool),
    ],
};

const TABLES: [&Schema; 7] = [&CLICKS, &SWEEP, &RECONSTRUCTION, &G2_SUMMARY, &COUNT_G2, &PIXELS, &ORACLE];

impl Schema {
    pub fn header(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.0).collect()
    }

    pub fn writer(&self, path: &Path) -> CliResult<csv::Writer<fs::File>> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        Ok(w)
    }

    fn check_row(&self, rec: &csv::StringRecord, line: usize) -> CliResult<()> {
        if rec.len() != self.columns.len() {
            return Err(CliError::Validation(format!("line {line}: {} fields, expected {}", rec.len(), self.columns.len())));
        }
        for (v, (col, kind)) in rec.iter().zip(self.columns) {
            let ok = match kind {
                Int => v.parse::<u64>().is_ok(),
                Float => v.parse::<f64>().is_ok_and(f64::is_finite),
                OptFloat => v.is_empty() || v.parse::<f64>().is_ok_and(f64::is_finite),
                Text => !v.is_empty(),
                Bool => v == "true" || v == "false",
            };
            if !ok {
                return Err(CliError::Validation(format!("line {line}: column '{col}' has invalid value '{v}'")));
            }
        }
        Ok(())
    }
}

/// Formats a quantity that may be undefined as an empty field.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Reads a `clicks,count` table whose rows list n = 0..N in order.
pub fn read_clicks(path: &Path) -> CliResult<Vec<u64>> {
    let file = fs::File::open(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    parse_clicks(file).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn parse_clicks<R: Read>(reader: R) -> CliResult<Vec<u64>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let header = r.headers().map_err(|e| CliError::Validation(format!("line 1: {e}")))?.clone();
    if header.iter().ne(CLICKS.header()) {
        return Err(CliError::Validation("line 1: expected header 'clicks,count'".into()));
    }
    let mut counts = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Validation(format!("line {line}: {e}")))?;
        CLICKS.check_row(&rec, line)?;
        let n: usize = rec[0].parse().expect("checked");
        if n != counts.len() {
            return Err(CliError::Validation(format!("line {line}: expected click class {}, found {n}", counts.len())));
        }
        counts.push(rec[1].parse().expect("checked"));
    }
    if counts.len() < 2 {
        return Err(CliError::Validation("click table needs rows for at least n = 0 and n = 1".into()));
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(CliError::Validation("click table holds no events".into()));
    }
    Ok(counts)
}

/// Identifies a CSV file by its header and checks every row against the
/// matching schema. Returns the schema name.
pub fn validate_file(path: &Path) -> CliResult<&'static str> {
    let bytes = fs::read(path).map_err(|e| CliError::Validation(format!("{e}")))?;
    let first = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let first = String::from_utf8_lossy(first);
    let header: Vec<&str> = first.trim_end_matches('\r').split(',').map(str::trim).collect();

    if header == TIMETAG_HEADER {
        read_timetags(bytes.as_slice())?;
        return Ok("timetags");
    }
    if header.first() == Some(&"pulses") {
        CountRecord::read_csv(bytes.as_slice())?;
        return Ok("counts");
    }
    if header.first() == Some(&"n") && header.get(1) == Some(&"m0") {
        read_matrix_csv(bytes.as_slice())?;
        return Ok("matrix");
    }
    if header == CLICKS.header() {
        parse_clicks(bytes.as_slice())?;
        return Ok(CLICKS.name);
    }
    let schema = TABLES
        .iter()
        .find(|s| s.header() == header)
        .ok_or_else(|| CliError::Validation(format!("line 1: unrecognized header '{first}'")))?;
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(bytes.as_slice());
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Validation(format!("line {line}: {e}")))?;
        schema.check_row(&rec, line)?;
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Validation("table has a header but no rows".into()));
    }
    Ok(schema.name)
}
