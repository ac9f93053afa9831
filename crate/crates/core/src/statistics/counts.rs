use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::detector::ReadoutMode;
use crate::error::{Error, Result};

/// One-sided 95% Poisson upper limit for zero observed events.
const ZERO_COUNT_UPPER: f64 = 2.995_732_273_553_991;

/// Herald tallies restricted to events with exactly `n` herald clicks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MultiplicityCounts {
    pub h: u64,
    pub ha: u64,
    pub hb: u64,
    pub hab: u64,
}

/// Per-run tallies. `c_h` and its coincidences count threshold heralds
/// (one or more clicks); `by_multiplicity[n - 1]` splits them by click
/// multiplicity n = 1..N when available.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountRecord {
    pub pulses: u64,
    pub c_h: u64,
    pub c_a: u64,
    pub c_b: u64,
    pub c_ha: u64,
    pub c_hb: u64,
    pub c_ab: u64,
    pub c_hab: u64,
    pub by_multiplicity: Vec<MultiplicityCounts>,
}

const BASE_COLUMNS: [&str; 8] = ["pulses", "C_h", "C_a", "C_b", "C_ha", "C_hb", "C_ab", "C_hab"];

impl CountRecord {
    /// Empty record with room for `pixels` multiplicity classes.
    pub fn empty(pixels: usize) -> Self {
        Self { by_multiplicity: vec![MultiplicityCounts::default(); pixels], ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        for (name, c) in [("C_h", self.c_h), ("C_a", self.c_a), ("C_b", self.c_b)] {
            if c > self.pulses {
                return bad(format!("{name} = {c} exceeds pulses = {}", self.pulses));
            }
        }
        let pairs = [
            ("C_ha", self.c_ha, self.c_h.min(self.c_a)),
            ("C_hb", self.c_hb, self.c_h.min(self.c_b)),
            ("C_ab", self.c_ab, self.c_a.min(self.c_b)),
            ("C_hab", self.c_hab, self.c_ha.min(self.c_hb).min(self.c_ab)),
        ];
        for (name, c, limit) in pairs {
            if c > limit {
                return bad(format!("{name} = {c} exceeds a constituent count ({limit})"));
            }
        }
        if !self.by_multiplicity.is_empty() {
            let sum = |f: fn(&MultiplicityCounts) -> u64| self.by_multiplicity.iter().map(f).sum::<u64>();
            let totals = [
                ("C_h", sum(|m| m.h), self.c_h),
                ("C_ha", sum(|m| m.ha), self.c_ha),
                ("C_hb", sum(|m| m.hb), self.c_hb),
                ("C_hab", sum(|m| m.hab), self.c_hab),
            ];
            for (name, s, t) in totals {
                if s != t {
                    return bad(format!("multiplicity classes sum to {s} but {name} = {t}"));
                }
            }
            for (i, m) in self.by_multiplicity.iter().enumerate() {
                if m.ha > m.h || m.hb > m.h || m.hab > m.ha.min(m.hb) {
                    return bad(format!("inconsistent coincidences in multiplicity class {}", i + 1));
                }
            }
        }
        Ok(())
    }

    /// The record as seen with a given herald readout: threshold keeps the
    /// totals, exactly-one-click keeps only multiplicity-1 heralds.
    pub fn for_readout(&self, mode: ReadoutMode) -> Result<CountRecord> {
        match mode {
            ReadoutMode::Threshold => Ok(self.clone()),
            ReadoutMode::ExactlyOneClick => {
                let one = self
                    .by_multiplicity
                    .first()
                    .ok_or_else(|| Error::invalid("record carries no per-multiplicity herald counts"))?;
                Ok(CountRecord {
                    c_h: one.h,
                    c_ha: one.ha,
                    c_hb: one.hb,
                    c_hab: one.hab,
                    by_multiplicity: vec![*one],
                    ..self.clone()
                })
            }
            ReadoutMode::PerfectPnr => Err(Error::invalid("photon number is not observable from click counts")),
        }
    }

    pub fn merge(&mut self, other: &CountRecord) {
        self.pulses += other.pulses;
        self.c_h += other.c_h;
        self.c_a += other.c_a;
        self.c_b += other.c_b;
        self.c_ha += other.c_ha;
        self.c_hb += other.c_hb;
        self.c_ab += other.c_ab;
        self.c_hab += other.c_hab;
        if self.by_multiplicity.len() < other.by_multiplicity.len() {
            self.by_multiplicity.resize(other.by_multiplicity.len(), MultiplicityCounts::default());
        }
        for (m, o) in self.by_multiplicity.iter_mut().zip(&other.by_multiplicity) {
            m.h += o.h;
            m.ha += o.ha;
            m.hb += o.hb;
            m.hab += o.hab;
        }
    }

    pub fn csv_header(pixels: usize) -> Vec<String> {
        let mut h: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
        for n in 1..=pixels {
            h.extend([format!("C_h{n}"), format!("C_h{n}a"), format!("C_h{n}b"), format!("C_h{n}ab")]);
        }
        h
    }

    /// Header line plus one data row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(Self::csv_header(self.by_multiplicity.len())).map_err(io)?;
        let mut row: Vec<String> = [self.pulses, self.c_h, self.c_a, self.c_b, self.c_ha, self.c_hb, self.c_ab, self.c_hab]
            .iter()
            .map(u64::to_string)
            .collect();
        for m in &self.by_multiplicity {
            row.extend([m.h, m.ha, m.hb, m.hab].iter().map(u64::to_string));
        }
        w.write_record(&row).map_err(io)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
        let cols = header.len();
        if cols < BASE_COLUMNS.len() || (cols - BASE_COLUMNS.len()) % 4 != 0 {
            return Err(Error::Parse { line: 1, message: format!("unexpected count-record header with {cols} columns") });
        }
        let pixels = (cols - BASE_COLUMNS.len()) / 4;
        let expected = Self::csv_header(pixels);
        for (got, want) in header.iter().zip(&expected) {
            if got.trim() != want {
                return Err(Error::Parse { line: 1, message: format!("expected column '{want}', found '{got}'") });
            }
        }
        let mut rows = r.records();
        let rec = match rows.next() {
            None => return Err(Error::Parse { line: 2, message: "missing data row".into() }),
            Some(rec) => rec.map_err(|e| Error::Parse { line: 2, message: e.to_string() })?,
        };
        let line = rec.position().map_or(2, |p| p.line() as usize);
        let vals: Vec<u64> = rec
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.trim().parse::<u64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("column '{}' is not a non-negative integer: '{v}'", expected[i]),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(extra) = rows.next() {
            let line = extra.ok().and_then(|e| e.position().map(|p| p.line() as usize)).unwrap_or(line + 1);
            return Err(Error::Parse { line, message: "count record holds exactly one data row".into() });
        }
        let record = CountRecord {
            pulses: vals[0],
            c_h: vals[1],
            c_a: vals[2],
            c_b: vals[3],
            c_ha: vals[4],
            c_hb: vals[5],
            c_ab: vals[6],
            c_hab: vals[7],
            by_multiplicity: vals[8..]
                .chunks(4)
                .map(|c| MultiplicityCounts { h: c[0], ha: c[1], hb: c[2], hab: c[3] })
                .collect(),
        };
        record.validate().map_err(|e| Error::Parse { line, message: e.to_string() })?;
        Ok(record)
    }
}

/// Count ratio with first-order Poissonian error. When the numerator count
/// is zero the value is 0, `std_error` is the one-count resolution and
/// `upper_bound` the one-sided 95% limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub value: f64,
    pub std_error: f64,
    pub upper_bound: Option<f64>,
}

fn poisson_ratio(numerator: &[u64], denominator: &[u64], scale: f64) -> Result<RatioEstimate> {
    if denominator.iter().any(|&c| c == 0) {
        return Err(Error::undefined("count ratio with a zero count in the denominator"));
    }
    let den: f64 = denominator.iter().map(|&c| c as f64).product();
    let num_others: f64 = numerator[1..].iter().map(|&c| c as f64).product();
    let per_count = scale * num_others / den;
    let lead = numerator[0];
    if lead == 0 {
        return Ok(RatioEstimate { value: 0.0, std_error: per_count, upper_bound: Some(per_count * ZERO_COUNT_UPPER) });
    }
    let value = per_count * lead as f64;
    let rel_var: f64 = numerator.iter().chain(denominator).filter(|&&c| c > 0).map(|&c| 1.0 / c as f64).sum();
    Ok(RatioEstimate { value, std_error: value * rel_var.sqrt(), upper_bound: None })
}

/// g²_h = C_h C_hab / (C_ha C_hb).
pub fn g2_heralded_from_counts(c: &CountRecord) -> Result<RatioEstimate> {
    if c.c_h == 0 {
        return Err(Error::undefined("heralded g2 with no herald counts"));
    }
    poisson_ratio(&[c.c_hab, c.c_h], &[c.c_ha, c.c_hb], 1.0)
}

/// g²_unc = C_ab · pulses / (C_a C_b).
pub fn g2_unconditional_from_counts(c: &CountRecord) -> Result<RatioEstimate> {
    if c.pulses == 0 {
        return Err(Error::undefined("unconditional g2 with zero pulses"));
    }
    poisson_ratio(&[c.c_ab], &[c.c_a, c.c_b], c.pulses as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> CountRecord {
        CountRecord {
            pulses: 1_000_000,
            c_h: 1_000_000,
            c_a: 1000,
            c_b: 1000,
            c_ha: 10_000,
            c_hb: 10_000,
            c_ab: 2,
            c_hab: 10,
            by_multiplicity: vec![],
        }
    }

    #[test]
    fn heralded_arithmetic() {
        let mut c = record();
        c.c_a = 20_000;
        c.c_b = 20_000;
        let g = g2_heralded_from_counts(&c).unwrap();
        assert!((g.value - 0.1).abs() < 1e-15);
        let rel = (1.0 / 1e6 + 1.0 / 10.0 + 2.0 / 1e4f64).sqrt();
        assert!((g.std_error - 0.1 * rel).abs() < 1e-15);
    }

    #[test]
    fn unconditional_arithmetic() {
        let g = g2_unconditional_from_counts(&record()).unwrap();
        assert!((g.value - 2.0).abs() < 1e-15);
        assert!(g.upper_bound.is_none());
    }

    #[test]
    fn zero_numerator_gives_upper_bound() {
        let mut c = record();
        c.c_hab = 0;
        c.c_ab = 0;
        let g = g2_heralded_from_counts(&c).unwrap();
        assert_eq!(g.value, 0.0);
        assert!(g.upper_bound.unwrap() > 0.0);
        let u = g2_unconditional_from_counts(&c).unwrap();
        assert_eq!(u.value, 0.0);
        assert!((u.upper_bound.unwrap() - ZERO_COUNT_UPPER).abs() < 1e-12);
    }

    #[test]
    fn zero_denominator_rejected() {
        let mut c = record();
        c.c_ha = 0;
        assert!(matches!(g2_heralded_from_counts(&c), Err(Error::Undefined(_))));
        let mut c = record();
        c.c_a = 0;
        assert!(g2_unconditional_from_counts(&c).is_err());
    }

    #[test]
    fn validation_catches_inconsistency() {
        let mut c = CountRecord::empty(2);
        c.pulses = 10;
        c.c_h = 3;
        c.c_a = 2;
        c.c_ha = 2;
        c.by_multiplicity[0] = MultiplicityCounts { h: 2, ha: 2, hb: 0, hab: 0 };
        c.by_multiplicity[1] = MultiplicityCounts { h: 1, ha: 0, hb: 0, hab: 0 };
        assert!(c.validate().is_ok());
        c.c_ha = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let mut c = CountRecord::empty(2);
        c.pulses = 100;
        c.c_h = 5;
        c.by_multiplicity[0].h = 4;
        c.by_multiplicity[1].h = 1;
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("pulses,C_h,C_a,C_b,C_ha,C_hb,C_ab,C_hab,C_h1,C_h1a,C_h1b,C_h1ab,C_h2"));
        assert_eq!(CountRecord::read_csv(&buf[..]).unwrap(), c);

        let bad = text.replace(",4,", ",x,");
        match CountRecord::read_csv(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn readout_projection() {
        let mut c = CountRecord::empty(2);
        c.by_multiplicity[0] = MultiplicityCounts { h: 4, ha: 2, hb: 1, hab: 1 };
        c.by_multiplicity[1] = MultiplicityCounts { h: 2, ha: 1, hb: 1, hab: 1 };
        c.c_h = 6;
        let one = c.for_readout(ReadoutMode::ExactlyOneClick).unwrap();
        assert_eq!((one.c_h, one.c_ha, one.c_hb, one.c_hab), (4, 2, 1, 1));
        assert!(c.for_readout(ReadoutMode::PerfectPnr).is_err());
        assert!(CountRecord::default().for_readout(ReadoutMode::ExactlyOneClick).is_err());
    }
}
