//! Time-tag streams and window-based coincidence counting.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::statistics::CountRecord;

/// Detection channel. `HeraldLevel(k)` fires when the herald registers at
/// least k clicks, k = 1..N; the top level is the N-click channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    HeraldLevel(u8),
    DetA,
    DetB,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::HeraldLevel(k) => write!(f, "herald_level{k}"),
            Channel::DetA => f.write_str("det_a"),
            Channel::DetB => f.write_str("det_b"),
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "det_a" => Ok(Channel::DetA),
            "det_b" => Ok(Channel::DetB),
            _ => s
                .strip_prefix("herald_level")
                .and_then(|k| k.parse::<u8>().ok())
                .filter(|&k| k >= 1)
                .map(Channel::HeraldLevel)
                .ok_or_else(|| Error::invalid(format!("unknown channel '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeTag {
    pub channel: Channel,
    /// Picoseconds since the start of the run.
    pub time_ps: i64,
    pub pulse_index: u64,
}

pub const TIMETAG_HEADER: [&str; 3] = ["channel", "time_ps", "pulse_index"];

pub fn write_timetags<W: Write>(tags: &[TimeTag], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(TIMETAG_HEADER).map_err(io)?;
    for t in tags {
        w.write_record([t.channel.to_string(), t.time_ps.to_string(), t.pulse_index.to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timetags<R: Read>(reader: R) -> Result<Vec<TimeTag>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = r.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    if header.iter().ne(TIMETAG_HEADER) {
        return Err(Error::Parse { line: 1, message: format!("expected header {}", TIMETAG_HEADER.join(",")) });
    }
    let mut tags = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let parse_err = |what: &str, v: &str| Error::Parse { line, message: format!("bad {what} '{v}'") };
        let channel = rec[0].parse().map_err(|_| parse_err("channel", &rec[0]))?;
        let time_ps = rec[1].parse().map_err(|_| parse_err("time", &rec[1]))?;
        let pulse_index = rec[2].parse().map_err(|_| parse_err("pulse index", &rec[2]))?;
        tags.push(TimeTag { channel, time_ps, pulse_index });
    }
    Ok(tags)
}

#[derive(Default, Clone, Copy)]
struct PulseEvents {
    levels: u64,
    a: bool,
    b: bool,
}

/// Groups tags into pump-referenced windows: tag time t belongs to pulse
/// k = round(t / period) when |t − k·period| ≤ window/2. Herald multiplicity
/// is the highest level present; a level without all lower levels is a
/// malformed stream.
pub fn count_coincidences(tags: &[TimeTag], window_ps: f64, period_ps: f64, pulses: u64, pixels: usize) -> Result<CountRecord> {
    if !(period_ps > 0.0 && window_ps > 0.0 && window_ps < period_ps) {
        return Err(Error::invalid(format!("window {window_ps} ps must be positive and shorter than the period {period_ps} ps")));
    }
    if pixels == 0 || pixels > 63 {
        return Err(Error::invalid(format!("pixel count {pixels} outside 1..=63")));
    }
    let mut hits: Vec<(u64, Channel)> = Vec::with_capacity(tags.len());
    for t in tags {
        let k = (t.time_ps as f64 / period_ps).round();
        if k < 0.0 || k >= pulses as f64 {
            continue;
        }
        if (t.time_ps as f64 - k * period_ps).abs() > window_ps / 2.0 {
            continue;
        }
        if let Channel::HeraldLevel(level) = t.channel {
            if level as usize > pixels {
                return Err(Error::invalid(format!("herald level {level} exceeds pixel count {pixels}")));
            }
        }
        hits.push((k as u64, t.channel));
    }
    hits.sort_unstable();

    let mut record = CountRecord::empty(pixels);
    record.pulses = pulses;
    let mut i = 0;
    while i < hits.len() {
        let pulse = hits[i].0;
        let mut ev = PulseEvents::default();
        while i < hits.len() && hits[i].0 == pulse {
            match hits[i].1 {
                Channel::HeraldLevel(level) => ev.levels |= 1 << (level - 1),
                Channel::DetA => ev.a = true,
                Channel::DetB => ev.b = true,
            }
            i += 1;
        }
        let n = 64 - ev.levels.leading_zeros() as usize;
        if ev.levels != (1u64 << n) - 1 {
            return Err(Error::invalid(format!("pulse {pulse}: herald level present without all lower levels")));
        }
        tally(&mut record, n, ev.a, ev.b);
    }
    Ok(record)
}

/// Adds one pulse with `n` herald clicks and the given idler outcomes.
pub(crate) fn tally(record: &mut CountRecord, n: usize, a: bool, b: bool) {
    let h = n > 0;
    record.c_a += a as u64;
    record.c_b += b as u64;
    record.c_ab += (a && b) as u64;
    if h {
        record.c_h += 1;
        record.c_ha += a as u64;
        record.c_hb += b as u64;
        record.c_hab += (a && b) as u64;
        let m = &mut record.by_multiplicity[n - 1];
        m.h += 1;
        m.ha += a as u64;
        m.hb += b as u64;
        m.hab += (a && b) as u64;
    }
}
