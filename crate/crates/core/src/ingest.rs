//! Load data preparation: hourly CSV ingestion, curve-fit imputation,
//! resampling to simulation timeslots and seeded synthetic series.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_model::{BusId, NetworkModel};

/// Synthetic series use 10-minute samples.
pub const SAMPLES_PER_DAY: usize = 144;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: unknown bus {bus}")]
    UnknownBus { line: usize, bus: usize },
    #[error("gap at samples {start}..{end} lacks bracketing data")]
    GapTooWide { start: usize, end: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFlag {
    Measured,
    Missing,
    Imputed,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    pub bus: BusId,
    /// Seconds since the Unix epoch (synthetic series count from 0).
    pub timestamps: Vec<i64>,
    /// p.u.; NaN where `flags` says `Missing`.
    pub values: Vec<f64>,
    pub flags: Vec<SampleFlag>,
}

impl LoadSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn has_gaps(&self) -> bool {
        self.flags.contains(&SampleFlag::Missing)
    }

    pub fn zeros(bus: BusId, len: usize) -> Self {
        Self {
            bus,
            timestamps: (0..len as i64).map(|i| i * 600).collect(),
            values: vec![0.0; len],
            flags: vec![SampleFlag::Synthetic; len],
        }
    }
}

fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    None
}

/// Reads `timestamp_iso8601,bus_id,load_mw` rows into hourly per-bus series
/// in p.u. of `network.base_mva`. Missing hours between a bus's first and
/// last sample are kept as `Missing`.
pub fn load_hourly_csv(
    path: impl AsRef<Path>,
    network: &NetworkModel,
) -> Result<BTreeMap<BusId, LoadSeries>, IngestError> {
    let file = std::fs::File::open(path)?;
    read_hourly_csv(file, network)
}

pub fn read_hourly_csv(
    reader: impl std::io::Read,
    network: &NetworkModel,
) -> Result<BTreeMap<BusId, LoadSeries>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let mut raw: BTreeMap<BusId, BTreeMap<i64, f64>> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        if rec.len() != 3 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 3 fields, got {}", rec.len()),
            });
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| IngestError::MalformedRow {
            line,
            reason: format!("bad timestamp {:?}", &rec[0]),
        })?;
        let bus: usize = rec[1].parse().map_err(|_| IngestError::MalformedRow {
            line,
            reason: format!("bad bus id {:?}", &rec[1]),
        })?;
        if bus == 0 || bus > network.n_buses() {
            return Err(IngestError::UnknownBus { line, bus });
        }
        let mw: f64 = rec[2].parse().map_err(|_| IngestError::MalformedRow {
            line,
            reason: format!("bad load {:?}", &rec[2]),
        })?;
        if !mw.is_finite() || mw < 0.0 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("load must be finite and non-negative, got {mw}"),
            });
        }
        if raw.entry(BusId(bus)).or_default().insert(ts, mw).is_some() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "duplicate timestamp for bus".into(),
            });
        }
    }
    let hour = Duration::hours(1).num_seconds();
    let mut out = BTreeMap::new();
    for (bus, rows) in raw {
        let (&first, _) = rows.first_key_value().expect("non-empty");
        let (&last, _) = rows.last_key_value().expect("non-empty");
        let mut s = LoadSeries {
            bus,
            timestamps: Vec::new(),
            values: Vec::new(),
            flags: Vec::new(),
        };
        let mut t = first;
        while t <= last {
            s.timestamps.push(t);
            match rows.get(&t) {
                Some(mw) => {
                    s.values.push(mw / network.base_mva);
                    s.flags.push(SampleFlag::Measured);
                }
                None => {
                    s.values.push(f64::NAN);
                    s.flags.push(SampleFlag::Missing);
                }
            }
            t += hour;
        }
        out.insert(bus, s);
    }
    Ok(out)
}

/// Least-squares polynomial of degree <= 3 through up to four observed
/// samples on each side of every gap; observed samples are never changed.
pub fn impute_curve_fit(series: &LoadSeries) -> Result<LoadSeries, IngestError> {
    const SIDE: usize = 4;
    let mut out = series.clone();
    let n = series.len();
    let observed = |i: usize| series.flags[i] != SampleFlag::Missing;
    let mut i = 0;
    while i < n {
        if observed(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !observed(i) {
            i += 1;
        }
        let end = i;
        let left: Vec<usize> = (0..start).rev().filter(|&j| observed(j)).take(SIDE).collect();
        let right: Vec<usize> = (end..n).filter(|&j| observed(j)).take(SIDE).collect();
        if left.is_empty() || right.is_empty() || left.len() + right.len() < 4 {
            return Err(IngestError::GapTooWide { start, end });
        }
        let pts: Vec<usize> = left.into_iter().chain(right).collect();
        let center = (start + end) as f64 / 2.0;
        let span = pts.iter().map(|&j| (j as f64 - center).abs()).fold(1.0, f64::max);
        let deg = 3.min(pts.len() - 1);
        let a = DMatrix::from_fn(pts.len(), deg + 1, |r, c| ((pts[r] as f64 - center) / span).powi(c as i32));
        let b = DVector::from_iterator(pts.len(), pts.iter().map(|&j| series.values[j]));
        let coef = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|_| IngestError::GapTooWide { start, end })?;
        for j in start..end {
            let x = (j as f64 - center) / span;
            let v: f64 = coef.iter().enumerate().map(|(c, k)| k * x.powi(c as i32)).sum();
            out.values[j] = v.max(0.0);
            out.flags[j] = SampleFlag::Imputed;
        }
    }
    Ok(out)
}

/// Per-bus load values, one per LFC cycle, expanded to timeslots on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadTable {
    pub lfc_period: usize,
    /// `cycles[k][bus]`
    pub cycles: Vec<Vec<f64>>,
}

impl LoadTable {
    pub fn n_timeslots(&self) -> usize {
        self.cycles.len() * self.lfc_period
    }

    pub fn timeslot_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(self.n_timeslots());
        for c in &self.cycles {
            for _ in 0..self.lfc_period {
                rows.push(c.clone());
            }
        }
        rows
    }

    /// Per-bus series of cycle values.
    pub fn bus_series(&self, bus: BusId) -> Vec<f64> {
        self.cycles.iter().map(|c| c[bus.index()]).collect()
    }

    /// CSV `timeslot,bus_id,load_pu`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "timeslot,bus_id,load_pu")?;
        for (t, row) in self.timeslot_rows().iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                writeln!(out, "{},{},{}", t, i + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Treats each sample as one LFC cycle held for `lfc_period` timeslots.
/// The source interval only documents the data; consecutive samples are
/// replayed back to back without smoothing.
pub fn resample_consecutive(series: &LoadSeries, _source_interval_minutes: u32, lfc_period: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len() * lfc_period);
    for &v in &series.values {
        out.extend(std::iter::repeat_n(v, lfc_period));
    }
    out
}

/// Builds a load table from per-bus series (missing buses become zero).
pub fn table_from_series(
    network: &NetworkModel,
    series: &BTreeMap<BusId, LoadSeries>,
    lfc_period: usize,
) -> LoadTable {
    let len = series.values().map(|s| s.len()).max().unwrap_or(0);
    let cycles = (0..len)
        .map(|k| {
            network
                .bus_ids()
                .map(|b| series.get(&b).and_then(|s| s.values.get(k).copied()).unwrap_or(0.0))
                .collect()
        })
        .collect();
    LoadTable { lfc_period, cycles }
}

/// Default mapping of dataset series to load buses: the i-th bus with
/// nonzero base load (by id) takes source `i mod n_sources`.
pub fn round_robin_mapping(network: &NetworkModel, sources: &[BusId]) -> BTreeMap<BusId, BusId> {
    let mut targets: Vec<BusId> = network
        .buses()
        .iter()
        .filter(|b| b.p_load_base > 0.0)
        .map(|b| b.id)
        .collect();
    targets.sort();
    if sources.is_empty() {
        return BTreeMap::new();
    }
    targets
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, sources[i % sources.len()]))
        .collect()
}

/// Applies `mapping` (target bus -> source series), rescaling each series to
/// the target's base load when `match_base` is set.
pub fn map_series(
    network: &NetworkModel,
    sources: &BTreeMap<BusId, LoadSeries>,
    mapping: &BTreeMap<BusId, BusId>,
    match_base: bool,
) -> BTreeMap<BusId, LoadSeries> {
    let mut out = BTreeMap::new();
    for (&target, src) in mapping {
        let Some(s) = sources.get(src) else { continue };
        let mut s = s.clone();
        s.bus = target;
        if match_base {
            let mean = s.values.iter().sum::<f64>() / s.len().max(1) as f64;
            let base = network.buses()[target.index()].p_load_base;
            if mean > 0.0 {
                for v in &mut s.values {
                    *v *= base / mean;
                }
            }
        }
        out.insert(target, s);
    }
    out
}

/// Daily sinusoid plus seeded Gaussian noise, clipped at zero. One sample
/// per 10 minutes.
pub fn synth_load(base: f64, daily_amplitude: f64, noise_sigma: f64, length: usize, seed: u64) -> LoadSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("sigma >= 0");
    let values = (0..length)
        .map(|i| {
            let shape = synth_shape(base, daily_amplitude, i);
            let e = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (shape + e).max(0.0)
        })
        .collect();
    LoadSeries {
        bus: BusId(1),
        timestamps: (0..length as i64).map(|i| i * 600).collect(),
        values,
        flags: vec![SampleFlag::Synthetic; length],
    }
}

/// Deterministic part of [`synth_load`].
pub fn synth_shape(base: f64, daily_amplitude: f64, i: usize) -> f64 {
    let phase = 2.0 * std::f64::consts::PI * (i % SAMPLES_PER_DAY) as f64 / SAMPLES_PER_DAY as f64;
    base + daily_amplitude * phase.sin()
}
