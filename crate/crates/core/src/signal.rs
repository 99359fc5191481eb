//! Heart-rate response cycles and their structural features.
//!
//! A cycle is a prominent local maximum of the median-filtered series bounded
//! by the lowest points separating it from its neighbouring cycles (or the
//! series ends). The main cycle is the one with the highest peak; most
//! features describe its rise and decay, the rest summarise the whole family
//! of cycles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::SampleSet;
use crate::metrics::{mean, ols_slope, std_pop};

pub const DEFAULT_MEDIAN_WINDOW: usize = 5;
pub const DEFAULT_PROMINENCE_BPM: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("median window must be odd and positive, got {0}")]
    InvalidWindow(usize),
    #[error("series has no response cycle")]
    NoCycle,
    #[error("times and values differ in length ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
}

/// Sliding median with edge replication; output has the input's length.
pub fn median_filter(values: &[f64], window: usize) -> Result<Vec<f64>, SignalError> {
    if window == 0 || window % 2 == 0 {
        return Err(SignalError::InvalidWindow(window));
    }
    let n = values.len();
    let half = window / 2;
    let mut buf = Vec::with_capacity(window);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        buf.clear();
        for offset in 0..window {
            buf.push(values[(i + offset).saturating_sub(half).min(n - 1)]);
        }
        buf.sort_by(f64::total_cmp);
        out.push(buf[half]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub start_idx: usize,
    pub peak_idx: usize,
    pub end_idx: usize,
    pub peak_bpm: f64,
}

/// Local maxima (leftmost index of a plateau); series ends never qualify.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Topographic prominence of the peak at `i`.
fn prominence(x: &[f64], i: usize) -> f64 {
    let h = x[i];
    let mut left_min = h;
    for k in (0..i).rev() {
        if x[k] > h {
            break;
        }
        left_min = left_min.min(x[k]);
    }
    let mut right_min = h;
    for &v in &x[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Index of the minimum of `x[lo..=hi]`; ties resolved toward `prefer_hi`'s end.
fn argmin_in(x: &[f64], lo: usize, hi: usize, prefer_hi: bool) -> usize {
    let mut best = if prefer_hi { hi } else { lo };
    for k in lo..=hi {
        let better = if prefer_hi { x[k] <= x[best] } else { x[k] < x[best] };
        if better {
            best = k;
        }
    }
    best
}

/// Prominence-thresholded response cycles of a (median-filtered) series.
///
/// Cycles are returned in order. Consecutive cycles never overlap: the end of
/// one is at or before the start of the next, and they share an index only
/// when the minimum between the two peaks is a single sample.
pub fn detect_cycles(values: &[f64], prominence_min: f64) -> Vec<Cycle> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let peaks: Vec<usize> = local_maxima(values)
        .into_iter()
        .filter(|&i| prominence(values, i) >= prominence_min)
        .collect();
    let mut cycles = Vec::with_capacity(peaks.len());
    for (k, &p) in peaks.iter().enumerate() {
        let start_idx = match k {
            0 => argmin_in(values, 0, p, true),
            _ => argmin_in(values, peaks[k - 1], p, true),
        };
        let end_idx = match peaks.get(k + 1) {
            Some(&next) => argmin_in(values, p, next, false),
            None => argmin_in(values, p, n - 1, false),
        };
        cycles.push(Cycle {
            start_idx,
            peak_idx: p,
            end_idx,
            peak_bpm: values[p],
        });
    }
    cycles
}

/// The cycle with the highest peak; earliest peak on ties.
pub fn main_cycle(cycles: &[Cycle]) -> Result<&Cycle, SignalError> {
    cycles
        .iter()
        .reduce(|best, c| if c.peak_bpm > best.peak_bpm { c } else { best })
        .ok_or(SignalError::NoCycle)
}

pub const FEATURE_COUNT: usize = 16;

/// Column labels used in feature exports and subset reports.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "beta_up", "beta_down", "P", "P_mean", "P_std", "H", "W_up", "W_down", "W", "C_mean", "C_std",
    "V", "theta_up", "theta_down", "CC_mean", "CC_std",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// Structural description of one episode's heart-rate response.
///
/// Slopes are bpm/minute, widths and peak spacings minutes, angles radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub slope_up: f64,
    pub slope_down: f64,
    pub peak: f64,
    pub peak_mean: f64,
    pub peak_std: f64,
    pub height: f64,
    pub width_up: f64,
    pub width_down: f64,
    pub width: f64,
    pub cycle_mean: f64,
    pub cycle_std: f64,
    pub variation: f64,
    pub angle_up: f64,
    pub angle_down: f64,
    /// Absent when the episode has a single cycle.
    pub spacing_mean: Option<f64>,
    pub spacing_std: Option<f64>,
}

impl FeatureVector {
    /// Values in [`FEATURE_NAMES`] order, missing entries as `NaN`.
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.slope_up,
            self.slope_down,
            self.peak,
            self.peak_mean,
            self.peak_std,
            self.height,
            self.width_up,
            self.width_down,
            self.width,
            self.cycle_mean,
            self.cycle_std,
            self.variation,
            self.angle_up,
            self.angle_down,
            self.spacing_mean.unwrap_or(f64::NAN),
            self.spacing_std.unwrap_or(f64::NAN),
        ]
    }

    pub fn from_array(a: &[f64; FEATURE_COUNT]) -> Self {
        let opt = |v: f64| if v.is_nan() { None } else { Some(v) };
        Self {
            slope_up: a[0],
            slope_down: a[1],
            peak: a[2],
            peak_mean: a[3],
            peak_std: a[4],
            height: a[5],
            width_up: a[6],
            width_down: a[7],
            width: a[8],
            cycle_mean: a[9],
            cycle_std: a[10],
            variation: a[11],
            angle_up: a[12],
            angle_down: a[13],
            spacing_mean: opt(a[14]),
            spacing_std: opt(a[15]),
        }
    }
}

/// Computes the feature vector from sample times (minutes) and filtered values.
pub fn extract_features(
    times: &[f64],
    values: &[f64],
    cycles: &[Cycle],
) -> Result<FeatureVector, SignalError> {
    if times.len() != values.len() {
        return Err(SignalError::LengthMismatch {
            times: times.len(),
            values: values.len(),
        });
    }
    let main = main_cycle(cycles)?;
    let (s, p, e) = (main.start_idx, main.peak_idx, main.end_idx);

    let peak = values[p];
    let height = peak - values[s];
    let drop = peak - values[e];
    let width_up = times[p] - times[s];
    let width_down = times[e] - times[p];

    let span = &values[s..=e];
    let peaks: Vec<f64> = cycles.iter().map(|c| c.peak_bpm).collect();
    let spacings: Vec<f64> = cycles
        .windows(2)
        .map(|w| times[w[1].peak_idx] - times[w[0].peak_idx])
        .collect();
    let variation = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();

    Ok(FeatureVector {
        slope_up: ols_slope(&times[s..=p], &values[s..=p]),
        slope_down: ols_slope(&times[p..=e], &values[p..=e]),
        peak,
        peak_mean: mean(&peaks),
        peak_std: std_pop(&peaks),
        height,
        width_up,
        width_down,
        width: width_up + width_down,
        cycle_mean: mean(span),
        cycle_std: std_pop(span),
        variation,
        angle_up: height.atan2(width_up),
        angle_down: drop.atan2(width_down),
        spacing_mean: (!spacings.is_empty()).then(|| mean(&spacings)),
        spacing_std: (!spacings.is_empty()).then(|| std_pop(&spacings)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalConfig {
    pub median_window: usize,
    pub prominence_bpm: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            median_window: DEFAULT_MEDIAN_WINDOW,
            prominence_bpm: DEFAULT_PROMINENCE_BPM,
        }
    }
}

/// Filtered series, its cycles and features for one sample set.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub minutes: Vec<f64>,
    pub filtered: Vec<f64>,
    pub cycles: Vec<Cycle>,
    pub features: FeatureVector,
}

pub fn analyze(
    minutes: &[f64],
    bpm: &[f64],
    cfg: &SignalConfig,
) -> Result<Analysis, SignalError> {
    let filtered = median_filter(bpm, cfg.median_window)?;
    let cycles = detect_cycles(&filtered, cfg.prominence_bpm);
    let features = extract_features(minutes, &filtered, &cycles)?;
    Ok(Analysis {
        minutes: minutes.to_vec(),
        filtered,
        cycles,
        features,
    })
}

/// Runs [`analyze`] on a sample set with time measured from the segment start.
pub fn analyze_sample_set(set: &SampleSet, cfg: &SignalConfig) -> Result<Analysis, SignalError> {
    analyze(
        &set.series.minutes_since(set.segment.start),
        &set.series.bpm(),
        cfg,
    )
}

/// Feature vectors keyed by sample id, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub rows: Vec<FeatureVector>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn push(&mut self, id: impl Into<String>, row: FeatureVector) {
        self.ids.push(id.into());
        self.rows.push(row);
    }

    /// Raw values, one row per sample, missing entries `NaN`.
    pub fn matrix(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.len(), FEATURE_COUNT);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row.to_array().into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = String::from("sample_id");
        for name in FEATURE_NAMES {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.rows) {
            out.push_str(id);
            for v in row.to_array() {
                out.push(',');
                if !v.is_nan() {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self, String> {
        let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
        let mut lines = text.lines();
        let header = lines.next().ok_or("features.csv is empty")?;
        let expected: Vec<&str> = std::iter::once("sample_id").chain(FEATURE_NAMES).collect();
        if header.split(',').collect::<Vec<_>>() != expected {
            return Err("features.csv: unexpected header".into());
        }
        let mut table = FeatureTable::default();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != FEATURE_COUNT + 1 {
                return Err(format!("features.csv: line {}: wrong field count", lineno + 2));
            }
            let mut values = [f64::NAN; FEATURE_COUNT];
            for (j, f) in fields[1..].iter().enumerate() {
                if !f.is_empty() {
                    values[j] = f
                        .parse()
                        .map_err(|_| format!("features.csv: line {}: bad number {f:?}", lineno + 2))?;
                }
            }
            table.push(fields[0], FeatureVector::from_array(&values));
        }
        Ok(table)
    }
}
