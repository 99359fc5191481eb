//! Lifelog file ingestion, food/segment alignment and noise filtering.
//!
//! File formats (all timestamps ISO-8601 with an explicit offset, stored as UTC):
//!
//! - `heart_rate.csv`: `timestamp,bpm`
//! - `activities.json`: array of `{start, end, label, venue_name?, venue_type?, lat?, lon?}`
//! - `food_log.csv`: `timestamp,foods` with `;`-separated food names
//! - rejection report: `sample_id,reason`

use std::fmt;

use chrono::{DateTime, Duration, SecondsFormat, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal;

pub type Timestamp = DateTime<Utc>;

pub const MIN_BPM: f64 = 20.0;
pub const MAX_BPM: f64 = 250.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: line {line}: {message}")]
    Parse {
        file: &'static str,
        line: u64,
        message: String,
    },
    #[error("{file}: line {line}: {message}")]
    Validation {
        file: &'static str,
        line: u64,
        message: String,
    },
    #[error("{file}: {message}")]
    Format { file: &'static str, message: String },
    #[error("activities.json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartRateSample {
    pub timestamp: Timestamp,
    pub bpm: f64,
}

/// Heart-rate samples sorted by strictly increasing timestamp.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HeartRateSeries {
    samples: Vec<HeartRateSample>,
}

impl HeartRateSeries {
    /// Sorts by timestamp; for duplicate timestamps the later entry wins.
    pub fn from_samples(mut samples: Vec<HeartRateSample>) -> Self {
        samples.sort_by_key(|s| s.timestamp);
        let mut out: Vec<HeartRateSample> = Vec::with_capacity(samples.len());
        for s in samples {
            match out.last_mut() {
                Some(last) if last.timestamp == s.timestamp => *last = s,
                _ => out.push(s),
            }
        }
        Self { samples: out }
    }

    pub fn samples(&self) -> &[HeartRateSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bpm(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.bpm).collect()
    }

    /// Sample times in minutes since `origin`.
    pub fn minutes_since(&self, origin: Timestamp) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| (s.timestamp - origin).num_seconds() as f64 / 60.0)
            .collect()
    }

    /// Samples with `start <= timestamp <= end`.
    pub fn window(&self, start: Timestamp, end: Timestamp) -> Self {
        let lo = self.samples.partition_point(|s| s.timestamp < start);
        let hi = self.samples.partition_point(|s| s.timestamp <= end);
        Self {
            samples: self.samples[lo..hi.max(lo)].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActivityRecord", into = "ActivityRecord")]
pub struct ActivitySegment {
    pub start: Timestamp,
    pub end: Timestamp,
    pub label: String,
    pub venue_name: Option<String>,
    pub venue_type: Option<String>,
    pub gps: Option<(f64, f64)>,
}

impl ActivitySegment {
    pub fn new(start: Timestamp, end: Timestamp, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
            venue_name: None,
            venue_type: None,
            gps: None,
        }
    }

    pub fn is_eating(&self) -> bool {
        self.label.eq_ignore_ascii_case("eating")
    }

    pub fn duration(&self) -> Duration {
        self.end - self.start
    }

    pub fn overlaps(&self, other: &ActivitySegment) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Distance from `t` to the closed interval `[start, end]`.
    fn distance_to(&self, t: Timestamp) -> Duration {
        if t < self.start {
            self.start - t
        } else if t > self.end {
            t - self.end
        } else {
            Duration::zero()
        }
    }
}

/// On-disk shape of one `activities.json` entry.
#[derive(Serialize, Deserialize)]
struct ActivityRecord {
    start: Timestamp,
    end: Timestamp,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    venue_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    venue_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
}

impl TryFrom<ActivityRecord> for ActivitySegment {
    type Error = String;

    fn try_from(r: ActivityRecord) -> Result<Self, String> {
        if r.start >= r.end {
            return Err(format!("segment {} must start before it ends", r.start));
        }
        if r.label.trim().is_empty() {
            return Err("activity label must not be empty".into());
        }
        let gps = match (r.lat, r.lon) {
            (Some(lat), Some(lon)) => Some((lat, lon)),
            (None, None) => None,
            _ => return Err("lat and lon must be given together".into()),
        };
        Ok(Self {
            start: truncate_seconds(r.start),
            end: truncate_seconds(r.end),
            label: r.label,
            venue_name: r.venue_name,
            venue_type: r.venue_type,
            gps,
        })
    }
}

impl From<ActivitySegment> for ActivityRecord {
    fn from(s: ActivitySegment) -> Self {
        Self {
            start: s.start,
            end: s.end,
            label: s.label,
            venue_name: s.venue_name,
            venue_type: s.venue_type,
            lat: s.gps.map(|g| g.0),
            lon: s.gps.map(|g| g.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodLogEntry {
    pub timestamp: Timestamp,
    pub food_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    HighStart,
    Empty,
    LowCoverage,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::HighStart => "high_start",
            RejectReason::Empty => "empty",
            RejectReason::LowCoverage => "low_coverage",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Heart-rate series and metadata for one eating episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub id: String,
    pub series: HeartRateSeries,
    pub segment: ActivitySegment,
    pub foods: Vec<FoodLogEntry>,
    pub rejected_reason: Option<RejectReason>,
}

impl SampleSet {
    pub fn is_accepted(&self) -> bool {
        self.rejected_reason.is_none()
    }

    pub fn food_names(&self) -> Vec<&str> {
        self.foods
            .iter()
            .flat_map(|f| f.food_names.iter().map(String::as_str))
            .collect()
    }
}

/// Stable identifier of the sample set taken from an eating segment.
pub fn sample_id(segment: &ActivitySegment) -> String {
    segment.start.format("%Y%m%dT%H%M%SZ").to_string()
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| truncate_seconds(t.with_timezone(&Utc)))
        .map_err(|e| format!("invalid timestamp {s:?}: {e} (ISO-8601 with offset required)"))
}

fn truncate_seconds(t: Timestamp) -> Timestamp {
    t.with_nanosecond(0).unwrap_or(t)
}

fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes)
}

fn check_header(
    file: &'static str,
    reader: &mut csv::Reader<&[u8]>,
    expected: &[&str],
) -> Result<(), IngestError> {
    let headers = reader.headers().map_err(|e| IngestError::Parse {
        file,
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(IngestError::Format {
            file,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

pub fn parse_heart_rate(bytes: &[u8]) -> Result<HeartRateSeries, IngestError> {
    const FILE: &str = "heart_rate.csv";
    let mut reader = csv_reader(bytes);
    check_header(FILE, &mut reader, &["timestamp", "bpm"])?;
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Parse {
            file: FILE,
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&record);
        if record.len() != 2 {
            return Err(IngestError::Parse {
                file: FILE,
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let timestamp = parse_timestamp(&record[0]).map_err(|message| IngestError::Parse {
            file: FILE,
            line,
            message,
        })?;
        let bpm: f64 = record[1].parse().map_err(|_| IngestError::Parse {
            file: FILE,
            line,
            message: format!("invalid bpm {:?}", &record[1]),
        })?;
        if !(bpm > MIN_BPM && bpm < MAX_BPM) {
            return Err(IngestError::Validation {
                file: FILE,
                line,
                message: format!("bpm {bpm} outside ({MIN_BPM}, {MAX_BPM})"),
            });
        }
        samples.push(HeartRateSample { timestamp, bpm });
    }
    Ok(HeartRateSeries::from_samples(samples))
}

pub fn write_heart_rate(series: &HeartRateSeries) -> Vec<u8> {
    let mut out = String::from("timestamp,bpm\n");
    for s in series.samples() {
        out.push_str(&format_timestamp(&s.timestamp));
        out.push(',');
        out.push_str(&s.bpm.to_string());
        out.push('\n');
    }
    out.into_bytes()
}

pub fn parse_activities(bytes: &[u8]) -> Result<Vec<ActivitySegment>, IngestError> {
    let mut segments: Vec<ActivitySegment> = serde_json::from_slice(bytes)?;
    segments.sort_by(|a, b| a.start.cmp(&b.start).then(a.end.cmp(&b.end)));
    Ok(segments)
}

pub fn write_activities(segments: &[ActivitySegment]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(segments).expect("activity segments serialize");
    out.push(b'\n');
    out
}

pub fn parse_food_log(bytes: &[u8]) -> Result<Vec<FoodLogEntry>, IngestError> {
    const FILE: &str = "food_log.csv";
    let mut reader = csv_reader(bytes);
    check_header(FILE, &mut reader, &["timestamp", "foods"])?;
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Parse {
            file: FILE,
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&record);
        if record.len() != 2 {
            return Err(IngestError::Parse {
                file: FILE,
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let timestamp = parse_timestamp(&record[0]).map_err(|message| IngestError::Parse {
            file: FILE,
            line,
            message,
        })?;
        let food_names: Vec<String> = record[1]
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if food_names.is_empty() {
            return Err(IngestError::Validation {
                file: FILE,
                line,
                message: "at least one food name is required".into(),
            });
        }
        entries.push(FoodLogEntry {
            timestamp,
            food_names,
        });
    }
    entries.sort_by_key(|e| e.timestamp);
    Ok(entries)
}

pub fn write_food_log(entries: &[FoodLogEntry]) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["timestamp", "foods"]).expect("in-memory write");
    for e in entries {
        writer
            .write_record([format_timestamp(&e.timestamp), e.food_names.join(";")])
            .expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

/// Food entries grouped by the eating segment they belong to.
#[derive(Debug, Clone, Default)]
pub struct Alignment {
    /// Eating segments in start order.
    pub segments: Vec<ActivitySegment>,
    /// `foods[i]` holds the entries matched to `segments[i]`.
    pub foods: Vec<Vec<FoodLogEntry>>,
    pub unmatched: Vec<FoodLogEntry>,
}

/// Matches each food entry to the eating segment containing its timestamp,
/// falling back to the nearest eating segment within `window`.
///
/// Ties in distance go to the earlier segment. Non-eating segments are ignored.
pub fn align_foods_to_segments(
    segments: &[ActivitySegment],
    foods: &[FoodLogEntry],
    window: Duration,
) -> Alignment {
    let mut eating: Vec<ActivitySegment> =
        segments.iter().filter(|s| s.is_eating()).cloned().collect();
    eating.sort_by_key(|s| s.start);
    let mut matched = vec![Vec::new(); eating.len()];
    let mut unmatched = Vec::new();
    for entry in foods {
        let best = eating
            .iter()
            .enumerate()
            .map(|(i, s)| (s.distance_to(entry.timestamp), i))
            .min();
        match best {
            Some((d, i)) if d <= window => matched[i].push(entry.clone()),
            _ => unmatched.push(entry.clone()),
        }
    }
    Alignment {
        segments: eating,
        foods: matched,
        unmatched,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub start_threshold_bpm: f64,
    pub coverage_min: f64,
    pub median_window: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            start_threshold_bpm: 100.0,
            coverage_min: 0.6,
            median_window: signal::DEFAULT_MEDIAN_WINDOW,
        }
    }
}

/// Applies the empty, high-start and low-coverage filters in that order.
///
/// The high-start check looks at the first median-filtered sample. Coverage
/// compares the sample count with one sample per minute of segment duration.
pub fn filter_noise(mut set: SampleSet, cfg: &NoiseConfig) -> SampleSet {
    set.rejected_reason = noise_reason(&set, cfg);
    set
}

fn noise_reason(set: &SampleSet, cfg: &NoiseConfig) -> Option<RejectReason> {
    if set.series.is_empty() {
        return Some(RejectReason::Empty);
    }
    let bpm = set.series.bpm();
    let first = match signal::median_filter(&bpm, cfg.median_window) {
        Ok(filtered) => filtered[0],
        Err(_) => bpm[0],
    };
    if first > cfg.start_threshold_bpm {
        return Some(RejectReason::HighStart);
    }
    let expected = set.segment.duration().num_seconds() as f64 / 60.0;
    if (set.series.len() as f64) < cfg.coverage_min * expected {
        return Some(RejectReason::LowCoverage);
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub match_window_min: i64,
    #[serde(flatten)]
    pub noise: NoiseConfig,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            match_window_min: 15,
            noise: NoiseConfig::default(),
        }
    }
}

/// Accepted and rejected sample sets plus unmatched food entries.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    /// All sample sets in segment order, each carrying its filter verdict.
    pub sets: Vec<SampleSet>,
    pub unmatched: Vec<FoodLogEntry>,
}

impl Ingested {
    pub fn accepted(&self) -> impl Iterator<Item = &SampleSet> {
        self.sets.iter().filter(|s| s.is_accepted())
    }

    pub fn rejected(&self) -> impl Iterator<Item = &SampleSet> {
        self.sets.iter().filter(|s| !s.is_accepted())
    }
}

/// Aligns, slices and filters: one sample set per eating segment.
pub fn build_sample_sets(
    heart_rate: &HeartRateSeries,
    segments: &[ActivitySegment],
    foods: &[FoodLogEntry],
    cfg: &IngestConfig,
) -> Ingested {
    let alignment =
        align_foods_to_segments(segments, foods, Duration::minutes(cfg.match_window_min));
    let sets = alignment
        .segments
        .into_iter()
        .zip(alignment.foods)
        .map(|(segment, foods)| {
            let set = SampleSet {
                id: sample_id(&segment),
                series: heart_rate.window(segment.start, segment.end),
                segment,
                foods,
                rejected_reason: None,
            };
            filter_noise(set, &cfg.noise)
        })
        .collect();
    Ingested {
        sets,
        unmatched: alignment.unmatched,
    }
}

pub fn write_rejections(sets: &[SampleSet]) -> Vec<u8> {
    let mut out = String::from("sample_id,reason\n");
    for s in sets {
        if let Some(reason) = s.rejected_reason {
            out.push_str(&format!("{},{}\n", s.id, reason));
        }
    }
    out.into_bytes()
}
