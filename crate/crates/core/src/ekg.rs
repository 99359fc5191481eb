//! Event knowledge graphs.
//!
//! An eating episode is the subject of a small graph whose objects are event
//! aspects in six categories. Each aspect becomes one `<subject><predicate><object>`
//! triple. The causal category is part of the schema but is never filled in,
//! so it always counts as missing.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::Timelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{format_timestamp, ActivitySegment, SampleSet, Timestamp};

#[derive(Debug, Error, PartialEq)]
pub enum EkgError {
    #[error("missing-aspect ratio needs at least one event")]
    NoEvents,
    #[error("unknown graph format {0:?} (expected triples-json or edge-list)")]
    UnknownFormat(String),
    #[error("unknown aspect category {0:?}")]
    UnknownCategory(String),
    #[error("malformed graph document: {0}")]
    Malformed(String),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum AspectCategory {
    Temporal,
    Spatial,
    Experiential,
    Structural,
    Informational,
    Causal,
}

impl AspectCategory {
    pub const ALL: [AspectCategory; 6] = [
        AspectCategory::Temporal,
        AspectCategory::Spatial,
        AspectCategory::Experiential,
        AspectCategory::Structural,
        AspectCategory::Informational,
        AspectCategory::Causal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AspectCategory::Temporal => "temporal",
            AspectCategory::Spatial => "spatial",
            AspectCategory::Experiential => "experiential",
            AspectCategory::Structural => "structural",
            AspectCategory::Informational => "informational",
            AspectCategory::Causal => "causal",
        }
    }

    /// Column heading used in aspect reports.
    pub fn short(self) -> &'static str {
        match self {
            AspectCategory::Temporal => "T",
            AspectCategory::Spatial => "S",
            AspectCategory::Experiential => "E",
            AspectCategory::Structural => "St",
            AspectCategory::Informational => "I",
            AspectCategory::Causal => "C",
        }
    }
}

impl FromStr for AspectCategory {
    type Err = EkgError;

    fn from_str(s: &str) -> Result<Self, EkgError> {
        AspectCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| EkgError::UnknownCategory(s.to_string()))
    }
}

impl fmt::Display for AspectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Seed vocabulary; free-text predicates are also accepted.
pub mod predicates {
    pub const AT: &str = "at";
    pub const IN_THE: &str = "in-the";
    pub const AFTER: &str = "after";
    pub const UNDER: &str = "under";
    pub const HAS: &str = "has";
    pub const WHILE: &str = "while";
    pub const STARTS_AT: &str = "starts-at";
    pub const ENDS_AT: &str = "ends-at";
    pub const LASTS: &str = "lasts";
    pub const LOCATED_AT: &str = "located-at";
    pub const AT_VENUE_TYPE: &str = "at-venue-type";
    pub const RECORDED_BY: &str = "recorded-by";
    pub const ATE: &str = "ate";
    pub const SCHEDULED_AS: &str = "scheduled-as";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum AspectValue {
    Instant(Timestamp),
    /// Whole seconds.
    Duration(i64),
    Geo { lat: f64, lon: f64 },
    Text(String),
    Number(f64),
    Reference(String),
}

impl fmt::Display for AspectValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AspectValue::Instant(t) => f.write_str(&format_timestamp(t)),
            AspectValue::Duration(secs) => f.write_str(&format_duration(*secs)),
            AspectValue::Geo { lat, lon } => write!(f, "{lat:.6},{lon:.6}"),
            AspectValue::Text(s) | AspectValue::Reference(s) => f.write_str(s),
            AspectValue::Number(x) => write!(f, "{x}"),
        }
    }
}

/// `2h`, `1h30m`, `45m`, `90s`.
pub fn format_duration(secs: i64) -> String {
    let (h, m, s) = (secs / 3600, (secs % 3600) / 60, secs % 60);
    let mut out = String::new();
    if h > 0 {
        out.push_str(&format!("{h}h"));
    }
    if m > 0 {
        out.push_str(&format!("{m}m"));
    }
    if s > 0 || out.is_empty() {
        out.push_str(&format!("{s}s"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAspect {
    pub category: AspectCategory,
    pub predicate: String,
    pub value: AspectValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTriple {
    pub subject: String,
    pub predicate: String,
    pub object: AspectValue,
    pub category: AspectCategory,
}

impl fmt::Display for EventTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}><{}><{}>", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: String,
    pub activity: ActivitySegment,
    pub aspects: Vec<EventAspect>,
    pub triples: Vec<EventTriple>,
    pub heaviness_level: Option<usize>,
}

impl EventRecord {
    pub fn subject(&self) -> String {
        capitalize(&self.activity.label)
    }

    pub fn has(&self, category: AspectCategory) -> bool {
        self.aspects.iter().any(|a| a.category == category)
    }

    pub fn missing(&self) -> Vec<AspectCategory> {
        AspectCategory::ALL
            .into_iter()
            .filter(|c| !self.has(*c))
            .collect()
    }
}

/// Contextual inputs beyond the sample set itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventContext {
    /// Activities that may overlap the episode (non-overlapping ones are ignored).
    pub sub_activities: Vec<ActivitySegment>,
    pub calendar_notes: Vec<String>,
    pub stress_level: Option<String>,
    /// Identifiers of ambient sensor streams recorded during the episode.
    pub ambient_streams: Vec<String>,
}

/// Self-labeling outcome for one sample set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeavinessLabel {
    pub cluster: usize,
    pub level: usize,
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Part of the day of a UTC instant.
pub fn part_of_day(t: &Timestamp) -> &'static str {
    match t.hour() {
        5..=11 => "Morning",
        12..=16 => "Afternoon",
        17..=20 => "Evening",
        21..=23 => "Night",
        _ => "Late night",
    }
}

/// Assembles the event record of a sample set.
///
/// Absent inputs leave their category empty; nothing is fabricated.
pub fn build_event(
    set: &SampleSet,
    label: Option<HeavinessLabel>,
    ctx: &EventContext,
) -> EventRecord {
    use predicates::*;
    use AspectCategory::*;

    let seg = &set.segment;
    let mut aspects = Vec::new();
    let mut push = |category, predicate: &str, value| {
        aspects.push(EventAspect {
            category,
            predicate: predicate.to_string(),
            value,
        })
    };

    push(Temporal, STARTS_AT, AspectValue::Instant(seg.start));
    push(Temporal, ENDS_AT, AspectValue::Instant(seg.end));
    push(Temporal, LASTS, AspectValue::Duration(seg.duration().num_seconds()));
    push(Temporal, IN_THE, AspectValue::Text(part_of_day(&seg.start).into()));

    if let Some(name) = &seg.venue_name {
        push(Spatial, AT, AspectValue::Text(name.clone()));
    }
    if let Some(kind) = &seg.venue_type {
        push(Spatial, AT_VENUE_TYPE, AspectValue::Text(kind.clone()));
    }
    if let Some((lat, lon)) = seg.gps {
        push(Spatial, LOCATED_AT, AspectValue::Geo { lat, lon });
    }

    if !set.series.is_empty() {
        push(Experiential, RECORDED_BY, AspectValue::Reference(format!("heart-rate:{}", set.id)));
    }
    for stream in &ctx.ambient_streams {
        push(Experiential, RECORDED_BY, AspectValue::Reference(stream.clone()));
    }
    if let Some(stress) = &ctx.stress_level {
        push(Experiential, UNDER, AspectValue::Text(capitalize(stress)));
    }

    for sub in &ctx.sub_activities {
        if !sub.is_eating() && sub.overlaps(seg) {
            push(Structural, WHILE, AspectValue::Text(capitalize(&sub.label)));
        }
    }

    if let Some(l) = label {
        push(Informational, HAS, AspectValue::Text(format!("Level-{} food group", l.level)));
    }
    for food in set.food_names() {
        push(Informational, ATE, AspectValue::Text(food.to_string()));
    }
    for note in &ctx.calendar_notes {
        push(Informational, SCHEDULED_AS, AspectValue::Text(note.clone()));
    }

    let subject = capitalize(&seg.label);
    let triples = aspects
        .iter()
        .map(|a| EventTriple {
            subject: subject.clone(),
            predicate: a.predicate.clone(),
            object: a.value.clone(),
            category: a.category,
        })
        .collect();
    EventRecord {
        id: set.id.clone(),
        activity: seg.clone(),
        aspects,
        triples,
        heaviness_level: label.map(|l| l.level),
    }
}

/// One event per sample set, with sub-activities drawn from `activities`.
pub fn build_events(
    sets: &[SampleSet],
    labels: &HashMap<String, HeavinessLabel>,
    activities: &[ActivitySegment],
    extra: &HashMap<String, EventContext>,
) -> Vec<EventRecord> {
    sets.iter()
        .map(|set| {
            let mut ctx = extra.get(&set.id).cloned().unwrap_or_default();
            ctx.sub_activities.extend(
                activities
                    .iter()
                    .filter(|a| !a.is_eating() && a.overlaps(&set.segment))
                    .cloned(),
            );
            build_event(set, labels.get(&set.id).copied(), &ctx)
        })
        .collect()
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Percent of events lacking each aspect category, rounded to 2 decimals.
pub fn missing_aspect_ratio(
    events: &[EventRecord],
) -> Result<BTreeMap<AspectCategory, f64>, EkgError> {
    if events.is_empty() {
        return Err(EkgError::NoEvents);
    }
    let total = events.len() as f64;
    Ok(AspectCategory::ALL
        .into_iter()
        .map(|c| {
            let missing = events.iter().filter(|e| !e.has(c)).count() as f64;
            (c, round2(100.0 * missing / total))
        })
        .collect())
}

/// CSV with one row per user and one column per aspect category.
pub fn write_aspect_report(
    rows: &[(String, BTreeMap<AspectCategory, f64>)],
) -> Vec<u8> {
    let mut out = String::from("user");
    for c in AspectCategory::ALL {
        out.push(',');
        out.push_str(c.short());
    }
    out.push('\n');
    for (user, ratios) in rows {
        out.push_str(user);
        for c in AspectCategory::ALL {
            out.push_str(&format!(",{:.2}", ratios.get(&c).copied().unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out.into_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFormat {
    TriplesJson,
    EdgeList,
}

impl FromStr for GraphFormat {
    type Err = EkgError;

    fn from_str(s: &str) -> Result<Self, EkgError> {
        match s {
            "triples-json" => Ok(GraphFormat::TriplesJson),
            "edge-list" => Ok(GraphFormat::EdgeList),
            other => Err(EkgError::UnknownFormat(other.to_string())),
        }
    }
}

/// Flat serialized form of one triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleRow {
    pub event_id: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub category: String,
}

fn category_rank(c: &str) -> usize {
    AspectCategory::ALL
        .iter()
        .position(|x| x.as_str() == c)
        .unwrap_or(AspectCategory::ALL.len())
}

pub fn triple_rows(events: &[EventRecord]) -> Vec<TripleRow> {
    events
        .iter()
        .flat_map(|e| {
            e.triples.iter().map(move |t| TripleRow {
                event_id: e.id.clone(),
                subject: t.subject.clone(),
                predicate: t.predicate.clone(),
                object: t.object.to_string(),
                category: t.category.as_str().to_string(),
            })
        })
        .collect()
}

pub fn serialize_graph(events: &[EventRecord], format: GraphFormat) -> Vec<u8> {
    serialize_rows(triple_rows(events), format)
}

/// Writes rows sorted by event id, category, predicate and object.
pub fn serialize_rows(mut rows: Vec<TripleRow>, format: GraphFormat) -> Vec<u8> {
    rows.sort_by(|a, b| {
        a.event_id
            .cmp(&b.event_id)
            .then(category_rank(&a.category).cmp(&category_rank(&b.category)))
            .then_with(|| a.predicate.cmp(&b.predicate))
            .then_with(|| a.object.cmp(&b.object))
            .then_with(|| a.subject.cmp(&b.subject))
    });
    match format {
        GraphFormat::TriplesJson => {
            let mut out = serde_json::to_vec_pretty(&rows).expect("rows serialize");
            out.push(b'\n');
            out
        }
        GraphFormat::EdgeList => {
            let mut out = String::from("event_id\tsubject\tpredicate\tobject\tcategory\n");
            for r in &rows {
                let fields = [&r.event_id, &r.subject, &r.predicate, &r.object, &r.category];
                let line: Vec<String> = fields.iter().map(|f| escape(f)).collect();
                out.push_str(&line.join("\t"));
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

fn unescape(s: &str) -> Result<String, EkgError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('\\') => out.push('\\'),
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                other => return Err(EkgError::Malformed(format!("bad escape \\{other:?}"))),
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

pub fn parse_graph(bytes: &[u8], format: GraphFormat) -> Result<Vec<TripleRow>, EkgError> {
    let rows: Vec<TripleRow> = match format {
        GraphFormat::TriplesJson => {
            serde_json::from_slice(bytes).map_err(|e| EkgError::Malformed(e.to_string()))?
        }
        GraphFormat::EdgeList => {
            let text = std::str::from_utf8(bytes).map_err(|e| EkgError::Malformed(e.to_string()))?;
            let mut lines = text.lines();
            if lines.next() != Some("event_id\tsubject\tpredicate\tobject\tcategory") {
                return Err(EkgError::Malformed("missing edge-list header".into()));
            }
            lines
                .map(|line| {
                    let f: Vec<&str> = line.split('\t').collect();
                    if f.len() != 5 {
                        return Err(EkgError::Malformed(format!("expected 5 fields: {line:?}")));
                    }
                    Ok(TripleRow {
                        event_id: unescape(f[0])?,
                        subject: unescape(f[1])?,
                        predicate: unescape(f[2])?,
                        object: unescape(f[3])?,
                        category: unescape(f[4])?,
                    })
                })
                .collect::<Result<_, _>>()?
        }
    };
    for r in &rows {
        r.category.parse::<AspectCategory>()?;
    }
    Ok(rows)
}
