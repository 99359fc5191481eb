//! Synthetic lifelogs and clustering fixtures with planted ground truth.

use chrono::{Duration, TimeZone, Utc};
use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphcluster::AffinityGraph;
use crate::ingest::{
    sample_id, write_activities, write_food_log, write_heart_rate, ActivitySegment, FoodLogEntry,
    HeartRateSample, HeartRateSeries, Timestamp,
};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("template {name:?}: {message}")]
    InvalidTemplate { name: String, message: String },
    #[error("{duration} minutes cannot hold {needed} minutes of response cycles")]
    Infeasible { duration: f64, needed: f64 },
    #[error("a lifelog needs at least two food classes")]
    TooFewClasses,
    #[error("noise rates must be non-negative and sum to at most 1")]
    InvalidNoiseMix,
}

/// Heart-rate response template of one food class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodClassTemplate {
    pub name: String,
    pub baseline_bpm: f64,
    pub height_bpm: f64,
    pub rise_min: f64,
    pub decay_min: f64,
    pub n_cycles: usize,
    pub noise_std_bpm: f64,
    /// Food names logged for episodes of this class.
    #[serde(default)]
    pub foods: Vec<String>,
}

impl FoodClassTemplate {
    pub fn cycle_minutes(&self) -> f64 {
        self.n_cycles as f64 * (self.rise_min + self.decay_min)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |message: &str| {
            Err(SynthError::InvalidTemplate {
                name: self.name.clone(),
                message: message.to_string(),
            })
        };
        if self.rise_min <= 0.0 || self.decay_min <= 0.0 {
            return fail("rise and decay must be positive");
        }
        if self.n_cycles == 0 {
            return fail("at least one cycle is required");
        }
        if self.noise_std_bpm < 0.0 {
            return fail("noise must be non-negative");
        }
        if self.height_bpm <= 3.0 * self.noise_std_bpm {
            return fail("height must exceed three noise standard deviations");
        }
        Ok(())
    }
}

/// Three classes of increasing response intensity.
pub fn default_templates(noise_std_bpm: f64) -> Vec<FoodClassTemplate> {
    let class = |name: &str, height, rise, decay, cycles, foods: &[&str]| FoodClassTemplate {
        name: name.into(),
        baseline_bpm: 66.0,
        height_bpm: height,
        rise_min: rise,
        decay_min: decay,
        n_cycles: cycles,
        noise_std_bpm,
        foods: foods.iter().map(|s| s.to_string()).collect(),
    };
    vec![
        class("light", 14.0, 6.0, 9.0, 1, &["oatmeal", "sweet bread", "strawberry smoothie", "green salad"]),
        class("medium", 26.0, 9.0, 15.0, 1, &["sushi", "croissant sandwich", "poke", "chicken rice"]),
        class("heavy", 40.0, 12.0, 22.0, 1, &["spicy ramen", "steak", "pork with spicy sauce", "beer"]),
    ]
}

/// Noiseless response value at `minute`: triangular bumps on a baseline.
fn bump_value(t: &FoodClassTemplate, starts: &[f64], minute: f64) -> f64 {
    let mut v = t.baseline_bpm;
    for &s in starts {
        let rel = minute - s;
        let bump = if rel <= 0.0 || rel >= t.rise_min + t.decay_min {
            0.0
        } else if rel <= t.rise_min {
            t.height_bpm * rel / t.rise_min
        } else {
            t.height_bpm * (t.rise_min + t.decay_min - rel) / t.decay_min
        };
        v = v.max(t.baseline_bpm + bump);
    }
    v
}

/// Whole-minute onsets of each cycle, spread evenly with baseline gaps.
pub fn cycle_onsets(t: &FoodClassTemplate, duration_min: f64) -> Result<Vec<f64>, SynthError> {
    t.validate()?;
    let needed = t.cycle_minutes();
    if duration_min < needed {
        return Err(SynthError::Infeasible {
            duration: duration_min,
            needed,
        });
    }
    let gap = (duration_min - needed) / (t.n_cycles as f64 + 1.0);
    Ok((0..t.n_cycles)
        .map(|i| (gap + i as f64 * (t.rise_min + t.decay_min + gap)).floor())
        .collect())
}

/// One bpm value per minute over `[0, duration_min)`, noise included.
pub fn response_values(
    t: &FoodClassTemplate,
    duration_min: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, SynthError> {
    let starts = cycle_onsets(t, duration_min)?;
    let samples = duration_min.ceil() as usize;
    let noise = Normal::new(0.0, t.noise_std_bpm.max(0.0)).expect("finite std");
    Ok((0..samples)
        .map(|m| {
            let v = bump_value(t, &starts, m as f64);
            let e = if t.noise_std_bpm > 0.0 { noise.sample(rng) } else { 0.0 };
            (v + e).clamp(30.0, 220.0)
        })
        .collect())
}

/// Seeded response series starting at `start`, one sample per minute.
pub fn gen_hr_response(
    t: &FoodClassTemplate,
    duration_min: f64,
    start: Timestamp,
    seed: u64,
) -> Result<HeartRateSeries, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = response_values(t, duration_min, &mut rng)?;
    Ok(series_from(start, &values))
}

fn series_from(start: Timestamp, values: &[f64]) -> HeartRateSeries {
    HeartRateSeries::from_samples(
        values
            .iter()
            .enumerate()
            .map(|(m, &bpm)| HeartRateSample {
                timestamp: start + Duration::minutes(m as i64),
                bpm: (bpm * 10.0).round() / 10.0,
            })
            .collect(),
    )
}

/// Fractions of episodes receiving each data-quality defect.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseMix {
    pub high_start: f64,
    pub empty: f64,
    pub partial: f64,
}

impl NoiseMix {
    /// 18% of episodes split 8/6/4 between high-start, empty and partial.
    pub fn eighteen_percent() -> Self {
        Self {
            high_start: 0.08,
            empty: 0.06,
            partial: 0.04,
        }
    }

    pub fn total(&self) -> f64 {
        self.high_start + self.empty + self.partial
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    HighStart,
    Empty,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub sample_id: String,
    pub class: String,
    /// 1 = lightest class.
    pub heaviness_rank: usize,
}

/// Generated lifelog files plus out-of-band ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LifelogBundle {
    pub heart_rate: HeartRateSeries,
    pub activities: Vec<ActivitySegment>,
    pub foods: Vec<FoodLogEntry>,
    pub truth: Vec<TruthRow>,
    pub defects: Vec<(String, Defect)>,
}

impl LifelogBundle {
    pub fn truth_csv(&self) -> Vec<u8> {
        let mut out = String::from("sample_id,class,heaviness_rank\n");
        for r in &self.truth {
            out.push_str(&format!("{},{},{}\n", r.sample_id, r.class, r.heaviness_rank));
        }
        out.into_bytes()
    }

    /// `(file name, contents)` for every file of the bundle.
    pub fn files(&self) -> Vec<(&'static str, Vec<u8>)> {
        vec![
            ("heart_rate.csv", write_heart_rate(&self.heart_rate)),
            ("activities.json", write_activities(&self.activities)),
            ("food_log.csv", write_food_log(&self.foods)),
            ("truth.csv", self.truth_csv()),
        ]
    }
}

pub fn parse_truth(bytes: &[u8]) -> Result<Vec<TruthRow>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    if lines.next() != Some("sample_id,class,heaviness_rank") {
        return Err("truth.csv: unexpected header".into());
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(format!("truth.csv: malformed row {l:?}"));
            }
            Ok(TruthRow {
                sample_id: f[0].into(),
                class: f[1].into(),
                heaviness_rank: f[2].parse().map_err(|_| format!("truth.csv: bad rank in {l:?}"))?,
            })
        })
        .collect()
}

const MEAL_HOURS: [(u32, u32); 3] = [(8, 0), (12, 30), (19, 0)];
const VENUES: [(&str, &str); 4] = [
    ("Home", "home"),
    ("Campus cafeteria", "cafeteria"),
    ("Italian restaurant", "restaurant"),
    ("Office", "work"),
];

/// Generates `n_per_class` eating episodes per class, three meals a day.
///
/// Classes are interleaved at random. Exactly `round(rate × episodes)`
/// episodes receive each defect type. Heaviness ranks follow ascending
/// response height (baseline breaks ties).
pub fn gen_lifelog(
    classes: &[FoodClassTemplate],
    n_per_class: usize,
    noise_mix: NoiseMix,
    seed: u64,
) -> Result<LifelogBundle, SynthError> {
    if classes.len() < 2 {
        return Err(SynthError::TooFewClasses);
    }
    for c in classes {
        c.validate()?;
    }
    let rates = [noise_mix.high_start, noise_mix.empty, noise_mix.partial];
    if rates.iter().any(|r| !(*r >= 0.0)) || noise_mix.total() > 1.0 {
        return Err(SynthError::InvalidNoiseMix);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranking: Vec<usize> = (0..classes.len()).collect();
    ranking.sort_by(|&a, &b| {
        classes[a]
            .height_bpm
            .total_cmp(&classes[b].height_bpm)
            .then(classes[a].baseline_bpm.total_cmp(&classes[b].baseline_bpm))
            .then(a.cmp(&b))
    });
    let mut rank_of = vec![0; classes.len()];
    for (r, &c) in ranking.iter().enumerate() {
        rank_of[c] = r + 1;
    }

    let mut order: Vec<usize> = (0..classes.len())
        .flat_map(|c| std::iter::repeat_n(c, n_per_class))
        .collect();
    order.shuffle(&mut rng);
    let total = order.len();

    let mut defect_of: Vec<Option<Defect>> = vec![None; total];
    let mut slots: Vec<usize> = (0..total).collect();
    slots.shuffle(&mut rng);
    let mut next_slot = slots.into_iter();
    for (rate, defect) in rates.iter().zip([Defect::HighStart, Defect::Empty, Defect::Partial]) {
        let count = (rate * total as f64).round() as usize;
        for slot in next_slot.by_ref().take(count) {
            defect_of[slot] = Some(defect);
        }
    }

    let day0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).single().expect("valid date");
    let mut samples = Vec::new();
    let mut activities = Vec::new();
    let mut foods = Vec::new();
    let mut truth = Vec::new();
    let mut defects = Vec::new();

    for (i, &c) in order.iter().enumerate() {
        let t = &classes[c];
        let (hour, minute) = MEAL_HOURS[i % MEAL_HOURS.len()];
        let start = day0
            + Duration::days((i / MEAL_HOURS.len()) as i64)
            + Duration::hours(hour as i64)
            + Duration::minutes(minute as i64);
        let duration_min = t.cycle_minutes().ceil() + 10.0 + rng.random_range(0..=6) as f64;
        let end = start + Duration::minutes(duration_min as i64);
        let mut values = response_values(t, duration_min, &mut rng)?;

        let mut segment = ActivitySegment::new(start, end, "Eating");
        if rng.random_bool(0.85) {
            let (name, kind) = VENUES[rng.random_range(0..VENUES.len())];
            segment.venue_name = Some(name.into());
            segment.venue_type = Some(kind.into());
            segment.gps = Some((
                33.64 + rng.random_range(-0.05..0.05),
                -117.84 + rng.random_range(-0.05..0.05),
            ));
        }
        let id = sample_id(&segment);
        activities.push(segment);
        if rng.random_bool(0.4) {
            let talk_start = start + Duration::minutes(rng.random_range(2..8));
            activities.push(ActivitySegment::new(
                talk_start,
                talk_start + Duration::minutes(10),
                "Talking",
            ));
        }
        activities.push(ActivitySegment::new(
            end + Duration::minutes(20),
            end + Duration::minutes(140),
            "Working",
        ));

        match defect_of[i] {
            Some(Defect::HighStart) => {
                for (m, v) in values.iter_mut().take(6).enumerate() {
                    *v = *v + 52.0 - 6.0 * m as f64;
                }
            }
            Some(Defect::Empty) => values.clear(),
            Some(Defect::Partial) => {
                let keep = (values.len() as f64 * 0.4).floor() as usize;
                values.truncate(keep);
            }
            None => {}
        }
        if let Some(d) = defect_of[i] {
            defects.push((id.clone(), d));
        }
        samples.extend(series_from(start, &values).samples().iter().copied());

        let k = rng.random_range(1..=2.min(t.foods.len().max(1)));
        let mut names: Vec<String> = if t.foods.is_empty() {
            vec![format!("{} dish", t.name)]
        } else {
            t.foods.choose_multiple(&mut rng, k).cloned().collect()
        };
        names.sort();
        foods.push(FoodLogEntry {
            timestamp: start + Duration::minutes(rng.random_range(0..5)),
            food_names: names,
        });
        truth.push(TruthRow {
            sample_id: id,
            class: t.name.clone(),
            heaviness_rank: rank_of[c],
        });
    }
    activities.push(ActivitySegment::new(
        day0 - Duration::hours(8),
        day0 - Duration::hours(1),
        "Sleeping",
    ));
    activities.sort_by_key(|a| (a.start, a.end));

    Ok(LifelogBundle {
        heart_rate: HeartRateSeries::from_samples(samples),
        activities,
        foods,
        truth,
        defects,
    })
}

/// Two interleaving half circles with Gaussian jitter; labels 0 and 1.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite std");
    let outer = n / 2;
    let inner = n - outer;
    let mut pts = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    let angle = |i: usize, count: usize| {
        if count <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    for i in 0..outer {
        let t = angle(i, outer);
        pts[(i, 0)] = t.cos();
        pts[(i, 1)] = t.sin();
        labels.push(0);
    }
    for i in 0..inner {
        let t = angle(i, inner);
        pts[(outer + i, 0)] = 1.0 - t.cos();
        pts[(outer + i, 1)] = 0.5 - t.sin();
        labels.push(1);
    }
    if noise > 0.0 {
        for v in pts.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    (pts, labels)
}

/// Isotropic Gaussian blobs, `n_per` points around each center.
pub fn gaussian_blobs(
    centers: &[Vec<f64>],
    n_per: usize,
    std: f64,
    seed: u64,
) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std.max(0.0)).expect("finite std");
    let dim = centers.first().map_or(0, Vec::len);
    let n = centers.len() * n_per;
    let mut pts = DMatrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for i in 0..n_per {
            let row = c * n_per + i;
            for d in 0..dim {
                pts[(row, d)] = center[d] + if std > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            }
            labels.push(c);
        }
    }
    (pts, labels)
}

/// Stochastic block model with equal-size contiguous blocks.
pub fn planted_partition(
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> (AffinityGraph, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i * blocks / n.max(1)).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = AffinityGraph::from_edges(n, &edges).expect("valid edges");
    (graph, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{detect_cycles, extract_features};

    fn template(height: f64, rise: f64, decay: f64, cycles: usize, noise: f64) -> FoodClassTemplate {
        FoodClassTemplate {
            name: "t".into(),
            baseline_bpm: 65.0,
            height_bpm: height,
            rise_min: rise,
            decay_min: decay,
            n_cycles: cycles,
            noise_std_bpm: noise,
            foods: vec![],
        }
    }

    fn start() -> Timestamp {
        Utc.with_ymd_and_hms(2020, 1, 1, 12, 0, 0).unwrap()
    }

    #[test]
    fn noiseless_peak_is_exact() {
        let s = gen_hr_response(&template(40.0, 8.0, 12.0, 1, 0.0), 40.0, start(), 1).unwrap();
        let max = s.bpm().into_iter().fold(f64::MIN, f64::max);
        assert_eq!(max, 105.0);
        assert_eq!(s.len(), 40);
    }

    #[test]
    fn seeded_repeatable() {
        let t = template(40.0, 8.0, 12.0, 2, 3.0);
        assert_eq!(
            gen_hr_response(&t, 60.0, start(), 9).unwrap(),
            gen_hr_response(&t, 60.0, start(), 9).unwrap()
        );
        assert_ne!(
            gen_hr_response(&t, 60.0, start(), 9).unwrap(),
            gen_hr_response(&t, 60.0, start(), 10).unwrap()
        );
    }

    #[test]
    fn infeasible_duration() {
        let t = template(40.0, 8.0, 12.0, 2, 0.0);
        assert_eq!(
            gen_hr_response(&t, 30.0, start(), 0).unwrap_err(),
            SynthError::Infeasible { duration: 30.0, needed: 40.0 }
        );
    }

    #[test]
    fn template_validation() {
        assert!(template(5.0, 8.0, 12.0, 1, 2.0).validate().is_err());
        assert!(template(40.0, 0.0, 12.0, 1, 0.0).validate().is_err());
        assert!(template(40.0, 8.0, 12.0, 0, 0.0).validate().is_err());
    }

    #[test]
    fn extraction_recovers_noiseless_template() {
        let t = template(40.0, 8.0, 12.0, 1, 0.0);
        let s = gen_hr_response(&t, 45.0, start(), 0).unwrap();
        let x = s.bpm();
        let minutes = s.minutes_since(start());
        let f = extract_features(&minutes, &x, &detect_cycles(&x, 5.0)).unwrap();
        assert_eq!(f.height, 40.0);
        assert!((f.width_up - 8.0).abs() <= 1.0);
        assert!((f.width_down - 12.0).abs() <= 1.0);
    }

    #[test]
    fn lifelog_counts() {
        let b = gen_lifelog(&default_templates(0.0), 20, NoiseMix::default(), 3).unwrap();
        assert_eq!(b.truth.len(), 60);
        assert_eq!(b.foods.len(), 60);
        assert_eq!(b.activities.iter().filter(|a| a.is_eating()).count(), 60);
        assert!(b.defects.is_empty());
        let ranks: Vec<(String, usize)> = b
            .truth
            .iter()
            .map(|r| (r.class.clone(), r.heaviness_rank))
            .collect();
        assert!(ranks.contains(&("light".into(), 1)));
        assert!(ranks.contains(&("heavy".into(), 3)));
        assert_eq!(parse_truth(&b.truth_csv()).unwrap(), b.truth);
    }

    #[test]
    fn defect_counts_are_exact() {
        let b = gen_lifelog(&default_templates(2.0), 50, NoiseMix::eighteen_percent(), 4).unwrap();
        // 150 episodes: 12 high-start, 9 empty, 6 partial.
        assert_eq!(b.defects.len(), 27);
        let count = |d| b.defects.iter().filter(|x| x.1 == d).count();
        assert_eq!(count(Defect::HighStart), 12);
        assert_eq!(count(Defect::Empty), 9);
        assert_eq!(count(Defect::Partial), 6);
    }

    #[test]
    fn lifelog_needs_two_classes() {
        let one = &default_templates(0.0)[..1];
        assert_eq!(gen_lifelog(one, 5, NoiseMix::default(), 0).unwrap_err(), SynthError::TooFewClasses);
        let bad = NoiseMix { high_start: 0.7, empty: 0.4, partial: 0.0 };
        assert_eq!(
            gen_lifelog(&default_templates(0.0), 5, bad, 0).unwrap_err(),
            SynthError::InvalidNoiseMix
        );
    }

    #[test]
    fn moons_shape() {
        let (pts, labels) = two_moons(100, 0.0, 0);
        assert_eq!(pts.shape(), (100, 2));
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 50);
        assert!((pts[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((pts[(50, 0)] - 0.0).abs() < 1e-12 && (pts[(50, 1)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn planted_partition_blocks() {
        let (g, labels) = planted_partition(90, 3, 0.8, 0.05, 1);
        assert_eq!(labels[0], 0);
        assert_eq!(labels[89], 2);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 30);
        let edges = g.edges();
        let inside = edges.iter().filter(|e| labels[e.0] == labels[e.1]).count();
        assert!(inside > 8 * (edges.len() - inside));
    }
}
