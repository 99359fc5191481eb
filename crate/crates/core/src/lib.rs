//! Daily-event enrichment from multimodal lifelogs.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`ingest`] parses heart-rate, activity and food-log files, aligns food
//!    entries to eating segments and rejects noisy sample sets.
//! 2. [`signal`] median-filters each series, segments it into response cycles
//!    and extracts the structural feature vector of the main cycle.
//! 3. [`featsel`] ranks feature subsets by mean silhouette.
//! 4. [`graphcluster`] builds a k-NN affinity graph, runs normalized spectral
//!    clustering for each candidate K and keeps the K with the highest
//!    modularity. Girvan-Newman and K-means baselines live here too.
//! 5. [`ekg`] turns each episode into a six-aspect event knowledge graph.
//!
//! [`synth`] generates lifelogs with planted food classes so every stage has
//! ground truth, and [`pipeline`] wires the stages to files on disk.

pub mod ekg;
pub mod featsel;
pub mod graphcluster;
pub mod ingest;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod signal;
pub mod synth;

mod fsutil;

pub use graphcluster::{AffinityGraph, Clustering, Method, SpectralMode, SweepResult};
pub use ingest::{ActivitySegment, FoodLogEntry, HeartRateSample, HeartRateSeries, SampleSet};
pub use signal::{Cycle, FeatureVector};
