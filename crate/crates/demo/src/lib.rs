//! Browser demo. Each operation takes plain numbers and returns a JSON string
//! so the page can stay framework-free.

use edl_core::ingest::Timestamp;
use edl_core::graphcluster::{build_knn_graph, default_knn, kmeans, spectral_cluster, sweep_k, SpectralOptions, Weighting};
use edl_core::metrics::adjusted_rand_index;
use edl_core::signal::{analyze, SignalConfig, FEATURE_NAMES};
use edl_core::synth::{gen_hr_response, planted_partition, two_moons, FoodClassTemplate};
use edl_core::AffinityGraph;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn edge_list(g: &AffinityGraph) -> Vec<[usize; 2]> {
    g.edges().into_iter().map(|(u, v, _)| [u, v]).collect()
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Two moons clustered by spectral clustering on a k-NN graph and by plain
/// K-means on the coordinates.
pub fn moons(n: usize, noise: f64, seed: u64) -> Result<Value, String> {
    if n < 8 {
        return Err("need at least 8 points".into());
    }
    let (pts, truth) = two_moons(n, noise, seed);
    let g = build_knn_graph(&pts, default_knn(n), Weighting::Binary).map_err(|e| e.to_string())?;
    let sc = spectral_cluster(&g, 2, seed, &SpectralOptions::default()).map_err(|e| e.to_string())?;
    let km = kmeans(&pts, 2, seed, &Default::default()).map_err(|e| e.to_string())?;
    let points: Vec<[f64; 2]> = (0..n).map(|i| [pts[(i, 0)], pts[(i, 1)]]).collect();
    Ok(json!({
        "points": points,
        "truth": truth,
        "edges": edge_list(&g),
        "spectral": { "labels": sc.labels, "ari": adjusted_rand_index(&sc.labels, &truth), "q": sc.q },
        "kmeans": { "labels": km.labels, "ari": adjusted_rand_index(&km.labels, &truth) },
    }))
}

/// Planted-partition graph swept over K; reports the modularity curve.
pub fn sbm_sweep(n: usize, blocks: usize, p_in: f64, p_out: f64, seed: u64) -> Result<Value, String> {
    if blocks < 1 || n < 3 || blocks > n {
        return Err("need 1 <= blocks <= n and n >= 3".into());
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err("probabilities must lie in [0, 1]".into());
    }
    let (g, truth) = planted_partition(n, blocks, p_in, p_out, seed);
    let k_max = 10.min(n - 1);
    let sweep = sweep_k(&g, 2..=k_max, seed, &SpectralOptions::default()).map_err(|e| e.to_string())?;
    let curve: Vec<Value> = sweep
        .rows
        .iter()
        .map(|r| json!({ "k": r.k, "q": r.q }))
        .collect();
    Ok(json!({
        "n": n,
        "edges": edge_list(&g),
        "truth": truth,
        "curve": curve,
        "k_opt": sweep.k_opt,
        "q_opt": sweep.q_opt,
        "labels": sweep.best.labels,
        "ari": adjusted_rand_index(&sweep.best.labels, &truth),
    }))
}

/// Synthetic heart-rate response for one template, with its filtered series,
/// detected cycles and extracted features.
pub fn hr_features(
    height: f64,
    rise: f64,
    decay: f64,
    n_cycles: usize,
    noise: f64,
    seed: u64,
) -> Result<Value, String> {
    let t = FoodClassTemplate {
        name: "demo".into(),
        baseline_bpm: 66.0,
        height_bpm: height,
        rise_min: rise,
        decay_min: decay,
        n_cycles,
        noise_std_bpm: noise,
        foods: vec![],
    };
    t.validate().map_err(|e| e.to_string())?;
    let duration = t.cycle_minutes() + 6.0 * (n_cycles as f64 + 1.0);
    let start = Timestamp::UNIX_EPOCH;
    let series = gen_hr_response(&t, duration, start, seed).map_err(|e| e.to_string())?;
    let minutes = series.minutes_since(start);
    let raw = series.bpm();
    let a = analyze(&minutes, &raw, &SignalConfig::default()).map_err(|e| e.to_string())?;
    let features: serde_json::Map<String, Value> = FEATURE_NAMES
        .iter()
        .zip(a.features.to_array())
        .map(|(name, v)| (name.to_string(), finite(v)))
        .collect();
    let cycles: Vec<[usize; 3]> = a.cycles.iter().map(|c| [c.start_idx, c.peak_idx, c.end_idx]).collect();
    Ok(json!({
        "minutes": minutes,
        "raw": raw,
        "filtered": a.filtered,
        "cycles": cycles,
        "features": features,
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = moons)]
pub fn moons_js(n: usize, noise: f64, seed: u32) -> Result<String, JsValue> {
    to_js(moons(n, noise, seed as u64))
}

#[wasm_bindgen(js_name = sbmSweep)]
pub fn sbm_sweep_js(n: usize, blocks: usize, p_in: f64, p_out: f64, seed: u32) -> Result<String, JsValue> {
    to_js(sbm_sweep(n, blocks, p_in, p_out, seed as u64))
}

#[wasm_bindgen(js_name = hrFeatures)]
pub fn hr_features_js(
    height: f64,
    rise: f64,
    decay: f64,
    n_cycles: usize,
    noise: f64,
    seed: u32,
) -> Result<String, JsValue> {
    to_js(hr_features(height, rise, decay, n_cycles, noise, seed as u64))
}
