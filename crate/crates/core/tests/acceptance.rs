//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use edl_core::ekg::{self, build_event, missing_aspect_ratio, AspectCategory, EventContext, GraphFormat};
use edl_core::featsel::{select_subset, silhouette};
use edl_core::graphcluster::{
    build_knn_graph, default_knn, edge_betweenness, girvan_newman, kmeans, modularity, spectral_cluster,
    spectral_embed, sweep_k, AffinityGraph, GnTarget, KMeansConfig, SpectralMode, SpectralOptions, Weighting,
};
use edl_core::ingest::{self, build_sample_sets, ActivitySegment, IngestConfig, SampleSet};
use edl_core::linalg::{orthonormality_error, SymEigen};
use edl_core::metrics::adjusted_rand_index;
use edl_core::pipeline::{self, Command, PipelineConfig};
use edl_core::signal::{detect_cycles, extract_features, FeatureTable};
use edl_core::synth::{default_templates, gen_lifelog, parse_truth, planted_partition, two_moons, NoiseMix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, what: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what)
    }
}

// ---------------------------------------------------------------- oracles

/// All set partitions of `0..n` as restricted growth strings.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for c in 0..=max + 1 {
            prefix.push(c);
            grow(prefix, max.max(c), n, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut prefix = vec![0];
    grow(&mut prefix, 0, n, &mut out);
    out
}

/// (1/2m) Σ_ij [A_ij − k_i k_j / 2m] δ(c_i, c_j) by double loop.
fn brute_modularity(a: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let n = a.nrows();
    let k: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[(i, j)] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

fn brute_silhouette(points: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let k = labels.iter().max().unwrap() + 1;
    (0..points.len())
        .map(|i| {
            let mut sum = vec![0.0; k];
            let mut count = vec![0usize; k];
            for j in 0..points.len() {
                if j != i {
                    sum[labels[j]] += dist(&points[i], &points[j]);
                    count[labels[j]] += 1;
                }
            }
            let own = labels[i];
            if count[own] == 0 {
                return 0.0;
            }
            let x = sum[own] / count[own] as f64;
            let y = (0..k)
                .filter(|&c| c != own && count[c] > 0)
                .map(|c| sum[c] / count[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if x.max(y) == 0.0 {
                0.0
            } else {
                (y - x) / x.max(y)
            }
        })
        .collect()
}

// ---------------------------------------------------------------- criteria

fn c1_modularity_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut graphs = 0;
    let mut partitions_checked = 0usize;
    let mut worst = 0.0f64;
    while graphs < 50 {
        let n = rng.random_range(2..=7);
        let weighted = graphs % 2 == 1;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    let w = if weighted { rng.random_range(0.1..3.0) } else { 1.0 };
                    a[(i, j)] = w;
                    a[(j, i)] = w;
                }
            }
        }
        let Ok(g) = AffinityGraph::from_adjacency(a.clone()) else { continue };
        if g.total_weight() == 0.0 {
            continue;
        }
        graphs += 1;
        for p in partitions(n) {
            let q = modularity(&g, &p).map_err(|e| e.to_string())?;
            worst = worst.max((q - brute_modularity(&a, &p)).abs());
            partitions_checked += 1;
        }
        let single = modularity(&g, &vec![0; n]).map_err(|e| e.to_string())?;
        check(single == 0.0, format!("Q(single cluster) = {single:e}, not exactly 0"))?;
    }
    check(worst <= 1e-12, format!("max |Q − Q_brute| = {worst:e} > 1e-12"))?;
    Ok(format!("50 graphs, {partitions_checked} partitions, max error {worst:.1e}, single-cluster Q = 0"))
}

fn c2_silhouette_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(4..=40);
        let d = rng.random_range(1..=4);
        let k = rng.random_range(2..=4.min(n));
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        labels.rotate_left(rng.random_range(0..n));
        let m = DMatrix::from_fn(n, d, |i, j| pts[i][j]);
        let (got, mean) = silhouette(&m, &labels).map_err(|e| e.to_string())?;
        let want = brute_silhouette(&pts, &labels);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
        worst = worst.max((mean - want.iter().sum::<f64>() / n as f64).abs());
    }
    check(worst <= 1e-12, format!("max |s − s_brute| = {worst:e} > 1e-12"))?;
    Ok(format!("50 point sets, max error {worst:.1e}"))
}

fn c3_fixtures() -> Outcome {
    let edges = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)];
    let g = AffinityGraph::from_edges(6, &edges).map_err(|e| e.to_string())?;
    let q = modularity(&g, &[0, 0, 0, 1, 1, 1]).map_err(|e| e.to_string())?;
    check((q - 5.0 / 14.0).abs() <= 1e-12, format!("two triangles Q = {q}, want 5/14"))?;

    let eb = edge_betweenness(&g.neighbors());
    let top = eb.iter().max_by(|a, b| a.1.total_cmp(b.1)).map(|(e, _)| *e);
    check(top == Some((2, 3)), format!("highest-betweenness edge {top:?}, want the bridge (2, 3)"))?;
    let gn = girvan_newman(&g, GnTarget::Components(2)).map_err(|e| e.to_string())?;
    check(gn.labels == [0, 0, 0, 1, 1, 1], format!("GN split {:?}", gn.labels))?;

    let x = [60.0, 70.0, 80.0, 90.0, 100.0, 90.0, 80.0, 70.0, 60.0];
    let t: Vec<f64> = (0..9).map(f64::from).collect();
    let f = extract_features(&t, &x, &detect_cycles(&x, 5.0)).map_err(|e| e.to_string())?;
    for (name, got, want) in [
        ("H", f.height, 40.0),
        ("W_up", f.width_up, 4.0),
        ("beta_up", f.slope_up, 10.0),
        ("V", f.variation, 80.0),
        ("C_mean", f.cycle_mean, 700.0 / 9.0),
    ] {
        check((got - want).abs() <= 1e-9, format!("triangle {name} = {got}, want {want}"))?;
    }
    Ok("Q = 5/14, bridge removed first, triangle features exact".into())
}

fn c4_planted_partition() -> Outcome {
    let opts = SpectralOptions::default();
    let mut hits = 0;
    let mut low_ari = Vec::new();
    let mut min_ari = f64::INFINITY;
    for seed in 0..20 {
        let (g, truth) = planted_partition(90, 3, 0.8, 0.05, seed);
        let sweep = sweep_k(&g, 2..=10, seed, &opts).map_err(|e| e.to_string())?;
        if sweep.k_opt == 3 {
            hits += 1;
            let ari = adjusted_rand_index(&sweep.best.labels, &truth);
            min_ari = min_ari.min(ari);
            if ari < 0.9 {
                low_ari.push((seed, ari));
            }
        }
    }
    check(hits >= 16, format!("K = 3 selected on {hits}/20 seeds"))?;
    check(low_ari.is_empty(), format!("ARI < 0.9 at {low_ari:?}"))?;
    Ok(format!("K = 3 on {hits}/20 seeds, min ARI {min_ari:.3}"))
}

fn c5_two_moons() -> Outcome {
    let (pts, truth) = two_moons(100, 0.05, 0);
    let g = build_knn_graph(&pts, default_knn(100), Weighting::Binary).map_err(|e| e.to_string())?;
    let sc = spectral_cluster(&g, 2, 0, &SpectralOptions::default()).map_err(|e| e.to_string())?;
    let km = kmeans(&pts, 2, 0, &KMeansConfig::default()).map_err(|e| e.to_string())?;
    let ari_sc = adjusted_rand_index(&sc.labels, &truth);
    let ari_km = adjusted_rand_index(&km.labels, &truth);
    check(ari_sc >= 0.95, format!("spectral ARI {ari_sc:.3} < 0.95"))?;
    check(ari_km <= 0.6, format!("K-means ARI {ari_km:.3} > 0.6"))?;
    Ok(format!("spectral ARI {ari_sc:.3}, K-means ARI {ari_km:.3}"))
}

fn c6_eigen_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_res = 0.0f64;
    let mut worst_orth = 0.0f64;
    for _ in 0..10 {
        let b = DMatrix::from_fn(50, 50, |_, _| rng.random_range(-1.0..1.0));
        let a = (&b + b.transpose()) * 0.5;
        let e = SymEigen::new(&a);
        for (j, &lambda) in e.values.iter().enumerate() {
            let v = e.vectors.column(j);
            let r = (&a * v - v * lambda).norm();
            worst_res = worst_res.max(r);
        }
        let recon = &e.vectors * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone())) * e.vectors.transpose();
        worst_res = worst_res.max((recon - &a).abs().max());
        worst_orth = worst_orth.max(orthonormality_error(&e.vectors));
    }
    for seed in 0..5 {
        let (g, _) = planted_partition(50, 3, 0.5, 0.05, seed);
        for mode in [SpectralMode::Njw, SpectralMode::Literal] {
            let emb = spectral_embed(&g, 4, mode).map_err(|e| e.to_string())?;
            let gram = emb.vectors.transpose() * &emb.vectors;
            let err = (gram - DMatrix::identity(4, 4)).abs().max();
            worst_orth = worst_orth.max(err);
        }
    }
    check(worst_res <= 1e-8, format!("residual {worst_res:e} > 1e-8"))?;
    check(worst_orth <= 1e-8, format!("orthonormality {worst_orth:e} > 1e-8"))?;
    Ok(format!("residual {worst_res:.1e}, orthonormality {worst_orth:.1e}"))
}

fn write_bundle(dir: &Path, files: Vec<(&'static str, Vec<u8>)>) {
    std::fs::create_dir_all(dir).unwrap();
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes).unwrap();
    }
}

fn read_clusters(path: &Path) -> Vec<(String, usize)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].parse().unwrap())
        })
        .collect()
}

fn c7_end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut aris = Vec::new();
    let mut ordered = 0;
    for seed in 0..10u64 {
        let bundle = gen_lifelog(&default_templates(2.0), 20, NoiseMix::default(), seed).map_err(|e| e.to_string())?;
        let data = tmp.path().join(format!("data{seed}"));
        write_bundle(&data, bundle.files());
        let cfg = PipelineConfig {
            input_dir: data.clone(),
            out_dir: tmp.path().join(format!("out{seed}")),
            seed,
            ..Default::default()
        };
        pipeline::run(Command::Pipeline, &cfg).map_err(|e| e.one_line())?;

        let truth: HashMap<String, usize> = parse_truth(&std::fs::read(data.join("truth.csv")).unwrap())?
            .into_iter()
            .map(|r| (r.sample_id, r.heaviness_rank))
            .collect();
        let assigned = read_clusters(&cfg.out_dir.join("clusters.csv"));
        let levels: Vec<usize> = assigned.iter().map(|a| a.1).collect();
        let planted: Vec<usize> = assigned.iter().map(|a| truth[&a.0]).collect();
        aris.push(adjusted_rand_index(&levels, &planted));

        // Modal level of each planted rank must be the rank itself.
        let mut counts: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
        for (&l, &p) in levels.iter().zip(&planted) {
            *counts.entry(p).or_default().entry(l).or_default() += 1;
        }
        let modal: Vec<usize> = counts
            .values()
            .map(|c| *c.iter().max_by_key(|(l, n)| (**n, std::cmp::Reverse(**l))).unwrap().0)
            .collect();
        let k = levels.iter().max().copied().unwrap_or(0);
        if k == 3 && modal == [1, 2, 3] {
            ordered += 1;
        }
    }
    let mut sorted = aris.clone();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[4] + sorted[5]) / 2.0;
    check(median >= 0.8, format!("median ARI {median:.3} < 0.8 ({aris:.3?})"))?;
    check(ordered >= 8, format!("level order correct on {ordered}/10 seeds"))?;
    Ok(format!("median ARI {median:.3}, level order correct on {ordered}/10 seeds"))
}

fn c8_feature_selection() -> Outcome {
    let names = ["inf_a", "inf_b", "noise_1", "noise_2", "noise_3", "noise_4"];
    let centers = [(0.0, 0.0), (4.0, 0.0), (2.0, 3.5)];
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let n = 60;
        let m = DMatrix::from_fn(n, names.len(), |i, j| {
            let z: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
            match j {
                0 => centers[i % 3].0 + 0.4 * z,
                1 => centers[i % 3].1 + 0.4 * z,
                _ => 2.0 * z,
            }
        });
        let scores = select_subset(&m, &names, 2..=3, &Default::default(), seed).map_err(|e| e.to_string())?;
        let top = &scores[0].features;
        if top.iter().any(|f| f == "inf_a") && top.iter().any(|f| f == "inf_b") {
            hits += 1;
        } else {
            misses.push((seed, top.clone()));
        }
    }
    check(hits >= 9, format!("both informative features on top for {hits}/10 seeds; misses {misses:?}"))?;
    Ok(format!("both informative features in the top subset on {hits}/10 seeds"))
}

fn c9_ingest_report_fidelity() -> Outcome {
    // Injected noise mix.
    let bundle = gen_lifelog(&default_templates(2.0), 50, NoiseMix::eighteen_percent(), 9).map_err(|e| e.to_string())?;
    let ingested = build_sample_sets(&bundle.heart_rate, &bundle.activities, &bundle.foods, &IngestConfig::default());
    let total = ingested.sets.len();
    let rejected = ingested.rejected().count();
    let fraction = rejected as f64 / total as f64;
    check((fraction - 0.18).abs() <= 0.03, format!("rejected {:.1}% of {total}", 100.0 * fraction))?;

    // Engineered 124-event fixture: 121 without food information, none causal.
    let start = Utc.with_ymd_and_hms(2020, 3, 1, 12, 0, 0).unwrap();
    let events: Vec<_> = (0..124)
        .map(|i| {
            let s = start + chrono::Duration::days(i);
            let set = SampleSet {
                id: format!("e{i:03}"),
                series: Default::default(),
                segment: ActivitySegment::new(s, s + chrono::Duration::minutes(40), "Eating"),
                foods: if i < 3 {
                    vec![ingest::FoodLogEntry { timestamp: s, food_names: vec!["noodles".into()] }]
                } else {
                    vec![]
                },
                rejected_reason: None,
            };
            build_event(&set, None, &EventContext::default())
        })
        .collect();
    let ratios = missing_aspect_ratio(&events).map_err(|e| e.to_string())?;
    let report = String::from_utf8(ekg::write_aspect_report(&[("u".into(), ratios.clone())])).unwrap();
    check(ratios[&AspectCategory::Informational] == 97.58, format!("informational {}", ratios[&AspectCategory::Informational]))?;
    check(report.lines().nth(1).is_some_and(|l| l.ends_with(",97.58,100.00")), format!("report row {report:?}"))?;

    // Byte-identical round trips.
    let hr = ingest::write_heart_rate(&bundle.heart_rate);
    check(ingest::write_heart_rate(&ingest::parse_heart_rate(&hr).map_err(|e| e.to_string())?) == hr, "heart_rate.csv".into())?;
    let acts = ingest::write_activities(&bundle.activities);
    check(ingest::write_activities(&ingest::parse_activities(&acts).map_err(|e| e.to_string())?) == acts, "activities.json".into())?;
    let foods = ingest::write_food_log(&bundle.foods);
    check(ingest::write_food_log(&ingest::parse_food_log(&foods).map_err(|e| e.to_string())?) == foods, "food_log.csv".into())?;
    let mut table = FeatureTable::default();
    for set in ingested.accepted() {
        if let Ok(a) = edl_core::signal::analyze_sample_set(set, &Default::default()) {
            table.push(set.id.clone(), a.features);
        }
    }
    let csv = table.to_csv();
    check(FeatureTable::from_csv(&csv)?.to_csv() == csv, "features.csv".into())?;
    let built = ekg::build_events(&ingested.sets, &HashMap::new(), &bundle.activities, &HashMap::new());
    for format in [GraphFormat::TriplesJson, GraphFormat::EdgeList] {
        let bytes = ekg::serialize_graph(&built, format);
        let rows = ekg::parse_graph(&bytes, format).map_err(|e| e.to_string())?;
        check(ekg::serialize_rows(rows, format) == bytes, format!("graph {format:?}"))?;
    }
    Ok(format!(
        "rejected {rejected}/{total} = {:.1}%, informational 97.58 / causal 100.00, round trips byte-identical",
        100.0 * fraction
    ))
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bundle = gen_lifelog(&default_templates(2.0), 20, NoiseMix::eighteen_percent(), 10).map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    write_bundle(&data, bundle.files());
    let mut dirs = Vec::new();
    for run in 0..2 {
        let cfg = PipelineConfig {
            input_dir: data.clone(),
            out_dir: tmp.path().join(format!("run{run}")),
            seed: 10,
            ..Default::default()
        };
        pipeline::run(Command::Pipeline, &cfg).map_err(|e| e.one_line())?;
        dirs.push(cfg.out_dir);
    }
    let list = |d: &Path| -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect()
    };
    let (a, b) = (list(&dirs[0]), list(&dirs[1]));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    check(a.len() == b.len() && differing.is_empty(), format!("differing artifacts {differing:?}"))?;
    Ok(format!("{} artifacts byte-identical across two runs", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 10] = [
        ("1 modularity oracle", c1_modularity_oracle, Some(Duration::from_secs(60))),
        ("2 silhouette oracle", c2_silhouette_oracle, Some(Duration::from_secs(10))),
        ("3 hand-computed fixtures", c3_fixtures, None),
        ("4 planted partition recovery", c4_planted_partition, Some(Duration::from_secs(120))),
        ("5 non-convex separation", c5_two_moons, None),
        ("6 eigen contract", c6_eigen_contract, None),
        ("7 end-to-end synthetic lifelog", c7_end_to_end, Some(Duration::from_secs(180))),
        ("8 feature selection sanity", c8_feature_selection, None),
        ("9 ingest and report fidelity", c9_ingest_report_fidelity, None),
        ("10 determinism", c10_determinism, None),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let t0 = Instant::now();
        let mut outcome = f();
        let elapsed = t0.elapsed();
        if let (Ok(msg), Some(limit)) = (&outcome, budget) {
            if elapsed > limit {
                outcome = Err(format!("{msg}; took {elapsed:.1?}, budget {limit:?}"));
            }
        }
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg} ({elapsed:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
