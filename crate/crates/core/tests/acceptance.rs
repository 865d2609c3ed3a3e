//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p granball --test acceptance`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use granball::boundary::{Boundary, BoundaryModel};
use granball::cluster::cluster_adaptive;
use granball::objective::grad_loss;
use granball::{
    classify_closed, classify_open, evaluate, run_experiment, Ablation, BallStats, Dataset,
    DenseEncoder, ExperimentConfig, ExperimentOutcome, HyperParams, Label, LabeledVector, Metric,
    Stage, Sweep, SweepParam,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn ring_config() -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/ring_family.json");
    let text = std::fs::read_to_string(&path).expect("ring family config");
    serde_json::from_str(&text).expect("valid config")
}

// 1 ------------------------------------------------------------------------

fn random_dataset(rng: &mut ChaCha8Rng) -> (Dataset, HyperParams) {
    let n = rng.random_range(1..=5000);
    let k: Label = rng.random_range(1..=10);
    let d = rng.random_range(1..=16);
    // Class means drawn close together so that many balls are impure.
    let spread = rng.random_range(0.2..3.0);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let samples = (0..n)
        .map(|_| {
            let label = rng.random_range(1..=k);
            let f = means[label as usize - 1]
                .iter()
                .map(|m| m + spread * rng.random_range(-1.0..1.0))
                .collect();
            LabeledVector::new(f, label)
        })
        .collect();
    let ds = Dataset::new(samples, d, k, Stage::Encoded).unwrap();
    let hp = HyperParams {
        p_l: rng.random_range(0.5..=1.0),
        n_l: if rng.random_bool(0.5) {
            None
        } else {
            Some(rng.random_range(1..50))
        },
        metric: if rng.random_bool(0.5) {
            Metric::Euclidean
        } else {
            Metric::CosineDistance
        },
        seed: rng.random(),
        ..HyperParams::default()
    };
    (ds, hp)
}

fn criterion_clustering_contract() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    let start = Instant::now();
    let mut balls = 0;
    for case in 0..100 {
        let (ds, hp) = random_dataset(&mut rng);
        let n_l = hp.resolved_n_l(ds.len(), ds.num_known() as usize);
        let res = match cluster_adaptive(&ds, &hp) {
            Ok(r) => r,
            Err(e) => return verdict(false, format!("case {case}: {e}")),
        };
        if !res.is_partition_of(ds.len()) {
            return verdict(
                false,
                format!("case {case}: members do not partition the data"),
            );
        }
        if let Some(b) = res
            .balls
            .iter()
            .find(|b| !(b.purity >= hp.p_l || b.count() <= n_l))
        {
            return verdict(
                false,
                format!(
                    "case {case}: ball with purity {} and {} members",
                    b.purity,
                    b.count()
                ),
            );
        }
        balls += res.balls.len();
    }
    let elapsed = start.elapsed();
    verdict(
        elapsed < Duration::from_secs(60),
        format!("100 datasets, {balls} terminal balls, {elapsed:.2?} (limit 60 s)"),
    )
}

// 2 ------------------------------------------------------------------------

fn oracle_distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Metric::CosineDistance => {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            0.5 * a
                .iter()
                .zip(b)
                .map(|(x, y)| (x / na - y / nb).powi(2))
                .sum::<f64>()
        }
    }
}

/// All `(distance, class, index)` triples in class-then-index order.
fn all_pairs(z: &[f64], model: &BoundaryModel) -> Vec<(f64, Label, usize, f64)> {
    let mut out = Vec::new();
    for (c, class) in model.classes.iter().enumerate() {
        for (s, b) in class.boundaries.iter().enumerate() {
            out.push((
                oracle_distance(z, &b.centroid, model.metric),
                c as Label + 1,
                s,
                b.radius,
            ));
        }
    }
    out
}

fn oracle_closed(z: &[f64], model: &BoundaryModel) -> Label {
    let pairs = all_pairs(z, model);
    let min = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    // Lowest class, then lowest index, among the minima.
    pairs.iter().find(|p| p.0 == min).unwrap().1
}

fn oracle_open(z: &[f64], model: &BoundaryModel) -> Label {
    let inside: Vec<_> = all_pairs(z, model)
        .into_iter()
        .filter(|p| p.0 <= p.3)
        .collect();
    if inside.is_empty() {
        return model.num_known + 1;
    }
    let min = inside.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    inside.iter().find(|p| p.0 == min).unwrap().1
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn random_model(rng: &mut ChaCha8Rng, metric: Metric) -> BoundaryModel {
    let k: Label = rng.random_range(1..=5);
    let dim = rng.random_range(2..=8);
    let mut model = BoundaryModel::empty(metric, k, dim);
    let mut pool: Vec<Vec<f64>> = Vec::new();
    for c in 1..=k {
        for _ in 0..rng.random_range(if c == 1 { 1 } else { 0 }..=4) {
            // Reuse an earlier centroid now and then to create exact ties.
            let centroid = if !pool.is_empty() && rng.random_bool(0.2) {
                pool[rng.random_range(0..pool.len())].clone()
            } else {
                random_point(rng, dim)
            };
            pool.push(centroid.clone());
            let radius = match metric {
                Metric::Euclidean => rng.random_range(0.0..3.0),
                Metric::CosineDistance => rng.random_range(0.0..0.6),
            };
            let stats = BallStats {
                count: 1,
                label: c,
                purity: 1.0,
            };
            model
                .push(
                    c,
                    Boundary {
                        centroid,
                        radius,
                        source_ball_stats: stats,
                    },
                )
                .unwrap();
        }
    }
    model
}

fn criterion_inference_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    let mut unknown = 0;
    for m in 0..20 {
        let metric = if m % 2 == 0 {
            Metric::Euclidean
        } else {
            Metric::CosineDistance
        };
        let model = random_model(&mut rng, metric);
        let centroids: Vec<Vec<f64>> = model.iter().map(|(_, _, b)| b.centroid.clone()).collect();
        for q in 0..1000 {
            let z = if q % 10 == 0 {
                centroids[rng.random_range(0..centroids.len())].clone()
            } else {
                random_point(&mut rng, model.dim)
            };
            let closed = classify_closed(&z, &model).unwrap();
            let open = classify_open(&z, &model).unwrap().label;
            let (want_closed, want_open) = (oracle_closed(&z, &model), oracle_open(&z, &model));
            if closed != want_closed || open != want_open {
                return verdict(
                    false,
                    format!("model {m} query {q}: closed {closed} vs {want_closed}, open {open} vs {want_open}"),
                );
            }
            unknown += usize::from(open == model.num_known + 1);
            checked += 1;
        }
    }
    verdict(
        true,
        format!("{checked} queries over 20 models agree ({unknown} rejected as unknown)"),
    )
}

// 3 ------------------------------------------------------------------------

struct Instance {
    encoder: DenseEncoder,
    model: BoundaryModel,
    batch: Vec<LabeledVector>,
}

fn random_instance(rng: &mut ChaCha8Rng, metric: Metric) -> Instance {
    let d_in = rng.random_range(1..=8);
    let d = rng.random_range(1..=8);
    let k: Label = rng.random_range(1..=3);
    let weights = (0..d_in * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias = (0..d).map(|_| rng.random_range(-0.5..1.0)).collect();
    let encoder = DenseEncoder::new(d_in, d, weights, bias).unwrap();
    let mut model = BoundaryModel::empty(metric, k, d);
    for c in 1..=k {
        for _ in 0..rng.random_range(1..=3) {
            let centroid = (0..d).map(|_| rng.random_range(0.1..2.0)).collect();
            let stats = BallStats {
                count: 1,
                label: c,
                purity: 1.0,
            };
            model
                .push(
                    c,
                    Boundary {
                        centroid,
                        radius: 1.0,
                        source_ball_stats: stats,
                    },
                )
                .unwrap();
        }
    }
    let batch = (0..rng.random_range(1..=5))
        .map(|_| {
            let x = (0..d_in).map(|_| rng.random_range(-2.0..2.0)).collect();
            LabeledVector::new(x, rng.random_range(1..=k))
        })
        .collect();
    Instance {
        encoder,
        model,
        batch,
    }
}

/// Active rectifiers and per-class argmin indices of one sample.
type Pattern = (Vec<bool>, Vec<usize>);

/// Mean loss, written out independently of the library's objective.
fn oracle_loss(
    enc: &DenseEncoder,
    model: &BoundaryModel,
    batch: &[LabeledVector],
) -> (f64, Vec<Pattern>) {
    let mut total = 0.0;
    let mut patterns = Vec::new();
    for s in batch {
        let a = enc.pre_activation(&s.features).unwrap();
        let z: Vec<f64> = a.iter().map(|v| v.max(0.0)).collect();
        let mut d = Vec::new();
        let mut arg = Vec::new();
        for class in &model.classes {
            let ds: Vec<f64> = class
                .boundaries
                .iter()
                .map(|b| oracle_distance(&z, &b.centroid, model.metric))
                .collect();
            let (i, m) = ds
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
                );
            d.push(m);
            arg.push(i);
        }
        let lse = {
            let mx = d.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
            mx + d.iter().map(|v| (-v - mx).exp()).sum::<f64>().ln()
        };
        total += d[s.label as usize - 1] + lse;
        patterns.push((a.iter().map(|v| *v > 0.0).collect(), arg));
    }
    (total / batch.len() as f64, patterns)
}

/// Smallest gap between the best and second-best sub-centroid of any class,
/// and the smallest pre-activation magnitude, over the batch.
fn tie_margins(enc: &DenseEncoder, model: &BoundaryModel, batch: &[LabeledVector]) -> (f64, f64) {
    let mut relu = f64::INFINITY;
    let mut argmin = f64::INFINITY;
    for s in batch {
        let a = enc.pre_activation(&s.features).unwrap();
        relu = a.iter().fold(relu, |m, v| m.min(v.abs()));
        let z: Vec<f64> = a.iter().map(|v| v.max(0.0)).collect();
        for class in &model.classes {
            let mut ds: Vec<f64> = class
                .boundaries
                .iter()
                .map(|b| oracle_distance(&z, &b.centroid, model.metric))
                .collect();
            ds.sort_by(f64::total_cmp);
            if ds.len() > 1 {
                argmin = argmin.min(ds[1] - ds[0]);
            }
        }
    }
    (relu, argmin)
}

fn criterion_gradient_check() -> Verdict {
    const EPS: f64 = 1e-5;
    const TIE: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut instances = 0;
    let mut coords = 0;
    let mut excluded = 0;
    let mut worst: f64 = 0.0;
    let mut attempt = 0;
    while instances < 40 {
        attempt += 1;
        let metric = if attempt % 2 == 0 {
            Metric::Euclidean
        } else {
            Metric::CosineDistance
        };
        let inst = random_instance(&mut rng, metric);
        let (relu, argmin) = tie_margins(&inst.encoder, &inst.model, &inst.batch);
        // The cosine distance needs a non-zero encoding.
        let dead = inst.batch.iter().any(|s| {
            inst.encoder
                .forward(&s.features)
                .unwrap()
                .iter()
                .all(|v| *v == 0.0)
        });
        if relu < TIE || argmin < TIE || dead {
            continue;
        }
        let analytic = grad_loss(&inst.batch, &inst.encoder, &inst.model).unwrap();
        let (_, base_pattern) = oracle_loss(&inst.encoder, &inst.model, &inst.batch);
        let (d_in, d) = (inst.encoder.d_in(), inst.encoder.d_out());
        let n_params = d_in * d + d;
        for p in 0..n_params {
            let shifted = |delta: f64| {
                let mut w = inst.encoder.weights().to_vec();
                let mut b = inst.encoder.bias().to_vec();
                if p < d_in * d {
                    w[p] += delta;
                } else {
                    b[p - d_in * d] += delta;
                }
                DenseEncoder::new(d_in, d, w, b).unwrap()
            };
            let (plus, pat_plus) = oracle_loss(&shifted(EPS), &inst.model, &inst.batch);
            let (minus, pat_minus) = oracle_loss(&shifted(-EPS), &inst.model, &inst.batch);
            // A step that flips a rectifier or an argmin straddles a tie.
            if pat_plus != base_pattern || pat_minus != base_pattern {
                excluded += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * EPS);
            let exact = if p < d_in * d {
                analytic.weights[p]
            } else {
                analytic.bias[p - d_in * d]
            };
            let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            coords += 1;
        }
        instances += 1;
    }
    verdict(
        worst < 1e-4,
        format!("{instances} instances, {coords} coordinates ({excluded} excluded at ties), max relative error {worst:.2e} (limit 1e-4)"),
    )
}

// 4, 5, 6 ------------------------------------------------------------------

fn run_ring(cfg: &ExperimentConfig) -> (ExperimentOutcome, Duration) {
    let start = Instant::now();
    let out = run_experiment(cfg).expect("valid config");
    (out, start.elapsed())
}

fn fmt4(s: [f64; 4]) -> String {
    format!(
        "acc {:.2} f1_all {:.2} f1_u {:.2} f1_k {:.2}",
        s[0], s[1], s[2], s[3]
    )
}

fn criterion_intra_open(out: &ExperimentOutcome, per_seed: Duration) -> Verdict {
    if !out.all_succeeded() {
        return verdict(false, format!("failed cells: {:?}", out.failures));
    }
    let full = out.mean_scores(Ablation::Full, 0).unwrap();
    let single = out.mean_scores(Ablation::NoMb, 0).unwrap();
    let gap = full[2] - single[2];
    verdict(
        gap >= 10.0 && per_seed < Duration::from_secs(120),
        format!(
            "f1_u full {:.2} vs no_mb {:.2} (gap {gap:.2}, need >= 10); {per_seed:.2?} per seed (limit 2 min)",
            full[2], single[2]
        ),
    )
}

fn criterion_ablation_order(out: &ExperimentOutcome) -> Verdict {
    let full = out.mean_scores(Ablation::Full, 0).unwrap();
    let mut ok = true;
    let mut parts = vec![format!("full: {}", fmt4(full))];
    for ab in [Ablation::NoHrl, Ablation::NoMb, Ablation::NoHrlNoMb] {
        let s = out.mean_scores(ab, 0).unwrap();
        ok &= full[0] >= s[0] && full[1] >= s[1];
        parts.push(format!("{ab}: {}", fmt4(s)));
    }
    verdict(ok, parts.join("; "))
}

fn non_increasing(out: &ExperimentOutcome) -> std::result::Result<Vec<f64>, String> {
    for c in &out.cells {
        let counts: Vec<usize> = c.rows.iter().map(|r| r.report.n_boundaries).collect();
        if counts.windows(2).any(|w| w[1] > w[0]) {
            return Err(format!("seed {} boundary counts {counts:?}", c.seed));
        }
    }
    let rows = out.cells[0].rows.len();
    Ok((0..rows)
        .map(|r| {
            let v: Vec<f64> = out
                .cells
                .iter()
                .map(|c| c.rows[r].report.n_boundaries as f64)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect())
}

fn criterion_sensitivity(base: &ExperimentConfig) -> Verdict {
    let sweep = |param, values: Vec<f64>| {
        let cfg = ExperimentConfig {
            ablations: vec![Ablation::Full],
            sweep: Some(Sweep { param, values }),
            ..base.clone()
        };
        run_experiment(&cfg).expect("valid config")
    };
    let nt = sweep(SweepParam::NT, vec![1.0, 3.0, 5.0, 9.0, 19.0]);
    let pt = sweep(SweepParam::PT, vec![0.80, 0.85, 0.90, 0.93, 0.95, 0.97]);
    if !(nt.all_succeeded() && pt.all_succeeded()) {
        return verdict(false, "sweep cells failed");
    }
    let (nt_counts, pt_counts) = match (non_increasing(&nt), non_increasing(&pt)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return verdict(false, e),
    };
    let accs: Vec<f64> = (0..6)
        .map(|r| pt.mean_scores(Ablation::Full, r).unwrap()[0])
        .collect();
    let band = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - accs.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        band <= 5.0,
        format!(
            "mean boundaries over n_t {nt_counts:.1?}, over p_t {pt_counts:.1?}; p_t acc {accs:.2?} band {band:.2} (limit 5)"
        ),
    )
}

// 7 ------------------------------------------------------------------------

fn criterion_metrics_fixture() -> Verdict {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/metrics_10.json");
    let fx: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let labels = |key: &str| -> Vec<Label> {
        fx[key]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap() as Label)
            .collect()
    };
    let frac = |v: &serde_json::Value| v[0].as_f64().unwrap() / v[1].as_f64().unwrap();
    let r = evaluate(
        &labels("pred"),
        &labels("gold"),
        fx["k"].as_u64().unwrap() as Label,
    )
    .unwrap();
    let confusion: Vec<Vec<u64>> = serde_json::from_value(fx["confusion"].clone()).unwrap();
    let per_class: Vec<f64> = fx["per_class_f1"]
        .as_array()
        .unwrap()
        .iter()
        .map(frac)
        .collect();
    // Equal up to the last bit of the division.
    let same = |a: f64, b: f64| (a - b).abs() <= 4.0 * f64::EPSILON;
    let ok = r.confusion == confusion
        && same(r.acc, frac(&fx["acc"]))
        && r.per_class_f1
            .iter()
            .zip(&per_class)
            .all(|(a, b)| same(*a, *b))
        && same(r.f1_known, frac(&fx["f1_known"]))
        && same(r.f1_unknown, frac(&fx["f1_unknown"]))
        && same(r.f1_all, frac(&fx["f1_all"]));
    verdict(
        ok,
        format!(
            "acc {} f1_all {:.6} f1_u {:.6} f1_k {:.6}, confusion {:?}",
            r.acc, r.f1_all, r.f1_unknown, r.f1_known, r.confusion
        ),
    )
}

// 8 ------------------------------------------------------------------------

fn criterion_determinism(base: &ExperimentConfig) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let cfg = ExperimentConfig {
            seeds: vec![0, 1],
            sweep: Some(Sweep {
                param: SweepParam::NT,
                values: vec![1.0, 5.0],
            }),
            output_dir: Some(dir.path().join(name)),
            ..base.clone()
        };
        run_experiment(&cfg).unwrap();
        let csv = std::fs::read(dir.path().join(name).join("results.csv")).unwrap();
        let mut cells: Vec<(String, Vec<u8>)> =
            std::fs::read_dir(dir.path().join(name).join("cells"))
                .unwrap()
                .map(|e| {
                    let e = e.unwrap();
                    (
                        e.file_name().to_string_lossy().into_owned(),
                        std::fs::read(e.path()).unwrap(),
                    )
                })
                .collect();
        cells.sort();
        (csv, cells)
    };
    let (a, b) = (run("a"), run("b"));
    verdict(
        a == b,
        format!(
            "results.csv {} bytes and {} cell files identical across two runs",
            a.0.len(),
            a.1.len()
        ),
    )
}

fn main() {
    let ring = ring_config();
    let (ring_out, _) = run_ring(&ring);
    // Wall time of one seed on its own, all four ablations included.
    let (_, per_seed) = run_ring(&ExperimentConfig {
        seeds: vec![ring.seeds[0]],
        ..ring.clone()
    });

    let results = [
        ("1 clustering contract", criterion_clustering_contract()),
        ("2 inference oracle", criterion_inference_oracle()),
        ("3 gradient check", criterion_gradient_check()),
        (
            "4 intra-open separation",
            criterion_intra_open(&ring_out, per_seed),
        ),
        ("5 ablation ordering", criterion_ablation_order(&ring_out)),
        ("6 sensitivity shapes", criterion_sensitivity(&ring)),
        ("7 metrics fixture", criterion_metrics_fixture()),
        ("8 determinism", criterion_determinism(&ring)),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!(
            "[{}] {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
