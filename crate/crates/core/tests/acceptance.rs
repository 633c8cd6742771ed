//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails. Lines tagged `INFO` are diagnostics and
//! do not affect the outcome.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use op3d_core::eval::{
    compute_metrics, format_log, run_baseline, BaselineConfig, LabeledPrediction, ViewKind,
};
use op3d_core::geometry::{rotate, PointCloud, RotationQ, Sample, TriMesh, Vec3};
use op3d_core::iarm::{refine_angles, RefineConfig};
use op3d_core::io::{save_sample, SampleFormat};
use op3d_core::matching::{
    build_prompt, mix_with_noise, normalize_scores, score_from_errors, MatchScore, PromptTemplate,
    ReferenceMatcher,
};
use op3d_core::pca_align;
use op3d_core::posegen::{generate_openpose_dataset, load_split};
use op3d_core::project::{
    camera_from_angles, mask_iou, project, render_mesh, CameraConfig, ProjectionStyle, ViewAngles,
};
use op3d_core::toy::{box_mesh, generate_toy_benchmark, pyramid_mesh, toy_bank, TOY_CLASSES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<(bool, String), String>;

struct Suite {
    failed: usize,
}

impl Suite {
    fn run(&mut self, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok((ok, d)) => (ok, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = elapsed <= limit;
        let pass = ok && in_time;
        if !pass {
            self.failed += 1;
        }
        let timing = if in_time {
            format!("{:.2}s", elapsed.as_secs_f64())
        } else {
            format!("{:.2}s exceeds {}s", elapsed.as_secs_f64(), limit.as_secs())
        };
        println!(
            "{} {name} [{timing}] {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Per-class (samples, correct) for the open-pose McGill rows, recovered
/// from the printed per-class percentages.
const MCGILL_COUNTS: [(&str, usize); 14] = [
    ("ant", 9),
    ("bird", 7),
    ("crab", 10),
    ("dinosaur", 8),
    ("dolphin", 4),
    ("fish", 8),
    ("hand", 7),
    ("octopus", 8),
    ("plier", 7),
    ("quadruped", 11),
    ("snake", 9),
    ("spectacle", 9),
    ("spider", 11),
    ("teddy", 7),
];

/// (method, per-class accuracies, printed Acc, printed mAcc).
const VIEW_ROWS: [(&str, [f64; 14], f64, f64); 3] = [
    (
        "Cube",
        [
            0.0, 57.1, 0.0, 0.0, 100.0, 0.0, 14.3, 25.0, 85.7, 0.0, 66.7, 0.0, 18.2, 0.0,
        ],
        21.7,
        26.2,
    ),
    (
        "Circular",
        [
            0.0, 57.1, 0.0, 0.0, 75.0, 12.5, 57.1, 37.5, 100.0, 9.1, 55.6, 0.0, 9.1, 0.0,
        ],
        25.2,
        29.5,
    ),
    (
        "IARM",
        [
            0.0, 71.4, 10.0, 0.0, 100.0, 12.5, 71.4, 37.5, 71.4, 27.3, 77.8, 0.0, 45.5, 28.6,
        ],
        35.7,
        39.5,
    ),
];

/// Top-view row. Its printed mAcc is the mean of the rounded per-class
/// values, so it is reported but not checked.
const TOP_VIEW_ROW: [f64; 14] = [
    0.0, 28.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 42.9, 0.0, 0.0, 11.1, 9.1, 0.0,
];

fn predictions_for(row: &[f64; 14]) -> Vec<LabeledPrediction> {
    let mut preds = Vec::new();
    for (i, ((class_name, n), pct)) in MCGILL_COUNTS.iter().zip(row).enumerate() {
        let correct = (pct * *n as f64 / 100.0).round() as usize;
        let wrong = MCGILL_COUNTS[(i + 1) % MCGILL_COUNTS.len()].0;
        for k in 0..*n {
            preds.push(LabeledPrediction {
                sample_id: format!("{class_name}/{k}"),
                true_class: class_name.to_string(),
                predicted_class: if k < correct { class_name } else { wrong }.to_string(),
            });
        }
    }
    preds
}

fn top_view_metrics() -> String {
    match compute_metrics(&predictions_for(&TOP_VIEW_ROW)) {
        Ok(r) => format!("top view mAcc {:.2} Acc {:.2}", r.macc, r.acc),
        Err(e) => format!("error: {e}"),
    }
}

fn metrics_fidelity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (method, row, acc, macc) in VIEW_ROWS {
        let r = compute_metrics(&predictions_for(&row)).map_err(err)?;
        let per_class_ok = MCGILL_COUNTS
            .iter()
            .zip(row)
            .all(|((c, _), pct)| (r.per_class[*c] - pct).abs() <= 0.05);
        let row_ok = per_class_ok && (r.macc - macc).abs() <= 0.05 && (r.acc - acc).abs() <= 0.05;
        ok &= row_ok;
        parts.push(format!(
            "{method} mAcc {:.2} (want {macc}) Acc {:.2}",
            r.macc, r.acc
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn stand_in_tree(root: &Path, counts: &[(String, usize)]) -> Result<(), String> {
    for (class_name, n) in counts {
        let dir = root.join(class_name);
        fs::create_dir_all(&dir).map_err(err)?;
        for i in 0..*n {
            let pts = (0..4)
                .map(|k| {
                    Vec3::new(
                        k as f64,
                        (i % 7) as f64 * 0.1 + (k * k) as f64,
                        (k % 2) as f64,
                    )
                })
                .collect();
            let s = Sample::Cloud(PointCloud::new(pts).map_err(err)?);
            save_sample(
                &dir.join(format!("{class_name}_{i:04}.xyz")),
                &s,
                SampleFormat::Xyz,
            )
            .map_err(err)?;
        }
    }
    Ok(())
}

fn benchmark_counts() -> Outcome {
    let modelnet10: [usize; 10] = [50, 100, 100, 86, 86, 100, 86, 100, 100, 100];
    let sets = [
        ("modelnet10", modelnet10.to_vec()),
        ("mcgill", MCGILL_COUNTS.iter().map(|c| c.1).collect()),
    ];
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, counts) in sets {
        let split = load_split(name).map_err(err)?;
        let tree: Vec<(String, usize)> = split.unseen_classes.iter().cloned().zip(counts).collect();
        let src = tmp.path().join(name).join("src");
        stand_in_tree(&src, &tree)?;
        let a = generate_openpose_dataset(&src, name, 42, &tmp.path().join(name).join("a"))
            .map_err(err)?;
        let b = generate_openpose_dataset(&src, name, 42, &tmp.path().join(name).join("b"))
            .map_err(err)?;
        let read = |d: &str| fs::read(tmp.path().join(name).join(d).join("manifest.jsonl"));
        let identical = read("a").map_err(err)? == read("b").map_err(err)?;
        let want = split.test.unwrap_or(0);
        ok &= identical && a.entries.len() == want && b.entries.len() == want;
        parts.push(format!(
            "{name} {} entries (want {want}), identical manifests: {identical}",
            a.entries.len()
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Result<RotationQ, String> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-3 {
            return RotationQ::new(q[0] / n, q[1] / n, q[2] / n, q[3] / n).map_err(err);
        }
    }
}

fn pca_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst_dist: f64 = 0.0;
    let mut worst_eig: f64 = 0.0;
    for _ in 0..100 {
        let shape = random_rotation(&mut rng)?.to_matrix();
        let pts = (0..200)
            .map(|_| {
                let g: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                shape * Vec3::new(3.0 * g[0], 1.5 * g[1], 0.5 * g[2])
            })
            .collect();
        let x = PointCloud::new(pts).map_err(err)?;
        let q = random_rotation(&mut rng)?;
        let a = pca_align(&x).map_err(err)?;
        let b = pca_align(&rotate(&x, &q).map_err(err)?).map_err(err)?;
        if a.pca_degenerate || b.pca_degenerate {
            return Err("generated cloud has repeated eigenvalues".into());
        }
        for k in 0..3 {
            worst_eig = worst_eig.max((a.frame.eigvals[k] - b.frame.eigvals[k]).abs());
        }
        let (pa, pb) = (a.aligned.points(), b.aligned.points());
        let signs: [f64; 3] = std::array::from_fn(|k| {
            let dot: f64 = pa.iter().zip(pb).map(|(p, q)| p[k] * q[k]).sum();
            if dot < 0.0 {
                -1.0
            } else {
                1.0
            }
        });
        for (p, q) in pa.iter().zip(pb) {
            let flipped = Vec3::new(signs[0] * q.x, signs[1] * q.y, signs[2] * q.z);
            worst_dist = worst_dist.max((p - flipped).norm());
        }
    }
    Ok((
        worst_dist < 1e-5 && worst_eig <= 1e-8,
        format!("100 clouds, max pointwise distance {worst_dist:.2e}, max eigenvalue change {worst_eig:.2e}"),
    ))
}

fn asymmetric_mesh() -> Result<TriMesh, String> {
    let p = pyramid_mesh(0.8, 0.9);
    let b = box_mesh(0.9, 0.15, 0.15);
    let mut v = p.vertices().to_vec();
    let off = v.len();
    v.extend(b.vertices().iter().map(|q| q + Vec3::new(0.35, 0.3, 0.1)));
    let mut f = p.faces().to_vec();
    f.extend(b.faces().iter().map(|t| t.map(|i| i + off)));
    TriMesh::new(v, f).map_err(err)
}

fn projection_correctness() -> Outcome {
    let cfg = CameraConfig::default();
    let angles = |a: f64, b: f64| ViewAngles::new(a, b).map_err(err);

    let cube = box_mesh(1.0, 1.0, 1.0);
    let mut worst_px: f64 = 0.0;
    for (phi1, phi2) in [
        (0.0, 0.0),
        (30.0, 45.0),
        (-20.0, 200.0),
        (60.0, 310.0),
        (90.0, 0.0),
    ] {
        let phi = angles(phi1, phi2)?;
        let cam = camera_from_angles(&phi, &cfg).map_err(err)?;
        let mut want = [f64::MAX, f64::MAX, f64::MIN, f64::MIN];
        for c in cube.vertices() {
            let s = cam.project(c).ok_or("corner behind camera")?;
            want = [
                want[0].min(s.x),
                want[1].min(s.y),
                want[2].max(s.x),
                want[3].max(s.y),
            ];
        }
        let img = render_mesh(&cube, &phi, &cfg).map_err(err)?;
        let (x0, y0, x1, y1) = img.bounding_box(0.0).ok_or("empty render")?;
        let got = [x0 as f64, y0 as f64, x1 as f64 + 1.0, y1 as f64 + 1.0];
        for (g, w) in got.iter().zip(want) {
            worst_px = worst_px.max((g - w).abs());
        }
    }

    let m = asymmetric_mesh()?;
    let sample = Sample::Mesh(m.clone());
    let mut periodic = true;
    for style in [
        ProjectionStyle::Render,
        ProjectionStyle::Depth,
        ProjectionStyle::Edge,
    ] {
        let a = project(&sample, &angles(25.0, 40.0)?, style, &cfg).map_err(err)?;
        let b = project(&sample, &angles(25.0, 400.0)?, style, &cfg).map_err(err)?;
        periodic &= a == b;
    }

    let mut min_iou: f64 = 1.0;
    for (phi1, phi2, turn) in [(0.0, 0.0, 30.0), (35.0, 120.0, 75.0), (-50.0, 300.0, 200.0)] {
        let q = RotationQ::from_axis_angle(&Vec3::z(), f64::to_radians(turn));
        let turned = rotate(&m, &q).map_err(err)?;
        let a = render_mesh(&turned, &angles(phi1, phi2 + turn)?, &cfg).map_err(err)?;
        let b = render_mesh(&m, &angles(phi1, phi2)?, &cfg).map_err(err)?;
        min_iou = min_iou.min(mask_iou(&a.mask(0.0), &b.mask(0.0)));
    }
    Ok((
        worst_px <= 2.0 && periodic && min_iou >= 0.98,
        format!("cube bbox max error {worst_px:.2} px, azimuth periodic: {periodic}, duality min IoU {min_iou:.4}"),
    ))
}

fn diffusion_arithmetic() -> Outcome {
    let perfect = score_from_errors(&[0.0; 30]).map_err(err)?.value();
    let two = score_from_errors(&[1.0, 3.0]).map_err(err)?.value();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst_sum: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let scores: Vec<MatchScore> = (0..n)
            .map(|_| MatchScore::from_exponent(rng.random_range(0.0..50.0)))
            .collect();
        let p = normalize_scores(&scores).map_err(err)?;
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    let f0 = [0.3, -1.2, 2.5, 0.0];
    let eps = [1.1, 0.4, -0.7, 2.0];
    let clean = mix_with_noise(&f0, &eps, 1.0).map_err(err)?;
    let noise = mix_with_noise(&f0, &eps, 0.0).map_err(err)?;
    let endpoints = clean == f0 && noise == eps;
    let ok =
        perfect == 1.0 && (two - (-2.0f64).exp()).abs() <= 1e-12 && worst_sum <= 1e-12 && endpoints;
    Ok((
        ok,
        format!("perfect {perfect}, {{1,3}} -> {two:.15}, max |sum p - 1| {worst_sum:.1e}, endpoints exact: {endpoints}"),
    ))
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Successes of the default schedule against `targets` on the unimodal
/// azimuth score.
fn iarm_hits(targets: &[f64]) -> Result<(usize, Vec<String>), String> {
    let cfg = RefineConfig::default();
    let mut hits = 0;
    let mut misses = Vec::new();
    for &target in targets {
        let ms = |phi2: f64| (f64::to_radians(phi2 - target).cos() - 1.0).exp();
        let optimum = (0..360)
            .map(f64::from)
            .fold(0.0, |best, a| if ms(a) > ms(best) { a } else { best });
        let out = refine_angles(|phi: &ViewAngles| Ok(ms(phi.phi2)), &cfg).map_err(err)?;
        if circular_gap(out.phi.phi2, optimum) <= 4.0 {
            hits += 1;
        } else {
            misses.push(format!("{target:.0}->{:.0}", out.phi.phi2));
        }
    }
    Ok((hits, misses))
}

fn iarm_optimization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let targets: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..360.0)).collect();
    let (hits, misses) = iarm_hits(&targets)?;
    Ok((
        hits >= 18,
        format!(
            "{hits}/20 within 4 deg (need 18); missed {}",
            misses.join(" ")
        ),
    ))
}

fn iarm_reachable_window() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let targets: Vec<f64> = (0..20).map(|_| rng.random_range(-100.0..100.0)).collect();
    match iarm_hits(&targets) {
        Ok((hits, _)) => format!("{hits}/20 within 4 deg for peaks drawn from [-100, 100]"),
        Err(e) => format!("error: {e}"),
    }
}

fn toy_end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let manifest = generate_toy_benchmark(tmp.path(), 10, 42).map_err(err)?;
    let dataset = tmp.path().join("openpose");
    let styles = vec![ProjectionStyle::Depth];
    let camera = CameraConfig::default();
    let matcher = ReferenceMatcher::new(toy_bank(&styles, &camera).map_err(err)?);
    let classes: Vec<String> = TOY_CLASSES.iter().map(|c| c.to_string()).collect();
    let base = BaselineConfig {
        styles,
        camera,
        ..BaselineConfig::default()
    };
    let mut acc = std::collections::BTreeMap::new();
    for name in ["single", "cube", "circular"] {
        let cfg = BaselineConfig {
            views: ViewKind::parse(name).ok_or("bad view kind")?,
            ..base.clone()
        };
        let (r, _) = run_baseline(&dataset, &manifest, &classes, &matcher, &cfg).map_err(err)?;
        acc.insert(name, r.acc);
    }
    let mut logs = Vec::new();
    for jobs in [1, 4] {
        let cfg = BaselineConfig {
            jobs,
            ..base.clone()
        };
        let (r, records) =
            run_baseline(&dataset, &manifest, &classes, &matcher, &cfg).map_err(err)?;
        acc.insert("iarm", r.acc);
        logs.push(format_log(&cfg.views, &records));
    }
    let deterministic = logs[0] == logs[1];
    let gap = acc["iarm"] - acc["single"];
    let ordered = acc["iarm"] >= acc["cube"] && acc["iarm"] >= acc["circular"];
    Ok((
        gap >= 20.0 && ordered && deterministic,
        format!(
            "Acc single {:.1}, cube {:.1}, circular {:.1}, iarm {:.1}; gap {gap:.1} (need 20), iarm >= multi-view: {ordered}, jobs 1 vs 4 identical: {deterministic}",
            acc["single"], acc["cube"], acc["circular"], acc["iarm"]
        ),
    ))
}

fn prompt_bank() -> Outcome {
    let want = [
        (
            ProjectionStyle::Render,
            "one model of [n_c] in linear composition",
            "one model of chair in linear composition",
        ),
        (
            ProjectionStyle::Depth,
            "one line-drawn [n_c]",
            "one line-drawn chair",
        ),
        (
            ProjectionStyle::Edge,
            "one edge map of one standalone [n_c]",
            "one edge map of one standalone chair",
        ),
    ];
    let ok = want.iter().all(|(style, template, filled)| {
        PromptTemplate::default_for(*style).template() == *template
            && build_prompt(*style, "chair") == *filled
    });
    let night = build_prompt(ProjectionStyle::Depth, "night_stand");
    Ok((
        ok && night == "one line-drawn night stand",
        "render, depth and edge templates verbatim".into(),
    ))
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: 0 };
    suite.run("metrics-fidelity", Duration::from_secs(1), metrics_fidelity);
    println!("INFO {}", top_view_metrics());
    suite.run(
        "benchmark-counts",
        Duration::from_secs(10),
        benchmark_counts,
    );
    suite.run("pca-invariance", Duration::from_secs(30), pca_invariance);
    suite.run(
        "projection-correctness",
        Duration::from_secs(60),
        projection_correctness,
    );
    suite.run(
        "diffusion-arithmetic",
        Duration::from_secs(1),
        diffusion_arithmetic,
    );
    suite.run(
        "iarm-optimization",
        Duration::from_secs(10),
        iarm_optimization,
    );
    println!("INFO iarm-reachable-window {}", iarm_reachable_window());
    suite.run("toy-end-to-end", Duration::from_secs(300), toy_end_to_end);
    suite.run("prompt-bank", Duration::from_secs(1), prompt_bank);
    println!("{} criteria failed", suite.failed);
    if suite.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
