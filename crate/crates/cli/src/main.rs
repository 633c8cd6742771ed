//! `op3d`: benchmark generation, projection, classification and evaluation.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.

mod args;
mod config;
mod sweep;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use op3d_core::eval::{
    compute_metrics_for, read_log, render_report, run_baseline, score_fixed_views, write_log,
    BaselineConfig, ViewKind,
};
use op3d_core::geometry::normalize_to_unit;
use op3d_core::iarm::classify_openpose;
use op3d_core::io::{load_sample, save_sample, SampleFormat};
use op3d_core::matching::{argmax, normalize_scores, TemplateBank};
use op3d_core::posegen::{generate_openpose_dataset, load_split, PoseManifest, MANIFEST_FILE};
use op3d_core::project::{fixed_view_sets, project, CameraConfig, ProjectionStyle, ViewAngles};
use op3d_core::toy::{generate_toy_benchmark, toy_canonical};
use serde_json::json;

use args::{
    ClassifyArgs, Cli, Command, EvalArgs, GenBenchArgs, MakeBankArgs, ProjectArgs, RunArgs, ToyArgs,
};
use config::{parse_styles, read_classes, usage, RunConfig, UsageError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            eprintln!("run `op3d --help` for the list of flags");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenBench(a) => gen_bench(a),
        Command::Project(a) => project_cmd(a),
        Command::Classify(a) => classify(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep::sweep(a),
        Command::MakeBank(a) => make_bank(a),
        Command::Toy(a) => toy(a),
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string(v)?)?;
    Ok(())
}

fn gen_bench(a: GenBenchArgs) -> Result<()> {
    let manifest = generate_openpose_dataset(&a.source, &a.dataset, a.seed, &a.out)?;
    print_json(&json!({
        "dataset": manifest.dataset_name,
        "seed": manifest.seed,
        "count": manifest.entries.len(),
        "classes": manifest.class_histogram(),
        "manifest": a.out.join(MANIFEST_FILE),
    }))
}

fn project_cmd(a: ProjectArgs) -> Result<()> {
    let style: ProjectionStyle = a.style.parse().map_err(usage)?;
    let phi = ViewAngles::new(a.phi1, a.phi2).map_err(|e| usage(e.to_string()))?;
    let cfg = CameraConfig {
        r_p: a.rp,
        fov_deg: a.fov,
        image_px: a.size,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let mut x = load_sample(&a.input)?;
    if a.normalize {
        x = normalize_to_unit(&x).context("normalizing the sample")?;
    }
    let img = project(&x, &phi, style, &cfg)?;
    img.save_png(&a.out)?;
    print_json(&json!({
        "out": a.out,
        "style": style,
        "phi1": phi.phi1,
        "phi2": phi.phi2,
        "covered_pixels": img.count_above(0.0),
    }))
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&a.scoring)?;
    let sample = load_sample(&a.input)?;
    let matcher = cfg.build_matcher()?;
    let classes = cfg.class_names();
    let result = match cfg.views {
        ViewKind::Iarm => {
            let p = classify_openpose(
                &sample,
                &classes,
                &matcher,
                &cfg.refine,
                &cfg.styles,
                &cfg.camera,
                cfg.seed,
            )?;
            if let Some(path) = &a.trace {
                let mut text = String::new();
                for c in &p.classes {
                    for s in &c.trace {
                        text.push_str(&serde_json::to_string(&json!({
                            "class": c.class_name,
                            "iteration": s.iteration,
                            "phi1": s.phi.phi1,
                            "phi2": s.phi.phi2,
                            "score": s.score,
                        }))?);
                        text.push('\n');
                    }
                }
                fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            let per_class: Vec<_> = p
                .classes
                .iter()
                .map(|c| {
                    json!({
                        "class": c.class_name,
                        "score": c.score,
                        "probability": c.probability,
                        "phi1": c.phi.phi1,
                        "phi2": c.phi.phi2,
                    })
                })
                .collect();
            json!({
                "input": a.input,
                "views": cfg.views.name(),
                "predicted_class": p.predicted_class,
                "predicted_index": p.predicted_index,
                "pca_degenerate": p.pca_degenerate,
                "classes": per_class,
            })
        }
        ViewKind::Fixed(set) => {
            if a.trace.is_some() {
                log::warn!("--trace only applies to --views iarm");
            }
            let views = fixed_view_sets(&set)?;
            let x = normalize_to_unit(&sample)?;
            let scores = score_fixed_views(
                &x,
                &classes,
                &matcher,
                &views,
                &cfg.styles,
                &cfg.camera,
                cfg.seed,
            )?;
            let probs = normalize_scores(&scores)?;
            let best = argmax(&probs).expect("non-empty class list");
            let per_class: Vec<_> = classes
                .iter()
                .zip(&scores)
                .zip(&probs)
                .map(|((c, s), p)| json!({"class": c, "score": s.value(), "probability": p}))
                .collect();
            json!({
                "input": a.input,
                "views": cfg.views.name(),
                "predicted_class": classes[best],
                "predicted_index": best,
                "classes": per_class,
            })
        }
    };
    print_json(&result)
}

pub(crate) fn read_manifest(dataset: &Path) -> Result<PoseManifest> {
    Ok(PoseManifest::read(&dataset.join(MANIFEST_FILE))?)
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&a.scoring)?;
    let manifest = read_manifest(&a.dataset)?;
    let matcher = cfg.build_matcher()?;
    let baseline = BaselineConfig {
        views: cfg.views,
        styles: cfg.styles.clone(),
        camera: cfg.camera,
        refine: cfg.refine.clone(),
        seed: cfg.seed,
        jobs: a.jobs,
    };
    let (report, records) = run_baseline(
        &a.dataset,
        &manifest,
        &cfg.class_names(),
        &matcher,
        &baseline,
    )?;
    write_log(&a.log, &cfg, &records)?;
    if let Some(path) = &a.report {
        let text = render_report(&manifest.dataset_name, cfg.views.name(), &report);
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    print_json(&json!({
        "samples": records.len(),
        "views": cfg.views.name(),
        "acc": report.acc,
        "macc": report.macc,
        "log": a.log,
    }))
}

fn eval(a: EvalArgs) -> Result<()> {
    let records = read_log(&a.log)?;
    let mut preds: Vec<_> = records.iter().map(|r| r.labeled()).collect();
    let classes: Vec<String> = match &a.split {
        Some(name) => {
            let split = load_split(name).map_err(|e| usage(e.to_string()))?;
            let before = preds.len();
            preds.retain(|p| split.unseen_classes.contains(&p.true_class));
            if preds.len() != before {
                log::warn!(
                    "{} records outside the {name} split were skipped",
                    before - preds.len()
                );
            }
            split.unseen_classes
        }
        None => {
            let mut c: Vec<String> = preds.iter().map(|p| p.true_class.clone()).collect();
            c.sort();
            c.dedup();
            c
        }
    };
    let report = compute_metrics_for(&preds, &classes)?;
    let text = render_report(&a.title, "Run", &report);
    match &a.report {
        Some(path) => {
            fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    if a.report.is_some() {
        print_json(&json!({"acc": report.acc, "macc": report.macc, "report": a.report}))?;
    }
    Ok(())
}

fn make_bank(a: MakeBankArgs) -> Result<()> {
    let styles = parse_styles(&a.styles)?;
    let camera = CameraConfig {
        r_p: a.rp,
        image_px: a.size,
        ..CameraConfig::default()
    };
    camera.validate().map_err(|e| usage(e.to_string()))?;
    let mut canonical = Vec::new();
    for c in read_classes(&a.classes)? {
        let path = c
            .canonical
            .ok_or_else(|| usage(format!("class {} has no canonical sample", c.name)))?;
        canonical.push((c.name, load_sample(&path)?));
    }
    let bank = TemplateBank::build(&canonical, &styles, &camera)?;
    bank.save(&a.out)?;
    print_json(&json!({"out": a.out, "entries": bank.entries().len(), "classes": bank.classes()}))
}

fn toy(a: ToyArgs) -> Result<()> {
    let manifest = generate_toy_benchmark(&a.out, a.per_class, a.seed)?;
    let canon_dir = a.out.join("canonical");
    fs::create_dir_all(&canon_dir)?;
    let mut classes = String::new();
    for (name, sample) in toy_canonical() {
        save_sample(
            &canon_dir.join(format!("{name}.off")),
            &sample,
            SampleFormat::Off,
        )?;
        classes.push_str(&format!("{name} canonical/{name}.off\n"));
    }
    fs::write(a.out.join("classes.txt"), classes)?;
    print_json(&json!({
        "source": a.out.join("source"),
        "dataset": a.out.join("openpose"),
        "classes": a.out.join("classes.txt"),
        "count": manifest.entries.len(),
    }))
}
