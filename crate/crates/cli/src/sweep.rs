//! Grid of scoring configurations over one dataset.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};

use anyhow::{Context, Result};
use op3d_core::eval::{render_table, run_baseline, BaselineConfig, MetricsReport};
use serde::Deserialize;
use serde_json::json;

use crate::args::SweepArgs;
use crate::config::{parse_styles, parse_views, usage, RunConfig};
use crate::read_manifest;

/// Each axis is optional; a missing axis keeps the resolved flag value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Grid {
    styles: Option<Vec<String>>,
    views: Option<Vec<String>>,
    rounds: Option<Vec<usize>>,
    fd: Option<Vec<f64>>,
}

fn axis<T: Clone>(values: &Option<Vec<T>>, name: &str) -> Result<Vec<Option<T>>> {
    match values {
        None => Ok(vec![None]),
        Some(v) if v.is_empty() => Err(usage(format!("grid axis `{name}` is empty"))),
        Some(v) => Ok(v.iter().cloned().map(Some).collect()),
    }
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let text =
        fs::read_to_string(&a.grid).with_context(|| format!("reading {}", a.grid.display()))?;
    let grid: Grid =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", a.grid.display())))?;
    let manifest = read_manifest(&a.dataset)?;

    let mut cells = Vec::new();
    let mut seen = BTreeSet::new();
    for styles in axis(&grid.styles, "styles")? {
        for views in axis(&grid.views, "views")? {
            for rounds in axis(&grid.rounds, "rounds")? {
                for fd in axis(&grid.fd, "fd")? {
                    let mut s = a.scoring.clone();
                    if let Some(st) = &styles {
                        parse_styles(st)?;
                        s.styles = Some(st.clone());
                    }
                    if let Some(v) = &views {
                        parse_views(v)?;
                        s.views = Some(v.clone());
                    }
                    if rounds.is_some() {
                        s.rounds = rounds;
                        s.etas = None;
                    }
                    if fd.is_some() {
                        s.fd = fd;
                    }
                    let cfg = RunConfig::resolve(&s)?;
                    let label = cell_label(&cfg);
                    if !seen.insert(label.clone()) {
                        log::warn!("duplicate grid cell {label} skipped");
                        continue;
                    }
                    cells.push((label, cfg));
                }
            }
        }
    }

    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut out = BufWriter::new(file);
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    for (label, cfg) in cells {
        let matcher = cfg.build_matcher()?;
        let baseline = BaselineConfig {
            views: cfg.views,
            styles: cfg.styles.clone(),
            camera: cfg.camera,
            refine: cfg.refine.clone(),
            seed: cfg.seed,
            jobs: a.jobs,
        };
        let (report, _) = run_baseline(
            &a.dataset,
            &manifest,
            &cfg.class_names(),
            &matcher,
            &baseline,
        )?;
        let line = json!({
            "cell": label,
            "views": cfg.views.name(),
            "styles": cfg.styles,
            "rounds": cfg.refine.rounds,
            "fd": cfg.refine.fd_step,
            "acc": report.acc,
            "macc": report.macc,
            "per_class": report.per_class,
        });
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
        out.flush()?;
        rows.push((label, report));
    }
    print!("{}", render_table(&rows));
    Ok(())
}

fn cell_label(cfg: &RunConfig) -> String {
    let styles: Vec<&str> = cfg.styles.iter().map(|s| s.as_str()).collect();
    let mut label = format!("{} {}", cfg.views.name(), styles.join("+"));
    if cfg.views.name() == "iarm" {
        label.push_str(&format!(
            " R={} fd={}",
            cfg.refine.rounds, cfg.refine.fd_step
        ));
    }
    label
}
