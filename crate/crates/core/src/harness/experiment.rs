//! Experiment suites: train a family of architectures over five random
//! splits and aggregate the accuracies into an aligned-column report.
//!
//! Runs are independent given their derived seeds, so the suite iterates
//! them with rayon; results are collected positionally by (architecture,
//! split) index, which keeps the aggregated report deterministic no matter
//! how the scheduler interleaves workers.

use std::path::Path;

use rayon::prelude::*;

use crate::data::{Dataset, STYLE_ART, STYLE_PHOTO};
use crate::error::{Error, Result};
use crate::harness::config::{ArchChoice, RunConfig};
use crate::harness::metrics::Metrics;
use crate::harness::train::{run_training, CHECKPOINT_FILE};
use crate::models::SelectorMode;
use crate::rng::Rng;

pub const NUM_SPLITS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Architecture comparison: baseline, GRN, switched network.
    Table1,
    /// Branch-depth sweep: C1-S through C5-S.
    Table3,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Suite> {
        match s {
            "table1" => Ok(Suite::Table1),
            "table3" => Ok(Suite::Table3),
            other => Err(Error::InvalidConfig(format!(
                "unknown suite {:?} (expected table1 or table3)",
                other
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Table1 => "table1",
            Suite::Table3 => "table3",
        }
    }
}

/// Geometry and budget for one experiment scale.
#[derive(Debug, Clone)]
pub struct ScalePreset {
    pub name: &'static str,
    /// Resolution the synthetic generator should use.
    pub gen_resolution: usize,
    pub rescale: usize,
    pub crop: usize,
    pub train_per_cell: usize,
    pub test_per_cell: usize,
    pub epochs: usize,
    pub switch_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Constant learning rate for the reversal network. It never receives
    /// the plateau drops, so its one rate has to serve the whole run; at
    /// desk scale that means starting lower than the scheduled networks do.
    pub grn_lr: f64,
    /// Art-branch learning-rate boost for the switched networks.
    pub art_lr_scale: f64,
    /// Backbone FC dropout for the label networks (the Switch keeps its own).
    pub dropout: f64,
}

/// Desk scale: small enough that the full suite trains on one CPU core in
/// minutes. The crop keeps the full-scale 256:224 rescale-to-crop structure
/// at 72:64.
pub fn desk_preset() -> ScalePreset {
    ScalePreset {
        name: "desk",
        gen_resolution: 72,
        rescale: 72,
        crop: 64,
        train_per_cell: 12,
        test_per_cell: 8,
        epochs: 30,
        switch_epochs: 10,
        batch: 8,
        lr: 1e-2,
        grn_lr: 4e-3,
        art_lr_scale: 1.0,
        // From-scratch at this scale: 0.5 pins the loss at the uniform
        // plateau and nothing trains.
        dropout: 0.0,
    }
}

/// Full-scale geometry (256px rescale, 224px crops, 30/10 cells). The
/// pipeline accepts it, but training at this size is far outside a desk
/// budget.
pub fn paper_preset() -> ScalePreset {
    ScalePreset {
        name: "paper",
        gen_resolution: 256,
        rescale: 256,
        crop: 224,
        train_per_cell: 30,
        test_per_cell: 10,
        epochs: 30,
        switch_epochs: 10,
        batch: 16,
        lr: 1e-2,
        grn_lr: 1e-2,
        art_lr_scale: 4.0,
        dropout: 0.5,
    }
}

pub fn preset(name: &str) -> Result<ScalePreset> {
    match name {
        "desk" => Ok(desk_preset()),
        "paper" => Ok(paper_preset()),
        other => Err(Error::InvalidConfig(format!(
            "unknown scale {:?} (expected desk or paper)",
            other
        ))),
    }
}

/// One table row: an architecture's accuracies averaged over the splits.
/// `overall` is derived as `(art + photo) / 2` from the averaged style
/// accuracies, the same balanced rule used per split.
#[derive(Debug, Clone)]
pub struct ArchRow {
    pub label: String,
    pub dir_name: String,
    pub overall: f64,
    pub art: f64,
    pub photo: f64,
    pub per_split_overall: Vec<f64>,
}

pub struct SuiteReport {
    pub suite: Suite,
    pub rows: Vec<ArchRow>,
    pub switch_metrics: Vec<Metrics>,
    pub report_text: String,
}

struct RunDesc {
    label: String,
    dir_name: String,
    arch: ArchChoice,
    k: usize,
    lambda: f64,
}

fn derived_seed(master: u64, tag: &str) -> u64 {
    Rng::new(master).derive(tag).seed()
}

fn base_cfg(scale: &ScalePreset, master_seed: u64) -> RunConfig {
    RunConfig {
        epochs: scale.epochs,
        batch: scale.batch,
        lr: scale.lr,
        dropout: scale.dropout,
        rescale: scale.rescale,
        crop: scale.crop,
        train_per_cell: scale.train_per_cell,
        test_per_cell: scale.test_per_cell,
        // One split family shared by every run in the suite.
        split_seed: Some(master_seed),
        ..RunConfig::default()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt_acc(v: f64) -> String {
    format!("{:.4}", v)
}

/// Trains every architecture in the suite over `num_splits` splits and
/// writes per-run artifacts plus `report.txt` under `out_dir`.
pub fn run_suite(
    suite: Suite,
    scale: &ScalePreset,
    master_seed: u64,
    ds: &Dataset,
    out_dir: &Path,
    num_splits: usize,
) -> Result<SuiteReport> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    // Phase A: one Switch per split; its checkpoint drives predicted routing.
    let switch_dir = |i: usize| out_dir.join("switch").join(format!("split{}", i));
    let switch_metrics: Vec<Metrics> = (0..num_splits)
        .into_par_iter()
        .map(|i| {
            let mut cfg = base_cfg(scale, master_seed);
            cfg.arch = ArchChoice::Switch;
            cfg.epochs = scale.switch_epochs;
            cfg.seed = derived_seed(master_seed, &format!("switch/split{}", i));
            cfg.split_index = i;
            cfg.out = Some(switch_dir(i));
            run_training(&cfg, ds).map(|o| o.metrics)
        })
        .collect::<Result<Vec<_>>>()?;

    let swiden_desc = |k: usize, label: String, dir_name: String| RunDesc {
        label,
        dir_name,
        arch: ArchChoice::Swiden,
        k,
        lambda: 2.0,
    };
    let descs: Vec<RunDesc> = match suite {
        Suite::Table1 => vec![
            RunDesc {
                label: "baseline".into(),
                dir_name: "baseline".into(),
                arch: ArchChoice::Baseline,
                k: 4,
                lambda: 2.0,
            },
            RunDesc {
                label: "grn (lambda=2)".into(),
                dir_name: "grn".into(),
                arch: ArchChoice::Grn,
                k: 4,
                lambda: 2.0,
            },
            swiden_desc(4, "swiden (C4-S)".into(), "swiden-c4".into()),
        ],
        Suite::Table3 => (1..=5)
            .map(|k| swiden_desc(k, format!("C{}-S", k), format!("c{}-s", k)))
            .collect(),
    };

    // Phase B: all (architecture, split) runs; results land positionally.
    let runs: Vec<(usize, usize)> = (0..descs.len())
        .flat_map(|d| (0..num_splits).map(move |i| (d, i)))
        .collect();
    let results: Vec<Metrics> = runs
        .par_iter()
        .map(|&(d, i)| {
            let desc = &descs[d];
            let mut cfg = base_cfg(scale, master_seed);
            cfg.arch = desc.arch;
            cfg.k = desc.k;
            cfg.lambda = desc.lambda;
            if desc.arch == ArchChoice::Swiden {
                cfg.selector = SelectorMode::Predicted;
                cfg.switch_checkpoint = Some(switch_dir(i).join(CHECKPOINT_FILE));
                cfg.art_lr_scale = scale.art_lr_scale;
            }
            if desc.arch == ArchChoice::Grn {
                cfg.lr = scale.grn_lr;
            }
            cfg.seed = derived_seed(master_seed, &format!("{}/split{}", desc.dir_name, i));
            cfg.split_index = i;
            cfg.out = Some(out_dir.join(&desc.dir_name).join(format!("split{}", i)));
            run_training(&cfg, ds).map(|o| o.metrics)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(descs.len());
    for (d, desc) in descs.iter().enumerate() {
        let split_metrics: Vec<&Metrics> =
            (0..num_splits).map(|i| &results[d * num_splits + i]).collect();
        let art = mean(&split_metrics.iter().map(|m| m.style_acc(STYLE_ART)).collect::<Vec<_>>());
        let photo = mean(
            &split_metrics
                .iter()
                .map(|m| m.style_acc(STYLE_PHOTO))
                .collect::<Vec<_>>(),
        );
        rows.push(ArchRow {
            label: desc.label.clone(),
            dir_name: desc.dir_name.clone(),
            overall: (art + photo) / 2.0,
            art,
            photo,
            per_split_overall: split_metrics.iter().map(|m| m.overall_acc).collect(),
        });
    }

    let report_text = render_report(suite, scale, master_seed, ds, &rows, &switch_metrics, num_splits);
    let report_path = out_dir.join("report.txt");
    std::fs::write(&report_path, &report_text).map_err(|e| Error::io(&report_path, e))?;

    Ok(SuiteReport {
        suite,
        rows,
        switch_metrics,
        report_text,
    })
}

fn render_report(
    suite: Suite,
    scale: &ScalePreset,
    master_seed: u64,
    ds: &Dataset,
    rows: &[ArchRow],
    switch_metrics: &[Metrics],
    num_splits: usize,
) -> String {
    let label_w = rows.iter().map(|r| r.label.len()).max().unwrap_or(12).max(12);
    let mut out = String::new();
    out.push_str(&format!(
        "Suite {} at {} scale: synthetic shape dataset, mini-VGG backbone, \
         {}px rescale, {}px crops.\n",
        suite.as_str(),
        scale.name,
        scale.rescale,
        scale.crop
    ));
    out.push_str(
        "Desk-scale analogue; accuracies are not comparable to published full-scale results.\n",
    );
    out.push_str(&format!(
        "classes={} styles={} splits={} epochs={} batch={} seed={}\n\n",
        ds.num_classes(),
        ds.num_styles,
        num_splits,
        scale.epochs,
        scale.batch,
        master_seed
    ));

    out.push_str(&format!(
        "{:<w$}  {:>12}  {:>10}  {:>10}\n",
        "Architecture",
        "Overall Acc.",
        "Art Acc.",
        "Photo Acc.",
        w = label_w
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<w$}  {:>12}  {:>10}  {:>10}\n",
            row.label,
            fmt_acc(row.overall),
            fmt_acc(row.art),
            fmt_acc(row.photo),
            w = label_w
        ));
    }

    out.push_str("\nPer-split overall accuracy\n");
    out.push_str(&format!("{:<w$}", "Architecture", w = label_w));
    for i in 0..num_splits {
        out.push_str(&format!("  {:>8}", format!("split{}", i)));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{:<w$}", row.label, w = label_w));
        for v in &row.per_split_overall {
            out.push_str(&format!("  {:>8}", fmt_acc(*v)));
        }
        out.push('\n');
    }

    let sw_overall = mean(&switch_metrics.iter().map(|m| m.overall_acc).collect::<Vec<_>>());
    let sw_art = mean(&switch_metrics.iter().map(|m| m.style_acc(STYLE_ART)).collect::<Vec<_>>());
    let sw_photo = mean(
        &switch_metrics
            .iter()
            .map(|m| m.style_acc(STYLE_PHOTO))
            .collect::<Vec<_>>(),
    );
    out.push_str(&format!(
        "\nSwitch style classifier (mean over splits): overall={} art={} photo={}\n",
        fmt_acc(sw_overall),
        fmt_acc(sw_art),
        fmt_acc(sw_photo)
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::gen_synthetic;

    fn tiny_preset() -> ScalePreset {
        ScalePreset {
            name: "tiny",
            gen_resolution: 36,
            rescale: 36,
            crop: 32,
            train_per_cell: 3,
            test_per_cell: 2,
            epochs: 1,
            switch_epochs: 1,
            batch: 4,
            lr: 1e-2,
            grn_lr: 1e-2,
            art_lr_scale: 1.0,
            dropout: 0.0,
        }
    }

    #[test]
    fn table1_suite_emits_three_rows_with_balanced_overall() {
        let scale = tiny_preset();
        let ds = gen_synthetic(21, 2, 6, scale.gen_resolution).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_suite(Suite::Table1, &scale, 77, &ds, dir.path(), 2).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.rows[0].label, "baseline");
        assert!(report.rows[1].label.starts_with("grn"));
        assert!(report.rows[2].label.starts_with("swiden"));
        for row in &report.rows {
            let expect = (row.art + row.photo) / 2.0;
            assert_eq!(row.overall.to_bits(), expect.to_bits());
            assert_eq!(row.per_split_overall.len(), 2);
        }
        assert!(report.report_text.contains("Overall Acc."));
        assert!(report.report_text.contains("Art Acc."));
        assert!(report.report_text.contains("Photo Acc."));
        assert!(report.report_text.contains("Desk-scale analogue"));
        assert!(dir.path().join("report.txt").exists());
        assert!(dir.path().join("baseline/split0/metrics.txt").exists());
        assert!(dir.path().join("switch/split1/checkpoint.swck").exists());
    }

    #[test]
    fn table3_suite_emits_five_branch_depth_rows() {
        let scale = tiny_preset();
        let ds = gen_synthetic(23, 2, 6, scale.gen_resolution).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_suite(Suite::Table3, &scale, 5, &ds, dir.path(), 1).unwrap();
        let labels: Vec<&str> = report.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["C1-S", "C2-S", "C3-S", "C4-S", "C5-S"]);
    }

    #[test]
    fn suite_reruns_reproduce_the_report_exactly() {
        let scale = tiny_preset();
        let ds = gen_synthetic(29, 2, 6, scale.gen_resolution).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run_suite(Suite::Table1, &scale, 11, &ds, d1.path(), 1).unwrap();
        let b = run_suite(Suite::Table1, &scale, 11, &ds, d2.path(), 1).unwrap();
        assert_eq!(a.report_text, b.report_text);
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.overall.to_bits(), y.overall.to_bits());
        }
    }

    #[test]
    fn presets_resolve_and_unknown_names_fail() {
        assert_eq!(preset("desk").unwrap().crop, 64);
        assert_eq!(preset("paper").unwrap().crop, 224);
        assert!(preset("bench").is_err());
    }
}
