//! Subcommand implementations. Each takes parsed options, does the work,
//! and prints a human-readable summary to stdout; the CLI layer maps errors
//! to exit codes.

use std::path::Path;

use crate::data::packed::{load_packed, save_packed};
use crate::data::synth::gen_synthetic;
use crate::data::{make_splits, Dataset, SplitSpec, STYLE_NAMES};
use crate::error::{Error, Result};
use crate::harness::config::{ArchChoice, RunConfig};
use crate::harness::eval::{evaluate, EvalTarget};
use crate::harness::experiment::{preset, run_suite, Suite, NUM_SPLITS};
use crate::harness::metrics::{overall_from_rows, parse_predictions_csv, Metrics};
use crate::harness::train::{
    build_run_network, run_training, write_run_artifacts, TrainOutcome, METRICS_FILE,
    PREDICTIONS_FILE,
};
use crate::layers::gradcheck::{
    check_grl_contract, check_router_contract, layer_reports, FD_TOLERANCE,
};
use crate::models::checkpoint_load;

pub fn cmd_gen_data(
    seed: u64,
    classes: usize,
    per_class: usize,
    resolution: usize,
    out: &Path,
) -> Result<()> {
    let ds = gen_synthetic(seed, classes, per_class, resolution)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    save_packed(&ds, out)?;
    println!(
        "wrote {} images ({} classes x 2 styles x {} each, {}px) to {}",
        ds.images.len(),
        classes,
        per_class,
        resolution,
        out.display()
    );
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    load_packed(cfg.require_data()?)
}

fn print_training_summary(outcome: &TrainOutcome) {
    let m = &outcome.metrics;
    println!("{}: test overall accuracy {:.4}", m.arch_label, m.overall_acc);
    for (i, name) in STYLE_NAMES.iter().enumerate() {
        if i < m.style_counts.len() {
            println!("  {} accuracy {:.4}", name, m.style_acc(i));
        }
    }
    println!(
        "  best validation accuracy {:.4} at epoch {}",
        m.best_val_acc, m.best_epoch
    );
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let outcome = run_training(cfg, &ds)?;
    print_training_summary(&outcome);
    Ok(())
}

pub fn cmd_train_switch(cfg: &mut RunConfig) -> Result<()> {
    cfg.arch = ArchChoice::Switch;
    cmd_train(cfg)
}

/// Single-row accuracy table in the three-column experiment layout.
fn render_eval_report(label: &str, m: &Metrics) -> String {
    let w = label.len().max(12);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<w$}  {:>12}  {:>10}  {:>10}\n",
        "Architecture",
        "Overall Acc.",
        "Art Acc.",
        "Photo Acc.",
        w = w
    ));
    out.push_str(&format!(
        "{:<w$}  {:>12.4}  {:>10.4}  {:>10.4}\n",
        label,
        m.overall_acc,
        m.style_acc(1),
        m.style_acc(0),
        w = w
    ));
    out
}

/// Rebuilds the configured network, loads the checkpoint into it (the spec
/// hash guards against mismatches), and evaluates the test split with
/// five-crop pooling.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let spec = SplitSpec {
        train_per_cell: cfg.train_per_cell,
        test_per_cell: cfg.test_per_cell,
        seed: cfg.split_seed(),
    };
    let splits = make_splits(&ds, &spec, cfg.split_index + 1)?;
    let split = &splits[cfg.split_index];
    let (mut net, mut switch) = build_run_network(cfg, ds.num_classes(), ds.num_styles)?;
    checkpoint_load(&mut net, checkpoint)?;
    let target = match cfg.arch {
        ArchChoice::Switch => EvalTarget::Style,
        _ => EvalTarget::Class,
    };
    let out = evaluate(
        &mut net,
        cfg.selector,
        switch.as_mut(),
        &ds,
        &split.test,
        cfg.rescale,
        cfg.crop,
        target,
    )?;
    let metrics = Metrics {
        arch_label: cfg.arch_label(),
        spec_string: net.spec_string.clone(),
        seed: cfg.seed,
        overall_acc: out.overall_acc,
        style_counts: out.style_counts,
        class_counts: out.class_counts,
        loss_curve: vec![],
        lr_curve: vec![],
        val_acc_curve: vec![],
        best_val_acc: 0.0,
        best_epoch: 0,
    };
    let report = render_eval_report(&metrics.arch_label, &metrics);
    print!("{}", report);
    if let Some(out_dir) = cfg.out.as_deref() {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let outcome = TrainOutcome {
            metrics,
            rows: out.rows,
        };
        write_run_artifacts(&outcome, &ds, out_dir)?;
        let report_path = out_dir.join("report.txt");
        std::fs::write(&report_path, report).map_err(|e| Error::io(&report_path, e))?;
        println!(
            "wrote {} and {} to {}",
            METRICS_FILE,
            PREDICTIONS_FILE,
            out_dir.display()
        );
    }
    Ok(())
}

/// Finite-difference checks for every layer plus the exact router and GRL
/// contracts. Prints one line per layer; any failure is reported after all
/// lines so the full picture is visible.
pub fn cmd_gradcheck(seed: u64) -> Result<()> {
    let reports = layer_reports(20, 12, seed)?;
    let mut failed = Vec::new();
    for r in &reports {
        println!(
            "{:<16} configs={:<3} max_rel_err={:.3e}  {}",
            r.layer,
            r.configs,
            r.max_rel_err,
            if r.passed() { "PASS" } else { "FAIL" }
        );
        if !r.passed() {
            failed.push(r.layer.clone());
        }
    }
    match check_grl_contract(seed) {
        Ok(()) => println!("{:<16} exact contract (forward id, backward -lambda*g)  PASS", "grl"),
        Err(e) => {
            println!("{:<16} {}  FAIL", "grl", e);
            failed.push("grl".into());
        }
    }
    match check_router_contract(seed) {
        Ok(()) => println!("{:<16} exclusive routing, zero grads in idle branches  PASS", "router"),
        Err(e) => {
            println!("{:<16} {}  FAIL", "router", e);
            failed.push("router".into());
        }
    }
    if failed.is_empty() {
        println!("all layers within tolerance {:.0e}", FD_TOLERANCE);
        Ok(())
    } else {
        Err(Error::GradCheck(format!("failing checks: {}", failed.join(", "))))
    }
}

pub fn cmd_experiment(
    suite_name: &str,
    scale_name: &str,
    seed: u64,
    data: &Path,
    out: &Path,
    num_splits: Option<usize>,
) -> Result<()> {
    let suite = Suite::parse(suite_name)?;
    let scale = preset(scale_name)?;
    let ds = load_packed(data)?;
    let report = run_suite(
        suite,
        &scale,
        seed,
        &ds,
        out,
        num_splits.unwrap_or(NUM_SPLITS),
    )?;
    print!("{}", report.report_text);
    Ok(())
}

/// Recomputes overall accuracy from a prediction log; used to cross-check
/// reported metrics.
pub fn recompute_overall(csv_text: &str, num_styles: usize, num_classes: usize) -> Result<f64> {
    let rows = parse_predictions_csv(csv_text)?;
    Ok(overall_from_rows(&rows, num_styles, num_classes))
}
