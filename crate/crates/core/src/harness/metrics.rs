//! Accuracy bookkeeping, metrics files, and per-sample prediction logs.
//!
//! Overall accuracy is always derived by one canonical rule: when every
//! style has the same number of test samples (the balanced case), it is the
//! plain mean of the per-style accuracies, so `overall = (art + photo) / 2`
//! holds as an exact floating-point identity; otherwise it falls back to the
//! sample-weighted ratio. Recomputing from the prediction log uses the same
//! rule, so the two always agree bit-for-bit.

use crate::error::{Error, Result};

/// (correct, total) per group.
pub type Counts = Vec<(usize, usize)>;

pub fn group_accuracy(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Canonical overall accuracy from per-style counts. See module docs.
pub fn overall_from_style_counts(counts: &Counts) -> f64 {
    let occupied: Vec<&(usize, usize)> = counts.iter().filter(|(_, t)| *t > 0).collect();
    if occupied.is_empty() {
        return 0.0;
    }
    let balanced = occupied.iter().all(|(_, t)| *t == occupied[0].1);
    if balanced {
        let sum: f64 = occupied.iter().map(|(c, t)| group_accuracy(*c, *t)).sum();
        sum / occupied.len() as f64
    } else {
        let correct: usize = occupied.iter().map(|(c, _)| c).sum();
        let total: usize = occupied.iter().map(|(_, t)| t).sum();
        correct as f64 / total as f64
    }
}

/// One evaluated test sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredRow {
    /// Index into the dataset.
    pub index: usize,
    pub true_class: usize,
    pub true_style: usize,
    pub pred_class: usize,
}

impl PredRow {
    pub fn correct(&self) -> bool {
        self.true_class == self.pred_class
    }
}

/// Accumulates per-style and per-class counts from prediction rows.
pub fn counts_from_rows(rows: &[PredRow], num_styles: usize, num_classes: usize) -> (Counts, Counts) {
    let mut style = vec![(0usize, 0usize); num_styles];
    let mut class = vec![(0usize, 0usize); num_classes];
    for row in rows {
        style[row.true_style].1 += 1;
        class[row.true_class].1 += 1;
        if row.correct() {
            style[row.true_style].0 += 1;
            class[row.true_class].0 += 1;
        }
    }
    (style, class)
}

#[derive(Debug, Clone)]
pub struct Metrics {
    pub arch_label: String,
    pub spec_string: String,
    pub seed: u64,
    pub overall_acc: f64,
    /// (correct, total) per style id.
    pub style_counts: Counts,
    /// (correct, total) per class id.
    pub class_counts: Counts,
    pub loss_curve: Vec<f64>,
    pub lr_curve: Vec<f64>,
    pub val_acc_curve: Vec<f64>,
    pub best_val_acc: f64,
    pub best_epoch: usize,
}

impl Metrics {
    pub fn style_acc(&self, style_id: usize) -> f64 {
        let (c, t) = self.style_counts[style_id];
        group_accuracy(c, t)
    }
}

fn join_curve(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders the key=value metrics file. The timestamp is the only
/// non-deterministic field; comparison mode strips it.
pub fn render_metrics(
    m: &Metrics,
    style_names: &[&str],
    class_names: &[String],
    timestamp: &str,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("timestamp={}\n", timestamp));
    out.push_str(&format!("arch={}\n", m.arch_label));
    out.push_str(&format!("spec={}\n", m.spec_string));
    out.push_str(&format!("seed={}\n", m.seed));
    out.push_str(&format!("epochs={}\n", m.loss_curve.len()));
    out.push_str(&format!("overall_acc={}\n", m.overall_acc));
    for (i, (c, t)) in m.style_counts.iter().enumerate() {
        let name = style_names.get(i).copied().unwrap_or("style");
        out.push_str(&format!("acc_style_{}={}\n", name, group_accuracy(*c, *t)));
        out.push_str(&format!("count_style_{}={}\n", name, t));
    }
    for (i, (c, t)) in m.class_counts.iter().enumerate() {
        let fallback = format!("class{}", i);
        let name = class_names.get(i).map(|s| s.as_str()).unwrap_or(&fallback);
        out.push_str(&format!("acc_class_{}={}\n", name, group_accuracy(*c, *t)));
    }
    out.push_str(&format!("best_val_acc={}\n", m.best_val_acc));
    out.push_str(&format!("best_epoch={}\n", m.best_epoch));
    out.push_str(&format!("loss_curve={}\n", join_curve(&m.loss_curve)));
    out.push_str(&format!("lr_curve={}\n", join_curve(&m.lr_curve)));
    out.push_str(&format!("val_acc_curve={}\n", join_curve(&m.val_acc_curve)));
    out
}

/// Metrics file content with the timestamp line removed, for determinism
/// comparisons.
pub fn strip_timestamp(text: &str) -> String {
    text.lines()
        .filter(|line| !line.starts_with("timestamp="))
        .collect::<Vec<_>>()
        .join("\n")
}

pub const PREDICTIONS_HEADER: &str = "index,true_class,true_style,pred_class";

pub fn render_predictions_csv(rows: &[PredRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 16 + 40);
    out.push_str(PREDICTIONS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.index, r.true_class, r.true_style, r.pred_class
        ));
    }
    out
}

pub fn parse_predictions_csv(text: &str) -> Result<Vec<PredRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == PREDICTIONS_HEADER => {}
        _ => return Err(Error::Data("prediction log missing header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Data(format!("prediction log line {} malformed", i + 2)));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Data(format!("prediction log line {} malformed", i + 2)))
        };
        rows.push(PredRow {
            index: parse(fields[0])?,
            true_class: parse(fields[1])?,
            true_style: parse(fields[2])?,
            pred_class: parse(fields[3])?,
        });
    }
    Ok(rows)
}

/// Overall accuracy recomputed from a prediction log with the canonical
/// rule; bit-equal to the reported value by construction.
pub fn overall_from_rows(rows: &[PredRow], num_styles: usize, num_classes: usize) -> f64 {
    let (style, _) = counts_from_rows(rows, num_styles, num_classes);
    overall_from_style_counts(&style)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn balanced_overall_is_exactly_the_mean_of_style_accuracies() {
        let counts = vec![(7, 9), (5, 9)];
        let overall = overall_from_style_counts(&counts);
        let art_photo_mean = (group_accuracy(7, 9) + group_accuracy(5, 9)) / 2.0;
        assert_eq!(overall.to_bits(), art_photo_mean.to_bits());
    }

    #[test]
    fn unbalanced_overall_is_sample_weighted() {
        let counts = vec![(9, 10), (3, 30)];
        assert_eq!(overall_from_style_counts(&counts), 12.0 / 40.0);
    }

    #[test]
    fn empty_styles_are_ignored_in_the_balance_check() {
        let counts = vec![(4, 8), (0, 0)];
        assert_eq!(overall_from_style_counts(&counts), 0.5);
    }

    #[test]
    fn perfect_rows_hit_one_everywhere() {
        let rows: Vec<PredRow> = (0..20)
            .map(|i| PredRow {
                index: i,
                true_class: i % 5,
                true_style: i % 2,
                pred_class: i % 5,
            })
            .collect();
        let (style, class) = counts_from_rows(&rows, 2, 5);
        assert_eq!(overall_from_style_counts(&style), 1.0);
        assert!(class.iter().all(|(c, t)| c == t && *t > 0));
    }

    #[test]
    fn uniform_random_ten_class_predictor_sits_near_ten_percent() {
        let mut rng = Rng::new(2024);
        let rows: Vec<PredRow> = (0..2000)
            .map(|i| PredRow {
                index: i,
                true_class: i % 10,
                true_style: i % 2,
                pred_class: rng.range(10),
            })
            .collect();
        let overall = overall_from_rows(&rows, 2, 10);
        assert!(
            (overall - 0.1).abs() < 0.03,
            "random predictor accuracy {} outside 10% +/- 3%",
            overall
        );
    }

    #[test]
    fn csv_roundtrip_preserves_rows_and_recomputes_identically() {
        let rows = vec![
            PredRow { index: 3, true_class: 1, true_style: 0, pred_class: 1 },
            PredRow { index: 9, true_class: 0, true_style: 1, pred_class: 2 },
            PredRow { index: 12, true_class: 2, true_style: 1, pred_class: 2 },
            PredRow { index: 20, true_class: 1, true_style: 0, pred_class: 0 },
        ];
        let text = render_predictions_csv(&rows);
        let back = parse_predictions_csv(&text).unwrap();
        assert_eq!(back, rows);
        let (style, _) = counts_from_rows(&rows, 2, 3);
        let reported = overall_from_style_counts(&style);
        let recomputed = overall_from_rows(&back, 2, 3);
        assert_eq!(reported.to_bits(), recomputed.to_bits());
    }

    #[test]
    fn metrics_render_includes_curves_and_strips_only_timestamp() {
        let m = Metrics {
            arch_label: "baseline".into(),
            spec_string: "arch=baseline".into(),
            seed: 7,
            overall_acc: 0.875,
            style_counts: vec![(7, 8), (7, 8)],
            class_counts: vec![(14, 16)],
            loss_curve: vec![1.5, 0.9],
            lr_curve: vec![0.01, 0.01],
            val_acc_curve: vec![0.5, 0.75],
            best_val_acc: 0.75,
            best_epoch: 1,
        };
        let a = render_metrics(&m, &["photo", "art"], &["circle".into()], "2026-01-01T00:00:00Z");
        let b = render_metrics(&m, &["photo", "art"], &["circle".into()], "2026-02-02T00:00:00Z");
        assert_ne!(a, b);
        assert_eq!(strip_timestamp(&a), strip_timestamp(&b));
        assert!(a.contains("overall_acc=0.875"));
        assert!(a.contains("acc_style_art=0.875"));
        assert!(a.contains("acc_class_circle=0.875"));
        assert!(a.contains("loss_curve=1.5,0.9"));
        assert!(a.contains("lr_curve=0.01,0.01"));
    }

    #[test]
    fn malformed_prediction_logs_are_data_errors(){
        assert!(parse_predictions_csv("nope\n1,2,3,4\n").is_err());
        assert!(parse_predictions_csv(&format!("{}\n1,2,3\n", PREDICTIONS_HEADER)).is_err());
        assert!(parse_predictions_csv(&format!("{}\na,b,c,d\n", PREDICTIONS_HEADER)).is_err());
    }
}
