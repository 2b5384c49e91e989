//! ROC curves and rank-based AUC.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::ScoreReport;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocResult {
    /// Descending; the first entry is `+∞`, where no node is flagged.
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    /// Trapezoidal area under the stored curve.
    pub auc: f64,
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Usage(format!("label {bad} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {pos} positive and {neg} negative labels"
        )));
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score, grouped by equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Mann–Whitney AUC: the share of positive/negative pairs ranked correctly,
/// with tied pairs counted as one half.
pub fn compute_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = validate(scores, labels)?;
    // twice the U statistic keeps the tie credit integral
    let mut twice_u: u64 = 0;
    let mut neg_below = neg;
    for group in tie_groups(scores) {
        let gp = group.iter().filter(|&&i| labels[i] == 1).count() as u64;
        let gn = group.len() as u64 - gp;
        neg_below -= gn;
        twice_u += 2 * gp * neg_below + gp * gn;
    }
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// One curve point per distinct score plus the `+∞` start at `(0, 0)`.
pub fn compute_roc(scores: &[f64], labels: &[u8]) -> Result<RocResult> {
    let (pos, neg) = validate(scores, labels)?;
    let mut thresholds = vec![f64::INFINITY];
    let (mut tpr, mut fpr) = (vec![0.0], vec![0.0]);
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u64 = 0;
    for group in tie_groups(scores) {
        let gp = group.iter().filter(|&&i| labels[i] == 1).count() as u64;
        let gn = group.len() as u64 - gp;
        // trapezoid in count units: gn · (2·tp + gp)
        twice_area += gn * (2 * tp + gp);
        tp += gp;
        fp += gn;
        thresholds.push(scores[group[0]]);
        tpr.push(tp as f64 / pos as f64);
        fpr.push(fp as f64 / neg as f64);
    }
    Ok(RocResult {
        thresholds,
        tpr,
        fpr,
        auc: twice_area as f64 / (2 * pos * neg) as f64,
    })
}

/// Trapezoidal integral of a stored curve.
pub fn trapezoid(fpr: &[f64], tpr: &[f64]) -> f64 {
    fpr.windows(2)
        .zip(tpr.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    auc: f64,
    config_hash: &'a str,
    seed: u64,
    rounds: usize,
    low_round: bool,
    variant: String,
    num_nodes: usize,
    num_anomalies: usize,
    config: &'a serde_json::Value,
}

pub const ROC_CSV: &str = "roc.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const ROC_SVG: &str = "roc.svg";

/// Writes `roc.csv`, `summary.json` and `roc.svg` into `out_dir`.
pub fn emit_report(roc: &RocResult, report: &ScoreReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, body: String| {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };

    let mut csv = String::from("fpr,tpr,threshold\n");
    for i in 0..roc.thresholds.len() {
        writeln!(csv, "{},{},{}", roc.fpr[i], roc.tpr[i], roc.thresholds[i]).expect("string write");
    }
    write(ROC_CSV, csv)?;

    let summary = Summary {
        auc: roc.auc,
        config_hash: &report.meta.config_hash,
        seed: report.meta.seed,
        rounds: report.meta.rounds,
        low_round: report.meta.low_round,
        variant: report.meta.variant.to_string(),
        num_nodes: report.num_nodes(),
        num_anomalies: report.labels.as_ref().map_or(0, |l| l.iter().filter(|&&v| v == 1).count()),
        config: &report.meta.config,
    };
    write(SUMMARY_JSON, serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")?;
    write(ROC_SVG, roc_svg(roc))
}

/// Self-contained SVG of the curve with labeled axes and the chance diagonal.
pub fn roc_svg(roc: &RocResult) -> String {
    const SIZE: f64 = 400.0;
    const MARGIN: f64 = 60.0;
    let x = |v: f64| MARGIN + v * SIZE;
    let y = |v: f64| MARGIN + (1.0 - v) * SIZE;
    let total = SIZE + 2.0 * MARGIN;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}" font-family="sans-serif" font-size="12">"#
    )
    .expect("string write");
    writeln!(s, r#"<rect width="{total}" height="{total}" fill="white"/>"#).expect("string write");
    writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    )
    .expect("string write");
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{t:.1}</text><text x="{}" y="{}" text-anchor="end">{t:.1}</text>"#,
            x(t),
            MARGIN + SIZE + 18.0,
            MARGIN - 6.0,
            y(t) + 4.0
        )
        .expect("string write");
    }
    writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 4"/>"#,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    )
    .expect("string write");
    let points: Vec<String> = roc
        .fpr
        .iter()
        .zip(&roc.tpr)
        .map(|(&f, &t)| format!("{:.3},{:.3}", x(f), y(t)))
        .collect();
    writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        points.join(" ")
    )
    .expect("string write");
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">False positive rate</text>"#,
        MARGIN + SIZE / 2.0,
        total - 15.0
    )
    .expect("string write");
    writeln!(
        s,
        r#"<text transform="translate(18 {}) rotate(-90)" text-anchor="middle">True positive rate</text>"#,
        MARGIN + SIZE / 2.0
    )
    .expect("string write");
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">ROC (AUC = {:.4})</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN - 24.0,
        roc.auc
    )
    .expect("string write");
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(scores: &[f64], labels: &[u8]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        credit += 1.0;
                    } else if scores[i] == scores[j] {
                        credit += 0.5;
                    }
                }
            }
        }
        credit / pairs
    }

    #[test]
    fn perfect_separation() {
        let scores = [0.9, 0.8, 0.1, 0.2];
        let labels = [1, 1, 0, 0];
        assert_eq!(compute_auc(&scores, &labels).unwrap(), 1.0);
        let roc = compute_roc(&scores, &labels).unwrap();
        assert!(roc.fpr.iter().zip(&roc.tpr).any(|(&f, &t)| f == 0.0 && t == 1.0));
    }

    #[test]
    fn pure_ties_give_one_half() {
        assert_eq!(compute_auc(&[0.3; 6], &[1, 0, 0, 1, 0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(compute_auc(&[0.1, 0.2], &[0, 0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(compute_roc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(compute_auc(&[0.1], &[0, 1]).is_err());
        assert!(compute_auc(&[0.1, 0.2], &[0, 2]).is_err());
        assert!(compute_auc(&[f64::NAN, 0.2], &[0, 1]).is_err());
    }

    #[test]
    fn duplicates_collapse_to_one_step() {
        let roc = compute_roc(&[0.5, 0.5, 0.5, 0.1], &[1, 0, 1, 0]).unwrap();
        assert_eq!(roc.thresholds, vec![f64::INFINITY, 0.5, 0.1]);
        assert_eq!(roc.tpr, vec![0.0, 1.0, 1.0]);
        assert_eq!(roc.fpr, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn thirty_point_instance_matches_pairwise_count() {
        let scores: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let labels: Vec<u8> = (0..30).map(|i| u8::from(i % 4 == 0)).collect();
        assert_eq!(compute_auc(&scores, &labels).unwrap(), brute_force(&scores, &labels));
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..50).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..12).prop_map(|v| v as f64 / 4.0), n),
                prop::collection::vec(0u8..2, n).prop_filter("two classes", |l| l.contains(&0) && l.contains(&1)),
            )
        })
    }

    proptest! {
        #[test]
        fn rank_auc_equals_pairwise((scores, labels) in instance()) {
            prop_assert_eq!(compute_auc(&scores, &labels).unwrap(), brute_force(&scores, &labels));
        }

        #[test]
        fn curve_is_monotone_and_consistent((scores, labels) in instance()) {
            let roc = compute_roc(&scores, &labels).unwrap();
            prop_assert_eq!((roc.fpr[0], roc.tpr[0]), (0.0, 0.0));
            prop_assert_eq!((*roc.fpr.last().unwrap(), *roc.tpr.last().unwrap()), (1.0, 1.0));
            prop_assert!(roc.fpr.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(roc.tpr.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(roc.thresholds.windows(2).all(|w| w[0] > w[1]));
            prop_assert!((roc.auc - trapezoid(&roc.fpr, &roc.tpr)).abs() < 1e-12);
            prop_assert!((roc.auc - compute_auc(&scores, &labels).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn negation_reflects_auc((scores, labels) in instance()) {
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let sum = compute_auc(&scores, &labels).unwrap() + compute_auc(&neg, &labels).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn monotone_transforms_preserve_auc((scores, labels) in instance()) {
            let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 2.0).collect();
            prop_assert_eq!(compute_auc(&scores, &labels).unwrap(), compute_auc(&mapped, &labels).unwrap());
        }
    }
}
