//! ROC curves and AUROC with tied scores counted half.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score, grouped into runs of equal score.
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

/// `(#{pos > neg} + 0.5 * #{pos == neg}) / (n_pos * n_neg)`. `labels[i]` is
/// true for the positive (expert) class.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (n_pos, n_neg) = class_counts(labels)?;
    // sweep from the lowest score: every positive beats the negatives seen so
    // far and ties with negatives in its own group
    let mut negatives_below = 0usize;
    let mut twice_wins: u128 = 0;
    for group in tie_groups(scores).iter().rev() {
        let pos = group.iter().filter(|&&i| labels[i]).count();
        let neg = group.len() - pos;
        twice_wins += (pos as u128) * (2 * negatives_below + neg) as u128;
        negatives_below += neg;
    }
    Ok(twice_wins as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Threshold sweep over unique scores, from `(0, 0)` to `(1, 1)`; tied scores
/// move both rates in one step, so the trapezoidal area equals [`auroc`].
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (n_pos, n_neg) = class_counts(labels)?;
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for group in tie_groups(scores) {
        tp += group.iter().filter(|&&i| labels[i]).count();
        fp += group.iter().filter(|&&i| !labels[i]).count();
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    Ok(RocCurve {
        auroc: auroc(scores, labels)?,
        points,
    })
}

impl RocCurve {
    /// Trapezoidal area under the point list.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }

    /// TPR at a given FPR by linear interpolation; on vertical segments the
    /// highest TPR is taken.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let mut best: f64 = 0.0;
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if fpr < a.fpr || fpr > b.fpr {
                continue;
            }
            let t = if b.fpr > a.fpr {
                a.tpr + (fpr - a.fpr) / (b.fpr - a.fpr) * (b.tpr - a.tpr)
            } else {
                b.tpr.max(a.tpr)
            };
            best = best.max(t);
        }
        best
    }
}

/// Vertical average of several curves on an FPR grid with `step` spacing.
pub fn mean_roc_curve(curves: &[RocCurve], step: f64) -> Vec<RocPoint> {
    let n = (1.0 / step).round() as usize;
    (0..=n)
        .map(|i| {
            let fpr = i as f64 / n as f64;
            let tpr = if curves.is_empty() {
                0.0
            } else {
                curves.iter().map(|c| c.tpr_at(fpr)).sum::<f64>() / curves.len() as f64
            };
            RocPoint {
                fpr,
                tpr: if i == 0 { 0.0 } else { tpr },
            }
        })
        .collect()
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["fpr", "tpr"])?;
    for p in points {
        writer.write_record(&[p.fpr.to_string(), p.tpr.to_string()])?;
    }
    writer.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
