//! Detection and classification metrics.
//!
//! 3D detection uses nuScenes-style center-distance matching: predictions
//! are visited in descending score order and matched greedily to the nearest
//! unmatched ground truth of the same class within a planar distance
//! threshold. Average precision samples the precision envelope on a
//! 101-point recall grid, discards the low-recall and low-precision regions
//! and renormalizes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::info::{BoxAnnotation, Category, InfoFile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("prediction sample `{0}` has no ground-truth counterpart")]
    TokenMismatch(String),
    #[error("degenerate box {0:?}: zero or negative area")]
    DegenerateBox([f64; 4]),
    #[error("{truth} labels vs {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no labels to evaluate")]
    EmptyInput,
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

/// Parameters of the interpolated AP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApParams {
    pub min_recall: f64,
    pub min_precision: f64,
    pub recall_samples: usize,
}

impl ApParams {
    /// Plain 101-point AP without low-recall / low-precision clipping.
    pub const PLAIN: ApParams = ApParams {
        min_recall: 0.0,
        min_precision: 0.0,
        recall_samples: 101,
    };

    pub const NUSCENES: ApParams = ApParams {
        min_recall: 0.1,
        min_precision: 0.1,
        recall_samples: 101,
    };

    fn validate(&self) -> Result<(), EvalError> {
        if !(0.0..1.0).contains(&self.min_recall) || !(0.0..1.0).contains(&self.min_precision) {
            return Err(EvalError::InvalidConfig(
                "min_recall and min_precision must lie in [0, 1)".into(),
            ));
        }
        if self.recall_samples < 2 {
            return Err(EvalError::InvalidConfig("recall_samples must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig3D {
    /// Center-distance thresholds in meters, strictly increasing.
    pub distance_thresholds: Vec<f64>,
    /// Boxes farther than this from the origin (planar) are ignored.
    pub max_range: f64,
    pub classes: Vec<Category>,
    pub ap: ApParams,
    /// Drop classes without ground truth from the mean instead of scoring them 0.
    #[serde(default)]
    pub skip_empty_classes: bool,
}

impl Default for EvalConfig3D {
    fn default() -> Self {
        EvalConfig3D {
            distance_thresholds: vec![0.5, 1.0, 1.5, 2.0],
            max_range: 120.0,
            classes: Category::ALL.to_vec(),
            ap: ApParams::NUSCENES,
            skip_empty_classes: false,
        }
    }
}

impl EvalConfig3D {
    pub fn validate(&self) -> Result<(), EvalError> {
        self.ap.validate()?;
        let t = &self.distance_thresholds;
        if t.is_empty() || t[0] <= 0.0 || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::InvalidConfig(
                "distance thresholds must be positive and strictly increasing".into(),
            ));
        }
        if self.classes.is_empty() {
            return Err(EvalError::InvalidConfig("no classes to evaluate".into()));
        }
        if self.max_range.is_nan() || self.max_range <= 0.0 {
            return Err(EvalError::InvalidConfig("max_range must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub score: f64,
    pub is_tp: bool,
}

fn planar_distance(a: &BoxAnnotation, b: &BoxAnnotation) -> f64 {
    (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1])
}

/// Unscored predictions are treated as certain.
fn score_of(b: &BoxAnnotation) -> f64 {
    b.score.unwrap_or(1.0)
}

/// Greedy matching over several frames; predictions are ranked globally.
fn match_frames(frames: &[(Vec<&BoxAnnotation>, Vec<&BoxAnnotation>)], max_dist: f64) -> Vec<Match> {
    let mut order: Vec<(usize, usize)> = frames
        .iter()
        .enumerate()
        .flat_map(|(f, (_, preds))| (0..preds.len()).map(move |p| (f, p)))
        .collect();
    // Stable sort keeps input order among equal scores.
    order.sort_by(|&(fa, pa), &(fb, pb)| {
        score_of(frames[fb].1[pb]).total_cmp(&score_of(frames[fa].1[pa]))
    });
    let mut taken: Vec<Vec<bool>> = frames.iter().map(|(gt, _)| vec![false; gt.len()]).collect();
    order
        .into_iter()
        .map(|(f, p)| {
            let pred = frames[f].1[p];
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in frames[f].0.iter().enumerate() {
                if taken[f][g] {
                    continue;
                }
                let d = planar_distance(gt, pred);
                if d <= max_dist && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((g, d));
                }
            }
            if let Some((g, _)) = best {
                taken[f][g] = true;
            }
            Match {
                score: score_of(pred),
                is_tp: best.is_some(),
            }
        })
        .collect()
}

/// Match one frame's predictions of `class` against its ground truth.
pub fn match_class_threshold(
    gt: &[BoxAnnotation],
    preds: &[BoxAnnotation],
    class: Category,
    max_dist: f64,
) -> Vec<Match> {
    let frame = (
        gt.iter().filter(|b| b.category == class).collect(),
        preds.iter().filter(|b| b.category == class).collect(),
    );
    match_frames(&[frame], max_dist)
}

/// Interpolated average precision of ranked matches against `n_gt` targets.
///
/// `matches` must already be in descending score order.
pub fn ap_from_matches(matches: &[Match], n_gt: usize, params: &ApParams) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    // Envelope: best precision at or beyond each achieved true-positive count.
    let mut tp = 0usize;
    let mut points: Vec<(usize, f64)> = Vec::with_capacity(matches.len());
    for (i, m) in matches.iter().enumerate() {
        if m.is_tp {
            tp += 1;
        }
        points.push((tp, tp as f64 / (i + 1) as f64));
    }
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }

    let steps = params.recall_samples - 1;
    let mut sum = 0.0;
    let mut kept = 0usize;
    let mut cursor = 0usize;
    for k in 0..=steps {
        if (k as f64 / steps as f64) < params.min_recall {
            continue;
        }
        // recall >= k/steps  <=>  tp * steps >= k * n_gt
        while cursor < points.len() && points[cursor].0 * steps < k * n_gt {
            cursor += 1;
        }
        let precision = points.get(cursor).map_or(0.0, |p| p.1);
        sum += (precision - params.min_precision).max(0.0) / (1.0 - params.min_precision);
        kept += 1;
    }
    if kept == 0 {
        return 0.0;
    }
    sum / kept as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: Category,
    /// One AP per distance threshold, in threshold order.
    pub ap_by_threshold: Vec<f64>,
    pub ap: f64,
    pub n_gt: usize,
    pub n_pred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub distance_thresholds: Vec<f64>,
    pub max_range: f64,
    pub classes: Vec<ClassReport>,
    pub map: f64,
}

impl EvalReport {
    /// Aligned text table: `mAP | Car | Tru. | Bus | Bic. | Ped.`.
    pub fn render_table(&self) -> String {
        let mut header = vec!["".to_string(), "mAP".to_string()];
        header.extend(self.classes.iter().map(|c| c.class.short_label().to_string()));
        let mut rows = vec![header];
        let mut all = vec!["AP".to_string(), format!("{:.4}", self.map)];
        all.extend(self.classes.iter().map(|c| format!("{:.4}", c.ap)));
        rows.push(all);
        for (i, t) in self.distance_thresholds.iter().enumerate() {
            let mean = mean(self.classes.iter().map(|c| c.ap_by_threshold[i]));
            let mut row = vec![format!("AP@{t}m"), format!("{mean:.4}")];
            row.extend(self.classes.iter().map(|c| format!("{:.4}", c.ap_by_threshold[i])));
            rows.push(row);
        }
        let mut out = format!("mAP {:.4}\n", self.map);
        out.push_str(&align(&rows));
        let _ = writeln!(out, "Evaluation range is {}m", self.max_range);
        out
    }
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{cell:<w$}", w = widths[i]))
            .collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
    }
    out
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Arithmetic mean of per-threshold APs.
pub fn mean_ap(aps: &[f64]) -> f64 {
    mean(aps.iter().copied())
}

/// Center-distance mAP of `preds` against `gt`.
pub fn evaluate_3d(gt: &InfoFile, preds: &InfoFile, cfg: &EvalConfig3D) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let gt_index: HashMap<&str, usize> = gt
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.token.as_str(), i))
        .collect();
    let mut pred_boxes: Vec<Vec<&BoxAnnotation>> = vec![Vec::new(); gt.samples.len()];
    for s in &preds.samples {
        let &i = gt_index
            .get(s.token.as_str())
            .ok_or_else(|| EvalError::TokenMismatch(s.token.clone()))?;
        pred_boxes[i].extend(s.boxes.iter());
    }
    let in_range = |b: &&BoxAnnotation| b.planar_range() <= cfg.max_range;

    let mut classes = Vec::with_capacity(cfg.classes.len());
    for &class in &cfg.classes {
        let frames: Vec<(Vec<&BoxAnnotation>, Vec<&BoxAnnotation>)> = gt
            .samples
            .iter()
            .zip(&pred_boxes)
            .map(|(s, p)| {
                (
                    s.boxes.iter().filter(|b| b.category == class).filter(in_range).collect(),
                    p.iter().copied().filter(|b| b.category == class).filter(in_range).collect(),
                )
            })
            .collect();
        let n_gt = frames.iter().map(|f| f.0.len()).sum();
        let n_pred = frames.iter().map(|f| f.1.len()).sum();
        let ap_by_threshold: Vec<f64> = cfg
            .distance_thresholds
            .iter()
            .map(|&d| ap_from_matches(&match_frames(&frames, d), n_gt, &cfg.ap))
            .collect();
        classes.push(ClassReport {
            class,
            ap: mean_ap(&ap_by_threshold),
            ap_by_threshold,
            n_gt,
            n_pred,
        });
    }
    let map = mean(
        classes
            .iter()
            .filter(|c| !cfg.skip_empty_classes || c.n_gt > 0)
            .map(|c| c.ap),
    );
    Ok(EvalReport {
        distance_thresholds: cfg.distance_thresholds.clone(),
        max_range: cfg.max_range,
        classes,
        map,
    })
}

/// Axis-aligned pixel rectangle with optional label and score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box2d {
    /// `[x1, y1, x2, y2]`.
    pub bbox: [f64; 4],
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Box2d {
    fn area(&self) -> Result<f64, EvalError> {
        let [x1, y1, x2, y2] = self.bbox;
        let area = (x2 - x1) * (y2 - y1);
        if x2 <= x1 || y2 <= y1 || !area.is_finite() {
            return Err(EvalError::DegenerateBox(self.bbox));
        }
        Ok(area)
    }
}

pub fn iou(a: &Box2d, b: &Box2d) -> Result<f64, EvalError> {
    let (aa, ba) = (a.area()?, b.area()?);
    let w = a.bbox[2].min(b.bbox[2]) - a.bbox[0].max(b.bbox[0]);
    let h = a.bbox[3].min(b.bbox[3]) - a.bbox[1].max(b.bbox[1]);
    let inter = w.max(0.0) * h.max(0.0);
    Ok(inter / (aa + ba - inter))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image2d {
    pub id: String,
    #[serde(default)]
    pub boxes: Vec<Box2d>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Detections2d {
    pub images: Vec<Image2d>,
}

pub const DEFAULT_IOU_THRESHOLDS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report2d {
    pub iou_thresholds: Vec<f64>,
    pub ap: Vec<f64>,
    pub map: f64,
}

impl Report2d {
    pub fn render_table(&self) -> String {
        let mut rows = vec![vec!["Metric".to_string(), "Value".to_string()]];
        rows.push(vec!["mAP".into(), format!("{:.4}", self.map)]);
        for (t, ap) in self.iou_thresholds.iter().zip(&self.ap) {
            rows.push(vec![format!("AP{}", (t * 100.0).round()), format!("{ap:.4}")]);
        }
        align(&rows)
    }
}

/// IoU-matched AP per threshold (plain 101-point AP) and their mean.
pub fn evaluate_2d_iou(
    gt: &Detections2d,
    preds: &Detections2d,
    iou_thresholds: &[f64],
) -> Result<Report2d, EvalError> {
    if iou_thresholds.is_empty() || iou_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(EvalError::InvalidConfig("IoU thresholds must lie in [0, 1]".into()));
    }
    let index: HashMap<&str, usize> = gt
        .images
        .iter()
        .enumerate()
        .map(|(i, im)| (im.id.as_str(), i))
        .collect();
    let mut frames: Vec<(Vec<&Box2d>, Vec<&Box2d>)> =
        gt.images.iter().map(|im| (im.boxes.iter().collect(), Vec::new())).collect();
    for im in &preds.images {
        let &i = index
            .get(im.id.as_str())
            .ok_or_else(|| EvalError::TokenMismatch(im.id.clone()))?;
        frames[i].1.extend(im.boxes.iter());
    }
    for b in frames.iter().flat_map(|(g, p)| g.iter().chain(p)) {
        b.area()?;
    }
    let n_gt: usize = frames.iter().map(|f| f.0.len()).sum();
    let mut order: Vec<(usize, usize)> = frames
        .iter()
        .enumerate()
        .flat_map(|(f, (_, p))| (0..p.len()).map(move |j| (f, j)))
        .collect();
    let score = |f: usize, j: usize| frames[f].1[j].score.unwrap_or(1.0);
    order.sort_by(|&(fa, ja), &(fb, jb)| score(fb, jb).total_cmp(&score(fa, ja)));

    let mut ap = Vec::with_capacity(iou_thresholds.len());
    for &t in iou_thresholds {
        let mut taken: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.0.len()]).collect();
        let mut matches = Vec::with_capacity(order.len());
        for &(f, j) in &order {
            let pred = frames[f].1[j];
            let mut best: Option<(usize, f64)> = None;
            for (g, gtb) in frames[f].0.iter().enumerate() {
                if taken[f][g] || gtb.label != pred.label {
                    continue;
                }
                let v = iou(gtb, pred)?;
                if v >= t && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[f][g] = true;
            }
            matches.push(Match {
                score: score(f, j),
                is_tp: best.is_some(),
            });
        }
        ap.push(ap_from_matches(&matches, n_gt, &ApParams::PLAIN));
    }
    Ok(Report2d {
        iou_thresholds: iou_thresholds.to_vec(),
        map: mean_ap(&ap),
        ap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
}

/// Top-1 macro-averaged metrics, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl ClassificationReport {
    pub fn render_table(&self) -> String {
        align(&[
            vec!["Metric".into(), "Value".into()],
            vec!["Precision (Top-1)".into(), format!("{:.2}", self.precision)],
            vec!["Recall (Top-1)".into(), format!("{:.2}", self.recall)],
            vec!["F1-score (Top-1)".into(), format!("{:.2}", self.f1)],
        ])
    }
}

/// Macro precision and recall over every label seen in either list; F1 is
/// the harmonic mean of the two macro values. A class with no predictions
/// (or no truth) scores 0 precision (or recall).
pub fn classification_metrics<S: AsRef<str>>(
    truth: &[S],
    predicted: &[S],
) -> Result<ClassificationReport, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let labels: BTreeSet<&str> = truth
        .iter()
        .chain(predicted)
        .map(AsRef::as_ref)
        .collect();
    // (tp, fp, fn)
    let mut counts: BTreeMap<&str, (usize, usize, usize)> =
        labels.iter().map(|&l| (l, (0, 0, 0))).collect();
    for (t, p) in truth.iter().zip(predicted) {
        let (t, p) = (t.as_ref(), p.as_ref());
        if t == p {
            counts.get_mut(t).unwrap().0 += 1;
        } else {
            counts.get_mut(p).unwrap().1 += 1;
            counts.get_mut(t).unwrap().2 += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = counts
        .iter()
        .map(|(&label, &(tp, fp, fn_))| ClassMetrics {
            label: label.to_string(),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            support: tp + fn_,
        })
        .collect();
    let precision = mean(per_class.iter().map(|c| c.precision));
    let recall = mean(per_class.iter().map(|c| c.recall));
    let f1 = match precision + recall {
        s if s > 0.0 => 2.0 * precision * recall / s,
        _ => 0.0,
    };
    Ok(ClassificationReport {
        precision: precision * 100.0,
        recall: recall * 100.0,
        f1: f1 * 100.0,
        per_class,
    })
}
