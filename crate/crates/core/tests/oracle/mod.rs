//! Reference AP computed straight from the definitions, kept free of any
//! code shared with the evaluator.

#![allow(dead_code)]

use mlforge_core::info::{BoxAnnotation, Category, InfoFile, SampleInfo, SplitSelector};
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct Point {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Scored {
    pub at: Point,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub frames: usize,
    pub gt: Vec<Point>,
    pub preds: Vec<Scored>,
}

/// Flags each prediction, in ranked order, as a true positive or not.
pub fn greedy_flags(gt: &[Point], preds: &[Scored], max_dist: f64) -> Vec<bool> {
    let mut ranked: Vec<&Scored> = preds.iter().collect();
    ranked.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    let mut used = vec![false; gt.len()];
    let mut flags = Vec::new();
    for p in ranked {
        let mut choice: Option<(usize, f64)> = None;
        for (i, g) in gt.iter().enumerate() {
            if used[i] || g.frame != p.at.frame {
                continue;
            }
            let d = ((g.x - p.at.x).powi(2) + (g.y - p.at.y).powi(2)).sqrt();
            if d > max_dist {
                continue;
            }
            match choice {
                Some((_, best)) if best <= d => {}
                _ => choice = Some((i, d)),
            }
        }
        if let Some((i, _)) = choice {
            used[i] = true;
        }
        flags.push(choice.is_some());
    }
    flags
}

/// Mean over the 101-point recall grid of the best precision reached by any
/// ranked prefix with at least that recall.
pub fn ap_definition(flags: &[bool], n_gt: usize, min_recall: f64, min_precision: f64) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut prefixes = Vec::new();
    let mut tp = 0;
    for (i, &f) in flags.iter().enumerate() {
        tp += f as usize;
        prefixes.push((tp, tp as f64 / (i + 1) as f64));
    }
    let mut values = Vec::new();
    for k in 0..=100usize {
        if (k as f64) / 100.0 < min_recall {
            continue;
        }
        let best = prefixes
            .iter()
            .filter(|(tp, _)| tp * 100 >= k * n_gt)
            .map(|&(_, p)| p)
            .fold(0.0, f64::max);
        values.push((best - min_precision).max(0.0) / (1.0 - min_precision));
    }
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn ap(inst: &Instance, max_dist: f64, min_recall: f64, min_precision: f64) -> f64 {
    let flags = greedy_flags(&inst.gt, &inst.preds, max_dist);
    ap_definition(&flags, inst.gt.len(), min_recall, min_precision)
}

/// Up to 5 ground-truth and 8 predicted centers packed into a few meters so
/// that thresholds matter. Scores are coarse to produce ties.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let frames = rng.gen_range(1..=3);
    let point = |rng: &mut dyn rand::RngCore| Point {
        frame: rng.gen_range(0..frames),
        x: rng.gen_range(-4.0..4.0),
        y: rng.gen_range(-4.0..4.0),
    };
    let n_gt = rng.gen_range(0..=5);
    let n_pred = rng.gen_range(0..=8);
    let gt: Vec<Point> = (0..n_gt).map(|_| point(rng)).collect();
    let preds = (0..n_pred)
        .map(|_| {
            let at = if !gt.is_empty() && rng.gen_bool(0.6) {
                let g = gt[rng.gen_range(0..gt.len())];
                Point {
                    frame: g.frame,
                    x: g.x + rng.gen_range(-2.0..2.0),
                    y: g.y + rng.gen_range(-2.0..2.0),
                }
            } else {
                point(rng)
            };
            Scored {
                at,
                score: rng.gen_range(0..=20) as f64 / 20.0,
            }
        })
        .collect::<Vec<Scored>>();
    let mut preds = preds;
    // The evaluator breaks score ties in frame order.
    preds.sort_by_key(|p| p.at.frame);
    Instance { frames, gt, preds }
}

fn boxed(class: Category, p: Point, score: Option<f64>) -> BoxAnnotation {
    BoxAnnotation {
        category: class,
        center: [p.x, p.y, 0.0],
        size: [1.8, 4.5, 1.6],
        yaw: 0.0,
        score,
        num_lidar_pts: None,
    }
}

/// Ground-truth and prediction info files holding `inst` as one class.
pub fn to_info_files(inst: &Instance, class: Category) -> (InfoFile, InfoFile) {
    let frame = |f: usize, boxes: Vec<BoxAnnotation>| SampleInfo {
        token: format!("frame-{f}"),
        timestamp: f as i64,
        lidar_path: format!("data/LIDAR_TOP/{f}.pcd.bin"),
        dataset_id: None,
        boxes,
    };
    let group = "DB JPNTAXI v1.0".parse().unwrap();
    let gt = InfoFile {
        source_group: group,
        split: SplitSelector::Test,
        samples: (0..inst.frames)
            .map(|f| {
                frame(
                    f,
                    inst.gt.iter().filter(|g| g.frame == f).map(|&g| boxed(class, g, None)).collect(),
                )
            })
            .collect(),
    };
    let pred = InfoFile {
        samples: (0..inst.frames)
            .map(|f| {
                frame(
                    f,
                    inst.preds
                        .iter()
                        .filter(|p| p.at.frame == f)
                        .map(|p| boxed(class, p.at, Some(p.score)))
                        .collect(),
                )
            })
            .collect(),
        ..gt.clone()
    };
    (gt, pred)
}
