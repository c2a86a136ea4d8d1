//! Writes small T4dataset trees with annotation tables on disk.

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use mlforge_core::dataset::{DatasetConfig, DatasetEntry, DatasetGroupId, Split, REQUIRED_SUBDIRS};
use mlforge_core::info::{BoxAnnotation, Category, SampleInfo};
use rand::Rng;
use serde_json::json;

pub fn dataset_id(n: u32) -> String {
    format!("{n:08x}-0000-4000-8000-{n:012x}")
}

pub fn car(x: f64, y: f64, score: Option<f64>) -> BoxAnnotation {
    BoxAnnotation {
        category: Category::Car,
        center: [x, y, 0.8],
        size: [1.9, 4.6, 1.6],
        yaw: 0.25,
        score,
        num_lidar_pts: Some(120),
    }
}

pub fn sample(token: &str, timestamp: i64, boxes: Vec<BoxAnnotation>) -> SampleInfo {
    SampleInfo {
        token: token.to_string(),
        timestamp,
        lidar_path: format!("data/LIDAR_TOP/{token}.pcd.bin"),
        dataset_id: None,
        boxes,
    }
}

/// Writes the four annotation tables for `samples` into `dir`.
/// `extra_categories` adds category rows (with one box each on the first
/// sample) that fall outside the evaluated classes.
pub fn write_tables(dir: &Path, samples: &[SampleInfo], extra_categories: &[&str]) {
    fs::create_dir_all(dir).unwrap();
    let mut categories: Vec<_> = Category::ALL
        .iter()
        .map(|c| json!({"token": format!("cat-{c}"), "name": c.as_str(), "description": ""}))
        .collect();
    let mut instances = Vec::new();
    let mut annotations = Vec::new();
    for s in samples {
        for (i, b) in s.boxes.iter().enumerate() {
            let token = format!("ann-{}-{i}", s.token);
            instances.push(json!({
                "token": format!("inst-{token}"),
                "category_token": format!("cat-{}", b.category),
                "nbr_annotations": 1,
            }));
            let mut row = json!({
                "token": token,
                "sample_token": s.token,
                "instance_token": format!("inst-{token}"),
                "translation": b.center,
                "size": b.size,
                "yaw": b.yaw,
            });
            if let Some(score) = b.score {
                row["score"] = json!(score);
            }
            if let Some(n) = b.num_lidar_pts {
                row["num_lidar_pts"] = json!(n);
            }
            annotations.push(row);
        }
    }
    for (i, name) in extra_categories.iter().enumerate() {
        categories.push(json!({"token": format!("cat-extra-{i}"), "name": name, "description": ""}));
        instances.push(json!({
            "token": format!("inst-extra-{i}"),
            "category_token": format!("cat-extra-{i}"),
            "nbr_annotations": 1,
        }));
        annotations.push(json!({
            "token": format!("ann-extra-{i}"),
            "sample_token": samples[0].token,
            "instance_token": format!("inst-extra-{i}"),
            "translation": [1.0, 1.0, 0.0],
            "size": [0.4, 0.4, 0.8],
            "yaw": 0.0,
        }));
    }
    let rows: Vec<_> = samples
        .iter()
        .map(|s| json!({"token": s.token, "timestamp": s.timestamp, "lidar_path": s.lidar_path}))
        .collect();
    let put = |name: &str, v: &serde_json::Value| {
        fs::write(dir.join(name), serde_json::to_string_pretty(v).unwrap()).unwrap()
    };
    put("sample.json", &json!(rows));
    put("category.json", &json!(categories));
    put("instance.json", &json!(instances));
    put("sample_annotation.json", &json!(annotations));
}

/// Creates `{root}/{stem}/{id}/{version}/{annotation,data,input_bug,map}`.
pub fn make_version_dir(root: &Path, group: &DatasetGroupId, id: &str, version: u64) -> std::path::PathBuf {
    let dir = root.join(group.stem()).join(id).join(version.to_string());
    for sub in REQUIRED_SUBDIRS {
        fs::create_dir_all(dir.join(sub)).unwrap();
    }
    dir
}

/// A DB group with one dataset per split, each holding its share of `samples`.
pub fn annotated_group(root: &Path, group: &DatasetGroupId, per_split: [&[SampleInfo]; 3]) -> DatasetConfig {
    let mut entries = Vec::new();
    for (i, (split, samples)) in Split::ALL.into_iter().zip(per_split).enumerate() {
        let id = dataset_id(i as u32 + 1);
        let dir = make_version_dir(root, group, &id, 0);
        write_tables(&dir.join("annotation"), samples, &[]);
        entries.push(DatasetEntry {
            id,
            webauto_version: 0,
            split: Some(split),
        });
    }
    let config = DatasetConfig::new(group.clone(), entries).unwrap();
    fs::write(root.join(group.config_filename()), config.to_yaml()).unwrap();
    config
}

pub fn random_box(rng: &mut impl Rng) -> BoxAnnotation {
    BoxAnnotation {
        category: Category::ALL[rng.gen_range(0..Category::ALL.len())],
        center: [
            rng.gen_range(-80.0..80.0),
            rng.gen_range(-80.0..80.0),
            rng.gen_range(-1.0..3.0),
        ],
        size: [
            rng.gen_range(0.3..3.0),
            rng.gen_range(0.3..12.0),
            rng.gen_range(0.5..4.0),
        ],
        yaw: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        score: Some(rng.gen_range(0.0..=1.0)),
        num_lidar_pts: None,
    }
}

/// Detections over `n` samples of one dataset, ordered by timestamp.
pub fn random_detections(rng: &mut impl Rng, n: usize, dataset: &str) -> Vec<SampleInfo> {
    (0..n)
        .map(|i| {
            let boxes = (0..rng.gen_range(0..8)).map(|_| random_box(rng)).collect();
            SampleInfo {
                dataset_id: Some(dataset.to_string()),
                ..sample(&format!("s{i:03}"), 1_700_000_000_000_000 + i as i64 * 100_000, boxes)
            }
        })
        .collect()
}
