use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use mlforge_core::dataset::{
    bump_dataset_version, parse_dataset_config, validate_layout, BumpReason, DatasetConfig,
    DatasetEntry, DatasetError, DatasetGroupId, DatasetKind, LayoutFinding, Split,
    REQUIRED_SUBDIRS,
};
use proptest::prelude::*;
use tempfile::TempDir;

const IDS: [&str; 3] = [
    "70891309-ca8b-477b-905a-5156ffb3df65",
    "80b37b8c-ae9d-4641-a921-0b0c2012eee8",
    "0a4d2a5c-2a33-4a77-a3d4-6bbd9a2a7b26",
];

fn config(versions: &[u64]) -> DatasetConfig {
    let group = DatasetGroupId::new(DatasetKind::Db, "JPNTAXI", 1, 1).unwrap();
    let entries = IDS
        .iter()
        .zip(versions)
        .zip(Split::ALL)
        .map(|((id, &v), split)| DatasetEntry {
            id: id.to_string(),
            webauto_version: v,
            split: Some(split),
        })
        .collect();
    DatasetConfig::new(group, entries).unwrap()
}

fn version_dir(root: &Path, cfg: &DatasetConfig, i: usize) -> PathBuf {
    let e = &cfg.entries[i];
    root.join(cfg.group.stem()).join(&e.id).join(e.webauto_version.to_string())
}

fn build_tree(root: &Path, cfg: &DatasetConfig) {
    for i in 0..cfg.entries.len() {
        for sub in REQUIRED_SUBDIRS {
            fs::create_dir_all(version_dir(root, cfg, i).join(sub)).unwrap();
        }
    }
}

#[test]
fn complete_tree_is_clean() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&[0, 2, 1]);
    build_tree(tmp.path(), &cfg);
    assert_eq!(validate_layout(tmp.path(), &cfg).unwrap(), vec![]);
}

#[test]
fn each_injected_defect_gives_one_finding() {
    let cfg = config(&[0, 2, 1]);
    for sub in REQUIRED_SUBDIRS {
        let tmp = TempDir::new().unwrap();
        build_tree(tmp.path(), &cfg);
        let missing = version_dir(tmp.path(), &cfg, 1).join(sub);
        fs::remove_dir(&missing).unwrap();
        assert_eq!(
            validate_layout(tmp.path(), &cfg).unwrap(),
            vec![LayoutFinding::MissingDir { path: missing }]
        );
    }

    let tmp = TempDir::new().unwrap();
    build_tree(tmp.path(), &cfg);
    let dir = version_dir(tmp.path(), &cfg, 2);
    fs::rename(&dir, dir.with_file_name("3")).unwrap();
    assert_eq!(
        validate_layout(tmp.path(), &cfg).unwrap(),
        vec![LayoutFinding::VersionMismatch {
            id: IDS[2].into(),
            expected: 1,
            found: vec!["3".into()],
        }]
    );

    let tmp = TempDir::new().unwrap();
    build_tree(tmp.path(), &cfg);
    let extra = version_dir(tmp.path(), &cfg, 0).join("notes.txt");
    fs::write(&extra, "x").unwrap();
    assert_eq!(
        validate_layout(tmp.path(), &cfg).unwrap(),
        vec![LayoutFinding::ExtraPath { path: extra }]
    );
}

#[test]
fn config_files_are_checked_against_their_name() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&[0, 1, 0]);
    let good = tmp.path().join("db_jpntaxi_v1.yaml");
    fs::write(&good, cfg.to_yaml()).unwrap();
    assert_eq!(parse_dataset_config(&good).unwrap(), cfg);

    let bad = tmp.path().join("db_j6gen2_v1.yaml");
    fs::write(&bad, cfg.to_yaml()).unwrap();
    assert!(matches!(
        parse_dataset_config(&bad),
        Err(DatasetError::FilenameMismatch { .. })
    ));
}

fn arb_group() -> impl Strategy<Value = DatasetGroupId> {
    (
        prop::sample::select(vec![DatasetKind::Db, DatasetKind::Uc, DatasetKind::Pseudo]),
        "[A-Za-z][A-Za-z0-9]{0,9}",
        0u64..20,
        0u64..20,
    )
        .prop_map(|(k, v, x, y)| DatasetGroupId::new(k, &v, x, y).unwrap())
}

proptest! {
    #[test]
    fn display_and_filename_roundtrip(group in arb_group()) {
        let shown = group.to_string();
        prop_assert_eq!(shown.parse::<DatasetGroupId>().unwrap(), group.clone());
        let filename = group.config_filename();
        prop_assert_eq!(filename.clone(), filename.to_lowercase());
        let stem = filename.strip_suffix(".yaml").unwrap();
        let (kind, vehicle, x) = DatasetGroupId::parse_stem(stem).unwrap();
        prop_assert_eq!(kind, group.kind);
        prop_assert_eq!(vehicle, group.vehicle.to_lowercase());
        prop_assert_eq!(x, group.x);
    }

    #[test]
    fn bumps_only_touch_y(group in arb_group(), reason in prop::sample::select(vec![
        BumpReason::AnnotationChange, BumpReason::AddedData, BumpReason::FormatUpdate,
    ])) {
        let next = bump_dataset_version(&group, reason);
        prop_assert_eq!(next.y, group.y + 1);
        prop_assert_eq!((next.kind, &next.vehicle, next.x), (group.kind, &group.vehicle, group.x));
        prop_assert_eq!(next.config_filename(), group.config_filename());
    }

    #[test]
    fn creating_a_required_dir_never_adds_findings(
        present in prop::collection::vec(any::<bool>(), 15),
        add in 0usize..15,
    ) {
        let tmp = TempDir::new().unwrap();
        let cfg = config(&[0, 1, 2]);
        // Per entry: id dir, version dir, then the required subdirectories.
        let paths: Vec<PathBuf> = (0..3)
            .flat_map(|i| {
                let v = version_dir(tmp.path(), &cfg, i);
                let mut p = vec![v.parent().unwrap().to_path_buf(), v.clone()];
                p.extend(REQUIRED_SUBDIRS.iter().map(|s| v.join(s)));
                p
            })
            .collect();
        let build = |mask: &[bool]| {
            for (p, &on) in paths.iter().zip(mask) {
                if on {
                    fs::create_dir_all(p).unwrap();
                }
            }
        };
        build(&present);
        let before: BTreeSet<String> = validate_layout(tmp.path(), &cfg).unwrap()
            .iter().map(|f| format!("{f:?}")).collect();
        let mut more = present.clone();
        more[add] = true;
        build(&more);
        let after: BTreeSet<String> = validate_layout(tmp.path(), &cfg).unwrap()
            .iter().map(|f| format!("{f:?}")).collect();
        prop_assert!(after.is_subset(&before), "{:?} -> {:?}", before, after);
    }
}
