use mlforge_core::version::{
    compare_versions, format_model_id, parse_model_id, AlgorithmName, ModelId, ModelName,
    ModelVersion, PretrainDate, Precedence, Triple,
};
use proptest::prelude::*;

fn name(s: &str) -> ModelName {
    ModelName::new(s).unwrap()
}

fn arb_algorithm() -> impl Strategy<Value = AlgorithmName> {
    (
        prop::sample::select(vec!["CenterPoint", "BEVFusion", "TransFusion", "StreamPETR"]),
        prop::option::of(prop::sample::select(vec!["L", "CL", "offline", "nearby"])),
    )
        .prop_map(|(f, q)| AlgorithmName::new(f, q).unwrap())
}

fn arb_triple() -> impl Strategy<Value = Triple> {
    (0u64..3, 0u64..3, 0u64..3).prop_map(|(x, y, z)| Triple::new(x, y, z))
}

fn arb_product() -> impl Strategy<Value = ModelName> {
    prop::sample::select(vec!["bus", "taxi", "x2"]).prop_map(name)
}

fn arb_version() -> impl Strategy<Value = ModelVersion> {
    prop_oneof![
        (2000u32..2100, 1u32..13, 1u32..29).prop_map(|(y, m, d)| ModelVersion::Pretrain {
            date: PretrainDate::new(y * 10000 + m * 100 + d).unwrap(),
        }),
        (0u64..4, 0u64..4).prop_map(|(x, y)| ModelVersion::Base { x, y }),
        (arb_product(), arb_triple())
            .prop_map(|(product, triple)| ModelVersion::Product { product, triple }),
        (arb_product(), arb_triple())
            .prop_map(|(product, triple)| ModelVersion::ProductRelease { product, triple }),
        (
            arb_product(),
            arb_triple(),
            prop::sample::select(vec!["odaiba", "shiojiri", "p2"]),
            1u64..4
        )
            .prop_map(|(product, triple, project, n)| ModelVersion::Project {
                product,
                triple,
                project: name(project),
                n,
            }),
    ]
}

fn arb_id() -> impl Strategy<Value = ModelId> {
    (arb_algorithm(), arb_version()).prop_map(|(a, v)| ModelId::new(a, v))
}

/// Every version in a small universe, dense enough to hit equal triples.
fn universe() -> Vec<ModelVersion> {
    let mut out = vec![
        ModelVersion::Pretrain { date: PretrainDate::new(20240101).unwrap() },
        ModelVersion::Pretrain { date: PretrainDate::new(20241203).unwrap() },
    ];
    for x in 0..3 {
        for y in 0..3 {
            out.push(ModelVersion::Base { x, y });
        }
    }
    for product in ["bus", "taxi"] {
        for x in 1..3 {
            for y in 0..2 {
                for z in 0..3 {
                    let triple = Triple::new(x, y, z);
                    let product = name(product);
                    out.push(ModelVersion::Product { product: product.clone(), triple });
                    out.push(ModelVersion::ProductRelease { product: product.clone(), triple });
                    for project in ["odaiba", "shiojiri"] {
                        for n in 1..3 {
                            out.push(ModelVersion::Project {
                                product: product.clone(),
                                triple,
                                project: name(project),
                                n,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

#[test]
fn exhaustive_partial_order_axioms() {
    let all = universe();
    assert!(all.len() >= 150, "{}", all.len());
    let lt = |a, b| compare_versions(a, b) == Precedence::Less;
    for a in &all {
        assert_eq!(compare_versions(a, a), Precedence::Equal, "{a}");
        for b in &all {
            let ab = compare_versions(a, b);
            assert_eq!(ab, compare_versions(b, a).reverse(), "{a} vs {b}");
            if ab == Precedence::Equal {
                assert_eq!(a, b);
            }
            if !lt(a, b) {
                continue;
            }
            for c in &all {
                if lt(b, c) {
                    assert!(lt(a, c), "{a} < {b} < {c} but not {a} < {c}");
                }
            }
        }
    }
}

#[test]
fn canonical_text_order_is_total() {
    let algorithms = [
        "CenterPoint",
        "CenterPoint-nearby",
        "BEVFusion-L",
        "BEVFusion-CL",
        "BEVFusion-offline",
        "TransFusion",
        "StreamPETR",
    ];
    let mut ids: Vec<ModelId> = Vec::new();
    for alg in algorithms {
        for v in universe() {
            ids.push(ModelId::new(alg.parse().unwrap(), v));
        }
    }
    assert!(ids.len() >= 1000, "{}", ids.len());
    let mut sorted = ids.clone();
    sorted.sort();
    for w in sorted.windows(2) {
        assert!(w[0] < w[1], "{} !< {}", w[0], w[1]);
        assert!(w[0].to_string() < w[1].to_string());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn format_then_parse_roundtrips(id in arb_id()) {
        let text = format_model_id(&id);
        let back = parse_model_id(&text).unwrap();
        prop_assert_eq!(&back, &id);
        prop_assert_eq!(format_model_id(&back), text);
    }

    #[test]
    fn precedence_is_antisymmetric(a in arb_id(), b in arb_id()) {
        prop_assert_eq!(a.precedence(&b), b.precedence(&a).reverse());
        if a.precedence(&b) == Precedence::Equal {
            prop_assert_eq!(&a, &b);
        }
    }

    #[test]
    fn precedence_is_transitive(alg in arb_algorithm(), a in arb_version(), b in arb_version(), c in arb_version()) {
        let id = |v: &ModelVersion| ModelId::new(alg.clone(), v.clone());
        let (a, b, c) = (id(&a), id(&b), id(&c));
        if a.precedence(&b) == Precedence::Less && b.precedence(&c) == Precedence::Less {
            prop_assert_eq!(a.precedence(&c), Precedence::Less);
        }
    }

    #[test]
    fn project_outranks_its_product(
        alg in arb_algorithm(),
        product in arb_product(),
        triple in arb_triple(),
        project in "[a-z][a-z0-9]{0,7}",
        n in 1u64..100,
    ) {
        prop_assume!(!["base", "pretrain", "release"].contains(&project.as_str()));
        let plain = ModelId::new(alg.clone(), ModelVersion::Product { product: product.clone(), triple });
        let proj = ModelId::new(alg, ModelVersion::Project { product, triple, project: name(&project), n });
        prop_assert_eq!(plain.precedence(&proj), Precedence::Less);
        prop_assert_eq!(proj.precedence(&plain), Precedence::Greater);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,40}") {
        if let Ok(id) = parse_model_id(&text) {
            prop_assert_eq!(format_model_id(&id), text);
        }
    }
}
