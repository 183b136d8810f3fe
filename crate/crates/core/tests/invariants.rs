use proptest::prelude::*;

use cprt::annotation::{
    cohen_kappa, majority_vote_vectors, merge_dual_labels, percent_agreement, Label,
};
use cprt::boundary::{idw_score, EmbeddedSample, EmbeddingModel, Hyperparams, DEFAULT_IDW_EPS};
use cprt::metrics::{
    confusion_matrix, level_accuracy, mae_and_bias, pearson, spearman, EvaluationRecord,
};
use cprt::scoring::{bucketize, severity_score, BoundarySet, LevelCounts};
use cprt::taxonomy::{
    build_registry, minimal_valid_weights, AttributeSpec, SeverityLevel, TaxonomyRegistry,
};

fn level() -> impl Strategy<Value = SeverityLevel> {
    (0usize..4).prop_map(SeverityLevel::from_index)
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![
        Just(Label::Absent),
        Just(Label::Ambiguous),
        Just(Label::Present)
    ]
}

fn non_constant(v: &[f64]) -> bool {
    v.iter().any(|x| *x != v[0])
}

proptest! {
    #[test]
    fn minimal_weights_always_build(cards in prop::array::uniform4(1u64..12)) {
        let weights = minimal_valid_weights(&cards);
        let specs: Vec<AttributeSpec> = SeverityLevel::ALL
            .iter()
            .flat_map(|&l| (0..cards[l.index()]).map(move |k| {
                let mut answers = [false; 4];
                answers[l.index()] = true;
                AttributeSpec::from_answers(format!("{l}_{k}"), format!("{l} {k}"), "", answers).unwrap()
            }))
            .collect();
        let reg = build_registry(specs, weights, BoundarySet::canonical()).unwrap();
        prop_assert!(cprt::properties::check_registry(&reg).passed());
    }

    #[test]
    fn scores_bucket_to_their_level(c in (0u64..=3, 0u64..=10, 0u64..=5, 0u64..=4)) {
        let counts = LevelCounts::new(c.0, c.1, c.2, c.3);
        let reg = TaxonomyRegistry::canonical();
        let s = severity_score(&counts, &reg).unwrap();
        if let Some(l) = s.determined_level {
            prop_assert_eq!(bucketize(s.value, reg.boundaries()).unwrap(), l);
        }
    }

    #[test]
    fn spearman_rank_invariant(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..30)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(non_constant(&x) && non_constant(&y));
        let base = spearman(&x, &y).unwrap();
        let cubed: Vec<f64> = y.iter().map(|v| v.powi(3) + 2.0).collect();
        prop_assert!((spearman(&x, &cubed).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn pearson_affine_invariant(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..30), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(non_constant(&x) && non_constant(&y));
        let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((pearson(&scaled, &y).unwrap() - pearson(&x, &y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn mae_bounds_bias(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..30)) {
        let (p, g): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (mae, bias) = mae_and_bias(&p, &g).unwrap();
        prop_assert!(mae + 1e-15 >= bias.abs());
    }

    #[test]
    fn confusion_trace_matches_accuracy(pairs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..40)) {
        let bounds = BoundarySet::canonical();
        let records: Vec<EvaluationRecord> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(g, p))| EvaluationRecord {
                image_id: i.to_string(),
                gt_score: g,
                gt_level: Some(bucketize(g, &bounds).unwrap()),
                pred_score: p,
            })
            .collect();
        let m = confusion_matrix(&records, &bounds).unwrap();
        let trace: u64 = (0..4).map(|i| m[i][i]).sum();
        let acc = level_accuracy(&records, &bounds).unwrap();
        prop_assert_eq!(trace as f64 / records.len() as f64, acc);
    }

    #[test]
    fn metrics_permutation_invariant(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..20), rot in 0usize..20) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(non_constant(&x) && non_constant(&y));
        let k = rot % x.len();
        let (mut xr, mut yr) = (x.clone(), y.clone());
        xr.rotate_left(k);
        yr.rotate_left(k);
        prop_assert!((spearman(&x, &y).unwrap() - spearman(&xr, &yr).unwrap()).abs() < 1e-12);
        prop_assert!((pearson(&x, &y).unwrap() - pearson(&xr, &yr).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn merge_dual_commutes(pairs in prop::collection::vec((label(), label()), 1..22)) {
        let (a, b): (Vec<Label>, Vec<Label>) = pairs.into_iter().unzip();
        prop_assert_eq!(merge_dual_labels(&a, &b).unwrap(), merge_dual_labels(&b, &a).unwrap());
    }

    #[test]
    fn majority_of_copies_is_identity(pairs in prop::collection::vec((label(), label()), 1..22), copies in 1usize..6) {
        let (a, b): (Vec<Label>, Vec<Label>) = pairs.into_iter().unzip();
        let merged = merge_dual_labels(&a, &b).unwrap();
        let vectors = vec![merged.clone(); copies];
        prop_assert_eq!(majority_vote_vectors(&vectors).unwrap(), merged);
    }

    #[test]
    fn agreement_and_kappa_properties(a in prop::collection::vec(0u8..2, 2..40), b_seed in prop::collection::vec(0u8..2, 40)) {
        let b: Vec<u8> = b_seed[..a.len()].to_vec();
        let pa = percent_agreement(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&pa));
        prop_assert_eq!(pa == 1.0, a == b);
        let kab = cohen_kappa(&a, &b).unwrap();
        let kba = cohen_kappa(&b, &a).unwrap();
        prop_assert_eq!(kab, kba);
        if a.contains(&0) && a.contains(&1) {
            prop_assert_eq!(cohen_kappa(&a, &a).unwrap().value, 1.0);
        }
    }

    #[test]
    fn embeddings_are_unit_norm(seed in any::<u64>(), bits in prop::collection::vec(0u8..2, 22)) {
        prop_assume!(bits.contains(&1));
        let model = EmbeddingModel::initialise(22, Hyperparams::default(), seed).unwrap();
        let z = model.embed(&bits).unwrap();
        let norm: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn idw_bounded_and_permutation_invariant(
        refs in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), level()), 1..15),
        q in prop::collection::vec(-1.0f64..1.0, 3),
        rot in 0usize..15,
    ) {
        let refs: Vec<EmbeddedSample> = refs.into_iter().map(|(z, level)| EmbeddedSample { z, level }).collect();
        let s = idw_score(&q, &refs, DEFAULT_IDW_EPS, None).unwrap();
        let lo = refs.iter().map(|r| r.level.number()).min().unwrap() as f64;
        let hi = refs.iter().map(|r| r.level.number()).max().unwrap() as f64;
        prop_assert!(s >= lo - 1e-9 && s <= hi + 1e-9);
        let mut rotated = refs.clone();
        rotated.rotate_left(rot % refs.len());
        prop_assert!((idw_score(&q, &rotated, DEFAULT_IDW_EPS, None).unwrap() - s).abs() < 1e-9);
    }
}
