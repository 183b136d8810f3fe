//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cprt::annotation::{cohen_kappa, majority_vote, merge_dual_labels, Label};
use cprt::boundary::{
    cosine_distance, derive_boundaries, embed_samples, extract_boundaries, synthetic_clusters,
    EmbeddedSample, ExtractionConfig, Hyperparams,
};
use cprt::dataset_io::report_json;
use cprt::metrics::{
    curate_pairs, evaluate, mae_and_bias, pairwise_accuracy, pearson, spearman, EvaluationConfig,
    EvaluationRecord, PairMode,
};
use cprt::properties::{check_registry, check_scorer};
use cprt::scoring::{score_counts, severity_score, BoundarySet, LevelCounts};
use cprt::taxonomy::{
    minimal_valid_weights, validate_weights, weight_slacks, SeverityLevel, TaxonomyRegistry,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(
        elapsed < limit,
        format!("{what} took {elapsed:?}, limit {limit:?}"),
    )
}

fn score(c: [u64; 4]) -> f64 {
    severity_score(&LevelCounts(c), &TaxonomyRegistry::canonical())
        .expect("valid counts")
        .value
}

fn c1_reference_values() -> Outcome {
    let hi = score([2, 10, 5, 4]);
    let lo = score([1, 10, 0, 0]);
    ensure((hi - 0.947).abs() <= 5e-4, format!("(2,10,5,4) = {hi}"))?;
    ensure((lo - 0.870).abs() <= 5e-4, format!("(1,10,0,0) = {lo}"))?;
    Ok(format!("(2,10,5,4) = {hi:.6}, (1,10,0,0) = {lo:.6}"))
}

fn c2_boundary_alignment() -> Outcome {
    let expected = [0.711, 0.514, 0.292, 0.0];
    for (i, want) in expected.iter().enumerate() {
        let mut c = [0u64; 4];
        c[i] = 1;
        let got = score(c);
        ensure(
            (got - want).abs() <= 1e-12,
            format!("single L{} attribute = {got}, want {want}", i + 1),
        )?;
    }
    let top = score([3, 10, 5, 4]);
    ensure(
        (top - 1.0).abs() <= 1e-12,
        format!("maximal L1 combination = {top}"),
    )?;
    Ok("floors 0.711/0.514/0.292/0.000 and maximum 1.000 exact to 1e-12".into())
}

fn c3_exhaustive() -> Outcome {
    let registry = TaxonomyRegistry::canonical();
    let start = Instant::now();
    let report = check_registry(&registry);
    let elapsed = start.elapsed();
    ensure(
        report.combinations == 1320,
        format!("{} combinations, want 1320", report.combinations),
    )?;
    if let Some(v) = report.first_violation() {
        return Err(format!(
            "{} violations; first: {v}",
            report.violations.len()
        ));
    }
    within(elapsed, Duration::from_secs(1), "enumeration")?;
    Ok(format!(
        "1320 combinations, {} checks, all hold in {elapsed:.2?}",
        report.checks
    ))
}

fn c4_weights() -> Outcome {
    let cards = [3, 10, 5, 4];
    let weights = [330, 30, 5, 1];
    let slacks = weight_slacks(&cards, &weights);
    ensure(slacks[..3] == [1, 1, 1], format!("slacks {slacks:?}"))?;
    // 330 > 10*30 + 5*5 + 4*1 = 329, 30 > 5*5 + 4*1 = 29, 5 > 4*1 = 4.
    ensure(330 > 10 * 30 + 5 * 5 + 4, "330 > 329")?;
    ensure(30 > 5 * 5 + 4, "30 > 29")?;
    ensure(5 > 4, "5 > 4")?;
    ensure(
        validate_weights(&cards, &weights).is_ok(),
        "canonical weights rejected",
    )?;
    ensure(
        validate_weights(&cards, &[329, 30, 5, 1]).is_err(),
        "329 accepted at level 1",
    )?;
    ensure(
        validate_weights(&cards, &[330, 29, 5, 1]).is_err(),
        "29 accepted at level 2",
    )?;
    ensure(
        validate_weights(&cards, &[330, 30, 4, 1]).is_err(),
        "4 accepted at level 3",
    )?;
    let minimal = minimal_valid_weights(&cards);
    ensure(minimal == weights, format!("minimal weights {minimal:?}"))?;
    Ok("330 > 329, 30 > 29, 5 > 4; minimal weights (330,30,5,1)".into())
}

// Oracles written from the textbook formulas, independent of the library.

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|o| *o < v).count() as f64;
            let equal = x.iter().filter(|o| *o == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    oracle_pearson(&oracle_ranks(x), &oracle_ranks(y))
}

fn oracle_kappa(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let mut table = [[0.0f64; 2]; 2];
    for (&x, &y) in a.iter().zip(b) {
        table[x as usize][y as usize] += 1.0;
    }
    let po = (table[0][0] + table[1][1]) / n;
    let a1 = (table[1][0] + table[1][1]) / n;
    let b1 = (table[0][1] + table[1][1]) / n;
    let pe = a1 * b1 + (1.0 - a1) * (1.0 - b1);
    (po - pe) / (1.0 - pe)
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|v| *v == x[0])
}

fn c5_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tol = 1e-9;
    let mut cases = 0;
    while cases < 200 {
        let n = rng.random_range(3..=10);
        // Coarse grid so ties are common.
        let x: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..6) as f64 / 5.0)
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        if is_constant(&x) || is_constant(&y) {
            continue;
        }
        let p = pearson(&x, &y).map_err(|e| e.to_string())?;
        let s = spearman(&x, &y).map_err(|e| e.to_string())?;
        ensure(
            (p - oracle_pearson(&x, &y)).abs() <= tol,
            format!("pearson {x:?} {y:?}"),
        )?;
        ensure(
            (s - oracle_spearman(&x, &y)).abs() <= tol,
            format!("spearman {x:?} {y:?}"),
        )?;
        let (mae, bias) = mae_and_bias(&y, &x).map_err(|e| e.to_string())?;
        let want_mae = y.iter().zip(&x).map(|(p, g)| (p - g).abs()).sum::<f64>() / n as f64;
        let want_bias = y.iter().zip(&x).map(|(p, g)| p - g).sum::<f64>() / n as f64;
        ensure(
            (mae - want_mae).abs() <= tol && (bias - want_bias).abs() <= tol,
            "mae/bias",
        )?;

        let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let b: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let k = cohen_kappa(&a, &b).map_err(|e| e.to_string())?;
        let want = oracle_kappa(&a, &b);
        if want.is_finite() {
            ensure(
                !k.degenerate && (k.value - want).abs() <= tol,
                format!("kappa {a:?} {b:?}: {} vs {want}", k.value),
            )?;
        } else {
            ensure(
                k.degenerate && k.value == 0.0,
                format!("degenerate kappa {a:?} {b:?}"),
            )?;
        }
        cases += 1;
    }
    // 10 items: both 1 on 4, both 0 on 3, split 3 ways -> po 0.7, pe 0.5.
    let a = [1, 1, 1, 1, 0, 0, 0, 1, 0, 0];
    let b = [1, 1, 1, 1, 0, 0, 0, 0, 1, 1];
    let k = cohen_kappa(&a, &b).map_err(|e| e.to_string())?;
    ensure(k.value == 0.4, format!("hand example kappa = {}", k.value))?;
    Ok(format!(
        "{cases} randomized cases match oracles to 1e-9; hand example kappa = 0.4 exactly"
    ))
}

fn random_records(n: usize, seed: u64) -> Vec<EvaluationRecord> {
    let registry = TaxonomyRegistry::canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let vector: Vec<u8> = (0..registry.len())
                .map(|_| u8::from(rng.random_bool(0.12)))
                .collect();
            let s =
                cprt::scoring::score_attribute_vector(&vector, &registry).expect("valid vector");
            let noise: f64 = rng.random_range(-0.15..0.15);
            EvaluationRecord {
                image_id: format!("img{i:05}"),
                gt_score: s.value,
                gt_level: s.determined_level,
                pred_score: (s.value + noise).clamp(0.0, 1.0),
            }
        })
        .collect()
}

fn c6_pairwise_semantics() -> Outcome {
    let bounds = BoundarySet::canonical();
    for seed in 0..5u64 {
        let records = random_records(300, 100 + seed);
        let gt: Vec<f64> = records.iter().map(|r| r.gt_score).collect();
        let constant: Vec<EvaluationRecord> = records
            .iter()
            .map(|r| EvaluationRecord {
                pred_score: 0.0,
                ..r.clone()
            })
            .collect();
        let report = evaluate(
            &constant,
            &bounds,
            &EvaluationConfig {
                seed,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        ensure(
            report.inter_acc == Some(0.0),
            format!("constant predictions inter_acc {:?}", report.inter_acc),
        )?;

        for max_pairs in [50, 1000, 10_000, 100_000] {
            for mode in [PairMode::Inter, PairMode::Intra] {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pairs =
                    curate_pairs(&records, mode, max_pairs, &mut rng).map_err(|e| e.to_string())?;
                let acc = pairwise_accuracy(&pairs, &gt, &gt).map_err(|e| e.to_string())?;
                ensure(
                    acc.accuracy == 1.0,
                    format!("pred == gt gave {} ({mode}, {max_pairs})", acc.accuracy),
                )?;
            }
        }
    }
    Ok(
        "constant predictions give inter_acc 0.0; pred == gt gives 1.0 on 40 curated pair sets"
            .into(),
    )
}

fn c7_boundary_derivation() -> Outcome {
    let start = Instant::now();
    let samples = synthetic_clusters(&TaxonomyRegistry::canonical().levels(), 50, 7);
    let derivation = derive_boundaries(
        &samples,
        Hyperparams::default(),
        ExtractionConfig::default(),
        7,
    )
    .map_err(|e| e.to_string())?;
    let losses = &derivation.report.epoch_losses;
    let (first, last) = (losses[0], *losses.last().unwrap());
    ensure(last < first, format!("epoch loss {first} -> {last}"))?;

    let embedded = embed_samples(&derivation.model, &samples).map_err(|e| e.to_string())?;
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..embedded.len() {
        for j in i + 1..embedded.len() {
            let d = cosine_distance(&embedded[i].z, &embedded[j].z);
            if embedded[i].level == embedded[j].level {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    let (intra, inter) = (intra / n_intra as f64, inter / n_inter as f64);
    ensure(inter > intra, format!("inter {inter} <= intra {intra}"))?;

    let floors = derivation.file.boundaries.floors();
    ensure(
        floors.windows(2).all(|w| w[0] > w[1]),
        format!("floors not strictly ordered: {floors:?}"),
    )?;
    let intervals = derivation.file.boundaries.intervals();
    ensure(
        intervals.windows(2).all(|w| w[0][0] == w[1][1])
            && intervals.iter().all(|[lo, hi]| lo < hi),
        format!("intervals overlap or are empty: {intervals:?}"),
    )?;

    // Perfectly separated clusters: every sample sits next to its own level
    // only (tight jitter around orthogonal centres).
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pure: Vec<EmbeddedSample> = SeverityLevel::ALL
        .iter()
        .flat_map(|&level| {
            (0..50)
                .map(|_| {
                    let mut z: Vec<f64> = (0..16).map(|_| rng.random_range(-1e-3..1e-3)).collect();
                    z[level.index()] += 1.0;
                    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    EmbeddedSample {
                        z: z.iter().map(|v| v / norm).collect(),
                        level,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let pure_floors = extract_boundaries(&pure, &ExtractionConfig::default())
        .map_err(|e| e.to_string())?
        .floors();
    ensure(
        (pure_floors[1] - 2.0 / 3.0).abs() <= 0.05,
        format!("separated L2 floor {}", pure_floors[1]),
    )?;
    ensure(
        (pure_floors[2] - 1.0 / 3.0).abs() <= 0.05,
        format!("separated L3 floor {}", pure_floors[2]),
    )?;

    // The derived boundaries must still satisfy every scoring property.
    let registry = TaxonomyRegistry::canonical();
    let bounds = derivation.file.boundaries;
    let report = check_scorer(&registry.cardinalities(), &bounds, |c| {
        score_counts(c, &registry.cardinalities(), &registry.weights(), &bounds)
            .map_err(|e| e.to_string())
    });
    if let Some(v) = report.first_violation() {
        return Err(format!("derived boundaries break scoring: {v}"));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30), "derivation")?;
    Ok(format!(
        "loss {first:.4} -> {last:.4}, inter {inter:.3} > intra {intra:.3}, trained floors {:.3}/{:.3}/{:.3}, \
         separated-cluster floors L2 {:.4} L3 {:.4}, {elapsed:.2?}",
        floors[0], floors[1], floors[2], pure_floors[1], pure_floors[2]
    ))
}

fn c8_annotation_rules() -> Outcome {
    let labels = [Label::Absent, Label::Ambiguous, Label::Present];
    for a in labels {
        for b in labels {
            let got = merge_dual_labels(&[a], &[b]).map_err(|e| e.to_string())?[0];
            let want = u8::from(a == Label::Present && b == Label::Present);
            ensure(got == want, format!("merge_dual({a:?}, {b:?}) = {got}"))?;
        }
    }
    for n in 2..=3u32 {
        for bits in 0..(1u32 << n) {
            let votes: Vec<u8> = (0..n).map(|i| ((bits >> i) & 1) as u8).collect();
            let ones = votes.iter().filter(|v| **v == 1).count();
            let want = u8::from(2 * ones > n as usize);
            let got = majority_vote(&votes).map_err(|e| e.to_string())?;
            ensure(got == want, format!("majority_vote({votes:?}) = {got}"))?;
        }
    }
    Ok("9 dual-merge cases and 12 majority-vote tuples match".into())
}

fn c9_determinism() -> Outcome {
    let start = Instant::now();
    let records = random_records(1000, 99);
    let bounds = BoundarySet::canonical();
    let config = EvaluationConfig {
        seed: 42,
        ..Default::default()
    };
    let run = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let report = pool
            .install(|| evaluate(&records, &bounds, &config))
            .map_err(|e| e.to_string())?;
        Ok(report_json(&report))
    };
    let reference = run(1)?;
    for threads in [1, 2, 4, 8] {
        ensure(
            run(threads)? == reference,
            format!("report differs with {threads} threads"),
        )?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5), "evaluation runs")?;
    Ok(format!(
        "1000 records, identical reports for 1/2/4/8 threads, {elapsed:.2?}"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 reference score values", c1_reference_values),
        ("2 boundary alignment", c2_boundary_alignment),
        ("3 exhaustive enumeration", c3_exhaustive),
        ("4 weight constraint arithmetic", c4_weights),
        ("5 metric oracles", c5_metric_oracles),
        ("6 pairwise-accuracy semantics", c6_pairwise_semantics),
        ("7 boundary derivation properties", c7_boundary_derivation),
        ("8 annotation rules", c8_annotation_rules),
        ("9 end-to-end determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
