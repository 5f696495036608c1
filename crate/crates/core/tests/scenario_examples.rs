use cce_core::harness::precision_at_k;
use cce_core::scenarios::{ablate_concept, collect_ood_mistakes, Companion, ScenarioWorld};
use cce_core::{cce_batch, cce_explain, generate_world, OptimConfig, ScenarioSpec};
use rayon::prelude::*;

fn rankings(world: &ScenarioWorld) -> Vec<Vec<String>> {
    collect_ood_mistakes(world)
        .iter()
        .map(|(e, y)| cce_explain(e, *y, &world.trained_head, &world.bank, &OptimConfig::default()).unwrap().ranked_names())
        .collect()
}

fn worlds(severity: f64, seeds: std::ops::Range<u64>) -> Vec<ScenarioWorld> {
    seeds
        .into_par_iter()
        .map(|seed| generate_world(&ScenarioSpec { severity, seed, ..ScenarioSpec::default() }).unwrap())
        .collect()
}

#[test]
fn moderate_severity_batch_finds_the_confounder() {
    let ranks: Vec<usize> = worlds(0.5, 0..12)
        .par_iter()
        .map(|w| {
            let mistakes = collect_ood_mistakes(w);
            assert!(!mistakes.is_empty());
            let r = cce_batch(&mistakes, &w.trained_head, &w.bank, &OptimConfig::default()).unwrap();
            r.ranking.rank_of(w.target_concept()).unwrap()
        })
        .collect();
    let hits = ranks.iter().filter(|&&r| r <= 3).count();
    assert!(hits * 3 >= ranks.len() * 2, "{ranks:?}");
}

#[test]
fn unconfounded_head_does_not_blame_the_concept() {
    let all = worlds(0.0, 0..12);
    let mut pooled = Vec::new();
    for w in &all {
        let n = collect_ood_mistakes(w).len();
        assert!(n < w.spec().ood_test_count / 2, "seed {}: {n} mistakes", w.spec().seed);
        pooled.extend(rankings(w));
    }
    assert!(pooled.len() >= 50);
    // every world names its confounder concept_000
    let p = precision_at_k(&pooled, all[0].target_concept(), 3).unwrap();
    assert!(p <= 0.1, "{p}");
}

#[test]
fn companion_takes_over_once_the_confounder_is_gone() {
    let spec = ScenarioSpec {
        companion: Some(Companion { concept: 7, cosine: 0.5 }),
        seed: 2,
        ..ScenarioSpec::default()
    };
    let world = generate_world(&spec).unwrap();
    let ablated = ablate_concept(&world, spec.confounded_concept).unwrap();
    let companion = &world.geometry.concept_names[7];
    let r = rankings(&ablated);
    assert!(!r.is_empty());
    let p5 = precision_at_k(&r, companion, 5).unwrap();
    assert!(p5 >= 0.5, "{p5}");
}

#[test]
fn removing_an_unrelated_concept_barely_matters() {
    let world = generate_world(&ScenarioSpec { seed: 4, ..ScenarioSpec::default() }).unwrap();
    let target = world.target_concept().to_string();
    let before = precision_at_k(&rankings(&world), &target, 3).unwrap();
    let unrelated = (0..world.geometry.concept_names.len())
        .find(|&i| {
            i != world.spec().confounded_concept
                && world.geometry.class_attributes.iter().all(|a| !a.contains(&i))
        })
        .unwrap();
    let after = precision_at_k(&rankings(&ablate_concept(&world, unrelated).unwrap()), &target, 3).unwrap();
    assert!((before - after).abs() < 0.1, "{before} -> {after}");
}
