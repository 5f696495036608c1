use cce_core::harness::precision_at_k;
use cce_core::numerics::log_sum_exp;
use cce_core::{
    cce_batch, cce_explain, cce_solve, Activation, ConceptBank, ConceptVector, Layer, Matrix, ModelHead, OptimConfig,
    RngState, ValidityBounds, Vector,
};
use proptest::prelude::*;

struct Instance {
    head: ModelHead,
    bank: ConceptBank,
    e: Vector,
    label: usize,
}

fn concept(name: String, direction: Vector, intercept: f64, pos_max: f64, neg_min: f64) -> ConceptVector {
    ConceptVector {
        name,
        direction,
        intercept,
        val_accuracy: 1.0,
        pos_score_max: pos_max,
        neg_score_min: neg_min,
    }
}

fn matrix(rng: &mut RngState, rows: usize, cols: usize) -> Matrix {
    let s = 1.0 / (cols as f64).sqrt();
    Matrix::new(rows, cols, (0..rows * cols).map(|_| s * rng.normal()).collect()).unwrap()
}

fn bias(rng: &mut RngState, n: usize) -> Vector {
    Vector::new((0..n).map(|_| 0.3 * rng.normal()).collect()).unwrap()
}

/// A small random instance; `hidden = 0` gives a linear head.
fn instance(seed: u64, dim: usize, classes: usize, concepts: usize, hidden: usize) -> Instance {
    let mut rng = RngState::new(seed);
    let layers = if hidden == 0 {
        vec![Layer::new(matrix(&mut rng, classes, dim), bias(&mut rng, classes), Activation::None).unwrap()]
    } else {
        vec![
            Layer::new(matrix(&mut rng, hidden, dim), bias(&mut rng, hidden), Activation::Relu).unwrap(),
            Layer::new(matrix(&mut rng, classes, hidden), bias(&mut rng, classes), Activation::None).unwrap(),
        ]
    };
    let head = ModelHead::new(layers).unwrap();
    let cs = (0..concepts)
        .map(|i| {
            let neg = -0.5 - 2.0 * rng.next_f64();
            let pos = 0.5 + 2.0 * rng.next_f64();
            concept(format!("k{i}"), rng.unit_vector(dim), 0.2 * rng.normal(), pos, neg)
        })
        .collect();
    let bank = ConceptBank::new(cs, 0.0).unwrap();
    let e = Vector::new((0..dim).map(|_| rng.normal()).collect()).unwrap();
    let label = rng.below(classes);
    Instance { head, bank, e, label }
}

fn explain(x: &Instance, cfg: &OptimConfig) -> cce_core::CceResult {
    cce_explain(&x.e, x.label, &x.head, &x.bank, cfg).unwrap()
}

/// Cross-entropy of `label` for a linear head at `e + Σ w_j c_j`, computed
/// from logit offsets so it shares no code with the solver.
fn linear_ce(z0: &[f64], offsets: &[Vec<f64>], w: &[f64], label: usize) -> f64 {
    let z: Vec<f64> = (0..z0.len())
        .map(|k| z0[k] + offsets.iter().zip(w).map(|(a, wj)| a[k] * wj).sum::<f64>())
        .collect();
    log_sum_exp(&z) - z[label]
}

#[test]
fn two_dimensional_oracle() {
    // W = [[1, 0], [-1, 0]], e = (-1, 0), label 0, one concept along x with bounds [0, 3]
    let head = ModelHead::new(vec![Layer::new(
        Matrix::new(2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap(),
        Vector::zeros(2),
        Activation::None,
    )
    .unwrap()])
    .unwrap();
    let c = concept("x".into(), Vector::new(vec![1.0, 0.0]).unwrap(), 0.0, 3.0, -1.0);
    let bank = ConceptBank::new(vec![c], 0.0).unwrap();
    let e = Vector::new(vec![-1.0, 0.0]).unwrap();
    let bounds = ValidityBounds::new(Vector::zeros(1), Vector::new(vec![3.0]).unwrap()).unwrap();
    let cfg = OptimConfig {
        alpha: 0.0,
        beta: 0.0,
        step_size: 0.05,
        max_steps: 2000,
        ..OptimConfig::default()
    };
    let r = cce_solve(&[(e, 0)], &head, &bank, &bounds, &cfg, &mut |_| {}).unwrap();
    // CE(w) = ln(1 + exp(-2(w - 1))) is decreasing, so the box edge wins
    let grid_min = (0..=3000)
        .map(|i| (1.0 + (-2.0 * (i as f64 * 1e-3 - 1.0)).exp()).ln())
        .fold(f64::INFINITY, f64::min);
    assert!(r.loss_final <= grid_min + 1e-3, "{} vs {grid_min}", r.loss_final);
    assert!(r.scores[0] > 2.5 && r.scores[0] <= 3.0);
    assert_eq!(r.prediction_after().predicted_class, 0);
}

#[test]
fn linear_heads_reach_the_grid_minimum() {
    let cfg = OptimConfig {
        alpha: 0.0,
        beta: 0.0,
        step_size: 0.05,
        max_steps: 2000,
        ..OptimConfig::default()
    };
    for trial in 0..40u64 {
        let n = 1 + (trial % 2) as usize;
        let x = instance(500 + trial, 4, 3, n, 0);
        let mut rng = RngState::new(trial);
        let half = if n == 1 { 2.0 } else { 0.5 };
        let lo: Vec<f64> = (0..n).map(|_| -half * rng.next_f64()).collect();
        let hi: Vec<f64> = (0..n).map(|_| half * rng.next_f64()).collect();
        let bounds = ValidityBounds::new(Vector::new(lo.clone()).unwrap(), Vector::new(hi.clone()).unwrap()).unwrap();
        let r = cce_solve(&[(x.e.clone(), x.label)], &x.head, &x.bank, &bounds, &cfg, &mut |_| {}).unwrap();

        let layer = &x.head.layers()[0];
        let z0: Vec<f64> = layer
            .weights
            .matvec(x.e.as_slice())
            .iter()
            .zip(layer.bias.iter())
            .map(|(a, b)| a + b)
            .collect();
        let offsets: Vec<Vec<f64>> = x.bank.concepts().iter().map(|c| layer.weights.matvec(c.direction.as_slice())).collect();
        let axis = |j: usize| -> Vec<f64> {
            let steps = ((hi[j] - lo[j]) / 1e-3).round() as usize;
            (0..=steps).map(|i| (lo[j] + i as f64 * 1e-3).min(hi[j])).collect()
        };
        let grid_min = if n == 1 {
            axis(0).iter().map(|&a| linear_ce(&z0, &offsets, &[a], x.label)).fold(f64::INFINITY, f64::min)
        } else {
            let (a0, a1) = (axis(0), axis(1));
            a0.iter()
                .flat_map(|&a| a1.iter().map(move |&b| [a, b]))
                .map(|w| linear_ce(&z0, &offsets, &w, x.label))
                .fold(f64::INFINITY, f64::min)
        };
        let own = linear_ce(&z0, &offsets, r.scores.as_slice(), x.label);
        assert!((own - r.loss_final).abs() < 1e-9, "trial {trial}: loss {} vs oracle {own}", r.loss_final);
        assert!(r.loss_final <= grid_min + 1e-3, "trial {trial}: {} vs grid {grid_min}", r.loss_final);
    }
}

#[test]
fn concept_at_its_positive_extreme_is_never_added() {
    let mut x = instance(3, 6, 3, 5, 8);
    // make e's score on concept 0 its positive training extreme
    let mut concepts = x.bank.concepts().to_vec();
    concepts[0].pos_score_max = concepts[0].score(&x.e).unwrap();
    concepts[0].neg_score_min = concepts[0].neg_score_min.min(concepts[0].pos_score_max);
    x.bank = ConceptBank::new(concepts, 0.0).unwrap();
    let r = explain(&x, &OptimConfig::default());
    assert_eq!(r.bounds.w_max[0], 0.0);
    assert!(r.scores[0] <= 0.0, "{}", r.scores[0]);
}

#[test]
fn identical_samples_match_a_single_explanation() {
    let cfg = OptimConfig::default();
    for seed in 0..10 {
        let x = instance(seed, 8, 4, 12, 10);
        let one = explain(&x, &cfg);
        let single = cce_batch(&[(x.e.clone(), x.label)], &x.head, &x.bank, &cfg).unwrap();
        assert_eq!(one, single);
        for k in [2usize, 3, 5] {
            let batch = cce_batch(&vec![(x.e.clone(), x.label); k], &x.head, &x.bank, &cfg).unwrap();
            for (a, b) in one.scores.iter().zip(batch.scores.iter()) {
                assert!((a - b).abs() < 1e-9, "k={k}: {a} vs {b}");
            }
            assert_eq!(one.ranking.order[..3], batch.ranking.order[..3]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iterates_stay_in_the_box(seed in 0u64..100_000, hidden in 0usize..12, alpha in 0.0f64..0.2, beta in 0.0f64..0.2) {
        let x = instance(seed, 6, 3, 8, hidden);
        let cfg = OptimConfig { alpha, beta, step_size: 0.2, ..OptimConfig::default() };
        let bounds = cce_core::validity_bounds(&x.e, &x.bank).unwrap();
        let mut outside = 0;
        let mut last = f64::INFINITY;
        let mut rose = false;
        let r = cce_solve(&[(x.e.clone(), x.label)], &x.head, &x.bank, &bounds, &cfg, &mut |s| {
            if !bounds.contains(s.w) {
                outside += 1;
            }
            rose |= s.loss > last;
            last = s.loss;
        }).unwrap();
        prop_assert_eq!(outside, 0);
        prop_assert!(!rose);
        prop_assert!(r.bounds.contains(r.scores.as_slice()));
        prop_assert!(r.loss_final <= r.loss_initial);
    }

    #[test]
    fn the_label_never_loses_probability(seed in 0u64..100_000, hidden in 0usize..12) {
        let x = instance(seed, 6, 4, 10, hidden);
        let r = explain(&x, &OptimConfig::default());
        let before = r.prediction_before().probs[x.label];
        let after = r.prediction_after().probs[x.label];
        prop_assert!(after >= before - 1e-12, "{before} -> {after}");
    }

    #[test]
    fn stronger_l1_is_never_less_sparse(seed in 0u64..100_000) {
        let x = instance(seed, 6, 3, 10, 8);
        let nonzero = |alpha: f64| {
            let cfg = OptimConfig { alpha, beta: 0.0, ..OptimConfig::default() };
            explain(&x, &cfg).scores.iter().filter(|s| **s != 0.0).count()
        };
        let counts: Vec<usize> = [0.0, 0.1, 1.0, 10.0].iter().map(|&a| nonzero(a)).collect();
        prop_assert!(counts.windows(2).all(|p| p[1] <= p[0]), "{counts:?}");
    }

    #[test]
    fn explanations_are_deterministic(seed in 0u64..100_000) {
        let x = instance(seed, 6, 3, 8, 6);
        let cfg = OptimConfig::default();
        prop_assert_eq!(explain(&x, &cfg), explain(&x, &cfg));
    }

    #[test]
    fn more_slots_never_lower_precision(ranks in prop::collection::vec(prop::collection::vec(0usize..30, 30), 1..10)) {
        let names = |r: &Vec<usize>| {
            let mut seen = Vec::new();
            for &i in r {
                if !seen.contains(&i) { seen.push(i); }
            }
            for i in 0..30 {
                if !seen.contains(&i) { seen.push(i); }
            }
            seen.into_iter().map(|i| format!("k{i}")).collect::<Vec<_>>()
        };
        let rankings: Vec<Vec<String>> = ranks.iter().map(names).collect();
        let p: Vec<f64> = (1..=10).map(|k| precision_at_k(&rankings, "k0", k).unwrap()).collect();
        prop_assert!(p.windows(2).all(|w| w[1] >= w[0]));
    }
}
