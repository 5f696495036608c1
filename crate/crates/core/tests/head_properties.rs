use cce_core::harness::EmbeddingFile;
use cce_core::numerics::{argmax, cross_entropy, finite_diff_grad, softmax};
use cce_core::{Activation, Layer, Matrix, ModelHead, RngState, Vector};
use proptest::prelude::*;

fn random_head(rng: &mut RngState, input: usize, hidden: &[usize], classes: usize, zero_bias: bool) -> ModelHead {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(classes);
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (inp, out) = (w[0], w[1]);
            let scale = 1.0 / (inp as f64).sqrt();
            let weights = Matrix::new(out, inp, (0..out * inp).map(|_| scale * rng.normal()).collect()).unwrap();
            let bias = if zero_bias {
                Vector::zeros(out)
            } else {
                Vector::new((0..out).map(|_| 0.5 * rng.normal()).collect()).unwrap()
            };
            let act = if i + 2 == dims.len() { Activation::None } else { Activation::Relu };
            Layer::new(weights, bias, act).unwrap()
        })
        .collect();
    ModelHead::new(layers).unwrap()
}

fn random_vector(rng: &mut RngState, n: usize, scale: f64) -> Vector {
    Vector::new((0..n).map(|_| scale * rng.normal()).collect()).unwrap()
}

fn rel_err(a: &Vector, b: &Vector) -> f64 {
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / b.norm().max(1e-8)
}

#[test]
fn two_layer_head_matches_hand_evaluation() {
    // W1 = [[1, -1], [0.5, 2], [-1, 0]], b1 = [0, -1, 0.5]; W2 = [[1, 0, -2], [0, 1, 1]], b2 = [0.1, -0.1]
    let l1 = Layer::new(
        Matrix::new(3, 2, vec![1.0, -1.0, 0.5, 2.0, -1.0, 0.0]).unwrap(),
        Vector::new(vec![0.0, -1.0, 0.5]).unwrap(),
        Activation::Relu,
    )
    .unwrap();
    let l2 = Layer::new(
        Matrix::new(2, 3, vec![1.0, 0.0, -2.0, 0.0, 1.0, 1.0]).unwrap(),
        Vector::new(vec![0.1, -0.1]).unwrap(),
        Activation::None,
    )
    .unwrap();
    let head = ModelHead::new(vec![l1, l2]).unwrap();
    let e = [0.3f64, 0.8];
    let h = [
        (e[0] - e[1]).max(0.0),
        (0.5 * e[0] + 2.0 * e[1] - 1.0).max(0.0),
        (-e[0] + 0.5f64).max(0.0),
    ];
    let z = [h[0] - 2.0 * h[2] + 0.1, h[1] + h[2] - 0.1];
    let p = head.forward(&Vector::new(e.to_vec()).unwrap()).unwrap();
    assert!((p.logits[0] - z[0]).abs() < 1e-15 && (p.logits[1] - z[1]).abs() < 1e-15);
    assert_eq!(p.predicted_class, 1);
}

#[test]
fn gradients_match_finite_differences_on_random_heads() {
    let mut rng = RngState::new(17);
    for trial in 0..100 {
        let input = 2 + rng.below(10);
        let classes = 2 + rng.below(5);
        let depth = 1 + trial % 3;
        let hidden: Vec<usize> = (1..depth).map(|_| 2 + rng.below(12)).collect();
        let head = random_head(&mut rng, input, &hidden, classes, false);
        let e = random_vector(&mut rng, input, 1.0);
        let label = rng.below(classes);
        let (loss, grad) = head.grad_wrt_input(&e, label).unwrap();
        let f = |x: &[f64]| head.grad_wrt_input(&Vector::new(x.to_vec())?, label).map(|r| r.0);
        let fd = finite_diff_grad(f, &e, 1e-5).unwrap();
        assert!(loss.is_finite());
        assert!(rel_err(&grad, &fd) < 1e-4, "trial {trial}: {grad:?} vs {fd:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_sums_to_one(z in prop::collection::vec(-1e4f64..1e4, 1..40)) {
        let p = softmax(&Vector::new(z).unwrap());
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn cross_entropy_gradient_matches_fd(z in prop::collection::vec(-20f64..20.0, 2..12), pick in 0usize..1000) {
        let z = Vector::new(z).unwrap();
        let label = pick % z.dim();
        let (_, g) = cross_entropy(&z, label).unwrap();
        let fd = finite_diff_grad(|x: &[f64]| Ok(cross_entropy(&Vector::new(x.to_vec())?, label)?.0), &z, 1e-5).unwrap();
        for (a, b) in g.iter().zip(fd.iter()) {
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn zero_bias_relu_stack_is_homogeneous(seed in 0u64..10_000, alpha in 0.01f64..50.0) {
        let mut rng = RngState::new(seed);
        let head = random_head(&mut rng, 5, &[7, 4], 3, true);
        let e = random_vector(&mut rng, 5, 1.0);
        let a = head.forward(&e).unwrap().logits;
        let b = head.forward(&e.scaled(alpha)).unwrap().logits;
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((alpha * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn predicted_class_is_argmax_of_logits(seed in 0u64..10_000, scale in 0.1f64..100.0) {
        let mut rng = RngState::new(seed);
        let head = random_head(&mut rng, 6, &[5], 4, false);
        let p = head.forward(&random_vector(&mut rng, 6, scale)).unwrap();
        prop_assert_eq!(p.predicted_class, argmax(p.logits.as_slice()));
        prop_assert_eq!(p.predicted_class, argmax(p.probs.as_slice()));
        prop_assert_eq!(p.confidence, p.probs[p.predicted_class]);
    }

    #[test]
    fn embedding_file_round_trip(rows in prop::collection::vec(prop::collection::vec(-8f64..8.0, 7), 1..20)) {
        let labels: Vec<usize> = (0..rows.len()).map(|i| i % 3).collect();
        let vs: Vec<Vector> = rows.iter().map(|r| Vector::new(r.clone()).unwrap()).collect();
        let f = EmbeddingFile::labeled(vs, labels.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.emb");
        f.write(&path).unwrap();
        let g = EmbeddingFile::read(&path).unwrap();
        prop_assert_eq!(&g.labels, &labels);
        for (a, b) in f.embeddings.iter().zip(&g.embeddings) {
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
