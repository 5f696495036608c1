//! Seeded fixtures shared by the benchmarks.

use cce_core::{
    Activation, ConceptBank, ConceptExamples, ConceptVector, Layer, Matrix, ModelHead, RngState, Vector,
};

pub struct Fixture {
    pub head: ModelHead,
    pub bank: ConceptBank,
    pub samples: Vec<(Vector, usize)>,
}

fn gaussian(rng: &mut RngState, n: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    rng.fill_normal(&mut v);
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

/// Random head of `hidden` ReLU layers over `dim` inputs with 5 outputs.
pub fn head(rng: &mut RngState, dim: usize, hidden: &[usize]) -> ModelHead {
    let mut dims = vec![dim];
    dims.extend_from_slice(hidden);
    dims.push(5);
    let last = dims.len() - 2;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let weights = Matrix::new(w[1], w[0], gaussian(rng, w[0] * w[1], 1.0 / (w[0] as f64).sqrt())).unwrap();
            let bias = Vector::new(gaussian(rng, w[1], 0.1)).unwrap();
            let act = if i == last { Activation::None } else { Activation::Relu };
            Layer::new(weights, bias, act).unwrap()
        })
        .collect();
    ModelHead::new(layers).unwrap()
}

pub fn fixture(dim: usize, concepts: usize, samples: usize, seed: u64) -> Fixture {
    let mut rng = RngState::new(seed);
    let head = head(&mut rng, dim, &[]);
    let cs = (0..concepts)
        .map(|i| ConceptVector {
            name: format!("c{i:03}"),
            direction: rng.unit_vector(dim),
            intercept: 0.0,
            val_accuracy: 1.0,
            pos_score_max: 1.5,
            neg_score_min: -1.5,
        })
        .collect();
    let bank = ConceptBank::new(cs, 0.0).unwrap();
    let samples = (0..samples)
        .map(|_| (Vector::new(gaussian(&mut rng, dim, 0.5)).unwrap(), rng.below(5)))
        .collect();
    Fixture { head, bank, samples }
}

/// Positives shifted along a random direction, negatives centered.
pub fn concept_examples(dim: usize, per_side: usize, seed: u64) -> ConceptExamples {
    let mut rng = RngState::new(seed);
    let shift = rng.unit_vector(dim);
    let mut draw = |offset: f64| {
        (0..per_side)
            .map(|_| Vector::new(gaussian(&mut rng, dim, 0.25)).unwrap().add_scaled(offset, &shift).unwrap())
            .collect()
    };
    let positives = draw(1.0);
    let negatives = draw(0.0);
    ConceptExamples {
        name: "shifted".into(),
        positives,
        negatives,
    }
}
