//! Synthetic spurious-correlation worlds.
//!
//! A world has `num_classes` classes and `num_concepts` concepts living as
//! random unit directions in the embedding space. Each class owns a few
//! attribute concepts that every one of its samples carries. One class is
//! confounded with one extra concept: during training that concept appears
//! in a `severity` fraction of the class's samples. A linear head trained on
//! such data leans on the concept, so out-of-distribution samples of the
//! class without it get misclassified, and an explainer should name the
//! confounding concept as the fix.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::concept_bank::{build_bank, ConceptBank, ConceptExamples, SvmConfig, DEFAULT_ACCURACY_THRESHOLD, DEFAULT_SPLIT_FRACTION};
use crate::error::{CceError, Result};
use crate::model_head::ModelHead;
use crate::numerics::{argmax, axpy, dot, softmax_slice, Matrix, RngState, Vector};

/// A concept constructed to lie at a fixed cosine from the confounding one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Companion {
    pub concept: usize,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub dim: usize,
    pub num_classes: usize,
    pub num_concepts: usize,
    pub confounded_class: usize,
    pub confounded_concept: usize,
    /// Fraction of the confounded class's training samples that carry the
    /// confounding concept.
    pub severity: f64,
    pub train_per_class: usize,
    pub ood_test_count: usize,
    pub noise_sigma: f64,
    /// Chance that any other concept is present in a sample.
    pub background_rate: f64,
    pub concept_strength: f64,
    pub prototype_scale: f64,
    /// Concepts that every sample of a class carries.
    pub attributes_per_class: usize,
    pub attribute_strength: f64,
    /// The class after the confounded one carries the confounded class's
    /// attributes instead of its own, so mainly the confounder tells the two
    /// apart.
    pub lookalike: bool,
    /// Positives (and negatives) synthesized per concept for the bank.
    pub examples_per_concept: usize,
    pub head_epochs: usize,
    pub head_learning_rate: f64,
    pub companion: Option<Companion>,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            dim: 512,
            num_classes: 5,
            num_concepts: 150,
            confounded_class: 0,
            confounded_concept: 0,
            severity: 1.0,
            train_per_class: 150,
            ood_test_count: 50,
            noise_sigma: 0.25,
            background_rate: 0.1,
            concept_strength: 1.0,
            prototype_scale: 0.5,
            attributes_per_class: 4,
            attribute_strength: 2.0,
            lookalike: true,
            examples_per_concept: 100,
            head_epochs: 300,
            head_learning_rate: 0.003,
            companion: None,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CceError::invalid(m));
        if self.dim == 0 || self.num_classes < 2 || self.num_concepts == 0 {
            return fail("need dim >= 1, at least 2 classes and 1 concept".into());
        }
        if !(0.0..=1.0).contains(&self.severity) {
            return fail(format!("severity {} outside [0, 1]", self.severity));
        }
        if self.confounded_class >= self.num_classes {
            return fail(format!("confounded class {} out of range", self.confounded_class));
        }
        if self.confounded_concept >= self.num_concepts {
            return fail(format!("confounded concept {} out of range", self.confounded_concept));
        }
        if self.train_per_class == 0 || self.ood_test_count == 0 || self.examples_per_concept < 2 {
            return fail("sample counts must be positive (and >= 2 concept examples)".into());
        }
        if self.attributes_per_class * self.num_classes >= self.num_concepts {
            return fail("not enough concepts for the class attributes".into());
        }
        if !(0.0..=1.0).contains(&self.background_rate) || !(self.noise_sigma >= 0.0) {
            return fail("background rate must be a probability and noise non-negative".into());
        }
        if !(self.concept_strength > 0.0) || !(self.attribute_strength > 0.0) || !(self.prototype_scale >= 0.0) {
            return fail("strengths must be positive".into());
        }
        if !(self.head_learning_rate > 0.0) || self.head_epochs == 0 {
            return fail("head training needs a positive learning rate and epochs".into());
        }
        if let Some(c) = self.companion {
            if c.concept >= self.num_concepts || c.concept == self.confounded_concept {
                return fail("companion must be a different, valid concept".into());
            }
            if !(c.cosine.abs() < 1.0) {
                return fail("companion cosine must lie in (-1, 1)".into());
            }
        }
        Ok(())
    }
}

/// One synthetic sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    pub embedding: Vector,
    pub label: usize,
    /// Presence flag per concept.
    pub concepts: Vec<bool>,
}

/// The fixed part of a world: where classes and concepts live.
#[derive(Debug, Clone)]
pub struct WorldGeometry {
    pub spec: ScenarioSpec,
    pub class_prototypes: Vec<Vector>,
    pub concept_directions: Vec<Vector>,
    pub concept_names: Vec<String>,
    /// Attribute concept indices per class.
    pub class_attributes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct ScenarioWorld {
    pub geometry: Arc<WorldGeometry>,
    /// Severity the head was trained at.
    pub severity: f64,
    pub train_set: Arc<Vec<LabeledEmbedding>>,
    pub ood_set: Arc<Vec<LabeledEmbedding>>,
    pub trained_head: Arc<ModelHead>,
    pub bank: Arc<ConceptBank>,
    pub warnings: Vec<String>,
}

pub fn concept_name(i: usize) -> String {
    format!("concept_{i:03}")
}

mod stream {
    pub const GEOMETRY: u64 = 1;
    pub const ATTRIBUTES: u64 = 2;
    pub const CONCEPT_EXAMPLES: u64 = 3;
    pub const BANK_TRAINING: u64 = 4;
    pub const OOD: u64 = 5;
    pub const TRAIN: u64 = 6;
}

/// Builds the whole world from `spec`; identical specs give identical worlds.
pub fn generate_world(spec: &ScenarioSpec) -> Result<ScenarioWorld> {
    spec.validate()?;
    let root = RngState::new(spec.seed);
    let mut warnings = Vec::new();
    if spec.dim < spec.num_classes + spec.num_concepts {
        warnings.push(format!(
            "dim {} is below classes + concepts ({}); directions will overlap",
            spec.dim,
            spec.num_classes + spec.num_concepts
        ));
    }

    let mut geo = root.derive(stream::GEOMETRY);
    let class_prototypes: Vec<Vector> = (0..spec.num_classes).map(|_| geo.unit_vector(spec.dim)).collect();
    let mut concept_directions: Vec<Vector> = (0..spec.num_concepts).map(|_| geo.unit_vector(spec.dim)).collect();
    if let Some(c) = spec.companion {
        concept_directions[c.concept] =
            at_cosine(&concept_directions[spec.confounded_concept], &concept_directions[c.concept], c.cosine)?;
    }
    let geometry = WorldGeometry {
        spec: spec.clone(),
        class_prototypes,
        concept_directions,
        concept_names: (0..spec.num_concepts).map(concept_name).collect(),
        class_attributes: assign_attributes(spec, &mut root.derive(stream::ATTRIBUTES)),
    };

    let bank = geometry.learn_bank(&root)?;
    let ood_set = geometry.sample_ood(&mut root.derive(stream::OOD));
    let (train_set, head) = geometry.train(spec.severity)?;
    Ok(ScenarioWorld {
        geometry: Arc::new(geometry),
        severity: spec.severity,
        train_set: Arc::new(train_set),
        ood_set: Arc::new(ood_set),
        trained_head: Arc::new(head),
        bank: Arc::new(bank),
        warnings,
    })
}

/// Unit vector at `cosine` from `anchor`, built from the part of `other`
/// orthogonal to it.
fn at_cosine(anchor: &Vector, other: &Vector, cosine: f64) -> Result<Vector> {
    let a = anchor.as_slice();
    let proj = dot(a, other.as_slice());
    let mut orth: Vec<f64> = other.iter().zip(a).map(|(o, a)| o - proj * a).collect();
    let n = dot(&orth, &orth).sqrt();
    if n < 1e-9 {
        return Err(CceError::DegenerateScenario("companion is parallel to the confounder".into()));
    }
    orth.iter_mut().for_each(|x| *x /= n);
    let s = (1.0 - cosine * cosine).sqrt();
    Ok(Vector::from_finite(a.iter().zip(&orth).map(|(a, o)| cosine * a + s * o).collect()))
}

fn assign_attributes(spec: &ScenarioSpec, rng: &mut RngState) -> Vec<Vec<usize>> {
    let mut pool: Vec<usize> = (0..spec.num_concepts)
        .filter(|&i| i != spec.confounded_concept && Some(i) != spec.companion.map(|c| c.concept))
        .collect();
    rng.shuffle(&mut pool);
    (0..spec.num_classes)
        .map(|k| pool[k * spec.attributes_per_class..(k + 1) * spec.attributes_per_class].to_vec())
        .collect()
}

impl WorldGeometry {
    pub fn lookalike_class(&self) -> usize {
        (self.spec.confounded_class + 1) % self.spec.num_classes
    }

    /// Class whose attributes samples of `class` carry.
    fn attribute_source(&self, class: usize) -> usize {
        if self.spec.lookalike && class == self.lookalike_class() {
            self.spec.confounded_class
        } else {
            class
        }
    }

    fn embed(&self, class: Option<usize>, present: &[bool], rng: &mut RngState) -> Vector {
        let spec = &self.spec;
        let mut e = vec![0.0; spec.dim];
        rng.fill_normal(&mut e);
        e.iter_mut().for_each(|x| *x *= spec.noise_sigma);
        if let Some(k) = class {
            axpy(spec.prototype_scale, self.class_prototypes[k].as_slice(), &mut e);
        }
        for (i, _) in present.iter().enumerate().filter(|(_, &p)| p) {
            let strength = if self.class_attributes.iter().flatten().any(|&a| a == i) {
                spec.attribute_strength
            } else {
                spec.concept_strength
            };
            axpy(strength, self.concept_directions[i].as_slice(), &mut e);
        }
        Vector::from_finite(e)
    }

    fn background(&self, rng: &mut RngState) -> Vec<bool> {
        let spec = &self.spec;
        let mut present: Vec<bool> = (0..spec.num_concepts).map(|_| rng.bernoulli(spec.background_rate)).collect();
        // attributes belong to their classes only
        for &a in self.class_attributes.iter().flatten() {
            present[a] = false;
        }
        present
    }

    /// A sample of `class`; `confounder` forces the confounding concept on
    /// or off.
    pub fn class_sample(&self, class: usize, confounder: Option<bool>, rng: &mut RngState) -> LabeledEmbedding {
        let mut present = self.background(rng);
        for &a in &self.class_attributes[self.attribute_source(class)] {
            present[a] = true;
        }
        if let Some(flag) = confounder {
            present[self.spec.confounded_concept] = flag;
        }
        LabeledEmbedding {
            embedding: self.embed(Some(class), &present, rng),
            label: class,
            concepts: present,
        }
    }

    fn sample_train(&self, severity: f64, rng: &mut RngState) -> Vec<LabeledEmbedding> {
        let spec = &self.spec;
        let n_confounded = (severity * spec.train_per_class as f64).ceil() as usize;
        let mut out = Vec::with_capacity(spec.num_classes * spec.train_per_class);
        for class in 0..spec.num_classes {
            for j in 0..spec.train_per_class {
                let flag = (class == spec.confounded_class).then_some(j < n_confounded);
                out.push(self.class_sample(class, flag, rng));
            }
        }
        out
    }

    fn sample_ood(&self, rng: &mut RngState) -> Vec<LabeledEmbedding> {
        (0..self.spec.ood_test_count)
            .map(|_| self.class_sample(self.spec.confounded_class, Some(false), rng))
            .collect()
    }

    fn train(&self, severity: f64) -> Result<(Vec<LabeledEmbedding>, ModelHead)> {
        let root = RngState::new(self.spec.seed);
        let train = self.sample_train(severity, &mut root.derive(stream::TRAIN));
        let head = train_softmax_head(&train, &self.spec)?;
        Ok((train, head))
    }

    /// Class-free embeddings with and without `concept`.
    pub fn concept_examples(&self, concept: usize, rng: &mut RngState) -> ConceptExamples {
        let n = self.spec.examples_per_concept;
        let mut draw = |with: bool| {
            let mut present = self.background(rng);
            present[concept] = with;
            self.embed(None, &present, rng)
        };
        let positives = (0..n).map(|_| draw(true)).collect();
        let negatives = (0..n).map(|_| draw(false)).collect();
        ConceptExamples {
            name: self.concept_names[concept].clone(),
            positives,
            negatives,
        }
    }

    fn learn_bank(&self, root: &RngState) -> Result<ConceptBank> {
        let examples_rng = root.derive(stream::CONCEPT_EXAMPLES);
        let examples: Vec<ConceptExamples> = (0..self.spec.num_concepts)
            .map(|i| self.concept_examples(i, &mut examples_rng.derive(i as u64)))
            .collect();
        build_bank(
            &examples,
            DEFAULT_ACCURACY_THRESHOLD,
            DEFAULT_SPLIT_FRACTION,
            &root.derive(stream::BANK_TRAINING),
            &SvmConfig::default(),
        )
    }
}

impl ScenarioWorld {
    pub fn spec(&self) -> &ScenarioSpec {
        &self.geometry.spec
    }

    /// Bank name of the confounding concept.
    pub fn target_concept(&self) -> &str {
        &self.geometry.concept_names[self.spec().confounded_concept]
    }

    /// The same geometry, bank and OOD samples with a head retrained at a
    /// different severity.
    pub fn with_severity(&self, severity: f64) -> Result<ScenarioWorld> {
        if !(0.0..=1.0).contains(&severity) {
            return Err(CceError::invalid(format!("severity {severity} outside [0, 1]")));
        }
        let (train_set, head) = self.geometry.train(severity)?;
        Ok(ScenarioWorld {
            severity,
            train_set: Arc::new(train_set),
            trained_head: Arc::new(head),
            ..self.clone()
        })
    }

    /// Severity-0 counterpart sharing the test samples.
    pub fn control(&self) -> Result<ScenarioWorld> {
        self.with_severity(0.0)
    }

    /// Accuracy of the trained head on fresh confounded-class samples drawn
    /// with and without the confounding concept.
    pub fn confounder_accuracy(&self, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = RngState::new(seed);
        let class = self.spec().confounded_class;
        let mut acc = |flag: bool| {
            let hits = (0..n)
                .filter(|_| {
                    let s = self.geometry.class_sample(class, Some(flag), &mut rng);
                    argmax(&self.trained_head.logits(s.embedding.as_slice())) == class
                })
                .count();
            hits as f64 / n as f64
        };
        let with = acc(true);
        (with, acc(false))
    }
}

/// Out-of-distribution samples of the confounded class that the trained
/// head gets wrong, at most `ood_test_count` of them.
pub fn collect_ood_mistakes(world: &ScenarioWorld) -> Vec<(Vector, usize)> {
    world
        .ood_set
        .iter()
        .filter(|s| argmax(&world.trained_head.logits(s.embedding.as_slice())) != s.label)
        .take(world.spec().ood_test_count)
        .map(|s| (s.embedding.clone(), s.label))
        .collect()
}

/// The world with `concept` removed from its bank.
pub fn ablate_concept(world: &ScenarioWorld, concept: usize) -> Result<ScenarioWorld> {
    let name = world
        .geometry
        .concept_names
        .get(concept)
        .ok_or(CceError::IndexOutOfRange {
            index: concept,
            len: world.geometry.concept_names.len(),
        })?;
    let mut out = world.clone();
    out.bank = Arc::new(world.bank.without(name)?);
    Ok(out)
}

/// Multinomial logistic regression by full-batch gradient descent from zero.
fn train_softmax_head(train: &[LabeledEmbedding], spec: &ScenarioSpec) -> Result<ModelHead> {
    let k = spec.num_classes;
    let m = spec.dim;
    let n = train.len() as f64;
    let mut w = Matrix::zeros(k, m);
    let mut b = vec![0.0; k];
    for _ in 0..spec.head_epochs {
        let mut gw = vec![0.0; k * m];
        let mut gb = vec![0.0; k];
        for s in train {
            let x = s.embedding.as_slice();
            let mut z = w.matvec(x);
            for (zi, bi) in z.iter_mut().zip(&b) {
                *zi += bi;
            }
            let mut p = softmax_slice(&z);
            p[s.label] -= 1.0;
            for (c, &pc) in p.iter().enumerate() {
                gb[c] += pc;
                axpy(pc, x, &mut gw[c * m..(c + 1) * m]);
            }
        }
        let lr = spec.head_learning_rate / n;
        for c in 0..k {
            for (wi, g) in w.row_mut(c).iter_mut().zip(&gw[c * m..(c + 1) * m]) {
                *wi -= lr * g;
            }
            b[c] -= lr * gb[c];
        }
    }
    let head = ModelHead::linear(
        Matrix::new(k, m, w.as_slice().to_vec())?,
        Vector::checked(b, spec.head_epochs, "head bias")?,
    )?;
    let correct = train
        .iter()
        .filter(|s| argmax(&head.logits(s.embedding.as_slice())) == s.label)
        .count();
    let acc = correct as f64 / n;
    if acc <= 0.6 {
        return Err(CceError::DegenerateScenario(format!(
            "head reached only {acc:.3} training accuracy"
        )));
    }
    Ok(head)
}
