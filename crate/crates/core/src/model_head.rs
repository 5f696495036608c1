//! The differentiable top of the network: affine layers with optional ReLU,
//! ending in logits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CceError, Result};
use crate::numerics::{argmax, cross_entropy_slice, softmax_slice, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out_dim x in_dim`
    pub weights: Matrix,
    pub bias: Vector,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vector, activation: Activation) -> Result<Self> {
        if bias.dim() != weights.rows() {
            return Err(CceError::invalid(format!(
                "bias has {} entries for a layer with {} outputs",
                bias.dim(),
                weights.rows()
            )));
        }
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    fn apply(&self, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut pre = self.weights.matvec(input);
        for (p, b) in pre.iter_mut().zip(self.bias.iter()) {
            *p += b;
        }
        let post = match self.activation {
            Activation::Relu => pre.iter().map(|&x| x.max(0.0)).collect(),
            Activation::None => pre.clone(),
        };
        (pre, post)
    }
}

/// Model output for one embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vector,
    pub probs: Vector,
    pub predicted_class: usize,
    pub confidence: f64,
}

impl Prediction {
    pub(crate) fn from_logits(logits: Vec<f64>) -> Result<Self> {
        let logits = Vector::checked(logits, 0, "logits")?;
        let probs = Vector::from_finite(softmax_slice(logits.as_slice()));
        let predicted_class = argmax(probs.as_slice());
        let confidence = probs[predicted_class];
        Ok(Prediction {
            logits,
            probs,
            predicted_class,
            confidence,
        })
    }
}

/// An affine/ReLU stack `ℝ^m → ℝ^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HeadFile", into = "HeadFile")]
pub struct ModelHead {
    layers: Vec<Layer>,
}

impl ModelHead {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| CceError::invalid("a head needs at least one layer"))?;
        if last.activation != Activation::None {
            return Err(CceError::invalid("the final layer must produce raw logits"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].weights.rows() != pair[1].weights.cols() {
                return Err(CceError::invalid(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].weights.rows(),
                    i + 1,
                    pair[1].weights.cols()
                )));
            }
        }
        Ok(ModelHead { layers })
    }

    /// Single affine layer, the usual fine-tuned classification head.
    pub fn linear(weights: Matrix, bias: Vector) -> Result<Self> {
        ModelHead::new(vec![Layer::new(weights, bias, Activation::None)?])
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.rows()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward(&self, e: &Vector) -> Result<Prediction> {
        self.check_input(e.dim())?;
        Prediction::from_logits(self.logits(e.as_slice()))
    }

    /// Raw logits. The caller guarantees the input dimension.
    pub(crate) fn logits(&self, e: &[f64]) -> Vec<f64> {
        let mut h = e.to_vec();
        for layer in &self.layers {
            h = layer.apply(&h).1;
        }
        h
    }

    /// Cross-entropy at `label` and its gradient with respect to the input.
    pub fn grad_wrt_input(&self, e: &Vector, label: usize) -> Result<(f64, Vector)> {
        self.check_input(e.dim())?;
        self.check_label(label)?;
        let (loss, grad) = self.loss_and_input_grad(e.as_slice(), label);
        if !loss.is_finite() {
            return Err(CceError::NumericalFailure {
                step: 0,
                what: "non-finite loss".into(),
            });
        }
        Ok((loss, Vector::checked(grad, 0, "input gradient")?))
    }

    /// Gradient of logit `class` with respect to the input.
    pub fn logit_grad(&self, e: &Vector, class: usize) -> Result<Vector> {
        self.check_input(e.dim())?;
        self.check_label(class)?;
        let (acts, _) = self.activations(e.as_slice());
        let mut seed = vec![0.0; self.num_classes()];
        seed[class] = 1.0;
        Vector::checked(self.backprop(&acts, seed), 0, "logit gradient")
    }

    pub(crate) fn loss_and_input_grad(&self, e: &[f64], label: usize) -> (f64, Vec<f64>) {
        let (acts, logits) = self.activations(e);
        let (loss, seed) = cross_entropy_slice(&logits, label);
        (loss, self.backprop(&acts, seed))
    }

    /// Pre-activations of every layer plus the final logits.
    fn activations(&self, e: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        let mut h = e.to_vec();
        for layer in &self.layers {
            let (pre, post) = layer.apply(&h);
            pre_acts.push(pre);
            h = post;
        }
        (pre_acts, h)
    }

    /// Pulls a gradient on the logits back to the input. ReLU has zero
    /// derivative at zero.
    fn backprop(&self, pre_acts: &[Vec<f64>], mut grad: Vec<f64>) -> Vec<f64> {
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                for (g, &z) in grad.iter_mut().zip(&pre_acts[i]) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            grad = layer.weights.matvec_t(&grad);
        }
        grad
    }

    pub(crate) fn check_input(&self, dim: usize) -> Result<()> {
        if dim == self.input_dim() {
            Ok(())
        } else {
            Err(CceError::invalid(format!(
                "embedding has dimension {dim}, head expects {}",
                self.input_dim()
            )))
        }
    }

    pub(crate) fn check_label(&self, label: usize) -> Result<()> {
        if label < self.num_classes() {
            Ok(())
        } else {
            Err(CceError::IndexOutOfRange {
                index: label,
                len: self.num_classes(),
            })
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// On-disk head layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadFile {
    pub input_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFile {
    pub rows: usize,
    pub cols: usize,
    pub weights_row_major: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl TryFrom<HeadFile> for ModelHead {
    type Error = CceError;

    fn try_from(file: HeadFile) -> Result<Self> {
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                Layer::new(
                    Matrix::new(l.rows, l.cols, l.weights_row_major)?,
                    Vector::new(l.bias)?,
                    l.activation,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let head = ModelHead::new(layers)?;
        if head.input_dim() != file.input_dim || head.num_classes() != file.num_classes {
            return Err(CceError::invalid(format!(
                "head declares {}→{} but its layers give {}→{}",
                file.input_dim,
                file.num_classes,
                head.input_dim(),
                head.num_classes()
            )));
        }
        Ok(head)
    }
}

impl From<ModelHead> for HeadFile {
    fn from(head: ModelHead) -> Self {
        HeadFile {
            input_dim: head.input_dim(),
            num_classes: head.num_classes(),
            layers: head
                .layers
                .into_iter()
                .map(|l| LayerFile {
                    rows: l.weights.rows(),
                    cols: l.weights.cols(),
                    weights_row_major: l.weights.as_slice().to_vec(),
                    bias: l.bias.into_vec(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}
