//! Image encoders and the recognition-driven losses built on them.
//!
//! Any differentiable encoder can drive painting through [`ImageEncoder`];
//! [`ConvEncoder`] is the in-repo reference implementation.

mod encoder;
mod train;

use std::collections::HashSet;

pub use encoder::{ConvBody, ConvEncoder, EncoderGrads, EncoderSpec};
pub(crate) use encoder::{add, global_pool, global_pool_backward, join};
pub use train::{train_reference_encoder, TrainOptions, TrainedEncoder};

use crate::error::{Error, Result};
use crate::nn::{self, Tensor3};
use crate::palette::Palette;
use crate::raster::Canvas;

/// Pre-normalization embeddings shorter than this are treated as this long.
pub(crate) const MIN_EMBEDDING_NORM: f64 = 1e-12;

/// Forward results of an encoder pass, including what its reverse pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    /// Post-nonlinearity feature map of each stage.
    pub layers: Vec<Tensor3>,
    /// Global average of the last stage.
    pub pooled: Vec<f64>,
    /// Embedding before L2 normalization.
    pub pre_embedding: Vec<f64>,
    /// Unit-norm embedding.
    pub embedding: Vec<f64>,
    pub(crate) input: Tensor3,
    pub(crate) source_width: usize,
    pub(crate) source_height: usize,
}

/// Cotangents flowing into an encoder's outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncoderCotangent {
    /// `(stage index, cotangent)` pairs.
    pub layers: Vec<(usize, Tensor3)>,
    pub embedding: Option<Vec<f64>>,
    pub pre_embedding: Option<Vec<f64>>,
}

pub trait ImageEncoder: Send + Sync {
    fn stages(&self) -> usize;
    fn embedding_dim(&self) -> usize;
    fn encode(&self, image: &Canvas) -> Result<Activations>;
    /// Gradient of `⟨outputs, cot⟩` with respect to the image, in canvas layout.
    fn input_gradient(&self, act: &Activations, cot: &EncoderCotangent) -> Result<Vec<f64>>;
}

/// Cosine distance between final embeddings, `1 − ⟨φ(I), φ(S)⟩`.
pub fn semantic_loss(target: &Activations, painting: &Activations) -> f64 {
    1.0 - nn::dot(&target.embedding, &painting.embedding)
}

/// Stages compared by the structure loss: the second and third.
pub const DEFAULT_STRUCTURE_LAYERS: [usize; 2] = [1, 2];

/// `Σ_l mean((φ_l(S) − φ_l(I))²)` over the selected stage indices.
pub fn structure_loss(target: &Activations, painting: &Activations, layer_set: &[usize]) -> Result<f64> {
    check_layers(layer_set, target.layers.len())?;
    Ok(layer_set
        .iter()
        .map(|&l| {
            let (a, b) = (&target.layers[l].data, &painting.layers[l].data);
            a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>() / a.len() as f64
        })
        .sum())
}

fn check_layers(layer_set: &[usize], available: usize) -> Result<()> {
    if layer_set.is_empty() {
        return Err(Error::config("structure loss needs at least one layer"));
    }
    if let Some(l) = layer_set.iter().find(|&&l| l >= available) {
        return Err(Error::config(format!("layer {l} not available (encoder has {available} stages)")));
    }
    Ok(())
}

/// Channel-wise mean squared error between index-aligned palettes.
pub fn colour_loss(p: &Palette, p0: &Palette) -> Result<f64> {
    if p.len() != p0.len() {
        return Err(Error::domain(format!("palette sizes differ: {} vs {}", p.len(), p0.len())));
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = p
        .entries
        .iter()
        .zip(&p0.entries)
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]) * (a[c] - b[c])))
        .sum();
    Ok(s / (3 * p.len()) as f64)
}

/// d colour_loss / d p.
pub fn colour_loss_grad(p: &Palette, p0: &Palette) -> Vec<[f64; 3]> {
    let k = 2.0 / (3 * p.len().max(1)) as f64;
    p.entries
        .iter()
        .zip(&p0.entries)
        .map(|(a, b)| [k * (a[0] - b[0]), k * (a[1] - b[1]), k * (a[2] - b[2])])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub structure: f64,
    pub semantic: f64,
    pub colour: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            structure: 1.0,
            semantic: 1.0,
            colour: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.structure, self.semantic, self.colour].iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::domain("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// One evaluation of the painting objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub structure: f64,
    pub semantic: f64,
    pub colour: f64,
    pub total: f64,
}

/// `λ₁ L_structure + λ₂ L_semantic + λ₃ L_colour`.
pub fn total_loss(structure: f64, semantic: f64, colour: f64, weights: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        structure,
        semantic,
        colour,
        total: weights.structure * structure + weights.semantic * semantic + weights.colour * colour,
    }
}

/// Full objective on canvases and palettes.
pub fn evaluate_losses(
    encoder: &dyn ImageEncoder,
    target: &Canvas,
    painting: &Canvas,
    p: &Palette,
    p0: &Palette,
    weights: &LossWeights,
    layer_set: &[usize],
) -> Result<LossBreakdown> {
    weights.validate()?;
    let a = encoder.encode(target)?;
    let b = encoder.encode(painting)?;
    Ok(total_loss(
        structure_loss(&a, &b, layer_set)?,
        semantic_loss(&a, &b),
        colour_loss(p, p0)?,
        weights,
    ))
}

/// Cotangent of `λ₁ L_structure + λ₂ L_semantic` with respect to the
/// painting's encoder outputs.
pub fn perceptual_cotangent(
    target: &Activations,
    painting: &Activations,
    weights: &LossWeights,
    layer_set: &[usize],
) -> EncoderCotangent {
    let layers = layer_set
        .iter()
        .map(|&l| {
            let (a, b) = (&target.layers[l], &painting.layers[l]);
            let k = 2.0 * weights.structure / a.len() as f64;
            let data = a.data.iter().zip(&b.data).map(|(x, y)| k * (y - x)).collect();
            (l, Tensor3 { c: b.c, h: b.h, w: b.w, data })
        })
        .collect();
    EncoderCotangent {
        layers,
        embedding: Some(target.embedding.iter().map(|v| -weights.semantic * v).collect()),
        pre_embedding: None,
    }
}

/// Per-class unit vectors in embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototypes {
    pub names: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl ClassPrototypes {
    /// Normalizes every vector; names must be unique.
    pub fn new(names: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != vectors.len() {
            return Err(Error::domain("prototype names and vectors differ in count"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::domain(format!("duplicate class name {dup}")));
        }
        let vectors = vectors
            .into_iter()
            .map(|v| {
                let n = nn::l2_norm(&v);
                if n == 0.0 || !n.is_finite() {
                    return Err(Error::domain("prototype vector has zero or non-finite length"));
                }
                Ok(v.into_iter().map(|x| x / n).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { names, vectors })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Ranks classes by cosine similarity to `embedding`; equal similarities are
/// ordered by class name.
pub fn classify_embedding(embedding: &[f64], prototypes: &ClassPrototypes, k: usize) -> Result<Vec<(String, f64)>> {
    if prototypes.is_empty() {
        return Err(Error::domain("no class prototypes"));
    }
    if k > prototypes.len() {
        return Err(Error::domain(format!("k = {k} exceeds {} classes", prototypes.len())));
    }
    let mut ranked: Vec<(String, f64)> = prototypes
        .names
        .iter()
        .zip(&prototypes.vectors)
        .map(|(n, v)| (n.clone(), nn::dot(embedding, v)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

pub fn classify(image: &Canvas, encoder: &dyn ImageEncoder, prototypes: &ClassPrototypes, k: usize) -> Result<Vec<(String, f64)>> {
    let act = encoder.encode(image)?;
    classify_embedding(&act.embedding, prototypes, k)
}

#[cfg(test)]
mod tests;
