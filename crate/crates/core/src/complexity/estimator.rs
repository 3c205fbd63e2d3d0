use std::path::Path;

use rayon::prelude::*;

use super::ComplexityLevel;
use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::nn::{self, optimizer_step, Conv2dGrad, Linear, LinearGrad, MomentState, ParamBlock};
use crate::perceptual::{add, global_pool, global_pool_backward, join, ConvBody, TrainOptions};
use crate::raster::Canvas;
use crate::rng::XorShift64Star;
use crate::weights::{self, Manifest, WeightReader, WeightWriter};

/// Convolutional body, global average pooling and a linear five-way head.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityEstimator {
    pub body: ConvBody,
    pub head: Linear,
}

/// Result of [`train_estimator`].
#[derive(Debug, Clone)]
pub struct EstimatorTraining {
    pub estimator: ComplexityEstimator,
    /// Mean cross-entropy over the training split before the first update.
    pub initial_loss: f64,
    /// Mean cross-entropy after each epoch.
    pub epoch_losses: Vec<f64>,
    pub validation_accuracy: f64,
    /// Indices of the corpus images held out for validation.
    pub validation: Vec<usize>,
}

/// Index of the largest logit; ties go to the lowest level.
pub(crate) fn argmax(logits: &[f64]) -> usize {
    (0..logits.len()).fold(0, |b, i| if logits[i] > logits[b] { i } else { b })
}

impl ComplexityEstimator {
    pub fn new(input_size: usize, stages: &[usize], seed: u64) -> Result<Self> {
        if stages.is_empty() || input_size == 0 {
            return Err(Error::config("estimator needs a positive input size and at least one stage"));
        }
        let mut rng = XorShift64Star::stream(seed, "estimator.init");
        let body = ConvBody::new(input_size, stages, &mut rng);
        let head = Linear::new(body.out_channels(), ComplexityLevel::COUNT, &mut rng);
        Ok(Self { body, head })
    }

    pub fn check(&self) -> Result<()> {
        self.body.check()?;
        self.head.check()?;
        if self.head.inputs != self.body.out_channels() || self.head.outputs != ComplexityLevel::COUNT {
            return Err(Error::config("estimator head does not match its body"));
        }
        Ok(())
    }

    pub fn logits(&self, image: &Canvas) -> Vec<f64> {
        let (_, layers) = self.body.forward(image);
        self.head.forward(&global_pool(layers.last().expect("estimator has stages")))
    }

    pub fn estimate(&self, image: &Canvas) -> ComplexityLevel {
        level_from_logits(&self.logits(image))
    }

    fn sample(&self, image: &Canvas, label: usize) -> (f64, bool, Vec<Conv2dGrad>, LinearGrad) {
        let (input, layers) = self.body.forward(image);
        let last = layers.last().expect("estimator has stages");
        let pooled = global_pool(last);
        let logits = self.head.forward(&pooled);
        let p = nn::softmax(&logits);
        let mut dl = p.clone();
        dl[label] -= 1.0;
        let (dpooled, head_grad) = self.head.backward(&pooled, &dl);
        let mut d_layers: Vec<_> = layers.iter().map(|l| nn::Tensor3::zeros(l.c, l.h, l.w)).collect();
        d_layers[layers.len() - 1] = global_pool_backward(&dpooled, last.c, last.h, last.w);
        let (_, conv_grads) = self.body.backward(&input, &layers, d_layers, false, true);
        (-p[label].max(1e-300).ln(), argmax(&logits) == label, conv_grads, head_grad)
    }

    fn param_slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (i, c) in self.body.convs.iter_mut().enumerate() {
            out.push((format!("stage{i}.weight"), c.weight.as_mut_slice()));
            out.push((format!("stage{i}.bias"), c.bias.as_mut_slice()));
        }
        out.push(("head.weight".into(), self.head.weight.as_mut_slice()));
        out.push(("head.bias".into(), self.head.bias.as_mut_slice()));
        out
    }

    /// Writes the `PEST` container: `"PEST"`, `u32 version`, `u32 stages`,
    /// each stage as in `PENC`, then the head as `u32 rows, u32 cols`,
    /// weights, bias.
    pub fn save(&self, path: &Path, seed: u64, validation_accuracy: Option<f64>) -> Result<()> {
        let mut w = WeightWriter::new(b"PEST");
        w.u32(self.body.convs.len() as u32);
        for c in &self.body.convs {
            w.conv(c);
        }
        w.linear(&self.head);
        let mut m = Manifest::default();
        m.set("format", "PEST");
        m.set("input_size", self.body.input_size);
        m.set("stages", join(&self.body.convs.iter().map(|c| c.out_ch).collect::<Vec<_>>()));
        m.set("levels", ComplexityLevel::COUNT);
        m.set("seed", seed);
        if let Some(a) = validation_accuracy {
            m.set("validation_accuracy", format!("{a:.4}"));
        }
        weights::write_container(path, &w.finish(), &m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (bytes, manifest) = weights::read_container(path)?;
        let mut r = WeightReader::new(&bytes, b"PEST")?;
        let n = r.u32("stage count")? as usize;
        let convs = (0..n)
            .map(|i| r.conv(2, &format!("stage {i}")))
            .collect::<Result<Vec<_>>>()?;
        let head = r.linear("head")?;
        r.finish()?;
        let est = Self {
            body: ConvBody {
                input_size: manifest.get_parsed("input_size")?,
                convs,
            },
            head,
        };
        est.check()?;
        Ok(est)
    }
}

/// Argmax over five logits with ties to the lowest level.
pub fn level_from_logits(logits: &[f64]) -> ComplexityLevel {
    ComplexityLevel::new(argmax(logits).min(ComplexityLevel::COUNT - 1)).expect("level in range")
}

/// Trains on a five-class corpus (labels are levels). Every fifth image of
/// each level is held out for validation.
pub fn train_estimator(corpus: &LabeledCorpus, input_size: usize, stages: &[usize], opts: &TrainOptions) -> Result<EstimatorTraining> {
    if corpus.class_names.len() != ComplexityLevel::COUNT {
        return Err(Error::domain("estimator corpus needs exactly five levels"));
    }
    let mut seen = [0usize; ComplexityLevel::COUNT];
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (i, &l) in corpus.labels.iter().enumerate() {
        if l >= ComplexityLevel::COUNT {
            return Err(Error::domain(format!("label {l} is not a complexity level")));
        }
        seen[l] += 1;
        if seen[l] % 5 == 0 {
            validation.push(i);
        } else {
            train.push(i);
        }
    }
    if let Some(l) = seen.iter().position(|&n| n == 0) {
        return Err(Error::domain(format!("complexity level {l} has no images")));
    }
    let mut est = ComplexityEstimator::new(input_size, stages, opts.seed)?;
    let mean_loss = |est: &ComplexityEstimator, idx: &[usize]| -> f64 {
        idx.par_iter()
            .map(|&i| {
                let p = nn::softmax(&est.logits(&corpus.images[i]));
                -p[corpus.labels[i]].max(1e-300).ln()
            })
            .collect::<Vec<_>>()
            .iter()
            .sum::<f64>()
            / idx.len().max(1) as f64
    };
    let initial_loss = mean_loss(&est, &train);
    let mut rng = XorShift64Star::stream(opts.seed, "estimator.order");
    let mut state = MomentState::default();
    let mut order = train.clone();
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(opts.batch_size.max(1)) {
            let per: Vec<_> = batch
                .par_iter()
                .map(|&i| est.sample(&corpus.images[i], corpus.labels[i]))
                .collect();
            let mut iter = per.into_iter();
            let (_, _, mut convs, mut head) = iter.next().expect("non-empty batch");
            for (_, _, c, h) in iter {
                for (a, b) in convs.iter_mut().zip(&c) {
                    add(&mut a.weight, &b.weight);
                    add(&mut a.bias, &b.bias);
                }
                add(&mut head.weight, &h.weight);
                add(&mut head.bias, &h.bias);
            }
            let scale = 1.0 / batch.len() as f64;
            let mut flat: Vec<Vec<f64>> = Vec::new();
            for g in convs {
                flat.push(g.weight);
                flat.push(g.bias);
            }
            flat.push(head.weight);
            flat.push(head.bias);
            for f in &mut flat {
                f.iter_mut().for_each(|v| *v *= scale);
            }
            let mut slices = est.param_slices_mut();
            let mut blocks: Vec<ParamBlock<'_>> = slices
                .iter_mut()
                .zip(&flat)
                .map(|((name, vals), g)| ParamBlock::new(name.as_str(), vals, g))
                .collect();
            optimizer_step(&mut blocks, &mut state, opts.step_size)?;
        }
        let loss = mean_loss(&est, &train);
        log::debug!("estimator epoch {epoch}: loss {loss:.4}");
        epoch_losses.push(loss);
    }
    let correct = validation
        .par_iter()
        .filter(|&&i| est.estimate(&corpus.images[i]).get() == corpus.labels[i])
        .count();
    Ok(EstimatorTraining {
        validation_accuracy: correct as f64 / validation.len() as f64,
        estimator: est,
        initial_loss,
        epoch_losses,
        validation,
    })
}
