use rayon::prelude::*;

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::nn::{self, optimizer_step, MomentState, ParamBlock};
use crate::raster::Canvas;
use crate::rng::XorShift64Star;

use super::{add, ClassPrototypes, ConvEncoder, EncoderCotangent, EncoderGrads, EncoderSpec, ImageEncoder};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub step_size: f64,
    /// Logits are `scale · cos(embedding, class row)`.
    pub logit_scale: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 30,
            seed: 0,
            batch_size: 16,
            step_size: 3e-3,
            logit_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEncoder {
    pub encoder: ConvEncoder,
    pub prototypes: ClassPrototypes,
    /// Top-1 accuracy on the training corpus after the last epoch.
    pub train_accuracy: f64,
    /// Mean cross-entropy of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Gradients of the cosine-classifier objective.
#[derive(Debug, Clone)]
pub struct ClassifierGrads {
    pub encoder: EncoderGrads,
    pub head: Vec<f64>,
}

/// Summed softmax cross-entropy of a cosine classifier over `images`, with
/// `head` holding one unnormalized row per class.
pub fn classifier_loss(
    encoder: &ConvEncoder,
    head: &[f64],
    images: &[&Canvas],
    labels: &[usize],
    logit_scale: f64,
) -> Result<(f64, usize, ClassifierGrads)> {
    let dim = encoder.spec.embedding_dim;
    let classes = head.len() / dim;
    let norms: Vec<f64> = head.chunks_exact(dim).map(nn::l2_norm).collect();
    let per: Vec<(f64, bool, EncoderGrads, Vec<f64>)> = images
        .par_iter()
        .zip(labels.par_iter())
        .map(|(img, &y)| -> Result<_> {
            let act = encoder.encode(img)?;
            let e = &act.embedding;
            let logits: Vec<f64> = (0..classes)
                .map(|c| logit_scale * nn::dot(&head[c * dim..(c + 1) * dim], e) / norms[c])
                .collect();
            let p = nn::softmax(&logits);
            let loss = -p[y].max(1e-300).ln();
            let best = (0..classes).fold(0, |b, c| if logits[c] > logits[b] { c } else { b });
            let mut de = vec![0.0; dim];
            let mut dhead = vec![0.0; head.len()];
            for c in 0..classes {
                let dl = p[c] - if c == y { 1.0 } else { 0.0 };
                let row = &head[c * dim..(c + 1) * dim];
                let u: Vec<f64> = row.iter().map(|v| v / norms[c]).collect();
                let ue = nn::dot(&u, e);
                for i in 0..dim {
                    de[i] += logit_scale * dl * u[i];
                    // d(u·e)/dW = (e − u(u·e)) / |W|
                    dhead[c * dim + i] = logit_scale * dl * (e[i] - u[i] * ue) / norms[c];
                }
            }
            let cot = EncoderCotangent {
                embedding: Some(de),
                ..Default::default()
            };
            let (_, g) = encoder.backward(&act, &cot, false, true);
            Ok((loss, best == y, g.expect("parameter gradients requested"), dhead))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = per.into_iter();
    let (mut loss, first_ok, mut enc_grads, mut head_grads) = iter.next().ok_or_else(|| Error::domain("empty batch"))?;
    let mut correct = usize::from(first_ok);
    for (l, ok, g, h) in iter {
        loss += l;
        correct += usize::from(ok);
        enc_grads.add_assign(&g);
        add(&mut head_grads, &h);
    }
    Ok((
        loss,
        correct,
        ClassifierGrads {
            encoder: enc_grads,
            head: head_grads,
        },
    ))
}

pub(crate) fn check_corpus(corpus: &LabeledCorpus, min_per_class: usize) -> Result<()> {
    let k = corpus.class_names.len();
    if k < 2 {
        return Err(Error::domain("training needs at least 2 classes"));
    }
    let mut counts = vec![0usize; k];
    for &l in &corpus.labels {
        if l >= k {
            return Err(Error::domain(format!("label {l} out of range")));
        }
        counts[l] += 1;
    }
    if let Some((c, n)) = counts.iter().enumerate().find(|(_, &n)| n < min_per_class) {
        return Err(Error::domain(format!(
            "class {} has {n} images, at least {min_per_class} required",
            corpus.class_names[c]
        )));
    }
    Ok(())
}

/// Trains the reference encoder and a cosine class head by mini-batch
/// cross-entropy. Deterministic for a given seed.
pub fn train_reference_encoder(corpus: &LabeledCorpus, spec: EncoderSpec, opts: &TrainOptions) -> Result<TrainedEncoder> {
    check_corpus(corpus, 20)?;
    let classes = corpus.class_names.len();
    let mut encoder = ConvEncoder::new(spec, opts.seed)?;
    let dim = encoder.spec.embedding_dim;
    let mut head_rng = XorShift64Star::stream(opts.seed, "encoder.head");
    let mut head = nn::init_normal(&mut head_rng, classes * dim, 1.0);
    let mut order_rng = XorShift64Star::stream(opts.seed, "encoder.order");
    let mut state = MomentState::default();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(opts.batch_size.max(1)) {
            let images: Vec<&Canvas> = batch.iter().map(|&i| &corpus.images[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| corpus.labels[i]).collect();
            let (loss, _, mut grads) = classifier_loss(&encoder, &head, &images, &labels, opts.logit_scale)?;
            total += loss;
            let scale = 1.0 / batch.len() as f64;
            let mut flat: Vec<Vec<f64>> = Vec::new();
            for g in grads.encoder.convs.drain(..) {
                flat.push(g.weight);
                flat.push(g.bias);
            }
            flat.push(std::mem::take(&mut grads.encoder.embed.weight));
            flat.push(std::mem::take(&mut grads.encoder.embed.bias));
            flat.push(std::mem::take(&mut grads.head));
            for f in &mut flat {
                f.iter_mut().for_each(|v| *v *= scale);
            }
            let mut slices = encoder.param_slices_mut();
            let mut blocks: Vec<ParamBlock<'_>> = slices
                .iter_mut()
                .zip(&flat)
                .map(|((name, vals), g)| ParamBlock::new(name.as_str(), vals, g))
                .collect();
            blocks.push(ParamBlock::new("head", &mut head, flat.last().unwrap()));
            optimizer_step(&mut blocks, &mut state, opts.step_size)?;
        }
        let mean = total / corpus.len() as f64;
        log::debug!("encoder epoch {epoch}: loss {mean:.4}");
        epoch_losses.push(mean);
    }
    let names = corpus.class_names.clone();
    let vectors = head.chunks_exact(dim).map(<[f64]>::to_vec).collect();
    let prototypes = ClassPrototypes::new(names, vectors)?;
    let correct = corpus
        .images
        .par_iter()
        .zip(corpus.labels.par_iter())
        .map(|(img, &y)| -> Result<usize> {
            let act = encoder.encode(img)?;
            let top = super::classify_embedding(&act.embedding, &prototypes, 1)?;
            Ok(usize::from(top[0].0 == prototypes.names[y]))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(TrainedEncoder {
        encoder,
        prototypes,
        train_accuracy: correct as f64 / corpus.len() as f64,
        epoch_losses,
    })
}
