//! Command implementations behind the `strokepaint` binary. Each command is
//! deterministic given its inputs, config and seed, and writes only into the
//! configured output directory.
//!
//! Exit codes: 0 success, 1 verification failure, 2 unreadable input, bad
//! annotations or invalid config, 3 missing weights, 4 non-finite loss.

mod config;

pub use config::{Config, CurationConfig, PaletteNetworkConfig, QuantConfig, TrainingConfig, WeightPaths};

use std::path::{Path, PathBuf};

use crate::codec;
use crate::complexity::{self, category_filter, composition_filter, ComplexityEstimator, ConditionMode, CurationRow};
use crate::corpus::{complexity_corpus, image_files, shapes_corpus, LabeledCorpus};
use crate::error::{Error, Result};
use crate::painter::{paint, PaintingResult};
use crate::palette::PaletteNetwork;
use crate::perceptual::{train_reference_encoder, ClassPrototypes, ConvEncoder, ImageEncoder};
use crate::raster::{self, Canvas};
use crate::verify::{self, VerifyReport};

/// Files `paint` writes, in order.
pub const PAINT_OUTPUTS: [&str; 7] = [
    "S_black.png",
    "S_colour.png",
    "S.png",
    "painting.svg",
    "painting.vskc",
    "losses.csv",
    "palette.txt",
];

/// Files `paint --dump-maps` adds.
pub const MAP_OUTPUTS: [&str; 3] = ["edges.png", "saliency.png", "attention.png"];

pub const EXIT_VERIFY_FAILED: i32 = 1;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingWeights(_) => 3,
        Error::NonFinite { .. } => 4,
        _ => 2,
    }
}

/// Thread count requested through `VSKC_THREADS`, if any.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("VSKC_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(format!("VSKC_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn load_encoder(cfg: &Config) -> Result<(ConvEncoder, Option<ClassPrototypes>)> {
    let path = cfg
        .weights
        .encoder
        .as_ref()
        .ok_or_else(|| Error::MissingWeights("weights.encoder is not set".into()))?;
    if !path.is_file() {
        return Err(Error::MissingWeights(format!("{} does not exist", path.display())));
    }
    ConvEncoder::load(path)
}

fn load_palette_network(cfg: &Config) -> Result<PaletteNetwork> {
    match &cfg.weights.palette {
        Some(p) if !p.is_file() => Err(Error::MissingWeights(format!("{} does not exist", p.display()))),
        Some(p) => PaletteNetwork::load(p),
        None => PaletteNetwork::new(cfg.palette_spec(), cfg.seed),
    }
}

/// Machine-readable result of `paint`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PaintSummary {
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub bits: usize,
    pub bpp: f64,
}

/// Paints `image` and writes [`PAINT_OUTPUTS`] into `cfg.out`. Weights and
/// the image are read before anything is written.
pub fn cmd_paint(image: &Path, cfg: &Config, dump_maps: bool) -> Result<(PaintSummary, PaintingResult)> {
    cfg.validate()?;
    let (encoder, _) = load_encoder(cfg)?;
    let mut net = load_palette_network(cfg)?;
    let target = Canvas::load(image)?;
    let result = paint(&target, &cfg.painting, &encoder, &mut net)?;
    let stream = codec::encode(&result, &cfg.quant_spec())?;
    let (w, h) = (result.width(), result.height());
    let summary = PaintSummary {
        iterations: result.loss_trace.len(),
        initial_loss: result.loss_trace[0].total,
        final_loss: result.loss_trace.last().expect("at least one iteration").total,
        bits: stream.len_bits(),
        bpp: codec::bpp(&stream, w, h)?,
    };

    let out = &cfg.out;
    create_dir(out)?;
    result.s_black.save_png(out.join(PAINT_OUTPUTS[0]))?;
    result.s_colour.save_png(out.join(PAINT_OUTPUTS[1]))?;
    result.s.save_png(out.join(PAINT_OUTPUTS[2]))?;
    write(out.join(PAINT_OUTPUTS[3]), &codec::export_svg(&result))?;
    stream.save(out.join(PAINT_OUTPUTS[4]))?;
    write(out.join(PAINT_OUTPUTS[5]), &result.loss_csv())?;
    write(out.join(PAINT_OUTPUTS[6]), &result.palette.to_text())?;
    if dump_maps {
        result.maps.edges.save_png(out.join(MAP_OUTPUTS[0]))?;
        result.maps.saliency.save_png(out.join(MAP_OUTPUTS[1]))?;
        result.maps.attention.map().save_png(out.join(MAP_OUTPUTS[2]))?;
    }
    Ok((summary, result))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CurateSummary {
    pub images: usize,
    pub passed_category: usize,
    pub selected: usize,
    pub unknown_categories: usize,
}

pub const CURATION_MANIFEST: &str = "manifest.txt";
pub const CURATION_CSV: &str = "curation.csv";

/// Category criterion, then composition criterion against the gallery, then
/// the optional minimum complexity level. Writes the manifest of selected
/// images and the per-image CSV.
pub fn cmd_curate(cfg: &Config) -> Result<CurateSummary> {
    cfg.validate()?;
    let cur = &cfg.curation;
    let annotations = cur
        .annotations
        .as_ref()
        .ok_or_else(|| Error::config("curation.annotations is not set"))?;
    let (encoder, _) = load_encoder(cfg)?;
    let estimator = match &cfg.weights.estimator {
        Some(p) => Some(ComplexityEstimator::load(p)?),
        None if cur.min_level.is_some() => {
            return Err(Error::MissingWeights("curation.min_level needs weights.estimator".into()))
        }
        None => None,
    };
    let gallery_dir = cur.gallery.as_ref().ok_or_else(|| Error::config("curation.gallery is not set"))?;
    let mode: ConditionMode = cur.condition_mode.parse()?;
    let (images, _) = complexity::load_coco(annotations)?;
    let root = cur
        .images
        .clone()
        .unwrap_or_else(|| annotations.parent().map(Path::to_path_buf).unwrap_or_default());

    let selection = category_filter(&images, &cur.categories, &mode);
    let load = |name: &str| Canvas::load(root.join(name));
    let mut hits = vec![0usize; images.len()];
    if !selection.selected.is_empty() {
        let gallery = image_files(gallery_dir)?
            .iter()
            .map(|p| Ok(encoder.encode(&Canvas::load(p)?)?.embedding))
            .collect::<Result<Vec<_>>>()?;
        let candidates = selection
            .selected
            .iter()
            .map(|&i| Ok(encoder.encode(&load(&images[i].file_name)?)?.embedding))
            .collect::<Result<Vec<_>>>()?;
        let (_, h) = composition_filter(&candidates, &gallery, cur.composition_k)?;
        for (&i, n) in selection.selected.iter().zip(h) {
            hits[i] = n;
        }
    }
    let mut rows = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let level = match &estimator {
            Some(e) => Some(e.estimate(&load(&img.file_name)?)),
            None => None,
        };
        let level_ok = match (cur.min_level, level) {
            (Some(min), Some(l)) => l.get() >= min,
            _ => true,
        };
        rows.push(CurationRow {
            path: img.file_name.clone(),
            flags: selection.flags[i],
            composition_hits: hits[i],
            level,
            selected: hits[i] > 0 && level_ok,
        });
    }
    create_dir(&cfg.out)?;
    complexity::write_curation(&cfg.out.join(CURATION_MANIFEST), &cfg.out.join(CURATION_CSV), &rows)?;
    Ok(CurateSummary {
        images: images.len(),
        passed_category: selection.selected.len(),
        selected: rows.iter().filter(|r| r.selected).count(),
        unknown_categories: selection.unknown_categories,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainTarget {
    Encoder,
    Estimator,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrainSummary {
    pub weights: PathBuf,
    pub images: usize,
    /// Train top-1 for the encoder, validation accuracy for the estimator.
    pub accuracy: f64,
    pub epoch_losses: Vec<f64>,
}

pub const ENCODER_WEIGHTS: &str = "encoder.penc";
pub const ESTIMATOR_WEIGHTS: &str = "estimator.pest";

pub fn cmd_train(target: TrainTarget, cfg: &Config) -> Result<TrainSummary> {
    cfg.validate()?;
    let t = &cfg.training;
    let corpus = match (&t.corpus, target) {
        (Some(dir), _) => LabeledCorpus::load_dir(dir)?,
        (None, TrainTarget::Encoder) => shapes_corpus(t.per_class, t.image_size, cfg.seed),
        (None, TrainTarget::Estimator) => complexity_corpus(t.per_class, t.image_size, cfg.seed),
    };
    let opts = t.options(cfg.seed);
    create_dir(&cfg.out)?;
    match target {
        TrainTarget::Encoder => {
            let trained = train_reference_encoder(&corpus, t.encoder_spec(), &opts)?;
            let path = cfg.out.join(ENCODER_WEIGHTS);
            trained
                .encoder
                .save(&path, Some(&trained.prototypes), cfg.seed, Some(trained.train_accuracy))?;
            Ok(TrainSummary {
                weights: path,
                images: corpus.len(),
                accuracy: trained.train_accuracy,
                epoch_losses: trained.epoch_losses,
            })
        }
        TrainTarget::Estimator => {
            let trained = complexity::train_estimator(&corpus, t.input_size, &t.estimator_stages, &opts)?;
            let path = cfg.out.join(ESTIMATOR_WEIGHTS);
            trained.estimator.save(&path, cfg.seed, Some(trained.validation_accuracy))?;
            Ok(TrainSummary {
                weights: path,
                images: corpus.len(),
                accuracy: trained.validation_accuracy,
                epoch_losses: trained.epoch_losses,
            })
        }
    }
}

/// Gradient checks, codec round trip and geometry oracle.
pub fn cmd_verify(cfg: &Config) -> Result<VerifyReport> {
    cfg.validate()?;
    verify::run_all(cfg.seed, raster::render_backward)
}
