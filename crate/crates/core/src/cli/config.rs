//! The single JSON run configuration. Every section and field is optional;
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{QuantSpec, WIDTH_RANGE};
use crate::complexity::ConditionMode;
use crate::error::{Error, Result};
use crate::init::XDoGParams;
use crate::painter::PaintingConfig;
use crate::palette::PaletteSpec;
use crate::perceptual::{EncoderSpec, TrainOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root of every random stream.
    pub seed: u64,
    pub out: PathBuf,
    pub painting: PaintingConfig,
    pub xdog: XDoGParams,
    pub weights: WeightPaths,
    pub palette_network: PaletteNetworkConfig,
    pub quant: QuantConfig,
    pub curation: CurationConfig,
    pub training: TrainingConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            painting: PaintingConfig::default(),
            xdog: XDoGParams::default(),
            weights: WeightPaths::default(),
            palette_network: PaletteNetworkConfig::default(),
            quant: QuantConfig::default(),
            curation: CurationConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightPaths {
    pub encoder: Option<PathBuf>,
    /// Starting palette network; a fresh one is drawn from the seed if absent.
    pub palette: Option<PathBuf>,
    pub estimator: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaletteNetworkConfig {
    pub input_size: usize,
    pub dim: usize,
}

impl Default for PaletteNetworkConfig {
    fn default() -> Self {
        Self { input_size: 64, dim: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantConfig {
    pub coord_bits: u8,
    pub width_bits: u8,
    /// Defaults to ⌈log₂ C⌉ for the configured palette size.
    pub palette_index_bits: Option<u8>,
    pub palette_entry_bits: u8,
}

impl Default for QuantConfig {
    fn default() -> Self {
        let q = QuantSpec::default();
        Self {
            coord_bits: q.coord_bits,
            width_bits: q.width_bits,
            palette_index_bits: None,
            palette_entry_bits: q.palette_entry_bits,
        }
    }
}

impl QuantConfig {
    pub fn spec(&self, palette_size: usize) -> QuantSpec {
        let auto = QuantSpec::for_palette(palette_size);
        QuantSpec {
            coord_bits: self.coord_bits,
            width_bits: self.width_bits,
            palette_index_bits: self.palette_index_bits.unwrap_or(auto.palette_index_bits),
            palette_entry_bits: self.palette_entry_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    /// COCO-style annotation file.
    pub annotations: Option<PathBuf>,
    /// Directory the annotation file names are relative to; defaults to the
    /// annotation file's directory.
    pub images: Option<PathBuf>,
    /// Reference artworks for the composition criterion.
    pub gallery: Option<PathBuf>,
    pub categories: Vec<String>,
    /// Boolean expression over c1, c2, c3.
    pub condition_mode: String,
    /// Candidates kept per gallery image.
    pub composition_k: usize,
    /// Lowest predicted complexity level kept; needs estimator weights.
    pub min_level: Option<usize>,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            annotations: None,
            images: None,
            gallery: None,
            categories: Vec::new(),
            condition_mode: ConditionMode::default().expr().to_string(),
            composition_k: 10,
            min_level: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Directory of class subdirectories; a procedural corpus is generated
    /// if absent.
    pub corpus: Option<PathBuf>,
    /// Images per class of the procedural corpus.
    pub per_class: usize,
    pub image_size: usize,
    pub input_size: usize,
    pub encoder_stages: Vec<usize>,
    pub embedding_dim: usize,
    pub estimator_stages: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            per_class: 20,
            image_size: 64,
            input_size: 64,
            encoder_stages: EncoderSpec::default().stages,
            embedding_dim: EncoderSpec::default().embedding_dim,
            estimator_stages: vec![8, 16, 32],
            epochs: TrainOptions::default().epochs,
            batch_size: TrainOptions::default().batch_size,
            step_size: TrainOptions::default().step_size,
        }
    }
}

impl TrainingConfig {
    pub fn options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            seed,
            batch_size: self.batch_size,
            step_size: self.step_size,
            ..TrainOptions::default()
        }
    }

    pub fn encoder_spec(&self) -> EncoderSpec {
        EncoderSpec {
            input_size: self.input_size,
            stages: self.encoder_stages.clone(),
            embedding_dim: self.embedding_dim,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Config = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("config line {} column {}: {e}", e.line(), e.column())))?;
        cfg.sync();
        Ok(cfg)
    }

    /// Reads and validates a config file; an absent path gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            Some(p) => Self::from_json(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => Self::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copies shared values into the painting config.
    pub fn sync(&mut self) {
        self.painting.seed = self.seed;
        self.painting.xdog = self.xdog;
    }

    pub fn palette_spec(&self) -> PaletteSpec {
        PaletteSpec {
            input_size: self.palette_network.input_size,
            dim: self.palette_network.dim,
            colours: self.painting.palette_size.max(1),
        }
    }

    pub fn quant_spec(&self) -> QuantSpec {
        self.quant.spec(self.painting.palette_size)
    }

    /// Checks value ranges and that every referenced input path exists.
    /// Missing weight files are reported as such.
    pub fn validate(&self) -> Result<()> {
        self.painting.validate()?;
        if self.painting.width_min < WIDTH_RANGE.0 || self.painting.width_max > WIDTH_RANGE.1 {
            return Err(Error::config(format!(
                "width bounds must lie within the codec range {WIDTH_RANGE:?}"
            )));
        }
        self.palette_spec().validate()?;
        self.quant_spec().validate()?;
        self.curation.condition_mode.parse::<ConditionMode>()?;
        if let Some(l) = self.curation.min_level {
            crate::complexity::ComplexityLevel::new(l)?;
        }
        if self.curation.composition_k == 0 {
            return Err(Error::config("composition_k must be at least 1"));
        }
        let w = &self.weights;
        for p in [&w.encoder, &w.palette, &w.estimator].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::MissingWeights(format!("{} does not exist", p.display())));
            }
        }
        let c = &self.curation;
        for p in [&c.annotations, &c.images, &c.gallery, &self.training.corpus].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(())
    }
}
