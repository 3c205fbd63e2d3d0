//! Colour palettes: the query-attention palette network and the frozen
//! stroke-to-entry assignment.

mod network;

pub use network::{palette_backward, palette_forward, PaletteGrads, PaletteNetwork, PaletteSpec};

use crate::error::{Error, Result};
use crate::raster::Rgb;

/// Ordered RGB entries in `[0, 1]³`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Palette {
    pub entries: Vec<Rgb>,
}

impl Palette {
    pub fn new(entries: Vec<Rgb>) -> Result<Self> {
        if entries.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain("palette components must lie in [0, 1]"));
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One `r g b` line per entry.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|c| format!("{:.6} {:.6} {:.6}\n", c[0], c[1], c[2]))
            .collect()
    }
}

/// Palette index of each colour stroke.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, palette_size: usize) -> Result<()> {
        match self.0.iter().find(|&&i| i >= palette_size) {
            Some(i) => Err(Error::domain(format!("assignment index {i} outside palette of {palette_size}"))),
            None => Ok(()),
        }
    }
}

/// Nearest palette entry in RGB for every stroke colour; ties go to the
/// lowest index.
pub fn assign_colours(p0: &Palette, stroke_colours: &[Rgb]) -> Result<Assignment> {
    if p0.is_empty() && !stroke_colours.is_empty() {
        return Err(Error::domain("cannot assign strokes to an empty palette"));
    }
    Ok(Assignment(
        stroke_colours
            .iter()
            .map(|c| {
                let d = |e: &Rgb| (0..3).map(|k| (c[k] - e[k]) * (c[k] - e[k])).sum::<f64>();
                (0..p0.len()).fold(0, |best, j| if d(&p0.entries[j]) < d(&p0.entries[best]) { j } else { best })
            })
            .collect(),
    ))
}
