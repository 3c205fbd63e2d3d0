//! Quantized stroke bitstream and SVG export.
//!
//! Layout, all fields unsigned and packed most significant bit first:
//!
//! | field | bits |
//! |---|---|
//! | magic `VSKC` | 32 |
//! | version | 8 |
//! | width, height | 16 + 16 |
//! | black strokes, colour strokes | 12 + 12 |
//! | palette size C | 8 |
//! | coord, width, index, entry bits, each stored minus one | 4 × 4 |
//! | per black stroke: 8 coordinates | 8·coord |
//! | per colour stroke: 8 coordinates, width, palette index | 8·coord + width + index |
//! | palette: C × RGB | 3C·entry |
//! | zero padding to a byte | < 8 |
//!
//! Coordinates are quantized over [`COORD_RANGE`], widths over
//! [`WIDTH_RANGE`] and palette channels over `[0, 1]`, rounding half up.

mod bits;

use std::fmt::Write as _;
use std::path::Path;

use bits::{BitReader, BitWriter};

use crate::error::{DecodeError, Error, Result};
use crate::geometry::CubicBezier;
use crate::painter::{PaintingResult, COORD_RANGE};
use crate::palette::{Assignment, Palette};
use crate::raster::{Rgb, Stroke};

pub const MAGIC: [u8; 4] = *b"VSKC";
pub const VERSION: u8 = 1;
pub const HEADER_BITS: usize = 120;
/// Interval colour-stroke widths (pixels) are quantized over.
pub const WIDTH_RANGE: (f64, f64) = (0.5, 8.0);
/// Largest stroke count per layer the 12-bit header fields can hold.
pub const MAX_STROKES: usize = 4095;
pub const MAX_PALETTE: usize = 255;
pub const EXTENSION: &str = "vskc";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantSpec {
    pub coord_bits: u8,
    pub width_bits: u8,
    pub palette_index_bits: u8,
    pub palette_entry_bits: u8,
}

impl Default for QuantSpec {
    fn default() -> Self {
        Self::for_palette(16)
    }
}

impl QuantSpec {
    /// Default spec with the index field sized for `palette_size` entries.
    pub fn for_palette(palette_size: usize) -> Self {
        let index = palette_size.max(2).next_power_of_two().trailing_zeros().min(16) as u8;
        Self {
            coord_bits: 8,
            width_bits: 6,
            palette_index_bits: index,
            palette_entry_bits: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.coord_bits, self.width_bits, self.palette_index_bits, self.palette_entry_bits];
        if fields.iter().any(|b| !(1..=16).contains(b)) {
            return Err(Error::config(format!("quantization bits {fields:?} must each lie in [1, 16]")));
        }
        Ok(())
    }

    /// Payload bits of a colour stroke.
    pub fn colour_stroke_bits(&self) -> usize {
        8 * self.coord_bits as usize + self.width_bits as usize + self.palette_index_bits as usize
    }

    pub fn payload_bits(&self, black: usize, colour: usize, palette: usize) -> usize {
        black * 8 * self.coord_bits as usize + colour * self.colour_stroke_bits() + palette * 3 * self.palette_entry_bits as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColourStroke {
    pub curve: CubicBezier,
    /// Width in pixels.
    pub width: f64,
    pub palette_index: usize,
}

/// Everything the bitstream stores.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeSet {
    pub width: usize,
    pub height: usize,
    pub black: Vec<CubicBezier>,
    pub colour: Vec<ColourStroke>,
    pub palette: Palette,
}

impl StrokeSet {
    pub fn from_result(result: &PaintingResult) -> Self {
        Self {
            width: result.width(),
            height: result.height(),
            black: result.black.iter().map(|s| s.curve).collect(),
            colour: result
                .colour
                .iter()
                .zip(&result.assignment.0)
                .map(|(s, &i)| ColourStroke {
                    curve: s.curve,
                    width: s.width,
                    palette_index: i,
                })
                .collect(),
            palette: result.palette.clone(),
        }
    }

    pub fn black_strokes(&self) -> Vec<Stroke> {
        self.black.iter().map(|c| Stroke::black(*c)).collect()
    }

    pub fn colour_strokes(&self) -> Vec<Stroke> {
        self.colour
            .iter()
            .map(|s| Stroke::coloured(s.curve, self.palette.entries[s.palette_index], s.width))
            .collect()
    }

    pub fn assignment(&self) -> Assignment {
        Assignment(self.colour.iter().map(|s| s.palette_index).collect())
    }

    fn validate(&self, spec: &QuantSpec) -> Result<()> {
        spec.validate()?;
        if self.width == 0 || self.height == 0 || self.width > 65535 || self.height > 65535 {
            return Err(Error::domain(format!("canvas {}×{} does not fit the header", self.width, self.height)));
        }
        if self.black.len() > MAX_STROKES || self.colour.len() > MAX_STROKES {
            return Err(Error::domain(format!("at most {MAX_STROKES} strokes per layer")));
        }
        let c = self.palette.len();
        if c > MAX_PALETTE {
            return Err(Error::domain(format!("at most {MAX_PALETTE} palette entries")));
        }
        if c > 1usize << spec.palette_index_bits {
            return Err(Error::config(format!(
                "palette of {c} entries needs more than {} index bits",
                spec.palette_index_bits
            )));
        }
        let curves = self.black.iter().chain(self.colour.iter().map(|s| &s.curve));
        if curves.flat_map(|c| c.coords()).any(|v| !(COORD_RANGE.0..=COORD_RANGE.1).contains(&v)) {
            return Err(Error::domain("control point outside the quantization range"));
        }
        for s in &self.colour {
            if !(WIDTH_RANGE.0..=WIDTH_RANGE.1).contains(&s.width) {
                return Err(Error::domain(format!("stroke width {} outside {WIDTH_RANGE:?}", s.width)));
            }
            if s.palette_index >= c {
                return Err(Error::domain(format!("palette index {} out of range for {c} entries", s.palette_index)));
            }
        }
        Ok(())
    }
}

/// An encoded painting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrokeBitstream {
    pub bytes: Vec<u8>,
}

impl StrokeBitstream {
    pub fn len_bits(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, &self.bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Self {
            bytes: std::fs::read(path).map_err(|e| Error::io(path, e))?,
        })
    }
}

/// Grid index of `v` in `[lo, hi]` with `2^bits` levels.
pub fn quantize(v: f64, (lo, hi): (f64, f64), bits: u8) -> u32 {
    let levels = ((1u32 << bits) - 1) as f64;
    ((v - lo) / (hi - lo) * levels + 0.5).floor().clamp(0.0, levels) as u32
}

pub fn dequantize(q: u32, (lo, hi): (f64, f64), bits: u8) -> f64 {
    let levels = ((1u32 << bits) - 1) as f64;
    lo + q as f64 / levels * (hi - lo)
}

/// Half the spacing of the quantization grid.
pub fn half_step((lo, hi): (f64, f64), bits: u8) -> f64 {
    0.5 * (hi - lo) / ((1u32 << bits) - 1) as f64
}

pub fn encode(result: &PaintingResult, spec: &QuantSpec) -> Result<StrokeBitstream> {
    encode_set(&StrokeSet::from_result(result), spec)
}

pub fn encode_set(set: &StrokeSet, spec: &QuantSpec) -> Result<StrokeBitstream> {
    set.validate(spec)?;
    let mut w = BitWriter::default();
    for b in MAGIC {
        w.put(b.into(), 8);
    }
    w.put(VERSION.into(), 8);
    w.put(set.width as u32, 16);
    w.put(set.height as u32, 16);
    w.put(set.black.len() as u32, 12);
    w.put(set.colour.len() as u32, 12);
    w.put(set.palette.len() as u32, 8);
    for b in [spec.coord_bits, spec.width_bits, spec.palette_index_bits, spec.palette_entry_bits] {
        w.put(u32::from(b - 1), 4);
    }
    debug_assert_eq!(w.bit_len(), HEADER_BITS);
    let put_curve = |w: &mut BitWriter, c: &CubicBezier| {
        for v in c.coords() {
            w.put(quantize(v, COORD_RANGE, spec.coord_bits), spec.coord_bits.into());
        }
    };
    for c in &set.black {
        put_curve(&mut w, c);
    }
    for s in &set.colour {
        put_curve(&mut w, &s.curve);
        w.put(quantize(s.width, WIDTH_RANGE, spec.width_bits), spec.width_bits.into());
        w.put(s.palette_index as u32, spec.palette_index_bits.into());
    }
    for e in &set.palette.entries {
        for v in e {
            w.put(quantize(*v, (0.0, 1.0), spec.palette_entry_bits), spec.palette_entry_bits.into());
        }
    }
    debug_assert_eq!(
        w.bit_len(),
        HEADER_BITS + spec.payload_bits(set.black.len(), set.colour.len(), set.palette.len())
    );
    Ok(StrokeBitstream { bytes: w.finish() })
}

/// Header fields of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u8,
    pub width: usize,
    pub height: usize,
    pub black: usize,
    pub colour: usize,
    pub palette: usize,
    pub spec: QuantSpec,
}

impl Header {
    pub fn payload_bits(&self) -> usize {
        self.spec.payload_bits(self.black, self.colour, self.palette)
    }

    /// Total stream length in bytes, padding included.
    pub fn stream_bytes(&self) -> usize {
        (HEADER_BITS + self.payload_bits()).div_ceil(8)
    }
}

fn read_header(r: &mut BitReader<'_>) -> Result<Header, DecodeError> {
    let mut magic = [0u8; 4];
    for m in &mut magic {
        *m = r.get(8, || "magic".into())? as u8;
    }
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    let version = r.get(8, || "version".into())? as u8;
    if version != VERSION {
        return Err(DecodeError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let width = r.get(16, || "width".into())? as usize;
    let height = r.get(16, || "height".into())? as usize;
    let black = r.get(12, || "black stroke count".into())? as usize;
    let colour = r.get(12, || "colour stroke count".into())? as usize;
    let palette = r.get(8, || "palette size".into())? as usize;
    let mut b = [0u8; 4];
    for (v, name) in b.iter_mut().zip(["coord_bits", "width_bits", "palette_index_bits", "palette_entry_bits"]) {
        *v = r.get(4, || name.into())? as u8 + 1;
    }
    let spec = QuantSpec {
        coord_bits: b[0],
        width_bits: b[1],
        palette_index_bits: b[2],
        palette_entry_bits: b[3],
    };
    if width == 0 || height == 0 {
        return Err(DecodeError::InvalidHeader(format!("canvas {width}×{height}")));
    }
    if palette > 1usize << spec.palette_index_bits {
        return Err(DecodeError::InvalidHeader(format!(
            "{palette} palette entries exceed {} index bits",
            spec.palette_index_bits
        )));
    }
    Ok(Header {
        version,
        width,
        height,
        black,
        colour,
        palette,
        spec,
    })
}

/// Parses only the header.
pub fn header(stream: &StrokeBitstream) -> Result<Header, DecodeError> {
    read_header(&mut BitReader::new(&stream.bytes))
}

pub fn decode(stream: &StrokeBitstream) -> Result<StrokeSet, DecodeError> {
    let mut r = BitReader::new(&stream.bytes);
    let h = read_header(&mut r)?;
    let spec = h.spec;
    let read_curve = |r: &mut BitReader<'_>, what: &str| -> Result<CubicBezier, DecodeError> {
        let mut c = [0.0; 8];
        for (k, v) in c.iter_mut().enumerate() {
            let q = r.get(spec.coord_bits.into(), || format!("{what}.coords[{k}]"))?;
            *v = dequantize(q, COORD_RANGE, spec.coord_bits);
        }
        Ok(CubicBezier::from_coords(c))
    };
    let black = (0..h.black)
        .map(|i| read_curve(&mut r, &format!("black[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut colour = Vec::with_capacity(h.colour);
    for i in 0..h.colour {
        let curve = read_curve(&mut r, &format!("colour[{i}]"))?;
        let wq = r.get(spec.width_bits.into(), || format!("colour[{i}].width"))?;
        let palette_index = r.get(spec.palette_index_bits.into(), || format!("colour[{i}].palette_index"))? as usize;
        if palette_index >= h.palette {
            return Err(DecodeError::InvalidHeader(format!(
                "colour[{i}] references palette entry {palette_index} of {}",
                h.palette
            )));
        }
        colour.push(ColourStroke {
            curve,
            width: dequantize(wq, WIDTH_RANGE, spec.width_bits),
            palette_index,
        });
    }
    let mut entries = Vec::with_capacity(h.palette);
    for i in 0..h.palette {
        let mut e: Rgb = [0.0; 3];
        for (c, ch) in e.iter_mut().zip(["r", "g", "b"]) {
            let q = r.get(spec.palette_entry_bits.into(), || format!("palette[{i}].{ch}"))?;
            *c = dequantize(q, (0.0, 1.0), spec.palette_entry_bits);
        }
        entries.push(e);
    }
    debug_assert_eq!(r.position(), HEADER_BITS + h.payload_bits());
    if stream.bytes.len() != h.stream_bytes() {
        return Err(DecodeError::InvalidHeader(format!(
            "stream has {} bytes, header declares {}",
            stream.bytes.len(),
            h.stream_bytes()
        )));
    }
    Ok(StrokeSet {
        width: h.width,
        height: h.height,
        black,
        colour,
        palette: Palette { entries },
    })
}

/// Bits per pixel of the whole stream, padding included.
pub fn bpp(stream: &StrokeBitstream, width: usize, height: usize) -> Result<f64> {
    if width == 0 || height == 0 {
        return Err(Error::domain("bpp needs a non-empty canvas"));
    }
    Ok(stream.len_bits() as f64 / (width * height) as f64)
}

pub fn export_svg(result: &PaintingResult) -> String {
    let strokes: Vec<Stroke> = result.colour.iter().chain(&result.black).copied().collect();
    svg_document(&strokes, result.width(), result.height())
}

/// SVG with one cubic path per stroke, in the given (back-to-front) order.
pub fn svg_document(strokes: &[Stroke], width: usize, height: usize) -> String {
    let (w, h) = (width as f64, height as f64);
    let mut out = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n<rect width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    );
    for s in strokes {
        let p: Vec<(f64, f64)> = s.curve.points.iter().map(|p| (p.x * w, p.y * h)).collect();
        let [r, g, b] = s.colour.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8);
        let _ = writeln!(
            out,
            "<path d=\"M {:.6} {:.6} C {:.6} {:.6}, {:.6} {:.6}, {:.6} {:.6}\" fill=\"none\" stroke=\"#{r:02x}{g:02x}{b:02x}\" stroke-width=\"{:.6}\" stroke-opacity=\"{:.6}\" stroke-linecap=\"round\"/>",
            p[0].0, p[0].1, p[1].0, p[1].1, p[2].0, p[2].1, p[3].0, p[3].1, s.width, s.opacity
        );
    }
    out.push_str("</svg>\n");
    out
}
