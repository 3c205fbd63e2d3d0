//! Paints one image with black and colour strokes and writes the layers.
//!
//! `cargo run --release --example paint -- [image.png|-] [encoder.penc|-] [iterations] [out_dir]`
//!
//! With `-` for the image a procedural star is painted; with `-` for the
//! encoder a randomly initialized one is used.

use std::path::PathBuf;
use std::time::Instant;

use strokepaint::corpus::shape_image;
use strokepaint::painter::{paint, PaintingConfig};
use strokepaint::palette::{PaletteNetwork, PaletteSpec};
use strokepaint::perceptual::{ConvEncoder, EncoderSpec};
use strokepaint::raster::Canvas;
use strokepaint::rng::XorShift64Star;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let image = match args.next().filter(|a| a != "-") {
        Some(p) => Canvas::load(p)?,
        None => shape_image(6, 128, &mut XorShift64Star::stream(1, "example")),
    };
    let encoder = match args.next().filter(|a| a != "-") {
        Some(p) => ConvEncoder::load(&PathBuf::from(p))?.0,
        None => ConvEncoder::new(
            EncoderSpec {
                input_size: 64,
                ..EncoderSpec::default()
            },
            0,
        )?,
    };
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "paint_out".into()));
    std::fs::create_dir_all(&out)?;

    let config = PaintingConfig {
        iterations,
        ..PaintingConfig::default()
    };
    let mut net = PaletteNetwork::new(
        PaletteSpec {
            input_size: 64,
            colours: config.palette_size,
            ..PaletteSpec::default()
        },
        0,
    )?;
    let start = Instant::now();
    let result = paint(&image, &config, &encoder, &mut net)?;
    let secs = start.elapsed().as_secs_f64();
    let (first, last) = (result.loss_trace[0], *result.loss_trace.last().unwrap());
    println!("{iterations} iterations in {secs:.1}s ({:.1} ms/iter)", 1e3 * secs / iterations as f64);
    println!("total loss {:.4} -> {:.4}", first.total, last.total);
    result.s_black.save_png(out.join("S_black.png"))?;
    result.s_colour.save_png(out.join("S_colour.png"))?;
    result.s.save_png(out.join("S.png"))?;
    std::fs::write(out.join("losses.csv"), result.loss_csv())?;
    std::fs::write(out.join("palette.txt"), result.palette.to_text())?;
    println!("wrote {}", out.display());
    Ok(())
}
