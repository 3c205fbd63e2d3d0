//! Computes the edge, saliency and attention maps of an image and places
//! the initial strokes, writing the maps and an initial rendering.
//!
//! `cargo run --release --example initialization -- [image.png|-] [encoder.penc|-] [out_dir]`

use std::path::PathBuf;

use strokepaint::corpus::shape_image;
use strokepaint::init::{self, XDoGParams};
use strokepaint::perceptual::{ConvEncoder, EncoderSpec};
use strokepaint::raster::{self, Canvas, Stroke, WHITE, DEFAULT_SOFTNESS};
use strokepaint::rng::XorShift64Star;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let image = match args.next().filter(|a| a != "-") {
        Some(p) => Canvas::load(p)?,
        None => shape_image(4, 128, &mut XorShift64Star::stream(2, "example")),
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
    let out = PathBuf::from(args.next().unwrap_or_else(|| "init_out".into()));
    std::fs::create_dir_all(&out)?;

    let edges = init::edge_map(&image, &XDoGParams::default())?;
    let sal = init::saliency(&image, &encoder)?;
    let att = init::enhanced_attention(&sal, &edges, init::DEFAULT_TEMPERATURE)?;
    let curves = init::init_strokes(&att, 32, init::DEFAULT_RADIUS, &mut XorShift64Star::stream(0, "init.black"))?;
    let (palette, _) = init::reference_palette(&curves, &att, &image, 8, &mut XorShift64Star::stream(0, "init.palette"))?;
    println!("{} strokes placed; reference palette:\n{}", curves.len(), palette.to_text());

    let strokes: Vec<Stroke> = curves.iter().map(|c| Stroke::black(*c)).collect();
    let first = raster::render(&strokes, WHITE, image.width(), image.height(), DEFAULT_SOFTNESS)?;
    edges.save_png(out.join("edges.png"))?;
    sal.save_png(out.join("saliency.png"))?;
    att.map().save_png(out.join("attention.png"))?;
    first.save_png(out.join("initial_strokes.png"))?;
    println!("wrote {}", out.display());
    Ok(())
}
