//! Encodes a stroke set into the `.vskc` bitstream, audits its size and
//! decodes it back.
//!
//! `cargo run --release --example codec -- [out_dir]`

use std::path::PathBuf;

use strokepaint::codec::{self, QuantSpec, HEADER_BITS};
use strokepaint::raster::{self, WHITE, DEFAULT_SOFTNESS};
use strokepaint::rng::XorShift64Star;
use strokepaint::verify::random_stroke_set;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "codec_out".into()));
    std::fs::create_dir_all(&out)?;
    let mut rng = XorShift64Star::new(7);
    let set = random_stroke_set(&mut rng, 32, 32, 16, 224);
    let spec = QuantSpec::default();

    let stream = codec::encode_set(&set, &spec)?;
    let payload = spec.payload_bits(32, 32, 16);
    println!("header {HEADER_BITS} bits + payload {payload} bits -> {} bytes", stream.bytes.len());
    println!("bpp at 224x224: {:.5}", codec::bpp(&stream, 224, 224)?);

    let decoded = codec::decode(&stream)?;
    let again = codec::encode_set(&decoded, &spec)?;
    println!("re-encoding identical: {}", again == stream);

    let render = |s: &codec::StrokeSet| {
        let strokes: Vec<_> = s.colour_strokes().into_iter().chain(s.black_strokes()).collect();
        raster::render(&strokes, WHITE, s.width, s.height, DEFAULT_SOFTNESS)
    };
    let (a, b) = (render(&set)?, render(&decoded)?);
    let mae = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64;
    println!("mean abs pixel error after decoding: {mae:.5}");

    stream.save(out.join("strokes.vskc"))?;
    let strokes: Vec<_> = decoded.colour_strokes().into_iter().chain(decoded.black_strokes()).collect();
    std::fs::write(out.join("strokes.svg"), codec::svg_document(&strokes, 224, 224))?;
    b.save_png(out.join("decoded.png"))?;
    println!("wrote {}", out.display());
    Ok(())
}
