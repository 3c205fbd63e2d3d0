//! Sweeps the stroke budget and reports how often the reference encoder
//! recognizes the paintings of held-out shapes.
//!
//! `cargo run --release --example recognition -- [encoder.penc|-] [images_per_class] [iterations]`
//!
//! Without an encoder file one is trained first (about a minute).

use std::error::Error;
use std::path::Path;

use strokepaint::corpus::shapes_corpus;
use strokepaint::painter::{evaluate_recognition, paint, PaintingConfig, PaintingResult};
use strokepaint::palette::{PaletteNetwork, PaletteSpec};
use strokepaint::perceptual::{train_reference_encoder, ConvEncoder, EncoderSpec, TrainOptions};

const BUDGETS: [usize; 4] = [4, 8, 16, 32];

fn main() -> Result<(), Box<dyn Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let per_class = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let iterations = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(80);
    let (encoder, prototypes) = match args.first().map(String::as_str) {
        Some(p) if p != "-" => {
            let (e, protos) = ConvEncoder::load(Path::new(p))?;
            (e, protos.ok_or("encoder file has no class head")?)
        }
        _ => {
            let spec = EncoderSpec {
                input_size: 64,
                ..EncoderSpec::default()
            };
            let t = train_reference_encoder(&shapes_corpus(20, 64, 0), spec, &TrainOptions::default())?;
            println!("trained encoder, train top-1 {:.1}%", 100.0 * t.train_accuracy);
            (t.encoder, t.prototypes)
        }
    };

    // A different seed from training, so these shapes are unseen.
    let corpus = shapes_corpus(per_class, 64, 99);
    println!("budget  S top-1  S top-3  black top-1  colour top-1");
    for b in BUDGETS {
        let c = b.min(16);
        let mut paintings: Vec<PaintingResult> = Vec::new();
        for (i, img) in corpus.images.iter().enumerate() {
            let cfg = PaintingConfig {
                strokes_black: b,
                strokes_colour: b,
                palette_size: c,
                iterations,
                canvas_size: 64,
                seed: i as u64,
                ..PaintingConfig::default()
            };
            let spec = PaletteSpec {
                input_size: 64,
                dim: 32,
                colours: c,
            };
            let mut net = PaletteNetwork::new(spec, cfg.seed)?;
            paintings.push(paint(img, &cfg, &encoder, &mut net)?);
        }
        let labelled: Vec<(&PaintingResult, &str)> = paintings
            .iter()
            .zip(&corpus.labels)
            .map(|(p, &l)| (p, corpus.class_names[l].as_str()))
            .collect();
        let r = evaluate_recognition(&labelled, &encoder, &prototypes)?;
        println!(
            "{b:>6}  {:>6.1}%  {:>6.1}%  {:>10.1}%  {:>11.1}%",
            100.0 * r.combined.top1,
            100.0 * r.combined.top3,
            100.0 * r.black.top1,
            100.0 * r.colour.top1
        );
    }
    Ok(())
}
