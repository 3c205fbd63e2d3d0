//! Trains the reference encoder on the procedural shape corpus.
//!
//! `cargo run --release --example train_encoder -- [out.penc] [epochs]`

use std::path::PathBuf;
use std::time::Instant;

use strokepaint::corpus::shapes_corpus;
use strokepaint::perceptual::{train_reference_encoder, EncoderSpec, TrainOptions};

fn main() -> strokepaint::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "encoder.penc".into()));
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let corpus = shapes_corpus(20, 64, 0);
    let spec = EncoderSpec {
        input_size: 64,
        ..EncoderSpec::default()
    };
    let opts = TrainOptions {
        epochs,
        ..TrainOptions::default()
    };
    let start = Instant::now();
    let trained = train_reference_encoder(&corpus, spec, &opts)?;
    for (i, l) in trained.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}  loss {l:.4}", i + 1);
    }
    println!(
        "train top-1 {:.1}% in {:.1}s",
        100.0 * trained.train_accuracy,
        start.elapsed().as_secs_f64()
    );
    trained
        .encoder
        .save(&out, Some(&trained.prototypes), opts.seed, Some(trained.train_accuracy))?;
    println!("wrote {}", out.display());
    Ok(())
}
