//! Trains the five-level scene complexity estimator on procedural scenes.
//!
//! `cargo run --release --example train_estimator -- [out.pest] [epochs]`

use std::path::PathBuf;

use strokepaint::complexity::train_estimator;
use strokepaint::corpus::complexity_corpus;
use strokepaint::perceptual::TrainOptions;

fn main() -> strokepaint::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "estimator.pest".into()));
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let corpus = complexity_corpus(40, 64, 0);
    let opts = TrainOptions {
        epochs,
        ..TrainOptions::default()
    };
    let trained = train_estimator(&corpus, 64, &[8, 16, 32], &opts)?;
    println!("initial loss {:.4}", trained.initial_loss);
    for (i, l) in trained.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}  loss {l:.4}", i + 1);
    }
    println!(
        "validation accuracy {:.1}% on {} held-out scenes",
        100.0 * trained.validation_accuracy,
        trained.validation.len()
    );
    trained.estimator.save(&out, opts.seed, Some(trained.validation_accuracy))?;
    println!("wrote {}", out.display());
    Ok(())
}
