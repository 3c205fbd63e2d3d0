//! Curates a procedural scene corpus: category conditions on the boxes,
//! composition similarity to a small gallery, and optionally the trained
//! complexity estimator.
//!
//! `cargo run --release --example curate -- [encoder.penc|-] [estimator.pest]`

use std::path::PathBuf;

use strokepaint::complexity::{category_filter, composition_filter, AnnotatedImage, BBox, ComplexityEstimator, ConditionMode};
use strokepaint::corpus::scene;
use strokepaint::perceptual::{ConvEncoder, EncoderSpec, ImageEncoder};
use strokepaint::raster::Canvas;
use strokepaint::rng::XorShift64Star;

fn main() -> strokepaint::Result<()> {
    let mut args = std::env::args().skip(1);
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
    let estimator = args.next().map(|p| ComplexityEstimator::load(&PathBuf::from(p))).transpose()?;

    let mut rng = XorShift64Star::new(5);
    let (images, annotations): (Vec<Canvas>, Vec<AnnotatedImage>) = (0..60)
        .map(|i| {
            let (c, mut a) = match i % 3 {
                0 => flock(12, &mut rng),
                1 => portrait(&mut rng),
                _ => scene(1 + i % 14, 64, &mut rng),
            };
            a.file_name = format!("scene{i:03}.png");
            (c, a)
        })
        .unzip();
    let gallery: Vec<Canvas> = (0..3).map(|_| scene(12, 64, &mut rng).0).collect();

    let categories: Vec<String> = ["bird", "dog"].map(String::from).to_vec();
    let mode: ConditionMode = "c3 & (c1 | c2)".parse()?;
    let selection = category_filter(&annotations, &categories, &mode);
    println!("{} of {} scenes pass the category criterion", selection.selected.len(), images.len());

    let embed = |c: &Canvas| encoder.encode(c).map(|a| a.embedding);
    let candidates = selection.selected.iter().map(|&i| embed(&images[i])).collect::<Result<Vec<_>, _>>()?;
    let gallery = gallery.iter().map(embed).collect::<Result<Vec<_>, _>>()?;
    if candidates.is_empty() {
        return Ok(());
    }
    let (kept, hits) = composition_filter(&candidates, &gallery, 5)?;
    println!("{} pass the composition criterion (top-5 per gallery image)", kept.len());
    for &k in &kept {
        let i = selection.selected[k];
        let level = estimator.as_ref().map(|e| e.estimate(&images[i]).to_string()).unwrap_or_else(|| "-".into());
        println!(
            "  {}  conditions {}  hits {}  level {level}",
            annotations[i].file_name, selection.flags[i], hits[k]
        );
    }
    Ok(())
}

fn draw(boxes: &[BBox], colour: [f64; 3]) -> Canvas {
    Canvas::from_fn(64, 64, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        if boxes.iter().any(|b| px >= b.x && px < b.x + b.w && py >= b.y && py < b.y + b.h) {
            colour
        } else {
            [1.0, 1.0, 1.0]
        }
    })
}

/// `n` small, separated "bird" boxes on a jittered grid.
fn flock(n: usize, rng: &mut XorShift64Star) -> (Canvas, AnnotatedImage) {
    let boxes: Vec<BBox> = (0..n)
        .map(|k| {
            let (gx, gy) = ((k % 4) as f64 * 16.0, (k / 4) as f64 * 16.0);
            BBox::new(gx + rng.uniform(1.0, 5.0), gy + rng.uniform(1.0, 5.0), 8.0, 6.0, "bird")
        })
        .collect();
    let img = draw(&boxes, [0.2, 0.2, 0.6]);
    (img, AnnotatedImage { file_name: String::new(), width: 64, height: 64, boxes })
}

/// One dominant "dog" box.
fn portrait(rng: &mut XorShift64Star) -> (Canvas, AnnotatedImage) {
    let w = rng.uniform(48.0, 60.0);
    let boxes = vec![BBox::new(2.0, 2.0, w, w, "dog")];
    let img = draw(&boxes, [0.6, 0.4, 0.2]);
    (img, AnnotatedImage { file_name: String::new(), width: 64, height: 64, boxes })
}
