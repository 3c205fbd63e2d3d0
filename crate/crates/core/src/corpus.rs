//! Procedural image corpora: labelled single-shape images for encoder
//! training and multi-object scenes for the complexity estimator.

use std::f64::consts::PI;
use std::path::Path;

use crate::complexity::{AnnotatedImage, BBox};
use crate::error::{Error, Result};
use crate::raster::{Canvas, Rgb};
use crate::rng::XorShift64Star;

/// Class names of the procedural shape corpus, in label order.
pub const SHAPE_CLASSES: [&str; 10] = [
    "circle", "square", "triangle", "ring", "cross", "diamond", "star", "stripes", "crescent", "arrow",
];

/// Images with integer labels into `class_names`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledCorpus {
    pub class_names: Vec<String>,
    pub images: Vec<Canvas>,
    pub labels: Vec<usize>,
}

impl LabeledCorpus {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Reads `root/<class>/<image>` with classes and images in name order.
    pub fn load_dir(root: &Path) -> Result<Self> {
        let mut corpus = Self::default();
        for (label, dir) in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).enumerate() {
            let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            corpus.class_names.push(name);
            for file in image_files(&dir)? {
                corpus.images.push(Canvas::load(&file)?);
                corpus.labels.push(label);
            }
        }
        Ok(corpus)
    }

    /// Writes the layout [`LabeledCorpus::load_dir`] reads.
    pub fn save_dir(&self, root: &Path) -> Result<()> {
        for (i, (img, &label)) in self.images.iter().zip(&self.labels).enumerate() {
            let dir = root.join(&self.class_names[label]);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            img.save_png(dir.join(format!("{i:05}.png")))?;
        }
        Ok(())
    }
}

/// PNG and PPM files directly inside `dir`, sorted by path.
pub fn image_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|f| {
            let ext = f.extension().and_then(|e| e.to_str()).unwrap_or_default().to_ascii_lowercase();
            f.is_file() && (ext == "png" || ext == "ppm")
        })
        .collect())
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut v = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    v.sort();
    Ok(v)
}

/// Whether local point `(u, v)` in `[-1, 1]²` lies inside shape `class`.
fn inside(class: usize, u: f64, v: f64) -> bool {
    let r = u.hypot(v);
    match class {
        0 => r < 0.8,
        1 => u.abs().max(v.abs()) < 0.65,
        2 => {
            // vertices (0, −0.8), (0.8, 0.6), (−0.8, 0.6)
            v < 0.6 && 1.75 * u.abs() < v + 0.8
        }
        3 => (0.5..0.85).contains(&r),
        4 => (u.abs() < 0.25 && v.abs() < 0.8) || (v.abs() < 0.25 && u.abs() < 0.8),
        5 => u.abs() + v.abs() < 0.85,
        6 => r < 0.5 + 0.35 * (5.0 * v.atan2(u)).cos(),
        7 => u.abs() < 0.8 && v.abs() < 0.8 && ((v + 0.8) * 2.5).rem_euclid(1.0) < 0.5,
        8 => r < 0.8 && (u - 0.35).hypot(v) > 0.6,
        9 => (v.abs() < 0.18 && u > -0.8 && u < 0.2) || ((0.2..0.8).contains(&u) && v.abs() < (0.8 - u) * 0.9),
        _ => false,
    }
}

fn random_colour(rng: &mut XorShift64Star, lo: f64, hi: f64) -> Rgb {
    [rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)]
}

/// One placed shape; `scale` is the half-extent in pixels.
#[derive(Debug, Clone, Copy)]
struct Placement {
    class: usize,
    cx: f64,
    cy: f64,
    scale: f64,
    angle: f64,
    colour: Rgb,
}

impl Placement {
    fn bbox(&self, size: usize) -> BBox {
        let s = self.scale * std::f64::consts::SQRT_2;
        let x0 = (self.cx - s).max(0.0);
        let y0 = (self.cy - s).max(0.0);
        let x1 = (self.cx + s).min(size as f64);
        let y1 = (self.cy + s).min(size as f64);
        BBox {
            x: x0,
            y: y0,
            w: (x1 - x0).max(1e-9),
            h: (y1 - y0).max(1e-9),
            category: SHAPE_CLASSES[self.class].to_string(),
        }
    }
}

/// Renders placements over `background` with 3×3 supersampling.
fn draw(size: usize, background: Rgb, shapes: &[Placement]) -> Canvas {
    const SUB: usize = 3;
    Canvas::from_fn(size, size, |x, y| {
        let mut acc = [0.0; 3];
        for sy in 0..SUB {
            for sx in 0..SUB {
                let px = x as f64 + (sx as f64 + 0.5) / SUB as f64;
                let py = y as f64 + (sy as f64 + 0.5) / SUB as f64;
                let mut c = background;
                for s in shapes {
                    let (dx, dy) = ((px - s.cx) / s.scale, (py - s.cy) / s.scale);
                    let (sin, cos) = s.angle.sin_cos();
                    if inside(s.class, cos * dx + sin * dy, -sin * dx + cos * dy) {
                        c = s.colour;
                    }
                }
                for k in 0..3 {
                    acc[k] += c[k];
                }
            }
        }
        let n = (SUB * SUB) as f64;
        [acc[0] / n, acc[1] / n, acc[2] / n]
    })
}

/// A single shape of class `class` with random pose and colours.
pub fn shape_image(class: usize, size: usize, rng: &mut XorShift64Star) -> Canvas {
    let s = size as f64;
    let p = Placement {
        class,
        cx: s * rng.uniform(0.4, 0.6),
        cy: s * rng.uniform(0.4, 0.6),
        scale: s * rng.uniform(0.28, 0.4),
        angle: rng.uniform(-0.3, 0.3),
        colour: random_colour(rng, 0.0, 0.6),
    };
    draw(size, random_colour(rng, 0.8, 1.0), &[p])
}

/// `per_class` images of every shape class, class-major.
pub fn shapes_corpus(per_class: usize, size: usize, seed: u64) -> LabeledCorpus {
    let mut rng = XorShift64Star::stream(seed, "corpus.shapes");
    let mut corpus = LabeledCorpus {
        class_names: SHAPE_CLASSES.iter().map(|s| s.to_string()).collect(),
        ..Default::default()
    };
    for class in 0..SHAPE_CLASSES.len() {
        for _ in 0..per_class {
            corpus.images.push(shape_image(class, size, &mut rng));
            corpus.labels.push(class);
        }
    }
    corpus
}

/// Complexity level of a scene with `objects` shapes.
pub fn level_for_count(objects: usize) -> usize {
    (objects / 2).min(4)
}

/// A scene of `objects` shapes, annotated with their boxes.
pub fn scene(objects: usize, size: usize, rng: &mut XorShift64Star) -> (Canvas, AnnotatedImage) {
    let s = size as f64;
    let shapes: Vec<Placement> = (0..objects)
        .map(|_| Placement {
            class: rng.below(SHAPE_CLASSES.len()),
            cx: s * rng.uniform(0.12, 0.88),
            cy: s * rng.uniform(0.12, 0.88),
            scale: s * rng.uniform(0.07, 0.11),
            angle: rng.uniform(0.0, 2.0 * PI),
            colour: random_colour(rng, 0.0, 0.6),
        })
        .collect();
    let canvas = draw(size, random_colour(rng, 0.8, 1.0), &shapes);
    let ann = AnnotatedImage {
        file_name: String::new(),
        width: size,
        height: size,
        boxes: shapes.iter().map(|p| p.bbox(size)).collect(),
    };
    (canvas, ann)
}

/// Scenes with 1–9 objects labelled by [`level_for_count`], `per_level`
/// scenes per level.
pub fn complexity_corpus(per_level: usize, size: usize, seed: u64) -> LabeledCorpus {
    let mut rng = XorShift64Star::stream(seed, "corpus.scenes");
    let mut corpus = LabeledCorpus {
        class_names: (0..5).map(|l| format!("level{l}")).collect(),
        ..Default::default()
    };
    for level in 0..5 {
        let counts: Vec<usize> = (1..=9).filter(|&n| level_for_count(n) == level).collect();
        for i in 0..per_level {
            let (img, _) = scene(counts[i % counts.len()], size, &mut rng);
            corpus.images.push(img);
            corpus.labels.push(level);
        }
    }
    corpus
}
