//! The painting loop: initialization, then repeated render, loss, reverse
//! pass and adaptive-moment updates of strokes and the palette network.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::CubicBezier;
use crate::init::{self, AttentionMap, ScalarMap, XDoGParams};
use crate::nn::{self, optimizer_step, MomentState, ParamBlock};
use crate::palette::{assign_colours, Assignment, Palette, PaletteNetwork};
use crate::perceptual::{
    self, colour_loss, colour_loss_grad, perceptual_cotangent, semantic_loss, structure_loss, total_loss, Activations,
    ClassPrototypes, ImageEncoder, LossBreakdown, LossWeights, DEFAULT_STRUCTURE_LAYERS,
};
use crate::raster::{self, Canvas, RenderGrad, Stroke, DEFAULT_SOFTNESS, WHITE};
use crate::rng::XorShift64Star;

/// Normalized range control points are clamped to.
pub const COORD_RANGE: (f64, f64) = (-0.1, 1.1);

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaintingConfig {
    pub strokes_black: usize,
    pub strokes_colour: usize,
    pub palette_size: usize,
    pub iterations: usize,
    pub lr_points: f64,
    pub lr_widths: f64,
    pub lr_palette: f64,
    pub weights: LossWeights,
    pub width_min: f64,
    pub width_max: f64,
    /// Initial width of every colour stroke, in pixels.
    pub colour_width: f64,
    /// Set from the top-level seed of a config file.
    #[serde(skip)]
    pub seed: u64,
    /// Side of the square painting canvas.
    pub canvas_size: usize,
    pub softness: f64,
    /// Neighbourhood radius of stroke initialization, normalized units.
    pub init_radius: f64,
    pub temperature: f64,
    pub xdog: XDoGParams,
    pub structure_layers: Vec<usize>,
}

impl Default for PaintingConfig {
    fn default() -> Self {
        Self {
            strokes_black: 32,
            strokes_colour: 32,
            palette_size: 16,
            iterations: 600,
            lr_points: 0.01,
            lr_widths: 0.01,
            lr_palette: 1e-3,
            weights: LossWeights::default(),
            width_min: 0.5,
            width_max: 8.0,
            colour_width: 3.0,
            seed: 0,
            canvas_size: 128,
            softness: DEFAULT_SOFTNESS,
            init_radius: init::DEFAULT_RADIUS,
            temperature: init::DEFAULT_TEMPERATURE,
            xdog: XDoGParams::default(),
            structure_layers: DEFAULT_STRUCTURE_LAYERS.to_vec(),
        }
    }
}

impl PaintingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strokes_black == 0 && self.strokes_colour == 0 {
            return Err(Error::config("at least one black or colour stroke is required"));
        }
        if self.palette_size > self.strokes_colour.max(1) {
            return Err(Error::config(format!(
                "palette size {} exceeds max(1, colour strokes = {})",
                self.palette_size, self.strokes_colour
            )));
        }
        if self.strokes_colour > 0 && self.palette_size == 0 {
            return Err(Error::config("colour strokes need a palette of at least one entry"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if !(self.width_min > 0.0 && self.width_min <= self.width_max) {
            return Err(Error::config("width bounds must satisfy 0 < min <= max"));
        }
        if !(self.width_min..=self.width_max).contains(&self.colour_width) {
            return Err(Error::config("initial colour width lies outside the width bounds"));
        }
        if self.canvas_size == 0 || !(self.softness > 0.0) {
            return Err(Error::config("canvas size and softness must be positive"));
        }
        if ![self.lr_points, self.lr_widths, self.lr_palette].iter().all(|l| *l >= 0.0 && l.is_finite()) {
            return Err(Error::config("step sizes must be finite and non-negative"));
        }
        self.weights.validate()?;
        self.xdog.validate()
    }
}

/// Maps computed during initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct InitMaps {
    pub edges: ScalarMap,
    pub saliency: ScalarMap,
    pub attention: AttentionMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaintingResult {
    pub s_black: Canvas,
    pub s_colour: Canvas,
    pub s: Canvas,
    pub black: Vec<Stroke>,
    pub colour: Vec<Stroke>,
    pub palette: Palette,
    pub reference_palette: Palette,
    pub assignment: Assignment,
    /// Losses evaluated before each update.
    pub loss_trace: Vec<LossBreakdown>,
    pub maps: InitMaps,
}

impl PaintingResult {
    pub fn width(&self) -> usize {
        self.s.width()
    }

    pub fn height(&self) -> usize {
        self.s.height()
    }

    /// `iteration,L_structure,L_semantic,L_colour,total`, one row per update.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("iteration,L_structure,L_semantic,L_colour,total\n");
        for (i, l) in self.loss_trace.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", i + 1, l.structure, l.semantic, l.colour, l.total);
        }
        out
    }
}

/// Bilinear resize to a `size × size` canvas.
pub fn resize_image(image: &Canvas, size: usize) -> Canvas {
    if image.width() == size && image.height() == size {
        return image.clone();
    }
    let t = nn::resize_canvas(image, size);
    Canvas::from_fn(size, size, |x, y| {
        let i = y * size + x;
        let n = size * size;
        [t.data[i], t.data[n + i], t.data[2 * n + i]].map(|v| v.clamp(0.0, 1.0))
    })
}

/// Clamps coordinates to [`COORD_RANGE`] and widths to the configured bounds.
pub fn project(points: &mut [f64], widths: &mut [f64], config: &PaintingConfig) {
    for p in points {
        *p = p.clamp(COORD_RANGE.0, COORD_RANGE.1);
    }
    for w in widths {
        *w = w.clamp(config.width_min, config.width_max);
    }
}

/// Loss of a stroke list against fixed target activations and its gradient
/// with respect to every stroke parameter; the colour term is not included.
pub fn stroke_objective(
    encoder: &dyn ImageEncoder,
    target: &Activations,
    strokes: &[Stroke],
    size: (usize, usize),
    softness: f64,
    weights: &LossWeights,
    layers: &[usize],
) -> Result<(LossBreakdown, RenderGrad)> {
    let (w, h) = size;
    let s = raster::render(strokes, WHITE, w, h, softness)?;
    let act = encoder.encode(&s)?;
    let loss = total_loss(structure_loss(target, &act, layers)?, semantic_loss(target, &act), 0.0, weights);
    let cot = perceptual_cotangent(target, &act, weights, layers);
    let ds = encoder.input_gradient(&act, &cot)?;
    let grad = raster::render_backward(strokes, WHITE, w, h, softness, &ds)?;
    Ok((loss, grad))
}

fn curves_from(points: &[f64]) -> Vec<CubicBezier> {
    points
        .chunks_exact(8)
        .map(|c| CubicBezier::from_coords(c.try_into().expect("8 coordinates")))
        .collect()
}

fn check_finite(iteration: usize, loss: &LossBreakdown) -> Result<()> {
    if [loss.structure, loss.semantic, loss.colour, loss.total].iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            block: "loss".into(),
            detail: format!("iteration {iteration}: {loss:?}"),
        })
    }
}

struct Layers<'a> {
    config: &'a PaintingConfig,
    assignment: &'a Assignment,
}

impl Layers<'_> {
    fn strokes(&self, points: &[f64], widths: &[f64], palette: &Palette) -> (Vec<Stroke>, Vec<Stroke>) {
        let nb = self.config.strokes_black;
        let curves = curves_from(points);
        let black = curves[..nb].iter().map(|c| Stroke::black(*c)).collect();
        let colour = curves[nb..]
            .iter()
            .enumerate()
            .map(|(i, c)| Stroke::coloured(*c, palette.entries[self.assignment.0[i]], widths[i]))
            .collect();
        (black, colour)
    }
}

/// Paints `image`. The palette network is updated in place; with no colour
/// strokes it is left untouched.
pub fn paint(image: &Canvas, config: &PaintingConfig, encoder: &dyn ImageEncoder, palette_net: &mut PaletteNetwork) -> Result<PaintingResult> {
    config.validate()?;
    let (nb, nc) = (config.strokes_black, config.strokes_colour);
    if nc > 0 && palette_net.spec.colours != config.palette_size {
        return Err(Error::config(format!(
            "palette network has {} queries, config asks for {} colours",
            palette_net.spec.colours, config.palette_size
        )));
    }
    palette_net.check()?;
    let n = config.canvas_size;
    let target = resize_image(image, n);

    let edges = init::edge_map(&target, &config.xdog)?;
    let sal = init::saliency(&target, encoder)?;
    let attention = init::enhanced_attention(&sal, &edges, config.temperature)?;
    let black_curves = init::init_strokes(&attention, nb, config.init_radius, &mut XorShift64Star::stream(config.seed, "init.black"))?;
    let colour_curves = init::init_strokes(&attention, nc, config.init_radius, &mut XorShift64Star::stream(config.seed, "init.colour"))?;
    let (p0, assignment) = if nc > 0 {
        let mut rng = XorShift64Star::stream(config.seed, "init.palette");
        let (p0, raw) = init::reference_palette(&colour_curves, &attention, &target, config.palette_size, &mut rng)?;
        let a = assign_colours(&p0, &raw)?;
        (p0, a)
    } else {
        (Palette::default(), Assignment::default())
    };

    let mut points: Vec<f64> = black_curves.iter().chain(&colour_curves).flat_map(|c| c.coords()).collect();
    let mut widths = vec![config.colour_width; nc];
    project(&mut points, &mut widths, config);
    let layers = Layers {
        config,
        assignment: &assignment,
    };
    let target_act = encoder.encode(&target)?;
    let (mut point_state, mut width_state, mut palette_state) = (MomentState::default(), MomentState::default(), MomentState::default());
    let mut trace = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let palette = if nc > 0 { palette_net.palette(&target) } else { Palette::default() };
        let (black, colour) = layers.strokes(&points, &widths, &palette);
        let all: Vec<Stroke> = colour.iter().chain(&black).copied().collect();
        let (mut loss, grad) = stroke_objective(
            encoder,
            &target_act,
            &all,
            (n, n),
            config.softness,
            &config.weights,
            &config.structure_layers,
        )?;
        let l_colour = if nc > 0 { colour_loss(&palette, &p0)? } else { 0.0 };
        loss = total_loss(loss.structure, loss.semantic, l_colour, &config.weights);
        check_finite(it + 1, &loss)?;
        trace.push(loss);

        let mut d_points = vec![0.0; points.len()];
        let mut d_widths = vec![0.0; nc];
        let mut d_palette = vec![[0.0; 3]; palette.len()];
        // `all` lists colour strokes first
        for (k, g) in grad.strokes.iter().enumerate() {
            let (slot, is_colour) = if k < nc { (nb + k, true) } else { (k - nc, false) };
            d_points[slot * 8..slot * 8 + 8].copy_from_slice(&g.points);
            if is_colour {
                d_widths[k] = g.width;
                let e = assignment.0[k];
                for c in 0..3 {
                    d_palette[e][c] += g.colour[c];
                }
            }
        }
        if nc > 0 {
            for (d, g) in d_palette.iter_mut().zip(colour_loss_grad(&palette, &p0)) {
                for c in 0..3 {
                    d[c] += config.weights.colour * g[c];
                }
            }
            let pg = palette_net.backward(&target, &d_palette)?;
            let mut slices = palette_net.param_slices_mut();
            let mut blocks: Vec<ParamBlock<'_>> = slices
                .iter_mut()
                .zip(&pg.blocks)
                .map(|((name, v), (_, g))| ParamBlock::new(name, v, g))
                .collect();
            optimizer_step(&mut blocks, &mut palette_state, config.lr_palette).map_err(|e| at_iteration(e, it + 1))?;
        }
        optimizer_step(&mut [ParamBlock::new("control points", &mut points, &d_points)], &mut point_state, config.lr_points)
            .map_err(|e| at_iteration(e, it + 1))?;
        if nc > 0 {
            optimizer_step(&mut [ParamBlock::new("widths", &mut widths, &d_widths)], &mut width_state, config.lr_widths)
                .map_err(|e| at_iteration(e, it + 1))?;
        }
        project(&mut points, &mut widths, config);
    }

    let palette = if nc > 0 { palette_net.palette(&target) } else { Palette::default() };
    let (black, colour) = layers.strokes(&points, &widths, &palette);
    let s_black = raster::render(&black, WHITE, n, n, config.softness)?;
    let s_colour = raster::render(&colour, WHITE, n, n, config.softness)?;
    let all: Vec<Stroke> = colour.iter().chain(&black).copied().collect();
    let s = raster::render(&all, WHITE, n, n, config.softness)?;
    Ok(PaintingResult {
        s_black,
        s_colour,
        s,
        black,
        colour,
        palette,
        reference_palette: p0,
        assignment,
        loss_trace: trace,
        maps: InitMaps {
            edges,
            saliency: sal,
            attention,
        },
    })
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFinite { block, detail } => Error::NonFinite {
            block,
            detail: format!("iteration {iteration}: {detail}"),
        },
        other => other,
    }
}

/// Top-1 and top-3 accuracy of one painting variant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accuracy {
    pub top1: f64,
    pub top3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RecognitionReport {
    pub black: Accuracy,
    pub colour: Accuracy,
    pub combined: Accuracy,
}

/// Fraction of images whose true class is ranked first, and among the top
/// three, for each of `S_black`, `S_colour` and `S`.
pub fn evaluate_recognition(
    paintings: &[(&PaintingResult, &str)],
    encoder: &dyn ImageEncoder,
    prototypes: &ClassPrototypes,
) -> Result<RecognitionReport> {
    if let Some((_, l)) = paintings.iter().find(|(_, l)| prototypes.index_of(l).is_none()) {
        return Err(Error::domain(format!("unknown label {l}")));
    }
    let k = prototypes.len().min(3);
    let score = |pick: fn(&PaintingResult) -> &Canvas| -> Result<Accuracy> {
        let (mut t1, mut t3) = (0usize, 0usize);
        for (p, label) in paintings {
            let ranked = perceptual::classify(pick(p), encoder, prototypes, k)?;
            t1 += usize::from(ranked[0].0 == *label);
            t3 += usize::from(ranked.iter().any(|(n, _)| n == label));
        }
        let n = paintings.len().max(1) as f64;
        Ok(Accuracy {
            top1: t1 as f64 / n,
            top3: t3 as f64 / n,
        })
    };
    Ok(RecognitionReport {
        black: score(|p| &p.s_black)?,
        colour: score(|p| &p.s_colour)?,
        combined: score(|p| &p.s)?,
    })
}

#[cfg(test)]
mod tests;
