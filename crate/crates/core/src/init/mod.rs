//! Stroke initialization: XDoG edges, encoder saliency, the softmax
//! attention map, control-point placement and the reference palette.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{CubicBezier, Point};
use crate::palette::Palette;
use crate::perceptual::{EncoderCotangent, ImageEncoder};
use crate::raster::{self, save_gray_png, Canvas, Rgb, Stroke, BLACK};
use crate::rng::XorShift64Star;

/// A row-major `W×H` scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::domain(format!("map has {} values, expected {width}×{height}", values.len())));
        }
        Ok(Self { width, height, values })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Writes the map min-max stretched to 8-bit grey.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let v: Vec<f64> = self.values.iter().map(|x| (x - lo) / span).collect();
        save_gray_png(path, self.width, self.height, &v)
    }
}

/// Probability map over pixels: non-negative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap(ScalarMap);

impl AttentionMap {
    pub fn map(&self) -> &ScalarMap {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XDoGParams {
    pub sigma: f64,
    pub k: f64,
    /// Sharpening weight.
    pub p: f64,
    pub epsilon: f64,
    pub phi: f64,
}

impl Default for XDoGParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            k: 1.6,
            p: 20.0,
            epsilon: 0.1,
            phi: 200.0,
        }
    }
}

impl XDoGParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.k > 1.0 && self.phi > 0.0) || !self.p.is_finite() || !self.epsilon.is_finite() {
            return Err(Error::config("XDoG needs sigma > 0, k > 1 and phi > 0"));
        }
        Ok(())
    }
}

/// Normalized Gaussian taps truncated at `3σ`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(map: &ScalarMap, sigma: f64) -> ScalarMap {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (map.width, map.height);
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, t)| t * map.values[y * w + clamp(x as isize + j as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, t)| t * tmp[clamp(y as isize + j as isize - r, h) * w + x])
                .sum();
        }
    }
    ScalarMap { width: w, height: h, values: out }
}

fn luminance(image: &Canvas) -> ScalarMap {
    ScalarMap {
        width: image.width(),
        height: image.height(),
        values: image.luminance(),
    }
}

/// Extended difference of Gaussians on luminance: `1` on flat regions,
/// falling towards `0` on edges.
pub fn xdog(image: &Canvas, params: &XDoGParams) -> Result<ScalarMap> {
    params.validate()?;
    let l = luminance(image);
    let g1 = gaussian_blur(&l, params.sigma);
    let g2 = gaussian_blur(&l, params.k * params.sigma);
    let values = g1
        .values
        .iter()
        .zip(&g2.values)
        .map(|(a, b)| {
            let d = (1.0 + params.p) * a - params.p * b;
            if d >= params.epsilon {
                1.0
            } else {
                (1.0 + (params.phi * (d - params.epsilon)).tanh()).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(ScalarMap { values, ..l })
}

/// Edge strength `1 − xdog`, high on edges.
pub fn edge_map(image: &Canvas, params: &XDoGParams) -> Result<ScalarMap> {
    let mut m = xdog(image, params)?;
    m.values.iter_mut().for_each(|v| *v = 1.0 - *v);
    Ok(m)
}

/// `Σ_c |∂‖z‖²/∂I_c|` per pixel, `z` the pre-normalization embedding.
pub fn saliency_raw(image: &Canvas, encoder: &dyn ImageEncoder) -> Result<ScalarMap> {
    let act = encoder.encode(image)?;
    let cot = EncoderCotangent {
        pre_embedding: Some(act.pre_embedding.iter().map(|z| 2.0 * z).collect()),
        ..Default::default()
    };
    let g = encoder.input_gradient(&act, &cot)?;
    let values = g.chunks_exact(3).map(|c| c[0].abs() + c[1].abs() + c[2].abs()).collect();
    ScalarMap::new(image.width(), image.height(), values)
}

/// Smoothing applied to the raw saliency, in pixels.
pub const SALIENCY_BLUR: f64 = 2.0;

/// Raw saliency blurred with `σ = 2` px and min-max normalized; all zeros
/// when the blurred map is constant.
pub fn saliency(image: &Canvas, encoder: &dyn ImageEncoder) -> Result<ScalarMap> {
    let mut m = gaussian_blur(&saliency_raw(image, encoder)?, SALIENCY_BLUR);
    let lo = m.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = m.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        m.values.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    } else {
        m.values.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(m)
}

pub const DEFAULT_TEMPERATURE: f64 = 0.05;

/// Softmax over all pixels of `saliency ⊙ edges / τ`.
pub fn enhanced_attention(saliency: &ScalarMap, edges: &ScalarMap, temperature: f64) -> Result<AttentionMap> {
    if saliency.width != edges.width || saliency.height != edges.height {
        return Err(Error::domain("saliency and edge maps differ in shape"));
    }
    if !(temperature > 0.0) {
        return Err(Error::domain("temperature must be positive"));
    }
    let logits: Vec<f64> = saliency
        .values
        .iter()
        .zip(&edges.values)
        .map(|(s, e)| s * e / temperature)
        .collect();
    Ok(AttentionMap(ScalarMap {
        width: saliency.width,
        height: saliency.height,
        values: crate::nn::softmax(&logits),
    }))
}

/// Attention map from an explicit probability field (normalized here).
pub fn attention_from_weights(map: ScalarMap) -> Result<AttentionMap> {
    let s: f64 = map.values.iter().sum();
    if map.values.iter().any(|v| !(*v >= 0.0)) || !(s > 0.0) || !s.is_finite() {
        return Err(Error::domain("attention weights must be non-negative with a positive sum"));
    }
    let values = map.values.iter().map(|v| v / s).collect();
    Ok(AttentionMap(ScalarMap { values, ..map }))
}

pub const DEFAULT_RADIUS: f64 = 0.05;

fn pixel_point(idx: usize, w: usize, h: usize) -> Point {
    Point::new(((idx % w) as f64 + 0.5) / w as f64, ((idx / w) as f64 + 0.5) / h as f64)
}

/// Places `n` strokes. The first starts at the attention argmax (row-major
/// tie-break); later first points are drawn from the map with a disk of
/// radius `r` (normalized units) suppressed around every chosen point. When
/// no mass remains, draws fall back to uniform choice among unsuppressed
/// pixels, then among all unused pixels. The other three control points are
/// uniform in the `L∞` ball of radius `r` around the first.
pub fn init_strokes(attention: &AttentionMap, n: usize, radius: f64, rng: &mut XorShift64Star) -> Result<Vec<CubicBezier>> {
    let (w, h) = (attention.width(), attention.height());
    if n > w * h {
        return Err(Error::domain(format!("{n} strokes exceed the {w}×{h} pixels")));
    }
    if !(radius > 0.0) {
        return Err(Error::domain("init radius must be positive"));
    }
    let mut mass = attention.values().to_vec();
    let mut suppressed = vec![false; w * h];
    let mut used = vec![false; w * h];
    let mut curves = Vec::with_capacity(n);
    for i in 0..n {
        let idx = if i == 0 {
            (0..mass.len()).fold(0, |b, j| if mass[j] > mass[b] { j } else { b })
        } else {
            let total: f64 = mass.iter().sum();
            if total > 0.0 {
                let u = rng.next_f64() * total;
                let mut acc = 0.0;
                let mut pick = None;
                for (j, m) in mass.iter().enumerate() {
                    acc += m;
                    if *m > 0.0 && acc > u {
                        pick = Some(j);
                        break;
                    }
                }
                pick.unwrap_or_else(|| mass.iter().rposition(|m| *m > 0.0).expect("positive mass"))
            } else {
                let free: Vec<usize> = (0..w * h).filter(|&j| !suppressed[j]).collect();
                let pool = if free.is_empty() {
                    (0..w * h).filter(|&j| !used[j]).collect()
                } else {
                    free
                };
                pool[rng.below(pool.len())]
            }
        };
        used[idx] = true;
        let p = pixel_point(idx, w, h);
        for j in 0..w * h {
            let q = pixel_point(j, w, h);
            if (q.x - p.x).hypot(q.y - p.y) <= radius {
                suppressed[j] = true;
                mass[j] = 0.0;
            }
        }
        let mut pts = [p; 4];
        for pt in pts.iter_mut().skip(1) {
            *pt = Point::new(p.x + rng.uniform(-radius, radius), p.y + rng.uniform(-radius, radius));
        }
        curves.push(CubicBezier::new(pts[0], pts[1], pts[2], pts[3]));
    }
    Ok(curves)
}

/// Stroke width of the weight maps behind the reference palette, in pixels.
pub const PALETTE_PROBE_WIDTH: f64 = 3.0;
pub const KMEANS_ITERATIONS: usize = 20;

/// Attention-weighted mean colour under each stroke.
pub fn stroke_colours(curves: &[CubicBezier], attention: &AttentionMap, image: &Canvas) -> Result<Vec<Rgb>> {
    let (w, h) = (attention.width(), attention.height());
    if image.width() != w || image.height() != h {
        return Err(Error::domain("image and attention map differ in shape"));
    }
    Ok(curves
        .iter()
        .map(|c| {
            let stroke = Stroke {
                curve: *c,
                colour: BLACK,
                width: PALETTE_PROBE_WIDTH,
                opacity: 1.0,
            };
            let cov = raster::coverage_map(&stroke, w, h, raster::DEFAULT_SOFTNESS);
            let mut weights: Vec<f64> = cov.iter().zip(attention.values()).map(|(f, a)| f * a).collect();
            if !(weights.iter().sum::<f64>() > 0.0) {
                weights = cov.iter().map(|&f| if f > 0.5 { 1.0 } else { 0.0 }).collect();
                if !(weights.iter().sum::<f64>() > 0.0) {
                    weights = vec![1.0; w * h];
                }
            }
            let s: f64 = weights.iter().sum();
            let mut c = [0.0; 3];
            for (p, wt) in weights.iter().enumerate() {
                if *wt > 0.0 {
                    let px = image.pixel(p % w, p / w);
                    for k in 0..3 {
                        c[k] += wt / s * px[k];
                    }
                }
            }
            c.map(|v: f64| v.clamp(0.0, 1.0))
        })
        .collect())
}

fn dist2(a: &Rgb, b: &Rgb) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

/// k-means++ seeding and Lloyd iterations; centroids ordered by cluster
/// size, largest first, ties by seeding order.
pub fn kmeans(points: &[Rgb], k: usize, iterations: usize, rng: &mut XorShift64Star) -> Result<Vec<Rgb>> {
    if k == 0 || k > points.len() {
        return Err(Error::domain(format!("cannot form {k} clusters from {} points", points.len())));
    }
    let mut centres = vec![points[rng.below(points.len())]];
    while centres.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centres.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let u = rng.next_f64() * total;
            let mut acc = 0.0;
            d.iter()
                .position(|v| {
                    acc += v;
                    *v > 0.0 && acc > u
                })
                .unwrap_or_else(|| d.iter().rposition(|v| *v > 0.0).expect("positive distance"))
        } else {
            rng.below(points.len())
        };
        centres.push(points[next]);
    }
    let nearest = |p: &Rgb, centres: &[Rgb]| (0..centres.len()).fold(0, |b, j| if dist2(p, &centres[j]) < dist2(p, &centres[b]) { j } else { b });
    let mut sizes = vec![0usize; k];
    for _ in 0..iterations {
        let mut sums = vec![[0.0; 3]; k];
        sizes = vec![0; k];
        for p in points {
            let j = nearest(p, &centres);
            sizes[j] += 1;
            for c in 0..3 {
                sums[j][c] += p[c];
            }
        }
        for j in 0..k {
            if sizes[j] > 0 {
                centres[j] = sums[j].map(|s| s / sizes[j] as f64);
            }
        }
    }
    sizes = vec![0; k];
    for p in points {
        sizes[nearest(p, &centres)] += 1;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    Ok(order.into_iter().map(|j| centres[j]).collect())
}

/// Reference palette of `C` entries from the colour strokes' weighted mean
/// colours, clustered when `C` is below the stroke count. Also returns the
/// per-stroke colours.
pub fn reference_palette(
    curves: &[CubicBezier],
    attention: &AttentionMap,
    image: &Canvas,
    colours: usize,
    rng: &mut XorShift64Star,
) -> Result<(Palette, Vec<Rgb>)> {
    if colours == 0 {
        return Err(Error::domain("palette size must be at least 1"));
    }
    if colours > curves.len() {
        return Err(Error::domain(format!("palette size {colours} exceeds {} colour strokes", curves.len())));
    }
    let raw = stroke_colours(curves, attention, image)?;
    let entries = if colours == raw.len() {
        raw.clone()
    } else {
        kmeans(&raw, colours, KMEANS_ITERATIONS, rng)?
    };
    Ok((Palette::new(entries)?, raw))
}

#[cfg(test)]
mod tests;
