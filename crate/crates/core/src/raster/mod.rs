//! Soft stroke rasterizer with an exact reverse-mode adjoint.
//!
//! A stroke covers pixel centre `q` with `σ((w/2 − d(q)) / a)`, where `d` is
//! the pixel-space distance from `q` to the stroke's flattened centreline and
//! `a` the edge softness. Strokes are composited back to front with
//! `pixel ← (1 − f·α)·pixel + f·α·colour`.
//!
//! Both passes run row-parallel. Each row's gradient contribution is summed
//! into its own buffer and rows are reduced in index order, so results are
//! bit-identical for any thread count.

mod canvas;

use rayon::prelude::*;

pub use canvas::{save_gray_png, to_u8, Canvas, Rgb, BLACK, WHITE};

use crate::error::{Error, Result};
use crate::geometry::{bernstein, CubicBezier, Point, DEFAULT_SEGMENTS};

/// Edge softness in pixels.
pub const DEFAULT_SOFTNESS: f64 = 0.7;

/// Coverage is evaluated only within `width/2 + CULL_MARGIN·softness` pixels
/// of a stroke's bounding box. `σ(−20) ≈ 2e-9`.
pub const CULL_MARGIN: f64 = 20.0;

pub const BLACK_STROKE_WIDTH: f64 = 1.0;
pub const COLOUR_STROKE_OPACITY: f64 = 0.5;

/// Number of scalars in a per-stroke gradient: 8 coordinates, 3 colour
/// components, width, opacity.
pub const STROKE_PARAMS: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stroke {
    /// Centreline in normalized image coordinates.
    pub curve: CubicBezier,
    pub colour: Rgb,
    /// Width in pixels.
    pub width: f64,
    pub opacity: f64,
}

impl Stroke {
    /// Fixed-style stroke of the black layer.
    pub fn black(curve: CubicBezier) -> Self {
        Self {
            curve,
            colour: BLACK,
            width: BLACK_STROKE_WIDTH,
            opacity: 1.0,
        }
    }

    pub fn coloured(curve: CubicBezier, colour: Rgb, width: f64) -> Self {
        Self {
            curve,
            colour,
            width,
            opacity: COLOUR_STROKE_OPACITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::domain(format!("stroke width {} must be positive", self.width)));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::domain(format!("stroke opacity {} outside [0, 1]", self.opacity)));
        }
        if self.colour.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::domain(format!("stroke colour {:?} outside [0, 1]", self.colour)));
        }
        if self.curve.points.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("stroke control point is not finite"));
        }
        Ok(())
    }
}

/// Derivatives of a scalar with respect to one stroke's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrokeGrad {
    /// d/d(x1, y1, .., x4, y4) in normalized coordinates.
    pub points: [f64; 8],
    pub colour: [f64; 3],
    pub width: f64,
    pub opacity: f64,
}

impl StrokeGrad {
    fn from_slice(v: &[f64]) -> Self {
        let mut g = StrokeGrad::default();
        g.points.copy_from_slice(&v[..8]);
        g.colour.copy_from_slice(&v[8..11]);
        g.width = v[11];
        g.opacity = v[12];
        g
    }

    pub fn to_array(&self) -> [f64; STROKE_PARAMS] {
        let mut out = [0.0; STROKE_PARAMS];
        out[..8].copy_from_slice(&self.points);
        out[8..11].copy_from_slice(&self.colour);
        out[11] = self.width;
        out[12] = self.opacity;
        out
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RenderGrad {
    pub strokes: Vec<StrokeGrad>,
}

#[inline]
pub(crate) fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Coverage for a pixel at `distance` pixels from the centreline.
#[inline]
pub fn coverage_from_distance(distance: f64, width: f64, softness: f64) -> f64 {
    sigmoid((0.5 * width - distance) / softness)
}

/// Coverage of `stroke` at `pixel_center` (pixel units) on a `W×H` canvas.
pub fn coverage(stroke: &Stroke, pixel_center: Point, canvas_w: usize, canvas_h: usize, softness: f64) -> f64 {
    let prep = Prepared::new(stroke, canvas_w, canvas_h, softness);
    let hit = prep.nearest(pixel_center);
    coverage_from_distance(hit.distance, stroke.width, softness)
}

struct Hit {
    distance: f64,
    segment: usize,
    s: f64,
    /// Unit vector from the nearest point towards the query (zero on the curve).
    dir: Point,
}

impl Hit {
    /// Feature of the flattened polyline holding the nearest point: a
    /// vertex index, or `usize::MAX - segment` for a segment interior.
    fn feature(&self) -> usize {
        if self.s == 0.0 {
            self.segment
        } else if self.s == 1.0 {
            self.segment + 1
        } else {
            usize::MAX - self.segment
        }
    }
}

/// A stroke flattened in pixel space together with its culling window.
struct Prepared {
    a: Vec<Point>,
    ab: Vec<Point>,
    inv_len2: Vec<f64>,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl Prepared {
    fn new(stroke: &Stroke, w: usize, h: usize, softness: f64) -> Self {
        let k = DEFAULT_SEGMENTS;
        let px = stroke.curve.map(|p| p.scale(w as f64, h as f64));
        let verts: Vec<Point> = (0..=k).map(|i| px.eval_at(i as f64 / k as f64)).collect();
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &verts {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        let m = 0.5 * stroke.width + CULL_MARGIN * softness;
        let range = |lo: f64, hi: f64, n: usize| -> (usize, usize) {
            let first = (lo - m - 0.5).ceil().max(0.0);
            let last = (hi + m - 0.5).floor().min(n as f64 - 1.0);
            if last < first {
                (0, 0)
            } else {
                (first as usize, last as usize + 1)
            }
        };
        let (x0, x1) = range(lo.x, hi.x, w);
        let (y0, y1) = range(lo.y, hi.y, h);
        let mut a = Vec::with_capacity(k);
        let mut ab = Vec::with_capacity(k);
        let mut inv_len2 = Vec::with_capacity(k);
        for win in verts.windows(2) {
            let d = win[1] - win[0];
            let l2 = d.dot(d);
            a.push(win[0]);
            ab.push(d);
            inv_len2.push(if l2 > 0.0 { 1.0 / l2 } else { 0.0 });
        }
        Self { a, ab, inv_len2, x0, x1, y0, y1 }
    }

    #[inline]
    fn covers_row(&self, y: usize) -> bool {
        y >= self.y0 && y < self.y1
    }

    #[inline]
    fn nearest(&self, q: Point) -> Hit {
        let mut best_d2 = f64::INFINITY;
        let mut seg = 0;
        let mut best_s = 0.0;
        for i in 0..self.a.len() {
            let qa = q - self.a[i];
            let ab = self.ab[i];
            let s = (qa.dot(ab) * self.inv_len2[i]).clamp(0.0, 1.0);
            let dx = qa.x - s * ab.x;
            let dy = qa.y - s * ab.y;
            let d2 = dx * dx + dy * dy;
            if d2 < best_d2 {
                best_d2 = d2;
                seg = i;
                best_s = s;
            }
        }
        let p = self.a[seg] + self.ab[seg] * best_s;
        let distance = best_d2.sqrt();
        let dir = if distance > 0.0 {
            (q - p) * (1.0 / distance)
        } else {
            Point::default()
        };
        Hit {
            distance,
            segment: seg,
            s: best_s,
            dir,
        }
    }
}

fn check_inputs(strokes: &[Stroke], w: usize, h: usize, softness: f64) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::domain("canvas dimensions must be at least 1×1"));
    }
    if !(softness > 0.0) {
        return Err(Error::domain("softness must be positive"));
    }
    strokes.iter().try_for_each(Stroke::validate)
}

/// Row-major coverage of one stroke on a `W×H` grid; exactly zero outside
/// the culling window.
pub fn coverage_map(stroke: &Stroke, w: usize, h: usize, softness: f64) -> Vec<f64> {
    let prep = Prepared::new(stroke, w, h, softness);
    let mut out = vec![0.0; w * h];
    for y in prep.y0..prep.y1 {
        for x in prep.x0..prep.x1 {
            let hit = prep.nearest(Point::new(x as f64 + 0.5, y as f64 + 0.5));
            out[y * w + x] = coverage_from_distance(hit.distance, stroke.width, softness);
        }
    }
    out
}

/// Composites `strokes` in list order over a uniform `background`.
pub fn render(strokes: &[Stroke], background: Rgb, w: usize, h: usize, softness: f64) -> Result<Canvas> {
    check_inputs(strokes, w, h, softness)?;
    let prepared: Vec<Prepared> = strokes.iter().map(|s| Prepared::new(s, w, h, softness)).collect();
    let mut canvas = Canvas::filled(w, h, background);
    canvas
        .data_mut()
        .par_chunks_mut(w * 3)
        .enumerate()
        .for_each(|(y, row)| {
            let qy = y as f64 + 0.5;
            for (stroke, prep) in strokes.iter().zip(&prepared) {
                if !prep.covers_row(y) {
                    continue;
                }
                for x in prep.x0..prep.x1 {
                    let hit = prep.nearest(Point::new(x as f64 + 0.5, qy));
                    let fa = coverage_from_distance(hit.distance, stroke.width, softness) * stroke.opacity;
                    let px = &mut row[x * 3..x * 3 + 3];
                    for c in 0..3 {
                        px[c] = (1.0 - fa) * px[c] + fa * stroke.colour[c];
                    }
                }
            }
        });
    Ok(canvas)
}

/// Reverse-mode derivative of `⟨render(strokes), cotangent⟩` with respect to
/// every stroke parameter.
pub fn render_backward(
    strokes: &[Stroke],
    background: Rgb,
    w: usize,
    h: usize,
    softness: f64,
    cotangent: &[f64],
) -> Result<RenderGrad> {
    check_inputs(strokes, w, h, softness)?;
    if cotangent.len() != w * h * 3 {
        return Err(Error::domain(format!(
            "cotangent has {} values, canvas has {}",
            cotangent.len(),
            w * h * 3
        )));
    }
    let n = strokes.len();
    let prepared: Vec<Prepared> = strokes.iter().map(|s| Prepared::new(s, w, h, softness)).collect();
    let basis: Vec<[f64; 4]> = (0..=DEFAULT_SEGMENTS)
        .map(|i| bernstein(i as f64 / DEFAULT_SEGMENTS as f64))
        .collect();
    let (sx, sy) = (w as f64, h as f64);

    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut acc = vec![0.0; n * STROKE_PARAMS];
            let active_strokes: Vec<usize> = (0..n).filter(|&k| prepared[k].covers_row(y)).collect();
            if active_strokes.is_empty() {
                return acc;
            }
            let qy = y as f64 + 0.5;
            let mut active: Vec<(usize, f64, Hit)> = Vec::with_capacity(active_strokes.len());
            let mut prefix: Vec<Rgb> = Vec::with_capacity(active_strokes.len() + 1);
            for x in 0..w {
                let q = Point::new(x as f64 + 0.5, qy);
                active.clear();
                for &k in &active_strokes {
                    let p = &prepared[k];
                    if x >= p.x0 && x < p.x1 {
                        let hit = p.nearest(q);
                        let f = coverage_from_distance(hit.distance, strokes[k].width, softness);
                        active.push((k, f, hit));
                    }
                }
                if active.is_empty() {
                    continue;
                }
                let off = (y * w + x) * 3;
                let mut g = [cotangent[off], cotangent[off + 1], cotangent[off + 2]];
                if g == [0.0; 3] {
                    continue;
                }
                prefix.clear();
                let mut c = background;
                prefix.push(c);
                for (k, f, _) in &active {
                    let fa = f * strokes[*k].opacity;
                    let col = strokes[*k].colour;
                    for ch in 0..3 {
                        c[ch] = (1.0 - fa) * c[ch] + fa * col[ch];
                    }
                    prefix.push(c);
                }
                for (m, (k, f, hit)) in active.iter().enumerate().rev() {
                    let stroke = &strokes[*k];
                    let below = prefix[m];
                    let fa = f * stroke.opacity;
                    let slot = &mut acc[k * STROKE_PARAMS..(k + 1) * STROKE_PARAMS];
                    let mut dfa = 0.0;
                    for ch in 0..3 {
                        slot[8 + ch] += g[ch] * fa;
                        dfa += g[ch] * (stroke.colour[ch] - below[ch]);
                        g[ch] *= 1.0 - fa;
                    }
                    slot[12] += dfa * f;
                    // d f / d u with u = (w/2 - d) / a
                    let du = dfa * stroke.opacity * f * (1.0 - f) / softness;
                    slot[11] += 0.5 * du;
                    let dd = -du;
                    if hit.distance > 0.0 {
                        // d distance / d segment endpoints: -(1-s)·dir and -s·dir.
                        let ba = &basis[hit.segment];
                        let bb = &basis[hit.segment + 1];
                        let ga = -(1.0 - hit.s) * dd;
                        let gb = -hit.s * dd;
                        for j in 0..4 {
                            let wj = ga * ba[j] + gb * bb[j];
                            slot[2 * j] += wj * hit.dir.x * sx;
                            slot[2 * j + 1] += wj * hit.dir.y * sy;
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = vec![0.0; n * STROKE_PARAMS];
    for row in &rows {
        for (t, v) in total.iter_mut().zip(row) {
            *t += v;
        }
    }
    Ok(RenderGrad {
        strokes: total.chunks_exact(STROKE_PARAMS).map(StrokeGrad::from_slice).collect(),
    })
}

/// Colour strokes over white, then black strokes on top, in one pass.
pub fn composite_painting(black: &[Stroke], colour: &[Stroke], w: usize, h: usize) -> Result<Canvas> {
    let all: Vec<Stroke> = colour.iter().chain(black).copied().collect();
    render(&all, WHITE, w, h, DEFAULT_SOFTNESS)
}

/// Length scale (pixels) below which a vertex-to-edge transition of the
/// distance field is sharp enough to disturb a finite difference: the jump
/// in second derivative grows like the inverse of the segment length or of
/// the distance to the curve.
pub const SHARP_SCALE: f64 = 0.1;

/// Counts pixels where the distance field is not twice differentiable
/// between two configurations of the same stroke list, in the ways that
/// disturb a central difference.
///
/// Three loci qualify: a switch of the nearest flattened segment that does
/// not pass through a shared vertex (a slope discontinuity); the centreline
/// sweeping across a pixel centre, seen as the direction to the nearest
/// point reversing (the V-shaped minimum of the unsigned distance); and a
/// vertex-to-edge transition on a segment shorter than [`SHARP_SCALE`]
/// (near cusps) or within that distance of the curve. Finite-difference oracles use this to skip
/// perturbations that straddle any of them.
pub fn kink_crossings(before: &[Stroke], after: &[Stroke], w: usize, h: usize, softness: f64) -> usize {
    assert_eq!(before.len(), after.len());
    let mut count = 0;
    for (sa, sb) in before.iter().zip(after) {
        let pa = Prepared::new(sa, w, h, softness);
        let pb = Prepared::new(sb, w, h, softness);
        for y in pa.y0.max(pb.y0)..pa.y1.min(pb.y1) {
            for x in pa.x0.max(pb.x0)..pa.x1.min(pb.x1) {
                let q = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                let (ha, hb) = (pa.nearest(q), pb.nearest(q));
                let (lo, hi) = if ha.segment <= hb.segment { (&ha, &hb) } else { (&hb, &ha) };
                // the path between the hits must run through a shared vertex
                let through_vertex = hi.segment == lo.segment
                    || (hi.segment == lo.segment + 1 && ((lo.s == 1.0 && hi.s < 1.0) || (hi.s == 0.0 && lo.s > 0.0)));
                let sharp = |h: &Hit, p: &Prepared| h.distance < SHARP_SCALE || p.inv_len2[h.segment] * SHARP_SCALE * SHARP_SCALE > 1.0;
                let curvature_jump = ha.feature() != hb.feature() && (sharp(&ha, &pa) || sharp(&hb, &pb));
                if !through_vertex || curvature_jump || ha.dir.dot(hb.dir) < 0.0 {
                    count += 1;
                }
            }
        }
    }
    count
}
