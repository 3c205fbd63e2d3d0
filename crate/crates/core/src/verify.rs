//! Self-check suites: finite-difference gradient checks, the codec round
//! trip and the geometry distance oracle.

use std::fmt::Write as _;

use crate::codec::{self, ColourStroke, QuantSpec, StrokeSet, WIDTH_RANGE};
use crate::painter::COORD_RANGE;
use crate::error::Result;
use crate::geometry::{bezier_eval, point_curve_distance, CubicBezier, Point, DEFAULT_SEGMENTS};
use crate::nn::{self, Tensor3};
use crate::palette::{Palette, PaletteNetwork, PaletteSpec};
use crate::perceptual::{Activations, ConvEncoder, EncoderCotangent, EncoderSpec, ImageEncoder};
use crate::raster::{self, Canvas, RenderGrad, Rgb, Stroke, DEFAULT_SOFTNESS, STROKE_PARAMS};
use crate::rng::XorShift64Star;

/// Signature of [`raster::render_backward`], injectable so a corrupted
/// adjoint can be shown to fail the check.
pub type RenderBackwardFn = fn(&[Stroke], Rgb, usize, usize, f64, &[f64]) -> Result<RenderGrad>;

/// Mutation fixture: the real reverse pass with the sign of the coverage
/// derivative flipped, which negates the control-point and width gradients.
pub fn sign_flipped_render_backward(
    strokes: &[Stroke],
    background: Rgb,
    w: usize,
    h: usize,
    softness: f64,
    cotangent: &[f64],
) -> Result<RenderGrad> {
    let mut g = raster::render_backward(strokes, background, w, h, softness, cotangent)?;
    for s in &mut g.strokes {
        s.points.iter_mut().for_each(|p| *p = -*p);
        s.width = -s.width;
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "{:<width$}  {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
        }
        out
    }
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Perturbations straddling a kink of the distance field, left out.
    pub skipped: usize,
}

impl GradCheck {
    fn to_result(self, name: &str, tolerance: f64) -> CheckResult {
        CheckResult {
            name: name.into(),
            passed: self.checked > 0 && self.max_rel_error <= tolerance,
            detail: format!(
                "max rel err {:.2e} (tol {tolerance:.0e}), {} checked, {} skipped",
                self.max_rel_error, self.checked, self.skipped
            ),
        }
    }
}

fn rel_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn random_stroke(r: &mut XorShift64Star) -> Stroke {
    let (cx, cy) = (r.uniform(0.2, 0.8), r.uniform(0.2, 0.8));
    let mut c = [0.0; 8];
    for i in 0..4 {
        c[2 * i] = cx + r.uniform(-0.25, 0.25);
        c[2 * i + 1] = cy + r.uniform(-0.25, 0.25);
    }
    Stroke {
        curve: CubicBezier::from_coords(c),
        colour: [r.uniform(0.01, 0.99), r.uniform(0.01, 0.99), r.uniform(0.01, 0.99)],
        width: r.uniform(1.0, 5.0),
        opacity: r.uniform(0.3, 0.95),
    }
}

/// Central differences of `⟨render, g⟩` against the reverse pass on `scenes`
/// random scenes of 1 to `max_strokes` strokes. Steps are 1e-3 in pixel
/// units for control points and widths, 1e-3 for colour and opacity.
pub fn raster_gradient_check(
    scenes: usize,
    max_strokes: usize,
    size: usize,
    seed: u64,
    backward: RenderBackwardFn,
) -> Result<GradCheck> {
    let mut r = XorShift64Star::stream(seed, "verify.raster");
    let bg = [0.9, 0.8, 0.7];
    let mut out = GradCheck::default();
    for scene in 0..scenes {
        let n = 1 + scene % max_strokes.max(1);
        let strokes: Vec<Stroke> = (0..n).map(|_| random_stroke(&mut r)).collect();
        let cot: Vec<f64> = (0..size * size * 3).map(|_| r.normal()).collect();
        let loss = |s: &[Stroke]| -> Result<f64> { Ok(nn::dot(raster::render(s, bg, size, size, DEFAULT_SOFTNESS)?.data(), &cot)) };
        let g = backward(&strokes, bg, size, size, DEFAULT_SOFTNESS, &cot)?;
        for (k, gk) in g.strokes.iter().enumerate() {
            let analytic = gk.to_array();
            for p in 0..STROKE_PARAMS {
                let eps = if p < 8 { 1e-3 / size as f64 } else { 1e-3 };
                let shifted = |delta: f64| {
                    let mut s = strokes.clone();
                    let mut c = s[k].curve.coords();
                    match p {
                        0..=7 => c[p] += delta,
                        8..=10 => s[k].colour[p - 8] += delta,
                        11 => s[k].width += delta,
                        _ => s[k].opacity += delta,
                    }
                    s[k].curve = CubicBezier::from_coords(c);
                    s
                };
                let (lo, hi) = (shifted(-eps), shifted(eps));
                if raster::kink_crossings(&lo, &hi, size, size, DEFAULT_SOFTNESS) > 0 {
                    out.skipped += 1;
                    continue;
                }
                let fd = (loss(&hi)? - loss(&lo)?) / (2.0 * eps);
                out.max_rel_error = out.max_rel_error.max(rel_error(analytic[p], fd, 1e-6));
                out.checked += 1;
            }
        }
    }
    Ok(out)
}

fn pairing(act: &Activations, cot: &EncoderCotangent) -> f64 {
    let mut s = 0.0;
    for (l, t) in &cot.layers {
        s += nn::dot(&act.layers[*l].data, &t.data);
    }
    if let Some(e) = &cot.embedding {
        s += nn::dot(&act.embedding, e);
    }
    if let Some(z) = &cot.pre_embedding {
        s += nn::dot(&act.pre_embedding, z);
    }
    s
}

fn noise_image(size: usize, r: &mut XorShift64Star) -> Result<Canvas> {
    Canvas::from_data(size, size, (0..size * size * 3).map(|_| r.next_f64()).collect())
}

/// Input gradient of a small random encoder against central differences
/// (step 1e-6) on every `stride`-th input value.
pub fn encoder_gradient_check(seed: u64, stride: usize) -> Result<GradCheck> {
    let spec = EncoderSpec {
        input_size: 16,
        stages: vec![4, 6],
        embedding_dim: 8,
    };
    let enc = ConvEncoder::new(spec, seed)?;
    let mut r = XorShift64Star::stream(seed, "verify.encoder");
    let img = noise_image(18, &mut r)?;
    let act = enc.encode(&img)?;
    let l0 = &act.layers[0];
    let cot = EncoderCotangent {
        layers: vec![(
            0,
            Tensor3 {
                c: l0.c,
                h: l0.h,
                w: l0.w,
                data: (0..l0.len()).map(|_| r.normal()).collect(),
            },
        )],
        embedding: Some((0..8).map(|_| r.normal()).collect()),
        pre_embedding: Some((0..8).map(|_| r.normal()).collect()),
    };
    let grad = enc.input_gradient(&act, &cot)?;
    let eps = 1e-6;
    let mut out = GradCheck::default();
    for idx in (0..img.data().len()).step_by(stride.max(1)) {
        let (mut plus, mut minus) = (img.clone(), img.clone());
        plus.data_mut()[idx] += eps;
        minus.data_mut()[idx] -= eps;
        let fd = (pairing(&enc.encode(&plus)?, &cot) - pairing(&enc.encode(&minus)?, &cot)) / (2.0 * eps);
        out.max_rel_error = out.max_rel_error.max(rel_error(fd, grad[idx], 1e-3));
        out.checked += 1;
    }
    Ok(out)
}

/// Parameter gradients of a d = 4, C = 2 palette network against central
/// differences (step 1e-6) on every parameter.
pub fn palette_gradient_check(seed: u64) -> Result<GradCheck> {
    let spec = PaletteSpec {
        input_size: 16,
        dim: 4,
        colours: 2,
    };
    let net = PaletteNetwork::new(spec, seed)?;
    let mut r = XorShift64Star::stream(seed, "verify.palette");
    let img = noise_image(16, &mut r)?;
    let cot: Vec<[f64; 3]> = (0..2).map(|_| [r.normal(), r.normal(), r.normal()]).collect();
    let pair = |n: &PaletteNetwork| -> f64 {
        n.palette(&img).entries.iter().flatten().zip(cot.iter().flatten()).map(|(a, b)| a * b).sum()
    };
    let grads = net.backward(&img, &cot)?;
    let eps = 1e-6;
    let mut out = GradCheck::default();
    for (block, (_, g)) in grads.blocks.iter().enumerate() {
        for (i, gi) in g.iter().enumerate() {
            let (mut plus, mut minus) = (net.clone(), net.clone());
            plus.param_slices_mut()[block].1[i] += eps;
            minus.param_slices_mut()[block].1[i] -= eps;
            let fd = (pair(&plus) - pair(&minus)) / (2.0 * eps);
            out.max_rel_error = out.max_rel_error.max(rel_error(fd, *gi, 1e-5));
            out.checked += 1;
        }
    }
    Ok(out)
}

/// A random stroke set inside the codec's quantization domain.
pub fn random_stroke_set(r: &mut XorShift64Star, black: usize, colour: usize, palette: usize, size: usize) -> StrokeSet {
    let curve = |r: &mut XorShift64Star| {
        let mut v = [0.0; 8];
        for x in &mut v {
            *x = r.uniform(COORD_RANGE.0, COORD_RANGE.1);
        }
        CubicBezier::from_coords(v)
    };
    let black = (0..black).map(|_| curve(r)).collect();
    let colour = (0..colour)
        .map(|_| ColourStroke {
            curve: curve(r),
            width: r.uniform(WIDTH_RANGE.0, WIDTH_RANGE.1),
            palette_index: r.below(palette.max(1)),
        })
        .collect();
    let entries = (0..palette).map(|_| [r.next_f64(), r.next_f64(), r.next_f64()]).collect();
    StrokeSet {
        width: size,
        height: size,
        black,
        colour,
        palette: Palette { entries },
    }
}

/// Number of random stroke sets whose decode re-encodes to identical bytes.
pub fn codec_round_trip(cases: usize, seed: u64, spec: &QuantSpec) -> Result<usize> {
    let mut r = XorShift64Star::stream(seed, "verify.codec");
    let c = 1usize << spec.palette_index_bits.min(4);
    let mut identical = 0;
    for _ in 0..cases {
        let (nb, nc) = (r.below(33), r.below(33));
        let set = random_stroke_set(&mut r, nb, nc, c, 224);
        let stream = codec::encode_set(&set, spec)?;
        let back = codec::decode(&stream)?;
        identical += usize::from(codec::encode_set(&back, spec)? == stream);
    }
    Ok(identical)
}

/// Largest gap between the flattened distance and a dense brute-force
/// distance over `pairs` random point/curve pairs.
pub fn geometry_oracle(pairs: usize, samples: usize, seed: u64) -> Result<f64> {
    let mut r = XorShift64Star::stream(seed, "verify.geometry");
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let mut c = [0.0; 8];
        c.iter_mut().for_each(|v| *v = r.uniform(-0.1, 1.1));
        let curve = CubicBezier::from_coords(c);
        let q = Point::new(r.uniform(-0.2, 1.2), r.uniform(-0.2, 1.2));
        let (d, _) = point_curve_distance(q, &curve, DEFAULT_SEGMENTS)?;
        let mut brute = f64::INFINITY;
        for i in 0..samples {
            let t = i as f64 / (samples - 1) as f64;
            brute = brute.min(q.distance(bezier_eval(&curve, t)?));
        }
        worst = worst.max((d - brute).abs());
    }
    Ok(worst)
}

/// Runs every suite with the given reverse pass for the rasterizer.
pub fn run_all(seed: u64, backward: RenderBackwardFn) -> Result<VerifyReport> {
    let mut checks = vec![
        raster_gradient_check(6, 3, 48, seed, backward)?.to_result("raster gradient", 1e-3),
        encoder_gradient_check(seed, 5)?.to_result("encoder gradient", 1e-4),
        palette_gradient_check(seed)?.to_result("palette gradient", 1e-3),
    ];
    let cases = 20;
    let identical = codec_round_trip(cases, seed, &QuantSpec::default())?;
    checks.push(CheckResult {
        name: "codec round trip".into(),
        passed: identical == cases,
        detail: format!("{identical}/{cases} re-encodings bit-identical"),
    });
    let worst = geometry_oracle(100, 10_000, seed)?;
    checks.push(CheckResult {
        name: "geometry distance".into(),
        passed: worst <= 1e-3,
        detail: format!("max gap {worst:.2e} (tol 1e-3) over 100 pairs"),
    });
    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_build_passes_every_suite() {
        let report = run_all(0, raster::render_backward).unwrap();
        assert!(report.all_passed(), "{}", report.table());
        assert_eq!(report.checks.len(), 5);
    }

    #[test]
    fn flipped_coverage_adjoint_fails_the_raster_check() {
        let g = raster_gradient_check(2, 2, 16, 1, sign_flipped_render_backward).unwrap();
        assert!(g.max_rel_error > 1.0);
        let report = run_all(0, sign_flipped_render_backward).unwrap();
        let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(failed, ["raster gradient"]);
    }
}
