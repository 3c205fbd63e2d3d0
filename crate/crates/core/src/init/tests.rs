use super::*;
use crate::perceptual::{ConvEncoder, EncoderSpec};
use crate::raster::WHITE;

fn uniform_attention(w: usize, h: usize) -> AttentionMap {
    attention_from_weights(ScalarMap::new(w, h, vec![1.0; w * h]).unwrap()).unwrap()
}

fn noise_image(w: usize, h: usize, seed: u64) -> Canvas {
    let mut r = XorShift64Star::new(seed);
    let data = (0..w * h * 3).map(|_| r.next_f64()).collect();
    Canvas::from_data(w, h, data).unwrap()
}

#[test]
fn xdog_on_flat_images() {
    let p = XDoGParams::default();
    let white = xdog(&Canvas::filled(12, 9, WHITE), &p).unwrap();
    assert!(white.values.iter().all(|&v| v == 1.0));
    let grey = xdog(&Canvas::filled(12, 9, [0.03; 3]), &p).unwrap();
    assert!(grey.values.iter().all(|&v| (v - grey.values[0]).abs() < 1e-12));
    assert!(grey.values[0] < 1.0);
    assert!(XDoGParams { k: 1.0, ..p }.validate().is_err());
}

/// Dense 2-D convolution with a non-separable kernel and replicated edges.
fn dense_blur(l: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut norm = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            norm += (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                    let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                    acc += (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp() * l[sy * w + sx];
                }
            }
            out[y as usize * w + x as usize] = acc / norm;
        }
    }
    out
}

#[test]
fn xdog_step_edge_matches_dense_convolution() {
    let (w, h) = (24, 10);
    let img = Canvas::from_fn(w, h, |x, _| if x < 12 { [0.9; 3] } else { [0.2; 3] });
    let p = XDoGParams::default();
    let got = xdog(&img, &p).unwrap();
    let l = img.luminance();
    let (g1, g2) = (dense_blur(&l, w, h, p.sigma), dense_blur(&l, w, h, p.k * p.sigma));
    for i in 0..w * h {
        let d = (1.0 + p.p) * g1[i] - p.p * g2[i];
        let t = if d >= p.epsilon { 1.0 } else { (1.0 + (p.phi * (d - p.epsilon)).tanh()).clamp(0.0, 1.0) };
        assert!((got.values[i] - t).abs() < 1e-6);
    }
    let row = &got.values[5 * w..6 * w];
    let min_x = (0..w).fold(0, |b, x| if row[x] < row[b] { x } else { b });
    assert!((11..=13).contains(&min_x), "minimum at {min_x}");
}

#[test]
fn xdog_mirror_equivariance() {
    let img = noise_image(15, 11, 3);
    let mirrored = Canvas::from_fn(15, 11, |x, y| img.pixel(14 - x, y));
    let p = XDoGParams::default();
    let (a, b) = (xdog(&img, &p).unwrap(), xdog(&mirrored, &p).unwrap());
    for y in 0..11 {
        for x in 0..15 {
            assert_eq!(a.get(x, y), b.get(14 - x, y));
        }
    }
}

#[test]
fn saliency_range_and_zero_case() {
    let enc = ConvEncoder::new(EncoderSpec { input_size: 32, ..EncoderSpec::default() }, 1).unwrap();
    let s = saliency(&noise_image(24, 24, 2), &enc).unwrap();
    let lo = s.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = s.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!((lo, hi), (0.0, 1.0));
    let mut zero = enc.clone();
    zero.embed.weight.iter_mut().for_each(|v| *v = 0.0);
    let s = saliency(&noise_image(24, 24, 2), &zero).unwrap();
    assert!(s.values.iter().all(|&v| v == 0.0));
}

#[test]
fn saliency_matches_finite_differences() {
    let enc = ConvEncoder::new(
        EncoderSpec {
            input_size: 16,
            stages: vec![6, 8],
            embedding_dim: 8,
        },
        4,
    )
    .unwrap();
    let img = noise_image(16, 16, 5);
    let raw = saliency_raw(&img, &enc).unwrap();
    let energy = |c: &Canvas| -> f64 { enc.encode(c).unwrap().pre_embedding.iter().map(|z| z * z).sum() };
    let eps = 1e-6;
    for p in (0..256).step_by(3) {
        let mut fd_sum = 0.0;
        for c in 0..3 {
            let (mut a, mut b) = (img.clone(), img.clone());
            a.data_mut()[p * 3 + c] += eps;
            b.data_mut()[p * 3 + c] -= eps;
            fd_sum += ((energy(&a) - energy(&b)) / (2.0 * eps)).abs();
        }
        let got = raw.values[p];
        assert!((fd_sum - got).abs() <= 1e-2 * fd_sum.max(1e-6), "pixel {p}: {fd_sum} vs {got}");
    }
}

#[test]
fn attention_normalization() {
    let s = ScalarMap::new(4, 3, vec![0.5; 12]).unwrap();
    let e = ScalarMap::new(4, 3, vec![1.0; 12]).unwrap();
    let a = enhanced_attention(&s, &e, DEFAULT_TEMPERATURE).unwrap();
    assert!(a.values().iter().all(|&v| (v - 1.0 / 12.0).abs() < 1e-15));
    let mut peaked = s.clone();
    peaked.values = vec![0.0; 12];
    peaked.values[7] = 1.0;
    let a = enhanced_attention(&peaked, &e, DEFAULT_TEMPERATURE).unwrap();
    assert!(a.values()[7] > 0.99);
    assert!((a.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let wrong = ScalarMap::new(3, 4, vec![1.0; 12]).unwrap();
    assert!(matches!(enhanced_attention(&s, &wrong, 0.05), Err(Error::Domain(_))));
}

#[test]
fn first_stroke_starts_at_argmax() {
    let mut v = vec![1.0; 20 * 10];
    v[3 * 20 + 7] = 5.0;
    v[6 * 20 + 2] = 5.0;
    let att = attention_from_weights(ScalarMap::new(20, 10, v).unwrap()).unwrap();
    let c = init_strokes(&att, 1, DEFAULT_RADIUS, &mut XorShift64Star::new(1)).unwrap();
    assert_eq!(c[0].points[0], Point::new(7.5 / 20.0, 3.5 / 10.0));
    for p in &c[0].points[1..] {
        assert!((p.x - c[0].points[0].x).abs() <= DEFAULT_RADIUS);
        assert!((p.y - c[0].points[0].y).abs() <= DEFAULT_RADIUS);
    }
    let uniform = uniform_attention(4, 4);
    assert_eq!(init_strokes(&uniform, 1, 0.05, &mut XorShift64Star::new(0)).unwrap()[0].points[0], Point::new(0.125, 0.125));
    assert!(init_strokes(&uniform, 17, 0.05, &mut XorShift64Star::new(0)).is_err());
}

#[test]
fn first_points_respect_suppression() {
    let att = uniform_attention(32, 32);
    let r = 0.1;
    let c = init_strokes(&att, 12, r, &mut XorShift64Star::new(9)).unwrap();
    for i in 0..c.len() {
        for j in 0..i {
            assert!(c[i].points[0].distance(c[j].points[0]) > r);
        }
    }
}

#[test]
fn initialization_is_reproducible() {
    let att = uniform_attention(16, 16);
    let a = init_strokes(&att, 5, 0.05, &mut XorShift64Star::stream(3, "init.black")).unwrap();
    let b = init_strokes(&att, 5, 0.05, &mut XorShift64Star::stream(3, "init.black")).unwrap();
    assert_eq!(a, b);
    // Portable golden: second stroke's first control point for seed 3.
    let p = a[1].points[0];
    assert_eq!((p.x * 16.0 - 0.5, p.y * 16.0 - 0.5), GOLDEN_SECOND_POINT);
}

const GOLDEN_SECOND_POINT: (f64, f64) = (8.0, 7.0);

fn line(y: f64) -> CubicBezier {
    CubicBezier::new(Point::new(0.2, y), Point::new(0.4, y), Point::new(0.6, y), Point::new(0.8, y))
}

#[test]
fn palette_of_uniform_image() {
    let img = Canvas::filled(20, 20, [1.0, 0.0, 0.0]);
    let att = uniform_attention(20, 20);
    let (p, raw) = reference_palette(&[line(0.3), line(0.7)], &att, &img, 2, &mut XorShift64Star::new(0)).unwrap();
    assert!(p.entries.iter().chain(&raw).all(|c| (c[0] - 1.0).abs() < 1e-12 && c[1].abs() < 1e-12));
    assert!(reference_palette(&[line(0.3)], &att, &img, 0, &mut XorShift64Star::new(0)).is_err());
    assert!(reference_palette(&[line(0.3)], &att, &img, 2, &mut XorShift64Star::new(0)).is_err());
}

#[test]
fn palette_inside_green_region() {
    let img = Canvas::from_fn(40, 40, |_, y| if y < 20 { [0.0, 1.0, 0.0] } else { [0.0, 0.0, 1.0] });
    let att = uniform_attention(40, 40);
    let (p, _) = reference_palette(&[line(0.2)], &att, &img, 1, &mut XorShift64Star::new(0)).unwrap();
    let c = p.entries[0];
    assert!(c[0].abs() < 0.02 && (c[1] - 1.0).abs() < 0.02 && c[2].abs() < 0.02, "{c:?}");
}

#[test]
fn palette_matches_weighted_sum() {
    let img = noise_image(24, 20, 4);
    let mut r = XorShift64Star::new(8);
    let weights = ScalarMap::new(24, 20, (0..480).map(|_| r.next_f64()).collect()).unwrap();
    let att = attention_from_weights(weights).unwrap();
    let curves = init_strokes(&att, 4, 0.1, &mut r).unwrap();
    let (p, raw) = reference_palette(&curves, &att, &img, 4, &mut r).unwrap();
    assert_eq!(p.entries, raw);
    for (curve, got) in curves.iter().zip(&raw) {
        let mut num = [0.0; 3];
        let mut den = 0.0;
        for y in 0..20 {
            for x in 0..24 {
                let q = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                let f = raster::coverage(&Stroke::coloured(*curve, BLACK, 3.0), q, 24, 20, raster::DEFAULT_SOFTNESS);
                let w = f * att.map().get(x, y);
                den += w;
                for c in 0..3 {
                    num[c] += w * img.pixel(x, y)[c];
                }
            }
        }
        for c in 0..3 {
            assert!((num[c] / den - got[c]).abs() < 1e-6);
        }
    }
}

#[test]
fn clustered_palette_orders_by_size() {
    let pts = vec![[0.0; 3], [0.01, 0.0, 0.0], [1.0, 1.0, 1.0], [0.0, 0.02, 0.0], [0.99, 1.0, 1.0]];
    let c = kmeans(&pts, 2, KMEANS_ITERATIONS, &mut XorShift64Star::new(1)).unwrap();
    assert!(c[0][0] < 0.1 && c[1][0] > 0.9);
    assert!(kmeans(&pts, 6, 20, &mut XorShift64Star::new(1)).is_err());
}
