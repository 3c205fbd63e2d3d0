use super::*;
use crate::perceptual::{ConvEncoder, EncoderSpec};
use crate::palette::PaletteSpec;

fn encoder() -> ConvEncoder {
    ConvEncoder::new(
        EncoderSpec {
            input_size: 32,
            stages: vec![6, 8, 8],
            embedding_dim: 8,
        },
        7,
    )
    .unwrap()
}

fn palette_net(colours: usize) -> PaletteNetwork {
    PaletteNetwork::new(
        PaletteSpec {
            input_size: 16,
            dim: 8,
            colours,
        },
        3,
    )
    .unwrap()
}

fn target() -> Canvas {
    Canvas::from_fn(32, 32, |x, y| {
        let (dx, dy) = (x as f64 - 15.5, y as f64 - 15.5);
        if (dx * dx + dy * dy).sqrt() < 9.0 {
            [0.8, 0.2, 0.1]
        } else {
            [1.0, 1.0, 1.0]
        }
    })
}

fn small_config() -> PaintingConfig {
    PaintingConfig {
        strokes_black: 2,
        strokes_colour: 3,
        palette_size: 2,
        iterations: 5,
        canvas_size: 32,
        structure_layers: vec![0, 1],
        ..PaintingConfig::default()
    }
}

#[test]
fn rejects_empty_stroke_budget() {
    let cfg = PaintingConfig {
        strokes_black: 0,
        strokes_colour: 0,
        ..small_config()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let cfg = PaintingConfig {
        palette_size: 4,
        ..small_config()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let cfg = PaintingConfig {
        iterations: 0,
        ..small_config()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn palette_size_must_match_network() {
    let err = paint(&target(), &small_config(), &encoder(), &mut palette_net(3)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn project_clamps() {
    let cfg = PaintingConfig::default();
    let mut p = vec![-0.5, 0.3, 1.2, 1.1];
    let mut w = vec![0.1, 4.0, 9.0];
    project(&mut p, &mut w, &cfg);
    assert_eq!(p, vec![-0.1, 0.3, 1.1, 1.1]);
    assert_eq!(w, vec![0.5, 4.0, 8.0]);
}

#[test]
fn black_only_leaves_palette_network_untouched() {
    let mut net = palette_net(2);
    let before = net.clone();
    let cfg = PaintingConfig {
        strokes_colour: 0,
        palette_size: 0,
        ..small_config()
    };
    let r = paint(&target(), &cfg, &encoder(), &mut net).unwrap();
    assert_eq!(net, before);
    assert!(r.colour.is_empty() && r.palette.is_empty());
    assert!(r.loss_trace.iter().all(|l| l.colour == 0.0));
}

#[test]
fn deterministic_and_self_consistent() {
    let cfg = small_config();
    let enc = encoder();
    let a = paint(&target(), &cfg, &enc, &mut palette_net(2)).unwrap();
    let b = paint(&target(), &cfg, &enc, &mut palette_net(2)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.loss_trace.len(), cfg.iterations);
    let composed = raster::composite_painting(&a.black, &a.colour, 32, 32).unwrap();
    assert_eq!(composed, a.s);
    for (s, e) in a.colour.iter().zip(&a.assignment.0) {
        assert_eq!(s.colour, a.palette.entries[*e]);
        assert!((cfg.width_min..=cfg.width_max).contains(&s.width));
    }
    for s in a.black.iter().chain(&a.colour) {
        assert!(s.curve.coords().iter().all(|c| (COORD_RANGE.0..=COORD_RANGE.1).contains(c)));
    }
    let csv = a.loss_csv();
    assert!(csv.starts_with("iteration,L_structure,L_semantic,L_colour,total\n1,"));
    assert_eq!(csv.lines().count(), cfg.iterations + 1);
}

#[test]
fn structure_loss_descends_with_one_black_stroke() {
    let cfg = PaintingConfig {
        strokes_black: 1,
        strokes_colour: 0,
        palette_size: 0,
        iterations: 50,
        weights: LossWeights {
            structure: 1.0,
            semantic: 0.0,
            colour: 0.0,
        },
        ..small_config()
    };
    let r = paint(&target(), &cfg, &encoder(), &mut palette_net(1)).unwrap();
    let first = r.loss_trace[0].total;
    let last = r.loss_trace.last().unwrap().total;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let enc = encoder();
    let tgt = enc.encode(&target()).unwrap();
    let strokes = vec![
        Stroke::coloured(
            CubicBezier::from_coords([0.2, 0.3, 0.4, 0.2, 0.6, 0.7, 0.8, 0.5]),
            [0.3, 0.6, 0.2],
            3.0,
        ),
        Stroke::black(CubicBezier::from_coords([0.7, 0.2, 0.5, 0.5, 0.3, 0.6, 0.2, 0.8])),
    ];
    let weights = LossWeights::default();
    let layers = [0, 1];
    let f = |s: &[Stroke]| stroke_objective(&enc, &tgt, s, (32, 32), DEFAULT_SOFTNESS, &weights, &layers).unwrap().0.total;
    let (_, g) = stroke_objective(&enc, &tgt, &strokes, (32, 32), DEFAULT_SOFTNESS, &weights, &layers).unwrap();
    let eps = 1e-4;
    for k in 0..2 {
        for j in [0, 3, 6] {
            let mut p = strokes.clone();
            let mut m = strokes.clone();
            let mut cp = p[k].curve.coords();
            let mut cm = cp;
            cp[j] += eps;
            cm[j] -= eps;
            p[k].curve = CubicBezier::from_coords(cp);
            m[k].curve = CubicBezier::from_coords(cm);
            let fd = (f(&p) - f(&m)) / (2.0 * eps);
            let an = g.strokes[k].points[j];
            assert!((fd - an).abs() <= 1e-2 * fd.abs().max(an.abs()).max(1e-6), "stroke {k} coord {j}: {fd} vs {an}");
        }
    }
    let mut p = strokes.clone();
    let mut m = strokes.clone();
    p[0].width += 1e-3;
    m[0].width -= 1e-3;
    let fd = (f(&p) - f(&m)) / 2e-3;
    assert!((fd - g.strokes[0].width).abs() <= 1e-2 * fd.abs().max(1e-6), "{fd} vs {}", g.strokes[0].width);
}

#[test]
fn recognition_rejects_unknown_label() {
    let enc = encoder();
    let cfg = PaintingConfig {
        iterations: 1,
        ..small_config()
    };
    let r = paint(&target(), &cfg, &enc, &mut palette_net(2)).unwrap();
    let protos = ClassPrototypes::new(vec!["a".into(), "b".into()], vec![vec![1.0; 8], vec![-1.0; 8]]).unwrap();
    assert!(evaluate_recognition(&[(&r, "zzz")], &enc, &protos).is_err());
    let rep = evaluate_recognition(&[(&r, "a")], &enc, &protos).unwrap();
    assert!(rep.combined.top3 == 1.0 && rep.combined.top1 <= rep.combined.top3);
}
