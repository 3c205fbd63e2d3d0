use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{self, Conv2d, DepthwiseConv, Linear, Tensor3};
use crate::raster::Canvas;
use crate::rng::XorShift64Star;
use crate::weights::{self, Manifest, WeightReader, WeightWriter};

use super::Palette;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaletteSpec {
    /// Square side the image is resized to.
    pub input_size: usize,
    /// Feature width `d`.
    pub dim: usize,
    /// Palette size `C`, one learnable query per entry.
    pub colours: usize,
}

impl Default for PaletteSpec {
    fn default() -> Self {
        Self {
            input_size: 128,
            dim: 32,
            colours: 16,
        }
    }
}

impl PaletteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_size < 4 || self.dim == 0 || self.colours == 0 {
            return Err(Error::config("palette network needs input_size >= 4, dim >= 1 and colours >= 1"));
        }
        Ok(())
    }
}

/// Maps an image and `C` learnable queries to `C` colours.
///
/// Two stride-2 convolutions with GELU give `F₀` at a quarter of the input
/// side; a depth-wise convolution is added as positional encoding. Keys and
/// values are linear maps of the encoded tokens, the queries attend with
/// scale `1/√d`, a GELU MLP (`d → 4d → d`) is added residually and a GELU
/// projector (`d → d → 3`) ends in a logistic squashing.
#[derive(Debug, Clone, PartialEq)]
pub struct PaletteNetwork {
    pub spec: PaletteSpec,
    pub stem1: Conv2d,
    pub stem2: Conv2d,
    pub pos: DepthwiseConv,
    pub key: Linear,
    pub value: Linear,
    /// `C × d`, row-major.
    pub queries: Vec<f64>,
    pub mlp1: Linear,
    pub mlp2: Linear,
    pub proj1: Linear,
    pub proj2: Linear,
}

/// Parameter gradients, one block per entry of
/// [`PaletteNetwork::param_slices_mut`] in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct PaletteGrads {
    pub blocks: Vec<(String, Vec<f64>)>,
}

impl PaletteGrads {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, g)| g.as_slice())
    }
}

struct Forward {
    x: Tensor3,
    h1: Tensor3,
    a1: Tensor3,
    h2: Tensor3,
    f0: Tensor3,
    tokens: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
    o: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    y: Vec<f64>,
    r: Vec<f64>,
    hidden: Vec<f64>,
    p: Vec<f64>,
}

fn gelu_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| nn::gelu(x)).collect()
}

fn gelu_back(pre: &[f64], d: &mut [f64]) {
    for (g, &x) in d.iter_mut().zip(pre) {
        *g *= nn::gelu_grad(x);
    }
}

fn map_tensor(t: &Tensor3, f: impl Fn(f64) -> f64) -> Tensor3 {
    Tensor3 {
        c: t.c,
        h: t.h,
        w: t.w,
        data: t.data.iter().map(|&v| f(v)).collect(),
    }
}

impl PaletteNetwork {
    pub fn new(spec: PaletteSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim;
        let mut rng = XorShift64Star::stream(seed, "palette.init");
        Ok(Self {
            stem1: Conv2d::new(3, d, 2, &mut rng),
            stem2: Conv2d::new(d, d, 2, &mut rng),
            pos: DepthwiseConv::new(d, &mut rng),
            key: Linear::new(d, d, &mut rng),
            value: Linear::new(d, d, &mut rng),
            queries: nn::init_normal(&mut rng, spec.colours * d, 1.0),
            mlp1: Linear::new(d, 4 * d, &mut rng),
            mlp2: Linear::new(4 * d, d, &mut rng),
            proj1: Linear::new(d, d, &mut rng),
            proj2: Linear::with_std(d, 3, 0.1 / (d as f64).sqrt(), &mut rng),
            spec,
        })
    }

    pub fn check(&self) -> Result<()> {
        self.spec.validate()?;
        let d = self.spec.dim;
        let convs_ok = self.stem1.in_ch == 3
            && self.stem1.out_ch == d
            && self.stem2.in_ch == d
            && self.stem2.out_ch == d
            && self.pos.channels == d;
        let linear_ok = [
            (&self.key, d, d),
            (&self.value, d, d),
            (&self.mlp1, d, 4 * d),
            (&self.mlp2, 4 * d, d),
            (&self.proj1, d, d),
            (&self.proj2, d, 3),
        ]
        .iter()
        .all(|(l, i, o)| l.inputs == *i && l.outputs == *o);
        if !convs_ok || !linear_ok || self.queries.len() != self.spec.colours * d {
            return Err(Error::config("palette network shapes do not match its spec"));
        }
        self.stem1.check()?;
        self.stem2.check()?;
        self.pos.check()?;
        for l in [&self.key, &self.value, &self.mlp1, &self.mlp2, &self.proj1, &self.proj2] {
            l.check()?;
        }
        Ok(())
    }

    fn forward(&self, image: &Canvas) -> Forward {
        let (c, d) = (self.spec.colours, self.spec.dim);
        let x = nn::resize_canvas(image, self.spec.input_size);
        let h1 = self.stem1.forward(&x);
        let a1 = map_tensor(&h1, nn::gelu);
        let h2 = self.stem2.forward(&a1);
        let f0 = map_tensor(&h2, nn::gelu);
        let mut f = self.pos.forward(&f0);
        for (a, b) in f.data.iter_mut().zip(&f0.data) {
            *a += b;
        }
        let tokens = f.to_tokens();
        let n = f.h * f.w;
        let k = self.key.forward(&tokens);
        let v = self.value.forward(&tokens);
        let scale = 1.0 / (d as f64).sqrt();
        let scores = nn::matmul_bt(&self.queries, &k, c, n, d);
        let attn: Vec<f64> = scores
            .chunks_exact(n)
            .flat_map(|row| nn::softmax(&row.iter().map(|s| s * scale).collect::<Vec<_>>()))
            .collect();
        let o = nn::matmul(&attn, &v, c, n, d);
        let u = self.mlp1.forward(&o);
        let g = gelu_all(&u);
        let m = self.mlp2.forward(&g);
        let y: Vec<f64> = o.iter().zip(&m).map(|(a, b)| a + b).collect();
        let r = self.proj1.forward(&y);
        let hidden = gelu_all(&r);
        let p = self.proj2.forward(&hidden).into_iter().map(nn::sigmoid).collect();
        Forward {
            x,
            h1,
            a1,
            h2,
            f0,
            tokens,
            k,
            v,
            attn,
            o,
            u,
            g,
            y,
            r,
            hidden,
            p,
        }
    }

    /// Runs the network; every component lies in `(0, 1)`.
    pub fn palette(&self, image: &Canvas) -> Palette {
        let p = self.forward(image).p;
        Palette {
            entries: p.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        }
    }

    /// Gradients of `⟨palette, cot⟩` with respect to every parameter.
    pub fn backward(&self, image: &Canvas, cot: &[[f64; 3]]) -> Result<PaletteGrads> {
        let (c, d) = (self.spec.colours, self.spec.dim);
        if cot.len() != c {
            return Err(Error::domain(format!("palette cotangent has {} rows, expected {c}", cot.len())));
        }
        let fw = self.forward(image);
        let n = fw.tokens.len() / d;
        let dz: Vec<f64> = cot.iter().flatten().zip(&fw.p).map(|(g, p)| g * p * (1.0 - p)).collect();
        let (mut dh, g_proj2) = self.proj2.backward(&fw.hidden, &dz);
        gelu_back(&fw.r, &mut dh);
        let (dy, g_proj1) = self.proj1.backward(&fw.y, &dh);
        let (mut dg, g_mlp2) = self.mlp2.backward(&fw.g, &dy);
        gelu_back(&fw.u, &mut dg);
        let (do_mlp, g_mlp1) = self.mlp1.backward(&fw.o, &dg);
        let d_o: Vec<f64> = dy.iter().zip(&do_mlp).map(|(a, b)| a + b).collect();
        let d_attn = nn::matmul_bt(&d_o, &fw.v, c, n, d);
        let dv = nn::matmul_at(&fw.attn, &d_o, c, n, d);
        let scale = 1.0 / (d as f64).sqrt();
        let ds: Vec<f64> = fw
            .attn
            .chunks_exact(n)
            .zip(d_attn.chunks_exact(n))
            .flat_map(|(p, dp)| nn::softmax_backward(p, dp).into_iter().map(|g| g * scale))
            .collect();
        let dq = nn::matmul(&ds, &fw.k, c, n, d);
        let dk = nn::matmul_at(&ds, &self.queries, c, n, d);
        let (dt_k, g_key) = self.key.backward(&fw.tokens, &dk);
        let (dt_v, g_value) = self.value.backward(&fw.tokens, &dv);
        let dt: Vec<f64> = dt_k.iter().zip(&dt_v).map(|(a, b)| a + b).collect();
        let df = Tensor3::from_tokens(&dt, d, fw.f0.h, fw.f0.w);
        let (mut df0, g_pos_w, g_pos_b) = self.pos.backward(&fw.f0, &df);
        for (a, b) in df0.data.iter_mut().zip(&df.data) {
            *a += b;
        }
        gelu_back(&fw.h2.data, &mut df0.data);
        let (da1, g_stem2) = self.stem2.backward(&fw.a1, &df0, true, true);
        let mut da1 = da1.expect("input gradient requested");
        gelu_back(&fw.h1.data, &mut da1.data);
        let (_, g_stem1) = self.stem1.backward(&fw.x, &da1, false, true);
        let (g_stem1, g_stem2) = (g_stem1.expect("parameter gradients"), g_stem2.expect("parameter gradients"));
        let blocks = vec![
            ("stem1.weight", g_stem1.weight),
            ("stem1.bias", g_stem1.bias),
            ("stem2.weight", g_stem2.weight),
            ("stem2.bias", g_stem2.bias),
            ("pos.weight", g_pos_w),
            ("pos.bias", g_pos_b),
            ("key.weight", g_key.weight),
            ("key.bias", g_key.bias),
            ("value.weight", g_value.weight),
            ("value.bias", g_value.bias),
            ("queries", dq),
            ("mlp1.weight", g_mlp1.weight),
            ("mlp1.bias", g_mlp1.bias),
            ("mlp2.weight", g_mlp2.weight),
            ("mlp2.bias", g_mlp2.bias),
            ("proj1.weight", g_proj1.weight),
            ("proj1.bias", g_proj1.bias),
            ("proj2.weight", g_proj2.weight),
            ("proj2.bias", g_proj2.bias),
        ];
        Ok(PaletteGrads {
            blocks: blocks.into_iter().map(|(n, g)| (n.to_string(), g)).collect(),
        })
    }

    /// Mutable parameter slices in the order of [`PaletteGrads::blocks`].
    pub fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("stem1.weight", self.stem1.weight.as_mut_slice()),
            ("stem1.bias", self.stem1.bias.as_mut_slice()),
            ("stem2.weight", self.stem2.weight.as_mut_slice()),
            ("stem2.bias", self.stem2.bias.as_mut_slice()),
            ("pos.weight", self.pos.weight.as_mut_slice()),
            ("pos.bias", self.pos.bias.as_mut_slice()),
            ("key.weight", self.key.weight.as_mut_slice()),
            ("key.bias", self.key.bias.as_mut_slice()),
            ("value.weight", self.value.weight.as_mut_slice()),
            ("value.bias", self.value.bias.as_mut_slice()),
            ("queries", self.queries.as_mut_slice()),
            ("mlp1.weight", self.mlp1.weight.as_mut_slice()),
            ("mlp1.bias", self.mlp1.bias.as_mut_slice()),
            ("mlp2.weight", self.mlp2.weight.as_mut_slice()),
            ("mlp2.bias", self.mlp2.bias.as_mut_slice()),
            ("proj1.weight", self.proj1.weight.as_mut_slice()),
            ("proj1.bias", self.proj1.bias.as_mut_slice()),
            ("proj2.weight", self.proj2.weight.as_mut_slice()),
            ("proj2.bias", self.proj2.bias.as_mut_slice()),
        ]
    }

    /// Writes the `PPAL` container: `"PPAL"`, `u32 version`, `u32 dim`,
    /// `u32 colours`, both stem convolutions as in `PENC`, the depth-wise
    /// weights and bias, the key and value maps, the queries, then the two
    /// MLP and two projector maps (each `u32 rows, u32 cols`, weights, bias).
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let mut w = WeightWriter::new(b"PPAL");
        w.u32(self.spec.dim as u32);
        w.u32(self.spec.colours as u32);
        w.conv(&self.stem1);
        w.conv(&self.stem2);
        w.f32s(&self.pos.weight);
        w.f32s(&self.pos.bias);
        w.linear(&self.key);
        w.linear(&self.value);
        w.f32s(&self.queries);
        for l in [&self.mlp1, &self.mlp2, &self.proj1, &self.proj2] {
            w.linear(l);
        }
        let mut m = Manifest::default();
        m.set("format", "PPAL");
        m.set("input_size", self.spec.input_size);
        m.set("dim", self.spec.dim);
        m.set("colours", self.spec.colours);
        m.set("seed", seed);
        weights::write_container(path, &w.finish(), &m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (bytes, manifest) = weights::read_container(path)?;
        let mut r = WeightReader::new(&bytes, b"PPAL")?;
        let dim = r.u32("dim")? as usize;
        let colours = r.u32("colours")? as usize;
        let spec = PaletteSpec {
            input_size: manifest.get_parsed("input_size")?,
            dim,
            colours,
        };
        let stem1 = r.conv(2, "stem1")?;
        let stem2 = r.conv(2, "stem2")?;
        let pos = DepthwiseConv {
            channels: dim,
            weight: r.f32s(dim * 9, "positional encoding")?,
            bias: r.f32s(dim, "positional encoding")?,
        };
        let key = r.linear("key")?;
        let value = r.linear("value")?;
        let queries = r.f32s(colours * dim, "queries")?;
        let mlp1 = r.linear("mlp1")?;
        let mlp2 = r.linear("mlp2")?;
        let proj1 = r.linear("proj1")?;
        let proj2 = r.linear("proj2")?;
        r.finish()?;
        let net = Self {
            spec,
            stem1,
            stem2,
            pos,
            key,
            value,
            queries,
            mlp1,
            mlp2,
            proj1,
            proj2,
        };
        net.check()?;
        Ok(net)
    }
}

/// Forward pass; fails when the network's shapes are inconsistent.
pub fn palette_forward(image: &Canvas, net: &PaletteNetwork) -> Result<Palette> {
    net.check()?;
    Ok(net.palette(image))
}

/// Reverse pass of `⟨palette_forward(image), cot⟩`.
pub fn palette_backward(image: &Canvas, net: &PaletteNetwork, cot: &[[f64; 3]]) -> Result<PaletteGrads> {
    net.check()?;
    net.backward(image, cot)
}
