use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{self, Conv2d, Conv2dGrad, Linear, LinearGrad, Tensor3};
use crate::raster::Canvas;
use crate::rng::XorShift64Star;
use crate::weights::{self, Manifest, WeightReader, WeightWriter};

use super::{Activations, ClassPrototypes, EncoderCotangent, ImageEncoder};

/// Architecture of the reference convolutional encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    /// Square side the input is resized to.
    pub input_size: usize,
    /// Output channels of each 3×3 stride-2 stage.
    pub stages: Vec<usize>,
    pub embedding_dim: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            input_size: 128,
            stages: vec![16, 32, 64, 64],
            embedding_dim: 64,
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stages.len() < 2 {
            return Err(Error::config("encoder needs at least 2 stages"));
        }
        if self.embedding_dim < 8 {
            return Err(Error::config("embedding_dim must be at least 8"));
        }
        if self.input_size == 0 || self.stages.contains(&0) {
            return Err(Error::config("encoder sizes must be positive"));
        }
        Ok(())
    }
}

/// Stack of 3×3 stride-2 convolutions, each followed by a rectifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBody {
    pub input_size: usize,
    pub convs: Vec<Conv2d>,
}

impl ConvBody {
    pub fn new(input_size: usize, stages: &[usize], rng: &mut XorShift64Star) -> Self {
        let mut in_ch = 3;
        let convs = stages
            .iter()
            .map(|&out| {
                let c = Conv2d::new(in_ch, out, 2, rng);
                in_ch = out;
                c
            })
            .collect();
        Self { input_size, convs }
    }

    pub fn out_channels(&self) -> usize {
        self.convs.last().map_or(3, |c| c.out_ch)
    }

    pub fn check(&self) -> Result<()> {
        let mut in_ch = 3;
        for c in &self.convs {
            c.check()?;
            if c.in_ch != in_ch {
                return Err(Error::config(format!(
                    "stage expects {} input channels, previous stage yields {in_ch}",
                    c.in_ch
                )));
            }
            in_ch = c.out_ch;
        }
        Ok(())
    }

    /// Returns the resized input and each stage's post-rectifier map.
    pub fn forward(&self, image: &Canvas) -> (Tensor3, Vec<Tensor3>) {
        let input = nn::resize_canvas(image, self.input_size);
        let mut layers: Vec<Tensor3> = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let x = layers.last().unwrap_or(&input);
            let mut y = conv.forward(x);
            nn::relu_inplace(&mut y.data);
            layers.push(y);
        }
        (input, layers)
    }

    /// Back-propagates per-stage cotangents (`d_layers`, post-rectifier).
    pub fn backward(
        &self,
        input: &Tensor3,
        layers: &[Tensor3],
        mut d_layers: Vec<Tensor3>,
        need_input: bool,
        need_params: bool,
    ) -> (Option<Tensor3>, Vec<Conv2dGrad>) {
        let mut grads = Vec::with_capacity(self.convs.len());
        let mut d_input = None;
        for l in (0..self.convs.len()).rev() {
            let mut g = std::mem::replace(&mut d_layers[l], Tensor3::zeros(0, 0, 0));
            nn::relu_backward_inplace(&layers[l].data, &mut g.data);
            let x = if l == 0 { input } else { &layers[l - 1] };
            let want_dx = l > 0 || need_input;
            let (dx, dp) = self.convs[l].backward(x, &g, want_dx, need_params);
            if let Some(dp) = dp {
                grads.push(dp);
            }
            if let Some(dx) = dx {
                if l == 0 {
                    d_input = Some(dx);
                } else {
                    for (a, b) in d_layers[l - 1].data.iter_mut().zip(&dx.data) {
                        *a += b;
                    }
                }
            }
        }
        grads.reverse();
        (d_input, grads)
    }
}

/// Global average pool of a `C×H×W` map.
pub(crate) fn global_pool(t: &Tensor3) -> Vec<f64> {
    let n = (t.h * t.w) as f64;
    (0..t.c).map(|c| t.plane(c).iter().sum::<f64>() / n).collect()
}

pub(crate) fn global_pool_backward(d: &[f64], c: usize, h: usize, w: usize) -> Tensor3 {
    let n = (h * w) as f64;
    let mut t = Tensor3::zeros(c, h, w);
    for ch in 0..c {
        let g = d[ch] / n;
        t.data[ch * h * w..(ch + 1) * h * w].fill(g);
    }
    t
}

/// The reference encoder: a convolutional body, global average pooling and
/// one linear map to the embedding, which is L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEncoder {
    pub spec: EncoderSpec,
    pub body: ConvBody,
    pub embed: Linear,
}

/// Parameter gradients of a [`ConvEncoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub convs: Vec<Conv2dGrad>,
    pub embed: LinearGrad,
}

impl EncoderGrads {
    pub fn add_assign(&mut self, o: &EncoderGrads) {
        for (a, b) in self.convs.iter_mut().zip(&o.convs) {
            add(&mut a.weight, &b.weight);
            add(&mut a.bias, &b.bias);
        }
        add(&mut self.embed.weight, &o.embed.weight);
        add(&mut self.embed.bias, &o.embed.bias);
    }
}

pub(crate) fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Seeded weights rounded to f32.
impl ConvEncoder {
    pub fn new(spec: EncoderSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = XorShift64Star::stream(seed, "encoder.init");
        let body = ConvBody::new(spec.input_size, &spec.stages, &mut rng);
        let embed = Linear::new(body.out_channels(), spec.embedding_dim, &mut rng);
        Ok(Self { spec, body, embed })
    }

    pub fn check(&self) -> Result<()> {
        self.spec.validate()?;
        self.body.check()?;
        self.embed.check()?;
        if self.body.convs.len() != self.spec.stages.len()
            || self.body.convs.iter().zip(&self.spec.stages).any(|(c, &s)| c.out_ch != s)
        {
            return Err(Error::config("encoder weights do not match the stage list"));
        }
        if self.embed.inputs != self.body.out_channels() || self.embed.outputs != self.spec.embedding_dim {
            return Err(Error::config("embedding map shape does not match the encoder spec"));
        }
        Ok(())
    }

    /// Reverse pass returning the canvas-layout input gradient and, when
    /// requested, the parameter gradients.
    pub fn backward(
        &self,
        act: &Activations,
        cot: &EncoderCotangent,
        need_input: bool,
        need_params: bool,
    ) -> (Option<Vec<f64>>, Option<EncoderGrads>) {
        let mut d_layers: Vec<Tensor3> = act.layers.iter().map(|l| Tensor3::zeros(l.c, l.h, l.w)).collect();
        for (idx, g) in &cot.layers {
            add(&mut d_layers[*idx].data, &g.data);
        }
        let mut dz = cot.pre_embedding.clone().unwrap_or_else(|| vec![0.0; act.pre_embedding.len()]);
        if let Some(de) = &cot.embedding {
            // e = z / |z|  ⇒  dz = (de − e⟨e, de⟩) / |z|
            let norm = nn::l2_norm(&act.pre_embedding).max(super::MIN_EMBEDDING_NORM);
            let proj = nn::dot(&act.embedding, de);
            for i in 0..dz.len() {
                dz[i] += (de[i] - act.embedding[i] * proj) / norm;
            }
        }
        let (dpooled, embed_grad) = self.embed.backward(&act.pooled, &dz);
        let last = act.layers.last().expect("encoder has stages");
        let dlast = global_pool_backward(&dpooled, last.c, last.h, last.w);
        add(d_layers.last_mut().unwrap().data.as_mut_slice(), &dlast.data);
        let (d_input, conv_grads) = self.body.backward(&act.input, &act.layers, d_layers, need_input, need_params);
        let image_grad = d_input.map(|g| nn::resize_canvas_backward(&g, act.source_width, act.source_height));
        let grads = need_params.then_some(EncoderGrads {
            convs: conv_grads,
            embed: embed_grad,
        });
        (image_grad, grads)
    }

    /// Mutable parameter slices in a fixed order, with names.
    pub fn param_slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (i, c) in self.body.convs.iter_mut().enumerate() {
            out.push((format!("stage{i}.weight"), c.weight.as_mut_slice()));
            out.push((format!("stage{i}.bias"), c.bias.as_mut_slice()));
        }
        out.push(("embed.weight".into(), self.embed.weight.as_mut_slice()));
        out.push(("embed.bias".into(), self.embed.bias.as_mut_slice()));
        out
    }

    /// Writes the `PENC` container and its manifest.
    ///
    /// Layout (little-endian): `"PENC"`, `u32 version`, `u32 stage_count`;
    /// per stage `u32 in_ch, u32 out_ch`, `f32` weights (`out×in×3×3`),
    /// `f32` bias; the embedding map as `u32 rows, u32 cols`, weights, bias;
    /// the class head as `u32 classes, u32 dim`, weights.
    pub fn save(&self, path: &Path, head: Option<&ClassPrototypes>, seed: u64, train_accuracy: Option<f64>) -> Result<()> {
        let mut w = WeightWriter::new(b"PENC");
        w.u32(self.body.convs.len() as u32);
        for c in &self.body.convs {
            w.conv(c);
        }
        w.linear(&self.embed);
        match head {
            Some(h) => {
                w.u32(h.len() as u32);
                w.u32(self.spec.embedding_dim as u32);
                for v in &h.vectors {
                    w.f32s(v);
                }
            }
            None => {
                w.u32(0);
                w.u32(self.spec.embedding_dim as u32);
            }
        }
        let mut m = Manifest::default();
        m.set("format", "PENC");
        m.set("input_size", self.spec.input_size);
        m.set("stages", join(&self.spec.stages));
        m.set("embedding_dim", self.spec.embedding_dim);
        m.set("seed", seed);
        m.set("classes", head.map(|h| h.names.join(",")).unwrap_or_default());
        if let Some(a) = train_accuracy {
            m.set("train_accuracy", format!("{a:.4}"));
        }
        weights::write_container(path, &w.finish(), &m)
    }

    /// Loads a `PENC` container; returns the class prototypes when present.
    pub fn load(path: &Path) -> Result<(Self, Option<ClassPrototypes>)> {
        let (bytes, manifest) = weights::read_container(path)?;
        Self::from_bytes(&bytes, &manifest)
    }

    pub fn from_bytes(bytes: &[u8], manifest: &Manifest) -> Result<(Self, Option<ClassPrototypes>)> {
        let spec = EncoderSpec {
            input_size: manifest.get_parsed("input_size")?,
            stages: weights::parse_list(manifest.get("stages")?, "stages")?,
            embedding_dim: manifest.get_parsed("embedding_dim")?,
        };
        let mut r = WeightReader::new(bytes, b"PENC")?;
        let n = r.u32("stage count")? as usize;
        let convs = (0..n)
            .map(|i| r.conv(2, &format!("stage {i}")))
            .collect::<Result<Vec<_>>>()?;
        let embed = r.linear("embedding map")?;
        let classes = r.u32("class head")? as usize;
        let dim = r.u32("class head")? as usize;
        let vectors = (0..classes)
            .map(|_| r.f32s(dim, "class head"))
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        let enc = Self {
            body: ConvBody {
                input_size: spec.input_size,
                convs,
            },
            embed,
            spec,
        };
        enc.check()?;
        let names: Vec<String> = weights::parse_list(manifest.get("classes").unwrap_or(""), "classes")?;
        let head = if classes == 0 {
            None
        } else {
            if names.len() != classes {
                return Err(Error::config("manifest class names do not match the class head"));
            }
            Some(ClassPrototypes::new(names, vectors)?)
        };
        Ok((enc, head))
    }
}

pub(crate) fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ImageEncoder for ConvEncoder {
    fn stages(&self) -> usize {
        self.body.convs.len()
    }

    fn embedding_dim(&self) -> usize {
        self.spec.embedding_dim
    }

    fn encode(&self, image: &Canvas) -> Result<Activations> {
        let (input, layers) = self.body.forward(image);
        let pooled = global_pool(layers.last().expect("encoder has stages"));
        let pre_embedding = self.embed.forward(&pooled);
        let norm = nn::l2_norm(&pre_embedding).max(super::MIN_EMBEDDING_NORM);
        let embedding = pre_embedding.iter().map(|v| v / norm).collect();
        Ok(Activations {
            layers,
            pooled,
            pre_embedding,
            embedding,
            input,
            source_width: image.width(),
            source_height: image.height(),
        })
    }

    fn input_gradient(&self, act: &Activations, cot: &EncoderCotangent) -> Result<Vec<f64>> {
        let (g, _) = self.backward(act, cot, true, false);
        Ok(g.expect("input gradient requested"))
    }
}
