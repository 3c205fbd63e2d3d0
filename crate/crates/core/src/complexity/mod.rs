//! Scenario complexity: bounding-box category conditions, embedding-based
//! composition filtering and a five-level complexity estimator.

mod coco;
mod estimator;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

pub use coco::{load_coco, parse_coco, to_coco_json};
pub use estimator::{level_from_logits, train_estimator, ComplexityEstimator, EstimatorTraining};

use crate::error::{Error, Result};
use crate::nn;

/// Axis-aligned box in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub category: String,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, category: impl Into<String>) -> Self {
        Self {
            x,
            y,
            w,
            h,
            category: category.into(),
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Intersection with the image rectangle, or `None` when empty.
    pub fn clamped(&self, width: usize, height: usize) -> Option<BBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = (self.x + self.w).min(width as f64);
        let y1 = (self.y + self.h).min(height as f64);
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0, self.category.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotatedImage {
    pub file_name: String,
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<BBox>,
}

impl AnnotatedImage {
    fn area(&self) -> f64 {
        (self.width * self.height) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComplexityLevel(u8);

impl ComplexityLevel {
    pub const COUNT: usize = 5;

    pub fn new(level: usize) -> Result<Self> {
        if level >= Self::COUNT {
            return Err(Error::domain(format!("complexity level {level} outside 0..=4")));
        }
        Ok(Self(level as u8))
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ComplexityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Fraction of the image below which a box counts as small.
pub const SMALL_BOX_FRACTION: f64 = 0.05;
pub const MIN_SMALL_BOXES: usize = 10;
/// Fraction of the image above which a box counts as dominant.
pub const LARGE_BOX_FRACTION: f64 = 0.5;
/// Pairwise overlap at or above which an image fails the separation test.
pub const MAX_PAIRWISE_IOU: f64 = 0.1;

/// At least ten boxes of `category`, each strictly under 5 % of the image.
pub fn condition1(img: &AnnotatedImage, category: &str) -> bool {
    let limit = SMALL_BOX_FRACTION * img.area();
    img.boxes
        .iter()
        .filter(|b| b.category == category && b.area() < limit)
        .count()
        >= MIN_SMALL_BOXES
}

/// Some box of `category` strictly larger than half the image.
pub fn condition2(img: &AnnotatedImage, category: &str) -> bool {
    let limit = LARGE_BOX_FRACTION * img.area();
    img.boxes.iter().any(|b| b.category == category && b.area() > limit)
}

/// Every pair of boxes overlaps with IoU strictly below 0.1.
pub fn condition3(img: &AnnotatedImage) -> bool {
    let b = &img.boxes;
    (0..b.len()).all(|i| (i + 1..b.len()).all(|j| iou(&b[i], &b[j]) < MAX_PAIRWISE_IOU))
}

/// Boolean combination of the three conditions, stored as a truth table
/// indexed by `c1 | c2 << 1 | c3 << 2`.
///
/// Parsed from expressions over `c1`, `c2`, `c3` with `!`, `&`, `|` (or
/// `not`, `and`, `or`) and parentheses; `&` binds tighter than `|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionMode {
    expr: String,
    table: [bool; 8],
}

impl ConditionMode {
    pub fn eval(&self, c1: bool, c2: bool, c3: bool) -> bool {
        self.table[usize::from(c1) | usize::from(c2) << 1 | usize::from(c3) << 2]
    }

    pub fn expr(&self) -> &str {
        &self.expr
    }
}

impl Default for ConditionMode {
    fn default() -> Self {
        "c3 & (c1 | c2)".parse().expect("default mode parses")
    }
}

impl fmt::Display for ConditionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expr)
    }
}

impl FromStr for ConditionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens = tokenize(s)?;
        let mut table = [false; 8];
        for (idx, slot) in table.iter_mut().enumerate() {
            let vars = [idx & 1 != 0, idx & 2 != 0, idx & 4 != 0];
            let mut p = ExprParser { tokens: &tokens, pos: 0, vars };
            *slot = p.or()?;
            if p.pos != tokens.len() {
                return Err(Error::Parse(format!("unexpected trailing input in condition mode {s:?}")));
            }
        }
        Ok(Self {
            expr: s.trim().to_string(),
            table,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Var(usize),
    Not,
    And,
    Or,
    Open,
    Close,
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            ' ' | '\t' => {
                chars.next();
            }
            '!' => {
                chars.next();
                out.push(Tok::Not);
            }
            '&' => {
                chars.next();
                out.push(Tok::And);
            }
            '|' => {
                chars.next();
                out.push(Tok::Or);
            }
            '(' => {
                chars.next();
                out.push(Tok::Open);
            }
            ')' => {
                chars.next();
                out.push(Tok::Close);
            }
            c if c.is_ascii_alphanumeric() => {
                let mut word = String::new();
                while let Some(&c) = chars.peek().filter(|c| c.is_ascii_alphanumeric()) {
                    word.push(c);
                    chars.next();
                }
                out.push(match word.to_ascii_lowercase().as_str() {
                    "c1" => Tok::Var(0),
                    "c2" => Tok::Var(1),
                    "c3" => Tok::Var(2),
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    _ => return Err(Error::Parse(format!("unknown word {word:?} in condition mode"))),
                });
            }
            _ => return Err(Error::Parse(format!("unexpected character {c:?} in condition mode"))),
        }
    }
    Ok(out)
}

struct ExprParser<'a> {
    tokens: &'a [Tok],
    pos: usize,
    vars: [bool; 3],
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<Tok> {
        self.tokens.get(self.pos).copied()
    }

    fn or(&mut self) -> Result<bool> {
        let mut v = self.and()?;
        while self.peek() == Some(Tok::Or) {
            self.pos += 1;
            v |= self.and()?;
        }
        Ok(v)
    }

    fn and(&mut self) -> Result<bool> {
        let mut v = self.unary()?;
        while self.peek() == Some(Tok::And) {
            self.pos += 1;
            v &= self.unary()?;
        }
        Ok(v)
    }

    fn unary(&mut self) -> Result<bool> {
        let tok = self.peek().ok_or_else(|| Error::Parse("condition mode ends early".into()))?;
        self.pos += 1;
        match tok {
            Tok::Not => Ok(!self.unary()?),
            Tok::Var(i) => Ok(self.vars[i]),
            Tok::Open => {
                let v = self.or()?;
                if self.peek() != Some(Tok::Close) {
                    return Err(Error::Parse("unbalanced parenthesis in condition mode".into()));
                }
                self.pos += 1;
                Ok(v)
            }
            _ => Err(Error::Parse(format!("unexpected {tok:?} in condition mode"))),
        }
    }
}

/// Per-image outcome of the category criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConditionFlags {
    /// Condition 1 held for some requested category.
    pub c1: bool,
    /// Condition 2 held for some requested category.
    pub c2: bool,
    pub c3: bool,
}

impl fmt::Display for ConditionFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.c1, "c1"), (self.c2, "c2"), (self.c3, "c3")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&names.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CategorySelection {
    /// Indices of the selected images, in corpus order.
    pub selected: Vec<usize>,
    pub flags: Vec<ConditionFlags>,
    /// Requested categories that label no box in the corpus.
    pub unknown_categories: usize,
}

/// Selects images for which `mode` holds for at least one requested
/// category.
pub fn category_filter(corpus: &[AnnotatedImage], categories: &[String], mode: &ConditionMode) -> CategorySelection {
    let known: Vec<&String> = categories
        .iter()
        .filter(|c| corpus.iter().any(|img| img.boxes.iter().any(|b| &b.category == *c)))
        .collect();
    let unknown = categories.len() - known.len();
    if unknown > 0 {
        log::warn!("{unknown} requested categories do not occur in the corpus");
    }
    let mut out = CategorySelection {
        unknown_categories: unknown,
        ..Default::default()
    };
    for (i, img) in corpus.iter().enumerate() {
        let c3 = condition3(img);
        let mut flags = ConditionFlags {
            c3,
            ..Default::default()
        };
        let mut pass = false;
        for cat in &known {
            let (c1, c2) = (condition1(img, cat), condition2(img, cat));
            flags.c1 |= c1;
            flags.c2 |= c2;
            pass |= mode.eval(c1, c2, c3);
        }
        if pass {
            out.selected.push(i);
        }
        out.flags.push(flags);
    }
    out
}

/// For each gallery embedding, the top-k candidates by cosine similarity
/// (ties to the lower index); returns the union in ascending order together
/// with each candidate's hit count.
pub fn composition_filter(candidates: &[Vec<f64>], gallery: &[Vec<f64>], k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if gallery.is_empty() {
        return Err(Error::domain("composition filter needs a non-empty gallery"));
    }
    if k == 0 {
        return Err(Error::domain("composition filter needs k >= 1"));
    }
    let unit = |v: &Vec<f64>| -> Vec<f64> {
        let n = nn::l2_norm(v);
        if n > 0.0 {
            v.iter().map(|x| x / n).collect()
        } else {
            vec![0.0; v.len()]
        }
    };
    let cands: Vec<Vec<f64>> = candidates.iter().map(unit).collect();
    let mut hits = vec![0usize; candidates.len()];
    for g in gallery.iter().map(unit) {
        let mut order: Vec<(usize, f64)> = cands.iter().enumerate().map(|(i, c)| (i, nn::dot(c, &g))).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(i, _) in order.iter().take(k) {
            hits[i] += 1;
        }
    }
    let selected = (0..candidates.len()).filter(|&i| hits[i] > 0).collect();
    Ok((selected, hits))
}

/// One line of the curation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CurationRow {
    pub path: String,
    pub flags: ConditionFlags,
    pub composition_hits: usize,
    pub level: Option<ComplexityLevel>,
    pub selected: bool,
}

pub const CURATION_CSV_HEADER: &str = "path,passed_conditions,composition_hits,complexity_level,selected";

/// Writes the newline-delimited manifest of selected paths and the CSV.
pub fn write_curation(manifest: &Path, csv: &Path, rows: &[CurationRow]) -> Result<()> {
    let mut m = String::new();
    let mut c = String::from(CURATION_CSV_HEADER);
    c.push('\n');
    for r in rows {
        if r.selected {
            m.push_str(&r.path);
            m.push('\n');
        }
        let level = r.level.map(|l| l.to_string()).unwrap_or_default();
        c.push_str(&format!("{},{},{},{},{}\n", r.path, r.flags, r.composition_hits, level, u8::from(r.selected)));
    }
    for (path, text) in [(manifest, m), (csv, c)] {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
