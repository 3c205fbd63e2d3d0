use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{AnnotatedImage, BBox};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    width: usize,
    height: usize,
    file_name: String,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    bbox: [f64; 4],
    category_id: u64,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

/// Parses the subset of the COCO annotation layout this crate reads:
/// `images[{id, width, height, file_name}]`,
/// `annotations[{image_id, bbox: [x, y, w, h], category_id}]` and
/// `categories[{id, name}]`. Other keys are ignored. Boxes are clamped to
/// their image; empty boxes are dropped.
///
/// Returns the images in file order and the category names.
pub fn parse_coco(text: &str) -> Result<(Vec<AnnotatedImage>, Vec<String>)> {
    let file: CocoFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("annotation JSON line {} column {}: {e}", e.line(), e.column())))?;
    let names: HashMap<u64, &str> = file.categories.iter().map(|c| (c.id, c.name.as_str())).collect();
    let mut index = HashMap::new();
    let mut images: Vec<AnnotatedImage> = Vec::with_capacity(file.images.len());
    for (i, img) in file.images.iter().enumerate() {
        if img.width == 0 || img.height == 0 {
            return Err(Error::Parse(format!("images[{i}].width/height must be positive")));
        }
        if index.insert(img.id, i).is_some() {
            return Err(Error::Parse(format!("images[{i}].id {} is duplicated", img.id)));
        }
        images.push(AnnotatedImage {
            file_name: img.file_name.clone(),
            width: img.width,
            height: img.height,
            boxes: Vec::new(),
        });
    }
    for (i, ann) in file.annotations.iter().enumerate() {
        let &slot = index
            .get(&ann.image_id)
            .ok_or_else(|| Error::Parse(format!("annotations[{i}].image_id {} names no image", ann.image_id)))?;
        let name = names
            .get(&ann.category_id)
            .ok_or_else(|| Error::Parse(format!("annotations[{i}].category_id {} names no category", ann.category_id)))?;
        let [x, y, w, h] = ann.bbox;
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::Parse(format!("annotations[{i}].bbox is not finite")));
        }
        let img = &mut images[slot];
        if let Some(b) = BBox::new(x, y, w, h, *name).clamped(img.width, img.height) {
            img.boxes.push(b);
        }
    }
    Ok((images, file.categories.into_iter().map(|c| c.name).collect()))
}

pub fn load_coco(path: &Path) -> Result<(Vec<AnnotatedImage>, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coco(&text)
}

/// Writes the layout [`parse_coco`] reads. Categories are numbered from 1 in
/// order of first appearance.
pub fn to_coco_json(images: &[AnnotatedImage]) -> String {
    let mut categories: Vec<&str> = Vec::new();
    let mut annotations = Vec::new();
    for (i, img) in images.iter().enumerate() {
        for b in &img.boxes {
            let id = match categories.iter().position(|c| *c == b.category) {
                Some(k) => k + 1,
                None => {
                    categories.push(&b.category);
                    categories.len()
                }
            };
            annotations.push(serde_json::json!({
                "id": annotations.len() + 1,
                "image_id": i + 1,
                "bbox": [b.x, b.y, b.w, b.h],
                "category_id": id,
            }));
        }
    }
    let doc = serde_json::json!({
        "images": images.iter().enumerate().map(|(i, img)| serde_json::json!({
            "id": i + 1,
            "width": img.width,
            "height": img.height,
            "file_name": img.file_name,
        })).collect::<Vec<_>>(),
        "annotations": annotations,
        "categories": categories.iter().enumerate().map(|(k, c)| serde_json::json!({"id": k + 1, "name": c})).collect::<Vec<_>>(),
    });
    serde_json::to_string_pretty(&doc).expect("annotation JSON serializes")
}
