//! PASCAL-VOC style annotation files.

use crate::grid::BoundingBox;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("`{field}` is not an integer coordinate: {value:?}")]
    BadCoordinate { field: &'static str, value: String },
    #[error("inverted box: xmin {xmin} xmax {xmax} ymin {ymin} ymax {ymax}")]
    InvertedBox { xmin: i64, ymin: i64, xmax: i64, ymax: i64 },
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &'static str) -> Result<roxmltree::Node<'a, 'i>, VocError> {
    node.children()
        .find(|c| c.has_tag_name(name))
        .ok_or(VocError::MissingField(name))
}

fn coordinate(bndbox: roxmltree::Node<'_, '_>, field: &'static str) -> Result<i64, VocError> {
    let text = child(bndbox, field)?.text().unwrap_or("").trim();
    if let Ok(v) = text.parse::<i64>() {
        return Ok(v);
    }
    match text.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 1e15 => Ok(v as i64),
        _ => Err(VocError::BadCoordinate {
            field,
            value: text.to_owned(),
        }),
    }
}

/// Extract the class name (of the first object) and every object's box.
///
/// VOC coordinates are 1-based and inclusive; they are converted to the
/// half-open 0-based box `(xmin - 1, ymin - 1, xmax, ymax)`.
pub fn parse_voc_xml(document: &[u8]) -> Result<(String, Vec<BoundingBox>), VocError> {
    let text = std::str::from_utf8(document).map_err(|e| VocError::MalformedXml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| VocError::MalformedXml(e.to_string()))?;

    let mut class_name = None;
    let mut boxes = Vec::new();
    for object in doc.descendants().filter(|n| n.has_tag_name("object")) {
        if class_name.is_none() {
            let name = child(object, "name")?.text().unwrap_or("").trim();
            if name.is_empty() {
                return Err(VocError::MissingField("name"));
            }
            class_name = Some(name.to_owned());
        }
        let bndbox = child(object, "bndbox")?;
        let xmin = coordinate(bndbox, "xmin")?;
        let ymin = coordinate(bndbox, "ymin")?;
        let xmax = coordinate(bndbox, "xmax")?;
        let ymax = coordinate(bndbox, "ymax")?;
        if xmax < xmin || ymax < ymin {
            return Err(VocError::InvertedBox { xmin, ymin, xmax, ymax });
        }
        boxes.push(BoundingBox {
            x_min: xmin - 1,
            y_min: ymin - 1,
            x_max: xmax,
            y_max: ymax,
        });
    }
    let class_name = class_name.ok_or(VocError::MissingField("object"))?;
    Ok((class_name, boxes))
}

/// Inverse of the coordinate shift in [`parse_voc_xml`].
fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn write_voc_xml(filename: &str, width: u32, height: u32, class: &str, boxes: &[BoundingBox]) -> String {
    let (filename, class) = (escape(filename), escape(class));
    let mut out = String::new();
    out.push_str("<annotation>\n");
    out.push_str(&format!("  <filename>{filename}</filename>\n"));
    out.push_str(&format!(
        "  <size>\n    <width>{width}</width>\n    <height>{height}</height>\n    <depth>3</depth>\n  </size>\n"
    ));
    for b in boxes {
        out.push_str("  <object>\n");
        out.push_str(&format!("    <name>{class}</name>\n"));
        out.push_str(&format!(
            "    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n    </bndbox>\n",
            b.x_min + 1,
            b.y_min + 1,
            b.x_max,
            b.y_max
        ));
        out.push_str("  </object>\n");
    }
    out.push_str("</annotation>\n");
    out
}
