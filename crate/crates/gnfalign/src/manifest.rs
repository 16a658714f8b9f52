//! Dataset manifests: one tab-separated line `image_path pts_path x y w h` per
//! example. Relative paths resolve against the manifest's directory; blank lines
//! and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gnfalign_core::crop::BBox;
use gnfalign_core::features::GrayImage;
use gnfalign_core::shape_model::Shape;

use crate::error::{io_err, Error, Result};
use crate::pgm::load_gray;
use crate::pts::load_pts;

/// One annotated example as listed in a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedExample {
    pub image: PathBuf,
    pub pts: PathBuf,
    pub bbox: BBox,
}

impl AnnotatedExample {
    pub fn load_image(&self) -> Result<GrayImage> {
        load_gray(&self.image)
    }

    pub fn load_shape(&self) -> Result<Shape> {
        load_pts(&self.pts)
    }
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<AnnotatedExample>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fail = |detail: String| Error::Manifest {
            path: path.to_path_buf(),
            line: line_no,
            detail,
        };
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 6 {
            return Err(fail(format!("expected 6 tab-separated fields, found {}", fields.len())));
        }
        let mut numbers = [0.0f64; 4];
        for (n, f) in numbers.iter_mut().zip(&fields[2..]) {
            *n = f.trim().parse().map_err(|_| fail(format!("non-numeric box field {f:?}")))?;
        }
        let bbox = BBox::new(numbers[0], numbers[1], numbers[2], numbers[3]).map_err(|e| fail(e.to_string()))?;
        out.push(AnnotatedExample {
            image: base.join(fields[0]),
            pts: base.join(fields[1]),
            bbox,
        });
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<AnnotatedExample>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_manifest(&text, path)
}

/// Formats a manifest; `rows` hold paths as they should appear in the file.
pub fn format_manifest<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, BBox)>) -> String {
    let mut out = String::new();
    for (image, pts, b) in rows {
        let _ = writeln!(out, "{image}\t{pts}\t{}\t{}\t{}\t{}", b.x, b.y, b.w, b.h);
    }
    out
}
