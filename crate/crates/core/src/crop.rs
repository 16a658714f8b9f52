//! Bounding-box crops resampled to a fixed square size.

use alloc::format;
use alloc::vec::Vec;

use libm::floor;

use crate::error::{Error, Result};
use crate::features::GrayImage;
use crate::shape_model::Shape;

/// Axis-aligned face box in image pixel coordinates (top-left corner and size).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateBox(format!("non-finite box {:?}", self)));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::DegenerateBox(format!("box {}x{} has no area", self.w, self.h)));
        }
        Ok(())
    }

    /// Tight box around a shape.
    pub fn enclosing(shape: &Shape) -> BBox {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in shape.points() {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    fn overlaps(&self, width: usize, height: usize) -> bool {
        self.x < width as f64 && self.y < height as f64 && self.x + self.w > 0.0 && self.y + self.h > 0.0
    }
}

/// Maps image coordinates into a `size x size` crop of a box.
///
/// Pixel centers sit at integer coordinates, so pixel `x` covers `[x - 0.5, x + 0.5)`:
/// `u = (x + 0.5 - bx) * size / w - 0.5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropTransform {
    pub bbox: BBox,
    pub size: usize,
}

impl CropTransform {
    pub fn new(bbox: BBox, size: usize) -> Result<Self> {
        bbox.validate()?;
        if size == 0 {
            return Err(Error::InvalidArgument("crop size must be positive".into()));
        }
        Ok(CropTransform { bbox, size })
    }

    pub fn scale_x(&self) -> f64 {
        self.size as f64 / self.bbox.w
    }

    pub fn scale_y(&self) -> f64 {
        self.size as f64 / self.bbox.h
    }

    /// Image point to crop point.
    pub fn forward(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] + 0.5 - self.bbox.x) * self.scale_x() - 0.5,
            (p[1] + 0.5 - self.bbox.y) * self.scale_y() - 0.5,
        ]
    }

    /// Crop point to image point.
    pub fn inverse(&self, u: [f64; 2]) -> [f64; 2] {
        [
            (u[0] + 0.5) / self.scale_x() + self.bbox.x - 0.5,
            (u[1] + 0.5) / self.scale_y() + self.bbox.y - 0.5,
        ]
    }

    pub fn shape_to_crop(&self, shape: &Shape) -> Shape {
        shape.map_points(|p| self.forward(p))
    }

    pub fn shape_to_image(&self, shape: &Shape) -> Shape {
        shape.map_points(|p| self.inverse(p))
    }
}

/// Bilinear sample with edge replication.
pub fn sample_bilinear(image: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let fx = floor(x);
    let fy = floor(y);
    let (ax, ay) = (x - fx, y - fy);
    let (x0, y0) = (fx as i64, fy as i64);
    let px = |xi: i64, yi: i64| image.get(xi.clamp(0, w - 1) as usize, yi.clamp(0, h - 1) as usize) as f64;
    let top = if ax == 0.0 {
        px(x0, y0)
    } else {
        px(x0, y0) * (1.0 - ax) + px(x0 + 1, y0) * ax
    };
    if ay == 0.0 {
        return top;
    }
    let bottom = if ax == 0.0 {
        px(x0, y0 + 1)
    } else {
        px(x0, y0 + 1) * (1.0 - ax) + px(x0 + 1, y0 + 1) * ax
    };
    top * (1.0 - ay) + bottom * ay
}

/// Resamples the box region to `size x size`. Fails when the box misses the image.
pub fn crop_resize(image: &GrayImage, bbox: &BBox, size: usize) -> Result<(GrayImage, CropTransform)> {
    let transform = CropTransform::new(*bbox, size)?;
    if !bbox.overlaps(image.width(), image.height()) {
        return Err(Error::DegenerateBox(format!(
            "box {:?} lies outside the {}x{} image",
            bbox,
            image.width(),
            image.height()
        )));
    }
    let mut data = Vec::with_capacity(size * size);
    for v in 0..size {
        for u in 0..size {
            let p = transform.inverse([u as f64, v as f64]);
            let value = sample_bilinear(image, p[0], p[1]);
            data.push(floor(value + 0.5).clamp(0.0, 255.0) as u8);
        }
    }
    Ok((GrayImage::new(size, size, data)?, transform))
}
