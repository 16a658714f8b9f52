//! Gradient-orientation integral channels and shape-indexed cell descriptors.

use alloc::vec;
use alloc::vec::Vec;

use libm::{floor, sqrt};

use crate::error::{check_len, Error, Result};
use crate::shape_model::Shape;

/// Number of unsigned orientation bins over `[0, pi)`.
pub const ORIENTATION_BINS: usize = 9;
/// Orientation bins plus the gradient magnitude channel.
pub const CHANNELS: usize = ORIENTATION_BINS + 1;
/// Index of the magnitude channel.
pub const MAGNITUDE_CHANNEL: usize = ORIENTATION_BINS;

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DegenerateImage { width, height });
        }
        check_len("image pixels", width * height, data.len())?;
        Ok(GrayImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// Summed-area tables of the orientation and magnitude channels, each
/// `(width + 1) x (height + 1)` with a zero first row and column.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralChannels {
    width: usize,
    height: usize,
    /// Channel-major; each channel row-major with stride `width + 1`.
    tables: Vec<f64>,
}

impl IntegralChannels {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn table(&self, channel: usize) -> &[f64] {
        let size = (self.width + 1) * (self.height + 1);
        &self.tables[channel * size..(channel + 1) * size]
    }

    /// Raw summed-area entry `S(x, y)` = sum over pixels `[0, x) x [0, y)`.
    pub fn at(&self, channel: usize, x: usize, y: usize) -> f64 {
        self.table(channel)[y * (self.width + 1) + x]
    }

    /// Sum of `channel` over pixels `[x0, x1) x [y0, y1)`, clamped to the image.
    /// Boxes outside the image contribute zero.
    pub fn rect_sum(&self, channel: usize, x0: i64, y0: i64, x1: i64, y1: i64) -> f64 {
        let cx = |v: i64| v.clamp(0, self.width as i64) as usize;
        let cy = |v: i64| v.clamp(0, self.height as i64) as usize;
        let (x0, x1, y0, y1) = (cx(x0), cx(x1), cy(y0), cy(y1));
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let t = self.table(channel);
        let s = self.width + 1;
        t[y1 * s + x1] - t[y0 * s + x1] - t[y1 * s + x0] + t[y0 * s + x0]
    }
}

/// Gradient of `image` at `(x, y)`: central differences inside, one-sided at borders.
pub fn gradient(image: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let (w, h) = (image.width(), image.height());
    let px = |x: usize, y: usize| image.get(x, y) as f64;
    let gx = if w < 2 {
        0.0
    } else if x == 0 {
        px(1, y) - px(0, y)
    } else if x == w - 1 {
        px(w - 1, y) - px(w - 2, y)
    } else {
        (px(x + 1, y) - px(x - 1, y)) / 2.0
    };
    let gy = if h < 2 {
        0.0
    } else if y == 0 {
        px(x, 1) - px(x, 0)
    } else if y == h - 1 {
        px(x, h - 1) - px(x, h - 2)
    } else {
        (px(x, y + 1) - px(x, y - 1)) / 2.0
    };
    (gx, gy)
}

/// `(cos, sin)` of the inner bin boundaries `k * pi / 9`, `k = 1..9`.
const BIN_EDGES: [(f64, f64); ORIENTATION_BINS - 1] = [
    (0.9396926207859084, 0.3420201433256687),
    (0.766044443118978, 0.6427876096865393),
    (0.5000000000000001, 0.8660254037844386),
    (0.17364817766693041, 0.984807753012208),
    (-0.1736481776669303, 0.984807753012208),
    (-0.4999999999999998, 0.8660254037844387),
    (-0.7660444431189779, 0.6427876096865395),
    (-0.9396926207859083, 0.3420201433256689),
];

/// Unsigned orientation bin of a gradient: `floor(angle / (pi / 9))` with the
/// angle folded into `[0, pi)`.
#[inline]
pub fn orientation_bin(gx: f64, gy: f64) -> usize {
    let (gx, gy) = if gy < 0.0 || (gy == 0.0 && gx < 0.0) { (-gx, -gy) } else { (gx, gy) };
    // the angle has passed edge k iff the gradient lies counter-clockwise of it
    BIN_EDGES
        .iter()
        .take_while(|(c, s)| gy * c - gx * s >= 0.0)
        .count()
}

/// Builds the nine orientation channels and the magnitude channel.
///
/// Each pixel's gradient magnitude goes entirely to the bin of its orientation.
pub fn compute_channels(image: &GrayImage) -> Result<IntegralChannels> {
    let (w, h) = (image.width(), image.height());
    if w < 3 || h < 3 {
        return Err(Error::DegenerateImage { width: w, height: h });
    }
    let stride = w + 1;
    let size = stride * (h + 1);
    let mut tables = vec![0.0; CHANNELS * size];
    let mut row_sum = [0.0f64; CHANNELS];
    let px = image.data();
    for y in 0..h {
        row_sum.iter_mut().for_each(|v| *v = 0.0);
        let row = &px[y * w..(y + 1) * w];
        let (up, down, dy_scale) = match y {
            0 => (row, &px[w..2 * w], 1.0),
            _ if y == h - 1 => (&px[(y - 1) * w..y * w], row, 1.0),
            _ => (&px[(y - 1) * w..y * w], &px[(y + 1) * w..(y + 2) * w], 0.5),
        };
        for x in 0..w {
            let gx = match x {
                0 => row[1] as f64 - row[0] as f64,
                _ if x == w - 1 => row[w - 1] as f64 - row[w - 2] as f64,
                _ => (row[x + 1] as f64 - row[x - 1] as f64) * 0.5,
            };
            let gy = (down[x] as f64 - up[x] as f64) * dy_scale;
            if gx != 0.0 || gy != 0.0 {
                let mag = sqrt(gx * gx + gy * gy);
                row_sum[orientation_bin(gx, gy)] += mag;
                row_sum[MAGNITUDE_CHANNEL] += mag;
            }
            let idx = (y + 1) * stride + x + 1;
            for (c, rs) in row_sum.iter().enumerate() {
                let base = c * size;
                tables[base + idx] = tables[base + idx - stride] + rs;
            }
        }
    }
    Ok(IntegralChannels {
        width: w,
        height: h,
        tables,
    })
}

/// Geometry of the per-landmark descriptor window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptorConfig {
    /// Side of the square window in pixels.
    pub window: usize,
    /// Cells per window side.
    pub cells: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig { window: 40, cells: 4 }
    }
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 || self.window == 0 || !self.window.is_multiple_of(self.cells) {
            return Err(Error::InvalidArgument(alloc::format!(
                "window {} must be a positive multiple of the cell count {}",
                self.window,
                self.cells
            )));
        }
        Ok(())
    }

    pub fn cell_size(&self) -> usize {
        self.window / self.cells
    }

    /// Values per landmark: `cells^2 * 9`.
    pub fn point_len(&self) -> usize {
        self.cells * self.cells * ORIENTATION_BINS
    }

    /// Top-left pixel of the window centered on `point`.
    pub fn window_origin(&self, point: [f64; 2]) -> (i64, i64) {
        let half = self.window as f64 / 2.0;
        (
            floor(point[0] - half + 0.5) as i64,
            floor(point[1] - half + 0.5) as i64,
        )
    }
}

/// Orientation histogram of every cell around `point`, L2-normalized.
///
/// Layout: cell row, cell column, bin. An all-zero block stays zero.
pub fn extract_point_descriptor(
    channels: &IntegralChannels,
    point: [f64; 2],
    config: &DescriptorConfig,
    out: &mut [f64],
) -> Result<()> {
    check_len("point descriptor", config.point_len(), out.len())?;
    let (x0, y0) = config.window_origin(point);
    let cell = config.cell_size() as i64;
    let mut k = 0;
    for cy in 0..config.cells as i64 {
        for cx in 0..config.cells as i64 {
            let (ax, ay) = (x0 + cx * cell, y0 + cy * cell);
            for b in 0..ORIENTATION_BINS {
                out[k] = channels.rect_sum(b, ax, ay, ax + cell, ay + cell);
                k += 1;
            }
        }
    }
    let norm = sqrt(out.iter().map(|v| v * v).sum::<f64>());
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(())
}

/// Concatenated per-landmark descriptors in landmark order.
pub fn shape_descriptor(channels: &IntegralChannels, shape: &Shape, config: &DescriptorConfig) -> Result<Vec<f64>> {
    let mut out = vec![0.0; shape.len() * config.point_len()];
    shape_descriptor_into(channels, shape, config, &mut out)?;
    Ok(out)
}

pub fn shape_descriptor_into(
    channels: &IntegralChannels,
    shape: &Shape,
    config: &DescriptorConfig,
    out: &mut [f64],
) -> Result<()> {
    config.validate()?;
    let len = config.point_len();
    check_len("shape descriptor", shape.len() * len, out.len())?;
    for (p, block) in shape.points().iter().zip(out.chunks_exact_mut(len)) {
        extract_point_descriptor(channels, *p, config, block)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
        GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
    }

    /// Per-pixel oracle: gradient, bin and magnitude computed pixel by pixel.
    fn pixel_channels(image: &GrayImage) -> Vec<Vec<f64>> {
        let (w, h) = (image.width(), image.height());
        let mut out = vec![vec![0.0; w * h]; CHANNELS];
        for y in 0..h {
            for x in 0..w {
                let (gx, gy) = gradient(image, x, y);
                let mag = (gx * gx + gy * gy).sqrt();
                if mag > 0.0 {
                    out[orientation_bin(gx, gy)][y * w + x] += mag;
                    out[MAGNITUDE_CHANNEL][y * w + x] += mag;
                }
            }
        }
        out
    }

    fn brute_rect(ch: &[f64], w: usize, h: usize, x0: i64, y0: i64, x1: i64, y1: i64) -> f64 {
        let mut s = 0.0;
        for y in y0.max(0)..y1.min(h as i64) {
            for x in x0.max(0)..x1.min(w as i64) {
                s += ch[y as usize * w + x as usize];
            }
        }
        s
    }

    #[test]
    fn orientation_bins_match_angle_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let (gx, gy): (f64, f64) = (rng.gen_range(-255.0..255.0), rng.gen_range(-255.0..255.0));
            let mut a = gy.atan2(gx);
            if a < 0.0 {
                a += core::f64::consts::PI;
            }
            let oracle = ((a / (core::f64::consts::PI / 9.0)).floor() as usize).min(8);
            assert_eq!(orientation_bin(gx, gy), oracle, "({gx}, {gy})");
        }
        assert_eq!(orientation_bin(1.0, 0.0), 0);
        assert_eq!(orientation_bin(-1.0, 0.0), 0);
        assert_eq!(orientation_bin(0.0, 1.0), 4);
        assert_eq!(orientation_bin(0.0, -1.0), 4);
    }

    #[test]
    fn constant_image_has_empty_channels() {
        let img = GrayImage::filled(8, 6, 77).unwrap();
        let ch = compute_channels(&img).unwrap();
        for c in 0..CHANNELS {
            assert_eq!(ch.rect_sum(c, 0, 0, 8, 6), 0.0);
        }
    }

    #[test]
    fn vertical_edge_lands_in_first_bin() {
        let data = (0..10 * 10).map(|i| if i % 10 < 5 { 20 } else { 200 }).collect();
        let img = GrayImage::new(10, 10, data).unwrap();
        let ch = compute_channels(&img).unwrap();
        let total = ch.rect_sum(MAGNITUDE_CHANNEL, 0, 0, 10, 10);
        assert!(total > 0.0);
        assert!((ch.rect_sum(0, 0, 0, 10, 10) - total).abs() < 1e-9);
        for b in 1..ORIENTATION_BINS {
            assert!(ch.rect_sum(b, 0, 0, 10, 10) < 1e-9);
        }
        // falling edge too
        let data = (0..10 * 10).map(|i| if i % 10 < 5 { 200 } else { 20 }).collect();
        let ch = compute_channels(&GrayImage::new(10, 10, data).unwrap()).unwrap();
        assert!((ch.rect_sum(0, 0, 0, 10, 10) - ch.rect_sum(MAGNITUDE_CHANNEL, 0, 0, 10, 10)).abs() < 1e-9);
    }

    #[test]
    fn rect_sums_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let img = random_image(&mut rng, 16, 16);
            let ch = compute_channels(&img).unwrap();
            let px = pixel_channels(&img);
            let x0 = rng.gen_range(-4..16);
            let y0 = rng.gen_range(-4..16);
            let x1 = x0 + rng.gen_range(0..14);
            let y1 = y0 + rng.gen_range(0..14);
            let mut bins = 0.0;
            for c in 0..CHANNELS {
                let fast = ch.rect_sum(c, x0, y0, x1, y1);
                assert!((fast - brute_rect(&px[c], 16, 16, x0, y0, x1, y1)).abs() < 1e-9);
                if c < ORIENTATION_BINS {
                    bins += fast;
                }
            }
            let mag = ch.rect_sum(MAGNITUDE_CHANNEL, x0, y0, x1, y1);
            assert!((bins - mag).abs() <= 1e-6 * mag.max(1.0));
        }
    }

    #[test]
    fn integral_tables_are_monotone_with_zero_border() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 9, 7);
        let ch = compute_channels(&img).unwrap();
        for c in 0..CHANNELS {
            for y in 0..=7 {
                assert_eq!(ch.at(c, 0, y), 0.0);
                for x in 1..=9 {
                    assert!(ch.at(c, x, y) >= ch.at(c, x - 1, y));
                }
            }
            for x in 0..=9 {
                assert_eq!(ch.at(c, x, 0), 0.0);
                for y in 1..=7 {
                    assert!(ch.at(c, x, y) >= ch.at(c, x, y - 1));
                }
            }
        }
    }

    #[test]
    fn degenerate_images_are_rejected() {
        assert!(GrayImage::new(0, 5, vec![]).is_err());
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
        assert!(compute_channels(&GrayImage::filled(2, 9, 0).unwrap()).is_err());
    }

    #[test]
    fn descriptor_zero_cases() {
        let cfg = DescriptorConfig::default();
        let ch = compute_channels(&GrayImage::filled(60, 60, 100).unwrap()).unwrap();
        let mut out = vec![1.0; 144];
        extract_point_descriptor(&ch, [30.0, 30.0], &cfg, &mut out).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = compute_channels(&random_image(&mut rng, 50, 50)).unwrap();
        extract_point_descriptor(&ch, [-100.0, 20.0], &cfg, &mut out).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        extract_point_descriptor(&ch, [25.0, 25.0], &cfg, &mut out).unwrap();
        let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn descriptor_matches_per_pixel_binning() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = DescriptorConfig::default();
        for _ in 0..20 {
            let img = random_image(&mut rng, 64, 48);
            let ch = compute_channels(&img).unwrap();
            let point = [rng.gen_range(-10.0..74.0), rng.gen_range(-10.0..58.0)];
            let mut fast = vec![0.0; 144];
            extract_point_descriptor(&ch, point, &cfg, &mut fast).unwrap();
            // oracle
            let (x0, y0) = (
                (point[0] - 20.0 + 0.5).floor() as i64,
                (point[1] - 20.0 + 0.5).floor() as i64,
            );
            let mut slow = vec![0.0; 144];
            for y in y0..y0 + 40 {
                for x in x0..x0 + 40 {
                    if x < 0 || y < 0 || x >= 64 || y >= 48 {
                        continue;
                    }
                    let (gx, gy) = gradient(&img, x as usize, y as usize);
                    let mag = (gx * gx + gy * gy).sqrt();
                    if mag == 0.0 {
                        continue;
                    }
                    let cell = ((y - y0) / 10 * 4 + (x - x0) / 10) as usize;
                    slow[cell * 9 + orientation_bin(gx, gy)] += mag;
                }
            }
            let norm: f64 = slow.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                slow.iter_mut().for_each(|v| *v /= norm);
            }
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn shape_descriptor_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = DescriptorConfig::default();
        let ch = compute_channels(&random_image(&mut rng, 120, 120)).unwrap();
        let pts: Vec<[f64; 2]> = (0..68).map(|_| [rng.gen_range(0.0..120.0), rng.gen_range(0.0..120.0)]).collect();
        let shape = Shape::new(pts.clone()).unwrap();
        let d = shape_descriptor(&ch, &shape, &cfg).unwrap();
        assert_eq!(d.len(), 9792);
        for (i, p) in pts.iter().enumerate() {
            let mut one = vec![0.0; 144];
            extract_point_descriptor(&ch, *p, &cfg, &mut one).unwrap();
            assert_eq!(&d[i * 144..(i + 1) * 144], &one[..]);
        }
        let mut swapped = pts.clone();
        swapped.swap(3, 10);
        let d2 = shape_descriptor(&ch, &Shape::new(swapped).unwrap(), &cfg).unwrap();
        assert_eq!(&d2[3 * 144..4 * 144], &d[10 * 144..11 * 144]);
        assert_eq!(&d2[10 * 144..11 * 144], &d[3 * 144..4 * 144]);
        assert_eq!(d, shape_descriptor(&ch, &shape, &cfg).unwrap());
    }

    #[test]
    fn descriptor_translation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = DescriptorConfig::default();
        let img = random_image(&mut rng, 100, 100);
        let (dx, dy) = (7usize, 4usize);
        let mut shifted = vec![0u8; 100 * 100];
        for y in 0..100 - dy {
            for x in 0..100 - dx {
                shifted[(y + dy) * 100 + x + dx] = img.get(x, y);
            }
        }
        let a = compute_channels(&img).unwrap();
        let b = compute_channels(&GrayImage::new(100, 100, shifted).unwrap()).unwrap();
        let mut da = vec![0.0; 144];
        let mut db = vec![0.0; 144];
        extract_point_descriptor(&a, [45.3, 40.8], &cfg, &mut da).unwrap();
        extract_point_descriptor(&b, [45.3 + dx as f64, 40.8 + dy as f64], &cfg, &mut db).unwrap();
        for (u, v) in da.iter().zip(&db) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}
