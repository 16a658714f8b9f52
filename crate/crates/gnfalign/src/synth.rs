//! Procedural synthetic faces with known landmarks.
//!
//! Shapes come from a planted point distribution model over a 68-point
//! ibug-style template (or its 51-point inner subset). Each image draws the
//! facial contours as dark strokes on a textured background, a brighter face
//! region, and an oriented dark blob on every landmark.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use gnfalign_core::crop::BBox;
use gnfalign_core::features::GrayImage;
use gnfalign_core::nalgebra::DMatrix;
use gnfalign_core::shape_model::{synthesize, ParamVector, Pdm, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{io_err, Result};
use crate::manifest::format_manifest;
use crate::pgm::write_gray;
use crate::pts::write_pts;

/// Generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    /// 68 or 51 landmarks.
    pub n_points: usize,
    /// Square image side in pixels.
    pub image_size: usize,
    /// Template-to-pixel scale of an average face.
    pub face_scale: f64,
    /// Relative half-range of the overall scale.
    pub scale_jitter: f64,
    /// Relative half-range of each axis scale around the overall scale.
    pub aspect_jitter: f64,
    /// Rotation half-range in radians.
    pub rotation: f64,
    /// Translation half-range in pixels around the image center.
    pub translation: f64,
    /// Multiplier of the planted mode amplitudes.
    pub mode_amplitude: f64,
    /// Standard deviation of per-landmark Gaussian noise in pixels.
    pub landmark_noise: f64,
    /// Half-range of uniform pixel noise.
    pub pixel_noise: f64,
    /// Box side relative to the larger landmark extent.
    pub bbox_margin: f64,
    /// Relative half-range of box center and size jitter.
    pub bbox_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 100,
            n_points: 68,
            image_size: 256,
            face_scale: 1.2,
            scale_jitter: 0.15,
            aspect_jitter: 0.05,
            rotation: 0.15,
            translation: 12.0,
            mode_amplitude: 1.0,
            landmark_noise: 0.5,
            pixel_noise: 6.0,
            bbox_margin: 1.25,
            bbox_jitter: 0.05,
        }
    }
}

/// One generated example.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthExample {
    pub image: GrayImage,
    pub shape: Shape,
    pub bbox: BBox,
    /// Parameters of the noiseless shape under [`planted_pdm`].
    pub params: ParamVector,
}

const LEFT_EYE: [usize; 6] = [36, 37, 38, 39, 40, 41];
const RIGHT_EYE: [usize; 6] = [42, 43, 44, 45, 46, 47];

/// The 68-point template in template units, y pointing down.
pub fn template_68() -> Vec<[f64; 2]> {
    let mut p = Vec::with_capacity(68);
    for i in 0..17 {
        let a = PI * i as f64 / 16.0;
        p.push([-50.0 * a.cos(), -5.0 + 62.0 * a.sin()]);
    }
    for j in 0..5 {
        let x = -40.0 + 7.5 * j as f64;
        p.push([x, -30.0 - 6.0 * (PI * j as f64 / 4.0).sin()]);
    }
    for j in 0..5 {
        let x = 10.0 + 7.5 * j as f64;
        p.push([x, -30.0 - 6.0 * (PI * j as f64 / 4.0).sin()]);
    }
    for y in [-22.0, -12.0, -2.0, 8.0] {
        p.push([0.0, y]);
    }
    for (x, y) in [(-10.0, 14.0), (-5.0, 16.0), (0.0, 17.0), (5.0, 16.0), (10.0, 14.0)] {
        p.push([x, y]);
    }
    let left_eye = [(-33.0, -15.0), (-27.0, -19.0), (-19.0, -19.0), (-13.0, -15.0), (-19.0, -12.0), (-27.0, -12.0)];
    p.extend(left_eye.iter().map(|&(x, y)| [x, y]));
    let right_eye = [(13.0, -15.0), (19.0, -19.0), (27.0, -19.0), (33.0, -15.0), (27.0, -12.0), (19.0, -12.0)];
    p.extend(right_eye.iter().map(|&(x, y)| [x, y]));
    let outer_mouth = [
        (-20.0, 32.0),
        (-13.0, 28.0),
        (-5.0, 26.0),
        (0.0, 27.0),
        (5.0, 26.0),
        (13.0, 28.0),
        (20.0, 32.0),
        (13.0, 38.0),
        (5.0, 40.0),
        (0.0, 40.5),
        (-5.0, 40.0),
        (-13.0, 38.0),
    ];
    p.extend(outer_mouth.iter().map(|&(x, y)| [x, y]));
    let inner_mouth = [
        (-17.0, 32.0),
        (-6.0, 30.0),
        (0.0, 30.5),
        (6.0, 30.0),
        (17.0, 32.0),
        (6.0, 34.0),
        (0.0, 34.5),
        (-6.0, 34.0),
    ];
    p.extend(inner_mouth.iter().map(|&(x, y)| [x, y]));
    p
}

/// Raw planted deformation fields over the 68-point template.
fn raw_modes(t: &[[f64; 2]]) -> Vec<Vec<[f64; 2]>> {
    let zero = || vec![[0.0f64; 2]; 68];
    let mut modes = Vec::new();

    // mouth opening with the chin following
    let mut m = zero();
    for i in [55, 56, 57, 58, 59, 65, 66, 67] {
        m[i][1] = 6.0;
    }
    for (i, w) in [(6, 0.5), (7, 0.8), (8, 1.0), (9, 0.8), (10, 0.5)] {
        m[i][1] = 4.0 * w;
    }
    modes.push(m);

    // smile
    let mut m = zero();
    m[48] = [-3.0, -3.0];
    m[54] = [3.0, -3.0];
    m[60] = [-2.0, -2.0];
    m[64] = [2.0, -2.0];
    m[49] = [-1.0, -1.0];
    m[53] = [1.0, -1.0];
    modes.push(m);

    // brow raise
    let mut m = zero();
    for v in m.iter_mut().take(27).skip(17) {
        v[1] = -5.0;
    }
    modes.push(m);

    // jaw width
    let mut m = zero();
    for i in 0..17 {
        m[i][0] = 0.15 * t[i][0];
    }
    modes.push(m);

    // eye opening
    let mut m = zero();
    for i in [37, 38, 43, 44] {
        m[i][1] = -2.0;
    }
    for i in [40, 41, 46, 47] {
        m[i][1] = 2.0;
    }
    modes.push(m);

    // turn: inner features shift sideways, the jaw compresses on one side
    let mut m = zero();
    for v in m.iter_mut().take(36).skip(27) {
        v[0] = 6.0;
    }
    for v in m.iter_mut().take(68).skip(48) {
        v[0] = 3.0;
    }
    for v in m.iter_mut().take(48).skip(36) {
        v[0] = 2.0;
    }
    for i in 0..17 {
        m[i][0] = 4.0 * (1.0 - t[i][0].abs() / 50.0) + if t[i][0] > 0.0 { -0.06 * t[i][0] } else { 0.0 };
    }
    modes.push(m);
    modes
}

fn subset(points: &[[f64; 2]], n_points: usize) -> Vec<[f64; 2]> {
    match n_points {
        51 => points[17..].to_vec(),
        _ => points.to_vec(),
    }
}

fn stacked(points: &[[f64; 2]]) -> Vec<f64> {
    points.iter().map(|p| p[0]).chain(points.iter().map(|p| p[1])).collect()
}

/// Planted model: centered template mean and the planted modes made orthonormal
/// and orthogonal to translation, scaling and rotation of the mean. Returns the
/// model and the per-mode coefficient half-ranges.
pub fn planted_pdm(n_points: usize) -> Result<(Pdm, Vec<f64>)> {
    if n_points != 68 && n_points != 51 {
        return Err(gnfalign_core::Error::InvalidArgument(format!(
            "synthetic faces support 68 or 51 landmarks, not {n_points}"
        ))
        .into());
    }
    let full = template_68();
    let modes = raw_modes(&full);
    let mut mean = subset(&full, n_points);
    let n = mean.len();
    let c = mean.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n as f64, a[1] + p[1] / n as f64]);
    for p in &mut mean {
        p[0] -= c[0];
        p[1] -= c[1];
    }
    let mean_vec = stacked(&mean);
    let rotated: Vec<f64> = mean
        .iter()
        .map(|p| -p[1])
        .chain(mean.iter().map(|p| p[0]))
        .collect();
    let tx: Vec<f64> = (0..2 * n).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
    let ty: Vec<f64> = (0..2 * n).map(|i| if i < n { 0.0 } else { 1.0 }).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let normalize = |v: &mut Vec<f64>| -> f64 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        norm
    };
    let mut fixed = Vec::new();
    for mut v in [tx, ty, mean_vec, rotated] {
        for f in &fixed {
            let d: f64 = v.iter().zip(f as &Vec<f64>).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(f as &Vec<f64>).for_each(|(a, b)| *a -= d * b);
        }
        normalize(&mut v);
        fixed.push(v);
    }
    let mut amplitudes = Vec::new();
    for m in &modes {
        let mut v = stacked(&subset(m, n_points));
        for f in fixed.iter().chain(basis.iter()) {
            let d: f64 = v.iter().zip(f).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(f).for_each(|(a, b)| *a -= d * b);
        }
        let norm = normalize(&mut v);
        if norm > 1e-6 {
            amplitudes.push(norm);
            basis.push(v);
        }
    }
    let mut order: Vec<usize> = (0..basis.len()).collect();
    order.sort_by(|&a, &b| amplitudes[b].total_cmp(&amplitudes[a]));
    let matrix = DMatrix::from_fn(2 * n, order.len(), |r, c| basis[order[c]][r]);
    let amplitudes: Vec<f64> = order.iter().map(|&i| amplitudes[i]).collect();
    // a uniform draw on [-a, a] has variance a^2 / 3
    let eigenvalues = amplitudes.iter().map(|a| a * a / 3.0).collect();
    let pdm = Pdm::from_parts(Shape::new(mean)?, matrix, eigenvalues)?;
    Ok((pdm, amplitudes))
}

/// Contour polylines as landmark index lists, closed loops repeat their first index.
fn contours(n_points: usize) -> Vec<Vec<usize>> {
    let mut c: Vec<Vec<usize>> = vec![
        (17..22).collect(),
        (22..27).collect(),
        (27..31).collect(),
        (31..36).collect(),
        LEFT_EYE.iter().copied().chain([36]).collect(),
        RIGHT_EYE.iter().copied().chain([42]).collect(),
        (48..60).chain([48]).collect(),
        (60..68).chain([60]).collect(),
    ];
    if n_points == 68 {
        c.push((0..17).collect());
    }
    let offset = 68 - n_points;
    c.into_iter()
        .map(|line| line.into_iter().map(|i| i - offset).collect())
        .collect()
}

/// Unit tangent of the contour at every landmark.
fn tangents(points: &[[f64; 2]], lines: &[Vec<usize>]) -> Vec<[f64; 2]> {
    let mut t = vec![[1.0, 0.0]; points.len()];
    for line in lines {
        let closed = line.first() == line.last() && line.len() > 2;
        let body = if closed { &line[..line.len() - 1] } else { &line[..] };
        let k = body.len();
        for (j, &i) in body.iter().enumerate() {
            let (prev, next) = if closed {
                (body[(j + k - 1) % k], body[(j + 1) % k])
            } else {
                (body[j.saturating_sub(1)], body[(j + 1).min(k - 1)])
            };
            let d = [points[next][0] - points[prev][0], points[next][1] - points[prev][1]];
            let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if norm > 0.0 {
                t[i] = [d[0] / norm, d[1] / norm];
            }
        }
    }
    t
}

fn distance_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// Draws a face with landmarks `shape` into a `size x size` image.
pub fn render(shape: &Shape, size: usize, pixel_noise: f64, rng: &mut ChaCha8Rng) -> GrayImage {
    let pts = shape.points();
    let lines = contours(pts.len());
    let phase: [f64; 4] = [
        rng.gen_range(0.0..2.0 * PI),
        rng.gen_range(0.0..2.0 * PI),
        rng.gen_range(15.0..35.0),
        rng.gen_range(15.0..35.0),
    ];
    let mut canvas: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64, (i / size) as f64);
            100.0 + 18.0 * (x / phase[2] + phase[0]).sin() * (y / phase[3] + phase[1]).cos()
        })
        .collect();

    // brighter face region: ellipse through the jaw extent and above the brows
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0 - 0.1 * (y1 - y0));
    let (rx, ry) = (0.55 * (x1 - x0), 0.62 * (y1 - y0));
    for (i, v) in canvas.iter_mut().enumerate() {
        let (x, y) = ((i % size) as f64, (i / size) as f64);
        let r = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2);
        *v += 30.0 / (1.0 + ((r - 1.0) * 12.0).exp());
    }

    let mut stamp = |x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64, f: &dyn Fn(f64, f64) -> f64| {
        let xa = x_lo.floor().max(0.0) as usize;
        let xb = (x_hi.ceil().max(-1.0) as i64).min(size as i64 - 1);
        let ya = y_lo.floor().max(0.0) as usize;
        let yb = (y_hi.ceil().max(-1.0) as i64).min(size as i64 - 1);
        if xb < 0 || yb < 0 {
            return;
        }
        for y in ya..=yb as usize {
            for x in xa..=xb as usize {
                canvas[y * size + x] += f(x as f64, y as f64);
            }
        }
    };

    const STROKE_SIGMA: f64 = 1.2;
    for line in &lines {
        for w in line.windows(2) {
            let (a, b) = (pts[w[0]], pts[w[1]]);
            let pad = 4.0 * STROKE_SIGMA;
            stamp(
                a[0].min(b[0]) - pad,
                a[0].max(b[0]) + pad,
                a[1].min(b[1]) - pad,
                a[1].max(b[1]) + pad,
                &|x, y| {
                    let d = distance_to_segment([x, y], a, b);
                    -35.0 * (-d * d / (2.0 * STROKE_SIGMA * STROKE_SIGMA)).exp()
                },
            );
        }
    }

    let tangent = tangents(pts, &lines);
    const ALONG: f64 = 3.0;
    const ACROSS: f64 = 1.5;
    for (p, t) in pts.iter().zip(&tangent) {
        let pad = 4.0 * ALONG;
        let (p, t) = (*p, *t);
        stamp(p[0] - pad, p[0] + pad, p[1] - pad, p[1] + pad, &move |x, y| {
            let (dx, dy) = (x - p[0], y - p[1]);
            let u = dx * t[0] + dy * t[1];
            let v = -dx * t[1] + dy * t[0];
            -70.0 * (-(u * u) / (2.0 * ALONG * ALONG) - (v * v) / (2.0 * ACROSS * ACROSS)).exp()
        });
    }

    let data = canvas
        .into_iter()
        .map(|v| {
            let noise = if pixel_noise > 0.0 { rng.gen_range(-pixel_noise..=pixel_noise) } else { 0.0 };
            (v + noise).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(size, size, data).expect("canvas dimensions are consistent")
}

/// Draws the next example.
fn generate_one(config: &SynthConfig, pdm: &Pdm, amplitudes: &[f64], rng: &mut ChaCha8Rng) -> Result<SynthExample> {
    let half = |rng: &mut ChaCha8Rng, h: f64| if h > 0.0 { rng.gen_range(-h..=h) } else { 0.0 };
    let s = config.face_scale * (1.0 + half(rng, config.scale_jitter));
    let center = (config.image_size as f64 - 1.0) / 2.0;
    let params = ParamVector {
        alpha_x: s * (1.0 + half(rng, config.aspect_jitter)),
        alpha_y: s * (1.0 + half(rng, config.aspect_jitter)),
        gamma: half(rng, config.rotation),
        t_x: center + half(rng, config.translation),
        t_y: center + half(rng, config.translation),
        g: amplitudes.iter().map(|a| half(rng, a * config.mode_amplitude)).collect(),
    };
    let clean = synthesize(&params, pdm)?;
    let shape = if config.landmark_noise > 0.0 {
        let normal = Normal::new(0.0, config.landmark_noise).expect("positive noise level");
        let pts: Vec<[f64; 2]> = clean
            .points()
            .iter()
            .map(|p| [p[0] + normal.sample(rng), p[1] + normal.sample(rng)])
            .collect();
        Shape::new(pts)?
    } else {
        clean
    };
    let tight = BBox::enclosing(&shape);
    let side = tight.w.max(tight.h) * config.bbox_margin * (1.0 + half(rng, config.bbox_jitter));
    let cx = tight.x + tight.w / 2.0 + half(rng, config.bbox_jitter) * side;
    let cy = tight.y + tight.h / 2.0 + half(rng, config.bbox_jitter) * side;
    let bbox = BBox::new(cx - side / 2.0, cy - side / 2.0, side, side)?;
    let image = render(&shape, config.image_size, config.pixel_noise, rng);
    Ok(SynthExample {
        image,
        shape,
        bbox,
        params,
    })
}

/// Generates `config.count` examples, deterministically for a seed.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<Vec<SynthExample>> {
    let (pdm, amplitudes) = planted_pdm(config.n_points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..config.count)
        .map(|_| generate_one(config, &pdm, &amplitudes, &mut rng))
        .collect()
}

/// Writes `images/NNNNN.pgm`, `pts/NNNNN.pts` and `manifest.tsv` under `dir`.
/// Returns the manifest path.
pub fn write_dataset(dir: &Path, examples: &[SynthExample]) -> Result<PathBuf> {
    for sub in ["images", "pts"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut names = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let image = format!("images/{i:05}.pgm");
        let pts = format!("pts/{i:05}.pts");
        write_gray(&dir.join(&image), &ex.image)?;
        write_pts(&dir.join(&pts), &ex.shape)?;
        names.push((image, pts));
    }
    let manifest = dir.join("manifest.tsv");
    let text = format_manifest(
        names
            .iter()
            .zip(examples)
            .map(|((i, p), ex)| (i.as_str(), p.as_str(), ex.bbox)),
    );
    std::fs::write(&manifest, text).map_err(io_err(&manifest))?;
    Ok(manifest)
}
