//! Parametric shape model.
//!
//! A shape `s(p)` is synthesized from the mean shape `s0` and the PCA
//! deformation basis `Phi` as
//!
//! ```text
//! s(p) = diag(alpha_x, alpha_y) * R(gamma) * (s0 + Phi * g) + t
//! ```
//!
//! Stacked coordinate vectors always use the layout `(x_1..x_N, y_1..y_N)`.

use alloc::vec;
use alloc::vec::Vec;

use libm::{atan2, cos, sin, sqrt};
use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Number of rigid parameters `(alpha_x, alpha_y, gamma, t_x, t_y)`.
pub const RIGID_PARAMS: usize = 5;

/// Ordered landmark coordinates in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    points: Vec<[f64; 2]>,
}

impl Shape {
    /// Builds a shape, rejecting fewer than three points or non-finite coordinates.
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidArgument(alloc::format!(
                "a shape needs at least 3 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::NonFinite("shape coordinates"));
        }
        Ok(Shape { points })
    }

    pub(crate) fn from_points_unchecked(points: Vec<[f64; 2]>) -> Self {
        Shape { points }
    }

    /// Rebuilds a shape from the stacked `(x.., y..)` layout.
    pub fn from_stacked(values: &[f64]) -> Result<Self> {
        if !values.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(alloc::format!(
                "stacked shape vector has odd length {}",
                values.len()
            )));
        }
        let n = values.len() / 2;
        Shape::new((0..n).map(|i| [values[i], values[n + i]]).collect())
    }

    pub fn to_stacked(&self) -> Vec<f64> {
        let n = self.points.len();
        let mut out = vec![0.0; 2 * n];
        for (i, p) in self.points.iter().enumerate() {
            out[i] = p[0];
            out[n + i] = p[1];
        }
        out
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.points.len() as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / n, sy / n]
    }

    /// Root-mean-square distance of the points from their centroid.
    pub fn rms_radius(&self) -> f64 {
        let c = self.centroid();
        let ss: f64 = self
            .points
            .iter()
            .map(|p| (p[0] - c[0]) * (p[0] - c[0]) + (p[1] - c[1]) * (p[1] - c[1]))
            .sum();
        sqrt(ss / self.points.len() as f64)
    }

    /// Adds a stacked displacement `(dx.., dy..)` to every point.
    pub fn displaced(&self, delta: &[f64]) -> Result<Shape> {
        let n = self.points.len();
        check_len("shape displacement", 2 * n, delta.len())?;
        Ok(Shape::from_points_unchecked(
            self.points
                .iter()
                .enumerate()
                .map(|(i, p)| [p[0] + delta[i], p[1] + delta[n + i]])
                .collect(),
        ))
    }

    /// Sum of squared point-to-point distances.
    pub fn squared_distance(&self, other: &Shape) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]))
            .sum()
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &Shape) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max)
    }

    pub fn map_points(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Shape {
        Shape::from_points_unchecked(self.points.iter().map(|&p| f(p)).collect())
    }
}

/// Shape parameters `(alpha_x, alpha_y, gamma, t_x, t_y, g_1..g_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub alpha_x: f64,
    pub alpha_y: f64,
    /// Rotation angle in radians.
    pub gamma: f64,
    pub t_x: f64,
    pub t_y: f64,
    /// PDM coefficients.
    pub g: Vec<f64>,
}

impl ParamVector {
    /// Unit scale, no rotation or translation, zero deformation.
    pub fn identity(modes: usize) -> Self {
        ParamVector {
            alpha_x: 1.0,
            alpha_y: 1.0,
            gamma: 0.0,
            t_x: 0.0,
            t_y: 0.0,
            g: vec![0.0; modes],
        }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() < RIGID_PARAMS {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: RIGID_PARAMS,
                actual: values.len(),
            });
        }
        Ok(ParamVector {
            alpha_x: values[0],
            alpha_y: values[1],
            gamma: values[2],
            t_x: values[3],
            t_y: values[4],
            g: values[RIGID_PARAMS..].to_vec(),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&[self.alpha_x, self.alpha_y, self.gamma, self.t_x, self.t_y]);
        out.extend_from_slice(&self.g);
        out
    }

    pub fn dim(&self) -> usize {
        RIGID_PARAMS + self.g.len()
    }

    pub fn modes(&self) -> usize {
        self.g.len()
    }

    /// Adds `delta` component-wise.
    pub fn add(&mut self, delta: &[f64]) -> Result<()> {
        check_len("parameter update", self.dim(), delta.len())?;
        self.alpha_x += delta[0];
        self.alpha_y += delta[1];
        self.gamma += delta[2];
        self.t_x += delta[3];
        self.t_y += delta[4];
        for (g, d) in self.g.iter_mut().zip(&delta[RIGID_PARAMS..]) {
            *g += d;
        }
        Ok(())
    }

    /// `self - other`, component-wise.
    pub fn difference(&self, other: &ParamVector) -> Result<Vec<f64>> {
        check_len("parameter difference", self.dim(), other.dim())?;
        Ok(self
            .to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| a - b)
            .collect())
    }
}

/// Similarity transform `x -> scale * R(angle) * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub scale: f64,
    pub angle: f64,
    pub translation: [f64; 2],
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        scale: 1.0,
        angle: 0.0,
        translation: [0.0, 0.0],
    };

    pub fn apply_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = (sin(self.angle), cos(self.angle));
        [
            self.scale * (c * p[0] - s * p[1]) + self.translation[0],
            self.scale * (s * p[0] + c * p[1]) + self.translation[1],
        ]
    }

    pub fn apply(&self, shape: &Shape) -> Shape {
        shape.map_points(|p| self.apply_point(p))
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = RigidTransform {
            scale: 1.0 / self.scale,
            angle: -self.angle,
            translation: [0.0, 0.0],
        };
        let t = inv.apply_point(self.translation);
        RigidTransform {
            translation: [-t[0], -t[1]],
            ..inv
        }
    }
}

/// Similarity transform mapping `shape` onto `reference` in the least-squares sense.
fn similarity_fit(shape: &Shape, reference: &Shape) -> Result<RigidTransform> {
    check_len("procrustes points", reference.len(), shape.len())?;
    let cs = shape.centroid();
    let cr = reference.centroid();
    let (mut a, mut b, mut norm_s, mut norm_r) = (0.0, 0.0, 0.0, 0.0);
    for (p, q) in shape.points().iter().zip(reference.points()) {
        let (x, y) = (p[0] - cs[0], p[1] - cs[1]);
        let (u, v) = (q[0] - cr[0], q[1] - cr[1]);
        a += x * u + y * v;
        b += x * v - y * u;
        norm_s += x * x + y * y;
        norm_r += u * u + v * v;
    }
    if norm_r <= 0.0 || norm_s <= 0.0 {
        return Err(Error::DegenerateShape);
    }
    let angle = atan2(b, a);
    let scale = sqrt(a * a + b * b) / norm_s;
    let rot = RigidTransform {
        scale,
        angle,
        translation: [0.0, 0.0],
    }
    .apply_point(cs);
    Ok(RigidTransform {
        scale,
        angle,
        translation: [cr[0] - rot[0], cr[1] - rot[1]],
    })
}

/// Aligns `shape` onto `reference` with a similarity transform.
///
/// Returns the aligned shape and the removed rigid component, i.e. the
/// transform that maps the aligned shape back onto `shape`.
pub fn procrustes_align(shape: &Shape, reference: &Shape) -> Result<(Shape, RigidTransform)> {
    let fit = similarity_fit(shape, reference)?;
    Ok((fit.apply(shape), fit.inverse()))
}

/// Generalized Procrustes analysis.
///
/// Iteratively aligns every shape to the running mean. The mean is kept
/// centered at the origin with RMS radius `scale`, its orientation anchored to
/// the first shape.
pub fn generalized_procrustes(shapes: &[Shape], scale: f64) -> Result<(Vec<Shape>, Shape)> {
    let first = shapes.first().ok_or(Error::EmptyDataset)?;
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "procrustes scale must be positive, got {scale}"
        )));
    }
    let normalize = |s: &Shape| -> Result<Shape> {
        let c = s.centroid();
        let r = s.rms_radius();
        if r <= 0.0 {
            return Err(Error::DegenerateShape);
        }
        Ok(s.map_points(|p| [(p[0] - c[0]) * scale / r, (p[1] - c[1]) * scale / r]))
    };
    let anchor = normalize(first)?;
    let mut reference = anchor.clone();
    let mut aligned: Vec<Shape> = Vec::with_capacity(shapes.len());
    for _ in 0..100 {
        aligned.clear();
        for s in shapes {
            check_len("procrustes points", first.len(), s.len())?;
            aligned.push(procrustes_align(s, &reference)?.0);
        }
        let mean = normalize(&coordinate_mean(&aligned))?;
        let mean = procrustes_align(&mean, &anchor)?.0;
        let mean = normalize(&mean)?;
        let change = mean.max_abs_diff(&reference);
        reference = mean;
        if change < 1e-12 * scale {
            break;
        }
    }
    aligned.clear();
    for s in shapes {
        aligned.push(procrustes_align(s, &reference)?.0);
    }
    Ok((aligned, reference))
}

fn coordinate_mean(shapes: &[Shape]) -> Shape {
    let n = shapes[0].len();
    let mut acc = vec![[0.0f64; 2]; n];
    for s in shapes {
        for (a, p) in acc.iter_mut().zip(s.points()) {
            a[0] += p[0];
            a[1] += p[1];
        }
    }
    let k = shapes.len() as f64;
    Shape::from_points_unchecked(acc.into_iter().map(|a| [a[0] / k, a[1] / k]).collect())
}

/// Point distribution model: mean shape plus a column-orthonormal deformation basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Pdm {
    mean: Shape,
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl Pdm {
    /// Assembles a PDM from stored parts, validating orthonormality and ordering.
    pub fn from_parts(mean: Shape, basis: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        check_len("pdm basis rows", 2 * mean.len(), basis.nrows())?;
        check_len("pdm eigenvalues", basis.ncols(), eigenvalues.len())?;
        let gram = basis.transpose() * &basis;
        let m = basis.ncols();
        for i in 0..m {
            for j in 0..m {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - expected).abs() > 1e-8 {
                    return Err(Error::InvalidArgument(
                        "pdm basis is not column-orthonormal".into(),
                    ));
                }
            }
        }
        if eigenvalues.iter().any(|&e| !(e >= 0.0))
            || eigenvalues.windows(2).any(|w| w[0] < w[1])
        {
            return Err(Error::InvalidArgument(
                "pdm eigenvalues must be non-negative and sorted descending".into(),
            ));
        }
        Ok(Pdm {
            mean,
            basis,
            eigenvalues,
        })
    }

    pub fn mean(&self) -> &Shape {
        &self.mean
    }

    /// The `2N x m` deformation basis.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_points(&self) -> usize {
        self.mean.len()
    }

    pub fn param_dim(&self) -> usize {
        self.modes() + RIGID_PARAMS
    }

    /// Stacked `s0 + Phi g`.
    fn deformed(&self, g: &[f64]) -> Vec<f64> {
        let mut base = self.mean.to_stacked();
        for (j, &gj) in g.iter().enumerate() {
            if gj != 0.0 {
                for (b, phi) in base.iter_mut().zip(self.basis.column(j).iter()) {
                    *b += gj * phi;
                }
            }
        }
        base
    }
}

/// Builds a PDM by PCA over already-aligned shapes.
///
/// The basis holds the top `modes` right singular vectors of the centered
/// shape matrix; eigenvalues are the corresponding sample variances.
pub fn build_pdm(shapes: &[Shape], modes: usize) -> Result<Pdm> {
    let first = shapes.first().ok_or(Error::EmptyDataset)?;
    let n = first.len();
    for s in shapes {
        check_len("pdm shape points", n, s.len())?;
    }
    if modes > 2 * n {
        return Err(Error::InvalidArgument(alloc::format!(
            "{modes} modes exceed the coordinate dimension {}",
            2 * n
        )));
    }
    if modes >= shapes.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{modes} modes need more than {} sample shapes",
            shapes.len()
        )));
    }
    let mean = coordinate_mean(shapes);
    let mean_stacked = mean.to_stacked();
    let samples = shapes.len();
    let mut centered = DMatrix::<f64>::zeros(samples, 2 * n);
    for (r, s) in shapes.iter().enumerate() {
        for (c, (v, m)) in s.to_stacked().iter().zip(&mean_stacked).enumerate() {
            centered[(r, c)] = v - m;
        }
    }
    // Pad with zero rows so the SVD always yields a full 2N x 2N right basis.
    let rows = samples.max(2 * n);
    let padded = centered.resize(rows, 2 * n, 0.0);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::Domain("svd did not produce a right basis".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let denom = (samples.saturating_sub(1)).max(1) as f64;
    let mut basis = DMatrix::<f64>::zeros(2 * n, modes);
    let mut eigenvalues = Vec::with_capacity(modes);
    for (j, &idx) in order.iter().take(modes).enumerate() {
        let mut col: DVector<f64> = v_t.row(idx).transpose();
        // deterministic sign: largest-magnitude entry positive
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
        basis.set_column(j, &col);
        let sv = svd.singular_values[idx];
        eigenvalues.push(sv * sv / denom);
    }
    Pdm::from_parts(mean, basis, eigenvalues)
}

/// Synthesizes the shape for parameters `p`.
pub fn synthesize(p: &ParamVector, pdm: &Pdm) -> Result<Shape> {
    check_len("pdm coefficients", pdm.modes(), p.modes())?;
    let n = pdm.n_points();
    let base = pdm.deformed(&p.g);
    let (s, c) = (sin(p.gamma), cos(p.gamma));
    Ok(Shape::from_points_unchecked(
        (0..n)
            .map(|i| {
                let (u, v) = (base[i], base[n + i]);
                [
                    p.alpha_x * (c * u - s * v) + p.t_x,
                    p.alpha_y * (s * u + c * v) + p.t_y,
                ]
            })
            .collect(),
    ))
}

/// Analytic Jacobian `ds/dp`, shape `2N x (m+5)`, rows in stacked layout.
pub fn shape_jacobian(p: &ParamVector, pdm: &Pdm) -> Result<DMatrix<f64>> {
    check_len("pdm coefficients", pdm.modes(), p.modes())?;
    let n = pdm.n_points();
    let m = pdm.modes();
    let base = pdm.deformed(&p.g);
    let (s, c) = (sin(p.gamma), cos(p.gamma));
    let mut jac = DMatrix::<f64>::zeros(2 * n, m + RIGID_PARAMS);
    for i in 0..n {
        let (u, v) = (base[i], base[n + i]);
        let rx = c * u - s * v;
        let ry = s * u + c * v;
        jac[(i, 0)] = rx;
        jac[(n + i, 1)] = ry;
        jac[(i, 2)] = -p.alpha_x * ry;
        jac[(n + i, 2)] = p.alpha_y * rx;
        jac[(i, 3)] = 1.0;
        jac[(n + i, 4)] = 1.0;
        for j in 0..m {
            let (px, py) = (pdm.basis[(i, j)], pdm.basis[(n + i, j)]);
            jac[(i, RIGID_PARAMS + j)] = p.alpha_x * (c * px - s * py);
            jac[(n + i, RIGID_PARAMS + j)] = p.alpha_y * (s * px + c * py);
        }
    }
    Ok(jac)
}

/// Result of [`fit_parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub params: ParamVector,
    /// Final objective `||target - s(p)||^2`.
    pub residual: f64,
    /// Objective after initialization and after every accepted step.
    pub trace: Vec<f64>,
}

fn objective(target: &[f64], p: &ParamVector, pdm: &Pdm) -> f64 {
    match synthesize(p, pdm) {
        Ok(s) => s
            .to_stacked()
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum(),
        Err(_) => f64::INFINITY,
    }
}

/// Recovers shape parameters for `target` with damped Gauss-Newton.
///
/// Starts from the similarity fit of the mean shape plus the projection of
/// the rigidly normalized residual on the basis. Each step solves
/// `(J^T J + lambda I) delta = J^T r` with `lambda = 1e-8 trace(J^T J)/(m+5)`,
/// raising `lambda` tenfold whenever a step is non-finite or increases the
/// objective.
pub fn fit_parameters(target: &Shape, pdm: &Pdm, iterations: usize) -> Result<FitOutcome> {
    check_len("target points", pdm.n_points(), target.len())?;
    if target
        .points()
        .iter()
        .any(|p| !p[0].is_finite() || !p[1].is_finite())
    {
        return Err(Error::NonFinite("fit target"));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("at least one iteration is required".into()));
    }
    let m = pdm.modes();
    let dim = m + RIGID_PARAMS;
    let init = similarity_fit(pdm.mean(), target)?;
    let back = init.inverse().apply(target).to_stacked();
    let mean = pdm.mean().to_stacked();
    let diff: Vec<f64> = back.iter().zip(&mean).map(|(a, b)| a - b).collect();
    let g: Vec<f64> = (0..m)
        .map(|j| pdm.basis.column(j).iter().zip(&diff).map(|(a, b)| a * b).sum())
        .collect();
    let mut p = ParamVector {
        alpha_x: init.scale,
        alpha_y: init.scale,
        gamma: init.angle,
        t_x: init.translation[0],
        t_y: init.translation[1],
        g,
    };
    let target_vec = target.to_stacked();
    let mut obj = objective(&target_vec, &p, pdm);
    let mut trace = vec![obj];

    for _ in 0..iterations {
        if obj == 0.0 {
            break;
        }
        let jac = shape_jacobian(&p, pdm)?;
        let current = synthesize(&p, pdm)?.to_stacked();
        let r = DVector::from_iterator(
            target_vec.len(),
            target_vec.iter().zip(&current).map(|(a, b)| a - b),
        );
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * r;
        let trace_jtj = jtj.trace();
        let mut lambda = if trace_jtj > 0.0 {
            1e-8 * trace_jtj / dim as f64
        } else {
            1e-12
        };
        let mut accepted = None;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for d in 0..dim {
                damped[(d, d)] += lambda;
            }
            if let Some(chol) = damped.cholesky() {
                let delta = chol.solve(&jtr);
                if delta.iter().all(|v| v.is_finite()) {
                    let mut cand = p.clone();
                    cand.add(delta.as_slice())?;
                    let cand_obj = objective(&target_vec, &cand, pdm);
                    if cand_obj.is_finite() && cand_obj <= obj {
                        accepted = Some((cand, cand_obj));
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        match accepted {
            Some((cand, cand_obj)) => {
                let stalled = cand_obj == obj;
                p = cand;
                obj = cand_obj;
                trace.push(obj);
                if stalled {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(FitOutcome {
        params: p,
        residual: obj,
        trace,
    })
}
