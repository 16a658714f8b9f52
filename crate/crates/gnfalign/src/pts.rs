//! ibug `.pts` landmark files.
//!
//! ```text
//! version: 1
//! n_points: 68
//! {
//! x y
//! ...
//! }
//! ```

use std::fmt::Write as _;
use std::path::Path;

use gnfalign_core::shape_model::Shape;

use crate::error::{io_err, Error, Result};

pub fn parse_pts(text: &str, path: &Path) -> Result<Shape> {
    let header = |line: usize, detail: &str| Error::PtsHeader {
        path: path.to_path_buf(),
        line,
        detail: detail.to_string(),
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (ln, version) = lines.next().ok_or_else(|| header(1, "empty file"))?;
    match version.split_once(':') {
        Some((key, value)) if key.trim() == "version" && value.trim() == "1" => {}
        _ => return Err(header(ln, "expected `version: 1`")),
    }
    let (ln, count) = lines.next().ok_or_else(|| header(ln + 1, "missing `n_points`"))?;
    let expected: usize = match count.split_once(':') {
        Some((key, value)) if key.trim() == "n_points" => value
            .trim()
            .parse()
            .map_err(|_| header(ln, "n_points is not a non-negative integer"))?,
        _ => return Err(header(ln, "expected `n_points: N`")),
    };
    let (ln, open) = lines.next().ok_or_else(|| header(ln + 1, "missing `{`"))?;
    if open != "{" {
        return Err(header(ln, "expected `{`"));
    }

    let mut points = Vec::with_capacity(expected);
    let mut closed = false;
    for (ln, line) in lines.by_ref() {
        if line == "}" {
            closed = true;
            break;
        }
        let mut coords = [0.0f64; 2];
        let mut tokens = line.split_whitespace();
        for c in coords.iter_mut() {
            let token = tokens.next().unwrap_or("");
            *c = token.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::PtsCoordinate {
                path: path.to_path_buf(),
                line: ln,
                token: token.to_string(),
            })?;
        }
        if let Some(extra) = tokens.next() {
            return Err(Error::PtsCoordinate {
                path: path.to_path_buf(),
                line: ln,
                token: extra.to_string(),
            });
        }
        points.push(coords);
    }
    if points.len() != expected {
        return Err(Error::PtsCount {
            path: path.to_path_buf(),
            expected,
            actual: points.len(),
        });
    }
    if !closed {
        return Err(header(text.lines().count(), "missing closing `}`"));
    }
    Ok(Shape::new(points)?)
}

pub fn format_pts(shape: &Shape) -> String {
    let mut out = format!("version: 1\nn_points: {}\n{{\n", shape.len());
    for p in shape.points() {
        let _ = writeln!(out, "{} {}", p[0], p[1]);
    }
    out.push_str("}\n");
    out
}

pub fn load_pts(path: &Path) -> Result<Shape> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_pts(&text, path)
}

pub fn write_pts(path: &Path, shape: &Shape) -> Result<()> {
    std::fs::write(path, format_pts(shape)).map_err(io_err(path))
}
