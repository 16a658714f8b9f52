//! Binary portable graymap (P5, maxval 255).

use std::io::{self, Write};
use std::path::Path;

use gnfalign_core::features::GrayImage;

use crate::error::{io_err, Error, Result};

/// Reads the next header token, skipping whitespace and `#` comments.
fn token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() && data[*pos] != b'#' {
        *pos += 1;
    }
    (start < *pos).then(|| &data[start..*pos])
}

pub fn decode_pgm(data: &[u8], path: &Path) -> Result<GrayImage> {
    let unsupported = |detail: String| Error::UnsupportedImage {
        path: path.to_path_buf(),
        detail,
    };
    let mut pos = 0;
    match token(data, &mut pos) {
        Some(b"P5") => {}
        Some(m) => return Err(unsupported(format!("magic {:?}", String::from_utf8_lossy(m)))),
        None => return Err(unsupported("empty file".into())),
    }
    let mut number = |what: &str| -> Result<usize> {
        token(data, &mut pos)
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| unsupported(format!("missing or invalid {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(unsupported(format!("maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let expected = width * height;
    let available = data.len().saturating_sub(pos);
    if available < expected {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!("truncated raster: expected {expected} bytes, found {available}"),
            ),
        });
    }
    Ok(GrayImage::new(width, height, data[pos..pos + expected].to_vec())?)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let data = std::fs::read(path).map_err(io_err(path))?;
    decode_pgm(&data, path)
}

pub fn write_gray(path: &Path, image: &GrayImage) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode_pgm(image)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_two_by_two() {
        let mut data = b"P5\n# comment\n2 2\n255\n".to_vec();
        data.extend_from_slice(&[0, 85, 170, 255]);
        let img = decode_pgm(&data, Path::new("x.pgm")).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.data(), &[0, 85, 170, 255]);
        assert_eq!(encode_pgm(&img)[..], b"P5\n2 2\n255\n\x00\x55\xaa\xff"[..]);
    }

    #[test]
    fn rejects_p6() {
        let data = b"P6\n2 2\n255\n000000000000".to_vec();
        let err = decode_pgm(&data, Path::new("x.ppm")).unwrap_err();
        assert!(matches!(err, Error::UnsupportedImage { .. }));
        assert!(err.to_string().contains("P5"));
    }

    #[test]
    fn truncated_payload_is_io_error() {
        let data = b"P5\n4 4\n255\n\x01\x02".to_vec();
        match decode_pgm(&data, Path::new("x.pgm")) {
            Err(Error::Io { source, .. }) => assert_eq!(source.kind(), io::ErrorKind::UnexpectedEof),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_other_maxval() {
        let data = b"P5\n1 1\n65535\n\x00\x00".to_vec();
        assert!(matches!(decode_pgm(&data, Path::new("x")), Err(Error::UnsupportedImage { .. })));
    }
}
