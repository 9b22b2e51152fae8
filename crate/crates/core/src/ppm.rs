//! Binary PPM (P6) image I/O. Values are scaled by 255 with round-half-up
//! on write and divided by 255 on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{MopeError, Result};
use crate::tensor::{Shape, Tensor};

/// Write a (1, 3, h, w) tensor in [0, 1] as a P6 file.
pub fn write_ppm(image: &Tensor, path: &Path) -> Result<()> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(MopeError::Shape(format!(
            "write_ppm: expected a (1, 3, h, w) tensor, got {s}"
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P6\n{} {}\n255\n", s.w, s.h)?;
    let mut row = Vec::with_capacity(s.w * 3);
    for y in 0..s.h {
        row.clear();
        for x in 0..s.w {
            for c in 0..3 {
                let v = image.at(0, c, y, x).clamp(0.0, 1.0);
                row.push((v * 255.0 + 0.5).floor() as u8);
            }
        }
        out.write_all(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a P6 file into a (1, 3, h, w) tensor with values in [0, 1].
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and '#' comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(MopeError::Parse("PPM header ended early".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token(&bytes)?;
    if magic != "P6" {
        return Err(MopeError::Parse(format!(
            "not a binary PPM (magic {magic:?}, expected P6)"
        )));
    }
    let w: usize = token(&bytes)?
        .parse()
        .map_err(|_| MopeError::Parse("bad PPM width".into()))?;
    let h: usize = token(&bytes)?
        .parse()
        .map_err(|_| MopeError::Parse("bad PPM height".into()))?;
    let maxval: usize = token(&bytes)?
        .parse()
        .map_err(|_| MopeError::Parse("bad PPM maxval".into()))?;
    if maxval != 255 {
        return Err(MopeError::Parse(format!(
            "unsupported PPM maxval {maxval}, expected 255"
        )));
    }
    // exactly one whitespace byte separates the header from the pixels
    pos += 1;
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(MopeError::Parse(format!(
            "PPM pixel data truncated: need {need} bytes, have {}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let mut image = Tensor::zeros(Shape::new(1, 3, h, w));
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let b = bytes[pos + (y * w + x) * 3 + c];
                *image.at_mut(0, c, y, x) = b as f32 / 255.0;
            }
        }
    }
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantized_roundtrip_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let img = Tensor::from_fn(Shape::new(1, 3, 6, 5), |_, c, y, x| {
            (((c * 89 + y * 31 + x * 7) % 256) as f32) / 255.0
        });
        write_ppm(&img, &path).unwrap();
        let once = read_ppm(&path).unwrap();
        write_ppm(&once, &path).unwrap();
        let twice = read_ppm(&path).unwrap();
        assert_eq!(once, twice);
        // single round trip stays within quantization distance
        for (a, b) in img.data().iter().zip(once.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn rounds_half_up() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.ppm");
        // 0.5/255 scaled: value*255 = 127.5 rounds to 128
        let img = Tensor::filled(Shape::new(1, 3, 1, 1), 127.5 / 255.0);
        write_ppm(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[128, 128, 128]);
    }

    #[test]
    fn rejects_non_p6() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p3.ppm");
        std::fs::write(&path, b"P3\n1 1\n255\n0 0 0\n").unwrap();
        assert!(matches!(read_ppm(&path), Err(MopeError::Parse(_))));
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let mut bytes = b"P6\n# a comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30, 40, 50, 60]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_ppm(&path).unwrap();
        assert_eq!(img.shape(), Shape::new(1, 3, 1, 2));
        assert!((img.at(0, 0, 0, 1) - 40.0 / 255.0).abs() < 1e-6);
    }
}
