//! Atomic file writes and 8-bit PPM images.

use std::fs;
use std::io;
use std::path::Path;

use crate::tensor::Tensor;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Encodes a `[3, H, W]` tensor with values in `[0, 1]` as binary PPM.
pub fn ppm_bytes(image: &Tensor) -> io::Result<Vec<u8>> {
    let &[3, h, w] = image.shape() else {
        return Err(invalid(format!("expected a [3, H, W] image, got {:?}", image.shape())));
    };
    let mut buf = format!("P6\n{w} {h}\n255\n").into_bytes();
    let d = image.data();
    for i in 0..h * w {
        for c in 0..3 {
            buf.push((d[c * h * w + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(buf)
}

pub fn write_ppm(path: &Path, image: &Tensor) -> io::Result<()> {
    write_atomic(path, &ppm_bytes(image)?)
}

/// Decodes an 8-bit binary PPM into a `[3, H, W]` tensor scaled to `[0, 1]`.
pub fn parse_ppm(bytes: &[u8]) -> io::Result<Tensor> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(invalid("truncated PPM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| invalid("bad PPM header"))?);
    }
    if fields[0] != "P6" {
        return Err(invalid("not a binary PPM (P6) file"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| invalid(format!("bad PPM field {s:?}")));
    let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max != 255 {
        return Err(invalid(format!("only 8-bit PPM is supported, maxval {max}")));
    }
    let payload = &bytes[pos + 1..];
    if w == 0 || h == 0 || payload.len() != 3 * w * h {
        return Err(invalid("PPM payload does not match its header"));
    }
    let mut data = vec![0.0; 3 * w * h];
    for (i, px) in payload.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = px[c] as f64 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], data).map_err(|e| invalid(e.to_string()))
}

pub fn read_ppm(path: &Path) -> io::Result<Tensor> {
    parse_ppm(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let levels: Vec<f64> = (0..18).map(|i| (i * 15) as f64 / 255.0).collect();
        let img = Tensor::new(vec![3, 2, 3], levels).unwrap();
        let bytes = ppm_bytes(&img).unwrap();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        let back = parse_ppm(&bytes).unwrap();
        assert!(back.max_abs_diff(&img) < 1e-12);
        assert!(parse_ppm(b"P5\n1 1\n255\n\0").is_err());
        assert!(parse_ppm(&bytes[..bytes.len() - 1]).is_err());
    }
}
