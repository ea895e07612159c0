//! Binary PPM (P6, maxval 255) decoding and encoding.
//!
//! PPM is the one mandatory image format: bit-exact, dependency-free, and
//! easy to produce from anything else (`convert in.png -depth 8 out.ppm`).

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reads header tokens separated by whitespace, with `#` comments running to
/// end of line. Returns the token and the index just past it.
fn next_token(bytes: &[u8], mut pos: usize) -> Result<(String, usize)> {
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
        return Err(Error::Format("unexpected end of PPM header".into()));
    }
    Ok((String::from_utf8_lossy(&bytes[start..pos]).into_owned(), pos))
}

/// Decodes a P6 PPM into an `[H, W, 3]` tensor with values in `[0, 255]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 2 {
        return Err(Error::Format("file too short for a PPM header".into()));
    }
    let magic = &bytes[..2];
    if magic != b"P6" {
        return Err(Error::Format(format!(
            "unsupported magic {:?}: only binary P6 is supported",
            String::from_utf8_lossy(magic)
        )));
    }
    let (w_tok, pos) = next_token(bytes, 2)?;
    let (h_tok, pos) = next_token(bytes, pos)?;
    let (max_tok, pos) = next_token(bytes, pos)?;
    let w: usize = w_tok
        .parse()
        .map_err(|_| Error::Format(format!("bad PPM width {w_tok:?}")))?;
    let h: usize = h_tok
        .parse()
        .map_err(|_| Error::Format(format!("bad PPM height {h_tok:?}")))?;
    let maxval: usize = max_tok
        .parse()
        .map_err(|_| Error::Format(format!("bad PPM maxval {max_tok:?}")))?;
    if w == 0 || h == 0 {
        return Err(Error::Format(format!("degenerate PPM dimensions {w}x{h}")));
    }
    if maxval != 255 {
        return Err(Error::Format(format!(
            "unsupported PPM maxval {maxval}: only 255 is supported"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data_start = pos + 1;
    let need = w * h * 3;
    if bytes.len() < data_start + need {
        return Err(Error::Format(format!(
            "truncated PPM raster: need {need} bytes, have {}",
            bytes.len().saturating_sub(data_start)
        )));
    }
    let data = bytes[data_start..data_start + need]
        .iter()
        .map(|&b| b as f32)
        .collect();
    Tensor::new(&[h, w, 3], data)
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    decode_ppm(&bytes)
}

/// Encodes an `[H, W, 3]` tensor with values in `[0, 255]` as P6. Values are
/// rounded to the nearest integer.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let dims = image.dims();
    if dims.len() != 3 || dims[2] != 3 {
        return Err(Error::Shape(format!(
            "encode_ppm expects [H, W, 3], got {}",
            image.shape()
        )));
    }
    if image.data().iter().any(|&v| !(0.0..=255.0).contains(&v)) {
        return Err(Error::Range("pixel values outside [0, 255]".into()));
    }
    let (h, w) = (dims[0], dims[1]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| v.round() as u8));
    Ok(out)
}

pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    std::fs::write(path, encode_ppm(image)?)?;
    Ok(())
}
