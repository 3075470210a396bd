//! Image and map files: PHT1 tensors, binary/ASCII PGM (8 or 16 bit) and PNG.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{bail, Error, Result};
use crate::tensor::{read_tensor, write_tensor};
use crate::tensor::Tensor;

/// Loads an image or map as `[1, C, H, W]`. Integer formats are scaled to
/// `[0, 1]` by their maximum value.
pub fn read_image(path: &Path) -> Result<Tensor<f32>> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let t = match ext.as_deref() {
        Some("pht") | Some("pht1") => read_tensor(path)?.cast::<f32>(),
        Some("pgm") => read_pgm(path)?,
        Some("png") => read_png(path)?,
        _ => bail!(Input, "{}: unsupported image format", path.display()),
    };
    if t.shape().n() != 1 {
        bail!(Input, "{}: expected a single image, found shape {}", path.display(), t.shape());
    }
    Ok(t)
}

pub fn read_pgm(path: &Path) -> Result<Tensor<f32>> {
    parse_pgm(&fs::read(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<Tensor<f32>, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
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
            return Err("truncated PGM header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| s.parse::<usize>().map_err(|_| format!("bad PGM header field {s:?}"));
    let w = num(token()?)?;
    let h = num(token()?)?;
    let maxval = num(token()?)?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(format!("invalid PGM header {w}x{h} max {maxval}"));
    }
    let scale = 1.0 / maxval as f32;
    let data: Vec<f32> = match magic.as_str() {
        "P5" => {
            let body = &bytes[pos + 1..];
            let width = if maxval < 256 { 1 } else { 2 };
            if body.len() < w * h * width {
                return Err("truncated PGM raster".into());
            }
            if width == 1 {
                body[..w * h].iter().map(|&v| v as f32 * scale).collect()
            } else {
                body[..2 * w * h].chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 * scale).collect()
            }
        }
        "P2" => {
            let rest = String::from_utf8_lossy(&bytes[pos..]);
            let vals: Vec<f32> = rest
                .split_ascii_whitespace()
                .take(w * h)
                .map(|s| s.parse::<u32>().map(|v| v as f32 * scale).map_err(|_| format!("bad PGM value {s:?}")))
                .collect::<std::result::Result<_, _>>()?;
            if vals.len() != w * h {
                return Err("truncated PGM raster".into());
            }
            vals
        }
        m => return Err(format!("not a PGM file (magic {m:?})")),
    };
    Ok(Tensor::from_vec([1, 1, h, w], data).expect("PGM size checked"))
}

/// Writes a single-channel image with values in `[0, 1]` as binary PGM.
pub fn write_pgm(path: &Path, image: &Tensor<f32>, sixteen_bit: bool) -> Result<()> {
    let [n, c, h, w] = image.shape().0;
    if n != 1 || c != 1 {
        bail!(Input, "PGM holds one grayscale plane, got {}", image.shape());
    }
    let maxval: u32 = if sixteen_bit { 65535 } else { 255 };
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{w} {h}\n{maxval}\n")?;
    for &v in image.data() {
        let q = (v.clamp(0.0, 1.0) * maxval as f32).round() as u32;
        if sixteen_bit {
            out.write_all(&(q as u16).to_be_bytes())?;
        } else {
            out.write_all(&[q as u8])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_png(path: &Path) -> Result<Tensor<f32>> {
    let fail = |e: png::DecodingError| Error::Format(format!("{}: {e}", path.display()));
    let mut decoder = png::Decoder::new(fs::File::open(path)?);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(fail)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(fail)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let (stored, kept) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => bail!(Format, "{}: unsupported PNG color type {other:?}", path.display()),
    };
    let sixteen = info.bit_depth == png::BitDepth::Sixteen;
    let sample = |i: usize| -> f32 {
        if sixteen {
            u16::from_be_bytes([buf[2 * i], buf[2 * i + 1]]) as f32 / 65535.0
        } else {
            buf[i] as f32 / 255.0
        }
    };
    Ok(Tensor::from_fn([1, kept, h, w], |[_, c, y, x]| sample((y * w + x) * stored + c)))
}

/// Writes a map with values in `[0, 1]` as an 8-bit grayscale PNG.
pub fn write_png_map(path: &Path, map: &Tensor<f32>) -> Result<()> {
    let [n, c, h, w] = map.shape().0;
    if n != 1 || c != 1 {
        bail!(Input, "PNG map must be one grayscale plane, got {}", map.shape());
    }
    let fail = |e: png::EncodingError| Error::Format(format!("{}: {e}", path.display()));
    let mut encoder = png::Encoder::new(BufWriter::new(fs::File::create(path)?), w as u32, h as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(fail)?;
    let bytes: Vec<u8> = map.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    writer.write_image_data(&bytes).map_err(fail)?;
    Ok(())
}

/// Writes by extension: `.png`, `.pgm`, otherwise PHT1.
pub fn write_image(path: &Path, t: &Tensor<f32>) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => write_png_map(path, t),
        Some("pgm") => write_pgm(path, t, false),
        _ => write_tensor(path, t),
    }
}
