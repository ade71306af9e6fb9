//! Image loading and saving: 8-bit PNG and PGM, grayscale and RGB, with
//! BT.601 luma conversion and YCbCr helpers for pseudo-color fusion.

use crate::errors::{CliError, CliResult};
use lzsc_core::tensor::Tensor;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

/// Decoded image: grayscale plane plus the color planes when present.
pub struct LoadedImage {
    /// Luma in [0, 1], H x W x 1.
    pub gray: Tensor,
    /// RGB in [0, 1], H x W x 3, when the file carried color.
    pub rgb: Option<Tensor>,
}

fn err_at(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::user(format!("{}: {}", path.display(), msg))
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

pub fn load_image(path: &Path) -> CliResult<LoadedImage> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => load_png(path),
        "pgm" => load_pgm(path),
        other => Err(err_at(path, format!("unsupported image format '{}'", other))),
    }
}

fn load_png(path: &Path) -> CliResult<LoadedImage> {
    let file = File::open(path).map_err(|e| err_at(path, e))?;
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| err_at(path, e))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| err_at(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let px = |v: u8| v as f64 / 255.0;
    match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => {
            let gray = Tensor::from_fn(h, w, 1, |y, x, _| px(buf[(y * w + x) * channels]));
            Ok(LoadedImage { gray, rgb: None })
        }
        png::ColorType::Rgb | png::ColorType::Rgba => {
            let rgb = Tensor::from_fn(h, w, 3, |y, x, c| px(buf[(y * w + x) * channels + c]));
            let gray = Tensor::from_fn(h, w, 1, |y, x, _| {
                luma(rgb.get(y, x, 0), rgb.get(y, x, 1), rgb.get(y, x, 2))
            });
            Ok(LoadedImage {
                gray,
                rgb: Some(rgb),
            })
        }
        other => Err(err_at(path, format!("unsupported png color type {:?}", other))),
    }
}

fn pgm_token(path: &Path, bytes: &[u8], pos: &mut usize) -> CliResult<String> {
    // Skip whitespace and comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(err_at(path, "truncated pgm header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn load_pgm(path: &Path) -> CliResult<LoadedImage> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| err_at(path, e))?;
    let mut pos = 0usize;
    let magic = pgm_token(path, &bytes, &mut pos)?;
    if magic != "P5" && magic != "P2" {
        return Err(err_at(path, format!("not a pgm file (magic {})", magic)));
    }
    let w: usize = pgm_token(path, &bytes, &mut pos)?
        .parse()
        .map_err(|_| err_at(path, "bad width"))?;
    let h: usize = pgm_token(path, &bytes, &mut pos)?
        .parse()
        .map_err(|_| err_at(path, "bad height"))?;
    let maxval: usize = pgm_token(path, &bytes, &mut pos)?
        .parse()
        .map_err(|_| err_at(path, "bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(err_at(path, format!("unsupported pgm maxval {}", maxval)));
    }
    let data = if magic == "P5" {
        pos += 1; // single whitespace after maxval
        if bytes.len() < pos + w * h {
            return Err(err_at(path, "truncated pgm payload"));
        }
        bytes[pos..pos + w * h]
            .iter()
            .map(|&v| v as f64 / maxval as f64)
            .collect::<Vec<_>>()
    } else {
        let mut vals = Vec::with_capacity(w * h);
        for _ in 0..w * h {
            let v: usize = pgm_token(path, &bytes, &mut pos)?
                .parse()
                .map_err(|_| err_at(path, "bad pixel"))?;
            vals.push(v as f64 / maxval as f64);
        }
        vals
    };
    let gray = Tensor::from_vec(h, w, 1, data).map_err(CliError::from)?;
    Ok(LoadedImage { gray, rgb: None })
}

/// Saves a [0, 1] single-channel tensor as PNG or PGM depending on the
/// extension.
pub fn save_gray(path: &Path, t: &Tensor) -> CliResult<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => {
            let f = File::create(path).map_err(|e| err_at(path, e))?;
            let mut out = BufWriter::new(f);
            write!(out, "P5\n{} {}\n255\n", t.width(), t.height()).map_err(|e| err_at(path, e))?;
            let px: Vec<u8> = t
                .data()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect();
            out.write_all(&px).map_err(|e| err_at(path, e))?;
            Ok(())
        }
        _ => lzsc_core::imageio::write_gray_png_unit(path, t).map_err(CliError::from),
    }
}

/// Saves a [0, 1] H x W x 3 tensor as an RGB PNG.
pub fn save_rgb(path: &Path, t: &Tensor) -> CliResult<()> {
    if t.channels() != 3 {
        return Err(CliError::user("save_rgb expects three channels"));
    }
    let file = File::create(path).map_err(|e| err_at(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), t.width() as u32, t.height() as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| err_at(path, e))?;
    let px: Vec<u8> = t
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    writer.write_image_data(&px).map_err(|e| err_at(path, e))?;
    Ok(())
}

/// RGB -> (Y, Cb, Cr), all in [0, 1] with chroma centered at 0.5 (BT.601
/// full range).
pub fn rgb_to_ycbcr(rgb: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (h, w, _) = rgb.shape();
    let mut y = Tensor::zeros(h, w, 1);
    let mut cb = Tensor::zeros(h, w, 1);
    let mut cr = Tensor::zeros(h, w, 1);
    for yy in 0..h {
        for xx in 0..w {
            let (r, g, b) = (rgb.get(yy, xx, 0), rgb.get(yy, xx, 1), rgb.get(yy, xx, 2));
            let l = luma(r, g, b);
            y.set(yy, xx, 0, l);
            cb.set(yy, xx, 0, (b - l) * 0.564 + 0.5);
            cr.set(yy, xx, 0, (r - l) * 0.713 + 0.5);
        }
    }
    (y, cb, cr)
}

pub fn ycbcr_to_rgb(y: &Tensor, cb: &Tensor, cr: &Tensor) -> Tensor {
    let (h, w, _) = y.shape();
    Tensor::from_fn(h, w, 3, |yy, xx, c| {
        let l = y.get(yy, xx, 0);
        let pb = cb.get(yy, xx, 0) - 0.5;
        let pr = cr.get(yy, xx, 0) - 0.5;
        let v = match c {
            0 => l + 1.402 * pr,
            1 => l - 0.344136 * pb - 0.714136 * pr,
            _ => l + 1.772 * pb,
        };
        v.clamp(0.0, 1.0)
    })
}

/// Population variance of a chroma plane around its neutral value; used
/// to decide which source carries color.
pub fn chroma_variance(cb: &Tensor, cr: &Tensor) -> f64 {
    let n = cb.len() as f64;
    let v: f64 = cb
        .data()
        .iter()
        .zip(cr.data())
        .map(|(b, r)| (b - 0.5) * (b - 0.5) + (r - 0.5) * (r - 0.5))
        .sum();
    v / n
}
