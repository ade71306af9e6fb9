//! Grayscale PNG export for tensors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

/// Min-max normalizes a single-channel tensor to 8-bit values; a constant
/// map becomes all black.
pub fn normalize_to_u8(t: &Tensor) -> Vec<u8> {
    let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; t.data().len()];
    }
    t.data()
        .iter()
        .map(|&v| (((v - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Clips to [0, 1] and scales to 8-bit values.
pub fn unit_to_u8(t: &Tensor) -> Vec<u8> {
    t.data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

fn write_png(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Archive(format!("{}: png header: {}", path.display(), e)))?;
    writer
        .write_image_data(pixels)
        .map_err(|e| Error::Archive(format!("{}: png data: {}", path.display(), e)))?;
    Ok(())
}

fn expect_single_channel(op: &'static str, t: &Tensor) -> Result<()> {
    if t.channels() != 1 {
        return Err(Error::contract(
            op,
            format!("expected single channel, got {}", t.channels()),
        ));
    }
    Ok(())
}

/// Writes a min-max normalized grayscale PNG (for feature visualization).
pub fn write_gray_png_normalized(path: &Path, t: &Tensor) -> Result<()> {
    expect_single_channel("write_gray_png_normalized", t)?;
    write_png(path, t.width(), t.height(), &normalize_to_u8(t))
}

/// Writes a [0, 1]-clipped grayscale PNG (for image output).
pub fn write_gray_png_unit(path: &Path, t: &Tensor) -> Result<()> {
    expect_single_channel("write_gray_png_unit", t)?;
    write_png(path, t.width(), t.height(), &unit_to_u8(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_map_normalizes_to_black() {
        let t = Tensor::from_fn(4, 4, 1, |_, _, _| 0.37);
        assert!(normalize_to_u8(&t).iter().all(|&v| v == 0));
    }

    #[test]
    fn normalization_spans_full_range() {
        let t = Tensor::from_fn(2, 2, 1, |y, x, _| (y * 2 + x) as f64);
        let px = normalize_to_u8(&t);
        assert_eq!(px[0], 0);
        assert_eq!(px[3], 255);
    }

    #[test]
    fn unit_clipping() {
        let t = Tensor::from_vec(1, 3, 1, vec![-0.5, 0.5, 1.5]).unwrap();
        assert_eq!(unit_to_u8(&t), vec![0, 128, 255]);
    }

    #[test]
    fn png_roundtrip_dimensions() {
        let dir = std::env::temp_dir().join("lzsc_png_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.png");
        let t = Tensor::from_fn(5, 7, 1, |y, x, _| ((y + x) % 2) as f64);
        write_gray_png_unit(&path, &t).unwrap();
        let decoder = png::Decoder::new(std::fs::File::open(&path).unwrap());
        let reader = decoder.read_info().unwrap();
        assert_eq!(reader.info().width, 7);
        assert_eq!(reader.info().height, 5);
        let _ = std::fs::remove_dir_all(&dir);
    }
}
