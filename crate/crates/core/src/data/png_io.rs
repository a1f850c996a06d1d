//! 8-bit PNG masks and normal visualizations.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normals::NormalMap;
use crate::polar::Mask;

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Png {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, pixels: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(pixels).map_err(|e| png_err(path, e))?;
    writer.finish().map_err(|e| png_err(path, e))
}

/// Writes a mask as 8-bit grayscale: 0 background, 255 foreground.
pub fn write_mask_png(mask: &Mask, path: &Path) -> Result<()> {
    let pixels: Vec<u8> = mask.bits().iter().map(|b| if *b { 255 } else { 0 }).collect();
    write_png(path, mask.width(), mask.height(), png::ColorType::Grayscale, &pixels)
}

/// Reads a mask; any pixel at 128 or above is foreground. Color images use
/// their first channel.
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    let samples = info.color_type.samples();
    let (w, h) = (info.width as usize, info.height as usize);
    let bits = (0..h)
        .flat_map(|row| {
            let line = &buf[row * info.line_size..];
            (0..w).map(move |col| line[col * samples] >= 128)
        })
        .collect();
    Mask::new(h, w, bits)
}

/// Encodes normals as RGB `round((n + 1) / 2 * 255)`; off-mask pixels are black.
pub fn normals_to_rgb(normals: &NormalMap, mask: Option<&Mask>) -> Vec<u8> {
    let mut out = Vec::with_capacity(normals.data().len() * 3);
    for (i, n) in normals.data().iter().enumerate() {
        if mask.is_some_and(|m| !m.bits()[i]) {
            out.extend_from_slice(&[0, 0, 0]);
            continue;
        }
        for c in n {
            out.push(((c.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0).round() as u8);
        }
    }
    out
}

pub fn write_normals_png(normals: &NormalMap, mask: Option<&Mask>, path: &Path) -> Result<()> {
    let pixels = normals_to_rgb(normals, mask);
    write_png(path, normals.width(), normals.height(), png::ColorType::Rgb, &pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = Mask::new(2, 3, vec![true, false, false, true, true, false]).unwrap();
        write_mask_png(&mask, &path).unwrap();
        assert_eq!(read_mask_png(&path).unwrap(), mask);
    }

    #[test]
    fn rgb_encoding() {
        let n = NormalMap::new(1, 2, vec![[0.0, 0.0, 1.0], [-1.0, 1.0, 0.0]]).unwrap();
        assert_eq!(normals_to_rgb(&n, None), vec![128, 128, 255, 0, 255, 128]);
        let m = Mask::new(1, 2, vec![true, false]).unwrap();
        assert_eq!(&normals_to_rgb(&n, Some(&m))[3..], &[0, 0, 0]);
    }
}
