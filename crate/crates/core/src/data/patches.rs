//! Square patch tiling of samples.

use std::sync::Arc;

use crate::data::sample::SampleRecord;
use crate::error::{Error, Result};
use crate::normals::NormalMap;
use crate::polar::{Mask, PolarizedStack};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchOptions {
    pub side: usize,
    pub stride: usize,
    /// Patches with a smaller foreground fraction are dropped.
    pub min_foreground: f64,
}

impl Default for PatchOptions {
    fn default() -> Self {
        PatchOptions {
            side: 64,
            stride: 64,
            min_foreground: 0.05,
        }
    }
}

/// A `side x side` window into a shared sample.
#[derive(Debug, Clone)]
pub struct Patch {
    pub sample: Arc<SampleRecord>,
    pub row: usize,
    pub col: usize,
    pub side: usize,
}

impl Patch {
    pub fn object_id(&self) -> &str {
        &self.sample.object_id
    }

    pub fn foreground_count(&self) -> usize {
        let mask = &self.sample.mask;
        (self.row..self.row + self.side)
            .map(|r| (self.col..self.col + self.side).filter(|&c| mask.get(r, c)).count())
            .sum()
    }

    /// Copies the window out as standalone stack, normals and mask.
    pub fn materialize(&self) -> Result<(PolarizedStack, NormalMap, Mask)> {
        let s = &self.sample;
        let k = s.stack.channels();
        let mut stack = Vec::with_capacity(self.side * self.side * k);
        let mut normals = Vec::with_capacity(self.side * self.side);
        let mut bits = Vec::with_capacity(self.side * self.side);
        for r in self.row..self.row + self.side {
            for c in self.col..self.col + self.side {
                stack.extend_from_slice(s.stack.pixel(r, c));
                normals.push(s.normals.get(r, c));
                bits.push(s.mask.get(r, c));
            }
        }
        Ok((
            PolarizedStack::new(self.side, self.side, s.stack.angles().to_vec(), stack)?,
            NormalMap::new(self.side, self.side, normals)?,
            Mask::new(self.side, self.side, bits)?,
        ))
    }
}

/// Tiles `sample` on a `stride` grid, dropping partial windows at the edges
/// and windows below the foreground floor. Order is raster scan.
pub fn extract_patches(sample: &Arc<SampleRecord>, options: &PatchOptions) -> Result<Vec<Patch>> {
    let (h, w) = (sample.height(), sample.width());
    if options.side == 0 || options.stride == 0 {
        return Err(Error::InvalidInput("patch side and stride must be positive".into()));
    }
    if options.side > h || options.side > w {
        return Err(Error::SideTooLarge {
            side: options.side,
            height: h,
            width: w,
        });
    }
    let area = (options.side * options.side) as f64;
    let mut out = Vec::new();
    for row in (0..=h - options.side).step_by(options.stride) {
        for col in (0..=w - options.side).step_by(options.stride) {
            let patch = Patch {
                sample: Arc::clone(sample),
                row,
                col,
                side: options.side,
            };
            if patch.foreground_count() as f64 / area >= options.min_foreground {
                out.push(patch);
            }
        }
    }
    Ok(out)
}
